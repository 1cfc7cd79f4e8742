#ifndef MARGINFORGE_EXPERTS_HPP_
#define MARGINFORGE_EXPERTS_HPP_

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "marginforge/math.hpp"

namespace marginforge {

enum class ExpertKind { kDseText, kDseVideo, kSseText, kSseVideo };

std::string_view expert_kind_name(ExpertKind kind);
ExpertKind parse_expert_kind(std::string_view name);

/// B x B single-modal distances 1 - cos, zero diagonal, symmetric.
struct DistanceMatrix {
  Matrix values;
  ExpertKind kind = ExpertKind::kDseText;

  std::size_t batch_size() const noexcept { return values.rows(); }
  double operator()(std::size_t i, std::size_t j) const { return values(i, j); }
};

/// Precomputed per-item embeddings from an external (frozen) encoder.
class StaticEmbeddingTable {
 public:
  StaticEmbeddingTable() = default;
  explicit StaticEmbeddingTable(std::string source_label);

  /// Appends an entry; rejects duplicates, dim changes and zero-norm vectors.
  void add(std::string id, Vector embedding);

  std::size_t size() const noexcept { return ids_.size(); }
  std::size_t dim() const noexcept { return dim_; }
  const std::string& source_label() const noexcept { return source_label_; }
  void set_source_label(std::string label) { source_label_ = std::move(label); }

  const std::vector<std::string>& ids() const noexcept { return ids_; }
  const Vector& embedding(std::size_t index) const { return embeddings_.at(index); }
  bool contains(std::string_view id) const;
  /// Throws UnknownId naming the missing id.
  const Vector& at(std::string_view id) const;

  friend bool operator==(const StaticEmbeddingTable& a, const StaticEmbeddingTable& b) {
    return a.ids_ == b.ids_ && a.embeddings_ == b.embeddings_;
  }

 private:
  std::string source_label_;
  std::size_t dim_ = 0;
  std::vector<std::string> ids_;
  std::vector<Vector> embeddings_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Frame-level features per item (T x D each), as stored in FRM1 files.
struct FrameTable {
  std::vector<std::string> ids;
  std::vector<Matrix> frames;

  friend bool operator==(const FrameTable&, const FrameTable&) = default;
};

// Pairwise 1 - cosine over any set of representations.
DistanceMatrix pairwise_cosine_distances(std::span<const Vector> reprs, ExpertKind kind);

DistanceMatrix dse_text_distances(std::span<const Vector> text_reprs);
DistanceMatrix dse_video_distances(std::span<const Vector> video_reprs);
/// Mean-pools each item's frames, then pairwise 1 - cosine.
DistanceMatrix sse_video_distances(std::span<const Matrix> frames_per_item);
DistanceMatrix sse_text_distances(const StaticEmbeddingTable& table,
                                  std::span<const std::string> batch_ids);

// EMB1: "EMB1 <N> <D>" then N lines "<id> <x1> ... <xD>"; '#' lines ignored.
StaticEmbeddingTable load_static_embeddings(const std::filesystem::path& path);
void write_static_embeddings(const std::filesystem::path& path, const StaticEmbeddingTable& table);
StaticEmbeddingTable parse_static_embeddings(std::string_view text, std::string_view origin = "<memory>");
std::string format_static_embeddings(const StaticEmbeddingTable& table);

// FRM1: "FRM1 <N> <T> <D>" then N*T lines "<id> <frame_index> <x1> ... <xD>".
FrameTable load_frames(const std::filesystem::path& path);
void write_frames(const std::filesystem::path& path, const FrameTable& table);
FrameTable parse_frames(std::string_view text, std::string_view origin = "<memory>");
std::string format_frames(const FrameTable& table);

}  // namespace marginforge

#endif  // MARGINFORGE_EXPERTS_HPP_
