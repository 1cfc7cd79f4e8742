#ifndef MARGINFORGE_DATA_HPP_
#define MARGINFORGE_DATA_HPP_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "marginforge/experts.hpp"
#include "marginforge/math.hpp"

namespace marginforge {

/// Planted-concept generator settings. Items sharing a concept are semantic
/// duplicates: the same latent seen through independent noise.
struct SynthConfig {
  std::size_t n_items = 512;
  std::size_t n_concepts = 0;  // 0: singletons plus duplicate pairs
  std::size_t latent_dim = 8;
  std::size_t video_dim = 16;
  std::size_t text_dim = 16;
  std::size_t frames_per_video = 4;
  double noise_video = 0.5;
  double noise_text = 0.5;
  double sse_text_noise = 0.2;
  double duplicate_rate = 0.5;
  double val_fraction = 0.25;
  std::uint64_t seed = 0;

  void validate() const;
  /// Concept count after resolving the automatic setting.
  std::size_t resolved_concepts() const;
};

inline constexpr int kNoConcept = -1;

struct Dataset {
  std::vector<std::string> ids;
  std::vector<int> concepts;   // kNoConcept when unlabeled
  std::vector<Matrix> frames;  // T x D_v per item
  std::vector<Vector> text;    // D_t per item
  StaticEmbeddingTable sse_video;
  StaticEmbeddingTable sse_text;
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;

  std::size_t size() const noexcept { return ids.size(); }
  std::size_t video_dim() const;
  std::size_t text_dim() const;
  bool labeled() const;

  /// Rows are mean-pooled frames, one per item.
  Matrix pooled_video() const;
  Matrix text_matrix() const;

  /// Throws ParseError / DimMismatch / DuplicateId on structural problems.
  void validate() const;

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

Dataset generate(const SynthConfig& cfg);

/// For each item, the other items sharing its concept (dataset order).
std::vector<std::vector<std::string>> ground_truth_equivalents(const Dataset& dataset);

/// Fraction of items that share their concept with at least one other item.
double realized_duplicate_rate(const Dataset& dataset);

// Directory layout: MANIFEST (MANIFEST1 + "<role> <file> <fnv1a64 hex>"),
// items.txt, frames.frm, text.emb, sse_video.emb, sse_text.emb.
void write_dataset(const Dataset& dataset, const std::filesystem::path& dir);
Dataset load_dataset(const std::filesystem::path& dir);

std::string to_hex64(std::uint64_t value);

}  // namespace marginforge

#endif  // MARGINFORGE_DATA_HPP_
