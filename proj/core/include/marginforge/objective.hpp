#ifndef MARGINFORGE_OBJECTIVE_HPP_
#define MARGINFORGE_OBJECTIVE_HPP_

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

#include "marginforge/margin.hpp"
#include "marginforge/math.hpp"
#include "marginforge/model.hpp"

namespace marginforge {

/// Entry (i, j) is cos(video_i, text_j). Not symmetric in general.
struct SimilarityMatrix {
  Matrix values;

  std::size_t batch_size() const noexcept { return values.rows(); }
  double operator()(std::size_t i, std::size_t j) const { return values(i, j); }
};

SimilarityMatrix similarity_matrix(std::span<const Vector> video_reprs,
                                   std::span<const Vector> text_reprs);
SimilarityMatrix similarity_matrix(const Matrix& video_rows, const Matrix& text_rows);

/// [s_neg - s_pos + margin]_+
inline double hinge(double s_neg, double s_pos, double margin) {
  const double x = s_neg - s_pos + margin;
  return x > 0.0 ? x : 0.0;
}

enum class Mining { kHardest, kMean };
enum class MiningCriterion { kCombined, kHardOnly };

/// kVideo: negative pair (v_j, t_i), column i of S.
/// kText:  negative pair (v_i, t_j), row i of S.
enum class Direction { kVideo, kText };

std::string_view mining_name(Mining m);
Mining parse_mining(std::string_view name);
std::string_view mining_criterion_name(MiningCriterion c);
MiningCriterion parse_mining_criterion(std::string_view name);

/// Similarity of the negative pair for anchor i and negative j.
inline double negative_similarity(const SimilarityMatrix& s, std::size_t i, std::size_t j,
                                  Direction dir) {
  return dir == Direction::kVideo ? s(j, i) : s(i, j);
}

/// Margin matrices feeding one soft-loss slot (dynamic or static experts).
/// Several matrices in one domain are averaged; a slot with one matrix per
/// domain gives hinge(M_video) + hinge(M_text).
struct ExpertSlot {
  std::vector<MarginMatrix> video;
  std::vector<MarginMatrix> text;

  bool empty() const noexcept { return video.empty() && text.empty(); }
};

struct ObjectiveConfig {
  double alpha = 0.05;
  double lambda = 0.0;
  Mining mining = Mining::kHardest;
  MiningCriterion criterion = MiningCriterion::kCombined;
};

/// Loss totals. hard/dse/sse are the weighted contributions (dse includes
/// lambda, sse includes 1 - lambda) and sum to total.
struct LossBreakdown {
  double total = 0.0;
  double hard_term = 0.0;
  double dse_term = 0.0;
  double sse_term = 0.0;
  double lambda_used = 0.0;
  // Mined negative per anchor; empty under mean mining.
  std::vector<std::size_t> hardest_j_video;
  std::vector<std::size_t> hardest_j_text;
};

/// Frozen mining selection, for evaluating the loss at fixed negatives.
struct MinedIndices {
  std::vector<std::size_t> video;
  std::vector<std::size_t> text;
};

/// Hinge with M_video(i, j) plus hinge with M_text(i, j).
double soft_triplet_loss(const SimilarityMatrix& s, const MarginMatrix& m_video,
                         const MarginMatrix& m_text, std::size_t i, std::size_t j, Direction dir);

LossBreakdown hard_triplet_loss(const SimilarityMatrix& s, double alpha, Mining mining);

LossBreakdown full_loss(const SimilarityMatrix& s, const ExpertSlot& dse, const ExpertSlot& sse,
                        const ObjectiveConfig& cfg);
LossBreakdown full_loss(const SimilarityMatrix& s, const MarginMatrix& m_dse_video,
                        const MarginMatrix& m_dse_text, const MarginMatrix& m_sse_video,
                        const MarginMatrix& m_sse_text, double alpha, double lambda,
                        Mining mining);
/// full_loss with hardest negatives pinned to `fixed` instead of re-mined.
LossBreakdown full_loss_at(const SimilarityMatrix& s, const ExpertSlot& dse,
                           const ExpertSlot& sse, const ObjectiveConfig& cfg,
                           const MinedIndices& fixed);

struct SimilarityGrad {
  LossBreakdown loss;
  Matrix grad;  // dL/dS
};

SimilarityGrad full_loss_similarity_grad(const SimilarityMatrix& s, const ExpertSlot& dse,
                                         const ExpertSlot& sse, const ObjectiveConfig& cfg);

struct RepresentationGrad {
  Matrix video;  // B x d
  Matrix text;   // B x d
};

/// Chains dL/dS through the cosine into both sets of representations.
RepresentationGrad similarity_backward(const Matrix& video_rows, const Matrix& text_rows,
                                       const Matrix& grad_similarity);

struct LossAndGrad {
  LossBreakdown loss;
  ModelGrad grad;
};

/// Exact gradient of full_loss over all encoder parameters. Margins are
/// constants and the mined negatives are fixed selections.
LossAndGrad full_loss_grad(const TwoTowerModel& model, const ForwardState& state,
                           const ExpertSlot& dse, const ExpertSlot& sse,
                           const ObjectiveConfig& cfg);

}  // namespace marginforge

#endif  // MARGINFORGE_OBJECTIVE_HPP_
