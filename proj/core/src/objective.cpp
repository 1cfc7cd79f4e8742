#include "marginforge/objective.hpp"

#include <string>

#include "marginforge/error.hpp"

namespace marginforge {

std::string_view mining_name(Mining m) { return m == Mining::kHardest ? "hardest" : "mean"; }

Mining parse_mining(std::string_view name) {
  if (name == "hardest") return Mining::kHardest;
  if (name == "mean") return Mining::kMean;
  fail(ErrorCode::kInvalidArgument, "unknown mining '" + std::string(name) + "'");
}

std::string_view mining_criterion_name(MiningCriterion c) {
  return c == MiningCriterion::kCombined ? "combined" : "hard_only";
}

MiningCriterion parse_mining_criterion(std::string_view name) {
  if (name == "combined") return MiningCriterion::kCombined;
  if (name == "hard_only") return MiningCriterion::kHardOnly;
  fail(ErrorCode::kInvalidArgument, "unknown mining criterion '" + std::string(name) + "'");
}

SimilarityMatrix similarity_matrix(std::span<const Vector> video_reprs,
                                   std::span<const Vector> text_reprs) {
  if (video_reprs.size() != text_reprs.size()) {
    fail(ErrorCode::kDimMismatch, "video and text batches differ in size");
  }
  const std::size_t n = video_reprs.size();
  SimilarityMatrix s{Matrix(n, n)};
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) s.values(i, j) = cosine_similarity(video_reprs[i], text_reprs[j]);
  return s;
}

SimilarityMatrix similarity_matrix(const Matrix& video_rows, const Matrix& text_rows) {
  if (video_rows.rows() != text_rows.rows()) {
    fail(ErrorCode::kDimMismatch, "video and text batches differ in size");
  }
  const std::size_t n = video_rows.rows();
  SimilarityMatrix s{Matrix(n, n)};
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      s.values(i, j) = cosine_similarity(video_rows.row(i), text_rows.row(j));
  return s;
}

double soft_triplet_loss(const SimilarityMatrix& s, const MarginMatrix& m_video,
                         const MarginMatrix& m_text, std::size_t i, std::size_t j, Direction dir) {
  const std::size_t n = s.batch_size();
  if (i >= n || j >= n || m_video.batch_size() != n || m_text.batch_size() != n) {
    fail(ErrorCode::kIndexOutOfRange, "soft_triplet_loss index (" + std::to_string(i) + ", " +
                                          std::to_string(j) + ") outside batch " +
                                          std::to_string(n));
  }
  if (i == j) fail(ErrorCode::kInvalidArgument, "soft_triplet_loss needs i != j");
  const double neg = negative_similarity(s, i, j, dir);
  const double pos = s(i, i);
  return hinge(neg, pos, m_video(i, j)) + hinge(neg, pos, m_text(i, j));
}

namespace {

struct TermParts {
  double hard = 0.0;
  double dse = 0.0;  // weighted
  double sse = 0.0;  // weighted

  double total() const { return hard + dse + sse; }
};

double domain_mean(const std::vector<MarginMatrix>& mats, double neg, double pos, std::size_t i,
                   std::size_t j) {
  double sum = 0.0;
  for (const auto& m : mats) sum += hinge(neg, pos, m(i, j));
  return sum / static_cast<double>(mats.size());
}

std::size_t domain_count(const ExpertSlot& slot) {
  return (slot.video.empty() ? 0 : 1) + (slot.text.empty() ? 0 : 1);
}

// Unweighted soft term of one slot, scaled so two enabled domains give the
// plain sum and a single enabled domain counts twice.
double slot_term(const ExpertSlot& slot, double neg, double pos, std::size_t i, std::size_t j) {
  const std::size_t domains = domain_count(slot);
  if (domains == 0) return 0.0;
  double sum = 0.0;
  if (!slot.video.empty()) sum += domain_mean(slot.video, neg, pos, i, j);
  if (!slot.text.empty()) sum += domain_mean(slot.text, neg, pos, i, j);
  return sum * 2.0 / static_cast<double>(domains);
}

// d(slot_term)/d(neg); d/d(pos) is its negation.
double slot_grad(const ExpertSlot& slot, double neg, double pos, std::size_t i, std::size_t j) {
  const std::size_t domains = domain_count(slot);
  if (domains == 0) return 0.0;
  const double scale = 2.0 / static_cast<double>(domains);
  double g = 0.0;
  auto add = [&](const std::vector<MarginMatrix>& mats) {
    if (mats.empty()) return;
    const double w = scale / static_cast<double>(mats.size());
    for (const auto& m : mats)
      if (neg - pos + m(i, j) > 0.0) g += w;
  };
  add(slot.video);
  add(slot.text);
  return g;
}

class Objective {
 public:
  Objective(const SimilarityMatrix& s, const ExpertSlot& dse, const ExpertSlot& sse,
            const ObjectiveConfig& cfg)
      : s_(s), dse_(dse), sse_(sse), cfg_(cfg) {
    const std::size_t n = s.batch_size();
    if (s.values.cols() != n) fail(ErrorCode::kNonSquare, "similarity matrix must be square");
    if (n < 2) fail(ErrorCode::kInvalidArgument, "triplet loss needs B >= 2");
    if (!(cfg.lambda >= 0.0 && cfg.lambda <= 1.0)) {
      fail(ErrorCode::kLambdaOutOfRange, "lambda " + std::to_string(cfg.lambda) + " not in [0, 1]");
    }
    for (const ExpertSlot* slot : {&dse, &sse}) {
      for (const auto* mats : {&slot->video, &slot->text}) {
        for (const auto& m : *mats) {
          if (m.batch_size() != n || m.values.cols() != n) {
            fail(ErrorCode::kShapeMismatch, "margin matrix batch size differs from similarity");
          }
        }
      }
    }
  }

  TermParts term(std::size_t i, std::size_t j, Direction dir) const {
    const double neg = negative_similarity(s_, i, j, dir);
    const double pos = s_(i, i);
    TermParts t;
    t.hard = hinge(neg, pos, cfg_.alpha);
    t.dse = cfg_.lambda * slot_term(dse_, neg, pos, i, j);
    t.sse = (1.0 - cfg_.lambda) * slot_term(sse_, neg, pos, i, j);
    return t;
  }

  // Smallest j wins ties.
  std::size_t mine(std::size_t i, Direction dir) const {
    const std::size_t n = s_.batch_size();
    std::size_t best = i == 0 ? 1 : 0;
    double best_score = score(i, best, dir);
    for (std::size_t j = best + 1; j < n; ++j) {
      if (j == i) continue;
      const double v = score(i, j, dir);
      if (v > best_score) {
        best_score = v;
        best = j;
      }
    }
    return best;
  }

  // Adds weight * d(term)/dS into grad.
  void accumulate(std::size_t i, std::size_t j, Direction dir, double weight, Matrix& grad) const {
    const double neg = negative_similarity(s_, i, j, dir);
    const double pos = s_(i, i);
    double g = neg - pos + cfg_.alpha > 0.0 ? 1.0 : 0.0;
    g += cfg_.lambda * slot_grad(dse_, neg, pos, i, j);
    g += (1.0 - cfg_.lambda) * slot_grad(sse_, neg, pos, i, j);
    if (g == 0.0) return;
    if (dir == Direction::kVideo) {
      grad(j, i) += weight * g;
    } else {
      grad(i, j) += weight * g;
    }
    grad(i, i) -= weight * g;
  }

  // Evaluates the loss; when `grad` is given also fills dL/dS.
  LossBreakdown run(const MinedIndices* fixed, Matrix* grad) const {
    const std::size_t n = s_.batch_size();
    const double inv_b = 1.0 / static_cast<double>(n);
    LossBreakdown out;
    out.lambda_used = cfg_.lambda;
    if (fixed != nullptr && (fixed->video.size() != n || fixed->text.size() != n)) {
      fail(ErrorCode::kShapeMismatch, "fixed mining selection does not cover the batch");
    }
    if (cfg_.mining == Mining::kHardest || fixed != nullptr) {
      out.hardest_j_video.resize(n);
      out.hardest_j_text.resize(n);
    }
    for (std::size_t i = 0; i < n; ++i) {
      for (Direction dir : {Direction::kVideo, Direction::kText}) {
        TermParts acc;
        if (cfg_.mining == Mining::kHardest || fixed != nullptr) {
          std::size_t j = 0;
          if (fixed != nullptr) {
            j = dir == Direction::kVideo ? fixed->video[i] : fixed->text[i];
            if (j >= n || j == i) {
              fail(ErrorCode::kIndexOutOfRange, "fixed negative " + std::to_string(j) +
                                                    " invalid for anchor " + std::to_string(i));
            }
          } else {
            j = mine(i, dir);
          }
          (dir == Direction::kVideo ? out.hardest_j_video : out.hardest_j_text)[i] = j;
          acc = term(i, j, dir);
          if (grad != nullptr) accumulate(i, j, dir, inv_b, *grad);
        } else {
          const double inv_neg = 1.0 / static_cast<double>(n - 1);
          for (std::size_t j = 0; j < n; ++j) {
            if (j == i) continue;
            const TermParts t = term(i, j, dir);
            acc.hard += t.hard;
            acc.dse += t.dse;
            acc.sse += t.sse;
            if (grad != nullptr) accumulate(i, j, dir, inv_b * inv_neg, *grad);
          }
          acc.hard *= inv_neg;
          acc.dse *= inv_neg;
          acc.sse *= inv_neg;
        }
        out.hard_term += acc.hard;
        out.dse_term += acc.dse;
        out.sse_term += acc.sse;
        out.total += acc.total();
      }
    }
    out.total *= inv_b;
    out.hard_term *= inv_b;
    out.dse_term *= inv_b;
    out.sse_term *= inv_b;
    return out;
  }

 private:
  double score(std::size_t i, std::size_t j, Direction dir) const {
    if (cfg_.criterion == MiningCriterion::kHardOnly) {
      return hinge(negative_similarity(s_, i, j, dir), s_(i, i), cfg_.alpha);
    }
    return term(i, j, dir).total();
  }

  const SimilarityMatrix& s_;
  const ExpertSlot& dse_;
  const ExpertSlot& sse_;
  const ObjectiveConfig& cfg_;
};

}  // namespace

LossBreakdown hard_triplet_loss(const SimilarityMatrix& s, double alpha, Mining mining) {
  const ExpertSlot none;
  ObjectiveConfig cfg;
  cfg.alpha = alpha;
  cfg.lambda = 0.0;
  cfg.mining = mining;
  return Objective(s, none, none, cfg).run(nullptr, nullptr);
}

LossBreakdown full_loss(const SimilarityMatrix& s, const ExpertSlot& dse, const ExpertSlot& sse,
                        const ObjectiveConfig& cfg) {
  return Objective(s, dse, sse, cfg).run(nullptr, nullptr);
}

LossBreakdown full_loss(const SimilarityMatrix& s, const MarginMatrix& m_dse_video,
                        const MarginMatrix& m_dse_text, const MarginMatrix& m_sse_video,
                        const MarginMatrix& m_sse_text, double alpha, double lambda,
                        Mining mining) {
  const ExpertSlot dse{{m_dse_video}, {m_dse_text}};
  const ExpertSlot sse{{m_sse_video}, {m_sse_text}};
  ObjectiveConfig cfg;
  cfg.alpha = alpha;
  cfg.lambda = lambda;
  cfg.mining = mining;
  return full_loss(s, dse, sse, cfg);
}

LossBreakdown full_loss_at(const SimilarityMatrix& s, const ExpertSlot& dse,
                           const ExpertSlot& sse, const ObjectiveConfig& cfg,
                           const MinedIndices& fixed) {
  return Objective(s, dse, sse, cfg).run(&fixed, nullptr);
}

SimilarityGrad full_loss_similarity_grad(const SimilarityMatrix& s, const ExpertSlot& dse,
                                         const ExpertSlot& sse, const ObjectiveConfig& cfg) {
  SimilarityGrad out;
  out.grad = Matrix(s.batch_size(), s.values.cols(), 0.0);
  out.loss = Objective(s, dse, sse, cfg).run(nullptr, &out.grad);
  return out;
}

RepresentationGrad similarity_backward(const Matrix& video_rows, const Matrix& text_rows,
                                       const Matrix& grad_similarity) {
  const std::size_t n = video_rows.rows();
  if (text_rows.rows() != n || grad_similarity.rows() != n || grad_similarity.cols() != n ||
      video_rows.cols() != text_rows.cols()) {
    fail(ErrorCode::kShapeMismatch, "similarity_backward shapes disagree");
  }
  const std::size_t d = video_rows.cols();
  RepresentationGrad out{Matrix(n, d, 0.0), Matrix(n, d, 0.0)};
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const double g = grad_similarity(i, j);
      if (g == 0.0) continue;
      const GradPair gp = cosine_similarity_with_grad(video_rows.row(i), text_rows.row(j));
      auto gv = out.video.row(i);
      auto gt = out.text.row(j);
      for (std::size_t k = 0; k < d; ++k) {
        gv[k] += g * gp.grad_a[k];
        gt[k] += g * gp.grad_b[k];
      }
    }
  }
  return out;
}

LossAndGrad full_loss_grad(const TwoTowerModel& model, const ForwardState& state,
                           const ExpertSlot& dse, const ExpertSlot& sse,
                           const ObjectiveConfig& cfg) {
  const SimilarityMatrix s = similarity_matrix(state.video.output, state.text.output);
  SimilarityGrad sg = full_loss_similarity_grad(s, dse, sse, cfg);
  const RepresentationGrad rg = similarity_backward(state.video.output, state.text.output, sg.grad);
  return {std::move(sg.loss), backward(model, state, rg.video, rg.text)};
}

}  // namespace marginforge
