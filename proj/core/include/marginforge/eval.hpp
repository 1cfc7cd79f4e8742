#ifndef MARGINFORGE_EVAL_HPP_
#define MARGINFORGE_EVAL_HPP_

#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "marginforge/objective.hpp"

namespace marginforge {

enum class RetrievalDirection { kTextToVideo, kVideoToText };

std::string_view retrieval_direction_name(RetrievalDirection d);

struct RetrievalReport {
  RetrievalDirection direction = RetrievalDirection::kTextToVideo;
  std::map<int, double> r_at;  // K -> percentage
  double mdr = 0.0;
  std::vector<std::size_t> ranks;  // 1-indexed rank of each query's positive
};

struct BidirectionalReport {
  RetrievalReport text_to_video;
  RetrievalReport video_to_text;
  double rsum = 0.0;
};

/// 1 + #(strictly greater) + #(ties at a smaller index).
std::size_t rank_of_positive(std::span<const double> scores, std::size_t positive_index);
double recall_at_k(std::span<const std::size_t> ranks, int k);
double median_rank(std::span<const std::size_t> ranks);

/// Text queries score against columns, video queries against rows; the
/// diagonal holds the positives.
BidirectionalReport evaluate_bidirectional(const SimilarityMatrix& s, std::span<const int> ks);

/// CSV with header direction,R<K>...,MdR, one row per direction, then "rsum,<value>".
std::string format_metrics_csv(const BidirectionalReport& report);

struct SummaryStats {
  double mean = 0.0;
  double std_population = 0.0;
  double std_sample = 0.0;  // 0 for a single observation
};

SummaryStats summarize(std::span<const double> values);

}  // namespace marginforge

#endif  // MARGINFORGE_EVAL_HPP_
