#include "marginforge/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "marginforge/error.hpp"

namespace marginforge {

std::string_view retrieval_direction_name(RetrievalDirection d) {
  return d == RetrievalDirection::kTextToVideo ? "text_to_video" : "video_to_text";
}

std::size_t rank_of_positive(std::span<const double> scores, std::size_t positive_index) {
  if (positive_index >= scores.size()) {
    fail(ErrorCode::kIndexOutOfRange, "positive index " + std::to_string(positive_index) +
                                          " outside " + std::to_string(scores.size()) + " scores");
  }
  const double pos = scores[positive_index];
  std::size_t rank = 1;
  for (std::size_t k = 0; k < scores.size(); ++k) {
    if (scores[k] > pos || (scores[k] == pos && k < positive_index)) ++rank;
  }
  return rank;
}

double recall_at_k(std::span<const std::size_t> ranks, int k) {
  if (ranks.empty()) fail(ErrorCode::kEmptyInput, "recall of an empty rank list");
  if (k < 1) fail(ErrorCode::kInvalidArgument, "K must be >= 1");
  const auto hits = std::count_if(ranks.begin(), ranks.end(),
                                  [k](std::size_t r) { return r <= static_cast<std::size_t>(k); });
  return 100.0 * static_cast<double>(hits) / static_cast<double>(ranks.size());
}

double median_rank(std::span<const std::size_t> ranks) {
  if (ranks.empty()) fail(ErrorCode::kEmptyInput, "median of an empty rank list");
  std::vector<std::size_t> sorted(ranks.begin(), ranks.end());
  std::sort(sorted.begin(), sorted.end());
  const std::size_t n = sorted.size();
  if (n % 2 == 1) return static_cast<double>(sorted[n / 2]);
  return 0.5 * (static_cast<double>(sorted[n / 2 - 1]) + static_cast<double>(sorted[n / 2]));
}

namespace {

RetrievalReport build_report(RetrievalDirection dir, std::vector<std::size_t> ranks,
                             std::span<const int> ks) {
  RetrievalReport r;
  r.direction = dir;
  for (int k : ks) r.r_at[k] = recall_at_k(ranks, k);
  r.mdr = median_rank(ranks);
  r.ranks = std::move(ranks);
  return r;
}

}  // namespace

BidirectionalReport evaluate_bidirectional(const SimilarityMatrix& s, std::span<const int> ks) {
  const std::size_t n = s.batch_size();
  if (s.values.cols() != n) fail(ErrorCode::kNonSquare, "similarity matrix must be square");
  if (n == 0) fail(ErrorCode::kEmptyInput, "empty similarity matrix");
  std::vector<std::size_t> t2v(n);
  std::vector<std::size_t> v2t(n);
  std::vector<double> scores(n);
  for (std::size_t q = 0; q < n; ++q) {
    for (std::size_t i = 0; i < n; ++i) scores[i] = s(i, q);
    t2v[q] = rank_of_positive(scores, q);
    v2t[q] = rank_of_positive(s.values.row(q), q);
  }
  BidirectionalReport out;
  out.text_to_video = build_report(RetrievalDirection::kTextToVideo, std::move(t2v), ks);
  out.video_to_text = build_report(RetrievalDirection::kVideoToText, std::move(v2t), ks);
  for (const auto& [k, v] : out.text_to_video.r_at) out.rsum += v;
  for (const auto& [k, v] : out.video_to_text.r_at) out.rsum += v;
  return out;
}

namespace {

std::string fixed4(double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.4f", v);
  return buf;
}

}  // namespace

std::string format_metrics_csv(const BidirectionalReport& report) {
  std::string out = "direction";
  for (const auto& [k, v] : report.text_to_video.r_at) out += ",R" + std::to_string(k);
  out += ",MdR\n";
  for (const RetrievalReport* r : {&report.text_to_video, &report.video_to_text}) {
    out += retrieval_direction_name(r->direction);
    for (const auto& [k, v] : r->r_at) out += "," + fixed4(v);
    out += "," + fixed4(r->mdr) + "\n";
  }
  out += "rsum," + fixed4(report.rsum) + "\n";
  return out;
}

SummaryStats summarize(std::span<const double> values) {
  if (values.empty()) fail(ErrorCode::kEmptyInput, "summary of no values");
  SummaryStats s;
  double sum = 0.0;
  for (double v : values) sum += v;
  const double n = static_cast<double>(values.size());
  s.mean = sum / n;
  double sq = 0.0;
  for (double v : values) sq += (v - s.mean) * (v - s.mean);
  s.std_population = std::sqrt(sq / n);
  s.std_sample = values.size() > 1 ? std::sqrt(sq / (n - 1.0)) : 0.0;
  return s;
}

}  // namespace marginforge
