#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "marginforge/error.hpp"
#include "marginforge/eval.hpp"
#include "test_support.hpp"

using namespace marginforge;

namespace {

// Stable sort by descending score; position of the positive, 1-indexed.
std::size_t sort_rank(const Vector& scores, std::size_t pos) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  return static_cast<std::size_t>(std::find(order.begin(), order.end(), pos) - order.begin()) + 1;
}

}  // namespace

TEST(Rank, Examples) {
  EXPECT_EQ(rank_of_positive(Vector{0.1, 0.9, 0.3}, 1), 1u);
  EXPECT_EQ(rank_of_positive(Vector{0.5, 0.5, 0.3}, 1), 2u);
  EXPECT_EQ(rank_of_positive(Vector{0.5, 0.5, 0.3}, 0), 1u);
  EXPECT_EQ(rank_of_positive(Vector{7, 6, 5, 4, 3, 2, 1}, 6), 7u);
  EXPECT_THROW(rank_of_positive(Vector{1, 2}, 2), Error);
}

TEST(Recall, Examples) {
  const std::vector<std::size_t> ranks{1, 3, 4, 10};
  EXPECT_DOUBLE_EQ(recall_at_k(ranks, 1), 25.0);
  EXPECT_DOUBLE_EQ(recall_at_k(ranks, 5), 75.0);
  EXPECT_DOUBLE_EQ(recall_at_k(ranks, 10), 100.0);
  EXPECT_DOUBLE_EQ(recall_at_k(std::vector<std::size_t>{1, 1, 1}, 1), 100.0);
  EXPECT_THROW(recall_at_k(std::vector<std::size_t>{}, 1), Error);
}

TEST(MedianRank, Examples) {
  EXPECT_DOUBLE_EQ(median_rank(std::vector<std::size_t>{1, 1, 1}), 1.0);
  EXPECT_DOUBLE_EQ(median_rank(std::vector<std::size_t>{10, 1, 4, 3}), 3.5);
  EXPECT_DOUBLE_EQ(median_rank(std::vector<std::size_t>{7}), 7.0);
  EXPECT_THROW(median_rank(std::vector<std::size_t>{}), Error);
}

TEST(Bidirectional, DominantDiagonal) {
  const SimilarityMatrix s{Matrix::from_rows({{0.9, 0.1, 0.2}, {0.3, 0.8, 0.1}, {0.0, 0.2, 0.7}})};
  const std::vector<int> ks{1, 5, 10};
  const BidirectionalReport r = evaluate_bidirectional(s, ks);
  EXPECT_DOUBLE_EQ(r.text_to_video.r_at.at(1), 100.0);
  EXPECT_DOUBLE_EQ(r.video_to_text.r_at.at(1), 100.0);
  EXPECT_DOUBLE_EQ(r.rsum, 600.0);
  EXPECT_THROW(evaluate_bidirectional(SimilarityMatrix{Matrix(2, 3)}, ks), Error);
}

TEST(Bidirectional, DirectionsAndTranspose) {
  // Text query j scores column j; video query i scores row i.
  const SimilarityMatrix s{Matrix::from_rows({{0.5, 0.9, 0.0, 0.1},
                                              {0.3, 0.4, 0.2, 0.1},
                                              {0.1, 0.0, 0.7, 0.8},
                                              {0.2, 0.3, 0.9, 0.6}})};
  const std::vector<int> ks{1, 2};
  const BidirectionalReport r = evaluate_bidirectional(s, ks);
  EXPECT_EQ(r.text_to_video.ranks, (std::vector<std::size_t>{1, 2, 2, 2}));
  EXPECT_EQ(r.video_to_text.ranks, (std::vector<std::size_t>{2, 1, 2, 2}));
  const BidirectionalReport t = evaluate_bidirectional(SimilarityMatrix{s.values.transposed()}, ks);
  EXPECT_EQ(t.text_to_video.ranks, r.video_to_text.ranks);
  EXPECT_EQ(t.video_to_text.ranks, r.text_to_video.ranks);
  EXPECT_DOUBLE_EQ(t.rsum, r.rsum);
}

TEST(Bidirectional, AgreesWithSortOracleAndIsRankInvariant) {
  std::mt19937_64 gen(6);
  std::uniform_int_distribution<int> level(0, 4);  // coarse values force ties
  for (int t = 0; t < 300; ++t) {
    const std::size_t b = 1 + t % 8;
    Matrix m(b, b);
    for (double& v : m.values()) v = 0.25 * level(gen);
    const std::vector<int> ks{1, 5, 10};
    const BidirectionalReport r = evaluate_bidirectional(SimilarityMatrix{m}, ks);
    for (std::size_t q = 0; q < b; ++q) {
      Vector row(m.row(q).begin(), m.row(q).end());
      Vector col(b);
      for (std::size_t i = 0; i < b; ++i) col[i] = m(i, q);
      EXPECT_EQ(r.video_to_text.ranks[q], sort_rank(row, q));
      EXPECT_EQ(r.text_to_video.ranks[q], sort_rank(col, q));
    }
    Matrix warped = m;
    for (double& v : warped.values()) v = std::exp(3.0 * v) - 7.0;
    const BidirectionalReport w = evaluate_bidirectional(SimilarityMatrix{warped}, ks);
    EXPECT_EQ(w.text_to_video.ranks, r.text_to_video.ranks);
    EXPECT_EQ(w.video_to_text.ranks, r.video_to_text.ranks);
    EXPECT_LE(r.text_to_video.r_at.at(1), r.text_to_video.r_at.at(5));
    EXPECT_LE(r.text_to_video.r_at.at(5), r.text_to_video.r_at.at(10));
  }
}

TEST(MetricsCsv, Format) {
  const SimilarityMatrix s{Matrix::from_rows({{0.9, 0.1}, {0.95, 0.8}})};
  const std::vector<int> ks{1, 5, 10};
  EXPECT_EQ(format_metrics_csv(evaluate_bidirectional(s, ks)),
            "direction,R1,R5,R10,MdR\n"
            "text_to_video,50.0000,100.0000,100.0000,1.5000\n"
            "video_to_text,50.0000,100.0000,100.0000,1.5000\n"
            "rsum,500.0000\n");
}

TEST(Summary, PopulationAndSample) {
  const SummaryStats s = summarize(Vector{1.0, 2.0, 3.0, 4.0});
  EXPECT_DOUBLE_EQ(s.mean, 2.5);
  EXPECT_NEAR(s.std_population, std::sqrt(1.25), 1e-15);
  EXPECT_NEAR(s.std_sample, std::sqrt(5.0 / 3.0), 1e-15);
  const SummaryStats one = summarize(Vector{3.0});
  EXPECT_EQ(one.std_population, 0.0);
  EXPECT_EQ(one.std_sample, 0.0);
}
