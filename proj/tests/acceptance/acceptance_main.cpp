// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fail.
// Pass criterion numbers as arguments to run a subset.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "marginforge/data.hpp"
#include "marginforge/error.hpp"
#include "marginforge/eval.hpp"
#include "marginforge/margin.hpp"
#include "marginforge/objective.hpp"
#include "marginforge/trainer.hpp"
#include "marginforge_cli/commands.hpp"
#include "../test_support.hpp"

using namespace marginforge;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

const std::uint64_t kSeeds[] = {0, 1, 2, 3, 4};

// Duplicate-heavy benchmark settings shared by criteria 5 and 6.
SynthConfig benchmark_data(std::uint64_t seed) {
  SynthConfig c;
  c.n_items = 512;
  c.duplicate_rate = 0.5;
  c.seed = seed;
  return c;
}

TrainConfig benchmark_train(std::uint64_t seed) {
  TrainConfig t;
  t.batch_size = 64;
  t.epochs = 60;
  t.alpha = 0.05;
  t.beta = 0.04;
  t.seed = seed;
  return t;
}

Outcome rescale_coverage() {
  const auto t0 = Clock::now();
  const RescaleConfig cfg{0.05, 0.05};
  std::mt19937_64 gen(20240601);
  std::normal_distribution<double> dist(0.6, 0.15);
  Vector samples(100000);
  for (double& x : samples) x = dist(gen);
  const Vector margins = rescale_samples(samples, cfg);
  const auto inside = std::count_if(margins.begin(), margins.end(), [](double m) { return m >= 0.0 && m <= 0.1; });
  const double fraction = static_cast<double>(inside) / margins.size();
  const double sigma = std::sqrt(beta_to_variance(0.05));
  const double analytic = std::abs(normal_cdf(0.05 / sigma) - normal_cdf(-0.05 / sigma) - 0.90);
  const double elapsed = seconds_since(t0);
  return {std::abs(fraction - 0.90) <= 0.01 && analytic < 1e-8 && elapsed < 1.0,
          "fraction in [0,0.1] = " + fmt("%.4f", fraction) + ", analytic error " + fmt("%.2e", analytic) +
              ", " + fmt("%.3f", elapsed) + " s"};
}

Outcome rescale_exactness() {
  std::mt19937_64 gen(77);
  const RescaleConfig cfg{0.05, 0.04};
  const double target_var = beta_to_variance(0.04);
  double worst_mean = 0.0, worst_var = 0.0;
  bool monotone = true;
  const std::size_t sizes[] = {4, 8, 16};
  for (int t = 0; t < 100; ++t) {
    const std::size_t b = sizes[t % 3];
    const DistanceMatrix d = pairwise_cosine_distances(mf_test::random_vectors(gen, b, 6), ExpertKind::kDseText);
    const MarginMatrix m = rescale_margins(d, cfg);
    std::vector<std::pair<double, double>> pairs;
    double sum = 0.0;
    for (std::size_t i = 0; i < b; ++i) {
      for (std::size_t j = 0; j < b; ++j) {
        if (i == j) continue;
        pairs.emplace_back(d(i, j), m(i, j));
        sum += m(i, j);
      }
    }
    const double mean = sum / pairs.size();
    double ss = 0.0;
    for (const auto& p : pairs) ss += (p.second - mean) * (p.second - mean);
    worst_mean = std::max(worst_mean, std::abs(mean - 0.05));
    worst_var = std::max(worst_var, std::abs(ss / pairs.size() - target_var));
    std::sort(pairs.begin(), pairs.end());
    for (std::size_t k = 1; k < pairs.size(); ++k) {
      if (pairs[k].first > pairs[k - 1].first && !(pairs[k].second > pairs[k - 1].second)) monotone = false;
    }
  }
  return {worst_mean <= 1e-9 && worst_var <= 1e-9 && monotone,
          "max |mean-mu| " + fmt("%.1e", worst_mean) + ", max |var-U| " + fmt("%.1e", worst_var) +
              (monotone ? ", monotone" : ", NOT monotone")};
}

Outcome beta_collapse() {
  std::mt19937_64 gen(31);
  std::uniform_real_distribution<double> u(-1.0, 1.0), lam(0.0, 1.0);
  double worst = 0.0;
  for (int t = 0; t < 100; ++t) {
    const std::size_t b = 2 + t % 15;
    Matrix s(b, b);
    for (double& v : s.values()) v = u(gen);
    const MarginMatrix a = MarginMatrix::constant(b, 0.05);
    const Mining mining = t % 2 ? Mining::kMean : Mining::kHardest;
    const double full = full_loss(SimilarityMatrix{s}, a, a, a, a, 0.05, lam(gen), mining).total;
    const double hard = hard_triplet_loss(SimilarityMatrix{s}, 0.05, mining).total;
    worst = std::max(worst, std::abs(full - 3.0 * hard));
  }
  return {worst < 1e-6, "max |full - 3 hard| = " + fmt("%.2e", worst)};
}

Outcome gradient_check() {
  const auto t0 = Clock::now();
  std::mt19937_64 gen(5);
  std::uniform_real_distribution<double> u(-1.0, 1.0), margin(-0.05, 0.15);
  double worst = 0.0;
  int cases = 0;
  for (std::size_t b : {2u, 3u, 4u}) {
    for (std::size_t dim : {2u, 4u, 8u}) {
      for (std::size_t hidden : {0u, 4u}) {
        for (double lambda : {0.0, 0.5, 1.0}) {
          for (Mining mining : {Mining::kHardest, Mining::kMean}) {
            const TwoTowerModel model = init_params({dim, dim, hidden, dim}, gen());
            Matrix vin(b, dim), tin(b, dim);
            for (double& x : vin.values()) x = u(gen);
            for (double& x : tin.values()) x = u(gen);
            auto random_margin = [&] {
              MarginMatrix m = MarginMatrix::constant(b, 0.05);
              for (std::size_t i = 0; i < b; ++i)
                for (std::size_t j = 0; j < b; ++j)
                  if (i != j) m.values(i, j) = margin(gen);
              return m;
            };
            const ExpertSlot dse{{random_margin()}, {random_margin()}};
            const ExpertSlot sse{{random_margin()}, {random_margin()}};
            ObjectiveConfig cfg;
            cfg.lambda = lambda;
            cfg.mining = mining;
            const ForwardState state = forward(model, vin, tin);
            const LossAndGrad lg = full_loss_grad(model, state, dse, sse, cfg);
            const MinedIndices fixed{lg.loss.hardest_j_video, lg.loss.hardest_j_text};
            const Vector fd = finite_diff_grad(
                [&](std::span<const double> flat) {
                  TwoTowerModel p = model;
                  assign_flat(p, flat);
                  const ForwardState st = forward(p, vin, tin);
                  const SimilarityMatrix s = similarity_matrix(st.video.output, st.text.output);
                  if (mining == Mining::kMean) return full_loss(s, dse, sse, cfg).total;
                  return full_loss_at(s, dse, sse, cfg, fixed).total;
                },
                flatten(model));
            const Vector an = flatten(lg.grad);
            const double err = mf_test::norm_rel_error(flatten(lg.grad), fd);
            worst = std::max(worst, err);
            ++cases;
          }
        }
      }
    }
  }
  const double elapsed = seconds_since(t0);
  return {worst < 1e-4 && elapsed < 30.0, std::to_string(cases) + " configurations, max relative error " +
                                              fmt("%.2e", worst) + ", " + fmt("%.2f", elapsed) + " s"};
}

Outcome margin_ordering_check() {
  bool ok = true;
  std::ostringstream detail;
  double worst_gap = 1e9;
  for (std::uint64_t seed : kSeeds) {
    const Dataset ds = generate(benchmark_data(seed));
    TrainConfig cfg = benchmark_train(seed);
    const TrainingData data(ds);
    const auto early = margin_ordering(initial_model(ds, cfg), data, cfg, 1);
    cfg.epochs = 30;
    const TrainResult trained = run_training(cfg, ds);
    const auto late = margin_ordering(trained.checkpoint.model, data, cfg, 31);
    for (const auto& o : early) {
      if (o.kind != ExpertKind::kSseText && o.kind != ExpertKind::kSseVideo) continue;
      worst_gap = std::min(worst_gap, o.cross_concept_mean - o.same_concept_mean);
      if (!(o.same_concept_mean < o.cross_concept_mean)) {
        ok = false;
        detail << " seed " << seed << " " << expert_kind_name(o.kind) << "@1";
      }
    }
    for (const auto& o : late) {
      if (o.kind != ExpertKind::kDseText && o.kind != ExpertKind::kDseVideo) continue;
      worst_gap = std::min(worst_gap, o.cross_concept_mean - o.same_concept_mean);
      if (!(o.same_concept_mean < o.cross_concept_mean)) {
        ok = false;
        detail << " seed " << seed << " " << expert_kind_name(o.kind) << "@30";
      }
    }
  }
  return {ok, "5 seeds, smallest cross-minus-same margin gap " + fmt("%.4f", worst_gap) +
                  (ok ? "" : "; violations:" + detail.str())};
}

Outcome end_to_end_benefit() {
  double sum_cmgsd = 0.0, sum_base = 0.0, slowest = 0.0;
  std::ostringstream per_seed;
  for (std::uint64_t seed : kSeeds) {
    const Dataset ds = generate(benchmark_data(seed));
    const TrainConfig cmgsd = benchmark_train(seed);
    TrainConfig base = cmgsd;
    base.experts = {false, false, false, false};
    base.beta = 0.0;
    auto t0 = Clock::now();
    const double r_cmgsd = run_training(cmgsd, ds).reports.back().metrics.rsum;
    slowest = std::max(slowest, seconds_since(t0));
    t0 = Clock::now();
    const double r_base = run_training(base, ds).reports.back().metrics.rsum;
    slowest = std::max(slowest, seconds_since(t0));
    sum_cmgsd += r_cmgsd;
    sum_base += r_base;
    per_seed << " " << fmt("%.1f", r_cmgsd) << "/" << fmt("%.1f", r_base);
  }
  const double mean_cmgsd = sum_cmgsd / 5.0, mean_base = sum_base / 5.0;
  return {mean_cmgsd >= mean_base && slowest < 120.0,
          "mean Rsum CMGSD " + fmt("%.3f", mean_cmgsd) + " vs baseline " + fmt("%.3f", mean_base) +
              " (per seed cmgsd/base:" + per_seed.str() + "), slowest run " + fmt("%.2f", slowest) + " s"};
}

Outcome metric_oracle() {
  std::mt19937_64 gen(404);
  std::uniform_int_distribution<int> level(0, 5);
  std::uniform_int_distribution<std::size_t> size(1, 8);
  const std::vector<int> ks{1, 5, 10};
  int mismatches = 0;
  for (int t = 0; t < 1000; ++t) {
    const std::size_t b = size(gen);
    Matrix m(b, b);
    for (double& v : m.values()) v = 0.2 * level(gen);
    const BidirectionalReport r = evaluate_bidirectional(SimilarityMatrix{m}, ks);
    auto oracle_ranks = [&](bool columns) {
      std::vector<std::size_t> ranks;
      for (std::size_t q = 0; q < b; ++q) {
        std::vector<std::size_t> order(b);
        std::iota(order.begin(), order.end(), 0);
        auto score = [&](std::size_t k) { return columns ? m(k, q) : m(q, k); };
        std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return score(x) > score(y); });
        ranks.push_back(static_cast<std::size_t>(std::find(order.begin(), order.end(), q) - order.begin()) + 1);
      }
      return ranks;
    };
    for (const auto& [report, columns] : {std::pair{&r.text_to_video, true}, std::pair{&r.video_to_text, false}}) {
      const auto ranks = oracle_ranks(columns);
      std::vector<std::size_t> sorted = ranks;
      std::sort(sorted.begin(), sorted.end());
      const double mdr = b % 2 ? static_cast<double>(sorted[b / 2])
                               : (static_cast<double>(sorted[b / 2 - 1]) + static_cast<double>(sorted[b / 2])) / 2.0;
      bool same = report->ranks == ranks && report->mdr == mdr;
      for (int k : ks) {
        const double hits = static_cast<double>(std::count_if(ranks.begin(), ranks.end(), [&](std::size_t x) { return x <= static_cast<std::size_t>(k); }));
        same = same && report->r_at.at(k) == 100.0 * hits / static_cast<double>(b);
      }
      if (!same) ++mismatches;
    }
  }
  return {mismatches == 0, "1000 instances, " + std::to_string(mismatches) + " mismatches"};
}

Outcome determinism() {
  mf_test::TempDir dir;
  std::ostringstream out, err;
  int codes = 0;
  for (const char* run : {"a", "b"}) {
    codes += cli::cmd_train({std::nullopt, 7, (dir / run).string(), std::nullopt}, out, err);
  }
  const std::string a = mf_test::slurp(dir / "a" / "report.jsonl");
  const std::string b = mf_test::slurp(dir / "b" / "report.jsonl");
  const bool same = codes == 0 && !a.empty() && a == b;
  return {same, "report.jsonl " + std::to_string(a.size()) + " bytes, fnv1a " + to_hex64(fnv1a64(a)) +
                    (same ? " identical" : " DIFFERENT") + (err.str().empty() ? "" : "; " + err.str())};
}

Outcome warmup() {
  // Large shared output bias: every representation starts nearly collinear.
  const double offset = 25.0;
  bool ok = true;
  std::ostringstream detail;
  int stalled_without = 0;
  for (std::uint64_t seed : kSeeds) {
    SynthConfig dc = benchmark_data(seed);
    const Dataset ds = generate(dc);
    const TrainingData data(ds);
    auto monitor_run = [&](int warmup_epochs) {
      TrainConfig cfg = benchmark_train(seed);
      cfg.epochs = 5;
      cfg.warmup_epochs = warmup_epochs;
      cfg.init_offset = offset;
      std::vector<double> monitor;
      TrainHooks hooks;
      hooks.after_epoch = [&](const EpochReport& r, const TwoTowerModel& model) {
        monitor.push_back(evaluate_objective(model, data, cfg, r.stats.epoch, Mining::kHardest));
      };
      try {
        run_training(cfg, ds, std::nullopt, hooks);
      } catch (const Error&) {
        monitor.push_back(NAN);
      }
      return monitor;
    };
    const auto with = monitor_run(1);
    const bool finite = std::all_of(with.begin(), with.end(), [](double v) { return std::isfinite(v); });
    const bool decreasing = with.size() == 5 && with[4] < with[0];
    if (!(finite && decreasing)) ok = false;
    detail << " " << fmt("%.4f", with.front()) << "->" << fmt("%.4f", with.back());
    const auto without = monitor_run(0);
    if (without.size() != 5 || !std::isfinite(without.back()) || !(without.back() < without.front())) {
      ++stalled_without;
    }
  }
  return {ok, "warm-up monitor epoch1->5 per seed:" + detail.str() + "; without warm-up " +
                  std::to_string(stalled_without) + "/5 seeds stalled or diverged"};
}

struct Criterion {
  int id;
  const char* name;
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> criteria = {
      {1, "rescale coverage", rescale_coverage},
      {2, "rescale exactness", rescale_exactness},
      {3, "beta->0 collapse", beta_collapse},
      {4, "gradient correctness", gradient_check},
      {5, "margin ordering on planted data", margin_ordering_check},
      {6, "end-to-end benefit", end_to_end_benefit},
      {7, "metric oracle", metric_oracle},
      {8, "determinism", determinism},
      {9, "warm-up behavior", warmup},
  };
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));
  int failures = 0;
  for (const auto& c : criteria) {
    if (!only.empty() && !only.count(c.id)) continue;
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    if (!o.pass) ++failures;
    std::printf("%s [%d] %s: %s\n", o.pass ? "PASS" : "FAIL", c.id, c.name, o.detail.c_str());
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
