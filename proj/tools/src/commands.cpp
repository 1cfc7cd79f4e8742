#include "marginforge_cli/commands.hpp"

#include <atomic>
#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include "marginforge/error.hpp"
#include "marginforge/eval.hpp"
#include "marginforge/trainer.hpp"

namespace fs = std::filesystem;

namespace marginforge::cli {

namespace {

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) fail(ErrorCode::kIoError, "cannot write " + path.string());
  f << text;
  f.close();
  if (!f) fail(ErrorCode::kIoError, "write failed for " + path.string());
}

fs::path require_out_dir(const RunConfig& cfg) {
  if (cfg.out_dir.empty()) {
    fail(ErrorCode::kMissingRequired, "no output directory: pass --out or set paths.out_dir");
  }
  const fs::path dir(cfg.out_dir);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) fail(ErrorCode::kIoError, "cannot create " + dir.string() + ": " + ec.message());
  return dir;
}

template <typename Fn>
int guarded(std::ostream& err, Fn&& fn) {
  try {
    return fn();
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
  }
  return 1;
}

const std::vector<std::size_t>& split_items(const Dataset& ds, const std::string& split) {
  if (split == "train") return ds.train;
  if (split == "val") return ds.val.empty() ? ds.train : ds.val;
  fail(ErrorCode::kInvalidArgument, "unknown split '" + split + "' (train or val)");
}

Checkpoint load_compatible(const std::string& path, const Dataset& ds) {
  Checkpoint ckpt = read_checkpoint(path);
  const ModelDims dims = ckpt.model.dims();
  if (dims.video_input != ds.video_dim() || dims.text_input != ds.text_dim()) {
    fail(ErrorCode::kDimMismatch, "checkpoint " + path + " expects inputs " +
                                      std::to_string(dims.video_input) + "/" +
                                      std::to_string(dims.text_input) + " but the dataset has " +
                                      std::to_string(ds.video_dim()) + "/" +
                                      std::to_string(ds.text_dim()));
  }
  return ckpt;
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

}  // namespace

RunConfig resolve_config(const CommonOptions& opts) {
  RunConfig cfg = opts.config ? parse_config(*opts.config) : RunConfig{};
  if (opts.seed) cfg.set_seed(*opts.seed);
  if (opts.out) cfg.out_dir = *opts.out;
  if (opts.data) cfg.data_dir = *opts.data;
  validate(cfg);
  return cfg;
}

Dataset resolve_dataset(const RunConfig& cfg) {
  if (!cfg.data_dir.empty()) return load_dataset(cfg.data_dir);
  return generate(cfg.data);
}

int cmd_gen_data(const CommonOptions& opts, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const RunConfig cfg = resolve_config(opts);
    const fs::path dir = require_out_dir(cfg);
    const Dataset ds = generate(cfg.data);
    write_dataset(ds, dir);
    write_text(dir / "resolved_config.txt", format_resolved_config(cfg));
    out << "wrote " << ds.size() << " items (" << ds.train.size() << " train, " << ds.val.size()
        << " val, duplicate rate " << fmt(realized_duplicate_rate(ds)) << ") to " << dir.string()
        << '\n';
    return 0;
  });
}

int cmd_train(const CommonOptions& opts, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const RunConfig cfg = resolve_config(opts);
    const fs::path dir = require_out_dir(cfg);
    const Dataset ds = resolve_dataset(cfg);
    write_text(dir / "resolved_config.txt", format_resolved_config(cfg));
    const TrainResult result = run_training(cfg.train, ds, dir);
    const TrainingData data(ds);
    const BidirectionalReport final_metrics =
        evaluate_split(result.checkpoint.model, data, split_items(ds, "val"), cfg.train.eval_ks);
    write_text(dir / "metrics.csv", format_metrics_csv(final_metrics));
    out << "trained " << cfg.train.epochs << " epochs; rsum " << fmt(final_metrics.rsum) << "; outputs in "
        << dir.string() << '\n';
    return 0;
  });
}

int cmd_eval(const CommonOptions& opts, const EvalOptions& eval, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const RunConfig cfg = resolve_config(opts);
    const Dataset ds = resolve_dataset(cfg);
    const Checkpoint ckpt = load_compatible(eval.checkpoint, ds);
    const TrainingData data(ds);
    const std::string csv =
        format_metrics_csv(evaluate_split(ckpt.model, data, split_items(ds, eval.split), cfg.train.eval_ks));
    if (cfg.out_dir.empty()) {
      out << csv;
    } else {
      const fs::path dir = require_out_dir(cfg);
      write_text(dir / "metrics.csv", csv);
      write_text(dir / "resolved_config.txt", format_resolved_config(cfg));
      out << "wrote " << (dir / "metrics.csv").string() << '\n';
    }
    return 0;
  });
}

int cmd_inspect_margins(const CommonOptions& opts, const InspectOptions& inspect, std::ostream& out,
                        std::ostream& err) {
  return guarded(err, [&] {
    const RunConfig cfg = resolve_config(opts);
    const Dataset ds = resolve_dataset(cfg);
    const Checkpoint ckpt = load_compatible(inspect.checkpoint, ds);
    const auto& pool = split_items(ds, inspect.split);
    const std::size_t b = cfg.train.batch_size;
    const std::size_t begin = inspect.batch_index * b;
    if (begin + 2 > pool.size()) {
      fail(ErrorCode::kIndexOutOfRange, "batch " + std::to_string(inspect.batch_index) + " of size " +
                                            std::to_string(b) + " is past the end of the " +
                                            inspect.split + " split (" + std::to_string(pool.size()) +
                                            " items)");
    }
    const std::vector<std::size_t> items(pool.begin() + static_cast<std::ptrdiff_t>(begin),
                                         pool.begin() + static_cast<std::ptrdiff_t>(std::min(begin + b, pool.size())));
    ExpertToggles which;
    if (inspect.expert != "all") {
      const ExpertKind only = parse_expert_kind(inspect.expert);
      which = {only == ExpertKind::kDseText, only == ExpertKind::kDseVideo, only == ExpertKind::kSseText,
               only == ExpertKind::kSseVideo};
    }
    const TrainingData data(ds);
    const ForwardState state = forward(ckpt.model, data.gather_video(items), data.gather_text(items));
    const auto margins = compute_expert_margins(data, items, state, cfg.train, which);

    std::ostringstream csv;
    csv << "i,j,expert,distance,margin,same_concept\n";
    char buf[128];
    for (const auto& em : margins) {
      for (std::size_t i = 0; i < items.size(); ++i) {
        for (std::size_t j = 0; j < items.size(); ++j) {
          if (i == j) continue;
          std::string same = "NA";
          if (ds.labeled()) same = ds.concepts[items[i]] == ds.concepts[items[j]] ? "1" : "0";
          std::snprintf(buf, sizeof buf, "%zu,%zu,%s,%.17g,%.17g,%s\n", i, j,
                        std::string(expert_kind_name(em.kind)).c_str(), em.distances.values(i, j),
                        em.margins.values(i, j), same.c_str());
          csv << buf;
        }
      }
    }
    if (cfg.out_dir.empty()) {
      out << csv.str();
    } else {
      const fs::path dir = require_out_dir(cfg);
      write_text(dir / "margins.csv", csv.str());
      write_text(dir / "resolved_config.txt", format_resolved_config(cfg));
      out << "wrote " << (dir / "margins.csv").string() << '\n';
    }
    return 0;
  });
}

unsigned sweep_threads() {
  const char* env = std::getenv("MARGINFORGE_THREADS");
  if (env == nullptr || *env == '\0') return 1;
  unsigned n = 0;
  const std::string_view s(env);
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), n);
  if (ec != std::errc() || p != s.data() + s.size() || n == 0) return 1;
  return n;
}

namespace {

struct Grid {
  std::string key;
  std::vector<std::string> values;
};

Grid parse_grid(const std::string& spec) {
  const auto eq = spec.find('=');
  if (eq == std::string::npos || eq == 0 || eq + 1 == spec.size()) {
    fail(ErrorCode::kInvalidArgument, "--param expects key=v1,v2,... got '" + spec + "'");
  }
  Grid g{spec.substr(0, eq), {}};
  std::string rest = spec.substr(eq + 1);
  std::size_t pos = 0;
  while (true) {
    const auto comma = rest.find(',', pos);
    g.values.push_back(rest.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos));
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  return g;
}

struct RunResult {
  double rsum = 0.0;
  double t2v_r1 = 0.0;
  double v2t_r1 = 0.0;
};

}  // namespace

int cmd_sweep(const CommonOptions& opts, const SweepOptions& sweep, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const RunConfig base = resolve_config(opts);
    const fs::path dir = require_out_dir(base);
    if (sweep.seeds.empty()) fail(ErrorCode::kInvalidArgument, "sweep needs at least one seed");
    if (sweep.params.size() > 3) fail(ErrorCode::kInvalidArgument, "at most 3 --param grids");

    std::vector<Grid> grids;
    for (const auto& p : sweep.params) grids.push_back(parse_grid(p));

    // Cartesian product, last grid varying fastest.
    std::vector<std::vector<std::string>> cells{{}};
    for (const auto& g : grids) {
      std::vector<std::vector<std::string>> next;
      for (const auto& c : cells) {
        for (const auto& v : g.values) {
          auto row = c;
          row.push_back(v);
          next.push_back(std::move(row));
        }
      }
      cells = std::move(next);
    }

    // Resolve every configuration up front so bad values fail before any run.
    struct Job {
      std::size_t cell;
      std::uint64_t seed;
      RunConfig cfg;
      fs::path run_dir;
    };
    std::vector<Job> jobs;
    for (std::size_t c = 0; c < cells.size(); ++c) {
      for (std::uint64_t seed : sweep.seeds) {
        RunConfig cfg = base;
        for (std::size_t g = 0; g < grids.size(); ++g) {
          apply_setting(cfg, grids[g].key, cells[c][g], "--param " + grids[g].key);
        }
        cfg.set_seed(seed);
        validate(cfg);
        char name[64];
        std::snprintf(name, sizeof name, "cell%03zu/seed%llu", c, static_cast<unsigned long long>(seed));
        jobs.push_back({c, seed, std::move(cfg), dir / name});
      }
    }

    std::vector<RunResult> results(jobs.size());
    std::vector<std::exception_ptr> failures(jobs.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
      for (std::size_t k = next++; k < jobs.size(); k = next++) {
        try {
          const Job& job = jobs[k];
          const Dataset ds = resolve_dataset(job.cfg);
          fs::create_directories(job.run_dir);
          write_text(job.run_dir / "resolved_config.txt", format_resolved_config(job.cfg));
          const TrainResult r = run_training(job.cfg.train, ds, job.run_dir);
          const TrainingData data(ds);
          const BidirectionalReport m =
              evaluate_split(r.checkpoint.model, data, split_items(ds, "val"), job.cfg.train.eval_ks);
          write_text(job.run_dir / "metrics.csv", format_metrics_csv(m));
          auto r1 = [](const RetrievalReport& rr) {
            const auto it = rr.r_at.find(1);
            return it == rr.r_at.end() ? 0.0 : it->second;
          };
          results[k] = {m.rsum, r1(m.text_to_video), r1(m.video_to_text)};
        } catch (...) {
          failures[k] = std::current_exception();
        }
      }
    };
    const unsigned n_threads = std::min<unsigned>(sweep_threads(), static_cast<unsigned>(jobs.size()));
    std::vector<std::thread> pool;
    for (unsigned t = 1; t < n_threads; ++t) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();
    for (std::size_t k = 0; k < jobs.size(); ++k) {
      if (failures[k]) {
        try {
          std::rethrow_exception(failures[k]);
        } catch (const std::exception& e) {
          fail(ErrorCode::kNumericError, "run " + jobs[k].run_dir.string() + " failed: " + e.what());
        }
      }
    }

    std::ostringstream runs;
    runs << "cell";
    for (const auto& g : grids) runs << ',' << g.key;
    runs << ",seed,rsum,t2v_R1,v2t_R1\n";
    char buf[256];
    for (std::size_t k = 0; k < jobs.size(); ++k) {
      runs << jobs[k].cell;
      for (const auto& v : cells[jobs[k].cell]) runs << ',' << v;
      std::snprintf(buf, sizeof buf, ",%llu,%.17g,%.17g,%.17g\n",
                    static_cast<unsigned long long>(jobs[k].seed), results[k].rsum, results[k].t2v_r1,
                    results[k].v2t_r1);
      runs << buf;
    }
    write_text(dir / "runs.csv", runs.str());

    std::ostringstream summary;
    summary << "cell";
    for (const auto& g : grids) summary << ',' << g.key;
    summary << ",n_seeds";
    for (const char* metric : {"rsum", "t2v_R1", "v2t_R1"}) {
      summary << ',' << metric << "_mean," << metric << "_std_pop," << metric << "_std_sample";
    }
    summary << '\n';
    for (std::size_t c = 0; c < cells.size(); ++c) {
      std::vector<double> rsum, t2v, v2t;
      for (std::size_t k = 0; k < jobs.size(); ++k) {
        if (jobs[k].cell != c) continue;
        rsum.push_back(results[k].rsum);
        t2v.push_back(results[k].t2v_r1);
        v2t.push_back(results[k].v2t_r1);
      }
      summary << c;
      for (const auto& v : cells[c]) summary << ',' << v;
      summary << ',' << rsum.size();
      for (const auto* series : {&rsum, &t2v, &v2t}) {
        const SummaryStats s = summarize(*series);
        std::snprintf(buf, sizeof buf, ",%.17g,%.17g,%.17g", s.mean, s.std_population, s.std_sample);
        summary << buf;
      }
      summary << '\n';
    }
    write_text(dir / "summary.csv", summary.str());
    write_text(dir / "resolved_config.txt", format_resolved_config(base));
    out << "sweep: " << cells.size() << " cells x " << sweep.seeds.size() << " seeds; summary in "
        << (dir / "summary.csv").string() << '\n';
    return 0;
  });
}

}  // namespace marginforge::cli
