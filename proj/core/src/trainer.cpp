#include "marginforge/trainer.hpp"

#include <cmath>
#include <fstream>
#include <string>

#include "json.hpp"

#include "marginforge/error.hpp"
#include "text_io.hpp"

namespace marginforge {

bool ExpertToggles::enabled(ExpertKind kind) const {
  switch (kind) {
    case ExpertKind::kDseText: return dse_text;
    case ExpertKind::kDseVideo: return dse_video;
    case ExpertKind::kSseText: return sse_text;
    case ExpertKind::kSseVideo: return sse_video;
  }
  return false;
}

void TrainConfig::validate(std::size_t dataset_size) const {
  auto bad = [](const std::string& what) { fail(ErrorCode::kConfigError, what); };
  if (!std::isfinite(alpha)) bad("alpha must be finite");
  if (!(beta >= 0.0) || !std::isfinite(beta)) bad("beta must be nonnegative");
  if (lambda_start_epoch < 1) bad("lambda_start_epoch must be >= 1");
  if (lambda_end_epoch <= lambda_start_epoch) bad("lambda_end_epoch must exceed lambda_start_epoch");
  if (!(lambda_start_value > 0.0 && lambda_start_value <= 1.0)) bad("lambda_start_value must be in (0, 1]");
  if (warmup_epochs < 0) bad("warmup_epochs must be >= 0");
  if (epochs < 0) bad("epochs must be >= 0");
  if (batch_size < 2) bad("batch_size must be at least 2");
  if (dataset_size > 0 && batch_size > dataset_size) {
    bad("batch_size " + std::to_string(batch_size) + " exceeds " + std::to_string(dataset_size) +
        " training items");
  }
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) bad("learning_rate must be >= 0");
  if (joint_dim == 0) bad("joint_dim must be positive");
  if (!std::isfinite(init_offset)) bad("init_offset must be finite");
  if (eval_ks.empty()) bad("eval ks must not be empty");
  for (int k : eval_ks)
    if (k < 1) bad("eval ks must be >= 1");
}

std::string TrainConfig::fingerprint() const {
  using detail::format_double;
  std::string out;
  auto put = [&out](const char* key, const std::string& value) {
    out += key;
    out += '=';
    out += value;
    out += '\n';
  };
  put("alpha", format_double(alpha));
  put("beta", format_double(beta));
  put("lambda_start_epoch", std::to_string(lambda_start_epoch));
  put("lambda_start_value", format_double(lambda_start_value));
  put("lambda_end_epoch", std::to_string(lambda_end_epoch));
  put("warmup_epochs", std::to_string(warmup_epochs));
  put("epochs", std::to_string(epochs));
  put("batch_size", std::to_string(batch_size));
  put("learning_rate", format_double(learning_rate));
  put("seed", std::to_string(seed));
  put("mining_criterion", std::string(mining_criterion_name(mining_criterion)));
  put("experts", std::to_string(experts.dse_text) + std::to_string(experts.dse_video) +
                     std::to_string(experts.sse_text) + std::to_string(experts.sse_video));
  put("hidden_dim", std::to_string(hidden_dim));
  put("joint_dim", std::to_string(joint_dim));
  put("init_offset", format_double(init_offset));
  std::string ks;
  for (int k : eval_ks) ks += std::to_string(k) + ",";
  put("eval_ks", ks);
  return out;
}

std::uint64_t TrainConfig::config_hash() const { return fnv1a64(fingerprint()); }

double lambda_schedule(int epoch, const TrainConfig& cfg) {
  if (epoch < 1) fail(ErrorCode::kInvalidArgument, "epochs are 1-indexed");
  if (epoch < cfg.lambda_start_epoch) return 0.0;
  if (epoch >= cfg.lambda_end_epoch) return 1.0;
  if (epoch == cfg.lambda_start_epoch) return cfg.lambda_start_value;
  const double progress = static_cast<double>(epoch - cfg.lambda_start_epoch) /
                          static_cast<double>(cfg.lambda_end_epoch - cfg.lambda_start_epoch);
  return cfg.lambda_start_value * std::pow(1.0 / cfg.lambda_start_value, progress);
}

void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state,
               double learning_rate, const AdamConfig& adam) {
  if (grads.size() != params.size()) {
    fail(ErrorCode::kShapeMismatch, "gradient has " + std::to_string(grads.size()) +
                                        " entries, parameters have " + std::to_string(params.size()));
  }
  if (state.m.empty() && state.v.empty()) {
    state.m.assign(params.size(), 0.0);
    state.v.assign(params.size(), 0.0);
  }
  if (state.m.size() != params.size() || state.v.size() != params.size()) {
    fail(ErrorCode::kShapeMismatch, "optimizer state does not match the parameters");
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(adam.beta1, t);
  const double correction2 = 1.0 - std::pow(adam.beta2, t);
  for (std::size_t k = 0; k < params.size(); ++k) {
    const double g = grads[k];
    state.m[k] = adam.beta1 * state.m[k] + (1.0 - adam.beta1) * g;
    state.v[k] = adam.beta2 * state.v[k] + (1.0 - adam.beta2) * g * g;
    const double m_hat = state.m[k] / correction1;
    const double v_hat = state.v[k] / correction2;
    params[k] -= learning_rate * m_hat / (std::sqrt(v_hat) + adam.epsilon);
  }
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

struct TensorView {
  std::string name;
  std::size_t rows;
  std::size_t cols;
};

std::vector<TensorView> tensor_layout(const TwoTowerModel& model) {
  std::vector<TensorView> out;
  auto add = [&out](const std::string& tower, const std::vector<DenseLayer>& layers) {
    for (std::size_t l = 0; l < layers.size(); ++l) {
      const auto& layer = layers[l];
      out.push_back({tower + "." + std::to_string(l) + ".weight", layer.weights.rows(), layer.weights.cols()});
      out.push_back({tower + "." + std::to_string(l) + ".bias", 1, layer.bias.size()});
    }
  };
  add("video", model.video.layers());
  add("text", model.text.layers());
  return out;
}

void format_section(std::string& out, const std::string& section,
                    const std::vector<TensorView>& layout, std::span<const double> flat) {
  out += "section " + section + "\n";
  std::size_t k = 0;
  for (const auto& t : layout) {
    out += "tensor " + t.name + " " + std::to_string(t.rows) + " " + std::to_string(t.cols) + "\n";
    for (std::size_t r = 0; r < t.rows; ++r) {
      for (std::size_t c = 0; c < t.cols; ++c) {
        if (c > 0) out += ' ';
        out += detail::format_double(flat[k++]);
      }
      out += '\n';
    }
  }
}

}  // namespace

std::string format_checkpoint(const Checkpoint& ckpt) {
  const ModelDims d = ckpt.model.dims();
  std::string out = "CKPT1\n";
  out += "dims " + std::to_string(d.video_input) + " " + std::to_string(d.text_input) + " " +
         std::to_string(d.hidden_dim) + " " + std::to_string(d.joint_dim) + "\n";
  out += "epoch " + std::to_string(ckpt.epoch) + "\n";
  out += "seed " + std::to_string(ckpt.seed) + "\n";
  out += "config_hash " + to_hex64(ckpt.config_hash) + "\n";
  out += "adam_step " + std::to_string(ckpt.adam.step) + "\n";
  const auto layout = tensor_layout(ckpt.model);
  format_section(out, "params", layout, flatten(ckpt.model));
  if (ckpt.adam.step > 0 || !ckpt.adam.m.empty()) {
    format_section(out, "adam_m", layout, ckpt.adam.m);
    format_section(out, "adam_v", layout, ckpt.adam.v);
  }
  return out;
}

Checkpoint parse_checkpoint(std::string_view text, std::string_view origin) {
  detail::LineReader reader(text);
  std::string_view line;
  auto bad = [&](const std::string& what) -> void {
    fail(ErrorCode::kParseError,
         std::string(origin) + ":" + std::to_string(reader.line_number()) + ": " + what);
  };
  auto expect_line = [&](std::string_view key, std::size_t n_values) {
    if (!reader.next(line)) bad("unexpected end of checkpoint");
    auto tok = detail::split_ws(line);
    if (tok.size() != n_values + 1 || tok[0] != key) bad("expected '" + std::string(key) + "'");
    return tok;
  };
  auto as_uint = [&](std::string_view tok) {
    const auto v = detail::parse_int(tok);
    if (!v || *v < 0) bad("bad integer '" + std::string(tok) + "'");
    return static_cast<std::uint64_t>(*v);
  };

  if (!reader.next(line) || detail::trim(line) != "CKPT1") bad("missing CKPT1 header");
  const auto dims_tok = expect_line("dims", 4);
  const ModelDims dims{as_uint(dims_tok[1]), as_uint(dims_tok[2]), as_uint(dims_tok[3]),
                       as_uint(dims_tok[4])};
  Checkpoint ckpt;
  ckpt.epoch = static_cast<int>(as_uint(expect_line("epoch", 1)[1]));
  ckpt.seed = as_uint(expect_line("seed", 1)[1]);
  const auto hash_tok = expect_line("config_hash", 1)[1];
  ckpt.config_hash = std::strtoull(std::string(hash_tok).c_str(), nullptr, 16);
  ckpt.adam.step = as_uint(expect_line("adam_step", 1)[1]);
  try {
    ckpt.model = init_params(dims, 0);
  } catch (const Error& e) {
    bad("invalid dims: " + e.detail());
  }
  const auto layout = tensor_layout(ckpt.model);

  auto read_tensors = [&]() {
    Vector flat;
    for (const auto& t : layout) {
      const auto head = expect_line("tensor", 3);
      if (head[1] != t.name || as_uint(head[2]) != t.rows || as_uint(head[3]) != t.cols) {
        bad("expected tensor " + t.name + " " + std::to_string(t.rows) + "x" + std::to_string(t.cols));
      }
      for (std::size_t r = 0; r < t.rows; ++r) {
        if (!reader.next(line)) bad("truncated tensor " + t.name);
        const auto vals = detail::split_ws(line);
        if (vals.size() != t.cols) bad("tensor " + t.name + " row has wrong width");
        for (auto v : vals) {
          const auto x = detail::parse_double(v);
          if (!x) bad("bad value '" + std::string(v) + "'");
          flat.push_back(*x);
        }
      }
    }
    return flat;
  };
  auto read_section = [&](std::string_view name) {
    if (expect_line("section", 1)[1] != name) bad("expected section " + std::string(name));
    return read_tensors();
  };

  assign_flat(ckpt.model, read_section("params"));
  // Optimizer moments are optional.
  if (reader.next(line)) {
    const auto tok = detail::split_ws(line);
    if (tok.size() != 2 || tok[0] != "section" || tok[1] != "adam_m") bad("expected section adam_m");
    ckpt.adam.m = read_tensors();
    ckpt.adam.v = read_section("adam_v");
  }
  if (reader.next(line)) bad("trailing content");
  return ckpt;
}

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  detail::write_file(path, format_checkpoint(ckpt));
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  return parse_checkpoint(detail::read_file(path), path.string());
}

// ---------------------------------------------------------------------------
// Training

TrainingData::TrainingData(const Dataset& ds)
    : dataset(&ds), video_inputs(ds.pooled_video()), text_inputs(ds.text_matrix()) {}

namespace {

Matrix gather(const Matrix& source, std::span<const std::size_t> items) {
  Matrix out(items.size(), source.cols());
  for (std::size_t r = 0; r < items.size(); ++r) {
    const auto src = source.row(items[r]);
    std::copy(src.begin(), src.end(), out.row(r).begin());
  }
  return out;
}

std::vector<Vector> rows_of(const Matrix& m) {
  std::vector<Vector> out;
  out.reserve(m.rows());
  for (std::size_t r = 0; r < m.rows(); ++r) out.emplace_back(m.row(r).begin(), m.row(r).end());
  return out;
}

}  // namespace

Matrix TrainingData::gather_video(std::span<const std::size_t> items) const {
  return gather(video_inputs, items);
}

Matrix TrainingData::gather_text(std::span<const std::size_t> items) const {
  return gather(text_inputs, items);
}

std::vector<ExpertMargins> compute_expert_margins(const TrainingData& data,
                                                  std::span<const std::size_t> items,
                                                  const ForwardState& state,
                                                  const TrainConfig& cfg,
                                                  const ExpertToggles& which) {
  const Dataset& ds = *data.dataset;
  const RescaleConfig rescale{cfg.alpha, cfg.beta};
  std::vector<ExpertMargins> out;
  auto push = [&](DistanceMatrix d) {
    MarginMatrix m = rescale_margins(d, rescale);
    const ExpertKind kind = d.kind;
    out.push_back({kind, std::move(d), std::move(m)});
  };
  if (which.dse_text) push(dse_text_distances(rows_of(state.text.output)));
  if (which.dse_video) push(dse_video_distances(rows_of(state.video.output)));
  if (which.sse_text) {
    std::vector<std::string> ids;
    ids.reserve(items.size());
    for (std::size_t i : items) ids.push_back(ds.ids[i]);
    push(sse_text_distances(ds.sse_text, ids));
  }
  if (which.sse_video) {
    std::vector<Matrix> frames;
    frames.reserve(items.size());
    for (std::size_t i : items) frames.push_back(ds.frames[i]);
    push(sse_video_distances(frames));
  }
  return out;
}

namespace {

void build_slots(std::vector<ExpertMargins>& margins, ExpertSlot& dse, ExpertSlot& sse) {
  for (auto& em : margins) {
    switch (em.kind) {
      case ExpertKind::kDseText: dse.text.push_back(std::move(em.margins)); break;
      case ExpertKind::kDseVideo: dse.video.push_back(std::move(em.margins)); break;
      case ExpertKind::kSseText: sse.text.push_back(std::move(em.margins)); break;
      case ExpertKind::kSseVideo: sse.video.push_back(std::move(em.margins)); break;
    }
  }
}

std::vector<std::vector<std::size_t>> chunk(const std::vector<std::size_t>& order,
                                            std::size_t batch_size) {
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    const std::size_t end = std::min(order.size(), start + batch_size);
    // The loss needs at least one negative per anchor.
    if (end - start < 2) break;
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                         order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return batches;
}

ObjectiveConfig objective_for(const TrainConfig& cfg, int epoch) {
  ObjectiveConfig obj;
  obj.alpha = cfg.alpha;
  obj.lambda = lambda_schedule(epoch, cfg);
  obj.mining = epoch <= cfg.warmup_epochs ? Mining::kMean : Mining::kHardest;
  obj.criterion = cfg.mining_criterion;
  return obj;
}

}  // namespace

std::vector<std::vector<std::size_t>> epoch_batches(const Dataset& ds, const TrainConfig& cfg,
                                                    int epoch) {
  std::vector<std::size_t> order = ds.train;
  Rng rng(cfg.seed, "shuffle:" + std::to_string(epoch));
  rng.shuffle(order);
  return chunk(order, cfg.batch_size);
}

EpochStats train_epoch(TwoTowerModel& model, AdamState& adam, const TrainingData& data,
                       const TrainConfig& cfg, int epoch) {
  const ObjectiveConfig obj = objective_for(cfg, epoch);
  EpochStats stats;
  stats.epoch = epoch;
  stats.lambda = obj.lambda;
  stats.mining = obj.mining;
  const auto batches = epoch_batches(*data.dataset, cfg, epoch);
  for (std::size_t b = 0; b < batches.size(); ++b) {
    const auto& items = batches[b];
    try {
      const ForwardState state = forward(model, data.gather_video(items), data.gather_text(items));
      auto margins = compute_expert_margins(data, items, state, cfg, cfg.experts);
      ExpertSlot dse;
      ExpertSlot sse;
      build_slots(margins, dse, sse);
      const LossAndGrad lg = full_loss_grad(model, state, dse, sse, obj);
      const Vector grad = flatten(lg.grad);
      if (!std::isfinite(lg.loss.total) || !all_finite(grad)) {
        fail(ErrorCode::kNumericError, "non-finite loss or gradient");
      }
      Vector params = flatten(model);
      adam_step(params, grad, adam, cfg.learning_rate);
      assign_flat(model, params);
      stats.loss_total += lg.loss.total;
      stats.loss_hard += lg.loss.hard_term;
      stats.loss_dse += lg.loss.dse_term;
      stats.loss_sse += lg.loss.sse_term;
      ++stats.batches;
    } catch (const Error& e) {
      fail(e.code(), "epoch " + std::to_string(epoch) + " batch " + std::to_string(b) + ": " +
                         e.detail());
    }
  }
  if (stats.batches > 0) {
    const double inv = 1.0 / static_cast<double>(stats.batches);
    stats.loss_total *= inv;
    stats.loss_hard *= inv;
    stats.loss_dse *= inv;
    stats.loss_sse *= inv;
  }
  return stats;
}

double evaluate_objective(const TwoTowerModel& model, const TrainingData& data,
                          const TrainConfig& cfg, int epoch, Mining mining) {
  ObjectiveConfig obj = objective_for(cfg, epoch);
  obj.mining = mining;
  const auto batches = chunk(data.dataset->train, cfg.batch_size);
  double total = 0.0;
  for (const auto& items : batches) {
    const ForwardState state = forward(model, data.gather_video(items), data.gather_text(items));
    auto margins = compute_expert_margins(data, items, state, cfg, cfg.experts);
    ExpertSlot dse;
    ExpertSlot sse;
    build_slots(margins, dse, sse);
    total += full_loss(similarity_matrix(state.video.output, state.text.output), dse, sse, obj).total;
  }
  return batches.empty() ? 0.0 : total / static_cast<double>(batches.size());
}

BidirectionalReport evaluate_split(const TwoTowerModel& model, const TrainingData& data,
                                   std::span<const std::size_t> items, std::span<const int> ks) {
  if (items.empty()) fail(ErrorCode::kEmptyInput, "evaluation split is empty");
  const ForwardState state = forward(model, data.gather_video(items), data.gather_text(items));
  return evaluate_bidirectional(similarity_matrix(state.video.output, state.text.output), ks);
}

std::string format_report_line(const EpochReport& report) {
  nlohmann::ordered_json j;
  j["epoch"] = report.stats.epoch;
  j["lambda"] = report.stats.lambda;
  j["loss_total"] = report.stats.loss_total;
  j["loss_hard"] = report.stats.loss_hard;
  j["loss_dse"] = report.stats.loss_dse;
  j["loss_sse"] = report.stats.loss_sse;
  for (const auto& [prefix, r] : {std::pair{"t2v", &report.metrics.text_to_video},
                                  std::pair{"v2t", &report.metrics.video_to_text}}) {
    for (const auto& [k, v] : r->r_at) j[std::string(prefix) + "_R" + std::to_string(k)] = v;
    j[std::string(prefix) + "_MdR"] = r->mdr;
  }
  j["rsum"] = report.metrics.rsum;
  return j.dump();
}

std::vector<MarginOrdering> margin_ordering(const TwoTowerModel& model, const TrainingData& data,
                                            const TrainConfig& cfg, int epoch) {
  const Dataset& ds = *data.dataset;
  if (!ds.labeled()) fail(ErrorCode::kInvalidArgument, "margin ordering needs concept labels");
  const ExpertToggles all;
  std::vector<MarginOrdering> out;
  for (ExpertKind k : {ExpertKind::kDseText, ExpertKind::kDseVideo, ExpertKind::kSseText,
                       ExpertKind::kSseVideo}) {
    out.push_back({k, 0.0, 0.0, 0, 0});
  }
  for (const auto& items : epoch_batches(ds, cfg, epoch)) {
    const ForwardState state = forward(model, data.gather_video(items), data.gather_text(items));
    const auto margins = compute_expert_margins(data, items, state, cfg, all);
    for (std::size_t e = 0; e < margins.size(); ++e) {
      auto& acc = out[e];
      for (std::size_t i = 0; i < items.size(); ++i) {
        for (std::size_t j = 0; j < items.size(); ++j) {
          if (i == j) continue;
          const double m = margins[e].margins(i, j);
          if (ds.concepts[items[i]] == ds.concepts[items[j]]) {
            acc.same_concept_mean += m;
            ++acc.same_pairs;
          } else {
            acc.cross_concept_mean += m;
            ++acc.cross_pairs;
          }
        }
      }
    }
  }
  for (auto& acc : out) {
    if (acc.same_pairs > 0) acc.same_concept_mean /= static_cast<double>(acc.same_pairs);
    if (acc.cross_pairs > 0) acc.cross_concept_mean /= static_cast<double>(acc.cross_pairs);
  }
  return out;
}

TwoTowerModel initial_model(const Dataset& ds, const TrainConfig& cfg) {
  TwoTowerModel model =
      init_params({ds.video_dim(), ds.text_dim(), cfg.hidden_dim, cfg.joint_dim}, cfg.seed);
  if (cfg.init_offset != 0.0) offset_output_bias(model, cfg.init_offset);
  return model;
}

TrainResult run_training(const TrainConfig& cfg, const Dataset& dataset,
                         const std::optional<std::filesystem::path>& out_dir,
                         const TrainHooks& hooks) {
  cfg.validate(dataset.train.size());
  if (dataset.train.size() < 2) fail(ErrorCode::kConfigError, "training split needs at least 2 items");
  const TrainingData data(dataset);
  TrainResult result;
  Checkpoint& ckpt = result.checkpoint;
  ckpt.model = initial_model(dataset, cfg);
  ckpt.adam.m.assign(parameter_count(ckpt.model), 0.0);
  ckpt.adam.v.assign(parameter_count(ckpt.model), 0.0);
  ckpt.seed = cfg.seed;
  ckpt.config_hash = cfg.config_hash();

  std::optional<std::ofstream> report_file;
  if (out_dir) {
    std::error_code ec;
    std::filesystem::create_directories(*out_dir, ec);
    if (ec) fail(ErrorCode::kIoError, "cannot create " + out_dir->string() + ": " + ec.message());
    if (cfg.epochs > 0) {
      report_file.emplace(*out_dir / "report.jsonl", std::ios::binary | std::ios::trunc);
      if (!*report_file) fail(ErrorCode::kIoError, "cannot write report in " + out_dir->string());
    }
  }
  const std::vector<std::size_t>& eval_items = dataset.val.empty() ? dataset.train : dataset.val;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    EpochReport report;
    report.stats = train_epoch(ckpt.model, ckpt.adam, data, cfg, epoch);
    report.metrics = evaluate_split(ckpt.model, data, eval_items, cfg.eval_ks);
    ckpt.epoch = epoch;
    if (report_file) {
      *report_file << format_report_line(report) << '\n';
      report_file->flush();
      if (!*report_file) fail(ErrorCode::kIoError, "report write failed");
    }
    if (hooks.after_epoch) hooks.after_epoch(report, ckpt.model);
    result.reports.push_back(std::move(report));
  }
  if (out_dir) write_checkpoint(*out_dir / "checkpoint.ckpt", ckpt);
  return result;
}

}  // namespace marginforge
