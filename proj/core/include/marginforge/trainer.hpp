#ifndef MARGINFORGE_TRAINER_HPP_
#define MARGINFORGE_TRAINER_HPP_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "marginforge/data.hpp"
#include "marginforge/eval.hpp"
#include "marginforge/experts.hpp"
#include "marginforge/margin.hpp"
#include "marginforge/model.hpp"
#include "marginforge/objective.hpp"

namespace marginforge {

struct ExpertToggles {
  bool dse_text = true;
  bool dse_video = true;
  bool sse_text = true;
  bool sse_video = true;

  bool enabled(ExpertKind kind) const;
  bool any() const { return dse_text || dse_video || sse_text || sse_video; }
};

struct TrainConfig {
  double alpha = 0.05;
  double beta = 0.04;
  int lambda_start_epoch = 20;
  double lambda_start_value = 0.1;
  int lambda_end_epoch = 50;
  int warmup_epochs = 1;
  int epochs = 60;
  std::size_t batch_size = 64;
  double learning_rate = 5e-4;
  std::uint64_t seed = 0;
  MiningCriterion mining_criterion = MiningCriterion::kCombined;
  ExpertToggles experts;
  std::size_t hidden_dim = 0;
  std::size_t joint_dim = 16;
  double init_offset = 0.0;  // added to output biases after init
  std::vector<int> eval_ks = {1, 5, 10};

  /// Throws ConfigError; dataset_size 0 skips the batch-size check.
  void validate(std::size_t dataset_size = 0) const;
  /// Stable text rendering of every field, the input to config_hash().
  std::string fingerprint() const;
  std::uint64_t config_hash() const;
};

/// 0 before the start epoch, exponential from the start value up to 1.0 at
/// the end epoch, 1.0 afterwards. Epochs are 1-indexed.
double lambda_schedule(int epoch, const TrainConfig& cfg);

struct AdamState {
  Vector m;
  Vector v;
  std::uint64_t step = 0;

  friend bool operator==(const AdamState&, const AdamState&) = default;
};

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state,
               double learning_rate, const AdamConfig& adam = {});

struct Checkpoint {
  TwoTowerModel model;
  AdamState adam;
  int epoch = 0;
  std::uint64_t seed = 0;
  std::uint64_t config_hash = 0;

  friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

// CKPT1 text format, 17 significant digits per value.
std::string format_checkpoint(const Checkpoint& ckpt);
Checkpoint parse_checkpoint(std::string_view text, std::string_view origin = "<memory>");
void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint read_checkpoint(const std::filesystem::path& path);

/// Distances and margins for one expert on one batch.
struct ExpertMargins {
  ExpertKind kind = ExpertKind::kDseText;
  DistanceMatrix distances;
  MarginMatrix margins;
};

/// Precomputed per-item model inputs for a dataset.
struct TrainingData {
  const Dataset* dataset = nullptr;
  Matrix video_inputs;  // pooled frames
  Matrix text_inputs;

  explicit TrainingData(const Dataset& ds);
  Matrix gather_video(std::span<const std::size_t> items) const;
  Matrix gather_text(std::span<const std::size_t> items) const;
};

/// Computes every enabled expert's distances and margins for `items`, using
/// `state` for the dynamic experts.
std::vector<ExpertMargins> compute_expert_margins(const TrainingData& data,
                                                  std::span<const std::size_t> items,
                                                  const ForwardState& state,
                                                  const TrainConfig& cfg,
                                                  const ExpertToggles& which);

/// Batches of the train split for one epoch, in the seed-determined order.
std::vector<std::vector<std::size_t>> epoch_batches(const Dataset& ds, const TrainConfig& cfg,
                                                    int epoch);

struct EpochStats {
  int epoch = 0;
  double lambda = 0.0;
  Mining mining = Mining::kHardest;
  double loss_total = 0.0;
  double loss_hard = 0.0;
  double loss_dse = 0.0;
  double loss_sse = 0.0;
  std::size_t batches = 0;
};

EpochStats train_epoch(TwoTowerModel& model, AdamState& adam, const TrainingData& data,
                       const TrainConfig& cfg, int epoch);

/// Full objective over fixed (unshuffled) train batches without updating
/// anything; `mining` overrides the epoch's own choice.
double evaluate_objective(const TwoTowerModel& model, const TrainingData& data,
                          const TrainConfig& cfg, int epoch, Mining mining);

BidirectionalReport evaluate_split(const TwoTowerModel& model, const TrainingData& data,
                                   std::span<const std::size_t> items, std::span<const int> ks);

struct EpochReport {
  EpochStats stats;
  BidirectionalReport metrics;
};

/// One JSON object per line; fields epoch, lambda, loss_*, t2v_R<K>, t2v_MdR,
/// v2t_R<K>, v2t_MdR, rsum.
std::string format_report_line(const EpochReport& report);

/// Mean margin over same-concept versus cross-concept negative pairs.
struct MarginOrdering {
  ExpertKind kind = ExpertKind::kDseText;
  double same_concept_mean = 0.0;
  double cross_concept_mean = 0.0;
  std::size_t same_pairs = 0;
  std::size_t cross_pairs = 0;
};

std::vector<MarginOrdering> margin_ordering(const TwoTowerModel& model, const TrainingData& data,
                                            const TrainConfig& cfg, int epoch);

TwoTowerModel initial_model(const Dataset& ds, const TrainConfig& cfg);

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<EpochReport> reports;
};

struct TrainHooks {
  std::function<void(const EpochReport&, const TwoTowerModel&)> after_epoch;
};

/// Warm-up then main epochs, evaluating on the validation split (or the
/// train split when no validation items exist) after every epoch. With an
/// out_dir, writes report.jsonl and checkpoint.ckpt there.
TrainResult run_training(const TrainConfig& cfg, const Dataset& dataset,
                         const std::optional<std::filesystem::path>& out_dir = std::nullopt,
                         const TrainHooks& hooks = {});

}  // namespace marginforge

#endif  // MARGINFORGE_TRAINER_HPP_
