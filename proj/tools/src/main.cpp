#include <iostream>

#include "CLI11.hpp"
#include "marginforge_cli/commands.hpp"

namespace mc = marginforge::cli;

namespace {

void add_common(CLI::App* cmd, mc::CommonOptions& opts) {
  cmd->add_option("--config", opts.config, "key = value config file");
  cmd->add_option("--seed", opts.seed, "seed for the data, init and shuffle streams");
  cmd->add_option("--out", opts.out, "output directory");
  cmd->add_option("--data", opts.data, "dataset directory written by gen-data");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"marginforge: adaptive-margin two-tower training on synthetic data"};
  app.require_subcommand(1);

  mc::CommonOptions opts;
  mc::EvalOptions eval;
  mc::InspectOptions inspect;
  mc::SweepOptions sweep;

  auto* gen = app.add_subcommand("gen-data", "generate a synthetic dataset into --out");
  add_common(gen, opts);

  auto* train = app.add_subcommand("train", "train a model and write report, checkpoint and metrics");
  add_common(train, opts);

  auto* ev = app.add_subcommand("eval", "retrieval metrics for a checkpoint");
  add_common(ev, opts);
  ev->add_option("--checkpoint", eval.checkpoint, "checkpoint file")->required();
  ev->add_option("--split", eval.split, "train or val")->check(CLI::IsMember({"train", "val"}));

  auto* im = app.add_subcommand("inspect-margins", "per-pair distances and margins for one batch");
  add_common(im, opts);
  im->add_option("--checkpoint", inspect.checkpoint, "checkpoint file")->required();
  im->add_option("--split", inspect.split, "train or val")->check(CLI::IsMember({"train", "val"}));
  im->add_option("--batch", inspect.batch_index, "batch index within the split");
  im->add_option("--expert", inspect.expert, "dse_text, dse_video, sse_text, sse_video or all");

  auto* sw = app.add_subcommand("sweep", "train over seeds and parameter grids");
  add_common(sw, opts);
  sw->add_option("--seeds", sweep.seeds, "seeds, comma separated")->required()->delimiter(',');
  sw->add_option("--param", sweep.params, "key=v1,v2,... (up to 3)");

  CLI11_PARSE(app, argc, argv);

  if (gen->parsed()) return mc::cmd_gen_data(opts, std::cout, std::cerr);
  if (train->parsed()) return mc::cmd_train(opts, std::cout, std::cerr);
  if (ev->parsed()) return mc::cmd_eval(opts, eval, std::cout, std::cerr);
  if (im->parsed()) return mc::cmd_inspect_margins(opts, inspect, std::cout, std::cerr);
  if (sw->parsed()) return mc::cmd_sweep(opts, sweep, std::cout, std::cerr);
  return 2;
}
