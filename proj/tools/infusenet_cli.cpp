#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "infusenet/pipeline.hpp"

namespace {

struct Overrides {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<double> lambda;
  std::optional<int> iters;
  std::optional<double> tol;
  std::optional<int> levels;
  std::optional<double> alpha;
  std::optional<int> depth;
  bool decoded = false;
  std::optional<int> epochs;
  int saliency_per_fold = 2;
};

ifn::RunConfig resolve(const Overrides& o) {
  nlohmann::json j = nlohmann::json::object();
  ifn::RunConfig base = o.config.empty() ? ifn::config_from_json(j) : ifn::parse_config(o.config);
  j = base.to_json();
  if (!o.out.empty()) j["paths"]["out"] = o.out;
  if (o.seed) j["seed"] = *o.seed;
  if (o.lambda) j["flow"]["lambda"] = *o.lambda;
  if (o.iters) j["flow"]["iters"] = *o.iters;
  if (o.tol) j["flow"]["tol"] = *o.tol;
  if (o.levels) j["flow"]["levels"] = *o.levels;
  if (o.alpha) j["magnify"]["alpha"] = *o.alpha;
  if (o.depth) j["magnify"]["depth"] = *o.depth;
  if (o.decoded) j["magnify"]["decoded"] = true;
  if (o.epochs) j["train"]["epochs"] = *o.epochs;
  return ifn::config_from_json(j);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Micro-expression AU detection pipeline: corpus generation, flow, magnification, "
               "two-stream training and leave-one-database-out evaluation."};
  app.require_subcommand(1, 1);
  app.fallthrough();

  Overrides o;
  app.add_option("--config", o.config, "JSON run config; omitted keys take their defaults")->check(CLI::ExistingFile);
  app.add_option("--out", o.out, "Run directory (overrides paths.out)");
  app.add_option("--seed", o.seed, "Root seed (overrides seed)");
  app.add_option("--lambda", o.lambda, "Flow smoothness weight");
  app.add_option("--iters", o.iters, "Flow sweeps per warp");
  app.add_option("--tol", o.tol, "Flow convergence tolerance");
  app.add_option("--levels", o.levels, "Flow pyramid levels");
  app.add_option("--alpha", o.alpha, "Magnification factor");
  app.add_option("--depth", o.depth, "Pyramid depth of the magnification codec");
  app.add_flag("--decoded", o.decoded, "Use decoded magnified images instead of latent levels");
  app.add_option("--epochs", o.epochs, "Training epochs (overrides train.epochs)");

  const char* help[] = {"Generate the synthetic corpus",
                        "Compute optical flow images",
                        "Write magnified latent pairs (or decoded PGMs with --decoded)",
                        "Train one model per leave-one-database-out fold",
                        "Evaluate fold checkpoints and write the protocol report",
                        "Run the magnification-factor and fusion-mode sweeps",
                        "Write saliency heat maps for held-out samples"};
  std::size_t i = 0;
  for (const auto& name : ifn::pipeline_commands()) {
    auto* sub = app.add_subcommand(name, help[i++]);
    if (name == "saliency") {
      sub->add_option("--per-fold", o.saliency_per_fold, "Held-out samples per fold")->check(CLI::NonNegativeNumber);
    }
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() != 0) std::cerr << app.help() << '\n';
    return app.exit(e);
  }

  const std::string command = app.get_subcommands().front()->get_name();
  try {
    const ifn::RunConfig cfg = resolve(o);
    ifn::dispatch(command, cfg, std::cout, {o.saliency_per_fold});
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
