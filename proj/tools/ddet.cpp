// Command-line driver: train / eval / ablate / bench around one flat-key
// config file. Flags override file values. Exit codes: 0 success, 1 usage or
// config error, 2 runtime/data error.

#include <cstdio>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ddet/config.hpp"
#include "ddet/trainer.hpp"

namespace {

struct CommonFlags {
  std::string config_path;
  std::optional<long long> seed;
  std::vector<std::string> overrides;  // key=value
  bool synthetic = false;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--config", f.config_path, "flat-key config file (key = value lines)");
  cmd->add_option("--seed", f.seed, "seed for training and degradation randomness");
  cmd->add_option("--set", f.overrides, "extra config override, key=value (repeatable)");
}

ddet::RunConfig load_config(const CommonFlags& f) {
  ddet::RunConfig cfg;
  if (!f.config_path.empty()) cfg = ddet::parse_config_file(f.config_path);
  for (const auto& kv : f.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) {
      throw ddet::ConfigError("--set expects key=value, got '" + kv + "'");
    }
    ddet::apply_override(cfg, ddet::detail::trim(kv.substr(0, eq)),
                         ddet::detail::trim(kv.substr(eq + 1)));
  }
  if (f.seed) {
    cfg.train.seed = static_cast<std::uint64_t>(*f.seed);
    cfg.degrade.seed = static_cast<std::uint64_t>(*f.seed);
  }
  if (f.synthetic) {
    cfg.train.synthetic = true;
    cfg.eval.synthetic = true;
  }
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"DDet dual-path super-resolution: dynamic per-pixel filtering with a detail branch"};
  app.require_subcommand(1);

  CommonFlags train_f, eval_f, ablate_f, bench_f;
  std::optional<int> train_steps, ablate_steps;

  CLI::App* train = app.add_subcommand("train", "train a model (L1 loss, Adam)");
  add_common(train, train_f);
  train->add_flag("--synthetic", train_f.synthetic, "self-generate training pairs");
  train->add_option("--steps", train_steps, "override train.steps");

  CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint over a split");
  add_common(eval, eval_f);
  eval->add_flag("--synthetic", eval_f.synthetic, "self-generate eval pairs");
  std::string eval_checkpoint, eval_split, eval_model;
  std::optional<int> eval_shave;
  bool eval_dump = false;
  eval->add_option("--checkpoint", eval_checkpoint, "checkpoint path (default <out_dir>/last.ddet)");
  eval->add_option("--split", eval_split, "dataset split under paths.data_root");
  eval->add_option("--model", eval_model, "'ddet' or 'none' (identity passthrough)");
  eval->add_option("--shave", eval_shave, "border pixels to crop before metrics");
  eval->add_flag("--dump-images", eval_dump, "write restored PNGs");

  CLI::App* ablate = app.add_subcommand("ablate", "train/evaluate the four component variants");
  add_common(ablate, ablate_f);
  ablate->add_option("--steps", ablate_steps, "override ablate.steps");

  CLI::App* bench = app.add_subcommand("bench", "time forward passes and report parameter sizes");
  add_common(bench, bench_f);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    app.exit(e);
    return 1;
  }

  try {
    if (train->parsed()) {
      ddet::RunConfig cfg = load_config(train_f);
      if (train_steps) cfg.train.steps = *train_steps;
      return ddet::run_train(cfg);
    }
    if (eval->parsed()) {
      ddet::RunConfig cfg = load_config(eval_f);
      if (!eval_checkpoint.empty()) cfg.eval.checkpoint = eval_checkpoint;
      if (!eval_split.empty()) cfg.eval.split = eval_split;
      if (!eval_model.empty()) {
        if (eval_model != "ddet" && eval_model != "none") {
          throw ddet::ConfigError("--model expects ddet or none, got '" + eval_model + "'");
        }
        cfg.eval.model = eval_model;
      }
      if (eval_shave) cfg.eval.shave = *eval_shave;
      if (eval_dump) cfg.eval.dump_images = true;
      return ddet::run_eval(cfg);
    }
    if (ablate->parsed()) {
      ddet::RunConfig cfg = load_config(ablate_f);
      if (ablate_steps) cfg.ablate.steps = *ablate_steps;
      return ddet::run_ablate(cfg);
    }
    if (bench->parsed()) {
      return ddet::run_bench(load_config(bench_f));
    }
  } catch (const ddet::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 1;
}
