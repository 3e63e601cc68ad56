#pragma once

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <thread>
#include <vector>

#include "ddet/adam.hpp"
#include "ddet/checkpoint.hpp"
#include "ddet/config.hpp"
#include "ddet/data.hpp"
#include "ddet/metrics.hpp"
#include "ddet/model.hpp"
#include "ddet/png_io.hpp"

namespace ddet {

// ---------------------------------------------------------------------------
// Synthetic pair generation: procedural HR images pushed through the
// degradation pipeline, each with its own derived seed.
// ---------------------------------------------------------------------------
template <typename T>
std::vector<ImagePair<T>> synth_pairs(int count, int size, const DegradeConfig& dcfg,
                                      std::uint64_t seed, const std::string& prefix) {
  if (count < 1) throw ConfigError("synthetic pair count must be >= 1");
  if (size < 16) throw ConfigError("synthetic image size must be >= 16");
  std::vector<ImagePair<T>> pairs;
  pairs.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    Tensor<T> hr = synth_image<T>(mix_seed(seed, 0x531u + static_cast<std::uint64_t>(i)),
                                  size, size);
    DegradeConfig d = dcfg;
    d.seed = mix_seed(seed, 0xD300u + static_cast<std::uint64_t>(i));
    char id[64];
    std::snprintf(id, sizeof(id), "%s%03d", prefix.c_str(), i);
    ImagePair<T> p = degrade(hr, d, id);
    pairs.push_back(std::move(p));
  }
  return pairs;
}

namespace detail {

template <typename T>
std::pair<Tensor<T>, Tensor<T>> concat_pairs(const std::vector<ImagePair<T>>& batch) {
  const Shape s0 = batch.front().lr.shape();
  const int b = static_cast<int>(batch.size());
  Tensor<T> lr(Shape{b, s0.c, s0.h, s0.w});
  Tensor<T> hr(Shape{b, s0.c, s0.h, s0.w});
  const std::size_t per = s0.numel();
  for (int i = 0; i < b; ++i) {
    std::copy_n(batch[i].lr.data(), per, lr.data() + per * i);
    std::copy_n(batch[i].hr.data(), per, hr.data() + per * i);
  }
  return {std::move(lr), std::move(hr)};
}

template <typename T>
Tensor<T> clamp01(const Tensor<T>& t) {
  Tensor<T> out = t.clone();
  for (auto& v : out.vec()) v = v < T{0} ? T{0} : (v > T{1} ? T{1} : v);
  return out;
}

// Round-robin over the eligible pool with seeded crop offsets: every pool
// image appears once per batch-size window, so small-pool training sees the
// whole set at the same rate instead of a with-replacement multiset.
template <typename T>
std::vector<ImagePair<T>> cycle_patches(const std::vector<ImagePair<T>>& pairs, int patch,
                                        int batch, int step, std::uint64_t seed) {
  if (patch < 4 || patch % 4 != 0) {
    throw ConfigError("cycle sampler: patch size must be a positive multiple of 4, got " +
                      std::to_string(patch));
  }
  std::vector<std::size_t> eligible;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const Shape s = pairs[i].lr.shape();
    if (s.h >= patch && s.w >= patch) eligible.push_back(i);
  }
  if (eligible.empty()) throw Error("cycle sampler: no image large enough for the patch size");

  Rng rng(mix_seed(seed, 1000003u + static_cast<std::uint64_t>(step)));
  std::vector<ImagePair<T>> out;
  out.reserve(static_cast<std::size_t>(batch));
  for (int j = 0; j < batch; ++j) {
    const std::size_t slot = (static_cast<std::size_t>(step - 1) * batch + j) % eligible.size();
    const ImagePair<T>& p = pairs[eligible[slot]];
    const Shape s = p.lr.shape();
    const int y0 = static_cast<int>(rng.below(static_cast<std::uint64_t>(s.h - patch) + 1));
    const int x0 = static_cast<int>(rng.below(static_cast<std::uint64_t>(s.w - patch) + 1));
    auto crop = [&](const Tensor<T>& t) {
      Tensor<T> c(Shape{s.n, s.c, patch, patch});
      for (int b = 0; b < s.n; ++b)
        for (int ch = 0; ch < s.c; ++ch)
          for (int y = 0; y < patch; ++y)
            for (int x = 0; x < patch; ++x) c.at(b, ch, y, x) = t.at(b, ch, y0 + y, x0 + x);
      return c;
    };
    out.push_back(ImagePair<T>{crop(p.lr), crop(p.hr), p.scene_id, p.nominal_scale});
  }
  return out;
}

}  // namespace detail

// Mean RGB PSNR of the model output over a pool of pairs. Bit-identical
// outputs (which cannot occur for a real model) count as a 99 dB cap so the
// mean stays numeric.
template <typename T>
double pool_psnr(const ModelConfig& mcfg, const ModelParams<T>& params,
                 const std::vector<ImagePair<T>>& pool) {
  double sum = 0.0;
  for (const auto& p : pool) {
    Tensor<T> pred = detail::clamp01(ddet_forward(p.lr, params, mcfg));
    const PsnrResult r = psnr(pred, p.hr, PsnrMode::kRgb);
    sum += r.identical ? 99.0 : r.db;
  }
  return sum / static_cast<double>(pool.size());
}

struct TrainResult {
  int steps_run = 0;
  double final_loss = 0.0;
  double final_psnr = 0.0;
  bool early_stopped = false;
};

// ---------------------------------------------------------------------------
// L1/Adam training loop. Each step draws an aligned random patch batch from
// the pool, runs forward/backward, and applies one Adam update. Logs
// `step,loss,psnr` (PSNR filled on eval steps), checkpoints on schedule, and
// optionally stops early once the pool PSNR reaches stop_psnr. A non-finite
// loss aborts, leaving the last written checkpoint in place.
// ---------------------------------------------------------------------------
template <typename T>
TrainResult train_loop(const ModelConfig& mcfg, ModelParams<T>& params,
                       const std::vector<ImagePair<T>>& pool, const RunConfig::Train& tcfg,
                       const std::string& out_dir, bool write_artifacts,
                       const std::string& log_name = "train_log.csv") {
  namespace fs = std::filesystem;
  mcfg.validate();
  if (tcfg.steps < 0) throw ConfigError("train.steps must be >= 0");
  if (tcfg.batch < 1) throw ConfigError("train.batch must be >= 1");
  if (tcfg.warmup < 0) throw ConfigError("train.warmup must be >= 0");
  if (tcfg.hold < 0) throw ConfigError("train.hold must be >= 0");

  std::ofstream log;
  if (write_artifacts) {
    fs::create_directories(out_dir);
    log.open(fs::path(out_dir) / log_name, std::ios::trunc);
    if (!log) throw IoError("cannot open training log in '" + out_dir + "'");
    log << "step,loss,psnr\n";
  }
  auto save = [&](const std::string& name) {
    if (write_artifacts) {
      checkpoint_save(params, AdamState<T>{}, (fs::path(out_dir) / name).string());
    }
  };
  auto save_with_state = [&](const AdamState<T>& st, const std::string& name) {
    if (write_artifacts) {
      checkpoint_save(params, st, (fs::path(out_dir) / name).string());
    }
  };

  AdamState<T> state;
  TrainResult result;
  if (tcfg.steps == 0) {
    save("last.ddet");
    return result;
  }

  for (int step = 1; step <= tcfg.steps; ++step) {
    const std::vector<ImagePair<T>> batch =
        tcfg.sampler == "cycle"
            ? detail::cycle_patches(pool, tcfg.patch, tcfg.batch, step, tcfg.seed)
            : sample_patches(pool, tcfg.patch, tcfg.batch,
                             mix_seed(tcfg.seed, 1000003u + static_cast<std::uint64_t>(step)));
    auto [lr_batch, hr_batch] = detail::concat_pairs(batch);

    GradTape<T> tape;
    Tensor<T> pred = ddet_forward(lr_batch, params, mcfg, &tape);
    Tensor<T> loss = l1_loss(pred, hr_batch, &tape);
    const double loss_val = static_cast<double>(loss.data()[0]);
    if (!std::isfinite(loss_val)) {
      throw NumericError("non-finite loss at step " + std::to_string(step) +
                         "; last checkpoint retained");
    }
    params.zero_grads();
    tape.backward(loss);
    double lr = tcfg.lr;
    if (tcfg.warmup > 0 && step <= tcfg.warmup) {
      // Linear ramp; Adam's early normalized steps are otherwise large enough
      // to wreck a careful initialization before learning starts.
      lr = tcfg.lr * static_cast<double>(step) / static_cast<double>(tcfg.warmup);
    } else if (tcfg.lr_decay == "cosine" && step > tcfg.warmup + tcfg.hold) {
      // Trapezoid tail: after the optional flat hold, anneal to lr/100 over
      // the remaining budget; endgame precision needs the small steps.
      const int s0 = tcfg.warmup + tcfg.hold;
      const double t =
          static_cast<double>(step - 1 - s0) / std::max(1, tcfg.steps - 1 - s0);
      lr = 0.01 * tcfg.lr + 0.99 * tcfg.lr * 0.5 * (1.0 + std::cos(3.141592653589793 * t));
    }
    adam_step(params.tensors, state, lr, tcfg.beta1, tcfg.beta2, tcfg.eps);

    result.steps_run = step;
    result.final_loss = loss_val;

    const bool eval_now = tcfg.eval_every > 0 &&
                          (step % tcfg.eval_every == 0 || step == tcfg.steps);
    char row[96];
    if (eval_now) {
      result.final_psnr = pool_psnr(mcfg, params, pool);
      std::snprintf(row, sizeof(row), "%d,%.9g,%.6f", step, loss_val, result.final_psnr);
    } else {
      std::snprintf(row, sizeof(row), "%d,%.9g,", step, loss_val);
    }
    if (write_artifacts) log << row << "\n";

    if (tcfg.checkpoint_every > 0 && step % tcfg.checkpoint_every == 0) {
      char name[32];
      std::snprintf(name, sizeof(name), "ckpt_%06d.ddet", step);
      save_with_state(state, name);
    }
    if (eval_now && tcfg.stop_psnr > 0.0 && result.final_psnr >= tcfg.stop_psnr) {
      result.early_stopped = true;
      break;
    }
  }
  save_with_state(state, "last.ddet");
  return result;
}

// ---------------------------------------------------------------------------
// Command implementations. These throw on failure; the CLI maps exception
// types to exit codes.
// ---------------------------------------------------------------------------

template <typename T = float>
int run_train(const RunConfig& cfg) {
  cfg.model.validate();
  std::vector<ImagePair<T>> pool;
  if (cfg.train.synthetic) {
    pool = synth_pairs<T>(cfg.train.synth_count, cfg.train.synth_size, cfg.degrade,
                          cfg.train.seed, "synth");
  } else {
    namespace fs = std::filesystem;
    const fs::path root = fs::path(cfg.paths.data_root) / "train";
    pool = load_pair_dir<T>((root / "lr").string(), (root / "hr").string(), cfg.degrade.scale);
    if (pool.empty()) throw IoError("no training pairs under '" + root.string() + "'");
  }

  ModelParams<T> params = init_params<T>(cfg.model, cfg.train.seed);
  const ParamCount pc = param_count(params);
  std::printf("model: %zu parameters (%.2f MB fp32), %d training pairs\n", pc.elements,
              static_cast<double>(pc.bytes_fp32) / (1024.0 * 1024.0), (int)pool.size());

  const TrainResult r = train_loop(cfg.model, params, pool, cfg.train, cfg.paths.out_dir, true);
  if (r.early_stopped) {
    std::printf("early stop at step %d: pool PSNR %.2f dB >= %.2f dB\n", r.steps_run,
                r.final_psnr, cfg.train.stop_psnr);
  }
  std::printf("trained %d steps: final loss %.6g, pool PSNR %.2f dB\n", r.steps_run,
              r.final_loss, r.final_psnr);
  std::printf("artifacts in %s (train_log.csv, last.ddet)\n", cfg.paths.out_dir.c_str());
  return 0;
}

template <typename T = float>
std::vector<EvalRecord> eval_pairs(const std::vector<ImagePair<T>>& pairs,
                                   const ModelConfig& mcfg, const ModelParams<T>* params,
                                   PsnrMode mode, int shave, const std::string& dump_dir) {
  namespace fs = std::filesystem;
  if (!dump_dir.empty()) fs::create_directories(dump_dir);
  std::vector<EvalRecord> records;
  records.reserve(pairs.size());
  for (const auto& p : pairs) {
    const auto t0 = std::chrono::steady_clock::now();
    Tensor<T> pred = params ? ddet_forward(p.lr, *params, mcfg) : p.lr;
    const auto t1 = std::chrono::steady_clock::now();
    pred = detail::clamp01(pred);

    const Tensor<T> a = shave ? shave_border(pred, shave) : pred;
    const Tensor<T> b = shave ? shave_border(p.hr, shave) : p.hr;
    EvalRecord rec;
    rec.image_id = p.scene_id;
    const PsnrResult pr = psnr(a, b, mode);
    rec.psnr_identical = pr.identical;
    rec.psnr_db = pr.db;
    rec.ssim_val = ssim(a, b);
    rec.forward_time_s = std::chrono::duration<double>(t1 - t0).count();
    records.push_back(std::move(rec));

    if (!dump_dir.empty()) {
      png_write((fs::path(dump_dir) / (p.scene_id + ".png")).string(), pred);
    }
  }
  return records;
}

template <typename T = float>
int run_eval(const RunConfig& cfg) {
  namespace fs = std::filesystem;
  cfg.model.validate();
  std::vector<ImagePair<T>> pairs;
  if (cfg.eval.synthetic) {
    pairs = synth_pairs<T>(cfg.train.synth_count, cfg.train.synth_size, cfg.degrade,
                           mix_seed(cfg.train.seed, 0xE7A1u), "synth");
  } else {
    const fs::path root = fs::path(cfg.paths.data_root) / cfg.eval.split;
    pairs = load_pair_dir<T>((root / "lr").string(), (root / "hr").string(), cfg.degrade.scale);
    if (pairs.empty()) throw IoError("no eval pairs under '" + root.string() + "'");
  }

  ModelParams<T> params;
  const bool identity = cfg.eval.model == "none";
  if (!identity) {
    const std::string ckpt = cfg.eval.checkpoint.empty()
                                 ? (fs::path(cfg.paths.out_dir) / "last.ddet").string()
                                 : cfg.eval.checkpoint;
    auto [loaded, state] = checkpoint_load<T>(ckpt);
    validate_against_config(loaded, cfg.model);
    params = std::move(loaded);
  }

  const PsnrMode mode = cfg.eval.mode == "rgb" ? PsnrMode::kRgb : PsnrMode::kY;
  fs::create_directories(cfg.paths.out_dir);
  const std::string dump_dir =
      cfg.eval.dump_images ? (fs::path(cfg.paths.out_dir) / "restored").string() : "";
  const std::vector<EvalRecord> records =
      eval_pairs(pairs, cfg.model, identity ? nullptr : &params, mode, cfg.eval.shave, dump_dir);

  char comment[160];
  std::snprintf(comment, sizeof(comment), "psnr_mode=%s shave=%d model=%s",
                psnr_mode_name(mode), cfg.eval.shave, identity ? "none" : "ddet");
  const std::string csv_path =
      (fs::path(cfg.paths.out_dir) / ("eval_" + cfg.eval.split + ".csv")).string();
  write_eval_csv(csv_path, records, comment);

  const EvalSummary s = summarize(records);
  std::printf("# %s\n", comment);
  std::printf("%zu images: mean PSNR %.4f dB (%zu identical skipped), mean SSIM %.6f\n",
              records.size(), s.mean_psnr_db, s.identical, s.mean_ssim);
  std::printf("per-image records: %s\n", csv_path.c_str());
  return 0;
}

template <typename T = float>
int run_ablate(const RunConfig& cfg) {
  namespace fs = std::filesystem;
  const std::vector<ImagePair<T>> train_pool = synth_pairs<T>(
      cfg.ablate.train_count, cfg.train.synth_size, cfg.degrade, cfg.train.seed, "train");
  const std::vector<ImagePair<T>> eval_pool =
      synth_pairs<T>(cfg.ablate.eval_count, cfg.train.synth_size, cfg.degrade,
                     mix_seed(cfg.train.seed, 0xE7A1u), "eval");
  const PsnrMode mode = cfg.eval.mode == "rgb" ? PsnrMode::kRgb : PsnrMode::kY;

  RunConfig::Train tcfg = cfg.train;
  tcfg.steps = cfg.ablate.steps;
  tcfg.stop_psnr = 0.0;

  const AblationStage stages[] = {AblationStage::kPlain, AblationStage::kPostRefine,
                                  AblationStage::kCdm, AblationStage::kMda};
  std::string table = "| Settings | PSNR (dB) |\n| --- | --- |\n";
  double plain_psnr = 0.0, full_psnr = 0.0;
  for (const AblationStage stage : stages) {
    const ModelConfig mcfg = ablation_config(stage);
    // Shared init seed: identically named sub-networks start from the same
    // weights in every variant.
    ModelParams<T> params = init_params<T>(mcfg, cfg.train.seed);
    train_loop(mcfg, params, train_pool, tcfg, cfg.paths.out_dir, false);
    const std::vector<EvalRecord> recs =
        eval_pairs(eval_pool, mcfg, &params, mode, cfg.eval.shave, "");
    const double score = summarize(recs).mean_psnr_db;
    if (stage == AblationStage::kPlain) plain_psnr = score;
    if (stage == AblationStage::kMda) full_psnr = score;
    char row[64];
    std::snprintf(row, sizeof(row), "| %s | %.2f |\n", ablation_label(stage), score);
    table += row;
    std::printf("%s: %.2f dB (%d steps)\n", ablation_label(stage), score, tcfg.steps);
  }

  if (full_psnr < plain_psnr) {
    std::fprintf(stderr,
                 "warning: full config scored %.2f dB below plain %.2f dB at this budget; "
                 "ordering is only claimed at full training scale\n",
                 full_psnr, plain_psnr);
  }
  fs::create_directories(cfg.paths.out_dir);
  const std::string md_path = (fs::path(cfg.paths.out_dir) / "ablation.md").string();
  std::ofstream md(md_path, std::ios::trunc);
  if (!md) throw IoError("cannot open '" + md_path + "'");
  md << table;
  std::printf("\n%s\ntable: %s\n", table.c_str(), md_path.c_str());
  return 0;
}

inline std::string machine_info() {
  std::string cpu = "unknown cpu";
  std::ifstream in("/proc/cpuinfo");
  std::string line;
  while (std::getline(in, line)) {
    if (line.rfind("model name", 0) == 0) {
      const auto colon = line.find(':');
      if (colon != std::string::npos) cpu = detail::trim(line.substr(colon + 1));
      break;
    }
  }
  return cpu + ", " + std::to_string(std::thread::hardware_concurrency()) + " hw threads";
}

template <typename T = float>
int run_bench(const RunConfig& cfg) {
  namespace fs = std::filesystem;
  std::vector<std::pair<std::string, ModelConfig>> configs;
  std::stringstream ss(cfg.bench.configs);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = detail::trim(item);
    if (item == "full") {
      configs.emplace_back("DDet (full)", ModelConfig{});
    } else if (item.rfind("kpn", 0) == 0) {
      const int k = static_cast<int>(detail::parse_int_value(item.substr(3), "bench.configs"));
      configs.emplace_back("KPN(" + std::to_string(k) + ")", ModelConfig::kpn(k));
    } else {
      throw ConfigError("bench.configs: unknown entry '" + item + "' (use full or kpn<K>)");
    }
  }
  if (configs.empty()) throw ConfigError("bench.configs is empty");
  if (cfg.bench.repeats < 1 || cfg.bench.warmups < 0) {
    throw ConfigError("bench.repeats must be >= 1 and bench.warmups >= 0");
  }

  const int size = cfg.bench.input_size;
  Rng rng(mix_seed(cfg.train.seed, 0xBE7Cu));
  Tensor<T> input = Tensor<T>::random_uniform(Shape{1, 3, size, size}, rng);

  std::string table =
      "| Model | Params (M) | Size (MB fp32) | Time (s/frame) | Max/median |\n"
      "| --- | --- | --- | --- | --- |\n";
  std::printf("# %s; input %dx%d, median of %d runs after %d warmups\n", machine_info().c_str(),
              size, size, cfg.bench.repeats, cfg.bench.warmups);
  for (const auto& [label, mcfg] : configs) {
    mcfg.validate();
    ModelParams<T> params = init_params<T>(mcfg, cfg.train.seed);
    for (int i = 0; i < cfg.bench.warmups; ++i) ddet_forward(input, params, mcfg);
    std::vector<double> times;
    times.reserve(static_cast<std::size_t>(cfg.bench.repeats));
    for (int i = 0; i < cfg.bench.repeats; ++i) {
      const auto t0 = std::chrono::steady_clock::now();
      ddet_forward(input, params, mcfg);
      const auto t1 = std::chrono::steady_clock::now();
      times.push_back(std::chrono::duration<double>(t1 - t0).count());
    }
    std::sort(times.begin(), times.end());
    const double median = times[times.size() / 2];
    const double ratio = times.back() / median;
    const ParamCount pc = param_count(params);
    char row[160];
    std::snprintf(row, sizeof(row), "| %s | %.3f | %.2f | %.4f | %.2f |\n", label.c_str(),
                  static_cast<double>(pc.elements) / 1e6,
                  static_cast<double>(pc.bytes_fp32) / (1024.0 * 1024.0), median, ratio);
    table += row;
    std::printf("%s: %zu params, median %.4f s/frame\n", label.c_str(), pc.elements, median);
  }

  fs::create_directories(cfg.paths.out_dir);
  const std::string md_path = (fs::path(cfg.paths.out_dir) / "bench.md").string();
  std::ofstream md(md_path, std::ios::trunc);
  if (!md) throw IoError("cannot open '" + md_path + "'");
  md << "# " << machine_info() << "\n\n" << table;
  std::printf("\n%s\ntable: %s\n", table.c_str(), md_path.c_str());
  return 0;
}

}  // namespace ddet
