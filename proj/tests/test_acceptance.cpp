#include <gtest/gtest.h>

#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <sys/wait.h>
#include <vector>

#include "ddet/checkpoint.hpp"
#include "ddet/config.hpp"
#include "ddet/data.hpp"
#include "ddet/dynfilter.hpp"
#include "ddet/gradcheck.hpp"
#include "ddet/metrics.hpp"
#include "ddet/model.hpp"
#include "ddet/ops.hpp"
#include "ddet/rng.hpp"
#include "ddet/trainer.hpp"

// Acceptance gates for the whole project. Each test is one criterion and
// prints a single machine-greppable verdict line with its pinned tolerances
// and the measured values; the assertions mirror that line. Runtime bounds
// are asserted where the criterion pins one.

#ifndef DDET_CLI_PATH
#error "DDET_CLI_PATH must point at the command-line binary"
#endif

namespace ddet {
namespace {

namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

void verdict(int idx, const char* name, bool pass, const std::string& detail) {
  std::printf("[acceptance %d/9] %s: %s (%s)\n", idx, name, pass ? "PASS" : "FAIL",
              detail.c_str());
  std::fflush(stdout);
}

template <typename T>
void fill_with(Tensor<T>& t, T v) {
  for (auto& x : t.vec()) x = v;
}

std::vector<double> coeffs_for(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> c(n);
  for (auto& v : c) v = rng.uniform(-1.0, 1.0);
  return c;
}

std::string fmt(const char* f, ...) {
  char buf[256];
  va_list ap;
  va_start(ap, f);
  std::vsnprintf(buf, sizeof(buf), f, ap);
  va_end(ap);
  return buf;
}

bool bit_equal(const Tensor<double>& a, const Tensor<double>& b) {
  return a.shape() == b.shape() &&
         std::memcmp(a.data(), b.data(), a.numel() * sizeof(double)) == 0;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) return {};
  return std::string(std::istreambuf_iterator<char>(in), {});
}

fs::path fresh_dir(const char* leaf) {
  const fs::path d = fs::temp_directory_path() / leaf;
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

int run_cli(const std::string& args, const fs::path& log) {
  const std::string cmd =
      std::string(DDET_CLI_PATH) + " " + args + " > " + log.string() + " 2>&1";
  const int rc = std::system(cmd.c_str());
  return rc < 0 ? rc : WEXITSTATUS(rc);
}

// --------------------------------------------------------------------------
// 1. Finite-difference gradient checks over every differentiable operation,
//    64-bit, inputs <= 16x16. Per-op tolerance 1e-3, end-to-end 1e-2,
//    total runtime < 2 minutes.
// --------------------------------------------------------------------------
TEST(Acceptance, GradientChecks) {
  const auto t0 = Clock::now();
  const double kOpTol = 1e-3, kE2eTol = 1e-2;
  double worst = 0.0;
  bool all_pass = true;
  auto note = [&](const char* op, const GradCheckReport& r, double tol) {
    worst = std::max(worst, r.max_rel_err);
    all_pass = all_pass && r.pass;
    EXPECT_TRUE(r.pass) << op << ": max rel err " << r.max_rel_err << " vs tol " << tol
                        << " over " << r.checked << " coords";
  };
  Rng rng(41);

  {  // conv2d
    std::vector<Tensor<double>> in{Tensor<double>::random_uniform(Shape{1, 2, 8, 8}, rng),
                                   Tensor<double>::random_uniform(Shape{3, 2, 3, 3}, rng),
                                   Tensor<double>::random_uniform(Shape{1, 1, 1, 3}, rng)};
    const auto c = coeffs_for(3 * 8 * 8, 101);
    note("conv2d",
         grad_check(
             [&](std::vector<Tensor<double>>& v, GradTape<double>* tape) {
               return weighted_sum(conv2d(v[0], v[1], v[2], 1, 1, tape), c, tape);
             },
             in, 1e-5, kOpTol),
         kOpTol);
  }
  {  // residual_block
    std::vector<Tensor<double>> in{Tensor<double>::random_uniform(Shape{1, 4, 8, 8}, rng),
                                   Tensor<double>::random_uniform(Shape{4, 4, 3, 3}, rng),
                                   Tensor<double>::random_uniform(Shape{1, 1, 1, 4}, rng),
                                   Tensor<double>::random_uniform(Shape{4, 4, 3, 3}, rng),
                                   Tensor<double>::random_uniform(Shape{1, 1, 1, 4}, rng)};
    const auto c = coeffs_for(4 * 8 * 8, 102);
    note("residual_block",
         grad_check(
             [&](std::vector<Tensor<double>>& v, GradTape<double>* tape) {
               return weighted_sum(residual_block(v[0], v[1], v[2], v[3], v[4], tape), c,
                                   tape);
             },
             in, 1e-5, kOpTol),
         kOpTol);
  }
  {  // down4
    std::vector<Tensor<double>> in{Tensor<double>::random_uniform(Shape{1, 2, 8, 8}, rng),
                                   Tensor<double>::random_uniform(Shape{3, 2, 3, 3}, rng),
                                   Tensor<double>::random_uniform(Shape{1, 1, 1, 3}, rng),
                                   Tensor<double>::random_uniform(Shape{4, 3, 3, 3}, rng),
                                   Tensor<double>::random_uniform(Shape{1, 1, 1, 4}, rng)};
    const auto c = coeffs_for(4 * 2 * 2, 103);
    note("down4",
         grad_check(
             [&](std::vector<Tensor<double>>& v, GradTape<double>* tape) {
               return weighted_sum(down4(v[0], v[1], v[2], v[3], v[4], tape), c, tape);
             },
             in, 1e-5, kOpTol),
         kOpTol);
  }
  {  // up4 (4x4 -> 16x16, the ceiling of the pinned input size)
    std::vector<Tensor<double>> in{Tensor<double>::random_uniform(Shape{1, 3, 4, 4}, rng),
                                   Tensor<double>::random_uniform(Shape{4, 3, 3, 3}, rng),
                                   Tensor<double>::random_uniform(Shape{1, 1, 1, 4}, rng),
                                   Tensor<double>::random_uniform(Shape{2, 4, 3, 3}, rng),
                                   Tensor<double>::random_uniform(Shape{1, 1, 1, 2}, rng)};
    const auto c = coeffs_for(2 * 16 * 16, 104);
    note("up4",
         grad_check(
             [&](std::vector<Tensor<double>>& v, GradTape<double>* tape) {
               return weighted_sum(up4(v[0], v[1], v[2], v[3], v[4], tape), c, tape);
             },
             in, 1e-5, kOpTol),
         kOpTol);
  }
  {  // dynamic_filter
    std::vector<Tensor<double>> in{Tensor<double>::random_uniform(Shape{1, 2, 6, 6}, rng),
                                   Tensor<double>::random_uniform(Shape{1, 9, 6, 6}, rng)};
    const auto c = coeffs_for(2 * 6 * 6, 105);
    note("dynamic_filter",
         grad_check(
             [&](std::vector<Tensor<double>>& v, GradTape<double>* tape) {
               const KernelField<double> kf = reshape_channels_to_kernels(v[1], 3);
               return weighted_sum(dynamic_filter(v[0], kf, tape), c, tape);
             },
             in, 1e-5, kOpTol),
         kOpTol);
  }
  {  // multiscale_aggregate
    std::vector<Tensor<double>> in{Tensor<double>::random_uniform(Shape{1, 2, 6, 6}, rng),
                                   Tensor<double>::random_uniform(Shape{1, 9, 6, 6}, rng),
                                   Tensor<double>::random_uniform(Shape{1, 25, 6, 6}, rng)};
    const auto c = coeffs_for(2 * 6 * 6, 106);
    note("multiscale_aggregate",
         grad_check(
             [&](std::vector<Tensor<double>>& v, GradTape<double>* tape) {
               KernelFieldSet<double> set;
               set.fields.push_back(reshape_channels_to_kernels(v[1], 3));
               set.fields.push_back(reshape_channels_to_kernels(v[2], 5));
               return weighted_sum(multiscale_aggregate(v[0], set, tape), c, tape);
             },
             in, 1e-5, kOpTol),
         kOpTol);
  }

  ModelConfig tiny;
  tiny.kernel_sizes = {3, 5};
  tiny.num_res_blocks = 1;
  tiny.base_channels = 8;

  {  // cdm_forward, gradients through input and every branch parameter
    ModelParams<double> params = init_params<double>(tiny, 11);
    std::vector<Tensor<double>> in{Tensor<double>::random_uniform(Shape{1, 3, 8, 8}, rng)};
    for (const char* n : {"cdm.conv1.weight", "cdm.conv1.bias", "cdm.conv2.weight",
                          "cdm.conv2.bias", "cdm.conv3.weight", "cdm.conv3.bias"}) {
      in.push_back(params.at(n));  // handles alias the live parameters
    }
    const auto c = coeffs_for(3 * 8 * 8, 107);
    note("cdm_forward",
         grad_check(
             [&](std::vector<Tensor<double>>& v, GradTape<double>* tape) {
               return weighted_sum(cdm_forward(v[0], params, tape), c, tape);
             },
             in, 1e-5, kOpTol),
         kOpTol);
  }
  {  // post_refine
    ModelParams<double> params = init_params<double>(tiny, 12);
    std::vector<Tensor<double>> in{Tensor<double>::random_uniform(Shape{1, 3, 8, 8}, rng),
                                   params.at("pr.conv.weight"), params.at("pr.conv.bias")};
    const auto c = coeffs_for(3 * 8 * 8, 108);
    note("post_refine",
         grad_check(
             [&](std::vector<Tensor<double>>& v, GradTape<double>* tape) {
               return weighted_sum(post_refine(v[0], params, tape), c, tape);
             },
             in, 1e-5, kOpTol),
         kOpTol);
  }
  {  // full ddet_forward, sampled coordinates across all parameters
    ModelParams<double> params = init_params<double>(tiny, 13);
    std::vector<Tensor<double>> in{Tensor<double>::random_uniform(Shape{1, 3, 8, 8}, rng)};
    for (auto& [name, t] : params.tensors) in.push_back(t);
    const auto c = coeffs_for(3 * 8 * 8, 109);
    note("ddet_forward",
         grad_check(
             [&](std::vector<Tensor<double>>& v, GradTape<double>* tape) {
               return weighted_sum(ddet_forward(v[0], params, tiny, tape), c, tape);
             },
             in, 1e-5, kE2eTol, /*max_fd_per_input=*/6, /*probe_seed=*/99),
         kE2eTol);
  }

  const double dt = seconds_since(t0);
  const bool in_time = dt < 120.0;
  verdict(1, "gradient-checks", all_pass && in_time,
          fmt("9 ops, worst rel err %.3g vs tol 1e-3 per op / 1e-2 end-to-end, %.1f s < 120 s",
              worst, dt));
  EXPECT_LT(dt, 120.0);
}

// --------------------------------------------------------------------------
// 2. Optimized dynamic_filter matches the quadruple-loop oracle on 200 seeded
//    cases over k in {1,3,5,7}: max abs diff < 1e-6 fp32, < 1e-12 fp64,
//    runtime < 1 minute.
// --------------------------------------------------------------------------
TEST(Acceptance, DynamicFilterOracle) {
  const auto t0 = Clock::now();
  const int ks[4] = {1, 3, 5, 7};
  double max64 = 0.0, max32 = 0.0;
  for (int i = 0; i < 200; ++i) {
    const int k = ks[i % 4];
    Rng rng(mix_seed(4242, static_cast<std::uint64_t>(i)));
    const int n = 1 + static_cast<int>(rng.below(2));
    const int c = 1 + static_cast<int>(rng.below(3));
    const int h = 3 + static_cast<int>(rng.below(10));
    const int w = 3 + static_cast<int>(rng.below(10));
    const Tensor<double> img64 = Tensor<double>::random_uniform(Shape{n, c, h, w}, rng);
    Tensor<double> kw64(Shape{n, k * k, h, w});
    for (auto& v : kw64.vec()) v = rng.uniform(-1.0, 1.0);

    const KernelField<double> kf64 = reshape_channels_to_kernels(kw64, k);
    const Tensor<double> opt64 = dynamic_filter(img64, kf64);
    const Tensor<double> ref64 = dynamic_filter_naive(img64, kf64);
    for (std::size_t j = 0; j < opt64.numel(); ++j) {
      max64 = std::max(max64, std::abs(opt64.data()[j] - ref64.data()[j]));
    }

    Tensor<float> img32(img64.shape()), kw32(kw64.shape());
    for (std::size_t j = 0; j < img64.numel(); ++j) {
      img32.data()[j] = static_cast<float>(img64.data()[j]);
    }
    for (std::size_t j = 0; j < kw64.numel(); ++j) {
      kw32.data()[j] = static_cast<float>(kw64.data()[j]);
    }
    const KernelField<float> kf32 = reshape_channels_to_kernels(kw32, k);
    const Tensor<float> opt32 = dynamic_filter(img32, kf32);
    const Tensor<float> ref32 = dynamic_filter_naive(img32, kf32);
    for (std::size_t j = 0; j < opt32.numel(); ++j) {
      max32 = std::max(max32, std::abs(static_cast<double>(opt32.data()[j]) -
                                       static_cast<double>(ref32.data()[j])));
    }
  }
  const double dt = seconds_since(t0);
  const bool pass = max32 < 1e-6 && max64 < 1e-12 && dt < 60.0;
  verdict(2, "dynamic-filter-oracle", pass,
          fmt("200 cases k in {1,3,5,7}: max diff %.3g fp32 (< 1e-6), %.3g fp64 (< 1e-12), "
              "%.1f s < 60 s",
              max32, max64, dt));
  EXPECT_LT(max32, 1e-6);
  EXPECT_LT(max64, 1e-12);
  EXPECT_LT(dt, 60.0);
}

// --------------------------------------------------------------------------
// 3. Identity fixed points, all bit-exact in fp64: one-hot center kernel
//    fields, a zeroed detail branch, and the delta-initialized refinement.
// --------------------------------------------------------------------------
TEST(Acceptance, IdentityFixedPoints) {
  bool onehot_ok = true;
  Rng rng(7);
  for (const int k : {3, 5, 7}) {
    const Tensor<double> img = Tensor<double>::random_uniform(Shape{2, 3, 10, 9}, rng);
    Tensor<double> kw(Shape{2, k * k, 10, 9});
    fill_with(kw, 0.0);
    const int center = (k / 2) * k + k / 2;
    for (int n = 0; n < 2; ++n) {
      for (int y = 0; y < 10; ++y) {
        for (int x = 0; x < 9; ++x) {
          kw.data()[((n * k * k + center) * 10 + y) * 9 + x] = 1.0;
        }
      }
    }
    const Tensor<double> out = dynamic_filter(img, reshape_channels_to_kernels(kw, k));
    onehot_ok = onehot_ok && bit_equal(out, img);
    EXPECT_TRUE(bit_equal(out, img)) << "one-hot center k=" << k;
  }

  ModelConfig cfg;  // full default
  ModelParams<double> params = init_params<double>(cfg, 3);
  for (const char* n : {"cdm.conv1.weight", "cdm.conv1.bias", "cdm.conv2.weight",
                        "cdm.conv2.bias", "cdm.conv3.weight", "cdm.conv3.bias"}) {
    fill_with(params.at(n), 0.0);
  }
  const Tensor<double> x = synth_image<double>(5, 12, 16);
  const bool cdm_ok = bit_equal(cdm_forward(x, params), x);
  EXPECT_TRUE(cdm_ok);

  params.at("pr.conv.weight") = make_delta_conv_weight<double>(3, 3);
  fill_with(params.at("pr.conv.bias"), 0.0);
  const bool pr_ok = bit_equal(post_refine(x, params), x);
  EXPECT_TRUE(pr_ok);

  verdict(3, "identity-fixed-points", onehot_ok && cdm_ok && pr_ok,
          fmt("one-hot kernels k in {3,5,7} %s, zeroed detail branch %s, delta refinement "
              "%s, all bit-exact fp64",
              onehot_ok ? "ok" : "BAD", cdm_ok ? "ok" : "BAD", pr_ok ? "ok" : "BAD"));
}

// --------------------------------------------------------------------------
// 4. Overfit sanity: full model, 4 synthetic 64x64 patches, <= 2000 Adam
//    steps, seed 42, training PSNR >= 40 dB, wall clock < 30 minutes.
// --------------------------------------------------------------------------
TEST(Acceptance, OverfitSanity) {
  const auto t0 = Clock::now();
  const ModelConfig mcfg;  // full default
  const DegradeConfig dcfg;
  const std::vector<ImagePair<float>> pool = synth_pairs<float>(4, 64, dcfg, 42, "synth");
  ModelParams<float> params = init_params<float>(mcfg, 42);

  // Warmup-hold-decay trapezoid over a round-robin pool: the warmup keeps
  // Adam's first normalized steps from wrecking the near-identity start, the
  // flat phase does the traveling, and the tail anneal settles the endgame.
  RunConfig::Train t;
  t.steps = 2000;
  t.batch = 4;
  t.patch = 64;
  t.lr = 1e-3;
  t.lr_decay = "cosine";
  t.warmup = 100;
  t.hold = 1300;
  t.sampler = "cycle";
  t.seed = 42;
  t.eval_every = 50;
  t.checkpoint_every = 0;
  t.stop_psnr = 40.0;

  const TrainResult r = train_loop(mcfg, params, pool, t, "", false);
  const double dt = seconds_since(t0);
  const bool pass = r.final_psnr >= 40.0 && r.steps_run <= 2000 && dt < 1800.0;
  verdict(4, "overfit-sanity", pass,
          fmt("training PSNR %.2f dB >= 40 dB after %d steps (<= 2000), %.0f s < 1800 s",
              r.final_psnr, r.steps_run, dt));
  EXPECT_GE(r.final_psnr, 40.0);
  EXPECT_LE(r.steps_run, 2000);
  EXPECT_LT(dt, 1800.0);
}

// --------------------------------------------------------------------------
// 5. Ablation harness emits the four-row table in lattice order; the full
//    configuration beating the plain one is a soft check (warn, don't fail).
// --------------------------------------------------------------------------
TEST(Acceptance, AblationLattice) {
  const fs::path dir = fresh_dir("ddet_accept_ablate");
  const int rc = run_cli("ablate --seed 0 --set paths.out_dir=" + dir.string(),
                         dir / "stdout.txt");
  ASSERT_EQ(rc, 0) << slurp(dir / "stdout.txt");

  const std::string md = slurp(dir / "ablation.md");
  ASSERT_FALSE(md.empty());
  std::vector<std::string> lines;
  for (std::size_t pos = 0; pos < md.size();) {
    const std::size_t nl = md.find('\n', pos);
    lines.push_back(md.substr(pos, nl - pos));
    if (nl == std::string::npos) break;
    pos = nl + 1;
  }
  while (!lines.empty() && lines.back().empty()) lines.pop_back();
  ASSERT_EQ(lines.size(), 6u) << md;
  EXPECT_EQ(lines[0], "| Settings | PSNR (dB) |");
  EXPECT_EQ(lines[1], "| --- | --- |");

  const char* labels[4] = {"Plain", "w/ PR", "w/ CDM", "w/ MDA"};
  double scores[4] = {0, 0, 0, 0};
  bool rows_ok = true;
  for (int i = 0; i < 4; ++i) {
    const std::string& row = lines[2 + i];
    const std::string want = std::string("| ") + labels[i] + " | ";
    rows_ok = rows_ok && row.rfind(want, 0) == 0;
    EXPECT_EQ(row.rfind(want, 0), 0u) << row;
    scores[i] = std::strtod(row.c_str() + want.size(), nullptr);
    rows_ok = rows_ok && std::isfinite(scores[i]) && scores[i] > 0.0;
  }
  const bool ordered = scores[3] >= scores[0];
  verdict(5, "ablation-lattice", rows_ok,
          fmt("four rows (Plain, w/ PR, w/ CDM, w/ MDA), full %.2f dB vs plain %.2f dB%s",
              scores[3], scores[0],
              ordered ? "" : " [WARN: full below plain at this budget, soft check]"));
  if (!ordered) {
    std::printf("warning: full configuration under-scored the plain one at the short "
                "ablation budget; ordering is a soft expectation\n");
  }
}

// --------------------------------------------------------------------------
// 6. Parameter budget: full default model holds 1.0-2.0 M parameters
//    (4-8 MB fp32); the exact element count is printed and snapshot-pinned.
// --------------------------------------------------------------------------
TEST(Acceptance, ParameterBudget) {
  const ModelConfig cfg;
  const ModelParams<float> params = init_params<float>(cfg, 0);
  const ParamCount pc = param_count(params);
  const double mb = static_cast<double>(pc.bytes_fp32) / (1024.0 * 1024.0);
  const bool pass = pc.elements == 1345770u && pc.elements >= 1000000u &&
                    pc.elements <= 2000000u && mb >= 4.0 && mb <= 8.0;
  verdict(6, "parameter-budget", pass,
          fmt("exactly %zu parameters (snapshot 1345770), %.2f MB fp32 in [4, 8]",
              pc.elements, mb));
  EXPECT_EQ(pc.elements, 1345770u);
  EXPECT_GE(pc.elements, 1000000u);
  EXPECT_LE(pc.elements, 2000000u);
  EXPECT_GE(mb, 4.0);
  EXPECT_LE(mb, 8.0);
}

// --------------------------------------------------------------------------
// 7. Metrics: ssim(x,x) = 1 +- 1e-9; a uniform 1/255 offset scores
//    48.13 +- 0.01 dB; PSNR decreases across five growing noise amplitudes.
// --------------------------------------------------------------------------
TEST(Acceptance, MetricsCorrectness) {
  const Tensor<double> x = synth_image<double>(13, 24, 24);
  const double self = ssim(x, x);
  const bool ssim_ok = std::abs(self - 1.0) <= 1e-9;
  EXPECT_NEAR(self, 1.0, 1e-9);

  Tensor<double> a(Shape{1, 3, 16, 16}), b(Shape{1, 3, 16, 16});
  fill_with(a, 0.4);
  fill_with(b, 0.4 + 1.0 / 255.0);
  const double off_db = psnr(a, b, PsnrMode::kRgb).db;
  const bool off_ok = std::abs(off_db - 48.13) <= 0.01;
  EXPECT_NEAR(off_db, 48.13, 0.01);

  bool monotone = true;
  double prev = 1e300;
  Rng rng(77);
  std::string chain;
  for (const double amp : {0.002, 0.01, 0.03, 0.1, 0.3}) {
    Tensor<double> y = x.clone();
    for (auto& v : y.vec()) v += rng.uniform(-amp, amp);
    const double db = psnr(x, y, PsnrMode::kRgb).db;
    monotone = monotone && db < prev;
    prev = db;
    chain += fmt("%s%.1f", chain.empty() ? "" : " > ", db);
  }
  EXPECT_TRUE(monotone) << chain;

  verdict(7, "metrics-correctness", ssim_ok && off_ok && monotone,
          fmt("ssim(x,x)-1 = %.1e (tol 1e-9), 1/255 offset %.3f dB (48.13 +- 0.01), "
              "noise sweep %s",
              self - 1.0, off_db, chain.c_str()));
}

// --------------------------------------------------------------------------
// 8. Determinism: the same training invocation twice yields byte-identical
//    loss CSVs and checkpoints; checkpoint save/load round-trips bit-exactly.
// --------------------------------------------------------------------------
TEST(Acceptance, CliDeterminism) {
  const auto t0 = Clock::now();
  const fs::path a = fresh_dir("ddet_accept_det_a");
  const fs::path b = fresh_dir("ddet_accept_det_b");
  const std::string args = "train --synthetic --steps 200 --seed 42 --set paths.out_dir=";
  ASSERT_EQ(run_cli(args + a.string(), a / "stdout.txt"), 0) << slurp(a / "stdout.txt");
  ASSERT_EQ(run_cli(args + b.string(), b / "stdout.txt"), 0) << slurp(b / "stdout.txt");

  const std::string log_a = slurp(a / "train_log.csv");
  const bool csv_ok = !log_a.empty() && log_a == slurp(b / "train_log.csv");
  EXPECT_TRUE(csv_ok);
  const std::string ckpt_a = slurp(a / "last.ddet");
  const bool ckpt_ok = !ckpt_a.empty() && ckpt_a == slurp(b / "last.ddet");
  EXPECT_TRUE(ckpt_ok);

  auto [params, state] = checkpoint_load<float>((a / "last.ddet").string());
  checkpoint_save(params, state, (a / "roundtrip.ddet").string());
  const bool rt_ok = slurp(a / "roundtrip.ddet") == ckpt_a;
  EXPECT_TRUE(rt_ok);

  verdict(8, "determinism", csv_ok && ckpt_ok && rt_ok,
          fmt("two 200-step runs: loss CSV %s, checkpoint %s, save/load round-trip %s "
              "(%.0f s)",
              csv_ok ? "byte-identical" : "DIFFER", ckpt_ok ? "byte-identical" : "DIFFER",
              rt_ok ? "bit-exact" : "DIFFERS", seconds_since(t0)));
}

// --------------------------------------------------------------------------
// 9. Degradation pipeline maps constants to constants within 1e-3 end to end
//    and keeps every output inside [0,1].
// --------------------------------------------------------------------------
TEST(Acceptance, DegradationPipeline) {
  double worst = 0.0;
  bool in_range = true;
  for (const double c : {0.0, 0.25, 0.7, 1.0}) {
    for (const int scale : {2, 4}) {
      DegradeConfig dcfg;
      dcfg.scale = scale;
      dcfg.seed = mix_seed(77, static_cast<std::uint64_t>(scale));
      Tensor<float> hr(Shape{1, 3, 40, 40});
      fill_with(hr, static_cast<float>(c));
      const ImagePair<float> p = degrade(hr, dcfg, "flat");
      for (std::size_t i = 0; i < p.lr.numel(); ++i) {
        const double v = p.lr.data()[i];
        worst = std::max(worst, std::abs(v - c));
        in_range = in_range && v >= 0.0 && v <= 1.0;
      }
    }
  }
  const Tensor<float> tex = synth_image<float>(99, 48, 40);
  const ImagePair<float> p = degrade(tex, DegradeConfig{}, "tex");
  for (std::size_t i = 0; i < p.lr.numel(); ++i) {
    const double v = p.lr.data()[i];
    in_range = in_range && v >= 0.0 && v <= 1.0;
  }
  const bool pass = worst < 1e-3 && in_range;
  verdict(9, "degradation-pipeline", pass,
          fmt("constants at scales {2,4}: max deviation %.2e < 1e-3, outputs in [0,1]: %s",
              worst, in_range ? "yes" : "NO"));
  EXPECT_LT(worst, 1e-3);
  EXPECT_TRUE(in_range);
}

}  // namespace
}  // namespace ddet
