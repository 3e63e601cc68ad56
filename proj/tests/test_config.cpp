#include <gtest/gtest.h>

#include <string>
#include <vector>

#include "ddet/config.hpp"

namespace ddet {
namespace {

TEST(RunConfig, DocumentedDefaults) {
  const RunConfig c;
  EXPECT_EQ(c.model.kernel_sizes, (std::vector<int>{3, 5, 7}));
  EXPECT_EQ(c.model.num_res_blocks, 16);
  EXPECT_TRUE(c.model.use_cdm);
  EXPECT_TRUE(c.model.use_pr);
  EXPECT_EQ(c.degrade.scale, 4);
  EXPECT_DOUBLE_EQ(c.degrade.shift_max, 0.75);
  EXPECT_EQ(c.train.steps, 2000);
  EXPECT_EQ(c.train.batch, 4);
  EXPECT_EQ(c.train.patch, 64);
  EXPECT_DOUBLE_EQ(c.train.lr, 1e-4);
  EXPECT_EQ(c.train.lr_decay, "none");
  EXPECT_EQ(c.train.sampler, "random");
  EXPECT_EQ(c.eval.mode, "y");
  EXPECT_EQ(c.eval.model, "ddet");
  EXPECT_EQ(c.paths.out_dir, "out");
}

TEST(ParseConfig, AppliesValuesCommentsAndWhitespace) {
  const RunConfig c = parse_config_text(
      "# run recipe\n"
      "\n"
      "train.steps = 500   # fewer for smoke\n"
      "  train.lr=0.001\n"
      "model.kernel_sizes = 3, 7\n"
      "eval.mode = rgb\n"
      "paths.out_dir = /tmp/run1\n"
      "train.synthetic = true\n");
  EXPECT_EQ(c.train.steps, 500);
  EXPECT_DOUBLE_EQ(c.train.lr, 0.001);
  EXPECT_EQ(c.model.kernel_sizes, (std::vector<int>{3, 7}));
  EXPECT_EQ(c.eval.mode, "rgb");
  EXPECT_EQ(c.paths.out_dir, "/tmp/run1");
  EXPECT_TRUE(c.train.synthetic);
  EXPECT_EQ(c.train.batch, 4);  // untouched keys keep defaults
}

TEST(ParseConfig, UnknownKeyReportsLineNumber) {
  try {
    parse_config_text("train.steps = 10\n\ntrain.speed = 11\n");
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("line 3"), std::string::npos) << msg;
    EXPECT_NE(msg.find("train.speed"), std::string::npos) << msg;
  }
}

TEST(ParseConfig, MalformedLinesReportLineNumber) {
  try {
    parse_config_text("train.steps 10\n");
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("line 1"), std::string::npos);
  }
  try {
    parse_config_text("# fine\n= 3\n");
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
  }
}

TEST(ParseConfig, TypedValueErrors) {
  EXPECT_THROW(parse_config_text("train.steps = soon\n"), ConfigError);
  EXPECT_THROW(parse_config_text("train.lr = fast\n"), ConfigError);
  EXPECT_THROW(parse_config_text("train.steps = 12x\n"), ConfigError);
  EXPECT_THROW(parse_config_text("train.synthetic = maybe\n"), ConfigError);
  EXPECT_THROW(parse_config_text("model.kernel_sizes = \n"), ConfigError);
  EXPECT_NO_THROW(parse_config_text("train.lr = 1e-3\n"));
  EXPECT_NO_THROW(parse_config_text("train.steps = -1\n"));  // range-checked later
}

TEST(ParseConfig, ValidatedEnumerations) {
  EXPECT_THROW(parse_config_text("eval.mode = luma\n"), ConfigError);
  EXPECT_THROW(parse_config_text("eval.model = resnet\n"), ConfigError);
  EXPECT_THROW(parse_config_text("train.lr_decay = linear\n"), ConfigError);
  EXPECT_THROW(parse_config_text("train.sampler = shuffle\n"), ConfigError);
  EXPECT_EQ(parse_config_text("train.sampler = cycle\n").train.sampler, "cycle");
  EXPECT_EQ(parse_config_text("train.lr_decay = cosine\n").train.lr_decay, "cosine");
  EXPECT_EQ(parse_config_text("eval.model = none\n").eval.model, "none");
}

TEST(ApplyOverride, SetsAndRejects) {
  RunConfig c;
  apply_override(c, "degrade.scale", "2");
  EXPECT_EQ(c.degrade.scale, 2);
  apply_override(c, "train.seed", "42");
  EXPECT_EQ(c.train.seed, 42u);
  try {
    apply_override(c, "degrade.blur", "1.0");
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("degrade.blur"), std::string::npos);
  }
}

TEST(SerializeConfig, RoundTripIsIdentity) {
  RunConfig c;
  apply_override(c, "train.lr", "0.00012999999999999999");
  apply_override(c, "train.eps", "1e-8");
  apply_override(c, "model.kernel_sizes", "5,9");
  apply_override(c, "eval.mode", "rgb");
  apply_override(c, "paths.data_root", "/data/real");
  apply_override(c, "train.stop_psnr", "39.5");
  apply_override(c, "degrade.shift_max", "0.333");

  const std::string once = serialize_config(c);
  const RunConfig back = parse_config_text(once);
  EXPECT_EQ(serialize_config(back), once);
  EXPECT_DOUBLE_EQ(back.train.lr, c.train.lr);
  EXPECT_DOUBLE_EQ(back.train.eps, c.train.eps);
  EXPECT_EQ(back.model.kernel_sizes, c.model.kernel_sizes);
  EXPECT_DOUBLE_EQ(back.degrade.shift_max, 0.333);
}

TEST(SerializeConfig, DefaultRoundTripAndCoverage) {
  const RunConfig def;
  const std::string text = serialize_config(def);
  EXPECT_EQ(serialize_config(parse_config_text(text)), text);
  // Every section is present in the emitted key list.
  for (const char* probe :
       {"model.kernel_sizes = 3,5,7", "degrade.scale = 4", "train.steps = 2000",
        "eval.mode = y", "ablate.steps = 200", "bench.input_size = 96", "paths.out_dir = out"}) {
    EXPECT_NE(text.find(probe), std::string::npos) << probe;
  }
}

TEST(ParseConfigFile, MissingFileIsConfigError) {
  EXPECT_THROW(parse_config_file("/nonexistent/ddet.conf"), ConfigError);
}

}  // namespace
}  // namespace ddet
