#include <gtest/gtest.h>
#include <zlib.h>

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "ddet/checkpoint.hpp"
#include "ddet/model.hpp"
#include "ddet/ops.hpp"
#include "ddet/rng.hpp"

namespace ddet {
namespace {

ModelConfig small_config() {
  ModelConfig cfg;
  cfg.num_res_blocks = 1;
  cfg.base_channels = 8;
  cfg.kernel_sizes = {3, 5};
  return cfg;
}

std::string temp_path(const std::string& name) { return testing::TempDir() + "ddet_" + name; }

std::vector<unsigned char> read_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_bytes(const std::string& path, const std::vector<unsigned char>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
}

// Replaces the trailing CRC with one matching the (possibly edited) body.
void reseal(std::vector<unsigned char>& bytes) {
  const std::size_t body = bytes.size() - 4;
  const auto crc = static_cast<std::uint32_t>(crc32(0L, bytes.data(), static_cast<uInt>(body)));
  for (int i = 0; i < 4; ++i) bytes[body + i] = static_cast<unsigned char>(crc >> (8 * i));
}

// Params with a touched optimizer so every table row is exercised.
template <typename T>
std::pair<ModelParams<T>, AdamState<T>> trained_fixture(std::uint64_t seed) {
  ModelParams<T> params = init_params<T>(small_config(), seed);
  Rng rng(seed + 1);
  for (auto& [name, t] : params.tensors) {
    T* g = t.ensure_grad();
    for (std::size_t i = 0; i < t.numel(); ++i) g[i] = static_cast<T>(rng.uniform(-1.0, 1.0));
  }
  AdamState<T> state;
  adam_step(params.tensors, state, 1e-3, 0.9, 0.999, 1e-8);
  adam_step(params.tensors, state, 1e-3, 0.9, 0.999, 1e-8);
  return {std::move(params), std::move(state)};
}

template <typename T>
void expect_bit_equal(const Tensor<T>& a, const Tensor<T>& b) {
  ASSERT_EQ(a.shape(), b.shape());
  for (std::size_t i = 0; i < a.numel(); ++i) {
    ASSERT_EQ(a.data()[i], b.data()[i]) << "element " << i;
  }
}

TEST(Checkpoint, RoundTripBitExactWithOptimizerState) {
  auto [params, state] = trained_fixture<float>(21);
  const std::string path = temp_path("roundtrip.ddet");
  checkpoint_save(params, state, path);

  auto [loaded, lstate] = checkpoint_load<float>(path);
  ASSERT_EQ(loaded.tensors.size(), params.tensors.size());
  for (const auto& [name, t] : params.tensors) {
    ASSERT_TRUE(loaded.tensors.count(name)) << name;
    expect_bit_equal(loaded.at(name), t);
    EXPECT_TRUE(loaded.at(name).requires_grad()) << name;
  }
  EXPECT_EQ(lstate.step, state.step);
  ASSERT_EQ(lstate.m.size(), state.m.size());
  ASSERT_EQ(lstate.v.size(), state.v.size());
  for (const auto& [name, t] : state.m) expect_bit_equal(lstate.m.at(name), t);
  for (const auto& [name, t] : state.v) expect_bit_equal(lstate.v.at(name), t);
}

TEST(Checkpoint, RoundTripDoublePrecision) {
  auto [params, state] = trained_fixture<double>(22);
  const std::string path = temp_path("roundtrip64.ddet");
  checkpoint_save(params, state, path);
  auto [loaded, lstate] = checkpoint_load<double>(path);
  for (const auto& [name, t] : params.tensors) expect_bit_equal(loaded.at(name), t);
  EXPECT_EQ(lstate.step, 2);
}

TEST(Checkpoint, RejectsWrongPrecision) {
  auto [params, state] = trained_fixture<float>(23);
  const std::string path = temp_path("dtype.ddet");
  checkpoint_save(params, state, path);
  EXPECT_THROW(checkpoint_load<double>(path), FormatError);
}

TEST(Checkpoint, MissingFileIsIoError) {
  EXPECT_THROW(checkpoint_load<float>(temp_path("nope.ddet")), IoError);
}

TEST(Checkpoint, RejectsBadMagic) {
  auto [params, state] = trained_fixture<float>(24);
  const std::string path = temp_path("magic.ddet");
  checkpoint_save(params, state, path);
  auto bytes = read_bytes(path);
  bytes[0] = 'X';
  reseal(bytes);
  write_bytes(path, bytes);
  try {
    checkpoint_load<float>(path);
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("magic"), std::string::npos);
  }
}

TEST(Checkpoint, RejectsUnsupportedVersion) {
  auto [params, state] = trained_fixture<float>(25);
  const std::string path = temp_path("version.ddet");
  checkpoint_save(params, state, path);
  auto bytes = read_bytes(path);
  bytes[4] = 9;  // little-endian u32 version right after the magic
  reseal(bytes);
  write_bytes(path, bytes);
  try {
    checkpoint_load<float>(path);
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("version"), std::string::npos);
  }
}

TEST(Checkpoint, DetectsCorruptedPayload) {
  auto [params, state] = trained_fixture<float>(26);
  const std::string path = temp_path("corrupt.ddet");
  checkpoint_save(params, state, path);
  auto bytes = read_bytes(path);
  bytes[bytes.size() / 2] ^= 0x40;
  write_bytes(path, bytes);
  try {
    checkpoint_load<float>(path);
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("CRC"), std::string::npos);
  }
}

TEST(Checkpoint, DetectsTruncation) {
  auto [params, state] = trained_fixture<float>(27);
  const std::string path = temp_path("trunc.ddet");
  checkpoint_save(params, state, path);
  auto bytes = read_bytes(path);
  bytes.resize(bytes.size() - 9);
  write_bytes(path, bytes);
  EXPECT_THROW(checkpoint_load<float>(path), FormatError);

  write_bytes(path, {'D', 'D', 'E', 'T'});
  EXPECT_THROW(checkpoint_load<float>(path), FormatError);
}

TEST(Checkpoint, RejectsTrailingBytes) {
  auto [params, state] = trained_fixture<float>(28);
  const std::string path = temp_path("trailing.ddet");
  checkpoint_save(params, state, path);
  auto bytes = read_bytes(path);
  // Valid CRC over a body that has junk after the optimizer table.
  bytes.resize(bytes.size() - 4);
  bytes.insert(bytes.end(), {0, 0, 0, 0, 0, 0, 0, 0});
  reseal(bytes);
  write_bytes(path, bytes);
  try {
    checkpoint_load<float>(path);
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("trailing"), std::string::npos);
  }
}

TEST(ValidateAgainstConfig, AcceptsMatchingArchitecture) {
  ModelParams<float> params = init_params<float>(small_config(), 30);
  EXPECT_NO_THROW(validate_against_config(params, small_config()));
}

TEST(ValidateAgainstConfig, NamesMissingParameter) {
  ModelParams<float> params = init_params<float>(small_config(), 31);
  params.tensors.erase("gsat.up1.weight");
  try {
    validate_against_config(params, small_config());
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("gsat.up1.weight"), std::string::npos);
  }
}

TEST(ValidateAgainstConfig, NamesShapeMismatch) {
  ModelParams<float> params = init_params<float>(small_config(), 32);
  params.at("cdm.conv2.weight") = Tensor<float>(Shape{8, 8, 5, 5});
  try {
    validate_against_config(params, small_config());
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("cdm.conv2.weight"), std::string::npos);
    EXPECT_NE(msg.find("shape"), std::string::npos);
  }
}

TEST(ValidateAgainstConfig, RejectsUnknownParameter) {
  ModelParams<float> params = init_params<float>(small_config(), 33);
  params.tensors.emplace("rogue.weight", Tensor<float>(Shape{1, 1, 1, 1}));
  try {
    validate_against_config(params, small_config());
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("rogue.weight"), std::string::npos);
  }
}

TEST(ValidateAgainstConfig, CrossVariantMismatchIsDiagnosed) {
  // A KPN checkpoint is missing the CDM and PR tables the full config needs.
  ModelParams<float> kpn = init_params<float>(ModelConfig::kpn(7), 34);
  EXPECT_THROW(validate_against_config(kpn, ModelConfig{}), FormatError);
}

}  // namespace
}  // namespace ddet
