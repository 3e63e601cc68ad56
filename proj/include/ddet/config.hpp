#pragma once

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "ddet/data.hpp"
#include "ddet/error.hpp"
#include "ddet/model.hpp"

namespace ddet {

// Everything a run needs, with documented defaults. The file format is flat
// `section.key = value` lines with `#` comments; CLI flags override the file.
struct RunConfig {
  ModelConfig model;
  DegradeConfig degrade;

  struct Train {
    int steps = 2000;
    int batch = 4;
    int patch = 64;
    double lr = 1e-4;
    std::string lr_decay = "none"; // "none" or "cosine" (anneals to lr/100)
    int warmup = 0;                // linear lr ramp over this many leading steps
    int hold = 0;                  // post-warmup steps at full lr before decay begins
    std::string sampler = "random"; // "random" (with replacement) or "cycle" (round-robin)
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::uint64_t seed = 0;
    int checkpoint_every = 500;
    int eval_every = 100;
    bool synthetic = false;
    int synth_count = 4;    // synthetic HR images to generate
    int synth_size = 64;    // their side length
    double stop_psnr = 0.0; // early-stop threshold in dB; 0 disables
  } train;

  struct Eval {
    std::string mode = "y";       // psnr/ssim color space: "y" or "rgb"
    int shave = 0;                // border pixels cropped before metrics
    std::string split = "val";
    std::string checkpoint;       // path; empty means <out_dir>/last.ddet
    std::string model = "ddet";   // "ddet" or "none" (identity passthrough)
    bool dump_images = false;
    bool synthetic = false;
  } eval;

  struct Ablate {
    int steps = 200;
    int train_count = 4; // synthetic training images
    int eval_count = 2;  // synthetic eval images
  } ablate;

  struct Bench {
    std::string configs = "full,kpn5"; // comma list: full | kpnK
    int input_size = 96;
    int repeats = 10;
    int warmups = 3;
  } bench;

  struct Paths {
    std::string data_root = "data";
    std::string out_dir = "out";
  } paths;
};

namespace detail {

inline bool parse_bool_value(const std::string& v, const std::string& key) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("key '" + key + "': expected true/false, got '" + v + "'");
}

inline long long parse_int_value(const std::string& v, const std::string& key) {
  char* end = nullptr;
  const long long r = std::strtoll(v.c_str(), &end, 10);
  if (end == v.c_str() || *end != '\0') {
    throw ConfigError("key '" + key + "': expected an integer, got '" + v + "'");
  }
  return r;
}

inline double parse_double_value(const std::string& v, const std::string& key) {
  char* end = nullptr;
  const double r = std::strtod(v.c_str(), &end);
  if (end == v.c_str() || *end != '\0') {
    throw ConfigError("key '" + key + "': expected a number, got '" + v + "'");
  }
  return r;
}

inline std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

struct ConfigKey {
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

inline std::map<std::string, ConfigKey> build_config_registry() {
  std::map<std::string, ConfigKey> reg;
  auto add = [&](const std::string& key, auto&& get, auto&& set) {
    reg[key] = ConfigKey{std::forward<decltype(get)>(get), std::forward<decltype(set)>(set)};
  };

  // model.*
  add("model.kernel_sizes",
      [](const RunConfig& c) {
        std::string s;
        for (std::size_t i = 0; i < c.model.kernel_sizes.size(); ++i) {
          if (i) s += ",";
          s += std::to_string(c.model.kernel_sizes[i]);
        }
        return s;
      },
      [](RunConfig& c, const std::string& v) {
        std::vector<int> ks;
        std::stringstream ss(v);
        std::string item;
        while (std::getline(ss, item, ',')) {
          ks.push_back(static_cast<int>(parse_int_value(item, "model.kernel_sizes")));
        }
        if (ks.empty()) throw ConfigError("key 'model.kernel_sizes': empty list");
        c.model.kernel_sizes = std::move(ks);
      });
  add("model.num_res_blocks",
      [](const RunConfig& c) { return std::to_string(c.model.num_res_blocks); },
      [](RunConfig& c, const std::string& v) {
        c.model.num_res_blocks = static_cast<int>(parse_int_value(v, "model.num_res_blocks"));
      });
  add("model.base_channels",
      [](const RunConfig& c) { return std::to_string(c.model.base_channels); },
      [](RunConfig& c, const std::string& v) {
        c.model.base_channels = static_cast<int>(parse_int_value(v, "model.base_channels"));
      });
  add("model.input_channels",
      [](const RunConfig& c) { return std::to_string(c.model.input_channels); },
      [](RunConfig& c, const std::string& v) {
        c.model.input_channels = static_cast<int>(parse_int_value(v, "model.input_channels"));
      });
  add("model.use_cdm",
      [](const RunConfig& c) { return c.model.use_cdm ? std::string("true") : "false"; },
      [](RunConfig& c, const std::string& v) {
        c.model.use_cdm = parse_bool_value(v, "model.use_cdm");
      });
  add("model.use_pr",
      [](const RunConfig& c) { return c.model.use_pr ? std::string("true") : "false"; },
      [](RunConfig& c, const std::string& v) {
        c.model.use_pr = parse_bool_value(v, "model.use_pr");
      });

  // degrade.*
  add("degrade.gauss_sigma",
      [](const RunConfig& c) { return format_double(c.degrade.gauss_sigma); },
      [](RunConfig& c, const std::string& v) {
        c.degrade.gauss_sigma = parse_double_value(v, "degrade.gauss_sigma");
      });
  add("degrade.gauss_radius",
      [](const RunConfig& c) { return std::to_string(c.degrade.gauss_radius); },
      [](RunConfig& c, const std::string& v) {
        c.degrade.gauss_radius = static_cast<int>(parse_int_value(v, "degrade.gauss_radius"));
      });
  add("degrade.scale", [](const RunConfig& c) { return std::to_string(c.degrade.scale); },
      [](RunConfig& c, const std::string& v) {
        c.degrade.scale = static_cast<int>(parse_int_value(v, "degrade.scale"));
      });
  add("degrade.shift_max",
      [](const RunConfig& c) { return format_double(c.degrade.shift_max); },
      [](RunConfig& c, const std::string& v) {
        c.degrade.shift_max = parse_double_value(v, "degrade.shift_max");
      });
  add("degrade.seed", [](const RunConfig& c) { return std::to_string(c.degrade.seed); },
      [](RunConfig& c, const std::string& v) {
        c.degrade.seed = static_cast<std::uint64_t>(parse_int_value(v, "degrade.seed"));
      });

  // train.*
  reg["train.steps"] = ConfigKey{
      [](const RunConfig& c) { return std::to_string(c.train.steps); },
      [](RunConfig& c, const std::string& v) {
        c.train.steps = static_cast<int>(parse_int_value(v, "train.steps"));
      }};
  reg["train.batch"] = ConfigKey{
      [](const RunConfig& c) { return std::to_string(c.train.batch); },
      [](RunConfig& c, const std::string& v) {
        c.train.batch = static_cast<int>(parse_int_value(v, "train.batch"));
      }};
  reg["train.patch"] = ConfigKey{
      [](const RunConfig& c) { return std::to_string(c.train.patch); },
      [](RunConfig& c, const std::string& v) {
        c.train.patch = static_cast<int>(parse_int_value(v, "train.patch"));
      }};
  reg["train.lr"] = ConfigKey{[](const RunConfig& c) { return format_double(c.train.lr); },
                              [](RunConfig& c, const std::string& v) {
                                c.train.lr = parse_double_value(v, "train.lr");
                              }};
  reg["train.lr_decay"] = ConfigKey{
      [](const RunConfig& c) { return c.train.lr_decay; },
      [](RunConfig& c, const std::string& v) {
        if (v != "none" && v != "cosine") {
          throw ConfigError("key 'train.lr_decay': expected none or cosine, got '" + v + "'");
        }
        c.train.lr_decay = v;
      }};
  reg["train.warmup"] = ConfigKey{
      [](const RunConfig& c) { return std::to_string(c.train.warmup); },
      [](RunConfig& c, const std::string& v) {
        c.train.warmup = static_cast<int>(parse_int_value(v, "train.warmup"));
      }};
  reg["train.hold"] = ConfigKey{
      [](const RunConfig& c) { return std::to_string(c.train.hold); },
      [](RunConfig& c, const std::string& v) {
        c.train.hold = static_cast<int>(parse_int_value(v, "train.hold"));
      }};
  reg["train.sampler"] = ConfigKey{
      [](const RunConfig& c) { return c.train.sampler; },
      [](RunConfig& c, const std::string& v) {
        if (v != "random" && v != "cycle") {
          throw ConfigError("key 'train.sampler': expected random or cycle, got '" + v + "'");
        }
        c.train.sampler = v;
      }};
  reg["train.beta1"] = ConfigKey{[](const RunConfig& c) { return format_double(c.train.beta1); },
                                 [](RunConfig& c, const std::string& v) {
                                   c.train.beta1 = parse_double_value(v, "train.beta1");
                                 }};
  reg["train.beta2"] = ConfigKey{[](const RunConfig& c) { return format_double(c.train.beta2); },
                                 [](RunConfig& c, const std::string& v) {
                                   c.train.beta2 = parse_double_value(v, "train.beta2");
                                 }};
  reg["train.eps"] = ConfigKey{[](const RunConfig& c) { return format_double(c.train.eps); },
                               [](RunConfig& c, const std::string& v) {
                                 c.train.eps = parse_double_value(v, "train.eps");
                               }};
  reg["train.seed"] = ConfigKey{
      [](const RunConfig& c) { return std::to_string(c.train.seed); },
      [](RunConfig& c, const std::string& v) {
        c.train.seed = static_cast<std::uint64_t>(parse_int_value(v, "train.seed"));
      }};
  reg["train.checkpoint_every"] = ConfigKey{
      [](const RunConfig& c) { return std::to_string(c.train.checkpoint_every); },
      [](RunConfig& c, const std::string& v) {
        c.train.checkpoint_every = static_cast<int>(parse_int_value(v, "train.checkpoint_every"));
      }};
  reg["train.eval_every"] = ConfigKey{
      [](const RunConfig& c) { return std::to_string(c.train.eval_every); },
      [](RunConfig& c, const std::string& v) {
        c.train.eval_every = static_cast<int>(parse_int_value(v, "train.eval_every"));
      }};
  reg["train.synthetic"] = ConfigKey{
      [](const RunConfig& c) { return c.train.synthetic ? std::string("true") : "false"; },
      [](RunConfig& c, const std::string& v) {
        c.train.synthetic = parse_bool_value(v, "train.synthetic");
      }};
  reg["train.synth_count"] = ConfigKey{
      [](const RunConfig& c) { return std::to_string(c.train.synth_count); },
      [](RunConfig& c, const std::string& v) {
        c.train.synth_count = static_cast<int>(parse_int_value(v, "train.synth_count"));
      }};
  reg["train.synth_size"] = ConfigKey{
      [](const RunConfig& c) { return std::to_string(c.train.synth_size); },
      [](RunConfig& c, const std::string& v) {
        c.train.synth_size = static_cast<int>(parse_int_value(v, "train.synth_size"));
      }};
  reg["train.stop_psnr"] = ConfigKey{
      [](const RunConfig& c) { return format_double(c.train.stop_psnr); },
      [](RunConfig& c, const std::string& v) {
        c.train.stop_psnr = parse_double_value(v, "train.stop_psnr");
      }};

  // eval.*
  reg["eval.mode"] = ConfigKey{[](const RunConfig& c) { return c.eval.mode; },
                               [](RunConfig& c, const std::string& v) {
                                 if (v != "y" && v != "rgb") {
                                   throw ConfigError("key 'eval.mode': expected y or rgb, got '" +
                                                     v + "'");
                                 }
                                 c.eval.mode = v;
                               }};
  reg["eval.shave"] = ConfigKey{
      [](const RunConfig& c) { return std::to_string(c.eval.shave); },
      [](RunConfig& c, const std::string& v) {
        c.eval.shave = static_cast<int>(parse_int_value(v, "eval.shave"));
      }};
  reg["eval.split"] = ConfigKey{[](const RunConfig& c) { return c.eval.split; },
                                [](RunConfig& c, const std::string& v) { c.eval.split = v; }};
  reg["eval.checkpoint"] = ConfigKey{
      [](const RunConfig& c) { return c.eval.checkpoint; },
      [](RunConfig& c, const std::string& v) { c.eval.checkpoint = v; }};
  reg["eval.model"] = ConfigKey{
      [](const RunConfig& c) { return c.eval.model; },
      [](RunConfig& c, const std::string& v) {
        if (v != "ddet" && v != "none") {
          throw ConfigError("key 'eval.model': expected ddet or none, got '" + v + "'");
        }
        c.eval.model = v;
      }};
  reg["eval.dump_images"] = ConfigKey{
      [](const RunConfig& c) { return c.eval.dump_images ? std::string("true") : "false"; },
      [](RunConfig& c, const std::string& v) {
        c.eval.dump_images = parse_bool_value(v, "eval.dump_images");
      }};
  reg["eval.synthetic"] = ConfigKey{
      [](const RunConfig& c) { return c.eval.synthetic ? std::string("true") : "false"; },
      [](RunConfig& c, const std::string& v) {
        c.eval.synthetic = parse_bool_value(v, "eval.synthetic");
      }};

  // ablate.*
  reg["ablate.steps"] = ConfigKey{
      [](const RunConfig& c) { return std::to_string(c.ablate.steps); },
      [](RunConfig& c, const std::string& v) {
        c.ablate.steps = static_cast<int>(parse_int_value(v, "ablate.steps"));
      }};
  reg["ablate.train_count"] = ConfigKey{
      [](const RunConfig& c) { return std::to_string(c.ablate.train_count); },
      [](RunConfig& c, const std::string& v) {
        c.ablate.train_count = static_cast<int>(parse_int_value(v, "ablate.train_count"));
      }};
  reg["ablate.eval_count"] = ConfigKey{
      [](const RunConfig& c) { return std::to_string(c.ablate.eval_count); },
      [](RunConfig& c, const std::string& v) {
        c.ablate.eval_count = static_cast<int>(parse_int_value(v, "ablate.eval_count"));
      }};

  // bench.*
  reg["bench.configs"] = ConfigKey{
      [](const RunConfig& c) { return c.bench.configs; },
      [](RunConfig& c, const std::string& v) { c.bench.configs = v; }};
  reg["bench.input_size"] = ConfigKey{
      [](const RunConfig& c) { return std::to_string(c.bench.input_size); },
      [](RunConfig& c, const std::string& v) {
        c.bench.input_size = static_cast<int>(parse_int_value(v, "bench.input_size"));
      }};
  reg["bench.repeats"] = ConfigKey{
      [](const RunConfig& c) { return std::to_string(c.bench.repeats); },
      [](RunConfig& c, const std::string& v) {
        c.bench.repeats = static_cast<int>(parse_int_value(v, "bench.repeats"));
      }};
  reg["bench.warmups"] = ConfigKey{
      [](const RunConfig& c) { return std::to_string(c.bench.warmups); },
      [](RunConfig& c, const std::string& v) {
        c.bench.warmups = static_cast<int>(parse_int_value(v, "bench.warmups"));
      }};

  // paths.*
  reg["paths.data_root"] = ConfigKey{
      [](const RunConfig& c) { return c.paths.data_root; },
      [](RunConfig& c, const std::string& v) { c.paths.data_root = v; }};
  reg["paths.out_dir"] = ConfigKey{
      [](const RunConfig& c) { return c.paths.out_dir; },
      [](RunConfig& c, const std::string& v) { c.paths.out_dir = v; }};

  return reg;
}

inline const std::map<std::string, ConfigKey>& config_registry() {
  static const std::map<std::string, ConfigKey> reg = build_config_registry();
  return reg;
}

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace detail

// Sets one key, rejecting unknown names (typo safety).
inline void apply_override(RunConfig& cfg, const std::string& key, const std::string& value) {
  const auto& reg = detail::config_registry();
  auto it = reg.find(key);
  if (it == reg.end()) throw ConfigError("unknown config key '" + key + "'");
  it->second.set(cfg, value);
}

inline RunConfig parse_config_text(const std::string& text) {
  RunConfig cfg;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(lineno) + ": expected 'key = value', got '" +
                        line + "'");
    }
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string value = detail::trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError("line " + std::to_string(lineno) + ": empty key");
    try {
      apply_override(cfg, key, value);
    } catch (const ConfigError& e) {
      throw ConfigError("line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return cfg;
}

inline RunConfig parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

// Emits every key in sorted order; parse(serialize(cfg)) == cfg.
inline std::string serialize_config(const RunConfig& cfg) {
  std::string out;
  for (const auto& [key, entry] : detail::config_registry()) {
    out += key;
    out += " = ";
    out += entry.get(cfg);
    out += "\n";
  }
  return out;
}

}  // namespace ddet
