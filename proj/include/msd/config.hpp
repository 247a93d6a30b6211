// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "msd/data.hpp"
#include "msd/errors.hpp"
#include "msd/losses.hpp"
#include "msd/meta_opt.hpp"
#include "msd/weighting.hpp"

namespace msd {

enum class Method { kSmall, kKd, kMsdPopulation, kMsdImportance, kMsdCorrectness, kMsdMeta };

inline std::string method_name(Method m) {
  switch (m) {
    case Method::kSmall: return "small";
    case Method::kKd: return "kd";
    case Method::kMsdPopulation: return "msd-population";
    case Method::kMsdImportance: return "msd-importance";
    case Method::kMsdCorrectness: return "msd-correctness";
    default: return "msd-meta";
  }
}

inline Method method_from_name(const std::string& name) {
  for (Method m : {Method::kSmall, Method::kKd, Method::kMsdPopulation, Method::kMsdImportance,
                   Method::kMsdCorrectness, Method::kMsdMeta})
    if (method_name(m) == name) return m;
  throw ConfigError("unknown method '" + name + "'");
}

struct TeacherTrainConfig {
  int epochs = 40;
  int batch = 32;
  double lr = 1e-3;
  double weight_decay = 0.0;
  double warmup_frac = 0.1;
  std::uint64_t seed = 1;
};

struct StudentTrainConfig {
  std::int64_t max_iters = 3000;
  int batch = 32;
  enum class Optimizer { kAdamW, kSgd };
  Optimizer optimizer = Optimizer::kAdamW;
  double lr = 1e-3;         // AdamW rate
  double weight_decay = 0.0;
  double warmup_frac = 0.1;
  double sgd_lr = 0.05;     // plain-SGD rate when optimizer == kSgd
};

struct WeightingConfig {
  std::string scheme = "msd-meta";  // default method when the CLI omits --method
  double population_w = 1.0, population_w_v = 0.5, population_w_t = 0.5;
  PopulationGrid grid{{0.0, 0.5, 1.0}, {0.0, 0.5, 1.0}, {0.0, 0.5, 1.0}};
};

/// Full experiment configuration; one JSON file drives every subcommand.
struct RunConfig {
  DataGenConfig data;
  std::vector<int> teacher_arch{64, 64};  // hidden layer widths
  std::vector<int> student_arch{8};
  TeacherTrainConfig teacher_train;
  DistillConfig distill;
  StudentTrainConfig train;
  WeightingConfig weighting;
  MetaOptConfig meta;
  int eval_interval = 100;
  std::vector<int> sweep_sizes{1, 2, 3};
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  std::string output_dir = "out";
};

namespace detail {

inline void reject_unknown_keys(const nlohmann::json& obj, const std::set<std::string>& known,
                                const std::string& scope) {
  for (const auto& [key, value] : obj.items())
    if (known.find(key) == known.end())
      throw ConfigError("unknown config key '" + (scope.empty() ? key : scope + "." + key) + "'");
}

template <typename T>
void maybe(const nlohmann::json& obj, const char* key, T& out) {
  if (obj.contains(key)) {
    try {
      out = obj.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(std::string("bad value for config key '") + key + "': " + e.what());
    }
  }
}

}  // namespace detail

inline RunConfig config_from_json(const nlohmann::json& j) {
  using detail::maybe;
  using detail::reject_unknown_keys;
  if (!j.is_object()) throw ConfigError("config root must be a JSON object");
  reject_unknown_keys(j, {"data", "teacher_arch", "student_arch", "teacher_train", "distill",
                          "train", "weighting", "meta", "eval_interval", "sweep_sizes", "seeds",
                          "output_dir"},
                      "");
  RunConfig cfg;
  if (j.contains("data")) {
    const nlohmann::json& d = j.at("data");
    reject_unknown_keys(d, {"num_classes", "d_text", "d_image", "n_train", "n_meta", "n_test",
                            "noise_sigma", "confounder_prob", "seed"},
                        "data");
    maybe(d, "num_classes", cfg.data.num_classes);
    maybe(d, "d_text", cfg.data.d_text);
    maybe(d, "d_image", cfg.data.d_image);
    maybe(d, "n_train", cfg.data.n_train);
    maybe(d, "n_meta", cfg.data.n_meta);
    maybe(d, "n_test", cfg.data.n_test);
    maybe(d, "noise_sigma", cfg.data.noise_sigma);
    maybe(d, "confounder_prob", cfg.data.confounder_prob);
    maybe(d, "seed", cfg.data.seed);
  }
  maybe(j, "teacher_arch", cfg.teacher_arch);
  maybe(j, "student_arch", cfg.student_arch);
  if (j.contains("teacher_train")) {
    const nlohmann::json& t = j.at("teacher_train");
    reject_unknown_keys(t, {"epochs", "batch", "lr", "weight_decay", "warmup_frac", "seed"},
                        "teacher_train");
    maybe(t, "epochs", cfg.teacher_train.epochs);
    maybe(t, "batch", cfg.teacher_train.batch);
    maybe(t, "lr", cfg.teacher_train.lr);
    maybe(t, "weight_decay", cfg.teacher_train.weight_decay);
    maybe(t, "warmup_frac", cfg.teacher_train.warmup_frac);
    maybe(t, "seed", cfg.teacher_train.seed);
  }
  if (j.contains("distill")) {
    const nlohmann::json& d = j.at("distill");
    reject_unknown_keys(d, {"tau", "lambda"}, "distill");
    maybe(d, "tau", cfg.distill.tau);
    maybe(d, "lambda", cfg.distill.lambda);
  }
  if (j.contains("train")) {
    const nlohmann::json& t = j.at("train");
    reject_unknown_keys(t, {"max_iters", "batch", "optimizer", "lr", "weight_decay",
                            "warmup_frac", "sgd_lr"},
                        "train");
    maybe(t, "max_iters", cfg.train.max_iters);
    maybe(t, "batch", cfg.train.batch);
    std::string opt = cfg.train.optimizer == StudentTrainConfig::Optimizer::kAdamW ? "adamw" : "sgd";
    maybe(t, "optimizer", opt);
    if (opt == "adamw")
      cfg.train.optimizer = StudentTrainConfig::Optimizer::kAdamW;
    else if (opt == "sgd")
      cfg.train.optimizer = StudentTrainConfig::Optimizer::kSgd;
    else
      throw ConfigError("unknown optimizer '" + opt + "' (train.optimizer)");
    maybe(t, "lr", cfg.train.lr);
    maybe(t, "weight_decay", cfg.train.weight_decay);
    maybe(t, "warmup_frac", cfg.train.warmup_frac);
    maybe(t, "sgd_lr", cfg.train.sgd_lr);
  }
  if (j.contains("weighting")) {
    const nlohmann::json& w = j.at("weighting");
    reject_unknown_keys(w, {"scheme", "population", "grid"}, "weighting");
    maybe(w, "scheme", cfg.weighting.scheme);
    method_from_name(cfg.weighting.scheme);  // validate
    if (w.contains("population")) {
      const nlohmann::json& p = w.at("population");
      reject_unknown_keys(p, {"w", "w_v", "w_t"}, "weighting.population");
      maybe(p, "w", cfg.weighting.population_w);
      maybe(p, "w_v", cfg.weighting.population_w_v);
      maybe(p, "w_t", cfg.weighting.population_w_t);
    }
    if (w.contains("grid")) {
      const nlohmann::json& g = w.at("grid");
      reject_unknown_keys(g, {"w", "w_v", "w_t"}, "weighting.grid");
      maybe(g, "w", cfg.weighting.grid.w);
      maybe(g, "w_v", cfg.weighting.grid.w_v);
      maybe(g, "w_t", cfg.weighting.grid.w_t);
    }
  }
  if (j.contains("meta")) {
    const nlohmann::json& m = j.at("meta");
    reject_unknown_keys(m, {"alpha", "beta", "train_batch", "meta_batch", "max_iters",
                            "meta_hidden"},
                        "meta");
    maybe(m, "alpha", cfg.meta.alpha);
    maybe(m, "beta", cfg.meta.beta);
    maybe(m, "train_batch", cfg.meta.train_batch);
    maybe(m, "meta_batch", cfg.meta.meta_batch);
    maybe(m, "max_iters", cfg.meta.max_iters);
    maybe(m, "meta_hidden", cfg.meta.meta_hidden);
  }
  maybe(j, "eval_interval", cfg.eval_interval);
  maybe(j, "sweep_sizes", cfg.sweep_sizes);
  maybe(j, "seeds", cfg.seeds);
  maybe(j, "output_dir", cfg.output_dir);

  // Domain checks beyond per-key typing.
  try {
    validate(cfg.data);
    validate(cfg.distill);
    validate(cfg.meta);
  } catch (const ParamError& e) {
    throw ConfigError(e.what());
  }
  if (cfg.eval_interval <= 0) throw ConfigError("eval_interval must be positive");
  if (cfg.seeds.empty()) throw ConfigError("seeds must be nonempty");
  for (int h : cfg.teacher_arch)
    if (h <= 0) throw ConfigError("teacher_arch entries must be positive");
  for (int h : cfg.student_arch)
    if (h <= 0) throw ConfigError("student_arch entries must be positive");
  for (int s : cfg.sweep_sizes)
    if (s <= 0) throw ConfigError("sweep_sizes entries must be positive");
  if (cfg.train.max_iters <= 0) throw ConfigError("train.max_iters must be positive");
  if (cfg.train.batch <= 0) throw ConfigError("train.batch must be positive");
  if (cfg.train.lr <= 0.0 || cfg.train.sgd_lr <= 0.0) throw ConfigError("learning rates must be positive");
  if (cfg.teacher_train.epochs <= 0 || cfg.teacher_train.batch <= 0 || cfg.teacher_train.lr <= 0.0)
    throw ConfigError("teacher_train values must be positive");
  return cfg;
}

inline nlohmann::json config_to_json(const RunConfig& cfg) {
  nlohmann::json j;
  j["data"] = {{"num_classes", cfg.data.num_classes}, {"d_text", cfg.data.d_text},
               {"d_image", cfg.data.d_image},         {"n_train", cfg.data.n_train},
               {"n_meta", cfg.data.n_meta},           {"n_test", cfg.data.n_test},
               {"noise_sigma", cfg.data.noise_sigma}, {"confounder_prob", cfg.data.confounder_prob},
               {"seed", cfg.data.seed}};
  j["teacher_arch"] = cfg.teacher_arch;
  j["student_arch"] = cfg.student_arch;
  j["teacher_train"] = {{"epochs", cfg.teacher_train.epochs}, {"batch", cfg.teacher_train.batch},
                        {"lr", cfg.teacher_train.lr},
                        {"weight_decay", cfg.teacher_train.weight_decay},
                        {"warmup_frac", cfg.teacher_train.warmup_frac},
                        {"seed", cfg.teacher_train.seed}};
  j["distill"] = {{"tau", cfg.distill.tau}, {"lambda", cfg.distill.lambda}};
  j["train"] = {{"max_iters", cfg.train.max_iters},
                {"batch", cfg.train.batch},
                {"optimizer",
                 cfg.train.optimizer == StudentTrainConfig::Optimizer::kAdamW ? "adamw" : "sgd"},
                {"lr", cfg.train.lr},
                {"weight_decay", cfg.train.weight_decay},
                {"warmup_frac", cfg.train.warmup_frac},
                {"sgd_lr", cfg.train.sgd_lr}};
  j["weighting"] = {{"scheme", cfg.weighting.scheme},
                    {"population",
                     {{"w", cfg.weighting.population_w},
                      {"w_v", cfg.weighting.population_w_v},
                      {"w_t", cfg.weighting.population_w_t}}},
                    {"grid",
                     {{"w", cfg.weighting.grid.w},
                      {"w_v", cfg.weighting.grid.w_v},
                      {"w_t", cfg.weighting.grid.w_t}}}};
  j["meta"] = {{"alpha", cfg.meta.alpha},           {"beta", cfg.meta.beta},
               {"train_batch", cfg.meta.train_batch}, {"meta_batch", cfg.meta.meta_batch},
               {"max_iters", cfg.meta.max_iters},   {"meta_hidden", cfg.meta.meta_hidden}};
  j["eval_interval"] = cfg.eval_interval;
  j["sweep_sizes"] = cfg.sweep_sizes;
  j["seeds"] = cfg.seeds;
  j["output_dir"] = cfg.output_dir;
  return j;
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingInputError("missing config: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("cannot parse config " + path + ": " + e.what());
  }
  return config_from_json(j);
}

}  // namespace msd
