#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "varconet/encoder.hpp"
#include "varconet/evalsuite.hpp"
#include "varconet/optim.hpp"
#include "varconet/synth.hpp"
#include "varconet/tpe.hpp"

namespace varconet {

struct TrainSection {
  int epochs = 100;
  int warmup_epochs = 10;
  double floor_lr = 0.0;
  std::uint64_t seed = 0;
  int hook_stride = 1;
  // Subject split of the input cohort, drawn with `seed`.
  int n_train = 40;
  int n_val = 10;
  int n_test = 30;
  // "fingerprint" or "probe": which validation hook selects the best epoch.
  std::string selection = "fingerprint";

  bool operator==(const TrainSection&) const = default;
};

struct EvalSection {
  // Evaluation lengths, and the shorter set used by the per-epoch
  // validation hook during training and search.
  std::array<int, 3> lengths{80, 200, 320};
  std::array<int, 3> validation_lengths{30, 175, 320};
  int segments = 10;
  std::string objective = "harmonic_mean";  // or "sum"
  std::vector<double> window_minutes{3.0, 4.0};
  int probe_epochs = 300;
  double probe_lr = 1e-2;
  int top_k = 20;

  FingerprintOptions fingerprint_options(bool validation = false) const;
  ProbeConfig probe_config() const { return {probe_epochs, probe_lr}; }
  bool operator==(const EvalSection&) const = default;
};

struct TuneSection {
  int n_trials = 125;
  int n_startup = 15;
  double gamma = 0.25;
  int n_candidates = 24;
  int epochs = 20;
  // Per-dimension overrides: a list of choices for categorical dimensions,
  // {"low": a, "high": b} for log-uniform ones.
  std::map<std::string, nlohmann::json> space;

  TpeConfig tpe() const { return {n_startup, gamma, n_candidates}; }
  SearchSpace search_space(int regions) const;
  bool operator==(const TuneSection&) const = default;
};

struct PathsSection {
  std::string cohort = "cohort";
  std::string out = "out";
  std::string checkpoint;

  bool operator==(const PathsSection&) const = default;
};

struct RunConfig {
  SynthConfig synth;
  HyperParams model;
  TrainSection train;
  EvalSection eval;
  TuneSection tune;
  PathsSection paths;

  void validate() const;
  bool operator==(const RunConfig&) const = default;
};

nlohmann::json to_json(const RunConfig& cfg);

// Defaults overlaid with `j`. Unknown keys, type mismatches and invariant
// violations raise ConfigError naming the key path.
RunConfig parse_config(const nlohmann::json& j);
RunConfig parse_config_file(const std::filesystem::path& file);

}  // namespace varconet
