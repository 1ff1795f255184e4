#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "varconet/types.hpp"

namespace varconet {

struct Dimension {
  enum class Kind { Categorical, LogUniform };

  std::string name;
  Kind kind = Kind::Categorical;
  std::vector<double> choices;  // categorical
  double low = 0.0;             // log-uniform
  double high = 0.0;

  static Dimension categorical(std::string name, std::vector<double> choices);
  static Dimension log_uniform(std::string name, double low, double high);

  bool contains(double value) const;
};

struct SearchSpace {
  std::vector<Dimension> dimensions;

  void validate() const;
  std::size_t index_of(const std::string& name) const;

  // n_layers, n_heads (divisors of regions only), ff_dim, batch_size, lr, tau.
  static SearchSpace encoder_default(int regions);
};

// Values aligned with SearchSpace::dimensions; categorical entries hold the
// chosen value itself.
using Assignment = std::vector<double>;

enum class TrialStatus { Complete, Failed };

struct TrialRecord {
  Assignment assignment;
  double objective = 0.0;
  TrialStatus status = TrialStatus::Complete;
};

struct TpeConfig {
  int n_startup = 15;
  double gamma = 0.25;
  int n_candidates = 24;
};

// One draw from the prior: uniform over choices, log-uniform over ranges.
Assignment sample_uniform(const SearchSpace& space, Rng& rng);

Assignment suggest(const std::vector<TrialRecord>& history, const SearchSpace& space, Rng& rng,
                   const TpeConfig& cfg = {});

// Appends a record; throws InvariantError for an assignment outside the space.
void observe(std::vector<TrialRecord>& history, const SearchSpace& space, Assignment assignment,
             std::optional<double> objective);

// Objective for (assignment, trial seed); throwing marks the trial failed.
using ObjectiveFn = std::function<double(const Assignment&, std::uint64_t)>;

struct SearchResult {
  Assignment best;
  double best_objective = 0.0;
  std::vector<TrialRecord> history;
  std::vector<double> running_best;
};

// Resumes from `history` when it is non-empty. When log_path is given each
// finished trial is appended to it as one JSON line.
SearchResult run_search(const SearchSpace& space, const ObjectiveFn& objective, int n_trials,
                        std::uint64_t seed, const TpeConfig& cfg = {},
                        std::vector<TrialRecord> history = {},
                        const std::optional<std::filesystem::path>& log_path = std::nullopt);

nlohmann::json to_json(const SearchSpace& space, const TrialRecord& record);
TrialRecord trial_from_json(const SearchSpace& space, const nlohmann::json& j);
std::vector<TrialRecord> load_history(const SearchSpace& space, const std::filesystem::path& file);

}  // namespace varconet
