#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "varconet/dataio.hpp"
#include "varconet/types.hpp"

namespace varconet {

struct SynthConfig {
  int n_subjects = 80;
  int n_sessions = 2;
  int regions = 16;
  int timepoints = 320;
  double tr_seconds = 1.5;
  double sigma_subject = 0.4;
  double sigma_session = 0.15;
  double ar_coeff = 0.3;
  // Assign alternating labels 0/1 to subjects and plant the effect on label 1.
  bool labeled = false;
  std::vector<std::pair<int, int>> effect_edges;
  double effect_delta = 0.0;
  std::uint64_t seed = 0;

  void validate() const;
  bool operator==(const SynthConfig&) const = default;
};

void to_json(nlohmann::json& j, const SynthConfig& c);
void from_json(const nlohmann::json& j, SynthConfig& c);

struct SubjectTruth {
  std::string subject_id;
  int label = 0;
  Matrix latent;                 // subject-level correlation
  std::vector<Matrix> sessions;  // realized per-session correlation
};

struct GroundTruth {
  Matrix base;
  std::vector<SubjectTruth> subjects;
};

nlohmann::json to_json(const GroundTruth& truth);

// Clips eigenvalues below 1e-6 and rescales to unit diagonal. Throws
// InvariantError for asymmetric input and DegenerateError when a diagonal
// entry vanishes.
Matrix project_to_correlation(const Matrix& m);

// project_to_correlation(base + sigma * S), S symmetric with zero diagonal
// and i.i.d. N(0, 1) off-diagonal entries. sigma == 0 returns base as is.
Matrix sample_subject_correlation(const Matrix& base, double sigma, Rng& rng);

// T multivariate-normal draws with covariance C, AR(1) filtered per region,
// then standardized to zero mean and unit variance per region.
Matrix sample_session_timeseries(const Matrix& corr, Eigen::Index timepoints, double ar_coeff,
                                 Rng& rng);

// Rank-3 factor model base, projected.
Matrix sample_base_correlation(Eigen::Index regions, Rng& rng);

std::string synth_subject_id(int index);

std::pair<Cohort, GroundTruth> generate_cohort(const SynthConfig& cfg);

}  // namespace varconet
