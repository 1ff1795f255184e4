#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "varconet/types.hpp"

namespace varconet {

// One session of parcellated time series: rows are regions, columns are
// time points sampled every tr_seconds.
struct Recording {
  std::string subject_id;
  int session_index = 0;
  Matrix data;
  double tr_seconds = 1.5;

  Eigen::Index regions() const { return data.rows(); }
  Eigen::Index timepoints() const { return data.cols(); }
};

// Throws InvariantError when R < 2, T < 1, session not in {0,1}, non-finite
// values or tr <= 0.
void validate(const Recording& rec);

struct Cohort {
  std::vector<Recording> recordings;
  std::optional<std::map<std::string, int>> labels;
  nlohmann::json meta = nlohmann::json::object();

  // Distinct subject ids in order of first appearance.
  std::vector<std::string> subjects() const;
  // Index of the recording for (subject, session), or nullopt.
  std::optional<std::size_t> find(const std::string& subject, int session) const;
};

// Duplicate (subject, session), labels on subjects without recordings and
// non-binary labels are invariant errors.
void validate(const Cohort& cohort);

inline constexpr const char* kCohortFormatTag = "VCND";
inline constexpr int kCohortFormatVersion = 1;

// Writes manifest.json plus one <subject>_ses<k>.f32 per recording.
// Output bytes depend only on the cohort contents. All recordings must share
// one TR because the manifest carries a single tr_seconds.
void save_cohort(const Cohort& cohort, const std::filesystem::path& dir);
Cohort load_cohort(const std::filesystem::path& dir);

// Linear interpolation onto a grid of spacing target_tr starting at t = 0.
// T_out = floor((T_in - 1) * tr_in / target_tr) + 1.
Recording resample_tr(const Recording& rec, double target_tr);

// Columns [start, start + length).
Recording crop_recording(const Recording& rec, Eigen::Index start, Eigen::Index length);

// Raw little-endian f32 matrix blobs (row-major, region-major).
void write_f32_matrix(const std::filesystem::path& file, const Matrix& m);
Matrix read_f32_matrix(const std::filesystem::path& file, Eigen::Index rows, Eigen::Index cols);

// Embedding matrix file: rows are (subject, session) FC vectors. The sidecar
// <file>.json maps rows back to recordings.
struct EmbeddingTable {
  std::vector<std::string> subject_ids;
  std::vector<int> sessions;
  Matrix values;  // rows x dim
  int regions = 0;
};

void save_embeddings(const EmbeddingTable& table, const std::filesystem::path& file);
EmbeddingTable load_embeddings(const std::filesystem::path& file);

}  // namespace varconet
