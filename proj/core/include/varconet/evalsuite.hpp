#pragma once

#include <array>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "varconet/dataio.hpp"
#include "varconet/types.hpp"

namespace varconet {

// Maps an R x w segment to an FC vector.
using Embedder = std::function<Vector(const Matrix&)>;

// starts_i = round(i * (T - w) / (n - 1)); a single segment starts at 0.
std::vector<Eigen::Index> spaced_segments(Eigen::Index t, Eigen::Index w, int n);

// Pearson correlation of two equally long vectors. Throws DegenerateError
// when either is constant.
double pearson(const Eigen::Ref<const Vector>& a, const Eigen::Ref<const Vector>& b);

// M[i, j] = PCC(A1_i, A2_j).
Matrix similarity_matrix(const Matrix& a1, const Matrix& a2);

// Fraction of the 2N anchored identifications (A1 rows against A2 and the
// reverse) whose maximum-PCC partner is the same subject. Ties fail.
double identification_rate(const Matrix& a1, const Matrix& a2);
double identification_rate_from_similarity(const Matrix& sim);

// Pearson FC of region rows, vectorized upper triangle.
Vector pcc_fc(const Matrix& timeseries);
inline Vector pcc_fc(const Recording& rec) { return pcc_fc(rec.data); }

enum class ObjectiveKind { HarmonicMean, Sum };

// 2am / (a + m) of the mean a and minimum m; 0 when a + m == 0.
double objective_score(const std::vector<double>& rates,
                       ObjectiveKind kind = ObjectiveKind::HarmonicMean);

struct CombinationResult {
  int length_a = 0;
  int length_b = 0;
  std::vector<double> rates;  // one per segment draw
  double mean = 0.0;
  double sd = 0.0;
  std::optional<Matrix> similarity;  // from segment draw 0

  std::string label() const { return std::to_string(length_a) + "-" + std::to_string(length_b); }
};

struct FingerprintReport {
  std::vector<CombinationResult> combinations;
  double objective = 0.0;
  int subjects = 0;

  double min_mean() const;
  const CombinationResult& find(int a, int b) const;
};

nlohmann::json to_json(const FingerprintReport& report);

struct FingerprintOptions {
  std::array<int, 3> lengths{80, 200, 320};
  int segments = 10;
  bool keep_similarity = false;
  ObjectiveKind objective = ObjectiveKind::HarmonicMean;
};

// Subjects with both sessions take part. For each of the six length
// combinations and each segment draw k, session 0 is cut at spaced start k
// with the first length and session 1 with the second.
FingerprintReport fingerprint_protocol(const Cohort& cohort, const Embedder& embed,
                                       const FingerprintOptions& options = {});
FingerprintReport fingerprint_protocol(const Cohort& cohort,
                                       const std::vector<std::string>& subjects,
                                       const Embedder& embed,
                                       const FingerprintOptions& options = {});

struct ClassificationReport {
  double bce = 0.0;
  double auc = 0.0;
  double f1 = 0.0;
  double threshold = 0.0;
  int tp = 0, fp = 0, tn = 0, fn = 0;
  std::vector<double> probs;
};

nlohmann::json to_json(const ClassificationReport& report);

// Rank-statistic AUC with ties counted half.
double auc_score(const std::vector<double>& probs, const std::vector<int>& labels);

ClassificationReport classification_metrics(const std::vector<double>& probs,
                                            const std::vector<int>& labels);

// Hard decision for a time-series segment.
using Predictor = std::function<int(const Matrix&)>;

struct StabilityReport {
  double percent_changed = 0.0;
  int instances = 0;
  int unstable = 0;
  int skipped = 0;
};

// Each recording is cropped to windows of the given durations at its
// beginning, middle and end; an instance is unstable when any crop's
// decision differs from the full-signal decision.
StabilityReport stability_eval(const std::vector<Predictor>& models,
                               const std::vector<Recording>& recordings,
                               const std::vector<double>& window_minutes = {3.0, 4.0});

struct RankedEdge {
  Eigen::Index index = 0;
  Eigen::Index region_i = 0;
  Eigen::Index region_j = 0;
  double importance = 0.0;
};

struct ImportanceVector {
  Vector values;
  std::vector<RankedEdge> ranking;  // sorted by |I| descending
};

// I = mean over heads of (w[:, 1] - w[:, 0]); ranking holds the top_k edges
// (all edges when top_k <= 0).
ImportanceVector feature_importance(const std::vector<Matrix>& head_weights, int top_k = 20);

}  // namespace varconet
