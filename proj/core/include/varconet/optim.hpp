#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include <nlohmann/json.hpp>

#include "varconet/nn.hpp"
#include "varconet/types.hpp"

namespace varconet {

// Bias-corrected Adam with moments kept per tensor of a ParamStore.
struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::int64_t step = 0;
  std::vector<Vector> m;
  std::vector<Vector> v;

  static AdamState for_params(const ParamStore& params);
};

// One update from params[i].grad. Throws NumericError on a non-finite
// gradient before touching any parameter.
void adam_step(ParamStore& params, AdamState& state, double lr);

struct ScheduleConfig {
  int warmup_epochs = 10;
  int total_epochs = 100;
  double peak_lr = 2.375e-4;
  double floor_lr = 0.0;

  void validate() const;
};

// Linear warmup to peak over warmup_epochs, then cosine annealing that
// reaches floor_lr exactly at the final epoch.
double lr_at(int epoch, const ScheduleConfig& cfg);

// Softmax cross-entropy on 2-class logits, reported as BCE of p(class 1)
// with p clamped to [1e-7, 1 - 1e-7].
double binary_cross_entropy(const std::vector<double>& probs, const std::vector<int>& labels);

struct ProbeEpoch {
  int epoch = 0;
  double train_bce = 0.0;
  double val_bce = 0.0;
};

struct ProbeResult {
  ParamStore head;  // "head.weight" [D, 2], "head.bias" [2]
  double min_val_bce = 0.0;
  int best_epoch = 0;
  std::vector<ProbeEpoch> log;
};

struct ProbeConfig {
  int epochs = 300;
  double lr = 1e-2;
};

// Full-batch Adam on a zero-initialized linear head. Returns the snapshot
// with the smallest validation BCE (earliest on ties). Rows of the matrices
// are samples.
ProbeResult train_linear_probe(const Matrix& train_x, const std::vector<int>& train_y,
                               const Matrix& val_x, const std::vector<int>& val_y,
                               const ProbeConfig& cfg);

// p(class 1) for every row.
std::vector<double> predict_proba(const ParamStore& head, const Matrix& x);

enum class Criterion { Minimize, Maximize };

struct CheckpointRecord {
  int epoch = 0;
  double metric = 0.0;
  std::optional<ParamStore> encoder;
  std::optional<ParamStore> head;
};

// Index of the best record under the criterion; earliest epoch wins ties.
std::size_t best_index(const std::vector<CheckpointRecord>& log, Criterion criterion);
const CheckpointRecord& restore_best(const std::vector<CheckpointRecord>& log, Criterion criterion);

}  // namespace varconet
