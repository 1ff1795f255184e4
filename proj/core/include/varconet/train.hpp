#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include <nlohmann/json.hpp>

#include "varconet/dataio.hpp"
#include "varconet/encoder.hpp"
#include "varconet/evalsuite.hpp"
#include "varconet/optim.hpp"

namespace varconet {

struct TrainConfig {
  int epochs = 100;
  int warmup_epochs = 10;
  double floor_lr = 0.0;
  std::uint64_t seed = 0;
  int workers = 1;
  // Run the validation hook every `hook_stride` epochs (and on the last one).
  int hook_stride = 1;
};

struct HookResult {
  double metric = 0.0;
  nlohmann::json details = nlohmann::json::object();
  std::optional<ParamStore> head;
};

struct ValidationHook {
  std::function<HookResult(const Encoder&, int epoch)> run;
  Criterion criterion = Criterion::Maximize;
  std::string metric_name = "metric";
};

struct EpochLog {
  int epoch = 0;
  double mean_loss = 0.0;
  double lr = 0.0;
  int batches = 0;
  std::optional<double> metric;
  nlohmann::json details = nlohmann::json::object();
};

nlohmann::json to_json(const EpochLog& e, const std::string& metric_name);

struct TrainResult {
  Encoder final_encoder;
  std::vector<EpochLog> log;
  // Best epoch under the hook criterion, earliest on ties. Empty when no
  // hook ran.
  std::optional<CheckpointRecord> best;
};

using EpochCallback = std::function<void(const Encoder&, const EpochLog&)>;

// Contrastive training on the recordings of `train`: per batch, sample two
// views per recording, encode them padded to l_max, apply NT-Xent and take
// one Adam step with the scheduled learning rate.
TrainResult train_contrastive(const Cohort& train, const HyperParams& hp, const TrainConfig& cfg,
                              const std::optional<ValidationHook>& hook = std::nullopt,
                              const EpochCallback& on_epoch = {});

// Mean NT-Xent loss and gradient for one batch of views; grads are summed
// per sample in index order. Exposed for gradient checks and benchmarks.
double contrastive_batch_gradient(const Encoder& encoder, const std::vector<Matrix>& views,
                                  Eigen::Index padded_to, double tau, ParamStore& grads_out,
                                  int workers = 1);

// FC vectors of whole recordings, one row each.
Matrix embed_recordings(const Encoder& encoder, const std::vector<const Recording*>& recordings,
                        int workers = 1);

Embedder encoder_embedder(const Encoder& encoder);

// Fingerprinting on `val` after each epoch; metric = objective score.
ValidationHook make_fingerprint_hook(const Cohort& val, FingerprintOptions options, int workers = 1);

// Linear probe trained on `train` embeddings, scored by min validation BCE.
ValidationHook make_probe_hook(const Cohort& train, const Cohort& val, ProbeConfig probe,
                               int workers = 1);

// Recordings and labels of every labeled subject.
std::pair<std::vector<const Recording*>, std::vector<int>> labeled_recordings(const Cohort& c);

// Disjoint subject subsets, shuffled by seed; counts are taken in order
// train, val, test. Throws when the cohort has too few subjects.
struct SubjectSplit {
  std::vector<std::string> train, val, test;
};
SubjectSplit split_subjects(const Cohort& cohort, int n_train, int n_val, int n_test,
                            std::uint64_t seed);
Cohort select_subjects(const Cohort& cohort, const std::vector<std::string>& subjects);

// Runs fn(i) for i in [0, n) on up to `workers` threads with a static
// round-robin partition.
void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& fn);

}  // namespace varconet
