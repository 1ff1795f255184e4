#include "varconet/train.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <mutex>
#include <set>
#include <thread>

#include "varconet/contrastive.hpp"
#include "varconet/error.hpp"

namespace varconet {

using nlohmann::json;

void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& fn) {
  const auto w = static_cast<std::size_t>(std::max(1, workers));
  if (w == 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::exception_ptr failure;
  std::mutex mu;
  std::vector<std::thread> threads;
  for (std::size_t t = 0; t < std::min(w, n); ++t) {
    threads.emplace_back([&, t] {
      try {
        for (std::size_t i = t; i < n; i += w) fn(i);
      } catch (...) {
        std::lock_guard lock(mu);
        if (!failure) failure = std::current_exception();
      }
    });
  }
  for (auto& th : threads) th.join();
  if (failure) std::rethrow_exception(failure);
}

json to_json(const EpochLog& e, const std::string& metric_name) {
  json j{{"epoch", e.epoch}, {"mean_loss", e.mean_loss}, {"lr", e.lr}, {"batches", e.batches}};
  j[metric_name] = e.metric ? json(*e.metric) : json(nullptr);
  for (auto it = e.details.begin(); it != e.details.end(); ++it) j[it.key()] = it.value();
  return j;
}

double contrastive_batch_gradient(const Encoder& encoder, const std::vector<Matrix>& views,
                                  Eigen::Index padded_to, double tau, ParamStore& grads_out,
                                  int workers) {
  const std::size_t m = views.size();
  std::vector<Encoder::Cache> caches(m);
  std::vector<Vector> z(m);
  parallel_for(m, workers, [&](std::size_t i) {
    z[i] = encoder.fc_vector(views[i], padded_to, &caches[i]);
  });
  const NtXentResult loss = ntxent_loss(z, tau);
  if (!std::isfinite(loss.loss)) throw NumericError("non-finite contrastive loss");

  std::vector<GradBuffer> buffers(m);
  parallel_for(m, workers, [&](std::size_t i) {
    buffers[i] = encoder.params().make_grad_buffer();
    encoder.backward(caches[i], loss.grad[i], buffers[i]);
  });
  grads_out.zero_grad();
  for (const auto& b : buffers) grads_out.accumulate(b);
  return loss.loss;
}

TrainResult train_contrastive(const Cohort& train, const HyperParams& hp, const TrainConfig& cfg,
                              const std::optional<ValidationHook>& hook,
                              const EpochCallback& on_epoch) {
  if (train.recordings.empty()) throw InvariantError("training cohort is empty");
  const Eigen::Index regions = train.recordings.front().regions();
  hp.validate(regions);
  if (cfg.epochs < 0) throw InvariantError("epochs must be >= 0");

  Rng init_rng = make_stream(cfg.seed, 0x696e6974ull);
  TrainResult result{Encoder(regions, hp, init_rng), {}, std::nullopt};
  if (cfg.epochs == 0) return result;

  ScheduleConfig schedule{std::min(cfg.warmup_epochs, cfg.epochs), cfg.epochs, hp.lr, cfg.floor_lr};
  schedule.validate();
  Encoder& encoder = result.final_encoder;
  AdamState adam = AdamState::for_params(encoder.params());

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng rng = make_stream(cfg.seed, static_cast<std::uint64_t>(epoch));
    const double lr = lr_at(epoch, schedule);
    const auto batches = make_batches(train, hp.batch_size, rng);
    double loss_sum = 0.0;
    for (std::size_t b = 0; b < batches.size(); ++b) {
      const ContrastInputs in = sample_views(train, batches[b], hp.l_min, hp.l_max, rng);
      double loss = 0.0;
      try {
        loss = contrastive_batch_gradient(encoder, in.views, hp.l_max, hp.tau, encoder.params(),
                                          cfg.workers);
        adam_step(encoder.params(), adam, lr);
      } catch (const NumericError& e) {
        throw NumericError("epoch " + std::to_string(epoch) + ", batch " + std::to_string(b) +
                           ": " + e.what());
      }
      loss_sum += loss;
    }

    EpochLog entry;
    entry.epoch = epoch;
    entry.lr = lr;
    entry.batches = static_cast<int>(batches.size());
    entry.mean_loss = batches.empty() ? 0.0 : loss_sum / static_cast<double>(batches.size());

    const bool run_hook = hook && (epoch % std::max(1, cfg.hook_stride) == 0 || epoch == cfg.epochs - 1);
    if (run_hook) {
      HookResult h = hook->run(encoder, epoch);
      entry.metric = h.metric;
      entry.details = h.details;
      const bool better =
          !result.best ||
          (hook->criterion == Criterion::Maximize ? h.metric > result.best->metric
                                                  : h.metric < result.best->metric);
      if (better) {
        CheckpointRecord rec;
        rec.epoch = epoch;
        rec.metric = h.metric;
        rec.encoder = encoder.params();
        rec.head = std::move(h.head);
        result.best = std::move(rec);
      }
    }
    if (on_epoch) on_epoch(encoder, entry);
    result.log.push_back(std::move(entry));
  }
  return result;
}

Matrix embed_recordings(const Encoder& encoder, const std::vector<const Recording*>& recordings,
                        int workers) {
  const auto d = static_cast<Eigen::Index>(n_pairs(static_cast<std::size_t>(encoder.regions())));
  Matrix out(static_cast<Eigen::Index>(recordings.size()), d);
  parallel_for(recordings.size(), workers, [&](std::size_t i) {
    out.row(static_cast<Eigen::Index>(i)) = encoder.fc_vector(recordings[i]->data).transpose();
  });
  return out;
}

Embedder encoder_embedder(const Encoder& encoder) {
  return [&encoder](const Matrix& x) { return encoder.fc_vector(x); };
}

ValidationHook make_fingerprint_hook(const Cohort& val, FingerprintOptions options, int) {
  ValidationHook hook;
  hook.criterion = Criterion::Maximize;
  hook.metric_name = "fingerprint_objective";
  hook.run = [&val, options](const Encoder& encoder, int) {
    const FingerprintReport rep = fingerprint_protocol(val, encoder_embedder(encoder), options);
    HookResult h;
    h.metric = rep.objective;
    json rates = json::object();
    for (const auto& c : rep.combinations) rates[c.label()] = c.mean;
    h.details = json{{"fingerprint_rates", rates}};
    return h;
  };
  return hook;
}

std::pair<std::vector<const Recording*>, std::vector<int>> labeled_recordings(const Cohort& c) {
  if (!c.labels) throw InvariantError("cohort has no labels");
  std::vector<const Recording*> recs;
  std::vector<int> labels;
  for (const auto& r : c.recordings) {
    auto it = c.labels->find(r.subject_id);
    if (it == c.labels->end()) continue;
    recs.push_back(&r);
    labels.push_back(it->second);
  }
  return {recs, labels};
}

ValidationHook make_probe_hook(const Cohort& train, const Cohort& val, ProbeConfig probe,
                               int workers) {
  ValidationHook hook;
  hook.criterion = Criterion::Minimize;
  hook.metric_name = "probe_val_bce";
  hook.run = [&train, &val, probe, workers](const Encoder& encoder, int) {
    auto [train_recs, train_y] = labeled_recordings(train);
    auto [val_recs, val_y] = labeled_recordings(val);
    const Matrix xtr = embed_recordings(encoder, train_recs, workers);
    const Matrix xva = embed_recordings(encoder, val_recs, workers);
    ProbeResult pr = train_linear_probe(xtr, train_y, xva, val_y, probe);
    HookResult h;
    h.metric = pr.min_val_bce;
    h.details = json{{"probe_best_epoch", pr.best_epoch}};
    h.head = std::move(pr.head);
    return h;
  };
  return hook;
}

SubjectSplit split_subjects(const Cohort& cohort, int n_train, int n_val, int n_test,
                            std::uint64_t seed) {
  std::vector<std::string> ids = cohort.subjects();
  std::sort(ids.begin(), ids.end());
  if (n_train < 0 || n_val < 0 || n_test < 0 ||
      static_cast<std::size_t>(n_train + n_val + n_test) > ids.size()) {
    throw InvariantError("split " + std::to_string(n_train) + "/" + std::to_string(n_val) + "/" +
                         std::to_string(n_test) + " needs more than the " +
                         std::to_string(ids.size()) + " subjects available");
  }
  Rng rng = make_stream(seed, 0x73706c6974ull);
  std::shuffle(ids.begin(), ids.end(), rng);
  SubjectSplit s;
  auto it = ids.begin();
  s.train.assign(it, it + n_train);
  it += n_train;
  s.val.assign(it, it + n_val);
  it += n_val;
  s.test.assign(it, it + n_test);
  return s;
}

Cohort select_subjects(const Cohort& cohort, const std::vector<std::string>& subjects) {
  const std::set<std::string> keep(subjects.begin(), subjects.end());
  Cohort out;
  out.meta = cohort.meta;
  for (const auto& r : cohort.recordings)
    if (keep.count(r.subject_id)) out.recordings.push_back(r);
  if (cohort.labels) {
    out.labels.emplace();
    for (const auto& [s, l] : *cohort.labels)
      if (keep.count(s)) (*out.labels)[s] = l;
  }
  return out;
}

}  // namespace varconet
