#include "varconet/optim.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "varconet/error.hpp"

namespace varconet {

AdamState AdamState::for_params(const ParamStore& params) {
  AdamState s;
  for (const auto& t : params) {
    s.m.push_back(Vector::Zero(t.size()));
    s.v.push_back(Vector::Zero(t.size()));
  }
  return s;
}

void adam_step(ParamStore& params, AdamState& state, double lr) {
  if (state.m.size() != params.size()) {
    throw InvariantError("optimizer state does not match parameter count");
  }
  for (const auto& t : params) {
    if (!t.grad.allFinite()) throw NumericError("non-finite gradient for " + t.name);
  }
  state.step += 1;
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& t = params[i];
    auto& m = state.m[i];
    auto& v = state.v[i];
    if (m.size() != t.size()) throw InvariantError("optimizer moment shape mismatch for " + t.name);
    m = state.beta1 * m + (1.0 - state.beta1) * t.grad;
    v = state.beta2 * v + (1.0 - state.beta2) * t.grad.cwiseProduct(t.grad);
    t.values.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + state.epsilon);
  }
}

void ScheduleConfig::validate() const {
  if (total_epochs < 0) throw InvariantError("schedule: total_epochs must be >= 0");
  if (warmup_epochs < 0 || warmup_epochs > total_epochs) {
    throw InvariantError("schedule: warmup_epochs must lie in [0, total_epochs]");
  }
  if (!(peak_lr > 0.0)) throw InvariantError("schedule: peak_lr must be positive");
  if (floor_lr < 0.0 || floor_lr > peak_lr) {
    throw InvariantError("schedule: floor_lr must lie in [0, peak_lr]");
  }
}

double lr_at(int epoch, const ScheduleConfig& cfg) {
  if (epoch < 0 || epoch >= cfg.total_epochs) {
    throw BoundsError("epoch " + std::to_string(epoch) + " outside [0, " +
                      std::to_string(cfg.total_epochs) + ")");
  }
  if (epoch < cfg.warmup_epochs) {
    return cfg.peak_lr * static_cast<double>(epoch + 1) / static_cast<double>(cfg.warmup_epochs);
  }
  const int span = cfg.total_epochs - cfg.warmup_epochs - 1;
  const double t = span > 0 ? static_cast<double>(epoch - cfg.warmup_epochs) / span : 0.0;
  return cfg.floor_lr + (cfg.peak_lr - cfg.floor_lr) * (1.0 + std::cos(std::numbers::pi * t)) / 2.0;
}

double binary_cross_entropy(const std::vector<double>& probs, const std::vector<int>& labels) {
  if (probs.size() != labels.size() || probs.empty()) {
    throw InvariantError("binary_cross_entropy: probs and labels must be non-empty and aligned");
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const double p = std::clamp(probs[i], 1e-7, 1.0 - 1e-7);
    sum += labels[i] == 1 ? std::log(p) : std::log(1.0 - p);
  }
  return -sum / static_cast<double>(probs.size());
}

namespace {

void check_labels(const std::vector<int>& y, Eigen::Index rows, const char* which) {
  if (static_cast<Eigen::Index>(y.size()) != rows) {
    throw InvariantError(std::string(which) + " labels do not match embedding rows");
  }
  for (int v : y)
    if (v != 0 && v != 1) throw InvariantError(std::string(which) + " labels must be 0 or 1");
}

// Mean softmax cross-entropy; fills gradients of the head when requested.
double probe_loss(const ParamStore& head, const Matrix& x, const std::vector<int>& y,
                  GradBuffer* grads) {
  const auto w = head.matrix(0);
  const Vector& b = head[1].values;
  Matrix logits = x * w;
  logits.rowwise() += b.transpose();
  const double n = static_cast<double>(x.rows());
  double loss = 0.0;
  Matrix dlogits(x.rows(), 2);
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    Vector p = softmax(logits.row(i).transpose());
    const int label = y[static_cast<std::size_t>(i)];
    loss -= std::log(std::max(p[label], 1e-300));
    p[label] -= 1.0;
    dlogits.row(i) = p.transpose() / n;
  }
  if (grads) {
    grads->matrix(0, head[0].shape) += x.transpose() * dlogits;
    grads->grads[1] += dlogits.colwise().sum().transpose();
  }
  return loss / n;
}

}  // namespace

std::vector<double> predict_proba(const ParamStore& head, const Matrix& x) {
  LinearHead layer(head);
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(x.rows()));
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    out.push_back(softmax(layer.forward(head, x.row(i).transpose()))[1]);
  }
  return out;
}

ProbeResult train_linear_probe(const Matrix& train_x, const std::vector<int>& train_y,
                               const Matrix& val_x, const std::vector<int>& val_y,
                               const ProbeConfig& cfg) {
  check_labels(train_y, train_x.rows(), "training");
  check_labels(val_y, val_x.rows(), "validation");
  if (train_x.rows() == 0 || val_x.rows() == 0) throw InvariantError("probe needs samples");
  if (std::count(train_y.begin(), train_y.end(), 1) == 0 ||
      std::count(train_y.begin(), train_y.end(), 0) == 0) {
    throw InvariantError("linear probe training labels contain a single class");
  }
  if (train_x.cols() != val_x.cols()) throw InvariantError("probe feature dimensions differ");
  if (cfg.epochs < 1) throw InvariantError("probe needs at least one epoch");

  ParamStore head;
  LinearHead(head, train_x.cols(), 2);  // zero-initialized
  AdamState adam = AdamState::for_params(head);

  ProbeResult result;
  result.min_val_bce = std::numeric_limits<double>::infinity();
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    GradBuffer g = head.make_grad_buffer();
    const double train_loss = probe_loss(head, train_x, train_y, &g);
    head.zero_grad();
    head.accumulate(g);
    adam_step(head, adam, cfg.lr);
    const double val_loss = binary_cross_entropy(predict_proba(head, val_x), val_y);
    result.log.push_back({epoch, train_loss, val_loss});
    if (val_loss < result.min_val_bce) {
      result.min_val_bce = val_loss;
      result.best_epoch = epoch;
      result.head = head;
    }
  }
  result.head.zero_grad();
  return result;
}

std::size_t best_index(const std::vector<CheckpointRecord>& log, Criterion criterion) {
  if (log.empty()) throw InvariantError("restore_best: empty checkpoint log");
  std::size_t best = 0;
  for (std::size_t i = 1; i < log.size(); ++i) {
    const bool better = criterion == Criterion::Minimize ? log[i].metric < log[best].metric
                                                         : log[i].metric > log[best].metric;
    const bool tie_earlier = log[i].metric == log[best].metric && log[i].epoch < log[best].epoch;
    if (better || tie_earlier) best = i;
  }
  return best;
}

const CheckpointRecord& restore_best(const std::vector<CheckpointRecord>& log,
                                     Criterion criterion) {
  return log[best_index(log, criterion)];
}

}  // namespace varconet
