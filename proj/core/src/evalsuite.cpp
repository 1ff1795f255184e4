#include "varconet/evalsuite.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <map>
#include <numeric>

#include "varconet/encoder.hpp"
#include "varconet/error.hpp"
#include "varconet/optim.hpp"

namespace varconet {

using nlohmann::json;

std::vector<Eigen::Index> spaced_segments(Eigen::Index t, Eigen::Index w, int n) {
  if (n < 1) throw InvariantError("spaced_segments needs n >= 1");
  if (w < 1 || t < w) {
    throw BoundsError("window of " + std::to_string(w) + " does not fit " + std::to_string(t) +
                      " samples");
  }
  if (n == 1) return {0};
  std::vector<Eigen::Index> starts;
  starts.reserve(static_cast<std::size_t>(n));
  const double span = static_cast<double>(t - w);
  for (int i = 0; i < n; ++i) {
    starts.push_back(static_cast<Eigen::Index>(std::llround(i * span / (n - 1))));
  }
  return starts;
}

double pearson(const Eigen::Ref<const Vector>& a, const Eigen::Ref<const Vector>& b) {
  const Vector ca = a.array() - a.mean();
  const Vector cb = b.array() - b.mean();
  const double na = ca.norm();
  const double nb = cb.norm();
  if (!(na > 0.0) || !(nb > 0.0)) throw DegenerateError("Pearson correlation of a constant vector");
  return ca.dot(cb) / (na * nb);
}

namespace {

// Rows centered and scaled to unit norm; throws naming the first constant row.
Matrix standardize_rows(const Matrix& a, const char* which) {
  Matrix out = a.colwise() - a.rowwise().mean();
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    const double nrm = out.row(i).norm();
    if (!(nrm > 0.0)) {
      throw DegenerateError(std::string(which) + " row " + std::to_string(i) + " is constant");
    }
    out.row(i) /= nrm;
  }
  return out;
}

}  // namespace

Matrix similarity_matrix(const Matrix& a1, const Matrix& a2) {
  if (a1.rows() != a2.rows() || a1.cols() != a2.cols()) {
    throw InvariantError("similarity_matrix: A1 and A2 shapes differ");
  }
  return standardize_rows(a1, "A1") * standardize_rows(a2, "A2").transpose();
}

double identification_rate_from_similarity(const Matrix& sim) {
  const Eigen::Index n = sim.rows();
  if (n < 2 || sim.cols() != n) throw InvariantError("identification needs an N x N matrix, N >= 2");
  int hits = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    bool row_ok = true;
    bool col_ok = true;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (j == i) continue;
      if (!(sim(i, i) > sim(i, j))) row_ok = false;
      if (!(sim(i, i) > sim(j, i))) col_ok = false;
    }
    hits += row_ok + col_ok;
  }
  return static_cast<double>(hits) / static_cast<double>(2 * n);
}

double identification_rate(const Matrix& a1, const Matrix& a2) {
  return identification_rate_from_similarity(similarity_matrix(a1, a2));
}

Vector pcc_fc(const Matrix& x) {
  return vectorize_upper(similarity_matrix(x, x).cwiseMax(-1.0).cwiseMin(1.0));
}

double objective_score(const std::vector<double>& rates, ObjectiveKind kind) {
  if (rates.empty()) throw InvariantError("objective_score needs at least one rate");
  const double a = std::accumulate(rates.begin(), rates.end(), 0.0) / static_cast<double>(rates.size());
  const double m = *std::min_element(rates.begin(), rates.end());
  if (kind == ObjectiveKind::Sum) return a + m;
  if (a + m == 0.0) return 0.0;
  return 2.0 * a * m / (a + m);
}

double FingerprintReport::min_mean() const {
  double m = std::numeric_limits<double>::infinity();
  for (const auto& c : combinations) m = std::min(m, c.mean);
  return m;
}

const CombinationResult& FingerprintReport::find(int a, int b) const {
  for (const auto& c : combinations)
    if (c.length_a == a && c.length_b == b) return c;
  throw InvariantError("no fingerprint combination " + std::to_string(a) + "-" + std::to_string(b));
}

json to_json(const FingerprintReport& report) {
  json combos = json::array();
  for (const auto& c : report.combinations) {
    combos.push_back({{"combination", c.label()},
                      {"length_session1", c.length_a},
                      {"length_session2", c.length_b},
                      {"mean", c.mean},
                      {"sd", c.sd},
                      {"rates", c.rates}});
  }
  return json{{"subjects", report.subjects},
              {"objective", report.objective},
              {"min_mean", report.min_mean()},
              {"combinations", std::move(combos)}};
}

FingerprintReport fingerprint_protocol(const Cohort& cohort,
                                       const std::vector<std::string>& subjects,
                                       const Embedder& embed, const FingerprintOptions& options) {
  std::vector<const Recording*> first, second;
  for (const auto& s : subjects) {
    auto a = cohort.find(s, 0);
    auto b = cohort.find(s, 1);
    if (a && b) {
      first.push_back(&cohort.recordings[*a]);
      second.push_back(&cohort.recordings[*b]);
    }
  }
  if (first.size() < 2) throw InvariantError("fingerprinting needs at least 2 two-session subjects");
  const auto n = static_cast<Eigen::Index>(first.size());
  const int segs = options.segments;

  // embeddings[session][length][draw] -> N x D
  std::map<std::tuple<int, int, int>, Matrix> cache;
  auto embeddings = [&](int session, int length, int draw) -> const Matrix& {
    auto key = std::make_tuple(session, length, draw);
    auto it = cache.find(key);
    if (it != cache.end()) return it->second;
    const auto& recs = session == 0 ? first : second;
    Matrix out;
    for (Eigen::Index i = 0; i < n; ++i) {
      const Recording& r = *recs[static_cast<std::size_t>(i)];
      const auto starts = spaced_segments(r.timepoints(), length, segs);
      Vector v = embed(r.data.middleCols(starts[static_cast<std::size_t>(draw)], length));
      if (out.size() == 0) out.resize(n, v.size());
      out.row(i) = v.transpose();
    }
    return cache.emplace(key, std::move(out)).first->second;
  };

  const auto& L = options.lengths;
  const std::array<std::pair<int, int>, 6> combos{{{L[0], L[0]},
                                                   {L[1], L[1]},
                                                   {L[2], L[2]},
                                                   {L[0], L[1]},
                                                   {L[0], L[2]},
                                                   {L[1], L[2]}}};
  FingerprintReport report;
  report.subjects = static_cast<int>(n);
  std::vector<double> means;
  for (auto [la, lb] : combos) {
    CombinationResult c;
    c.length_a = la;
    c.length_b = lb;
    for (int k = 0; k < segs; ++k) {
      const Matrix sim = similarity_matrix(embeddings(0, la, k), embeddings(1, lb, k));
      c.rates.push_back(identification_rate_from_similarity(sim));
      if (k == 0 && options.keep_similarity) c.similarity = sim;
    }
    c.mean = std::accumulate(c.rates.begin(), c.rates.end(), 0.0) / segs;
    double ss = 0.0;
    for (double r : c.rates) ss += (r - c.mean) * (r - c.mean);
    c.sd = segs > 1 ? std::sqrt(ss / (segs - 1)) : 0.0;
    means.push_back(c.mean);
    report.combinations.push_back(std::move(c));
  }
  report.objective = objective_score(means, options.objective);
  return report;
}

FingerprintReport fingerprint_protocol(const Cohort& cohort, const Embedder& embed,
                                       const FingerprintOptions& options) {
  return fingerprint_protocol(cohort, cohort.subjects(), embed, options);
}

// --- classification -------------------------------------------------------------

double auc_score(const std::vector<double>& probs, const std::vector<int>& labels) {
  const std::size_t n = probs.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return probs[a] < probs[b]; });
  // Average ranks over tie groups.
  std::vector<double> rank(n);
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && probs[order[j + 1]] == probs[order[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) rank[order[k]] = avg;
    i = j + 1;
  }
  double pos = 0.0, rank_sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] == 1) {
      pos += 1.0;
      rank_sum += rank[i];
    }
  }
  const double neg = static_cast<double>(n) - pos;
  return (rank_sum - pos * (pos + 1.0) / 2.0) / (pos * neg);
}

ClassificationReport classification_metrics(const std::vector<double>& probs,
                                            const std::vector<int>& labels) {
  if (probs.size() != labels.size() || probs.empty()) {
    throw InvariantError("classification_metrics: probs and labels must be non-empty and aligned");
  }
  int positives = 0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (labels[i] != 0 && labels[i] != 1) throw InvariantError("labels must be 0 or 1");
    if (!(probs[i] >= 0.0 && probs[i] <= 1.0)) throw InvariantError("probabilities must lie in [0, 1]");
    positives += labels[i];
  }
  const int negatives = static_cast<int>(labels.size()) - positives;
  if (positives == 0 || negatives == 0) {
    throw InvariantError("classification_metrics needs both classes present");
  }

  ClassificationReport rep;
  rep.probs = probs;
  rep.bce = binary_cross_entropy(probs, labels);
  rep.auc = auc_score(probs, labels);

  std::vector<double> thresholds = probs;
  std::sort(thresholds.begin(), thresholds.end());
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());
  double best_j = -std::numeric_limits<double>::infinity();
  for (double thr : thresholds) {  // ascending, so ties keep the lower threshold
    int tp = 0, fp = 0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
      if (probs[i] >= thr) (labels[i] == 1 ? tp : fp) += 1;
    }
    const double j = static_cast<double>(tp) / positives - static_cast<double>(fp) / negatives;
    if (j > best_j) {
      best_j = j;
      rep.threshold = thr;
    }
  }
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const bool predicted = probs[i] >= rep.threshold;
    if (predicted && labels[i] == 1) ++rep.tp;
    else if (predicted) ++rep.fp;
    else if (labels[i] == 1) ++rep.fn;
    else ++rep.tn;
  }
  const double denom = 2.0 * rep.tp + rep.fp + rep.fn;
  rep.f1 = denom > 0.0 ? 2.0 * rep.tp / denom : 0.0;
  return rep;
}

json to_json(const ClassificationReport& r) {
  return json{{"bce", r.bce},
              {"auc", r.auc},
              {"f1", r.f1},
              {"threshold", r.threshold},
              {"confusion", {{"tp", r.tp}, {"fp", r.fp}, {"tn", r.tn}, {"fn", r.fn}}},
              {"probs", r.probs}};
}

StabilityReport stability_eval(const std::vector<Predictor>& models,
                               const std::vector<Recording>& recordings,
                               const std::vector<double>& window_minutes) {
  StabilityReport rep;
  for (const auto& rec : recordings) {
    std::vector<Eigen::Index> windows;
    bool fits = true;
    for (double minutes : window_minutes) {
      const auto w = static_cast<Eigen::Index>(std::llround(minutes * 60.0 / rec.tr_seconds));
      if (w < 1 || w > rec.timepoints()) fits = false;
      windows.push_back(w);
    }
    if (!fits) {
      std::cerr << "warning: " << rec.subject_id << " is too short for the stability windows; skipped\n";
      rep.skipped += 1;
      continue;
    }
    for (const auto& model : models) {
      const int reference = model(rec.data);
      bool changed = false;
      for (auto w : windows) {
        const Eigen::Index t = rec.timepoints();
        for (Eigen::Index start : {Eigen::Index{0}, (t - w) / 2, t - w}) {
          if (model(rec.data.middleCols(start, w)) != reference) changed = true;
        }
      }
      rep.instances += 1;
      rep.unstable += changed;
    }
  }
  rep.percent_changed = rep.instances > 0 ? 100.0 * rep.unstable / rep.instances : 0.0;
  return rep;
}

ImportanceVector feature_importance(const std::vector<Matrix>& head_weights, int top_k) {
  if (head_weights.empty()) throw InvariantError("feature_importance needs at least one head");
  const Eigen::Index d = head_weights.front().rows();
  const Eigen::Index regions = regions_for_pairs(d);
  ImportanceVector out;
  out.values = Vector::Zero(d);
  for (const auto& w : head_weights) {
    if (w.rows() != d || w.cols() != 2) {
      throw InvariantError("head weight must be " + std::to_string(d) + " x 2");
    }
    out.values += w.col(1) - w.col(0);
  }
  out.values /= static_cast<double>(head_weights.size());

  std::vector<Eigen::Index> order(static_cast<std::size_t>(d));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) {
    return std::abs(out.values[a]) > std::abs(out.values[b]);
  });
  const auto keep = top_k > 0 ? std::min<Eigen::Index>(top_k, d) : d;
  for (Eigen::Index r = 0; r < keep; ++r) {
    const auto k = order[static_cast<std::size_t>(r)];
    auto [i, j] = pair_of_index(k, regions);
    out.ranking.push_back({k, i, j, out.values[k]});
  }
  return out;
}

}  // namespace varconet
