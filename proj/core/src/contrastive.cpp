#include "varconet/contrastive.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "varconet/error.hpp"

namespace varconet {

namespace {

Segment sample_segment(Eigen::Index t, int l_min, int l_max, Rng& rng) {
  const Eigen::Index hi = std::min<Eigen::Index>(l_max, t);
  std::uniform_int_distribution<Eigen::Index> len_dist(l_min, hi);
  const Eigen::Index length = len_dist(rng);
  std::uniform_int_distribution<Eigen::Index> start_dist(0, t - length);
  return {start_dist(rng), length};
}

}  // namespace

SegmentPair sample_segment_pair(Eigen::Index t, int l_min, int l_max, Rng& rng) {
  if (t < l_min) {
    throw BoundsError("recording of " + std::to_string(t) + " samples is shorter than l_min " +
                      std::to_string(l_min));
  }
  if (l_min > l_max) throw InvariantError("l_min must be <= l_max");
  SegmentPair p;
  p.view_a = sample_segment(t, l_min, l_max, rng);
  p.view_b = sample_segment(t, l_min, l_max, rng);
  return p;
}

std::vector<ContrastBatch> make_batches(const Cohort& cohort, const std::vector<std::size_t>& pool,
                                        int batch_size, Rng& rng) {
  if (batch_size < 2) throw InvariantError("batch_size must be >= 2");
  std::set<std::string> distinct;
  for (auto i : pool) distinct.insert(cohort.recordings.at(i).subject_id);
  if (distinct.size() < 2) {
    throw InvariantError("contrastive batches need recordings from at least 2 subjects");
  }
  if (distinct.size() < static_cast<std::size_t>(batch_size)) {
    throw InvariantError("batch_size " + std::to_string(batch_size) + " exceeds the " +
                         std::to_string(distinct.size()) + " distinct subjects available");
  }

  std::vector<std::size_t> order = pool;
  std::shuffle(order.begin(), order.end(), rng);

  std::vector<ContrastBatch> batches;
  while (!order.empty()) {
    ContrastBatch batch;
    std::set<std::string> in_batch;
    std::vector<std::size_t> deferred;
    for (auto idx : order) {
      const auto& subject = cohort.recordings[idx].subject_id;
      if (static_cast<int>(batch.recordings.size()) < batch_size && !in_batch.count(subject)) {
        batch.recordings.push_back(idx);
        batch.subject_ids.push_back(subject);
        in_batch.insert(subject);
      } else {
        deferred.push_back(idx);
      }
    }
    if (batch.recordings.size() < 2) break;
    batches.push_back(std::move(batch));
    order = std::move(deferred);
  }
  return batches;
}

std::vector<ContrastBatch> make_batches(const Cohort& cohort, int batch_size, Rng& rng) {
  std::vector<std::size_t> pool(cohort.recordings.size());
  std::iota(pool.begin(), pool.end(), std::size_t{0});
  return make_batches(cohort, pool, batch_size, rng);
}

ContrastInputs sample_views(const Cohort& cohort, const ContrastBatch& batch, int l_min, int l_max,
                            Rng& rng) {
  const std::size_t n = batch.recordings.size();
  ContrastInputs in;
  in.views.resize(2 * n);
  in.pairs.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& rec = cohort.recordings[batch.recordings[i]];
    SegmentPair p = sample_segment_pair(rec.timepoints(), l_min, l_max, rng);
    p.recording = batch.recordings[i];
    in.views[i] = rec.data.middleCols(p.view_a.start, p.view_a.length);
    in.views[i + n] = rec.data.middleCols(p.view_b.start, p.view_b.length);
    in.pairs.push_back(p);
  }
  return in;
}

NtXentResult ntxent_loss(const std::vector<Vector>& z, double tau) {
  const std::size_t m = z.size();
  if (m < 2 || m % 2 != 0) throw InvariantError("ntxent_loss needs 2N >= 2 embeddings");
  if (!(tau > 0.0)) throw InvariantError("temperature must be positive");
  const std::size_t n = m / 2;
  const Eigen::Index dim = z[0].size();

  Matrix unit(static_cast<Eigen::Index>(m), dim);
  Vector norms(static_cast<Eigen::Index>(m));
  for (std::size_t i = 0; i < m; ++i) {
    if (z[i].size() != dim) throw InvariantError("embeddings differ in length");
    if (!z[i].allFinite()) throw NumericError("embedding " + std::to_string(i) + " is not finite");
    const double nrm = z[i].norm();
    if (!(nrm > 1e-12)) throw DegenerateError("embedding " + std::to_string(i) + " has zero norm");
    norms[static_cast<Eigen::Index>(i)] = nrm;
    unit.row(static_cast<Eigen::Index>(i)) = z[i].transpose() / nrm;
  }

  const Matrix sim = unit * unit.transpose();
  const auto mi = static_cast<Eigen::Index>(m);
  // dL/dsim for each ordered (row, col), before symmetrization.
  Matrix dsim = Matrix::Zero(mi, mi);
  double total = 0.0;
  const double scale = 1.0 / static_cast<double>(m);
  for (Eigen::Index i = 0; i < mi; ++i) {
    const Eigen::Index pos = (static_cast<std::size_t>(i) < n) ? i + static_cast<Eigen::Index>(n)
                                                               : i - static_cast<Eigen::Index>(n);
    double top = -std::numeric_limits<double>::infinity();
    for (Eigen::Index k = 0; k < mi; ++k)
      if (k != i) top = std::max(top, sim(i, k) / tau);
    double denom = 0.0;
    Vector e = Vector::Zero(mi);
    for (Eigen::Index k = 0; k < mi; ++k) {
      if (k == i) continue;
      e[k] = std::exp(sim(i, k) / tau - top);
      denom += e[k];
    }
    total += -(sim(i, pos) / tau - top) + std::log(denom);
    for (Eigen::Index k = 0; k < mi; ++k) {
      if (k == i) continue;
      dsim(i, k) += scale * (e[k] / denom) / tau;
    }
    dsim(i, pos) -= scale / tau;
  }

  NtXentResult out;
  out.loss = total * scale;
  const Matrix du = (dsim + dsim.transpose()) * unit;
  out.grad.resize(m);
  for (Eigen::Index i = 0; i < mi; ++i) {
    const double radial = du.row(i).dot(unit.row(i));
    out.grad[static_cast<std::size_t>(i)] = ((du.row(i) - radial * unit.row(i)) / norms[i]).transpose();
  }
  return out;
}

}  // namespace varconet
