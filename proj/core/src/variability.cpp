#include "varconet/variability.hpp"

#include <cmath>

#include "varconet/error.hpp"

namespace varconet {

IccResult icc_oneway(const Matrix& x) {
  const Eigen::Index n = x.rows();
  const Eigen::Index k = x.cols();
  if (n < 2 || k < 2) throw InvariantError("icc_oneway needs at least 2 subjects and 2 sessions");
  if (!x.allFinite()) throw InvariantError("icc_oneway: non-finite measurement");

  const double grand = x.mean();
  const Vector subject_means = x.rowwise().mean();
  const double ssb = static_cast<double>(k) * (subject_means.array() - grand).square().sum();
  const double ssw = (x.colwise() - subject_means).squaredNorm();

  IccResult r;
  r.msb = ssb / static_cast<double>(n - 1);
  r.msw = ssw / static_cast<double>(n * (k - 1));
  const double denom = r.msb + static_cast<double>(k - 1) * r.msw;
  if (!(denom > 0.0)) {
    r.degenerate = true;
    r.icc = 0.0;
    return r;
  }
  r.icc = (r.msb - r.msw) / denom;
  return r;
}

VariationField variation_field(const std::vector<Matrix>& sessions) {
  if (sessions.size() < 2) throw InvariantError("variation_field needs at least two sessions");
  const Eigen::Index n = sessions[0].rows();
  const Eigen::Index d = sessions[0].cols();
  for (const auto& s : sessions) {
    if (s.rows() != n || s.cols() != d) throw InvariantError("session tables differ in shape");
  }
  const auto k = static_cast<Eigen::Index>(sessions.size());
  VariationField field;
  field.connections.reserve(static_cast<std::size_t>(d));
  Matrix table(n, k);
  for (Eigen::Index c = 0; c < d; ++c) {
    for (Eigen::Index s = 0; s < k; ++s) table.col(s) = sessions[static_cast<std::size_t>(s)].col(c);
    const IccResult r = icc_oneway(table);
    field.connections.push_back({r.msw, std::max(0.0, (r.msb - r.msw) / static_cast<double>(k)),
                                 r.icc, r.degenerate});
  }
  return field;
}

const char* to_string(Quadrant q) {
  switch (q) {
    case Quadrant::UpperLeft: return "upper_left";
    case Quadrant::LowerRight: return "lower_right";
    case Quadrant::MixedImproved: return "mixed_improved";
    case Quadrant::MixedDeclined: return "mixed_declined";
    case Quadrant::Unchanged: return "unchanged";
  }
  return "unchanged";
}

std::vector<ConnectionDelta> delta_icc_flow(const VariationField& baseline,
                                            const VariationField& target) {
  if (baseline.connections.size() != target.connections.size()) {
    throw InvariantError("variation fields cover different numbers of connections");
  }
  std::vector<ConnectionDelta> out;
  out.reserve(baseline.connections.size());
  for (std::size_t i = 0; i < baseline.connections.size(); ++i) {
    const auto& b = baseline.connections[i];
    const auto& t = target.connections[i];
    ConnectionDelta d;
    d.within_reduction = b.within_var - t.within_var;
    d.between_increase = t.between_var - b.between_var;
    d.delta_icc = t.icc - b.icc;
    if (d.within_reduction > 0.0 && d.between_increase > 0.0) {
      d.quadrant = Quadrant::UpperLeft;
    } else if (d.within_reduction < 0.0 && d.between_increase < 0.0) {
      d.quadrant = Quadrant::LowerRight;
    } else if (d.delta_icc > 0.0) {
      d.quadrant = Quadrant::MixedImproved;
    } else if (d.delta_icc < 0.0) {
      d.quadrant = Quadrant::MixedDeclined;
    } else {
      d.quadrant = Quadrant::Unchanged;
    }
    out.push_back(d);
  }
  return out;
}

FlowSummary summarize_flow(const VariationField& baseline, const VariationField& target,
                           const std::vector<ConnectionDelta>& deltas) {
  FlowSummary s;
  const double n = static_cast<double>(deltas.size());
  if (deltas.empty()) return s;
  int improved = 0;
  std::array<int, 5> counts{};
  for (std::size_t i = 0; i < deltas.size(); ++i) {
    s.mean_icc_baseline += baseline.connections[i].icc / n;
    s.mean_icc_target += target.connections[i].icc / n;
    improved += deltas[i].delta_icc > 0.0;
    counts[static_cast<std::size_t>(deltas[i].quadrant)] += 1;
  }
  s.percent_improved = 100.0 * improved / n;
  for (int q = 0; q < 5; ++q) s.census.emplace_back(static_cast<Quadrant>(q), counts[static_cast<std::size_t>(q)]);
  return s;
}

nlohmann::json to_json(const FlowSummary& s) {
  nlohmann::json census = nlohmann::json::object();
  for (auto [q, c] : s.census) census[to_string(q)] = c;
  return {{"mean_icc_baseline", s.mean_icc_baseline},
          {"mean_icc_target", s.mean_icc_target},
          {"percent_connections_improved", s.percent_improved},
          {"quadrants", census}};
}

}  // namespace varconet
