#include "varconet/synth.hpp"

#include <cmath>
#include <cstdio>

#include "varconet/error.hpp"

namespace varconet {

using nlohmann::json;

void SynthConfig::validate() const {
  auto fail = [](const std::string& w) { throw InvariantError("synth config: " + w); };
  if (n_subjects < 1) fail("n_subjects must be >= 1");
  if (n_sessions != 1 && n_sessions != 2) fail("n_sessions must be 1 or 2");
  if (regions < 2) fail("regions must be >= 2");
  if (timepoints < 2) fail("timepoints must be >= 2");
  if (!(tr_seconds > 0.0)) fail("tr_seconds must be positive");
  if (sigma_subject < 0.0 || sigma_session < 0.0) fail("sigmas must be non-negative");
  if (!(ar_coeff >= 0.0 && ar_coeff < 1.0)) fail("ar_coeff must lie in [0, 1)");
  for (auto [i, j] : effect_edges) {
    if (!(0 <= i && i < j && j < regions)) {
      fail("effect edge (" + std::to_string(i) + ", " + std::to_string(j) +
           ") must satisfy 0 <= i < j < regions");
    }
  }
  if (!(std::abs(effect_delta) < 2.0)) fail("effect_delta must lie in (-2, 2)");
}

void to_json(json& j, const SynthConfig& c) {
  json edges = json::array();
  for (auto [a, b] : c.effect_edges) edges.push_back({a, b});
  j = json{{"n_subjects", c.n_subjects},       {"n_sessions", c.n_sessions},
           {"regions", c.regions},             {"timepoints", c.timepoints},
           {"tr_seconds", c.tr_seconds},       {"sigma_subject", c.sigma_subject},
           {"sigma_session", c.sigma_session}, {"ar_coeff", c.ar_coeff},
           {"labeled", c.labeled},             {"effect_edges", edges},
           {"effect_delta", c.effect_delta},   {"seed", c.seed}};
}

void from_json(const json& j, SynthConfig& c) {
  c.n_subjects = j.value("n_subjects", c.n_subjects);
  c.n_sessions = j.value("n_sessions", c.n_sessions);
  c.regions = j.value("regions", c.regions);
  c.timepoints = j.value("timepoints", c.timepoints);
  c.tr_seconds = j.value("tr_seconds", c.tr_seconds);
  c.sigma_subject = j.value("sigma_subject", c.sigma_subject);
  c.sigma_session = j.value("sigma_session", c.sigma_session);
  c.ar_coeff = j.value("ar_coeff", c.ar_coeff);
  c.labeled = j.value("labeled", c.labeled);
  if (j.contains("effect_edges")) {
    c.effect_edges.clear();
    for (const auto& e : j.at("effect_edges")) c.effect_edges.emplace_back(e.at(0), e.at(1));
  }
  c.effect_delta = j.value("effect_delta", c.effect_delta);
  c.seed = j.value("seed", c.seed);
}

namespace {

json matrix_json(const Matrix& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

Matrix symmetric_noise(Eigen::Index r, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix s = Matrix::Zero(r, r);
  for (Eigen::Index i = 0; i < r; ++i) {
    for (Eigen::Index j = i + 1; j < r; ++j) {
      s(i, j) = normal(rng);
      s(j, i) = s(i, j);
    }
  }
  return s;
}

}  // namespace

json to_json(const GroundTruth& truth) {
  json subjects = json::array();
  for (const auto& s : truth.subjects) {
    json sessions = json::array();
    for (const auto& m : s.sessions) sessions.push_back(matrix_json(m));
    subjects.push_back({{"subject_id", s.subject_id},
                        {"label", s.label},
                        {"latent", matrix_json(s.latent)},
                        {"sessions", std::move(sessions)}});
  }
  return json{{"base", matrix_json(truth.base)}, {"subjects", std::move(subjects)}};
}

Matrix project_to_correlation(const Matrix& m) {
  if (m.rows() != m.cols()) throw InvariantError("project_to_correlation needs a square matrix");
  if (!m.allFinite()) throw DegenerateError("project_to_correlation: non-finite input");
  if (!m.isApprox(m.transpose(), 1e-12) && (m - m.transpose()).cwiseAbs().maxCoeff() > 1e-12) {
    throw InvariantError("project_to_correlation needs a symmetric matrix");
  }
  const Matrix sym = 0.5 * (m + m.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix> eig(sym);
  if (eig.info() != Eigen::Success) throw DegenerateError("eigendecomposition failed");
  const Vector clipped = eig.eigenvalues().cwiseMax(1e-6);
  Matrix psd = eig.eigenvectors() * clipped.asDiagonal() * eig.eigenvectors().transpose();
  const Eigen::Index n = psd.rows();
  Vector scale(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!(psd(i, i) > 0.0)) {
      throw DegenerateError("diagonal entry " + std::to_string(i) + " vanished after clipping");
    }
    scale[i] = 1.0 / std::sqrt(psd(i, i));
  }
  Matrix out = scale.asDiagonal() * psd * scale.asDiagonal();
  for (Eigen::Index i = 0; i < n; ++i) {
    out(i, i) = 1.0;
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double v = std::clamp(0.5 * (out(i, j) + out(j, i)), -1.0, 1.0);
      out(i, j) = v;
      out(j, i) = v;
    }
  }
  return out;
}

Matrix sample_subject_correlation(const Matrix& base, double sigma, Rng& rng) {
  if (sigma == 0.0) return base;
  return project_to_correlation(base + sigma * symmetric_noise(base.rows(), rng));
}

Matrix sample_session_timeseries(const Matrix& corr, Eigen::Index timepoints, double ar_coeff,
                                 Rng& rng) {
  const Eigen::Index r = corr.rows();
  Eigen::LLT<Matrix> llt(corr);
  if (llt.info() != Eigen::Success) {
    throw DegenerateError("correlation matrix is not positive definite");
  }
  const Matrix lower = llt.matrixL();
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix z(r, timepoints);
  for (Eigen::Index t = 0; t < timepoints; ++t)
    for (Eigen::Index i = 0; i < r; ++i) z(i, t) = normal(rng);
  Matrix x = lower * z;
  for (Eigen::Index t = 1; t < timepoints; ++t) x.col(t) += ar_coeff * x.col(t - 1);
  const double n = static_cast<double>(timepoints);
  for (Eigen::Index i = 0; i < r; ++i) {
    const double mean = x.row(i).sum() / n;
    x.row(i).array() -= mean;
    const double sd = std::sqrt(x.row(i).squaredNorm() / n);
    if (sd > 0.0) x.row(i) /= sd;
  }
  return x;
}

Matrix sample_base_correlation(Eigen::Index regions, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.5, 1.5);
  Matrix w(regions, 3);
  for (Eigen::Index i = 0; i < regions; ++i)
    for (Eigen::Index k = 0; k < 3; ++k) w(i, k) = normal(rng);
  Matrix m = w * w.transpose();
  for (Eigen::Index i = 0; i < regions; ++i) m(i, i) += unif(rng);
  // To unit diagonal before projection so every region starts on one scale.
  const Vector d = m.diagonal().cwiseSqrt().cwiseInverse();
  return project_to_correlation(d.asDiagonal() * m * d.asDiagonal());
}

std::string synth_subject_id(int index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "sub-%04d", index);
  return buf;
}

std::pair<Cohort, GroundTruth> generate_cohort(const SynthConfig& cfg) {
  cfg.validate();
  const Eigen::Index r = cfg.regions;
  Rng base_rng = make_stream(cfg.seed, ~std::uint64_t{0});
  GroundTruth truth;
  truth.base = sample_base_correlation(r, base_rng);

  Matrix effect = Matrix::Zero(r, r);
  for (auto [i, j] : cfg.effect_edges) {
    effect(i, j) = cfg.effect_delta;
    effect(j, i) = cfg.effect_delta;
  }

  Cohort cohort;
  if (cfg.labeled) cohort.labels.emplace();
  for (int s = 0; s < cfg.n_subjects; ++s) {
    Rng rng = make_stream(cfg.seed, static_cast<std::uint64_t>(s));
    SubjectTruth st;
    st.subject_id = synth_subject_id(s);
    st.label = cfg.labeled ? (s % 2) : 0;

    Matrix target = truth.base;
    if (cfg.sigma_subject > 0.0) target += cfg.sigma_subject * symmetric_noise(r, rng);
    if (st.label == 1) target += effect;
    st.latent = (cfg.sigma_subject > 0.0 || st.label == 1) ? project_to_correlation(target)
                                                           : truth.base;

    for (int k = 0; k < cfg.n_sessions; ++k) {
      Matrix realized = sample_subject_correlation(st.latent, cfg.sigma_session, rng);
      Recording rec;
      rec.subject_id = st.subject_id;
      rec.session_index = k;
      rec.tr_seconds = cfg.tr_seconds;
      rec.data = sample_session_timeseries(realized, cfg.timepoints, cfg.ar_coeff, rng);
      cohort.recordings.push_back(std::move(rec));
      st.sessions.push_back(std::move(realized));
    }
    if (cohort.labels) (*cohort.labels)[st.subject_id] = st.label;
    truth.subjects.push_back(std::move(st));
  }
  json cfg_json;
  to_json(cfg_json, cfg);
  cohort.meta = json{{"generator", "synthcohort"}, {"config", cfg_json}};
  return {std::move(cohort), std::move(truth)};
}

}  // namespace varconet
