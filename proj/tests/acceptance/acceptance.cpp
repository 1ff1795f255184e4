// Acceptance checks: one PASS/FAIL line per criterion.
//
//   varconet_acceptance [--only name[,name...]] [--report] [--workers N] [--log FILE]
//
// Exits 1 when a criterion fails unless --report is given, in which case the
// lines are printed and the exit status only reflects crashes. --log also
// writes the lines to FILE.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <limits>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cli.hpp"
#include "helpers.hpp"
#include "varconet/contrastive.hpp"
#include "varconet/encoder.hpp"
#include "varconet/evalsuite.hpp"
#include "varconet/gradcheck.hpp"
#include "varconet/optim.hpp"
#include "varconet/synth.hpp"
#include "varconet/tpe.hpp"
#include "varconet/train.hpp"
#include "varconet/variability.hpp"

using namespace varconet;
using nlohmann::json;

namespace {

int g_workers = 1;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string num(double v, int precision = 4) {
  std::ostringstream s;
  s << std::setprecision(precision) << v;
  return s.str();
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// --- gradient correctness ---------------------------------------------------

Outcome gradient_correctness() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto rows = run_gradcheck();
  const double secs = seconds_since(t0);
  double worst = 0.0;
  int min_points = 1 << 30;
  bool all = true;
  std::string worst_name;
  for (const auto& r : rows) {
    all = all && r.passed && r.max_rel_error < 1e-4;
    min_points = std::min(min_points, r.points);
    if (r.max_rel_error >= worst) {
      worst = r.max_rel_error;
      worst_name = r.name;
    }
  }
  const bool composite = std::any_of(rows.begin(), rows.end(), [](const auto& r) { return r.name == "encoder+ntxent"; });
  return {all && composite && min_points >= 20 && secs < 60.0,
          std::to_string(rows.size()) + " checks, worst " + num(worst, 3) + " (" + worst_name +
              ") < 1e-4, >= " + std::to_string(min_points) + " points each, " + num(secs, 3) + " s < 60 s"};
}

// --- NT-Xent oracle -------------------------------------------------------

double brute_force_ntxent(const std::vector<Vector>& z, double tau) {
  const std::size_t m = z.size(), n = m / 2;
  auto sim = [&](std::size_t a, std::size_t b) {
    double dot = 0, na = 0, nb = 0;
    for (Eigen::Index d = 0; d < z[a].size(); ++d) {
      dot += z[a][d] * z[b][d];
      na += z[a][d] * z[a][d];
      nb += z[b][d] * z[b][d];
    }
    return dot / (std::sqrt(na) * std::sqrt(nb));
  };
  double total = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    double denom = 0.0;
    for (std::size_t k = 0; k < m; ++k)
      if (k != i) denom += std::exp(sim(i, k) / tau);
    total += -std::log(std::exp(sim(i, (i + n) % m) / tau) / denom);
  }
  return total / static_cast<double>(m);
}

Outcome ntxent_oracle() {
  double worst = 0.0;
  int cases = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Rng rng(seed);
    std::uniform_real_distribution<double> tau_dist(0.05, 2.0);
    for (int n = 1; n <= 4; ++n) {
      for (int d = 2; d <= 6; ++d) {
        const double tau = tau_dist(rng);
        std::vector<Vector> z;
        for (int i = 0; i < 2 * n; ++i) z.push_back(testing::gaussian(d, 1, rng));
        worst = std::max(worst, std::abs(ntxent_loss(z, tau).loss - brute_force_ntxent(z, tau)));
        ++cases;
      }
    }
  }
  return {worst < 1e-10, std::to_string(cases) + " batches (N 1..4, dim 2..6, 100 seeds), max |diff| " +
                             num(worst, 3) + " < 1e-10"};
}

// --- encoder properties ---------------------------------------------------

HyperParams default_hp() {
  // Table-default architecture; batch halved for a 40-subject training set.
  HyperParams hp;
  hp.batch_size = 32;
  return hp;
}

Outcome padding_invariance() {
  Rng rng(11);
  const Encoder enc(16, default_hp(), rng);
  double worst = 0.0;
  std::uniform_int_distribution<int> len(80, 320);
  for (int i = 0; i < 100; ++i) {
    const Matrix x = testing::gaussian(16, len(rng), rng);
    worst = std::max(worst, (enc.fc_vector(x, 320) - enc.fc_vector(x)).cwiseAbs().maxCoeff());
  }
  return {worst < 1e-6, "100 inputs, T in [80, 320], max |padded - minimal| " + num(worst, 3) + " < 1e-6"};
}

Outcome fc_validity() {
  Rng rng(12);
  HyperParams hp = default_hp();
  hp.n_layers = 2;
  hp.n_heads = 4;
  const Encoder enc(16, hp, rng);
  int violations = 0;
  std::uniform_int_distribution<int> len(8, 320);
  std::uniform_real_distribution<double> scale(0.01, 100.0);
  for (int i = 0; i < 1000; ++i) {
    const Matrix x = testing::gaussian(16, len(rng), rng, scale(rng));
    const Matrix fc = devectorize_upper(enc.fc_vector(x), 16);
    const bool ok = fc == fc.transpose() && fc.diagonal().isOnes(0.0) && fc.cwiseAbs().maxCoeff() <= 1.0;
    violations += ok ? 0 : 1;
  }
  return {violations == 0, "1000 inputs (T 8..320, scale 0.01..100), " + std::to_string(violations) + " violations"};
}

// --- end-to-end fingerprinting -------------------------------------------

Outcome end_to_end_fingerprinting() {
  const auto t0 = std::chrono::steady_clock::now();
  SynthConfig sc;
  sc.n_subjects = 80;
  sc.regions = 16;
  sc.timepoints = 320;
  sc.sigma_subject = 0.4;
  sc.sigma_session = 0.15;
  sc.seed = 0;
  const Cohort cohort = generate_cohort(sc).first;
  const SubjectSplit split = split_subjects(cohort, 40, 10, 30, 0);
  const Cohort train = select_subjects(cohort, split.train);
  const Cohort val = select_subjects(cohort, split.val);
  const Cohort test = select_subjects(cohort, split.test);

  FingerprintOptions val_opt;
  val_opt.lengths = {30, 175, 320};
  TrainConfig tc;
  tc.epochs = 200;
  tc.seed = 0;
  tc.workers = g_workers;
  const TrainResult r = train_contrastive(train, default_hp(), tc, make_fingerprint_hook(val, val_opt, g_workers));
  const Encoder best(*r.best->encoder, default_hp());

  const FingerprintReport ours = fingerprint_protocol(test, encoder_embedder(best));
  const FingerprintReport pcc = fingerprint_protocol(test, [](const Matrix& m) { return pcc_fc(m); });
  const double secs = seconds_since(t0);

  const double r320 = ours.find(320, 320).mean;
  const double min_mean = ours.min_mean();
  const double ours80 = ours.find(80, 80).mean, pcc80 = pcc.find(80, 80).mean;
  const double margin = 100.0 * (ours80 - pcc80);
  const bool pass = r320 >= 0.95 && min_mean >= 0.80 && margin >= 5.0 && secs < 900.0;
  return {pass, "best epoch " + std::to_string(r.best->epoch) + "; 320-320 " + num(r320) + " (>= 0.95), min mean " +
                    num(min_mean) + " (>= 0.80), 80-80 " + num(ours80) + " vs PCC " + num(pcc80) + " = " +
                    num(margin, 3) + " pp (>= 5), " + num(secs, 4) + " s < 900 s"};
}

// --- objective ------------------------------------------------------------

Outcome objective_function() {
  Rng rng(13);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double worst = 0.0;
  for (int k = 0; k < 20; ++k) {
    std::vector<double> r(6);
    for (double& x : r) x = u(rng);
    double sum = 0.0, mn = 1.0;
    for (double x : r) {
      sum += x;
      mn = std::min(mn, x);
    }
    const double a = sum / 6.0;
    worst = std::max(worst, std::abs(objective_score(r) - 2.0 * a * mn / (a + mn)));
  }
  return {worst < 1e-12, "20 random sextuples, max |diff| " + num(worst, 3) + " < 1e-12"};
}

// --- classification + importance ------------------------------------------

Outcome classification_importance() {
  const auto t0 = std::chrono::steady_clock::now();
  SynthConfig sc;
  sc.n_subjects = 120;
  sc.regions = 16;
  sc.timepoints = 320;
  sc.labeled = true;
  sc.effect_delta = 0.3;
  for (int k = 0; k < 10; ++k) sc.effect_edges.emplace_back(k, k + 5);
  sc.seed = 0;
  const Cohort cohort = generate_cohort(sc).first;
  const SubjectSplit split = split_subjects(cohort, 60, 20, 40, 0);
  const Cohort train = select_subjects(cohort, split.train);
  const Cohort val = select_subjects(cohort, split.val);
  const Cohort test = select_subjects(cohort, split.test);

  TrainConfig tc;
  tc.epochs = 100;
  tc.seed = 0;
  tc.workers = g_workers;
  const TrainResult r = train_contrastive(train, default_hp(), tc, make_probe_hook(train, val, {}, g_workers));
  const Encoder best(*r.best->encoder, default_hp());
  const ParamStore& head = *r.best->head;

  auto [recs, labels] = labeled_recordings(test);
  const std::vector<double> probs = predict_proba(head, embed_recordings(best, recs, g_workers));
  const double auc = auc_score(probs, labels);

  const ImportanceVector imp = feature_importance({head.matrix(head.index_of("head.weight"))}, 20);
  std::set<std::pair<Eigen::Index, Eigen::Index>> planted;
  for (auto [i, j] : sc.effect_edges) planted.insert({i, j});
  int hits = 0;
  for (const auto& e : imp.ranking) hits += planted.count({e.region_i, e.region_j}) ? 1 : 0;
  const double secs = seconds_since(t0);

  return {auc >= 0.90 && hits >= 5 && secs < 1200.0,
          "best epoch " + std::to_string(r.best->epoch) + "; test AUC " + num(auc) + " (>= 0.90), planted edges in top-20 " +
              std::to_string(hits) + "/10 (>= 5), " + num(secs, 4) + " s < 1200 s"};
}

// --- ICC calibration --------------------------------------------------------

Matrix planted_table(int n, double sb2, double sw2, Rng& rng) {
  std::normal_distribution<double> b(0.0, std::sqrt(sb2)), w(0.0, std::sqrt(sw2));
  Matrix x(n, 2);
  for (int i = 0; i < n; ++i) {
    const double s = b(rng);
    x(i, 0) = s + w(rng);
    x(i, 1) = s + w(rng);
  }
  return x;
}

Outcome icc_calibration() {
  std::string detail;
  bool pass = true;
  for (auto [sb2, sw2] : {std::pair{3.0, 1.0}, std::pair{1.0, 1.0}, std::pair{1.0, 3.0}}) {
    double sum = 0.0;
    for (std::uint64_t seed = 0; seed < 200; ++seed) {
      Rng rng = make_stream(seed, 0);
      sum += icc_oneway(planted_table(100, sb2, sw2, rng)).icc;
    }
    const double mean = sum / 200.0, target = sb2 / (sb2 + sw2);
    pass = pass && std::abs(mean - target) <= 0.05;
    detail += num(sb2, 2) + ":" + num(sw2, 2) + " mean " + num(mean) + " vs " + num(target) + "; ";
  }
  const std::size_t d = n_pairs(384);
  pass = pass && d == 73536 && regions_for_pairs(73536) == 384;
  return {pass, detail + "D(384) = " + std::to_string(d)};
}

// --- delta ICC flow ---------------------------------------------------------

Outcome delta_icc_flow_check() {
  // Baseline: subject effect plus session noise on every connection. Target:
  // residuals scaled by 1/sqrt(2) halve MSW; subject deviations scaled so
  // that (MSB - MSW) / k doubles.
  const int n = 100, d = 120;
  Rng rng(14);
  std::vector<Matrix> base{Matrix(n, d), Matrix(n, d)}, target{Matrix(n, d), Matrix(n, d)};
  for (int c = 0; c < d; ++c) {
    const Matrix t = planted_table(n, 2.0, 1.0, rng);
    const IccResult r = icc_oneway(t);
    const Vector mean = t.rowwise().mean();
    const double grand = mean.mean();
    const double a = std::sqrt((2.0 * r.msb - 1.5 * r.msw) / r.msb);
    for (int s = 0; s < 2; ++s) {
      base[s].col(c) = t.col(s);
      for (int i = 0; i < n; ++i)
        target[s](i, c) = grand + a * (mean[i] - grand) + (t(i, s) - mean[i]) / std::sqrt(2.0);
    }
  }
  const VariationField fb = variation_field(base), ft = variation_field(target);
  int construct_ok = 0;
  for (int c = 0; c < d; ++c) {
    const auto& b = fb.connections[c];
    const auto& t = ft.connections[c];
    construct_ok += std::abs(t.within_var - b.within_var / 2) < 1e-9 && std::abs(t.between_var - 2 * b.between_var) < 1e-9;
  }
  const auto deltas = delta_icc_flow(fb, ft);
  int upper_left = 0, positive = 0;
  for (const auto& x : deltas) {
    upper_left += x.quadrant == Quadrant::UpperLeft;
    positive += x.delta_icc > 0.0;
  }
  return {construct_ok == d && upper_left == d && positive == d,
          std::to_string(d) + " connections: construction exact on " + std::to_string(construct_ok) + ", upper-left " +
              std::to_string(upper_left) + ", delta ICC > 0 on " + std::to_string(positive)};
}

// --- TPE --------------------------------------------------------------------

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

double percentile(std::vector<double> v, double q) {
  // Linear interpolation between order statistics.
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

Outcome tpe_efficacy() {
  const auto t0 = std::chrono::steady_clock::now();
  SearchSpace line;
  line.dimensions.push_back(Dimension::log_uniform("x", 0.01, 1.0));
  auto quadratic = [](const Assignment& a, std::uint64_t) { return -(a[0] - 0.3) * (a[0] - 0.3); };
  std::vector<double> tpe_best, rand_best;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    tpe_best.push_back(run_search(line, quadratic, 60, seed).best_objective);
    rand_best.push_back(run_search(line, quadratic, 60, seed, {1 << 20, 0.25, 24}).best_objective);
  }
  const bool quad_ok = median(tpe_best) > median(rand_best);

  // Desk-scale encoder search on a 20/10 split of the fingerprinting cohort.
  SynthConfig sc;
  sc.n_subjects = 30;
  sc.regions = 16;
  sc.timepoints = 320;
  sc.seed = 1;
  const Cohort cohort = generate_cohort(sc).first;
  const SubjectSplit split = split_subjects(cohort, 20, 10, 0, 1);
  const Cohort train = select_subjects(cohort, split.train);
  const Cohort val = select_subjects(cohort, split.val);
  // Batch choices scaled to the 20 training subjects.
  SearchSpace space = SearchSpace::encoder_default(16);
  space.dimensions[space.index_of("batch_size")] = Dimension::categorical("batch_size", {5, 10, 20});
  FingerprintOptions val_opt;
  val_opt.lengths = {30, 175, 320};
  const ObjectiveFn objective = [&](const Assignment& a, std::uint64_t seed) {
    HyperParams hp;
    hp.n_layers = static_cast<int>(a[space.index_of("n_layers")]);
    hp.n_heads = static_cast<int>(a[space.index_of("n_heads")]);
    hp.ff_dim = static_cast<int>(a[space.index_of("ff_dim")]);
    hp.batch_size = static_cast<int>(a[space.index_of("batch_size")]);
    hp.lr = a[space.index_of("lr")];
    hp.tau = a[space.index_of("tau")];
    TrainConfig tc;
    tc.epochs = 20;
    tc.warmup_epochs = 2;
    tc.seed = seed;
    tc.workers = g_workers;
    tc.hook_stride = 5;
    return train_contrastive(train, hp, tc, make_fingerprint_hook(val, val_opt, g_workers)).best->metric;
  };
  const SearchResult tpe = run_search(space, objective, 15, 7, {5, 0.25, 24});
  const SearchResult random = run_search(space, objective, 50, 8, {1 << 20, 0.25, 24});
  std::vector<double> ref;
  for (const auto& t : random.history)
    if (t.status == TrialStatus::Complete) ref.push_back(t.objective);
  int tpe_done = 0;
  for (const auto& t : tpe.history) tpe_done += t.status == TrialStatus::Complete;
  const double p90 = percentile(ref, 0.9);
  const bool desk_ok = tpe_done > 0 && !ref.empty() && tpe.best_objective >= p90;
  const double secs = seconds_since(t0);
  return {quad_ok && desk_ok && secs < 1800.0,
          "quadratic median best TPE " + num(median(tpe_best), 3) + " vs random " + num(median(rand_best), 3) +
              "; desk search best " + num(tpe.best_objective) + " vs random p90 " + num(p90) + " (" +
              std::to_string(ref.size()) + " samples, TPE " + std::to_string(tpe_done) + "/15 completed), " + num(secs, 4) + " s < 1800 s"};
}

// --- determinism ------------------------------------------------------------

Outcome determinism() {
  testing::TempDir dir("acceptance_det");
  json cfg{{"synth",
            {{"n_subjects", 24},
             {"regions", 16},
             {"timepoints", 320},
             {"labeled", true},
             {"effect_edges", {{0, 5}, {1, 6}, {2, 7}}},
             {"effect_delta", 0.3},
             {"seed", 3}}},
           {"model", {{"ff_dim", 256}, {"batch_size", 8}}},
           {"train", {{"epochs", 4}, {"warmup_epochs", 1}, {"n_train", 12}, {"n_val", 4}, {"n_test", 8}}},
           {"eval", {{"segments", 3}, {"probe_epochs", 50}}}};
  testing::write_bytes(dir / "cfg.json", cfg.dump());
  const std::vector<std::string> files{"synth_report.json", "train_report.json", "fingerprint_report.json",
                                       "classify_report.json"};
  std::vector<std::string> first;
  int identical = 0;
  for (int pass = 0; pass < 2; ++pass) {
    for (const char* sub : {"synth", "train", "fingerprint", "classify"}) {
      std::ostringstream out, err;
      const int code = cli::dispatch({sub, "--config", (dir / "cfg.json").string(), "--out", dir.path().string(),
                                      "--cohort", (dir / "cohort").string(), "--workers", "1"},
                                     out, err);
      if (code != 0) return {false, std::string(sub) + " failed: " + err.str()};
    }
    for (std::size_t i = 0; i < files.size(); ++i) {
      const std::string bytes = testing::read_bytes(dir / files[i]);
      if (pass == 0) {
        first.push_back(bytes);
        std::filesystem::remove(dir / files[i]);
      } else {
        identical += !bytes.empty() && bytes == first[i];
      }
    }
  }
  return {identical == 4, std::to_string(identical) + "/4 reports byte-identical (synth, train, fingerprint, classify)"};
}

struct Check {
  std::string name;
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  std::set<std::string> only;
  bool report = false;
  std::string log_path;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--report") {
      report = true;
    } else if (a == "--only" && i + 1 < argc) {
      std::stringstream list(argv[++i]);
      for (std::string item; std::getline(list, item, ',');) only.insert(item);
    } else if (a == "--workers" && i + 1 < argc) {
      g_workers = std::max(1, std::atoi(argv[++i]));
    } else if (a == "--log" && i + 1 < argc) {
      log_path = argv[++i];
    } else {
      std::cerr << "usage: varconet_acceptance [--only name[,name...]] [--report] [--workers N] [--log FILE]\n";
      return 2;
    }
  }

  const std::vector<Check> criteria{
      {"gradient-correctness", gradient_correctness},
      {"ntxent-oracle", ntxent_oracle},
      {"padding-invariance", padding_invariance},
      {"fc-validity", fc_validity},
      {"end-to-end-fingerprinting", end_to_end_fingerprinting},
      {"objective-function", objective_function},
      {"classification-importance", classification_importance},
      {"icc-calibration", icc_calibration},
      {"delta-icc-flow", delta_icc_flow_check},
      {"tpe-efficacy", tpe_efficacy},
      {"determinism", determinism},
  };

  std::ofstream log;
  if (!log_path.empty()) {
    log.open(log_path, std::ios::trunc);
    if (!log) {
      std::cerr << "cannot write " << log_path << "\n";
      return 2;
    }
  }
  auto emit = [&](const std::string& line) {
    std::cout << line << std::endl;
    if (log) log << line << std::endl;
  };

  int failed = 0, ran = 0;
  for (const auto& c : criteria) {
    if (!only.empty() && !only.count(c.name)) continue;
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    ++ran;
    failed += o.pass ? 0 : 1;
    emit((o.pass ? "PASS " : "FAIL ") + c.name + ": " + o.detail);
  }
  emit(std::to_string(ran - failed) + "/" + std::to_string(ran) + " criteria passed");
  return report || failed == 0 ? 0 : 1;
}
