#include <doctest.h>

#include <cmath>
#include <set>

#include "helpers.hpp"
#include "varconet/contrastive.hpp"
#include "varconet/error.hpp"
#include "varconet/nn.hpp"

using namespace varconet;

namespace {

// Direct scalar evaluation: every ordered positive pair (i, i+N mod 2N)
// contributes -log(exp(s_ij/t) / sum_{k != i} exp(s_ik/t)).
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
    const std::size_t j = (i + n) % m;
    double denom = 0.0;
    for (std::size_t k = 0; k < m; ++k)
      if (k != i) denom += std::exp(sim(i, k) / tau);
    total += -std::log(std::exp(sim(i, j) / tau) / denom);
  }
  return total / static_cast<double>(m);
}

Cohort cohort_of(const std::vector<std::pair<std::string, int>>& recs, Rng& rng) {
  Cohort c;
  for (const auto& [s, k] : recs) c.recordings.push_back({s, k, testing::gaussian(3, 20, rng), 1.5});
  return c;
}

}  // namespace

TEST_SUITE("contrastive") {
  TEST_CASE("sample_segment_pair bounds and the degenerate range") {
    Rng rng(1);
    for (int i = 0; i < 500; ++i) {
      const SegmentPair p = sample_segment_pair(320, 80, 320, rng);
      for (const Segment& s : {p.view_a, p.view_b}) {
        CHECK(s.length >= 80);
        CHECK(s.length <= 320);
        CHECK(s.start >= 0);
        CHECK(s.start + s.length <= 320);
      }
    }
    const SegmentPair full = sample_segment_pair(80, 80, 320, rng);
    CHECK(full.view_a.start == 0);
    CHECK(full.view_a.length == 80);
    CHECK(full.view_b.start == 0);
    CHECK(full.view_b.length == 80);
    CHECK_THROWS_AS(sample_segment_pair(79, 80, 320, rng), BoundsError);
  }

  TEST_CASE("segment lengths are uniform") {
    // Chi-square over 8 equal-width bins of [80, 319].
    Rng rng(2);
    std::vector<int> bins(8, 0);
    const int draws = 16000;
    for (int i = 0; i < draws / 2; ++i) {
      const SegmentPair p = sample_segment_pair(400, 80, 319, rng);
      ++bins[(p.view_a.length - 80) / 30];
      ++bins[(p.view_b.length - 80) / 30];
    }
    double chi2 = 0.0;
    const double expected = draws / 8.0;
    for (int b : bins) chi2 += (b - expected) * (b - expected) / expected;
    CHECK(chi2 < 24.32);  // 0.999 quantile at 7 degrees of freedom
  }

  TEST_CASE("make_batches never pairs a subject with itself") {
    Rng data_rng(3);
    const Cohort c = cohort_of({{"a", 0}, {"a", 1}, {"b", 0}, {"c", 0}}, data_rng);
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
      Rng rng(seed);
      const auto batches = make_batches(c, 2, rng);
      for (const auto& b : batches) {
        CHECK(b.recordings.size() >= 2);
        std::set<std::string> ids(b.subject_ids.begin(), b.subject_ids.end());
        CHECK(ids.size() == b.subject_ids.size());
        for (std::size_t k = 0; k < b.recordings.size(); ++k)
          CHECK(c.recordings[b.recordings[k]].subject_id == b.subject_ids[k]);
      }
    }
    Rng rng(4);
    const Cohort solo = cohort_of({{"a", 0}, {"a", 1}}, data_rng);
    CHECK_THROWS(make_batches(solo, 2, rng));
  }

  TEST_CASE("make_batches with unique subjects is a shuffled partition") {
    Rng data_rng(5);
    std::vector<std::pair<std::string, int>> recs;
    for (int s = 0; s < 10; ++s) recs.emplace_back("s" + std::to_string(s), 0);
    const Cohort c = cohort_of(recs, data_rng);
    Rng rng(6);
    const auto batches = make_batches(c, 4, rng);
    REQUIRE(batches.size() == 3);
    std::multiset<std::size_t> seen;
    for (const auto& b : batches) seen.insert(b.recordings.begin(), b.recordings.end());
    CHECK(seen.size() == 10);
    CHECK(std::set<std::size_t>(seen.begin(), seen.end()).size() == 10);
  }

  TEST_CASE("sample_views pairs views i and i+N") {
    Rng data_rng(7);
    Cohort c;
    for (int s = 0; s < 3; ++s) c.recordings.push_back({"s" + std::to_string(s), 0, testing::gaussian(4, 120, data_rng), 1.5});
    Rng rng(8);
    const auto batches = make_batches(c, 3, rng);
    REQUIRE(batches.size() == 1);
    const ContrastInputs in = sample_views(c, batches[0], 40, 100, rng);
    REQUIRE(in.views.size() == 6);
    for (std::size_t i = 0; i < 3; ++i) {
      const auto& p = in.pairs[i];
      const Matrix& src = c.recordings[batches[0].recordings[i]].data;
      CHECK(in.views[i] == src.middleCols(p.view_a.start, p.view_a.length));
      CHECK(in.views[i + 3] == src.middleCols(p.view_b.start, p.view_b.length));
    }
  }

  TEST_CASE("ntxent worked examples") {
    std::vector<Vector> single{Vector::Unit(3, 0), Vector::Unit(3, 1)};
    CHECK(ntxent_loss(single, 0.5).loss == 0.0);

    // Positive pairs (0, 2) and (1, 3).
    std::vector<Vector> z{Vector::Unit(2, 0), Vector::Unit(2, 1), Vector::Unit(2, 0), Vector::Unit(2, 1)};
    const double e = std::exp(1.0);
    const double expected = -std::log(e / (e + 2.0));
    CHECK(expected == doctest::Approx(0.551445).epsilon(1e-6));
    CHECK(std::abs(ntxent_loss(z, 1.0).loss - expected) < 1e-12);

    z[1].setZero();
    CHECK_THROWS(ntxent_loss(z, 1.0));
  }

  TEST_CASE("ntxent matches the brute-force oracle") {
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
      Rng rng(seed);
      std::uniform_int_distribution<int> pick_n(1, 4), pick_d(2, 6);
      std::uniform_real_distribution<double> pick_tau(0.05, 2.0);
      const int n = pick_n(rng), d = pick_d(rng);
      const double tau = pick_tau(rng);
      std::vector<Vector> z;
      for (int i = 0; i < 2 * n; ++i) z.push_back(testing::gaussian(d, 1, rng));
      CHECK(std::abs(ntxent_loss(z, tau).loss - brute_force_ntxent(z, tau)) < 1e-10);
    }
  }

  TEST_CASE("ntxent gradient agrees with finite differences") {
    Rng rng(9);
    std::vector<Vector> z;
    for (int i = 0; i < 6; ++i) z.push_back(testing::gaussian(10, 1, rng));
    const NtXentResult r = ntxent_loss(z, 0.054);
    Vector flat(60), grad(60);
    for (int i = 0; i < 6; ++i) {
      flat.segment(10 * i, 10) = z[i];
      grad.segment(10 * i, 10) = r.grad[i];
    }
    auto f = [](const Vector& v) {
      std::vector<Vector> zz;
      for (int i = 0; i < 6; ++i) zz.push_back(v.segment(10 * i, 10));
      return ntxent_loss(zz, 0.054).loss;
    };
    CHECK(finite_diff_check(f, flat, grad, 1e-5) < 1e-4);
  }

  TEST_CASE("aligned positives lose less at lower temperature") {
    // Positives identical, negatives orthogonal: sharper tau -> smaller loss.
    std::vector<Vector> z{Vector::Unit(3, 0), Vector::Unit(3, 1), Vector::Unit(3, 0), Vector::Unit(3, 1)};
    double prev = ntxent_loss(z, 2.0).loss;
    for (double tau : {1.0, 0.5, 0.1, 0.054}) {
      const double cur = ntxent_loss(z, tau).loss;
      CHECK(cur < prev);
      prev = cur;
    }
  }
}
