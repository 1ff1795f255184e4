#include "varconet/tpe.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <numeric>

#include "varconet/error.hpp"

namespace varconet {

using nlohmann::json;

Dimension Dimension::categorical(std::string name, std::vector<double> choices) {
  Dimension d;
  d.name = std::move(name);
  d.kind = Kind::Categorical;
  d.choices = std::move(choices);
  return d;
}

Dimension Dimension::log_uniform(std::string name, double low, double high) {
  Dimension d;
  d.name = std::move(name);
  d.kind = Kind::LogUniform;
  d.low = low;
  d.high = high;
  return d;
}

bool Dimension::contains(double value) const {
  if (kind == Kind::Categorical) {
    return std::find(choices.begin(), choices.end(), value) != choices.end();
  }
  return value >= low && value <= high;
}

void SearchSpace::validate() const {
  if (dimensions.empty()) throw InvariantError("search space has no dimensions");
  for (const auto& d : dimensions) {
    if (d.kind == Dimension::Kind::Categorical && d.choices.empty()) {
      throw InvariantError("dimension " + d.name + " has no choices");
    }
    if (d.kind == Dimension::Kind::LogUniform && !(d.low > 0.0 && d.low < d.high)) {
      throw InvariantError("dimension " + d.name + " needs 0 < low < high");
    }
  }
}

std::size_t SearchSpace::index_of(const std::string& name) const {
  for (std::size_t i = 0; i < dimensions.size(); ++i)
    if (dimensions[i].name == name) return i;
  throw InvariantError("search space has no dimension " + name);
}

SearchSpace SearchSpace::encoder_default(int regions) {
  std::vector<double> heads;
  for (int h : {1, 2, 4})
    if (regions % h == 0) heads.push_back(h);
  SearchSpace s;
  s.dimensions = {Dimension::categorical("n_layers", {1, 2, 3}),
                  Dimension::categorical("n_heads", heads),
                  Dimension::categorical("ff_dim", {512, 1024, 2048}),
                  Dimension::categorical("batch_size", {32, 64, 128}),
                  Dimension::log_uniform("lr", 1e-5, 1e-3),
                  Dimension::log_uniform("tau", 0.01, 0.5)};
  return s;
}

Assignment sample_uniform(const SearchSpace& space, Rng& rng) {
  Assignment a;
  a.reserve(space.dimensions.size());
  for (const auto& d : space.dimensions) {
    if (d.kind == Dimension::Kind::Categorical) {
      std::uniform_int_distribution<std::size_t> pick(0, d.choices.size() - 1);
      a.push_back(d.choices[pick(rng)]);
    } else {
      std::uniform_real_distribution<double> u(std::log(d.low), std::log(d.high));
      a.push_back(std::clamp(std::exp(u(rng)), d.low, d.high));
    }
  }
  return a;
}

namespace {

// Equal-weight Gaussian mixture in log space.
struct Parzen {
  std::vector<double> centers;
  double bandwidth = 1.0;
  double lo = 0.0, hi = 0.0;

  Parzen(std::vector<double> points, double lo_, double hi_) : centers(std::move(points)), lo(lo_), hi(hi_) {
    const double n = static_cast<double>(centers.size());
    const double mean = std::accumulate(centers.begin(), centers.end(), 0.0) / n;
    double var = 0.0;
    for (double c : centers) var += (c - mean) * (c - mean);
    const double sd = std::sqrt(var / n);
    const double scott = 1.059 * sd * std::pow(n, -0.2);
    // Floor shrinks with the sample count; a fixed tiny floor lets a tight
    // good set collapse the search onto its first cluster.
    bandwidth = std::max(scott, (hi - lo) / std::min(100.0, n + 1.0));
  }

  double sample(Rng& rng) const {
    std::uniform_int_distribution<std::size_t> pick(0, centers.size() - 1);
    std::normal_distribution<double> noise(0.0, bandwidth);
    return std::clamp(centers[pick(rng)] + noise(rng), lo, hi);
  }

  double log_density(double u) const {
    double acc = 0.0;
    for (double c : centers) {
      const double z = (u - c) / bandwidth;
      acc += std::exp(-0.5 * z * z);
    }
    acc /= static_cast<double>(centers.size()) * bandwidth * std::sqrt(2.0 * std::numbers::pi);
    return std::log(std::max(acc, std::numeric_limits<double>::min()));
  }
};

struct Frequencies {
  std::vector<double> probs;

  Frequencies(const Dimension& d, const std::vector<double>& values) {
    probs.assign(d.choices.size(), 1.0);
    for (double v : values) {
      auto it = std::find(d.choices.begin(), d.choices.end(), v);
      if (it != d.choices.end()) probs[static_cast<std::size_t>(it - d.choices.begin())] += 1.0;
    }
    const double total = std::accumulate(probs.begin(), probs.end(), 0.0);
    for (auto& p : probs) p /= total;
  }

  std::size_t sample(Rng& rng) const {
    std::discrete_distribution<std::size_t> dist(probs.begin(), probs.end());
    return dist(rng);
  }
};

}  // namespace

Assignment suggest(const std::vector<TrialRecord>& history, const SearchSpace& space, Rng& rng,
                   const TpeConfig& cfg) {
  std::vector<const TrialRecord*> done;
  for (const auto& t : history)
    if (t.status == TrialStatus::Complete && std::isfinite(t.objective)) done.push_back(&t);
  if (static_cast<int>(done.size()) < cfg.n_startup) return sample_uniform(space, rng);

  std::stable_sort(done.begin(), done.end(),
                   [](const TrialRecord* a, const TrialRecord* b) { return a->objective > b->objective; });
  const auto n_good = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::ceil(cfg.gamma * static_cast<double>(done.size()))));
  if (n_good >= done.size()) return sample_uniform(space, rng);

  const std::size_t dims = space.dimensions.size();
  std::vector<Assignment> candidates(static_cast<std::size_t>(cfg.n_candidates), Assignment(dims));
  std::vector<double> score(candidates.size(), 0.0);

  for (std::size_t d = 0; d < dims; ++d) {
    const auto& dim = space.dimensions[d];
    std::vector<double> good, bad;
    for (std::size_t i = 0; i < done.size(); ++i) {
      const double v = done[i]->assignment[d];
      (i < n_good ? good : bad).push_back(v);
    }
    if (dim.kind == Dimension::Kind::Categorical) {
      const Frequencies l(dim, good), g(dim, bad);
      for (std::size_t c = 0; c < candidates.size(); ++c) {
        const std::size_t k = l.sample(rng);
        candidates[c][d] = dim.choices[k];
        score[c] += std::log(l.probs[k]) - std::log(g.probs[k]);
      }
    } else {
      const double lo = std::log(dim.low), hi = std::log(dim.high);
      auto to_log = [](std::vector<double> v) {
        for (auto& x : v) x = std::log(x);
        return v;
      };
      const Parzen l(to_log(good), lo, hi), g(to_log(bad), lo, hi);
      for (std::size_t c = 0; c < candidates.size(); ++c) {
        const double u = l.sample(rng);
        candidates[c][d] = std::clamp(std::exp(u), dim.low, dim.high);
        score[c] += l.log_density(u) - g.log_density(u);
      }
    }
  }
  const auto best = static_cast<std::size_t>(std::max_element(score.begin(), score.end()) - score.begin());
  return candidates[best];
}

void observe(std::vector<TrialRecord>& history, const SearchSpace& space, Assignment assignment,
             std::optional<double> objective) {
  if (assignment.size() != space.dimensions.size()) {
    throw InvariantError("assignment has " + std::to_string(assignment.size()) + " values for " +
                         std::to_string(space.dimensions.size()) + " dimensions");
  }
  for (std::size_t d = 0; d < assignment.size(); ++d) {
    if (!space.dimensions[d].contains(assignment[d])) {
      throw InvariantError("value " + std::to_string(assignment[d]) + " outside dimension " +
                           space.dimensions[d].name);
    }
  }
  TrialRecord r;
  r.assignment = std::move(assignment);
  if (objective && std::isfinite(*objective)) {
    r.objective = *objective;
    r.status = TrialStatus::Complete;
  } else {
    r.objective = -std::numeric_limits<double>::infinity();
    r.status = TrialStatus::Failed;
  }
  history.push_back(std::move(r));
}

json to_json(const SearchSpace& space, const TrialRecord& record) {
  json values = json::object();
  for (std::size_t d = 0; d < space.dimensions.size(); ++d)
    values[space.dimensions[d].name] = record.assignment[d];
  json j{{"assignment", values},
         {"status", record.status == TrialStatus::Complete ? "complete" : "failed"}};
  j["objective"] = record.status == TrialStatus::Complete ? json(record.objective) : json(nullptr);
  return j;
}

TrialRecord trial_from_json(const SearchSpace& space, const json& j) {
  TrialRecord r;
  for (const auto& d : space.dimensions) r.assignment.push_back(j.at("assignment").at(d.name).get<double>());
  const bool ok = j.at("status").get<std::string>() == "complete";
  r.status = ok ? TrialStatus::Complete : TrialStatus::Failed;
  r.objective = ok ? j.at("objective").get<double>() : -std::numeric_limits<double>::infinity();
  return r;
}

std::vector<TrialRecord> load_history(const SearchSpace& space, const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw IoError("cannot open trial history " + file.string());
  std::vector<TrialRecord> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      out.push_back(trial_from_json(space, json::parse(line)));
    } catch (const json::exception& e) {
      throw FormatError(file.string() + ": " + e.what());
    }
  }
  return out;
}

SearchResult run_search(const SearchSpace& space, const ObjectiveFn& objective, int n_trials,
                        std::uint64_t seed, const TpeConfig& cfg, std::vector<TrialRecord> history,
                        const std::optional<std::filesystem::path>& log_path) {
  space.validate();
  std::ofstream log;
  if (log_path) {
    log.open(*log_path, std::ios::app);
    if (!log) throw IoError("cannot append to " + log_path->string());
  }
  SearchResult result;
  result.history = std::move(history);
  for (auto trial = static_cast<int>(result.history.size()); trial < n_trials; ++trial) {
    Rng rng = make_stream(seed, static_cast<std::uint64_t>(trial));
    Assignment a = suggest(result.history, space, rng, cfg);
    std::optional<double> value;
    try {
      value = objective(a, make_stream(seed, 0x7472ull << 32 | static_cast<std::uint64_t>(trial))());
    } catch (const std::exception&) {
      value.reset();
    }
    observe(result.history, space, std::move(a), value);
    if (log.is_open()) log << to_json(space, result.history.back()).dump() << "\n" << std::flush;
  }

  result.best_objective = -std::numeric_limits<double>::infinity();
  for (const auto& t : result.history) {
    if (t.status == TrialStatus::Complete && t.objective > result.best_objective) {
      result.best_objective = t.objective;
      result.best = t.assignment;
    }
    result.running_best.push_back(result.best_objective);
  }
  return result;
}

}  // namespace varconet
