#include "varconet/config.hpp"

#include <fstream>

#include "varconet/error.hpp"

namespace varconet {

using nlohmann::json;

namespace {

enum class JsonKind { Null, Bool, Integer, Unsigned, Float, String, Array, Object };

JsonKind kind_of(const json& j) {
  switch (j.type()) {
    case json::value_t::boolean: return JsonKind::Bool;
    case json::value_t::number_integer: return JsonKind::Integer;
    case json::value_t::number_unsigned: return JsonKind::Unsigned;
    case json::value_t::number_float: return JsonKind::Float;
    case json::value_t::string: return JsonKind::String;
    case json::value_t::array: return JsonKind::Array;
    case json::value_t::object: return JsonKind::Object;
    default: return JsonKind::Null;
  }
}

std::string join(const std::string& path, const std::string& key) {
  return path.empty() ? key : path + "." + key;
}

bool compatible(const json& want, const json& got) {
  const JsonKind w = kind_of(want), g = kind_of(got);
  if (w == g) return true;
  const bool got_int = g == JsonKind::Integer || g == JsonKind::Unsigned;
  if (w == JsonKind::Float) return got_int;
  if (w == JsonKind::Unsigned) return g == JsonKind::Integer && got.get<std::int64_t>() >= 0;
  if (w == JsonKind::Integer) return g == JsonKind::Unsigned;
  return false;
}

// Rejects keys absent from the defaults and values whose JSON type differs.
// tune.space is free-form; its entries are checked by search_space().
void check_against(const json& defaults, const json& given, const std::string& path) {
  if (!given.is_object()) throw ConfigError(path.empty() ? "config must be a JSON object" : path + ": expected an object");
  for (auto it = given.begin(); it != given.end(); ++it) {
    const std::string key = join(path, it.key());
    if (!defaults.contains(it.key())) throw ConfigError("unknown key " + key);
    const json& want = defaults.at(it.key());
    if (key == "tune.space") {
      if (!it.value().is_object()) throw ConfigError(key + ": expected an object");
      continue;
    }
    if (want.is_object()) {
      check_against(want, it.value(), key);
    } else if (!compatible(want, it.value())) {
      throw ConfigError(key + ": expected " + std::string(want.type_name()) + ", got " +
                        std::string(it.value().type_name()));
    }
  }
}

json merged(json base, const json& patch) {
  for (auto it = patch.begin(); it != patch.end(); ++it) {
    if (it.value().is_object() && base.contains(it.key()) && base[it.key()].is_object() &&
        it.key() != "space") {
      base[it.key()] = merged(base[it.key()], it.value());
    } else {
      base[it.key()] = it.value();
    }
  }
  return base;
}

template <typename Fn>
void with_path(const std::string& path, Fn&& fn) {
  try {
    fn();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

void require(bool ok, const std::string& key, const std::string& what) {
  if (!ok) throw ConfigError(key + ": " + what);
}

json train_json(const TrainSection& t) {
  return json{{"epochs", t.epochs},   {"warmup_epochs", t.warmup_epochs},
              {"floor_lr", t.floor_lr}, {"seed", t.seed},
              {"hook_stride", t.hook_stride}, {"n_train", t.n_train},
              {"n_val", t.n_val},     {"n_test", t.n_test},
              {"selection", t.selection}};
}

TrainSection train_from(const json& j) {
  TrainSection t;
  t.epochs = j.at("epochs");
  t.warmup_epochs = j.at("warmup_epochs");
  t.floor_lr = j.at("floor_lr");
  t.seed = j.at("seed");
  t.hook_stride = j.at("hook_stride");
  t.n_train = j.at("n_train");
  t.n_val = j.at("n_val");
  t.n_test = j.at("n_test");
  t.selection = j.at("selection");
  return t;
}

json eval_json(const EvalSection& e) {
  return json{{"lengths", e.lengths},         {"validation_lengths", e.validation_lengths},
              {"segments", e.segments},
              {"objective", e.objective},     {"window_minutes", e.window_minutes},
              {"probe_epochs", e.probe_epochs}, {"probe_lr", e.probe_lr},
              {"top_k", e.top_k}};
}

EvalSection eval_from(const json& j) {
  EvalSection e;
  with_path("eval.lengths", [&] { e.lengths = j.at("lengths").get<std::array<int, 3>>(); });
  with_path("eval.validation_lengths",
            [&] { e.validation_lengths = j.at("validation_lengths").get<std::array<int, 3>>(); });
  e.segments = j.at("segments");
  e.objective = j.at("objective");
  with_path("eval.window_minutes",
            [&] { e.window_minutes = j.at("window_minutes").get<std::vector<double>>(); });
  e.probe_epochs = j.at("probe_epochs");
  e.probe_lr = j.at("probe_lr");
  e.top_k = j.at("top_k");
  return e;
}

json tune_json(const TuneSection& t) {
  json space = json::object();
  for (const auto& [k, v] : t.space) space[k] = v;
  return json{{"n_trials", t.n_trials}, {"n_startup", t.n_startup}, {"gamma", t.gamma},
              {"n_candidates", t.n_candidates}, {"epochs", t.epochs}, {"space", space}};
}

TuneSection tune_from(const json& j) {
  TuneSection t;
  t.n_trials = j.at("n_trials");
  t.n_startup = j.at("n_startup");
  t.gamma = j.at("gamma");
  t.n_candidates = j.at("n_candidates");
  t.epochs = j.at("epochs");
  for (auto it = j.at("space").begin(); it != j.at("space").end(); ++it) t.space[it.key()] = it.value();
  return t;
}

}  // namespace

FingerprintOptions EvalSection::fingerprint_options(bool validation) const {
  FingerprintOptions o;
  o.lengths = validation ? validation_lengths : lengths;
  o.segments = segments;
  o.objective = objective == "sum" ? ObjectiveKind::Sum : ObjectiveKind::HarmonicMean;
  return o;
}

SearchSpace TuneSection::search_space(int regions) const {
  SearchSpace s = SearchSpace::encoder_default(regions);
  for (const auto& [name, value] : space) {
    const std::string key = "tune.space." + name;
    std::size_t idx = 0;
    try {
      idx = s.index_of(name);
    } catch (const InvariantError&) {
      throw ConfigError("unknown key " + key);
    }
    Dimension& d = s.dimensions[idx];
    if (d.kind == Dimension::Kind::Categorical) {
      require(value.is_array() && !value.empty(), key, "expected a non-empty list of choices");
      d.choices.clear();
      for (const auto& c : value) {
        require(c.is_number(), key, "choices must be numbers");
        d.choices.push_back(c.get<double>());
      }
    } else {
      require(value.is_object() && value.size() == 2 && value.contains("low") && value.contains("high") &&
                  value["low"].is_number() && value["high"].is_number(),
              key, "expected {\"low\": number, \"high\": number}");
      d.low = value["low"];
      d.high = value["high"];
    }
  }
  with_path("tune.space", [&] { s.validate(); });
  return s;
}

void RunConfig::validate() const {
  with_path("synth", [&] { synth.validate(); });
  with_path("model", [&] { model.validate(); });

  require(train.epochs >= 0, "train.epochs", "must be >= 0");
  require(train.warmup_epochs >= 0, "train.warmup_epochs", "must be >= 0");
  require(train.floor_lr >= 0.0 && train.floor_lr <= model.lr, "train.floor_lr", "must lie in [0, model.lr]");
  require(train.hook_stride >= 1, "train.hook_stride", "must be >= 1");
  require(train.n_train >= 0 && train.n_val >= 0 && train.n_test >= 0, "train.n_train",
          "split counts must be >= 0");
  require(train.selection == "fingerprint" || train.selection == "probe", "train.selection",
          "must be \"fingerprint\" or \"probe\"");

  for (int l : eval.lengths) require(l >= model.conv.width, "eval.lengths", "each length must be >= kernel width");
  for (int l : eval.validation_lengths)
    require(l >= model.conv.width, "eval.validation_lengths", "each length must be >= kernel width");
  require(eval.segments >= 1, "eval.segments", "must be >= 1");
  require(eval.objective == "harmonic_mean" || eval.objective == "sum", "eval.objective",
          "must be \"harmonic_mean\" or \"sum\"");
  for (double w : eval.window_minutes) require(w > 0.0, "eval.window_minutes", "must be positive");
  require(eval.probe_epochs >= 1, "eval.probe_epochs", "must be >= 1");
  require(eval.probe_lr > 0.0, "eval.probe_lr", "must be positive");

  require(tune.n_trials >= 0, "tune.n_trials", "must be >= 0");
  require(tune.n_startup >= 0, "tune.n_startup", "must be >= 0");
  require(tune.gamma > 0.0 && tune.gamma < 1.0, "tune.gamma", "must lie in (0, 1)");
  require(tune.n_candidates >= 1, "tune.n_candidates", "must be >= 1");
  require(tune.epochs >= 1, "tune.epochs", "must be >= 1");
  tune.search_space(synth.regions);
}

json to_json(const RunConfig& cfg) {
  json synth, model;
  to_json(synth, cfg.synth);
  to_json(model, cfg.model);
  return json{{"synth", synth},
              {"model", model},
              {"train", train_json(cfg.train)},
              {"eval", eval_json(cfg.eval)},
              {"tune", tune_json(cfg.tune)},
              {"paths",
               {{"cohort", cfg.paths.cohort}, {"out", cfg.paths.out}, {"checkpoint", cfg.paths.checkpoint}}}};
}

RunConfig parse_config(const json& j) {
  const json defaults = to_json(RunConfig{});
  check_against(defaults, j, "");
  const json full = merged(defaults, j);

  RunConfig cfg;
  with_path("synth", [&] { from_json(full.at("synth"), cfg.synth); });
  with_path("model", [&] { from_json(full.at("model"), cfg.model); });
  cfg.train = train_from(full.at("train"));
  cfg.eval = eval_from(full.at("eval"));
  cfg.tune = tune_from(full.at("tune"));
  cfg.paths.cohort = full.at("paths").at("cohort");
  cfg.paths.out = full.at("paths").at("out");
  cfg.paths.checkpoint = full.at("paths").at("checkpoint");
  cfg.validate();
  return cfg;
}

RunConfig parse_config_file(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw IoError("cannot open config " + file.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError(file.string() + ": " + e.what());
  }
  return parse_config(j);
}

}  // namespace varconet
