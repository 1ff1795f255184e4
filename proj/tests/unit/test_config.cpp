#include <doctest.h>

#include "helpers.hpp"
#include "varconet/config.hpp"
#include "varconet/error.hpp"

using namespace varconet;
using nlohmann::json;

namespace {

std::string config_error(const json& j) {
  try {
    parse_config(j);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST_SUITE("config") {
  TEST_CASE("empty object gives the defaults") {
    const RunConfig cfg = parse_config(json::object());
    CHECK(cfg == RunConfig{});
    CHECK(cfg.model.tau == 0.054);
    CHECK(cfg.model.l_min == 80);
    CHECK(cfg.model.l_max == 320);
    CHECK(cfg.eval.lengths == std::array<int, 3>{80, 200, 320});
  }

  TEST_CASE("round trip") {
    RunConfig cfg;
    cfg.model.n_layers = 3;
    cfg.train.epochs = 7;
    cfg.eval.objective = "sum";
    cfg.tune.space["tau"] = json{{"low", 0.01}, {"high", 0.5}};
    cfg.paths.out = "elsewhere";
    CHECK(parse_config(to_json(cfg)) == cfg);
    CHECK(parse_config(to_json(RunConfig{})) == RunConfig{});

    testing::TempDir dir("config");
    testing::write_bytes(dir / "c.json", to_json(cfg).dump(2));
    CHECK(parse_config_file(dir / "c.json") == cfg);
    testing::write_bytes(dir / "broken.json", "{");
    CHECK_THROWS_AS(parse_config_file(dir / "broken.json"), ConfigError);
    CHECK_THROWS_AS(parse_config_file(dir / "missing.json"), IoError);
  }

  TEST_CASE("errors name the key path") {
    CHECK(config_error(json{{"model", {{"l_min", 4}}}}).find("model") != std::string::npos);
    CHECK(config_error(json{{"model", {{"dropout", 0.1}}}}).find("model.dropout") != std::string::npos);
    CHECK(config_error(json{{"train", {{"epochs", "ten"}}}}).find("train.epochs") != std::string::npos);
    CHECK(config_error(json{{"eval", {{"objective", "max"}}}}).find("eval.objective") != std::string::npos);
    CHECK(config_error(json{{"tune", {{"space", {{"dropout", {0.1}}}}}}}).find("tune.space.dropout") !=
          std::string::npos);
    CHECK(config_error(json{{"tune", {{"space", {{"tau", {{"low", 1.0}}}}}}}}).find("tune.space.tau") !=
          std::string::npos);
    CHECK(config_error(json{{"train", {{"floor_lr", 1.0}}}}).find("train.floor_lr") != std::string::npos);
    CHECK(!config_error(json::array()).empty());
  }

  TEST_CASE("sections feed the pipeline structs") {
    RunConfig cfg;
    cfg.eval.objective = "sum";
    cfg.eval.segments = 4;
    const FingerprintOptions eval = cfg.eval.fingerprint_options();
    const FingerprintOptions val = cfg.eval.fingerprint_options(true);
    CHECK(eval.lengths == cfg.eval.lengths);
    CHECK(val.lengths == cfg.eval.validation_lengths);
    CHECK(eval.segments == 4);
    CHECK(eval.objective == ObjectiveKind::Sum);

    cfg.tune.space["n_layers"] = json::array({1, 2});
    const SearchSpace s = cfg.tune.search_space(16);
    CHECK(s.dimensions[s.index_of("n_layers")].choices == std::vector<double>{1, 2});
    CHECK(cfg.tune.tpe().n_startup == 15);
  }
}
