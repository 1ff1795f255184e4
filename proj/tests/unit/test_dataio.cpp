#include <doctest.h>

#include <cmath>
#include <cstring>
#include <functional>
#include <nlohmann/json.hpp>

#include "helpers.hpp"
#include "varconet/checkpoint.hpp"
#include "varconet/dataio.hpp"
#include "varconet/error.hpp"

using namespace varconet;
using nlohmann::json;

namespace {

Cohort small_cohort(Rng& rng, bool labels = false) {
  Cohort c;
  for (int s = 0; s < 3; ++s) {
    for (int k = 0; k < 2; ++k) {
      c.recordings.push_back({"sub" + std::to_string(s), k, testing::gaussian(4, 10 + s, rng), 1.5});
    }
  }
  if (labels) c.labels = std::map<std::string, int>{{"sub0", 0}, {"sub1", 1}, {"sub2", 1}};
  return c;
}

Matrix as_f32(const Matrix& m) { return m.cast<float>().cast<double>(); }

}  // namespace

TEST_SUITE("dataio") {
  TEST_CASE("cohort round trip reproduces every stored matrix exactly") {
    Rng rng(1);
    const Cohort c = small_cohort(rng, true);
    testing::TempDir dir("cohort");
    save_cohort(c, dir.path());
    const Cohort back = load_cohort(dir.path());
    REQUIRE(back.recordings.size() == c.recordings.size());
    for (std::size_t i = 0; i < c.recordings.size(); ++i) {
      CHECK(back.recordings[i].subject_id == c.recordings[i].subject_id);
      CHECK(back.recordings[i].session_index == c.recordings[i].session_index);
      CHECK(back.recordings[i].data == as_f32(c.recordings[i].data));
      CHECK(back.recordings[i].tr_seconds == 1.5);
    }
    REQUIRE(back.labels);
    CHECK(*back.labels == *c.labels);
  }

  TEST_CASE("saving twice gives identical bytes and the manifest carries labels") {
    Rng rng(2);
    const Cohort c = small_cohort(rng, true);
    testing::TempDir a("a"), b("b");
    save_cohort(c, a.path());
    save_cohort(c, b.path());
    for (const auto& entry : std::filesystem::directory_iterator(a.path())) {
      CHECK(testing::read_bytes(entry.path()) ==
            testing::read_bytes(b.path() / entry.path().filename()));
    }
    const json manifest = json::parse(testing::read_bytes(a / "manifest.json"));
    CHECK(manifest.at("format_tag") == "VCND");
    CHECK(manifest.at("version") == 1);
    CHECK(manifest.at("labels").at("sub1") == 1);
  }

  TEST_CASE("empty cohort is valid") {
    testing::TempDir dir("empty");
    save_cohort(Cohort{}, dir.path());
    CHECK(load_cohort(dir.path()).recordings.empty());
  }

  TEST_CASE("truncated blob is a corruption error") {
    Rng rng(3);
    Cohort c;
    c.recordings.push_back({"s", 0, testing::gaussian(4, 10, rng), 1.0});
    testing::TempDir dir("trunc");
    save_cohort(c, dir.path());
    const json manifest = json::parse(testing::read_bytes(dir / "manifest.json"));
    const auto blob = dir.path() / manifest.at("recordings").at(0).at("file").get<std::string>();
    const std::string bytes = testing::read_bytes(blob);
    REQUIRE(bytes.size() == 40 * 4);
    testing::write_bytes(blob, bytes.substr(0, 39 * 4));
    CHECK_THROWS_AS(load_cohort(dir.path()), CorruptionError);
  }

  TEST_CASE("missing manifest, duplicate recording and unwritable path") {
    testing::TempDir dir("errors");
    CHECK_THROWS_AS(load_cohort(dir.path()), FormatError);

    Rng rng(4);
    Cohort c;
    c.recordings.push_back({"s", 0, testing::gaussian(3, 5, rng), 1.0});
    save_cohort(c, dir.path());
    json manifest = json::parse(testing::read_bytes(dir / "manifest.json"));
    manifest["recordings"].push_back(manifest["recordings"][0]);
    testing::write_bytes(dir / "manifest.json", manifest.dump());
    CHECK_THROWS_AS(load_cohort(dir.path()), InvariantError);

    testing::write_bytes(dir / "plainfile", "x");
    CHECK_THROWS_AS(save_cohort(c, dir / "plainfile" / "sub"), IoError);
  }

  TEST_CASE("recording invariants") {
    Rng rng(5);
    CHECK_THROWS_AS(validate(Recording{"s", 0, testing::gaussian(1, 5, rng), 1.0}), InvariantError);
    CHECK_THROWS_AS(validate(Recording{"s", 2, testing::gaussian(2, 5, rng), 1.0}), InvariantError);
    Matrix bad = testing::gaussian(2, 5, rng);
    bad(1, 1) = std::nan("");
    CHECK_THROWS_AS(validate(Recording{"s", 0, bad, 1.0}), InvariantError);
    Cohort c;
    c.labels = std::map<std::string, int>{{"ghost", 1}};
    CHECK_THROWS_AS(validate(c), InvariantError);
  }

  TEST_CASE("resample_tr length formula and HCP example") {
    Rng rng(6);
    const Recording hcp{"s", 0, testing::gaussian(2, 1200, rng), 0.72};
    const Recording out = resample_tr(hcp, 1.5);
    // (1200 - 1) * 0.72 = 863.28 s; 863.28 / 1.5 = 575.52 -> 575 + 1
    CHECK(out.timepoints() == 576);
    CHECK(out.tr_seconds == 1.5);
    CHECK((out.timepoints() - 1) * 1.5 <= (1200 - 1) * 0.72);
    CHECK((out.timepoints() - 1) * 1.5 > (1200 - 1) * 0.72 - 1.5);
  }

  TEST_CASE("resample_tr identity, constants and affine signals") {
    Rng rng(7);
    const Recording r{"s", 0, testing::gaussian(3, 50, rng), 2.0};
    CHECK(resample_tr(r, 2.0).data.isApprox(r.data, 1e-15));

    Recording constant{"s", 0, Matrix::Constant(2, 40, 3.25), 0.72};
    const Recording rc = resample_tr(constant, 1.5);
    CHECK((rc.data.array() - 3.25).abs().maxCoeff() < 1e-12);

    Recording affine{"s", 0, Matrix(2, 100), 0.72};
    for (Eigen::Index t = 0; t < 100; ++t) {
      affine.data(0, t) = 1.0 + 0.5 * (t * 0.72);
      affine.data(1, t) = -2.0 - 0.1 * (t * 0.72);
    }
    const Recording ra = resample_tr(affine, 1.5);
    for (Eigen::Index t = 0; t < ra.timepoints(); ++t) {
      CHECK(ra.data(0, t) == doctest::Approx(1.0 + 0.5 * (t * 1.5)).epsilon(1e-12));
      CHECK(ra.data(1, t) == doctest::Approx(-2.0 - 0.1 * (t * 1.5)).epsilon(1e-12));
    }
    Matrix nan_data = r.data;
    nan_data(0, 0) = INFINITY;
    CHECK_THROWS(resample_tr(Recording{"s", 0, nan_data, 2.0}, 1.0));
    CHECK_THROWS(resample_tr(r, 0.0));
  }

  TEST_CASE("crop_recording slicing, composition and bounds") {
    Rng rng(8);
    const Recording r{"s", 1, testing::gaussian(3, 320, rng), 1.5};
    CHECK(crop_recording(r, 0, 320).data == r.data);
    const Recording c = crop_recording(r, 100, 120);
    CHECK(c.timepoints() == 120);
    CHECK(c.data == r.data.middleCols(100, 120));
    CHECK(c.subject_id == "s");
    CHECK(c.session_index == 1);
    CHECK(crop_recording(crop_recording(r, 40, 200), 30, 50).data == crop_recording(r, 70, 50).data);
    CHECK_THROWS_AS(crop_recording(r, 300, 30), BoundsError);
  }

  TEST_CASE("checkpoint round trip and header validation") {
    ParamStore p;
    p.add("a", {2, 3}, ParamRole::Weight, 2);
    p.add("b", {3}, ParamRole::Bias);
    Rng rng(9);
    p[0].values = testing::gaussian(6, 1, rng);
    p[1].values = testing::gaussian(3, 1, rng);
    testing::TempDir dir("ckpt");
    save_checkpoint(dir / "m.vcnc", p, json{{"lr", 0.1}}, 7);
    const Checkpoint ck = load_checkpoint(dir / "m.vcnc");
    CHECK(ck.header.epoch == 7);
    CHECK(ck.header.hyperparameters.at("lr") == 0.1);
    CHECK(ck.params[0].values == as_f32(p[0].values));
    CHECK(ck.params.at("b").shape == std::vector<Eigen::Index>{3});
    CHECK(testing::read_bytes(dir / "m.vcnc").substr(0, 4) == "VCNC");

    // Rewrites the JSON header of a saved checkpoint, keeping the payload.
    auto rewrite = [&](const std::function<void(json&)>& edit) {
      const std::string bytes = testing::read_bytes(dir / "m.vcnc");
      std::uint32_t len = 0;
      std::memcpy(&len, bytes.data() + 8, 4);
      json header = json::parse(bytes.substr(12, len));
      edit(header);
      const std::string text = header.dump();
      const auto new_len = static_cast<std::uint32_t>(text.size());
      std::string out = bytes.substr(0, 8);
      out.append(reinterpret_cast<const char*>(&new_len), 4);
      out += text;
      out += bytes.substr(12 + len);
      testing::write_bytes(dir / "bad.vcnc", out);
    };
    rewrite([](json& h) { h["tensors"][1]["name"] = "a"; });
    CHECK_THROWS_AS(load_checkpoint(dir / "bad.vcnc"), CorruptionError);
    rewrite([](json& h) { h["tensors"][1]["offset"] = 4; });
    CHECK_THROWS_AS(load_checkpoint(dir / "bad.vcnc"), CorruptionError);
    rewrite([](json& h) { h["tensors"][1]["offset"] = 1000; });
    CHECK_THROWS_AS(load_checkpoint(dir / "bad.vcnc"), CorruptionError);
    testing::write_bytes(dir / "bad.vcnc", "NOPE1234");
    CHECK_THROWS_AS(load_checkpoint(dir / "bad.vcnc"), FormatError);
  }

  TEST_CASE("embedding table round trip") {
    Rng rng(10);
    EmbeddingTable t;
    t.subject_ids = {"x", "x", "y"};
    t.sessions = {0, 1, 0};
    t.values = testing::gaussian(3, 6, rng);
    t.regions = 4;
    testing::TempDir dir("emb");
    save_embeddings(t, dir / "e.f32");
    const EmbeddingTable back = load_embeddings(dir / "e.f32");
    CHECK(back.subject_ids == t.subject_ids);
    CHECK(back.sessions == t.sessions);
    CHECK(back.regions == 4);
    CHECK(back.values == as_f32(t.values));
  }
}
