#include <fstream>

#include "infusenet/config.hpp"
#include "test_util.hpp"

using namespace ifn;

TEST_CASE("empty object yields the defaults") {
  const RunConfig cfg = parse_config_text("{}");
  CHECK(cfg.magnify.mag.alpha == 10.0);
  CHECK(cfg.magnify.mag.depth == 3);
  CHECK(cfg.train.lr == 0.001);
  CHECK(cfg.train.gamma == 0.9);
  CHECK(cfg.train.epochs == 50);
  CHECK(cfg.train.batch == 8);
  CHECK(cfg.train.max_offset == 5);
  CHECK(cfg.corpus.databases.size() == 6);
  CHECK(cfg.model.fusion == FusionMode::infuse);
  CHECK(cfg.eval.ablation_factors == std::vector<double>{5, 10, 15, 20});
  CHECK(cfg.seed == 0);
}

TEST_CASE("invariant violations") {
  CHECK_ERRC(parse_config_text(R"({"train":{"gamma":1.5}})"), Errc::validation);
  CHECK_ERRC(parse_config_text(R"({"train":{"lr":0}})"), Errc::validation);
  CHECK_ERRC(parse_config_text(R"({"corpus":{"height":60}})"), Errc::validation);
  CHECK_ERRC(parse_config_text(R"({"magnify":{"alpha":-1}})"), Errc::invalid_argument);
  CHECK_ERRC(parse_config_text(R"({"model":{"fusion":"sideways"}})"), Errc::validation);
  CHECK_ERRC(parse_config_text(R"({"model":{"kernel":9}})"), Errc::validation);
  CHECK_ERRC(parse_config_text(R"({"train":{"max_offset":16}})"), Errc::validation);
  CHECK_ERRC(parse_config_text(R"({"train":{"epochs":"many"}})"), Errc::validation);
  CHECK_ERRC(parse_config_text(R"({"eval":{"ablation_modes":["infuse","nope"]}})"), Errc::validation);
}

TEST_CASE("unknown keys are rejected at every level") {
  CHECK_ERRC(parse_config_text(R"({"colour":1})"), Errc::unknown_key);
  CHECK_ERRC(parse_config_text(R"({"train":{"momentum":0.9}})"), Errc::unknown_key);
  CHECK_ERRC(parse_config_text(R"({"corpus":{"databases":[{"name":"a","noise":{"hum":1}}]}})"), Errc::unknown_key);
}

TEST_CASE("parse errors carry line context") {
  try {
    parse_config_text("{\n  \"train\": {\n    \"lr\": ,\n  }\n}", "cfg.json");
    FAIL("expected a parse error");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::parse_error);
    const std::string what = e.what();
    CHECK(what.find("cfg.json") != std::string::npos);
    CHECK(what.find("line 3") != std::string::npos);
  }
}

TEST_CASE("resolved config round trips") {
  const RunConfig a = parse_config_text(
      R"({"seed": 12, "magnify": {"alpha": 7.5, "decoded": true}, "train": {"epochs": 3, "loss": "softmax_ce"},
          "model": {"fusion": "late", "widths": [8, 8, 8]}, "eval": {"ablation_factors": [5]}})");
  const nlohmann::json emitted = a.to_json();
  const RunConfig b = config_from_json(emitted);
  CHECK(b.to_json() == emitted);
  CHECK(b.seed == 12);
  CHECK(b.magnify.decoded);
  CHECK(b.train.loss == LossKind::softmax_ce);
  CHECK(b.model.fusion == FusionMode::late);

  const auto dir = testutil::scratch_dir("config");
  write_resolved_config(a, dir);
  CHECK(parse_config(dir / "config.json").to_json() == emitted);
  CHECK_ERRC(parse_config(dir / "absent.json"), Errc::missing_file);
}

TEST_CASE("experiment settings follow the config") {
  const RunConfig cfg = parse_config_text(R"({"flow": {"lambda": 0.02}, "train": {"max_offset": 3}})");
  const ExperimentConfig e = cfg.experiment();
  CHECK(e.inputs.flow.lambda == 0.02);
  CHECK(e.inputs.max_offset == 3);
  CHECK(e.train.max_offset == 3);
  CHECK(e.inputs.magnify.alpha == 10.0);
}
