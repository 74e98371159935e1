#include <doctest.h>

#include <fstream>

#include "cepminer/config.hpp"
#include "support/tempdir.hpp"

using namespace cepminer;
using nlohmann::json;

namespace {

json minimal() {
  return json::parse(R"({
    "schema": {"event_types": ["A", "B"], "attributes": ["x"], "operators": ["<", ">", "="]},
    "paths": {"data": "s.csv", "output_dir": "out"}
  })");
}

std::string error_of(const json& doc) {
  try {
    config_from_json(doc);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST_CASE("a minimal config takes the documented defaults") {
  const RunConfig c = config_from_json(minimal(), "/data/run");
  CHECK(c.mining.schema.event_types == std::vector<std::string>{"A", "B"});
  CHECK(c.mining.max_len == 3);
  CHECK(c.mining.scale == 50);
  CHECK(c.schedule.episodes_per_epoch == 500);
  CHECK(c.schedule.interact_every_episodes == 100);
  CHECK(c.bayes.iterations == 10);
  CHECK(c.bayes.per_iteration == 3);
  CHECK(c.bayes.patience == 5);
  CHECK(c.agent.optimizer == nn::OptimizerKind::Adam);
  CHECK(c.agent.base_lr == doctest::Approx(1e-3));
  CHECK(c.expert.kind == ExpertKind::Simulated);
  CHECK(c.paths.data == std::filesystem::path("/data/run/s.csv"));
  CHECK(c.paths.output_dir == std::filesystem::path("/data/run/out"));
  CHECK_FALSE(c.paths.d0.has_value());
  CHECK(c.seed == 0);
}

TEST_CASE("configs survive a round trip through JSON") {
  json doc = minimal();
  doc["mining"] = {{"max_len", 4}, {"max_conds", 3}, {"within_seconds", 2.5}, {"scale", 10}, {"window_len", 30}};
  doc["expert"] = {{"kind", "live"}, {"sigma", 1.5}, {"timeout_seconds", 30}};
  doc["schedule"] = {{"epochs", 3}, {"query_min", 2}, {"query_max", 4}};
  doc["agent"] = {{"ucb_c", 0.0}, {"optimizer", "sgd"}, {"reward_scale", 0.5}};
  doc["predictor"] = {{"hidden", {8, 4}}, {"activation", "leaky_relu"}};
  doc["matcher"] = {{"equality_eps", 0.25}};
  doc["paths"]["d0"] = "/abs/d0.jsonl";
  doc["seed"] = 10;
  const RunConfig a = config_from_json(doc);
  const RunConfig b = config_from_json(config_to_json(a));
  CHECK(config_to_json(a) == config_to_json(b));
  CHECK(b.mining.within_seconds == 2.5);
  CHECK(b.expert.kind == ExpertKind::Live);
  CHECK(b.agent.optimizer == nn::OptimizerKind::Sgd);
  CHECK(b.predictor.hidden == std::vector<std::size_t>{8, 4});
  CHECK(b.predictor.activation == nn::Activation::LeakyRelu);
  CHECK(b.reward_scale == 0.5);
  CHECK(b.paths.d0 == std::filesystem::path("/abs/d0.jsonl"));
  CHECK(b.seed == 10);
  CHECK(b.mining.seed == 10);
}

TEST_CASE("unknown keys are rejected wherever they appear") {
  json doc = minimal();
  doc["epochs"] = 3;
  CHECK(error_of(doc).find("'epochs'") != std::string::npos);

  doc = minimal();
  doc["schedule"] = {{"epoch", 3}};
  CHECK(error_of(doc).find("schedule.epoch") != std::string::npos);

  doc = minimal();
  doc["schema"]["types"] = json::array();
  CHECK(error_of(doc).find("schema.types") != std::string::npos);

  doc = minimal();
  doc["paths"]["dprim"] = "x";
  CHECK(error_of(doc).find("paths.dprim") != std::string::npos);
}

TEST_CASE("malformed values are reported") {
  auto with = [](const char* section, json value) {
    json doc = minimal();
    doc[section] = std::move(value);
    return error_of(doc);
  };
  CHECK_FALSE(error_of(json::parse(R"({"paths": {"data": "a", "output_dir": "b"}})")).empty());
  CHECK_FALSE(error_of(json::parse(R"({"schema": {"event_types": ["A"], "attributes": ["x"], "operators": ["<"]}})")).empty());
  CHECK_FALSE(with("schema", {{"event_types", {"A"}}, {"attributes", {"x"}}, {"operators", {"<>"}}}).empty());
  CHECK_FALSE(with("schema", {{"event_types", {"A", "A"}}, {"attributes", {"x"}}, {"operators", {"<"}}}).empty());
  CHECK_FALSE(with("mining", {{"max_len", -1}}).empty());
  CHECK_FALSE(with("mining", {{"max_len", "3"}}).empty());
  CHECK_FALSE(with("mining", {{"scale", 1}}).empty());
  CHECK_FALSE(with("mining", {{"within_seconds", 0}}).empty());
  CHECK_FALSE(with("expert", {{"kind", "oracle"}}).empty());
  CHECK_FALSE(with("expert", {{"sigma", -1}}).empty());
  CHECK_FALSE(with("schedule", {{"query_min", 5}, {"query_max", 2}}).empty());
  CHECK_FALSE(with("schedule", {{"episodes_per_epoch", 0}}).empty());
  CHECK_FALSE(with("agent", {{"optimizer", "rmsprop"}}).empty());
  CHECK_FALSE(with("agent", {{"gamma", 1.5}}).empty());
  CHECK_FALSE(with("predictor", {{"dropout", 1.0}}).empty());
  CHECK_FALSE(with("predictor", {{"activation", "tanh"}}).empty());
  CHECK_FALSE(with("matcher", {{"cap", 0}}).empty());
  json doc = minimal();
  doc["seed"] = -1;
  CHECK_FALSE(error_of(doc).empty());
  doc = minimal();
  doc["expert"] = {{"targets", {"EVENTS SEQ(A a) WHERE a.x > 1 WITHIN 1s"}}};
  doc["paths"]["targets"] = "t.json";
  CHECK_FALSE(error_of(doc).empty());
}

TEST_CASE("loading checks that input files exist") {
  const testing::TempDir dir;
  json doc = minimal();
  doc["paths"]["dprime"] = "missing.jsonl";
  dir.write("c.json", doc.dump());
  CHECK_THROWS_AS(load_config(dir.path() / "c.json"), ConfigError);
  dir.write("s.csv", "ts,type,x\n0,A,1\n");
  CHECK_THROWS_WITH_AS(load_config(dir.path() / "c.json"), doctest::Contains("missing.jsonl"), ConfigError);
  dir.write("missing.jsonl", "");
  const RunConfig c = load_config(dir.path() / "c.json");
  CHECK(c.paths.data == dir.path() / "s.csv");
  dir.write("bad.json", "{ not json");
  CHECK_THROWS_AS(load_config(dir.path() / "bad.json"), ConfigError);
  CHECK_THROWS_AS(load_config(dir.path() / "absent.json"), ConfigError);
}

TEST_CASE("targets come from the config or from a targets file") {
  const testing::TempDir dir;
  json doc = minimal();
  doc["expert"] = {{"targets", {"EVENTS SEQ(A a, B b) WHERE a.x < b.x WITHIN 5s"}}};
  auto targets = load_targets(config_from_json(doc, dir.path()));
  REQUIRE(targets.size() == 1);
  CHECK(targets[0].size() == 2);

  doc = minimal();
  doc["paths"]["targets"] = "t.json";
  dir.write("t.json", json{{"schema", doc["schema"]}, {"targets", {"EVENTS SEQ(B a) WHERE a.x = 3 WITHIN 1s"}}}.dump());
  targets = load_targets(config_from_json(doc, dir.path()));
  REQUIRE(targets.size() == 1);
  CHECK(targets[0].events[0].event_type == "B");

  json other = doc["schema"];
  other["event_types"] = {"A", "C"};
  dir.write("t.json", json{{"schema", other}, {"targets", json::array()}}.dump());
  CHECK_THROWS_AS(load_targets(config_from_json(doc, dir.path())), ConfigError);
  dir.write("t.json", json{{"patterns", json::array()}}.dump());
  CHECK_THROWS_AS(load_targets(config_from_json(doc, dir.path())), ConfigError);
}
