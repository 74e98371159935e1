#include <doctest.h>

#include <fstream>
#include <map>
#include <set>

#include "cepminer/nn_io.hpp"
#include "cepminer/trainer.hpp"
#include "support/synthetic_run.hpp"
#include "support/tempdir.hpp"

using namespace cepminer;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

testing::SyntheticRunOptions small_run() {
  testing::SyntheticRunOptions o;
  o.rows = 1500;
  o.dprime_count = 40;
  o.epochs = 3;
  o.episodes_per_epoch = 20;
  o.interact_every = 10;
  return o;
}

std::vector<std::string> lines_of(const fs::path& path) {
  std::ifstream in(path);
  std::vector<std::string> out;
  for (std::string line; std::getline(in, line);) out.push_back(line);
  return out;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Mean per-class recall over the classes present in the labels.
double balanced_accuracy_oracle(const std::vector<int>& predicted, const std::vector<int>& labels) {
  std::map<int, std::pair<int, int>> per_class;  // label -> (hits, total)
  for (std::size_t i = 0; i < labels.size(); ++i) {
    auto& [hits, total] = per_class[labels[i]];
    hits += predicted[i] == labels[i];
    ++total;
  }
  double sum = 0.0;
  for (const auto& [label, ht] : per_class) sum += static_cast<double>(ht.first) / ht.second;
  return sum / static_cast<double>(per_class.size());
}

// Forwards to a simulated expert and remembers what it was asked.
class RecordingExpert final : public ExpertOracle {
 public:
  explicit RecordingExpert(SimulatedExpert inner) : inner_(std::move(inner)) {}
  std::optional<std::vector<int>> rate(std::span<const QueryItem> items) override {
    for (const auto& item : items) asked.push_back(render_pattern(item.pattern));
    return inner_.rate(items);
  }
  std::vector<std::string> asked;

 private:
  SimulatedExpert inner_;
};

}  // namespace

TEST_CASE("holes resolve to window medians in hole-id order") {
  const EventSchema s = default_synthetic_schema();
  Window w;
  for (const double x : {1.0, 5.0, 3.0}) w.records.push_back(Record{0.0, 0, {x, std::nullopt}});
  const Pattern f = parse_pattern("EVENTS SEQ(A a, B b) WHERE a.y < ?2 AND b.x > ?1 WITHIN 5s", s);
  CHECK(render_pattern(resolve_with_medians(f, w, s)) == "EVENTS SEQ(A a, B b) WHERE a.y < 0 AND b.x > 3 WITHIN 5s");
  w.records.push_back(Record{1.0, 1, {10.0, 4.0}});
  CHECK(render_pattern(resolve_with_medians(f, w, s)) == "EVENTS SEQ(A a, B b) WHERE a.y < 4 AND b.x > 4 WITHIN 5s");
  const Pattern plain = parse_pattern("EVENTS SEQ(A a) WHERE a.x > 1 WITHIN 5s", s);
  CHECK(resolve_with_medians(plain, w, s) == plain);
}

TEST_CASE("metrics records round trip and omit absent values") {
  MetricsRecord m;
  m.epoch = 4;
  m.balanced_accuracy_train = 0.5;
  m.queries = 12;
  m.unique_patterns = 30;
  const json doc = to_json(m);
  CHECK(doc["mean_weighted_reward"].is_null());
  const MetricsRecord back = metrics_from_json(doc);
  CHECK(back.epoch == 4);
  CHECK_FALSE(back.mean_weighted_reward.has_value());
  CHECK(back.balanced_accuracy_train == 0.5);
  CHECK(back.queries == 12);
  CHECK(to_json(back) == doc);
}

TEST_CASE("a run with no epochs writes its initial outputs") {
  const testing::TempDir dir;
  auto o = small_run();
  o.epochs = 0;
  Trainer t(config_from_json(testing::prepare_synthetic_run(dir.path(), o)));
  t.run();
  const fs::path out = dir.path() / "out";
  for (const char* name : {"config.json", "agent.json", "predictor.json", "patterns.json", "labels.jsonl"}) {
    CHECK_MESSAGE(fs::exists(out / name), name);
  }
  CHECK(fs::file_size(out / "metrics.jsonl") == 0);
  CHECK(nn::read_json_file(out / "patterns.json") == json::array());
  CHECK(config_from_json(nn::read_json_file(out / "config.json")).seed == 0);
}

TEST_CASE("training writes one well-formed metrics line per epoch") {
  const testing::TempDir dir;
  const auto o = small_run();
  Trainer t(config_from_json(testing::prepare_synthetic_run(dir.path(), o)));
  std::vector<std::string> statuses;
  t.on_progress = [&](const TrainerSnapshot& s) { statuses.push_back(s.status); };
  t.run();
  const fs::path out = dir.path() / "out";

  const auto lines = lines_of(out / "metrics.jsonl");
  REQUIRE(lines.size() == o.epochs);
  std::uint64_t last_queries = 0;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const MetricsRecord m = metrics_from_json(json::parse(lines[i]));
    CHECK(m.epoch == i + 1);
    CHECK(m.queries >= last_queries);
    last_queries = m.queries;
    REQUIRE(m.mean_weighted_reward.has_value());
    CHECK(*m.mean_weighted_reward >= 0.0);
    REQUIRE(m.balanced_accuracy_dprime.has_value());
    CHECK(*m.balanced_accuracy_dprime >= 0.0);
    CHECK(*m.balanced_accuracy_dprime <= 1.0);
    CHECK(m.unique_patterns <= (i + 1) * o.episodes_per_epoch);
  }
  CHECK(lines_of(out / "timings.jsonl").size() == o.epochs);
  CHECK(read_metrics(out / "metrics.jsonl").size() == o.epochs);
  CHECK(statuses.front() == "training");
  CHECK(statuses.back() == "finished");

  // Six interaction points of at least five queries each.
  CHECK(t.queries() >= 30);
  CHECK(t.labels().size() > t.initial_label_count());
  const auto saved = LabeledSet::load(out / "labels.jsonl", t.config().mining.schema, t.config().mining.scale);
  CHECK(saved.size() == t.labels().size());

  // The saved front is hole-free, parses back, and is mutually non-dominated.
  const json front = nn::read_json_file(out / "patterns.json");
  REQUIRE(front.is_array());
  CHECK_FALSE(front.empty());
  std::vector<ScoredPattern> items;
  for (const auto& e : front) {
    const Pattern p = parse_pattern(e["pattern"].get<std::string>(), t.config().mining.schema);
    CHECK_FALSE(p.has_holes());
    items.push_back({p, e["frequency"].get<double>(), e["rating"].get<double>(), 0});
  }
  for (const auto& a : items) {
    for (const auto& b : items) CHECK_FALSE(dominates(a, b));
  }
}

TEST_CASE("the query counter equals the ratings the expert delivered") {
  const testing::TempDir dir;
  const RunConfig c = config_from_json(testing::prepare_synthetic_run(dir.path(), small_run()));
  auto expert = std::make_unique<RecordingExpert>(SimulatedExpert(GroundTruth(load_targets(c), 50), 0.0, 7));
  RecordingExpert* seen = expert.get();
  Trainer t(c, std::move(expert));
  t.run();
  CHECK(t.queries() == seen->asked.size());
  const std::set<std::string> distinct(seen->asked.begin(), seen->asked.end());
  CHECK(t.labels().size() - t.initial_label_count() == distinct.size());
  for (const auto& text : distinct) CHECK(t.labels().find(text) != nullptr);
  CHECK(t.metrics().back().queries == t.queries());
}

TEST_CASE("equal seeds give byte-identical metrics") {
  const testing::TempDir dir;
  const auto o = small_run();
  json c = testing::prepare_synthetic_run(dir.path(), o);
  std::vector<std::string> runs;
  for (const char* name : {"a", "b"}) {
    c["paths"]["output_dir"] = (dir.path() / name).string();
    Trainer(config_from_json(c)).run();
    runs.push_back(slurp(dir.path() / name / "metrics.jsonl"));
  }
  CHECK_FALSE(runs[0].empty());
  CHECK(runs[0] == runs[1]);
  CHECK(slurp(dir.path() / "a" / "labels.jsonl") == slurp(dir.path() / "b" / "labels.jsonl"));
  CHECK(slurp(dir.path() / "a" / "patterns.json") == slurp(dir.path() / "b" / "patterns.json"));
}

TEST_CASE("a predictor trained on D0 is evaluated against recomputed accuracy") {
  const testing::TempDir dir;
  auto o = small_run();
  o.epochs = 0;
  o.d0_count = 12;
  json c = testing::prepare_synthetic_run(dir.path(), o);
  c["schedule"]["predictor_epochs"] = 300;
  c["predictor"] = {{"dropout", 0.0}, {"hidden", {64}}, {"lr", 0.01}};
  Trainer t(config_from_json(c));
  t.run();
  const fs::path out = dir.path() / "out";
  CHECK(t.initial_label_count() == 12);

  // Scored on its own training labels, a small set is memorized.
  const auto on_d0 = evaluate(out, dir.path() / "d0.jsonl");
  CHECK(on_d0.balanced_accuracy_dprime == doctest::Approx(1.0));
  REQUIRE(on_d0.balanced_accuracy_train.has_value());
  CHECK(*on_d0.balanced_accuracy_train == doctest::Approx(1.0));

  const auto r = evaluate(out, dir.path() / "dprime.jsonl", dir.path() / "pred.jsonl");
  CHECK(r.dprime_size == o.dprime_count);
  std::vector<int> predicted, labels;
  for (const auto& line : lines_of(dir.path() / "pred.jsonl")) {
    const json e = json::parse(line);
    predicted.push_back(e["predicted"].get<int>());
    labels.push_back(e["label"].get<int>());
    const double certainty = e["certainty"].get<double>();
    CHECK(certainty >= 0.0);
    CHECK(certainty <= 1.0);
  }
  REQUIRE(labels.size() == o.dprime_count);
  CHECK(r.balanced_accuracy_dprime == doctest::Approx(balanced_accuracy_oracle(predicted, labels)));
}

TEST_CASE("bad inputs are reported") {
  const testing::TempDir dir;
  const auto o = small_run();
  json c = testing::prepare_synthetic_run(dir.path(), o);

  std::ofstream(dir.path() / "empty.jsonl").close();
  CHECK_THROWS_WITH(evaluate(dir.path(), dir.path() / "empty.jsonl"), doctest::Contains("config.json"));

  auto live = c;
  live["expert"]["kind"] = "live";
  CHECK_THROWS_AS(Trainer(config_from_json(live)), TrainingError);

  auto no_targets = c;
  no_targets["paths"].erase("targets");
  CHECK_THROWS_AS(Trainer(config_from_json(no_targets)), TrainingError);

  auto empty_dprime = c;
  empty_dprime["paths"]["dprime"] = (dir.path() / "empty.jsonl").string();
  CHECK_THROWS_AS(Trainer(config_from_json(empty_dprime)), TrainingError);

  auto empty_data = c;
  std::ofstream(dir.path() / "header.csv") << "ts,type,x,y\n";
  empty_data["paths"]["data"] = (dir.path() / "header.csv").string();
  CHECK_THROWS_AS(Trainer(config_from_json(empty_data)), TrainingError);

  // An evaluation set with no labels is an error once a checkpoint exists.
  auto zero = c;
  zero["schedule"]["epochs"] = 0;
  Trainer(config_from_json(zero)).run();
  CHECK_THROWS_WITH(evaluate(dir.path() / "out", dir.path() / "empty.jsonl"), doctest::Contains("no labels"));
}
