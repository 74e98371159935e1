#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "cepminer/rank_predictor.hpp"
#include "support/oracles.hpp"

using namespace cepminer;

namespace {

// Rating is a deterministic function of the pattern structure.
int structural_rating(const Pattern& p) {
  const int first = p.events.front().event_type == "A" ? 0 : p.events.front().event_type == "B" ? 1 : 2;
  return 1 + first + (p.condition_count() > 0 ? 2 : 0);
}

Pattern constants_only(Pattern p) {
  for (auto& ev : p.events) {
    for (auto& c : ev.conditions) {
      if (std::holds_alternative<Hole>(c.target)) c.target = Constant{1.0};
    }
  }
  return p;
}

}  // namespace

TEST_CASE("balanced accuracy matches the two-class definition and its multiclass extension") {
  std::vector<int> pred, label;
  for (int i = 0; i < 5; ++i) pred.push_back(2), label.push_back(2);  // TP
  for (int i = 0; i < 5; ++i) pred.push_back(1), label.push_back(2);  // FN
  for (int i = 0; i < 8; ++i) pred.push_back(1), label.push_back(1);  // TN
  for (int i = 0; i < 2; ++i) pred.push_back(2), label.push_back(1);  // FP
  CHECK(balanced_accuracy(pred, label, 2) == doctest::Approx(0.65));
  CHECK(balanced_accuracy(label, label, 2) == 1.0);
  const std::vector<int> ones(4, 1), balanced{1, 1, 2, 2};
  CHECK(balanced_accuracy(ones, balanced, 2) == doctest::Approx(0.5));
  // relabeling classes consistently changes nothing
  std::vector<int> p2, l2;
  for (int v : pred) p2.push_back(3 - v);
  for (int v : label) l2.push_back(3 - v);
  CHECK(balanced_accuracy(p2, l2, 2) == doctest::Approx(0.65));
  CHECK_THROWS(balanced_accuracy(std::vector<int>{}, std::vector<int>{}, 2));
  CHECK_THROWS(balanced_accuracy(std::vector<int>{1}, std::vector<int>{1, 2}, 2));
  CHECK_THROWS(balanced_accuracy(std::vector<int>{1}, std::vector<int>{3}, 2));
}

TEST_CASE("featurize is local in constants and rejects holes") {
  const EventSchema s = oracle::small_schema();
  const std::vector<double> scale{10.0, 1.0};
  const Pattern a = parse_pattern("EVENTS SEQ(A a, B b) WHERE a.x < b.x AND b.x > 3 WITHIN 5s", s);
  const Pattern b = parse_pattern("EVENTS SEQ(A a, B b) WHERE a.x < b.x AND b.x > 7 WITHIN 5s", s);
  const Eigen::VectorXd fa = featurize(a, s, 3, 2, scale);
  const Eigen::VectorXd fb = featurize(b, s, 3, 2, scale);
  REQUIRE(static_cast<std::size_t>(fa.size()) == feature_size(s, 3, 2));
  const Eigen::VectorXd diff = fa - fb;
  std::size_t nonzero = 0;
  for (Eigen::Index i = 0; i < diff.size(); ++i) nonzero += diff[i] != 0.0;
  CHECK(nonzero == 1);
  CHECK(diff.cwiseAbs().maxCoeff() == doctest::Approx(0.4));
  const Pattern bare = parse_pattern("EVENTS SEQ(A a) WHERE true WITHIN 5s", s);
  const auto enc = static_cast<Eigen::Index>(pattern_encoding_size(s, 3, 2));
  CHECK(featurize(bare, s, 3, 2).tail(6).isZero());
  CHECK(featurize(bare, s, 3, 2).size() == enc + 6);
  CHECK_THROWS_AS(featurize(parse_pattern("EVENTS SEQ(A a) WHERE a.x = ?1 WITHIN 5s", s), s, 3, 2), PatternError);
}

TEST_CASE("featurize separates distinct random patterns") {
  const EventSchema s = oracle::small_schema();
  oracle::Rng rng(17);
  std::map<std::vector<double>, std::string> seen;
  std::size_t collisions = 0;
  for (int i = 0; i < 10000; ++i) {
    Pattern p = oracle::random_pattern(rng, s, 3, 2);
    p.within_seconds = 10.0;  // mined patterns all share the configured window
    // Conditions of one event are a set for matching purposes; the canonical
    // text still distinguishes their order, and so must the features.
    const std::string key = render_pattern(normalize_references(p));
    const Eigen::VectorXd f = featurize(p, s, 3, 6);
    auto [it, fresh] = seen.try_emplace(std::vector<double>(f.data(), f.data() + f.size()), key);
    if (!fresh && it->second != key) {
      ++collisions;
      MESSAGE(it->second, " vs ", key);
    }
  }
  CHECK(collisions == 0);
}

TEST_CASE("labeled sets keep the newest rating and persist as json lines") {
  const EventSchema s = oracle::small_schema();
  LabeledSet set;
  const Pattern p = parse_pattern("EVENTS SEQ(A a) WHERE a.x = 1 WITHIN 2s", s);
  CHECK(set.insert(p, 3));
  CHECK_FALSE(set.insert(p, 4));
  CHECK(set.size() == 1);
  CHECK(set.find(render_pattern(p))->rating == 4);
  CHECK(set.insert(parse_pattern("EVENTS SEQ(B b) WHERE true WITHIN 2s", s), 1));

  const auto path = std::filesystem::temp_directory_path() / "cepminer_labels_test.jsonl";
  set.save(path);
  const LabeledSet back = LabeledSet::load(path, s, 5);
  CHECK(back.size() == 2);
  CHECK(back.items()[0].pattern == p);
  CHECK(back.items()[0].rating == 4);
  CHECK_THROWS(LabeledSet::load(path, s, 3));  // rating 4 outside [1, 3]
  {
    std::ofstream out(path);
    out << "{\"pattern\": \"EVENTS SEQ(A a) WHERE a.x = ?1 WITHIN 1s\", \"rating\": 1}\n";
  }
  CHECK_THROWS(LabeledSet::load(path, s, 5));
  std::filesystem::remove(path);
}

TEST_CASE("an untrained predictor with a zeroed output layer is uniform") {
  const EventSchema s = oracle::small_schema();
  RankPredictor rp(s, 3, 2, 10, PredictorConfig{}, 1);
  rp.net().layers().back().weight.setZero();
  rp.net().layers().back().bias.setZero();
  const auto pred = rp.predict(parse_pattern("EVENTS SEQ(A a) WHERE true WITHIN 1s", s));
  CHECK(pred.certainty == doctest::Approx(0.1));
}

TEST_CASE("certainty is the softmax mass of the returned rank") {
  const EventSchema s = oracle::small_schema();
  RankPredictor rp(s, 3, 2, 7, PredictorConfig{}, 2);
  oracle::Rng rng(2);
  for (int i = 0; i < 50; ++i) {
    const Pattern p = oracle::random_pattern(rng, s, 3, 2, false, false);
    const auto pred = rp.predict(p);
    const Eigen::VectorXd probs = rp.probabilities(p);
    CHECK(probs.sum() == doctest::Approx(1.0));
    CHECK(pred.certainty == doctest::Approx(probs[pred.rank - 1]));
    CHECK(pred.certainty >= 1.0 / 7.0 - 1e-12);
  }
}

TEST_CASE("training descends and generalizes on a separable set") {
  const EventSchema s = oracle::small_schema();
  oracle::Rng rng(5);
  std::vector<LabeledPattern> train, held_out;
  std::set<std::string> seen;
  while (train.size() + held_out.size() < 600) {
    const Pattern p = constants_only(oracle::random_pattern(rng, s, 3, 2, false, false));
    if (!seen.insert(render_pattern(p)).second) continue;
    (train.size() < 400 ? train : held_out).push_back({p, structural_rating(p)});
  }
  RankPredictor rp(s, 3, 2, 5, PredictorConfig{}, 5);
  nn::Rng train_rng(5);
  const auto history = rp.train(train, 40, train_rng);
  CHECK(history.back() < history.front());
  std::size_t hits = 0;
  for (const auto& item : held_out) hits += rp.predict(item.pattern).rank == item.rating;
  CHECK(static_cast<double>(hits) / static_cast<double>(held_out.size()) >= 0.9);
}

TEST_CASE("small fixed sets descend monotonically and memorize") {
  const EventSchema s = oracle::small_schema();
  oracle::Rng rng(8);
  std::vector<LabeledPattern> ten;
  for (int i = 0; i < 10; ++i) ten.push_back({oracle::random_pattern(rng, s, 3, 2, false, false), 1 + i % 4});
  PredictorConfig cfg;
  cfg.dropout = 0.0;  // deterministic full-batch descent
  cfg.lr = 1e-4;
  RankPredictor rp(s, 3, 2, 4, cfg, 8);
  nn::Rng r(8);
  const auto history = rp.train(ten, 30, r);
  for (std::size_t i = 1; i < history.size(); ++i) CHECK(history[i] <= history[i - 1] + 1e-12);
  CHECK(history.back() < history.front());

  RankPredictor one(s, 3, 2, 4, PredictorConfig{}, 9);
  const std::vector<LabeledPattern> single{{ten[0].pattern, 3}};
  one.train(single, 60, r);
  CHECK(one.predict(ten[0].pattern).rank == 3);
  CHECK_THROWS(one.train(std::vector<LabeledPattern>{}, 1, r));
}

TEST_CASE("incremental training warm-starts from the current parameters") {
  const EventSchema s = oracle::small_schema();
  RankPredictor rp(s, 3, 2, 4, PredictorConfig{}, 10);
  oracle::Rng rng(10);
  const std::vector<LabeledPattern> data{{oracle::random_pattern(rng, s, 3, 2, false, false), 2}};
  nn::Rng r(10);
  rp.train(data, 5, r);
  const auto before = rp.net();
  rp.train(data, 0, r);  // zero epochs leaves parameters untouched
  CHECK(rp.net() == before);
  rp.train(data, 1, r);
  // one more step moves parameters only slightly from where they were
  const double drift = (rp.net().layers()[0].weight - before.layers()[0].weight).cwiseAbs().maxCoeff();
  CHECK(drift > 0.0);
  CHECK(drift < 0.01);
}

TEST_CASE("predictor checkpoints round-trip") {
  const EventSchema s = oracle::small_schema();
  RankPredictor rp(s, 3, 2, 6, PredictorConfig{}, 11);
  rp.set_attribute_scale({4.0, 2.0});
  const auto doc = nlohmann::json::parse(rp.checkpoint().dump());
  const RankPredictor back = RankPredictor::from_checkpoint(doc, s, 3, 2, 6, PredictorConfig{});
  CHECK(back.net() == rp.net());
  CHECK(back.attribute_scale() == rp.attribute_scale());
  CHECK_THROWS(RankPredictor::from_checkpoint(doc, s, 3, 2, 5, PredictorConfig{}));
  CHECK_THROWS(RankPredictor::from_checkpoint(doc, s, 2, 2, 6, PredictorConfig{}));
}
