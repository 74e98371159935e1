#include "cepminer/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <map>
#include <numeric>

#include "cepminer/bayes.hpp"
#include "cepminer/nn_io.hpp"

namespace cepminer {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json optional_number(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::optional<double> number_or_null(const json& v) {
  if (v.is_null()) return std::nullopt;
  return v.get<double>();
}

void append_line(const fs::path& path, const json& doc) {
  std::ofstream out(path, std::ios::app);
  if (!out) throw std::runtime_error("cannot append to " + path.string());
  out << doc.dump() << '\n';
}

void truncate(const fs::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
}

std::vector<Record> read_data(const RunConfig& c) { return read_stream(c.paths.data, c.mining.schema); }

AttributeScale scale_of(const std::vector<Record>& stream, std::size_t attributes) {
  AttributeScale s(attributes);
  for (const auto& r : stream) s.observe(r);
  return s;
}

// Independent streams so that, say, extra Bayes proposals do not shift the
// episodes' sampling sequence.
std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t stream) { return seed * 1000003ULL + stream; }

}  // namespace

json to_json(const MetricsRecord& m) {
  return {{"epoch", m.epoch},
          {"mean_weighted_reward", optional_number(m.mean_weighted_reward)},
          {"balanced_accuracy_train", optional_number(m.balanced_accuracy_train)},
          {"balanced_accuracy_dprime", optional_number(m.balanced_accuracy_dprime)},
          {"queries", m.queries},
          {"unique_patterns", m.unique_patterns}};
}

MetricsRecord metrics_from_json(const json& doc) {
  MetricsRecord m;
  m.epoch = doc.at("epoch").get<std::size_t>();
  m.mean_weighted_reward = number_or_null(doc.at("mean_weighted_reward"));
  m.balanced_accuracy_train = number_or_null(doc.at("balanced_accuracy_train"));
  m.balanced_accuracy_dprime = number_or_null(doc.at("balanced_accuracy_dprime"));
  m.queries = doc.at("queries").get<std::uint64_t>();
  m.unique_patterns = doc.at("unique_patterns").get<std::size_t>();
  return m;
}

std::vector<MetricsRecord> read_metrics(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::vector<MetricsRecord> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    try {
      out.push_back(metrics_from_json(json::parse(line)));
    } catch (const json::exception& e) {
      throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

Pattern resolve_with_medians(const Pattern& formula, const Window& w, const EventSchema& schema) {
  std::map<int, double> by_id;
  for (const auto& ev : formula.events) {
    for (const auto& c : ev.conditions) {
      const auto* hole = std::get_if<Hole>(&c.target);
      if (!hole) continue;
      const auto a = schema.attribute_index(c.attribute);
      if (!a) throw PatternError("unknown attribute '" + c.attribute + "'");
      by_id[hole->id] = attribute_median(w, *a).value_or(0.0);
    }
  }
  if (by_id.empty()) return formula;
  std::vector<double> values;
  for (const int id : formula.hole_ids()) values.push_back(by_id.at(id));
  return substitute_holes(formula, values);
}

Trainer::Trainer(RunConfig config, std::unique_ptr<ExpertOracle> expert)
    : config_(std::move(config)),
      stream_(read_data(config_)),
      windows_(window_count(stream_.size(), config_.mining.window_len)),
      attribute_scale_(scale_of(stream_, config_.mining.schema.attributes.size())),
      agent_(config_.mining.schema, config_.mining.max_len, config_.mining.max_conds, config_.agent,
             stream_seed(config_.seed, 1)),
      predictor_(config_.mining.schema, config_.mining.max_len, config_.mining.max_conds, config_.mining.scale,
                 config_.predictor, stream_seed(config_.seed, 2)),
      expert_(std::move(expert)),
      episode_rng_(stream_seed(config_.seed, 3)),
      bayes_rng_(stream_seed(config_.seed, 4)),
      predictor_rng_(stream_seed(config_.seed, 5)) {
  if (windows_ == 0) throw TrainingError("data file " + config_.paths.data.string() + " has no records");
  predictor_.set_attribute_scale(attribute_scale_.values());

  const auto targets = load_targets(config_);
  if (!targets.empty()) truth_.emplace(targets, config_.mining.scale);
  if (!expert_) {
    if (config_.expert.kind == ExpertKind::Live) throw TrainingError("a live expert run needs the HTTP service");
    if (!truth_) throw TrainingError("a simulated expert needs target patterns");
    expert_ = std::make_unique<SimulatedExpert>(*truth_, config_.expert.sigma, stream_seed(config_.seed, 6));
  }

  if (config_.paths.d0) labels_ = LabeledSet::load(*config_.paths.d0, config_.mining.schema, config_.mining.scale);
  initial_labels_ = labels_.size();
  if (config_.paths.dprime) {
    const auto set = LabeledSet::load(*config_.paths.dprime, config_.mining.schema, config_.mining.scale);
    if (set.empty()) throw TrainingError("D' file " + config_.paths.dprime->string() + " holds no labels");
    dprime_ = set.items();
  }
  if (!labels_.empty()) predictor_.train(labels_.items(), config_.schedule.predictor_epochs, predictor_rng_);
}

Trainer::~Trainer() = default;

void Trainer::warm_start(const fs::path& dir) {
  agent_ = Agent::from_checkpoint(nn::read_json_file(dir / "agent.json"), config_.mining.schema,
                                  config_.mining.max_len, config_.mining.max_conds, config_.agent);
  predictor_ = RankPredictor::from_checkpoint(nn::read_json_file(dir / "predictor.json"), config_.mining.schema,
                                              config_.mining.max_len, config_.mining.max_conds,
                                              config_.mining.scale, config_.predictor);
  if (fs::exists(dir / "labels.jsonl")) {
    for (const auto& item : LabeledSet::load(dir / "labels.jsonl", config_.mining.schema, config_.mining.scale).items()) {
      labels_.insert(item.pattern, item.rating);
    }
    initial_labels_ = labels_.size();
  }
}

void Trainer::write_checkpoints() const {
  const fs::path& out = config_.paths.output_dir;
  nn::write_json_file(out / "agent.json", agent_.checkpoint());
  nn::write_json_file(out / "predictor.json", predictor_.checkpoint());
  labels_.save(out / "labels.jsonl");
  const auto front = archive_.top(archive_.size(), config_.mining.scale);
  nn::write_json_file(out / "patterns.json", to_json(front));
}

void Trainer::write_initial_outputs() {
  const fs::path& out = config_.paths.output_dir;
  fs::create_directories(out);
  nn::write_json_file(out / "config.json", config_to_json(config_));
  truncate(out / "metrics.jsonl");
  truncate(out / "timings.jsonl");
  write_checkpoints();
}

TrainerSnapshot Trainer::snapshot(const std::string& status) const {
  TrainerSnapshot s;
  s.status = status;
  s.metrics = metrics_;
  s.ranked_front = archive_.top(archive_.size(), config_.mining.scale);
  s.queries = queries_;
  return s;
}

void Trainer::publish(const std::string& status) const {
  if (on_progress) on_progress(snapshot(status));
}

void Trainer::run() {
  write_initial_outputs();
  publish("training");
  try {
    for (std::size_t epoch = 1; epoch <= config_.schedule.epochs; ++epoch) run_epoch(epoch);
  } catch (...) {
    publish("failed");
    throw;
  }
  publish("finished");
}

double Trainer::window_frequency(const Pattern& p, std::size_t window) {
  const std::string key = render_pattern(p);
  const CompiledPattern compiled(p, config_.mining.schema);
  const auto appearances = [&](std::size_t j) {
    if (const auto hit = cache_.find(key, j)) return static_cast<double>(hit->count);
    const MatchCount c = compiled.count(*window_at(stream_, j, config_.mining.window_len), config_.matcher);
    cache_.insert(key, j, c);
    return static_cast<double>(c.count);
  };
  return frequency(window, appearances, config_.mining.jump_interval);
}

int Trainer::rating_for(const Pattern& p) const {
  if (const auto* known = labels_.find(render_pattern(p))) return known->rating;
  return predictor_.predict(p).rank;
}

std::optional<double> Trainer::accuracy_on(std::span<const LabeledPattern> data) const {
  if (data.empty()) return std::nullopt;
  std::vector<int> predicted, given;
  for (const auto& item : data) {
    predicted.push_back(predictor_.predict(item.pattern).rank);
    given.push_back(item.rating);
  }
  return balanced_accuracy(predicted, given, config_.mining.scale);
}

Trainer::EpisodeOutcome Trainer::run_one_episode(std::size_t epoch) {
  const std::size_t wi = episode_counter_ % windows_;
  const Window window = *window_at(stream_, wi, config_.mining.window_len);
  const Eigen::VectorXd embedding = embed_window(window, config_.mining.schema, attribute_scale_);

  // The agent only chooses events and conditions; the time window is fixed per run.
  const double within = config_.mining.within_seconds;
  const RewardFn reward = [&](const Pattern& formula) {
    Pattern p = resolve_with_medians(formula, window, config_.mining.schema);
    p.within_seconds = within;
    const double f = window_frequency(p, wi);
    if (f == 0.0) return 0.0;
    return config_.reward_scale * pattern_reward(f, rating_for(p));
  };
  Episode ep = run_episode(agent_, embedding, reward, episode_rng_);
  ep.pattern.within_seconds = within;

  EpisodeOutcome outcome;
  if (ep.pattern.empty()) {
    if (truth_) outcome.weighted_reward = 0.0;
    return outcome;
  }

  Pattern completed = ep.pattern;
  double freq = 0.0;
  if (ep.pattern.has_holes()) {
    SearchSpace space;
    try {
      space = extract_holes(ep.pattern, config_.mining.schema, window.records);
    } catch (const std::runtime_error&) {
      // An attribute absent from this window is bounded by the whole stream.
      space = extract_holes(ep.pattern, config_.mining.schema, stream_);
    }
    const Objective objective = [&](const std::vector<double>& v) {
      return window_frequency(substitute_holes(ep.pattern, v), wi);
    };
    const CompletionResult r = complete(ep.pattern, space, objective, config_.bayes, bayes_rng_);
    completed = r.pattern;
    freq = r.best_objective;
  } else {
    freq = window_frequency(completed, wi);
  }

  const int rating = rating_for(completed);
  archive_.add({completed, freq, static_cast<double>(rating), epoch});
  const std::string text = render_pattern(completed);
  mined_.insert(text);
  if (pending_texts_.insert(text).second) since_interaction_.push_back(completed);
  if (truth_) outcome.weighted_reward = pattern_reward(freq, truth_->rate(completed));

  if (!ep.steps.empty()) update_agent(agent_, ep);
  return outcome;
}

void Trainer::interact() {
  InteractionConfig ic;
  ic.budget = {config_.schedule.query_min, config_.schedule.query_max};
  ic.max_per_rank = config_.schedule.max_per_rank;
  ic.train_epochs = config_.schedule.predictor_epochs;
  const InteractionResult r = interaction_point(labels_, since_interaction_, predictor_, *expert_, ic,
                                                last_batch_accuracy_.value_or(0.0), predictor_rng_);
  queries_ += r.queried;
  if (r.batch_accuracy) last_batch_accuracy_ = r.batch_accuracy;
  since_interaction_.clear();
  pending_texts_.clear();
  publish("training");
}

void Trainer::run_epoch(std::size_t epoch) {
  const auto start = std::chrono::steady_clock::now();
  double reward_sum = 0.0;
  std::size_t rated = 0;
  for (std::size_t k = 0; k < config_.schedule.episodes_per_epoch; ++k) {
    try {
      const EpisodeOutcome o = run_one_episode(epoch);
      if (o.weighted_reward) {
        reward_sum += *o.weighted_reward;
        ++rated;
      }
      ++episode_counter_;
      if (episode_counter_ % config_.schedule.interact_every_episodes == 0) interact();
    } catch (const std::exception& e) {
      throw TrainingError("epoch " + std::to_string(epoch) + ", episode " + std::to_string(k + 1) + ": " + e.what());
    }
  }
  // Memoized counts are only reused within an epoch; this bounds memory.
  cache_.clear();

  MetricsRecord m;
  m.epoch = epoch;
  if (rated > 0) m.mean_weighted_reward = reward_sum / static_cast<double>(rated);
  m.balanced_accuracy_train = accuracy_on(labels_.items());
  m.balanced_accuracy_dprime = accuracy_on(dprime_);
  m.queries = queries_;
  m.unique_patterns = mined_.size();
  metrics_.push_back(m);

  const fs::path& out = config_.paths.output_dir;
  append_line(out / "metrics.jsonl", to_json(m));
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  append_line(out / "timings.jsonl", {{"epoch", epoch}, {"seconds", seconds}});
  write_checkpoints();
  publish("training");
}

EvaluationResult evaluate(const fs::path& checkpoint_dir, const fs::path& dprime,
                          const std::optional<fs::path>& predictions_out) {
  const RunConfig c = config_from_json(nn::read_json_file(checkpoint_dir / "config.json"));
  const RankPredictor rp =
      RankPredictor::from_checkpoint(nn::read_json_file(checkpoint_dir / "predictor.json"), c.mining.schema,
                                     c.mining.max_len, c.mining.max_conds, c.mining.scale, c.predictor);
  const LabeledSet test = LabeledSet::load(dprime, c.mining.schema, c.mining.scale);
  if (test.empty()) throw std::runtime_error("D' file " + dprime.string() + " holds no labels");

  auto score = [&](std::span<const LabeledPattern> data, std::ofstream* dump) {
    std::vector<int> predicted, given;
    for (const auto& item : data) {
      const RankPrediction p = rp.predict(item.pattern);
      predicted.push_back(p.rank);
      given.push_back(item.rating);
      if (dump) {
        *dump << json{{"pattern", render_pattern(item.pattern)},
                      {"label", item.rating},
                      {"predicted", p.rank},
                      {"certainty", p.certainty}}
                     .dump()
              << '\n';
      }
    }
    return balanced_accuracy(predicted, given, c.mining.scale);
  };

  EvaluationResult r;
  r.dprime_size = test.size();
  std::optional<std::ofstream> dump;
  if (predictions_out) {
    dump.emplace(*predictions_out);
    if (!*dump) throw std::runtime_error("cannot write " + predictions_out->string());
  }
  r.balanced_accuracy_dprime = score(test.items(), dump ? &*dump : nullptr);
  if (fs::exists(checkpoint_dir / "labels.jsonl")) {
    const LabeledSet train = LabeledSet::load(checkpoint_dir / "labels.jsonl", c.mining.schema, c.mining.scale);
    if (!train.empty()) r.balanced_accuracy_train = score(train.items(), nullptr);
  }
  return r;
}

}  // namespace cepminer
