#include <CLI11.hpp>

#include <csignal>
#include <fstream>
#include <iostream>
#include <thread>

#include "cepminer/active_learning.hpp"
#include "cepminer/bayes.hpp"
#include "cepminer/config.hpp"
#include "cepminer/matcher.hpp"
#include "cepminer/nn_io.hpp"
#include "cepminer/service.hpp"
#include "cepminer/stream.hpp"
#include "cepminer/synthetic.hpp"
#include "cepminer/trainer.hpp"

using namespace cepminer;
namespace fs = std::filesystem;

namespace {

std::atomic<bool> interrupted{false};

void print_metrics(const MetricsRecord& m) {
  std::cout << to_json(m).dump() << '\n';
}

EventSchema schema_for(const std::string& config, const fs::path& data) {
  if (!config.empty()) return config_from_json(nn::read_json_file(config), fs::path(config).parent_path()).mining.schema;
  return infer_schema(data);
}

int cmd_train(const std::string& config_path, const std::string& checkpoint) {
  Trainer trainer(load_config(config_path));
  if (!checkpoint.empty()) trainer.warm_start(checkpoint);
  std::size_t printed = 0;
  trainer.on_progress = [&](const TrainerSnapshot& s) {
    for (; printed < s.metrics.size(); ++printed) print_metrics(s.metrics[printed]);
  };
  trainer.run();
  std::cerr << "outputs in " << trainer.config().paths.output_dir.string() << '\n';
  return 0;
}

int cmd_evaluate(const std::string& checkpoint, const std::string& dprime, const std::string& predictions) {
  std::optional<fs::path> dump;
  if (!predictions.empty()) dump = predictions;
  const EvaluationResult r = evaluate(checkpoint, dprime, dump);
  nlohmann::json out = {{"balanced_accuracy_dprime", r.balanced_accuracy_dprime}, {"dprime_size", r.dprime_size}};
  out["balanced_accuracy_train"] =
      r.balanced_accuracy_train ? nlohmann::json(*r.balanced_accuracy_train) : nlohmann::json(nullptr);
  std::cout << out.dump() << '\n';
  return 0;
}

int cmd_serve(const std::string& config_path, const std::string& checkpoint, const std::string& host, int port) {
  RunConfig config = load_config(config_path);
  QueryBroker broker(config.mining.scale);
  std::unique_ptr<ExpertOracle> expert;
  if (config.expert.kind == ExpertKind::Live) {
    const auto timeout = std::chrono::milliseconds(static_cast<long long>(config.expert.timeout_seconds * 1000.0));
    expert = std::make_unique<LiveExpert>(broker, timeout);
  }
  Trainer trainer(config, std::move(expert));
  if (!checkpoint.empty()) trainer.warm_start(checkpoint);
  Service service(config.mining.schema, config.mining.scale,
                  config.expert.kind == ExpertKind::Live ? &broker : nullptr);
  trainer.on_progress = [&](const TrainerSnapshot& s) { service.publish(s); };
  const int bound = service.start(host, port);
  std::cerr << "serving on http://" << host << ':' << bound << '\n';

  std::signal(SIGINT, [](int) { interrupted = true; });
  std::signal(SIGTERM, [](int) { interrupted = true; });
  int status = 0;
  std::thread worker([&] {
    try {
      trainer.run();
      std::cerr << "training finished; still serving (Ctrl-C to stop)\n";
    } catch (const std::exception& e) {
      std::cerr << "training failed: " << e.what() << '\n';
      status = 1;
    }
  });
  while (!interrupted) std::this_thread::sleep_for(std::chrono::milliseconds(200));
  service.stop();
  // A live run blocked on an unanswered batch ends at its timeout.
  worker.join();
  return status;
}

struct StreamOptions {
  std::string data;
  std::string config;
  std::size_t window_len = 50;
  double eps = 1e-6;
  std::uint64_t cap = 10000;
};

void add_stream_options(CLI::App* cmd, StreamOptions& o) {
  cmd->add_option("--data", o.data, "event stream CSV")->required()->check(CLI::ExistingFile);
  cmd->add_option("--config", o.config, "run config supplying the schema (default: inferred from the CSV)")
      ->check(CLI::ExistingFile);
  cmd->add_option("--window-len", o.window_len, "records per tumbling window")->capture_default_str();
  cmd->add_option("--eps", o.eps, "tolerance of '='")->capture_default_str();
  cmd->add_option("--cap", o.cap, "count cap per window")->capture_default_str();
}

int cmd_match(const StreamOptions& o, const std::string& text) {
  const EventSchema schema = schema_for(o.config, o.data);
  const Pattern p = parse_pattern(text, schema);
  const auto stream = read_stream(o.data, schema);
  const CompiledPattern compiled(p, schema);
  const MatchOptions opts{o.cap, o.eps};
  std::uint64_t total = 0;
  for (std::size_t i = 0; i < window_count(stream.size(), o.window_len); ++i) {
    const MatchCount c = compiled.count(*window_at(stream, i, o.window_len), opts);
    total += c.count;
    std::cout << "window " << i << ": " << c.count << (c.capped ? " (capped)" : "") << '\n';
  }
  std::cout << "total: " << total << '\n';
  return 0;
}

int cmd_complete(const StreamOptions& o, const std::string& text, std::size_t window, std::size_t jump,
                 std::uint64_t seed) {
  const EventSchema schema = schema_for(o.config, o.data);
  const Pattern formula = parse_pattern(text, schema);
  const auto stream = read_stream(o.data, schema);
  const std::size_t n = window_count(stream.size(), o.window_len);
  if (window >= n) throw std::runtime_error("window " + std::to_string(window) + " out of range (" + std::to_string(n) + " windows)");
  const MatchOptions opts{o.cap, o.eps};
  const Objective objective = [&](const std::vector<double>& v) {
    const CompiledPattern c(substitute_holes(formula, v), schema);
    return frequency(window, [&](std::size_t j) { return static_cast<double>(c.count(*window_at(stream, j, o.window_len), opts).count); }, jump);
  };
  const SearchSpace space = extract_holes(formula, schema, window_at(stream, window, o.window_len)->records);
  nn::Rng rng(seed);
  const CompletionResult r = complete(formula, space, objective, CompletionBudget{}, rng);
  for (std::size_t i = 0; i < r.best_per_iteration.size(); ++i) {
    std::cout << "iteration " << i + 1 << ": best frequency " << r.best_per_iteration[i] << '\n';
  }
  std::cout << "evaluations: " << r.evaluations << '\n';
  std::cout << "frequency: " << r.best_objective << '\n';
  std::cout << render_pattern(r.pattern) << '\n';
  return 0;
}

struct GenOptions {
  std::string out;
  std::string targets;
  std::size_t rows = 5000;
  std::uint64_t seed = 0;
  double plant_rate = 0.05;
  double within = 10.0;
  std::string labels;
  std::size_t label_count = 200;
  int scale = 50;
  std::size_t max_len = 3;
  std::size_t max_conds = 2;
};

int cmd_gen_data(const GenOptions& o) {
  const EventSchema schema = default_synthetic_schema();
  const auto targets = default_targets(schema, o.within);
  PlantingOptions po;
  po.rows = o.rows;
  po.seed = o.seed;
  po.plant_rate = o.plant_rate;
  const auto stream = generate_planted_stream(schema, targets, po);
  {
    std::ofstream out(o.out);
    if (!out) throw std::runtime_error("cannot write " + o.out);
    write_stream(out, stream, schema);
  }
  nlohmann::json t = {{"schema", schema_to_json(schema)}, {"targets", nlohmann::json::array()}};
  for (const auto& p : targets) t["targets"].push_back(render_pattern(p));
  nn::write_json_file(o.targets, t);
  std::cerr << "wrote " << stream.size() << " records to " << o.out << " and " << targets.size() << " targets to "
            << o.targets << '\n';

  if (!o.labels.empty()) {
    const GroundTruth truth(targets, o.scale);
    nn::Rng rng(o.seed + 1);
    LabeledSet set;
    for (const auto& item : make_labeled_set(schema, truth, o.max_len, o.max_conds, o.within, o.label_count, rng)) {
      set.insert(item.pattern, item.rating);
    }
    set.save(o.labels);
    std::cerr << "wrote " << set.size() << " ground-truth labels to " << o.labels << '\n';
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Pattern mining over event streams with a learned expert model"};
  app.require_subcommand(1);

  std::string config, checkpoint, dprime, predictions, host = "127.0.0.1", pattern;
  int port = 8080;

  auto* train = app.add_subcommand("train", "run the training loop");
  train->add_option("--config", config, "run config JSON")->required()->check(CLI::ExistingFile);
  train->add_option("--checkpoint", checkpoint, "warm start from an earlier output dir")->check(CLI::ExistingDirectory);

  auto* eval = app.add_subcommand("evaluate", "balanced accuracy of a trained rank predictor");
  eval->add_option("--checkpoint", checkpoint, "output dir of a run")->required()->check(CLI::ExistingDirectory);
  eval->add_option("--dprime", dprime, "held-out labels (JSON lines)")->required()->check(CLI::ExistingFile);
  eval->add_option("--predictions", predictions, "write per-item predictions here");

  auto* serve = app.add_subcommand("serve", "train while serving the expert HTTP API");
  serve->add_option("--config", config, "run config JSON")->required()->check(CLI::ExistingFile);
  serve->add_option("--checkpoint", checkpoint, "warm start from an earlier output dir")->check(CLI::ExistingDirectory);
  serve->add_option("--port", port, "TCP port")->capture_default_str();
  serve->add_option("--host", host, "bind address")->capture_default_str();

  StreamOptions match_opts, complete_opts;
  auto* match = app.add_subcommand("match", "count matches of a pattern per window");
  match->add_option("--pattern", pattern, "pattern text")->required();
  add_stream_options(match, match_opts);

  std::size_t window = 0, jump = 1;
  std::uint64_t seed = 0;
  auto* comp = app.add_subcommand("complete", "fill the ?k holes of a formula by Bayesian optimization");
  comp->add_option("--pattern", pattern, "formula text with ?1, ?2, ... holes")->required();
  add_stream_options(comp, complete_opts);
  comp->add_option("--window", window, "window whose frequency is maximized")->capture_default_str();
  comp->add_option("--jump", jump, "jump interval of the frequency score")->capture_default_str()->check(CLI::PositiveNumber);
  comp->add_option("--seed", seed, "proposal seed")->capture_default_str();

  GenOptions gen;
  auto* gd = app.add_subcommand("gen-data", "write a synthetic stream with planted target patterns");
  gd->add_option("--out", gen.out, "stream CSV to write")->required();
  gd->add_option("--targets", gen.targets, "targets JSON to write")->required();
  gd->add_option("--rows", gen.rows, "number of records")->capture_default_str();
  gd->add_option("--seed", gen.seed, "generator seed")->capture_default_str();
  gd->add_option("--plant-rate", gen.plant_rate, "chance a planted instance starts at a row")->capture_default_str();
  gd->add_option("--within", gen.within, "time window of the targets in seconds")->capture_default_str();
  gd->add_option("--labels", gen.labels, "also write ground-truth labels (JSON lines) here");
  gd->add_option("--label-count", gen.label_count, "number of labeled patterns")->capture_default_str();
  gd->add_option("--scale", gen.scale, "rating scale of the labels")->capture_default_str();
  gd->add_option("--max-len", gen.max_len, "max events of labeled patterns")->capture_default_str();
  gd->add_option("--max-conds", gen.max_conds, "max conditions per event of labeled patterns")->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train) return cmd_train(config, checkpoint);
    if (*eval) return cmd_evaluate(checkpoint, dprime, predictions);
    if (*serve) return cmd_serve(config, checkpoint, host, port);
    if (*match) return cmd_match(match_opts, pattern);
    if (*comp) return cmd_complete(complete_opts, pattern, window, jump, seed);
    if (*gd) return cmd_gen_data(gen);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
