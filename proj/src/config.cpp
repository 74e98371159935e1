#include "cepminer/config.hpp"

#include <fstream>
#include <set>

#include "cepminer/active_learning.hpp"
#include "cepminer/nn_io.hpp"

namespace cepminer {

namespace {

using nlohmann::json;

// Reads the keys of one JSON object and rejects anything it was not asked for.
class Section {
 public:
  Section(const json& doc, std::string path) : doc_(doc), path_(std::move(path)) {
    if (!doc_.is_object()) throw ConfigError(where() + "must be an object");
  }

  bool has(const std::string& key) {
    known_.insert(key);
    return doc_.contains(key);
  }

  template <typename T>
  void read(const std::string& key, T& out) {
    if (!has(key)) return;
    try {
      out = doc_.at(key).get<T>();
    } catch (const json::exception&) {
      throw ConfigError(where() + "'" + key + "' has the wrong type");
    }
  }

  template <typename T>
  T require(const std::string& key) {
    if (!has(key)) throw ConfigError(where() + "missing required key '" + key + "'");
    T out{};
    read(key, out);
    return out;
  }

  void read_size(const std::string& key, std::size_t& out) {
    if (!has(key)) return;
    const json& v = doc_.at(key);
    if (!v.is_number_integer() || v.get<long long>() < 0) {
      throw ConfigError(where() + "'" + key + "' must be a non-negative integer");
    }
    out = v.get<std::size_t>();
  }

  Section sub(const std::string& key) {
    known_.insert(key);
    static const json empty = json::object();
    return Section(doc_.contains(key) ? doc_.at(key) : empty, path_ + key + ".");
  }

  const json& raw(const std::string& key) {
    known_.insert(key);
    return doc_.at(key);
  }

  void finish() const {
    for (const auto& [key, value] : doc_.items()) {
      if (!known_.count(key)) throw ConfigError("unknown config key '" + path_ + key + "'");
    }
  }

 private:
  std::string where() const { return path_.empty() ? "config: " : "config " + path_.substr(0, path_.size() - 1) + ": "; }

  const json& doc_;
  std::string path_;
  std::set<std::string> known_;
};

nn::OptimizerKind optimizer_from_name(const std::string& s) {
  if (s == "adam") return nn::OptimizerKind::Adam;
  if (s == "sgd") return nn::OptimizerKind::Sgd;
  throw ConfigError("unknown optimizer '" + s + "' (expected adam or sgd)");
}

const char* optimizer_name(nn::OptimizerKind k) { return k == nn::OptimizerKind::Adam ? "adam" : "sgd"; }

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  const std::filesystem::path path(p);
  return path.is_absolute() || base.empty() ? path : base / path;
}

}  // namespace

json schema_to_json(const EventSchema& s) {
  json ops = json::array();
  for (CmpOp op : s.operators) ops.push_back(std::string(op_symbol(op)));
  return {{"event_types", s.event_types}, {"attributes", s.attributes}, {"operators", ops}};
}

EventSchema schema_from_json(const json& doc) {
  Section sec(doc, "schema.");
  EventSchema s;
  s.event_types = sec.require<std::vector<std::string>>("event_types");
  s.attributes = sec.require<std::vector<std::string>>("attributes");
  for (const auto& sym : sec.require<std::vector<std::string>>("operators")) {
    const auto op = op_from_symbol(sym);
    if (!op) throw ConfigError("config schema: unknown operator '" + sym + "'");
    s.operators.push_back(*op);
  }
  sec.finish();
  try {
    s.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("config schema: ") + e.what());
  }
  return s;
}

RunConfig config_from_json(const json& doc, const std::filesystem::path& base_dir) {
  RunConfig c;
  Section root(doc, "");
  if (!root.has("schema")) throw ConfigError("config: missing required key 'schema'");
  c.mining.schema = schema_from_json(root.raw("schema"));

  {
    Section s = root.sub("mining");
    s.read_size("max_len", c.mining.max_len);
    s.read_size("max_conds", c.mining.max_conds);
    s.read("within_seconds", c.mining.within_seconds);
    s.read("scale", c.mining.scale);
    s.read_size("jump_interval", c.mining.jump_interval);
    s.read_size("window_len", c.mining.window_len);
    s.finish();
  }
  {
    Section s = root.sub("expert");
    std::string kind = "simulated";
    s.read("kind", kind);
    if (kind == "simulated") {
      c.expert.kind = ExpertKind::Simulated;
    } else if (kind == "live") {
      c.expert.kind = ExpertKind::Live;
    } else {
      throw ConfigError("config expert: kind must be 'simulated' or 'live'");
    }
    s.read("sigma", c.expert.sigma);
    s.read("targets", c.expert.targets);
    s.read("timeout_seconds", c.expert.timeout_seconds);
    s.finish();
    if (!(c.expert.sigma >= 0.0)) throw ConfigError("config expert: sigma must be >= 0");
    if (!(c.expert.timeout_seconds > 0.0)) throw ConfigError("config expert: timeout_seconds must be positive");
  }
  {
    Section s = root.sub("schedule");
    auto& d = c.schedule;
    s.read_size("epochs", d.epochs);
    s.read_size("episodes_per_epoch", d.episodes_per_epoch);
    s.read_size("interact_every_episodes", d.interact_every_episodes);
    s.read("query_min", d.query_min);
    s.read("query_max", d.query_max);
    s.read_size("max_per_rank", d.max_per_rank);
    s.read_size("predictor_epochs", d.predictor_epochs);
    s.finish();
    if (d.episodes_per_epoch < 1) throw ConfigError("config schedule: episodes_per_epoch must be >= 1");
    if (d.interact_every_episodes < 1) throw ConfigError("config schedule: interact_every_episodes must be >= 1");
    if (d.max_per_rank < 1) throw ConfigError("config schedule: max_per_rank must be >= 1");
    try {
      QueryBudget{d.query_min, d.query_max}.validate();
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string("config schedule: ") + e.what());
    }
  }
  {
    Section s = root.sub("agent");
    auto& a = c.agent;
    s.read_size("trunk_hidden", a.trunk_hidden);
    s.read_size("trunk_layers", a.trunk_layers);
    s.read_size("head_hidden", a.head_hidden);
    s.read("gamma", a.gamma);
    s.read("ucb_c", a.ucb_c);
    s.read("lr", a.base_lr);
    if (s.has("optimizer")) a.optimizer = optimizer_from_name(s.require<std::string>("optimizer"));
    s.read("value_coef", a.value_coef);
    s.read("dynamic_lr", a.dynamic_lr);
    s.read("reward_scale", c.reward_scale);
    s.finish();
    if (!(a.gamma >= 0.0 && a.gamma <= 1.0)) throw ConfigError("config agent: gamma must be in [0, 1]");
    if (!(a.base_lr > 0.0)) throw ConfigError("config agent: lr must be positive");
    if (!(c.reward_scale > 0.0)) throw ConfigError("config agent: reward_scale must be positive");
    if (a.ucb_c < 0.0) throw ConfigError("config agent: ucb_c must be >= 0");
  }
  {
    Section s = root.sub("predictor");
    auto& p = c.predictor;
    s.read("hidden", p.hidden);
    s.read("dropout", p.dropout);
    if (s.has("activation")) {
      try {
        p.activation = nn::activation_from_name(s.require<std::string>("activation"));
      } catch (const std::runtime_error& e) {
        throw ConfigError(std::string("config predictor: ") + e.what());
      }
    }
    s.read("lr", p.lr);
    if (s.has("optimizer")) p.optimizer = optimizer_from_name(s.require<std::string>("optimizer"));
    s.read_size("batch_size", p.batch_size);
    s.finish();
    if (!(p.dropout >= 0.0 && p.dropout < 1.0)) throw ConfigError("config predictor: dropout must be in [0, 1)");
    if (p.batch_size < 1) throw ConfigError("config predictor: batch_size must be >= 1");
  }
  {
    Section s = root.sub("bayes");
    s.read_size("iterations", c.bayes.iterations);
    s.read_size("per_iteration", c.bayes.per_iteration);
    s.read_size("patience", c.bayes.patience);
    s.read_size("pool_size", c.bayes.pool_size);
    s.finish();
    if (c.bayes.per_iteration < 1) throw ConfigError("config bayes: per_iteration must be >= 1");
  }
  {
    Section s = root.sub("matcher");
    s.read("equality_eps", c.matcher.equality_eps);
    s.read("cap", c.matcher.cap);
    s.finish();
    if (!(c.matcher.equality_eps >= 0.0)) throw ConfigError("config matcher: equality_eps must be >= 0");
    if (c.matcher.cap < 1) throw ConfigError("config matcher: cap must be >= 1");
  }
  {
    if (!root.has("paths")) throw ConfigError("config: missing required key 'paths'");
    Section s = root.sub("paths");
    c.paths.data = resolve(base_dir, s.require<std::string>("data"));
    c.paths.output_dir = resolve(base_dir, s.require<std::string>("output_dir"));
    for (auto [key, slot] : {std::pair{"d0", &c.paths.d0}, {"dprime", &c.paths.dprime}, {"targets", &c.paths.targets}}) {
      if (s.has(key)) *slot = resolve(base_dir, s.require<std::string>(key));
    }
    s.finish();
  }
  if (root.has("seed")) {
    const json& v = root.raw("seed");
    if (!v.is_number_integer() || (!v.is_number_unsigned() && v.get<long long>() < 0)) {
      throw ConfigError("config: 'seed' must be a non-negative integer");
    }
    c.seed = v.get<std::uint64_t>();
  }
  root.finish();

  c.mining.seed = c.seed;
  try {
    c.mining.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("config mining: ") + e.what());
  }
  if (!c.expert.targets.empty() && c.paths.targets) {
    throw ConfigError("config: give targets either in expert.targets or in paths.targets, not both");
  }
  return c;
}

json config_to_json(const RunConfig& c) {
  json paths = {{"data", c.paths.data.string()}, {"output_dir", c.paths.output_dir.string()}};
  if (c.paths.d0) paths["d0"] = c.paths.d0->string();
  if (c.paths.dprime) paths["dprime"] = c.paths.dprime->string();
  if (c.paths.targets) paths["targets"] = c.paths.targets->string();
  return {
      {"schema", schema_to_json(c.mining.schema)},
      {"mining",
       {{"max_len", c.mining.max_len},
        {"max_conds", c.mining.max_conds},
        {"within_seconds", c.mining.within_seconds},
        {"scale", c.mining.scale},
        {"jump_interval", c.mining.jump_interval},
        {"window_len", c.mining.window_len}}},
      {"expert",
       {{"kind", c.expert.kind == ExpertKind::Live ? "live" : "simulated"},
        {"sigma", c.expert.sigma},
        {"targets", c.expert.targets},
        {"timeout_seconds", c.expert.timeout_seconds}}},
      {"schedule",
       {{"epochs", c.schedule.epochs},
        {"episodes_per_epoch", c.schedule.episodes_per_epoch},
        {"interact_every_episodes", c.schedule.interact_every_episodes},
        {"query_min", c.schedule.query_min},
        {"query_max", c.schedule.query_max},
        {"max_per_rank", c.schedule.max_per_rank},
        {"predictor_epochs", c.schedule.predictor_epochs}}},
      {"agent",
       {{"trunk_hidden", c.agent.trunk_hidden},
        {"trunk_layers", c.agent.trunk_layers},
        {"head_hidden", c.agent.head_hidden},
        {"gamma", c.agent.gamma},
        {"ucb_c", c.agent.ucb_c},
        {"lr", c.agent.base_lr},
        {"optimizer", optimizer_name(c.agent.optimizer)},
        {"value_coef", c.agent.value_coef},
        {"dynamic_lr", c.agent.dynamic_lr},
        {"reward_scale", c.reward_scale}}},
      {"predictor",
       {{"hidden", c.predictor.hidden},
        {"dropout", c.predictor.dropout},
        {"activation", nn::activation_name(c.predictor.activation)},
        {"lr", c.predictor.lr},
        {"optimizer", optimizer_name(c.predictor.optimizer)},
        {"batch_size", c.predictor.batch_size}}},
      {"bayes",
       {{"iterations", c.bayes.iterations},
        {"per_iteration", c.bayes.per_iteration},
        {"patience", c.bayes.patience},
        {"pool_size", c.bayes.pool_size}}},
      {"matcher", {{"equality_eps", c.matcher.equality_eps}, {"cap", c.matcher.cap}}},
      {"paths", paths},
      {"seed", c.seed},
  };
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config file " + path.string() + " is not valid JSON: " + e.what());
  }
  RunConfig c = config_from_json(doc, path.parent_path());
  check_inputs_exist(c);
  return c;
}

void check_inputs_exist(const RunConfig& c) {
  auto need = [](const std::filesystem::path& p, const char* what) {
    if (!std::filesystem::is_regular_file(p)) {
      throw ConfigError(std::string("config paths: ") + what + " file " + p.string() + " does not exist");
    }
  };
  need(c.paths.data, "data");
  if (c.paths.d0) need(*c.paths.d0, "d0");
  if (c.paths.dprime) need(*c.paths.dprime, "dprime");
  if (c.paths.targets) need(*c.paths.targets, "targets");
}

std::vector<Pattern> load_targets(const RunConfig& c) {
  std::vector<std::string> texts = c.expert.targets;
  if (c.paths.targets) {
    const json doc = nn::read_json_file(*c.paths.targets);
    try {
      texts = doc.at("targets").get<std::vector<std::string>>();
    } catch (const json::exception&) {
      throw ConfigError("targets file " + c.paths.targets->string() + " has no 'targets' list");
    }
    if (doc.contains("schema") && schema_from_json(doc.at("schema")) != c.mining.schema) {
      throw ConfigError("targets file " + c.paths.targets->string() + " was written for a different schema");
    }
  }
  std::vector<Pattern> out;
  for (const auto& t : texts) out.push_back(parse_pattern(t, c.mining.schema));
  return out;
}

}  // namespace cepminer
