#include "cepminer/rank_predictor.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <numeric>

#include "cepminer/nn_io.hpp"
#include "cepminer/stream.hpp"

namespace cepminer {

bool LabeledSet::insert(const Pattern& p, int rating) {
  std::string key = render_pattern(p);
  auto [it, fresh] = index_.try_emplace(key, items_.size());
  if (!fresh) {
    items_[it->second].rating = rating;
    return false;
  }
  keys_.push_back(std::move(key));
  items_.push_back({p, rating});
  return true;
}

const LabeledPattern* LabeledSet::find(const std::string& canonical) const {
  const auto it = index_.find(canonical);
  return it == index_.end() ? nullptr : &items_[it->second];
}

void LabeledSet::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  for (std::size_t i = 0; i < items_.size(); ++i) {
    out << nlohmann::json{{"pattern", keys_[i]}, {"rating", items_[i].rating}}.dump() << '\n';
  }
}

LabeledSet LabeledSet::load(const std::filesystem::path& path, const EventSchema& schema, int scale) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  LabeledSet set;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto doc = nlohmann::json::parse(line);
      const int rating = doc.at("rating").get<int>();
      if (rating < 1 || rating > scale) throw std::runtime_error("rating outside [1, " + std::to_string(scale) + "]");
      const Pattern p = parse_pattern(doc.at("pattern").get<std::string>(), schema);
      if (p.has_holes()) throw std::runtime_error("labeled pattern has holes");
      set.insert(p, rating);
    } catch (const std::exception& e) {
      throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return set;
}

std::size_t feature_size(const EventSchema& schema, std::size_t max_len, std::size_t max_conds) {
  return pattern_encoding_size(schema, max_len, max_conds) + max_len * max_conds;
}

Eigen::VectorXd featurize(const Pattern& raw, const EventSchema& schema, std::size_t max_len, std::size_t max_conds,
                          std::span<const double> attribute_scale) {
  if (raw.has_holes()) throw PatternError("cannot featurize a pattern formula with holes");
  const Eigen::VectorXd enc = encode_partial_pattern(raw, schema, max_len, max_conds);
  const Pattern p = normalize_references(raw);
  Eigen::VectorXd f = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(feature_size(schema, max_len, max_conds)));
  f.head(enc.size()) = enc;
  for (std::size_t i = 0; i < p.events.size(); ++i) {
    for (std::size_t j = 0; j < p.events[i].conditions.size(); ++j) {
      const auto& c = p.events[i].conditions[j];
      const auto* k = std::get_if<Constant>(&c.target);
      if (!k) continue;
      const std::size_t a = *schema.attribute_index(c.attribute);
      const double s = a < attribute_scale.size() ? attribute_scale[a] : 1.0;
      f[enc.size() + static_cast<Eigen::Index>(i * max_conds + j)] = k->value / s;
    }
  }
  return f;
}

namespace {

std::vector<std::size_t> predictor_dims(std::size_t in, const PredictorConfig& cfg, int scale) {
  std::vector<std::size_t> dims{in};
  dims.insert(dims.end(), cfg.hidden.begin(), cfg.hidden.end());
  dims.push_back(static_cast<std::size_t>(scale));
  return dims;
}

}  // namespace

RankPredictor::RankPredictor(EventSchema schema, std::size_t max_len, std::size_t max_conds, int scale,
                             PredictorConfig config, std::uint64_t seed)
    : schema_(std::move(schema)),
      max_len_(max_len),
      max_conds_(max_conds),
      scale_(scale),
      config_(std::move(config)),
      attribute_scale_(schema_.attributes.size(), 1.0),
      optimizer_(config_.optimizer, config_.lr) {
  if (scale_ < 2) throw std::invalid_argument("rating scale must be >= 2");
  nn::Rng rng(seed);
  net_ = nn::DenseNet<double>::make(predictor_dims(feature_dim(), config_, scale_), config_.activation,
                                    nn::Activation::Linear, config_.dropout, rng);
}

Eigen::VectorXd RankPredictor::features(const Pattern& p) const {
  return featurize(p, schema_, max_len_, max_conds_, attribute_scale_);
}

Eigen::VectorXd RankPredictor::probabilities(const Pattern& p) const { return nn::softmax(net_.forward(features(p))); }

RankPrediction RankPredictor::predict(const Pattern& p) const {
  const Eigen::VectorXd probs = probabilities(p);
  Eigen::Index best = 0;
  const double certainty = probs.maxCoeff(&best);
  return {static_cast<int>(best) + 1, certainty};
}

std::vector<double> RankPredictor::train(std::span<const LabeledPattern> data, std::size_t epochs, nn::Rng& rng) {
  std::vector<double> history;
  if (data.empty()) throw std::invalid_argument("cannot train on an empty labeled set");
  const auto n = static_cast<Eigen::Index>(data.size());
  Eigen::MatrixXd x(static_cast<Eigen::Index>(feature_dim()), n);
  std::vector<int> labels;
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& item = data[static_cast<std::size_t>(i)];
    if (item.rating < 1 || item.rating > scale_) throw std::invalid_argument("rating outside the scale");
    x.col(i) = features(item.pattern);
    labels.push_back(item.rating - 1);
  }
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  const auto batch = static_cast<Eigen::Index>(std::max<std::size_t>(1, config_.batch_size));

  for (std::size_t e = 0; e < epochs; ++e) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    for (Eigen::Index start = 0; start < n; start += batch) {
      const Eigen::Index m = std::min(batch, n - start);
      Eigen::MatrixXd xb(x.rows(), m);
      for (Eigen::Index k = 0; k < m; ++k) xb.col(k) = x.col(order[static_cast<std::size_t>(start + k)]);
      nn::ForwardCache<double> cache;
      const Eigen::MatrixXd logits = net_.forward(xb, &cache, true, &rng);
      Eigen::MatrixXd grad(logits.rows(), m);
      for (Eigen::Index k = 0; k < m; ++k) {
        const Eigen::VectorXd p = nn::softmax(logits.col(k));
        const int label = labels[static_cast<std::size_t>(order[static_cast<std::size_t>(start + k)])];
        loss_sum += nn::cross_entropy(p, label);
        grad.col(k) = p;
        grad(label, k) -= 1.0;
      }
      grad /= static_cast<double>(m);
      optimizer_.apply(net_, net_.backward(cache, grad));
    }
    history.push_back(loss_sum / static_cast<double>(n));
  }
  return history;
}

nlohmann::json RankPredictor::checkpoint() const {
  return {{"format", "cepminer-rank-predictor"},
          {"version", 1},
          {"scale", scale_},
          {"attribute_scale", attribute_scale_},
          {"net", nn::to_json(net_)}};
}

RankPredictor RankPredictor::from_checkpoint(const nlohmann::json& doc, EventSchema schema, std::size_t max_len,
                                             std::size_t max_conds, int scale, PredictorConfig config) {
  RankPredictor rp(std::move(schema), max_len, max_conds, scale, std::move(config), 0);
  try {
    if (doc.at("format") != "cepminer-rank-predictor" || doc.at("version") != 1) {
      throw std::runtime_error("not a rank predictor checkpoint");
    }
    if (doc.at("scale").get<int>() != scale) throw std::runtime_error("checkpoint rating scale differs from config");
    rp.net_ = nn::net_from_json(doc.at("net"), nn::layer_dims(rp.net_));
    rp.attribute_scale_ = doc.at("attribute_scale").get<std::vector<double>>();
    if (rp.attribute_scale_.size() != rp.schema_.attributes.size()) {
      throw std::runtime_error("attribute scale size differs from schema");
    }
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(std::string("malformed rank predictor checkpoint: ") + e.what());
  }
  return rp;
}

double balanced_accuracy(std::span<const int> predictions, std::span<const int> labels, int scale) {
  if (predictions.empty()) throw std::invalid_argument("balanced accuracy of an empty set");
  if (predictions.size() != labels.size()) throw std::invalid_argument("predictions and labels differ in length");
  std::map<int, std::pair<std::size_t, std::size_t>> per_class;  // label -> (hits, total)
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 1 || labels[i] > scale) throw std::invalid_argument("label outside the rating scale");
    auto& [hit, total] = per_class[labels[i]];
    ++total;
    if (predictions[i] == labels[i]) ++hit;
  }
  double sum = 0.0;
  for (const auto& [label, counts] : per_class) {
    sum += static_cast<double>(counts.first) / static_cast<double>(counts.second);
  }
  return sum / static_cast<double>(per_class.size());
}

}  // namespace cepminer
