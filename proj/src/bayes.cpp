#include "cepminer/bayes.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace cepminer {

bool SearchSpace::contains(const Eigen::VectorXd& x) const {
  if (static_cast<std::size_t>(x.size()) != dims.size()) return false;
  for (std::size_t i = 0; i < dims.size(); ++i) {
    const double v = x[static_cast<Eigen::Index>(i)];
    if (v < dims[i].lower || v > dims[i].upper) return false;
  }
  return true;
}

Eigen::VectorXd SearchSpace::sample(nn::Rng& rng) const {
  Eigen::VectorXd x(static_cast<Eigen::Index>(dims.size()));
  for (std::size_t i = 0; i < dims.size(); ++i) {
    x[static_cast<Eigen::Index>(i)] = std::uniform_real_distribution<double>(dims[i].lower, dims[i].upper)(rng);
  }
  return x;
}

SearchSpace extract_holes(const Pattern& p, const EventSchema& schema, std::span<const Record> reference,
                          double margin) {
  SearchSpace space;
  for (const auto& ev : p.events) {
    for (const auto& c : ev.conditions) {
      const auto* h = std::get_if<Hole>(&c.target);
      if (!h) continue;
      const auto a = schema.attribute_index(c.attribute);
      if (!a) throw PatternError("unknown attribute '" + c.attribute + "'");
      double lo = std::numeric_limits<double>::infinity();
      double hi = -lo;
      for (const auto& r : reference) {
        if (const auto v = r.attr(*a)) {
          lo = std::min(lo, *v);
          hi = std::max(hi, *v);
        }
      }
      if (!std::isfinite(lo)) {
        throw std::runtime_error("attribute '" + c.attribute + "' never observed; cannot bound hole ?" +
                                 std::to_string(h->id));
      }
      double pad = margin * (hi - lo);
      if (hi == lo) pad = std::max(0.05 * std::abs(hi), 0.5);
      space.dims.push_back({h->id, c.attribute, lo - pad, hi + pad});
    }
  }
  return space;
}

GaussianProcess::GaussianProcess(Eigen::VectorXd length_scales, double noise_variance, PriorMean prior)
    : length_scales_(std::move(length_scales)), noise_(noise_variance), prior_(prior) {
  if ((length_scales_.array() <= 0.0).any()) throw std::invalid_argument("length scales must be positive");
}

double GaussianProcess::kernel(const Eigen::VectorXd& a, const Eigen::VectorXd& b) const {
  return std::exp(-0.5 * ((a - b).array() / length_scales_.array()).square().sum());
}

void GaussianProcess::add(const Eigen::VectorXd& x, double y) {
  if (x.size() != length_scales_.size()) throw std::invalid_argument("GP input has the wrong dimension");
  if (!std::isfinite(y)) throw std::invalid_argument("GP observation is not finite");
  xs_.push_back(x);
  ys_.push_back(y);
  refit();
}

void GaussianProcess::refit() {
  const auto n = static_cast<Eigen::Index>(xs_.size());
  y_mean_ = std::accumulate(ys_.begin(), ys_.end(), 0.0) / static_cast<double>(n);
  double var = 0.0;
  for (double y : ys_) var += (y - y_mean_) * (y - y_mean_);
  y_std_ = std::sqrt(var / static_cast<double>(n));
  if (!(y_std_ > 0.0)) y_std_ = 1.0;
  if (prior_ == PriorMean::SampleMin) y_mean_ = *std::min_element(ys_.begin(), ys_.end());

  Eigen::MatrixXd k(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j <= i; ++j) k(i, j) = k(j, i) = kernel(xs_[static_cast<std::size_t>(i)], xs_[static_cast<std::size_t>(j)]);
  }
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) y[i] = (ys_[static_cast<std::size_t>(i)] - y_mean_) / y_std_;
  // Add jitter until the factorization succeeds (repeated inputs).
  for (double jitter = noise_;; jitter *= 10.0) {
    chol_.compute(k + jitter * Eigen::MatrixXd::Identity(n, n));
    if (chol_.info() == Eigen::Success) break;
    if (jitter > 1.0) throw std::runtime_error("GP kernel matrix is not positive definite");
  }
  alpha_ = chol_.solve(y);
}

std::pair<double, double> GaussianProcess::predict(const Eigen::VectorXd& x) const {
  if (xs_.empty()) return {0.0, 1.0};
  const auto n = static_cast<Eigen::Index>(xs_.size());
  Eigen::VectorXd ks(n);
  for (Eigen::Index i = 0; i < n; ++i) ks[i] = kernel(x, xs_[static_cast<std::size_t>(i)]);
  const double mean = ks.dot(alpha_);
  const Eigen::VectorXd v = chol_.matrixL().solve(ks);
  const double var = std::max(0.0, 1.0 - v.squaredNorm());
  return {y_mean_ + y_std_ * mean, var * y_std_ * y_std_};
}

double GaussianProcess::best() const {
  if (ys_.empty()) return -std::numeric_limits<double>::infinity();
  return *std::max_element(ys_.begin(), ys_.end());
}

double expected_improvement(double mean, double variance, double best, double xi) {
  const double sd = std::sqrt(variance);
  if (sd < 1e-12) return std::max(0.0, mean - best - xi);
  const double z = (mean - best - xi) / sd;
  const double pdf = std::exp(-0.5 * z * z) / std::sqrt(2.0 * M_PI);
  const double cdf = 0.5 * std::erfc(-z / std::sqrt(2.0));
  return (mean - best - xi) * cdf + sd * pdf;
}

std::vector<Eigen::VectorXd> propose(const GaussianProcess& gp, const SearchSpace& space, std::size_t k,
                                     nn::Rng& rng, std::size_t pool_size) {
  if (k == 0) throw std::invalid_argument("propose needs k >= 1");
  std::vector<Eigen::VectorXd> out;
  if (gp.empty()) {
    for (std::size_t i = 0; i < k; ++i) out.push_back(space.sample(rng));
    return out;
  }
  const double best = gp.best();
  // Scale xi with the objective's magnitude so plateaus still get explored.
  const double xi = 0.01 * std::max(1.0, std::abs(best));
  std::vector<std::pair<double, Eigen::VectorXd>> pool;
  pool.reserve(pool_size);
  for (std::size_t i = 0; i < std::max(pool_size, k); ++i) {
    Eigen::VectorXd x = space.sample(rng);
    const auto [m, v] = gp.predict(x);
    pool.emplace_back(expected_improvement(m, v, best, xi), std::move(x));
  }
  std::stable_sort(pool.begin(), pool.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
  for (auto& [ei, x] : pool) {
    if (out.size() == k) break;
    const bool dup = std::any_of(out.begin(), out.end(), [&](const Eigen::VectorXd& y) { return y == x; });
    if (!dup) out.push_back(std::move(x));
  }
  return out;
}

namespace {

std::vector<double> to_std(const Eigen::VectorXd& x) { return std::vector<double>(x.data(), x.data() + x.size()); }

CompletionResult identity_completion(const Pattern& formula, const Objective& objective) {
  CompletionResult r;
  r.pattern = formula;
  r.best_objective = objective({});
  r.evaluations = 1;
  return r;
}

}  // namespace

CompletionResult complete(const Pattern& formula, const SearchSpace& space, const Objective& objective,
                          const CompletionBudget& budget, nn::Rng& rng) {
  if (!formula.has_holes()) return identity_completion(formula, objective);
  if (space.size() != formula.hole_ids().size()) throw std::invalid_argument("search space does not match holes");

  Eigen::VectorXd ls(static_cast<Eigen::Index>(space.size()));
  for (std::size_t i = 0; i < space.size(); ++i) ls[static_cast<Eigen::Index>(i)] = 0.2 * space.dims[i].width();
  GaussianProcess gp(ls);

  CompletionResult r;
  r.best_objective = -std::numeric_limits<double>::infinity();
  std::size_t stale = 0;
  for (std::size_t it = 0; it < budget.iterations; ++it) {
    const double before = r.best_objective;
    for (const auto& x : propose(gp, space, budget.per_iteration, rng, budget.pool_size)) {
      const auto values = to_std(x);
      const double y = objective(values);
      ++r.evaluations;
      gp.add(x, y);
      if (y > r.best_objective) {
        r.best_objective = y;
        r.best_values = values;
      }
    }
    r.best_per_iteration.push_back(r.best_objective);
    stale = r.best_objective > before ? 0 : stale + 1;
    if (stale >= budget.patience) break;
  }
  r.pattern = substitute_holes(formula, r.best_values);
  return r;
}

CompletionResult complete_uniform(const Pattern& formula, const SearchSpace& space, const Objective& objective,
                                  std::size_t evaluations, nn::Rng& rng) {
  if (!formula.has_holes()) return identity_completion(formula, objective);
  CompletionResult r;
  r.best_objective = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < evaluations; ++i) {
    const auto values = to_std(space.sample(rng));
    const double y = objective(values);
    ++r.evaluations;
    if (y > r.best_objective) {
      r.best_objective = y;
      r.best_values = values;
    }
    r.best_per_iteration.push_back(r.best_objective);
  }
  r.pattern = substitute_holes(formula, r.best_values);
  return r;
}

}  // namespace cepminer
