#pragma once

#include <Eigen/Dense>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "cepminer/nn.hpp"
#include "cepminer/pattern.hpp"
#include "cepminer/stream.hpp"

namespace cepminer {

struct HoleBound {
  int hole_id = 0;
  std::string attribute;
  double lower = 0.0;
  double upper = 1.0;
  double width() const { return upper - lower; }
};

// One dimension per hole, in Pattern::hole_ids() order.
struct SearchSpace {
  std::vector<HoleBound> dims;
  std::size_t size() const { return dims.size(); }
  bool empty() const { return dims.empty(); }
  bool contains(const Eigen::VectorXd& x) const;
  Eigen::VectorXd sample(nn::Rng& rng) const;
};

// Bounds are the observed [min, max] of each hole's attribute over
// `reference`, widened by `margin` of the range on both sides.
SearchSpace extract_holes(const Pattern& p, const EventSchema& schema, std::span<const Record> reference,
                          double margin = 0.05);

// Constant prior mean of the surrogate. Min is pessimistic: away from the
// data the model expects the worst value seen, which curbs EI's pull toward
// unexplored corners when observations are few.
enum class PriorMean { SampleMean, SampleMin };

// GP regression with a fixed RBF kernel over standardized targets.
class GaussianProcess {
 public:
  GaussianProcess(Eigen::VectorXd length_scales, double noise_variance = 1e-6,
                  PriorMean prior = PriorMean::SampleMin);

  void add(const Eigen::VectorXd& x, double y);
  std::size_t size() const { return xs_.size(); }
  bool empty() const { return xs_.empty(); }

  // Posterior mean and variance in the objective's units.
  std::pair<double, double> predict(const Eigen::VectorXd& x) const;
  double best() const;

 private:
  double kernel(const Eigen::VectorXd& a, const Eigen::VectorXd& b) const;
  void refit();

  Eigen::VectorXd length_scales_;
  double noise_;
  PriorMean prior_;
  std::vector<Eigen::VectorXd> xs_;
  std::vector<double> ys_;
  double y_mean_ = 0.0;
  double y_std_ = 1.0;
  Eigen::LLT<Eigen::MatrixXd> chol_;
  Eigen::VectorXd alpha_;
};

double expected_improvement(double mean, double variance, double best, double xi = 0.01);

// Top-k expected-improvement points from a uniform candidate pool; uniform
// samples while the surrogate has no observations.
std::vector<Eigen::VectorXd> propose(const GaussianProcess& gp, const SearchSpace& space, std::size_t k,
                                     nn::Rng& rng, std::size_t pool_size = 256);

struct CompletionBudget {
  std::size_t iterations = 10;
  std::size_t per_iteration = 3;
  std::size_t patience = 5;
  std::size_t pool_size = 256;
};

struct CompletionResult {
  Pattern pattern;
  double best_objective = 0.0;
  std::vector<double> best_values;
  std::vector<double> best_per_iteration;  // running max after each iteration
  std::size_t evaluations = 0;
};

using Objective = std::function<double(const std::vector<double>& hole_values)>;

CompletionResult complete(const Pattern& formula, const SearchSpace& space, const Objective& objective,
                          const CompletionBudget& budget, nn::Rng& rng);

// Baseline with the same evaluation budget: best of uniform draws.
CompletionResult complete_uniform(const Pattern& formula, const SearchSpace& space, const Objective& objective,
                                  std::size_t evaluations, nn::Rng& rng);

}  // namespace cepminer
