#pragma once

// Small dense-network toolkit with manual backpropagation. Batches are stored
// column-wise: an input batch is (input_dim x batch_size).

#include <Eigen/Dense>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <random>
#include <stdexcept>
#include <vector>

namespace cepminer::nn {

enum class Activation { Relu, LeakyRelu, Linear };

inline constexpr double kLeakySlope = 0.01;

template <typename Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using Rng = std::mt19937_64;

template <typename Derived>
auto activate(const Eigen::MatrixBase<Derived>& z, Activation act) {
  using Scalar = typename Derived::Scalar;
  const Scalar slope = act == Activation::LeakyRelu ? Scalar(kLeakySlope) : Scalar(0);
  const bool linear = act == Activation::Linear;
  return z.unaryExpr([=](Scalar v) { return linear || v > Scalar(0) ? v : slope * v; }).eval();
}

template <typename Derived>
auto activation_slope(const Eigen::MatrixBase<Derived>& z, Activation act) {
  using Scalar = typename Derived::Scalar;
  const Scalar slope = act == Activation::LeakyRelu ? Scalar(kLeakySlope) : Scalar(0);
  const bool linear = act == Activation::Linear;
  return z.unaryExpr([=](Scalar v) { return linear || v > Scalar(0) ? Scalar(1) : slope; }).eval();
}

template <typename Scalar>
struct DenseLayer {
  Mat<Scalar> weight;  // out x in
  Vec<Scalar> bias;
  Activation activation = Activation::Linear;

  Eigen::Index in_dim() const { return weight.cols(); }
  Eigen::Index out_dim() const { return weight.rows(); }
};

template <typename Scalar>
struct GradientSet {
  std::vector<Mat<Scalar>> weight;
  std::vector<Vec<Scalar>> bias;

  GradientSet& operator+=(const GradientSet& o) {
    if (weight.empty()) return *this = o;
    for (std::size_t i = 0; i < weight.size(); ++i) {
      weight[i] += o.weight[i];
      bias[i] += o.bias[i];
    }
    return *this;
  }
  GradientSet& operator*=(Scalar s) {
    for (auto& w : weight) w *= s;
    for (auto& b : bias) b *= s;
    return *this;
  }
  bool all_finite() const {
    for (const auto& w : weight) {
      if (!w.allFinite()) return false;
    }
    for (const auto& b : bias) {
      if (!b.allFinite()) return false;
    }
    return true;
  }
  Scalar squared_norm() const {
    Scalar s = 0;
    for (const auto& w : weight) s += w.squaredNorm();
    for (const auto& b : bias) s += b.squaredNorm();
    return s;
  }
};

// Activations recorded by forward(), consumed by backward().
template <typename Scalar>
struct ForwardCache {
  std::vector<Mat<Scalar>> inputs;
  std::vector<Mat<Scalar>> pre_activations;
  std::optional<Mat<Scalar>> dropout_mask;  // scaled keep-mask after layer 0
};

template <typename Scalar = double>
class DenseNet {
 public:
  using Matrix = Mat<Scalar>;
  using Vector = Vec<Scalar>;

  DenseNet() = default;
  DenseNet(std::vector<DenseLayer<Scalar>> layers, double dropout_after_first = 0.0)
      : layers_(std::move(layers)), dropout_(dropout_after_first) {
    validate();
  }

  // dims = {in, h1, ..., out}. Hidden layers use `hidden`, the last `output`.
  // He-uniform for rectifier layers, Xavier-uniform for linear ones.
  static DenseNet make(const std::vector<std::size_t>& dims, Activation hidden, Activation output, double dropout,
                       Rng& rng) {
    if (dims.size() < 2) throw std::invalid_argument("DenseNet needs at least input and output sizes");
    std::vector<DenseLayer<Scalar>> layers;
    for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
      const auto in = static_cast<Eigen::Index>(dims[i]);
      const auto out = static_cast<Eigen::Index>(dims[i + 1]);
      const Activation act = i + 2 == dims.size() ? output : hidden;
      const double limit = act == Activation::Linear ? std::sqrt(6.0 / static_cast<double>(in + out))
                                                     : std::sqrt(6.0 / static_cast<double>(in));
      std::uniform_real_distribution<double> dist(-limit, limit);
      DenseLayer<Scalar> layer{Matrix(out, in), Vector::Zero(out), act};
      for (Eigen::Index c = 0; c < in; ++c) {
        for (Eigen::Index r = 0; r < out; ++r) layer.weight(r, c) = static_cast<Scalar>(dist(rng));
      }
      layers.push_back(std::move(layer));
    }
    return DenseNet(std::move(layers), dropout);
  }

  const std::vector<DenseLayer<Scalar>>& layers() const { return layers_; }
  std::vector<DenseLayer<Scalar>>& layers() { return layers_; }
  double dropout() const { return dropout_; }
  Eigen::Index input_dim() const { return layers_.front().in_dim(); }
  Eigen::Index output_dim() const { return layers_.back().out_dim(); }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers_) n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
    return n;
  }

  // Batched forward pass. rng is only used when train_mode and dropout > 0.
  Matrix forward(const Matrix& x, ForwardCache<Scalar>* cache = nullptr, bool train_mode = false,
                 Rng* rng = nullptr) const {
    if (x.rows() != input_dim()) {
      throw std::invalid_argument("input has " + std::to_string(x.rows()) + " rows, network expects " +
                                  std::to_string(input_dim()));
    }
    if (cache) *cache = {};
    Matrix h = x;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      const auto& layer = layers_[i];
      Matrix z = (layer.weight * h).colwise() + layer.bias;
      if (cache) {
        cache->inputs.push_back(h);
        cache->pre_activations.push_back(z);
      }
      h = activate(z, layer.activation);
      if (i == 0 && train_mode && dropout_ > 0.0 && layers_.size() > 1) {
        if (!rng) throw std::invalid_argument("dropout in train mode needs an rng");
        std::bernoulli_distribution keep(1.0 - dropout_);
        const Scalar inv = Scalar(1.0 / (1.0 - dropout_));
        Matrix mask(h.rows(), h.cols());
        for (Eigen::Index c = 0; c < mask.cols(); ++c) {
          for (Eigen::Index r = 0; r < mask.rows(); ++r) mask(r, c) = keep(*rng) ? inv : Scalar(0);
        }
        h = h.cwiseProduct(mask);
        if (cache) cache->dropout_mask = std::move(mask);
      }
    }
    return h;
  }

  Vector forward(const Vector& x) const { return forward(Matrix(x)).col(0); }

  // Gradients of sum(output_gradient .* output) with respect to every
  // parameter (summed over the batch). Optionally the input gradient.
  GradientSet<Scalar> backward(const ForwardCache<Scalar>& cache, const Matrix& output_gradient,
                               Matrix* input_gradient = nullptr) const {
    if (cache.inputs.size() != layers_.size()) throw std::invalid_argument("stale forward cache");
    if (output_gradient.rows() != output_dim() || output_gradient.cols() != cache.inputs.front().cols()) {
      throw std::invalid_argument("output gradient shape does not match forward cache");
    }
    GradientSet<Scalar> g;
    g.weight.resize(layers_.size());
    g.bias.resize(layers_.size());
    Matrix delta = output_gradient;
    for (std::size_t k = layers_.size(); k-- > 0;) {
      const auto& layer = layers_[k];
      if (k == 0 && cache.dropout_mask) delta = delta.cwiseProduct(*cache.dropout_mask);
      delta = delta.cwiseProduct(activation_slope(cache.pre_activations[k], layer.activation));
      g.weight[k] = delta * cache.inputs[k].transpose();
      g.bias[k] = delta.rowwise().sum();
      if (k > 0 || input_gradient) delta = layer.weight.transpose() * delta;
    }
    if (input_gradient) *input_gradient = std::move(delta);
    return g;
  }

  GradientSet<Scalar> zero_gradients() const {
    GradientSet<Scalar> g;
    for (const auto& l : layers_) {
      g.weight.push_back(Matrix::Zero(l.weight.rows(), l.weight.cols()));
      g.bias.push_back(Vector::Zero(l.bias.size()));
    }
    return g;
  }

  bool congruent(const GradientSet<Scalar>& g) const {
    if (g.weight.size() != layers_.size() || g.bias.size() != layers_.size()) return false;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      if (g.weight[i].rows() != layers_[i].weight.rows() || g.weight[i].cols() != layers_[i].weight.cols() ||
          g.bias[i].size() != layers_[i].bias.size()) {
        return false;
      }
    }
    return true;
  }

  bool all_finite() const {
    for (const auto& l : layers_) {
      if (!l.weight.allFinite() || !l.bias.allFinite()) return false;
    }
    return true;
  }

  bool operator==(const DenseNet& o) const {
    if (layers_.size() != o.layers_.size() || dropout_ != o.dropout_) return false;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      const auto& a = layers_[i];
      const auto& b = o.layers_[i];
      if (a.activation != b.activation || a.weight.rows() != b.weight.rows() || a.weight.cols() != b.weight.cols() ||
          a.weight != b.weight || a.bias != b.bias) {
        return false;
      }
    }
    return true;
  }

 private:
  void validate() const {
    if (layers_.empty()) throw std::invalid_argument("DenseNet needs at least one layer");
    if (!(dropout_ >= 0.0 && dropout_ < 1.0)) throw std::invalid_argument("dropout must lie in [0, 1)");
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      if (layers_[i].bias.size() != layers_[i].weight.rows()) throw std::invalid_argument("bias size mismatch");
      if (i > 0 && layers_[i].in_dim() != layers_[i - 1].out_dim()) {
        throw std::invalid_argument("layer dimensions do not compose");
      }
    }
  }

  std::vector<DenseLayer<Scalar>> layers_;
  double dropout_ = 0.0;
};

// --- losses --------------------------------------------------------------

template <typename Derived>
auto softmax(const Eigen::MatrixBase<Derived>& logits) {
  using Scalar = typename Derived::Scalar;
  const Scalar m = logits.maxCoeff();
  Vec<Scalar> e = (logits.array() - m).exp().matrix();
  return (e / e.sum()).eval();
}

// Softmax restricted to entries where mask is true; the rest get exactly 0.
template <typename Scalar>
Vec<Scalar> masked_softmax(const Vec<Scalar>& logits, const std::vector<bool>& mask) {
  Scalar m = -std::numeric_limits<Scalar>::infinity();
  for (Eigen::Index i = 0; i < logits.size(); ++i) {
    if (mask[static_cast<std::size_t>(i)]) m = std::max(m, logits[i]);
  }
  if (!std::isfinite(m)) throw std::invalid_argument("masked_softmax: every entry is masked");
  Vec<Scalar> p = Vec<Scalar>::Zero(logits.size());
  for (Eigen::Index i = 0; i < logits.size(); ++i) {
    if (mask[static_cast<std::size_t>(i)]) p[i] = std::exp(logits[i] - m);
  }
  return p / p.sum();
}

// log of masked_softmax without the underflow to -inf for far-behind logits.
template <typename Scalar>
Scalar masked_log_softmax(const Vec<Scalar>& logits, const std::vector<bool>& mask, Eigen::Index i) {
  Scalar m = -std::numeric_limits<Scalar>::infinity();
  for (Eigen::Index k = 0; k < logits.size(); ++k) {
    if (mask[static_cast<std::size_t>(k)]) m = std::max(m, logits[k]);
  }
  if (!std::isfinite(m)) throw std::invalid_argument("masked_log_softmax: every entry is masked");
  if (!mask[static_cast<std::size_t>(i)]) return -std::numeric_limits<Scalar>::infinity();
  Scalar sum = 0;
  for (Eigen::Index k = 0; k < logits.size(); ++k) {
    if (mask[static_cast<std::size_t>(k)]) sum += std::exp(logits[k] - m);
  }
  return logits[i] - m - std::log(sum);
}

template <typename Derived>
typename Derived::Scalar cross_entropy(const Eigen::MatrixBase<Derived>& probs, Eigen::Index label) {
  using Scalar = typename Derived::Scalar;
  return -std::log(std::max(probs[label], std::numeric_limits<Scalar>::min()));
}

template <typename A, typename B>
typename A::Scalar mse(const Eigen::MatrixBase<A>& a, const Eigen::MatrixBase<B>& b) {
  if (a.size() == 0) return 0;
  return (a - b).squaredNorm() / static_cast<typename A::Scalar>(a.size());
}

// --- optimizers ----------------------------------------------------------

enum class OptimizerKind { Sgd, Adam };

// Owns the moment state for one network.
template <typename Scalar = double>
class Optimizer {
 public:
  Optimizer() = default;
  Optimizer(OptimizerKind kind, Scalar base_lr) : kind_(kind), base_lr_(base_lr) {
    if (!(base_lr > 0)) throw std::invalid_argument("learning rate must be positive");
  }

  OptimizerKind kind() const { return kind_; }
  Scalar base_lr() const { return base_lr_; }
  long steps() const { return step_; }

  void apply(DenseNet<Scalar>& net, const GradientSet<Scalar>& g, std::optional<Scalar> lr_override = {}) {
    if (!net.congruent(g)) throw std::invalid_argument("gradient shapes do not match network");
    if (!g.all_finite()) throw std::runtime_error("non-finite gradient; refusing to update");
    const Scalar lr = lr_override.value_or(base_lr_);
    auto& layers = net.layers();
    if (kind_ == OptimizerKind::Sgd) {
      for (std::size_t i = 0; i < layers.size(); ++i) {
        layers[i].weight -= lr * g.weight[i];
        layers[i].bias -= lr * g.bias[i];
      }
      ++step_;
      return;
    }
    if (m_.weight.empty()) {
      m_ = net.zero_gradients();
      v_ = net.zero_gradients();
    }
    ++step_;
    const Scalar c1 = Scalar(1) - std::pow(beta1_, static_cast<Scalar>(step_));
    const Scalar c2 = Scalar(1) - std::pow(beta2_, static_cast<Scalar>(step_));
    auto update = [&](auto& param, auto& m, auto& v, const auto& grad) {
      m = beta1_ * m + (Scalar(1) - beta1_) * grad;
      v = beta2_ * v + (Scalar(1) - beta2_) * grad.cwiseProduct(grad);
      param.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + eps_);
    };
    for (std::size_t i = 0; i < layers.size(); ++i) {
      update(layers[i].weight, m_.weight[i], v_.weight[i], g.weight[i]);
      update(layers[i].bias, m_.bias[i], v_.bias[i], g.bias[i]);
    }
  }

 private:
  OptimizerKind kind_ = OptimizerKind::Adam;
  Scalar base_lr_ = Scalar(1e-3);
  Scalar beta1_ = Scalar(0.9);
  Scalar beta2_ = Scalar(0.999);
  Scalar eps_ = Scalar(1e-8);
  long step_ = 0;
  GradientSet<Scalar> m_, v_;
};

}  // namespace cepminer::nn
