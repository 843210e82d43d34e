#pragma once

// Two-layer feed-forward classifier over a flat parameter vector.
//
// Layout of the flat vector (all row-major, ascending index):
//   W1 (hidden x input), b1 (hidden), W2 (classes x hidden), b2 (classes)
// Hidden activation is tanh, the head is a softmax over num_classes.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "cpt/errors.hpp"
#include "cpt/random.hpp"

namespace cpt {

using Vector = std::vector<double>;

// Dense row-major matrix. Only what the fixed architecture needs.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0) : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, Vector data) : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) throw DimensionError("matrix data size does not match shape");
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const noexcept { return {data_.data() + r * cols_, cols_}; }

  const Vector& data() const noexcept { return data_; }
  Vector& data() noexcept { return data_; }

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  Vector data_;
};

struct ModelConfig {
  std::size_t input_dim = 1;
  std::size_t hidden_dim = 1;
  std::size_t num_classes = 2;
  std::uint64_t seed = 0;

  void validate() const {
    if (input_dim < 1 || hidden_dim < 1) throw DimensionError("input_dim and hidden_dim must be >= 1");
    if (num_classes < 2) throw DimensionError("num_classes must be >= 2");
  }

  std::size_t parameter_count() const noexcept {
    return input_dim * hidden_dim + hidden_dim + hidden_dim * num_classes + num_classes;
  }
};

// Flattened trainable parameters. Strong type over the raw values so that
// parameters and gradients are not mixed up at call sites.
struct ParamVector {
  Vector values;

  std::size_t size() const noexcept { return values.size(); }
  double operator[](std::size_t i) const noexcept { return values[i]; }
  double& operator[](std::size_t i) noexcept { return values[i]; }

  friend bool operator==(const ParamVector&, const ParamVector&) = default;
};

// Structured view of the parameters; flatten/unflatten are exact inverses.
struct LayerWeights {
  Matrix w1;  // hidden x input
  Vector b1;
  Matrix w2;  // classes x hidden
  Vector b2;
};

struct BatchOutput {
  Matrix logits;
  Matrix probs;
};

// Offsets of each block inside the flat vector.
struct ParamLayout {
  std::size_t w1 = 0, b1 = 0, w2 = 0, b2 = 0, total = 0;

  explicit ParamLayout(const ModelConfig& cfg)
      : w1(0),
        b1(cfg.hidden_dim * cfg.input_dim),
        w2(b1 + cfg.hidden_dim),
        b2(w2 + cfg.num_classes * cfg.hidden_dim),
        total(b2 + cfg.num_classes) {}
};

// Row-wise softmax with max subtraction.
inline Matrix softmax_rows(const Matrix& logits) {
  Matrix probs(logits.rows(), logits.cols());
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    auto z = logits.row(r);
    double mx = z[0];
    for (double v : z) mx = std::max(mx, v);
    double total = 0.0;
    auto p = probs.row(r);
    for (std::size_t k = 0; k < z.size(); ++k) {
      p[k] = std::exp(z[k] - mx);
      total += p[k];
    }
    for (double& v : p) v /= total;
  }
  return probs;
}

// Pulls a gradient w.r.t. softmax probabilities back to the logits:
// dL/dz = p * (dL/dp - <dL/dp, p>).
inline Matrix softmax_backward(const Matrix& probs, const Matrix& grad_probs) {
  if (probs.rows() != grad_probs.rows() || probs.cols() != grad_probs.cols())
    throw DimensionError("softmax_backward: shape mismatch");
  Matrix out(probs.rows(), probs.cols());
  for (std::size_t r = 0; r < probs.rows(); ++r) {
    auto p = probs.row(r);
    auto g = grad_probs.row(r);
    double dot = 0.0;
    for (std::size_t k = 0; k < p.size(); ++k) dot += g[k] * p[k];
    auto o = out.row(r);
    for (std::size_t k = 0; k < p.size(); ++k) o[k] = p[k] * (g[k] - dot);
  }
  return out;
}

class Mlp {
 public:
  explicit Mlp(ModelConfig cfg) : cfg_(cfg), layout_((cfg.validate(), cfg)) {}

  const ModelConfig& config() const noexcept { return cfg_; }
  std::size_t parameter_count() const noexcept { return layout_.total; }

  // Glorot-uniform weights, zero biases; deterministic in cfg.seed.
  ParamVector init_params() const {
    ParamVector p{Vector(layout_.total, 0.0)};
    std::mt19937_64 rng(derive_seed(cfg_.seed, {stream::init}));
    auto fill = [&](std::size_t offset, std::size_t count, std::size_t fan_in, std::size_t fan_out) {
      const double s = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
      std::uniform_real_distribution<double> dist(-s, s);
      for (std::size_t i = 0; i < count; ++i) p.values[offset + i] = dist(rng);
    };
    fill(layout_.w1, cfg_.hidden_dim * cfg_.input_dim, cfg_.input_dim, cfg_.hidden_dim);
    fill(layout_.w2, cfg_.num_classes * cfg_.hidden_dim, cfg_.hidden_dim, cfg_.num_classes);
    return p;
  }

  LayerWeights unflatten(const ParamVector& p) const {
    check_params(p);
    auto slice = [&](std::size_t off, std::size_t n) {
      return Vector(p.values.begin() + static_cast<std::ptrdiff_t>(off),
                    p.values.begin() + static_cast<std::ptrdiff_t>(off + n));
    };
    return LayerWeights{
        Matrix(cfg_.hidden_dim, cfg_.input_dim, slice(layout_.w1, cfg_.hidden_dim * cfg_.input_dim)),
        slice(layout_.b1, cfg_.hidden_dim),
        Matrix(cfg_.num_classes, cfg_.hidden_dim, slice(layout_.w2, cfg_.num_classes * cfg_.hidden_dim)),
        slice(layout_.b2, cfg_.num_classes),
    };
  }

  ParamVector flatten(const LayerWeights& w) const {
    if (w.w1.rows() != cfg_.hidden_dim || w.w1.cols() != cfg_.input_dim || w.b1.size() != cfg_.hidden_dim ||
        w.w2.rows() != cfg_.num_classes || w.w2.cols() != cfg_.hidden_dim || w.b2.size() != cfg_.num_classes)
      throw DimensionError("flatten: layer shapes do not match model config");
    ParamVector p;
    p.values.reserve(layout_.total);
    p.values.insert(p.values.end(), w.w1.data().begin(), w.w1.data().end());
    p.values.insert(p.values.end(), w.b1.begin(), w.b1.end());
    p.values.insert(p.values.end(), w.w2.data().begin(), w.w2.data().end());
    p.values.insert(p.values.end(), w.b2.begin(), w.b2.end());
    return p;
  }

  BatchOutput forward(const ParamVector& p, const Matrix& x) const {
    check_params(p);
    check_input(x);
    Matrix hidden = hidden_activations(p, x);
    Matrix logits(x.rows(), cfg_.num_classes);
    const double* w2 = p.values.data() + layout_.w2;
    const double* b2 = p.values.data() + layout_.b2;
    for (std::size_t r = 0; r < x.rows(); ++r) {
      auto h = hidden.row(r);
      for (std::size_t k = 0; k < cfg_.num_classes; ++k) {
        double acc = b2[k];
        const double* wk = w2 + k * cfg_.hidden_dim;
        for (std::size_t j = 0; j < cfg_.hidden_dim; ++j) acc += wk[j] * h[j];
        logits(r, k) = acc;
      }
    }
    Matrix probs = softmax_rows(logits);
    return {std::move(logits), std::move(probs)};
  }

  // Reverse-mode gradient of a scalar loss given dL/dlogits (batch x classes).
  Vector backward(const ParamVector& p, const Matrix& x, const Matrix& grad_logits) const {
    check_params(p);
    check_input(x);
    if (grad_logits.rows() != x.rows() || grad_logits.cols() != cfg_.num_classes)
      throw DimensionError("backward: upstream gradient shape does not match batch output");

    const std::size_t in = cfg_.input_dim, hid = cfg_.hidden_dim, out = cfg_.num_classes;
    Matrix hidden = hidden_activations(p, x);
    Vector grad(layout_.total, 0.0);
    const double* w2 = p.values.data() + layout_.w2;
    Vector grad_hidden(hid);

    for (std::size_t r = 0; r < x.rows(); ++r) {
      auto h = hidden.row(r);
      auto gz = grad_logits.row(r);
      auto xr = x.row(r);
      for (std::size_t k = 0; k < out; ++k) {
        double* gw2 = grad.data() + layout_.w2 + k * hid;
        for (std::size_t j = 0; j < hid; ++j) gw2[j] += gz[k] * h[j];
        grad[layout_.b2 + k] += gz[k];
      }
      for (std::size_t j = 0; j < hid; ++j) {
        double acc = 0.0;
        for (std::size_t k = 0; k < out; ++k) acc += gz[k] * w2[k * hid + j];
        grad_hidden[j] = acc * (1.0 - h[j] * h[j]);
      }
      for (std::size_t j = 0; j < hid; ++j) {
        double* gw1 = grad.data() + layout_.w1 + j * in;
        for (std::size_t i = 0; i < in; ++i) gw1[i] += grad_hidden[j] * xr[i];
        grad[layout_.b1 + j] += grad_hidden[j];
      }
    }
    return grad;
  }

 private:
  void check_params(const ParamVector& p) const {
    if (p.size() != layout_.total)
      throw DimensionError("parameter vector has " + std::to_string(p.size()) + " entries, model expects " +
                           std::to_string(layout_.total));
  }

  void check_input(const Matrix& x) const {
    if (x.cols() != cfg_.input_dim)
      throw DimensionError("feature matrix has " + std::to_string(x.cols()) + " columns, model expects " +
                           std::to_string(cfg_.input_dim));
  }

  Matrix hidden_activations(const ParamVector& p, const Matrix& x) const {
    Matrix hidden(x.rows(), cfg_.hidden_dim);
    const double* w1 = p.values.data() + layout_.w1;
    const double* b1 = p.values.data() + layout_.b1;
    for (std::size_t r = 0; r < x.rows(); ++r) {
      auto xr = x.row(r);
      for (std::size_t j = 0; j < cfg_.hidden_dim; ++j) {
        double acc = b1[j];
        const double* wj = w1 + j * cfg_.input_dim;
        for (std::size_t i = 0; i < cfg_.input_dim; ++i) acc += wj[i] * xr[i];
        hidden(r, j) = std::tanh(acc);
      }
    }
    return hidden;
  }

  ModelConfig cfg_;
  ParamLayout layout_;
};

}  // namespace cpt
