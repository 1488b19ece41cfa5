#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <vector>

#include "cicrl/common.hpp"

namespace cicrl {

/// dense(in -> hidden) + ReLU + dense(hidden -> out), parameters in one flat vector:
/// W1 (hidden x in, row-major), b1, W2 (out x hidden), b2.
class Mlp {
 public:
  Mlp() = default;
  Mlp(std::size_t in, std::size_t hidden, std::size_t out)
      : in_(in), hidden_(hidden), out_(out), params_(hidden * in + hidden + out * hidden + out, 0.0) {}

  /// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights and biases.
  static Mlp random(std::size_t in, std::size_t hidden, std::size_t out, Rng& rng) {
    Mlp m(in, hidden, out);
    std::uniform_real_distribution<double> u1(-1.0 / std::sqrt(double(in)), 1.0 / std::sqrt(double(in)));
    std::uniform_real_distribution<double> u2(-1.0 / std::sqrt(double(hidden)), 1.0 / std::sqrt(double(hidden)));
    for (std::size_t i = 0; i < m.w2_offset(); ++i) m.params_[i] = u1(rng);
    for (std::size_t i = m.w2_offset(); i < m.params_.size(); ++i) m.params_[i] = u2(rng);
    return m;
  }

  std::size_t in() const { return in_; }
  std::size_t hidden() const { return hidden_; }
  std::size_t out() const { return out_; }
  std::vector<double>& params() { return params_; }
  const std::vector<double>& params() const { return params_; }

  struct Cache {
    std::vector<double> pre;  // hidden pre-activations
    std::vector<double> h;    // ReLU outputs
    std::vector<double> y;
  };

  Cache forward(std::span<const double> x) const {
    if (x.size() != in_) throw std::invalid_argument("input size mismatch");
    Cache c{std::vector<double>(hidden_), std::vector<double>(hidden_), std::vector<double>(out_)};
    const double* w1 = params_.data();
    const double* b1 = w1 + hidden_ * in_;
    const double* w2 = b1 + hidden_;
    const double* b2 = w2 + out_ * hidden_;
    for (std::size_t j = 0; j < hidden_; ++j) {
      double s = b1[j];
      for (std::size_t i = 0; i < in_; ++i) s += w1[j * in_ + i] * x[i];
      c.pre[j] = s;
      c.h[j] = s > 0.0 ? s : 0.0;
    }
    for (std::size_t k = 0; k < out_; ++k) {
      double s = b2[k];
      for (std::size_t j = 0; j < hidden_; ++j) s += w2[k * hidden_ + j] * c.h[j];
      c.y[k] = s;
    }
    return c;
  }

  std::vector<double> predict(std::span<const double> x) const { return forward(x).y; }

  /// Accumulates d(loss)/d(params) into `grad` given d(loss)/d(y). ReLU'(0) is taken as 0.
  void backward(std::span<const double> x, const Cache& c, std::span<const double> dy, std::vector<double>& grad) const {
    if (grad.size() != params_.size()) throw std::invalid_argument("gradient size mismatch");
    const double* w2 = params_.data() + w2_offset();
    double* g_w1 = grad.data();
    double* g_b1 = g_w1 + hidden_ * in_;
    double* g_w2 = g_b1 + hidden_;
    double* g_b2 = g_w2 + out_ * hidden_;
    std::vector<double> dh(hidden_, 0.0);
    for (std::size_t k = 0; k < out_; ++k) {
      if (dy[k] == 0.0) continue;
      g_b2[k] += dy[k];
      for (std::size_t j = 0; j < hidden_; ++j) {
        g_w2[k * hidden_ + j] += dy[k] * c.h[j];
        dh[j] += dy[k] * w2[k * hidden_ + j];
      }
    }
    for (std::size_t j = 0; j < hidden_; ++j) {
      if (!(c.pre[j] > 0.0)) continue;
      g_b1[j] += dh[j];
      for (std::size_t i = 0; i < in_; ++i) g_w1[j * in_ + i] += dh[j] * x[i];
    }
  }

  std::uint64_t checksum() const {
    std::uint64_t h = 1469598103934665603ULL;
    for (double v : params_) h = fnv1a(std::string_view(reinterpret_cast<const char*>(&v), sizeof v), h);
    return h;
  }

 private:
  std::size_t w2_offset() const { return hidden_ * in_ + hidden_; }

  std::size_t in_ = 0, hidden_ = 0, out_ = 0;
  std::vector<double> params_;
};

/// Adam with bias correction.
class Adam {
 public:
  explicit Adam(std::size_t n, double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), b1_(beta1), b2_(beta2), eps_(eps), m_(n, 0.0), v_(n, 0.0) {}

  void step(std::vector<double>& params, const std::vector<double>& grad) {
    if (params.size() != m_.size() || grad.size() != m_.size()) throw std::invalid_argument("adam size mismatch");
    for (double g : grad)
      if (!std::isfinite(g)) throw std::runtime_error("non-finite gradient");
    ++t_;
    const double c1 = 1.0 - std::pow(b1_, double(t_));
    const double c2 = 1.0 - std::pow(b2_, double(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
      m_[i] = b1_ * m_[i] + (1.0 - b1_) * grad[i];
      v_[i] = b2_ * v_[i] + (1.0 - b2_) * grad[i] * grad[i];
      params[i] -= lr_ * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + eps_);
    }
  }

  long steps() const { return t_; }

 private:
  double lr_, b1_, b2_, eps_;
  long t_ = 0;
  std::vector<double> m_, v_;
};

}  // namespace cicrl
