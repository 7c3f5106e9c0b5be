#pragma once

// Small dense networks with a hand-written reverse pass, plus Adam.

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "loopsim/rng.hpp"

namespace loopsim {

// Fully connected net: tanh on hidden layers, linear output.
// Parameters are stored flat, layer by layer: W (out x in, row-major) then b (out).
class Mlp {
 public:
  Mlp() = default;
  explicit Mlp(std::vector<std::size_t> sizes) : sizes_(std::move(sizes)) {
    if (sizes_.size() < 2) throw std::invalid_argument("Mlp: need at least input and output sizes");
    for (auto s : sizes_)
      if (s == 0) throw std::invalid_argument("Mlp: zero-width layer");
    std::size_t n = 0;
    for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
      offsets_.push_back(n);
      n += sizes_[l + 1] * (sizes_[l] + 1);
    }
    params_.assign(n, 0.0);
  }

  static Mlp make(std::size_t in, std::size_t hidden, std::size_t layers, std::size_t out) {
    std::vector<std::size_t> s{in};
    for (std::size_t i = 0; i < layers; ++i) s.push_back(hidden);
    s.push_back(out);
    return Mlp(std::move(s));
  }

  // Uniform Glorot init; biases zero. The output layer is scaled by `out_scale`.
  void init(Rng& rng, double out_scale = 1.0) {
    for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
      const std::size_t in = sizes_[l], out = sizes_[l + 1];
      double lim = std::sqrt(6.0 / static_cast<double>(in + out));
      if (l + 2 == sizes_.size()) lim *= out_scale;
      double* w = &params_[offsets_[l]];
      for (std::size_t i = 0; i < in * out; ++i) w[i] = rng.uniform(-lim, lim);
      for (std::size_t i = 0; i < out; ++i) w[in * out + i] = 0.0;
    }
  }

  std::size_t input_dim() const { return sizes_.front(); }
  std::size_t output_dim() const { return sizes_.back(); }
  std::size_t num_layers() const { return sizes_.size() - 1; }
  const std::vector<std::size_t>& sizes() const { return sizes_; }
  std::size_t num_params() const { return params_.size(); }
  std::vector<double>& params() { return params_; }
  const std::vector<double>& params() const { return params_; }

  // acts[0] is the input, acts[l + 1] the output of layer l.
  struct Tape {
    std::vector<std::vector<double>> acts;
  };

  std::vector<double> forward(std::span<const double> x, Tape* tape = nullptr) const {
    if (x.size() != input_dim())
      throw std::invalid_argument("Mlp::forward: input has " + std::to_string(x.size()) + " values, expected " +
                                  std::to_string(input_dim()));
    std::vector<double> cur(x.begin(), x.end());
    if (tape) {
      tape->acts.clear();
      tape->acts.push_back(cur);
    }
    for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
      const std::size_t in = sizes_[l], out = sizes_[l + 1];
      const double* w = &params_[offsets_[l]];
      const double* b = w + in * out;
      std::vector<double> next(out);
      const bool last = l + 2 == sizes_.size();
      for (std::size_t o = 0; o < out; ++o) {
        const double* row = w + o * in;
        double z = b[o];
        for (std::size_t i = 0; i < in; ++i) z += row[i] * cur[i];
        next[o] = last ? z : std::tanh(z);
      }
      cur = std::move(next);
      if (tape) tape->acts.push_back(cur);
    }
    return cur;
  }

  // Adds d(loss)/d(params) into `grad` and returns d(loss)/d(input).
  std::vector<double> backward(const Tape& tape, std::span<const double> grad_out, std::span<double> grad) const {
    if (grad.size() != params_.size()) throw std::invalid_argument("Mlp::backward: gradient buffer size mismatch");
    if (grad_out.size() != output_dim()) throw std::invalid_argument("Mlp::backward: output gradient size mismatch");
    std::vector<double> g(grad_out.begin(), grad_out.end());
    for (std::size_t l = sizes_.size() - 1; l-- > 0;) {
      const std::size_t in = sizes_[l], out = sizes_[l + 1];
      const bool last = l + 2 == sizes_.size();
      if (!last) {
        const auto& y = tape.acts[l + 1];
        for (std::size_t o = 0; o < out; ++o) g[o] *= 1.0 - y[o] * y[o];
      }
      const double* w = &params_[offsets_[l]];
      double* gw = &grad[offsets_[l]];
      double* gb = gw + in * out;
      const auto& x = tape.acts[l];
      std::vector<double> gin(in, 0.0);
      for (std::size_t o = 0; o < out; ++o) {
        const double go = g[o];
        gb[o] += go;
        if (go == 0.0) continue;
        const double* row = w + o * in;
        double* grow = gw + o * in;
        for (std::size_t i = 0; i < in; ++i) {
          grow[i] += go * x[i];
          gin[i] += go * row[i];
        }
      }
      g = std::move(gin);
    }
    return g;
  }

  bool same_shape(const Mlp& o) const { return sizes_ == o.sizes_; }

 private:
  std::vector<std::size_t> sizes_;
  std::vector<std::size_t> offsets_;
  std::vector<double> params_;
};

// target <- tau * source + (1 - tau) * target
inline void soft_update(Mlp& target, const Mlp& source, double tau) {
  if (!target.same_shape(source)) throw std::invalid_argument("soft_update: shape mismatch");
  if (!(tau >= 0.0 && tau <= 1.0)) throw std::invalid_argument("soft_update: tau must be in [0, 1]");
  auto& t = target.params();
  const auto& s = source.params();
  if (tau == 1.0) {
    t = s;
    return;
  }
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = tau * s[i] + (1.0 - tau) * t[i];
}

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class Adam {
 public:
  Adam() = default;
  Adam(std::size_t n, AdamConfig cfg = {}) : cfg_(cfg), m_(n, 0.0), v_(n, 0.0) {
    if (!(cfg_.lr > 0.0)) throw std::invalid_argument("Adam: learning rate must be positive");
  }

  void step(std::span<double> params, std::span<const double> grad) {
    if (params.size() != m_.size() || grad.size() != m_.size()) throw std::invalid_argument("Adam: size mismatch");
    ++t_;
    const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
      m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * grad[i];
      v_[i] = cfg_.beta2 * v_[i] + (1.0 - cfg_.beta2) * grad[i] * grad[i];
      const double mh = m_[i] / c1, vh = v_[i] / c2;
      params[i] -= cfg_.lr * mh / (std::sqrt(vh) + cfg_.eps);
    }
  }

  long steps() const { return t_; }
  const AdamConfig& config() const { return cfg_; }

 private:
  AdamConfig cfg_;
  std::vector<double> m_, v_;
  long t_ = 0;
};

}  // namespace loopsim
