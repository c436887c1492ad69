#pragma once

#include <cmath>
#include <cstddef>
#include <cstdio>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "twincl/error.hpp"
#include "twincl/numeric.hpp"
#include "twincl/rng.hpp"

namespace twincl {

struct EncoderShape {
  std::size_t input = 0;
  std::size_t hidden = 0;
  std::size_t output = 0;

  friend bool operator==(const EncoderShape&, const EncoderShape&) = default;
};

// Trainable parameters of h = W2 tanh(W1 p + b1) + b2, p the masked mean
// of the (post-dropout) embedding sequence. Matrices are row-major.
struct EncoderParams {
  EncoderShape shape;
  Vec w1;  // hidden x input
  Vec b1;  // hidden
  Vec w2;  // output x hidden
  Vec b2;  // output

  static EncoderParams zeros(const EncoderShape& s) {
    if (s.input == 0 || s.hidden == 0 || s.output == 0)
      throw DomainError("EncoderParams: every dimension must be positive");
    return {s, Vec(s.hidden * s.input, 0.0), Vec(s.hidden, 0.0), Vec(s.output * s.hidden, 0.0),
            Vec(s.output, 0.0)};
  }

  // Gaussian weights with sigma = 1/sqrt(fan_in), zero biases.
  static EncoderParams init(const EncoderShape& s, Rng& rng) {
    EncoderParams p = zeros(s);
    const double s1 = 1.0 / std::sqrt(static_cast<double>(s.input));
    const double s2 = 1.0 / std::sqrt(static_cast<double>(s.hidden));
    for (double& w : p.w1) w = s1 * rng.normal();
    for (double& w : p.w2) w = s2 * rng.normal();
    return p;
  }

  std::size_t size() const { return w1.size() + b1.size() + w2.size() + b2.size(); }

  // Flat order: W1, b1, W2, b2.
  Vec flatten() const {
    Vec out;
    out.reserve(size());
    for (const Vec* part : {&w1, &b1, &w2, &b2}) out.insert(out.end(), part->begin(), part->end());
    return out;
  }

  static EncoderParams from_flat(const EncoderShape& s, std::span<const double> flat) {
    EncoderParams p = zeros(s);
    if (flat.size() != p.size()) throw DomainError("EncoderParams: flat size mismatch");
    std::size_t k = 0;
    for (Vec* part : {&p.w1, &p.b1, &p.w2, &p.b2})
      for (double& v : *part) v = flat[k++];
    return p;
  }

  bool all_finite() const {
    return twincl::all_finite(w1) && twincl::all_finite(b1) && twincl::all_finite(w2) &&
           twincl::all_finite(b2);
  }

  friend bool operator==(const EncoderParams&, const EncoderParams&) = default;
};

// Forward cache for the backward pass.
struct EncodeTrace {
  Vec pooled;
  Vec pre_activation;
  Vec hidden;
  Vec output;
};

inline EncodeTrace encode_pooled(const EncoderParams& theta, std::span<const double> pooled) {
  const auto& s = theta.shape;
  if (pooled.size() != s.input) throw DomainError("encode: input dimension mismatch");
  EncodeTrace t;
  t.pooled.assign(pooled.begin(), pooled.end());
  t.pre_activation.resize(s.hidden);
  t.hidden.resize(s.hidden);
  for (std::size_t j = 0; j < s.hidden; ++j) {
    double a = 0.0;
    for (std::size_t k = 0; k < s.input; ++k) a += theta.w1[j * s.input + k] * pooled[k];
    a += theta.b1[j];
    t.pre_activation[j] = a;
    t.hidden[j] = std::tanh(a);
  }
  t.output.resize(s.output);
  for (std::size_t o = 0; o < s.output; ++o) {
    double h = 0.0;
    for (std::size_t j = 0; j < s.hidden; ++j) h += theta.w2[o * s.hidden + j] * t.hidden[j];
    t.output[o] = h + theta.b2[o];
  }
  return t;
}

// The representation is trace.output.
inline EncodeTrace encode(const EncoderParams& theta, const Mat& emb) {
  if (emb.valid_len == 0) throw DomainError("encode: empty sequence (valid_len is 0)");
  return encode_pooled(theta, masked_mean_pool(emb));
}

// grads += d(upstream . h)/d(theta). Returns the gradient w.r.t. the pooled input.
inline Vec accumulate_encode_backward(const EncoderParams& theta, const EncodeTrace& trace,
                                      std::span<const double> upstream, EncoderParams& grads) {
  const auto& s = theta.shape;
  if (upstream.size() != s.output || trace.hidden.size() != s.hidden ||
      trace.pooled.size() != s.input || !(grads.shape == s))
    throw DomainError("encode_backward: shape mismatch");
  Vec grad_hidden(s.hidden, 0.0);
  for (std::size_t o = 0; o < s.output; ++o) {
    const double g = upstream[o];
    grads.b2[o] += g;
    for (std::size_t j = 0; j < s.hidden; ++j) {
      grads.w2[o * s.hidden + j] += g * trace.hidden[j];
      grad_hidden[j] += theta.w2[o * s.hidden + j] * g;
    }
  }
  Vec grad_input(s.input, 0.0);
  for (std::size_t j = 0; j < s.hidden; ++j) {
    const double u = trace.hidden[j];
    const double ga = grad_hidden[j] * (1.0 - u * u);
    grads.b1[j] += ga;
    for (std::size_t k = 0; k < s.input; ++k) {
      grads.w1[j * s.input + k] += ga * trace.pooled[k];
      grad_input[k] += theta.w1[j * s.input + k] * ga;
    }
  }
  return grad_input;
}

struct EncoderGrads {
  EncoderParams params;
  Vec input;
};

inline EncoderGrads encode_backward(const EncoderParams& theta, const EncodeTrace& trace,
                                    std::span<const double> upstream) {
  EncoderGrads g{EncoderParams::zeros(theta.shape), {}};
  g.input = accumulate_encode_backward(theta, trace, upstream, g.params);
  return g;
}

// theta - lr * grads. lr = 0 returns theta unchanged.
inline EncoderParams sgd_step(const EncoderParams& theta, const EncoderParams& grads, double lr) {
  if (!(lr >= 0.0) || !std::isfinite(lr)) throw ConfigError("sgd_step: learning rate must be >= 0");
  if (!(grads.shape == theta.shape)) throw DomainError("sgd_step: gradient shape mismatch");
  if (!grads.all_finite()) throw NumericError("sgd_step: non-finite gradient");
  EncoderParams out = theta;
  auto update = [lr](Vec& p, const Vec& g) {
    for (std::size_t k = 0; k < p.size(); ++k) p[k] -= lr * g[k];
  };
  update(out.w1, grads.w1);
  update(out.b1, grads.b1);
  update(out.w2, grads.w2);
  update(out.b2, grads.b2);
  return out;
}

// SGD with heavy-ball momentum: v = mu v + g; theta -= lr v.
// With mu = 0 this is exactly sgd_step.
class Sgd {
 public:
  Sgd(double lr, double momentum) : lr_(lr), momentum_(momentum) {
    if (!(lr >= 0.0) || !std::isfinite(lr)) throw ConfigError("lr must be >= 0");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must lie in [0, 1)");
  }

  // Returns the updated parameters; commits the velocity only on success.
  EncoderParams step(const EncoderParams& theta, const EncoderParams& grads) {
    if (momentum_ == 0.0) return sgd_step(theta, grads, lr_);
    if (!grads.all_finite()) throw NumericError("sgd_step: non-finite gradient");
    EncoderParams v = velocity_.size() == theta.size() ? velocity_ : EncoderParams::zeros(theta.shape);
    auto blend = [this](Vec& vel, const Vec& g) {
      for (std::size_t k = 0; k < vel.size(); ++k) vel[k] = momentum_ * vel[k] + g[k];
    };
    blend(v.w1, grads.w1);
    blend(v.b1, grads.b1);
    blend(v.w2, grads.w2);
    blend(v.b2, grads.b2);
    EncoderParams out = sgd_step(theta, v, lr_);
    velocity_ = std::move(v);
    return out;
  }

  double lr() const noexcept { return lr_; }

 private:
  double lr_;
  double momentum_;
  EncoderParams velocity_;
};

// Checkpoint layout (text, one value per line, "%.17g" so values round-trip):
//   twincl-checkpoint 1
//   <input> <hidden> <output>
//   W1 (row-major), b1, W2 (row-major), b2
inline constexpr const char* kCheckpointMagic = "twincl-checkpoint";
inline constexpr int kCheckpointVersion = 1;

inline std::string format_double(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

inline void write_checkpoint(std::ostream& out, const EncoderParams& theta) {
  out << kCheckpointMagic << ' ' << kCheckpointVersion << '\n'
      << theta.shape.input << ' ' << theta.shape.hidden << ' ' << theta.shape.output << '\n';
  for (double v : theta.flatten()) out << format_double(v) << '\n';
}

inline EncoderParams read_checkpoint(std::istream& in) {
  std::string magic;
  int version = 0;
  if (!(in >> magic >> version) || magic != kCheckpointMagic)
    throw ParseError(1, "not a twincl checkpoint");
  if (version != kCheckpointVersion)
    throw ParseError(1, "unsupported checkpoint version " + std::to_string(version));
  EncoderShape shape;
  if (!(in >> shape.input >> shape.hidden >> shape.output))
    throw ParseError(2, "missing encoder shape");
  EncoderParams theta = EncoderParams::zeros(shape);
  Vec flat(theta.size());
  for (std::size_t k = 0; k < flat.size(); ++k) {
    if (!(in >> flat[k])) throw ParseError(3 + k, "truncated parameter list");
  }
  theta = EncoderParams::from_flat(shape, flat);
  if (!theta.all_finite()) throw ParseError(3, "non-finite parameter in checkpoint");
  return theta;
}

}  // namespace twincl
