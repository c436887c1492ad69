#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "twincl/augmentation.hpp"
#include "twincl/encoder.hpp"
#include "twincl/error.hpp"
#include "twincl/memory_queue.hpp"
#include "twincl/numeric.hpp"

namespace twincl {

// Diagonal: l_T pairs sentence i only with itself.
// Pairwise: l_T[i] sums the margin deviation over every j in the batch.
enum class TwinsMode { Diagonal, Pairwise };

struct LossTerms {
  bool identical = true;
  bool fraternal = true;
  bool twins = true;
};

struct ObjectiveConfig {
  double tau = 0.05;
  TwinsMode twins_mode = TwinsMode::Diagonal;
  LossTerms terms;
};

// Augmented embeddings of N sentences together with their pooled inputs
// and encoder traces. The fraternal channel may be absent.
struct TwinsBatch {
  std::vector<Twins> embeddings;
  std::vector<Vec> pooled_anchor;
  std::vector<Vec> pooled_identical;
  std::vector<Vec> pooled_fraternal;
  std::vector<EncodeTrace> anchor;
  std::vector<EncodeTrace> identical;
  std::vector<EncodeTrace> fraternal;

  std::size_t size() const noexcept { return anchor.size(); }
  bool has_fraternal() const noexcept { return !fraternal.empty(); }

  std::vector<Vec> anchor_reps() const { return outputs(anchor); }
  std::vector<Vec> identical_reps() const { return outputs(identical); }
  std::vector<Vec> fraternal_reps() const { return outputs(fraternal); }

 private:
  static std::vector<Vec> outputs(const std::vector<EncodeTrace>& traces) {
    std::vector<Vec> out;
    out.reserve(traces.size());
    for (const auto& t : traces) out.push_back(t.output);
    return out;
  }
};

inline TwinsBatch encode_batch(const EncoderParams& theta, std::vector<Twins> twins) {
  if (twins.empty()) throw DomainError("encode_batch: empty batch");
  const bool with_fraternal = twins.front().fraternal.rows > 0;
  TwinsBatch b;
  for (const Twins& t : twins) {
    if ((t.fraternal.rows > 0) != with_fraternal)
      throw DomainError("encode_batch: fraternal channel present for only part of the batch");
    b.pooled_anchor.push_back(masked_mean_pool(t.anchor));
    b.pooled_identical.push_back(masked_mean_pool(t.identical));
    b.anchor.push_back(encode_pooled(theta, b.pooled_anchor.back()));
    b.identical.push_back(encode_pooled(theta, b.pooled_identical.back()));
    if (with_fraternal) {
      b.pooled_fraternal.push_back(masked_mean_pool(t.fraternal));
      b.fraternal.push_back(encode_pooled(theta, b.pooled_fraternal.back()));
    }
  }
  b.embeddings = std::move(twins);
  return b;
}

// Innate margins e^{sim(p_i, p_j+)} - e^{sim(p_i, p_j-)} measured on the
// pooled post-dropout embeddings. Constants for differentiation.
struct Margins {
  TwinsMode mode = TwinsMode::Diagonal;
  std::size_t n = 0;
  Vec values;  // n entries (diagonal) or n * n row-major (pairwise)

  double at(std::size_t i, std::size_t j) const {
    return mode == TwinsMode::Diagonal ? values[i] : values[i * n + j];
  }
};

namespace detail {

inline void require_nonzero(const std::vector<Vec>& reps, const char* what) {
  for (std::size_t i = 0; i < reps.size(); ++i)
    if (!(norm(reps[i]) > 0.0))
      throw DomainError(std::string(what) + " representation " + std::to_string(i) +
                        " has zero norm");
}

inline double margin_value(std::span<const double> p, std::span<const double> p_pos,
                           std::span<const double> p_frat) {
  return std::exp(cosine_similarity(p, p_pos)) - std::exp(cosine_similarity(p, p_frat));
}

// Per-anchor InfoNCE with optional weighted extra negatives:
//   l_i = -log( e^{s_ii/tau} / (sum_j e^{s_ij/tau} + sum_m p_m e^{sim(h_i, H_m)/tau}) )
// Exponents are shifted by the largest weighted exponent so the
// normaliser is >= 1 and the result is exactly non-negative.
// When grad_anchor / grad_positive are non-empty, d l_i / d(rep) is added
// scaled by `weight`. Queue entries never receive gradient.
inline double info_nce(const std::vector<Vec>& anchors, const std::vector<Vec>& positives,
                       std::size_t i, const HippocampusQueue* queue, double tau, double weight,
                       std::vector<Vec>* grad_anchor, std::vector<Vec>* grad_positive) {
  const std::size_t n = positives.size();
  const std::size_t q = queue != nullptr ? queue->size() : 0;
  std::vector<CosineParts> cos_batch(n);
  std::vector<CosineParts> cos_queue(q);
  std::vector<double> log_weight_queue(q);
  double shift = -std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < n; ++j) {
    cos_batch[j] = cosine_parts(anchors[i], positives[j]);
    shift = std::max(shift, cos_batch[j].value / tau);
  }
  if (q > 0) {
    std::size_t m = 0;
    for (const Vec& entry : queue->entries()) {
      cos_queue[m] = cosine_parts(anchors[i], entry);
      log_weight_queue[m] = std::log(queue->coefficient(m + 1));
      shift = std::max(shift, cos_queue[m].value / tau + log_weight_queue[m]);
      ++m;
    }
  }
  std::vector<double> e_batch(n);
  std::vector<double> e_queue(q);
  double z = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    e_batch[j] = std::exp(cos_batch[j].value / tau - shift);
    z += e_batch[j];
  }
  for (std::size_t m = 0; m < q; ++m) {
    e_queue[m] = std::exp(cos_queue[m].value / tau + log_weight_queue[m] - shift);
    z += e_queue[m];
  }
  const double loss = (shift - cos_batch[i].value / tau) + std::log(z);

  if (grad_anchor != nullptr) {
    auto& ga = (*grad_anchor)[i];
    for (std::size_t j = 0; j < n; ++j) {
      const double coeff = weight * (e_batch[j] / z - (j == i ? 1.0 : 0.0)) / tau;
      accumulate_cosine_grad(anchors[i], positives[j], cos_batch[j], coeff, ga,
                             (*grad_positive)[j]);
    }
    if (q > 0) {
      std::size_t m = 0;
      for (const Vec& entry : queue->entries()) {
        const double coeff = weight * e_queue[m] / (z * tau);
        accumulate_cosine_grad(anchors[i], entry, cos_queue[m], coeff, ga, {});
        ++m;
      }
    }
  }
  return loss;
}

// |e^{sim(h, h+)} - e^{sim(h, h-)} - M|; subgradient 0 at the kink.
inline double twins_term(const Vec& h, const Vec& h_pos, const Vec& h_frat, double margin,
                         double weight, Vec* grad_h, Vec* grad_pos, Vec* grad_frat) {
  const CosineParts a = cosine_parts(h, h_pos);
  const CosineParts b = cosine_parts(h, h_frat);
  const double ea = std::exp(a.value);
  const double eb = std::exp(b.value);
  const double r = ea - eb - margin;
  if (grad_h != nullptr && r != 0.0) {
    const double sign = r > 0.0 ? 1.0 : -1.0;
    accumulate_cosine_grad(h, h_pos, a, weight * sign * ea, *grad_h, *grad_pos);
    accumulate_cosine_grad(h, h_frat, b, -weight * sign * eb, *grad_h, *grad_frat);
  }
  return std::abs(r);
}

inline void check_tau(double tau) {
  if (!(tau > 0.0) || !std::isfinite(tau)) throw ConfigError("temperature must be > 0");
}

}  // namespace detail

inline Margins margins(const TwinsBatch& batch, TwinsMode mode = TwinsMode::Diagonal) {
  if (!batch.has_fraternal()) throw DomainError("margins: batch has no fraternal channel");
  const std::size_t n = batch.size();
  Margins out{mode, n, {}};
  for (std::size_t i = 0; i < n; ++i) {
    if (mode == TwinsMode::Diagonal) {
      out.values.push_back(detail::margin_value(batch.pooled_anchor[i], batch.pooled_identical[i],
                                                batch.pooled_fraternal[i]));
    } else {
      for (std::size_t j = 0; j < n; ++j)
        out.values.push_back(detail::margin_value(
            batch.pooled_anchor[i], batch.pooled_identical[j], batch.pooled_fraternal[j]));
    }
  }
  return out;
}

inline Vec loss_identical(const TwinsBatch& batch, const HippocampusQueue& queue, double tau) {
  detail::check_tau(tau);
  const auto h = batch.anchor_reps();
  const auto h_pos = batch.identical_reps();
  detail::require_nonzero(h, "anchor");
  detail::require_nonzero(h_pos, "identical");
  Vec out(batch.size());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = detail::info_nce(h, h_pos, i, &queue, tau, 1.0, nullptr, nullptr);
  return out;
}

inline Vec loss_fraternal(const TwinsBatch& batch, double tau) {
  detail::check_tau(tau);
  if (!batch.has_fraternal()) throw DomainError("loss_fraternal: batch has no fraternal channel");
  const auto h = batch.anchor_reps();
  const auto h_frat = batch.fraternal_reps();
  detail::require_nonzero(h, "anchor");
  detail::require_nonzero(h_frat, "fraternal");
  Vec out(batch.size());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = detail::info_nce(h, h_frat, i, nullptr, tau, 1.0, nullptr, nullptr);
  return out;
}

inline Vec loss_twins(const TwinsBatch& batch, const Margins& m) {
  if (!batch.has_fraternal()) throw DomainError("loss_twins: batch has no fraternal channel");
  if (m.n != batch.size()) throw DomainError("loss_twins: margins not aligned with batch");
  const auto h = batch.anchor_reps();
  const auto h_pos = batch.identical_reps();
  const auto h_frat = batch.fraternal_reps();
  Vec out(batch.size(), 0.0);
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (m.mode == TwinsMode::Diagonal) {
      out[i] = detail::twins_term(h[i], h_pos[i], h_frat[i], m.at(i, i), 1.0, nullptr, nullptr,
                                  nullptr);
    } else {
      for (std::size_t j = 0; j < out.size(); ++j)
        out[i] += detail::twins_term(h[i], h_pos[j], h_frat[j], m.at(i, j), 1.0, nullptr,
                                     nullptr, nullptr);
    }
  }
  return out;
}

struct LossBreakdown {
  Vec identical;
  Vec fraternal;
  Vec twins;
  double total = 0.0;

  double sum_identical() const { return sum(identical); }
  double sum_fraternal() const { return sum(fraternal); }
  double sum_twins() const { return sum(twins); }

 private:
  static double sum(const Vec& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s;
  }
};

struct ObjectiveResult {
  LossBreakdown losses;
  EncoderParams grads;
};

namespace detail {

// Shared forward (and optional backward) pass over the enabled terms.
inline LossBreakdown objective_pass(const TwinsBatch& batch, const HippocampusQueue& queue,
                                    const ObjectiveConfig& cfg, const Margins* m,
                                    std::vector<Vec>* g_anchor, std::vector<Vec>* g_pos,
                                    std::vector<Vec>* g_frat) {
  check_tau(cfg.tau);
  const std::size_t n = batch.size();
  const auto h = batch.anchor_reps();
  const auto h_pos = batch.identical_reps();
  require_nonzero(h, "anchor");
  require_nonzero(h_pos, "identical");
  const bool need_frat = cfg.terms.fraternal || cfg.terms.twins;
  if (need_frat && !batch.has_fraternal())
    throw DomainError("objective: fraternal terms enabled but batch has no fraternal channel");
  const auto h_frat = need_frat ? batch.fraternal_reps() : std::vector<Vec>{};
  if (need_frat) require_nonzero(h_frat, "fraternal");
  if (cfg.terms.twins) {
    if (m == nullptr || m->n != n) throw DomainError("objective: margins not aligned with batch");
    if (m->mode != cfg.twins_mode) throw DomainError("objective: margin mode mismatch");
  }

  LossBreakdown out{Vec(n, 0.0), Vec(n, 0.0), Vec(n, 0.0), 0.0};
  for (std::size_t i = 0; i < n; ++i) {
    if (cfg.terms.identical)
      out.identical[i] = info_nce(h, h_pos, i, &queue, cfg.tau, 1.0, g_anchor, g_pos);
    if (cfg.terms.fraternal)
      out.fraternal[i] = info_nce(h, h_frat, i, nullptr, cfg.tau, 1.0, g_anchor, g_frat);
    if (cfg.terms.twins) {
      const bool grads = g_anchor != nullptr;
      if (cfg.twins_mode == TwinsMode::Diagonal) {
        out.twins[i] = twins_term(h[i], h_pos[i], h_frat[i], m->at(i, i), 1.0,
                                  grads ? &(*g_anchor)[i] : nullptr,
                                  grads ? &(*g_pos)[i] : nullptr, grads ? &(*g_frat)[i] : nullptr);
      } else {
        for (std::size_t j = 0; j < n; ++j)
          out.twins[i] += twins_term(h[i], h_pos[j], h_frat[j], m->at(i, j), 1.0,
                                     grads ? &(*g_anchor)[i] : nullptr,
                                     grads ? &(*g_pos)[j] : nullptr,
                                     grads ? &(*g_frat)[j] : nullptr);
      }
    }
  }
  for (std::size_t i = 0; i < n; ++i)
    out.total += out.identical[i] + out.fraternal[i] + out.twins[i];
  return out;
}

}  // namespace detail

// Sum over i of the enabled l_I, l_F, l_T terms. Disabled terms are zero.
inline LossBreakdown total_loss(const TwinsBatch& batch, const HippocampusQueue& queue,
                                const ObjectiveConfig& cfg, const Margins* m) {
  return detail::objective_pass(batch, queue, cfg, m, nullptr, nullptr, nullptr);
}

// Losses plus the exact gradient of the total w.r.t. every encoder
// parameter. Margins and queue entries are constants.
inline ObjectiveResult objective_gradient(const EncoderParams& theta, const TwinsBatch& batch,
                                          const HippocampusQueue& queue,
                                          const ObjectiveConfig& cfg, const Margins* m) {
  const std::size_t n = batch.size();
  const std::size_t d_out = theta.shape.output;
  std::vector<Vec> g_anchor(n, Vec(d_out, 0.0));
  std::vector<Vec> g_pos(n, Vec(d_out, 0.0));
  std::vector<Vec> g_frat(batch.has_fraternal() ? n : 0, Vec(d_out, 0.0));
  ObjectiveResult out{detail::objective_pass(batch, queue, cfg, m, &g_anchor, &g_pos, &g_frat),
                      EncoderParams::zeros(theta.shape)};
  for (std::size_t i = 0; i < n; ++i) {
    accumulate_encode_backward(theta, batch.anchor[i], g_anchor[i], out.grads);
    accumulate_encode_backward(theta, batch.identical[i], g_pos[i], out.grads);
    if (batch.has_fraternal())
      accumulate_encode_backward(theta, batch.fraternal[i], g_frat[i], out.grads);
  }
  return out;
}

}  // namespace twincl
