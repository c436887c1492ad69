#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "twincl/augmentation.hpp"
#include "twincl/encoder.hpp"
#include "twincl/error.hpp"
#include "twincl/numeric.hpp"

namespace twincl {

inline constexpr double kMaxGold = 5.0;

struct StsPair {
  TokenIds tokens_a;
  TokenIds tokens_b;
  double gold = 0.0;
};

struct Prediction {
  double predicted;
  double gold;
};

struct EvalReport {
  double spearman = 0.0;
  std::size_t n_pairs = 0;
  std::vector<Prediction> predictions;
};

// Fractional ranks (1-based); tied values share the mean of their rank block.
inline Vec average_ranks(std::span<const double> values) {
  const std::size_t n = values.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  Vec ranks(n);
  std::size_t start = 0;
  while (start < n) {
    std::size_t end = start + 1;
    while (end < n && values[order[end]] == values[order[start]]) ++end;
    const double rank = 0.5 * static_cast<double>(start + 1 + end);
    for (std::size_t k = start; k < end; ++k) ranks[order[k]] = rank;
    start = end;
  }
  return ranks;
}

inline double pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw DomainError("pearson: length mismatch");
  if (x.size() < 2) throw DomainError("pearson: need at least 2 values");
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    mx += x[k];
    my += y[k];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    sxy += (x[k] - mx) * (y[k] - my);
    sxx += (x[k] - mx) * (x[k] - mx);
    syy += (y[k] - my) * (y[k] - my);
  }
  if (!(sxx > 0.0) || !(syy > 0.0)) throw DomainError("pearson: constant input");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

inline double spearman(std::span<const double> pred, std::span<const double> gold) {
  if (pred.size() != gold.size())
    throw DomainError("spearman: length mismatch (" + std::to_string(pred.size()) + " vs " +
                      std::to_string(gold.size()) + ")");
  if (pred.size() < 2) throw DomainError("spearman: need at least 2 pairs");
  auto constant = [](std::span<const double> v) {
    return std::all_of(v.begin(), v.end(), [&](double x) { return x == v.front(); });
  };
  if (constant(pred)) throw DomainError("spearman: predictions are constant");
  if (constant(gold)) throw DomainError("spearman: gold scores are constant");
  const Vec rp = average_ranks(pred);
  const Vec rg = average_ranks(gold);
  return pearson(rp, rg);
}

inline Vec represent(const EncoderParams& theta, const EmbeddingTable& table,
                     std::span<const TokenId> tokens, std::size_t max_len) {
  return encode(theta, embed_lookup(table, tokens, max_len)).output;
}

// Cosine of the two dropout-free representations.
inline double predict_similarity(const EncoderParams& theta, const StsPair& pair,
                                 const EmbeddingTable& table, std::size_t max_len) {
  return cosine_similarity(represent(theta, table, pair.tokens_a, max_len),
                           represent(theta, table, pair.tokens_b, max_len));
}

inline EvalReport evaluate_sts(const EncoderParams& theta, std::span<const StsPair> dataset,
                               const EmbeddingTable& table, std::size_t max_len) {
  if (dataset.empty()) throw DomainError("evaluate_sts: empty dataset");
  EvalReport report;
  Vec pred, gold;
  for (const StsPair& p : dataset) {
    const double s = predict_similarity(theta, p, table, max_len);
    report.predictions.push_back({s, p.gold});
    pred.push_back(s);
    gold.push_back(p.gold);
  }
  report.n_pairs = dataset.size();
  report.spearman = spearman(pred, gold);
  return report;
}

// log N + (1/N) sum_i log softmax_j(sim(h_i, h*_j) / tau)[i].
inline double mutual_information(std::span<const Vec> h, std::span<const Vec> h_star, double tau) {
  if (h.empty()) throw DomainError("mutual_information: empty input");
  if (h.size() != h_star.size()) throw DomainError("mutual_information: length mismatch");
  if (!(tau > 0.0)) throw ConfigError("temperature must be > 0");
  const std::size_t n = h.size();
  double acc = 0.0;
  Vec logits(n);
  for (std::size_t i = 0; i < n; ++i) {
    double shift = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < n; ++j) {
      logits[j] = cosine_similarity(h[i], h_star[j]) / tau;
      shift = std::max(shift, logits[j]);
    }
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) z += std::exp(logits[j] - shift);
    acc += (logits[i] - shift) - std::log(z);
  }
  return std::log(static_cast<double>(n)) + acc / static_cast<double>(n);
}

// Mutual information between the two sides of maximum-gold pairs.
inline double task_relevant_mi(const EncoderParams& theta, std::span<const StsPair> dataset,
                               double tau, const EmbeddingTable& table, std::size_t max_len) {
  if (dataset.empty()) throw DomainError("task_relevant_mi: empty dataset");
  std::vector<Vec> a, b;
  for (std::size_t k = 0; k < dataset.size(); ++k) {
    if (dataset[k].gold != kMaxGold)
      throw DomainError("task_relevant_mi: pair " + std::to_string(k) + " has gold " +
                        std::to_string(dataset[k].gold) + ", expected the maximum score");
    a.push_back(represent(theta, table, dataset[k].tokens_a, max_len));
    b.push_back(represent(theta, table, dataset[k].tokens_b, max_len));
  }
  return mutual_information(a, b, tau);
}

}  // namespace twincl
