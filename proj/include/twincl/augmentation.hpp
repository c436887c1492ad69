#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "twincl/error.hpp"
#include "twincl/numeric.hpp"
#include "twincl/rng.hpp"

namespace twincl {

using TokenId = std::uint32_t;
using TokenIds = std::vector<TokenId>;

inline constexpr TokenId kPadId = 0;

// A source sentence and its paired sentence in the fraternal "language".
// The fraternal side may be empty when the fraternal channel is unused.
struct TokenSentence {
  TokenIds tokens;
  TokenIds fraternal;

  friend bool operator==(const TokenSentence&, const TokenSentence&) = default;
};

// Frozen embedding layer. Row kPadId is always zero; nothing mutates the
// table after construction.
class EmbeddingTable {
 public:
  EmbeddingTable(std::size_t vocab_size, std::size_t dim, std::vector<double> values)
      : vocab_size_(vocab_size), dim_(dim), values_(std::move(values)) {
    if (vocab_size_ == 0 || dim_ == 0) throw DomainError("EmbeddingTable: empty shape");
    if (values_.size() != vocab_size_ * dim_)
      throw DomainError("EmbeddingTable: value count does not match vocab_size * dim");
    for (std::size_t c = 0; c < dim_; ++c) values_[kPadId * dim_ + c] = 0.0;
  }

  // Gaussian entries with sigma = 1/sqrt(dim), pad row zeroed.
  static EmbeddingTable gaussian(std::size_t vocab_size, std::size_t dim, Rng& rng) {
    std::vector<double> values(vocab_size * dim);
    const double sigma = 1.0 / std::sqrt(static_cast<double>(dim));
    for (double& v : values) v = sigma * rng.normal();
    return EmbeddingTable(vocab_size, dim, std::move(values));
  }

  std::size_t size() const noexcept { return vocab_size_; }
  std::size_t dim() const noexcept { return dim_; }
  std::span<const double> row(TokenId id) const { return {values_.data() + id * dim_, dim_}; }
  std::span<const double> values() const noexcept { return values_; }

 private:
  std::size_t vocab_size_;
  std::size_t dim_;
  std::vector<double> values_;
};

inline Mat embed_lookup(const EmbeddingTable& table, std::span<const TokenId> tokens,
                        std::size_t max_len) {
  if (tokens.size() > max_len)
    throw DomainError("embed_lookup: sentence length " + std::to_string(tokens.size()) +
                      " exceeds max_len " + std::to_string(max_len));
  Mat out(max_len, table.dim(), tokens.size());
  for (std::size_t t = 0; t < tokens.size(); ++t) {
    if (tokens[t] >= table.size())
      throw DomainError("embed_lookup: token id " + std::to_string(tokens[t]) +
                        " at position " + std::to_string(t) + " is out of vocabulary (size " +
                        std::to_string(table.size()) + ")");
    const auto src = table.row(tokens[t]);
    auto dst = out.row(t);
    for (std::size_t c = 0; c < src.size(); ++c) dst[c] = src[c];
  }
  return out;
}

// Inverted dropout mask: each entry is 0 with probability rate, otherwise
// 1 / (1 - rate).
struct DropoutMask {
  std::size_t rows = 0;
  std::size_t cols = 0;
  double rate = 0.0;
  std::vector<double> values;

  friend bool operator==(const DropoutMask&, const DropoutMask&) = default;
};

inline void check_dropout_rate(double rate) {
  if (!(rate >= 0.0 && rate < 1.0))
    throw ConfigError("dropout rate must lie in [0, 1), got " + std::to_string(rate));
}

inline DropoutMask sample_mask(std::size_t rows, std::size_t cols, double rate, Rng& rng) {
  check_dropout_rate(rate);
  DropoutMask mask{rows, cols, rate, std::vector<double>(rows * cols, 1.0)};
  if (rate == 0.0) return mask;
  const double keep = 1.0 / (1.0 - rate);
  for (double& v : mask.values) v = rng.bernoulli(rate) ? 0.0 : keep;
  return mask;
}

inline Mat apply_dropout(const Mat& m, const DropoutMask& z) {
  if (m.rows != z.rows || m.cols != z.cols)
    throw DomainError("apply_dropout: mask shape does not match embedding shape");
  Mat out = m;
  for (std::size_t k = 0; k < out.values.size(); ++k) out.values[k] *= z.values[k];
  return out;
}

// rate * y + (1 - rate) * y_frat, elementwise.
inline Mat fuse(const Mat& y, const Mat& y_frat, double rate) {
  if (!y.same_shape(y_frat)) throw DomainError("fuse: shape mismatch");
  if (!(rate >= 0.0 && rate <= 1.0))
    throw ConfigError("fusion rate must lie in [0, 1], got " + std::to_string(rate));
  Mat out(y.rows, y.cols, std::max(y.valid_len, y_frat.valid_len));
  for (std::size_t k = 0; k < out.values.size(); ++k)
    out.values[k] = rate * y.values[k] + (1.0 - rate) * y_frat.values[k];
  return out;
}

// Post-dropout embedding sequences for one sentence.
struct Twins {
  Mat anchor;
  Mat identical;
  Mat fraternal;  // empty (rows == 0) when the fraternal channel is off
};

struct TwinsOptions {
  double dropout = 0.15;
  double fusion = 0.9;
  std::size_t max_len = 32;
  bool fraternal = true;
};

// Masks are drawn in the order anchor, identical, fraternal.
// `identical_tokens`, when given, replaces the source tokens for the
// identical twin (token-level baseline augmentation).
inline Twins make_twins(const TokenSentence& s, const EmbeddingTable& source_table,
                        const EmbeddingTable& fraternal_table, const TwinsOptions& opt,
                        Rng& rng, const TokenIds* identical_tokens = nullptr) {
  check_dropout_rate(opt.dropout);
  const Mat y = embed_lookup(source_table, s.tokens, opt.max_len);
  const std::size_t rows = y.rows;
  const std::size_t cols = y.cols;

  Twins out;
  out.anchor = apply_dropout(y, sample_mask(rows, cols, opt.dropout, rng));
  if (identical_tokens != nullptr) {
    const Mat alt = embed_lookup(source_table, *identical_tokens, opt.max_len);
    out.identical = apply_dropout(alt, sample_mask(rows, cols, opt.dropout, rng));
  } else {
    out.identical = apply_dropout(y, sample_mask(rows, cols, opt.dropout, rng));
  }
  if (opt.fraternal) {
    if (s.fraternal.empty())
      throw DomainError("make_twins: fraternal tokens are required when the channel is on");
    if (fraternal_table.dim() != source_table.dim())
      throw DomainError("make_twins: embedding tables differ in dimension");
    const Mat y_frat = embed_lookup(fraternal_table, s.fraternal, opt.max_len);
    out.fraternal =
        apply_dropout(fuse(y, y_frat, opt.fusion), sample_mask(rows, cols, opt.dropout, rng));
  }
  return out;
}

enum class AugmentKind { Delete, Insert, Substitute };

// Token-level augmenters used as baselines for the embedding-level ones.
// Random tokens are drawn uniformly from [1, vocab_size).
inline TokenSentence baseline_augment(const TokenSentence& s, AugmentKind kind, double rate,
                                      std::size_t vocab_size, std::size_t max_len, Rng& rng) {
  if (s.tokens.empty()) throw DomainError("baseline_augment: empty sentence");
  if (!(rate >= 0.0 && rate <= 1.0))
    throw ConfigError("augmentation rate must lie in [0, 1]");
  if (vocab_size < 2) throw ConfigError("baseline_augment: vocabulary too small");
  auto random_token = [&] { return static_cast<TokenId>(1 + rng.index(vocab_size - 1)); };

  TokenSentence out{{}, s.fraternal};
  switch (kind) {
    case AugmentKind::Delete:
      for (TokenId t : s.tokens)
        if (!rng.bernoulli(rate)) out.tokens.push_back(t);
      if (out.tokens.empty()) out.tokens = s.tokens;  // never delete everything
      break;
    case AugmentKind::Insert:
      for (TokenId t : s.tokens) {
        out.tokens.push_back(t);
        if (rng.bernoulli(rate)) out.tokens.push_back(random_token());
      }
      break;
    case AugmentKind::Substitute:
      for (TokenId t : s.tokens) out.tokens.push_back(rng.bernoulli(rate) ? random_token() : t);
      break;
  }
  if (out.tokens.size() > max_len) out.tokens.resize(max_len);
  return out;
}

}  // namespace twincl
