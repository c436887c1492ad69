#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "twincl/augmentation.hpp"
#include "twincl/error.hpp"
#include "twincl/eval.hpp"
#include "twincl/rng.hpp"

namespace twincl {

// Desk-scale corpus with known cluster structure. Cluster c owns the core
// token ids [1 + c * core_size, 1 + (c + 1) * core_size); every other id is
// background vocabulary shared by all clusters.
struct SynthSpec {
  std::size_t n_clusters = 4;
  std::size_t sentences_per_cluster = 200;
  std::size_t vocab_size = 256;
  std::size_t core_size = 24;
  std::size_t min_len = 4;
  std::size_t max_len = 8;
  double overlap = 0.25;  // probability a token comes from the shared pool
  std::uint64_t remap_seed = 1;
  std::uint64_t corpus_seed = 2;
};

inline void validate(const SynthSpec& s) {
  if (s.n_clusters == 0) throw ConfigError("n_clusters must be >= 1");
  if (s.sentences_per_cluster == 0) throw ConfigError("sentences_per_cluster must be >= 1");
  if (s.core_size == 0) throw ConfigError("cluster_core_size must be >= 1");
  if (!(s.vocab_size > s.n_clusters * s.core_size))
    throw ConfigError("vocab_size must exceed n_clusters * cluster_core_size");
  if (s.min_len == 0 || s.min_len > s.max_len)
    throw ConfigError("sentence lengths must satisfy 1 <= min_len <= max_len");
  if (!(s.overlap >= 0.0 && s.overlap <= 1.0))
    throw ConfigError("cluster_token_overlap must lie in [0, 1]");
}

class SynthGenerator {
 public:
  explicit SynthGenerator(const SynthSpec& spec) : spec_(spec) {
    validate(spec_);
    remap_.resize(spec_.vocab_size);
    std::vector<TokenId> ids;
    for (std::size_t t = 1; t < spec_.vocab_size; ++t) ids.push_back(static_cast<TokenId>(t));
    Rng rng(spec_.remap_seed);
    shuffle(ids, rng);
    remap_[kPadId] = kPadId;
    for (std::size_t t = 1; t < spec_.vocab_size; ++t) remap_[t] = ids[t - 1];
  }

  const SynthSpec& spec() const noexcept { return spec_; }

  // Bijection on [0, vocab_size) fixing the pad id.
  TokenId remap(TokenId t) const { return remap_.at(t); }

  TokenIds fraternal_of(const TokenIds& tokens) const {
    TokenIds out;
    out.reserve(tokens.size());
    for (TokenId t : tokens) out.push_back(remap(t));
    return out;
  }

  TokenIds sample_sentence(std::size_t cluster, Rng& rng) const {
    const std::size_t len = spec_.min_len + rng.index(spec_.max_len - spec_.min_len + 1);
    TokenIds out(len);
    for (TokenId& t : out) {
      if (rng.bernoulli(spec_.overlap))
        t = static_cast<TokenId>(1 + rng.index(spec_.vocab_size - 1));
      else
        t = static_cast<TokenId>(1 + cluster * spec_.core_size + rng.index(spec_.core_size));
    }
    return out;
  }

 private:
  SynthSpec spec_;
  std::vector<TokenId> remap_;
};

// Training corpus: clusters interleaved by a seeded shuffle, fraternal side
// the token-wise remap of the source side.
inline std::vector<TokenSentence> gen_corpus(const SynthSpec& spec) {
  const SynthGenerator gen(spec);
  Rng rng = Rng::stream(spec.corpus_seed, "corpus");
  std::vector<TokenSentence> out;
  for (std::size_t c = 0; c < spec.n_clusters; ++c)
    for (std::size_t k = 0; k < spec.sentences_per_cluster; ++k) {
      TokenIds src = gen.sample_sentence(c, rng);
      TokenIds frat = gen.fraternal_of(src);
      out.push_back({std::move(src), std::move(frat)});
    }
  shuffle(out, rng);
  return out;
}

inline double jaccard(const TokenIds& a, const TokenIds& b) {
  const std::set<TokenId> sa(a.begin(), a.end());
  const std::set<TokenId> sb(b.begin(), b.end());
  std::size_t inter = 0;
  for (TokenId t : sa) inter += sb.count(t);
  const std::size_t uni = sa.size() + sb.size() - inter;
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

// 5 * Jaccard of the token sets, rounded to 2 decimals.
inline double jaccard_gold(const TokenIds& a, const TokenIds& b) {
  return std::round(kMaxGold * 100.0 * jaccard(a, b)) / 100.0;
}

// STS-style pairs: even indices within one cluster, odd indices across two
// distinct clusters (within only when there is a single cluster).
// `stream` separates dev and test draws.
inline std::vector<StsPair> gen_sts(const SynthSpec& spec, std::size_t n_pairs,
                                    std::string_view stream) {
  if (n_pairs < 2) throw ConfigError("STS sets need at least 2 pairs");
  const SynthGenerator gen(spec);
  Rng rng = Rng::stream(spec.corpus_seed, stream);
  std::vector<StsPair> out;
  for (std::size_t k = 0; k < n_pairs; ++k) {
    const std::size_t ca = rng.index(spec.n_clusters);
    std::size_t cb = ca;
    if (k % 2 == 1 && spec.n_clusters > 1) {
      cb = rng.index(spec.n_clusters - 1);
      if (cb >= ca) ++cb;
    }
    StsPair p;
    p.tokens_a = gen.sample_sentence(ca, rng);
    p.tokens_b = gen.sample_sentence(cb, rng);
    p.gold = jaccard_gold(p.tokens_a, p.tokens_b);
    out.push_back(std::move(p));
  }
  return out;
}

}  // namespace twincl
