#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "oracles.hpp"
#include "twincl/eval.hpp"
#include "twincl/rng.hpp"

using namespace twincl;
using Catch::Approx;

namespace {

std::vector<Vec> random_reps(Rng& rng, std::size_t n, std::size_t d) {
  std::vector<Vec> out(n, Vec(d));
  for (auto& v : out)
    for (double& x : v) x = rng.normal();
  return out;
}

// tanh(s x) / s is the identity to O(s^2) for small s.
EncoderParams identity_like(std::size_t d, double s = 1e-4) {
  EncoderParams p = EncoderParams::zeros({d, d, d});
  for (std::size_t k = 0; k < d; ++k) {
    p.w1[k * d + k] = s;
    p.w2[k * d + k] = 1.0 / s;
  }
  return p;
}

TokenIds random_tokens(Rng& rng, std::size_t vocab) {
  TokenIds t(1 + rng.index(6));
  for (TokenId& x : t) x = static_cast<TokenId>(1 + rng.index(vocab - 1));
  return t;
}

}  // namespace

TEST_CASE("spearman of monotone and reversed sequences") {
  CHECK(spearman(Vec{1, 2, 3}, Vec{10, 20, 30}) == Approx(1.0).margin(1e-15));
  CHECK(spearman(Vec{3, 2, 1}, Vec{10, 20, 30}) == Approx(-1.0).margin(1e-15));
}

TEST_CASE("spearman with ties uses average ranks") {
  const Vec pred{1, 2, 2, 3}, gold{1, 3, 2, 4};
  CHECK(average_ranks(pred) == Vec{1, 2.5, 2.5, 4});
  const double expected = oracle::spearman(pred, gold);
  CHECK(expected == Approx(0.9486832980505138).margin(1e-12));
  CHECK(spearman(pred, gold) == Approx(expected).margin(1e-12));
}

TEST_CASE("spearman matches the counting-rank oracle on random data with ties") {
  Rng rng = Rng::stream(1, "t");
  for (int k = 0; k < 300; ++k) {
    const std::size_t n = 2 + rng.index(30);
    Vec a(n), b(n);
    for (std::size_t i = 0; i < n; ++i) {
      a[i] = static_cast<double>(rng.index(6));
      b[i] = rng.normal();
    }
    a[0] = 0;
    a[1] = 5;
    CHECK(spearman(a, b) == Approx(oracle::spearman(a, b)).margin(1e-12));
  }
}

TEST_CASE("spearman is invariant to strictly increasing transforms") {
  Rng rng = Rng::stream(2, "t");
  for (int k = 0; k < 100; ++k) {
    const std::size_t n = 3 + rng.index(20);
    Vec a(n), b(n), ea(n), cb(n);
    for (std::size_t i = 0; i < n; ++i) {
      a[i] = rng.normal();
      b[i] = rng.normal();
      ea[i] = std::exp(a[i]);
      cb[i] = b[i] * b[i] * b[i] + 2.0;
    }
    CHECK(spearman(ea, cb) == Approx(spearman(a, b)).margin(1e-12));
  }
}

TEST_CASE("spearman rejects bad input") {
  CHECK_THROWS_AS(spearman(Vec{1, 2}, Vec{1, 2, 3}), DomainError);
  CHECK_THROWS_AS(spearman(Vec{1}, Vec{1}), DomainError);
  CHECK_THROWS_AS(spearman(Vec{1, 1, 1}, Vec{1, 2, 3}), DomainError);
  CHECK_THROWS_AS(spearman(Vec{1, 2, 3}, Vec{4, 4, 4}), DomainError);
}

TEST_CASE("prediction is symmetric, deterministic and 1 for identical sentences") {
  Rng rng = Rng::stream(3, "t");
  const auto table = EmbeddingTable::gaussian(32, 6, rng);
  const auto theta = EncoderParams::init({6, 7, 5}, rng);
  for (int k = 0; k < 50; ++k) {
    const StsPair p{random_tokens(rng, 32), random_tokens(rng, 32), 1.0};
    const StsPair q{p.tokens_b, p.tokens_a, 1.0};
    const double s = predict_similarity(theta, p, table, 8);
    CHECK(s == predict_similarity(theta, p, table, 8));
    CHECK(s == Approx(predict_similarity(theta, q, table, 8)).margin(1e-15));
    CHECK(predict_similarity(theta, {p.tokens_a, p.tokens_a, 5.0}, table, 8) ==
          Approx(1.0).margin(1e-12));
  }
}

TEST_CASE("identity-like head recovers the ranking of pooled-embedding cosines") {
  Rng rng = Rng::stream(4, "t");
  const std::size_t d = 8;
  const auto table = EmbeddingTable::gaussian(40, d, rng);
  std::vector<StsPair> data;
  for (int k = 0; k < 60; ++k) {
    StsPair p{random_tokens(rng, 40), random_tokens(rng, 40), 0.0};
    auto mean = [&](const TokenIds& ids) {
      std::vector<oracle::V> rows;
      for (TokenId t : ids) rows.emplace_back(table.row(t).begin(), table.row(t).end());
      oracle::V m(d, 0.0);
      for (const auto& r : rows)
        for (std::size_t c = 0; c < d; ++c) m[c] += r[c] / double(rows.size());
      return m;
    };
    p.gold = oracle::cos(mean(p.tokens_a), mean(p.tokens_b));
    data.push_back(p);
  }
  const EvalReport r = evaluate_sts(identity_like(d), data, table, 8);
  CHECK(r.n_pairs == 60);
  CHECK(r.spearman == Approx(1.0).margin(1e-12));
}

TEST_CASE("evaluation edge cases") {
  Rng rng = Rng::stream(5, "t");
  const auto table = EmbeddingTable::gaussian(32, 4, rng);
  const auto theta = EncoderParams::init({4, 4, 4}, rng);
  std::vector<StsPair> data;
  for (int k = 0; k < 20; ++k)
    data.push_back({random_tokens(rng, 32), random_tokens(rng, 32), double(rng.index(6))});
  data[0].gold = 0;
  data[1].gold = 5;
  CHECK_THROWS_AS(evaluate_sts(theta, std::vector<StsPair>{data[0]}, table, 8), DomainError);
  CHECK_THROWS_AS(evaluate_sts(theta, std::vector<StsPair>{}, table, 8), DomainError);
  std::vector<StsPair> twice = data;
  twice.insert(twice.end(), data.begin(), data.end());
  CHECK(evaluate_sts(theta, twice, table, 8).spearman ==
        Approx(evaluate_sts(theta, data, table, 8).spearman).margin(1e-12));
}

TEST_CASE("mutual information special cases") {
  const std::vector<Vec> same(5, Vec{1, 2, 3});
  CHECK(std::fabs(mutual_information(same, same, 0.05)) <= 1e-10);
  CHECK(std::fabs(mutual_information(same, same, 3.0)) <= 1e-10);

  std::vector<Vec> basis;
  for (std::size_t i = 0; i < 4; ++i) {
    Vec e(4, 0.0);
    e[i] = 1.0;
    basis.push_back(e);
  }
  const double mi = mutual_information(basis, basis, 0.05);
  // log 4 - log(1 + 3 e^{-20})
  CHECK(mi == Approx(std::log(4.0) - std::log1p(3 * std::exp(-20.0))).margin(1e-14));
  CHECK(std::fabs(mi - std::log(4.0)) <= 1e-8);
  CHECK(mi == Approx(oracle::mutual_information(basis, basis, 0.05)).margin(1e-12));

  CHECK(mutual_information(std::vector<Vec>{{1, 2}}, std::vector<Vec>{{-3, 1}}, 0.1) == 0.0);
  CHECK_THROWS_AS(mutual_information(basis, same, 0.1), DomainError);
  CHECK_THROWS_AS(mutual_information(basis, basis, 0.0), ConfigError);
}

TEST_CASE("mutual information is bounded by log N and matches the oracle") {
  Rng rng = Rng::stream(6, "t");
  for (int k = 0; k < 1000; ++k) {
    const std::size_t n = 1 + rng.index(8), d = 2 + rng.index(6);
    const auto h = random_reps(rng, n, d), hs = random_reps(rng, n, d);
    const double tau = 0.05 + rng.uniform();
    const double mi = mutual_information(h, hs, tau);
    CHECK(mi <= std::log(double(n)) + 1e-9);
    CHECK(mi == Approx(oracle::mutual_information(h, hs, tau)).margin(1e-9));
  }
}

TEST_CASE("mutual information is invariant to a common permutation") {
  Rng rng = Rng::stream(7, "t");
  for (int k = 0; k < 100; ++k) {
    const std::size_t n = 2 + rng.index(6);
    const auto h = random_reps(rng, n, 4), hs = random_reps(rng, n, 4);
    std::vector<std::size_t> perm(n);
    for (std::size_t i = 0; i < n; ++i) perm[i] = i;
    shuffle(perm, rng);
    std::vector<Vec> ph, phs;
    for (std::size_t i : perm) {
      ph.push_back(h[i]);
      phs.push_back(hs[i]);
    }
    CHECK(mutual_information(ph, phs, 0.1) == Approx(mutual_information(h, hs, 0.1)).margin(1e-12));
  }
}

TEST_CASE("task-relevant mutual information") {
  Rng rng = Rng::stream(8, "t");
  const auto table = EmbeddingTable::gaussian(32, 6, rng);
  const auto theta = EncoderParams::init({6, 6, 6}, rng);
  std::vector<StsPair> data;
  std::vector<Vec> reps;
  for (int k = 0; k < 6; ++k) {
    const TokenIds t = random_tokens(rng, 32);
    data.push_back({t, t, 5.0});
    reps.push_back(represent(theta, table, t, 8));
  }
  const double mi = task_relevant_mi(theta, data, 0.05, table, 8);
  std::vector<oracle::V> r(reps.begin(), reps.end());
  CHECK(mi == Approx(oracle::mutual_information(r, r, 0.05)).margin(1e-10));

  CHECK(task_relevant_mi(theta, std::vector<StsPair>{data[0]}, 0.05, table, 8) == 0.0);
  data[3].gold = 4.9;
  CHECK_THROWS_AS(task_relevant_mi(theta, data, 0.05, table, 8), DomainError);
}
