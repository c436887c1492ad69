#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "twincl/augmentation.hpp"

using namespace twincl;
using Catch::Approx;

namespace {

EmbeddingTable small_table(std::uint64_t seed = 1, std::size_t vocab = 10, std::size_t dim = 4) {
  Rng rng(seed);
  return EmbeddingTable::gaussian(vocab, dim, rng);
}

}  // namespace

TEST_CASE("embedding table zeroes the pad row", "[augmentation][table]") {
  EmbeddingTable t(3, 2, {9, 9, 1, 2, 3, 4});
  CHECK(t.row(kPadId)[0] == 0.0);
  CHECK(t.row(kPadId)[1] == 0.0);
  CHECK(t.row(2)[1] == 4.0);
  CHECK_THROWS_AS(EmbeddingTable(3, 2, {1, 2, 3}), DomainError);
}

TEST_CASE("embed_lookup", "[augmentation][lookup]") {
  std::vector<double> values(5 * 2, 0.5);
  values[3 * 2] = 0.1;
  values[3 * 2 + 1] = 0.2;
  const EmbeddingTable t(5, 2, values);

  const Mat m = embed_lookup(t, TokenIds{3}, 4);
  CHECK(m.rows == 4);
  CHECK(m.valid_len == 1);
  CHECK(m(0, 0) == 0.1);
  CHECK(m(0, 1) == 0.2);
  for (std::size_t r = 1; r < 4; ++r) CHECK((m(r, 0) == 0.0 && m(r, 1) == 0.0));

  const Mat twice = embed_lookup(t, TokenIds{3, 3}, 4);
  CHECK(masked_mean_pool(twice) == Vec{0.1, 0.2});

  // The pad token embeds to zero, which downstream pooling turns into a
  // zero vector that cosine similarity rejects.
  const Mat pad = embed_lookup(t, TokenIds{kPadId}, 4);
  CHECK_THROWS_AS(cosine_similarity(masked_mean_pool(pad), Vec{1, 0}), DomainError);

  CHECK_THROWS_WITH(embed_lookup(t, TokenIds{1, 7}, 4),
                    Catch::Matchers::ContainsSubstring("position 1"));
  CHECK_THROWS_AS(embed_lookup(t, TokenIds{1, 1, 1, 1, 1}, 4), DomainError);
}

TEST_CASE("sample_mask", "[augmentation][dropout]") {
  Rng rng(4);
  const DropoutMask identity = sample_mask(3, 5, 0.0, rng);
  for (double v : identity.values) CHECK(v == 1.0);

  CHECK_THROWS_AS(sample_mask(2, 2, 1.0, rng), ConfigError);
  CHECK_THROWS_AS(sample_mask(2, 2, -0.1, rng), ConfigError);

  Rng a(99), b(99);
  CHECK(sample_mask(4, 8, 0.3, a) == sample_mask(4, 8, 0.3, b));

  // Statistical oracle: zero fraction of 1e5 entries at rate 0.5.
  Rng s(2024);
  const DropoutMask big = sample_mask(1000, 100, 0.5, s);
  std::size_t zeros = 0;
  for (double v : big.values) {
    if (v == 0.0) ++zeros;
    else REQUIRE(v == 2.0);
  }
  CHECK(static_cast<double>(zeros) / 1e5 == Approx(0.5).margin(0.01));
}

TEST_CASE("apply_dropout", "[augmentation][dropout]") {
  Mat m(2, 2, 2);
  m.values = {1, 2, 3, 4};
  Rng rng(1);
  CHECK(apply_dropout(m, sample_mask(2, 2, 0.0, rng)) == m);

  DropoutMask z{2, 2, 0.5, {0, 0, 2, 2}};
  const Mat out = apply_dropout(m, z);
  CHECK(out.values == std::vector<double>{0, 0, 6, 8});
  CHECK(out.valid_len == 2);

  CHECK_THROWS_AS(apply_dropout(m, sample_mask(3, 2, 0.1, rng)), DomainError);
}

TEST_CASE("inverted dropout preserves the expectation", "[augmentation][dropout][statistical]") {
  Mat m(2, 3, 2);
  m.values = {0.4, -1.2, 2.0, 0.7, 0.05, -0.3};
  std::vector<double> mean(m.values.size(), 0.0);
  const int seeds = 10000;
  for (int s = 0; s < seeds; ++s) {
    Rng rng(static_cast<std::uint64_t>(s));
    const Mat out = apply_dropout(m, sample_mask(2, 3, 0.5, rng));
    for (std::size_t k = 0; k < mean.size(); ++k) mean[k] += out.values[k] / seeds;
  }
  // 2% of the entry, with a small absolute floor: at rate 0.5 the relative
  // standard error over 1e4 seeds is 1%.
  for (std::size_t k = 0; k < mean.size(); ++k)
    CHECK(std::fabs(mean[k] - m.values[k]) <= 0.02 * std::fabs(m.values[k]) + 0.002);
}

TEST_CASE("fuse", "[augmentation][fusion]") {
  Mat y(2, 2, 1), f(2, 2, 2);
  y.values = {1, 0, 0, 0};
  f.values = {0, 1, 5, 5};
  CHECK(fuse(y, f, 1.0).values == y.values);
  CHECK(fuse(y, f, 0.0).values == f.values);

  const Mat mixed = fuse(y, f, 0.9);
  CHECK(mixed(0, 0) == Approx(0.9 * 1 + 0.1 * 0).margin(1e-15));
  CHECK(mixed(0, 1) == Approx(0.9 * 0 + 0.1 * 1).margin(1e-15));
  // Partially fused row: padding on the source side.
  CHECK(mixed(1, 0) == Approx(0.1 * 5).margin(1e-15));
  CHECK(mixed.valid_len == 2);

  CHECK_THROWS_AS(fuse(y, Mat(3, 2, 1), 0.5), DomainError);
  CHECK_THROWS_AS(fuse(y, f, 1.5), ConfigError);
}

TEST_CASE("self-fusion is the identity", "[augmentation][fusion][property]") {
  Rng rng(8);
  for (int trial = 0; trial < 50; ++trial) {
    Mat y(3, 4, 3);
    for (double& v : y.values) v = rng.normal();
    const double eps = rng.uniform();
    const Mat out = fuse(y, y, eps);
    for (std::size_t k = 0; k < y.values.size(); ++k)
      REQUIRE(out.values[k] == Approx(y.values[k]).margin(1e-15));
  }
}

TEST_CASE("make_twins", "[augmentation][twins]") {
  const EmbeddingTable src = small_table(1);
  const EmbeddingTable frat = small_table(2);
  const TokenSentence s{{1, 4, 7}, {3, 2, 9}};

  SECTION("rho = 0 makes identical twins equal") {
    Rng rng(5);
    const Twins t = make_twins(s, src, frat, {0.0, 0.9, 6, true}, rng);
    CHECK(t.anchor == t.identical);
    CHECK(cosine_similarity(masked_mean_pool(t.anchor), masked_mean_pool(t.identical)) ==
          Approx(1.0).margin(1e-15));
  }
  SECTION("rho = 0, epsilon = 1 makes the fraternal twin equal to the anchor") {
    Rng rng(5);
    const Twins t = make_twins(s, src, frat, {0.0, 1.0, 6, true}, rng);
    CHECK(t.fraternal == t.anchor);
  }
  SECTION("fixed seed reproduces the triple bit for bit") {
    Rng a(77), b(77);
    const Twins x = make_twins(s, src, frat, {0.15, 0.9, 6, true}, a);
    const Twins y = make_twins(s, src, frat, {0.15, 0.9, 6, true}, b);
    CHECK(x.anchor == y.anchor);
    CHECK(x.identical == y.identical);
    CHECK(x.fraternal == y.fraternal);
    CHECK_FALSE(x.anchor == x.identical);
  }
  SECTION("fraternal channel off or missing") {
    Rng rng(1);
    const Twins t = make_twins(s, src, frat, {0.1, 0.9, 6, false}, rng);
    CHECK(t.fraternal.rows == 0);
    CHECK_THROWS_AS(make_twins({{1, 2}, {}}, src, frat, {0.1, 0.9, 6, true}, rng), DomainError);
  }
}

TEST_CASE("embedding tables are never mutated by augmentation", "[augmentation][frozen]") {
  const EmbeddingTable src = small_table(1);
  const EmbeddingTable frat = small_table(2);
  const std::vector<double> before(src.values().begin(), src.values().end());
  Rng rng(3);
  for (int k = 0; k < 20; ++k) make_twins({{1, 2, 3}, {4, 5, 6}}, src, frat, {0.3, 0.5, 4, true}, rng);
  CHECK(std::equal(before.begin(), before.end(), src.values().begin()));
}

TEST_CASE("baseline augmenters", "[augmentation][baseline]") {
  const TokenSentence s{{1, 2, 3, 4, 5, 6, 7, 8, 9, 10}, {}};
  Rng rng(12);
  for (auto kind : {AugmentKind::Delete, AugmentKind::Insert, AugmentKind::Substitute})
    CHECK(baseline_augment(s, kind, 0.0, 50, 32, rng).tokens == s.tokens);

  const TokenSentence one{{7}, {}};
  for (int k = 0; k < 50; ++k)
    CHECK(baseline_augment(one, AugmentKind::Delete, 0.9, 50, 32, rng).tokens == one.tokens);

  // Statistical oracle: expected survivors 10 * 0.7 = 7.
  double total = 0.0;
  const int runs = 10000;
  for (int r = 0; r < runs; ++r) {
    Rng run_rng(static_cast<std::uint64_t>(r) + 1000);
    total += static_cast<double>(
        baseline_augment(s, AugmentKind::Delete, 0.3, 50, 32, run_rng).tokens.size());
  }
  CHECK(total / runs == Approx(7.0).margin(0.2));

  const auto inserted = baseline_augment(s, AugmentKind::Insert, 1.0, 50, 12, rng);
  CHECK(inserted.tokens.size() == 12);
  CHECK(inserted.tokens[0] == 1);
  CHECK(inserted.tokens[2] == 2);

  const auto substituted = baseline_augment(s, AugmentKind::Substitute, 1.0, 50, 32, rng);
  CHECK(substituted.tokens.size() == s.tokens.size());
  for (TokenId t : substituted.tokens) CHECK((t >= 1 && t < 50));
}
