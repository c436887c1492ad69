#include <catch2/catch_amalgamated.hpp>

#include <sstream>

#include "oracles.hpp"
#include "twincl/encoder.hpp"

using namespace twincl;
using Catch::Approx;

namespace {

Mat random_mat(Rng& rng, std::size_t rows, std::size_t cols, std::size_t valid) {
  Mat m(rows, cols, valid);
  for (std::size_t r = 0; r < valid; ++r)
    for (double& x : m.row(r)) x = rng.normal();
  return m;
}

std::vector<Vec> as_rows(const Vec& flat, std::size_t rows, std::size_t cols) {
  std::vector<Vec> out(rows, Vec(cols));
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) out[r][c] = flat[r * cols + c];
  return out;
}

}  // namespace

TEST_CASE("encode with degenerate parameters", "[encoder]") {
  Rng rng(1);
  const EncoderShape shape{3, 4, 2};
  EncoderParams theta = EncoderParams::init(shape, rng);
  std::fill(theta.w2.begin(), theta.w2.end(), 0.0);
  theta.b2 = {0.25, -1.5};
  const Mat emb = random_mat(rng, 3, 3, 2);
  CHECK(encode(theta, emb).output == theta.b2);

  EncoderParams zero_first = EncoderParams::init(shape, rng);
  std::fill(zero_first.w1.begin(), zero_first.w1.end(), 0.0);
  zero_first.b2 = {0.5, 0.75};
  const EncodeTrace t = encode(zero_first, emb);
  for (double u : t.hidden) CHECK(u == 0.0);
  CHECK(t.output == zero_first.b2);

  CHECK_THROWS_AS(encode(theta, Mat(3, 3, 0)), DomainError);
}

TEST_CASE("encode matches a straight-line transcription", "[encoder][oracle]") {
  Rng rng(21);
  for (int trial = 0; trial < 20; ++trial) {
    const EncoderShape shape{2, 2, 2};
    const EncoderParams theta = EncoderParams::init(shape, rng);
    const Mat emb = random_mat(rng, 3, 2, 1 + rng.index(3));
    const Vec h = encode(theta, emb).output;
    std::vector<Vec> rows;
    for (std::size_t r = 0; r < emb.rows; ++r) rows.emplace_back(emb.row(r).begin(), emb.row(r).end());
    const Vec expect = oracle::encode(rows, emb.valid_len, as_rows(theta.w1, 2, 2), theta.b1,
                                      as_rows(theta.w2, 2, 2), theta.b2);
    for (std::size_t k = 0; k < 2; ++k) REQUIRE(h[k] == Approx(expect[k]).margin(1e-12));
  }
}

TEST_CASE("encode is deterministic and its trace replays", "[encoder]") {
  Rng rng(2);
  const EncoderParams theta = EncoderParams::init({4, 5, 3}, rng);
  const Mat emb = random_mat(rng, 4, 4, 3);
  const EncodeTrace a = encode(theta, emb);
  const EncodeTrace b = encode(theta, emb);
  CHECK(a.output == b.output);
  CHECK(encode_pooled(theta, a.pooled).output == a.output);
}

TEST_CASE("encode_backward", "[encoder][gradient]") {
  Rng rng(3);
  const EncoderShape shape{4, 5, 3};
  const EncoderParams theta = EncoderParams::init(shape, rng);
  const Mat emb = random_mat(rng, 4, 4, 3);
  const EncodeTrace trace = encode(theta, emb);

  SECTION("zero upstream gives zero gradients") {
    const EncoderGrads g = encode_backward(theta, trace, Vec(3, 0.0));
    for (double x : g.params.flatten()) CHECK(x == 0.0);
    for (double x : g.input) CHECK(x == 0.0);
  }
  SECTION("output bias gradient equals upstream") {
    const Vec up{0.3, -1.0, 2.5};
    CHECK(encode_backward(theta, trace, up).params.b2 == up);
  }
  SECTION("matches finite differences on random configurations") {
    for (int trial = 0; trial < 20; ++trial) {
      const EncoderShape s{1 + rng.index(8), 1 + rng.index(8), 1 + rng.index(8)};
      const EncoderParams th = EncoderParams::init(s, rng);
      const Mat m = random_mat(rng, 4, s.input, 1 + rng.index(4));
      Vec up(s.output);
      for (double& u : up) u = rng.normal();
      const EncodeTrace tr = encode(th, m);
      const EncoderGrads g = encode_backward(th, tr, up);

      const Vec analytic = g.params.flatten();
      const Vec numeric = finite_diff_gradient(
          [&](const Vec& flat) { return dot(up, encode(EncoderParams::from_flat(s, flat), m).output); },
          th.flatten());
      for (std::size_t k = 0; k < analytic.size(); ++k)
        REQUIRE(std::fabs(analytic[k] - numeric[k]) <= 1e-4 * std::max(1.0, std::fabs(analytic[k])));

      const Vec numeric_in = finite_diff_gradient(
          [&](const Vec& p) { return dot(up, encode_pooled(th, p).output); }, tr.pooled);
      for (std::size_t k = 0; k < g.input.size(); ++k)
        REQUIRE(std::fabs(g.input[k] - numeric_in[k]) <= 1e-4 * std::max(1.0, std::fabs(g.input[k])));
    }
  }
  SECTION("shape mismatch") {
    CHECK_THROWS_AS(encode_backward(theta, trace, Vec(2, 1.0)), DomainError);
  }
}

TEST_CASE("sgd_step", "[encoder][sgd]") {
  const EncoderShape one{1, 1, 1};
  EncoderParams theta = EncoderParams::zeros(one);
  theta.w1 = {2.0};
  EncoderParams grads = EncoderParams::zeros(one);
  CHECK(sgd_step(theta, grads, 0.1) == theta);

  grads.w1 = {0.5};
  CHECK(sgd_step(theta, grads, 1.0).w1[0] == 1.5);
  CHECK(sgd_step(theta, grads, 0.0) == theta);

  // Frozen gradient: two steps at g1 then g2 equal one step at g1 + g2.
  Rng rng(4);
  const EncoderShape s{3, 4, 2};
  const EncoderParams start = EncoderParams::init(s, rng);
  const EncoderParams g1 = EncoderParams::init(s, rng);
  const EncoderParams g2 = EncoderParams::init(s, rng);
  const Vec f1 = g1.flatten(), f2 = g2.flatten();
  Vec sum(f1.size());
  for (std::size_t k = 0; k < sum.size(); ++k) sum[k] = f1[k] + f2[k];
  const Vec two = sgd_step(sgd_step(start, g1, 0.05), g2, 0.05).flatten();
  const Vec once = sgd_step(start, EncoderParams::from_flat(s, sum), 0.05).flatten();
  for (std::size_t k = 0; k < two.size(); ++k) REQUIRE(two[k] == Approx(once[k]).margin(1e-12));

  grads.b1 = {std::numeric_limits<double>::infinity()};
  CHECK_THROWS_AS(sgd_step(theta, grads, 0.1), NumericError);
  CHECK_THROWS_AS(sgd_step(theta, EncoderParams::zeros(one), -1.0), ConfigError);
}

TEST_CASE("momentum zero reproduces plain sgd", "[encoder][sgd]") {
  Rng rng(5);
  const EncoderShape s{2, 3, 2};
  const EncoderParams theta = EncoderParams::init(s, rng);
  const EncoderParams g = EncoderParams::init(s, rng);
  Sgd plain(0.1, 0.0);
  CHECK(plain.step(theta, g) == sgd_step(theta, g, 0.1));

  Sgd heavy(0.1, 0.5);
  const EncoderParams a = heavy.step(theta, g);
  const EncoderParams b = heavy.step(a, g);
  // Second step uses velocity 1.5 g.
  CHECK(b.w1[0] == Approx(a.w1[0] - 0.1 * 1.5 * g.w1[0]).margin(1e-14));
}

TEST_CASE("checkpoint round trip", "[encoder][checkpoint]") {
  Rng rng(6);
  const EncoderParams theta = EncoderParams::init({5, 7, 5}, rng);
  std::stringstream ss;
  write_checkpoint(ss, theta);
  const std::string text = ss.str();
  CHECK(text.rfind("twincl-checkpoint 1\n5 7 5\n", 0) == 0);
  CHECK(read_checkpoint(ss) == theta);

  std::istringstream bad("not-a-checkpoint 1\n");
  CHECK_THROWS_AS(read_checkpoint(bad), ParseError);
  std::istringstream truncated("twincl-checkpoint 1\n1 1 1\n0.5\n");
  CHECK_THROWS_AS(read_checkpoint(truncated), ParseError);
}
