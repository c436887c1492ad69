#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "twincl/error.hpp"

namespace twincl {

using Vec = std::vector<double>;

// L x d row-major matrix of token embeddings. Rows at or beyond valid_len
// are zero padding.
struct Mat {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::size_t valid_len = 0;
  std::vector<double> values;

  Mat() = default;
  Mat(std::size_t r, std::size_t c, std::size_t valid)
      : rows(r), cols(c), valid_len(valid), values(r * c, 0.0) {
    if (valid > r) throw DomainError("Mat: valid_len exceeds row count");
  }

  std::span<double> row(std::size_t i) { return {values.data() + i * cols, cols}; }
  std::span<const double> row(std::size_t i) const {
    return {values.data() + i * cols, cols};
  }
  double& operator()(std::size_t r, std::size_t c) { return values[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return values[r * cols + c]; }

  bool same_shape(const Mat& o) const { return rows == o.rows && cols == o.cols; }
  friend bool operator==(const Mat&, const Mat&) = default;
};

// All reductions below sum left to right over indices so results are
// bit-reproducible.

inline double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw DomainError("dot: dimension mismatch");
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += a[k] * b[k];
  return s;
}

inline double norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

inline bool all_finite(std::span<const double> a) {
  for (double x : a)
    if (!std::isfinite(x)) return false;
  return true;
}

inline double cosine_similarity(std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size()) throw DomainError("cosine_similarity: dimension mismatch");
  const double nu = norm(u);
  if (!(nu > 0.0)) throw DomainError("cosine_similarity: argument u has zero norm");
  const double nv = norm(v);
  if (!(nv > 0.0)) throw DomainError("cosine_similarity: argument v has zero norm");
  return dot(u, v) / (nu * nv);
}

// Cosine similarity together with the pieces needed for its gradient.
struct CosineParts {
  double value;
  double norm_u;
  double norm_v;
};

inline CosineParts cosine_parts(std::span<const double> u, std::span<const double> v) {
  const double nu = norm(u);
  const double nv = norm(v);
  if (!(nu > 0.0)) throw DomainError("cosine_similarity: argument u has zero norm");
  if (!(nv > 0.0)) throw DomainError("cosine_similarity: argument v has zero norm");
  return {dot(u, v) / (nu * nv), nu, nv};
}

// grad_u += scale * d cos(u, v) / du. Pass an empty span to skip a side.
inline void accumulate_cosine_grad(std::span<const double> u, std::span<const double> v,
                                   const CosineParts& c, double scale,
                                   std::span<double> grad_u, std::span<double> grad_v) {
  const double inv_uv = 1.0 / (c.norm_u * c.norm_v);
  if (!grad_u.empty()) {
    const double cu = c.value / (c.norm_u * c.norm_u);
    for (std::size_t k = 0; k < u.size(); ++k) grad_u[k] += scale * (v[k] * inv_uv - cu * u[k]);
  }
  if (!grad_v.empty()) {
    const double cv = c.value / (c.norm_v * c.norm_v);
    for (std::size_t k = 0; k < v.size(); ++k) grad_v[k] += scale * (u[k] * inv_uv - cv * v[k]);
  }
}

inline Vec masked_mean_pool(const Mat& m) {
  if (m.valid_len == 0) throw DomainError("masked_mean_pool: valid_len is 0");
  Vec out(m.cols, 0.0);
  for (std::size_t r = 0; r < m.valid_len; ++r) {
    const auto row = m.row(r);
    for (std::size_t c = 0; c < m.cols; ++c) out[c] += row[c];
  }
  const double n = static_cast<double>(m.valid_len);
  for (double& x : out) x /= n;
  return out;
}

// Central differences (f(p + h e_k) - f(p - h e_k)) / 2h for every k.
template <typename F>
Vec finite_diff_gradient(F&& f, Vec params, double h = 1e-4) {
  if (!(h > 0.0)) throw DomainError("finite_diff_gradient: step must be positive");
  Vec grad(params.size(), 0.0);
  auto probe = [&](std::size_t k) {
    const double value = f(std::as_const(params));
    if (!std::isfinite(value)) {
      std::ostringstream msg;
      msg << "finite_diff_gradient: non-finite value at coordinate " << k << " = "
          << params[k];
      throw NumericError(msg.str());
    }
    return value;
  };
  for (std::size_t k = 0; k < params.size(); ++k) {
    const double saved = params[k];
    params[k] = saved + h;
    const double plus = probe(k);
    params[k] = saved - h;
    const double minus = probe(k);
    params[k] = saved;
    grad[k] = (plus - minus) / (2.0 * h);
  }
  return grad;
}

}  // namespace twincl
