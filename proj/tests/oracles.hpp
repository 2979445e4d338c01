#pragma once

// Independent re-implementations used as oracles by the unit tests and the
// acceptance harness.

#include <algorithm>
#include <cmath>
#include <vector>

#include "venom/tensor.hpp"

namespace venom::testing {

using LMat = std::vector<std::vector<long double>>;

// Cyclic Jacobi eigen-decomposition of a small symmetric matrix.
inline void jacobi(LMat a, std::vector<long double>& vals, LMat& vecs) {
  const std::size_t n = a.size();
  vecs.assign(n, std::vector<long double>(n, 0.0L));
  for (std::size_t i = 0; i < n; ++i) vecs[i][i] = 1.0L;
  for (int sweep = 0; sweep < 100; ++sweep) {
    long double off = 0.0L;
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) off += a[p][q] * a[p][q];
    if (off < 1e-40L) break;
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) {
        if (a[p][q] == 0.0L) continue;
        const long double theta = (a[q][q] - a[p][p]) / (2.0L * a[p][q]);
        const long double t = (theta >= 0 ? 1.0L : -1.0L) / (std::fabs(theta) + std::sqrt(theta * theta + 1.0L));
        const long double c = 1.0L / std::sqrt(t * t + 1.0L), s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const long double akp = a[k][p], akq = a[k][q];
          a[k][p] = c * akp - s * akq;
          a[k][q] = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const long double apk = a[p][k], aqk = a[q][k];
          a[p][k] = c * apk - s * aqk;
          a[q][k] = s * apk + c * aqk;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const long double vkp = vecs[k][p], vkq = vecs[k][q];
          vecs[k][p] = c * vkp - s * vkq;
          vecs[k][q] = s * vkp + c * vkq;
        }
      }
  }
  vals.resize(n);
  for (std::size_t i = 0; i < n; ++i) vals[i] = a[i][i];
}

inline LMat mul(const LMat& a, const LMat& b) {
  const std::size_t n = a.size();
  LMat c(n, std::vector<long double>(n, 0.0L));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < n; ++k)
      for (std::size_t j = 0; j < n; ++j) c[i][j] += a[i][k] * b[k][j];
  return c;
}

inline long double oracle_frechet(const Tensor& a, const Tensor& b) {
  const std::size_t d = a.cols();
  auto fit = [&](const Tensor& x, std::vector<long double>& mu, LMat& cov) {
    const std::size_t n = x.rows();
    mu.assign(d, 0.0L);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < d; ++j) mu[j] += x.at(i, j);
    for (auto& m : mu) m /= n;
    cov.assign(d, std::vector<long double>(d, 0.0L));
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t p = 0; p < d; ++p)
        for (std::size_t q = 0; q < d; ++q) cov[p][q] += (x.at(i, p) - mu[p]) * (x.at(i, q) - mu[q]);
    for (std::size_t p = 0; p < d; ++p) {
      for (std::size_t q = 0; q < d; ++q) cov[p][q] /= (n - 1);
      cov[p][p] += 1e-6L;
    }
  };
  std::vector<long double> ma, mb, vals;
  LMat ca, cb, vecs;
  fit(a, ma, ca);
  fit(b, mb, cb);
  jacobi(ca, vals, vecs);
  LMat root(d, std::vector<long double>(d, 0.0L));
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j)
      for (std::size_t k = 0; k < d; ++k) root[i][j] += vecs[i][k] * std::sqrt(vals[k]) * vecs[j][k];
  jacobi(mul(mul(root, cb), root), vals, vecs);
  long double tr = 0.0L, dist = 0.0L;
  for (long double v : vals) tr += std::sqrt(std::max(v, 0.0L));
  for (std::size_t j = 0; j < d; ++j) dist += (ma[j] - mb[j]) * (ma[j] - mb[j]) + ca[j][j] + cb[j][j];
  return dist - 2.0L * tr;
}

// A straight transliteration of one pass of the pseudocode, one verdict per
// sampler step (the same x_{t-1} is classified wherever it is tested).
struct RefStep {
  bool applied;
  bool on_after;
};

inline std::vector<RefStep> reference_pass(const std::vector<bool>& verdicts, std::size_t t_start, std::size_t pass,
                                    bool& on, bool apply_on_deactivation) {
  std::vector<RefStep> out;
  const std::size_t L = verdicts.size();
  for (std::size_t idx = 0; idx < L; ++idx) {
    const std::size_t t = L - idx;
    if (pass > 2) on = true;
    const bool hit = verdicts[idx];
    if (!on && !hit) on = true;
    bool applied = false;
    if (t > 0 && t <= t_start && on) {
      if (hit) on = false;
      applied = !hit || apply_on_deactivation;
    }
    out.push_back({applied, on});
  }
  return out;
}

}  // namespace venom::testing
