#pragma once

#include "tnbm/loss.hpp"
#include "tnbm/mps.hpp"

#include <random>

namespace tnbm::testing {

/// Brute-force reconstruction of the full 2^N (d^N) state vector by direct
/// contraction over every basis string. Independent of the cached-environment
/// machinery; only uses amplitude's matrix chain.
inline std::vector<Bitstring> all_bitstrings(Index n_sites, Index d) {
  std::vector<Bitstring> out;
  Bitstring cur(static_cast<size_t>(n_sites), 0);
  while (true) {
    out.push_back(cur);
    Index i = n_sites - 1;
    while (i >= 0) {
      if (++cur[static_cast<size_t>(i)] < d) break;
      cur[static_cast<size_t>(i)] = 0;
      --i;
    }
    if (i < 0) break;
  }
  return out;
}

/// Exhaustive state vector via naive per-string contraction of raw cores
/// (no gauge assumptions, no environment reuse).
template <class Scalar>
VectorX<Scalar> brute_force_state(const Mps<Scalar>& mps) {
  const auto strings = all_bitstrings(mps.n_sites, mps.site_dim);
  VectorX<Scalar> psi(static_cast<Index>(strings.size()));
  for (size_t k = 0; k < strings.size(); ++k) {
    // manual chain product, written independently of amplitude()
    MatrixX<Scalar> m = MatrixX<Scalar>::Ones(1, 1);
    for (Index i = 0; i < mps.n_sites; ++i) {
      const auto& core = mps.cores[i];
      const Index cl = core.extent(0), cr = core.extent(2);
      MatrixX<Scalar> slice(cl, cr);
      for (Index a = 0; a < cl; ++a)
        for (Index b = 0; b < cr; ++b) slice(a, b) = core(a, strings[k][i], b);
      m = m * slice;
    }
    psi[static_cast<Index>(k)] = m(0, 0);
  }
  return psi;
}

struct RandomProblem {
  std::mt19937_64 rng;
  explicit RandomProblem(uint64_t seed) : rng(seed) {}

  VectorX<double> unit_vector(Index d) {
    std::normal_distribution<double> g;
    VectorX<double> v(d);
    for (Index i = 0; i < d; ++i) v[i] = g(rng);
    return v.normalized();
  }

  VectorX<double> gaussian(Index d) {
    std::normal_distribution<double> g;
    VectorX<double> v(d);
    for (Index i = 0; i < d; ++i) v[i] = g(rng);
    return v;
  }

  VectorX<double> weights(Index n) {
    std::uniform_real_distribution<double> u(0.1, 1.0);
    VectorX<double> w(n);
    for (Index i = 0; i < n; ++i) w[i] = u(rng);
    w /= w.sum();
    // exact renormalization so the sum-to-one invariant holds to rounding
    w[n - 1] += 1.0 - w.sum();
    return w;
  }

  /// LocalProblem with unit center. With min_overlap > 0 every environment is
  /// built as w = alpha T + sqrt(1 - alpha^2) t with |alpha| in
  /// [min_overlap + 0.05, 0.9], so all overlaps are bounded away from zero by
  /// construction and the instance is well conditioned.
  LocalProblem<double> local(Index d, Index n_samples, double min_overlap = 0.0) {
    VectorX<double> T = unit_vector(d);
    MatrixX<double> W(d, n_samples);
    if (min_overlap <= 0.0) {
      for (Index x = 0; x < n_samples; ++x) W.col(x) = gaussian(d).normalized();
    } else {
      std::uniform_real_distribution<double> mag(std::min(min_overlap + 0.05, 0.89), 0.9);
      std::bernoulli_distribution flip;
      for (Index x = 0; x < n_samples; ++x) {
        const double a = (flip(rng) ? 1.0 : -1.0) * mag(rng);
        W.col(x) = a * T + std::sqrt(1.0 - a * a) * tangent_at(T);
      }
    }
    return LocalProblem<double>(T, W, weights(n_samples));
  }

  VectorX<double> tangent_at(const VectorX<double>& T) {
    VectorX<double> u = gaussian(T.size());
    u -= T.dot(u) * T;
    return u.normalized();
  }
};

/// f'(0) by central differences of the sphere-restricted loss along the
/// retracted direction u.
template <class LossFn>
double sphere_directional_fd(const LossFn& f, const VectorX<double>& T, const VectorX<double>& u,
                             double h = 1e-5) {
  const VectorX<double> plus = (T + h * u).normalized();
  const VectorX<double> minus = (T - h * u).normalized();
  return (f(plus) - f(minus)) / (2 * h);
}

}  // namespace tnbm::testing
