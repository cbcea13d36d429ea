#pragma once

#include "tnbm/dense_tensor.hpp"

#include <cmath>
#include <limits>
#include <optional>

namespace tnbm {

class SingularOverlapError : public std::runtime_error {
public:
  SingularOverlapError(std::ptrdiff_t sample)
      : std::runtime_error("zero overlap with sample " + std::to_string(sample)),
        sample_index(sample) {}
  std::ptrdiff_t sample_index;
};

/// Which local objective the single-tensor operations evaluate.
///   none:   -sum n_x log((T,w_x)^2 / (T,T))
///   smooth: -sum n_x log((T,w_x)^2 + eps) + log(T,T)
///   bias:   -sum n_x log(((T,w_x) + eps_b)^2) + log(T,T)
/// The log(T,T) terms vanish on the unit sphere but keep loss, free gradient
/// and Hessian mutually consistent off it.
struct RegMode {
  enum class Kind { none, smooth, bias };
  Kind kind = Kind::none;
  double epsilon = 0.0;
  double bias_shift = 0.0;
  bool abs_correct = false;

  static RegMode plain() { return {}; }
  static RegMode smooth(double eps, bool abs_corr = false) {
    if (eps < 0) throw std::invalid_argument("RegMode: epsilon must be >= 0");
    return {Kind::smooth, eps, 0.0, abs_corr};
  }
  static RegMode bias(double eps_b) { return {Kind::bias, 0.0, eps_b, false}; }
};

struct LossValue {
  double value = 0.0;
  std::ptrdiff_t singular_sample = -1;  // sample index when value is infinite
  bool singular() const { return singular_sample >= 0; }
};

template <class Scalar>
struct TangentVector {
  VectorX<Scalar> base;
  VectorX<Scalar> components;
};

/// Single-site optimization data: center tensor T flattened to dimension D,
/// one environment column w_x per sample, empirical weights n_x summing to
/// one. `scales` records per-sample factors between stored environments and
/// raw ones (raw amplitude = overlap * scale); the loss formulas never use it.
template <class Scalar = double>
class LocalProblem {
public:
  LocalProblem(VectorX<Scalar> center, MatrixX<Scalar> envs, VectorX<Scalar> weights,
               VectorX<Scalar> scales = {})
      : T_(std::move(center)), W_(std::move(envs)), n_(std::move(weights)),
        scales_(std::move(scales)) {
    if (W_.rows() != T_.size()) throw DimensionError("LocalProblem: environment dimension mismatch");
    if (W_.cols() != n_.size()) throw DimensionError("LocalProblem: weight count mismatch");
    if (scales_.size() == 0) scales_ = VectorX<Scalar>::Ones(n_.size());
    if (scales_.size() != n_.size()) throw DimensionError("LocalProblem: scale count mismatch");
    if (std::abs(n_.sum() - Scalar(1)) > Scalar(1e-12))
      throw std::invalid_argument("LocalProblem: weights must sum to 1");
    overlaps_ = W_.transpose() * T_;
  }

  Index dim() const { return T_.size(); }
  Index n_samples() const { return n_.size(); }

  const VectorX<Scalar>& center() const { return T_; }
  const MatrixX<Scalar>& envs() const { return W_; }
  const VectorX<Scalar>& weights() const { return n_; }
  const VectorX<Scalar>& overlaps() const { return overlaps_; }
  const VectorX<Scalar>& scales() const { return scales_; }

  void set_center(VectorX<Scalar> T) {
    if (T.size() != W_.rows()) throw DimensionError("LocalProblem: center dimension mismatch");
    T_ = std::move(T);
    overlaps_ = W_.transpose() * T_;
  }

  /// Unregularized NLL of the raw amplitudes overlap*scale.
  LossValue raw_nll() const {
    double acc = 0;
    for (Index x = 0; x < n_.size(); ++x) {
      const double a = static_cast<double>(overlaps_[x] * scales_[x]);
      if (a == 0.0) return {std::numeric_limits<double>::infinity(), x};
      acc -= static_cast<double>(n_[x]) * std::log(a * a);
    }
    return {acc, -1};
  }

  // call counters for solver instrumentation
  size_t hvp_calls() const { return hvp_calls_; }
  size_t hess_calls() const { return hess_calls_; }
  void count_hvp() const { ++hvp_calls_; }
  void count_hess() const { ++hess_calls_; }

private:
  VectorX<Scalar> T_;
  MatrixX<Scalar> W_;
  VectorX<Scalar> n_;
  VectorX<Scalar> scales_;
  VectorX<Scalar> overlaps_;
  mutable size_t hvp_calls_ = 0;
  mutable size_t hess_calls_ = 0;
};

template <class Scalar>
LossValue local_loss(const LocalProblem<Scalar>& p, const RegMode& mode) {
  const auto& a = p.overlaps();
  const auto& n = p.weights();
  const double tt = static_cast<double>(p.center().squaredNorm());
  double acc = 0;
  switch (mode.kind) {
    case RegMode::Kind::none:
      for (Index x = 0; x < n.size(); ++x) {
        if (a[x] == Scalar(0)) return {std::numeric_limits<double>::infinity(), x};
        acc -= n[x] * std::log(static_cast<double>(a[x] * a[x]) / tt);
      }
      return {acc, -1};
    case RegMode::Kind::smooth:
      for (Index x = 0; x < n.size(); ++x)
        acc -= n[x] * std::log(static_cast<double>(a[x] * a[x]) + mode.epsilon);
      return {acc + std::log(tt), -1};
    case RegMode::Kind::bias:
      for (Index x = 0; x < n.size(); ++x) {
        const double b = static_cast<double>(a[x]) + mode.bias_shift;
        if (b == 0.0) return {std::numeric_limits<double>::infinity(), x};
        acc -= n[x] * std::log(b * b);
      }
      return {acc + std::log(tt), -1};
  }
  return {};
}

namespace detail {

// n_x * rho'(a_x) so that grad_free = 2T/(T,T) - W * coef.
template <class Scalar>
VectorX<Scalar> grad_coefficients(const LocalProblem<Scalar>& p, const RegMode& mode) {
  const auto& a = p.overlaps();
  const auto& n = p.weights();
  VectorX<Scalar> c(n.size());
  switch (mode.kind) {
    case RegMode::Kind::none:
      for (Index x = 0; x < n.size(); ++x) {
        if (a[x] == Scalar(0)) throw SingularOverlapError(x);
        c[x] = Scalar(2) * n[x] / a[x];
      }
      break;
    case RegMode::Kind::smooth:
      for (Index x = 0; x < n.size(); ++x)
        c[x] = Scalar(2) * n[x] * a[x] / (a[x] * a[x] + Scalar(mode.epsilon));
      break;
    case RegMode::Kind::bias:
      for (Index x = 0; x < n.size(); ++x) {
        const Scalar b = a[x] + Scalar(mode.bias_shift);
        if (b == Scalar(0)) throw SingularOverlapError(x);
        c[x] = Scalar(2) * n[x] / b;
      }
      break;
  }
  return c;
}

// Coefficients of the Riemannian Hessian at unit-norm T:
//   H = c0 (I - T T^T) + sum_x cs_x [Pi_T w_x][Pi_T w_x]^T
template <class Scalar>
void hessian_coefficients(const LocalProblem<Scalar>& p, const RegMode& mode, Scalar& c0,
                          VectorX<Scalar>& cs) {
  const auto& a = p.overlaps();
  const auto& n = p.weights();
  cs.resize(n.size());
  switch (mode.kind) {
    case RegMode::Kind::none:
      c0 = Scalar(2);
      for (Index x = 0; x < n.size(); ++x) {
        if (a[x] == Scalar(0)) throw SingularOverlapError(x);
        cs[x] = Scalar(2) * n[x] / (a[x] * a[x]);
      }
      break;
    case RegMode::Kind::smooth: {
      const Scalar eps = Scalar(mode.epsilon);
      c0 = Scalar(0);
      for (Index x = 0; x < n.size(); ++x) {
        const Scalar a2 = a[x] * a[x];
        c0 += Scalar(2) * n[x] * a2 / (a2 + eps);
        Scalar num = a2 - eps;
        if (mode.abs_correct) num = std::abs(num);
        cs[x] = Scalar(2) * n[x] * num / ((a2 + eps) * (a2 + eps));
      }
      break;
    }
    case RegMode::Kind::bias: {
      c0 = Scalar(0);
      for (Index x = 0; x < n.size(); ++x) {
        const Scalar b = a[x] + Scalar(mode.bias_shift);
        if (b == Scalar(0)) throw SingularOverlapError(x);
        c0 += Scalar(2) * n[x] * a[x] / b;
        cs[x] = Scalar(2) * n[x] / (b * b);
      }
      break;
    }
  }
}

}  // namespace detail

/// Free-space gradient of the local loss (includes the normalization term).
template <class Scalar>
VectorX<Scalar> grad_free(const LocalProblem<Scalar>& p, const RegMode& mode) {
  const VectorX<Scalar> c = detail::grad_coefficients(p, mode);
  const Scalar tt = p.center().squaredNorm();
  return Scalar(2) / tt * p.center() - p.envs() * c;
}

/// v minus its component along T.
template <class Scalar>
TangentVector<Scalar> project_tangent(const VectorX<Scalar>& T, const VectorX<Scalar>& v) {
  const Scalar tt = T.squaredNorm();
  if (tt == Scalar(0)) throw std::invalid_argument("project_tangent: zero base tensor");
  if (v.size() != T.size()) throw DimensionError("project_tangent: dimension mismatch");
  return {T, v - (T.dot(v) / tt) * T};
}

/// Tangent-space gradient. Computed from the closed form -Pi_T(W c): the
/// projection of the 2T/(T,T) term vanishes identically, and dropping it
/// analytically keeps the rounding floor proportional to the signal rather
/// than to ||T||. project_tangent(T, grad_free(...)) must agree to rounding.
template <class Scalar>
TangentVector<Scalar> grad_projected(const LocalProblem<Scalar>& p, const RegMode& mode) {
  const VectorX<Scalar> c = detail::grad_coefficients(p, mode);
  const VectorX<Scalar> s = p.envs() * c;
  const auto& T = p.center();
  const Scalar tt = T.squaredNorm();
  return {T, -(s - (T.dot(s) / tt) * T)};
}

/// Dense Riemannian Hessian as a symmetric D x D matrix annihilating T.
template <class Scalar>
MatrixX<Scalar> hess_dense(const LocalProblem<Scalar>& p, const RegMode& mode) {
  p.count_hess();
  Scalar c0;
  VectorX<Scalar> cs;
  detail::hessian_coefficients(p, mode, c0, cs);
  const auto& T = p.center();
  const Scalar tt = T.squaredNorm();
  const Index D = p.dim();
  MatrixX<Scalar> PW = p.envs() - (T / tt) * (T.transpose() * p.envs());
  MatrixX<Scalar> H = (PW * cs.asDiagonal()) * PW.transpose();
  H += c0 * (MatrixX<Scalar>::Identity(D, D) - (T * T.transpose()) / tt);
  return Scalar(0.5) * (H + H.transpose());
}

/// H * v without materializing H: two GEMVs, O(D * N_s) time.
template <class Scalar>
VectorX<Scalar> hvp(const LocalProblem<Scalar>& p, const RegMode& mode, const VectorX<Scalar>& v) {
  p.count_hvp();
  Scalar c0;
  VectorX<Scalar> cs;
  detail::hessian_coefficients(p, mode, c0, cs);
  const auto& T = p.center();
  const Scalar tt = T.squaredNorm();
  VectorX<Scalar> pv = v - (T.dot(v) / tt) * T;
  VectorX<Scalar> u = p.envs().transpose() * pv;
  // (Pi w_x, v) = (w_x, Pi v), so projecting v once covers both sides.
  u.array() *= cs.array();
  VectorX<Scalar> s = p.envs() * u;
  s -= (T.dot(s) / tt) * T;
  return c0 * pv + s;
}

}  // namespace tnbm
