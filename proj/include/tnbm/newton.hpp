#pragma once

#include "tnbm/loss.hpp"

#include <Eigen/Eigenvalues>

#include <functional>
#include <optional>

namespace tnbm {

struct NewtonConfig {
  enum class Solver { dense, iterative };
  Solver solver = Solver::dense;
  double inner_tol = 1e-8;
  int max_inner_iters = 200;
  std::optional<double> step_cap;  // norm clamp, off by default
};

template <class Scalar>
struct NewtonStepResult {
  TangentVector<Scalar> step;
  Scalar residual_norm = Scalar(0);
  int inner_iters = 0;
  bool fallback_used = false;
};

/// Metric projection back to the unit sphere.
template <class Scalar>
VectorX<Scalar> retract(const VectorX<Scalar>& T, const TangentVector<Scalar>& step) {
  VectorX<Scalar> u = T + step.components;
  const Scalar nn = u.norm();
  if (nn == Scalar(0)) throw std::runtime_error("retract: vanishing sum");
  return u / nn;
}

/// Conjugate gradients on a symmetric positive (semi)definite operator,
/// started from zero so iterates stay inside the Krylov span of b. Returns
/// iterations used; `x` holds the solution, `resid` the final residual norm.
template <class Scalar, class Apply>
int cg_solve(const Apply& apply, const VectorX<Scalar>& b, VectorX<Scalar>& x, Scalar& resid,
             Scalar tol, int max_iters) {
  x = VectorX<Scalar>::Zero(b.size());
  const Scalar nb = b.norm();
  resid = nb;
  if (nb == Scalar(0)) return 0;
  VectorX<Scalar> r = b;
  VectorX<Scalar> dir = r;
  Scalar rs = r.squaredNorm();
  VectorX<Scalar> ad(b.size());
  int it = 0;
  while (it < max_iters) {
    ++it;
    ad = apply(dir);
    const Scalar d_ad = dir.dot(ad);
    if (!(d_ad > Scalar(0))) break;  // lost positive-definiteness, keep best iterate
    const Scalar alpha = rs / d_ad;
    x += alpha * dir;
    r -= alpha * ad;
    const Scalar rs_new = r.squaredNorm();
    resid = std::sqrt(rs_new);
    if (resid <= tol * nb) break;
    dir = r + (rs_new / rs) * dir;
    rs = rs_new;
  }
  return it;
}

namespace detail {

template <class Scalar>
Scalar lambda_max_estimate(const LocalProblem<Scalar>& p, const RegMode& mode) {
  VectorX<Scalar> v = VectorX<Scalar>::Ones(p.dim()).normalized();
  Scalar lam = Scalar(1);
  for (int i = 0; i < 20; ++i) {
    VectorX<Scalar> w = hvp(p, mode, v);
    lam = w.norm();
    if (lam == Scalar(0)) return Scalar(1);
    v = w / lam;
  }
  return lam;
}

template <class Scalar>
void apply_cap(TangentVector<Scalar>& step, const NewtonConfig& cfg) {
  if (!cfg.step_cap) return;
  const Scalar nn = step.components.norm();
  if (nn > Scalar(*cfg.step_cap)) step.components *= Scalar(*cfg.step_cap) / nn;
}

}  // namespace detail

/// Direct solve of Hess * step = -grad restricted to the tangent space.
/// An eigendecomposition pseudo-inverse (relative cutoff) inverts the system
/// on its numerical range: the structural T-kernel and any flat directions
/// carrying no gradient contribute nothing instead of amplifying noise.
template <class Scalar>
NewtonStepResult<Scalar> newton_step_dense(const LocalProblem<Scalar>& p, const RegMode& mode,
                                           const NewtonConfig& cfg = {}) {
  const TangentVector<Scalar> g = grad_projected(p, mode);
  NewtonStepResult<Scalar> out{{p.center(), VectorX<Scalar>::Zero(p.dim())}, Scalar(0), 0, false};
  const Scalar gn = g.components.norm();
  if (gn == Scalar(0)) return out;

  const MatrixX<Scalar> H = hess_dense(p, mode);
  Eigen::SelfAdjointEigenSolver<MatrixX<Scalar>> es(H);
  const auto& lam = es.eigenvalues();
  const auto& V = es.eigenvectors();
  const Scalar lmax = lam.cwiseAbs().maxCoeff();
  const Scalar cutoff = Scalar(1e-12) * lmax;

  if (!(lmax > Scalar(0))) {
    out.step.components = -g.components;  // zero curvature, unit-length gradient scale
    out.fallback_used = true;
    out.residual_norm = gn;
    detail::apply_cap(out.step, cfg);
    return out;
  }

  VectorX<Scalar> coef = V.transpose() * g.components;
  for (Index i = 0; i < coef.size(); ++i)
    coef[i] = (std::abs(lam[i]) > cutoff) ? -coef[i] / lam[i] : Scalar(0);
  VectorX<Scalar> delta = V * coef;
  // tangency is structural (H and g live in the tangent space); re-project to
  // scrub rounding
  delta -= (p.center().dot(delta) / p.center().squaredNorm()) * p.center();

  out.residual_norm = (H * delta + g.components).norm();
  if (!delta.allFinite() || out.residual_norm > Scalar(1e-6) * gn) {
    // singular beyond the structural kernel: gradient step scaled by curvature
    out.fallback_used = true;
    delta = -g.components / lmax;
    out.residual_norm = (H * delta + g.components).norm();
  }
  out.step.components = std::move(delta);
  detail::apply_cap(out.step, cfg);
  return out;
}

/// Matrix-free path: CG on the augmented normal equations
///   (H^2 + 4 T T^T) y = H g,   step = -y,
/// which is symmetric positive semidefinite regardless of H's spectrum and
/// enforces tangency through the rank-one term. Uses two hvp calls per
/// iteration and O(D) work vectors.
template <class Scalar>
NewtonStepResult<Scalar> newton_step_iterative(const LocalProblem<Scalar>& p, const RegMode& mode,
                                               const NewtonConfig& cfg = {}) {
  const TangentVector<Scalar> g = grad_projected(p, mode);
  NewtonStepResult<Scalar> out{{p.center(), VectorX<Scalar>::Zero(p.dim())}, Scalar(0), 0, false};
  const Scalar gn = g.components.norm();
  if (gn == Scalar(0)) return out;

  const auto& T = p.center();
  const VectorX<Scalar> b = hvp(p, mode, g.components);
  auto apply = [&](const VectorX<Scalar>& v) -> VectorX<Scalar> {
    VectorX<Scalar> hv = hvp(p, mode, v);
    VectorX<Scalar> hhv = hvp(p, mode, hv);
    hhv += Scalar(4) * T.dot(v) * T;
    return hhv;
  };
  VectorX<Scalar> y;
  Scalar aug_resid;
  out.inner_iters = cg_solve<Scalar>(apply, b, y, aug_resid, Scalar(cfg.inner_tol),
                                     cfg.max_inner_iters);
  VectorX<Scalar> delta = -y;
  delta -= (T.dot(delta) / T.squaredNorm()) * T;
  out.residual_norm = (hvp(p, mode, delta) + g.components).norm();
  if (!delta.allFinite()) {
    delta = -g.components / detail::lambda_max_estimate(p, mode);
    out.fallback_used = true;
    out.residual_norm = (hvp(p, mode, delta) + g.components).norm();
  } else if (out.residual_norm > Scalar(1e-3) * gn) {
    out.fallback_used = true;  // best iterate returned, flagged
  }
  out.step.components = std::move(delta);
  detail::apply_cap(out.step, cfg);
  return out;
}

template <class Scalar>
NewtonStepResult<Scalar> newton_step(const LocalProblem<Scalar>& p, const RegMode& mode,
                                     const NewtonConfig& cfg = {}) {
  return cfg.solver == NewtonConfig::Solver::dense ? newton_step_dense(p, mode, cfg)
                                                   : newton_step_iterative(p, mode, cfg);
}

}  // namespace tnbm
