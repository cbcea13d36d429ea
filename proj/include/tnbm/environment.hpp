#pragma once

#include "tnbm/loss.hpp"
#include "tnbm/mps.hpp"

namespace tnbm {

/// Per-site input vectors for a weighted sample set: site_inputs[i] is a
/// (site_dim x N_s) matrix whose column x is sample x's vector at site i.
/// Discrete datasets encode to one-hot columns; the continuous layer supplies
/// reduced feature vectors.
template <class Scalar = double>
struct EncodedSamples {
  std::vector<MatrixX<Scalar>> site_inputs;
  VectorX<Scalar> weights;

  Index n_sites() const { return static_cast<Index>(site_inputs.size()); }
  Index n_samples() const { return weights.size(); }

  VectorX<Scalar> site_vector(Index site, Index sample) const {
    return site_inputs[site].col(sample);
  }
};

template <class Scalar = double>
EncodedSamples<Scalar> encode(const Dataset& data, Index site_dim) {
  EncodedSamples<Scalar> enc;
  const Index n_sites = static_cast<Index>(data.n_sites());
  const Index n_samples = static_cast<Index>(data.n_samples());
  enc.site_inputs.assign(n_sites, MatrixX<Scalar>::Zero(site_dim, n_samples));
  enc.weights.resize(n_samples);
  for (Index x = 0; x < n_samples; ++x) {
    const auto& s = data.sample(x);
    enc.weights[x] = static_cast<Scalar>(s.weight);
    for (Index i = 0; i < n_sites; ++i) {
      if (s.value[i] >= site_dim) throw DimensionError("encode: symbol out of range");
      enc.site_inputs[i](s.value[i], x) = Scalar(1);
    }
  }
  return enc;
}

/// Whether the sweep's local problems see raw environment columns or columns
/// rescaled to a fixed reference norm (raw amplitudes stay recoverable via
/// the recorded scales). Rescaling leaves the plain-NLL gradient, Hessian and
/// Newton step exactly invariant; for the regularized modes it makes the
/// constants act on scale-free overlaps rather than on amplitudes whose
/// magnitude shrinks with chain length. The reference norm of 1/2 calibrates
/// the constants so that a trained model's squared overlaps sit a small
/// factor below a moderate epsilon, matching the regime the smoothing
/// schedule is designed around.
enum class EnvScaling { unit, raw };

inline constexpr double kEnvReferenceNorm = 0.5;

/// Left/right contraction stacks for every sample, positioned at one active
/// site. left(c) holds the cut-c row environments (chi_c x N_s) for c <=
/// active; right(c) the cut-c column environments for c > active.
template <class Scalar = double>
class EnvironmentCache {
public:
  EnvironmentCache(const Mps<Scalar>& mps, const EncodedSamples<Scalar>& enc)
      : n_sites_(mps.n_sites), n_samples_(enc.n_samples()) {
    if (enc.n_sites() != mps.n_sites) throw DimensionError("EnvironmentCache: site count mismatch");
    if (mps.center < 0) throw BoundaryError("EnvironmentCache: mps must have a gauge center");
    active_ = static_cast<Index>(mps.center);
    left_.assign(n_sites_ + 1, MatrixX<Scalar>());
    right_.assign(n_sites_ + 1, MatrixX<Scalar>());
    left_[0] = MatrixX<Scalar>::Ones(1, n_samples_);
    for (Index c = 0; c < active_; ++c) push_left(mps, enc, c);
    right_[n_sites_] = MatrixX<Scalar>::Ones(1, n_samples_);
    for (Index c = n_sites_ - 1; c > active_; --c) push_right(mps, enc, c);
  }

  Index active_site() const { return active_; }
  Index n_samples() const { return n_samples_; }

  const MatrixX<Scalar>& left(Index cut) const { return left_[cut]; }
  const MatrixX<Scalar>& right(Index cut) const { return right_[cut]; }

  /// Reduced environment w_x at the active site: kron(l, v, r) flattened
  /// row-major to dimension chi_l * d * chi_r, so (T, w_x) equals the raw
  /// amplitude.
  VectorX<Scalar> reduced_environment(const Mps<Scalar>& mps, const EncodedSamples<Scalar>& enc,
                                      Index sample) const {
    check_position(mps);
    const auto& core = mps.cores[active_];
    const Index cl = core.extent(0), d = core.extent(1), cr = core.extent(2);
    const auto l = left_[active_].col(sample);
    const auto r = right_[active_ + 1].col(sample);
    const VectorX<Scalar> v = enc.site_vector(active_, sample);
    VectorX<Scalar> w(cl * d * cr);
    for (Index i = 0; i < cl; ++i)
      for (Index s = 0; s < d; ++s) w.segment((i * d + s) * cr, cr) = (l[i] * v[s]) * r;
    return w;
  }

  /// Assemble the single-site optimization problem at the active site.
  LocalProblem<Scalar> local_problem(const Mps<Scalar>& mps, const EncodedSamples<Scalar>& enc,
                                     EnvScaling scaling = EnvScaling::unit) const {
    check_position(mps);
    const auto& core = mps.cores[active_];
    const Index D = core.size();
    MatrixX<Scalar> W(D, n_samples_);
    for (Index x = 0; x < n_samples_; ++x) W.col(x) = reduced_environment(mps, enc, x);
    VectorX<Scalar> scales = VectorX<Scalar>::Ones(n_samples_);
    if (scaling == EnvScaling::unit) {
      for (Index x = 0; x < n_samples_; ++x) {
        const Scalar nn = W.col(x).norm() / Scalar(kEnvReferenceNorm);
        if (nn > Scalar(0)) {
          W.col(x) /= nn;
          scales[x] = nn;
        }
      }
    }
    return LocalProblem<Scalar>(core.data(), std::move(W), enc.weights, std::move(scales));
  }

  /// Shift the gauge center one site and advance the stacks by one rank-one
  /// contraction per sample.
  void move_right(Mps<Scalar>& mps, const EncodedSamples<Scalar>& enc) {
    check_position(mps);
    if (active_ + 1 >= n_sites_) throw BoundaryError("move_right: already at right boundary");
    shift_center_right(mps);
    push_left(mps, enc, active_);
    right_[active_ + 1].resize(0, 0);
    ++active_;
  }

  void move_left(Mps<Scalar>& mps, const EncodedSamples<Scalar>& enc) {
    check_position(mps);
    if (active_ == 0) throw BoundaryError("move_left: already at left boundary");
    shift_center_left(mps);
    push_right(mps, enc, active_);
    left_[active_].resize(0, 0);
    --active_;
  }

private:
  void check_position(const Mps<Scalar>& mps) const {
    if (mps.center != static_cast<std::ptrdiff_t>(active_))
      throw std::logic_error("EnvironmentCache: cache and mps center diverged");
  }

  void push_left(const Mps<Scalar>& mps, const EncodedSamples<Scalar>& enc, Index site) {
    const auto& core = mps.cores[site];
    left_[site + 1].resize(core.extent(2), n_samples_);
    for (Index x = 0; x < n_samples_; ++x)
      left_[site + 1].col(x) =
          left_env_step(core, VectorX<Scalar>(left_[site].col(x)), enc.site_vector(site, x));
  }

  void push_right(const Mps<Scalar>& mps, const EncodedSamples<Scalar>& enc, Index site) {
    const auto& core = mps.cores[site];
    right_[site].resize(core.extent(0), n_samples_);
    for (Index x = 0; x < n_samples_; ++x)
      right_[site].col(x) =
          right_env_step(core, VectorX<Scalar>(right_[site + 1].col(x)), enc.site_vector(site, x));
  }

  Index n_sites_;
  Index n_samples_;
  Index active_;
  std::vector<MatrixX<Scalar>> left_;
  std::vector<MatrixX<Scalar>> right_;
};

/// Convenience wrapper matching the sweep's directional interface.
template <class Scalar>
void move_center(Mps<Scalar>& mps, EnvironmentCache<Scalar>& cache,
                 const EncodedSamples<Scalar>& enc, bool to_right) {
  if (to_right)
    cache.move_right(mps, enc);
  else
    cache.move_left(mps, enc);
}

}  // namespace tnbm
