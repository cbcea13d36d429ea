#pragma once

#include "tnbm/environment.hpp"
#include "tnbm/newton.hpp"

#include <chrono>

namespace tnbm {

struct OptimizerKind {
  enum class Variant { steepest_descent, newton, reg_newton_smooth, reg_newton_bias };
  Variant variant = Variant::reg_newton_smooth;
  double eta = 0.05;         // steepest-descent learning rate
  double bias_shift = 0.01;  // eps_b for the bias variant

  static OptimizerKind steepest_descent(double eta = 0.05) {
    if (eta <= 0) throw std::invalid_argument("steepest_descent: eta must be positive");
    return {Variant::steepest_descent, eta, 0.01};
  }
  static OptimizerKind newton() { return {Variant::newton, 0.05, 0.01}; }
  static OptimizerKind reg_newton_smooth() { return {Variant::reg_newton_smooth, 0.05, 0.01}; }
  static OptimizerKind reg_newton_bias(double eps_b = 0.01) {
    return {Variant::reg_newton_bias, 0.05, eps_b};
  }

  /// Local objective used by this optimizer at smoothing constant eps.
  RegMode mode(double eps) const {
    switch (variant) {
      case Variant::steepest_descent:
      case Variant::newton:
        return RegMode::plain();
      case Variant::reg_newton_smooth:
        return RegMode::smooth(eps, /*abs_corr=*/true);
      case Variant::reg_newton_bias:
        return RegMode::bias(bias_shift);
    }
    return RegMode::plain();
  }
};

inline const char* to_string(OptimizerKind::Variant v) {
  switch (v) {
    case OptimizerKind::Variant::steepest_descent: return "steepest_descent";
    case OptimizerKind::Variant::newton: return "newton";
    case OptimizerKind::Variant::reg_newton_smooth: return "reg_newton_smooth";
    case OptimizerKind::Variant::reg_newton_bias: return "reg_newton_bias";
  }
  return "?";
}

/// eps(sweep k) = max(eps0 * decay^k, floor).
struct RegularizationSchedule {
  double eps0 = 0.025;
  double decay = 0.5;
  double floor = 1e-8;

  double epsilon(int sweep) const {
    double e = eps0;
    for (int i = 0; i < sweep; ++i) e *= decay;
    return std::max(e, floor);
  }
};

struct TraceRecord {
  int64_t iteration = 0;  // global single-site step counter
  int sweep = 0;
  int site = 0;
  double nll = 0.0;       // unregularized Eq.-1 metric, always
  double reg_loss = 0.0;  // mode-specific loss at the eps in force
  double epsilon = 0.0;
  int inner_iters = 0;
  double seconds = 0.0;
  bool skipped = false;   // singular kind-none step skipped
};

using LossTrace = std::vector<TraceRecord>;

struct TrainOptions {
  OptimizerKind optimizer;
  RegularizationSchedule schedule;
  int n_sweeps = 5;
  NewtonConfig newton;
  EnvScaling env_scaling = EnvScaling::unit;
  bool timing = false;  // measured wall time breaks byte-for-byte determinism
};

/// One optimizer step on the active-site tensor. The MPS stays unit-norm
/// because the updated core is the retracted (unit) tensor in canonical
/// gauge. A kind-none singularity skips the step and flags the record.
template <class Scalar>
TraceRecord single_site_step(Mps<Scalar>& mps, const EnvironmentCache<Scalar>& cache,
                             const EncodedSamples<Scalar>& enc, Index site,
                             const OptimizerKind& opt, double eps, const NewtonConfig& cfg,
                             EnvScaling scaling = EnvScaling::unit) {
  if (cache.active_site() != site || mps.center != static_cast<std::ptrdiff_t>(site))
    throw std::logic_error("single_site_step: mps/cache not positioned at the requested site");
  LocalProblem<Scalar> p = cache.local_problem(mps, enc, scaling);
  const RegMode mode = opt.mode(eps);

  TraceRecord rec;
  rec.site = static_cast<int>(site);
  rec.epsilon = eps;
  try {
    if (opt.variant == OptimizerKind::Variant::steepest_descent) {
      TangentVector<Scalar> g = grad_projected(p, mode);
      g.components *= -Scalar(opt.eta);
      p.set_center(retract(p.center(), g));
    } else {
      NewtonStepResult<Scalar> r = newton_step(p, mode, cfg);
      rec.inner_iters = r.inner_iters;
      p.set_center(retract(p.center(), r.step));
    }
    mps.cores[site].data() = p.center();
  } catch (const SingularOverlapError&) {
    rec.skipped = true;
  }
  rec.nll = p.raw_nll().value;
  rec.reg_loss = local_loss(p, mode).value;
  return rec;
}

/// One forward (0 .. N-1) and backward (N-1 .. 0) pass; the end sites are
/// optimized once each, giving 2N-1 site visits. The unregularized NLL after
/// every visit comes straight from the cached overlaps.
template <class Scalar>
void sweep_epoch(Mps<Scalar>& mps, EnvironmentCache<Scalar>& cache,
                 const EncodedSamples<Scalar>& enc, const TrainOptions& opts, int sweep_index,
                 int64_t& iteration, LossTrace& trace) {
  const double eps = opts.schedule.epsilon(sweep_index);
  const Index n = mps.n_sites;
  using Clock = std::chrono::steady_clock;

  auto visit = [&](Index site) {
    const auto t0 = Clock::now();
    TraceRecord rec =
        single_site_step(mps, cache, enc, site, opts.optimizer, eps, opts.newton, opts.env_scaling);
    rec.iteration = iteration++;
    rec.sweep = sweep_index;
    if (opts.timing)
      rec.seconds = std::chrono::duration<double>(Clock::now() - t0).count();
    trace.push_back(rec);
  };

  for (Index site = 0; site < n; ++site) {
    visit(site);
    if (site + 1 < n) cache.move_right(mps, enc);
  }
  for (Index site = n - 2; site >= 0; --site) {
    cache.move_left(mps, enc);
    visit(site);
  }
}

template <class Scalar>
struct TrainResult {
  Mps<Scalar> mps;
  LossTrace trace;
};

/// Full training run: canonicalize to site 0, then opts.n_sweeps epochs.
/// Deterministic for fixed inputs and options.
template <class Scalar>
TrainResult<Scalar> train(Mps<Scalar> mps, const EncodedSamples<Scalar>& enc,
                          const TrainOptions& opts) {
  if (opts.n_sweeps < 1) throw std::invalid_argument("train: n_sweeps must be >= 1");
  mps = canonicalize(std::move(mps), 0);
  normalize_center(mps);
  EnvironmentCache<Scalar> cache(mps, enc);
  LossTrace trace;
  trace.reserve(static_cast<size_t>(opts.n_sweeps) * (2 * mps.n_sites - 1));
  int64_t iteration = 0;
  for (int k = 0; k < opts.n_sweeps; ++k) sweep_epoch(mps, cache, enc, opts, k, iteration, trace);
  return {std::move(mps), std::move(trace)};
}

/// -sum_x n_x log p(x), the reported (never regularized) training metric.
template <class Scalar>
LossValue global_nll(const Mps<Scalar>& mps, const Dataset& data) {
  const Scalar nn = norm(mps);
  double acc = 0;
  for (size_t x = 0; x < data.n_samples(); ++x) {
    const Scalar a = amplitude(mps, data.sample(x).value);
    const double px = static_cast<double>((a * a) / (nn * nn));
    if (px == 0.0) return {std::numeric_limits<double>::infinity(), static_cast<std::ptrdiff_t>(x)};
    acc -= data.sample(x).weight * std::log(px);
  }
  return {acc, -1};
}

/// Mean finite NLL over one sweep's records.
inline double sweep_mean_nll(const LossTrace& trace, int sweep) {
  double acc = 0;
  int cnt = 0;
  for (const auto& r : trace)
    if (r.sweep == sweep && std::isfinite(r.nll)) {
      acc += r.nll;
      ++cnt;
    }
  return cnt ? acc / cnt : std::numeric_limits<double>::infinity();
}

}  // namespace tnbm
