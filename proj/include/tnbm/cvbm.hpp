#pragma once

#include "tnbm/data_io.hpp"
#include "tnbm/sweep.hpp"

#include <Eigen/SVD>

namespace tnbm {

/// Fixed feature map for a value in [0, 1]: Legendre polynomials P_0..P_{K-1}
/// evaluated at 2v - 1 and scaled by sqrt(2k + 1), which makes the family
/// orthonormal in L2[0, 1]. Orthonormality is what keeps the embedded Born
/// density normalized when the reduction stages are isometries. Values
/// outside [0, 1] are clamped.
template <class Scalar = double>
VectorX<Scalar> legendre_features(double value, Index raw_dim) {
  const double v = std::min(1.0, std::max(0.0, value));
  const double u = 2.0 * v - 1.0;
  VectorX<Scalar> f(raw_dim);
  double pk_prev = 1.0, pk = u;
  for (Index k = 0; k < raw_dim; ++k) {
    double p;
    if (k == 0)
      p = 1.0;
    else if (k == 1)
      p = u;
    else {
      p = ((2.0 * k - 1.0) * u * pk - (k - 1.0) * pk_prev) / static_cast<double>(k);
      pk_prev = pk;
      pk = p;
    }
    f[k] = static_cast<Scalar>(std::sqrt(2.0 * k + 1.0) * p);
  }
  return f;
}

/// Trainable per-site reduction from the fixed feature space to the MPS site
/// dimension; each stage keeps orthonormal columns.
template <class Scalar = double>
struct EmbeddingLayer {
  Index raw_dim = 25;
  Index reduced_dim = 3;
  std::vector<MatrixX<Scalar>> isometries;  // raw_dim x reduced_dim, one per site

  enum class Init { random, pca, identity };

  static EmbeddingLayer make(Index n_sites, Index raw_dim, Index reduced_dim, Init init,
                             uint64_t seed, const std::vector<ContinuousRecord>& records = {}) {
    if (reduced_dim > raw_dim) throw DimensionError("EmbeddingLayer: reduced_dim > raw_dim");
    EmbeddingLayer layer;
    layer.raw_dim = raw_dim;
    layer.reduced_dim = reduced_dim;
    layer.isometries.reserve(n_sites);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (Index s = 0; s < n_sites; ++s) {
      MatrixX<Scalar> iso;
      switch (init) {
        case Init::identity:
          iso = MatrixX<Scalar>::Identity(raw_dim, reduced_dim);
          break;
        case Init::random: {
          MatrixX<Scalar> g(raw_dim, reduced_dim);
          for (Index i = 0; i < raw_dim; ++i)
            for (Index j = 0; j < reduced_dim; ++j) g(i, j) = static_cast<Scalar>(gauss(rng));
          Eigen::HouseholderQR<MatrixX<Scalar>> qr(g);
          iso = qr.householderQ() * MatrixX<Scalar>::Identity(raw_dim, reduced_dim);
          break;
        }
        case Init::pca: {
          if (records.empty()) throw std::invalid_argument("EmbeddingLayer: pca init needs records");
          MatrixX<Scalar> phi(records.size(), raw_dim);
          for (size_t x = 0; x < records.size(); ++x)
            phi.row(x) = legendre_features<Scalar>(records[x].features[s], raw_dim).transpose();
          Eigen::JacobiSVD<MatrixX<Scalar>> svd(phi, Eigen::ComputeThinV);
          iso = svd.matrixV().leftCols(reduced_dim);
          break;
        }
      }
      layer.isometries.push_back(std::move(iso));
    }
    return layer;
  }
};

template <class Scalar>
VectorX<Scalar> reduce(const VectorX<Scalar>& features, const EmbeddingLayer<Scalar>& layer,
                       Index site) {
  if (features.size() != layer.raw_dim) throw DimensionError("reduce: feature dimension mismatch");
  return layer.isometries[site].transpose() * features;
}

/// Embed and reduce a record set into per-site input matrices with uniform
/// weights.
template <class Scalar = double>
EncodedSamples<Scalar> encode_continuous(const std::vector<ContinuousRecord>& records,
                                         const EmbeddingLayer<Scalar>& layer) {
  if (records.empty()) throw std::invalid_argument("encode_continuous: empty record set");
  const Index n_sites = static_cast<Index>(records[0].features.size());
  if (static_cast<Index>(layer.isometries.size()) != n_sites)
    throw DimensionError("encode_continuous: layer/record site count mismatch");
  EncodedSamples<Scalar> enc;
  enc.site_inputs.assign(n_sites, MatrixX<Scalar>(layer.reduced_dim, records.size()));
  enc.weights =
      VectorX<Scalar>::Constant(records.size(), Scalar(1) / static_cast<Scalar>(records.size()));
  for (size_t x = 0; x < records.size(); ++x) {
    if (static_cast<Index>(records[x].features.size()) != n_sites)
      throw DimensionError("encode_continuous: ragged record");
    for (Index s = 0; s < n_sites; ++s)
      enc.site_inputs[s].col(x) =
          reduce(legendre_features<Scalar>(records[x].features[s], layer.raw_dim), layer, s);
  }
  return enc;
}

/// Gradient of the mode's NLL with respect to every site isometry, one
/// descent step at rate eta, then polar projection back to orthonormal
/// columns. To stay consistent with the sweep's unit-scaled local problems,
/// the regularization constants act on per-site scale-free overlaps
/// amp / (||l|| ||v|| ||r||); the scale is treated as constant when
/// differentiating. Kind-none contributions from exactly-zero amplitudes are
/// skipped.
template <class Scalar>
void isometry_gd_step(EmbeddingLayer<Scalar>& layer, const Mps<Scalar>& mps,
                      const std::vector<ContinuousRecord>& records, const RegMode& mode,
                      double eta, EnvScaling scaling = EnvScaling::unit) {
  const Index n_sites = mps.n_sites;
  const Index n = static_cast<Index>(records.size());
  const Scalar weight = Scalar(1) / static_cast<Scalar>(n);
  std::vector<MatrixX<Scalar>> grads(n_sites);
  for (Index s = 0; s < n_sites; ++s)
    grads[s] = MatrixX<Scalar>::Zero(layer.raw_dim, layer.reduced_dim);

  std::vector<VectorX<Scalar>> phis(n_sites), vs(n_sites);
  std::vector<MatrixX<Scalar>> mats(n_sites);
  for (Index x = 0; x < n; ++x) {
    for (Index s = 0; s < n_sites; ++s) {
      phis[s] = legendre_features<Scalar>(records[x].features[s], layer.raw_dim);
      vs[s] = layer.isometries[s].transpose() * phis[s];
      mats[s] = site_matrix(mps.cores[s], vs[s]);
    }
    std::vector<VectorX<Scalar>> ls(n_sites + 1), rs(n_sites + 1);
    ls[0] = VectorX<Scalar>::Ones(1);
    for (Index s = 0; s < n_sites; ++s) ls[s + 1] = mats[s].transpose() * ls[s];
    rs[n_sites] = VectorX<Scalar>::Ones(1);
    for (Index s = n_sites - 1; s >= 0; --s) rs[s] = mats[s] * rs[s + 1];
    const Scalar amp = ls[n_sites][0];

    for (Index s = 0; s < n_sites; ++s) {
      Scalar scale = Scalar(1);
      if (scaling == EnvScaling::unit) {
        scale = ls[s].norm() * vs[s].norm() * rs[s + 1].norm() / Scalar(kEnvReferenceNorm);
        if (scale == Scalar(0)) continue;
      }
      const Scalar a = amp / scale;
      Scalar dr;
      switch (mode.kind) {
        case RegMode::Kind::none:
          if (a == Scalar(0)) continue;
          dr = Scalar(2) / a;
          break;
        case RegMode::Kind::smooth:
          dr = Scalar(2) * a / (a * a + Scalar(mode.epsilon));
          break;
        case RegMode::Kind::bias: {
          const Scalar b = a + Scalar(mode.bias_shift);
          if (b == Scalar(0)) continue;
          dr = Scalar(2) / b;
          break;
        }
        default:
          dr = Scalar(0);
      }
      // effective site vector u[k] = l^T core[:,k,:] r
      const auto& core = mps.cores[s];
      const Index cl = core.extent(0), d = core.extent(1), cr = core.extent(2);
      VectorX<Scalar> u(d);
      const Scalar* p = core.data().data();
      for (Index k = 0; k < d; ++k) {
        Eigen::Map<const MatrixRM<Scalar>, 0, Eigen::OuterStride<>> slice(
            p + k * cr, cl, cr, Eigen::OuterStride<>(d * cr));
        u[k] = ls[s].dot(slice * rs[s + 1]);
      }
      grads[s].noalias() -= (weight * dr / scale) * (phis[s] * u.transpose());
    }
  }

  for (Index s = 0; s < n_sites; ++s) {
    // norm clipping: near-pole samples (overlap close to 0 or to -eps_b) can
    // dominate the sum with 1/overlap coefficients and wreck the embedding
    const Scalar gn = grads[s].norm();
    if (gn > Scalar(10)) grads[s] *= Scalar(10) / gn;
    MatrixX<Scalar> a = layer.isometries[s] - Scalar(eta) * grads[s];
    Eigen::JacobiSVD<MatrixX<Scalar>> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
    layer.isometries[s] = svd.matrixU() * svd.matrixV().transpose();
  }
}

struct ContinuousTrainOptions {
  TrainOptions core;
  double iso_eta = 0.05;
  int iso_steps_per_visit = 15;   // during the first sweep
  int iso_steps_later = 1;        // per visit from the second sweep on
};

template <class Scalar>
struct ContinuousTrainResult {
  Mps<Scalar> mps;
  EmbeddingLayer<Scalar> layer;
  LossTrace trace;
};

/// Joint training: single-site core steps interleaved with isometry descent
/// blocks, re-embedding the records after every block. Environments are
/// rebuilt per visit since the embedding moves under the cache.
template <class Scalar>
ContinuousTrainResult<Scalar> train_continuous(Mps<Scalar> mps, EmbeddingLayer<Scalar> layer,
                                               const std::vector<ContinuousRecord>& records,
                                               const ContinuousTrainOptions& opts) {
  const Index n = mps.n_sites;
  LossTrace trace;
  int64_t iteration = 0;
  using Clock = std::chrono::steady_clock;
  EncodedSamples<Scalar> enc = encode_continuous(records, layer);

  auto visit = [&](Index site, int sweep) {
    const auto t0 = Clock::now();
    mps = canonicalize(std::move(mps), site);
    normalize_center(mps);
    EnvironmentCache<Scalar> cache(mps, enc);
    const double eps = opts.core.schedule.epsilon(sweep);
    TraceRecord rec = single_site_step(mps, cache, enc, site, opts.core.optimizer, eps,
                                       opts.core.newton, opts.core.env_scaling);
    const int iso_steps = sweep == 0 ? opts.iso_steps_per_visit : opts.iso_steps_later;
    for (int i = 0; i < iso_steps; ++i)
      isometry_gd_step(layer, mps, records, opts.core.optimizer.mode(eps), opts.iso_eta,
                       opts.core.env_scaling);
    if (iso_steps > 0) {
      enc = encode_continuous(records, layer);
      // report the NLL seen after both updates
      EnvironmentCache<Scalar> fresh(mps, enc);
      rec.nll = fresh.local_problem(mps, enc, EnvScaling::unit).raw_nll().value;
    }
    rec.iteration = iteration++;
    rec.sweep = sweep;
    if (opts.core.timing) rec.seconds = std::chrono::duration<double>(Clock::now() - t0).count();
    trace.push_back(rec);
  };

  for (int k = 0; k < opts.core.n_sweeps; ++k) {
    for (Index site = 0; site < n; ++site) visit(site, k);
    for (Index site = n - 2; site >= 0; --site) visit(site, k);
  }
  return {std::move(mps), std::move(layer), std::move(trace)};
}

}  // namespace tnbm
