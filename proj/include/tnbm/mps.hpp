#pragma once

#include "tnbm/dataset.hpp"
#include "tnbm/dense_tensor.hpp"

#include <Eigen/QR>

#include <cstdint>
#include <cstring>
#include <fstream>
#include <random>

namespace tnbm {

/// Matrix product state with open boundaries. Cores are rank-3 tensors of
/// shape (chi_left, site_dim, chi_right); the first and last bonds have
/// dimension one. `center` is the orthogonality-center site, or -1 when the
/// gauge is unspecified.
template <class Scalar = double>
struct Mps {
  Index n_sites = 0;
  Index site_dim = 0;
  std::vector<DenseTensor<Scalar>> cores;
  std::ptrdiff_t center = -1;

  Index bond_left(Index site) const { return cores[site].extent(0); }
  Index bond_right(Index site) const { return cores[site].extent(2); }
};

/// Maximum useful bond dimension at each cut given open boundaries:
/// min(chi, d^i, d^(n-i)) at cut i, computed without overflow.
inline std::vector<Index> capped_bond_dims(Index n_sites, Index site_dim, Index bond_dim) {
  std::vector<Index> dims(n_sites + 1, 1);
  for (Index i = 1; i < n_sites; ++i) {
    Index from_left = 1, from_right = 1;
    for (Index k = 0; k < i && from_left < bond_dim; ++k) from_left *= site_dim;
    for (Index k = 0; k < n_sites - i && from_right < bond_dim; ++k) from_right *= site_dim;
    dims[i] = std::min({bond_dim, from_left, from_right});
  }
  return dims;
}

namespace detail {

// Thin QR with the diagonal of R forced nonnegative, which makes the
// factorization (and hence gauge fixing) deterministic.
template <class Scalar>
void thin_qr_posdiag(const MatrixX<Scalar>& M, MatrixX<Scalar>& Q, MatrixX<Scalar>& R) {
  Eigen::HouseholderQR<MatrixX<Scalar>> qr(M);
  const Index k = std::min(M.rows(), M.cols());
  Q = qr.householderQ() * MatrixX<Scalar>::Identity(M.rows(), k);
  R = qr.matrixQR().topRows(k).template triangularView<Eigen::Upper>();
  for (Index i = 0; i < k; ++i) {
    if (R(i, i) < Scalar(0)) {
      Q.col(i) = -Q.col(i);
      R.row(i) = -R.row(i);
    }
  }
}

}  // namespace detail

/// Contract a core with a site vector: M(v) = sum_s v[s] * core[:, s, :].
template <class Scalar>
MatrixX<Scalar> site_matrix(const DenseTensor<Scalar>& core, const VectorX<Scalar>& v) {
  const Index cl = core.extent(0), d = core.extent(1), cr = core.extent(2);
  if (v.size() != d) throw DimensionError("site_matrix: site vector dimension mismatch");
  MatrixX<Scalar> m = MatrixX<Scalar>::Zero(cl, cr);
  const Scalar* p = core.data().data();
  using RowVec = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;
  for (Index i = 0; i < cl; ++i)
    for (Index s = 0; s < d; ++s)
      m.row(i) += v[s] * Eigen::Map<const RowVec>(p + (i * d + s) * cr, cr);
  return m;
}

/// l_next = M(v)^T l without forming M: one GEMV against the (cl*d, cr) view.
template <class Scalar>
VectorX<Scalar> left_env_step(const DenseTensor<Scalar>& core, const VectorX<Scalar>& l,
                              const VectorX<Scalar>& v) {
  const Index cl = core.extent(0), d = core.extent(1);
  if (l.size() != cl || v.size() != d) throw DimensionError("left_env_step: dimension mismatch");
  VectorX<Scalar> lv(cl * d);
  for (Index i = 0; i < cl; ++i) lv.segment(i * d, d) = l[i] * v;
  return core.as_matrix_left().transpose() * lv;
}

/// r_prev = M(v) r as one GEMV against the (cl, d*cr) view.
template <class Scalar>
VectorX<Scalar> right_env_step(const DenseTensor<Scalar>& core, const VectorX<Scalar>& r,
                               const VectorX<Scalar>& v) {
  const Index d = core.extent(1), cr = core.extent(2);
  if (r.size() != cr || v.size() != d) throw DimensionError("right_env_step: dimension mismatch");
  VectorX<Scalar> vr(d * cr);
  for (Index s = 0; s < d; ++s) vr.segment(s * cr, cr) = v[s] * r;
  return core.as_matrix_right() * vr;
}

template <class Scalar>
VectorX<Scalar> one_hot(Index dim, Index which) {
  VectorX<Scalar> v = VectorX<Scalar>::Zero(dim);
  v[which] = Scalar(1);
  return v;
}

/// <psi|x> for per-site input vectors; O(N chi^2 d) matrix-chain contraction.
template <class Scalar>
Scalar amplitude(const Mps<Scalar>& mps, const std::vector<VectorX<Scalar>>& site_vectors) {
  if (static_cast<Index>(site_vectors.size()) != mps.n_sites)
    throw DimensionError("amplitude: wrong number of site vectors");
  VectorX<Scalar> l = VectorX<Scalar>::Ones(1);
  for (Index i = 0; i < mps.n_sites; ++i) l = left_env_step(mps.cores[i], l, site_vectors[i]);
  return l[0];
}

template <class Scalar>
Scalar amplitude(const Mps<Scalar>& mps, const Bitstring& x) {
  if (static_cast<Index>(x.size()) != mps.n_sites)
    throw DimensionError("amplitude: bitstring length mismatch");
  VectorX<Scalar> l = VectorX<Scalar>::Ones(1);
  for (Index i = 0; i < mps.n_sites; ++i) {
    const auto& core = mps.cores[i];
    if (x[i] >= core.extent(1)) throw DimensionError("amplitude: symbol out of range");
    l = left_env_step(mps.cores[i], l, one_hot<Scalar>(core.extent(1), x[i]));
  }
  return l[0];
}

/// Global norm of the state by transfer-matrix contraction; does not rely on
/// any gauge assumption.
template <class Scalar>
Scalar norm(const Mps<Scalar>& mps) {
  MatrixX<Scalar> rho = MatrixX<Scalar>::Ones(1, 1);
  for (Index i = 0; i < mps.n_sites; ++i) {
    const auto& core = mps.cores[i];
    const Index cl = core.extent(0), d = core.extent(1), cr = core.extent(2);
    MatrixX<Scalar> next = MatrixX<Scalar>::Zero(cr, cr);
    const Scalar* p = core.data().data();
    for (Index s = 0; s < d; ++s) {
      Eigen::Map<const MatrixRM<Scalar>, 0, Eigen::OuterStride<>> slice(
          p + s * cr, cl, cr, Eigen::OuterStride<>(d * cr));
      next += slice.transpose() * rho * slice;
    }
    rho = std::move(next);
  }
  return std::sqrt(std::max(rho(0, 0), Scalar(0)));
}

/// p(x) = <psi|x>^2 / <psi|psi>.
template <class Scalar>
Scalar probability(const Mps<Scalar>& mps, const Bitstring& x) {
  const Scalar a = amplitude(mps, x);
  const Scalar n = norm(mps);
  return (a * a) / (n * n);
}

/// Left-orthogonalize the center core and absorb the triangular factor into
/// the right neighbor. Center moves one site right.
template <class Scalar>
void shift_center_right(Mps<Scalar>& mps) {
  const Index c = static_cast<Index>(mps.center);
  if (mps.center < 0) throw BoundaryError("shift_center_right: gauge center unset");
  if (c + 1 >= mps.n_sites) throw BoundaryError("shift_center_right: center at right boundary");
  auto& core = mps.cores[c];
  const Index cl = core.extent(0), d = core.extent(1);
  MatrixX<Scalar> Q, R;
  detail::thin_qr_posdiag<Scalar>(core.as_matrix_left(), Q, R);
  const Index k = Q.cols();
  DenseTensor<Scalar> q({cl, d, k});
  q.as_matrix_left() = Q;
  core = std::move(q);
  auto& next = mps.cores[c + 1];
  const Index nd = next.extent(1), nr = next.extent(2);
  DenseTensor<Scalar> merged({k, nd, nr});
  merged.as_matrix_right() = R * next.as_matrix_right();
  next = std::move(merged);
  mps.center = c + 1;
}

/// Right-orthogonalize the center core, absorbing the factor into the left
/// neighbor. Center moves one site left.
template <class Scalar>
void shift_center_left(Mps<Scalar>& mps) {
  const Index c = static_cast<Index>(mps.center);
  if (mps.center < 0) throw BoundaryError("shift_center_left: gauge center unset");
  if (c == 0) throw BoundaryError("shift_center_left: center at left boundary");
  auto& core = mps.cores[c];
  const Index d = core.extent(1), cr = core.extent(2);
  MatrixX<Scalar> Q, R;
  MatrixX<Scalar> mt = core.as_matrix_right().transpose();
  detail::thin_qr_posdiag<Scalar>(mt, Q, R);
  const Index k = Q.cols();
  DenseTensor<Scalar> q({k, d, cr});
  q.as_matrix_right() = Q.transpose();
  core = std::move(q);
  auto& prev = mps.cores[c - 1];
  const Index pl = prev.extent(0), pd = prev.extent(1);
  DenseTensor<Scalar> merged({pl, pd, k});
  merged.as_matrix_left() = prev.as_matrix_left() * R.transpose();
  prev = std::move(merged);
  mps.center = c - 1;
}

/// Gauge-fix to the requested center by QR passes from both chain ends.
/// Amplitudes are preserved exactly (no truncation); the overall norm is kept.
template <class Scalar>
Mps<Scalar> canonicalize(Mps<Scalar> mps, Index center) {
  if (center < 0 || center >= mps.n_sites) throw BoundaryError("canonicalize: center out of range");
  mps.center = 0;
  while (mps.center < static_cast<std::ptrdiff_t>(center)) shift_center_right(mps);
  if (mps.center != static_cast<std::ptrdiff_t>(mps.n_sites - 1)) {
    std::ptrdiff_t want = mps.center;
    mps.center = mps.n_sites - 1;
    while (mps.center > want) shift_center_left(mps);
  }
  return mps;
}

/// Divide the center core by the global norm, making the state unit-norm.
template <class Scalar>
void normalize_center(Mps<Scalar>& mps) {
  if (mps.center < 0) throw BoundaryError("normalize_center: gauge center unset");
  auto& t = mps.cores[mps.center].data();
  const Scalar n = t.norm();
  if (n == Scalar(0)) throw std::runtime_error("normalize_center: zero state");
  t /= n;
}

/// Random MPS: i.i.d. standard-normal entries from a seeded generator,
/// canonicalized to center 0 and normalized.
template <class Scalar = double>
Mps<Scalar> random_init(Index n_sites, Index site_dim, Index bond_dim, uint64_t seed) {
  if (n_sites < 2) throw DimensionError("random_init: need at least 2 sites");
  if (site_dim < 2) throw DimensionError("random_init: site_dim must be >= 2");
  if (bond_dim < 1) throw DimensionError("random_init: bond_dim must be >= 1");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const auto dims = capped_bond_dims(n_sites, site_dim, bond_dim);
  Mps<Scalar> mps;
  mps.n_sites = n_sites;
  mps.site_dim = site_dim;
  mps.cores.reserve(n_sites);
  for (Index i = 0; i < n_sites; ++i) {
    DenseTensor<Scalar> core({dims[i], site_dim, dims[i + 1]});
    for (Index k = 0; k < core.size(); ++k) core.data()[k] = static_cast<Scalar>(gauss(rng));
    mps.cores.push_back(std::move(core));
  }
  mps = canonicalize(std::move(mps), 0);
  normalize_center(mps);
  return mps;
}

/// Ancestral sampling from p(x) using canonical-form conditional marginals.
/// The state is brought to center 0 internally if needed.
template <class Scalar>
Bitstring sample(const Mps<Scalar>& mps_in, std::mt19937_64& rng) {
  const Mps<Scalar>* m = &mps_in;
  Mps<Scalar> canon;
  if (mps_in.center != 0) {
    canon = canonicalize(mps_in, 0);
    normalize_center(canon);
    m = &canon;
  }
  Bitstring out(m->n_sites);
  VectorX<Scalar> l = VectorX<Scalar>::Ones(1);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (Index i = 0; i < m->n_sites; ++i) {
    const Index d = m->cores[i].extent(1);
    // p(s | prefix) proportional to || l^T M(e_s) ||^2: right blocks are
    // isometries, so the unsampled suffix contracts to identity.
    std::vector<VectorX<Scalar>> cand(d);
    std::vector<double> w(d);
    double tot = 0;
    for (Index s = 0; s < d; ++s) {
      cand[s] = left_env_step(m->cores[i], l, one_hot<Scalar>(d, s));
      w[s] = static_cast<double>(cand[s].squaredNorm());
      tot += w[s];
    }
    double u = unif(rng) * tot;
    Index pick = d - 1;
    double acc = 0;
    for (Index s = 0; s < d; ++s) {
      acc += w[s];
      if (u <= acc) {
        pick = s;
        break;
      }
    }
    out[i] = static_cast<uint8_t>(pick);
    l = cand[pick];
  }
  return out;
}

// ---- serialization: "TNBM" magic, version tag, shapes header, row-major payloads ----

namespace detail {
inline constexpr uint32_t kMpsMagic = 0x544e424d;  // "TNBM"
inline constexpr uint32_t kMpsVersion = 1;

template <class T>
void write_pod(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}
template <class T>
T read_pod(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw std::runtime_error("mps file truncated");
  return v;
}
}  // namespace detail

template <class Scalar>
void save_mps(const Mps<Scalar>& mps, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_mps: cannot open " + path);
  detail::write_pod(out, detail::kMpsMagic);
  detail::write_pod(out, detail::kMpsVersion);
  detail::write_pod(out, static_cast<uint32_t>(sizeof(Scalar)));
  detail::write_pod(out, static_cast<int64_t>(mps.n_sites));
  detail::write_pod(out, static_cast<int64_t>(mps.site_dim));
  detail::write_pod(out, static_cast<int64_t>(mps.center));
  for (const auto& core : mps.cores) {
    for (Index a = 0; a < 3; ++a) detail::write_pod(out, static_cast<int64_t>(core.extent(a)));
    out.write(reinterpret_cast<const char*>(core.data().data()),
              static_cast<std::streamsize>(sizeof(Scalar) * core.size()));
  }
}

template <class Scalar = double>
Mps<Scalar> load_mps(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_mps: cannot open " + path);
  if (detail::read_pod<uint32_t>(in) != detail::kMpsMagic)
    throw std::runtime_error("load_mps: bad magic in " + path);
  const uint32_t version = detail::read_pod<uint32_t>(in);
  if (version != detail::kMpsVersion)
    throw std::runtime_error("load_mps: unsupported version " + std::to_string(version));
  if (detail::read_pod<uint32_t>(in) != sizeof(Scalar))
    throw std::runtime_error("load_mps: scalar width mismatch");
  Mps<Scalar> mps;
  mps.n_sites = static_cast<Index>(detail::read_pod<int64_t>(in));
  mps.site_dim = static_cast<Index>(detail::read_pod<int64_t>(in));
  mps.center = static_cast<std::ptrdiff_t>(detail::read_pod<int64_t>(in));
  mps.cores.reserve(mps.n_sites);
  for (Index i = 0; i < mps.n_sites; ++i) {
    std::vector<Index> shape(3);
    for (auto& e : shape) e = static_cast<Index>(detail::read_pod<int64_t>(in));
    DenseTensor<Scalar> core(shape);
    in.read(reinterpret_cast<char*>(core.data().data()),
            static_cast<std::streamsize>(sizeof(Scalar) * core.size()));
    if (!in) throw std::runtime_error("load_mps: payload truncated in " + path);
    mps.cores.push_back(std::move(core));
  }
  return mps;
}

}  // namespace tnbm
