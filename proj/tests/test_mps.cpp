#include "tnbm/mps.hpp"

#include "test_helpers.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>

using namespace tnbm;
using namespace tnbm::testing;

TEST_CASE("dense tensor shape checks") {
  DenseTensor<double> t({2, 3, 4});
  CHECK(t.size() == 24);
  CHECK_THROWS_AS(DenseTensor<double>({2, 0, 4}), DimensionError);
  CHECK_THROWS_AS(DenseTensor<double>({2, 3}, VectorX<double>::Zero(7)), DimensionError);
  t(1, 2, 3) = 5.0;
  CHECK(t.data()[23] == 5.0);
  CHECK(t.as_matrix_left()(5, 3) == 5.0);
  CHECK(t.as_matrix_right()(1, 11) == 5.0);
}

TEST_CASE("capped bond dimensions mirror at the edges") {
  // 49 sites, d=2, chi=5: 1,2,4,5,...,5,4,2,1 across cuts
  const auto dims = capped_bond_dims(49, 2, 5);
  CHECK(dims[0] == 1);
  CHECK(dims[1] == 2);
  CHECK(dims[2] == 4);
  CHECK(dims[3] == 5);
  CHECK(dims[24] == 5);
  CHECK(dims[46] == 5);
  CHECK(dims[47] == 4);
  CHECK(dims[48] == 2);
  CHECK(dims[49] == 1);
}

TEST_CASE("random_init: unit norm, determinism, capped shapes") {
  auto mps = random_init(6, 2, 3, 7);
  CHECK(mps.center == 0);
  CHECK(norm(mps) == doctest::Approx(1.0).epsilon(1e-12));

  auto again = random_init(6, 2, 3, 7);
  for (Index i = 0; i < 6; ++i) CHECK(mps.cores[i].data() == again.cores[i].data());

  auto different = random_init(6, 2, 3, 8);
  bool same = true;
  for (Index i = 0; i < 6; ++i) same = same && mps.cores[i].data() == different.cores[i].data();
  CHECK_FALSE(same);

  CHECK(mps.cores[0].extent(0) == 1);
  CHECK(mps.cores[5].extent(2) == 1);
  CHECK(mps.cores[2].extent(0) == 3);

  CHECK_THROWS_AS(random_init(1, 2, 3, 0), DimensionError);
  CHECK_THROWS_AS(random_init(4, 2, 0, 0), DimensionError);
}

TEST_CASE("two-site product state") {
  auto mps = random_init(2, 2, 1, 7);
  CHECK(norm(mps) == doctest::Approx(1.0).epsilon(1e-12));
  // chi = 1: amplitudes factorize into per-site vectors
  double p00 = amplitude(mps, {0, 0}) * amplitude(mps, {1, 1});
  double p01 = amplitude(mps, {0, 1}) * amplitude(mps, {1, 0});
  CHECK(p00 == doctest::Approx(p01).epsilon(1e-12));
}

TEST_CASE("amplitude against brute-force reconstruction") {
  auto mps = random_init(3, 2, 4, 21);
  const auto psi = brute_force_state(mps);
  const auto strings = all_bitstrings(3, 2);
  for (size_t k = 0; k < strings.size(); ++k)
    CHECK(amplitude(mps, strings[k]) == doctest::Approx(psi[(Index)k]).epsilon(1e-12));
}

TEST_CASE("amplitude input validation") {
  auto mps = random_init(3, 2, 2, 0);
  CHECK_THROWS_AS(amplitude(mps, Bitstring{0, 1}), DimensionError);
  CHECK_THROWS_AS(amplitude(mps, Bitstring{0, 1, 2}), DimensionError);
}

TEST_CASE("uniform product state probabilities") {
  // per-site vector (1/sqrt2, 1/sqrt2): p(x) = 2^-N for every x
  Mps<double> mps;
  mps.n_sites = 4;
  mps.site_dim = 2;
  for (int i = 0; i < 4; ++i) {
    DenseTensor<double> core({1, 2, 1});
    core.data().setConstant(1.0 / std::sqrt(2.0));
    mps.cores.push_back(core);
  }
  mps.center = 0;
  for (const auto& x : all_bitstrings(4, 2))
    CHECK(probability(mps, x) == doctest::Approx(std::pow(2.0, -4)).epsilon(1e-12));
  CHECK(amplitude(mps, {0, 1, 0, 1}) == doctest::Approx(std::pow(2.0, -2)).epsilon(1e-12));
}

TEST_CASE("probabilities sum to one exhaustively") {
  for (Index n : {5, 8}) {
    auto mps = random_init(n, 2, 4, 3 + n);
    double total = 0;
    for (const auto& x : all_bitstrings(n, 2)) total += probability(mps, x);
    CHECK(total == doctest::Approx(1.0).epsilon(1e-10));
  }
}

TEST_CASE("single-bitstring state") {
  // |0110>: one-hot cores
  Mps<double> mps;
  mps.n_sites = 4;
  mps.site_dim = 2;
  Bitstring target{0, 1, 1, 0};
  for (int i = 0; i < 4; ++i) {
    DenseTensor<double> core({1, 2, 1});
    core.data().setZero();
    core(0, target[i], 0) = 1.0;
    mps.cores.push_back(core);
  }
  mps.center = 0;
  CHECK(probability(mps, target) == doctest::Approx(1.0));
  CHECK(probability(mps, {0, 0, 0, 0}) == doctest::Approx(0.0));
}

TEST_CASE("canonicalize preserves amplitudes and sets isometries") {
  auto mps = random_init(6, 2, 5, 11);
  // scramble the gauge: multiply a core by a random invertible matrix and its
  // inverse into the neighbor, keeping the state fixed but non-canonical
  const auto psi_before = brute_force_state(mps);

  for (Index center : {0, 3, 5}) {
    auto canon = canonicalize(mps, center);
    CHECK(canon.center == center);
    const auto psi_after = brute_force_state(canon);
    for (Index k = 0; k < psi_before.size(); ++k)
      CHECK(psi_after[k] == doctest::Approx(psi_before[k]).epsilon(1e-10));

    // left blocks: sum_s A_s^T A_s = I; right blocks: sum_s A_s A_s^T = I
    for (Index i = 0; i < center; ++i) {
      const auto m = canon.cores[i].as_matrix_left();
      CHECK((m.transpose() * m - MatrixX<double>::Identity(m.cols(), m.cols()))
                .cwiseAbs()
                .maxCoeff() < 1e-10);
    }
    for (Index i = center + 1; i < 6; ++i) {
      const auto m = canon.cores[i].as_matrix_right();
      CHECK((m * m.transpose() - MatrixX<double>::Identity(m.rows(), m.rows()))
                .cwiseAbs()
                .maxCoeff() < 1e-10);
    }
    // norm equals the center core norm once canonical
    CHECK(norm(canon) == doctest::Approx(canon.cores[center].norm()).epsilon(1e-10));
  }
}

TEST_CASE("canonicalize is idempotent with the sign convention") {
  auto mps = random_init(5, 2, 3, 2);
  auto once = canonicalize(mps, 2);
  auto twice = canonicalize(once, 2);
  for (Index i = 0; i < 5; ++i)
    CHECK((once.cores[i].data() - twice.cores[i].data()).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("gauge invariance across centers") {
  auto mps = random_init(7, 2, 4, 5);
  auto a = canonicalize(mps, 1);
  auto b = canonicalize(mps, 6);
  for (const auto& x : all_bitstrings(7, 2))
    CHECK(amplitude(a, x) == doctest::Approx(amplitude(b, x)).epsilon(1e-10));
}

TEST_CASE("shift_center boundary errors") {
  auto mps = random_init(3, 2, 2, 1);
  auto at_right = canonicalize(mps, 2);
  CHECK_THROWS_AS(shift_center_right(at_right), BoundaryError);
  auto at_left = canonicalize(mps, 0);
  CHECK_THROWS_AS(shift_center_left(at_left), BoundaryError);
}

TEST_CASE("sampling: deterministic state returns its string") {
  Mps<double> mps;
  mps.n_sites = 3;
  mps.site_dim = 2;
  Bitstring target{1, 0, 1};
  for (int i = 0; i < 3; ++i) {
    DenseTensor<double> core({1, 2, 1});
    core.data().setZero();
    core(0, target[i], 0) = 1.0;
    mps.cores.push_back(core);
  }
  mps.center = 0;
  std::mt19937_64 rng(9);
  for (int k = 0; k < 20; ++k) CHECK(sample(mps, rng) == target);
}

TEST_CASE("sampling: uniform state frequencies within 5 sigma") {
  Mps<double> mps;
  mps.n_sites = 4;
  mps.site_dim = 2;
  for (int i = 0; i < 4; ++i) {
    DenseTensor<double> core({1, 2, 1});
    core.data().setConstant(1.0 / std::sqrt(2.0));
    mps.cores.push_back(core);
  }
  mps.center = 0;
  std::mt19937_64 rng(31);
  const int draws = 10000;
  std::map<Bitstring, int> counts;
  for (int k = 0; k < draws; ++k) ++counts[sample(mps, rng)];
  const double p = 1.0 / 16.0;
  const double sigma = std::sqrt(draws * p * (1 - p));
  for (const auto& x : all_bitstrings(4, 2)) {
    const double dev = std::abs(counts[x] - draws * p);
    CHECK(dev < 5 * sigma);
  }
}

TEST_CASE("sampling matches brute-force distribution in total variation") {
  auto mps = random_init(6, 2, 4, 17);
  std::map<Bitstring, double> p_exact;
  for (const auto& x : all_bitstrings(6, 2)) p_exact[x] = probability(mps, x);
  std::mt19937_64 rng(99);
  const int draws = 100000;
  std::map<Bitstring, int> counts;
  for (int k = 0; k < draws; ++k) ++counts[sample(mps, rng)];
  double tv = 0;
  for (const auto& [x, p] : p_exact) tv += std::abs(p - counts[x] / double(draws));
  CHECK(tv / 2 < 0.02);
}

TEST_CASE("mps serialization round trip") {
  namespace fs = std::filesystem;
  auto mps = random_init(5, 2, 3, 123);
  const auto path = (fs::temp_directory_path() / "tnbm_test_mps.bin").string();
  save_mps(mps, path);
  auto loaded = load_mps<double>(path);
  CHECK(loaded.n_sites == mps.n_sites);
  CHECK(loaded.site_dim == mps.site_dim);
  CHECK(loaded.center == mps.center);
  for (Index i = 0; i < 5; ++i) CHECK(loaded.cores[i].data() == mps.cores[i].data());
  fs::remove(path);

  CHECK_THROWS(load_mps<double>("/nonexistent/file.bin"));
}
