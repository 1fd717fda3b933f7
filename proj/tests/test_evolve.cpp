#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include <Eigen/Eigenvalues>

#include "dtc/evolve.hpp"

#include "helpers.hpp"

using namespace dtc;
using test::kron;
using test::max_abs;
using test::max_abs_diff;

namespace {

// Independent exp(-i H tau) through a full eigendecomposition.
Mat expm_oracle(const Mat& h, double tau) {
  Eigen::SelfAdjointEigenSolver<Mat> es(h);
  Vec phases(es.eigenvalues().size());
  for (Eigen::Index k = 0; k < phases.size(); ++k)
    phases(k) = std::exp(-kI * es.eigenvalues()(k) * tau);
  return es.eigenvectors() * phases.asDiagonal() * es.eigenvectors().adjoint();
}

Vec random_state(int64_t dim, uint64_t seed) {
  Rng rng(seed);
  Vec psi(dim);
  for (int64_t k = 0; k < dim; ++k) psi(k) = cplx(rng.gaussian(), rng.gaussian());
  return psi / psi.norm();
}

}  // namespace

TEST_CASE("pulse unitary", "[evolve]") {
  SECTION("exact pi rotation on a single spin-1/2") {
    ModelSpec spec = make_toy_spec(2, 1.0, 0.0, 1.0, 0);
    spec.n = 1;
    spec.couplings = CouplingTable{};
    spec.disorder = DisorderField::zero(1);
    const Mat u = pulse_unitary(spec).dense();
    Mat expect(2, 2);
    expect << 0.0, -1.0, 1.0, 0.0;
    CHECK(max_abs_diff(u, expect) < 1e-15);
  }

  SECTION("three-level pulse is the two-pulse rotation on every site") {
    ModelSpec spec;
    spec.protocol = Protocol::Z3;
    spec.n = 2;
    spec.localDim = 3;
    spec.epsilon = 0.17;
    const Mat u = pulse_unitary(spec).dense();
    const Mat r = rotation_matrix(Protocol::Z3, spec.epsilon);
    CHECK(max_abs_diff(u, kron(r, r)) < 1e-14);
  }

  SECTION("exact three-level pulse cubes to a pure phase") {
    const Mat r = rotation_matrix(Protocol::Z3, 0.0);
    const Mat r3 = r * r * r;
    for (int a = 0; a < 3; ++a)
      for (int b = 0; b < 3; ++b) {
        if (a == b)
          CHECK(std::abs(std::abs(r3(a, b)) - 1.0) < 1e-14);
        else
          CHECK(std::abs(r3(a, b)) < 1e-14);
      }
  }
}

TEST_CASE("interaction propagator matches a dense exponential oracle", "[evolve]") {
  const double tau = 0.7;

  SECTION("diagonal fast path") {
    const auto spec = make_toy_spec(4, 0.0, 0.0, 1.0, 9);
    const auto H = build_toy_hamiltonian(spec);
    const Propagator p = interaction_propagator(H, tau);
    CHECK(p.kind() == Propagator::Kind::DiagonalPhase);
    CHECK(max_abs_diff(p.dense(), expm_oracle(H.dense(), tau)) < 1e-12);
  }

  SECTION("dense spectral path") {
    const auto spec = make_toy_spec(4, 1.0, 0.0, 1.0, 9);
    const auto H = build_toy_hamiltonian(spec);
    const Propagator p = interaction_propagator(H, tau, PropagatorMethod::DenseSpectral);
    CHECK(max_abs_diff(p.dense(), expm_oracle(H.dense(), tau)) < 1e-12);
  }

  SECTION("complex-valued Hamiltonian takes the Hermitian spectral path") {
    ModelSpec spec;
    spec.protocol = Protocol::Z3;
    spec.n = 2;
    spec.localDim = 3;
    spec.couplings.n = 2;
    spec.couplings.entries = {{0, 1, 0.6}};
    spec.epsilon = 0.2;
    spec.period = 1.0;
    const auto H = build_average_hamiltonian(spec);
    const Propagator p = interaction_propagator(H, tau);
    CHECK(max_abs_diff(p.dense(), expm_oracle(H.dense(), tau)) < 1e-12);
  }

  SECTION("zero time gives the identity") {
    const auto H = build_toy_hamiltonian(make_toy_spec(3, 1.0, 0.0, 1.0, 2));
    const Propagator p = interaction_propagator(H, 0.0);
    CHECK(max_abs_diff(p.dense(), Mat::Identity(8, 8)) < 1e-15);
  }

  SECTION("Krylov agrees with the dense path") {
    const auto H = build_toy_hamiltonian(make_toy_spec(4, 1.0, 0.0, 1.0, 9));
    const Vec psi = random_state(16, 77);
    const Vec dense = interaction_propagator(H, tau, PropagatorMethod::DenseSpectral).apply(psi);
    const Vec kry = interaction_propagator(H, tau, PropagatorMethod::Krylov).apply(psi);
    CHECK((dense - kry).norm() < 1e-9);
  }

  SECTION("dimension mismatch is rejected") {
    const auto H = build_toy_hamiltonian(make_toy_spec(3, 1.0, 0.0, 1.0, 2));
    const Propagator p = interaction_propagator(H, tau);
    CHECK_THROWS_AS(p.apply(Vec::Ones(4)), std::invalid_argument);
  }
}

TEST_CASE("dense-spectral cap", "[evolve]") {
  ModelSpec spec;
  spec.protocol = Protocol::Z2Ising;
  spec.n = 14;
  spec.localDim = 2;
  spec.couplings.n = 14;
  spec.couplings.entries = {{0, 1, 0.3}};
  const auto H = build_lab_hamiltonian(spec, HamiltonianPhase::Interaction);
  REQUIRE(H.dim() > kDenseSpectralCap);

  CHECK_THROWS_AS(interaction_propagator(H, 0.5, PropagatorMethod::DenseSpectral),
                  ResourceCapError);
  CHECK_NOTHROW(interaction_propagator(H, 0.5, PropagatorMethod::Auto));
}

TEST_CASE("Floquet unitary is unitary and norm-preserving", "[evolve]") {
  const auto spec = [] {
    auto s = make_toy_spec(6, 1.0, 0.05, 3.0, 17);
    return s;
  }();
  const auto H = build_toy_hamiltonian(spec);
  const Propagator uInt = interaction_propagator(H, spec.period);
  const Propagator uPulse = pulse_unitary(spec);

  const Mat uf = uPulse.dense() * uInt.dense();
  CHECK(max_abs_diff(uf.adjoint() * uf, Mat::Identity(64, 64)) < 1e-10);

  Vec psi = random_state(64, 5);
  for (int cycle = 0; cycle < 50; ++cycle) {
    psi = uInt.apply(psi);
    psi = uPulse.apply(psi);
  }
  CHECK(std::abs(psi.norm() - 1.0) < 1e-10);
}

TEST_CASE("exact pi pulses alternate the polarization sign", "[evolve]") {
  SECTION("interacting chain, polarized start") {
    const auto spec = make_toy_spec(6, 1.0, 0.0, 4.0, 23);
    const auto trace = run_floquet(spec, polarized_state(6), 30, {ObservableKind::GlobalZ});
    REQUIRE(trace.values.size() == 31);
    for (int c = 0; c <= 30; ++c)
      CHECK(std::abs(trace.values[c] - (c % 2 == 0 ? 1.0 : -1.0)) < 1e-10);
  }

  SECTION("Ising point, single probe spin in a random environment") {
    for (uint64_t seed : {1ULL, 2ULL, 3ULL}) {
      const auto spec = make_toy_spec(6, 0.0, 0.0, 4.0, seed);
      const auto state = random_environment_state(6, seed);
      const auto trace = run_floquet(spec, state, 30, {ObservableKind::LocalZ, 0});
      for (int c = 0; c <= 30; ++c)
        CHECK(std::abs(trace.values[c] - (c % 2 == 0 ? 1.0 : -1.0)) < 1e-10);
    }
  }
}

TEST_CASE("run_floquet input validation", "[evolve]") {
  const auto spec = make_toy_spec(2, 1.0, 0.0, 1.0, 0);

  CHECK_THROWS_AS(run_floquet(spec, polarized_state(2), 0, {ObservableKind::GlobalZ}),
                  std::invalid_argument);
  CHECK_THROWS_AS(run_floquet(spec, polarized_state(3), 5, {ObservableKind::GlobalZ}),
                  std::invalid_argument);

  // (|up up> + |down down>)/sqrt(2) carries no net polarization, so the
  // normalized trace is undefined.
  Vec cat = Vec::Zero(4);
  cat(0) = cat(3) = 1.0 / std::sqrt(2.0);
  CHECK_THROWS_AS(run_floquet(spec, {cat}, 5, {ObservableKind::GlobalZ}),
                  std::invalid_argument);
}

TEST_CASE("small rotation error keeps the even-cycle response positive", "[evolve]") {
  const auto spec = make_toy_spec(8, 1.0, 0.02 * M_PI, 5.0, 31);
  const auto trace = run_floquet(spec, polarized_state(8), 20, {ObservableKind::GlobalZ});
  for (int c = 2; c <= 20; c += 2) CHECK(trace.values[c] > 0.5);
  for (int c = 1; c <= 19; c += 2) CHECK(trace.values[c] < -0.5);
}

TEST_CASE("dense and Krylov full traces agree", "[evolve]") {
  const auto spec = make_toy_spec(8, 1.0, 0.04 * M_PI, 5.0, 13);
  const auto state = polarized_state(8);
  const auto dense =
      run_floquet(spec, state, 50, {ObservableKind::GlobalZ}, PropagatorMethod::DenseSpectral);
  const auto kry =
      run_floquet(spec, state, 50, {ObservableKind::GlobalZ}, PropagatorMethod::Krylov);
  REQUIRE(dense.values.size() == kry.values.size());
  for (size_t k = 0; k < dense.values.size(); ++k)
    CHECK(std::abs(dense.values[k] - kry.values[k]) < 1e-8);
}

TEST_CASE("random environment states", "[evolve]") {
  const auto state = random_environment_state(6, 42);
  CHECK(std::abs(state.norm() - 1.0) < 1e-12);
  CHECK(std::abs(measure(state, {ObservableKind::LocalZ, 0}, 6, 2) - 0.5) < 1e-12);

  const auto again = random_environment_state(6, 42);
  CHECK((state.amplitudes - again.amplitudes).norm() == 0.0);

  double sum = 0.0, sumSq = 0.0;
  const int samples = 1000;
  for (int s = 0; s < samples; ++s) {
    const auto psi = random_environment_state(6, 1000 + s);
    const double v = measure(psi, {ObservableKind::LocalZ, 1}, 6, 2);
    sum += v;
    sumSq += v * v;
  }
  const double mean = sum / samples;
  const double se = std::sqrt((sumSq / samples - mean * mean) / samples);
  CHECK(std::abs(mean) < 4.0 * se);

  CHECK_THROWS_AS(random_environment_state(1, 0), std::invalid_argument);
}

TEST_CASE("observable measurement conventions", "[evolve]") {
  const auto up3 = polarized_state(3);
  CHECK(std::abs(measure(up3, {ObservableKind::GlobalZ}, 3, 2) - 0.5) < 1e-14);
  CHECK(std::abs(measure(up3, {ObservableKind::LocalZ, 2}, 3, 2) - 0.5) < 1e-14);
  CHECK(std::abs(measure(up3, {ObservableKind::GlobalX}, 3, 2)) < 1e-14);
  CHECK_THROWS_AS(measure(up3, {ObservableKind::LocalZ, 3}, 3, 2), std::invalid_argument);

  Vec plus(2);
  plus << 1.0 / std::sqrt(2.0), 1.0 / std::sqrt(2.0);
  CHECK(std::abs(measure({plus}, {ObservableKind::GlobalX}, 1, 2) - 0.5) < 1e-14);
}

TEST_CASE("ensemble runner", "[evolve]") {
  const auto seeds = derive_seeds(7, 4);
  CHECK(seeds.size() == 4);
  CHECK(derive_seeds(7, 4) == seeds);
  for (size_t a = 0; a < seeds.size(); ++a)
    for (size_t b = a + 1; b < seeds.size(); ++b) CHECK(seeds[a] != seeds[b]);

  EnsembleSpec ens;
  ens.makeSpec = [](uint64_t seed) { return make_toy_spec(5, 1.0, 0.05, 3.0, seed); };
  ens.makeState = [](const ModelSpec& spec) { return polarized_state(spec.n); };
  ens.observable = {ObservableKind::GlobalZ};
  ens.nCycles = 10;

  const auto serial = run_ensemble(ens, seeds, 1);
  const auto parallel = run_ensemble(ens, seeds, 4);
  REQUIRE(serial.size() == 4);
  REQUIRE(parallel.size() == 4);
  for (size_t k = 0; k < seeds.size(); ++k) {
    CHECK(serial[k].seed == seeds[k]);
    CHECK(serial[k].values == parallel[k].values);
  }
  CHECK(serial[0].values != serial[1].values);

  const auto single = run_floquet(make_toy_spec(5, 1.0, 0.05, 3.0, seeds[2]),
                                  polarized_state(5), 10, {ObservableKind::GlobalZ});
  CHECK(serial[2].values == single.values);

  const auto mean = mean_trace(serial);
  REQUIRE(mean.size() == 11);
  double expect0 = 0.0;
  for (const auto& t : serial) expect0 += t.values[5];
  CHECK(std::abs(mean[5] - expect0 / 4.0) < 1e-15);

  CHECK_THROWS_AS(run_ensemble(ens, {}), std::invalid_argument);
  CHECK_THROWS_AS(mean_trace({}), std::invalid_argument);
}
