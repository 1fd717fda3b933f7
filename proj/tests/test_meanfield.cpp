#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "dtc/meanfield.hpp"

#include "helpers.hpp"

using namespace dtc;
using test::max_abs_diff;

namespace {

double coefficient_along(const Mat& h, const Mat& basisOp, double basisNormSq) {
  return (basisOp.adjoint() * h).trace().real() / basisNormSq;
}

}  // namespace

TEST_CASE("mean-field Hamiltonian assembly", "[meanfield]") {
  SECTION("Ising family: feedback along z, drive along x") {
    const auto spec = meanfield_spec(Protocol::Z2Ising, 0.3, 1.4);
    Eigen::VectorXd rho(3);
    rho << 0.0, 0.0, 0.8;
    const Mat h = mf_hamiltonian(spec, {rho}).matrix;

    const Mat sx = spin_half_op("Sx").matrix;
    const Mat sy = spin_half_op("Sy").matrix;
    const Mat sz = spin_half_op("Sz").matrix;
    CHECK(std::abs(coefficient_along(h, sx, 0.5) - 0.3) < 1e-14);
    CHECK(std::abs(coefficient_along(h, sy, 0.5)) < 1e-14);
    CHECK(std::abs(coefficient_along(h, sz, 0.5) - 1.4 * 0.8 / 2.0) < 1e-14);

    Eigen::VectorXd zero = Eigen::VectorXd::Zero(3);
    const auto specFree = meanfield_spec(Protocol::Z2Ising, 0.0, 1.4);
    CHECK(max_abs_diff(mf_hamiltonian(specFree, {zero}).matrix, Mat::Zero(2, 2)) < 1e-15);
  }

  SECTION("exchange family: the transverse feedback opposes the drive") {
    const auto spec = meanfield_spec(Protocol::Z2, 0.3, 1.4);
    Eigen::VectorXd rho(3);
    rho << 0.0, 0.5, 0.0;
    const Mat h = mf_hamiltonian(spec, {rho}).matrix;
    const Mat sy = spin_half_op("Sy").matrix;
    CHECK(std::abs(coefficient_along(h, sy, 0.5) - (-1.4 * 0.5 / 2.0 + 0.3)) < 1e-14);
  }

  SECTION("coefficient dimension must match the basis") {
    const auto spec = meanfield_spec(Protocol::Z2, 0.3, 1.0);
    CHECK_THROWS_AS(mf_field(spec, Eigen::VectorXd::Zero(8)), std::invalid_argument);
  }
}

TEST_CASE("ordered stationary branch has the closed-form transverse tilt", "[meanfield]") {
  SECTION("Ising family: rho_x = 2 (eps/T) / J") {
    for (double ratio : {0.05, 0.2, 0.4}) {
      const auto spec = meanfield_spec(Protocol::Z2Ising, ratio, 1.0);
      const auto sol = solve_stationary(spec, MeanFieldBranch::Ordered);
      REQUIRE(sol.exists);
      CHECK(sol.residual < 1e-10);
      CHECK(std::abs(sol.rho(0) - 2.0 * ratio) < 1e-8);
      CHECK(std::abs(sol.rho(1)) < 1e-8);
      CHECK(std::abs(sol.rho(2) - std::sqrt(1.0 - 4.0 * ratio * ratio)) < 1e-8);
      CHECK(std::abs(sol.orderParameter - sol.rho(2) / 2.0) < 1e-14);
    }
  }

  SECTION("exchange family: rho_y = (eps/T) / J") {
    for (double ratio : {0.1, 0.5, 0.9}) {
      const auto spec = meanfield_spec(Protocol::Z2, ratio, 1.0);
      const auto sol = solve_stationary(spec, MeanFieldBranch::Ordered);
      REQUIRE(sol.exists);
      CHECK(std::abs(sol.rho(0)) < 1e-8);
      CHECK(std::abs(sol.rho(1) - ratio) < 1e-8);
      CHECK(std::abs(sol.rho(2) - std::sqrt(1.0 - ratio * ratio)) < 1e-8);
    }
  }

  SECTION("three-level family: transverse components (x/4, x/4, -x/4)") {
    const double ratio = 0.3;
    const auto spec = meanfield_spec(Protocol::Z3, ratio, 1.0);
    const auto sol = solve_stationary(spec, MeanFieldBranch::Ordered);
    REQUIRE(sol.exists);
    CHECK(sol.residual < 1e-10);
    CHECK(std::abs(sol.rho(0) - ratio / 4.0) < 1e-8);
    CHECK(std::abs(sol.rho(1) - ratio / 4.0) < 1e-8);
    CHECK(std::abs(sol.rho(2)) < 1e-8);
    CHECK(std::abs(sol.rho(3)) < 1e-8);
    CHECK(std::abs(sol.rho(4)) < 1e-8);
    CHECK(std::abs(sol.rho(5) + ratio / 4.0) < 1e-8);

    const double s = std::sqrt(1.0 / 3.0 - 3.0 * ratio * ratio / 16.0);
    CHECK(std::abs(sol.rho(6) + s * std::sqrt(3.0) / 2.0) < 1e-8);
    CHECK(std::abs(sol.rho(7) - s / 2.0) < 1e-8);
    CHECK(std::abs(sol.orderParameter - std::sqrt(3.0) * s) < 1e-7);
  }

  SECTION("scale invariance in (eps/T, J)") {
    const auto a = solve_stationary(meanfield_spec(Protocol::Z2, 0.3, 1.0),
                                    MeanFieldBranch::Ordered);
    const auto b = solve_stationary(meanfield_spec(Protocol::Z2, 0.75, 2.5),
                                    MeanFieldBranch::Ordered);
    CHECK((a.rho - b.rho).cwiseAbs().maxCoeff() < 1e-9);
  }

  SECTION("interaction screens the residual drive") {
    const auto spec = meanfield_spec(Protocol::Z2, 0.4, 1.0);
    const auto sol = solve_stationary(spec, MeanFieldBranch::Ordered);
    const Eigen::VectorXd feedback = mf_field(spec, sol.rho) - spec.h;
    CHECK(feedback(1) * spec.h(1) < 0.0);

    const auto spec3 = meanfield_spec(Protocol::Z3, 0.4, 1.0);
    const auto sol3 = solve_stationary(spec3, MeanFieldBranch::Ordered);
    const Eigen::VectorXd fb3 = mf_field(spec3, sol3.rho) - spec3.h;
    for (int mu : {0, 1, 5}) CHECK(fb3(mu) * spec3.h(mu) < 0.0);
  }

  CHECK_THROWS_AS(solve_stationary(meanfield_spec(Protocol::Z2, 0.1, 1.0),
                                   MeanFieldBranch::Ordered, -1.0),
                  std::runtime_error);
  CHECK_THROWS_AS(solve_stationary(MeanFieldSpec{3, Eigen::Vector3d::Zero(),
                                                 Eigen::Vector3d::Zero(), 0.0},
                                   MeanFieldBranch::Ordered),
                  std::invalid_argument);
}

TEST_CASE("trivial stationary branch aligns with the drive", "[meanfield]") {
  for (Protocol p : {Protocol::Z2Ising, Protocol::Z2, Protocol::Z3}) {
    const auto spec = meanfield_spec(p, 0.3, 1.0);
    const auto sol = solve_stationary(spec, MeanFieldBranch::Trivial);
    REQUIRE(sol.exists);
    CHECK(sol.orderParameter == 0.0);
    CHECK(sol.residual < 1e-12);
    const double cap = p == Protocol::Z3 ? 1.0 / 3.0 : 1.0;
    const Eigen::VectorXd expect = std::sqrt(cap) * spec.h / spec.h.norm();
    CHECK((sol.rho - expect).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("ordered branch existence boundary", "[meanfield]") {
  CHECK(std::abs(existence_boundary(Protocol::Z2Ising) - 0.5) < 1e-6);
  CHECK(std::abs(existence_boundary(Protocol::Z2) - 1.0) < 1e-6);
  CHECK(std::abs(existence_boundary(Protocol::Z3) - 4.0 / 3.0) < 1e-6);
  CHECK_THROWS_AS(existence_boundary(Protocol::Z2, 0.0), std::invalid_argument);

  SECTION("order parameter collapses at the boundary") {
    const auto low = solve_stationary(meanfield_spec(Protocol::Z2Ising, 0.05, 1.0),
                                      MeanFieldBranch::Ordered);
    const auto near = solve_stationary(meanfield_spec(Protocol::Z2Ising, 0.4999, 1.0),
                                       MeanFieldBranch::Ordered);
    CHECK(low.orderParameter > 0.4);
    CHECK(near.orderParameter < 0.02);
    CHECK_FALSE(solve_stationary(meanfield_spec(Protocol::Z2Ising, 0.6, 1.0),
                                 MeanFieldBranch::Ordered)
                    .exists);
  }
}

TEST_CASE("mean-field dynamics", "[meanfield]") {
  const auto spec = meanfield_spec(Protocol::Z2, 0.2, 1.0);
  const auto star = solve_stationary(spec, MeanFieldBranch::Ordered);

  SECTION("stationary points stay put") {
    const auto traj = integrate_mf_dynamics(spec, star.rho, 50.0, 0.01);
    REQUIRE(traj.size() == 5001);
    CHECK((traj.front() - star.rho).norm() == 0.0);
    double dev = 0.0;
    for (const auto& rho : traj) dev = std::max(dev, (rho - star.rho).norm());
    CHECK(dev < 1e-8);
  }

  SECTION("polarized state is inert without a drive") {
    const auto free = meanfield_spec(Protocol::Z2, 0.0, 1.0);
    Eigen::VectorXd up(3);
    up << 0.0, 0.0, 1.0;
    const auto traj = integrate_mf_dynamics(free, up, 10.0, 0.01);
    for (const auto& rho : traj) CHECK((rho - up).norm() < 1e-12);
  }

  SECTION("small kicks precess boundedly and preserve the norm") {
    Eigen::VectorXd rho0 = star.rho;
    const double delta = 1e-3;
    rho0(0) += delta;
    const auto traj = integrate_mf_dynamics(spec, rho0, 20.0, 0.005);
    const double norm0 = rho0.norm();
    double dev = 0.0, drift = 0.0;
    for (const auto& rho : traj) {
      dev = std::max(dev, (rho - star.rho).norm());
      drift = std::max(drift, std::abs(rho.norm() - norm0));
    }
    CHECK(dev < 10.0 * delta);
    CHECK(drift < 1e-7);
  }

  CHECK_THROWS_AS(integrate_mf_dynamics(spec, star.rho, 1.0, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(integrate_mf_dynamics(spec, star.rho, -1.0, 0.1), std::invalid_argument);
}
