#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "dtc/analyze.hpp"
#include "dtc/rng.hpp"

using namespace dtc;

namespace {

std::vector<double> sampled(int len, const std::function<double(int)>& f) {
  std::vector<double> v(len);
  for (int k = 0; k < len; ++k) v[k] = f(k);
  return v;
}

PeakHeightSeries series_from(const std::vector<double>& heights) {
  PeakHeightSeries s;
  s.windowLength = 36;
  for (size_t k = 0; k < heights.size(); ++k) s.nSweep.push_back(static_cast<int>(k));
  s.heights = heights;
  return s;
}

}  // namespace

TEST_CASE("unitary power spectrum", "[analyze]") {
  SECTION("period-2 signal concentrates all energy in the half-frequency bin") {
    const auto v = sampled(36, [](int j) { return std::cos(M_PI * j); });
    const auto spec = spectrum(v, 0, 36);
    REQUIRE(spec.weights.size() == 36);
    CHECK(std::abs(spec.frequencies(18) - 0.5) < 1e-15);
    CHECK(std::abs(spec.weights(18) - 36.0) < 1e-10);
    for (int k = 0; k < 36; ++k)
      if (k != 18) CHECK(spec.weights(k) < 1e-10);
  }

  SECTION("period-3 signal splits between the 1/3 bin and its mirror") {
    const auto v = sampled(36, [](int j) { return std::cos(2.0 * M_PI * j / 3.0); });
    const auto spec = spectrum(v, 0, 36);
    CHECK(std::abs(spec.weights(12) - 9.0) < 1e-10);
    CHECK(std::abs(spec.weights(24) - 9.0) < 1e-10);
    for (int k = 0; k < 36; ++k)
      if (k != 12 && k != 24) CHECK(spec.weights(k) < 1e-10);
  }

  SECTION("constant signal is pure DC") {
    const auto spec = spectrum(std::vector<double>(36, 0.7), 0, 36);
    CHECK(std::abs(spec.weights(0) - 36.0 * 0.49) < 1e-10);
    for (int k = 1; k < 36; ++k) CHECK(spec.weights(k) < 1e-12);
  }

  SECTION("total spectral weight equals the windowed signal energy") {
    Rng rng(8);
    const auto v = sampled(50, [&](int) { return rng.gaussian(); });
    const auto spec = spectrum(v, 5, 40);
    double energy = 0.0;
    for (int j = 5; j < 45; ++j) energy += v[j] * v[j];
    CHECK(std::abs(spec.weights.sum() - energy) < 1e-10);
  }

  SECTION("window validation") {
    const std::vector<double> v(20, 1.0);
    CHECK_THROWS_AS(spectrum(v, 0, 7), AnalysisError);
    CHECK_THROWS_AS(spectrum(v, -1, 10), AnalysisError);
    CHECK_THROWS_AS(spectrum(v, 15, 10), AnalysisError);
  }
}

TEST_CASE("crystalline fraction", "[analyze]") {
  SECTION("perfect subharmonics score 1") {
    const auto v2 = sampled(36, [](int j) { return std::cos(M_PI * j); });
    CHECK(std::abs(crystalline_fraction(spectrum(v2, 0, 36), 2) - 1.0) < 1e-10);

    const auto v3 = sampled(36, [](int j) { return std::cos(2.0 * M_PI * j / 3.0); });
    CHECK(std::abs(crystalline_fraction(spectrum(v3, 0, 36), 3) - 1.0) < 1e-10);
  }

  SECTION("a DC offset does not dilute the fraction") {
    const auto v = sampled(36, [](int j) { return 5.0 + std::cos(M_PI * j); });
    CHECK(std::abs(crystalline_fraction(spectrum(v, 0, 36), 2) - 1.0) < 1e-10);
  }

  SECTION("off-subharmonic signals score near zero") {
    const auto v = sampled(36, [](int j) { return std::cos(2.0 * M_PI * j / 4.0); });
    CHECK(crystalline_fraction(spectrum(v, 0, 36), 2) < 0.05);
  }

  SECTION("validation") {
    const auto spec = spectrum(std::vector<double>(36, 1.0), 0, 36);
    CHECK_THROWS_AS(crystalline_fraction(spec, 4), AnalysisError);
    CHECK_THROWS_AS(crystalline_fraction(spec, 2), AnalysisError);
  }
}

TEST_CASE("sliding-window peak heights", "[analyze]") {
  SECTION("matches a direct windowed transform") {
    Rng rng(17);
    const auto v = sampled(60, [&](int) { return rng.uniform(-1.0, 1.0); });
    const auto series = peak_height_series(v, 2, 36);
    REQUIRE(series.nSweep.size() == 25);
    for (size_t s = 0; s < series.nSweep.size(); ++s) {
      CHECK(series.nSweep[s] == static_cast<int>(s));
      const auto spec = spectrum(v, static_cast<int>(s), 36);
      CHECK(std::abs(series.heights[s] - spec.weights(18)) < 1e-12);
    }
  }

  SECTION("pure subharmonic gives a flat series at full weight") {
    const auto v = sampled(80, [](int j) { return std::cos(M_PI * j); });
    const auto series = peak_height_series(v, 2, 36);
    for (double h : series.heights) CHECK(std::abs(h - 36.0) < 1e-9);
  }

  SECTION("enveloped subharmonic decays at exactly twice the envelope rate") {
    const double gamma = 0.01;
    const auto v =
        sampled(120, [&](int j) { return std::exp(-gamma * j) * std::cos(M_PI * j); });
    const auto series = peak_height_series(v, 2, 36);
    for (size_t s = 1; s < series.heights.size(); ++s) {
      const double ratio = series.heights[s] / series.heights[s - 1];
      CHECK(std::abs(ratio - std::exp(-2.0 * gamma)) < 1e-12);
    }
  }

  SECTION("period-3 series uses the one-third bin") {
    const auto v = sampled(60, [](int j) { return std::cos(2.0 * M_PI * j / 3.0); });
    const auto series = peak_height_series(v, 3, 36);
    for (double h : series.heights) CHECK(std::abs(h - 9.0) < 1e-9);
  }

  CHECK_THROWS_AS(peak_height_series(std::vector<double>(20, 1.0), 2, 36), AnalysisError);
  CHECK_THROWS_AS(peak_height_series(std::vector<double>(40, 1.0), 5, 36), AnalysisError);
}

TEST_CASE("noise floor and decay-fit truncation", "[analyze]") {
  SECTION("floor is the median of the trailing tenth") {
    std::vector<double> h(90, 1.0);
    for (int k = 0; k < 10; ++k) h.push_back(0.01 + 0.001 * k);
    CHECK(std::abs(noise_floor(h) - 0.0145) < 1e-15);
  }

  SECTION("clean exponential is cut where it meets three times the floor") {
    const auto h = sampled(100, [](int n) { return std::exp(-0.1 * n); });
    const double floor = 0.5 * (std::exp(-9.5) + std::exp(-9.4));
    const int end = decay_fit_end(h);
    CHECK(end == 83);
    CHECK(h[end] > 3.0 * floor);
    CHECK(h[end + 1] <= 3.0 * floor);
  }

  SECTION("series still decaying at its end is kept whole") {
    const auto h = sampled(80, [](int n) { return std::exp(-std::pow(n / 30.0, 0.6)); });
    CHECK(decay_fit_end(h) == 79);
  }

  SECTION("additive noise floor truncates the fit range") {
    const auto h = sampled(120, [](int n) { return std::exp(-0.2 * n) + 1e-4; });
    const int end = decay_fit_end(h);
    CHECK(end > 20);
    CHECK(end < 60);
  }
}

TEST_CASE("late-time decay rate", "[analyze]") {
  SECTION("exact exponential, exact rate") {
    const auto s =
        series_from(sampled(100, [](int n) { return 5.0 * std::exp(-0.05 * n); }));
    const auto est = late_time_decay_rate(s);
    CHECK(std::abs(est.gamma - 0.05) < 1e-9);
    CHECK(est.error < 1e-9);
    CHECK(est.nFits == 6);
    CHECK_FALSE(est.flagged);
  }

  SECTION("stretched decay reports the mean local slope of the fit region") {
    const auto s = series_from(
        sampled(80, [](int n) { return std::exp(-std::pow(n / 30.0, 0.6)); }));
    const auto est = late_time_decay_rate(s);
    const double meanSlope =
        (std::pow(79.0 / 30.0, 0.6) - std::pow(15.0 / 30.0, 0.6)) / (79.0 - 15.0);
    CHECK(est.gamma / meanSlope > 0.7);
    CHECK(est.gamma / meanSlope < 1.3);
  }

  SECTION("additive floor: truncation keeps the estimate near the true rate") {
    const auto s = series_from(
        sampled(120, [](int n) { return std::exp(-0.2 * n) + 1e-4; }));
    const auto est = late_time_decay_rate(s);
    CHECK(std::abs(est.gamma - 0.2) < 0.02);
  }

  SECTION("series must cover the start-point scan") {
    const auto s = series_from(sampled(20, [](int n) { return std::exp(-0.05 * n); }));
    CHECK_THROWS_AS(late_time_decay_rate(s), AnalysisError);
  }
}

TEST_CASE("per-trace subharmonic decay rate", "[analyze]") {
  SECTION("alternating exponential on the period-2 subsequence") {
    TimeTrace t;
    t.values = sampled(201, [](int k) {
      return (k % 2 == 0 ? 1.0 : -1.0) * std::exp(-0.01 * k);
    });
    CHECK(std::abs(trace_decay_rate(t, 2) - 0.01) < 1e-12);
  }

  SECTION("period-3 subsequence ignores other cycles") {
    TimeTrace t;
    t.values = sampled(150, [](int k) {
      return k % 3 == 0 ? std::exp(-0.02 * k) : -1.0;
    });
    CHECK(std::abs(trace_decay_rate(t, 3) - 0.02) < 1e-12);
  }

  SECTION("too little late-time data") {
    TimeTrace t;
    t.values = sampled(48, [](int k) { return std::exp(-0.01 * k); });
    CHECK_THROWS_AS(trace_decay_rate(t, 2), AnalysisError);
  }
}

TEST_CASE("stretched-exponential fit", "[analyze]") {
  SECTION("noiseless recovery across beta values") {
    for (double beta : {0.6, 1.0, 1.4}) {
      const auto s = series_from(sampled(80, [&](int n) {
        return 2.0 * std::exp(-std::pow(n / 25.0, beta));
      }));
      const auto fit = fit_stretched_exponential(s);
      REQUIRE(fit.converged);
      CHECK(std::abs(fit.param("A") - 2.0) < 1e-6 * 2.0);
      CHECK(std::abs(fit.param("n_tau") - 25.0) < 1e-6 * 25.0);
      CHECK(std::abs(fit.param("beta") - beta) < 1e-6);
    }
  }

  SECTION("mild noise keeps the exponent within 0.05") {
    Rng rng(4);
    const auto s = series_from(sampled(80, [&](int n) {
      return std::exp(-std::pow(n / 25.0, 0.6)) * (1.0 + 0.01 * rng.gaussian());
    }));
    const auto fit = fit_stretched_exponential(s);
    REQUIRE(fit.converged);
    CHECK(std::abs(fit.param("beta") - 0.6) < 0.05);
  }

  SECTION("needs at least 10 usable points") {
    const auto s = series_from(sampled(8, [](int n) { return std::exp(-0.1 * n); }));
    CHECK_THROWS_AS(fit_stretched_exponential(s), AnalysisError);
  }
}

TEST_CASE("super-Gaussian profile fit", "[analyze]") {
  const double fMaxTrue = 0.8, eps0True = 0.05, sigmaTrue = 0.2, pTrue = 4.0;
  std::vector<double> eps, f;
  for (int k = 0; k <= 20; ++k) {
    eps.push_back(-0.5 + 0.05 * k);
    f.push_back(super_gaussian(eps.back(), fMaxTrue, eps0True, sigmaTrue, pTrue));
  }

  SECTION("noiseless recovery") {
    const auto fit = fit_super_gaussian(eps, f);
    REQUIRE(fit.converged);
    CHECK(std::abs(fit.param("f_max") - fMaxTrue) < 1e-6);
    CHECK(std::abs(fit.param("eps0") - eps0True) < 1e-6);
    CHECK(std::abs(fit.param("sigma") - sigmaTrue) < 1e-6);
    CHECK(std::abs(fit.param("p") - pTrue) < 1e-5);
  }

  SECTION("one-percent noise keeps parameters within ten percent") {
    Rng rng(12);
    auto noisy = f;
    for (auto& v : noisy) v = std::max(1e-6, v * (1.0 + 0.01 * rng.gaussian()));
    const auto fit = fit_super_gaussian(eps, noisy);
    REQUIRE(fit.converged);
    CHECK(std::abs(fit.param("f_max") - fMaxTrue) < 0.1 * fMaxTrue);
    CHECK(std::abs(fit.param("eps0") - eps0True) < 0.1 * sigmaTrue);
    CHECK(std::abs(fit.param("sigma") - sigmaTrue) < 0.1 * sigmaTrue);
  }

  SECTION("recovers an ordinary Gaussian exponent") {
    std::vector<double> g;
    for (double e : eps) g.push_back(super_gaussian(e, 0.5, 0.0, 0.15, 2.0));
    const auto fit = fit_super_gaussian(eps, g);
    REQUIRE(fit.converged);
    CHECK(std::abs(fit.param("p") - 2.0) < 0.2);
  }

  SECTION("validation") {
    CHECK_THROWS_AS(fit_super_gaussian({0.1, 0.2}, {0.1}), AnalysisError);
    CHECK_THROWS_AS(fit_super_gaussian({0.1, 0.2, 0.3, 0.4, 0.5}, {1, 1, 1, 1, 1}),
                    AnalysisError);
    CHECK_THROWS_AS(
        fit_super_gaussian({0.1, 0.2, 0.3, 0.4, 0.5, 0.6}, {1, 1, 1, 1, 1, 1}),
        AnalysisError);
  }
}

TEST_CASE("phase boundary from a fitted profile", "[analyze]") {
  const double fMaxTrue = 0.8, eps0True = 0.05, sigmaTrue = 0.2, pTrue = 4.0;
  std::vector<double> eps, f;
  for (int k = 0; k <= 20; ++k) {
    eps.push_back(-0.5 + 0.05 * k);
    f.push_back(super_gaussian(eps.back(), fMaxTrue, eps0True, sigmaTrue, pTrue));
  }
  const auto fit = fit_super_gaussian(eps, f);
  REQUIRE(fit.converged);

  SECTION("inversion identity at threshold 0.1") {
    const auto bp = phase_boundary_point(fit, 2.5, 0.1);
    REQUIRE(bp.present);
    CHECK(bp.period == 2.5);
    const double expect =
        eps0True + sigmaTrue * std::pow(2.0 * std::log(fMaxTrue / 0.1), 1.0 / pTrue);
    CHECK(std::abs(bp.epsilon - expect) < 1e-6);

    // Consistency: the profile evaluated at the boundary equals the
    // threshold.
    CHECK(std::abs(super_gaussian(bp.epsilon, fit.param("f_max"), fit.param("eps0"),
                                  fit.param("sigma"), fit.param("p")) -
                   0.1) < 1e-8);
  }

  SECTION("profiles peaking below threshold have no boundary") {
    std::vector<double> low;
    for (double e : eps) low.push_back(super_gaussian(e, 0.05, 0.0, 0.2, 4.0));
    const auto lowFit = fit_super_gaussian(eps, low);
    const auto bp = phase_boundary_point(lowFit, 1.0, 0.1);
    CHECK_FALSE(bp.present);
    CHECK(std::isnan(bp.epsilon));
  }

  SECTION("batch inversion keeps the period association") {
    std::vector<double> low;
    for (double e : eps) low.push_back(super_gaussian(e, 0.05, 0.0, 0.2, 4.0));
    const auto lowFit = fit_super_gaussian(eps, low);
    const auto points = phase_boundary({{1.0, fit}, {2.0, lowFit}}, 0.1);
    REQUIRE(points.size() == 2);
    CHECK(points[0].present);
    CHECK(points[0].period == 1.0);
    CHECK_FALSE(points[1].present);
  }

  SECTION("symmetric noisy data keeps eps0 near zero") {
    Rng rng(21);
    std::vector<double> sym;
    for (double e : eps)
      sym.push_back(std::max(
          1e-6, super_gaussian(e, 0.8, 0.0, 0.2, 4.0) * (1.0 + 0.01 * rng.gaussian())));
    const auto symFit = fit_super_gaussian(eps, sym);
    CHECK(std::abs(symFit.param("eps0")) < 3.0 * symFit.error("eps0") + 1e-3);
  }
}

TEST_CASE("saturation-period fit", "[analyze]") {
  SECTION("exact profile gives T* = c1 * 9^(1/c2)") {
    const std::vector<double> period{0.25, 0.5, 1.0, 2.0, 4.0, 8.0};
    std::vector<double> beta;
    for (double t : period) beta.push_back(1.0 / (1.0 + std::pow(1.0 / t, 2.0)));
    const auto sat = fit_saturation(period, beta);
    REQUIRE(sat.present);
    CHECK(std::abs(sat.fit.param("c1") - 1.0) < 1e-6);
    CHECK(std::abs(sat.fit.param("c2") - 2.0) < 1e-6);
    CHECK(std::abs(sat.tStar - 3.0) < 1e-6);
    CHECK(sat.error >= 0.0);
  }

  SECTION("plateau far below 0.9 reports no transition point") {
    const std::vector<double> period{0.25, 0.5, 1.0, 2.0, 4.0, 8.0};
    std::vector<double> beta;
    for (double t : period) beta.push_back(0.4 / (1.0 + 1.0 / (t * t)));
    const auto sat = fit_saturation(period, beta);
    CHECK_FALSE(sat.present);
  }

  SECTION("validation") {
    CHECK_THROWS_AS(fit_saturation({1, 2, 3, 4}, {0.1, 0.2, 0.3, 0.4}), AnalysisError);
    CHECK_THROWS_AS(fit_saturation({1, 2, 3, 4, 5}, {0.1, 0.2}), AnalysisError);
  }
}

TEST_CASE("quadratic rate law fit", "[analyze]") {
  SECTION("exact quadratic") {
    std::vector<double> eps, gamma;
    for (int k = 1; k <= 6; ++k) {
      eps.push_back(0.05 * k);
      gamma.push_back(0.01 + 0.5 * eps.back() * eps.back());
    }
    const auto fit = fit_quadratic_rate(eps, gamma);
    CHECK(std::abs(fit.param("Gamma0") - 0.01) < 1e-12);
    CHECK(std::abs(fit.param("a") - 0.5) < 1e-12);
  }

  SECTION("dephasing rates give curvature 1/2 and tiny offset") {
    std::vector<double> eps, gamma;
    for (int k = 1; k <= 10; ++k) {
      eps.push_back(0.01 * M_PI * k);
      gamma.push_back(-std::log(std::cos(eps.back())));
    }
    const auto fit = fit_quadratic_rate(eps, gamma);
    CHECK(std::abs(fit.param("a") - 0.5) < 0.01);
    CHECK(std::abs(fit.param("Gamma0")) < 1e-4);
  }

  SECTION("validation") {
    CHECK_THROWS_AS(fit_quadratic_rate({0.1, 0.2, 0.3}, {1, 2, 3}), AnalysisError);
    CHECK_THROWS_AS(fit_quadratic_rate({0.1, 0.2, 0.3, 0.4}, {1, 2, 3}), AnalysisError);
    CHECK_THROWS_AS(fit_quadratic_rate({0.1, 0.1, 0.1, 0.1}, {1, 1, 1, 1}), AnalysisError);
  }
}

TEST_CASE("decay-rate histogram", "[analyze]") {
  SECTION("identical rates collapse to a single bin") {
    const std::vector<double> rates(40, 0.017);
    const auto hist = rate_histogram(rates);
    CHECK(hist.mode == 0.017);
    CHECK(hist.spread == 0.0);
    CHECK(hist.binCenters.size() == 1);
    CHECK_FALSE(hist.flagged);
  }

  SECTION("two-sided Gaussian sample recovers mode and widths") {
    Rng rng(31);
    const double mode = 0.018, sl = 0.004, sr = 0.008;
    std::vector<double> rates;
    for (int k = 0; k < 2000; ++k) {
      if (rng.uniform() < sl / (sl + sr))
        rates.push_back(mode - std::abs(rng.gaussian()) * sl);
      else
        rates.push_back(mode + std::abs(rng.gaussian()) * sr);
    }
    const auto hist = rate_histogram(rates);
    CHECK(std::abs(hist.mode - mode) < 0.002);
    CHECK(hist.spread > 0.003);
    CHECK(hist.spread < 0.012);
    double total = 0.0;
    for (double c : hist.counts) total += c;
    CHECK(total == 2000.0);
  }

  SECTION("needs at least 30 rates") {
    CHECK_THROWS_AS(rate_histogram(std::vector<double>(29, 0.01)), AnalysisError);
  }
}
