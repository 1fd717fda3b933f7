#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dtc/errors.hpp"
#include "dtc/fit.hpp"
#include "dtc/trace.hpp"

namespace dtc {

// ---------------------------------------------------------------------------
// Spectra and crystalline fraction
// ---------------------------------------------------------------------------

// Normalized power spectrum on the frequency grid k/L, k = 0..L-1.
struct Spectrum {
  Eigen::VectorXd frequencies;
  Eigen::VectorXd weights;
};

// Discrete Fourier transform of one window of the signal with unitary
// normalization S(k) = L^{-1/2} sum_j v_j exp(-2 pi i k j / L), so that
// sum_k |S|^2 equals the windowed signal energy and a unit-amplitude grid
// sinusoid concentrates all weight in its bin.
inline Spectrum spectrum(const std::vector<double>& values, int start, int length) {
  if (length < 8) throw AnalysisError("spectrum: window length must be at least 8");
  if (start < 0 || start + length > static_cast<int>(values.size()))
    throw AnalysisError("spectrum: window out of bounds");
  Spectrum out;
  out.frequencies.resize(length);
  out.weights.resize(length);
  const double norm = 1.0 / std::sqrt(static_cast<double>(length));
  for (int k = 0; k < length; ++k) {
    cplx s = 0.0;
    const double w = -2.0 * M_PI * k / length;
    for (int j = 0; j < length; ++j)
      s += values[start + j] * cplx(std::cos(w * j), std::sin(w * j));
    out.frequencies(k) = static_cast<double>(k) / length;
    out.weights(k) = std::norm(s * norm);
  }
  return out;
}

inline Spectrum spectrum(const TimeTrace& trace, int start, int length) {
  return spectrum(trace.values, start, length);
}

// Fraction of non-DC spectral weight at the subharmonic frequency 1/order.
// The factor 2 at order 3 accounts for the mirror image at 2/3; the DC bin
// is excluded from the denominator so constant offsets do not dilute f.
inline double crystalline_fraction(const Spectrum& spec, int order) {
  if (order != 2 && order != 3)
    throw AnalysisError("crystalline_fraction: order must be 2 or 3");
  const int L = static_cast<int>(spec.weights.size());
  const double total = spec.weights.sum() - spec.weights(0);
  if (total <= 0.0) throw AnalysisError("crystalline_fraction: spectrum has no non-DC weight");
  const int k = (L + order / 2) / order;  // nearest bin to L/order
  const double f = (order == 3 ? 2.0 : 1.0) * spec.weights(k) / total;
  return std::min(f, 1.0);
}

// ---------------------------------------------------------------------------
// Sliding-window subharmonic peak heights
// ---------------------------------------------------------------------------

struct PeakHeightSeries {
  std::vector<int> nSweep;
  std::vector<double> heights;
  int windowLength = 0;
};

// |S(1/order)|^2 of the window starting at each admissible n_sweep,
// advancing one cycle at a time.
inline PeakHeightSeries peak_height_series(const std::vector<double>& values, int order,
                                           int windowLength = 36) {
  if (order != 2 && order != 3)
    throw AnalysisError("peak_height_series: order must be 2 or 3");
  const int len = static_cast<int>(values.size());
  if (len < windowLength) throw AnalysisError("peak_height_series: trace shorter than one window");
  PeakHeightSeries out;
  out.windowLength = windowLength;
  const int k = (windowLength + order / 2) / order;
  const double norm = 1.0 / std::sqrt(static_cast<double>(windowLength));
  const double w = -2.0 * M_PI * k / windowLength;
  for (int s = 0; s + windowLength <= len; ++s) {
    cplx acc = 0.0;
    for (int j = 0; j < windowLength; ++j)
      acc += values[s + j] * cplx(std::cos(w * j), std::sin(w * j));
    out.nSweep.push_back(s);
    out.heights.push_back(std::norm(acc * norm));
  }
  return out;
}

inline PeakHeightSeries peak_height_series(const TimeTrace& trace, int order,
                                           int windowLength = 36) {
  return peak_height_series(trace.values, order, windowLength);
}

// Median of the trailing tenth of the series, used as the noise-floor
// estimate below which samples are excluded from decay fits.
inline double noise_floor(const std::vector<double>& heights) {
  const int len = static_cast<int>(heights.size());
  const int tail = std::max(5, len / 10);
  std::vector<double> last(heights.end() - std::min(tail, len), heights.end());
  std::sort(last.begin(), last.end());
  const size_t m = last.size() / 2;
  return last.size() % 2 ? last[m] : 0.5 * (last[m - 1] + last[m]);
}

// Index of the last sample to keep in a decay fit: the series is truncated
// where it first sinks below three times its noise floor. The cut is only
// meaningful when the estimated floor sits well below the initial height;
// a series that is still decaying at its end (floor estimate within 30% of
// the start) has no separable floor and is kept whole.
inline int decay_fit_end(const std::vector<double>& heights) {
  const double cut = 3.0 * noise_floor(heights);
  const int len = static_cast<int>(heights.size());
  if (len == 0 || cut > 0.3 * heights.front()) return len - 1;
  for (int i = 1; i < len; ++i)
    if (heights[i] <= cut) return i - 1;
  return len - 1;
}

// ---------------------------------------------------------------------------
// Exponential-family fits
// ---------------------------------------------------------------------------

namespace analyze_detail {

// Single exponential A exp(-rate n) fitted by damped least squares,
// initialized from the log-linear slope.
inline FitResult exponential_fit(const std::vector<double>& n, const std::vector<double>& h) {
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int m = 0;
  for (size_t i = 0; i < n.size(); ++i) {
    if (h[i] <= 0.0) continue;
    const double y = std::log(h[i]);
    sx += n[i];
    sy += y;
    sxx += n[i] * n[i];
    sxy += n[i] * y;
    ++m;
  }
  if (m < 3) throw AnalysisError("exponential_fit: fewer than 3 usable points");
  const double det = m * sxx - sx * sx;
  if (det == 0.0) throw AnalysisError("exponential_fit: degenerate abscissa");
  const double slope = (m * sxy - sx * sy) / det;
  const double icept = (sy * sxx - sx * sxy) / det;

  auto model = [](double x, const Eigen::VectorXd& p) { return p(0) * std::exp(-p(1) * x); };
  auto dmodel = [](double x, const Eigen::VectorXd& p) {
    Eigen::VectorXd g(2);
    const double e = std::exp(-p(1) * x);
    g << e, -p(0) * x * e;
    return g;
  };
  Eigen::VectorXd p0(2);
  p0 << std::exp(icept), -slope;
  return curve_fit(model, dmodel, n, h, p0, {"A", "rate"});
}

}  // namespace analyze_detail

struct RateEstimate {
  double gamma = std::numeric_limits<double>::quiet_NaN();
  double error = std::numeric_limits<double>::quiet_NaN();
  int nFits = 0;     // fits that converged
  bool flagged = false;  // some start points failed
};

// Late-time decay rate of a peak-height series: one single-exponential fit
// per start point n_sweep = 15..20, each running to the last sample above
// three times the noise floor. Returns the mean rate; the error is the
// larger of the mean individual fit error and the spread of the six
// results.
inline RateEstimate late_time_decay_rate(const PeakHeightSeries& series) {
  constexpr int kFirstStart = 15;
  constexpr int kLastStart = 20;
  if (series.nSweep.empty() || series.nSweep.back() < kLastStart + 3)
    throw AnalysisError("late_time_decay_rate: series does not cover start points 15..20");

  const int last = decay_fit_end(series.heights);

  std::vector<double> rates, errors;
  bool flagged = false;
  for (int start = kFirstStart; start <= kLastStart; ++start) {
    std::vector<double> n, h;
    for (int i = 0; i <= last; ++i) {
      if (series.nSweep[i] < start) continue;
      if (series.heights[i] <= 0.0) continue;
      n.push_back(series.nSweep[i]);
      h.push_back(series.heights[i]);
    }
    try {
      FitResult fit = analyze_detail::exponential_fit(n, h);
      if (!fit.converged || !std::isfinite(fit.param("rate"))) throw AnalysisError("fit failed");
      rates.push_back(fit.param("rate"));
      errors.push_back(fit.error("rate"));
    } catch (const std::exception&) {
      flagged = true;
    }
  }
  if (rates.empty()) throw AnalysisError("late_time_decay_rate: no start point produced a fit");

  RateEstimate out;
  out.nFits = static_cast<int>(rates.size());
  out.flagged = flagged;
  out.gamma = std::accumulate(rates.begin(), rates.end(), 0.0) / rates.size();
  const double meanErr = std::accumulate(errors.begin(), errors.end(), 0.0) / errors.size();
  double var = 0.0;
  for (double r : rates) var += (r - out.gamma) * (r - out.gamma);
  const double sd = rates.size() > 1 ? std::sqrt(var / rates.size()) : 0.0;
  out.error = std::max(meanErr, sd);
  return out;
}

// Decay rate of a single time trace from its subharmonic-period
// subsequence: keeps cycles n >= nMin with n divisible by the order and a
// positive value, and fits log-linear decay. This is the per-realization
// rate entering the ensemble histograms.
inline double trace_decay_rate(const TimeTrace& trace, int order, int nMin = 40) {
  std::vector<double> n, h;
  for (size_t k = 0; k < trace.values.size(); ++k) {
    if (static_cast<int>(k) < nMin || k % order != 0) continue;
    if (trace.values[k] <= 0.0) continue;
    n.push_back(static_cast<double>(k));
    h.push_back(trace.values[k]);
  }
  if (n.size() < 5) throw AnalysisError("trace_decay_rate: fewer than 5 usable late-time points");
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const int m = static_cast<int>(n.size());
  for (int i = 0; i < m; ++i) {
    const double y = std::log(h[i]);
    sx += n[i];
    sy += y;
    sxx += n[i] * n[i];
    sxy += n[i] * y;
  }
  return -(m * sxy - sx * sy) / (m * sxx - sx * sx);
}

// Stretched exponential A exp[-(n/n_tau)^beta] with beta restricted to
// (0, 2]. The series is truncated where it decays into the noise floor.
inline FitResult fit_stretched_exponential(const PeakHeightSeries& series) {
  const int last = decay_fit_end(series.heights);
  std::vector<double> n, h;
  for (int i = 0; i <= last; ++i) {
    if (series.heights[i] <= 0.0) continue;
    n.push_back(series.nSweep[i]);
    h.push_back(series.heights[i]);
  }
  if (n.size() < 10)
    throw AnalysisError("fit_stretched_exponential: fewer than 10 points above the noise floor");

  auto model = [](double x, const Eigen::VectorXd& p) {
    const double u = x / p(1);
    return p(0) * std::exp(-(u > 0 ? std::pow(u, p(2)) : 0.0));
  };
  auto dmodel = [](double x, const Eigen::VectorXd& p) {
    Eigen::VectorXd g(3);
    const double u = x / p(1);
    const double upow = u > 0 ? std::pow(u, p(2)) : 0.0;
    const double e = std::exp(-upow);
    g(0) = e;
    g(1) = p(0) * e * p(2) * upow / p(1);
    g(2) = u > 0 ? -p(0) * e * upow * std::log(u) : 0.0;
    return g;
  };

  const double A0 = h.front();
  double nTau0 = n.back();
  for (size_t i = 0; i < h.size(); ++i)
    if (h[i] < A0 / M_E) {
      nTau0 = std::max(1.0, n[i]);
      break;
    }
  Eigen::VectorXd p0(3);
  p0 << A0, nTau0, 0.8;

  LMOptions opts;
  opts.lower = Eigen::Vector3d(1e-12, 1e-6, 1e-3);
  opts.upper = Eigen::Vector3d(10.0 * A0 + 1e-12, 1e6, 2.0);
  return curve_fit(model, dmodel, n, h, p0, {"A", "n_tau", "beta"}, opts);
}

// ---------------------------------------------------------------------------
// Super-Gaussian crystalline-fraction profile and phase boundary
// ---------------------------------------------------------------------------

// f(eps) = f_max exp[-((|eps - eps0|/sigma)^p) / 2].
inline double super_gaussian(double eps, double fMax, double eps0, double sigma, double p) {
  const double u = std::abs(eps - eps0) / sigma;
  return fMax * std::exp(-0.5 * (u > 0 ? std::pow(u, p) : 0.0));
}

inline FitResult fit_super_gaussian(const std::vector<double>& eps,
                                    const std::vector<double>& f) {
  if (eps.size() != f.size()) throw AnalysisError("fit_super_gaussian: size mismatch");
  if (eps.size() < 6) throw AnalysisError("fit_super_gaussian: need at least 6 points");
  const double fLo = *std::min_element(f.begin(), f.end());
  const double fHi = *std::max_element(f.begin(), f.end());
  if (fHi - fLo < 1e-12) throw AnalysisError("fit_super_gaussian: degenerate data");

  auto model = [](double x, const Eigen::VectorXd& p) {
    return super_gaussian(x, p(0), p(1), p(2), p(3));
  };
  auto dmodel = [](double x, const Eigen::VectorXd& p) {
    Eigen::VectorXd g(4);
    const double d = x - p(1);
    const double u = std::abs(d) / p(2);
    const double upow = u > 0 ? std::pow(u, p(3)) : 0.0;
    const double e = std::exp(-0.5 * upow);
    g(0) = e;
    if (u > 0) {
      const double common = p(0) * e * 0.5 * p(3) * upow;
      g(1) = common / d;                 // d/d eps0: sign(d)/|d| = 1/d
      g(2) = common / p(2);              // d/d sigma
      g(3) = -p(0) * e * 0.5 * upow * std::log(u);
    } else {
      g(1) = g(2) = g(3) = 0.0;
    }
    return g;
  };

  // Moment-based starting point: peak position from the top of the curve,
  // width from the half-maximum crossing.
  int kMax = 0;
  for (size_t i = 0; i < f.size(); ++i)
    if (f[i] > f[kMax]) kMax = static_cast<int>(i);
  const double eps0Guess = eps[kMax];
  const double epsLo = *std::min_element(eps.begin(), eps.end());
  const double epsHi = *std::max_element(eps.begin(), eps.end());
  double sigmaGuess = 0.25 * (epsHi - epsLo);
  for (size_t i = kMax; i < f.size(); ++i)
    if (f[i] < 0.6065 * f[kMax]) {
      sigmaGuess = std::max(1e-6, std::abs(eps[i] - eps0Guess));
      break;
    }

  Eigen::VectorXd p0(4);
  p0 << fHi, eps0Guess, sigmaGuess, 4.0;
  LMOptions opts;
  opts.lower.resize(4);
  opts.upper.resize(4);
  opts.lower << 1e-9, epsLo, 1e-9, 0.5;
  opts.upper << 2.0 * fHi, epsHi, 4.0 * (epsHi - epsLo) + 1e-9, 40.0;
  return curve_fit(model, dmodel, eps, f, p0, {"f_max", "eps0", "sigma", "p"}, opts);
}

struct BoundaryPoint {
  double period = 0.0;
  double epsilon = std::numeric_limits<double>::quiet_NaN();
  double ci95 = std::numeric_limits<double>::quiet_NaN();
  bool present = false;
};

// Inverts a fitted super-Gaussian at the threshold on the rising-epsilon
// side: eps* = eps0 + sigma (2 ln(f_max/threshold))^{1/p}. Absent when the
// curve never reaches the threshold. The 95% interval propagates the
// parameter covariance through the inversion gradient.
inline BoundaryPoint phase_boundary_point(const FitResult& fit, double period,
                                          double threshold = 0.1) {
  BoundaryPoint out;
  out.period = period;
  const double fMax = fit.param("f_max");
  const double eps0 = fit.param("eps0");
  const double sigma = fit.param("sigma");
  const double p = fit.param("p");
  if (!(fMax > threshold)) return out;

  const double Q = 2.0 * std::log(fMax / threshold);
  const double root = std::pow(Q, 1.0 / p);
  out.epsilon = eps0 + sigma * root;
  out.present = true;

  Eigen::VectorXd g = Eigen::VectorXd::Zero(fit.params.size());
  g(fit.index("f_max")) = sigma * root / (p * Q) * 2.0 / fMax;
  g(fit.index("eps0")) = 1.0;
  g(fit.index("sigma")) = root;
  g(fit.index("p")) = -sigma * root * std::log(Q) / (p * p);
  const double var = g.dot(fit.covariance * g);
  out.ci95 = 1.96 * std::sqrt(std::max(0.0, var));
  return out;
}

inline std::vector<BoundaryPoint> phase_boundary(const std::vector<std::pair<double, FitResult>>& fitsByPeriod,
                                                 double threshold = 0.1) {
  std::vector<BoundaryPoint> out;
  out.reserve(fitsByPeriod.size());
  for (const auto& [period, fit] : fitsByPeriod)
    out.push_back(phase_boundary_point(fit, period, threshold));
  return out;
}

// ---------------------------------------------------------------------------
// Crossover and scaling fits
// ---------------------------------------------------------------------------

struct SaturationResult {
  double tStar = std::numeric_limits<double>::quiet_NaN();
  double error = std::numeric_limits<double>::quiet_NaN();
  bool present = false;
  FitResult fit;
};

// Saturation profile beta(T) = 1/(1 + (c1/T)^{c2}); T* solves beta = 0.9,
// i.e. T* = c1 9^{1/c2}.
inline SaturationResult fit_saturation(const std::vector<double>& period,
                                       const std::vector<double>& beta) {
  if (period.size() != beta.size()) throw AnalysisError("fit_saturation: size mismatch");
  if (period.size() < 5) throw AnalysisError("fit_saturation: need at least 5 points");

  auto model = [](double t, const Eigen::VectorXd& p) {
    return 1.0 / (1.0 + std::pow(p(0) / t, p(1)));
  };
  auto dmodel = [](double t, const Eigen::VectorXd& p) {
    Eigen::VectorXd g(2);
    const double u = std::pow(p(0) / t, p(1));
    const double den = (1.0 + u) * (1.0 + u);
    g(0) = -u * p(1) / p(0) / den;
    g(1) = -u * std::log(p(0) / t) / den;
    return g;
  };

  const double tMid = period[period.size() / 2];
  Eigen::VectorXd p0(2);
  p0 << tMid, 2.0;
  LMOptions opts;
  opts.lower = Eigen::Vector2d(1e-9, 0.05);
  opts.upper = Eigen::Vector2d(1e9, 50.0);
  SaturationResult out;
  out.fit = curve_fit(model, dmodel, period, beta, p0, {"c1", "c2"}, opts);
  if (!out.fit.converged) return out;

  const double c1 = out.fit.param("c1");
  const double c2 = out.fit.param("c2");
  const double pow9 = std::pow(9.0, 1.0 / c2);
  out.tStar = c1 * pow9;
  if (!std::isfinite(out.tStar)) return out;
  // A crossing extrapolated far beyond the measured periods means the data
  // never approached 0.9; the transition point is reported as absent.
  const double tMax = *std::max_element(period.begin(), period.end());
  if (out.tStar > 10.0 * tMax) return out;
  Eigen::Vector2d g(pow9, -c1 * pow9 * std::log(9.0) / (c2 * c2));
  out.error = 1.96 * std::sqrt(std::max(0.0, double(g.dot(out.fit.covariance * g))));
  out.present = true;
  return out;
}

// Gamma(eps) = Gamma0 + a eps^2 by linear least squares in eps^2.
inline FitResult fit_quadratic_rate(const std::vector<double>& eps,
                                    const std::vector<double>& gamma) {
  if (eps.size() != gamma.size()) throw AnalysisError("fit_quadratic_rate: size mismatch");
  if (eps.size() < 4) throw AnalysisError("fit_quadratic_rate: need at least 4 points");
  Eigen::MatrixXd X(eps.size(), 2);
  Eigen::VectorXd y(eps.size());
  for (size_t i = 0; i < eps.size(); ++i) {
    X(i, 0) = 1.0;
    X(i, 1) = eps[i] * eps[i];
    y(i) = gamma[i];
  }
  try {
    return linear_fit(X, y, {"Gamma0", "a"});
  } catch (const std::invalid_argument& err) {
    throw AnalysisError(std::string("fit_quadratic_rate: ") + err.what());
  }
}

// ---------------------------------------------------------------------------
// Decay-rate histogram
// ---------------------------------------------------------------------------

struct HistogramResult {
  double mode = std::numeric_limits<double>::quiet_NaN();
  double spread = std::numeric_limits<double>::quiet_NaN();
  bool flagged = false;  // asymmetric-Gaussian fit replaced by empirical mode
  std::vector<double> binCenters;
  std::vector<double> counts;
  FitResult fit;
};

// Histogram with Freedman-Diaconis binning, fitted to a two-sided Gaussian
// sharing mode and amplitude with independent left/right widths. The
// returned spread is the average of the two widths. Falls back to the
// highest bin and the normalized interquartile range when the fit fails.
inline HistogramResult rate_histogram(std::vector<double> rates) {
  if (rates.size() < 30) throw AnalysisError("rate_histogram: need at least 30 rates");
  std::sort(rates.begin(), rates.end());
  const int nR = static_cast<int>(rates.size());
  const double q1 = rates[nR / 4];
  const double q3 = rates[(3 * nR) / 4];
  const double iqr = q3 - q1;
  const double lo = rates.front();
  const double hi = rates.back();

  HistogramResult out;
  if (hi - lo < 1e-15) {
    out.mode = rates.front();
    out.spread = 0.0;
    out.binCenters = {rates.front()};
    out.counts = {static_cast<double>(nR)};
    return out;
  }

  double width = 2.0 * iqr / std::cbrt(static_cast<double>(nR));
  if (width <= 0.0) width = (hi - lo) / 16.0;
  int nBins = static_cast<int>(std::ceil((hi - lo) / width));
  nBins = std::clamp(nBins, 8, 64);
  width = (hi - lo) / nBins;

  out.binCenters.resize(nBins);
  out.counts.assign(nBins, 0.0);
  for (int b = 0; b < nBins; ++b) out.binCenters[b] = lo + (b + 0.5) * width;
  for (double r : rates) {
    int b = std::min(nBins - 1, static_cast<int>((r - lo) / width));
    out.counts[b] += 1.0;
  }

  int bMax = 0;
  for (int b = 0; b < nBins; ++b)
    if (out.counts[b] > out.counts[bMax]) bMax = b;
  const double empiricalMode = out.binCenters[bMax];
  const double empiricalSpread = iqr / 1.349;

  auto model = [](double x, const Eigen::VectorXd& p) {
    const double s = x < p(0) ? p(2) : p(3);
    const double d = (x - p(0)) / s;
    return p(1) * std::exp(-0.5 * d * d);
  };
  auto dmodel = [](double x, const Eigen::VectorXd& p) {
    Eigen::VectorXd g = Eigen::VectorXd::Zero(4);
    const bool left = x < p(0);
    const double s = left ? p(2) : p(3);
    const double d = (x - p(0)) / s;
    const double e = std::exp(-0.5 * d * d);
    g(0) = p(1) * e * d / s;
    g(1) = e;
    g(left ? 2 : 3) = p(1) * e * d * d / s;
    return g;
  };

  Eigen::VectorXd p0(4);
  p0 << empiricalMode, out.counts[bMax], std::max(empiricalSpread, width),
      std::max(empiricalSpread, width);
  LMOptions opts;
  opts.lower.resize(4);
  opts.upper.resize(4);
  opts.lower << lo, 1e-9, width * 0.1, width * 0.1;
  opts.upper << hi, 10.0 * nR, hi - lo + width, hi - lo + width;
  FitResult fit = curve_fit(model, dmodel, out.binCenters, out.counts, p0,
                            {"mode", "amplitude", "sigma_left", "sigma_right"}, opts);
  out.fit = fit;
  if (fit.converged && std::isfinite(fit.param("mode"))) {
    out.mode = fit.param("mode");
    out.spread = 0.5 * (fit.param("sigma_left") + fit.param("sigma_right"));
  } else {
    out.mode = empiricalMode;
    out.spread = empiricalSpread;
    out.flagged = true;
  }
  return out;
}

}  // namespace dtc
