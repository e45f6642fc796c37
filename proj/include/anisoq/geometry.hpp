// Copyright 2026 The Anisoq Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "anisoq/error.hpp"
#include "anisoq/rng.hpp"

namespace anisoq {

// Score-aware inner-product quantization weighs the approximation error of
// a datapoint x against a query q by w(<q, x>): queries that score high
// against x matter more. Under a uniform spherical query distribution the
// expected weighted squared error splits into
//
//     loss(x, x~) = h_par * |r_par|^2 + h_perp * |r_perp|^2
//
// where r_par / r_perp are the components of the residual x - x~ parallel
// and orthogonal to x, and h_par / h_perp depend only on w, |x| and the
// dimension. For any non-decreasing w that vanishes on t < 0, h_par >=
// h_perp: parallel error costs more. This header computes the
// decomposition, the h coefficients (by quadrature for step weights, by a
// closed recursion and by its large-d limit for the indicator weight), the
// resulting loss, and a direct Monte-Carlo estimate of the defining
// expectation that serves as an independent check.

// Non-negative, non-decreasing step weights of the inner-product score.
// `indicator(T)` is w(t) = 1[t >= T]; `step` is a staircase given by knot
// positions (>= 0, strictly increasing) and values (non-negative,
// non-decreasing); both vanish for t below the first knot. `constant()` is
// w == 1 on the whole range, the reconstruction-loss case.
class WeightFunction {
 public:
  enum class Kind { constant, indicator, tabulated };

  static WeightFunction constant() { return WeightFunction(Kind::constant); }

  static WeightFunction indicator(double threshold) {
    if (!(threshold >= 0.0))
      throw InvalidThreshold("indicator threshold must be >= 0");
    WeightFunction w(Kind::indicator);
    w.knots_ = {threshold};
    w.values_ = {1.0};
    return w;
  }

  static WeightFunction step(std::vector<double> knots,
                             std::vector<double> values) {
    if (knots.empty() || knots.size() != values.size())
      throw InvalidArgument("step weight needs matching non-empty knots/values");
    for (std::size_t i = 0; i < knots.size(); ++i) {
      if (!(knots[i] >= 0.0))
        throw InvalidThreshold("step knots must be >= 0");
      if (!(values[i] >= 0.0))
        throw InvalidArgument("step values must be >= 0");
      if (i > 0 && !(knots[i] > knots[i - 1]))
        throw InvalidArgument("step knots must be strictly increasing");
      if (i > 0 && values[i] < values[i - 1])
        throw InvalidArgument("step values must be non-decreasing");
    }
    WeightFunction w(Kind::tabulated);
    w.knots_ = std::move(knots);
    w.values_ = std::move(values);
    return w;
  }

  Kind kind() const { return kind_; }

  double threshold() const { return knots_.empty() ? 0.0 : knots_.front(); }

  const std::vector<double>& knots() const { return knots_; }
  const std::vector<double>& values() const { return values_; }

  double operator()(double t) const {
    if (kind_ == Kind::constant) return 1.0;
    if (t < knots_.front()) return 0.0;
    std::size_t lo = 0;
    for (std::size_t i = knots_.size(); i-- > 0;) {
      if (t >= knots_[i]) {
        lo = i;
        break;
      }
    }
    return values_[lo];
  }

 private:
  explicit WeightFunction(Kind kind) : kind_(kind) {}

  Kind kind_;
  std::vector<double> knots_;
  std::vector<double> values_;
};

// Loss coefficients for one datapoint. `eta` is h_par / h_perp; training
// behaviour depends only on this ratio and the relative scale across
// datapoints. When both coefficients vanish (indicator threshold at or
// above the norm) eta is reported as infinity: only parallel error counts.
struct AnisotropicWeights {
  double h_parallel = 1.0;
  double h_perpendicular = 1.0;
  double eta = 1.0;

  bool is_isotropic() const { return h_parallel == h_perpendicular; }

  static AnisotropicWeights from_h(double h_parallel, double h_perpendicular) {
    if (!(h_parallel >= 0.0) || !(h_perpendicular >= 0.0) ||
        !std::isfinite(h_parallel) || !std::isfinite(h_perpendicular))
      throw InvalidArgument("h coefficients must be finite and >= 0");
    AnisotropicWeights w;
    w.h_parallel = h_parallel;
    w.h_perpendicular = h_perpendicular;
    w.eta = h_perpendicular > 0.0
                ? h_parallel / h_perpendicular
                : std::numeric_limits<double>::infinity();
    return w;
  }

  static AnisotropicWeights from_eta(double eta) {
    if (!(eta >= 0.0)) throw InvalidArgument("eta must be >= 0");
    return from_h(eta, 1.0);
  }

  static AnisotropicWeights isotropic(double h = 1.0) { return from_h(h, h); }
};

struct ResidualDecomposition {
  std::vector<double> parallel;       // component of x - x~ along x
  std::vector<double> perpendicular;  // remainder
};

struct MonteCarloEstimate {
  double estimate = 0.0;
  double standard_error = 0.0;
};

// Accuracy targets for the adaptive Simpson rule. Acceptance is driven by
// the relative term; abs_tol only floors the error budget for integrals
// whose overall scale estimate sits near zero. A purely absolute criterion
// would be useless here: the truncated sin^d integrals underflow any fixed
// absolute tolerance at large d while their ratio (eta) must stay accurate.
struct QuadratureConfig {
  double abs_tol = 1e-10;
  double rel_tol = 1e-12;
  int max_depth = 40;
};

namespace detail {

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) s += a[j] * b[j];
  return s;
}

inline double norm2(std::span<const double> a) { return dot(a, a); }

// Squared residual norm and the residual/datapoint dot product, accumulated
// in ascending component order. Every assignment path (vq, pq subspaces)
// funnels through this so that the documented reduction properties
// (eta = 1 vs k-means, M = 1 vs vq) hold bit-for-bit.
inline void residual_terms(std::span<const double> x, std::span<const double> c,
                           double& dist2, double& rdot) {
  double d2 = 0.0, rd = 0.0;
  for (std::size_t j = 0; j < x.size(); ++j) {
    const double diff = x[j] - c[j];
    d2 += diff * diff;
    rd += diff * x[j];
  }
  dist2 = d2;
  rdot = rd;
}

// loss = h_perp * |r|^2 + (h_par - h_perp) * <r, x>^2 / |x|^2, the fused
// form of h_par*|r_par|^2 + h_perp*|r_perp|^2.
inline double combined_loss(double dist2, double rdot,
                            const AnisotropicWeights& w, double inv_norm2) {
  return w.h_perpendicular * dist2 +
         (w.h_parallel - w.h_perpendicular) * (rdot * rdot) * inv_norm2;
}

template <class F>
double simpson_recurse(const F& f, double a, double fa, double m, double fm,
                       double b, double fb, double whole,
                       const QuadratureConfig& cfg, double floor_share,
                       int depth) {
  const double lm = 0.5 * (a + m);
  const double rm = 0.5 * (m + b);
  const double flm = f(lm);
  const double frm = f(rm);
  const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
  const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
  const double refined = left + right;
  const double delta = refined - whole;
  // Relative acceptance per interval; the integrands are non-negative, so
  // the local relative bound carries over to the total. `floor_share` marks
  // contributions too small to matter at the overall scale.
  const double tol = std::max(cfg.rel_tol * std::abs(refined), floor_share);
  if (std::abs(delta) <= 15.0 * tol) return refined + delta / 15.0;
  if (depth <= 0)
    throw QuadratureFailure("adaptive Simpson did not converge (residual " +
                            std::to_string(std::abs(delta)) + ")");
  return simpson_recurse(f, a, fa, lm, flm, m, fm, left, cfg,
                         0.5 * floor_share, depth - 1) +
         simpson_recurse(f, m, fm, rm, frm, b, fb, right, cfg,
                         0.5 * floor_share, depth - 1);
}

template <class F>
double adaptive_simpson(const F& f, double a, double b,
                        const QuadratureConfig& cfg) {
  if (!(b > a)) return 0.0;
  // Fixed pre-split so that sharply peaked integrands (sin^d for large d,
  // which vanishes at both endpoints and at pi/2) cannot fool the first
  // coarse estimate into early acceptance. A 64-panel rough pass sets the
  // overall scale used for the insignificance floor.
  constexpr int kPanels = 16;
  constexpr int kRough = 64;
  double rough = 0.0;
  {
    const double w = (b - a) / kRough;
    for (int p = 0; p < kRough; ++p) {
      const double pa = a + p * w;
      rough += w / 6.0 * (f(pa) + 4.0 * f(pa + 0.5 * w) + f(pa + w));
    }
  }
  if (rough == 0.0) return 0.0;
  const double floor_total =
      std::max(cfg.rel_tol * std::abs(rough), cfg.abs_tol * 1e-200);

  const double width = (b - a) / kPanels;
  double total = 0.0;
  for (int p = 0; p < kPanels; ++p) {
    const double pa = a + p * width;
    const double pb = p + 1 == kPanels ? b : pa + width;
    const double pm = 0.5 * (pa + pb);
    const double fa = f(pa), fm = f(pm), fb = f(pb);
    const double whole = (pb - pa) / 6.0 * (fa + 4.0 * fm + fb);
    total += simpson_recurse(f, pa, fa, pm, fm, pb, fb, whole, cfg,
                             floor_total / kPanels, cfg.max_depth);
  }
  return total;
}

}  // namespace detail

// Splits x - x_quant into the component along x and the orthogonal rest.
inline ResidualDecomposition residual_decompose(std::span<const double> x,
                                                std::span<const double> x_quant) {
  if (x.size() != x_quant.size())
    throw DimensionMismatch("datapoint and quantization dimensions differ");
  const double n2 = detail::norm2(x);
  if (n2 == 0.0)
    throw ZeroNormDatapoint("residual decomposition undefined at |x| = 0");
  double rdot = 0.0;
  for (std::size_t j = 0; j < x.size(); ++j) rdot += (x[j] - x_quant[j]) * x[j];
  const double scale = rdot / n2;
  ResidualDecomposition out;
  out.parallel.resize(x.size());
  out.perpendicular.resize(x.size());
  for (std::size_t j = 0; j < x.size(); ++j) {
    out.parallel[j] = scale * x[j];
    out.perpendicular[j] = (x[j] - x_quant[j]) - out.parallel[j];
  }
  return out;
}

// h coefficients for a step weight by quadrature over the query polar angle.
// A step weight is a positive combination of indicators, and an indicator
// truncates the integrand support to [0, arccos(T/|x|)], so each segment is
// smooth. Conventions follow the integral forms
//     h_par  = integral w(|x| cos t) sin^(d-2) t cos^2 t dt
//     h_perp = integral w(|x| cos t) sin^d t dt / (d - 1)
// which make h_par / h_perp equal eta_exact for the indicator weight. Both
// carry a shared d-dependent proportionality constant relative to the true
// expectation; only ratios matter downstream.
inline AnisotropicWeights h_coefficients(const WeightFunction& w, double norm,
                                         int d,
                                         const QuadratureConfig& cfg = {}) {
  if (!(norm > 0.0)) throw InvalidArgument("norm must be positive");
  if (d < 2) throw InvalidArgument("h coefficients need d >= 2");

  const auto f_par = [d](double t) {
    const double c = std::cos(t);
    return std::pow(std::sin(t), d - 2) * c * c;
  };
  const auto f_perp = [d](double t) { return std::pow(std::sin(t), d); };

  double h_par = 0.0, h_perp = 0.0;
  const auto add_segment = [&](double alpha, double coef) {
    if (!(alpha > 0.0) || !(coef > 0.0)) return;
    h_par += coef * detail::adaptive_simpson(f_par, 0.0, alpha, cfg);
    h_perp += coef * detail::adaptive_simpson(f_perp, 0.0, alpha, cfg) /
              static_cast<double>(d - 1);
  };

  constexpr double kPi = 3.14159265358979323846;
  switch (w.kind()) {
    case WeightFunction::Kind::constant:
      add_segment(kPi, 1.0);
      break;
    case WeightFunction::Kind::indicator:
    case WeightFunction::Kind::tabulated: {
      double prev = 0.0;
      for (std::size_t i = 0; i < w.knots().size(); ++i) {
        const double inc = w.values()[i] - prev;
        prev = w.values()[i];
        if (w.knots()[i] < norm)
          add_segment(std::acos(w.knots()[i] / norm), inc);
      }
      break;
    }
  }
  return AnisotropicWeights::from_h(h_par, h_perp);
}

// eta = h_par/h_perp for the indicator weight w(t) = 1[t >= T], evaluated
// through the recursion d*I_d = (d-1)*I_{d-2} - cos(a) sin^(d-1)(a) on
// I_d = integral_0^a sin^d, a = arccos(T/norm), as
// eta = (d-1) (I_{d-2}/I_d - 1). The recursion is carried on the ratio
// G_m = cos(a) sin^(m-1)(a) / I_m, which stays O(d) while I_m itself
// underflows geometrically. I_d is the minimal solution of the recurrence,
// so the forward direction amplifies rounding by 1/sin^2(a) per step; it is
// used only while the total amplification stays harmless, otherwise G is
// obtained by the backward (Miller-style) iteration from its asymptote
// G_m ~ m cot^2(a), which contracts seed error by sin^2(a) per step.
inline double eta_exact(double threshold, double norm, int d) {
  if (!(norm > 0.0)) throw InvalidArgument("norm must be positive");
  if (!(threshold >= 0.0) || threshold >= norm)
    throw InvalidThreshold("need 0 <= T < norm");
  if (d < 3) throw InvalidArgument("eta_exact needs d >= 3");

  const double c = threshold / norm;
  const double dm1 = static_cast<double>(d - 1);
  if (c == 0.0) return 1.0;  // boundary term vanishes for every d

  const double alpha = std::acos(c);
  const double sa = std::sin(alpha);
  const double s2 = sa * sa;
  const double log_amp = -std::log(s2);  // per-step forward error growth

  double g;  // G_{d-2} on exit
  if (static_cast<double>(d) * 0.5 * log_amp <= 18.0) {
    int m;
    if (d % 2 == 0) {
      const double i2 = 0.5 * (alpha - c * sa);
      g = c * sa / i2;
      m = 2;
    } else {
      g = c / (1.0 - c);
      m = 1;
    }
    while (m < d - 2) {
      m += 2;
      g = g * s2 * m / (m - 1 - g * s2);
    }
  } else {
    const int extra = static_cast<int>(std::ceil(34.0 / log_amp)) + 1;
    long m = static_cast<long>(d - 2) + 2L * extra;
    const double cot2 = (c * c) / s2;
    g = static_cast<double>(m) * cot2;  // asymptotic seed
    while (m > d - 2) {
      // inverse of the forward map, contracting towards the true ratio
      g = (m - 1) * g / (s2 * (m + g));
      m -= 2;
    }
  }
  // (d-1) * (I_{d-2}/I_d - 1) without cancellation.
  return dm1 * (1.0 + g * s2) / (dm1 - g * s2);
}

// Large-d proxy for eta_exact: (d-1) (T/norm)^2 / (1 - (T/norm)^2). The
// exact ratio approaches this from above as d grows; training uses the
// proxy because it is trivial to evaluate per datapoint norm.
inline double eta_limit(double threshold, double norm, int d) {
  if (!(norm > 0.0)) throw InvalidArgument("norm must be positive");
  if (!(threshold >= 0.0) || threshold >= norm)
    throw InvalidThreshold("need 0 <= T < norm");
  if (d < 2) throw InvalidArgument("eta_limit needs d >= 2");
  const double rho = (threshold / norm) * (threshold / norm);
  return static_cast<double>(d - 1) * rho / (1.0 - rho);
}

// h_par |r_par|^2 + h_perp |r_perp|^2 in fused form.
inline double anisotropic_loss(std::span<const double> x,
                               std::span<const double> x_quant,
                               const AnisotropicWeights& w) {
  if (x.size() != x_quant.size())
    throw DimensionMismatch("datapoint and quantization dimensions differ");
  const double n2 = detail::norm2(x);
  if (n2 == 0.0) throw ZeroNormDatapoint("loss undefined at |x| = 0");
  double dist2 = 0.0, rdot = 0.0;
  detail::residual_terms(x, x_quant, dist2, rdot);
  return std::max(0.0, detail::combined_loss(dist2, rdot, w, 1.0 / n2));
}

// Direct sampling of E_q[w(<q,x>) <q, x - x~>^2] with q uniform on the unit
// sphere. Unbiased and deterministic given the seed. Relative to
// anisotropic_loss the estimate carries one unknown proportionality
// constant shared by all (x, x~) pairs at a fixed dimension, so ratio
// comparisons between pairs validate the analytic decomposition end to end.
inline MonteCarloEstimate monte_carlo_loss(std::span<const double> x,
                                           std::span<const double> x_quant,
                                           const WeightFunction& w,
                                           std::size_t num_samples,
                                           std::uint64_t seed) {
  if (x.size() != x_quant.size())
    throw DimensionMismatch("datapoint and quantization dimensions differ");
  if (x.size() < 2) throw InvalidArgument("monte_carlo_loss needs d >= 2");
  if (num_samples < 1000)
    throw InvalidArgument("need at least 1000 samples");
  if (detail::norm2(x) == 0.0)
    throw ZeroNormDatapoint("loss undefined at |x| = 0");

  const std::size_t d = x.size();
  std::vector<double> diff(d);
  for (std::size_t j = 0; j < d; ++j) diff[j] = x[j] - x_quant[j];

  Rng rng(seed);
  std::vector<double> q(d);
  double sum = 0.0, sum_sq = 0.0;
  for (std::size_t s = 0; s < num_samples; ++s) {
    double qn2 = 0.0;
    do {
      qn2 = 0.0;
      for (std::size_t j = 0; j < d; ++j) {
        q[j] = rng.next_gaussian();
        qn2 += q[j] * q[j];
      }
    } while (qn2 == 0.0);
    double tu = 0.0, eu = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      tu += q[j] * x[j];
      eu += q[j] * diff[j];
    }
    const double inv = 1.0 / std::sqrt(qn2);
    const double g = w(tu * inv) * (eu * inv) * (eu * inv);
    sum += g;
    sum_sq += g * g;
  }
  const double nd = static_cast<double>(num_samples);
  MonteCarloEstimate out;
  out.estimate = sum / nd;
  const double var = std::max(0.0, (sum_sq - sum * sum / nd) / (nd - 1.0));
  out.standard_error = std::sqrt(var / nd);
  return out;
}

}  // namespace anisoq
