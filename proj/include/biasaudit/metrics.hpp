#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>

#include "biasaudit/errors.hpp"

namespace biasaudit {

// ---------------------------------------------------------------------------
// Per (condition, group) descriptive statistics over pooled encoded scores.
// ---------------------------------------------------------------------------

struct ScoreSummary {
  std::string condition;
  std::string group;
  std::size_t n = 0;
  double mean = 0.0;
  double sd = 0.0;  // sample standard deviation, n-1 denominator

  friend bool operator==(const ScoreSummary&, const ScoreSummary&) = default;
};

/// Pooled mean and sample SD over every statement x sample score of one
/// group under one condition. The group alignment level beta is this mean.
inline ScoreSummary beta_summary(std::span<const double> scores,
                                 std::string condition, std::string group) {
  if (scores.empty()) {
    throw Error("beta_summary: no scores for condition '" + condition +
                "' group '" + group + "'");
  }
  double sum = 0.0;
  for (double s : scores) sum += s;
  const double mean = sum / static_cast<double>(scores.size());
  double ss = 0.0;
  for (double s : scores) ss += (s - mean) * (s - mean);
  const double sd =
      scores.size() > 1 ? std::sqrt(ss / static_cast<double>(scores.size() - 1)) : 0.0;
  return {std::move(condition), std::move(group), scores.size(), mean, sd};
}

// ---------------------------------------------------------------------------
// Intergroup bias: shift of a group's alignment under an assigned identity
// relative to the identity-free baseline.
// ---------------------------------------------------------------------------

struct IntergroupBias {
  std::string identity;  // condition id of the identity condition
  std::string ingroup;   // group tag the identity aligns with
  double b_in = 0.0;     // beta_ingroup|I - beta_ingroup
  double b_out = 0.0;    // beta_outgroup|I - beta_outgroup

  friend bool operator==(const IntergroupBias&, const IntergroupBias&) = default;
};

/// b_in = conditional ingroup mean - baseline ingroup mean; b_out likewise
/// for the opposing group. Summaries are matched by group tag.
inline IntergroupBias intergroup_bias(const ScoreSummary& baseline_ingroup,
                                      const ScoreSummary& baseline_outgroup,
                                      const ScoreSummary& conditional_ingroup,
                                      const ScoreSummary& conditional_outgroup,
                                      std::string identity) {
  if (baseline_ingroup.group != conditional_ingroup.group ||
      baseline_outgroup.group != conditional_outgroup.group) {
    throw Error("intergroup_bias: group mismatch between baseline and conditional "
                "summaries ('" + baseline_ingroup.group + "'/'" +
                conditional_ingroup.group + "', '" + baseline_outgroup.group +
                "'/'" + conditional_outgroup.group + "')");
  }
  return {std::move(identity), baseline_ingroup.group,
          conditional_ingroup.mean - baseline_ingroup.mean,
          conditional_outgroup.mean - baseline_outgroup.mean};
}

/// Absolute gap between the two groups' alignment under one condition.
/// Scores live on [-3, 3], so the gap lies in [0, 6].
inline double misalignment_delta(const ScoreSummary& a, const ScoreSummary& b) {
  return std::abs(a.mean - b.mean);
}

// ---------------------------------------------------------------------------
// Welch's unequal-variance t-test and Cohen's d.
// ---------------------------------------------------------------------------

struct WelchResult {
  double t = 0.0;
  double df = 0.0;           // Welch-Satterthwaite
  double p_two_sided = 1.0;
  double cohen_d = 0.0;      // RMS-of-SDs denominator
  bool degenerate = false;   // both SDs zero and means equal: t undefined

  friend bool operator==(const WelchResult&, const WelchResult&) = default;
};

namespace detail {

inline double incomplete_beta_cf(double a, double b, double x) {
  // Continued fraction for the regularized incomplete beta (modified
  // Lentz), standard formulation.
  constexpr int kMaxIter = 300;
  constexpr double kEps = 3e-16;
  constexpr double kFpMin = 1e-300;

  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::abs(d) < kFpMin) d = kFpMin;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const int m2 = 2 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kFpMin) d = kFpMin;
    c = 1.0 + aa / c;
    if (std::abs(c) < kFpMin) c = kFpMin;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kFpMin) d = kFpMin;
    c = 1.0 + aa / c;
    if (std::abs(c) < kFpMin) c = kFpMin;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < kEps) break;
  }
  return h;
}

}  // namespace detail

/// Regularized incomplete beta function I_x(a, b).
inline double regularized_incomplete_beta(double a, double b, double x) {
  if (!(a > 0.0) || !(b > 0.0)) {
    throw std::invalid_argument("regularized_incomplete_beta: a, b must be > 0");
  }
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double ln_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                          a * std::log(x) + b * std::log1p(-x);
  const double front = std::exp(ln_front);
  if (x < (a + 1.0) / (a + b + 2.0)) {
    return front * detail::incomplete_beta_cf(a, b, x) / a;
  }
  return 1.0 - front * detail::incomplete_beta_cf(b, a, 1.0 - x) / b;
}

/// Two-sided tail probability of Student's t at |t| with df degrees of
/// freedom: I_{df/(df+t^2)}(df/2, 1/2).
inline double student_t_two_sided_p(double t, double df) {
  if (df <= 0.0) throw std::invalid_argument("student_t_two_sided_p: df must be > 0");
  if (std::isinf(t)) return 0.0;
  return regularized_incomplete_beta(df / 2.0, 0.5, df / (df + t * t));
}

/// Welch's t-test plus Cohen's d from summary statistics.
inline WelchResult welch_test(double mean_a, double sd_a, std::size_t n_a,
                              double mean_b, double sd_b, std::size_t n_b) {
  if (n_a < 2 || n_b < 2) {
    throw Error("welch_test: both samples need n >= 2");
  }
  const double va = sd_a * sd_a;
  const double vb = sd_b * sd_b;
  const double diff = mean_a - mean_b;

  WelchResult result;
  if (va == 0.0 && vb == 0.0) {
    if (diff == 0.0) {
      // No variance, no difference: the statistic is undefined.
      result.degenerate = true;
      result.t = result.df = result.cohen_d = std::numeric_limits<double>::quiet_NaN();
      result.p_two_sided = std::numeric_limits<double>::quiet_NaN();
      return result;
    }
    const double inf = std::numeric_limits<double>::infinity();
    result.t = diff > 0 ? inf : -inf;
    result.df = static_cast<double>(n_a + n_b - 2);
    result.p_two_sided = 0.0;
    result.cohen_d = result.t;
    return result;
  }

  const double sa = va / static_cast<double>(n_a);
  const double sb = vb / static_cast<double>(n_b);
  result.t = diff / std::sqrt(sa + sb);
  result.df = (sa + sb) * (sa + sb) /
              (sa * sa / static_cast<double>(n_a - 1) +
               sb * sb / static_cast<double>(n_b - 1));
  result.p_two_sided = student_t_two_sided_p(result.t, result.df);
  result.cohen_d = diff / std::sqrt((va + vb) / 2.0);
  return result;
}

inline WelchResult welch_test(const ScoreSummary& a, const ScoreSummary& b) {
  return welch_test(a.mean, a.sd, a.n, b.mean, b.sd, b.n);
}

/// Display convention for p-values: "p < .001" below the threshold,
/// otherwise four significant digits.
inline std::string format_p(double p) {
  if (std::isnan(p)) return "n/a";
  if (p < 0.001) return "< .001";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4g", p);
  return buf;
}

}  // namespace biasaudit
