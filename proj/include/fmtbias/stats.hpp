#pragma once

// DCR / FPR and the three tests used on them: exact two-sided binomial,
// Spearman rank correlation, Wilcoxon signed-rank (exact for small n).

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <vector>

#include <boost/math/distributions/students_t.hpp>

#include "fmtbias/error.hpp"

namespace fmtbias {

struct VerdictCounts {
  std::uint64_t pref_a = 0;
  std::uint64_t pref_b = 0;
  std::uint64_t both = 0;
  std::uint64_t unresolved = 0;  // tallied, never in a denominator
  std::uint64_t neither = 0;     // same

  VerdictCounts& operator+=(const VerdictCounts& o) noexcept {
    pref_a += o.pref_a;
    pref_b += o.pref_b;
    both += o.both;
    unresolved += o.unresolved;
    neither += o.neither;
    return *this;
  }
  bool operator==(const VerdictCounts&) const = default;
};

// Both / (PrefA + PrefB + Both)
inline double compute_dcr(const VerdictCounts& c) {
  const std::uint64_t total = c.pref_a + c.pref_b + c.both;
  if (total == 0) throw Error(Errc::EmptyCell, "DCR undefined: no PrefA/PrefB/Both verdicts");
  return static_cast<double>(c.both) / static_cast<double>(total);
}

// PrefA / (PrefA + PrefB)
inline double compute_fpr(const VerdictCounts& c) {
  const std::uint64_t total = c.pref_a + c.pref_b;
  if (total == 0) throw Error(Errc::EmptyCell, "FPR undefined: no single-sided verdicts");
  return static_cast<double>(c.pref_a) / static_cast<double>(total);
}

enum class TestMethod { ExactBinomial, Spearman, WilcoxonExact, WilcoxonNormal };

inline std::string_view to_string(TestMethod m) noexcept {
  switch (m) {
    case TestMethod::ExactBinomial: return "exact-binomial";
    case TestMethod::Spearman: return "spearman";
    case TestMethod::WilcoxonExact: return "wilcoxon-exact";
    case TestMethod::WilcoxonNormal: return "wilcoxon-normal";
  }
  return "";
}

struct TestResult {
  double statistic = 0.0;
  double p_value = 1.0;
  std::size_t n = 0;
  TestMethod method = TestMethod::ExactBinomial;
};

enum class BinomialMethod { DoubledTail, MinLikelihood };

namespace detail {

// Binomial(n, p) pmf for k = 0..n. Small n uses the multiplicative
// recurrence from pmf(0) in long double, which is exact for p = 1/2 (every
// term is an integer times 2^-n); large n goes through lgamma.
inline std::vector<long double> binomial_pmf(std::uint64_t n, long double p) {
  std::vector<long double> pmf(n + 1);
  const long double q = 1.0L - p;
  if (n <= 4000) {
    pmf[0] = std::pow(q, static_cast<long double>(n));
    const long double ratio = p / q;
    for (std::uint64_t k = 0; k < n; ++k) {
      pmf[k + 1] = pmf[k] * static_cast<long double>(n - k) / static_cast<long double>(k + 1) * ratio;
    }
    return pmf;
  }
  const long double lp = std::log(p), lq = std::log(q);
  const long double ln_fact_n = std::lgamma(static_cast<long double>(n) + 1.0L);
  for (std::uint64_t k = 0; k <= n; ++k) {
    const long double kk = static_cast<long double>(k);
    pmf[k] = std::exp(ln_fact_n - std::lgamma(kk + 1.0L) - std::lgamma(static_cast<long double>(n - k) + 1.0L) +
                      kk * lp + static_cast<long double>(n - k) * lq);
  }
  return pmf;
}

}  // namespace detail

inline TestResult binomial_two_sided(std::uint64_t k, std::uint64_t n, double p0 = 0.5,
                                     BinomialMethod method = BinomialMethod::DoubledTail) {
  if (n == 0 || k > n) throw Error(Errc::InvalidArgument, "binomial test needs 0 <= k <= n and n >= 1");
  if (!(p0 > 0.0 && p0 < 1.0)) throw Error(Errc::InvalidArgument, "binomial null p0 must lie in (0, 1)");
  const auto pmf = detail::binomial_pmf(n, static_cast<long double>(p0));
  long double p = 0.0L;
  if (method == BinomialMethod::DoubledTail) {
    long double lower = 0.0L, upper = 0.0L;
    for (std::uint64_t i = 0; i <= k; ++i) lower += pmf[i];
    for (std::uint64_t i = k; i <= n; ++i) upper += pmf[i];
    p = 2.0L * std::min(lower, upper);
  } else {
    // sum of outcomes no more likely than the observed one (R / scipy convention)
    const long double cut = pmf[k] * (1.0L + 1e-7L);
    for (auto v : pmf) {
      if (v <= cut) p += v;
    }
  }
  TestResult r;
  r.statistic = static_cast<double>(k);
  r.p_value = static_cast<double>(std::min(1.0L, p));
  r.n = static_cast<std::size_t>(n);
  r.method = TestMethod::ExactBinomial;
  return r;
}

// 1-based average ranks (ties share the mean of their positions).
inline std::vector<double> average_ranks(const std::vector<double>& v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  std::size_t i = 0;
  while (i < idx.size()) {
    std::size_t j = i;
    while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
    const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[idx[k]] = avg;
    i = j + 1;
  }
  return ranks;
}

inline double pearson(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) throw Error(Errc::Degenerate, "correlation undefined for constant input");
  return sxy / std::sqrt(sxx * syy);
}

// rho = Pearson correlation of average ranks; p from the t approximation
// with n - 2 degrees of freedom.
inline TestResult spearman_rho(const std::vector<double>& xs, const std::vector<double>& ys) {
  if (xs.size() != ys.size()) throw Error(Errc::InvalidArgument, "spearman: length mismatch");
  if (xs.size() < 3) throw Error(Errc::InvalidArgument, "spearman: need at least 3 pairs");
  double rho = pearson(average_ranks(xs), average_ranks(ys));
  rho = std::clamp(rho, -1.0, 1.0);
  TestResult r;
  r.statistic = rho;
  r.n = xs.size();
  r.method = TestMethod::Spearman;
  const double df = static_cast<double>(xs.size()) - 2.0;
  if (std::abs(rho) >= 1.0 - 1e-15) {
    r.p_value = 0.0;
  } else {
    const double t = rho * std::sqrt(df / (1.0 - rho * rho));
    boost::math::students_t dist(df);
    r.p_value = std::min(1.0, 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t))));
  }
  return r;
}

inline constexpr std::size_t kWilcoxonExactMax = 20;

// Zeros are dropped before ranking. statistic = min(W+, W-).
inline TestResult wilcoxon_signed_rank(const std::vector<double>& diffs,
                                       std::size_t exact_max = kWilcoxonExactMax) {
  std::vector<double> d;
  for (double x : diffs) {
    if (x != 0.0) d.push_back(x);
  }
  if (d.empty()) throw Error(Errc::Degenerate, "wilcoxon: all differences are zero");
  const std::size_t n = d.size();
  std::vector<double> mags(n);
  for (std::size_t i = 0; i < n; ++i) mags[i] = std::abs(d[i]);
  const auto ranks = average_ranks(mags);

  double w_plus = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (d[i] > 0) w_plus += ranks[i];
  }
  const double total = static_cast<double>(n) * static_cast<double>(n + 1) / 2.0;
  TestResult r;
  r.n = n;
  r.statistic = std::min(w_plus, total - w_plus);

  if (n <= exact_max) {
    // Doubled ranks are integers even with ties; count sign patterns per sum.
    std::vector<std::uint64_t> r2(n);
    std::uint64_t max_sum = 0;
    for (std::size_t i = 0; i < n; ++i) {
      r2[i] = static_cast<std::uint64_t>(std::llround(ranks[i] * 2.0));
      max_sum += r2[i];
    }
    std::vector<double> ways(max_sum + 1, 0.0);
    ways[0] = 1.0;
    std::uint64_t reach = 0;
    for (auto w : r2) {
      for (std::uint64_t s = reach + 1; s-- > 0;) {
        if (ways[s] != 0.0) ways[s + w] += ways[s];
      }
      reach += w;
    }
    const auto obs = static_cast<std::uint64_t>(std::llround(w_plus * 2.0));
    double lower = 0.0, upper = 0.0;
    for (std::uint64_t s = 0; s <= max_sum; ++s) {
      if (s <= obs) lower += ways[s];
      if (s >= obs) upper += ways[s];
    }
    const double denom = std::ldexp(1.0, static_cast<int>(n));
    r.p_value = std::min(1.0, 2.0 * std::min(lower, upper) / denom);
    r.method = TestMethod::WilcoxonExact;
    return r;
  }

  // normal approximation, tie-corrected variance, continuity correction
  const double nn = static_cast<double>(n);
  const double mean = nn * (nn + 1.0) / 4.0;
  double var = nn * (nn + 1.0) * (2.0 * nn + 1.0) / 24.0;
  std::vector<double> sorted = mags;
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && sorted[j] == sorted[i]) ++j;
    const double t = static_cast<double>(j - i);
    var -= (t * t * t - t) / 48.0;
    i = j;
  }
  const double z = std::max(0.0, std::abs(w_plus - mean) - 0.5) / std::sqrt(var);
  r.p_value = std::min(1.0, std::erfc(z / std::sqrt(2.0)));
  r.method = TestMethod::WilcoxonNormal;
  return r;
}

inline double macro_average(const std::vector<double>& values) {
  if (values.empty()) throw Error(Errc::EmptyCell, "macro average of nothing");
  return std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
}

}  // namespace fmtbias
