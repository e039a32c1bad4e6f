#include "ctmc/stats.hpp"

#include "ctmc/process.hpp"

#include <boost/math/distributions/binomial.hpp>
#include <boost/math/distributions/chi_squared.hpp>

#include <algorithm>
#include <numeric>

namespace ctmc {

SignTest sign_test(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw DomainError("sign_test: unpaired samples");
  SignTest out;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] < b[i]) ++out.less;
    else if (a[i] > b[i]) ++out.greater;
    else ++out.ties;
  }
  const int n = out.less + out.greater;
  if (n == 0) return out;
  boost::math::binomial_distribution<double> bin(n, 0.5);
  // P(X >= less) = 1 - P(X <= less - 1).
  out.p_less = out.less == 0 ? 1.0 : boost::math::cdf(boost::math::complement(bin, out.less - 1));
  const int k = std::min(out.less, out.greater);
  out.p_two_sided = std::min(1.0, 2.0 * boost::math::cdf(bin, k));
  return out;
}

namespace {

ChiSquare finish(double stat, int dof) {
  ChiSquare out;
  out.statistic = stat;
  out.dof = dof;
  if (dof < 1) return out;
  boost::math::chi_squared_distribution<double> chi(dof);
  out.p_value = boost::math::cdf(boost::math::complement(chi, stat));
  return out;
}

}  // namespace

ChiSquare chi_square_gof(std::span<const double> counts, std::span<const double> probs, double min_expected) {
  if (counts.size() != probs.size()) throw DomainError("chi_square_gof: size mismatch");
  const double n = std::accumulate(counts.begin(), counts.end(), 0.0);
  double stat = 0.0;
  int cells = 0;
  double pooled_obs = 0.0, pooled_exp = 0.0;
  for (std::size_t i = 0; i < counts.size(); ++i) {
    const double e = n * probs[i];
    if (e < min_expected) {
      pooled_obs += counts[i];
      pooled_exp += e;
      continue;
    }
    stat += (counts[i] - e) * (counts[i] - e) / e;
    ++cells;
  }
  if (pooled_exp > 0.0) {
    stat += (pooled_obs - pooled_exp) * (pooled_obs - pooled_exp) / pooled_exp;
    ++cells;
  } else if (pooled_obs > 0.0) {
    return finish(std::numeric_limits<double>::infinity(), std::max(cells, 1));
  }
  return finish(stat, cells - 1);
}

ChiSquare chi_square_two_sample(std::span<const double> a, std::span<const double> b, double min_expected) {
  if (a.size() != b.size()) throw DomainError("chi_square_two_sample: size mismatch");
  const double na = std::accumulate(a.begin(), a.end(), 0.0);
  const double nb = std::accumulate(b.begin(), b.end(), 0.0);
  const double n = na + nb;
  double stat = 0.0;
  int cells = 0;
  double pa = 0.0, pb = 0.0;
  const auto add = [&](double oa, double ob) {
    const double tot = oa + ob;
    const double ea = tot * na / n;
    const double eb = tot * nb / n;
    if (ea > 0.0) stat += (oa - ea) * (oa - ea) / ea;
    if (eb > 0.0) stat += (ob - eb) * (ob - eb) / eb;
    ++cells;
  };
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double tot = a[i] + b[i];
    if (tot * std::min(na, nb) / n < min_expected) {
      pa += a[i];
      pb += b[i];
      continue;
    }
    add(a[i], b[i]);
  }
  if (pa + pb > 0.0) add(pa, pb);
  return finish(stat, cells - 1);
}

LineFit fit_line(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw DomainError("fit_line needs two or more paired points");
  const double mx = mean(x), my = mean(y);
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
  }
  LineFit f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  return f;
}

double mean(std::span<const double> v) {
  if (v.empty()) return 0.0;
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

}  // namespace ctmc
