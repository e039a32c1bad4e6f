#include "ctmc/samplers.hpp"

#include <unsupported/Eigen/FFT>

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <random>

namespace ctmc {

TimeGrid edm_grid(double t_min, double t_max, int n, double rho) {
  if (n < 2) throw DomainError("edm_grid needs at least 2 points");
  if (!(t_min >= 0.0 && t_min < t_max && t_max <= 1.0)) throw DomainError("edm_grid needs 0 <= t_min < t_max <= 1");
  if (!(rho >= 1.0)) throw DomainError("edm_grid needs rho >= 1");
  TimeGrid grid;
  grid.rho = rho;
  grid.times.resize(static_cast<std::size_t>(n));
  const double hi = std::pow(t_max, 1.0 / rho);
  const double lo = std::pow(t_min, 1.0 / rho);
  for (int i = 0; i < n; ++i) {
    const double frac = static_cast<double>(i) / static_cast<double>(n - 1);
    grid.times[static_cast<std::size_t>(i)] = std::pow(hi + frac * (lo - hi), rho);
  }
  grid.times.front() = t_max;
  grid.times.back() = t_min;
  for (int i = 1; i < n; ++i)
    if (!(grid.times[i] < grid.times[i - 1])) throw DomainError("edm_grid produced a non-decreasing step");
  return grid;
}

int sample_categorical(std::span<const double> weights, Stream& rng) {
  double total = 0.0;
  for (double w : weights) total += w;
  if (!(total > 0.0)) throw DomainError("categorical with no mass");
  const double u = rng.uniform() * total;
  double acc = 0.0;
  int last = -1;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (weights[i] <= 0.0) continue;
    acc += weights[i];
    last = static_cast<int>(i);
    if (u < acc) return last;
  }
  return last;
}

namespace {

// Poisson count by inversion for moderate means, std otherwise.
int poisson(double lambda, Stream& rng) {
  if (lambda <= 0.0) return 0;
  if (lambda > 30.0) return std::poisson_distribution<int>(lambda)(rng);
  const double u = rng.uniform();
  double p = std::exp(-lambda);
  double cdf = p;
  int k = 0;
  while (u >= cdf && k < 1000) {
    ++k;
    p *= lambda / k;
    cdf += p;
  }
  return k;
}

}  // namespace

void euler_move(int states, std::span<const double> rates, double dt, std::span<int> x, Stream& rng,
                StepFlags& flags) {
  double mass = 0.0;
  for (std::size_t d = 0; d < x.size(); ++d)
    for (int v = 0; v < states; ++v)
      if (v != x[d]) mass += rates[d * states + v];
  mass *= dt;
  if (mass > 1.0) ++flags.invalid;
  if (!(mass > 0.0)) return;
  const double u = rng.uniform() * std::max(mass, 1.0);
  if (u >= mass) return;
  double acc = 0.0;
  for (std::size_t d = 0; d < x.size(); ++d) {
    for (int v = 0; v < states; ++v) {
      if (v == x[d]) continue;
      acc += dt * rates[d * states + v];
      if (u < acc) {
        x[d] = v;
        return;
      }
    }
  }
}

void tau_leap_move(int states, bool ordered, std::span<const double> rates, double dt, std::span<int> x,
                   Stream& rng, StepFlags& flags) {
  for (std::size_t d = 0; d < x.size(); ++d) {
    auto row = rates.subspan(d * states, states);
    double total = 0.0;
    for (int v = 0; v < states; ++v)
      if (v != x[d]) total += row[v];
    if (!(total > 0.0)) continue;
    const double lambda = dt * total;
    if (!ordered) {
      if (rng.uniform() < std::exp(-lambda)) continue;
      const int from = x[d];
      double u = rng.uniform() * total;
      for (int v = 0; v < states; ++v) {
        if (v == from || row[v] <= 0.0) continue;
        x[d] = v;
        u -= row[v];
        if (u < 0.0) break;
      }
      continue;
    }
    const int jumps = poisson(lambda, rng);
    if (jumps == 0) continue;
    long shift = 0;
    for (int j = 0; j < jumps; ++j) {
      double u = rng.uniform() * total;
      int dest = x[d];
      for (int v = 0; v < states; ++v) {
        if (v == x[d] || row[v] <= 0.0) continue;
        dest = v;
        u -= row[v];
        if (u < 0.0) break;
      }
      shift += dest - x[d];
    }
    long next = x[d] + shift;
    if (next < 0 || next >= states) {
      ++flags.clamp;
      next = std::clamp<long>(next, 0, states - 1);
    }
    x[d] = static_cast<int>(next);
  }
}

void trapezoid_combine(int states, bool ordered, double theta, std::span<const int> x, std::span<const double> r0,
                       std::span<const int> x_mid, std::span<const double> r_mid, std::span<double> out) {
  const double a = 1.0 / (2.0 * theta * (1.0 - theta));
  for (std::size_t d = 0; d < x.size(); ++d) {
    const std::size_t off = d * static_cast<std::size_t>(states);
    for (int v = 0; v < states; ++v) {
      double first = 0.0;
      if (ordered) {
        const int from_x = x[d] + (v - x_mid[d]);
        if (from_x >= 0 && from_x < states && from_x != x[d]) first = r0[off + from_x];
      } else if (v != x[d]) {
        first = r0[off + v];
      }
      out[off + v] = v == x_mid[d] ? 0.0 : std::max(a * r_mid[off + v] - (a - 1.0) * first, 0.0);
    }
  }
}

namespace {

void check_step(double t, double t_next) {
  check_time(t);
  check_time(t_next);
  if (!(t_next < t)) throw DomainError("reverse step needs t_next < t");
}

std::size_t rate_size(const ProcessSpec& spec, std::span<const int> x) {
  return x.size() * static_cast<std::size_t>(spec.num_states);
}

}  // namespace

void euler_step(const ProcessSpec& spec, const RateProvider& rates, double t, double t_next, std::span<int> x,
                Stream& rng, StepFlags& flags, NfeCounter& nfe) {
  check_step(t, t_next);
  std::vector<double> r(rate_size(spec, x));
  rates(t, x, r);
  nfe.add();
  euler_move(spec.num_states, r, t - t_next, x, rng, flags);
}

void tau_leap_step(const ProcessSpec& spec, const RateProvider& rates, double t, double t_next, std::span<int> x,
                   Stream& rng, StepFlags& flags, NfeCounter& nfe) {
  check_step(t, t_next);
  std::vector<double> r(rate_size(spec, x));
  rates(t, x, r);
  nfe.add();
  tau_leap_move(spec.num_states, !spec.is_masking(), r, t - t_next, x, rng, flags);
}

void trapezoidal_step(const ProcessSpec& spec, const RateProvider& rates, double t, double t_next, std::span<int> x,
                      Stream& rng, StepFlags& flags, NfeCounter& nfe, double theta) {
  check_step(t, t_next);
  if (!(theta > 0.0 && theta < 1.0)) throw DomainError("theta must lie in (0, 1)");
  const bool ordered = !spec.is_masking();
  const double t_mid = t + theta * (t_next - t);
  std::vector<double> r0(rate_size(spec, x)), r_mid(r0.size()), comb(r0.size());
  rates(t, x, r0);
  nfe.add();
  std::vector<int> x0(x.begin(), x.end());
  tau_leap_move(spec.num_states, ordered, r0, t - t_mid, x, rng, flags);
  rates(t_mid, x, r_mid);
  nfe.add();
  trapezoid_combine(spec.num_states, ordered, theta, x0, r0, x, r_mid, comb);
  tau_leap_move(spec.num_states, ordered, comb, t_mid - t_next, x, rng, flags);
}

// ---------------------------------------------------------------------------

void d3pm_row(const ProcessSpec& spec, double t, double s, int x, std::span<const double> post, std::span<double> out) {
  const double r = spec.schedule.alpha_ratio(s, t);
  const double as = spec.schedule.alpha(s);
  const double bs = spec.schedule.one_minus_alpha(s);
  double total = 0.0;
  for (int v = 0; v < spec.num_states; ++v) {
    const double like = (v == x ? r : 0.0) + (1.0 - r) * spec.pi(x);
    out[v] = like * (as * post[v] + bs * spec.pi(v));
    total += out[v];
  }
  if (!(total > 0.0)) throw UnreachableState("state " + std::to_string(x) + " is unreachable under the forward kernel");
  for (int v = 0; v < spec.num_states; ++v) out[v] /= total;
}

void ddim_row(const ProcessSpec& spec, double t, double s, int x, std::span<const double> post, std::span<double> out) {
  const double bt = spec.schedule.one_minus_alpha(t);
  if (!(bt > 0.0)) throw DomainError("ddim step needs alpha_t < 1");
  const double sigma = spec.schedule.one_minus_alpha(s) / bt;
  for (int v = 0; v < spec.num_states; ++v) out[v] = (1.0 - sigma) * post[v];
  out[x] += sigma;
}

RemdmWeights remdm_weights(const ProcessSpec& spec, double t, double s, double sigma) {
  if (s > t) throw DomainError("remdm step needs s <= t");
  const double at = spec.schedule.alpha(t);
  const double as = spec.schedule.alpha(s);
  const double bt = spec.schedule.one_minus_alpha(t);
  const double bs = spec.schedule.one_minus_alpha(s);
  if (!(bt > 0.0)) throw DomainError("remdm step needs alpha_t < 1");
  const double bound = std::min(1.0, at > 0.0 ? bs / at : 1.0);
  if (!(sigma >= 0.0 && sigma <= bound * (1.0 + 1e-12)))
    throw DomainError("sigma_remdm outside [0, min(1, (1 - alpha_s)/alpha_t)]");
  return {(bs - sigma) / bt, (as - at + sigma * at) / bt, sigma};
}

namespace {

void check_row(std::span<double> out) {
  for (double& v : out) {
    if (v < -1e-12) throw DomainError("kernel row has negative mass for this sigma");
    v = std::max(v, 0.0);
  }
}

}  // namespace

void remdm_row(const ProcessSpec& spec, double t, double s, double sigma, int x, std::span<const double> post,
               std::span<double> out) {
  const auto w = remdm_weights(spec, t, s, sigma);
  for (int v = 0; v < spec.num_states; ++v) out[v] = w.posterior * post[v] + w.stationary * spec.pi(v);
  out[x] += w.keep;
  check_row(out);
}

void corrector_row(const ProcessSpec& spec, double s, double sigma, int x, std::span<const double> x0,
                   std::span<double> out) {
  const double as = spec.schedule.alpha(s);
  const double bs = spec.schedule.one_minus_alpha(s);
  if (!(bs > 0.0)) throw DomainError("corrector needs alpha_s < 1");
  if (!(sigma >= 0.0 && sigma <= 1.0)) throw DomainError("sigma_remdm must lie in [0, 1]");
  for (int v = 0; v < spec.num_states; ++v) out[v] = sigma * as / bs * x0[v] + sigma * spec.pi(v);
  out[x] += 1.0 - sigma / bs;
  check_row(out);
}

void corrector_backward_row(const ProcessSpec& spec, double s, double sigma, int x, std::span<const double> x0,
                            std::span<double> out) {
  const double as = spec.schedule.alpha(s);
  const double bs = spec.schedule.one_minus_alpha(s);
  if (!(sigma >= 0.0 && sigma <= bs && sigma < 1.0))
    throw DomainError("backward corrector needs 0 <= sigma <= 1 - alpha_s");
  const double b = sigma * as / (bs * (1.0 - sigma));
  for (int v = 0; v < spec.num_states; ++v) out[v] = b * x0[v];
  out[x] += 1.0 - b;
  check_row(out);
}

void corrector_forward_row(const ProcessSpec& spec, double sigma, int x, std::span<double> out) {
  if (!(sigma >= 0.0 && sigma <= 1.0)) throw DomainError("sigma_remdm must lie in [0, 1]");
  for (int v = 0; v < spec.num_states; ++v) out[v] = sigma * spec.pi(v);
  out[x] += 1.0 - sigma;
}

double remdm_sigma_from_nu(const ProcessSpec& spec, double t, double s, double nu) {
  if (!(nu >= 0.0)) throw DomainError("nu must be non-negative");
  const double at = spec.schedule.alpha(t);
  const double as = spec.schedule.alpha(s);
  if (!(at > 0.0)) throw DomainError("alpha_t underflows to 0");
  return nu * (as - at) / at;
}

// ---------------------------------------------------------------------------

namespace {

template <class RowFn>
void per_coordinate(const ProcessSpec& spec, const PosteriorProvider& posterior, double t, std::span<int> x,
                    Stream& rng, RowFn&& row_fn) {
  const int S = spec.num_states;
  std::vector<double> post(S), law(S);
  std::vector<int> before(x.begin(), x.end());
  for (std::size_t d = 0; d < x.size(); ++d) {
    posterior(t, before, static_cast<int>(d), post);
    row_fn(before[d], post, law);
    x[d] = sample_categorical(law, rng);
  }
}

}  // namespace

void d3pm_step(const ProcessSpec& spec, const PosteriorProvider& posterior, double t, double s, std::span<int> x,
               Stream& rng, NfeCounter& nfe) {
  nfe.add();
  if (s == t) return;
  per_coordinate(spec, posterior, t, x, rng,
                 [&](int xd, std::span<const double> post, std::span<double> law) { d3pm_row(spec, t, s, xd, post, law); });
}

void ddim_step(const ProcessSpec& spec, const PosteriorProvider& posterior, double t, double s, std::span<int> x,
               Stream& rng, NfeCounter& nfe) {
  nfe.add();
  if (s == t) return;
  per_coordinate(spec, posterior, t, x, rng,
                 [&](int xd, std::span<const double> post, std::span<double> law) { ddim_row(spec, t, s, xd, post, law); });
}

void remdm_step(const ProcessSpec& spec, const PosteriorProvider& posterior, double t, double s, double sigma,
                std::span<int> x, Stream& rng, NfeCounter& nfe) {
  remdm_weights(spec, t, s, sigma);
  nfe.add();
  per_coordinate(spec, posterior, t, x, rng, [&](int xd, std::span<const double> post, std::span<double> law) {
    remdm_row(spec, t, s, sigma, xd, post, law);
  });
}

void corrector_step(const ProcessSpec& spec, const PosteriorProvider& posterior, double s, double sigma,
                    std::span<int> x, Stream& rng, NfeCounter& nfe) {
  nfe.add();
  per_coordinate(spec, posterior, s, x, rng, [&](int xd, std::span<const double> post, std::span<double> law) {
    corrector_row(spec, s, sigma, xd, post, law);
  });
}

void forward_move(const ProcessSpec& spec, double r, std::span<int> x, Stream& rng) {
  if (r >= 1.0) return;
  for (auto& v : x) {
    if (rng.uniform() < r) continue;
    if (spec.is_masking())
      v = spec.mask_index;
    else
      v = static_cast<int>(rng.uniform() * spec.num_states) % spec.num_states;
  }
}

double churn_step(const ProcessSpec& spec, double t, double gamma, std::span<int> x, Stream& rng, StepFlags& flags) {
  if (!(gamma >= 0.0)) throw DomainError("gamma must be non-negative");
  check_time(t);
  double t_churn = (1.0 + gamma) * t;
  if (t_churn > 1.0) {
    t_churn = 1.0;
    ++flags.churn_clamped;
  }
  if (t_churn > t) forward_move(spec, spec.schedule.alpha_ratio(t, t_churn), x, rng);
  return t_churn;
}

void restart_step(const ProcessSpec& spec, double t_min, double t_max, std::span<int> x, Stream& rng) {
  check_time(t_min);
  check_time(t_max);
  if (t_min > t_max) throw DomainError("restart needs t_min <= t_max");
  forward_move(spec, spec.schedule.alpha_ratio(t_min, t_max), x, rng);
}

// ---------------------------------------------------------------------------

namespace {

template <class RowFn>
Eigen::MatrixXd dense(const ProcessSpec& spec, const Dist& p0, double t, RowFn&& row_fn) {
  const int S = spec.num_states;
  const auto table = posterior(spec, p0, t);
  Eigen::MatrixXd k = Eigen::MatrixXd::Identity(S, S);
  std::vector<double> post(S), law(S);
  for (int x = 0; x < S; ++x) {
    if (!table.reachable()[x]) continue;
    const Eigen::VectorXd r = table.row(x);
    for (int v = 0; v < S; ++v) post[v] = r[v];
    row_fn(x, std::span<const double>(post), std::span<double>(law));
    for (int v = 0; v < S; ++v) k(x, v) = law[v];
  }
  return k;
}

}  // namespace

Eigen::MatrixXd d3pm_kernel(const ProcessSpec& spec, const Dist& p0, double t, double s) {
  return dense(spec, p0, t, [&](int x, auto post, auto law) { d3pm_row(spec, t, s, x, post, law); });
}

Eigen::MatrixXd ddim_kernel(const ProcessSpec& spec, const Dist& p0, double t, double s) {
  return dense(spec, p0, t, [&](int x, auto post, auto law) { ddim_row(spec, t, s, x, post, law); });
}

Eigen::MatrixXd remdm_kernel(const ProcessSpec& spec, const Dist& p0, double t, double s, double sigma) {
  return dense(spec, p0, t, [&](int x, auto post, auto law) { remdm_row(spec, t, s, sigma, x, post, law); });
}

namespace {

template <class RowFn>
Eigen::MatrixXd rowwise(int S, const Eigen::MatrixXd& x0_rows, RowFn&& row_fn) {
  Eigen::MatrixXd k(S, S);
  std::vector<double> x0(S), law(S);
  for (int y = 0; y < S; ++y) {
    for (int v = 0; v < S; ++v) x0[v] = x0_rows(y, v);
    row_fn(y, std::span<const double>(x0), std::span<double>(law));
    for (int v = 0; v < S; ++v) k(y, v) = law[v];
  }
  return k;
}

}  // namespace

Eigen::MatrixXd corrector_kernel(const ProcessSpec& spec, double s, double sigma, const Eigen::MatrixXd& x0_rows) {
  return rowwise(spec.num_states, x0_rows, [&](int y, auto x0, auto law) { corrector_row(spec, s, sigma, y, x0, law); });
}

Eigen::MatrixXd corrector_backward_kernel(const ProcessSpec& spec, double s, double sigma,
                                          const Eigen::MatrixXd& x0_rows) {
  return rowwise(spec.num_states, x0_rows,
                 [&](int y, auto x0, auto law) { corrector_backward_row(spec, s, sigma, y, x0, law); });
}

Eigen::MatrixXd corrector_forward_kernel(const ProcessSpec& spec, double sigma) {
  const int S = spec.num_states;
  Eigen::MatrixXd k(S, S);
  std::vector<double> law(S);
  for (int y = 0; y < S; ++y) {
    corrector_forward_row(spec, sigma, y, law);
    for (int v = 0; v < S; ++v) k(y, v) = law[v];
  }
  return k;
}

}  // namespace ctmc

namespace ctmc {

namespace {

// Law of x + (sum of N displacements), N ~ Poisson(lambda), each displacement
// drawn from q (indexed by destination), clamped to [0, S-1].
void compound_row(int S, int x, std::span<const double> q, double lambda, std::span<double> out) {
  std::fill(out.begin(), out.end(), 0.0);
  if (!(lambda > 0.0)) {
    out[x] = 1.0;
    return;
  }
  int n_max;
  if (lambda < 50.0) {
    double term = std::exp(-lambda);
    n_max = 0;
    while (n_max < lambda || term > 1e-18) term *= lambda / ++n_max;
  } else {
    n_max = static_cast<int>(std::ceil(lambda + 14.0 * std::sqrt(lambda) + 20.0));
  }
  double total = 0.0, m1 = 0.0, m2 = 0.0;
  for (int v = 0; v < S; ++v) {
    if (v == x) continue;
    total += q[v];
    m1 += q[v] * (v - x);
    m2 += q[v] * (v - x) * (v - x);
  }
  // The displacement has mean lambda m1 and variance lambda m2; 40 standard
  // deviations past the clamp range leaves nothing measurable outside.
  const double mu = lambda * m1 / total, sd = std::sqrt(lambda * m2 / total);
  const long reach = std::min(static_cast<long>(n_max) * (S - 1),
                              static_cast<long>(std::ceil(std::abs(mu) + 40.0 * sd)) + S);
  long m = 64;
  while (m < 2 * reach + 1) m *= 2;
  std::vector<std::complex<double>> jump(m, 0.0);
  for (int v = 0; v < S; ++v)
    if (v != x && q[v] > 0.0) jump[((v - x) % m + m) % m] = q[v] / total;
  Eigen::FFT<double> fft;
  std::vector<std::complex<double>> freq;
  fft.fwd(freq, jump);
  for (auto& f : freq) f = std::exp(lambda * (f - 1.0));
  std::vector<double> pmf;
  fft.inv(pmf, freq);
  double sum = 0.0;
  for (long d = -reach; d <= reach; ++d) {
    const double p = std::max(pmf[(d % m + m) % m], 0.0);
    out[std::clamp<long>(x + d, 0, S - 1)] += p;
    sum += p;
  }
  for (auto& v : out) v /= sum;
}

}  // namespace

Eigen::MatrixXd euler_kernel(const Eigen::MatrixXd& rates, double dt) {
  const Eigen::Index S = rates.rows();
  Eigen::MatrixXd k = Eigen::MatrixXd::Zero(S, S);
  for (Eigen::Index x = 0; x < S; ++x) {
    double mass = 0.0;
    for (Eigen::Index v = 0; v < S; ++v)
      if (v != x) mass += dt * rates(x, v);
    const double scale = std::max(mass, 1.0);
    for (Eigen::Index v = 0; v < S; ++v)
      if (v != x) k(x, v) = dt * rates(x, v) / scale;
    k(x, x) = 1.0 - mass / scale;
  }
  return k;
}

Eigen::MatrixXd tau_leap_kernel(const Eigen::MatrixXd& rates, double dt, bool ordered) {
  const int S = static_cast<int>(rates.rows());
  Eigen::MatrixXd k = Eigen::MatrixXd::Zero(S, S);
  std::vector<double> q(S), row(S);
  for (int x = 0; x < S; ++x) {
    double total = 0.0;
    for (int v = 0; v < S; ++v) {
      q[v] = v == x ? 0.0 : std::max(rates(x, v), 0.0);
      total += q[v];
    }
    if (!(total > 0.0)) {
      k(x, x) = 1.0;
      continue;
    }
    if (!ordered) {
      const double stay = std::exp(-dt * total);
      k(x, x) = stay;
      for (int v = 0; v < S; ++v)
        if (v != x) k(x, v) = (1.0 - stay) * q[v] / total;
      continue;
    }
    compound_row(S, x, q, dt * total, row);
    for (int v = 0; v < S; ++v) k(x, v) = row[v];
  }
  return k;
}

Eigen::MatrixXd trapezoidal_kernel(const Eigen::MatrixXd& r0, const Eigen::MatrixXd& r_mid, double dt1, double dt2,
                                   double theta, bool ordered) {
  const int S = static_cast<int>(r0.rows());
  const Eigen::MatrixXd first = tau_leap_kernel(r0, dt1, ordered);
  Eigen::MatrixXd k = Eigen::MatrixXd::Zero(S, S);
  std::vector<double> a(S), b(S), comb(S);
  Eigen::MatrixXd second_rates = Eigen::MatrixXd::Zero(S, S);
  for (int x = 0; x < S; ++x) {
    for (int v = 0; v < S; ++v) a[v] = r0(x, v);
    for (int m = 0; m < S; ++m) {
      if (first(x, m) <= 0.0) continue;
      for (int v = 0; v < S; ++v) b[v] = r_mid(m, v);
      const int xs[1] = {x}, ms[1] = {m};
      trapezoid_combine(S, ordered, theta, xs, a, ms, b, comb);
      for (int v = 0; v < S; ++v) second_rates(m, v) = comb[v];
    }
    // Only rows m reachable from x are filled; the rest are unused.
    const Eigen::MatrixXd second = tau_leap_kernel(second_rates, dt2, ordered);
    k.row(x) = first.row(x) * second;
  }
  return k;
}

}  // namespace ctmc
