#include "ctmc/analysis.hpp"

#include "ctmc/rng.hpp"

#include <tbb/parallel_for.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

namespace ctmc {

std::string to_string(ContractionFamily family) {
  switch (family) {
    case ContractionFamily::masking_forward: return "masking_forward";
    case ContractionFamily::uniform_forward: return "uniform_forward";
    case ContractionFamily::dpf_reverse: return "dpf_reverse";
    case ContractionFamily::nu_reverse: return "nu_reverse";
    case ContractionFamily::posterior_channel: return "posterior_channel";
  }
  return "unknown";
}

namespace {

// (1 + u) log(1 + u) - u, accurate for small |u|.
double kl_term(double u) {
  if (std::abs(u) >= 0.1) return (1.0 + u) * std::log1p(u) - u;
  // sum_{k >= 2} (-u)^k / (k (k - 1))
  double sum = 0.0, power = u * u;
  for (int k = 2; k < 40; ++k) {
    const double term = power / (k * (k - 1.0));
    sum += term;
    if (std::abs(term) < 1e-18 * std::abs(sum)) break;
    power *= -u;
  }
  return sum;
}

}  // namespace

// Summed as q (1 + u) log(1 + u) - q u with u = p/q - 1: every term is
// non-negative, so KL between nearby laws keeps its relative precision.
KlValue kl_divergence(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) throw DomainError("kl: size mismatch");
  KlValue out;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (!(q[i] > 0.0)) {
      if (p[i] > 0.0) out.infinite = true;
      continue;
    }
    out.value += p[i] > 0.0 ? q[i] * kl_term((p[i] - q[i]) / q[i]) : q[i];
  }
  if (out.infinite) out.value = std::numeric_limits<double>::infinity();
  return out;
}

double tv_distance(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) throw DomainError("tv: size mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) s += std::abs(p[i] - q[i]);
  return 0.5 * s;
}

double dobrushin(const Eigen::MatrixXd& rows) {
  double best = 0.0;
  for (Eigen::Index i = 0; i < rows.rows(); ++i)
    for (Eigen::Index j = i + 1; j < rows.rows(); ++j)
      best = std::max(best, 0.5 * (rows.row(i) - rows.row(j)).cwiseAbs().sum());
  return std::min(best, 1.0);
}

double dobrushin(const Channel& channel) { return dobrushin(channel.matrix()); }

namespace {

std::vector<double> push(const Eigen::MatrixXd& k, std::span<const double> p) {
  std::vector<double> out(static_cast<std::size_t>(k.cols()), 0.0);
  for (Eigen::Index i = 0; i < k.rows(); ++i) {
    if (p[i] == 0.0) continue;
    for (Eigen::Index j = 0; j < k.cols(); ++j) out[j] += p[i] * k(i, j);
  }
  return out;
}

std::vector<double> dirichlet_on(const std::vector<bool>& allowed, Stream& rng) {
  std::vector<double> p(allowed.size(), 0.0);
  double total = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i)
    if (allowed[i]) total += (p[i] = exponential(rng));
  for (auto& v : p) v /= total;
  return p;
}

int pick(std::span<const int> idx, Stream& rng) {
  return idx[static_cast<std::size_t>(rng.uniform() * static_cast<double>(idx.size()))];
}

// KL below this is dominated by rounding in the ratio.
constexpr double kMinKl = 1e-13;

}  // namespace

std::pair<double, double> contraction_search(const Eigen::MatrixXd& kernel, std::span<const double> reference,
                                             const SearchOptions& opts, const std::vector<bool>& allowed) {
  const auto n = static_cast<std::size_t>(kernel.rows());
  std::vector<bool> ok(n, true);
  if (!allowed.empty()) ok = allowed;
  if (!reference.empty())
    for (std::size_t i = 0; i < n; ++i) ok[i] = ok[i] && reference[i] > 0.0;
  std::vector<int> idx;
  for (std::size_t i = 0; i < n; ++i)
    if (ok[i]) idx.push_back(static_cast<int>(i));
  if (idx.size() < 2 || opts.candidates <= 0) return {0.0, 0.0};

  std::vector<double> kl_ratio(static_cast<std::size_t>(opts.candidates), 0.0);
  std::vector<double> tv_ratio(kl_ratio.size(), 0.0);
  tbb::parallel_for(0, opts.candidates, [&](int c) {
    Stream rng(opts.seed, static_cast<std::uint64_t>(c), 0, Purpose::misc);
    std::vector<double> p = reference.empty() ? dirichlet_on(ok, rng)
                                              : std::vector<double>(reference.begin(), reference.end());
    std::vector<double> q;
    switch (c % 5) {
      case 0: q = dirichlet_on(ok, rng); break;
      case 1:
      case 2: {
        // Small perturbations probe the local (chi-square) regime.
        const double eps = std::pow(10.0, -4.0 * rng.uniform());
        const auto d = dirichlet_on(ok, rng);
        q.resize(n);
        for (std::size_t i = 0; i < n; ++i) q[i] = (1.0 - eps) * p[i] + eps * d[i];
        break;
      }
      case 3: {
        q = p;
        const int a = pick(idx, rng);
        int b = pick(idx, rng);
        while (b == a) b = pick(idx, rng);
        std::swap(q[a], q[b]);
        break;
      }
      default: {
        // Tilt mass between two states.
        q = p;
        const int a = pick(idx, rng);
        int b = pick(idx, rng);
        while (b == a) b = pick(idx, rng);
        const double move = rng.uniform() * q[a];
        q[a] -= move;
        q[b] += move;
        break;
      }
    }
    const double before = kl_divergence(q, p).value;
    const double tv_before = tv_distance(q, p);
    const auto pk = push(kernel, p);
    const auto qk = push(kernel, q);
    if (before > kMinKl && std::isfinite(before)) kl_ratio[c] = kl_divergence(qk, pk).value / before;
    // TV of the pushed difference avoids cancelling two nearly equal outputs.
    std::vector<double> diff(n);
    for (std::size_t i = 0; i < n; ++i) diff[i] = q[i] - p[i];
    const auto dk = push(kernel, diff);
    double tv_after = 0.0;
    for (double v : dk) tv_after += std::abs(v);
    if (tv_before > 0.0) tv_ratio[c] = 0.5 * tv_after / tv_before;
  });
  return {*std::max_element(kl_ratio.begin(), kl_ratio.end()), *std::max_element(tv_ratio.begin(), tv_ratio.end())};
}

ContractionReport eta_forward(const ProcessSpec& spec, double s, double t, const SearchOptions& opts) {
  if (s > t) throw DomainError("eta_forward needs s <= t");
  const double r = spec.schedule.alpha_ratio(s, t);
  const int S = spec.num_states;
  ContractionReport rep;
  rep.eta_tv = r;
  std::vector<bool> allowed(static_cast<std::size_t>(S), true);
  if (spec.is_masking()) {
    rep.family = ContractionFamily::masking_forward;
    rep.eta_kl_upper = r;
    // Equality holds for inputs that put no mass on the mask.
    allowed[static_cast<std::size_t>(spec.mask_index)] = false;
  } else {
    rep.family = ContractionFamily::uniform_forward;
    rep.eta_kl_upper = S * r * r / ((S - 2) * r + 2.0);
  }
  const auto [kl, tv] = contraction_search(forward_kernel_matrix(spec, r), {}, opts, allowed);
  rep.eta_kl_empirical_lower = kl;
  rep.eta_tv_empirical_lower = tv;
  return rep;
}

namespace {

struct ReverseIngredients {
  std::vector<double> pt;
  PosteriorTable post;
  double f_inf = 0.0;
  double posterior_tv = 0.0;
};

ReverseIngredients reverse_ingredients(const ProcessSpec& spec, const Dist& p0, double t) {
  ReverseIngredients ing{marginal(spec, p0, t), posterior(spec, p0, t), 0.0, 0.0};
  const auto f = posterior_keep_weights(spec, p0, t);
  ing.f_inf = *std::max_element(f.begin(), f.end());
  ing.posterior_tv = dobrushin(ing.post.reachable_channel());
  return ing;
}

double reachable_dobrushin(const Eigen::MatrixXd& k, const std::vector<bool>& reachable) {
  std::vector<Eigen::Index> rows;
  for (Eigen::Index i = 0; i < k.rows(); ++i)
    if (reachable[i]) rows.push_back(i);
  Eigen::MatrixXd sub(static_cast<Eigen::Index>(rows.size()), k.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) sub.row(static_cast<Eigen::Index>(i)) = k.row(rows[i]);
  return dobrushin(sub);
}

}  // namespace

ContractionReport eta_dpf_reverse(const ProcessSpec& spec, const Dist& p0, double t, double s,
                                  const SearchOptions& opts) {
  if (s > t) throw DomainError("reverse step needs s <= t");
  const double bt = spec.schedule.one_minus_alpha(t);
  if (!(bt > 0.0)) throw DomainError("reverse step needs alpha_t < 1");
  const auto ing = reverse_ingredients(spec, p0, t);
  ContractionReport rep;
  rep.family = ContractionFamily::dpf_reverse;
  rep.sigma = spec.schedule.one_minus_alpha(s) / bt;
  rep.f_inf = ing.f_inf;
  rep.posterior_tv = ing.posterior_tv;
  rep.eta_kl_upper = rep.sigma + (1.0 - rep.sigma) * ing.posterior_tv;
  rep.bound_from_f = rep.sigma + (1.0 - rep.sigma) * ing.f_inf;
  const auto k = ddim_kernel(spec, p0, t, s);
  rep.eta_tv = reachable_dobrushin(k, ing.post.reachable());
  const auto [kl, tv] = contraction_search(k, ing.pt, opts, ing.post.reachable());
  rep.eta_kl_empirical_lower = kl;
  rep.eta_tv_empirical_lower = tv;
  return rep;
}

ContractionReport eta_nu_reverse(const ProcessSpec& spec, const Dist& p0, double t, double s, double nu,
                                 const SearchOptions& opts) {
  if (s > t) throw DomainError("reverse step needs s <= t");
  const double bt = spec.schedule.one_minus_alpha(t);
  if (!(bt > 0.0)) throw DomainError("reverse step needs alpha_t < 1");
  const double at = spec.schedule.alpha(t);
  const double as = spec.schedule.alpha(s);
  const double bs = spec.schedule.one_minus_alpha(s);
  const double sr = remdm_sigma_from_nu(spec, t, s, nu);
  const double limit = std::min(1.0, at > 0.0 ? bs / at : 1.0);
  if (sr > limit * (1.0 + 1e-12)) throw DomainError("nu gives sigma above min(1, (1 - alpha_s)/alpha_t)");
  if (sr > bs * (1.0 + 1e-12)) throw DomainError("nu gives sigma above 1 - alpha_s; backward corrector undefined");

  const auto ing = reverse_ingredients(spec, p0, t);
  const double eta = ing.posterior_tv;
  ContractionReport rep;
  rep.family = ContractionFamily::nu_reverse;
  rep.sigma = bs / bt;
  rep.sigma_remdm = sr;
  rep.f_inf = ing.f_inf;
  rep.posterior_tv = eta;
  rep.bound_from_f = rep.sigma + (1.0 - rep.sigma) * ing.f_inf;
  rep.factor_dpf = rep.sigma + (1.0 - rep.sigma) * eta;
  const double b = sr > 0.0 ? std::min(1.0, sr * as / (bs * (1.0 - sr))) : 0.0;
  rep.factor_backward = 1.0 - b + b * eta;
  // The forward corrector (1 - sigma) I + sigma 1 pi^T contracts TV by exactly 1 - sigma.
  rep.factor_forward = 1.0 - sr;
  rep.factor_product = rep.factor_dpf * rep.factor_backward * rep.factor_forward;
  const auto k = remdm_kernel(spec, p0, t, s, sr);
  rep.eta_tv = reachable_dobrushin(k, ing.post.reachable());
  // The corrector reuses the x0 prediction made at t, so the step is not a
  // true composition of three channels and the product can undershoot the
  // kernel's own Dobrushin coefficient. Only the latter is a proven bound.
  rep.eta_kl_upper = rep.eta_tv;
  const auto [kl, tv] = contraction_search(k, ing.pt, opts, ing.post.reachable());
  rep.eta_kl_empirical_lower = kl;
  rep.eta_tv_empirical_lower = tv;
  return rep;
}

ContractionReport eta_posterior(const ProcessSpec& spec, const Dist& p0, double t, const SearchOptions& opts) {
  const auto ing = reverse_ingredients(spec, p0, t);
  ContractionReport rep;
  rep.family = ContractionFamily::posterior_channel;
  rep.f_inf = ing.f_inf;
  rep.posterior_tv = ing.posterior_tv;
  rep.eta_tv = ing.posterior_tv;
  rep.eta_kl_upper = ing.posterior_tv;
  rep.bound_from_f = ing.f_inf;
  const int S = spec.num_states;
  Eigen::MatrixXd k = Eigen::MatrixXd::Zero(S, S);
  for (int x = 0; x < S; ++x)
    if (ing.post.reachable()[x]) k.row(x) = ing.post.row(x).transpose();
  const auto [kl, tv] = contraction_search(k, ing.pt, opts, ing.post.reachable());
  rep.eta_kl_empirical_lower = kl;
  rep.eta_tv_empirical_lower = tv;
  return rep;
}

// ---------------------------------------------------------------------------

std::pair<double, double> bound_coefficients(BoundSampler sampler, double alpha_t, double alpha_s, double eta_tv) {
  if (sampler == BoundSampler::nu_schedule) return {alpha_s * eta_tv, alpha_s};
  const double sigma = (1.0 - alpha_s) / (1.0 - alpha_t);
  return {sigma + (1.0 - sigma) * eta_tv, 1.0 - sigma};
}

ErrorBoundTrace error_bound(const ProcessSpec& spec, const Dist& p0, const TimeGrid& grid,
                            std::span<const double> epsilons, BoundSampler sampler) {
  const std::size_t K = grid.size() > 0 ? grid.size() - 1 : 0;
  if (epsilons.size() != K) throw DomainError("error_bound needs one epsilon per step");
  for (std::size_t k = 0; k + 1 < grid.size(); ++k)
    if (!(grid[k] > grid[k + 1])) throw DomainError("error_bound grid must be strictly decreasing");
  ErrorBoundTrace trace;
  trace.sampler = sampler;
  for (std::size_t k = 0; k < K; ++k) {
    if (!(epsilons[k] >= 0.0)) throw DomainError("epsilon must be non-negative");
    ErrorBoundStep st;
    st.t = grid[k];
    st.t_next = grid[k + 1];
    st.epsilon = epsilons[k];
    const double bt = spec.schedule.one_minus_alpha(st.t);
    st.sigma = spec.schedule.one_minus_alpha(st.t_next) / bt;
    st.eta_tv = dobrushin(posterior(spec, p0, st.t).reachable_channel());
    const double as = spec.schedule.alpha(st.t_next);
    if (sampler == BoundSampler::nu_schedule) {
      st.a = as * st.eta_tv;
      st.b = as;
    } else {
      st.a = st.sigma + (1.0 - st.sigma) * st.eta_tv;
      st.b = 1.0 - st.sigma;
    }
    trace.steps.push_back(st);
  }
  double suffix = 1.0;
  for (std::size_t k = K; k-- > 0;) {
    trace.bound += suffix * trace.steps[k].b * trace.steps[k].epsilon;
    suffix *= trace.steps[k].a;
  }
  double e = 0.0;
  for (const auto& st : trace.steps) e = st.a * e + st.b * st.epsilon;
  trace.recursion = e;
  return trace;
}

PosteriorError posterior_error(const ProcessSpec& spec, const Dist& p0, double t,
                               const std::function<void(int x, std::span<double> out)>& estimate) {
  const auto pt = marginal(spec, p0, t);
  const auto post = posterior(spec, p0, t);
  const int S = spec.num_states;
  std::vector<double> est(static_cast<std::size_t>(S)), exact(static_cast<std::size_t>(S));
  PosteriorError err;
  for (int x = 0; x < S; ++x) {
    if (!post.reachable()[x]) continue;
    estimate(x, est);
    const auto row = post.row(x);
    for (int v = 0; v < S; ++v) exact[v] = row[v];
    const double tv = tv_distance(est, exact);
    err.weighted += pt[x] * tv;
    err.max = std::max(err.max, tv);
  }
  return err;
}

// ---------------------------------------------------------------------------

std::vector<double> marginal_of(std::span<const double> joint, int dims, int states, int d) {
  std::vector<double> m(static_cast<std::size_t>(states), 0.0);
  std::size_t stride = 1;
  for (int i = 0; i < d; ++i) stride *= static_cast<std::size_t>(states);
  for (std::size_t idx = 0; idx < joint.size(); ++idx) m[(idx / stride) % static_cast<std::size_t>(states)] += joint[idx];
  (void)dims;
  return m;
}

namespace {

std::size_t joint_size(int dims, int states) {
  std::size_t n = 1;
  for (int d = 0; d < dims; ++d) n *= static_cast<std::size_t>(states);
  return n;
}

std::vector<double> product_of_marginals(std::span<const double> joint, int dims, int states) {
  std::vector<std::vector<double>> m;
  for (int d = 0; d < dims; ++d) m.push_back(marginal_of(joint, dims, states, d));
  std::vector<double> out(joint.size());
  std::vector<int> x(static_cast<std::size_t>(dims));
  for (std::size_t idx = 0; idx < joint.size(); ++idx) {
    joint_state(idx, states, x);
    double v = 1.0;
    for (int d = 0; d < dims; ++d) v *= m[d][x[d]];
    out[idx] = v;
  }
  return out;
}

}  // namespace

TcDecomposition tc_decomposition(std::span<const double> joint_p, std::span<const double> joint_q, int dims,
                                 int states) {
  if (dims < 1 || states < 1 || joint_p.size() != joint_size(dims, states) || joint_q.size() != joint_p.size())
    throw DomainError("tc_decomposition: joint sizes do not match states^dims");
  for (std::size_t i = 0; i < joint_p.size(); ++i)
    if (joint_q[i] > 0.0 && !(joint_p[i] > 0.0)) throw DomainError("tc_decomposition: q not absolutely continuous wrt p");
  const auto prod_p = product_of_marginals(joint_p, dims, states);
  const auto prod_q = product_of_marginals(joint_q, dims, states);
  TcDecomposition out;
  for (std::size_t i = 0; i < joint_q.size(); ++i) {
    const double q = joint_q[i];
    if (!(q > 0.0)) continue;
    out.kl += q * std::log(q / joint_p[i]);
    out.tc_q += q * std::log(q / prod_q[i]);
    out.cross_tc += q * std::log(joint_p[i] / prod_p[i]);
  }
  for (int d = 0; d < dims; ++d)
    out.sum_marginal_kl += kl_divergence(marginal_of(joint_q, dims, states, d), marginal_of(joint_p, dims, states, d)).value;
  return out;
}

std::vector<double> apply_product_channel(std::span<const double> joint, int dims, const Eigen::MatrixXd& kernel) {
  const auto S = static_cast<std::size_t>(kernel.rows());
  std::vector<double> cur(joint.begin(), joint.end());
  std::vector<double> tmp(S);
  std::size_t stride = 1;
  for (int d = 0; d < dims; ++d) {
    const std::size_t block = stride * S;
    for (std::size_t outer = 0; outer < cur.size(); outer += block) {
      for (std::size_t inner = 0; inner < stride; ++inner) {
        const std::size_t base = outer + inner;
        std::fill(tmp.begin(), tmp.end(), 0.0);
        for (std::size_t v = 0; v < S; ++v) {
          const double m = cur[base + v * stride];
          if (m == 0.0) continue;
          for (std::size_t w = 0; w < S; ++w) tmp[w] += m * kernel(static_cast<Eigen::Index>(v), static_cast<Eigen::Index>(w));
        }
        for (std::size_t w = 0; w < S; ++w) cur[base + w * stride] = tmp[w];
      }
    }
    stride = block;
  }
  return cur;
}

ProductChannelCheck product_channel_bound(const ProcessSpec& spec, double s, double t, std::span<const double> joint_p,
                                          std::span<const double> joint_q, int dims) {
  const int S = spec.num_states;
  const auto k = forward_kernel_matrix(spec, spec.schedule.alpha_ratio(s, t));
  const auto pt = apply_product_channel(joint_p, dims, k);
  const auto qt = apply_product_channel(joint_q, dims, k);
  const auto before = tc_decomposition(joint_p, joint_q, dims, S);
  const auto after = tc_decomposition(pt, qt, dims, S);
  ProductChannelCheck out;
  out.eta = eta_forward(spec, s, t, SearchOptions{0, 0}).eta_kl_upper;
  out.lhs = after.kl;
  out.rhs = out.eta * (before.kl - before.tc_q + before.cross_tc) + after.tc_q - after.cross_tc;
  return out;
}

// ---------------------------------------------------------------------------

std::vector<double> histogram(std::span<const int> samples, int states) {
  std::vector<double> h(static_cast<std::size_t>(states), 0.0);
  for (int v : samples) {
    if (v < 0 || v >= states) throw DomainError("histogram: sample out of range");
    h[static_cast<std::size_t>(v)] += 1.0;
  }
  if (!samples.empty())
    for (auto& v : h) v /= static_cast<double>(samples.size());
  return h;
}

Divergences divergences(std::span<const double> p_hat, std::span<const double> p) {
  Divergences out;
  out.kl = kl_divergence(p_hat, p);
  out.tv = tv_distance(p_hat, p);
  double cdf = 0.0;
  for (std::size_t i = 0; i + 1 < p.size(); ++i) {
    cdf += p_hat[i] - p[i];
    out.w1 += std::abs(cdf);
  }
  return out;
}

Divergences divergences_from_samples(std::span<const int> samples, std::span<const double> p) {
  const auto h = histogram(samples, static_cast<int>(p.size()));
  return divergences(h, p);
}

double w1_line(std::span<const double> xa, std::span<const double> wa, std::span<const double> xb,
               std::span<const double> wb) {
  if (xa.empty() || xb.empty()) throw DomainError("w1_line: empty point set");
  const auto norm = [](std::span<const double> x, std::span<const double> w) {
    if (w.empty()) return 1.0 / static_cast<double>(x.size());
    return 1.0 / std::accumulate(w.begin(), w.end(), 0.0);
  };
  const double na = norm(xa, wa);
  const double nb = norm(xb, wb);
  std::vector<std::pair<double, double>> ev;
  ev.reserve(xa.size() + xb.size());
  for (std::size_t i = 0; i < xa.size(); ++i) ev.emplace_back(xa[i], (wa.empty() ? 1.0 : wa[i]) * na);
  for (std::size_t i = 0; i < xb.size(); ++i) ev.emplace_back(xb[i], -(wb.empty() ? 1.0 : wb[i]) * nb);
  std::sort(ev.begin(), ev.end());
  double cdf = 0.0;
  double w1 = 0.0;
  for (std::size_t i = 0; i + 1 < ev.size(); ++i) {
    cdf += ev[i].second;
    w1 += std::abs(cdf) * (ev[i + 1].first - ev[i].first);
  }
  return w1;
}

std::vector<double> sliced_direction(int dims, int j, std::uint64_t seed) {
  Stream rng(seed, static_cast<std::uint64_t>(j), 0, Purpose::misc);
  std::vector<double> dir(static_cast<std::size_t>(dims));
  double norm = 0.0;
  for (auto& v : dir) {
    const double u1 = 1.0 - rng.uniform();
    const double u2 = rng.uniform();
    v = std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    norm += v * v;
  }
  norm = std::sqrt(norm);
  for (auto& v : dir) v /= norm;
  return dir;
}

std::vector<double> project(const PointCloud& cloud, std::span<const double> dir) {
  const int D = cloud.dims;
  std::vector<double> out(cloud.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    double s = 0.0;
    for (int d = 0; d < D; ++d) s += dir[d] * cloud.coords[i * D + d];
    out[i] = s;
  }
  return out;
}

double sliced_w1(const PointCloud& a, const PointCloud& b, int projections, std::uint64_t seed) {
  if (a.dims != b.dims || a.dims < 1) throw DomainError("sliced_w1: dimension mismatch");
  if (projections < 1) throw DomainError("sliced_w1: need at least one projection");
  std::vector<double> per(static_cast<std::size_t>(projections), 0.0);
  tbb::parallel_for(0, projections, [&](int j) {
    const auto dir = sliced_direction(a.dims, j, seed);
    per[j] = w1_line(project(a, dir), a.weights, project(b, dir), b.weights);
  });
  return std::accumulate(per.begin(), per.end(), 0.0) / projections;
}

}  // namespace ctmc
