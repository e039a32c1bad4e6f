#include "ctmc/verify.hpp"

#include "ctmc/experiments.hpp"
#include "ctmc/rng.hpp"
#include "ctmc/stats.hpp"

#include <boost/numeric/odeint.hpp>
#include <unsupported/Eigen/MatrixFunctions>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

namespace ctmc {

namespace {

namespace ode = boost::numeric::odeint;

CheckResult at_most(std::string module, std::string name, double value, double threshold, std::string detail = {}) {
  return {std::move(module), std::move(name), value, threshold, std::isfinite(value) && value <= threshold,
          std::move(detail)};
}

CheckResult at_least(std::string module, std::string name, double value, double threshold, std::string detail = {}) {
  return {std::move(module), std::move(name), value, threshold, std::isfinite(value) && value >= threshold,
          std::move(detail)};
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(4);
  os << v;
  return os.str();
}

NoiseSchedule schedule_of(int i) {
  switch (i % 3) {
    case 0: return NoiseSchedule::linear();
    case 1: return NoiseSchedule::geometric();
    default: return NoiseSchedule::loglinear();
  }
}

int uniform_int(Stream& rng, int lo, int hi) {
  return lo + static_cast<int>(rng.uniform() * (hi - lo + 1));
}

ProcessSpec random_spec(Stream& rng, int min_states, int max_states) {
  const int S = uniform_int(rng, min_states, max_states);
  const auto sched = schedule_of(uniform_int(rng, 0, 2));
  return rng.uniform() < 0.5 ? ProcessSpec::uniform(S, sched) : ProcessSpec::masking(S, sched);
}

Dist random_p0(const ProcessSpec& spec, Stream& rng) {
  const int S = spec.num_states;
  if (!spec.is_masking()) return Dist(dirichlet_ones(S, rng));
  auto p = dirichlet_ones(S - 1, rng);
  p.insert(p.begin() + spec.mask_index, 0.0);
  return Dist(std::move(p));
}

double max_abs(const Eigen::MatrixXd& m) { return m.size() ? m.cwiseAbs().maxCoeff() : 0.0; }

Eigen::MatrixXd posterior_rows(const ProcessSpec& spec, const Dist& p0, double t) {
  const auto table = posterior(spec, p0, t);
  const int S = spec.num_states;
  Eigen::MatrixXd rows = Eigen::MatrixXd::Zero(S, S);
  for (int x = 0; x < S; ++x)
    if (table.reachable()[x]) rows.row(x) = table.row(x).transpose();
  return rows;
}

using State = std::vector<double>;

// Transition matrix of the exact-score chain with rate `choice` from t down to s.
Eigen::MatrixXd flow_kernel(const ProcessSpec& spec, const Dist& p0, const RateChoice& choice, double t, double s) {
  const int S = spec.num_states;
  State k(static_cast<std::size_t>(S * S), 0.0);
  for (int x = 0; x < S; ++x) k[x * S + x] = 1.0;
  auto rhs = [&](const State& K, State& dK, double tau) {
    const Eigen::MatrixXd g = rate_matrix(spec, p0, choice, t - tau, t - tau).matrix();
    Eigen::Map<const Eigen::MatrixXd> km(K.data(), S, S);
    Eigen::Map<Eigen::MatrixXd> dm(dK.data(), S, S);
    // Column-major maps hold the transpose, so K^T' = G^T K^T.
    dm.noalias() = g.transpose() * km;
  };
  ode::integrate_adaptive(ode::make_controlled(1e-14, 1e-14, ode::runge_kutta_dopri5<State>()), rhs, k, 0.0, t - s,
                          1e-4);
  return Eigen::Map<const Eigen::MatrixXd>(k.data(), S, S).transpose();
}

// Largest TV between the integrated law and p_t at `checkpoints` times from 1
// down to 1e-3. Masking rates grow like 1/t, so the flow stops short of 0.
double marginal_flow_error(const ProcessSpec& spec, const Dist& p0, const RateChoice& choice, int checkpoints) {
  const int S = spec.num_states;
  State p = marginal(spec, p0, 1.0);
  auto rhs = [&](const State& q, State& dq, double tau) {
    const Eigen::MatrixXd g = rate_matrix(spec, p0, choice, 1.0 - tau, 1.0 - tau).matrix();
    Eigen::Map<const Eigen::RowVectorXd> qm(q.data(), S);
    Eigen::Map<Eigen::RowVectorXd> dm(dq.data(), S);
    dm.noalias() = qm * g;
  };
  auto stepper = ode::make_controlled(1e-13, 1e-13, ode::runge_kutta_dopri5<State>());
  double worst = 0.0, tau = 0.0;
  for (int i = 1; i <= checkpoints; ++i) {
    const double next = (1.0 - 1e-3) * i / checkpoints;
    ode::integrate_adaptive(stepper, rhs, p, tau, next, 1e-4);
    tau = next;
    worst = std::max(worst, tv_distance(p, marginal(spec, p0, 1.0 - tau)));
  }
  return worst;
}

// --- process ----------------------------------------------------------------------

CheckResult kernel_vs_expm(const VerifyOptions& o) {
  Stream rng(o.seed, 0, 1, Purpose::misc);
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    const auto spec = random_spec(rng, 2, 16);
    const double t = rng.uniform(), s = t * rng.uniform();
    const int S = spec.num_states;
    Eigen::MatrixXd gen(S, S);
    for (int x = 0; x < S; ++x)
      for (int y = 0; y < S; ++y) gen(x, y) = spec.pi(y) - (x == y ? 1.0 : 0.0);
    const Eigen::MatrixXd oracle = (gen * (spec.schedule.cumulative(t) - spec.schedule.cumulative(s))).exp();
    worst = std::max(worst, max_abs(forward_kernel(spec, s, t).matrix() - oracle));
  }
  return at_most("process", "kernel_vs_expm", worst, 1e-10, "100 random (s, t, spec), S <= 16");
}

CheckResult kernel_semigroup(const VerifyOptions& o) {
  Stream rng(o.seed, 0, 2, Purpose::misc);
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    const auto spec = random_spec(rng, 2, 16);
    double a[3] = {rng.uniform(), rng.uniform(), rng.uniform()};
    std::sort(a, a + 3);
    const Eigen::MatrixXd k = forward_kernel(spec, a[0], a[1]).matrix() * forward_kernel(spec, a[1], a[2]).matrix();
    worst = std::max(worst, max_abs(k - forward_kernel(spec, a[0], a[2]).matrix()));
  }
  return at_most("process", "kernel_semigroup", worst, 1e-10);
}

CheckResult marginal_consistency(const VerifyOptions& o) {
  Stream rng(o.seed, 0, 3, Purpose::misc);
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    const auto spec = random_spec(rng, 2, 16);
    const auto p0 = random_p0(spec, rng);
    const double t = rng.uniform(), s = t * rng.uniform();
    const auto pushed = forward_kernel(spec, s, t).push(marginal(spec, p0, s));
    const auto direct = marginal(spec, p0, t);
    for (std::size_t v = 0; v < direct.size(); ++v) worst = std::max(worst, std::abs(pushed[v] - direct[v]));
  }
  return at_most("process", "marginal_consistency", worst, 1e-12);
}

CheckResult bayes_consistency(const VerifyOptions& o) {
  Stream rng(o.seed, 0, 4, Purpose::misc);
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    const auto spec = random_spec(rng, 2, 16);
    const auto p0 = random_p0(spec, rng);
    const double t = 1e-3 + (1.0 - 1e-3) * rng.uniform();
    const auto pt = marginal(spec, p0, t);
    const Eigen::RowVectorXd mix = Eigen::Map<const Eigen::RowVectorXd>(pt.data(), spec.num_states) *
                                   posterior_rows(spec, p0, t);
    for (int v = 0; v < spec.num_states; ++v) worst = std::max(worst, std::abs(mix(v) - p0[v]));
  }
  return at_most("process", "bayes_consistency", worst, 1e-10);
}

CheckResult alpha_monotone(const VerifyOptions&) {
  int violations = 0;
  for (int k = 0; k < 3; ++k) {
    const auto sched = schedule_of(k);
    double prev = sched.alpha(0.0);
    for (int i = 1; i < 1000; ++i) {
      const double a = sched.alpha(i / 999.0);
      if (!(a < prev)) ++violations;
      prev = a;
    }
  }
  return at_most("process", "alpha_monotone", violations, 0, "violations on a 1000-point grid, three schedules");
}

// --- rates ------------------------------------------------------------------------

CheckResult dpf_marginal_preservation(const VerifyOptions& o) {
  Stream rng(o.seed, 0, 5, Purpose::misc);
  double worst = 0.0;
  for (const bool masking : {false, true}) {
    const auto spec = masking ? ProcessSpec::masking(15, NoiseSchedule::geometric())
                              : ProcessSpec::uniform(15, NoiseSchedule::geometric());
    worst = std::max(worst, marginal_flow_error(spec, random_p0(spec, rng), RateChoice::dpf(), 50));
  }
  return at_most("rates", "dpf_marginal_preservation", worst, 1e-6, "max TV at 50 checkpoints, S = 15");
}

CheckResult nu_marginal_invariance(const VerifyOptions& o) {
  Stream rng(o.seed, 0, 6, Purpose::misc);
  double worst = 0.0;
  for (const bool masking : {false, true}) {
    const auto spec = masking ? ProcessSpec::masking(15, NoiseSchedule::geometric())
                              : ProcessSpec::uniform(15, NoiseSchedule::geometric());
    const auto p0 = random_p0(spec, rng);
    for (const double nu : {0.1, 1.0, 10.0})
      worst = std::max(worst,
                       marginal_flow_error(spec, p0, RateChoice::nu_rate(StochasticitySchedule::constant(nu)), 50));
  }
  return at_most("rates", "nu_marginal_invariance", worst, 1e-6, "nu in {0.1, 1, 10}");
}

CheckResult redundancy_removal(const VerifyOptions& o) {
  Stream rng(o.seed, 0, 7, Purpose::misc);
  double worst = 0.0;
  for (int i = 0; i < 200; ++i) {
    const auto spec = random_spec(rng, 2, 16);
    const auto p0 = random_p0(spec, rng);
    const double t = 1e-3 + (1.0 - 1e-3) * rng.uniform();
    const auto pt = marginal(spec, p0, t);
    const auto r = dpf_matrix(spec, p0, t);
    for (int x = 0; x < spec.num_states; ++x)
      for (int y = 0; y < x; ++y) {
        const double a = pt[x] * r(x, y), b = pt[y] * r(y, x);
        const double hi = std::max(a, b);
        if (hi > 0.0) worst = std::max(worst, std::min(a, b) / hi);
      }
  }
  return at_most("rates", "redundancy_removal", worst, 1e-12, "max min/max opposing flow");
}

CheckResult nonnegative_rates(const VerifyOptions& o) {
  Stream rng(o.seed, 0, 8, Purpose::misc);
  double lowest = 0.0;
  const RateChoice choices[] = {RateChoice::reverse(), RateChoice::dpf(),
                                RateChoice::nu_rate(StochasticitySchedule::constant(0.5)),
                                RateChoice::nu_rate(StochasticitySchedule::max_contraction())};
  for (int i = 0; i < 200; ++i) {
    const auto spec = random_spec(rng, 2, 16);
    const auto p0 = random_p0(spec, rng);
    const auto model = std::make_shared<ClosedFormModel>(spec, p0);
    const ScoreOracle oracle(model, i % 2 ? OracleMode::perturbed(0.0, 1.0) : OracleMode::temperature(0.8));
    const double t = 0.01 + 0.98 * rng.uniform();
    const double s = t * rng.uniform();
    const auto slice = oracle.at(t);
    const auto pt = marginal(spec, p0, t);
    std::vector<double> scores(spec.num_states), row(spec.num_states);
    for (int x = 0; x < spec.num_states; ++x) {
      if (!(pt[x] > 0.0)) continue;
      const int xs[1] = {x};
      oracle.scores(*slice, xs, rng.uniform(), scores);
      for (const auto& c : choices) {
        rate_row(spec, c, t, s, x, scores, row);
        for (int v = 0; v < spec.num_states; ++v)
          if (v != x) lowest = std::min(lowest, row[v]);
      }
    }
  }
  return at_least("rates", "nonnegative_rates", lowest, 0.0, "min off-diagonal under perturbed and tempered scores");
}

// --- samplers ---------------------------------------------------------------------

double order_slope(const std::string& name, const VerifyOptions&) {
  const auto spec = ProcessSpec::uniform(15, NoiseSchedule::geometric());
  std::vector<double> lx, ly;
  for (const int n : {8, 16, 32, 64}) {
    double err = 0.0;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
      const auto p0 = draw_p0(15, seed);
      auto cfg = DcrsConfig::plain(SamplerChoice::parse(name), n, 1e-3, 7.0);
      cfg.final_step = false;
      const auto law = plan_law(spec, p0, build_plan(spec, cfg));
      err += tv_distance(law.probs(), marginal(spec, p0, 1e-3)) / 5.0;
    }
    lx.push_back(std::log(n));
    ly.push_back(std::log(err));
  }
  return fit_line(lx, ly).slope;
}

CheckResult order_first(const std::string& name, const VerifyOptions& o) {
  const double slope = order_slope(name, o);
  CheckResult r{"samplers", "convergence_order_" + name, slope, -1.0, std::abs(slope + 1.0) <= 0.25,
                "log-log TV slope over NFE 8..64 (expected -1 +- 0.25)"};
  return r;
}

CheckResult order_trapezoidal(const VerifyOptions& o) {
  return at_most("samplers", "convergence_order_trapezoidal", order_slope("trapezoidal", o), -1.1,
                 "log-log TV slope over NFE 8..64, steeper than first order");
}

CheckResult ddim_flow(bool masking, const VerifyOptions& o) {
  Stream rng(o.seed, masking, 9, Purpose::misc);
  double worst = 0.0;
  for (int i = 0; i < 25; ++i) {
    const int S = uniform_int(rng, masking ? 3 : 2, 8);
    const auto sched = schedule_of(i);
    const auto spec = masking ? ProcessSpec::masking(S, sched) : ProcessSpec::uniform(S, sched);
    const auto p0 = random_p0(spec, rng);
    const double t = 0.05 + 0.95 * rng.uniform(), s = t * rng.uniform();
    worst = std::max(worst, max_abs(ddim_kernel(spec, p0, t, s) - flow_kernel(spec, p0, RateChoice::dpf(), t, s)));
  }
  return at_most("samplers", masking ? "ddim_equals_dpf_flow_masking" : "ddim_equals_dpf_flow_uniform", worst, 1e-10,
                 "25 random (t, s, p0), S <= 8");
}

struct CorrectorCase {
  ProcessSpec spec;
  Dist p0;
  double t, s, sigma;
};

CorrectorCase corrector_case(Stream& rng) {
  CorrectorCase c{random_spec(rng, 2, 8), Dist{}, 0, 0, 0};
  c.p0 = random_p0(c.spec, rng);
  c.t = 0.05 + 0.95 * rng.uniform();
  c.s = c.t * (0.05 + 0.9 * rng.uniform());
  c.sigma = 0.999 * rng.uniform() * std::min(0.999, c.spec.schedule.one_minus_alpha(c.s));
  return c;
}

CheckResult remdm_composition(const VerifyOptions& o) {
  Stream rng(o.seed, 0, 10, Purpose::misc);
  double worst = 0.0;
  for (int i = 0; i < 50; ++i) {
    const auto c = corrector_case(rng);
    const int S = c.spec.num_states;
    const auto remdm = remdm_kernel(c.spec, c.p0, c.t, c.s, c.sigma);
    const auto ddim = ddim_kernel(c.spec, c.p0, c.t, c.s);
    const auto post_t = posterior_rows(c.spec, c.p0, c.t);
    const auto pt = marginal(c.spec, c.p0, c.t);
    for (int x = 0; x < S; ++x) {
      if (!(pt[x] > 0.0)) continue;
      // The corrector reuses the x0 prediction of the same evaluation.
      const Eigen::MatrixXd x0 = post_t.row(x).replicate(S, 1);
      const Eigen::RowVectorXd composed = ddim.row(x) * corrector_kernel(c.spec, c.s, c.sigma, x0);
      worst = std::max(worst, (composed - remdm.row(x)).cwiseAbs().maxCoeff());
    }
  }
  return at_most("samplers", "remdm_equals_ddim_then_corrector", worst, 1e-10);
}

CheckResult corrector_factorization(const VerifyOptions& o) {
  Stream rng(o.seed, 0, 11, Purpose::misc);
  double worst = 0.0;
  for (int i = 0; i < 50; ++i) {
    const auto c = corrector_case(rng);
    const auto x0 = posterior_rows(c.spec, c.p0, c.s);
    const auto whole = corrector_kernel(c.spec, c.s, c.sigma, x0);
    const Eigen::MatrixXd split =
        corrector_backward_kernel(c.spec, c.s, c.sigma, x0) * corrector_forward_kernel(c.spec, c.sigma);
    worst = std::max(worst, max_abs(whole - split));
  }
  return at_most("samplers", "corrector_equals_backward_then_forward", worst, 1e-10);
}

CheckResult corrector_preserves(const VerifyOptions& o) {
  Stream rng(o.seed, 0, 12, Purpose::misc);
  double worst = 0.0;
  for (int i = 0; i < 50; ++i) {
    const auto c = corrector_case(rng);
    const auto ps = marginal(c.spec, c.p0, c.s);
    const auto k = corrector_kernel(c.spec, c.s, c.sigma, posterior_rows(c.spec, c.p0, c.s));
    const Eigen::RowVectorXd out = Eigen::Map<const Eigen::RowVectorXd>(ps.data(), c.spec.num_states) * k;
    worst = std::max(worst, tv_distance(std::vector<double>(out.data(), out.data() + out.size()), ps));
  }
  return at_most("samplers", "corrector_preserves_marginal", worst, 1e-12);
}

CheckResult d3pm_full_step(const VerifyOptions& o) {
  const std::int64_t chains = o.fast ? 20000 : 100000;
  double p_min = 1.0, dense = 0.0;
  for (const bool masking : {false, true}) {
    const auto spec = masking ? ProcessSpec::masking(15, NoiseSchedule::geometric())
                              : ProcessSpec::uniform(15, NoiseSchedule::geometric());
    Stream prng(o.seed, masking, 13, Purpose::misc);
    const auto p0 = random_p0(spec, prng);
    const auto post = posterior_rows(spec, p0, 1.0);
    const auto pi = spec.stationary_dist();
    const Eigen::RowVectorXd law =
        Eigen::Map<const Eigen::RowVectorXd>(pi.data(), spec.num_states) * d3pm_kernel(spec, p0, 1.0, 0.0);
    for (int v = 0; v < spec.num_states; ++v) dense = std::max(dense, std::abs(law(v) - p0[v]));
    const PosteriorProvider provider = [&](double, std::span<const int> x, int, std::span<double> out) {
      for (int v = 0; v < spec.num_states; ++v) out[v] = post(x[0], v);
    };
    std::vector<double> counts(spec.num_states, 0.0);
    NfeCounter nfe;
    for (std::int64_t c = 0; c < chains; ++c) {
      Stream rng(o.seed, static_cast<std::uint64_t>(c), 0, Purpose::reverse);
      int x[1] = {masking ? spec.mask_index : static_cast<int>(rng.uniform() * spec.num_states)};
      d3pm_step(spec, provider, 1.0, 0.0, x, rng, nfe);
      counts[x[0]] += 1.0;
    }
    p_min = std::min(p_min, chi_square_gof(counts, p0.probs()).p_value);
  }
  auto r = at_least("samplers", "d3pm_full_step", p_min, 0.01,
                    "chi-square p (min over uniform, masking); dense law error " + fmt(dense));
  r.passed = r.passed && dense < 1e-10;
  return r;
}

int plan_nfe_formula(const ProcessSpec& spec, const DcrsConfig& c) {
  int n = c.n_main * c.outer.nfe_per_step() + (c.final_step ? c.outer.nfe_per_step() : 0);
  for (const auto& w : c.windows)
    n += w.k_iterations * w.n_restart * (w.use_trapezoidal ? 2 : c.inner.nfe_per_step());
  return n + (spec.is_masking() ? 1 : 0);
}

CheckResult nfe_audit(const VerifyOptions& o) {
  int mismatches = 0;
  std::string ladder;
  for (const bool masking : {false, true}) {
    const auto spec = masking ? ProcessSpec::masking(8, NoiseSchedule::geometric())
                              : ProcessSpec::uniform(8, NoiseSchedule::geometric());
    Stream prng(o.seed, masking, 14, Purpose::misc);
    const auto p0 = random_p0(spec, prng);
    const ScoreOracle oracle(std::make_shared<ClosedFormModel>(spec, p0));
    std::vector<DcrsConfig> configs;
    auto example = DcrsConfig::plain(SamplerChoice::parse("tau_leaping"), 8, 1e-3, 7.0);
    example.windows = {RestartWindow{0.3, 0.6, 3, 1, true, 0.0}};
    configs.push_back(example);
    for (const auto* name : {"tau_leaping", "dpf", "euler", "trapezoidal", "d3pm", "ddim", "nu:0.5"})
      configs.push_back(DcrsConfig::plain(SamplerChoice::parse(name), 5, 1e-3, 7.0));
    auto churned = example;
    churned.windows = {RestartWindow{0.2, 0.5, 4, 3, false, 0.2}};
    churned.inner = SamplerChoice::parse("trapezoidal");
    configs.push_back(churned);
    for (std::size_t i = 0; i < configs.size(); ++i) {
      const auto plan = build_plan(spec, configs[i]);
      const auto rec = run_plan(spec, oracle, plan, 50, o.seed, 1);
      const int formula = plan_nfe_formula(spec, configs[i]);
      if (plan.nfe != formula || rec.nfe != formula) ++mismatches;
      if (i == 0) ladder += (masking ? " masking=" : "uniform=") + std::to_string(rec.nfe);
    }
  }
  return at_most("samplers", "nfe_audit", mismatches, 0, "ladder example " + ladder + " (expected 15 and 16)");
}

CheckResult determinism(const VerifyOptions& o) {
  const auto spec = ProcessSpec::uniform(15, NoiseSchedule::geometric());
  const auto p0 = draw_p0(15, o.seed);
  const ScoreOracle oracle(std::make_shared<ClosedFormModel>(spec, p0), OracleMode::perturbed());
  auto cfg = DcrsConfig::plain(SamplerChoice::parse("nu:0.01"), 12, 1e-3, 7.0);
  cfg.windows = {RestartWindow{0.05, 0.2, 3, 2, true, 0.1}};
  const auto a = generate(spec, oracle, cfg, 20000, o.seed, 1);
  const auto b = generate(spec, oracle, cfg, 20000, o.seed, 1);
  const auto c = generate(spec, oracle, cfg, 20000, o.seed, std::max(2, o.threads));
  int differences = 0;
  if (a.final_states != b.final_states || !(a.flags == b.flags)) ++differences;
  if (a.final_states != c.final_states || !(a.flags == c.flags) || a.nfe != c.nfe) ++differences;
  return at_most("samplers", "determinism", differences, 0, "repeat and multi-threaded runs");
}

// --- dcrs -------------------------------------------------------------------------

DcrsConfig degenerate_pair(DcrsConfig& plain) {
  plain = DcrsConfig::plain(SamplerChoice::parse("dpf"), 15, 1e-3, 7.0);
  auto with = plain;
  with.windows = {RestartWindow{0.05, 0.3, 4, 0, true, 0.0}};
  return with;
}

CheckResult degeneracy_bit_exact(const VerifyOptions& o) {
  const auto spec = ProcessSpec::uniform(15, NoiseSchedule::geometric());
  const auto p0 = draw_p0(15, o.seed);
  int differences = 0;
  for (const auto mode : {OracleMode::exact(), OracleMode::perturbed()}) {
    const ScoreOracle oracle(std::make_shared<ClosedFormModel>(spec, p0), mode);
    DcrsConfig plain;
    const auto with = degenerate_pair(plain);
    const auto a = generate(spec, oracle, plain, 20000, o.seed, o.threads);
    const auto b = generate(spec, oracle, with, 20000, o.seed, o.threads);
    if (a.final_states != b.final_states || a.nfe != b.nfe) ++differences;
  }
  return at_most("dcrs", "degeneracy_bit_exact", differences, 0, "k = 0, gamma = 0 against the outer sampler");
}

CheckResult degeneracy_distribution(const VerifyOptions& o) {
  const auto spec = ProcessSpec::uniform(15, NoiseSchedule::geometric());
  const auto p0 = draw_p0(15, o.seed);
  const ScoreOracle oracle(std::make_shared<ClosedFormModel>(spec, p0));
  DcrsConfig plain;
  const auto with = degenerate_pair(plain);
  const auto law = plan_law(spec, p0, build_plan(spec, plain));
  const auto rec = generate(spec, oracle, with, o.fast ? 20000 : 100000, o.seed + 1, o.threads);
  auto counts = histogram(rec.final_states, 15);
  for (auto& c : counts) c *= static_cast<double>(rec.n_chains);
  return at_least("dcrs", "degeneracy_distribution", chi_square_gof(counts, law.probs()).p_value, 0.01,
                  "chi-square p against the exact law of the outer sampler");
}

CheckResult restart_nfe(const VerifyOptions& o) {
  const auto spec = ProcessSpec::uniform(8, NoiseSchedule::geometric());
  const ScoreOracle oracle(std::make_shared<ClosedFormModel>(spec, draw_p0(8, o.seed)));
  int mismatches = 0;
  for (const bool trap : {true, false}) {
    auto cfg = DcrsConfig::plain(SamplerChoice::parse("nu:0.01"), 10, 1e-3, 7.0);
    cfg.windows = {RestartWindow{0.1, 0.4, 3, 0, trap, 0.1}};
    const auto base = generate(spec, oracle, cfg, 100, o.seed, 1).nfe;
    const int inner = trap ? 2 : cfg.inner.nfe_per_step();
    for (int k = 1; k <= 4; ++k) {
      cfg.windows[0].k_iterations = k;
      const auto n = generate(spec, oracle, cfg, 100, o.seed, 1).nfe;
      if (n - base != k * 3 * inner) ++mismatches;
    }
  }
  return at_most("dcrs", "restart_nfe_difference", mismatches, 0, "NFE(k) - NFE(0) = k n_restart inner_nfe");
}

CheckResult diminishing_returns(const VerifyOptions& o) {
  RestartTrendConfig cfg;
  cfg.samples = 20000;
  cfg.seeds = Experiment1DConfig::default_seeds(o.fast ? 5 : 20);
  const auto trend = run_restart_trend(cfg, o.threads);
  std::string curve;
  for (double v : trend.mean_kl) curve += (curve.empty() ? "" : " ") + fmt(v);
  auto r = at_most("dcrs", "diminishing_returns", trend.first_restart.p_less, 0.05,
                   "sign test KL(k=1) < KL(k=0): " + std::to_string(trend.first_restart.less) + "/" +
                       std::to_string(trend.first_restart.less + trend.first_restart.greater) +
                       "; mean KL k=0..10: " + curve + (trend.non_monotone ? "; non-monotone" : "; monotone"));
  r.passed = r.passed && trend.non_monotone;
  return r;
}

// --- analysis ---------------------------------------------------------------------

std::vector<double> random_off_mask(int S, int mask, Stream& rng) {
  auto p = dirichlet_ones(S - 1, rng);
  p.insert(p.begin() + mask, 0.0);
  return p;
}

CheckResult masking_equality(const VerifyOptions& o) {
  Stream rng(o.seed, 0, 15, Purpose::misc);
  double worst = 0.0;
  for (int ri = 1; ri <= 9; ++ri) {
    const double r = ri / 10.0;
    for (int i = 0; i < 100; ++i) {
      const int S = uniform_int(rng, 2, 15);
      const auto spec = ProcessSpec::masking(S, NoiseSchedule::linear());
      const Channel k(forward_kernel_matrix(spec, r));
      const auto p = random_off_mask(S, spec.mask_index, rng), q = random_off_mask(S, spec.mask_index, rng);
      const double before = kl_divergence(q, p).value;
      const double after = kl_divergence(k.push(q), k.push(p)).value;
      worst = std::max(worst, std::abs(after - r * before));
    }
  }
  return at_most("analysis", "masking_equality", worst, 1e-9, "100 pairs per r in {0.1, ..., 0.9}");
}

CheckResult uniform_bound(const VerifyOptions& o) {
  double worst = 0.0;
  SearchOptions opts;
  opts.candidates = o.fast ? 2000 : 10000;
  opts.seed = o.seed;
  for (const int S : {2, 8, 15}) {
    const auto spec = ProcessSpec::uniform(S, NoiseSchedule::linear(3.0));
    for (const double r : {0.1, 0.5, 0.9}) {
      const double s = 0.05, t = s - std::log(r) / 3.0;
      const auto rep = eta_forward(spec, s, t, opts);
      worst = std::max(worst, rep.eta_kl_empirical_lower / rep.eta_kl_upper);
    }
  }
  return at_most("analysis", "uniform_bound", worst, 1.0 + 1e-9, "max empirical / upper, S in {2, 8, 15}");
}

CheckResult tv_contraction_exact(const VerifyOptions& o) {
  Stream rng(o.seed, 0, 16, Purpose::misc);
  double worst = 0.0;
  for (int i = 0; i < 200; ++i) {
    const auto spec = random_spec(rng, 2, 15);
    const double r = rng.uniform();
    const Channel k(forward_kernel_matrix(spec, r));
    const auto p = dirichlet_ones(spec.num_states, rng), q = dirichlet_ones(spec.num_states, rng);
    worst = std::max(worst, std::abs(tv_distance(k.push(q), k.push(p)) - r * tv_distance(q, p)));
  }
  return at_most("analysis", "tv_contraction_exact", worst, 1e-12);
}

std::vector<double> random_joint(int size, Stream& rng) { return dirichlet_ones(size, rng); }

int ipow(int b, int e) {
  int r = 1;
  while (e-- > 0) r *= b;
  return r;
}

CheckResult tc_identity(const VerifyOptions& o) {
  Stream rng(o.seed, 0, 17, Purpose::misc);
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    const int D = uniform_int(rng, 1, 3), S = uniform_int(rng, 2, 4);
    const auto p = random_joint(ipow(S, D), rng), q = random_joint(ipow(S, D), rng);
    worst = std::max(worst, std::abs(tc_decomposition(p, q, D, S).residual()));
  }
  return at_most("analysis", "tc_identity", worst, 1e-10, "100 random joints, D <= 3, S <= 4");
}

CheckResult product_channel(const VerifyOptions& o) {
  Stream rng(o.seed, 0, 18, Purpose::misc);
  double lowest = std::numeric_limits<double>::infinity();
  for (int i = 0; i < 100; ++i) {
    const int D = uniform_int(rng, 1, 3), S = uniform_int(rng, 2, 4);
    const auto spec = rng.uniform() < 0.5 ? ProcessSpec::uniform(S, NoiseSchedule::linear())
                                          : ProcessSpec::masking(S, NoiseSchedule::linear());
    const auto p = random_joint(ipow(S, D), rng), q = random_joint(ipow(S, D), rng);
    const double t = rng.uniform(), s = t * rng.uniform();
    lowest = std::min(lowest, product_channel_bound(spec, s, t, p, q, D).slack());
  }
  return at_least("analysis", "product_channel_bound", lowest, -1e-10, "min slack over 100 random joints");
}

CheckResult dobrushin_f_inf(const VerifyOptions& o) {
  Stream rng(o.seed, 0, 19, Purpose::misc);
  double worst = -1.0;
  for (int i = 0; i < 100; ++i) {
    const auto spec = random_spec(rng, 2, 15);
    const auto p0 = random_p0(spec, rng);
    const double t = 0.01 + 0.99 * rng.uniform();
    const auto f = posterior_keep_weights(spec, p0, t);
    const double f_inf = *std::max_element(f.begin(), f.end());
    const double d = dobrushin(posterior(spec, p0, t).reachable_channel());
    worst = std::max(worst, d - f_inf);
  }
  return at_most("analysis", "dobrushin_posterior_le_f_inf", worst, 1e-12, "max of dobrushin - ||f_t||_inf");
}

CheckResult report_ranges(const VerifyOptions& o) {
  Stream rng(o.seed, 0, 20, Purpose::misc);
  SearchOptions opts;
  opts.candidates = o.fast ? 300 : 1000;
  opts.seed = o.seed;
  int violations = 0;
  auto check = [&](const ContractionReport& r) {
    for (double v : {r.eta_kl_upper, r.eta_tv, r.eta_kl_empirical_lower})
      if (!(v >= -1e-12 && v <= 1.0 + 1e-12)) ++violations;
    if (r.eta_kl_empirical_lower > r.eta_kl_upper + 1e-9) ++violations;
  };
  for (int i = 0; i < 20; ++i) {
    const auto spec = random_spec(rng, 2, 8);
    const auto p0 = random_p0(spec, rng);
    const double t = 0.05 + 0.9 * rng.uniform(), s = t * (0.1 + 0.8 * rng.uniform());
    check(eta_forward(spec, s, t, opts));
    check(eta_dpf_reverse(spec, p0, t, s, opts));
    check(eta_posterior(spec, p0, t, opts));
    const double at = spec.schedule.alpha(t), as = spec.schedule.alpha(s);
    // nu giving sigma = (1 - alpha_s) / 2, inside every validity bound.
    const double nu = 0.5 * (1.0 - as) * at / (as - at);
    check(eta_nu_reverse(spec, p0, t, s, nu, opts));
  }
  return at_most("analysis", "contraction_report_ranges", violations, 0,
                 "values in [0, 1] and empirical <= upper + 1e-9");
}

CheckResult error_bound_unrolled(const VerifyOptions& o) {
  Stream rng(o.seed, 0, 21, Purpose::misc);
  double worst = 0.0;
  int negative = 0;
  for (int i = 0; i < 50; ++i) {
    const auto spec = random_spec(rng, 2, 8);
    const auto p0 = random_p0(spec, rng);
    const int n = uniform_int(rng, 1, 12);
    const auto grid = edm_grid(1e-3, 1.0, n + 1, 1.0 + 6.0 * rng.uniform());
    std::vector<double> eps(n);
    for (auto& e : eps) e = 0.1 * rng.uniform();
    for (const auto sampler : {BoundSampler::dpf, BoundSampler::nu_schedule}) {
      const auto trace = error_bound(spec, p0, grid, eps, sampler);
      worst = std::max(worst, std::abs(trace.bound - trace.recursion) / std::max(1.0, trace.bound));
      for (const auto& st : trace.steps)
        if (st.a < 0.0 || st.b < 0.0) ++negative;
    }
  }
  auto r = at_most("analysis", "error_bound_unrolled", worst, 1e-12, "closed form vs recursion; negative A/B: " +
                                                                         std::to_string(negative));
  r.passed = r.passed && negative == 0;
  return r;
}

CheckResult worked_cell(const VerifyOptions&) {
  const auto [a_dpf, b_dpf] = bound_coefficients(BoundSampler::dpf, 0.5, 0.8, 1.0);
  const auto [a_nu, b_nu] = bound_coefficients(BoundSampler::nu_schedule, 0.5, 0.8, 1.0);
  const double dev = std::max({std::abs(a_dpf - 1.0), std::abs(b_dpf - 0.6), std::abs(a_nu - 0.8),
                               std::abs(b_nu - 0.8)});
  return at_most("analysis", "bound_worked_cell", dev, 1e-15,
                 "(A_dpf, B_dpf, A_nu, B_nu) = (" + fmt(a_dpf) + ", " + fmt(b_dpf) + ", " + fmt(a_nu) + ", " +
                     fmt(b_nu) + ")");
}

CheckResult bound_directions(const VerifyOptions& o) {
  Stream rng(o.seed, 0, 22, Purpose::misc);
  int violations = 0;
  for (int i = 0; i < 1000; ++i) {
    const double at = rng.uniform(), as = at + (1.0 - at) * rng.uniform(), eta = rng.uniform();
    const auto [a_dpf, b_dpf] = bound_coefficients(BoundSampler::dpf, at, as, eta);
    const auto [a_nu, b_nu] = bound_coefficients(BoundSampler::nu_schedule, at, as, eta);
    if (a_nu > a_dpf + 1e-15 || b_nu < b_dpf - 1e-15) ++violations;
  }
  return at_most("analysis", "bound_directions", violations, 0, "A_nu <= A_dpf and B_nu >= B_dpf on 1000 cells");
}

CheckResult divergence_examples(const VerifyOptions&) {
  const std::vector<double> p_hat = {1.0, 0.0}, p = {0.5, 0.5};
  const auto d = divergences(p_hat, p);
  const auto same = divergences(p, p);
  const double dev = std::max({std::abs(d.kl.value - std::log(2.0)), std::abs(d.tv - 0.5), std::abs(d.w1 - 0.5),
                               same.kl.value, same.tv, same.w1});
  return at_most("analysis", "divergence_examples", dev, 1e-15);
}

}  // namespace

const std::vector<NamedCheck>& verify_checks() {
  static const std::vector<NamedCheck> checks = [] {
    std::vector<NamedCheck> c;
    auto add = [&](std::string module, std::string name, std::function<CheckResult(const VerifyOptions&)> f) {
      c.push_back({std::move(module), std::move(name), std::move(f)});
    };
    add("process", "kernel_vs_expm", kernel_vs_expm);
    add("process", "kernel_semigroup", kernel_semigroup);
    add("process", "marginal_consistency", marginal_consistency);
    add("process", "bayes_consistency", bayes_consistency);
    add("process", "alpha_monotone", alpha_monotone);
    add("rates", "dpf_marginal_preservation", dpf_marginal_preservation);
    add("rates", "nu_marginal_invariance", nu_marginal_invariance);
    add("rates", "redundancy_removal", redundancy_removal);
    add("rates", "nonnegative_rates", nonnegative_rates);
    add("samplers", "convergence_order_euler", [](const VerifyOptions& o) { return order_first("euler", o); });
    add("samplers", "convergence_order_tau_leaping",
        [](const VerifyOptions& o) { return order_first("tau_leaping", o); });
    add("samplers", "convergence_order_trapezoidal", order_trapezoidal);
    add("samplers", "ddim_equals_dpf_flow_masking", [](const VerifyOptions& o) { return ddim_flow(true, o); });
    add("samplers", "ddim_equals_dpf_flow_uniform", [](const VerifyOptions& o) { return ddim_flow(false, o); });
    add("samplers", "remdm_equals_ddim_then_corrector", remdm_composition);
    add("samplers", "corrector_equals_backward_then_forward", corrector_factorization);
    add("samplers", "corrector_preserves_marginal", corrector_preserves);
    add("samplers", "d3pm_full_step", d3pm_full_step);
    add("samplers", "nfe_audit", nfe_audit);
    add("samplers", "determinism", determinism);
    add("dcrs", "degeneracy_bit_exact", degeneracy_bit_exact);
    add("dcrs", "degeneracy_distribution", degeneracy_distribution);
    add("dcrs", "restart_nfe_difference", restart_nfe);
    add("dcrs", "diminishing_returns", diminishing_returns);
    add("analysis", "masking_equality", masking_equality);
    add("analysis", "uniform_bound", uniform_bound);
    add("analysis", "tv_contraction_exact", tv_contraction_exact);
    add("analysis", "tc_identity", tc_identity);
    add("analysis", "product_channel_bound", product_channel);
    add("analysis", "dobrushin_posterior_le_f_inf", dobrushin_f_inf);
    add("analysis", "contraction_report_ranges", report_ranges);
    add("analysis", "error_bound_unrolled", error_bound_unrolled);
    add("analysis", "bound_worked_cell", worked_cell);
    add("analysis", "bound_directions", bound_directions);
    add("analysis", "divergence_examples", divergence_examples);
    return c;
  }();
  return checks;
}

std::vector<CheckResult> run_verify(const VerifyOptions& options, const std::string& prefix) {
  std::vector<CheckResult> out;
  for (const auto& check : verify_checks()) {
    const std::string full = check.module + "." + check.name;
    if (full.rfind(prefix, 0) != 0) continue;
    try {
      out.push_back(check.run(options));
    } catch (const std::exception& e) {
      out.push_back({check.module, check.name, std::numeric_limits<double>::quiet_NaN(), 0.0, false,
                     std::string("threw: ") + e.what()});
    }
  }
  return out;
}

ResultTable verify_table(const std::vector<CheckResult>& results, std::uint64_t seed) {
  ResultTable table;
  for (const auto& r : results) {
    std::string flags = std::string(r.passed ? "pass" : "fail") + ";threshold=" + format_double(r.threshold);
    table.add({"verify", r.module, 0, seed, r.name, r.value, flags});
  }
  return table;
}

// --- contraction suite --------------------------------------------------------------

namespace {

void add_row(ResultTable& t, std::uint64_t seed, const std::string& family, const std::string& metric, double value,
             const std::string& where, bool pass) {
  t.add({"contraction", family, 0, seed, metric, value, where + (pass ? ";pass" : ";fail")});
}

}  // namespace

ResultTable run_contraction_suite(std::uint64_t seed, bool fast) {
  ResultTable t;
  SearchOptions opts;
  opts.candidates = fast ? 2000 : 10000;
  opts.seed = seed;
  Stream rng(seed, 0, 0, Purpose::misc);
  const auto sched = NoiseSchedule::linear(3.0);
  for (const int S : {2, 8, 15}) {
    const std::string at_s = "S=" + std::to_string(S) + ";D=1";
    for (const double r : {0.25, 0.5, 0.75, 1.0}) {
      const double s = 0.05, tt = s - std::log(r) / 3.0;
      const std::string where = at_s + ";r=" + format_double(r);
      const auto mask = ProcessSpec::masking(S, sched);
      const auto mrep = eta_forward(mask, s, tt, opts);
      if (S > 2) {
        // Pairs supported off the mask, where the equality holds.
        const Channel k(forward_kernel_matrix(mask, r));
        double slack = 0.0;
        for (int i = 0; i < 100; ++i) {
          auto p = dirichlet_ones(S - 1, rng), q = dirichlet_ones(S - 1, rng);
          p.push_back(0.0);
          q.push_back(0.0);
          slack = std::max(slack, std::abs(kl_divergence(k.push(q), k.push(p)).value -
                                           r * kl_divergence(q, p).value));
        }
        add_row(t, seed, "masking_forward", "equality_slack", slack, where, slack < 1e-9);
      }
      add_row(t, seed, "masking_forward", "eta_kl_upper", mrep.eta_kl_upper, where, true);
      add_row(t, seed, "masking_forward", "eta_kl_empirical_lower", mrep.eta_kl_empirical_lower, where,
              mrep.eta_kl_empirical_lower <= mrep.eta_kl_upper + 1e-9);
      const auto urep = eta_forward(ProcessSpec::uniform(S, sched), s, tt, opts);
      add_row(t, seed, "uniform_forward", "eta_kl_upper", urep.eta_kl_upper, where, true);
      add_row(t, seed, "uniform_forward", "eta_kl_empirical_lower", urep.eta_kl_empirical_lower, where, true);
      const double ratio = urep.eta_kl_empirical_lower / urep.eta_kl_upper;
      add_row(t, seed, "uniform_forward", "empirical_over_upper", ratio, where, ratio <= 1.0 + 1e-9);
      add_row(t, seed, "uniform_forward", "eta_tv", urep.eta_tv, where, std::abs(urep.eta_tv - r) < 1e-12);
    }
    // Identity channel.
    add_row(t, seed, "identity", "eta_tv", dobrushin(Eigen::MatrixXd::Identity(S, S)), at_s, true);

    for (const bool masking : {false, true}) {
      if (masking && S < 3) continue;
      const auto spec = masking ? ProcessSpec::masking(S, sched) : ProcessSpec::uniform(S, sched);
      const auto p0 = random_p0(spec, rng);
      const double tt = 0.4, s = 0.2;
      const std::string where = at_s + ";" + (masking ? "masking" : "uniform") + ";t=0.4;s=0.2";
      const auto d = eta_dpf_reverse(spec, p0, tt, s, opts);
      add_row(t, seed, "dpf_reverse", "eta_kl_upper", d.eta_kl_upper, where, d.eta_kl_upper <= 1.0 + 1e-12);
      add_row(t, seed, "dpf_reverse", "eta_kl_empirical_lower", d.eta_kl_empirical_lower, where,
              d.eta_kl_empirical_lower <= d.eta_kl_upper + 1e-9);
      add_row(t, seed, "dpf_reverse", "bound_from_f", d.bound_from_f, where, d.eta_kl_upper <= d.bound_from_f + 1e-12);
      const auto post = eta_posterior(spec, p0, tt, opts);
      add_row(t, seed, "posterior_channel", "eta_tv", post.eta_tv, where, post.eta_tv <= post.f_inf + 1e-12);
      add_row(t, seed, "posterior_channel", "f_inf", post.f_inf, where, true);
      const double at = spec.schedule.alpha(tt), as = spec.schedule.alpha(s);
      for (const double frac : {0.0, 0.5, 1.0}) {
        // frac = 1 is the maximal-contraction schedule (sigma = 1 - alpha_s).
        const double nu = frac * (1.0 - as) * at / (as - at);
        const auto n = eta_nu_reverse(spec, p0, tt, s, nu, opts);
        const std::string w = where + ";nu=" + format_double(nu);
        add_row(t, seed, "nu_reverse", "eta_kl_upper", n.eta_kl_upper, w, n.eta_kl_upper <= 1.0 + 1e-12);
        add_row(t, seed, "nu_reverse", "eta_kl_empirical_lower", n.eta_kl_empirical_lower, w,
                n.eta_kl_empirical_lower <= n.eta_kl_upper + 1e-9);
        add_row(t, seed, "nu_reverse", "factor_product", n.factor_product, w, true);
      }
    }

    for (const int D : {1, 2, 3}) {
      const std::string where = "S=" + std::to_string(S) + ";D=" + std::to_string(D);
      double residual = 0.0, slack = std::numeric_limits<double>::infinity();
      const int trials = fast ? 5 : 20;
      for (int i = 0; i < trials; ++i) {
        const auto p = dirichlet_ones(ipow(S, D), rng), q = dirichlet_ones(ipow(S, D), rng);
        residual = std::max(residual, std::abs(tc_decomposition(p, q, D, S).residual()));
        slack = std::min(slack, product_channel_bound(ProcessSpec::uniform(S, sched), 0.1, 0.3, p, q, D).slack());
      }
      add_row(t, seed, "total_correlation", "identity_residual", residual, where, residual < 1e-10);
      add_row(t, seed, "total_correlation", "product_channel_slack", slack, where, slack >= -1e-10);
    }
  }
  return t;
}

}  // namespace ctmc
