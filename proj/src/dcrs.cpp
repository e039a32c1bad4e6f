#include "ctmc/dcrs.hpp"

#include <charconv>

#include <tbb/blocked_range.h>
#include <tbb/parallel_for.h>
#include <tbb/task_arena.h>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>

namespace ctmc {

// ---------------------------------------------------------------------------
// SamplerChoice

SamplerChoice SamplerChoice::parse(const std::string& name) {
  SamplerChoice c;
  if (name == "tau_leaping") {
    c.rate = RateChoice::reverse();
  } else if (name == "dpf") {
    c.rate = RateChoice::dpf();
  } else if (name == "euler") {
    c.step = StepKind::euler;
    c.rate = RateChoice::reverse();
  } else if (name == "euler_dpf") {
    c.step = StepKind::euler;
  } else if (name == "trapezoidal") {
    c.step = StepKind::trapezoidal;
  } else if (name == "d3pm") {
    c.step = StepKind::d3pm;
  } else if (name == "ddim") {
    c.step = StepKind::ddim;
  } else if (name == "nu_max") {
    c.rate = RateChoice::nu_rate(StochasticitySchedule::max_contraction());
  } else if (name.rfind("nu:", 0) == 0) {
    std::size_t used = 0;
    double nu = 0.0;
    try {
      nu = std::stod(name.substr(3), &used);
    } catch (const std::exception&) {
      throw DomainError("bad nu value in sampler '" + name + "'");
    }
    if (used != name.size() - 3) throw DomainError("bad nu value in sampler '" + name + "'");
    c.rate = RateChoice::nu_rate(StochasticitySchedule::constant(nu));
  } else {
    throw DomainError("unknown sampler '" + name + "'");
  }
  c.validate();
  return c;
}

std::string SamplerChoice::name() const {
  switch (step) {
    case StepKind::d3pm: return "d3pm";
    case StepKind::ddim: return "ddim";
    case StepKind::trapezoidal:
      if (rate.kind == RateKind::dpf) return "trapezoidal";
      break;
    case StepKind::euler:
      if (rate.kind == RateKind::reverse) return "euler";
      if (rate.kind == RateKind::dpf) return "euler_dpf";
      break;
    case StepKind::tau_leap:
      if (rate.kind == RateKind::reverse) return "tau_leaping";
      if (rate.kind == RateKind::dpf) return "dpf";
      if (rate.kind == RateKind::nu && rate.nu.kind == StochasticitySchedule::Kind::max_contraction) return "nu_max";
      if (rate.kind == RateKind::nu && rate.nu.kind == StochasticitySchedule::Kind::constant) {
        char buf[32];
        const auto res = std::to_chars(buf, buf + sizeof buf, rate.nu.nu);
        return "nu:" + std::string(buf, res.ptr);
      }
      break;
  }
  return "custom";
}

void SamplerChoice::validate() const {
  if (!(theta > 0.0 && theta < 1.0)) throw DomainError("theta must lie in (0, 1)");
  if (rate.kind == RateKind::nu) rate.nu.validate();
}

// ---------------------------------------------------------------------------
// Plans

DcrsConfig DcrsConfig::plain(SamplerChoice sampler, int n_main, double t_stop, double rho) {
  DcrsConfig c;
  c.outer = sampler;
  c.n_main = n_main;
  c.t_stop = t_stop;
  c.rho = rho;
  return c;
}

void DcrsConfig::validate(const ProcessSpec& spec) const { (void)build_plan(spec, *this); }

std::size_t snap_to_grid(const std::vector<double>& grid, double t) {
  std::size_t best = 1;
  double best_gap = std::numeric_limits<double>::infinity();
  for (std::size_t i = 1; i < grid.size(); ++i) {
    const double gap = std::abs(grid[i] - t);
    if (gap <= best_gap) {  // later points are smaller times, so ties move down
      best = i;
      best_gap = gap;
    }
  }
  return best;
}

Plan build_plan(const ProcessSpec& spec, const DcrsConfig& config) {
  spec.validate();
  if (!(config.t_stop > 0.0 && config.t_stop < 1.0)) throw DomainError("t_stop must lie in (0, 1)");
  if (!(config.rho >= 1.0)) throw DomainError("rho must be >= 1");
  if (config.n_main < 1) throw DomainError("n_main must be >= 1");
  config.outer.validate();
  config.inner.validate();
  if (!config.inner.rate_driven()) throw DomainError("inner sampler must be rate driven");

  Plan plan;
  plan.main_grid = edm_grid(config.t_stop, 1.0, config.n_main + 1, config.rho).times;
  const auto& grid = plan.main_grid;

  for (std::size_t j = 0; j < config.windows.size(); ++j) {
    const auto& w = config.windows[j];
    const std::string tag = "window " + std::to_string(j) + ": ";
    if (!(w.t_min >= config.t_stop && w.t_min < w.t_max && w.t_max <= 1.0))
      throw DomainError(tag + "needs t_stop <= t_min < t_max <= 1");
    if (w.n_restart < 1) throw DomainError(tag + "n_restart must be >= 1");
    if (w.k_iterations < 0) throw DomainError(tag + "k_iterations must be >= 0");
    if (!(w.gamma >= 0.0)) throw DomainError(tag + "gamma must be >= 0");
    if ((1.0 + w.gamma) * w.t_max > 1.0) throw DomainError(tag + "(1 + gamma) t_max exceeds 1");
    const double snapped = grid[snap_to_grid(grid, w.t_min)];
    if (!(snapped < w.t_max)) throw DomainError(tag + "snapped t_min is not below t_max");
    plan.snapped_t_min.push_back(snapped);
  }
  for (std::size_t i = 0; i < config.windows.size(); ++i)
    for (std::size_t j = 0; j < i; ++j) {
      const double lo_i = plan.snapped_t_min[i], hi_i = config.windows[i].t_max;
      const double lo_j = plan.snapped_t_min[j], hi_j = config.windows[j].t_max;
      if (lo_i < hi_j && lo_j < hi_i)
        throw DomainError("windows " + std::to_string(j) + " and " + std::to_string(i) + " overlap after snapping");
    }

  auto push_reverse = [&](const SamplerChoice& s, double t, double t_next, int window, int iteration) {
    Op op;
    op.type = Op::Type::reverse;
    op.sampler = s;
    op.t = t;
    op.t_next = t_next;
    op.nfe = s.nfe_per_step();
    op.window = window;
    op.iteration = iteration;
    plan.ops.push_back(op);
  };

  plan.ops.push_back(Op{});  // init
  for (int i = 0; i < config.n_main; ++i) {
    push_reverse(config.outer, grid[i], grid[i + 1], -1, -1);
    for (std::size_t j = 0; j < config.windows.size(); ++j) {
      if (plan.snapped_t_min[j] != grid[i + 1]) continue;
      const auto& w = config.windows[j];
      const double lo = plan.snapped_t_min[j];
      const auto inner = edm_grid(lo, w.t_max, w.n_restart + 1, config.rho).times;
      const SamplerChoice inner_sampler = w.use_trapezoidal ? SamplerChoice::parse("trapezoidal") : config.inner;
      for (int k = 0; k < w.k_iterations; ++k) {
        Op restart;
        restart.type = Op::Type::restart;
        restart.t = lo;
        restart.t_next = w.t_max;
        restart.window = static_cast<int>(j);
        restart.iteration = k;
        plan.ops.push_back(restart);
        for (int m = 0; m < w.n_restart; ++m) {
          double t_from = inner[m];
          if (w.gamma > 0.0) {
            Op churn;
            churn.type = Op::Type::churn;
            churn.t = inner[m];
            churn.t_next = std::min(1.0, (1.0 + w.gamma) * inner[m]);
            churn.window = static_cast<int>(j);
            churn.iteration = k;
            plan.ops.push_back(churn);
            t_from = churn.t_next;
          }
          push_reverse(inner_sampler, t_from, inner[m + 1], static_cast<int>(j), k);
        }
      }
    }
  }
  if (config.final_step) push_reverse(config.outer, config.t_stop, 0.0, -1, -1);
  if (spec.is_masking()) {
    Op resolve;
    resolve.type = Op::Type::resolve_masks;
    resolve.t = resolve.t_next = config.t_stop;
    resolve.nfe = 1;
    plan.ops.push_back(resolve);
  }
  for (const auto& op : plan.ops) plan.nfe += op.nfe;
  return plan;
}

// ---------------------------------------------------------------------------
// Execution

int default_threads() {
  if (const char* env = std::getenv("CTMC_LAB_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v >= 1 && v <= 1024) return static_cast<int>(v);
  }
  return 1;
}

namespace {

constexpr std::int64_t kGrain = 512;

// One oracle evaluation time with an optional per-state table for
// one-coordinate problems whose scores do not depend on the chain.
struct Evaluation {
  std::shared_ptr<const ScoreSlice> slice;
  double t = 0.0;
  bool perturbed = false;
  std::vector<double> table;  // S*S, row per current state; NaN rows are unreachable
  bool tabulated = false;
  std::vector<double> exact;  // S*S exact scores when D == 1 but the query mode is per chain
};

// Jump law of one rate-driven leg for each value of a single coordinate.
class Leg {
 public:
  enum class Mode { euler, tau_ordered, tau_unordered };

  Leg(int states, Mode mode, double dt)
      : S_(states), mode_(mode), dt_(dt), stay_(states, 1.0), lambda_(states, 0.0),
        cum_(static_cast<std::size_t>(states * states), 0.0), ok_(states, 1), invalid_(states, 0) {}

  void set_row(int x, std::span<const double> rates) {
    if (std::isnan(rates[0])) {
      ok_[x] = 0;
      return;
    }
    double total = 0.0;
    auto cum = std::span<double>(cum_).subspan(static_cast<std::size_t>(x * S_), S_);
    for (int v = 0; v < S_; ++v) {
      if (v != x) total += rates[v];
      cum[v] = total;
    }
    if (total > 0.0)
      for (auto& c : cum) c /= total;
    const double lambda = dt_ * total;
    lambda_[x] = lambda;
    if (mode_ == Mode::euler) {
      invalid_[x] = lambda > 1.0;
      stay_[x] = 1.0 - std::min(lambda, 1.0);
    } else {
      stay_[x] = std::exp(-lambda);
    }
  }

  int move(int x, Stream& rng, StepFlags& flags) const {
    if (!ok_[x]) throw SingularScore("chain reached a state with zero marginal mass");
    if (invalid_[x]) ++flags.invalid;
    if (lambda_[x] <= 0.0) return x;
    const double u = rng.uniform();
    if (u < stay_[x]) return x;
    if (mode_ != Mode::tau_ordered) return destination(x, rng);
    int jumps = 0;
    if (lambda_[x] > 30.0) {
      jumps = std::poisson_distribution<int>(lambda_[x])(rng);
    } else {
      double p = stay_[x];
      double cdf = p;
      while (u >= cdf && jumps < 1000) {
        ++jumps;
        p *= lambda_[x] / jumps;
        cdf += p;
      }
    }
    long next = x;
    for (int j = 0; j < jumps; ++j) next += destination(x, rng) - x;
    if (next < 0 || next >= S_) {
      ++flags.clamp;
      next = std::clamp<long>(next, 0, S_ - 1);
    }
    return static_cast<int>(next);
  }

 private:
  int destination(int x, Stream& rng) const {
    const double u = rng.uniform();
    const double* cum = cum_.data() + static_cast<std::size_t>(x * S_);
    int last = x;
    for (int v = 0; v < S_; ++v) {
      if (v == x || cum[v] <= (v > 0 ? cum[v - 1] : 0.0)) continue;
      last = v;
      if (u < cum[v]) return v;
    }
    return last;
  }

  int S_;
  Mode mode_;
  double dt_;
  std::vector<double> stay_, lambda_, cum_;
  std::vector<char> ok_, invalid_;
};

class Executor {
 public:
  Executor(const ProcessSpec& spec, const ScoreOracle& oracle, std::int64_t n_chains, std::uint64_t seed, int threads)
      : spec_(spec),
        oracle_(oracle),
        n_(n_chains),
        seed_(seed),
        D_(oracle.dims()),
        S_(spec.num_states),
        arena_(std::max(1, threads)),
        x_(static_cast<std::size_t>(n_chains * oracle.dims()), 0) {
    if (oracle.states() != spec.num_states) throw DomainError("oracle and process disagree on the number of states");
  }

  std::int64_t evaluations() const { return evaluations_; }
  StepFlags flags() const {
    StepFlags f;
    f.clamp = clamp_.load();
    f.invalid = invalid_.load();
    f.churn_clamped = churn_clamped_.load();
    return f;
  }
  std::vector<int> take_states() { return std::move(x_); }

  void run(const Op& op, std::uint64_t index) {
    switch (op.type) {
      case Op::Type::init: return init(index);
      case Op::Type::reverse: return reverse(op, index);
      case Op::Type::churn:
      case Op::Type::restart: return forward(op, index);
      case Op::Type::resolve_masks: return resolve(op, index);
    }
  }

 private:
  template <class Body>
  void for_chains(Body&& body) {
    arena_.execute([&] {
      tbb::parallel_for(tbb::blocked_range<std::int64_t>(0, n_, kGrain),
                        [&](const tbb::blocked_range<std::int64_t>& r) { body(r.begin(), r.end()); });
    });
  }

  std::span<int> chain(std::int64_t c) { return std::span<int>(x_).subspan(static_cast<std::size_t>(c * D_), D_); }

  void init(std::uint64_t index) {
    for_chains([&](std::int64_t lo, std::int64_t hi) {
      for (std::int64_t c = lo; c < hi; ++c) {
        Stream rng(seed_, static_cast<std::uint64_t>(c), index, Purpose::init);
        for (auto& v : chain(c)) {
          if (spec_.is_masking())
            v = spec_.mask_index;
          else
            v = static_cast<int>(rng.uniform() * S_) % S_;
        }
      }
    });
  }

  void forward(const Op& op, std::uint64_t index) {
    const double r = spec_.schedule.alpha_ratio(op.t, op.t_next);
    for_chains([&](std::int64_t lo, std::int64_t hi) {
      for (std::int64_t c = lo; c < hi; ++c) {
        Stream rng(seed_, static_cast<std::uint64_t>(c), index, Purpose::forward);
        forward_move(spec_, r, chain(c), rng);
      }
    });
  }

  Evaluation evaluate(double t) {
    ++evaluations_;
    Evaluation e;
    e.slice = oracle_.at(t);
    e.t = t;
    e.perturbed = oracle_.perturbed_at(t);
    return e;
  }

  // Per-state table for D == 1 when the chain's multiplier is irrelevant.
  template <class RowFn>
  void tabulate(Evaluation& e, RowFn&& row_fn) {
    if (D_ == 1 && e.perturbed) return tabulate_exact(e);
    if (D_ != 1) return;
    e.table.assign(static_cast<std::size_t>(S_ * S_), 0.0);
    std::vector<double> scores(S_);
    for (int x = 0; x < S_; ++x) {
      auto row = std::span<double>(e.table).subspan(static_cast<std::size_t>(x * S_), S_);
      try {
        row_fn(x, row);
      } catch (const SingularScore&) {
        std::fill(row.begin(), row.end(), std::numeric_limits<double>::quiet_NaN());
      } catch (const UnreachableState&) {
        std::fill(row.begin(), row.end(), std::numeric_limits<double>::quiet_NaN());
      }
    }
    e.tabulated = true;
  }

  void tabulate_exact(Evaluation& e) {
    e.exact.assign(static_cast<std::size_t>(S_ * S_), 0.0);
    for (int x = 0; x < S_; ++x) {
      auto row = std::span<double>(e.exact).subspan(static_cast<std::size_t>(x * S_), S_);
      const int xs[1] = {x};
      try {
        e.slice->scores(xs, row);
      } catch (const SingularScore&) {
        std::fill(row.begin(), row.end(), std::numeric_limits<double>::quiet_NaN());
      }
    }
  }

  static std::span<const double> table_row(const Evaluation& e, int x, int S) {
    auto row = std::span<const double>(e.table).subspan(static_cast<std::size_t>(x * S), S);
    if (std::isnan(row[0])) throw SingularScore("chain reached a state with zero marginal mass");
    return row;
  }

  void rates(const Evaluation& e, const RateStep& step, std::span<const int> x, double c, std::span<double> scores,
             std::span<double> out) const {
    if (e.tabulated) {
      auto row = table_row(e, x[0], S_);
      std::copy(row.begin(), row.end(), out.begin());
      return;
    }
    if (!e.exact.empty()) {
      auto row = std::span<const double>(e.exact).subspan(static_cast<std::size_t>(x[0] * S_), S_);
      if (std::isnan(row[0])) throw SingularScore("p_t(x) = 0 at state " + std::to_string(x[0]));
      std::copy(row.begin(), row.end(), scores.begin());
      oracle_.modify(e.t, x, c, scores);
    } else {
      oracle_.scores(*e.slice, x, c, scores);
    }
    rate_rows(spec_, step, x, scores, out);
  }

  void reverse(const Op& op, std::uint64_t index) {
    const auto& s = op.sampler;
    if (!s.rate_driven()) return analytic(op, index);
    const bool ordered = !spec_.is_masking();
    const double t_mid = op.t + s.theta * (op.t_next - op.t);
    Evaluation e0 = evaluate(op.t);
    Evaluation e1;
    const bool trap = s.step == StepKind::trapezoidal;
    if (trap) e1 = evaluate(t_mid);
    auto tab = [&](Evaluation& e) {
      tabulate(e, [&](int x, std::span<double> row) {
        std::vector<double> scores(S_);
        const int xs[1] = {x};
        oracle_.scores(*e.slice, xs, 1.0, scores);
        rate_row(spec_, s.rate, e.t, op.t_next, x, scores, row);
      });
    };
    tab(e0);
    if (trap) tab(e1);
    if (e0.tabulated && (!trap || e1.tabulated)) return reverse_tabulated(op, index, e0, e1, t_mid);

    const RateStep step0 = rate_step(spec_, s.rate, op.t, op.t_next);
    const RateStep step1 = trap ? rate_step(spec_, s.rate, t_mid, op.t_next) : step0;
    for_chains([&](std::int64_t lo, std::int64_t hi) {
      const std::size_t n = static_cast<std::size_t>(D_ * S_);
      std::vector<double> scores(n), r0(n), r1(n), comb(n);
      std::vector<int> before(D_);
      StepFlags local;
      for (std::int64_t c = lo; c < hi; ++c) {
        auto x = chain(c);
        Stream rng(seed_, static_cast<std::uint64_t>(c), index, Purpose::reverse);
        Stream noise(seed_, static_cast<std::uint64_t>(c), index, Purpose::perturb);
        const double c0 = e0.perturbed ? noise.uniform() : 1.0;
        rates(e0, step0, x, c0, scores, r0);
        if (s.step == StepKind::euler) {
          euler_move(S_, r0, op.t - op.t_next, x, rng, local);
        } else if (s.step == StepKind::tau_leap) {
          tau_leap_move(S_, ordered, r0, op.t - op.t_next, x, rng, local);
        } else {
          std::copy(x.begin(), x.end(), before.begin());
          tau_leap_move(S_, ordered, r0, op.t - t_mid, x, rng, local);
          const double c1 = e1.perturbed ? noise.uniform() : 1.0;
          rates(e1, step1, x, c1, scores, r1);
          trapezoid_combine(S_, ordered, s.theta, before, r0, x, r1, comb);
          tau_leap_move(S_, ordered, comb, t_mid - op.t_next, x, rng, local);
        }
      }
      clamp_ += local.clamp;
      invalid_ += local.invalid;
    });
  }

  void reverse_tabulated(const Op& op, std::uint64_t index, const Evaluation& e0, const Evaluation& e1,
                         double t_mid) {
    const auto& s = op.sampler;
    const Leg::Mode mode = s.step == StepKind::euler ? Leg::Mode::euler
                           : spec_.is_masking()      ? Leg::Mode::tau_unordered
                                                     : Leg::Mode::tau_ordered;
    const bool trap = s.step == StepKind::trapezoidal;
    Leg first(S_, mode, trap ? op.t - t_mid : op.t - op.t_next);
    for (int x = 0; x < S_; ++x) first.set_row(x, table_row_raw(e0, x));
    // Second trapezoidal leg, indexed by (value before the step, value at t_mid).
    std::vector<Leg> second;
    if (trap) {
      std::vector<double> comb(S_);
      for (int xb = 0; xb < S_; ++xb) {
        second.emplace_back(S_, mode, t_mid - op.t_next);
        for (int xm = 0; xm < S_; ++xm) {
          auto r0 = table_row_raw(e0, xb);
          auto r1 = table_row_raw(e1, xm);
          if (std::isnan(r0[0]) || std::isnan(r1[0])) {
            comb[0] = std::numeric_limits<double>::quiet_NaN();
          } else {
            const int xs0[1] = {xb}, xs1[1] = {xm};
            trapezoid_combine(S_, mode == Leg::Mode::tau_ordered, s.theta, xs0, r0, xs1, r1, comb);
          }
          second.back().set_row(xm, comb);
        }
      }
    }
    for_chains([&](std::int64_t lo, std::int64_t hi) {
      StepFlags local;
      for (std::int64_t c = lo; c < hi; ++c) {
        int& x = x_[static_cast<std::size_t>(c)];
        Stream rng(seed_, static_cast<std::uint64_t>(c), index, Purpose::reverse);
        const int before = x;
        x = first.move(x, rng, local);
        if (trap) x = second[static_cast<std::size_t>(before)].move(x, rng, local);
      }
      clamp_ += local.clamp;
      invalid_ += local.invalid;
    });
  }

  static std::span<const double> table_row_raw(const Evaluation& e, int x) {
    const int S = static_cast<int>(std::lround(std::sqrt(static_cast<double>(e.table.size()))));
    return std::span<const double>(e.table).subspan(static_cast<std::size_t>(x * S), S);
  }

  void analytic(const Op& op, std::uint64_t index) {
    const auto& s = op.sampler;
    Evaluation e = evaluate(op.t);
    auto law_row = [&](int xd, std::span<const double> post, std::span<double> law) {
      if (s.step == StepKind::d3pm)
        d3pm_row(spec_, op.t, op.t_next, xd, post, law);
      else
        ddim_row(spec_, op.t, op.t_next, xd, post, law);
    };
    tabulate(e, [&](int x, std::span<double> row) {
      std::vector<double> post(S_);
      const int xs[1] = {x};
      oracle_.posterior(spec_, *e.slice, xs, 0, 1.0, post);
      law_row(x, post, row);
    });
    for_chains([&](std::int64_t lo, std::int64_t hi) {
      std::vector<double> post(S_), law(S_);
      std::vector<int> before(D_);
      for (std::int64_t c = lo; c < hi; ++c) {
        auto x = chain(c);
        Stream rng(seed_, static_cast<std::uint64_t>(c), index, Purpose::reverse);
        Stream noise(seed_, static_cast<std::uint64_t>(c), index, Purpose::perturb);
        if (e.tabulated) {
          x[0] = sample_categorical(table_row(e, x[0], S_), rng);
          continue;
        }
        const double cm = e.perturbed ? noise.uniform() : 1.0;
        std::copy(x.begin(), x.end(), before.begin());
        for (int d = 0; d < D_; ++d) {
          oracle_.posterior(spec_, *e.slice, before, d, cm, post);
          law_row(before[d], post, law);
          x[d] = sample_categorical(law, rng);
        }
      }
    });
  }

  void resolve(const Op& op, std::uint64_t index) {
    Evaluation e = evaluate(op.t);
    const int mask = spec_.mask_index;
    for_chains([&](std::int64_t lo, std::int64_t hi) {
      std::vector<double> cond(S_);
      std::vector<int> before(D_);
      for (std::int64_t c = lo; c < hi; ++c) {
        auto x = chain(c);
        if (std::find(x.begin(), x.end(), mask) == x.end()) continue;
        Stream rng(seed_, static_cast<std::uint64_t>(c), index, Purpose::denoise);
        Stream noise(seed_, static_cast<std::uint64_t>(c), index, Purpose::perturb);
        const double cm = e.perturbed ? noise.uniform() : 1.0;
        std::copy(x.begin(), x.end(), before.begin());
        for (int d = 0; d < D_; ++d) {
          if (before[d] != mask) continue;
          oracle_.conditional(*e.slice, before, d, cm, cond);
          cond[mask] = 0.0;
          double total = 0.0;
          for (double v : cond) total += v;
          if (total > 0.0) x[d] = sample_categorical(cond, rng);
        }
      }
    });
  }

  const ProcessSpec& spec_;
  const ScoreOracle& oracle_;
  std::int64_t n_;
  std::uint64_t seed_;
  int D_;
  int S_;
  tbb::task_arena arena_;
  std::vector<int> x_;
  std::int64_t evaluations_ = 0;
  std::atomic<std::int64_t> clamp_{0};
  std::atomic<std::int64_t> invalid_{0};
  std::atomic<std::int64_t> churn_clamped_{0};
};

}  // namespace

RunRecord run_plan(const ProcessSpec& spec, const ScoreOracle& oracle, const Plan& plan, std::int64_t n_chains,
                   std::uint64_t seed, int threads) {
  if (n_chains < 1) throw DomainError("need at least one chain");
  const auto start = std::chrono::steady_clock::now();
  Executor ex(spec, oracle, n_chains, seed, threads);
  for (std::size_t i = 0; i < plan.ops.size(); ++i) ex.run(plan.ops[i], static_cast<std::uint64_t>(i));
  if (ex.evaluations() != plan.nfe)
    throw std::logic_error("NFE audit failed: planned " + std::to_string(plan.nfe) + ", performed " +
                           std::to_string(ex.evaluations()));
  RunRecord rec;
  rec.dims = oracle.dims();
  rec.n_chains = n_chains;
  rec.nfe = plan.nfe;
  rec.flags = ex.flags();
  rec.seed = seed;
  rec.final_states = ex.take_states();
  rec.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return rec;
}

RunRecord generate(const ProcessSpec& spec, const ScoreOracle& oracle, const DcrsConfig& config,
                   std::int64_t n_chains, std::uint64_t seed, int threads) {
  return run_plan(spec, oracle, build_plan(spec, config), n_chains, seed, threads);
}

std::optional<DcrsConfig> scale_config(const DcrsConfig& base, int target) {
  if (target < 2) return std::nullopt;
  const double f = static_cast<double>(target) / static_cast<double>(base.n_main + 1);
  DcrsConfig c = base;
  c.n_main = target - 1;
  for (auto& w : c.windows) {
    const int points = static_cast<int>(std::floor(f * (w.n_restart + 1) + 0.5));
    w.n_restart = points - 1;
    if (w.n_restart < 1) return std::nullopt;
  }
  return c;
}

std::vector<SweepRow> sweep(const ProcessSpec& spec, const ScoreOracle& oracle, const DcrsConfig& base,
                            const std::vector<int>& nfe_targets, std::int64_t n_chains, std::uint64_t seed,
                            int threads) {
  for (std::size_t i = 0; i < nfe_targets.size(); ++i) {
    if (nfe_targets[i] <= 0) throw DomainError("NFE targets must be positive");
    if (i > 0 && nfe_targets[i] <= nfe_targets[i - 1]) throw DomainError("NFE targets must be increasing");
  }
  std::vector<SweepRow> rows;
  for (int target : nfe_targets) {
    SweepRow row;
    row.target = target;
    auto cfg = scale_config(base, target);
    if (!cfg) {
      row.config = base;
      row.warning = "target " + std::to_string(target) + " is below the smallest reachable NFE";
    } else {
      row.config = *cfg;
      row.record = generate(spec, oracle, *cfg, n_chains, seed, threads);
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace ctmc

namespace ctmc {

Dist plan_law(const ProcessSpec& spec, const Dist& p0, const Plan& plan) {
  const int S = spec.num_states;
  if (static_cast<int>(p0.size()) != S) throw DomainError("plan_law: p0 has the wrong size");
  const bool ordered = !spec.is_masking();
  Eigen::RowVectorXd law = Eigen::RowVectorXd::Zero(S);
  for (const auto& op : plan.ops) {
    switch (op.type) {
      case Op::Type::init:
        if (spec.is_masking())
          law(spec.mask_index) = 1.0;
        else
          law.setConstant(1.0 / S);
        break;
      case Op::Type::churn:
      case Op::Type::restart:
        law = law * forward_kernel_matrix(spec, spec.schedule.alpha_ratio(op.t, op.t_next));
        break;
      case Op::Type::resolve_masks: {
        const auto pt = marginal(spec, p0, op.t);
        const int mask = spec.mask_index;
        double total = 0.0;
        for (int v = 0; v < S; ++v)
          if (v != mask) total += pt[v];
        if (!(total > 0.0)) break;
        const double m = law(mask);
        law(mask) = 0.0;
        for (int v = 0; v < S; ++v)
          if (v != mask) law(v) += m * pt[v] / total;
        break;
      }
      case Op::Type::reverse: {
        const auto& s = op.sampler;
        const double dt = op.t - op.t_next;
        Eigen::MatrixXd k;
        if (s.step == StepKind::d3pm) {
          k = d3pm_kernel(spec, p0, op.t, op.t_next);
        } else if (s.step == StepKind::ddim) {
          k = ddim_kernel(spec, p0, op.t, op.t_next);
        } else {
          const auto r0 = rate_matrix(spec, p0, s.rate, op.t, op.t_next).matrix();
          if (s.step == StepKind::euler) {
            k = euler_kernel(r0, dt);
          } else if (s.step == StepKind::tau_leap) {
            k = tau_leap_kernel(r0, dt, ordered);
          } else {
            const double t_mid = op.t + s.theta * (op.t_next - op.t);
            const auto r1 = rate_matrix(spec, p0, s.rate, t_mid, op.t_next).matrix();
            k = trapezoidal_kernel(r0, r1, op.t - t_mid, t_mid - op.t_next, s.theta, ordered);
          }
        }
        law = law * k;
        break;
      }
    }
  }
  std::vector<double> out(S);
  for (int v = 0; v < S; ++v) out[v] = std::max(law(v), 0.0);
  const double total = std::accumulate(out.begin(), out.end(), 0.0);
  for (auto& v : out) v /= total;
  return Dist(std::move(out));
}

}  // namespace ctmc
