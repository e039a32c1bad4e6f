#pragma once

// Whole generation runs. A run is compiled into a Plan, a flat list of ops
// (init, reverse step, churn, restart, mask resolution). Every op is applied
// to all chains before the next one starts; chain c at op i draws from the
// streams keyed by (seed, c, i, purpose), so results do not depend on the
// thread count or on how chains are scheduled.

#include "ctmc/oracle.hpp"
#include "ctmc/rates.hpp"
#include "ctmc/samplers.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace ctmc {

enum class StepKind { euler, tau_leap, trapezoidal, d3pm, ddim };

/// A reverse-step scheme plus the rate it integrates (rate-driven kinds only).
struct SamplerChoice {
  StepKind step = StepKind::tau_leap;
  RateChoice rate = RateChoice::dpf();
  double theta = 0.5;

  /// tau_leaping, dpf, euler, euler_dpf, trapezoidal, d3pm, ddim, nu:<value>, nu_max.
  static SamplerChoice parse(const std::string& name);
  std::string name() const;
  int nfe_per_step() const { return step == StepKind::trapezoidal ? 2 : 1; }
  bool rate_driven() const { return step == StepKind::euler || step == StepKind::tau_leap || step == StepKind::trapezoidal; }
  void validate() const;

  bool operator==(const SamplerChoice&) const = default;
};

struct RestartWindow {
  double t_min = 0.7;
  double t_max = 0.8;
  int n_restart = 3;
  int k_iterations = 1;
  bool use_trapezoidal = true;
  double gamma = 0.0;

  bool operator==(const RestartWindow&) const = default;
};

/// n_main counts reverse steps on the main grid over [t_stop, 1]; the grid
/// has n_main + 1 points. Each window runs n_restart inner steps on a grid of
/// n_restart + 1 points over [t_min, t_max]. After the main grid a final step
/// t_stop -> 0 is taken with the outer sampler, and masking processes add one
/// more evaluation that resolves coordinates still masked.
struct DcrsConfig {
  double t_stop = 1e-3;
  double rho = 7.0;
  int n_main = 8;
  std::vector<RestartWindow> windows;
  SamplerChoice outer = SamplerChoice::parse("nu:0.01");
  /// Rate-driven scheme used inside windows when use_trapezoidal is false.
  SamplerChoice inner = SamplerChoice::parse("dpf");
  bool final_step = true;

  /// A plain sampler: no windows.
  static DcrsConfig plain(SamplerChoice sampler, int n_main, double t_stop = 1e-3, double rho = 1.0);

  void validate(const ProcessSpec& spec) const;
  bool operator==(const DcrsConfig&) const = default;
};

struct Op {
  enum class Type { init, reverse, churn, restart, resolve_masks };
  Type type = Type::init;
  SamplerChoice sampler;
  double t = 1.0;
  double t_next = 1.0;
  int nfe = 0;
  int window = -1;
  int iteration = -1;
};

struct Plan {
  std::vector<Op> ops;
  std::vector<double> main_grid;
  /// Window t_min after snapping to the main grid.
  std::vector<double> snapped_t_min;
  std::int64_t nfe = 0;
};

/// Validates the config and lays out every op. Throws DomainError on a bad config.
Plan build_plan(const ProcessSpec& spec, const DcrsConfig& config);

/// Index of the main-grid point nearest to t among grid[1..]; ties go to the smaller time.
std::size_t snap_to_grid(const std::vector<double>& grid, double t);

/// Exact law of the final state of a one-coordinate run under the exact
/// scores of p0, obtained by composing the kernel of every op.
Dist plan_law(const ProcessSpec& spec, const Dist& p0, const Plan& plan);

struct RunRecord {
  std::vector<int> final_states;  // n_chains * dims, chain-major
  int dims = 1;
  std::int64_t n_chains = 0;
  std::int64_t nfe = 0;
  StepFlags flags;
  std::uint64_t seed = 0;
  double wall_time = 0.0;

  std::span<const int> chain(std::int64_t c) const {
    return std::span<const int>(final_states).subspan(static_cast<std::size_t>(c * dims), static_cast<std::size_t>(dims));
  }
};

/// Worker count from the CTMC_LAB_THREADS environment variable, else 1.
int default_threads();

RunRecord run_plan(const ProcessSpec& spec, const ScoreOracle& oracle, const Plan& plan, std::int64_t n_chains,
                   std::uint64_t seed, int threads = 1);

RunRecord generate(const ProcessSpec& spec, const ScoreOracle& oracle, const DcrsConfig& config,
                   std::int64_t n_chains, std::uint64_t seed, int threads = 1);

/// Rescales n_main and every n_restart so that the main trajectory uses
/// `target` evaluations (n_main + 1 = target); window point counts scale by
/// the same factor, rounding half up. Empty when the target is unreachable.
std::optional<DcrsConfig> scale_config(const DcrsConfig& base, int target);

struct SweepRow {
  int target = 0;
  DcrsConfig config;
  std::optional<RunRecord> record;
  std::string warning;
};

std::vector<SweepRow> sweep(const ProcessSpec& spec, const ScoreOracle& oracle, const DcrsConfig& base,
                            const std::vector<int>& nfe_targets, std::int64_t n_chains, std::uint64_t seed,
                            int threads = 1);

}  // namespace ctmc
