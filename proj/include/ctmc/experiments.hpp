#pragma once

// Desk-scale studies: the 1D benchmark with exact or perturbed scores, the
// quantized mixture of Gaussians, and ad-hoc single runs and NFE sweeps.

#include "ctmc/analysis.hpp"
#include "ctmc/dcrs.hpp"
#include "ctmc/results.hpp"
#include "ctmc/stats.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace ctmc {

// --- 1D benchmark --------------------------------------------------------------

struct Experiment1DConfig {
  std::string experiment_id = "exp1d";
  int num_states = 15;
  NoiseSchedule schedule = NoiseSchedule::geometric();
  /// Sampler names accepted by SamplerChoice::parse, plus "dcrs" (uses `dcrs`).
  std::vector<std::string> samplers = {"tau_leaping", "dpf"};
  /// NFE rungs. Plain samplers take n_main = rung / nfe_per_step - 1 steps;
  /// "dcrs" scales `dcrs` so the main trajectory uses `rung` evaluations.
  std::vector<int> nfe_ladder = {4, 8, 16, 32, 64, 128, 256, 512, 1024};
  OracleMode score_mode = OracleMode::exact();
  std::int64_t samples = 1000000;
  std::vector<std::uint64_t> seeds = default_seeds(20);
  double t_stop = 1e-3;
  double rho = 7.0;
  DcrsConfig dcrs;

  static std::vector<std::uint64_t> default_seeds(int n);
  /// Every problem found, in order; empty when valid.
  std::vector<std::string> problems() const;
  void validate() const;
  bool operator==(const Experiment1DConfig&) const = default;
};

/// Ground truth for one seed: a uniform draw from the simplex.
Dist draw_p0(int num_states, std::uint64_t seed);

/// Plain-sampler config for an NFE rung; empty when the rung does not fit.
std::optional<DcrsConfig> plain_config_for_rung(const SamplerChoice& sampler, int rung, double t_stop, double rho);

/// One row per (seed, sampler, rung, metric): kl, kl_infinite, tv, w1,
/// clamp, invalid, wall-clock excluded. Flags column carries the flag counts.
ResultTable run_1d(const Experiment1DConfig& config, int threads = 1);

/// Smallest rung whose value is within (1 + tolerance) of the last rung's.
int plateau_rung(const std::vector<int>& ladder, const std::vector<double>& values, double tolerance = 0.1);

// --- restart iterations on the perturbed 1D benchmark --------------------------

struct RestartTrendConfig {
  int num_states = 15;
  NoiseSchedule schedule = NoiseSchedule::geometric();
  SamplerChoice outer = SamplerChoice::parse("dpf");
  SamplerChoice inner = SamplerChoice::parse("dpf");
  int n_main = 31;
  /// k_iterations is overwritten with 0..max_k.
  RestartWindow window{0.01, 0.05, 8, 0, false, 0.0};
  int max_k = 10;
  std::int64_t samples = 100000;
  std::vector<std::uint64_t> seeds = Experiment1DConfig::default_seeds(20);
  double t_stop = 1e-3;
  double rho = 7.0;
};

struct RestartTrend {
  std::vector<std::vector<double>> kl;  // [k][seed index]
  std::vector<double> mean_kl;
  std::vector<std::int64_t> nfe;        // per k
  SignTest first_restart;               // KL(k = 1) < KL(k = 0)
  /// Some k has mean_kl[k + 1] > mean_kl[k].
  bool non_monotone = false;
};

RestartTrend run_restart_trend(const RestartTrendConfig& config, int threads = 1);

// --- mixture of Gaussians --------------------------------------------------------

/// n xor (n >> 1).
unsigned gray_encode(unsigned n);
unsigned gray_decode(unsigned g);

/// Isotropic mixture, optionally pushed through a linear map: the data point
/// is loading * z with z ~ sum_m w_m N(mu_m, sigma^2 I_2).
struct GaussianMixture {
  int latent_dims = 2;
  int dims = 2;
  std::vector<double> latent_means;  // modes * latent_dims
  std::vector<double> weights;
  double sigma = 0.1;
  Eigen::MatrixXd loading;  // dims x latent_dims

  int modes() const { return static_cast<int>(weights.size()); }
  std::vector<double> mean(int m) const;  // in data space
};

/// W1 on the line between a weighted point set and the mixture projected on `direction`.
double w1_to_mixture_1d(std::span<const double> points, std::span<const double> weights,
                        const GaussianMixture& mix, std::span<const double> direction);

double sliced_w1_to_mixture(const PointCloud& cloud, const GaussianMixture& mix,
                            int projections = kSlicedProjections, std::uint64_t seed = kSlicedSeed);

/// Cap on data_dims * bits_per_coordinate for the exact oracle. Masking
/// enumerates 3^bits states and is further capped by the model size.
constexpr int kMaxMogBits = 14;

struct MoGConfig {
  std::string experiment_id = "mog";
  int modes = 8;
  double radius = 1.0;
  double sigma = 0.1;
  int bits_per_coordinate = 6;
  bool gray_code = true;
  int dims = 2;
  /// 0 keeps the 2D data; otherwise a fixed Gaussian projection to this many dimensions.
  int projection_dims = 0;
  std::uint64_t projection_seed = 17;
  /// Quantization range per data coordinate; the edge cells absorb the tails.
  double range = 1.5;
  StationaryKind process = StationaryKind::uniform;
  NoiseSchedule train_schedule = NoiseSchedule::linear();
  NoiseSchedule inference_schedule = NoiseSchedule::geometric();
  bool mismatch = true;
  std::vector<std::string> samplers = {"tau_leaping", "dpf", "dcrs"};
  std::vector<int> nfe_ladder = {8, 16, 32, 64, 128, 256, 512};
  std::int64_t samples = 10000;
  std::vector<std::uint64_t> seeds = Experiment1DConfig::default_seeds(10);
  double t_stop = 1e-3;
  double rho = 7.0;
  /// DCRS template; n_main and n_restart are set per rung (see dcrs_config_for_rung).
  DcrsConfig dcrs = default_dcrs();

  static DcrsConfig default_dcrs();
  int data_dims() const { return projection_dims > 0 ? projection_dims : dims; }
  int binary_dims() const { return data_dims() * bits_per_coordinate; }
  std::vector<std::string> problems() const;
  void validate() const;
  bool operator==(const MoGConfig&) const = default;
};

/// DCRS for a rung R with k restart iterations: the window gets as many
/// steps as the main trajectory, n_restart = n_main + 1 = R / (k + 1) for DPF inner steps.
std::optional<DcrsConfig> dcrs_config_for_rung(const DcrsConfig& base, int rung);

struct MoGProblem {
  MoGConfig config;
  GaussianMixture mixture;
  ProcessSpec inference_spec;
  ProcessSpec oracle_spec;
  /// Joint over S^(binary_dims) (S = 2 uniform, 3 masking).
  std::vector<double> joint;
  /// Exact cell probabilities over data cells, L^data_dims with L = 2^bits.
  std::vector<double> cell_probs;
  /// Centre coordinates of every data cell (cells * data_dims).
  std::vector<double> cell_centres;
  /// Sliced W1 between the quantized law and the continuous mixture.
  double quantization_floor = 0.0;
};

/// Validates, then throws DomainError with a sizing hint when the joint exceeds the cap.
MoGProblem build_mog(const MoGConfig& config);

/// Binary-coordinate state to data-cell index; -1 if any coordinate is masked.
long cell_of_state(const MoGProblem& problem, std::span<const int> x);

/// sliced_w1, per-mode occupancy fractions, modes_covered, masked_fraction.
ResultTable run_mog(const MoGConfig& config, int threads = 1);

// --- single runs and sweeps -------------------------------------------------------

struct SampleConfig {
  std::string experiment_id = "sample";
  ProcessSpec process = ProcessSpec::uniform(15, NoiseSchedule::geometric());
  /// Empty: drawn from the simplex with the run seed.
  std::vector<double> p0;
  OracleMode score_mode = OracleMode::exact();
  DcrsConfig sampler = DcrsConfig::plain(SamplerChoice::parse("dpf"), 63, 1e-3, 7.0);
  std::int64_t chains = 100000;
  /// Used by `sweep`: main-trajectory NFE rungs.
  std::vector<int> nfe_targets = {12, 26, 54, 110};

  void validate() const;
  bool operator==(const SampleConfig&) const = default;
};

/// kl, tv, w1, nfe and flag counts for one generation.
ResultTable run_sample(const SampleConfig& config, std::uint64_t seed, int threads = 1);

/// One row group per (sampler, achieved NFE); unreachable targets give a warning row.
ResultTable run_sweep(const SampleConfig& config, std::uint64_t seed, int threads = 1);

std::string flags_string(const StepFlags& flags);

}  // namespace ctmc
