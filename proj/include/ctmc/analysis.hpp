#pragma once

// Contraction coefficients, the TV error-bound recursion, the total
// correlation split of a joint KL, and empirical divergences.

#include "ctmc/process.hpp"
#include "ctmc/samplers.hpp"

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace ctmc {

enum class ContractionFamily { masking_forward, uniform_forward, dpf_reverse, nu_reverse, posterior_channel };

std::string to_string(ContractionFamily family);

struct ContractionReport {
  ContractionFamily family = ContractionFamily::uniform_forward;
  double eta_kl_upper = 1.0;
  double eta_tv = 1.0;
  /// Best ratio KL(qK || pK) / KL(q || p) found by randomized search.
  double eta_kl_empirical_lower = 0.0;
  /// Best TV ratio found by the same search (swap witnesses included).
  double eta_tv_empirical_lower = 0.0;

  // Reverse-kernel ingredients; zero for forward families.
  double sigma = 0.0;           // (1 - alpha_s) / (1 - alpha_t)
  double f_inf = 0.0;           // max_x f_t(x)
  double posterior_tv = 0.0;    // Dobrushin coefficient of p_{0|t}
  double bound_from_f = 1.0;    // sigma + (1 - sigma) f_inf
  // nu_reverse only.
  double sigma_remdm = 0.0;
  double factor_dpf = 1.0;
  double factor_backward = 1.0;
  double factor_forward = 1.0;
  double factor_product = 1.0;
};

struct SearchOptions {
  int candidates = 10000;
  std::uint64_t seed = 0x5d9c;
};

/// KL(p || q), TV and the best-ratio search helpers work on raw probability vectors.
struct KlValue {
  double value = 0.0;
  bool infinite = false;
};

KlValue kl_divergence(std::span<const double> p, std::span<const double> q);
double tv_distance(std::span<const double> p, std::span<const double> q);

/// sup over row pairs of TV(row_i, row_j).
double dobrushin(const Channel& channel);
double dobrushin(const Eigen::MatrixXd& rows);

/// Forward kernel q_{t|s}. Masking: eta_KL = alpha_t / alpha_s exactly.
/// Uniform: eta_KL <= S r^2 / ((S - 2) r + 2). eta_TV = r for both.
ContractionReport eta_forward(const ProcessSpec& spec, double s, double t, const SearchOptions& opts = {});

/// Largest KL and TV ratios through `kernel` over random perturbations q of
/// the reference p (Dirichlet jitter at several scales, point masses and
/// pairwise swaps). With an empty reference p is drawn at random as well.
std::pair<double, double> contraction_search(const Eigen::MatrixXd& kernel, std::span<const double> reference,
                                             const SearchOptions& opts, const std::vector<bool>& allowed = {});

/// DPF / DDIM step t -> s with reference p_t:
/// eta_KL <= sigma + (1 - sigma) eta_TV(p_{0|t}) <= sigma + (1 - sigma) ||f_t||_inf.
ContractionReport eta_dpf_reverse(const ProcessSpec& spec, const Dist& p0, double t, double s,
                                  const SearchOptions& opts = {});

/// nu-augmented step viewed as DPF then backward then forward corrector.
/// Reports the three factors and their product; eta_kl_upper is the
/// Dobrushin coefficient of the step kernel itself. Throws DomainError when the matching
/// sigma exceeds min(1, (1 - alpha_s)/alpha_t), or exceeds 1 - alpha_s where
/// the backward corrector stops being a channel.
ContractionReport eta_nu_reverse(const ProcessSpec& spec, const Dist& p0, double t, double s, double nu,
                                 const SearchOptions& opts = {});

/// Posterior channel p_{0|t} restricted to reachable states.
ContractionReport eta_posterior(const ProcessSpec& spec, const Dist& p0, double t, const SearchOptions& opts = {});

enum class BoundSampler { dpf, nu_schedule };

struct ErrorBoundStep {
  double t = 0.0;
  double t_next = 0.0;
  double a = 0.0;
  double b = 0.0;
  double epsilon = 0.0;
  double sigma = 0.0;
  double eta_tv = 0.0;
};

struct ErrorBoundTrace {
  BoundSampler sampler = BoundSampler::dpf;
  std::vector<ErrorBoundStep> steps;
  /// sum_k (prod_{j>k} A_j) B_k eps_k.
  double bound = 0.0;
  /// Same quantity by running e_{k+1} = A_k e_k + B_k eps_k from e_1 = 0.
  double recursion = 0.0;
};

/// A^DPF = sigma + (1 - sigma) eta_TV(p_{0|t_k}), B^DPF = 1 - sigma;
/// A^nu = alpha_{t_{k+1}} eta_TV(p_{0|t_k}), B^nu = alpha_{t_{k+1}} (maximal-contraction nu).
/// `epsilons` has one entry per step (grid.size() - 1).
ErrorBoundTrace error_bound(const ProcessSpec& spec, const Dist& p0, const TimeGrid& grid,
                            std::span<const double> epsilons, BoundSampler sampler);

/// The coefficient pair from raw ingredients.
std::pair<double, double> bound_coefficients(BoundSampler sampler, double alpha_t, double alpha_s, double eta_tv);

struct PosteriorError {
  double weighted = 0.0;  // sum_x p_t(x) TV(estimate(x), p_{0|t}(x))
  double max = 0.0;
};

/// Per-state posterior TV error of an estimate against the exact posterior.
PosteriorError posterior_error(const ProcessSpec& spec, const Dist& p0, double t,
                               const std::function<void(int x, std::span<double> out)>& estimate);

struct TcDecomposition {
  double kl = 0.0;
  double sum_marginal_kl = 0.0;
  double tc_q = 0.0;
  double cross_tc = 0.0;

  /// kl - (sum_marginal_kl + tc_q - cross_tc).
  double residual() const { return kl - (sum_marginal_kl + tc_q - cross_tc); }
};

/// Joints are over S^D with base-S little-endian indexing. Throws
/// DomainError when q has mass where p has none.
TcDecomposition tc_decomposition(std::span<const double> joint_p, std::span<const double> joint_q, int dims,
                                 int states);

std::vector<double> marginal_of(std::span<const double> joint, int dims, int states, int d);

/// Applies the same one-coordinate channel to every axis of a joint.
std::vector<double> apply_product_channel(std::span<const double> joint, int dims, const Eigen::MatrixXd& kernel);

struct ProductChannelCheck {
  double lhs = 0.0;  // KL(q_t || p_t)
  double rhs = 0.0;  // eta (KL_s - TC(q_s) + CrossTC(q_s)) + TC(q_t) - CrossTC(q_t)
  double eta = 1.0;
  double slack() const { return rhs - lhs; }
};

/// Pushes both joints through q_{t|s} on every axis and evaluates the
/// multi-dimensional bound with eta taken from eta_forward(spec, s, t).
ProductChannelCheck product_channel_bound(const ProcessSpec& spec, double s, double t, std::span<const double> joint_p,
                                          std::span<const double> joint_q, int dims);

std::vector<double> histogram(std::span<const int> samples, int states);

struct Divergences {
  KlValue kl;
  double tv = 0.0;
  double w1 = 0.0;
};

/// KL(p_hat || p), TV and W1 with states placed at 0, 1, ..., S-1.
Divergences divergences(std::span<const double> p_hat, std::span<const double> p);
Divergences divergences_from_samples(std::span<const int> samples, std::span<const double> p);

/// W1 between two weighted point sets on the line. Weights are normalised.
double w1_line(std::span<const double> xa, std::span<const double> wa, std::span<const double> xb,
               std::span<const double> wb);

struct PointCloud {
  int dims = 2;
  std::vector<double> coords;  // n * dims, point-major
  std::vector<double> weights; // empty means uniform

  std::size_t size() const { return dims > 0 ? coords.size() / static_cast<std::size_t>(dims) : 0; }
};

constexpr int kSlicedProjections = 128;
constexpr std::uint64_t kSlicedSeed = 0x51ced;

/// Direction j of the sliced estimators: a normalised Gaussian vector.
std::vector<double> sliced_direction(int dims, int j, std::uint64_t seed = kSlicedSeed);
std::vector<double> project(const PointCloud& cloud, std::span<const double> dir);

/// Mean over fixed random unit directions of the 1D W1 of the projections.
double sliced_w1(const PointCloud& a, const PointCloud& b, int projections = kSlicedProjections,
                 std::uint64_t seed = kSlicedSeed);

}  // namespace ctmc
