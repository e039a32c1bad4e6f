#pragma once

// Corruption processes over a single coordinate: noise schedules, forward
// kernels, marginals, exact posteriors and discrete scores.
//
// States are 0-based throughout. All rows follow the (source -> destination)
// convention: row i of a Channel is the conditional law given input state i.

#include <Eigen/Dense>

#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace ctmc {

struct DomainError : std::domain_error {
  using std::domain_error::domain_error;
};

/// Raised when a posterior row is requested at a state with zero marginal mass.
struct UnreachableState : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Raised when a score p_t(y)/p_t(x) is requested with p_t(x) = 0.
struct SingularScore : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class ScheduleKind { linear, geometric, loglinear };

std::string to_string(ScheduleKind kind);
ScheduleKind schedule_kind_from_string(const std::string& name);

/// beta(t), its integral and alpha(t) = exp(-integral).
///
/// linear:    beta = a,                         integral = a t
/// geometric: beta = a b^t ln b,                integral = a (b^t - 1)
/// loglinear: beta = a (1-eps) / (1-(1-eps)t),  integral = -a ln(1 - (1-eps) t)
///
/// The loglinear rate carries the factor `a` so that it is the derivative of
/// the integral used for alpha.
struct NoiseSchedule {
  ScheduleKind kind = ScheduleKind::linear;
  double a = 1.0;
  double b = 100.0;
  double epsilon = 1e-3;

  static NoiseSchedule linear(double a = 1.0);
  static NoiseSchedule geometric(double a = 3.0, double b = 100.0);
  static NoiseSchedule loglinear(double epsilon = 1e-3, double a = 10.0);

  void validate() const;

  double beta(double t) const;
  double cumulative(double t) const;
  double log_alpha(double t) const { return -cumulative(t); }
  double alpha(double t) const;
  /// 1 - alpha(t), accurate for small t.
  double one_minus_alpha(double t) const;
  /// alpha(t) / alpha(s) for s <= t, computed in log space.
  double alpha_ratio(double s, double t) const;

  bool operator==(const NoiseSchedule&) const = default;
};

enum class StationaryKind { uniform, masking };

struct ProcessSpec {
  int num_states = 2;
  StationaryKind stationary = StationaryKind::uniform;
  int mask_index = -1;
  NoiseSchedule schedule;

  static ProcessSpec uniform(int num_states, NoiseSchedule schedule);
  /// Mask defaults to the last state.
  static ProcessSpec masking(int num_states, NoiseSchedule schedule, int mask_index = -1);

  void validate() const;
  bool is_masking() const { return stationary == StationaryKind::masking; }
  double pi(int state) const;
  std::vector<double> stationary_dist() const;

  bool operator==(const ProcessSpec&) const = default;
};

/// Finite probability vector; entries non-negative, summing to 1 within 1e-12.
class Dist {
 public:
  static constexpr double kTolerance = 1e-12;

  Dist() = default;
  explicit Dist(std::vector<double> probs);

  std::size_t size() const { return probs_.size(); }
  double operator[](std::size_t i) const { return probs_[i]; }
  std::span<const double> probs() const { return probs_; }
  const std::vector<double>& vec() const { return probs_; }

  static bool is_valid(std::span<const double> probs, double tol = kTolerance);

 private:
  std::vector<double> probs_;
};

/// Row-stochastic matrix; row i is the law of the output given input i.
class Channel {
 public:
  Channel() = default;
  explicit Channel(Eigen::MatrixXd rows);

  Eigen::Index inputs() const { return rows_.rows(); }
  Eigen::Index outputs() const { return rows_.cols(); }
  const Eigen::MatrixXd& matrix() const { return rows_; }
  Eigen::VectorXd row(Eigen::Index i) const { return rows_.row(i).transpose(); }

  /// Law of the output when the input has law `p`.
  std::vector<double> push(std::span<const double> p) const;
  /// this then next.
  Channel then(const Channel& next) const;

 private:
  Eigen::MatrixXd rows_;
};

void check_time(double t);

double alpha(const NoiseSchedule& schedule, double t);

/// q_{t|s}(y|x) = r [y = x] + (1 - r) pi(y), r = alpha(t)/alpha(s).
Channel forward_kernel(const ProcessSpec& spec, double s, double t);

/// Probability of staying put plus stationary mass, as a raw matrix.
Eigen::MatrixXd forward_kernel_matrix(const ProcessSpec& spec, double ratio);

std::vector<double> marginal(const ProcessSpec& spec, const Dist& p0, double t);

/// f_t(i) = alpha p0(i) / (alpha p0(i) + (1 - alpha) pi(i)); 0 where the
/// denominator vanishes.
std::vector<double> posterior_keep_weights(const ProcessSpec& spec, const Dist& p0, double t);

/// Exact Bayes posterior p_{0|t}(. | x).
std::vector<double> posterior_row(const ProcessSpec& spec, const Dist& p0, double t, int x);

/// All posterior rows. Rows at unreachable states are left zero and flagged;
/// `row()` on them throws UnreachableState.
class PosteriorTable {
 public:
  PosteriorTable(Eigen::MatrixXd rows, std::vector<bool> reachable);

  const std::vector<bool>& reachable() const { return reachable_; }
  bool all_reachable() const;
  Eigen::VectorXd row(int x) const;
  /// Channel restricted to reachable inputs.
  Channel reachable_channel() const;
  /// Full channel; throws if any row is unreachable.
  Channel channel() const;

 private:
  Eigen::MatrixXd rows_;
  std::vector<bool> reachable_;
};

PosteriorTable posterior(const ProcessSpec& spec, const Dist& p0, double t);

/// p_t(y) / p_t(x).
double score(const ProcessSpec& spec, const Dist& p0, double t, int x, int y);

/// The same ratio recovered through the posterior:
/// sum_{x0} q_{t|0}(y|x0) / q_{t|0}(x|x0) * q_{0|t}(x0|x).
double score_via_posterior(const ProcessSpec& spec, const Dist& p0, double t, int x, int y);

}  // namespace ctmc
