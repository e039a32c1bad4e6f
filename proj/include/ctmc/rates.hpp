#pragma once

// Rate matrices for one coordinate, stored source -> destination:
// entries(x, y) is the rate of jumping from x to y.
//
// Samplers work with rows: given the current value x and the score row
// s[v] = p_t(v)/p_t(x), fill out[v] with the rate x -> v (out[x] = 0).

#include "ctmc/oracle.hpp"
#include "ctmc/process.hpp"

#include <span>
#include <vector>

namespace ctmc {

class RateMatrix {
 public:
  RateMatrix() = default;
  /// Off-diagonals are taken from `entries`; the diagonal is recomputed.
  explicit RateMatrix(Eigen::MatrixXd entries);

  Eigen::Index size() const { return m_.rows(); }
  double operator()(Eigen::Index x, Eigen::Index y) const { return m_(x, y); }
  const Eigen::MatrixXd& matrix() const { return m_; }

  /// Off-diagonals >= 0 and rows summing to 0 within tol.
  bool is_valid(double tol = 1e-12) const;

 private:
  Eigen::MatrixXd m_;
};

/// nu as a function of the step. `max_contraction` picks, per step t -> s,
/// nu = alpha_t (1 - alpha_s) / (alpha_s - alpha_t).
struct StochasticitySchedule {
  enum class Kind { constant, piecewise, max_contraction };
  struct Piece {
    double lo;
    double hi;
    double nu;

    bool operator==(const Piece&) const = default;
  };

  Kind kind = Kind::constant;
  double nu = 0.0;
  std::vector<Piece> pieces;

  static StochasticitySchedule constant(double nu) { return {Kind::constant, nu, {}}; }
  /// Intervals are [lo, hi); queries outside every piece get nu = 0.
  static StochasticitySchedule piecewise(std::vector<Piece> pieces) { return {Kind::piecewise, 0.0, std::move(pieces)}; }
  static StochasticitySchedule max_contraction() { return {Kind::max_contraction, 0.0, {}}; }

  void validate() const;
  double at(const NoiseSchedule& schedule, double t, double s_next) const;

  bool operator==(const StochasticitySchedule&) const = default;
};

enum class RateKind { reverse, dpf, nu };

struct RateChoice {
  RateKind kind = RateKind::dpf;
  StochasticitySchedule nu;

  static RateChoice reverse() { return {RateKind::reverse, {}}; }
  static RateChoice dpf() { return {RateKind::dpf, {}}; }
  static RateChoice nu_rate(StochasticitySchedule s) { return {RateKind::nu, std::move(s)}; }

  bool operator==(const RateChoice&) const = default;
};

RateMatrix forward_rate(const ProcessSpec& spec, double t);

/// rate(x -> y) = s(x, y) * R(y -> x).
void reverse_row(const ProcessSpec& spec, double t, int x, std::span<const double> scores, std::span<double> out);
/// rate(x -> y) = (s(x, y) R(y -> x) - R(x -> y))_+.
void dpf_row(const ProcessSpec& spec, double t, int x, std::span<const double> scores, std::span<double> out);
/// dpf + nu (reverse + forward).
void nu_row(const ProcessSpec& spec, double t, int x, std::span<const double> scores, double nu, std::span<double> out);

/// Row for any rate choice; `s_next` is only read by max-contraction schedules.
void rate_row(const ProcessSpec& spec, const RateChoice& choice, double t, double s_next, int x,
              std::span<const double> scores, std::span<double> out);

/// Rows for every coordinate of a joint state; scores and out are dims*S.
void rate_rows(const ProcessSpec& spec, const RateChoice& choice, double t, double s_next, std::span<const int> x,
               std::span<const double> scores, std::span<double> out);

/// The schedule-dependent constants of one step, so batched callers
/// evaluate beta and nu once per step instead of once per chain.
struct RateStep {
  RateKind kind = RateKind::dpf;
  double beta = 0.0;
  double nu = 0.0;
};

RateStep rate_step(const ProcessSpec& spec, const RateChoice& choice, double t, double s_next);
void rate_rows(const ProcessSpec& spec, const RateStep& step, std::span<const int> x, std::span<const double> scores,
               std::span<double> out);

// Oracle-driven single-coordinate rows (exact mode or c = 1).
std::vector<double> reverse_rate(const ProcessSpec& spec, const ScoreOracle& oracle, double t, int x);
std::vector<double> dpf_rate(const ProcessSpec& spec, const ScoreOracle& oracle, double t, int x);
std::vector<double> nu_rate(const ProcessSpec& spec, const ScoreOracle& oracle, const StochasticitySchedule& sched,
                            double t, double s_next, int x);

// Full matrices under the exact score of (spec, p0); meant for small S.
/// Rows with p_t(x) = 0 are left empty.
RateMatrix rate_matrix(const ProcessSpec& spec, const Dist& p0, const RateChoice& choice, double t, double s_next);
RateMatrix reverse_matrix(const ProcessSpec& spec, const Dist& p0, double t);
RateMatrix dpf_matrix(const ProcessSpec& spec, const Dist& p0, double t);
RateMatrix nu_matrix(const ProcessSpec& spec, const Dist& p0, double t, double nu);

}  // namespace ctmc
