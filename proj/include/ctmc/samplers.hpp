#pragma once

// Reverse-step primitives for a single chain, plus the dense one-coordinate
// kernels they sample from.
//
// Joint states are spans of ints, one value per coordinate. Rate buffers
// are dims*S with buf[d*S + v] the rate of coordinate d jumping to v.

#include "ctmc/process.hpp"
#include "ctmc/rates.hpp"
#include "ctmc/rng.hpp"

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

namespace ctmc {

struct TimeGrid {
  std::vector<double> times;
  double rho = 1.0;

  std::size_t size() const { return times.size(); }
  double operator[](std::size_t i) const { return times[i]; }
};

/// times[i] = (t_max^{1/rho} + i/(N-1) (t_min^{1/rho} - t_max^{1/rho}))^rho.
/// t_min = 0 is accepted; endpoints are set exactly.
TimeGrid edm_grid(double t_min, double t_max, int n, double rho);

struct NfeCounter {
  std::int64_t count = 0;
  void add(std::int64_t n = 1) { count += n; }
};

struct StepFlags {
  std::int64_t clamp = 0;          // tau-leap overshoot absorbed by clamping
  std::int64_t invalid = 0;        // Euler off-diagonal mass above 1
  std::int64_t churn_clamped = 0;  // churn target time capped at 1

  StepFlags& operator+=(const StepFlags& o) {
    clamp += o.clamp;
    invalid += o.invalid;
    churn_clamped += o.churn_clamped;
    return *this;
  }
  bool operator==(const StepFlags&) const = default;
};

/// Fills rates (dims*S) for state x at time t.
using RateProvider = std::function<void(double t, std::span<const int> x, std::span<double> rates)>;
/// Fills out (S) with p_{0|t}(x0^d = . | x).
using PosteriorProvider = std::function<void(double t, std::span<const int> x, int d, std::span<double> out)>;

/// Draw from an unnormalised non-negative weight vector.
int sample_categorical(std::span<const double> weights, Stream& rng);

// --- rate-driven moves (no NFE bookkeeping) ---------------------------------

/// One Euler move over dt from the joint generator: at most one coordinate
/// changes. Off-diagonal mass above 1 is renormalised and flagged invalid.
void euler_move(int states, std::span<const double> rates, double dt, std::span<int> x, Stream& rng,
                StepFlags& flags);

/// One tau-leap move over dt. Ordered coordinates sum Poisson jump
/// displacements and clamp to [0, S-1]; unordered ones (masking) jump at most
/// once, with probability 1 - exp(-dt * total rate).
void tau_leap_move(int states, bool ordered, std::span<const double> rates, double dt, std::span<int> x,
                   Stream& rng, StepFlags& flags);

/// Second-leg rates of the trapezoidal scheme:
/// (a R(t_mid, x_mid) - (a - 1) R(t, x))_+ with a = 1 / (2 theta (1 - theta)),
/// which equals R when the rates do not change between the two legs.
/// On ordered coordinates the two rate rows are aligned by jump displacement,
/// on unordered ones by destination value.
void trapezoid_combine(int states, bool ordered, double theta, std::span<const int> x, std::span<const double> r0,
                       std::span<const int> x_mid, std::span<const double> r_mid, std::span<double> out);

// --- full steps --------------------------------------------------------------

void euler_step(const ProcessSpec& spec, const RateProvider& rates, double t, double t_next, std::span<int> x,
                Stream& rng, StepFlags& flags, NfeCounter& nfe);

void tau_leap_step(const ProcessSpec& spec, const RateProvider& rates, double t, double t_next, std::span<int> x,
                   Stream& rng, StepFlags& flags, NfeCounter& nfe);

void trapezoidal_step(const ProcessSpec& spec, const RateProvider& rates, double t, double t_next, std::span<int> x,
                      Stream& rng, StepFlags& flags, NfeCounter& nfe, double theta = 0.5);

void d3pm_step(const ProcessSpec& spec, const PosteriorProvider& posterior, double t, double s, std::span<int> x,
               Stream& rng, NfeCounter& nfe);

void ddim_step(const ProcessSpec& spec, const PosteriorProvider& posterior, double t, double s, std::span<int> x,
               Stream& rng, NfeCounter& nfe);

void remdm_step(const ProcessSpec& spec, const PosteriorProvider& posterior, double t, double s, double sigma,
                std::span<int> x, Stream& rng, NfeCounter& nfe);

/// Marginal-preserving corrector at time s, using the posterior at s.
void corrector_step(const ProcessSpec& spec, const PosteriorProvider& posterior, double s, double sigma,
                    std::span<int> x, Stream& rng, NfeCounter& nfe);

/// Forward noise from t to (1 + gamma) t, capped at 1 (flagged). Returns the new time.
double churn_step(const ProcessSpec& spec, double t, double gamma, std::span<int> x, Stream& rng, StepFlags& flags);

/// x_{t_max} ~ q_{t_max | t_min}(. | x_{t_min}), independently per coordinate.
void restart_step(const ProcessSpec& spec, double t_min, double t_max, std::span<int> x, Stream& rng);

/// Per coordinate: keep with probability r, otherwise draw from pi.
void forward_move(const ProcessSpec& spec, double r, std::span<int> x, Stream& rng);

// --- next-state laws for one coordinate ---------------------------------------

/// Bayes step: out(v) ∝ q_{t|s}(x | v) (alpha_s post(v) + (1 - alpha_s) pi(v)).
void d3pm_row(const ProcessSpec& spec, double t, double s, int x, std::span<const double> post, std::span<double> out);
/// sigma e_x + (1 - sigma) post with sigma = (1 - alpha_s) / (1 - alpha_t).
void ddim_row(const ProcessSpec& spec, double t, double s, int x, std::span<const double> post, std::span<double> out);

struct RemdmWeights {
  double keep;
  double posterior;
  double stationary;
};

/// Throws DomainError unless 0 <= sigma <= min(1, (1 - alpha_s)/alpha_t) and
/// all three weights are non-negative.
RemdmWeights remdm_weights(const ProcessSpec& spec, double t, double s, double sigma);
void remdm_row(const ProcessSpec& spec, double t, double s, double sigma, int x, std::span<const double> post,
               std::span<double> out);

/// (1 - sigma/(1 - alpha_s)) e_x + sigma alpha_s/(1 - alpha_s) x0 + sigma pi.
void corrector_row(const ProcessSpec& spec, double s, double sigma, int x, std::span<const double> x0,
                   std::span<double> out);
/// (1 - b) e_x + b x0, b = sigma alpha_s / ((1 - alpha_s)(1 - sigma)); needs sigma <= 1 - alpha_s.
void corrector_backward_row(const ProcessSpec& spec, double s, double sigma, int x, std::span<const double> x0,
                            std::span<double> out);
/// (1 - sigma) e_x + sigma pi.
void corrector_forward_row(const ProcessSpec& spec, double sigma, int x, std::span<double> out);

/// sigma^ReMDM matching a constant nu over t -> s: nu (alpha_s - alpha_t) / alpha_t.
double remdm_sigma_from_nu(const ProcessSpec& spec, double t, double s, double nu);

// --- dense kernels under the exact posterior of (spec, p0) ---------------------

Eigen::MatrixXd d3pm_kernel(const ProcessSpec& spec, const Dist& p0, double t, double s);
Eigen::MatrixXd ddim_kernel(const ProcessSpec& spec, const Dist& p0, double t, double s);
Eigen::MatrixXd remdm_kernel(const ProcessSpec& spec, const Dist& p0, double t, double s, double sigma);
/// Row y of the corrector with a fixed x0 prediction per input row.
Eigen::MatrixXd corrector_kernel(const ProcessSpec& spec, double s, double sigma, const Eigen::MatrixXd& x0_rows);
Eigen::MatrixXd corrector_backward_kernel(const ProcessSpec& spec, double s, double sigma,
                                          const Eigen::MatrixXd& x0_rows);
Eigen::MatrixXd corrector_forward_kernel(const ProcessSpec& spec, double sigma);

// --- exact laws of the rate-driven moves for one coordinate --------------------
// `rates` holds one rate row per source state (diagonal ignored).

Eigen::MatrixXd euler_kernel(const Eigen::MatrixXd& rates, double dt);
/// Ordered: compound Poisson displacement, clamped to [0, S-1]. Truncation
/// error per row is below 1e-15.
Eigen::MatrixXd tau_leap_kernel(const Eigen::MatrixXd& rates, double dt, bool ordered);
/// Both legs of the trapezoidal step, r0 at t and r_mid at the midpoint.
Eigen::MatrixXd trapezoidal_kernel(const Eigen::MatrixXd& r0, const Eigen::MatrixXd& r_mid, double dt1, double dt2,
                                   double theta, bool ordered);

}  // namespace ctmc
