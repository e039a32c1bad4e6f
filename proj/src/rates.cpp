#include "ctmc/rates.hpp"

#include <algorithm>
#include <cmath>

namespace ctmc {

RateMatrix::RateMatrix(Eigen::MatrixXd entries) : m_(std::move(entries)) {
  if (m_.rows() != m_.cols()) throw DomainError("rate matrix must be square");
  for (Eigen::Index x = 0; x < m_.rows(); ++x) {
    double total = 0.0;
    for (Eigen::Index y = 0; y < m_.cols(); ++y)
      if (y != x) total += m_(x, y);
    m_(x, x) = -total;
  }
}

bool RateMatrix::is_valid(double tol) const {
  for (Eigen::Index x = 0; x < m_.rows(); ++x) {
    double total = 0.0;
    for (Eigen::Index y = 0; y < m_.cols(); ++y) {
      if (y != x && m_(x, y) < 0.0) return false;
      total += m_(x, y);
    }
    if (std::abs(total) > tol * std::max(1.0, std::abs(m_(x, x)))) return false;
  }
  return true;
}

void StochasticitySchedule::validate() const {
  switch (kind) {
    case Kind::constant:
      if (!(nu >= 0.0) || !std::isfinite(nu)) throw DomainError("nu must be finite and non-negative");
      break;
    case Kind::piecewise:
      for (std::size_t i = 0; i < pieces.size(); ++i) {
        const auto& p = pieces[i];
        if (!(p.lo < p.hi)) throw DomainError("piecewise nu interval is empty");
        if (!(p.nu >= 0.0) || !std::isfinite(p.nu)) throw DomainError("nu must be finite and non-negative");
        for (std::size_t j = 0; j < i; ++j)
          if (p.lo < pieces[j].hi && pieces[j].lo < p.hi) throw DomainError("piecewise nu intervals overlap");
      }
      break;
    case Kind::max_contraction: break;
  }
}

double StochasticitySchedule::at(const NoiseSchedule& schedule, double t, double s_next) const {
  switch (kind) {
    case Kind::constant: return nu;
    case Kind::piecewise:
      for (const auto& p : pieces)
        if (t >= p.lo && t < p.hi) return p.nu;
      return 0.0;
    case Kind::max_contraction: {
      const double at = schedule.alpha(t);
      const double as = schedule.alpha(s_next);
      if (!(as > at)) throw DomainError("max-contraction nu needs alpha_s > alpha_t");
      return at * (1.0 - as) / (as - at);
    }
  }
  return 0.0;
}

RateMatrix forward_rate(const ProcessSpec& spec, double t) {
  const double beta = spec.schedule.beta(t);
  const int S = spec.num_states;
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(S, S);
  for (int x = 0; x < S; ++x)
    for (int y = 0; y < S; ++y)
      if (y != x) m(x, y) = beta * spec.pi(y);
  return RateMatrix(std::move(m));
}

namespace {

void reverse_row_b(const ProcessSpec& spec, double beta, int x, std::span<const double> scores, std::span<double> out) {
  const double px = spec.pi(x);
  for (int y = 0; y < spec.num_states; ++y) out[y] = scores[y] * beta * px;
  out[x] = 0.0;
}

void dpf_row_b(const ProcessSpec& spec, double beta, int x, std::span<const double> scores, std::span<double> out) {
  const double px = spec.pi(x);
  for (int y = 0; y < spec.num_states; ++y) out[y] = std::max(scores[y] * beta * px - beta * spec.pi(y), 0.0);
  out[x] = 0.0;
}

void nu_row_b(const ProcessSpec& spec, double beta, int x, std::span<const double> scores, double nu,
              std::span<double> out) {
  const double px = spec.pi(x);
  for (int y = 0; y < spec.num_states; ++y) {
    const double rev = scores[y] * beta * px;
    const double fwd = beta * spec.pi(y);
    out[y] = std::max(rev - fwd, 0.0) + nu * (rev + fwd);
  }
  out[x] = 0.0;
}

}  // namespace

void reverse_row(const ProcessSpec& spec, double t, int x, std::span<const double> scores, std::span<double> out) {
  reverse_row_b(spec, spec.schedule.beta(t), x, scores, out);
}

void dpf_row(const ProcessSpec& spec, double t, int x, std::span<const double> scores, std::span<double> out) {
  dpf_row_b(spec, spec.schedule.beta(t), x, scores, out);
}

void nu_row(const ProcessSpec& spec, double t, int x, std::span<const double> scores, double nu,
            std::span<double> out) {
  if (!(nu >= 0.0)) throw DomainError("nu must be non-negative");
  nu_row_b(spec, spec.schedule.beta(t), x, scores, nu, out);
}

void rate_row(const ProcessSpec& spec, const RateChoice& choice, double t, double s_next, int x,
              std::span<const double> scores, std::span<double> out) {
  const int xs[1] = {x};
  rate_rows(spec, rate_step(spec, choice, t, s_next), xs, scores, out);
}

RateStep rate_step(const ProcessSpec& spec, const RateChoice& choice, double t, double s_next) {
  RateStep step;
  step.kind = choice.kind;
  step.beta = spec.schedule.beta(t);
  if (choice.kind == RateKind::nu) {
    step.nu = choice.nu.at(spec.schedule, t, s_next);
    if (!(step.nu >= 0.0)) throw DomainError("nu must be non-negative");
  }
  return step;
}

void rate_rows(const ProcessSpec& spec, const RateStep& step, std::span<const int> x, std::span<const double> scores,
               std::span<double> out) {
  const std::size_t S = static_cast<std::size_t>(spec.num_states);
  for (std::size_t d = 0; d < x.size(); ++d) {
    auto s = scores.subspan(d * S, S);
    auto o = out.subspan(d * S, S);
    switch (step.kind) {
      case RateKind::reverse: reverse_row_b(spec, step.beta, x[d], s, o); break;
      case RateKind::dpf: dpf_row_b(spec, step.beta, x[d], s, o); break;
      case RateKind::nu: nu_row_b(spec, step.beta, x[d], s, step.nu, o); break;
    }
  }
}

void rate_rows(const ProcessSpec& spec, const RateChoice& choice, double t, double s_next, std::span<const int> x,
               std::span<const double> scores, std::span<double> out) {
  rate_rows(spec, rate_step(spec, choice, t, s_next), x, scores, out);
}

namespace {

std::vector<double> oracle_scores(const ScoreOracle& oracle, double t, int x) {
  if (oracle.dims() != 1) throw DomainError("single-coordinate rate query on a multi-dimensional oracle");
  auto slice = oracle.at(t);
  std::vector<double> s(static_cast<std::size_t>(oracle.states()));
  const int xs[1] = {x};
  oracle.scores(*slice, xs, 1.0, s);
  return s;
}

}  // namespace

std::vector<double> reverse_rate(const ProcessSpec& spec, const ScoreOracle& oracle, double t, int x) {
  auto s = oracle_scores(oracle, t, x);
  std::vector<double> out(s.size());
  reverse_row(spec, t, x, s, out);
  return out;
}

std::vector<double> dpf_rate(const ProcessSpec& spec, const ScoreOracle& oracle, double t, int x) {
  auto s = oracle_scores(oracle, t, x);
  std::vector<double> out(s.size());
  dpf_row(spec, t, x, s, out);
  return out;
}

std::vector<double> nu_rate(const ProcessSpec& spec, const ScoreOracle& oracle, const StochasticitySchedule& sched,
                            double t, double s_next, int x) {
  sched.validate();
  auto s = oracle_scores(oracle, t, x);
  std::vector<double> out(s.size());
  nu_row(spec, t, x, s, sched.at(spec.schedule, t, s_next), out);
  return out;
}

RateMatrix rate_matrix(const ProcessSpec& spec, const Dist& p0, const RateChoice& choice, double t, double s_next) {
  const int S = spec.num_states;
  const auto pt = marginal(spec, p0, t);
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(S, S);
  std::vector<double> s(S), row(S);
  for (int x = 0; x < S; ++x) {
    if (!(pt[x] > 0.0)) continue;  // unreachable rows carry no flow
    for (int y = 0; y < S; ++y) s[y] = pt[y] / pt[x];
    rate_row(spec, choice, t, s_next, x, s, row);
    for (int y = 0; y < S; ++y)
      if (y != x) m(x, y) = row[y];
  }
  return RateMatrix(std::move(m));
}


RateMatrix reverse_matrix(const ProcessSpec& spec, const Dist& p0, double t) {
  return rate_matrix(spec, p0, RateChoice::reverse(), t, t);
}

RateMatrix dpf_matrix(const ProcessSpec& spec, const Dist& p0, double t) {
  return rate_matrix(spec, p0, RateChoice::dpf(), t, t);
}

RateMatrix nu_matrix(const ProcessSpec& spec, const Dist& p0, double t, double nu) {
  return rate_matrix(spec, p0, RateChoice::nu_rate(StochasticitySchedule::constant(nu)), t, t);
}

}  // namespace ctmc
