#include "ctmc/process.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace ctmc {

std::string to_string(ScheduleKind kind) {
  switch (kind) {
    case ScheduleKind::linear: return "linear";
    case ScheduleKind::geometric: return "geometric";
    case ScheduleKind::loglinear: return "loglinear";
  }
  return "unknown";
}

ScheduleKind schedule_kind_from_string(const std::string& name) {
  if (name == "linear") return ScheduleKind::linear;
  if (name == "geometric") return ScheduleKind::geometric;
  if (name == "loglinear") return ScheduleKind::loglinear;
  throw DomainError("unknown schedule kind '" + name + "'");
}

void check_time(double t) {
  if (!(t >= 0.0 && t <= 1.0)) throw DomainError("time " + std::to_string(t) + " outside [0, 1]");
}

// ---------------------------------------------------------------------------
// NoiseSchedule

NoiseSchedule NoiseSchedule::linear(double a) { return {ScheduleKind::linear, a, 100.0, 1e-3}; }

NoiseSchedule NoiseSchedule::geometric(double a, double b) {
  return {ScheduleKind::geometric, a, b, 1e-3};
}

NoiseSchedule NoiseSchedule::loglinear(double epsilon, double a) {
  return {ScheduleKind::loglinear, a, 100.0, epsilon};
}

void NoiseSchedule::validate() const {
  if (!(a > 0.0)) throw DomainError("schedule parameter a must be positive");
  if (kind == ScheduleKind::geometric && !(b > 1.0))
    throw DomainError("geometric schedule needs b > 1");
  if (kind == ScheduleKind::loglinear && !(epsilon > 0.0 && epsilon < 1.0))
    throw DomainError("loglinear schedule needs epsilon in (0, 1)");
}

double NoiseSchedule::beta(double t) const {
  check_time(t);
  switch (kind) {
    case ScheduleKind::linear: return a;
    case ScheduleKind::geometric: return a * std::pow(b, t) * std::log(b);
    case ScheduleKind::loglinear: return a * (1.0 - epsilon) / (1.0 - (1.0 - epsilon) * t);
  }
  return 0.0;
}

double NoiseSchedule::cumulative(double t) const {
  check_time(t);
  switch (kind) {
    case ScheduleKind::linear: return a * t;
    case ScheduleKind::geometric: return a * std::expm1(t * std::log(b));
    case ScheduleKind::loglinear: return -a * std::log1p(-(1.0 - epsilon) * t);
  }
  return 0.0;
}

double NoiseSchedule::alpha(double t) const { return std::exp(-cumulative(t)); }

double NoiseSchedule::one_minus_alpha(double t) const { return -std::expm1(-cumulative(t)); }

double NoiseSchedule::alpha_ratio(double s, double t) const {
  if (s > t) throw DomainError("alpha_ratio needs s <= t");
  return std::exp(cumulative(s) - cumulative(t));
}

double alpha(const NoiseSchedule& schedule, double t) { return schedule.alpha(t); }

// ---------------------------------------------------------------------------
// ProcessSpec

ProcessSpec ProcessSpec::uniform(int num_states, NoiseSchedule schedule) {
  ProcessSpec spec{num_states, StationaryKind::uniform, -1, schedule};
  spec.validate();
  return spec;
}

ProcessSpec ProcessSpec::masking(int num_states, NoiseSchedule schedule, int mask_index) {
  ProcessSpec spec{num_states, StationaryKind::masking,
                   mask_index < 0 ? num_states - 1 : mask_index, schedule};
  spec.validate();
  return spec;
}

void ProcessSpec::validate() const {
  if (num_states < 2) throw DomainError("a process needs at least 2 states");
  if (is_masking() && (mask_index < 0 || mask_index >= num_states))
    throw DomainError("mask index out of range");
  schedule.validate();
}

double ProcessSpec::pi(int state) const {
  if (is_masking()) return state == mask_index ? 1.0 : 0.0;
  return 1.0 / num_states;
}

std::vector<double> ProcessSpec::stationary_dist() const {
  std::vector<double> out(num_states);
  for (int i = 0; i < num_states; ++i) out[i] = pi(i);
  return out;
}

// ---------------------------------------------------------------------------
// Dist / Channel

bool Dist::is_valid(std::span<const double> probs, double tol) {
  if (probs.empty()) return false;
  double total = 0.0;
  for (double p : probs) {
    if (!(p >= 0.0) || !std::isfinite(p)) return false;
    total += p;
  }
  return std::abs(total - 1.0) <= tol;
}

Dist::Dist(std::vector<double> probs) : probs_(std::move(probs)) {
  if (!is_valid(probs_)) throw DomainError("not a probability vector");
}

Channel::Channel(Eigen::MatrixXd rows) : rows_(std::move(rows)) {
  for (Eigen::Index i = 0; i < rows_.rows(); ++i) {
    const Eigen::VectorXd r = rows_.row(i).transpose();
    if (!Dist::is_valid(std::span<const double>(r.data(), static_cast<std::size_t>(r.size())), 1e-10))
      throw DomainError("channel row " + std::to_string(i) + " is not a distribution");
  }
}

std::vector<double> Channel::push(std::span<const double> p) const {
  if (static_cast<Eigen::Index>(p.size()) != rows_.rows())
    throw DomainError("dimension mismatch in Channel::push");
  Eigen::Map<const Eigen::VectorXd> in(p.data(), rows_.rows());
  Eigen::VectorXd out = rows_.transpose() * in;
  return {out.data(), out.data() + out.size()};
}

Channel Channel::then(const Channel& next) const {
  if (outputs() != next.inputs()) throw DomainError("dimension mismatch in Channel::then");
  Channel c;
  c.rows_ = rows_ * next.rows_;
  return c;
}

// ---------------------------------------------------------------------------
// Closed forms

Eigen::MatrixXd forward_kernel_matrix(const ProcessSpec& spec, double ratio) {
  const int S = spec.num_states;
  Eigen::MatrixXd k(S, S);
  for (int x = 0; x < S; ++x)
    for (int y = 0; y < S; ++y) k(x, y) = (1.0 - ratio) * spec.pi(y) + (x == y ? ratio : 0.0);
  return k;
}

Channel forward_kernel(const ProcessSpec& spec, double s, double t) {
  check_time(s);
  check_time(t);
  if (s > t) throw DomainError("forward_kernel needs s <= t");
  return Channel(forward_kernel_matrix(spec, spec.schedule.alpha_ratio(s, t)));
}

namespace {

void check_dims(const ProcessSpec& spec, const Dist& p0) {
  if (static_cast<int>(p0.size()) != spec.num_states)
    throw DomainError("distribution has " + std::to_string(p0.size()) + " entries, process has " +
                      std::to_string(spec.num_states) + " states");
}

double marginal_at(const ProcessSpec& spec, const Dist& p0, double a, double one_minus_a, int x) {
  return a * p0[x] + one_minus_a * spec.pi(x);
}

}  // namespace

std::vector<double> marginal(const ProcessSpec& spec, const Dist& p0, double t) {
  check_dims(spec, p0);
  const double a = spec.schedule.alpha(t);
  const double b = spec.schedule.one_minus_alpha(t);
  std::vector<double> out(p0.size());
  for (int x = 0; x < spec.num_states; ++x) out[x] = marginal_at(spec, p0, a, b, x);
  return out;
}

std::vector<double> posterior_keep_weights(const ProcessSpec& spec, const Dist& p0, double t) {
  check_dims(spec, p0);
  const double a = spec.schedule.alpha(t);
  const double b = spec.schedule.one_minus_alpha(t);
  std::vector<double> f(p0.size(), 0.0);
  for (int x = 0; x < spec.num_states; ++x) {
    const double pt = marginal_at(spec, p0, a, b, x);
    if (pt > 0.0) f[x] = a * p0[x] / pt;
  }
  return f;
}

std::vector<double> posterior_row(const ProcessSpec& spec, const Dist& p0, double t, int x) {
  check_dims(spec, p0);
  if (x < 0 || x >= spec.num_states) throw DomainError("state out of range");
  const double a = spec.schedule.alpha(t);
  const double b = spec.schedule.one_minus_alpha(t);
  const double pt = marginal_at(spec, p0, a, b, x);
  if (!(pt > 0.0))
    throw UnreachableState("state " + std::to_string(x) + " has zero mass at t=" + std::to_string(t));
  const double f = a * p0[x] / pt;
  std::vector<double> row(p0.size());
  for (int y = 0; y < spec.num_states; ++y) row[y] = (1.0 - f) * p0[y];
  row[x] += f;
  return row;
}

PosteriorTable::PosteriorTable(Eigen::MatrixXd rows, std::vector<bool> reachable)
    : rows_(std::move(rows)), reachable_(std::move(reachable)) {}

bool PosteriorTable::all_reachable() const {
  return std::all_of(reachable_.begin(), reachable_.end(), [](bool r) { return r; });
}

Eigen::VectorXd PosteriorTable::row(int x) const {
  if (x < 0 || x >= static_cast<int>(reachable_.size())) throw DomainError("state out of range");
  if (!reachable_[x]) throw UnreachableState("posterior row requested at unreachable state " + std::to_string(x));
  return rows_.row(x).transpose();
}

Channel PosteriorTable::reachable_channel() const {
  std::vector<int> keep;
  for (std::size_t i = 0; i < reachable_.size(); ++i)
    if (reachable_[i]) keep.push_back(static_cast<int>(i));
  Eigen::MatrixXd m(static_cast<Eigen::Index>(keep.size()), rows_.cols());
  for (std::size_t k = 0; k < keep.size(); ++k) m.row(static_cast<Eigen::Index>(k)) = rows_.row(keep[k]);
  return Channel(std::move(m));
}

Channel PosteriorTable::channel() const {
  if (!all_reachable()) throw UnreachableState("posterior channel has unreachable rows");
  return Channel(rows_);
}

PosteriorTable posterior(const ProcessSpec& spec, const Dist& p0, double t) {
  check_dims(spec, p0);
  const int S = spec.num_states;
  Eigen::MatrixXd rows = Eigen::MatrixXd::Zero(S, S);
  std::vector<bool> reachable(S, false);
  for (int x = 0; x < S; ++x) {
    try {
      const auto r = posterior_row(spec, p0, t, x);
      for (int y = 0; y < S; ++y) rows(x, y) = r[y];
      reachable[x] = true;
    } catch (const UnreachableState&) {
    }
  }
  return PosteriorTable(std::move(rows), std::move(reachable));
}

double score(const ProcessSpec& spec, const Dist& p0, double t, int x, int y) {
  check_dims(spec, p0);
  if (x < 0 || x >= spec.num_states || y < 0 || y >= spec.num_states) throw DomainError("state out of range");
  if (x == y) return 1.0;
  const double a = spec.schedule.alpha(t);
  const double b = spec.schedule.one_minus_alpha(t);
  const double px = marginal_at(spec, p0, a, b, x);
  if (!(px > 0.0)) throw SingularScore("p_t(x) = 0 at state " + std::to_string(x));
  return marginal_at(spec, p0, a, b, y) / px;
}

double score_via_posterior(const ProcessSpec& spec, const Dist& p0, double t, int x, int y) {
  const auto post = posterior_row(spec, p0, t, x);
  const double a = spec.schedule.alpha(t);
  const double b = spec.schedule.one_minus_alpha(t);
  double total = 0.0;
  for (int x0 = 0; x0 < spec.num_states; ++x0) {
    if (post[x0] == 0.0) continue;
    const double qy = b * spec.pi(y) + (y == x0 ? a : 0.0);
    const double qx = b * spec.pi(x) + (x == x0 ? a : 0.0);
    total += qy / qx * post[x0];
  }
  return total;
}

}  // namespace ctmc
