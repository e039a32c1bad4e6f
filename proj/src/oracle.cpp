#include "ctmc/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace ctmc {

namespace {

class ClosedFormSlice final : public ScoreSlice {
 public:
  ClosedFormSlice(const ProcessSpec& spec, const Dist& p0, double t)
      : ScoreSlice(t, 1, spec.num_states), pt_(marginal(spec, p0, t)), post_(posterior(spec, p0, t)) {}

  void scores(std::span<const int> x, std::span<double> out) const override {
    const double px = pt_[x[0]];
    if (!(px > 0.0)) throw SingularScore("p_t(x) = 0 at state " + std::to_string(x[0]));
    for (int v = 0; v < states(); ++v) out[v] = pt_[v] / px;
    out[x[0]] = 1.0;
  }

  bool exact_posterior(std::span<const int> x, int d, std::span<double> out) const override {
    (void)d;
    const Eigen::VectorXd row = post_.row(x[0]);
    for (int v = 0; v < states(); ++v) out[v] = row[v];
    return true;
  }

 private:
  std::vector<double> pt_;
  PosteriorTable post_;
};

class EnumeratedSlice final : public ScoreSlice {
 public:
  EnumeratedSlice(double t, int dims, int states, std::vector<double> pt)
      : ScoreSlice(t, dims, states), pt_(std::move(pt)) {}

  void scores(std::span<const int> x, std::span<double> out) const override {
    const int S = states();
    const std::size_t idx = joint_index(x, S);
    const double px = pt_[idx];
    if (!(px > 0.0)) throw SingularScore("p_t(x) = 0 at joint state " + std::to_string(idx));
    const double inv = 1.0 / px;
    std::size_t stride = 1;
    for (int d = 0; d < dims(); ++d) {
      const std::size_t base = idx - static_cast<std::size_t>(x[d]) * stride;
      for (int v = 0; v < S; ++v) out[d * S + v] = pt_[base + static_cast<std::size_t>(v) * stride] * inv;
      out[d * S + x[d]] = 1.0;
      stride *= static_cast<std::size_t>(S);
    }
  }

 private:
  std::vector<double> pt_;
};

}  // namespace

// ---------------------------------------------------------------------------

ClosedFormModel::ClosedFormModel(ProcessSpec spec, Dist p0) : spec_(spec), p0_(std::move(p0)) {
  spec_.validate();
  if (static_cast<int>(p0_.size()) != spec_.num_states) throw DomainError("p0 size does not match process");
}

std::shared_ptr<const ScoreSlice> ClosedFormModel::at(double t) const {
  check_time(t);
  return std::make_shared<ClosedFormSlice>(spec_, p0_, t);
}

std::size_t joint_index(std::span<const int> x, int states) {
  std::size_t idx = 0;
  std::size_t stride = 1;
  for (int v : x) {
    idx += static_cast<std::size_t>(v) * stride;
    stride *= static_cast<std::size_t>(states);
  }
  return idx;
}

void joint_state(std::size_t index, int states, std::span<int> x) {
  for (auto& v : x) {
    v = static_cast<int>(index % static_cast<std::size_t>(states));
    index /= static_cast<std::size_t>(states);
  }
}

EnumeratedModel::EnumeratedModel(ProcessSpec spec, int dims, std::vector<double> p0, std::size_t cache_slots)
    : spec_(spec), dims_(dims), p0_(std::move(p0)), cache_slots_(std::max<std::size_t>(cache_slots, 1)) {
  spec_.validate();
  if (dims_ < 1) throw DomainError("need at least one dimension");
  std::size_t size = 1;
  for (int d = 0; d < dims_; ++d) {
    size *= static_cast<std::size_t>(spec_.num_states);
    if (size > kMaxJointStates) throw DomainError("joint space exceeds the enumeration cap");
  }
  if (p0_.size() != size) throw DomainError("p0 size does not match states^dims");
  if (!Dist::is_valid(p0_, 1e-9)) throw DomainError("p0 is not a distribution");
}

std::vector<double> EnumeratedModel::marginal(double t) const {
  check_time(t);
  const double a = spec_.schedule.alpha(t);
  const double b = spec_.schedule.one_minus_alpha(t);
  const int S = spec_.num_states;
  const auto pi = spec_.stationary_dist();
  std::vector<double> cur = p0_;
  std::size_t stride = 1;
  for (int d = 0; d < dims_; ++d) {
    const std::size_t block = stride * static_cast<std::size_t>(S);
    for (std::size_t outer = 0; outer < cur.size(); outer += block) {
      for (std::size_t inner = 0; inner < stride; ++inner) {
        const std::size_t base = outer + inner;
        double total = 0.0;
        for (int v = 0; v < S; ++v) total += cur[base + static_cast<std::size_t>(v) * stride];
        for (int v = 0; v < S; ++v) {
          double& c = cur[base + static_cast<std::size_t>(v) * stride];
          c = a * c + b * pi[v] * total;
        }
      }
    }
    stride = block;
  }
  return cur;
}

std::shared_ptr<const ScoreSlice> EnumeratedModel::at(double t) const {
  {
    std::lock_guard lock(mutex_);
    for (auto it = cache_.begin(); it != cache_.end(); ++it) {
      if ((*it)->time() == t) {
        auto hit = *it;
        cache_.erase(it);
        cache_.push_front(hit);
        return hit;
      }
    }
  }
  auto slice = std::make_shared<EnumeratedSlice>(t, dims_, spec_.num_states, marginal(t));
  std::lock_guard lock(mutex_);
  cache_.push_front(slice);
  while (cache_.size() > cache_slots_) cache_.pop_back();
  return slice;
}

// ---------------------------------------------------------------------------

void OracleMode::validate() const {
  if (kind == Kind::perturbed && !(t_lo >= 0.0 && t_lo < t_hi && t_hi <= 1.0))
    throw DomainError("perturbation window must satisfy 0 <= t_lo < t_hi <= 1");
  if (kind == Kind::temperature && !(tau > 0.0)) throw DomainError("temperature must be positive");
}

std::string to_string(OracleMode::Kind kind) {
  switch (kind) {
    case OracleMode::Kind::exact: return "exact";
    case OracleMode::Kind::perturbed: return "perturbed";
    case OracleMode::Kind::temperature: return "temperature";
  }
  return "unknown";
}

ScoreOracle::ScoreOracle(std::shared_ptr<const ScoreModel> model, OracleMode mode)
    : model_(std::move(model)), mode_(mode) {
  if (!model_) throw DomainError("oracle needs a model");
  mode_.validate();
}

bool ScoreOracle::perturbed_at(double t) const {
  return mode_.kind == OracleMode::Kind::perturbed && t > mode_.t_lo && t < mode_.t_hi;
}

bool ScoreOracle::exact_at(double t) const {
  if (mode_.kind == OracleMode::Kind::temperature) return mode_.tau == 1.0;
  return !perturbed_at(t);
}

void ScoreOracle::scores(const ScoreSlice& slice, std::span<const int> x, double c, std::span<double> out) const {
  slice.scores(x, out);
  modify(slice.time(), x, c, out);
}

void ScoreOracle::modify(double t, std::span<const int> x, double c, std::span<double> out) const {
  const int S = model_->states();
  const int D = static_cast<int>(x.size());
  if (perturbed_at(t)) {
    for (int d = 0; d < D; ++d)
      for (int v = 0; v < S; ++v)
        if (v != x[d]) out[d * S + v] *= c;
  } else if (mode_.kind == OracleMode::Kind::temperature && mode_.tau != 1.0) {
    const double e = 1.0 / mode_.tau;
    for (int d = 0; d < D; ++d)
      for (int v = 0; v < S; ++v)
        if (v != x[d]) out[d * S + v] = std::pow(out[d * S + v], e);
  }
}

void ScoreOracle::conditional(const ScoreSlice& slice, std::span<const int> x, int d, double c,
                              std::span<double> out) const {
  const int S = slice.states();
  std::vector<double> all(static_cast<std::size_t>(slice.dims() * S));
  scores(slice, x, c, all);
  double total = 0.0;
  for (int v = 0; v < S; ++v) total += all[d * S + v];
  for (int v = 0; v < S; ++v) out[v] = all[d * S + v] / total;
}

void ScoreOracle::posterior(const ProcessSpec& sampler, const ScoreSlice& slice, std::span<const int> x, int d,
                            double c, std::span<double> out) const {
  if (exact_at(slice.time()) && sampler == model_->process() && slice.exact_posterior(x, d, out)) return;
  std::vector<double> cond(static_cast<std::size_t>(slice.states()));
  conditional(slice, x, d, c, cond);
  posterior_from_conditional(sampler, slice.time(), x[d], cond, out);
}

void posterior_from_conditional(const ProcessSpec& spec, double t, int x, std::span<const double> conditional,
                                std::span<double> out) {
  const int S = spec.num_states;
  const double a = spec.schedule.alpha(t);
  const double b = spec.schedule.one_minus_alpha(t);
  double total = 0.0;
  for (int v = 0; v < S; ++v) {
    const double clean = std::max(conditional[v] - b * spec.pi(v), 0.0);
    const double like = (v == x ? a : 0.0) + b * spec.pi(x);
    out[v] = clean * like;
    total += out[v];
  }
  if (total > 0.0) {
    for (int v = 0; v < S; ++v) out[v] /= total;
    return;
  }
  // Nothing survives the inversion: fall back to the conditional itself.
  std::copy(conditional.begin(), conditional.end(), out.begin());
}

}  // namespace ctmc
