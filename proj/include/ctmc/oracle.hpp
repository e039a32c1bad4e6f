#pragma once

// Score oracles. A ScoreModel hands out immutable time slices; a slice answers
// score queries s[d][v] = p_t(x with x^d = v) / p_t(x) for every coordinate d
// and value v of a joint state x. ScoreOracle layers the query modes (exact,
// perturbed, temperature) on top of a model.

#include "ctmc/process.hpp"

#include <list>
#include <memory>
#include <mutex>
#include <span>
#include <vector>

namespace ctmc {

class ScoreSlice {
 public:
  ScoreSlice(double t, int dims, int states) : t_(t), dims_(dims), states_(states) {}
  virtual ~ScoreSlice() = default;

  double time() const { return t_; }
  int dims() const { return dims_; }
  int states() const { return states_; }

  /// out has dims*states entries; out[d*states + x[d]] is 1.
  virtual void scores(std::span<const int> x, std::span<double> out) const = 0;

  /// Exact p_{0|t}(x0^d = . | x) when the model knows it; false otherwise.
  virtual bool exact_posterior(std::span<const int> x, int d, std::span<double> out) const {
    (void)x, (void)d, (void)out;
    return false;
  }

 private:
  double t_;
  int dims_;
  int states_;
};

class ScoreModel {
 public:
  virtual ~ScoreModel() = default;
  virtual int dims() const = 0;
  virtual int states() const = 0;
  /// The process the model was built for (its scores are exact under it).
  virtual const ProcessSpec& process() const = 0;
  virtual std::shared_ptr<const ScoreSlice> at(double t) const = 0;
};

/// One coordinate, closed-form marginals and posteriors.
class ClosedFormModel final : public ScoreModel {
 public:
  ClosedFormModel(ProcessSpec spec, Dist p0);

  int dims() const override { return 1; }
  int states() const override { return spec_.num_states; }
  const ProcessSpec& process() const override { return spec_; }
  const Dist& p0() const { return p0_; }
  std::shared_ptr<const ScoreSlice> at(double t) const override;

 private:
  ProcessSpec spec_;
  Dist p0_;
};

/// Joint distribution over states^dims enumerated exhaustively. Index of a
/// joint state is sum_d x[d] * states^d. The noisy table at time t is obtained
/// by applying the per-coordinate forward kernel to every axis.
class EnumeratedModel final : public ScoreModel {
 public:
  static constexpr std::size_t kMaxJointStates = std::size_t{1} << 20;

  EnumeratedModel(ProcessSpec spec, int dims, std::vector<double> p0, std::size_t cache_slots = 64);

  int dims() const override { return dims_; }
  int states() const override { return spec_.num_states; }
  const ProcessSpec& process() const override { return spec_; }
  const std::vector<double>& p0() const { return p0_; }
  std::size_t joint_size() const { return p0_.size(); }
  std::shared_ptr<const ScoreSlice> at(double t) const override;

  /// p_t over the joint space.
  std::vector<double> marginal(double t) const;

 private:
  ProcessSpec spec_;
  int dims_;
  std::vector<double> p0_;
  std::size_t cache_slots_;
  mutable std::mutex mutex_;
  mutable std::list<std::shared_ptr<const ScoreSlice>> cache_;
};

std::size_t joint_index(std::span<const int> x, int states);
void joint_state(std::size_t index, int states, std::span<int> x);

struct OracleMode {
  enum class Kind { exact, perturbed, temperature };
  Kind kind = Kind::exact;
  double t_lo = 0.0;
  double t_hi = 0.1;
  double tau = 1.0;

  static OracleMode exact() { return {}; }
  static OracleMode perturbed(double t_lo = 0.0, double t_hi = 0.1) { return {Kind::perturbed, t_lo, t_hi, 1.0}; }
  static OracleMode temperature(double tau) { return {Kind::temperature, 0.0, 0.0, tau}; }

  void validate() const;
  bool operator==(const OracleMode&) const = default;
};

std::string to_string(OracleMode::Kind kind);

/// A model plus a query mode. Perturbed queries take the multiplier `c`
/// from the caller, who draws it once per evaluation from its own stream.
class ScoreOracle {
 public:
  ScoreOracle(std::shared_ptr<const ScoreModel> model, OracleMode mode = OracleMode::exact());

  const ScoreModel& model() const { return *model_; }
  std::shared_ptr<const ScoreModel> model_ptr() const { return model_; }
  const OracleMode& mode() const { return mode_; }
  int dims() const { return model_->dims(); }
  int states() const { return model_->states(); }

  /// Whether a query at t depends on the per-evaluation multiplier.
  bool perturbed_at(double t) const;
  /// Whether the returned scores equal the model's exact scores.
  bool exact_at(double t) const;

  std::shared_ptr<const ScoreSlice> at(double t) const { return model_->at(t); }

  void scores(const ScoreSlice& slice, std::span<const int> x, double c, std::span<double> out) const;

  /// Applies the query mode to exact scores `out` taken from the slice at t.
  void modify(double t, std::span<const int> x, double c, std::span<double> out) const;

  /// p_{0|t}(x0^d | x) under `sampler` (whose alpha inverts the kernel).
  /// Exact slices answer directly in exact mode; otherwise the posterior is
  /// recovered from the (possibly modified) conditional scores.
  void posterior(const ProcessSpec& sampler, const ScoreSlice& slice, std::span<const int> x, int d, double c,
                 std::span<double> out) const;

  /// p_t(x^d = . | x^{\d}) from the (possibly modified) scores.
  void conditional(const ScoreSlice& slice, std::span<const int> x, int d, double c, std::span<double> out) const;

 private:
  std::shared_ptr<const ScoreModel> model_;
  OracleMode mode_;
};

/// Posterior of one coordinate from its conditional law at time t: invert
/// the forward kernel, clip at 0, then weight by q_{t|0}(x | .).
void posterior_from_conditional(const ProcessSpec& spec, double t, int x, std::span<const double> conditional,
                                std::span<double> out);

}  // namespace ctmc
