#include "oracles.hpp"

#include "ctmc/analysis.hpp"
#include "ctmc/rates.hpp"
#include "ctmc/rng.hpp"

#include <doctest.h>

using namespace ctmc;

namespace {

// Scores of state x under p_t = (0.75, 0.25).
std::vector<double> scores_at(int x) {
  const double p[2] = {0.75, 0.25};
  return {p[0] / p[x], p[1] / p[x]};
}

const ProcessSpec kTwo = ProcessSpec::uniform(2, NoiseSchedule::linear());

}  // namespace

TEST_CASE("forward rate examples") {
  const auto r = forward_rate(kTwo, 0.4);
  CHECK(r(0, 1) == doctest::Approx(0.5));
  CHECK(r(1, 0) == doctest::Approx(0.5));
  CHECK(r.is_valid());

  const auto mask = ProcessSpec::masking(4, NoiseSchedule::geometric());
  const auto m = forward_rate(mask, 0.3);
  const double beta = mask.schedule.beta(0.3);
  for (int x = 0; x < 3; ++x)
    for (int y = 0; y < 4; ++y)
      if (y != x) CHECK(m(x, y) == doctest::Approx(y == 3 ? beta : 0.0));
  for (int y = 0; y < 3; ++y) CHECK(m(3, y) == 0.0);

  CHECK_THROWS_AS(ProcessSpec::uniform(3, NoiseSchedule::linear(0.0)), DomainError);
}

TEST_CASE("reverse rate examples") {
  std::vector<double> out(2);
  reverse_row(kTwo, 0.4, 1, scores_at(1), out);
  CHECK(out[0] == doctest::Approx(1.5));
  CHECK(out[1] == 0.0);
  reverse_row(kTwo, 0.4, 0, scores_at(0), out);
  CHECK(out[1] == doctest::Approx(0.5 / 3.0));

  const std::vector<double> ones(2, 1.0);
  reverse_row(kTwo, 0.4, 0, ones, out);
  CHECK(out[1] == doctest::Approx(forward_rate(kTwo, 0.4)(0, 1)));
}

TEST_CASE("masking reverse rates leave unmasked states alone") {
  const auto mask = ProcessSpec::masking(4, NoiseSchedule::linear());
  const Dist p0({0.2, 0.3, 0.5, 0.0});
  const double t = 0.6;
  const auto r = reverse_matrix(mask, p0, t);
  const double beta = mask.schedule.beta(t);
  for (int y = 0; y < 3; ++y) CHECK(r(3, y) == doctest::Approx(score(mask, p0, t, 3, y) * beta));
  for (int x = 0; x < 3; ++x)
    for (int y = 0; y < 4; ++y)
      if (y != x) CHECK(r(x, y) == 0.0);
  CHECK((dpf_matrix(mask, p0, t).matrix() - r.matrix()).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("dpf rate examples") {
  std::vector<double> out(2);
  dpf_row(kTwo, 0.4, 1, scores_at(1), out);
  CHECK(out[0] == doctest::Approx(1.0));
  dpf_row(kTwo, 0.4, 0, scores_at(0), out);
  CHECK(out[1] == 0.0);
  const std::vector<double> ones(2, 1.0);
  dpf_row(kTwo, 0.4, 0, ones, out);
  CHECK(out[1] == 0.0);
}

TEST_CASE("nu rate examples") {
  std::vector<double> out(2), ref(2);
  nu_row(kTwo, 0.4, 0, scores_at(0), 1.0, out);
  CHECK(out[1] == doctest::Approx(2.0 / 3.0));
  nu_row(kTwo, 0.4, 1, scores_at(1), 0.0, out);
  dpf_row(kTwo, 0.4, 1, scores_at(1), ref);
  CHECK(out == ref);
}

TEST_CASE("max-contraction schedule picks the step's nu") {
  const auto sched = NoiseSchedule::geometric();
  const double t = 0.5, s = 0.3;
  const double at = sched.alpha(t), as = sched.alpha(s);
  CHECK(StochasticitySchedule::max_contraction().at(sched, t, s) ==
        doctest::Approx(at * (1.0 - as) / (as - at)).epsilon(1e-14));
  const auto pieces = StochasticitySchedule::piecewise({{0.0, 0.1, 20.0}});
  CHECK(pieces.at(sched, 0.05, 0.0) == 20.0);
  CHECK(pieces.at(sched, 0.5, 0.0) == 0.0);
}

TEST_CASE("redundancy removal: no mutual flow under dpf") {
  Stream rng(7, 0, 0, Purpose::misc);
  for (int i = 0; i < 30; ++i) {
    const int S = 2 + i % 10;
    const auto spec = ProcessSpec::uniform(S, NoiseSchedule::geometric());
    const Dist p0(dirichlet_ones(S, rng));
    const double t = 0.05 + 0.9 * rng.uniform();
    const auto pt = marginal(spec, p0, t);
    const auto r = dpf_matrix(spec, p0, t);
    for (int x = 0; x < S; ++x)
      for (int y = 0; y < x; ++y) CHECK(std::min(pt[x] * r(x, y), pt[y] * r(y, x)) == 0.0);
  }
}

TEST_CASE("rates are non-negative under perturbed oracles") {
  Stream rng(8, 0, 0, Purpose::misc);
  const auto spec = ProcessSpec::uniform(6, NoiseSchedule::geometric());
  const Dist p0(dirichlet_ones(6, rng));
  const ScoreOracle oracle(std::make_shared<ClosedFormModel>(spec, p0), OracleMode::perturbed(0.0, 1.0));
  std::vector<double> scores(6), row(6);
  for (double t : {0.01, 0.05, 0.5}) {
    const auto slice = oracle.at(t);
    for (int x = 0; x < 6; ++x) {
      const int xs[1] = {x};
      oracle.scores(*slice, xs, rng.uniform(), scores);
      for (const auto& c : {RateChoice::reverse(), RateChoice::dpf(),
                            RateChoice::nu_rate(StochasticitySchedule::constant(3.0))}) {
        rate_row(spec, c, t, t / 2, x, scores, row);
        for (int v = 0; v < 6; ++v) CHECK(row[v] >= 0.0);
      }
    }
  }
}

TEST_CASE("nu and dpf generators move the marginal identically") {
  // Over a short window both generators started from p_t track p_{t - delta}.
  const auto spec = ProcessSpec::uniform(5, NoiseSchedule::linear());
  Stream rng(9, 0, 0, Purpose::misc);
  const Dist p0(dirichlet_ones(5, rng));
  const double t = 0.6;
  for (double delta : {0.02, 0.01}) {
    const auto start = marginal(spec, p0, t);
    auto gen = [&](const RateChoice& c) {
      return [&, c](double tau) { return rate_matrix(spec, p0, c, t - tau, t - tau).matrix(); };
    };
    const auto a = oracle::evolve(gen(RateChoice::dpf()), start, 0.0, delta);
    const auto b = oracle::evolve(gen(RateChoice::nu_rate(StochasticitySchedule::constant(1.0))), start, 0.0, delta);
    CHECK(tv_distance(a, b) < 1e-10);
    CHECK(tv_distance(a, marginal(spec, p0, t - delta)) < 1e-10);
  }
}

TEST_CASE("exact rate matrices are generators") {
  const auto spec = ProcessSpec::uniform(7, NoiseSchedule::loglinear());
  Stream rng(10, 0, 0, Purpose::misc);
  const Dist p0(dirichlet_ones(7, rng));
  CHECK(reverse_matrix(spec, p0, 0.4).is_valid(1e-9));
  CHECK(dpf_matrix(spec, p0, 0.4).is_valid(1e-9));
  CHECK(nu_matrix(spec, p0, 0.4, 2.0).is_valid(1e-9));
}
