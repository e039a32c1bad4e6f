#include "oracles.hpp"

#include "ctmc/process.hpp"
#include "ctmc/rng.hpp"

#include <doctest.h>

#include <cmath>

using namespace ctmc;

namespace {

Dist two_state() { return Dist({0.75, 0.25}); }

// Linear schedule with a = 1 reaches alpha = 0.5 at t = ln 2.
const double kHalf = std::log(2.0);

}  // namespace

TEST_CASE("schedule values") {
  CHECK(NoiseSchedule::linear().alpha(0.0) == 1.0);
  CHECK(NoiseSchedule::linear().alpha(0.5) == doctest::Approx(std::exp(-0.5)).epsilon(1e-15));
  CHECK(NoiseSchedule::linear().alpha(0.5) == doctest::Approx(0.606531).epsilon(1e-6));

  const auto geo = NoiseSchedule::geometric();
  CHECK(geo.log_alpha(1.0) == doctest::Approx(-297.0).epsilon(1e-14));
  CHECK(geo.alpha(1.0) > 0.0);
  CHECK(geo.alpha(1.0) == doctest::Approx(1.0349e-129).epsilon(1e-4));
}

TEST_CASE("schedule cumulative is the integral of beta") {
  for (const auto& sched : {NoiseSchedule::linear(2.0), NoiseSchedule::geometric(), NoiseSchedule::loglinear()}) {
    for (double t : {0.01, 0.3, 0.77, 1.0}) {
      const double ref = oracle::integrate([&](double u) { return sched.beta(u); }, 0.0, t);
      CHECK(sched.cumulative(t) == doctest::Approx(ref).epsilon(1e-12));
    }
  }
}

TEST_CASE("one_minus_alpha keeps precision near zero") {
  const auto sched = NoiseSchedule::linear();
  CHECK(sched.one_minus_alpha(1e-12) == doctest::Approx(-std::expm1(-1e-12)).epsilon(1e-14));
  CHECK(sched.alpha_ratio(0.2, 0.7) == doctest::Approx(std::exp(-0.5)).epsilon(1e-14));
}

TEST_CASE("alpha strictly decreasing") {
  for (const auto& sched : {NoiseSchedule::linear(), NoiseSchedule::geometric(), NoiseSchedule::loglinear()}) {
    double prev = sched.alpha(0.0);
    for (int i = 1; i < 1000; ++i) {
      const double a = sched.alpha(i / 999.0);
      REQUIRE(a < prev);
      prev = a;
    }
  }
}

TEST_CASE("invalid inputs are rejected") {
  CHECK_THROWS_AS(ProcessSpec::uniform(1, NoiseSchedule::linear()), DomainError);
  CHECK_THROWS_AS(ProcessSpec::masking(3, NoiseSchedule::linear(), 3), DomainError);
  CHECK_THROWS_AS(Dist({0.5, 0.6}), DomainError);
  CHECK_THROWS_AS(Dist({1.2, -0.2}), DomainError);
  CHECK_THROWS_AS(check_time(1.5), DomainError);
  CHECK_THROWS_AS(NoiseSchedule::linear(-1.0).validate(), DomainError);
  const auto spec = ProcessSpec::uniform(3, NoiseSchedule::linear());
  CHECK_THROWS(forward_kernel(spec, 0.6, 0.4));
}

TEST_CASE("forward kernel closed forms") {
  const auto spec = ProcessSpec::uniform(4, NoiseSchedule::linear());
  CHECK((forward_kernel(spec, 0.3, 0.3).matrix() - Eigen::MatrixXd::Identity(4, 4)).cwiseAbs().maxCoeff() == 0.0);

  const auto mask = ProcessSpec::masking(3, NoiseSchedule::linear());
  CHECK(mask.mask_index == 2);
  const auto row = forward_kernel(mask, 0.0, kHalf).row(0);
  CHECK(row(0) == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(row(1) == 0.0);
  CHECK(row(2) == doctest::Approx(0.5).epsilon(1e-14));
}

TEST_CASE("forward kernel matches the matrix exponential") {
  Stream rng(42, 0, 0, Purpose::misc);
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    const int S = 2 + static_cast<int>(rng.uniform() * 15);
    const NoiseSchedule sched = i % 3 == 0   ? NoiseSchedule::linear()
                                : i % 3 == 1 ? NoiseSchedule::geometric()
                                             : NoiseSchedule::loglinear();
    const auto spec = i % 2 ? ProcessSpec::uniform(S, sched) : ProcessSpec::masking(S, sched);
    const double t = rng.uniform(), s = t * rng.uniform();
    const double area = oracle::integrate([&](double u) { return sched.beta(u); }, s, t);
    const auto ref = oracle::expm(oracle::base_generator(spec.stationary_dist()) * area);
    worst = std::max(worst, (forward_kernel(spec, s, t).matrix() - ref).cwiseAbs().maxCoeff());
  }
  CHECK(worst < 1e-10);
}

TEST_CASE("kernel semigroup") {
  Stream rng(43, 0, 0, Purpose::misc);
  for (int i = 0; i < 50; ++i) {
    const auto spec = ProcessSpec::uniform(2 + i % 10, NoiseSchedule::geometric());
    double u[3] = {rng.uniform(), rng.uniform(), rng.uniform()};
    std::sort(u, u + 3);
    const Eigen::MatrixXd two = forward_kernel(spec, u[0], u[1]).matrix() * forward_kernel(spec, u[1], u[2]).matrix();
    CHECK((two - forward_kernel(spec, u[0], u[2]).matrix()).cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("marginal examples") {
  const auto spec = ProcessSpec::uniform(2, NoiseSchedule::linear());
  const auto p0 = two_state();
  CHECK(marginal(spec, p0, 0.0) == p0.vec());
  const auto half = marginal(spec, p0, kHalf);
  CHECK(half[0] == doctest::Approx(0.625).epsilon(1e-14));
  CHECK(half[1] == doctest::Approx(0.375).epsilon(1e-14));

  const auto geo = ProcessSpec::masking(5, NoiseSchedule::geometric());
  const auto late = marginal(geo, Dist({0.1, 0.2, 0.3, 0.4, 0.0}), 1.0);
  CHECK(late[4] == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("marginal consistency and Bayes consistency") {
  Stream rng(44, 0, 0, Purpose::misc);
  for (int i = 0; i < 50; ++i) {
    const int S = 2 + i % 12;
    const auto spec = ProcessSpec::uniform(S, NoiseSchedule::loglinear());
    const Dist p0(dirichlet_ones(S, rng));
    const double t = 0.01 + 0.98 * rng.uniform(), s = t * rng.uniform();
    const auto pushed = forward_kernel(spec, s, t).push(marginal(spec, p0, s));
    const auto pt = marginal(spec, p0, t);
    for (int v = 0; v < S; ++v) CHECK(std::abs(pushed[v] - pt[v]) < 1e-12);

    const auto table = posterior(spec, p0, t);
    std::vector<double> mix(S, 0.0);
    for (int x = 0; x < S; ++x)
      for (int v = 0; v < S; ++v) mix[v] += pt[x] * table.row(x)(v);
    for (int v = 0; v < S; ++v) CHECK(std::abs(mix[v] - p0[v]) < 1e-10);
  }
}

TEST_CASE("posterior examples") {
  const auto spec = ProcessSpec::uniform(2, NoiseSchedule::linear());
  const auto p0 = two_state();
  const auto f = posterior_keep_weights(spec, p0, kHalf);
  CHECK(f[0] == doctest::Approx(0.6).epsilon(1e-14));
  CHECK(f[1] == doctest::Approx(1.0 / 3.0).epsilon(1e-14));
  const auto row = posterior_row(spec, p0, kHalf, 0);
  CHECK(row[0] == doctest::Approx(0.9).epsilon(1e-14));
  CHECK(row[1] == doctest::Approx(0.1).epsilon(1e-13));

  const auto at_zero = posterior(spec, p0, 0.0).channel().matrix();
  CHECK((at_zero - Eigen::MatrixXd::Identity(2, 2)).cwiseAbs().maxCoeff() < 1e-15);

  const auto mask = ProcessSpec::masking(4, NoiseSchedule::linear());
  const Dist q0({0.2, 0.3, 0.5, 0.0});
  const auto from_mask = posterior_row(mask, q0, 0.4, 3);
  for (int v = 0; v < 4; ++v) CHECK(from_mask[v] == doctest::Approx(q0[v]).epsilon(1e-14));
}

TEST_CASE("unreachable posterior rows throw") {
  const auto mask = ProcessSpec::masking(3, NoiseSchedule::linear());
  const Dist p0({1.0, 0.0, 0.0});
  const auto table = posterior(mask, p0, 0.5);
  CHECK(table.reachable() == std::vector<bool>{true, false, true});
  CHECK_THROWS_AS(table.row(1), UnreachableState);
  CHECK_THROWS_AS(table.channel(), UnreachableState);
  CHECK(table.reachable_channel().inputs() == 2);
  CHECK_THROWS_AS(score(mask, p0, 0.5, 1, 0), SingularScore);
}

TEST_CASE("score examples") {
  const auto spec = ProcessSpec::uniform(2, NoiseSchedule::linear());
  const auto p0 = two_state();
  CHECK(score(spec, p0, kHalf, 1, 1) == 1.0);
  CHECK(score(spec, p0, kHalf, 1, 0) == doctest::Approx(0.625 / 0.375).epsilon(1e-14));

  const auto mask = ProcessSpec::masking(4, NoiseSchedule::linear());
  const Dist q0({0.2, 0.3, 0.5, 0.0});
  CHECK(score(mask, q0, 0.4, 0, 2) == doctest::Approx(0.5 / 0.2).epsilon(1e-14));

  Stream rng(45, 0, 0, Purpose::misc);
  const Dist r0(dirichlet_ones(6, rng));
  const auto u = ProcessSpec::uniform(6, NoiseSchedule::geometric());
  for (int x = 0; x < 6; ++x)
    for (int y = 0; y < 6; ++y)
      CHECK(score_via_posterior(u, r0, 0.3, x, y) == doctest::Approx(score(u, r0, 0.3, x, y)).epsilon(1e-12));
}
