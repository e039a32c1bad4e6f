#include "oracles.hpp"

#include "ctmc/analysis.hpp"
#include "ctmc/rng.hpp"

#include <doctest.h>

using namespace ctmc;

namespace {

const double kLn2 = std::log(2.0);

std::vector<double> off_mask(int S, Stream& rng) {
  auto p = dirichlet_ones(S - 1, rng);
  p.push_back(0.0);
  return p;
}

}  // namespace

TEST_CASE("divergence examples") {
  const std::vector<double> p_hat = {1.0, 0.0}, p = {0.5, 0.5};
  const auto d = divergences(p_hat, p);
  CHECK(d.kl.value == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  CHECK(d.tv == 0.5);
  CHECK(d.w1 == 0.5);
  const auto same = divergences(p, p);
  CHECK(same.kl.value == 0.0);
  CHECK(same.tv == 0.0);
  CHECK(same.w1 == 0.0);
  CHECK(kl_divergence(p, p_hat).infinite);
}

TEST_CASE("kl matches the direct sum") {
  Stream rng(1, 0, 0, Purpose::misc);
  for (int i = 0; i < 50; ++i) {
    const auto p = dirichlet_ones(7, rng), q = dirichlet_ones(7, rng);
    CHECK(kl_divergence(p, q).value == doctest::Approx(oracle::kl(p, q)).epsilon(1e-12));
  }
  // Nearby laws keep relative precision.
  std::vector<double> a = {0.3, 0.7}, b = {0.3 + 1e-7, 0.7 - 1e-7};
  const double exact = 0.5e-14 / 0.3 + 0.5e-14 / 0.7;
  CHECK(kl_divergence(a, b).value == doctest::Approx(exact).epsilon(1e-6));
}

TEST_CASE("histogram and samples") {
  const std::vector<int> s = {0, 1, 1, 2};
  CHECK(histogram(s, 3) == std::vector<double>{0.25, 0.5, 0.25});
  const auto d = divergences_from_samples(s, std::vector<double>{0.25, 0.5, 0.25});
  CHECK(d.tv == 0.0);
}

TEST_CASE("w1 on the line") {
  const std::vector<double> xa = {0.0, 1.0}, wa = {1.0, 1.0}, xb = {0.5}, wb = {2.0};
  CHECK(w1_line(xa, wa, xb, wb) == doctest::Approx(0.5));
  CHECK(w1_line(xa, wa, xa, wa) == 0.0);
}

TEST_CASE("sliced W1 never exceeds W1 on collinear sets") {
  Stream rng(2, 0, 0, Purpose::misc);
  PointCloud a, b;
  std::vector<double> ta, tb;
  for (int i = 0; i < 60; ++i) {
    ta.push_back(rng.uniform());
    tb.push_back(rng.uniform() * 2.0);
  }
  for (double t : ta) a.coords.insert(a.coords.end(), {0.6 * t, 0.8 * t});
  for (double t : tb) b.coords.insert(b.coords.end(), {0.6 * t, 0.8 * t});
  const std::vector<double> ones_a(ta.size(), 1.0), ones_b(tb.size(), 1.0);
  const double exact = w1_line(ta, ones_a, tb, ones_b);
  CHECK(sliced_w1(a, b) <= exact + 1e-12);
  CHECK(sliced_w1(a, b) > 0.0);
}

TEST_CASE("dobrushin") {
  CHECK(dobrushin(Eigen::MatrixXd::Identity(4, 4)) == 1.0);
  Eigen::MatrixXd rank_one(3, 3);
  rank_one << 0.2, 0.3, 0.5, 0.2, 0.3, 0.5, 0.2, 0.3, 0.5;
  CHECK(dobrushin(rank_one) == 0.0);

  const auto spec = ProcessSpec::uniform(2, NoiseSchedule::linear());
  const Dist p0({0.75, 0.25});
  const auto post = posterior(spec, p0, kLn2).channel();
  CHECK(dobrushin(post) == doctest::Approx(0.4).epsilon(1e-13));
  const auto f = posterior_keep_weights(spec, p0, kLn2);
  CHECK(dobrushin(post) <= *std::max_element(f.begin(), f.end()));
}

TEST_CASE("forward contraction") {
  const auto mask = ProcessSpec::masking(6, NoiseSchedule::linear());
  const auto m = eta_forward(mask, 0.1, 0.1 + kLn2);
  CHECK(m.eta_kl_upper == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(m.eta_tv == doctest::Approx(0.5).epsilon(1e-14));

  Stream rng(3, 0, 0, Purpose::misc);
  const Channel k(forward_kernel_matrix(mask, 0.5));
  for (int i = 0; i < 100; ++i) {
    const auto p = off_mask(6, rng), q = off_mask(6, rng);
    CHECK(std::abs(kl_divergence(k.push(q), k.push(p)).value - 0.5 * kl_divergence(q, p).value) < 1e-10);
  }

  const auto u = ProcessSpec::uniform(15, NoiseSchedule::linear());
  const auto r = eta_forward(u, 0.1, 0.1 + kLn2);
  CHECK(r.eta_kl_upper == doctest::Approx(15 * 0.25 / (13 * 0.5 + 2)).epsilon(1e-14));
  CHECK(r.eta_kl_upper == doctest::Approx(0.44118).epsilon(1e-5));
  CHECK(r.eta_kl_empirical_lower <= r.eta_kl_upper);

  const auto id = eta_forward(u, 0.3, 0.3);
  CHECK(id.eta_kl_upper == 1.0);
  CHECK(id.eta_tv == 1.0);
}

TEST_CASE("reverse contraction") {
  const auto spec = ProcessSpec::uniform(2, NoiseSchedule::linear());
  const Dist p0({0.75, 0.25});
  // alpha_t = 0.5 and alpha_s = 0.8 give sigma = 0.4.
  const double t = kLn2, s = std::log(1.25);
  const auto rep = eta_dpf_reverse(spec, p0, t, s);
  CHECK(rep.sigma == doctest::Approx(0.4).epsilon(1e-14));
  CHECK(rep.f_inf == doctest::Approx(0.6).epsilon(1e-14));
  CHECK(rep.bound_from_f == doctest::Approx(0.76).epsilon(1e-14));
  CHECK(rep.eta_kl_upper <= rep.bound_from_f + 1e-15);
  CHECK(rep.eta_kl_empirical_lower <= rep.eta_kl_upper + 1e-9);

  CHECK(eta_dpf_reverse(spec, p0, t, t).eta_kl_upper == 1.0);

  const auto mask = ProcessSpec::masking(5, NoiseSchedule::geometric());
  const Dist q0({0.1, 0.2, 0.3, 0.4, 0.0});
  const auto m = eta_dpf_reverse(mask, q0, 0.6, 0.3);
  CHECK(m.eta_kl_upper == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(m.eta_tv_empirical_lower == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("nu-augmented contraction factors") {
  const auto spec = ProcessSpec::uniform(4, NoiseSchedule::geometric());
  const Dist p0({0.1, 0.2, 0.3, 0.4});
  const double t = 0.6, s = 0.4;
  const auto zero = eta_nu_reverse(spec, p0, t, s, 0.0);
  CHECK(zero.factor_product == doctest::Approx(eta_dpf_reverse(spec, p0, t, s).eta_kl_upper).epsilon(1e-14));

  const auto mask = ProcessSpec::masking(5, NoiseSchedule::geometric());
  const Dist q0({0.1, 0.2, 0.3, 0.4, 0.0});
  const double at = mask.schedule.alpha(t), as = mask.schedule.alpha(s);
  const double nu_max = at * (1.0 - as) / (as - at);
  const auto mx = eta_nu_reverse(mask, q0, t, s, nu_max);
  CHECK(mx.factor_product == doctest::Approx(as).epsilon(1e-12));
  CHECK_THROWS_AS(eta_nu_reverse(mask, q0, t, s, 2.0 * nu_max), DomainError);
}

TEST_CASE("error bound") {
  const auto spec = ProcessSpec::uniform(5, NoiseSchedule::geometric());
  const Dist p0({0.1, 0.2, 0.3, 0.2, 0.2});
  const auto grid = edm_grid(1e-3, 1.0, 6, 7.0);
  const std::vector<double> zeros(5, 0.0);
  CHECK(error_bound(spec, p0, grid, zeros, BoundSampler::dpf).bound == 0.0);

  const auto one = edm_grid(0.2, 0.6, 2, 1.0);
  const std::vector<double> eps = {0.05};
  const auto trace = error_bound(spec, p0, one, eps, BoundSampler::dpf);
  CHECK(trace.bound == doctest::Approx(trace.steps[0].b * 0.05).epsilon(1e-15));

  const auto [a, b] = bound_coefficients(BoundSampler::dpf, 0.5, 0.8, 1.0);
  const auto [an, bn] = bound_coefficients(BoundSampler::nu_schedule, 0.5, 0.8, 1.0);
  CHECK(std::abs(a - 1.0) <= 1e-15);
  CHECK(std::abs(b - 0.6) <= 1e-15);
  CHECK(std::abs(an - 0.8) <= 1e-15);
  CHECK(std::abs(bn - 0.8) <= 1e-15);

  CHECK_THROWS_AS(error_bound(spec, p0, grid, eps, BoundSampler::dpf), DomainError);
}

TEST_CASE("posterior error") {
  const auto spec = ProcessSpec::uniform(3, NoiseSchedule::linear());
  const Dist p0({0.2, 0.3, 0.5});
  const auto exact = posterior_error(spec, p0, 0.5, [&](int x, std::span<double> out) {
    const auto row = posterior_row(spec, p0, 0.5, x);
    std::copy(row.begin(), row.end(), out.begin());
  });
  CHECK(exact.max < 1e-15);
  const auto flat = posterior_error(spec, p0, 0.5, [](int, std::span<double> out) {
    std::fill(out.begin(), out.end(), 1.0 / 3.0);
  });
  CHECK(flat.weighted > 0.0);
  CHECK(flat.weighted <= flat.max);
}

TEST_CASE("total correlation decomposition") {
  Stream rng(4, 0, 0, Purpose::misc);
  const auto p = dirichlet_ones(9, rng);
  const auto same = tc_decomposition(p, p, 2, 3);
  CHECK(same.kl == 0.0);
  CHECK(std::abs(same.residual()) < 1e-15);

  // Independent joints from their marginals.
  const auto pa = dirichlet_ones(3, rng), pb = dirichlet_ones(3, rng), qa = dirichlet_ones(3, rng),
             qb = dirichlet_ones(3, rng);
  std::vector<double> pj(9), qj(9);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      pj[i + 3 * j] = pa[i] * pb[j];
      qj[i + 3 * j] = qa[i] * qb[j];
    }
  const auto ind = tc_decomposition(pj, qj, 2, 3);
  CHECK(std::abs(ind.tc_q) < 1e-15);
  CHECK(std::abs(ind.cross_tc) < 1e-15);
  CHECK(ind.kl == doctest::Approx(oracle::kl(qa, pa) + oracle::kl(qb, pb)).epsilon(1e-12));
  CHECK(marginal_of(pj, 2, 3, 1)[2] == doctest::Approx(pb[2]).epsilon(1e-14));

  for (int i = 0; i < 20; ++i) {
    const auto jp = dirichlet_ones(9, rng), jq = dirichlet_ones(9, rng);
    CHECK(std::abs(tc_decomposition(jp, jq, 2, 3).residual()) < 1e-10);
    const auto check = product_channel_bound(ProcessSpec::uniform(3, NoiseSchedule::linear()), 0.1, 0.5, jp, jq, 2);
    CHECK(check.slack() >= -1e-10);
  }
}

TEST_CASE("product channel acts per axis") {
  Stream rng(5, 0, 0, Purpose::misc);
  const auto pa = dirichlet_ones(2, rng), pb = dirichlet_ones(2, rng);
  std::vector<double> joint = {pa[0] * pb[0], pa[1] * pb[0], pa[0] * pb[1], pa[1] * pb[1]};
  Eigen::MatrixXd k(2, 2);
  k << 0.9, 0.1, 0.3, 0.7;
  const auto out = apply_product_channel(joint, 2, k);
  const Channel ch(k);
  const auto ka = ch.push(pa), kb = ch.push(pb);
  CHECK(out[1 + 2 * 0] == doctest::Approx(ka[1] * kb[0]).epsilon(1e-14));
  CHECK(out[0 + 2 * 1] == doctest::Approx(ka[0] * kb[1]).epsilon(1e-14));
}
