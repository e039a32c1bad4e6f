#include "ctmc/config.hpp"
#include "ctmc/experiments.hpp"
#include "ctmc/verify.hpp"

#include <doctest.h>

#include <boost/math/distributions/binomial.hpp>

#include <numeric>
#include <set>

using namespace ctmc;

TEST_CASE("gray code") {
  CHECK(gray_encode(5) == 0b111);
  for (unsigned n = 0; n < 256; ++n) {
    CHECK(gray_decode(gray_encode(n)) == n);
    if (n > 0) CHECK(__builtin_popcount(gray_encode(n) ^ gray_encode(n - 1)) == 1);
  }
}

TEST_CASE("ground truth draws") {
  const auto a = draw_p0(15, 7), b = draw_p0(15, 7), c = draw_p0(15, 8);
  CHECK(a.vec() == b.vec());
  CHECK(a.vec() != c.vec());
  CHECK(std::accumulate(a.vec().begin(), a.vec().end(), 0.0) == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("result table csv") {
  ResultTable t;
  t.add({"exp", "dpf", 16, 3, "kl", 0.1 + 0.2, "clamp=0"});
  t.add({"exp", "tau_leaping", 32, 3, "kl", 1e-300, ""});
  const auto text = t.to_csv();
  CHECK(text.rfind("experiment_id,sampler,nfe,seed,metric,value,flags\n", 0) == 0);
  const auto back = ResultTable::parse_csv(text);
  CHECK(back.rows() == t.rows());
  CHECK(t.select("exp", "dpf", "").size() == 1);
  CHECK(ResultTable{}.to_csv() == std::string(ResultTable::kHeader) + "\n");
}

TEST_CASE("statistics helpers") {
  const std::vector<double> a = {1, 2, 3, 4, 5, 6}, b = {2, 3, 4, 5, 6, 7};
  const auto st = sign_test(a, b);
  CHECK(st.less == 6);
  CHECK(st.p_less == doctest::Approx(1.0 / 64).epsilon(1e-12));
  const boost::math::binomial_distribution<double> bin(6, 0.5);
  CHECK(st.p_two_sided == doctest::Approx(2 * boost::math::cdf(bin, 0)).epsilon(1e-12));

  const auto fit = fit_line(std::vector<double>{0, 1, 2}, std::vector<double>{1, 3, 5});
  CHECK(fit.slope == doctest::Approx(2.0));
  CHECK(fit.intercept == doctest::Approx(1.0));

  const std::vector<double> counts = {250, 250, 500}, probs = {0.25, 0.25, 0.5};
  CHECK(chi_square_gof(counts, probs).statistic == doctest::Approx(0.0));
  const std::vector<double> skew = {400, 100, 500};
  CHECK(chi_square_gof(skew, probs).p_value < 1e-10);
  CHECK(chi_square_two_sample(counts, counts).p_value == doctest::Approx(1.0));
}

TEST_CASE("plateau rung") {
  const std::vector<int> ladder = {4, 8, 16, 32};
  CHECK(plateau_rung(ladder, {1.0, 0.5, 0.105, 0.1}) == 16);
  CHECK(plateau_rung(ladder, {1.0, 0.5, 0.2, 0.1}) == 32);
}

TEST_CASE("configs round-trip through JSON") {
  Experiment1DConfig e;
  e.samplers = {"dpf", "dcrs", "nu:0.5"};
  e.score_mode = OracleMode::perturbed();
  e.dcrs.windows = {RestartWindow{0.01, 0.05, 8, 3, false, 0.001}};
  CHECK(parse_config<Experiment1DConfig>(dump_config(e)) == e);

  MoGConfig m;
  m.process = StationaryKind::masking;
  m.projection_dims = 3;
  CHECK(parse_config<MoGConfig>(dump_config(m)) == m);

  SampleConfig s;
  s.sampler.outer = SamplerChoice::parse("nu_max");
  s.p0 = {0.5, 0.5};
  s.process = ProcessSpec::uniform(2, NoiseSchedule::loglinear(1e-3, 4.0));
  CHECK(parse_config<SampleConfig>(dump_config(s)) == s);
}

TEST_CASE("config errors name the problem") {
  CHECK_THROWS_AS(parse_config<Experiment1DConfig>("{\"num_state\": 15}"), ConfigError);
  CHECK_THROWS_AS(parse_config<Experiment1DConfig>("{\"num_states\": \"15\"}"), ConfigError);
  CHECK_THROWS_AS(parse_config<Experiment1DConfig>("{"), ConfigError);
  try {
    parse_config<Experiment1DConfig>("{\"dcrs\": {\"windows\": [{\"t_mn\": 0.1}]}}");
    FAIL("expected an error");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("t_mn") != std::string::npos);
  }

  Experiment1DConfig bad;
  bad.nfe_ladder = {8, 4};
  bad.seeds.clear();
  CHECK(bad.problems().size() >= 2);
  CHECK_THROWS_AS(bad.validate(), DomainError);
}

TEST_CASE("mixture problem construction") {
  MoGConfig cfg;
  cfg.bits_per_coordinate = 4;
  const auto prob = build_mog(cfg);
  CHECK(prob.joint.size() == (1u << 8));
  CHECK(prob.cell_probs.size() == 256);
  CHECK(std::accumulate(prob.joint.begin(), prob.joint.end(), 0.0) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(prob.quantization_floor > 0.0);
  CHECK(prob.mixture.modes() == 8);

  const std::vector<int> zeros(8, 0);
  CHECK(cell_of_state(prob, zeros) >= 0);

  MoGConfig large = cfg;
  large.bits_per_coordinate = 32;
  large.projection_dims = 8;
  try {
    build_mog(large);
    FAIL("expected a refusal");
  } catch (const DomainError& e) {
    CHECK(std::string(e.what()).find("bits") != std::string::npos);
  }
}

TEST_CASE("finer quantization lowers the floor") {
  MoGConfig coarse;
  coarse.bits_per_coordinate = 3;
  MoGConfig fine = coarse;
  fine.bits_per_coordinate = 6;
  CHECK(build_mog(fine).quantization_floor < build_mog(coarse).quantization_floor);
}

TEST_CASE("small 1D run is deterministic across thread counts") {
  Experiment1DConfig cfg;
  cfg.samples = 2000;
  cfg.seeds = {1, 2};
  cfg.nfe_ladder = {8, 16};
  cfg.samplers = {"tau_leaping", "dpf", "dcrs"};
  cfg.dcrs.windows = {RestartWindow{0.01, 0.05, 2, 1, false, 0.0}};
  const auto a = run_1d(cfg, 1).to_csv();
  CHECK(a == run_1d(cfg, 4).to_csv());
  const auto table = ResultTable::parse_csv(a);
  CHECK(table.select("exp1d", "dpf", "kl").size() == 4);
  std::set<std::int64_t> nfes;
  for (const auto& r : table.select("", "tau_leaping", "kl")) nfes.insert(r.nfe);
  CHECK(nfes == std::set<std::int64_t>{8, 16});
}

TEST_CASE("small mixture run") {
  MoGConfig cfg;
  cfg.bits_per_coordinate = 3;
  cfg.samples = 500;
  cfg.seeds = {1};
  cfg.nfe_ladder = {16};
  const auto t = run_mog(cfg, 2);
  CHECK(t.select("", "tau_leaping", "sliced_w1").size() == 1);
  CHECK(t.select("", "dcrs", "sliced_w1").size() == 1);
  CHECK(t.to_csv() == run_mog(cfg, 1).to_csv());
}

TEST_CASE("single runs and sweeps") {
  SampleConfig cfg;
  cfg.chains = 1000;
  const auto one = run_sample(cfg, 3);
  CHECK(one.select("", "", "kl").size() == 1);
  cfg.sampler.windows = {RestartWindow{0.05, 0.2, 2, 1, false, 0.0}};
  cfg.sampler.n_main = 7;
  const auto sw = run_sweep(cfg, 3);
  std::set<std::int64_t> nfes;
  for (const auto& r : sw.select("", "", "kl")) nfes.insert(r.nfe);
  CHECK(nfes.size() == cfg.nfe_targets.size());
}

TEST_CASE("contraction suite rows") {
  const auto t = run_contraction_suite(1, true);
  int failed = 0;
  for (const auto& r : t.rows()) failed += r.flags.find(";fail") != std::string::npos;
  CHECK(failed == 0);
  const auto id = t.select("contraction", "identity", "eta_tv");
  REQUIRE(id.size() == 3);
  for (const auto& r : id) CHECK(r.value == 1.0);
  for (const auto& r : t.select("", "masking_forward", "equality_slack")) CHECK(r.value < 1e-9);
  for (const auto& r : t.select("", "uniform_forward", "empirical_over_upper")) CHECK(r.value <= 1.0 + 1e-9);
}

TEST_CASE("every verify check has a unique name") {
  std::set<std::string> names;
  for (const auto& c : verify_checks()) names.insert(c.module + "." + c.name);
  CHECK(names.size() == verify_checks().size());
  for (const auto* m : {"process.", "rates.", "samplers.", "dcrs.", "analysis."})
    CHECK(std::any_of(names.begin(), names.end(), [&](const std::string& n) { return n.rfind(m, 0) == 0; }));
}
