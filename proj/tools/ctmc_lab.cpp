// ctmc_lab: command-line front end for the experiment harness.
//
//   ctmc_lab verify [--fast] [--only <prefix>]
//   ctmc_lab exp1d --config fig2.json [--seed 7] [--fast]
//   ctmc_lab mog --config mog.json
//   ctmc_lab contraction
//   ctmc_lab sample --config run.json
//   ctmc_lab sweep --config run.json
//
// Results go to --out (stdout by default) as CSV. Exit codes: 0 success,
// 1 bad flags or invalid configuration, 2 when a verify row fails.

#include "ctmc/config.hpp"
#include "ctmc/experiments.hpp"
#include "ctmc/verify.hpp"

#include <CLI11.hpp>

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

namespace {

using namespace ctmc;

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out = "-";
  int threads = 0;
  std::string format = "csv";
  bool fast = false;
  bool dump_config = false;
};

void add_common(CLI::App& sub, Common& c, bool takes_config) {
  if (takes_config) {
    sub.add_option("--config", c.config, "JSON configuration file (defaults when omitted)");
    sub.add_flag("--dump-config", c.dump_config, "Print the effective configuration as JSON and exit");
  }
  sub.add_option("--seed", c.seed, "Master seed");
  sub.add_option("--out", c.out, "Output CSV path, '-' for stdout");
  sub.add_option("--threads", c.threads, "Worker threads (default: CTMC_LAB_THREADS, else 1)")
      ->check(CLI::NonNegativeNumber);
  sub.add_option("--format", c.format, "Output format")->check(CLI::IsMember({"csv"}));
  sub.add_flag("--fast", c.fast, "Reduced sample counts");
}

int threads_of(const Common& c) { return c.threads > 0 ? c.threads : default_threads(); }

template <class T>
T load_or_default(const Common& c) {
  return c.config.empty() ? T{} : load_config<T>(c.config);
}

int run_verify_cmd(const Common& c, const std::string& only) {
  VerifyOptions opts;
  opts.fast = c.fast;
  opts.threads = threads_of(c);
  opts.seed = c.seed.value_or(1);
  const auto results = run_verify(opts, only);
  if (results.empty()) throw DomainError("no verify check matches '" + only + "'");
  int failed = 0;
  for (const auto& r : results) {
    std::cerr << (r.passed ? "pass " : "FAIL ") << r.module << "." << r.name << " value=" << format_double(r.value)
              << " threshold=" << format_double(r.threshold);
    if (!r.detail.empty()) std::cerr << "  (" << r.detail << ")";
    std::cerr << "\n";
    if (!r.passed) ++failed;
  }
  std::cerr << results.size() - failed << "/" << results.size() << " checks passed\n";
  verify_table(results, opts.seed).save(c.out);
  return failed ? 2 : 0;
}

int run_exp1d_cmd(const Common& c) {
  auto cfg = load_or_default<Experiment1DConfig>(c);
  if (c.seed) cfg.seeds = {*c.seed};
  if (c.fast) cfg.samples = std::min<std::int64_t>(cfg.samples, 100000);
  if (c.dump_config) {
    std::cout << dump_config(cfg) << "\n";
    return 0;
  }
  cfg.validate();
  run_1d(cfg, threads_of(c)).save(c.out);
  return 0;
}

int run_mog_cmd(const Common& c) {
  auto cfg = load_or_default<MoGConfig>(c);
  if (c.seed) cfg.seeds = {*c.seed};
  if (c.fast && cfg.seeds.size() > 3) cfg.seeds.resize(3);
  if (c.dump_config) {
    std::cout << dump_config(cfg) << "\n";
    return 0;
  }
  cfg.validate();
  run_mog(cfg, threads_of(c)).save(c.out);
  return 0;
}

int run_sample_cmd(const Common& c, bool sweep_mode) {
  auto cfg = load_or_default<SampleConfig>(c);
  if (c.fast) cfg.chains = std::min<std::int64_t>(cfg.chains, 100000);
  if (c.dump_config) {
    std::cout << dump_config(cfg) << "\n";
    return 0;
  }
  cfg.validate();
  const auto seed = c.seed.value_or(1);
  (sweep_mode ? run_sweep(cfg, seed, threads_of(c)) : run_sample(cfg, seed, threads_of(c))).save(c.out);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Discrete diffusion CTMC samplers, contraction analysis and desk-scale experiments", "ctmc_lab"};
  app.require_subcommand(1);

  Common verify_opts, exp1d_opts, mog_opts, contraction_opts, sample_opts, sweep_opts;
  std::string only;

  auto* verify = app.add_subcommand("verify", "Run the invariant battery");
  add_common(*verify, verify_opts, false);
  verify->add_option("--only", only, "Run checks whose <module>.<name> starts with this prefix");

  auto* exp1d = app.add_subcommand("exp1d", "1D benchmark with exact or perturbed scores");
  add_common(*exp1d, exp1d_opts, true);
  auto* mog = app.add_subcommand("mog", "Quantized mixture of Gaussians");
  add_common(*mog, mog_opts, true);
  auto* contraction = app.add_subcommand("contraction", "Contraction and total-correlation checks");
  add_common(*contraction, contraction_opts, false);
  auto* sample = app.add_subcommand("sample", "A single generation run");
  add_common(*sample, sample_opts, true);
  auto* sweep = app.add_subcommand("sweep", "NFE ladder for one sampler configuration");
  add_common(*sweep, sweep_opts, true);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    if (code != 0) std::cerr << app.help();
    return code == 0 ? 0 : 1;
  }

  try {
    if (*verify) return run_verify_cmd(verify_opts, only);
    if (*exp1d) return run_exp1d_cmd(exp1d_opts);
    if (*mog) return run_mog_cmd(mog_opts);
    if (*contraction) {
      run_contraction_suite(contraction_opts.seed.value_or(1), contraction_opts.fast).save(contraction_opts.out);
      return 0;
    }
    if (*sample) return run_sample_cmd(sample_opts, false);
    if (*sweep) return run_sample_cmd(sweep_opts, true);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
