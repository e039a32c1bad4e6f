#include "ctmc/experiments.hpp"

#include "ctmc/rng.hpp"

#include <tbb/parallel_for.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <sstream>

namespace ctmc {

namespace {

std::string join(const std::vector<std::string>& items) {
  std::string out;
  for (const auto& s : items) {
    if (!out.empty()) out += "; ";
    out += s;
  }
  return out;
}

template <class Fn>
void check(std::vector<std::string>& out, const std::string& what, Fn&& fn) {
  try {
    fn();
  } catch (const std::exception& e) {
    out.push_back(what + ": " + e.what());
  }
}

void check_ladder(std::vector<std::string>& out, const std::vector<int>& ladder, const char* name) {
  if (ladder.empty()) out.push_back(std::string(name) + " is empty");
  for (std::size_t i = 0; i < ladder.size(); ++i) {
    if (ladder[i] <= 0) out.push_back(std::string(name) + " entries must be positive");
    if (i > 0 && ladder[i] <= ladder[i - 1]) out.push_back(std::string(name) + " must be strictly increasing");
  }
}

void check_common(std::vector<std::string>& out, std::int64_t samples, const std::vector<std::uint64_t>& seeds,
                  double t_stop, double rho) {
  if (samples < 1) out.push_back("samples must be >= 1");
  if (seeds.empty()) out.push_back("seeds must not be empty");
  if (!(t_stop > 0.0 && t_stop < 1.0)) out.push_back("t_stop must lie in (0, 1)");
  if (!(rho >= 1.0)) out.push_back("rho must be >= 1");
}

std::string sampler_label(const DcrsConfig& c) { return c.windows.empty() ? c.outer.name() : "dcrs"; }

void add(ResultTable& t, const std::string& id, const std::string& sampler, std::int64_t nfe, std::uint64_t seed,
         const std::string& metric, double value, const std::string& flags = "") {
  t.add(ResultRow{id, sampler, nfe, seed, metric, value, flags});
}

void add_flag_rows(ResultTable& t, const std::string& id, const std::string& sampler, const RunRecord& rec) {
  const auto flags = flags_string(rec.flags);
  add(t, id, sampler, rec.nfe, rec.seed, "clamp", static_cast<double>(rec.flags.clamp), flags);
  add(t, id, sampler, rec.nfe, rec.seed, "invalid", static_cast<double>(rec.flags.invalid), flags);
  add(t, id, sampler, rec.nfe, rec.seed, "churn_clamped", static_cast<double>(rec.flags.churn_clamped), flags);
}

void add_divergence_rows(ResultTable& t, const std::string& id, const std::string& sampler, const RunRecord& rec,
                         std::span<const double> p0) {
  const auto d = divergences_from_samples(rec.final_states, p0);
  const auto flags = flags_string(rec.flags);
  add(t, id, sampler, rec.nfe, rec.seed, "kl", d.kl.infinite ? std::numeric_limits<double>::infinity() : d.kl.value,
      flags);
  add(t, id, sampler, rec.nfe, rec.seed, "kl_infinite", d.kl.infinite ? 1.0 : 0.0, flags);
  add(t, id, sampler, rec.nfe, rec.seed, "tv", d.tv, flags);
  add(t, id, sampler, rec.nfe, rec.seed, "w1", d.w1, flags);
}

double normal_cdf(double u) { return 0.5 * std::erfc(-u / std::numbers::sqrt2); }
double normal_pdf(double u) { return std::exp(-0.5 * u * u) / std::sqrt(2.0 * std::numbers::pi); }

// One-dimensional Gaussian mixture with its CDF F and the antiderivatives
// I(z) = int_{-inf}^z F and J(z) = int_z^inf (1 - F).
struct LineMixture {
  std::vector<double> w, mu, sd;

  double cdf(double z) const {
    double f = 0.0;
    for (std::size_t k = 0; k < w.size(); ++k) f += w[k] * normal_cdf((z - mu[k]) / sd[k]);
    return f;
  }
  double pdf(double z) const {
    double f = 0.0;
    for (std::size_t k = 0; k < w.size(); ++k) f += w[k] * normal_pdf((z - mu[k]) / sd[k]) / sd[k];
    return f;
  }
  double lower(double z) const {
    double v = 0.0;
    for (std::size_t k = 0; k < w.size(); ++k) {
      const double u = (z - mu[k]) / sd[k];
      v += w[k] * ((z - mu[k]) * normal_cdf(u) + sd[k] * normal_pdf(u));
    }
    return v;
  }
  double upper(double z) const {
    double v = 0.0;
    for (std::size_t k = 0; k < w.size(); ++k) {
      const double u = (z - mu[k]) / sd[k];
      v += w[k] * (sd[k] * normal_pdf(u) - (z - mu[k]) * normal_cdf(-u));
    }
    return v;
  }
  // F(z) = c for z in (a, b), given F(a) < c < F(b).
  double solve(double c, double a, double b) const {
    double z = 0.5 * (a + b);
    for (int it = 0; it < 200 && b - a > 1e-15 * std::max(1.0, std::abs(z)); ++it) {
      const double f = cdf(z) - c;
      if (f == 0.0) return z;
      if (f < 0.0) a = z;
      else b = z;
      const double d = pdf(z);
      const double next = d > 0.0 ? z - f / d : 0.5 * (a + b);
      z = (next > a && next < b) ? next : 0.5 * (a + b);
    }
    return z;
  }
};

}  // namespace

std::string flags_string(const StepFlags& flags) {
  return "clamp=" + std::to_string(flags.clamp) + ";invalid=" + std::to_string(flags.invalid) +
         ";churn_clamped=" + std::to_string(flags.churn_clamped);
}

// --- 1D benchmark --------------------------------------------------------------

std::vector<std::uint64_t> Experiment1DConfig::default_seeds(int n) {
  std::vector<std::uint64_t> s(static_cast<std::size_t>(std::max(n, 0)));
  std::iota(s.begin(), s.end(), std::uint64_t{1});
  return s;
}

std::vector<std::string> Experiment1DConfig::problems() const {
  std::vector<std::string> out;
  if (experiment_id.empty()) out.push_back("experiment_id must not be empty");
  if (num_states < 2) out.push_back("num_states must be >= 2");
  check(out, "schedule", [&] { schedule.validate(); });
  check(out, "score_mode", [&] { score_mode.validate(); });
  if (samplers.empty()) out.push_back("samplers must not be empty");
  for (const auto& name : samplers) {
    if (name == "dcrs") {
      check(out, "dcrs", [&] {
        if (num_states >= 2) dcrs.validate(ProcessSpec::uniform(num_states, schedule));
      });
    } else {
      check(out, "sampler '" + name + "'", [&] { (void)SamplerChoice::parse(name); });
    }
  }
  check_ladder(out, nfe_ladder, "nfe_ladder");
  check_common(out, samples, seeds, t_stop, rho);
  return out;
}

void Experiment1DConfig::validate() const {
  const auto p = problems();
  if (!p.empty()) throw DomainError("invalid 1D config: " + join(p));
}

Dist draw_p0(int num_states, std::uint64_t seed) {
  Stream rng(seed, 0, 0, Purpose::misc);
  return Dist(dirichlet_ones(num_states, rng));
}

std::optional<DcrsConfig> plain_config_for_rung(const SamplerChoice& sampler, int rung, double t_stop, double rho) {
  const int per = sampler.nfe_per_step();
  if (rung % per != 0) return std::nullopt;
  const int n_main = rung / per - 1;
  if (n_main < 1) return std::nullopt;
  return DcrsConfig::plain(sampler, n_main, t_stop, rho);
}

ResultTable run_1d(const Experiment1DConfig& config, int threads) {
  config.validate();
  ResultTable table;
  const auto spec = ProcessSpec::uniform(config.num_states, config.schedule);
  for (const auto seed : config.seeds) {
    const Dist p0 = draw_p0(config.num_states, seed);
    const ScoreOracle oracle(std::make_shared<ClosedFormModel>(spec, p0), config.score_mode);
    for (const auto& name : config.samplers) {
      for (const int rung : config.nfe_ladder) {
        std::optional<DcrsConfig> cfg;
        if (name == "dcrs")
          cfg = scale_config(config.dcrs, rung);
        else
          cfg = plain_config_for_rung(SamplerChoice::parse(name), rung, config.t_stop, config.rho);
        if (!cfg) {
          add(table, config.experiment_id, name, rung, seed, "unreachable", 1.0,
              "rung " + std::to_string(rung) + " does not fit");
          continue;
        }
        const auto rec = generate(spec, oracle, *cfg, config.samples, seed, threads);
        add_divergence_rows(table, config.experiment_id, name, rec, p0.probs());
        add_flag_rows(table, config.experiment_id, name, rec);
      }
    }
  }
  return table;
}

int plateau_rung(const std::vector<int>& ladder, const std::vector<double>& values, double tolerance) {
  if (ladder.empty() || ladder.size() != values.size()) throw DomainError("plateau_rung: ladder/value mismatch");
  const double limit = (1.0 + tolerance) * values.back();
  std::size_t first = values.size() - 1;
  for (std::size_t i = values.size(); i-- > 0;) {
    if (!(values[i] <= limit)) break;
    first = i;
  }
  return ladder[first];
}

// --- mixture of Gaussians --------------------------------------------------------

unsigned gray_encode(unsigned n) { return n ^ (n >> 1); }

unsigned gray_decode(unsigned g) {
  unsigned n = g;
  for (unsigned shift = 1; shift < 32; shift <<= 1) n ^= n >> shift;
  return n;
}

std::vector<double> GaussianMixture::mean(int m) const {
  std::vector<double> out(static_cast<std::size_t>(dims), 0.0);
  for (int d = 0; d < dims; ++d)
    for (int l = 0; l < latent_dims; ++l) out[d] += loading(d, l) * latent_means[m * latent_dims + l];
  return out;
}

double w1_to_mixture_1d(std::span<const double> points, std::span<const double> weights, const GaussianMixture& mix,
                        std::span<const double> direction) {
  if (points.empty()) throw DomainError("w1_to_mixture_1d: empty point set");
  if (!weights.empty() && weights.size() != points.size()) throw DomainError("w1_to_mixture_1d: weight size mismatch");
  if (static_cast<int>(direction.size()) != mix.dims) throw DomainError("w1_to_mixture_1d: direction size mismatch");

  LineMixture line;
  // Projected covariance is sigma^2 |loading^T u|^2.
  Eigen::VectorXd u = Eigen::Map<const Eigen::VectorXd>(direction.data(), mix.dims);
  const double spread = mix.sigma * (mix.loading.transpose() * u).norm();
  if (!(spread > 0.0)) throw DomainError("w1_to_mixture_1d: degenerate projection");
  const double wsum = std::accumulate(mix.weights.begin(), mix.weights.end(), 0.0);
  for (int m = 0; m < mix.modes(); ++m) {
    const auto mu = mix.mean(m);
    double p = 0.0;
    for (int d = 0; d < mix.dims; ++d) p += direction[d] * mu[d];
    line.w.push_back(mix.weights[m] / wsum);
    line.mu.push_back(p);
    line.sd.push_back(spread);
  }

  std::vector<std::size_t> order(points.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return points[a] < points[b]; });
  double total = 0.0;
  for (std::size_t i = 0; i < points.size(); ++i) total += weights.empty() ? 1.0 : weights[i];
  if (!(total > 0.0)) throw DomainError("w1_to_mixture_1d: weights sum to zero");

  double w1 = line.lower(points[order.front()]);
  double c = 0.0;
  for (std::size_t i = 0; i + 1 < order.size(); ++i) {
    c += (weights.empty() ? 1.0 : weights[order[i]]) / total;
    const double a = points[order[i]], b = points[order[i + 1]];
    if (!(b > a)) continue;
    const double fa = line.cdf(a), fb = line.cdf(b);
    const double ia = line.lower(a), ib = line.lower(b);
    if (fb <= c) {
      w1 += c * (b - a) - (ib - ia);
    } else if (fa >= c) {
      w1 += (ib - ia) - c * (b - a);
    } else {
      const double z = line.solve(c, a, b);
      const double iz = line.lower(z);
      w1 += c * (z - a) - (iz - ia) + (ib - iz) - c * (b - z);
    }
  }
  return w1 + line.upper(points[order.back()]);
}

double sliced_w1_to_mixture(const PointCloud& cloud, const GaussianMixture& mix, int projections, std::uint64_t seed) {
  if (cloud.dims != mix.dims) throw DomainError("sliced_w1_to_mixture: dimension mismatch");
  if (projections < 1) throw DomainError("sliced_w1_to_mixture: need at least one projection");
  std::vector<double> per(static_cast<std::size_t>(projections), 0.0);
  tbb::parallel_for(0, projections, [&](int j) {
    const auto dir = sliced_direction(cloud.dims, j, seed);
    per[j] = w1_to_mixture_1d(project(cloud, dir), cloud.weights, mix, dir);
  });
  return std::accumulate(per.begin(), per.end(), 0.0) / projections;
}

DcrsConfig MoGConfig::default_dcrs() {
  DcrsConfig c;
  c.outer = SamplerChoice::parse("nu:0.01");
  c.inner = SamplerChoice::parse("dpf");
  c.n_main = 7;
  c.rho = 7.0;
  RestartWindow w;
  w.t_min = 0.01;
  w.t_max = 0.05;
  w.n_restart = 8;
  w.k_iterations = 1;
  w.use_trapezoidal = false;
  w.gamma = 0.0;
  c.windows = {w};
  return c;
}

std::vector<std::string> MoGConfig::problems() const {
  std::vector<std::string> out;
  if (experiment_id.empty()) out.push_back("experiment_id must not be empty");
  if (modes < 1) out.push_back("modes must be >= 1");
  if (!(radius >= 0.0) || !std::isfinite(radius)) out.push_back("radius must be finite and >= 0");
  if (!(sigma > 0.0) || !std::isfinite(sigma)) out.push_back("sigma must be finite and > 0");
  if (bits_per_coordinate < 1 || bits_per_coordinate > 30) out.push_back("bits_per_coordinate must lie in [1, 30]");
  if (dims != 2) out.push_back("dims must be 2 (modes lie on a circle)");
  if (projection_dims < 0) out.push_back("projection_dims must be >= 0");
  if (!(range > 0.0) || !std::isfinite(range)) out.push_back("range must be finite and > 0");
  check(out, "train_schedule", [&] { train_schedule.validate(); });
  check(out, "inference_schedule", [&] { inference_schedule.validate(); });
  if (samplers.empty()) out.push_back("samplers must not be empty");
  for (const auto& name : samplers) {
    if (name == "dcrs") {
      check(out, "dcrs", [&] {
        if (!dcrs.outer.rate_driven() || dcrs.outer.nfe_per_step() != 1)
          throw DomainError("outer sampler must take one evaluation per step");
        if (dcrs.windows.empty()) throw DomainError("needs at least one restart window");
        for (const auto& w : dcrs.windows)
          if (w.use_trapezoidal) throw DomainError("windows must use the inner sampler");
      });
    } else {
      check(out, "sampler '" + name + "'", [&] { (void)SamplerChoice::parse(name); });
    }
  }
  check_ladder(out, nfe_ladder, "nfe_ladder");
  check_common(out, samples, seeds, t_stop, rho);
  return out;
}

void MoGConfig::validate() const {
  const auto p = problems();
  if (!p.empty()) throw DomainError("invalid MoG config: " + join(p));
}

std::optional<DcrsConfig> dcrs_config_for_rung(const DcrsConfig& base, int rung) {
  int per_point = base.outer.nfe_per_step();
  const int inner = base.inner.nfe_per_step();
  for (const auto& w : base.windows) per_point += w.k_iterations * (w.use_trapezoidal ? 2 : inner);
  if (rung % per_point != 0) return std::nullopt;
  const int points = rung / per_point;
  if (points < 2) return std::nullopt;
  DcrsConfig c = base;
  c.n_main = points - 1;
  for (auto& w : c.windows) w.n_restart = points;
  return c;
}

MoGProblem build_mog(const MoGConfig& config) {
  config.validate();
  const bool masking = config.process == StationaryKind::masking;
  const int D = config.data_dims();
  const int bits = config.bits_per_coordinate;
  const int binary = config.binary_dims();
  if (binary > kMaxMogBits)
    throw DomainError("MoG joint has 2^" + std::to_string(binary) + " cells; the exact oracle allows 2^" +
                      std::to_string(kMaxMogBits) + ". Reduce bits_per_coordinate to " +
                      std::to_string(std::max(1, kMaxMogBits / D)) + " or fewer, or projection_dims; larger " +
                      "settings need a learned score model");
  if (masking) {
    double size = std::pow(3.0, binary);
    if (size > static_cast<double>(EnumeratedModel::kMaxJointStates))
      throw DomainError("masking MoG enumerates 3^" + std::to_string(binary) +
                        " states, above the model cap; use at most 12 binary coordinates");
  }

  MoGProblem pb;
  pb.config = config;
  auto& mix = pb.mixture;
  mix.latent_dims = 2;
  mix.dims = D;
  mix.sigma = config.sigma;
  for (int m = 0; m < config.modes; ++m) {
    const double a = 2.0 * std::numbers::pi * m / config.modes;
    mix.latent_means.push_back(config.radius * std::cos(a));
    mix.latent_means.push_back(config.radius * std::sin(a));
    mix.weights.push_back(1.0 / config.modes);
  }
  if (config.projection_dims > 0) {
    mix.loading.resize(D, 2);
    Stream rng(config.projection_seed, 0, 0, Purpose::misc);
    for (int l = 0; l < 2; ++l) {
      for (int d = 0; d < D; ++d) {
        const double u1 = 1.0 - rng.uniform();
        const double u2 = rng.uniform();
        mix.loading(d, l) = std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
      }
      mix.loading.col(l).normalize();
    }
  } else {
    mix.loading = Eigen::MatrixXd::Identity(2, 2);
  }

  const long L = 1L << bits;
  const double h = 2.0 * config.range / static_cast<double>(L);
  std::size_t cells = 1;
  for (int d = 0; d < D; ++d) cells *= static_cast<std::size_t>(L);
  pb.cell_probs.assign(cells, 0.0);
  pb.cell_centres.assign(cells * static_cast<std::size_t>(D), 0.0);
  for (std::size_t c = 0; c < cells; ++c) {
    std::size_t rest = c;
    for (int d = 0; d < D; ++d) {
      const long level = static_cast<long>(rest % static_cast<std::size_t>(L));
      rest /= static_cast<std::size_t>(L);
      pb.cell_centres[c * D + d] = -config.range + (static_cast<double>(level) + 0.5) * h;
    }
  }

  if (config.projection_dims == 0) {
    // Product of per-axis interval masses; edge cells take the tails.
    std::vector<double> axis(static_cast<std::size_t>(config.modes * D * L));
    for (int m = 0; m < config.modes; ++m)
      for (int d = 0; d < D; ++d) {
        double prev = 0.0;
        for (long k = 0; k < L; ++k) {
          const double edge = -config.range + static_cast<double>(k + 1) * h;
          const double next = k + 1 == L ? 1.0 : normal_cdf((edge - mix.latent_means[m * 2 + d]) / mix.sigma);
          axis[(static_cast<std::size_t>(m) * D + d) * L + k] = next - prev;
          prev = next;
        }
      }
    for (std::size_t c = 0; c < cells; ++c) {
      double p = 0.0;
      for (int m = 0; m < config.modes; ++m) {
        double term = mix.weights[m];
        std::size_t rest = c;
        for (int d = 0; d < D; ++d) {
          term *= axis[(static_cast<std::size_t>(m) * D + d) * L + static_cast<long>(rest % L)];
          rest /= static_cast<std::size_t>(L);
        }
        p += term;
      }
      pb.cell_probs[c] = p;
    }
  } else {
    // Midpoint quadrature over the latent plane.
    constexpr int kGrid = 1024;
    const double half = config.radius + 8.0 * config.sigma;
    const double dz = 2.0 * half / kGrid;
    const double norm = 1.0 / (2.0 * std::numbers::pi * config.sigma * config.sigma);
    for (int i = 0; i < kGrid; ++i)
      for (int j = 0; j < kGrid; ++j) {
        const double z0 = -half + (i + 0.5) * dz, z1 = -half + (j + 0.5) * dz;
        double dens = 0.0;
        for (int m = 0; m < config.modes; ++m) {
          const double a = z0 - mix.latent_means[m * 2], b = z1 - mix.latent_means[m * 2 + 1];
          dens += mix.weights[m] * norm * std::exp(-0.5 * (a * a + b * b) / (config.sigma * config.sigma));
        }
        std::size_t c = 0, stride = 1;
        for (int d = 0; d < D; ++d) {
          const double x = mix.loading(d, 0) * z0 + mix.loading(d, 1) * z1;
          const long level = std::clamp(static_cast<long>(std::floor((x + config.range) / h)), 0L, L - 1);
          c += static_cast<std::size_t>(level) * stride;
          stride *= static_cast<std::size_t>(L);
        }
        pb.cell_probs[c] += dens * dz * dz;
      }
    const double total = std::accumulate(pb.cell_probs.begin(), pb.cell_probs.end(), 0.0);
    for (auto& p : pb.cell_probs) p /= total;
  }

  const int S = masking ? 3 : 2;
  pb.inference_spec = masking ? ProcessSpec::masking(3, config.inference_schedule, 2)
                              : ProcessSpec::uniform(2, config.inference_schedule);
  pb.oracle_spec = pb.inference_spec;
  if (config.mismatch) pb.oracle_spec.schedule = config.train_schedule;

  std::size_t joint_size = 1;
  for (int k = 0; k < binary; ++k) joint_size *= static_cast<std::size_t>(S);
  pb.joint.assign(joint_size, 0.0);
  for (std::size_t c = 0; c < cells; ++c) {
    std::size_t rest = c, idx = 0;
    for (int d = 0; d < D; ++d) {
      const auto level = static_cast<unsigned>(rest % static_cast<std::size_t>(L));
      rest /= static_cast<std::size_t>(L);
      const unsigned code = config.gray_code ? gray_encode(level) : level;
      for (int j = 0; j < bits; ++j) {
        const unsigned bit = (code >> (bits - 1 - j)) & 1U;
        std::size_t place = 1;
        for (int k = 0; k < d * bits + j; ++k) place *= static_cast<std::size_t>(S);
        idx += bit * place;
      }
    }
    pb.joint[idx] = pb.cell_probs[c];
  }

  PointCloud law{D, pb.cell_centres, pb.cell_probs};
  pb.quantization_floor = sliced_w1_to_mixture(law, mix);
  return pb;
}

long cell_of_state(const MoGProblem& problem, std::span<const int> x) {
  const auto& cfg = problem.config;
  const int bits = cfg.bits_per_coordinate;
  const long L = 1L << bits;
  if (static_cast<int>(x.size()) != cfg.binary_dims()) throw DomainError("cell_of_state: wrong state length");
  long cell = 0, stride = 1;
  for (int d = 0; d < cfg.data_dims(); ++d) {
    unsigned code = 0;
    for (int j = 0; j < bits; ++j) {
      const int b = x[d * bits + j];
      if (b != 0 && b != 1) return -1;
      code = (code << 1) | static_cast<unsigned>(b);
    }
    const unsigned level = cfg.gray_code ? gray_decode(code) : code;
    cell += static_cast<long>(level) * stride;
    stride *= L;
  }
  return cell;
}

ResultTable run_mog(const MoGConfig& config, int threads) {
  const MoGProblem pb = build_mog(config);
  const auto& id = config.experiment_id;
  const int D = config.data_dims();
  const ScoreOracle oracle(std::make_shared<EnumeratedModel>(pb.oracle_spec, config.binary_dims(), pb.joint));
  ResultTable table;
  add(table, id, "reference", 0, 0, "quantization_floor", pb.quantization_floor,
      "projections=" + std::to_string(kSlicedProjections));

  // Nearest mode of every cell centre, in data space.
  std::vector<int> mode_of(pb.cell_probs.size(), 0);
  std::vector<std::vector<double>> means;
  for (int m = 0; m < pb.mixture.modes(); ++m) means.push_back(pb.mixture.mean(m));
  for (std::size_t c = 0; c < mode_of.size(); ++c) {
    double best = std::numeric_limits<double>::infinity();
    for (int m = 0; m < pb.mixture.modes(); ++m) {
      double d2 = 0.0;
      for (int d = 0; d < D; ++d) {
        const double e = pb.cell_centres[c * D + d] - means[m][d];
        d2 += e * e;
      }
      if (d2 < best) {
        best = d2;
        mode_of[c] = m;
      }
    }
  }

  for (const auto seed : config.seeds) {
    for (const auto& name : config.samplers) {
      for (const int rung : config.nfe_ladder) {
        const auto cfg = name == "dcrs" ? dcrs_config_for_rung(config.dcrs, rung)
                                        : plain_config_for_rung(SamplerChoice::parse(name), rung, config.t_stop,
                                                                config.rho);
        if (!cfg) {
          add(table, id, name, rung, seed, "unreachable", 1.0, "rung " + std::to_string(rung) + " does not fit");
          continue;
        }
        const auto rec = generate(pb.inference_spec, oracle, *cfg, config.samples, seed, threads);
        std::vector<double> counts(pb.cell_probs.size(), 0.0);
        std::int64_t masked = 0;
        for (std::int64_t c = 0; c < rec.n_chains; ++c) {
          const long cell = cell_of_state(pb, rec.chain(c));
          if (cell < 0) ++masked;
          else counts[static_cast<std::size_t>(cell)] += 1.0;
        }
        PointCloud cloud;
        cloud.dims = D;
        std::vector<double> occupancy(static_cast<std::size_t>(pb.mixture.modes()), 0.0);
        const double resolved = static_cast<double>(rec.n_chains - masked);
        for (std::size_t c = 0; c < counts.size(); ++c) {
          if (counts[c] == 0.0) continue;
          cloud.coords.insert(cloud.coords.end(), pb.cell_centres.begin() + static_cast<long>(c * D),
                              pb.cell_centres.begin() + static_cast<long>((c + 1) * D));
          cloud.weights.push_back(counts[c]);
          occupancy[static_cast<std::size_t>(mode_of[c])] += counts[c] / resolved;
        }
        const auto flags = flags_string(rec.flags);
        const double w1 = cloud.size() > 0 ? sliced_w1_to_mixture(cloud, pb.mixture)
                                           : std::numeric_limits<double>::quiet_NaN();
        add(table, id, name, rec.nfe, seed, "sliced_w1", w1, flags);
        int covered = 0;
        for (int m = 0; m < pb.mixture.modes(); ++m) {
          add(table, id, name, rec.nfe, seed, "occupancy_" + std::to_string(m), occupancy[m], flags);
          if (occupancy[m] >= 0.5 * pb.mixture.weights[m]) ++covered;
        }
        add(table, id, name, rec.nfe, seed, "modes_covered", covered, flags);
        add(table, id, name, rec.nfe, seed, "masked_fraction",
            static_cast<double>(masked) / static_cast<double>(rec.n_chains), flags);
        add_flag_rows(table, id, name, rec);
      }
    }
  }
  return table;
}

// --- single runs and sweeps -------------------------------------------------------

void SampleConfig::validate() const {
  std::vector<std::string> out;
  if (experiment_id.empty()) out.push_back("experiment_id must not be empty");
  check(out, "process", [&] { process.validate(); });
  check(out, "score_mode", [&] { score_mode.validate(); });
  if (!p0.empty()) {
    if (static_cast<int>(p0.size()) != process.num_states) out.push_back("p0 size does not match num_states");
    else if (!Dist::is_valid(p0, 1e-9)) out.push_back("p0 is not a distribution");
  }
  check(out, "sampler", [&] { sampler.validate(process); });
  if (chains < 1) out.push_back("chains must be >= 1");
  check_ladder(out, nfe_targets, "nfe_targets");
  if (!out.empty()) throw DomainError("invalid sample config: " + join(out));
}

namespace {

Dist sample_p0(const SampleConfig& config, std::uint64_t seed) {
  if (config.p0.empty()) {
    if (config.process.is_masking()) {
      // No mass on the mask state.
      auto p = draw_p0(config.process.num_states - 1, seed).vec();
      p.insert(p.begin() + config.process.mask_index, 0.0);
      return Dist(std::move(p));
    }
    return draw_p0(config.process.num_states, seed);
  }
  std::vector<double> p = config.p0;
  const double total = std::accumulate(p.begin(), p.end(), 0.0);
  for (auto& v : p) v /= total;
  return Dist(std::move(p));
}

}  // namespace

ResultTable run_sample(const SampleConfig& config, std::uint64_t seed, int threads) {
  config.validate();
  const Dist p0 = sample_p0(config, seed);
  const ScoreOracle oracle(std::make_shared<ClosedFormModel>(config.process, p0), config.score_mode);
  const auto rec = generate(config.process, oracle, config.sampler, config.chains, seed, threads);
  ResultTable table;
  const auto name = sampler_label(config.sampler);
  add_divergence_rows(table, config.experiment_id, name, rec, p0.probs());
  add_flag_rows(table, config.experiment_id, name, rec);
  return table;
}

ResultTable run_sweep(const SampleConfig& config, std::uint64_t seed, int threads) {
  config.validate();
  const Dist p0 = sample_p0(config, seed);
  const ScoreOracle oracle(std::make_shared<ClosedFormModel>(config.process, p0), config.score_mode);
  const auto rows = sweep(config.process, oracle, config.sampler, config.nfe_targets, config.chains, seed, threads);
  ResultTable table;
  const auto name = sampler_label(config.sampler);
  for (const auto& row : rows) {
    if (!row.record) {
      add(table, config.experiment_id, name, row.target, seed, "warning", std::numeric_limits<double>::quiet_NaN(),
          row.warning);
      continue;
    }
    const auto& rec = *row.record;
    add(table, config.experiment_id, name, rec.nfe, seed, "target", row.target, flags_string(rec.flags));
    add_divergence_rows(table, config.experiment_id, name, rec, p0.probs());
    add_flag_rows(table, config.experiment_id, name, rec);
  }
  return table;
}

RestartTrend run_restart_trend(const RestartTrendConfig& config, int threads) {
  if (config.max_k < 1) throw DomainError("restart trend needs max_k >= 1");
  if (config.seeds.empty()) throw DomainError("restart trend needs at least one seed");
  const auto spec = ProcessSpec::uniform(config.num_states, config.schedule);
  RestartTrend out;
  out.kl.assign(static_cast<std::size_t>(config.max_k + 1), {});
  out.nfe.assign(out.kl.size(), 0);
  for (const auto seed : config.seeds) {
    const auto p0 = draw_p0(config.num_states, seed);
    const ScoreOracle oracle(std::make_shared<ClosedFormModel>(spec, p0), OracleMode::perturbed());
    for (int k = 0; k <= config.max_k; ++k) {
      auto cfg = DcrsConfig::plain(config.outer, config.n_main, config.t_stop, config.rho);
      cfg.inner = config.inner;
      cfg.windows = {config.window};
      cfg.windows[0].k_iterations = k;
      const auto rec = generate(spec, oracle, cfg, config.samples, seed, threads);
      out.kl[k].push_back(divergences_from_samples(rec.final_states, p0.probs()).kl.value);
      out.nfe[k] = rec.nfe;
    }
  }
  for (const auto& v : out.kl) out.mean_kl.push_back(mean(v));
  out.first_restart = sign_test(out.kl[1], out.kl[0]);
  for (std::size_t k = 0; k + 1 < out.mean_kl.size(); ++k)
    if (out.mean_kl[k + 1] > out.mean_kl[k]) out.non_monotone = true;
  return out;
}

}  // namespace ctmc
