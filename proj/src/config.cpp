#include "ctmc/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

namespace ctmc {

namespace {

const char* type_name(const Json& j) { return j.type_name(); }

// Strict view of one JSON object.
class Reader {
 public:
  Reader(const Json& j, std::string what, std::initializer_list<const char*> keys) : j_(j), what_(std::move(what)) {
    if (!j.is_object()) throw ConfigError(what_ + ": expected an object, got " + type_name(j));
    const std::set<std::string> allowed(keys.begin(), keys.end());
    for (const auto& item : j.items())
      if (!allowed.count(item.key())) {
        std::string list;
        for (const auto& k : allowed) list += (list.empty() ? "" : ", ") + k;
        throw ConfigError(what_ + ": unknown key '" + item.key() + "' (allowed: " + list + ")");
      }
  }

  bool has(const char* key) const { return j_.contains(key); }

  void get(const char* key, double& out) const {
    if (!has(key)) return;
    const auto& v = j_.at(key);
    if (!v.is_number()) fail(key, "a number", v);
    out = v.get<double>();
  }
  void get(const char* key, int& out) const {
    if (!has(key)) return;
    const auto& v = j_.at(key);
    if (!v.is_number_integer()) fail(key, "an integer", v);
    const auto x = v.get<std::int64_t>();
    if (x < std::numeric_limits<int>::min() || x > std::numeric_limits<int>::max()) fail(key, "an int", v);
    out = static_cast<int>(x);
  }
  void get(const char* key, std::int64_t& out) const {
    if (!has(key)) return;
    const auto& v = j_.at(key);
    if (!v.is_number_integer()) fail(key, "an integer", v);
    out = v.get<std::int64_t>();
  }
  void get(const char* key, std::uint64_t& out) const {
    if (!has(key)) return;
    const auto& v = j_.at(key);
    if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0))
      fail(key, "a non-negative integer", v);
    out = v.get<std::uint64_t>();
  }
  void get(const char* key, bool& out) const {
    if (!has(key)) return;
    const auto& v = j_.at(key);
    if (!v.is_boolean()) fail(key, "a boolean", v);
    out = v.get<bool>();
  }
  void get(const char* key, std::string& out) const {
    if (!has(key)) return;
    const auto& v = j_.at(key);
    if (!v.is_string()) fail(key, "a string", v);
    out = v.get<std::string>();
  }
  template <class T>
  void get(const char* key, std::vector<T>& out) const {
    if (!has(key)) return;
    const auto& v = j_.at(key);
    if (!v.is_array()) fail(key, "an array", v);
    std::vector<T> result;
    for (std::size_t i = 0; i < v.size(); ++i) {
      Json wrapper = Json::object();
      wrapper["item"] = v[i];
      T item{};
      Reader(wrapper, path(key) + "[" + std::to_string(i) + "]", {"item"}).get_as("item", item);
      result.push_back(std::move(item));
    }
    out = std::move(result);
  }
  template <class T>
  void get(const char* key, T& out) const {
    if (!has(key)) return;
    nested(key, out);
  }

 private:
  template <class T>
  void get_as(const char* key, T& out) const {
    if constexpr (std::is_same_v<T, double> || std::is_same_v<T, int> || std::is_same_v<T, std::int64_t> ||
                  std::is_same_v<T, std::uint64_t> || std::is_same_v<T, bool> || std::is_same_v<T, std::string>) {
      Reader(j_, what_, {key}).get(key, out);
    } else {
      nested(key, out);
    }
  }

  template <class T>
  void nested(const char* key, T& out) const {
    try {
      out = j_.at(key).template get<T>();
    } catch (const ConfigError& e) {
      throw ConfigError(path(key) + ": " + e.what());
    } catch (const std::exception& e) {
      throw ConfigError(path(key) + ": " + e.what());
    }
  }

  std::string path(const char* key) const { return what_ + "." + key; }

  [[noreturn]] void fail(const char* key, const char* expected, const Json& v) const {
    throw ConfigError(path(key) + ": expected " + expected + ", got " + v.dump());
  }

  const Json& j_;
  std::string what_;
};

StationaryKind stationary_from(const std::string& s) {
  if (s == "uniform") return StationaryKind::uniform;
  if (s == "masking") return StationaryKind::masking;
  throw ConfigError("unknown stationary kind '" + s + "' (uniform, masking)");
}

std::string stationary_name(StationaryKind k) { return k == StationaryKind::uniform ? "uniform" : "masking"; }

std::string step_name(StepKind k) {
  switch (k) {
    case StepKind::euler: return "euler";
    case StepKind::tau_leap: return "tau_leap";
    case StepKind::trapezoidal: return "trapezoidal";
    case StepKind::d3pm: return "d3pm";
    case StepKind::ddim: return "ddim";
  }
  return "tau_leap";
}

StepKind step_from(const std::string& s) {
  for (auto k : {StepKind::euler, StepKind::tau_leap, StepKind::trapezoidal, StepKind::d3pm, StepKind::ddim})
    if (step_name(k) == s) return k;
  throw ConfigError("unknown step kind '" + s + "' (euler, tau_leap, trapezoidal, d3pm, ddim)");
}

std::string rate_name(RateKind k) {
  switch (k) {
    case RateKind::reverse: return "reverse";
    case RateKind::dpf: return "dpf";
    case RateKind::nu: return "nu";
  }
  return "dpf";
}

RateKind rate_from(const std::string& s) {
  for (auto k : {RateKind::reverse, RateKind::dpf, RateKind::nu})
    if (rate_name(k) == s) return k;
  throw ConfigError("unknown rate kind '" + s + "' (reverse, dpf, nu)");
}

std::string nu_kind_name(StochasticitySchedule::Kind k) {
  switch (k) {
    case StochasticitySchedule::Kind::constant: return "constant";
    case StochasticitySchedule::Kind::piecewise: return "piecewise";
    case StochasticitySchedule::Kind::max_contraction: return "max_contraction";
  }
  return "constant";
}

StochasticitySchedule::Kind nu_kind_from(const std::string& s) {
  using K = StochasticitySchedule::Kind;
  for (auto k : {K::constant, K::piecewise, K::max_contraction})
    if (nu_kind_name(k) == s) return k;
  throw ConfigError("unknown nu schedule kind '" + s + "' (constant, piecewise, max_contraction)");
}

struct NuPiece {
  double lo = 0.0, hi = 0.0, nu = 0.0;
};

void to_json(Json& j, const NuPiece& p) { j = Json{{"lo", p.lo}, {"hi", p.hi}, {"nu", p.nu}}; }
void from_json(const Json& j, NuPiece& p) {
  Reader r(j, "piece", {"lo", "hi", "nu"});
  r.get("lo", p.lo);
  r.get("hi", p.hi);
  r.get("nu", p.nu);
}

Json nu_json(const StochasticitySchedule& s) {
  Json j{{"kind", nu_kind_name(s.kind)}, {"nu", s.nu}};
  Json pieces = Json::array();
  for (const auto& p : s.pieces) pieces.push_back(NuPiece{p.lo, p.hi, p.nu});
  j["pieces"] = pieces;
  return j;
}

StochasticitySchedule nu_from(const Json& j) {
  Reader r(j, "nu", {"kind", "nu", "pieces"});
  StochasticitySchedule s;
  std::string kind = "constant";
  r.get("kind", kind);
  s.kind = nu_kind_from(kind);
  r.get("nu", s.nu);
  std::vector<NuPiece> pieces;
  r.get("pieces", pieces);
  for (const auto& p : pieces) s.pieces.push_back({p.lo, p.hi, p.nu});
  return s;
}

}  // namespace

// ---------------------------------------------------------------------------

void to_json(Json& j, const NoiseSchedule& v) {
  j = Json{{"kind", to_string(v.kind)}, {"a", v.a}, {"b", v.b}, {"epsilon", v.epsilon}};
}

void from_json(const Json& j, NoiseSchedule& v) {
  Reader r(j, "schedule", {"kind", "a", "b", "epsilon"});
  if (!r.has("kind")) throw ConfigError("schedule: missing 'kind'");
  std::string kind;
  r.get("kind", kind);
  ScheduleKind k;
  try {
    k = schedule_kind_from_string(kind);
  } catch (const std::exception& e) {
    throw ConfigError(std::string("schedule: ") + e.what());
  }
  switch (k) {
    case ScheduleKind::linear: v = NoiseSchedule::linear(); break;
    case ScheduleKind::geometric: v = NoiseSchedule::geometric(); break;
    case ScheduleKind::loglinear: v = NoiseSchedule::loglinear(); break;
  }
  r.get("a", v.a);
  r.get("b", v.b);
  r.get("epsilon", v.epsilon);
}

void to_json(Json& j, const ProcessSpec& v) {
  j = Json{{"num_states", v.num_states},
           {"stationary", stationary_name(v.stationary)},
           {"mask_index", v.mask_index},
           {"schedule", v.schedule}};
}

void from_json(const Json& j, ProcessSpec& v) {
  Reader r(j, "process", {"num_states", "stationary", "mask_index", "schedule"});
  ProcessSpec out;
  r.get("num_states", out.num_states);
  std::string stationary = stationary_name(out.stationary);
  r.get("stationary", stationary);
  out.stationary = stationary_from(stationary);
  r.get("schedule", out.schedule);
  if (out.stationary == StationaryKind::masking) {
    out.mask_index = out.num_states - 1;
    r.get("mask_index", out.mask_index);
  } else {
    r.get("mask_index", out.mask_index);
    if (out.mask_index != -1) throw ConfigError("process: mask_index is only meaningful for masking processes");
  }
  v = out;
}

void to_json(Json& j, const OracleMode& v) {
  j = Json{{"kind", to_string(v.kind)}, {"t_lo", v.t_lo}, {"t_hi", v.t_hi}, {"tau", v.tau}};
}

void from_json(const Json& j, OracleMode& v) {
  Reader r(j, "score_mode", {"kind", "t_lo", "t_hi", "tau"});
  OracleMode out;
  std::string kind = "exact";
  r.get("kind", kind);
  if (kind == "exact") out.kind = OracleMode::Kind::exact;
  else if (kind == "perturbed") out.kind = OracleMode::Kind::perturbed;
  else if (kind == "temperature") out.kind = OracleMode::Kind::temperature;
  else throw ConfigError("score_mode: unknown kind '" + kind + "' (exact, perturbed, temperature)");
  r.get("t_lo", out.t_lo);
  r.get("t_hi", out.t_hi);
  r.get("tau", out.tau);
  v = out;
}

void to_json(Json& j, const SamplerChoice& v) {
  const auto name = v.name();
  if (name != "custom") {
    try {
      if (SamplerChoice::parse(name) == v) {
        j = name;
        return;
      }
    } catch (const DomainError&) {
    }
  }
  j = Json{{"step", step_name(v.step)}, {"rate", rate_name(v.rate.kind)}, {"nu", nu_json(v.rate.nu)}, {"theta", v.theta}};
}

void from_json(const Json& j, SamplerChoice& v) {
  if (j.is_string()) {
    v = SamplerChoice::parse(j.get<std::string>());
    return;
  }
  Reader r(j, "sampler", {"step", "rate", "nu", "theta"});
  SamplerChoice out;
  std::string step = step_name(out.step), rate = rate_name(out.rate.kind);
  r.get("step", step);
  r.get("rate", rate);
  out.step = step_from(step);
  out.rate.kind = rate_from(rate);
  if (r.has("nu")) out.rate.nu = nu_from(j.at("nu"));
  r.get("theta", out.theta);
  out.validate();
  v = out;
}

void to_json(Json& j, const RestartWindow& v) {
  j = Json{{"t_min", v.t_min},           {"t_max", v.t_max},
           {"n_restart", v.n_restart},   {"k_iterations", v.k_iterations},
           {"use_trapezoidal", v.use_trapezoidal}, {"gamma", v.gamma}};
}

void from_json(const Json& j, RestartWindow& v) {
  Reader r(j, "window", {"t_min", "t_max", "n_restart", "k_iterations", "use_trapezoidal", "gamma"});
  RestartWindow out;
  r.get("t_min", out.t_min);
  r.get("t_max", out.t_max);
  r.get("n_restart", out.n_restart);
  r.get("k_iterations", out.k_iterations);
  r.get("use_trapezoidal", out.use_trapezoidal);
  r.get("gamma", out.gamma);
  v = out;
}

void to_json(Json& j, const DcrsConfig& v) {
  j = Json{{"t_stop", v.t_stop}, {"rho", v.rho},     {"n_main", v.n_main},          {"windows", v.windows},
           {"outer", v.outer},   {"inner", v.inner}, {"final_step", v.final_step}};
}

void from_json(const Json& j, DcrsConfig& v) {
  Reader r(j, "dcrs", {"t_stop", "rho", "n_main", "windows", "outer", "inner", "final_step"});
  DcrsConfig out;
  r.get("t_stop", out.t_stop);
  r.get("rho", out.rho);
  r.get("n_main", out.n_main);
  r.get("windows", out.windows);
  r.get("outer", out.outer);
  r.get("inner", out.inner);
  r.get("final_step", out.final_step);
  v = out;
}

void to_json(Json& j, const Experiment1DConfig& v) {
  j = Json{{"experiment_id", v.experiment_id},
           {"num_states", v.num_states},
           {"schedule", v.schedule},
           {"samplers", v.samplers},
           {"nfe_ladder", v.nfe_ladder},
           {"score_mode", v.score_mode},
           {"samples", v.samples},
           {"seeds", v.seeds},
           {"t_stop", v.t_stop},
           {"rho", v.rho},
           {"dcrs", v.dcrs}};
}

void from_json(const Json& j, Experiment1DConfig& v) {
  Reader r(j, "exp1d", {"experiment_id", "num_states", "schedule", "samplers", "nfe_ladder", "score_mode", "samples",
                        "seeds", "t_stop", "rho", "dcrs"});
  Experiment1DConfig out;
  r.get("experiment_id", out.experiment_id);
  r.get("num_states", out.num_states);
  r.get("schedule", out.schedule);
  r.get("samplers", out.samplers);
  r.get("nfe_ladder", out.nfe_ladder);
  r.get("score_mode", out.score_mode);
  r.get("samples", out.samples);
  r.get("seeds", out.seeds);
  r.get("t_stop", out.t_stop);
  r.get("rho", out.rho);
  r.get("dcrs", out.dcrs);
  v = out;
}

void to_json(Json& j, const MoGConfig& v) {
  j = Json{{"experiment_id", v.experiment_id},
           {"modes", v.modes},
           {"radius", v.radius},
           {"sigma", v.sigma},
           {"bits_per_coordinate", v.bits_per_coordinate},
           {"gray_code", v.gray_code},
           {"dims", v.dims},
           {"projection_dims", v.projection_dims},
           {"projection_seed", v.projection_seed},
           {"range", v.range},
           {"process", stationary_name(v.process)},
           {"train_schedule", v.train_schedule},
           {"inference_schedule", v.inference_schedule},
           {"mismatch", v.mismatch},
           {"samplers", v.samplers},
           {"nfe_ladder", v.nfe_ladder},
           {"samples", v.samples},
           {"seeds", v.seeds},
           {"t_stop", v.t_stop},
           {"rho", v.rho},
           {"dcrs", v.dcrs}};
}

void from_json(const Json& j, MoGConfig& v) {
  Reader r(j, "mog",
           {"experiment_id", "modes", "radius", "sigma", "bits_per_coordinate", "gray_code", "dims", "projection_dims",
            "projection_seed", "range", "process", "train_schedule", "inference_schedule", "mismatch", "samplers",
            "nfe_ladder", "samples", "seeds", "t_stop", "rho", "dcrs"});
  MoGConfig out;
  r.get("experiment_id", out.experiment_id);
  r.get("modes", out.modes);
  r.get("radius", out.radius);
  r.get("sigma", out.sigma);
  r.get("bits_per_coordinate", out.bits_per_coordinate);
  r.get("gray_code", out.gray_code);
  r.get("dims", out.dims);
  r.get("projection_dims", out.projection_dims);
  r.get("projection_seed", out.projection_seed);
  r.get("range", out.range);
  std::string process = stationary_name(out.process);
  r.get("process", process);
  out.process = stationary_from(process);
  r.get("train_schedule", out.train_schedule);
  r.get("inference_schedule", out.inference_schedule);
  r.get("mismatch", out.mismatch);
  r.get("samplers", out.samplers);
  r.get("nfe_ladder", out.nfe_ladder);
  r.get("samples", out.samples);
  r.get("seeds", out.seeds);
  r.get("t_stop", out.t_stop);
  r.get("rho", out.rho);
  r.get("dcrs", out.dcrs);
  v = out;
}

void to_json(Json& j, const SampleConfig& v) {
  j = Json{{"experiment_id", v.experiment_id}, {"process", v.process}, {"p0", v.p0},
           {"score_mode", v.score_mode},       {"sampler", v.sampler}, {"chains", v.chains},
           {"nfe_targets", v.nfe_targets}};
}

void from_json(const Json& j, SampleConfig& v) {
  Reader r(j, "sample", {"experiment_id", "process", "p0", "score_mode", "sampler", "chains", "nfe_targets"});
  SampleConfig out;
  r.get("experiment_id", out.experiment_id);
  r.get("process", out.process);
  r.get("p0", out.p0);
  r.get("score_mode", out.score_mode);
  r.get("sampler", out.sampler);
  r.get("chains", out.chains);
  r.get("nfe_targets", out.nfe_targets);
  v = out;
}

std::string read_text_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot read config file '" + path + "'");
  std::ostringstream os;
  os << f.rdbuf();
  return os.str();
}

}  // namespace ctmc
