#include <set>

#include "pmdiag/cli.hpp"
#include "pmdiag/errors.hpp"

namespace pmdiag::cli {

namespace {

[[noreturn]] void reject(const std::string& section, const std::string& key) {
  throw Error(ErrorCode::InvalidConfig, "unknown key '" + key + "' in section '" + section + "'");
}

const Json& require_object(const Json& j, const std::string& what) {
  if (!j.is_object()) throw Error(ErrorCode::InvalidConfig, what + " must be a JSON object");
  return j;
}

TechnologyProfile parse_profile(const Json& j, TechnologyProfile p) {
  for (const auto& [key, v] : require_object(j, "synth.profile").items()) {
    if (key == "name") p.name = v.get<std::string>();
    else if (key == "supply") {
      auto s = parse_supply(v.get<std::string>());
      if (!s) throw Error(ErrorCode::InvalidConfig, "supply must be AC or DC");
      p.supply = *s;
    }
    else if (key == "sample_rate") p.sample_rate = v.get<double>();
    else if (key == "nominal_peak_amps") p.nominal_peak_amps = v.get<double>();
    else if (key == "plateau_amps") p.plateau_amps = v.get<double>();
    else if (key == "move_duration") p.move_duration = v.get<double>();
    else reject("synth.profile", key);
  }
  return p;
}

void parse_synth(const Json& j, SynthSection& s) {
  require_object(j, "synth");
  if (auto it = j.find("technology"); it != j.end()) {
    auto p = profile_by_name(it->get<std::string>());
    if (!p) throw Error(ErrorCode::InvalidConfig, "unknown technology '" + it->get<std::string>() + "'");
    s.config.profile = *p;
  }
  if (auto it = j.find("profile"); it != j.end()) {
    s.config.profile = parse_profile(*it, s.config.profile);
  }
  bool noise_given = false;
  for (const auto& [key, v] : j.items()) {
    if (key == "technology" || key == "profile") continue;
    if (key == "unlock_peak_duration") s.config.unlock_peak_duration = v.get<double>();
    else if (key == "lock_peak_duration") s.config.lock_peak_duration = v.get<double>();
    else if (key == "noise_sigma") { s.config.noise_sigma = v.get<double>(); noise_given = true; }
    else if (key == "amplitude_jitter") s.config.amplitude_jitter = v.get<double>();
    else if (key == "duration_jitter") s.config.duration_jitter = v.get<double>();
    else if (key == "idle_duration") s.config.idle_duration = v.get<double>();
    else if (key == "seed") s.config.seed = v.get<std::uint64_t>();
    else if (key == "counts") {
      s.counts.clear();
      for (const auto& [cls_name, n] : require_object(v, "synth.counts").items()) {
        auto cls = parse_fault_class(cls_name);
        if (!cls) throw Error(ErrorCode::InvalidConfig, "unknown class '" + cls_name + "' in counts");
        s.counts[*cls] = n.get<std::size_t>();
      }
    }
    else if (key == "severity_range") {
      auto r = v.get<std::vector<double>>();
      if (r.size() != 2) throw Error(ErrorCode::InvalidConfig, "severity_range needs [lo, hi]");
      s.severity = {r[0], r[1]};
    }
    else reject("synth", key);
  }
  if (!noise_given) s.config.noise_sigma = 0.03 * s.config.profile.plateau_amps;
  s.config.validate();
  if (!(s.severity.lo >= 0.0 && s.severity.lo <= s.severity.hi && s.severity.hi <= 1.0)) {
    throw Error(ErrorCode::InvalidConfig, "severity_range must satisfy 0 <= lo <= hi <= 1");
  }
}

void parse_preprocess(const Json& j, PreprocessConfig& p) {
  for (const auto& [key, v] : require_object(j, "preprocess").items()) {
    if (key == "smooth_window") p.smooth_window = v.get<std::size_t>();
    else if (key == "active_threshold_frac") p.active_threshold_frac = v.get<double>();
    else if (key == "noise_floor") p.noise_floor = v.get<double>();
    else if (key == "feature_length") p.feature_length = v.get<std::size_t>();
    else if (key == "plateau_core_frac") p.plateau_core_frac = v.get<double>();
    else reject("preprocess", key);
  }
  p.validate();
}

void parse_split(const Json& j, SplitSpec& s) {
  for (const auto& [key, v] : require_object(j, "split").items()) {
    if (key == "train_frac") s.train_frac = v.get<double>();
    else if (key == "calibration_frac_of_test") s.calibration_frac_of_test = v.get<double>();
    else if (key == "seed") s.seed = v.get<std::uint64_t>();
    else reject("split", key);
  }
  s.validate();
}

void parse_paths(const Json& j, Paths& p) {
  for (const auto& [key, v] : require_object(j, "paths").items()) {
    std::optional<std::filesystem::path> value;
    if (!v.is_null()) value = v.get<std::string>();
    if (key == "dataset") p.dataset = value;
    else if (key == "features") p.features = value;
    else if (key == "model") p.model = value;
    else if (key == "predictor") p.predictor = value;
    else reject("paths", key);
  }
}

Json optional_path(const std::optional<std::filesystem::path>& p) {
  return p ? Json(p->string()) : Json();
}

}  // namespace

RunConfig default_run_config() {
  RunConfig cfg;
  cfg.synth.counts = {{FaultClass::Nominal, 356},
                      {FaultClass::Obstacle, 274},
                      {FaultClass::Friction, 355},
                      {FaultClass::PowerSupply, 125}};
  cfg.synth.config.noise_sigma = 0.03 * cfg.synth.config.profile.plateau_amps;
  cfg.preprocess.feature_length = 128;
  cfg.train.layer_dims = {cfg.preprocess.feature_length, 64, 32, kNumClasses};
  return cfg;
}

RunConfig run_config_from_json(const Json& j) {
  RunConfig cfg = default_run_config();
  require_object(j, "config");
  try {
    for (const auto& [key, v] : j.items()) {
      if (key == "synth") parse_synth(v, cfg.synth);
      else if (key == "preprocess") parse_preprocess(v, cfg.preprocess);
      else if (key == "train") {
        cfg.train = train_config_from_json(v);
        cfg.explicit_class_weights = v.contains("class_weights");
      }
      else if (key == "conformal") {
        for (const auto& [ck, cv] : require_object(v, "conformal").items()) {
          if (ck == "alpha") cfg.alpha = cv.get<double>();
          else reject("conformal", ck);
        }
        if (!(cfg.alpha > 0.0 && cfg.alpha < 1.0)) {
          throw Error(ErrorCode::InvalidConfig, "alpha must lie in (0, 1)");
        }
      }
      else if (key == "split") parse_split(v, cfg.split);
      else if (key == "paths") parse_paths(v, cfg.paths);
      else reject("config", key);
    }
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::InvalidConfig, e.what());
  }
  if (cfg.train.layer_dims.front() != cfg.preprocess.feature_length) {
    throw Error(ErrorCode::InvalidConfig, "train.layer_dims[0] must equal preprocess.feature_length");
  }
  return cfg;
}

Json run_config_to_json(const RunConfig& cfg) {
  const auto& s = cfg.synth.config;
  Json counts = Json::object();
  for (const auto& [cls, n] : cfg.synth.counts) counts[std::string(name(cls))] = n;
  Json train = train_config_to_json(cfg.train);
  if (!cfg.explicit_class_weights) train.erase("class_weights");
  return {
      {"synth",
       {{"profile",
         {{"name", s.profile.name},
          {"supply", std::string(name(s.profile.supply))},
          {"sample_rate", s.profile.sample_rate},
          {"nominal_peak_amps", s.profile.nominal_peak_amps},
          {"plateau_amps", s.profile.plateau_amps},
          {"move_duration", s.profile.move_duration}}},
        {"unlock_peak_duration", s.unlock_peak_duration},
        {"lock_peak_duration", s.lock_peak_duration},
        {"noise_sigma", s.noise_sigma},
        {"amplitude_jitter", s.amplitude_jitter},
        {"duration_jitter", s.duration_jitter},
        {"idle_duration", s.idle_duration},
        {"seed", s.seed},
        {"counts", counts},
        {"severity_range", {cfg.synth.severity.lo, cfg.synth.severity.hi}}}},
      {"preprocess",
       {{"smooth_window", cfg.preprocess.smooth_window},
        {"active_threshold_frac", cfg.preprocess.active_threshold_frac},
        {"noise_floor", cfg.preprocess.noise_floor},
        {"feature_length", cfg.preprocess.feature_length},
        {"plateau_core_frac", cfg.preprocess.plateau_core_frac}}},
      {"train", train},
      {"conformal", {{"alpha", cfg.alpha}}},
      {"split",
       {{"train_frac", cfg.split.train_frac},
        {"calibration_frac_of_test", cfg.split.calibration_frac_of_test},
        {"seed", cfg.split.seed}}},
      {"paths",
       {{"dataset", optional_path(cfg.paths.dataset)},
        {"features", optional_path(cfg.paths.features)},
        {"model", optional_path(cfg.paths.model)},
        {"predictor", optional_path(cfg.paths.predictor)}}},
  };
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const Error&) {
    throw Error(ErrorCode::InvalidConfig, "cannot read config " + path.string());
  }
  Json j = Json::parse(text, nullptr, false);
  if (j.is_discarded()) throw Error(ErrorCode::InvalidConfig, path.string() + " is not valid JSON");
  return run_config_from_json(j);
}

void override_seeds(RunConfig& cfg, std::uint64_t seed) {
  cfg.synth.config.seed = seed;
  cfg.train.seed = seed;
  cfg.split.seed = seed;
}

}  // namespace pmdiag::cli
