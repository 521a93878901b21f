#include "toothsonic/config.hpp"

#include "toothsonic/error.hpp"
#include "toothsonic/random.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

namespace toothsonic {

using nlohmann::json;

std::string_view to_string(Fusion f) { return f == Fusion::MeanLogProb ? "mean_log_prob" : "majority_vote"; }

Fusion fusion_from_string(std::string_view s) {
  if (s == "mean_log_prob") return Fusion::MeanLogProb;
  if (s == "majority_vote") return Fusion::MajorityVote;
  throw Error(ErrorCode::InvalidConfig, "unknown fusion '" + std::string(s) + "'");
}

void AuthPolicy::validate() const {
  if (!(tau >= 0.0 && tau < 1.0)) throw Error(ErrorCode::InvalidConfig, "tau must lie in [0, 1)");
}

void EvalConfig::validate() const {
  policy.validate();
  if (ks.empty()) throw Error(ErrorCode::InvalidConfig, "eval.k must list at least one value");
  for (int k : ks)
    if (k < 1) throw Error(ErrorCode::InvalidConfig, "eval.k values must be >= 1");
  if (folds < 2) throw Error(ErrorCode::InvalidConfig, "eval.folds must be >= 2");
}

void CorpusConfig::validate() const {
  if (subjects < 1) throw Error(ErrorCode::InvalidConfig, "corpus.subjects must be >= 1");
  if (gestures.empty()) throw Error(ErrorCode::InvalidConfig, "corpus.gestures is empty");
  for (int g : gestures)
    if (g < 1 || g > kGestureCount) throw Error(ErrorCode::InvalidConfig, "gesture ids run 1..10");
  if (reps < 0 || replay_reps < 0 || advanced_mimic_reps < 0)
    throw Error(ErrorCode::InvalidConfig, "repetition counts must be >= 0");
  if (envs.empty()) throw Error(ErrorCode::InvalidConfig, "corpus.envs is empty");
  if (!(synth.level > 0.0 && synth.level < 1.0)) throw Error(ErrorCode::InvalidConfig, "corpus.level must lie in (0, 1)");
  if (synth.amplitude_jitter < 0.0 || synth.amplitude_jitter >= 1.0 || synth.duration_jitter < 0.0 ||
      synth.duration_jitter >= 1.0)
    throw Error(ErrorCode::InvalidConfig, "jitter must lie in [0, 1)");
  if (!(synth.occlusion_corner_hz > 0.0 && synth.occlusion_corner_hz < kSampleRate / 2.0))
    throw Error(ErrorCode::InvalidConfig, "occlusion corner outside (0, 8000) Hz");
}

void PipelineConfig::validate() const {
  if (!(band_low_hz > 0.0 && band_low_hz < band_high_hz && band_high_hz <= kSampleRate / 2.0))
    throw Error(ErrorCode::InvalidConfig, "band edges must satisfy 0 < low < high <= 8000");
  try {
    segment.validate();
    model.validate();
  } catch (const Error& e) {
    throw Error(ErrorCode::InvalidConfig, e.what());
  }
  if (!(features.theta_active >= 0.0)) throw Error(ErrorCode::InvalidConfig, "theta_active must be >= 0");
  if (!std::isfinite(features.theta_sonorant)) throw Error(ErrorCode::InvalidConfig, "theta_s must be finite");
  eval.validate();
  corpus.validate();
  for (const auto& p : env_profiles)
    if (!std::isfinite(p.snr_db)) throw Error(ErrorCode::InvalidConfig, "env snr_db must be finite");
  for (const auto& name : corpus.envs) env(name);
}

TrainConfig PipelineConfig::train_config() const {
  TrainConfig t = model;
  t.seed = derive_seed(seed, {7});
  return t;
}

const EnvProfile& PipelineConfig::env(std::string_view name) const {
  for (const auto& p : env_profiles)
    if (p.name == name) return p;
  throw Error(ErrorCode::InvalidConfig, "unknown environment '" + std::string(name) + "'");
}

json to_json(const PipelineConfig& c) {
  json envs = json::array();
  for (const auto& p : c.env_profiles)
    envs.push_back({{"name", p.name}, {"color", to_string(p.color)}, {"snr_db", p.snr_db}, {"motion_rumble", p.motion_rumble}});
  return {
      {"seed", c.seed},
      {"signal", {{"low_hz", c.band_low_hz}, {"high_hz", c.band_high_hz}, {"frame_len", kFrameLen}, {"hop", kHop}}},
      {"segment",
       {{"min_event_s", c.segment.min_event_s},
        {"merge_gap_s", c.segment.merge_gap_s},
        {"min_peak_snr_db", c.segment.min_peak_snr_db},
        {"hr_threshold", c.segment.hr_threshold}}},
      {"features", {{"theta_active", c.features.theta_active}, {"theta_s", c.features.theta_sonorant}}},
      {"model",
       {{"hidden", c.model.hidden},
        {"learning_rate", c.model.learning_rate},
        {"max_iters", c.model.max_iters},
        {"lbfgs_history", c.model.lbfgs_history},
        {"grad_tol", c.model.grad_tol},
        {"l2_weight", c.model.l2_weight}}},
      {"eval",
       {{"tau", c.eval.policy.tau},
        {"fusion", to_string(c.eval.policy.fusion)},
        {"k", c.eval.ks},
        {"folds", c.eval.folds}}},
      {"corpus",
       {{"subjects", c.corpus.subjects},
        {"gestures", c.corpus.gestures},
        {"reps", c.corpus.reps},
        {"replay_reps", c.corpus.replay_reps},
        {"advanced_mimic_reps", c.corpus.advanced_mimic_reps},
        {"envs", c.corpus.envs},
        {"level", c.corpus.synth.level},
        {"amplitude_jitter", c.corpus.synth.amplitude_jitter},
        {"duration_jitter", c.corpus.synth.duration_jitter},
        {"occlusion_shelf_db", c.corpus.synth.occlusion_shelf_db},
        {"occlusion_corner_hz", c.corpus.synth.occlusion_corner_hz}}},
      {"env_profiles", envs},
  };
}

namespace {

void reject_unknown(const json& patch, const json& reference, const std::string& where) {
  if (!patch.is_object()) return;
  for (const auto& [key, value] : patch.items()) {
    if (!reference.contains(key))
      throw Error(ErrorCode::InvalidConfig, "unknown config key '" + where + key + "'");
    if (value.is_object() && reference[key].is_object()) reject_unknown(value, reference[key], where + key + ".");
  }
}

template <typename T>
T get(const json& j, const char* key) {
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidConfig, std::string("config key '") + key + "': " + e.what());
  }
}

}  // namespace

PipelineConfig config_from_json(const json& patch) {
  if (!patch.is_object()) throw Error(ErrorCode::InvalidConfig, "config must be a JSON object");
  const PipelineConfig defaults;
  json j = to_json(defaults);
  reject_unknown(patch, j, "");
  j.merge_patch(patch);

  PipelineConfig c;
  c.seed = get<std::uint64_t>(j, "seed");
  const auto& sig = j["signal"];
  c.band_low_hz = get<double>(sig, "low_hz");
  c.band_high_hz = get<double>(sig, "high_hz");
  if (get<long>(sig, "frame_len") != kFrameLen || get<long>(sig, "hop") != kHop)
    throw Error(ErrorCode::InvalidConfig, "frame_len and hop are fixed at 400 and 160 samples");
  const auto& seg = j["segment"];
  c.segment.min_event_s = get<double>(seg, "min_event_s");
  c.segment.merge_gap_s = get<double>(seg, "merge_gap_s");
  c.segment.min_peak_snr_db = get<double>(seg, "min_peak_snr_db");
  c.segment.hr_threshold = get<double>(seg, "hr_threshold");
  c.features.hr_threshold = c.segment.hr_threshold;
  c.features.theta_active = get<double>(j["features"], "theta_active");
  c.features.theta_sonorant = get<double>(j["features"], "theta_s");
  const auto& m = j["model"];
  c.model.hidden = get<std::vector<int>>(m, "hidden");
  c.model.learning_rate = get<double>(m, "learning_rate");
  c.model.max_iters = get<int>(m, "max_iters");
  c.model.lbfgs_history = get<int>(m, "lbfgs_history");
  c.model.grad_tol = get<double>(m, "grad_tol");
  c.model.l2_weight = get<double>(m, "l2_weight");
  const auto& ev = j["eval"];
  c.eval.policy.tau = get<double>(ev, "tau");
  c.eval.policy.fusion = fusion_from_string(get<std::string>(ev, "fusion"));
  c.eval.ks = get<std::vector<int>>(ev, "k");
  c.eval.folds = get<int>(ev, "folds");
  const auto& co = j["corpus"];
  c.corpus.subjects = get<int>(co, "subjects");
  c.corpus.gestures = get<std::vector<int>>(co, "gestures");
  c.corpus.reps = get<int>(co, "reps");
  c.corpus.replay_reps = get<int>(co, "replay_reps");
  c.corpus.advanced_mimic_reps = get<int>(co, "advanced_mimic_reps");
  c.corpus.envs = get<std::vector<std::string>>(co, "envs");
  c.corpus.synth.level = get<double>(co, "level");
  c.corpus.synth.amplitude_jitter = get<double>(co, "amplitude_jitter");
  c.corpus.synth.duration_jitter = get<double>(co, "duration_jitter");
  c.corpus.synth.occlusion_shelf_db = get<double>(co, "occlusion_shelf_db");
  c.corpus.synth.occlusion_corner_hz = get<double>(co, "occlusion_corner_hz");
  c.env_profiles.clear();
  if (!j["env_profiles"].is_array()) throw Error(ErrorCode::InvalidConfig, "env_profiles must be an array");
  for (const auto& e : j["env_profiles"]) {
    reject_unknown(e, json{{"name", 0}, {"color", 0}, {"snr_db", 0}, {"motion_rumble", 0}}, "env_profiles[].");
    EnvProfile p;
    p.name = get<std::string>(e, "name");
    try {
      p.color = noise_color_from_string(get<std::string>(e, "color"));
    } catch (const Error& err) {
      throw Error(ErrorCode::InvalidConfig, err.what());
    }
    p.snr_db = get<double>(e, "snr_db");
    p.motion_rumble = e.contains("motion_rumble") ? get<bool>(e, "motion_rumble") : false;
    c.env_profiles.push_back(p);
  }
  c.validate();
  return c;
}

PipelineConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot read config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::InvalidConfig, "config " + path.string() + " is not valid JSON: " + e.what());
  }
  return config_from_json(j);
}

std::string config_hash(const PipelineConfig& cfg) {
  const std::string text = to_json(cfg).dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace toothsonic
