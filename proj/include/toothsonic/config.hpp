#pragma once

#include "toothsonic/features.hpp"
#include "toothsonic/model.hpp"
#include "toothsonic/segment.hpp"
#include "toothsonic/synth.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace toothsonic {

inline constexpr std::string_view kToolVersion = "0.1.0";

enum class Fusion { MeanLogProb, MajorityVote };
std::string_view to_string(Fusion f);
Fusion fusion_from_string(std::string_view s);

struct AuthPolicy {
  double tau = 0.5;
  Fusion fusion = Fusion::MeanLogProb;

  void validate() const;
};

struct EvalConfig {
  AuthPolicy policy;
  std::vector<int> ks = {1, 3, 5};
  int folds = 10;

  void validate() const;
};

struct CorpusConfig {
  int subjects = 25;
  std::vector<int> gestures = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
  int reps = 50;
  int replay_reps = 10;
  int advanced_mimic_reps = 10;
  std::vector<std::string> envs = {"living_room"};
  SynthOptions synth;

  void validate() const;
};

/// Every tunable of the pipeline in one document.
struct PipelineConfig {
  std::uint64_t seed = 1;
  double band_low_hz = 20.0;
  double band_high_hz = 8000.0;
  SegmenterConfig segment;
  FeatureConfig features;
  TrainConfig model;
  EvalConfig eval;
  CorpusConfig corpus;
  std::vector<EnvProfile> env_profiles = default_env_profiles();

  void validate() const;
  const EnvProfile& env(std::string_view name) const;
  /// `model` with the initialization seed derived from `seed`.
  TrainConfig train_config() const;
};

nlohmann::json to_json(const PipelineConfig& cfg);
/// Merges `patch` over the defaults. Unknown keys and bad values throw InvalidConfig.
PipelineConfig config_from_json(const nlohmann::json& patch);
PipelineConfig load_config(const std::filesystem::path& path);

/// FNV-1a over the canonical (sorted-key) JSON dump, as 16 hex digits.
std::string config_hash(const PipelineConfig& cfg);

}  // namespace toothsonic
