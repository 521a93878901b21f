#pragma once

#include "toothsonic/config.hpp"
#include "toothsonic/synth.hpp"

#include <json.hpp>

#include <filesystem>
#include <string>
#include <vector>

namespace toothsonic {

/// One generated clip. `path` is relative to the manifest's directory.
struct ClipRecord {
  std::string path;
  int subject_id = 0;
  int gesture_id = 0;
  int rep = 0;
  AttemptKind kind = AttemptKind::Genuine;
  std::string env;
  std::vector<double> onsets_s;
  double end_s = 0.0;
  std::vector<std::array<double, 2>> gaps_s;
  std::string config_hash;
};

nlohmann::json to_json(const ClipRecord& r);
ClipRecord clip_record_from_json(const nlohmann::json& j);

struct Manifest {
  std::filesystem::path root;  // directory the record paths are relative to
  std::vector<ClipRecord> records;

  std::filesystem::path clip_path(const ClipRecord& r) const { return root / r.path; }
};

/// JSON lines, one record per line.
void write_manifest(const std::filesystem::path& path, const Manifest& m);
/// Throws FormatError on malformed lines, InvalidInput on negative ids or a
/// missing clip file.
Manifest read_manifest(const std::filesystem::path& path);

/// A clip to generate: attempt plus environment.
struct PlannedClip {
  AttemptSpec spec;
  std::string env;
};

/// Every clip of a corpus in manifest order: subject, gesture, kind, rep, env.
std::vector<PlannedClip> plan_corpus(const CorpusConfig& corpus);

/// Relative WAV path, `subj_<id>/g<gesture>/rep<k>_<kind>[_<env>].wav`.
std::string clip_relative_path(const PlannedClip& c, bool multi_env);

/// Per-subject toothprints of a corpus.
std::vector<ToothprintParams> corpus_subjects(const PipelineConfig& cfg);

/// Renders one planned clip.
SynthClip render_clip(const PipelineConfig& cfg, const std::vector<ToothprintParams>& subjects, const PlannedClip& c);

/// Writes all WAVs and `manifest.jsonl` under out_dir. Throws IoError when the
/// directory cannot be written. Output does not depend on `jobs`.
Manifest generate_corpus(const PipelineConfig& cfg, const std::filesystem::path& out_dir, int jobs = 1);

}  // namespace toothsonic
