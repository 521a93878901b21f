#include "toothsonic/manifest.hpp"

#include "toothsonic/error.hpp"
#include "toothsonic/log.hpp"
#include "toothsonic/pipeline.hpp"
#include "toothsonic/wav.hpp"

#include <fstream>

namespace toothsonic {

using nlohmann::json;

json to_json(const ClipRecord& r) {
  json gaps = json::array();
  for (const auto& g : r.gaps_s) gaps.push_back({g[0], g[1]});
  return {{"path", r.path},
          {"subject_id", r.subject_id},
          {"gesture_id", r.gesture_id},
          {"rep", r.rep},
          {"kind", to_string(r.kind)},
          {"env", r.env},
          {"onsets_s", r.onsets_s},
          {"end_s", r.end_s},
          {"gaps_s", gaps},
          {"config_hash", r.config_hash}};
}

ClipRecord clip_record_from_json(const json& j) {
  try {
    ClipRecord r;
    r.path = j.at("path").get<std::string>();
    r.subject_id = j.at("subject_id").get<int>();
    r.gesture_id = j.at("gesture_id").get<int>();
    r.rep = j.at("rep").get<int>();
    r.kind = attempt_kind_from_string(j.at("kind").get<std::string>());
    if (r.kind == AttemptKind::Mimic) throw Error(ErrorCode::FormatError, "manifest kind must be genuine, replay or advanced_mimic");
    r.env = j.value("env", std::string{});
    r.onsets_s = j.value("onsets_s", std::vector<double>{});
    r.end_s = j.value("end_s", 0.0);
    if (j.contains("gaps_s"))
      for (const auto& g : j["gaps_s"]) r.gaps_s.push_back({g.at(0).get<double>(), g.at(1).get<double>()});
    r.config_hash = j.value("config_hash", std::string{});
    return r;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::FormatError, std::string("bad manifest record: ") + e.what());
  }
}

void write_manifest(const std::filesystem::path& path, const Manifest& m) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot write manifest " + path.string());
  for (const auto& r : m.records) out << to_json(r).dump() << '\n';
  if (!out) throw Error(ErrorCode::IoError, "failed writing manifest " + path.string());
}

Manifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot read manifest " + path.string());
  Manifest m;
  m.root = path.parent_path();
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw Error(ErrorCode::FormatError, path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
    ClipRecord r = clip_record_from_json(j);
    if (r.subject_id < 0 || r.gesture_id < 0 || r.rep < 0)
      throw Error(ErrorCode::InvalidInput, path.string() + ":" + std::to_string(line_no) + ": negative id");
    if (!std::filesystem::exists(m.clip_path(r)))
      throw Error(ErrorCode::InvalidInput, "manifest references missing file " + m.clip_path(r).string());
    m.records.push_back(std::move(r));
  }
  return m;
}

std::vector<PlannedClip> plan_corpus(const CorpusConfig& corpus) {
  std::vector<PlannedClip> plan;
  const std::array<std::pair<AttemptKind, int>, 3> kinds = {{{AttemptKind::Genuine, corpus.reps},
                                                             {AttemptKind::Replay, corpus.replay_reps},
                                                             {AttemptKind::AdvancedMimic, corpus.advanced_mimic_reps}}};
  for (int s = 1; s <= corpus.subjects; ++s)
    for (int g : corpus.gestures)
      for (const auto& [kind, reps] : kinds)
        for (int r = 0; r < reps; ++r)
          for (const auto& env : corpus.envs) plan.push_back({{s, g, r, kind, 0}, env});
  return plan;
}

std::string clip_relative_path(const PlannedClip& c, bool multi_env) {
  std::string name = "subj_" + std::to_string(c.spec.subject_id) + "/g" + std::to_string(c.spec.gesture_id) + "/rep" +
                     std::to_string(c.spec.rep) + "_" + std::string(to_string(c.spec.kind));
  if (multi_env) name += "_" + c.env;
  return name + ".wav";
}

std::vector<ToothprintParams> corpus_subjects(const PipelineConfig& cfg) {
  std::vector<ToothprintParams> out;
  for (int s = 1; s <= cfg.corpus.subjects; ++s) out.push_back(make_subject(subject_seed(cfg.seed, s)));
  return out;
}

SynthClip render_clip(const PipelineConfig& cfg, const std::vector<ToothprintParams>& subjects, const PlannedClip& c) {
  AttemptSpec spec = c.spec;
  // Seeds key on the profile's position in the full list, so a clip does not
  // change when other environments are added to the corpus.
  spec.env_index = 0;
  for (std::size_t i = 0; i < cfg.env_profiles.size(); ++i)
    if (cfg.env_profiles[i].name == c.env) spec.env_index = i;
  SynthClip out = synth_attempt(subjects.at(static_cast<std::size_t>(spec.subject_id - 1)), spec, cfg.env(c.env), cfg.seed,
                                cfg.corpus.synth);
  out.clip.meta.source = clip_relative_path(c, cfg.corpus.envs.size() > 1);
  return out;
}

Manifest generate_corpus(const PipelineConfig& cfg, const std::filesystem::path& out_dir, int jobs) {
  cfg.validate();
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec || !std::filesystem::is_directory(out_dir))
    throw Error(ErrorCode::IoError, "cannot create output directory " + out_dir.string());

  const auto subjects = corpus_subjects(cfg);
  const auto plan = plan_corpus(cfg.corpus);
  const bool multi_env = cfg.corpus.envs.size() > 1;
  const std::string hash = config_hash(cfg);

  Manifest m;
  m.root = out_dir;
  m.records.resize(plan.size());
  parallel_for(plan.size(), jobs, [&](std::size_t i) {
    const auto& c = plan[i];
    const SynthClip sc = render_clip(cfg, subjects, c);
    ClipRecord r;
    r.path = clip_relative_path(c, multi_env);
    r.subject_id = c.spec.subject_id;
    r.gesture_id = c.spec.gesture_id;
    r.rep = c.spec.rep;
    r.kind = c.spec.kind;
    r.env = c.env;
    r.onsets_s = {sc.onset_s};
    r.end_s = sc.end_s;
    r.gaps_s = sc.gaps_s;
    r.config_hash = hash;
    const auto path = out_dir / r.path;
    std::error_code dir_ec;
    std::filesystem::create_directories(path.parent_path(), dir_ec);
    write_wav(path, sc.clip);
    m.records[i] = std::move(r);
  });
  write_manifest(out_dir / "manifest.jsonl", m);
  log_info("wrote " + std::to_string(m.records.size()) + " clips to " + out_dir.string());
  return m;
}

}  // namespace toothsonic
