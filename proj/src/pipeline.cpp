#include "toothsonic/pipeline.hpp"

#include "toothsonic/error.hpp"
#include "toothsonic/log.hpp"
#include "toothsonic/wav.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

namespace toothsonic {

namespace {

constexpr std::array<const char*, 4> kLabelColumns = {"subject_id", "gesture_id", "rep", "kind"};

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, sep)) out.push_back(cell);
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

int parse_int(const std::string& s, int line_no) {
  try {
    std::size_t used = 0;
    const int v = std::stoi(s, &used);
    if (used == s.size()) return v;
  } catch (const std::exception&) {
  }
  throw Error(ErrorCode::FormatError, "line " + std::to_string(line_no) + ": bad integer '" + s + "'");
}

}  // namespace

void write_features_csv(const std::filesystem::path& path, const FeatureTable& table, const std::string& config_hash) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  out << "# toothsonic " << kToolVersion << " config=" << config_hash << '\n';
  for (const auto& name : feature_names()) out << name << ',';
  for (std::size_t i = 0; i < kLabelColumns.size(); ++i) out << kLabelColumns[i] << (i + 1 < kLabelColumns.size() ? ',' : '\n');
  char buf[32];
  for (const auto& row : table) {
    for (int i = 0; i < kFeatureDim; ++i) {
      std::snprintf(buf, sizeof buf, "%.17g", row.x[i]);
      out << buf << ',';
    }
    out << row.subject_id << ',' << row.gesture_id << ',' << row.rep << ',' << to_string(row.kind) << '\n';
  }
  if (!out) throw Error(ErrorCode::IoError, "failed writing " + path.string());
}

FeatureTable read_features_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot read " + path.string());
  std::string line;
  int line_no = 0;
  bool header_seen = false;
  FeatureTable table;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    const auto cells = split(line, ',');
    if (!header_seen) {
      const auto& names = feature_names();
      bool ok = cells.size() == kFeatureDim + kLabelColumns.size();
      for (int i = 0; ok && i < kFeatureDim; ++i) ok = cells[static_cast<std::size_t>(i)] == names[static_cast<std::size_t>(i)];
      for (std::size_t i = 0; ok && i < kLabelColumns.size(); ++i) ok = cells[kFeatureDim + i] == kLabelColumns[i];
      if (!ok) throw Error(ErrorCode::FormatError, path.string() + ": unexpected feature header");
      header_seen = true;
      continue;
    }
    if (cells.size() != kFeatureDim + kLabelColumns.size())
      throw Error(ErrorCode::FormatError, path.string() + ":" + std::to_string(line_no) + ": expected " +
                                              std::to_string(kFeatureDim + kLabelColumns.size()) + " columns");
    FeatureRow row;
    for (int i = 0; i < kFeatureDim; ++i) {
      const std::string& c = cells[static_cast<std::size_t>(i)];
      char* end = nullptr;
      row.x[i] = std::strtod(c.c_str(), &end);
      if (c.empty() || end != c.c_str() + c.size() || !std::isfinite(row.x[i]))
        throw Error(ErrorCode::FormatError, path.string() + ":" + std::to_string(line_no) + ": bad number '" + c + "'");
    }
    row.subject_id = parse_int(cells[kFeatureDim], line_no);
    row.gesture_id = parse_int(cells[kFeatureDim + 1], line_no);
    row.rep = parse_int(cells[kFeatureDim + 2], line_no);
    row.kind = attempt_kind_from_string(cells[kFeatureDim + 3]);
    table.push_back(row);
  }
  if (!header_seen) throw Error(ErrorCode::FormatError, path.string() + ": missing header");
  return table;
}

std::vector<GestureSegment> segment_clip(const AudioClip& clip, const PipelineConfig& cfg) {
  return segment_gestures(bandpass(clip, cfg.band_low_hz, cfg.band_high_hz), cfg.segment);
}

std::optional<FeatureVector> featurize_clip(const AudioClip& clip, const PipelineConfig& cfg) {
  const auto segments = segment_clip(clip, cfg);
  if (segments.empty()) return std::nullopt;
  std::size_t best = 0;
  double best_energy = -1.0;
  for (std::size_t i = 0; i < segments.size(); ++i) {
    const double e = segments[i].frames.windowed.squaredNorm();
    if (e > best_energy) {
      best_energy = e;
      best = i;
    }
  }
  return assemble(segments[best], cfg.features);
}

FeatureTable featurize_manifest(const Manifest& m, const PipelineConfig& cfg, int jobs) {
  std::vector<std::optional<FeatureVector>> vectors(m.records.size());
  parallel_for(m.records.size(), jobs, [&](std::size_t i) {
    AudioClip clip = read_wav(m.clip_path(m.records[i]));
    clip.meta.source = m.records[i].path;
    vectors[i] = featurize_clip(clip, cfg);
  });
  FeatureTable table;
  for (std::size_t i = 0; i < vectors.size(); ++i) {
    const auto& r = m.records[i];
    if (!vectors[i]) {
      log_info("skipping " + r.path + ": no gesture segment found");
      continue;
    }
    table.push_back({r.subject_id, r.gesture_id, r.rep, r.kind, *vectors[i]});
  }
  return table;
}

CorpusFeatures featurize_corpus(const PipelineConfig& cfg, int jobs) {
  cfg.validate();
  const auto subjects = corpus_subjects(cfg);
  const auto plan = plan_corpus(cfg.corpus);
  std::vector<std::optional<FeatureVector>> vectors(plan.size());
  parallel_for(plan.size(), jobs, [&](std::size_t i) {
    vectors[i] = featurize_clip(render_clip(cfg, subjects, plan[i]).clip, cfg);
  });
  CorpusFeatures out;
  for (std::size_t i = 0; i < plan.size(); ++i) {
    const auto& s = plan[i].spec;
    if (vectors[i]) out.table.push_back({s.subject_id, s.gesture_id, s.rep, s.kind, *vectors[i]});
    else out.skipped.push_back(plan[i]);
  }
  if (!out.skipped.empty()) log_info("skipped " + std::to_string(out.skipped.size()) + " clips without segments");
  return out;
}

nlohmann::json to_json(const GestureSegment& seg) {
  nlohmann::json j = {{"clip", seg.clip_ref}, {"start_s", seg.start_s}, {"end_s", seg.end_s}, {"mean_hr", seg.mean_hr()}};
  if (seg.gesture_label) j["gesture_label"] = *seg.gesture_label;
  return j;
}

}  // namespace toothsonic
