#include "toothsonic/cli.hpp"

#include "toothsonic/error.hpp"
#include "toothsonic/log.hpp"
#include "toothsonic/manifest.hpp"
#include "toothsonic/pipeline.hpp"
#include "toothsonic/wav.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <optional>
#include <sstream>

namespace toothsonic {

using nlohmann::json;

namespace {

struct CommonArgs {
  std::string config;
  std::optional<std::uint64_t> seed;
  int jobs = 1;
  std::string out;
};

void add_common(CLI::App* cmd, CommonArgs& args, bool out_required) {
  cmd->add_option("--config", args.config, "JSON config merged over the defaults")->check(CLI::ExistingFile);
  cmd->add_option("--seed", args.seed, "master seed (overrides the config)");
  cmd->add_option("--jobs", args.jobs, "worker threads")->check(CLI::PositiveNumber);
  auto* out = cmd->add_option("--out", args.out, "output path");
  if (out_required) out->required();
}

// Config file, then command-line overrides, validated once more.
PipelineConfig resolve_config(const CommonArgs& args, const json& overrides = json::object()) {
  PipelineConfig cfg = args.config.empty() ? PipelineConfig{} : load_config(args.config);
  json doc = to_json(cfg);
  if (args.seed) doc["seed"] = *args.seed;
  doc.merge_patch(overrides);
  return config_from_json(doc);
}

json provenance(const PipelineConfig& cfg) {
  return {{"tool", "toothsonic"}, {"version", kToolVersion}, {"config_hash", config_hash(cfg)}};
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  f << text;
  if (!f) throw Error(ErrorCode::IoError, "write failed for " + path.string());
}

json read_json_file(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  try {
    return json::parse(f);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::FormatError, path.string() + ": " + e.what());
  }
}

std::string error_object(std::string_view code, std::string_view message) {
  return json{{"error", {{"code", code}, {"message", message}}}}.dump();
}

// --- commands -------------------------------------------------------------

struct SynthArgs {
  std::optional<int> subjects, reps, replay_reps, advanced_mimic_reps;
  std::vector<int> gestures;
  std::vector<std::string> envs;
};

int cmd_synth(const CommonArgs& common, const SynthArgs& a, std::ostream& out) {
  json corpus = json::object();
  if (a.subjects) corpus["subjects"] = *a.subjects;
  if (a.reps) corpus["reps"] = *a.reps;
  if (a.replay_reps) corpus["replay_reps"] = *a.replay_reps;
  if (a.advanced_mimic_reps) corpus["advanced_mimic_reps"] = *a.advanced_mimic_reps;
  if (!a.gestures.empty()) corpus["gestures"] = a.gestures;
  if (!a.envs.empty()) corpus["envs"] = a.envs;
  const PipelineConfig cfg = resolve_config(common, {{"corpus", corpus}});
  const Manifest m = generate_corpus(cfg, common.out, common.jobs);
  std::map<std::string, int> counts;
  for (const auto& r : m.records) ++counts[std::string(to_string(r.kind))];
  json summary = provenance(cfg);
  summary["manifest"] = (std::filesystem::path(common.out) / "manifest.jsonl").string();
  summary["clips"] = m.records.size();
  summary["kinds"] = counts;
  out << summary.dump() << '\n';
  return kExitOk;
}

struct SegmentArgs {
  std::string manifest, wav;
};

int cmd_segment(const CommonArgs& common, const SegmentArgs& a, std::ostream& out) {
  if (a.manifest.empty() && a.wav.empty()) throw Error(ErrorCode::InvalidInput, "segment needs --manifest or --wav");
  const PipelineConfig cfg = resolve_config(common);
  std::vector<AudioClip> clips;
  std::vector<std::string> names;
  if (!a.wav.empty()) {
    clips.push_back(read_wav(a.wav));
    names.push_back(a.wav);
  } else {
    const Manifest m = read_manifest(a.manifest);
    clips.resize(m.records.size());
    parallel_for(clips.size(), common.jobs, [&](std::size_t i) {
      clips[i] = read_wav(m.clip_path(m.records[i]));
    });
    for (const auto& r : m.records) names.push_back(r.path);
  }
  std::vector<std::vector<GestureSegment>> segs(clips.size());
  parallel_for(clips.size(), common.jobs, [&](std::size_t i) {
    clips[i].meta.source = names[i];
    segs[i] = segment_clip(clips[i], cfg);
  });
  json list = json::array();
  for (const auto& clip_segs : segs)
    for (const auto& s : clip_segs) list.push_back(to_json(s));
  json doc = provenance(cfg);
  doc["segments"] = list;
  if (common.out.empty())
    out << doc.dump(2) << '\n';
  else
    write_text(common.out, doc.dump(2) + "\n");
  return kExitOk;
}

int cmd_featurize(const CommonArgs& common, const std::string& manifest, std::ostream& out) {
  const PipelineConfig cfg = resolve_config(common);
  const Manifest m = read_manifest(manifest);
  const FeatureTable table = featurize_manifest(m, cfg, common.jobs);
  write_features_csv(common.out, table, config_hash(cfg));
  json summary = provenance(cfg);
  summary["rows"] = table.size();
  summary["skipped"] = m.records.size() - table.size();
  out << summary.dump() << '\n';
  return kExitOk;
}

struct TrainArgs {
  std::string features;
  std::optional<int> max_iters;
};

int cmd_train(const CommonArgs& common, const TrainArgs& a, std::ostream& out) {
  json overrides = json::object();
  if (a.max_iters) overrides["model"]["max_iters"] = *a.max_iters;
  const PipelineConfig cfg = resolve_config(common, overrides);
  const FeatureTable table = read_features_csv(a.features);
  std::vector<const FeatureRow*> rows;
  for (const auto& r : table)
    if (r.kind == AttemptKind::Genuine) rows.push_back(&r);
  if (rows.empty()) throw Error(ErrorCode::InvalidDataset, "no genuine rows in " + a.features);
  Eigen::MatrixXd x(static_cast<Eigen::Index>(rows.size()), kFeatureDim);
  std::vector<int> y;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    x.row(static_cast<Eigen::Index>(i)) = rows[i]->x.transpose();
    y.push_back(rows[i]->subject_id);
  }
  TrainReport report;
  const SubjectModel model = train(x, y, cfg.train_config(), &report);
  json summary = provenance(cfg);
  summary["samples"] = rows.size();
  summary["classes"] = model.classes();
  summary["final_loss"] = report.final_loss;
  summary["iterations"] = report.iterations;
  summary["stop_reason"] = report.stop_reason;
  save_model(common.out, model, summary);
  out << summary.dump() << '\n';
  return kExitOk;
}

struct EvalArgs {
  std::string features, gates, summary;
  std::optional<int> folds;
  std::optional<double> tau;
  std::optional<std::string> fusion;
  std::vector<int> ks;
};

int cmd_eval(const CommonArgs& common, const EvalArgs& a, std::ostream& out, std::ostream& err) {
  json eval = json::object();
  if (a.folds) eval["folds"] = *a.folds;
  if (a.tau) eval["tau"] = *a.tau;
  if (a.fusion) eval["fusion"] = *a.fusion;
  if (!a.ks.empty()) eval["k"] = a.ks;
  const PipelineConfig cfg = resolve_config(common, {{"eval", eval}});
  const FeatureTable table = read_features_csv(a.features);

  EvalOptions opt;
  opt.eval = cfg.eval;
  opt.train = cfg.train_config();
  opt.seed = derive_seed(cfg.seed, {8});
  opt.jobs = common.jobs;
  const EvalReport report = crossvalidate(table, opt);

  std::optional<SeparationStats> sep;
  if (std::any_of(table.begin(), table.end(), [](const FeatureRow& r) { return r.kind == AttemptKind::Replay; }))
    sep = replay_separation(table);
  const json doc = report_document(cfg, report, sep ? &*sep : nullptr);
  write_text(common.out, doc.dump(2) + "\n");

  std::filesystem::path summary_path = a.summary;
  if (summary_path.empty()) summary_path = std::filesystem::path(common.out).replace_extension(".csv");
  write_text(summary_path, "# toothsonic " + std::string(kToolVersion) + " config=" + config_hash(cfg) + "\n" +
                               summary_csv(report));

  json brief = provenance(cfg);
  for (const auto& kr : report.results)
    brief["k" + std::to_string(kr.k)] = {{"bac", doc["results"]["k" + std::to_string(kr.k)]["overall"]["bac"]},
                                         {"frr", doc["results"]["k" + std::to_string(kr.k)]["overall"]["frr"]},
                                         {"far", doc["results"]["k" + std::to_string(kr.k)]["overall"]["far"]}};
  out << brief.dump() << '\n';

  if (!a.gates.empty()) {
    const auto failed = failed_gates(doc, read_json_file(a.gates));
    if (!failed.empty()) {
      err << json{{"error", {{"code", "GateFailed"}, {"message", "acceptance gates failed"}, {"failed", failed}}}}.dump()
          << '\n';
      return kExitGateFailed;
    }
  }
  return kExitOk;
}

int cmd_correlation(const CommonArgs& common, std::ostream& out) {
  const PipelineConfig cfg = resolve_config(common);
  const auto c = gesture_correlation();
  const auto& ref = reference_gesture_correlation();
  std::ostringstream csv;
  csv << "# toothsonic " << kToolVersion << " config=" << config_hash(cfg) << "\ngesture";
  for (int g = 1; g <= 10; ++g) csv << ",g" << g;
  csv << '\n';
  double max_dev = 0.0, sum_dev = 0.0;
  char buf[32];
  for (int i = 0; i < 10; ++i) {
    csv << 'g' << i + 1;
    for (int j = 0; j < 10; ++j) {
      std::snprintf(buf, sizeof buf, "%.2f", c(i, j));
      csv << ',' << buf;
      const double dev = std::abs(c(i, j) - ref[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)]);
      max_dev = std::max(max_dev, dev);
      sum_dev += dev;
    }
    csv << '\n';
  }
  if (common.out.empty()) {
    out << csv.str();
    return kExitOk;
  }
  write_text(common.out, csv.str());
  json summary = provenance(cfg);
  summary["max_abs_deviation"] = max_dev;
  summary["mean_abs_deviation"] = sum_dev / 100.0;
  out << summary.dump() << '\n';
  return kExitOk;
}

}  // namespace

json report_document(const PipelineConfig& cfg, const EvalReport& report, const SeparationStats* separation) {
  json doc = provenance(cfg);
  doc["config"] = to_json(cfg);
  doc["tau"] = cfg.eval.policy.tau;
  doc["fusion"] = to_string(cfg.eval.policy.fusion);
  doc.update(to_json(report, separation));
  return doc;
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Teeth-gesture acoustic authentication pipeline", "toothsonic"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(kToolVersion));

  CommonArgs common;
  SynthArgs synth;
  SegmentArgs segment;
  std::string featurize_manifest_path;
  TrainArgs train_args;
  EvalArgs eval;

  auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic corpus (WAVs + manifest.jsonl) into --out");
  add_common(synth_cmd, common, true);
  synth_cmd->add_option("--subjects", synth.subjects, "number of subjects")->check(CLI::PositiveNumber);
  synth_cmd->add_option("--reps", synth.reps, "genuine repetitions per gesture")->check(CLI::PositiveNumber);
  synth_cmd->add_option("--replay-reps", synth.replay_reps, "replay repetitions per gesture")
      ->check(CLI::NonNegativeNumber);
  synth_cmd->add_option("--advanced-mimic-reps", synth.advanced_mimic_reps, "advanced mimic repetitions per gesture")
      ->check(CLI::NonNegativeNumber);
  synth_cmd->add_option("--gestures", synth.gestures, "comma-separated gesture ids")->delimiter(',');
  synth_cmd->add_option("--envs", synth.envs, "comma-separated environment profiles")->delimiter(',');

  auto* segment_cmd = app.add_subcommand("segment", "segment a manifest or a single WAV into JSON");
  add_common(segment_cmd, common, false);
  auto* seg_manifest = segment_cmd->add_option("--manifest", segment.manifest, "manifest.jsonl")->check(CLI::ExistingFile);
  auto* seg_wav = segment_cmd->add_option("--wav", segment.wav, "single WAV file")->check(CLI::ExistingFile);
  seg_manifest->excludes(seg_wav);

  auto* featurize_cmd = app.add_subcommand("featurize", "feature CSV, one row per clip");
  add_common(featurize_cmd, common, true);
  featurize_cmd->add_option("--manifest", featurize_manifest_path, "manifest.jsonl")
      ->required()
      ->check(CLI::ExistingFile);

  auto* train_cmd = app.add_subcommand("train", "train a subject model on the genuine rows of a feature CSV");
  add_common(train_cmd, common, true);
  train_cmd->add_option("--features", train_args.features, "feature CSV")->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--max-iters", train_args.max_iters, "L-BFGS iteration cap")->check(CLI::PositiveNumber);

  auto* eval_cmd = app.add_subcommand("eval", "cross-validated genuine, mimic and replay evaluation");
  add_common(eval_cmd, common, true);
  eval_cmd->add_option("--features", eval.features, "feature CSV")->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--gates", eval.gates, "gates JSON; exit 3 when any fails")->check(CLI::ExistingFile);
  eval_cmd->add_option("--summary", eval.summary, "summary CSV (default: --out with .csv)");
  eval_cmd->add_option("--folds", eval.folds, "cross-validation folds");
  eval_cmd->add_option("--tau", eval.tau, "accept threshold");
  eval_cmd->add_option("--fusion", eval.fusion, "mean_log_prob or majority_vote");
  eval_cmd->add_option("--k", eval.ks, "comma-separated gestures per attempt")->delimiter(',');

  auto* corr_cmd = app.add_subcommand("correlation", "10 x 10 gesture correlation CSV");
  add_common(corr_cmd, common, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::CallForVersion&) {
    out << kToolVersion << '\n';
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << error_object("UsageError", e.what()) << '\n';
    return kExitUsage;
  }

  try {
    if (synth_cmd->parsed()) return cmd_synth(common, synth, out);
    if (segment_cmd->parsed()) return cmd_segment(common, segment, out);
    if (featurize_cmd->parsed()) return cmd_featurize(common, featurize_manifest_path, out);
    if (train_cmd->parsed()) return cmd_train(common, train_args, out);
    if (eval_cmd->parsed()) return cmd_eval(common, eval, out, err);
    if (corr_cmd->parsed()) return cmd_correlation(common, out);
  } catch (const Error& e) {
    err << error_object(to_string(e.code()), e.what()) << '\n';
    return kExitError;
  } catch (const std::exception& e) {
    err << error_object("InternalError", e.what()) << '\n';
    return kExitError;
  }
  return kExitUsage;
}

}  // namespace toothsonic
