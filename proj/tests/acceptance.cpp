// Acceptance suite: one PASS/FAIL line per criterion.

#define DOCTEST_CONFIG_DISABLE  // only the helpers are shared with the unit tests

#include "oracles.hpp"

#include "toothsonic/auth.hpp"
#include "toothsonic/cli.hpp"
#include "toothsonic/features.hpp"
#include "toothsonic/pipeline.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

using namespace toothsonic;
using namespace testing;
using nlohmann::json;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

class Timer {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::string rate(const std::optional<double>& v) { return v ? fmt("%.4f", *v) : "NA"; }

// --- 1 ---------------------------------------------------------------------

Outcome dsp_oracles() {
  Timer timer;
  double worst_mfcc = 0, worst_power = 0, worst_acf = 0, worst_delta = 0, worst_stats = 0, worst_lpc = 0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const Eigen::ArrayXd x = white(4000, 100 + seed, 0.1) + sine(300.0 + 250.0 * seed, 4000, 0.5);
    const auto frames = frame_signal(x);
    const Eigen::MatrixXd fast = mfcc(frames), slow = brute_mfcc(x);
    worst_mfcc = std::max(worst_mfcc, (fast - slow).cwiseAbs().maxCoeff());
    worst_delta = std::max(worst_delta, (delta_mfcc(fast) - brute_delta(fast)).cwiseAbs().maxCoeff());

    const Eigen::ArrayXd frame = x.head(kFrameLen) * hamming(kFrameLen);
    const auto p = brute_power(frame);
    worst_power = std::max(worst_power, (power_spectrum(frame).power - p).abs().maxCoeff() / p.maxCoeff());
    worst_acf = std::max(worst_acf, (normalized_autocorrelation(x.head(kFrameLen), 320) -
                                     brute_autocorrelation(x.head(kFrameLen), 320)).abs().maxCoeff());

    const auto st = spectral_stats(power_spectrum(frame));
    const auto bs = brute_spectral_stats(frame);
    for (auto [a, b] : {std::pair{st.entropy, bs.entropy}, {st.flatness, bs.flatness}, {st.crest, bs.crest},
                        {st.centroid_hz, bs.centroid_hz}})
      worst_stats = std::max(worst_stats, std::abs(a - b) / std::max(1.0, std::abs(b)));

    const auto r = lag_products(frame, kLpcOrder);
    worst_lpc = std::max(worst_lpc, (levinson_durbin(r, kLpcOrder).coefficients - toeplitz_lpc(r, kLpcOrder))
                                        .cwiseAbs()
                                        .maxCoeff());
  }
  const double secs = timer.seconds();
  const bool pass = worst_mfcc <= 1e-6 && worst_delta <= 1e-9 && worst_power <= 1e-9 && worst_acf <= 1e-9 &&
                    worst_stats <= 1e-9 && worst_lpc <= 1e-8 && secs < 10.0;
  std::ostringstream d;
  d << "mfcc " << fmt("%.1e", worst_mfcc) << ", power " << fmt("%.1e", worst_power) << ", acf "
    << fmt("%.1e", worst_acf) << ", delta " << fmt("%.1e", worst_delta) << ", stats " << fmt("%.1e", worst_stats)
    << ", levinson " << fmt("%.1e", worst_lpc) << ", " << fmt("%.2f", secs) << " s";
  return {pass, d.str()};
}

// --- 2 ---------------------------------------------------------------------

Outcome gradient_check() {
  Timer timer;
  Rng rng(2024);
  double worst = 0;
  const std::vector<std::vector<int>> shapes = {{4, 6, 3}, {6, 8, 5, 4}, {3, 5, 5, 2}, {10, 12, 7}};
  for (std::size_t trial = 0; trial < 12; ++trial) {
    const auto& sizes = shapes[trial % shapes.size()];
    Mlp<double> net(sizes);
    for (auto& p : net.parameters()) p = rng.uniform(-1.0, 1.0);
    Eigen::MatrixXd x(sizes.front(), 12);
    for (auto& v : x.reshaped()) v = rng.normal();
    std::vector<int> y;
    for (int i = 0; i < 12; ++i) y.push_back(rng.integer(0, sizes.back() - 1));
    worst = std::max(worst, max_relative_gradient_error(net, x, y, trial % 3 == 0 ? 1e-2 : 0.0));
  }
  const double secs = timer.seconds();
  return {worst < 1e-4 && secs < 5.0, "max relative error " + fmt("%.2e", worst) + ", " + fmt("%.2f", secs) + " s"};
}

// --- 3 ---------------------------------------------------------------------

Outcome segmentation_recall(const PipelineConfig& cfg, int jobs) {
  Timer timer;
  std::vector<PlannedClip> plan;
  for (const auto& c : plan_corpus(cfg.corpus))
    if (c.spec.kind == AttemptKind::Genuine) plan.push_back(c);
  const auto subjects = corpus_subjects(cfg);
  std::vector<char> hit(plan.size(), 0);
  parallel_for(plan.size(), jobs, [&](std::size_t i) {
    const SynthClip sc = render_clip(cfg, subjects, plan[i]);
    for (const auto& seg : segment_clip(sc.clip, cfg))
      if (std::abs(seg.start_s - sc.onset_s) <= 0.025) hit[i] = 1;
  });
  const auto found = std::count(hit.begin(), hit.end(), 1);
  const double recall = static_cast<double>(found) / static_cast<double>(plan.size());

  const int noise_clips = 100;
  std::vector<std::size_t> false_events(noise_clips, 0);
  parallel_for(noise_clips, jobs, [&](std::size_t i) {
    const double level = 1e-4 * std::pow(100.0, static_cast<double>(i) / (noise_clips - 1));
    AudioClip clip;
    clip.samples = level * colored_noise(NoiseColor::Pink, 2 * kSampleRate, derive_seed(cfg.seed, {3, i}));
    false_events[i] = segment_clip(clip, cfg).size();
  });
  std::size_t total_false = 0;
  for (auto f : false_events) total_false += f;
  const double secs = timer.seconds();
  std::ostringstream d;
  d << "recall " << fmt("%.4f", recall) << " (" << found << "/" << plan.size() << " within 25 ms), " << total_false
    << " events on " << noise_clips << " noise clips, " << fmt("%.1f", secs) << " s";
  return {recall >= 0.95 && total_false == 0 && secs < 120.0, d.str()};
}

// --- 4-7 -------------------------------------------------------------------

struct CorpusRun {
  FeatureTable table;
  std::size_t skipped = 0;
  EvalReport report;
  SeparationStats separation;
  double seconds = 0;
};

EvalOptions eval_options(const PipelineConfig& cfg, int jobs) {
  EvalOptions opt;
  opt.eval = cfg.eval;
  opt.train = cfg.train_config();
  opt.seed = derive_seed(cfg.seed, {8});
  opt.jobs = jobs;
  return opt;
}

CorpusRun run_corpus(const PipelineConfig& cfg, int jobs, bool with_replay = true) {
  Timer timer;
  CorpusRun run;
  auto cf = featurize_corpus(cfg, jobs);
  run.table = std::move(cf.table);
  run.skipped = cf.skipped.size();
  run.report = crossvalidate(run.table, eval_options(cfg, jobs));
  if (with_replay) run.separation = replay_separation(run.table);
  run.seconds = timer.seconds();
  return run;
}

Outcome single_gesture(const CorpusRun& run) {
  const auto& m = run.report.at(1).overall;
  std::ostringstream d;
  d << "k=1 BAC " << rate(m.bac) << ", FRR " << rate(m.frr) << ", FAR " << rate(m.far) << " over " << m.attempts
    << " attempts, " << run.table.size() << " rows (" << run.skipped << " clips unsegmented), "
    << fmt("%.1f", run.seconds) << " s";
  const bool pass = m.bac && *m.bac >= 0.90 && m.frr && *m.frr <= 0.10 && m.far && *m.far <= 0.10 && run.seconds < 600;
  return {pass, d.str()};
}

Outcome fusion_monotonicity(const CorpusRun& run) {
  const auto b1 = run.report.at(1).overall.bac, b3 = run.report.at(3).overall.bac, b5 = run.report.at(5).overall.bac;
  std::ostringstream d;
  d << "BAC k=1 " << rate(b1) << ", k=3 " << rate(b3) << ", k=5 " << rate(b5);
  const bool pass = b1 && b3 && b5 && *b3 - *b1 >= -0.005 && *b5 - *b3 >= -0.005;
  return {pass, d.str()};
}

Outcome replay_rejection(const CorpusRun& run) {
  const auto& m = run.report.at(1).protocols.at("replay");
  const auto& s = run.separation;
  std::ostringstream d;
  d << "replay FAR " << rate(m.far) << " (" << m.false_accepts << "/" << m.adversarial << "), centroid distance "
    << fmt("%.3f", s.mean_distance()) << " vs genuine spread " << fmt("%.3f", s.mean_spread()) << ", "
    << fmt("%.3f", s.separated_fraction()) << " of groups separated";
  const bool pass = m.far && *m.far <= 0.05 && s.mean_distance() > s.mean_spread();
  return {pass, d.str()};
}

Outcome mimic_rejection(const CorpusRun& run) {
  const auto& m = run.report.at(1).protocols.at("mimic");
  std::ostringstream d;
  d << "mimic FAR " << rate(m.far) << " (" << m.false_accepts << "/" << m.adversarial << ")";
  return {m.far && *m.far <= 0.10, d.str()};
}

// --- 8 ---------------------------------------------------------------------

Outcome environment_ranking(const PipelineConfig& base, int jobs, int reps) {
  Timer timer;
  std::vector<std::pair<EnvProfile, double>> bac;
  for (const auto& env : base.env_profiles) {
    PipelineConfig cfg = base;
    cfg.corpus.envs = {env.name};
    cfg.corpus.reps = reps;
    cfg.corpus.replay_reps = 0;
    cfg.corpus.advanced_mimic_reps = 0;
    cfg.eval.ks = {1};
    const auto run = run_corpus(cfg, jobs, false);
    bac.emplace_back(env, run.report.at(1).overall.bac.value_or(0.0));
  }
  // Higher SNR must not rank lower by more than the tie allowance.
  bool pass = true;
  std::ostringstream d;
  for (std::size_t i = 0; i < bac.size(); ++i) {
    d << bac[i].first.name << " (" << bac[i].first.snr_db << " dB) " << fmt("%.4f", bac[i].second) << ", ";
    for (std::size_t j = 0; j < bac.size(); ++j)
      if (bac[i].first.snr_db > bac[j].first.snr_db && bac[i].second < bac[j].second - 0.01) pass = false;
  }
  d << reps << " reps per gesture, " << fmt("%.1f", timer.seconds()) << " s";
  return {pass, d.str()};
}

// --- 9 ---------------------------------------------------------------------

std::string slurp(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream s;
  s << f.rdbuf();
  return s.str();
}

int cli(std::vector<std::string> args) {
  args.insert(args.begin(), "toothsonic");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  if (code != 0) std::cerr << err.str();
  return code;
}

Outcome determinism(const std::filesystem::path& workdir, int jobs) {
  Timer timer;
  std::vector<std::filesystem::path> dirs = {workdir / "determinism_a", workdir / "determinism_b"};
  for (std::size_t i = 0; i < 2; ++i) {
    const auto& d = dirs[i];
    std::filesystem::remove_all(d);
    std::filesystem::create_directories(d);
    // The second run uses a different thread count as well.
    const std::string j = std::to_string(i == 0 ? 1 : std::max(2, jobs));
    const std::string corpus = (d / "corpus").string();
    int rc = cli({"synth", "--out", corpus, "--seed", "42", "--jobs", j, "--subjects", "4", "--reps", "6", "--gestures",
                  "1,4,7,10", "--replay-reps", "2", "--advanced-mimic-reps", "2"});
    rc |= cli({"featurize", "--manifest", corpus + "/manifest.jsonl", "--out", (d / "features.csv").string(), "--seed",
               "42", "--jobs", j});
    rc |= cli({"train", "--features", (d / "features.csv").string(), "--out", (d / "model.json").string(), "--seed",
               "42"});
    rc |= cli({"eval", "--features", (d / "features.csv").string(), "--out", (d / "report.json").string(), "--seed",
               "42", "--folds", "3", "--k", "1,3", "--jobs", j});
    if (rc != 0) return {false, "pipeline run failed"};
  }
  std::size_t files = 0, differing = 0;
  for (const auto& e : std::filesystem::recursive_directory_iterator(dirs[0])) {
    if (!e.is_regular_file()) continue;
    ++files;
    if (slurp(e.path()) != slurp(dirs[1] / std::filesystem::relative(e.path(), dirs[0]))) ++differing;
  }
  std::ostringstream d;
  d << files << " files compared (manifest, WAVs, features, model, report), " << differing << " differ, "
    << fmt("%.1f", timer.seconds()) << " s";
  return {differing == 0 && files > 4, d.str()};
}

// --- 10 --------------------------------------------------------------------

Outcome metric_arithmetic() {
  std::vector<AttemptRecord> attempts;
  for (int i = 0; i < 10; ++i) {
    AttemptRecord a;
    a.claimed_id = a.true_id = 1;
    a.accept = i >= 2;  // 2 of 10 genuine rejected
    attempts.push_back(a);
  }
  for (int i = 0; i < 20; ++i) {
    AttemptRecord a;
    a.claimed_id = 1;
    a.true_id = 2;
    a.kind = AttemptKind::Mimic;
    a.accept = i == 0;  // 1 of 20 impostors accepted
    attempts.push_back(a);
  }
  const auto m = compute_metrics(attempts);
  const double tpr = 8.0 / 10.0, tnr = 19.0 / 20.0;
  const bool pass = m.frr == 0.2 && m.far == 0.05 && m.bac == 0.875 && m.bac == (tpr + tnr) / 2.0;
  return {pass, "FRR " + rate(m.frr) + ", FAR " + rate(m.far) + ", BAC " + rate(m.bac)};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance suite"};
  std::string workdir = "acceptance_work";
  int jobs = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  int env_reps = 50;
  app.add_option("--workdir", workdir, "scratch directory");
  app.add_option("--jobs", jobs, "worker threads")->check(CLI::PositiveNumber);
  app.add_option("--env-reps", env_reps, "genuine repetitions per gesture in each environment corpus")
      ->check(CLI::PositiveNumber);
  CLI11_PARSE(app, argc, argv);
  std::filesystem::create_directories(workdir);

  json results = json::array();
  int failures = 0;
  auto report = [&](int id, const std::string& name, const Outcome& o) {
    std::cout << (o.pass ? "PASS" : "FAIL") << " [" << id << "] " << name << ": " << o.detail << std::endl;
    results.push_back({{"criterion", id}, {"name", name}, {"pass", o.pass}, {"detail", o.detail}});
    failures += !o.pass;
  };
  auto guarded = [&](int id, const std::string& name, auto&& fn) {
    try {
      report(id, name, fn());
    } catch (const std::exception& e) {
      report(id, name, {false, std::string("threw: ") + e.what()});
    }
  };

  const PipelineConfig cfg;
  guarded(1, "dsp oracles", dsp_oracles);
  guarded(2, "gradient check", gradient_check);
  guarded(3, "segmentation recall", [&] { return segmentation_recall(cfg, jobs); });

  std::optional<CorpusRun> run;
  try {
    run = run_corpus(cfg, jobs);
  } catch (const std::exception& e) {
    std::cerr << "default corpus run failed: " << e.what() << '\n';
  }
  auto with_run = [&](auto&& fn) {
    return [&, fn]() -> Outcome {
      if (!run) return {false, "default corpus run failed"};
      return fn(*run);
    };
  };
  guarded(4, "single-gesture authentication", with_run(single_gesture));
  guarded(5, "fusion monotonicity", with_run(fusion_monotonicity));
  guarded(6, "replay rejection", with_run(replay_rejection));
  guarded(7, "mimic rejection", with_run(mimic_rejection));
  if (run) {
    std::ofstream f(std::filesystem::path(workdir) / "default_report.json");
    f << report_document(cfg, run->report, &run->separation).dump(2) << '\n';
  }
  guarded(8, "environment ranking", [&] { return environment_ranking(cfg, jobs, env_reps); });
  guarded(9, "determinism", [&] { return determinism(workdir, jobs); });
  guarded(10, "metric arithmetic", metric_arithmetic);

  std::ofstream(std::filesystem::path(workdir) / "acceptance.json") << results.dump(2) << '\n';
  std::cout << (10 - failures) << "/10 criteria passed" << std::endl;
  return failures == 0 ? 0 : 1;
}
