#pragma once

#include "toothsonic/config.hpp"
#include "toothsonic/features.hpp"
#include "toothsonic/manifest.hpp"
#include "toothsonic/segment.hpp"

#include <json.hpp>

#include <atomic>
#include <exception>
#include <filesystem>
#include <functional>
#include <mutex>
#include <optional>
#include <thread>
#include <vector>

namespace toothsonic {

/// Runs fn(i) for i in [0, n) on up to `jobs` threads. The first exception is
/// rethrown after all workers stop.
inline void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& fn) {
  const auto workers = static_cast<std::size_t>(std::max(1, jobs));
  if (workers == 1 || n < 2) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto work = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
        next = n;
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < std::min(workers, n); ++w) pool.emplace_back(work);
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

/// One row of the feature file.
struct FeatureRow {
  int subject_id = 0;
  int gesture_id = 0;
  int rep = 0;
  AttemptKind kind = AttemptKind::Genuine;
  FeatureVector x;
};

using FeatureTable = std::vector<FeatureRow>;

/// CSV: a `# toothsonic <version> config=<hash>` line, a header with the 66
/// feature names then subject_id, gesture_id, rep, kind, then one row per attempt.
void write_features_csv(const std::filesystem::path& path, const FeatureTable& table, const std::string& config_hash);
FeatureTable read_features_csv(const std::filesystem::path& path);

/// Band-pass and segment a clip.
std::vector<GestureSegment> segment_clip(const AudioClip& clip, const PipelineConfig& cfg);

/// Feature vector of the highest-energy segment, or nothing when the clip
/// has no segment.
std::optional<FeatureVector> featurize_clip(const AudioClip& clip, const PipelineConfig& cfg);

/// Featurizes every clip of a manifest; clips without segments are skipped and logged.
FeatureTable featurize_manifest(const Manifest& m, const PipelineConfig& cfg, int jobs = 1);

/// Synthesizes and featurizes a corpus without touching the disk.
struct CorpusFeatures {
  FeatureTable table;
  std::vector<PlannedClip> skipped;
};
CorpusFeatures featurize_corpus(const PipelineConfig& cfg, int jobs = 1);

/// {clip, start_s, end_s, gesture_label?, mean_hr}
nlohmann::json to_json(const GestureSegment& seg);

}  // namespace toothsonic
