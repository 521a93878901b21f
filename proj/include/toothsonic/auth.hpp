#pragma once

#include "toothsonic/config.hpp"
#include "toothsonic/model.hpp"
#include "toothsonic/pipeline.hpp"

#include <Eigen/Core>
#include <json.hpp>

#include <array>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace toothsonic {

struct AuthDecision {
  bool accept = false;
  int predicted_id = -1;           // fused argmax, ties to the lowest class index
  double confidence = 0.0;         // normalized fused probability (or vote share) of the claimed id
  Eigen::VectorXd fused_log_prob;  // mean of the per-gesture log-probabilities
};

/// Fuses per-gesture log-probability vectors (one per gesture, ordered as
/// class_ids) and applies the accept rule for `claimed_id`.
AuthDecision decide(const std::vector<int>& class_ids, int claimed_id, const std::vector<Eigen::VectorXd>& log_probs,
                    const AuthPolicy& policy);

/// Throws UnknownSubject if the model was not trained on claimed_id and
/// InvalidInput for an empty attempt.
AuthDecision authenticate(const SubjectModel& model, int claimed_id, const std::vector<FeatureVector>& gestures,
                          const AuthPolicy& policy);

struct AttemptRecord {
  int claimed_id = 0;
  int true_id = 0;
  AttemptKind kind = AttemptKind::Genuine;
  std::vector<int> gesture_ids;
  std::vector<std::size_t> rows;  // feature-table rows of the gestures
  int fold = 0;
  bool accept = false;
  int predicted_id = -1;
  double confidence = 0.0;

  bool genuine() const { return kind == AttemptKind::Genuine && claimed_id == true_id; }
};

/// Undefined rates are empty, never 0.
struct Metrics {
  std::size_t attempts = 0;
  std::size_t genuine = 0;
  std::size_t adversarial = 0;
  std::size_t false_rejects = 0;
  std::size_t false_accepts = 0;
  std::optional<double> frr, far, bac, accuracy;
};

Metrics compute_metrics(const std::vector<AttemptRecord>& attempts);
nlohmann::json to_json(const Metrics& m);

/// Groups k held-out rows of one subject and kind into attempts: each row is
/// an anchor joined by k-1 other rows with distinct gestures, drawn with
/// `seed`. Anchors that cannot be completed are skipped.
std::vector<std::vector<std::size_t>> attempt_tuples(const FeatureTable& table, const std::vector<std::size_t>& rows,
                                                     int k, std::uint64_t seed);

/// Every genuine tuple re-presented against each other enrolled subject.
std::vector<AttemptRecord> mimic_protocol(const std::vector<AttemptRecord>& genuine, const std::vector<int>& subject_ids);

/// Replay tuples claimed as their own subject. Throws EmptyProtocol when
/// there are none.
std::vector<AttemptRecord> replay_protocol(const FeatureTable& table, const std::vector<std::vector<std::size_t>>& tuples,
                                           int fold);

/// Seeded per-(subject, gesture, kind) fold assignment: position in the
/// shuffled group modulo folds. Throws InvalidProtocol when a genuine group
/// has fewer rows than folds.
std::vector<int> assign_folds(const FeatureTable& table, int folds, std::uint64_t seed);

struct EvalOptions {
  EvalConfig eval;
  TrainConfig train;
  std::uint64_t seed = 1;
  int jobs = 1;
};

struct KResult {
  int k = 1;
  std::vector<AttemptRecord> attempts;  // genuine, mimic, replay, advanced mimic
  Metrics overall;                      // genuine + mimic
  std::map<std::string, Metrics> protocols;
};

struct EvalReport {
  int folds = 0;
  std::vector<int> subject_ids;
  std::vector<KResult> results;
  std::map<int, Metrics> per_gesture;  // k = 1, genuine + mimic
  Eigen::MatrixXi confusion;           // k = 1 genuine: rows true, columns predicted
  std::vector<TrainReport> training;

  const KResult& at(int k) const;
};

EvalReport crossvalidate(const FeatureTable& table, const EvalOptions& opt);

/// Per (subject, gesture): distance between the attack centroid and the
/// genuine centroid, and the genuine spread (RMS distance of genuine rows to
/// their centroid). Features are standardized over all genuine rows.
struct SeparationGroup {
  int subject_id = 0;
  int gesture_id = 0;
  double centroid_distance = 0.0;
  double genuine_spread = 0.0;
};
struct SeparationStats {
  std::vector<SeparationGroup> groups;
  double separated_fraction() const;
  double mean_distance() const;
  double mean_spread() const;
};
SeparationStats replay_separation(const FeatureTable& table, AttemptKind attack = AttemptKind::Replay);
nlohmann::json to_json(const SeparationStats& s);

nlohmann::json to_json(const EvalReport& r, const SeparationStats* separation = nullptr);
/// One row per protocol and k.
std::string summary_csv(const EvalReport& r);

/// Checks `{"gates": [{"path": "/results/k1/overall/bac", "op": ">=", "value": 0.9}]}`
/// against a report. Returns the failed gate descriptions.
std::vector<std::string> failed_gates(const nlohmann::json& report, const nlohmann::json& gates);

/// Gesture-by-factor check table (10 x 14) as transcribed.
const std::array<std::array<bool, 14>, 10>& gesture_factor_table();
/// Published pairwise gesture correlations in percent, for comparison only.
const std::array<std::array<double, 10>, 10>& reference_gesture_correlation();
/// 100 * Jaccard index between factor sets.
Eigen::Matrix<double, 10, 10> gesture_correlation();

}  // namespace toothsonic
