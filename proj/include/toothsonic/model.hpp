#pragma once

#include "toothsonic/features.hpp"
#include "toothsonic/lbfgs.hpp"
#include "toothsonic/mlp.hpp"

#include <json.hpp>

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace toothsonic {

inline constexpr int kModelFormatVersion = 1;

/// Per-dimension z-scoring fitted on a training split.
struct Standardizer {
  Eigen::VectorXd mean;
  Eigen::VectorXd std;

  /// Rows of `samples` are observations. std is floored at 1e-8.
  static Standardizer fit(const Eigen::MatrixXd& samples);
  Eigen::VectorXd transform(const Eigen::VectorXd& x) const;
  /// Returns a dim x n matrix (observations as columns) ready for the network.
  Eigen::MatrixXd transform_rows(const Eigen::MatrixXd& samples) const;
};

struct TrainConfig {
  std::vector<int> hidden = {128, 64};
  double learning_rate = 0.01;
  int max_iters = 500;
  int lbfgs_history = 10;
  double grad_tol = 1e-5;
  double l2_weight = 1e-4;
  std::uint64_t seed = 1;

  void validate() const;
};

struct TrainReport {
  double final_loss = 0.0;
  double grad_norm = 0.0;
  int iterations = 0;
  int evaluations = 0;
  std::string stop_reason;
  std::vector<double> loss_history;
};

/// Standardizer + network + the subject id behind each output class.
struct SubjectModel {
  Standardizer standardizer;
  Mlp<double> network;
  std::vector<int> class_ids;  // ascending subject ids
  std::uint64_t seed = 0;

  int classes() const { return static_cast<int>(class_ids.size()); }
  /// Class index of a subject id, or -1.
  int class_index(int subject_id) const;
};

/// Probabilities of the raw network for an already standardized input.
Eigen::VectorXd forward(const Mlp<double>& network, const Eigen::VectorXd& x);

/// Full-batch L-BFGS training on rows of `features` labelled by subject id.
/// Throws InvalidDataset with fewer than two classes or a class with fewer
/// than two samples.
SubjectModel train(const Eigen::MatrixXd& features, const std::vector<int>& subject_ids, const TrainConfig& cfg,
                   TrainReport* report = nullptr);

struct Prediction {
  int subject_id = -1;
  int class_index = -1;
  Eigen::VectorXd probabilities;
};

/// Argmax class, ties broken by the lowest class index.
int argmax_lowest(const Eigen::VectorXd& v);

/// Log-probabilities over classes for a raw (unstandardized) feature vector.
Eigen::VectorXd log_probabilities(const SubjectModel& model, const Eigen::VectorXd& x);

Prediction predict(const SubjectModel& model, const Eigen::VectorXd& x);

nlohmann::json to_json(const SubjectModel& model);
SubjectModel model_from_json(const nlohmann::json& j);
void save_model(const std::filesystem::path& path, const SubjectModel& model, const nlohmann::json& provenance = {});
SubjectModel load_model(const std::filesystem::path& path);

}  // namespace toothsonic
