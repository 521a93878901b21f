#include "toothsonic/model.hpp"

#include "toothsonic/error.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>

namespace toothsonic {

Standardizer Standardizer::fit(const Eigen::MatrixXd& samples) {
  if (samples.rows() == 0) throw Error(ErrorCode::InvalidDataset, "cannot fit a standardizer on no samples");
  Standardizer s;
  s.mean = samples.colwise().mean().transpose();
  const Eigen::MatrixXd centered = samples.rowwise() - s.mean.transpose();
  s.std = (centered.array().square().colwise().sum() / static_cast<double>(samples.rows()))
              .sqrt()
              .max(1e-8)
              .transpose()
              .matrix();
  return s;
}

Eigen::VectorXd Standardizer::transform(const Eigen::VectorXd& x) const {
  if (x.size() != mean.size()) throw Error(ErrorCode::InvalidInput, "feature dimension mismatch");
  return ((x - mean).array() / std.array()).matrix();
}

Eigen::MatrixXd Standardizer::transform_rows(const Eigen::MatrixXd& samples) const {
  if (samples.cols() != mean.size()) throw Error(ErrorCode::InvalidInput, "feature dimension mismatch");
  return ((samples.rowwise() - mean.transpose()).array().rowwise() / std.transpose().array()).matrix().transpose();
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0 && max_iters > 0 && lbfgs_history > 0 && grad_tol > 0 && l2_weight >= 0))
    throw Error(ErrorCode::InvalidConfig, "training parameters must be positive");
  for (int h : hidden)
    if (h <= 0) throw Error(ErrorCode::InvalidConfig, "hidden layer sizes must be positive");
}

int SubjectModel::class_index(int subject_id) const {
  const auto it = std::lower_bound(class_ids.begin(), class_ids.end(), subject_id);
  return it != class_ids.end() && *it == subject_id ? static_cast<int>(it - class_ids.begin()) : -1;
}

Eigen::VectorXd forward(const Mlp<double>& network, const Eigen::VectorXd& x) { return network.forward(x); }

SubjectModel train(const Eigen::MatrixXd& features, const std::vector<int>& subject_ids, const TrainConfig& cfg,
                   TrainReport* report) {
  cfg.validate();
  if (features.rows() != static_cast<Eigen::Index>(subject_ids.size()))
    throw Error(ErrorCode::InvalidDataset, "feature rows and labels differ in count");
  if (!features.allFinite()) throw Error(ErrorCode::InvalidInput, "non-finite training features");
  std::map<int, int> counts;
  for (int id : subject_ids) ++counts[id];
  if (counts.size() < 2) throw Error(ErrorCode::InvalidDataset, "training needs at least two subjects");
  for (const auto& [id, count] : counts)
    if (count < 2)
      throw Error(ErrorCode::InvalidDataset, "subject " + std::to_string(id) + " has fewer than two samples");

  SubjectModel model;
  for (const auto& [id, count] : counts) model.class_ids.push_back(id);
  std::vector<int> labels;
  labels.reserve(subject_ids.size());
  for (int id : subject_ids) labels.push_back(model.class_index(id));

  model.standardizer = Standardizer::fit(features);
  const Eigen::MatrixXd inputs = model.standardizer.transform_rows(features);

  std::vector<int> sizes{static_cast<int>(features.cols())};
  sizes.insert(sizes.end(), cfg.hidden.begin(), cfg.hidden.end());
  sizes.push_back(model.classes());
  model.network = Mlp<double>(sizes);
  model.network.initialize(cfg.seed);
  model.seed = cfg.seed;

  LbfgsOptions<double> opt;
  opt.history = cfg.lbfgs_history;
  opt.max_iters = cfg.max_iters;
  opt.grad_tol = cfg.grad_tol;
  opt.initial_step = cfg.learning_rate;
  const auto& net = model.network;
  auto objective = [&](const Eigen::VectorXd& p, Eigen::VectorXd& g) {
    return net.loss_and_gradient(p, inputs, labels, cfg.l2_weight, &g);
  };
  auto result = minimize_lbfgs<double>(objective, net.parameters(), opt);
  model.network.parameters() = result.x;

  if (report != nullptr) {
    report->final_loss = result.value;
    report->grad_norm = result.grad_norm;
    report->iterations = result.iterations;
    report->evaluations = result.evaluations;
    report->stop_reason = result.stop_reason;
    report->loss_history = std::move(result.values);
  }
  return model;
}

int argmax_lowest(const Eigen::VectorXd& v) {
  int best = 0;
  for (Eigen::Index i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = static_cast<int>(i);
  return best;
}

Eigen::VectorXd log_probabilities(const SubjectModel& model, const Eigen::VectorXd& x) {
  if (!x.allFinite()) throw Error(ErrorCode::InvalidInput, "non-finite feature vector");
  const Eigen::MatrixXd z = model.standardizer.transform(x);
  return model.network.log_probabilities(z).col(0);
}

Prediction predict(const SubjectModel& model, const Eigen::VectorXd& x) {
  if (!x.allFinite()) throw Error(ErrorCode::InvalidInput, "non-finite feature vector");
  Prediction p;
  p.probabilities = model.network.forward(model.standardizer.transform(x));
  p.class_index = argmax_lowest(p.probabilities);
  p.subject_id = model.class_ids[static_cast<std::size_t>(p.class_index)];
  return p;
}

namespace {

std::vector<double> to_vector(const Eigen::Ref<const Eigen::VectorXd>& v) { return {v.data(), v.data() + v.size()}; }

Eigen::VectorXd from_vector(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace

nlohmann::json to_json(const SubjectModel& model) {
  nlohmann::json layers = nlohmann::json::array();
  for (std::size_t l = 0; l < model.network.layers(); ++l) {
    const auto w = model.network.weight(l);
    // Row-major on disk.
    const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm = w;
    layers.push_back({{"rows", rm.rows()},
                      {"cols", rm.cols()},
                      {"weights", std::vector<double>(rm.data(), rm.data() + rm.size())},
                      {"bias", to_vector(model.network.bias(l))}});
  }
  return {{"format", "toothsonic-model"},
          {"format_version", kModelFormatVersion},
          {"layer_sizes", model.network.sizes()},
          {"class_ids", model.class_ids},
          {"seed", model.seed},
          {"standardizer", {{"mean", to_vector(model.standardizer.mean)}, {"std", to_vector(model.standardizer.std)}}},
          {"layers", layers}};
}

SubjectModel model_from_json(const nlohmann::json& j) {
  try {
    const int version = j.at("format_version").get<int>();
    if (version != kModelFormatVersion)
      throw Error(ErrorCode::FormatError, "unsupported model format version " + std::to_string(version));
    SubjectModel model;
    model.network = Mlp<double>(j.at("layer_sizes").get<std::vector<int>>());
    model.class_ids = j.at("class_ids").get<std::vector<int>>();
    model.seed = j.at("seed").get<std::uint64_t>();
    model.standardizer.mean = from_vector(j.at("standardizer").at("mean").get<std::vector<double>>());
    model.standardizer.std = from_vector(j.at("standardizer").at("std").get<std::vector<double>>());
    const auto& layers = j.at("layers");
    if (layers.size() != model.network.layers()) throw Error(ErrorCode::FormatError, "layer count mismatch");
    for (std::size_t l = 0; l < layers.size(); ++l) {
      auto w = model.network.weight(l);
      const auto weights = layers[l].at("weights").get<std::vector<double>>();
      const auto bias = layers[l].at("bias").get<std::vector<double>>();
      if (static_cast<Eigen::Index>(weights.size()) != w.size() ||
          static_cast<Eigen::Index>(bias.size()) != model.network.bias(l).size())
        throw Error(ErrorCode::FormatError, "layer " + std::to_string(l) + " has the wrong shape");
      w = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
          weights.data(), w.rows(), w.cols());
      model.network.bias(l) = from_vector(bias);
    }
    if (model.classes() != model.network.outputs() || model.standardizer.mean.size() != model.network.inputs() ||
        model.standardizer.std.size() != model.network.inputs())
      throw Error(ErrorCode::FormatError, "model sizes are inconsistent");
    return model;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::FormatError, std::string("malformed model file: ") + e.what());
  }
}

void save_model(const std::filesystem::path& path, const SubjectModel& model, const nlohmann::json& provenance) {
  nlohmann::json j = to_json(model);
  if (!provenance.is_null()) j["provenance"] = provenance;
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  out << j.dump(1) << '\n';
}

SubjectModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::FormatError, path.string() + ": " + e.what());
  }
  return model_from_json(j);
}

}  // namespace toothsonic
