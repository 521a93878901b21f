#pragma once

#include "toothsonic/error.hpp"
#include "toothsonic/random.hpp"

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

namespace toothsonic {

/// Fully connected network with ReLU hidden layers and a softmax output.
/// All parameters live in one flat vector (per layer: weight matrix in
/// column-major order, then bias) so an optimizer can treat them as a point.
template <typename Scalar>
class Mlp {
 public:
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  Mlp() = default;

  explicit Mlp(std::vector<int> sizes) : sizes_(std::move(sizes)) {
    if (sizes_.size() < 2) throw Error(ErrorCode::InvalidInput, "network needs at least two layers");
    Eigen::Index count = 0;
    for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
      if (sizes_[l] <= 0 || sizes_[l + 1] <= 0) throw Error(ErrorCode::InvalidInput, "layer sizes must be positive");
      offsets_.push_back(count);
      count += static_cast<Eigen::Index>(sizes_[l + 1]) * (sizes_[l] + 1);
    }
    params_ = Vector::Zero(count);
  }

  const std::vector<int>& sizes() const { return sizes_; }
  std::size_t layers() const { return offsets_.size(); }
  int inputs() const { return sizes_.front(); }
  int outputs() const { return sizes_.back(); }
  Eigen::Index parameter_count() const { return params_.size(); }

  const Vector& parameters() const { return params_; }
  Vector& parameters() { return params_; }

  Eigen::Map<const Matrix> weight(std::size_t l) const { return weight_of(params_.data(), l); }
  Eigen::Map<Matrix> weight(std::size_t l) { return {params_.data() + offsets_[l], rows(l), cols(l)}; }
  Eigen::Map<const Vector> bias(std::size_t l) const { return bias_of(params_.data(), l); }
  Eigen::Map<Vector> bias(std::size_t l) { return {params_.data() + offsets_[l] + rows(l) * cols(l), rows(l)}; }

  /// Scaled uniform (Xavier) weights, zero biases.
  void initialize(std::uint64_t seed) {
    Rng rng(seed);
    params_.setZero();
    for (std::size_t l = 0; l < layers(); ++l) {
      const double limit = std::sqrt(6.0 / static_cast<double>(rows(l) + cols(l)));
      auto w = weight(l);
      for (Eigen::Index j = 0; j < w.cols(); ++j)
        for (Eigen::Index i = 0; i < w.rows(); ++i) w(i, j) = static_cast<Scalar>(rng.uniform(-limit, limit));
    }
  }

  /// Output logits for a batch given as columns.
  Matrix logits(const Matrix& inputs) const {
    Matrix a = inputs;
    for (std::size_t l = 0; l < layers(); ++l) {
      Matrix z = weight(l) * a;
      z.colwise() += bias(l);
      if (l + 1 < layers()) z = z.cwiseMax(Scalar(0));
      a = std::move(z);
    }
    return a;
  }

  /// Column-wise log-softmax of the logits.
  Matrix log_probabilities(const Matrix& inputs) const { return log_softmax(logits(inputs)); }

  /// Probabilities for one input.
  Vector forward(const Vector& x) const {
    if (x.size() != inputs()) throw Error(ErrorCode::InvalidInput, "input dimension mismatch");
    if (!x.allFinite()) throw Error(ErrorCode::InvalidInput, "non-finite network input");
    return log_probabilities(Matrix(x)).col(0).array().exp().matrix();
  }

  static Matrix log_softmax(const Matrix& z) {
    Matrix out(z.rows(), z.cols());
    for (Eigen::Index j = 0; j < z.cols(); ++j) {
      const Scalar m = z.col(j).maxCoeff();
      const Scalar lse = m + std::log((z.col(j).array() - m).exp().sum());
      out.col(j) = z.col(j).array() - lse;
    }
    return out;
  }

  /// Mean cross-entropy over the batch plus l2/2 * sum of squared weights
  /// (biases are not penalised), evaluated at `params`. Writes the gradient
  /// when `grad` is non-null.
  Scalar loss_and_gradient(const Vector& params, const Matrix& inputs, const std::vector<int>& labels,
                           Scalar l2, Vector* grad) const {
    const Eigen::Index n = inputs.cols();
    if (n == 0 || static_cast<Eigen::Index>(labels.size()) != n)
      throw Error(ErrorCode::InvalidInput, "batch is empty or labels do not match");
    for (int y : labels)
      if (y < 0 || y >= outputs()) throw Error(ErrorCode::InvalidLabel, "label " + std::to_string(y) + " out of range");

    const Scalar* p = params.data();
    std::vector<Matrix> activations{inputs};
    activations.reserve(layers() + 1);
    for (std::size_t l = 0; l < layers(); ++l) {
      Matrix z(rows(l), n);
      z.noalias() = weight_of(p, l) * activations.back();
      z.colwise() += bias_of(p, l);
      if (l + 1 < layers()) z = z.cwiseMax(Scalar(0));
      activations.push_back(std::move(z));
    }
    const Matrix logp = log_softmax(activations.back());
    Scalar loss = 0;
    for (Eigen::Index j = 0; j < n; ++j) loss -= logp(labels[static_cast<std::size_t>(j)], j);
    loss /= static_cast<Scalar>(n);
    Scalar penalty = 0;
    for (std::size_t l = 0; l < layers(); ++l) penalty += weight_of(p, l).squaredNorm();
    loss += l2 * penalty / 2;
    if (grad == nullptr) return loss;

    grad->resize(params.size());
    // d(loss)/d(logits) = (softmax - onehot) / n
    Matrix delta = logp.array().exp().matrix();
    for (Eigen::Index j = 0; j < n; ++j) delta(labels[static_cast<std::size_t>(j)], j) -= Scalar(1);
    delta /= static_cast<Scalar>(n);
    for (std::size_t l = layers(); l-- > 0;) {
      const Matrix& below = activations[l];
      Eigen::Map<Matrix> gw(grad->data() + offsets_[l], rows(l), cols(l));
      Eigen::Map<Vector> gb(grad->data() + offsets_[l] + rows(l) * cols(l), rows(l));
      gw.noalias() = delta * below.transpose();
      gw += l2 * weight_of(p, l);
      gb = delta.rowwise().sum();
      if (l > 0) {
        Matrix back(cols(l), n);
        back.noalias() = weight_of(p, l).transpose() * delta;
        // ReLU derivative: the stored activation is positive exactly where z > 0.
        delta = (below.array() > Scalar(0)).select(back.array(), Scalar(0)).matrix();
      }
    }
    return loss;
  }

  Scalar loss_and_gradient(const Matrix& inputs, const std::vector<int>& labels, Scalar l2, Vector* grad) const {
    return loss_and_gradient(params_, inputs, labels, l2, grad);
  }

 private:
  Eigen::Index rows(std::size_t l) const { return sizes_[l + 1]; }
  Eigen::Index cols(std::size_t l) const { return sizes_[l]; }
  Eigen::Map<const Matrix> weight_of(const Scalar* p, std::size_t l) const {
    return {p + offsets_[l], rows(l), cols(l)};
  }
  Eigen::Map<const Vector> bias_of(const Scalar* p, std::size_t l) const {
    return {p + offsets_[l] + rows(l) * cols(l), rows(l)};
  }

  std::vector<int> sizes_;
  std::vector<Eigen::Index> offsets_;
  Vector params_;
};

}  // namespace toothsonic
