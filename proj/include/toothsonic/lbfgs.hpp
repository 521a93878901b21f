#pragma once

#include <Eigen/Core>

#include <cmath>
#include <deque>
#include <string>
#include <vector>

namespace toothsonic {

template <typename Scalar>
struct LbfgsOptions {
  int history = 10;
  int max_iters = 500;
  Scalar grad_tol = Scalar(1e-5);
  /// Length of the first step along the steepest-descent direction.
  Scalar initial_step = Scalar(0.01);
  Scalar armijo = Scalar(1e-4);
  Scalar shrink = Scalar(0.5);
  int max_backtracks = 60;
};

template <typename Scalar>
struct LbfgsResult {
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> x;
  Scalar value = 0;
  Scalar grad_norm = 0;
  int iterations = 0;
  int evaluations = 0;
  bool converged = false;
  std::string stop_reason;
  /// Objective value at the start and after every accepted step.
  std::vector<Scalar> values;
};

/// Limited-memory BFGS with the two-loop recursion and Armijo backtracking.
/// `objective(x, grad)` returns f(x) and writes the gradient into `grad`.
template <typename Scalar, typename Objective>
LbfgsResult<Scalar> minimize_lbfgs(Objective&& objective, Eigen::Matrix<Scalar, Eigen::Dynamic, 1> x,
                                   const LbfgsOptions<Scalar>& opt = {}) {
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  struct Pair {
    Vector s, y;
    Scalar rho;
  };

  LbfgsResult<Scalar> res;
  Vector g(x.size());
  Scalar f = objective(x, g);
  ++res.evaluations;
  res.values.push_back(f);
  std::deque<Pair> memory;

  Vector g_new(x.size());
  for (;;) {
    const Scalar gnorm = g.norm();
    res.grad_norm = gnorm;
    if (gnorm < opt.grad_tol) {
      res.converged = true;
      res.stop_reason = "gradient tolerance";
      break;
    }
    if (res.iterations >= opt.max_iters) {
      res.stop_reason = "max iterations";
      break;
    }

    Vector d;
    Scalar step = 1;
    if (!memory.empty()) {
      Vector q = g;
      std::vector<Scalar> alpha(memory.size());
      for (std::size_t i = memory.size(); i-- > 0;) {
        alpha[i] = memory[i].rho * memory[i].s.dot(q);
        q -= alpha[i] * memory[i].y;
      }
      const Pair& last = memory.back();
      q *= last.s.dot(last.y) / last.y.squaredNorm();
      for (std::size_t i = 0; i < memory.size(); ++i) {
        const Scalar beta = memory[i].rho * memory[i].y.dot(q);
        q += (alpha[i] - beta) * memory[i].s;
      }
      d = -q;
    }
    if (memory.empty() || !(d.dot(g) < 0)) {
      memory.clear();
      d = -g;
      step = opt.initial_step / gnorm;
    }

    const Scalar slope = d.dot(g);
    Vector x_new;
    Scalar f_new = 0;
    bool accepted = false;
    for (int k = 0; k <= opt.max_backtracks; ++k) {
      x_new = x + step * d;
      f_new = objective(x_new, g_new);
      ++res.evaluations;
      if (std::isfinite(static_cast<double>(f_new)) && f_new <= f + opt.armijo * step * slope) {
        accepted = true;
        break;
      }
      step *= opt.shrink;
    }
    if (!accepted) {
      res.stop_reason = "line search failed";
      break;
    }

    Vector s = x_new - x, y = g_new - g;
    const Scalar sy = s.dot(y);
    if (sy > Scalar(1e-12) * s.norm() * y.norm()) {
      memory.push_back({std::move(s), std::move(y), Scalar(1) / sy});
      if (static_cast<int>(memory.size()) > opt.history) memory.pop_front();
    }
    x = std::move(x_new);
    g.swap(g_new);
    f = f_new;
    ++res.iterations;
    res.values.push_back(f);
  }
  res.x = std::move(x);
  res.value = f;
  return res;
}

}  // namespace toothsonic
