#pragma once

// Central finite-difference oracle for tape gradients. Runs entirely in
// double precision and never touches the backward rules it is checking.

#include <cmath>
#include <functional>
#include <vector>

#include "mmrec/autograd.hpp"

namespace mmrec::testing {

inline constexpr double kFiniteDifferenceStep = 1e-4;

/// ||a - b|| / max(||a||, ||b||), with a floor so all-zero gradients pass.
inline double relative_error(const Matrix<double>& a, const Matrix<double>& b) {
  double diff = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a.values()[i] - b.values()[i];
    diff += d * d;
    na += a.values()[i] * a.values()[i];
    nb += b.values()[i] * b.values()[i];
  }
  const double scale = std::max({std::sqrt(na), std::sqrt(nb), 1e-7});
  return std::sqrt(diff) / scale;
}

using LossFn = std::function<Var<double>(Tape<double>&, const std::vector<Var<double>>&)>;

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::vector<Matrix<double>> analytic;
  std::vector<Matrix<double>> numeric;
};

/// Compares tape gradients of `loss` w.r.t. each input against central
/// differences with step h.
inline GradCheckResult check_inputs(const LossFn& loss, const std::vector<Matrix<double>>& inputs,
                                    double h = kFiniteDifferenceStep) {
  GradCheckResult result;
  {
    Tape<double> tape;
    std::vector<Var<double>> vars;
    for (const auto& m : inputs) vars.push_back(tape.variable(m));
    tape.backward(loss(tape, vars));
    for (const auto& v : vars) result.analytic.push_back(tape.grad(v));
  }
  auto eval = [&](const std::vector<Matrix<double>>& xs) {
    Tape<double> tape;
    std::vector<Var<double>> vars;
    for (const auto& m : xs) vars.push_back(tape.constant(m));
    return loss(tape, vars).value()(0, 0);
  };
  auto work = inputs;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    Matrix<double> num(inputs[k].rows(), inputs[k].cols());
    for (std::size_t i = 0; i < inputs[k].size(); ++i) {
      const double x0 = work[k].values()[i];
      work[k].values()[i] = x0 + h;
      const double up = eval(work);
      work[k].values()[i] = x0 - h;
      const double down = eval(work);
      work[k].values()[i] = x0;
      num.values()[i] = (up - down) / (2.0 * h);
    }
    result.max_relative_error =
        std::max(result.max_relative_error, relative_error(result.analytic[k], num));
    result.numeric.push_back(std::move(num));
  }
  return result;
}

using ParamLossFn = std::function<Var<double>(Tape<double>&)>;

/// Same check over every scalar of every parameter in `params`. `loss` must
/// be a deterministic function of the parameter values.
inline double check_parameters(ParameterSet<double>& params, const ParamLossFn& loss,
                               double h = kFiniteDifferenceStep) {
  params.zero_grad();
  {
    Tape<double> tape;
    tape.backward(loss(tape));
  }
  double worst = 0.0;
  for (auto& p : params) {
    Matrix<double> num(p.value.rows(), p.value.cols());
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double x0 = p.value.values()[i];
      p.value.values()[i] = x0 + h;
      Tape<double> up_tape;
      const double up = loss(up_tape).value()(0, 0);
      p.value.values()[i] = x0 - h;
      Tape<double> down_tape;
      const double down = loss(down_tape).value()(0, 0);
      p.value.values()[i] = x0;
      num.values()[i] = (up - down) / (2.0 * h);
    }
    worst = std::max(worst, relative_error(p.grad, num));
  }
  return worst;
}

inline Matrix<double> random_matrix(std::size_t rows, std::size_t cols, Rng& rng,
                                    double scale = 1.0) {
  Matrix<double> m(rows, cols);
  for (auto& v : m.values()) v = scale * rng.normal();
  return m;
}

}  // namespace mmrec::testing
