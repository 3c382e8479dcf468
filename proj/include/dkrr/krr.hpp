#pragma once

#include <utility>

#include <Eigen/Cholesky>

#include "dkrr/common.hpp"
#include "dkrr/data.hpp"
#include "dkrr/kernel.hpp"

namespace dkrr {

// Cholesky factor of a symmetric positive-definite matrix. On a failed
// factorization the diagonal is shifted once by 1e-12 * trace / n and the
// factorization retried; a second failure is a hard numerical error.
inline Eigen::LLT<Matrix> spd_factor(const Matrix& a, double lambda_hint = 0.0) {
  Eigen::LLT<Matrix> llt(a);
  if (llt.info() == Eigen::Success) return llt;
  const double jitter = 1e-12 * a.trace() / static_cast<double>(a.rows());
  Matrix shifted = a;
  shifted.diagonal().array() += jitter;
  llt.compute(shifted);
  if (llt.info() != Eigen::Success)
    throw NumericalFailure(static_cast<std::size_t>(a.rows()), lambda_hint,
                           "Cholesky factorization failed after jitter");
  return llt;
}

// Solve A X = B for symmetric positive-definite A.
inline Matrix solve_spd(const Matrix& a, const Matrix& b,
                        double lambda_hint = 0.0) {
  return spd_factor(a, lambda_hint).solve(b);
}

// Kernel ridge regression in dual form: (K + lambda n I) alpha = y,
// f(x) = sum_i alpha_i K(x, anchor_i).
struct KrrModel {
  Matrix anchors;
  Vector alpha;
  double lambda = 0.0;
};

inline KrrModel fit(const Dataset& data, const Kernel& kernel, double lambda) {
  if (data.size() < 1) throw InvalidInput("fit: empty dataset");
  if (lambda <= 0.0) throw InvalidInput("fit: lambda must be positive");
  Matrix a = kernel.gram(data.inputs);
  a.diagonal().array() += lambda * static_cast<double>(data.size());
  KrrModel model;
  model.anchors = data.inputs;
  model.alpha = solve_spd(a, data.outputs, lambda);
  model.lambda = lambda;
  return model;
}

inline Vector predict(const KrrModel& model, const Matrix& query,
                      const Kernel& kernel) {
  if (query.cols() != model.anchors.cols())
    throw InvalidInput("predict: query dimension mismatch");
  return kernel.gram(query, model.anchors) * model.alpha;
}

}  // namespace dkrr
