#pragma once

#include <vector>

#include <Eigen/LU>

#include "dkrr/common.hpp"
#include "dkrr/data.hpp"
#include "dkrr/kernel.hpp"

namespace dkrr {

// Reference realization of the Newton-Raphson operator recursion in the span
// of all training kernel sections. Every iterate is a coefficient vector c
// over the full training set, f = sum_i c_i K_{x_i}; the per-machine resolvent
// (L_{K,D_j} + lambda I)^{-1} becomes a dense N x N solve with the matrix
// lambda I + R_j K / |D_j|, where R_j masks shard j's rows. Deliberately
// independent of the block-message implementation it cross-checks.
inline constexpr Eigen::Index kOracleScaleLimit = 2000;

struct OracleResult {
  Matrix train_inputs;
  std::vector<Vector> coefficients;  // c^0 .. c^L

  Vector predict(const Matrix& query, const Kernel& kernel, int ell) const {
    return kernel.gram(query, train_inputs) * coefficients.at(ell);
  }
};

inline OracleResult oracle_coefficient_iteration(const Dataset& data,
                                                 const Partition& part,
                                                 const Kernel& kernel,
                                                 double lambda, int rounds) {
  const Eigen::Index n = data.size();
  if (n > kOracleScaleLimit)
    throw InvalidInput("oracle: N exceeds dense-algebra scale");
  const std::size_t m = part.machines();
  const Matrix k_full = kernel.gram(data.inputs);

  // One LU per machine of (lambda I + R_j K / |D_j|), reused across rounds.
  std::vector<Eigen::PartialPivLU<Matrix>> resolvents;
  resolvents.reserve(m);
  std::vector<double> weights(m);
  for (std::size_t j = 0; j < m; ++j) {
    const auto& shard = part.shards[j];
    const double nj = static_cast<double>(shard.size());
    weights[j] = nj / static_cast<double>(n);
    Matrix a = Matrix::Zero(n, n);
    for (const auto i : shard) a.row(i) = k_full.row(i) / nj;
    a.diagonal().array() += lambda;
    resolvents.emplace_back(a);
  }

  OracleResult result;
  result.train_inputs = data.inputs;

  // c^0: weighted sum of per-machine solves of S_{D_j}^T y_j.
  Vector c = Vector::Zero(n);
  for (std::size_t j = 0; j < m; ++j) {
    const auto& shard = part.shards[j];
    Vector rhs = Vector::Zero(n);
    for (const auto i : shard)
      rhs(i) = data.outputs(i) / static_cast<double>(shard.size());
    c += weights[j] * resolvents[j].solve(rhs);
  }
  result.coefficients.push_back(c);

  for (int ell = 1; ell <= rounds; ++ell) {
    // Gradient (L_{K,D} + lambda I) c - S_D^T y in coefficient space.
    const Vector values = k_full * c;  // f at every training point
    Vector grad = lambda * c;
    grad += (values - data.outputs) / static_cast<double>(n);
    Vector step = Vector::Zero(n);
    for (std::size_t j = 0; j < m; ++j)
      step += weights[j] * resolvents[j].solve(grad);
    c -= step;
    result.coefficients.push_back(c);
  }
  return result;
}

}  // namespace dkrr
