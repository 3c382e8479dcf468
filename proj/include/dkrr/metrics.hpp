#pragma once

#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "dkrr/common.hpp"

namespace dkrr {

struct MetricsRecord {
  std::string simulation;
  std::string task;
  std::string kernel;
  long long n = 0;
  long long m = 0;
  int ell = 0;
  double lambda = 0.0;
  int trial = 0;
  long long seed = 0;
  std::string criterion;  // GMSE | AE | AEC | RE | REC | ...
  double value = 0.0;
  double wall_time_s = 0.0;
  bool diverged = false;
  long long comm_floats = 0;
};

inline double mse(const Vector& predictions, const Vector& truths) {
  if (predictions.size() != truths.size() || predictions.size() < 1)
    throw InvalidInput("mse: vectors must have equal nonzero length");
  return (predictions - truths).squaredNorm() /
         static_cast<double>(predictions.size());
}

// RE = |AE - GMSE| / GMSE (and likewise REC for the communicated variant).
inline double relative_error(double dist_mse, double gmse) {
  if (gmse <= 0.0) throw InvalidInput("relative_error: gmse must be positive");
  return std::abs(dist_mse - gmse) / gmse;
}

// Largest scanned machine count whose relative error stays below epsilon;
// empty when no grid point qualifies.
inline std::optional<long long> max_machines(
    const std::map<long long, double>& re_by_m, double epsilon) {
  if (re_by_m.empty()) throw InvalidInput("max_machines: empty grid");
  std::optional<long long> best;
  for (const auto& [m, re] : re_by_m)
    if (re < epsilon && (!best || m > *best)) best = m;
  return best;
}

// Empirical effective dimension sum_i s_i / (s_i + lambda) over the spectrum
// of the normalized Gram matrix. Round-off negatives are clipped; genuinely
// negative eigenvalues mean a non-PSD kernel.
inline double effective_dimension(const Vector& gram_eigenvalues,
                                  double lambda) {
  if (lambda <= 0.0)
    throw InvalidInput("effective_dimension: lambda must be positive");
  double sum = 0.0;
  for (Eigen::Index i = 0; i < gram_eigenvalues.size(); ++i) {
    double s = gram_eigenvalues(i);
    if (s < -1e-10)
      throw InvalidInput("effective_dimension: negative eigenvalue, non-PSD");
    if (s < 0.0) s = 0.0;
    sum += s / (s + lambda);
  }
  return sum;
}

// The two similarity diagnostics:
//   A = (1/sqrt(n)) (1/sqrt(n lambda) + sqrt(N(lambda)))
//   B = (1 + log N(lambda)) / (lambda n) + sqrt((1 + log N(lambda)) / (lambda n))
// B is only meaningful in the N(lambda) >= 1 regime.
inline std::pair<double, double> diag_quantities(long long n, double lambda,
                                                 double eff_dim) {
  if (n < 1 || lambda <= 0.0)
    throw InvalidInput("diag_quantities: need n >= 1 and lambda > 0");
  if (eff_dim < 1.0)
    throw InvalidInput("diag_quantities: effective dimension below 1");
  const double dn = static_cast<double>(n);
  const double a = (1.0 / std::sqrt(dn)) *
                   (1.0 / std::sqrt(dn * lambda) + std::sqrt(eff_dim));
  const double t = (1.0 + std::log(eff_dim)) / (lambda * dn);
  const double b = t + std::sqrt(t);
  return {a, b};
}

// Per-round contraction ratios d_ell / d_{ell-1}; rounds after the distance
// drops below the 1e-12 floor are excluded.
inline std::vector<double> contraction_estimate(
    const std::vector<double>& iterate_distances) {
  std::vector<double> ratios;
  for (std::size_t i = 1; i < iterate_distances.size(); ++i) {
    if (iterate_distances[i - 1] < 1e-12) break;
    ratios.push_back(iterate_distances[i] / iterate_distances[i - 1]);
  }
  return ratios;
}

}  // namespace dkrr
