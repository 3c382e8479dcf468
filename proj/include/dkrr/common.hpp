#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace dkrr {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// A sample point is one row of a dataset's input matrix.
using Point = Eigen::RowVectorXd;

struct InvalidInput : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct InvalidState : std::logic_error {
  using std::logic_error::logic_error;
};

struct NumericalFailure : std::runtime_error {
  NumericalFailure(std::size_t size, double lambda, const std::string& what)
      : std::runtime_error("numerical failure (n=" + std::to_string(size) +
                           ", lambda=" + std::to_string(lambda) + "): " + what),
        size(size),
        lambda(lambda) {}
  std::size_t size;
  double lambda;
};

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Deterministic random source. Uniform and Gaussian draws are generated
// from raw mt19937_64 words so streams replay bit-identically on any
// platform, independent of the standard library's distribution internals.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  // Uniform on [0, 1).
  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  // Standard normal via Box-Muller; one spare value is cached.
  double gaussian() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    double u2 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * M_PI * u2;
    spare_ = radius * std::sin(angle);
    have_spare_ = true;
    return radius * std::cos(angle);
  }

  std::uint64_t next_word() { return gen_(); }

 private:
  std::mt19937_64 gen_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

}  // namespace dkrr
