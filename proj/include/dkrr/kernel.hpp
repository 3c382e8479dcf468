#pragma once

#include <functional>
#include <string>
#include <utility>

#include "dkrr/common.hpp"

namespace dkrr {

// Mercer kernels used throughout: the spline kernel K(x,x') = 1 + min(x,x')
// on [0,1] (one-dimensional only), a compactly supported Wendland radial
// kernel h(||x-x'||) with h(r) = (1-r)^4 (4r+1) for r <= 1 and 0 beyond,
// or a user-supplied symmetric PSD function.
class Kernel {
 public:
  enum class Variant { Min, Wendland, Custom };

  using CustomFn = std::function<double(const Point&, const Point&)>;

  static Kernel min_kernel() { return Kernel(Variant::Min, {}); }
  static Kernel wendland() { return Kernel(Variant::Wendland, {}); }
  static Kernel custom(CustomFn fn) {
    return Kernel(Variant::Custom, std::move(fn));
  }

  // Lookup by the config-file name.
  static Kernel by_name(const std::string& name) {
    if (name == "min") return min_kernel();
    if (name == "wendland") return wendland();
    throw ConfigError("unknown kernel name: " + name);
  }

  Variant variant() const { return variant_; }

  std::string name() const {
    switch (variant_) {
      case Variant::Min:
        return "min";
      case Variant::Wendland:
        return "wendland";
      default:
        return "custom";
    }
  }

  double eval(const Point& x, const Point& y) const {
    if (x.size() != y.size())
      throw InvalidInput("kernel eval: dimension mismatch");
    switch (variant_) {
      case Variant::Min:
        if (x.size() != 1)
          throw InvalidInput("min kernel requires 1-dimensional inputs");
        return 1.0 + std::min(x(0), y(0));
      case Variant::Wendland: {
        const double r = (x - y).norm();
        if (r > 1.0) return 0.0;
        const double s = 1.0 - r;
        const double s2 = s * s;
        return s2 * s2 * (4.0 * r + 1.0);
      }
      default:
        return custom_(x, y);
    }
  }

  // Cross-Gram matrix: entry (i,j) = K(rows_i, cols_j).
  Matrix gram(const Matrix& rows, const Matrix& cols) const {
    if (rows.cols() != cols.cols())
      throw InvalidInput("gram: point dimension mismatch");
    Matrix g(rows.rows(), cols.rows());
    for (Eigen::Index i = 0; i < rows.rows(); ++i)
      for (Eigen::Index j = 0; j < cols.rows(); ++j)
        g(i, j) = eval(rows.row(i), cols.row(j));
    return g;
  }

  // Symmetric Gram matrix; each pair is evaluated once and mirrored, so the
  // result is symmetric to bit equality.
  Matrix gram(const Matrix& pts) const {
    Matrix g(pts.rows(), pts.rows());
    for (Eigen::Index i = 0; i < pts.rows(); ++i) {
      g(i, i) = eval(pts.row(i), pts.row(i));
      for (Eigen::Index j = i + 1; j < pts.rows(); ++j) {
        const double v = eval(pts.row(i), pts.row(j));
        g(i, j) = v;
        g(j, i) = v;
      }
    }
    return g;
  }

 private:
  Kernel(Variant v, CustomFn fn) : variant_(v), custom_(std::move(fn)) {}

  Variant variant_;
  CustomFn custom_;
};

}  // namespace dkrr
