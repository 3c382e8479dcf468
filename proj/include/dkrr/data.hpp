#pragma once

#include <algorithm>
#include <fstream>
#include <numeric>
#include <string>
#include <vector>

#include "dkrr/common.hpp"

namespace dkrr {

// Synthetic regression targets: the triangle function on [0,1] and a
// compactly supported radial polynomial on [0,1]^3.
enum class Target { G1, G2 };

inline int target_dim(Target t) { return t == Target::G1 ? 1 : 3; }

inline Target target_by_name(const std::string& name) {
  if (name == "g1") return Target::G1;
  if (name == "g2") return Target::G2;
  throw ConfigError("unknown task name: " + name);
}

inline std::string target_name(Target t) { return t == Target::G1 ? "g1" : "g2"; }

struct SyntheticTask {
  Target target = Target::G1;
  double noise_variance = 0.2;

  int dim() const { return target_dim(target); }
};

inline double target_value(const SyntheticTask& task, const Point& x) {
  if (x.size() != task.dim())
    throw InvalidInput("target_value: wrong input dimension");
  if (task.target == Target::G1) {
    const double t = x(0);
    return t <= 0.5 ? t : 1.0 - t;
  }
  const double r = x.norm();
  if (r > 1.0) return 0.0;
  const double s = 1.0 - r;
  const double s2 = s * s;
  const double s3 = s2 * s;
  return s3 * s3 * (35.0 * r * r + 18.0 * r + 3.0);
}

struct Dataset {
  Matrix inputs;   // n x d, all coordinates in [0,1]
  Vector outputs;  // n

  Eigen::Index size() const { return inputs.rows(); }
  int dim() const { return static_cast<int>(inputs.cols()); }
};

inline Dataset generate(const SyntheticTask& task, Eigen::Index n, bool noisy,
                        Rng& rng) {
  if (n < 1) throw InvalidInput("generate: n must be >= 1");
  const int d = task.dim();
  Dataset data;
  data.inputs.resize(n, d);
  data.outputs.resize(n);
  const double sigma = std::sqrt(task.noise_variance);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (int j = 0; j < d; ++j) data.inputs(i, j) = rng.uniform();
    double y = target_value(task, data.inputs.row(i));
    if (noisy) y += sigma * rng.gaussian();
    data.outputs(i) = y;
  }
  return data;
}

// A disjoint even split of {0..n-1} into m shards whose sizes differ by at
// most one. Indices are shuffled uniformly before splitting.
struct Partition {
  std::vector<std::vector<Eigen::Index>> shards;

  std::size_t machines() const { return shards.size(); }
};

inline Partition partition_even(Eigen::Index n, std::size_t m, Rng& rng) {
  if (m < 1 || static_cast<Eigen::Index>(m) > n)
    throw InvalidInput("partition_even: need 1 <= m <= n");
  std::vector<Eigen::Index> idx(n);
  std::iota(idx.begin(), idx.end(), Eigen::Index{0});
  for (Eigen::Index i = n - 1; i > 0; --i) {
    const auto j = static_cast<Eigen::Index>(rng.next_word() % (i + 1));
    std::swap(idx[i], idx[j]);
  }
  Partition part;
  part.shards.resize(m);
  const Eigen::Index base = n / static_cast<Eigen::Index>(m);
  const Eigen::Index extra = n % static_cast<Eigen::Index>(m);
  Eigen::Index pos = 0;
  for (std::size_t j = 0; j < m; ++j) {
    const Eigen::Index sz = base + (static_cast<Eigen::Index>(j) < extra ? 1 : 0);
    part.shards[j].assign(idx.begin() + pos, idx.begin() + pos + sz);
    pos += sz;
  }
  return part;
}

inline Dataset subset(const Dataset& data, const std::vector<Eigen::Index>& idx) {
  Dataset out;
  out.inputs.resize(static_cast<Eigen::Index>(idx.size()), data.inputs.cols());
  out.outputs.resize(static_cast<Eigen::Index>(idx.size()));
  for (std::size_t i = 0; i < idx.size(); ++i) {
    out.inputs.row(static_cast<Eigen::Index>(i)) = data.inputs.row(idx[i]);
    out.outputs(static_cast<Eigen::Index>(i)) = data.outputs(idx[i]);
  }
  return out;
}

// Plain-text dump/load, one row per sample: d input coordinates then output.
inline void dump_table(const Dataset& data, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot open for writing: " + path);
  out.precision(17);
  for (Eigen::Index i = 0; i < data.size(); ++i) {
    for (int j = 0; j < data.dim(); ++j) out << data.inputs(i, j) << ' ';
    out << data.outputs(i) << '\n';
  }
}

inline Dataset load_table(const std::string& path, int dim) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open for reading: " + path);
  std::vector<double> values;
  double v;
  while (in >> v) values.push_back(v);
  if (values.size() % (dim + 1) != 0)
    throw InvalidInput("load_table: row width does not match dimension");
  const auto n = static_cast<Eigen::Index>(values.size() / (dim + 1));
  Dataset data;
  data.inputs.resize(n, dim);
  data.outputs.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (int j = 0; j < dim; ++j) data.inputs(i, j) = values[i * (dim + 1) + j];
    data.outputs(i) = values[i * (dim + 1) + dim];
  }
  return data;
}

}  // namespace dkrr
