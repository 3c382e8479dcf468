#include <catch2/catch_amalgamated.hpp>

#include "dkrr/data.hpp"
#include "dkrr/distributed.hpp"
#include "dkrr/kernel.hpp"
#include "dkrr/krr.hpp"
#include "dkrr/oracle.hpp"

using dkrr::Dataset;
using dkrr::Kernel;
using dkrr::Matrix;
using dkrr::Partition;
using dkrr::Rng;
using dkrr::SyntheticTask;
using dkrr::Target;
using dkrr::Vector;

namespace {

struct Problem {
  Dataset data;
  Partition part;
  Kernel kernel = Kernel::min_kernel();
  double lambda = 0.0;
};

Problem make_problem(Target target, Eigen::Index n, std::size_t m,
                     double lambda, std::uint64_t seed) {
  SyntheticTask task{target, 0.2};
  Rng rng(seed);
  Problem p;
  p.data = dkrr::generate(task, n, true, rng);
  p.part = dkrr::partition_even(n, m, rng);
  p.kernel = target == Target::G1 ? Kernel::min_kernel() : Kernel::wendland();
  p.lambda = lambda;
  return p;
}

Dataset single_point() {
  Dataset d;
  d.inputs = Matrix::Constant(1, 1, 0.5);
  d.outputs = Vector::Constant(1, 2.0);
  return d;
}

Partition trivial_partition(Eigen::Index n) {
  Partition p;
  p.shards.resize(1);
  for (Eigen::Index i = 0; i < n; ++i) p.shards[0].push_back(i);
  return p;
}

}  // namespace

TEST_CASE("train_local matches full krr for m = 1") {
  const Problem p = make_problem(Target::G1, 30, 1, 0.01, 5);
  const auto st = dkrr::train_local(0, p.data, {p.data.inputs}, p.kernel,
                                    p.lambda);
  const auto model = dkrr::fit(p.data, p.kernel, p.lambda);
  REQUIRE((st.alpha - model.alpha).cwiseAbs().maxCoeff() < 1e-12);
  // self cross-block is the shard Gram
  REQUIRE(st.cross[0] == p.kernel.gram(p.data.inputs, p.data.inputs));
}

TEST_CASE("train_local scalar shard") {
  const Dataset d = single_point();
  const auto st =
      dkrr::train_local(0, d, {d.inputs}, Kernel::min_kernel(), 0.5);
  CHECK(st.alpha(0) == Catch::Approx(1.0).margin(1e-15));
}

TEST_CASE("local state residual invariant") {
  const Problem p = make_problem(Target::G2, 60, 3, 1e-3, 9);
  for (std::size_t j = 0; j < 3; ++j) {
    const Dataset shard = dkrr::subset(p.data, p.part.shards[j]);
    const auto st = dkrr::train_local(j, shard, {shard.inputs}, p.kernel,
                                      p.lambda);
    Matrix a = p.kernel.gram(shard.inputs);
    a.diagonal().array() += p.lambda * static_cast<double>(shard.size());
    REQUIRE((a * st.alpha - shard.outputs).norm() <=
            1e-8 * (shard.outputs.norm() + 1e-300));
  }
}

TEST_CASE("synthesize_initial trivial cases") {
  const Problem p = make_problem(Target::G1, 20, 2, 0.01, 3);
  std::vector<Matrix> inputs;
  std::vector<dkrr::LocalState> locals;
  for (std::size_t j = 0; j < 2; ++j)
    inputs.push_back(dkrr::subset(p.data, p.part.shards[j]).inputs);
  for (std::size_t j = 0; j < 2; ++j)
    locals.push_back(dkrr::train_local(j, dkrr::subset(p.data, p.part.shards[j]),
                                       inputs, p.kernel, p.lambda));

  auto f0 = dkrr::synthesize_initial(locals);
  // equal shards: entrywise mean of the two machines' cross-predictions
  for (std::size_t k = 0; k < 2; ++k) {
    const Vector manual = 0.5 * (locals[0].cross[k] * locals[0].alpha) +
                          0.5 * (locals[1].cross[k] * locals[1].alpha);
    REQUIRE((f0[k] - manual).cwiseAbs().maxCoeff() < 1e-14);
  }

  // all-zero coefficients give all-zero vectors
  for (auto& l : locals) l.alpha.setZero();
  for (const auto& v : dkrr::synthesize_initial(locals))
    REQUIRE(v.norm() == 0.0);
}

TEST_CASE("gradient vanishes at the full-krr minimizer") {
  const Problem p = make_problem(Target::G1, 40, 1, 0.05, 11);
  const auto st =
      dkrr::train_local(0, p.data, {p.data.inputs}, p.kernel, p.lambda);
  const auto model = dkrr::fit(p.data, p.kernel, p.lambda);
  const Vector fitted = dkrr::predict(model, p.data.inputs, p.kernel);
  const auto g = dkrr::local_gradient(st, fitted, {fitted}, p.lambda);
  REQUIRE(g[0].norm() <= 1e-9 * (p.data.outputs.norm() + 1.0));
}

TEST_CASE("scalar gradient hand value") {
  // single point (0.5, 2), k = 1.5, lambda = 0.5, f_prev = full-KRR value 1.5:
  // G = 1.5 (1.5 - 2) / 1 + 0.5 * 1.5 = 0
  const Dataset d = single_point();
  const auto st =
      dkrr::train_local(0, d, {d.inputs}, Kernel::min_kernel(), 0.5);
  Vector f = Vector::Constant(1, 1.5);
  const auto g = dkrr::local_gradient(st, f, {f}, 0.5);
  CHECK(g[0](0) == Catch::Approx(0.0).margin(1e-15));

  Vector zero = Vector::Zero(1);
  dkrr::LocalState zero_st = st;
  zero_st.outputs.setZero();
  const auto gz = dkrr::local_gradient(zero_st, zero, {zero}, 0.5);
  CHECK(gz[0](0) == 0.0);
}

TEST_CASE("synthesize_gradient weighting") {
  std::vector<std::vector<Vector>> per_machine(2);
  per_machine[0] = {Vector::Constant(2, 1.0), Vector::Constant(1, 3.0)};
  per_machine[1] = {Vector::Constant(2, 3.0), Vector::Constant(1, 5.0)};
  const auto g = dkrr::synthesize_gradient(per_machine, {0.5, 0.5});
  CHECK(g[0](0) == 2.0);
  CHECK(g[1](0) == 4.0);

  // m = 1 pass-through
  std::vector<std::vector<Vector>> one(1);
  one[0] = {Vector::Constant(3, 7.0)};
  CHECK(dkrr::synthesize_gradient(one, {1.0})[0] == one[0][0]);
}

TEST_CASE("scalar newton correction hand values") {
  // G = 1: beta = 1 / (1.5 + 0.5) = 0.5, H = 1 - 1.5 * 0.5 = 0.25
  const Dataset d = single_point();
  const auto st =
      dkrr::train_local(0, d, {d.inputs}, Kernel::min_kernel(), 0.5);
  const auto corr = dkrr::local_newton_correction(st, {Vector::Constant(1, 1.0)});
  CHECK(corr.beta(0) == Catch::Approx(0.5).margin(1e-15));
  CHECK(corr.h[0](0) == Catch::Approx(0.25).margin(1e-15));

  const auto zero = dkrr::local_newton_correction(st, {Vector::Zero(1)});
  CHECK(zero.beta.norm() == 0.0);
  CHECK(zero.h[0].norm() == 0.0);
}

TEST_CASE("correction equals the resolvent action on the self block") {
  // H = lambda (K/n + lambda I)^{-1} G on machine j's own block.
  const Problem p = make_problem(Target::G1, 25, 1, 0.02, 17);
  const auto st =
      dkrr::train_local(0, p.data, {p.data.inputs}, p.kernel, p.lambda);
  Rng rng(42);
  Vector g(p.data.size());
  for (Eigen::Index i = 0; i < g.size(); ++i) g(i) = rng.gaussian();
  const auto corr = dkrr::local_newton_correction(st, {g});
  Matrix a = p.kernel.gram(p.data.inputs) / static_cast<double>(p.data.size());
  a.diagonal().array() += p.lambda;
  const Vector expected = p.lambda * a.partialPivLu().solve(g);
  REQUIRE((corr.h[0] - expected).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("hand-computed full round") {
  // f0 = 1.4: G = 1.5 (1.4 - 2) + 0.5 * 1.4 = -0.2; beta = -0.1;
  // H = -0.2 - 1.5 (-0.1) = -0.05; f1 = 1.4 - (1/0.5)(-0.05) = 1.5.
  const Dataset d = single_point();
  const Kernel k = Kernel::min_kernel();
  const double lambda = 0.5;
  const auto st = dkrr::train_local(0, d, {d.inputs}, k, lambda);

  std::vector<Vector> f = {Vector::Constant(1, 1.4)};
  const auto grad = dkrr::local_gradient(st, f[0], f, lambda);
  CHECK(grad[0](0) == Catch::Approx(-0.2).margin(1e-15));
  const auto global = dkrr::synthesize_gradient({grad}, {1.0});
  const auto corr = dkrr::local_newton_correction(st, global);
  CHECK(corr.beta(0) == Catch::Approx(-0.1).margin(1e-15));
  CHECK(corr.h[0](0) == Catch::Approx(-0.05).margin(1e-15));
  REQUIRE(dkrr::global_update(f, {corr}, lambda, {1.0}));
  CHECK(f[0](0) == Catch::Approx(1.5).margin(1e-14));
}

TEST_CASE("zero corrections are a fixed point of the update") {
  std::vector<Vector> f = {Vector::Constant(3, 1.0), Vector::Constant(2, -1.0)};
  const auto before = f;
  std::vector<dkrr::NewtonCorrection> corr(2);
  corr[0].h = {Vector::Zero(3), Vector::Zero(2)};
  corr[1].h = {Vector::Zero(3), Vector::Zero(2)};
  REQUIRE(dkrr::global_update(f, corr, 0.1, {0.6, 0.4}));
  CHECK(f[0] == before[0]);
  CHECK(f[1] == before[1]);
}

TEST_CASE("m = 1 collapses to full krr after one round") {
  for (const double lambda : {1e-2, 1e-4}) {
    const Problem p = make_problem(Target::G1, 50, 1, lambda, 23);
    const auto run = dkrr::run_dkrr(p.data, p.part, p.kernel, lambda, 1);
    const auto model = dkrr::fit(p.data, p.kernel, lambda);
    const Vector fitted = dkrr::predict(model, p.data.inputs, p.kernel);
    // shard 0 holds every index, in shuffled order
    for (Eigen::Index i = 0; i < p.data.size(); ++i)
      REQUIRE(run.model.f_per_round[1][0](i) ==
              Catch::Approx(fitted(p.part.shards[0][i])).margin(1e-10));
  }
}

TEST_CASE("krr-initialized rounds are fixed points") {
  const Problem p = make_problem(Target::G1, 60, 4, 0.01, 29);
  const auto model = dkrr::fit(p.data, p.kernel, p.lambda);
  std::vector<Vector> init(4);
  for (std::size_t k = 0; k < 4; ++k) {
    const Dataset shard = dkrr::subset(p.data, p.part.shards[k]);
    init[k] = dkrr::predict(model, shard.inputs, p.kernel);
  }
  const auto run = dkrr::run_dkrr(p.data, p.part, p.kernel, p.lambda, 3, &init);
  REQUIRE_FALSE(run.model.diverged);
  for (int ell = 1; ell <= 3; ++ell)
    for (std::size_t k = 0; k < 4; ++k)
      REQUIRE((run.model.f_per_round[ell][k] - init[k]).cwiseAbs().maxCoeff() <
              1e-10);
}

TEST_CASE("initial iterate equals the weighted-average synthesis") {
  const Problem p = make_problem(Target::G2, 80, 4, 1e-3, 31);
  const auto run = dkrr::run_dkrr(p.data, p.part, p.kernel, p.lambda, 0);
  const auto f0 = dkrr::synthesize_initial(run.locals);
  for (std::size_t k = 0; k < 4; ++k)
    REQUIRE(run.model.f_per_round[0][k] == f0[k]);
}

TEST_CASE("train/test consistency at training blocks") {
  const Problem p = make_problem(Target::G1, 60, 3, 1e-3, 37);
  const auto run = dkrr::run_dkrr(p.data, p.part, p.kernel, p.lambda, 3);
  REQUIRE_FALSE(run.model.diverged);
  for (std::size_t k = 0; k < 3; ++k) {
    const Dataset shard = dkrr::subset(p.data, p.part.shards[k]);
    const auto per_round = dkrr::predict_dkrr_rounds(
        run.model, run.locals, shard.inputs, p.kernel, run.model.rounds);
    for (int ell = 0; ell <= run.model.rounds; ++ell)
      REQUIRE((per_round[ell] - run.model.f_per_round[ell][k])
                  .cwiseAbs()
                  .maxCoeff() < 1e-10);
  }
}

TEST_CASE("oracle equivalence over the unit grid") {
  for (const auto target : {Target::G1, Target::G2})
    for (const std::size_t m : {1u, 2u, 4u, 8u})
      for (const double lambda : {1e-2, 1e-4}) {
        const Problem p = make_problem(target, 120, m, lambda, 1000 + m);
        const int rounds = 5;
        const auto run = dkrr::run_dkrr(p.data, p.part, p.kernel, lambda, rounds);
        const auto oracle = dkrr::oracle_coefficient_iteration(
            p.data, p.part, p.kernel, lambda, rounds);
        SyntheticTask task{target, 0.2};
        Rng qrng(7);
        const Matrix query = dkrr::generate(task, 50, false, qrng).inputs;
        const auto preds = dkrr::predict_dkrr_rounds(
            run.model, run.locals, query, p.kernel, run.model.rounds);
        for (int ell = 0; ell <= run.model.rounds; ++ell) {
          const Vector expected = oracle.predict(query, p.kernel, ell);
          const double err = (preds[ell] - expected).cwiseAbs().maxCoeff();
          // In the divergent regime the iterates grow without bound and the
          // two double-precision routes can only agree in relative terms;
          // scale the tolerance by the iterate magnitude.
          double scale = 1.0;
          for (const auto& v : run.model.f_per_round[ell])
            scale = std::max(scale, v.cwiseAbs().maxCoeff());
          REQUIRE(err <= 1e-8 * std::max(1.0, 1e-4 * scale));
        }
      }
}

TEST_CASE("oracle m = 1 single round gives full-krr coefficients") {
  const Problem p = make_problem(Target::G1, 40, 1, 1e-2, 3);
  const auto oracle =
      dkrr::oracle_coefficient_iteration(p.data, p.part, p.kernel, p.lambda, 1);
  const auto model = dkrr::fit(p.data, p.kernel, p.lambda);
  // alpha solves (K + lambda n I) a = y; the operator iterate is normalized
  // against (K/n + lambda I) c = y/n, the same linear system.
  REQUIRE((oracle.coefficients[1] - model.alpha).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("oracle dkrr(0) places weighted local coefficients on shards") {
  const Problem p = make_problem(Target::G1, 30, 3, 1e-2, 13);
  const auto oracle =
      dkrr::oracle_coefficient_iteration(p.data, p.part, p.kernel, p.lambda, 0);
  const auto run = dkrr::run_dkrr(p.data, p.part, p.kernel, p.lambda, 0);
  for (std::size_t j = 0; j < 3; ++j) {
    const auto& shard = p.part.shards[j];
    for (std::size_t i = 0; i < shard.size(); ++i) {
      const double expected = run.model.weights[j] * run.locals[j].alpha(i);
      REQUIRE(oracle.coefficients[0](shard[i]) ==
              Catch::Approx(expected).margin(1e-12));
    }
  }
}

TEST_CASE("oracle scale limit") {
  const Problem p = make_problem(Target::G1, 10, 2, 1e-2, 1);
  Dataset big;
  big.inputs = Matrix::Zero(3000, 1);
  big.outputs = Vector::Zero(3000);
  CHECK_THROWS_AS(dkrr::oracle_coefficient_iteration(
                      big, trivial_partition(3000), p.kernel, 0.1, 0),
                  dkrr::InvalidInput);
}

TEST_CASE("contraction toward full krr at small m") {
  const Problem p = make_problem(Target::G1, 300, 2, 1e-3, 41);
  const int rounds = 4;
  const auto run = dkrr::run_dkrr(p.data, p.part, p.kernel, p.lambda, rounds);
  REQUIRE_FALSE(run.model.diverged);
  const auto model = dkrr::fit(p.data, p.kernel, p.lambda);
  std::vector<double> distances;
  for (int ell = 0; ell <= rounds; ++ell) {
    double sq = 0.0;
    for (std::size_t k = 0; k < 2; ++k) {
      const Dataset shard = dkrr::subset(p.data, p.part.shards[k]);
      const Vector krr_vals = dkrr::predict(model, shard.inputs, p.kernel);
      sq += (run.model.f_per_round[ell][k] - krr_vals).squaredNorm();
    }
    distances.push_back(std::sqrt(sq));
  }
  for (std::size_t i = 1; i < distances.size(); ++i) {
    if (distances[i - 1] < 1e-12) break;
    REQUIRE(distances[i] / distances[i - 1] < 1.0);
  }
}

TEST_CASE("communication ledger closed forms") {
  for (const std::size_t m : {1u, 2u, 4u}) {
    const Eigen::Index n = 40;
    const Problem p = make_problem(Target::G1, n, m, 1e-2, 50 + m);
    const int rounds = 3;
    const auto run = dkrr::run_dkrr(p.data, p.part, p.kernel, p.lambda, rounds);
    const auto totals = dkrr::comm_totals(m, n, rounds);
    REQUIRE(run.log.initial_sync == totals.initial);
    REQUIRE(static_cast<int>(run.log.rounds.size()) == rounds);
    for (const auto& round : run.log.rounds)
      REQUIRE(round.total() == totals.per_round);
    REQUIRE(run.log.cumulative() == totals.cumulative);
  }
  // m = 2, N = 10, one round -> 3*2*10 + 10 = 70
  CHECK(dkrr::comm_totals(2, 10, 1).per_round == 70);
  CHECK(dkrr::comm_totals(1, 10, 1).per_round == 40);
  CHECK(dkrr::comm_totals(2, 10, 0).cumulative == 20);
}

TEST_CASE("predict rejects rounds beyond the trained count") {
  const Problem p = make_problem(Target::G1, 20, 2, 1e-2, 61);
  const auto run = dkrr::run_dkrr(p.data, p.part, p.kernel, p.lambda, 1);
  Matrix q = Matrix::Constant(1, 1, 0.5);
  CHECK_THROWS_AS(
      dkrr::predict_dkrr_rounds(run.model, run.locals, q, p.kernel, 2),
      dkrr::InvalidState);
}

TEST_CASE("divergence is flagged, not thrown") {
  // Absurdly small lambda with many machines on few points drives the
  // Newton step far outside the admissible range within a few rounds.
  SyntheticTask task{Target::G1, 0.2};
  Rng rng(71);
  Dataset data = dkrr::generate(task, 64, true, rng);
  data.outputs *= 1e8;
  const Partition part = dkrr::partition_even(64, 32, rng);
  const auto run =
      dkrr::run_dkrr(data, part, Kernel::min_kernel(), 1e-12, 30);
  if (run.model.diverged) {
    REQUIRE(run.model.rounds < 30);
    for (const auto& per_block : run.model.f_per_round)
      for (const auto& v : per_block) REQUIRE(v.allFinite());
  } else {
    WARN("divergence probe stayed bounded; flag path untested here");
  }
}
