#pragma once

#include <chrono>
#include <cmath>
#include <utility>
#include <vector>

#include "dkrr/common.hpp"
#include "dkrr/data.hpp"
#include "dkrr/kernel.hpp"
#include "dkrr/krr.hpp"

namespace dkrr {

// Any iterate entry beyond this magnitude (or non-finite) flags divergence.
inline constexpr double kDivergenceLimit = 1e12;

// Ledger of real numbers crossing the local/global boundary. Counting is by
// transmitted reals, not bytes. The one-time input broadcast of the local
// process is tracked separately from the per-round totals.
struct CommLog {
  long long input_broadcast = 0;  // shard inputs to the m-1 peers
  long long initial_sync = 0;     // local prediction vectors, one-time m*N

  struct Round {
    long long local_gradients = 0;       // local -> global
    long long gradient_redistribute = 0; // global -> local
    long long corrections = 0;           // local -> global
    long long iterate_distribute = 0;    // global -> local
    long long total() const {
      return local_gradients + gradient_redistribute + corrections +
             iterate_distribute;
    }
  };
  std::vector<Round> rounds;

  long long round_total(std::size_t ell) const { return rounds.at(ell).total(); }
  long long cumulative() const {
    long long t = initial_sync;
    for (const auto& r : rounds) t += r.total();
    return t;
  }
};

// Closed-form float counts under the ledger convention: every round moves
// 3mN + N reals, the one-time synthesization moves mN.
struct CommTotals {
  long long initial = 0;
  long long per_round = 0;
  long long cumulative = 0;
};

inline CommTotals comm_totals(std::size_t m, Eigen::Index n, int rounds) {
  CommTotals t;
  const auto mm = static_cast<long long>(m);
  const auto nn = static_cast<long long>(n);
  t.initial = mm * nn;
  t.per_round = 3 * mm * nn + nn;
  t.cumulative = t.initial + static_cast<long long>(rounds) * t.per_round;
  return t;
}

// Everything machine j holds after the local process: its shard, the
// factorization of (K_jj + lambda |D_j| I), local dual coefficients, and the
// cached cross-Gram blocks K_{D_k, D_j} for every block k.
struct LocalState {
  std::size_t shard_id = 0;
  Matrix inputs;
  Vector outputs;
  Eigen::LLT<Matrix> factor;
  Vector alpha;
  std::vector<Matrix> cross;  // cross[k] is |D_k| x |D_j|

  Eigen::Index size() const { return inputs.rows(); }

  // Action of M_{D_j,lambda} = (K_jj + lambda |D_j| I)^{-1}.
  Vector apply_m(const Vector& v) const { return factor.solve(v); }
};

inline LocalState train_local(std::size_t shard_id, const Dataset& shard,
                              const std::vector<Matrix>& all_inputs,
                              const Kernel& kernel, double lambda,
                              CommLog* log = nullptr) {
  if (lambda <= 0.0) throw InvalidInput("train_local: lambda must be positive");
  LocalState st;
  st.shard_id = shard_id;
  st.inputs = shard.inputs;
  st.outputs = shard.outputs;
  Matrix a = kernel.gram(shard.inputs);
  a.diagonal().array() += lambda * static_cast<double>(shard.size());
  st.factor = spd_factor(a, lambda);
  st.alpha = st.factor.solve(shard.outputs);
  st.cross.reserve(all_inputs.size());
  for (const auto& block : all_inputs)
    st.cross.push_back(kernel.gram(block, shard.inputs));
  if (log)
    log->input_broadcast += static_cast<long long>(shard.size()) *
                            shard.dim() *
                            static_cast<long long>(all_inputs.size() - 1);
  return st;
}

inline std::vector<double> shard_weights(const std::vector<LocalState>& locals) {
  double total = 0.0;
  for (const auto& l : locals) total += static_cast<double>(l.size());
  std::vector<double> w;
  w.reserve(locals.size());
  for (const auto& l : locals) w.push_back(static_cast<double>(l.size()) / total);
  return w;
}

// Synthesization: f0 at every training point, grouped by block,
// f0_k = sum_j w_j K_{D_k,D_j} alpha_j.
inline std::vector<Vector> synthesize_initial(
    const std::vector<LocalState>& locals, CommLog* log = nullptr) {
  if (locals.empty()) throw InvalidInput("synthesize_initial: no machines");
  const auto weights = shard_weights(locals);
  const std::size_t m = locals.size();
  std::vector<Vector> f0(m);
  long long sent = 0;
  for (std::size_t k = 0; k < m; ++k) {
    f0[k] = Vector::Zero(locals[k].size());
    for (std::size_t j = 0; j < m; ++j) {
      f0[k] += weights[j] * (locals[j].cross[k] * locals[j].alpha);
      sent += locals[k].size();
    }
  }
  if (log) log->initial_sync += sent;
  return f0;
}

// Local gradient vectors G_{j,k} = K_{D_k,D_j} (f_{D_j} - y_j) / |D_j|
// + lambda f_{D_k}, the j-th machine's contribution at every block.
inline std::vector<Vector> local_gradient(const LocalState& local,
                                          const Vector& f_prev_own,
                                          const std::vector<Vector>& f_prev,
                                          double lambda) {
  if (f_prev_own.size() != local.size())
    throw InvalidInput("local_gradient: own-block vector length mismatch");
  const Vector residual = (f_prev_own - local.outputs) /
                          static_cast<double>(local.size());
  std::vector<Vector> g(local.cross.size());
  for (std::size_t k = 0; k < local.cross.size(); ++k) {
    if (f_prev[k].size() != local.cross[k].rows())
      throw InvalidInput("local_gradient: block vector length mismatch");
    g[k] = local.cross[k] * residual + lambda * f_prev[k];
  }
  return g;
}

// Global gradient: shard-size-weighted average of the machines' vectors,
// then redistributed to every machine.
inline std::vector<Vector> synthesize_gradient(
    const std::vector<std::vector<Vector>>& per_machine,
    const std::vector<double>& weights, CommLog::Round* round = nullptr) {
  const std::size_t m = per_machine.size();
  std::vector<Vector> g(m);
  long long inbound = 0;
  for (std::size_t k = 0; k < m; ++k) {
    g[k] = Vector::Zero(per_machine[0][k].size());
    for (std::size_t j = 0; j < m; ++j) {
      g[k] += weights[j] * per_machine[j][k];
      inbound += per_machine[j][k].size();
    }
  }
  if (round) {
    round->local_gradients += inbound;
    round->gradient_redistribute += inbound;
  }
  return g;
}

// KRR on the gradient data: beta_j = M_j G_j and the correction vectors
// H_{j,k} = G_k - K_{D_k,D_j} beta_j.
struct NewtonCorrection {
  Vector beta;
  std::vector<Vector> h;
};

inline NewtonCorrection local_newton_correction(
    const LocalState& local, const std::vector<Vector>& global_gradient) {
  if (global_gradient[local.shard_id].size() != local.size())
    throw InvalidInput("local_newton_correction: gradient length mismatch");
  NewtonCorrection out;
  out.beta = local.apply_m(global_gradient[local.shard_id]);
  out.h.resize(local.cross.size());
  for (std::size_t k = 0; k < local.cross.size(); ++k)
    out.h[k] = global_gradient[k] - local.cross[k] * out.beta;
  return out;
}

// Newton step: f_k <- f_k - (1/lambda) sum_j w_j H_{j,k}. Returns false and
// leaves f untouched when the update would produce a non-finite or
// overflowing entry.
inline bool global_update(std::vector<Vector>& f,
                          const std::vector<NewtonCorrection>& corrections,
                          double lambda, const std::vector<double>& weights,
                          CommLog::Round* round = nullptr) {
  const std::size_t m = f.size();
  std::vector<Vector> next(m);
  bool ok = true;
  long long correction_floats = 0;
  long long distributed = 0;
  for (std::size_t k = 0; k < m; ++k) {
    Vector step = Vector::Zero(f[k].size());
    for (std::size_t j = 0; j < m; ++j) {
      step += weights[j] * corrections[j].h[k];
      correction_floats += corrections[j].h[k].size();
    }
    next[k] = f[k] - step / lambda;
    distributed += next[k].size();
    if (!next[k].allFinite() ||
        next[k].cwiseAbs().maxCoeff() > kDivergenceLimit)
      ok = false;
  }
  if (round) {
    round->corrections += correction_floats;
    round->iterate_distribute += distributed;
  }
  if (ok) f = std::move(next);
  return ok;
}

// Full artifact of the training flow: per-round iterate vectors (by block)
// and correction coefficients, plus the communication ledger.
struct DkrrModel {
  double lambda = 0.0;
  std::vector<double> weights;
  int rounds = 0;  // completed rounds
  std::vector<std::vector<Vector>> f_per_round;   // [ell][block], ell = 0..rounds
  std::vector<std::vector<Vector>> beta_per_round;  // [ell-1][machine]
  bool diverged = false;
};

// Per-phase wall time under the parallel-execution convention: local phases
// count the maximum over machines, coordinator phases their own time.
struct PhaseTiming {
  double local_process_max = 0.0;   // slowest machine's local fit + Gram cache
  double coordinator = 0.0;         // synthesization + reductions + updates
  double rounds_local_max = 0.0;    // summed max-over-machines per round phase
  double total() const { return local_process_max + coordinator + rounds_local_max; }
};

struct DkrrRun {
  DkrrModel model;
  std::vector<LocalState> locals;
  CommLog log;
  PhaseTiming timing;
  // Parallel-convention wall time elapsed once round ell is complete,
  // index 0 (no rounds) .. model.rounds.
  std::vector<double> time_after_round;
};

namespace detail {
inline double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
      .count();
}
}  // namespace detail

// Train DKRR(rounds). rounds = 0 is plain divide-and-conquer averaging.
// `initial` overrides the synthesized starting iterate (test hook).
inline DkrrRun run_dkrr(const Dataset& data, const Partition& part,
                        const Kernel& kernel, double lambda, int rounds,
                        const std::vector<Vector>* initial = nullptr) {
  if (rounds < 0) throw InvalidInput("run_dkrr: rounds must be >= 0");
  if (lambda <= 0.0) throw InvalidInput("run_dkrr: lambda must be positive");
  const std::size_t m = part.machines();
  DkrrRun run;

  std::vector<Matrix> all_inputs(m);
  for (std::size_t j = 0; j < m; ++j)
    all_inputs[j] = subset(data, part.shards[j]).inputs;

  run.locals.reserve(m);
  for (std::size_t j = 0; j < m; ++j) {
    const auto t0 = std::chrono::steady_clock::now();
    run.locals.push_back(train_local(j, subset(data, part.shards[j]),
                                     all_inputs, kernel, lambda, &run.log));
    run.timing.local_process_max =
        std::max(run.timing.local_process_max, detail::seconds_since(t0));
  }

  run.model.lambda = lambda;
  run.model.weights = shard_weights(run.locals);

  const auto t_sync = std::chrono::steady_clock::now();
  std::vector<Vector> f = synthesize_initial(run.locals, &run.log);
  run.timing.coordinator += detail::seconds_since(t_sync);
  if (initial) {
    if (initial->size() != m)
      throw InvalidInput("run_dkrr: initial iterate has wrong block count");
    f = *initial;
  }
  run.model.f_per_round.push_back(f);
  run.time_after_round.push_back(run.timing.total());

  for (int ell = 1; ell <= rounds; ++ell) {
    CommLog::Round round_log;

    std::vector<std::vector<Vector>> gradients(m);
    double step4_max = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
      const auto t0 = std::chrono::steady_clock::now();
      gradients[j] = local_gradient(run.locals[j], f[j], f, lambda);
      step4_max = std::max(step4_max, detail::seconds_since(t0));
    }

    const auto t5 = std::chrono::steady_clock::now();
    const std::vector<Vector> global_grad =
        synthesize_gradient(gradients, run.model.weights, &round_log);
    run.timing.coordinator += detail::seconds_since(t5);

    std::vector<NewtonCorrection> corrections(m);
    double step6_max = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
      const auto t0 = std::chrono::steady_clock::now();
      corrections[j] = local_newton_correction(run.locals[j], global_grad);
      step6_max = std::max(step6_max, detail::seconds_since(t0));
    }
    run.timing.rounds_local_max += step4_max + step6_max;

    const auto t7 = std::chrono::steady_clock::now();
    const bool ok =
        global_update(f, corrections, lambda, run.model.weights, &round_log);
    run.timing.coordinator += detail::seconds_since(t7);
    run.log.rounds.push_back(round_log);

    if (!ok) {
      run.model.diverged = true;
      break;
    }
    std::vector<Vector> betas(m);
    for (std::size_t j = 0; j < m; ++j) betas[j] = std::move(corrections[j].beta);
    run.model.beta_per_round.push_back(std::move(betas));
    run.model.f_per_round.push_back(f);
    run.model.rounds = ell;
    run.time_after_round.push_back(run.timing.total());
  }
  return run;
}

// Testing flow: replays the round recursion at the query points. Returns the
// estimate after every round, index ell = 0..model.rounds.
inline std::vector<Vector> predict_dkrr_rounds(
    const DkrrModel& model, const std::vector<LocalState>& locals,
    const Matrix& query, const Kernel& kernel, int rounds) {
  if (rounds < 0 || rounds > model.rounds)
    throw InvalidState("predict_dkrr: round count exceeds trained rounds");
  const std::size_t m = locals.size();
  std::vector<Matrix> cross_query(m);  // K_{D',D_j}
  for (std::size_t j = 0; j < m; ++j)
    cross_query[j] = kernel.gram(query, locals[j].inputs);

  std::vector<Vector> out;
  Vector f = Vector::Zero(query.rows());
  for (std::size_t j = 0; j < m; ++j)
    f += model.weights[j] * (cross_query[j] * locals[j].alpha);
  out.push_back(f);

  for (int ell = 1; ell <= rounds; ++ell) {
    const auto& f_train_prev = model.f_per_round[ell - 1];
    Vector global_grad = Vector::Zero(query.rows());
    for (std::size_t j = 0; j < m; ++j) {
      const Vector residual = (f_train_prev[j] - locals[j].outputs) /
                              static_cast<double>(locals[j].size());
      global_grad +=
          model.weights[j] * (cross_query[j] * residual + model.lambda * f);
    }
    Vector step = Vector::Zero(query.rows());
    for (std::size_t j = 0; j < m; ++j)
      step += model.weights[j] *
              (global_grad - cross_query[j] * model.beta_per_round[ell - 1][j]);
    f -= step / model.lambda;
    out.push_back(f);
  }
  return out;
}

inline Vector predict_dkrr(const DkrrModel& model,
                           const std::vector<LocalState>& locals,
                           const Matrix& query, const Kernel& kernel) {
  return predict_dkrr_rounds(model, locals, query, kernel, model.rounds).back();
}

}  // namespace dkrr
