#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <utility>
#include <vector>

#include "admpc/lmi.hpp"
#include "admpc/model.hpp"
#include "admpc/mpc.hpp"
#include "admpc/terminal_sets.hpp"

namespace admpc {

/// Two-state plant with strong one-directional coupling, split into two
/// scalar subsystems whose neighborhoods are the whole state.
std::pair<ValidatedSystem, Partition> illustrative_system();

/// Parameter intervals for a randomly drawn spring-mass-damper chain. Masses
/// couple to their chain neighbors only (no wall anchors); each mass carries
/// one force input. All draws are uniform over the stated intervals.
struct SmdChainSpec {
  int M = 3;                // number of masses
  double mass_lo = 5.0, mass_hi = 10.0;
  double spring_lo = 0.8, spring_hi = 1.2;  // per link
  double damper_lo = 0.8, damper_hi = 1.2;  // per link
  double force_lo = 2.0, force_hi = 4.0;    // one shared input bound u_c
  double pos_lo = 1.8, pos_hi = 2.0;        // |initial position| interval
  double dt = 0.1;
};

/// A drawn chain: continuous-time dynamics over states (p_i, v_i) per mass,
/// position/velocity bounds (2, 5), input bound the drawn u_c, stage weights
/// Q = I, R = 0.1 I. The partition gives mass i the neighbors {i-1, i, i+1}.
struct SmdChain {
  CtsLtiSystem cts;
  Partition part;
  double u_c = 0.0;
};

/// Deterministic per (spec, seed). Draw order: masses, then per-link springs,
/// then per-link dampers, then u_c.
SmdChain smd_chain(const SmdChainSpec& spec, std::uint64_t seed);

/// Initial state drawn per the chain protocol: every mass at rest, position
/// magnitude uniform in [pos_lo, pos_hi] with a fair sign.
VectorXd smd_initial_state(const SmdChainSpec& spec, std::mt19937_64& rng);

/// Start-state policy for a comparison run. Grid covers the axis-aligned
/// state box with ceil(n_trials^(1/n)) points per dimension; SignedInterval
/// draws |x_k| in [lo, hi] with a fair sign on the listed coordinates and
/// zeroes the rest; Custom delegates entirely.
struct X0Policy {
  enum class Kind { Grid, SignedInterval, Custom };
  Kind kind = Kind::Grid;
  std::vector<int> coords;  // SignedInterval coordinates
  double lo = 0.0, hi = 0.0;
  std::function<VectorXd(int trial, std::mt19937_64& rng)> custom;

  static X0Policy grid();
  static X0Policy signed_interval(std::vector<int> coords, double lo, double hi);
};

struct ComparisonOptions {
  RhOptions rh;
  DesignOptions design;
  bool parallel = true;  // trials run concurrently; results are slot-ordered
};

/// One receding-horizon run of one variant on one trial's (system, x0).
struct TrialResult {
  int trial = 0;
  MpcVariant variant = MpcVariant::CMax;
  bool feasible_t0 = false;  // first solve usable
  bool completed = false;    // no infeasible step after a feasible start
  bool converged = false;
  int steps = 0;
  double cost = 0.0;           // executed stage costs until convergence
  double mean_solve_ms = 0.0;  // adaptation solve amortized in for DAd0
  double suboptimality = 0.0;  // (cost - cost_cmax) / cost_cmax, same trial
  RhTrace trace;
};

struct VariantSummary {
  MpcVariant variant = MpcVariant::CMax;
  int trials = 0;
  int feasible_trials = 0;  // completed runs
  double mean_cost = 0.0;
  double mean_suboptimality = 0.0;  // over trials where C_Max also completed
  double mean_solve_ms = 0.0;
  double mean_steps = 0.0;
};

/// Full campaign record. `trials` is trial-major (all variants of trial 0,
/// then trial 1, ...); identical (inputs, seed) reproduce every field except
/// the solve-time entries bit-exactly.
struct ComparisonReport {
  std::vector<TrialResult> trials;
  std::vector<VariantSummary> summary;
  int n_trials = 0;
  int T = 0;
  std::uint64_t seed = 0;

  const VariantSummary& summary_for(MpcVariant v) const;
};

/// Runs receding horizon per variant per trial on one fixed system. The
/// prediction model also simulates unless `simulation` is given (the
/// model-mismatch experiments pass the exact discretization there).
/// Terminal ingredients are synthesized once and shared across trials.
ComparisonReport run_comparison(const ValidatedSystem& prediction, const Partition& part,
                                const std::vector<MpcVariant>& variants, int T,
                                const X0Policy& x0_policy, int n_trials, std::uint64_t seed,
                                const LtiSystem* simulation = nullptr,
                                const ComparisonOptions& opts = {});

/// Chain campaign: every trial draws a fresh chain and start state, predicts
/// with the forward-Euler model and simulates with the exact zero-order-hold
/// model. Terminal ingredients are synthesized per trial.
ComparisonReport run_smd_campaign(const SmdChainSpec& spec,
                                  const std::vector<MpcVariant>& variants, int T, int n_trials,
                                  std::uint64_t seed, const ComparisonOptions& opts = {});

}  // namespace admpc
