#include "admpc/benchmarks.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "admpc/error.hpp"
#include "admpc/parallel.hpp"

namespace admpc {

namespace {

// Golden-ratio stride keeps per-trial streams decorrelated while staying
// deterministic under any trial scheduling.
std::uint64_t trial_seed(std::uint64_t seed, int trial) {
  return seed + 0x9e3779b97f4a7c15ull * (static_cast<std::uint64_t>(trial) + 1);
}

// Axis-aligned bounds of the state box, read off the single-coordinate rows
// of G. Throws when some dimension has no such row (the grid policy needs a
// bounded box to enumerate).
VectorXd box_bounds(const LtiSystem& sys) {
  const int n = sys.n();
  VectorXd b = VectorXd::Constant(n, std::numeric_limits<double>::infinity());
  for (int r = 0; r < sys.G.rows(); ++r) {
    int nz = -1;
    bool single = true;
    for (int k = 0; k < n; ++k) {
      if (sys.G(r, k) == 0.0) continue;
      if (nz >= 0) { single = false; break; }
      nz = k;
    }
    if (!single || nz < 0) continue;
    b[nz] = std::min(b[nz], sys.g[r] / std::abs(sys.G(r, nz)));
  }
  for (int k = 0; k < n; ++k)
    if (!std::isfinite(b[k]))
      throw Error(ErrorKind::BuildError, "grid start policy needs box bounds per state");
  return b;
}

VectorXd grid_point(const VectorXd& bounds, int pts_per_dim, int trial) {
  const int n = static_cast<int>(bounds.size());
  VectorXd x(n);
  int rest = trial;
  for (int k = 0; k < n; ++k) {
    int idx = rest % pts_per_dim;
    rest /= pts_per_dim;
    x[k] = (pts_per_dim == 1)
               ? 0.0
               : -bounds[k] + 2.0 * bounds[k] * idx / (pts_per_dim - 1);
  }
  return x;
}

VectorXd draw_x0(const X0Policy& policy, const LtiSystem& sys, int n_trials, int trial,
                 std::mt19937_64& rng) {
  switch (policy.kind) {
    case X0Policy::Kind::Grid: {
      VectorXd bounds = box_bounds(sys);
      int pts = static_cast<int>(
          std::ceil(std::pow(static_cast<double>(n_trials), 1.0 / sys.n()) - 1e-9));
      return grid_point(bounds, std::max(pts, 1), trial);
    }
    case X0Policy::Kind::SignedInterval: {
      VectorXd x = VectorXd::Zero(sys.n());
      std::uniform_real_distribution<double> mag(policy.lo, policy.hi);
      std::uniform_real_distribution<double> coin(0.0, 1.0);
      for (int k : policy.coords) {
        double m = mag(rng);
        x[k] = coin(rng) < 0.5 ? -m : m;
      }
      return x;
    }
    case X0Policy::Kind::Custom:
      return policy.custom(trial, rng);
  }
  throw Error(ErrorKind::BuildError, "unhandled start policy");
}

bool needs(const std::vector<MpcVariant>& variants, MpcVariant v) {
  return std::find(variants.begin(), variants.end(), v) != variants.end();
}

// Terminal ingredients shared by every variant on one prediction model.
struct Toolkit {
  CoupledSystem cs;
  CentralizedTerminal ct;
  double alpha_star = 0.0;
  PolyhedralSet oinf;
  DistributedTerminalDesign design;
  AdaptiveLevels fixed;
};

Toolkit build_toolkit(const ValidatedSystem& pred, const Partition& part,
                      const std::vector<MpcVariant>& variants, const DesignOptions& dopts) {
  Toolkit kit{decompose(pred, part), {}, 0.0, {}, {}, {}};
  const bool central = needs(variants, MpcVariant::CMax) || needs(variants, MpcVariant::CEllip);
  const bool dist = needs(variants, MpcVariant::DFixed) ||
                    needs(variants, MpcVariant::DAdaptive) || needs(variants, MpcVariant::DAd0);
  if (central) {
    kit.ct = solve_theorem1(pred);
    if (needs(variants, MpcVariant::CEllip)) kit.alpha_star = max_ellipsoid(kit.ct, pred.get());
    if (needs(variants, MpcVariant::CMax)) {
      const LtiSystem& s = pred.get();
      MatrixXd C(s.G.rows() + s.H.rows(), s.n());
      C << s.G, s.H * kit.ct.K_c;
      VectorXd c(s.g.size() + s.h.size());
      c << s.g, s.h;
      kit.oinf = gilbert_tan(s.A + s.B * kit.ct.K_c, C, c);
    }
  }
  if (dist) {
    kit.design = build_design_phase(kit.cs, dopts);
    if (needs(variants, MpcVariant::DFixed)) kit.fixed = fixed_levels_design(kit.cs, kit.design);
  }
  return kit;
}

MpcFormulation formulation_for(const Toolkit& kit, MpcVariant v, int T) {
  switch (v) {
    case MpcVariant::CMax: return make_cmax(kit.cs, kit.ct, kit.oinf, T);
    case MpcVariant::CEllip: return make_cellip(kit.cs, kit.ct, kit.alpha_star, T);
    case MpcVariant::DFixed: return make_dfixed(kit.cs, kit.design, kit.fixed, T);
    case MpcVariant::DAdaptive: return make_dadaptive(kit.cs, kit.design, T);
    case MpcVariant::DAd0: return make_dadaptive(kit.cs, kit.design, T);
  }
  throw Error(ErrorKind::BuildError, "unknown variant");
}

TrialResult run_one(const Toolkit& kit, const LtiSystem& sim, MpcVariant v, int T,
                    const VectorXd& x0, int trial, const RhOptions& rh) {
  TrialResult res;
  res.trial = trial;
  res.variant = v;

  MpcFormulation form = formulation_for(kit, v, T);
  double adapt_ms = 0.0;
  if (v == MpcVariant::DAd0) {
    // Adapt once on the start state, then hold the levels for the whole run.
    MpcSolution first = solve_mpc(form, x0);
    adapt_ms = first.solve_ms;
    if (!first.feasible) {
      res.trace.infeasible_at = 0;
      res.trace.last_status = first.status;
      res.trace.final_state = x0;
      return res;
    }
    form = fix_alpha(form, first);
  }
  res.trace = receding_horizon(sim, form, x0, rh);

  res.feasible_t0 = res.trace.infeasible_at != 0;
  res.completed = res.trace.infeasible_at < 0;
  res.converged = res.trace.converged;
  res.steps = static_cast<int>(res.trace.steps.size());
  res.cost = closed_loop_cost(res.trace);
  if (res.steps > 0) {
    double total = adapt_ms;
    for (const RhStep& st : res.trace.steps) total += st.solve_ms;
    res.mean_solve_ms = total / res.steps;
  }
  return res;
}

}  // namespace

std::pair<ValidatedSystem, Partition> illustrative_system() {
  LtiSystem s;
  s.A = (MatrixXd(2, 2) << 5.0, 0.1, 0.3, 0.9).finished();
  s.B = MatrixXd::Identity(2, 2);
  s.G = (MatrixXd(4, 2) << 1, 0, -1, 0, 0, 1, 0, -1).finished();
  s.g = VectorXd::Constant(4, 5.0);
  s.H = (MatrixXd(4, 2) << 1, 0, -1, 0, 0, 1, 0, -1).finished();
  s.h = VectorXd::Constant(4, 1.0);
  s.Q = MatrixXd::Identity(2, 2);
  s.R = 0.1 * MatrixXd::Identity(2, 2);

  Partition part;
  part.states = {{0}, {1}};
  part.inputs = {{0}, {1}};
  part.neighbors = {{0, 1}, {0, 1}};
  return {validate_system(s), part};
}

SmdChain smd_chain(const SmdChainSpec& spec, std::uint64_t seed) {
  if (spec.M < 2) throw Error(ErrorKind::BuildError, "a chain needs at least two masses");
  const int M = spec.M, n = 2 * M;

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> um(spec.mass_lo, spec.mass_hi);
  std::uniform_real_distribution<double> uk(spec.spring_lo, spec.spring_hi);
  std::uniform_real_distribution<double> uc(spec.damper_lo, spec.damper_hi);
  std::uniform_real_distribution<double> uf(spec.force_lo, spec.force_hi);

  VectorXd mass(M), spring(M - 1), damper(M - 1);
  for (int i = 0; i < M; ++i) mass[i] = um(rng);
  for (int l = 0; l + 1 < M; ++l) spring[l] = uk(rng);
  for (int l = 0; l + 1 < M; ++l) damper[l] = uc(rng);
  const double u_c = uf(rng);

  SmdChain chain;
  chain.u_c = u_c;
  CtsLtiSystem& c = chain.cts;
  c.A_c = MatrixXd::Zero(n, n);
  c.B_c = MatrixXd::Zero(n, M);
  for (int i = 0; i < M; ++i) {
    c.A_c(2 * i, 2 * i + 1) = 1.0;  // pdot = v
    c.B_c(2 * i + 1, i) = 1.0 / mass[i];
  }
  for (int l = 0; l + 1 < M; ++l) {  // link between masses l and l+1
    const int a = l, b = l + 1;
    const double k = spring[l], d = damper[l];
    c.A_c(2 * a + 1, 2 * a) -= k / mass[a];
    c.A_c(2 * a + 1, 2 * b) += k / mass[a];
    c.A_c(2 * a + 1, 2 * a + 1) -= d / mass[a];
    c.A_c(2 * a + 1, 2 * b + 1) += d / mass[a];
    c.A_c(2 * b + 1, 2 * b) -= k / mass[b];
    c.A_c(2 * b + 1, 2 * a) += k / mass[b];
    c.A_c(2 * b + 1, 2 * b + 1) -= d / mass[b];
    c.A_c(2 * b + 1, 2 * a + 1) += d / mass[b];
  }

  c.G = MatrixXd::Zero(2 * n, n);
  c.g = VectorXd::Zero(2 * n);
  for (int k = 0; k < n; ++k) {
    const double bound = (k % 2 == 0) ? 2.0 : 5.0;  // position, velocity
    c.G(2 * k, k) = 1.0;
    c.G(2 * k + 1, k) = -1.0;
    c.g[2 * k] = bound;
    c.g[2 * k + 1] = bound;
  }
  c.H = MatrixXd::Zero(2 * M, M);
  c.h = VectorXd::Constant(2 * M, u_c);
  for (int i = 0; i < M; ++i) {
    c.H(2 * i, i) = 1.0;
    c.H(2 * i + 1, i) = -1.0;
  }
  c.Q = MatrixXd::Identity(n, n);
  c.R = 0.1 * MatrixXd::Identity(M, M);

  chain.part.states.resize(M);
  chain.part.inputs.resize(M);
  chain.part.neighbors.resize(M);
  for (int i = 0; i < M; ++i) {
    chain.part.states[i] = {2 * i, 2 * i + 1};
    chain.part.inputs[i] = {i};
    for (int j = std::max(0, i - 1); j <= std::min(M - 1, i + 1); ++j)
      chain.part.neighbors[i].push_back(j);
  }
  return chain;
}

VectorXd smd_initial_state(const SmdChainSpec& spec, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> mag(spec.pos_lo, spec.pos_hi);
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  VectorXd x0 = VectorXd::Zero(2 * spec.M);
  for (int i = 0; i < spec.M; ++i) {
    double m = mag(rng);
    x0[2 * i] = coin(rng) < 0.5 ? -m : m;
  }
  return x0;
}

X0Policy X0Policy::grid() {
  X0Policy p;
  p.kind = Kind::Grid;
  return p;
}

X0Policy X0Policy::signed_interval(std::vector<int> coords, double lo, double hi) {
  X0Policy p;
  p.kind = Kind::SignedInterval;
  p.coords = std::move(coords);
  p.lo = lo;
  p.hi = hi;
  return p;
}

const VariantSummary& ComparisonReport::summary_for(MpcVariant v) const {
  for (const VariantSummary& s : summary)
    if (s.variant == v) return s;
  throw Error(ErrorKind::BuildError, "variant not part of this report");
}

namespace {

// Suboptimality against the same trial's C_Max run, then per-variant means.
void aggregate(ComparisonReport& rep, const std::vector<MpcVariant>& variants) {
  const int V = static_cast<int>(variants.size());
  for (int t = 0; t < rep.n_trials; ++t) {
    const TrialResult* cmax = nullptr;
    for (int v = 0; v < V; ++v)
      if (rep.trials[t * V + v].variant == MpcVariant::CMax) cmax = &rep.trials[t * V + v];
    if (!cmax || !cmax->completed) continue;
    for (int v = 0; v < V; ++v) {
      TrialResult& r = rep.trials[t * V + v];
      if (r.completed)
        r.suboptimality = (r.cost - cmax->cost) / std::max(cmax->cost, 1e-12);
    }
  }
  for (int v = 0; v < V; ++v) {
    VariantSummary s;
    s.variant = variants[v];
    s.trials = rep.n_trials;
    double cost = 0.0, sub = 0.0, ms = 0.0, steps = 0.0;
    int completed = 0, with_ref = 0;
    for (int t = 0; t < rep.n_trials; ++t) {
      const TrialResult& r = rep.trials[t * V + v];
      if (!r.completed) continue;
      ++completed;
      cost += r.cost;
      ms += r.mean_solve_ms;
      steps += r.steps;
      const TrialResult* cmax = nullptr;
      for (int w = 0; w < V; ++w)
        if (rep.trials[t * V + w].variant == MpcVariant::CMax) cmax = &rep.trials[t * V + w];
      if (cmax && cmax->completed) {
        sub += r.suboptimality;
        ++with_ref;
      }
    }
    s.feasible_trials = completed;
    if (completed > 0) {
      s.mean_cost = cost / completed;
      s.mean_solve_ms = ms / completed;
      s.mean_steps = steps / completed;
    }
    if (with_ref > 0) s.mean_suboptimality = sub / with_ref;
    rep.summary.push_back(s);
  }
}

}  // namespace

ComparisonReport run_comparison(const ValidatedSystem& prediction, const Partition& part,
                                const std::vector<MpcVariant>& variants, int T,
                                const X0Policy& x0_policy, int n_trials, std::uint64_t seed,
                                const LtiSystem* simulation, const ComparisonOptions& opts) {
  if (variants.empty()) throw Error(ErrorKind::BuildError, "variant list is empty");
  if (n_trials < 1) throw Error(ErrorKind::BuildError, "n_trials must be positive");

  Toolkit kit = build_toolkit(prediction, part, variants, opts.design);
  const LtiSystem& sim = simulation ? *simulation : prediction.get();
  if (sim.n() != prediction->n() || sim.m() != prediction->m())
    throw Error(ErrorKind::DimensionMismatch, "simulation model dimensions differ");
  if (x0_policy.kind == X0Policy::Kind::Grid)
    box_bounds(prediction.get());  // config errors surface here, not mid-campaign
  if (x0_policy.kind == X0Policy::Kind::Custom && !x0_policy.custom)
    throw Error(ErrorKind::BuildError, "custom start policy without a generator");

  const int V = static_cast<int>(variants.size());
  ComparisonReport rep;
  rep.n_trials = n_trials;
  rep.T = T;
  rep.seed = seed;
  rep.trials.resize(static_cast<size_t>(n_trials) * V);

  parallel_for(n_trials, [&](int t) {
    std::mt19937_64 rng(trial_seed(seed, t));
    VectorXd x0 = draw_x0(x0_policy, prediction.get(), n_trials, t, rng);
    for (int v = 0; v < V; ++v)
      rep.trials[static_cast<size_t>(t) * V + v] =
          run_one(kit, sim, variants[v], T, x0, t, opts.rh);
  }, opts.parallel);

  aggregate(rep, variants);
  return rep;
}

ComparisonReport run_smd_campaign(const SmdChainSpec& spec,
                                  const std::vector<MpcVariant>& variants, int T, int n_trials,
                                  std::uint64_t seed, const ComparisonOptions& opts) {
  if (variants.empty()) throw Error(ErrorKind::BuildError, "variant list is empty");
  if (n_trials < 1) throw Error(ErrorKind::BuildError, "n_trials must be positive");

  if (spec.M < 2) throw Error(ErrorKind::BuildError, "a chain needs at least two masses");

  const int V = static_cast<int>(variants.size());
  ComparisonReport rep;
  rep.n_trials = n_trials;
  rep.T = T;
  rep.seed = seed;
  rep.trials.resize(static_cast<size_t>(n_trials) * V);

  parallel_for(n_trials, [&](int t) {
    // Each trial is a fresh chain; stamp the slots even when its synthesis
    // fails so one bad draw shows up as incomplete data, not a dead campaign.
    for (int v = 0; v < V; ++v) {
      TrialResult& r = rep.trials[static_cast<size_t>(t) * V + v];
      r.trial = t;
      r.variant = variants[v];
    }
    try {
      std::mt19937_64 rng(trial_seed(seed, t));
      SmdChain chain = smd_chain(spec, rng());
      ValidatedSystem pred = validate_system(euler_discretize(chain.cts, spec.dt));
      LtiSystem sim = zoh_discretize(chain.cts, spec.dt);
      Toolkit kit = build_toolkit(pred, chain.part, variants, opts.design);
      VectorXd x0 = smd_initial_state(spec, rng);
      for (int v = 0; v < V; ++v)
        rep.trials[static_cast<size_t>(t) * V + v] =
            run_one(kit, sim, variants[v], T, x0, t, opts.rh);
    } catch (const Error&) {
      // slots stay at their defaults (not completed)
    }
  }, opts.parallel);

  aggregate(rep, variants);
  return rep;
}

}  // namespace admpc
