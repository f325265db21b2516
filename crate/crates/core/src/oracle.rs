//! Numeric ground truth, independent of the symbolic certificate pipeline.
//!
//! Everything here drives the model through [`crate::model::belief_update`]
//! with concrete numbers: Monte-Carlo simulation over parameter strategies,
//! exhaustive reachability for small instances, claim falsification, and
//! the sampled residual re-check that every reconstructed certificate must
//! pass before it is reported. None of these paths share code with the
//! polynomial substitution used to build the LP, which is the point.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::certify::{CertificateProgram, OptimalitySpec, SafetySpec};
use crate::certify::Direction;
use crate::model::{
    belief_update, expected_reward, ActionId, Belief, BeliefSet, ModelError, ObsId, Policy,
    ThetaAssignment, UncertainPomdp,
};
use crate::poly::Polynomial;

/// Hard cap on the number of enumerated nodes in [`exact_reach`].
pub const REACH_CAPACITY: usize = 1_000_000;
/// Give up on a rejection-sampled obligation after this many attempts.
const REJECTION_LIMIT: usize = 1_000_000;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("exact reachability needs a point initial belief")]
    NonPointInit,
    #[error("exact reachability would enumerate more than {cap} nodes")]
    CapacityExceeded { cap: usize },
    #[error("model error: {0}")]
    Model(#[from] ModelError),
}

/// How uncertain entries are chosen while simulating.
#[derive(Debug, Clone)]
pub enum ThetaStrategy {
    /// Interval midpoints, fixed over the run.
    Nominal,
    /// A caller-chosen assignment, fixed over the run.
    Fixed(ThetaAssignment),
    /// Redrawn uniformly inside each interval at every step.
    UniformPerStep,
    /// Redrawn at every step from the interval endpoints.
    VertexPerStep,
}

/// One parameter assignment under `strategy`; every value lands inside its
/// declared interval.
pub fn draw_theta(
    model: &UncertainPomdp,
    strategy: &ThetaStrategy,
    rng: &mut ChaCha8Rng,
) -> ThetaAssignment {
    let mut out = ThetaAssignment::new();
    for (key, lo, hi) in model.uncertain_params() {
        let v = match strategy {
            ThetaStrategy::Nominal => 0.5 * (lo + hi),
            ThetaStrategy::Fixed(a) => a.get(&key).copied().unwrap_or(0.5 * (lo + hi)),
            ThetaStrategy::UniformPerStep => {
                if hi > lo {
                    rng.gen_range(lo..=hi)
                } else {
                    lo
                }
            }
            ThetaStrategy::VertexPerStep => {
                if rng.gen_bool(0.5) {
                    lo
                } else {
                    hi
                }
            }
        };
        out.insert(key, v);
    }
    out
}

/// The likelihood of each observation after playing `action` from `belief`.
fn obs_weights(
    model: &UncertainPomdp,
    belief: &Belief,
    action: ActionId,
    theta: &ThetaAssignment,
) -> Result<Vec<f64>, ModelError> {
    let n = model.n_states();
    let b = belief.values();
    let mut predicted = vec![0.0; n];
    for to in 0..n {
        for from in 0..n {
            if b[from] != 0.0 {
                predicted[to] += model.transition_value(from, action, to, theta)? * b[from];
            }
        }
    }
    let mut weights = vec![0.0; model.n_obs()];
    for (z, w) in weights.iter_mut().enumerate() {
        for to in 0..n {
            if predicted[to] != 0.0 {
                *w += model.observation_value(to, action, z, theta)? * predicted[to];
            }
        }
    }
    Ok(weights)
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct Stats {
    pub min: f64,
    pub max: f64,
    pub mean: f64,
}

impl Stats {
    fn empty() -> Stats {
        Stats { min: f64::INFINITY, max: f64::NEG_INFINITY, mean: 0.0 }
    }

    fn push(&mut self, v: f64, count_so_far: usize) {
        self.min = self.min.min(v);
        self.max = self.max.max(v);
        self.mean += (v - self.mean) / (count_so_far as f64 + 1.0);
    }
}

#[derive(Debug, Clone)]
pub struct SimOptions {
    pub trajectories: usize,
    pub horizon: usize,
    pub seed: u64,
    pub theta: ThetaStrategy,
}

#[derive(Debug, Serialize)]
pub struct SimReport {
    pub trajectories: usize,
    /// Runs abandoned because every observation had zero likelihood.
    pub skipped: usize,
    pub horizon: usize,
    /// Per-functional statistics of the final belief.
    pub finals: Vec<Stats>,
    /// `per_step[t][f]` is the statistics of functional `f` at time `t`.
    pub per_step: Vec<Vec<Stats>>,
    /// Cumulative expected reward along the run, over `reward_steps` steps.
    pub total_reward: Stats,
    pub reward_steps: usize,
}

/// Monte-Carlo rollout of the closed loop. Functionals are polynomials over
/// the belief coordinates `b1..bn`. Deterministic for a fixed seed.
pub fn simulate(
    model: &UncertainPomdp,
    policy: &Policy,
    functionals: &[Polynomial],
    opts: &SimOptions,
) -> Result<SimReport, OracleError> {
    let init = match model.init() {
        BeliefSet::Point(b) => b.clone(),
        BeliefSet::SemiAlgebraic(_) => return Err(OracleError::NonPointInit),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let nf = functionals.len();
    let mut per_step = vec![vec![Stats::empty(); nf]; opts.horizon + 1];
    let mut finals = vec![Stats::empty(); nf];
    let mut total_reward = Stats::empty();
    let mut completed = 0usize;
    let mut skipped = 0usize;
    // the last step with a defined action decides how many rewards accrue
    let mut reward_steps = 0usize;

    'runs: for _ in 0..opts.trajectories {
        let mut belief = init.clone();
        let mut prev_obs: Option<ObsId> = None;
        let mut reward_acc = 0.0;
        let mut rewards_counted = 0usize;
        let mut values = vec![vec![0.0; nf]; opts.horizon + 1];
        for (f, p) in functionals.iter().enumerate() {
            values[0][f] = p.eval(belief.values());
        }
        for t in 0..opts.horizon {
            let action = match policy.action_at(t, prev_obs, &belief) {
                Ok(a) => a,
                Err(e) => return Err(OracleError::Model(e)),
            };
            let theta = draw_theta(model, &opts.theta, &mut rng);
            reward_acc += expected_reward(model, &belief, action);
            rewards_counted += 1;
            let weights = obs_weights(model, &belief, action, &theta)?;
            let total: f64 = weights.iter().sum();
            if total <= 0.0 {
                skipped += 1;
                continue 'runs;
            }
            let mut pick = rng.gen_range(0.0..total);
            let mut obs = weights.len() - 1;
            for (z, &w) in weights.iter().enumerate() {
                if pick < w {
                    obs = z;
                    break;
                }
                pick -= w;
            }
            belief = belief_update(model, &belief, action, obs, &theta)?;
            prev_obs = Some(obs);
            for (f, p) in functionals.iter().enumerate() {
                values[t + 1][f] = p.eval(belief.values());
            }
        }
        // the final step's action contributes reward when the policy still
        // defines one (cumulative-reward claims need it, final-belief claims
        // may not)
        if let Ok(a) = policy.action_at(opts.horizon, prev_obs, &belief) {
            reward_acc += expected_reward(model, &belief, a);
            rewards_counted += 1;
        }

        for (t, row) in values.iter().enumerate() {
            for (f, &v) in row.iter().enumerate() {
                per_step[t][f].push(v, completed);
            }
        }
        for (f, &v) in values[opts.horizon].iter().enumerate() {
            finals[f].push(v, completed);
        }
        total_reward.push(reward_acc, completed);
        reward_steps = reward_steps.max(rewards_counted);
        completed += 1;
    }

    Ok(SimReport {
        trajectories: completed,
        skipped,
        horizon: opts.horizon,
        finals,
        per_step,
        total_reward,
        reward_steps,
    })
}

/// The exact reachable belief sets of a small instance, per step.
#[derive(Debug)]
pub struct ReachSet {
    /// `layers[t]` holds every belief reachable at time `t`.
    pub layers: Vec<Vec<Belief>>,
}

impl ReachSet {
    /// Extremes of a functional over the reachable beliefs at time `t`.
    pub fn functional_range(&self, t: usize, functional: &Polynomial) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for b in &self.layers[t] {
            let v = functional.eval(b.values());
            lo = lo.min(v);
            hi = hi.max(v);
        }
        (lo, hi)
    }
}

/// Enumerates every reachable belief exactly, branching over observations
/// and a per-interval grid of `grid_per_theta` parameter values each step.
/// Fails with [`OracleError::CapacityExceeded`] beyond [`REACH_CAPACITY`]
/// enumerated nodes.
pub fn exact_reach(
    model: &UncertainPomdp,
    policy: &Policy,
    horizon: usize,
    grid_per_theta: usize,
) -> Result<ReachSet, OracleError> {
    let init = match model.init() {
        BeliefSet::Point(b) => b.clone(),
        BeliefSet::SemiAlgebraic(_) => return Err(OracleError::NonPointInit),
    };
    let params = model.uncertain_params();
    let grid: Vec<Vec<f64>> = params
        .iter()
        .map(|&(_, lo, hi)| {
            if grid_per_theta <= 1 || hi <= lo {
                vec![0.5 * (lo + hi)]
            } else {
                (0..grid_per_theta)
                    .map(|i| lo + (hi - lo) * i as f64 / (grid_per_theta - 1) as f64)
                    .collect()
            }
        })
        .collect();
    let mut combos: Vec<ThetaAssignment> = vec![ThetaAssignment::new()];
    for (i, &(key, _, _)) in params.iter().enumerate() {
        let mut next = Vec::with_capacity(combos.len() * grid[i].len());
        for c in &combos {
            for &v in &grid[i] {
                let mut c2 = c.clone();
                c2.insert(key, v);
                next.push(c2);
            }
        }
        combos = next;
        if combos.len() > REACH_CAPACITY {
            return Err(OracleError::CapacityExceeded { cap: REACH_CAPACITY });
        }
    }

    // dedupe on exact bit patterns; identical beliefs fork identical futures
    let key_of = |b: &Belief| -> Vec<u64> { b.values().iter().map(|v| v.to_bits()).collect() };

    let mut layers: Vec<Vec<Belief>> = vec![vec![init.clone()]];
    let mut frontier: Vec<(Belief, Option<ObsId>)> = vec![(init, None)];
    let mut nodes = 1usize;
    for t in 0..horizon {
        let mut seen: BTreeMap<(Vec<u64>, Option<ObsId>), ()> = BTreeMap::new();
        let mut next = Vec::new();
        for (belief, prev_obs) in &frontier {
            let action = policy.action_at(t, *prev_obs, belief)?;
            for theta in &combos {
                for obs in 0..model.n_obs() {
                    match belief_update(model, belief, action, obs, theta) {
                        Ok(b2) => {
                            nodes += 1;
                            if nodes > REACH_CAPACITY {
                                return Err(OracleError::CapacityExceeded { cap: REACH_CAPACITY });
                            }
                            let k = (key_of(&b2), Some(obs));
                            if seen.insert(k, ()).is_none() {
                                next.push((b2, Some(obs)));
                            }
                        }
                        Err(ModelError::ImpossibleObservation) => {}
                        Err(e) => return Err(OracleError::Model(e)),
                    }
                }
            }
        }
        layers.push(next.iter().map(|(b, _)| b.clone()).collect());
        frontier = next;
    }
    Ok(ReachSet { layers })
}

/// A claim that falsification tries to break by search.
#[derive(Debug, Clone)]
pub enum FalsifyClaim {
    Safety(SafetySpec),
    Optimality(OptimalitySpec),
}

/// A concrete run violating a claim.
#[derive(Debug, Clone, Serialize)]
pub struct Counterexample {
    pub actions: Vec<usize>,
    pub observations: Vec<usize>,
    /// Parameter values used at each step, keyed by display name.
    pub theta_trace: Vec<BTreeMap<String, f64>>,
    pub final_belief: Vec<f64>,
    /// The achieved functional value (or cumulative reward).
    pub value: f64,
    /// The bound the claim asserted.
    pub bound: f64,
}

#[derive(Debug, Clone)]
pub struct FalsifyOptions {
    pub budget_runs: usize,
    pub seed: u64,
}

impl Default for FalsifyOptions {
    fn default() -> FalsifyOptions {
        FalsifyOptions { budget_runs: 4_000, seed: 7 }
    }
}

/// Searches for a run violating the claim; `None` means the search budget
/// was exhausted without finding one (not a proof). Deterministic in seed.
pub fn falsify(
    model: &UncertainPomdp,
    policy: &Policy,
    claim: &FalsifyClaim,
    opts: &FalsifyOptions,
) -> Result<Option<Counterexample>, OracleError> {
    let init = match model.init() {
        BeliefSet::Point(b) => b.clone(),
        BeliefSet::SemiAlgebraic(_) => return Err(OracleError::NonPointInit),
    };
    let horizon = match claim {
        FalsifyClaim::Safety(s) => s.horizon,
        FalsifyClaim::Optimality(o) => o.horizon,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let strategies = [
        ThetaStrategy::Nominal,
        ThetaStrategy::VertexPerStep,
        ThetaStrategy::UniformPerStep,
    ];

    for run in 0..opts.budget_runs {
        let strategy = &strategies[run % strategies.len()];
        let mut belief = init.clone();
        let mut prev_obs: Option<ObsId> = None;
        let mut actions = Vec::new();
        let mut observations = Vec::new();
        let mut theta_trace = Vec::new();
        let mut reward_acc = 0.0;
        let mut dead = false;

        for t in 0..horizon {
            let action = policy.action_at(t, prev_obs, &belief)?;
            let theta = draw_theta(model, strategy, &mut rng);
            if matches!(claim, FalsifyClaim::Optimality(_)) {
                reward_acc += expected_reward(model, &belief, action);
            }
            let weights = obs_weights(model, &belief, action, &theta)?;
            let total: f64 = weights.iter().sum();
            if total <= 0.0 {
                dead = true;
                break;
            }
            // greedy twist: half the runs chase the likeliest observation,
            // the rest sample, which covers low-probability branches too
            let obs = if run % 2 == 0 {
                let mut pick = rng.gen_range(0.0..total);
                let mut chosen = weights.len() - 1;
                for (z, &w) in weights.iter().enumerate() {
                    if pick < w {
                        chosen = z;
                        break;
                    }
                    pick -= w;
                }
                chosen
            } else {
                let mut best = 0;
                for (z, &w) in weights.iter().enumerate() {
                    if w > weights[best] {
                        best = z;
                    }
                }
                best
            };
            belief = belief_update(model, &belief, action, obs, &theta)?;
            actions.push(action);
            observations.push(obs);
            theta_trace.push(
                theta
                    .iter()
                    .map(|(k, &v)| (k.describe(model), v))
                    .collect::<BTreeMap<_, _>>(),
            );
            prev_obs = Some(obs);
        }
        if dead {
            continue;
        }

        let violation = match claim {
            FalsifyClaim::Safety(s) => {
                let v = s.functional.eval(belief.values());
                let broken = match s.direction {
                    Direction::UpperBound => v > s.lambda + 1e-12,
                    Direction::LowerBound => v < s.lambda - 1e-12,
                };
                broken.then_some((v, s.lambda))
            }
            FalsifyClaim::Optimality(o) => {
                if let Ok(a) = policy.action_at(horizon, prev_obs, &belief) {
                    reward_acc += expected_reward(model, &belief, a);
                }
                (reward_acc > o.gamma + 1e-12).then_some((reward_acc, o.gamma))
            }
        };
        if let Some((value, bound)) = violation {
            return Ok(Some(Counterexample {
                actions,
                observations,
                theta_trace,
                final_belief: belief.values().to_vec(),
                value,
                bound,
            }));
        }
    }
    Ok(None)
}

/// Outcome of re-testing a certificate numerically.
#[derive(Debug, Clone, Serialize)]
pub struct ResidualReport {
    pub samples: usize,
    /// Smallest margin over all sampled obligations; negative means a
    /// violation of that size was observed.
    pub min_margin: f64,
    pub worst_obligation: String,
    /// Per-obligation minimum margins.
    pub per_obligation: BTreeMap<String, f64>,
    /// Obligations whose constraint set produced no accepted sample.
    pub empty_sets: Vec<String>,
}

fn sample_simplex(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut b: Vec<f64> = (0..n).map(|_| -(rng.gen_range(1e-12..1.0f64)).ln()).collect();
    let sum: f64 = b.iter().sum();
    b.iter_mut().for_each(|v| *v /= sum);
    b
}

/// Re-tests a reconstructed barrier against the claim's own semantics by
/// sampling: slice positivity, initial negativity, and stepwise decrease
/// through the numeric belief update (not the polynomial composition).
pub fn check_certificate(
    model: &UncertainPomdp,
    program: &CertificateProgram,
    barrier: &Polynomial,
    samples: usize,
    seed: u64,
) -> Result<ResidualReport, OracleError> {
    let ctx = &program.check;
    let dynamics = &program.dynamics;
    let n = dynamics.n_states();
    let nvars = dynamics.vars().len();
    let t_var = dynamics.t_var();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut per: BTreeMap<String, f64> = BTreeMap::new();
    let mut empty = Vec::new();
    let mut used = 0usize;

    let eval_b = |b: &[f64], t: f64| -> f64 {
        let mut point = vec![0.0; nvars];
        point[..n].copy_from_slice(b);
        point[t_var] = t;
        barrier.eval(&point)
    };

    // obligation budget: spread samples across slices, init, and steps
    let n_obligations = ctx.unsafe_slices.len()
        + 1
        + ctx.steps.iter().map(|m| m.len()).sum::<usize>();
    let budget = (samples / n_obligations.max(1)).max(16);

    for (i, slice) in ctx.unsafe_slices.iter().enumerate() {
        let label = format!("unsafe[{i}]@t{}", slice.t);
        let mut min_m = f64::INFINITY;
        let mut accepted = 0usize;
        let mut point = vec![0.0; nvars];
        for _ in 0..REJECTION_LIMIT {
            if accepted >= budget {
                break;
            }
            let b = sample_simplex(n, &mut rng);
            point[..n].copy_from_slice(&b);
            if slice.ineqs.iter().any(|p| p.eval(&point) < 0.0) {
                continue;
            }
            accepted += 1;
            used += 1;
            min_m = min_m.min(eval_b(&b, slice.t as f64) - ctx.margin_unsafe);
        }
        if accepted == 0 {
            empty.push(label);
        } else {
            per.insert(label, min_m);
        }
    }

    {
        let mut min_m = f64::INFINITY;
        let mut accepted = 0usize;
        match &ctx.init {
            BeliefSet::Point(b0) => {
                accepted = 1;
                used += 1;
                min_m = -ctx.margin_init - eval_b(b0.values(), 0.0);
            }
            BeliefSet::SemiAlgebraic(ps) => {
                for _ in 0..REJECTION_LIMIT {
                    if accepted >= budget {
                        break;
                    }
                    let b = sample_simplex(n, &mut rng);
                    if ps.iter().any(|p| p.eval(&b) > 0.0) {
                        continue;
                    }
                    accepted += 1;
                    used += 1;
                    min_m = min_m.min(-ctx.margin_init - eval_b(&b, 0.0));
                }
            }
        }
        if accepted == 0 {
            empty.push("init".to_string());
        } else {
            per.insert("init".to_string(), min_m);
        }
    }

    for (k, modes) in ctx.steps.iter().enumerate() {
        let t_next = (k + 1) as f64;
        for mode in modes {
            let label = format!("step[{}].mode[a{},z{}]", k + 1, mode.action, mode.obs);
            let mut min_m = f64::INFINITY;
            let mut accepted = 0usize;
            let mut point = vec![0.0; nvars];
            for _ in 0..REJECTION_LIMIT {
                if accepted >= budget {
                    break;
                }
                let b = sample_simplex(n, &mut rng);
                point[..n].copy_from_slice(&b);
                if mode.guards.iter().any(|g| g.eval(&point) < 0.0) {
                    continue;
                }
                let mut theta = ThetaAssignment::new();
                for tv in dynamics.theta_vars() {
                    let v = if tv.hi > tv.lo {
                        rng.gen_range(tv.lo..=tv.hi)
                    } else {
                        tv.lo
                    };
                    theta.insert(tv.key, v);
                }
                let belief = Belief::new(b.clone()).expect("simplex sample is a distribution");
                match belief_update(model, &belief, mode.action, mode.obs, &theta) {
                    Ok(b2) => {
                        accepted += 1;
                        used += 1;
                        let drop = eval_b(&b, t_next - 1.0) - eval_b(b2.values(), t_next);
                        min_m = min_m.min(drop);
                    }
                    Err(ModelError::ImpossibleObservation) => continue,
                    Err(e) => return Err(OracleError::Model(e)),
                }
            }
            if accepted == 0 {
                empty.push(label);
            } else {
                per.insert(label, min_m);
            }
        }
    }

    let (worst_obligation, min_margin) = per
        .iter()
        .min_by(|a, b| a.1.partial_cmp(b.1).expect("margins are finite"))
        .map(|(k, &v)| (k.clone(), v))
        .unwrap_or_else(|| ("none".to_string(), f64::INFINITY));

    Ok(ResidualReport {
        samples: used,
        min_margin,
        worst_obligation,
        per_obligation: per,
        empty_sets: empty,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{constant_schedule as schedule, drift_chain as chain_model};

    #[test]
    fn simulate_is_deterministic_for_fixed_seed() {
        let m = chain_model();
        let f = Polynomial::var(&crate::model::belief_vars(2), 0);
        let opts = SimOptions {
            trajectories: 64,
            horizon: 5,
            seed: 11,
            theta: ThetaStrategy::Nominal,
        };
        let a = simulate(&m, &schedule(6), &[f.clone()], &opts).unwrap();
        let b = simulate(&m, &schedule(6), &[f], &opts).unwrap();
        assert_eq!(a.finals[0].min.to_bits(), b.finals[0].min.to_bits());
        assert_eq!(a.finals[0].max.to_bits(), b.finals[0].max.to_bits());
        assert_eq!(a.total_reward.mean.to_bits(), b.total_reward.mean.to_bits());
    }

    #[test]
    fn exact_reach_enumerates_observation_branches() {
        let m = chain_model();
        let reach = exact_reach(&m, &schedule(3), 3, 1).unwrap();
        assert_eq!(reach.layers[0].len(), 1);
        // two observations, no parameter branching, all updates distinct
        assert_eq!(reach.layers[1].len(), 2);
        assert_eq!(reach.layers[2].len(), 4);
        assert_eq!(reach.layers[3].len(), 8);
        for layer in &reach.layers {
            for b in layer {
                let sum: f64 = b.values().iter().sum();
                assert!((sum - 1.0).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn simulate_extremes_match_exact_reach_on_point_models() {
        let m = chain_model();
        let f = Polynomial::var(&crate::model::belief_vars(2), 0);
        let reach = exact_reach(&m, &schedule(3), 3, 1).unwrap();
        let (lo, hi) = reach.functional_range(3, &f);
        let opts = SimOptions {
            trajectories: 20_000,
            horizon: 3,
            seed: 3,
            theta: ThetaStrategy::Nominal,
        };
        let sim = simulate(&m, &schedule(4), &[f], &opts).unwrap();
        assert!((sim.finals[0].min - lo).abs() <= 1e-12);
        assert!((sim.finals[0].max - hi).abs() <= 1e-12);
    }

    #[test]
    fn falsify_finds_a_broken_upper_bound() {
        let m = chain_model();
        let f = Polynomial::var(&crate::model::belief_vars(2), 1);
        // claim: belief in q2 stays below 0.5 after 4 steps; false
        let claim = FalsifyClaim::Safety(SafetySpec {
            functional: f,
            lambda: 0.5,
            direction: Direction::UpperBound,
            horizon: 4,
        });
        let cex = falsify(&m, &schedule(5), &claim, &FalsifyOptions::default())
            .unwrap()
            .expect("counterexample expected");
        assert!(cex.value > 0.5);
        assert_eq!(cex.actions.len(), 4);
        assert_eq!(cex.observations.len(), 4);
    }

    #[test]
    fn falsify_respects_true_bounds() {
        let m = chain_model();
        let f = Polynomial::var(&crate::model::belief_vars(2), 1);
        // belief coordinates cannot exceed 1
        let claim = FalsifyClaim::Safety(SafetySpec {
            functional: f,
            lambda: 1.01,
            direction: Direction::UpperBound,
            horizon: 4,
        });
        let got = falsify(&m, &schedule(5), &claim, &FalsifyOptions::default()).unwrap();
        assert!(got.is_none());
    }

    #[test]
    fn falsify_breaks_an_impossible_reward_budget() {
        let m = chain_model();
        // rewards are in [1, 2] per step; 5 steps cannot stay under 4
        let tvars = crate::poly::VarSet::new(vec!["t"]);
        let spec = OptimalitySpec {
            gamma: 4.0,
            gamma_tilde: Polynomial::constant(&tvars, 4.0 / 5.0),
            horizon: 4,
        };
        let cex = falsify(
            &m,
            &schedule(5),
            &FalsifyClaim::Optimality(spec),
            &FalsifyOptions::default(),
        )
        .unwrap()
        .expect("counterexample expected");
        assert!(cex.value > 4.0);
    }
}
