//! Symbolic belief dynamics: one rational vector field per mode.
//!
//! A mode is an (action, observation) pair. The unnormalized next belief is
//! `S_to(b, theta) = O(to, a, z) * sum_from T(from, a, to) * b_from`, and the
//! Bayes normalizer is `R = sum_to S_to`, so the belief update is the
//! rational map `b' = S/R`. Interval entries become theta variables, hence
//! each `S_to` is jointly degree 1 in `b` and degree 1 in each theta.
//!
//! The shared variable table is `b1..bn, th1..thm, t`, with `t` reserved for
//! time-indexed certificates built on top of these dynamics.

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::model::{
    ActionId, ModelError, ObsId, Policy, ProbEntry, StateId, ThetaKey, UncertainPomdp,
};
use crate::poly::{Polynomial, VarSet};

/// One uncertain probability entry lifted to a polynomial variable.
#[derive(Debug, Clone)]
pub struct ThetaVar {
    /// Name in the variable table (`th1`, `th2`, ...).
    pub name: String,
    pub key: ThetaKey,
    pub lo: f64,
    pub hi: f64,
    /// Index in the dynamics variable table.
    pub var: usize,
}

/// Numerator rows and shared denominator of one mode's belief update.
#[derive(Debug, Clone)]
pub struct VectorField {
    /// `rows[to]` is the unnormalized next mass of state `to`.
    pub rows: Vec<Polynomial>,
    /// Bayes normalizer; structurally the sum of `rows`.
    pub denom: Polynomial,
}

impl VectorField {
    /// True when the observation is impossible in this mode regardless of
    /// belief and parameters (the normalizer is the zero polynomial).
    pub fn is_vacuous(&self) -> bool {
        self.denom.is_zero()
    }
}

/// An action admissible at some step together with the belief-region guard
/// under which it applies. Guards are in `p(b) >= 0` form over the dynamics
/// variable table; an empty list means no restriction.
#[derive(Debug, Clone)]
pub struct ModeChoice {
    pub action: ActionId,
    pub guards_geq0: Vec<Polynomial>,
}

/// Symbolic belief-update fields for every mode of a model.
#[derive(Debug)]
pub struct BeliefDynamics {
    vars: Arc<VarSet>,
    n_states: usize,
    theta: Vec<ThetaVar>,
    modes: BTreeMap<(ActionId, ObsId), VectorField>,
}

impl BeliefDynamics {
    /// Table layout: `b1..bn`, then one `th*` per uncertain entry, then `t`.
    pub fn vars(&self) -> &Arc<VarSet> {
        &self.vars
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    /// Variable index of belief coordinate `q`.
    pub fn belief_var(&self, q: StateId) -> usize {
        debug_assert!(q < self.n_states);
        q
    }

    pub fn belief_var_ids(&self) -> Vec<usize> {
        (0..self.n_states).collect()
    }

    pub fn theta_vars(&self) -> &[ThetaVar] {
        &self.theta
    }

    /// Variable index of the time variable.
    pub fn t_var(&self) -> usize {
        self.n_states + self.theta.len()
    }

    pub fn mode(&self, action: ActionId, obs: ObsId) -> &VectorField {
        &self.modes[&(action, obs)]
    }

    pub fn modes(&self) -> impl Iterator<Item = (&(ActionId, ObsId), &VectorField)> {
        self.modes.iter()
    }

    /// Interval membership polynomials `(th - lo) * (hi - th)`, one per
    /// theta variable, nonnegative exactly on the admissible box.
    pub fn theta_constraints(&self) -> Vec<Polynomial> {
        self.theta
            .iter()
            .map(|tv| {
                let th = Polynomial::var(&self.vars, tv.var);
                let lo = Polynomial::constant(&self.vars, tv.lo);
                let hi = Polynomial::constant(&self.vars, tv.hi);
                &(&th - &lo) * &(&hi - &th)
            })
            .collect()
    }

    /// The actions (and their guards) that a policy admits at `step`.
    ///
    /// Schedule branches are widened to the set of actions reachable at the
    /// step regardless of the observation taken; region rules are treated as
    /// applicable wherever their guard holds, ignoring rule order. Both
    /// over-approximate the closed-loop behavior, which keeps certificates
    /// sound.
    pub fn modes_for(&self, policy: &Policy, step: usize) -> Result<Vec<ModeChoice>, ModelError> {
        match policy {
            Policy::Arbitrary => Ok((0..self.n_actions_hint())
                .map(|a| ModeChoice { action: a, guards_geq0: Vec::new() })
                .collect()),
            Policy::TimeSchedule(steps) => {
                let s = steps.get(step).ok_or(ModelError::ScheduleExhausted {
                    step,
                    len: steps.len(),
                })?;
                let mut actions = vec![s.action];
                for &a in s.branches.values() {
                    if !actions.contains(&a) {
                        actions.push(a);
                    }
                }
                actions.sort_unstable();
                Ok(actions
                    .into_iter()
                    .map(|a| ModeChoice { action: a, guards_geq0: Vec::new() })
                    .collect())
            }
            Policy::BeliefRegions(rules) => {
                let mut out = Vec::new();
                for rule in rules {
                    let mut guards = Vec::new();
                    for p in &rule.leq0 {
                        let embedded = p.embed(&self.vars).map_err(|_| {
                            ModelError::UnknownName {
                                kind: "region variable",
                                name: p.canonical_string(),
                            }
                        })?;
                        guards.push(-&embedded);
                    }
                    out.push(ModeChoice { action: rule.action, guards_geq0: guards });
                }
                Ok(out)
            }
        }
    }

    fn n_actions_hint(&self) -> usize {
        self.modes
            .keys()
            .map(|&(a, _)| a + 1)
            .max()
            .unwrap_or(0)
    }
}

/// Builds the per-mode vector fields of a model.
pub fn build_dynamics(model: &UncertainPomdp) -> BeliefDynamics {
    let n = model.n_states();
    let params = model.uncertain_params();

    let mut names: Vec<String> = (1..=n).map(|i| format!("b{i}")).collect();
    for i in 1..=params.len() {
        names.push(format!("th{i}"));
    }
    names.push("t".to_string());
    let vars = VarSet::new(names);

    let theta: Vec<ThetaVar> = params
        .iter()
        .enumerate()
        .map(|(i, &(key, lo, hi))| ThetaVar {
            name: format!("th{}", i + 1),
            key,
            lo,
            hi,
            var: n + i,
        })
        .collect();
    let theta_index: BTreeMap<ThetaKey, usize> =
        theta.iter().map(|tv| (tv.key, tv.var)).collect();

    let entry_poly = |entry: ProbEntry, key: ThetaKey| -> Polynomial {
        match entry {
            ProbEntry::Point(v) => Polynomial::constant(&vars, v),
            ProbEntry::Interval(_, _) => Polynomial::var(&vars, theta_index[&key]),
        }
    };

    let mut modes = BTreeMap::new();
    for action in 0..model.n_actions() {
        for obs in 0..model.n_obs() {
            let mut rows = Vec::with_capacity(n);
            for to in 0..n {
                let o = entry_poly(
                    model.observation(to, action, obs),
                    ThetaKey::Obs { state: to, action, obs },
                );
                let mut predicted = Polynomial::zero(&vars);
                for from in 0..n {
                    let t = entry_poly(
                        model.transition(from, action, to),
                        ThetaKey::Trans { from, action, to },
                    );
                    let b_from = Polynomial::var(&vars, from);
                    predicted = &predicted + &(&t * &b_from);
                }
                rows.push(&o * &predicted);
            }
            let mut denom = Polynomial::zero(&vars);
            for r in &rows {
                denom = &denom + r;
            }
            modes.insert((action, obs), VectorField { rows, denom });
        }
    }

    BeliefDynamics { vars, n_states: n, theta, modes }
}
