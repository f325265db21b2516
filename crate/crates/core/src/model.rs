//! POMDPs with interval-valued transition and observation probabilities.
//!
//! Probabilities are sparse: absent entries are exact zeros. An entry is
//! either a point value or a closed interval `[lo, hi]`; the set of interval
//! entries defines the uncertainty parameters (theta) of the model. Interval
//! entries are independent: the admissible parameter set is the full box,
//! with no row-stochasticity constraint tying parameters together.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::poly::{Monomial, Polynomial, VarSet};

pub type StateId = usize;
pub type ActionId = usize;
pub type ObsId = usize;

/// Point row sums must match 1 within this tolerance.
pub const ROW_SUM_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("unknown {kind} name `{name}`")]
    UnknownName { kind: &'static str, name: String },
    #[error("belief has {got} entries, model has {want} states")]
    BeliefArity { got: usize, want: usize },
    #[error("belief entries must be nonnegative and sum to 1 (sum was {sum})")]
    InvalidBelief { sum: f64 },
    #[error("observation has probability zero under the predicted belief")]
    ImpossibleObservation,
    #[error("no value assigned to uncertain parameter {0}")]
    MissingTheta(String),
    #[error("value {value} for parameter {key} lies outside [{lo}, {hi}]")]
    ThetaOutOfInterval { key: String, value: f64, lo: f64, hi: f64 },
    #[error("policy does not define an action for the current belief")]
    PolicyUndefined,
    #[error("schedule of length {len} has no action for step {step}")]
    ScheduleExhausted { step: usize, len: usize },
}

/// A probability that is either known exactly or known up to an interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ProbEntry {
    Point(f64),
    Interval(f64, f64),
}

impl ProbEntry {
    pub fn lo(&self) -> f64 {
        match *self {
            ProbEntry::Point(v) => v,
            ProbEntry::Interval(lo, _) => lo,
        }
    }

    pub fn hi(&self) -> f64 {
        match *self {
            ProbEntry::Point(v) => v,
            ProbEntry::Interval(_, hi) => hi,
        }
    }

    /// Interval midpoint; the point value itself for point entries.
    pub fn nominal(&self) -> f64 {
        match *self {
            ProbEntry::Point(v) => v,
            ProbEntry::Interval(lo, hi) => 0.5 * (lo + hi),
        }
    }

    pub fn is_interval(&self) -> bool {
        matches!(self, ProbEntry::Interval(_, _))
    }

    pub fn contains(&self, v: f64) -> bool {
        v >= self.lo() && v <= self.hi()
    }
}

/// Identifies one uncertain probability entry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum ThetaKey {
    Trans { from: StateId, action: ActionId, to: StateId },
    Obs { state: StateId, action: ActionId, obs: ObsId },
}

/// Values chosen for the uncertain entries, keyed by triplet.
pub type ThetaAssignment = BTreeMap<ThetaKey, f64>;

impl ThetaKey {
    pub fn describe(&self, m: &UncertainPomdp) -> String {
        match *self {
            ThetaKey::Trans { from, action, to } => format!(
                "T({}, {}, {})",
                m.states[from], m.actions[action], m.states[to]
            ),
            ThetaKey::Obs { state, action, obs } => format!(
                "O({}, {}, {})",
                m.states[state], m.actions[action], m.observations[obs]
            ),
        }
    }
}

/// A probability distribution over model states.
#[derive(Debug, Clone, PartialEq)]
pub struct Belief(Vec<f64>);

impl Belief {
    /// Accepts a distribution whose entries are nonnegative and sum to 1
    /// within `1e-9`.
    pub fn new(values: Vec<f64>) -> Result<Belief, ModelError> {
        let sum: f64 = values.iter().sum();
        if values.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) || (sum - 1.0).abs() > 1e-9 {
            return Err(ModelError::InvalidBelief { sum });
        }
        Ok(Belief(values))
    }

    /// The Dirac belief concentrated on one state.
    pub fn point(n_states: usize, state: StateId) -> Belief {
        let mut v = vec![0.0; n_states];
        v[state] = 1.0;
        Belief(v)
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// The set of admissible initial beliefs.
#[derive(Debug, Clone, PartialEq)]
pub enum BeliefSet {
    Point(Belief),
    /// Intersection of `p(b) <= 0` constraints (over `b1..bn`) with the
    /// belief simplex.
    SemiAlgebraic(Vec<Polynomial>),
}

/// One step of a time schedule. `branches` optionally overrides the action
/// based on the observation received in the previous step.
#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleStep {
    pub action: ActionId,
    pub branches: BTreeMap<ObsId, ActionId>,
}

/// A region rule: take `action` where every listed polynomial is `<= 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionRule {
    pub leq0: Vec<Polynomial>,
    pub action: ActionId,
}

/// How actions are chosen over the verification horizon.
#[derive(Debug, Clone, PartialEq)]
pub enum Policy {
    /// Verify against every action at every step.
    Arbitrary,
    TimeSchedule(Vec<ScheduleStep>),
    /// First rule whose guards hold wins; rules may overlap.
    BeliefRegions(Vec<RegionRule>),
}

impl Policy {
    /// The action a simulator takes at `step`, given the previous
    /// observation and the current belief.
    pub fn action_at(
        &self,
        step: usize,
        prev_obs: Option<ObsId>,
        belief: &Belief,
    ) -> Result<ActionId, ModelError> {
        match self {
            Policy::Arbitrary => Err(ModelError::PolicyUndefined),
            Policy::TimeSchedule(steps) => {
                let s = steps.get(step).ok_or(ModelError::ScheduleExhausted {
                    step,
                    len: steps.len(),
                })?;
                match prev_obs.and_then(|z| s.branches.get(&z)) {
                    Some(&a) => Ok(a),
                    None => Ok(s.action),
                }
            }
            Policy::BeliefRegions(rules) => {
                for rule in rules {
                    let inside = rule
                        .leq0
                        .iter()
                        .all(|p| p.eval(belief.values()) <= 1e-9);
                    if inside {
                        return Ok(rule.action);
                    }
                }
                Err(ModelError::PolicyUndefined)
            }
        }
    }
}

/// A finite POMDP whose transition and observation probabilities may be
/// interval-valued.
#[derive(Debug, Clone)]
pub struct UncertainPomdp {
    states: Vec<String>,
    actions: Vec<String>,
    observations: Vec<String>,
    transitions: BTreeMap<(StateId, ActionId, StateId), ProbEntry>,
    obs_fn: BTreeMap<(StateId, ActionId, ObsId), ProbEntry>,
    rewards: BTreeMap<(StateId, ActionId), f64>,
    init: BeliefSet,
}

impl UncertainPomdp {
    pub fn new(
        states: Vec<String>,
        actions: Vec<String>,
        observations: Vec<String>,
    ) -> UncertainPomdp {
        let n = states.len();
        UncertainPomdp {
            states,
            actions,
            observations,
            transitions: BTreeMap::new(),
            obs_fn: BTreeMap::new(),
            rewards: BTreeMap::new(),
            init: BeliefSet::Point(Belief(
                (0..n).map(|i| if i == 0 { 1.0 } else { 0.0 }).collect(),
            )),
        }
    }

    pub fn n_states(&self) -> usize {
        self.states.len()
    }

    pub fn n_actions(&self) -> usize {
        self.actions.len()
    }

    pub fn n_obs(&self) -> usize {
        self.observations.len()
    }

    pub fn states(&self) -> &[String] {
        &self.states
    }

    pub fn actions(&self) -> &[String] {
        &self.actions
    }

    pub fn observations(&self) -> &[String] {
        &self.observations
    }

    pub fn state_index(&self, name: &str) -> Option<StateId> {
        self.states.iter().position(|s| s == name)
    }

    pub fn action_index(&self, name: &str) -> Option<ActionId> {
        self.actions.iter().position(|s| s == name)
    }

    pub fn obs_index(&self, name: &str) -> Option<ObsId> {
        self.observations.iter().position(|s| s == name)
    }

    pub fn set_transition(&mut self, from: StateId, action: ActionId, to: StateId, p: ProbEntry) {
        self.transitions.insert((from, action, to), p);
    }

    pub fn set_observation(&mut self, state: StateId, action: ActionId, obs: ObsId, p: ProbEntry) {
        self.obs_fn.insert((state, action, obs), p);
    }

    pub fn set_reward(&mut self, state: StateId, action: ActionId, value: f64) {
        self.rewards.insert((state, action), value);
    }

    pub fn set_init(&mut self, init: BeliefSet) {
        self.init = init;
    }

    /// Absent entries are exact zeros.
    pub fn transition(&self, from: StateId, action: ActionId, to: StateId) -> ProbEntry {
        self.transitions
            .get(&(from, action, to))
            .copied()
            .unwrap_or(ProbEntry::Point(0.0))
    }

    pub fn observation(&self, state: StateId, action: ActionId, obs: ObsId) -> ProbEntry {
        self.obs_fn
            .get(&(state, action, obs))
            .copied()
            .unwrap_or(ProbEntry::Point(0.0))
    }

    pub fn reward(&self, state: StateId, action: ActionId) -> f64 {
        self.rewards.get(&(state, action)).copied().unwrap_or(0.0)
    }

    pub fn init(&self) -> &BeliefSet {
        &self.init
    }

    pub fn transitions(&self) -> impl Iterator<Item = (&(StateId, ActionId, StateId), &ProbEntry)> {
        self.transitions.iter()
    }

    pub fn obs_entries(&self) -> impl Iterator<Item = (&(StateId, ActionId, ObsId), &ProbEntry)> {
        self.obs_fn.iter()
    }

    pub fn rewards(&self) -> impl Iterator<Item = (&(StateId, ActionId), &f64)> {
        self.rewards.iter()
    }

    /// The uncertain entries, in deterministic (transition-then-observation,
    /// index-sorted) order. Their positions define the theta variables.
    pub fn uncertain_params(&self) -> Vec<(ThetaKey, f64, f64)> {
        let mut out = Vec::new();
        for (&(from, action, to), &p) in &self.transitions {
            if let ProbEntry::Interval(lo, hi) = p {
                out.push((ThetaKey::Trans { from, action, to }, lo, hi));
            }
        }
        for (&(state, action, obs), &p) in &self.obs_fn {
            if let ProbEntry::Interval(lo, hi) = p {
                out.push((ThetaKey::Obs { state, action, obs }, lo, hi));
            }
        }
        out
    }

    fn resolve(&self, key: ThetaKey, entry: ProbEntry, theta: &ThetaAssignment) -> Result<f64, ModelError> {
        match entry {
            ProbEntry::Point(v) => Ok(v),
            ProbEntry::Interval(lo, hi) => match theta.get(&key) {
                None => Err(ModelError::MissingTheta(key.describe(self))),
                Some(&v) if v < lo || v > hi => Err(ModelError::ThetaOutOfInterval {
                    key: key.describe(self),
                    value: v,
                    lo,
                    hi,
                }),
                Some(&v) => Ok(v),
            },
        }
    }

    /// Numeric transition probability under a theta assignment.
    pub fn transition_value(
        &self,
        from: StateId,
        action: ActionId,
        to: StateId,
        theta: &ThetaAssignment,
    ) -> Result<f64, ModelError> {
        self.resolve(
            ThetaKey::Trans { from, action, to },
            self.transition(from, action, to),
            theta,
        )
    }

    /// Numeric observation probability under a theta assignment.
    pub fn observation_value(
        &self,
        state: StateId,
        action: ActionId,
        obs: ObsId,
        theta: &ThetaAssignment,
    ) -> Result<f64, ModelError> {
        self.resolve(
            ThetaKey::Obs { state, action, obs },
            self.observation(state, action, obs),
            theta,
        )
    }
}

/// One Bayes update of the belief: predict through the transition row
/// chosen by `theta`, reweight by the observation likelihood, normalize.
pub fn belief_update(
    model: &UncertainPomdp,
    belief: &Belief,
    action: ActionId,
    obs: ObsId,
    theta: &ThetaAssignment,
) -> Result<Belief, ModelError> {
    let n = model.n_states();
    if belief.len() != n {
        return Err(ModelError::BeliefArity { got: belief.len(), want: n });
    }
    let b = belief.values();
    let mut weighted = vec![0.0; n];
    let mut denom = 0.0;
    for to in 0..n {
        let mut predicted = 0.0;
        for from in 0..n {
            if b[from] != 0.0 {
                predicted += model.transition_value(from, action, to, theta)? * b[from];
            }
        }
        let o = model.observation_value(to, action, obs, theta)?;
        weighted[to] = o * predicted;
        denom += weighted[to];
    }
    if denom <= 0.0 {
        return Err(ModelError::ImpossibleObservation);
    }
    for w in &mut weighted {
        *w /= denom;
    }
    Ok(Belief(weighted))
}

/// Expected one-step reward of `action` under `belief`.
pub fn expected_reward(model: &UncertainPomdp, belief: &Belief, action: ActionId) -> f64 {
    belief
        .values()
        .iter()
        .enumerate()
        .map(|(q, &b)| b * model.reward(q, action))
        .sum()
}

/// Checks structural well-formedness. Returns human-readable violations;
/// an empty list means the model is valid.
pub fn validate_model(model: &UncertainPomdp) -> Vec<String> {
    let mut out = Vec::new();
    for (kind, names) in [
        ("state", &model.states),
        ("action", &model.actions),
        ("observation", &model.observations),
    ] {
        if names.is_empty() {
            out.push(format!("model has no {kind}s"));
        }
        for (i, n) in names.iter().enumerate() {
            if n.is_empty() {
                out.push(format!("{kind} {i} has an empty name"));
            }
            if names[..i].contains(n) {
                out.push(format!("duplicate {kind} name `{n}`"));
            }
        }
    }

    let entry_ok = |loc: &str, p: ProbEntry, out: &mut Vec<String>| match p {
        ProbEntry::Point(v) => {
            if !(0.0..=1.0).contains(&v) || !v.is_finite() {
                out.push(format!("{loc}: probability {v} outside [0, 1]"));
            }
        }
        ProbEntry::Interval(lo, hi) => {
            if !(lo.is_finite() && hi.is_finite()) || lo > hi || lo < 0.0 || hi > 1.0 {
                out.push(format!("{loc}: interval [{lo}, {hi}] is not within [0, 1] or is reversed"));
            }
        }
    };

    for (&(from, a, to), &p) in &model.transitions {
        let loc = format!(
            "T({}, {}, {})",
            model.states[from], model.actions[a], model.states[to]
        );
        entry_ok(&loc, p, &mut out);
    }
    for (&(q, a, z), &p) in &model.obs_fn {
        let loc = format!(
            "O({}, {}, {})",
            model.states[q], model.actions[a], model.observations[z]
        );
        entry_ok(&loc, p, &mut out);
    }
    for (&(q, a), &v) in &model.rewards {
        if !v.is_finite() {
            out.push(format!(
                "reward({}, {}) is not finite",
                model.states[q], model.actions[a]
            ));
        }
    }

    // every transition row must admit a stochastic completion inside the box
    for from in 0..model.n_states() {
        for a in 0..model.n_actions() {
            let mut lo_sum = 0.0;
            let mut hi_sum = 0.0;
            let mut any = false;
            let mut uncertain = false;
            for to in 0..model.n_states() {
                if let Some(&p) = model.transitions.get(&(from, a, to)) {
                    any = true;
                    uncertain |= p.is_interval();
                    lo_sum += p.lo();
                    hi_sum += p.hi();
                }
            }
            let loc = format!("transition row ({}, {})", model.states[from], model.actions[a]);
            if !any {
                out.push(format!("{loc}: no outgoing transitions"));
            } else if !uncertain {
                if (lo_sum - 1.0).abs() > ROW_SUM_TOL {
                    out.push(format!("{loc}: probabilities sum to {lo_sum}, expected 1"));
                }
            } else if lo_sum > 1.0 + ROW_SUM_TOL || hi_sum < 1.0 - ROW_SUM_TOL {
                out.push(format!(
                    "{loc}: no stochastic completion, lower bounds sum to {lo_sum} and upper bounds to {hi_sum}"
                ));
            }
        }
    }
    for q in 0..model.n_states() {
        for a in 0..model.n_actions() {
            let mut lo_sum = 0.0;
            let mut hi_sum = 0.0;
            let mut any = false;
            let mut uncertain = false;
            for z in 0..model.n_obs() {
                if let Some(&p) = model.obs_fn.get(&(q, a, z)) {
                    any = true;
                    uncertain |= p.is_interval();
                    lo_sum += p.lo();
                    hi_sum += p.hi();
                }
            }
            let loc = format!("observation row ({}, {})", model.states[q], model.actions[a]);
            if !any {
                out.push(format!("{loc}: no observation distribution"));
            } else if !uncertain {
                if (lo_sum - 1.0).abs() > ROW_SUM_TOL {
                    out.push(format!("{loc}: probabilities sum to {lo_sum}, expected 1"));
                }
            } else if lo_sum > 1.0 + ROW_SUM_TOL || hi_sum < 1.0 - ROW_SUM_TOL {
                out.push(format!(
                    "{loc}: no stochastic completion, lower bounds sum to {lo_sum} and upper bounds to {hi_sum}"
                ));
            }
        }
    }

    match &model.init {
        BeliefSet::Point(b) => {
            if b.len() != model.n_states() {
                out.push(format!(
                    "initial belief has {} entries, model has {} states",
                    b.len(),
                    model.n_states()
                ));
            } else {
                let sum: f64 = b.values().iter().sum();
                if b.values().iter().any(|&v| v < 0.0) || (sum - 1.0).abs() > ROW_SUM_TOL {
                    out.push(format!("initial belief is not a distribution (sum {sum})"));
                }
            }
        }
        BeliefSet::SemiAlgebraic(ps) => {
            let bvars = belief_vars(model.n_states());
            for (i, p) in ps.iter().enumerate() {
                if p.embed(&bvars).is_err() {
                    out.push(format!(
                        "initial constraint {i} uses variables outside b1..b{}",
                        model.n_states()
                    ));
                }
            }
        }
    }
    out
}

/// The canonical belief-coordinate table `b1..bn` for an `n`-state model.
pub fn belief_vars(n_states: usize) -> Arc<VarSet> {
    VarSet::new((1..=n_states).map(|i| format!("b{i}")).collect::<Vec<_>>())
}

// ---------------------------------------------------------------------------
// JSON interchange
// ---------------------------------------------------------------------------

#[derive(Debug, Error)]
pub enum ParseError {
    #[error("JSON error at line {line}, column {column}: {message}")]
    Syntax { line: usize, column: usize, message: String },
    #[error("{location}: {message}")]
    Invalid { location: String, message: String },
}

fn invalid(location: impl Into<String>, message: impl Into<String>) -> ParseError {
    ParseError::Invalid { location: location.into(), message: message.into() }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(untagged)]
enum RawProb {
    Point(f64),
    Interval([f64; 2]),
}

impl From<ProbEntry> for RawProb {
    fn from(p: ProbEntry) -> RawProb {
        match p {
            ProbEntry::Point(v) => RawProb::Point(v),
            ProbEntry::Interval(lo, hi) => RawProb::Interval([lo, hi]),
        }
    }
}

impl From<RawProb> for ProbEntry {
    fn from(p: RawProb) -> ProbEntry {
        match p {
            RawProb::Point(v) => ProbEntry::Point(v),
            RawProb::Interval([lo, hi]) => ProbEntry::Interval(lo, hi),
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct RawTransition {
    from: String,
    action: String,
    to: String,
    prob: RawProb,
}

#[derive(Debug, Serialize, Deserialize)]
struct RawObservation {
    state: String,
    action: String,
    obs: String,
    prob: RawProb,
}

#[derive(Debug, Serialize, Deserialize)]
struct RawReward {
    state: String,
    action: String,
    value: f64,
}

/// One polynomial term: a coefficient and a name-to-power monomial map.
#[derive(Debug, Serialize, Deserialize)]
pub struct RawTerm {
    pub coeff: f64,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub monomial: BTreeMap<String, u16>,
}

#[derive(Debug, Serialize, Deserialize)]
struct RawInit {
    #[serde(skip_serializing_if = "Option::is_none")]
    point: Option<BTreeMap<String, f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    constraints: Option<Vec<Vec<RawTerm>>>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawModel {
    states: Vec<String>,
    actions: Vec<String>,
    observations: Vec<String>,
    #[serde(default)]
    transitions: Vec<RawTransition>,
    #[serde(default)]
    obs_fn: Vec<RawObservation>,
    #[serde(default)]
    rewards: Vec<RawReward>,
    init: RawInit,
}

/// Parses a polynomial from its JSON term list over the given table.
pub fn poly_from_terms(
    terms: &[RawTerm],
    vars: &Arc<VarSet>,
    location: &str,
) -> Result<Polynomial, ParseError> {
    let mut parts = Vec::new();
    for (i, t) in terms.iter().enumerate() {
        if !t.coeff.is_finite() {
            return Err(invalid(
                format!("{location}[{i}].coeff"),
                "coefficient is not finite",
            ));
        }
        let mut exps = vec![0u16; vars.len()];
        for (name, &pow) in &t.monomial {
            match vars.index_of(name) {
                Some(j) => exps[j] = pow,
                None => {
                    return Err(invalid(
                        format!("{location}[{i}].monomial"),
                        format!("unknown variable `{name}`"),
                    ))
                }
            }
        }
        parts.push((Monomial::from_exps(exps), t.coeff));
    }
    Ok(Polynomial::from_terms(vars, parts))
}

/// Renders a polynomial as its JSON term list.
pub fn poly_to_terms(p: &Polynomial) -> Vec<RawTerm> {
    p.terms()
        .map(|(m, c)| {
            let mut monomial = BTreeMap::new();
            for (i, &e) in m.exps().iter().enumerate() {
                if e > 0 {
                    monomial.insert(p.vars().name(i).to_string(), e);
                }
            }
            RawTerm { coeff: c, monomial }
        })
        .collect()
}

/// Parses a model from JSON. Structural problems are reported with the
/// offending field; syntax problems with line and column.
pub fn parse_model(text: &str) -> Result<UncertainPomdp, ParseError> {
    let raw: RawModel = serde_json::from_str(text).map_err(|e| ParseError::Syntax {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;

    let mut model = UncertainPomdp::new(raw.states, raw.actions, raw.observations);
    let find = |names: &[String], name: &str, kind: &str, loc: String| -> Result<usize, ParseError> {
        names
            .iter()
            .position(|s| s == name)
            .ok_or_else(|| invalid(loc, format!("unknown {kind} `{name}`")))
    };

    for (i, t) in raw.transitions.iter().enumerate() {
        let loc = |f: &str| format!("transitions[{i}].{f}");
        let from = find(&model.states, &t.from, "state", loc("from"))?;
        let action = find(&model.actions, &t.action, "action", loc("action"))?;
        let to = find(&model.states, &t.to, "state", loc("to"))?;
        if model.transitions.contains_key(&(from, action, to)) {
            return Err(invalid(loc("prob"), "duplicate transition entry"));
        }
        model.set_transition(from, action, to, match t.prob {
            RawProb::Point(v) => ProbEntry::Point(v),
            RawProb::Interval([lo, hi]) => ProbEntry::Interval(lo, hi),
        });
    }
    for (i, o) in raw.obs_fn.iter().enumerate() {
        let loc = |f: &str| format!("obs_fn[{i}].{f}");
        let state = find(&model.states, &o.state, "state", loc("state"))?;
        let action = find(&model.actions, &o.action, "action", loc("action"))?;
        let obs = find(&model.observations, &o.obs, "observation", loc("obs"))?;
        if model.obs_fn.contains_key(&(state, action, obs)) {
            return Err(invalid(loc("prob"), "duplicate observation entry"));
        }
        model.set_observation(state, action, obs, match o.prob {
            RawProb::Point(v) => ProbEntry::Point(v),
            RawProb::Interval([lo, hi]) => ProbEntry::Interval(lo, hi),
        });
    }
    for (i, r) in raw.rewards.iter().enumerate() {
        let loc = |f: &str| format!("rewards[{i}].{f}");
        let state = find(&model.states, &r.state, "state", loc("state"))?;
        let action = find(&model.actions, &r.action, "action", loc("action"))?;
        model.set_reward(state, action, r.value);
    }

    match (raw.init.point, raw.init.constraints) {
        (Some(point), None) => {
            let mut values = vec![0.0; model.n_states()];
            for (name, v) in &point {
                let q = find(&model.states, name, "state", "init.point".to_string())?;
                values[q] = *v;
            }
            let b = Belief::new(values).map_err(|e| invalid("init.point", e.to_string()))?;
            model.set_init(BeliefSet::Point(b));
        }
        (None, Some(constraints)) => {
            let bvars = belief_vars(model.n_states());
            let mut ps = Vec::new();
            for (i, terms) in constraints.iter().enumerate() {
                ps.push(poly_from_terms(terms, &bvars, &format!("init.constraints[{i}]"))?);
            }
            model.set_init(BeliefSet::SemiAlgebraic(ps));
        }
        (Some(_), Some(_)) => {
            return Err(invalid("init", "give either `point` or `constraints`, not both"))
        }
        (None, None) => return Err(invalid("init", "missing `point` or `constraints`")),
    }
    Ok(model)
}

/// Serializes a model to pretty JSON with entries in index order, so equal
/// models produce byte-identical output.
pub fn serialize_model(model: &UncertainPomdp) -> String {
    let raw = RawModel {
        states: model.states.clone(),
        actions: model.actions.clone(),
        observations: model.observations.clone(),
        transitions: model
            .transitions
            .iter()
            .map(|(&(f, a, t), &p)| RawTransition {
                from: model.states[f].clone(),
                action: model.actions[a].clone(),
                to: model.states[t].clone(),
                prob: p.into(),
            })
            .collect(),
        obs_fn: model
            .obs_fn
            .iter()
            .map(|(&(q, a, z), &p)| RawObservation {
                state: model.states[q].clone(),
                action: model.actions[a].clone(),
                obs: model.observations[z].clone(),
                prob: p.into(),
            })
            .collect(),
        rewards: model
            .rewards
            .iter()
            .map(|(&(q, a), &v)| RawReward {
                state: model.states[q].clone(),
                action: model.actions[a].clone(),
                value: v,
            })
            .collect(),
        init: match &model.init {
            BeliefSet::Point(b) => RawInit {
                point: Some(
                    b.values()
                        .iter()
                        .enumerate()
                        .filter(|(_, &v)| v != 0.0)
                        .map(|(q, &v)| (model.states[q].clone(), v))
                        .collect(),
                ),
                constraints: None,
            },
            BeliefSet::SemiAlgebraic(ps) => RawInit {
                point: None,
                constraints: Some(ps.iter().map(poly_to_terms).collect()),
            },
        },
    };
    serde_json::to_string_pretty(&raw).expect("model serialization cannot fail")
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScheduleStep {
    action: String,
    /// Next-step action per previous observation; the default is `action`.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    branches: BTreeMap<String, String>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRegionRule {
    action: String,
    /// Belief polynomials; the rule applies where all are `<= 0`.
    leq0: Vec<Vec<RawTerm>>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum RawPolicy {
    Arbitrary,
    Schedule(Vec<RawScheduleStep>),
    Regions(Vec<RawRegionRule>),
}

/// Parses a policy from JSON: the string `"arbitrary"`, a
/// `{"schedule": [...]}` of named actions with optional per-observation
/// branches, or `{"regions": [...]}` of guarded rules over `b1..bn`.
pub fn parse_policy(text: &str, model: &UncertainPomdp) -> Result<Policy, ParseError> {
    let raw: RawPolicy = serde_json::from_str(text).map_err(|e| ParseError::Syntax {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    let action = |name: &str, loc: String| -> Result<ActionId, ParseError> {
        model
            .action_index(name)
            .ok_or_else(|| invalid(loc, format!("unknown action `{name}`")))
    };
    match raw {
        RawPolicy::Arbitrary => Ok(Policy::Arbitrary),
        RawPolicy::Schedule(steps) => {
            let mut out = Vec::with_capacity(steps.len());
            for (i, s) in steps.iter().enumerate() {
                let mut branches = BTreeMap::new();
                for (obs, act) in &s.branches {
                    let z = model.obs_index(obs).ok_or_else(|| {
                        invalid(
                            format!("schedule[{i}].branches"),
                            format!("unknown observation `{obs}`"),
                        )
                    })?;
                    branches.insert(z, action(act, format!("schedule[{i}].branches.{obs}"))?);
                }
                out.push(ScheduleStep {
                    action: action(&s.action, format!("schedule[{i}].action"))?,
                    branches,
                });
            }
            Ok(Policy::TimeSchedule(out))
        }
        RawPolicy::Regions(rules) => {
            let bvars = belief_vars(model.n_states());
            let mut out = Vec::with_capacity(rules.len());
            for (i, r) in rules.iter().enumerate() {
                let mut leq0 = Vec::with_capacity(r.leq0.len());
                for (j, terms) in r.leq0.iter().enumerate() {
                    leq0.push(poly_from_terms(
                        terms,
                        &bvars,
                        &format!("regions[{i}].leq0[{j}]"),
                    )?);
                }
                out.push(RegionRule {
                    leq0,
                    action: action(&r.action, format!("regions[{i}].action"))?,
                });
            }
            Ok(Policy::BeliefRegions(out))
        }
    }
}

/// Serializes a policy to pretty JSON in the [`parse_policy`] format.
pub fn serialize_policy(policy: &Policy, model: &UncertainPomdp) -> String {
    let raw = match policy {
        Policy::Arbitrary => RawPolicy::Arbitrary,
        Policy::TimeSchedule(steps) => RawPolicy::Schedule(
            steps
                .iter()
                .map(|s| RawScheduleStep {
                    action: model.actions[s.action].clone(),
                    branches: s
                        .branches
                        .iter()
                        .map(|(&z, &a)| {
                            (model.observations[z].clone(), model.actions[a].clone())
                        })
                        .collect(),
                })
                .collect(),
        ),
        Policy::BeliefRegions(rules) => RawPolicy::Regions(
            rules
                .iter()
                .map(|r| RawRegionRule {
                    action: model.actions[r.action].clone(),
                    leq0: r.leq0.iter().map(poly_to_terms).collect(),
                })
                .collect(),
        ),
    };
    serde_json::to_string_pretty(&raw).expect("policy serialization cannot fail")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_state() -> UncertainPomdp {
        let mut m = UncertainPomdp::new(
            vec!["q1".into(), "q2".into()],
            vec!["a".into()],
            vec!["z1".into(), "z2".into()],
        );
        m.set_transition(0, 0, 0, ProbEntry::Point(0.8));
        m.set_transition(0, 0, 1, ProbEntry::Point(0.2));
        m.set_transition(1, 0, 0, ProbEntry::Point(0.3));
        m.set_transition(1, 0, 1, ProbEntry::Point(0.7));
        m.set_observation(0, 0, 0, ProbEntry::Point(0.9));
        m.set_observation(0, 0, 1, ProbEntry::Point(0.1));
        m.set_observation(1, 0, 0, ProbEntry::Point(0.2));
        m.set_observation(1, 0, 1, ProbEntry::Point(0.8));
        m.set_init(BeliefSet::Point(Belief::new(vec![0.5, 0.5]).unwrap()));
        m
    }

    #[test]
    fn belief_update_matches_hand_computation() {
        // predicted = (0.55, 0.45); weighted by O(., a, z1) = (0.495, 0.09);
        // denominator 0.585.
        let m = two_state();
        let b = Belief::new(vec![0.5, 0.5]).unwrap();
        let out = belief_update(&m, &b, 0, 0, &ThetaAssignment::new()).unwrap();
        assert!((out.values()[0] - 0.495 / 0.585).abs() < 1e-15);
        assert!((out.values()[1] - 0.09 / 0.585).abs() < 1e-15);
        let sum: f64 = out.values().iter().sum();
        assert!((sum - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn impossible_observation_is_reported() {
        let mut m = two_state();
        // make z2 impossible from everywhere
        m.set_observation(0, 0, 1, ProbEntry::Point(0.0));
        m.set_observation(1, 0, 1, ProbEntry::Point(0.0));
        let b = Belief::new(vec![0.5, 0.5]).unwrap();
        let err = belief_update(&m, &b, 0, 1, &ThetaAssignment::new()).unwrap_err();
        assert!(matches!(err, ModelError::ImpossibleObservation));
    }

    #[test]
    fn interval_entries_require_theta_within_bounds() {
        let mut m = two_state();
        m.set_transition(0, 0, 0, ProbEntry::Interval(0.7, 0.9));
        m.set_transition(0, 0, 1, ProbEntry::Interval(0.1, 0.3));
        let b = Belief::new(vec![1.0, 0.0]).unwrap();
        let err = belief_update(&m, &b, 0, 0, &ThetaAssignment::new()).unwrap_err();
        assert!(matches!(err, ModelError::MissingTheta(_)));

        let mut theta = ThetaAssignment::new();
        theta.insert(ThetaKey::Trans { from: 0, action: 0, to: 0 }, 0.95);
        theta.insert(ThetaKey::Trans { from: 0, action: 0, to: 1 }, 0.1);
        let err = belief_update(&m, &b, 0, 0, &theta).unwrap_err();
        assert!(matches!(err, ModelError::ThetaOutOfInterval { .. }));

        theta.insert(ThetaKey::Trans { from: 0, action: 0, to: 0 }, 0.9);
        let out = belief_update(&m, &b, 0, 0, &theta).unwrap();
        // weighted = (0.9*0.9, 0.2*0.1), denom = 0.83
        assert!((out.values()[0] - 0.81 / 0.83).abs() < 1e-15);
    }

    #[test]
    fn expected_reward_is_belief_weighted() {
        let mut m = two_state();
        m.set_reward(0, 0, 10.0);
        m.set_reward(1, 0, -10.0);
        let b = Belief::new(vec![0.75, 0.25]).unwrap();
        assert!((expected_reward(&m, &b, 0) - 5.0).abs() < 1e-12);
    }

    #[test]
    fn validation_flags_bad_rows() {
        let mut m = two_state();
        m.set_transition(0, 0, 1, ProbEntry::Point(0.1)); // row sums to 0.9
        let v = validate_model(&m);
        assert_eq!(v.len(), 1);
        assert!(v[0].contains("transition row (q1, a)"));

        let mut m = two_state();
        m.set_observation(0, 0, 0, ProbEntry::Interval(0.95, 0.99));
        m.set_observation(0, 0, 1, ProbEntry::Interval(0.1, 0.2));
        let v = validate_model(&m);
        assert_eq!(v.len(), 1);
        assert!(v[0].contains("no stochastic completion"));
    }

    #[test]
    fn validation_accepts_interval_rows_with_completion() {
        let mut m = two_state();
        m.set_transition(0, 0, 0, ProbEntry::Interval(0.7, 0.9));
        m.set_transition(0, 0, 1, ProbEntry::Interval(0.1, 0.3));
        assert!(validate_model(&m).is_empty());
    }

    #[test]
    fn model_json_round_trips() {
        let mut m = two_state();
        m.set_transition(0, 0, 0, ProbEntry::Interval(0.7, 0.9));
        m.set_reward(0, 0, 3.5);
        let text = serialize_model(&m);
        let back = parse_model(&text).unwrap();
        assert_eq!(serialize_model(&back), text);
        assert_eq!(back.transition(0, 0, 0), ProbEntry::Interval(0.7, 0.9));
        assert_eq!(back.reward(0, 0), 3.5);
    }

    #[test]
    fn parse_reports_unknown_names_with_location() {
        let text = r#"{
            "states": ["q1"], "actions": ["a"], "observations": ["z"],
            "transitions": [{"from": "q9", "action": "a", "to": "q1", "prob": 1.0}],
            "obs_fn": [], "rewards": [], "init": {"point": {"q1": 1.0}}
        }"#;
        let err = parse_model(text).unwrap_err();
        match err {
            ParseError::Invalid { location, message } => {
                assert_eq!(location, "transitions[0].from");
                assert!(message.contains("q9"));
            }
            other => panic!("expected Invalid, got {other:?}"),
        }
    }

    #[test]
    fn parse_reports_syntax_errors_with_line() {
        let err = parse_model("{\n  \"states\": [,]\n}").unwrap_err();
        match err {
            ParseError::Syntax { line, .. } => assert_eq!(line, 2),
            other => panic!("expected Syntax, got {other:?}"),
        }
    }

    #[test]
    fn semialgebraic_init_parses_polynomials() {
        let text = r#"{
            "states": ["q1", "q2"], "actions": ["a"], "observations": ["z"],
            "transitions": [
                {"from": "q1", "action": "a", "to": "q1", "prob": 1.0},
                {"from": "q2", "action": "a", "to": "q2", "prob": 1.0}
            ],
            "obs_fn": [
                {"state": "q1", "action": "a", "obs": "z", "prob": 1.0},
                {"state": "q2", "action": "a", "obs": "z", "prob": 1.0}
            ],
            "rewards": [],
            "init": {"constraints": [[
                {"coeff": 1.0, "monomial": {"b1": 1}},
                {"coeff": -0.6}
            ]]}
        }"#;
        let m = parse_model(text).unwrap();
        match m.init() {
            BeliefSet::SemiAlgebraic(ps) => {
                assert_eq!(ps.len(), 1);
                // b1 - 0.6 <= 0
                assert_eq!(ps[0].eval(&[0.6, 0.4]), 0.0);
                assert!(ps[0].eval(&[1.0, 0.0]) > 0.0);
            }
            other => panic!("expected constraints, got {other:?}"),
        }
        assert!(validate_model(&m).is_empty());
    }

    #[test]
    fn policies_roundtrip_through_json() {
        let mut m = two_state();
        m.actions.push("b".into());
        m.set_transition(0, 1, 0, ProbEntry::Point(1.0));
        m.set_transition(1, 1, 1, ProbEntry::Point(1.0));
        m.set_observation(0, 1, 0, ProbEntry::Point(1.0));
        m.set_observation(1, 1, 0, ProbEntry::Point(1.0));

        let schedule = Policy::TimeSchedule(vec![
            ScheduleStep { action: 0, branches: BTreeMap::from([(1, 1)]) },
            ScheduleStep { action: 1, branches: BTreeMap::new() },
        ]);
        let bvars = belief_vars(2);
        let guard = &Polynomial::var(&bvars, 0) - &Polynomial::constant(&bvars, 0.5);
        let regions = Policy::BeliefRegions(vec![RegionRule { leq0: vec![guard], action: 1 }]);

        for policy in [Policy::Arbitrary, schedule, regions] {
            let text = serialize_policy(&policy, &m);
            let back = parse_policy(&text, &m).unwrap();
            assert_eq!(back, policy, "roundtrip drifted for {text}");
        }
    }

    #[test]
    fn parse_policy_rejects_unknown_action() {
        let m = two_state();
        let err = parse_policy(r#"{"schedule": [{"action": "nope"}]}"#, &m).unwrap_err();
        match err {
            ParseError::Invalid { location, message } => {
                assert_eq!(location, "schedule[0].action");
                assert!(message.contains("nope"));
            }
            other => panic!("expected Invalid, got {other:?}"),
        }
    }
}
