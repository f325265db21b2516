//! Ready-made models: small instances for tests and examples, a desk-scale
//! patrol model, and a random-model generator for stress tests.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::model::{ActionId, Belief, BeliefSet, Policy, ProbEntry, ScheduleStep, UncertainPomdp};

/// Two states with a single action and a fairly sharp sensor. The nominal
/// update from the uniform belief under `z1` lands on (0.495, 0.09) / 0.585.
pub fn toy_two_state() -> UncertainPomdp {
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
    m.set_reward(0, 0, 1.0);
    m.set_init(BeliefSet::Point(Belief::new(vec![0.5, 0.5]).unwrap()));
    m
}

/// [`toy_two_state`] with the self-loop transition of `q1` and the sharp
/// observation of `q1` widened into intervals of the given total width.
pub fn toy_two_state_uncertain(width: f64) -> UncertainPomdp {
    assert!((0.0..0.4).contains(&width), "width out of range");
    let mut m = toy_two_state();
    let h = width / 2.0;
    m.set_transition(0, 0, 0, ProbEntry::Interval(0.8 - h, 0.8 + h));
    m.set_transition(0, 0, 1, ProbEntry::Interval(0.2 - h, 0.2 + h));
    m.set_observation(0, 0, 0, ProbEntry::Interval(0.9 - h, 0.9 + h));
    m.set_observation(0, 0, 1, ProbEntry::Interval(0.1 - h, 0.1 + h));
    m
}

/// Two states drifting toward `q2` under a single action, with a sensor
/// that mostly reports the truth. Used by simulation and reachability tests.
pub fn drift_chain() -> UncertainPomdp {
    let mut m = UncertainPomdp::new(
        vec!["q1".into(), "q2".into()],
        vec!["a".into()],
        vec!["z1".into(), "z2".into()],
    );
    m.set_transition(0, 0, 0, ProbEntry::Point(0.6));
    m.set_transition(0, 0, 1, ProbEntry::Point(0.4));
    m.set_transition(1, 0, 0, ProbEntry::Point(0.1));
    m.set_transition(1, 0, 1, ProbEntry::Point(0.9));
    m.set_observation(0, 0, 0, ProbEntry::Point(0.8));
    m.set_observation(0, 0, 1, ProbEntry::Point(0.2));
    m.set_observation(1, 0, 0, ProbEntry::Point(0.25));
    m.set_observation(1, 0, 1, ProbEntry::Point(0.75));
    m.set_reward(0, 0, 1.0);
    m.set_reward(1, 0, 2.0);
    m.set_init(BeliefSet::Point(Belief::new(vec![0.5, 0.5]).unwrap()));
    m
}

/// A time schedule that plays action 0 for `n` steps, with no branching.
pub fn constant_schedule(n: usize) -> Policy {
    Policy::TimeSchedule(
        (0..n)
            .map(|_| ScheduleStep { action: 0, branches: BTreeMap::new() })
            .collect(),
    )
}

/// Parameters of the patrol model. `zg_lo..zg_hi` is the interval on the
/// probability that checking an intact part still reports `zg`; `slip` is
/// the per-move probability of ending up slipped.
#[derive(Debug, Clone, Copy)]
pub struct PatrolParams {
    pub zg_lo: f64,
    pub zg_hi: f64,
    pub slip: f64,
}

impl Default for PatrolParams {
    fn default() -> PatrolParams {
        PatrolParams { zg_lo: 0.1, zg_hi: 0.2, slip: 0.05 }
    }
}

/// Desk-scale patrol model: a part is `good`, `bad`, or `slipped`. Checking
/// leaves the state alone and reads a noisy sensor whose response to a good
/// part is interval-uncertain; moving can slip the part irrecoverably and
/// reads nothing. Starting from a known-good part, the slipped mass is zero
/// while checking and grows only with moves.
pub fn patrol(p: PatrolParams) -> UncertainPomdp {
    assert!(0.0 < p.zg_lo && p.zg_lo <= p.zg_hi && p.zg_hi < 1.0, "bad zg interval");
    assert!((0.0..1.0).contains(&p.slip), "bad slip probability");
    let mut m = UncertainPomdp::new(
        vec!["good".into(), "bad".into(), "slipped".into()],
        vec!["check".into(), "move".into()],
        vec!["zg".into(), "zb".into()],
    );
    // checking is passive
    for s in 0..3 {
        m.set_transition(s, 0, s, ProbEntry::Point(1.0));
    }
    // moving can slip; a slipped part stays slipped
    m.set_transition(0, 1, 0, ProbEntry::Point(1.0 - p.slip));
    m.set_transition(0, 1, 2, ProbEntry::Point(p.slip));
    m.set_transition(1, 1, 1, ProbEntry::Point(1.0 - p.slip));
    m.set_transition(1, 1, 2, ProbEntry::Point(p.slip));
    m.set_transition(2, 1, 2, ProbEntry::Point(1.0));
    // the check sensor: the good-part response is uncertain, the bad-part
    // response is known, a slipped part reads like a coin flip
    m.set_observation(0, 0, 0, ProbEntry::Interval(p.zg_lo, p.zg_hi));
    m.set_observation(0, 0, 1, ProbEntry::Interval(1.0 - p.zg_hi, 1.0 - p.zg_lo));
    m.set_observation(1, 0, 0, ProbEntry::Point(0.8));
    m.set_observation(1, 0, 1, ProbEntry::Point(0.2));
    m.set_observation(2, 0, 0, ProbEntry::Point(0.5));
    m.set_observation(2, 0, 1, ProbEntry::Point(0.5));
    // moving reads nothing
    for s in 0..3 {
        m.set_observation(s, 1, 0, ProbEntry::Point(0.5));
        m.set_observation(s, 1, 1, ProbEntry::Point(0.5));
    }
    // staying operational earns 1 per step, a slipped part costs double
    for a in 0..2 {
        m.set_reward(0, a, 1.0);
        m.set_reward(1, a, 1.0);
        m.set_reward(2, a, 2.0);
    }
    m.set_init(BeliefSet::Point(Belief::new(vec![1.0, 0.0, 0.0]).unwrap()));
    m
}

/// An explicit action sequence with no observation branching.
pub fn schedule_of(actions: &[ActionId]) -> Policy {
    Policy::TimeSchedule(
        actions
            .iter()
            .map(|&a| ScheduleStep { action: a, branches: BTreeMap::new() })
            .collect(),
    )
}

/// The patrol duty cycle: `checks` checks followed by `moves` moves, then
/// repeating, for `len` steps total.
pub fn patrol_schedule(checks: usize, moves: usize, len: usize) -> Policy {
    assert!(checks + moves > 0, "empty duty cycle");
    Policy::TimeSchedule(
        (0..len)
            .map(|t| {
                let phase = t % (checks + moves);
                let action = if phase < checks { 0 } else { 1 };
                ScheduleStep { action, branches: BTreeMap::new() }
            })
            .collect(),
    )
}

/// Layout and sensing parameters of a rover-on-a-dune instance. The terrain
/// is a `grid` x `grid` square whose bottom row is a slippery dune; the
/// rover exits by moving right off the east column. `accuracy[d]` is the
/// probability that checking a rock from Chebyshev distance `d` reads its
/// true type (the last bucket covers all larger distances). Rewards are
/// fixed: +10 for exiting, +10 for sampling a good rock, -10 for a bad one.
#[derive(Debug, Clone)]
pub struct RockSampleConfig {
    pub grid: usize,
    pub rocks: Vec<(usize, usize)>,
    /// True rock types, `true` = good; used by the simulator's ground truth
    /// and by the sample rewards.
    pub truth: Vec<bool>,
    pub accuracy: Vec<ProbEntry>,
    pub slip: f64,
    pub init_pos: (usize, usize),
}

impl RockSampleConfig {
    /// Desk-scale instance with the wide low-information sensor interval.
    pub fn case_i() -> RockSampleConfig {
        RockSampleConfig {
            grid: 3,
            rocks: vec![(0, 2), (2, 2)],
            truth: vec![true, false],
            accuracy: vec![ProbEntry::Interval(0.1, 0.2)],
            slip: 0.05,
            init_pos: (2, 0),
        }
    }

    /// As [`case_i`](RockSampleConfig::case_i) but with the tighter sensor
    /// interval whose nominal value sits at the upper end.
    pub fn case_ii() -> RockSampleConfig {
        RockSampleConfig {
            accuracy: vec![ProbEntry::Interval(0.32, 0.42)],
            ..RockSampleConfig::case_i()
        }
    }

    fn assert_valid(&self) {
        assert!(self.grid > 0, "empty grid");
        assert_eq!(self.rocks.len(), self.truth.len(), "one truth value per rock");
        assert!(!self.rocks.is_empty(), "no rocks");
        for &(r, c) in self.rocks.iter().chain([&self.init_pos]) {
            assert!(r < self.grid && c < self.grid, "position off the grid");
        }
        assert!(!self.accuracy.is_empty(), "no accuracy buckets");
        for a in &self.accuracy {
            assert!(a.lo() > 0.0 && a.hi() < 1.0, "degenerate sensor accuracy");
        }
        assert!((0.0..1.0).contains(&self.slip), "bad slip probability");
    }

    fn n_combos(&self) -> usize {
        1 << self.rocks.len()
    }

    fn bucket(&self, from: (usize, usize), rock: usize) -> usize {
        let (r, c) = from;
        let (rr, rc) = self.rocks[rock];
        let d = r.abs_diff(rr).max(c.abs_diff(rc));
        d.min(self.accuracy.len() - 1)
    }
}

/// A generated rover instance: the model plus named state groups for
/// building functionals (`slipped`, `done`, and `rock{i}_good` atoms).
#[derive(Debug, Clone)]
pub struct RockSample {
    pub model: UncertainPomdp,
    pub groups: BTreeMap<String, Vec<usize>>,
    pub config: RockSampleConfig,
}

/// Correct/wrong observation rows from one accuracy entry. `flip` swaps the
/// two columns (a correct reading of a bad rock is `zb`).
fn sensor_rows(acc: ProbEntry, flip: bool) -> [ProbEntry; 2] {
    let complement = match acc {
        ProbEntry::Point(v) => ProbEntry::Point(1.0 - v),
        ProbEntry::Interval(lo, hi) => ProbEntry::Interval(1.0 - hi, 1.0 - lo),
    };
    if flip {
        [complement, acc]
    } else {
        [acc, complement]
    }
}

/// Builds the full rover model: one state per (cell, rock-type combination)
/// plus absorbing `slipped` and `done` states. Rock types never change on
/// their own; sampling a rock leaves it worthless (its type bit drops to
/// bad). Any move taken from a bottom-row cell risks slipping; moving right
/// off the east column exits. Checks are remote: the rover stays put and
/// reads one rock's type through the distance-bucketed sensor; every other
/// action reads a coin flip, so slipping itself is never directly observed
/// and the belief carries the accumulated risk.
pub fn rocksample(config: RockSampleConfig) -> RockSample {
    config.assert_valid();
    let n = config.grid;
    let k = config.rocks.len();
    let combos = config.n_combos();
    let n_active = n * n * combos;
    let slipped = n_active;
    let done = n_active + 1;

    let combo_name = |m: usize| -> String {
        (0..k).map(|i| if m & (1 << i) != 0 { 'g' } else { 'b' }).collect()
    };
    let mut states: Vec<String> = Vec::with_capacity(n_active + 2);
    for r in 0..n {
        for c in 0..n {
            for m in 0..combos {
                states.push(format!("r{r}c{c}_{}", combo_name(m)));
            }
        }
    }
    states.push("slipped".into());
    states.push("done".into());

    let mut actions: Vec<String> =
        ["up", "down", "left", "right", "sample"].map(String::from).to_vec();
    for i in 1..=k {
        actions.push(format!("check{i}"));
    }
    let sample = 4usize;
    let n_actions = actions.len();

    let mut model = UncertainPomdp::new(states, actions, vec!["zg".into(), "zb".into()]);
    let id = |r: usize, c: usize, m: usize| (r * n + c) * combos + m;

    for a in 0..n_actions {
        model.set_transition(slipped, a, slipped, ProbEntry::Point(1.0));
        model.set_transition(done, a, done, ProbEntry::Point(1.0));
        model.set_observation(slipped, a, 0, ProbEntry::Point(0.5));
        model.set_observation(slipped, a, 1, ProbEntry::Point(0.5));
        model.set_observation(done, a, 0, ProbEntry::Point(0.5));
        model.set_observation(done, a, 1, ProbEntry::Point(0.5));
    }

    for r in 0..n {
        for c in 0..n {
            for m in 0..combos {
                let q = id(r, c, m);
                for a in 0..4 {
                    // clamped moves; only the east exit leaves the grid
                    let target = match a {
                        0 => Some((r.saturating_sub(1), c)),
                        1 => Some(((r + 1).min(n - 1), c)),
                        2 => Some((r, c.saturating_sub(1))),
                        _ if c + 1 < n => Some((r, c + 1)),
                        _ => None,
                    };
                    let dest = match target {
                        Some((tr, tc)) => id(tr, tc, m),
                        None => done,
                    };
                    if r == n - 1 && config.slip > 0.0 {
                        model.set_transition(q, a, dest, ProbEntry::Point(1.0 - config.slip));
                        model.set_transition(q, a, slipped, ProbEntry::Point(config.slip));
                    } else {
                        model.set_transition(q, a, dest, ProbEntry::Point(1.0));
                    }
                }
                let sampled = match config.rocks.iter().position(|&p| p == (r, c)) {
                    Some(i) => id(r, c, m & !(1 << i)),
                    None => q,
                };
                model.set_transition(q, sample, sampled, ProbEntry::Point(1.0));
                for i in 0..k {
                    model.set_transition(q, sample + 1 + i, q, ProbEntry::Point(1.0));
                }

                for a in 0..n_actions {
                    let rows = match a.checked_sub(sample + 1) {
                        Some(i) => {
                            let acc = config.accuracy[config.bucket((r, c), i)];
                            sensor_rows(acc, m & (1 << i) == 0)
                        }
                        None => [ProbEntry::Point(0.5), ProbEntry::Point(0.5)],
                    };
                    model.set_observation(q, a, 0, rows[0]);
                    model.set_observation(q, a, 1, rows[1]);
                }

                if c == n - 1 {
                    model.set_reward(q, 3, 10.0);
                }
                if let Some(i) = config.rocks.iter().position(|&p| p == (r, c)) {
                    let value = if m & (1 << i) != 0 { 10.0 } else { -10.0 };
                    model.set_reward(q, sample, value);
                }
            }
        }
    }

    // the rover knows where it starts but not the rock types
    let mut init = vec![0.0; n_active + 2];
    let (ir, ic) = config.init_pos;
    for m in 0..combos {
        init[id(ir, ic, m)] = 1.0 / combos as f64;
    }
    model.set_init(BeliefSet::Point(Belief::new(init).expect("uniform over combos")));

    let mut groups: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    groups.insert("slipped".into(), vec![slipped]);
    groups.insert("done".into(), vec![done]);
    for i in 0..k {
        let members = (0..n_active).filter(|q| (q % combos) & (1 << i) != 0).collect();
        groups.insert(format!("rock{}_good", i + 1), members);
    }
    RockSample { model, groups, config }
}

/// The two scripted mission profiles. Case one checks every rock from the
/// start cell and only then drives for the exit; case two first drives off
/// the dune toward the rocks, checks from up close, then exits through the
/// safe rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RockCase {
    CheckThenMove,
    MoveThenCheck,
}

/// Scripted 46-step schedules for [`rocksample`] models (long enough for
/// any verification time up to 45). The first ten steps of the
/// check-then-move profile are all checks; the move-then-check profile
/// spends ten steps driving, ten checking, then exits.
pub fn nominal_policy(case: RockCase, config: &RockSampleConfig) -> Policy {
    config.assert_valid();
    let k = config.rocks.len();
    let check = |t: usize| 5 + t % k;
    let (mut r, mut c) = config.init_pos;
    let mut actions: Vec<ActionId> = Vec::new();
    match case {
        RockCase::CheckThenMove => {
            actions.extend((0..10).map(check));
        }
        RockCase::MoveThenCheck => {
            // drive up, off the dune and level with the highest rock
            let target = config.rocks.iter().map(|&(rr, _)| rr).min().unwrap();
            for _ in 0..10 {
                actions.push(0);
                r = r.saturating_sub(1).max(target);
            }
            actions.extend((0..10).map(check));
        }
    }
    while c < config.grid {
        actions.push(3);
        c += 1;
    }
    if actions.len() < 46 {
        actions.resize(46, 3);
    }
    schedule_of(&actions)
}

/// Compiles a scheduled run of a [`rocksample`] model down to its hidden
/// factor: the rock-type combination plus the slip flag. The rover position
/// is deterministic along a fixed schedule (slipping is absorbing and
/// tracked as its own state), so each step becomes one compiled action:
/// safe cruising, a dune traverse, a distance-bucketed probe of one rock,
/// or a harvest. Checks on this model carry one uncertain sensor entry per
/// rock-type combination; that treats each row's noise as independent,
/// which over-approximates the single shared sensor and is therefore sound
/// for certificates. The schedule must stay on the grid for `horizon`
/// steps.
pub fn marginal_for_schedule(
    config: &RockSampleConfig,
    schedule: &Policy,
    horizon: usize,
) -> (UncertainPomdp, Policy) {
    config.assert_valid();
    let Policy::TimeSchedule(steps) = schedule else {
        panic!("only time schedules can be compiled");
    };
    assert!(steps.len() >= horizon, "schedule shorter than the horizon");
    let k = config.rocks.len();
    let combos = config.n_combos();
    let slipped = combos;

    #[derive(PartialEq, Eq, PartialOrd, Ord, Clone, Copy)]
    enum Kind {
        Cruise,
        Traverse,
        Probe { rock: usize, bucket: usize },
        Harvest { rock: usize },
    }

    // walk the deterministic position trace and classify each step
    let (mut r, mut c) = config.init_pos;
    let mut kinds: Vec<Kind> = Vec::with_capacity(horizon);
    for step in steps.iter().take(horizon) {
        assert!(step.branches.is_empty(), "branching schedules are not compilable");
        let kind = match step.action {
            a @ 0..=3 => {
                let risky = r == config.grid - 1 && config.slip > 0.0;
                match a {
                    0 => r = r.saturating_sub(1),
                    1 => r = (r + 1).min(config.grid - 1),
                    2 => c = c.saturating_sub(1),
                    _ => c += 1,
                }
                assert!(c < config.grid, "schedule exits the grid before the horizon");
                if risky {
                    Kind::Traverse
                } else {
                    Kind::Cruise
                }
            }
            4 => match config.rocks.iter().position(|&p| p == (r, c)) {
                Some(rock) => Kind::Harvest { rock },
                None => Kind::Cruise,
            },
            a => {
                let rock = a - 5;
                assert!(rock < k, "unknown action {a} in the schedule");
                Kind::Probe { rock, bucket: config.bucket((r, c), rock) }
            }
        };
        kinds.push(kind);
    }

    let mut order: Vec<Kind> = kinds.clone();
    order.sort();
    order.dedup();
    let name = |k: &Kind| match k {
        Kind::Cruise => "cruise".to_string(),
        Kind::Traverse => "traverse".to_string(),
        Kind::Probe { rock, bucket } => format!("probe{}_d{bucket}", rock + 1),
        Kind::Harvest { rock } => format!("harvest{}", rock + 1),
    };

    let combo_name = |m: usize| -> String {
        (0..k).map(|i| if m & (1 << i) != 0 { 'g' } else { 'b' }).collect()
    };
    let mut states: Vec<String> = (0..combos).map(combo_name).collect();
    states.push("slipped".into());
    let mut model = UncertainPomdp::new(
        states,
        order.iter().map(&name).collect(),
        vec!["zg".into(), "zb".into()],
    );

    for (a, kind) in order.iter().enumerate() {
        model.set_transition(slipped, a, slipped, ProbEntry::Point(1.0));
        model.set_observation(slipped, a, 0, ProbEntry::Point(0.5));
        model.set_observation(slipped, a, 1, ProbEntry::Point(0.5));
        for m in 0..combos {
            match *kind {
                Kind::Cruise => model.set_transition(m, a, m, ProbEntry::Point(1.0)),
                Kind::Traverse => {
                    model.set_transition(m, a, m, ProbEntry::Point(1.0 - config.slip));
                    model.set_transition(m, a, slipped, ProbEntry::Point(config.slip));
                }
                Kind::Probe { .. } => model.set_transition(m, a, m, ProbEntry::Point(1.0)),
                Kind::Harvest { rock } => {
                    model.set_transition(m, a, m & !(1 << rock), ProbEntry::Point(1.0))
                }
            }
            let rows = match *kind {
                Kind::Probe { rock, bucket } => {
                    sensor_rows(config.accuracy[bucket], m & (1 << rock) == 0)
                }
                _ => [ProbEntry::Point(0.5), ProbEntry::Point(0.5)],
            };
            model.set_observation(m, a, 0, rows[0]);
            model.set_observation(m, a, 1, rows[1]);
        }
    }

    let mut init = vec![1.0 / combos as f64; combos];
    init.push(0.0);
    model.set_init(BeliefSet::Point(Belief::new(init).expect("uniform over combos")));

    let compiled: Vec<ActionId> = kinds
        .iter()
        .map(|kind| order.iter().position(|o| o == kind).expect("kind registered"))
        .collect();
    (model, schedule_of(&compiled))
}

fn dirichlet_row(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut row: Vec<f64> = (0..n).map(|_| -(rng.gen_range(1e-9..1.0f64)).ln()).collect();
    let sum: f64 = row.iter().sum();
    row.iter_mut().for_each(|v| *v /= sum);
    row
}

/// A random fully-specified model. Each transition and observation row is
/// drawn from the flat Dirichlet; a `interval_fraction` share of rows is
/// widened into intervals of at most `max_width` around the drawn point,
/// which keeps every row completable to a distribution. Deterministic in
/// the seed.
pub fn random_model(
    n_states: usize,
    n_actions: usize,
    n_obs: usize,
    seed: u64,
    interval_fraction: f64,
    max_width: f64,
) -> UncertainPomdp {
    assert!(n_states > 0 && n_actions > 0 && n_obs > 0, "empty model");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut m = UncertainPomdp::new(
        (1..=n_states).map(|i| format!("q{i}")).collect(),
        (1..=n_actions).map(|i| format!("a{i}")).collect(),
        (1..=n_obs).map(|i| format!("z{i}")).collect(),
    );

    let fill = |m: &mut UncertainPomdp, obs: bool, rng: &mut ChaCha8Rng| {
        let cols = if obs { n_obs } else { n_states };
        for s in 0..n_states {
            for a in 0..n_actions {
                let row = dirichlet_row(cols, rng);
                let widen = rng.gen_bool(interval_fraction);
                for (j, &p) in row.iter().enumerate() {
                    let entry = if widen {
                        let half = 0.5 * max_width * rng.gen_range(0.1..1.0);
                        let lo = (p - half).max(0.0);
                        let hi = (p + half).min(1.0);
                        ProbEntry::Interval(lo, hi)
                    } else {
                        ProbEntry::Point(p)
                    };
                    if obs {
                        m.set_observation(s, a, j, entry);
                    } else {
                        m.set_transition(s, a, j, entry);
                    }
                }
            }
        }
    };
    fill(&mut m, false, &mut rng);
    fill(&mut m, true, &mut rng);

    for s in 0..n_states {
        for a in 0..n_actions {
            m.set_reward(s, a, rng.gen_range(0.0..1.0));
        }
    }
    let init = dirichlet_row(n_states, &mut rng);
    m.set_init(BeliefSet::Point(Belief::new(init).expect("normalized row")));
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::validate_model;

    #[test]
    fn builtin_models_validate_cleanly() {
        for m in [toy_two_state(), toy_two_state_uncertain(0.1), drift_chain()] {
            assert!(validate_model(&m).is_empty(), "{:?}", validate_model(&m));
        }
        let p = patrol(PatrolParams::default());
        assert!(validate_model(&p).is_empty(), "{:?}", validate_model(&p));
    }

    #[test]
    fn random_models_validate_cleanly() {
        for seed in 0..50 {
            let m = random_model(4, 2, 3, seed, 0.5, 0.2);
            let issues = validate_model(&m);
            assert!(issues.is_empty(), "seed {seed}: {issues:?}");
        }
    }

    #[test]
    fn patrol_schedule_cycles_checks_then_moves() {
        let p = patrol_schedule(3, 2, 7);
        let expect = [0, 0, 0, 1, 1, 0, 0];
        if let Policy::TimeSchedule(steps) = &p {
            let got: Vec<usize> = steps.iter().map(|s| s.action).collect();
            assert_eq!(got, expect);
        } else {
            panic!("wrong policy shape");
        }
    }

    #[test]
    fn uncertain_toy_keeps_interval_bounds_ordered() {
        let m = toy_two_state_uncertain(0.2);
        let params = m.uncertain_params();
        assert_eq!(params.len(), 4);
        for (_, lo, hi) in params {
            assert!(lo < hi && lo >= 0.0 && hi <= 1.0);
        }
    }

    #[test]
    fn rocksample_models_validate_cleanly() {
        for cfg in [RockSampleConfig::case_i(), RockSampleConfig::case_ii()] {
            let rs = rocksample(cfg);
            let issues = validate_model(&rs.model);
            assert!(issues.is_empty(), "{issues:?}");
        }

        let cfg = RockSampleConfig {
            grid: 4,
            rocks: vec![(0, 3), (3, 1)],
            truth: vec![true, true],
            ..RockSampleConfig::case_i()
        };
        let rs = rocksample(cfg);
        assert_eq!(rs.model.n_states(), 16 * 4 + 2);
        assert_eq!(rs.model.n_actions(), 7);
        assert!(validate_model(&rs.model).is_empty());
        assert_eq!(rs.groups["rock1_good"].len(), 32);
        assert_eq!(rs.groups["slipped"].len(), 1);
    }

    #[test]
    fn slipping_absorbs_all_mass() {
        let rs = rocksample(RockSampleConfig::case_i());
        let slipped = rs.groups["slipped"][0];
        let mut m = rs.model;
        m.set_init(BeliefSet::Point(Belief::point(m.n_states(), slipped)));
        let report = crate::oracle::simulate(
            &m,
            &schedule_of(&[3, 0, 4, 5, 1]),
            &[crate::poly::Polynomial::var(
                &crate::model::belief_vars(m.n_states()),
                slipped,
            )],
            &crate::oracle::SimOptions {
                trajectories: 16,
                horizon: 5,
                seed: 11,
                theta: crate::oracle::ThetaStrategy::UniformPerStep,
            },
        )
        .unwrap();
        assert_eq!(report.finals[0].min, 1.0);
        assert_eq!(report.finals[0].max, 1.0);
    }

    #[test]
    fn nominal_policies_have_the_scripted_phases() {
        let cfg = RockSampleConfig::case_i();
        let Policy::TimeSchedule(steps) = nominal_policy(RockCase::CheckThenMove, &cfg) else {
            panic!("wrong policy shape");
        };
        assert_eq!(steps.len(), 46);
        assert!(steps[..10].iter().all(|s| s.action >= 5), "first ten steps must check");
        assert!(steps[10..].iter().all(|s| s.action == 3), "then drive east");

        let Policy::TimeSchedule(steps) = nominal_policy(RockCase::MoveThenCheck, &cfg) else {
            panic!("wrong policy shape");
        };
        assert_eq!(steps.len(), 46);
        assert!(steps[..10].iter().all(|s| s.action == 0), "first ten steps must drive");
        assert!(steps[10..20].iter().all(|s| s.action >= 5), "then check");
    }

    #[test]
    fn marginal_compilation_tracks_position_and_risk() {
        let cfg = RockSampleConfig::case_i();
        let schedule = nominal_policy(RockCase::CheckThenMove, &cfg);
        let (m, compiled) = marginal_for_schedule(&cfg, &schedule, 12);
        assert!(validate_model(&m).is_empty(), "{:?}", validate_model(&m));
        // four rock-type combinations plus the slip flag
        assert_eq!(m.n_states(), 5);
        // checks happen at distance 2, the two drives are both on the dune
        assert!(m.actions().contains(&"probe1_d0".to_string()));
        assert!(m.actions().contains(&"traverse".to_string()));
        assert!(!m.actions().iter().any(|a| a == "cruise"));
        let Policy::TimeSchedule(steps) = compiled else {
            panic!("wrong policy shape");
        };
        assert_eq!(steps.len(), 12);

        // the exit move would leave the grid one step later
        let result = std::panic::catch_unwind(|| marginal_for_schedule(&cfg, &schedule, 13));
        assert!(result.is_err());
    }
}
