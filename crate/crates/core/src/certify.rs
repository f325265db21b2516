//! Barrier-certificate programs for safety and reward-bound claims.
//!
//! A certificate is a polynomial `B(t, b)` over time and belief coordinates
//! with three obligations:
//!
//! * positivity on every unsafe time slice (with margin `s1`),
//! * negativity on the initial belief set at `t = 0` (with margin `s2`),
//! * no increase along every admissible belief update, for every mode the
//!   policy can fire and every parameter value in the interval box.
//!
//! The decrease obligation composes `B` with the rational update `S/R` and
//! clears the denominator by `R^d`, which is sound because `R >= 0` on the
//! simplex for admissible parameters. Each obligation is relaxed to a DSOS
//! membership over the constraint set described by multiplier terms in the
//! classic positivstellensatz shape, so the whole search is one LP.

use std::collections::BTreeMap;
use std::sync::Arc;

use thiserror::Error;

use crate::dsos::{
    dsos_constraints, free_poly_template, gram_poly_template, monomial_basis, GramTemplate,
    LpBuilder, TemplatePoly,
};
use crate::dynamics::{build_dynamics, BeliefDynamics};
use crate::lp::{solve, LpOutcome};
use crate::model::{ActionId, BeliefSet, ModelError, ObsId, Policy, UncertainPomdp};
use crate::oracle::{check_certificate, ResidualReport};
use crate::poly::{Monomial, Polynomial, VarSet};

/// Default positivity margins on the unsafe and initial constraints.
pub const DEFAULT_MARGIN: f64 = 1e-4;
/// A reconstructed certificate must not violate any sampled obligation by
/// more than this.
pub const RESIDUAL_TOL: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum BuildError {
    #[error("claim functional uses unknown variables: {0}")]
    BadFunctional(String),
    #[error("certificate degree must be at least 1")]
    DegreeTooSmall,
    #[error("schedule covers {got} steps but the claim needs {needed}")]
    ScheduleTooShort { needed: usize, got: usize },
    #[error("per-step budget sums to {sum} over the horizon, above gamma = {gamma}")]
    RewardBudgetExceeded { sum: f64, gamma: f64 },
    #[error("an initial belief lies in the unsafe set at t = {slice_t}; the claim is vacuously false")]
    InitUnsafeOverlap { slice_t: usize },
    #[error("model error: {0}")]
    Model(#[from] ModelError),
}

#[derive(Debug, Error)]
pub enum VerifyError {
    #[error("solver failure: {0}")]
    SolverFailure(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// Claim `g(b_t*) <= lambda`; the unsafe slice is `g >= lambda`.
    UpperBound,
    /// Claim `g(b_t*) >= lambda`; the unsafe slice is `g <= lambda`.
    LowerBound,
}

/// A bound on a polynomial functional of the final belief.
#[derive(Debug, Clone)]
pub struct SafetySpec {
    /// Functional over the belief coordinates `b1..bn`.
    pub functional: Polynomial,
    pub lambda: f64,
    pub direction: Direction,
    pub horizon: usize,
}

/// A bound `gamma` on the cumulative expected reward over the horizon,
/// split into a per-step budget polynomial `gamma_tilde(t)`.
#[derive(Debug, Clone)]
pub struct OptimalitySpec {
    pub gamma: f64,
    /// Univariate in `t`; must satisfy `sum_{s=0..horizon} gamma_tilde(s) <= gamma`.
    pub gamma_tilde: Polynomial,
    pub horizon: usize,
}

impl OptimalitySpec {
    pub fn new(gamma: f64, gamma_tilde: Polynomial, horizon: usize) -> Result<OptimalitySpec, BuildError> {
        let spec = OptimalitySpec { gamma, gamma_tilde, horizon };
        let sum = spec.budget_sum();
        if sum > gamma + 1e-9 {
            return Err(BuildError::RewardBudgetExceeded { sum, gamma });
        }
        Ok(spec)
    }

    pub fn budget_sum(&self) -> f64 {
        (0..=self.horizon).map(|s| self.budget_at(s)).sum()
    }

    pub fn budget_at(&self, t: usize) -> f64 {
        let point = vec![t as f64; self.gamma_tilde.vars().len()];
        self.gamma_tilde.eval(&point)
    }
}

#[derive(Debug, Clone)]
pub struct CertifyOptions {
    pub margin_unsafe: f64,
    pub margin_init: f64,
    /// Degree of the positivstellensatz multipliers; defaults to the
    /// certificate degree rounded up to even. Products that would push a
    /// constraint past its natural degree are capped.
    pub multiplier_degree: Option<usize>,
    /// Treat time as one real variable in `[0, horizon]` instead of
    /// instantiating the decrease obligation at each integer step.
    pub symbolic_time: bool,
    /// Sample count for the post-solve residual validation.
    pub residual_samples: usize,
    pub residual_seed: u64,
}

impl Default for CertifyOptions {
    fn default() -> CertifyOptions {
        CertifyOptions {
            margin_unsafe: DEFAULT_MARGIN,
            margin_init: DEFAULT_MARGIN,
            multiplier_degree: None,
            symbolic_time: false,
            residual_samples: 20_000,
            residual_seed: 0x5eed_cafe,
        }
    }
}

/// One multiplier created during assembly, kept for reconstruction.
#[derive(Debug)]
pub enum MultiplierSlot {
    Gram(GramTemplate),
    Free { label: String, basis: Vec<Monomial>, ids: Vec<usize>, vars: Arc<VarSet> },
    /// A nonnegative scalar weight on a fixed product of set constraints.
    Scalar { label: String, poly: Polynomial, id: usize },
}

impl MultiplierSlot {
    pub fn label(&self) -> &str {
        match self {
            MultiplierSlot::Gram(g) => &g.label,
            MultiplierSlot::Free { label, .. } => label,
            MultiplierSlot::Scalar { label, .. } => label,
        }
    }

    pub fn reconstruct(&self, x: &[f64]) -> Polynomial {
        match self {
            MultiplierSlot::Gram(g) => g.reconstruct(x),
            MultiplierSlot::Free { basis, ids, vars, .. } => Polynomial::from_terms(
                vars,
                basis.iter().cloned().zip(ids.iter().map(|&i| x[i])),
            ),
            MultiplierSlot::Scalar { poly, id, .. } => poly.scale(x[*id]),
        }
    }
}

/// Whether a set constraint contributes a nonnegative (DSOS-multiplied) or
/// equality (freely-multiplied) term.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConstraintKind {
    Nonneg,
    Zero,
}

/// A constraint `poly >= 0` or `poly == 0` describing the set over which an
/// obligation must hold.
#[derive(Debug, Clone)]
pub struct SetConstraint {
    pub poly: Polynomial,
    pub kind: ConstraintKind,
}

/// Builds the multiplier terms of one positivstellensatz obligation: a DSOS
/// multiplier for each nonnegative constraint and a free multiplier for each
/// equality, each already multiplied by its constraint polynomial. Callers
/// subtract the returned products from the obligation target. When `room`
/// is given, each multiplier degree is capped so its product stays within
/// that total degree; Gram multipliers round down to even.
pub fn putinar_terms(
    builder: &mut LpBuilder,
    vars: &Arc<VarSet>,
    support: &[usize],
    constraints: &[SetConstraint],
    degree: usize,
    room: Option<usize>,
    label: &str,
) -> (Vec<MultiplierSlot>, Vec<TemplatePoly>) {
    let mut slots = Vec::new();
    let mut products = Vec::new();
    for (i, c) in constraints.iter().enumerate() {
        let sub_label = format!("{label}.m{i}");
        let cap = room.map_or(usize::MAX, |r| r.saturating_sub(c.poly.degree()));
        let deg = degree.min(cap);
        match c.kind {
            ConstraintKind::Nonneg => {
                let basis = monomial_basis(vars, support, deg / 2);
                let (gram, poly) = gram_poly_template(builder, vars, basis, &sub_label);
                products.push(poly.mul_poly(&c.poly));
                slots.push(MultiplierSlot::Gram(gram));
            }
            ConstraintKind::Zero => {
                let basis = monomial_basis(vars, support, deg);
                let (ids, poly) = free_poly_template(builder, vars, &basis, &sub_label);
                products.push(poly.mul_poly(&c.poly));
                slots.push(MultiplierSlot::Free {
                    label: sub_label,
                    basis,
                    ids,
                    vars: Arc::clone(vars),
                });
            }
        }
    }
    (slots, products)
}

/// The unsafe region of one time slice: every polynomial nonnegative.
#[derive(Debug, Clone)]
pub struct SliceCheck {
    pub t: usize,
    pub ineqs: Vec<Polynomial>,
}

/// One admissible mode of one step, used by the decrease obligation.
#[derive(Debug, Clone)]
pub struct StepMode {
    pub action: ActionId,
    pub obs: ObsId,
    /// Belief-region guards in `>= 0` form; empty when unrestricted.
    pub guards: Vec<Polynomial>,
}

/// Everything the numeric residual check needs to re-test a certificate
/// against the original claim, independent of the LP encoding.
#[derive(Debug)]
pub struct CheckContext {
    pub horizon: usize,
    pub margin_unsafe: f64,
    pub margin_init: f64,
    pub init: BeliefSet,
    pub unsafe_slices: Vec<SliceCheck>,
    /// `steps[k]` lists the modes that can fire between `t = k` and `k + 1`.
    pub steps: Vec<Vec<StepMode>>,
}

#[derive(Debug, Clone)]
pub struct ProgramStats {
    pub lp_vars: usize,
    pub lp_rows: usize,
    pub dsos_blocks: usize,
    pub degree: usize,
    pub decrease_constraints: usize,
    pub slice_constraints: usize,
}

/// An assembled LP whose feasibility implies the claim.
pub struct CertificateProgram {
    pub dynamics: BeliefDynamics,
    pub(crate) builder: LpBuilder,
    barrier_basis: Vec<Monomial>,
    barrier_ids: Vec<usize>,
    multipliers: Vec<MultiplierSlot>,
    pub check: CheckContext,
    pub stats: ProgramStats,
    pub options: CertifyOptions,
}

impl CertificateProgram {
    pub fn vars(&self) -> &Arc<VarSet> {
        self.dynamics.vars()
    }

    pub fn lp(&self) -> &crate::lp::LinearProgram {
        &self.builder.lp
    }

    /// Instantiates the barrier polynomial from an LP point.
    pub fn barrier_at(&self, x: &[f64]) -> Polynomial {
        Polynomial::from_terms(
            self.vars(),
            self.barrier_basis
                .iter()
                .cloned()
                .zip(self.barrier_ids.iter().map(|&i| x[i])),
        )
    }
}

#[derive(Debug, Clone)]
pub struct LpStats {
    pub n_vars: usize,
    pub n_rows: usize,
    pub objective: f64,
}

/// A verified barrier certificate.
#[derive(Debug, Clone)]
pub struct Certificate {
    /// Polynomial in `t` and `b1..bn` over the program variable table.
    pub barrier: Polynomial,
    pub multipliers: Vec<(String, Polynomial)>,
    pub margins: (f64, f64),
    pub degree: usize,
    pub lp_stats: LpStats,
    pub residual: ResidualReport,
}

#[derive(Debug)]
pub enum VerifyOutcome {
    Certified(Box<Certificate>),
    /// The relaxation is infeasible at this degree; the claim is undecided.
    Infeasible { reason: String },
}

fn even_ceil(d: usize) -> usize {
    d.div_ceil(2) * 2
}

/// Expected one-step reward of `action` as a linear polynomial over the
/// program variable table.
pub fn reward_poly(model: &UncertainPomdp, dynamics: &BeliefDynamics, action: ActionId) -> Polynomial {
    let vars = dynamics.vars();
    let mut p = Polynomial::zero(vars);
    for q in 0..model.n_states() {
        let r = model.reward(q, action);
        if r != 0.0 {
            p = &p + &Polynomial::var(vars, q).scale(r);
        }
    }
    p
}

struct Assembler {
    dynamics: BeliefDynamics,
    builder: LpBuilder,
    barrier_basis: Vec<Monomial>,
    barrier_ids: Vec<usize>,
    multipliers: Vec<MultiplierSlot>,
    degree: usize,
    mult_degree: usize,
    opts: CertifyOptions,
    dsos_blocks: usize,
    horizon_hint: f64,
}

impl Assembler {
    fn new(
        model: &UncertainPomdp,
        degree: usize,
        horizon: usize,
        opts: CertifyOptions,
    ) -> Result<Assembler, BuildError> {
        if degree == 0 {
            return Err(BuildError::DegreeTooSmall);
        }
        let dynamics = build_dynamics(model);
        let mut builder = LpBuilder::new();
        // time degree is decoupled from belief degree: t only ever takes
        // the integer values 0..=horizon, so powers up to the horizon make
        // the time profile fully general without inflating the composed
        // update (whose cost scales with the belief degree alone)
        let t_var = dynamics.t_var();
        let b_basis = monomial_basis(dynamics.vars(), &dynamics.belief_var_ids(), degree);
        let mut barrier_basis = Vec::with_capacity(b_basis.len() * (horizon + 1));
        for m in &b_basis {
            for k in 0..=horizon as u16 {
                let mut exps = m.exps().to_vec();
                exps[t_var] = k;
                barrier_basis.push(Monomial::from_exps(exps));
            }
        }
        barrier_basis.sort();
        let barrier_ids: Vec<usize> = barrier_basis
            .iter()
            .enumerate()
            .map(|(i, _)| builder.add_free_var(format!("B.c[{i}]")))
            .collect();
        let mult_degree = opts.multiplier_degree.unwrap_or(even_ceil(degree));
        Ok(Assembler {
            dynamics,
            builder,
            barrier_basis,
            barrier_ids,
            multipliers: Vec::new(),
            degree,
            mult_degree,
            opts,
            dsos_blocks: 0,
            horizon_hint: horizon as f64,
        })
    }

    fn vars(&self) -> Arc<VarSet> {
        Arc::clone(self.dynamics.vars())
    }

    /// `B` with `t` fixed to a number, as a template over `b`.
    fn barrier_at_time(&self, t_val: f64) -> TemplatePoly {
        let vars = self.vars();
        let t_var = self.dynamics.t_var();
        let mut out = TemplatePoly::zero(&vars);
        for (m, &id) in self.barrier_basis.iter().zip(&self.barrier_ids) {
            let k = m.exp(t_var);
            let mut exps = m.exps().to_vec();
            exps[t_var] = 0;
            let mono = Polynomial::from_terms(&vars, [(Monomial::from_exps(exps), 1.0)]);
            out.add_var_times_poly(id, &mono, t_val.powi(k as i32));
        }
        out
    }

    fn simplex_constraints(&self) -> Vec<SetConstraint> {
        let vars = self.vars();
        let mut sum = Polynomial::constant(&vars, -1.0);
        let mut out = Vec::new();
        for q in 0..self.dynamics.n_states() {
            let bq = Polynomial::var(&vars, q);
            sum = &sum + &bq;
            out.push(SetConstraint { poly: bq, kind: ConstraintKind::Nonneg });
        }
        out.push(SetConstraint { poly: sum, kind: ConstraintKind::Zero });
        out
    }

    fn apply_putinar(
        &mut self,
        target: &mut TemplatePoly,
        support: &[usize],
        constraints: &[SetConstraint],
        degree: usize,
        room: Option<usize>,
        label: &str,
    ) {
        let vars = self.vars();
        let (slots, products) =
            putinar_terms(&mut self.builder, &vars, support, constraints, degree, room, label);
        for p in &products {
            target.add_assign(p, -1.0);
        }
        self.multipliers.extend(slots);
    }

    /// Subtracts a layer of nonnegatively-weighted products of the affine
    /// set constraints (Handelman style, products up to `max_total` degree).
    /// Pure DSOS plus single-constraint multipliers cannot express the
    /// cross terms these products carry, and positivity certificates over
    /// the belief/parameter polytope routinely need them. Products are
    /// pruned to the target's per-variable degree box so the final Gram
    /// basis never grows.
    fn add_handelman(
        &mut self,
        target: &mut TemplatePoly,
        gens: &[Polynomial],
        max_total: usize,
        label: &str,
    ) {
        // keeps low-degree products when the combinatorics explode
        const MAX_PRODUCTS: usize = 4_000;
        let caps = target.max_degree_per_var();
        let fits = |p: &Polynomial| -> bool {
            if p.degree() > max_total {
                return false;
            }
            p.max_degree_per_var()
                .iter()
                .zip(&caps)
                .all(|(d, c)| d <= c)
        };
        let mut layer: Vec<(usize, Polynomial)> = gens
            .iter()
            .enumerate()
            .filter(|(_, g)| fits(g))
            .map(|(i, g)| (i, g.clone()))
            .collect();
        let mut count = 0usize;
        while !layer.is_empty() && count < MAX_PRODUCTS {
            let mut next = Vec::new();
            for (start, p) in &layer {
                if count >= MAX_PRODUCTS {
                    break;
                }
                let id = self
                    .builder
                    .add_var(format!("{label}.hm[{count}]"), 0.0, f64::INFINITY);
                target.add_var_times_poly(id, p, -1.0);
                self.multipliers.push(MultiplierSlot::Scalar {
                    label: format!("{label}.hm[{count}]"),
                    poly: p.clone(),
                    id,
                });
                count += 1;
                for (j, g) in gens.iter().enumerate().skip(*start) {
                    let prod = p * g;
                    if fits(&prod) {
                        next.push((j, prod));
                    }
                }
            }
            layer = next;
        }
    }

    fn finish_obligation(&mut self, target: &TemplatePoly, cap: Option<usize>, label: &str) {
        let mut total = even_ceil(target.degree());
        if let Some(c) = cap {
            // high-degree residual monomials stay matchable through the
            // multiplier families; the remainder block stays small
            total = total.min(even_ceil(c));
        }
        let gram = dsos_constraints(&mut self.builder, target, total, label)
            .expect("even degree by construction");
        self.dsos_blocks += 1;
        self.multipliers.push(MultiplierSlot::Gram(gram));
    }

    /// Positivity of `B(t_val, .)` on `{ineqs >= 0}` within the simplex.
    fn add_slice_constraint(&mut self, t_val: usize, ineqs: &[Polynomial], label: &str) {
        let vars = self.vars();
        let bvars = self.dynamics.belief_var_ids();
        let mut target = self.barrier_at_time(t_val as f64);
        target.add_poly(
            &Polynomial::constant(&vars, self.opts.margin_unsafe),
            -1.0,
        );
        let mut constraints: Vec<SetConstraint> = ineqs
            .iter()
            .map(|p| SetConstraint { poly: p.clone(), kind: ConstraintKind::Nonneg })
            .collect();
        constraints.extend(self.simplex_constraints());
        let degree = self.mult_degree;
        let mut gens: Vec<Polynomial> = (0..self.dynamics.n_states())
            .map(|q| Polynomial::var(&vars, q))
            .collect();
        gens.extend(ineqs.iter().cloned());
        let max_total = even_ceil(target.degree().max(2));
        self.apply_putinar(&mut target, &bvars, &constraints, degree, None, label);
        self.add_handelman(&mut target, &gens, max_total, &format!("{label}.prod"));
        self.finish_obligation(&target, None, label);
    }

    /// Negativity of `B(0, .)` on the initial set within the simplex.
    fn add_init_constraint(&mut self, init: &BeliefSet) -> Result<(), BuildError> {
        let vars = self.vars();
        let bvars = self.dynamics.belief_var_ids();
        let mut target = self.barrier_at_time(0.0);
        target.scale(-1.0); // obligation is on -B(0, .)
        target.add_poly(&Polynomial::constant(&vars, self.opts.margin_init), -1.0);

        let mut constraints = Vec::new();
        let mut gens: Vec<Polynomial> = Vec::new();
        match init {
            BeliefSet::Point(b0) => {
                // free multipliers on the point equalities are complete here:
                // any polynomial splits into its value at the point plus
                // terms vanishing there
                for (q, &v) in b0.values().iter().enumerate() {
                    let eq = &Polynomial::var(&vars, q) - &Polynomial::constant(&vars, v);
                    constraints.push(SetConstraint { poly: eq, kind: ConstraintKind::Zero });
                }
            }
            BeliefSet::SemiAlgebraic(ps) => {
                gens.extend((0..self.dynamics.n_states()).map(|q| Polynomial::var(&vars, q)));
                for p in ps {
                    let embedded = p
                        .embed(&vars)
                        .map_err(|e| BuildError::BadFunctional(e.to_string()))?;
                    gens.push(-&embedded);
                    constraints.push(SetConstraint { poly: -&embedded, kind: ConstraintKind::Nonneg });
                }
            }
        }
        constraints.extend(self.simplex_constraints());
        let degree = self.mult_degree;
        let max_total = even_ceil(target.degree().max(2));
        self.apply_putinar(&mut target, &bvars, &constraints, degree, None, "init");
        if !gens.is_empty() {
            self.add_handelman(&mut target, &gens, max_total, "init.prod");
        }
        self.finish_obligation(&target, None, "init");
        Ok(())
    }

    /// No increase of `B` across one mode firing between `t-1` and `t`.
    /// Returns false when the mode is vacuous (normalizer identically zero).
    fn add_decrease_constraint(&mut self, t_step: usize, mode: &StepMode, label: &str) -> bool {
        let vars = self.vars();
        let t_var = self.dynamics.t_var();
        let vf = self.dynamics.mode(mode.action, mode.obs).clone();
        if vf.is_vacuous() {
            return false;
        }
        let db = self
            .barrier_basis
            .iter()
            .map(|m| m.degree() - m.exp(t_var) as usize)
            .max()
            .unwrap_or(0);

        let mut r_pows = Vec::with_capacity(db + 1);
        r_pows.push(Polynomial::constant(&vars, 1.0));
        for k in 1..=db {
            r_pows.push(&r_pows[k - 1] * &vf.denom);
        }

        // target = -R^db * (B(t, S/R) - B(t-1, b)), composed termwise
        let mut target = TemplatePoly::zero(&vars);
        let symbolic = self.opts.symbolic_time;
        let t_poly = Polynomial::var(&vars, t_var);
        for (m, &id) in self.barrier_basis.iter().zip(&self.barrier_ids) {
            let k = m.exp(t_var) as usize;
            let bdeg = m.degree() - k;
            let mut composed = r_pows[db - bdeg].clone();
            let mut pre = Polynomial::constant(&vars, 1.0);
            for (q, &e) in m.exps().iter().enumerate() {
                if q < self.dynamics.n_states() && e > 0 {
                    composed = &composed * &vf.rows[q].powi(e as u32);
                    pre = &pre * &Polynomial::var(&vars, q).powi(e as u32);
                }
            }
            if symbolic {
                let t_k = t_poly.powi(k as u32);
                let t_prev_k = (&t_poly - &Polynomial::constant(&vars, 1.0)).powi(k as u32);
                target.add_var_times_poly(id, &(&composed * &t_k), -1.0);
                target.add_var_times_poly(id, &(&pre * &(&r_pows[db] * &t_prev_k)), 1.0);
            } else {
                let t_val = t_step as f64;
                target.add_var_times_poly(id, &composed, -t_val.powi(k as i32));
                target.add_var_times_poly(id, &(&pre * &r_pows[db]), (t_val - 1.0).powi(k as i32));
            }
        }

        // multiplier products must not outgrow the main obligation degree,
        // which keeps the final Gram basis from exploding
        let room = Some(even_ceil(target.degree()));
        let mult_degree = self.mult_degree;

        // interval-box terms carry the R^db factor of the cleared update;
        // parameters absent from this mode get no multiplier
        let mut support = self.dynamics.belief_var_ids();
        let mut box_constraints = Vec::new();
        let mut affine_gens: Vec<Polynomial> = (0..self.dynamics.n_states())
            .map(|q| Polynomial::var(&vars, q))
            .collect();
        let caps = target.max_degree_per_var();
        let theta_hs = self.dynamics.theta_constraints();
        for (tv, h) in self.dynamics.theta_vars().iter().zip(&theta_hs) {
            if caps[tv.var] == 0 {
                continue;
            }
            support.push(tv.var);
            box_constraints.push(SetConstraint {
                poly: &r_pows[db] * h,
                kind: ConstraintKind::Nonneg,
            });
            let th = Polynomial::var(&vars, tv.var);
            affine_gens.push(&th - &Polynomial::constant(&vars, tv.lo));
            affine_gens.push(&Polynomial::constant(&vars, tv.hi) - &th);
        }
        self.apply_putinar(&mut target, &support, &box_constraints, mult_degree, room, &format!("{label}.box"));
        // R^j-weighted blocks keep the degree-(d-1) certificates expressible
        // inside the degree-d program, which clears the obligation with one
        // more power of R; without them raising the degree can lose claims
        let mut weighted = Vec::new();
        for r_pow in r_pows.iter().take(db + 1).skip(1) {
            weighted.push(SetConstraint { poly: r_pow.clone(), kind: ConstraintKind::Nonneg });
            for q in 0..self.dynamics.n_states() {
                weighted.push(SetConstraint {
                    poly: r_pow * &Polynomial::var(&vars, q),
                    kind: ConstraintKind::Nonneg,
                });
            }
        }
        self.apply_putinar(&mut target, &support, &weighted, mult_degree, room, &format!("{label}.rpow"));
        // product degree reaches the replayed lower-degree certificates
        // (their products plus one R expansion); higher orders pad the LP
        let prod_total = (db + 4).min(room.unwrap_or(usize::MAX));
        self.add_handelman(&mut target, &affine_gens, prod_total, &format!("{label}.prod"));

        for (i, g) in mode.guards.iter().enumerate() {
            let cs = [SetConstraint { poly: g.clone(), kind: ConstraintKind::Nonneg }];
            self.apply_putinar(&mut target, &support, &cs, mult_degree, room, &format!("{label}.guard{i}"));
        }

        if symbolic {
            let horizon_poly = &(&t_poly - &Polynomial::constant(&vars, 1.0))
                * &(&Polynomial::constant(&vars, self.horizon_hint) - &t_poly);
            let mut sup_t = support.clone();
            sup_t.push(t_var);
            let cs = [SetConstraint { poly: horizon_poly, kind: ConstraintKind::Nonneg }];
            self.apply_putinar(&mut target, &sup_t, &cs, mult_degree, room, &format!("{label}.time"));
        }

        let simplex = self.simplex_constraints();
        self.apply_putinar(&mut target, &support, &simplex, mult_degree, room, &format!("{label}.simplex"));
        self.finish_obligation(&target, Some(2 * (db + 1)), label);
        true
    }

    fn into_program(
        self,
        check: CheckContext,
        slice_constraints: usize,
        decrease_constraints: usize,
    ) -> CertificateProgram {
        let stats = ProgramStats {
            lp_vars: self.builder.lp.n_vars(),
            lp_rows: self.builder.lp.n_rows(),
            dsos_blocks: self.dsos_blocks,
            degree: self.degree,
            decrease_constraints,
            slice_constraints,
        };
        CertificateProgram {
            dynamics: self.dynamics,
            builder: self.builder,
            barrier_basis: self.barrier_basis,
            barrier_ids: self.barrier_ids,
            multipliers: self.multipliers,
            check,
            stats,
            options: self.opts,
        }
    }
}

/// Samples points of the initial set for the vacuity precondition; the
/// point set is exact, semialgebraic sets are rejection-sampled.
fn init_sample_points(init: &BeliefSet, n_states: usize) -> Vec<Vec<f64>> {
    match init {
        BeliefSet::Point(b) => vec![b.values().to_vec()],
        BeliefSet::SemiAlgebraic(ps) => {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0x1217);
            let mut out = Vec::new();
            'outer: for _ in 0..10_000 {
                let mut b: Vec<f64> = (0..n_states)
                    .map(|_| -(rng.gen_range(1e-12..1.0f64)).ln())
                    .collect();
                let sum: f64 = b.iter().sum();
                b.iter_mut().for_each(|v| *v /= sum);
                for p in ps {
                    if p.eval(&b) > 1e-9 {
                        continue 'outer;
                    }
                }
                out.push(b.clone());
                if out.len() >= 64 {
                    break;
                }
            }
            out
        }
    }
}

fn slice_membership(ineqs: &[Polynomial], point_b: &[f64], nvars: usize) -> bool {
    let mut point = vec![0.0; nvars];
    point[..point_b.len()].copy_from_slice(point_b);
    ineqs.iter().all(|p| p.eval(&point) >= 0.0)
}

/// The modes a policy admits between consecutive steps over the horizon.
fn step_modes(
    dynamics: &BeliefDynamics,
    policy: &Policy,
    horizon: usize,
    n_obs: usize,
) -> Result<Vec<Vec<StepMode>>, BuildError> {
    let mut steps = Vec::with_capacity(horizon);
    for k in 0..horizon {
        let choices = dynamics.modes_for(policy, k).map_err(|e| match e {
            ModelError::ScheduleExhausted { len, .. } => {
                BuildError::ScheduleTooShort { needed: horizon, got: len }
            }
            other => BuildError::Model(other),
        })?;
        let mut modes: Vec<StepMode> = Vec::new();
        for c in choices {
            for z in 0..n_obs {
                let cand = StepMode { action: c.action, obs: z, guards: c.guards_geq0.clone() };
                // identical update maps under identical guards produce the
                // same obligation; keep one
                let vf = dynamics.mode(cand.action, cand.obs);
                let dup = modes.iter().any(|m| {
                    let w = dynamics.mode(m.action, m.obs);
                    m.guards == cand.guards && w.rows == vf.rows && w.denom == vf.denom
                });
                if !dup {
                    modes.push(cand);
                }
            }
        }
        steps.push(modes);
    }
    Ok(steps)
}

fn assemble(
    model: &UncertainPomdp,
    policy: &Policy,
    slices: Vec<SliceCheck>,
    horizon: usize,
    degree: usize,
    opts: CertifyOptions,
) -> Result<CertificateProgram, BuildError> {
    let mut asm = Assembler::new(model, degree, horizon, opts)?;
    let steps = step_modes(&asm.dynamics, policy, horizon, model.n_obs())?;

    // precondition: the claim is vacuously false if an initial belief is
    // already unsafe at t = 0
    let init_points = init_sample_points(model.init(), model.n_states());
    for s in slices.iter().filter(|s| s.t == 0) {
        for b in &init_points {
            if slice_membership(&s.ineqs, b, asm.dynamics.vars().len()) {
                return Err(BuildError::InitUnsafeOverlap { slice_t: s.t });
            }
        }
    }

    let mut slice_count = 0usize;
    for (i, s) in slices.iter().enumerate() {
        asm.add_slice_constraint(s.t, &s.ineqs, &format!("unsafe[{i}]@t{}", s.t));
        slice_count += 1;
    }
    asm.add_init_constraint(model.init())?;

    let mut decrease_count = 0usize;
    if asm.opts.symbolic_time {
        // one obligation per distinct mode over the whole horizon
        let mut seen: BTreeMap<(usize, usize), StepMode> = BTreeMap::new();
        for modes in &steps {
            for m in modes {
                seen.entry((m.action, m.obs)).or_insert_with(|| m.clone());
            }
        }
        for ((a, z), m) in &seen {
            if asm.add_decrease_constraint(1, m, &format!("step[any].mode[a{a},z{z}]")) {
                decrease_count += 1;
            }
        }
    } else {
        for (k, modes) in steps.iter().enumerate() {
            for m in modes {
                let label = format!("step[{}].mode[a{},z{}]", k + 1, m.action, m.obs);
                if asm.add_decrease_constraint(k + 1, m, &label) {
                    decrease_count += 1;
                }
            }
        }
    }

    let check = CheckContext {
        horizon,
        margin_unsafe: asm.opts.margin_unsafe,
        margin_init: asm.opts.margin_init,
        init: model.init().clone(),
        unsafe_slices: slices,
        steps,
    };
    Ok(asm.into_program(check, slice_count, decrease_count))
}

/// Builds the LP whose feasibility certifies a final-belief bound.
pub fn build_safety_program(
    model: &UncertainPomdp,
    spec: &SafetySpec,
    policy: &Policy,
    degree: usize,
    opts: CertifyOptions,
) -> Result<CertificateProgram, BuildError> {
    let dynamics = build_dynamics(model);
    let g = spec
        .functional
        .embed(dynamics.vars())
        .map_err(|e| BuildError::BadFunctional(e.to_string()))?;
    let lambda = Polynomial::constant(dynamics.vars(), spec.lambda);
    let ineq = match spec.direction {
        Direction::UpperBound => &g - &lambda,
        Direction::LowerBound => &lambda - &g,
    };
    let slices = vec![SliceCheck { t: spec.horizon, ineqs: vec![ineq] }];
    assemble(model, policy, slices, spec.horizon, degree, opts)
}

/// Builds the LP whose feasibility certifies a cumulative-reward bound: no
/// reachable belief may exceed the per-step budget at any step.
pub fn build_optimality_program(
    model: &UncertainPomdp,
    spec: &OptimalitySpec,
    policy: &Policy,
    degree: usize,
    opts: CertifyOptions,
) -> Result<CertificateProgram, BuildError> {
    let sum = spec.budget_sum();
    if sum > spec.gamma + 1e-9 {
        return Err(BuildError::RewardBudgetExceeded { sum, gamma: spec.gamma });
    }
    let dynamics = build_dynamics(model);
    let mut slices = Vec::new();
    for t in 0..=spec.horizon {
        let choices = dynamics.modes_for(policy, t).map_err(|e| match e {
            ModelError::ScheduleExhausted { len, .. } => BuildError::ScheduleTooShort {
                needed: spec.horizon + 1,
                got: len,
            },
            other => BuildError::Model(other),
        })?;
        let budget = Polynomial::constant(dynamics.vars(), spec.budget_at(t));
        for c in choices {
            let r = reward_poly(model, &dynamics, c.action);
            let mut ineqs = vec![&r - &budget];
            ineqs.extend(c.guards_geq0.iter().cloned());
            slices.push(SliceCheck { t, ineqs });
        }
    }
    assemble(model, policy, slices, spec.horizon, degree, opts)
}

/// Solves a program and reconstructs the certificate, or reports that the
/// relaxation is infeasible at this degree.
pub fn verify(
    model: &UncertainPomdp,
    program: &CertificateProgram,
) -> Result<VerifyOutcome, VerifyError> {
    verify_inner(model, program, true)
}

/// As [`verify`] but skipping the sampled residual validation; used by the
/// line search for its probe solves.
pub fn verify_lp_only(
    model: &UncertainPomdp,
    program: &CertificateProgram,
) -> Result<VerifyOutcome, VerifyError> {
    verify_inner(model, program, false)
}

fn verify_inner(
    model: &UncertainPomdp,
    program: &CertificateProgram,
    with_residual: bool,
) -> Result<VerifyOutcome, VerifyError> {
    match solve(&program.builder.lp) {
        LpOutcome::Infeasible => Ok(VerifyOutcome::Infeasible {
            reason: "the DSOS relaxation is infeasible at this degree".to_string(),
        }),
        LpOutcome::NumericalFailure(msg) => Err(VerifyError::SolverFailure(msg)),
        LpOutcome::Feasible(sol) => {
            let barrier = program.barrier_at(&sol.values);
            let multipliers: Vec<(String, Polynomial)> = program
                .multipliers
                .iter()
                .map(|m| (m.label().to_string(), m.reconstruct(&sol.values)))
                .collect();
            let residual = check_certificate(
                model,
                program,
                &barrier,
                if with_residual { program.options.residual_samples } else { 2_000 },
                program.options.residual_seed,
            )
            .map_err(|e| VerifyError::SolverFailure(e.to_string()))?;
            if residual.min_margin < -RESIDUAL_TOL {
                return Err(VerifyError::SolverFailure(format!(
                    "reconstructed certificate violates `{}` by {:e} at a sampled point",
                    residual.worst_obligation, -residual.min_margin
                )));
            }
            Ok(VerifyOutcome::Certified(Box::new(Certificate {
                barrier,
                multipliers,
                margins: (program.options.margin_unsafe, program.options.margin_init),
                degree: program.stats.degree,
                lp_stats: LpStats {
                    n_vars: program.builder.lp.n_vars(),
                    n_rows: program.builder.lp.n_rows(),
                    objective: sol.objective,
                },
                residual,
            })))
        }
    }
}

/// One probe of the bound line search.
#[derive(Debug, Clone)]
pub struct Probe {
    pub lambda: f64,
    pub certified: bool,
}

#[derive(Debug)]
pub struct LineSearchOutcome {
    /// Tightest certified bound and its certificate, if any probe succeeded.
    pub best: Option<(f64, Box<Certificate>)>,
    pub probes: Vec<Probe>,
}

/// Bisects over `lambda` for the tightest certifiable bound at one degree.
///
/// For upper bounds the search minimizes `lambda` (tightest claim above the
/// reachable set); for lower bounds it maximizes. The returned bound always
/// carries a fully validated certificate. Deterministic for fixed inputs.
pub fn line_search_bound(
    model: &UncertainPomdp,
    base: &SafetySpec,
    policy: &Policy,
    degree: usize,
    opts: &CertifyOptions,
    range: (f64, f64),
    eps: f64,
) -> Result<LineSearchOutcome, BuildError> {
    assert!(range.0 < range.1 && eps > 0.0, "bad line search range");
    let mut probes = Vec::new();
    let try_lambda = |lambda: f64, probes: &mut Vec<Probe>| -> Result<bool, BuildError> {
        let spec = SafetySpec { lambda, ..base.clone() };
        let program = build_safety_program(model, &spec, policy, degree, opts.clone())?;
        let ok = matches!(
            verify_lp_only(model, &program),
            Ok(VerifyOutcome::Certified(_))
        );
        probes.push(Probe { lambda, certified: ok });
        Ok(ok)
    };

    // establish the feasible endpoint: the weakest claim in the range
    let (mut lo, mut hi) = range;
    let upper = matches!(base.direction, Direction::UpperBound);
    let weakest = if upper { hi } else { lo };
    if !try_lambda(weakest, &mut probes)? {
        return Ok(LineSearchOutcome { best: None, probes });
    }
    let mut best_lambda = weakest;
    while hi - lo > eps {
        let mid = 0.5 * (lo + hi);
        let ok = try_lambda(mid, &mut probes)?;
        match (upper, ok) {
            (true, true) => {
                best_lambda = mid;
                hi = mid;
            }
            (true, false) => lo = mid,
            (false, true) => {
                best_lambda = mid;
                lo = mid;
            }
            (false, false) => hi = mid,
        }
    }

    // final full verification (with residual check) at the chosen bound
    let spec = SafetySpec { lambda: best_lambda, ..base.clone() };
    let program = build_safety_program(model, &spec, policy, degree, opts.clone())?;
    match verify(model, &program) {
        Ok(VerifyOutcome::Certified(cert)) => Ok(LineSearchOutcome {
            best: Some((best_lambda, cert)),
            probes,
        }),
        Ok(VerifyOutcome::Infeasible { .. }) | Err(_) => {
            Ok(LineSearchOutcome { best: None, probes })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{patrol, schedule_of, PatrolParams};

    /// Exploration aid, not a test: prints where the LP variables go.
    #[test]
    #[ignore]
    fn profile_lp_composition() {
        let model = patrol(PatrolParams::default());
        let vars = crate::model::belief_vars(3);
        let g = &Polynomial::constant(&vars, 1.0) - &Polynomial::var(&vars, 2);
        let spec = SafetySpec {
            functional: g,
            lambda: 0.05,
            direction: Direction::LowerBound,
            horizon: 5,
        };
        let policy = schedule_of(&[1, 1, 0, 0, 0]);
        for degree in [2usize, 3] {
            let program =
                build_safety_program(&model, &spec, &policy, degree, CertifyOptions::default())
                    .unwrap();
            let mut buckets: std::collections::BTreeMap<String, usize> =
                std::collections::BTreeMap::new();
            for i in 0..program.stats.lp_vars {
                let label = program.builder.label(i);
                let head = label.split(['[', '.']).next().unwrap_or("?").to_string();
                let kind = if label.contains(".prod[") {
                    format!("{head}:prod")
                } else if label.contains(".rpow") {
                    format!("{head}:rpow")
                } else if label.contains(".box") {
                    format!("{head}:box")
                } else if label.contains(".simplex") {
                    format!("{head}:simplex")
                } else if label.contains(".rest") || label.contains(".q[") || label.contains(".s[")
                {
                    format!("{head}:gram")
                } else {
                    head
                };
                *buckets.entry(kind).or_insert(0) += 1;
            }
            println!("degree {degree}: {} vars {} rows", program.stats.lp_vars, program.stats.lp_rows);
            let mut list: Vec<_> = buckets.into_iter().collect();
            list.sort_by_key(|(_, n)| std::cmp::Reverse(*n));
            for (k, n) in list.into_iter().take(14) {
                println!("  {k}: {n}");
            }
        }
    }
}
