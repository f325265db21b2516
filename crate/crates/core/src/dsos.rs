//! Diagonally dominant sum-of-squares (DSOS) relaxations as linear rows.
//!
//! A polynomial `p` is accepted when it can be written `m^T Q m` for a basis
//! `m` of monomials and a symmetric diagonally dominant `Q` with nonnegative
//! diagonal. Such `Q` are positive semidefinite, so acceptance proves `p`
//! is globally nonnegative. Diagonal dominance is linear in the entries of
//! `Q` once absolute values are split into slack variables, so membership
//! is one LP feasibility question.
//!
//! Bases are pruned to the box Newton rule: a basis monomial is kept only
//! if its square stays within the per-variable and total degree box of the
//! target. This never affects soundness and keeps Gram blocks small.

use std::collections::BTreeMap;
use std::sync::Arc;

use thiserror::Error;

use crate::lp::{LinearProgram, Rel};
use crate::poly::{Monomial, Polynomial, VarSet, COEFF_EPS};

#[derive(Debug, Error, PartialEq)]
pub enum DsosError {
    #[error("DSOS certificates require an even degree, got {0}")]
    OddDegree(usize),
    #[error("membership LP failed numerically: {0}")]
    Numerical(String),
}

/// A [`LinearProgram`] under construction together with variable labels.
#[derive(Debug, Default)]
pub struct LpBuilder {
    pub lp: LinearProgram,
    labels: Vec<String>,
}

impl LpBuilder {
    pub fn new() -> LpBuilder {
        LpBuilder::default()
    }

    pub fn add_var(&mut self, label: String, lo: f64, hi: f64) -> usize {
        let id = self.lp.add_var(lo, hi);
        self.labels.push(label);
        id
    }

    pub fn add_free_var(&mut self, label: String) -> usize {
        self.add_var(label, f64::NEG_INFINITY, f64::INFINITY)
    }

    pub fn label(&self, var: usize) -> &str {
        &self.labels[var]
    }
}

/// An expression `constant + sum coeff * x_i` over LP decision variables.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LinExpr {
    pub constant: f64,
    pub terms: BTreeMap<usize, f64>,
}

impl LinExpr {
    pub fn constant(c: f64) -> LinExpr {
        LinExpr { constant: c, terms: BTreeMap::new() }
    }

    pub fn var(id: usize) -> LinExpr {
        LinExpr { constant: 0.0, terms: BTreeMap::from([(id, 1.0)]) }
    }

    pub fn add_var(&mut self, id: usize, coeff: f64) {
        let c = self.terms.entry(id).or_insert(0.0);
        *c += coeff;
        if c.abs() <= COEFF_EPS {
            self.terms.remove(&id);
        }
    }

    pub fn add_scaled(&mut self, other: &LinExpr, k: f64) {
        self.constant += other.constant * k;
        for (&id, &c) in &other.terms {
            self.add_var(id, c * k);
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.constant + self.terms.iter().map(|(&id, &c)| c * x[id]).sum::<f64>()
    }

    pub fn is_structural_zero(&self) -> bool {
        self.constant == 0.0 && self.terms.is_empty()
    }
}

/// A polynomial whose coefficients are affine in LP decision variables.
#[derive(Debug, Clone)]
pub struct TemplatePoly {
    vars: Arc<VarSet>,
    terms: BTreeMap<Monomial, LinExpr>,
}

impl TemplatePoly {
    pub fn zero(vars: &Arc<VarSet>) -> TemplatePoly {
        TemplatePoly { vars: Arc::clone(vars), terms: BTreeMap::new() }
    }

    pub fn from_poly(p: &Polynomial) -> TemplatePoly {
        let mut out = TemplatePoly::zero(p.vars());
        out.add_poly(p, 1.0);
        out
    }

    pub fn vars(&self) -> &Arc<VarSet> {
        &self.vars
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Monomial, &LinExpr)> {
        self.terms.iter()
    }

    fn entry(&mut self, m: Monomial) -> &mut LinExpr {
        self.terms.entry(m).or_default()
    }

    /// Adds `k * p` to the template.
    pub fn add_poly(&mut self, p: &Polynomial, k: f64) {
        assert_eq!(p.vars(), &self.vars, "variable table mismatch");
        for (m, c) in p.terms() {
            self.entry(m.clone()).constant += c * k;
        }
    }

    /// Adds `k * x_var * p`, a numeric polynomial scaled by one LP variable.
    pub fn add_var_times_poly(&mut self, var: usize, p: &Polynomial, k: f64) {
        assert_eq!(p.vars(), &self.vars, "variable table mismatch");
        for (m, c) in p.terms() {
            self.entry(m.clone()).add_var(var, c * k);
        }
    }

    pub fn scale(&mut self, k: f64) {
        for l in self.terms.values_mut() {
            l.constant *= k;
            for c in l.terms.values_mut() {
                *c *= k;
            }
        }
    }

    /// Adds `k * other` termwise.
    pub fn add_assign(&mut self, other: &TemplatePoly, k: f64) {
        assert!(Arc::ptr_eq(&self.vars, &other.vars) || self.vars == other.vars);
        for (m, l) in &other.terms {
            self.entry(m.clone()).add_scaled(l, k);
        }
    }

    /// The product `self * p` with a numeric polynomial.
    pub fn mul_poly(&self, p: &Polynomial) -> TemplatePoly {
        assert_eq!(p.vars(), &self.vars, "variable table mismatch");
        let mut out = TemplatePoly::zero(&self.vars);
        for (mt, l) in &self.terms {
            for (mp, c) in p.terms() {
                out.entry(mt.mul(mp)).add_scaled(l, c);
            }
        }
        out
    }

    /// Max total degree over monomials present in the template.
    pub fn degree(&self) -> usize {
        self.terms.keys().map(Monomial::degree).max().unwrap_or(0)
    }

    pub fn max_degree_per_var(&self) -> Vec<u16> {
        let mut caps = vec![0u16; self.vars.len()];
        for m in self.terms.keys() {
            for (i, &e) in m.exps().iter().enumerate() {
                caps[i] = caps[i].max(e);
            }
        }
        caps
    }

    /// Instantiates the template at an LP solution.
    pub fn eval_coeffs(&self, x: &[f64]) -> Polynomial {
        Polynomial::from_terms(
            &self.vars,
            self.terms.iter().map(|(m, l)| (m.clone(), l.eval(x))),
        )
    }
}

/// All monomials over `selected` variables with total degree at most
/// `degree`, in graded-lex order. Size is C(n + d, d).
pub fn monomial_basis(vars: &Arc<VarSet>, selected: &[usize], degree: usize) -> Vec<Monomial> {
    let caps = vec![u16::MAX; vars.len()];
    monomial_basis_boxed(vars, selected, degree, &caps)
}

/// As [`monomial_basis`], additionally respecting a per-variable exponent
/// cap (indexed by table position).
pub fn monomial_basis_boxed(
    vars: &Arc<VarSet>,
    selected: &[usize],
    degree: usize,
    caps: &[u16],
) -> Vec<Monomial> {
    let mut out = Vec::new();
    let mut exps = vec![0u16; vars.len()];
    fn recurse(
        selected: &[usize],
        pos: usize,
        remaining: usize,
        caps: &[u16],
        exps: &mut Vec<u16>,
        out: &mut Vec<Monomial>,
    ) {
        if pos == selected.len() {
            out.push(Monomial::from_exps(exps.clone()));
            return;
        }
        let v = selected[pos];
        let top = (caps[v] as usize).min(remaining);
        for e in 0..=top {
            exps[v] = e as u16;
            recurse(selected, pos + 1, remaining - e, caps, exps, out);
        }
        exps[v] = 0;
    }
    recurse(selected, 0, degree, caps, &mut exps, &mut out);
    out.sort();
    out
}

/// The LP-variable layout of one Gram block: basis monomials, the upper
/// triangle of `Q`, and the absolute-value slacks for the off-diagonal.
#[derive(Debug, Clone)]
pub struct GramTemplate {
    vars: Arc<VarSet>,
    pub basis: Vec<Monomial>,
    /// `q_ids[i][j - i]` is the LP variable for `Q[i][j]`, `j >= i`.
    pub q_ids: Vec<Vec<usize>>,
    pub label: String,
}

impl GramTemplate {
    /// Rebuilds the certified polynomial `m^T Q m` from an LP point.
    pub fn reconstruct(&self, x: &[f64]) -> Polynomial {
        let mut terms: BTreeMap<Monomial, f64> = BTreeMap::new();
        for i in 0..self.basis.len() {
            for j in i..self.basis.len() {
                let q = x[self.q_ids[i][j - i]];
                let mult = if i == j { 1.0 } else { 2.0 };
                let m = self.basis[i].mul(&self.basis[j]);
                *terms.entry(m).or_insert(0.0) += mult * q;
            }
        }
        Polynomial::from_terms(&self.vars, terms)
    }
}

/// Creates a Gram block over `basis`: free entries `Q[i][j]`, slack rows
/// making `Q` diagonally dominant, and slack mass in the objective. Returns
/// the block and its polynomial `m^T Q m` as a template.
pub fn gram_poly_template(
    builder: &mut LpBuilder,
    vars: &Arc<VarSet>,
    basis: Vec<Monomial>,
    label: &str,
) -> (GramTemplate, TemplatePoly) {
    let k = basis.len();
    let mut q_ids = Vec::with_capacity(k);
    for i in 0..k {
        let mut row = Vec::with_capacity(k - i);
        for j in i..k {
            let lo = if i == j { 0.0 } else { f64::NEG_INFINITY };
            row.push(builder.add_var(format!("{label}.q[{i},{j}]"), lo, f64::INFINITY));
        }
        q_ids.push(row);
    }

    // |Q[i][j]| <= s[i][j] via two rows; diagonal dominates slack sums
    let mut slack: Vec<Vec<usize>> = Vec::with_capacity(k);
    for i in 0..k {
        let mut row = Vec::new();
        for j in (i + 1)..k {
            let s = builder.add_var(format!("{label}.s[{i},{j}]"), 0.0, f64::INFINITY);
            builder.lp.set_objective(s, 1.0);
            let q = q_ids[i][j - i];
            builder.lp.add_row(vec![(s, 1.0), (q, -1.0)], Rel::Ge, 0.0);
            builder.lp.add_row(vec![(s, 1.0), (q, 1.0)], Rel::Ge, 0.0);
            row.push(s);
        }
        slack.push(row);
    }
    for i in 0..k {
        let mut coeffs = vec![(q_ids[i][0], 1.0)];
        for j in 0..k {
            if j > i {
                coeffs.push((slack[i][j - i - 1], -1.0));
            } else if j < i {
                coeffs.push((slack[j][i - j - 1], -1.0));
            }
        }
        builder.lp.add_row(coeffs, Rel::Ge, 0.0);
    }

    let mut poly = TemplatePoly::zero(vars);
    for i in 0..k {
        for j in i..k {
            let mult = if i == j { 1.0 } else { 2.0 };
            poly.entry(basis[i].mul(&basis[j]))
                .add_var(q_ids[i][j - i], mult);
        }
    }
    let gram = GramTemplate {
        vars: Arc::clone(vars),
        basis,
        q_ids,
        label: label.to_string(),
    };
    (gram, poly)
}

/// A fully free polynomial template over `basis` (used as the multiplier of
/// equality constraints). Returns the coefficient variables and the template.
pub fn free_poly_template(
    builder: &mut LpBuilder,
    vars: &Arc<VarSet>,
    basis: &[Monomial],
    label: &str,
) -> (Vec<usize>, TemplatePoly) {
    let mut ids = Vec::with_capacity(basis.len());
    let mut poly = TemplatePoly::zero(vars);
    for (i, m) in basis.iter().enumerate() {
        let id = builder.add_free_var(format!("{label}.c[{i}]"));
        ids.push(id);
        poly.entry(m.clone()).add_var(id, 1.0);
    }
    (ids, poly)
}

/// Emits one equality row per monomial forcing `target == 0` coefficientwise.
pub fn match_coefficients(builder: &mut LpBuilder, target: &TemplatePoly) {
    for (_, l) in target.terms() {
        if l.is_structural_zero() {
            continue;
        }
        let coeffs: Vec<_> = l.terms.iter().map(|(&id, &c)| (id, c)).collect();
        builder.lp.add_row(coeffs, Rel::Eq, -l.constant);
    }
}

/// The basis for certifying `target` at the given even degree: monomials
/// whose square fits in the degree box of the target (capped by `degree`).
pub fn certificate_basis(
    target: &TemplatePoly,
    degree: usize,
) -> Result<Vec<Monomial>, DsosError> {
    if degree % 2 != 0 {
        return Err(DsosError::OddDegree(degree));
    }
    let caps_full = target.max_degree_per_var();
    let selected: Vec<usize> = (0..caps_full.len()).filter(|&i| caps_full[i] > 0).collect();
    let half = degree / 2;
    let caps: Vec<u16> = caps_full
        .iter()
        .map(|&c| (c as usize).div_ceil(2).min(half) as u16)
        .collect();
    Ok(monomial_basis_boxed(target.vars(), &selected, half, &caps))
}

/// Adds rows certifying `target` is DSOS at the given even degree: a Gram
/// block over the pruned basis plus coefficient-matching equalities.
pub fn dsos_constraints(
    builder: &mut LpBuilder,
    target: &TemplatePoly,
    degree: usize,
    label: &str,
) -> Result<GramTemplate, DsosError> {
    let basis = certificate_basis(target, degree)?;
    let (gram, gram_poly) = gram_poly_template(builder, target.vars(), basis, label);
    let mut residual = target.clone();
    residual.add_assign(&gram_poly, -1.0);
    match_coefficients(builder, &residual);
    Ok(gram)
}

/// Outcome of a membership test; acceptance carries the reconstructed
/// witness `m^T Q m`, which equals the tested polynomial coefficientwise.
#[derive(Debug, Clone)]
pub enum DsosMembership {
    Member { witness: Polynomial },
    NotMember,
}

/// Decides whether `p` lies in the DSOS cone at its own degree (rounded up
/// to even). Acceptance proves global nonnegativity of `p`.
pub fn is_dsos(p: &Polynomial) -> Result<DsosMembership, DsosError> {
    let mut builder = LpBuilder::new();
    let target = TemplatePoly::from_poly(p);
    let degree = p.degree().div_ceil(2) * 2;
    let gram = dsos_constraints(&mut builder, &target, degree, "dsos")?;
    match crate::lp::solve(&builder.lp) {
        crate::lp::LpOutcome::Feasible(s) => Ok(DsosMembership::Member {
            witness: gram.reconstruct(&s.values),
        }),
        crate::lp::LpOutcome::Infeasible => Ok(DsosMembership::NotMember),
        crate::lp::LpOutcome::NumericalFailure(msg) => Err(DsosError::Numerical(msg)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lp::{solve, LpOutcome};

    fn accepts(p: &Polynomial) -> bool {
        match is_dsos(p).unwrap() {
            DsosMembership::Member { witness } => {
                // reconstruction must reproduce the target
                let diff = &witness - p;
                assert!(
                    diff.terms().all(|(_, c)| c.abs() <= 1e-7),
                    "reconstruction drifted: {diff}"
                );
                true
            }
            DsosMembership::NotMember => false,
        }
    }

    #[test]
    fn basis_sizes_match_binomial_counts() {
        let vs = VarSet::new(vec!["x", "y", "z"]);
        let b = monomial_basis(&vs, &[0], 2);
        assert_eq!(b.len(), 3); // 1, x, x^2
        let b = monomial_basis(&vs, &[0, 1], 1);
        assert_eq!(b.len(), 3); // 1, x, y
        let b = monomial_basis(&vs, &[0, 1, 2], 4);
        assert_eq!(b.len(), 35); // C(7, 4)
        assert!(b[0].is_unit());
        assert!(b.windows(2).all(|w| w[0] < w[1]), "sorted and distinct");
    }

    #[test]
    fn boxed_basis_respects_caps() {
        let vs = VarSet::new(vec!["x", "y"]);
        let caps = vec![1u16, u16::MAX];
        let b = monomial_basis_boxed(&vs, &[0, 1], 3, &caps);
        assert!(b.iter().all(|m| m.exp(0) <= 1));
        // 1, x, y, xy, y^2, xy^2, y^3
        assert_eq!(b.len(), 7);
    }

    #[test]
    fn accepts_squares_and_dominant_quadratics() {
        let vs = VarSet::new(vec!["x", "y"]);
        let x = Polynomial::var(&vs, 0);
        let y = Polynomial::var(&vs, 1);
        assert!(accepts(&(&x - &y).powi(2)));
        assert!(accepts(&(&x + &y).powi(2)));
        // 2x^2 - 2xy + y^2: Gram [[2,-1],[-1,1]] is diagonally dominant
        let p = &(&x.powi(2).scale(2.0) - &(&x * &y).scale(2.0)) + &y.powi(2);
        assert!(accepts(&p));
        // x^2 y^2 needs the mixed basis monomial xy
        assert!(accepts(&(&x * &y).powi(2)));
        let one = Polynomial::constant(&vs, 1.0);
        assert!(accepts(&(&x.powi(2) + &one)));
    }

    #[test]
    fn rejects_negative_and_indefinite_polynomials() {
        let vs = VarSet::new(vec!["x", "y"]);
        let x = Polynomial::var(&vs, 0);
        let y = Polynomial::var(&vs, 1);
        assert!(!accepts(&-&x.powi(2)));
        assert!(!accepts(&Polynomial::constant(&vs, -1.0)));
        // indefinite: negative at (1, 1)
        let p = &(&x.powi(2) - &(&x * &y).scale(3.0)) + &y.powi(2);
        assert!(!accepts(&p));
    }

    #[test]
    fn rejects_psd_but_not_diagonally_dominant() {
        // x^2 + 2.4 xy + 2 y^2 is positive semidefinite, but no Gram basis
        // admits a diagonally dominant representation.
        let vs = VarSet::new(vec!["x", "y"]);
        let x = Polynomial::var(&vs, 0);
        let y = Polynomial::var(&vs, 1);
        let p = &(&x.powi(2) + &(&x * &y).scale(2.4)) + &y.powi(2).scale(2.0);
        assert!(p.eval(&[1.0, -0.6]) > 0.0);
        assert!(!accepts(&p));
    }

    #[test]
    fn odd_degree_is_refused() {
        let vs = VarSet::new(vec!["x"]);
        let target = TemplatePoly::from_poly(&Polynomial::var(&vs, 0));
        let mut builder = LpBuilder::new();
        assert_eq!(
            dsos_constraints(&mut builder, &target, 3, "s").unwrap_err(),
            DsosError::OddDegree(3)
        );
    }

    #[test]
    fn template_with_margin_variable_shifts_feasibility() {
        // target = -x^2 + c with c a decision variable forced to 2:
        // accepted only because the Gram block may use the constant monomial.
        let vs = VarSet::new(vec!["x"]);
        let x = Polynomial::var(&vs, 0);
        let mut builder = LpBuilder::new();
        let c = builder.add_var("c".to_string(), 2.0, 2.0);
        let mut target = TemplatePoly::zero(&vs);
        target.add_poly(&-&x.powi(2), 1.0);
        target.add_var_times_poly(c, &Polynomial::constant(&vs, 1.0), 1.0);
        let _ = dsos_constraints(&mut builder, &target, 2, "s").unwrap();
        // -x^2 + 2 is not globally nonnegative
        assert!(matches!(solve(&builder.lp), LpOutcome::Infeasible));

        // +x^2 + c is accepted
        let mut builder = LpBuilder::new();
        let c = builder.add_var("c".to_string(), 2.0, 2.0);
        let mut target = TemplatePoly::zero(&vs);
        target.add_poly(&x.powi(2), 1.0);
        target.add_var_times_poly(c, &Polynomial::constant(&vs, 1.0), 1.0);
        let gram = dsos_constraints(&mut builder, &target, 2, "s").unwrap();
        match solve(&builder.lp) {
            LpOutcome::Feasible(s) => {
                let back = gram.reconstruct(&s.values);
                assert!((back.eval(&[0.0]) - 2.0).abs() <= 1e-7);
            }
            other => panic!("expected feasible, got {other:?}"),
        }
    }

    #[test]
    fn mul_poly_distributes_over_decision_variables() {
        let vs = VarSet::new(vec!["x"]);
        let x = Polynomial::var(&vs, 0);
        let mut t = TemplatePoly::zero(&vs);
        t.add_var_times_poly(7, &Polynomial::constant(&vs, 1.0), 1.0);
        t.add_poly(&x, 2.0);
        // (a + 2x) * x = a x + 2 x^2
        let prod = t.mul_poly(&x);
        let mut xs = vec![0.0; 8];
        xs[7] = 3.0;
        let inst = prod.eval_coeffs(&xs);
        assert_eq!(inst.eval(&[2.0]), 3.0 * 2.0 + 2.0 * 4.0);
    }
}
