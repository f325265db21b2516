//! Sparse multivariate polynomials over f64 with a shared variable table.
//!
//! Terms are kept in a `BTreeMap` keyed by graded-lexicographic monomial
//! order, so iteration, printing, and arithmetic are deterministic. After
//! every combining operation, coefficients with magnitude below
//! [`COEFF_EPS`] are dropped; no other normalization (in particular no GCD
//! cancellation on rational functions) is ever applied.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};
use std::sync::Arc;

use thiserror::Error;

/// Coefficients at or below this magnitude are treated as exact zeros.
pub const COEFF_EPS: f64 = 1e-15;

/// Errors from polynomial evaluation and substitution.
#[derive(Debug, Error, PartialEq)]
pub enum PolyError {
    #[error("no value assigned to variable `{0}`")]
    MissingAssignment(String),
    #[error("substitutions do not share a common denominator")]
    MixedDenominators,
    #[error("variable `{0}` appears in the polynomial but has no substitution")]
    UnsubstitutedVariable(String),
    #[error("rational function denominator is identically zero")]
    ZeroDenominator,
    #[error("variable `{0}` not present in the variable table")]
    UnknownVariable(String),
}

/// An ordered table of variable names shared by a family of polynomials.
///
/// Polynomials referencing different tables cannot be combined directly;
/// use [`Polynomial::embed`] to align them first.
#[derive(Debug, PartialEq, Eq)]
pub struct VarSet {
    names: Vec<String>,
    index: BTreeMap<String, usize>,
}

impl VarSet {
    /// Builds a table from distinct names. Panics on duplicates.
    pub fn new<S: Into<String>>(names: Vec<S>) -> Arc<VarSet> {
        let names: Vec<String> = names.into_iter().map(Into::into).collect();
        let mut index = BTreeMap::new();
        for (i, n) in names.iter().enumerate() {
            let prev = index.insert(n.clone(), i);
            assert!(prev.is_none(), "duplicate variable name `{n}`");
        }
        Arc::new(VarSet { names, index })
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn name(&self, i: usize) -> &str {
        &self.names[i]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }
}

fn same_vars(a: &Arc<VarSet>, b: &Arc<VarSet>) -> bool {
    Arc::ptr_eq(a, b) || a == b
}

/// Exponent vector over a fixed variable table.
///
/// `Ord` is graded lexicographic: lower total degree first, ties broken so
/// that earlier table variables sort first (1, x, y, x^2, xy, y^2, ...).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Monomial {
    exps: Vec<u16>,
}

impl Monomial {
    pub fn unit(nvars: usize) -> Monomial {
        Monomial { exps: vec![0; nvars] }
    }

    pub fn of_var(nvars: usize, var: usize, pow: u16) -> Monomial {
        let mut exps = vec![0; nvars];
        exps[var] = pow;
        Monomial { exps }
    }

    pub fn from_exps(exps: Vec<u16>) -> Monomial {
        Monomial { exps }
    }

    pub fn exps(&self) -> &[u16] {
        &self.exps
    }

    pub fn exp(&self, var: usize) -> u16 {
        self.exps[var]
    }

    pub fn degree(&self) -> usize {
        self.exps.iter().map(|&e| e as usize).sum()
    }

    /// Total degree restricted to the given variables.
    pub fn degree_in(&self, vars: &[usize]) -> usize {
        vars.iter().map(|&v| self.exps[v] as usize).sum()
    }

    pub fn is_unit(&self) -> bool {
        self.exps.iter().all(|&e| e == 0)
    }

    pub fn mul(&self, other: &Monomial) -> Monomial {
        debug_assert_eq!(self.exps.len(), other.exps.len());
        let exps = self
            .exps
            .iter()
            .zip(&other.exps)
            .map(|(a, b)| a.checked_add(*b).expect("exponent overflow"))
            .collect();
        Monomial { exps }
    }

    fn eval(&self, point: &[f64]) -> f64 {
        let mut acc = 1.0;
        for (i, &e) in self.exps.iter().enumerate() {
            if e > 0 {
                acc *= point[i].powi(e as i32);
            }
        }
        acc
    }

    fn display(&self, vars: &VarSet) -> String {
        let mut parts = Vec::new();
        for (i, &e) in self.exps.iter().enumerate() {
            match e {
                0 => {}
                1 => parts.push(vars.name(i).to_string()),
                _ => parts.push(format!("{}^{}", vars.name(i), e)),
            }
        }
        parts.join("*")
    }
}

impl Ord for Monomial {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.degree()
            .cmp(&other.degree())
            .then_with(|| other.exps.cmp(&self.exps))
    }
}

impl PartialOrd for Monomial {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

/// Sparse polynomial: a monomial-to-coefficient map over a shared [`VarSet`].
#[derive(Debug, Clone)]
pub struct Polynomial {
    vars: Arc<VarSet>,
    terms: BTreeMap<Monomial, f64>,
}

impl PartialEq for Polynomial {
    /// Structural equality: same variable table and bitwise-equal terms.
    fn eq(&self, other: &Self) -> bool {
        same_vars(&self.vars, &other.vars) && self.terms == other.terms
    }
}

impl Polynomial {
    pub fn zero(vars: &Arc<VarSet>) -> Polynomial {
        Polynomial { vars: Arc::clone(vars), terms: BTreeMap::new() }
    }

    pub fn constant(vars: &Arc<VarSet>, c: f64) -> Polynomial {
        let mut p = Polynomial::zero(vars);
        if c.abs() > COEFF_EPS {
            p.terms.insert(Monomial::unit(vars.len()), c);
        }
        p
    }

    pub fn var(vars: &Arc<VarSet>, i: usize) -> Polynomial {
        assert!(i < vars.len(), "variable index out of range");
        let mut p = Polynomial::zero(vars);
        p.terms.insert(Monomial::of_var(vars.len(), i, 1), 1.0);
        p
    }

    pub fn from_terms<I>(vars: &Arc<VarSet>, terms: I) -> Polynomial
    where
        I: IntoIterator<Item = (Monomial, f64)>,
    {
        let mut p = Polynomial::zero(vars);
        for (m, c) in terms {
            debug_assert_eq!(m.exps.len(), vars.len());
            p.add_term(m, c);
        }
        p
    }

    pub fn vars(&self) -> &Arc<VarSet> {
        &self.vars
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Monomial, f64)> {
        self.terms.iter().map(|(m, &c)| (m, c))
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn coeff(&self, m: &Monomial) -> f64 {
        self.terms.get(m).copied().unwrap_or(0.0)
    }

    /// The constant term.
    pub fn constant_term(&self) -> f64 {
        self.coeff(&Monomial::unit(self.vars.len()))
    }

    fn add_term(&mut self, m: Monomial, c: f64) {
        use std::collections::btree_map::Entry;
        match self.terms.entry(m) {
            Entry::Vacant(slot) => {
                if c.abs() > COEFF_EPS {
                    slot.insert(c);
                }
            }
            Entry::Occupied(mut slot) => {
                *slot.get_mut() += c;
                if slot.get().abs() <= COEFF_EPS {
                    slot.remove();
                }
            }
        }
    }

    /// Total degree; zero polynomial has degree 0.
    pub fn degree(&self) -> usize {
        self.terms.keys().map(Monomial::degree).max().unwrap_or(0)
    }

    /// Max total degree restricted to the given variables.
    pub fn degree_in(&self, vars: &[usize]) -> usize {
        self.terms.keys().map(|m| m.degree_in(vars)).max().unwrap_or(0)
    }

    /// Max exponent of each variable across all terms.
    pub fn max_degree_per_var(&self) -> Vec<u16> {
        let mut caps = vec![0u16; self.vars.len()];
        for m in self.terms.keys() {
            for (i, &e) in m.exps().iter().enumerate() {
                caps[i] = caps[i].max(e);
            }
        }
        caps
    }

    /// Variables that appear with nonzero exponent in some term.
    pub fn support_vars(&self) -> Vec<usize> {
        let caps = self.max_degree_per_var();
        (0..caps.len()).filter(|&i| caps[i] > 0).collect()
    }

    pub fn scale(&self, k: f64) -> Polynomial {
        let mut out = Polynomial::zero(&self.vars);
        for (m, &c) in &self.terms {
            let v = c * k;
            if v.abs() > COEFF_EPS {
                out.terms.insert(m.clone(), v);
            }
        }
        out
    }

    pub fn powi(&self, e: u32) -> Polynomial {
        let mut acc = Polynomial::constant(&self.vars, 1.0);
        for _ in 0..e {
            acc = &acc * self;
        }
        acc
    }

    /// Evaluates at a full point, one value per table variable.
    pub fn eval(&self, point: &[f64]) -> f64 {
        assert_eq!(point.len(), self.vars.len(), "point arity mismatch");
        let mut acc = 0.0;
        for (m, &c) in &self.terms {
            acc += c * m.eval(point);
        }
        acc
    }

    /// Evaluates from a name-to-value map. Variables not appearing in any
    /// term may be omitted.
    pub fn eval_map(&self, assign: &BTreeMap<String, f64>) -> Result<f64, PolyError> {
        let mut point = vec![0.0; self.vars.len()];
        for &i in &self.support_vars() {
            let name = self.vars.name(i);
            match assign.get(name) {
                Some(&v) => point[i] = v,
                None => return Err(PolyError::MissingAssignment(name.to_string())),
            }
        }
        Ok(self.eval(&point))
    }

    /// Replaces one variable by a numeric value, collapsing its exponents.
    pub fn substitute_value(&self, var: usize, value: f64) -> Polynomial {
        let mut out = Polynomial::zero(&self.vars);
        for (m, &c) in &self.terms {
            let e = m.exp(var);
            let mut exps = m.exps().to_vec();
            exps[var] = 0;
            out.add_term(Monomial::from_exps(exps), c * value.powi(e as i32));
        }
        out
    }

    /// Replaces one variable by a polynomial over the same table.
    pub fn substitute_poly(&self, var: usize, repl: &Polynomial) -> Polynomial {
        assert!(same_vars(&self.vars, &repl.vars), "variable table mismatch");
        let max_e = self.max_degree_per_var()[var];
        let mut powers = Vec::with_capacity(max_e as usize + 1);
        powers.push(Polynomial::constant(&self.vars, 1.0));
        for k in 1..=max_e as usize {
            powers.push(&powers[k - 1] * repl);
        }
        let mut out = Polynomial::zero(&self.vars);
        for (m, &c) in &self.terms {
            let e = m.exp(var) as usize;
            let mut exps = m.exps().to_vec();
            exps[var] = 0;
            let base = Polynomial::from_terms(
                &self.vars,
                [(Monomial::from_exps(exps), c)],
            );
            out = &out + &(&base * &powers[e]);
        }
        out
    }

    /// Re-expresses the polynomial over a larger table, matching variables
    /// by name. Fails if some variable in use has no counterpart.
    pub fn embed(&self, target: &Arc<VarSet>) -> Result<Polynomial, PolyError> {
        if same_vars(&self.vars, target) {
            return Ok(self.clone());
        }
        let mut map = Vec::with_capacity(self.vars.len());
        for name in self.vars.names() {
            match target.index_of(name) {
                Some(j) => map.push(Some(j)),
                None => map.push(None),
            }
        }
        let mut out = Polynomial::zero(target);
        for (m, &c) in &self.terms {
            let mut exps = vec![0u16; target.len()];
            for (i, &e) in m.exps().iter().enumerate() {
                if e > 0 {
                    match map[i] {
                        Some(j) => exps[j] = e,
                        None => {
                            return Err(PolyError::UnknownVariable(
                                self.vars.name(i).to_string(),
                            ))
                        }
                    }
                }
            }
            out.add_term(Monomial::from_exps(exps), c);
        }
        Ok(out)
    }

    /// Substitutes rational functions with a shared denominator `R` for the
    /// polynomial's variables and clears denominators.
    ///
    /// With `d` the total degree of the polynomial after the optional
    /// numeric substitution, the result is
    /// `sum_terms c * prod_j num_j^{e_j} * R^{d - sum e_j}` over `R^d`.
    /// Every remaining variable must have a substitution; substitutions must
    /// share one denominator structurally (no cancellation is attempted).
    pub fn substitute_rational(
        &self,
        subs: &BTreeMap<usize, RationalFunction>,
        numeric: Option<(usize, f64)>,
    ) -> Result<RationalFunction, PolyError> {
        let mut iter = subs.values();
        let first = iter.next().expect("at least one substitution required");
        let target = Arc::clone(first.den().vars());
        for rf in subs.values() {
            if !same_vars(rf.den().vars(), &target) || rf.den().terms != first.den().terms {
                return Err(PolyError::MixedDenominators);
            }
            if !same_vars(rf.num().vars(), &target) {
                return Err(PolyError::MixedDenominators);
            }
        }

        let collapsed = match numeric {
            Some((var, value)) => self.substitute_value(var, value),
            None => self.clone(),
        };
        for &v in &collapsed.support_vars() {
            if !subs.contains_key(&v) {
                return Err(PolyError::UnsubstitutedVariable(
                    self.vars.name(v).to_string(),
                ));
            }
        }

        let d = collapsed.degree();
        let mut r_pows = Vec::with_capacity(d + 1);
        r_pows.push(Polynomial::constant(&target, 1.0));
        for k in 1..=d {
            r_pows.push(&r_pows[k - 1] * first.den());
        }

        let mut num = Polynomial::zero(&target);
        for (m, &c) in &collapsed.terms {
            let mut part = Polynomial::constant(&target, c);
            let mut used = 0usize;
            for (i, &e) in m.exps().iter().enumerate() {
                if e > 0 {
                    let s = subs.get(&i).expect("checked above");
                    part = &part * &s.num().powi(e as u32);
                    used += e as usize;
                }
            }
            part = &part * &r_pows[d - used];
            num = &num + &part;
        }
        RationalFunction::new(num, r_pows.pop().expect("R^d computed"))
    }

    /// Canonical text form: terms in graded-lex order joined by ` + `.
    pub fn canonical_string(&self) -> String {
        if self.terms.is_empty() {
            return "0".to_string();
        }
        let parts: Vec<String> = self
            .terms
            .iter()
            .map(|(m, c)| {
                if m.is_unit() {
                    format!("{c}")
                } else {
                    format!("{c} * {}", m.display(&self.vars))
                }
            })
            .collect();
        parts.join(" + ")
    }
}

impl fmt::Display for Polynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.canonical_string())
    }
}

impl Add for &Polynomial {
    type Output = Polynomial;
    fn add(self, rhs: &Polynomial) -> Polynomial {
        assert!(same_vars(&self.vars, &rhs.vars), "variable table mismatch");
        let mut out = self.clone();
        for (m, &c) in &rhs.terms {
            out.add_term(m.clone(), c);
        }
        out
    }
}

impl Sub for &Polynomial {
    type Output = Polynomial;
    fn sub(self, rhs: &Polynomial) -> Polynomial {
        assert!(same_vars(&self.vars, &rhs.vars), "variable table mismatch");
        let mut out = self.clone();
        for (m, &c) in &rhs.terms {
            out.add_term(m.clone(), -c);
        }
        out
    }
}

impl Neg for &Polynomial {
    type Output = Polynomial;
    fn neg(self) -> Polynomial {
        self.scale(-1.0)
    }
}

impl Mul for &Polynomial {
    type Output = Polynomial;
    fn mul(self, rhs: &Polynomial) -> Polynomial {
        assert!(same_vars(&self.vars, &rhs.vars), "variable table mismatch");
        let mut out = Polynomial::zero(&self.vars);
        for (ma, &ca) in &self.terms {
            for (mb, &cb) in &rhs.terms {
                out.add_term(ma.mul(mb), ca * cb);
            }
        }
        out
    }
}

/// A ratio of two polynomials over the same table. Never reduced.
#[derive(Debug, Clone, PartialEq)]
pub struct RationalFunction {
    num: Polynomial,
    den: Polynomial,
}

impl RationalFunction {
    pub fn new(num: Polynomial, den: Polynomial) -> Result<RationalFunction, PolyError> {
        if den.is_zero() {
            return Err(PolyError::ZeroDenominator);
        }
        assert!(same_vars(num.vars(), den.vars()), "variable table mismatch");
        Ok(RationalFunction { num, den })
    }

    pub fn from_poly(num: Polynomial) -> RationalFunction {
        let den = Polynomial::constant(num.vars(), 1.0);
        RationalFunction { num, den }
    }

    pub fn num(&self) -> &Polynomial {
        &self.num
    }

    pub fn den(&self) -> &Polynomial {
        &self.den
    }

    /// Pointwise value; `None` when the denominator evaluates to exactly 0.
    pub fn eval(&self, point: &[f64]) -> Option<f64> {
        let d = self.den.eval(point);
        if d == 0.0 {
            None
        } else {
            Some(self.num.eval(point) / d)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn xy() -> Arc<VarSet> {
        VarSet::new(vec!["x", "y"])
    }

    #[test]
    fn product_of_conjugates_is_difference_of_squares() {
        let vs = VarSet::new(vec!["x"]);
        let x = Polynomial::var(&vs, 0);
        let one = Polynomial::constant(&vs, 1.0);
        let p = &(&x + &one) * &(&x - &one);
        let expected = &(&x * &x) - &one;
        assert_eq!(p, expected);
        assert_eq!(p.canonical_string(), "-1 + 1 * x^2");
    }

    #[test]
    fn cube_of_binomial_has_binomial_coefficients() {
        let vs = xy();
        let x = Polynomial::var(&vs, 0);
        let y = Polynomial::var(&vs, 1);
        let p = (&x + &y).powi(3);
        assert_eq!(p.coeff(&Monomial::from_exps(vec![3, 0])), 1.0);
        assert_eq!(p.coeff(&Monomial::from_exps(vec![2, 1])), 3.0);
        assert_eq!(p.coeff(&Monomial::from_exps(vec![1, 2])), 3.0);
        assert_eq!(p.coeff(&Monomial::from_exps(vec![0, 3])), 1.0);
        assert_eq!(p.num_terms(), 4);
    }

    #[test]
    fn grlex_order_lists_low_degree_first_and_early_vars_first() {
        let vs = xy();
        let x = Polynomial::var(&vs, 0);
        let y = Polynomial::var(&vs, 1);
        let one = Polynomial::constant(&vs, 1.0);
        let p = &(&(&(&one + &x) + &y) + &(&x * &y)) + &(&x * &x);
        assert_eq!(p.canonical_string(), "1 + 1 * x + 1 * y + 1 * x^2 + 1 * x*y");
    }

    #[test]
    fn tiny_coefficients_are_dropped_on_combination() {
        let vs = xy();
        let x = Polynomial::var(&vs, 0);
        let p = &x - &x.scale(1.0 - 0.25e-15);
        assert!(p.is_zero());
    }

    #[test]
    fn eval_map_reports_missing_variable() {
        let vs = xy();
        let x = Polynomial::var(&vs, 0);
        let mut assign = BTreeMap::new();
        assign.insert("y".to_string(), 1.0);
        assert_eq!(
            x.eval_map(&assign),
            Err(PolyError::MissingAssignment("x".to_string()))
        );
        assign.insert("x".to_string(), 2.5);
        assert_eq!(x.eval_map(&assign), Ok(2.5));
    }

    #[test]
    fn substitute_value_collapses_exponents() {
        let vs = xy();
        let x = Polynomial::var(&vs, 0);
        let y = Polynomial::var(&vs, 1);
        // p = x^2 y + 3 x, at x = 2: 4 y + 6
        let p = &(&(&x * &x) * &y) + &x.scale(3.0);
        let q = p.substitute_value(0, 2.0);
        assert_eq!(q.eval(&[0.0, 1.0]), 10.0);
        assert_eq!(q.eval(&[0.0, 0.0]), 6.0);
        assert_eq!(q.degree(), 1);
    }

    #[test]
    fn substitute_rational_clears_common_denominator() {
        // B = b1^2 + b2, subs b1 -> s1/r, b2 -> s2/r with s1 = u, s2 = v,
        // r = u + v. Degree 2, so result = (u^2 + v(u+v)) / (u+v)^2.
        let bvars = VarSet::new(vec!["b1", "b2"]);
        let b1 = Polynomial::var(&bvars, 0);
        let b2 = Polynomial::var(&bvars, 1);
        let bpoly = &(&b1 * &b1) + &b2;

        let uv = VarSet::new(vec!["u", "v"]);
        let u = Polynomial::var(&uv, 0);
        let v = Polynomial::var(&uv, 1);
        let r = &u + &v;
        let mut subs = BTreeMap::new();
        subs.insert(0, RationalFunction::new(u.clone(), r.clone()).unwrap());
        subs.insert(1, RationalFunction::new(v.clone(), r.clone()).unwrap());

        let out = bpoly.substitute_rational(&subs, None).unwrap();
        assert_eq!(out.den(), &(&r * &r));
        let expected_num = &(&u * &u) + &(&v * &r);
        assert_eq!(out.num(), &expected_num);

        // numeric cross-check on a grid
        for i in 1..=10 {
            for j in 1..=10 {
                let (uu, vv) = (i as f64 / 10.0, j as f64 / 7.0);
                let rr = uu + vv;
                let direct = (uu / rr).powi(2) + vv / rr;
                let via = out.eval(&[uu, vv]).unwrap();
                assert!((direct - via).abs() <= 1e-10 * direct.abs().max(1.0));
            }
        }
    }

    #[test]
    fn substitute_rational_rejects_mixed_denominators() {
        let bvars = VarSet::new(vec!["b1", "b2"]);
        let bpoly = &Polynomial::var(&bvars, 0) + &Polynomial::var(&bvars, 1);
        let uv = VarSet::new(vec!["u", "v"]);
        let u = Polynomial::var(&uv, 0);
        let v = Polynomial::var(&uv, 1);
        let mut subs = BTreeMap::new();
        subs.insert(0, RationalFunction::new(u.clone(), &u + &v).unwrap());
        subs.insert(1, RationalFunction::new(v.clone(), &u - &v).unwrap());
        assert_eq!(
            bpoly.substitute_rational(&subs, None).unwrap_err(),
            PolyError::MixedDenominators
        );
    }

    #[test]
    fn substitute_rational_handles_time_variable() {
        // B = t * b1, at t = 3 with b1 -> u/(u+v): num = 3 u, den = (u+v).
        let vars = VarSet::new(vec!["t", "b1"]);
        let t = Polynomial::var(&vars, 0);
        let b1 = Polynomial::var(&vars, 1);
        let bpoly = &t * &b1;

        let uv = VarSet::new(vec!["u", "v"]);
        let u = Polynomial::var(&uv, 0);
        let r = &u + &Polynomial::var(&uv, 1);
        let mut subs = BTreeMap::new();
        subs.insert(1, RationalFunction::new(u.clone(), r.clone()).unwrap());

        let out = bpoly.substitute_rational(&subs, Some((0, 3.0))).unwrap();
        assert_eq!(out.num(), &u.scale(3.0));
        assert_eq!(out.den(), &r);
    }

    #[test]
    fn embed_maps_variables_by_name() {
        let small = VarSet::new(vec!["y"]);
        let big = VarSet::new(vec!["x", "y", "z"]);
        let p = Polynomial::var(&small, 0).scale(2.0);
        let q = p.embed(&big).unwrap();
        assert_eq!(q.eval(&[9.0, 1.5, 9.0]), 3.0);
        let missing = VarSet::new(vec!["x", "z"]);
        assert_eq!(
            p.embed(&missing).unwrap_err(),
            PolyError::UnknownVariable("y".to_string())
        );
    }
}
