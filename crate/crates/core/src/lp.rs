//! Plain linear-program container and a deterministic simplex backend.
//!
//! The container keeps rows exactly as the caller stated them. `solve`
//! validates inputs, hands the problem to the `microlp` simplex
//! implementation, and then re-checks the returned point against every row
//! within [`FEASIBILITY_TOL`]; a solver answer that fails the re-check is
//! reported as a numerical failure, never as feasibility.

use std::collections::BTreeMap;
use std::io::{self, Write};
use std::panic::{catch_unwind, AssertUnwindSafe};

use microlp::{ComparisonOp, OptimizationDirection, Problem};

/// A returned point must satisfy every row to this absolute tolerance
/// (scaled by the right-hand side magnitude).
pub const FEASIBILITY_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rel {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone)]
pub struct Row {
    pub coeffs: Vec<(usize, f64)>,
    pub rel: Rel,
    pub rhs: f64,
}

/// Linear program over variables `0..n_vars` with box bounds, linear rows,
/// and a minimization objective.
#[derive(Debug, Clone, Default)]
pub struct LinearProgram {
    bounds: Vec<(f64, f64)>,
    objective: Vec<f64>,
    rows: Vec<Row>,
}

impl LinearProgram {
    pub fn new() -> LinearProgram {
        LinearProgram::default()
    }

    /// Adds a variable with the given bounds (infinities allowed) and zero
    /// objective coefficient; returns its index.
    pub fn add_var(&mut self, lo: f64, hi: f64) -> usize {
        self.bounds.push((lo, hi));
        self.objective.push(0.0);
        self.bounds.len() - 1
    }

    pub fn add_free_var(&mut self) -> usize {
        self.add_var(f64::NEG_INFINITY, f64::INFINITY)
    }

    pub fn set_objective(&mut self, var: usize, coeff: f64) {
        self.objective[var] = coeff;
    }

    pub fn add_row(&mut self, coeffs: Vec<(usize, f64)>, rel: Rel, rhs: f64) {
        self.rows.push(Row { coeffs, rel, rhs });
    }

    pub fn n_vars(&self) -> usize {
        self.bounds.len()
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn rows(&self) -> &[Row] {
        &self.rows
    }

    pub fn bounds(&self) -> &[(f64, f64)] {
        &self.bounds
    }

    /// Largest violation of any row at the given point.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut worst = 0.0f64;
        for row in &self.rows {
            let lhs: f64 = row.coeffs.iter().map(|&(v, c)| c * x[v]).sum();
            let gap = match row.rel {
                Rel::Le => lhs - row.rhs,
                Rel::Ge => row.rhs - lhs,
                Rel::Eq => (lhs - row.rhs).abs(),
            };
            let scale = row.rhs.abs().max(1.0);
            worst = worst.max(gap / scale);
        }
        worst
    }

    /// Writes the program in CPLEX LP text format.
    pub fn write_lp_format(&self, w: &mut impl Write) -> io::Result<()> {
        writeln!(w, "Minimize")?;
        let obj: Vec<String> = self
            .objective
            .iter()
            .enumerate()
            .filter(|(_, &c)| c != 0.0)
            .map(|(i, &c)| format!("{c:+} x{i}"))
            .collect();
        writeln!(w, " obj: {}", if obj.is_empty() { "0 x0".to_string() } else { obj.join(" ") })?;
        writeln!(w, "Subject To")?;
        for (k, row) in self.rows.iter().enumerate() {
            let terms: Vec<String> = row
                .coeffs
                .iter()
                .filter(|&&(_, c)| c != 0.0)
                .map(|&(v, c)| format!("{c:+} x{v}"))
                .collect();
            let op = match row.rel {
                Rel::Le => "<=",
                Rel::Ge => ">=",
                Rel::Eq => "=",
            };
            let lhs = if terms.is_empty() { "0 x0".to_string() } else { terms.join(" ") };
            writeln!(w, " c{k}: {lhs} {op} {}", row.rhs)?;
        }
        writeln!(w, "Bounds")?;
        for (i, &(lo, hi)) in self.bounds.iter().enumerate() {
            match (lo.is_finite(), hi.is_finite()) {
                (false, false) => writeln!(w, " x{i} free")?,
                (true, false) => writeln!(w, " x{i} >= {lo}")?,
                (false, true) => writeln!(w, " x{i} <= {hi}")?,
                (true, true) => writeln!(w, " {lo} <= x{i} <= {hi}")?,
            }
        }
        writeln!(w, "End")
    }
}

/// Solver verdict. `Feasible` carries a point that passed the row re-check.
#[derive(Debug, Clone)]
pub enum LpOutcome {
    Feasible(LpSolution),
    Infeasible,
    NumericalFailure(String),
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub values: Vec<f64>,
    pub objective: f64,
}

/// Minimizes the objective subject to the rows and bounds.
///
/// Deterministic: equal programs produce bit-identical solutions. On a
/// numerical failure the solve is retried once with a fixed multiplicative
/// perturbation of the objective, which moves the pivot path without
/// changing the feasible set.
pub fn solve(lp: &LinearProgram) -> LpOutcome {
    for (i, &(lo, hi)) in lp.bounds.iter().enumerate() {
        if lo.is_nan() || hi.is_nan() || lo > hi {
            return LpOutcome::NumericalFailure(format!("bad bounds on variable {i}: [{lo}, {hi}]"));
        }
    }
    for (k, row) in lp.rows.iter().enumerate() {
        if !row.rhs.is_finite() {
            return LpOutcome::NumericalFailure(format!("row {k} has non-finite rhs"));
        }
        for &(v, c) in &row.coeffs {
            if !c.is_finite() {
                return LpOutcome::NumericalFailure(format!("row {k} has non-finite coefficient on x{v}"));
            }
            if v >= lp.n_vars() {
                return LpOutcome::NumericalFailure(format!("row {k} references unknown variable x{v}"));
            }
        }
    }

    // retries only change the objective, never the constraints, so any
    // recovered point still answers the original feasibility question and
    // still faces the post-solve row re-check
    match attempt(lp, Objective::Given) {
        LpOutcome::NumericalFailure(first) => match attempt(lp, Objective::Jittered) {
            LpOutcome::NumericalFailure(_) => match attempt(lp, Objective::Zero) {
                LpOutcome::NumericalFailure(_) => LpOutcome::NumericalFailure(first),
                recovered => recovered,
            },
            recovered => recovered,
        },
        other => other,
    }
}

#[derive(Clone, Copy)]
enum Objective {
    Given,
    /// Deterministic multiplicative perturbation to break degenerate ties.
    Jittered,
    /// Pure feasibility; takes a different pivoting path entirely.
    Zero,
}

fn attempt(lp: &LinearProgram, objective: Objective) -> LpOutcome {
    let mut problem = Problem::new(OptimizationDirection::Minimize);
    let vars: Vec<_> = lp
        .bounds
        .iter()
        .zip(&lp.objective)
        .enumerate()
        .map(|(i, (&(lo, hi), &obj))| {
            let coeff = match objective {
                Objective::Given => obj,
                // multiplicative so zero coefficients stay zero and the
                // retry cannot make a bounded program unbounded
                Objective::Jittered => {
                    let wiggle = (i as u64).wrapping_mul(2654435761) % 1024;
                    obj * (1.0 + 1e-9 * wiggle as f64 / 1024.0)
                }
                Objective::Zero => 0.0,
            };
            problem.add_var(coeff, (lo, hi))
        })
        .collect();

    for row in &lp.rows {
        // merge duplicates; the backend expects one coefficient per variable
        let mut merged: BTreeMap<usize, f64> = BTreeMap::new();
        for &(v, c) in &row.coeffs {
            *merged.entry(v).or_insert(0.0) += c;
        }
        merged.retain(|_, c| *c != 0.0);
        if merged.is_empty() {
            let ok = match row.rel {
                Rel::Le => 0.0 <= row.rhs + FEASIBILITY_TOL,
                Rel::Ge => 0.0 >= row.rhs - FEASIBILITY_TOL,
                Rel::Eq => row.rhs.abs() <= FEASIBILITY_TOL,
            };
            if ok {
                continue;
            }
            return LpOutcome::Infeasible;
        }
        let coeffs: Vec<_> = merged.into_iter().map(|(v, c)| (vars[v], c)).collect();
        let op = match row.rel {
            Rel::Le => ComparisonOp::Le,
            Rel::Ge => ComparisonOp::Ge,
            Rel::Eq => ComparisonOp::Eq,
        };
        problem.add_constraint(&coeffs, op, row.rhs);
    }

    let solved = catch_unwind(AssertUnwindSafe(move || problem.solve()));
    match solved {
        Err(_) => LpOutcome::NumericalFailure("solver panicked".to_string()),
        Ok(Err(microlp::Error::Infeasible)) => LpOutcome::Infeasible,
        Ok(Err(e)) => LpOutcome::NumericalFailure(e.to_string()),
        Ok(Ok(solution)) => {
            let values: Vec<f64> = vars.iter().map(|&v| solution[v]).collect();
            let worst = lp.max_violation(&values);
            if worst > FEASIBILITY_TOL {
                return LpOutcome::NumericalFailure(format!(
                    "solver point violates a row by {worst:e}"
                ));
            }
            LpOutcome::Feasible(LpSolution { values, objective: solution.objective() })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_small_program_to_known_optimum() {
        let mut lp = LinearProgram::new();
        let x = lp.add_var(0.0, 1.0);
        let y = lp.add_var(0.0, 1.0);
        lp.set_objective(x, 1.0);
        lp.set_objective(y, 1.0);
        lp.add_row(vec![(x, 1.0), (y, 1.0)], Rel::Ge, 1.0);
        lp.add_row(vec![(x, 1.0), (y, -1.0)], Rel::Eq, 0.0);
        match solve(&lp) {
            LpOutcome::Feasible(s) => {
                assert!((s.values[x] - 0.5).abs() <= 1e-9);
                assert!((s.values[y] - 0.5).abs() <= 1e-9);
                assert!((s.objective - 1.0).abs() <= 1e-9);
            }
            other => panic!("expected feasible, got {other:?}"),
        }
    }

    #[test]
    fn detects_infeasibility() {
        let mut lp = LinearProgram::new();
        let x = lp.add_var(0.0, 1.0);
        lp.add_row(vec![(x, 1.0)], Rel::Ge, 2.0);
        assert!(matches!(solve(&lp), LpOutcome::Infeasible));
    }

    #[test]
    fn handles_free_variables() {
        let mut lp = LinearProgram::new();
        let x = lp.add_free_var();
        let t = lp.add_var(0.0, f64::INFINITY);
        lp.set_objective(t, 1.0);
        lp.add_row(vec![(x, 1.0)], Rel::Eq, 1.0);
        lp.add_row(vec![(t, 1.0), (x, -1.0)], Rel::Ge, -3.0); // t >= x - 3
        lp.add_row(vec![(t, 1.0), (x, 1.0)], Rel::Ge, 3.0); // t >= 3 - x
        match solve(&lp) {
            LpOutcome::Feasible(s) => {
                assert!((s.values[x] - 1.0).abs() <= 1e-9);
                assert!((s.values[t] - 2.0).abs() <= 1e-9);
            }
            other => panic!("expected feasible, got {other:?}"),
        }
    }

    #[test]
    fn rejects_non_finite_input_as_numerical_failure() {
        let mut lp = LinearProgram::new();
        let x = lp.add_var(0.0, 1.0);
        lp.add_row(vec![(x, f64::NAN)], Rel::Le, 1.0);
        assert!(matches!(solve(&lp), LpOutcome::NumericalFailure(_)));
    }

    #[test]
    fn constant_rows_are_decided_directly() {
        let mut lp = LinearProgram::new();
        let _ = lp.add_var(0.0, 1.0);
        lp.add_row(vec![], Rel::Eq, 1.0);
        assert!(matches!(solve(&lp), LpOutcome::Infeasible));

        let mut lp = LinearProgram::new();
        let x = lp.add_var(0.0, 1.0);
        lp.add_row(vec![(x, 0.0)], Rel::Le, 0.5);
        assert!(matches!(solve(&lp), LpOutcome::Feasible(_)));
    }

    #[test]
    fn duplicate_coefficients_are_merged() {
        let mut lp = LinearProgram::new();
        let x = lp.add_var(0.0, 10.0);
        lp.set_objective(x, 1.0);
        lp.add_row(vec![(x, 1.0), (x, 1.0)], Rel::Ge, 4.0); // 2x >= 4
        match solve(&lp) {
            LpOutcome::Feasible(s) => assert!((s.values[x] - 2.0).abs() <= 1e-9),
            other => panic!("expected feasible, got {other:?}"),
        }
    }

    #[test]
    fn repeated_solves_are_bit_identical() {
        let mut lp = LinearProgram::new();
        for i in 0..40 {
            let v = lp.add_var(0.0, f64::INFINITY);
            lp.set_objective(v, 1.0 + (i as f64) * 0.01);
        }
        for k in 0..60 {
            let coeffs: Vec<_> = (0..40)
                .map(|i| (i, (((i * 7 + k * 13) % 11) as f64) - 5.0))
                .collect();
            // rhs chosen so the all-ones point satisfies every row
            let at_ones: f64 = coeffs.iter().map(|&(_, c)| c).sum();
            lp.add_row(coeffs, Rel::Ge, at_ones - 1.0);
        }
        let a = match solve(&lp) {
            LpOutcome::Feasible(s) => s,
            other => panic!("expected feasible, got {other:?}"),
        };
        let b = match solve(&lp) {
            LpOutcome::Feasible(s) => s,
            other => panic!("expected feasible, got {other:?}"),
        };
        assert_eq!(a.objective.to_bits(), b.objective.to_bits());
        for (x, y) in a.values.iter().zip(&b.values) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }

    #[test]
    fn lp_format_lists_rows_and_bounds() {
        let mut lp = LinearProgram::new();
        let x = lp.add_free_var();
        let y = lp.add_var(0.0, 2.0);
        lp.set_objective(y, 1.0);
        lp.add_row(vec![(x, 1.0), (y, -2.0)], Rel::Le, 3.0);
        let mut buf = Vec::new();
        lp.write_lp_format(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.contains("Minimize"));
        assert!(text.contains("c0: +1 x0 -2 x1 <= 3"));
        assert!(text.contains("x0 free"));
        assert!(text.contains("0 <= x1 <= 2"));
    }
}
