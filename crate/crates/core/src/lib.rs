//! Verification of partially observable Markov decision processes whose
//! transition and observation probabilities are only known up to intervals.
//!
//! The crate turns a finite-horizon safety or reward-bound question about the
//! belief simplex into a linear program: the belief update is expressed as a
//! family of rational vector fields (one per action/observation pair), a
//! polynomial barrier certificate is searched for over a monomial template,
//! and nonnegativity side conditions are relaxed to diagonally dominant
//! sum-of-squares (DSOS) cones, which are linear in the Gram entries.
//!
//! A certificate found this way is checked twice: once algebraically by the
//! LP feasibility test, and once numerically by dense sampling of the claimed
//! inequalities ([`oracle::check_certificate`]). Monte-Carlo simulation and
//! exhaustive small-instance reachability live in [`oracle`] as independent
//! ground truth for tests and falsification.

pub mod certify;
pub mod dsos;
pub mod dynamics;
pub mod lp;
pub mod model;
pub mod models;
pub mod oracle;
pub mod poly;

pub use model::{Belief, BeliefSet, Policy, ProbEntry, UncertainPomdp};
pub use poly::{Polynomial, RationalFunction, VarSet};
