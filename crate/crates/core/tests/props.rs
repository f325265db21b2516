use std::collections::BTreeMap;

use proptest::prelude::*;

use upomdp_core::certify::reward_poly;
use upomdp_core::dynamics::build_dynamics;
use upomdp_core::model::{
    belief_update, expected_reward, validate_model, Belief, ThetaAssignment,
};
use upomdp_core::models::random_model;
use upomdp_core::oracle::{draw_theta, ThetaStrategy};
use upomdp_core::poly::Monomial;
use upomdp_core::{Polynomial, VarSet};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn normalized(raw: Vec<f64>) -> Vec<f64> {
    let total: f64 = raw.iter().sum();
    raw.iter().map(|v| v / total).collect()
}

/// A theta assignment at a relative position inside every interval.
fn theta_at(model: &upomdp_core::UncertainPomdp, frac: f64) -> ThetaAssignment {
    model
        .uncertain_params()
        .into_iter()
        .map(|(key, lo, hi)| (key, lo + frac * (hi - lo)))
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn belief_updates_stay_on_the_simplex(
        seed in any::<u64>(),
        n_states in 2usize..5,
        n_actions in 1usize..3,
        n_obs in 2usize..4,
        raw in proptest::collection::vec(1e-3..1.0f64, 4),
        frac in 0.0..=1.0f64,
        steps in proptest::collection::vec((0usize..3, 0usize..4), 1..20),
    ) {
        let model = random_model(n_states, n_actions, n_obs, seed, 0.5, 0.2);
        prop_assert!(validate_model(&model).is_empty());
        let theta = theta_at(&model, frac);
        let mut belief = Belief::new(normalized(raw[..n_states].to_vec())).unwrap();
        for &(a, z) in &steps {
            let (a, z) = (a % n_actions, z % n_obs);
            match belief_update(&model, &belief, a, z, &theta) {
                Ok(next) => {
                    let sum: f64 = next.values().iter().sum();
                    prop_assert!((sum - 1.0).abs() <= 1e-12, "sum drifted to {sum}");
                    prop_assert!(next.values().iter().all(|&v| (0.0..=1.0 + 1e-15).contains(&v)));
                    belief = next;
                }
                // a zero-likelihood observation is a legal dead end
                Err(upomdp_core::model::ModelError::ImpossibleObservation) => {}
                Err(e) => return Err(TestCaseError::fail(format!("update failed: {e}"))),
            }
        }
    }

    #[test]
    fn drawn_thetas_respect_their_intervals(
        seed in any::<u64>(),
        draw_seed in any::<u64>(),
        strategy_pick in 0usize..3,
    ) {
        let model = random_model(3, 2, 2, seed, 1.0, 0.3);
        let strategy = match strategy_pick {
            0 => ThetaStrategy::Nominal,
            1 => ThetaStrategy::UniformPerStep,
            _ => ThetaStrategy::VertexPerStep,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(draw_seed);
        let theta = draw_theta(&model, &strategy, &mut rng);
        for (key, lo, hi) in model.uncertain_params() {
            let v = theta[&key];
            prop_assert!((lo..=hi).contains(&v), "theta {v} outside [{lo}, {hi}]");
        }
    }

    #[test]
    fn polynomial_ring_operations_agree_with_pointwise(
        terms_p in proptest::collection::vec(((0u16..3, 0u16..3, 0u16..3), -2.0..2.0f64), 0..6),
        terms_q in proptest::collection::vec(((0u16..3, 0u16..3, 0u16..3), -2.0..2.0f64), 0..6),
        x in proptest::collection::vec(-1.0..1.0f64, 3),
        k in -3.0..3.0f64,
    ) {
        let vars = VarSet::new(vec!["x", "y", "z"]);
        let build = |terms: &[((u16, u16, u16), f64)]| {
            let mut acc: BTreeMap<Monomial, f64> = BTreeMap::new();
            for &((i, j, l), c) in terms {
                *acc.entry(Monomial::from_exps(vec![i, j, l])).or_insert(0.0) += c;
            }
            Polynomial::from_terms(&vars, acc)
        };
        let p = build(&terms_p);
        let q = build(&terms_q);
        let (pv, qv) = (p.eval(&x), q.eval(&x));

        prop_assert!(((&p + &q).eval(&x) - (pv + qv)).abs() <= 1e-9);
        prop_assert!(((&p - &q).eval(&x) - (pv - qv)).abs() <= 1e-9);
        prop_assert!(((&p * &q).eval(&x) - pv * qv).abs() <= 1e-8);
        prop_assert!((p.scale(k).eval(&x) - k * pv).abs() <= 1e-9);
        prop_assert!((p.powi(3).eval(&x) - pv.powi(3)).abs() <= 1e-7);
    }

    #[test]
    fn substitution_is_evaluation_at_a_coordinate(
        terms in proptest::collection::vec(((0u16..3, 0u16..3), -2.0..2.0f64), 0..6),
        x in -1.0..1.0f64,
        y in -1.0..1.0f64,
    ) {
        let vars = VarSet::new(vec!["x", "y"]);
        let mut acc: BTreeMap<Monomial, f64> = BTreeMap::new();
        for &((i, j), c) in &terms {
            *acc.entry(Monomial::from_exps(vec![i, j])).or_insert(0.0) += c;
        }
        let p = Polynomial::from_terms(&vars, acc);
        let fixed = p.substitute_value(0, x);
        prop_assert!((fixed.eval(&[0.0, y]) - p.eval(&[x, y])).abs() <= 1e-9);
    }

    #[test]
    fn symbolic_modes_match_the_numeric_filter(
        seed in any::<u64>(),
        raw in proptest::collection::vec(1e-3..1.0f64, 3),
        frac in 0.0..=1.0f64,
        a in 0usize..2,
        z in 0usize..2,
    ) {
        let model = random_model(3, 2, 2, seed, 0.6, 0.25);
        let dynamics = build_dynamics(&model);
        let theta = theta_at(&model, frac);
        let belief = Belief::new(normalized(raw)).unwrap();

        // assemble the evaluation point in the dynamics variable order
        let mut point = vec![0.0; dynamics.vars().len()];
        for q in 0..3 {
            point[dynamics.belief_var(q)] = belief.values()[q];
        }
        for tv in dynamics.theta_vars() {
            point[tv.var] = theta[&tv.key];
        }

        let vf = dynamics.mode(a, z);
        let denom = vf.denom.eval(&point);
        match belief_update(&model, &belief, a, z, &theta) {
            Ok(next) => {
                prop_assert!(denom > 0.0);
                for q in 0..3 {
                    let sym = vf.rows[q].eval(&point) / denom;
                    prop_assert!((sym - next.values()[q]).abs() <= 1e-10,
                        "state {q}: symbolic {sym} vs filter {}", next.values()[q]);
                }
            }
            Err(_) => prop_assert!(denom.abs() <= 1e-12),
        }
    }

    #[test]
    fn reward_polynomial_matches_expected_reward(
        seed in any::<u64>(),
        raw in proptest::collection::vec(1e-3..1.0f64, 4),
        a in 0usize..2,
    ) {
        let model = random_model(4, 2, 2, seed, 0.4, 0.2);
        let dynamics = build_dynamics(&model);
        let belief = Belief::new(normalized(raw)).unwrap();
        let poly = reward_poly(&model, &dynamics, a);
        let mut point = vec![0.0; dynamics.vars().len()];
        for q in 0..4 {
            point[dynamics.belief_var(q)] = belief.values()[q];
        }
        let direct = expected_reward(&model, &belief, a);
        prop_assert!((poly.eval(&point) - direct).abs() <= 1e-12);
    }
}
