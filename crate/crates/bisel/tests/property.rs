//! Structural invariants under randomized inputs.

use bisel::{
    build_group_structure, group_soft_threshold, hard_threshold, prediction_score,
    CoefficientVector, PenaltySpec, ScoreKind,
};
use ndarray::Array1;
use proptest::prelude::*;

proptest! {
    #[test]
    fn group_views_reconstruct_the_vector(
        sizes in prop::collection::vec(1usize..6, 1..8),
        seed in any::<u64>(),
    ) {
        let groups = build_group_structure(&sizes).unwrap();
        let p = groups.num_coefficients();
        let values: Array1<f64> =
            (0..p).map(|m| ((m as f64) + (seed % 97) as f64).sin()).collect();
        let beta = CoefficientVector::new(values.clone(), groups.clone()).unwrap();
        let mut rebuilt = Vec::with_capacity(p);
        for j in 0..groups.num_groups() {
            rebuilt.extend(beta.group(j).unwrap().iter().copied());
        }
        prop_assert_eq!(Array1::from(rebuilt), values);
    }

    #[test]
    fn soft_threshold_norm_identity_and_colinearity(
        z in prop::collection::vec(-10.0f64..10.0, 1..7),
        delta in 0.0f64..5.0,
    ) {
        let z = Array1::from(z);
        let out = group_soft_threshold(z.view(), delta).unwrap();
        let zn = z.dot(&z).sqrt();
        let on = out.dot(&out).sqrt();
        prop_assert!((on - (zn - delta).max(0.0)).abs() <= 1e-12 * (1.0 + zn));
        for i in 0..z.len() {
            for j in (i + 1)..z.len() {
                prop_assert!((out[i] * z[j] - out[j] * z[i]).abs() <= 1e-12 * (1.0 + zn * zn));
            }
        }
    }

    #[test]
    fn penalty_q_identity(
        t in -20.0f64..20.0,
        lam in 0.0f64..5.0,
        b in 1.01f64..8.0,
    ) {
        for spec in [PenaltySpec::Lasso, PenaltySpec::mcp(b).unwrap()] {
            let (rho, _) = spec.value_and_deriv(t, lam);
            let (q, _) = spec.q_value_and_deriv(t, lam);
            prop_assert!((rho - (lam * t.abs() - q)).abs() <= 1e-12 * (1.0 + lam * t.abs()));
        }
    }

    #[test]
    fn hard_threshold_idempotent_and_monotone(
        values in prop::collection::vec(-3.0f64..3.0, 1..12),
        theta1 in 0.0f64..2.0,
        theta2 in 0.0f64..2.0,
    ) {
        let groups = build_group_structure(&[values.len()]).unwrap();
        let beta = CoefficientVector::new(Array1::from(values), groups).unwrap();
        let (lo, hi) = if theta1 <= theta2 { (theta1, theta2) } else { (theta2, theta1) };
        let at_lo = hard_threshold(&beta, lo).unwrap();
        let at_hi = hard_threshold(&beta, hi).unwrap();
        let twice = hard_threshold(&at_lo, lo).unwrap();
        prop_assert_eq!(twice.values(), at_lo.values());
        prop_assert!(at_hi.support().is_subset(&at_lo.support()));
    }

    #[test]
    fn trimmed_score_never_exceeds_plain_mse(
        residuals in prop::collection::vec(-50.0f64..50.0, 2..40),
        trim in 0.0f64..0.49,
    ) {
        let mse = prediction_score(&residuals, ScoreKind::Mse, 0.0).unwrap();
        let trimmed = prediction_score(&residuals, ScoreKind::TrimmedMse, trim).unwrap();
        prop_assert!(trimmed <= mse + 1e-12 * mse.max(1.0));
        let zero_trim = prediction_score(&residuals, ScoreKind::TrimmedMse, 0.0).unwrap();
        prop_assert_eq!(zero_trim, mse);
    }
}
