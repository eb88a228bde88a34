use chaos_core::mixture::{cauchy_schwarz_gap, cross_xi_eval, xi_eval, CoupledModelSpec, FieldLaw, MixtureSpec};
use proptest::prelude::*;

fn betas() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0f64..1.5, 1..=4)
}

proptest! {
    #[test]
    fn derivative_parity(b in betas(), x in 0.0f64..1.0) {
        let spec = MixtureSpec::new(b).unwrap();
        for k in 0..=2u32 {
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            let (a, c) = (xi_eval(&spec, -x, k).unwrap(), xi_eval(&spec, x, k).unwrap());
            prop_assert!((a - sign * c).abs() <= 1e-15 * c.abs().max(1.0));
        }
    }

    #[test]
    fn theta_starts_at_zero_and_grows(b in betas()) {
        let spec = MixtureSpec::new(b).unwrap();
        prop_assert_eq!(spec.theta(0.0), 0.0);
        let mut prev = 0.0;
        for i in 1..=1000 {
            let v = spec.theta(i as f64 / 1000.0);
            prop_assert!(v >= prev - 1e-15);
            prev = v;
        }
    }

    #[test]
    fn cross_covariance_obeys_cauchy_schwarz(
        b1 in betas(),
        b2 in betas(),
        t in prop::collection::vec(0.0f64..=1.0, 4),
    ) {
        let coupled = CoupledModelSpec::new(
            MixtureSpec::new(b1).unwrap(),
            MixtureSpec::new(b2).unwrap(),
            t,
            FieldLaw::default(),
        )
        .unwrap();
        for i in 1..=10 {
            for j in 1..=10 {
                let g = cauchy_schwarz_gap(&coupled, i as f64 / 10.0, j as f64 / 10.0).unwrap();
                prop_assert!(g >= -1e-12, "gap {}", g);
            }
        }
    }

    #[test]
    fn perfect_coupling_reproduces_xi(b in betas(), x in -1.0f64..=1.0) {
        let spec = MixtureSpec::new(b.clone()).unwrap();
        let coupled = CoupledModelSpec::new(spec.clone(), spec.clone(), vec![1.0; b.len()], FieldLaw::default()).unwrap();
        for k in 0..=2u32 {
            let (a, c) = (cross_xi_eval(&coupled, x, k).unwrap(), xi_eval(&spec, x, k).unwrap());
            prop_assert!((a - c).abs() <= 1e-15 * c.abs().max(1.0));
        }
    }
}

#[test]
fn evaluation_rejects_points_outside_the_interval() {
    let spec = MixtureSpec::sk(1.0).unwrap();
    assert!(xi_eval(&spec, 1.5, 0).is_err());
    assert!(xi_eval(&spec, 0.5, 3).is_err());
}
