use chaos_core::chaos::{find_uf_with, rs_fixed_point, CouplingMap};
use chaos_core::mixture::{CoupledModelSpec, FieldLaw, MixtureSpec};
use chaos_core::parisi::{evaluate_functional, OrderParameterTriplet, ParisiSolution};
use proptest::prelude::*;

const QUAD: usize = 24;

fn coupled() -> impl Strategy<Value = CoupledModelSpec> {
    (
        prop::collection::vec(0.0f64..1.2, 1..=2),
        prop::collection::vec(0.0f64..1.2, 1..=2),
        prop::collection::vec(0.0f64..=1.0, 2),
        (-0.5f64..0.5, -0.5f64..0.5, 0.2f64..1.0, 0.2f64..1.0, -1.0f64..=1.0),
    )
        .prop_map(|(b1, b2, t, (mean1, mean2, std1, std2, corr))| {
            let field = FieldLaw { mean1, mean2, std1, std2, corr };
            CoupledModelSpec::new(MixtureSpec::new(b1).unwrap(), MixtureSpec::new(b2).unwrap(), t, field).unwrap()
        })
}

fn rs_solution(coupled: &CoupledModelSpec, j: usize) -> (ParisiSolution, f64) {
    let field = coupled.field.marginal(j);
    let c = rs_fixed_point(coupled.spec(j), field);
    let sol = evaluate_functional(coupled.spec(j), field, &OrderParameterTriplet::rs(c).unwrap(), QUAD).unwrap();
    (sol, c)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn map_stays_in_interval(coupled in coupled()) {
        let (s1, c1) = rs_solution(&coupled, 1);
        let (s2, c2) = rs_solution(&coupled, 2);
        let map = CouplingMap::new(&coupled, &s1, &s2, c1, c2, QUAD).unwrap();
        let b = map.bound();
        prop_assert!((b - (c1 * c2).sqrt()).abs() < 1e-15);
        for i in 0..=20 {
            let u = -b + 2.0 * b * i as f64 / 20.0;
            let v = map.value(u).unwrap();
            prop_assert!(v.abs() <= b + 1e-10, "phi({}) = {} outside {}", u, v, b);
        }
    }

    #[test]
    fn fixed_point_is_a_fixed_point(coupled in coupled()) {
        let (s1, c1) = rs_solution(&coupled, 1);
        let (s2, c2) = rs_solution(&coupled, 2);
        let map = CouplingMap::new(&coupled, &s1, &s2, c1, c2, QUAD).unwrap();
        let tol = 1e-10;
        let r = find_uf_with(&map, tol).unwrap();
        let b = map.bound();
        prop_assert_eq!(r.bracket, (-b, b));
        prop_assert!(r.u_f.abs() <= b);
        let g = map.value(r.u_f).unwrap() - r.u_f;
        if r.u_f == b {
            prop_assert!(g >= 0.0);
        } else if r.u_f == -b {
            prop_assert!(g <= 0.0);
        } else {
            prop_assert!(g.abs() <= tol, "residual {}", g);
        }
        prop_assert!((r.residual - g.abs()).abs() < 1e-15);
        prop_assert_eq!(r.contracting, r.max_abs_derivative < 1.0 - 1e-6);
    }

    #[test]
    fn gauge_flip_of_second_system(coupled in coupled()) {
        let flipped = CoupledModelSpec::new(
            coupled.spec1.clone(),
            coupled.spec2.clone(),
            coupled.t().to_vec(),
            FieldLaw { mean2: -coupled.field.mean2, corr: -coupled.field.corr, ..coupled.field },
        )
        .unwrap();
        let (s1, c1) = rs_solution(&coupled, 1);
        let (s2, c2) = rs_solution(&coupled, 2);
        let (f2, _) = rs_solution(&flipped, 2);
        let a = CouplingMap::new(&coupled, &s1, &s2, c1, c2, QUAD).unwrap();
        let b = CouplingMap::new(&flipped, &s1, &f2, c1, c2, QUAD).unwrap();
        for i in 0..=10 {
            let u = a.bound() * (i as f64 / 5.0 - 1.0);
            prop_assert!((a.value(u).unwrap() + b.value(-u).unwrap()).abs() < 1e-10);
        }
    }
}
