use proptest::prelude::*;

use mavk::decompose::decompose_dirichlet;
use mavk::field::{add, map_field, read_macf1, scale, sub, sup, write_macf1, Field, Grid2, ScalarField2, SymMatrixField2, VectorField2};
use mavk::harness::{fit_power_law, RawConfig};
use mavk::mollify::mollify;
use mavk::nk::{exponent_bound, rate_budget, Family};
use mavk::random::{rng, smooth_scalar};
use mavk::stage::{cutoff_chain, plan_schedule};

fn valid_values(f: &ScalarField2) -> Vec<f64> {
    let g = *f.grid();
    g.valid2().flat_map(|j| g.valid1().map(move |i| (i, j))).map(|(i, j)| f.at(i, j)).collect()
}

fn small(margin: usize) -> Grid2 {
    Grid2::new([0.0, 0.0], 48, 40, 1.0 / 47.0, margin).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn config_canonical_form_round_trips(
        entries in prop::collection::btree_map("[a-z][a-z0-9_]{0,6}(\\.[a-z][a-z0-9_]{0,6}){0,2}", "[A-Za-z0-9_.,:/+-]{1,12}", 0..8)
    ) {
        let raw = RawConfig(entries);
        let back = RawConfig::parse(&raw.canonical()).unwrap();
        prop_assert_eq!(back, raw);
    }

    #[test]
    fn power_fit_recovers_exact_laws(p in -4.0f64..4.0, c in 0.01f64..100.0, x0 in 0.01f64..1.0) {
        let xs: Vec<f64> = (0..5).map(|i| x0 * 1.7f64.powi(i)).collect();
        let ys: Vec<f64> = xs.iter().map(|x| c * x.powf(p)).collect();
        let f = fit_power_law(&xs, &ys).unwrap();
        prop_assert!((f.slope - p).abs() < 1e-9);
        prop_assert!((f.intercept - c.ln()).abs() < 1e-8);
    }

    #[test]
    fn mollify_is_linear_and_positive(seed in 0u64..1000, al in -3.0f64..3.0, be in -3.0f64..3.0, l in 0.05f64..0.15) {
        let g = small(8);
        let mut r = rng(seed);
        let (f, h) = (smooth_scalar(g, &mut r, 4, 6.0), smooth_scalar(g, &mut r, 4, 6.0));
        let lhs = mollify(&add(&scale(&f, al), &scale(&h, be)).unwrap(), l).unwrap();
        let rhs = add(&scale(&mollify(&f, l).unwrap(), al), &scale(&mollify(&h, l).unwrap(), be)).unwrap();
        prop_assert!(sup(&sub(&lhs, &rhs).unwrap()) < 1e-12 * (1.0 + al.abs() + be.abs()) * 10.0);
        let pos = map_field(&f, |x| x * x);
        let m = mollify(&pos, l).unwrap();
        prop_assert!(valid_values(&m).iter().all(|x| *x >= 0.0));
    }

    #[test]
    fn schedules_satisfy_their_identities(l in 0.02f64..0.5, lambda in 5.0f64..200.0, n in 2usize..6, k in 1usize..5) {
        prop_assume!(lambda * l > 1.0);
        let s = plan_schedule(l, lambda, n, k).unwrap();
        prop_assert!(s.identity_residual() <= 1e-12);
        prop_assert!(s.is_monotone());
        prop_assert_eq!(s.pairs.len(), k + 1);
    }

    #[test]
    fn cutoffs_stay_in_the_unit_interval(k in 1usize..4, l in 0.05f64..0.12) {
        let g = Grid2::covering([0.5, 0.5], [0.5, 0.5], 0.45, 96).unwrap();
        if let Ok(chain) = cutoff_chain(&g, l, k) {
            for c in &chain {
                prop_assert!(valid_values(c).iter().all(|x| (0.0..=1.0).contains(x)));
            }
            // nested: each cutoff sits under the previous one
            for w in chain.windows(2) {
                prop_assert!(w[1].values().iter().zip(w[0].values()).all(|(b, a)| b <= a));
            }
        }
    }

    #[test]
    fn conformal_part_of_multiples_of_identity(c in -5.0f64..5.0) {
        let g = small(0);
        let dec = decompose_dirichlet(&SymMatrixField2::identity(g, c)).unwrap();
        prop_assert!(dec.a.values().iter().all(|x| (x - c).abs() < 1e-10));
        prop_assert!(sup(&dec.psi) < 1e-10);
    }

    #[test]
    fn rate_budgets_approach_the_exponent_cap(k in 1u32..4, n in 1u64..200) {
        let cap = exponent_bound(k, 1.0, Family::Chi).unwrap();
        let a = rate_budget(n, k, Family::Chi).unwrap().alpha_max;
        let b = rate_budget(n + 1, k, Family::Chi).unwrap().alpha_max;
        prop_assert!(a < b && b < cap);
    }

    #[test]
    fn macf1_round_trips(seed in 0u64..1000, ncomp in 1usize..5, margin in 0usize..6) {
        let g = small(margin);
        let mut r = rng(seed);
        let parts: Vec<ScalarField2> = (0..ncomp).map(|_| smooth_scalar(g, &mut r, 3, 5.0)).collect();
        let refs: Vec<&ScalarField2> = parts.iter().collect();
        let v = VectorField2::from_scalars(&refs).unwrap();
        let mut buf = vec![];
        write_macf1(&v, &mut buf).unwrap();
        let back: VectorField2 = read_macf1(buf.as_slice()).unwrap();
        prop_assert_eq!(back, v);
    }
}
