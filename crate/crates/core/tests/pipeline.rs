use fairmle::dataset::{mask_outcomes_mar, simulate, simulate_masked, Dataset, DgpSpec, Graph};
use fairmle::effects::Estimator;
use fairmle::eval::mse;
use fairmle::train::{fit, predict, Method, TrainConfig};
use proptest::prelude::*;

#[test]
fn every_method_predicts_exactly_the_masked_rows() {
    for graph in [Graph::OneMediator, Graph::TwoMediator] {
        let (ds, held) = simulate_masked(&DgpSpec::new(graph, 1200, 21)).unwrap();
        let masked = ds.masked_rows();
        assert_eq!(masked.len(), 240);
        for method in Method::ALL {
            let f = fit(&ds, &TrainConfig::new(method, graph)).unwrap();
            let rows: Vec<usize> = f.predictions.iter().map(|p| p.0).collect();
            assert_eq!(rows, masked, "{graph} {method}");
            assert_eq!(predict(&ds, &f), f.predictions);
            assert!(mse(&held, &f.predictions).unwrap().is_finite());
            match method {
                Method::M0 => assert!(f.effect_at_fit > 1.0),
                Method::M2 | Method::M4 => assert_eq!(f.reparam.as_ref().unwrap().pse_of(), 0.0),
                _ => assert!(f.effect_at_fit.abs() <= 0.05 + 1e-6, "{graph} {method}: {}", f.effect_at_fit),
            }
        }
    }
}

#[test]
fn every_estimator_band_holds_under_standard_constraint() {
    let (ds, _) = simulate_masked(&DgpSpec::new(Graph::OneMediator, 1500, 5)).unwrap();
    let base = fit(&ds, &TrainConfig::new(Method::M0, Graph::OneMediator)).unwrap();
    for e in Estimator::ALL {
        let cfg = TrainConfig::new(Method::M1, Graph::OneMediator).with_estimator(e).with_epsilon(-0.1, 0.02);
        let f = fit(&ds, &cfg).unwrap();
        assert!(f.effect_at_fit >= -0.1 - 1e-6 && f.effect_at_fit <= 0.02 + 1e-6, "{e}: {}", f.effect_at_fit);
        assert!(f.loglik <= base.loglik);
    }
}

#[test]
fn csv_round_trip_preserves_masked_outcomes() {
    let dir = tempfile::tempdir().unwrap();
    for graph in [Graph::OneMediator, Graph::TwoMediator] {
        let (ds, _) = simulate_masked(&DgpSpec::new(graph, 300, 2)).unwrap();
        let path = dir.path().join(format!("{graph}.csv"));
        ds.save_csv(&path).unwrap();
        let back = Dataset::load_csv(&path).unwrap();
        assert_eq!(back.graph(), graph);
        assert_eq!(back.masked_rows(), ds.masked_rows());
        for (a, b) in back.x().iter().zip(ds.x()) {
            assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
        }
        assert_eq!(back.m(), ds.m());
        assert_eq!(back.l(), ds.l());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn masking_removes_an_exact_count(n in 1usize..400, frac in 0.0f64..0.99, seed in 0u64..1000) {
        let ds = simulate(&DgpSpec::new(Graph::OneMediator, n, seed)).unwrap();
        let masked = mask_outcomes_mar(&ds, frac, seed).unwrap();
        prop_assert_eq!(masked.masked_rows().len(), (frac * n as f64).floor() as usize);
        prop_assert_eq!(masked.x(), ds.x());
        for i in 0..n {
            if let Some(y) = masked.y()[i] {
                prop_assert_eq!(Some(y), ds.y()[i]);
            }
        }
    }

    #[test]
    fn simulation_is_a_function_of_the_seed(n in 1usize..200, seed in 0u64..10_000) {
        let spec = DgpSpec::new(Graph::TwoMediator, n, seed);
        prop_assert_eq!(simulate(&spec).unwrap(), simulate(&spec).unwrap());
    }
}
