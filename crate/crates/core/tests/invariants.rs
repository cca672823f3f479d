use fairagg::aggregators::{BaselineMethod, BaselineParams, FtrlState, Method, OnsState};
use fairagg::decision::{decision_gradient, dr_estimate, linearized_gradient};
use fairagg::federation::{run, FederationConfig};
use fairagg::simplex::{normalize_subset, SIMPLEX_TOL};
use fairagg::transform::Setting;
use fairagg::SimplexVector;
use proptest::prelude::*;

fn assert_on_simplex(p: &[f64]) {
    assert!(p.iter().all(|x| x.is_finite() && *x >= -SIMPLEX_TOL), "{p:?}");
    assert!((p.iter().sum::<f64>() - 1.0).abs() <= SIMPLEX_TOL, "{p:?}");
}

fn responses(k: usize, t: usize, c2: f64) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(0.0..c2, k), t)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn ons_stays_on_simplex(rs in (2usize..8).prop_flat_map(|k| responses(k, 40, 1.0))) {
        let k = rs[0].len();
        let mut state = OnsState::new(k, 1.0).unwrap();
        for r in &rs {
            let g = decision_gradient(state.decision(), r).unwrap();
            let p = state.step(&g).unwrap();
            assert_on_simplex(p.as_slice());
        }
    }

    #[test]
    fn ftrl_stays_on_simplex_with_dr_gradients(
        rs in (3usize..10).prop_flat_map(|k| responses(k, 40, 1.0)),
        seed in any::<u64>(),
    ) {
        let k = rs[0].len();
        let m = 2;
        let c = m as f64 / k as f64;
        let l = 1.0 + 2.0 / c;
        let mut state = FtrlState::new(k, l).unwrap();
        for (t, r) in rs.iter().enumerate() {
            let a = (seed as usize).wrapping_add(t) % k;
            let sampled = { let mut s = vec![a, (a + 1) % k]; s.sort(); s };
            let observed: Vec<f64> = sampled.iter().map(|&i| r[i]).collect();
            let full = dr_estimate(&observed, &sampled, c, k).unwrap();
            let r0 = vec![observed.iter().sum::<f64>() / m as f64; k];
            let g = linearized_gradient(state.decision(), &full, &r0).unwrap();
            let p = state.step(&g).unwrap();
            assert_on_simplex(p.as_slice());
            let sub = normalize_subset(&p, &sampled).unwrap();
            assert_on_simplex(sub.as_slice());
            prop_assert_eq!(sub.len(), sampled.len());
        }
    }

    #[test]
    fn baselines_stay_on_simplex(
        losses in prop::collection::vec(1e-3f64..20.0, 2..12),
        q in 0.0f64..60.0,
        method in prop::sample::select(vec![
            BaselineMethod::FedAvg, BaselineMethod::QFedAvg, BaselineMethod::Term, BaselineMethod::PropFair,
        ]),
    ) {
        let params = BaselineParams {
            method,
            q,
            lambda: 1.0,
            m: 25.0,
            sample_sizes: (0..losses.len()).map(|i| 10 + 7 * i).collect(),
        };
        let p = params.decide(&losses).unwrap();
        assert_on_simplex(p.as_slice());
    }

    #[test]
    fn normalize_subset_preserves_ratios(
        w in prop::collection::vec(0.01f64..1.0, 3..10),
        pick in prop::collection::vec(any::<bool>(), 10),
    ) {
        let p = SimplexVector::from_weights(&w).unwrap();
        let subset: Vec<usize> = (0..w.len()).filter(|&i| pick[i]).collect();
        prop_assume!(!subset.is_empty());
        let q = normalize_subset(&p, &subset).unwrap();
        let mass: f64 = subset.iter().map(|&i| p.as_slice()[i]).sum();
        prop_assert_eq!(q.len(), subset.len());
        for (j, &i) in subset.iter().enumerate() {
            prop_assert!((q.as_slice()[j] - p.as_slice()[i] / mass).abs() <= 1e-12);
        }
    }
}

#[test]
fn federation_round_invariants() {
    for (method, setting, c) in [
        (Method::AaggffS, Setting::CrossSilo, 1.0),
        (Method::AaggffD, Setting::CrossDevice, 0.3),
        (Method::Term, Setting::CrossDevice, 0.5),
        (Method::PropFair, Setting::CrossSilo, 1.0),
    ] {
        let mut cfg = FederationConfig::new(10, 6, method, setting);
        cfg.c = c;
        cfg.seed = 9;
        let out = run(&cfg).unwrap();
        assert_eq!(out.records.len(), 6);
        for r in &out.records {
            assert_eq!(r.sampled.len(), cfg.clients_per_round());
            assert!(r.sampled.windows(2).all(|w| w[0] < w[1]));
            assert_eq!(r.losses.len(), r.sampled.len());
            assert_eq!(r.weights.len(), r.sampled.len());
            assert!((r.weights.iter().sum::<f64>() - 1.0).abs() <= SIMPLEX_TOL);
            assert_on_simplex(&r.decision);
            assert_on_simplex(&r.played);
            let range = cfg.response_range().unwrap();
            assert!(r.responses.iter().all(|&x| range.contains(x)));
        }
        assert_eq!(out.evaluation.accuracy.len(), 10);
    }
}
