use demix::recover::{certify, recover, DEFAULT_CERT_TOL};
use demix::scenario::{AmplitudeDist, MessageMode, SensingMode};
use demix::{
    assemble_dual_sdp, generate_scenario, lift_ground_truth, synthesize_measurements,
    wrap_distance, AdmmSolver, DualPolynomialSet, GenConfig, LocalizeOptions, MeasurementModel,
    SolverBackend, SolverOptions,
};
use proptest::prelude::*;

#[test]
fn well_separated_single_user_is_recovered_and_certified() {
    let s = generate_scenario(&GenConfig::new(32, vec![2], vec![3]).with_seed(11)).unwrap();
    let y = synthesize_measurements(&s).unwrap();
    let model = MeasurementModel::from_scenario(&s).unwrap();
    let p = assemble_dual_sdp(&model, &y).unwrap();
    let sol = AdmmSolver.solve(&p, &SolverOptions::default(), None).unwrap();
    assert!(sol.is_optimal());

    let polys = DualPolynomialSet::from_solution(&model, &sol).unwrap();
    assert!(polys.grid_max(16) <= 1.0 + 1e-4);
    let est = polys.localize(&LocalizeOptions::default()).unwrap();
    let mut r = recover(&y, &model, &est).unwrap();
    r.evaluate(&s).unwrap();
    assert_eq!(r.misses(), 0);
    assert_eq!(r.false_alarms(), 0);
    assert!(r.max_delay_error().unwrap() <= 1e-3);
    assert!(r.mse_mean().unwrap() <= 1e-3);

    let cert = certify(&s, &y, &sol.lambda, DEFAULT_CERT_TOL).unwrap();
    assert!(cert.certified, "{cert:?}");
    assert!(cert.duality_gap <= 1e-3);
}

#[test]
fn recovered_delays_lie_on_unit_peaks() {
    let s = generate_scenario(&GenConfig::new(16, vec![1], vec![1]).with_seed(5)).unwrap();
    let y = synthesize_measurements(&s).unwrap();
    let model = MeasurementModel::from_scenario(&s).unwrap();
    let sol = AdmmSolver
        .solve(&assemble_dual_sdp(&model, &y).unwrap(), &SolverOptions::default(), None)
        .unwrap();
    let polys = DualPolynomialSet::from_solution(&model, &sol).unwrap();
    let est = polys.localize(&LocalizeOptions::default()).unwrap();
    let tau = s.channels[0].paths[0].tau;
    assert_eq!(est.total(), 1);
    let peak = est.per_user[0][0];
    assert!(wrap_distance(peak.tau, tau) <= 1e-4);
    assert!((peak.value - 1.0).abs() <= 1e-3);
}

#[test]
fn count_hint_trims_to_expected_paths() {
    let s = generate_scenario(&GenConfig::new(32, vec![2], vec![3]).with_seed(11)).unwrap();
    let y = synthesize_measurements(&s).unwrap();
    let model = MeasurementModel::from_scenario(&s).unwrap();
    let sol = AdmmSolver
        .solve(&assemble_dual_sdp(&model, &y).unwrap(), &SolverOptions::default(), None)
        .unwrap();
    let polys = DualPolynomialSet::from_solution(&model, &sol).unwrap();
    let opts = LocalizeOptions {
        threshold: 0.5,
        expected_counts: Some(vec![1]),
        ..Default::default()
    };
    assert_eq!(polys.localize(&opts).unwrap().per_user[0].len(), 1);
}

fn gen_config() -> impl Strategy<Value = GenConfig> {
    (1usize..=3, 8usize..=40, any::<u64>(), 0u8..3, any::<bool>()).prop_flat_map(
        |(k, n, seed, sensing, positive)| {
            (
                prop::collection::vec(1usize..=3, k),
                prop::collection::vec(1usize..=4, k),
            )
                .prop_map(move |(paths, msgs)| {
                    let mut g = GenConfig::new(n, paths, msgs).with_seed(seed);
                    g.min_separation = Some(0.5 / n as f64);
                    if sensing == 1 {
                        g.sensing = SensingMode::UniformSubsample(n / 2);
                    }
                    if sensing == 2 {
                        g.amplitudes = AmplitudeDist::UnitModulusRandomPhase;
                    }
                    if positive {
                        g.messages = MessageMode::UnitSpherePositive;
                    }
                    g
                })
        },
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn lifted_forward_equals_direct_synthesis(cfg in gen_config()) {
        let s = generate_scenario(&cfg).unwrap();
        let model = MeasurementModel::from_scenario(&s).unwrap();
        let lifted = model.forward(&lift_ground_truth(&s).unwrap()).unwrap();
        let direct = synthesize_measurements(&s).unwrap();
        prop_assert!((&lifted - &direct).norm() <= 1e-10 * direct.norm().max(1e-300));
    }
}
