use demix::scenario::SensingMode;
use demix::{
    assemble_dual_sdp, generate_scenario, synthesize_measurements, AdmmSolver, CVector, GenConfig,
    MeasurementModel, SolveStatus, SolverBackend, SolverOptions,
};

fn setup(cfg: &GenConfig) -> (demix::Scenario, CVector, MeasurementModel) {
    let s = generate_scenario(cfg).unwrap();
    let y = synthesize_measurements(&s).unwrap();
    let model = MeasurementModel::from_scenario(&s).unwrap();
    (s, y, model)
}

#[test]
fn zero_measurements_give_zero_objective() {
    let (_, y, model) = setup(&GenConfig::new(12, vec![1, 2], vec![2, 3]).with_seed(4));
    let zero = CVector::zeros(y.len());
    let p = assemble_dual_sdp(&model, &zero).unwrap();
    let sol = AdmmSolver.solve(&p, &SolverOptions::default(), None).unwrap();
    assert_eq!(sol.status, SolveStatus::Optimal);
    assert!(sol.objective.abs() <= 1e-9, "objective {}", sol.objective);
    assert!(p.is_feasible(&sol.lambda, &sol.q, 1e-6).unwrap());
}

#[test]
fn single_path_objective_is_gain_magnitude() {
    for seed in 0..4 {
        let (s, y, model) = setup(&GenConfig::new(16, vec![1], vec![1]).with_seed(seed));
        let p = assemble_dual_sdp(&model, &y).unwrap();
        let sol = AdmmSolver.solve(&p, &SolverOptions::default(), None).unwrap();
        assert!(sol.is_optimal());
        let g = s.gain_l1();
        assert!((sol.objective - g).abs() <= 1e-4 * g, "{} vs {}", sol.objective, g);
        assert!(p.is_feasible(&sol.lambda, &sol.q, 1e-6).unwrap());
    }
}

#[test]
fn dual_objective_never_exceeds_atomic_norm_bound() {
    // weak duality: any feasible lambda gives Re<lambda, y> <= sum |g|
    let (s, y, model) = setup(&GenConfig::new(24, vec![2, 1], vec![3, 2]).with_seed(9));
    let p = assemble_dual_sdp(&model, &y).unwrap();
    let sol = AdmmSolver.solve(&p, &SolverOptions::default(), None).unwrap();
    assert!(sol.objective <= s.gain_l1() * (1.0 + 1e-5));
    let (eq, min_eig) = p.constraint_violation(&sol.lambda, &sol.q).unwrap();
    assert!(eq <= 1e-6 && min_eig >= -1e-6, "eq {eq} min_eig {min_eig}");
}

#[test]
fn solves_are_deterministic() {
    let mut cfg = GenConfig::new(20, vec![2], vec![3]).with_seed(1);
    cfg.sensing = SensingMode::UniformSubsample(15);
    let (_, y, model) = setup(&cfg);
    let p = assemble_dual_sdp(&model, &y).unwrap();
    let a = AdmmSolver.solve(&p, &SolverOptions::default(), None).unwrap();
    let b = AdmmSolver.solve(&p, &SolverOptions::default(), None).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
}

#[test]
fn warm_start_from_optimum_stops_early() {
    let (_, y, model) = setup(&GenConfig::new(16, vec![2], vec![2]).with_seed(3));
    let p = assemble_dual_sdp(&model, &y).unwrap();
    let opts = SolverOptions::default();
    let cold = AdmmSolver.solve(&p, &opts, None).unwrap();
    let warm = AdmmSolver.solve(&p, &opts, Some(&cold)).unwrap();
    assert!(warm.is_optimal());
    assert!(warm.iterations <= cold.iterations);
    assert!((warm.objective - cold.objective).abs() <= 1e-4 * cold.objective.abs());
}

#[test]
fn iteration_cap_is_reported() {
    let (_, y, model) = setup(&GenConfig::new(32, vec![3], vec![4]).with_seed(2));
    let p = assemble_dual_sdp(&model, &y).unwrap();
    let opts = SolverOptions {
        max_iters: 5,
        ..Default::default()
    };
    let sol = AdmmSolver.solve(&p, &opts, None).unwrap();
    assert_eq!(sol.status, SolveStatus::MaxIters);
    assert!(sol.iterations <= 5);
}

#[test]
fn bad_options_rejected() {
    let (_, y, model) = setup(&GenConfig::new(8, vec![1], vec![1]));
    let p = assemble_dual_sdp(&model, &y).unwrap();
    for opts in [
        SolverOptions {
            alpha: 2.0,
            ..Default::default()
        },
        SolverOptions {
            eps_abs: 0.0,
            ..Default::default()
        },
        SolverOptions {
            max_iters: 0,
            ..Default::default()
        },
    ] {
        assert!(AdmmSolver.solve(&p, &opts, None).is_err());
    }
}
