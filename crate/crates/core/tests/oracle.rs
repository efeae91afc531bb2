use horizon_limit::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn lq1() -> ControlProblem {
    instantiate_problem("LQ1", &Params::new()).unwrap()
}

#[test]
fn states_follow_the_euler_recursion_exactly() {
    let p = lq1();
    let t = transcribe(&p, &[1.0], 2.0, 100, &OracleConfig::default()).unwrap();
    for k in 0..t.steps {
        assert_eq!(t.states[k + 1][0], t.states[k][0] + t.dt * t.controls[k][0]);
    }
    assert_eq!(t.multipliers[t.steps], vec![0.0]);
}

#[test]
fn abn1_optimum_is_zero_control() {
    let p = instantiate_problem("ABN1", &Params::new()).unwrap();
    let t = transcribe(&p, &[0.0], 5.0, 500, &OracleConfig::default()).unwrap();
    assert_eq!(t.value, 0.0);
    assert!(t.controls.iter().all(|u| u[0] == 0.0));
}

#[test]
fn zero_running_cost_leaves_initial_cost_and_zero_multipliers() {
    let p = ControlProblem::builder("flat", 1, 1)
        .dynamics(|x, u, f| f[0] = x[0] + u[0], |_, _, j| j[0] = 1.0)
        .running_cost(|_, _| 0.0, |_, _, g| g[0] = 0.0)
        .initial_cost(|x| 3.0 * x[0], |_, g| g[0] = 3.0)
        .control_set(ControlSet::interval(-1.0, 1.0))
        .build()
        .unwrap();
    let t = transcribe(&p, &[2.0], 1.0, 50, &OracleConfig::default()).unwrap();
    assert_eq!(t.value, 6.0);
    assert!(t.multipliers.iter().all(|m| m[0] == 0.0));
}

#[test]
fn single_control_perturbations_do_not_improve() {
    let p = lq1();
    let t = transcribe(&p, &[1.0], 4.0, 200, &OracleConfig::default()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for _ in 0..50 {
        let k = rng.gen_range(0..t.steps);
        for du in [-1e-3, 1e-3] {
            let mut controls = t.controls.clone();
            controls[k][0] += du;
            let (v, _) = oracle::discrete_value(&p, &[1.0], 4.0, &controls);
            assert!(v >= t.value - 1e-15, "k={k} du={du}: {v} < {}", t.value);
        }
    }
}

#[test]
fn multiplier_gap_is_first_order() {
    let p = lq1();
    let cfg = OracleConfig::default();
    let p0 = |n| transcribe(&p, &[1.0], 8.0, n, &cfg).unwrap().multipliers[0][0];
    let (a, b, c) = (p0(200), p0(400), p0(800));
    let ratio = (a - b) / (b - c);
    assert!((1.8..2.2).contains(&ratio), "ratio {ratio}");
}

#[test]
fn finite_control_sets_are_searched_exhaustively() {
    let p = ControlProblem::builder("bang", 1, 1)
        .dynamics(|_, u, f| f[0] = u[0], |_, _, j| j[0] = 0.0)
        .running_cost(|x, _| x[0], |_, _, g| g[0] = 1.0)
        .discount(1.0)
        .control_set(ControlSet::FiniteSet {
            points: vec![vec![-1.0], vec![0.0], vec![1.0]],
        })
        .build()
        .unwrap();
    let t = transcribe(&p, &[0.0], 1.0, 20, &OracleConfig::default()).unwrap();
    assert!(t.controls[..19].iter().all(|u| u[0] == -1.0));
}

#[test]
fn oversized_problems_are_rejected() {
    let err = transcribe(
        &lq1(),
        &[1.0],
        1.0,
        oracle::MAX_DECISION_SCALARS + 1,
        &OracleConfig::default(),
    )
    .unwrap_err();
    assert!(matches!(err, Error::InvalidParameter { .. }));
}

#[test]
fn restarts_are_reproducible() {
    let p = lq1();
    let cfg = OracleConfig {
        restarts: 2,
        seed: 7,
        ..OracleConfig::default()
    };
    let a = transcribe(&p, &[1.0], 2.0, 40, &cfg).unwrap();
    let b = transcribe(&p, &[1.0], 2.0, 40, &cfg).unwrap();
    assert_eq!(a, b);
}
