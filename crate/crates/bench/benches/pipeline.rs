use criterion::{black_box, criterion_group, criterion_main, Criterion};
use horizon_limit::*;

fn lq1() -> (CatalogEntry, CandidateProcess) {
    let e = catalog_entry("LQ1", &Params::new()).unwrap();
    let c = candidate_process(&e.problem, &e.policy, &e.b, &CandidateConfig::default()).unwrap();
    (e, c)
}

fn costates(c: &mut Criterion) {
    let (e, cand) = lq1();
    c.bench_function("candidate_lq1_t80", |b| {
        b.iter(|| {
            candidate_process(&e.problem, &e.policy, &e.b, &CandidateConfig::default()).unwrap()
        })
    });
    c.bench_function("finite_horizon_costate_tau64", |b| {
        b.iter(|| {
            finite_horizon_costate(
                &e.problem,
                &cand,
                black_box(64.0),
                &CostateConfig::default(),
            )
            .unwrap()
        })
    });
    c.bench_function("limiting_costate_default_sequence", |b| {
        b.iter(|| {
            limiting_costate(
                &e.problem,
                &cand,
                &HorizonSequence::default(),
                &CostateConfig::default(),
            )
            .unwrap()
        })
    });
    let lim = limiting_costate(
        &e.problem,
        &cand,
        &HorizonSequence::default(),
        &CostateConfig::default(),
    )
    .unwrap();
    c.bench_function("michel_check", |b| {
        b.iter(|| {
            check_michel(
                &e.problem,
                &cand,
                &lim,
                &MichelConfig::default(),
                &TailConfig::default(),
                1e-6,
            )
            .unwrap()
        })
    });
}

fn solvers(c: &mut Criterion) {
    let (e, _) = lq1();
    let mut g = c.benchmark_group("solvers");
    g.sample_size(10);
    g.bench_function("shoot_lq1_horizon40", |b| {
        b.iter(|| {
            shoot_scalar(&e.problem, 1.0, (-3.0, 0.0), 40.0, &ShootConfig::default()).unwrap()
        })
    });
    g.bench_function("transcribe_lq1_t8_n200", |b| {
        b.iter(|| {
            transcribe(
                &e.problem,
                &[1.0],
                8.0,
                black_box(200),
                &OracleConfig::default(),
            )
            .unwrap()
        })
    });
    g.finish();
}

criterion_group!(benches, costates, solvers);
criterion_main!(benches);
