use horizon_limit::*;

fn run(id: &str) -> VerificationReport {
    let e = catalog_entry(id, &Params::new()).unwrap();
    let c = candidate_process(&e.problem, &e.policy, &e.b, &CandidateConfig::default()).unwrap();
    let cfg = CostateConfig::default();
    let hs = horizon_costates(&e.problem, &c, &HorizonSequence::default(), &cfg).unwrap();
    let lim = costate::limit_of(&e.problem, &c, &hs, &cfg).unwrap();
    verify::verify(
        &e.problem,
        &c,
        &hs,
        &lim,
        e.value_model.as_ref(),
        &VerifyConfig::default(),
        &TailConfig::default(),
    )
    .unwrap()
}

#[test]
fn every_catalog_problem_verifies() {
    for id in CatalogId::BUILT_IN {
        let report = run(id.as_str());
        let failing: Vec<_> = report
            .checks
            .iter()
            .filter(|c| !matches!(c.status, CheckStatus::Pass | CheckStatus::NotApplicable))
            .map(|c| format!("{} {}", c.id, c.status))
            .collect();
        assert!(report.all_passed(), "{}: {failing:?}", id.as_str());
    }
}

#[test]
fn applicability_follows_the_problem() {
    let abn = run("ABN1");
    assert!(abn.abnormal);
    assert_eq!(abn.check("abnormal").unwrap().status, CheckStatus::Pass);
    assert_eq!(
        abn.check("r_zero").unwrap().status,
        CheckStatus::NotApplicable
    );
    let lq0 = run("LQ0");
    assert_eq!(lq0.check("r_zero").unwrap().status, CheckStatus::Pass);
    assert_eq!(lq0.check("shadow_price").unwrap().status, CheckStatus::Pass);
    assert_eq!(
        run("CONST1").check("hartwick").unwrap().status,
        CheckStatus::Pass
    );
}

#[test]
fn report_serializes_every_check() {
    let report = run("LQ1");
    let json: serde_json::Value = serde_json::from_str(&report.to_json()).unwrap();
    let ids: Vec<&str> = json["checks"]
        .as_array()
        .unwrap()
        .iter()
        .map(|c| c["id"].as_str().unwrap())
        .collect();
    assert_eq!(ids, verify::CHECK_IDS);
    assert_eq!(json["lambda_star"], 1.0);
}

#[test]
fn disabled_checks_are_skipped() {
    let e = catalog_entry("LQ1", &Params::new()).unwrap();
    let c = candidate_process(&e.problem, &e.policy, &e.b, &CandidateConfig::default()).unwrap();
    let cfg = CostateConfig::default();
    let hs = horizon_costates(&e.problem, &c, &HorizonSequence::default(), &cfg).unwrap();
    let lim = costate::limit_of(&e.problem, &c, &hs, &cfg).unwrap();
    let vcfg = VerifyConfig {
        enabled: vec!["michel".into()],
        ..VerifyConfig::default()
    };
    let report = verify::verify(
        &e.problem,
        &c,
        &hs,
        &lim,
        None,
        &vcfg,
        &TailConfig::default(),
    )
    .unwrap();
    assert_eq!(report.checks.len(), 1);
    assert_eq!(report.checks[0].id, "michel");
}

#[test]
fn wrong_costate_fails_the_maximum_condition() {
    let e = catalog_entry("LQ1", &Params::new()).unwrap();
    let c = candidate_process(&e.problem, &e.policy, &e.b, &CandidateConfig::default()).unwrap();
    let lim =
        limiting_from_initial(&e.problem, &c, 1.0, vec![-1.0], &CostateConfig::default()).unwrap();
    let grid = verify::uniform_grid(0.0, 5.0, 11);
    let chk = check_maximum_condition(&e.problem, &c, &lim, &grid, 1e-6).unwrap();
    assert_eq!(chk.status, CheckStatus::Fail);
    assert!(chk.location.is_some());
}
