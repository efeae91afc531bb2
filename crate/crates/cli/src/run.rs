//! Orchestration of the subcommands and artifact writing.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde_json::{json, Value};

use horizon_limit::verify::uniform_grid;
use horizon_limit::{
    candidate_process, catalog_entry, costate, hamiltonian_trace, horizon_costates, io,
    shoot_scalar, transcribe, verify, CandidateConfig, CatalogEntry, CatalogId, CostateConfig,
    HorizonCostate, LimitingSolution, OracleConfig, OracleStatus, ShootConfig, TailConfig,
    VerifyConfig,
};

use crate::config::{Command, RunConfig};

/// Outcome of a command before it is mapped to an exit code.
#[derive(Debug, PartialEq, Eq)]
pub enum Outcome {
    Success,
    /// A check failed or a computation did not converge.
    Failure,
}

type BoxError = Box<dyn std::error::Error>;

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>, BoxError> {
    let path = dir.join(name);
    let f = File::create(&path).map_err(|e| format!("{}: {e}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn write_json(cfg: &RunConfig, name: &str, value: &Value) -> Result<(), BoxError> {
    if !cfg.json {
        return Ok(());
    }
    let mut w = create(&cfg.out_dir, name)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

fn setup(cfg: &RunConfig) -> Result<(CatalogEntry, horizon_limit::CandidateProcess), BoxError> {
    let entry = catalog_entry(&cfg.problem, &cfg.params)?;
    let cand = candidate_process(
        &entry.problem,
        &entry.policy,
        &entry.b,
        &CandidateConfig {
            t_end: cfg.t_end,
            ode: cfg.ode(),
        },
    )?;
    Ok((entry, cand))
}

fn costate_config(cfg: &RunConfig) -> CostateConfig {
    CostateConfig {
        ode: cfg.ode(),
        tol: cfg.check_tol,
        workers: cfg.workers,
        ..CostateConfig::default()
    }
}

fn tail_config(cfg: &RunConfig) -> TailConfig {
    TailConfig {
        ode: cfg.ode(),
        check_tol: cfg.check_tol,
    }
}

fn limiting_json(cfg: &RunConfig, lim: &LimitingSolution) -> Value {
    json!({
        "problem": cfg.problem,
        "params": cfg.params,
        "lambda_star": lim.lambda_star,
        "psi0_star": lim.psi0_star,
        "abnormal": lim.abnormal,
        "converged": lim.converged,
        "oscillating": lim.oscillating,
        "horizons": lim.horizon_diagnostics,
        "config": cfg,
    })
}

fn limit(
    cfg: &RunConfig,
    entry: &CatalogEntry,
    cand: &horizon_limit::CandidateProcess,
) -> Result<(Vec<HorizonCostate>, LimitingSolution), BoxError> {
    let ccfg = costate_config(cfg);
    let hs = horizon_costates(&entry.problem, cand, &cfg.horizon_sequence(), &ccfg)?;
    let lim = costate::limit_of(&entry.problem, cand, &hs, &ccfg)?;
    if cfg.csv {
        let mut w = create(&cfg.out_dir, "horizons.csv")?;
        io::write_horizon_diagnostics(&mut w, &lim.horizon_diagnostics)?;
    }
    write_json(cfg, "limiting.json", &limiting_json(cfg, &lim))?;
    Ok((hs, lim))
}

fn run_costate(cfg: &RunConfig) -> Result<Outcome, BoxError> {
    let (entry, cand) = setup(cfg)?;
    let (_, lim) = limit(cfg, &entry, &cand)?;
    println!(
        "{}: lambda* = {}, psi*(0) = {:?}, converged = {}",
        cfg.problem, lim.lambda_star, lim.psi0_star, lim.converged
    );
    Ok(if lim.converged {
        Outcome::Success
    } else {
        Outcome::Failure
    })
}

fn run_verify(cfg: &RunConfig) -> Result<Outcome, BoxError> {
    let (entry, cand) = setup(cfg)?;
    let (hs, lim) = limit(cfg, &entry, &cand)?;
    let vcfg = VerifyConfig {
        tol: cfg.check_tol,
        ..VerifyConfig::default()
    };
    let tail = tail_config(cfg);
    let report = verify::verify(
        &entry.problem,
        &cand,
        &hs,
        &lim,
        entry.value_model.as_ref(),
        &vcfg,
        &tail,
    )?;
    write_json(cfg, "report.json", &serde_json::to_value(&report)?)?;
    if cfg.csv {
        let horizon = vcfg.michel.horizon;
        let grid = uniform_grid(0.0, 0.5 * horizon, 81);
        let trace = hamiltonian_trace(&entry.problem, &cand, &lim, &grid, horizon, &tail)?;
        io::write_hamiltonian_trace(create(&cfg.out_dir, "hamiltonian.csv")?, &trace)?;
        io::write_costate_trace(create(&cfg.out_dir, "costate_trace.csv")?, &lim, &trace)?;
    }
    for c in &report.checks {
        println!(
            "{:<20} {:<15} {:.3e}",
            c.id,
            c.status.to_string(),
            c.worst_residual
        );
    }
    Ok(if report.all_passed() {
        Outcome::Success
    } else {
        Outcome::Failure
    })
}

fn run_shoot(cfg: &RunConfig) -> Result<Outcome, BoxError> {
    let entry = catalog_entry(&cfg.problem, &cfg.params)?;
    let bracket = cfg.bracket.ok_or("shoot needs a bracket")?;
    let scfg = ShootConfig {
        ode: cfg.ode(),
        tol: cfg.check_tol,
    };
    let res = shoot_scalar(
        &entry.problem,
        entry.b[0],
        bracket,
        cfg.shoot_horizon,
        &scfg,
    )?;
    write_json(
        cfg,
        "shoot.json",
        &json!({
            "problem": cfg.problem,
            "params": cfg.params,
            "psi0": res.psi0,
            "lambda": res.lambda,
            "b": res.b,
            "horizon": res.horizon,
            "closing_residual": res.closing_residual,
            "converged": res.converged,
            "hold_from": res.hold_from,
            "iterations": res.history.len(),
            "config": cfg,
        }),
    )?;
    if cfg.csv {
        io::write_bracket_history(create(&cfg.out_dir, "bracket.csv")?, &res.history)?;
    }
    println!(
        "{}: psi0 = {:?}, converged = {}",
        cfg.problem, res.psi0, res.converged
    );
    Ok(if res.converged {
        Outcome::Success
    } else {
        Outcome::Failure
    })
}

fn run_oracle(cfg: &RunConfig) -> Result<Outcome, BoxError> {
    let entry = catalog_entry(&cfg.problem, &cfg.params)?;
    let o = &cfg.oracle;
    let ocfg = OracleConfig {
        max_sweeps: o.max_sweeps,
        seed: o.seed,
        restarts: o.restarts,
        ..OracleConfig::default()
    };
    let t = transcribe(&entry.problem, &entry.b, o.horizon, o.steps, &ocfg)?;
    if cfg.csv {
        io::write_transcription(create(&cfg.out_dir, "transcription.csv")?, &t)?;
    }
    write_json(
        cfg,
        "oracle.json",
        &json!({
            "problem": cfg.problem,
            "params": cfg.params,
            "horizon": t.horizon,
            "steps": t.steps,
            "value": t.value,
            "p0": t.multipliers[0],
            "status": t.status,
            "sweeps": t.sweeps,
            "config": cfg,
        }),
    )?;
    println!(
        "{}: value = {:?}, p0 = {:?}, {:?}",
        cfg.problem, t.value, t.multipliers[0], t.status
    );
    Ok(if t.status == OracleStatus::Converged {
        Outcome::Success
    } else {
        Outcome::Failure
    })
}

fn run_catalog() -> Result<Outcome, BoxError> {
    for id in CatalogId::BUILT_IN {
        println!(
            "{:<7} {:<60} params: {}",
            id.as_str(),
            id.summary(),
            id.allowed_params().join(", ")
        );
    }
    Ok(Outcome::Success)
}

/// Runs the command. Module errors are written to `<command>.json` and
/// reported as [`Outcome::Failure`]; only output-directory problems are
/// returned as errors.
pub fn run(cfg: &RunConfig) -> Result<Outcome, BoxError> {
    if cfg.command == Command::Catalog {
        return run_catalog();
    }
    std::fs::create_dir_all(&cfg.out_dir).map_err(|e| format!("{}: {e}", cfg.out_dir.display()))?;
    let result = match cfg.command {
        Command::Costate => run_costate(cfg),
        Command::Verify => run_verify(cfg),
        Command::Shoot => run_shoot(cfg),
        Command::Oracle => run_oracle(cfg),
        Command::Catalog => unreachable!(),
    };
    match result {
        Ok(o) => Ok(o),
        Err(e) => {
            log::error!("{e}");
            eprintln!("error: {e}");
            let name = format!("{}.json", cfg.command.name());
            write_json(
                cfg,
                &name,
                &json!({"command": cfg.command, "problem": cfg.problem, "error": e.to_string(), "config": cfg}),
            )?;
            Ok(Outcome::Failure)
        }
    }
}
