//! Run configuration: TOML file plus command-line flags, flags winning.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use horizon_limit::{instantiate_problem, HorizonSequence, OdeOptions, Params};

pub const DEFAULT_ODE_TOL: f64 = 1e-10;
pub const DEFAULT_CHECK_TOL: f64 = 1e-6;
pub const DEFAULT_SHOOT_HORIZON: f64 = 40.0;
pub const DEFAULT_ORACLE_HORIZON: f64 = 8.0;
pub const DEFAULT_ORACLE_STEPS: usize = 800;
pub const THREADS_ENV: &str = "HORIZON_LIMIT_THREADS";

#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

fn bad(msg: impl Into<String>) -> ConfigError {
    ConfigError(msg.into())
}

#[derive(Debug, Parser)]
#[command(
    name = "horizon-limit",
    version,
    about = "Limiting co-states for discounted infinite-horizon control"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: CommandArgs,
}

#[derive(Debug, Subcommand)]
pub enum CommandArgs {
    /// Finite-horizon costates and their limit.
    Costate(CommonArgs),
    /// Costates plus the optimality checks.
    Verify(CommonArgs),
    /// Bisection on the initial costate of a one-state problem.
    Shoot {
        #[command(flatten)]
        common: CommonArgs,
        /// `lo,hi`, e.g. `--bracket=-3,0`.
        #[arg(long, allow_hyphen_values = true)]
        bracket: Option<String>,
        /// Horizon of the closing condition.
        #[arg(long)]
        horizon: Option<f64>,
    },
    /// Euler transcription solved by coordinate descent.
    Oracle {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        horizon: Option<f64>,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        restarts: Option<usize>,
    },
    /// Lists the built-in problems.
    Catalog,
}

#[derive(Debug, Args, Default)]
pub struct CommonArgs {
    /// Catalog id or path to a problem TOML file.
    #[arg(long)]
    pub problem: Option<String>,
    /// Run configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Initial state.
    #[arg(long, allow_hyphen_values = true)]
    pub b: Option<f64>,
    /// Discount rate.
    #[arg(long)]
    pub r: Option<f64>,
    /// Further problem parameters as `name=value`.
    #[arg(long = "param", value_name = "NAME=VALUE")]
    pub params: Vec<String>,
    /// Explicit horizons, e.g. `2,4,8`.
    #[arg(long)]
    pub tau: Option<String>,
    #[arg(long)]
    pub ode_tol: Option<f64>,
    #[arg(long)]
    pub check_tol: Option<f64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub no_json: bool,
    #[arg(long)]
    pub no_csv: bool,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    problem: Option<String>,
    params: Option<BTreeMap<String, f64>>,
    horizons: Option<HorizonsFile>,
    tolerances: Option<TolerancesFile>,
    candidate: Option<CandidateFile>,
    shoot: Option<ShootFile>,
    oracle: Option<OracleFile>,
    output: Option<OutputFile>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct HorizonsFile {
    tau0: Option<f64>,
    factor: Option<f64>,
    count: Option<usize>,
    explicit: Option<Vec<f64>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct TolerancesFile {
    ode: Option<f64>,
    check: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct CandidateFile {
    t_end: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ShootFile {
    bracket: Option<[f64; 2]>,
    horizon: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct OracleFile {
    horizon: Option<f64>,
    steps: Option<usize>,
    seed: Option<u64>,
    restarts: Option<usize>,
    max_sweeps: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct OutputFile {
    dir: Option<PathBuf>,
    json: Option<bool>,
    csv: Option<bool>,
}

/// A problem file: catalog id plus parameters.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProblemFile {
    id: String,
    #[serde(default)]
    params: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Costate,
    Verify,
    Shoot,
    Oracle,
    Catalog,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Costate => "costate",
            Command::Verify => "verify",
            Command::Shoot => "shoot",
            Command::Oracle => "oracle",
            Command::Catalog => "catalog",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleSettings {
    pub horizon: f64,
    pub steps: usize,
    pub seed: u64,
    pub restarts: usize,
    pub max_sweeps: usize,
}

/// Fully resolved configuration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub command: Command,
    pub problem: String,
    pub params: Params,
    pub horizons: Vec<f64>,
    pub ode_tol: f64,
    pub check_tol: f64,
    /// End of the cached candidate trajectory; defaults to
    /// `max(80, 1.25·τ_max)`.
    pub t_end: f64,
    pub bracket: Option<(f64, f64)>,
    pub shoot_horizon: f64,
    pub oracle: OracleSettings,
    pub out_dir: PathBuf,
    pub json: bool,
    pub csv: bool,
    #[serde(skip)]
    pub workers: usize,
}

impl RunConfig {
    pub fn ode(&self) -> OdeOptions {
        OdeOptions::with_tolerances(self.ode_tol, 1e-2 * self.ode_tol)
    }

    pub fn horizon_sequence(&self) -> HorizonSequence {
        HorizonSequence::explicit(self.horizons.clone()).expect("validated at parse time")
    }
}

fn parse_list(what: &str, text: &str) -> Result<Vec<f64>, ConfigError> {
    text.split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|e| bad(format!("--{what}: cannot parse {s:?}: {e}")))
        })
        .collect()
}

fn positive(name: &str, v: f64) -> Result<f64, ConfigError> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(bad(format!("tolerances positive: {name} = {v}")))
    }
}

fn read_toml<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, ConfigError> {
    let text =
        std::fs::read_to_string(path).map_err(|e| bad(format!("{}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| bad(format!("{}: {e}", path.display())))
}

/// Reads `HORIZON_LIMIT_THREADS`; unset means sequential.
pub fn workers_from_env() -> Result<usize, ConfigError> {
    match std::env::var(THREADS_ENV) {
        Ok(v) => v.trim().parse().map_err(|_| {
            bad(format!(
                "{THREADS_ENV} must be a nonnegative integer, got {v:?}"
            ))
        }),
        Err(_) => Ok(0),
    }
}

/// Merges the subcommand flags over the optional config file.
pub fn parse_config(args: CommandArgs, workers: usize) -> Result<RunConfig, ConfigError> {
    let (command, common, bracket, shoot_horizon, oracle_args) = match args {
        CommandArgs::Costate(c) => (Command::Costate, c, None, None, None),
        CommandArgs::Verify(c) => (Command::Verify, c, None, None, None),
        CommandArgs::Shoot {
            common,
            bracket,
            horizon,
        } => (Command::Shoot, common, bracket, horizon, None),
        CommandArgs::Oracle {
            common,
            horizon,
            steps,
            seed,
            restarts,
        } => (
            Command::Oracle,
            common,
            None,
            None,
            Some((horizon, steps, seed, restarts)),
        ),
        CommandArgs::Catalog => (Command::Catalog, CommonArgs::default(), None, None, None),
    };
    let file: FileConfig = match &common.config {
        Some(path) => read_toml(path)?,
        None => FileConfig::default(),
    };

    let mut params: Params = file.params.unwrap_or_default();
    let spec = common.problem.or(file.problem);
    let problem = match (&spec, command) {
        (None, Command::Catalog) => String::new(),
        (None, _) => {
            return Err(bad(
                "missing problem: pass --problem <ID|FILE> or set `problem` in --config",
            ))
        }
        (Some(p), _) if Path::new(p).is_file() => {
            let pf: ProblemFile = read_toml(Path::new(p))?;
            for (k, v) in pf.params {
                params.entry(k).or_insert(v);
            }
            pf.id
        }
        (Some(p), _) => p.clone(),
    };
    for kv in &common.params {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| bad(format!("--param expects NAME=VALUE, got {kv:?}")))?;
        let v: f64 = v
            .trim()
            .parse()
            .map_err(|e| bad(format!("--param {k}: {e}")))?;
        params.insert(k.trim().to_string(), v);
    }
    if let Some(b) = common.b {
        params.insert("b".into(), b);
    }
    if let Some(r) = common.r {
        params.insert("r".into(), r);
    }
    if command != Command::Catalog {
        instantiate_problem(&problem, &params).map_err(|e| bad(e.to_string()))?;
    }

    let hf = file.horizons.unwrap_or_default();
    let horizons = match (&common.tau, hf.explicit) {
        (Some(text), _) => parse_list("tau", text)?,
        (None, Some(v)) => v,
        (None, None) => {
            let seq = HorizonSequence::geometric(
                hf.tau0.unwrap_or(2.0),
                hf.factor.unwrap_or(2.0),
                hf.count.unwrap_or(6),
            )
            .map_err(|e| bad(e.to_string()))?;
            seq.values().to_vec()
        }
    };
    HorizonSequence::explicit(horizons.clone()).map_err(|e| bad(e.to_string()))?;

    let tf = file.tolerances.unwrap_or_default();
    let ode_tol = positive("ode", common.ode_tol.or(tf.ode).unwrap_or(DEFAULT_ODE_TOL))?;
    let check_tol = positive(
        "check",
        common.check_tol.or(tf.check).unwrap_or(DEFAULT_CHECK_TOL),
    )?;

    let tau_max = horizons.iter().copied().fold(0.0, f64::max);
    let t_end = match file.candidate.and_then(|c| c.t_end) {
        Some(t) if t >= tau_max => t,
        Some(t) => {
            return Err(bad(format!(
                "candidate.t_end = {t} is shorter than the largest horizon {tau_max}"
            )))
        }
        None => (1.25 * tau_max).max(80.0),
    };

    let sf = file.shoot.unwrap_or_default();
    let bracket = match bracket {
        Some(text) => match parse_list("bracket", &text)?.as_slice() {
            [lo, hi] => Some((*lo, *hi)),
            _ => return Err(bad("--bracket expects two numbers lo,hi")),
        },
        None => sf.bracket.map(|[lo, hi]| (lo, hi)),
    };
    if let Some((lo, hi)) = bracket {
        if !(lo < hi) {
            return Err(bad(format!("bracket needs lo < hi, got [{lo}, {hi}]")));
        }
    }
    if command == Command::Shoot && bracket.is_none() {
        return Err(bad(
            "shoot needs a bracket: --bracket=lo,hi or [shoot] bracket",
        ));
    }
    let shoot_horizon = positive(
        "shoot horizon",
        shoot_horizon
            .or(sf.horizon)
            .unwrap_or(DEFAULT_SHOOT_HORIZON),
    )?;

    let of = file.oracle.unwrap_or_default();
    let (o_h, o_n, o_seed, o_restarts) = oracle_args.unwrap_or_default();
    let oracle = OracleSettings {
        horizon: positive(
            "oracle horizon",
            o_h.or(of.horizon).unwrap_or(DEFAULT_ORACLE_HORIZON),
        )?,
        steps: o_n.or(of.steps).unwrap_or(DEFAULT_ORACLE_STEPS),
        seed: o_seed.or(of.seed).unwrap_or(0),
        restarts: o_restarts.or(of.restarts).unwrap_or(0),
        max_sweeps: of.max_sweeps.unwrap_or(2000),
    };
    if oracle.steps == 0 {
        return Err(bad("oracle steps must be positive"));
    }

    let outf = file.output.unwrap_or_default();
    Ok(RunConfig {
        command,
        problem,
        params,
        horizons,
        ode_tol,
        check_tol,
        t_end,
        bracket,
        shoot_horizon,
        oracle,
        out_dir: common
            .out
            .or(outf.dir)
            .unwrap_or_else(|| PathBuf::from("horizon-limit-out")),
        json: !common.no_json && outf.json.unwrap_or(true),
        csv: !common.no_csv && outf.csv.unwrap_or(true),
        workers,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(argv: &[&str]) -> Result<RunConfig, ConfigError> {
        let cli = Cli::try_parse_from(std::iter::once("horizon-limit").chain(argv.iter().copied()))
            .unwrap();
        parse_config(cli.command, 0)
    }

    #[test]
    fn defaults_are_applied() {
        let c = parse(&["costate", "--problem", "LQ1", "--b", "1.0"]).unwrap();
        assert_eq!(c.command, Command::Costate);
        assert_eq!(c.problem, "LQ1");
        assert_eq!(c.horizons, vec![2.0, 4.0, 8.0, 16.0, 32.0, 64.0]);
        assert_eq!(c.ode_tol, 1e-10);
        assert_eq!(c.check_tol, 1e-6);
        assert_eq!(c.t_end, 80.0);
        assert!(c.json && c.csv);
    }

    #[test]
    fn explicit_horizons_are_parsed() {
        let c = parse(&["costate", "--problem", "LQ1", "--tau", "2,4,8"]).unwrap();
        assert_eq!(c.horizons, vec![2.0, 4.0, 8.0]);
    }

    #[test]
    fn negative_bracket_ends_parse() {
        let c = parse(&["shoot", "--problem", "LQ1", "--bracket=-3,0"]).unwrap();
        assert_eq!(c.bracket, Some((-3.0, 0.0)));
    }

    #[test]
    fn missing_problem_is_a_usage_error() {
        let err = parse(&["verify"]).unwrap_err();
        assert!(err.0.contains("missing problem"), "{err}");
    }

    #[test]
    fn foreign_parameters_are_rejected() {
        assert!(parse(&["costate", "--problem", "ABN1", "--b", "1"]).is_err());
    }

    #[test]
    fn catalog_needs_no_problem() {
        assert_eq!(parse(&["catalog"]).unwrap().command, Command::Catalog);
    }
}
