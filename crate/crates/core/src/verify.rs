//! Necessary-condition checks on a limiting solution and the report that
//! collects them.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde::Serialize;
use serde_json::{json, Value};

use crate::candidate::CandidateProcess;
use crate::costate::{hamiltonian_trace, norm, HorizonCostate, HorizonRow, LimitingSolution};
use crate::error::{Error, Result};
use crate::integrate::{tail_payoff, TailConfig};
use crate::problem::{ControlProblem, InitialSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CheckStatus {
    Pass,
    Fail,
    NotApplicable,
    Uncertified,
}

impl fmt::Display for CheckStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CheckStatus::Pass => "pass",
            CheckStatus::Fail => "fail",
            CheckStatus::NotApplicable => "not-applicable",
            CheckStatus::Uncertified => "uncertified",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub id: String,
    pub status: CheckStatus,
    pub worst_residual: f64,
    pub tolerance: f64,
    /// Time (or coordinate) of the worst residual.
    pub location: Option<f64>,
    pub details: BTreeMap<String, Value>,
}

impl CheckResult {
    fn new(id: &str, tolerance: f64) -> Self {
        Self {
            id: id.to_string(),
            status: CheckStatus::Pass,
            worst_residual: 0.0,
            tolerance,
            location: None,
            details: BTreeMap::new(),
        }
    }

    fn not_applicable(id: &str, tolerance: f64, why: &str) -> Self {
        let mut c = Self::new(id, tolerance);
        c.status = CheckStatus::NotApplicable;
        c.note("reason", why);
        c
    }

    fn uncertified(id: &str, tolerance: f64, why: &str) -> Self {
        let mut c = Self::new(id, tolerance);
        c.status = CheckStatus::Uncertified;
        c.worst_residual = f64::NAN;
        c.note("reason", why);
        c
    }

    fn note(&mut self, key: &str, value: impl Into<Value>) {
        self.details.insert(key.to_string(), value.into());
    }

    /// Sets the verdict from the residual.
    fn settle(mut self) -> Self {
        self.status = if self.worst_residual <= self.tolerance {
            CheckStatus::Pass
        } else {
            CheckStatus::Fail
        };
        self
    }

    pub fn passed(&self) -> bool {
        self.status == CheckStatus::Pass
    }
}

/// Running maximum with its location.
#[derive(Default)]
struct Worst {
    value: f64,
    at: Option<f64>,
}

impl Worst {
    fn push(&mut self, v: f64, at: f64) {
        if self.value.is_nan() {
            return;
        }
        if self.at.is_none() || !(v <= self.value) {
            self.value = v;
            self.at = Some(at);
        }
    }
}

/// `V^∞` with its Hamiltonian offset `H^∞` on a box domain.
#[derive(Clone)]
pub struct ValueFunctionModel {
    pub value: Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>,
    pub h_infty: f64,
    pub domain: (Vec<f64>, Vec<f64>),
}

impl fmt::Debug for ValueFunctionModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ValueFunctionModel")
            .field("h_infty", &self.h_infty)
            .field("domain", &self.domain)
            .finish()
    }
}

impl ValueFunctionModel {
    /// Central-difference gradient with `h = 1e-5·(1 + |b_i|)`.
    pub fn gradient(&self, b: &[f64]) -> Vec<f64> {
        let mut probe = b.to_vec();
        (0..b.len())
            .map(|i| {
                let h = 1e-5 * (1.0 + b[i].abs());
                probe[i] = b[i] + h;
                let up = (self.value)(&probe);
                probe[i] = b[i] - h;
                let down = (self.value)(&probe);
                probe[i] = b[i];
                (up - down) / (2.0 * h)
            })
            .collect()
    }

    pub fn contains(&self, b: &[f64]) -> bool {
        let (lo, hi) = &self.domain;
        b.len() == lo.len()
            && b.iter()
                .zip(lo.iter().zip(hi))
                .all(|(v, (l, h))| *l <= *v && *v <= *h)
    }
}

fn require_converged(id: &str, tol: f64, limiting: &LimitingSolution) -> Option<CheckResult> {
    (!limiting.converged)
        .then(|| CheckResult::uncertified(id, tol, "limiting solution did not converge"))
}

struct Along {
    x: Vec<f64>,
    u: Vec<f64>,
    psi: Vec<f64>,
    f: Vec<f64>,
    f0: f64,
}

fn along(
    problem: &ControlProblem,
    candidate: &CandidateProcess,
    limiting: &LimitingSolution,
    t: f64,
) -> Along {
    let x = candidate.state_at(t);
    let u = candidate.control_at(t);
    let psi = limiting.psi_at(t);
    let mut f = vec![0.0; problem.state_dim()];
    problem.dynamics(&x, &u, &mut f);
    let f0 = problem.running_cost(&x, &u);
    Along { x, u, psi, f, f0 }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Pointwise maximum condition: no sampled control beats `u*(t)` in `H`.
/// The residual at `t` is `max_u' H(u') − H(u*)` divided by `1 + ‖ψ*(t)‖`.
pub fn check_maximum_condition(
    problem: &ControlProblem,
    candidate: &CandidateProcess,
    limiting: &LimitingSolution,
    grid: &[f64],
    tol: f64,
) -> Result<CheckResult> {
    const ID: &str = "maximum";
    let samples = problem.control_set().samples();
    if samples.is_empty() {
        return Err(Error::EmptySampler);
    }
    if let Some(c) = require_converged(ID, tol, limiting) {
        return Ok(c);
    }
    let lambda = limiting.lambda_star;
    let mut worst = Worst::default();
    for &t in grid {
        let a = along(problem, candidate, limiting, t);
        let own = problem.hamiltonian(&a.x, &a.u, &a.psi, lambda, t);
        let best = samples
            .iter()
            .map(|u| problem.hamiltonian(&a.x, u, &a.psi, lambda, t))
            .fold(own, f64::max);
        worst.push((best - own) / (1.0 + norm(&a.psi)), t);
    }
    let mut c = CheckResult::new(ID, tol);
    c.worst_residual = worst.value;
    c.location = worst.at;
    c.note("samples", samples.len() + 1);
    Ok(c.settle())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MichelConfig {
    /// Times `T` at which `−H*[T] = λ* r ∫_T^∞ e^{−rt} f0` is tested.
    pub grid: Vec<f64>,
    pub horizon: f64,
    /// Time at which `H*` must have vanished; defaults to `horizon / 2`.
    pub vanish_time: Option<f64>,
}

impl Default for MichelConfig {
    fn default() -> Self {
        Self {
            grid: vec![0.0, 1.0, 2.0, 5.0],
            horizon: 40.0,
            vanish_time: None,
        }
    }
}

impl MichelConfig {
    pub fn vanish_time(&self) -> f64 {
        self.vanish_time.unwrap_or(0.5 * self.horizon)
    }
}

/// Stationarity `H*[T] = −λ* r ∫_T^∞ e^{−rt} f0 dt` on the grid and
/// `H*[T] → 0` at the vanishing time. Tail remainder bounds are added to the
/// tolerance; heuristic bounds that are not negligible make the result
/// uncertified.
pub fn check_michel(
    problem: &ControlProblem,
    candidate: &CandidateProcess,
    limiting: &LimitingSolution,
    cfg: &MichelConfig,
    tail: &TailConfig,
    tol: f64,
) -> Result<CheckResult> {
    const ID: &str = "michel";
    if let Some(c) = require_converged(ID, tol, limiting) {
        return Ok(c);
    }
    let vanish = cfg.vanish_time();
    let mut grid = cfg.grid.clone();
    grid.push(vanish);
    let trace = hamiltonian_trace(problem, candidate, limiting, &grid, cfg.horizon, tail)?;
    let (stationarity, last) = trace.rows.split_at(cfg.grid.len());
    let last = &last[0];

    let mut worst = Worst::default();
    let mut heuristic_remainder: f64 = 0.0;
    for row in stationarity {
        worst.push((row.residual - row.remainder).max(0.0), row.t);
        heuristic_remainder = heuristic_remainder.max(row.remainder);
    }
    worst.push((last.h_direct.abs() - last.remainder).max(0.0), last.t);
    heuristic_remainder = heuristic_remainder.max(last.remainder);

    let mut c = CheckResult::new(ID, tol);
    c.worst_residual = worst.value;
    c.location = worst.at;
    c.note("horizon", cfg.horizon);
    c.note("vanish_time", vanish);
    c.note("H_direct_at_vanish_time", last.h_direct);
    c.note(
        "rows",
        json!(stationarity
            .iter()
            .map(|r| json!({"T": r.t, "H_direct": r.h_direct, "H_michel": r.h_michel, "remainder": r.remainder}))
            .collect::<Vec<_>>()),
    );
    let c = c.settle();
    if trace.heuristic && heuristic_remainder > 0.01 * tol {
        let mut u = CheckResult::uncertified(ID, tol, "tail remainder is an extrapolated estimate");
        u.worst_residual = c.worst_residual;
        u.location = c.location;
        u.details.extend(c.details);
        u.note("remainder_estimate", heuristic_remainder);
        return Ok(u);
    }
    Ok(c)
}

/// Distance from `v` to the limiting normal cone of `C` at `b`.
fn normal_cone_distance(set: &InitialSet, b: &[f64], v: &[f64]) -> Result<(f64, &'static str)> {
    match set {
        InitialSet::FreeSpace => Ok((norm(v), "normal cone is {0}")),
        InitialSet::Singleton { .. } => Ok((0.0, "normal cone is full space")),
        InitialSet::Box { lower, upper } => {
            let mut d2 = 0.0;
            for i in 0..b.len() {
                let scale = 1e-9 * (1.0 + b[i].abs());
                let at_lo = (b[i] - lower[i]).abs() <= scale;
                let at_hi = (upper[i] - b[i]).abs() <= scale;
                let excess = match (at_lo, at_hi) {
                    (true, true) => 0.0,
                    (true, false) => v[i].max(0.0),
                    (false, true) => (-v[i]).max(0.0),
                    (false, false) => v[i].abs(),
                };
                d2 += excess * excess;
            }
            Ok((d2.sqrt(), "box normal cone"))
        }
    }
}

/// `ψ*(0) ∈ λ* ∇l(b*) + N_C(b*)`.
pub fn check_transversality_zero(
    problem: &ControlProblem,
    candidate: &CandidateProcess,
    limiting: &LimitingSolution,
    tol: f64,
) -> Result<CheckResult> {
    const ID: &str = "transversality_zero";
    let b = candidate.initial_point();
    let grad = problem.initial_cost_grad(b);
    let v: Vec<f64> = limiting
        .psi0_star
        .iter()
        .zip(&grad)
        .map(|(p, g)| p - limiting.lambda_star * g)
        .collect();
    let (dist, cone) = normal_cone_distance(problem.initial_set(), b, &v)?;
    let mut c = CheckResult::new(ID, tol);
    c.worst_residual = dist;
    c.location = Some(0.0);
    c.note("normal_cone", cone);
    c.note("initial_set", problem.initial_set().name());
    Ok(c.settle())
}

fn i_norm_unbounded(rows: &[HorizonRow]) -> bool {
    rows.windows(2).all(|w| w[1].i_norm > w[0].i_norm)
}

/// For `λ* = 0`: `ψ*(0) ≠ 0`, `‖I‖` grows along the horizons, and both
/// `H*` and `ψ*f` vanish on the grid.
pub fn check_abnormal(
    problem: &ControlProblem,
    candidate: &CandidateProcess,
    limiting: &LimitingSolution,
    grid: &[f64],
    tol: f64,
) -> Result<CheckResult> {
    const ID: &str = "abnormal";
    if limiting.lambda_star != 0.0 {
        return Ok(CheckResult::not_applicable(ID, tol, "lambda_star = 1"));
    }
    let mut worst = Worst::default();
    for &t in grid {
        let a = along(problem, candidate, limiting, t);
        let h = problem.hamiltonian(&a.x, &a.u, &a.psi, 0.0, t);
        worst.push(h.abs().max(dot(&a.psi, &a.f).abs()), t);
    }
    let mut c = CheckResult::new(ID, tol);
    c.worst_residual = worst.value;
    c.location = worst.at;
    let psi0 = norm(&limiting.psi0_star);
    let growing = i_norm_unbounded(&limiting.horizon_diagnostics);
    c.note("psi0_norm", psi0);
    c.note("I_norm_increasing", growing);
    let mut c = c.settle();
    if !(psi0 > tol) || !growing {
        c.status = CheckStatus::Fail;
        c.worst_residual = f64::INFINITY;
        c.note(
            "reason",
            if !(psi0 > tol) {
                "psi*(0) vanishes: trivial multiplier"
            } else {
                "I_norm is not increasing across horizons"
            },
        );
    }
    Ok(c)
}

/// With `r = 0`: `H* ≡ 0` and `ψ*f = λ* f0` along the candidate.
pub fn check_r_zero(
    problem: &ControlProblem,
    candidate: &CandidateProcess,
    limiting: &LimitingSolution,
    grid: &[f64],
    tol: f64,
) -> Result<CheckResult> {
    const ID: &str = "r_zero";
    if problem.discount() > 0.0 {
        return Ok(CheckResult::not_applicable(ID, tol, "r > 0"));
    }
    if let Some(c) = require_converged(ID, tol, limiting) {
        return Ok(c);
    }
    let lambda = limiting.lambda_star;
    let mut worst = Worst::default();
    let (mut worst_h, mut worst_balance) = (0.0f64, 0.0f64);
    for &t in grid {
        let a = along(problem, candidate, limiting, t);
        let h = problem.hamiltonian(&a.x, &a.u, &a.psi, lambda, t).abs();
        let balance = (dot(&a.psi, &a.f) - lambda * a.f0).abs();
        worst_h = worst_h.max(h);
        worst_balance = worst_balance.max(balance);
        worst.push(h.max(balance), t);
    }
    let mut c = CheckResult::new(ID, tol);
    c.worst_residual = worst.value;
    c.location = worst.at;
    c.note("max_abs_H", worst_h);
    c.note("max_abs_psi_f_minus_lambda_f0", worst_balance);
    Ok(c.settle())
}

fn stdev(v: &[f64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    (v.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n).sqrt()
}

/// Constancy threshold relative to the check tolerance.
pub const HARTWICK_CONSTANCY_FACTOR: f64 = 10.0;

/// If `f0` is constant along the candidate then `ψ*f ≡ 0`.
pub fn check_hartwick(
    problem: &ControlProblem,
    candidate: &CandidateProcess,
    limiting: &LimitingSolution,
    grid: &[f64],
    tol: f64,
) -> Result<CheckResult> {
    const ID: &str = "hartwick";
    let costs: Vec<f64> = grid
        .iter()
        .map(|&t| candidate.running_cost_at(problem, t))
        .collect();
    let spread = stdev(&costs);
    if !(spread <= HARTWICK_CONSTANCY_FACTOR * tol) {
        let mut c = CheckResult::not_applicable(
            ID,
            tol,
            "running cost is not constant along the candidate",
        );
        c.note("f0_stdev", spread);
        return Ok(c);
    }
    if let Some(c) = require_converged(ID, tol, limiting) {
        return Ok(c);
    }
    let mut worst = Worst::default();
    for &t in grid {
        let a = along(problem, candidate, limiting, t);
        worst.push(dot(&a.psi, &a.f).abs(), t);
    }
    let mut c = CheckResult::new(ID, tol);
    c.worst_residual = worst.value;
    c.location = worst.at;
    c.note("f0_stdev", spread);
    Ok(c.settle())
}

/// With `r = 0` and a value model: `ψ*(0) = −∇V^∞(b*)`,
/// `ψ*f = f0 + H^∞` along the candidate and `λ* = 1`.
pub fn check_shadow_price(
    problem: &ControlProblem,
    candidate: &CandidateProcess,
    limiting: &LimitingSolution,
    model: Option<&ValueFunctionModel>,
    grid: &[f64],
    tol: f64,
) -> Result<CheckResult> {
    const ID: &str = "shadow_price";
    if problem.discount() > 0.0 {
        return Ok(CheckResult::not_applicable(ID, tol, "r > 0"));
    }
    let Some(model) = model else {
        return Ok(CheckResult::not_applicable(
            ID,
            tol,
            "no value function model",
        ));
    };
    if let Some(c) = require_converged(ID, tol, limiting) {
        return Ok(c);
    }
    let b = candidate.initial_point();
    let grad = model.gradient(b);
    let gap = norm(
        &limiting
            .psi0_star
            .iter()
            .zip(&grad)
            .map(|(p, g)| p + g)
            .collect::<Vec<_>>(),
    );
    let mut balance = Worst::default();
    for &t in grid {
        let a = along(problem, candidate, limiting, t);
        balance.push((dot(&a.psi, &a.f) - a.f0 - model.h_infty).abs(), t);
    }
    let mut c = CheckResult::new(ID, tol);
    if gap >= balance.value {
        c.worst_residual = gap;
        c.location = Some(0.0);
    } else {
        c.worst_residual = balance.value;
        c.location = balance.at;
    }
    c.note("gradient_gap", gap);
    c.note("balance_residual", balance.value);
    c.note("grad_V", grad);
    c.note("b_in_domain", model.contains(b));
    let mut c = c.settle();
    if limiting.lambda_star != 1.0 {
        c.status = CheckStatus::Fail;
        c.worst_residual = f64::INFINITY;
        c.note("reason", "shadow price needs lambda_star = 1");
    }
    Ok(c)
}

/// One `(τₙ, T)` entry of the sequence characterization.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SequenceRow {
    pub tau: f64,
    #[serde(rename = "T")]
    pub t: f64,
    pub lambda_n: f64,
    pub psi_n: Vec<f64>,
    /// `ψₙ(T)/λₙ`.
    pub psi_over_lambda: Vec<f64>,
    /// `λₙ·r·J^T(x*(T), 0; τₙ)`.
    pub lambda_r_j: f64,
    /// `r·J^T(x*(T), 0; τₙ)`, the same term in the `λ = 1` scaling.
    pub r_j: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SequenceVerdict {
    #[serde(rename = "T")]
    pub t: f64,
    /// Last consecutive difference of `ψₙ(T)/λₙ`.
    pub psi_step: f64,
    /// Distance of the last term to `ψ*(T)`.
    pub psi_gap: f64,
    pub r_j_step: f64,
    /// Distance of the last `r·J` term to `−H*[T]`.
    pub h_gap: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SequenceReport {
    pub rows: Vec<SequenceRow>,
    pub verdicts: Vec<SequenceVerdict>,
    /// Every verdict converged.
    pub conclusive: bool,
}

/// Emits `ψₙ(T)/λₙ` and `r·J^T(x*(T), 0; τₙ)` for every horizon and grid
/// time and checks that they settle on `ψ*(T)` and `−H*[T]`. Only meaningful
/// for `λ* = 1`; for abnormal limits the gaps are reported against the raw
/// `ψₙ(T)` and `λₙ r J`.
pub fn limiting_sequence_report(
    problem: &ControlProblem,
    candidate: &CandidateProcess,
    costates: &[HorizonCostate],
    limiting: &LimitingSolution,
    grid: &[f64],
    tail: &TailConfig,
    tol: f64,
) -> Result<SequenceReport> {
    let r = problem.discount();
    let lambda = limiting.lambda_star;
    let mut rows = Vec::new();
    let mut verdicts = Vec::new();
    for &t in grid {
        let mut col = Vec::new();
        for hc in costates.iter().filter(|hc| hc.tau > t) {
            let j = if r == 0.0 {
                0.0
            } else {
                tail_payoff(problem, candidate, t, hc.tau, tail)?.value
            };
            let psi_n = hc.psi_at(t);
            let psi_over_lambda = psi_n.iter().map(|v| v / hc.lambda_n).collect();
            col.push(SequenceRow {
                tau: hc.tau,
                t,
                lambda_n: hc.lambda_n,
                psi_n,
                psi_over_lambda,
                lambda_r_j: hc.lambda_n * r * j,
                r_j: r * j,
            });
        }
        if col.len() < 2 {
            return Err(Error::Horizons(format!(
                "need at least two horizons beyond T = {t} for the sequence report"
            )));
        }
        let x = candidate.state_at(t);
        let u = candidate.control_at(t);
        let psi_star = limiting.psi_at(t);
        let minus_h = -problem.hamiltonian(&x, &u, &psi_star, lambda, t);
        let seq_psi = |row: &SequenceRow| {
            if lambda == 1.0 {
                row.psi_over_lambda.clone()
            } else {
                row.psi_n.clone()
            }
        };
        let seq_h = |row: &SequenceRow| {
            if lambda == 1.0 {
                row.r_j
            } else {
                row.lambda_r_j
            }
        };
        let (a, b) = (&col[col.len() - 2], &col[col.len() - 1]);
        let diff =
            |p: &[f64], q: &[f64]| norm(&p.iter().zip(q).map(|(x, y)| x - y).collect::<Vec<_>>());
        let psi_step = diff(&seq_psi(a), &seq_psi(b));
        let psi_gap = diff(&seq_psi(b), &psi_star);
        let r_j_step = (seq_h(a) - seq_h(b)).abs();
        let h_gap = (seq_h(b) - minus_h).abs();
        verdicts.push(SequenceVerdict {
            t,
            psi_step,
            psi_gap,
            r_j_step,
            h_gap,
            converged: psi_step < tol && r_j_step < tol && psi_gap < tol && h_gap < tol,
        });
        rows.extend(col);
    }
    let conclusive = verdicts.iter().all(|v| v.converged);
    Ok(SequenceReport {
        rows,
        verdicts,
        conclusive,
    })
}

/// Which checks to run and on what grids.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyConfig {
    pub tol: f64,
    /// Grid for the pointwise checks.
    pub grid: Vec<f64>,
    pub michel: MichelConfig,
    /// Grid `T` for the sequence characterization.
    pub sequence_grid: Vec<f64>,
    /// Check ids to run; empty runs all.
    pub enabled: Vec<String>,
}

pub const CHECK_IDS: [&str; 8] = [
    "maximum",
    "michel",
    "transversality_zero",
    "abnormal",
    "r_zero",
    "hartwick",
    "shadow_price",
    "limiting_sequence",
];

/// `n` evenly spaced points on `[a, b]` (both included).
pub fn uniform_grid(a: f64, b: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![a],
        _ => (0..n)
            .map(|i| a + (b - a) * i as f64 / (n - 1) as f64)
            .collect(),
    }
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            grid: uniform_grid(0.0, 10.0, 101),
            michel: MichelConfig::default(),
            sequence_grid: vec![0.0, 0.5, 1.0, 1.5, 2.0],
            enabled: Vec::new(),
        }
    }
}

impl VerifyConfig {
    pub fn is_enabled(&self, id: &str) -> bool {
        self.enabled.is_empty() || self.enabled.iter().any(|e| e == id)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CandidateSummary {
    pub b: Vec<f64>,
    pub t_end: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerificationReport {
    pub problem: String,
    pub candidate: CandidateSummary,
    pub lambda_star: f64,
    pub psi0_star: Vec<f64>,
    pub abnormal: bool,
    pub converged: bool,
    pub checks: Vec<CheckResult>,
    pub horizons: Vec<HorizonRow>,
    pub config: Value,
}

impl VerificationReport {
    /// No enabled check failed or stayed uncertified.
    pub fn all_passed(&self) -> bool {
        self.checks
            .iter()
            .all(|c| matches!(c.status, CheckStatus::Pass | CheckStatus::NotApplicable))
    }

    pub fn check(&self, id: &str) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.id == id)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

fn sequence_check(report: &SequenceReport, tol: f64) -> CheckResult {
    let mut c = CheckResult::new("limiting_sequence", tol);
    let mut worst = Worst::default();
    for v in &report.verdicts {
        worst.push(v.psi_step.max(v.psi_gap).max(v.r_j_step).max(v.h_gap), v.t);
    }
    c.worst_residual = worst.value;
    c.location = worst.at;
    c.note(
        "verdicts",
        serde_json::to_value(&report.verdicts).unwrap_or(Value::Null),
    );
    let mut c = c.settle();
    if !report.conclusive && c.status == CheckStatus::Fail {
        c.status = CheckStatus::Uncertified;
        c.note("reason", "inconclusive: sequences have not settled");
    }
    c
}

/// Runs every enabled check in the fixed order of [`CHECK_IDS`].
pub fn verify(
    problem: &ControlProblem,
    candidate: &CandidateProcess,
    costates: &[HorizonCostate],
    limiting: &LimitingSolution,
    model: Option<&ValueFunctionModel>,
    cfg: &VerifyConfig,
    tail: &TailConfig,
) -> Result<VerificationReport> {
    let tol = cfg.tol;
    let mut checks = Vec::new();
    for id in CHECK_IDS {
        if !cfg.is_enabled(id) {
            continue;
        }
        let result = match id {
            "maximum" => check_maximum_condition(problem, candidate, limiting, &cfg.grid, tol),
            "michel" => check_michel(problem, candidate, limiting, &cfg.michel, tail, tol),
            "transversality_zero" => check_transversality_zero(problem, candidate, limiting, tol),
            "abnormal" => check_abnormal(problem, candidate, limiting, &cfg.grid, tol),
            "r_zero" => check_r_zero(problem, candidate, limiting, &cfg.grid, tol),
            "hartwick" => check_hartwick(problem, candidate, limiting, &cfg.grid, tol),
            "shadow_price" => {
                check_shadow_price(problem, candidate, limiting, model, &cfg.grid, tol)
            }
            "limiting_sequence" => {
                if costates.is_empty() {
                    Ok(CheckResult::not_applicable(
                        id,
                        tol,
                        "no horizon solutions supplied",
                    ))
                } else {
                    limiting_sequence_report(
                        problem,
                        candidate,
                        costates,
                        limiting,
                        &cfg.sequence_grid,
                        tail,
                        tol,
                    )
                    .map(|r| sequence_check(&r, tol))
                }
            }
            _ => unreachable!(),
        };
        checks.push(result.unwrap_or_else(|e| {
            let mut c = CheckResult::new(id, tol);
            c.status = CheckStatus::Fail;
            c.worst_residual = f64::INFINITY;
            c.note("error", e.to_string());
            c
        }));
    }
    Ok(VerificationReport {
        problem: problem.id().to_string(),
        candidate: CandidateSummary {
            b: candidate.initial_point().to_vec(),
            t_end: candidate.t_end(),
        },
        lambda_star: limiting.lambda_star,
        psi0_star: limiting.psi0_star.clone(),
        abnormal: limiting.abnormal,
        converged: limiting.converged,
        checks,
        horizons: limiting.horizon_diagnostics.clone(),
        config: json!({
            "tol": cfg.tol,
            "grid": {"start": cfg.grid.first(), "end": cfg.grid.last(), "points": cfg.grid.len()},
            "michel": cfg.michel,
            "sequence_grid": cfg.sequence_grid,
            "enabled": CHECK_IDS.iter().filter(|id| cfg.is_enabled(id)).collect::<Vec<_>>(),
            "ode": {"rtol": tail.ode.rtol, "atol": tail.ode.atol},
        }),
    })
}
