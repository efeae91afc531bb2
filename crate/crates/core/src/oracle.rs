//! Brute-force finite-horizon reference: explicit-Euler transcription
//! optimized by projected coordinate descent, with the matching discrete
//! adjoint.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::problem::{ControlProblem, ControlSet};

/// Largest `N·m·k` accepted by [`transcribe`].
pub const MAX_DECISION_SCALARS: usize = 100_000;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleConfig {
    pub max_sweeps: usize,
    /// A sweep improving the value by less than this ends the descent.
    pub sweep_tol: f64,
    /// Finite-difference step for the coordinate directions.
    pub fd_step: f64,
    pub seed: u64,
    /// Extra descents from random starting controls; the best is kept.
    pub restarts: usize,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            max_sweeps: 2000,
            sweep_tol: 1e-14,
            fd_step: 1e-4,
            seed: 0,
            restarts: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum OracleStatus {
    Converged,
    MaxIters,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Transcription {
    pub horizon: f64,
    pub steps: usize,
    pub dt: f64,
    /// `l(b) + Σ Δt e^{−r t_k} f0(x_k, u_k)`.
    pub value: f64,
    /// `u_k` on `(t_k, t_{k+1}]`, `k < N`.
    pub controls: Vec<Vec<f64>>,
    /// `x_0 … x_N`.
    pub states: Vec<Vec<f64>>,
    /// `p_0 … p_N`.
    pub multipliers: Vec<Vec<f64>>,
    pub status: OracleStatus,
    pub sweeps: usize,
}

impl Transcription {
    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.dt
    }
}

/// Euler states and discrete payoff for given controls.
pub fn discrete_value(
    problem: &ControlProblem,
    b: &[f64],
    horizon: f64,
    controls: &[Vec<f64>],
) -> (f64, Vec<Vec<f64>>) {
    let n = controls.len();
    let dt = horizon / n as f64;
    let r = problem.discount();
    let m = problem.state_dim();
    let mut states = Vec::with_capacity(n + 1);
    let mut x = b.to_vec();
    let mut f = vec![0.0; m];
    let mut cost = problem.initial_cost(b);
    states.push(x.clone());
    for (k, u) in controls.iter().enumerate() {
        let t = k as f64 * dt;
        cost += dt * (-r * t).exp() * problem.running_cost(&x, u);
        problem.dynamics(&x, u, &mut f);
        for i in 0..m {
            x[i] += dt * f[i];
        }
        states.push(x.clone());
    }
    (cost, states)
}

/// Reusable evaluator of the payoff from step `k` on with `u_k` replaced.
struct Suffix<'a> {
    problem: &'a ControlProblem,
    dt: f64,
    x: Vec<f64>,
    f: Vec<f64>,
    weights: Vec<f64>,
}

impl<'a> Suffix<'a> {
    fn new(problem: &'a ControlProblem, n: usize, dt: f64) -> Self {
        let r = problem.discount();
        Self {
            problem,
            dt,
            x: vec![0.0; problem.state_dim()],
            f: vec![0.0; problem.state_dim()],
            weights: (0..n).map(|k| dt * (-r * k as f64 * dt).exp()).collect(),
        }
    }

    /// `Σ_{j≥k} Δt e^{−r t_j} f0(x_j, u_j)` starting from `x_k` with `u_k = uk`.
    fn cost(&mut self, k: usize, xk: &[f64], uk: &[f64], controls: &[Vec<f64>]) -> f64 {
        self.x.copy_from_slice(xk);
        let mut total = 0.0;
        for j in k..controls.len() {
            let u = if j == k { uk } else { &controls[j] };
            total += self.weights[j] * self.problem.running_cost(&self.x, u);
            if j + 1 < controls.len() {
                self.problem.dynamics(&self.x, u, &mut self.f);
                for i in 0..self.x.len() {
                    self.x[i] += self.dt * self.f[i];
                }
            }
        }
        total
    }
}

fn project(set: &ControlSet, u: &mut [f64]) {
    set.project(u);
}

/// One descent from `controls`; returns the final value, states, sweeps and
/// status.
fn descend(
    problem: &ControlProblem,
    b: &[f64],
    horizon: f64,
    controls: &mut [Vec<f64>],
    cfg: &OracleConfig,
) -> (f64, Vec<Vec<f64>>, usize, OracleStatus) {
    let n = controls.len();
    let dt = horizon / n as f64;
    let set = problem.control_set();
    let finite = match set {
        ControlSet::FiniteSet { points } => Some(points.clone()),
        _ => None,
    };
    let mut suffix = Suffix::new(problem, n, dt);
    let (mut value, mut states) = discrete_value(problem, b, horizon, controls);
    for sweep in 1..=cfg.max_sweeps {
        let start_value = value;
        for k in 0..n {
            let xk = states[k].clone();
            let mut best_u = controls[k].clone();
            let base = suffix.cost(k, &xk, &best_u, controls);
            let mut best = base;
            if let Some(points) = &finite {
                for p in points {
                    let c = suffix.cost(k, &xk, p, controls);
                    if c < best {
                        best = c;
                        best_u = p.clone();
                    }
                }
            } else {
                for j in 0..best_u.len() {
                    let h = cfg.fd_step * (1.0 + best_u[j].abs());
                    let mut probe = best_u.clone();
                    probe[j] = best_u[j] + h;
                    let up = suffix.cost(k, &xk, &probe, controls);
                    probe[j] = best_u[j] - h;
                    let down = suffix.cost(k, &xk, &probe, controls);
                    let slope = (up - down) / (2.0 * h);
                    let curv = (up - 2.0 * best + down) / (h * h);
                    let mut step = if curv > 0.0 {
                        -slope / curv
                    } else {
                        -slope.signum() * h
                    };
                    for _ in 0..30 {
                        let mut trial = best_u.clone();
                        trial[j] += step;
                        project(set, &mut trial);
                        let c = suffix.cost(k, &xk, &trial, controls);
                        if c < best {
                            best = c;
                            best_u = trial;
                            break;
                        }
                        step *= 0.5;
                        if step.abs() < 1e-15 * (1.0 + best_u[j].abs()) {
                            break;
                        }
                    }
                }
            }
            controls[k] = best_u;
            // refresh the state after step k
            let mut f = vec![0.0; problem.state_dim()];
            problem.dynamics(&states[k], &controls[k], &mut f);
            let next: Vec<f64> = states[k].iter().zip(&f).map(|(x, v)| x + dt * v).collect();
            states[k + 1] = next;
        }
        let (v, s) = discrete_value(problem, b, horizon, controls);
        value = v;
        states = s;
        if start_value - value < cfg.sweep_tol {
            return (value, states, sweep, OracleStatus::Converged);
        }
    }
    (value, states, cfg.max_sweeps, OracleStatus::MaxIters)
}

fn random_controls(set: &ControlSet, n: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    match set {
        ControlSet::Box { lower, upper, .. } => (0..n)
            .map(|_| {
                lower
                    .iter()
                    .zip(upper)
                    .map(|(l, h)| {
                        // keep huge boxes to a sane starting range
                        let (l, h) = (l.max(-1.0), h.min(1.0).max(l.max(-1.0)));
                        if h > l {
                            rng.gen_range(l..=h)
                        } else {
                            l
                        }
                    })
                    .collect()
            })
            .collect(),
        ControlSet::FiniteSet { points } => (0..n)
            .map(|_| points[rng.gen_range(0..points.len())].clone())
            .collect(),
    }
}

/// Minimizes the Euler-discretized payoff over piecewise-constant controls
/// on `N` steps of `[0, T]`. The first descent starts from the projection of
/// `0` onto `U`; `restarts` further descents start from seeded random
/// controls.
pub fn transcribe(
    problem: &ControlProblem,
    b: &[f64],
    horizon: f64,
    steps: usize,
    cfg: &OracleConfig,
) -> Result<Transcription> {
    let (m, k) = (problem.state_dim(), problem.control_dim());
    if b.len() != m {
        return Err(Error::Dimension {
            what: "initial state",
            expected: m,
            got: b.len(),
        });
    }
    if !(horizon > 0.0) {
        return Err(Error::param("T", "horizon must be positive"));
    }
    if steps == 0 {
        return Err(Error::param("N", "need at least one step"));
    }
    if steps * m * k > MAX_DECISION_SCALARS {
        return Err(Error::param(
            "N",
            format!(
                "{} decision scalars exceed {MAX_DECISION_SCALARS}",
                steps * m * k
            ),
        ));
    }
    let set = problem.control_set();
    let mut start = vec![0.0; k];
    if let ControlSet::FiniteSet { points } = set {
        if points.is_empty() {
            return Err(Error::EmptySampler);
        }
    }
    project(set, &mut start);

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut best: Option<(f64, Vec<Vec<f64>>, Vec<Vec<f64>>, usize, OracleStatus)> = None;
    for attempt in 0..=cfg.restarts {
        let mut controls = if attempt == 0 {
            vec![start.clone(); steps]
        } else {
            random_controls(set, steps, &mut rng)
        };
        let (value, states, sweeps, status) = descend(problem, b, horizon, &mut controls, cfg);
        if best.as_ref().map_or(true, |b| value < b.0) {
            best = Some((value, controls, states, sweeps, status));
        }
    }
    let (value, controls, states, sweeps, status) = best.expect("at least one descent");
    let mut t = Transcription {
        horizon,
        steps,
        dt: horizon / steps as f64,
        value,
        controls,
        states,
        multipliers: Vec::new(),
        status,
        sweeps,
    };
    t.multipliers = discrete_adjoint(problem, &t);
    Ok(t)
}

/// `p_N = 0`, `p_k = p_{k+1} + Δt (p_{k+1} ∂f/∂x − e^{−r t_k} ∂f0/∂x)` at
/// `(x_k, u_k)`.
pub fn discrete_adjoint(problem: &ControlProblem, t: &Transcription) -> Vec<Vec<f64>> {
    let m = problem.state_dim();
    let r = problem.discount();
    let n = t.steps;
    let mut jac = vec![0.0; m * m];
    let mut grad = vec![0.0; m];
    let mut p = vec![vec![0.0; m]; n + 1];
    for k in (0..n).rev() {
        let (x, u) = (&t.states[k], &t.controls[k]);
        problem.dynamics_jac(x, u, &mut jac);
        problem.running_cost_grad(x, u, &mut grad);
        let w = (-r * t.time(k)).exp();
        for j in 0..m {
            let mut s = 0.0;
            for i in 0..m {
                s += p[k + 1][i] * jac[i * m + j];
            }
            p[k][j] = p[k + 1][j] + t.dt * (s - w * grad[j]);
        }
    }
    p
}
