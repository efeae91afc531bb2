//! Finite-horizon adjoints, their normalized limit and the Hamiltonian along
//! the candidate.
//!
//! For a horizon `τ` the adjoint `−ψ' = ψ·∂f/∂x − λ e^{−rt} ∂f0/∂x` is
//! integrated backward from `ψ(τ) = 0` with `λ = 1` along the candidate and
//! then rescaled so that `λ + ‖ψ(0)‖ = 1`. The pairs obtained for an
//! increasing sequence of horizons are followed to their limit, which is
//! renormalized to `λ* ∈ {0, 1}`.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::candidate::CandidateProcess;
use crate::error::{Error, Result};
use crate::horizons::HorizonSequence;
use crate::integrate::{
    integrate_driven, solve_fundamental, tail_payoff, FundamentalTrace, TailConfig,
};
use crate::ode::{dense_eval, OdeOptions, OdeSolution};
use crate::problem::ControlProblem;

/// Backward adjoints whose norm passes this are treated as overflowed.
const ADJOINT_OVERFLOW: f64 = 1e280;
/// Cauchy-formula evaluations are skipped above this condition estimate.
pub const CONDITION_LIMIT: f64 = 1e12;

#[derive(Debug, Clone, PartialEq)]
pub struct CostateConfig {
    pub ode: OdeOptions,
    /// Convergence tolerance of the horizon sweep and threshold below which
    /// the limiting multiplier is declared zero.
    pub tol: f64,
    /// Parallel workers for the per-horizon solves; 0 runs sequentially.
    pub workers: usize,
    /// Times at which every adjoint lands exactly (useful for sampling).
    pub sample_times: Vec<f64>,
    /// End of the forward-integrated limiting adjoint; defaults to the
    /// candidate's cached span.
    pub trace_end: Option<f64>,
}

impl Default for CostateConfig {
    fn default() -> Self {
        Self {
            ode: OdeOptions::default(),
            tol: 1e-6,
            workers: 0,
            sample_times: Vec::new(),
            trace_end: None,
        }
    }
}

#[derive(Debug, Clone)]
enum Representation {
    /// Unnormalized backward solution (`λ = 1`), divided by `scale` on read.
    Backward { solution: OdeSolution, scale: f64 },
    /// Reconstruction through `ψ(t) = λ(I(t) − I(τ))A⁻¹(t)`.
    Cauchy {
        trace: FundamentalTrace,
        i_tau: Vec<f64>,
        scale: f64,
    },
}

/// One normalized solution `(λₙ, ψₙ)` of the horizon-`τ` boundary value problem.
#[derive(Debug, Clone)]
pub struct HorizonCostate {
    pub tau: f64,
    pub lambda_n: f64,
    pub psi0: Vec<f64>,
    /// `I(b*; τ)`.
    pub i_tau: Vec<f64>,
    pub i_norm: f64,
    /// `‖ψₙ(0) + λₙ I(b*;τ)‖`.
    pub identity_residual: f64,
    /// `‖ψₙ(τ)‖`.
    pub terminal_residual: f64,
    /// The overflow-safe reconstruction was used instead of the backward pass.
    pub used_fallback: bool,
    repr: Representation,
}

impl HorizonCostate {
    pub fn psi_at(&self, t: f64) -> Vec<f64> {
        match &self.repr {
            Representation::Backward { solution, scale } => {
                let mut psi = vec![0.0; solution.dim()];
                dense_eval(solution, t, &mut psi);
                psi.iter_mut().for_each(|v| *v /= scale);
                psi
            }
            Representation::Cauchy {
                trace,
                i_tau,
                scale,
            } => {
                let p = trace.at(t);
                let v: Vec<f64> =
                    p.i.iter()
                        .zip(i_tau)
                        .map(|(a, b)| (a - b) / scale)
                        .collect();
                transport_inverse(&p.a, &v).unwrap_or_else(|| vec![f64::NAN; v.len()])
            }
        }
    }

    /// The pair rescaled so that `λ = 1`.
    pub fn psi_over_lambda_at(&self, t: f64) -> Vec<f64> {
        self.psi_at(t)
            .into_iter()
            .map(|v| v / self.lambda_n)
            .collect()
    }

    /// `‖ψₙ(0)‖ + λₙ − 1`.
    pub fn normalization_defect(&self) -> f64 {
        norm(&self.psi0) + self.lambda_n - 1.0
    }
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

/// Condition estimate from the LU pivots.
fn pivot_condition(lu: &nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>) -> f64 {
    let u = lu.u();
    let diag: Vec<f64> = (0..u.nrows()).map(|i| u[(i, i)].abs()).collect();
    let max = diag.iter().cloned().fold(0.0, f64::max);
    let min = diag.iter().cloned().fold(f64::INFINITY, f64::min);
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Solves `y·A = v` (row vector `y`) by LU factorization of `Aᵀ`, with `A`
/// given row-major. Returns `None` when the condition estimate exceeds
/// [`CONDITION_LIMIT`].
pub fn transport_inverse(a: &[f64], v: &[f64]) -> Option<Vec<f64>> {
    let m = v.len();
    let scale = a.iter().fold(0.0f64, |s, x| s.max(x.abs()));
    if !(scale > 0.0) || !scale.is_finite() {
        return None;
    }
    // Aᵀ scaled to unit max entry: y = v (A/s)⁻¹ / s
    let at = DMatrix::from_fn(m, m, |i, j| a[j * m + i] / scale);
    let lu = at.lu();
    let cond = pivot_condition(&lu);
    if !(cond <= CONDITION_LIMIT) {
        log::warn!(
            "skipping Cauchy transport: condition estimate {cond:e} exceeds {CONDITION_LIMIT:e}"
        );
        return None;
    }
    let rhs = DVector::from_column_slice(v);
    let y = lu.solve(&rhs)?;
    Some(y.iter().map(|c| c / scale).collect())
}

/// `(ψ(0) + λ I(ξ;t)) A⁻¹(ξ;t)`, or `None` when `A` is ill-conditioned.
pub fn cauchy_costate(
    trace: &FundamentalTrace,
    psi0: &[f64],
    lambda: f64,
    t: f64,
) -> Option<Vec<f64>> {
    let p = trace.at(t);
    let v: Vec<f64> = psi0.iter().zip(&p.i).map(|(a, b)| a + lambda * b).collect();
    transport_inverse(&p.a, &v)
}

/// Integrates `−ψ' = ψ·∂f/∂x − λ e^{−rt} ∂f0/∂x` along the candidate from
/// `(t0, ψ(t0))` to `t1` (either direction).
pub fn integrate_adjoint(
    problem: &ControlProblem,
    candidate: &CandidateProcess,
    t0: f64,
    psi_t0: &[f64],
    lambda: f64,
    t1: f64,
    opts: &OdeOptions,
    stops: &[f64],
) -> Result<OdeSolution> {
    let m = problem.state_dim();
    let r = problem.discount();
    let mut jac = vec![0.0; m * m];
    let mut grad = vec![0.0; m];
    let mut x = vec![0.0; m];
    let traj = candidate.trajectory();
    let mut overflow = false;
    // the adjoint is linear in (psi, lambda): integrate the unit-scaled pair
    // so that rescaled inputs take the same steps
    let scale = lambda.abs().max(norm(psi_t0));
    let scale = if scale > 0.0 && scale.is_finite() {
        scale
    } else {
        1.0
    };
    let lambda = lambda / scale;
    let start: Vec<f64> = psi_t0.iter().map(|v| v / scale).collect();
    let mut sol = integrate_driven(
        candidate.control(),
        t0,
        t1,
        &start,
        opts,
        stops,
        |t, psi, u, dpsi| {
            dense_eval(traj, t, &mut x);
            problem.dynamics_jac(&x, u, &mut jac);
            problem.running_cost_grad(&x, u, &mut grad);
            let w = lambda * (-r * t).exp();
            for j in 0..m {
                let mut s = 0.0;
                for i in 0..m {
                    s += psi[i] * jac[i * m + j];
                }
                dpsi[j] = -s + w * grad[j];
            }
        },
        |_, psi| {
            overflow = !(norm(psi) * scale <= ADJOINT_OVERFLOW);
            overflow
        },
    )?;
    if overflow {
        return Err(Error::Integration {
            last_time: sol.last_time(),
            reason: "adjoint overflow".into(),
        });
    }
    sol.scale(scale);
    Ok(sol)
}

fn check_coverage(candidate: &CandidateProcess, t: f64) -> Result<()> {
    if t > candidate.t_end() * (1.0 + 1e-12) {
        return Err(Error::Costate {
            tau: t,
            reason: format!(
                "candidate trajectory only covers [0, {}]",
                candidate.t_end()
            ),
        });
    }
    Ok(())
}

/// Solves the horizon-`τ` adjoint problem `ψ(τ) = 0` and normalizes it.
pub fn finite_horizon_costate(
    problem: &ControlProblem,
    candidate: &CandidateProcess,
    tau: f64,
    cfg: &CostateConfig,
) -> Result<HorizonCostate> {
    if !(tau > 0.0) {
        return Err(Error::Costate {
            tau,
            reason: "horizon must be positive".into(),
        });
    }
    check_coverage(candidate, tau)?;
    let m = problem.state_dim();
    let b = candidate.initial_point();
    let fundamental = solve_fundamental(
        problem,
        b,
        candidate.control(),
        tau,
        &cfg.ode,
        &cfg.sample_times,
    )?;
    let i_tau = fundamental.gradient_integral();
    let i_norm = norm(&i_tau);

    let backward = integrate_adjoint(
        problem,
        candidate,
        tau,
        &vec![0.0; m],
        1.0,
        0.0,
        &cfg.ode,
        &cfg.sample_times,
    );

    let (lambda_n, psi0, repr, used_fallback) = match backward {
        Ok(solution) => {
            let raw0 = solution.last_state().to_vec();
            let scale = 1.0 + norm(&raw0);
            let psi0: Vec<f64> = raw0.iter().map(|v| v / scale).collect();
            (
                1.0 / scale,
                psi0,
                Representation::Backward { solution, scale },
                false,
            )
        }
        Err(e) => {
            if fundamental.diverged || !i_norm.is_finite() {
                return Err(Error::Costate {
                    tau,
                    reason: format!("backward adjoint failed ({e}) and I(b*; tau) diverged"),
                });
            }
            log::warn!(
                "tau = {tau}: backward adjoint failed ({e}); using the Cauchy reconstruction"
            );
            let scale = 1.0 + i_norm;
            let psi0: Vec<f64> = i_tau.iter().map(|v| -v / scale).collect();
            (
                1.0 / scale,
                psi0,
                Representation::Cauchy {
                    trace: fundamental.clone(),
                    i_tau: i_tau.clone(),
                    scale,
                },
                true,
            )
        }
    };

    let identity_residual = norm(
        &psi0
            .iter()
            .zip(&i_tau)
            .map(|(p, i)| p + lambda_n * i)
            .collect::<Vec<_>>(),
    );
    let mut hc = HorizonCostate {
        tau,
        lambda_n,
        psi0,
        i_tau,
        i_norm,
        identity_residual,
        terminal_residual: 0.0,
        used_fallback,
        repr,
    };
    hc.terminal_residual = norm(&hc.psi_at(tau));
    Ok(hc)
}

/// Per-horizon record of the sweep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HorizonRow {
    pub tau: f64,
    pub lambda_n: f64,
    pub psi0_n: Vec<f64>,
    #[serde(rename = "I_norm")]
    pub i_norm: f64,
}

/// The τ-limiting solution `(λ*, ψ*)`.
#[derive(Debug, Clone)]
pub struct LimitingSolution {
    pub lambda_star: f64,
    pub psi0_star: Vec<f64>,
    pub abnormal: bool,
    pub converged: bool,
    /// Consecutive differences alternate in sign without settling.
    pub oscillating: bool,
    pub horizon_diagnostics: Vec<HorizonRow>,
    /// Forward solution of the adjoint from `ψ*(0)`.
    pub psi_trace: OdeSolution,
}

impl LimitingSolution {
    pub fn psi_at(&self, t: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.psi0_star.len()];
        dense_eval(&self.psi_trace, t, &mut out);
        out
    }

    /// `λ* + ‖ψ*(0)‖ > 0`.
    pub fn is_nontrivial(&self) -> bool {
        self.lambda_star + norm(&self.psi0_star) > 0.0
    }

    pub fn trace_end(&self) -> f64 {
        self.psi_trace.last_time()
    }
}

/// Builds a limiting-solution record directly from `(λ*, ψ*(0))`, integrating
/// the adjoint forward. Used for perturbation studies and shooting seeds.
pub fn limiting_from_initial(
    problem: &ControlProblem,
    candidate: &CandidateProcess,
    lambda_star: f64,
    psi0_star: Vec<f64>,
    cfg: &CostateConfig,
) -> Result<LimitingSolution> {
    let end = cfg
        .trace_end
        .unwrap_or(candidate.t_end())
        .min(candidate.t_end());
    let psi_trace = integrate_adjoint(
        problem,
        candidate,
        0.0,
        &psi0_star,
        lambda_star,
        end,
        &cfg.ode,
        &cfg.sample_times,
    )?;
    Ok(LimitingSolution {
        lambda_star,
        abnormal: lambda_star == 0.0,
        psi0_star,
        converged: true,
        oscillating: false,
        horizon_diagnostics: Vec::new(),
        psi_trace,
    })
}

/// Runs `finite_horizon_costate` for every horizon, in parallel when
/// `cfg.workers > 1`. Output order follows `horizons`.
pub fn horizon_costates(
    problem: &ControlProblem,
    candidate: &CandidateProcess,
    horizons: &HorizonSequence,
    cfg: &CostateConfig,
) -> Result<Vec<HorizonCostate>> {
    let taus = horizons.values();
    if cfg.workers <= 1 {
        return taus
            .iter()
            .map(|&tau| finite_horizon_costate(problem, candidate, tau, cfg))
            .collect();
    }
    let workers = cfg.workers.min(taus.len());
    let mut slots: Vec<Option<Result<HorizonCostate>>> = (0..taus.len()).map(|_| None).collect();
    std::thread::scope(|scope| {
        let chunks: Vec<_> = slots.chunks_mut(taus.len().div_ceil(workers)).collect();
        let mut start = 0;
        for chunk in chunks {
            let offset = start;
            start += chunk.len();
            scope.spawn(move || {
                for (k, slot) in chunk.iter_mut().enumerate() {
                    *slot = Some(finite_horizon_costate(
                        problem,
                        candidate,
                        taus[offset + k],
                        cfg,
                    ));
                }
            });
        }
    });
    slots
        .into_iter()
        .map(|s| s.expect("every slot filled"))
        .collect()
}

/// Follows the normalized pairs `(λₙ, ψₙ(0))` along `horizons` to their limit.
///
/// The sweep counts as converged when the last consecutive difference
/// `|Δλ| + ‖Δψ(0)‖` is below `cfg.tol` and no larger than the one before it.
/// A limit `λ > tol` is renormalized to `λ* = 1`; otherwise `λ* = 0` and the
/// solution is abnormal.
pub fn limiting_costate(
    problem: &ControlProblem,
    candidate: &CandidateProcess,
    horizons: &HorizonSequence,
    cfg: &CostateConfig,
) -> Result<LimitingSolution> {
    if horizons.len() < 3 {
        return Err(Error::Horizons(format!(
            "the limit needs at least 3 horizons, got {}",
            horizons.len()
        )));
    }
    let costates = horizon_costates(problem, candidate, horizons, cfg)?;
    limit_of(problem, candidate, &costates, cfg)
}

/// The limit step of [`limiting_costate`] on precomputed horizon solutions.
pub fn limit_of(
    problem: &ControlProblem,
    candidate: &CandidateProcess,
    costates: &[HorizonCostate],
    cfg: &CostateConfig,
) -> Result<LimitingSolution> {
    let rows: Vec<HorizonRow> = costates
        .iter()
        .map(|c| HorizonRow {
            tau: c.tau,
            lambda_n: c.lambda_n,
            psi0_n: c.psi0.clone(),
            i_norm: c.i_norm,
        })
        .collect();
    let diffs: Vec<f64> = costates
        .windows(2)
        .map(|w| {
            (w[1].lambda_n - w[0].lambda_n).abs()
                + norm(
                    &w[1]
                        .psi0
                        .iter()
                        .zip(&w[0].psi0)
                        .map(|(a, b)| a - b)
                        .collect::<Vec<_>>(),
                )
        })
        .collect();
    let last = *diffs.last().expect("at least two horizons");
    let contracting = diffs.len() < 2 || last <= diffs[diffs.len() - 2];
    let converged = last < cfg.tol && contracting;
    let lambda_steps: Vec<f64> = costates
        .windows(2)
        .map(|w| w[1].lambda_n - w[0].lambda_n)
        .collect();
    let oscillating = !converged
        && lambda_steps.len() >= 3
        && lambda_steps
            .windows(2)
            .rev()
            .take(2)
            .all(|w| w[0] * w[1] < 0.0);

    let final_pair = costates.last().unwrap();
    let (lambda_star, psi0_star) = if final_pair.lambda_n > cfg.tol {
        (
            1.0,
            final_pair
                .psi0
                .iter()
                .map(|v| v / final_pair.lambda_n)
                .collect::<Vec<_>>(),
        )
    } else {
        (0.0, final_pair.psi0.clone())
    };
    let mut sol = limiting_from_initial(problem, candidate, lambda_star, psi0_star, cfg)?;
    sol.converged = converged;
    sol.oscillating = oscillating;
    sol.horizon_diagnostics = rows;
    Ok(sol)
}

/// `H(x, u, ψ, λ, t) = ψ·f(x,u) − λ e^{−rt} f0(x,u)`.
pub fn hamiltonian(
    problem: &ControlProblem,
    x: &[f64],
    u: &[f64],
    psi: &[f64],
    lambda: f64,
    t: f64,
) -> Result<f64> {
    if x.len() != problem.state_dim() || psi.len() != problem.state_dim() {
        return Err(Error::Dimension {
            what: "hamiltonian state/costate",
            expected: problem.state_dim(),
            got: x.len().max(psi.len()),
        });
    }
    if u.len() != problem.control_dim() {
        return Err(Error::Dimension {
            what: "hamiltonian control",
            expected: problem.control_dim(),
            got: u.len(),
        });
    }
    Ok(problem.hamiltonian(x, u, psi, lambda, t))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HamiltonianRow {
    #[serde(rename = "T")]
    pub t: f64,
    #[serde(rename = "H_direct")]
    pub h_direct: f64,
    #[serde(rename = "H_michel")]
    pub h_michel: f64,
    pub residual: f64,
    /// `λ*·r·(tail remainder bound)`.
    pub remainder: f64,
}

/// `H*` evaluated directly along `(x*, u*, ψ*, λ*)` and through the
/// discounted tail `−λ* r ∫_T^∞ e^{−rt} f0 dt`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HamiltonianTrace {
    pub rows: Vec<HamiltonianRow>,
    pub horizon: f64,
    /// Some tail bound came from decay extrapolation.
    pub heuristic: bool,
}

pub fn hamiltonian_trace(
    problem: &ControlProblem,
    candidate: &CandidateProcess,
    limiting: &LimitingSolution,
    grid: &[f64],
    horizon: f64,
    tail: &TailConfig,
) -> Result<HamiltonianTrace> {
    let r = problem.discount();
    let lambda = limiting.lambda_star;
    let mut heuristic = false;
    let mut rows = Vec::with_capacity(grid.len());
    for &t in grid {
        let x = candidate.state_at(t);
        let u = candidate.control_at(t);
        let psi = limiting.psi_at(t);
        let h_direct = problem.hamiltonian(&x, &u, &psi, lambda, t);
        let (h_michel, remainder) = if lambda == 0.0 || r == 0.0 {
            (0.0, 0.0)
        } else {
            let est = tail_payoff(problem, candidate, t, horizon, tail)?;
            heuristic |= est.heuristic;
            (-lambda * r * est.value, lambda * r * est.remainder_bound)
        };
        rows.push(HamiltonianRow {
            t,
            h_direct,
            h_michel,
            residual: (h_direct - h_michel).abs(),
            remainder,
        });
    }
    Ok(HamiltonianTrace {
        rows,
        horizon,
        heuristic,
    })
}
