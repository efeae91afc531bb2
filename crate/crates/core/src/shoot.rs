//! Shooting on `ψ(0)` for one-state problems, closed by the Michel
//! stationarity condition at `T = 0`.
//!
//! The extremal system `x' = f(x, u)`, `−ψ' = ψ ∂f/∂x − e^{−rt} ∂f0/∂x` with
//! `u = argmax H` is integrated forward from `(b, ψ0)`. On a saddle the
//! residual `H(0) + r J̄⁰(b; horizon)` is only finite on the stable manifold;
//! elsewhere the trajectory diverges and the residual is replaced by a signed
//! infinity giving the direction of divergence of `x`.

use std::sync::Arc;

use serde::Serialize;

use crate::candidate::CandidateProcess;
use crate::control::PolicyFn;
use crate::error::{Error, Result};
use crate::ode::{self, dense_eval, OdeOptions, OdeSolution};
use crate::problem::{ControlProblem, ControlSet};

/// `‖(x, ψ)‖` beyond which an extremal counts as diverged.
pub const DIVERGENCE_LIMIT: f64 = 1e6;
/// Points in the sign scan of a bracket (endpoints included).
pub const SCAN_POINTS: usize = 9;
const MAX_BISECTIONS: usize = 200;
const MAX_SEGMENTS: usize = 200;
/// Fraction of a diverging segment kept before re-shooting.
const SEGMENT_KEEP: f64 = 0.25;
/// Shortest look-ahead used to classify a re-shot costate.
const RESHOOT_WINDOW: f64 = 40.0;

#[derive(Debug, Clone, PartialEq)]
pub struct ShootConfig {
    pub ode: OdeOptions,
    /// Bisection stops once the bracket is narrower than `tol·(1 + |ψ0|)`;
    /// the extremal itself is synthesized from the root refined to machine
    /// precision.
    pub tol: f64,
}

impl Default for ShootConfig {
    fn default() -> Self {
        Self {
            ode: OdeOptions::default(),
            tol: 1e-6,
        }
    }
}

fn tie_less(a: &[f64], b: &[f64]) -> bool {
    let na: f64 = a.iter().map(|v| v * v).sum();
    let nb: f64 = b.iter().map(|v| v * v).sum();
    if na != nb {
        return na < nb;
    }
    a.iter()
        .zip(b)
        .find(|(x, y)| x != y)
        .map_or(false, |(x, y)| x < y)
}

/// Maximizer of `u ↦ H(x, u, ψ, λ, t)` over `U`: the best of the sampled
/// controls, refined on a box `U` by golden-section search in each
/// coordinate followed by parabolic steps. Ties go to the smaller control
/// norm, then lexicographically.
pub fn hamiltonian_argmax(
    problem: &ControlProblem,
    samples: &[Vec<f64>],
    x: &[f64],
    psi: &[f64],
    lambda: f64,
    t: f64,
) -> Vec<f64> {
    let h = |u: &[f64]| problem.hamiltonian(x, u, psi, lambda, t);
    let mut best = samples[0].clone();
    let mut best_h = h(&best);
    for u in &samples[1..] {
        let v = h(u);
        if v > best_h || (v == best_h && tie_less(u, &best)) {
            best = u.clone();
            best_h = v;
        }
    }
    if let ControlSet::Box {
        lower,
        upper,
        samples_per_dim,
    } = problem.control_set()
    {
        let n = (*samples_per_dim).max(2);
        for i in 0..best.len() {
            let step = (upper[i] - lower[i]) / (n - 1) as f64;
            if step == 0.0 {
                continue;
            }
            let lo = (best[i] - step).max(lower[i]);
            let hi = (best[i] + step).min(upper[i]);
            let mut u = best.clone();
            let mut g = |s: f64| {
                u[i] = s;
                h(&u)
            };
            let mut pick = golden_max(&mut g, lo, hi);
            // parabolic steps on a stencil scaled to the iterate, so small
            // maximizers keep their relative accuracy
            let mut d = 1e-2 * step;
            for _ in 0..4 {
                let s = pick;
                if !(s - d >= lo && s + d <= hi) {
                    break;
                }
                let (fm, f0, fp) = (g(s - d), g(s), g(s + d));
                let curv = fp + fm - 2.0 * f0;
                if !(curv < 0.0) {
                    break;
                }
                let next = (s - d * (fp - fm) / (2.0 * curv)).clamp(lo, hi);
                if !(g(next) >= f0) {
                    break;
                }
                pick = next;
                d = (1e-3 * next.abs()).max(f64::MIN_POSITIVE);
            }
            for bound in [lower[i], upper[i]] {
                if bound >= lo && bound <= hi && g(bound) >= g(pick) {
                    pick = bound;
                }
            }
            if g(pick) > best_h {
                best[i] = pick;
                best_h = g(pick);
            }
        }
    }
    best
}

fn golden_max(g: &mut impl FnMut(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    const INV_PHI: f64 = 0.618_033_988_749_894_8;
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let (mut fc, mut fd) = (g(c), g(d));
    for _ in 0..200 {
        if (b - a) <= 1e-10 * (1.0 + a.abs().max(b.abs())) {
            break;
        }
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = g(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = g(d);
        }
    }
    let mid = 0.5 * (a + b);
    let candidates = [a, mid, b];
    let mut best = mid;
    let mut best_v = g(mid);
    for s in candidates {
        let v = g(s);
        if v > best_v {
            best = s;
            best_v = v;
        }
    }
    best
}

fn check_problem(problem: &ControlProblem) -> Result<()> {
    if problem.state_dim() != 1 {
        return Err(Error::Unsupported(format!(
            "shooting needs one state variable, got {}",
            problem.state_dim()
        )));
    }
    if !(problem.discount() > 0.0) {
        return Err(Error::Unsupported(
            "shooting needs r > 0; with r = 0 the closing condition reads H = 0".into(),
        ));
    }
    Ok(())
}

/// Integrates `y = (x, ψ, ∫ e^{−rt} f0)` forward with `λ = 1` and
/// `u = argmax H`, stopping early when `‖(x, ψ)‖` passes
/// [`DIVERGENCE_LIMIT`].
fn run_extremal(
    problem: &ControlProblem,
    samples: &[Vec<f64>],
    t0: f64,
    x0: f64,
    psi0: f64,
    t1: f64,
    opts: &OdeOptions,
) -> Result<OdeSolution> {
    let r = problem.discount();
    let mut fx = [0.0];
    let mut f = [0.0];
    let mut g = [0.0];
    ode::integrate(
        |t, y, dy| {
            let (x, psi) = (&y[0..1], &y[1..2]);
            let u = hamiltonian_argmax(problem, samples, x, psi, 1.0, t);
            problem.dynamics(x, &u, &mut f);
            problem.dynamics_jac(x, &u, &mut fx);
            problem.running_cost_grad(x, &u, &mut g);
            let w = (-r * t).exp();
            dy[0] = f[0];
            dy[1] = -psi[0] * fx[0] + w * g[0];
            dy[2] = w * problem.running_cost(x, &u);
        },
        t0,
        t1,
        &[x0, psi0, 0.0],
        opts,
        &[],
        |_, y| !(y[0].hypot(y[1]) <= DIVERGENCE_LIMIT),
    )
}

/// `H(s) + r ∫_s^{horizon} e^{−rt} f0 dt` along the extremal started from
/// `(s, x0, ψ0)`, or a signed infinity when it diverges.
fn residual_from(
    problem: &ControlProblem,
    samples: &[Vec<f64>],
    s: f64,
    x0: f64,
    psi0: f64,
    horizon: f64,
    opts: &OdeOptions,
) -> Result<f64> {
    let sol = run_extremal(problem, samples, s, x0, psi0, horizon, opts)?;
    let end = sol.last_state();
    if sol.stopped {
        let dominant = if end[0].abs() >= end[1].abs() {
            end[0]
        } else {
            end[1]
        };
        return Ok(if dominant >= 0.0 {
            f64::INFINITY
        } else {
            f64::NEG_INFINITY
        });
    }
    let u = hamiltonian_argmax(problem, samples, &[x0], &[psi0], 1.0, s);
    Ok(problem.hamiltonian(&[x0], &u, &[psi0], 1.0, s) + problem.discount() * end[2])
}

/// Michel residual `H(0) + r J̄⁰(b; horizon)` of the normal extremal from
/// `(b, ψ0)`; `±∞` marks divergence in the direction of the sign.
pub fn michel_residual(
    problem: &ControlProblem,
    b: f64,
    psi0: f64,
    horizon: f64,
    cfg: &ShootConfig,
) -> Result<f64> {
    check_problem(problem)?;
    if !(horizon > 0.0) {
        return Err(Error::param("horizon", "must be positive"));
    }
    let samples = problem.control_set().samples();
    if samples.is_empty() {
        return Err(Error::EmptySampler);
    }
    residual_from(problem, &samples, 0.0, b, psi0, horizon, &cfg.ode)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BracketStep {
    pub iter: usize,
    pub psi_lo: f64,
    pub psi_hi: f64,
    pub psi_mid: f64,
    pub residual: f64,
}

/// A normal extremal found by shooting.
#[derive(Debug, Clone)]
pub struct ShootResult {
    pub psi0: f64,
    pub lambda: f64,
    pub b: f64,
    pub horizon: f64,
    /// `H(0) + r ∫_0^{horizon} e^{−rt} f0` along the synthesized extremal.
    pub closing_residual: f64,
    /// The requested bracket width was reached.
    pub converged: bool,
    pub history: Vec<BracketStep>,
    /// `(x, ψ, ∫ e^{−rt} f0)` on `[0, horizon]`, pieced together from the
    /// re-shot segments.
    pub extremal: OdeSolution,
    /// Start of the constant-control hold when re-shooting gave up.
    pub hold_from: Option<f64>,
    samples: Vec<Vec<f64>>,
}

impl ShootResult {
    pub fn state_at(&self, t: f64) -> f64 {
        self.sample(t)[0]
    }

    pub fn psi_at(&self, t: f64) -> f64 {
        self.sample(t)[1]
    }

    fn sample(&self, t: f64) -> [f64; 3] {
        let mut y = [0.0; 3];
        dense_eval(&self.extremal, t, &mut y);
        y
    }

    /// The synthesized control at `t`.
    pub fn control_at(&self, problem: &ControlProblem, t: f64) -> Vec<f64> {
        let y = self.sample(t.min(self.extremal.last_time()));
        hamiltonian_argmax(problem, &self.samples, &y[0..1], &y[1..2], 1.0, t)
    }

    /// Worst gap, over `grid`, between the best sampled Hamiltonian and the
    /// Hamiltonian at the synthesized control.
    pub fn maximum_residual(&self, problem: &ControlProblem, grid: &[f64]) -> f64 {
        grid.iter()
            .map(|&t| {
                let y = self.sample(t);
                let u = self.control_at(problem, t);
                let own = problem.hamiltonian(&y[0..1], &u, &y[1..2], 1.0, t);
                self.samples
                    .iter()
                    .map(|v| problem.hamiltonian(&y[0..1], v, &y[1..2], 1.0, t) - own)
                    .fold(0.0, f64::max)
            })
            .fold(0.0, f64::max)
    }

    /// The extremal as a candidate process on `[0, t_end]`. Past the shooting
    /// horizon the last control is held.
    pub fn candidate(
        &self,
        problem: &ControlProblem,
        t_end: f64,
        opts: &OdeOptions,
    ) -> Result<CandidateProcess> {
        let mut reference = self.extremal.clone();
        let end = reference.last_time();
        let hold_from = self.hold_from.unwrap_or(end).min(end);
        let u_hold = self.control_at(problem, hold_from);
        if t_end > end {
            let tail = hold_segment(problem, reference.last_state(), &u_hold, end, t_end, opts)?;
            reference.append(tail);
        }
        let samples = self.samples.clone();
        let problem_c = problem.clone();
        let policy: PolicyFn = Arc::new(move |t, y: &[f64], u: &mut [f64]| {
            if t > hold_from {
                u.copy_from_slice(&u_hold);
            } else {
                let v = hamiltonian_argmax(&problem_c, &samples, &y[0..1], &y[1..2], 1.0, t);
                u.copy_from_slice(&v);
            }
        });
        CandidateProcess::from_replay(problem, Arc::new(reference), policy)
    }
}

/// `(x, ψ, ∫ e^{−rt} f0)` under a fixed control.
fn hold_segment(
    problem: &ControlProblem,
    y0: &[f64],
    u: &[f64],
    t0: f64,
    t1: f64,
    opts: &OdeOptions,
) -> Result<OdeSolution> {
    let r = problem.discount();
    let mut f = [0.0];
    let mut fx = [0.0];
    let mut g = [0.0];
    ode::integrate(
        |t, y, dy| {
            let x = &y[0..1];
            problem.dynamics(x, u, &mut f);
            problem.dynamics_jac(x, u, &mut fx);
            problem.running_cost_grad(x, u, &mut g);
            let w = (-r * t).exp();
            dy[0] = f[0];
            dy[1] = -y[1] * fx[0] + w * g[0];
            dy[2] = w * problem.running_cost(x, u);
        },
        t0,
        t1,
        y0,
        opts,
        &[],
        |_, _| false,
    )
}

fn sign(v: f64) -> i8 {
    if v > 0.0 {
        1
    } else if v < 0.0 {
        -1
    } else {
        0
    }
}

/// Bisection on the residual sign; returns the root refined to adjacent
/// floats and the steps taken.
fn bisect(
    mut residual: impl FnMut(f64) -> Result<f64>,
    mut lo: f64,
    mut hi: f64,
    mut f_lo: f64,
    history: Option<&mut Vec<BracketStep>>,
) -> Result<f64> {
    let mut log = history;
    for iter in 0..MAX_BISECTIONS {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let f_mid = residual(mid)?;
        if let Some(h) = log.as_deref_mut() {
            h.push(BracketStep {
                iter,
                psi_lo: lo,
                psi_hi: hi,
                psi_mid: mid,
                residual: f_mid,
            });
        }
        if f_mid == 0.0 {
            return Ok(mid);
        }
        if sign(f_mid) == sign(f_lo) {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Bisection for `ψ0` on `bracket`, followed by synthesis of the extremal on
/// `[0, horizon]`.
///
/// The bracket is first scanned at [`SCAN_POINTS`] points: no sign change is
/// an error carrying the scan table, and more than one sign change is
/// reported as suspected multiple roots.
pub fn shoot_scalar(
    problem: &ControlProblem,
    b: f64,
    bracket: (f64, f64),
    horizon: f64,
    cfg: &ShootConfig,
) -> Result<ShootResult> {
    check_problem(problem)?;
    let (lo, hi) = bracket;
    if !(lo < hi) {
        return Err(Error::param(
            "bracket",
            format!("need lo < hi, got [{lo}, {hi}]"),
        ));
    }
    if !(horizon > 0.0) {
        return Err(Error::param("horizon", "must be positive"));
    }
    if !problem
        .initial_set()
        .contains(&[b], crate::candidate::SET_TOL)
    {
        return Err(Error::InitialPointOutsideSet(vec![b]));
    }
    let samples = problem.control_set().samples();
    if samples.is_empty() {
        return Err(Error::EmptySampler);
    }
    let residual = |psi: f64| residual_from(problem, &samples, 0.0, b, psi, horizon, &cfg.ode);

    let table: Vec<(f64, f64)> = (0..SCAN_POINTS)
        .map(|i| {
            let psi = lo + (hi - lo) * i as f64 / (SCAN_POINTS - 1) as f64;
            residual(psi).map(|v| (psi, v))
        })
        .collect::<Result<_>>()?;
    let signs: Vec<i8> = table
        .iter()
        .map(|&(_, v)| sign(v))
        .filter(|&s| s != 0)
        .collect();
    let changes = signs.windows(2).filter(|w| w[0] != w[1]).count();
    let exact = table.iter().find(|&&(_, v)| v == 0.0).map(|&(p, _)| p);
    if changes == 0 && exact.is_none() {
        return Err(Error::NoSignChange { lo, hi, table });
    }
    if changes > 1 {
        return Err(Error::MultipleRoots { lo, hi, table });
    }

    let mut history = Vec::new();
    let psi0 = match exact {
        Some(p) if changes == 0 => p,
        _ => {
            let k = table
                .windows(2)
                .position(|w| {
                    sign(w[0].1) != 0 && sign(w[1].1) != 0 && sign(w[0].1) != sign(w[1].1)
                })
                .or_else(|| {
                    table
                        .iter()
                        .position(|&(_, v)| v == 0.0)
                        .map(|k| k.saturating_sub(1))
                })
                .expect("a sign change was counted");
            let (a, fa) = table[k];
            let (c, _) = table[k + 1];
            bisect(residual, a, c, fa, Some(&mut history))?
        }
    };
    let converged = history.last().map_or(true, |s| {
        0.5 * (s.psi_hi - s.psi_lo) <= cfg.tol * (1.0 + psi0.abs())
    });

    let (extremal, hold_from) = synthesize(problem, &samples, b, psi0, horizon, &cfg.ode)?;
    let end = extremal.last_state();
    let u0 = hamiltonian_argmax(problem, &samples, &[b], &[psi0], 1.0, 0.0);
    let closing_residual =
        problem.hamiltonian(&[b], &u0, &[psi0], 1.0, 0.0) + problem.discount() * end[2];
    Ok(ShootResult {
        psi0,
        lambda: 1.0,
        b,
        horizon,
        closing_residual,
        converged,
        history,
        extremal,
        hold_from,
        samples,
    })
}

/// Pieces the extremal together: each run that diverges within
/// [`RESHOOT_WINDOW`] is cut at [`SEGMENT_KEEP`] of its length and `ψ` is re-shot from the cut. When no
/// bracket for the re-shot can be found the last control is held.
fn synthesize(
    problem: &ControlProblem,
    samples: &[Vec<f64>],
    b: f64,
    psi0: f64,
    horizon: f64,
    opts: &OdeOptions,
) -> Result<(OdeSolution, Option<f64>)> {
    let mut t0 = 0.0;
    let mut y0 = [b, psi0, 0.0];
    let mut out: Option<OdeSolution> = None;
    let push = |out: &mut Option<OdeSolution>, seg: OdeSolution| match out {
        Some(o) => o.append(seg),
        None => *out = Some(seg),
    };
    for _ in 0..MAX_SEGMENTS {
        let look = horizon.max(t0 + RESHOOT_WINDOW);
        let run = run_extremal(problem, samples, t0, y0[0], y0[1], look, opts)?;
        let cut = if run.stopped {
            t0 + SEGMENT_KEEP * (run.last_time() - t0)
        } else {
            horizon
        };
        if cut >= horizon {
            let seg = run_extremal(problem, samples, t0, y0[0], y0[1], horizon, opts)?;
            push(&mut out, shift_payoff(seg, y0[2]));
            return Ok((out.unwrap(), None));
        }
        if !(cut - t0 > 1e-9 * (1.0 + t0)) {
            break;
        }
        let seg = run_extremal(problem, samples, t0, y0[0], y0[1], cut, opts)?;
        let seg = shift_payoff(seg, y0[2]);
        let last = seg.last_state().to_vec();
        push(&mut out, seg);
        t0 = cut;
        match reshoot(problem, samples, t0, last[0], last[1], horizon, opts)? {
            Some(psi) => y0 = [last[0], psi, last[2]],
            None => {
                log::warn!("re-shooting failed at t = {t0}; holding the last control");
                let y = [last[0], last[1], last[2]];
                let u = hamiltonian_argmax(problem, samples, &y[0..1], &y[1..2], 1.0, t0);
                let tail = hold_segment(problem, &y, &u, t0, horizon, opts)?;
                push(&mut out, tail);
                return Ok((out.unwrap(), Some(t0)));
            }
        }
    }
    Err(Error::Integration {
        last_time: t0,
        reason: "extremal synthesis did not reach the horizon".into(),
    })
}

fn shift_payoff(mut sol: OdeSolution, offset: f64) -> OdeSolution {
    for y in &mut sol.y {
        y[2] += offset;
    }
    sol
}

/// Finds `ψ(s)` on the stable branch through `x(s)` by expanding a bracket
/// around `guess` until the residual changes sign.
fn reshoot(
    problem: &ControlProblem,
    samples: &[Vec<f64>],
    s: f64,
    x: f64,
    guess: f64,
    horizon: f64,
    opts: &OdeOptions,
) -> Result<Option<f64>> {
    // near the horizon the remaining window is too short for off-branch
    // runs to diverge, so classify over at least RESHOOT_WINDOW
    let end = horizon.max(s + RESHOOT_WINDOW);
    let residual = |psi: f64| residual_from(problem, samples, s, x, psi, end, opts);
    let f0 = residual(guess)?;
    if f0 == 0.0 {
        return Ok(Some(guess));
    }
    let scale = if guess != 0.0 {
        guess.abs()
    } else {
        x.abs().max(f64::MIN_POSITIVE)
    };
    let mut width = 1e-9 * scale;
    for _ in 0..80 {
        for side in [-1.0, 1.0] {
            let other = guess + side * width;
            let f = residual(other)?;
            if f == 0.0 {
                return Ok(Some(other));
            }
            if sign(f) != sign(f0) {
                let (a, c, fa) = if other < guess {
                    (other, guess, f)
                } else {
                    (guess, other, f0)
                };
                return bisect(residual, a, c, fa, None).map(Some);
            }
        }
        width *= 4.0;
    }
    Ok(None)
}
