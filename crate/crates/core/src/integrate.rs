//! State, fundamental matrix, gradient integral and payoff integration.
//!
//! The fundamental matrix `A(ξ;t)` (`A' = ∂f/∂x·A`, `A(0) = 1`), the gradient
//! integral `I(ξ;t) = ∫ e^{−rs} ∂f0/∂x·A ds`, the payoff and `log det A` are
//! carried as one augmented ODE together with the state, so all of them share
//! a single step sequence.

use serde::Serialize;

use crate::candidate::CandidateProcess;
use crate::control::Control;
use crate::error::{Error, Result};
use crate::ode::{self, dense_eval, OdeOptions, OdeSolution};
use crate::problem::ControlProblem;

/// `‖I‖` above this is reported as divergence rather than failure.
pub const GRADIENT_DIVERGENCE_LIMIT: f64 = 1e300;

/// Integrates a system driven by `control`, splitting at the control's jump
/// times so that no step straddles a discontinuity. `rhs` receives
/// `(t, y, u, dy)`.
pub(crate) fn integrate_driven<F, M>(
    control: &dyn Control,
    t0: f64,
    t1: f64,
    y0: &[f64],
    opts: &OdeOptions,
    stops: &[f64],
    mut rhs: F,
    mut monitor: M,
) -> Result<OdeSolution>
where
    F: FnMut(f64, &[f64], &[f64], &mut [f64]),
    M: FnMut(f64, &[f64]) -> bool,
{
    let mut edges = vec![t0];
    let mut bps = control.breakpoints(t0, t1);
    if t1 < t0 {
        bps.reverse();
    }
    edges.extend(bps);
    edges.push(t1);

    let mut u = vec![0.0; control.dim()];
    let mut sol = OdeSolution::default();
    let mut y = y0.to_vec();
    for w in edges.windows(2) {
        let (a, b) = (w[0], w[1]);
        let lower = a.min(b);
        let seg = ode::integrate(
            |t, y, dy| {
                if t <= lower {
                    control.eval_right(lower, &mut u);
                } else {
                    control.eval(t, &mut u);
                }
                rhs(t, y, &u, dy)
            },
            a,
            b,
            &y,
            opts,
            stops,
            &mut monitor,
        )?;
        y.copy_from_slice(seg.last_state());
        let stopped = seg.stopped;
        sol.append(seg);
        if stopped {
            break;
        }
    }
    if sol.t.is_empty() {
        sol.t.push(t0);
        sol.y.push(y0.to_vec());
    }
    Ok(sol)
}

/// A state trajectory `x(b, u; ·)`.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub solution: OdeSolution,
}

impl Trajectory {
    pub fn state_at(&self, t: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.solution.dim()];
        dense_eval(&self.solution, t, &mut out);
        out
    }

    pub fn final_state(&self) -> &[f64] {
        self.solution.last_state()
    }

    pub fn end_time(&self) -> f64 {
        self.solution.last_time()
    }
}

pub fn solve_state(
    problem: &ControlProblem,
    b: &[f64],
    control: &dyn Control,
    horizon: f64,
    opts: &OdeOptions,
    grid: &[f64],
) -> Result<Trajectory> {
    check_dims(problem, b, control)?;
    if !(horizon > 0.0) {
        return Err(Error::param("T", "horizon must be positive"));
    }
    let solution = integrate_driven(
        control,
        0.0,
        horizon,
        b,
        opts,
        grid,
        |_, x, u, dx| problem.dynamics(x, u, dx),
        |_, _| false,
    )?;
    Ok(Trajectory { solution })
}

fn check_dims(problem: &ControlProblem, b: &[f64], control: &dyn Control) -> Result<()> {
    if b.len() != problem.state_dim() {
        return Err(Error::Dimension {
            what: "initial state",
            expected: problem.state_dim(),
            got: b.len(),
        });
    }
    if control.dim() != problem.control_dim() {
        return Err(Error::Dimension {
            what: "control",
            expected: problem.control_dim(),
            got: control.dim(),
        });
    }
    Ok(())
}

/// Layout of the augmented variational system `[x, A, I, J, log det A]`.
#[derive(Debug, Clone, Copy)]
struct Layout {
    m: usize,
}

impl Layout {
    fn a(&self) -> usize {
        self.m
    }
    fn i(&self) -> usize {
        self.m + self.m * self.m
    }
    fn j(&self) -> usize {
        self.i() + self.m
    }
    fn logdet(&self) -> usize {
        self.j() + 1
    }
    fn len(&self) -> usize {
        self.logdet() + 1
    }
}

/// One sample of the augmented system.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TracePoint {
    pub t: f64,
    pub x: Vec<f64>,
    /// Row-major `m×m`.
    pub a: Vec<f64>,
    pub i: Vec<f64>,
    /// `J̄⁰(ξ; t)`.
    pub payoff: f64,
    pub logdet: f64,
}

/// `A(ξ;t)` and `I(ξ;t)` along `x(ξ, u; ·)`.
#[derive(Debug, Clone)]
pub struct FundamentalTrace {
    pub xi: Vec<f64>,
    pub horizon: f64,
    /// Set when `‖I‖` exceeded [`GRADIENT_DIVERGENCE_LIMIT`]; the trace then
    /// ends early.
    pub diverged: bool,
    m: usize,
    solution: OdeSolution,
}

impl FundamentalTrace {
    pub fn state_dim(&self) -> usize {
        self.m
    }

    pub fn end_time(&self) -> f64 {
        self.solution.last_time()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.solution.t
    }

    pub fn at(&self, t: f64) -> TracePoint {
        let lay = Layout { m: self.m };
        let mut y = vec![0.0; lay.len()];
        dense_eval(&self.solution, t, &mut y);
        if t == 0.0 {
            // exact initial condition
            y.copy_from_slice(&self.solution.y[0]);
        }
        unpack(lay, t, &y)
    }

    pub fn last(&self) -> TracePoint {
        let lay = Layout { m: self.m };
        unpack(lay, self.end_time(), self.solution.last_state())
    }

    /// Samples at every accepted step.
    pub fn points(&self) -> Vec<TracePoint> {
        let lay = Layout { m: self.m };
        self.solution
            .t
            .iter()
            .zip(&self.solution.y)
            .map(|(&t, y)| unpack(lay, t, y))
            .collect()
    }

    /// `I(ξ; T)` at the end of the trace.
    pub fn gradient_integral(&self) -> Vec<f64> {
        self.last().i
    }
}

fn unpack(lay: Layout, t: f64, y: &[f64]) -> TracePoint {
    let m = lay.m;
    TracePoint {
        t,
        x: y[..m].to_vec(),
        a: y[lay.a()..lay.i()].to_vec(),
        i: y[lay.i()..lay.j()].to_vec(),
        payoff: y[lay.j()],
        logdet: y[lay.logdet()],
    }
}

/// Integrates state, `A`, `I`, payoff and `log det A` from `ξ` over `[0, T]`,
/// landing exactly on every time in `grid`.
pub fn solve_fundamental(
    problem: &ControlProblem,
    xi: &[f64],
    control: &dyn Control,
    horizon: f64,
    opts: &OdeOptions,
    grid: &[f64],
) -> Result<FundamentalTrace> {
    check_dims(problem, xi, control)?;
    if !(horizon >= 0.0) {
        return Err(Error::param("T", "horizon must be nonnegative"));
    }
    let m = problem.state_dim();
    let lay = Layout { m };
    let r = problem.discount();

    let mut y0 = vec![0.0; lay.len()];
    y0[..m].copy_from_slice(xi);
    for i in 0..m {
        y0[lay.a() + i * m + i] = 1.0;
    }

    let mut jac = vec![0.0; m * m];
    let mut grad = vec![0.0; m];
    let mut diverged = false;
    let solution = integrate_driven(
        control,
        0.0,
        horizon,
        &y0,
        opts,
        grid,
        |t, y, u, dy| {
            let x = &y[..m];
            let a = &y[lay.a()..lay.i()];
            problem.dynamics(x, u, &mut dy[..m]);
            problem.dynamics_jac(x, u, &mut jac);
            problem.running_cost_grad(x, u, &mut grad);
            let w = (-r * t).exp();
            for i in 0..m {
                for j in 0..m {
                    let mut s = 0.0;
                    for k in 0..m {
                        s += jac[i * m + k] * a[k * m + j];
                    }
                    dy[lay.a() + i * m + j] = s;
                }
            }
            for j in 0..m {
                let mut s = 0.0;
                for i in 0..m {
                    s += grad[i] * a[i * m + j];
                }
                dy[lay.i() + j] = w * s;
            }
            dy[lay.j()] = w * problem.running_cost(x, u);
            dy[lay.logdet()] = (0..m).map(|i| jac[i * m + i]).sum();
        },
        |_, y| {
            let n = y[lay.i()..lay.j()]
                .iter()
                .map(|v| v * v)
                .sum::<f64>()
                .sqrt();
            if !(n <= GRADIENT_DIVERGENCE_LIMIT) {
                diverged = true;
            }
            diverged
        },
    )?;
    Ok(FundamentalTrace {
        xi: xi.to_vec(),
        horizon,
        diverged,
        m,
        solution,
    })
}

/// `I(ξ; t)` sampled at `grid` (which should include `T`).
pub fn accumulate_gradient_integral(
    problem: &ControlProblem,
    xi: &[f64],
    control: &dyn Control,
    horizon: f64,
    opts: &OdeOptions,
    grid: &[f64],
) -> Result<(Vec<(f64, Vec<f64>)>, bool)> {
    let trace = solve_fundamental(problem, xi, control, horizon, opts, grid)?;
    let samples = grid
        .iter()
        .filter(|&&t| t <= trace.end_time())
        .map(|&t| (t, trace.at(t).i))
        .collect();
    Ok((samples, trace.diverged))
}

/// Integrates only `[x, J̄]` from `b` over `[0, T]`.
fn payoff_solution(
    problem: &ControlProblem,
    b: &[f64],
    control: &dyn Control,
    t_start: f64,
    t_end: f64,
    opts: &OdeOptions,
    stops: &[f64],
) -> Result<OdeSolution> {
    let m = problem.state_dim();
    let r = problem.discount();
    let mut y0 = b.to_vec();
    y0.push(0.0);
    integrate_driven(
        control,
        t_start,
        t_end,
        &y0,
        opts,
        stops,
        |t, y, u, dy| {
            problem.dynamics(&y[..m], u, &mut dy[..m]);
            dy[m] = (-r * t).exp() * problem.running_cost(&y[..m], u);
        },
        |_, _| false,
    )
}

/// `J⁰(b, s; T) = ∫₀ᵀ e^{−r(t+s)} f0(x(b,u;t), u(t)) dt`.
pub fn payoff(
    problem: &ControlProblem,
    b: &[f64],
    control: &dyn Control,
    shift: f64,
    horizon: f64,
    opts: &OdeOptions,
) -> Result<f64> {
    check_dims(problem, b, control)?;
    if !(horizon >= 0.0) {
        return Err(Error::param("T", "horizon must be nonnegative"));
    }
    if horizon == 0.0 {
        return Ok(0.0);
    }
    let sol = payoff_solution(problem, b, control, 0.0, horizon, opts, &[])?;
    let jbar = sol.last_state()[problem.state_dim()];
    Ok((-problem.discount() * shift).exp() * jbar)
}

/// Tail integral `∫_T^H e^{−rt} f0(x*, u*) dt` with a bound on `∫_H^∞`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TailEstimate {
    pub value: f64,
    pub remainder_bound: f64,
    /// The bound comes from extrapolating the integrand's decay rather than
    /// from a supplied cost bound.
    pub heuristic: bool,
}

/// Settings for [`tail_payoff`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailConfig {
    pub ode: OdeOptions,
    /// The check tolerance; undiscounted tails must satisfy
    /// `|∫_{H/2}^{H} f0| < 0.01·check_tol`.
    pub check_tol: f64,
}

impl Default for TailConfig {
    fn default() -> Self {
        Self {
            ode: OdeOptions::default(),
            check_tol: 1e-6,
        }
    }
}

pub fn tail_payoff(
    problem: &ControlProblem,
    candidate: &CandidateProcess,
    from: f64,
    horizon: f64,
    cfg: &TailConfig,
) -> Result<TailEstimate> {
    if !(horizon > from) || from < 0.0 {
        return Err(Error::param(
            "horizon",
            format!("need 0 <= T < horizon, got T={from}, horizon={horizon}"),
        ));
    }
    let m = problem.state_dim();
    let r = problem.discount();
    let x_from = candidate.state_at(from);
    let control = candidate.control();
    let decade = horizon - 0.1 * (horizon - from);
    let half = 0.5 * horizon;
    let mut stops = vec![decade];
    if half > from {
        stops.push(half);
    }
    let sol = payoff_solution(problem, &x_from, control, from, horizon, &cfg.ode, &stops)?;
    let value = sol.last_state()[m];

    if r == 0.0 {
        let at = |t: f64| -> f64 {
            let mut y = vec![0.0; m + 1];
            dense_eval(&sol, t, &mut y);
            y[m]
        };
        let late = if half > from {
            value - at(half)
        } else {
            // the whole window lies in the second half
            value
        };
        if !(late.abs() < 0.01 * cfg.check_tol) {
            return Err(Error::TailNotCertifiable(format!(
                "undiscounted integral over [{half}, {horizon}] is {late:e}, not below {:e}",
                0.01 * cfg.check_tol
            )));
        }
    }

    if let (Some(bound), true) = (problem.cost_bound(), r > 0.0) {
        return Ok(TailEstimate {
            value,
            remainder_bound: bound * (-r * horizon).exp() / r,
            heuristic: false,
        });
    }

    let integrand = |t: f64| -> f64 {
        let mut y = vec![0.0; m + 1];
        dense_eval(&sol, t, &mut y);
        let mut u = vec![0.0; problem.control_dim()];
        control.eval(t, &mut u);
        ((-r * t).exp() * problem.running_cost(&y[..m], &u)).abs()
    };
    let g_a = integrand(decade);
    let g_b = integrand(horizon);
    let span = horizon - decade;
    let remainder_bound = if g_b == 0.0 && g_a == 0.0 {
        0.0
    } else if g_b < g_a && g_b > 0.0 {
        let rate = (g_a / g_b).ln() / span;
        g_b / rate
    } else if g_b == 0.0 {
        0.0
    } else {
        f64::INFINITY
    };
    Ok(TailEstimate {
        value,
        remainder_bound,
        heuristic: true,
    })
}

/// Evaluators for `J⁰`, `J̄⁰`, the tail and `J**` of one candidate.
pub struct PayoffAccount<'a> {
    pub problem: &'a ControlProblem,
    pub candidate: &'a CandidateProcess,
    pub tail_config: TailConfig,
}

impl<'a> PayoffAccount<'a> {
    pub fn new(problem: &'a ControlProblem, candidate: &'a CandidateProcess) -> Self {
        Self {
            problem,
            candidate,
            tail_config: TailConfig::default(),
        }
    }

    pub fn j0(&self, b: &[f64], shift: f64, horizon: f64) -> Result<f64> {
        payoff(
            self.problem,
            b,
            self.candidate.control(),
            shift,
            horizon,
            &self.tail_config.ode,
        )
    }

    pub fn jbar(&self, b: &[f64], horizon: f64) -> Result<f64> {
        self.j0(b, 0.0, horizon)
    }

    pub fn tail(&self, from: f64, horizon: f64) -> Result<TailEstimate> {
        tail_payoff(
            self.problem,
            self.candidate,
            from,
            horizon,
            &self.tail_config,
        )
    }

    /// `J**` estimated on `[0, H]`, with the tail bound beyond `H`.
    pub fn jstar(&self, horizon: f64) -> Result<TailEstimate> {
        self.tail(0.0, horizon)
    }
}
