//! Candidate processes `(x*, u*)` with a cached trajectory.

use std::sync::Arc;

use crate::control::{Control, PolicyFn, ReplayControl};
use crate::error::{Error, Result};
use crate::integrate::integrate_driven;
use crate::ode::{self, dense_eval, OdeOptions, OdeSolution};
use crate::problem::ControlProblem;

/// Membership tolerance for `u(t) ∈ U` and `b ∈ C`.
pub const SET_TOL: f64 = 1e-12;

/// How the candidate's control is produced.
#[derive(Clone)]
pub enum Policy {
    /// Feedback `(t, x) ↦ u`, integrated in closed loop and then replayed
    /// open-loop along the stored trajectory.
    Feedback(PolicyFn),
    /// A given open-loop control.
    OpenLoop(Arc<dyn Control>),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CandidateConfig {
    /// End of the cached trajectory; must cover every horizon used later.
    pub t_end: f64,
    pub ode: OdeOptions,
}

impl Default for CandidateConfig {
    fn default() -> Self {
        Self {
            t_end: 80.0,
            ode: OdeOptions::default(),
        }
    }
}

#[derive(Clone)]
pub struct CandidateProcess {
    initial_point: Vec<f64>,
    control: Arc<dyn Control>,
    trajectory: OdeSolution,
}

impl std::fmt::Debug for CandidateProcess {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CandidateProcess")
            .field("initial_point", &self.initial_point)
            .field("t_end", &self.t_end())
            .field("nodes", &self.trajectory.t.len())
            .finish()
    }
}

impl CandidateProcess {
    /// Builds a candidate from a reference solution whose first `m`
    /// components are the state, replaying `policy` along it.
    pub fn from_replay(
        problem: &ControlProblem,
        reference: Arc<OdeSolution>,
        policy: PolicyFn,
    ) -> Result<Self> {
        let m = problem.state_dim();
        let project = |v: &Vec<Vec<f64>>| v.iter().map(|y| y[..m].to_vec()).collect::<Vec<_>>();
        let trajectory = OdeSolution {
            t: reference.t.clone(),
            y: project(&reference.y),
            d_start: project(&reference.d_start),
            d_end: project(&reference.d_end),
            d_mid: project(&reference.d_mid),
            stopped: false,
        };
        let initial_point = trajectory.y[0].clone();
        let control: Arc<dyn Control> =
            Arc::new(ReplayControl::new(reference, problem.control_dim(), policy));
        let c = Self {
            initial_point,
            control,
            trajectory,
        };
        c.validate(problem)?;
        Ok(c)
    }

    pub fn initial_point(&self) -> &[f64] {
        &self.initial_point
    }

    pub fn control(&self) -> &dyn Control {
        self.control.as_ref()
    }

    pub fn control_arc(&self) -> Arc<dyn Control> {
        Arc::clone(&self.control)
    }

    pub fn trajectory(&self) -> &OdeSolution {
        &self.trajectory
    }

    pub fn t_end(&self) -> f64 {
        self.trajectory.last_time()
    }

    pub fn state_at(&self, t: f64) -> Vec<f64> {
        let mut x = vec![0.0; self.trajectory.dim()];
        dense_eval(&self.trajectory, t, &mut x);
        x
    }

    pub fn control_at(&self, t: f64) -> Vec<f64> {
        let mut u = vec![0.0; self.control.dim()];
        self.control.eval(t, &mut u);
        u
    }

    /// `f0(x*(t), u*(t))`.
    pub fn running_cost_at(&self, problem: &ControlProblem, t: f64) -> f64 {
        problem.running_cost(&self.state_at(t), &self.control_at(t))
    }

    /// `f(x*(t), u*(t))`.
    pub fn velocity_at(&self, problem: &ControlProblem, t: f64) -> Vec<f64> {
        let mut f = vec![0.0; problem.state_dim()];
        problem.dynamics(&self.state_at(t), &self.control_at(t), &mut f);
        f
    }

    fn validate(&self, problem: &ControlProblem) -> Result<()> {
        if !problem.initial_set().contains(&self.initial_point, SET_TOL) {
            return Err(Error::InitialPointOutsideSet(self.initial_point.clone()));
        }
        let mut u = vec![0.0; problem.control_dim()];
        for &t in &self.trajectory.t {
            self.control.eval(t, &mut u);
            if !problem.control_set().contains(&u, SET_TOL) {
                return Err(Error::ControlOutsideSet { t, value: u });
            }
            self.control.eval_right(t, &mut u);
            if !problem.control_set().contains(&u, SET_TOL) {
                return Err(Error::ControlOutsideSet { t, value: u });
            }
        }
        Ok(())
    }

    /// Worst mismatch on any cached cell between the state increment and
    /// Simpson's rule applied to `f` along the cell, relative to `1 + |x|`.
    pub fn dynamics_residual(&self, problem: &ControlProblem) -> f64 {
        let m = problem.state_dim();
        let mut worst: f64 = 0.0;
        let mut f_a = vec![0.0; m];
        let mut f_mid = vec![0.0; m];
        let mut f_b = vec![0.0; m];
        let mut u = vec![0.0; problem.control_dim()];
        let sol = &self.trajectory;
        for k in 0..sol.t.len().saturating_sub(1) {
            let (ta, tb) = (sol.t[k], sol.t[k + 1]);
            let h = tb - ta;
            let tm = 0.5 * (ta + tb);
            self.control.eval_right(ta, &mut u);
            problem.dynamics(&sol.y[k], &u, &mut f_a);
            self.control.eval(tm, &mut u);
            problem.dynamics(&self.state_at(tm), &u, &mut f_mid);
            self.control.eval(tb, &mut u);
            problem.dynamics(&sol.y[k + 1], &u, &mut f_b);
            for i in 0..m {
                let dx = sol.y[k + 1][i] - sol.y[k][i];
                let simpson = h / 6.0 * (f_a[i] + 4.0 * f_mid[i] + f_b[i]);
                let scale = 1.0 + sol.y[k][i].abs().max(sol.y[k + 1][i].abs());
                worst = worst.max((dx - simpson).abs() / scale);
            }
        }
        worst
    }
}

/// Builds a candidate process from `b` under `policy` on `[0, cfg.t_end]`.
pub fn candidate_process(
    problem: &ControlProblem,
    policy: &Policy,
    b: &[f64],
    cfg: &CandidateConfig,
) -> Result<CandidateProcess> {
    let m = problem.state_dim();
    if b.len() != m {
        return Err(Error::Dimension {
            what: "initial state",
            expected: m,
            got: b.len(),
        });
    }
    if !problem.initial_set().contains(b, SET_TOL) {
        return Err(Error::InitialPointOutsideSet(b.to_vec()));
    }
    if !(cfg.t_end > 0.0) {
        return Err(Error::param("t_end", "must be positive"));
    }
    match policy {
        Policy::Feedback(law) => {
            let k = problem.control_dim();
            let mut u = vec![0.0; k];
            let reference = ode::integrate(
                |t, x, dx| {
                    law(t, x, &mut u);
                    problem.dynamics(x, &u, dx)
                },
                0.0,
                cfg.t_end,
                b,
                &cfg.ode,
                &[],
                |_, _| false,
            )?;
            CandidateProcess::from_replay(problem, Arc::new(reference), Arc::clone(law))
        }
        Policy::OpenLoop(control) => {
            if control.dim() != problem.control_dim() {
                return Err(Error::Dimension {
                    what: "control",
                    expected: problem.control_dim(),
                    got: control.dim(),
                });
            }
            let trajectory = integrate_driven(
                control.as_ref(),
                0.0,
                cfg.t_end,
                b,
                &cfg.ode,
                &[],
                |_, x, u, dx| problem.dynamics(x, u, dx),
                |_, _| false,
            )?;
            let c = CandidateProcess {
                initial_point: b.to_vec(),
                control: Arc::clone(control),
                trajectory,
            };
            c.validate(problem)?;
            Ok(c)
        }
    }
}
