//! Problem data: dynamics, discounted running cost, initial cost and the
//! initial and control sets.

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `(x, u, out)`: writes a vector (or a row-major matrix) into `out`.
pub type VectorFn = Arc<dyn Fn(&[f64], &[f64], &mut [f64]) + Send + Sync>;
/// `(x, u) -> scalar`.
pub type ScalarFn = Arc<dyn Fn(&[f64], &[f64]) -> f64 + Send + Sync>;
pub type InitialCostFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
pub type InitialGradFn = Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;

/// Per-dimension sample count of the box sampler.
pub const DEFAULT_SAMPLES_PER_DIM: usize = 101;
/// Cap on the total number of sampled control points.
pub const MAX_CONTROL_SAMPLES: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialSet {
    FreeSpace,
    Singleton { point: Vec<f64> },
    Box { lower: Vec<f64>, upper: Vec<f64> },
}

impl InitialSet {
    pub fn contains(&self, b: &[f64], tol: f64) -> bool {
        match self {
            InitialSet::FreeSpace => true,
            InitialSet::Singleton { point } => {
                point.len() == b.len() && point.iter().zip(b).all(|(p, v)| (p - v).abs() <= tol)
            }
            InitialSet::Box { lower, upper } => {
                lower.len() == b.len()
                    && b.iter()
                        .zip(lower.iter().zip(upper))
                        .all(|(v, (lo, hi))| *v >= lo - tol && *v <= hi + tol)
            }
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            InitialSet::FreeSpace => "free_space",
            InitialSet::Singleton { .. } => "singleton",
            InitialSet::Box { .. } => "box",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ControlSet {
    Box {
        lower: Vec<f64>,
        upper: Vec<f64>,
        samples_per_dim: usize,
    },
    FiniteSet {
        points: Vec<Vec<f64>>,
    },
}

impl ControlSet {
    pub fn interval(lower: f64, upper: f64) -> Self {
        ControlSet::Box {
            lower: vec![lower],
            upper: vec![upper],
            samples_per_dim: DEFAULT_SAMPLES_PER_DIM,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            ControlSet::Box { lower, .. } => lower.len(),
            ControlSet::FiniteSet { points } => points.first().map_or(0, Vec::len),
        }
    }

    pub fn contains(&self, u: &[f64], tol: f64) -> bool {
        match self {
            ControlSet::Box { lower, upper, .. } => {
                u.len() == lower.len()
                    && u.iter()
                        .zip(lower.iter().zip(upper))
                        .all(|(v, (lo, hi))| *v >= lo - tol && *v <= hi + tol)
            }
            ControlSet::FiniteSet { points } => points
                .iter()
                .any(|p| p.len() == u.len() && p.iter().zip(u).all(|(a, b)| (a - b).abs() <= tol)),
        }
    }

    /// Deterministic sample of the set: a uniform tensor grid (endpoints
    /// included) for a box, every point for a finite set.
    pub fn samples(&self) -> Vec<Vec<f64>> {
        match self {
            ControlSet::FiniteSet { points } => points.clone(),
            ControlSet::Box {
                lower,
                upper,
                samples_per_dim,
            } => {
                let k = lower.len();
                if k == 0 {
                    return vec![vec![]];
                }
                let mut per_dim = (*samples_per_dim).max(1);
                while per_dim > 1
                    && per_dim
                        .checked_pow(k as u32)
                        .map_or(true, |n| n > MAX_CONTROL_SAMPLES)
                {
                    per_dim -= 1;
                }
                let axes: Vec<Vec<f64>> = (0..k)
                    .map(|j| {
                        if per_dim == 1 || lower[j] == upper[j] {
                            vec![0.5 * (lower[j] + upper[j])]
                        } else {
                            (0..per_dim)
                                .map(|i| {
                                    let s = i as f64 / (per_dim - 1) as f64;
                                    lower[j] + s * (upper[j] - lower[j])
                                })
                                .collect()
                        }
                    })
                    .collect();
                let mut out = vec![Vec::with_capacity(k)];
                for axis in &axes {
                    let mut next = Vec::with_capacity(out.len() * axis.len());
                    for prefix in &out {
                        for &v in axis {
                            let mut p = prefix.clone();
                            p.push(v);
                            next.push(p);
                        }
                    }
                    out = next;
                }
                out
            }
        }
    }

    /// Componentwise projection onto a box; nearest point for a finite set.
    pub fn project(&self, u: &mut [f64]) {
        match self {
            ControlSet::Box { lower, upper, .. } => {
                for ((v, lo), hi) in u.iter_mut().zip(lower).zip(upper) {
                    *v = v.clamp(*lo, *hi);
                }
            }
            ControlSet::FiniteSet { points } => {
                if let Some(best) = points
                    .iter()
                    .min_by(|a, b| dist2(a, u).partial_cmp(&dist2(b, u)).unwrap())
                {
                    u.copy_from_slice(best);
                }
            }
        }
    }
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// The discounted Bolza problem: minimize `l(b) + ∫ e^{-rt} f0(x, u) dt`
/// subject to `x' = f(x, u)`, `u ∈ U`, `x(0) = b ∈ C`.
#[derive(Clone)]
pub struct ControlProblem {
    id: String,
    state_dim: usize,
    control_dim: usize,
    dynamics: VectorFn,
    dynamics_jac: VectorFn,
    running_cost: ScalarFn,
    running_cost_grad: VectorFn,
    discount: f64,
    initial_cost: InitialCostFn,
    initial_cost_grad: InitialGradFn,
    initial_set: InitialSet,
    control_set: ControlSet,
    cost_bound: Option<f64>,
}

impl fmt::Debug for ControlProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ControlProblem")
            .field("id", &self.id)
            .field("state_dim", &self.state_dim)
            .field("control_dim", &self.control_dim)
            .field("discount", &self.discount)
            .field("initial_set", &self.initial_set)
            .field("control_set", &self.control_set)
            .field("cost_bound", &self.cost_bound)
            .finish_non_exhaustive()
    }
}

impl ControlProblem {
    pub fn builder(id: impl Into<String>, state_dim: usize, control_dim: usize) -> ProblemBuilder {
        ProblemBuilder::new(id.into(), state_dim, control_dim)
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn control_dim(&self) -> usize {
        self.control_dim
    }

    pub fn discount(&self) -> f64 {
        self.discount
    }

    pub fn initial_set(&self) -> &InitialSet {
        &self.initial_set
    }

    pub fn control_set(&self) -> &ControlSet {
        &self.control_set
    }

    pub fn cost_bound(&self) -> Option<f64> {
        self.cost_bound
    }

    #[inline]
    pub fn dynamics(&self, x: &[f64], u: &[f64], out: &mut [f64]) {
        (self.dynamics)(x, u, out)
    }

    /// Row-major `m×m` Jacobian `∂f/∂x`.
    #[inline]
    pub fn dynamics_jac(&self, x: &[f64], u: &[f64], out: &mut [f64]) {
        (self.dynamics_jac)(x, u, out)
    }

    #[inline]
    pub fn running_cost(&self, x: &[f64], u: &[f64]) -> f64 {
        (self.running_cost)(x, u)
    }

    #[inline]
    pub fn running_cost_grad(&self, x: &[f64], u: &[f64], out: &mut [f64]) {
        (self.running_cost_grad)(x, u, out)
    }

    pub fn initial_cost(&self, b: &[f64]) -> f64 {
        (self.initial_cost)(b)
    }

    pub fn initial_cost_grad(&self, b: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.state_dim];
        (self.initial_cost_grad)(b, &mut g);
        g
    }

    /// Largest mismatch between the analytic derivatives and central
    /// differences at `samples` random points, each measured against
    /// `max(1e-5, 1e-4·‖J‖)`. Values `≤ 1` mean the derivatives agree.
    pub fn derivative_mismatch(&self, samples: usize, seed: u64, radius: f64) -> f64 {
        let m = self.state_dim;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut worst: f64 = 0.0;
        let mut jac = vec![0.0; m * m];
        let mut grad = vec![0.0; m];
        let mut fp = vec![0.0; m];
        let mut fm = vec![0.0; m];
        for _ in 0..samples {
            let x: Vec<f64> = (0..m).map(|_| rng.gen_range(-radius..radius)).collect();
            let u: Vec<f64> = match &self.control_set {
                // stay near the origin so the differences are not swamped by roundoff
                ControlSet::Box { lower, upper, .. } => lower
                    .iter()
                    .zip(upper)
                    .map(|(&lo, &hi)| {
                        let (a, b) = (lo.max(-radius), hi.min(radius));
                        if a < b {
                            rng.gen_range(a..b)
                        } else {
                            lo
                        }
                    })
                    .collect(),
                ControlSet::FiniteSet { points } => points[rng.gen_range(0..points.len())].clone(),
            };
            self.dynamics_jac(&x, &u, &mut jac);
            self.running_cost_grad(&x, &u, &mut grad);
            let jnorm = jac.iter().map(|v| v * v).sum::<f64>().sqrt();
            let gnorm = grad.iter().map(|v| v * v).sum::<f64>().sqrt();
            for j in 0..m {
                let h = 1e-6 * (1.0 + x[j].abs());
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[j] += h;
                xm[j] -= h;
                self.dynamics(&xp, &u, &mut fp);
                self.dynamics(&xm, &u, &mut fm);
                for i in 0..m {
                    let fd = (fp[i] - fm[i]) / (2.0 * h);
                    let err = (fd - jac[i * m + j]).abs() / (1e-5f64).max(1e-4 * jnorm);
                    worst = worst.max(err);
                }
                let gd = (self.running_cost(&xp, &u) - self.running_cost(&xm, &u)) / (2.0 * h);
                worst = worst.max((gd - grad[j]).abs() / (1e-5f64).max(1e-4 * gnorm));
            }
        }
        worst
    }

    /// Hamilton–Pontryagin function `ψ·f(x,u) − λ e^{−rt} f0(x,u)`.
    pub fn hamiltonian(&self, x: &[f64], u: &[f64], psi: &[f64], lambda: f64, t: f64) -> f64 {
        let mut f = vec![0.0; self.state_dim];
        self.dynamics(x, u, &mut f);
        let pf: f64 = psi.iter().zip(&f).map(|(a, b)| a * b).sum();
        if lambda == 0.0 {
            return pf;
        }
        pf - lambda * (-self.discount * t).exp() * self.running_cost(x, u)
    }
}

pub struct ProblemBuilder {
    id: String,
    state_dim: usize,
    control_dim: usize,
    dynamics: Option<VectorFn>,
    dynamics_jac: Option<VectorFn>,
    running_cost: Option<ScalarFn>,
    running_cost_grad: Option<VectorFn>,
    discount: f64,
    initial_cost: InitialCostFn,
    initial_cost_grad: InitialGradFn,
    initial_set: InitialSet,
    control_set: Option<ControlSet>,
    cost_bound: Option<f64>,
}

impl ProblemBuilder {
    fn new(id: String, state_dim: usize, control_dim: usize) -> Self {
        Self {
            id,
            state_dim,
            control_dim,
            dynamics: None,
            dynamics_jac: None,
            running_cost: None,
            running_cost_grad: None,
            discount: 0.0,
            initial_cost: Arc::new(|_| 0.0),
            initial_cost_grad: Arc::new(|_, g| g.iter_mut().for_each(|v| *v = 0.0)),
            initial_set: InitialSet::FreeSpace,
            control_set: None,
            cost_bound: None,
        }
    }

    pub fn dynamics(
        mut self,
        f: impl Fn(&[f64], &[f64], &mut [f64]) + Send + Sync + 'static,
        jac: impl Fn(&[f64], &[f64], &mut [f64]) + Send + Sync + 'static,
    ) -> Self {
        self.dynamics = Some(Arc::new(f));
        self.dynamics_jac = Some(Arc::new(jac));
        self
    }

    pub fn running_cost(
        mut self,
        f0: impl Fn(&[f64], &[f64]) -> f64 + Send + Sync + 'static,
        grad: impl Fn(&[f64], &[f64], &mut [f64]) + Send + Sync + 'static,
    ) -> Self {
        self.running_cost = Some(Arc::new(f0));
        self.running_cost_grad = Some(Arc::new(grad));
        self
    }

    pub fn discount(mut self, r: f64) -> Self {
        self.discount = r;
        self
    }

    pub fn initial_cost(
        mut self,
        l: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
        grad: impl Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
    ) -> Self {
        self.initial_cost = Arc::new(l);
        self.initial_cost_grad = Arc::new(grad);
        self
    }

    pub fn initial_set(mut self, set: InitialSet) -> Self {
        self.initial_set = set;
        self
    }

    pub fn control_set(mut self, set: ControlSet) -> Self {
        self.control_set = Some(set);
        self
    }

    pub fn cost_bound(mut self, bound: f64) -> Self {
        self.cost_bound = Some(bound);
        self
    }

    pub fn build(self) -> Result<ControlProblem> {
        if self.state_dim == 0 {
            return Err(Error::param("state_dim", "must be positive"));
        }
        if !(self.discount >= 0.0) || !self.discount.is_finite() {
            return Err(Error::param(
                "r",
                format!(
                    "discount must be a nonnegative number, got {}",
                    self.discount
                ),
            ));
        }
        let control_set = self
            .control_set
            .ok_or_else(|| Error::param("control_set", "missing"))?;
        if control_set.dim() != self.control_dim {
            return Err(Error::Dimension {
                what: "control set",
                expected: self.control_dim,
                got: control_set.dim(),
            });
        }
        match &control_set {
            ControlSet::Box { lower, upper, .. } => {
                if lower.len() != upper.len() || lower.iter().zip(upper).any(|(a, b)| !(a <= b)) {
                    return Err(Error::param("control_set", "box requires lower <= upper"));
                }
            }
            ControlSet::FiniteSet { points } => {
                if points.is_empty() {
                    return Err(Error::EmptySampler);
                }
            }
        }
        match &self.initial_set {
            InitialSet::FreeSpace => {}
            InitialSet::Singleton { point } => {
                if point.len() != self.state_dim {
                    return Err(Error::Dimension {
                        what: "initial point",
                        expected: self.state_dim,
                        got: point.len(),
                    });
                }
            }
            InitialSet::Box { lower, upper } => {
                if lower.len() != self.state_dim
                    || upper.len() != self.state_dim
                    || lower.iter().zip(upper).any(|(a, b)| !(a <= b))
                {
                    return Err(Error::param("initial_set", "box requires lower <= upper"));
                }
            }
        }
        if let Some(m) = self.cost_bound {
            if !(m >= 0.0) {
                return Err(Error::param("cost_bound", "must be nonnegative"));
            }
        }
        Ok(ControlProblem {
            id: self.id,
            state_dim: self.state_dim,
            control_dim: self.control_dim,
            dynamics: self
                .dynamics
                .ok_or_else(|| Error::param("dynamics", "missing"))?,
            dynamics_jac: self
                .dynamics_jac
                .ok_or_else(|| Error::param("dynamics_jac", "missing"))?,
            running_cost: self
                .running_cost
                .ok_or_else(|| Error::param("running_cost", "missing"))?,
            running_cost_grad: self
                .running_cost_grad
                .ok_or_else(|| Error::param("running_cost_grad", "missing"))?,
            discount: self.discount,
            initial_cost: self.initial_cost,
            initial_cost_grad: self.initial_cost_grad,
            initial_set: self.initial_set,
            control_set,
            cost_bound: self.cost_bound,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn box_sampler_includes_endpoints_and_caps_total() {
        let set = ControlSet::interval(0.0, 1.0);
        let s = set.samples();
        assert_eq!(s.len(), 101);
        assert_eq!(s[0], vec![0.0]);
        assert_eq!(s[100], vec![1.0]);

        let cube = ControlSet::Box {
            lower: vec![0.0; 3],
            upper: vec![1.0; 3],
            samples_per_dim: 101,
        };
        let n = cube.samples().len();
        assert!(n <= MAX_CONTROL_SAMPLES);
        assert_eq!(n, 21usize.pow(3));
    }

    #[test]
    fn finite_set_is_sampled_exhaustively() {
        let set = ControlSet::FiniteSet {
            points: vec![vec![0.0], vec![2.0], vec![-1.0]],
        };
        assert_eq!(set.samples().len(), 3);
        let mut u = [0.9];
        set.project(&mut u);
        assert_eq!(u, [0.0]);
        assert!(set.contains(&[2.0], 1e-12));
        assert!(!set.contains(&[1.0], 1e-12));
    }

    #[test]
    fn negative_discount_is_rejected() {
        let err = ControlProblem::builder("bad", 1, 1)
            .dynamics(|_, u, f| f[0] = u[0], |_, _, j| j[0] = 0.0)
            .running_cost(|x, _| x[0], |_, _, g| g[0] = 1.0)
            .discount(-1.0)
            .control_set(ControlSet::interval(0.0, 1.0))
            .build()
            .unwrap_err();
        assert!(matches!(err, Error::InvalidParameter { .. }));
    }

    #[test]
    fn inverted_box_is_rejected() {
        let err = ControlProblem::builder("bad", 1, 1)
            .dynamics(|_, u, f| f[0] = u[0], |_, _, j| j[0] = 0.0)
            .running_cost(|x, _| x[0], |_, _, g| g[0] = 1.0)
            .control_set(ControlSet::interval(1.0, 0.0))
            .build()
            .unwrap_err();
        assert!(matches!(err, Error::InvalidParameter { .. }));
    }

    #[test]
    fn box_membership_uses_tolerance() {
        let set = InitialSet::Box {
            lower: vec![0.0],
            upper: vec![2.0],
        };
        assert!(set.contains(&[2.0 + 1e-13], 1e-12));
        assert!(!set.contains(&[2.1], 1e-12));
    }
}
