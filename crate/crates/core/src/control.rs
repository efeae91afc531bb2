//! Open-loop controls `t ↦ u(t)`.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::ode::{dense_eval, OdeSolution};

/// An open-loop control. `eval` is left-continuous; `eval_right` returns the
/// right limit, which differs from `eval` only at breakpoints.
pub trait Control: Send + Sync {
    fn dim(&self) -> usize;

    fn eval(&self, t: f64, out: &mut [f64]);

    fn eval_right(&self, t: f64, out: &mut [f64]) {
        self.eval(t, out)
    }

    /// Jump times strictly inside `(a, b)` (either orientation), ascending.
    fn breakpoints(&self, _a: f64, _b: f64) -> Vec<f64> {
        Vec::new()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConstantControl(pub Vec<f64>);

impl Control for ConstantControl {
    fn dim(&self) -> usize {
        self.0.len()
    }

    fn eval(&self, _t: f64, out: &mut [f64]) {
        out.copy_from_slice(&self.0);
    }
}

/// Control given as a closure of time. Assumed continuous.
pub struct FnControl {
    dim: usize,
    f: Arc<dyn Fn(f64, &mut [f64]) + Send + Sync>,
}

impl FnControl {
    pub fn new(dim: usize, f: impl Fn(f64, &mut [f64]) + Send + Sync + 'static) -> Self {
        Self {
            dim,
            f: Arc::new(f),
        }
    }
}

impl Control for FnControl {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, t: f64, out: &mut [f64]) {
        (self.f)(t, out)
    }
}

/// Piecewise-constant, left-continuous control: row `k` holds on
/// `(t_k, t_{k+1}]`, the first row also at `t_0`, the last row after `t_last`.
#[derive(Debug, Clone, PartialEq)]
pub struct TabulatedControl {
    times: Vec<f64>,
    values: Vec<Vec<f64>>,
}

impl TabulatedControl {
    pub fn new(times: Vec<f64>, values: Vec<Vec<f64>>) -> Result<Self> {
        if times.is_empty() || times.len() != values.len() {
            return Err(Error::Parse(format!(
                "tabulated control needs matching non-empty columns ({} times, {} rows)",
                times.len(),
                values.len()
            )));
        }
        if times.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::Parse(
                "tabulated control times must be strictly increasing".into(),
            ));
        }
        let k = values[0].len();
        if values.iter().any(|v| v.len() != k) {
            return Err(Error::Parse(
                "tabulated control rows differ in width".into(),
            ));
        }
        Ok(Self { times, values })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[Vec<f64>] {
        &self.values
    }
}

impl Control for TabulatedControl {
    fn dim(&self) -> usize {
        self.values[0].len()
    }

    fn eval(&self, t: f64, out: &mut [f64]) {
        // number of knots strictly below t
        let below = self.times.partition_point(|&s| s < t);
        let k = below.saturating_sub(1);
        out.copy_from_slice(&self.values[k]);
    }

    fn eval_right(&self, t: f64, out: &mut [f64]) {
        let upto = self.times.partition_point(|&s| s <= t);
        let k = upto.saturating_sub(1);
        out.copy_from_slice(&self.values[k]);
    }

    fn breakpoints(&self, a: f64, b: f64) -> Vec<f64> {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        self.times
            .iter()
            .skip(1)
            .copied()
            .filter(|&s| s > lo && s < hi)
            .collect()
    }
}

pub type PolicyFn = Arc<dyn Fn(f64, &[f64], &mut [f64]) + Send + Sync>;

/// A feedback law `(t, y) ↦ u` evaluated along a stored reference solution
/// and thereby frozen into a function of time. Past the end of the reference
/// the control holds its final value.
#[derive(Clone)]
pub struct ReplayControl {
    reference: Arc<OdeSolution>,
    policy: PolicyFn,
    dim: usize,
    end: f64,
}

impl ReplayControl {
    pub fn new(reference: Arc<OdeSolution>, dim: usize, policy: PolicyFn) -> Self {
        let end = reference.last_time();
        Self {
            reference,
            policy,
            dim,
            end,
        }
    }

    pub fn reference(&self) -> &OdeSolution {
        &self.reference
    }

    pub fn end(&self) -> f64 {
        self.end
    }
}

impl Control for ReplayControl {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, t: f64, out: &mut [f64]) {
        let tt = t.clamp(self.reference.t[0], self.end);
        let mut y = vec![0.0; self.reference.dim()];
        dense_eval(&self.reference, tt, &mut y);
        (self.policy)(tt, &y, out);
    }
}
