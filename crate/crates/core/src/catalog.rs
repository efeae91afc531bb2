//! Built-in benchmark problems with closed-form optimal processes.
//!
//! | id      | dynamics    | running cost | r     | U        | C            |
//! |---------|-------------|--------------|-------|----------|--------------|
//! | `LQ1`   | `x' = u`    | `x² + u²`    | `r`   | `[-a,a]` | `{b}`        |
//! | `LQ1F`  | `x' = u`    | `x² + u²`    | `r`   | `[-a,a]` | free, `l = −2p·b·x` |
//! | `LQ0`   | `x' = u`    | `x² + u²`    | 0     | `[-a,a]` | `{b}`        |
//! | `ABN1`  | `x' = x + u`| `x`          | `r`   | `[0,1]`  | `{0}`        |
//! | `CONST1`| `x' = u`    | `x`          | `r`   | `[0,1]`  | `{c}`        |
//!
//! For the quadratic problems the optimal feedback is `u = −p·x` where `p`
//! is the positive root of `p² + r·p − 1 = 0`; `a` (`u_max`) only bounds the
//! sampled control box and defaults to 1e6 (large enough that unstable
//! extremals diverge instead of saturating). `ABN1` and `CONST1` are optimal at
//! `u ≡ 0`; `ABN1` is the abnormal example (`λ* = 0`).

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::candidate::Policy;
use crate::control::ConstantControl;
use crate::error::{Error, Result};
use crate::problem::{ControlProblem, ControlSet, InitialSet};
use crate::verify::ValueFunctionModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CatalogId {
    #[serde(rename = "LQ1")]
    Lq1,
    #[serde(rename = "LQ1F")]
    Lq1Free,
    #[serde(rename = "LQ0")]
    Lq0,
    #[serde(rename = "ABN1")]
    Abn1,
    #[serde(rename = "CONST1")]
    Const1,
    #[serde(rename = "custom")]
    Custom,
}

impl CatalogId {
    pub const BUILT_IN: [CatalogId; 5] = [
        CatalogId::Lq1,
        CatalogId::Lq1Free,
        CatalogId::Lq0,
        CatalogId::Abn1,
        CatalogId::Const1,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            CatalogId::Lq1 => "LQ1",
            CatalogId::Lq1Free => "LQ1F",
            CatalogId::Lq0 => "LQ0",
            CatalogId::Abn1 => "ABN1",
            CatalogId::Const1 => "CONST1",
            CatalogId::Custom => "custom",
        }
    }

    /// One-line description of the problem.
    pub fn summary(&self) -> &'static str {
        match self {
            CatalogId::Lq1 => "x' = u, f0 = x^2 + u^2, r = 1, x(0) = b fixed",
            CatalogId::Lq1Free => "LQ1 with free start and l(x) = -2p b x",
            CatalogId::Lq0 => "x' = u, f0 = x^2 + u^2, r = 0, candidate u = -x",
            CatalogId::Abn1 => "x' = x + u, f0 = x, u in [0, 1], x(0) = 0 (abnormal limit)",
            CatalogId::Const1 => "x' = u, f0 = x, u in [0, 1], x(0) = c, candidate u = 0",
            CatalogId::Custom => "assembled with ControlProblem::builder",
        }
    }

    /// Parameter names accepted by [`catalog_entry`].
    pub fn allowed_params(&self) -> &'static [&'static str] {
        match self {
            CatalogId::Lq1 | CatalogId::Lq1Free => &["b", "r", "u_max"],
            CatalogId::Lq0 => &["b", "u_max"],
            CatalogId::Abn1 => &["r"],
            CatalogId::Const1 => &["b", "c", "r"],
            CatalogId::Custom => &[],
        }
    }
}

impl fmt::Display for CatalogId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CatalogId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "LQ1" => Ok(CatalogId::Lq1),
            "LQ1F" => Ok(CatalogId::Lq1Free),
            "LQ0" => Ok(CatalogId::Lq0),
            "ABN1" => Ok(CatalogId::Abn1),
            "CONST1" => Ok(CatalogId::Const1),
            "custom" => Ok(CatalogId::Custom),
            other => Err(Error::UnknownProblem(other.to_string())),
        }
    }
}

/// Positive root of `p² + r·p − 1 = 0`.
pub fn riccati_root(r: f64) -> f64 {
    0.5 * (-r + (r * r + 4.0).sqrt())
}

pub type Params = BTreeMap<String, f64>;

/// Default half-width of the quadratic problems' control box.
pub const DEFAULT_U_MAX: f64 = 1e6;

struct Resolved {
    id: CatalogId,
    b: f64,
    r: f64,
    u_max: f64,
}

fn resolve(id: CatalogId, params: &Params) -> Result<Resolved> {
    if id == CatalogId::Custom {
        return Err(Error::Unsupported(
            "custom problems are assembled with ControlProblem::builder".into(),
        ));
    }
    for key in params.keys() {
        if !id.allowed_params().contains(&key.as_str()) {
            return Err(Error::param(key, format!("not a parameter of {id}")));
        }
    }
    let get = |k: &str, default: f64| params.get(k).copied().unwrap_or(default);
    let (b, r) = match id {
        CatalogId::Lq1 | CatalogId::Lq1Free => (get("b", 1.0), get("r", 1.0)),
        CatalogId::Lq0 => (get("b", 1.0), 0.0),
        CatalogId::Abn1 => (0.0, get("r", 0.5)),
        CatalogId::Const1 => (
            params.get("c").copied().unwrap_or(get("b", 1.0)),
            get("r", 1.0),
        ),
        CatalogId::Custom => unreachable!(),
    };
    let u_max = get("u_max", DEFAULT_U_MAX);
    if !b.is_finite() {
        return Err(Error::param("b", "must be finite"));
    }
    if !(r >= 0.0) || !r.is_finite() {
        return Err(Error::param(
            "r",
            format!("discount must be nonnegative, got {r}"),
        ));
    }
    if id == CatalogId::Abn1 && !(r > 0.0 && r < 1.0) {
        return Err(Error::param("r", "ABN1 needs 0 < r < 1"));
    }
    if id == CatalogId::Const1 && !(r > 0.0) {
        return Err(Error::param("r", "CONST1 needs r > 0"));
    }
    if !(u_max > 0.0) {
        return Err(Error::param("u_max", "must be positive"));
    }
    Ok(Resolved { id, b, r, u_max })
}

/// Builds the catalog problem `id` with `params` applied over the defaults.
pub fn instantiate_problem(id: &str, params: &Params) -> Result<ControlProblem> {
    let id: CatalogId = id.parse()?;
    let p = resolve(id, params)?;
    build(&p)
}

fn build(p: &Resolved) -> Result<ControlProblem> {
    let quadratic = |builder: crate::problem::ProblemBuilder| {
        builder
            .dynamics(|_, u, f| f[0] = u[0], |_, _, j| j[0] = 0.0)
            .running_cost(
                |x, u| x[0] * x[0] + u[0] * u[0],
                |x, _, g| g[0] = 2.0 * x[0],
            )
    };
    match p.id {
        CatalogId::Lq1 | CatalogId::Lq0 => quadratic(ControlProblem::builder(p.id.as_str(), 1, 1))
            .discount(p.r)
            .initial_set(InitialSet::Singleton { point: vec![p.b] })
            .control_set(ControlSet::interval(-p.u_max, p.u_max))
            .build(),
        CatalogId::Lq1Free => {
            // l(x) = −2p·b·x makes x(0) = b optimal for the free start.
            let slope = -2.0 * riccati_root(p.r) * p.b;
            quadratic(ControlProblem::builder(p.id.as_str(), 1, 1))
                .discount(p.r)
                .initial_cost(move |x| slope * x[0], move |_, g| g[0] = slope)
                .initial_set(InitialSet::FreeSpace)
                .control_set(ControlSet::interval(-p.u_max, p.u_max))
                .build()
        }
        CatalogId::Abn1 => ControlProblem::builder(p.id.as_str(), 1, 1)
            .dynamics(|x, u, f| f[0] = x[0] + u[0], |_, _, j| j[0] = 1.0)
            .running_cost(|x, _| x[0], |_, _, g| g[0] = 1.0)
            .discount(p.r)
            .initial_set(InitialSet::Singleton { point: vec![0.0] })
            .control_set(ControlSet::interval(0.0, 1.0))
            .build(),
        CatalogId::Const1 => ControlProblem::builder(p.id.as_str(), 1, 1)
            .dynamics(|_, u, f| f[0] = u[0], |_, _, j| j[0] = 0.0)
            .running_cost(|x, _| x[0], |_, _, g| g[0] = 1.0)
            .discount(p.r)
            .initial_set(InitialSet::Singleton { point: vec![p.b] })
            .control_set(ControlSet::interval(0.0, 1.0))
            .build(),
        CatalogId::Custom => unreachable!(),
    }
}

/// A catalog problem with its optimal policy and starting point.
#[derive(Clone)]
pub struct CatalogEntry {
    pub id: CatalogId,
    pub problem: ControlProblem,
    pub policy: Policy,
    pub b: Vec<f64>,
    /// Undiscounted value model (`LQ0` only).
    pub value_model: Option<ValueFunctionModel>,
}

pub fn catalog_entry(id: &str, params: &Params) -> Result<CatalogEntry> {
    let cid: CatalogId = id.parse()?;
    let p = resolve(cid, params)?;
    let problem = build(&p)?;
    let policy = catalog_policy(&problem)?;
    let value_model = (cid == CatalogId::Lq0).then(|| ValueFunctionModel {
        value: Arc::new(|b: &[f64]| b[0] * b[0]),
        h_infty: 0.0,
        domain: (vec![p.b - 1.0], vec![p.b + 1.0]),
    });
    Ok(CatalogEntry {
        id: cid,
        problem,
        policy,
        b: vec![p.b],
        value_model,
    })
}

/// The optimal policy of a catalog problem: `u = −p·x` for the quadratic
/// problems, `u ≡ 0` otherwise.
pub fn catalog_policy(problem: &ControlProblem) -> Result<Policy> {
    let id: CatalogId = problem.id().parse()?;
    match id {
        CatalogId::Lq1 | CatalogId::Lq1Free | CatalogId::Lq0 => {
            let p = riccati_root(problem.discount());
            Ok(Policy::Feedback(Arc::new(
                move |_, x: &[f64], u: &mut [f64]| u[0] = -p * x[0],
            )))
        }
        CatalogId::Abn1 | CatalogId::Const1 => {
            Ok(Policy::OpenLoop(Arc::new(ConstantControl(vec![0.0]))))
        }
        CatalogId::Custom => Err(Error::Unsupported(
            "custom problems need an explicit policy".into(),
        )),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(kv: &[(&str, f64)]) -> Params {
        kv.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    #[test]
    fn lq1_is_a_discounted_singleton_problem() {
        let p = instantiate_problem("LQ1", &params(&[("b", 1.0)])).unwrap();
        assert_eq!(p.state_dim(), 1);
        assert_eq!(p.discount(), 1.0);
        assert_eq!(p.initial_set(), &InitialSet::Singleton { point: vec![1.0] });
    }

    #[test]
    fn abn1_has_unit_interval_controls() {
        let p = instantiate_problem("ABN1", &Params::new()).unwrap();
        assert_eq!(p.discount(), 0.5);
        assert_eq!(p.initial_set(), &InitialSet::Singleton { point: vec![0.0] });
        assert!(
            matches!(p.control_set(), ControlSet::Box { lower, upper, .. } if lower == &vec![0.0] && upper == &vec![1.0])
        );
    }

    #[test]
    fn lq1f_initial_cost_gradient() {
        let p = instantiate_problem("LQ1F", &params(&[("b", 1.0)])).unwrap();
        // p² + p − 1 = 0 at r = 1
        let g = p.initial_cost_grad(&[1.0]);
        assert!((g[0] - (-(5f64.sqrt() - 1.0))).abs() < 1e-15);
        assert!((g[0] + 1.2360680).abs() < 1e-7);
    }

    #[test]
    fn riccati_root_solves_quadratic() {
        for r in [0.0, 0.5, 1.0, 3.0] {
            let p = riccati_root(r);
            assert!((p * p + r * p - 1.0).abs() < 1e-14);
            assert!(p > 0.0);
        }
        assert!((riccati_root(1.0) - 0.6180339887498949).abs() < 1e-15);
    }

    #[test]
    fn rejects_unknown_ids_and_bad_parameters() {
        assert!(matches!(
            instantiate_problem("LQ9", &Params::new()),
            Err(Error::UnknownProblem(_))
        ));
        assert!(matches!(
            instantiate_problem("LQ1", &params(&[("r", -1.0)])),
            Err(Error::InvalidParameter { .. })
        ));
        assert!(matches!(
            instantiate_problem("LQ0", &params(&[("r", 1.0)])),
            Err(Error::InvalidParameter { .. })
        ));
        assert!(matches!(
            instantiate_problem("custom", &Params::new()),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn catalog_derivatives_match_finite_differences() {
        for id in CatalogId::BUILT_IN {
            let p = instantiate_problem(id.as_str(), &Params::new()).unwrap();
            let worst = p.derivative_mismatch(100, 7, 3.0);
            assert!(worst <= 1.0, "{id}: mismatch ratio {worst}");
        }
    }
}
