//! Limiting co-states for discounted infinite-horizon optimal control.
//!
//! Given a problem `min l(b) + ∫_0^∞ e^{−rt} f0(x, u) dt`, `x' = f(x, u)`,
//! `x(0) = b ∈ C`, `u(t) ∈ U` and a candidate process, the crate
//!
//! * integrates the state together with the fundamental matrix `A(ξ;t)` and
//!   the gradient integral `I(ξ;T) = ∫_0^T e^{−rt} ∂f0/∂x A dt`;
//! * solves the finite-horizon adjoint problems `ψ(τ) = 0` backward,
//!   normalizes them and follows them to the limit `(λ*, ψ*)` as `τ → ∞`;
//! * checks the maximum condition, the Michel stationarity condition
//!   `H*[T] = −λ* r ∫_T^∞ e^{−rt} f0 dt`, transversality at zero, the
//!   abnormal case and the `r = 0`, constant-cost and shadow-price identities;
//! * shoots on `ψ(0)` for one-state problems;
//! * solves Euler transcriptions by brute force as an independent reference.
//!
//! ```
//! use horizon_limit::{catalog_entry, candidate_process, limiting_costate,
//!     CandidateConfig, CostateConfig, HorizonSequence, Params};
//!
//! let entry = catalog_entry("LQ1", &Params::new()).unwrap();
//! let cand = candidate_process(&entry.problem, &entry.policy, &entry.b,
//!     &CandidateConfig::default()).unwrap();
//! let lim = limiting_costate(&entry.problem, &cand, &HorizonSequence::default(),
//!     &CostateConfig::default()).unwrap();
//! assert_eq!(lim.lambda_star, 1.0);
//! assert!((lim.psi0_star[0] + (5f64.sqrt() - 1.0)).abs() < 1e-6);
//! ```

pub mod candidate;
pub mod catalog;
pub mod control;
pub mod costate;
pub mod error;
pub mod horizons;
pub mod integrate;
pub mod io;
pub mod ode;
pub mod oracle;
pub mod problem;
pub mod shoot;
pub mod verify;

pub use candidate::{candidate_process, CandidateConfig, CandidateProcess, Policy};
pub use catalog::{
    catalog_entry, catalog_policy, instantiate_problem, riccati_root, CatalogEntry, CatalogId,
    Params,
};
pub use control::{ConstantControl, Control, FnControl, PolicyFn, ReplayControl, TabulatedControl};
pub use costate::{
    finite_horizon_costate, hamiltonian, hamiltonian_trace, horizon_costates, limiting_costate,
    limiting_from_initial, CostateConfig, HamiltonianTrace, HorizonCostate, HorizonRow,
    LimitingSolution,
};
pub use error::{Error, Result};
pub use horizons::{HorizonGenerator, HorizonSequence};
pub use integrate::{
    accumulate_gradient_integral, payoff, solve_fundamental, solve_state, tail_payoff,
    FundamentalTrace, PayoffAccount, TailConfig, TailEstimate, Trajectory,
};
pub use ode::{OdeOptions, OdeSolution};
pub use oracle::{discrete_adjoint, transcribe, OracleConfig, OracleStatus, Transcription};
pub use problem::{ControlProblem, ControlSet, InitialSet, ProblemBuilder};
pub use shoot::{michel_residual, shoot_scalar, ShootConfig, ShootResult};
pub use verify::{
    check_abnormal, check_hartwick, check_maximum_condition, check_michel, check_r_zero,
    check_shadow_price, check_transversality_zero, limiting_sequence_report, verify, CheckResult,
    CheckStatus, MichelConfig, SequenceReport, ValueFunctionModel, VerificationReport,
    VerifyConfig,
};
