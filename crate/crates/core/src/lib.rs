//! Local convergence certification for the two-step third-order Newton
//! method.
//!
//! The crate computes convergence-ball radii under generalized
//! ("L-average") Lipschitz conditions, runs the iteration on concrete
//! problems and checks the observed errors against the a-priori
//! envelopes that the radius theory predicts.
//!
//! ```
//! use ballcert::{solve_radius, LAverage, RadiusCondition};
//!
//! let cert = solve_radius(RadiusCondition::T52, &LAverage::constant(1.0)?, 1e-12)?;
//! assert!((cert.r - 1.0 / 6.0).abs() < 1e-10);
//! # Ok::<(), ballcert::Error>(())
//! ```

pub mod error;
pub mod iterate;
pub mod laverage;
pub mod linalg;
pub mod problems;
pub mod quadrature;
pub mod radius;
pub mod verify;

pub use error::{Error, Result};
pub use iterate::{
    estimate_order, estimate_order_from_errors, fmt_float, jacobian_fd, two_step_newton, IterationTrace,
    NonlinearProblem, OrderEstimate, Step, StopRule, Termination,
};
pub use laverage::{
    audit_condition, center_identity, check_nondecreasing, estimate_constant, radius_identity,
    weak_average_check, ConditionAudit, ConstantEstimate, IdentityCheck, LAverage, LipschitzKind, Monotonicity,
    RootJacobian, WeakAverageCheck, Witness,
};
pub use linalg::{solve_linear, Lu, Matrix};
pub use problems::{derivative_audit, derivative_audit_at, entry, suite, DerivativeAudit, SuiteEntry, SuiteListing};
pub use quadrature::{integrate, integrate_from_zero, QuadratureConfig};
pub use radius::{
    closed_form_radius, cross_validate, solve_radius, ClosedFormId, CrossValidation, RadiusCertificate,
    RadiusCondition,
};
pub use verify::{
    global_bound, global_envelope, per_step_bounds, printed_example_c, q_factors, uniqueness_probe, EnvelopeKind,
    EnvelopeRecord, EnvelopeReport, QFactors, Theorem, UniquenessReport,
};
