//! The two-step third-order Newton scheme
//!
//! ```text
//! y_k     = x_k - t'(x_k)⁻¹ t(x_k)
//! x_{k+1} = y_k - t'(x_k)⁻¹ t(y_k)
//! ```
//!
//! with one Jacobian evaluation and one LU factorization per iteration.

use std::fmt;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::laverage::sample_ball;
use crate::linalg::{distance, norm2, Lu, Matrix};

/// Iterates beyond this norm count as divergence.
pub const DIVERGENCE_NORM: f64 = 1e12;
/// Errors at or below this level carry no information about the order.
pub const ORDER_ERROR_FLOOR: f64 = 1e-13;

pub type EvalFn = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;
pub type JacobianFn = Arc<dyn Fn(&[f64]) -> Matrix + Send + Sync>;

/// A square nonlinear system `t(x) = 0` on `Rⁿ`.
#[derive(Clone)]
pub struct NonlinearProblem {
    name: String,
    dim: usize,
    eval: EvalFn,
    jacobian: Option<JacobianFn>,
    root: Option<Vec<f64>>,
    ball_radius: Option<f64>,
}

impl fmt::Debug for NonlinearProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("NonlinearProblem")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("analytic_jacobian", &self.jacobian.is_some())
            .field("root", &self.root)
            .field("ball_radius", &self.ball_radius)
            .finish()
    }
}

impl NonlinearProblem {
    pub fn new<F>(name: impl Into<String>, dim: usize, eval: F) -> Self
    where
        F: Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
    {
        Self {
            name: name.into(),
            dim,
            eval: Arc::new(eval),
            jacobian: None,
            root: None,
            ball_radius: None,
        }
    }

    /// Scalar problem from `t` and `t'`.
    pub fn scalar<F, D>(name: impl Into<String>, f: F, df: D) -> Self
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
        D: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        Self::new(name, 1, move |x| vec![f(x[0])])
            .with_jacobian(move |x| Matrix::from_row_major(1, 1, vec![df(x[0])]).expect("1x1"))
    }

    pub fn with_jacobian<J>(mut self, jacobian: J) -> Self
    where
        J: Fn(&[f64]) -> Matrix + Send + Sync + 'static,
    {
        self.jacobian = Some(Arc::new(jacobian));
        self
    }

    pub fn with_root(mut self, root: Vec<f64>) -> Self {
        self.root = Some(root);
        self
    }

    pub fn with_ball_radius(mut self, r: f64) -> Self {
        self.ball_radius = Some(r);
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn root(&self) -> Option<&[f64]> {
        self.root.as_deref()
    }

    pub fn ball_radius(&self) -> Option<f64> {
        self.ball_radius
    }

    pub fn has_analytic_jacobian(&self) -> bool {
        self.jacobian.is_some()
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: x.len(),
            });
        }
        Ok(())
    }

    pub fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(x)?;
        let v = (self.eval)(x);
        if v.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: v.len(),
            });
        }
        Ok(v)
    }

    /// Analytic Jacobian if one was supplied, central differences otherwise.
    pub fn jacobian(&self, x: &[f64]) -> Result<Matrix> {
        self.check_dim(x)?;
        match &self.jacobian {
            Some(j) => {
                let m = j(x);
                if m.rows() != self.dim || m.cols() != self.dim {
                    return Err(Error::DimensionMismatch {
                        expected: self.dim,
                        got: m.rows().max(m.cols()),
                    });
                }
                Ok(m)
            }
            None => jacobian_fd(self, x),
        }
    }

    /// Checks the root residual and, for an analytic Jacobian, agreement
    /// with central differences at 10 seeded points of the ball.
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::InvalidParameter("dimension must be positive".into()));
        }
        if let Some(r) = self.ball_radius {
            if !(r > 0.0 && r.is_finite()) {
                return Err(Error::InvalidParameter(format!("ball radius must be positive, got {r}")));
            }
        }
        if let Some(root) = &self.root {
            let res = norm2(&self.eval(root)?);
            if !(res <= 1e-10 * (1.0 + norm2(root))) {
                return Err(Error::InvalidParameter(format!(
                    "`{}`: residual {res:e} at the stated root",
                    self.name
                )));
            }
        }
        if self.jacobian.is_some() {
            let center = self.root.clone().unwrap_or_else(|| vec![0.0; self.dim]);
            let r = self.ball_radius.unwrap_or(1.0);
            let mut rng = ChaCha8Rng::seed_from_u64(0);
            for _ in 0..10 {
                let x = sample_ball(&mut rng, &center, r);
                let ja = self.jacobian(&x)?;
                let jf = jacobian_fd(self, &x)?;
                let tol = 1e-6f64.max(1e-6 * ja.operator_norm());
                let gap = ja.sub(&jf).max_abs();
                if !(gap <= tol) {
                    return Err(Error::InvalidParameter(format!(
                        "`{}`: analytic Jacobian differs from finite differences by {gap:e} at {x:?}",
                        self.name
                    )));
                }
            }
        }
        Ok(())
    }

    /// The problem `A ∘ t` for a fixed square matrix `A`.
    pub fn premultiplied(&self, a: Matrix) -> Result<Self> {
        if a.rows() != self.dim || a.cols() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: a.rows(),
            });
        }
        let a = Arc::new(a);
        let inner = self.eval.clone();
        let a_eval = a.clone();
        let mut out = Self::new(format!("A*{}", self.name), self.dim, move |x| a_eval.mul_vec(&inner(x)));
        if let Some(j) = self.jacobian.clone() {
            out = out.with_jacobian(move |x| a.mul(&j(x)));
        }
        out.root = self.root.clone();
        out.ball_radius = self.ball_radius;
        Ok(out)
    }
}

/// Central-difference Jacobian with steps `h_j = max(1e-7, 1e-7 |x_j|)`.
pub fn jacobian_fd(p: &NonlinearProblem, x: &[f64]) -> Result<Matrix> {
    p.check_dim(x)?;
    let n = p.dim();
    let mut jac = Matrix::zeros(n, n);
    let mut xp = x.to_vec();
    for j in 0..n {
        let h = 1e-7f64.max(1e-7 * x[j].abs());
        xp[j] = x[j] + h;
        let fp = p.eval(&xp)?;
        xp[j] = x[j] - h;
        let fm = p.eval(&xp)?;
        xp[j] = x[j];
        for i in 0..n {
            jac[(i, j)] = (fp[i] - fm[i]) / (2.0 * h);
        }
    }
    Ok(jac)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StopRule {
    pub max_iter: usize,
    pub x_tol: f64,
    pub f_tol: f64,
}

impl Default for StopRule {
    fn default() -> Self {
        Self {
            max_iter: 50,
            x_tol: 1e-14,
            f_tol: 1e-14,
        }
    }
}

impl StopRule {
    pub fn validate(&self) -> Result<()> {
        if self.max_iter == 0 || !(self.x_tol > 0.0) || !(self.f_tol > 0.0) {
            return Err(Error::InvalidParameter(
                "stop rule needs max_iter >= 1 and positive tolerances".into(),
            ));
        }
        Ok(())
    }
}

/// One recorded iterate. The last step of a trace is terminal and carries
/// `y = x` since no sub-step was taken from it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub n: usize,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub rho_x: Option<f64>,
    pub rho_y: Option<f64>,
    pub f_norm_x: f64,
    pub f_norm_y: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Converged,
    MaxIter,
    SingularJacobian,
    Diverged,
}

impl fmt::Display for Termination {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Termination::Converged => "converged",
            Termination::MaxIter => "max_iter",
            Termination::SingularJacobian => "singular_jacobian",
            Termination::Diverged => "diverged",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationTrace {
    pub problem: String,
    pub root: Option<Vec<f64>>,
    pub steps: Vec<Step>,
    pub termination: Termination,
}

impl IterationTrace {
    /// Number of full iterations performed (the terminal record excluded).
    pub fn iterations(&self) -> usize {
        self.steps.len().saturating_sub(1)
    }

    pub fn last(&self) -> &Step {
        self.steps.last().expect("traces are never empty")
    }

    /// `ρ(x_n)` for every recorded step, or `MissingRoot`.
    pub fn errors(&self) -> Result<Vec<f64>> {
        self.steps.iter().map(|s| s.rho_x.ok_or(Error::MissingRoot)).collect()
    }

    /// CSV with columns `n,x,y,rho_x,rho_y,f_norm`; vector entries are
    /// joined by `;` and missing distances left empty.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["n", "x", "y", "rho_x", "rho_y", "f_norm"])?;
        let join = |v: &[f64]| v.iter().map(|x| fmt_float(*x)).collect::<Vec<_>>().join(";");
        let opt = |v: Option<f64>| v.map(fmt_float).unwrap_or_default();
        for s in &self.steps {
            w.write_record([
                s.n.to_string(),
                join(&s.x),
                join(&s.y),
                opt(s.rho_x),
                opt(s.rho_y),
                fmt_float(s.f_norm_x),
            ])?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::Io(e.to_string()))
    }
}

/// 17 significant digits, which round-trips every `f64`.
pub fn fmt_float(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        v.to_string()
    }
}

/// Runs the two-step scheme from `x0`.
///
/// Each loop first checks for divergence, then the residual, then the
/// iteration budget, and only then factors `t'(x)`. A step whose length
/// drops below `x_tol` ends the run as converged.
pub fn two_step_newton(p: &NonlinearProblem, x0: &[f64], stop: &StopRule) -> Result<IterationTrace> {
    p.check_dim(x0)?;
    stop.validate()?;
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter("x0 must be finite".into()));
    }
    let root = p.root().map(<[f64]>::to_vec);
    let rho = |v: &[f64]| root.as_ref().map(|r| distance(v, r));
    let mut steps = Vec::new();
    let mut x = x0.to_vec();

    let terminal = |n: usize, x: &[f64], f_norm: f64| Step {
        n,
        x: x.to_vec(),
        y: x.to_vec(),
        rho_x: rho(x),
        rho_y: rho(x),
        f_norm_x: f_norm,
        f_norm_y: f_norm,
    };

    let mut k = 0;
    let termination = loop {
        if x.iter().any(|v| !v.is_finite()) || norm2(&x) > DIVERGENCE_NORM {
            steps.push(terminal(k, &x, f64::NAN));
            break Termination::Diverged;
        }
        let fx = p.eval(&x)?;
        let f_norm_x = norm2(&fx);
        if !f_norm_x.is_finite() {
            steps.push(terminal(k, &x, f_norm_x));
            break Termination::Diverged;
        }
        if f_norm_x <= stop.f_tol {
            steps.push(terminal(k, &x, f_norm_x));
            break Termination::Converged;
        }
        if k == stop.max_iter {
            steps.push(terminal(k, &x, f_norm_x));
            break Termination::MaxIter;
        }
        let jac = p.jacobian(&x)?;
        let lu = match Lu::factor(&jac) {
            Ok(lu) => lu,
            Err(Error::SingularMatrix { .. }) | Err(Error::InvalidParameter(_)) => {
                steps.push(terminal(k, &x, f_norm_x));
                break Termination::SingularJacobian;
            }
            Err(e) => return Err(e),
        };
        let d1 = lu.solve(&fx)?;
        let y: Vec<f64> = x.iter().zip(&d1).map(|(a, b)| a - b).collect();
        let fy = p.eval(&y)?;
        let f_norm_y = norm2(&fy);
        let d2 = lu.solve(&fy)?;
        let x_next: Vec<f64> = y.iter().zip(&d2).map(|(a, b)| a - b).collect();
        steps.push(Step {
            n: k,
            rho_x: rho(&x),
            rho_y: rho(&y),
            x: std::mem::take(&mut x),
            y,
            f_norm_x,
            f_norm_y,
        });
        let step_len = distance(&x_next, &steps[steps.len() - 1].x);
        x = x_next;
        k += 1;
        if step_len <= stop.x_tol {
            let f_norm = p.eval(&x).map(|f| norm2(&f))?;
            steps.push(terminal(k, &x, f_norm));
            break Termination::Converged;
        }
    };

    Ok(IterationTrace {
        problem: p.name().to_string(),
        root,
        steps,
        termination,
    })
}

/// Computational order of convergence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrderEstimate {
    pub order: f64,
    pub ok: bool,
    /// Number of errors above the floor that entered the estimate.
    pub usable: usize,
}

/// COC from the trace's distances to the root.
pub fn estimate_order(trace: &IterationTrace) -> Result<OrderEstimate> {
    estimate_order_from_errors(&trace.errors()?)
}

/// `ln(e_{n+1}/e_n) / ln(e_n/e_{n-1})` over the leading run of errors
/// above [`ORDER_ERROR_FLOOR`]; the last triple wins.
pub fn estimate_order_from_errors(errors: &[f64]) -> Result<OrderEstimate> {
    let usable: Vec<f64> = errors
        .iter()
        .copied()
        .take_while(|e| e.is_finite() && *e > ORDER_ERROR_FLOOR)
        .collect();
    if usable.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "need three errors above {ORDER_ERROR_FLOOR:e}, have {}",
            usable.len()
        )));
    }
    let order = usable
        .windows(3)
        .map(|w| (w[2] / w[1]).ln() / (w[1] / w[0]).ln())
        .filter(|o| o.is_finite())
        .last()
        .ok_or_else(|| Error::InsufficientData("no finite error ratio".into()))?;
    Ok(OrderEstimate {
        order,
        ok: (2.5..=3.5).contains(&order),
        usable: usable.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn quadratic() -> NonlinearProblem {
        NonlinearProblem::scalar("quadratic", |x| x * x - 1.0, |x| 2.0 * x).with_root(vec![1.0])
    }

    #[test]
    fn quadratic_from_1_2() {
        let tr = two_step_newton(&quadratic(), &[1.2], &StopRule::default()).unwrap();
        assert_eq!(tr.termination, Termination::Converged);
        assert!(tr.iterations() <= 4);
        assert!(tr.last().rho_x.unwrap() <= 1e-14);
        // reference errors from an exact rational run
        let e = tr.errors().unwrap();
        assert_relative_eq!(e[0], 0.2, max_relative = 1e-12);
        assert_relative_eq!(e[1], 0.002662037037037037, max_relative = 1e-12);
        assert_relative_eq!(e[2], 9.375939272162205e-9, max_relative = 1e-6);
    }

    #[test]
    fn start_at_root() {
        let tr = two_step_newton(&quadratic(), &[1.0], &StopRule::default()).unwrap();
        assert_eq!(tr.termination, Termination::Converged);
        assert_eq!(tr.steps.len(), 1);
        assert_eq!(tr.steps[0].x, tr.steps[0].y);
        assert_eq!(tr.steps[0].n, 0);
    }

    #[test]
    fn singular_jacobian_is_reported() {
        let tr = two_step_newton(&quadratic(), &[0.0], &StopRule::default()).unwrap();
        assert_eq!(tr.termination, Termination::SingularJacobian);
        assert_eq!(tr.steps.len(), 1);
    }

    #[test]
    fn divergence_and_budget() {
        let p = NonlinearProblem::scalar("exp-shift", |x| x.exp() + 1.0, f64::exp);
        let tr = two_step_newton(&p, &[0.0], &StopRule::default()).unwrap();
        assert!(matches!(tr.termination, Termination::Diverged | Termination::MaxIter));
        let stop = StopRule {
            max_iter: 1,
            ..StopRule::default()
        };
        let tr = two_step_newton(&quadratic(), &[3.0], &stop).unwrap();
        assert_eq!(tr.termination, Termination::MaxIter);
        assert_eq!(tr.steps.len(), 2);
    }

    #[test]
    fn bad_inputs() {
        assert!(two_step_newton(&quadratic(), &[1.0, 2.0], &StopRule::default()).is_err());
        assert!(two_step_newton(&quadratic(), &[f64::NAN], &StopRule::default()).is_err());
        let stop = StopRule {
            x_tol: 0.0,
            ..StopRule::default()
        };
        assert!(two_step_newton(&quadratic(), &[1.2], &stop).is_err());
    }

    #[test]
    fn one_factorization_reused() {
        // x_{k+1} computed with a fresh factorization is identical
        let p = quadratic();
        let tr = two_step_newton(&p, &[1.4], &StopRule::default()).unwrap();
        for w in tr.steps.windows(2) {
            let s = &w[0];
            let lu = Lu::factor(&p.jacobian(&s.x).unwrap()).unwrap();
            let fy = p.eval(&s.y).unwrap();
            let fresh = s.y[0] - lu.solve(&fy).unwrap()[0];
            assert!((fresh - w[1].x[0]).abs() <= 1e-12);
        }
    }

    #[test]
    fn fd_examples() {
        let id = NonlinearProblem::new("id", 2, |x| x.to_vec());
        let j = jacobian_fd(&id, &[0.3, -2.0]).unwrap();
        assert!(j.sub(&Matrix::identity(2)).max_abs() <= 1e-9);
        let j = jacobian_fd(&quadratic(), &[2.0]).unwrap();
        assert!((j[(0, 0)] - 4.0).abs() <= 1e-6);
        let p = NonlinearProblem::new("sum-prod", 2, |x| vec![x[0] + x[1], x[0] * x[1]]);
        let j = jacobian_fd(&p, &[1.0, 1.0]).unwrap();
        let expect = Matrix::from_rows(&[vec![1.0, 1.0], vec![1.0, 1.0]]).unwrap();
        assert!(j.sub(&expect).max_abs() <= 1e-6);
    }

    #[test]
    fn validate_catches_wrong_jacobian_and_root() {
        assert!(quadratic().validate().is_ok());
        let wrong = NonlinearProblem::scalar("wrong", |x| x * x - 1.0, |x| 3.0 * x).with_root(vec![1.0]);
        assert!(wrong.validate().is_err());
        let bad_root = NonlinearProblem::scalar("q", |x| x * x - 1.0, |x| 2.0 * x).with_root(vec![1.1]);
        assert!(bad_root.validate().is_err());
    }

    #[test]
    fn order_examples() {
        let o = estimate_order_from_errors(&[1e-1, 1e-3, 1e-9]).unwrap();
        assert_relative_eq!(o.order, 3.0, max_relative = 1e-12);
        assert!(o.ok);
        assert!(matches!(
            estimate_order_from_errors(&[1e-1, 1e-3]),
            Err(Error::InsufficientData(_))
        ));
        let tr = two_step_newton(&quadratic(), &[1.5], &StopRule::default()).unwrap();
        let o = estimate_order(&tr).unwrap();
        assert!((o.order - 3.0).abs() <= 0.5, "{o:?}");
    }

    #[test]
    fn csv_layout() {
        let tr = two_step_newton(&quadratic(), &[1.2], &StopRule::default()).unwrap();
        let csv = tr.to_csv().unwrap();
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), "n,x,y,rho_x,rho_y,f_norm");
        assert_eq!(lines.count(), tr.steps.len());
    }

    fn sys() -> NonlinearProblem {
        NonlinearProblem::new("sys", 2, |x| vec![x[0] * x[0] + x[1] - 2.0, x[0] + x[1] * x[1] - 2.0])
            .with_jacobian(|x| Matrix::from_rows(&[vec![2.0 * x[0], 1.0], vec![1.0, 2.0 * x[1]]]).unwrap())
            .with_root(vec![1.0, 1.0])
    }

    proptest! {
        #[test]
        fn affine_covariance(a in -3.0f64..3.0, b in -3.0f64..3.0, c in -3.0f64..3.0, d in -3.0f64..3.0,
                             dx in -0.2f64..0.2, dy in -0.2f64..0.2) {
            let m = Matrix::from_rows(&[vec![a, b], vec![c, d]]).unwrap();
            prop_assume!((a * d - b * c).abs() > 0.5);
            let p = sys();
            let q = p.premultiplied(m).unwrap();
            let x0 = [1.0 + dx, 1.0 + dy];
            let t1 = two_step_newton(&p, &x0, &StopRule::default()).unwrap();
            let t2 = two_step_newton(&q, &x0, &StopRule::default()).unwrap();
            for (s1, s2) in t1.steps.iter().zip(&t2.steps) {
                prop_assert!(distance(&s1.x, &s2.x) <= 1e-10);
                prop_assert!(distance(&s1.y, &s2.y) <= 1e-10);
            }
        }

        #[test]
        fn monotone_decay_inside_small_ball(dx in -0.1f64..0.1, dy in -0.1f64..0.1) {
            let tr = two_step_newton(&sys(), &[1.0 + dx, 1.0 + dy], &StopRule::default()).unwrap();
            prop_assert_eq!(tr.termination, Termination::Converged);
            let e = tr.errors().unwrap();
            for w in e.windows(2) {
                if w[0] <= 1e-13 { break; }
                prop_assert!(w[1] < w[0]);
            }
            for s in &tr.steps {
                prop_assert!(s.rho_y.unwrap() <= s.rho_x.unwrap() + 1e-16);
            }
        }
    }
}
