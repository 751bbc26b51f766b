//! Built-in problems with known roots and analytic Jacobians.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::iterate::{jacobian_fd, NonlinearProblem};
use crate::laverage::LAverage;
use crate::linalg::Matrix;
use crate::quadrature::{integrate, QuadratureConfig};
use crate::verify::Theorem;

/// Below `π / TAIL_START` the oscillatory integral is taken from its
/// asymptotic expansion.
const TAIL_START: f64 = 50.0;

/// `∫_W^∞ sin(w) / w³ dw` by repeated integration by parts, for large `W`.
fn sine_tail(w: f64) -> f64 {
    let (s, c) = w.sin_cos();
    let mut result = 0.0;
    let mut coef = 1.0;
    let mut m = 3.0;
    let mut prev = f64::INFINITY;
    for i in 0.. {
        let trig = if i % 2 == 0 { c } else { -s };
        let term = coef * trig / w.powf(m);
        // Bound by the untruncated magnitude so a zero of sin/cos does not
        // end the series early.
        let size = (coef / w.powf(m)).abs();
        if size > prev {
            break;
        }
        result += term;
        if size <= 1e-20 * result.abs() {
            break;
        }
        prev = size;
        coef *= if i % 2 == 0 { -m } else { m };
        m += 1.0;
    }
    result
}

/// `t(x) = ∫₀ˣ (1 + 2s sin(π/s)) ds`.
///
/// The integrand is even, so `t` is odd. Near zero the oscillating part
/// becomes `2π² ∫_{π/|x|}^∞ sin(w)/w³ dw`; further out the remainder is
/// integrated by adaptive Simpson.
pub fn oscillatory_t(x: f64) -> f64 {
    if x == 0.0 {
        return 0.0;
    }
    let ax = x.abs();
    let split = PI / TAIL_START;
    let tail = 2.0 * PI * PI * sine_tail((PI / ax).min(f64::MAX).max(TAIL_START));
    let mut v = ax + tail;
    let near_end = ax.min(1.0);
    if near_end > split {
        let cfg = QuadratureConfig {
            rel_tol: 1e-14,
            abs_tol: 1e-17,
            max_subdivisions: 1_000_000,
        };
        v += integrate(|s| 2.0 * s * (PI / s).sin(), split, near_end, &cfg).unwrap_or(f64::NAN);
    }
    if ax > 1.0 {
        v += far_field(ax);
    }
    v.copysign(x)
}

/// `∫₁ˣ 2s sin(π/s) ds` from the Taylor series of `sin(π/s)`, integrated
/// term by term.
fn far_field(x: f64) -> f64 {
    let mut total = 0.0;
    // 2π (-1)^k π^{2k} / (2k+1)!
    let mut coef = 2.0 * PI;
    for k in 0..40 {
        let ik = if k == 0 {
            x - 1.0
        } else {
            let p = (2 * k - 1) as f64;
            (1.0 - x.powf(-p)) / p
        };
        let term = coef * ik;
        total += term;
        if term.abs() <= 1e-18 * total.abs() {
            break;
        }
        let kk = (2 * k + 2) as f64;
        coef *= -PI * PI / (kk * (kk + 1.0));
    }
    total
}

/// `t'(x) = 1 + 2x sin(π/x)`, with `t'(0) = 1`.
pub fn oscillatory_dt(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        1.0 + 2.0 * x * (PI / x).sin()
    }
}

/// A problem together with the majorant and theorem that certify it.
#[derive(Debug, Clone)]
pub struct SuiteEntry {
    pub name: &'static str,
    pub problem: NonlinearProblem,
    pub recommended_family: LAverage,
    pub recommended_theorem: Theorem,
    pub default_x0: Vec<f64>,
    pub notes: &'static str,
}

/// Serializable summary of an entry for listings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteListing {
    pub name: String,
    pub dim: usize,
    pub root: Vec<f64>,
    pub ball_radius: f64,
    pub recommended_family: LAverage,
    pub recommended_theorem: Theorem,
    pub default_x0: Vec<f64>,
    pub notes: String,
}

impl SuiteEntry {
    pub fn root(&self) -> &[f64] {
        self.problem.root().expect("suite problems have roots")
    }

    pub fn ball_radius(&self) -> f64 {
        self.problem.ball_radius().expect("suite problems have balls")
    }

    pub fn listing(&self) -> SuiteListing {
        SuiteListing {
            name: self.name.to_string(),
            dim: self.problem.dim(),
            root: self.root().to_vec(),
            ball_radius: self.ball_radius(),
            recommended_family: self.recommended_family.clone(),
            recommended_theorem: self.recommended_theorem,
            default_x0: self.default_x0.clone(),
            notes: self.notes.to_string(),
        }
    }
}

fn quadratic() -> SuiteEntry {
    SuiteEntry {
        name: "quadratic",
        problem: NonlinearProblem::scalar("quadratic", |x| x * x - 1.0, |x| 2.0 * x)
            .with_root(vec![1.0])
            .with_ball_radius(0.5),
        recommended_family: LAverage::Constant { l: 0.5 },
        recommended_theorem: Theorem::T52,
        default_x0: vec![1.2],
        notes: "t(x) = x^2 - 1; center ratio is exactly 1/2; second root -1 at distance 2",
    }
}

fn exponential() -> SuiteEntry {
    SuiteEntry {
        name: "exp",
        problem: NonlinearProblem::scalar("exp", |x| x.exp_m1(), f64::exp)
            .with_root(vec![0.0])
            .with_ball_radius(0.5),
        recommended_family: LAverage::Constant { l: 0.5f64.exp_m1() },
        recommended_theorem: Theorem::T52,
        default_x0: vec![0.2],
        notes: "t(x) = e^x - 1; center constant sup (e^x - 1)/(2x) = e^0.5 - 1 on V(0, 0.5)",
    }
}

fn wang_osc() -> SuiteEntry {
    SuiteEntry {
        name: "wang-osc",
        problem: NonlinearProblem::scalar("wang-osc", oscillatory_t, oscillatory_dt)
            .with_root(vec![0.0])
            .with_ball_radius(1.0 / 6.0),
        recommended_family: LAverage::Constant { l: 1.0 },
        recommended_theorem: Theorem::T52,
        default_x0: vec![0.15],
        notes: "t(x) = int_0^x (1 + 2s sin(pi/s)) ds; center condition holds with L = 1, \
                radius condition fails (ratio 2k at x = y = 1/k, tau = 2k/(2k+1))",
    }
}

fn holder() -> SuiteEntry {
    SuiteEntry {
        name: "holder",
        problem: NonlinearProblem::scalar(
            "holder",
            |x| x + (2.0 / 3.0) * x.abs().powf(1.5).copysign(x),
            |x| 1.0 + x.abs().sqrt(),
        )
        .with_root(vec![0.0])
        .with_ball_radius(0.5),
        recommended_family: LAverage::Holder { c: 1.0, a: 0.5 },
        recommended_theorem: Theorem::T52,
        default_x0: vec![0.04],
        notes: "t'(x) = 1 + |x|^(1/2); |t'(x) - t'(0)| = |x|^(1/2) <= (2|x|)^(1/2)",
    }
}

fn sys2() -> SuiteEntry {
    SuiteEntry {
        name: "sys2",
        problem: NonlinearProblem::new("sys2", 2, |x| {
            vec![x[0] * x[0] + x[1] - 2.0, x[0] + x[1] * x[1] - 2.0]
        })
        .with_jacobian(|x| {
            Matrix::from_row_major(2, 2, vec![2.0 * x[0], 1.0, 1.0, 2.0 * x[1]]).expect("2x2")
        })
        .with_root(vec![1.0, 1.0])
        .with_ball_radius(0.5),
        recommended_family: LAverage::Constant { l: 5f64.sqrt() / 3.0 },
        recommended_theorem: Theorem::T52,
        default_x0: vec![1.1, 0.95],
        notes: "(x1^2 + x2 - 2, x1 + x2^2 - 2); center constant sqrt(5)/3; \
                other roots at distance >= sqrt(3)",
    }
}

/// Every built-in entry, in a fixed order.
pub fn suite() -> Vec<SuiteEntry> {
    vec![quadratic(), exponential(), wang_osc(), holder(), sys2()]
}

pub fn entry(name: &str) -> Result<SuiteEntry> {
    suite()
        .into_iter()
        .find(|e| e.name == name)
        .ok_or_else(|| {
            let names: Vec<_> = suite().iter().map(|e| e.name).collect();
            Error::InvalidParameter(format!("unknown problem `{name}` (known: {})", names.join(", ")))
        })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DerivativeAudit {
    pub max_rel_err: f64,
    pub ok: bool,
    pub worst_point: Vec<f64>,
}

/// Default threshold for [`derivative_audit`].
pub const AUDIT_THRESHOLD: f64 = 1e-5;

/// Radical inverse of `i` in base `b`.
fn radical_inverse(mut i: u64, b: u64) -> f64 {
    let mut inv = 1.0 / b as f64;
    let mut v = 0.0;
    while i > 0 {
        v += (i % b) as f64 * inv;
        i /= b;
        inv /= b as f64;
    }
    v
}

/// `count` Halton points in the cube inscribed in `V(center, r)`. The
/// bases are odd primes, so no coordinate lands on the center.
pub fn halton_points(center: &[f64], r: f64, count: usize) -> Vec<Vec<f64>> {
    const PRIMES: [u64; 8] = [3, 5, 7, 11, 13, 17, 19, 23];
    let n = center.len();
    let half = r / (n as f64).sqrt() * (1.0 - 1e-9);
    (1..=count as u64)
        .map(|i| {
            center
                .iter()
                .enumerate()
                .map(|(d, c)| c + half * (2.0 * radical_inverse(i, PRIMES[d % PRIMES.len()]) - 1.0))
                .collect()
        })
        .collect()
}

/// Analytic Jacobian against central differences at 20 quasi-random
/// points of the entry's ball; entrywise error relative to `max(1, |J|)`.
pub fn derivative_audit(e: &SuiteEntry) -> Result<DerivativeAudit> {
    let points = halton_points(e.root(), e.ball_radius(), 20);
    derivative_audit_at(&e.problem, &points, AUDIT_THRESHOLD)
}

pub fn derivative_audit_at(p: &NonlinearProblem, points: &[Vec<f64>], threshold: f64) -> Result<DerivativeAudit> {
    if points.is_empty() {
        return Err(Error::InvalidParameter("no audit points".into()));
    }
    let mut worst = (f64::NEG_INFINITY, points[0].clone());
    for x in points {
        let ja = p.jacobian(x)?;
        let jf = jacobian_fd(p, x)?;
        let mut err: f64 = 0.0;
        for i in 0..ja.rows() {
            for j in 0..ja.cols() {
                err = err.max((ja[(i, j)] - jf[(i, j)]).abs() / ja[(i, j)].abs().max(1.0));
            }
        }
        if err > worst.0 {
            worst = (err, x.clone());
        }
    }
    Ok(DerivativeAudit {
        max_rel_err: worst.0,
        ok: worst.0 <= threshold,
        worst_point: worst.1,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn oscillatory_reference_values() {
        // extended-precision values from the sine-integral closed form
        let reference = [
            (0.15, 0.14920868574526438856),
            (0.1, 0.10062910241230416774),
            (0.05, 0.050079337397656517885),
            (0.01, 0.010000636542392199502),
            (-0.07, -0.07014664708125712335),
            (0.5, 0.56425302385538690988),
            (1e-3, 0.0010000006366189983331),
            (1e-5, 0.000010000000000636619772),
            (1.0, 0.6331550850468971007618),
            (1.5, 1.838421400815941136643),
            (3.0, 9.729568216119338479623),
            (50.0, 348.8628219299235617703),
            (-7.0, -36.95070582258249557522),
        ];
        for (x, t) in reference {
            assert_relative_eq!(oscillatory_t(x), t, max_relative = 1e-13);
        }
        assert_eq!(oscillatory_t(0.0), 0.0);
    }

    #[test]
    fn oscillatory_is_continuous_at_the_split() {
        let s = PI / TAIL_START;
        let h = s * 1e-9;
        let jump = oscillatory_t(s + h) - oscillatory_t(s - h) - 2.0 * h * oscillatory_dt(s);
        assert!(jump.abs() <= 1e-16, "{jump:e}");
    }

    #[test]
    fn oscillatory_derivative_at_reciprocals() {
        for k in 1..50 {
            assert_relative_eq!(oscillatory_dt(1.0 / k as f64), 1.0, epsilon = 1e-12);
        }
        assert_eq!(oscillatory_dt(0.0), 1.0);
    }

    #[test]
    fn suite_contents() {
        let names: Vec<_> = suite().iter().map(|e| e.name).collect();
        assert_eq!(names, ["quadratic", "exp", "wang-osc", "holder", "sys2"]);
        assert_eq!(entry("sys2").unwrap().problem.eval(&[1.0, 1.0]).unwrap(), vec![0.0, 0.0]);
        assert!(entry("nope").is_err());
        for e in suite() {
            e.problem.validate().unwrap_or_else(|err| panic!("{}: {err}", e.name));
            e.recommended_family.validate().unwrap();
        }
    }

    #[test]
    fn audits() {
        let q = derivative_audit(&entry("quadratic").unwrap()).unwrap();
        assert!(q.ok && q.max_rel_err <= 1e-7, "{q:?}");
        assert!(derivative_audit(&entry("sys2").unwrap()).unwrap().ok);
        for e in suite() {
            let a = derivative_audit(&e).unwrap();
            assert!(a.ok, "{}: {a:?}", e.name);
        }
        let w = entry("wang-osc").unwrap();
        assert!(derivative_audit_at(&w.problem, &[vec![1e-3]], 1e-4).unwrap().ok);
    }

    #[test]
    fn halton_points_stay_inside_and_off_center() {
        for p in halton_points(&[0.0], 1.0 / 6.0, 20) {
            assert!(p[0] != 0.0 && p[0].abs() < 1.0 / 6.0);
        }
        for p in halton_points(&[1.0, 1.0], 0.5, 20) {
            assert!(crate::linalg::distance(&p, &[1.0, 1.0]) < 0.5);
        }
    }
}
