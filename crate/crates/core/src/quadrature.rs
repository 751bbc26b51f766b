//! Adaptive Simpson quadrature with interval halving.
//!
//! The integrator starts from a uniform partition into [`INITIAL_PANELS`]
//! panels, assigns each panel a share of the global tolerance proportional
//! to its width, and halves any panel whose two-half Simpson estimate
//! differs from the whole-panel estimate by more than `15 * eps`. Accepted
//! panels contribute the Richardson-corrected value.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const INITIAL_PANELS: usize = 16;

/// Tolerances for every quadrature performed by the library.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureConfig {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_subdivisions: usize,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        Self {
            rel_tol: 1e-10,
            abs_tol: 1e-12,
            max_subdivisions: 10_000,
        }
    }
}

impl QuadratureConfig {
    pub fn new(rel_tol: f64, abs_tol: f64, max_subdivisions: usize) -> Result<Self> {
        let cfg = Self {
            rel_tol,
            abs_tol,
            max_subdivisions,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rel_tol > 0.0) || !(self.abs_tol > 0.0) {
            return Err(Error::InvalidParameter(
                "quadrature tolerances must be positive".into(),
            ));
        }
        if self.max_subdivisions < 1 {
            return Err(Error::InvalidParameter(
                "max_subdivisions must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

struct Panel {
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    eps: f64,
}

#[inline]
fn simpson(a: f64, b: f64, fa: f64, fm: f64, fb: f64) -> f64 {
    (b - a) / 6.0 * (fa + 4.0 * fm + fb)
}

/// Integrates `f` over `[lo, hi]` by adaptive Simpson.
///
/// Returns `0` for an empty interval and the negated integral when `hi < lo`.
pub fn integrate<F>(f: F, lo: f64, hi: f64, cfg: &QuadratureConfig) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    cfg.validate()?;
    if lo == hi {
        return Ok(0.0);
    }
    if hi < lo {
        return integrate(f, hi, lo, cfg).map(|v| -v);
    }
    if !lo.is_finite() || !hi.is_finite() {
        return Err(Error::Domain(format!(
            "integration bounds must be finite, got [{lo}, {hi}]"
        )));
    }

    let width = (hi - lo) / INITIAL_PANELS as f64;
    let mut panels = Vec::with_capacity(INITIAL_PANELS);
    let mut estimate = 0.0;
    let mut f_left = f(lo);
    for i in 0..INITIAL_PANELS {
        let a = lo + width * i as f64;
        let b = if i + 1 == INITIAL_PANELS {
            hi
        } else {
            lo + width * (i + 1) as f64
        };
        let fm = f(0.5 * (a + b));
        let fb = f(b);
        let whole = simpson(a, b, f_left, fm, fb);
        estimate += whole;
        panels.push((a, b, f_left, fm, fb, whole));
        f_left = fb;
    }
    if !estimate.is_finite() {
        return Err(Error::Quadrature {
            lo,
            hi,
            max_subdivisions: cfg.max_subdivisions,
        });
    }

    let eps_total = cfg.abs_tol.max(cfg.rel_tol * estimate.abs());
    let mut stack: Vec<Panel> = panels
        .into_iter()
        .rev()
        .map(|(a, b, fa, fm, fb, whole)| Panel {
            a,
            b,
            fa,
            fm,
            fb,
            whole,
            eps: eps_total * (b - a) / (hi - lo),
        })
        .collect();

    let mut total = 0.0;
    let mut splits = 0usize;
    while let Some(p) = stack.pop() {
        let m = 0.5 * (p.a + p.b);
        let lm = 0.5 * (p.a + m);
        let rm = 0.5 * (m + p.b);
        let flm = f(lm);
        let frm = f(rm);
        let left = simpson(p.a, m, p.fa, flm, p.fm);
        let right = simpson(m, p.b, p.fm, frm, p.fb);
        let delta = left + right - p.whole;
        if !delta.is_finite() {
            return Err(Error::Quadrature {
                lo,
                hi,
                max_subdivisions: cfg.max_subdivisions,
            });
        }
        // Stop halving once the midpoints collapse onto the endpoints.
        let unsplittable = lm <= p.a || rm >= p.b || m <= p.a || m >= p.b;
        if delta.abs() <= 15.0 * p.eps || unsplittable {
            total += left + right + delta / 15.0;
            continue;
        }
        splits += 1;
        if splits > cfg.max_subdivisions {
            return Err(Error::Quadrature {
                lo,
                hi,
                max_subdivisions: cfg.max_subdivisions,
            });
        }
        let eps = 0.5 * p.eps;
        stack.push(Panel {
            a: m,
            b: p.b,
            fa: p.fm,
            fm: frm,
            fb: p.fb,
            whole: right,
            eps,
        });
        stack.push(Panel {
            a: p.a,
            b: m,
            fa: p.fa,
            fm: flm,
            fb: p.fm,
            whole: left,
            eps,
        });
    }
    Ok(total)
}

/// Integrates `f` over `[0, s]` through the substitution `u = s * w^power`.
///
/// With `power > 1` the transformed integrand is `f(s w^p) p s w^(p-1)`,
/// which removes an integrable endpoint singularity of the form
/// `u^(alpha - 1)` as soon as `power * alpha >= 1`. The value at `w = 0` is
/// taken as zero in that case.
pub fn integrate_from_zero<F>(f: F, s: f64, power: u32, cfg: &QuadratureConfig) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    if power <= 1 {
        return integrate(f, 0.0, s, cfg);
    }
    let p = power as i32;
    let pf = power as f64;
    integrate(
        |w| {
            if w == 0.0 {
                return 0.0;
            }
            let wp1 = w.powi(p - 1);
            f(s * wp1 * w) * pf * s * wp1
        },
        0.0,
        1.0,
        cfg,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn tight() -> QuadratureConfig {
        QuadratureConfig::new(1e-13, 1e-15, 100_000).unwrap()
    }

    #[test]
    fn polynomials_up_to_cubic_are_exact() {
        let v = integrate(|x| 1.0 + x - 3.0 * x * x + x * x * x, -1.0, 2.0, &tight()).unwrap();
        // 3 + 1.5 - 9 + 3.75
        assert_relative_eq!(v, -0.75, epsilon = 1e-14);
    }

    #[test]
    fn smooth_transcendental() {
        let v = integrate(f64::sin, 0.0, std::f64::consts::PI, &tight()).unwrap();
        assert_relative_eq!(v, 2.0, max_relative = 1e-12);
        let v = integrate(f64::exp, 0.0, 1.0, &tight()).unwrap();
        assert_relative_eq!(v, std::f64::consts::E - 1.0, max_relative = 1e-12);
    }

    #[test]
    fn reversed_and_empty_bounds() {
        let cfg = QuadratureConfig::default();
        assert_eq!(integrate(|x| x, 1.0, 1.0, &cfg).unwrap(), 0.0);
        let fwd = integrate(|x| x * x, 0.0, 2.0, &cfg).unwrap();
        let rev = integrate(|x| x * x, 2.0, 0.0, &cfg).unwrap();
        assert_relative_eq!(fwd, -rev);
    }

    #[test]
    fn substitution_handles_endpoint_singularity() {
        // integral of 0.5 u^{-1/2} on [0, 4] is 2
        let v = integrate_from_zero(|u| 0.5 / u.sqrt(), 4.0, 4, &tight()).unwrap();
        assert_relative_eq!(v, 2.0, max_relative = 1e-11);
    }

    #[test]
    fn subdivision_budget_is_enforced() {
        let cfg = QuadratureConfig::new(1e-14, 1e-16, 3).unwrap();
        let err = integrate(|x| (50.0 * x).sin() * x.exp(), 0.0, 10.0, &cfg).unwrap_err();
        assert!(matches!(err, Error::Quadrature { .. }));
    }

    #[test]
    fn invalid_config_rejected() {
        assert!(QuadratureConfig::new(0.0, 1e-12, 10).is_err());
        assert!(QuadratureConfig::new(1e-10, -1.0, 10).is_err());
        assert!(QuadratureConfig::new(1e-10, 1e-12, 0).is_err());
    }
}
