//! Convergence-ball radii.
//!
//! Each theorem's hypothesis is rewritten as `g(r) <= 1` with `g`
//! non-decreasing, and the largest admissible `r` is found by doubling
//! followed by bisection. The printed closed-form radii are evaluated
//! verbatim and compared with the numeric solution rather than trusted.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::laverage::LAverage;
use crate::quadrature::QuadratureConfig;

/// Largest radius the bracket search will try.
pub const R_CAP: f64 = 1e12;
/// Starting point of the doubling search.
pub const R_START: f64 = 1e-8;
/// Probe used to reject majorants that fail at vanishing radius.
pub const R_ORIGIN: f64 = 1e-12;
/// Residual tolerance for a feasible certificate.
pub const FEASIBLE_TOL: f64 = 1e-8;
/// Agreement threshold for closed form against numeric radius.
pub const AGREE_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RadiusCondition {
    T31,
    T41,
    T51a,
    T51b,
    T52,
}

impl RadiusCondition {
    pub const ALL: [RadiusCondition; 5] = [
        RadiusCondition::T31,
        RadiusCondition::T41,
        RadiusCondition::T51a,
        RadiusCondition::T51b,
        RadiusCondition::T52,
    ];

    /// `g(r)`, scaled so the condition reads `g(r) <= 1`.
    ///
    /// With `s = 2r`, `C = ∫₀ˢ L` and `M = ∫₀ˢ u L`:
    ///
    /// | condition | g |
    /// |-----------|---|
    /// | T31  | `M / (2r (1 - C))`, `+inf` once `C >= 1` |
    /// | T41  | `C - M / s` |
    /// | T51a | `2 C` |
    /// | T51b | `C + M / s` |
    /// | T52  | `3 C` |
    pub fn evaluate(self, fam: &LAverage, r: f64) -> Result<f64> {
        if !(r > 0.0) {
            return Err(Error::Domain(format!("radius must be positive, got {r}")));
        }
        let q = QuadratureConfig::default();
        let s = 2.0 * r;
        let c = fam.cumulative(s, &q)?;
        Ok(match self {
            RadiusCondition::T31 => {
                if c >= 1.0 {
                    f64::INFINITY
                } else {
                    fam.first_moment(s, &q)? / (s * (1.0 - c))
                }
            }
            RadiusCondition::T41 => c - fam.first_moment(s, &q)? / s,
            RadiusCondition::T51a => 2.0 * c,
            RadiusCondition::T51b => c + fam.first_moment(s, &q)? / s,
            RadiusCondition::T52 => 3.0 * c,
        })
    }
}

impl fmt::Display for RadiusCondition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

impl FromStr for RadiusCondition {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        RadiusCondition::ALL
            .into_iter()
            .find(|c| c.to_string().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidParameter(format!("unknown condition `{s}`")))
    }
}

/// A radius together with the evidence that it satisfies its condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadiusCertificate {
    pub condition: RadiusCondition,
    pub r: f64,
    /// `g(r) - 1`.
    pub residual: f64,
    pub feasible: bool,
    /// Final bisection bracket; collapses to `(r, r)` at a domain edge.
    pub bracket: (f64, f64),
}

/// Upper limit for the search: the family's domain (argument `2r`) or
/// [`R_CAP`].
fn search_cap(fam: &LAverage) -> f64 {
    let cap = match fam {
        LAverage::Rational { gamma, .. } => 0.999 / (2.0 * gamma),
        LAverage::Tabulated { .. } => 0.5 * fam.domain_end().0,
        _ => R_CAP,
    };
    cap.min(R_CAP)
}

/// Largest `r` with `g(r) <= 1`, to relative precision `rel_tol`.
///
/// If `g` stays below one up to the family's domain edge, the edge is
/// returned with `feasible = true` and a negative residual.
pub fn solve_radius(cond: RadiusCondition, fam: &LAverage, rel_tol: f64) -> Result<RadiusCertificate> {
    fam.validate()?;
    if !(rel_tol > 0.0 && rel_tol <= 1e-4) {
        return Err(Error::InvalidParameter(format!("rel_tol must lie in (0, 1e-4], got {rel_tol}")));
    }
    let g = |r: f64| cond.evaluate(fam, r);
    let g0 = g(R_ORIGIN)?;
    if g0 > 1.0 {
        return Err(Error::InfeasibleAtOrigin { r: R_ORIGIN, g: g0 });
    }
    let cap = search_cap(fam);

    let (mut lo, mut hi) = (R_ORIGIN, R_START.min(cap));
    loop {
        if g(hi)? > 1.0 {
            break;
        }
        lo = hi;
        if hi >= cap {
            let residual = g(cap)? - 1.0;
            return Ok(RadiusCertificate {
                condition: cond,
                r: cap,
                residual,
                feasible: true,
                bracket: (cap, cap),
            });
        }
        hi = (2.0 * hi).min(cap);
    }

    while hi - lo > rel_tol * lo {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if g(mid)? <= 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let residual = g(lo)? - 1.0;
    Ok(RadiusCertificate {
        condition: cond,
        r: lo,
        residual,
        feasible: residual <= FEASIBLE_TOL,
        bracket: (lo, hi),
    })
}

/// Printed closed-form radii of the corollaries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ClosedFormId {
    #[serde(rename = "C_const_radius")]
    ConstRadius,
    #[serde(rename = "C_const_center")]
    ConstCenter,
    #[serde(rename = "C_affine_radius")]
    AffineRadius,
    #[serde(rename = "C_affine_center")]
    AffineCenter,
    #[serde(rename = "C_holder_T51b")]
    HolderT51b,
    #[serde(rename = "C_holder_T52")]
    HolderT52,
    #[serde(rename = "C_rational_T52")]
    RationalT52,
}

impl ClosedFormId {
    pub const ALL: [ClosedFormId; 7] = [
        ClosedFormId::ConstRadius,
        ClosedFormId::ConstCenter,
        ClosedFormId::AffineRadius,
        ClosedFormId::AffineCenter,
        ClosedFormId::HolderT51b,
        ClosedFormId::HolderT52,
        ClosedFormId::RationalT52,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ClosedFormId::ConstRadius => "C_const_radius",
            ClosedFormId::ConstCenter => "C_const_center",
            ClosedFormId::AffineRadius => "C_affine_radius",
            ClosedFormId::AffineCenter => "C_affine_center",
            ClosedFormId::HolderT51b => "C_holder_T51b",
            ClosedFormId::HolderT52 => "C_holder_T52",
            ClosedFormId::RationalT52 => "C_rational_T52",
        }
    }

    /// The condition the formula was derived from.
    pub fn parent(self) -> RadiusCondition {
        match self {
            ClosedFormId::ConstRadius | ClosedFormId::AffineRadius => RadiusCondition::T31,
            ClosedFormId::ConstCenter | ClosedFormId::AffineCenter => RadiusCondition::T41,
            ClosedFormId::HolderT51b => RadiusCondition::T51b,
            ClosedFormId::HolderT52 | ClosedFormId::RationalT52 => RadiusCondition::T52,
        }
    }

    /// Family name the formula's parameters belong to.
    pub fn family(self) -> &'static str {
        match self {
            ClosedFormId::ConstRadius | ClosedFormId::ConstCenter => "constant",
            ClosedFormId::AffineRadius | ClosedFormId::AffineCenter => "affine",
            ClosedFormId::HolderT51b | ClosedFormId::HolderT52 => "holder",
            ClosedFormId::RationalT52 => "rational",
        }
    }
}

impl fmt::Display for ClosedFormId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ClosedFormId {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        ClosedFormId::ALL
            .into_iter()
            .find(|id| id.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidParameter(format!("unknown closed form `{s}`")))
    }
}

/// Evaluates the printed formula for `id` with the parameters of `fam`.
pub fn closed_form_radius(id: ClosedFormId, fam: &LAverage) -> Result<f64> {
    fam.validate()?;
    let r = match (id, fam) {
        (ClosedFormId::ConstRadius, LAverage::Constant { l }) => 1.0 / (3.0 * l),
        (ClosedFormId::ConstCenter, LAverage::Constant { l }) => 1.0 / l,
        (ClosedFormId::AffineRadius, LAverage::Affine { gamma, l }) => {
            (-3.0 * gamma + (9.0 * gamma * gamma + 40.0 / 3.0 * l).sqrt()) / (7.0 * l)
        }
        (ClosedFormId::AffineCenter, LAverage::Affine { gamma, l }) => {
            let disc = 4.0 * gamma * gamma - 16.0 / 3.0 * l;
            if disc < 0.0 {
                return Err(Error::NegativeDiscriminant(disc));
            }
            (2.0 * gamma - disc.sqrt()) / (8.0 / 3.0 * l)
        }
        (ClosedFormId::HolderT51b, LAverage::Holder { c, a }) => {
            ((a + 1.0) / (c * 2f64.powf(*a) * (1.0 + 2.0 * a))).powf(1.0 / a)
        }
        (ClosedFormId::HolderT52, LAverage::Holder { c, a }) => (1.0 / (3.0 * c * 2f64.powf(*a))).powf(1.0 / a),
        (ClosedFormId::RationalT52, LAverage::Rational { gamma, c }) => {
            let k = 3.0 * c + 1.0;
            (k - (3.0 * c * k).sqrt()) / (2.0 * gamma * k)
        }
        _ => {
            return Err(Error::InvalidParameter(format!(
                "{id} needs a {} family, got {}",
                id.family(),
                fam.name()
            )))
        }
    };
    Ok(r)
}

/// Closed form against the numeric solution of its parent condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossValidation {
    pub id: ClosedFormId,
    pub condition: RadiusCondition,
    /// `None` when the printed formula has no real value.
    pub closed: Option<f64>,
    pub numeric: f64,
    pub agree: bool,
    pub rel_gap: Option<f64>,
    pub note: Option<String>,
}

pub fn cross_validate(id: ClosedFormId, fam: &LAverage, rel_tol: f64) -> Result<CrossValidation> {
    let numeric = solve_radius(id.parent(), fam, rel_tol)?.r;
    let (closed, note) = match closed_form_radius(id, fam) {
        Ok(v) => (Some(v), None),
        Err(Error::NegativeDiscriminant(d)) => (
            None,
            Some(format!("printed formula has negative discriminant {d}; no real radius")),
        ),
        Err(e) => return Err(e),
    };
    let rel_gap = closed.map(|c| (c - numeric).abs() / numeric);
    let agree = rel_gap.is_some_and(|g| g <= AGREE_TOL);
    let note = note.or_else(|| {
        (!agree).then(|| format!("closed form disagrees with the numeric solution of {}", id.parent()))
    });
    Ok(CrossValidation {
        id,
        condition: id.parent(),
        closed,
        numeric,
        agree,
        rel_gap,
        note,
    })
}
