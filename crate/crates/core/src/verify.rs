//! Contraction factors, a-priori error envelopes and their comparison with
//! observed traces, plus an empirical uniqueness probe.
//!
//! Throughout, `C(s) = ∫₀ˢ L` and `M(s) = ∫₀ˢ u L`, and every denominator is
//! `1 - C(2ρ(x))`.

use std::fmt::{self, Write as _};
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::iterate::{two_step_newton, IterationTrace, NonlinearProblem, StopRule, Termination};
use crate::laverage::{sample_ball, LAverage};
use crate::linalg::{distance, norm2};
use crate::quadrature::QuadratureConfig;
use crate::radius::RadiusCondition;

/// Errors at or below this level are not compared.
pub const DEFAULT_FLOOR: f64 = 1e-12;
/// Relative slack allowed before a comparison counts as violated.
pub const SLACK_TOL: f64 = 1e-12;
/// Roots closer than this are merged.
pub const CLUSTER_RADIUS: f64 = 1e-8;
/// Residual below which a converged endpoint counts as a root.
pub const ROOT_RESIDUAL: f64 = 1e-10;
/// Starts and root membership use the ball shrunk by this factor.
pub const BALL_SHRINK: f64 = 1.0 - 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Theorem {
    T31,
    T51,
    T52,
}

impl Theorem {
    pub const ALL: [Theorem; 3] = [Theorem::T31, Theorem::T51, Theorem::T52];

    /// Radius condition certifying the theorem's ball.
    pub fn condition(self, weak_average: bool) -> RadiusCondition {
        match self {
            Theorem::T31 => RadiusCondition::T31,
            Theorem::T51 if weak_average => RadiusCondition::T51b,
            Theorem::T51 => RadiusCondition::T51a,
            Theorem::T52 => RadiusCondition::T52,
        }
    }
}

impl fmt::Display for Theorem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

impl FromStr for Theorem {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Theorem::ALL
            .into_iter()
            .find(|t| t.to_string().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidParameter(format!("unknown theorem `{s}` (expected T31, T51 or T52)")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QFactors {
    pub theorem: Theorem,
    pub rho0_x: f64,
    pub rho0_y: f64,
    pub q1: f64,
    pub q2: f64,
    /// Base of the power envelope; undefined when `ρ(y₀) = 0`.
    #[serde(rename = "C")]
    pub c: Option<f64>,
    /// Weak-average exponent, when the `(1+2a)ⁿ` envelope is wanted.
    pub a: Option<f64>,
    /// First-moment factors of the weak-average variant (T51 only).
    #[serde(rename = "Q1")]
    pub big_q1: Option<f64>,
    #[serde(rename = "Q2")]
    pub big_q2: Option<f64>,
    pub valid: bool,
}

impl QFactors {
    /// Switches T51 to the weak-average envelope with exponent `a`.
    pub fn with_exponent(mut self, a: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&a) {
            return Err(Error::InvalidParameter(format!("a must lie in [0, 1], got {a}")));
        }
        if self.theorem != Theorem::T51 {
            return Err(Error::InvalidParameter(format!(
                "the (1+2a)^n envelope belongs to T51, not {}",
                self.theorem
            )));
        }
        self.a = Some(a);
        Ok(self)
    }
}

fn denominator(fam: &LAverage, rho: f64, q: &QuadratureConfig) -> Result<f64> {
    let den = 1.0 - fam.cumulative(2.0 * rho, q)?;
    if den <= 0.0 {
        return Err(Error::DenominatorNonpositive(den));
    }
    Ok(den)
}

/// `M(s) / s`, with the limit `0` at `s = 0`.
fn scaled_moment(fam: &LAverage, s: f64, q: &QuadratureConfig) -> Result<f64> {
    if s == 0.0 {
        return Ok(0.0);
    }
    Ok(fam.first_moment(s, q)? / s)
}

pub fn q_factors(theorem: Theorem, fam: &LAverage, rho0_x: f64, rho0_y: f64) -> Result<QFactors> {
    if !(rho0_x >= 0.0 && rho0_y >= 0.0) {
        return Err(Error::Domain(format!(
            "distances must be non-negative, got {rho0_x} and {rho0_y}"
        )));
    }
    let q = QuadratureConfig::default();
    let den = denominator(fam, rho0_x, &q)?;
    let first_q1 = scaled_moment(fam, 2.0 * rho0_x, &q)? / den;
    let first_q2 = scaled_moment(fam, rho0_x + rho0_y, &q)? / den;
    let c_of = |v: f64| (rho0_y > 0.0).then(|| v * rho0_x / rho0_y);

    let (q1, q2, c, big_q1, big_q2) = match theorem {
        Theorem::T31 => (first_q1, first_q2, c_of(first_q1), None, None),
        Theorem::T51 => {
            let q1 = fam.cumulative(2.0 * rho0_x, &q)? / den;
            let q2 = fam.cumulative(rho0_x + rho0_y, &q)? / den;
            (q1, q2, c_of(first_q1), Some(first_q1), Some(first_q2))
        }
        Theorem::T52 => {
            let cx = fam.cumulative(2.0 * rho0_x, &q)?;
            let cy = fam.cumulative(2.0 * rho0_y, &q)?;
            let q1 = 2.0 * cx / den;
            (q1, (cx + cy) / den, c_of(q1), None, None)
        }
    };
    Ok(QFactors {
        theorem,
        rho0_x,
        rho0_y,
        q1,
        q2,
        c,
        a: None,
        big_q1,
        big_q2,
        valid: q1 < 1.0 && q2 < 1.0,
    })
}

/// Which envelope a report compares against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvelopeKind {
    PerStep,
    Global,
}

/// One compared step.
///
/// For per-step reports `observed`/`bound` is whichever of the two
/// comparisons (`ρ(y_n)` against `bound_y`, `ρ(x_{n+1})` against `bound_x`)
/// has the smaller slack.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeRecord {
    pub n: usize,
    pub rho_x: f64,
    pub observed: f64,
    pub bound: f64,
    pub bound_y: Option<f64>,
    pub bound_x: Option<f64>,
    /// The q-factor forms that the per-step bounds are claimed to sit under.
    pub chain_y: Option<f64>,
    pub chain_x: Option<f64>,
    pub global_bound: Option<f64>,
    pub slack: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeReport {
    pub theorem: Theorem,
    pub kind: EnvelopeKind,
    pub records: Vec<EnvelopeRecord>,
    pub all_hold: bool,
    /// Every per-step bound sat below its q-factor form (per-step reports).
    pub chain_holds: bool,
    pub floor: f64,
}

impl EnvelopeReport {
    /// Aligned text table with columns `n, observed, bound, slack, holds`.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{} {} envelope (floor {:e})",
            self.theorem,
            match self.kind {
                EnvelopeKind::PerStep => "per-step",
                EnvelopeKind::Global => "global",
            },
            self.floor
        );
        let _ = writeln!(out, "{:>4}  {:>24}  {:>24}  {:>24}  {:>5}", "n", "observed", "bound", "slack", "holds");
        for r in &self.records {
            let _ = writeln!(
                out,
                "{:>4}  {:>24.16e}  {:>24.16e}  {:>24.16e}  {:>5}",
                r.n, r.observed, r.bound, r.slack, r.holds
            );
        }
        let _ = writeln!(out, "all_hold: {}", self.all_hold);
        out
    }
}

fn holds(bound: f64, observed: f64) -> (f64, bool) {
    let slack = bound - observed;
    (slack, slack >= -SLACK_TOL * (1.0 + bound.abs()) || bound == f64::INFINITY)
}

fn first_rhos(trace: &IterationTrace) -> Result<(f64, f64)> {
    let s = &trace.steps[0];
    Ok((s.rho_x.ok_or(Error::MissingRoot)?, s.rho_y.ok_or(Error::MissingRoot)?))
}

/// Per-step bounds on `ρ(y_n)` and `ρ(x_{n+1})` from `ρ(x_n)` and `ρ(y_n)`.
///
/// T31 and T51 share
/// `ρ(y) <= M(2ρx) / (2(1 - C(2ρx)))` and
/// `ρ(x₊) <= M(ρx+ρy) / ((ρx+ρy)(1 - C(2ρx))) ρy`; T52 uses
/// `ρ(y) <= 2C(2ρx)/(1 - C(2ρx)) ρx` and
/// `ρ(x₊) <= (C(2ρx) + C(2ρy))/(1 - C(2ρx)) ρy`.
pub fn per_step_bounds(theorem: Theorem, fam: &LAverage, trace: &IterationTrace) -> Result<EnvelopeReport> {
    per_step_bounds_with_floor(theorem, fam, trace, DEFAULT_FLOOR)
}

pub fn per_step_bounds_with_floor(
    theorem: Theorem,
    fam: &LAverage,
    trace: &IterationTrace,
    floor: f64,
) -> Result<EnvelopeReport> {
    if trace.root.is_none() {
        return Err(Error::MissingRoot);
    }
    let q = QuadratureConfig::default();
    let (rho0_x, rho0_y) = first_rhos(trace)?;
    let factors = if rho0_x > floor {
        Some(q_factors(theorem, fam, rho0_x, rho0_y)?)
    } else {
        None
    };
    let mut records = Vec::new();
    let mut chain_holds = true;
    for w in trace.steps.windows(2) {
        let (s, next) = (&w[0], &w[1]);
        let rx = s.rho_x.ok_or(Error::MissingRoot)?;
        let ry = s.rho_y.ok_or(Error::MissingRoot)?;
        let rx_next = next.rho_x.ok_or(Error::MissingRoot)?;
        if !(rx > floor) {
            continue;
        }
        let den = denominator(fam, rx, &q)?;
        let (by, bx) = match theorem {
            Theorem::T31 | Theorem::T51 => (
                fam.first_moment(2.0 * rx, &q)? / (2.0 * den),
                scaled_moment(fam, rx + ry, &q)? / den * ry,
            ),
            Theorem::T52 => {
                let cx = fam.cumulative(2.0 * rx, &q)?;
                let cy = fam.cumulative(2.0 * ry, &q)?;
                (2.0 * cx / den * rx, (cx + cy) / den * ry)
            }
        };
        let (chain_y, chain_x) = match &factors {
            Some(f) => match theorem {
                Theorem::T31 => (
                    f.q1 / rho0_x * rx * rx,
                    if rho0_y > 0.0 {
                        f.q2 * f.q1 / (rho0_x * rho0_y) * rx.powi(3)
                    } else {
                        f64::INFINITY
                    },
                ),
                _ => (f.q1 * rx, f.q2 * f.q1 * rx),
            },
            None => (f64::INFINITY, f64::INFINITY),
        };
        let tol = |b: f64| SLACK_TOL * (1.0 + b.abs());
        chain_holds &= by <= chain_y + tol(chain_y) && bx <= chain_x + tol(chain_x);

        let (slack_y, ok_y) = holds(by, ry);
        let (slack_x, ok_x) = holds(bx, rx_next);
        let (observed, bound, slack) = if slack_y <= slack_x {
            (ry, by, slack_y)
        } else {
            (rx_next, bx, slack_x)
        };
        records.push(EnvelopeRecord {
            n: s.n,
            rho_x: rx,
            observed,
            bound,
            bound_y: Some(by),
            bound_x: Some(bx),
            chain_y: Some(chain_y),
            chain_x: Some(chain_x),
            global_bound: None,
            slack,
            holds: ok_y && ok_x,
        });
    }
    Ok(EnvelopeReport {
        theorem,
        kind: EnvelopeKind::PerStep,
        all_hold: records.iter().all(|r| r.holds),
        records,
        chain_holds,
        floor,
    })
}

/// `C^(k^n - 1) ρ₀` evaluated in log space.
fn power_envelope(c: Option<f64>, base: f64, n: usize, rho0: f64) -> f64 {
    if n == 0 {
        return rho0;
    }
    let Some(c) = c else {
        // ρ(y₀) = 0 puts every later iterate on the root.
        return 0.0;
    };
    if c == 1.0 {
        return rho0;
    }
    if c == 0.0 {
        return 0.0;
    }
    let exponent = base.powi(n as i32) - 1.0;
    (exponent * c.ln()).exp() * rho0
}

/// Global bound on `ρ(x_n)`: `C^(3ⁿ-1) ρ₀` (T31), `C^((1+2a)ⁿ-1) ρ₀`
/// (T51 with an exponent) or `(q1 q2)ⁿ ρ₀` (T51, T52).
pub fn global_bound(q: &QFactors, n: usize) -> f64 {
    match (q.theorem, q.a) {
        (Theorem::T31, _) => power_envelope(q.c, 3.0, n, q.rho0_x),
        (Theorem::T51, Some(a)) => power_envelope(q.c, 1.0 + 2.0 * a, n, q.rho0_x),
        _ => (q.q1 * q.q2).powi(n as i32) * q.rho0_x,
    }
}

pub fn global_envelope(theorem: Theorem, q: &QFactors, trace: &IterationTrace) -> Result<EnvelopeReport> {
    global_envelope_with_floor(theorem, q, trace, DEFAULT_FLOOR)
}

pub fn global_envelope_with_floor(
    theorem: Theorem,
    q: &QFactors,
    trace: &IterationTrace,
    floor: f64,
) -> Result<EnvelopeReport> {
    if theorem != q.theorem {
        return Err(Error::InvalidParameter(format!(
            "q-factors belong to {}, not {theorem}",
            q.theorem
        )));
    }
    if !q.valid {
        return Err(Error::InvalidQ { q1: q.q1, q2: q.q2 });
    }
    let mut records = Vec::new();
    for s in &trace.steps {
        let rx = s.rho_x.ok_or(Error::MissingRoot)?;
        if !(rx > floor) {
            continue;
        }
        let bound = global_bound(q, s.n);
        let (slack, ok) = holds(bound, rx);
        records.push(EnvelopeRecord {
            n: s.n,
            rho_x: rx,
            observed: rx,
            bound,
            bound_y: None,
            bound_x: None,
            chain_y: None,
            chain_x: None,
            global_bound: Some(bound),
            slack,
            holds: ok,
        });
    }
    Ok(EnvelopeReport {
        theorem,
        kind: EnvelopeKind::Global,
        all_hold: records.iter().all(|r| r.holds),
        records,
        chain_holds: true,
        floor,
    })
}

/// The envelope base printed with the oscillatory scalar example,
/// `4|x₀|² / (1 - 2|x₀||y₀|)`, reported next to the theorem's own `C`.
pub fn printed_example_c(x0: f64, y0: f64) -> f64 {
    4.0 * x0 * x0 / (1.0 - 2.0 * x0.abs() * y0.abs())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UniquenessReport {
    pub distinct_roots_found: usize,
    pub locations: Vec<Vec<f64>>,
    /// Starts that ended without reaching a root.
    pub non_convergent: usize,
    /// Starts that converged to a root outside the ball.
    pub outside_ball: usize,
    pub starts: usize,
}

/// Runs the iteration from `n_starts` seeded points of `V(x*, r)` and
/// counts distinct roots found inside the ball.
pub fn uniqueness_probe(p: &NonlinearProblem, r: f64, n_starts: usize, seed: u64) -> Result<UniquenessReport> {
    let root = p.root().ok_or(Error::MissingRoot)?.to_vec();
    if !(r > 0.0 && r.is_finite()) {
        return Err(Error::InvalidParameter(format!("radius must be positive, got {r}")));
    }
    if n_starts < 10 {
        return Err(Error::InvalidParameter(format!("need at least 10 starts, got {n_starts}")));
    }
    let inner = r * BALL_SHRINK;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut clusters: Vec<Vec<f64>> = Vec::new();
    let (mut non_convergent, mut outside_ball) = (0, 0);
    let stop = StopRule::default();
    for _ in 0..n_starts {
        let x0 = sample_ball(&mut rng, &root, inner);
        let trace = two_step_newton(p, &x0, &stop)?;
        let end = &trace.last().x;
        let is_root = trace.termination == Termination::Converged
            && p.eval(end).map(|f| norm2(&f) <= ROOT_RESIDUAL).unwrap_or(false);
        if !is_root {
            non_convergent += 1;
            continue;
        }
        if distance(end, &root) >= inner {
            outside_ball += 1;
            continue;
        }
        if !clusters.iter().any(|c| distance(c, end) <= CLUSTER_RADIUS) {
            clusters.push(end.clone());
        }
    }
    Ok(UniquenessReport {
        distinct_roots_found: clusters.len(),
        locations: clusters,
        non_convergent,
        outside_ball,
        starts: n_starts,
    })
}
