//! Generalized Lipschitz majorants ("L-averages") and the integral
//! functionals of them that the convergence conditions consume.
//!
//! Four parametric families carry closed-form antiderivatives; the
//! tabulated family is piecewise linear and integrated exactly segment by
//! segment. Everything else (the weighted functional `phi` for general
//! weights, the identity checks) goes through adaptive Simpson.

use std::io::Read;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::iterate::NonlinearProblem;
use crate::linalg::{distance, Lu, Matrix};
use crate::quadrature::{integrate_from_zero, QuadratureConfig};

/// `tau` is sampled from `[0, 1 - TAU_EXCLUSION]` for radius-type estimates.
pub const TAU_EXCLUSION: f64 = 1e-3;
/// Ratios with a denominator at or below this are skipped.
pub const MIN_DENOMINATOR: f64 = 1e-14;
/// Default absolute slack for [`check_nondecreasing`].
pub const MONOTONE_ABS_TOL: f64 = 1e-12;

/// A positive integrable majorant `L(u)` on `[0, domain)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum LAverage {
    /// `L(u) = l`.
    Constant { l: f64 },
    /// `L(u) = gamma + l u`.
    Affine { gamma: f64, l: f64 },
    /// `L(u) = c a u^(a-1)`, `0 < a < 1`; singular at `u = 0`.
    Holder { c: f64, a: f64 },
    /// `L(u) = 2 gamma c / (1 - gamma u)^3` on `[0, 1/gamma)`.
    Rational { gamma: f64, c: f64 },
    /// Piecewise-linear interpolation of `(u, L(u))` samples starting at `u = 0`.
    Tabulated { samples: Vec<(f64, f64)> },
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("{name} must be positive and finite, got {v}")))
    }
}

fn check_arg(s: f64) -> Result<()> {
    if s.is_finite() && s >= 0.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("argument must be finite and non-negative, got {s}")))
    }
}

impl LAverage {
    pub fn constant(l: f64) -> Result<Self> {
        let f = LAverage::Constant { l };
        f.validate()?;
        Ok(f)
    }

    pub fn affine(gamma: f64, l: f64) -> Result<Self> {
        let f = LAverage::Affine { gamma, l };
        f.validate()?;
        Ok(f)
    }

    pub fn holder(c: f64, a: f64) -> Result<Self> {
        let f = LAverage::Holder { c, a };
        f.validate()?;
        Ok(f)
    }

    pub fn rational(gamma: f64, c: f64) -> Result<Self> {
        let f = LAverage::Rational { gamma, c };
        f.validate()?;
        Ok(f)
    }

    pub fn tabulated(samples: Vec<(f64, f64)>) -> Result<Self> {
        let f = LAverage::Tabulated { samples };
        f.validate()?;
        Ok(f)
    }

    /// Loads a tabulated majorant from a two-column CSV with header `u,L`.
    pub fn tabulated_from_csv<P: AsRef<Path>>(path: P) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::tabulated_from_reader(file)
    }

    pub fn tabulated_from_reader<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers()?.clone();
        if headers.len() != 2 || &headers[0] != "u" || &headers[1] != "L" {
            return Err(Error::InvalidParameter(format!(
                "tabulated CSV header must be `u,L`, got `{}`",
                headers.iter().collect::<Vec<_>>().join(",")
            )));
        }
        let mut samples = Vec::new();
        for record in rdr.deserialize::<(f64, f64)>() {
            samples.push(record?);
        }
        Self::tabulated(samples)
    }

    /// Checks the family's parameter constraints.
    pub fn validate(&self) -> Result<()> {
        match self {
            LAverage::Constant { l } => positive("L", *l),
            LAverage::Affine { gamma, l } => {
                if !(gamma.is_finite() && *gamma >= 0.0) {
                    return Err(Error::InvalidParameter(format!(
                        "gamma must be non-negative and finite, got {gamma}"
                    )));
                }
                positive("L", *l)
            }
            LAverage::Holder { c, a } => {
                positive("c", *c)?;
                if !(*a > 0.0 && *a < 1.0) {
                    return Err(Error::InvalidParameter(format!(
                        "Holder exponent must lie in (0, 1), got {a}"
                    )));
                }
                Ok(())
            }
            LAverage::Rational { gamma, c } => {
                positive("gamma", *gamma)?;
                positive("c", *c)
            }
            LAverage::Tabulated { samples } => {
                if samples.len() < 2 {
                    return Err(Error::InvalidParameter(
                        "tabulated majorant needs at least two samples".into(),
                    ));
                }
                if samples[0].0 != 0.0 {
                    return Err(Error::InvalidParameter(format!(
                        "tabulated majorant must start at u = 0, got {}",
                        samples[0].0
                    )));
                }
                for w in samples.windows(2) {
                    if !(w[1].0 > w[0].0) || !w[1].0.is_finite() {
                        return Err(Error::InvalidParameter(format!(
                            "tabulated u values must be strictly increasing ({} then {})",
                            w[0].0, w[1].0
                        )));
                    }
                }
                if let Some(&(u, v)) = samples.iter().find(|(_, v)| !(v.is_finite() && *v >= 0.0)) {
                    return Err(Error::InvalidParameter(format!(
                        "tabulated L must be finite and non-negative, got L({u}) = {v}"
                    )));
                }
                Ok(())
            }
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            LAverage::Constant { .. } => "constant",
            LAverage::Affine { .. } => "affine",
            LAverage::Holder { .. } => "holder",
            LAverage::Rational { .. } => "rational",
            LAverage::Tabulated { .. } => "tabulated",
        }
    }

    /// Supremum of the admissible arguments and whether it is attained.
    pub fn domain_end(&self) -> (f64, bool) {
        match self {
            LAverage::Rational { gamma, .. } => (1.0 / gamma, false),
            LAverage::Tabulated { samples } => (samples[samples.len() - 1].0, true),
            _ => (f64::INFINITY, false),
        }
    }

    fn check_domain(&self, s: f64) -> Result<()> {
        check_arg(s)?;
        match self {
            LAverage::Rational { gamma, .. } if s * gamma >= 1.0 => Err(Error::Domain(format!(
                "rational majorant has a pole at 1/gamma = {}; argument {s} is outside",
                1.0 / gamma
            ))),
            LAverage::Tabulated { samples } if s > samples[samples.len() - 1].0 => {
                Err(Error::Domain(format!(
                    "argument {s} beyond last tabulated point {}",
                    samples[samples.len() - 1].0
                )))
            }
            _ => Ok(()),
        }
    }

    /// Exponent for the `u = s w^p` substitution that regularizes the
    /// integrand near zero.
    pub fn quadrature_power(&self) -> u32 {
        match self {
            LAverage::Holder { a, .. } => (2.0 / a).ceil() as u32,
            _ => 1,
        }
    }

    /// Pointwise value `L(u)`; the Hölder family returns `+inf` at `u = 0`.
    pub fn eval(&self, u: f64) -> Result<f64> {
        self.check_domain(u)?;
        Ok(match self {
            LAverage::Constant { l } => *l,
            LAverage::Affine { gamma, l } => gamma + l * u,
            LAverage::Holder { c, a } => {
                if u == 0.0 {
                    f64::INFINITY
                } else {
                    c * a * u.powf(a - 1.0)
                }
            }
            LAverage::Rational { gamma, c } => 2.0 * gamma * c / (1.0 - gamma * u).powi(3),
            LAverage::Tabulated { samples } => interpolate(samples, u),
        })
    }

    /// `∫₀^s L(u) du`.
    pub fn cumulative(&self, s: f64, _q: &QuadratureConfig) -> Result<f64> {
        self.check_domain(s)?;
        Ok(match self {
            LAverage::Constant { l } => l * s,
            LAverage::Affine { gamma, l } => gamma * s + 0.5 * l * s * s,
            LAverage::Holder { c, a } => c * s.powf(*a),
            LAverage::Rational { gamma, c } => {
                let w = 1.0 - gamma * s;
                // c/w² - c, written to avoid cancellation for small s
                c * gamma * s * (2.0 - gamma * s) / (w * w)
            }
            LAverage::Tabulated { samples } => piecewise_integral(samples, s, |u0, l0, u1, l1| {
                0.5 * (u1 - u0) * (l0 + l1)
            }),
        })
    }

    /// `∫₀^s u L(u) du`.
    pub fn first_moment(&self, s: f64, _q: &QuadratureConfig) -> Result<f64> {
        self.check_domain(s)?;
        Ok(match self {
            LAverage::Constant { l } => 0.5 * l * s * s,
            LAverage::Affine { gamma, l } => 0.5 * gamma * s * s + l * s * s * s / 3.0,
            LAverage::Holder { c, a } => c * a * s.powf(a + 1.0) / (a + 1.0),
            LAverage::Rational { gamma, c } => {
                let w = 1.0 - gamma * s;
                c * gamma * s * s / (w * w)
            }
            LAverage::Tabulated { samples } => piecewise_integral(samples, s, |u0, l0, u1, l1| {
                // Simpson is exact for the quadratic u * L(u) on a segment.
                let um = 0.5 * (u0 + u1);
                let lm = 0.5 * (l0 + l1);
                (u1 - u0) / 6.0 * (u0 * l0 + 4.0 * um * lm + u1 * l1)
            }),
        })
    }

    /// `φ_{b,a}(f) = f^{-(a+b)} ∫₀^f u^b L(u) du`.
    pub fn phi(&self, b: f64, a: f64, f: f64, q: &QuadratureConfig) -> Result<f64> {
        if !(b >= 0.0 && b.is_finite()) {
            return Err(Error::InvalidParameter(format!("phi weight b must be >= 0, got {b}")));
        }
        if !(0.0..=1.0).contains(&a) {
            return Err(Error::InvalidParameter(format!("phi exponent a must lie in [0, 1], got {a}")));
        }
        if !(f > 0.0) {
            return Err(Error::Domain(format!("phi needs f > 0, got {f}")));
        }
        self.check_domain(f)?;
        let weighted = match self {
            LAverage::Constant { l } => l * f.powf(b + 1.0) / (b + 1.0),
            LAverage::Affine { gamma, l } => {
                gamma * f.powf(b + 1.0) / (b + 1.0) + l * f.powf(b + 2.0) / (b + 2.0)
            }
            LAverage::Holder { c, a: h } => c * h * f.powf(b + h) / (b + h),
            _ if b == 0.0 => self.cumulative(f, q)?,
            _ if b == 1.0 => self.first_moment(f, q)?,
            _ => self.weighted_integral_numeric(b, f, q)?,
        };
        Ok(weighted / f.powf(a + b))
    }

    /// `∫₀^s u^b L(u) du` by quadrature of pointwise values.
    pub fn weighted_integral_numeric(&self, b: f64, s: f64, q: &QuadratureConfig) -> Result<f64> {
        self.check_domain(s)?;
        if s == 0.0 {
            return Ok(0.0);
        }
        integrate_from_zero(
            |u| {
                if u == 0.0 {
                    return if b > 0.0 { 0.0 } else { self.eval(u).unwrap_or(f64::NAN) };
                }
                u.powf(b) * self.eval(u).unwrap_or(f64::NAN)
            },
            s,
            self.quadrature_power(),
            q,
        )
    }
}

fn interpolate(samples: &[(f64, f64)], u: f64) -> f64 {
    let idx = samples.partition_point(|&(x, _)| x <= u);
    if idx == 0 {
        return samples[0].1;
    }
    if idx >= samples.len() {
        return samples[samples.len() - 1].1;
    }
    let (u0, l0) = samples[idx - 1];
    let (u1, l1) = samples[idx];
    l0 + (l1 - l0) * (u - u0) / (u1 - u0)
}

fn piecewise_integral<F>(samples: &[(f64, f64)], s: f64, segment: F) -> f64
where
    F: Fn(f64, f64, f64, f64) -> f64,
{
    let mut total = 0.0;
    for w in samples.windows(2) {
        let (u0, l0) = w[0];
        let (u1, l1) = w[1];
        if s <= u0 {
            break;
        }
        if s >= u1 {
            total += segment(u0, l0, u1, l1);
        } else {
            total += segment(u0, l0, s, interpolate(samples, s));
            break;
        }
    }
    total
}

/// Outcome of a grid monotonicity check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Monotonicity {
    pub holds: bool,
    /// First adjacent pair `(u_i, u_{i+1})` where `g` dropped.
    pub violation: Option<(f64, f64)>,
}

/// Samples `g` on `n_grid` equispaced points of `[lo, hi]` and checks
/// `g(u_{i+1}) >= g(u_i) - abs_tol`.
pub fn check_nondecreasing<G>(g: G, lo: f64, hi: f64, n_grid: usize, abs_tol: f64) -> Result<Monotonicity>
where
    G: Fn(f64) -> Result<f64>,
{
    if !(lo < hi) || n_grid < 2 {
        return Err(Error::InvalidParameter(format!(
            "need lo < hi and n_grid >= 2, got [{lo}, {hi}] with {n_grid} points"
        )));
    }
    let step = (hi - lo) / (n_grid - 1) as f64;
    let point = |i: usize| if i + 1 == n_grid { hi } else { lo + step * i as f64 };
    let mut prev = g(lo)?;
    for i in 1..n_grid {
        let u = point(i);
        let cur = g(u)?;
        if cur < prev - abs_tol {
            return Ok(Monotonicity {
                holds: false,
                violation: Some((point(i - 1), u)),
            });
        }
        prev = cur;
    }
    Ok(Monotonicity {
        holds: true,
        violation: None,
    })
}

/// Both readings of the weak-average monotonicity hypothesis: `f^(1-a)`
/// alone and `f^(1-a) L(f)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeakAverageCheck {
    pub a: f64,
    pub power_only: Monotonicity,
    pub power_times_l: Monotonicity,
}

pub fn weak_average_check(fam: &LAverage, a: f64, lo: f64, hi: f64, n_grid: usize) -> Result<WeakAverageCheck> {
    if !(0.0..=1.0).contains(&a) {
        return Err(Error::InvalidParameter(format!("a must lie in [0, 1], got {a}")));
    }
    let power_only = check_nondecreasing(|f| Ok(f.powf(1.0 - a)), lo, hi, n_grid, MONOTONE_ABS_TOL)?;
    let power_times_l = check_nondecreasing(
        |f| Ok(f.powf(1.0 - a) * fam.eval(f)?),
        lo,
        hi,
        n_grid,
        MONOTONE_ABS_TOL,
    )?;
    Ok(WeakAverageCheck {
        a,
        power_only,
        power_times_l,
    })
}

/// Two independently computed sides of an integral identity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IdentityCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub rel_gap: f64,
}

impl IdentityCheck {
    fn new(lhs: f64, rhs: f64) -> Self {
        let scale = lhs.abs().max(rhs.abs());
        let rel_gap = if scale == 0.0 { 0.0 } else { (lhs - rhs).abs() / scale };
        Self { lhs, rhs, rel_gap }
    }
}

/// Order-swap identity behind the radius-condition bound:
/// `∫₀¹ ∫_{τs}^{s} L(u) du dτ = (1/s) ∫₀^s u L(u) du`, `s = ρx + ρy`.
///
/// The left side integrates the closed-form inner integral over `τ`; the
/// right side integrates pointwise values of `u L(u)`.
pub fn radius_identity(fam: &LAverage, rho_x: f64, rho_y: f64, q: &QuadratureConfig) -> Result<IdentityCheck> {
    let s = rho_x + rho_y;
    if !(s > 0.0) {
        return Err(Error::Domain(format!("rho_x + rho_y must be positive, got {s}")));
    }
    let total = fam.cumulative(s, q)?;
    let power = fam.quadrature_power();
    let lhs = integrate_from_zero(
        |tau| total - fam.cumulative(tau * s, q).unwrap_or(f64::NAN),
        1.0,
        power,
        q,
    )?;
    let rhs = fam.weighted_integral_numeric(1.0, s, q)? / s;
    Ok(IdentityCheck::new(lhs, rhs))
}

/// Center identity: `∫₀¹ [∫₀^{2τρ} L(u) du] ρ dτ = ∫₀^{2ρ} L(u) (ρ - u/2) du`.
pub fn center_identity(fam: &LAverage, rho: f64, q: &QuadratureConfig) -> Result<IdentityCheck> {
    if !(rho > 0.0) {
        return Err(Error::Domain(format!("rho must be positive, got {rho}")));
    }
    let power = fam.quadrature_power();
    let lhs = rho
        * integrate_from_zero(
            |tau| fam.cumulative(2.0 * tau * rho, q).unwrap_or(f64::NAN),
            1.0,
            power,
            q,
        )?;
    fam.check_domain(2.0 * rho)?;
    let rhs = integrate_from_zero(
        |u| fam.eval(u).unwrap_or(f64::NAN) * (rho - 0.5 * u),
        2.0 * rho,
        power,
        q,
    )?;
    Ok(IdentityCheck::new(lhs, rhs))
}

/// Which Lipschitz-type hypothesis a constant or audit refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LipschitzKind {
    /// `‖J*⁻¹(J(x) - J(y^τ))‖` along segments toward the root.
    Radius,
    /// `‖J*⁻¹(J(x) - J(x*))‖`.
    Center,
}

impl std::str::FromStr for LipschitzKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "radius" => Ok(LipschitzKind::Radius),
            "center" => Ok(LipschitzKind::Center),
            other => Err(Error::InvalidParameter(format!("unknown kind `{other}`"))),
        }
    }
}

/// Sample point where the sup of a Lipschitz ratio was attained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub x: Vec<f64>,
    pub y: Option<Vec<f64>>,
    pub tau: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstantEstimate {
    pub kind: LipschitzKind,
    pub value: f64,
    pub argmax_witness: Witness,
    pub grid_size: usize,
}

/// Jacobian at the root together with its factorization.
pub struct RootJacobian<'a> {
    problem: &'a NonlinearProblem,
    root: Vec<f64>,
    jstar: Matrix,
    lu: Lu,
}

impl<'a> RootJacobian<'a> {
    pub fn new(problem: &'a NonlinearProblem) -> Result<Self> {
        let root = problem.root().ok_or(Error::MissingRoot)?.to_vec();
        let jstar = problem.jacobian(&root)?;
        let lu = Lu::factor(&jstar).map_err(|_| Error::SingularJacobian)?;
        Ok(Self {
            problem,
            root,
            jstar,
            lu,
        })
    }

    pub fn root(&self) -> &[f64] {
        &self.root
    }

    /// `‖J*⁻¹ (J(x) - J(z))‖`, operator norm.
    pub fn relative_difference(&self, x: &[f64], z: &[f64]) -> Result<f64> {
        let jx = self.problem.jacobian(x)?;
        let jz = if z == self.root.as_slice() {
            self.jstar.clone()
        } else {
            self.problem.jacobian(z)?
        };
        Ok(self.lu.solve_matrix(&jx.sub(&jz))?.operator_norm())
    }

    /// Left side of the center condition at `x`.
    pub fn center_lhs(&self, x: &[f64]) -> Result<f64> {
        let jx = self.problem.jacobian(x)?;
        Ok(self.lu.solve_matrix(&jx.sub(&self.jstar))?.operator_norm())
    }

    /// Left side of the radius condition at `(x, y, τ)`, with
    /// `y^τ = x* + τ (y - x*)`.
    pub fn radius_lhs(&self, x: &[f64], y: &[f64], tau: f64) -> Result<f64> {
        let y_tau: Vec<f64> = self
            .root
            .iter()
            .zip(y)
            .map(|(r, yi)| r + tau * (yi - r))
            .collect();
        self.relative_difference(x, &y_tau)
    }

    /// Ratio of the radius-condition left side to `(1 - τ)(ρ(x) + ρ(y))`.
    pub fn radius_ratio(&self, x: &[f64], y: &[f64], tau: f64) -> Result<Option<f64>> {
        let den = (1.0 - tau) * (distance(x, &self.root) + distance(y, &self.root));
        if den <= MIN_DENOMINATOR {
            return Ok(None);
        }
        Ok(Some(self.radius_lhs(x, y, tau)? / den))
    }

    /// Ratio of the center-condition left side to `2 ρ(x)`.
    pub fn center_ratio(&self, x: &[f64]) -> Result<Option<f64>> {
        let den = 2.0 * distance(x, &self.root);
        if den <= MIN_DENOMINATOR {
            return Ok(None);
        }
        Ok(Some(self.center_lhs(x)? / den))
    }
}

/// Uniform sample from the open ball `V(center, r)`.
pub(crate) fn sample_ball<R: Rng>(rng: &mut R, center: &[f64], r: f64) -> Vec<f64> {
    let n = center.len();
    if n == 1 {
        let u: f64 = rng.gen_range(-1.0..1.0);
        return vec![center[0] + r * u];
    }
    let mut dir: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    let norm = crate::linalg::norm2(&dir);
    let radius = r * rng.gen::<f64>().powf(1.0 / n as f64);
    dir.iter_mut()
        .zip(center)
        .for_each(|(d, c)| *d = c + radius * *d / norm);
    dir
}

/// Samples the ball `V(x*, r)` and returns the largest observed ratio.
///
/// For `Center` the ratio is `‖J*⁻¹(J(x) - J(x*))‖ / (2‖x - x*‖)`; for
/// `Radius` it is `‖J*⁻¹(J(x) - J(y^τ))‖ / ((1 - τ)(‖x - x*‖ + ‖y - x*‖))`
/// with `τ ∈ [0, 1 - 1e-3]`. Samples come from a seeded stream, so the
/// samples for `n_grid` are a prefix of those for any larger grid.
pub fn estimate_constant(
    problem: &NonlinearProblem,
    kind: LipschitzKind,
    r: f64,
    n_grid: usize,
    seed: u64,
) -> Result<ConstantEstimate> {
    positive("r", r)?;
    if n_grid == 0 {
        return Err(Error::InvalidParameter("n_grid must be positive".into()));
    }
    let ctx = RootJacobian::new(problem)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<(f64, Witness)> = None;
    for _ in 0..n_grid {
        let x = sample_ball(&mut rng, ctx.root(), r);
        let (ratio, witness) = match kind {
            LipschitzKind::Center => (
                ctx.center_ratio(&x)?,
                Witness {
                    x,
                    y: None,
                    tau: None,
                },
            ),
            LipschitzKind::Radius => {
                let y = sample_ball(&mut rng, ctx.root(), r);
                let tau = rng.gen_range(0.0..=1.0 - TAU_EXCLUSION);
                (
                    ctx.radius_ratio(&x, &y, tau)?,
                    Witness {
                        x,
                        y: Some(y),
                        tau: Some(tau),
                    },
                )
            }
        };
        if let Some(v) = ratio {
            if best.as_ref().map_or(true, |(b, _)| v > *b) {
                best = Some((v, witness));
            }
        }
    }
    let (value, argmax_witness) = best.ok_or(Error::DegenerateGrid)?;
    Ok(ConstantEstimate {
        kind,
        value,
        argmax_witness,
        grid_size: n_grid,
    })
}

/// Result of checking a generalized Lipschitz condition against a family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionAudit {
    pub kind: LipschitzKind,
    /// Largest `lhs / majorant` over the samples; `<= 1` means no violation.
    pub max_ratio: f64,
    pub witness: Witness,
    pub holds: bool,
    pub samples: usize,
}

/// Samples the ball and compares the condition's left side with the
/// family's majorant: `∫₀^{2ρ(x)} L` (center) or `∫_{τs}^{s} L` with
/// `s = ρ(x) + ρ(y)` (radius).
pub fn audit_condition(
    problem: &NonlinearProblem,
    kind: LipschitzKind,
    fam: &LAverage,
    r: f64,
    n_grid: usize,
    seed: u64,
    q: &QuadratureConfig,
) -> Result<ConditionAudit> {
    positive("r", r)?;
    let ctx = RootJacobian::new(problem)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<(f64, Witness)> = None;
    for _ in 0..n_grid {
        let x = sample_ball(&mut rng, ctx.root(), r);
        let rho_x = distance(&x, ctx.root());
        let (ratio, witness) = match kind {
            LipschitzKind::Center => {
                let majorant = fam.cumulative(2.0 * rho_x, q)?;
                let lhs = ctx.center_lhs(&x)?;
                (
                    (majorant > MIN_DENOMINATOR).then(|| lhs / majorant),
                    Witness {
                        x,
                        y: None,
                        tau: None,
                    },
                )
            }
            LipschitzKind::Radius => {
                let y = sample_ball(&mut rng, ctx.root(), r);
                let tau = rng.gen_range(0.0..=1.0 - TAU_EXCLUSION);
                let s = rho_x + distance(&y, ctx.root());
                let majorant = fam.cumulative(s, q)? - fam.cumulative(tau * s, q)?;
                let lhs = ctx.radius_lhs(&x, &y, tau)?;
                (
                    (majorant > MIN_DENOMINATOR).then(|| lhs / majorant),
                    Witness {
                        x,
                        y: Some(y),
                        tau: Some(tau),
                    },
                )
            }
        };
        if let Some(v) = ratio {
            if best.as_ref().map_or(true, |(b, _)| v > *b) {
                best = Some((v, witness));
            }
        }
    }
    let (max_ratio, witness) = best.ok_or(Error::DegenerateGrid)?;
    Ok(ConditionAudit {
        kind,
        max_ratio,
        witness,
        holds: max_ratio <= 1.0 + 1e-12,
        samples: n_grid,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::integrate;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn q() -> QuadratureConfig {
        QuadratureConfig::default()
    }

    fn tight() -> QuadratureConfig {
        QuadratureConfig::new(1e-13, 1e-16, 200_000).unwrap()
    }

    #[test]
    fn eval_examples() {
        assert_eq!(LAverage::constant(2.0).unwrap().eval(0.3).unwrap(), 2.0);
        assert_relative_eq!(LAverage::holder(2.0, 0.5).unwrap().eval(4.0).unwrap(), 0.5);
        let err = LAverage::rational(1.0, 1.0).unwrap().eval(1.0).unwrap_err();
        assert!(matches!(err, Error::Domain(_)));
        assert_eq!(LAverage::holder(1.0, 0.5).unwrap().eval(0.0).unwrap(), f64::INFINITY);
    }

    #[test]
    fn parameter_validation() {
        assert!(LAverage::constant(0.0).is_err());
        assert!(LAverage::constant(f64::NAN).is_err());
        assert!(LAverage::holder(1.0, 1.0).is_err());
        assert!(LAverage::holder(1.0, 0.0).is_err());
        assert!(LAverage::rational(0.0, 1.0).is_err());
        assert!(LAverage::affine(-1.0, 1.0).is_err());
        assert!(LAverage::affine(0.0, 1.0).is_ok());
        assert!(LAverage::tabulated(vec![(0.0, 1.0)]).is_err());
        assert!(LAverage::tabulated(vec![(0.1, 1.0), (1.0, 2.0)]).is_err());
        assert!(LAverage::tabulated(vec![(0.0, 1.0), (0.0, 2.0)]).is_err());
        assert!(LAverage::tabulated(vec![(0.0, 1.0), (1.0, -2.0)]).is_err());
    }

    #[test]
    fn integrals_vanish_at_zero() {
        let fams = [
            LAverage::constant(3.0).unwrap(),
            LAverage::affine(1.0, 2.0).unwrap(),
            LAverage::holder(1.0, 0.3).unwrap(),
            LAverage::rational(2.0, 0.5).unwrap(),
            LAverage::tabulated(vec![(0.0, 1.0), (1.0, 3.0)]).unwrap(),
        ];
        for f in &fams {
            assert_eq!(f.cumulative(0.0, &q()).unwrap(), 0.0, "{}", f.name());
            assert_eq!(f.first_moment(0.0, &q()).unwrap(), 0.0, "{}", f.name());
        }
    }

    #[test]
    fn cumulative_examples() {
        let r = LAverage::rational(1.0, 1.0).unwrap();
        assert_relative_eq!(r.cumulative(0.5, &q()).unwrap(), 3.0, max_relative = 1e-15);
        let h = LAverage::holder(2.0, 0.5).unwrap();
        assert_relative_eq!(h.cumulative(4.0, &q()).unwrap(), 4.0, max_relative = 1e-15);
        assert!(r.cumulative(1.0, &q()).is_err());
    }

    #[test]
    fn first_moment_examples() {
        let c = LAverage::constant(1.0).unwrap();
        assert_relative_eq!(c.first_moment(2.0, &q()).unwrap(), 2.0);
        let h = LAverage::holder(1.0, 0.5).unwrap();
        assert_relative_eq!(h.first_moment(1.0, &q()).unwrap(), 1.0 / 3.0, max_relative = 1e-15);
    }

    #[test]
    fn rational_first_moment_matches_quadrature() {
        // antiderivative c γ s² / (1 - γ s)², checked against pointwise quadrature
        for &(gamma, c, s) in &[(1.0, 1.0, 0.5), (2.0, 0.3, 0.4), (0.7, 5.0, 1.2)] {
            let fam = LAverage::rational(gamma, c).unwrap();
            let closed = fam.first_moment(s, &q()).unwrap();
            let numeric = integrate(|u| u * fam.eval(u).unwrap(), 0.0, s, &tight()).unwrap();
            assert_relative_eq!(closed, numeric, max_relative = 1e-11);
        }
    }

    #[test]
    fn tabulated_interpolation_and_integrals() {
        let t = LAverage::tabulated(vec![(0.0, 1.0), (1.0, 3.0), (2.0, 3.0)]).unwrap();
        assert_relative_eq!(t.eval(0.5).unwrap(), 2.0);
        assert_relative_eq!(t.eval(1.5).unwrap(), 3.0);
        assert_relative_eq!(t.eval(2.0).unwrap(), 3.0);
        assert!(t.eval(2.0001).is_err());
        // ∫₀^1 (1 + 2u) = 2, plus 3 on [1, 2]
        assert_relative_eq!(t.cumulative(1.0, &q()).unwrap(), 2.0);
        assert_relative_eq!(t.cumulative(2.0, &q()).unwrap(), 5.0);
        assert_relative_eq!(t.cumulative(0.5, &q()).unwrap(), 0.75);
        // ∫₀^1 u(1 + 2u) = 1/2 + 2/3; ∫₁^2 3u = 4.5
        assert_relative_eq!(t.first_moment(1.0, &q()).unwrap(), 0.5 + 2.0 / 3.0, max_relative = 1e-14);
        assert_relative_eq!(t.first_moment(2.0, &q()).unwrap(), 0.5 + 2.0 / 3.0 + 4.5, max_relative = 1e-14);
    }

    #[test]
    fn tabulated_csv() {
        let csv = "u,L\n0,1\n0.5,2\n1,2.5\n";
        let t = LAverage::tabulated_from_reader(csv.as_bytes()).unwrap();
        assert_relative_eq!(t.eval(0.25).unwrap(), 1.5);
        assert!(LAverage::tabulated_from_reader("x,y\n0,1\n1,2\n".as_bytes()).is_err());
        assert!(LAverage::tabulated_from_reader("u,L\n0,1\n0,2\n".as_bytes()).is_err());
        assert!(LAverage::tabulated_from_reader("u,L\n0,1\nfoo,2\n".as_bytes()).is_err());
    }

    #[test]
    fn phi_examples() {
        let c = 2.5;
        let k = LAverage::constant(c).unwrap();
        for f in [0.1, 1.0, 7.0] {
            assert_relative_eq!(k.phi(1.0, 1.0, f, &q()).unwrap(), c / 2.0, max_relative = 1e-14);
        }
        let (hc, ha) = (1.5, 0.3);
        let h = LAverage::holder(hc, ha).unwrap();
        for f in [0.01, 0.5, 3.0] {
            assert_relative_eq!(h.phi(1.0, ha, f, &q()).unwrap(), hc * ha / (ha + 1.0), max_relative = 1e-13);
        }
        // f^{-(a+b)} ∫₀^f L: with a = b = 0 this is the plain integral
        assert_relative_eq!(LAverage::constant(1.0).unwrap().phi(0.0, 0.0, 3.0, &q()).unwrap(), 3.0);
        assert_relative_eq!(LAverage::constant(1.0).unwrap().phi(0.0, 1.0, 3.0, &q()).unwrap(), 1.0);
        assert!(k.phi(1.0, 1.5, 1.0, &q()).is_err());
        assert!(k.phi(1.0, 0.5, 0.0, &q()).is_err());
    }

    #[test]
    fn phi_generic_weight_uses_quadrature() {
        let r = LAverage::rational(1.0, 1.0).unwrap();
        let f = 0.6;
        let b = 0.5;
        let numeric = r.phi(b, 0.5, f, &tight()).unwrap();
        let direct = integrate(|u| u.powf(b) * r.eval(u).unwrap(), 0.0, f, &tight()).unwrap() / f;
        assert_relative_eq!(numeric, direct, max_relative = 1e-9);
    }

    #[test]
    fn nondecreasing_examples() {
        let c = LAverage::constant(1.0).unwrap();
        let m = check_nondecreasing(|s| c.cumulative(s, &q()), 0.0, 1.0, 100, MONOTONE_ABS_TOL).unwrap();
        assert!(m.holds);
        let h = LAverage::holder(1.0, 0.5).unwrap();
        let m = check_nondecreasing(|u| h.phi(1.0, 0.5, u, &q()), 0.1, 2.0, 200, MONOTONE_ABS_TOL).unwrap();
        assert!(m.holds);
        let m = check_nondecreasing(|u| Ok(-u), 0.0, 1.0, 10, MONOTONE_ABS_TOL).unwrap();
        assert!(!m.holds);
        let (a, b) = m.violation.unwrap();
        assert_eq!(a, 0.0);
        assert_relative_eq!(b, 1.0 / 9.0);
        assert!(check_nondecreasing(|u| Ok(u), 1.0, 0.0, 10, 0.0).is_err());
        assert!(check_nondecreasing(|u| Ok(u), 0.0, 1.0, 1, 0.0).is_err());
    }

    #[test]
    fn nondecreasing_propagates_errors() {
        let r = LAverage::rational(1.0, 1.0).unwrap();
        assert!(check_nondecreasing(|u| r.eval(u), 0.0, 2.0, 10, 0.0).is_err());
    }

    #[test]
    fn weak_average_reports_both_readings() {
        let h = LAverage::holder(1.0, 0.5).unwrap();
        let w = weak_average_check(&h, 0.5, 0.01, 2.0, 100).unwrap();
        assert!(w.power_only.holds);
        assert!(w.power_times_l.holds);
        // f^{1-a} L(f) for a constant L is still non-decreasing; for a
        // decreasing tabulated L with a = 1 it is not.
        let t = LAverage::tabulated(vec![(0.0, 3.0), (2.0, 1.0)]).unwrap();
        let w = weak_average_check(&t, 1.0, 0.0, 2.0, 50).unwrap();
        assert!(w.power_only.holds);
        assert!(!w.power_times_l.holds);
    }

    #[test]
    fn scaled_moment_is_nondecreasing_for_monotone_families() {
        let fams = [
            LAverage::constant(2.0).unwrap(),
            LAverage::affine(0.5, 3.0).unwrap(),
            LAverage::rational(1.0, 2.0).unwrap(),
            LAverage::tabulated(vec![(0.0, 0.5), (0.3, 0.6), (1.0, 4.0)]).unwrap(),
        ];
        for fam in &fams {
            let hi = fam.domain_end().0.min(1.0) * 0.99;
            let m = check_nondecreasing(
                |s| Ok(fam.first_moment(s, &q())? / (s * s)),
                1e-3,
                hi,
                500,
                MONOTONE_ABS_TOL,
            )
            .unwrap();
            assert!(m.holds, "{} violated at {:?}", fam.name(), m.violation);
        }
    }

    #[test]
    fn identities_for_each_family() {
        let fams = [
            LAverage::constant(1.3).unwrap(),
            LAverage::affine(0.4, 2.0).unwrap(),
            LAverage::holder(1.0, 0.5).unwrap(),
            LAverage::rational(1.0, 1.0).unwrap(),
        ];
        for fam in &fams {
            let r = radius_identity(fam, 0.1, 0.15, &tight()).unwrap();
            assert!(r.rel_gap <= 1e-9, "{} radius gap {:?}", fam.name(), r);
            let c = center_identity(fam, 0.2, &tight()).unwrap();
            assert!(c.rel_gap <= 1e-9, "{} center gap {:?}", fam.name(), c);
        }
    }

    fn family_strategy() -> impl Strategy<Value = (LAverage, f64)> {
        prop_oneof![
            (0.1f64..10.0, 0.01f64..5.0).prop_map(|(l, s)| (LAverage::constant(l).unwrap(), s)),
            (0.0f64..5.0, 0.1f64..10.0, 0.01f64..5.0)
                .prop_map(|(g, l, s)| (LAverage::affine(g, l).unwrap(), s)),
            (0.1f64..5.0, 0.1f64..0.95, 0.01f64..5.0)
                .prop_map(|(c, a, s)| (LAverage::holder(c, a).unwrap(), s)),
            (0.1f64..5.0, 0.1f64..5.0, 0.01f64..0.95)
                .prop_map(|(g, c, frac)| (LAverage::rational(g, c).unwrap(), frac / g)),
        ]
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        #[test]
        fn closed_forms_match_quadrature((fam, s) in family_strategy()) {
            let tq = tight();
            let power = fam.quadrature_power();
            let num_c = integrate_from_zero(|u| fam.eval(u).unwrap(), s, power, &tq).unwrap();
            let num_m = fam.weighted_integral_numeric(1.0, s, &tq).unwrap();
            let c = fam.cumulative(s, &tq).unwrap();
            let m = fam.first_moment(s, &tq).unwrap();
            prop_assert!((c - num_c).abs() <= 1e-9 * c.abs(), "cumulative {} vs {}", c, num_c);
            prop_assert!((m - num_m).abs() <= 1e-9 * m.abs(), "moment {} vs {}", m, num_m);
        }

        #[test]
        fn integrals_are_nondecreasing((fam, s) in family_strategy(), frac in 0.0f64..1.0) {
            let lo = s * frac;
            prop_assert!(fam.cumulative(lo, &q()).unwrap() <= fam.cumulative(s, &q()).unwrap());
            prop_assert!(fam.first_moment(lo, &q()).unwrap() <= fam.first_moment(s, &q()).unwrap());
        }
    }
}
