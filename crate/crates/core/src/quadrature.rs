//! Deterministic double-exponential quadrature.
//!
//! Every integral is reduced to a trapezoid sum over `u ∈ [-u_max, u_max]` of
//! `f(x(u)) x'(u)` for a double-exponential map `x(u)`:
//!
//! * finite `[a, b]`: tanh-sinh, `x = m + r·tanh(π/2·sinh u)`
//! * `(a, ∞)`: exp-sinh, `x = a + exp(π/2·sinh u)`
//! * `R`: sinh-sinh, `x = sinh(π/2·sinh u)`
//! * `(0, ∞)` with log substitution: `x = exp(t)`, `t = sinh(π/2·sinh u)`
//!
//! Levels halve the step and only add the new odd nodes, so the node set at
//! each level is fixed and results are bit-reproducible.

use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Error, Debug, Clone, PartialEq)]
pub enum QuadError {
    #[error("quadrature did not converge after {levels} levels (value {value:e}, error estimate {err_est:e})")]
    NonConvergence {
        value: f64,
        err_est: f64,
        levels: usize,
    },

    #[error("integrand returned NaN at x = {x}")]
    NanIntegrand { x: f64 },

    #[error("non-finite contribution at x = {x}")]
    NonFinite { x: f64 },

    #[error("invalid quadrature configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Transform {
    /// Plain trapezoid refinement on a finite interval.
    None,
    DoubleExponential,
    /// `t = ln x` on `(0, ∞)` followed by a double-exponential rule on `R`.
    LogSubstitution,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuadConfig {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_levels: usize,
    pub transform: Transform,
}

impl Default for QuadConfig {
    fn default() -> Self {
        Self {
            abs_tol: 1e-10,
            rel_tol: 1e-10,
            max_levels: 12,
            transform: Transform::DoubleExponential,
        }
    }
}

impl QuadConfig {
    pub fn validate(&self) -> Result<(), QuadError> {
        if !(self.abs_tol > 0.0 && self.abs_tol.is_finite()) {
            return Err(QuadError::InvalidConfig("abs_tol must be positive".into()));
        }
        if !(self.rel_tol > 0.0 && self.rel_tol.is_finite()) {
            return Err(QuadError::InvalidConfig("rel_tol must be positive".into()));
        }
        if self.max_levels < 1 {
            return Err(QuadError::InvalidConfig("max_levels must be >= 1".into()));
        }
        Ok(())
    }

    pub fn with_transform(mut self, transform: Transform) -> Self {
        self.transform = transform;
        self
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Interval {
    Finite { a: f64, b: f64 },
    /// `(a, ∞)`
    UpperHalf { a: f64 },
    Real,
    /// `(0, ∞)`
    Positive,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuadResult {
    pub value: f64,
    pub err_est: f64,
    pub levels: usize,
    pub evaluations: usize,
}

const MIN_LEVELS: usize = 6;
/// Relative to `∫|f|`; below this the level differences are pure roundoff.
const ROUNDOFF_FLOOR: f64 = 64.0 * f64::EPSILON;

#[derive(Clone, Copy, Debug)]
enum Map {
    TanhSinh { mid: f64, half: f64 },
    ExpSinh { a: f64 },
    SinhSinh,
    LogSinhSinh,
    Trapezoid { a: f64, b: f64 },
}

impl Map {
    fn u_range(&self) -> (f64, f64) {
        match self {
            Map::TanhSinh { .. } => (-4.0, 4.0),
            Map::ExpSinh { .. } => (-5.0, 5.0),
            Map::SinhSinh => (-5.5, 5.5),
            Map::LogSinhSinh => (-4.0, 4.0),
            Map::Trapezoid { a, b } => (*a, *b),
        }
    }

    /// Node and Jacobian weight at `u`.
    #[inline]
    fn node(&self, u: f64) -> (f64, f64) {
        match *self {
            Map::TanhSinh { mid, half } => {
                let z = FRAC_PI_2 * u.sinh();
                let ch = z.cosh();
                // offset from the nearer endpoint, computed without cancellation
                let x = if z < 0.0 {
                    (mid - half) + 2.0 * half / (1.0 + (-2.0 * z).exp())
                } else {
                    (mid + half) - 2.0 * half / (1.0 + (2.0 * z).exp())
                };
                (x, half * FRAC_PI_2 * u.cosh() / (ch * ch))
            }
            Map::ExpSinh { a } => {
                let e = (FRAC_PI_2 * u.sinh()).exp();
                (a + e, FRAC_PI_2 * u.cosh() * e)
            }
            Map::SinhSinh => {
                let z = FRAC_PI_2 * u.sinh();
                (z.sinh(), FRAC_PI_2 * u.cosh() * z.cosh())
            }
            Map::LogSinhSinh => {
                let z = FRAC_PI_2 * u.sinh();
                let x = z.sinh().exp();
                (x, x * FRAC_PI_2 * u.cosh() * z.cosh())
            }
            Map::Trapezoid { .. } => (u, 1.0),
        }
    }
}

fn select_map(support: Interval, cfg: &QuadConfig) -> Result<Map, QuadError> {
    match (cfg.transform, support) {
        (Transform::None, Interval::Finite { a, b }) => Ok(Map::Trapezoid { a, b }),
        (Transform::None, _) => Err(QuadError::InvalidConfig(
            "transform `none` requires a finite interval".into(),
        )),
        (Transform::LogSubstitution, Interval::Positive) => Ok(Map::LogSinhSinh),
        (Transform::LogSubstitution, Interval::UpperHalf { a: 0.0 }) => Ok(Map::LogSinhSinh),
        (Transform::LogSubstitution, _) => Err(QuadError::InvalidConfig(
            "log substitution requires the interval (0, ∞)".into(),
        )),
        (Transform::DoubleExponential, Interval::Finite { a, b }) => Ok(Map::TanhSinh {
            mid: 0.5 * (a + b),
            half: 0.5 * (b - a),
        }),
        (Transform::DoubleExponential, Interval::UpperHalf { a }) => Ok(Map::ExpSinh { a }),
        (Transform::DoubleExponential, Interval::Positive) => Ok(Map::ExpSinh { a: 0.0 }),
        (Transform::DoubleExponential, Interval::Real) => Ok(Map::SinhSinh),
    }
}

/// Integrate `f` over `support`.
///
/// Convergence is declared when two consecutive level differences are
/// within `max(abs_tol, rel_tol·|value|, 64ε·∫|f|)`, and never before level 5.
/// The last term only matters for integrals that cancel far below the size
/// of their integrand.
///
/// Nodes whose image is not finite, or that land on a finite endpoint, are
/// skipped; a zero integrand value contributes nothing regardless of the
/// Jacobian weight. A NaN from the integrand is an error.
pub fn integrate<F>(f: F, support: Interval, cfg: &QuadConfig) -> Result<QuadResult, QuadError>
where
    F: Fn(f64) -> f64,
{
    cfg.validate()?;
    if let Interval::Finite { a, b } = support {
        if !(a.is_finite() && b.is_finite()) {
            return Err(QuadError::InvalidConfig("finite interval has infinite end".into()));
        }
        if a == b {
            return Ok(QuadResult {
                value: 0.0,
                err_est: 0.0,
                levels: 0,
                evaluations: 0,
            });
        }
        if a > b {
            let r = integrate(f, Interval::Finite { a: b, b: a }, cfg)?;
            return Ok(QuadResult {
                value: -r.value,
                ..r
            });
        }
    }
    let map = select_map(support, cfg)?;
    let (lo, hi) = map.u_range();
    let endpoints = match (map, support) {
        (Map::TanhSinh { .. }, Interval::Finite { a, b }) => Some((a, b)),
        _ => None,
    };
    let floor = match map {
        Map::ExpSinh { a } => Some(a),
        Map::LogSinhSinh => Some(0.0),
        _ => None,
    };
    let mut evaluations = 0usize;

    let term = |u: f64, evaluations: &mut usize| -> Result<f64, QuadError> {
        let (x, w) = map.node(u);
        if !x.is_finite() || !w.is_finite() || w == 0.0 {
            return Ok(0.0);
        }
        if let Some((a, b)) = endpoints {
            if x <= a || x >= b {
                return Ok(0.0);
            }
        }
        if let Some(floor) = floor {
            if x <= floor {
                return Ok(0.0);
            }
        }
        *evaluations += 1;
        let fx = f(x);
        if fx.is_nan() {
            return Err(QuadError::NanIntegrand { x });
        }
        if fx == 0.0 {
            return Ok(0.0);
        }
        let t = fx * w;
        if !t.is_finite() {
            return Err(QuadError::NonFinite { x });
        }
        Ok(t)
    };

    let (mut h, trapezoid) = match map {
        Map::Trapezoid { a, b } => (b - a, true),
        _ => (1.0, false),
    };

    // signed and absolute sums; the absolute sum sets the roundoff floor for
    // integrands whose value cancels to (near) zero
    let mut add = |acc: &mut (f64, f64), u: f64| -> Result<(), QuadError> {
        let t = term(u, &mut evaluations)?;
        acc.0 += t;
        acc.1 += t.abs();
        Ok(())
    };

    let mut level0 = (0.0, 0.0);
    if trapezoid {
        add(&mut level0, lo)?;
        add(&mut level0, hi)?;
        level0 = (0.5 * level0.0, 0.5 * level0.1);
    } else {
        let n = (hi / h).floor() as i64;
        for k in -n..=n {
            add(&mut level0, k as f64 * h)?;
        }
    }
    let mut estimate = level0.0 * h;
    let mut magnitude = level0.1 * h;
    let mut err_est = f64::INFINITY;

    for level in 1..=cfg.max_levels {
        h *= 0.5;
        let mut odd = (0.0, 0.0);
        if trapezoid {
            let n = 1usize << (level - 1);
            for k in 0..n {
                add(&mut odd, lo + (2 * k + 1) as f64 * h)?;
            }
        } else {
            let n = (hi / h).floor() as i64;
            let mut k = -n;
            if k % 2 == 0 {
                k += 1;
            }
            while k <= n {
                add(&mut odd, k as f64 * h)?;
                k += 2;
            }
        }
        let next = 0.5 * estimate + odd.0 * h;
        magnitude = 0.5 * magnitude + odd.1 * h;
        let prev_err = err_est;
        err_est = (next - estimate).abs();
        estimate = next;
        let tol = cfg
            .abs_tol
            .max(cfg.rel_tol * estimate.abs())
            .max(ROUNDOFF_FLOOR * magnitude);
        // two consecutive small differences guard against coarse levels that
        // straddle a narrow peak and agree by accident
        if level + 1 >= MIN_LEVELS && err_est <= tol && prev_err <= tol {
            return Ok(QuadResult {
                value: estimate,
                err_est,
                levels: level,
                evaluations,
            });
        }
    }
    Err(QuadError::NonConvergence {
        value: estimate,
        err_est,
        levels: cfg.max_levels,
    })
}

/// `∫ x^α N(x; μ, Σ) φ_s(x) dx` in closed form for `|α| ≤ 2`.
///
/// Uses `N(x; μ, Σ)·N(x; 0, s²I) = N(μ; 0, Σ + s²I)·N(x; μ̃, Σ̃)` with
/// `Σ̃ = (Σ⁻¹ + s⁻²I)⁻¹` and `μ̃ = Σ̃ Σ⁻¹ μ`. For the unnormalized kernel the
/// result is rescaled by `(2πs²)^{d/2}`.
pub fn gaussian_product_moment(
    sigma: &nalgebra::DMatrix<f64>,
    mu: &[f64],
    s: f64,
    normalized: bool,
    alpha: &[usize],
) -> crate::Result<f64> {
    let p = GaussianProduct::new(sigma, mu, s, normalized)?;
    p.moment(alpha)
}

/// Precomputed Gaussian × Gaussian-kernel product, reused across monomials.
#[derive(Clone, Debug)]
pub struct GaussianProduct {
    pub mass: f64,
    pub mean: nalgebra::DVector<f64>,
    pub cov: nalgebra::DMatrix<f64>,
}

impl GaussianProduct {
    pub fn new(
        sigma: &nalgebra::DMatrix<f64>,
        mu: &[f64],
        s: f64,
        normalized: bool,
    ) -> crate::Result<Self> {
        use crate::Error;
        use nalgebra::{DMatrix, DVector};
        let d = sigma.nrows();
        if sigma.ncols() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: sigma.ncols(),
            });
        }
        if mu.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: mu.len(),
            });
        }
        if !(s > 0.0 && s.is_finite()) {
            return Err(Error::InvalidParameter(format!("kernel scale {s}")));
        }
        let mu = DVector::from_column_slice(mu);
        let chol = sigma
            .clone()
            .cholesky()
            .ok_or_else(|| Error::Singular("covariance is not positive definite".into()))?;
        let sigma_inv = chol.inverse();
        let s2 = s * s;
        let precision = &sigma_inv + DMatrix::identity(d, d) / s2;
        let cov = precision
            .cholesky()
            .ok_or_else(|| Error::Singular("tilted precision".into()))?
            .inverse();
        let mean = &cov * (&sigma_inv * &mu);
        // N(μ; 0, Σ + s² I)
        let total = sigma + DMatrix::identity(d, d) * s2;
        let tchol = total
            .cholesky()
            .ok_or_else(|| Error::Singular("Σ + s²I".into()))?;
        let ln_det: f64 = 2.0 * tchol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
        let quad = mu.dot(&tchol.solve(&mu));
        let mut ln_mass =
            -0.5 * (d as f64 * (2.0 * std::f64::consts::PI).ln() + ln_det + quad);
        if !normalized {
            ln_mass += 0.5 * d as f64 * (2.0 * std::f64::consts::PI * s2).ln();
        }
        Ok(Self {
            mass: ln_mass.exp(),
            mean,
            cov,
        })
    }

    /// `Z · E_{N(μ̃, Σ̃)}[x^α]` for `|α| ≤ 2`.
    pub fn moment(&self, alpha: &[usize]) -> crate::Result<f64> {
        use crate::Error;
        let d = self.mean.len();
        if alpha.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: alpha.len(),
            });
        }
        let order: usize = alpha.iter().sum();
        let idx: Vec<usize> = alpha
            .iter()
            .enumerate()
            .flat_map(|(i, &a)| std::iter::repeat_n(i, a))
            .collect();
        let e = match order {
            0 => 1.0,
            1 => self.mean[idx[0]],
            2 => {
                let (i, j) = (idx[0], idx[1]);
                self.cov[(i, j)] + self.mean[i] * self.mean[j]
            }
            _ => {
                return Err(Error::Unsupported(format!(
                    "closed-form Gaussian moments of order {order}"
                )))
            }
        };
        Ok(self.mass * e)
    }
}
