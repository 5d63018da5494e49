//! Parametric families used throughout the diagnostics.
//!
//! Each family exposes a density, its support, an analytic score
//! `∂_θ log f`, and, where they exist, classical moments in closed form.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::{Interval, Transform};

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSpec {
    /// `N(μ, σ₀²)` with known `σ₀`; `θ = (μ)`.
    GaussianLocation {
        #[serde(default = "one")]
        sigma0: f64,
    },
    /// Standard Cauchy shifted by `μ`; `θ = (μ)`.
    CauchyLocation,
    /// `exp(μ + σZ)`; `θ = (μ, σ)`.
    Lognormal,
    /// Log-normal density times `1 + ε sin(2π ln x)`; `θ = (μ, σ)`.
    LognormalStieltjes {
        #[serde(default = "half")]
        eps: f64,
    },
    /// Zero-mean Gaussian on `R^d` parameterised by the free entries of the
    /// precision matrix: the diagonal first, then one entry per edge.
    GaussianMvn { dim: usize, edges: Vec<[usize; 2]> },
    /// `N(μ, σ²)` with `θ = (μ, σ)`; the Stein target family.
    SteinGaussianTarget,
}

fn one() -> f64 {
    1.0
}

fn half() -> f64 {
    0.5
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Support {
    Real,
    Positive,
    RealD(usize),
}

impl Support {
    pub fn interval(&self) -> Option<Interval> {
        match self {
            Support::Real => Some(Interval::Real),
            Support::Positive => Some(Interval::Positive),
            Support::RealD(_) => None,
        }
    }
}

/// A classical moment, or the marker that it does not exist.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ClassicalMoment {
    Value(f64),
    Undefined,
}

impl ClassicalMoment {
    pub fn value(&self) -> Option<f64> {
        match self {
            ClassicalMoment::Value(v) => Some(*v),
            ClassicalMoment::Undefined => None,
        }
    }

    pub fn is_defined(&self) -> bool {
        matches!(self, ClassicalMoment::Value(_))
    }
}

impl Serialize for ClassicalMoment {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            ClassicalMoment::Value(v) => s.serialize_f64(*v),
            ClassicalMoment::Undefined => s.serialize_str("undefined"),
        }
    }
}

impl ModelSpec {
    pub fn four_cycle() -> Self {
        ModelSpec::GaussianMvn {
            dim: 4,
            edges: vec![[0, 1], [1, 2], [2, 3], [0, 3]],
        }
    }

    pub fn four_path() -> Self {
        ModelSpec::GaussianMvn {
            dim: 4,
            edges: vec![[0, 1], [1, 2], [2, 3]],
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ModelSpec::GaussianLocation { .. } => "gaussian_location",
            ModelSpec::CauchyLocation => "cauchy_location",
            ModelSpec::Lognormal => "lognormal",
            ModelSpec::LognormalStieltjes { .. } => "lognormal_stieltjes",
            ModelSpec::GaussianMvn { .. } => "gaussian_mvn",
            ModelSpec::SteinGaussianTarget => "stein_gaussian_target",
        }
    }

    /// Checks the family's own constants (not `θ`).
    pub fn validate(&self) -> Result<()> {
        match self {
            ModelSpec::GaussianLocation { sigma0 } if !(*sigma0 > 0.0 && sigma0.is_finite()) => {
                Err(Error::InvalidParameter(format!("sigma0 must be positive, got {sigma0}")))
            }
            ModelSpec::LognormalStieltjes { eps } if !(eps.abs() <= 1.0) => Err(
                Error::InvalidParameter(format!("Stieltjes weight must satisfy |eps| <= 1, got {eps}")),
            ),
            ModelSpec::GaussianMvn { dim, edges } => {
                if *dim == 0 {
                    return Err(Error::InvalidParameter("mvn dimension must be >= 1".into()));
                }
                let mut seen = Vec::new();
                for &[i, j] in edges {
                    if i >= *dim || j >= *dim || i == j {
                        return Err(Error::InvalidParameter(format!("invalid edge ({i}, {j})")));
                    }
                    let key = (i.min(j), i.max(j));
                    if seen.contains(&key) {
                        return Err(Error::InvalidParameter(format!("duplicate edge ({i}, {j})")));
                    }
                    seen.push(key);
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    pub fn param_dim(&self) -> usize {
        match self {
            ModelSpec::GaussianLocation { .. } | ModelSpec::CauchyLocation => 1,
            ModelSpec::Lognormal
            | ModelSpec::LognormalStieltjes { .. }
            | ModelSpec::SteinGaussianTarget => 2,
            ModelSpec::GaussianMvn { dim, edges } => dim + edges.len(),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            ModelSpec::GaussianMvn { dim, .. } => *dim,
            _ => 1,
        }
    }

    pub fn support(&self) -> Support {
        match self {
            ModelSpec::Lognormal | ModelSpec::LognormalStieltjes { .. } => Support::Positive,
            ModelSpec::GaussianMvn { dim, .. } => Support::RealD(*dim),
            _ => Support::Real,
        }
    }

    pub fn has_analytic_score(&self) -> bool {
        true
    }

    /// The quadrature substitution suited to the support.
    pub fn preferred_transform(&self) -> Transform {
        match self.support() {
            Support::Positive => Transform::LogSubstitution,
            _ => Transform::DoubleExponential,
        }
    }

    pub fn check_theta(&self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.param_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.param_dim(),
                got: theta.len(),
            });
        }
        let out = || Error::ParameterOutOfDomain {
            family: self.name(),
            theta: theta.to_vec(),
        };
        if theta.iter().any(|v| !v.is_finite()) {
            return Err(out());
        }
        match self {
            ModelSpec::Lognormal | ModelSpec::LognormalStieltjes { .. } | ModelSpec::SteinGaussianTarget
                if theta[1] <= 0.0 =>
            {
                Err(out())
            }
            ModelSpec::GaussianMvn { .. } => {
                let omega = self.precision(theta)?;
                if omega.cholesky().is_none() {
                    return Err(out());
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    /// Precision matrix `Ω` assembled from the free entries.
    pub fn precision(&self, theta: &[f64]) -> Result<DMatrix<f64>> {
        let ModelSpec::GaussianMvn { dim, edges } = self else {
            return Err(Error::Unsupported(format!("precision matrix for {}", self.name())));
        };
        if theta.len() != self.param_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.param_dim(),
                got: theta.len(),
            });
        }
        let mut omega = DMatrix::zeros(*dim, *dim);
        for i in 0..*dim {
            omega[(i, i)] = theta[i];
        }
        for (e, &[i, j]) in edges.iter().enumerate() {
            omega[(i, j)] = theta[dim + e];
            omega[(j, i)] = theta[dim + e];
        }
        Ok(omega)
    }

    /// `Σ = Ω⁻¹`.
    pub fn covariance(&self, theta: &[f64]) -> Result<DMatrix<f64>> {
        let omega = self.precision(theta)?;
        omega
            .cholesky()
            .map(|c| c.inverse())
            .ok_or_else(|| Error::ParameterOutOfDomain {
                family: self.name(),
                theta: theta.to_vec(),
            })
    }

    fn check_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        if self.support() == Support::Positive && !(x[0] > 0.0) {
            return Err(Error::OutsideSupport {
                family: self.name(),
                x: x[0],
            });
        }
        Ok(())
    }

    pub fn density(&self, x: &[f64], theta: &[f64]) -> Result<f64> {
        self.check_theta(theta)?;
        self.check_point(x)?;
        if let ModelSpec::GaussianMvn { .. } = self {
            let omega = self.precision(theta)?;
            let chol = omega.clone().cholesky().expect("checked");
            let ln_det_omega: f64 = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
            let xv = DVector::from_column_slice(x);
            let q = xv.dot(&(&omega * &xv));
            let d = x.len() as f64;
            return Ok((0.5 * ln_det_omega - 0.5 * q - d * LN_SQRT_2PI).exp());
        }
        Ok(self.ln_density1_raw(x[0], theta).exp())
    }

    /// `ln f(x; θ)` for one-dimensional families. `θ` must already be checked;
    /// points outside the support give `-∞`.
    pub(crate) fn ln_density1_raw(&self, x: f64, theta: &[f64]) -> f64 {
        match self {
            ModelSpec::GaussianLocation { sigma0 } => {
                let z = (x - theta[0]) / sigma0;
                -0.5 * z * z - sigma0.ln() - LN_SQRT_2PI
            }
            ModelSpec::SteinGaussianTarget => {
                let z = (x - theta[0]) / theta[1];
                -0.5 * z * z - theta[1].ln() - LN_SQRT_2PI
            }
            ModelSpec::CauchyLocation => {
                let d = x - theta[0];
                -(PI * (1.0 + d * d)).ln()
            }
            ModelSpec::Lognormal => lognormal_ln_pdf(x, theta[0], theta[1]),
            ModelSpec::LognormalStieltjes { eps } => {
                if x <= 0.0 {
                    return f64::NEG_INFINITY;
                }
                lognormal_ln_pdf(x, theta[0], theta[1]) + (1.0 + eps * stieltjes(x)).ln()
            }
            ModelSpec::GaussianMvn { .. } => f64::NAN,
        }
    }

    #[cfg(test)]
    pub(crate) fn density1_raw(&self, x: f64, theta: &[f64]) -> f64 {
        self.ln_density1_raw(x, theta).exp()
    }

    /// `∂_{θ_a} log f(x; θ)` for one-dimensional families, unchecked.
    pub(crate) fn score1_raw(&self, x: f64, theta: &[f64], a: usize) -> f64 {
        match self {
            ModelSpec::GaussianLocation { sigma0 } => (x - theta[0]) / (sigma0 * sigma0),
            ModelSpec::CauchyLocation => {
                let d = x - theta[0];
                2.0 * d / (1.0 + d * d)
            }
            ModelSpec::SteinGaussianTarget => {
                let (mu, sigma) = (theta[0], theta[1]);
                let d = x - mu;
                if a == 0 {
                    d / (sigma * sigma)
                } else {
                    d * d / (sigma * sigma * sigma) - 1.0 / sigma
                }
            }
            // the Stieltjes factor does not depend on θ
            ModelSpec::Lognormal | ModelSpec::LognormalStieltjes { .. } => {
                let (mu, sigma) = (theta[0], theta[1]);
                let l = x.ln() - mu;
                if a == 0 {
                    l / (sigma * sigma)
                } else {
                    l * l / (sigma * sigma * sigma) - 1.0 / sigma
                }
            }
            ModelSpec::GaussianMvn { .. } => f64::NAN,
        }
    }

    pub fn score(&self, x: &[f64], theta: &[f64], a: usize) -> Result<f64> {
        self.check_theta(theta)?;
        self.check_point(x)?;
        if a >= self.param_dim() {
            return Err(Error::IndexOutOfRange {
                index: a,
                dim: self.param_dim(),
            });
        }
        if let ModelSpec::GaussianMvn { dim, edges } = self {
            let sigma = self.covariance(theta)?;
            return Ok(if a < *dim {
                0.5 * sigma[(a, a)] - 0.5 * x[a] * x[a]
            } else {
                let [i, j] = edges[a - dim];
                sigma[(i, j)] - x[i] * x[j]
            });
        }
        Ok(self.score1_raw(x[0], theta, a))
    }

    /// Classical moment `E[X^j]`, or `Undefined` when it does not exist.
    pub fn classical_moment(&self, theta: &[f64], j: u32) -> Result<ClassicalMoment> {
        self.check_theta(theta)?;
        match self {
            ModelSpec::GaussianLocation { sigma0 } => {
                Ok(ClassicalMoment::Value(gaussian_raw_moment(theta[0], *sigma0, j)))
            }
            ModelSpec::SteinGaussianTarget => {
                Ok(ClassicalMoment::Value(gaussian_raw_moment(theta[0], theta[1], j)))
            }
            // ∫ x^j sin(2π ln x) f dx ∝ sin(2πj) = 0, so the perturbation is invisible
            ModelSpec::Lognormal | ModelSpec::LognormalStieltjes { .. } => {
                let (mu, sigma) = (theta[0], theta[1]);
                let jf = j as f64;
                Ok(ClassicalMoment::Value((jf * mu + 0.5 * jf * jf * sigma * sigma).exp()))
            }
            ModelSpec::CauchyLocation => Ok(if j == 0 {
                ClassicalMoment::Value(1.0)
            } else {
                ClassicalMoment::Undefined
            }),
            ModelSpec::GaussianMvn { .. } => Err(Error::Unsupported(
                "scalar classical moments for the multivariate family".into(),
            )),
        }
    }
}

fn lognormal_ln_pdf(x: f64, mu: f64, sigma: f64) -> f64 {
    if x <= 0.0 {
        return f64::NEG_INFINITY;
    }
    let lx = x.ln();
    let z = (lx - mu) / sigma;
    -0.5 * z * z - lx - sigma.ln() - LN_SQRT_2PI
}

/// The Stieltjes perturbation `sin(2π ln x)`.
pub fn stieltjes(x: f64) -> f64 {
    (2.0 * PI * x.ln()).sin()
}

/// `E[(μ + σZ)^j]`.
pub fn gaussian_raw_moment(mu: f64, sigma: f64, j: u32) -> f64 {
    let mut total = 0.0;
    let mut binom = 1.0_f64;
    let mut double_fact = 1.0_f64; // (k-1)!! for even k
    for k in 0..=j {
        if k > 0 {
            binom *= (j - k + 1) as f64 / k as f64;
        }
        if k % 2 == 0 {
            if k >= 2 {
                double_fact *= (k - 1) as f64;
            }
            total += binom * mu.powi((j - k) as i32) * sigma.powi(k as i32) * double_fact;
        }
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::{integrate, QuadConfig};
    use approx::assert_relative_eq;

    fn quad_cfg(m: &ModelSpec) -> QuadConfig {
        QuadConfig::default().with_transform(m.preferred_transform())
    }

    fn integral(m: &ModelSpec, theta: &[f64], g: impl Fn(f64) -> f64) -> f64 {
        let support = m.support().interval().unwrap();
        integrate(
            |x| {
                let f = m.density1_raw(x, theta);
                if f == 0.0 {
                    0.0
                } else {
                    g(x) * f
                }
            },
            support,
            &quad_cfg(m),
        )
        .unwrap()
        .value
    }

    #[test]
    fn density_examples() {
        let inv_sqrt_2pi = (2.0 * PI).powf(-0.5);
        assert_relative_eq!(
            ModelSpec::CauchyLocation.density(&[0.0], &[0.0]).unwrap(),
            1.0 / PI,
            epsilon = 1e-15
        );
        assert_relative_eq!(
            ModelSpec::Lognormal.density(&[1.0], &[0.0, 1.0]).unwrap(),
            inv_sqrt_2pi,
            epsilon = 1e-15
        );
        assert_relative_eq!(
            ModelSpec::LognormalStieltjes { eps: 1.0 }
                .density(&[1.0], &[0.0, 1.0])
                .unwrap(),
            inv_sqrt_2pi,
            epsilon = 1e-15
        );
    }

    #[test]
    fn density_errors() {
        assert!(matches!(
            ModelSpec::Lognormal.density(&[1.0], &[0.0, 0.0]),
            Err(Error::ParameterOutOfDomain { .. })
        ));
        assert!(matches!(
            ModelSpec::Lognormal.density(&[-1.0], &[0.0, 1.0]),
            Err(Error::OutsideSupport { .. })
        ));
        assert!(ModelSpec::Lognormal.density(&[0.0], &[0.0, 1.0]).is_err());
        assert!(ModelSpec::CauchyLocation.density(&[0.0], &[0.0, 1.0]).is_err());
        assert!(ModelSpec::LognormalStieltjes { eps: 1.5 }.validate().is_err());
        assert!(ModelSpec::GaussianLocation { sigma0: 0.0 }.validate().is_err());
    }

    #[test]
    fn score_examples() {
        let e = std::f64::consts::E;
        assert_relative_eq!(
            ModelSpec::Lognormal.score(&[e], &[0.0, 1.0], 0).unwrap(),
            1.0,
            epsilon = 1e-15
        );
        assert!(ModelSpec::Lognormal.score(&[e], &[0.0, 1.0], 1).unwrap().abs() < 1e-15);
        assert_relative_eq!(
            ModelSpec::CauchyLocation.score(&[1.0], &[0.0], 0).unwrap(),
            1.0,
            epsilon = 1e-15
        );
        assert!(matches!(
            ModelSpec::CauchyLocation.score(&[1.0], &[0.0], 1),
            Err(Error::IndexOutOfRange { .. })
        ));
        assert!(ModelSpec::Lognormal.score(&[-1.0], &[0.0, 1.0], 0).is_err());
    }

    fn one_d_cases() -> Vec<(ModelSpec, Vec<Vec<f64>>)> {
        vec![
            (
                ModelSpec::GaussianLocation { sigma0: 1.0 },
                vec![vec![-2.0], vec![0.0], vec![3.5]],
            ),
            (
                ModelSpec::GaussianLocation { sigma0: 0.4 },
                vec![vec![1.0]],
            ),
            (ModelSpec::CauchyLocation, vec![vec![-3.0], vec![0.0], vec![2.0]]),
            (
                ModelSpec::Lognormal,
                vec![vec![0.0, 1.0], vec![-1.0, 0.5], vec![1.0, 2.0]],
            ),
            (
                ModelSpec::LognormalStieltjes { eps: 0.5 },
                vec![vec![0.0, 1.0], vec![-1.0, 0.5], vec![1.0, 2.0]],
            ),
            (
                ModelSpec::LognormalStieltjes { eps: 1.0 },
                vec![vec![0.0, 1.0]],
            ),
            (
                ModelSpec::SteinGaussianTarget,
                vec![vec![0.0, 1.0], vec![2.0, 0.3]],
            ),
        ]
    }

    #[test]
    fn densities_integrate_to_one() {
        for (m, thetas) in one_d_cases() {
            for theta in thetas {
                let total = integral(&m, &theta, |_| 1.0);
                // Cauchy tails decay like 1/x², so the rule converges more slowly
                assert!((total - 1.0).abs() < 1e-9, "{} {:?}: {}", m.name(), theta, total);
            }
        }
    }

    #[test]
    fn scores_match_finite_differences_of_log_density() {
        let xs = [0.3, 0.9, 1.7, 4.0];
        for (m, thetas) in one_d_cases() {
            for theta in thetas {
                for a in 0..m.param_dim() {
                    for &x in &xs {
                        let h = 1e-6 * theta[a].abs().max(1.0);
                        let mut tp = theta.clone();
                        let mut tm = theta.clone();
                        tp[a] += h;
                        tm[a] -= h;
                        let fd = (m.ln_density1_raw(x, &tp) - m.ln_density1_raw(x, &tm)) / (2.0 * h);
                        let an = m.score(&[x], &theta, a).unwrap();
                        assert!((fd - an).abs() < 1e-6 * an.abs().max(1.0), "{} a={a} x={x}", m.name());
                    }
                }
            }
        }
    }

    #[test]
    fn classical_moment_examples() {
        let m = ModelSpec::Lognormal;
        let v = m.classical_moment(&[0.0, 1.0], 2).unwrap().value().unwrap();
        assert_relative_eq!(v, 2f64.exp(), max_relative = 1e-15);
        let q = integral(&m, &[0.0, 1.0], |x| x * x);
        assert_relative_eq!(q, v, max_relative = 1e-10);

        let p = ModelSpec::LognormalStieltjes { eps: 1.0 };
        let v3 = p.classical_moment(&[0.0, 1.0], 3).unwrap().value().unwrap();
        assert_relative_eq!(v3, 4.5f64.exp(), max_relative = 1e-15);
        let pert = integral(&ModelSpec::Lognormal, &[0.0, 1.0], |x| x.powi(3) * stieltjes(x));
        assert!(pert.abs() < 1e-8, "{pert}");

        assert_eq!(
            ModelSpec::CauchyLocation.classical_moment(&[0.0], 1).unwrap(),
            ClassicalMoment::Undefined
        );
    }

    #[test]
    fn stieltjes_cancellation_against_all_low_orders() {
        for j in 0..=10i32 {
            let scale = ((j * j) as f64 / 2.0).exp();
            let pert = integral(&ModelSpec::Lognormal, &[0.0, 1.0], |x| x.powi(j) * stieltjes(x));
            assert!((pert / scale).abs() < 1e-8, "j={j}: {pert}");
        }
    }

    #[test]
    fn gaussian_moments_match_quadrature() {
        let m = ModelSpec::GaussianLocation { sigma0: 0.7 };
        for j in 0..=8u32 {
            let closed = m.classical_moment(&[1.3], j).unwrap().value().unwrap();
            let q = integral(&m, &[1.3], |x| x.powi(j as i32));
            assert_relative_eq!(closed, q, max_relative = 1e-10, epsilon = 1e-12);
        }
    }

    #[test]
    fn four_cycle_precision_has_structural_zeros() {
        let m = ModelSpec::four_cycle();
        m.validate().unwrap();
        let theta = [2.0, 2.0, 2.0, 2.0, 0.5, -0.4, 0.3, 0.6];
        m.check_theta(&theta).unwrap();
        let omega = m.precision(&theta).unwrap();
        assert_eq!(omega[(0, 2)], 0.0);
        assert_eq!(omega[(2, 0)], 0.0);
        assert_eq!(omega[(1, 3)], 0.0);
        assert_eq!(omega[(3, 1)], 0.0);
        assert_eq!(omega, omega.transpose());
        assert_eq!(m.param_dim(), 8);
    }

    #[test]
    fn mvn_requires_positive_definite_precision() {
        let m = ModelSpec::four_cycle();
        let theta = [1.0, 1.0, 1.0, 1.0, 0.9, 0.9, 0.9, 0.9];
        assert!(matches!(m.check_theta(&theta), Err(Error::ParameterOutOfDomain { .. })));
        let bad = ModelSpec::GaussianMvn {
            dim: 3,
            edges: vec![[0, 1], [1, 0]],
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn mvn_score_matches_finite_difference() {
        let m = ModelSpec::four_cycle();
        let theta = vec![2.0, 1.5, 2.5, 1.8, 0.5, -0.4, 0.3, 0.6];
        let x = [0.3, -0.7, 1.1, 0.2];
        for a in 0..m.param_dim() {
            let h = 1e-6;
            let mut tp = theta.clone();
            let mut tm = theta.clone();
            tp[a] += h;
            tm[a] -= h;
            let fd = (m.density(&x, &tp).unwrap().ln() - m.density(&x, &tm).unwrap().ln()) / (2.0 * h);
            let an = m.score(&x, &theta, a).unwrap();
            assert!((fd - an).abs() < 1e-7, "a={a}: {fd} vs {an}");
        }
    }
}
