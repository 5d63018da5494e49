//! Weak Stein features for a Gaussian target `N(μ, σ²)`.
//!
//! With `A g = g' − ((x − μ)/σ²) g` and `g = f_k φ`, the feature is
//! `Ψ_k = E_cand[A(f_k φ)(X)]`, which vanishes when the candidate equals the
//! target. The Jacobian is taken in the candidate parameters and the kernel
//! scale, with central differences applied to the integrand.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::featuremap::{fd_step, JacobianDecomposition, JacobianMethod};
use crate::kernel::KernelFamily;
use crate::model::ModelSpec;
use crate::quadrature::{integrate, Interval, QuadConfig};
use crate::transversality::{numerical_rank, RankReport};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Dictionary {
    /// `He_k((x − μ)/σ)` for `k = 1..=degree`.
    Hermite { degree: usize },
    /// Polynomials in `x`, coefficients in increasing degree.
    Polynomials { coefficients: Vec<Vec<f64>> },
}

impl Dictionary {
    pub fn len(&self) -> usize {
        match self {
            Dictionary::Hermite { degree } => *degree,
            Dictionary::Polynomials { coefficients } => coefficients.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// `(He_n(z), He_{n−1}(z))`.
fn hermite_pair(n: usize, z: f64) -> (f64, f64) {
    let (mut prev, mut cur) = (0.0, 1.0);
    for k in 0..n {
        let next = z * cur - k as f64 * prev;
        prev = cur;
        cur = next;
    }
    (cur, prev)
}

fn poly_and_derivative(c: &[f64], x: f64) -> (f64, f64) {
    let mut p = 0.0;
    let mut dp = 0.0;
    for &a in c.iter().rev() {
        dp = dp * x + p;
        p = p * x + a;
    }
    (p, dp)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SteinSpec {
    /// `(μ, σ)` of the Gaussian target.
    pub target: Vec<f64>,
    pub dictionary: Dictionary,
    pub kernel: KernelFamily,
    #[serde(default)]
    pub quad: QuadConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SteinJacobianPoint {
    pub theta: Vec<f64>,
    pub report: RankReport,
    pub surjective: bool,
    pub jacobian: JacobianDecomposition,
}

impl SteinSpec {
    pub fn new(target: Vec<f64>, dictionary: Dictionary, kernel: KernelFamily, quad: QuadConfig) -> Result<Self> {
        let s = Self {
            target,
            dictionary,
            kernel,
            quad,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        ModelSpec::SteinGaussianTarget.check_theta(&self.target)?;
        self.kernel.validate()?;
        self.quad.validate()?;
        if self.kernel.dim != 1 {
            return Err(Error::DimensionMismatch {
                expected: 1,
                got: self.kernel.dim,
            });
        }
        if self.dictionary.is_empty() {
            return Err(Error::InvalidParameter("empty Stein dictionary".into()));
        }
        if let Dictionary::Polynomials { coefficients } = &self.dictionary {
            if coefficients.iter().flatten().any(|c| !c.is_finite()) {
                return Err(Error::InvalidParameter("non-finite dictionary coefficient".into()));
            }
        }
        Ok(())
    }

    pub fn with_target(&self, target: &[f64]) -> Result<Self> {
        Self::new(target.to_vec(), self.dictionary.clone(), self.kernel.clone(), self.quad)
    }

    fn test_fn(&self, k: usize, x: f64) -> (f64, f64) {
        match &self.dictionary {
            Dictionary::Hermite { .. } => {
                let (mu, sigma) = (self.target[0], self.target[1]);
                let n = k + 1;
                let (h, h_prev) = hermite_pair(n, (x - mu) / sigma);
                (h, n as f64 * h_prev / sigma)
            }
            Dictionary::Polynomials { coefficients } => poly_and_derivative(&coefficients[k], x),
        }
    }

    /// `A(f_k φ)(x) / φ(x)`.
    fn operator_over_kernel(&self, k: usize, kernel: &KernelFamily, x: f64) -> f64 {
        let (mu, sigma) = (self.target[0], self.target[1]);
        let (f, df) = self.test_fn(k, x);
        let s2 = kernel.s * kernel.s;
        df - f * x / s2 - (x - mu) / (sigma * sigma) * f
    }

    fn check_index(&self, k: usize) -> Result<()> {
        if k >= self.dictionary.len() {
            return Err(Error::IndexOutOfRange {
                index: k,
                dim: self.dictionary.len(),
            });
        }
        Ok(())
    }

    fn support(candidate: &ModelSpec) -> Result<Interval> {
        candidate
            .support()
            .interval()
            .ok_or_else(|| Error::Unsupported("Stein features for multivariate candidates".into()))
    }

    /// `E_cand[A(f_k φ)(X)]` for dictionary entry `k` (zero-based).
    pub fn stein_feature(&self, candidate: &ModelSpec, theta_c: &[f64], k: usize) -> Result<f64> {
        self.check_index(k)?;
        candidate.validate()?;
        candidate.check_theta(theta_c)?;
        let support = Self::support(candidate)?;
        let kernel = &self.kernel;
        let integrand = |x: f64| {
            let lw = candidate.ln_density1_raw(x, theta_c) + kernel.ln_eval_r2(x * x);
            if lw == f64::NEG_INFINITY {
                return 0.0;
            }
            let w = lw.exp();
            if w == 0.0 {
                return 0.0;
            }
            self.operator_over_kernel(k, kernel, x) * w
        };
        let cfg = self.quad.with_transform(candidate.preferred_transform());
        Ok(integrate(integrand, support, &cfg)?.value)
    }

    pub fn stein_features(&self, candidate: &ModelSpec, theta_c: &[f64]) -> Result<Vec<f64>> {
        (0..self.dictionary.len())
            .map(|k| self.stein_feature(candidate, theta_c, k))
            .collect()
    }

    pub fn weak_stein_discrepancy(&self, candidate: &ModelSpec, theta_c: &[f64]) -> Result<f64> {
        Ok(self
            .stein_features(candidate, theta_c)?
            .into_iter()
            .fold(0.0, |a, v| a.max(v.abs())))
    }

    /// Jacobian of `(θ_c, s) ↦ Ψ` for a Gaussian candidate, differencing
    /// the candidate density and the kernel inside the integrand.
    pub fn stein_jacobian(&self, theta_c: &[f64]) -> Result<JacobianDecomposition> {
        let model = ModelSpec::SteinGaussianTarget;
        model.check_theta(theta_c)?;
        let n = self.dictionary.len();
        let cfg = self.quad.with_transform(model.preferred_transform());
        let kernel = &self.kernel;
        let mut d_theta = DMatrix::zeros(n, 2);
        for a in 0..2 {
            let h = fd_step(theta_c[a]);
            let mut tp = theta_c.to_vec();
            let mut tm = theta_c.to_vec();
            tp[a] += h;
            tm[a] -= h;
            model
                .check_theta(&tm)
                .map_err(|_| Error::StepFailure(format!("θ[{a}] − {h:e} leaves the domain")))?;
            for k in 0..n {
                let integrand = |x: f64| {
                    let df = (model.ln_density1_raw(x, &tp).exp() - model.ln_density1_raw(x, &tm).exp()) / (2.0 * h);
                    let w = kernel.eval1(x) * df;
                    if w == 0.0 {
                        return 0.0;
                    }
                    self.operator_over_kernel(k, kernel, x) * w
                };
                d_theta[(k, a)] = integrate(integrand, Interval::Real, &cfg)?.value;
            }
        }
        let h = fd_step(kernel.s);
        let kp = kernel.with_scale(kernel.s + h).map_err(|e| Error::StepFailure(e.to_string()))?;
        let km = kernel.with_scale(kernel.s - h).map_err(|e| Error::StepFailure(e.to_string()))?;
        let mut d_lambda = DMatrix::zeros(n, 1);
        for k in 0..n {
            let integrand = |x: f64| {
                let f = model.ln_density1_raw(x, theta_c).exp();
                let (wp, wm) = (kp.eval1(x) * f, km.eval1(x) * f);
                if wp == 0.0 && wm == 0.0 {
                    return 0.0;
                }
                let plus = self.operator_over_kernel(k, &kp, x) * wp;
                let minus = self.operator_over_kernel(k, &km, x) * wm;
                (plus - minus) / (2.0 * h)
            };
            d_lambda[(k, 0)] = integrate(integrand, Interval::Real, &cfg)?.value;
        }
        JacobianDecomposition::new(d_theta, d_lambda, JacobianMethod::FiniteDifference)
    }

    /// Surjectivity of the Stein Jacobian at zero-set points, where the
    /// candidate equals the target `θ`. Whether the dictionary is
    /// measure-determining is not checked.
    pub fn stein_jacobian_check(&self, zero_set: &[Vec<f64>], rank_rtol: f64) -> Result<Vec<SteinJacobianPoint>> {
        zero_set
            .iter()
            .map(|theta| {
                let spec = self.with_target(theta)?;
                let jacobian = spec.stein_jacobian(theta)?;
                let report = numerical_rank(&jacobian.joint(), rank_rtol)?;
                Ok(SteinJacobianPoint {
                    theta: theta.clone(),
                    surjective: report.numerical_rank == self.dictionary.len(),
                    report,
                    jacobian,
                })
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(target: [f64; 2], dictionary: Dictionary) -> SteinSpec {
        SteinSpec::new(target.to_vec(), dictionary, KernelFamily::normalized(1.0).unwrap(), QuadConfig::default()).unwrap()
    }

    const GAUSS: ModelSpec = ModelSpec::SteinGaussianTarget;

    #[test]
    fn hermite_values() {
        // He_3(z) = z³ − 3z, He_4(z) = z⁴ − 6z² + 3
        let z = 1.7;
        assert!((hermite_pair(3, z).0 - (z * z * z - 3.0 * z)).abs() < 1e-12);
        assert!((hermite_pair(4, z).0 - (z.powi(4) - 6.0 * z * z + 3.0)).abs() < 1e-12);
        assert_eq!(hermite_pair(4, z).1, hermite_pair(3, z).0);
    }

    #[test]
    fn target_is_in_the_zero_set() {
        for degree in 1..=4 {
            for target in [[0.0, 1.0], [1.5, 0.7], [-2.0, 2.0]] {
                let s = spec(target, Dictionary::Hermite { degree });
                for v in s.stein_features(&GAUSS, &target).unwrap() {
                    assert!(v.abs() < 1e-8, "degree {degree} target {target:?}: {v}");
                }
            }
        }
    }

    #[test]
    fn mean_shift_is_detected() {
        let s = spec(
            [0.0, 1.0],
            Dictionary::Polynomials {
                coefficients: vec![vec![0.0, 1.0]],
            },
        );
        assert!(s.stein_feature(&GAUSS, &[1.0, 1.0], 0).unwrap().abs() > 1e-3);
        let h = spec([0.0, 1.0], Dictionary::Hermite { degree: 4 });
        assert!(h.weak_stein_discrepancy(&GAUSS, &[1.0, 1.0]).unwrap() > 1e-3);
    }

    #[test]
    fn zero_test_function_gives_zero() {
        let s = spec(
            [0.0, 1.0],
            Dictionary::Polynomials {
                coefficients: vec![vec![0.0]],
            },
        );
        assert_eq!(s.stein_feature(&GAUSS, &[2.0, 0.5], 0).unwrap(), 0.0);
        assert!(s.stein_feature(&GAUSS, &[2.0, 0.5], 1).is_err());
    }

    #[test]
    fn discrepancy_bounds_and_cauchy() {
        let s = spec([0.0, 1.0], Dictionary::Hermite { degree: 3 });
        let feats = s.stein_features(&ModelSpec::CauchyLocation, &[0.0]).unwrap();
        let d = s.weak_stein_discrepancy(&ModelSpec::CauchyLocation, &[0.0]).unwrap();
        assert!(d > 0.0);
        assert!(feats.iter().all(|v| d >= v.abs()));
    }

    #[test]
    fn discrepancy_vanishes_only_at_target() {
        let s = spec([0.5, 1.2], Dictionary::Hermite { degree: 3 });
        for i in 0..=4 {
            for k in 0..=4 {
                let c = [0.5 + 0.25 * (i as f64 - 2.0), 1.2 + 0.2 * (k as f64 - 2.0)];
                let d = s.weak_stein_discrepancy(&GAUSS, &c).unwrap();
                assert!(d >= 0.0);
                if i == 2 && k == 2 {
                    assert!(d < 1e-8);
                } else {
                    assert!(d > 1e-4, "{c:?}: {d}");
                }
            }
        }
    }

    #[test]
    fn jacobian_matches_outer_differences() {
        let s = spec([0.3, 1.1], Dictionary::Hermite { degree: 2 });
        let theta = [0.6, 0.9];
        let j = s.stein_jacobian(&theta).unwrap();
        for a in 0..2 {
            let h = 1e-5;
            let mut tp = theta;
            let mut tm = theta;
            tp[a] += h;
            tm[a] -= h;
            let fp = s.stein_features(&GAUSS, &tp).unwrap();
            let fm = s.stein_features(&GAUSS, &tm).unwrap();
            for k in 0..2 {
                assert!((j.d_theta[(k, a)] - (fp[k] - fm[k]) / (2.0 * h)).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn surjectivity_on_zero_set() {
        let zero_set = vec![vec![0.0, 1.0], vec![1.0, 0.5], vec![-1.0, 2.0], vec![0.5, 1.5], vec![2.0, 1.0]];
        for degree in 1..=3 {
            let s = spec([0.0, 1.0], Dictionary::Hermite { degree });
            let pts = s.stein_jacobian_check(&zero_set, 1e-10).unwrap();
            assert_eq!(pts.len(), 5);
            for p in &pts {
                assert!(!p.report.marginal, "K={degree} {:?}: {:?}", p.theta, p.report.singular_values);
                assert_eq!(p.surjective, degree <= 2, "K={degree} {:?}", p.theta);
            }
        }
        let s = spec([0.0, 1.0], Dictionary::Hermite { degree: 4 });
        assert!(s.stein_jacobian_check(&zero_set[..1], 1e-10).unwrap().iter().all(|p| !p.surjective));
    }

    #[test]
    fn duplicated_test_functions_are_rank_deficient() {
        let s = spec(
            [0.0, 1.0],
            Dictionary::Polynomials {
                coefficients: vec![vec![0.0, 1.0], vec![0.0, 1.0]],
            },
        );
        let p = &s.stein_jacobian_check(&[vec![0.0, 1.0]], 1e-10).unwrap()[0];
        assert!(!p.surjective);
        assert_eq!(p.report.numerical_rank, 1);
    }

    #[test]
    fn validation() {
        let k = KernelFamily::normalized(1.0).unwrap();
        assert!(SteinSpec::new(vec![0.0, -1.0], Dictionary::Hermite { degree: 2 }, k.clone(), QuadConfig::default()).is_err());
        assert!(SteinSpec::new(vec![0.0, 1.0], Dictionary::Hermite { degree: 0 }, k, QuadConfig::default()).is_err());
    }
}
