//! Positive Gaussian kernel families `φ_s` with analytic scale derivatives.
//!
//! The kernel is a weight `φ_s(x) = c_s · exp(-|x|²/(2s²))` on `R^d`, where
//! `c_s = (2πs²)^{-d/2}` when the kernel is normalized and `1` otherwise.
//! The scale `s` is the single deformation parameter (`q = 1`).

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelKind {
    Gaussian,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelFamily {
    pub kind: KernelKind,
    pub s: f64,
    #[serde(default = "default_dim")]
    pub dim: usize,
    #[serde(default)]
    pub normalized: bool,
}

fn default_dim() -> usize {
    1
}

impl KernelFamily {
    pub fn gaussian(s: f64, dim: usize, normalized: bool) -> Result<Self> {
        let k = Self {
            kind: KernelKind::Gaussian,
            s,
            dim,
            normalized,
        };
        k.validate()?;
        Ok(k)
    }

    /// Unnormalized one-dimensional Gaussian kernel `exp(-x²/(2s²))`.
    pub fn unnormalized(s: f64) -> Result<Self> {
        Self::gaussian(s, 1, false)
    }

    /// One-dimensional Gaussian probability density `N(0, s²)`.
    pub fn normalized(s: f64) -> Result<Self> {
        Self::gaussian(s, 1, true)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.s.is_finite() && self.s > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "kernel scale must be positive and finite, got {}",
                self.s
            )));
        }
        if self.dim == 0 {
            return Err(Error::InvalidParameter("kernel dimension must be >= 1".into()));
        }
        Ok(())
    }

    /// Number of kernel parameters `q`.
    pub fn param_count(&self) -> usize {
        1
    }

    pub fn params(&self) -> Vec<f64> {
        vec![self.s]
    }

    pub fn with_scale(&self, s: f64) -> Result<Self> {
        let mut k = self.clone();
        k.s = s;
        k.validate()?;
        Ok(k)
    }

    pub fn with_params(&self, lambda: &[f64]) -> Result<Self> {
        if lambda.len() != self.param_count() {
            return Err(Error::DimensionMismatch {
                expected: self.param_count(),
                got: lambda.len(),
            });
        }
        self.with_scale(lambda[0])
    }

    /// Log of the normalizing prefactor `c_s`.
    pub fn ln_prefactor(&self) -> f64 {
        if self.normalized {
            -0.5 * self.dim as f64 * (2.0 * PI * self.s * self.s).ln()
        } else {
            0.0
        }
    }

    /// `ln φ_s` as a function of the squared norm `r2 = |x|²`.
    #[inline]
    pub fn ln_eval_r2(&self, r2: f64) -> f64 {
        self.ln_prefactor() - r2 / (2.0 * self.s * self.s)
    }

    #[inline]
    pub fn eval_r2(&self, r2: f64) -> f64 {
        self.ln_eval_r2(r2).exp()
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.eval_r2(norm2(x))
    }

    #[inline]
    pub fn eval1(&self, x: f64) -> f64 {
        self.eval_r2(x * x)
    }

    /// `∂_s ln φ_s` as a function of `r2 = |x|²`.
    #[inline]
    pub fn dlog_ds_r2(&self, r2: f64) -> f64 {
        let s = self.s;
        let base = r2 / (s * s * s);
        if self.normalized {
            base - self.dim as f64 / s
        } else {
            base
        }
    }

    /// Analytic derivative of `φ_s(x)` with respect to kernel parameter `b`.
    pub fn dlambda(&self, x: &[f64], b: usize) -> Result<f64> {
        if b >= self.param_count() {
            return Err(Error::UnknownKernelParameter(b));
        }
        let r2 = norm2(x);
        Ok(self.eval_r2(r2) * self.dlog_ds_r2(r2))
    }

    pub fn dlambda1(&self, x: f64, b: usize) -> Result<f64> {
        self.dlambda(&[x], b)
    }

    /// `d φ_s / dx` in one dimension.
    #[inline]
    pub fn dx1(&self, x: f64) -> f64 {
        -x / (self.s * self.s) * self.eval1(x)
    }

    /// Empirical check of `φ(x) ≤ C exp(-a|x|²)` with `a = (1-ε)/(2s²)` on a
    /// radial grid. Returns the smallest admissible `C` seen on the grid.
    pub fn decay_certificate(&self, eps: f64, radii: &[f64]) -> DecayCertificate {
        let a = (1.0 - eps) / (2.0 * self.s * self.s);
        let mut c = 0.0_f64;
        let mut positive = true;
        for &r in radii {
            let v = self.eval_r2(r * r);
            if !(v > 0.0) && r * r / (2.0 * self.s * self.s) < 700.0 {
                positive = false;
            }
            // log-domain ratio to avoid 0/0 far in the tail
            let ln_ratio = self.ln_eval_r2(r * r) + a * r * r;
            c = c.max(ln_ratio.exp());
        }
        DecayCertificate {
            rate: a,
            constant: c,
            certified: positive && c.is_finite(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DecayCertificate {
    pub rate: f64,
    pub constant: f64,
    pub certified: bool,
}

#[inline]
pub(crate) fn norm2(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn eval_examples() {
        let k = KernelFamily::normalized(1.0).unwrap();
        assert_relative_eq!(k.eval1(0.0), (2.0 * PI).powf(-0.5), epsilon = 1e-15);
        let k = KernelFamily::unnormalized(1.0).unwrap();
        assert_eq!(k.eval1(0.0), 1.0);
        let k = KernelFamily::unnormalized(2.0).unwrap();
        assert_relative_eq!(k.eval1(2.0), (-0.5f64).exp(), epsilon = 1e-15);
    }

    #[test]
    fn dlambda_examples() {
        let k = KernelFamily::unnormalized(1.0).unwrap();
        assert_relative_eq!(k.dlambda1(1.0, 0).unwrap(), (-0.5f64).exp(), epsilon = 1e-15);
        assert_eq!(k.dlambda1(0.0, 0).unwrap(), 0.0);
        let k = KernelFamily::normalized(1.0).unwrap();
        assert_relative_eq!(
            k.dlambda1(0.0, 0).unwrap(),
            -(2.0 * PI).powf(-0.5),
            epsilon = 1e-15
        );
        // central difference cross-check of the normalized value at x = 0
        let h = 1e-5;
        let fd = (k.with_scale(1.0 + h).unwrap().eval1(0.0)
            - k.with_scale(1.0 - h).unwrap().eval1(0.0))
            / (2.0 * h);
        assert_relative_eq!(fd, -(2.0 * PI).powf(-0.5), epsilon = 1e-9);
    }

    #[test]
    fn unknown_parameter_index() {
        let k = KernelFamily::unnormalized(1.0).unwrap();
        assert_eq!(k.dlambda1(0.3, 1), Err(Error::UnknownKernelParameter(1)));
    }

    #[test]
    fn rejects_bad_scale() {
        assert!(KernelFamily::unnormalized(0.0).is_err());
        assert!(KernelFamily::unnormalized(-1.0).is_err());
        assert!(KernelFamily::unnormalized(f64::NAN).is_err());
        assert!(KernelFamily::gaussian(1.0, 0, true).is_err());
    }

    #[test]
    fn finite_difference_matches_dlambda_on_grid() {
        let h = 1e-5;
        for &normalized in &[false, true] {
            for &s in &[0.5, 1.0, 2.0] {
                let k = KernelFamily::gaussian(s, 1, normalized).unwrap();
                let kp = k.with_scale(s + h).unwrap();
                let km = k.with_scale(s - h).unwrap();
                for i in 0..=200 {
                    let x = -10.0 + 0.1 * i as f64;
                    let fd = (kp.eval1(x) - km.eval1(x)) / (2.0 * h);
                    let an = k.dlambda1(x, 0).unwrap();
                    assert!((fd - an).abs() <= 1e-8, "s={s} x={x}: {fd} vs {an}");
                }
            }
        }
    }

    #[test]
    fn unnormalized_scale_derivative_positive_off_origin() {
        for &s in &[0.3, 1.0, 4.0] {
            let k = KernelFamily::unnormalized(s).unwrap();
            for i in 1..=100 {
                let x = 0.05 * i as f64;
                assert!(k.dlambda1(x, 0).unwrap() > 0.0);
                assert!(k.dlambda1(-x, 0).unwrap() > 0.0);
            }
        }
    }

    #[test]
    fn positive_and_decaying() {
        let radii: Vec<f64> = (0..=400).map(|i| 0.1 * i as f64).collect();
        for &normalized in &[false, true] {
            let k = KernelFamily::gaussian(1.5, 2, normalized).unwrap();
            let cert = k.decay_certificate(0.01, &radii);
            assert!(cert.certified);
            assert!(cert.constant <= 1.0 + 1e-12);
            for &r in &radii[..200] {
                assert!(k.eval(&[r, 0.0]) > 0.0);
            }
        }
    }

    #[test]
    fn multivariate_normalized_prefactor() {
        let k = KernelFamily::gaussian(2.0, 3, true).unwrap();
        let expected = (2.0 * PI * 4.0).powf(-1.5);
        assert_relative_eq!(k.eval(&[0.0, 0.0, 0.0]), expected, epsilon = 1e-15);
    }
}
