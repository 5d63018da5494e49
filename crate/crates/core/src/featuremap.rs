//! Weak feature maps `Φ_λ(θ)` and the joint Jacobian `DF = (D_θF | D_λF)`.
//!
//! A weak feature is a kernel-weighted pairing `∫ g(x) f(x; θ) φ_λ(x) dx` for
//! a test function `g`: monomials give weak moments, `cos/sin(ux)` the weak
//! characteristic function. The model block of the Jacobian replaces `f` by
//! `f·∂_θ log f`; the kernel block replaces `φ_λ` by `∂_λ φ_λ`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::kernel::KernelFamily;
use crate::model::{ModelSpec, Support};
use crate::quadrature::{integrate, GaussianProduct, QuadConfig, Transform};

/// Finite-difference step scale `ε^{1/3}`.
pub fn fd_step(at: f64) -> f64 {
    f64::EPSILON.cbrt() * at.abs().max(1.0)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FeatureSpec {
    Moments { orders: Vec<u32> },
    Charfn { u: Vec<f64> },
    /// Polynomial test functions, coefficients in increasing degree.
    Custom { polynomials: Vec<Vec<f64>> },
}

impl FeatureSpec {
    pub fn moments(orders: impl IntoIterator<Item = u32>) -> Self {
        FeatureSpec::Moments {
            orders: orders.into_iter().collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            FeatureSpec::Moments { orders } => {
                if orders.is_empty() {
                    return Err(Error::InvalidParameter("feature spec has no orders".into()));
                }
                if orders.windows(2).any(|w| w[0] >= w[1]) {
                    return Err(Error::InvalidParameter(
                        "moment orders must be strictly increasing".into(),
                    ));
                }
            }
            FeatureSpec::Charfn { u } => {
                if u.is_empty() {
                    return Err(Error::InvalidParameter("charfn grid is empty".into()));
                }
                if u.iter().any(|v| !v.is_finite()) {
                    return Err(Error::InvalidParameter("charfn grid must be finite".into()));
                }
            }
            FeatureSpec::Custom { polynomials } => {
                if polynomials.is_empty() {
                    return Err(Error::InvalidParameter("custom spec has no test functions".into()));
                }
                if polynomials.iter().flatten().any(|c| !c.is_finite()) {
                    return Err(Error::InvalidParameter("polynomial coefficients must be finite".into()));
                }
            }
        }
        Ok(())
    }

    /// One-dimensional test functions in feature order.
    pub fn test_functions(&self) -> Vec<TestFn> {
        match self {
            FeatureSpec::Moments { orders } => orders.iter().map(|&j| TestFn::Monomial(j)).collect(),
            FeatureSpec::Charfn { u } => u
                .iter()
                .flat_map(|&u| [TestFn::Cos(u), TestFn::Sin(u)])
                .collect(),
            FeatureSpec::Custom { polynomials } => {
                polynomials.iter().cloned().map(TestFn::Poly).collect()
            }
        }
    }

    /// Multi-indices of the multivariate weak moments, in feature order.
    pub fn monomials(&self, dim: usize) -> Result<Vec<Vec<usize>>> {
        let FeatureSpec::Moments { orders } = self else {
            return Err(Error::Unsupported(
                "only moment features for multivariate models".into(),
            ));
        };
        let mut out = Vec::new();
        for &order in orders {
            match order {
                0 => out.push(vec![0; dim]),
                1 => {
                    for i in 0..dim {
                        let mut a = vec![0; dim];
                        a[i] = 1;
                        out.push(a);
                    }
                }
                2 => {
                    for i in 0..dim {
                        for j in i..dim {
                            let mut a = vec![0; dim];
                            a[i] += 1;
                            a[j] += 1;
                            out.push(a);
                        }
                    }
                }
                _ => {
                    return Err(Error::Unsupported(format!(
                        "multivariate weak moments of order {order}"
                    )))
                }
            }
        }
        Ok(out)
    }

    pub fn feature_count(&self, model: &ModelSpec) -> Result<usize> {
        match model.support() {
            Support::RealD(d) => Ok(self.monomials(d)?.len()),
            _ => Ok(self.test_functions().len()),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum TestFn {
    Monomial(u32),
    Cos(f64),
    Sin(f64),
    Poly(Vec<f64>),
}

impl TestFn {
    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            TestFn::Monomial(j) => x.powi(*j as i32),
            TestFn::Cos(u) => (u * x).cos(),
            TestFn::Sin(u) => (u * x).sin(),
            TestFn::Poly(c) => c.iter().rev().fold(0.0, |acc, &a| acc * x + a),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    pub theta: Vec<f64>,
    pub lambda: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JacobianMethod {
    AnalyticScore,
    FiniteDifference,
}

#[derive(Clone, Debug, PartialEq)]
pub struct JacobianDecomposition {
    pub d_theta: DMatrix<f64>,
    pub d_lambda: DMatrix<f64>,
    pub method: JacobianMethod,
}

impl JacobianDecomposition {
    pub fn new(d_theta: DMatrix<f64>, d_lambda: DMatrix<f64>, method: JacobianMethod) -> Result<Self> {
        if d_theta.nrows() != d_lambda.nrows() {
            return Err(Error::DimensionMismatch {
                expected: d_theta.nrows(),
                got: d_lambda.nrows(),
            });
        }
        Ok(Self {
            d_theta,
            d_lambda,
            method,
        })
    }

    /// Convenience constructor from row-major blocks.
    pub fn from_rows(d_theta: &[&[f64]], d_lambda: &[&[f64]]) -> Result<Self> {
        Self::new(rows_to_matrix(d_theta)?, rows_to_matrix(d_lambda)?, JacobianMethod::AnalyticScore)
    }

    pub fn features(&self) -> usize {
        self.d_theta.nrows()
    }

    pub fn p(&self) -> usize {
        self.d_theta.ncols()
    }

    pub fn q(&self) -> usize {
        self.d_lambda.ncols()
    }

    /// `[d_theta | d_lambda]`, shape `(K+1) × (p+q)`.
    pub fn joint(&self) -> DMatrix<f64> {
        let (r, p, q) = (self.features(), self.p(), self.q());
        let mut m = DMatrix::zeros(r, p + q);
        m.view_mut((0, 0), (r, p)).copy_from(&self.d_theta);
        m.view_mut((0, p), (r, q)).copy_from(&self.d_lambda);
        m
    }

    /// Drops the kernel block (`q = 0`).
    pub fn without_kernel(&self) -> Self {
        Self {
            d_theta: self.d_theta.clone(),
            d_lambda: DMatrix::zeros(self.features(), 0),
            method: self.method,
        }
    }
}

pub(crate) fn rows_to_matrix(rows: &[&[f64]]) -> Result<DMatrix<f64>> {
    let ncols = rows.first().map_or(0, |r| r.len());
    if let Some(bad) = rows.iter().find(|r| r.len() != ncols) {
        return Err(Error::DimensionMismatch {
            expected: ncols,
            got: bad.len(),
        });
    }
    Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

pub fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| m.row(i).iter().copied().collect())
        .collect()
}

impl Serialize for JacobianDecomposition {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        let mut st = s.serialize_struct("JacobianDecomposition", 3)?;
        st.serialize_field("d_theta", &matrix_rows(&self.d_theta))?;
        st.serialize_field("d_lambda", &matrix_rows(&self.d_lambda))?;
        st.serialize_field("method", &self.method)?;
        st.end()
    }
}

/// Which factor multiplies `g·f·φ` in a pairing.
#[derive(Clone, Copy, Debug)]
enum Factor {
    One,
    Score(usize),
    KernelScale,
}

/// A model paired with a kernel, evaluated by quadrature (or in closed form
/// for the multivariate Gaussian family).
#[derive(Clone, Debug, PartialEq)]
pub struct WeakMap {
    pub model: ModelSpec,
    pub kernel: KernelFamily,
    pub quad: QuadConfig,
}

impl WeakMap {
    pub fn new(model: ModelSpec, kernel: KernelFamily, quad: QuadConfig) -> Result<Self> {
        model.validate()?;
        kernel.validate()?;
        quad.validate()?;
        if kernel.dim != model.dim() {
            return Err(Error::DimensionMismatch {
                expected: model.dim(),
                got: kernel.dim,
            });
        }
        Ok(Self { model, kernel, quad })
    }

    pub fn with_kernel(&self, kernel: KernelFamily) -> Self {
        Self {
            kernel,
            ..self.clone()
        }
    }

    pub fn with_kernel_params(&self, lambda: &[f64]) -> Result<Self> {
        Ok(self.with_kernel(self.kernel.with_params(lambda)?))
    }

    pub fn is_multivariate(&self) -> bool {
        matches!(self.model.support(), Support::RealD(_))
    }

    fn quad_config(&self) -> QuadConfig {
        match self.quad.transform {
            Transform::DoubleExponential => self.quad.with_transform(self.model.preferred_transform()),
            _ => self.quad,
        }
    }

    fn univariate(&self, what: &str) -> Result<()> {
        if self.is_multivariate() {
            Err(Error::Unsupported(format!("{what} for the multivariate family")))
        } else {
            Ok(())
        }
    }

    /// `∫ g(x) e^{tx} f(x; θ) φ(x) · factor(x) dx` with θ already checked.
    fn pair(
        &self,
        kernel: &KernelFamily,
        theta: &[f64],
        g: impl Fn(f64) -> f64,
        tilt: f64,
        factor: Factor,
    ) -> Result<f64> {
        let support = self.model.support().interval().expect("univariate");
        let model = &self.model;
        let integrand = |x: f64| {
            let lw = model.ln_density1_raw(x, theta) + kernel.ln_eval_r2(x * x) + tilt * x;
            // the weight vanishing makes the whole term vanish, whatever g does
            if lw == f64::NEG_INFINITY {
                return 0.0;
            }
            let w = lw.exp();
            if w == 0.0 {
                return 0.0;
            }
            let extra = match factor {
                Factor::One => 1.0,
                Factor::Score(a) => model.score1_raw(x, theta, a),
                Factor::KernelScale => kernel.dlog_ds_r2(x * x),
            };
            g(x) * w * extra
        };
        Ok(integrate(integrand, support, &self.quad_config())?.value)
    }

    /// Weak moment `E_θ[X^j φ(X)]`.
    pub fn weak_moment(&self, theta: &[f64], j: u32) -> Result<f64> {
        self.univariate("scalar weak moments")?;
        self.model.check_theta(theta)?;
        self.pair(&self.kernel, theta, |x| x.powi(j as i32), 0.0, Factor::One)
    }

    /// `(∫ cos(ux) f φ, ∫ sin(ux) f φ)`.
    pub fn weak_char_fn(&self, theta: &[f64], u: f64) -> Result<(f64, f64)> {
        self.univariate("the weak characteristic function")?;
        self.model.check_theta(theta)?;
        if u == 0.0 {
            return Ok((self.pair(&self.kernel, theta, |_| 1.0, 0.0, Factor::One)?, 0.0));
        }
        let re = self.pair(&self.kernel, theta, |x| (u * x).cos(), 0.0, Factor::One)?;
        let im = self.pair(&self.kernel, theta, |x| (u * x).sin(), 0.0, Factor::One)?;
        Ok((re, im))
    }

    /// Weak cumulant generating function `log E[e^{tX} φ(X)] − log w₀`.
    pub fn weak_cgf(&self, theta: &[f64], t: f64) -> Result<f64> {
        self.univariate("the weak CGF")?;
        self.model.check_theta(theta)?;
        if t == 0.0 {
            return Ok(0.0);
        }
        let w0 = self.pair(&self.kernel, theta, |_| 1.0, 0.0, Factor::One)?;
        let mt = self.pair(&self.kernel, theta, |_| 1.0, t, Factor::One)?;
        Ok(mt.ln() - w0.ln())
    }

    /// Weak cumulants `κ₁..κ₄` from five-point differences of the weak CGF
    /// at `t = 0` with step `h`.
    pub fn weak_cumulants(&self, theta: &[f64], h: f64) -> Result<[f64; 4]> {
        let k = |t: f64| self.weak_cgf(theta, t);
        let (m2, m1, p1, p2) = (k(-2.0 * h)?, k(-h)?, k(h)?, k(2.0 * h)?);
        let k1 = (-p2 + 8.0 * p1 - 8.0 * m1 + m2) / (12.0 * h);
        let k2 = (-p2 + 16.0 * p1 + 16.0 * m1 - m2) / (12.0 * h * h);
        let k3 = (p2 - 2.0 * p1 + 2.0 * m1 - m2) / (2.0 * h * h * h);
        let k4 = (p2 - 4.0 * p1 - 4.0 * m1 + m2) / (h * h * h * h);
        Ok([k1, k2, k3, k4])
    }

    /// Kernel-free pairing `E_θ[g(X)]` by quadrature; used to measure
    /// classical moments numerically.
    pub fn classical_expectation(&self, theta: &[f64], g: impl Fn(f64) -> f64) -> Result<f64> {
        self.univariate("classical expectations")?;
        self.model.check_theta(theta)?;
        let support = self.model.support().interval().expect("univariate");
        let model = &self.model;
        let integrand = |x: f64| {
            let w = model.ln_density1_raw(x, theta).exp();
            if w == 0.0 {
                0.0
            } else {
                g(x) * w
            }
        };
        Ok(integrate(integrand, support, &self.quad_config())?.value)
    }

    /// `∫ g f φ` for an arbitrary test function `g` and kernel.
    pub(crate) fn pair_with(
        &self,
        theta: &[f64],
        kernel: &KernelFamily,
        g: impl Fn(f64) -> f64,
    ) -> Result<f64> {
        self.pair(kernel, theta, g, 0.0, Factor::One)
    }

    fn gaussian_product(&self, theta: &[f64], kernel: &KernelFamily) -> Result<GaussianProduct> {
        let sigma = self.model.covariance(theta)?;
        let d = sigma.nrows();
        GaussianProduct::new(&sigma, &vec![0.0; d], kernel.s, kernel.normalized)
    }

    fn features_with(&self, theta: &[f64], kernel: &KernelFamily, spec: &FeatureSpec) -> Result<Vec<f64>> {
        if let Support::RealD(d) = self.model.support() {
            let gp = self.gaussian_product(theta, kernel)?;
            return spec.monomials(d)?.iter().map(|a| gp.moment(a)).collect();
        }
        spec.test_functions()
            .iter()
            .map(|g| self.pair(kernel, theta, |x| g.eval(x), 0.0, Factor::One))
            .collect()
    }

    pub fn feature_map(&self, theta: &[f64], spec: &FeatureSpec) -> Result<FeatureVector> {
        spec.validate()?;
        self.model.check_theta(theta)?;
        let values = self.features_with(theta, &self.kernel, spec)?;
        Ok(FeatureVector {
            values,
            theta: theta.to_vec(),
            lambda: self.kernel.params(),
        })
    }

    pub fn jacobian(
        &self,
        theta: &[f64],
        spec: &FeatureSpec,
        method: JacobianMethod,
    ) -> Result<JacobianDecomposition> {
        spec.validate()?;
        self.model.check_theta(theta)?;
        match method {
            JacobianMethod::AnalyticScore => self.analytic_jacobian(theta, spec),
            JacobianMethod::FiniteDifference => self.fd_jacobian(theta, spec),
        }
    }

    fn analytic_jacobian(&self, theta: &[f64], spec: &FeatureSpec) -> Result<JacobianDecomposition> {
        if !self.model.has_analytic_score() {
            return Err(Error::Unsupported(format!("analytic score for {}", self.model.name())));
        }
        if let Support::RealD(d) = self.model.support() {
            return self.mvn_analytic_jacobian(theta, spec, d);
        }
        let tests = spec.test_functions();
        let p = self.model.param_dim();
        let q = self.kernel.param_count();
        let mut d_theta = DMatrix::zeros(tests.len(), p);
        let mut d_lambda = DMatrix::zeros(tests.len(), q);
        for (row, g) in tests.iter().enumerate() {
            for a in 0..p {
                d_theta[(row, a)] = self.pair(&self.kernel, theta, |x| g.eval(x), 0.0, Factor::Score(a))?;
            }
            d_lambda[(row, 0)] = self.pair(&self.kernel, theta, |x| g.eval(x), 0.0, Factor::KernelScale)?;
        }
        JacobianDecomposition::new(d_theta, d_lambda, JacobianMethod::AnalyticScore)
    }

    /// Closed-form derivatives of `Z·Σ̃` for the zero-mean Gaussian family,
    /// where `Σ̃ = (Ω + s⁻²I)⁻¹` and `Z = c_s N(0; 0, Ω⁻¹ + s²I)`.
    fn mvn_analytic_jacobian(&self, theta: &[f64], spec: &FeatureSpec, d: usize) -> Result<JacobianDecomposition> {
        let ModelSpec::GaussianMvn { edges, .. } = &self.model else {
            unreachable!()
        };
        let s = self.kernel.s;
        let s2 = s * s;
        let omega = self.model.precision(theta)?;
        let sigma = self.model.covariance(theta)?;
        let eye = DMatrix::<f64>::identity(d, d);
        let tilted = (&omega + &eye / s2)
            .cholesky()
            .ok_or_else(|| Error::Singular("tilted precision".into()))?
            .inverse();
        let total_inv = (&sigma + &eye * s2)
            .cholesky()
            .ok_or_else(|| Error::Singular("Σ + s²I".into()))?
            .inverse();
        let gp = self.gaussian_product(theta, &self.kernel)?;
        let z = gp.mass;
        let monomials = spec.monomials(d)?;
        let p = self.model.param_dim();

        // ln Z = ½ ln det Ω − ½ ln det(I + s²Ω) + const
        let b_inv = (&eye + &omega * s2)
            .try_inverse()
            .ok_or_else(|| Error::Singular("I + s²Ω".into()))?;
        let direction = |a: usize| -> DMatrix<f64> {
            let mut e = DMatrix::zeros(d, d);
            if a < d {
                e[(a, a)] = 1.0;
            } else {
                let [i, j] = edges[a - d];
                e[(i, j)] = 1.0;
                e[(j, i)] = 1.0;
            }
            e
        };
        let feature_derivative = |alpha: &[usize], dlnz: f64, dtilted: &DMatrix<f64>| -> f64 {
            let order: usize = alpha.iter().sum();
            match order {
                0 => z * dlnz,
                1 => 0.0,
                _ => {
                    let idx: Vec<usize> = alpha
                        .iter()
                        .enumerate()
                        .flat_map(|(i, &a)| std::iter::repeat_n(i, a))
                        .collect();
                    let (i, j) = (idx[0], idx[1]);
                    z * (dlnz * tilted[(i, j)] + dtilted[(i, j)])
                }
            }
        };

        let mut d_theta = DMatrix::zeros(monomials.len(), p);
        for a in 0..p {
            let e = direction(a);
            let dlnz = 0.5 * (&sigma * &e).trace() - 0.5 * s2 * (&b_inv * &e).trace();
            let dtilted = -(&tilted * &e * &tilted);
            for (row, alpha) in monomials.iter().enumerate() {
                d_theta[(row, a)] = feature_derivative(alpha, dlnz, &dtilted);
            }
        }
        let mut dlnz_ds = -s * total_inv.trace();
        if !self.kernel.normalized {
            dlnz_ds += d as f64 / s;
        }
        let dtilted_ds = &tilted * &tilted * (2.0 / (s2 * s));
        let mut d_lambda = DMatrix::zeros(monomials.len(), 1);
        for (row, alpha) in monomials.iter().enumerate() {
            d_lambda[(row, 0)] = feature_derivative(alpha, dlnz_ds, &dtilted_ds);
        }
        JacobianDecomposition::new(d_theta, d_lambda, JacobianMethod::AnalyticScore)
    }

    fn fd_jacobian(&self, theta: &[f64], spec: &FeatureSpec) -> Result<JacobianDecomposition> {
        let p = self.model.param_dim();
        let n = spec.feature_count(&self.model)?;
        let mut d_theta = DMatrix::zeros(n, p);
        for a in 0..p {
            let h = fd_step(theta[a]);
            let mut tp = theta.to_vec();
            let mut tm = theta.to_vec();
            tp[a] += h;
            tm[a] -= h;
            if tp[a] == theta[a] || tm[a] == theta[a] {
                return Err(Error::StepFailure(format!("step underflow in θ[{a}]")));
            }
            for t in [&tp, &tm] {
                self.model.check_theta(t).map_err(|_| {
                    Error::StepFailure(format!("θ[{a}] ± {h:e} leaves the parameter domain"))
                })?;
            }
            let fp = self.features_with(&tp, &self.kernel, spec)?;
            let fm = self.features_with(&tm, &self.kernel, spec)?;
            let col = (DVector::from_vec(fp) - DVector::from_vec(fm)) / (2.0 * h);
            d_theta.set_column(a, &col);
        }
        let s = self.kernel.s;
        let h = fd_step(s);
        let kp = self
            .kernel
            .with_scale(s + h)
            .map_err(|e| Error::StepFailure(e.to_string()))?;
        let km = self
            .kernel
            .with_scale(s - h)
            .map_err(|e| Error::StepFailure(e.to_string()))?;
        let fp = self.features_with(theta, &kp, spec)?;
        let fm = self.features_with(theta, &km, spec)?;
        let col = (DVector::from_vec(fp) - DVector::from_vec(fm)) / (2.0 * h);
        let d_lambda = DMatrix::from_column_slice(n, 1, col.as_slice());
        JacobianDecomposition::new(d_theta, d_lambda, JacobianMethod::FiniteDifference)
    }
}
