//! Numerical rank, strata in feature space, and transversality checks.
//!
//! A stratum `D ⊂ R^{K+1}` is the zero set of a level map `g: R^{K+1} → R^c`.
//! At a point `y ∈ D` the normal space is the row space of `Dg(y)`; a map
//! with Jacobian `DF` is transversal to `D` at `y` when `π_N · DF` has rank
//! `c`.
//!
//! Rank decisions on sub-blocks and projections of a Jacobian use an absolute
//! tolerance scaled by the largest singular value of the full joint Jacobian,
//! so that numerical noise in an exactly vanishing block never counts as rank
//! and the rank of a column sub-block never exceeds the rank of the whole.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::featuremap::{FeatureSpec, JacobianDecomposition, JacobianMethod, WeakMap};
use crate::par;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RankOptions {
    pub rank_rtol: f64,
    pub on_stratum_tol: f64,
    /// Points with `on_stratum_tol < |g| ≤ newton_tol` are pulled onto the
    /// stratum by one Gauss–Newton step.
    pub newton_tol: f64,
}

impl Default for RankOptions {
    fn default() -> Self {
        Self {
            rank_rtol: 1e-10,
            on_stratum_tol: 1e-8,
            newton_tol: 1e-4,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RankReport {
    pub singular_values: Vec<f64>,
    pub numerical_rank: usize,
    pub tol_used: f64,
    pub shape: (usize, usize),
    /// Some singular value lies within a factor 10 of `tol_used`.
    pub marginal: bool,
}

fn singular_values(m: &DMatrix<f64>) -> Result<Vec<f64>> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter("matrix has non-finite entries".into()));
    }
    if m.is_empty() {
        return Ok(Vec::new());
    }
    let svd = m
        .clone()
        .try_svd(false, false, f64::EPSILON, 10_000)
        .ok_or(Error::SvdFailure)?;
    let mut sv: Vec<f64> = svd.singular_values.iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    Ok(sv)
}

/// SVD rank with `tol = rank_rtol · σ_max · max(rows, cols)`.
pub fn numerical_rank(m: &DMatrix<f64>, rank_rtol: f64) -> Result<RankReport> {
    rank_with_scale(m, rank_rtol, 0.0)
}

/// As [`numerical_rank`], with `σ_max` replaced by `max(σ_max, scale)`.
pub fn rank_with_scale(m: &DMatrix<f64>, rank_rtol: f64, scale: f64) -> Result<RankReport> {
    rank_with_scale_dims(m, rank_rtol, scale, m.nrows().max(m.ncols()))
}

fn rank_with_scale_dims(m: &DMatrix<f64>, rank_rtol: f64, scale: f64, dims: usize) -> Result<RankReport> {
    let sv = singular_values(m)?;
    let smax = sv.first().copied().unwrap_or(0.0).max(scale);
    let tol = rank_rtol * smax * dims as f64;
    let numerical_rank = sv.iter().filter(|&&v| v > tol).count();
    let marginal = tol > 0.0 && sv.iter().any(|&v| v >= tol / 10.0 && v <= tol * 10.0);
    Ok(RankReport {
        singular_values: sv,
        numerical_rank,
        tol_used: tol,
        shape: (m.nrows(), m.ncols()),
        marginal,
    })
}

type LevelFn = dyn Fn(&[f64]) -> Vec<f64> + Send + Sync;
type LevelJacFn = dyn Fn(&[f64]) -> DMatrix<f64> + Send + Sync;

#[derive(Clone)]
pub struct CustomStratum {
    pub codim: usize,
    pub level: Arc<LevelFn>,
    pub level_jacobian: Arc<LevelJacFn>,
}

impl fmt::Debug for CustomStratum {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomStratum").field("codim", &self.codim).finish_non_exhaustive()
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Stratum {
    /// `{y : y[indices[i]] = values[i]}`.
    Coordinate { indices: Vec<usize>, values: Vec<f64> },
    /// Zero set of the Hankel determinant `det(y_{i+j})_{i,j=0..n}` for
    /// `K + 1 = 2n + 1` features: the moment vector of a measure supported
    /// on at most `n` points.
    #[serde(rename = "custom_det", alias = "rank_deficiency")]
    HankelDet,
    #[serde(skip)]
    Custom(CustomStratum),
}

impl Stratum {
    pub fn coordinate(indices: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        let s = Stratum::Coordinate { indices, values };
        s.validate(None)?;
        Ok(s)
    }

    pub fn custom(
        codim: usize,
        level: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
        level_jacobian: impl Fn(&[f64]) -> DMatrix<f64> + Send + Sync + 'static,
    ) -> Self {
        Stratum::Custom(CustomStratum {
            codim,
            level: Arc::new(level),
            level_jacobian: Arc::new(level_jacobian),
        })
    }

    pub fn codim(&self) -> usize {
        match self {
            Stratum::Coordinate { indices, .. } => indices.len(),
            Stratum::HankelDet => 1,
            Stratum::Custom(c) => c.codim,
        }
    }

    /// Checks internal consistency and, when given, the ambient dimension.
    pub fn validate(&self, ambient: Option<usize>) -> Result<()> {
        match self {
            Stratum::Coordinate { indices, values } => {
                if indices.is_empty() {
                    return Err(Error::InvalidParameter("stratum has no constrained coordinates".into()));
                }
                if indices.len() != values.len() {
                    return Err(Error::DimensionMismatch {
                        expected: indices.len(),
                        got: values.len(),
                    });
                }
                let mut sorted = indices.clone();
                sorted.sort_unstable();
                if sorted.windows(2).any(|w| w[0] == w[1]) {
                    return Err(Error::InvalidParameter("repeated stratum index".into()));
                }
                if values.iter().any(|v| !v.is_finite()) {
                    return Err(Error::InvalidParameter("stratum values must be finite".into()));
                }
                if let Some(m) = ambient {
                    if let Some(&bad) = indices.iter().find(|&&i| i >= m) {
                        return Err(Error::IndexOutOfRange { index: bad, dim: m });
                    }
                }
            }
            Stratum::HankelDet => {
                if let Some(m) = ambient {
                    if m % 2 == 0 {
                        return Err(Error::InvalidParameter(format!(
                            "Hankel stratum needs an odd number of features, got {m}"
                        )));
                    }
                }
            }
            Stratum::Custom(c) => {
                if c.codim == 0 {
                    return Err(Error::InvalidParameter("codimension must be positive".into()));
                }
            }
        }
        if let Some(m) = ambient {
            if self.codim() > m {
                return Err(Error::InvalidParameter(format!(
                    "codimension {} exceeds ambient dimension {m}",
                    self.codim()
                )));
            }
        }
        Ok(())
    }

    pub fn level(&self, y: &[f64]) -> Result<Vec<f64>> {
        self.validate(Some(y.len()))?;
        Ok(match self {
            Stratum::Coordinate { indices, values } => {
                indices.iter().zip(values).map(|(&i, v)| y[i] - v).collect()
            }
            Stratum::HankelDet => vec![hankel(y).determinant()],
            Stratum::Custom(c) => (c.level)(y),
        })
    }

    pub fn level_jacobian(&self, y: &[f64]) -> Result<DMatrix<f64>> {
        self.validate(Some(y.len()))?;
        let m = y.len();
        Ok(match self {
            Stratum::Coordinate { indices, .. } => {
                let mut dg = DMatrix::zeros(indices.len(), m);
                for (r, &i) in indices.iter().enumerate() {
                    dg[(r, i)] = 1.0;
                }
                dg
            }
            Stratum::HankelDet => {
                let h = hankel(y);
                let n = h.nrows();
                let mut dg = DMatrix::zeros(1, m);
                for i in 0..n {
                    for j in 0..n {
                        dg[(0, i + j)] += cofactor(&h, i, j);
                    }
                }
                dg
            }
            Stratum::Custom(c) => (c.level_jacobian)(y),
        })
    }
}

fn hankel(y: &[f64]) -> DMatrix<f64> {
    let n = (y.len() - 1) / 2 + 1;
    DMatrix::from_fn(n, n, |i, j| y[i + j])
}

fn cofactor(h: &DMatrix<f64>, i: usize, j: usize) -> f64 {
    if h.nrows() == 1 {
        return 1.0;
    }
    let minor = h.clone().remove_row(i).remove_column(j).determinant();
    if (i + j).is_multiple_of(2) {
        minor
    } else {
        -minor
    }
}

/// Orthonormal rows spanning the row space of `m`, by twice-iterated
/// modified Gram–Schmidt. Rows whose residual falls below `tol` are dropped.
fn orthonormal_rows(m: &DMatrix<f64>, tol: f64) -> DMatrix<f64> {
    let mut basis: Vec<DVector<f64>> = Vec::new();
    for r in 0..m.nrows() {
        let mut v: DVector<f64> = m.row(r).transpose();
        for _ in 0..2 {
            for b in &basis {
                let c = b.dot(&v);
                v -= b * c;
            }
        }
        let n = v.norm();
        if n > tol {
            basis.push(v / n);
        }
    }
    let cols = m.ncols();
    DMatrix::from_fn(basis.len(), cols, |i, j| basis[i][j])
}

/// Moves `y` onto the stratum if it is close enough, then returns it.
fn settle_on_stratum(s: &Stratum, y: &[f64], opts: &RankOptions) -> Result<Vec<f64>> {
    let g = s.level(y)?;
    let residual = g.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    if !residual.is_finite() {
        return Err(Error::NotOnStratum { residual });
    }
    if residual <= opts.on_stratum_tol {
        return Ok(y.to_vec());
    }
    if residual > opts.newton_tol {
        return Err(Error::NotOnStratum { residual });
    }
    let dg = s.level_jacobian(y)?;
    let gram = &dg * dg.transpose();
    let step = gram
        .lu()
        .solve(&DVector::from_vec(g))
        .ok_or_else(|| Error::DegenerateStratum {
            rank: 0,
            codim: s.codim(),
        })?;
    let delta = dg.transpose() * step;
    Ok(y.iter().zip(delta.iter()).map(|(a, d)| a - d).collect())
}

/// Orthonormal basis (as rows, `c × (K+1)`) of the normal space at `y`.
pub fn normal_projection(s: &Stratum, y: &[f64], opts: &RankOptions) -> Result<DMatrix<f64>> {
    let y = settle_on_stratum(s, y, opts)?;
    let dg = s.level_jacobian(&y)?;
    let c = s.codim();
    let report = numerical_rank(&dg, opts.rank_rtol)?;
    if report.numerical_rank < c {
        return Err(Error::DegenerateStratum {
            rank: report.numerical_rank,
            codim: c,
        });
    }
    let basis = orthonormal_rows(&dg, report.tol_used);
    debug_assert_eq!(basis.nrows(), c);
    Ok(basis)
}

fn joint_scale(j: &JacobianDecomposition) -> Result<(f64, usize)> {
    let joint = j.joint();
    let smax = singular_values(&joint)?.first().copied().unwrap_or(0.0);
    Ok((smax, joint.nrows().max(joint.ncols())))
}

fn check_dims(j: &JacobianDecomposition, y: &[f64]) -> Result<()> {
    if j.features() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: j.features(),
            got: y.len(),
        });
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TransversalityVerdict {
    pub is_transversal: bool,
    pub codim: usize,
    pub report: RankReport,
}

pub fn check_transversal_at(
    j: &JacobianDecomposition,
    s: &Stratum,
    y: &[f64],
    opts: &RankOptions,
) -> Result<TransversalityVerdict> {
    check_dims(j, y)?;
    let n = normal_projection(s, y, opts)?;
    let (scale, dims) = joint_scale(j)?;
    let report = rank_with_scale_dims(&(&n * j.joint()), opts.rank_rtol, scale, dims)?;
    Ok(TransversalityVerdict {
        is_transversal: report.numerical_rank == s.codim(),
        codim: s.codim(),
        report,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ComponentwiseVerdict {
    pub theta_only: bool,
    pub lambda_only: bool,
    pub joint: bool,
    pub theta_rank: usize,
    pub lambda_rank: usize,
    pub joint_rank: usize,
    pub codim: usize,
}

/// Whether `π_N Im D_θF`, `π_N Im D_λF`, and their sum span the normal space.
pub fn check_componentwise(
    j: &JacobianDecomposition,
    s: &Stratum,
    y: &[f64],
    opts: &RankOptions,
) -> Result<ComponentwiseVerdict> {
    check_dims(j, y)?;
    let n = normal_projection(s, y, opts)?;
    let (scale, dims) = joint_scale(j)?;
    let rank = |m: &DMatrix<f64>| -> Result<usize> {
        Ok(rank_with_scale_dims(&(&n * m), opts.rank_rtol, scale, dims)?.numerical_rank)
    };
    let theta_rank = rank(&j.d_theta)?;
    let lambda_rank = rank(&j.d_lambda)?;
    let joint_rank = rank(&j.joint())?;
    let c = s.codim();
    Ok(ComponentwiseVerdict {
        theta_only: theta_rank == c,
        lambda_only: lambda_rank == c,
        joint: joint_rank == c,
        theta_rank,
        lambda_rank,
        joint_rank,
        codim: c,
    })
}

/// `rank([D_θ | D_λ]) = K + 1`.
pub fn check_submersion(j: &JacobianDecomposition, opts: &RankOptions) -> Result<(bool, RankReport)> {
    let report = numerical_rank(&j.joint(), opts.rank_rtol)?;
    Ok((report.numerical_rank == j.features(), report))
}

/// `ℓ = rank([D_θ | D_λ]) − rank(D_θ)`, both at the joint tolerance.
pub fn enrichment_gain(j: &JacobianDecomposition, opts: &RankOptions) -> Result<usize> {
    let (scale, dims) = joint_scale(j)?;
    let joint = rank_with_scale_dims(&j.joint(), opts.rank_rtol, scale, dims)?.numerical_rank;
    let theta = rank_with_scale_dims(&j.d_theta, opts.rank_rtol, scale, dims)?.numerical_rank;
    Ok(joint - theta)
}

/// A feature map jointly parameterised by model and kernel parameters.
pub trait JointMap: Sync {
    fn features(&self, theta: &[f64], lambda: &[f64]) -> Result<Vec<f64>>;
    fn jacobian(&self, theta: &[f64], lambda: &[f64]) -> Result<JacobianDecomposition>;
}

#[derive(Clone, Debug)]
pub struct WeakJointMap {
    pub map: WeakMap,
    pub spec: FeatureSpec,
    pub method: JacobianMethod,
}

impl JointMap for WeakJointMap {
    fn features(&self, theta: &[f64], lambda: &[f64]) -> Result<Vec<f64>> {
        Ok(self
            .map
            .with_kernel_params(lambda)?
            .feature_map(theta, &self.spec)?
            .values)
    }

    fn jacobian(&self, theta: &[f64], lambda: &[f64]) -> Result<JacobianDecomposition> {
        self.map
            .with_kernel_params(lambda)?
            .jacobian(theta, &self.spec, self.method)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SweepIndicator {
    /// `rank [D_θ | D_λ] < K + 1`.
    SubmersionFail,
    /// `rank D_θ < p`.
    InfoSingular,
    /// `Φ_λ(θ)` lies within `hit_tol` of the stratum and `π_N D_θ` has rank
    /// below the codimension there.
    StratumHit {
        stratum: Stratum,
        #[serde(default = "default_hit_tol")]
        hit_tol: f64,
    },
}

fn default_hit_tol() -> f64 {
    1e-6
}

impl SweepIndicator {
    pub fn name(&self) -> &'static str {
        match self {
            SweepIndicator::SubmersionFail => "submersion_fail",
            SweepIndicator::InfoSingular => "info_singular",
            SweepIndicator::StratumHit { .. } => "stratum_hit",
        }
    }

    fn fires(&self, map: &impl JointMap, theta: &[f64], lambda: &[f64], opts: &RankOptions) -> Result<bool> {
        let j = map.jacobian(theta, lambda)?;
        let (scale, dims) = joint_scale(&j)?;
        match self {
            SweepIndicator::SubmersionFail => Ok(!check_submersion(&j, opts)?.0),
            SweepIndicator::InfoSingular => {
                let r = rank_with_scale_dims(&j.d_theta, opts.rank_rtol, scale, dims)?;
                Ok(r.numerical_rank < j.p())
            }
            SweepIndicator::StratumHit { stratum, hit_tol } => {
                let y = map.features(theta, lambda)?;
                let g = stratum.level(&y)?;
                if g.iter().any(|v| !(v.abs() <= *hit_tol)) {
                    return Ok(false);
                }
                let local = RankOptions {
                    newton_tol: opts.newton_tol.max(*hit_tol),
                    ..*opts
                };
                let n = normal_projection(stratum, &y, &local)?;
                let r = rank_with_scale_dims(&(&n * &j.d_theta), opts.rank_rtol, scale, dims)?;
                Ok(r.numerical_rank < stratum.codim())
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub lambda: Vec<f64>,
    pub fired: usize,
    pub total: usize,
    pub fraction: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepTable {
    pub indicator: &'static str,
    pub rows: Vec<SweepRow>,
    pub bad_lambdas: Vec<Vec<f64>>,
    /// At most two kernel grid points are bad.
    pub bad_set_isolated: bool,
}

/// Fraction of the θ grid on which `indicator` fires, for each kernel
/// parameter on the grid.
pub fn lambda_sweep(
    map: &impl JointMap,
    lambdas: &[Vec<f64>],
    thetas: &[Vec<f64>],
    indicator: &SweepIndicator,
    opts: &RankOptions,
) -> Result<SweepTable> {
    if lambdas.is_empty() || thetas.is_empty() {
        return Err(Error::InvalidParameter("sweep grids must be nonempty".into()));
    }
    let cells: Vec<(usize, usize)> = (0..lambdas.len())
        .flat_map(|l| (0..thetas.len()).map(move |t| (l, t)))
        .collect();
    let fired = par::map(&cells, |&(l, t)| indicator.fires(map, &thetas[t], &lambdas[l], opts));
    let mut rows = Vec::with_capacity(lambdas.len());
    let mut it = fired.into_iter();
    for lambda in lambdas {
        let mut count = 0;
        for _ in 0..thetas.len() {
            if it.next().expect("one result per cell")? {
                count += 1;
            }
        }
        rows.push(SweepRow {
            lambda: lambda.clone(),
            fired: count,
            total: thetas.len(),
            fraction: count as f64 / thetas.len() as f64,
        });
    }
    let bad_lambdas: Vec<Vec<f64>> = rows.iter().filter(|r| r.fired > 0).map(|r| r.lambda.clone()).collect();
    Ok(SweepTable {
        indicator: indicator.name(),
        bad_set_isolated: bad_lambdas.len() <= 2,
        bad_lambdas,
        rows,
    })
}
