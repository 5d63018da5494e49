//! Degeneracy scans for weak feature maps.
//!
//! Types, by what goes wrong:
//! - 0: the classical moment map is undefined while weak features are finite;
//! - I: two parameters map to the same features (injectivity margin);
//! - II: the weak information `G = D_θΦᵀ D_θΦ` is singular;
//! - III: the classical moment problem is indeterminate (Stieltjes test,
//!   Carleman probe on the kernel-tilted measure);
//! - IV: second-jet rank profile, reported descriptively.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::featuremap::{fd_step, matrix_rows, FeatureSpec, JacobianMethod, WeakMap};
use crate::model::{stieltjes, ModelSpec, Support};
use crate::par;
use crate::transversality::{numerical_rank, rank_with_scale, RankReport};

fn ser_matrix<S: Serializer>(m: &DMatrix<f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
    matrix_rows(m).serialize(s)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Thresholds {
    pub margin_tol: f64,
    pub sigma_tol: f64,
    pub weak_gap: f64,
    pub classical_gap: f64,
    /// Relative rank tolerance for the second-jet stack, whose second block
    /// is a finite difference of the analytic Jacobian.
    pub jet_rtol: f64,
    pub rank_rtol: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            margin_tol: 1e-6,
            sigma_tol: 1e-8,
            weak_gap: 1e-3,
            classical_gap: 1e-8,
            jet_rtol: 1e-7,
            rank_rtol: 1e-10,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct InfoMatrix {
    #[serde(serialize_with = "ser_matrix")]
    pub g: DMatrix<f64>,
    #[serde(serialize_with = "ser_matrix")]
    pub d_theta: DMatrix<f64>,
    pub theta: Vec<f64>,
    pub lambda: Vec<f64>,
    pub spec: FeatureSpec,
}

impl InfoMatrix {
    pub fn det(&self) -> f64 {
        self.g.determinant()
    }

    /// `σ_min(G^{1/2})`, i.e. the smallest singular value of `D_θΦ`.
    pub fn sigma_min(&self) -> Result<f64> {
        let p = self.d_theta.ncols();
        let r = numerical_rank(&self.d_theta, 0.0)?;
        Ok(if r.singular_values.len() < p {
            0.0
        } else {
            r.singular_values[p - 1]
        })
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut ev: Vec<f64> = self.g.clone().symmetric_eigen().eigenvalues.iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        ev
    }
}

/// Weak information matrix from the analytic-score Jacobian.
pub fn weak_info(map: &WeakMap, theta: &[f64], spec: &FeatureSpec) -> Result<InfoMatrix> {
    let j = map.jacobian(theta, spec, JacobianMethod::AnalyticScore)?;
    let g = j.d_theta.transpose() * &j.d_theta;
    Ok(InfoMatrix {
        g,
        d_theta: j.d_theta,
        theta: theta.to_vec(),
        lambda: map.kernel.params(),
        spec: spec.clone(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct InjectivityScan {
    /// Smallest feature distance over pairs at least `delta` apart; `+∞`
    /// (serialised as `null`) when no such pair exists.
    pub margin: f64,
    pub worst_pair: Option<(Vec<f64>, Vec<f64>)>,
    pub delta: f64,
    pub grid_size: usize,
    pub pairs_checked: usize,
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

pub fn injectivity_scan(map: &WeakMap, spec: &FeatureSpec, grid: &[Vec<f64>], delta: f64) -> Result<InjectivityScan> {
    if grid.len() < 2 {
        return Err(Error::InvalidParameter("injectivity scan needs at least two grid points".into()));
    }
    let features: Vec<Vec<f64>> = par::map(grid, |t| map.feature_map(t, spec).map(|f| f.values))
        .into_iter()
        .collect::<Result<_>>()?;
    let mut margin = f64::INFINITY;
    let mut worst = None;
    let mut pairs = 0;
    for i in 0..grid.len() {
        for k in i + 1..grid.len() {
            if dist(&grid[i], &grid[k]) < delta {
                continue;
            }
            pairs += 1;
            let d = dist(&features[i], &features[k]);
            if d < margin {
                margin = d;
                worst = Some((grid[i].clone(), grid[k].clone()));
            }
        }
    }
    Ok(InjectivityScan {
        margin,
        worst_pair: worst,
        delta,
        grid_size: grid.len(),
        pairs_checked: pairs,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct InfoPoint {
    pub theta: Vec<f64>,
    pub det: f64,
    pub sigma_min: f64,
    pub theta_rank: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct InfoRegularity {
    pub min_det: f64,
    pub min_sigma: f64,
    pub argmin_theta: Vec<f64>,
    pub points: Vec<InfoPoint>,
}

pub fn info_regularity_scan(
    map: &WeakMap,
    spec: &FeatureSpec,
    grid: &[Vec<f64>],
    rank_rtol: f64,
) -> Result<InfoRegularity> {
    if grid.is_empty() {
        return Err(Error::InvalidParameter("empty parameter grid".into()));
    }
    let points: Vec<InfoPoint> = par::map(grid, |t| {
        let info = weak_info(map, t, spec)?;
        Ok(InfoPoint {
            theta: t.clone(),
            det: info.det(),
            sigma_min: info.sigma_min()?,
            theta_rank: numerical_rank(&info.d_theta, rank_rtol)?.numerical_rank,
        })
    })
    .into_iter()
    .collect::<Result<_>>()?;
    let arg = points
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.sigma_min.total_cmp(&b.1.sigma_min))
        .map(|(i, _)| i)
        .unwrap_or(0);
    Ok(InfoRegularity {
        min_det: points.iter().map(|p| p.det).fold(f64::INFINITY, f64::min),
        min_sigma: points[arg].sigma_min,
        argmin_theta: points[arg].theta.clone(),
        points,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OrderPair {
    pub theta: Vec<f64>,
    pub orders: (u32, u32),
    /// `|det|` of the row-normalised 2×2 Jacobian block.
    pub abs_det: f64,
}

/// For two-parameter models: the pair of orders whose row-normalised
/// Jacobian block is best conditioned at `theta`.
pub fn best_order_pair(map: &WeakMap, theta: &[f64], orders: &[u32]) -> Result<OrderPair> {
    if map.model.param_dim() != 2 || orders.len() < 2 {
        return Err(Error::InvalidParameter(
            "order-pair scan needs p = 2 and at least two orders".into(),
        ));
    }
    let spec = FeatureSpec::moments(orders.iter().copied());
    let j = map.jacobian(theta, &spec, JacobianMethod::AnalyticScore)?;
    let rows: Vec<[f64; 2]> = (0..orders.len())
        .map(|r| {
            let (a, b) = (j.d_theta[(r, 0)], j.d_theta[(r, 1)]);
            let n = a.hypot(b);
            if n > 0.0 {
                [a / n, b / n]
            } else {
                [0.0, 0.0]
            }
        })
        .collect();
    let mut best = OrderPair {
        theta: theta.to_vec(),
        orders: (orders[0], orders[1]),
        abs_det: -1.0,
    };
    for i in 0..orders.len() {
        for k in i + 1..orders.len() {
            let d = (rows[i][0] * rows[k][1] - rows[i][1] * rows[k][0]).abs();
            if d > best.abs_det {
                best = OrderPair {
                    theta: theta.to_vec(),
                    orders: (orders[i], orders[k]),
                    abs_det: d,
                };
            }
        }
    }
    Ok(best)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StieltjesReport {
    pub eps: f64,
    pub theta: Vec<f64>,
    pub orders: Vec<u32>,
    /// `|m_j(perturbed) − m_j| / m_j`.
    pub classical_gaps: Vec<f64>,
    /// `|w_j(perturbed) − w_j|`.
    pub weak_gaps: Vec<f64>,
    pub classical_coincide: bool,
    pub weak_separate: bool,
}

/// Compares the log-normal with its Stieltjes perturbation, classically and
/// against the kernel of `map`, by integrating the difference density
/// `ε sin(2π ln x) f(x)` directly.
pub fn stieltjes_test(
    map: &WeakMap,
    eps: f64,
    theta: &[f64],
    classical_orders: &[u32],
    weak_orders: &[u32],
    thresholds: &Thresholds,
) -> Result<StieltjesReport> {
    if !(eps.abs() <= 1.0) {
        return Err(Error::InvalidParameter(format!("perturbation size {eps} outside [-1, 1]")));
    }
    let base = WeakMap::new(ModelSpec::Lognormal, map.kernel.clone(), map.quad)?;
    base.model.check_theta(theta)?;
    let diff = |j: u32| move |x: f64| eps * x.powi(j as i32) * stieltjes(x);
    let classical_gaps: Vec<f64> = classical_orders
        .iter()
        .map(|&j| {
            let m = base.model.classical_moment(theta, j)?.value().expect("log-normal moments exist");
            Ok((base.classical_expectation(theta, diff(j))? / m).abs())
        })
        .collect::<Result<_>>()?;
    let weak_gaps: Vec<f64> = weak_orders
        .iter()
        .map(|&j| Ok(base.pair_with(theta, &base.kernel, diff(j))?.abs()))
        .collect::<Result<_>>()?;
    Ok(StieltjesReport {
        eps,
        theta: theta.to_vec(),
        orders: classical_orders.to_vec(),
        classical_coincide: classical_gaps.iter().all(|&g| g < thresholds.classical_gap),
        weak_separate: weak_gaps.iter().fold(0.0_f64, |a, &g| a.max(g)) > thresholds.weak_gap,
        classical_gaps,
        weak_gaps,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CarlemanReport {
    /// Even moments `E_Q[X^{2j}]` of the tilted measure, `j = 1..`.
    pub moments: Vec<f64>,
    pub terms: Vec<f64>,
    pub partial_sums: Vec<f64>,
    /// `min_{j ≥ 2} t_j √j`.
    pub min_scaled_term: f64,
    /// Order at which moments overflowed, if they did.
    pub truncated_at: Option<u32>,
}

/// Moments of `dQ = φ dP / w₀` and the Carleman series terms
/// `t_j = E_Q[X^{2j}]^{−1/(2j)}`.
pub fn carleman_probe(map: &WeakMap, theta: &[f64], j_max: u32) -> Result<CarlemanReport> {
    let w0 = map.weak_moment(theta, 0)?;
    if !(w0 > 0.0) {
        return Err(Error::Singular("tilting mass w0 is not positive".into()));
    }
    let mut moments = Vec::new();
    let mut terms = Vec::new();
    let mut partial_sums = Vec::new();
    let mut truncated_at = None;
    let mut sum = 0.0;
    let mut min_scaled = f64::INFINITY;
    for j in 1..=j_max {
        let m = map.weak_moment(theta, 2 * j)? / w0;
        if !m.is_finite() || m <= 0.0 {
            truncated_at = Some(j);
            break;
        }
        let t = m.powf(-1.0 / (2.0 * j as f64));
        sum += t;
        if j >= 2 {
            min_scaled = min_scaled.min(t * (j as f64).sqrt());
        }
        moments.push(m);
        terms.push(t);
        partial_sums.push(sum);
    }
    Ok(CarlemanReport {
        moments,
        terms,
        partial_sums,
        min_scaled_term: min_scaled,
        truncated_at,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Jet2Report {
    pub theta: Vec<f64>,
    pub first_rank: usize,
    pub second_rank: usize,
    pub report: RankReport,
}

/// Rank of `[DΦ; ∂₁DΦ; …; ∂_pDΦ]`, the second derivatives taken by central
/// differences of `jac`.
pub fn jet2_rank_with(
    jac: impl Fn(&[f64]) -> Result<DMatrix<f64>>,
    theta: &[f64],
    rtol: f64,
) -> Result<Jet2Report> {
    let d1 = jac(theta)?;
    let (k, p) = d1.shape();
    let mut stack = DMatrix::zeros(k * (1 + p), p);
    stack.view_mut((0, 0), (k, p)).copy_from(&d1);
    for b in 0..p {
        let h = fd_step(theta[b]);
        let mut tp = theta.to_vec();
        let mut tm = theta.to_vec();
        tp[b] += h;
        tm[b] -= h;
        let d2 = (jac(&tp)? - jac(&tm)?) / (2.0 * h);
        stack.view_mut((k * (1 + b), 0), (k, p)).copy_from(&d2);
    }
    let report = numerical_rank(&stack, rtol)?;
    let scale = report.singular_values.first().copied().unwrap_or(0.0);
    let first_rank = rank_with_scale(&d1, rtol, scale)?.numerical_rank;
    let second = stack.rows(k, k * p).into_owned();
    let second_rank = rank_with_scale(&second, rtol, scale)?.numerical_rank;
    Ok(Jet2Report {
        theta: theta.to_vec(),
        first_rank,
        second_rank,
        report,
    })
}

pub fn jet2_rank(map: &WeakMap, theta: &[f64], spec: &FeatureSpec, rtol: f64) -> Result<Jet2Report> {
    map.model.check_theta(theta)?;
    jet2_rank_with(
        |t| {
            map.model
                .check_theta(t)
                .map_err(|_| Error::StepFailure("second-jet step leaves the parameter domain".into()))?;
            Ok(map.jacobian(t, spec, JacobianMethod::AnalyticScore)?.d_theta)
        },
        theta,
        rtol,
    )
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Type0 {
    pub undefined_orders: Vec<u32>,
    pub classical_undefined: bool,
    pub weak_finite: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Type1 {
    pub scan: InjectivityScan,
    pub flagged: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Type2 {
    pub min_det: f64,
    pub min_sigma: f64,
    pub argmin_theta: Vec<f64>,
    pub flagged: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Type3 {
    pub classically_indeterminate: bool,
    pub stieltjes: Option<StieltjesReport>,
    pub carleman: Option<CarlemanReport>,
    pub indeterminacy_broken: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Type4 {
    pub profiles: Vec<Jet2Report>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DegeneracyReport {
    pub model: &'static str,
    pub grid: Vec<Vec<f64>>,
    pub delta: f64,
    pub thresholds: Thresholds,
    pub type0: Type0,
    pub type1: Type1,
    pub type2: Type2,
    pub type3: Type3,
    pub type4: Type4,
    pub info_points: Vec<InfoPoint>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifyOptions {
    pub thresholds: Thresholds,
    /// Minimum parameter separation for the injectivity scan.
    pub delta: f64,
    pub carleman_j_max: u32,
    /// Point for the Stieltjes and Carleman checks; the first grid point if absent.
    pub reference_theta: Option<Vec<f64>>,
}

impl Default for ClassifyOptions {
    fn default() -> Self {
        Self {
            thresholds: Thresholds::default(),
            delta: 1e-3,
            carleman_j_max: 20,
            reference_theta: None,
        }
    }
}

pub fn classify(map: &WeakMap, spec: &FeatureSpec, grid: &[Vec<f64>], opts: &ClassifyOptions) -> Result<DegeneracyReport> {
    if grid.is_empty() {
        return Err(Error::InvalidParameter("empty parameter grid".into()));
    }
    let t = &opts.thresholds;
    let reference = opts.reference_theta.clone().unwrap_or_else(|| grid[0].clone());

    let orders: Vec<u32> = match spec {
        FeatureSpec::Moments { orders } => orders.clone(),
        _ => Vec::new(),
    };
    let univariate = !matches!(map.model.support(), Support::RealD(_));
    let undefined_orders: Vec<u32> = if univariate {
        orders
            .iter()
            .copied()
            .filter(|&j| matches!(map.model.classical_moment(&reference, j), Ok(m) if !m.is_defined()))
            .collect()
    } else {
        Vec::new()
    };
    let features: Vec<Vec<f64>> = par::map(grid, |th| map.feature_map(th, spec).map(|f| f.values))
        .into_iter()
        .collect::<Result<_>>()?;
    let type0 = Type0 {
        classical_undefined: !undefined_orders.is_empty(),
        undefined_orders,
        weak_finite: features.iter().flatten().all(|v| v.is_finite()),
    };

    let scan = if grid.len() >= 2 {
        injectivity_scan(map, spec, grid, opts.delta)?
    } else {
        InjectivityScan {
            margin: f64::INFINITY,
            worst_pair: None,
            delta: opts.delta,
            grid_size: grid.len(),
            pairs_checked: 0,
        }
    };
    let type1 = Type1 {
        flagged: scan.margin <= t.margin_tol,
        scan,
    };

    let info = info_regularity_scan(map, spec, grid, t.rank_rtol)?;
    let type2 = Type2 {
        min_det: info.min_det,
        min_sigma: info.min_sigma,
        argmin_theta: info.argmin_theta.clone(),
        flagged: info.min_sigma <= t.sigma_tol,
    };

    let stieltjes_eps = match map.model {
        ModelSpec::Lognormal => Some(0.5),
        ModelSpec::LognormalStieltjes { eps } => Some(eps),
        _ => None,
    };
    let stieltjes = match stieltjes_eps {
        Some(eps) => {
            let weak: Vec<u32> = if orders.is_empty() { (0..=4).collect() } else { orders.clone() };
            Some(stieltjes_test(map, eps, &reference, &(0..=10).collect::<Vec<_>>(), &weak, t)?)
        }
        None => None,
    };
    let carleman = if univariate {
        Some(carleman_probe(map, &reference, opts.carleman_j_max)?)
    } else {
        None
    };
    let classically_indeterminate = stieltjes_eps.is_some() || type0.classical_undefined;
    let carleman_ok = carleman.as_ref().is_none_or(|c| {
        c.truncated_at.is_none() && c.terms.iter().all(|&v| v > 0.0) && c.min_scaled_term > 0.0
    });
    let stieltjes_ok = stieltjes.as_ref().is_none_or(|s| s.weak_separate);
    let type3 = Type3 {
        classically_indeterminate,
        indeterminacy_broken: classically_indeterminate && carleman_ok && stieltjes_ok,
        stieltjes,
        carleman,
    };

    let profiles = par::map(grid, |th| jet2_rank(map, th, spec, t.jet_rtol))
        .into_iter()
        .collect::<Result<_>>()?;

    Ok(DegeneracyReport {
        model: map.model.name(),
        grid: grid.to_vec(),
        delta: opts.delta,
        thresholds: *t,
        type0,
        type1,
        type2,
        type3,
        type4: Type4 { profiles },
        info_points: info.points,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::KernelFamily;
    use crate::quadrature::QuadConfig;

    fn map(model: ModelSpec, s: f64) -> WeakMap {
        WeakMap::new(model, KernelFamily::normalized(s).unwrap(), QuadConfig::default()).unwrap()
    }

    fn lognormal_grid() -> Vec<Vec<f64>> {
        let mut g = Vec::new();
        for i in 0..=4 {
            for k in 0..=3 {
                g.push(vec![-1.0 + 0.5 * i as f64, 0.5 + 0.5 * k as f64]);
            }
        }
        g
    }

    #[test]
    fn weak_info_examples() {
        let loc = map(ModelSpec::GaussianLocation { sigma0: 1.0 }, 1.0);
        let info = weak_info(&loc, &[0.0], &FeatureSpec::moments([0])).unwrap();
        assert!(info.g[(0, 0)].abs() < 1e-30);
        let cauchy = map(ModelSpec::CauchyLocation, 1.0);
        let info = weak_info(&cauchy, &[0.0], &FeatureSpec::moments([0, 1])).unwrap();
        assert!(info.g[(0, 0)] > 0.0);
        let ln = map(ModelSpec::Lognormal, 1.0);
        let info = weak_info(&ln, &[0.3, 0.9], &FeatureSpec::moments(0..=4)).unwrap();
        assert!(info.eigenvalues().iter().all(|&e| e >= -1e-12));
        let gram = info.d_theta.transpose() * &info.d_theta;
        assert!((&info.g - gram).norm() <= 1e-14 * info.g.norm());
    }

    #[test]
    fn det_positive_iff_full_theta_rank() {
        let cases = [
            (ModelSpec::GaussianLocation { sigma0: 1.0 }, vec![0.0], FeatureSpec::moments([0])),
            (ModelSpec::GaussianLocation { sigma0: 1.0 }, vec![0.5], FeatureSpec::moments([0])),
            (ModelSpec::Lognormal, vec![0.0, 1.0], FeatureSpec::moments([0])),
            (ModelSpec::Lognormal, vec![0.0, 1.0], FeatureSpec::moments([1, 2])),
            (ModelSpec::CauchyLocation, vec![0.0], FeatureSpec::moments([0, 1])),
            (ModelSpec::SteinGaussianTarget, vec![0.0, 1.0], FeatureSpec::moments([0, 2])),
        ];
        for (model, theta, spec) in cases {
            let m = map(model, 1.0);
            let info = weak_info(&m, &theta, &spec).unwrap();
            let rank = numerical_rank(&info.d_theta, 1e-10).unwrap().numerical_rank;
            let full = rank == theta.len();
            let det_pos = info.det() > 1e-12 * info.g.norm().powi(theta.len() as i32);
            assert_eq!(full, det_pos, "{} {:?}", m.model.name(), theta);
        }
    }

    #[test]
    fn kernel_rescues_rank_at_symmetric_point() {
        let m = map(ModelSpec::GaussianLocation { sigma0: 1.0 }, 1.0);
        let j = m.jacobian(&[0.0], &FeatureSpec::moments([0]), JacobianMethod::AnalyticScore).unwrap();
        let opts = crate::transversality::RankOptions::default();
        let (submersive, _) = crate::transversality::check_submersion(&j, &opts).unwrap();
        assert!(submersive);
        assert_eq!(crate::transversality::enrichment_gain(&j, &opts).unwrap(), 1);
    }

    #[test]
    fn injectivity_examples() {
        let ln = map(ModelSpec::Lognormal, 1.0);
        let scan = injectivity_scan(&ln, &FeatureSpec::moments(0..=4), &lognormal_grid(), 1e-3).unwrap();
        assert!(scan.margin > 1e-6);
        assert_eq!(scan.pairs_checked, 20 * 19 / 2);

        let loc = map(ModelSpec::GaussianLocation { sigma0: 1.0 }, 1.0);
        let grid = vec![vec![-1.0], vec![0.5], vec![1.0]];
        let scan = injectivity_scan(&loc, &FeatureSpec::moments([0]), &grid, 1e-3).unwrap();
        assert!(scan.margin < 1e-12);
        assert_eq!(scan.worst_pair, Some((vec![-1.0], vec![1.0])));

        let scan = injectivity_scan(&loc, &FeatureSpec::moments([0]), &[vec![0.0], vec![1e-4]], 1e-3).unwrap();
        assert_eq!(scan.margin, f64::INFINITY);
        assert!(injectivity_scan(&loc, &FeatureSpec::moments([0]), &[vec![0.0]], 1e-3).is_err());
    }

    #[test]
    fn info_regularity_examples() {
        let cauchy = map(ModelSpec::CauchyLocation, 1.0);
        let grid: Vec<Vec<f64>> = (0..=100).map(|i| vec![-5.0 + 0.1 * i as f64]).collect();
        let r = info_regularity_scan(&cauchy, &FeatureSpec::moments([0, 1]), &grid, 1e-10).unwrap();
        assert!(r.min_det > 0.0);

        let loc = map(ModelSpec::GaussianLocation { sigma0: 1.0 }, 1.0);
        let zero = FeatureSpec::Custom { polynomials: vec![vec![0.0]] };
        let r = info_regularity_scan(&loc, &zero, &[vec![-1.0], vec![1.0]], 1e-10).unwrap();
        assert_eq!(r.min_det, 0.0);
        assert_eq!(r.min_sigma, 0.0);
    }

    #[test]
    fn lognormal_order_pairs_and_immersion() {
        let ln = map(ModelSpec::Lognormal, 1.0);
        let orders: Vec<u32> = (0..=4).collect();
        for th in lognormal_grid() {
            let best = best_order_pair(&ln, &th, &orders).unwrap();
            assert!(best.abs_det > 1e-10, "{th:?}");
        }
        let r = info_regularity_scan(&ln, &FeatureSpec::moments(0..=4), &lognormal_grid(), 1e-10).unwrap();
        assert!(r.min_sigma > 0.0);
    }

    #[test]
    fn stieltjes_duality() {
        let t = Thresholds::default();
        for s in [0.5, 1.0, 2.0] {
            let m = map(ModelSpec::Lognormal, s);
            let r = stieltjes_test(&m, 0.5, &[0.0, 1.0], &(0..=10).collect::<Vec<_>>(), &[0, 1, 2, 3, 4], &t).unwrap();
            assert!(r.classical_coincide, "{:?}", r.classical_gaps);
            assert!(r.weak_separate, "{:?}", r.weak_gaps);
        }
        let m = map(ModelSpec::Lognormal, 1.0);
        let r = stieltjes_test(&m, 0.0, &[0.0, 1.0], &[0, 1, 2], &[0, 1, 2], &t).unwrap();
        assert!(r.classical_gaps.iter().chain(&r.weak_gaps).all(|&g| g == 0.0));
        assert!(stieltjes_test(&m, 1.5, &[0.0, 1.0], &[0], &[0], &t).is_err());
        let off = stieltjes_test(&m, 0.5, &[0.0, 0.5], &[1], &[1], &t).unwrap();
        assert!(!off.classical_coincide);
    }

    #[test]
    fn carleman_on_tilted_lognormal() {
        let m = map(ModelSpec::Lognormal, 1.0);
        let r = carleman_probe(&m, &[0.0, 1.0], 20).unwrap();
        assert_eq!(r.terms.len(), 20);
        assert!(r.truncated_at.is_none());
        assert!(r.terms.iter().all(|&t| t > 0.0));
        assert!(r.partial_sums.windows(2).all(|w| w[1] > w[0]));
        assert!(r.min_scaled_term >= 0.1, "{}", r.min_scaled_term);
    }

    #[test]
    fn jet2_of_affine_map_has_zero_second_block() {
        let a = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 0.0, 1.0, 3.0, -1.0]);
        let r = jet2_rank_with(|_| Ok(a.clone()), &[0.3, -0.2], 1e-7).unwrap();
        assert_eq!(r.second_rank, 0);
        assert_eq!(r.report.numerical_rank, 2);
        assert_eq!(r.first_rank, 2);
    }

    #[test]
    fn jet2_lognormal_full_rank() {
        let ln = map(ModelSpec::Lognormal, 1.0);
        for th in lognormal_grid() {
            let r = jet2_rank(&ln, &th, &FeatureSpec::moments(0..=4), 1e-7).unwrap();
            assert_eq!(r.report.numerical_rank, 2);
        }
    }

    #[test]
    fn jet2_graphical_profiles() {
        for model in [ModelSpec::four_cycle(), ModelSpec::four_path()] {
            let m = WeakMap::new(model.clone(), KernelFamily::gaussian(1.0, 4, true).unwrap(), QuadConfig::default()).unwrap();
            let mut theta = vec![2.0; 4];
            theta.extend(std::iter::repeat_n(0.4, model.param_dim() - 4));
            let r = jet2_rank(&m, &theta, &FeatureSpec::moments(0..=2), 1e-7).unwrap();
            assert!(r.report.numerical_rank <= model.param_dim());
            assert!(r.first_rank >= 1);
        }
    }

    #[test]
    fn classify_cauchy() {
        let m = map(ModelSpec::CauchyLocation, 1.0);
        let grid: Vec<Vec<f64>> = (0..=10).map(|i| vec![-5.0 + i as f64]).collect();
        let r = classify(&m, &FeatureSpec::moments(0..=3), &grid, &ClassifyOptions::default()).unwrap();
        assert!(r.type0.classical_undefined);
        assert_eq!(r.type0.undefined_orders, vec![1, 2, 3]);
        assert!(r.type0.weak_finite);
        assert!(r.type3.classically_indeterminate);
        assert!(r.type3.indeterminacy_broken);
        assert!(!r.type2.flagged);
    }

    #[test]
    fn classify_gaussian_location_rich_spec_is_clean() {
        let m = map(ModelSpec::GaussianLocation { sigma0: 1.0 }, 1.0);
        let grid: Vec<Vec<f64>> = (0..=8).map(|i| vec![-2.0 + 0.5 * i as f64]).collect();
        let r = classify(&m, &FeatureSpec::moments(0..=3), &grid, &ClassifyOptions::default()).unwrap();
        assert!(!r.type0.classical_undefined);
        assert!(!r.type1.flagged);
        assert!(!r.type2.flagged);
        assert!(!r.type3.classically_indeterminate);
    }

    #[test]
    fn classify_zero_feature_flags_type2() {
        let m = map(ModelSpec::GaussianLocation { sigma0: 1.0 }, 1.0);
        let spec = FeatureSpec::Custom { polynomials: vec![vec![0.0]] };
        let r = classify(&m, &spec, &[vec![0.0], vec![1.0]], &ClassifyOptions::default()).unwrap();
        assert!(r.type2.flagged);
        assert_eq!(r.type2.min_det, 0.0);
        assert!(r.type1.flagged);
    }

    #[test]
    fn classify_lognormal_breaks_indeterminacy() {
        // the perturbation is classically invisible only where μ + jσ² ∈ Z for all j
        let m = map(ModelSpec::LognormalStieltjes { eps: 0.5 }, 1.0);
        let opts = ClassifyOptions {
            reference_theta: Some(vec![0.0, 1.0]),
            ..Default::default()
        };
        let r = classify(&m, &FeatureSpec::moments(0..=4), &lognormal_grid(), &opts).unwrap();
        let st = r.type3.stieltjes.as_ref().unwrap();
        assert!(st.classical_coincide && st.weak_separate);
        assert!(r.type3.indeterminacy_broken);
        assert!(!r.type2.flagged);
    }
}
