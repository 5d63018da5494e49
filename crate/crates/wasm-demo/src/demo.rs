//! Plain Rust backing for the browser exports, testable natively.

use weaktrans_core::behrens_fisher::{tradeoff_table, BfConfig};
use weaktrans_core::degeneracy::{stieltjes_test, Thresholds};
use weaktrans_core::featuremap::WeakMap;
use weaktrans_core::kernel::KernelFamily;
use weaktrans_core::model::ModelSpec;
use weaktrans_core::quadrature::QuadConfig;
use weaktrans_core::{Error, Result};

pub fn parse_model(name: &str) -> Result<ModelSpec> {
    match name {
        "gaussian_location" => Ok(ModelSpec::GaussianLocation { sigma0: 1.0 }),
        "cauchy_location" => Ok(ModelSpec::CauchyLocation),
        "lognormal" => Ok(ModelSpec::Lognormal),
        other => Err(Error::InvalidParameter(format!("unknown model `{other}`"))),
    }
}

/// `n` points spaced evenly in `ln s` on `[lo, hi]`.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Result<Vec<f64>> {
    if !(lo > 0.0 && hi > lo && hi.is_finite()) || n < 2 {
        return Err(Error::InvalidParameter(format!("scale range [{lo}, {hi}] with {n} points")));
    }
    let (a, b) = (lo.ln(), hi.ln());
    Ok((0..n)
        .map(|i| match i {
            0 => lo,
            _ if i == n - 1 => hi,
            _ => (a + (b - a) * i as f64 / (n - 1) as f64).exp(),
        })
        .collect())
}

/// Weak moment of order `j` along a log-spaced kernel-scale grid, as
/// interleaved `[s, w_j(s)]` pairs.
pub fn weak_moment_curve(model: &str, theta: &[f64], j: u32, s_lo: f64, s_hi: f64, n: usize) -> Result<Vec<f64>> {
    let model = parse_model(model)?;
    let base = WeakMap::new(model, KernelFamily::normalized(1.0)?, QuadConfig::default())?;
    let mut out = Vec::with_capacity(2 * n);
    for s in log_grid(s_lo, s_hi, n)? {
        let m = base.with_kernel(base.kernel.with_scale(s)?);
        out.push(s);
        out.push(m.weak_moment(theta, j)?);
    }
    Ok(out)
}

/// Rows `[s, sup_nuisance_gap, signal_gap, ratio]`, flattened, on a
/// log-spaced grid of kernel scales.
pub fn behrens_fisher_rows(
    mu1: f64,
    mu2: f64,
    sigma1: f64,
    sigma2: f64,
    sigma_lo: f64,
    sigma_hi: f64,
    s_hi: f64,
) -> Result<Vec<f64>> {
    if !(sigma_lo > 0.0 && sigma_hi >= sigma_lo) {
        return Err(Error::InvalidParameter("nuisance range must be positive and ordered".into()));
    }
    let cfg = BfConfig {
        mu1,
        mu2,
        sigma1,
        sigma2,
        s_grid: log_grid(0.5, s_hi, 24)?,
        sigma_grid: (0..=15)
            .map(|i| sigma_lo + (sigma_hi - sigma_lo) * i as f64 / 15.0)
            .collect(),
    };
    let report = tradeoff_table(&cfg)?;
    Ok(report
        .rows
        .iter()
        .flat_map(|r| [r.s, r.sup_nuisance_gap, r.signal_gap, r.ratio])
        .collect())
}

/// Classical relative gaps for orders 0..=10 followed by weak gaps for
/// orders 0..=4, between the log-normal at `(0, 1)` and its perturbation.
pub fn stieltjes_gaps(eps: f64, s: f64) -> Result<Vec<f64>> {
    let map = WeakMap::new(ModelSpec::Lognormal, KernelFamily::normalized(s)?, QuadConfig::default())?;
    let classical: Vec<u32> = (0..=10).collect();
    let weak: Vec<u32> = (0..=4).collect();
    let r = stieltjes_test(&map, eps, &[0.0, 1.0], &classical, &weak, &Thresholds::default())?;
    Ok(r.classical_gaps.into_iter().chain(r.weak_gaps).collect())
}
