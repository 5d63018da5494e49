//! Two-sample Gaussian comparison through zeroth weak moments.
//!
//! For `X ~ N(μ, σ²)` and the normalized kernel `φ_s`,
//! `w₀ = (2π(σ² + s²))^{-1/2} exp(−μ²/(2(σ² + s²)))`, so `(μ, σ)` enter only
//! through `μ` and `σ² + s²`. As `s` grows the variance nuisance fades from
//! `Δw₀`, and so does the mean signal.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BfConfig {
    pub mu1: f64,
    pub mu2: f64,
    pub sigma1: f64,
    pub sigma2: f64,
    pub s_grid: Vec<f64>,
    pub sigma_grid: Vec<f64>,
}

impl BfConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.mu1.is_finite() && self.mu2.is_finite()) {
            return Err(Error::InvalidParameter("means must be finite".into()));
        }
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !positive(self.sigma1) || !positive(self.sigma2) {
            return Err(Error::InvalidParameter("standard deviations must be positive".into()));
        }
        if self.s_grid.is_empty() || self.sigma_grid.is_empty() {
            return Err(Error::InvalidParameter("grids must be nonempty".into()));
        }
        if !self.s_grid.iter().chain(&self.sigma_grid).all(|&v| positive(v)) {
            return Err(Error::InvalidParameter("grid scales must be positive".into()));
        }
        Ok(())
    }

    /// Variance ratio `σ₁²/σ₂²`.
    pub fn rho(&self) -> f64 {
        (self.sigma1 / self.sigma2).powi(2)
    }
}

fn check_scales(sigma: f64, s: f64) -> Result<()> {
    if !(sigma > 0.0 && s > 0.0 && sigma.is_finite() && s.is_finite()) {
        return Err(Error::InvalidParameter(format!("σ = {sigma}, s = {s} must be positive")));
    }
    Ok(())
}

/// Zeroth weak moment of `N(μ, σ²)` against the normalized kernel of scale `s`.
pub fn w0_closed_form(mu: f64, sigma: f64, s: f64) -> Result<f64> {
    check_scales(sigma, s)?;
    let v = sigma * sigma + s * s;
    Ok((2.0 * PI * v).powf(-0.5) * (-mu * mu / (2.0 * v)).exp())
}

/// The same expression without the `(2π)^{-1/2}` factor; kept for comparison.
pub fn w0_printed(mu: f64, sigma: f64, s: f64) -> Result<f64> {
    check_scales(sigma, s)?;
    let v = sigma * sigma + s * s;
    Ok(v.powf(-0.5) * (-mu * mu / (2.0 * v)).exp())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NuisanceRow {
    pub s: f64,
    pub sup_gap: f64,
    pub argsup: (f64, f64),
}

/// For each `s`: `sup |w₀(μ, σa, s) − w₀(μ, σb, s)|` over the nuisance grid,
/// with the common mean `μ₁`.
pub fn nuisance_sensitivity(cfg: &BfConfig) -> Result<Vec<NuisanceRow>> {
    cfg.validate()?;
    let mu = cfg.mu1;
    cfg.s_grid
        .iter()
        .map(|&s| {
            let w: Vec<f64> = cfg
                .sigma_grid
                .iter()
                .map(|&sg| w0_closed_form(mu, sg, s))
                .collect::<Result<_>>()?;
            let mut best = NuisanceRow {
                s,
                sup_gap: 0.0,
                argsup: (cfg.sigma_grid[0], cfg.sigma_grid[0]),
            };
            for (i, a) in w.iter().enumerate() {
                for (k, b) in w.iter().enumerate().skip(i + 1) {
                    let gap = (a - b).abs();
                    if gap > best.sup_gap {
                        best.sup_gap = gap;
                        best.argsup = (cfg.sigma_grid[i], cfg.sigma_grid[k]);
                    }
                }
            }
            Ok(best)
        })
        .collect()
}

/// `|w₀(μ₁, σ₁, s) − w₀(μ₂, σ₂, s)|` for each `s`.
pub fn power_proxy(cfg: &BfConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    if cfg.mu1 == cfg.mu2 {
        return Err(Error::InvalidParameter("the alternative needs μ₁ ≠ μ₂".into()));
    }
    cfg.s_grid
        .iter()
        .map(|&s| Ok((w0_closed_form(cfg.mu1, cfg.sigma1, s)? - w0_closed_form(cfg.mu2, cfg.sigma2, s)?).abs()))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TradeoffRow {
    pub s: f64,
    pub sup_nuisance_gap: f64,
    pub signal_gap: f64,
    /// `signal_gap / sup_nuisance_gap`; infinite when the nuisance grid has a single value.
    pub ratio: f64,
    pub w0_pop1: f64,
    pub w0_pop2: f64,
    pub w0_printed_pop1: f64,
    pub w0_printed_pop2: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BfReport {
    pub rho: f64,
    /// `w0_printed / w0_closed_form`, the same for every argument.
    pub printed_to_closed_ratio: f64,
    pub rows: Vec<TradeoffRow>,
}

pub fn tradeoff_table(cfg: &BfConfig) -> Result<BfReport> {
    let nuisance = nuisance_sensitivity(cfg)?;
    let signal = power_proxy(cfg)?;
    let rows = nuisance
        .iter()
        .zip(&signal)
        .map(|(n, &sig)| {
            Ok(TradeoffRow {
                s: n.s,
                sup_nuisance_gap: n.sup_gap,
                signal_gap: sig,
                ratio: sig / n.sup_gap,
                w0_pop1: w0_closed_form(cfg.mu1, cfg.sigma1, n.s)?,
                w0_pop2: w0_closed_form(cfg.mu2, cfg.sigma2, n.s)?,
                w0_printed_pop1: w0_printed(cfg.mu1, cfg.sigma1, n.s)?,
                w0_printed_pop2: w0_printed(cfg.mu2, cfg.sigma2, n.s)?,
            })
        })
        .collect::<Result<_>>()?;
    Ok(BfReport {
        rho: cfg.rho(),
        printed_to_closed_ratio: (2.0 * PI).sqrt(),
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::featuremap::WeakMap;
    use crate::kernel::KernelFamily;
    use crate::model::ModelSpec;
    use crate::quadrature::QuadConfig;

    fn cfg() -> BfConfig {
        BfConfig {
            mu1: 0.0,
            mu2: 1.0,
            sigma1: 1.0,
            sigma2: 1.0,
            s_grid: vec![1.0, 2.0, 5.0, 10.0, 50.0, 100.0],
            sigma_grid: (0..=15).map(|i| 0.5 + 0.1 * i as f64).collect(),
        }
    }

    #[test]
    fn closed_form_example() {
        assert!((w0_closed_form(0.0, 1.0, 1.0).unwrap() - (4.0 * PI).powf(-0.5)).abs() < 1e-15);
        assert!(w0_closed_form(0.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn closed_form_matches_quadrature() {
        for &mu in &[-2.0, 0.0, 0.7, 3.0] {
            for &sigma in &[0.5, 1.0, 2.0] {
                for &s in &[0.5, 1.0, 3.0, 10.0] {
                    let m = WeakMap::new(
                        ModelSpec::GaussianLocation { sigma0: sigma },
                        KernelFamily::normalized(s).unwrap(),
                        QuadConfig::default(),
                    )
                    .unwrap();
                    let q = m.weak_moment(&[mu], 0).unwrap();
                    let c = w0_closed_form(mu, sigma, s).unwrap();
                    assert!((q - c).abs() <= 1e-10, "μ={mu} σ={sigma} s={s}: {q} vs {c}");
                }
            }
        }
    }

    #[test]
    fn monotone_in_mean() {
        let mut prev = f64::INFINITY;
        for i in 0..50 {
            let w = w0_closed_form(0.5 * i as f64, 1.0, 1.0).unwrap();
            assert!(w < prev);
            prev = w;
        }
        assert!(prev < 1e-60);
    }

    #[test]
    fn coupling_through_total_variance() {
        for &(s1, sg1, s2) in &[(1.0, 2.0, 2.0), (0.5, 3.0, 1.5), (4.0, 1.0, 2.0)] {
            let total: f64 = s1 * s1 + sg1 * sg1;
            let sg2 = (total - s2 * s2).sqrt();
            let a = w0_closed_form(0.8, sg1, s1).unwrap();
            let b = w0_closed_form(0.8, sg2, s2).unwrap();
            assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn nuisance_vanishes_with_scale() {
        let rows = nuisance_sensitivity(&cfg()).unwrap();
        assert!(rows.windows(2).all(|w| w[1].sup_gap < w[0].sup_gap));
        assert!(rows.last().unwrap().sup_gap < 1e-6);
        let single = BfConfig {
            sigma_grid: vec![1.0],
            ..cfg()
        };
        assert!(nuisance_sensitivity(&single).unwrap().iter().all(|r| r.sup_gap == 0.0));
    }

    #[test]
    fn equal_populations_have_no_gap() {
        for &s in &[0.5, 1.0, 10.0] {
            assert_eq!(
                w0_closed_form(0.3, 1.4, s).unwrap() - w0_closed_form(0.3, 1.4, s).unwrap(),
                0.0
            );
        }
    }

    #[test]
    fn signal_shrinks_but_stays_positive() {
        let sig = power_proxy(&cfg()).unwrap();
        assert!(sig.iter().all(|&v| v > 0.0));
        assert!(power_proxy(&BfConfig {
            s_grid: vec![1e6],
            ..cfg()
        })
        .unwrap()[0]
            < 1e-12);
        let table = tradeoff_table(&cfg()).unwrap();
        assert!(table.rows.iter().all(|r| r.ratio.is_finite() && r.ratio > 0.0));
        assert!((table.printed_to_closed_ratio - table.rows[0].w0_printed_pop1 / table.rows[0].w0_pop1).abs() < 1e-12);
        assert!(power_proxy(&BfConfig { mu2: 0.0, ..cfg() }).is_err());
    }
}
