//! Scenario files: what to analyse and on which grids.

use serde::{Deserialize, Serialize};
use weaktrans_core::behrens_fisher::BfConfig;
use weaktrans_core::degeneracy::ClassifyOptions;
use weaktrans_core::featuremap::{FeatureSpec, JacobianMethod};
use weaktrans_core::kernel::KernelFamily;
use weaktrans_core::model::ModelSpec;
use weaktrans_core::quadrature::QuadConfig;
use weaktrans_core::stein::Dictionary;
use weaktrans_core::transversality::{RankOptions, Stratum, SweepIndicator};

use crate::CliError;

/// Either explicit values or an evenly spaced range (endpoints included).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Axis {
    Values(Vec<f64>),
    Range { start: f64, stop: f64, num: usize },
}

impl Axis {
    pub fn values(&self) -> Result<Vec<f64>, CliError> {
        match self {
            Axis::Values(v) => Ok(v.clone()),
            &Axis::Range { start, stop, num } => {
                if num == 0 || !start.is_finite() || !stop.is_finite() {
                    return Err(CliError::Validation(format!(
                        "range axis needs num >= 1 and finite ends, got {start}..{stop} ({num})"
                    )));
                }
                if num == 1 {
                    return Ok(vec![start]);
                }
                let step = (stop - start) / (num - 1) as f64;
                Ok((0..num)
                    .map(|i| if i == num - 1 { stop } else { start + step * i as f64 })
                    .collect())
            }
        }
    }
}

/// Parameter grid: explicit points or the product of per-coordinate axes
/// (first axis varies slowest).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ThetaGrid {
    Points(Vec<Vec<f64>>),
    Axes { axes: Vec<Axis> },
}

impl ThetaGrid {
    pub fn points(&self) -> Result<Vec<Vec<f64>>, CliError> {
        match self {
            ThetaGrid::Points(p) => Ok(p.clone()),
            ThetaGrid::Axes { axes } => {
                let mut out: Vec<Vec<f64>> = vec![Vec::new()];
                for axis in axes {
                    let vals = axis.values()?;
                    out = out
                        .iter()
                        .flat_map(|prefix| {
                            vals.iter().map(move |&v| {
                                let mut p = prefix.clone();
                                p.push(v);
                                p
                            })
                        })
                        .collect();
                }
                Ok(out)
            }
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grids {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<ThetaGrid>,
    /// Kernel scales.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<Axis>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransversalityBlock {
    pub stratum: Stratum,
    /// Replaces the values of a coordinate stratum by the features at this
    /// parameter, so the stratum passes through `Φ(anchor_theta)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub anchor_theta: Option<Vec<f64>>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepBlock {
    pub indicator: SweepIndicator,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Candidate {
    pub model: ModelSpec,
    pub theta: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SteinBlock {
    pub target: Vec<f64>,
    pub dictionary: Dictionary,
    pub candidates: Vec<Candidate>,
    pub zero_set: Vec<Vec<f64>>,
}

fn analytic() -> JacobianMethod {
    JacobianMethod::AnalyticScore
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernel: Option<KernelFamily>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub features: Option<FeatureSpec>,
    #[serde(default)]
    pub quadrature: QuadConfig,
    #[serde(default)]
    pub grids: Grids,
    #[serde(default = "analytic")]
    pub jacobian_method: JacobianMethod,
    #[serde(default)]
    pub rank: RankOptions,
    #[serde(default)]
    pub classify: ClassifyOptions,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transversality: Option<TransversalityBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stein: Option<SteinBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub behrens_fisher: Option<BfConfig>,
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let mut s: Scenario =
            serde_json::from_str(text).map_err(|e| CliError::Validation(format!("scenario: {e}")))?;
        s.resolve()?;
        s.validate()?;
        Ok(s)
    }

    /// Expands ranges into explicit values so reports carry the exact grids.
    fn resolve(&mut self) -> Result<(), CliError> {
        if let Some(t) = &self.grids.theta {
            self.grids.theta = Some(ThetaGrid::Points(t.points()?));
        }
        if let Some(l) = &self.grids.lambda {
            self.grids.lambda = Some(Axis::Values(l.values()?));
        }
        Ok(())
    }

    fn validate(&self) -> Result<(), CliError> {
        if let Some(m) = &self.model {
            m.validate()?;
            for t in self.theta_points_opt()? {
                m.check_theta(&t)?;
            }
        }
        if let Some(k) = &self.kernel {
            k.validate()?;
        }
        if let Some(f) = &self.features {
            f.validate()?;
        }
        self.quadrature
            .validate()
            .map_err(|e| CliError::Validation(e.to_string()))?;
        for s in self.lambda_values_opt()? {
            if !(s > 0.0 && s.is_finite()) {
                return Err(CliError::Validation(format!("kernel scale {s} in lambda grid")));
            }
        }
        if let Some(bf) = &self.behrens_fisher {
            bf.validate()?;
        }
        Ok(())
    }

    fn theta_points_opt(&self) -> Result<Vec<Vec<f64>>, CliError> {
        self.grids.theta.as_ref().map_or(Ok(Vec::new()), |g| g.points())
    }

    fn lambda_values_opt(&self) -> Result<Vec<f64>, CliError> {
        self.grids.lambda.as_ref().map_or(Ok(Vec::new()), |a| a.values())
    }

    pub fn require<'a, T>(field: &'a Option<T>, name: &str) -> Result<&'a T, CliError> {
        field
            .as_ref()
            .ok_or_else(|| CliError::Validation(format!("scenario is missing `{name}`")))
    }

    pub fn theta_points(&self) -> Result<Vec<Vec<f64>>, CliError> {
        let pts = Self::require(&self.grids.theta, "grids.theta")?.points()?;
        if pts.is_empty() {
            return Err(CliError::Validation("grids.theta is empty".into()));
        }
        Ok(pts)
    }

    /// Kernel scales of the lambda grid, or the scenario kernel's scale.
    pub fn lambda_values(&self) -> Result<Vec<f64>, CliError> {
        match &self.grids.lambda {
            Some(a) => {
                let v = a.values()?;
                if v.is_empty() {
                    return Err(CliError::Validation("grids.lambda is empty".into()));
                }
                Ok(v)
            }
            None => Ok(vec![Self::require(&self.kernel, "kernel")?.s]),
        }
    }
}
