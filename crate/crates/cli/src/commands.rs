//! The analyses behind each subcommand.

use serde::Serialize;
use serde_json::{json, Value};
use weaktrans_core::behrens_fisher::{nuisance_sensitivity, tradeoff_table};
use weaktrans_core::degeneracy::classify;
use weaktrans_core::featuremap::{matrix_rows, FeatureSpec, WeakMap};
use weaktrans_core::stein::SteinSpec;
use weaktrans_core::transversality::{
    check_componentwise, check_submersion, check_transversal_at, enrichment_gain, lambda_sweep, RankReport, Stratum,
    WeakJointMap,
};

use crate::{num, CliError, Report, Scenario, Table};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Features,
    Jacobian,
    Transversality,
    Classify,
    Sweep,
    Stein,
    BehrensFisher,
}

impl Command {
    pub const ALL: [Command; 7] = [
        Command::Features,
        Command::Jacobian,
        Command::Transversality,
        Command::Classify,
        Command::Sweep,
        Command::Stein,
        Command::BehrensFisher,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Command::Features => "features",
            Command::Jacobian => "jacobian",
            Command::Transversality => "transversality",
            Command::Classify => "classify",
            Command::Sweep => "sweep",
            Command::Stein => "stein",
            Command::BehrensFisher => "behrens-fisher",
        }
    }

    pub fn parse(name: &str) -> Result<Self, CliError> {
        Self::ALL
            .into_iter()
            .find(|c| c.name() == name)
            .ok_or_else(|| CliError::UnknownCommand(name.to_string()))
    }
}

pub fn execute(cmd: Command, sc: &Scenario) -> Result<Report, CliError> {
    match cmd {
        Command::Features => features(sc),
        Command::Jacobian => jacobian(sc),
        Command::Transversality => transversality(sc),
        Command::Classify => classify_cmd(sc),
        Command::Sweep => sweep(sc),
        Command::Stein => stein(sc),
        Command::BehrensFisher => behrens_fisher(sc),
    }
}

fn to_value<T: Serialize>(v: &T) -> Result<Value, CliError> {
    serde_json::to_value(v).map_err(|e| CliError::Io(e.to_string()))
}

fn base_map(sc: &Scenario) -> Result<(WeakMap, &FeatureSpec), CliError> {
    let model = Scenario::require(&sc.model, "model")?.clone();
    let kernel = Scenario::require(&sc.kernel, "kernel")?.clone();
    let spec = Scenario::require(&sc.features, "features")?;
    Ok((WeakMap::new(model, kernel, sc.quadrature)?, spec))
}

fn theta_header(p: usize) -> Vec<String> {
    (0..p).map(|i| format!("theta_{i}")).collect()
}

fn theta_cells(theta: &[f64]) -> Vec<String> {
    theta.iter().map(|&v| num(v)).collect()
}

fn flag(b: bool) -> String {
    b.to_string()
}

/// Maps at every kernel scale of the lambda grid.
fn scaled_maps(sc: &Scenario, base: &WeakMap) -> Result<Vec<(f64, WeakMap)>, CliError> {
    sc.lambda_values()?
        .into_iter()
        .map(|s| Ok((s, base.with_kernel(base.kernel.with_scale(s)?))))
        .collect()
}

fn features(sc: &Scenario) -> Result<Report, CliError> {
    let (base, spec) = base_map(sc)?;
    let thetas = sc.theta_points()?;
    let k = spec.feature_count(&base.model)?;
    let p = thetas[0].len();
    let mut header = theta_header(p);
    header.push("s".into());
    header.extend((0..k).map(|i| format!("f_{i}")));
    let mut table = Table::new(header);
    let mut rows = Vec::new();
    for (s, map) in scaled_maps(sc, &base)? {
        for theta in &thetas {
            let fv = map.feature_map(theta, spec)?;
            let mut row = theta_cells(theta);
            row.push(num(s));
            row.extend(fv.values.iter().map(|&v| num(v)));
            table.push(row);
            rows.push(json!({"theta": theta, "s": s, "values": fv.values}));
        }
    }
    Ok(Report {
        result: json!({ "feature_count": k, "rows": rows }),
        table,
    })
}

fn jacobian(sc: &Scenario) -> Result<Report, CliError> {
    let (base, spec) = base_map(sc)?;
    let thetas = sc.theta_points()?;
    let p = thetas[0].len();
    let q = base.kernel.param_count();
    let mut header = theta_header(p);
    header.push("s".into());
    header.push("feature".into());
    header.extend((0..p).map(|i| format!("d_theta_{i}")));
    header.extend((0..q).map(|i| format!("d_lambda_{i}")));
    let mut table = Table::new(header);
    let mut rows = Vec::new();
    for (s, map) in scaled_maps(sc, &base)? {
        for theta in &thetas {
            let j = map.jacobian(theta, spec, sc.jacobian_method)?;
            let dt = matrix_rows(&j.d_theta);
            let dl = matrix_rows(&j.d_lambda);
            for (i, (a, b)) in dt.iter().zip(&dl).enumerate() {
                let mut row = theta_cells(theta);
                row.push(num(s));
                row.push(i.to_string());
                row.extend(a.iter().chain(b).map(|&v| num(v)));
                table.push(row);
            }
            rows.push(json!({"theta": theta, "s": s, "jacobian": to_value(&j)?}));
        }
    }
    Ok(Report {
        result: json!({ "method": sc.jacobian_method, "rows": rows }),
        table,
    })
}

#[derive(Serialize)]
struct TransversalityPoint {
    theta: Vec<f64>,
    s: f64,
    residual: f64,
    on_stratum: bool,
    /// `None` off the stratum, where the condition holds vacuously.
    transversal: Option<bool>,
    theta_only: Option<bool>,
    lambda_only: Option<bool>,
    normal_rank: Option<RankReport>,
    /// The level map is rank deficient here, so the stratum is not a manifold.
    degenerate_stratum: bool,
    submersion: bool,
    joint_rank: usize,
    enrichment_gain: usize,
}

fn transversality(sc: &Scenario) -> Result<Report, CliError> {
    let (base, spec) = base_map(sc)?;
    let block = Scenario::require(&sc.transversality, "transversality")?;
    let thetas = sc.theta_points()?;
    let opts = &sc.rank;
    let mut points = Vec::new();
    let mut strata = Vec::new();
    for (s, map) in scaled_maps(sc, &base)? {
        let stratum = match (&block.stratum, &block.anchor_theta) {
            (Stratum::Coordinate { indices, .. }, Some(anchor)) => {
                let y = map.feature_map(anchor, spec)?.values;
                let values = indices
                    .iter()
                    .map(|&i| {
                        y.get(i).copied().ok_or(weaktrans_core::Error::IndexOutOfRange {
                            index: i,
                            dim: y.len(),
                        })
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                Stratum::coordinate(indices.clone(), values)?
            }
            (_, Some(_)) => {
                return Err(CliError::Validation(
                    "anchor_theta only applies to coordinate strata".into(),
                ))
            }
            (st, None) => st.clone(),
        };
        stratum.validate(Some(spec.feature_count(&base.model)?))?;
        for theta in &thetas {
            let y = map.feature_map(theta, spec)?.values;
            let j = map.jacobian(theta, spec, sc.jacobian_method)?;
            let residual = stratum.level(&y)?.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
            let on_stratum = residual <= opts.newton_tol;
            let (submersion, joint) = check_submersion(&j, opts)?;
            let mut pt = TransversalityPoint {
                theta: theta.clone(),
                s,
                residual,
                on_stratum,
                transversal: None,
                theta_only: None,
                lambda_only: None,
                normal_rank: None,
                degenerate_stratum: false,
                submersion,
                joint_rank: joint.numerical_rank,
                enrichment_gain: enrichment_gain(&j, opts)?,
            };
            if on_stratum {
                match check_transversal_at(&j, &stratum, &y, opts) {
                    Ok(v) => {
                        let c = check_componentwise(&j, &stratum, &y, opts)?;
                        pt.transversal = Some(v.is_transversal);
                        pt.theta_only = Some(c.theta_only);
                        pt.lambda_only = Some(c.lambda_only);
                        pt.normal_rank = Some(v.report);
                    }
                    Err(weaktrans_core::Error::DegenerateStratum { .. }) => pt.degenerate_stratum = true,
                    Err(e) => return Err(e.into()),
                }
            }
            points.push(pt);
        }
        strata.push(json!({"s": s, "stratum": to_value(&stratum)?}));
    }

    let p = thetas[0].len();
    let mut header = theta_header(p);
    header.extend(
        [
            "s",
            "residual",
            "on_stratum",
            "transversal",
            "theta_only",
            "lambda_only",
            "degenerate_stratum",
            "submersion",
            "joint_rank",
            "enrichment_gain",
            "marginal",
        ]
        .map(String::from),
    );
    let mut table = Table::new(header);
    let opt = |b: Option<bool>| b.map(flag).unwrap_or_default();
    for pt in &points {
        let mut row = theta_cells(&pt.theta);
        row.extend([
            num(pt.s),
            num(pt.residual),
            flag(pt.on_stratum),
            opt(pt.transversal),
            opt(pt.theta_only),
            opt(pt.lambda_only),
            flag(pt.degenerate_stratum),
            flag(pt.submersion),
            pt.joint_rank.to_string(),
            pt.enrichment_gain.to_string(),
            opt(pt.normal_rank.as_ref().map(|r| r.marginal)),
        ]);
        table.push(row);
    }
    let on = points.iter().filter(|p| p.on_stratum).count();
    let failures = points.iter().filter(|p| p.transversal == Some(false)).count();
    Ok(Report {
        result: json!({
            "strata": strata,
            "on_stratum_points": on,
            "transversality_failures": failures,
            "points": to_value(&points)?,
        }),
        table,
    })
}

fn classify_cmd(sc: &Scenario) -> Result<Report, CliError> {
    let (map, spec) = base_map(sc)?;
    let thetas = sc.theta_points()?;
    let report = classify(&map, spec, &thetas, &sc.classify)?;
    let p = thetas[0].len();
    let mut header = theta_header(p);
    header.extend(
        [
            "det_info",
            "sigma_min",
            "theta_rank",
            "jet_first_rank",
            "jet_second_rank",
            "jet_marginal",
        ]
        .map(String::from),
    );
    let mut table = Table::new(header);
    for (ip, jet) in report.info_points.iter().zip(&report.type4.profiles) {
        let mut row = theta_cells(&ip.theta);
        row.extend([
            num(ip.det),
            num(ip.sigma_min),
            ip.theta_rank.to_string(),
            jet.first_rank.to_string(),
            jet.second_rank.to_string(),
            flag(jet.report.marginal),
        ]);
        table.push(row);
    }
    Ok(Report {
        result: to_value(&report)?,
        table,
    })
}

fn sweep(sc: &Scenario) -> Result<Report, CliError> {
    let (map, spec) = base_map(sc)?;
    let block = Scenario::require(&sc.sweep, "sweep")?;
    let thetas = sc.theta_points()?;
    let lambdas: Vec<Vec<f64>> = sc.lambda_values()?.into_iter().map(|s| vec![s]).collect();
    let joint = WeakJointMap {
        map,
        spec: spec.clone(),
        method: sc.jacobian_method,
    };
    let t = lambda_sweep(&joint, &lambdas, &thetas, &block.indicator, &sc.rank)?;
    let mut table = Table::new(["s", "fired", "total", "fraction"]);
    for r in &t.rows {
        table.push(vec![num(r.lambda[0]), r.fired.to_string(), r.total.to_string(), num(r.fraction)]);
    }
    Ok(Report {
        result: to_value(&t)?,
        table,
    })
}

fn stein(sc: &Scenario) -> Result<Report, CliError> {
    let block = Scenario::require(&sc.stein, "stein")?;
    let kernel = Scenario::require(&sc.kernel, "kernel")?.clone();
    let spec = SteinSpec::new(
        block.target.clone(),
        block.dictionary.clone(),
        kernel,
        sc.quadrature,
    )?;
    let mut table = Table::new([
        "row_type",
        "family",
        "theta",
        "discrepancy",
        "rank",
        "surjective",
        "marginal",
    ]);
    let join = |t: &[f64]| t.iter().map(|&v| num(v)).collect::<Vec<_>>().join(" ");
    let mut candidates = Vec::new();
    for c in &block.candidates {
        let f = spec.stein_features(&c.model, &c.theta)?;
        let d = spec.weak_stein_discrepancy(&c.model, &c.theta)?;
        table.push(vec![
            "candidate".into(),
            c.model.name().into(),
            join(&c.theta),
            num(d),
            String::new(),
            String::new(),
            String::new(),
        ]);
        candidates.push(json!({
            "model": to_value(&c.model)?,
            "theta": c.theta,
            "features": f,
            "discrepancy": d,
        }));
    }
    let points = spec.stein_jacobian_check(&block.zero_set, sc.rank.rank_rtol)?;
    for pt in &points {
        table.push(vec![
            "zero_set".into(),
            "stein_gaussian_target".into(),
            join(&pt.theta),
            String::new(),
            pt.report.numerical_rank.to_string(),
            flag(pt.surjective),
            flag(pt.report.marginal),
        ]);
    }
    Ok(Report {
        result: json!({
            "target": block.target,
            "dictionary_size": block.dictionary.len(),
            "candidates": candidates,
            "zero_set": to_value(&points)?,
            "all_surjective": points.iter().all(|p| p.surjective),
            "note": "whether the dictionary is measure-determining is not checked",
        }),
        table,
    })
}

fn behrens_fisher(sc: &Scenario) -> Result<Report, CliError> {
    let cfg = Scenario::require(&sc.behrens_fisher, "behrens_fisher")?;
    let report = tradeoff_table(cfg)?;
    let nuisance = nuisance_sensitivity(cfg)?;
    let mut table = Table::new(["s", "sup_nuisance_gap", "signal_gap", "ratio"]);
    for r in &report.rows {
        table.push(vec![num(r.s), num(r.sup_nuisance_gap), num(r.signal_gap), num(r.ratio)]);
    }
    Ok(Report {
        result: json!({ "tradeoff": to_value(&report)?, "nuisance": to_value(&nuisance)? }),
        table,
    })
}
