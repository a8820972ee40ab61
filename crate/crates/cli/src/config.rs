//! Run configuration: a TOML document with nested sections for the
//! scenario, the perturbation coefficients, the epsilon list, the region
//! and the integrator. Coefficients are accepted as named scalars (a0..e5,
//! mirroring the perturbed equations) or as a dense matrix/offset pair; the
//! named form is canonical in the docs.

use nalgebra::{DMatrix, DVector};
use orbit_averager_core::{
    AffinePerturbation, ChartRegion, IntegratorConfig, Method, Scenario, ScenarioId,
    VerifyOptions,
};
use serde::Deserialize;
use std::collections::BTreeMap;
use std::path::PathBuf;
use std::str::FromStr;

/// Built-in preset encoding the first worked perturbation family
/// (theta' = 1 + eps phi, phi' = eps theta on S^2 x R).
pub const PRESET_THEOREM1: &str = "\
[scenario]
id = \"S1\"

[coefficients]
a2 = 1.0
b1 = 1.0
";

/// Built-in preset encoding the second worked family on R^2 x S^2
/// (x' = -y + 2 eps y, y' = x + eps x, theta' = 1 + eps phi, phi' = eps theta).
pub const PRESET_THEOREM3: &str = "\
[scenario]
id = \"S3\"

[coefficients]
a2 = 2.0
b1 = 1.0
c4 = 1.0
d3 = 1.0
";

const DEFAULT_EPSILONS: [f64; 4] = [1e-2, 5e-3, 2.5e-3, 1.25e-3];
/// Verification tolerance on the closure residual.
pub const VERIFY_TOLERANCE: f64 = 1e-8;
/// Default line-coordinate bound of the verifier working region.
const WORKING_KAPPA: f64 = 9.0;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    scenario: ScenarioSection,
    #[serde(default)]
    coefficients: BTreeMap<String, toml::Value>,
    #[serde(default)]
    epsilons: EpsilonSection,
    #[serde(default)]
    region: RegionSection,
    #[serde(default)]
    integrator: IntegratorSection,
    #[serde(default)]
    output: OutputSection,
    #[serde(default)]
    random: RandomSection,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioSection {
    id: String,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct EpsilonSection {
    values: Option<Vec<f64>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RegionSection {
    delta0: Option<f64>,
    kappa: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct IntegratorSection {
    method: Option<String>,
    abs_tol: Option<f64>,
    rel_tol: Option<f64>,
    max_step: Option<f64>,
    initial_step: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct OutputSection {
    dir: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RandomSection {
    seed: Option<u64>,
}

/// Fully resolved run configuration.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub scenario: Scenario,
    pub perturbation: AffinePerturbation,
    pub epsilons: Vec<f64>,
    /// Region the root must land in.
    pub root_region: ChartRegion,
    /// Working region bounding verification flights.
    pub working_region: ChartRegion,
    pub integrator: IntegratorConfig,
    pub out_dir: PathBuf,
    pub seed: u64,
    pub warnings: Vec<String>,
}

impl RunConfig {
    /// Verifier options assembled from the run configuration.
    pub fn verify_options(&self) -> VerifyOptions {
        let mut options = VerifyOptions::default();
        options.integrator = IntegratorConfig {
            region: Some(self.working_region),
            ..self.integrator.clone()
        };
        options
    }
}

/// Loads a configuration from a file path or a built-in preset name.
/// `ORBIT_AVERAGER_SEED` overrides the config seed.
pub fn load(path_or_preset: &str) -> Result<RunConfig, String> {
    let text = match path_or_preset {
        "theorem1-example" => PRESET_THEOREM1.to_string(),
        "theorem3-example" => PRESET_THEOREM3.to_string(),
        path => std::fs::read_to_string(path)
            .map_err(|e| format!("cannot read config {path}: {e}"))?,
    };
    parse(&text)
}

/// Parses a TOML configuration document.
pub fn parse(text: &str) -> Result<RunConfig, String> {
    let file: ConfigFile = toml::from_str(text).map_err(|e| format!("config parse error: {e}"))?;
    let mut warnings = Vec::new();

    let id = ScenarioId::from_str(&file.scenario.id)
        .map_err(|e| format!("scenario section: {e}"))?;
    let scenario = Scenario::from_id(id);

    let perturbation = parse_coefficients(&scenario, &file.coefficients)?;

    let mut epsilons = file
        .epsilons
        .values
        .unwrap_or_else(|| DEFAULT_EPSILONS.to_vec());
    if epsilons.is_empty() {
        return Err("epsilons.values must not be empty".into());
    }
    if epsilons.iter().any(|e| !(*e > 0.0) || !e.is_finite()) {
        return Err("epsilons.values must be positive and finite".into());
    }
    for e in &epsilons {
        if *e > 0.1 {
            warnings.push(format!(
                "epsilon {e} exceeds the validated range (0, 0.1]; verification may fail"
            ));
        }
    }
    epsilons.sort_by(|a, b| b.total_cmp(a));
    epsilons.dedup();

    let delta0 = file.region.delta0.unwrap_or(0.05);
    let root_kappa = match file.region.kappa {
        Some(k) => k,
        None => default_root_kappa(&scenario, &perturbation),
    };
    let root_region =
        ChartRegion::new(delta0, root_kappa).map_err(|e| format!("region section: {e}"))?;
    let working_kappa = file.region.kappa.unwrap_or(WORKING_KAPPA).max(WORKING_KAPPA);
    let working_region =
        ChartRegion::new(delta0, working_kappa).map_err(|e| format!("region section: {e}"))?;

    let defaults = IntegratorConfig::default();
    let method = match file.integrator.method.as_deref() {
        None | Some("rk45-adaptive") => Method::Rk45Adaptive,
        Some("rk4-fixed") => Method::Rk4Fixed,
        Some(other) => return Err(format!("unknown integrator method {other}")),
    };
    let integrator = IntegratorConfig {
        method,
        abs_tol: file.integrator.abs_tol.unwrap_or(defaults.abs_tol),
        rel_tol: file.integrator.rel_tol.unwrap_or(defaults.rel_tol),
        max_step: file.integrator.max_step.unwrap_or(defaults.max_step),
        initial_step: file
            .integrator
            .initial_step
            .unwrap_or(defaults.initial_step),
        region: None,
    };
    integrator
        .validate()
        .map_err(|e| format!("integrator section: {e}"))?;

    let out_dir = PathBuf::from(file.output.dir.unwrap_or_else(|| ".".into()));
    let seed = match std::env::var("ORBIT_AVERAGER_SEED") {
        Ok(v) => v
            .parse::<u64>()
            .map_err(|_| "ORBIT_AVERAGER_SEED must be an unsigned integer".to_string())?,
        Err(_) => file.random.seed.unwrap_or(0),
    };

    Ok(RunConfig {
        scenario,
        perturbation,
        epsilons,
        root_region,
        working_region,
        integrator,
        out_dir,
        seed,
        warnings,
    })
}

/// Named scalars like a2 = 1.0, or a dense `matrix` plus `offset`.
fn parse_coefficients(
    scenario: &Scenario,
    table: &BTreeMap<String, toml::Value>,
) -> Result<AffinePerturbation, String> {
    let dim = scenario.dim();
    let has_dense = table.contains_key("matrix") || table.contains_key("offset");
    let named: Vec<(String, f64)> = table
        .iter()
        .filter(|(k, _)| k.as_str() != "matrix" && k.as_str() != "offset")
        .map(|(k, v)| {
            let value = as_f64(v).ok_or(format!("coefficient {k} must be a number"))?;
            Ok((k.clone(), value))
        })
        .collect::<Result<_, String>>()?;
    if has_dense && !named.is_empty() {
        return Err("coefficients: give either named scalars or matrix/offset, not both".into());
    }
    if has_dense {
        let matrix = match table.get("matrix") {
            Some(v) => parse_matrix(v, dim)?,
            None => DMatrix::zeros(dim, dim),
        };
        let offset = match table.get("offset") {
            Some(v) => parse_vector(v, dim)?,
            None => DVector::zeros(dim),
        };
        AffinePerturbation::new(matrix, offset).map_err(|e| format!("coefficients: {e}"))
    } else {
        AffinePerturbation::from_named(scenario, &named).map_err(|e| format!("coefficients: {e}"))
    }
}

fn as_f64(v: &toml::Value) -> Option<f64> {
    match v {
        toml::Value::Float(f) => Some(*f),
        toml::Value::Integer(i) => Some(*i as f64),
        _ => None,
    }
}

fn parse_matrix(v: &toml::Value, dim: usize) -> Result<DMatrix<f64>, String> {
    let rows = v
        .as_array()
        .ok_or("coefficients.matrix must be an array of rows")?;
    if rows.len() != dim {
        return Err(format!("coefficients.matrix needs {dim} rows"));
    }
    let mut m = DMatrix::zeros(dim, dim);
    for (i, row) in rows.iter().enumerate() {
        let cols = row
            .as_array()
            .ok_or("coefficients.matrix rows must be arrays")?;
        if cols.len() != dim {
            return Err(format!("coefficients.matrix row {i} needs {dim} entries"));
        }
        for (j, c) in cols.iter().enumerate() {
            m[(i, j)] = as_f64(c).ok_or("coefficients.matrix entries must be numbers")?;
        }
    }
    Ok(m)
}

fn parse_vector(v: &toml::Value, dim: usize) -> Result<DVector<f64>, String> {
    let entries = v
        .as_array()
        .ok_or("coefficients.offset must be an array")?;
    if entries.len() != dim {
        return Err(format!("coefficients.offset needs {dim} entries"));
    }
    let mut out = DVector::zeros(dim);
    for (i, e) in entries.iter().enumerate() {
        out[i] = as_f64(e).ok_or("coefficients.offset entries must be numbers")?;
    }
    Ok(out)
}

/// Root-region kappa when none is configured: the plane-times-sphere
/// scenario bounds the planar norm so that the predicted root always lies
/// inside; the sphere-times-line scenarios leave the line factor unbounded.
fn default_root_kappa(scenario: &Scenario, p: &AffinePerturbation) -> f64 {
    if scenario.id() != ScenarioId::S3 {
        return 0.0;
    }
    let a = p.matrix();
    let (a1, a2, a3) = (a[(0, 0)], a[(0, 1)], a[(0, 2)]);
    let (b1, b2, b3) = (a[(1, 0)], a[(1, 1)], a[(1, 2)]);
    let denom = (b2 + a1) * (b2 + a1) + (a2 - b1) * (a2 - b1);
    if denom > 0.0 {
        2.0 * (a3 * a3 + b3 * b3).sqrt() / denom.sqrt()
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_parse() {
        let c1 = parse(PRESET_THEOREM1).unwrap();
        assert_eq!(c1.scenario.id(), ScenarioId::S1);
        assert_eq!(c1.perturbation.matrix()[(0, 1)], 1.0);
        assert_eq!(c1.epsilons, DEFAULT_EPSILONS.to_vec());

        let c3 = parse(PRESET_THEOREM3).unwrap();
        assert_eq!(c3.scenario.id(), ScenarioId::S3);
        assert_eq!(c3.perturbation.matrix()[(0, 1)], 2.0);
    }

    #[test]
    fn dense_coefficients_parse() {
        let text = r#"
[scenario]
id = "S1"

[coefficients]
matrix = [[0.0, 1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 0.0]]
offset = [0.0, 0.0, 0.0]
"#;
        let c = parse(text).unwrap();
        assert_eq!(c.perturbation.matrix()[(0, 1)], 1.0);
        assert_eq!(c.perturbation.matrix()[(1, 0)], 1.0);
    }

    #[test]
    fn mixed_coefficient_styles_rejected() {
        let text = r#"
[scenario]
id = "S1"

[coefficients]
a2 = 1.0
offset = [0.0, 0.0, 0.0]
"#;
        assert!(parse(text).is_err());
    }

    #[test]
    fn bad_epsilons_rejected_large_ones_warned() {
        let text = r#"
[scenario]
id = "S1"

[epsilons]
values = [-0.1]
"#;
        assert!(parse(text).is_err());

        let text = r#"
[scenario]
id = "S1"

[epsilons]
values = [0.5]
"#;
        let c = parse(text).unwrap();
        assert!(!c.warnings.is_empty());
    }
}
