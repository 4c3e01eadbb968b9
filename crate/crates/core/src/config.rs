//! Experiment configuration: parsing, validation, defaulting, sweeps.
//!
//! Config files are JSON. Estimate- and train-mode files are flat objects
//! carrying a `"mode"` tag; sweep files embed a base config plus a list of
//! axis overrides addressed by dotted field paths. Unknown keys are
//! rejected. Parsing yields a fully resolved config whose canonical JSON
//! form parses back to itself.

use crate::aggregators::AggregatorSpec;
use crate::contamination::{AttackStrategy, ContaminationSpec};
use crate::dataio::DatasetFormat;
use crate::error::{Error, Result};
use crate::estimator::{
    recommend_params, ContaminationModel, EstimatorParams, PrefilterMode, RemovalMode,
};
use crate::sim::LossKind;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    Csv,
    Json,
    #[default]
    Both,
}

/// Output and replication options shared by every mode.
#[derive(Debug, Clone, PartialEq)]
pub struct CommonOpts {
    pub replications: usize,
    pub output_dir: String,
    pub output_format: OutputFormat,
    pub master_seed: u64,
}

fn default_replications() -> usize {
    1
}

fn default_output_dir() -> String {
    "out".to_string()
}

/// Estimator parameters as written in configs; absent entries are filled
/// from the recommendation rule or the documented defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct PartialParams {
    #[serde(default)]
    pub p: Option<usize>,
    #[serde(default)]
    pub lambda_c: Option<f64>,
    #[serde(default)]
    pub prefilter_mode: Option<PrefilterMode>,
    #[serde(default)]
    pub prefilter_threshold: Option<f64>,
    #[serde(default)]
    pub removal_mode: Option<RemovalMode>,
    #[serde(default)]
    pub top_k: Option<usize>,
    #[serde(default)]
    pub max_iterations: Option<usize>,
    #[serde(default)]
    pub min_survivors: Option<usize>,
    #[serde(default)]
    pub seed: Option<u64>,
}

/// External dataset files for estimate mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetFiles {
    pub s0: String,
    pub aux: String,
    #[serde(default)]
    pub format: DatasetFormat,
    /// Optional ground truth for scoring.
    #[serde(default)]
    pub true_mean: Option<Vec<f64>>,
}

/// Flat estimate-mode config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimateConfig {
    pub d: usize,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "N_A", default = "default_n_aux")]
    pub n_aux: usize,
    #[serde(default = "default_sigma")]
    pub sigma: f64,
    /// Defaults to the zero vector.
    #[serde(default)]
    pub mu_star: Option<Vec<f64>>,
    #[serde(default = "default_model")]
    pub model: ContaminationModel,
    pub alpha_clean: f64,
    pub attack: AttackStrategy,
    #[serde(default)]
    pub params: PartialParams,
    /// Enforces the strict inequalities in the recommended thresholds.
    #[serde(default = "default_margin")]
    pub margin: f64,
    #[serde(default)]
    pub dataset_files: Option<DatasetFiles>,
    #[serde(default = "default_replications")]
    pub replications: usize,
    #[serde(default = "default_output_dir")]
    pub output_dir: String,
    #[serde(default)]
    pub output_format: OutputFormat,
    #[serde(default)]
    pub master_seed: u64,
}

fn default_n_aux() -> usize {
    10
}

fn default_sigma() -> f64 {
    1.0
}

fn default_model() -> ContaminationModel {
    ContaminationModel::Additive
}

fn default_margin() -> f64 {
    0.01
}

impl EstimateConfig {
    pub fn contamination(&self) -> ContaminationSpec {
        ContaminationSpec {
            model: self.model,
            alpha_clean: self.alpha_clean,
            strategy: self.attack.clone(),
        }
    }

    /// Concrete estimator parameters; requires a resolved config.
    pub fn estimator_params(&self) -> EstimatorParams {
        EstimatorParams {
            p: self.params.p.expect("resolved"),
            lambda_c: self.params.lambda_c.expect("resolved"),
            prefilter_mode: self.params.prefilter_mode.unwrap_or_default(),
            prefilter_threshold: self.params.prefilter_threshold,
            removal_mode: self.params.removal_mode.unwrap_or_default(),
            top_k: self.params.top_k.unwrap_or(1),
            max_iterations: self.params.max_iterations,
            min_survivors: self.params.min_survivors,
            seed: self.params.seed.unwrap_or(0),
        }
    }

    fn resolve(&mut self) -> Result<()> {
        if !(self.alpha_clean > 0.0 && self.alpha_clean <= 1.0) {
            return Err(Error::Validation(format!(
                "alpha_clean must lie in (0, 1], got {}",
                self.alpha_clean
            )));
        }
        if self.d < 1 || self.n < 1 || self.n_aux < 1 {
            return Err(Error::Validation("d, N and N_A must be >= 1".into()));
        }
        if !(self.sigma.is_finite() && self.sigma > 0.0) {
            return Err(Error::Validation("sigma must be positive".into()));
        }
        if !(self.margin.is_finite() && self.margin >= 0.0) {
            return Err(Error::Validation("margin must be >= 0".into()));
        }
        if self.replications < 1 {
            return Err(Error::Validation("replications must be >= 1".into()));
        }
        if let Some(mu) = &self.mu_star {
            if mu.len() != self.d {
                return Err(Error::Validation(format!(
                    "mu_star has length {}, expected d={}",
                    mu.len(),
                    self.d
                )));
            }
        } else {
            self.mu_star = Some(vec![0.0; self.d]);
        }
        self.attack
            .validate()
            .map_err(|e| Error::Validation(e.to_string()))?;
        if let AttackStrategy::LowerBoundInstance { beta } = &self.attack {
            let expect = self.alpha_clean / 2.0;
            if (beta - expect).abs() > 1e-12 {
                return Err(Error::Validation(format!(
                    "lower_bound_instance.beta must equal alpha_clean/2 = {expect}, got {beta}"
                )));
            }
        }
        if self.params.p.is_none() || self.params.lambda_c.is_none() {
            let rec = recommend_params(
                self.sigma,
                self.alpha_clean,
                self.n,
                self.d,
                self.model,
                self.margin,
            )
            .map_err(|e| Error::Validation(e.to_string()))?;
            self.params.p.get_or_insert(rec.p);
            self.params.lambda_c.get_or_insert(rec.lambda_c);
        }
        self.params.prefilter_mode.get_or_insert(PrefilterMode::Off);
        self.params
            .removal_mode
            .get_or_insert(RemovalMode::Randomized);
        self.params.top_k.get_or_insert(1);
        self.params.seed.get_or_insert(0);
        let params = self.estimator_params();
        params
            .validate()
            .map_err(|e| Error::Validation(e.to_string()))?;
        if params.p > self.d {
            return Err(Error::Validation(format!(
                "params.p = {} exceeds d = {} (recommended p grows as 8/alpha_clean; \
                 set params.p explicitly for small dimensions)",
                params.p, self.d
            )));
        }
        Ok(())
    }
}

/// Flat train-mode config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainFileConfig {
    pub d: usize,
    pub m: usize,
    pub n_per_worker: usize,
    #[serde(rename = "N_A")]
    pub n_aux: usize,
    #[serde(rename = "T")]
    pub rounds: usize,
    /// Defaults to 0.1 for the quadratic loss, 0.05 for linear regression.
    #[serde(default)]
    pub eta: Option<f64>,
    #[serde(default)]
    pub w0: Option<Vec<f64>>,
    pub aggregator: AggregatorSpec,
    #[serde(default = "default_model")]
    pub model: ContaminationModel,
    pub alpha_clean: f64,
    pub attack: AttackStrategy,
    pub loss: LossKind,
    #[serde(default = "default_replications")]
    pub replications: usize,
    #[serde(default = "default_output_dir")]
    pub output_dir: String,
    #[serde(default)]
    pub output_format: OutputFormat,
    #[serde(default)]
    pub master_seed: u64,
}

impl TrainFileConfig {
    fn resolve(&mut self) -> Result<()> {
        if self.eta.is_none() {
            self.eta = Some(match self.loss {
                LossKind::Quadratic { .. } => 0.1,
                LossKind::LinearRegression { .. } => 0.05,
            });
        }
        if self.replications < 1 {
            return Err(Error::Validation("replications must be >= 1".into()));
        }
        let probe = self.to_train_config(self.master_seed);
        probe.validate()?;
        Ok(())
    }

    /// Builds the simulator config for one replication seed.
    pub fn to_train_config(&self, seed: u64) -> crate::sim::TrainConfig {
        crate::sim::TrainConfig {
            d: self.d,
            m: self.m,
            n_per_worker: self.n_per_worker,
            n_aux: self.n_aux,
            rounds: self.rounds,
            eta: self.eta.unwrap_or(0.1),
            w0: self.w0.clone(),
            aggregator: self.aggregator.clone(),
            contamination: ContaminationSpec {
                model: self.model,
                alpha_clean: self.alpha_clean,
                strategy: self.attack.clone(),
            },
            loss: self.loss.clone(),
            master_seed: seed,
        }
    }
}

/// One sweep axis: a dotted path into the base config plus its values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AxisOverride {
    pub path: String,
    pub values: Vec<Value>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    /// Raw base config as written (resolution re-runs per cell so derived
    /// defaults track the overridden fields).
    pub raw_base: Value,
    /// Resolved base, used for path validation and echoed in artifacts.
    pub base: Box<ExperimentConfig>,
    pub axes: Vec<AxisOverride>,
    pub replications: usize,
    pub output_dir: String,
    pub output_format: OutputFormat,
    pub master_seed: u64,
}

/// A parsed, validated, fully defaulted experiment.
#[derive(Debug, Clone, PartialEq)]
pub enum ExperimentConfig {
    Estimate(EstimateConfig),
    Train(TrainFileConfig),
    Sweep(SweepConfig),
}

impl ExperimentConfig {
    pub fn common(&self) -> CommonOpts {
        match self {
            ExperimentConfig::Estimate(c) => CommonOpts {
                replications: c.replications,
                output_dir: c.output_dir.clone(),
                output_format: c.output_format,
                master_seed: c.master_seed,
            },
            ExperimentConfig::Train(c) => CommonOpts {
                replications: c.replications,
                output_dir: c.output_dir.clone(),
                output_format: c.output_format,
                master_seed: c.master_seed,
            },
            ExperimentConfig::Sweep(c) => CommonOpts {
                replications: c.replications,
                output_dir: c.output_dir.clone(),
                output_format: c.output_format,
                master_seed: c.master_seed,
            },
        }
    }

    pub fn set_master_seed(&mut self, seed: u64) {
        match self {
            ExperimentConfig::Estimate(c) => c.master_seed = seed,
            ExperimentConfig::Train(c) => c.master_seed = seed,
            ExperimentConfig::Sweep(c) => c.master_seed = seed,
        }
    }

    pub fn set_output_dir(&mut self, dir: String) {
        match self {
            ExperimentConfig::Estimate(c) => c.output_dir = dir,
            ExperimentConfig::Train(c) => c.output_dir = dir,
            ExperimentConfig::Sweep(c) => c.output_dir = dir,
        }
    }

    pub fn mode(&self) -> &'static str {
        match self {
            ExperimentConfig::Estimate(_) => "estimate",
            ExperimentConfig::Train(_) => "train",
            ExperimentConfig::Sweep(_) => "sweep",
        }
    }

    /// Canonical JSON: a valid config file that parses back to `self`.
    pub fn to_json_value(&self) -> Value {
        match self {
            ExperimentConfig::Estimate(c) => {
                let mut v = serde_json::to_value(c).expect("serializable");
                v.as_object_mut()
                    .unwrap()
                    .insert("mode".into(), Value::String("estimate".into()));
                v
            }
            ExperimentConfig::Train(c) => {
                let mut v = serde_json::to_value(c).expect("serializable");
                v.as_object_mut()
                    .unwrap()
                    .insert("mode".into(), Value::String("train".into()));
                v
            }
            ExperimentConfig::Sweep(c) => serde_json::json!({
                "mode": "sweep",
                "base": c.base.to_json_value(),
                "sweep": c.axes,
                "replications": c.replications,
                "output_dir": c.output_dir,
                "output_format": c.output_format,
                "master_seed": c.master_seed,
            }),
        }
    }
}

/// Raw sweep file shape.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct SweepFile {
    base: Value,
    sweep: Vec<AxisOverride>,
    #[serde(default = "default_replications")]
    replications: usize,
    #[serde(default = "default_output_dir")]
    output_dir: String,
    #[serde(default)]
    output_format: OutputFormat,
    #[serde(default)]
    master_seed: u64,
}

/// Parses and resolves a config file.
pub fn parse_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    parse_config_str(&text)
}

/// Parses and resolves config text.
pub fn parse_config_str(text: &str) -> Result<ExperimentConfig> {
    let value: Value = serde_json::from_str(text)
        .map_err(|e| Error::Parse(format!("line {}: {e}", e.line())))?;
    parse_config_value(value)
}

pub fn parse_config_value(value: Value) -> Result<ExperimentConfig> {
    let mut obj = match value {
        Value::Object(o) => o,
        _ => return Err(Error::Parse("top level must be a JSON object".into())),
    };
    let mode = obj
        .remove("mode")
        .and_then(|m| m.as_str().map(|s| s.to_string()))
        .ok_or_else(|| Error::Parse("missing required field: mode".into()))?;
    let rest = Value::Object(obj);
    match mode.as_str() {
        "estimate" => {
            let mut c: EstimateConfig = serde_json::from_value(rest)
                .map_err(|e| Error::Parse(format!("estimate config: {e}")))?;
            c.resolve()?;
            Ok(ExperimentConfig::Estimate(c))
        }
        "train" => {
            let mut c: TrainFileConfig = serde_json::from_value(rest)
                .map_err(|e| Error::Parse(format!("train config: {e}")))?;
            c.resolve()?;
            Ok(ExperimentConfig::Train(c))
        }
        "sweep" => {
            let f: SweepFile = serde_json::from_value(rest)
                .map_err(|e| Error::Parse(format!("sweep config: {e}")))?;
            if f.replications < 1 {
                return Err(Error::Validation("replications must be >= 1".into()));
            }
            let base = parse_config_value(f.base.clone())?;
            if matches!(base, ExperimentConfig::Sweep(_)) {
                return Err(Error::Validation(
                    "sweep base cannot itself be a sweep".into(),
                ));
            }
            if f.sweep.is_empty() {
                return Err(Error::Validation("sweep needs at least one axis".into()));
            }
            let canonical = base.to_json_value();
            for axis in &f.sweep {
                if axis.values.is_empty() {
                    return Err(Error::Validation(format!(
                        "sweep axis '{}' has no values",
                        axis.path
                    )));
                }
                if lookup_path(&canonical, &axis.path).is_none() {
                    return Err(Error::Validation(format!(
                        "sweep axis '{}' does not reference an existing config field",
                        axis.path
                    )));
                }
            }
            Ok(ExperimentConfig::Sweep(SweepConfig {
                raw_base: f.base,
                base: Box::new(base),
                axes: f.sweep,
                replications: f.replications,
                output_dir: f.output_dir,
                output_format: f.output_format,
                master_seed: f.master_seed,
            }))
        }
        other => Err(Error::Parse(format!(
            "unknown mode '{other}' (expected estimate, train or sweep)"
        ))),
    }
}

fn lookup_path<'v>(value: &'v Value, path: &str) -> Option<&'v Value> {
    let mut cur = value;
    for seg in path.split('.') {
        cur = cur.as_object()?.get(seg)?;
    }
    Some(cur)
}

/// Sets `path` inside a raw config object, creating intermediate objects.
/// The path must already have been validated against the canonical schema.
pub fn set_path(value: &mut Value, path: &str, new_value: Value) -> Result<()> {
    let mut cur = value;
    let segs: Vec<&str> = path.split('.').collect();
    for (i, seg) in segs.iter().enumerate() {
        let obj = cur.as_object_mut().ok_or_else(|| {
            Error::Validation(format!("sweep path '{path}' crosses a non-object field"))
        })?;
        if i + 1 == segs.len() {
            obj.insert((*seg).to_string(), new_value);
            return Ok(());
        }
        cur = obj
            .entry((*seg).to_string())
            .or_insert_with(|| Value::Object(serde_json::Map::new()));
    }
    unreachable!("paths are non-empty")
}

/// Expands a sweep into per-cell resolved configs in axis-major order
/// (later axes vary fastest). Each cell carries its axis values.
pub fn expand_sweep(sweep: &SweepConfig) -> Result<Vec<SweepCell>> {
    let lengths: Vec<usize> = sweep.axes.iter().map(|a| a.values.len()).collect();
    let total: usize = lengths.iter().product();
    let mut cells = Vec::with_capacity(total);
    for flat in 0..total {
        let mut rem = flat;
        let mut picks = vec![0usize; lengths.len()];
        for i in (0..lengths.len()).rev() {
            picks[i] = rem % lengths[i];
            rem /= lengths[i];
        }
        let mut raw = sweep.raw_base.clone();
        let mut axis_values = Vec::with_capacity(lengths.len());
        for (axis, &k) in sweep.axes.iter().zip(&picks) {
            set_path(&mut raw, &axis.path, axis.values[k].clone())?;
            axis_values.push((axis.path.clone(), axis.values[k].clone()));
        }
        let config = parse_config_value(raw)
            .map_err(|e| Error::Validation(format!("sweep cell {flat}: {e}")))?;
        cells.push(SweepCell {
            index: flat,
            axis_values,
            config,
        });
    }
    Ok(cells)
}

/// One resolved sweep cell.
#[derive(Debug, Clone)]
pub struct SweepCell {
    pub index: usize,
    pub axis_values: Vec<(String, Value)>,
    pub config: ExperimentConfig,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_estimate_config_fills_defaults() {
        let text = r#"{
            "mode": "estimate",
            "d": 20,
            "N": 2000,
            "alpha_clean": 0.5,
            "attack": {"kind": "gaussian_noise", "per_coord_std": 2.0}
        }"#;
        let cfg = parse_config_str(text).unwrap();
        let est = match &cfg {
            ExperimentConfig::Estimate(c) => c,
            _ => panic!("wrong mode"),
        };
        assert_eq!(est.n_aux, 10);
        assert_eq!(est.margin, 0.01);
        let params = est.estimator_params();
        assert_eq!(params.p, 17);
        assert_eq!(params.prefilter_mode, PrefilterMode::Off);
        assert_eq!(params.removal_mode, RemovalMode::Randomized);
        // lambda_c = 1.01 * 32 * (1 + 2*20/(0.5*2000))
        let expect = 1.01 * 32.0 * (1.0 + 40.0 / 1000.0);
        assert!((params.lambda_c - expect).abs() <= 1e-12);
        assert_eq!(est.mu_star.as_ref().unwrap().len(), 20);
    }

    #[test]
    fn invalid_alpha_names_the_field() {
        let text = r#"{
            "mode": "estimate",
            "d": 4,
            "N": 100,
            "alpha_clean": 1.5,
            "attack": {"kind": "gaussian_noise", "per_coord_std": 1.0}
        }"#;
        let err = parse_config_str(text).unwrap_err();
        assert!(matches!(err, Error::Validation(_)));
        assert!(err.to_string().contains("alpha_clean"));
    }

    #[test]
    fn unknown_keys_rejected() {
        let text = r#"{
            "mode": "estimate",
            "d": 4,
            "N": 100,
            "alpha_clean": 0.5,
            "attack": {"kind": "gaussian_noise", "per_coord_std": 1.0},
            "typo_field": 3
        }"#;
        assert!(matches!(parse_config_str(text), Err(Error::Parse(_))));
    }

    #[test]
    fn round_trip_is_identity_on_resolved_configs() {
        let text = r#"{
            "mode": "train",
            "d": 6, "m": 10, "n_per_worker": 4, "N_A": 5, "T": 3,
            "aggregator": {"kind": "zeno", "q": 3},
            "alpha_clean": 0.7,
            "attack": {"kind": "gaussian_noise", "per_coord_std": 0.447},
            "loss": {"kind": "linear_regression"},
            "master_seed": 9
        }"#;
        let c1 = parse_config_str(text).unwrap();
        let echoed = serde_json::to_string(&c1.to_json_value()).unwrap();
        let c2 = parse_config_str(&echoed).unwrap();
        assert_eq!(c1, c2);

        // Same for estimate mode.
        let text = r#"{
            "mode": "estimate",
            "d": 20, "N": 400, "alpha_clean": 0.6,
            "attack": {"kind": "mean_shift", "direction": 0, "magnitude": 5.0}
        }"#;
        let c1 = parse_config_str(text).unwrap();
        let echoed = serde_json::to_string(&c1.to_json_value()).unwrap();
        let c2 = parse_config_str(&echoed).unwrap();
        assert_eq!(c1, c2);
    }

    #[test]
    fn train_eta_defaults_per_loss() {
        let quad = r#"{
            "mode": "train",
            "d": 3, "m": 4, "n_per_worker": 2, "N_A": 2, "T": 2,
            "aggregator": {"kind": "master_only"},
            "alpha_clean": 1.0,
            "attack": {"kind": "gaussian_noise", "per_coord_std": 1.0},
            "loss": {"kind": "quadratic"}
        }"#;
        match parse_config_str(quad).unwrap() {
            ExperimentConfig::Train(c) => assert_eq!(c.eta, Some(0.1)),
            _ => panic!(),
        }
        let linreg = quad.replace("quadratic", "linear_regression");
        match parse_config_str(&linreg).unwrap() {
            ExperimentConfig::Train(c) => assert_eq!(c.eta, Some(0.05)),
            _ => panic!(),
        }
    }

    #[test]
    fn sweep_paths_validated_and_expanded() {
        let text = r#"{
            "mode": "sweep",
            "base": {
                "mode": "estimate",
                "d": 6, "N": 200, "alpha_clean": 0.5,
                "attack": {"kind": "gaussian_noise", "per_coord_std": 2.0},
                "params": {"p": 2, "lambda_c": 5.0}
            },
            "sweep": [
                {"path": "alpha_clean", "values": [0.2, 0.4, 0.8]},
                {"path": "attack.per_coord_std", "values": [1.0, 3.0]}
            ],
            "replications": 2
        }"#;
        let cfg = parse_config_str(text).unwrap();
        let sweep = match &cfg {
            ExperimentConfig::Sweep(s) => s,
            _ => panic!(),
        };
        let cells = expand_sweep(sweep).unwrap();
        assert_eq!(cells.len(), 6);
        // Later axes vary fastest.
        assert_eq!(cells[0].axis_values[0].1, serde_json::json!(0.2));
        assert_eq!(cells[0].axis_values[1].1, serde_json::json!(1.0));
        assert_eq!(cells[1].axis_values[1].1, serde_json::json!(3.0));
        assert_eq!(cells[5].axis_values[0].1, serde_json::json!(0.8));

        let bad =
            text.replace("alpha_clean\", \"values\": [0.2, 0.4, 0.8]", "nope\", \"values\": [1]");
        assert!(parse_config_str(&bad).is_err());
    }

    #[test]
    fn recommended_p_must_fit_dimension() {
        // alpha 0.2 recommends p = 41 > d = 10.
        let text = r#"{
            "mode": "estimate",
            "d": 10, "N": 500, "alpha_clean": 0.2,
            "attack": {"kind": "gaussian_noise", "per_coord_std": 2.0}
        }"#;
        let err = parse_config_str(text).unwrap_err();
        assert!(err.to_string().contains("exceeds d"));
    }

    #[test]
    fn lower_bound_beta_consistency_enforced() {
        let text = r#"{
            "mode": "estimate",
            "d": 8, "N": 100, "alpha_clean": 0.5,
            "params": {"p": 2, "lambda_c": 40.0},
            "attack": {"kind": "lower_bound_instance", "beta": 0.3}
        }"#;
        let err = parse_config_str(text).unwrap_err();
        assert!(err.to_string().contains("beta"));
    }
}
