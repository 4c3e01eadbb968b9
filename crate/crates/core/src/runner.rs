//! Experiment execution and artifact output.
//!
//! Every artifact embeds the resolved config and master seed needed to
//! regenerate it. CSV files start with a `# resolved_config: ...` comment
//! line followed by a fixed, documented header. Replication seeds are
//! `master_seed + replication_index`; sweep cells share seeds across cells
//! so comparisons are paired. Wall-clock columns are the only
//! non-deterministic content and appear only in train-mode round CSVs.

use crate::config::{
    expand_sweep, EstimateConfig, ExperimentConfig, OutputFormat, SweepConfig, TrainFileConfig,
};
use crate::contamination::{
    corrupt, gen_clean_gaussian, gen_lower_bound_aux, gen_lower_bound_instance, AttackStrategy,
};
use crate::dataio::read_points;
use crate::error::{Error, Result};
use crate::estimator::{semi_verified_mean, EstimatorTrace, Termination};
use crate::points::Vector;
use crate::rng::{mix, stream, Purpose};
use crate::sim::{run_training, RunMetrics};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::Value;
use std::fs;
use std::path::{Path, PathBuf};

/// Files written by a run.
#[derive(Debug, Clone, Serialize)]
pub struct RunArtifacts {
    pub files: Vec<PathBuf>,
}

/// One estimate replication's summary row.
#[derive(Debug, Clone, Serialize)]
pub struct EstimateRow {
    pub replication: usize,
    pub seed: u64,
    /// `||mu_hat - mu*||`; absent when no ground truth is available.
    pub mu_err: Option<f64>,
    pub mu_err_sq: Option<f64>,
    pub filter_iterations: usize,
    pub removed_total: usize,
    pub prefiltered: usize,
    pub lambda_p_final: f64,
    pub terminated_by: Termination,
}

/// Estimate replication output: the row plus the full trace and estimate.
#[derive(Debug, Clone, Serialize)]
pub struct EstimateReplication {
    #[serde(flatten)]
    pub row: EstimateRow,
    pub mu_hat: Vec<f64>,
    pub trace: EstimatorTrace,
}

/// Runs one estimate replication at the given seed.
pub fn run_estimate_once(cfg: &EstimateConfig, seed: u64) -> Result<EstimateReplication> {
    let mut params = cfg.estimator_params();
    params.seed = mix(seed ^ params.seed, Purpose::Estimator as u64, 0);

    let (s0, aux, true_mean) = if let Some(files) = &cfg.dataset_files {
        let s0 = read_points(Path::new(&files.s0), files.format)?;
        let aux = read_points(Path::new(&files.aux), files.format)?;
        let tm = files.true_mean.as_ref().map(|v| Vector::from_vec(v.clone()));
        (s0, aux, tm)
    } else if let AttackStrategy::LowerBoundInstance { .. } = &cfg.attack {
        let mut inst_rng = stream(seed, Purpose::CleanData, 0);
        let inst = gen_lower_bound_instance(
            cfg.d,
            cfg.alpha_clean,
            cfg.sigma,
            cfg.n,
            cfg.model,
            &mut inst_rng,
        )?;
        let mut aux_rng = stream(seed, Purpose::AuxData, 0);
        let aux = gen_lower_bound_aux(
            cfg.d,
            cfg.alpha_clean,
            cfg.sigma,
            cfg.n_aux,
            inst.hidden_index,
            cfg.model,
            &mut aux_rng,
        )?;
        (inst.points, aux, Some(inst.mu_star))
    } else {
        let mu = Vector::from_vec(cfg.mu_star.clone().expect("resolved"));
        let mut data_rng = stream(seed, Purpose::CleanData, 0);
        let clean = gen_clean_gaussian(cfg.d, cfg.n, &mu, cfg.sigma, &mut data_rng)?;
        let mut aux_rng = stream(seed, Purpose::AuxData, 0);
        let aux = gen_clean_gaussian(cfg.d, cfg.n_aux, &mu, cfg.sigma, &mut aux_rng)?;
        let mut attack_rng = stream(seed, Purpose::Attack, 0);
        let (corrupted, _mask) = corrupt(&clean, &cfg.contamination(), &mut attack_rng)?;
        (corrupted, aux.points, Some(mu))
    };

    let result = semi_verified_mean(&s0, &aux, &params)?;
    let mu_err = true_mean.map(|tm| (&result.mu_hat - tm).norm());
    Ok(EstimateReplication {
        row: EstimateRow {
            replication: 0,
            seed,
            mu_err,
            mu_err_sq: mu_err.map(|e| e * e),
            filter_iterations: result.trace.iterations.len(),
            removed_total: result.trace.removed_total(),
            prefiltered: result.trace.prefiltered_ids.len(),
            lambda_p_final: result.trace.final_lambda_p,
            terminated_by: result.trace.terminated_by,
        },
        mu_hat: result.mu_hat.iter().copied().collect(),
        trace: result.trace,
    })
}

/// Runs all replications of an estimate config.
pub fn run_estimate(cfg: &EstimateConfig) -> Result<Vec<EstimateReplication>> {
    let mut out = Vec::with_capacity(cfg.replications);
    for r in 0..cfg.replications {
        let seed = cfg.master_seed.wrapping_add(r as u64);
        let mut rep = run_estimate_once(cfg, seed)?;
        rep.row.replication = r;
        out.push(rep);
    }
    Ok(out)
}

/// Runs all replications of a train config.
pub fn run_train(cfg: &TrainFileConfig) -> Result<Vec<(u64, RunMetrics)>> {
    let mut out = Vec::with_capacity(cfg.replications);
    for r in 0..cfg.replications {
        let seed = cfg.master_seed.wrapping_add(r as u64);
        let metrics = run_training(&cfg.to_train_config(seed))?;
        out.push((seed, metrics));
    }
    Ok(out)
}

/// Summary row of one sweep cell replication.
#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub cell: usize,
    pub axis_values: Vec<(String, Value)>,
    pub replication: usize,
    pub seed: u64,
    /// Final `dist_to_wstar` (train) or `||mu_hat - mu*||` (estimate).
    pub final_metric: Option<f64>,
    pub mean_agg_error: Option<f64>,
    pub total_removed: usize,
}

/// Executes a sweep, optionally across a rayon pool of `jobs` threads.
/// Cells are computed independently and merged in axis order, so the output
/// bytes do not depend on parallelism.
pub fn run_sweep(sweep: &SweepConfig, jobs: Option<usize>) -> Result<Vec<SweepRow>> {
    let cells = expand_sweep(sweep)?;
    let run_cell = |cell: &crate::config::SweepCell| -> Result<Vec<SweepRow>> {
        let mut rows = Vec::new();
        match &cell.config {
            ExperimentConfig::Estimate(c) => {
                let mut c = c.clone();
                c.replications = sweep.replications;
                c.master_seed = sweep.master_seed;
                for (r, rep) in run_estimate(&c)?.into_iter().enumerate() {
                    rows.push(SweepRow {
                        cell: cell.index,
                        axis_values: cell.axis_values.clone(),
                        replication: r,
                        seed: rep.row.seed,
                        final_metric: rep.row.mu_err,
                        mean_agg_error: None,
                        total_removed: rep.row.removed_total,
                    });
                }
            }
            ExperimentConfig::Train(c) => {
                let mut c = c.clone();
                c.replications = sweep.replications;
                c.master_seed = sweep.master_seed;
                for (r, (seed, metrics)) in run_train(&c)?.into_iter().enumerate() {
                    let mean_agg = metrics.rounds.iter().map(|x| x.agg_error).sum::<f64>()
                        / metrics.rounds.len() as f64;
                    let removed: usize = metrics.rounds.iter().map(|x| x.removed_total).sum();
                    rows.push(SweepRow {
                        cell: cell.index,
                        axis_values: cell.axis_values.clone(),
                        replication: r,
                        seed,
                        final_metric: Some(metrics.final_dist),
                        mean_agg_error: Some(mean_agg),
                        total_removed: removed,
                    });
                }
            }
            ExperimentConfig::Sweep(_) => unreachable!("nested sweeps rejected at parse"),
        }
        Ok(rows)
    };

    let nested: Vec<Result<Vec<SweepRow>>> = match jobs {
        Some(k) if k > 1 => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(k)
                .build()
                .map_err(|e| Error::Validation(format!("thread pool: {e}")))?;
            pool.install(|| cells.par_iter().map(run_cell).collect())
        }
        _ => cells.iter().map(run_cell).collect(),
    };
    let mut rows = Vec::new();
    for cell_rows in nested {
        rows.extend(cell_rows?);
    }
    Ok(rows)
}

fn config_comment(config: &ExperimentConfig) -> String {
    format!(
        "# resolved_config: {}",
        serde_json::to_string(&config.to_json_value()).expect("serializable")
    )
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Runs any experiment mode and writes its artifacts under `out_dir`.
pub fn run_experiment(
    config: &ExperimentConfig,
    out_dir: &Path,
    jobs: Option<usize>,
) -> Result<RunArtifacts> {
    fs::create_dir_all(out_dir)?;
    let common = config.common();
    let (want_csv, want_json) = match common.output_format {
        OutputFormat::Csv => (true, false),
        OutputFormat::Json => (false, true),
        OutputFormat::Both => (true, true),
    };
    let mut files = Vec::new();

    match config {
        ExperimentConfig::Estimate(cfg) => {
            let reps = run_estimate(cfg)?;
            if want_csv {
                let path = out_dir.join("estimate_results.csv");
                let mut out = String::new();
                out.push_str(&config_comment(config));
                out.push('\n');
                out.push_str(
                    "replication,seed,mu_err,mu_err_sq,filter_iterations,removed_total,prefiltered,lambda_p_final,terminated_by\n",
                );
                for rep in &reps {
                    let r = &rep.row;
                    out.push_str(&format!(
                        "{},{},{},{},{},{},{},{},{}\n",
                        r.replication,
                        r.seed,
                        fmt_opt(r.mu_err),
                        fmt_opt(r.mu_err_sq),
                        r.filter_iterations,
                        r.removed_total,
                        r.prefiltered,
                        r.lambda_p_final,
                        serde_json::to_value(r.terminated_by)
                            .unwrap()
                            .as_str()
                            .unwrap()
                    ));
                }
                fs::write(&path, out)?;
                files.push(path);
            }
            if want_json {
                let path = out_dir.join("estimate_results.json");
                let envelope = serde_json::json!({
                    "config": config.to_json_value(),
                    "master_seed": common.master_seed,
                    "results": reps,
                });
                fs::write(&path, serde_json::to_string_pretty(&envelope).unwrap())?;
                files.push(path);
            }
        }
        ExperimentConfig::Train(cfg) => {
            let runs = run_train(cfg)?;
            if want_csv {
                for (r, (_, metrics)) in runs.iter().enumerate() {
                    let path = out_dir.join(format!("train_metrics_rep{r}.csv"));
                    let mut out = String::new();
                    out.push_str(&config_comment(config));
                    out.push('\n');
                    out.push_str(
                        "round,dist_to_wstar,agg_error,filter_iterations,removed_total,lambda_p_final,wall_ms\n",
                    );
                    for row in &metrics.rounds {
                        out.push_str(&format!(
                            "{},{},{},{},{},{},{}\n",
                            row.round,
                            row.dist_to_wstar,
                            row.agg_error,
                            row.filter_iterations,
                            row.removed_total,
                            fmt_opt(row.lambda_p_final),
                            row.wall_ms,
                        ));
                    }
                    fs::write(&path, out)?;
                    files.push(path);
                }
            }
            if want_json {
                let path = out_dir.join("train_run.json");
                let reps: Vec<Value> = runs
                    .iter()
                    .enumerate()
                    .map(|(r, (seed, m))| {
                        serde_json::json!({
                            "replication": r,
                            "seed": seed,
                            "final_dist": m.final_dist,
                            "final_w": m.final_w,
                            "rounds": m.rounds,
                        })
                    })
                    .collect();
                let envelope = serde_json::json!({
                    "config": config.to_json_value(),
                    "master_seed": common.master_seed,
                    "replications": reps,
                });
                fs::write(&path, serde_json::to_string_pretty(&envelope).unwrap())?;
                files.push(path);
            }
        }
        ExperimentConfig::Sweep(sweep) => {
            let rows = run_sweep(sweep, jobs)?;
            let axis_names: Vec<String> = sweep.axes.iter().map(|a| a.path.clone()).collect();
            if want_csv {
                let path = out_dir.join("sweep_results.csv");
                let mut out = String::new();
                out.push_str(&config_comment(config));
                out.push('\n');
                let mut header: Vec<String> = vec!["cell".into()];
                header.extend(axis_names.iter().cloned());
                header.extend(
                    ["replication", "seed", "final_metric", "mean_agg_error", "total_removed"]
                        .map(String::from),
                );
                out.push_str(&header.join(","));
                out.push('\n');
                for row in &rows {
                    let mut cols: Vec<String> = vec![row.cell.to_string()];
                    for (_, v) in &row.axis_values {
                        cols.push(axis_value_to_csv(v));
                    }
                    cols.push(row.replication.to_string());
                    cols.push(row.seed.to_string());
                    cols.push(fmt_opt(row.final_metric));
                    cols.push(fmt_opt(row.mean_agg_error));
                    cols.push(row.total_removed.to_string());
                    out.push_str(&cols.join(","));
                    out.push('\n');
                }
                fs::write(&path, out)?;
                files.push(path);
            }
            if want_json {
                let path = out_dir.join("sweep_results.json");
                let envelope = serde_json::json!({
                    "config": config.to_json_value(),
                    "master_seed": common.master_seed,
                    "rows": rows,
                });
                fs::write(&path, serde_json::to_string_pretty(&envelope).unwrap())?;
                files.push(path);
            }
        }
    }
    Ok(RunArtifacts { files })
}

/// Axis values may be scalars or structured (for example whole aggregator
/// objects); structured values are embedded as quoted JSON.
fn axis_value_to_csv(v: &Value) -> String {
    match v {
        Value::Number(n) => n.to_string(),
        Value::Bool(b) => b.to_string(),
        Value::String(s) => csv_quote(s),
        other => csv_quote(&other.to_string()),
    }
}

fn csv_quote(s: &str) -> String {
    if s.contains(',') || s.contains('"') || s.contains('\n') {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Writes the machine-readable error envelope the CLI prints on failure.
pub fn error_envelope(err: &Error) -> String {
    serde_json::to_string_pretty(&serde_json::json!({
        "error": {
            "kind": err.kind(),
            "message": err.to_string(),
        }
    }))
    .expect("serializable")
}

/// Resolves the output directory: CLI flag, then BYZSHIELD_OUT, then config.
pub fn resolve_out_dir(cli: Option<&Path>, config: &ExperimentConfig) -> PathBuf {
    if let Some(dir) = cli {
        return dir.to_path_buf();
    }
    if let Ok(env_dir) = std::env::var("BYZSHIELD_OUT") {
        if !env_dir.is_empty() {
            return PathBuf::from(env_dir);
        }
    }
    PathBuf::from(&config.common().output_dir)
}

/// Convenience for tests: run and return the raw bytes of one artifact.
pub fn read_artifact(files: &RunArtifacts, name: &str) -> Result<Vec<u8>> {
    for f in &files.files {
        if f.file_name().map(|n| n == name).unwrap_or(false) {
            return Ok(fs::read(f)?);
        }
    }
    Err(Error::Io(std::io::Error::new(
        std::io::ErrorKind::NotFound,
        format!("artifact {name} not written"),
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::parse_config_str;

    fn estimate_text(seed: u64) -> String {
        format!(
            r#"{{
                "mode": "estimate",
                "d": 5, "N": 300, "N_A": 6, "alpha_clean": 0.5,
                "attack": {{"kind": "gaussian_noise", "per_coord_std": 4.0}},
                "params": {{"p": 2, "lambda_c": 8.0}},
                "replications": 3,
                "master_seed": {seed}
            }}"#
        )
    }

    #[test]
    fn replication_seeds_are_master_plus_index() {
        let cfg = parse_config_str(&estimate_text(7)).unwrap();
        let est = match &cfg {
            ExperimentConfig::Estimate(c) => c,
            _ => panic!(),
        };
        let reps = run_estimate(est).unwrap();
        assert_eq!(reps.len(), 3);
        assert_eq!(
            reps.iter().map(|r| r.row.seed).collect::<Vec<_>>(),
            vec![7, 8, 9]
        );
    }

    #[test]
    fn estimate_artifacts_are_deterministic() {
        let cfg = parse_config_str(&estimate_text(11)).unwrap();
        let dir_a = tempfile::tempdir().unwrap();
        let dir_b = tempfile::tempdir().unwrap();
        let fa = run_experiment(&cfg, dir_a.path(), None).unwrap();
        let fb = run_experiment(&cfg, dir_b.path(), None).unwrap();
        let a = read_artifact(&fa, "estimate_results.csv").unwrap();
        let b = read_artifact(&fb, "estimate_results.csv").unwrap();
        assert_eq!(a, b);
        let a = read_artifact(&fa, "estimate_results.json").unwrap();
        let b = read_artifact(&fb, "estimate_results.json").unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn estimate_csv_schema_is_pinned() {
        let cfg = parse_config_str(&estimate_text(3)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let files = run_experiment(&cfg, dir.path(), None).unwrap();
        let bytes = read_artifact(&files, "estimate_results.csv").unwrap();
        let text = String::from_utf8(bytes).unwrap();
        let mut lines = text.lines();
        assert!(lines.next().unwrap().starts_with("# resolved_config: "));
        assert_eq!(
            lines.next().unwrap(),
            "replication,seed,mu_err,mu_err_sq,filter_iterations,removed_total,prefiltered,lambda_p_final,terminated_by"
        );
        assert_eq!(lines.count(), 3);
    }

    #[test]
    fn sweep_row_count_and_parallel_merge_stability() {
        let text = r#"{
            "mode": "sweep",
            "base": {
                "mode": "estimate",
                "d": 5, "N": 120, "N_A": 4, "alpha_clean": 0.5,
                "attack": {"kind": "gaussian_noise", "per_coord_std": 3.0},
                "params": {"p": 1, "lambda_c": 6.0}
            },
            "sweep": [{"path": "alpha_clean", "values": [0.2, 0.4, 0.8]}],
            "replications": 5,
            "master_seed": 2
        }"#;
        let cfg = parse_config_str(text).unwrap();
        let sweep = match &cfg {
            ExperimentConfig::Sweep(s) => s,
            _ => panic!(),
        };
        let serial = run_sweep(sweep, None).unwrap();
        assert_eq!(serial.len(), 15);
        let parallel = run_sweep(sweep, Some(4)).unwrap();
        let ser: Vec<String> = serial.iter().map(|r| format!("{r:?}")).collect();
        let par: Vec<String> = parallel.iter().map(|r| format!("{r:?}")).collect();
        assert_eq!(ser, par);
    }

    #[test]
    fn train_csv_schema_is_pinned() {
        let text = r#"{
            "mode": "train",
            "d": 3, "m": 5, "n_per_worker": 2, "N_A": 3, "T": 4,
            "aggregator": {"kind": "master_only"},
            "alpha_clean": 1.0,
            "attack": {"kind": "gaussian_noise", "per_coord_std": 1.0},
            "loss": {"kind": "quadratic"},
            "master_seed": 5
        }"#;
        let cfg = parse_config_str(text).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let files = run_experiment(&cfg, dir.path(), None).unwrap();
        let bytes = read_artifact(&files, "train_metrics_rep0.csv").unwrap();
        let textout = String::from_utf8(bytes).unwrap();
        let mut lines = textout.lines();
        assert!(lines.next().unwrap().starts_with("# resolved_config: "));
        assert_eq!(
            lines.next().unwrap(),
            "round,dist_to_wstar,agg_error,filter_iterations,removed_total,lambda_p_final,wall_ms"
        );
        assert_eq!(lines.count(), 4);
    }

    #[test]
    fn out_dir_resolution_order() {
        let cfg = parse_config_str(&estimate_text(0)).unwrap();
        // config default
        std::env::remove_var("BYZSHIELD_OUT");
        assert_eq!(resolve_out_dir(None, &cfg), PathBuf::from("out"));
        // env overrides config
        std::env::set_var("BYZSHIELD_OUT", "/tmp/byz-env");
        assert_eq!(resolve_out_dir(None, &cfg), PathBuf::from("/tmp/byz-env"));
        // CLI flag beats env
        assert_eq!(
            resolve_out_dir(Some(Path::new("/tmp/cli")), &cfg),
            PathBuf::from("/tmp/cli")
        );
        std::env::remove_var("BYZSHIELD_OUT");
    }
}
