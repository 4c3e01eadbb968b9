//! Synchronous distributed gradient descent with a Byzantine channel.
//!
//! One master holds a small verified dataset; m workers hold n samples each.
//! Every round the master broadcasts the weights, workers return local
//! gradients, a fixed subset of workers is Byzantine and their messages are
//! replaced per the attack strategy, and the chosen aggregator produces the
//! descent direction. Losses are synthetic with a known optimum so the error
//! is measured exactly.

use crate::aggregators::{
    aggregate_distance_filter, aggregate_master_only, aggregate_semi_verified, aggregate_zeno,
    AggregatorSpec, GradientBatch,
};
use crate::contamination::{AttackStrategy, ContaminationSpec};
use crate::error::{Error, Result};
use crate::estimator::ContaminationModel;
use crate::points::{PointSet, Vector};
use crate::rng::{mix, stream, Purpose};
use nalgebra::DMatrix;
use rand::seq::index::sample as index_sample;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::time::Instant;

/// Loss model selector as it appears in configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LossKind {
    /// `V = <U, w*> + W`, squared loss. `w*` coordinates are N(0, 2)
    /// (variance two), U entries N(0, 1), W noise N(0, noise_std^2).
    LinearRegression {
        #[serde(default = "default_noise_std")]
        noise_std: f64,
    },
    /// `F(w) = 0.5 ||w - w*||^2` with per-sample loss equal to F. When
    /// `w_star` is absent it is drawn like the regression one.
    Quadratic {
        #[serde(default)]
        w_star: Option<Vec<f64>>,
    },
}

fn default_noise_std() -> f64 {
    1.0
}

/// Full simulation description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub d: usize,
    pub m: usize,
    pub n_per_worker: usize,
    #[serde(rename = "N_A")]
    pub n_aux: usize,
    #[serde(rename = "T")]
    pub rounds: usize,
    pub eta: f64,
    #[serde(default)]
    pub w0: Option<Vec<f64>>,
    pub aggregator: AggregatorSpec,
    pub contamination: ContaminationSpec,
    pub loss: LossKind,
    pub master_seed: u64,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Validation(msg));
        if self.d < 1 {
            return bad("d must be >= 1".into());
        }
        if self.m < 1 || self.n_per_worker < 1 || self.n_aux < 1 {
            return bad("m, n_per_worker and N_A must be >= 1".into());
        }
        if self.rounds < 1 {
            return bad("T must be >= 1".into());
        }
        if !(self.eta.is_finite() && self.eta > 0.0) {
            return bad("eta must be positive".into());
        }
        if let Some(w0) = &self.w0 {
            if w0.len() != self.d {
                return bad(format!("w0 has length {}, expected d={}", w0.len(), self.d));
            }
        }
        if let LossKind::Quadratic { w_star: Some(w) } = &self.loss {
            if w.len() != self.d {
                return bad(format!(
                    "quadratic w_star has length {}, expected d={}",
                    w.len(),
                    self.d
                ));
            }
        }
        self.aggregator
            .validate(self.m)
            .and_then(|_| self.contamination.validate())
            .map_err(|e| Error::Validation(e.to_string()))
    }
}

/// One worker's local regression data.
#[derive(Debug, Clone)]
pub struct WorkerData {
    /// n-by-d design matrix.
    pub u: DMatrix<f64>,
    pub v: Vector,
}

/// Resolved loss with generated data and the known optimum.
#[derive(Debug, Clone)]
pub enum LossModel {
    LinearRegression {
        workers: Vec<WorkerData>,
        aux: WorkerData,
        w_star: Vector,
    },
    Quadratic {
        w_star: Vector,
    },
}

impl LossModel {
    pub fn w_star(&self) -> &Vector {
        match self {
            LossModel::LinearRegression { w_star, .. } => w_star,
            LossModel::Quadratic { w_star } => w_star,
        }
    }
}

/// Per-round measurements.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: usize,
    /// `||w_t - w*||` at the start of the round.
    pub dist_to_wstar: f64,
    /// `||g(w_t) - grad F(w_t)||`.
    pub agg_error: f64,
    pub filter_iterations: usize,
    pub removed_total: usize,
    /// Smallest retained eigenvalue of the final filter spectrum; absent for
    /// aggregators without a filter loop.
    pub lambda_p_final: Option<f64>,
    /// Wall-clock time; excluded from all determinism contracts.
    pub wall_ms: f64,
}

/// Full run output. Equality (and the reproducibility contract) ignores
/// wall-clock fields.
#[derive(Debug, Clone, Serialize)]
pub struct RunMetrics {
    pub rounds: Vec<RoundRecord>,
    pub final_w: Vec<f64>,
    pub final_dist: f64,
}

impl RunMetrics {
    /// Deterministic content comparison: everything except wall_ms.
    pub fn same_trajectory(&self, other: &RunMetrics) -> bool {
        if self.final_w != other.final_w || self.final_dist != other.final_dist {
            return false;
        }
        if self.rounds.len() != other.rounds.len() {
            return false;
        }
        self.rounds.iter().zip(&other.rounds).all(|(a, b)| {
            a.round == b.round
                && a.dist_to_wstar == b.dist_to_wstar
                && a.agg_error == b.agg_error
                && a.filter_iterations == b.filter_iterations
                && a.removed_total == b.removed_total
                && a.lambda_p_final == b.lambda_p_final
        })
    }
}

/// Draws regression samples `V = <U, w*> + W`. `w*` comes from its own
/// stream so data and optimum can be varied independently.
pub fn gen_linear_regression<R: Rng, S: Rng>(
    d: usize,
    n: usize,
    noise_std: f64,
    wstar_rng: &mut S,
    data_rng: &mut R,
) -> Result<(Vec<(Vector, f64)>, Vector)> {
    if d < 1 || n < 1 {
        return Err(Error::Validation("d and N must be >= 1".into()));
    }
    let wstar_dist = Normal::new(0.0, 2.0f64.sqrt()).expect("valid std");
    let w_star = Vector::from_fn(d, |_, _| wstar_dist.sample(wstar_rng));
    let unit = Normal::new(0.0, 1.0).expect("valid std");
    let mut rows = Vec::with_capacity(n);
    for _ in 0..n {
        let u = Vector::from_fn(d, |_, _| unit.sample(data_rng));
        let noise = if noise_std > 0.0 {
            Normal::new(0.0, noise_std).expect("valid std").sample(data_rng)
        } else {
            0.0
        };
        let v = u.dot(&w_star) + noise;
        rows.push((u, v));
    }
    Ok((rows, w_star))
}

/// Mean gradient of the squared loss over the worker's samples:
/// `(1/n) sum (<U_j, w> - V_j) U_j`. For the quadratic loss this is
/// `w - w*` for every worker.
pub fn local_gradient(worker: &WorkerData, w: &Vector) -> Result<Vector> {
    if worker.u.ncols() != w.len() {
        return Err(Error::DimensionMismatch {
            expected: worker.u.ncols(),
            got: w.len(),
        });
    }
    let residual = &worker.u * w - &worker.v;
    Ok(worker.u.transpose() * residual / worker.u.nrows() as f64)
}

/// Closed-form population gradient, used only for metrics.
pub fn true_gradient(loss: &LossModel, w: &Vector) -> Result<Vector> {
    match loss {
        // E[U U^T] = I, so grad F(w) = w - w*.
        LossModel::LinearRegression { w_star, .. } => Ok(w - w_star),
        LossModel::Quadratic { w_star } => Ok(w - w_star),
    }
}

fn resolve_loss(config: &TrainConfig) -> Result<LossModel> {
    match &config.loss {
        LossKind::Quadratic { w_star } => {
            let w_star = match w_star {
                Some(w) => Vector::from_vec(w.clone()),
                None => {
                    let mut rng = stream(config.master_seed, Purpose::WStar, 0);
                    let dist = Normal::new(0.0, 2.0f64.sqrt()).expect("valid std");
                    Vector::from_fn(config.d, |_, _| dist.sample(&mut rng))
                }
            };
            Ok(LossModel::Quadratic { w_star })
        }
        LossKind::LinearRegression { noise_std } => {
            let mut wstar_rng = stream(config.master_seed, Purpose::WStar, 0);
            let mut data_rng = stream(config.master_seed, Purpose::CleanData, 0);
            let n_total = config.m * config.n_per_worker + config.n_aux;
            let (rows, w_star) = gen_linear_regression(
                config.d,
                n_total,
                *noise_std,
                &mut wstar_rng,
                &mut data_rng,
            )?;
            let mut workers = Vec::with_capacity(config.m);
            for k in 0..config.m {
                let start = k * config.n_per_worker;
                workers.push(pack_worker(
                    &rows[start..start + config.n_per_worker],
                    config.d,
                ));
            }
            let aux = pack_worker(&rows[config.m * config.n_per_worker..], config.d);
            Ok(LossModel::LinearRegression {
                workers,
                aux,
                w_star,
            })
        }
    }
}

fn pack_worker(rows: &[(Vector, f64)], d: usize) -> WorkerData {
    let n = rows.len();
    let mut u = DMatrix::zeros(n, d);
    let mut v = Vector::zeros(n);
    for (i, (ui, vi)) in rows.iter().enumerate() {
        u.set_row(i, &ui.transpose());
        v[i] = *vi;
    }
    WorkerData { u, v }
}

fn honest_gradients(loss: &LossModel, w: &Vector, m: usize) -> Result<PointSet> {
    let d = w.len();
    let mut set = PointSet::new(d);
    match loss {
        LossModel::LinearRegression { workers, .. } => {
            for (i, wk) in workers.iter().enumerate().take(m) {
                set.insert(i as u64, local_gradient(wk, w)?)?;
            }
        }
        LossModel::Quadratic { w_star } => {
            let g = w - w_star;
            for i in 0..m {
                set.insert(i as u64, g.clone())?;
            }
        }
    }
    Ok(set)
}

fn aux_gradients(loss: &LossModel, w: &Vector, n_aux: usize) -> Result<PointSet> {
    let d = w.len();
    let mut set = PointSet::new(d);
    match loss {
        LossModel::LinearRegression { aux, .. } => {
            for j in 0..aux.u.nrows() {
                let u_j = aux.u.row(j).transpose();
                let g = &u_j * (u_j.dot(w) - aux.v[j]);
                set.insert(j as u64, g)?;
            }
        }
        LossModel::Quadratic { w_star } => {
            let g = w - w_star;
            for j in 0..n_aux {
                set.insert(j as u64, g.clone())?;
            }
        }
    }
    Ok(set)
}

/// The Byzantine worker set, fixed once per run. Additive: uniform draw,
/// value-independent. Strong: the workers most extreme along the attack
/// direction of their round-zero gradients.
fn byzantine_set(
    config: &TrainConfig,
    round0_gradients: &PointSet,
) -> Result<BTreeSet<u64>> {
    let m = config.m;
    let n_bad = ((1.0 - config.contamination.alpha_clean) * m as f64).floor() as usize;
    if n_bad == 0 {
        return Ok(BTreeSet::new());
    }
    match config.contamination.model {
        ContaminationModel::Additive => {
            let mut rng = stream(config.master_seed, Purpose::Mask, 0);
            Ok(index_sample(&mut rng, m, n_bad)
                .into_iter()
                .map(|k| k as u64)
                .collect())
        }
        ContaminationModel::Strong => {
            let dir = match &config.contamination.strategy {
                AttackStrategy::MeanShift { direction, .. } => direction.unit(config.d)?,
                _ => {
                    let mean = crate::estimator::sample_mean(round0_gradients)?;
                    let cov = crate::estimator::sample_covariance(round0_gradients, &mean)?;
                    let st = crate::estimator::top_spectrum(&cov, 1)?;
                    let mut u = st.basis.column(0).into_owned();
                    let imax = u
                        .iter()
                        .enumerate()
                        .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
                        .map(|(i, _)| i)
                        .unwrap_or(0);
                    if u[imax] < 0.0 {
                        u = -u;
                    }
                    u
                }
            };
            let mut proj: Vec<(u64, f64)> = round0_gradients
                .iter()
                .map(|(id, g)| (id, g.dot(&dir)))
                .collect();
            proj.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
            Ok(proj.into_iter().take(n_bad).map(|(id, _)| id).collect())
        }
    }
}

/// Replaces corrupted workers' messages for one round. The reference mean
/// for placement strategies is the true gradient, which the simulated
/// adversary knows.
fn corrupt_round(
    messages: &mut PointSet,
    byz: &BTreeSet<u64>,
    strategy: &AttackStrategy,
    grad_f: &Vector,
    rng: &mut impl Rng,
) -> Result<()> {
    let d = messages.dim();
    match strategy {
        AttackStrategy::GaussianNoise { per_coord_std } => {
            let normal = Normal::new(0.0, *per_coord_std).expect("valid std");
            for &id in byz {
                let v = Vector::from_fn(d, |_, _| normal.sample(rng));
                messages.replace(id, v)?;
            }
        }
        AttackStrategy::MeanShift {
            direction,
            magnitude,
        } => {
            let u = direction.unit(d)?;
            let target = grad_f + u * *magnitude;
            for &id in byz {
                messages.replace(id, target.clone())?;
            }
        }
        AttackStrategy::SymmetricFlip { pivot } => {
            if pivot.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: pivot.len(),
                });
            }
            let piv = Vector::from_vec(pivot.clone());
            for &id in byz {
                let x = messages.get(id).expect("byz id exists").clone();
                messages.replace(id, &piv * 2.0 - x)?;
            }
        }
        AttackStrategy::Clusters {
            num_clusters,
            spread,
            radius,
        } => {
            if *num_clusters > d {
                return Err(Error::InvalidSpec(format!(
                    "clusters.num_clusters {num_clusters} exceeds dimension {d}"
                )));
            }
            let normal = Normal::new(0.0, 1.0).expect("valid std");
            let mut basis: Vec<Vector> = Vec::with_capacity(*num_clusters);
            while basis.len() < *num_clusters {
                let mut v = Vector::from_fn(d, |_, _| normal.sample(rng));
                for b in &basis {
                    let c = v.dot(b);
                    v -= b * c;
                }
                let nn = v.norm();
                if nn > 1e-9 {
                    basis.push(v / nn);
                }
            }
            for (k, &id) in byz.iter().enumerate() {
                let center = grad_f + &basis[k % basis.len()] * *radius;
                let v = if *spread > 0.0 {
                    let jitter = Normal::new(0.0, *spread).expect("valid std");
                    Vector::from_fn(d, |j, _| center[j] + jitter.sample(rng))
                } else {
                    center
                };
                messages.replace(id, v)?;
            }
        }
        AttackStrategy::LowerBoundInstance { .. } => {
            return Err(Error::InvalidSpec(
                "lower_bound_instance is not a channel attack".into(),
            ));
        }
    }
    Ok(())
}

/// Runs T rounds of robust distributed gradient descent. Deterministic in
/// `master_seed` (wall-clock fields aside).
pub fn run_training(config: &TrainConfig) -> Result<RunMetrics> {
    config.validate()?;
    let loss = resolve_loss(config)?;
    let w_star = loss.w_star().clone();
    let mut w = match &config.w0 {
        Some(v) => Vector::from_vec(v.clone()),
        None => Vector::zeros(config.d),
    };

    // The Byzantine set is fixed for the whole run; the strong model picks
    // it by inspecting round-zero gradients.
    let round0 = honest_gradients(&loss, &w, config.m)?;
    let byz = byzantine_set(config, &round0)?;

    let mut rounds = Vec::with_capacity(config.rounds);
    for t in 0..config.rounds {
        let started = Instant::now();
        let dist = (&w - &w_star).norm();
        let grad_f = true_gradient(&loss, &w)?;

        let mut messages = honest_gradients(&loss, &w, config.m)?;
        if !byz.is_empty() {
            let mut attack_rng = stream(config.master_seed, Purpose::Attack, t as u64);
            corrupt_round(
                &mut messages,
                &byz,
                &config.contamination.strategy,
                &grad_f,
                &mut attack_rng,
            )?;
        }
        let batch = GradientBatch {
            worker_gradients: messages,
            aux_gradients: aux_gradients(&loss, &w, config.n_aux)?,
            n_per_worker: config.n_per_worker,
            round_index: t,
        };

        let (g, filter_iterations, removed_total, lambda_p_final) = match &config.aggregator {
            AggregatorSpec::MasterOnly => (aggregate_master_only(&batch)?, 0, 0, None),
            AggregatorSpec::DistanceFilter { q } => {
                (aggregate_distance_filter(&batch, *q)?, 0, 0, None)
            }
            AggregatorSpec::Zeno { q, gamma, rho_reg } => (
                aggregate_zeno(&batch, *q, gamma.unwrap_or(config.eta), *rho_reg)?,
                0,
                0,
                None,
            ),
            AggregatorSpec::SemiVerified { params } => {
                let mut round_params = params.clone();
                round_params.seed = mix(
                    config.master_seed ^ params.seed,
                    Purpose::Estimator as u64,
                    t as u64,
                );
                let (g, trace) = aggregate_semi_verified(&batch, &round_params)?;
                (
                    g,
                    trace.iterations.len(),
                    trace.removed_total(),
                    Some(trace.final_lambda_p),
                )
            }
        };

        let agg_error = (&g - &grad_f).norm();
        w -= &g * config.eta;
        rounds.push(RoundRecord {
            round: t,
            dist_to_wstar: dist,
            agg_error,
            filter_iterations,
            removed_total,
            lambda_p_final,
            wall_ms: started.elapsed().as_secs_f64() * 1e3,
        });
    }

    let final_dist = (&w - &w_star).norm();
    Ok(RunMetrics {
        rounds,
        final_w: w.iter().copied().collect(),
        final_dist,
    })
}
