//! Semi-verified mean estimation.
//!
//! The estimator combines a large untrusted sample set with a small verified
//! one. It repeatedly eigendecomposes the sample covariance of the untrusted
//! set; while the p-th eigenvalue exceeds the threshold `lambda_c`, samples
//! are removed with probability proportional to their whitened, projected
//! squared residual (the tau score). The final estimate uses the verified
//! data inside the surviving top-p eigenspace and the filtered untrusted
//! mean on its orthogonal complement.

use crate::error::{Error, Result};
use crate::points::{PointSet, Vector};
use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Relative floor under which an eigenvalue is treated as numerically zero.
const EPS_EIG_REL: f64 = 1e-12;

/// Absolute entrywise tolerance for the symmetry precondition.
const SYM_TOL: f64 = 1e-8;

/// Sorted eigendecomposition of a covariance matrix together with the
/// rank-p projector onto its leading eigenspace.
#[derive(Debug, Clone)]
pub struct SpectralState {
    /// Eigenvalues sorted non-increasing.
    pub eigenvalues: Vec<f64>,
    /// Orthonormal basis; column j pairs with `eigenvalues[j]`.
    pub basis: DMatrix<f64>,
    /// Subspace rank.
    pub p: usize,
    /// `P = U_p U_p^T`.
    pub projector: DMatrix<f64>,
}

impl SpectralState {
    pub fn dim(&self) -> usize {
        self.basis.nrows()
    }

    /// The p-th largest eigenvalue (the loop guard value).
    pub fn lambda_p(&self) -> f64 {
        self.eigenvalues[self.p - 1]
    }

    /// Numerical floor below which eigenvalues cannot be whitened with.
    pub fn eps_eig(&self) -> f64 {
        EPS_EIG_REL * self.eigenvalues[0].max(1.0)
    }

    /// Applies `I - P` to a vector.
    pub fn complement_apply(&self, v: &Vector) -> Vector {
        v - &self.projector * v
    }
}

/// Prefilter applied once before the removal loop.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PrefilterMode {
    /// No prefilter. The default; the norm rule mainly eases analysis and
    /// deletes clean data whenever the true mean is far from the origin.
    #[default]
    Off,
    /// Drop samples with `||y|| > threshold`.
    PaperNorm,
    /// Drop samples with `||y - mean(aux)|| > threshold`.
    Centered,
}

/// How samples are removed each iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum RemovalMode {
    /// Each sample is removed independently with probability `tau/tau_max`;
    /// the argmax is always removed, so progress is guaranteed.
    #[default]
    Randomized,
    /// Remove the `top_k` samples with largest tau, ties by smaller id.
    TopK,
}

/// Estimator configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorParams {
    pub p: usize,
    pub lambda_c: f64,
    #[serde(default)]
    pub prefilter_mode: PrefilterMode,
    /// Defaults to `|S0|^(1/3)` at run time.
    #[serde(default)]
    pub prefilter_threshold: Option<f64>,
    #[serde(default)]
    pub removal_mode: RemovalMode,
    #[serde(default = "default_top_k")]
    pub top_k: usize,
    /// Defaults to `|S0|` at run time.
    #[serde(default)]
    pub max_iterations: Option<usize>,
    /// Defaults to `p + 1` at run time.
    #[serde(default)]
    pub min_survivors: Option<usize>,
    #[serde(default)]
    pub seed: u64,
}

fn default_top_k() -> usize {
    1
}

impl EstimatorParams {
    pub fn new(p: usize, lambda_c: f64) -> Self {
        EstimatorParams {
            p,
            lambda_c,
            prefilter_mode: PrefilterMode::Off,
            prefilter_threshold: None,
            removal_mode: RemovalMode::Randomized,
            top_k: 1,
            max_iterations: None,
            min_survivors: None,
            seed: 0,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.p < 1 {
            return Err(Error::InvalidParams("p must be >= 1".into()));
        }
        if !(self.lambda_c.is_finite() && self.lambda_c > 0.0) {
            return Err(Error::InvalidParams("lambda_c must be positive".into()));
        }
        if self.top_k < 1 {
            return Err(Error::InvalidParams("top_k must be >= 1".into()));
        }
        if let Some(ms) = self.min_survivors {
            if ms < self.p + 1 {
                return Err(Error::InvalidParams(format!(
                    "min_survivors must be >= p + 1 = {}",
                    self.p + 1
                )));
            }
        }
        if let Some(mi) = self.max_iterations {
            if mi < 1 {
                return Err(Error::InvalidParams("max_iterations must be >= 1".into()));
            }
        }
        if let Some(t) = self.prefilter_threshold {
            if !(t.is_finite() && t > 0.0) {
                return Err(Error::InvalidParams(
                    "prefilter_threshold must be positive".into(),
                ));
            }
        }
        Ok(())
    }
}

/// Why the removal loop stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    EigenvalueBelowThreshold,
    MaxIterations,
    SurvivorFloor,
    /// Only appears on the error path, attached to a degenerate-eigenvalue
    /// failure; successful runs never carry it.
    DegenerateEigenvalue,
}

/// One firing iteration of the removal loop.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IterationRecord {
    /// Surviving count at the start of the iteration.
    pub surviving_count: usize,
    #[serde(rename = "lambda_p")]
    pub lambda_p: f64,
    pub removed_ids: Vec<u64>,
    pub tau_mean: f64,
    pub tau_max: f64,
}

/// Audit record of a full estimator run.
#[derive(Debug, Clone, Serialize)]
pub struct EstimatorTrace {
    pub iterations: Vec<IterationRecord>,
    pub prefiltered_ids: Vec<u64>,
    pub terminated_by: Termination,
    /// Eigenvalues of the final surviving set, sorted non-increasing.
    pub final_eigenvalues: Vec<f64>,
    pub final_lambda_p: f64,
    pub surviving_count: usize,
    #[serde(skip)]
    pub final_projector: Option<SpectralState>,
}

impl EstimatorTrace {
    pub fn removed_total(&self) -> usize {
        self.iterations.iter().map(|r| r.removed_ids.len()).sum()
    }
}

/// Estimate plus its audit trace.
#[derive(Debug, Clone)]
pub struct EstimateResult {
    pub mu_hat: Vector,
    pub trace: EstimatorTrace,
}

/// Arithmetic mean of the member vectors.
pub fn sample_mean(points: &PointSet) -> Result<Vector> {
    if points.is_empty() {
        return Err(Error::EmptySet);
    }
    let mut acc = Vector::zeros(points.dim());
    for (_, v) in points.iter() {
        acc += v;
    }
    Ok(acc / points.len() as f64)
}

/// Population covariance `(1/|S|) sum (y - mean)(y - mean)^T`, symmetrized.
///
/// The divisor is `|S|`, never `|S| - 1`: the tau-mean identity below is
/// exact only for the population form.
pub fn sample_covariance(points: &PointSet, mean: &Vector) -> Result<DMatrix<f64>> {
    if points.is_empty() {
        return Err(Error::EmptySet);
    }
    if mean.len() != points.dim() {
        return Err(Error::DimensionMismatch {
            expected: points.dim(),
            got: mean.len(),
        });
    }
    let xc = centered_matrix(points, mean);
    let n = points.len() as f64;
    let raw = &xc * xc.transpose() / n;
    Ok((&raw + raw.transpose()) * 0.5)
}

fn centered_matrix(points: &PointSet, mean: &Vector) -> DMatrix<f64> {
    let mut m = points.to_matrix();
    for mut col in m.column_iter_mut() {
        col -= mean;
    }
    m
}

/// Eigendecomposition sorted by descending eigenvalue, plus the projector
/// onto the p leading eigenvectors. Eigenvalue ties keep solver order.
pub fn top_spectrum(cov: &DMatrix<f64>, p: usize) -> Result<SpectralState> {
    let d = cov.nrows();
    if cov.ncols() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: cov.ncols(),
        });
    }
    let mut max_asym = 0.0f64;
    for i in 0..d {
        for j in (i + 1)..d {
            max_asym = max_asym.max((cov[(i, j)] - cov[(j, i)]).abs());
        }
    }
    if max_asym > SYM_TOL {
        return Err(Error::NotSymmetric {
            max_asym,
            tol: SYM_TOL,
        });
    }
    if p < 1 || p > d {
        return Err(Error::RankRequest { p, d });
    }
    let eig = SymmetricEigen::new(cov.clone());
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let eigenvalues: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut basis = DMatrix::zeros(d, d);
    for (j, &i) in order.iter().enumerate() {
        basis.set_column(j, &eig.eigenvectors.column(i));
    }
    let up = basis.columns(0, p).into_owned();
    let projector = &up * up.transpose();
    Ok(SpectralState {
        eigenvalues,
        basis,
        p,
        projector,
    })
}

/// Tau score per sample: the squared norm of the whitened residual projected
/// onto the top-p eigenspace, computed in the numerically stable form
/// `sum_{j<=p} <u_j, y - mean>^2 / lambda_j`.
///
/// The mean of the scores over the set equals p (up to round-off), since the
/// whitened data has identity covariance restricted to the eigenspace.
pub fn tau_scores(
    points: &PointSet,
    mean: &Vector,
    spectrum: &SpectralState,
) -> Result<BTreeMap<u64, f64>> {
    if points.is_empty() {
        return Err(Error::EmptySet);
    }
    if spectrum.dim() != points.dim() || mean.len() != points.dim() {
        return Err(Error::DimensionMismatch {
            expected: points.dim(),
            got: spectrum.dim(),
        });
    }
    let eps = spectrum.eps_eig();
    let lambda_p = spectrum.lambda_p();
    if lambda_p <= eps {
        return Err(Error::DegenerateEigenvalue {
            p: spectrum.p,
            value: lambda_p,
            floor: eps,
            trace: None,
        });
    }
    let up = spectrum.basis.columns(0, spectrum.p);
    let mut scores = BTreeMap::new();
    for (id, v) in points.iter() {
        let r = v - mean;
        let proj = up.transpose() * r;
        let mut tau = 0.0;
        for j in 0..spectrum.p {
            let lam = spectrum.eigenvalues[j];
            if lam <= eps {
                continue;
            }
            tau += proj[j] * proj[j] / lam;
        }
        scores.insert(id, tau);
    }
    Ok(scores)
}

/// Outcome of one look at the surviving set.
#[derive(Debug, Clone)]
pub struct FilterOutcome {
    /// Ids to remove, ascending. Empty means the loop is done.
    pub removed: Vec<u64>,
    pub spectrum: SpectralState,
    pub lambda_p: f64,
    /// True when the removal was capped by the survivor floor.
    pub survivor_floor: bool,
    pub tau_mean: Option<f64>,
    pub tau_max: Option<f64>,
}

/// One iteration of the removal loop. Does not mutate the set; the caller
/// applies `removed`. Randomized draws are consumed in ascending-id order,
/// one per surviving sample, so outcomes are seed-stable.
pub fn filter_once<R: Rng>(
    s: &PointSet,
    params: &EstimatorParams,
    rng: &mut R,
) -> Result<FilterOutcome> {
    let min_survivors = params.min_survivors.unwrap_or(params.p + 1);
    let mean = sample_mean(s)?;
    let cov = sample_covariance(s, &mean)?;
    let spectrum = top_spectrum(&cov, params.p)?;
    let lambda_p = spectrum.lambda_p();

    if lambda_p < params.lambda_c {
        return Ok(FilterOutcome {
            removed: Vec::new(),
            spectrum,
            lambda_p,
            survivor_floor: false,
            tau_mean: None,
            tau_max: None,
        });
    }

    let scores = tau_scores(s, &mean, &spectrum)?;
    let n = s.len();
    let tau_mean = scores.values().sum::<f64>() / n as f64;
    let (argmax_id, tau_max) = scores
        .iter()
        .fold((u64::MAX, f64::NEG_INFINITY), |(bid, bv), (&id, &v)| {
            if v > bv {
                (id, v)
            } else {
                (bid, bv)
            }
        });

    let budget = n.saturating_sub(min_survivors);
    let mut marked: Vec<(u64, f64)> = Vec::new();
    match params.removal_mode {
        RemovalMode::Randomized => {
            // One draw per id in ascending order, even for the argmax, so the
            // stream position does not depend on score values.
            for (&id, &tau) in scores.iter() {
                let u: f64 = rng.random();
                if u < tau / tau_max || id == argmax_id {
                    marked.push((id, tau));
                }
            }
        }
        RemovalMode::TopK => {
            let k = params.top_k.min(budget);
            let mut order: Vec<(u64, f64)> = scores.iter().map(|(&i, &t)| (i, t)).collect();
            order.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
            marked = order.into_iter().take(k).collect();
        }
    }

    let mut survivor_floor = false;
    if marked.len() > budget {
        // Partial removal up to the floor, keeping the worst offenders.
        marked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        marked.truncate(budget);
        survivor_floor = true;
    }
    if params.removal_mode == RemovalMode::TopK && params.top_k > budget {
        survivor_floor = true;
    }

    let mut removed: Vec<u64> = marked.into_iter().map(|(id, _)| id).collect();
    removed.sort_unstable();

    Ok(FilterOutcome {
        removed,
        spectrum,
        lambda_p,
        survivor_floor,
        tau_mean: Some(tau_mean),
        tau_max: Some(tau_max),
    })
}

/// Runs the full estimator: prefilter, removal loop, projection-split blend.
///
/// Returns `mu_hat = P mean(aux) + (I - P) mean(S)` where P projects onto the
/// top-p eigenspace of the final surviving set. Deterministic in
/// `params.seed`.
pub fn semi_verified_mean(
    s0: &PointSet,
    aux: &PointSet,
    params: &EstimatorParams,
) -> Result<EstimateResult> {
    params.validate()?;
    if s0.is_empty() || aux.is_empty() {
        return Err(Error::EmptySet);
    }
    if aux.dim() != s0.dim() {
        return Err(Error::DimensionMismatch {
            expected: s0.dim(),
            got: aux.dim(),
        });
    }
    if params.p > s0.dim() {
        return Err(Error::RankRequest {
            p: params.p,
            d: s0.dim(),
        });
    }

    let aux_mean = sample_mean(aux)?;
    let threshold = params
        .prefilter_threshold
        .unwrap_or((s0.len() as f64).cbrt());
    let mut s = s0.clone();
    let mut prefiltered_ids = Vec::new();
    match params.prefilter_mode {
        PrefilterMode::Off => {}
        PrefilterMode::PaperNorm => {
            for (id, v) in s0.iter() {
                if v.norm() > threshold {
                    prefiltered_ids.push(id);
                }
            }
        }
        PrefilterMode::Centered => {
            for (id, v) in s0.iter() {
                if (v - &aux_mean).norm() > threshold {
                    prefiltered_ids.push(id);
                }
            }
        }
    }
    s.remove_many(&prefiltered_ids);
    if s.is_empty() {
        return Err(Error::AllFiltered);
    }

    let max_iterations = params.max_iterations.unwrap_or(s0.len());
    let mut rng = ChaCha12Rng::seed_from_u64(params.seed);
    let mut iterations: Vec<IterationRecord> = Vec::new();

    let terminated_by = loop {
        if iterations.len() >= max_iterations {
            break Termination::MaxIterations;
        }
        let outcome = match filter_once(&s, params, &mut rng) {
            Ok(o) => o,
            Err(Error::DegenerateEigenvalue {
                p, value, floor, ..
            }) => {
                let trace = finish_trace(
                    &s,
                    params,
                    iterations,
                    prefiltered_ids,
                    Termination::DegenerateEigenvalue,
                )?;
                return Err(Error::DegenerateEigenvalue {
                    p,
                    value,
                    floor,
                    trace: Some(Box::new(trace)),
                });
            }
            Err(e) => return Err(e),
        };
        if outcome.removed.is_empty() {
            break if outcome.survivor_floor {
                Termination::SurvivorFloor
            } else {
                Termination::EigenvalueBelowThreshold
            };
        }
        iterations.push(IterationRecord {
            surviving_count: s.len(),
            lambda_p: outcome.lambda_p,
            removed_ids: outcome.removed.clone(),
            tau_mean: outcome.tau_mean.unwrap_or(f64::NAN),
            tau_max: outcome.tau_max.unwrap_or(f64::NAN),
        });
        s.remove_many(&outcome.removed);
        if outcome.survivor_floor {
            break Termination::SurvivorFloor;
        }
    };

    let trace = finish_trace(&s, params, iterations, prefiltered_ids, terminated_by)?;
    let spectrum = trace.final_projector.as_ref().expect("final spectrum set");
    let s_mean = sample_mean(&s)?;
    let mu_hat = &spectrum.projector * &aux_mean + spectrum.complement_apply(&s_mean);
    Ok(EstimateResult { mu_hat, trace })
}

fn finish_trace(
    s: &PointSet,
    params: &EstimatorParams,
    iterations: Vec<IterationRecord>,
    prefiltered_ids: Vec<u64>,
    terminated_by: Termination,
) -> Result<EstimatorTrace> {
    let mean = sample_mean(s)?;
    let cov = sample_covariance(s, &mean)?;
    let spectrum = top_spectrum(&cov, params.p)?;
    Ok(EstimatorTrace {
        iterations,
        prefiltered_ids,
        terminated_by,
        final_eigenvalues: spectrum.eigenvalues.clone(),
        final_lambda_p: spectrum.lambda_p(),
        surviving_count: s.len(),
        final_projector: Some(spectrum),
    })
}

/// Contamination model selector for parameter recommendation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContaminationModel {
    Additive,
    Strong,
}

/// Recommended `(p, lambda_c)` pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Recommendation {
    pub p: usize,
    pub lambda_c: f64,
}

/// Parameter recommendation from the error analysis of the two contamination
/// models: `p = floor(8/alpha) + 1` in both, and
/// `lambda_c = 32 sigma^2 (1 + 2d/(alpha N))` for additive or
/// `lambda_c = (8 sigma^2/alpha)(1 + sqrt(16 d ln^2 N / (3 alpha N)))^2` for
/// strong contamination. The bounds require strict inequalities, so both are
/// multiplied by `1 + margin`.
pub fn recommend_params(
    sigma: f64,
    alpha: f64,
    n: usize,
    d: usize,
    model: ContaminationModel,
    margin: f64,
) -> Result<Recommendation> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::InvalidAlpha(alpha));
    }
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(Error::InvalidParams("sigma must be positive".into()));
    }
    if n < 1 || d < 1 {
        return Err(Error::InvalidParams("n and d must be >= 1".into()));
    }
    if !(margin.is_finite() && margin >= 0.0) {
        return Err(Error::InvalidParams("margin must be >= 0".into()));
    }
    let p = (8.0 / alpha).floor() as usize + 1;
    let s2 = sigma * sigma;
    let nf = n as f64;
    let df = d as f64;
    let base = match model {
        ContaminationModel::Additive => 32.0 * s2 * (1.0 + 2.0 * df / (alpha * nf)),
        ContaminationModel::Strong => {
            let ln_n = nf.ln();
            let root = (16.0 * df * ln_n * ln_n / (3.0 * alpha * nf)).sqrt();
            (8.0 * s2 / alpha) * (1.0 + root) * (1.0 + root)
        }
    };
    Ok(Recommendation {
        p,
        lambda_c: (1.0 + margin) * base,
    })
}
