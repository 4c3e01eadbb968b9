//! Clean-data generation, contamination models, and hard instances.
//!
//! Everything here is a pure function of its RNG argument, and every
//! generator records ground truth (true mean, corruption mask) so runs can
//! be scored exactly.

use crate::error::{Error, Result};
use crate::estimator::ContaminationModel;
use crate::points::{PointSet, Vector};
use rand::seq::index::sample as index_sample;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;

/// A generated dataset with its ground truth.
#[derive(Debug, Clone)]
pub struct CleanDataset {
    pub points: PointSet,
    pub true_mean: Vector,
    /// Per-coordinate standard deviation bound on the generator.
    pub sigma: f64,
    pub generator_spec: String,
}

/// Ground-truth record of which ids were corrupted.
#[derive(Debug, Clone, Serialize)]
pub struct CorruptionMask {
    pub corrupted_ids: BTreeSet<u64>,
    pub alpha_realized: f64,
}

/// Direction for the mean-shift strategy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ShiftDirection {
    Axis(usize),
    Vector(Vec<f64>),
}

impl ShiftDirection {
    pub(crate) fn unit(&self, d: usize) -> Result<Vector> {
        match self {
            ShiftDirection::Axis(i) => {
                if *i >= d {
                    return Err(Error::InvalidSpec(format!(
                        "shift axis {i} out of range for d={d}"
                    )));
                }
                let mut v = Vector::zeros(d);
                v[*i] = 1.0;
                Ok(v)
            }
            ShiftDirection::Vector(v) => {
                if v.len() != d {
                    return Err(Error::InvalidSpec(format!(
                        "shift direction has length {}, expected {d}",
                        v.len()
                    )));
                }
                let dv = Vector::from_vec(v.clone());
                let n = dv.norm();
                if !(n.is_finite() && n > 0.0) {
                    return Err(Error::InvalidSpec("shift direction must be nonzero".into()));
                }
                Ok(dv / n)
            }
        }
    }
}

/// What corrupted samples are replaced with. All strategies replace the
/// whole vector; none perturb in place.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AttackStrategy {
    /// Replace with i.i.d. per-coordinate Gaussian noise.
    GaussianNoise { per_coord_std: f64 },
    /// Replace with the point mass at `true_mean + magnitude * direction`.
    MeanShift {
        direction: ShiftDirection,
        magnitude: f64,
    },
    /// Replace sample x with `2 * pivot - x`. The pivot stands in for an
    /// adversary that somehow learned the verified data's mean, which the
    /// threat model forbids; stress-test only.
    SymmetricFlip { pivot: Vec<f64> },
    /// Replace with draws around `num_clusters` centers placed at distance
    /// `radius` from the true mean in random orthogonal directions,
    /// round-robin, with per-coordinate jitter `spread`.
    Clusters {
        num_clusters: usize,
        spread: f64,
        radius: f64,
    },
    /// Marker routed to the dedicated hard-instance generator; `corrupt`
    /// rejects it because the construction defines its own clean law.
    LowerBoundInstance { beta: f64 },
}

impl AttackStrategy {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidSpec(msg.into()));
        match self {
            AttackStrategy::GaussianNoise { per_coord_std } => {
                if !(per_coord_std.is_finite() && *per_coord_std > 0.0) {
                    return bad("gaussian_noise.per_coord_std must be positive");
                }
            }
            AttackStrategy::MeanShift { magnitude, .. } => {
                if !(magnitude.is_finite() && *magnitude > 0.0) {
                    return bad("mean_shift.magnitude must be positive");
                }
            }
            AttackStrategy::SymmetricFlip { pivot } => {
                if pivot.iter().any(|x| !x.is_finite()) {
                    return bad("symmetric_flip.pivot must be finite");
                }
            }
            AttackStrategy::Clusters {
                num_clusters,
                spread,
                radius,
            } => {
                if *num_clusters < 1 {
                    return bad("clusters.num_clusters must be >= 1");
                }
                if !(spread.is_finite() && *spread >= 0.0) {
                    return bad("clusters.spread must be >= 0");
                }
                if !(radius.is_finite() && *radius > 0.0) {
                    return bad("clusters.radius must be positive");
                }
            }
            AttackStrategy::LowerBoundInstance { beta } => {
                if !(beta.is_finite() && *beta > 0.0 && *beta <= 0.5) {
                    return bad("lower_bound_instance.beta must lie in (0, 0.5]");
                }
            }
        }
        Ok(())
    }
}

/// Which model picks the corrupted ids, the guaranteed clean fraction, and
/// the replacement strategy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContaminationSpec {
    pub model: ContaminationModel,
    pub alpha_clean: f64,
    pub strategy: AttackStrategy,
}

impl ContaminationSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha_clean > 0.0 && self.alpha_clean <= 1.0) {
            return Err(Error::InvalidAlpha(self.alpha_clean));
        }
        self.strategy.validate()
    }
}

/// N i.i.d. samples with independent coordinates `N(mu_j, sigma^2)`.
pub fn gen_clean_gaussian<R: Rng>(
    d: usize,
    n: usize,
    mu: &Vector,
    sigma: f64,
    rng: &mut R,
) -> Result<CleanDataset> {
    if d < 1 || n < 1 {
        return Err(Error::InvalidSpec("d and n must be >= 1".into()));
    }
    if mu.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: mu.len(),
        });
    }
    if !(sigma.is_finite() && sigma >= 0.0) {
        return Err(Error::InvalidSpec("sigma must be >= 0".into()));
    }
    let mut points = PointSet::new(d);
    if sigma == 0.0 {
        for i in 0..n {
            points.insert(i as u64, mu.clone())?;
        }
    } else {
        let normal = Normal::new(0.0, sigma).expect("valid std");
        for i in 0..n {
            let v = Vector::from_fn(d, |j, _| mu[j] + normal.sample(rng));
            points.insert(i as u64, v)?;
        }
    }
    Ok(CleanDataset {
        points,
        true_mean: mu.clone(),
        sigma,
        generator_spec: format!("iid_gaussian(d={d}, n={n}, sigma={sigma})"),
    })
}

/// Selects the corrupted ids per the model and overwrites them with
/// strategy-defined replacement values. Unselected ids keep their vectors
/// bitwise. The additive model draws the mask before reading any sample
/// value; the strong model may inspect values first.
pub fn corrupt<R: Rng>(
    clean: &CleanDataset,
    spec: &ContaminationSpec,
    rng: &mut R,
) -> Result<(PointSet, CorruptionMask)> {
    spec.validate()?;
    if let AttackStrategy::LowerBoundInstance { .. } = spec.strategy {
        return Err(Error::InvalidSpec(
            "lower_bound_instance defines its own clean law; use gen_lower_bound_instance".into(),
        ));
    }
    let n = clean.points.len();
    if n == 0 {
        return Err(Error::EmptySet);
    }
    let n_bad = ((1.0 - spec.alpha_clean) * n as f64).floor() as usize;
    let ids = clean.points.ids();

    let selected: Vec<u64> = if n_bad == 0 {
        Vec::new()
    } else {
        match spec.model {
            ContaminationModel::Additive => {
                // Mask drawn before any value is read.
                let mut picks: Vec<u64> = index_sample(rng, n, n_bad)
                    .into_iter()
                    .map(|k| ids[k])
                    .collect();
                picks.sort_unstable();
                picks
            }
            ContaminationModel::Strong => {
                let dir = strong_direction(clean, &spec.strategy)?;
                let mut proj: Vec<(u64, f64)> = clean
                    .points
                    .iter()
                    .map(|(id, v)| (id, v.dot(&dir)))
                    .collect();
                proj.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
                let mut picks: Vec<u64> = proj.into_iter().take(n_bad).map(|(id, _)| id).collect();
                picks.sort_unstable();
                picks
            }
        }
    };

    let mut out = clean.points.clone();
    apply_replacements(&mut out, &selected, clean, &spec.strategy, rng)?;

    let mask = CorruptionMask {
        corrupted_ids: selected.into_iter().collect(),
        alpha_realized: 1.0 - n_bad as f64 / n as f64,
    };
    debug_assert!(mask.alpha_realized >= spec.alpha_clean - 1e-12);
    Ok((out, mask))
}

/// Attack direction for greedy selection under the strong model: the
/// strategy's own direction when it has one, otherwise the top principal
/// axis of the clean data (sign fixed by its largest-magnitude component).
fn strong_direction(clean: &CleanDataset, strategy: &AttackStrategy) -> Result<Vector> {
    if let AttackStrategy::MeanShift { direction, .. } = strategy {
        return direction.unit(clean.points.dim());
    }
    let mean = crate::estimator::sample_mean(&clean.points)?;
    let cov = crate::estimator::sample_covariance(&clean.points, &mean)?;
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
    Ok(u)
}

fn apply_replacements<R: Rng>(
    out: &mut PointSet,
    selected: &[u64],
    clean: &CleanDataset,
    strategy: &AttackStrategy,
    rng: &mut R,
) -> Result<()> {
    let d = clean.points.dim();
    match strategy {
        AttackStrategy::GaussianNoise { per_coord_std } => {
            let normal = Normal::new(0.0, *per_coord_std).expect("valid std");
            for &id in selected {
                let v = Vector::from_fn(d, |_, _| normal.sample(rng));
                out.replace(id, v)?;
            }
        }
        AttackStrategy::MeanShift {
            direction,
            magnitude,
        } => {
            let u = direction.unit(d)?;
            let target = &clean.true_mean + u * *magnitude;
            for &id in selected {
                out.replace(id, target.clone())?;
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
            for &id in selected {
                let x = clean.points.get(id).expect("selected id exists").clone();
                out.replace(id, &piv * 2.0 - x)?;
            }
        }
        AttackStrategy::Clusters {
            num_clusters,
            spread,
            radius,
        } => {
            let centers = cluster_centers(&clean.true_mean, *num_clusters, *radius, rng)?;
            let normal = Normal::new(0.0, spread.max(0.0)).expect("valid std");
            for (k, &id) in selected.iter().enumerate() {
                let c = &centers[k % centers.len()];
                let v = if *spread > 0.0 {
                    Vector::from_fn(d, |j, _| c[j] + normal.sample(rng))
                } else {
                    c.clone()
                };
                out.replace(id, v)?;
            }
        }
        AttackStrategy::LowerBoundInstance { .. } => unreachable!("rejected above"),
    }
    Ok(())
}

/// Cluster centers at distance `radius` from the mean along random
/// orthonormal directions (Gram-Schmidt over Gaussian draws).
fn cluster_centers<R: Rng>(
    mean: &Vector,
    k: usize,
    radius: f64,
    rng: &mut R,
) -> Result<Vec<Vector>> {
    let d = mean.len();
    if k > d {
        return Err(Error::InvalidSpec(format!(
            "clusters.num_clusters {k} exceeds dimension {d}"
        )));
    }
    let normal = Normal::new(0.0, 1.0).expect("valid std");
    let mut basis: Vec<Vector> = Vec::with_capacity(k);
    while basis.len() < k {
        let mut v = Vector::from_fn(d, |_, _| normal.sample(rng));
        for b in &basis {
            let c = v.dot(b);
            v -= b * c;
        }
        let n = v.norm();
        if n > 1e-9 {
            basis.push(v / n);
        }
    }
    Ok(basis.into_iter().map(|u| mean + u * radius).collect())
}

/// Hard instance whose observed marginal carries no information about the
/// hidden coordinate.
#[derive(Debug, Clone)]
pub struct LowerBoundInstance {
    /// The observed, already-corrupted samples.
    pub points: PointSet,
    /// Hidden coordinate index (0-based).
    pub hidden_index: usize,
    /// True mean of the hidden hypothesis.
    pub mu_star: Vector,
}

/// Builds the d-hypothesis hard instance. A hidden coordinate Z is drawn
/// uniformly; clean samples follow the Z-th hypothesis law, corrupted ones
/// are coupled so the observed per-coordinate marginal is identical for
/// every Z (value 0 with probability 1-2*beta and +/- scale with beta each,
/// where beta = alpha/2 and scale is sigma/sqrt(2 beta) for the additive
/// model, sigma/(2 beta) for the strong one).
pub fn gen_lower_bound_instance<R: Rng>(
    d: usize,
    alpha: f64,
    sigma: f64,
    n: usize,
    model: ContaminationModel,
    rng: &mut R,
) -> Result<LowerBoundInstance> {
    if d < 2 {
        return Err(Error::InvalidSpec("lower bound instance needs d >= 2".into()));
    }
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::InvalidAlpha(alpha));
    }
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(Error::InvalidSpec("sigma must be positive".into()));
    }
    let beta = alpha / 2.0;
    let z = rng.random_range(0..d);
    let mut points = PointSet::new(d);
    match model {
        ContaminationModel::Additive => {
            let v = sigma / (2.0 * beta).sqrt();
            for i in 0..n {
                let clean = rng.random::<f64>() < beta;
                let row = if clean {
                    let mut x = marginal_row(d, v, beta, rng);
                    x[z] = v;
                    x
                } else {
                    // Complement law q_Z: marginal everywhere except the
                    // hidden coordinate, which never takes +v.
                    let mut y = marginal_row(d, v, beta, rng);
                    let u: f64 = rng.random();
                    y[z] = if u < beta / (1.0 - beta) { -v } else { 0.0 };
                    y
                };
                points.insert(i as u64, row)?;
            }
            let mut mu = Vector::zeros(d);
            mu[z] = v;
            Ok(LowerBoundInstance {
                points,
                hidden_index: z,
                mu_star: mu,
            })
        }
        ContaminationModel::Strong => {
            let u_scale = sigma / (2.0 * beta);
            let s_scale = sigma / (2.0 * beta.sqrt());
            for i in 0..n {
                // Draw the clean two-scale mixture, then apply the
                // measure-preserving coordinate map that sends both scales
                // to u_scale; the hidden coordinate is re-randomized.
                let shared_u = rng.random::<f64>() < beta;
                let scale = if shared_u { u_scale } else { s_scale };
                let mut y = Vector::zeros(d);
                for j in 0..d {
                    if j == z {
                        continue;
                    }
                    let x = three_point(scale, beta, rng);
                    y[j] = if x > 0.0 {
                        u_scale
                    } else if x < 0.0 {
                        -u_scale
                    } else {
                        0.0
                    };
                }
                y[z] = three_point(u_scale, beta, rng);
                points.insert(i as u64, y)?;
            }
            let mut mu = Vector::zeros(d);
            mu[z] = u_scale;
            Ok(LowerBoundInstance {
                points,
                hidden_index: z,
                mu_star: mu,
            })
        }
    }
}

/// Clean draws from the hypothesis law with the given hidden coordinate,
/// for scoring estimators against the hard instance.
pub fn gen_lower_bound_aux<R: Rng>(
    d: usize,
    alpha: f64,
    sigma: f64,
    n_aux: usize,
    hidden_index: usize,
    model: ContaminationModel,
    rng: &mut R,
) -> Result<PointSet> {
    if hidden_index >= d {
        return Err(Error::InvalidSpec("hidden index out of range".into()));
    }
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::InvalidAlpha(alpha));
    }
    let beta = alpha / 2.0;
    let mut points = PointSet::new(d);
    match model {
        ContaminationModel::Additive => {
            let v = sigma / (2.0 * beta).sqrt();
            for i in 0..n_aux {
                let mut x = marginal_row(d, v, beta, rng);
                x[hidden_index] = v;
                points.insert(i as u64, x)?;
            }
        }
        ContaminationModel::Strong => {
            let u_scale = sigma / (2.0 * beta);
            let s_scale = sigma / (2.0 * beta.sqrt());
            for i in 0..n_aux {
                let shared_u = rng.random::<f64>() < beta;
                let scale = if shared_u { u_scale } else { s_scale };
                let mut x = Vector::zeros(d);
                for j in 0..d {
                    if j == hidden_index {
                        continue;
                    }
                    x[j] = three_point(scale, beta, rng);
                }
                x[hidden_index] = u_scale;
                points.insert(i as u64, x)?;
            }
        }
    }
    Ok(points)
}

fn marginal_row<R: Rng>(d: usize, v: f64, beta: f64, rng: &mut R) -> Vector {
    Vector::from_fn(d, |_, _| three_point(v, beta, rng))
}

/// 0 with probability 1 - 2 beta, +/- scale with beta each.
fn three_point<R: Rng>(scale: f64, beta: f64, rng: &mut R) -> f64 {
    let u: f64 = rng.random();
    if u < beta {
        scale
    } else if u < 2.0 * beta {
        -scale
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Purpose};

    fn clean_fixture(d: usize, n: usize, seed: u64) -> CleanDataset {
        let mut rng = stream(seed, Purpose::CleanData, 0);
        gen_clean_gaussian(d, n, &Vector::zeros(d), 1.0, &mut rng).unwrap()
    }

    #[test]
    fn alpha_one_is_identity() {
        let clean = clean_fixture(3, 20, 1);
        let spec = ContaminationSpec {
            model: ContaminationModel::Additive,
            alpha_clean: 1.0,
            strategy: AttackStrategy::GaussianNoise { per_coord_std: 1.0 },
        };
        let mut rng = stream(1, Purpose::Attack, 0);
        let (out, mask) = corrupt(&clean, &spec, &mut rng).unwrap();
        assert!(mask.corrupted_ids.is_empty());
        assert_eq!(out, clean.points);
    }

    #[test]
    fn additive_budget_is_floor_and_rest_bitwise() {
        let clean = clean_fixture(2, 10, 2);
        let spec = ContaminationSpec {
            model: ContaminationModel::Additive,
            alpha_clean: 0.6,
            strategy: AttackStrategy::GaussianNoise { per_coord_std: 2.0 },
        };
        let mut rng = stream(2, Purpose::Attack, 0);
        let (out, mask) = corrupt(&clean, &spec, &mut rng).unwrap();
        assert_eq!(mask.corrupted_ids.len(), 4);
        assert!((mask.alpha_realized - 0.6).abs() <= 1e-12);
        for (id, v) in clean.points.iter() {
            if !mask.corrupted_ids.contains(&id) {
                assert_eq!(out.get(id).unwrap(), v, "uncorrupted id {id} must be bitwise");
            }
        }
    }

    #[test]
    fn additive_mask_is_value_independent() {
        // Same rng stream, different sample values: identical masks.
        let a = clean_fixture(2, 40, 3);
        let b = clean_fixture(2, 40, 4);
        let spec = ContaminationSpec {
            model: ContaminationModel::Additive,
            alpha_clean: 0.5,
            strategy: AttackStrategy::GaussianNoise { per_coord_std: 1.0 },
        };
        let (_, ma) = corrupt(&a, &spec, &mut stream(9, Purpose::Attack, 0)).unwrap();
        let (_, mb) = corrupt(&b, &spec, &mut stream(9, Purpose::Attack, 0)).unwrap();
        assert_eq!(ma.corrupted_ids, mb.corrupted_ids);
    }

    #[test]
    fn strong_mean_shift_selects_largest_projection() {
        let clean = clean_fixture(3, 100, 5);
        let spec = ContaminationSpec {
            model: ContaminationModel::Strong,
            alpha_clean: 0.5,
            strategy: AttackStrategy::MeanShift {
                direction: ShiftDirection::Axis(0),
                magnitude: 4.0,
            },
        };
        let mut rng = stream(5, Purpose::Attack, 0);
        let (_, mask) = corrupt(&clean, &spec, &mut rng).unwrap();
        assert_eq!(mask.corrupted_ids.len(), 50);
        // Sorting oracle on the first coordinate.
        let mut proj: Vec<(u64, f64)> = clean.points.iter().map(|(id, v)| (id, v[0])).collect();
        proj.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        let expect: BTreeSet<u64> = proj.into_iter().take(50).map(|(id, _)| id).collect();
        assert_eq!(mask.corrupted_ids, expect);
    }

    #[test]
    fn mean_shift_replacement_is_planted_point_mass() {
        let clean = clean_fixture(2, 10, 6);
        let spec = ContaminationSpec {
            model: ContaminationModel::Additive,
            alpha_clean: 0.5,
            strategy: AttackStrategy::MeanShift {
                direction: ShiftDirection::Axis(1),
                magnitude: 7.0,
            },
        };
        let mut rng = stream(6, Purpose::Attack, 0);
        let (out, mask) = corrupt(&clean, &spec, &mut rng).unwrap();
        for id in &mask.corrupted_ids {
            let v = out.get(*id).unwrap();
            assert_eq!(v[0], 0.0);
            assert_eq!(v[1], 7.0);
        }
    }

    #[test]
    fn symmetric_flip_flips_about_pivot() {
        let clean = clean_fixture(2, 8, 7);
        let pivot = vec![1.0, -2.0];
        let spec = ContaminationSpec {
            model: ContaminationModel::Additive,
            alpha_clean: 0.5,
            strategy: AttackStrategy::SymmetricFlip {
                pivot: pivot.clone(),
            },
        };
        let mut rng = stream(7, Purpose::Attack, 0);
        let (out, mask) = corrupt(&clean, &spec, &mut rng).unwrap();
        for id in &mask.corrupted_ids {
            let orig = clean.points.get(*id).unwrap();
            let flipped = out.get(*id).unwrap();
            for j in 0..2 {
                assert!((flipped[j] - (2.0 * pivot[j] - orig[j])).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn clusters_land_at_radius() {
        let clean = clean_fixture(6, 40, 8);
        let spec = ContaminationSpec {
            model: ContaminationModel::Additive,
            alpha_clean: 0.5,
            strategy: AttackStrategy::Clusters {
                num_clusters: 3,
                spread: 0.0,
                radius: 5.0,
            },
        };
        let mut rng = stream(8, Purpose::Attack, 0);
        let (out, mask) = corrupt(&clean, &spec, &mut rng).unwrap();
        let mut centers: BTreeSet<String> = BTreeSet::new();
        for id in &mask.corrupted_ids {
            let v = out.get(*id).unwrap();
            assert!((v.norm() - 5.0).abs() <= 1e-9, "center must sit at radius");
            centers.insert(format!("{:.6}", v[0]));
        }
        assert_eq!(centers.len(), 3, "round-robin over three centers");
    }

    #[test]
    fn lower_bound_strategy_rejected_by_corrupt() {
        let clean = clean_fixture(2, 10, 9);
        let spec = ContaminationSpec {
            model: ContaminationModel::Additive,
            alpha_clean: 0.5,
            strategy: AttackStrategy::LowerBoundInstance { beta: 0.25 },
        };
        let mut rng = stream(9, Purpose::Attack, 0);
        assert!(matches!(
            corrupt(&clean, &spec, &mut rng),
            Err(Error::InvalidSpec(_))
        ));
    }

    #[test]
    fn clean_gaussian_mean_and_degenerate_sigma() {
        let d = 2;
        let n = 100_000;
        let mut rng = stream(12, Purpose::CleanData, 0);
        let ds = gen_clean_gaussian(d, n, &Vector::zeros(d), 1.0, &mut rng).unwrap();
        let mean = crate::estimator::sample_mean(&ds.points).unwrap();
        for j in 0..d {
            assert!(mean[j].abs() <= 0.02, "CLT-scale tolerance");
        }

        let mut rng = stream(13, Purpose::CleanData, 0);
        let mu = Vector::from_vec(vec![3.0, -1.0]);
        let ds = gen_clean_gaussian(2, 5, &mu, 0.0, &mut rng).unwrap();
        for (_, v) in ds.points.iter() {
            assert_eq!(v, &mu);
        }
    }

    #[test]
    fn clean_gaussian_operator_norm_concentrates() {
        let d = 10;
        let n = 10_000;
        let mut rng = stream(14, Purpose::CleanData, 0);
        let ds = gen_clean_gaussian(d, n, &Vector::zeros(d), 1.0, &mut rng).unwrap();
        let mean = crate::estimator::sample_mean(&ds.points).unwrap();
        let cov = crate::estimator::sample_covariance(&ds.points, &mean).unwrap();
        let st = crate::estimator::top_spectrum(&cov, 1).unwrap();
        let bound = 1.0 + 5.0 * (d as f64 / n as f64).sqrt();
        for lam in &st.eigenvalues {
            assert!(*lam <= bound, "eigenvalue {lam} above concentration bound {bound}");
        }
    }

    #[test]
    fn additive_instance_moments_and_mean_geometry() {
        let d = 6;
        let n = 100_000;
        let sigma = 1.0;
        let alpha = 0.5;
        let mut rng = stream(15, Purpose::Instance, 0);
        let inst =
            gen_lower_bound_instance(d, alpha, sigma, n, ContaminationModel::Additive, &mut rng)
                .unwrap();
        // Per-coordinate second moment of the observed marginal is sigma^2.
        for j in 0..d {
            let m2: f64 = inst
                .points
                .iter()
                .map(|(_, v)| v[j] * v[j])
                .sum::<f64>()
                / n as f64;
            assert!(
                (m2 - sigma * sigma).abs() / (sigma * sigma) <= 0.05,
                "coordinate {j} second moment {m2}"
            );
        }
        // Pairwise hypothesis-mean distance: sigma / sqrt(beta).
        let beta = alpha / 2.0;
        let v = sigma / (2.0 * beta).sqrt();
        let dist = (2.0 * v * v).sqrt();
        assert!((dist - sigma / beta.sqrt()).abs() <= 1e-12);
        assert!((inst.mu_star[inst.hidden_index] - v).abs() <= 1e-12);
    }

    #[test]
    fn strong_instance_clean_variance_bounded() {
        // Hand check at beta = 0.25, sigma = 1: clean coordinate variance is
        // sigma^2 (2 - beta)/2 = 0.875 <= sigma^2.
        let d = 4;
        let alpha = 0.5;
        let sigma = 1.0;
        let mut rng = stream(16, Purpose::Instance, 0);
        let aux = gen_lower_bound_aux(d, alpha, sigma, 200_000, 0, ContaminationModel::Strong, &mut rng)
            .unwrap();
        for j in 1..d {
            let m2: f64 = aux.iter().map(|(_, v)| v[j] * v[j]).sum::<f64>() / aux.len() as f64;
            assert!(m2 <= sigma * sigma * 1.02, "coordinate {j} variance {m2}");
            assert!((m2 - 0.875).abs() <= 0.02);
        }
    }

    #[test]
    fn instance_marginal_indistinguishable_across_hidden_index() {
        // Chi-square two-sample test per coordinate over the cells
        // {-v, 0, +v}; the observed marginal must not depend on Z.
        use statrs::distribution::{ChiSquared, ContinuousCDF};
        let d = 4;
        let alpha = 0.5;
        let sigma = 1.0;
        let n = 100_000;
        for model in [ContaminationModel::Additive, ContaminationModel::Strong] {
            let mut points = Vec::new();
            for z in [0usize, 1] {
                // Re-draw until the hidden index matches; streams stay fixed.
                let mut k = 0u64;
                let inst = loop {
                    let mut rng = stream(17 + z as u64 * 31 + k, Purpose::Instance, 0);
                    let inst =
                        gen_lower_bound_instance(d, alpha, sigma, n, model, &mut rng).unwrap();
                    if inst.hidden_index == z {
                        break inst;
                    }
                    k += 1;
                };
                points.push(inst.points);
            }
            for j in 0..d {
                let count = |ps: &PointSet| {
                    let mut c = [0usize; 3];
                    for (_, v) in ps.iter() {
                        let x = v[j];
                        if x > 1e-9 {
                            c[2] += 1;
                        } else if x < -1e-9 {
                            c[0] += 1;
                        } else {
                            c[1] += 1;
                        }
                    }
                    c
                };
                let ca = count(&points[0]);
                let cb = count(&points[1]);
                let mut chi2 = 0.0;
                for cell in 0..3 {
                    let tot = (ca[cell] + cb[cell]) as f64;
                    if tot == 0.0 {
                        continue;
                    }
                    let ea = tot / 2.0;
                    chi2 += (ca[cell] as f64 - ea).powi(2) / ea
                        + (cb[cell] as f64 - ea).powi(2) / ea;
                }
                let dist = ChiSquared::new(2.0).unwrap();
                let p_value = 1.0 - dist.cdf(chi2);
                assert!(
                    p_value > 0.01,
                    "coordinate {j} marginal differs across Z (chi2={chi2}, p={p_value})"
                );
            }
        }
    }
}
