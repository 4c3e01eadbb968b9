//! Gradient aggregation rules.
//!
//! All four aggregators are pure functions of a `GradientBatch`; the
//! simulator and CLI swap them by name. Tie-breaks are always by ascending
//! worker id so runs are reproducible.

use crate::error::{Error, Result};
use crate::estimator::{semi_verified_mean, EstimatorParams, EstimatorTrace};
use crate::points::{PointSet, Vector};
use serde::{Deserialize, Serialize};

/// One round's worth of gradient messages.
#[derive(Debug, Clone)]
pub struct GradientBatch {
    /// The m worker messages, possibly corrupted.
    pub worker_gradients: PointSet,
    /// Per-sample gradients on the master's verified data.
    pub aux_gradients: PointSet,
    pub n_per_worker: usize,
    pub round_index: usize,
}

impl GradientBatch {
    pub fn validate(&self) -> Result<()> {
        if self.worker_gradients.is_empty() || self.aux_gradients.is_empty() {
            return Err(Error::EmptySet);
        }
        if self.worker_gradients.dim() != self.aux_gradients.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.worker_gradients.dim(),
                got: self.aux_gradients.dim(),
            });
        }
        Ok(())
    }
}

/// Aggregator selection, parsed from experiment configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AggregatorSpec {
    MasterOnly,
    DistanceFilter {
        q: usize,
    },
    Zeno {
        q: usize,
        /// Defaults to the training step size when absent.
        #[serde(default)]
        gamma: Option<f64>,
        #[serde(default = "default_rho_reg")]
        rho_reg: f64,
    },
    SemiVerified {
        params: EstimatorParams,
    },
}

fn default_rho_reg() -> f64 {
    0.001
}

impl AggregatorSpec {
    pub fn name(&self) -> &'static str {
        match self {
            AggregatorSpec::MasterOnly => "master_only",
            AggregatorSpec::DistanceFilter { .. } => "distance_filter",
            AggregatorSpec::Zeno { .. } => "zeno",
            AggregatorSpec::SemiVerified { .. } => "semi_verified",
        }
    }

    pub fn validate(&self, m: usize) -> Result<()> {
        match self {
            AggregatorSpec::MasterOnly => Ok(()),
            AggregatorSpec::DistanceFilter { q } | AggregatorSpec::Zeno { q, .. } => {
                if *q >= m {
                    Err(Error::InvalidQ { q: *q, m })
                } else {
                    Ok(())
                }
            }
            AggregatorSpec::SemiVerified { params } => params.validate(),
        }
    }
}

/// Mean of the verified-data gradients; ignores workers entirely.
pub fn aggregate_master_only(batch: &GradientBatch) -> Result<Vector> {
    batch.validate()?;
    crate::estimator::sample_mean(&batch.aux_gradients)
}

/// Keeps the m - q workers closest to the master-only mean and returns the
/// sample-count-weighted blend
/// `(N_A g0 + n sum Y_i) / (N_A + n (m - q))`.
pub fn aggregate_distance_filter(batch: &GradientBatch, q: usize) -> Result<Vector> {
    batch.validate()?;
    let m = batch.worker_gradients.len();
    if q >= m {
        return Err(Error::InvalidQ { q, m });
    }
    let g0 = crate::estimator::sample_mean(&batch.aux_gradients)?;
    let mut dist: Vec<(u64, f64)> = batch
        .worker_gradients
        .iter()
        .map(|(id, v)| (id, (v - &g0).norm()))
        .collect();
    dist.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    let keep = m - q;
    let n_a = batch.aux_gradients.len() as f64;
    let n = batch.n_per_worker as f64;
    let mut acc = &g0 * n_a;
    for (id, _) in dist.into_iter().take(keep) {
        acc += batch.worker_gradients.get(id).expect("id exists") * n;
    }
    Ok(acc / (n_a + n * keep as f64))
}

/// Scores workers by `gamma <g0, Y> - rho ||Y||^2` and averages the m - q
/// highest scorers, unweighted.
pub fn aggregate_zeno(
    batch: &GradientBatch,
    q: usize,
    gamma: f64,
    rho_reg: f64,
) -> Result<Vector> {
    batch.validate()?;
    let m = batch.worker_gradients.len();
    if q >= m {
        return Err(Error::InvalidQ { q, m });
    }
    let g0 = crate::estimator::sample_mean(&batch.aux_gradients)?;
    let mut scored: Vec<(u64, f64)> = batch
        .worker_gradients
        .iter()
        .map(|(id, v)| (id, gamma * g0.dot(v) - rho_reg * v.norm_squared()))
        .collect();
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let keep = m - q;
    let mut acc = Vector::zeros(batch.worker_gradients.dim());
    for (id, _) in scored.into_iter().take(keep) {
        acc += batch.worker_gradients.get(id).expect("id exists");
    }
    Ok(acc / keep as f64)
}

/// Runs the semi-verified estimator with the workers as the untrusted set
/// and the verified-data gradients as the auxiliary set.
pub fn aggregate_semi_verified(
    batch: &GradientBatch,
    params: &EstimatorParams,
) -> Result<(Vector, EstimatorTrace)> {
    batch.validate()?;
    let res = semi_verified_mean(&batch.worker_gradients, &batch.aux_gradients, params)?;
    Ok((res.mu_hat, res.trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Purpose};
    use rand_distr::{Distribution, Normal};

    fn vecf(v: &[f64]) -> Vector {
        Vector::from_vec(v.to_vec())
    }

    fn batch(workers: Vec<Vector>, aux: Vec<Vector>, n: usize) -> GradientBatch {
        let d = workers[0].len();
        GradientBatch {
            worker_gradients: PointSet::from_rows(d, workers).unwrap(),
            aux_gradients: PointSet::from_rows(d, aux).unwrap(),
            n_per_worker: n,
            round_index: 0,
        }
    }

    fn random_vecs(d: usize, n: usize, seed: u64) -> Vec<Vector> {
        let mut rng = stream(seed, Purpose::CleanData, 0);
        let normal = Normal::new(0.0, 1.0).unwrap();
        (0..n)
            .map(|_| Vector::from_fn(d, |_, _| normal.sample(&mut rng)))
            .collect()
    }

    #[test]
    fn master_only_ignores_workers() {
        let b = batch(
            vec![vecf(&[100.0, -100.0])],
            vec![vecf(&[1.0, 1.0])],
            3,
        );
        assert_eq!(aggregate_master_only(&b).unwrap(), vecf(&[1.0, 1.0]));
        let b = batch(
            vec![vecf(&[9.0, 9.0])],
            vec![vecf(&[0.0, 2.0]), vecf(&[2.0, 0.0])],
            3,
        );
        assert_eq!(aggregate_master_only(&b).unwrap(), vecf(&[1.0, 1.0]));
    }

    #[test]
    fn master_only_matches_summation_oracle() {
        let aux = random_vecs(4, 9, 21);
        let b = batch(random_vecs(4, 3, 22), aux.clone(), 2);
        let got = aggregate_master_only(&b).unwrap();
        for j in 0..4 {
            let oracle: f64 = aux.iter().map(|v| v[j]).sum::<f64>() / 9.0;
            assert!((got[j] - oracle).abs() <= 1e-12);
        }
    }

    #[test]
    fn distance_filter_trivial_cases() {
        // One worker exactly at g0, q = m - 1.
        let g0 = vecf(&[1.0, 2.0]);
        let b = batch(
            vec![g0.clone(), vecf(&[10.0, 10.0]), vecf(&[-4.0, 0.0])],
            vec![g0.clone()],
            5,
        );
        let got = aggregate_distance_filter(&b, 2).unwrap();
        let expect = (&g0 * 1.0 + &g0 * 5.0) / 6.0;
        assert!((got - expect).norm() <= 1e-12);

        // All workers equal to g0: output is g0 for any q.
        let b = batch(vec![g0.clone(); 4], vec![g0.clone()], 7);
        for q in 0..4 {
            let got = aggregate_distance_filter(&b, q).unwrap();
            assert!((&got - &g0).norm() <= 1e-12);
        }
    }

    #[test]
    fn distance_filter_matches_hand_computation() {
        // Workers at distances 1..5 from g0 along the first axis.
        let g0 = vecf(&[0.0, 0.0]);
        let workers: Vec<Vector> = (1..=5).map(|k| vecf(&[k as f64, 0.0])).collect();
        let b = batch(workers, vec![g0.clone(), g0.clone()], 3);
        let got = aggregate_distance_filter(&b, 2).unwrap();
        // Keeps distances 1, 2, 3; N_A = 2, n = 3.
        let expect = vecf(&[(3.0 * (1.0 + 2.0 + 3.0)) / (2.0 + 3.0 * 3.0), 0.0]);
        assert!((got - expect).norm() <= 1e-12);
    }

    #[test]
    fn zeno_sign_and_norm_behaviour() {
        let g0 = vecf(&[1.0, 0.0]);
        let b = batch(vec![g0.clone(), -g0.clone()], vec![g0.clone()], 1);
        let got = aggregate_zeno(&b, 1, 1.0, 0.0).unwrap();
        assert!((got - &g0).norm() <= 1e-12, "aligned gradient wins");

        // gamma = 0, rho = 1 selects the smallest norms.
        let b = batch(
            vec![vecf(&[5.0, 0.0]), vecf(&[0.1, 0.0]), vecf(&[0.2, 0.0])],
            vec![g0.clone()],
            1,
        );
        let got = aggregate_zeno(&b, 1, 0.0, 1.0).unwrap();
        let expect = vecf(&[(0.1 + 0.2) / 2.0, 0.0]);
        assert!((got - expect).norm() <= 1e-12);
    }

    #[test]
    fn zeno_matches_score_sort_oracle() {
        let workers = random_vecs(3, 6, 31);
        let aux = random_vecs(3, 4, 32);
        let b = batch(workers.clone(), aux.clone(), 2);
        let (gamma, rho) = (0.7, 0.05);
        let got = aggregate_zeno(&b, 3, gamma, rho).unwrap();

        let g0 = {
            let mut acc = Vector::zeros(3);
            for v in &aux {
                acc += v;
            }
            acc / aux.len() as f64
        };
        let mut scored: Vec<(usize, f64)> = workers
            .iter()
            .enumerate()
            .map(|(i, v)| (i, gamma * g0.dot(v) - rho * v.norm_squared()))
            .collect();
        scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        let mut expect = Vector::zeros(3);
        for (i, _) in scored.into_iter().take(3) {
            expect += &workers[i];
        }
        expect /= 3.0;
        assert!((got - expect).norm() <= 1e-12);
    }

    #[test]
    fn semi_verified_identical_vectors() {
        let v = vecf(&[3.0, -1.0]);
        let b = batch(vec![v.clone(); 5], vec![v.clone(); 2], 1);
        let params = EstimatorParams::new(1, 0.5);
        let (g, trace) = aggregate_semi_verified(&b, &params).unwrap();
        assert!((g - &v).norm() <= 1e-12);
        assert!(trace.iterations.is_empty());
    }

    #[test]
    fn semi_verified_no_attack_blend() {
        let workers = random_vecs(4, 60, 41);
        let aux = random_vecs(4, 8, 42);
        let b = batch(workers, aux, 2);
        let params = EstimatorParams::new(2, 1e6);
        let (g, trace) = aggregate_semi_verified(&b, &params).unwrap();
        assert!(trace.iterations.is_empty());
        let st = trace.final_projector.as_ref().unwrap();
        let mu_w = crate::estimator::sample_mean(&b.worker_gradients).unwrap();
        let mu_a = crate::estimator::sample_mean(&b.aux_gradients).unwrap();
        let expect = &st.projector * mu_a + st.complement_apply(&mu_w);
        assert!((g - expect).norm() <= 1e-12);
    }

    #[test]
    fn invalid_q_rejected() {
        let b = batch(random_vecs(2, 3, 51), random_vecs(2, 2, 52), 1);
        assert!(matches!(
            aggregate_distance_filter(&b, 3),
            Err(Error::InvalidQ { q: 3, m: 3 })
        ));
        assert!(matches!(
            aggregate_zeno(&b, 5, 1.0, 0.0),
            Err(Error::InvalidQ { q: 5, m: 3 })
        ));
    }

    #[test]
    fn permutation_invariance_with_distinct_distances() {
        // Relabeling worker ids leaves outputs unchanged when all distances
        // and scores are distinct.
        let workers = random_vecs(3, 8, 61);
        let aux = random_vecs(3, 3, 62);
        let d = 3;
        let fwd = PointSet::from_rows(d, workers.clone()).unwrap();
        let mut rev = PointSet::new(d);
        for (i, v) in workers.iter().enumerate() {
            rev.insert((100 - i) as u64, v.clone()).unwrap();
        }
        let mk = |w: PointSet| GradientBatch {
            worker_gradients: w,
            aux_gradients: PointSet::from_rows(d, aux.clone()).unwrap(),
            n_per_worker: 2,
            round_index: 0,
        };
        let a = mk(fwd);
        let b = mk(rev);
        for q in [0usize, 3] {
            let x = aggregate_distance_filter(&a, q).unwrap();
            let y = aggregate_distance_filter(&b, q).unwrap();
            assert!((x - y).norm() <= 1e-12);
            let x = aggregate_zeno(&a, q, 0.5, 0.01).unwrap();
            let y = aggregate_zeno(&b, q, 0.5, 0.01).unwrap();
            assert!((x - y).norm() <= 1e-12);
        }
    }

    #[test]
    fn scale_consistency() {
        let workers = random_vecs(3, 10, 71);
        let aux = random_vecs(3, 4, 72);
        let c = 3.5;
        let scale = |vs: &[Vector]| -> Vec<Vector> { vs.iter().map(|v| v * c).collect() };
        let a = batch(workers.clone(), aux.clone(), 2);
        let b = batch(scale(&workers), scale(&aux), 2);

        let x = aggregate_master_only(&a).unwrap();
        let y = aggregate_master_only(&b).unwrap();
        assert!((&y - &x * c).norm() <= 1e-9);

        let x = aggregate_distance_filter(&a, 4).unwrap();
        let y = aggregate_distance_filter(&b, 4).unwrap();
        assert!((&y - &x * c).norm() <= 1e-9);

        // Semi-verified scales exactly when lambda_c is rescaled by c^2.
        let pa = EstimatorParams::new(1, 2.0).with_seed(7);
        let mut pb = pa.clone();
        pb.lambda_c = pa.lambda_c * c * c;
        let (x, _) = aggregate_semi_verified(&a, &pa).unwrap();
        let (y, _) = aggregate_semi_verified(&b, &pb).unwrap();
        assert!((&y - &x * c).norm() <= 1e-9);

        // Zeno's selected set is invariant when rho is rescaled by 1/c.
        let sel = |b: &GradientBatch, gamma: f64, rho: f64| -> Vec<u64> {
            let g0 = crate::estimator::sample_mean(&b.aux_gradients).unwrap();
            let mut scored: Vec<(u64, f64)> = b
                .worker_gradients
                .iter()
                .map(|(id, v)| (id, gamma * g0.dot(v) - rho * v.norm_squared()))
                .collect();
            scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
            let mut ids: Vec<u64> = scored.into_iter().take(6).map(|(id, _)| id).collect();
            ids.sort_unstable();
            ids
        };
        assert_eq!(sel(&a, 1.0, 0.02), sel(&b, 1.0, 0.02 / c));
    }

    #[test]
    fn distance_filter_q0_no_attack_is_global_weighted_mean() {
        let workers = random_vecs(2, 7, 81);
        let aux = random_vecs(2, 3, 82);
        let n = 4usize;
        let b = batch(workers.clone(), aux.clone(), n);
        let got = aggregate_distance_filter(&b, 0).unwrap();

        let n_a = aux.len() as f64;
        let mut g0 = Vector::zeros(2);
        for v in &aux {
            g0 += v;
        }
        g0 /= n_a;
        let mut acc = g0 * n_a;
        for v in &workers {
            acc += v * n as f64;
        }
        let expect = acc / (n_a + (n * workers.len()) as f64);
        assert!((got - expect).norm() <= 1e-12);
    }
}
