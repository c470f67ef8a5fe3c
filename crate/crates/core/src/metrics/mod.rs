//! Accuracy, AUC-ROC, concept leakage scores and intervention curves.

mod intervention;
mod probe;
mod report;

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rayon::prelude::*;

use crate::diffcore::Tensor;
use crate::error::{Error, Result};
use crate::rng::stream;

pub use intervention::{auc_tti, intervention_curve, nauc_tti, InterventionCurve};
pub use probe::{LinearProbe, ProbeConfig};
pub use report::{mean_std, MetricRow, MetricsReport};

pub fn accuracy(pred: &[usize], truth: &[usize]) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(Error::Dimension(format!("{} predictions vs {} labels", pred.len(), truth.len())));
    }
    if pred.is_empty() {
        return Err(Error::UndefinedMetric("accuracy of an empty set".into()));
    }
    let hits = pred.iter().zip(truth).filter(|(a, b)| a == b).count();
    Ok(hits as f64 / pred.len() as f64)
}

/// Elementwise agreement of `c_prob > tau` with binary `c_true`.
pub fn concept_accuracy(c_prob: &Tensor, c_true: &Tensor, tau: f64) -> Result<f64> {
    if c_prob.shape() != c_true.shape() {
        return Err(Error::Dimension(format!("{:?} vs {:?}", c_prob.shape(), c_true.shape())));
    }
    if c_prob.is_empty() {
        return Err(Error::UndefinedMetric("concept accuracy of an empty set".into()));
    }
    let hits = c_prob
        .data()
        .iter()
        .zip(c_true.data())
        .filter(|(&p, &t)| (p > tau) == (t == 1.0))
        .count();
    Ok(hits as f64 / c_prob.len() as f64)
}

/// Mann-Whitney AUC: `(wins + ½·ties) / (P·N)`.
pub fn auc_roc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::Dimension(format!("{} scores vs {} labels", scores.len(), labels.len())));
    }
    let pos = labels.iter().filter(|&&l| l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::UndefinedMetric("AUC needs both classes".into()));
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // doubled ranks keep tie averages integral
    let mut rank2_pos: u128 = 0;
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && scores[idx[j + 1]] == scores[idx[i]] {
            j += 1;
        }
        let avg2 = (i + 1 + j + 1) as u128;
        for &k in &idx[i..=j] {
            if labels[k] {
                rank2_pos += avg2;
            }
        }
        i = j + 1;
    }
    let u2 = rank2_pos - (pos as u128) * (pos as u128 + 1);
    Ok(u2 as f64 / (2 * pos * neg) as f64)
}

/// `entries[i][j]`: orientation-corrected AUC of representation column `i`
/// scoring concept `j`.
#[derive(Clone, Debug, PartialEq)]
pub struct PurityMatrix {
    pub entries: Tensor,
    /// Concepts whose target column is constant; their entries are 0.5.
    pub flagged: Vec<usize>,
}

pub fn purity_matrix(reps: &Tensor, c_true: &Tensor) -> Result<PurityMatrix> {
    if reps.rows() != c_true.rows() {
        return Err(Error::Dimension(format!("{} rows vs {}", reps.rows(), c_true.rows())));
    }
    let (ni, nj) = (reps.cols(), c_true.cols());
    let cols: Vec<Vec<f64>> = (0..ni).map(|i| reps.column(i)).collect();
    let mut entries = Tensor::zeros(&[ni, nj]);
    let mut flagged = Vec::new();
    for j in 0..nj {
        let target: Vec<bool> = c_true.column(j).iter().map(|&v| v == 1.0).collect();
        for (i, col) in cols.iter().enumerate() {
            let v = match auc_roc(col, &target) {
                Ok(a) => a.max(1.0 - a),
                Err(Error::UndefinedMetric(_)) => {
                    if !flagged.contains(&j) {
                        flagged.push(j);
                    }
                    0.5
                }
                Err(e) => return Err(e),
            };
            entries.set(i, j, v);
        }
    }
    Ok(PurityMatrix { entries, flagged })
}

fn check_pair(reps: &Tensor, c_true: &Tensor) -> Result<()> {
    if reps.shape() != c_true.shape() || reps.shape().len() != 2 {
        return Err(Error::Dimension(format!("{:?} vs {:?}", reps.shape(), c_true.shape())));
    }
    if c_true.cols() < 2 {
        return Err(Error::Validation("leakage scores need at least 2 concepts".into()));
    }
    Ok(())
}

/// `2·‖π(reps, c) − π(c, c)‖_F / k`, in `[0, 1]`.
pub fn ois(reps: &Tensor, c_true: &Tensor) -> Result<f64> {
    check_pair(reps, c_true)?;
    let pred = purity_matrix(reps, c_true)?;
    let truth = purity_matrix(c_true, c_true)?;
    let frob = pred
        .entries
        .data()
        .iter()
        .zip(truth.entries.data())
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        .sqrt();
    Ok(2.0 * frob / c_true.cols() as f64)
}

/// `n` evenly spaced points covering `[0, 1]`.
pub fn default_beta_grid(n: usize) -> Vec<f64> {
    (0..n).map(|i| i as f64 / (n - 1) as f64).collect()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NisConfig {
    pub train_fraction: f64,
    pub probe: ProbeConfig,
}

impl Default for NisConfig {
    fn default() -> Self {
        Self {
            train_fraction: 0.7,
            probe: ProbeConfig::default(),
        }
    }
}

/// Niche impurity: how well concept `i` can be predicted from the
/// representations outside its niche, integrated over the niche threshold.
pub fn nis(reps: &Tensor, c_true: &Tensor, beta_grid: &[f64], cfg: &NisConfig) -> Result<f64> {
    check_pair(reps, c_true)?;
    if beta_grid.is_empty() {
        return Err(Error::config("beta_grid", "empty grid"));
    }
    if beta_grid.iter().any(|b| !(0.0..=1.0).contains(b)) || beta_grid.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::config("beta_grid", "must be ascending within [0, 1]"));
    }
    let k = c_true.cols();
    let n = c_true.rows();
    let n_train = ((n as f64) * cfg.train_fraction).round() as usize;
    if n_train == 0 || n_train >= n {
        return Err(Error::Validation(format!("cannot split {n} rows for the probe")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut stream(cfg.probe.seed, "nis/split"));
    let (train_rows, test_rows) = order.split_at(n_train);
    let truth = purity_matrix(c_true, c_true)?;

    // ni[b][i]
    let per_concept: Vec<Vec<f64>> = (0..k)
        .into_par_iter()
        .map(|i| {
            let mut cache: HashMap<Vec<usize>, f64> = HashMap::new();
            beta_grid
                .iter()
                .map(|&beta| {
                    let impure: Vec<usize> = (0..k).filter(|&j| truth.entries.at(j, i) < beta).collect();
                    if impure.is_empty() {
                        return Ok(0.5);
                    }
                    if let Some(&v) = cache.get(&impure) {
                        return Ok(v);
                    }
                    let v = niche_probe_auc(reps, c_true, i, &impure, train_rows, test_rows, &cfg.probe)?;
                    cache.insert(impure, v);
                    Ok(v)
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;

    let mean_at = |b: usize| per_concept.iter().map(|v| v[b]).sum::<f64>() / k as f64;
    if beta_grid.len() == 1 {
        return Ok(mean_at(0));
    }
    let mut total = 0.0;
    for b in 1..beta_grid.len() {
        total += 0.5 * (mean_at(b) + mean_at(b - 1)) * (beta_grid[b] - beta_grid[b - 1]);
    }
    Ok(total)
}

fn niche_probe_auc(
    reps: &Tensor,
    c_true: &Tensor,
    i: usize,
    features: &[usize],
    train_rows: &[usize],
    test_rows: &[usize],
    cfg: &ProbeConfig,
) -> Result<f64> {
    let target = |rows: &[usize]| -> Vec<usize> { rows.iter().map(|&r| c_true.at(r, i) as usize).collect() };
    let y_train = target(train_rows);
    let y_test: Vec<bool> = target(test_rows).into_iter().map(|v| v == 1).collect();
    if y_train.iter().all(|&v| v == y_train[0]) {
        return Ok(0.5);
    }
    let x = reps.select_cols(features);
    let probe = LinearProbe::fit(&x.select_rows(train_rows), &y_train, 2, cfg)?;
    let scores = probe.binary_scores(&x.select_rows(test_rows));
    match auc_roc(&scores, &y_test) {
        Ok(a) => Ok(a),
        Err(Error::UndefinedMetric(_)) => Ok(0.5),
        Err(e) => Err(e),
    }
}

/// Average ranks (1-based), ties sharing their mean rank.
fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut out = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            out[k] = avg;
        }
        i = j + 1;
    }
    out
}

/// Spearman rank correlation with tie-averaged ranks.
pub fn spearman(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Dimension(format!("{} vs {}", a.len(), b.len())));
    }
    let (ra, rb) = (ranks(a), ranks(b));
    let n = a.len() as f64;
    let ma = ra.iter().sum::<f64>() / n;
    let mb = rb.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (x, y) in ra.iter().zip(&rb) {
        cov += (x - ma) * (y - mb);
        va += (x - ma).powi(2);
        vb += (y - mb).powi(2);
    }
    if va == 0.0 || vb == 0.0 {
        return Err(Error::UndefinedMetric("rank correlation of a constant series".into()));
    }
    Ok(cov / (va * vb).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng as _;

    fn brute_auc(s: &[f64], l: &[bool]) -> f64 {
        let mut num = 0.0;
        let (mut p, mut q) = (0.0, 0.0);
        for (i, &li) in l.iter().enumerate() {
            if li {
                p += 1.0;
            } else {
                q += 1.0;
            }
            for (j, &lj) in l.iter().enumerate() {
                if li && !lj {
                    if s[i] > s[j] {
                        num += 1.0;
                    } else if s[i] == s[j] {
                        num += 0.5;
                    }
                }
            }
        }
        num / (p * q)
    }

    #[test]
    fn accuracy_edges() {
        assert_eq!(accuracy(&[1, 2, 3], &[1, 2, 3]).unwrap(), 1.0);
        assert_eq!(accuracy(&[0, 0], &[1, 1]).unwrap(), 0.0);
        assert!(accuracy(&[0], &[0, 1]).is_err());
    }

    #[test]
    fn random_concept_accuracy_is_half() {
        let mut rng = stream(0, "t");
        let n = 100_000;
        let p = Tensor::vector((0..n).map(|_| rng.random::<f64>()).collect());
        let t = Tensor::vector((0..n).map(|_| rng.random_range(0..2) as f64).collect());
        let a = concept_accuracy(&p, &t, 0.5).unwrap();
        assert!((a - 0.5).abs() < 0.01, "{a}");
    }

    #[test]
    fn auc_examples() {
        assert_eq!(auc_roc(&[0.1, 0.4, 0.35, 0.8], &[false, false, true, true]).unwrap(), 0.75);
        assert_eq!(auc_roc(&[0.0, 1.0], &[false, true]).unwrap(), 1.0);
        assert_eq!(auc_roc(&[3.0; 5], &[true, false, true, false, false]).unwrap(), 0.5);
        assert!(matches!(auc_roc(&[1.0, 2.0], &[true, true]), Err(Error::UndefinedMetric(_))));
    }

    proptest! {
        #[test]
        fn auc_matches_pair_counting(
            pairs in prop::collection::vec((0u8..20, any::<bool>()), 2..200)
        ) {
            let s: Vec<f64> = pairs.iter().map(|p| p.0 as f64 / 3.0).collect();
            let l: Vec<bool> = pairs.iter().map(|p| p.1).collect();
            prop_assume!(l.iter().any(|&v| v) && l.iter().any(|&v| !v));
            let a = auc_roc(&s, &l).unwrap();
            prop_assert!((a - brute_auc(&s, &l)).abs() < 1e-12);
            let t: Vec<f64> = s.iter().map(|v| (3.0 * v).exp() - 7.0).collect();
            prop_assert_eq!(auc_roc(&t, &l).unwrap(), a);
        }

        #[test]
        fn nauc_telescopes(values in prop::collection::vec(0.0f64..1.0, 2..30)) {
            let n = (values.len() - 1) as f64;
            let direct = (values[values.len() - 1] - values[0]) / n;
            prop_assert!((nauc_tti(&values).unwrap() - direct).abs() < 1e-12);
        }
    }

    fn random_concepts(n: usize, k: usize, seed: u64) -> Tensor {
        let mut rng = stream(seed, "t");
        Tensor::matrix(n, k, (0..n * k).map(|_| rng.random_range(0..2) as f64).collect()).unwrap()
    }

    #[test]
    fn purity_of_truth_has_unit_diagonal_and_duplicates_are_pure() {
        let mut c = random_concepts(300, 3, 1);
        for r in 0..300 {
            let v = c.at(r, 0);
            c.set(r, 2, v);
        }
        let p = purity_matrix(&c, &c).unwrap();
        for i in 0..3 {
            assert_eq!(p.entries.at(i, i), 1.0);
        }
        assert_eq!(p.entries.at(0, 2), 1.0);
        assert_eq!(p.entries.at(2, 0), 1.0);
        assert!(p.flagged.is_empty());
    }

    #[test]
    fn constant_target_is_flagged() {
        let mut c = random_concepts(50, 2, 1);
        for r in 0..50 {
            c.set(r, 1, 0.0);
        }
        let p = purity_matrix(&c, &c).unwrap();
        assert_eq!(p.flagged, vec![1]);
        assert_eq!(p.entries.at(0, 1), 0.5);
    }

    #[test]
    fn noise_purity_is_near_half() {
        let c = random_concepts(2000, 4, 2);
        let mut rng = stream(3, "noise");
        let reps = crate::rng::standard_normal(&mut rng, &[2000, 4]);
        let p = purity_matrix(&reps, &c).unwrap();
        assert!(p.entries.data().iter().all(|&v| (v - 0.5).abs() < 0.05));
    }

    #[test]
    fn ois_of_truth_is_zero_and_permutation_invariant() {
        let c = random_concepts(200, 4, 5);
        assert_eq!(ois(&c, &c).unwrap(), 0.0);
        let mut rng = stream(6, "noise");
        let reps = crate::rng::standard_normal(&mut rng, &[200, 4]);
        let perm = [2, 0, 3, 1];
        let a = ois(&reps, &c).unwrap();
        let b = ois(&reps.select_cols(&perm), &c.select_cols(&perm)).unwrap();
        assert!((a - b).abs() < 1e-12);
        assert!(a > 0.0 && a <= 1.0);
    }

    #[test]
    fn nis_of_independent_noise_is_half() {
        let c = random_concepts(2000, 4, 7);
        let mut rng = stream(8, "noise");
        let reps = crate::rng::standard_normal(&mut rng, &[2000, 4]);
        let v = nis(&reps, &c, &default_beta_grid(21), &NisConfig::default()).unwrap();
        assert!((v - 0.5).abs() < 0.05, "{v}");
    }

    #[test]
    fn nis_sees_total_entanglement() {
        // every representation column is a noisy copy of concept 0
        let c = random_concepts(600, 3, 9);
        let mut rng = stream(10, "noise");
        let mut reps = crate::rng::standard_normal(&mut rng, &[600, 3]);
        for r in 0..600 {
            for j in 0..3 {
                let v = reps.at(r, j) * 0.1 + c.at(r, 0);
                reps.set(r, j, v);
            }
        }
        let grid = default_beta_grid(21);
        let cfg = NisConfig::default();
        let v = nis(&reps, &c, &grid, &cfg).unwrap();
        let noise = crate::rng::standard_normal(&mut rng, &[600, 3]);
        assert!(v > nis(&noise, &c, &grid, &cfg).unwrap());
        assert!(nis(&reps, &c, &[], &cfg).is_err());
    }

    #[test]
    fn spearman_basics() {
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]).unwrap(), 1.0);
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap(), -1.0);
        assert!(spearman(&[1.0, 1.0], &[1.0, 2.0]).is_err());
    }
}
