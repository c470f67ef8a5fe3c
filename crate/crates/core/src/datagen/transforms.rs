use rand::seq::index;
use rand::Rng as _;

use crate::error::{Error, Result};
use crate::info::discrete_mi;
use crate::rng::stream;

use super::Dataset;

/// Rows used to score groups in [`selective_dropout`] unless overridden.
pub const DEFAULT_MI_SUBSAMPLE: usize = 2048;

/// Replaces `k` uniformly chosen concept columns with Bernoulli(0.5) noise.
/// Inputs, labels and groups are untouched.
pub fn corrupt_concepts(ds: &Dataset, k: usize, seed: u64) -> Result<Dataset> {
    let total = ds.n_concepts();
    if k > total {
        return Err(Error::Validation(format!(
            "cannot corrupt {k} of {total} concepts"
        )));
    }
    let mut rng = stream(seed, "corrupt");
    let mut cols = index::sample(&mut rng, total, k).into_vec();
    cols.sort_unstable();
    let mut out = ds.clone();
    for &j in &cols {
        for r in 0..out.len() {
            let v = if rng.random_bool(0.5) { 1.0 } else { 0.0 };
            out.c.set(r, j, v);
        }
    }
    Ok(out)
}

/// Mean plug-in `I(Y; C_i)` over the concepts of each group, computed on the
/// first `subsample` rows.
pub fn group_label_scores(ds: &Dataset, subsample: usize) -> Result<Vec<f64>> {
    let n = ds.len().min(subsample.max(1));
    let y = &ds.y[..n];
    ds.groups
        .iter()
        .map(|g| {
            let mut acc = 0.0;
            for &j in g {
                let cj: Vec<usize> = (0..n).map(|r| ds.c.at(r, j) as usize).collect();
                acc += discrete_mi(y, &cj)?;
            }
            Ok(acc / g.len() as f64)
        })
        .collect()
}

/// Groups removed by [`selective_dropout`]: the ⌊G/2⌋ highest-scoring ones;
/// among equal scores the higher group index goes first.
pub fn selective_dropout_groups(ds: &Dataset, subsample: usize) -> Result<Vec<usize>> {
    let g = ds.n_groups();
    if g < 2 {
        return Err(Error::Validation(format!("dropout needs at least 2 groups, got {g}")));
    }
    let scores = group_label_scores(ds, subsample)?;
    let mut order: Vec<usize> = (0..g).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(b.cmp(&a)));
    let mut removed = order[..g / 2].to_vec();
    removed.sort_unstable();
    Ok(removed)
}

/// Drops the most label-informative half of the concept groups.
pub fn selective_dropout(ds: &Dataset, subsample: usize) -> Result<Dataset> {
    let removed = selective_dropout_groups(ds, subsample)?;
    let keep: Vec<usize> = (0..ds.n_groups()).filter(|g| !removed.contains(g)).collect();
    ds.keep_groups(&keep)
}

/// Groups removed by [`random_dropout`]: ⌊G/2⌋ of `g`, sorted.
pub fn random_dropout_groups(g: usize, seed: u64) -> Result<Vec<usize>> {
    if g < 2 {
        return Err(Error::Validation(format!("dropout needs at least 2 groups, got {g}")));
    }
    let mut rng = stream(seed, "random-dropout");
    let mut removed = index::sample(&mut rng, g, g / 2).into_vec();
    removed.sort_unstable();
    Ok(removed)
}

/// Drops ⌊G/2⌋ groups chosen uniformly at random.
pub fn random_dropout(ds: &Dataset, seed: u64) -> Result<Dataset> {
    let removed = random_dropout_groups(ds.n_groups(), seed)?;
    let keep: Vec<usize> = (0..ds.n_groups()).filter(|i| !removed.contains(i)).collect();
    ds.keep_groups(&keep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{make_synthetic, SynthSpec};
    use crate::diffcore::Tensor;

    fn spec() -> SynthSpec {
        SynthSpec {
            n: 512,
            d: 10,
            k: 8,
            g: 4,
            n_classes: 4,
            ..SynthSpec::default()
        }
    }

    #[test]
    fn corrupting_nothing_is_identity() {
        let ds = make_synthetic(&spec()).unwrap();
        assert_eq!(corrupt_concepts(&ds, 0, 3).unwrap(), ds);
    }

    #[test]
    fn corruption_touches_exactly_k_columns() {
        let ds = make_synthetic(&spec()).unwrap();
        let out = corrupt_concepts(&ds, 3, 11).unwrap();
        assert_eq!(out.x, ds.x);
        assert_eq!(out.y, ds.y);
        assert_eq!(out.groups, ds.groups);
        let changed = (0..ds.n_concepts())
            .filter(|&j| ds.c.column(j) != out.c.column(j))
            .count();
        assert_eq!(changed, 3);
        assert!(corrupt_concepts(&ds, 9, 0).is_err());
    }

    #[test]
    fn full_corruption_is_fair_noise() {
        let ds = make_synthetic(&SynthSpec { n: 4000, ..spec() }).unwrap();
        let out = corrupt_concepts(&ds, ds.n_concepts(), 5).unwrap();
        let tol = 3.0 * (0.25f64 / 4000.0).sqrt();
        for j in 0..out.n_concepts() {
            let m = out.c.column(j).iter().sum::<f64>() / 4000.0;
            assert!((m - 0.5).abs() < tol, "column {j}: {m}");
        }
    }

    fn two_group_dataset(dependent_first: bool) -> Dataset {
        let n = 400;
        let y: Vec<usize> = (0..n).map(|i| i % 2).collect();
        let mut rng = stream(1, "test");
        let mut c = Vec::new();
        for &label in &y {
            let noise = if rng.random_bool(0.5) { 1.0 } else { 0.0 };
            let dep = label as f64;
            if dependent_first {
                c.extend([dep, noise]);
            } else {
                c.extend([noise, dep]);
            }
        }
        Dataset::new(
            Tensor::zeros(&[n, 1]),
            Tensor::matrix(n, 2, c).unwrap(),
            y,
            2,
            vec![vec![0], vec![1]],
        )
        .unwrap()
    }

    #[test]
    fn selective_dropout_removes_the_label_dependent_group() {
        for first in [true, false] {
            let ds = two_group_dataset(first);
            let removed = selective_dropout_groups(&ds, DEFAULT_MI_SUBSAMPLE).unwrap();
            assert_eq!(removed, vec![if first { 0 } else { 1 }]);
            let out = selective_dropout(&ds, DEFAULT_MI_SUBSAMPLE).unwrap();
            assert_eq!(out.n_groups(), 1);
        }
    }

    #[test]
    fn selective_dropout_ties_keep_lowest_indices() {
        let n = 100;
        let col: Vec<f64> = (0..n).map(|i| ((i * 7) % 3 == 0) as u8 as f64).collect();
        let mut c = Vec::new();
        for v in &col {
            c.extend([*v; 4]);
        }
        let ds = Dataset::new(
            Tensor::zeros(&[n, 1]),
            Tensor::matrix(n, 4, c).unwrap(),
            (0..n).map(|i| i % 3).collect(),
            3,
            vec![vec![0], vec![1], vec![2], vec![3]],
        )
        .unwrap();
        assert_eq!(selective_dropout_groups(&ds, DEFAULT_MI_SUBSAMPLE).unwrap(), vec![2, 3]);
    }

    #[test]
    fn random_dropout_is_seeded() {
        let ds = make_synthetic(&SynthSpec { g: 2, ..spec() }).unwrap();
        let a = random_dropout(&ds, 4).unwrap();
        assert_eq!(a.n_groups(), 1);
        assert_eq!(a, random_dropout(&ds, 4).unwrap());
        let one = Dataset { groups: vec![(0..8).collect()], ..ds };
        assert!(random_dropout(&one, 0).is_err());
    }

    #[test]
    fn random_dropout_is_fair_over_seeds() {
        let mut survived = [0usize; 4];
        for seed in 0..1000 {
            let removed = random_dropout_groups(4, seed).unwrap();
            assert_eq!(removed.len(), 2);
            for g in 0..4 {
                survived[g] += !removed.contains(&g) as usize;
            }
        }
        for s in survived {
            assert!((s as f64 / 1000.0 - 0.5).abs() < 0.05, "{s}");
        }
    }
}
