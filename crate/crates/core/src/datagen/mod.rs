//! Concept datasets: the synthetic generator with a tunable leakage
//! channel, CSV ingestion, splitting, and the concept-set transforms used by
//! the leakage and intervention experiments.

mod csv_io;
mod transforms;

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::diffcore::Tensor;
use crate::error::{Error, Result};
use crate::rng::stream;

pub use csv_io::{groups_path, load_concept_csv, write_concept_csv};
pub use transforms::{
    corrupt_concepts, group_label_scores, random_dropout, random_dropout_groups, selective_dropout, selective_dropout_groups,
    DEFAULT_MI_SUBSAMPLE,
};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum Split {
    #[default]
    Full,
    Train,
    Val,
    Test,
}

/// Inputs, binary concept annotations with group structure, and class labels.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    /// `N × D` inputs.
    pub x: Tensor,
    /// `N × K` concept annotations, every entry 0.0 or 1.0.
    pub c: Tensor,
    pub y: Vec<usize>,
    pub n_classes: usize,
    /// Disjoint partition of `0..K`.
    pub groups: Vec<Vec<usize>>,
    pub concept_names: Vec<String>,
    pub split: Split,
}

impl Dataset {
    pub fn new(
        x: Tensor,
        c: Tensor,
        y: Vec<usize>,
        n_classes: usize,
        groups: Vec<Vec<usize>>,
    ) -> Result<Self> {
        let k = c.cols();
        let ds = Self {
            x,
            c,
            y,
            n_classes,
            groups,
            concept_names: (0..k).map(|i| format!("c_{i}")).collect(),
            split: Split::Full,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.y.len();
        if self.x.shape().len() != 2 || self.c.shape().len() != 2 {
            return Err(Error::Dimension("X and C must be matrices".into()));
        }
        if self.x.rows() != n || self.c.rows() != n {
            return Err(Error::Dimension(format!(
                "row counts disagree: X {} C {} Y {n}",
                self.x.rows(),
                self.c.rows()
            )));
        }
        if let Some(v) = self.c.data().iter().find(|&&v| v != 0.0 && v != 1.0) {
            return Err(Error::Validation(format!("concept value {v} is not binary")));
        }
        if let Some(&bad) = self.y.iter().find(|&&y| y >= self.n_classes) {
            return Err(Error::Validation(format!(
                "label {bad} out of range for {} classes",
                self.n_classes
            )));
        }
        let k = self.c.cols();
        if self.concept_names.len() != k {
            return Err(Error::Dimension(format!(
                "{} concept names for {k} concepts",
                self.concept_names.len()
            )));
        }
        let mut seen = vec![false; k];
        for (gi, g) in self.groups.iter().enumerate() {
            if g.is_empty() {
                return Err(Error::Validation(format!("group {gi} is empty")));
            }
            for &j in g {
                if j >= k || seen[j] {
                    return Err(Error::Validation(format!(
                        "group {gi} member {j} is out of range or repeated"
                    )));
                }
                seen[j] = true;
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::Validation("groups do not cover every concept".into()));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.x.cols()
    }

    pub fn n_concepts(&self) -> usize {
        self.c.cols()
    }

    pub fn n_groups(&self) -> usize {
        self.groups.len()
    }

    /// Concept column `k` as 0/1 labels.
    pub fn concept_labels(&self, k: usize) -> Vec<usize> {
        (0..self.len()).map(|r| self.c.at(r, k) as usize).collect()
    }

    /// Rows picked by index; group structure is kept.
    pub fn subset(&self, rows: &[usize]) -> Self {
        Self {
            x: self.x.select_rows(rows),
            c: self.c.select_rows(rows),
            y: rows.iter().map(|&r| self.y[r]).collect(),
            n_classes: self.n_classes,
            groups: self.groups.clone(),
            concept_names: self.concept_names.clone(),
            split: self.split,
        }
    }

    /// Keeps only the listed groups (in their original order) and the
    /// concept columns they own; concept indices are renumbered.
    pub fn keep_groups(&self, keep: &[usize]) -> Result<Self> {
        let mut keep = keep.to_vec();
        keep.sort_unstable();
        keep.dedup();
        if let Some(&bad) = keep.iter().find(|&&g| g >= self.n_groups()) {
            return Err(Error::Validation(format!("unknown group id {bad}")));
        }
        let mut cols = Vec::new();
        let mut groups = Vec::with_capacity(keep.len());
        for &g in &keep {
            let start = cols.len();
            cols.extend_from_slice(&self.groups[g]);
            groups.push((start..cols.len()).collect());
        }
        Ok(Self {
            x: self.x.clone(),
            c: self.c.select_cols(&cols),
            y: self.y.clone(),
            n_classes: self.n_classes,
            groups,
            concept_names: cols.iter().map(|&j| self.concept_names[j].clone()).collect(),
            split: self.split,
        })
    }

    pub fn with_split(mut self, split: Split) -> Self {
        self.split = split;
        self
    }
}

/// `K` concepts in `G` contiguous blocks whose sizes differ by at most one.
pub fn contiguous_groups(k: usize, g: usize) -> Vec<Vec<usize>> {
    let base = k / g;
    let extra = k % g;
    let mut out = Vec::with_capacity(g);
    let mut start = 0;
    for i in 0..g {
        let len = base + usize::from(i < extra);
        out.push((start..start + len).collect());
        start += len;
    }
    out
}

/// Parameters of the synthetic generator.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub n: usize,
    pub d: usize,
    pub k: usize,
    pub g: usize,
    pub n_classes: usize,
    pub p_flip: f64,
    pub leak_strength: f64,
    pub obs_noise: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            n: 4096,
            d: 32,
            k: 16,
            g: 4,
            n_classes: 8,
            p_flip: 0.05,
            leak_strength: 1.0,
            obs_noise: 0.1,
            seed: 7,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let fail = |key: &str, msg: String| Err(Error::config(key, msg));
        if self.n == 0 {
            return fail("n", "must be positive".into());
        }
        if self.d == 0 {
            return fail("d", "must be positive".into());
        }
        if self.k == 0 {
            return fail("k", "must be positive".into());
        }
        if self.g == 0 || self.g > self.k {
            return fail("g", format!("need 1 <= G <= K={}, got {}", self.k, self.g));
        }
        if self.n_classes < 2 {
            return fail("n_classes", "need at least two classes".into());
        }
        if !(0.0..0.5).contains(&self.p_flip) {
            return fail("p_flip", format!("must lie in [0, 0.5), got {}", self.p_flip));
        }
        if !(self.leak_strength >= 0.0 && self.leak_strength.is_finite()) {
            return fail("leak_strength", format!("must be >= 0, got {}", self.leak_strength));
        }
        if !(self.obs_noise > 0.0 && self.obs_noise.is_finite()) {
            return fail("obs_noise", format!("must be > 0, got {}", self.obs_noise));
        }
        Ok(())
    }
}

/// Fixed random structure behind a synthetic dataset.
#[derive(Clone, Debug)]
pub struct SynthStructure {
    /// `Kc × K` class-level concept templates.
    pub templates: Tensor,
    /// `D × K` concept-to-input map.
    pub concept_map: Tensor,
    /// `D × Kc` class-to-input map (the leakage channel).
    pub class_map: Tensor,
}

fn gaussian_matrix(rng: &mut crate::rng::Rng, rows: usize, cols: usize, scale: f64) -> Tensor {
    let data = (0..rows * cols)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            scale * z
        })
        .collect::<Vec<f64>>();
    Tensor::matrix(rows, cols, data).expect("sized")
}

pub fn synth_structure(spec: &SynthSpec) -> SynthStructure {
    let mut rng = stream(spec.seed, "synthetic/structure");
    let templates = (0..spec.n_classes * spec.k)
        .map(|_| if rng.random_bool(0.5) { 1.0 } else { 0.0 })
        .collect();
    SynthStructure {
        templates: Tensor::matrix(spec.n_classes, spec.k, templates).expect("sized"),
        concept_map: gaussian_matrix(&mut rng, spec.d, spec.k, 1.0 / (spec.k as f64).sqrt()),
        class_map: gaussian_matrix(&mut rng, spec.d, spec.n_classes, 1.0),
    }
}

/// Draws `y` uniformly, sets `c` to the class template with independent bit
/// flips, and emits `x = A·c + λ·B·onehot(y) + σ·η`. With `λ > 0` the input
/// carries class information that bypasses the concepts.
pub fn make_synthetic(spec: &SynthSpec) -> Result<Dataset> {
    spec.validate()?;
    let st = synth_structure(spec);
    let mut rng = stream(spec.seed, "synthetic/rows");
    let (n, d, k) = (spec.n, spec.d, spec.k);
    let mut x = Vec::with_capacity(n * d);
    let mut c = Vec::with_capacity(n * k);
    let mut y = Vec::with_capacity(n);
    let mut row_c = vec![0.0; k];
    for _ in 0..n {
        let label = rng.random_range(0..spec.n_classes);
        for (j, slot) in row_c.iter_mut().enumerate() {
            let bit = st.templates.at(label, j);
            let flip = spec.p_flip > 0.0 && rng.random_bool(spec.p_flip);
            *slot = if flip { 1.0 - bit } else { bit };
        }
        for i in 0..d {
            let a = st.concept_map.row(i);
            let signal: f64 = a.iter().zip(&row_c).map(|(w, v)| w * v).sum();
            let noise: f64 = StandardNormal.sample(&mut rng);
            x.push(signal + spec.leak_strength * st.class_map.at(i, label) + spec.obs_noise * noise);
        }
        c.extend_from_slice(&row_c);
        y.push(label);
    }
    Dataset::new(
        Tensor::matrix(n, d, x)?,
        Tensor::matrix(n, k, c)?,
        y,
        spec.n_classes,
        contiguous_groups(k, spec.g),
    )
}

/// Class-stratified split into train/val/test. Rows keep their original
/// relative order inside each part.
pub fn split(ds: &Dataset, fractions: [f64; 3], seed: u64) -> Result<(Dataset, Dataset, Dataset)> {
    if fractions.iter().any(|&f| !(f >= 0.0)) {
        return Err(Error::config("fractions", "must be non-negative"));
    }
    let total: f64 = fractions.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::config("fractions", format!("must sum to 1, got {total}")));
    }
    let active = fractions.iter().filter(|&&f| f > 0.0).count();
    let mut rng = stream(seed, "split");
    let mut parts: [Vec<usize>; 3] = Default::default();
    for class in 0..ds.n_classes {
        let mut idx: Vec<usize> = (0..ds.len()).filter(|&r| ds.y[r] == class).collect();
        if idx.is_empty() {
            continue;
        }
        if idx.len() < active {
            return Err(Error::Validation(format!(
                "class {class} has {} rows, fewer than {active} splits",
                idx.len()
            )));
        }
        idx.shuffle(&mut rng);
        let n = idx.len() as f64;
        let b1 = (fractions[0] * n).round() as usize;
        let b2 = (((fractions[0] + fractions[1]) * n).round() as usize).max(b1);
        parts[0].extend_from_slice(&idx[..b1]);
        parts[1].extend_from_slice(&idx[b1..b2]);
        parts[2].extend_from_slice(&idx[b2..]);
    }
    let [mut tr, mut va, mut te] = parts;
    tr.sort_unstable();
    va.sort_unstable();
    te.sort_unstable();
    Ok((
        ds.subset(&tr).with_split(Split::Train),
        ds.subset(&va).with_split(Split::Val),
        ds.subset(&te).with_split(Split::Test),
    ))
}
