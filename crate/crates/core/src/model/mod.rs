//! The concept bottleneck pipeline `x → z → c → y`.
//!
//! The encoder is a ReLU MLP for `p(z|x)`. Two single dense layers produce
//! the concept mean and log-scale, concept logits are sampled with the
//! reparameterization `mu + sigma·eps`, and a single dense layer maps the
//! downstream concept representation to class logits.

mod checkpoint;
mod fit;

use std::fmt;
use std::str::FromStr;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::datagen::Dataset;
use crate::diffcore::{Graph, Tensor, Var};
use crate::error::{Error, Result};
use crate::rng::stream;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
pub use fit::{fit, EpochLog, FitConfig, TrainLog};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ConceptMode {
    Soft,
    Hard,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Training {
    Joint,
    Independent,
    Sequential,
}

/// Training scheme × concept representation, e.g. `soft-joint`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Regime {
    pub training: Training,
    pub mode: ConceptMode,
}

impl Regime {
    pub const SOFT_JOINT: Regime = Regime {
        training: Training::Joint,
        mode: ConceptMode::Soft,
    };

    pub fn two_phase(&self) -> bool {
        self.training != Training::Joint
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mode = match self.mode {
            ConceptMode::Soft => "soft",
            ConceptMode::Hard => "hard",
        };
        let training = match self.training {
            Training::Joint => "joint",
            Training::Independent => "independent",
            Training::Sequential => "sequential",
        };
        write!(f, "{mode}-{training}")
    }
}

impl FromStr for Regime {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::config("regime", format!("`{s}` is not <soft|hard>-<joint|independent|sequential>"));
        let (mode, training) = s.trim().split_once('-').ok_or_else(bad)?;
        let mode = match mode {
            "soft" => ConceptMode::Soft,
            "hard" => ConceptMode::Hard,
            _ => return Err(bad()),
        };
        let training = match training {
            "joint" => Training::Joint,
            "independent" => Training::Independent,
            "sequential" => Training::Sequential,
            _ => return Err(bad()),
        };
        Ok(Regime { training, mode })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub d_in: usize,
    pub hidden: Vec<usize>,
    pub n_concepts: usize,
    pub n_classes: usize,
    pub mode: ConceptMode,
}

impl ModelConfig {
    pub fn for_dataset(ds: &Dataset, hidden: Vec<usize>, mode: ConceptMode) -> Self {
        Self {
            d_in: ds.n_features(),
            hidden,
            n_concepts: ds.n_concepts(),
            n_classes: ds.n_classes,
            mode,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    /// `out × in`
    pub w: Tensor,
    pub b: Tensor,
}

impl Dense {
    fn init(rng: &mut crate::rng::Rng, fan_in: usize, fan_out: usize, bound: f64) -> Self {
        let w = (0..fan_in * fan_out)
            .map(|_| rng.random_range(-bound..bound))
            .collect();
        Self {
            w: Tensor::matrix(fan_out, fan_in, w).expect("sized"),
            b: Tensor::zeros(&[fan_out]),
        }
    }

    pub fn fan_out(&self) -> usize {
        self.w.shape()[0]
    }

    /// `x Wᵀ + b` outside any graph.
    pub fn apply(&self, x: &Tensor) -> Tensor {
        let (rows, n) = x.dims2();
        let m = self.fan_out();
        let mut out = Vec::with_capacity(rows * m);
        for r in 0..rows {
            let xr = x.row(r);
            for i in 0..m {
                let wr = self.w.row(i);
                let mut acc = self.b.data()[i];
                for j in 0..n {
                    acc += wr[j] * xr[j];
                }
                out.push(acc);
            }
        }
        Tensor::matrix(rows, m, out).expect("sized")
    }
}

/// Per-concept replacement logits used by soft interventions.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InterventionLogits {
    pub low: f64,
    pub high: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CbmModel {
    pub config: ModelConfig,
    pub encoder: Vec<Dense>,
    pub mu_head: Dense,
    pub sigma_head: Dense,
    pub label_head: Dense,
    pub intervention_percentiles: Option<Vec<InterventionLogits>>,
}

/// Which parameter blocks receive updates.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParamSet {
    All,
    /// Encoder plus concept heads.
    Concepts,
    Label,
}

impl ParamSet {
    fn includes(self, block: Block) -> bool {
        match self {
            ParamSet::All => true,
            ParamSet::Concepts => block != Block::Label,
            ParamSet::Label => block == Block::Label,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Block {
    Encoder,
    Heads,
    Label,
}

/// Model parameters registered as graph leaves.
#[derive(Clone, Debug)]
pub struct Bound {
    encoder: Vec<(Var, Var)>,
    mu: (Var, Var),
    sigma: (Var, Var),
    label: (Var, Var),
}

impl Bound {
    /// Leaves in [`CbmModel::params`] order.
    pub fn vars(&self) -> Vec<Var> {
        let mut v: Vec<Var> = self.encoder.iter().flat_map(|&(w, b)| [w, b]).collect();
        v.extend([self.mu.0, self.mu.1, self.sigma.0, self.sigma.1, self.label.0, self.label.1]);
        v
    }

    pub fn encoder_vars(&self) -> Vec<Var> {
        self.encoder.iter().flat_map(|&(w, b)| [w, b]).collect()
    }
}

/// Graph handles produced by [`CbmModel::forward_graph`].
#[derive(Clone, Copy, Debug)]
pub struct ForwardVars {
    pub z: Var,
    pub mu: Var,
    pub log_sigma: Var,
    pub sigma: Var,
    pub c_logits: Var,
    pub c_down: Var,
    pub y_logits: Var,
    /// Logits scored against concept labels: `c_logits` in soft mode, `mu`
    /// in hard mode.
    pub bce_logits: Var,
    /// `sigma` recomputed from a gradient-blocked copy of `z`.
    pub sigma_detached: Var,
}

/// Plain-tensor result of a forward pass.
#[derive(Clone, Debug, PartialEq)]
pub struct ForwardOut {
    pub z: Tensor,
    pub mu: Tensor,
    pub sigma: Tensor,
    pub c_logits: Tensor,
    pub c_down: Tensor,
    pub y_logits: Tensor,
}

impl ForwardOut {
    pub fn predicted_classes(&self) -> Vec<usize> {
        argmax_rows(&self.y_logits)
    }

    /// Concept probabilities `sigmoid(mu)`.
    pub fn concept_probs(&self) -> Tensor {
        self.mu.map(|m| 1.0 / (1.0 + (-m).exp()))
    }
}

pub fn argmax_rows(t: &Tensor) -> Vec<usize> {
    (0..t.rows())
        .map(|r| {
            let row = t.row(r);
            let mut best = 0;
            for (i, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = i;
                }
            }
            best
        })
        .collect()
}

fn binarize(mu: &Tensor) -> Tensor {
    mu.map(|m| if m > 0.0 { 1.0 } else { 0.0 })
}

impl CbmModel {
    /// Kaiming-uniform encoder, fan-in-scaled heads, and a sigma head scaled
    /// down so the initial `sigma` sits near 1.
    pub fn init(config: ModelConfig, seed: u64) -> Result<Self> {
        if config.d_in == 0 || config.n_concepts == 0 || config.n_classes < 2 || config.hidden.contains(&0) {
            return Err(Error::config("model", format!("dimensions must be positive: {config:?}")));
        }
        let mut rng = stream(seed, "model/init");
        let mut encoder = Vec::with_capacity(config.hidden.len());
        let mut fan_in = config.d_in;
        for &h in &config.hidden {
            encoder.push(Dense::init(&mut rng, fan_in, h, (6.0 / fan_in as f64).sqrt()));
            fan_in = h;
        }
        let head = (1.0 / fan_in as f64).sqrt();
        let k = config.n_concepts;
        let mu_head = Dense::init(&mut rng, fan_in, k, head);
        let sigma_head = Dense::init(&mut rng, fan_in, k, 0.1 * head);
        let label_head = Dense::init(&mut rng, k, config.n_classes, (1.0 / k as f64).sqrt());
        Ok(Self {
            config,
            encoder,
            mu_head,
            sigma_head,
            label_head,
            intervention_percentiles: None,
        })
    }

    pub fn n_concepts(&self) -> usize {
        self.config.n_concepts
    }

    fn blocks(&self) -> Vec<(Block, &Tensor)> {
        let mut out = Vec::new();
        for l in &self.encoder {
            out.push((Block::Encoder, &l.w));
            out.push((Block::Encoder, &l.b));
        }
        for l in [&self.mu_head, &self.sigma_head] {
            out.push((Block::Heads, &l.w));
            out.push((Block::Heads, &l.b));
        }
        out.push((Block::Label, &self.label_head.w));
        out.push((Block::Label, &self.label_head.b));
        out
    }

    /// All parameter tensors in a fixed order.
    pub fn params(&self) -> Vec<&Tensor> {
        self.blocks().into_iter().map(|(_, t)| t).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out: Vec<&mut Tensor> = Vec::new();
        for l in &mut self.encoder {
            out.push(&mut l.w);
            out.push(&mut l.b);
        }
        for l in [&mut self.mu_head, &mut self.sigma_head, &mut self.label_head] {
            out.push(&mut l.w);
            out.push(&mut l.b);
        }
        out
    }

    /// Mask over [`params`](Self::params) for the given set.
    pub fn trainable_mask(&self, set: ParamSet) -> Vec<bool> {
        self.blocks().into_iter().map(|(b, _)| set.includes(b)).collect()
    }

    /// Registers every parameter in `g`; those outside `set` become constants.
    pub fn bind(&self, g: &mut Graph, set: ParamSet) -> Bound {
        let mut leaf = |block: Block, t: &Tensor| {
            if set.includes(block) {
                g.param(t.clone())
            } else {
                g.constant(t.clone())
            }
        };
        let encoder = self
            .encoder
            .iter()
            .map(|l| (leaf(Block::Encoder, &l.w), leaf(Block::Encoder, &l.b)))
            .collect();
        let mu = (leaf(Block::Heads, &self.mu_head.w), leaf(Block::Heads, &self.mu_head.b));
        let sigma = (
            leaf(Block::Heads, &self.sigma_head.w),
            leaf(Block::Heads, &self.sigma_head.b),
        );
        let label = (
            leaf(Block::Label, &self.label_head.w),
            leaf(Block::Label, &self.label_head.b),
        );
        Bound {
            encoder,
            mu,
            sigma,
            label,
        }
    }

    /// Records a forward pass. `eps` is the caller's standard-normal noise
    /// (zeros for evaluation). In hard mode the label head reads
    /// `1[sigmoid(mu) > 0.5]` as a constant, so no gradient crosses the
    /// binarization.
    pub fn forward_graph(&self, g: &mut Graph, p: &Bound, x: Var, eps: &Tensor) -> Result<ForwardVars> {
        let k = self.n_concepts();
        let rows = g.value(x).rows();
        if g.value(x).shape().len() != 2 || g.value(x).cols() != self.config.d_in {
            return Err(Error::Dimension(format!(
                "input {:?} vs model input width {}",
                g.value(x).shape(),
                self.config.d_in
            )));
        }
        if eps.shape() != [rows, k] {
            return Err(Error::Dimension(format!("eps {:?} vs [{rows}, {k}]", eps.shape())));
        }
        let mut h = x;
        for &(w, b) in &p.encoder {
            let pre = g.dense(w, b, h)?;
            h = g.relu(pre);
        }
        let z = h;
        let mu = g.dense(p.mu.0, p.mu.1, z)?;
        let log_sigma = g.dense(p.sigma.0, p.sigma.1, z)?;
        let sigma = g.exp(log_sigma);
        let c_logits = g.reparam_sample(mu, log_sigma, eps)?;

        let z_blocked = g.stop_gradient(z);
        let ls_detached = g.dense(p.sigma.0, p.sigma.1, z_blocked)?;
        let sigma_detached = g.exp(ls_detached);

        let (c_down, bce_logits) = match self.config.mode {
            ConceptMode::Soft => (c_logits, c_logits),
            ConceptMode::Hard => {
                let hard = binarize(g.value(mu));
                (g.constant(hard), mu)
            }
        };
        let y_logits = g.dense(p.label.0, p.label.1, c_down)?;
        Ok(ForwardVars {
            z,
            mu,
            log_sigma,
            sigma,
            c_logits,
            c_down,
            y_logits,
            bce_logits,
            sigma_detached,
        })
    }

    /// Forward pass on plain tensors.
    pub fn forward(&self, x: &Tensor, eps: &Tensor) -> Result<ForwardOut> {
        let mut g = Graph::new();
        let p = self.bind(&mut g, ParamSet::Label);
        let xv = g.constant(x.clone());
        let v = self.forward_graph(&mut g, &p, xv, eps)?;
        Ok(ForwardOut {
            z: g.value(v.z).clone(),
            mu: g.value(v.mu).clone(),
            sigma: g.value(v.sigma).clone(),
            c_logits: g.value(v.c_logits).clone(),
            c_down: g.value(v.c_down).clone(),
            y_logits: g.value(v.y_logits).clone(),
        })
    }

    /// Evaluation pass with `eps = 0`.
    pub fn predict(&self, x: &Tensor) -> Result<ForwardOut> {
        self.forward(x, &Tensor::zeros(&[x.rows(), self.n_concepts()]))
    }

    pub fn label_logits(&self, c_down: &Tensor) -> Tensor {
        self.label_head.apply(c_down)
    }

    /// Stores the 5th/95th percentiles of `mu` over `train` per concept.
    pub fn calibrate_intervention_percentiles(&mut self, train: &Dataset) -> Result<()> {
        let out = self.predict(&train.x)?;
        let k = self.n_concepts();
        let mut pct = Vec::with_capacity(k);
        for j in 0..k {
            let mut col = out.mu.column(j);
            col.sort_by(f64::total_cmp);
            pct.push(InterventionLogits {
                low: percentile(&col, 5.0),
                high: percentile(&col, 95.0),
            });
        }
        self.intervention_percentiles = Some(pct);
        Ok(())
    }

    /// Concept value fed downstream when concept `j` is set to `truth`.
    fn intervention_value(&self, j: usize, truth: f64) -> Result<f64> {
        match self.config.mode {
            ConceptMode::Hard => Ok(truth),
            ConceptMode::Soft => {
                let pct = self
                    .intervention_percentiles
                    .as_ref()
                    .ok_or_else(|| Error::Contract("model has no intervention percentiles; calibrate first".into()))?;
                Ok(if truth == 1.0 { pct[j].high } else { pct[j].low })
            }
        }
    }

    /// Ground-truth concepts mapped to what the label head sees after a
    /// full intervention.
    pub fn intervened_inputs(&self, c_true: &Tensor) -> Result<Tensor> {
        let mut out = c_true.clone();
        for r in 0..out.rows() {
            for j in 0..out.cols() {
                let v = self.intervention_value(j, c_true.at(r, j))?;
                out.set(r, j, v);
            }
        }
        Ok(out)
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.n_concepts();
        if self.mu_head.fan_out() != k || self.sigma_head.fan_out() != k || self.label_head.w.shape()[1] != k {
            return Err(Error::Contract("concept heads disagree on K".into()));
        }
        if let Some(p) = &self.intervention_percentiles {
            if p.len() != k {
                return Err(Error::Contract(format!("{} percentiles for {k} concepts", p.len())));
            }
        }
        Ok(())
    }
}

/// Linear-interpolated percentile of sorted data.
fn percentile(sorted: &[f64], q: f64) -> f64 {
    if sorted.len() == 1 {
        return sorted[0];
    }
    let pos = q / 100.0 * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

/// Replaces the downstream concepts of every concept in `group_ids` with
/// ground truth and recomputes the class logits.
pub fn intervene(out: &ForwardOut, c_true: &Tensor, groups: &[Vec<usize>], group_ids: &[usize], model: &CbmModel) -> Result<ForwardOut> {
    if c_true.shape() != out.c_down.shape() {
        return Err(Error::Dimension(format!(
            "c_true {:?} vs concepts {:?}",
            c_true.shape(),
            out.c_down.shape()
        )));
    }
    if let Some(v) = c_true.data().iter().find(|&&v| v != 0.0 && v != 1.0) {
        return Err(Error::Validation(format!("c_true value {v} is not binary")));
    }
    let mut c_down = out.c_down.clone();
    for &gid in group_ids {
        let members = groups
            .get(gid)
            .ok_or_else(|| Error::Validation(format!("unknown group id {gid}")))?;
        for &j in members {
            for r in 0..c_down.rows() {
                let v = model.intervention_value(j, c_true.at(r, j))?;
                c_down.set(r, j, v);
            }
        }
    }
    let y_logits = model.label_logits(&c_down);
    Ok(ForwardOut {
        c_down,
        y_logits,
        ..out.clone()
    })
}

/// Draws one standard-normal `eps` per row for a training step.
pub(crate) fn sample_eps(rng: &mut crate::rng::Rng, rows: usize, k: usize) -> Tensor {
    crate::rng::standard_normal(rng, &[rows, k])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{make_synthetic, SynthSpec};

    fn config(mode: ConceptMode) -> ModelConfig {
        ModelConfig {
            d_in: 6,
            hidden: vec![16, 16],
            n_concepts: 4,
            n_classes: 3,
            mode,
        }
    }

    fn inputs(rows: usize) -> Tensor {
        let mut rng = stream(1, "inputs");
        crate::rng::standard_normal(&mut rng, &[rows, 6])
    }

    #[test]
    fn init_is_seeded() {
        let a = CbmModel::init(config(ConceptMode::Soft), 3).unwrap();
        let b = CbmModel::init(config(ConceptMode::Soft), 3).unwrap();
        let c = CbmModel::init(config(ConceptMode::Soft), 4).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        a.validate().unwrap();
    }

    #[test]
    fn initial_sigma_is_near_one() {
        let m = CbmModel::init(config(ConceptMode::Soft), 0).unwrap();
        let out = m.predict(&inputs(256)).unwrap();
        let mean = out.sigma.mean();
        assert!((0.5..=2.0).contains(&mean), "{mean}");
    }

    #[test]
    fn zero_noise_gives_mean_logits_and_is_deterministic() {
        let m = CbmModel::init(config(ConceptMode::Soft), 0).unwrap();
        let x = inputs(10);
        let a = m.predict(&x).unwrap();
        let b = m.predict(&x).unwrap();
        assert_eq!(a.c_logits, a.mu);
        assert_eq!(a.c_down, a.c_logits);
        assert_eq!(a.y_logits, b.y_logits);
        assert!(a.sigma.data().iter().all(|&s| s > 0.0));
    }

    #[test]
    fn hard_mode_binarizes_mu() {
        let mut m = CbmModel::init(config(ConceptMode::Hard), 0).unwrap();
        // saturate mu: zero weights, bias of ±1000
        m.mu_head.w = Tensor::zeros(m.mu_head.w.shape());
        m.mu_head.b = Tensor::vector(vec![1000.0, -1000.0, 1000.0, -1000.0]);
        let out = m.predict(&inputs(3)).unwrap();
        for r in 0..3 {
            assert_eq!(out.c_down.row(r), &[1.0, 0.0, 1.0, 0.0]);
        }
        assert_eq!(out.y_logits, m.label_logits(&out.c_down));
    }

    #[test]
    fn forward_rejects_bad_shapes() {
        let m = CbmModel::init(config(ConceptMode::Soft), 0).unwrap();
        assert!(matches!(m.forward(&inputs(4), &Tensor::zeros(&[4, 3])), Err(Error::Dimension(_))));
        assert!(matches!(m.predict(&Tensor::zeros(&[2, 5])), Err(Error::Dimension(_))));
    }

    #[test]
    fn regime_parses_and_prints() {
        for s in ["soft-joint", "hard-independent", "soft-sequential", "hard-joint"] {
            assert_eq!(s.parse::<Regime>().unwrap().to_string(), s);
        }
        assert!("soft".parse::<Regime>().is_err());
        assert!("medium-joint".parse::<Regime>().is_err());
    }

    fn calibrated(mode: ConceptMode) -> (CbmModel, Dataset) {
        let ds = make_synthetic(&SynthSpec {
            n: 200,
            d: 6,
            k: 4,
            g: 2,
            n_classes: 3,
            ..SynthSpec::default()
        })
        .unwrap();
        let mut m = CbmModel::init(config(mode), 2).unwrap();
        m.calibrate_intervention_percentiles(&ds).unwrap();
        (m, ds)
    }

    #[test]
    fn percentiles_are_ordered_and_collapse_on_constant_mu() {
        let (mut m, ds) = calibrated(ConceptMode::Soft);
        for p in m.intervention_percentiles.as_ref().unwrap() {
            assert!(p.low <= p.high);
        }
        m.mu_head.w = Tensor::zeros(m.mu_head.w.shape());
        m.mu_head.b = Tensor::vector(vec![0.25, -1.0, 2.0, 0.0]);
        m.calibrate_intervention_percentiles(&ds).unwrap();
        let p = m.intervention_percentiles.as_ref().unwrap();
        assert_eq!(p[0], InterventionLogits { low: 0.25, high: 0.25 });
        assert_eq!(p[2], InterventionLogits { low: 2.0, high: 2.0 });
    }

    #[test]
    fn empty_intervention_is_identity() {
        let (m, ds) = calibrated(ConceptMode::Soft);
        let out = m.predict(&ds.x).unwrap();
        assert_eq!(intervene(&out, &ds.c, &ds.groups, &[], &m).unwrap(), out);
    }

    #[test]
    fn full_hard_intervention_uses_truth() {
        let (m, ds) = calibrated(ConceptMode::Hard);
        let out = m.predict(&ds.x).unwrap();
        let all: Vec<usize> = (0..ds.n_groups()).collect();
        let iv = intervene(&out, &ds.c, &ds.groups, &all, &m).unwrap();
        assert_eq!(iv.c_down, ds.c);
    }

    #[test]
    fn intervention_touches_only_selected_groups_and_is_idempotent() {
        let (m, ds) = calibrated(ConceptMode::Soft);
        let out = m.predict(&ds.x).unwrap();
        let once = intervene(&out, &ds.c, &ds.groups, &[1], &m).unwrap();
        let twice = intervene(&once, &ds.c, &ds.groups, &[1], &m).unwrap();
        assert_eq!(once, twice);
        let pct = m.intervention_percentiles.as_ref().unwrap();
        for r in 0..ds.len() {
            for j in 0..4 {
                let v = once.c_down.at(r, j);
                if ds.groups[1].contains(&j) {
                    let want = if ds.c.at(r, j) == 1.0 { pct[j].high } else { pct[j].low };
                    assert_eq!(v, want);
                } else {
                    assert_eq!(v, out.c_down.at(r, j));
                }
            }
        }
    }

    #[test]
    fn intervention_errors() {
        let (m, ds) = calibrated(ConceptMode::Soft);
        let out = m.predict(&ds.x).unwrap();
        assert!(matches!(
            intervene(&out, &ds.c, &ds.groups, &[7], &m),
            Err(Error::Validation(_))
        ));
        let mut raw = m.clone();
        raw.intervention_percentiles = None;
        assert!(matches!(
            intervene(&out, &ds.c, &ds.groups, &[0], &raw),
            Err(Error::Contract(_))
        ));
    }
}
