use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::datagen::Dataset;
use crate::diffcore::{clip_grad_norm, AdamConfig, AdamState, Graph, Tensor, Var};
use crate::error::{Error, Result};
use crate::info::{entropy_c, mi_plane, Bandwidth, InfoPlanePoint};
use crate::losses::{loss, LossConfig, LossVariant, Marginal, Targets};
use crate::metrics::{accuracy, concept_accuracy};
use crate::rng::{standard_normal, stream, Rng};

use super::{sample_eps, CbmModel, ConceptMode, ParamSet, Regime, Training};

/// Rows used for information-plane estimates.
const INFOPLANE_ROWS: usize = 512;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub regime: Regime,
    pub loss: LossConfig,
    /// Epochs per training phase.
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub clip_norm: Option<f64>,
    pub seed: u64,
    /// Record an information-plane point every `stride` epochs.
    pub infoplane_stride: Option<usize>,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            regime: Regime::SOFT_JOINT,
            loss: LossConfig::default(),
            epochs: 100,
            batch_size: 128,
            adam: AdamConfig::default(),
            clip_norm: None,
            seed: 0,
            infoplane_stride: None,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        self.loss.validate()?;
        if self.epochs == 0 {
            return Err(Error::config("epochs", "must be >= 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch", "must be >= 1"));
        }
        if !(self.adam.lr > 0.0) {
            return Err(Error::config("lr", format!("{} must be > 0", self.adam.lr)));
        }
        if !(self.adam.weight_decay >= 0.0) {
            return Err(Error::config("wd", format!("{} must be >= 0", self.adam.weight_decay)));
        }
        if self.infoplane_stride == Some(0) {
            return Err(Error::config("infoplane_stride", "must be >= 1"));
        }
        Ok(())
    }

    pub fn total_epochs(&self) -> usize {
        if self.regime.two_phase() {
            2 * self.epochs
        } else {
            self.epochs
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    /// Counted from 1 across both phases.
    pub epoch: usize,
    pub phase: u8,
    pub train_loss: f64,
    pub val_loss: f64,
    pub concept_acc: f64,
    pub class_acc: f64,
    pub entropy_c: f64,
    /// Additive constant of the estimator surrogate; not optimized.
    pub rho: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub epochs: Vec<EpochLog>,
    pub infoplane: Vec<InfoPlanePoint>,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Phase {
    Joint,
    Concepts,
    Label,
}

struct Trainer<'a> {
    cfg: &'a FitConfig,
    train: &'a Dataset,
    val: &'a Dataset,
    rng: Rng,
    log: TrainLog,
    epoch: usize,
}

/// Trains `model` under `cfg.regime` and calibrates its intervention
/// percentiles on `train`.
pub fn fit(mut model: CbmModel, train: &Dataset, val: &Dataset, cfg: &FitConfig) -> Result<(CbmModel, TrainLog)> {
    cfg.validate()?;
    if model.config.mode != cfg.regime.mode {
        return Err(Error::config(
            "regime",
            format!("model is {:?} but regime is {}", model.config.mode, cfg.regime),
        ));
    }
    for ds in [train, val] {
        if ds.n_features() != model.config.d_in || ds.n_concepts() != model.n_concepts() {
            return Err(Error::Dimension(format!(
                "dataset has D={} K={}, model expects D={} K={}",
                ds.n_features(),
                ds.n_concepts(),
                model.config.d_in,
                model.n_concepts()
            )));
        }
        if ds.y.iter().any(|&y| y >= model.config.n_classes) {
            return Err(Error::Validation("class label beyond model classes".into()));
        }
    }
    if train.is_empty() || val.is_empty() {
        return Err(Error::Validation("train and validation sets must be non-empty".into()));
    }

    let mut t = Trainer {
        cfg,
        train,
        val,
        rng: stream(cfg.seed, "fit"),
        log: TrainLog::default(),
        epoch: 0,
    };
    t.snapshot(&model)?;
    match cfg.regime.training {
        Training::Joint => t.run_phase(&mut model, Phase::Joint)?,
        Training::Independent | Training::Sequential => {
            t.run_phase(&mut model, Phase::Concepts)?;
            model.calibrate_intervention_percentiles(train)?;
            t.run_phase(&mut model, Phase::Label)?;
        }
    }
    model.calibrate_intervention_percentiles(train)?;
    Ok((model, t.log))
}

impl Trainer<'_> {
    fn run_phase(&mut self, model: &mut CbmModel, phase: Phase) -> Result<()> {
        let set = match phase {
            Phase::Joint => ParamSet::All,
            Phase::Concepts => ParamSet::Concepts,
            Phase::Label => ParamSet::Label,
        };
        let mask = model.trainable_mask(set);
        let mut adam = AdamState::new(
            self.cfg.adam,
            model.params().into_iter().zip(&mask).filter(|(_, &m)| m).map(|(p, _)| p),
        );
        let n = self.train.len();
        let mut order: Vec<usize> = (0..n).collect();
        for _ in 0..self.cfg.epochs {
            self.epoch += 1;
            order.shuffle(&mut self.rng);
            let mut total = 0.0;
            for rows in order.chunks(self.cfg.batch_size) {
                let (value, grads) = self.step_grads(model, phase, set, rows)?;
                if !value.is_finite() {
                    return Err(Error::Training {
                        epoch: self.epoch,
                        msg: format!("non-finite training loss {value}"),
                    });
                }
                total += value * rows.len() as f64;
                let mut grads: Vec<Tensor> = grads;
                if let Some(max) = self.cfg.clip_norm {
                    clip_grad_norm(&mut grads, max);
                }
                let mut params: Vec<&mut Tensor> = model
                    .params_mut()
                    .into_iter()
                    .zip(&mask)
                    .filter(|(_, &m)| m)
                    .map(|(p, _)| p)
                    .collect();
                adam.step(&mut params, &grads)?;
            }
            let entry = self.evaluate(model, phase, total / n as f64)?;
            self.log.epochs.push(entry);
            self.snapshot(model)?;
        }
        Ok(())
    }

    /// Loss value and gradients of the trainable parameters on `rows`.
    fn step_grads(&mut self, model: &CbmModel, phase: Phase, set: ParamSet, rows: &[usize]) -> Result<(f64, Vec<Tensor>)> {
        let k = model.n_concepts();
        let x = self.train.x.select_rows(rows);
        let c = self.train.c.select_rows(rows);
        let y: Vec<usize> = rows.iter().map(|&r| self.train.y[r]).collect();
        let eps = sample_eps(&mut self.rng, rows.len(), k);

        let mut g = Graph::new();
        let p = model.bind(&mut g, set);
        let root = match phase {
            Phase::Label => {
                let inputs = self.label_inputs(model, &x, &c, Some(&eps))?;
                label_loss(&mut g, &p, inputs, &y)?
            }
            Phase::Joint | Phase::Concepts => {
                let xv = g.constant(x);
                let out = model.forward_graph(&mut g, &p, xv, &eps)?;
                let marginal = if self.cfg.loss.variant == LossVariant::IbE {
                    let idx = rand::seq::index::sample(&mut self.rng, self.train.len(), self.cfg.loss.mi_samples.min(self.train.len()));
                    let xm = g.constant(self.train.x.select_rows(&idx.into_vec()));
                    let rows_m = g.value(xm).rows();
                    let m = model.forward_graph(&mut g, &p, xm, &Tensor::zeros(&[rows_m, k]))?;
                    Some(Marginal { mu: m.mu, sigma: m.sigma })
                } else {
                    None
                };
                let targets = Targets {
                    c: &c,
                    y: (phase == Phase::Joint).then_some(y.as_slice()),
                };
                loss(&mut g, &out, targets, &self.cfg.loss, marginal)?
            }
        };
        let value = g.value(root).item();
        let grads = g.backward(root)?;
        let trainable: Vec<Var> = p
            .vars()
            .into_iter()
            .zip(model.trainable_mask(set))
            .filter(|(_, m)| *m)
            .map(|(v, _)| v)
            .collect();
        Ok((value, trainable.into_iter().map(|v| grads.wrt(v, g.value(v))).collect()))
    }

    /// What the label head reads in the second phase: ground-truth concepts
    /// (independent) or the frozen model's concepts (sequential).
    fn label_inputs(&self, model: &CbmModel, x: &Tensor, c: &Tensor, eps: Option<&Tensor>) -> Result<Tensor> {
        match self.cfg.regime.training {
            Training::Independent => model.intervened_inputs(c),
            _ => {
                let zeros;
                let eps = match eps {
                    Some(e) => e,
                    None => {
                        zeros = Tensor::zeros(&[x.rows(), model.n_concepts()]);
                        &zeros
                    }
                };
                Ok(model.forward(x, eps)?.c_down)
            }
        }
    }

    fn evaluate(&self, model: &CbmModel, phase: Phase, train_loss: f64) -> Result<EpochLog> {
        let val = self.val;
        let out = model.predict(&val.x)?;
        let val_loss = match phase {
            Phase::Label => {
                let inputs = self.label_inputs(model, &val.x, &val.c, None)?;
                let mut g = Graph::new();
                let p = model.bind(&mut g, ParamSet::Label);
                let l = label_loss(&mut g, &p, inputs, &val.y)?;
                g.value(l).item()
            }
            Phase::Joint | Phase::Concepts => {
                let k = model.n_concepts();
                let mut g = Graph::new();
                let p = model.bind(&mut g, ParamSet::Label);
                let xv = g.constant(val.x.clone());
                let fv = model.forward_graph(&mut g, &p, xv, &Tensor::zeros(&[val.len(), k]))?;
                let marginal = if self.cfg.loss.variant == LossVariant::IbE {
                    let m = self.cfg.loss.mi_samples.min(val.len()).max(2);
                    let idx: Vec<usize> = (0..m).map(|i| i % val.len()).collect();
                    let xm = g.constant(val.x.select_rows(&idx));
                    let mv = model.forward_graph(&mut g, &p, xm, &Tensor::zeros(&[m, k]))?;
                    Some(Marginal { mu: mv.mu, sigma: mv.sigma })
                } else {
                    None
                };
                let targets = Targets {
                    c: &val.c,
                    y: (phase == Phase::Joint).then_some(val.y.as_slice()),
                };
                let l = loss(&mut g, &fv, targets, &self.cfg.loss, marginal)?;
                g.value(l).item()
            }
        };
        if !val_loss.is_finite() {
            return Err(Error::Training {
                epoch: self.epoch,
                msg: format!("non-finite validation loss {val_loss}"),
            });
        }
        Ok(EpochLog {
            epoch: self.epoch,
            phase: if phase == Phase::Label { 2 } else { 1 },
            train_loss,
            val_loss,
            concept_acc: concept_accuracy(&out.concept_probs(), &val.c, 0.5)?,
            class_acc: accuracy(&out.predicted_classes(), &val.y)?,
            entropy_c: entropy_c(&out.sigma)?,
            rho: 0.0,
        })
    }

    /// Records the state after `self.epoch` epochs when it falls on the stride.
    fn snapshot(&mut self, model: &CbmModel) -> Result<()> {
        let Some(stride) = self.cfg.infoplane_stride else {
            return Ok(());
        };
        if self.epoch % stride != 0 || self.epoch >= self.cfg.total_epochs() {
            return Ok(());
        }
        let point = infoplane_point(model, self.train, self.epoch, self.cfg.seed)?;
        self.log.infoplane.push(point);
        Ok(())
    }
}

fn label_loss(g: &mut Graph, p: &super::Bound, inputs: Tensor, y: &[usize]) -> Result<Var> {
    let c = g.constant(inputs);
    let (w, b) = p.label;
    let logits = g.dense(w, b, c)?;
    g.softmax_cross_entropy(logits, y)
}

/// Kernel MI estimates of `I(X;Z)`, `I(Z;C)`, `I(X;C)` and `I(C;Y)` on the
/// first rows of `ds`, using sampled concept logits.
pub fn infoplane_point(model: &CbmModel, ds: &Dataset, epoch: usize, seed: u64) -> Result<InfoPlanePoint> {
    let n = ds.len().min(INFOPLANE_ROWS);
    let rows: Vec<usize> = (0..n).collect();
    let x = ds.x.select_rows(&rows);
    let mut rng = stream(seed, "infoplane");
    let eps = standard_normal(&mut rng, &[n, model.n_concepts()]);
    let out = model.forward(&x, &eps)?;
    let c = match model.config.mode {
        ConceptMode::Soft => out.c_logits,
        ConceptMode::Hard => out.c_down,
    };
    let mut onehot = Tensor::zeros(&[n, ds.n_classes]);
    for (r, &y) in ds.y[..n].iter().enumerate() {
        onehot.set(r, y, 1.0);
    }
    Ok(InfoPlanePoint {
        epoch,
        i_xz: mi_plane(&x, &out.z, Bandwidth::Median)?,
        i_zc: mi_plane(&out.z, &c, Bandwidth::Median)?,
        i_xc: mi_plane(&x, &c, Bandwidth::Median)?,
        i_cy: mi_plane(&c, &onehot, Bandwidth::Median)?,
    })
}
