//! Flat `key = value` experiment configuration.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::datagen::SynthSpec;
use crate::diffcore::AdamConfig;
use crate::error::{Error, Result};
use crate::losses::{LossConfig, LossVariant};
use crate::model::{FitConfig, Regime};

/// Where training data comes from.
#[derive(Clone, Debug, PartialEq)]
pub enum DataSource {
    Synthetic(SynthSpec),
    Csv(PathBuf),
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub data: DataSource,
    /// Kept even when `data` is a CSV so the echo stays complete.
    pub synth: SynthSpec,
    pub split: [f64; 3],
    pub regime: Regime,
    pub loss: LossVariant,
    pub beta: f64,
    pub lambda_concept: f64,
    pub w_h: Option<f64>,
    pub epochs: usize,
    pub batch: usize,
    pub mi_samples: usize,
    pub lr: f64,
    pub wd: f64,
    pub clip_norm: Option<f64>,
    pub hidden: Vec<usize>,
    pub seeds: Vec<u64>,
    pub repeats: usize,
    pub infoplane_stride: Option<usize>,
    pub nis_grid: usize,
    pub mi_subsample: usize,
    pub dropout_seeds: usize,
    pub corrupt_k: Vec<usize>,
    pub reuse_model: bool,
    pub out: PathBuf,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let synth = SynthSpec::default();
        Self {
            data: DataSource::Synthetic(synth.clone()),
            synth,
            split: [0.6, 0.2, 0.2],
            regime: Regime::SOFT_JOINT,
            loss: LossVariant::Vanilla,
            beta: 0.5,
            lambda_concept: 1.0,
            w_h: None,
            epochs: 100,
            batch: 128,
            mi_samples: 64,
            lr: 0.003,
            wd: 0.001,
            clip_norm: None,
            hidden: vec![64, 64],
            seeds: vec![0, 1, 2, 3, 4],
            repeats: 5,
            infoplane_stride: None,
            nis_grid: 21,
            mi_subsample: crate::datagen::DEFAULT_MI_SUBSAMPLE,
            dropout_seeds: 5,
            corrupt_k: vec![0, 2, 4, 8],
            reuse_model: false,
            out: PathBuf::from("runs"),
        }
    }
}

/// Every accepted key, in echo order.
pub const KEYS: &[&str] = &[
    "data",
    "n",
    "d",
    "k",
    "groups",
    "classes",
    "p_flip",
    "leak",
    "obs_noise",
    "data_seed",
    "split",
    "regime",
    "loss",
    "beta",
    "lambda_concept",
    "w_h",
    "epochs",
    "batch",
    "mi_samples",
    "lr",
    "wd",
    "clip_norm",
    "hidden",
    "seeds",
    "repeats",
    "infoplane_stride",
    "nis_grid",
    "mi_subsample",
    "dropout_seeds",
    "corrupt_k",
    "reuse_model",
    "out",
];

fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::config(key, format!("`{v}` is not a valid {}", std::any::type_name::<T>())))
}

fn parse_list<T: std::str::FromStr>(key: &str, v: &str) -> Result<Vec<T>> {
    if v.trim().is_empty() {
        return Ok(Vec::new());
    }
    v.split(',').map(|s| parse_num(key, s.trim())).collect()
}

fn parse_optional<T: std::str::FromStr>(key: &str, v: &str, none: &str) -> Result<Option<T>> {
    if v == none {
        Ok(None)
    } else {
        parse_num(key, v).map(Some)
    }
}

fn join<T: ToString>(v: &[T]) -> String {
    v.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

impl TrainConfig {
    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = key.trim().replace('-', "_");
        let v = value.trim();
        let k = key.as_str();
        match k {
            "data" => {
                self.data = if v == "synthetic" {
                    DataSource::Synthetic(self.synth.clone())
                } else if v.is_empty() {
                    return Err(Error::config(k, "empty data source"));
                } else {
                    DataSource::Csv(PathBuf::from(v))
                }
            }
            "n" => self.synth.n = parse_num(k, v)?,
            "d" => self.synth.d = parse_num(k, v)?,
            "k" => self.synth.k = parse_num(k, v)?,
            "groups" => self.synth.g = parse_num(k, v)?,
            "classes" => self.synth.n_classes = parse_num(k, v)?,
            "p_flip" => self.synth.p_flip = parse_num(k, v)?,
            "leak" => self.synth.leak_strength = parse_num(k, v)?,
            "obs_noise" => self.synth.obs_noise = parse_num(k, v)?,
            "data_seed" => self.synth.seed = parse_num(k, v)?,
            "split" => {
                let parts: Vec<f64> = parse_list(k, v)?;
                self.split = parts
                    .try_into()
                    .map_err(|_| Error::config(k, "expected three fractions train,val,test"))?;
            }
            "regime" => self.regime = v.parse()?,
            "loss" => self.loss = v.parse()?,
            "beta" => self.beta = parse_num(k, v)?,
            "lambda_concept" => self.lambda_concept = parse_num(k, v)?,
            "w_h" => self.w_h = parse_optional(k, v, "auto")?,
            "epochs" => self.epochs = parse_num(k, v)?,
            "batch" => self.batch = parse_num(k, v)?,
            "mi_samples" => self.mi_samples = parse_num(k, v)?,
            "lr" => self.lr = parse_num(k, v)?,
            "wd" => self.wd = parse_num(k, v)?,
            "clip_norm" => self.clip_norm = parse_optional(k, v, "off")?,
            "hidden" => self.hidden = parse_list(k, v)?,
            "seeds" => self.seeds = parse_list(k, v)?,
            "repeats" => self.repeats = parse_num(k, v)?,
            "infoplane_stride" => self.infoplane_stride = parse_optional(k, v, "auto")?,
            "nis_grid" => self.nis_grid = parse_num(k, v)?,
            "mi_subsample" => self.mi_subsample = parse_num(k, v)?,
            "dropout_seeds" => self.dropout_seeds = parse_num(k, v)?,
            "corrupt_k" => self.corrupt_k = parse_list(k, v)?,
            "reuse_model" => {
                self.reuse_model = match v {
                    "true" => true,
                    "false" => false,
                    _ => return Err(Error::config(k, format!("`{v}` is not true or false"))),
                }
            }
            "out" => self.out = PathBuf::from(v),
            _ => return Err(Error::config(k, "unknown key")),
        }
        if let DataSource::Synthetic(spec) = &mut self.data {
            *spec = self.synth.clone();
        }
        Ok(())
    }

    /// Parses config text; later lines override earlier ones.
    pub fn parse_text(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::config(format!("line {}", i + 1), format!("`{line}` is not `key = value`")))?;
            cfg.set(key, value)?;
        }
        Ok(cfg)
    }

    /// Reads `path` (if given), then applies `overrides` in order.
    pub fn load(path: Option<&Path>, overrides: &[(String, String)]) -> Result<Self> {
        let mut cfg = match path {
            Some(p) => {
                let text = fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
                Self::parse_text(&text)?
            }
            None => Self::default(),
        };
        for (k, v) in overrides {
            cfg.set(k, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let range = |key: &str, ok: bool, msg: &str| if ok { Ok(()) } else { Err(Error::config(key, msg.to_string())) };
        if let DataSource::Synthetic(spec) = &self.data {
            spec.validate()?;
        }
        range(
            "split",
            self.split.iter().all(|f| (0.0..=1.0).contains(f))
                && self.split[0] > 0.0
                && self.split[1] > 0.0
                && self.split[2] > 0.0
                && (self.split.iter().sum::<f64>() - 1.0).abs() < 1e-9,
            "fractions must be positive and sum to 1",
        )?;
        range("beta", (0.0..1.0).contains(&self.beta), "must lie in [0, 1)")?;
        range("lambda_concept", self.lambda_concept > 0.0 && self.lambda_concept.is_finite(), "must be > 0")?;
        if let Some(w) = self.w_h {
            range("w_h", w >= 0.0 && w.is_finite(), "must be >= 0")?;
        }
        range("epochs", self.epochs >= 1, "must be >= 1")?;
        range("batch", self.batch >= 1, "must be >= 1")?;
        range("mi_samples", self.mi_samples >= 2, "must be >= 2")?;
        range("lr", self.lr > 0.0 && self.lr.is_finite(), "must be > 0")?;
        range("wd", self.wd >= 0.0 && self.wd.is_finite(), "must be >= 0")?;
        if let Some(c) = self.clip_norm {
            range("clip_norm", c > 0.0, "must be > 0")?;
        }
        range("hidden", !self.hidden.is_empty() && !self.hidden.contains(&0), "needs positive layer sizes")?;
        range("seeds", !self.seeds.is_empty(), "must list at least one seed")?;
        range("repeats", self.repeats >= 1, "must be >= 1")?;
        if let Some(s) = self.infoplane_stride {
            range("infoplane_stride", s >= 1, "must be >= 1")?;
        }
        range("nis_grid", self.nis_grid >= 2, "must be >= 2")?;
        range("mi_subsample", self.mi_subsample >= 1, "must be >= 1")?;
        range("dropout_seeds", self.dropout_seeds >= 1, "must be >= 1")?;
        if let DataSource::Synthetic(spec) = &self.data {
            range("corrupt_k", self.corrupt_k.iter().all(|&k| k <= spec.k), "values must not exceed k")?;
        }
        Ok(())
    }

    /// Text that [`parse_text`](Self::parse_text) maps back to `self`.
    pub fn echo(&self) -> String {
        let mut s = String::new();
        let data = match &self.data {
            DataSource::Synthetic(_) => "synthetic".to_string(),
            DataSource::Csv(p) => p.display().to_string(),
        };
        let opt = |v: Option<String>, none: &str| v.unwrap_or_else(|| none.to_string());
        let values: Vec<String> = vec![
            data,
            self.synth.n.to_string(),
            self.synth.d.to_string(),
            self.synth.k.to_string(),
            self.synth.g.to_string(),
            self.synth.n_classes.to_string(),
            self.synth.p_flip.to_string(),
            self.synth.leak_strength.to_string(),
            self.synth.obs_noise.to_string(),
            self.synth.seed.to_string(),
            join(&self.split),
            self.regime.to_string(),
            self.loss.to_string(),
            self.beta.to_string(),
            self.lambda_concept.to_string(),
            opt(self.w_h.map(|v| v.to_string()), "auto"),
            self.epochs.to_string(),
            self.batch.to_string(),
            self.mi_samples.to_string(),
            self.lr.to_string(),
            self.wd.to_string(),
            opt(self.clip_norm.map(|v| v.to_string()), "off"),
            join(&self.hidden),
            join(&self.seeds),
            self.repeats.to_string(),
            opt(self.infoplane_stride.map(|v| v.to_string()), "auto"),
            self.nis_grid.to_string(),
            self.mi_subsample.to_string(),
            self.dropout_seeds.to_string(),
            join(&self.corrupt_k),
            self.reuse_model.to_string(),
            self.out.display().to_string(),
        ];
        for (k, v) in KEYS.iter().zip(values) {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }

    pub fn loss_config(&self) -> LossConfig {
        LossConfig {
            variant: self.loss,
            beta: self.beta,
            lambda_concept: self.lambda_concept,
            w_h: self.w_h,
            mi_samples: self.mi_samples,
        }
    }

    /// Information-plane stride: configured, or `max(1, epochs / 50)`.
    pub fn stride(&self) -> usize {
        self.infoplane_stride.unwrap_or((self.epochs / 50).max(1))
    }

    pub fn fit_config(&self, seed: u64, infoplane: bool) -> FitConfig {
        FitConfig {
            regime: self.regime,
            loss: self.loss_config(),
            epochs: self.epochs,
            batch_size: self.batch,
            adam: AdamConfig {
                lr: self.lr,
                weight_decay: self.wd,
                ..AdamConfig::default()
            },
            clip_norm: self.clip_norm,
            seed,
            infoplane_stride: infoplane.then(|| self.stride()),
        }
    }
}

/// Turns `--key value` / `--key=value` arguments into pairs.
pub fn parse_overrides(args: &[String]) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    let mut it = args.iter();
    while let Some(arg) = it.next() {
        let key = arg
            .strip_prefix("--")
            .ok_or_else(|| Error::config(arg.clone(), "expected --key value"))?;
        if let Some((k, v)) = key.split_once('=') {
            out.push((k.to_string(), v.to_string()));
        } else {
            let v = it
                .next()
                .ok_or_else(|| Error::config(key.to_string(), "missing value"))?;
            out.push((key.to_string(), v.clone()));
        }
    }
    Ok(out)
}
