//! Experiment commands. Each one reads a [`TrainConfig`], works per seed,
//! and writes its CSV/SVG outputs from a single collector after the seeds
//! join.

mod config;
pub mod svg;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::datagen::{
    corrupt_concepts, load_concept_csv, make_synthetic, random_dropout_groups, selective_dropout_groups, split,
    write_concept_csv, Dataset,
};
use crate::error::{Error, Result};
use crate::info::InfoPlanePoint;
use crate::metrics::{
    accuracy, auc_roc, auc_tti, concept_accuracy, default_beta_grid, intervention_curve, mean_std, nauc_tti, nis,
    ois, InterventionCurve, MetricsReport, NisConfig,
};
use crate::model::{fit, load_checkpoint, save_checkpoint, CbmModel, Checkpoint, EpochLog, ModelConfig};
use crate::rng::derive_seed;

pub use config::{parse_overrides, DataSource, TrainConfig, KEYS};

/// Environment variable that replaces the configured output directory.
pub const OUT_ENV: &str = "CIBM_OUT";

pub fn out_dir(cfg: &TrainConfig) -> PathBuf {
    match std::env::var_os(OUT_ENV) {
        Some(v) if !v.is_empty() => PathBuf::from(v),
        _ => cfg.out.clone(),
    }
}

fn write(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn seed_dir(out: &Path, seed: u64) -> PathBuf {
    out.join(format!("seed_{seed}"))
}

pub fn checkpoint_path(out: &Path, seed: u64) -> PathBuf {
    seed_dir(out, seed).join("model.json")
}

pub fn load_data(cfg: &TrainConfig) -> Result<Dataset> {
    match &cfg.data {
        DataSource::Synthetic(spec) => make_synthetic(spec),
        DataSource::Csv(path) => load_concept_csv(path),
    }
}

/// Stratified train/val/test split keyed on the data seed.
pub fn split_data(cfg: &TrainConfig, ds: &Dataset) -> Result<(Dataset, Dataset, Dataset)> {
    split(ds, cfg.split, cfg.synth.seed)
}

pub fn train_model(cfg: &TrainConfig, train: &Dataset, val: &Dataset, seed: u64, infoplane: bool) -> Result<(CbmModel, Vec<EpochLog>, Vec<InfoPlanePoint>)> {
    let mcfg = ModelConfig::for_dataset(train, cfg.hidden.clone(), cfg.regime.mode);
    let model = CbmModel::init(mcfg, seed)?;
    let (model, log) = fit(model, train, val, &cfg.fit_config(seed, infoplane))?;
    Ok((model, log.epochs, log.infoplane))
}

/// Test-set metrics of one model.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EvalMetrics {
    pub class_acc: f64,
    pub concept_acc: f64,
    pub concept_auc: f64,
}

pub fn evaluate(model: &CbmModel, ds: &Dataset) -> Result<EvalMetrics> {
    let out = model.predict(&ds.x)?;
    let mut aucs = Vec::new();
    for j in 0..ds.n_concepts() {
        let labels: Vec<bool> = ds.c.column(j).iter().map(|&v| v == 1.0).collect();
        match auc_roc(&out.mu.column(j), &labels) {
            Ok(a) => aucs.push(a),
            Err(Error::UndefinedMetric(_)) => {}
            Err(e) => return Err(e),
        }
    }
    Ok(EvalMetrics {
        class_acc: accuracy(&out.predicted_classes(), &ds.y)?,
        concept_acc: concept_accuracy(&out.concept_probs(), &ds.c, 0.5)?,
        concept_auc: if aucs.is_empty() {
            0.5
        } else {
            aucs.iter().sum::<f64>() / aucs.len() as f64
        },
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct SeedRecord {
    pub seed: u64,
    pub epochs: Vec<EpochLog>,
    pub test: EvalMetrics,
    pub infoplane: Vec<InfoPlanePoint>,
}

#[derive(Clone, Debug, Serialize)]
pub struct RunRecord {
    pub config_echo: String,
    pub runs: Vec<SeedRecord>,
    pub summary: MetricsReport,
    pub wall_clock_secs: f64,
}

fn epoch_csv(rows: &[EpochLog], seed: Option<u64>) -> String {
    let mut s = String::new();
    if seed.is_some() {
        s.push_str("seed,");
    }
    s.push_str("epoch,phase,train_loss,val_loss,concept_acc,class_acc,entropy_c,rho\n");
    for r in rows {
        if let Some(seed) = seed {
            let _ = write!(s, "{seed},");
        }
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{}",
            r.epoch, r.phase, r.train_loss, r.val_loss, r.concept_acc, r.class_acc, r.entropy_c, r.rho
        );
    }
    s
}

/// Trains one model per seed, then writes per-seed logs and checkpoints and
/// an aggregated summary.
pub fn cmd_train(cfg: &TrainConfig) -> Result<RunRecord> {
    let start = Instant::now();
    let out = out_dir(cfg);
    let ds = load_data(cfg)?;
    let (train, val, test) = split_data(cfg, &ds)?;
    let echo = cfg.echo();
    let runs = cfg
        .seeds
        .par_iter()
        .map(|&seed| {
            let (model, epochs, infoplane) = train_model(cfg, &train, &val, seed, false)?;
            let test_metrics = evaluate(&model, &test)?;
            Ok((model, SeedRecord { seed, epochs, test: test_metrics, infoplane }))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut all = String::new();
    for (i, (model, rec)) in runs.iter().enumerate() {
        let dir = seed_dir(&out, rec.seed);
        write(&dir.join("train_log.csv"), &epoch_csv(&rec.epochs, None))?;
        let ckpt = Checkpoint::new(model.clone(), train.groups.clone(), echo.clone());
        save_checkpoint(&ckpt, checkpoint_path(&out, rec.seed))?;
        let block = epoch_csv(&rec.epochs, Some(rec.seed));
        all.push_str(if i == 0 { &block } else { block.split_once('\n').map_or("", |b| b.1) });
    }
    write(&out.join("train_log.csv"), &all)?;

    let mut summary = MetricsReport::default();
    let col = |f: &dyn Fn(&SeedRecord) -> f64| runs.iter().map(|(_, r)| f(r)).collect::<Vec<f64>>();
    summary.push_seeds("class_acc", &col(&|r| r.test.class_acc));
    summary.push_seeds("concept_acc", &col(&|r| r.test.concept_acc));
    summary.push_seeds("concept_auc", &col(&|r| r.test.concept_auc));
    summary.push_seeds("final_train_loss", &col(&|r| r.epochs.last().map_or(f64::NAN, |e| e.train_loss)));
    summary.push_seeds("final_val_loss", &col(&|r| r.epochs.last().map_or(f64::NAN, |e| e.val_loss)));
    write(&out.join("summary.csv"), &summary.to_csv())?;
    write(&out.join("config.txt"), &echo)?;

    let record = RunRecord {
        config_echo: echo,
        runs: runs.into_iter().map(|(_, r)| r).collect(),
        summary,
        wall_clock_secs: start.elapsed().as_secs_f64(),
    };
    let mut json = serde_json::to_string_pretty(&record)?;
    json.push('\n');
    write(&out.join("run_record.json"), &json)?;
    Ok(record)
}

/// Loads the checkpoint of every configured seed.
pub fn load_models(cfg: &TrainConfig) -> Result<Vec<(u64, Checkpoint)>> {
    let out = out_dir(cfg);
    cfg.seeds
        .iter()
        .map(|&s| load_checkpoint(checkpoint_path(&out, s)).map(|c| (s, c)))
        .collect()
}

/// Complete-set OIS and NIS of `model`'s concept means on `ds`.
pub fn leakage_scores(model: &CbmModel, ds: &Dataset, cfg: &TrainConfig, seed: u64) -> Result<(f64, f64)> {
    let reps = model.predict(&ds.x)?.mu;
    let o = ois(&reps, &ds.c)?;
    let mut nis_cfg = NisConfig::default();
    nis_cfg.probe.seed = seed;
    let n = nis(&reps, &ds.c, &default_beta_grid(cfg.nis_grid), &nis_cfg)?;
    Ok((o, n))
}

/// Test metrics plus complete-set OIS/NIS for every seed's checkpoint.
pub fn cmd_eval(cfg: &TrainConfig) -> Result<MetricsReport> {
    let out = out_dir(cfg);
    let ds = load_data(cfg)?;
    let (_, _, test) = split_data(cfg, &ds)?;
    let models = load_models(cfg)?;
    let rows = models
        .par_iter()
        .map(|(seed, ck)| {
            let m = evaluate(&ck.model, &test)?;
            let (o, n) = leakage_scores(&ck.model, &test, cfg, *seed)?;
            Ok([m.class_acc, m.concept_acc, m.concept_auc, o, n])
        })
        .collect::<Result<Vec<_>>>()?;
    let mut report = MetricsReport::default();
    for (i, name) in ["class_acc", "concept_acc", "concept_auc", "ois", "nis"].iter().enumerate() {
        report.push_seeds(*name, &rows.iter().map(|r| r[i]).collect::<Vec<_>>());
    }
    write(&out.join("metrics.csv"), &report.to_csv())?;
    write(&out.join("metrics.json"), &report.to_json())?;
    Ok(report)
}

/// Intervention curves pooled over seeds and repeats.
#[derive(Clone, Debug, PartialEq)]
pub struct PooledCurve {
    pub curve: InterventionCurve,
    pub per_seed_auc: Vec<f64>,
    pub per_seed_nauc: Vec<f64>,
}

impl PooledCurve {
    pub fn new(curves: &[InterventionCurve]) -> Result<Self> {
        let per_repeat: Vec<Vec<f64>> = curves.iter().flat_map(|c| c.per_repeat.clone()).collect();
        let seed = curves.first().map_or(0, |c| c.seed);
        Ok(Self {
            curve: InterventionCurve::from_repeats(per_repeat, seed)?,
            per_seed_auc: curves.iter().map(InterventionCurve::auc).collect::<Result<_>>()?,
            per_seed_nauc: curves.iter().map(InterventionCurve::nauc).collect::<Result<_>>()?,
        })
    }

    pub fn auc(&self) -> Result<f64> {
        auc_tti(&self.curve.values)
    }

    pub fn nauc(&self) -> Result<f64> {
        nauc_tti(&self.curve.values)
    }
}

pub fn curve_csv(curve: &InterventionCurve) -> String {
    let mut s = String::from("t,x,x_std\n");
    for (t, (x, sd)) in curve.values.iter().zip(&curve.stds).enumerate() {
        let _ = writeln!(s, "{t},{x},{sd}");
    }
    s
}

fn require_groups(ck: &Checkpoint) -> Result<()> {
    if ck.groups.is_empty() {
        return Err(Error::Contract("checkpoint carries no concept groups".into()));
    }
    Ok(())
}

/// Writes `interventions.csv` and `interventions.svg` for the test split.
pub fn cmd_intervene(cfg: &TrainConfig) -> Result<PooledCurve> {
    let out = out_dir(cfg);
    let ds = load_data(cfg)?;
    let (_, _, test) = split_data(cfg, &ds)?;
    let models = load_models(cfg)?;
    let curves = models
        .par_iter()
        .map(|(seed, ck)| {
            require_groups(ck)?;
            let test = Dataset {
                groups: ck.groups.clone(),
                ..test.clone()
            };
            test.validate()?;
            intervention_curve(&ck.model, &test, cfg.repeats, *seed)
        })
        .collect::<Result<Vec<_>>>()?;
    let pooled = PooledCurve::new(&curves)?;
    let c = &pooled.curve;
    write(&out.join("interventions.csv"), &curve_csv(c))?;
    let t: Vec<f64> = (0..c.values.len()).map(|v| v as f64).collect();
    write(
        &out.join("interventions.svg"),
        &svg::line_with_band("Intervention accuracy", "intervened groups", "class accuracy", &t, &c.values, &c.stds),
    )?;
    Ok(pooled)
}

/// One OIS/NIS cell of the leakage table; `std` is `None` for the
/// single-configuration selective setting.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LeakageCell {
    pub value: f64,
    pub std: Option<f64>,
    pub n: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LeakageTable {
    pub ois: [LeakageCell; 3],
    pub nis: [LeakageCell; 3],
}

pub const LEAKAGE_SETTINGS: [&str; 3] = ["complete", "selective", "random"];

impl LeakageTable {
    pub fn report(&self) -> MetricsReport {
        let mut r = MetricsReport::default();
        for (metric, cells) in [("ois", &self.ois), ("nis", &self.nis)] {
            for (setting, cell) in LEAKAGE_SETTINGS.iter().zip(cells.iter()) {
                r.push(format!("{metric}_{setting}"), cell.value, cell.std, cell.n);
            }
        }
        r
    }

    /// Plain-text table with scores ×100.
    pub fn render(&self) -> String {
        let cell = |c: &LeakageCell| match c.std {
            Some(s) => format!("{:.2} ± {:.2}", 100.0 * c.value, 100.0 * s),
            None => format!("{:.2}", 100.0 * c.value),
        };
        let mut s = String::new();
        let _ = writeln!(s, "{:<6}{:>18}{:>18}{:>18}", "", "Complete CS", "Selective Drop-out", "Random Drop-out");
        for (name, cells) in [("OIS", &self.ois), ("NIS", &self.nis)] {
            let _ = writeln!(s, "{:<6}{:>18}{:>18}{:>18}", name, cell(&cells[0]), cell(&cells[1]), cell(&cells[2]));
        }
        s
    }
}

fn cell(values: &[f64]) -> LeakageCell {
    let (m, s) = mean_std(values);
    LeakageCell {
        value: m,
        std: Some(s),
        n: values.len(),
    }
}

fn reduce(splits: &(Dataset, Dataset, Dataset), removed: &[usize]) -> Result<(Dataset, Dataset, Dataset)> {
    let keep: Vec<usize> = (0..splits.0.n_groups()).filter(|g| !removed.contains(g)).collect();
    Ok((
        splits.0.keep_groups(&keep)?,
        splits.1.keep_groups(&keep)?,
        splits.2.keep_groups(&keep)?,
    ))
}

/// OIS/NIS of the checkpointed models on the complete concept set, plus
/// models retrained after selective and random group dropout.
pub fn cmd_leakage(cfg: &TrainConfig) -> Result<LeakageTable> {
    let out = out_dir(cfg);
    let ds = load_data(cfg)?;
    let splits = split_data(cfg, &ds)?;
    let models = load_models(cfg)?;
    let complete = models
        .par_iter()
        .map(|(seed, ck)| leakage_scores(&ck.model, &splits.2, cfg, *seed))
        .collect::<Result<Vec<_>>>()?;

    let first = cfg.seeds[0];
    let removed = selective_dropout_groups(&splits.0, cfg.mi_subsample)?;
    let reduced = reduce(&splits, &removed)?;
    let (model, _, _) = train_model(cfg, &reduced.0, &reduced.1, first, false)?;
    let selective = leakage_scores(&model, &reduced.2, cfg, first)?;

    let random = (0..cfg.dropout_seeds as u64)
        .into_par_iter()
        .map(|r| {
            let removed = random_dropout_groups(splits.0.n_groups(), derive_seed(first, &format!("dropout/{r}")))?;
            let reduced = reduce(&splits, &removed)?;
            let (model, _, _) = train_model(cfg, &reduced.0, &reduced.1, first, false)?;
            leakage_scores(&model, &reduced.2, cfg, first)
        })
        .collect::<Result<Vec<_>>>()?;

    let single = |v: f64| LeakageCell { value: v, std: None, n: 1 };
    let table = LeakageTable {
        ois: [
            cell(&complete.iter().map(|p| p.0).collect::<Vec<_>>()),
            single(selective.0),
            cell(&random.iter().map(|p| p.0).collect::<Vec<_>>()),
        ],
        nis: [
            cell(&complete.iter().map(|p| p.1).collect::<Vec<_>>()),
            single(selective.1),
            cell(&random.iter().map(|p| p.1).collect::<Vec<_>>()),
        ],
    };
    write(&out.join("leakage.csv"), &table.report().to_csv())?;
    write(&out.join("leakage.json"), &table.report().to_json())?;
    Ok(table)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CorruptRow {
    pub k: usize,
    pub auc_tti: f64,
    pub auc_std: f64,
    pub nauc_tti: f64,
    pub nauc_std: f64,
}

impl CorruptRow {
    /// Negative NAUC: interventions hurt, a sign of leakage.
    pub fn leakage_flag(&self) -> bool {
        self.nauc_tti < 0.0
    }
}

/// Corrupts `k` concepts for each `k` in the config, retrains (unless
/// `reuse_model`), and records intervention AUC/NAUC on the test split.
pub fn cmd_corrupt_sweep(cfg: &TrainConfig) -> Result<Vec<CorruptRow>> {
    let out = out_dir(cfg);
    let ds = load_data(cfg)?;
    if let Some(&k) = cfg.corrupt_k.iter().find(|&&k| k > ds.n_concepts()) {
        return Err(Error::config("corrupt_k", format!("{k} exceeds {} concepts", ds.n_concepts())));
    }
    let clean = split_data(cfg, &ds)?;
    let reused: Option<Vec<CbmModel>> = if cfg.reuse_model {
        Some(
            cfg.seeds
                .par_iter()
                .map(|&s| train_model(cfg, &clean.0, &clean.1, s, false).map(|r| r.0))
                .collect::<Result<_>>()?,
        )
    } else {
        None
    };
    let mut rows = Vec::new();
    for &k in &cfg.corrupt_k {
        let curves = cfg
            .seeds
            .par_iter()
            .enumerate()
            .map(|(i, &seed)| {
                let corrupted = corrupt_concepts(&ds, k, derive_seed(seed, &format!("corrupt/{k}")))?;
                let (train, val, test) = split_data(cfg, &corrupted)?;
                let model = match &reused {
                    Some(models) => {
                        let mut m = models[i].clone();
                        m.calibrate_intervention_percentiles(&train)?;
                        m
                    }
                    None => train_model(cfg, &train, &val, seed, false)?.0,
                };
                intervention_curve(&model, &test, cfg.repeats, seed)
            })
            .collect::<Result<Vec<_>>>()?;
        let pooled = PooledCurve::new(&curves)?;
        let (_, auc_std) = mean_std(&pooled.per_seed_auc);
        let (_, nauc_std) = mean_std(&pooled.per_seed_nauc);
        rows.push(CorruptRow {
            k,
            auc_tti: pooled.auc()?,
            auc_std,
            nauc_tti: pooled.nauc()?,
            nauc_std,
        });
    }
    let mut s = String::from("k,auc_tti,auc_tti_std,nauc_tti,nauc_tti_std,negative_nauc\n");
    for r in &rows {
        let _ = writeln!(s, "{},{},{},{},{},{}", r.k, r.auc_tti, r.auc_std, r.nauc_tti, r.nauc_std, r.leakage_flag());
    }
    write(&out.join("corrupt_sweep.csv"), &s)?;
    Ok(rows)
}

fn plane_csv(points: &[InfoPlanePoint], f: impl Fn(&InfoPlanePoint) -> (f64, f64)) -> String {
    let mut s = String::from("t,x,y\n");
    for p in points {
        let (x, y) = f(p);
        let _ = writeln!(s, "{},{x},{y}", p.epoch);
    }
    s
}

/// Trains with information-plane snapshots and writes per-seed scatter data.
pub fn cmd_infoplane(cfg: &TrainConfig) -> Result<Vec<(u64, Vec<InfoPlanePoint>)>> {
    let out = out_dir(cfg);
    let ds = load_data(cfg)?;
    let (train, val, _) = split_data(cfg, &ds)?;
    let runs = cfg
        .seeds
        .par_iter()
        .map(|&seed| train_model(cfg, &train, &val, seed, true).map(|r| (seed, r.2)))
        .collect::<Result<Vec<_>>>()?;
    let mut all = String::from("seed,epoch,i_xc,i_cy,i_xz,i_zc,suspicious\n");
    for (seed, points) in &runs {
        for p in points {
            let _ = writeln!(all, "{seed},{},{},{},{},{},{}", p.epoch, p.i_xc, p.i_cy, p.i_xz, p.i_zc, p.suspicious());
        }
        let dir = seed_dir(&out, *seed);
        let t: Vec<f64> = points.iter().map(|p| p.epoch as f64).collect();
        for (name, title, xl, yl, f) in [
            ("infoplane_xc_cy", "I(X;C) vs I(C;Y)", "I(X;C) [nats]", "I(C;Y) [nats]", (|p: &InfoPlanePoint| (p.i_xc, p.i_cy)) as fn(&InfoPlanePoint) -> (f64, f64)),
            ("infoplane_xz_zc", "I(X;Z) vs I(Z;C)", "I(X;Z) [nats]", "I(Z;C) [nats]", |p: &InfoPlanePoint| (p.i_xz, p.i_zc)),
        ] {
            write(&dir.join(format!("{name}.csv")), &plane_csv(points, f))?;
            let (xs, ys): (Vec<f64>, Vec<f64>) = points.iter().map(f).unzip();
            write(&dir.join(format!("{name}.svg")), &svg::progress_scatter(title, xl, yl, &t, &xs, &ys))?;
        }
    }
    write(&out.join("infoplane.csv"), &all)?;
    Ok(runs)
}

/// Writes the configured dataset to `<out>/data.csv` plus its sidecar.
pub fn cmd_gendata(cfg: &TrainConfig) -> Result<PathBuf> {
    let out = out_dir(cfg);
    let ds = load_data(cfg)?;
    fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
    let path = out.join("data.csv");
    write_concept_csv(&ds, &path)?;
    Ok(path)
}
