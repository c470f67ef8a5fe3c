use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datagen::Dataset;
use crate::error::{Error, Result};
use crate::model::{intervene, CbmModel, ConceptMode};
use crate::rng::stream;

use super::accuracy;
use super::report::mean_std;

/// Class accuracy after intervening on `g = 0..=G` concept groups.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InterventionCurve {
    pub values: Vec<f64>,
    pub stds: Vec<f64>,
    /// `per_repeat[r][g]`
    pub per_repeat: Vec<Vec<f64>>,
    pub seed: u64,
}

impl InterventionCurve {
    pub fn from_repeats(per_repeat: Vec<Vec<f64>>, seed: u64) -> Result<Self> {
        let len = per_repeat.first().map_or(0, Vec::len);
        if len == 0 || per_repeat.iter().any(|r| r.len() != len) {
            return Err(Error::Validation("repeats must be non-empty and equally long".into()));
        }
        let (values, stds) = (0..len)
            .map(|g| mean_std(&per_repeat.iter().map(|r| r[g]).collect::<Vec<_>>()))
            .unzip();
        Ok(Self {
            values,
            stds,
            per_repeat,
            seed,
        })
    }

    pub fn n_groups(&self) -> usize {
        self.values.len() - 1
    }

    pub fn auc(&self) -> Result<f64> {
        auc_tti(&self.values)
    }

    pub fn nauc(&self) -> Result<f64> {
        nauc_tti(&self.values)
    }
}

/// Each repeat draws one random order of the groups and intervenes on its
/// growing prefixes.
pub fn intervention_curve(model: &CbmModel, ds: &Dataset, repeats: usize, seed: u64) -> Result<InterventionCurve> {
    if repeats == 0 {
        return Err(Error::config("repeats", "must be >= 1"));
    }
    if model.config.mode == ConceptMode::Soft && model.intervention_percentiles.is_none() {
        return Err(Error::Contract("model has no intervention percentiles; calibrate first".into()));
    }
    let out = model.predict(&ds.x)?;
    let g = ds.n_groups();
    let per_repeat = (0..repeats)
        .into_par_iter()
        .map(|r| {
            let mut order: Vec<usize> = (0..g).collect();
            order.shuffle(&mut stream(seed, &format!("intervention/{r}")));
            (0..=g)
                .map(|m| {
                    let iv = intervene(&out, &ds.c, &ds.groups, &order[..m], model)?;
                    accuracy(&iv.predicted_classes(), &ds.y)
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    InterventionCurve::from_repeats(per_repeat, seed)
}

fn check_curve(values: &[f64]) -> Result<usize> {
    if values.len() < 2 {
        return Err(Error::Validation("curve needs at least one intervention step".into()));
    }
    Ok(values.len() - 1)
}

/// `(1/n)·Σ_{i=1..n} I(i)`.
pub fn auc_tti(values: &[f64]) -> Result<f64> {
    let n = check_curve(values)?;
    Ok(values[1..].iter().sum::<f64>() / n as f64)
}

/// `(1/n)·Σ_{i=1..n} (I(i) − I(i−1))`, which telescopes to `(I(n) − I(0))/n`.
pub fn nauc_tti(values: &[f64]) -> Result<f64> {
    let n = check_curve(values)?;
    Ok((values[n] - values[0]) / n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{make_synthetic, SynthSpec};
    use crate::model::ModelConfig;

    #[test]
    fn tti_arithmetic() {
        assert!((auc_tti(&[0.5, 0.7, 0.9]).unwrap() - 0.8).abs() < 1e-15);
        assert!((nauc_tti(&[0.5, 0.7, 0.9]).unwrap() - 0.2).abs() < 1e-15);
        assert_eq!(auc_tti(&[0.3; 4]).unwrap(), 0.3);
        assert_eq!(nauc_tti(&[0.3; 4]).unwrap(), 0.0);
        assert!(auc_tti(&[0.5]).is_err());
    }

    fn setup(mode: ConceptMode) -> (CbmModel, Dataset) {
        let ds = make_synthetic(&SynthSpec {
            n: 300,
            d: 8,
            k: 6,
            g: 3,
            n_classes: 3,
            ..SynthSpec::default()
        })
        .unwrap();
        let cfg = ModelConfig::for_dataset(&ds, vec![8], mode);
        (CbmModel::init(cfg, 1).unwrap(), ds)
    }

    #[test]
    fn curve_endpoints_and_reproducibility() {
        let (mut m, ds) = setup(ConceptMode::Hard);
        m.calibrate_intervention_percentiles(&ds).unwrap();
        let curve = intervention_curve(&m, &ds, 5, 3).unwrap();
        assert_eq!(curve.values.len(), 4);
        let plain = accuracy(&m.predict(&ds.x).unwrap().predicted_classes(), &ds.y).unwrap();
        assert_eq!(curve.values[0], plain);
        assert_eq!(curve.stds[0], 0.0);
        let full = accuracy(&crate::model::argmax_rows(&m.label_logits(&ds.c)), &ds.y).unwrap();
        assert_eq!(curve.values[3], full);
        assert_eq!(curve, intervention_curve(&m, &ds, 5, 3).unwrap());
        let recomputed: f64 = curve.per_repeat.iter().map(|r| r[1..].iter().sum::<f64>() / 3.0).sum::<f64>() / 5.0;
        assert!((curve.auc().unwrap() - recomputed).abs() < 1e-12);
    }

    #[test]
    fn uncalibrated_soft_model_is_a_contract_error() {
        let (m, ds) = setup(ConceptMode::Soft);
        assert!(matches!(intervention_curve(&m, &ds, 2, 0), Err(Error::Contract(_))));
    }
}
