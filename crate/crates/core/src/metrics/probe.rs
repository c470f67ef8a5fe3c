//! Linear softmax probes trained with plain minibatch SGD.

use rand::seq::SliceRandom;

use crate::diffcore::Tensor;
use crate::error::{Error, Result};
use crate::rng::stream;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProbeConfig {
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            lr: 0.05,
            batch_size: 32,
            seed: 0,
        }
    }
}

/// `softmax(W·standardize(x) + b)`.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearProbe {
    mean: Vec<f64>,
    scale: Vec<f64>,
    /// `classes × features`
    w: Vec<f64>,
    b: Vec<f64>,
    n_classes: usize,
}

impl LinearProbe {
    pub fn fit(x: &Tensor, y: &[usize], n_classes: usize, cfg: &ProbeConfig) -> Result<Self> {
        let (n, d) = x.dims2();
        if n != y.len() {
            return Err(Error::Dimension(format!("{n} rows vs {} labels", y.len())));
        }
        if n == 0 || n_classes < 2 {
            return Err(Error::Validation("probe needs rows and at least two classes".into()));
        }
        if let Some(&bad) = y.iter().find(|&&v| v >= n_classes) {
            return Err(Error::Validation(format!("label {bad} >= {n_classes}")));
        }
        let mut mean = vec![0.0; d];
        let mut scale = vec![0.0; d];
        for r in 0..n {
            for (m, v) in mean.iter_mut().zip(x.row(r)) {
                *m += v / n as f64;
            }
        }
        for r in 0..n {
            for j in 0..d {
                scale[j] += (x.at(r, j) - mean[j]).powi(2) / n as f64;
            }
        }
        for s in &mut scale {
            *s = if *s > 1e-24 { 1.0 / s.sqrt() } else { 0.0 };
        }

        let mut probe = Self {
            mean,
            scale,
            w: vec![0.0; n_classes * d],
            b: vec![0.0; n_classes],
            n_classes,
        };
        let xs: Vec<Vec<f64>> = (0..n).map(|r| probe.standardize(x.row(r))).collect();
        let mut rng = stream(cfg.seed, "probe");
        let mut order: Vec<usize> = (0..n).collect();
        let mut gw = vec![0.0; n_classes * d];
        let mut gb = vec![0.0; n_classes];
        let mut p = vec![0.0; n_classes];
        for _ in 0..cfg.epochs {
            order.shuffle(&mut rng);
            for batch in order.chunks(cfg.batch_size.max(1)) {
                gw.iter_mut().for_each(|v| *v = 0.0);
                gb.iter_mut().for_each(|v| *v = 0.0);
                for &r in batch {
                    probe.softmax_into(&xs[r], &mut p);
                    p[y[r]] -= 1.0;
                    for k in 0..n_classes {
                        gb[k] += p[k];
                        let row = &mut gw[k * d..(k + 1) * d];
                        for (g, v) in row.iter_mut().zip(&xs[r]) {
                            *g += p[k] * v;
                        }
                    }
                }
                let step = cfg.lr / batch.len() as f64;
                for (w, g) in probe.w.iter_mut().zip(&gw) {
                    *w -= step * g;
                }
                for (b, g) in probe.b.iter_mut().zip(&gb) {
                    *b -= step * g;
                }
            }
        }
        Ok(probe)
    }

    fn standardize(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(self.mean.iter().zip(&self.scale))
            .map(|(v, (m, s))| (v - m) * s)
            .collect()
    }

    fn logits_into(&self, xs: &[f64], out: &mut [f64]) {
        let d = xs.len();
        for k in 0..self.n_classes {
            let w = &self.w[k * d..(k + 1) * d];
            out[k] = self.b[k] + w.iter().zip(xs).map(|(a, b)| a * b).sum::<f64>();
        }
    }

    fn softmax_into(&self, xs: &[f64], out: &mut [f64]) {
        self.logits_into(xs, out);
        let max = out.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for v in out.iter_mut() {
            *v = (*v - max).exp();
            total += *v;
        }
        for v in out.iter_mut() {
            *v /= total;
        }
    }

    pub fn logits(&self, x: &Tensor) -> Tensor {
        let n = x.rows();
        let mut out = vec![0.0; n * self.n_classes];
        for r in 0..n {
            let xs = self.standardize(x.row(r));
            self.logits_into(&xs, &mut out[r * self.n_classes..(r + 1) * self.n_classes]);
        }
        Tensor::matrix(n, self.n_classes, out).expect("sized")
    }

    pub fn predict(&self, x: &Tensor) -> Vec<usize> {
        crate::model::argmax_rows(&self.logits(x))
    }

    /// Log-odds of class 1 versus class 0.
    pub fn binary_scores(&self, x: &Tensor) -> Vec<f64> {
        let l = self.logits(x);
        (0..l.rows()).map(|r| l.at(r, 1) - l.at(r, 0)).collect()
    }
}
