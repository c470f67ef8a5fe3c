use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

/// Mean and sample standard deviation (0 for a single value).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub name: String,
    pub value: f64,
    /// Absent for single-configuration metrics.
    pub std: Option<f64>,
    pub n_seeds: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub rows: Vec<MetricRow>,
}

impl MetricsReport {
    pub fn push(&mut self, name: impl Into<String>, value: f64, std: Option<f64>, n_seeds: usize) {
        self.rows.push(MetricRow {
            name: name.into(),
            value,
            std,
            n_seeds,
        });
    }

    /// Aggregates one value per seed.
    pub fn push_seeds(&mut self, name: impl Into<String>, values: &[f64]) {
        let (m, s) = mean_std(values);
        self.push(name, m, Some(s), values.len());
    }

    pub fn get(&self, name: &str) -> Option<&MetricRow> {
        self.rows.iter().find(|r| r.name == name)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("name,value,std,n_seeds\n");
        for r in &self.rows {
            let std = r.std.map(|s| s.to_string()).unwrap_or_default();
            let _ = writeln!(out, "{},{},{},{}", r.name, r.value, std, r.n_seeds);
        }
        out
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("plain data serializes");
        s.push('\n');
        s
    }
}
