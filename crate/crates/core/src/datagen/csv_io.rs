//! Concept CSV format: header `x_0..x_{D-1},c_0..c_{K-1},y`, one row per
//! sample, plus an optional `<name>.groups` sidecar listing one group of
//! concept column names per line.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::diffcore::Tensor;
use crate::error::{Error, Result};

use super::Dataset;

enum Column {
    Feature,
    Concept,
    Label,
}

pub fn groups_path(csv: &Path) -> PathBuf {
    csv.with_extension("groups")
}

fn ingest(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Ingestion {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

pub fn load_concept_csv(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_path(path)
        .map_err(|e| ingest(path, 0, e.to_string()))?;

    let header = reader
        .headers()
        .map_err(|e| ingest(path, 1, e.to_string()))?
        .clone();
    let mut layout = Vec::with_capacity(header.len());
    let mut concept_names = Vec::new();
    let mut n_labels = 0;
    for name in header.iter() {
        let name = name.trim();
        if name.starts_with("x_") {
            layout.push(Column::Feature);
        } else if name.starts_with("c_") {
            layout.push(Column::Concept);
            concept_names.push(name.to_string());
        } else if name == "y" {
            layout.push(Column::Label);
            n_labels += 1;
        } else {
            return Err(ingest(path, 1, format!("unexpected column `{name}`")));
        }
    }
    if n_labels != 1 {
        return Err(ingest(path, 1, "header needs exactly one `y` column"));
    }
    if concept_names.is_empty() {
        return Err(ingest(path, 1, "header has no c_* columns"));
    }

    let (mut x, mut c, mut y) = (Vec::new(), Vec::new(), Vec::new());
    let mut rows = 0;
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            ingest(path, line, e.to_string())
        })?;
        let line = record.position().map_or(rows + 2, |p| p.line() as usize);
        if record.len() != layout.len() {
            return Err(ingest(
                path,
                line,
                format!("expected {} fields, found {}", layout.len(), record.len()),
            ));
        }
        for ((field, col), name) in record.iter().zip(&layout).zip(header.iter()) {
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|_| ingest(path, line, format!("`{field}` in column {name} is not a number")))?;
            match col {
                Column::Feature => x.push(v),
                Column::Concept => {
                    if v != 0.0 && v != 1.0 {
                        return Err(ingest(path, line, format!("concept {name} = {v} is not 0 or 1")));
                    }
                    c.push(v);
                }
                Column::Label => {
                    if v < 0.0 || v.fract() != 0.0 {
                        return Err(ingest(path, line, format!("label {v} is not a class index")));
                    }
                    y.push(v as usize);
                }
            }
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(ingest(path, 2, "no data rows"));
    }

    let k = concept_names.len();
    let d = x.len() / rows;
    let groups = read_groups(&groups_path(path), &concept_names)?;
    let n_classes = y.iter().copied().max().unwrap_or(0) + 1;
    let ds = Dataset {
        x: Tensor::matrix(rows, d, x)?,
        c: Tensor::matrix(rows, k, c)?,
        y,
        n_classes: n_classes.max(2),
        groups,
        concept_names,
        split: Default::default(),
    };
    ds.validate().map_err(|e| ingest(path, 0, e.to_string()))?;
    Ok(ds)
}

fn read_groups(path: &Path, names: &[String]) -> Result<Vec<Vec<usize>>> {
    if !path.exists() {
        return Ok((0..names.len()).map(|j| vec![j]).collect());
    }
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut groups = Vec::new();
    let mut seen = vec![false; names.len()];
    let mut last_line = 0;
    for (i, line) in text.lines().enumerate() {
        last_line = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let mut group = Vec::new();
        for member in line.split(',').map(str::trim) {
            let j = names
                .iter()
                .position(|n| n == member)
                .ok_or_else(|| ingest(path, i + 1, format!("unknown concept `{member}`")))?;
            if seen[j] {
                return Err(ingest(path, i + 1, format!("concept `{member}` listed twice")));
            }
            seen[j] = true;
            group.push(j);
        }
        groups.push(group);
    }
    if let Some(j) = seen.iter().position(|s| !s) {
        return Err(ingest(path, last_line, format!("concept `{}` belongs to no group", names[j])));
    }
    Ok(groups)
}

/// Writes `ds` as CSV plus its groups sidecar.
pub fn write_concept_csv(ds: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    let header: Vec<String> = (0..ds.n_features())
        .map(|i| format!("x_{i}"))
        .chain(ds.concept_names.iter().cloned())
        .chain(std::iter::once("y".to_string()))
        .collect();
    out.push_str(&header.join(","));
    out.push('\n');
    for r in 0..ds.len() {
        let mut fields: Vec<String> = ds.x.row(r).iter().map(|v| v.to_string()).collect();
        fields.extend(ds.c.row(r).iter().map(|&v| (v as u8).to_string()));
        fields.push(ds.y[r].to_string());
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    write_file(path, out.as_bytes())?;

    let mut groups = String::new();
    for g in &ds.groups {
        let names: Vec<&str> = g.iter().map(|&j| ds.concept_names[j].as_str()).collect();
        groups.push_str(&names.join(","));
        groups.push('\n');
    }
    write_file(&groups_path(path), groups.as_bytes())
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(bytes).map_err(|e| Error::io(path, e))
}
