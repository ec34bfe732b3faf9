use std::fmt::Write as _;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use sfsod::{Dataset, Matrix};

/// A dataset read from CSV together with its column names.
pub struct Table {
    pub response: String,
    /// Predictor names in design order, without the intercept.
    pub features: Vec<String>,
    pub data: Dataset,
}

impl Table {
    /// Name of design column `j`.
    pub fn column_name(&self, j: usize) -> &str {
        if self.data.intercept() {
            if j == 0 {
                "(intercept)"
            } else {
                &self.features[j - 1]
            }
        } else {
            &self.features[j]
        }
    }
}

/// Reads a headed, comma-separated file. Every column other than `response`
/// is a predictor; an intercept column is added unless `intercept` is false.
pub fn read_csv(path: &Path, response: &str, intercept: bool) -> Result<Table> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .with_context(|| format!("cannot open {}", path.display()))?;
    let header: Vec<String> = rdr
        .headers()
        .with_context(|| format!("{}: cannot read header", path.display()))?
        .iter()
        .map(str::to_string)
        .collect();
    let resp_col = header
        .iter()
        .position(|h| h == response)
        .ok_or_else(|| anyhow!("{}: no column named `{response}` in header", path.display()))?;
    let features: Vec<String> = header
        .iter()
        .enumerate()
        .filter(|(k, _)| *k != resp_col)
        .map(|(_, h)| h.clone())
        .collect();
    if features.is_empty() && !intercept {
        bail!("{}: no predictor columns", path.display());
    }

    let mut y = Vec::new();
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.with_context(|| format!("{}: malformed record", path.display()))?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != header.len() {
            bail!(
                "{} line {line}: expected {} fields, found {}",
                path.display(),
                header.len(),
                rec.len()
            );
        }
        let mut row = Vec::with_capacity(features.len() + 1);
        if intercept {
            row.push(1.0);
        }
        for (k, field) in rec.iter().enumerate() {
            if field.is_empty() {
                bail!("{} line {line}: missing value in column `{}`", path.display(), header[k]);
            }
            let v: f64 = field.parse().map_err(|_| {
                anyhow!("{} line {line}: cannot parse `{field}` in column `{}`", path.display(), header[k])
            })?;
            if !v.is_finite() {
                bail!("{} line {line}: non-finite value in column `{}`", path.display(), header[k]);
            }
            if k == resp_col {
                y.push(v);
            } else {
                row.push(v);
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        bail!("{}: no data rows", path.display());
    }
    let data = Dataset::new(y, Matrix::from_rows(&rows), intercept)?;
    Ok(Table {
        response: response.to_string(),
        features,
        data,
    })
}

/// CSV text of a dataset with an intercept column: predictors `x1 … x{p−1}`, then `y`.
pub fn dataset_csv(data: &Dataset) -> String {
    let start = usize::from(data.intercept());
    let mut s = String::new();
    for j in start..data.p() {
        let _ = write!(s, "x{},", j + 1 - start);
    }
    s.push_str("y\n");
    for i in 0..data.n() {
        let row = data.x().row(i);
        for v in &row[start..] {
            let _ = write!(s, "{v},");
        }
        let _ = writeln!(s, "{}", data.y()[i]);
    }
    s
}
