use crate::error::{Error, Result};

/// A numeric CSV table with a header row. `nan` cells are allowed.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

fn parse_cell(cell: &str) -> Option<f64> {
    match cell.trim() {
        "true" => Some(1.0),
        "false" => Some(0.0),
        c => c.parse().ok(),
    }
}

impl Table {
    /// Parses CSV text; a non-numeric cell is reported with its 1-based data
    /// row and column name.
    pub fn parse(text: &str) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new().from_reader(text.as_bytes());
        let columns: Vec<String> = reader
            .headers()
            .map_err(|e| Error::Parse(format!("CSV header: {e}")))?
            .iter()
            .map(str::to_string)
            .collect();
        let mut rows = Vec::new();
        for (i, rec) in reader.records().enumerate() {
            let row = i + 1;
            let rec = rec.map_err(|e| Error::Parse(format!("CSV row {row}: {e}")))?;
            let values = rec
                .iter()
                .zip(&columns)
                .map(|(cell, col)| {
                    parse_cell(cell).ok_or_else(|| {
                        Error::Parse(format!("CSV row {row}, column '{col}': '{cell}' is not a number"))
                    })
                })
                .collect::<Result<Vec<f64>>>()?;
            rows.push(values);
        }
        Ok(Self { columns, rows })
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let k = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[k]).collect())
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

/// Per-deployment mean and standard deviation of one metric over runs.
#[derive(Debug, Clone, PartialEq)]
pub struct Aggregate {
    pub x: Vec<f64>,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub runs: usize,
}

/// Aggregates `metric` across runs keyed by the `deployment` column. NaN
/// entries are skipped; a deployment with no finite value gets NaN.
pub fn aggregate(tables: &[Table], metric: &str) -> Option<Aggregate> {
    let mut xs: Vec<f64> = Vec::new();
    for t in tables {
        for d in t.column("deployment")? {
            if !xs.contains(&d) {
                xs.push(d);
            }
        }
    }
    xs.sort_by(f64::total_cmp);
    let mut mean = Vec::with_capacity(xs.len());
    let mut std = Vec::with_capacity(xs.len());
    for &x in &xs {
        let mut vals = Vec::new();
        for t in tables {
            let (d, m) = (t.column("deployment")?, t.column(metric)?);
            for (dx, v) in d.iter().zip(m) {
                if *dx == x && v.is_finite() {
                    vals.push(v);
                }
            }
        }
        if vals.is_empty() {
            mean.push(f64::NAN);
            std.push(f64::NAN);
        } else {
            let n = vals.len() as f64;
            let m = vals.iter().sum::<f64>() / n;
            mean.push(m);
            std.push((vals.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n).sqrt());
        }
    }
    Some(Aggregate {
        x: xs,
        mean,
        std,
        runs: tables.len(),
    })
}
