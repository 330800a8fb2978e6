use std::io::Write;

use crate::error::{Error, Result};
use crate::harness::Table;
use crate::trpo::StepReport;

/// One row of `metrics.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct DeploymentMetrics {
    pub deployment: usize,
    /// Deterministic-policy return on the real environment after the
    /// deployment's offline session.
    pub eval_return_mean: f64,
    pub eval_return_std: f64,
    /// Mean return of episodes completed while collecting the batch.
    pub deploy_return_mean: f64,
    /// Min-pairing cosine novelty of the new batch; NaN at deployment 1.
    pub novelty: f64,
    pub novelty_mean_pairing: f64,
    pub energy_distance: f64,
    pub trajectory_mse: f64,
    pub mean_label: f64,
    pub mean_zeta: f64,
    pub dynamics_val_loss: f64,
    pub labeler_val_loss: f64,
    pub steps_accepted: usize,
    pub steps_total: usize,
    pub transitions_total: usize,
}

/// Column order of `metrics.csv`.
pub const METRIC_COLUMNS: [&str; 15] = [
    "deployment",
    "eval_return_mean",
    "eval_return_std",
    "deploy_return_mean",
    "novelty",
    "novelty_mean_pairing",
    "energy_distance",
    "trajectory_mse",
    "mean_label",
    "mean_zeta",
    "dynamics_val_loss",
    "labeler_val_loss",
    "steps_accepted",
    "steps_total",
    "transitions_total",
];

fn fmt(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else {
        v.to_string()
    }
}

impl DeploymentMetrics {
    pub fn record(&self) -> [String; 15] {
        [
            self.deployment.to_string(),
            fmt(self.eval_return_mean),
            fmt(self.eval_return_std),
            fmt(self.deploy_return_mean),
            fmt(self.novelty),
            fmt(self.novelty_mean_pairing),
            fmt(self.energy_distance),
            fmt(self.trajectory_mse),
            fmt(self.mean_label),
            fmt(self.mean_zeta),
            fmt(self.dynamics_val_loss),
            fmt(self.labeler_val_loss),
            self.steps_accepted.to_string(),
            self.steps_total.to_string(),
            self.transitions_total.to_string(),
        ]
    }

    fn from_row(row: &[f64]) -> Self {
        Self {
            deployment: row[0] as usize,
            eval_return_mean: row[1],
            eval_return_std: row[2],
            deploy_return_mean: row[3],
            novelty: row[4],
            novelty_mean_pairing: row[5],
            energy_distance: row[6],
            trajectory_mse: row[7],
            mean_label: row[8],
            mean_zeta: row[9],
            dynamics_val_loss: row[10],
            labeler_val_loss: row[11],
            steps_accepted: row[12] as usize,
            steps_total: row[13] as usize,
            transitions_total: row[14] as usize,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunMetrics {
    pub deployments: Vec<DeploymentMetrics>,
    /// TRPO step reports, grouped by deployment.
    pub trpo_steps: Vec<Vec<StepReport>>,
}

impl RunMetrics {
    pub fn eval_returns(&self) -> Vec<f64> {
        self.deployments.iter().map(|d| d.eval_return_mean).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(METRIC_COLUMNS).expect("in-memory write");
        for d in &self.deployments {
            w.write_record(d.record()).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf8")
    }

    /// Parses `metrics.csv` (TRPO logs are not included).
    pub fn from_csv(text: &str) -> Result<Self> {
        let table = Table::parse(text)?;
        if table.columns != METRIC_COLUMNS {
            return Err(Error::Parse(format!(
                "unexpected metrics columns: {}",
                table.columns.join(",")
            )));
        }
        Ok(Self {
            deployments: table.rows.iter().map(|r| DeploymentMetrics::from_row(r)).collect(),
            trpo_steps: Vec::new(),
        })
    }
}

pub fn write_step_log<W: Write>(steps: &[StepReport], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let wrap = |e: csv::Error| Error::Parse(format!("writing TRPO log: {e}"));
    w.write_record(StepReport::CSV_HEADER).map_err(wrap)?;
    for s in steps {
        w.write_record(s.csv_record()).map_err(wrap)?;
    }
    w.flush().map_err(|e| Error::Parse(format!("writing TRPO log: {e}")))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_roundtrip_keeps_nan() {
        let m = RunMetrics {
            deployments: vec![DeploymentMetrics {
                deployment: 1,
                eval_return_mean: 1.25,
                eval_return_std: 0.0,
                deploy_return_mean: -3.5,
                novelty: f64::NAN,
                novelty_mean_pairing: f64::NAN,
                energy_distance: 0.125,
                trajectory_mse: 2.0,
                mean_label: 0.9,
                mean_zeta: 0.0,
                dynamics_val_loss: 1e-3,
                labeler_val_loss: -2.0,
                steps_accepted: 90,
                steps_total: 100,
                transitions_total: 2000,
            }],
            trpo_steps: Vec::new(),
        };
        let text = m.to_csv();
        assert!(text.contains(",nan,nan,"));
        let back = RunMetrics::from_csv(&text).unwrap();
        assert_eq!(back.to_csv(), text);
    }
}
