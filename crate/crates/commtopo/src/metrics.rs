//! Per-episode training metrics and their CSV form.

use std::io::Write;
use std::path::Path;

use crate::config::NUM_ACTIONS;
use crate::domain::ALL_ACTIONS;
use crate::error::{Error, Result};

/// One row per training episode. Action counts sum to N * T.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRecord {
    pub episode: u64,
    pub epsilon: f64,
    pub reward: f64,
    pub accuracy: f64,
    pub tokens_used: f64,
    /// TD loss of the gradient step taken after this episode; 0.0 while the
    /// buffer is still filling.
    pub td_loss: f64,
    pub action_counts: [u64; NUM_ACTIONS],
    pub mean_density: f64,
}

pub fn csv_header() -> String {
    let mut cols = vec![
        "episode".to_string(),
        "epsilon".to_string(),
        "reward".to_string(),
        "accuracy".to_string(),
        "tokens_used".to_string(),
        "td_loss".to_string(),
    ];
    cols.extend(ALL_ACTIONS.iter().map(|a| a.name().to_string()));
    cols.push("mean_density".to_string());
    cols.join(",")
}

impl MetricsRecord {
    /// Comma-separated row in header order. Floats use the shortest
    /// round-trip representation, so parsing the row back is lossless.
    pub fn to_csv_row(&self) -> String {
        let mut fields = vec![
            self.episode.to_string(),
            self.epsilon.to_string(),
            self.reward.to_string(),
            self.accuracy.to_string(),
            self.tokens_used.to_string(),
            self.td_loss.to_string(),
        ];
        fields.extend(self.action_counts.iter().map(|c| c.to_string()));
        fields.push(self.mean_density.to_string());
        fields.join(",")
    }

    pub fn from_csv_row(row: &str) -> Result<MetricsRecord> {
        let fields: Vec<&str> = row.split(',').collect();
        let expected = 7 + NUM_ACTIONS;
        if fields.len() != expected {
            return Err(Error::Data(format!(
                "metrics row has {} fields, expected {expected}",
                fields.len()
            )));
        }
        let bad = |i: usize| Error::Data(format!("bad metrics field `{}`", fields[i]));
        let f = |i: usize| fields[i].parse::<f64>().map_err(|_| bad(i));
        let u = |i: usize| fields[i].parse::<u64>().map_err(|_| bad(i));
        let mut action_counts = [0u64; NUM_ACTIONS];
        for (k, c) in action_counts.iter_mut().enumerate() {
            *c = u(6 + k)?;
        }
        Ok(MetricsRecord {
            episode: u(0)?,
            epsilon: f(1)?,
            reward: f(2)?,
            accuracy: f(3)?,
            tokens_used: f(4)?,
            td_loss: f(5)?,
            action_counts,
            mean_density: f(6 + NUM_ACTIONS)?,
        })
    }
}

/// Append-only CSV writer with the header emitted on creation.
pub struct MetricsWriter {
    file: std::fs::File,
}

impl MetricsWriter {
    pub fn create(path: &Path) -> Result<MetricsWriter> {
        let mut file = std::fs::File::create(path)?;
        writeln!(file, "{}", csv_header())?;
        Ok(MetricsWriter { file })
    }

    pub fn append(&mut self, record: &MetricsRecord) -> Result<()> {
        writeln!(self.file, "{}", record.to_csv_row())?;
        Ok(())
    }
}

/// Reads a metrics file back, validating the header.
pub fn read_metrics(path: &Path) -> Result<Vec<MetricsRecord>> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == csv_header() => {}
        other => {
            return Err(Error::Data(format!(
                "bad metrics header: {:?}",
                other.unwrap_or("")
            )))
        }
    }
    lines.map(MetricsRecord::from_csv_row).collect()
}
