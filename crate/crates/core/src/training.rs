//! Pieces shared by the DeepONet and Koopman trainers.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::AdamConfig;

/// Settings for one training run. One epoch is one full-batch Adam step.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub adam: AdamConfig,
    /// Fraction of the final epochs whose weights are averaged.
    pub swa_fraction: f64,
    /// Global gradient-norm bound, if any.
    pub clip_norm: Option<f64>,
    /// Seeds the batching stream.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { epochs: 5000, adam: AdamConfig::default(), swa_fraction: 0.25, clip_norm: None, seed: 0 }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.swa_fraction) {
            return Err(Error::InvalidArgument(format!("swa fraction {} outside [0, 1]", self.swa_fraction)));
        }
        if let Some(c) = self.clip_norm {
            if !(c > 0.0) {
                return Err(Error::InvalidArgument(format!("clip norm must be positive, got {c}")));
            }
        }
        if !(self.adam.lr > 0.0) {
            return Err(Error::InvalidArgument(format!("learning rate must be positive, got {}", self.adam.lr)));
        }
        Ok(())
    }

    /// First epoch whose weights enter the average.
    pub fn swa_start(&self) -> usize {
        let count = (self.epochs as f64 * self.swa_fraction).ceil() as usize;
        self.epochs - count.min(self.epochs)
    }
}

/// One row of a loss history. Terms that were not computed in an epoch are
/// `None`; the checksums are taken after the epoch's update.
#[derive(Clone, Debug, PartialEq)]
pub struct LossRecord {
    pub epoch: usize,
    pub terms: Vec<Option<f64>>,
    pub model_checksum: u64,
    pub discriminator_checksum: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossHistory {
    pub columns: Vec<String>,
    #[serde(skip)]
    pub records: Vec<LossRecord>,
}

impl LossHistory {
    pub fn new(columns: &[&str]) -> Self {
        Self { columns: columns.iter().map(|c| c.to_string()).collect(), records: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Values of one column, skipping epochs where it was not computed.
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let k = self.columns.iter().position(|c| c == name)?;
        Some(self.records.iter().filter_map(|r| r.terms[k]).collect())
    }

    /// Last recorded value of a column.
    pub fn last(&self, name: &str) -> Option<f64> {
        self.column(name)?.last().copied()
    }

    pub fn push(&mut self, record: LossRecord) {
        debug_assert_eq!(record.terms.len(), self.columns.len());
        self.records.push(record);
    }

    /// CSV with an `epoch` column followed by the loss columns; missing
    /// values are left empty and floats use shortest round-trip form.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["epoch".to_string()];
        header.extend(self.columns.iter().cloned());
        w.write_record(&header)?;
        for r in &self.records {
            let mut row = vec![r.epoch.to_string()];
            row.extend(r.terms.iter().map(|t| t.map(|x| x.to_string()).unwrap_or_default()));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            if !dir.as_os_str().is_empty() {
                std::fs::create_dir_all(dir)?;
            }
        }
        self.write_csv(std::fs::File::create(path)?)
    }
}

/// Non-finite loss guard used by both trainers.
pub(crate) fn check_finite(epoch: usize, what: &str, value: f64) -> Result<()> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(Error::Diverged { epoch, detail: format!("{what} became {value}") })
    }
}
