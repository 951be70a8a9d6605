use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{param_err, Error, Result};

pub const HISTORY_HEADER: &str = "epoch,train_loss,val_loss,val_psnr,val_ssim";

/// Metrics of one completed epoch (epochs are numbered from 1).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_psnr: f64,
    pub val_ssim: f64,
}

impl EpochRecord {
    fn values(&self) -> [f64; 4] {
        [self.train_loss, self.val_loss, self.val_psnr, self.val_ssim]
    }

    pub(crate) fn to_row(self) -> String {
        let mut s = self.epoch.to_string();
        for v in self.values() {
            let _ = write!(s, ",{v:?}");
        }
        s
    }

    pub(crate) fn parse_row(row: &str) -> Result<Self> {
        let cols: Vec<&str> = row.trim().split(',').collect();
        let bad = || param_err!("bad history row '{row}'");
        if cols.len() != 5 {
            return Err(bad());
        }
        let f = |i: usize| cols[i].parse::<f64>().map_err(|_| bad());
        Ok(Self {
            epoch: cols[0].parse().map_err(|_| bad())?,
            train_loss: f(1)?,
            val_loss: f(2)?,
            val_psnr: f(3)?,
            val_ssim: f(4)?,
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainHistory {
    pub records: Vec<EpochRecord>,
}

impl TrainHistory {
    pub fn push(&mut self, record: EpochRecord) -> Result<()> {
        if let Some(bad) = record.values().iter().find(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!(
                "epoch {} produced non-finite metric {bad}",
                record.epoch
            )));
        }
        let expected = self.records.len() + 1;
        if record.epoch != expected {
            return Err(param_err!("history expects epoch {expected}, got {}", record.epoch));
        }
        self.records.push(record);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn last(&self) -> Option<&EpochRecord> {
        self.records.last()
    }

    pub fn to_csv(&self) -> String {
        let mut s = format!("{HISTORY_HEADER}\n");
        for r in &self.records {
            s.push_str(&r.to_row());
            s.push('\n');
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        if lines.next().map(str::trim) != Some(HISTORY_HEADER) {
            return Err(param_err!("history CSV must start with '{HISTORY_HEADER}'"));
        }
        let mut h = Self::default();
        for line in lines.filter(|l| !l.trim().is_empty()) {
            h.push(EpochRecord::parse_row(line)?)?;
        }
        Ok(h)
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(epoch: usize) -> EpochRecord {
        EpochRecord {
            epoch,
            train_loss: 0.1 / epoch as f64,
            val_loss: 1e-7,
            val_psnr: 23.456789012345,
            val_ssim: 0.875,
        }
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let mut h = TrainHistory::default();
        h.push(rec(1)).unwrap();
        h.push(rec(2)).unwrap();
        let text = h.to_csv();
        assert!(text.starts_with("epoch,train_loss,val_loss,val_psnr,val_ssim\n1,"));
        let back = TrainHistory::from_csv(&text).unwrap();
        assert_eq!(back, h);
        assert_eq!(back.to_csv(), text);
    }

    #[test]
    fn rejects_non_finite_and_gaps() {
        let mut h = TrainHistory::default();
        let mut r = rec(1);
        r.val_psnr = f64::NAN;
        assert!(matches!(h.push(r), Err(Error::Numerical(_))));
        assert!(h.push(rec(2)).is_err());
    }
}
