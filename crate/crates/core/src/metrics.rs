//! Append-only per-epoch logs: JSONL plus a CSV mirror.

use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dialog::Side;
use crate::error::Result;
use crate::train::EpochMetrics;

/// One line of the tabular log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationMetrics {
    pub iteration: usize,
    pub updated: Side,
    pub mean_reward: f64,
    pub accuracy: f64,
}

pub trait LogRecord: Serialize {
    const CSV_HEADER: &'static str;
    fn csv_row(&self) -> String;
    /// Position of this record in the run (iteration or epoch).
    fn step(&self) -> usize;
}

impl LogRecord for IterationMetrics {
    const CSV_HEADER: &'static str = "iteration,updated,mean_reward,accuracy";

    fn csv_row(&self) -> String {
        let side = match self.updated {
            Side::Q => "q",
            Side::A => "a",
        };
        format!("{},{side},{},{}", self.iteration, self.mean_reward, self.accuracy)
    }

    fn step(&self) -> usize {
        self.iteration
    }
}

impl LogRecord for EpochMetrics {
    const CSV_HEADER: &'static str = EpochMetrics::CSV_HEADER;

    fn csv_row(&self) -> String {
        EpochMetrics::csv_row(self)
    }

    fn step(&self) -> usize {
        self.epoch
    }
}

pub struct MetricsLog {
    jsonl: PathBuf,
    csv: PathBuf,
}

impl MetricsLog {
    pub const JSONL: &'static str = "metrics.jsonl";
    pub const CSV: &'static str = "metrics.csv";

    /// Starts fresh logs in `dir`, replacing any earlier ones.
    pub fn create<R: LogRecord>(dir: &Path) -> Result<Self> {
        let log = Self::paths(dir);
        File::create(&log.jsonl)?;
        fs::write(&log.csv, format!("{}\n", R::CSV_HEADER))?;
        Ok(log)
    }

    /// Reopens logs for a run resumed at `step`, dropping lines from steps
    /// the checkpoint does not cover (written after its last save). Kept
    /// lines are copied verbatim.
    pub fn resume<R: LogRecord + for<'de> Deserialize<'de>>(dir: &Path, step: usize) -> Result<Self> {
        let log = Self::paths(dir);
        let (mut jsonl, mut csv) = (String::new(), format!("{}\n", R::CSV_HEADER));
        match File::open(&log.jsonl) {
            Ok(f) => {
                let old_csv = fs::read_to_string(&log.csv).unwrap_or_default();
                let mut rows = old_csv.lines().skip(1);
                for line in BufReader::new(f).lines() {
                    let line = line?;
                    if line.trim().is_empty() {
                        continue;
                    }
                    let record: R = serde_json::from_str(&line)?;
                    let row = rows.next();
                    if record.step() < step {
                        jsonl.push_str(&line);
                        jsonl.push('\n');
                        csv.push_str(&row.map(str::to_string).unwrap_or_else(|| record.csv_row()));
                        csv.push('\n');
                    }
                }
            }
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {}
            Err(e) => return Err(e.into()),
        }
        fs::write(&log.jsonl, jsonl)?;
        fs::write(&log.csv, csv)?;
        Ok(log)
    }

    fn paths(dir: &Path) -> Self {
        MetricsLog {
            jsonl: dir.join(Self::JSONL),
            csv: dir.join(Self::CSV),
        }
    }

    pub fn append<R: LogRecord>(&self, record: &R) -> Result<()> {
        let mut line = serde_json::to_string(record)?;
        line.push('\n');
        OpenOptions::new().append(true).open(&self.jsonl)?.write_all(line.as_bytes())?;
        let row = format!("{}\n", record.csv_row());
        OpenOptions::new().append(true).open(&self.csv)?.write_all(row.as_bytes())?;
        Ok(())
    }
}

pub fn read_jsonl<R: for<'de> Deserialize<'de>>(reader: impl BufRead) -> Result<Vec<R>> {
    let mut out = Vec::new();
    for line in reader.lines() {
        let line = line?;
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(&line)?);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(i: usize) -> IterationMetrics {
        IterationMetrics {
            iteration: i,
            updated: if i % 2 == 0 { Side::Q } else { Side::A },
            mean_reward: 0.5,
            accuracy: 0.75,
        }
    }

    #[test]
    fn lines_parse_independently_and_resume_truncates() {
        let dir = tempfile::tempdir().unwrap();
        let log = MetricsLog::create::<IterationMetrics>(dir.path()).unwrap();
        for i in 0..4 {
            log.append(&rec(i)).unwrap();
        }
        let text = fs::read_to_string(dir.path().join(MetricsLog::JSONL)).unwrap();
        for line in text.lines() {
            serde_json::from_str::<IterationMetrics>(line).unwrap();
        }
        MetricsLog::resume::<IterationMetrics>(dir.path(), 2).unwrap();
        let back: Vec<IterationMetrics> =
            read_jsonl(BufReader::new(File::open(dir.path().join(MetricsLog::JSONL)).unwrap())).unwrap();
        assert_eq!(back, vec![rec(0), rec(1)]);
        let csv = fs::read_to_string(dir.path().join(MetricsLog::CSV)).unwrap();
        assert_eq!(csv.lines().count(), 3);
        assert!(csv.lines().nth(2).unwrap().starts_with("1,a,"));
    }
}
