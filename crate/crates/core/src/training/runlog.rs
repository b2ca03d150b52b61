use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses::LossBreakdown;

/// One line of the run log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum LogRecord {
    Step {
        epoch: usize,
        step: usize,
        losses: LossBreakdown,
    },
    Epoch {
        epoch: usize,
        steps: usize,
        seconds: f64,
        losses: LossBreakdown,
    },
    Checkpoint {
        epoch: usize,
        path: PathBuf,
    },
}

/// Append-only JSON-lines log.
pub struct RunLog {
    path: PathBuf,
    out: Option<BufWriter<File>>,
}

impl RunLog {
    pub fn open(path: &Path) -> Result<Self> {
        let f = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| Error::io(path, e))?;
        Ok(RunLog {
            path: path.to_path_buf(),
            out: Some(BufWriter::new(f)),
        })
    }

    /// A log that discards everything.
    pub fn disabled() -> Self {
        RunLog {
            path: PathBuf::new(),
            out: None,
        }
    }

    pub fn append(&mut self, record: &LogRecord) -> Result<()> {
        if let Some(out) = &mut self.out {
            let line = serde_json::to_string(record).expect("log record serializes");
            writeln!(out, "{line}").map_err(|e| Error::io(&self.path, e))?;
        }
        Ok(())
    }

    pub fn flush(&mut self) -> Result<()> {
        if let Some(out) = &mut self.out {
            out.flush().map_err(|e| Error::io(&self.path, e))?;
        }
        Ok(())
    }
}

pub fn read_log(path: &Path) -> Result<Vec<LogRecord>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::Format {
                path: path.to_path_buf(),
                detail: format!("line {}: {e}", i + 1),
            })
        })
        .collect()
}
