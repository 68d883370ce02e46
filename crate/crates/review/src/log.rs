//! Append-only event log. Every queue mutation is one JSON line; replaying
//! the file rebuilds the queue state.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::model::{CandidateItem, Correction, RegenJob, ReviewDecision};
use crate::ReviewError;

pub const LOG_FILE: &str = "decisions.jsonl";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "kebab-case")]
pub enum Event {
    Enqueued { item: CandidateItem },
    Decided { decision: ReviewDecision },
    RegenerationQueued { job: RegenJob },
    RegenerationDone { job_id: u64, pair_id: String },
    Corrected { correction: Correction },
}

pub(crate) struct EventLog {
    path: PathBuf,
    file: File,
}

impl EventLog {
    /// Opens (creating if needed) and reads back every complete event. A
    /// torn final line from an interrupted write is dropped and truncated
    /// away; a malformed line elsewhere is an error.
    pub(crate) fn open(path: &Path) -> Result<(Self, Vec<Event>), ReviewError> {
        let io = |source| ReviewError::Io {
            path: path.to_path_buf(),
            source,
        };
        let mut file = OpenOptions::new()
            .read(true)
            .append(true)
            .create(true)
            .open(path)
            .map_err(io)?;
        let mut events = Vec::new();
        let mut good_len = 0u64;
        let mut reader = BufReader::new(&mut file);
        let mut line = String::new();
        let mut n = 0;
        loop {
            line.clear();
            let read = reader.read_line(&mut line).map_err(io)?;
            if read == 0 {
                break;
            }
            n += 1;
            if !line.ends_with('\n') {
                log::warn!("{}: dropping torn final line {n}", path.display());
                break;
            }
            if !line.trim().is_empty() {
                let ev = serde_json::from_str::<Event>(line.trim_end()).map_err(|e| ReviewError::CorruptLog {
                    path: path.to_path_buf(),
                    line: n,
                    message: e.to_string(),
                })?;
                events.push(ev);
            }
            good_len += read as u64;
        }
        drop(reader);
        if file.metadata().map_err(io)?.len() != good_len {
            file.set_len(good_len).map_err(io)?;
        }
        file.seek(SeekFrom::End(0)).map_err(io)?;
        Ok((
            Self {
                path: path.to_path_buf(),
                file,
            },
            events,
        ))
    }

    pub(crate) fn append(&mut self, ev: &Event) -> Result<(), ReviewError> {
        let mut line = serde_json::to_string(ev).expect("events serialize");
        line.push('\n');
        let io = |source| ReviewError::Io {
            path: self.path.clone(),
            source,
        };
        self.file.write_all(line.as_bytes()).map_err(io)?;
        self.file.sync_data().map_err(io)
    }
}
