use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const RATINGS_FILE: &str = "ratings.jsonl";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RatingRecord {
    pub rater_id: String,
    pub session_id: String,
    pub item_id: String,
    pub frame_id: u32,
    pub blinded_method_id: String,
    pub score: u8,
    /// Server time, ms since the Unix epoch.
    pub timestamp_ms: u64,
}

/// Append-only rating log; the last record per item is the one that counts.
#[derive(Debug)]
pub struct RatingLog {
    path: PathBuf,
    file: File,
    latest: BTreeMap<String, RatingRecord>,
    records: usize,
}

/// Parses a log, keeping the last record per item. A torn final line is ignored.
pub fn read_ratings(path: &Path) -> Result<Vec<RatingRecord>> {
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(e.into()),
    };
    let lines: Vec<String> = BufReader::new(file).lines().collect::<std::io::Result<_>>()?;
    let mut out = Vec::with_capacity(lines.len());
    for (i, line) in lines.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str(line) {
            Ok(r) => out.push(r),
            Err(_) if i + 1 == lines.len() => break,
            Err(e) => return Err(Error::format(path, format!("line {}: {e}", i + 1))),
        }
    }
    Ok(out)
}

pub fn latest_per_item(records: &[RatingRecord]) -> BTreeMap<String, RatingRecord> {
    records.iter().map(|r| (r.item_id.clone(), r.clone())).collect()
}

impl RatingLog {
    pub fn open(path: &Path) -> Result<Self> {
        let existing = read_ratings(path)?;
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        let bytes = std::fs::read(path)?;
        if bytes.last().is_some_and(|b| *b != b'\n') {
            let keep = bytes.iter().rposition(|b| *b == b'\n').map_or(0, |i| i + 1);
            file.set_len(keep as u64)?;
        }
        Ok(Self {
            path: path.to_path_buf(),
            file,
            latest: latest_per_item(&existing),
            records: existing.len(),
        })
    }

    /// Appends and syncs before returning, so a confirmed rating survives a crash.
    pub fn append(&mut self, r: RatingRecord) -> Result<()> {
        let mut line = serde_json::to_vec(&r)?;
        line.push(b'\n');
        self.file.write_all(&line)?;
        self.file.sync_data()?;
        self.records += 1;
        self.latest.insert(r.item_id.clone(), r);
        Ok(())
    }

    pub fn latest(&self) -> &BTreeMap<String, RatingRecord> {
        &self.latest
    }

    pub fn score_of(&self, item_id: &str) -> Option<u8> {
        self.latest.get(item_id).map(|r| r.score)
    }

    /// Physical records, including overwritten ones.
    pub fn record_count(&self) -> usize {
        self.records
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}
