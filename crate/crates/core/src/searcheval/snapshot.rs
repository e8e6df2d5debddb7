use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Duration;

use chrono::Utc;

use super::engine::ResultList;
use crate::{Error, Result};

/// Append-only JSONL store of search executions, one file per engine.
///
/// Lets experiments be re-scored offline without paying for the same queries
/// twice. One writer per process; readers just scan the file.
#[derive(Debug)]
pub struct SnapshotStore {
    dir: PathBuf,
    writer: Mutex<()>,
}

impl SnapshotStore {
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        Ok(Self {
            dir,
            writer: Mutex::new(()),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn file_for(&self, engine_id: &str) -> PathBuf {
        let safe: String = engine_id
            .chars()
            .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
            .collect();
        self.dir.join(format!("{safe}.jsonl"))
    }

    pub fn put(&self, list: &ResultList) -> Result<()> {
        let path = self.file_for(&list.engine_id);
        let mut line = serde_json::to_string(list)?;
        line.push('\n');
        let _guard = self.writer.lock().unwrap();
        let mut f = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| Error::io(&path, e))?;
        f.write_all(line.as_bytes()).map_err(|e| Error::io(&path, e))?;
        f.flush().map_err(|e| Error::io(&path, e))
    }

    /// Stored executions of `query`, in insertion order, optionally limited
    /// to those retrieved within `max_age`. Unparseable lines are skipped.
    pub fn get(
        &self,
        query: &str,
        engine_id: &str,
        max_age: Option<Duration>,
    ) -> Result<Vec<ResultList>> {
        let path = self.file_for(engine_id);
        let file = match File::open(&path) {
            Ok(f) => f,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(Error::io(&path, e)),
        };
        let cutoff = max_age
            .and_then(|a| chrono::Duration::from_std(a).ok())
            .map(|a| Utc::now() - a);
        let mut out = Vec::new();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(&path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let list: ResultList = match serde_json::from_str(&line) {
                Ok(l) => l,
                Err(e) => {
                    log::warn!("{}:{}: skipping corrupt snapshot record: {e}", path.display(), i + 1);
                    continue;
                }
            };
            if list.query_text != query || list.engine_id != engine_id {
                continue;
            }
            if cutoff.is_some_and(|c| list.retrieved_at < c) {
                continue;
            }
            out.push(list);
        }
        Ok(out)
    }
}
