//! Append-only session logs with periodic snapshots.

use std::fs::{self, File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::registry::Registry;
use super::session::{LogRecord, Session, SessionEvent};

pub const SNAPSHOT_EVERY: u64 = 20;
pub const EVENTS_FILE: &str = "events.jsonl";
pub const SNAPSHOT_FILE: &str = "snapshot.json";

#[derive(Debug, Serialize, Deserialize)]
struct Snapshot {
    session: Session,
}

/// Open log of one session.
#[derive(Debug)]
pub struct SessionLog {
    dir: PathBuf,
    file: File,
}

impl SessionLog {
    pub fn create(root: &Path, id: &str) -> io::Result<Self> {
        let dir = root.join(id);
        fs::create_dir_all(&dir)?;
        let file = OpenOptions::new().create_new(true).append(true).open(dir.join(EVENTS_FILE))?;
        Ok(SessionLog { dir, file })
    }

    fn open(dir: PathBuf) -> io::Result<Self> {
        let file = OpenOptions::new().append(true).open(dir.join(EVENTS_FILE))?;
        Ok(SessionLog { dir, file })
    }

    /// Write `records` and sync them to disk. `state` is the session after
    /// the records; it is snapshotted when a record lands on a multiple of
    /// [`SNAPSHOT_EVERY`].
    pub fn append(&mut self, records: &[LogRecord], state: &Session) -> io::Result<()> {
        let mut buf = Vec::new();
        for r in records {
            serde_json::to_writer(&mut buf, r)?;
            buf.push(b'\n');
        }
        self.file.write_all(&buf)?;
        self.file.sync_data()?;
        if records.iter().any(|r| r.seq % SNAPSHOT_EVERY == 0) {
            self.snapshot(state)?;
        }
        Ok(())
    }

    fn snapshot(&self, state: &Session) -> io::Result<()> {
        let tmp = self.dir.join(format!("{SNAPSHOT_FILE}.tmp"));
        let mut f = File::create(&tmp)?;
        serde_json::to_writer(&mut f, &Snapshot { session: state.clone() })?;
        f.sync_all()?;
        fs::rename(tmp, self.dir.join(SNAPSHOT_FILE))
    }
}

/// Read a log, dropping a torn final line. Returns the records and the byte
/// length of the intact prefix.
fn read_log(path: &Path) -> io::Result<(Vec<LogRecord>, u64)> {
    let mut reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    let mut good = 0u64;
    let mut line = String::new();
    loop {
        line.clear();
        let n = reader.read_line(&mut line)?;
        if n == 0 {
            break;
        }
        if !line.ends_with('\n') {
            break;
        }
        match serde_json::from_str::<LogRecord>(line.trim_end()) {
            Ok(r) => out.push(r),
            Err(e) => {
                // a bad line followed by more data is corruption, not a torn write
                if reader.fill_buf()?.is_empty() {
                    break;
                }
                return Err(io::Error::new(io::ErrorKind::InvalidData, e));
            }
        }
        good += n as u64;
    }
    Ok((out, good))
}

/// Rebuild one session from its directory.
pub fn recover_session(dir: &Path, registry: &Registry) -> io::Result<(Session, SessionLog)> {
    let invalid = |m: String| io::Error::new(io::ErrorKind::InvalidData, m);
    let events = dir.join(EVENTS_FILE);
    let (records, good) = read_log(&events)?;
    let first = records.first().ok_or_else(|| invalid("empty session log".into()))?;
    let SessionEvent::Created { config, .. } = &first.event else {
        return Err(invalid("log does not start with a creation event".into()));
    };
    let data = registry
        .get(&config.dataset)
        .ok_or_else(|| invalid(format!("dataset `{}` is not registered", config.dataset)))?;

    let snap = dir.join(SNAPSHOT_FILE);
    let mut session = if snap.is_file() {
        let s: Snapshot = serde_json::from_reader(BufReader::new(File::open(&snap)?))?;
        s.session
    } else {
        Session::create(first, &data).map_err(|e| invalid(e.to_string()))?
    };
    let from = session.last_seq;
    for r in records.iter().filter(|r| r.seq > from) {
        session.apply(r, &data).map_err(|e| invalid(format!("record {}: {e}", r.seq)))?;
    }
    let f = OpenOptions::new().write(true).open(&events)?;
    if f.metadata()?.len() > good {
        f.set_len(good)?;
        f.sync_all()?;
    }
    Ok((session, SessionLog::open(dir.to_path_buf())?))
}

/// Rebuild every session under `root`. Sessions that cannot be rebuilt are
/// reported and skipped.
pub fn recover_all(root: &Path, registry: &Registry) -> io::Result<Vec<(Session, SessionLog)>> {
    let mut out = Vec::new();
    if !root.exists() {
        fs::create_dir_all(root)?;
        return Ok(out);
    }
    let mut dirs: Vec<PathBuf> = fs::read_dir(root)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join(EVENTS_FILE).is_file())
        .collect();
    dirs.sort();
    for d in dirs {
        match recover_session(&d, registry) {
            Ok(s) => out.push(s),
            Err(e) => tracing::warn!("skipping session log {}: {e}", d.display()),
        }
    }
    Ok(out)
}
