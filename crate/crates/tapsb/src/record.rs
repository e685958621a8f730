//! Per-task telemetry: the record schema, line-delimited sinks, and
//! post-run analysis helpers.
//!
//! Records land in `tasks.jsonl`, one JSON object per line, schema below,
//! additive-only evolution. Worker-side timestamps come from the worker's
//! wall clock; on a single host the clocks coincide, and ordering checks in
//! tests allow a 10 ms skew tolerance.

use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::Mutex;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskStatus {
    Succeeded,
    Failed,
}

/// One telemetry row per task. Timestamps are wall-clock epoch
/// microseconds; durations are microseconds measured on a monotonic clock.
/// `arg_bytes` counts the serialized frames of data-bearing arguments at
/// submission (transformed arguments count their original frame size,
/// future references count zero); `result_bytes` is the serialized result
/// frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskRecord {
    pub task_id: String,
    pub function: String,
    pub parents: Vec<String>,
    pub submitted_at: u64,
    pub completed_at: u64,
    pub exec_started_at: u64,
    pub exec_ended_at: u64,
    pub transform_args_us: u64,
    pub resolve_args_us: u64,
    pub transform_result_us: u64,
    pub makespan_us: u64,
    pub status: TaskStatus,
    pub error_kind: String,
    pub executor: String,
    pub arg_bytes: u64,
    pub result_bytes: u64,
}

#[derive(Debug, thiserror::Error)]
pub enum RecordError {
    #[error("record sink is closed")]
    Closed,
    #[error("record io: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {detail}")]
    Parse { line: usize, detail: String },
}

/// Destination for task records. Appends are serialized internally; every
/// record lands as exactly one line.
pub trait RecordSink: Send + Sync {
    fn log(&self, record: &TaskRecord) -> Result<(), RecordError>;
    fn flush(&self) -> Result<(), RecordError>;
}

/// Line-delimited JSON file sink.
pub struct JsonlSink {
    writer: Mutex<Option<BufWriter<File>>>,
}

impl JsonlSink {
    pub fn create(path: impl AsRef<Path>) -> Result<JsonlSink, RecordError> {
        let file = File::create(path)?;
        Ok(JsonlSink {
            writer: Mutex::new(Some(BufWriter::new(file))),
        })
    }

    /// Flushes and closes the sink; later appends fail with a lifecycle
    /// error.
    pub fn close(&self) -> Result<(), RecordError> {
        let mut guard = self.writer.lock().unwrap();
        if let Some(mut writer) = guard.take() {
            writer.flush()?;
        }
        Ok(())
    }
}

impl RecordSink for JsonlSink {
    fn log(&self, record: &TaskRecord) -> Result<(), RecordError> {
        let json = serde_json::to_string(record).expect("task record serializes");
        let mut guard = self.writer.lock().unwrap();
        let writer = guard.as_mut().ok_or(RecordError::Closed)?;
        writer.write_all(json.as_bytes())?;
        writer.write_all(b"\n")?;
        writer.flush()?;
        Ok(())
    }

    fn flush(&self) -> Result<(), RecordError> {
        let mut guard = self.writer.lock().unwrap();
        let writer = guard.as_mut().ok_or(RecordError::Closed)?;
        writer.flush()?;
        Ok(())
    }
}

/// Keeps records in memory; convenient for tests and benchmarks.
#[derive(Default)]
pub struct MemorySink {
    records: Mutex<Vec<TaskRecord>>,
}

impl MemorySink {
    pub fn new() -> MemorySink {
        MemorySink::default()
    }

    pub fn snapshot(&self) -> Vec<TaskRecord> {
        self.records.lock().unwrap().clone()
    }

    pub fn len(&self) -> usize {
        self.records.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl RecordSink for MemorySink {
    fn log(&self, record: &TaskRecord) -> Result<(), RecordError> {
        self.records.lock().unwrap().push(record.clone());
        Ok(())
    }

    fn flush(&self) -> Result<(), RecordError> {
        Ok(())
    }
}

/// Loads every record from a `tasks.jsonl` file, preserving order.
pub fn load_records(path: impl AsRef<Path>) -> Result<Vec<TaskRecord>, RecordError> {
    let file = File::open(path.as_ref())?;
    let reader = BufReader::new(file);
    let mut records = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: TaskRecord = serde_json::from_str(&line).map_err(|e| RecordError::Parse {
            line: i + 1,
            detail: e.to_string(),
        })?;
        records.push(record);
    }
    Ok(records)
}

/// Canonical structural signature of the task DAG described by `records`.
///
/// Each task hashes its function name together with the sorted multiset of
/// its parents' hashes; the run's signature is the sorted multiset of task
/// hashes. Two runs of the same workload produce equal signatures even
/// though task ids are regenerated, and any change to the structure or to
/// task functions changes the signature.
pub fn dag_signature(records: &[TaskRecord]) -> Result<Vec<[u8; 32]>, String> {
    let by_id: HashMap<&str, &TaskRecord> =
        records.iter().map(|r| (r.task_id.as_str(), r)).collect();
    let mut memo: HashMap<&str, [u8; 32]> = HashMap::new();

    fn hash_of<'a>(
        id: &'a str,
        by_id: &HashMap<&'a str, &'a TaskRecord>,
        memo: &mut HashMap<&'a str, [u8; 32]>,
        depth: usize,
    ) -> Result<[u8; 32], String> {
        use sha2::{Digest, Sha256};
        if let Some(found) = memo.get(id) {
            return Ok(*found);
        }
        if depth > records_depth_limit() {
            return Err(format!("parent chain too deep or cyclic at task {id}"));
        }
        let record = by_id
            .get(id)
            .ok_or_else(|| format!("parent {id} has no record"))?;
        let mut parent_hashes = Vec::with_capacity(record.parents.len());
        for parent in &record.parents {
            parent_hashes.push(hash_of(parent.as_str(), by_id, memo, depth + 1)?);
        }
        parent_hashes.sort_unstable();
        let mut hasher = Sha256::new();
        hasher.update((record.function.len() as u64).to_le_bytes());
        hasher.update(record.function.as_bytes());
        hasher.update((parent_hashes.len() as u64).to_le_bytes());
        for h in &parent_hashes {
            hasher.update(h);
        }
        let digest: [u8; 32] = hasher.finalize().into();
        memo.insert(id, digest);
        Ok(digest)
    }

    let mut signature = Vec::with_capacity(records.len());
    for record in records {
        signature.push(hash_of(record.task_id.as_str(), &by_id, &mut memo, 0)?);
    }
    signature.sort_unstable();
    Ok(signature)
}

fn records_depth_limit() -> usize {
    1 << 16
}

/// Builds the same canonical signature from an analytically constructed
/// DAG: `(function, parent indices)` per task. Used as the oracle the
/// record-derived signature is compared against.
pub fn analytic_signature(tasks: &[(String, Vec<usize>)]) -> Vec<[u8; 32]> {
    use sha2::{Digest, Sha256};
    let mut hashes: Vec<[u8; 32]> = Vec::with_capacity(tasks.len());
    for (function, parents) in tasks {
        let mut parent_hashes: Vec<[u8; 32]> = parents.iter().map(|&p| hashes[p]).collect();
        parent_hashes.sort_unstable();
        let mut hasher = Sha256::new();
        hasher.update((function.len() as u64).to_le_bytes());
        hasher.update(function.as_bytes());
        hasher.update((parent_hashes.len() as u64).to_le_bytes());
        for h in &parent_hashes {
            hasher.update(h);
        }
        hashes.push(hasher.finalize().into());
    }
    let mut signature = hashes;
    signature.sort_unstable();
    signature
}

/// Utilization bound: total execution time across records cannot exceed
/// `workers` × the run's wall-time span (plus per-record skew slack).
pub fn utilization_bound(
    records: &[TaskRecord],
    workers: usize,
    skew_us: u64,
) -> Result<(), String> {
    if records.is_empty() {
        return Ok(());
    }
    let busy: u64 = records
        .iter()
        .map(|r| r.exec_ended_at.saturating_sub(r.exec_started_at))
        .sum();
    let start = records.iter().map(|r| r.submitted_at).min().unwrap();
    let end = records.iter().map(|r| r.completed_at).max().unwrap();
    let wall = end.saturating_sub(start) + skew_us;
    let budget = workers as u64 * wall + records.len() as u64 * skew_us;
    if busy > budget {
        return Err(format!(
            "records claim {busy} us of execution, but {workers} workers over {wall} us allow only {budget}"
        ));
    }
    Ok(())
}

/// Tolerant ordering checks over one run's records: submitted ≤ exec_start
/// ≤ exec_end ≤ completed (within `skew_us`), exact makespan arithmetic,
/// unique ids, parents present, failed ⇒ nonempty error kind, and
/// parent exec end ≤ child exec start (within `skew_us`).
pub fn verify_records(records: &[TaskRecord], skew_us: u64) -> Result<(), String> {
    let mut by_id: BTreeMap<&str, &TaskRecord> = BTreeMap::new();
    for record in records {
        if by_id.insert(record.task_id.as_str(), record).is_some() {
            return Err(format!("duplicate record for task {}", record.task_id));
        }
    }
    for record in records {
        let id = &record.task_id;
        if record.submitted_at > record.exec_started_at + skew_us {
            return Err(format!("task {id}: submitted_at > exec_started_at"));
        }
        if record.exec_started_at > record.exec_ended_at {
            return Err(format!("task {id}: exec_started_at > exec_ended_at"));
        }
        if record.exec_ended_at > record.completed_at + skew_us {
            return Err(format!("task {id}: exec_ended_at > completed_at"));
        }
        if record.makespan_us != record.completed_at.saturating_sub(record.submitted_at) {
            return Err(format!("task {id}: makespan arithmetic is off"));
        }
        match record.status {
            TaskStatus::Failed if record.error_kind.is_empty() => {
                return Err(format!("task {id}: failed without error_kind"));
            }
            TaskStatus::Succeeded if !record.error_kind.is_empty() => {
                return Err(format!(
                    "task {id}: succeeded with error_kind {}",
                    record.error_kind
                ));
            }
            _ => {}
        }
        for parent in &record.parents {
            let parent_record = by_id
                .get(parent.as_str())
                .ok_or_else(|| format!("task {id}: parent {parent} has no record"))?;
            if record.status == TaskStatus::Succeeded
                && parent_record.exec_ended_at > record.exec_started_at + skew_us
            {
                return Err(format!(
                    "task {id}: started {} us before parent {parent} ended",
                    parent_record.exec_ended_at - record.exec_started_at
                ));
            }
        }
    }
    Ok(())
}
