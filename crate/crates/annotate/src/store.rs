use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use traitgen_core::evaluation::AnnotationRecord;
use traitgen_core::personas::TraitDimension;

use crate::error::{AnnotateError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum TaskStatus {
    Pending,
    Assigned,
    Done,
}

/// A message to annotate, as seen by one annotator.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationTask {
    pub message_id: String,
    pub text: String,
    pub assigned_to: Option<String>,
    pub status: TaskStatus,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskInput {
    pub message_id: String,
    pub text: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnqueueOutcome {
    pub added: usize,
    pub duplicates: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Progress {
    pub tasks: usize,
    pub pending: usize,
    pub assigned: usize,
    pub done: usize,
    pub records: usize,
    pub redundancy: usize,
    pub per_annotator: BTreeMap<String, usize>,
}

#[derive(Debug, Clone)]
pub struct StoreOptions {
    /// Completed annotations wanted per message.
    pub redundancy: usize,
    /// Accepted annotator ids; empty accepts any non-empty id.
    pub annotators: BTreeSet<String>,
}

impl Default for StoreOptions {
    fn default() -> Self {
        Self {
            redundancy: 1,
            annotators: BTreeSet::new(),
        }
    }
}

#[derive(Debug)]
struct TaskEntry {
    message_id: String,
    text: String,
    assigned: BTreeSet<String>,
    done: BTreeSet<String>,
}

impl TaskEntry {
    fn load(&self) -> usize {
        self.assigned.len() + self.done.len()
    }
}

#[derive(Debug)]
struct State {
    tasks: Vec<TaskEntry>,
    index: HashMap<String, usize>,
    records: Vec<AnnotationRecord>,
    /// Open assignment per annotator.
    current: HashMap<String, usize>,
    journal: File,
}

/// Task queue backed by an append-only JSONL journal of submitted
/// records. All mutation goes through one mutex, so journal lines never
/// interleave; the journal is fsynced before a submission is acknowledged.
#[derive(Debug)]
pub struct AnnotationStore {
    path: PathBuf,
    options: StoreOptions,
    state: Mutex<State>,
}

impl AnnotationStore {
    /// Opens (or creates) the journal at `path` and replays it.
    pub fn open(path: &Path, options: StoreOptions) -> Result<Self> {
        if options.redundancy == 0 {
            return Err(AnnotateError::Config(
                "redundancy must be at least 1".into(),
            ));
        }
        let records = if path.exists() {
            read_journal(path)?
        } else {
            Vec::new()
        };
        let journal = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| AnnotateError::io(path, e))?;
        log::info!(
            "journal {}: {} records replayed",
            path.display(),
            records.len()
        );
        Ok(Self {
            path: path.to_owned(),
            options,
            state: Mutex::new(State {
                tasks: Vec::new(),
                index: HashMap::new(),
                records,
                current: HashMap::new(),
                journal,
            }),
        })
    }

    pub fn journal_path(&self) -> &Path {
        &self.path
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, State> {
        self.state.lock().unwrap_or_else(|p| p.into_inner())
    }

    /// Adds tasks, skipping ids already queued. Records already in the
    /// journal mark the matching (task, annotator) pairs done.
    pub fn enqueue_tasks(&self, messages: &[TaskInput]) -> EnqueueOutcome {
        let mut st = self.lock();
        let mut outcome = EnqueueOutcome {
            added: 0,
            duplicates: 0,
        };
        for m in messages {
            if st.index.contains_key(&m.message_id) {
                outcome.duplicates += 1;
                continue;
            }
            let done = st
                .records
                .iter()
                .filter(|r| r.message_id == m.message_id)
                .map(|r| r.annotator_id.clone())
                .collect();
            let i = st.tasks.len();
            st.tasks.push(TaskEntry {
                message_id: m.message_id.clone(),
                text: m.text.clone(),
                assigned: BTreeSet::new(),
                done,
            });
            st.index.insert(m.message_id.clone(), i);
            outcome.added += 1;
        }
        if outcome.duplicates > 0 {
            log::warn!("skipped {} duplicate task ids", outcome.duplicates);
        }
        outcome
    }

    fn check_annotator(&self, annotator: &str) -> Result<()> {
        if annotator.trim().is_empty() {
            return Err(AnnotateError::Validation(
                vec!["annotator_id: empty".into()],
            ));
        }
        if !self.options.annotators.is_empty() && !self.options.annotators.contains(annotator) {
            return Err(AnnotateError::UnknownAnnotator(annotator.to_owned()));
        }
        Ok(())
    }

    /// The annotator's open task, or else the least-annotated task they
    /// have not done that still needs annotations. Ties go to the task
    /// enqueued first.
    pub fn next_task(&self, annotator: &str) -> Result<Option<AnnotationTask>> {
        self.check_annotator(annotator)?;
        let mut st = self.lock();
        let chosen = match st.current.get(annotator) {
            Some(&i) => Some(i),
            None => st
                .tasks
                .iter()
                .enumerate()
                .filter(|(_, t)| t.load() < self.options.redundancy && !t.done.contains(annotator))
                .min_by_key(|(i, t)| (t.load(), *i))
                .map(|(i, _)| i),
        };
        let Some(i) = chosen else {
            return Ok(None);
        };
        st.tasks[i].assigned.insert(annotator.to_owned());
        st.current.insert(annotator.to_owned(), i);
        let t = &st.tasks[i];
        Ok(Some(AnnotationTask {
            message_id: t.message_id.clone(),
            text: t.text.clone(),
            assigned_to: Some(annotator.to_owned()),
            status: TaskStatus::Assigned,
        }))
    }

    /// Validates, journals (with fsync) and indexes one record.
    pub fn submit(&self, record: AnnotationRecord) -> Result<()> {
        let errors = record.validation_errors();
        if !errors.is_empty() {
            return Err(AnnotateError::Validation(errors));
        }
        self.check_annotator(&record.annotator_id)?;
        let mut st = self.lock();
        let i = *st
            .index
            .get(&record.message_id)
            .ok_or_else(|| AnnotateError::UnknownTask(record.message_id.clone()))?;
        let task = &st.tasks[i];
        if task.done.contains(&record.annotator_id) {
            return Err(AnnotateError::Duplicate {
                message_id: record.message_id,
                annotator_id: record.annotator_id,
            });
        }
        if !task.assigned.contains(&record.annotator_id) {
            return Err(AnnotateError::NotAssigned {
                message_id: record.message_id,
                annotator_id: record.annotator_id,
            });
        }
        let mut line = serde_json::to_string(&record)?;
        line.push('\n');
        st.journal
            .write_all(line.as_bytes())
            .and_then(|_| st.journal.sync_data())
            .map_err(|e| AnnotateError::io(&self.path, e))?;
        let task = &mut st.tasks[i];
        task.assigned.remove(&record.annotator_id);
        task.done.insert(record.annotator_id.clone());
        st.current.remove(&record.annotator_id);
        st.records.push(record);
        Ok(())
    }

    /// Every journaled record ordered by (message_id, annotator_id).
    pub fn export(&self) -> Vec<AnnotationRecord> {
        let mut out = self.lock().records.clone();
        out.sort_by(|a, b| (&a.message_id, &a.annotator_id).cmp(&(&b.message_id, &b.annotator_id)));
        out
    }

    pub fn progress(&self) -> Progress {
        let st = self.lock();
        let mut p = Progress {
            tasks: st.tasks.len(),
            pending: 0,
            assigned: 0,
            done: 0,
            records: st.records.len(),
            redundancy: self.options.redundancy,
            per_annotator: BTreeMap::new(),
        };
        for t in &st.tasks {
            match task_status(t, self.options.redundancy) {
                TaskStatus::Pending => p.pending += 1,
                TaskStatus::Assigned => p.assigned += 1,
                TaskStatus::Done => p.done += 1,
            }
        }
        for r in &st.records {
            *p.per_annotator.entry(r.annotator_id.clone()).or_default() += 1;
        }
        p
    }

    /// Completed annotations per queued message, in enqueue order.
    pub fn annotation_counts(&self) -> Vec<(String, usize)> {
        self.lock()
            .tasks
            .iter()
            .map(|t| (t.message_id.clone(), t.done.len()))
            .collect()
    }
}

fn task_status(t: &TaskEntry, redundancy: usize) -> TaskStatus {
    if t.done.len() >= redundancy {
        TaskStatus::Done
    } else if !t.assigned.is_empty() {
        TaskStatus::Assigned
    } else {
        TaskStatus::Pending
    }
}

fn read_journal(path: &Path) -> Result<Vec<AnnotationRecord>> {
    let file = File::open(path).map_err(|e| AnnotateError::io(path, e))?;
    let mut out = Vec::new();
    let mut seen = BTreeSet::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| AnnotateError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: AnnotationRecord = match serde_json::from_str(&line) {
            Ok(r) => r,
            // a crash mid-append leaves at most one torn final line
            Err(e) if e.is_eof() => {
                log::warn!(
                    "{}:{}: ignoring truncated final line",
                    path.display(),
                    n + 1
                );
                continue;
            }
            Err(e) => {
                return Err(AnnotateError::Journal(format!(
                    "{}:{}: {e}",
                    path.display(),
                    n + 1
                )))
            }
        };
        let errors = record.validation_errors();
        if !errors.is_empty() {
            return Err(AnnotateError::Journal(format!(
                "{}:{}: {}",
                path.display(),
                n + 1,
                errors.join("; ")
            )));
        }
        if !seen.insert((record.message_id.clone(), record.annotator_id.clone())) {
            return Err(AnnotateError::Journal(format!(
                "{}:{}: duplicate record for {} by {}",
                path.display(),
                n + 1,
                record.message_id,
                record.annotator_id
            )));
        }
        out.push(record);
    }
    Ok(out)
}

const CSV_FIXED: [&str; 3] = ["message_id", "annotator_id", "submitted_at"];

fn csv_header() -> Vec<String> {
    let mut cols: Vec<String> = CSV_FIXED.iter().map(|s| s.to_string()).collect();
    cols.extend(
        TraitDimension::ALL
            .iter()
            .map(|t| format!("rating_{}", t.code())),
    );
    cols.extend(
        TraitDimension::ALL
            .iter()
            .map(|t| format!("difficulty_{}", t.code())),
    );
    cols
}

/// One row per record: ids, RFC 3339 timestamp, five ratings, five
/// difficulties.
pub fn records_to_csv(records: &[AnnotationRecord]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(csv_header())?;
    for r in records {
        let mut row = vec![
            r.message_id.clone(),
            r.annotator_id.clone(),
            r.submitted_at.to_rfc3339(),
        ];
        for map in [&r.ratings, &r.difficulty] {
            row.extend(
                TraitDimension::ALL
                    .iter()
                    .map(|t| map.get(t).map_or(String::new(), u8::to_string)),
            );
        }
        w.write_record(row)?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| AnnotateError::Journal(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn records_from_csv(text: &str) -> Result<Vec<AnnotationRecord>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let mut out = Vec::new();
    for (n, row) in r.records().enumerate() {
        let row = row?;
        let bad = |what: &str| AnnotateError::Journal(format!("csv row {}: bad {what}", n + 1));
        let get = |i: usize| row.get(i).unwrap_or_default();
        let submitted_at = DateTime::parse_from_rfc3339(get(2))
            .map_err(|_| bad("submitted_at"))?
            .with_timezone(&Utc);
        let scale = |offset: usize| -> Result<BTreeMap<TraitDimension, u8>> {
            TraitDimension::ALL
                .into_iter()
                .enumerate()
                .map(|(k, t)| Ok((t, get(offset + k).parse().map_err(|_| bad(t.code()))?)))
                .collect()
        };
        out.push(AnnotationRecord {
            message_id: get(0).to_owned(),
            annotator_id: get(1).to_owned(),
            submitted_at,
            ratings: scale(3)?,
            difficulty: scale(8)?,
        });
    }
    Ok(out)
}

pub fn records_to_jsonl(records: &[AnnotationRecord]) -> Result<String> {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r)?);
        out.push('\n');
    }
    Ok(out)
}

pub fn records_from_jsonl(text: &str) -> Result<Vec<AnnotationRecord>> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(AnnotateError::from))
        .collect()
}
