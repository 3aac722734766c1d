//! Corpus persistence, holdout splitting and real-corpus ingestion.
//!
//! Corpora are JSONL, one record per line, UTF-8 with LF endings. Field
//! order is fixed:
//!
//! ```text
//! {"id":str,"text":str,"trait":str|null,"polarity":str|null,"source":str,
//!  "split":str,"conversation_id":str|null,"turn_index":int|null}
//! ```

mod ingest;

use std::fmt;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dialogue_gen::LabeledMessage;
use crate::error::{Error, ParseEnumError, Result};
use crate::personas::{Polarity, TraitDimension};

pub use ingest::{extract_utterances, ingest_external, Utterance};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum CorpusSource {
    Generated,
    MovieDialogs,
    Multiwoz,
    Convai,
}

impl CorpusSource {
    pub const REAL: [CorpusSource; 3] = [
        CorpusSource::MovieDialogs,
        CorpusSource::Multiwoz,
        CorpusSource::Convai,
    ];

    pub fn code(self) -> &'static str {
        match self {
            CorpusSource::Generated => "GENERATED",
            CorpusSource::MovieDialogs => "MOVIE_DIALOGS",
            CorpusSource::Multiwoz => "MULTIWOZ",
            CorpusSource::Convai => "CONVAI",
        }
    }

    /// Short name used in ids and on the command line.
    pub fn short(self) -> &'static str {
        match self {
            CorpusSource::Generated => "generated",
            CorpusSource::MovieDialogs => "movie",
            CorpusSource::Multiwoz => "multiwoz",
            CorpusSource::Convai => "convai",
        }
    }
}

impl fmt::Display for CorpusSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for CorpusSource {
    type Err = ParseEnumError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "generated" => Ok(CorpusSource::Generated),
            "movie" | "movie_dialogs" | "cornell" => Ok(CorpusSource::MovieDialogs),
            "multiwoz" => Ok(CorpusSource::Multiwoz),
            "convai" => Ok(CorpusSource::Convai),
            _ => Err(ParseEnumError::new("corpus source", s)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Split {
    Train,
    Test,
    Unassigned,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetRecord {
    pub message: LabeledMessage,
    pub split: Split,
}

impl DatasetRecord {
    pub fn new(message: LabeledMessage, split: Split) -> Self {
        Self { message, split }
    }

    pub fn validate(&self) -> std::result::Result<(), String> {
        let m = &self.message;
        if m.text.trim().is_empty() {
            return Err("empty text".into());
        }
        if m.trait_dim.is_some() != m.polarity.is_some() {
            return Err("trait and polarity must both be set or both be null".into());
        }
        if m.source == CorpusSource::Generated && m.trait_dim.is_none() {
            return Err("generated record without a label".into());
        }
        if m.source != CorpusSource::Generated && self.split == Split::Train {
            return Err(format!("{} record cannot be in TRAIN", m.source));
        }
        Ok(())
    }
}

/// Wire form; field order here is the on-disk order.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RecordLine {
    id: String,
    text: String,
    #[serde(rename = "trait")]
    trait_dim: Option<TraitDimension>,
    polarity: Option<Polarity>,
    source: CorpusSource,
    split: Split,
    conversation_id: Option<String>,
    turn_index: Option<u32>,
}

impl From<&DatasetRecord> for RecordLine {
    fn from(r: &DatasetRecord) -> Self {
        let m = &r.message;
        RecordLine {
            id: m.id.clone(),
            text: m.text.clone(),
            trait_dim: m.trait_dim,
            polarity: m.polarity,
            source: m.source,
            split: r.split,
            conversation_id: m.conversation_id.clone(),
            turn_index: m.turn_index,
        }
    }
}

impl From<RecordLine> for DatasetRecord {
    fn from(l: RecordLine) -> Self {
        DatasetRecord {
            message: LabeledMessage {
                id: l.id,
                text: l.text,
                trait_dim: l.trait_dim,
                polarity: l.polarity,
                source: l.source,
                conversation_id: l.conversation_id,
                turn_index: l.turn_index,
            },
            split: l.split,
        }
    }
}

pub fn record_to_line(record: &DatasetRecord) -> String {
    serde_json::to_string(&RecordLine::from(record)).expect("record serializes")
}

/// Writes `contents` to `path` through a temporary file in the same
/// directory followed by a rename.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(contents).map_err(|e| Error::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

pub fn save_corpus(records: &[DatasetRecord], path: &Path) -> Result<()> {
    let mut buf = String::new();
    for r in records {
        buf.push_str(&record_to_line(r));
        buf.push('\n');
    }
    write_atomic(path, buf.as_bytes())
}

pub fn load_corpus(path: &Path) -> Result<Vec<DatasetRecord>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: RecordLine = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_owned(),
            line: line_no,
            message: e.to_string(),
        })?;
        let record = DatasetRecord::from(parsed);
        record.validate().map_err(|message| Error::Parse {
            path: path.to_owned(),
            line: line_no,
            message,
        })?;
        out.push(record);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitSpec {
    pub holdout_count: usize,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            holdout_count: 1000,
            seed: 0,
        }
    }
}

/// Marks a seeded uniform sample of `holdout_count` records TEST and the
/// rest TRAIN. Record order is preserved.
pub fn split_holdout(records: &[DatasetRecord], spec: SplitSpec) -> Result<Vec<DatasetRecord>> {
    if let Some(bad) = records
        .iter()
        .find(|r| r.message.source != CorpusSource::Generated || r.split != Split::Unassigned)
    {
        return Err(Error::Invalid(format!(
            "record {} is not an unassigned generated record",
            bad.message.id
        )));
    }
    if spec.holdout_count >= records.len() {
        return Err(Error::Invalid(format!(
            "holdout of {} needs more than {} records",
            spec.holdout_count,
            records.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut is_test = vec![false; records.len()];
    for i in rand::seq::index::sample(&mut rng, records.len(), spec.holdout_count) {
        is_test[i] = true;
    }
    Ok(records
        .iter()
        .zip(is_test)
        .map(|(r, test)| {
            DatasetRecord::new(
                r.message.clone(),
                if test { Split::Test } else { Split::Train },
            )
        })
        .collect())
}
