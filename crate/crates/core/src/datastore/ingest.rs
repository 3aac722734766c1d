//! Readers for the native distributions of the three real-world corpora.
//! Only utterance text (plus dialogue id and position) is consulted.
//!
//! * Cornell Movie-Dialogs: `movie_lines.txt`. Each line is
//!   `lineID +++$+++ characterID +++$+++ movieID +++$+++ NAME +++$+++ text`;
//!   the tab-separated variant (`lineID\tcharacterID\tmovieID\tNAME\ttext`)
//!   is also accepted. Files are Latin-1 in the original release and are
//!   decoded as UTF-8 when valid, Latin-1 otherwise. Fields used: lineID, text.
//! * MultiWOZ 2.0/2.1: `data.json`, an object mapping dialogue name to
//!   `{"log": [{"text": ...}, ...]}`. MultiWOZ 2.2 dialogue files, an array
//!   of `{"dialogue_id", "turns": [{"utterance": ...}]}`, are also read.
//! * ConvAI: JSON array of `{"dialogId", "thread": [{"text": ...}]}`.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

use super::CorpusSource;
use crate::dialogue_gen::LabeledMessage;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Utterance {
    pub id: String,
    pub dialogue_id: Option<String>,
    pub turn_index: Option<u32>,
    pub text: String,
}

const MOVIE_SEP: &str = " +++$+++ ";

fn decode_text(bytes: Vec<u8>) -> String {
    match String::from_utf8(bytes) {
        Ok(s) => s,
        Err(e) => e.into_bytes().iter().map(|&b| char::from(b)).collect(),
    }
}

fn parse_error(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_owned(),
        line,
        message: message.into(),
    }
}

fn movie_utterances(path: &Path, text: &str) -> Result<Vec<Utterance>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = if line.contains(MOVIE_SEP.trim()) {
            line.splitn(5, MOVIE_SEP.trim()).map(str::trim).collect()
        } else {
            line.splitn(5, '\t').collect()
        };
        if fields.len() != 5 {
            return Err(parse_error(
                path,
                i + 1,
                format!("expected 5 fields, found {}", fields.len()),
            ));
        }
        out.push(Utterance {
            id: fields[0].trim().to_owned(),
            dialogue_id: Some(fields[2].trim().to_owned()),
            turn_index: None,
            text: fields[4].trim().to_owned(),
        });
    }
    Ok(out)
}

fn as_id(v: &Value) -> Option<String> {
    match v {
        Value::String(s) => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        _ => None,
    }
}

fn multiwoz_utterances(path: &Path, doc: &Value) -> Result<Vec<Utterance>> {
    let mut out = Vec::new();
    match doc {
        Value::Object(dialogues) => {
            for (name, dialogue) in dialogues {
                let log = dialogue
                    .get("log")
                    .and_then(Value::as_array)
                    .ok_or_else(|| {
                        parse_error(path, 0, format!("dialogue {name} has no log array"))
                    })?;
                let name = name.trim_end_matches(".json");
                for (t, turn) in log.iter().enumerate() {
                    let text = turn.get("text").and_then(Value::as_str).unwrap_or_default();
                    out.push(Utterance {
                        id: format!("{name}-{t}"),
                        dialogue_id: Some(name.to_owned()),
                        turn_index: Some(t as u32),
                        text: text.trim().to_owned(),
                    });
                }
            }
        }
        Value::Array(dialogues) => {
            for (d, dialogue) in dialogues.iter().enumerate() {
                let name = dialogue
                    .get("dialogue_id")
                    .and_then(as_id)
                    .unwrap_or_else(|| d.to_string());
                let turns = dialogue
                    .get("turns")
                    .and_then(Value::as_array)
                    .ok_or_else(|| {
                        parse_error(path, 0, format!("dialogue {name} has no turns array"))
                    })?;
                for (t, turn) in turns.iter().enumerate() {
                    let text = turn
                        .get("utterance")
                        .and_then(Value::as_str)
                        .unwrap_or_default();
                    out.push(Utterance {
                        id: format!("{}-{t}", name.trim_end_matches(".json")),
                        dialogue_id: Some(name.clone()),
                        turn_index: Some(t as u32),
                        text: text.trim().to_owned(),
                    });
                }
            }
        }
        _ => {
            return Err(parse_error(
                path,
                0,
                "MultiWOZ file must be a JSON object or array",
            ))
        }
    }
    Ok(out)
}

fn convai_utterances(path: &Path, doc: &Value) -> Result<Vec<Utterance>> {
    let dialogues = doc
        .as_array()
        .ok_or_else(|| parse_error(path, 0, "ConvAI file must be a JSON array"))?;
    let mut out = Vec::new();
    for (d, dialogue) in dialogues.iter().enumerate() {
        let name = dialogue
            .get("dialogId")
            .and_then(as_id)
            .unwrap_or_else(|| d.to_string());
        let thread = dialogue
            .get("thread")
            .and_then(Value::as_array)
            .ok_or_else(|| parse_error(path, 0, format!("dialogue {name} has no thread array")))?;
        for (t, turn) in thread.iter().enumerate() {
            let text = turn.get("text").and_then(Value::as_str).unwrap_or_default();
            out.push(Utterance {
                id: format!("{name}-{t}"),
                dialogue_id: Some(name.clone()),
                turn_index: Some(t as u32),
                text: text.trim().to_owned(),
            });
        }
    }
    Ok(out)
}

fn read_json(path: &Path, text: &str) -> Result<Value> {
    serde_json::from_str(text).map_err(|e| parse_error(path, e.line(), e.to_string()))
}

/// Every non-blank utterance in a native corpus file, in file order.
pub fn extract_utterances(source: CorpusSource, path: &Path) -> Result<Vec<Utterance>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let text = decode_text(bytes);
    let all = match source {
        CorpusSource::MovieDialogs => movie_utterances(path, &text)?,
        CorpusSource::Multiwoz => multiwoz_utterances(path, &read_json(path, &text)?)?,
        CorpusSource::Convai => convai_utterances(path, &read_json(path, &text)?)?,
        CorpusSource::Generated => {
            return Err(Error::Invalid(
                "generated data is not ingested from a native corpus".into(),
            ))
        }
    };
    Ok(all
        .into_iter()
        .filter(|u| !u.text.trim().is_empty())
        .collect())
}

/// Seeded uniform sample of `n` utterances as unlabeled messages. The
/// selection is returned in file order.
pub fn ingest_external(
    source: CorpusSource,
    raw_path: &Path,
    n: usize,
    seed: u64,
) -> Result<Vec<LabeledMessage>> {
    if n == 0 {
        return Err(Error::Invalid("n must be at least 1".into()));
    }
    let utterances = extract_utterances(source, raw_path)?;
    if n > utterances.len() {
        return Err(Error::Invalid(format!(
            "requested {n} utterances but {} has only {}",
            raw_path.display(),
            utterances.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = rand::seq::index::sample(&mut rng, utterances.len(), n).into_vec();
    picked.sort_unstable();
    Ok(picked
        .into_iter()
        .map(|i| {
            let u = &utterances[i];
            LabeledMessage {
                id: format!("{}-{}", source.short(), u.id),
                text: u.text.clone(),
                trait_dim: None,
                polarity: None,
                source,
                conversation_id: u.dialogue_id.clone(),
                turn_index: u.turn_index,
            }
        })
        .collect())
}
