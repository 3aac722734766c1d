use std::collections::BTreeMap;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::{GoldLabel, GoldProvenance};
use crate::error::{Error, Result};
use crate::personas::{Polarity, TraitDimension};

pub const RATING_MIN: u8 = 1;
pub const RATING_MAX: u8 = 10;

/// Mean ratings at or above this value binarize to `Positive`.
pub const POSITIVE_THRESHOLD: f64 = 5.5;

/// One annotator's judgement of one message: a 1-10 rating per trait and
/// a 1-10 difficulty per trait.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub annotator_id: String,
    pub message_id: String,
    pub ratings: BTreeMap<TraitDimension, u8>,
    pub difficulty: BTreeMap<TraitDimension, u8>,
    pub submitted_at: DateTime<Utc>,
}

impl AnnotationRecord {
    /// Returns every problem found, as `field: reason` strings.
    pub fn validation_errors(&self) -> Vec<String> {
        let mut errors = Vec::new();
        if self.annotator_id.trim().is_empty() {
            errors.push("annotator_id: empty".to_owned());
        }
        if self.message_id.trim().is_empty() {
            errors.push("message_id: empty".to_owned());
        }
        for (field, map) in [("ratings", &self.ratings), ("difficulty", &self.difficulty)] {
            for t in TraitDimension::ALL {
                match map.get(&t) {
                    None => errors.push(format!("{field}.{t}: missing")),
                    Some(v) if !(RATING_MIN..=RATING_MAX).contains(v) => errors.push(format!(
                        "{field}.{t}: {v} is outside {RATING_MIN}..={RATING_MAX}"
                    )),
                    Some(_) => {}
                }
            }
        }
        errors
    }

    pub fn validate(&self) -> Result<()> {
        let errors = self.validation_errors();
        if errors.is_empty() {
            Ok(())
        } else {
            Err(Error::Invalid(errors.join("; ")))
        }
    }
}

/// Aggregated annotations for one message.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MessageConsensus {
    pub gold: GoldLabel,
    pub mean_rating: BTreeMap<TraitDimension, f64>,
    pub mean_difficulty: BTreeMap<TraitDimension, f64>,
    pub annotators: usize,
}

/// Averages ratings across annotators per message and trait and
/// thresholds the mean at [`POSITIVE_THRESHOLD`].
pub fn binarize_annotations(
    records: &[AnnotationRecord],
) -> Result<BTreeMap<String, MessageConsensus>> {
    let mut grouped: BTreeMap<&str, Vec<&AnnotationRecord>> = BTreeMap::new();
    for r in records {
        r.validate()
            .map_err(|e| Error::Invalid(format!("{} by {}: {e}", r.message_id, r.annotator_id)))?;
        grouped.entry(r.message_id.as_str()).or_default().push(r);
    }
    Ok(grouped
        .into_iter()
        .map(|(id, rs)| {
            let n = rs.len() as f64;
            let mean = |pick: fn(&AnnotationRecord) -> &BTreeMap<TraitDimension, u8>| {
                TraitDimension::ALL
                    .into_iter()
                    .map(|t| {
                        let total: f64 = rs.iter().map(|r| f64::from(pick(r)[&t])).sum();
                        (t, total / n)
                    })
                    .collect::<BTreeMap<_, _>>()
            };
            let mean_rating = mean(|r| &r.ratings);
            let mean_difficulty = mean(|r| &r.difficulty);
            let polarities = mean_rating
                .iter()
                .map(|(&t, &m)| {
                    let p = if m >= POSITIVE_THRESHOLD {
                        Polarity::Positive
                    } else {
                        Polarity::Negative
                    };
                    (t, p)
                })
                .collect();
            (
                id.to_owned(),
                MessageConsensus {
                    gold: GoldLabel {
                        message_id: id.to_owned(),
                        polarities,
                        provenance: GoldProvenance::Annotated,
                    },
                    mean_rating,
                    mean_difficulty,
                    annotators: rs.len(),
                },
            )
        })
        .collect())
}

#[cfg(test)]
pub(crate) fn record(
    annotator: &str,
    message: &str,
    rating: u8,
    difficulty: u8,
) -> AnnotationRecord {
    AnnotationRecord {
        annotator_id: annotator.into(),
        message_id: message.into(),
        ratings: TraitDimension::ALL
            .into_iter()
            .map(|t| (t, rating))
            .collect(),
        difficulty: TraitDimension::ALL
            .into_iter()
            .map(|t| (t, difficulty))
            .collect(),
        submitted_at: DateTime::<Utc>::from_timestamp(0, 0).unwrap(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_threshold() {
        let mut a = record("a1", "m1", 5, 3);
        let mut b = record("a2", "m1", 5, 5);
        a.ratings.insert(TraitDimension::Openness, 7);
        b.ratings.insert(TraitDimension::Openness, 8);
        let out = binarize_annotations(&[a, b]).unwrap();
        let m = &out["m1"];
        assert_eq!(m.annotators, 2);
        assert_eq!(m.mean_rating[&TraitDimension::Openness], 7.5);
        assert_eq!(
            m.gold.polarities[&TraitDimension::Openness],
            Polarity::Positive
        );
        assert_eq!(
            m.gold.polarities[&TraitDimension::Extroversion],
            Polarity::Negative
        );
        assert_eq!(m.mean_difficulty[&TraitDimension::Neuroticism], 4.0);
    }

    #[test]
    fn exact_threshold_is_positive() {
        let out = binarize_annotations(&[record("a", "m", 5, 1), record("b", "m", 6, 1)]).unwrap();
        assert_eq!(
            out["m"].gold.polarities[&TraitDimension::Agreeableness],
            Polarity::Positive
        );
    }

    #[test]
    fn out_of_range_rejected() {
        let mut r = record("a", "m", 5, 5);
        r.ratings.insert(TraitDimension::Openness, 0);
        r.difficulty.insert(TraitDimension::Extroversion, 11);
        let errors = r.validation_errors();
        assert_eq!(errors.len(), 2);
        assert!(errors[0].contains("ratings.OPE"));
        assert!(errors[1].contains("difficulty.EXT"));
        assert!(binarize_annotations(&[r]).is_err());
    }

    #[test]
    fn missing_trait_rejected() {
        let mut r = record("a", "m", 5, 5);
        r.ratings.remove(&TraitDimension::Neuroticism);
        assert_eq!(
            r.validation_errors(),
            vec!["ratings.NEU: missing".to_owned()]
        );
    }
}
