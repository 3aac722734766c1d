//! Accuracy reports, the processed-output confidence metric and its
//! correlation with annotator difficulty.

mod annotations;
mod stats;

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::classifier::{RawTraitScore, TrainedModelBundle, TraitScores};
use crate::dialogue_gen::LabeledMessage;
use crate::error::{Error, Result};
use crate::personas::{Polarity, TraitDimension};

pub use annotations::{
    binarize_annotations, AnnotationRecord, MessageConsensus, POSITIVE_THRESHOLD, RATING_MAX,
    RATING_MIN,
};
pub use stats::{format_coefficient, pearson, significance_stars, CorrelationResult};

/// How a raw (positive, negative) pair collapses to a confidence scalar.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProcessedOutputFormula {
    /// `|positive| + |negative|`; reproduces all four worked examples.
    #[default]
    SumOfAbs,
    /// `|positive - negative|`, kept for sensitivity analysis.
    AbsDifference,
}

pub fn processed_output(score: RawTraitScore) -> Result<f64> {
    processed_output_with(score, ProcessedOutputFormula::SumOfAbs)
}

pub fn processed_output_with(score: RawTraitScore, formula: ProcessedOutputFormula) -> Result<f64> {
    if !(score.positive.is_finite() && score.negative.is_finite()) {
        return Err(Error::Invalid(
            "processed output of a non-finite score".into(),
        ));
    }
    Ok(match formula {
        ProcessedOutputFormula::SumOfAbs => score.positive.abs() + score.negative.abs(),
        ProcessedOutputFormula::AbsDifference => (score.positive - score.negative).abs(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub message_id: String,
    pub scores: TraitScores,
    pub predicted_polarity: BTreeMap<TraitDimension, Polarity>,
    pub processed_output: BTreeMap<TraitDimension, f64>,
}

impl PredictionRecord {
    pub fn from_scores(
        message_id: impl Into<String>,
        scores: TraitScores,
        formula: ProcessedOutputFormula,
    ) -> Result<Self> {
        let predicted_polarity = scores.iter().map(|(&t, s)| (t, s.polarity())).collect();
        let processed_output = scores
            .iter()
            .map(|(&t, &s)| Ok((t, processed_output_with(s, formula)?)))
            .collect::<Result<_>>()?;
        Ok(Self {
            message_id: message_id.into(),
            scores,
            predicted_polarity,
            processed_output,
        })
    }
}

/// Scores every message with `bundle`.
pub fn predict(
    bundle: &TrainedModelBundle,
    messages: &[LabeledMessage],
    formula: ProcessedOutputFormula,
) -> Result<Vec<PredictionRecord>> {
    use rayon::prelude::*;
    messages
        .par_iter()
        .map(|m| PredictionRecord::from_scores(m.id.clone(), bundle.score(&m.text)?, formula))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum GoldProvenance {
    Generated,
    Annotated,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldLabel {
    pub message_id: String,
    pub polarities: BTreeMap<TraitDimension, Polarity>,
    pub provenance: GoldProvenance,
}

impl GoldLabel {
    /// Singleton gold for a generated message; `None` when unlabeled.
    pub fn from_message(m: &LabeledMessage) -> Option<GoldLabel> {
        let class = m.class()?;
        Some(GoldLabel {
            message_id: m.id.clone(),
            polarities: BTreeMap::from([(class.trait_dim, class.polarity)]),
            provenance: GoldProvenance::Generated,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AccuracyCell {
    pub correct: usize,
    pub total: usize,
}

impl AccuracyCell {
    pub fn accuracy(&self) -> f64 {
        self.correct as f64 / self.total as f64
    }
}

/// Accuracy of one model on one dataset. Traits without any gold label
/// are absent rather than zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyRow {
    pub model: String,
    pub dataset: String,
    pub cells: BTreeMap<TraitDimension, AccuracyCell>,
}

impl AccuracyRow {
    pub fn accuracy(&self, t: TraitDimension) -> Option<f64> {
        self.cells.get(&t).map(AccuracyCell::accuracy)
    }

    /// Arithmetic mean of the per-trait accuracies present in the row.
    pub fn average(&self) -> Option<f64> {
        if self.cells.is_empty() {
            return None;
        }
        Some(self.cells.values().map(AccuracyCell::accuracy).sum::<f64>() / self.cells.len() as f64)
    }

    /// Accuracy pooled over every (message, trait) judgement.
    pub fn pooled(&self) -> Option<f64> {
        let (c, t) = self
            .cells
            .values()
            .fold((0, 0), |(c, t), cell| (c + cell.correct, t + cell.total));
        (t > 0).then(|| c as f64 / t as f64)
    }
}

/// Per-trait accuracy over the golds accepted by `include`. Each gold
/// contributes to exactly the traits it labels.
pub fn accuracy_by_trait(
    model: &str,
    dataset: &str,
    predictions: &[PredictionRecord],
    golds: &[GoldLabel],
    include: impl Fn(&GoldLabel) -> bool,
) -> Result<AccuracyRow> {
    let by_id: HashMap<&str, &PredictionRecord> = predictions
        .iter()
        .map(|p| (p.message_id.as_str(), p))
        .collect();
    let mut cells: BTreeMap<TraitDimension, AccuracyCell> = BTreeMap::new();
    for gold in golds.iter().filter(|g| include(g)) {
        let pred = by_id.get(gold.message_id.as_str()).ok_or_else(|| {
            Error::Invalid(format!("no prediction for message {}", gold.message_id))
        })?;
        for (t, want) in &gold.polarities {
            let cell = cells.entry(*t).or_insert(AccuracyCell {
                correct: 0,
                total: 0,
            });
            cell.total += 1;
            if pred.predicted_polarity.get(t) == Some(want) {
                cell.correct += 1;
            }
        }
    }
    Ok(AccuracyRow {
        model: model.to_owned(),
        dataset: dataset.to_owned(),
        cells,
    })
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub rows: Vec<AccuracyRow>,
}

fn cell_text(v: Option<f64>, precision: Option<usize>) -> String {
    match (v, precision) {
        (None, _) => String::new(),
        (Some(v), Some(p)) => format!("{v:.p$}"),
        (Some(v), None) => v.to_string(),
    }
}

impl EvaluationReport {
    pub fn csv_header() -> Vec<String> {
        let mut cols = vec!["model".to_owned(), "dataset".to_owned()];
        cols.extend(TraitDimension::ALL.iter().map(|t| t.code().to_owned()));
        cols.push("Avg".into());
        cols.extend(
            TraitDimension::ALL
                .iter()
                .map(|t| format!("n_{}", t.code())),
        );
        cols
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(Self::csv_header())?;
        for row in &self.rows {
            let mut rec = vec![row.model.clone(), row.dataset.clone()];
            rec.extend(
                TraitDimension::ALL
                    .iter()
                    .map(|&t| cell_text(row.accuracy(t), None)),
            );
            rec.push(cell_text(row.average(), None));
            rec.extend(
                TraitDimension::ALL
                    .iter()
                    .map(|t| row.cells.get(t).map_or(0, |c| c.total).to_string()),
            );
            w.write_record(rec)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Invalid(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv is utf-8"))
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut r = csv::Reader::from_reader(text.as_bytes());
        let mut rows = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            let field = |i: usize| rec.get(i).unwrap_or_default();
            let mut cells = BTreeMap::new();
            for (k, t) in TraitDimension::ALL.into_iter().enumerate() {
                let acc = field(2 + k);
                let total: usize = field(8 + k)
                    .parse()
                    .map_err(|_| Error::Invalid(format!("bad count `{}`", field(8 + k))))?;
                if acc.is_empty() || total == 0 {
                    continue;
                }
                let acc: f64 = acc
                    .parse()
                    .map_err(|_| Error::Invalid(format!("bad accuracy `{acc}`")))?;
                cells.insert(
                    t,
                    AccuracyCell {
                        correct: (acc * total as f64).round() as usize,
                        total,
                    },
                );
            }
            rows.push(AccuracyRow {
                model: field(0).to_owned(),
                dataset: field(1).to_owned(),
                cells,
            });
        }
        Ok(Self { rows })
    }

    /// Aligned plain-text table: one line per (model, dataset), columns
    /// EXT AGR OPE CON NEU Avg.
    pub fn render_text(&self, title: &str) -> String {
        let label_width = self
            .rows
            .iter()
            .map(|r| r.model.len() + r.dataset.len() + 3)
            .chain([title.len().min(40), 12])
            .max()
            .unwrap_or(12);
        let mut out = String::new();
        let _ = writeln!(out, "{title}");
        let _ = write!(out, "{:<label_width$}", "");
        for t in TraitDimension::ALL {
            let _ = write!(out, " {:>6}", t.code());
        }
        let _ = writeln!(out, " {:>6}", "Avg");
        for row in &self.rows {
            let label = format!("{} [{}]", row.model, row.dataset);
            let _ = write!(out, "{label:<label_width$}");
            for t in TraitDimension::ALL {
                let _ = write!(out, " {:>6}", cell_text(row.accuracy(t), Some(3)));
            }
            let _ = writeln!(out, " {:>6}", cell_text(row.average(), Some(3)));
        }
        out
    }

    /// Model rows by dataset columns, each cell the row average, plus the
    /// mean across datasets.
    pub fn render_dataset_table(&self, datasets: &[&str]) -> String {
        let mut models: Vec<&str> = Vec::new();
        for r in &self.rows {
            if !models.contains(&r.model.as_str()) {
                models.push(&r.model);
            }
        }
        let width = models.iter().map(|m| m.len()).max().unwrap_or(5).max(5);
        let mut out = String::new();
        let _ = write!(out, "{:<width$}", "Model");
        for d in datasets {
            let _ = write!(out, " {d:>10}");
        }
        let _ = writeln!(out, " {:>10}", "Avg");
        for m in models {
            let _ = write!(out, "{m:<width$}");
            let mut present = Vec::new();
            for d in datasets {
                let v = self
                    .rows
                    .iter()
                    .find(|r| r.model == m && r.dataset == *d)
                    .and_then(AccuracyRow::average);
                if let Some(v) = v {
                    present.push(v);
                }
                let _ = write!(out, " {:>10}", cell_text(v, Some(3)));
            }
            let avg =
                (!present.is_empty()).then(|| present.iter().sum::<f64>() / present.len() as f64);
            let _ = writeln!(out, " {:>10}", cell_text(avg, Some(3)));
        }
        out
    }
}

/// Which difficulty rating is paired with trait `T`'s processed output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DifficultyMode {
    /// The mean difficulty reported for trait `T`.
    #[default]
    PerTrait,
    /// The message's difficulty averaged over all five traits.
    PerMessage,
}

/// Pearson correlation, per trait, between mean annotator difficulty and
/// the processed output over messages with both.
pub fn difficulty_correlation(
    predictions: &[PredictionRecord],
    consensus: &BTreeMap<String, MessageConsensus>,
    mode: DifficultyMode,
) -> Result<BTreeMap<TraitDimension, CorrelationResult>> {
    let paired: Vec<(&PredictionRecord, &MessageConsensus)> = predictions
        .iter()
        .filter_map(|p| consensus.get(&p.message_id).map(|c| (p, c)))
        .collect();
    TraitDimension::ALL
        .into_iter()
        .map(|t| {
            let (difficulty, output): (Vec<f64>, Vec<f64>) = paired
                .iter()
                .map(|(p, c)| {
                    let d = match mode {
                        DifficultyMode::PerTrait => c.mean_difficulty[&t],
                        DifficultyMode::PerMessage => {
                            c.mean_difficulty.values().sum::<f64>() / c.mean_difficulty.len() as f64
                        }
                    };
                    (d, p.processed_output[&t])
                })
                .unzip();
            let r = pearson(&difficulty, &output).map_err(|e| Error::Stats(format!("{t}: {e}")))?;
            Ok((t, r))
        })
        .collect()
}

/// Correlation rows, one per model.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CorrelationTable {
    pub rows: Vec<(String, BTreeMap<TraitDimension, CorrelationResult>)>,
}

impl CorrelationTable {
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["model", "trait", "r", "p", "n", "stars"])?;
        for (model, cells) in &self.rows {
            for (t, c) in cells {
                w.write_record([
                    model.clone(),
                    t.code().to_owned(),
                    c.r.to_string(),
                    c.p_value.to_string(),
                    c.n.to_string(),
                    c.stars().to_owned(),
                ])?;
            }
        }
        let bytes = w.into_inner().map_err(|e| Error::Invalid(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv is utf-8"))
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut r = csv::Reader::from_reader(text.as_bytes());
        let mut table = Self::default();
        for rec in r.records() {
            let rec = rec?;
            let field = |i: usize| rec.get(i).unwrap_or_default();
            let bad =
                |what: &str| Error::Invalid(format!("correlation csv: bad {what} `{}`", field(0)));
            let t: TraitDimension = field(1).parse()?;
            let cell = CorrelationResult {
                r: field(2).parse().map_err(|_| bad("r"))?,
                p_value: field(3).parse().map_err(|_| bad("p"))?,
                n: field(4).parse().map_err(|_| bad("n"))?,
            };
            match table.rows.last_mut() {
                Some((model, cells)) if model == field(0) => {
                    cells.insert(t, cell);
                }
                _ => table
                    .rows
                    .push((field(0).to_owned(), BTreeMap::from([(t, cell)]))),
            }
        }
        Ok(table)
    }

    /// Models as rows, traits as columns, cells like `-.12***`.
    pub fn render_text(&self) -> String {
        let width = self
            .rows
            .iter()
            .map(|(m, _)| m.len())
            .max()
            .unwrap_or(5)
            .max(5);
        let mut out = String::new();
        let _ = write!(out, "{:<width$}", "");
        for t in TraitDimension::ALL {
            let _ = write!(out, " {:>9}", t.code());
        }
        out.push('\n');
        for (model, cells) in &self.rows {
            let _ = write!(out, "{model:<width$}");
            for t in TraitDimension::ALL {
                let cell = cells
                    .get(&t)
                    .map(|c| format!("{}{}", format_coefficient(c.r), c.stars()))
                    .unwrap_or_default();
                let _ = write!(out, " {cell:>9}");
            }
            out.push('\n');
        }
        out.push_str("Note: *** p < .001, ** p < 0.01\n");
        out
    }
}
