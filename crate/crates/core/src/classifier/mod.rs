//! Trait classifiers under three training architectures.
//!
//! * `Together`: one model with a 10-way head (five traits x two poles),
//!   trained with softmax cross-entropy over the single gold class.
//! * `Separate`: five independent binary models, model `T` trained only on
//!   messages labeled with trait `T`. Each carries its own copy of the
//!   fine-tuned encoder projection.
//! * `Adapter`: the backbone stays frozen; five bottleneck adapters with
//!   binary heads are trained on the same per-trait subsets and share one
//!   encoder pass at inference.
//!
//! Every strategy answers the same query: for each trait, the raw
//! (positive, negative) output pair.

mod backbone;
mod bundle_io;
mod nn;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dialogue_gen::LabeledMessage;
use crate::error::{Error, ParseEnumError, Result};
use crate::hashing::derive_seed;
use crate::personas::{Polarity, TraitClass, TraitDimension};

pub use backbone::{
    BackboneConfig, EncoderBackbone, Featurizer, FeaturizerDescriptor, HashedNgramBackbone,
    HashedNgramFeaturizer, NgramConfig,
};
pub use bundle_io::{
    bundle_from_bytes, bundle_to_bytes, load_bundle, load_bundle_with, save_bundle, BUNDLE_MAGIC,
    BUNDLE_VERSION,
};
pub use nn::{Adapter, Dense, OptimizerKind, SparseVec, Tower};

use nn::Optimizer;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum TrainingStrategy {
    Together,
    Separate,
    Adapter,
}

impl TrainingStrategy {
    pub const ALL: [TrainingStrategy; 3] = [
        TrainingStrategy::Together,
        TrainingStrategy::Separate,
        TrainingStrategy::Adapter,
    ];

    pub fn short(self) -> &'static str {
        match self {
            TrainingStrategy::Together => "TO",
            TrainingStrategy::Separate => "SE",
            TrainingStrategy::Adapter => "AT",
        }
    }
}

impl fmt::Display for TrainingStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            TrainingStrategy::Together => "together",
            TrainingStrategy::Separate => "separate",
            TrainingStrategy::Adapter => "adapter",
        };
        f.write_str(s)
    }
}

impl FromStr for TrainingStrategy {
    type Err = ParseEnumError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "together" | "to" => Ok(TrainingStrategy::Together),
            "separate" | "se" | "sp" => Ok(TrainingStrategy::Separate),
            "adapter" | "at" => Ok(TrainingStrategy::Adapter),
            _ => Err(ParseEnumError::new("training strategy", s)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub strategy: TrainingStrategy,
    pub optimizer: OptimizerKind,
    /// Adapter bottleneck is `encoder width / adapter_reduction`.
    pub adapter_reduction: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            batch_size: 32,
            learning_rate: 0.5,
            seed: 0,
            strategy: TrainingStrategy::Adapter,
            optimizer: OptimizerKind::Sgd,
            adapter_reduction: 16,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config(
                "epochs and batch_size must be at least 1".into(),
            ));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        if self.adapter_reduction == 0 {
            return Err(Error::Config("adapter_reduction must be at least 1".into()));
        }
        Ok(())
    }
}

/// Raw (unnormalized) outputs for one trait's two poles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RawTraitScore {
    pub positive: f64,
    pub negative: f64,
}

impl RawTraitScore {
    pub fn new(positive: f64, negative: f64) -> Self {
        Self { positive, negative }
    }

    /// Ties resolve to `Negative`.
    pub fn polarity(&self) -> Polarity {
        if self.positive > self.negative {
            Polarity::Positive
        } else {
            Polarity::Negative
        }
    }
}

pub type TraitScores = BTreeMap<TraitDimension, RawTraitScore>;

/// Per-strategy trained state.
#[derive(Debug, Clone, PartialEq)]
pub enum ScoringState {
    Together(Tower),
    /// One binary tower per trait, canonical trait order.
    Separate(Vec<Tower>),
    /// Frozen encoder projection (absent for projection-free backbones)
    /// and one adapter tower per trait.
    Adapter {
        encoder: Option<Dense>,
        towers: Vec<Tower>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleMetadata {
    pub tool: String,
    pub tool_version: String,
    pub seed: u64,
    pub created_at: String,
}

impl BundleMetadata {
    fn new(seed: u64) -> Self {
        Self {
            tool: "traitgen".into(),
            tool_version: env!("CARGO_PKG_VERSION").into(),
            seed,
            created_at: chrono::Utc::now().to_rfc3339(),
        }
    }
}

#[derive(Clone)]
pub struct TrainedModelBundle {
    pub strategy: TrainingStrategy,
    pub backbone_name: String,
    featurizer: Arc<dyn Featurizer>,
    pub state: ScoringState,
    pub config: TrainConfig,
    /// SHA-256 over the training messages (see [`dataset_fingerprint`]).
    pub fingerprint: String,
    pub metadata: BundleMetadata,
}

impl fmt::Debug for TrainedModelBundle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TrainedModelBundle")
            .field("strategy", &self.strategy)
            .field("backbone_name", &self.backbone_name)
            .field("featurizer", &self.featurizer.descriptor())
            .field("config", &self.config)
            .field("fingerprint", &self.fingerprint)
            .finish_non_exhaustive()
    }
}

impl TrainedModelBundle {
    pub fn featurizer(&self) -> &Arc<dyn Featurizer> {
        &self.featurizer
    }

    /// Output width of the single TOGETHER head, or of each binary head.
    pub fn head_widths(&self) -> Vec<usize> {
        self.towers().iter().map(|t| t.head.outputs).collect()
    }

    pub fn towers(&self) -> Vec<&Tower> {
        match &self.state {
            ScoringState::Together(t) => vec![t],
            ScoringState::Separate(ts) => ts.iter().collect(),
            ScoringState::Adapter { towers, .. } => towers.iter().collect(),
        }
    }

    /// Parameters updated during training.
    pub fn trainable_param_count(&self) -> usize {
        self.towers().iter().map(|t| t.param_count()).sum()
    }

    /// Every stored parameter, frozen ones included.
    pub fn stored_param_count(&self) -> usize {
        let frozen = match &self.state {
            ScoringState::Adapter {
                encoder: Some(e), ..
            } => e.param_count(),
            _ => 0,
        };
        frozen + self.trainable_param_count()
    }

    pub fn frozen_encoder(&self) -> Option<&Dense> {
        match &self.state {
            ScoringState::Adapter { encoder, .. } => encoder.as_ref(),
            _ => None,
        }
    }

    fn features(&self, text: &str) -> Result<SparseVec> {
        if text.trim().is_empty() {
            return Err(Error::Invalid("cannot score empty text".into()));
        }
        Ok(self.featurizer.featurize(text))
    }

    /// Raw scores for all five traits. For ADAPTER bundles the encoder runs
    /// once and all adapters read the shared hidden state through one fused
    /// down-projection.
    pub fn score(&self, text: &str) -> Result<TraitScores> {
        let x = self.features(text)?;
        let scores = match &self.state {
            ScoringState::Together(tower) => {
                let z = tower.logits(&x);
                TraitDimension::ALL
                    .into_iter()
                    .map(|t| {
                        let pos = TraitClass::new(t, Polarity::Positive).index();
                        let neg = TraitClass::new(t, Polarity::Negative).index();
                        (t, RawTraitScore::new(z[pos], z[neg]))
                    })
                    .collect()
            }
            ScoringState::Separate(towers) => TraitDimension::ALL
                .into_iter()
                .zip(towers)
                .map(|(t, tower)| {
                    let z = tower.logits(&x);
                    (t, RawTraitScore::new(z[0], z[1]))
                })
                .collect(),
            ScoringState::Adapter { encoder, towers } => {
                let hidden = match encoder {
                    Some(e) => e.forward_sparse(&x),
                    None => x.to_dense(self.featurizer.input_dim()),
                };
                parallel_adapter_scores(&hidden, towers)
            }
        };
        Ok(scores)
    }

    /// ADAPTER only: scores each trait by running the full encoder, adapter
    /// and head path for that trait alone.
    pub fn score_sequential(&self, text: &str) -> Result<TraitScores> {
        let ScoringState::Adapter { encoder, towers } = &self.state else {
            return Err(Error::Invalid(
                "sequential adapter scoring needs an ADAPTER bundle".into(),
            ));
        };
        let x = self.features(text)?;
        Ok(TraitDimension::ALL
            .into_iter()
            .zip(towers)
            .map(|(t, tower)| {
                let standalone = Tower {
                    encoder: encoder.clone(),
                    adapter: tower.adapter.clone(),
                    head: tower.head.clone(),
                };
                let z = standalone.logits(&x);
                (t, RawTraitScore::new(z[0], z[1]))
            })
            .collect())
    }

    /// True when `records` hash to the fingerprint recorded at training time.
    pub fn matches_training_data(&self, records: &[LabeledMessage]) -> bool {
        dataset_fingerprint(records) == self.fingerprint
    }
}

/// Stacks every adapter's down-projection into one matrix, applies it to
/// the shared hidden state, then finishes each adapter and head on its
/// slice of the bottleneck.
fn parallel_adapter_scores(hidden: &[f64], towers: &[Tower]) -> TraitScores {
    let adapters: Vec<&Adapter> = towers
        .iter()
        .map(|t| t.adapter.as_ref().expect("adapter tower"))
        .collect();
    let widths: Vec<usize> = adapters.iter().map(|a| a.down.outputs).collect();
    let total: usize = widths.iter().sum();
    let mut fused = Dense::zeros(hidden.len(), total);
    let mut offset = 0;
    for (a, w) in adapters.iter().zip(&widths) {
        for i in 0..hidden.len() {
            fused.weights[i * total + offset..i * total + offset + w]
                .copy_from_slice(&a.down.weights[i * w..(i + 1) * w]);
        }
        fused.bias[offset..offset + w].copy_from_slice(&a.down.bias);
        offset += w;
    }
    let bottleneck = nn::relu(fused.forward(hidden));

    let mut offset = 0;
    TraitDimension::ALL
        .into_iter()
        .zip(towers.iter().zip(adapters).zip(widths))
        .map(|(t, ((tower, a), w))| {
            let delta = a.up.forward(&bottleneck[offset..offset + w]);
            offset += w;
            let adapted: Vec<f64> = hidden.iter().zip(delta).map(|(h, d)| h + d).collect();
            let z = tower.head.forward(&adapted);
            (t, RawTraitScore::new(z[0], z[1]))
        })
        .collect()
}

/// SHA-256 over `id \t text \t trait \t polarity` lines sorted by id.
pub fn dataset_fingerprint(records: &[LabeledMessage]) -> String {
    let mut lines: Vec<String> = records
        .iter()
        .map(|m| {
            format!(
                "{}\t{}\t{}\t{}",
                m.id,
                m.text,
                m.trait_dim.map_or("-", TraitDimension::code),
                m.polarity.map_or("-", Polarity::code)
            )
        })
        .collect();
    lines.sort();
    let mut hasher = Sha256::new();
    for l in lines {
        hasher.update(l.as_bytes());
        hasher.update(b"\n");
    }
    hex_string(&hasher.finalize())
}

fn hex_string(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn validate_dataset(dataset: &[LabeledMessage]) -> Result<Vec<TraitClass>> {
    if dataset.is_empty() {
        return Err(Error::Invalid("training dataset is empty".into()));
    }
    let mut classes = Vec::with_capacity(dataset.len());
    for m in dataset {
        if m.text.trim().is_empty() {
            return Err(Error::Invalid(format!("message {} has empty text", m.id)));
        }
        classes.push(
            m.class()
                .ok_or_else(|| Error::Invalid(format!("message {} has no label", m.id)))?,
        );
    }
    let missing: Vec<String> = TraitClass::all()
        .filter(|c| !classes.contains(c))
        .map(|c| c.to_string())
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingClasses(missing.join(", ")));
    }
    Ok(classes)
}

/// Minibatch training of one tower; returns the mean loss per epoch.
fn fit_tower(
    tower: &mut Tower,
    inputs: &[&SparseVec],
    labels: &[usize],
    config: &TrainConfig,
    seed: u64,
) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "shuffle"));
    let mut optimizer = Optimizer::new(config.optimizer, config.learning_rate, tower);
    let mut grad = tower.grad();
    let mut order: Vec<usize> = (0..inputs.len()).collect();
    let mut losses = Vec::with_capacity(config.epochs);
    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in order.chunks(config.batch_size) {
            grad.clear();
            for &i in batch {
                total += tower.accumulate(inputs[i], labels[i], &mut grad);
            }
            optimizer.apply(tower, &grad, batch.len());
        }
        losses.push(total / inputs.len() as f64);
    }
    losses
}

fn model_seed(config: &TrainConfig, label: &str) -> u64 {
    derive_seed(config.seed, label)
}

/// Trains one binary tower for `trait_dim` on the messages of that trait.
fn train_binary(
    trait_dim: TraitDimension,
    classes: &[TraitClass],
    features: &[SparseVec],
    encoder: Option<&Dense>,
    adapter_input_dim: Option<usize>,
    config: &TrainConfig,
    seed: u64,
) -> Tower {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "init"));
    let (inputs, labels): (Vec<&SparseVec>, Vec<usize>) = classes
        .iter()
        .zip(features)
        .filter(|(c, _)| c.trait_dim == trait_dim)
        .map(|(c, x)| (x, usize::from(c.polarity == Polarity::Negative)))
        .unzip();
    let mut tower = match adapter_input_dim {
        Some(dim) => {
            let bottleneck = (dim / config.adapter_reduction).max(1);
            Tower {
                encoder: None,
                adapter: Some(Adapter::new(dim, bottleneck, &mut rng)),
                head: Dense::xavier(dim, 2, &mut rng),
            }
        }
        None => {
            // projection-free inputs are dense at full width
            let width = encoder.map_or(features[0].nnz(), |e| e.outputs);
            Tower {
                encoder: encoder.cloned(),
                adapter: None,
                head: Dense::xavier(width, 2, &mut rng),
            }
        }
    };
    let losses = fit_tower(&mut tower, &inputs, &labels, config, seed);
    log::debug!(
        "{trait_dim}: {} examples, final loss {:.4}",
        inputs.len(),
        losses.last().copied().unwrap_or_default()
    );
    tower
}

/// Featurizes every message. Projection-free backbones feed their dense
/// embeddings straight to the heads, so those are expanded to full width.
fn prepare_features(backbone: &dyn EncoderBackbone, dataset: &[LabeledMessage]) -> Vec<SparseVec> {
    let featurizer = backbone.featurizer();
    let dim = featurizer.input_dim();
    let dense = backbone.projection().is_none();
    dataset
        .par_iter()
        .map(|m| {
            let x = featurizer.featurize(&m.text);
            if dense {
                SparseVec::from_dense(&x.to_dense(dim))
            } else {
                x
            }
        })
        .collect()
}

/// Frozen-encoder hidden states, as dense-valued sparse vectors.
fn adapter_inputs(encoder: Option<&Dense>, features: Vec<SparseVec>) -> Vec<SparseVec> {
    match encoder {
        Some(e) => features
            .par_iter()
            .map(|x| SparseVec::from_dense(&e.forward_sparse(x)))
            .collect(),
        None => features,
    }
}

pub fn train(
    dataset: &[LabeledMessage],
    backbone: &dyn EncoderBackbone,
    config: &TrainConfig,
) -> Result<TrainedModelBundle> {
    config.validate()?;
    let classes = validate_dataset(dataset)?;
    let featurizer = backbone.featurizer();
    let features = prepare_features(backbone, dataset);
    let projection = backbone.projection();
    let input_dim = featurizer.input_dim();

    let state = match config.strategy {
        TrainingStrategy::Together => {
            let seed = model_seed(config, "together");
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "init"));
            let width = projection.map_or(input_dim, |p| p.outputs);
            let mut tower = Tower {
                encoder: projection.cloned(),
                adapter: None,
                head: Dense::xavier(width, 10, &mut rng),
            };
            let inputs: Vec<&SparseVec> = features.iter().collect();
            let labels: Vec<usize> = classes.iter().map(|c| c.index()).collect();
            fit_tower(&mut tower, &inputs, &labels, config, seed);
            ScoringState::Together(tower)
        }
        TrainingStrategy::Separate => ScoringState::Separate(
            TraitDimension::ALL
                .par_iter()
                .map(|&t| {
                    train_binary(
                        t,
                        &classes,
                        &features,
                        projection,
                        None,
                        config,
                        model_seed(config, t.code()),
                    )
                })
                .collect(),
        ),
        TrainingStrategy::Adapter => {
            let hidden = adapter_inputs(projection, features);
            let dim = projection.map_or(input_dim, |p| p.outputs);
            ScoringState::Adapter {
                encoder: projection.cloned(),
                towers: TraitDimension::ALL
                    .par_iter()
                    .map(|&t| {
                        train_binary(
                            t,
                            &classes,
                            &hidden,
                            None,
                            Some(dim),
                            config,
                            model_seed(config, t.code()),
                        )
                    })
                    .collect(),
            }
        }
    };

    Ok(TrainedModelBundle {
        strategy: config.strategy,
        backbone_name: backbone.name().to_owned(),
        featurizer,
        state,
        config: config.clone(),
        fingerprint: dataset_fingerprint(dataset),
        metadata: BundleMetadata::new(config.seed),
    })
}

/// Retrains the model for one trait of a SEPARATE or ADAPTER bundle with a
/// different seed, leaving the other four models untouched.
pub fn retrain_trait(
    bundle: &TrainedModelBundle,
    dataset: &[LabeledMessage],
    backbone: &dyn EncoderBackbone,
    trait_dim: TraitDimension,
    seed: u64,
) -> Result<TrainedModelBundle> {
    let classes = validate_dataset(dataset)?;
    let features = prepare_features(backbone, dataset);
    let config = &bundle.config;
    let seed = derive_seed(seed, trait_dim.code());
    let mut out = bundle.clone();
    match &mut out.state {
        ScoringState::Separate(towers) => {
            towers[trait_dim.index()] = train_binary(
                trait_dim,
                &classes,
                &features,
                backbone.projection(),
                None,
                config,
                seed,
            );
        }
        ScoringState::Adapter { encoder, towers } => {
            let dim = encoder
                .as_ref()
                .map_or(backbone.featurizer().input_dim(), |e| e.outputs);
            let hidden = adapter_inputs(encoder.as_ref(), features);
            towers[trait_dim.index()] =
                train_binary(trait_dim, &classes, &hidden, None, Some(dim), config, seed);
        }
        ScoringState::Together(_) => {
            return Err(Error::Invalid(
                "a TOGETHER bundle has no per-trait model to retrain".into(),
            ))
        }
    }
    Ok(out)
}
