use std::collections::BTreeMap;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::nn::{Dense, SparseVec};
use crate::hashing::{derive_seed, fnv1a};

/// Fixed, non-trainable text featurization.
pub trait Featurizer: Send + Sync {
    fn name(&self) -> &str;
    fn input_dim(&self) -> usize;
    fn featurize(&self, text: &str) -> SparseVec;
    /// Serializable description sufficient to rebuild the featurizer.
    /// Plug-ins report `External` and must be re-attached on bundle load.
    fn descriptor(&self) -> FeaturizerDescriptor;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FeaturizerDescriptor {
    HashedNgram(NgramConfig),
    External { name: String, input_dim: usize },
}

/// A text encoder: a fixed featurizer followed by an optional affine
/// projection. Backbones with a projection can be fine-tuned; those
/// without (e.g. precomputed transformer embeddings) are always frozen.
pub trait EncoderBackbone: Send + Sync {
    fn name(&self) -> &str;
    fn featurizer(&self) -> Arc<dyn Featurizer>;
    fn projection(&self) -> Option<&Dense>;

    fn is_trainable(&self) -> bool {
        self.projection().is_some()
    }

    fn output_dim(&self) -> usize {
        self.projection()
            .map_or_else(|| self.featurizer().input_dim(), |p| p.outputs)
    }

    fn encode(&self, text: &str) -> Vec<f64> {
        let features = self.featurizer().featurize(text);
        match self.projection() {
            Some(p) => p.forward_sparse(&features),
            None => features.to_dense(self.featurizer().input_dim()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NgramConfig {
    /// Hashed feature space size.
    pub dim: usize,
    pub min_n: usize,
    pub max_n: usize,
    pub seed: u64,
}

impl Default for NgramConfig {
    fn default() -> Self {
        Self {
            dim: 1024,
            min_n: 2,
            max_n: 4,
            seed: 0,
        }
    }
}

/// Signed feature hashing of character n-grams within space-padded,
/// lower-cased words; the count vector is L2-normalized.
#[derive(Debug, Clone)]
pub struct HashedNgramFeaturizer {
    config: NgramConfig,
}

impl HashedNgramFeaturizer {
    pub fn new(config: NgramConfig) -> Self {
        assert!(config.dim > 0 && config.min_n >= 1 && config.min_n <= config.max_n);
        Self { config }
    }

    pub fn config(&self) -> &NgramConfig {
        &self.config
    }
}

impl Featurizer for HashedNgramFeaturizer {
    fn name(&self) -> &str {
        "hashed-char-ngram"
    }

    fn input_dim(&self) -> usize {
        self.config.dim
    }

    fn featurize(&self, text: &str) -> SparseVec {
        let mut counts: BTreeMap<u32, f64> = BTreeMap::new();
        let lowered = text.to_lowercase();
        let mut buf = String::new();
        for word in lowered.split_whitespace() {
            let chars: Vec<char> = std::iter::once(' ')
                .chain(word.chars())
                .chain(std::iter::once(' '))
                .collect();
            for n in self.config.min_n..=self.config.max_n {
                for gram in chars.windows(n) {
                    buf.clear();
                    buf.extend(gram);
                    let h = fnv1a(self.config.seed, buf.as_bytes());
                    let index = (h % self.config.dim as u64) as u32;
                    let sign = if h >> 63 == 0 { 1.0 } else { -1.0 };
                    *counts.entry(index).or_insert(0.0) += sign;
                }
            }
        }
        counts.retain(|_, v| *v != 0.0);
        let norm = counts.values().map(|v| v * v).sum::<f64>().sqrt();
        let (indices, values) = counts
            .into_iter()
            .map(|(i, v)| (i, if norm > 0.0 { v / norm } else { v }))
            .unzip();
        SparseVec { indices, values }
    }

    fn descriptor(&self) -> FeaturizerDescriptor {
        FeaturizerDescriptor::HashedNgram(self.config.clone())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BackboneConfig {
    pub ngram: NgramConfig,
    pub hidden: usize,
    pub seed: u64,
}

impl Default for BackboneConfig {
    fn default() -> Self {
        Self {
            ngram: NgramConfig::default(),
            hidden: 128,
            seed: 0,
        }
    }
}

/// Reference backbone: hashed character n-grams followed by a seeded
/// affine projection to `hidden` dimensions.
#[derive(Clone)]
pub struct HashedNgramBackbone {
    featurizer: Arc<HashedNgramFeaturizer>,
    projection: Dense,
}

impl HashedNgramBackbone {
    /// Projection weights are uniform with variance `1 / hidden`, which
    /// approximately preserves the norm of the unit-length feature vector.
    pub fn new(config: &BackboneConfig) -> Self {
        let featurizer = Arc::new(HashedNgramFeaturizer::new(config.ngram.clone()));
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, "backbone"));
        let limit = (3.0 / config.hidden as f64).sqrt();
        let projection = Dense::uniform(config.ngram.dim, config.hidden, limit, &mut rng);
        Self {
            featurizer,
            projection,
        }
    }
}

impl EncoderBackbone for HashedNgramBackbone {
    fn name(&self) -> &str {
        "hashed-ngram"
    }

    fn featurizer(&self) -> Arc<dyn Featurizer> {
        self.featurizer.clone()
    }

    fn projection(&self) -> Option<&Dense> {
        Some(&self.projection)
    }
}
