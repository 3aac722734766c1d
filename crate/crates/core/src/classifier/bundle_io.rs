//! Bundle container format (version 1), little-endian throughout:
//!
//! ```text
//! magic        8 bytes   "TGBUNDLE"
//! version      u32
//! header_len   u64
//! header       header_len bytes of UTF-8 JSON
//! blocks       f64 values, in the order listed by header.blocks;
//!              each dense layer contributes weights (inputs*outputs,
//!              input-major) followed by bias (outputs)
//! checksum     32 bytes, SHA-256 of every preceding byte
//! ```
//!
//! The header holds strategy, backbone name, featurizer descriptor, train
//! config, training-data fingerprint, metadata and the block table
//! (`{"name", "inputs", "outputs"}` per layer). Block names are `encoder`
//! (frozen ADAPTER encoder), `together.encoder`, `together.head`, and for
//! each trait code `T`: `T.encoder`, `T.adapter.down`, `T.adapter.up`,
//! `T.head`.

use std::collections::HashMap;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::nn::Adapter;
use super::{
    BundleMetadata, Dense, Featurizer, FeaturizerDescriptor, HashedNgramFeaturizer, ScoringState,
    Tower, TrainConfig, TrainedModelBundle, TrainingStrategy,
};
use crate::datastore::write_atomic;
use crate::error::{Error, Result};
use crate::personas::TraitDimension;

pub const BUNDLE_MAGIC: &[u8; 8] = b"TGBUNDLE";
pub const BUNDLE_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct BlockEntry {
    name: String,
    inputs: usize,
    outputs: usize,
}

#[derive(Serialize, Deserialize)]
struct Header {
    strategy: TrainingStrategy,
    backbone: String,
    featurizer: FeaturizerDescriptor,
    config: TrainConfig,
    fingerprint: String,
    metadata: BundleMetadata,
    blocks: Vec<BlockEntry>,
}

fn tower_blocks<'a>(prefix: &str, tower: &'a Tower, out: &mut Vec<(String, &'a Dense)>) {
    if let Some(e) = &tower.encoder {
        out.push((format!("{prefix}.encoder"), e));
    }
    if let Some(a) = &tower.adapter {
        out.push((format!("{prefix}.adapter.down"), &a.down));
        out.push((format!("{prefix}.adapter.up"), &a.up));
    }
    out.push((format!("{prefix}.head"), &tower.head));
}

fn blocks(state: &ScoringState) -> Vec<(String, &Dense)> {
    let mut out = Vec::new();
    match state {
        ScoringState::Together(t) => tower_blocks("together", t, &mut out),
        ScoringState::Separate(towers) => {
            for (t, tower) in TraitDimension::ALL.iter().zip(towers) {
                tower_blocks(t.code(), tower, &mut out);
            }
        }
        ScoringState::Adapter { encoder, towers } => {
            if let Some(e) = encoder {
                out.push(("encoder".into(), e));
            }
            for (t, tower) in TraitDimension::ALL.iter().zip(towers) {
                tower_blocks(t.code(), tower, &mut out);
            }
        }
    }
    out
}

pub fn bundle_to_bytes(bundle: &TrainedModelBundle) -> Vec<u8> {
    let layers = blocks(&bundle.state);
    let header = Header {
        strategy: bundle.strategy,
        backbone: bundle.backbone_name.clone(),
        featurizer: bundle.featurizer.descriptor(),
        config: bundle.config.clone(),
        fingerprint: bundle.fingerprint.clone(),
        metadata: bundle.metadata.clone(),
        blocks: layers
            .iter()
            .map(|(name, d)| BlockEntry {
                name: name.clone(),
                inputs: d.inputs,
                outputs: d.outputs,
            })
            .collect(),
    };
    let header = serde_json::to_vec(&header).expect("header serializes");
    let mut out = Vec::new();
    out.extend_from_slice(BUNDLE_MAGIC);
    out.extend_from_slice(&BUNDLE_VERSION.to_le_bytes());
    out.extend_from_slice(&(header.len() as u64).to_le_bytes());
    out.extend_from_slice(&header);
    for (_, d) in &layers {
        for v in d.weights.iter().chain(&d.bias) {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let digest = Sha256::digest(&out);
    out.extend_from_slice(&digest);
    out
}

pub fn save_bundle(bundle: &TrainedModelBundle, path: &Path) -> Result<()> {
    write_atomic(path, &bundle_to_bytes(bundle))
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Bundle("unexpected end of bundle".into()))?;
        let slice = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(slice)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(
            self.take(4)?.try_into().expect("4 bytes"),
        ))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(
            self.take(8)?.try_into().expect("8 bytes"),
        ))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.take(
            n.checked_mul(8)
                .ok_or_else(|| Error::Bundle("block too large".into()))?,
        )?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }
}

fn featurizer_from(descriptor: &FeaturizerDescriptor) -> Result<Arc<dyn Featurizer>> {
    match descriptor {
        FeaturizerDescriptor::HashedNgram(config) => {
            Ok(Arc::new(HashedNgramFeaturizer::new(config.clone())))
        }
        FeaturizerDescriptor::External { name, .. } => Err(Error::Bundle(format!(
            "bundle uses external featurizer `{name}`; load it with load_bundle_with"
        ))),
    }
}

fn take_tower(prefix: &str, layers: &mut HashMap<String, Dense>) -> Result<Tower> {
    let encoder = layers.remove(&format!("{prefix}.encoder"));
    let down = layers.remove(&format!("{prefix}.adapter.down"));
    let up = layers.remove(&format!("{prefix}.adapter.up"));
    let adapter = match (down, up) {
        (Some(down), Some(up)) => Some(Adapter { down, up }),
        (None, None) => None,
        _ => return Err(Error::Bundle(format!("{prefix}: incomplete adapter"))),
    };
    let head = layers
        .remove(&format!("{prefix}.head"))
        .ok_or_else(|| Error::Bundle(format!("{prefix}: missing head")))?;
    Ok(Tower {
        encoder,
        adapter,
        head,
    })
}

fn parse(bytes: &[u8], featurizer: Option<Arc<dyn Featurizer>>) -> Result<TrainedModelBundle> {
    if bytes.len() < BUNDLE_MAGIC.len() + 4 + 8 + 32 {
        return Err(Error::Bundle("file too short to be a bundle".into()));
    }
    let (body, checksum) = bytes.split_at(bytes.len() - 32);
    let mut r = Reader {
        bytes: body,
        pos: 0,
    };
    if r.take(8)? != BUNDLE_MAGIC {
        return Err(Error::Bundle("not a bundle file (bad magic)".into()));
    }
    let version = r.u32()?;
    if version != BUNDLE_VERSION {
        return Err(Error::Bundle(format!(
            "unsupported bundle version {version} (expected {BUNDLE_VERSION})"
        )));
    }
    if Sha256::digest(body).as_slice() != checksum {
        return Err(Error::Bundle(
            "checksum mismatch: file is truncated or corrupted".into(),
        ));
    }
    let header_len = r.u64()? as usize;
    let header: Header = serde_json::from_slice(r.take(header_len)?)
        .map_err(|e| Error::Bundle(format!("bad header: {e}")))?;

    let mut layers = HashMap::new();
    for entry in &header.blocks {
        let weights = r.f64s(entry.inputs * entry.outputs)?;
        let bias = r.f64s(entry.outputs)?;
        layers.insert(
            entry.name.clone(),
            Dense {
                inputs: entry.inputs,
                outputs: entry.outputs,
                weights,
                bias,
            },
        );
    }
    if r.pos != body.len() {
        return Err(Error::Bundle(
            "trailing bytes after parameter blocks".into(),
        ));
    }

    let state = match header.strategy {
        TrainingStrategy::Together => ScoringState::Together(take_tower("together", &mut layers)?),
        TrainingStrategy::Separate => ScoringState::Separate(
            TraitDimension::ALL
                .iter()
                .map(|t| take_tower(t.code(), &mut layers))
                .collect::<Result<_>>()?,
        ),
        TrainingStrategy::Adapter => ScoringState::Adapter {
            encoder: layers.remove("encoder"),
            towers: TraitDimension::ALL
                .iter()
                .map(|t| take_tower(t.code(), &mut layers))
                .collect::<Result<_>>()?,
        },
    };
    if let Some(extra) = layers.keys().next() {
        return Err(Error::Bundle(format!("unexpected block `{extra}`")));
    }

    let featurizer = match featurizer {
        Some(f) => {
            if f.input_dim() != descriptor_dim(&header.featurizer) {
                return Err(Error::Bundle(
                    "attached featurizer has the wrong dimension".into(),
                ));
            }
            f
        }
        None => featurizer_from(&header.featurizer)?,
    };
    Ok(TrainedModelBundle {
        strategy: header.strategy,
        backbone_name: header.backbone,
        featurizer,
        state,
        config: header.config,
        fingerprint: header.fingerprint,
        metadata: header.metadata,
    })
}

fn descriptor_dim(d: &FeaturizerDescriptor) -> usize {
    match d {
        FeaturizerDescriptor::HashedNgram(c) => c.dim,
        FeaturizerDescriptor::External { input_dim, .. } => *input_dim,
    }
}

pub fn bundle_from_bytes(bytes: &[u8]) -> Result<TrainedModelBundle> {
    parse(bytes, None)
}

pub fn load_bundle(path: &Path) -> Result<TrainedModelBundle> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    parse(&bytes, None)
}

/// Loads a bundle whose featurizer is a plug-in, re-attaching `featurizer`.
pub fn load_bundle_with(
    path: &Path,
    featurizer: Arc<dyn Featurizer>,
) -> Result<TrainedModelBundle> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    parse(&bytes, Some(featurizer))
}
