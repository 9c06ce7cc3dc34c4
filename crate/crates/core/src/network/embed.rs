//! Element and constraint attribute features.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{LayoutError, Result};
use crate::model::Gui;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmbeddingConfig {
    /// Width of one coordinate lookup.
    pub coord_dim: usize,
    pub node_dim: usize,
    pub type_dim: usize,
    pub text_dim: usize,
    pub appearance_dim: usize,
    /// Strings seen fewer times than this in the training split map to UNK.
    pub unk_threshold: u64,
    /// Width of the learned attribute slot of both group families.
    pub group_slot: usize,
    /// Largest coordinate the lookup tables can index.
    pub max_coord: usize,
}

impl Default for EmbeddingConfig {
    fn default() -> Self {
        EmbeddingConfig {
            coord_dim: 16,
            node_dim: 256,
            type_dim: 16,
            text_dim: 64,
            appearance_dim: 64,
            unk_threshold: 3,
            group_slot: 8,
            max_coord: 2560,
        }
    }
}

impl EmbeddingConfig {
    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("coord_dim", self.coord_dim),
            ("node_dim", self.node_dim),
            ("type_dim", self.type_dim),
            ("text_dim", self.text_dim),
            ("appearance_dim", self.appearance_dim),
            ("group_slot", self.group_slot),
            ("max_coord", self.max_coord),
        ];
        for (name, v) in dims {
            if v == 0 {
                return Err(LayoutError::Validation(format!("{name} must be >= 1")));
            }
        }
        Ok(())
    }

    pub fn position_width(&self) -> usize {
        4 * self.coord_dim
    }

    pub fn size_width(&self) -> usize {
        2 * self.coord_dim
    }

    /// Width of the raw element attribute row fed to the node projection.
    pub fn element_input_width(&self) -> usize {
        self.position_width() + self.size_width() + self.appearance_dim + self.text_dim + self.type_dim + 2
    }

    pub fn table_rows(&self) -> usize {
        self.max_coord + 1
    }
}

/// Maps element text and appearance to fixed-width vectors.
pub trait FeatureProvider: Send + Sync {
    fn text(&self, text: &str) -> Vec<f64>;
    /// Vector used for strings below the frequency threshold.
    fn unk(&self) -> Vec<f64>;
    fn appearance(&self, raw: &[f64]) -> Vec<f64>;
}

/// Default provider: signed feature hashing of lowercase word tokens, and
/// bucket folding for appearance vectors of any width.
#[derive(Debug, Clone, Copy)]
pub struct HashedFeatures {
    pub text_dim: usize,
    pub appearance_dim: usize,
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

fn l2_normalize(v: &mut [f64]) {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
}

impl HashedFeatures {
    fn hash_tokens<'a>(&self, tokens: impl Iterator<Item = &'a str>) -> Vec<f64> {
        let mut v = vec![0.0; self.text_dim];
        for tok in tokens {
            let h = fnv1a(tok.as_bytes());
            let sign = if h >> 63 == 0 { 1.0 } else { -1.0 };
            v[(h % self.text_dim as u64) as usize] += sign;
        }
        l2_normalize(&mut v);
        v
    }
}

impl FeatureProvider for HashedFeatures {
    fn text(&self, text: &str) -> Vec<f64> {
        let lower = text.to_lowercase();
        self.hash_tokens(lower.split(|c: char| !c.is_alphanumeric()).filter(|t| !t.is_empty()))
    }

    fn unk(&self) -> Vec<f64> {
        self.hash_tokens(std::iter::once("[UNK]"))
    }

    fn appearance(&self, raw: &[f64]) -> Vec<f64> {
        if raw.len() == self.appearance_dim {
            return raw.to_vec();
        }
        let mut v = vec![0.0; self.appearance_dim];
        for (i, x) in raw.iter().enumerate() {
            v[i % self.appearance_dim] += x;
        }
        v
    }
}

/// Per-string text frequencies of a training split.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CorpusStats {
    pub counts: BTreeMap<String, u64>,
}

impl CorpusStats {
    pub fn from_guis<'a>(guis: impl IntoIterator<Item = &'a Gui>) -> Self {
        let mut counts = BTreeMap::new();
        for g in guis {
            for e in &g.elements {
                if let Some(t) = &e.text {
                    *counts.entry(t.clone()).or_insert(0) += 1;
                }
            }
        }
        CorpusStats { counts }
    }

    pub fn count(&self, s: &str) -> u64 {
        self.counts.get(s).copied().unwrap_or(0)
    }
}

/// Text feature with the UNK rule applied; absent text is a zero vector.
pub fn embed_text(
    text: Option<&str>,
    stats: &CorpusStats,
    threshold: u64,
    provider: &dyn FeatureProvider,
    dim: usize,
) -> Result<Vec<f64>> {
    let v = match text {
        None => vec![0.0; dim],
        Some(s) if stats.count(s) < threshold => provider.unk(),
        Some(s) => provider.text(s),
    };
    if v.len() != dim {
        return Err(LayoutError::Shape(format!("text feature width {} != {dim}", v.len())));
    }
    Ok(v)
}

/// Sinusoidal initial values for a coordinate lookup table.
pub fn sinusoid_table(rows: usize, dim: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(rows * dim);
    for p in 0..rows {
        for c in 0..dim {
            let i = (c / 2) as f64;
            let angle = p as f64 / 10000f64.powf(2.0 * i / dim as f64);
            out.push(if c % 2 == 0 { angle.sin() } else { angle.cos() });
        }
    }
    out
}
