//! Shared text representation.
//!
//! The surrogate encoder hashes word and character n-grams into a sparse,
//! L2-normalized feature vector and projects it through a trainable dense
//! matrix. The passthrough encoder returns embeddings computed elsewhere.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::Sample;
use crate::error::{Error, Result};
use crate::tensor::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EncoderMode {
    Surrogate,
    Passthrough,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderConfig {
    pub mode: EncoderMode,
    pub dim: usize,
    pub hash_buckets: usize,
    pub word_ngrams: Vec<usize>,
    pub char_ngrams: Vec<usize>,
    pub max_tokens: usize,
    pub seed: u64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            mode: EncoderMode::Surrogate,
            dim: 64,
            hash_buckets: 1 << 14,
            word_ngrams: vec![1, 2],
            char_ngrams: vec![3, 4, 5],
            max_tokens: 256,
            seed: 0,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Vec<String> {
        let mut problems = Vec::new();
        if self.dim == 0 {
            problems.push("encoder.dim must be >= 1".to_string());
        }
        if self.max_tokens == 0 {
            problems.push("encoder.max_tokens must be >= 1".to_string());
        }
        if self.mode == EncoderMode::Surrogate {
            if self.hash_buckets < self.dim {
                problems.push("encoder.hash_buckets must be >= encoder.dim".to_string());
            }
            if self.hash_buckets > u32::MAX as usize {
                problems.push("encoder.hash_buckets must fit in 32 bits".to_string());
            }
            if self.word_ngrams.is_empty() && self.char_ngrams.is_empty() {
                problems.push("encoder needs at least one n-gram order".to_string());
            }
            if self.word_ngrams.iter().chain(&self.char_ngrams).any(|&n| n == 0) {
                problems.push("n-gram orders must be >= 1".to_string());
            }
        }
        problems
    }
}

/// Whitespace tokenization, lowercased, truncated to `max_tokens`.
pub fn tokenize(text: &str, max_tokens: usize) -> Vec<String> {
    text.split_whitespace()
        .take(max_tokens)
        .map(str::to_lowercase)
        .collect()
}

/// Sparse feature vector sorted by bucket index.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FeatureVector {
    pub entries: Vec<(u32, f64)>,
}

impl FeatureVector {
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn norm(&self) -> f64 {
        self.entries.iter().map(|(_, v)| v * v).sum::<f64>().sqrt()
    }

    pub fn scaled(&self, alpha: f64) -> FeatureVector {
        FeatureVector {
            entries: self.entries.iter().map(|&(i, v)| (i, alpha * v)).collect(),
        }
    }
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seeded 64-bit hash: FNV-1a over the bytes, finalized with splitmix64.
pub fn seeded_hash(bytes: &[u8], seed: u64) -> u64 {
    let mut h = FNV_OFFSET ^ splitmix64(seed);
    for b in bytes {
        h ^= *b as u64;
        h = h.wrapping_mul(FNV_PRIME);
    }
    splitmix64(h)
}

/// Hashed word and character n-gram counts with sign hashing, L2-normalized.
pub fn hash_features(tokens: &[String], cfg: &EncoderConfig) -> FeatureVector {
    let mut acc: BTreeMap<u32, f64> = BTreeMap::new();
    let buckets = cfg.hash_buckets as u64;
    let mut add = |feature: &str| {
        let h = seeded_hash(feature.as_bytes(), cfg.seed);
        let bucket = ((h & 0xffff_ffff) % buckets) as u32;
        let sign = if h >> 63 == 1 { -1.0 } else { 1.0 };
        *acc.entry(bucket).or_insert(0.0) += sign;
    };

    let mut buf = String::new();
    for &n in &cfg.word_ngrams {
        for window in tokens.windows(n) {
            buf.clear();
            buf.push_str("w:");
            buf.push_str(&window.join(" "));
            add(&buf);
        }
    }
    for &n in &cfg.char_ngrams {
        for token in tokens {
            let chars: Vec<char> = format!("<{token}>").chars().collect();
            for window in chars.windows(n) {
                buf.clear();
                buf.push_str("c:");
                buf.extend(window);
                add(&buf);
            }
        }
    }

    let mut entries: Vec<(u32, f64)> = acc.into_iter().filter(|(_, v)| *v != 0.0).collect();
    let norm = entries.iter().map(|(_, v)| v * v).sum::<f64>().sqrt();
    if norm > 0.0 {
        for (_, v) in &mut entries {
            *v /= norm;
        }
    }
    FeatureVector { entries }
}

/// Trainable encoder parameters; `None` in passthrough mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderParams {
    pub projection: Option<Matrix>,
}

/// Encoder input prepared once per sample.
#[derive(Debug, Clone, PartialEq)]
pub enum EncoderInput {
    Features(FeatureVector),
    Embedding(Vec<f64>),
}

/// Sparse projection `v · W`.
pub fn project(features: &FeatureVector, projection: &Matrix) -> Vec<f64> {
    let mut out = vec![0.0; projection.cols];
    for &(idx, v) in &features.entries {
        for (o, w) in out.iter_mut().zip(projection.row(idx as usize)) {
            *o += v * w;
        }
    }
    out
}

/// Prepares the encoder input for a sample (features or a checked embedding).
pub fn prepare(sample: &Sample, cfg: &EncoderConfig) -> Result<EncoderInput> {
    match cfg.mode {
        EncoderMode::Surrogate => Ok(EncoderInput::Features(hash_features(
            &tokenize(&sample.text, cfg.max_tokens),
            cfg,
        ))),
        EncoderMode::Passthrough => match &sample.embedding {
            None => Err(Error::Embedding {
                id: sample.id.clone(),
                message: "missing embedding for passthrough encoder".into(),
            }),
            Some(e) if e.len() != cfg.dim => Err(Error::Embedding {
                id: sample.id.clone(),
                message: format!("embedding width {} does not match encoder dim {}", e.len(), cfg.dim),
            }),
            Some(e) if e.iter().any(|x| !x.is_finite()) => Err(Error::Embedding {
                id: sample.id.clone(),
                message: "embedding contains non-finite values".into(),
            }),
            Some(e) => Ok(EncoderInput::Embedding(e.clone())),
        },
    }
}

/// Representation of a prepared input.
pub fn encode_input(input: &EncoderInput, params: &EncoderParams) -> Result<Vec<f64>> {
    match (input, &params.projection) {
        (EncoderInput::Features(f), Some(w)) => Ok(project(f, w)),
        (EncoderInput::Embedding(e), None) => Ok(e.clone()),
        (EncoderInput::Features(_), None) => {
            Err(Error::Checkpoint("surrogate input but encoder has no projection".into()))
        }
        (EncoderInput::Embedding(_), Some(_)) => {
            Err(Error::Checkpoint("passthrough input but encoder has a projection".into()))
        }
    }
}

pub fn encode(sample: &Sample, params: &EncoderParams, cfg: &EncoderConfig) -> Result<Vec<f64>> {
    encode_input(&prepare(sample, cfg)?, params)
}

#[derive(Deserialize)]
struct EmbeddingRow {
    id: serde_json::Value,
    embedding: Vec<f64>,
}

/// Reads a JSONL embedding sidecar: `{"id": ..., "embedding": [...]}` per line.
pub fn load_embeddings(path: &Path) -> Result<BTreeMap<String, Vec<f64>>> {
    let content = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = BTreeMap::new();
    for (idx, line) in content.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row: EmbeddingRow = serde_json::from_str(line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: idx + 1,
            message: e.to_string(),
        })?;
        let id = match row.id {
            serde_json::Value::String(s) => s,
            other => other.to_string(),
        };
        out.insert(id, row.embedding);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn small_cfg() -> EncoderConfig {
        EncoderConfig {
            dim: 4,
            hash_buckets: 64,
            ..EncoderConfig::default()
        }
    }

    #[test]
    fn tokenize_examples() {
        assert_eq!(tokenize("A b c", 2), vec!["a", "b"]);
        assert!(tokenize("", 5).is_empty());
        assert_eq!(tokenize("@USER URL", 256), vec!["@user", "url"]);
    }

    #[test]
    fn features_of_empty_input_are_zero() {
        let f = hash_features(&[], &small_cfg());
        assert!(f.is_empty());
        let w = Matrix::from_fn(64, 4, |r, c| (r * 4 + c) as f64);
        assert_eq!(project(&f, &w), vec![0.0; 4]);
    }

    #[test]
    fn features_are_deterministic_and_normalized() {
        let cfg = small_cfg();
        let toks = tokenize("the quick brown fox", 256);
        let a = hash_features(&toks, &cfg);
        let b = hash_features(&toks, &cfg);
        assert_eq!(a, b);
        assert!((a.norm() - 1.0).abs() < 1e-6);
        assert!(a.entries.iter().all(|(i, _)| (*i as usize) < cfg.hash_buckets));
        let other_seed = hash_features(&toks, &EncoderConfig { seed: 9, ..cfg });
        assert_ne!(a, other_seed);
    }

    #[test]
    fn passthrough_returns_embedding() {
        let cfg = EncoderConfig {
            mode: EncoderMode::Passthrough,
            dim: 2,
            ..EncoderConfig::default()
        };
        let params = EncoderParams { projection: None };
        let mut s = Sample::new("s1", "x", None);
        let err = encode(&s, &params, &cfg).unwrap_err();
        assert!(err.to_string().contains("s1"));
        s.embedding = Some(vec![0.1, -0.2, 0.3]);
        assert!(encode(&s, &params, &cfg).is_err());
        s.embedding = Some(vec![0.1, -0.2]);
        assert_eq!(encode(&s, &params, &cfg).unwrap(), vec![0.1, -0.2]);
    }

    #[test]
    fn unit_feature_selects_projection_row() {
        let w = Matrix::from_fn(6, 3, |r, c| if r == c { 1.0 } else { 0.5 * r as f64 + c as f64 });
        let e1 = FeatureVector { entries: vec![(0, 1.0)] };
        assert_eq!(project(&e1, &w), w.row(0).to_vec());
        let e4 = FeatureVector { entries: vec![(4, 1.0)] };
        assert_eq!(project(&e4, &w), w.row(4).to_vec());
    }

    proptest! {
        #[test]
        fn projection_is_linear(alpha in -5.0f64..5.0, text in "[a-z ]{1,30}", seed in 0u64..100) {
            let cfg = small_cfg();
            let f = hash_features(&tokenize(&text, 256), &cfg);
            let w = Matrix::from_fn(64, 4, |r, c| ((r * 31 + c * 7 + seed as usize) % 13) as f64 - 6.0);
            let lhs = project(&f.scaled(alpha), &w);
            let rhs: Vec<f64> = project(&f, &w).iter().map(|x| alpha * x).collect();
            for (a, b) in lhs.iter().zip(rhs) {
                prop_assert!((a - b).abs() < 1e-9);
            }
        }

        #[test]
        fn truncation_prefix_equivalence(prefix in "[a-z]{1,5}( [a-z]{1,5}){2}", tail_a in "[a-z ]{0,20}", tail_b in "[a-z ]{0,20}") {
            let cfg = EncoderConfig { max_tokens: 3, ..small_cfg() };
            let a = Sample::new("a", format!("{prefix} {tail_a}"), None);
            let b = Sample::new("b", format!("{prefix} {tail_b}"), None);
            prop_assert_eq!(prepare(&a, &cfg).unwrap(), prepare(&b, &cfg).unwrap());
        }
    }
}
