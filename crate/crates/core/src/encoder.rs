//! Mean-pooled residual MLP text encoder producing unit-norm embeddings.
//!
//! Forward pass for token ids `t_1..t_n`:
//!
//! ```text
//! z = mean_i emb[t_i]
//! u = tanh(z·w1 + b1)
//! v = z + u·w2 + b2
//! e = v / |v|
//! ```

use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::tokenizer::{TokenId, VocabExtension};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"DEMB";
pub const CHECKPOINT_VERSION: u32 = 1;
pub const INIT_STD: f64 = 0.02;

#[derive(Debug, Error)]
pub enum EncoderError {
    #[error("empty token sequence")]
    EmptyInput,
    #[error("token id {id} out of range for vocab of {vocab}")]
    IdOutOfRange { id: TokenId, vocab: usize },
    #[error("pre-normalization vector has zero or non-finite norm")]
    DegenerateOutput,
    #[error("bad dims: {0}")]
    BadDims(String),
    #[error("extension offset {offset} does not match vocab size {vocab}")]
    OffsetMismatch { offset: usize, vocab: usize },
    #[error("batch item {index}: {source}")]
    Batch {
        index: usize,
        #[source]
        source: Box<EncoderError>,
    },
    #[error("checkpoint format: {0}")]
    Format(String),
    #[error("checkpoint shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, EncoderError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dims {
    pub vocab: usize,
    pub d: usize,
    pub h: usize,
}

impl Dims {
    pub fn new(vocab: usize, d: usize, h: usize) -> Self {
        Dims { vocab, d, h }
    }
}

/// Row-major dense parameter tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    pub dims: Dims,
    /// vocab × d
    pub emb: Vec<f64>,
    /// d × h
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    /// h × d
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
}

pub const TENSOR_NAMES: [&str; 5] = ["emb", "w1", "b1", "w2", "b2"];

/// Unit-norm embedding vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding(pub Vec<f64>);

impl Embedding {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    /// Normalizes `v` to unit length.
    pub fn from_raw(v: Vec<f64>) -> Result<Self> {
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n == 0.0 || !n.is_finite() {
            return Err(EncoderError::DegenerateOutput);
        }
        Ok(Embedding(v.into_iter().map(|x| x / n).collect()))
    }
}

/// Dot product of unit vectors, clamped to [-1, 1].
pub fn cosine_similarity(x: &Embedding, y: &Embedding) -> f64 {
    dot(&x.0, &y.0).clamp(-1.0, 1.0)
}

pub fn cosine_distance(x: &Embedding, y: &Embedding) -> f64 {
    1.0 - cosine_similarity(x, y)
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Intermediate values kept for backpropagation.
#[derive(Debug, Clone)]
pub(crate) struct Forward {
    pub z: Vec<f64>,
    pub u: Vec<f64>,
    pub norm: f64,
    pub out: Vec<f64>,
}

impl EncoderParams {
    pub fn zeros(dims: Dims) -> Self {
        EncoderParams {
            dims,
            emb: vec![0.0; dims.vocab * dims.d],
            w1: vec![0.0; dims.d * dims.h],
            b1: vec![0.0; dims.h],
            w2: vec![0.0; dims.h * dims.d],
            b2: vec![0.0; dims.d],
        }
    }

    pub fn tensors(&self) -> [&[f64]; 5] {
        [&self.emb, &self.w1, &self.b1, &self.w2, &self.b2]
    }

    pub fn tensors_mut(&mut self) -> [&mut Vec<f64>; 5] {
        [&mut self.emb, &mut self.w1, &mut self.b1, &mut self.w2, &mut self.b2]
    }

    pub fn row(&self, id: TokenId) -> &[f64] {
        let d = self.dims.d;
        &self.emb[id as usize * d..(id as usize + 1) * d]
    }

    pub(crate) fn forward(&self, ids: &[TokenId]) -> Result<Forward> {
        let Dims { vocab, d, h } = self.dims;
        if ids.is_empty() {
            return Err(EncoderError::EmptyInput);
        }
        let mut z = vec![0.0; d];
        for &id in ids {
            if id as usize >= vocab {
                return Err(EncoderError::IdOutOfRange { id, vocab });
            }
            for (zi, e) in z.iter_mut().zip(self.row(id)) {
                *zi += e;
            }
        }
        let inv = 1.0 / ids.len() as f64;
        z.iter_mut().for_each(|x| *x *= inv);

        let mut u = self.b1.clone();
        for (i, &zi) in z.iter().enumerate() {
            let row = &self.w1[i * h..(i + 1) * h];
            for (uj, w) in u.iter_mut().zip(row) {
                *uj += zi * w;
            }
        }
        u.iter_mut().for_each(|x| *x = x.tanh());

        let mut v: Vec<f64> = z.iter().zip(&self.b2).map(|(a, b)| a + b).collect();
        for (j, &uj) in u.iter().enumerate() {
            let row = &self.w2[j * d..(j + 1) * d];
            for (vk, w) in v.iter_mut().zip(row) {
                *vk += uj * w;
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 || !norm.is_finite() {
            return Err(EncoderError::DegenerateOutput);
        }
        let out = v.iter().map(|x| x / norm).collect();
        Ok(Forward { z, u, norm, out })
    }

    pub fn embed(&self, ids: &[TokenId]) -> Result<Embedding> {
        self.forward(ids).map(|f| Embedding(f.out))
    }

    pub fn embed_batch<I: AsRef<[TokenId]>>(&self, batch: &[I]) -> Result<Vec<Embedding>> {
        batch
            .iter()
            .enumerate()
            .map(|(index, ids)| {
                self.embed(ids.as_ref())
                    .map_err(|e| EncoderError::Batch { index, source: Box::new(e) })
            })
            .collect()
    }

    /// Stable identifier: SHA-256 (hex, first 16 chars) of the checkpoint bytes.
    pub fn checkpoint_id(&self) -> String {
        let digest = Sha256::digest(self.to_bytes());
        hex::encode(&digest[..8])
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|x| x.is_finite()))
    }
}

fn gaussian_fill(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let normal = Normal::new(0.0, INIT_STD).expect("valid std");
    (0..n).map(|_| normal.sample(rng)).collect()
}

pub fn init_params(dims: Dims, seed: u64) -> Result<EncoderParams> {
    if dims.d < 2 || dims.h == 0 || dims.vocab == 0 {
        return Err(EncoderError::BadDims(format!(
            "need vocab >= 1, d >= 2, h >= 1; got {:?}",
            dims
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = EncoderParams::zeros(dims);
    p.emb = gaussian_fill(&mut rng, dims.vocab * dims.d);
    p.w1 = gaussian_fill(&mut rng, dims.d * dims.h);
    p.w2 = gaussian_fill(&mut rng, dims.h * dims.d);
    Ok(p)
}

/// Grows the embedding table for newly added vocabulary. Existing rows and
/// all other tensors are copied bit-for-bit.
pub fn align_embeddings(params: &EncoderParams, ext: &VocabExtension, seed: u64) -> Result<EncoderParams> {
    if ext.id_offset != params.dims.vocab {
        return Err(EncoderError::OffsetMismatch { offset: ext.id_offset, vocab: params.dims.vocab });
    }
    let mut out = params.clone();
    let extra = ext.new_terms.len();
    if extra > 0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        out.emb.extend(gaussian_fill(&mut rng, extra * params.dims.d));
        out.dims.vocab += extra;
    }
    Ok(out)
}

impl EncoderParams {
    pub fn to_bytes(&self) -> Vec<u8> {
        let Dims { vocab, d, h } = self.dims;
        let n: usize = self.tensors().iter().map(|t| t.len()).sum();
        let mut buf = Vec::with_capacity(32 + 8 * n);
        buf.extend_from_slice(CHECKPOINT_MAGIC);
        buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        for x in [vocab, d, h] {
            buf.extend_from_slice(&(x as u64).to_le_bytes());
        }
        for t in self.tensors() {
            for x in t {
                buf.extend_from_slice(&x.to_le_bytes());
            }
        }
        buf
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        const HEADER: usize = 4 + 4 + 24;
        if bytes.len() < HEADER {
            return Err(EncoderError::Format("truncated header".into()));
        }
        if &bytes[..4] != CHECKPOINT_MAGIC {
            return Err(EncoderError::Format("bad magic".into()));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        if version != CHECKPOINT_VERSION {
            return Err(EncoderError::Format(format!("unsupported version {version}")));
        }
        let read_u64 = |at: usize| u64::from_le_bytes(bytes[at..at + 8].try_into().unwrap());
        let (vocab, d, h) = (read_u64(8), read_u64(16), read_u64(24));
        let expected = vocab
            .checked_mul(d)
            .and_then(|e| e.checked_add(d.checked_mul(h)?.checked_mul(2)?))
            .and_then(|e| e.checked_add(h)?.checked_add(d))
            .and_then(|e| e.checked_mul(8));
        let body = (bytes.len() - HEADER) as u64;
        if !body.is_multiple_of(8) {
            return Err(EncoderError::Format("truncated tensor data".into()));
        }
        if expected != Some(body) {
            return Err(EncoderError::ShapeMismatch(format!(
                "header dims ({vocab}, {d}, {h}) disagree with {body} bytes of tensor data"
            )));
        }
        let dims = Dims::new(vocab as usize, d as usize, h as usize);
        let mut p = EncoderParams::zeros(dims);
        let mut at = HEADER;
        for t in p.tensors_mut() {
            for x in t.iter_mut() {
                *x = f64::from_le_bytes(bytes[at..at + 8].try_into().unwrap());
                at += 8;
            }
        }
        Ok(p)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::io_util::write_atomic(path, &self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn small() -> EncoderParams {
        init_params(Dims::new(20, 6, 5), 3).unwrap()
    }

    #[test]
    fn output_is_unit_norm() {
        let p = small();
        let e = p.embed(&[1, 2, 3, 3]).unwrap();
        assert!((e.norm() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn bias_only_params_map_to_e1() {
        let mut p = EncoderParams::zeros(Dims::new(5, 3, 4));
        p.b2[0] = 1.0;
        for ids in [&[0u32][..], &[1, 4], &[2, 2, 3]] {
            assert_eq!(p.embed(ids).unwrap().0, vec![1.0, 0.0, 0.0]);
        }
    }

    #[test]
    fn single_token_uses_its_row() {
        let p = small();
        let f = p.forward(&[7]).unwrap();
        assert_eq!(f.z, p.row(7));
    }

    #[test]
    fn mean_pooling_ignores_order() {
        let p = small();
        let a = p.embed(&[1, 2, 3]).unwrap();
        let b = p.embed(&[3, 1, 2]).unwrap();
        for (x, y) in a.0.iter().zip(&b.0) {
            assert!((x - y).abs() < 1e-15);
        }
    }

    #[test]
    fn embed_errors() {
        let p = small();
        assert!(matches!(p.embed(&[]), Err(EncoderError::EmptyInput)));
        assert!(matches!(p.embed(&[20]), Err(EncoderError::IdOutOfRange { id: 20, vocab: 20 })));
    }

    #[test]
    fn batch_matches_loop() {
        let p = small();
        let batch = vec![vec![1u32, 2], vec![5], vec![0, 0, 19]];
        let got = p.embed_batch(&batch).unwrap();
        for (ids, e) in batch.iter().zip(&got) {
            assert_eq!(&p.embed(ids).unwrap(), e);
        }
        assert!(p.embed_batch::<Vec<u32>>(&[]).unwrap().is_empty());
        match p.embed_batch(&[vec![1u32], vec![]]) {
            Err(EncoderError::Batch { index: 1, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn cosine_examples() {
        let x = Embedding(vec![1.0, 0.0]);
        let y = Embedding(vec![0.0, 1.0]);
        assert_eq!(cosine_similarity(&x, &x), 1.0);
        assert_eq!(cosine_distance(&x, &x), 0.0);
        assert_eq!(cosine_similarity(&x, &y), 0.0);
        assert_eq!(cosine_distance(&x, &y), 1.0);
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let z = Embedding(vec![s, s]);
        assert!((cosine_similarity(&x, &z) - s).abs() < 1e-12);
    }

    #[test]
    fn init_is_seeded() {
        let dims = Dims::new(10, 4, 3);
        assert_eq!(init_params(dims, 1).unwrap(), init_params(dims, 1).unwrap());
        assert_ne!(init_params(dims, 1).unwrap(), init_params(dims, 2).unwrap());
        assert!(matches!(init_params(Dims::new(10, 0, 3), 1), Err(EncoderError::BadDims(_))));
        let p = init_params(dims, 1).unwrap();
        assert!(p.b1.iter().chain(&p.b2).all(|&b| b == 0.0));
    }

    #[test]
    fn init_std_is_plausible() {
        let p = init_params(Dims::new(500, 64, 8), 11).unwrap();
        let n = p.emb.len() as f64;
        let mean = p.emb.iter().sum::<f64>() / n;
        let var = p.emb.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        assert!(mean.abs() < 1e-3);
        assert!((var.sqrt() - INIT_STD).abs() < 1e-3);
    }

    fn ext(offset: usize, terms: &[&str]) -> VocabExtension {
        VocabExtension {
            new_terms: terms.iter().map(|s| s.to_string()).collect(),
            id_offset: offset,
            skipped: vec![],
        }
    }

    #[test]
    fn align_preserves_rows() {
        let p = small();
        let same = align_embeddings(&p, &ext(20, &[]), 9).unwrap();
        assert_eq!(same.to_bytes(), p.to_bytes());

        let grown = align_embeddings(&p, &ext(20, &["gNB", "AMF"]), 9).unwrap();
        assert_eq!(grown.dims.vocab, 22);
        let n = 20 * p.dims.d;
        assert!(grown.emb[..n].iter().zip(&p.emb).all(|(a, b)| a.to_bits() == b.to_bits()));
        assert_eq!(grown.w1, p.w1);
        assert_eq!(grown.b2, p.b2);
        assert_eq!(grown, align_embeddings(&p, &ext(20, &["gNB", "AMF"]), 9).unwrap());

        assert!(matches!(
            align_embeddings(&p, &ext(19, &["x"]), 9),
            Err(EncoderError::OffsetMismatch { .. })
        ));
    }

    #[test]
    fn checkpoint_round_trip_and_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        let p = small();
        p.save(&path).unwrap();
        let back = EncoderParams::load(&path).unwrap();
        assert_eq!(back.to_bytes(), p.to_bytes());

        let bytes = p.to_bytes();
        assert!(matches!(
            EncoderParams::from_bytes(&bytes[..bytes.len() - 3]),
            Err(EncoderError::Format(_))
        ));
        assert!(matches!(EncoderParams::from_bytes(&bytes[..10]), Err(EncoderError::Format(_))));

        let mut bad_magic = bytes.clone();
        bad_magic[0] = b'X';
        assert!(matches!(EncoderParams::from_bytes(&bad_magic), Err(EncoderError::Format(_))));

        let mut edited = bytes.clone();
        edited[16..24].copy_from_slice(&7u64.to_le_bytes());
        assert!(matches!(EncoderParams::from_bytes(&edited), Err(EncoderError::ShapeMismatch(_))));
    }

    proptest! {
        #[test]
        fn checkpoint_bytes_round_trip(seed in 0u64..1000, v in 1usize..12, d in 2usize..6, h in 1usize..6) {
            let p = init_params(Dims::new(v, d, h), seed).unwrap();
            let back = EncoderParams::from_bytes(&p.to_bytes()).unwrap();
            prop_assert_eq!(back.to_bytes(), p.to_bytes());
        }

        #[test]
        fn embed_unit_norm(seed in 0u64..500, ids in proptest::collection::vec(0u32..20, 1..10)) {
            let p = init_params(Dims::new(20, 6, 5), seed).unwrap();
            let e = p.embed(&ids).unwrap();
            prop_assert!((e.norm() - 1.0).abs() < 1e-9);
            prop_assert!((cosine_similarity(&e, &e) - 1.0).abs() < 1e-15);
        }
    }
}
