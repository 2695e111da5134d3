//! Exact dense (cosine) and sparse (Okapi BM25) retrieval indexes with
//! min–max score fusion.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Chunk;
use crate::encoder::{cosine_similarity, EncoderError, EncoderParams, Embedding};
use crate::io_util::write_atomic;
use crate::tokenizer::{TokenId, TokenizerModel};

pub const DENSE_MAGIC: &[u8; 4] = b"DIDX";
pub const DENSE_VERSION: u32 = 1;
pub const SPARSE_VERSION: u32 = 1;
pub const DEFAULT_K1: f64 = 1.2;
pub const DEFAULT_B: f64 = 0.75;
pub const DENSE_FILE: &str = "dense.didx";
pub const SPARSE_FILE: &str = "sparse.json";

#[derive(Debug, Error)]
pub enum IndexError {
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("index built with checkpoint {index}, query encoder is {query}")]
    CheckpointMismatch { index: String, query: String },
    #[error("dense and sparse indexes cover different chunk sets")]
    IndexMismatch,
    #[error("k must be >= 1")]
    BadK,
    #[error("lambda must be in [0,1], got {0}")]
    BadLambda(f64),
    #[error("index format: {0}")]
    Format(String),
    #[error(transparent)]
    Encoder(#[from] EncoderError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, IndexError>;

#[derive(Debug, Clone, PartialEq)]
pub struct DenseIndex {
    pub chunk_ids: Vec<String>,
    pub vectors: Vec<Embedding>,
    pub encoder_checkpoint_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseIndex {
    pub version: u32,
    pub chunk_ids: Vec<String>,
    /// token id -> (chunk index, term frequency), chunk indices ascending.
    pub postings: BTreeMap<TokenId, Vec<(u32, u32)>>,
    pub doc_lengths: Vec<u32>,
    pub avg_doc_len: f64,
    pub n_docs: usize,
    pub k1: f64,
    pub b: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HybridConfig {
    pub lambda: f64,
    pub top_k: usize,
}

pub type Ranked = Vec<(String, f64)>;

/// Sorts `(index, score)` descending with ties by ascending chunk id.
fn rank(ids: &[String], scores: impl Iterator<Item = (usize, f64)>, k: usize) -> Ranked {
    let mut v: Vec<(usize, f64)> = scores.collect();
    v.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| ids[a.0].cmp(&ids[b.0])));
    v.truncate(k);
    v.into_iter().map(|(i, s)| (ids[i].clone(), s)).collect()
}

impl DenseIndex {
    pub fn len(&self) -> usize {
        self.chunk_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chunk_ids.is_empty()
    }

    pub fn scores(&self, query: &Embedding) -> Vec<f64> {
        self.vectors.iter().map(|v| cosine_similarity(query, v)).collect()
    }

    pub fn search_vector(&self, query: &Embedding, k: usize) -> Result<Ranked> {
        if k == 0 {
            return Err(IndexError::BadK);
        }
        Ok(rank(&self.chunk_ids, self.scores(query).into_iter().enumerate(), k))
    }

    fn embed_query(&self, params: &EncoderParams, tok: &TokenizerModel, query: &str) -> Result<Embedding> {
        let id = params.checkpoint_id();
        if id != self.encoder_checkpoint_id {
            return Err(IndexError::CheckpointMismatch { index: self.encoder_checkpoint_id.clone(), query: id });
        }
        Ok(params.embed(&tok.tokenize(query))?)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let d = self.vectors.first().map_or(0, |v| v.0.len());
        let mut buf = Vec::new();
        buf.extend_from_slice(DENSE_MAGIC);
        buf.extend_from_slice(&DENSE_VERSION.to_le_bytes());
        buf.extend_from_slice(&(self.len() as u64).to_le_bytes());
        buf.extend_from_slice(&(d as u64).to_le_bytes());
        let cid = self.encoder_checkpoint_id.as_bytes();
        buf.extend_from_slice(&(cid.len() as u64).to_le_bytes());
        buf.extend_from_slice(cid);
        for id in &self.chunk_ids {
            buf.extend_from_slice(&(id.len() as u64).to_le_bytes());
            buf.extend_from_slice(id.as_bytes());
        }
        for v in &self.vectors {
            for x in &v.0 {
                buf.extend_from_slice(&x.to_le_bytes());
            }
        }
        buf
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, at: 0 };
        if r.take(4)? != DENSE_MAGIC {
            return Err(IndexError::Format("bad magic".into()));
        }
        let version = u32::from_le_bytes(r.take(4)?.try_into().unwrap());
        if version != DENSE_VERSION {
            return Err(IndexError::Format(format!("unsupported version {version}")));
        }
        let n = r.u64()? as usize;
        let d = r.u64()? as usize;
        let encoder_checkpoint_id = r.string()?;
        let chunk_ids = (0..n).map(|_| r.string()).collect::<Result<Vec<_>>>()?;
        let mut vectors = Vec::with_capacity(n);
        for _ in 0..n {
            let row = (0..d)
                .map(|_| Ok(f64::from_le_bytes(r.take(8)?.try_into().unwrap())))
                .collect::<Result<Vec<f64>>>()?;
            vectors.push(Embedding(row));
        }
        if r.at != bytes.len() {
            return Err(IndexError::Format("trailing bytes".into()));
        }
        Ok(DenseIndex { chunk_ids, vectors, encoder_checkpoint_id })
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.at.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| IndexError::Format("truncated".into()))?;
        let s = &self.bytes[self.at..end];
        self.at = end;
        Ok(s)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn string(&mut self) -> Result<String> {
        let len = self.u64()? as usize;
        String::from_utf8(self.take(len)?.to_vec()).map_err(|_| IndexError::Format("non-UTF-8 id".into()))
    }
}

impl SparseIndex {
    pub fn from_token_lists(chunk_ids: Vec<String>, docs: &[Vec<TokenId>], k1: f64, b: f64) -> Result<Self> {
        if docs.is_empty() {
            return Err(IndexError::EmptyCorpus);
        }
        let mut postings: BTreeMap<TokenId, Vec<(u32, u32)>> = BTreeMap::new();
        for (i, doc) in docs.iter().enumerate() {
            let mut tf: BTreeMap<TokenId, u32> = BTreeMap::new();
            for &t in doc {
                *tf.entry(t).or_default() += 1;
            }
            for (t, n) in tf {
                postings.entry(t).or_default().push((i as u32, n));
            }
        }
        let doc_lengths: Vec<u32> = docs.iter().map(|d| d.len() as u32).collect();
        let avg_doc_len = doc_lengths.iter().map(|&l| f64::from(l)).sum::<f64>() / docs.len() as f64;
        Ok(SparseIndex {
            version: SPARSE_VERSION,
            chunk_ids,
            postings,
            doc_lengths,
            avg_doc_len,
            n_docs: docs.len(),
            k1,
            b,
        })
    }

    /// `ln((N - n_t + 0.5) / (n_t + 0.5) + 1)`
    pub fn idf(&self, token: TokenId) -> f64 {
        let n_t = self.postings.get(&token).map_or(0, Vec::len) as f64;
        let n = self.n_docs as f64;
        ((n - n_t + 0.5) / (n_t + 0.5) + 1.0).ln()
    }

    /// BM25 score of every document for the distinct tokens of `query`.
    pub fn score_tokens(&self, query: &[TokenId]) -> Vec<f64> {
        let mut scores = vec![0.0; self.n_docs];
        let distinct: BTreeSet<TokenId> = query.iter().copied().collect();
        for t in distinct {
            let Some(list) = self.postings.get(&t) else { continue };
            let idf = self.idf(t);
            for &(doc, tf) in list {
                let tf = f64::from(tf);
                let len = f64::from(self.doc_lengths[doc as usize]);
                let norm = if self.avg_doc_len > 0.0 { len / self.avg_doc_len } else { 0.0 };
                scores[doc as usize] += idf * tf / (tf + self.k1 * (1.0 - self.b + self.b * norm));
            }
        }
        scores
    }

    pub fn search_tokens(&self, query: &[TokenId], k: usize) -> Result<Ranked> {
        if k == 0 {
            return Err(IndexError::BadK);
        }
        Ok(rank(&self.chunk_ids, self.score_tokens(query).into_iter().enumerate(), k))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("sparse index serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let idx: SparseIndex = serde_json::from_str(s).map_err(|e| IndexError::Format(e.to_string()))?;
        if idx.version != SPARSE_VERSION {
            return Err(IndexError::Format(format!("unsupported version {}", idx.version)));
        }
        if idx.doc_lengths.len() != idx.n_docs || idx.chunk_ids.len() != idx.n_docs {
            return Err(IndexError::Format("document count mismatch".into()));
        }
        Ok(idx)
    }
}

pub fn build(chunks: &[Chunk], params: &EncoderParams, tok: &TokenizerModel) -> Result<(DenseIndex, SparseIndex)> {
    if chunks.is_empty() {
        return Err(IndexError::EmptyCorpus);
    }
    let ids: Vec<String> = chunks.iter().map(|c| c.chunk_id.clone()).collect();
    let tokens: Vec<Vec<TokenId>> = chunks.iter().map(|c| tok.tokenize(&c.text)).collect();
    let vectors = params.embed_batch(&tokens)?;
    let dense = DenseIndex { chunk_ids: ids.clone(), vectors, encoder_checkpoint_id: params.checkpoint_id() };
    let sparse = SparseIndex::from_token_lists(ids, &tokens, DEFAULT_K1, DEFAULT_B)?;
    Ok((dense, sparse))
}

pub fn save(dir: &Path, dense: &DenseIndex, sparse: &SparseIndex) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_atomic(&dir.join(DENSE_FILE), &dense.to_bytes())?;
    write_atomic(&dir.join(SPARSE_FILE), sparse.to_json().as_bytes())?;
    Ok(())
}

pub fn load(dir: &Path) -> Result<(DenseIndex, SparseIndex)> {
    let dense = DenseIndex::from_bytes(&fs::read(dir.join(DENSE_FILE))?)?;
    let sparse = SparseIndex::from_json(&fs::read_to_string(dir.join(SPARSE_FILE))?)?;
    Ok((dense, sparse))
}

pub fn query_dense(
    idx: &DenseIndex,
    params: &EncoderParams,
    tok: &TokenizerModel,
    query: &str,
    k: usize,
) -> Result<Ranked> {
    let q = idx.embed_query(params, tok, query)?;
    idx.search_vector(&q, k)
}

pub fn query_sparse(idx: &SparseIndex, tok: &TokenizerModel, query: &str, k: usize) -> Result<Ranked> {
    idx.search_tokens(&tok.tokenize(query), k)
}

fn min_max(values: &[f64]) -> Vec<f64> {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi > lo {
        values.iter().map(|v| (v - lo) / (hi - lo)).collect()
    } else {
        vec![0.0; values.len()]
    }
}

/// Fuses raw per-document scores. Candidates are the union of each side's
/// top `4·top_k`; each side is min–max normalized over that union.
pub fn fuse_scores(ids: &[String], dense: &[f64], sparse: &[f64], cfg: &HybridConfig) -> Result<Ranked> {
    if !(0.0..=1.0).contains(&cfg.lambda) {
        return Err(IndexError::BadLambda(cfg.lambda));
    }
    if cfg.top_k == 0 {
        return Err(IndexError::BadK);
    }
    let pool = 4 * cfg.top_k;
    let top = |scores: &[f64]| -> Vec<usize> {
        let mut v: Vec<usize> = (0..scores.len()).collect();
        v.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then_with(|| ids[a].cmp(&ids[b])));
        v.truncate(pool);
        v
    };
    let union: BTreeSet<usize> = top(dense).into_iter().chain(top(sparse)).collect();
    let cand: Vec<usize> = union.into_iter().collect();
    let dn = min_max(&cand.iter().map(|&i| dense[i]).collect::<Vec<_>>());
    let sn = min_max(&cand.iter().map(|&i| sparse[i]).collect::<Vec<_>>());
    let fused = cand
        .iter()
        .enumerate()
        .map(|(j, &i)| (i, cfg.lambda * dn[j] + (1.0 - cfg.lambda) * sn[j]));
    Ok(rank(ids, fused, cfg.top_k))
}

pub fn query_hybrid(
    dense: &DenseIndex,
    sparse: &SparseIndex,
    params: &EncoderParams,
    tok: &TokenizerModel,
    query: &str,
    cfg: &HybridConfig,
) -> Result<Ranked> {
    if dense.chunk_ids != sparse.chunk_ids {
        return Err(IndexError::IndexMismatch);
    }
    let q = dense.embed_query(params, tok, query)?;
    fuse_scores(&dense.chunk_ids, &dense.scores(&q), &sparse.score_tokens(&tok.tokenize(query)), cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::{init_params, Dims};
    use crate::tokenizer::train_bpe;

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("c{i}")).collect()
    }

    #[test]
    fn bm25_three_doc_example() {
        // docs: [1,2,2], [2,3], [4]; avgdl = 2; query {2,4}
        let idx = SparseIndex::from_token_lists(ids(3), &[vec![1, 2, 2], vec![2, 3], vec![4]], 1.2, 0.75).unwrap();
        assert_eq!(idx.avg_doc_len, 2.0);
        let s = idx.score_tokens(&[2, 4, 2]);
        // Frozen from the formula evaluated by hand:
        // idf(2) = ln(1.5/2.5 + 1) = ln 1.6, idf(4) = ln(2.5/1.5 + 1) = ln(8/3)
        // d0: ln1.6 * 2/(2 + 1.2*(0.25 + 0.75*1.5)) = ln1.6 * 2/3.65
        // d1: ln1.6 * 1/(1 + 1.2) ; d2: ln(8/3) * 1/(1 + 1.2*(0.25+0.375))
        let want = [0.257_536_235_203_142_84, 0.213_638_013_293_516_17, 0.560_473_858_863_843_6];
        for (g, w) in s.iter().zip(want) {
            assert!((g - w).abs() < 1e-9, "{g} vs {w}");
        }
        let unseen = idx.search_tokens(&[99], 3).unwrap();
        assert!(unseen.iter().all(|(_, s)| *s == 0.0));
        assert_eq!(unseen.iter().map(|(i, _)| i.as_str()).collect::<Vec<_>>(), vec!["c0", "c1", "c2"]);
    }

    #[test]
    fn single_doc_positive_score() {
        let idx = SparseIndex::from_token_lists(ids(1), &[vec![5, 6]], DEFAULT_K1, DEFAULT_B).unwrap();
        assert!(idx.score_tokens(&[5])[0] > 0.0);
    }

    fn setup() -> (Vec<Chunk>, EncoderParams, TokenizerModel) {
        let texts = [
            "the gNB performs handover between cells",
            "the core network hosts the AMF",
            "paging locates idle user equipment",
            "network slicing partitions the core",
            "sector antennas cover a cell",
        ];
        let tok = train_bpe(&texts, 300).unwrap();
        let params = init_params(Dims::new(tok.vocab_size(), 8, 6), 4).unwrap();
        let chunks = texts.iter().enumerate().map(|(i, t)| Chunk::new(format!("c{i}"), "d", vec![], *t)).collect();
        (chunks, params, tok)
    }

    #[test]
    fn dense_self_query_and_k() {
        let (chunks, params, tok) = setup();
        let (dense, _) = build(&chunks, &params, &tok).unwrap();
        let r = query_dense(&dense, &params, &tok, &chunks[2].text, 3).unwrap();
        assert_eq!(r[0].0, "c2");
        assert!((r[0].1 - 1.0).abs() < 1e-12);
        assert_eq!(query_dense(&dense, &params, &tok, "cell", 50).unwrap().len(), 5);
        assert!(matches!(build(&[], &params, &tok), Err(IndexError::EmptyCorpus)));
    }

    #[test]
    fn checkpoint_mismatch_refused() {
        let (chunks, params, tok) = setup();
        let (dense, _) = build(&chunks, &params, &tok).unwrap();
        let other = init_params(params.dims, 99).unwrap();
        assert!(matches!(
            query_dense(&dense, &other, &tok, "cell", 1),
            Err(IndexError::CheckpointMismatch { .. })
        ));
    }

    #[test]
    fn hybrid_hand_fusion() {
        let ids = ids(5);
        let dense = [0.9, 0.5, 0.1, 0.3, 0.7];
        let sparse = [0.0, 2.0, 1.0, 4.0, 0.0];
        let r = fuse_scores(&ids, &dense, &sparse, &HybridConfig { lambda: 0.5, top_k: 3 }).unwrap();
        // dense norm: (x-0.1)/0.8 -> 1, .5, 0, .25, .75 ; sparse norm: x/4 -> 0, .5, .25, 1, 0
        // fused: .5, .5, .125, .625, .375
        let got: Vec<(&str, f64)> = r.iter().map(|(i, s)| (i.as_str(), *s)).collect();
        assert_eq!(got[0].0, "c3");
        assert!((got[0].1 - 0.625).abs() < 1e-12);
        assert_eq!((got[1].0, got[2].0), ("c0", "c1"));
        assert!((got[1].1 - 0.5).abs() < 1e-12 && (got[2].1 - 0.5).abs() < 1e-12);
        assert!(fuse_scores(&ids, &dense, &sparse, &HybridConfig { lambda: 1.5, top_k: 3 }).is_err());
    }

    #[test]
    fn hybrid_reductions() {
        let (chunks, params, tok) = setup();
        let (dense, sparse) = build(&chunks, &params, &tok).unwrap();
        for q in ["handover cell", "core AMF", "idle paging"] {
            let d = query_dense(&dense, &params, &tok, q, 3).unwrap();
            let s = query_sparse(&sparse, &tok, q, 3).unwrap();
            let h1 = query_hybrid(&dense, &sparse, &params, &tok, q, &HybridConfig { lambda: 1.0, top_k: 3 }).unwrap();
            let h0 = query_hybrid(&dense, &sparse, &params, &tok, q, &HybridConfig { lambda: 0.0, top_k: 3 }).unwrap();
            let names = |r: &Ranked| r.iter().map(|(i, _)| i.clone()).collect::<Vec<_>>();
            assert_eq!(names(&h1), names(&d));
            assert_eq!(names(&h0), names(&s));
        }
    }

    #[test]
    fn index_mismatch_refused() {
        let (chunks, params, tok) = setup();
        let (dense, _) = build(&chunks, &params, &tok).unwrap();
        let (_, sparse) = build(&chunks[..3], &params, &tok).unwrap();
        let cfg = HybridConfig { lambda: 0.5, top_k: 2 };
        assert!(matches!(query_hybrid(&dense, &sparse, &params, &tok, "x", &cfg), Err(IndexError::IndexMismatch)));
    }

    #[test]
    fn monotone_fusion_when_orderings_agree() {
        let ids = ids(6);
        let dense = [0.9, 0.8, 0.6, 0.4, 0.2, 0.1];
        let sparse = [5.0, 4.0, 3.5, 2.0, 1.0, 0.5];
        let base = fuse_scores(&ids, &dense, &sparse, &HybridConfig { lambda: 0.0, top_k: 4 }).unwrap();
        for l in [0.1, 0.3, 0.5, 0.8, 1.0] {
            let r = fuse_scores(&ids, &dense, &sparse, &HybridConfig { lambda: l, top_k: 4 }).unwrap();
            let names: Vec<_> = r.iter().map(|(i, _)| i).collect();
            assert_eq!(names, base.iter().map(|(i, _)| i).collect::<Vec<_>>());
        }
    }

    #[test]
    fn persistence_round_trip() {
        let (chunks, params, tok) = setup();
        let (dense, sparse) = build(&chunks, &params, &tok).unwrap();
        let dir = tempfile::tempdir().unwrap();
        save(dir.path(), &dense, &sparse).unwrap();
        let (d2, s2) = load(dir.path()).unwrap();
        assert_eq!(d2, dense);
        assert_eq!(s2, sparse);
        let cfg = HybridConfig { lambda: 0.4, top_k: 3 };
        assert_eq!(
            query_hybrid(&d2, &s2, &params, &tok, "core cell", &cfg).unwrap(),
            query_hybrid(&dense, &sparse, &params, &tok, "core cell", &cfg).unwrap()
        );
        let bytes = dense.to_bytes();
        assert!(matches!(DenseIndex::from_bytes(&bytes[..bytes.len() - 1]), Err(IndexError::Format(_))));
    }
}
