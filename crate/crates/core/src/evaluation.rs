//! Embedding-quality measurements: triplet accuracy, cosine retrieval
//! metrics, Spearman correlation, similarity histograms and 2-D projections.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Chunk;
use crate::dataset::{QueryPassagePair, Triplet};
use crate::encoder::{cosine_distance, cosine_similarity, EncoderError, EncoderParams, Embedding};
use crate::tokenizer::TokenizerModel;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("no query pairs")]
    EmptyPairs,
    #[error("chunk {0} not in corpus")]
    MissingChunk(String),
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
    #[error("need at least {need} points, got {got}")]
    TooFewPoints { need: usize, got: usize },
    #[error("perplexity {perplexity} must be below (n-1)/3 = {limit}")]
    PerplexityTooLarge { perplexity: f64, limit: f64 },
    #[error("bad argument: {0}")]
    BadArgument(String),
    #[error(transparent)]
    Encoder(#[from] EncoderError),
}

pub type Result<T> = std::result::Result<T, EvalError>;

pub const TOP1_COSINE_MATCH: &str = "Top1_CosineMatch";
pub const COSINE_SIM_AT_1: &str = "CosineSim@1";

pub fn recall_key(k: usize) -> String {
    format!("Recall@{k}_cosine")
}

pub fn avg_sim_key(k: usize) -> String {
    format!("Avg_CosineSim@{k}")
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub metrics: BTreeMap<String, f64>,
    pub metadata: BTreeMap<String, String>,
}

impl EvalReport {
    pub fn get(&self, name: &str) -> Option<f64> {
        self.metrics.get(name).copied()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("metric,value\n");
        for (k, v) in &self.metrics {
            s.push_str(&format!("{k},{v}\n"));
        }
        s
    }
}

fn embed_text(params: &EncoderParams, tok: &TokenizerModel, text: &str) -> Result<Embedding> {
    Ok(params.embed(&tok.tokenize(text))?)
}

/// Embeds every triplet as `(anchor, positive, negative)`.
pub fn triplet_embeddings(
    params: &EncoderParams,
    triplets: &[Triplet],
    tok: &TokenizerModel,
) -> Result<Vec<(Embedding, Embedding, Embedding)>> {
    triplets
        .iter()
        .map(|t| {
            Ok((
                embed_text(params, tok, &t.anchor)?,
                embed_text(params, tok, &t.positive)?,
                embed_text(params, tok, &t.negative)?,
            ))
        })
        .collect()
}

pub fn accuracy_from_embeddings(embs: &[(Embedding, Embedding, Embedding)]) -> Result<f64> {
    if embs.is_empty() {
        return Err(EvalError::EmptyDataset);
    }
    let hits = embs
        .iter()
        .filter(|(a, p, n)| cosine_distance(a, p) < cosine_distance(a, n))
        .count();
    Ok(hits as f64 / embs.len() as f64)
}

/// Fraction of triplets with `d(a,p) < d(a,n)` strictly.
pub fn triplet_accuracy(params: &EncoderParams, triplets: &[Triplet], tok: &TokenizerModel) -> Result<f64> {
    if triplets.is_empty() {
        return Err(EvalError::EmptyDataset);
    }
    accuracy_from_embeddings(&triplet_embeddings(params, triplets, tok)?)
}

/// Indices of `corpus` sorted by similarity to `query` (descending), ties by
/// ascending chunk id.
pub fn rank_by_cosine(query: &Embedding, ids: &[&str], vecs: &[Embedding]) -> Vec<(usize, f64)> {
    let mut scored: Vec<(usize, f64)> =
        vecs.iter().enumerate().map(|(i, v)| (i, cosine_similarity(query, v))).collect();
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| ids[a.0].cmp(ids[b.0])));
    scored
}

/// Table-style retrieval metrics from precomputed embeddings. The pool for
/// every query is the full corpus.
pub fn retrieval_metrics_from_embeddings(
    queries: &[Embedding],
    gold_ids: &[&str],
    corpus_ids: &[&str],
    corpus_vecs: &[Embedding],
    k: usize,
) -> Result<BTreeMap<String, f64>> {
    if queries.is_empty() {
        return Err(EvalError::EmptyPairs);
    }
    if queries.len() != gold_ids.len() {
        return Err(EvalError::LengthMismatch(queries.len(), gold_ids.len()));
    }
    if corpus_ids.len() != corpus_vecs.len() {
        return Err(EvalError::LengthMismatch(corpus_ids.len(), corpus_vecs.len()));
    }
    if k == 0 {
        return Err(EvalError::BadArgument("k must be >= 1".into()));
    }
    for g in gold_ids {
        if !corpus_ids.contains(g) {
            return Err(EvalError::MissingChunk(g.to_string()));
        }
    }
    let (mut top1, mut recall, mut sim1, mut avgk) = (0.0, 0.0, 0.0, 0.0);
    for (q, gold) in queries.iter().zip(gold_ids) {
        let ranked = rank_by_cosine(q, corpus_ids, corpus_vecs);
        let top = &ranked[..k.min(ranked.len())];
        if corpus_ids[top[0].0] == *gold {
            top1 += 1.0;
        }
        if top.iter().any(|(i, _)| corpus_ids[*i] == *gold) {
            recall += 1.0;
        }
        sim1 += top[0].1;
        avgk += top.iter().map(|(_, s)| s).sum::<f64>() / top.len() as f64;
    }
    let n = queries.len() as f64;
    let mut m = BTreeMap::new();
    m.insert(TOP1_COSINE_MATCH.to_string(), top1 / n);
    m.insert(recall_key(k), recall / n);
    m.insert(COSINE_SIM_AT_1.to_string(), sim1 / n);
    m.insert(avg_sim_key(k), avgk / n);
    Ok(m)
}

pub fn retrieval_metrics(
    params: &EncoderParams,
    pairs: &[QueryPassagePair],
    corpus: &[Chunk],
    tok: &TokenizerModel,
    k: usize,
) -> Result<EvalReport> {
    if pairs.is_empty() {
        return Err(EvalError::EmptyPairs);
    }
    let ids: Vec<&str> = corpus.iter().map(|c| c.chunk_id.as_str()).collect();
    for p in pairs {
        for id in std::iter::once(&p.gold_chunk_id).chain(&p.hard_negative_ids) {
            if !ids.contains(&id.as_str()) {
                return Err(EvalError::MissingChunk(id.clone()));
            }
        }
    }
    let token_lists: Vec<Vec<u32>> = corpus.iter().map(|c| tok.tokenize(&c.text)).collect();
    let vecs = params.embed_batch(&token_lists)?;
    let queries: Vec<Embedding> =
        pairs.iter().map(|p| embed_text(params, tok, &p.query)).collect::<Result<_>>()?;
    let golds: Vec<&str> = pairs.iter().map(|p| p.gold_chunk_id.as_str()).collect();
    let metrics = retrieval_metrics_from_embeddings(&queries, &golds, &ids, &vecs, k)?;
    let mut metadata = BTreeMap::new();
    metadata.insert("k".into(), k.to_string());
    metadata.insert("n_queries".into(), pairs.len().to_string());
    metadata.insert("n_chunks".into(), corpus.len().to_string());
    metadata.insert("checkpoint_id".into(), params.checkpoint_id());
    Ok(EvalReport { metrics, metadata })
}

/// 1-based ranks with ties sharing their average rank.
pub fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut ranks = vec![0.0; xs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (da, db) = (a - mx, b - my);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Spearman's rank correlation: Pearson correlation of average ranks.
pub fn spearman(predicted: &[f64], gold: &[f64]) -> Result<f64> {
    if predicted.len() != gold.len() {
        return Err(EvalError::LengthMismatch(predicted.len(), gold.len()));
    }
    if predicted.len() < 2 {
        return Err(EvalError::TooFewPoints { need: 2, got: predicted.len() });
    }
    pearson(&average_ranks(predicted), &average_ranks(gold))
        .ok_or_else(|| EvalError::DegenerateInput("constant input vector".into()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StsPair {
    pub sentence1: String,
    pub sentence2: String,
    pub score: f64,
}

/// Spearman ρ (×100) between encoder cosine similarity and gold scores.
pub fn sts_spearman(params: &EncoderParams, tok: &TokenizerModel, pairs: &[StsPair]) -> Result<f64> {
    let mut pred = Vec::with_capacity(pairs.len());
    for p in pairs {
        let a = embed_text(params, tok, &p.sentence1)?;
        let b = embed_text(params, tok, &p.sentence2)?;
        pred.push(cosine_similarity(&a, &b));
    }
    let gold: Vec<f64> = pairs.iter().map(|p| p.score).collect();
    Ok(100.0 * spearman(&pred, &gold)?)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimilarityHistogram {
    pub bin_edges: Vec<f64>,
    pub pos_counts: Vec<usize>,
    pub neg_counts: Vec<usize>,
    pub mean_pos: f64,
    pub mean_neg: f64,
    pub separation: f64,
}

impl SimilarityHistogram {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("bin_lo,bin_hi,pos_count,neg_count\n");
        for i in 0..self.pos_counts.len() {
            s.push_str(&format!(
                "{},{},{},{}\n",
                self.bin_edges[i],
                self.bin_edges[i + 1],
                self.pos_counts[i],
                self.neg_counts[i]
            ));
        }
        s
    }
}

fn bin_of(x: f64, bins: usize) -> usize {
    let pos = ((x + 1.0) / 2.0 * bins as f64).floor();
    (pos.max(0.0) as usize).min(bins - 1)
}

pub fn histogram_from_embeddings(
    embs: &[(Embedding, Embedding, Embedding)],
    bins: usize,
) -> Result<SimilarityHistogram> {
    if embs.is_empty() {
        return Err(EvalError::EmptyDataset);
    }
    if bins < 2 {
        return Err(EvalError::BadArgument("bins must be >= 2".into()));
    }
    let bin_edges: Vec<f64> = (0..=bins).map(|i| -1.0 + 2.0 * i as f64 / bins as f64).collect();
    let mut pos_counts = vec![0; bins];
    let mut neg_counts = vec![0; bins];
    let (mut sp, mut sn) = (0.0, 0.0);
    for (a, p, n) in embs {
        let cp = cosine_similarity(a, p);
        let cn = cosine_similarity(a, n);
        pos_counts[bin_of(cp, bins)] += 1;
        neg_counts[bin_of(cn, bins)] += 1;
        sp += cp;
        sn += cn;
    }
    let mean_pos = sp / embs.len() as f64;
    let mean_neg = sn / embs.len() as f64;
    Ok(SimilarityHistogram { bin_edges, pos_counts, neg_counts, mean_pos, mean_neg, separation: mean_pos - mean_neg })
}

pub fn similarity_distributions(
    params: &EncoderParams,
    triplets: &[Triplet],
    tok: &TokenizerModel,
    bins: usize,
) -> Result<SimilarityHistogram> {
    if triplets.is_empty() {
        return Err(EvalError::EmptyDataset);
    }
    histogram_from_embeddings(&triplet_embeddings(params, triplets, tok)?, bins)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PointLabel {
    Anchor,
    Positive,
    Negative,
}

impl PointLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            PointLabel::Anchor => "anchor",
            PointLabel::Positive => "positive",
            PointLabel::Negative => "negative",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProjectionMethod {
    Tsne,
    Pca,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Projection2D {
    pub points: Vec<(f64, f64, PointLabel)>,
    pub method: ProjectionMethod,
    pub seed: Option<u64>,
    pub perplexity: Option<f64>,
}

impl Projection2D {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("x,y,label\n");
        for (x, y, l) in &self.points {
            s.push_str(&format!("{x},{y},{}\n", l.as_str()));
        }
        s
    }
}

/// Flattens triplet embeddings into labelled points (a, p, n per triplet).
pub fn labelled_points(embs: &[(Embedding, Embedding, Embedding)]) -> (Vec<Embedding>, Vec<PointLabel>) {
    let mut pts = Vec::with_capacity(embs.len() * 3);
    let mut labels = Vec::with_capacity(embs.len() * 3);
    for (a, p, n) in embs {
        pts.extend([a.clone(), p.clone(), n.clone()]);
        labels.extend([PointLabel::Anchor, PointLabel::Positive, PointLabel::Negative]);
    }
    (pts, labels)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TsneConfig {
    pub perplexity: f64,
    pub iterations: usize,
    pub seed: u64,
    pub learning_rate: f64,
    pub exaggeration: f64,
    pub exaggeration_iters: usize,
    pub momentum_initial: f64,
    pub momentum_final: f64,
    pub perplexity_tol: f64,
    pub kl_every: usize,
    /// Per-coordinate adaptive step sizes (+0.2 / ×0.8, floor 0.01).
    pub adaptive_gains: bool,
}

impl TsneConfig {
    pub fn new(perplexity: f64, iterations: usize, seed: u64) -> Self {
        TsneConfig {
            perplexity,
            iterations,
            seed,
            learning_rate: 200.0,
            exaggeration: 12.0,
            exaggeration_iters: 250,
            momentum_initial: 0.5,
            momentum_final: 0.8,
            perplexity_tol: 1e-5,
            kl_every: 50,
            adaptive_gains: false,
        }
    }
}

/// Diagnostics recorded during a t-SNE run.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TsneTrace {
    /// Perplexity achieved by each point's bandwidth search.
    pub achieved_perplexity: Vec<f64>,
    /// `(iteration, KL(P‖Q))` sampled after exaggeration ends.
    pub kl: Vec<(usize, f64)>,
}

fn sq_dists(x: &[Embedding]) -> Vec<f64> {
    let n = x.len();
    let mut d = vec![0.0; n * n];
    for i in 0..n {
        for j in i + 1..n {
            let s: f64 = x[i].0.iter().zip(&x[j].0).map(|(a, b)| (a - b) * (a - b)).sum();
            d[i * n + j] = s;
            d[j * n + i] = s;
        }
    }
    d
}

/// Conditional row `p_{j|i}` for precision `beta`; returns (row, perplexity).
fn conditional_row(dist: &[f64], i: usize, beta: f64, row: &mut [f64]) -> f64 {
    let n = row.len();
    // Shift by the smallest off-diagonal distance for numerical stability.
    let dmin = (0..n).filter(|&j| j != i).map(|j| dist[j]).fold(f64::INFINITY, f64::min);
    let mut sum = 0.0;
    for j in 0..n {
        row[j] = if j == i { 0.0 } else { (-(dist[j] - dmin) * beta).exp() };
        sum += row[j];
    }
    let mut h = 0.0;
    for j in 0..n {
        row[j] /= sum;
        if row[j] > 0.0 {
            h -= row[j] * row[j].ln();
        }
    }
    h.exp()
}

/// Bisection on log-precision until the row perplexity is within `tol`.
fn calibrate_row(dist: &[f64], i: usize, target: f64, tol: f64, row: &mut [f64]) -> f64 {
    let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
    let mut log_beta = 0.0f64;
    let mut perp = conditional_row(dist, i, log_beta.exp(), row);
    for _ in 0..500 {
        if (perp - target).abs() < tol {
            break;
        }
        // Larger beta => sharper distribution => lower perplexity.
        if perp > target {
            lo = log_beta;
            log_beta = if hi.is_finite() { (lo + hi) / 2.0 } else { log_beta + 1.0 };
        } else {
            hi = log_beta;
            log_beta = if lo.is_finite() { (lo + hi) / 2.0 } else { log_beta - 1.0 };
        }
        perp = conditional_row(dist, i, log_beta.exp(), row);
    }
    perp
}

fn kl_divergence(p: &[f64], num: &[f64], sum_num: f64) -> f64 {
    p.iter()
        .zip(num)
        .filter(|(&pij, _)| pij > 0.0)
        .map(|(&pij, &nij)| pij * (pij / (nij / sum_num).max(1e-300)).ln())
        .sum()
}

/// Exact O(n²) t-SNE to two dimensions.
pub fn tsne_project(
    embeddings: &[Embedding],
    labels: &[PointLabel],
    cfg: &TsneConfig,
) -> Result<(Projection2D, TsneTrace)> {
    let n = embeddings.len();
    if n < 3 {
        return Err(EvalError::TooFewPoints { need: 3, got: n });
    }
    if labels.len() != n {
        return Err(EvalError::LengthMismatch(n, labels.len()));
    }
    let limit = (n as f64 - 1.0) / 3.0;
    if cfg.perplexity.is_nan() || cfg.perplexity <= 0.0 || cfg.perplexity >= limit {
        return Err(EvalError::PerplexityTooLarge { perplexity: cfg.perplexity, limit });
    }

    let dist = sq_dists(embeddings);
    let mut cond = vec![0.0; n * n];
    let mut trace = TsneTrace::default();
    for i in 0..n {
        let perp = calibrate_row(&dist[i * n..(i + 1) * n], i, cfg.perplexity, cfg.perplexity_tol, &mut cond[i * n..(i + 1) * n]);
        trace.achieved_perplexity.push(perp);
    }
    let mut p = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            if i != j {
                p[i * n + j] = ((cond[i * n + j] + cond[j * n + i]) / (2.0 * n as f64)).max(1e-12);
            }
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let normal = Normal::new(0.0, 1e-4).expect("valid std");
    let mut y: Vec<[f64; 2]> = (0..n).map(|_| [normal.sample(&mut rng), normal.sample(&mut rng)]).collect();
    let mut update = vec![[0.0f64; 2]; n];
    let mut gains = vec![[1.0f64; 2]; n];
    let mut num = vec![0.0; n * n];
    let mut grad = vec![[0.0f64; 2]; n];

    for it in 0..cfg.iterations {
        let exag = if it < cfg.exaggeration_iters { cfg.exaggeration } else { 1.0 };
        let momentum = if it < cfg.exaggeration_iters { cfg.momentum_initial } else { cfg.momentum_final };

        let mut sum_num = 0.0;
        for i in 0..n {
            num[i * n + i] = 0.0;
            for j in i + 1..n {
                let dx = y[i][0] - y[j][0];
                let dy = y[i][1] - y[j][1];
                let q = 1.0 / (1.0 + dx * dx + dy * dy);
                num[i * n + j] = q;
                num[j * n + i] = q;
                sum_num += 2.0 * q;
            }
        }

        for i in 0..n {
            let mut g = [0.0; 2];
            for j in 0..n {
                if i == j {
                    continue;
                }
                let q = num[i * n + j];
                let coef = (exag * p[i * n + j] - q / sum_num) * q;
                g[0] += coef * (y[i][0] - y[j][0]);
                g[1] += coef * (y[i][1] - y[j][1]);
            }
            grad[i] = [4.0 * g[0], 4.0 * g[1]];
        }

        for i in 0..n {
            for c in 0..2 {
                if cfg.adaptive_gains {
                    let same_sign = (grad[i][c] > 0.0) == (update[i][c] > 0.0);
                    gains[i][c] = if same_sign { gains[i][c] * 0.8 } else { gains[i][c] + 0.2 };
                    gains[i][c] = gains[i][c].max(0.01);
                }
                update[i][c] = momentum * update[i][c] - cfg.learning_rate * gains[i][c] * grad[i][c];
                y[i][c] += update[i][c];
            }
        }
        for c in 0..2 {
            let mean = y.iter().map(|v| v[c]).sum::<f64>() / n as f64;
            y.iter_mut().for_each(|v| v[c] -= mean);
        }

        if it >= cfg.exaggeration_iters && cfg.kl_every > 0 && (it + 1) % cfg.kl_every == 0 {
            let mut sum = 0.0;
            for i in 0..n {
                for j in 0..n {
                    if i != j {
                        let dx = y[i][0] - y[j][0];
                        let dy = y[i][1] - y[j][1];
                        let q = 1.0 / (1.0 + dx * dx + dy * dy);
                        num[i * n + j] = q;
                        sum += q;
                    }
                }
            }
            trace.kl.push((it + 1, kl_divergence(&p, &num, sum)));
        }
    }

    let points = y.iter().zip(labels).map(|(v, &l)| (v[0], v[1], l)).collect();
    Ok((
        Projection2D { points, method: ProjectionMethod::Tsne, seed: Some(cfg.seed), perplexity: Some(cfg.perplexity) },
        trace,
    ))
}

/// Projection onto the top two principal components. Each component is
/// signed so that its largest-magnitude coordinate is positive.
pub fn pca_project(embeddings: &[Embedding], labels: &[PointLabel]) -> Result<Projection2D> {
    let n = embeddings.len();
    if n < 2 {
        return Err(EvalError::TooFewPoints { need: 2, got: n });
    }
    if labels.len() != n {
        return Err(EvalError::LengthMismatch(n, labels.len()));
    }
    let d = embeddings[0].0.len();
    let mut mean = vec![0.0; d];
    for e in embeddings {
        for (m, x) in mean.iter_mut().zip(&e.0) {
            *m += x / n as f64;
        }
    }
    let centered = nalgebra::DMatrix::from_fn(n, d, |i, j| embeddings[i].0[j] - mean[j]);
    let cov = centered.transpose() * &centered / (n as f64 - 1.0);
    let eig = nalgebra::SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));

    let mut comps: Vec<Vec<f64>> = Vec::new();
    for &k in order.iter().take(2) {
        let mut v: Vec<f64> = eig.eigenvectors.column(k).iter().copied().collect();
        let (mut best, mut best_abs) = (0, -1.0);
        for (i, x) in v.iter().enumerate() {
            if x.abs() > best_abs + 1e-12 {
                best = i;
                best_abs = x.abs();
            }
        }
        if v[best] < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
        comps.push(v);
    }
    while comps.len() < 2 {
        comps.push(vec![0.0; d]);
    }
    let points = (0..n)
        .map(|i| {
            let row = centered.row(i);
            let px: f64 = row.iter().zip(&comps[0]).map(|(a, b)| a * b).sum();
            let py: f64 = row.iter().zip(&comps[1]).map(|(a, b)| a * b).sum();
            (px, py, labels[i])
        })
        .collect();
    Ok(Projection2D { points, method: ProjectionMethod::Pca, seed: None, perplexity: None })
}
