//! End-to-end reproduction run and the run manifest.
//!
//! [`run_repro`] generates the synthetic ambiguous-vocabulary corpus, builds
//! a tokenizer and triplets from it, trains an untrained encoder into a
//! fine-tuned one and evaluates both. Every artifact is written under a work
//! directory together with a `manifest.json` listing file hashes, the
//! configuration and its hash, and the on-disk format versions. Nothing
//! time- or host-dependent is recorded, so two runs with the same seed are
//! byte-identical.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::corpus::{self, ChunkConfig};
use crate::dataset::{self, Triplet};
use crate::encoder::{align_embeddings, init_params, Dims, EncoderParams};
use crate::evaluation::{self, EvalReport, TsneConfig};
use crate::index;
use crate::io_util::write_atomic;
use crate::querygen::StubQueryGenerator;
use crate::synth;
use crate::tokenizer::{extend_vocab, train_bpe, TokenizerModel};
use crate::trainer::{self, TrainConfig, TrainHistory};
use crate::{Error, Result, FORMAT_VERSIONS};

/// Fixed per-module offsets added to the global seed.
pub mod seed_offset {
    pub const SYNTH: u64 = 0;
    pub const ENCODER_INIT: u64 = 1;
    pub const ALIGN: u64 = 2;
    pub const TRAIN: u64 = 3;
    pub const TSNE: u64 = 4;
    pub const BENCHMARK: u64 = 5;
}

pub fn module_seed(global: u64, offset: u64) -> u64 {
    global.wrapping_add(offset)
}

pub const MANIFEST_FILE: &str = "manifest.json";

/// Lowercase hex SHA-256.
pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Record of one run: what went in, how it was configured, what came out.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Manifest {
    pub command: String,
    pub seed: Option<u64>,
    /// Input path → SHA-256 of its contents (directories hash their sorted files).
    pub inputs: BTreeMap<String, String>,
    pub config: BTreeMap<String, String>,
    pub config_hash: String,
    pub format_versions: BTreeMap<String, u32>,
    pub tool_version: String,
    /// Output path relative to the work dir → SHA-256.
    pub outputs: BTreeMap<String, String>,
}

impl Manifest {
    pub fn new(command: &str, seed: Option<u64>, config: BTreeMap<String, String>) -> Self {
        let mut m = Manifest {
            command: command.to_string(),
            seed,
            config,
            format_versions: FORMAT_VERSIONS.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            ..Default::default()
        };
        m.config_hash = config_hash(&m.config);
        m
    }

    /// Records an input file or directory by content hash.
    pub fn add_input(&mut self, path: &Path) -> Result<()> {
        let digest = hash_path(path)?;
        self.inputs.insert(path.display().to_string(), digest);
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes") + "\n"
    }
}

/// SHA-256 over the canonical `key=value\n` rendering of a sorted config.
pub fn config_hash(config: &BTreeMap<String, String>) -> String {
    let text: String = config.iter().map(|(k, v)| format!("{k}={v}\n")).collect();
    sha256_hex(text.as_bytes())
}

fn hash_path(path: &Path) -> Result<String> {
    if path.is_dir() {
        let mut files = Vec::new();
        collect_files(path, path, &mut files)?;
        files.sort();
        let mut h = Sha256::new();
        for rel in files {
            let bytes = fs::read(path.join(&rel))?;
            h.update(rel.to_string_lossy().as_bytes());
            h.update([0]);
            h.update(Sha256::digest(&bytes));
        }
        Ok(hex::encode(h.finalize()))
    } else {
        Ok(sha256_hex(&fs::read(path)?))
    }
}

fn collect_files(root: &Path, dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    for entry in fs::read_dir(dir)? {
        let p = entry?.path();
        if p.is_dir() {
            collect_files(root, &p, out)?;
        } else {
            out.push(p.strip_prefix(root).expect("under root").to_path_buf());
        }
    }
    Ok(())
}

/// Writes artifacts under a work dir and records their hashes.
pub struct ArtifactWriter {
    root: PathBuf,
    pub manifest: Manifest,
}

impl ArtifactWriter {
    pub fn new(root: &Path, manifest: Manifest) -> Result<Self> {
        fs::create_dir_all(root)?;
        Ok(ArtifactWriter { root: root.to_path_buf(), manifest })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    pub fn write(&mut self, rel: &str, bytes: &[u8]) -> Result<()> {
        let path = self.path(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        write_atomic(&path, bytes)?;
        self.manifest.outputs.insert(rel.to_string(), sha256_hex(bytes));
        Ok(())
    }

    /// Records a file some other routine already wrote.
    pub fn record(&mut self, rel: &str) -> Result<()> {
        let bytes = fs::read(self.path(rel))?;
        self.manifest.outputs.insert(rel.to_string(), sha256_hex(&bytes));
        Ok(())
    }

    pub fn finish(self) -> Result<Manifest> {
        self.finish_as(MANIFEST_FILE)
    }

    /// Writes the manifest to `rel` instead of the default file name.
    pub fn finish_as(self, rel: &str) -> Result<Manifest> {
        let path = self.path(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        write_atomic(&path, self.manifest.to_json().as_bytes())?;
        Ok(self.manifest)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReproConfig {
    pub seed: u64,
    pub n_train: usize,
    pub n_test: usize,
    pub bpe_vocab: usize,
    pub d: usize,
    pub h: usize,
    pub train: TrainConfig,
    pub chunk: ChunkConfig,
    pub negatives_per_query: usize,
    pub k: usize,
    pub bins: usize,
    pub projection_triplets: usize,
    pub tsne_perplexity: f64,
    pub tsne_iterations: usize,
}

impl Default for ReproConfig {
    fn default() -> Self {
        ReproConfig {
            seed: 0,
            n_train: 2000,
            n_test: 500,
            bpe_vocab: 512,
            d: 64,
            h: 128,
            train: TrainConfig { learning_rate: 1e-2, epochs: 15, ..TrainConfig::default() },
            chunk: ChunkConfig { min_chars: 80, max_chars: 600, ..ChunkConfig::default() },
            negatives_per_query: 5,
            k: 5,
            bins: 20,
            projection_triplets: 100,
            tsne_perplexity: 30.0,
            tsne_iterations: 1000,
        }
    }
}

impl ReproConfig {
    pub fn with_seed(seed: u64) -> Self {
        ReproConfig { seed, ..Self::default() }
    }

    /// Flat key/value view; the train seed shown is the derived one.
    pub fn to_map(&self) -> BTreeMap<String, String> {
        let mut m = BTreeMap::new();
        let mut put = |k: &str, v: String| {
            m.insert(k.to_string(), v);
        };
        put("seed", self.seed.to_string());
        put("n_train", self.n_train.to_string());
        put("n_test", self.n_test.to_string());
        put("bpe_vocab", self.bpe_vocab.to_string());
        put("d", self.d.to_string());
        put("h", self.h.to_string());
        put("margin_alpha", self.train.margin_alpha.to_string());
        put("learning_rate", self.train.learning_rate.to_string());
        put("epochs", self.train.epochs.to_string());
        put("batch_size", self.train.batch_size.to_string());
        put("min_chars", self.chunk.min_chars.to_string());
        put("max_chars", self.chunk.max_chars.to_string());
        put("negatives_per_query", self.negatives_per_query.to_string());
        put("k", self.k.to_string());
        put("bins", self.bins.to_string());
        put("projection_triplets", self.projection_triplets.to_string());
        put("tsne_perplexity", self.tsne_perplexity.to_string());
        put("tsne_iterations", self.tsne_iterations.to_string());
        m
    }
}

/// Everything the reproduction run computes, kept in memory for callers.
#[derive(Debug, Clone)]
pub struct ReproOutcome {
    pub base: EvalReport,
    pub fine: EvalReport,
    pub base_params: EncoderParams,
    pub fine_params: EncoderParams,
    pub tokenizer: TokenizerModel,
    pub train: Vec<Triplet>,
    pub test: Vec<Triplet>,
    pub history: TrainHistory,
    pub table: String,
    pub manifest: Manifest,
}

/// Metrics shown in the before/after table, in display order.
fn table_rows(k: usize) -> Vec<(String, String)> {
    vec![
        ("triplet_accuracy".into(), "Triplet Accuracy".into()),
        (evaluation::TOP1_COSINE_MATCH.into(), evaluation::TOP1_COSINE_MATCH.into()),
        (evaluation::recall_key(k), evaluation::recall_key(k)),
        (evaluation::COSINE_SIM_AT_1.into(), evaluation::COSINE_SIM_AT_1.into()),
        (evaluation::avg_sim_key(k), evaluation::avg_sim_key(k)),
        ("mean_cos_pos".into(), "Mean cos(a,p)".into()),
        ("mean_cos_neg".into(), "Mean cos(a,n)".into()),
        ("separation".into(), "Separation".into()),
    ]
}

/// Plain-text before/after comparison.
pub fn comparison_table(base: &EvalReport, fine: &EvalReport, k: usize) -> String {
    let rows = table_rows(k);
    let w = rows.iter().map(|(_, l)| l.len()).max().unwrap_or(6).max(6);
    let mut s = format!("{:<w$}  {:>10}  {:>10}  {:>10}\n", "Metric", "Base", "Fine-tuned", "Change");
    s.push_str(&format!("{}\n", "-".repeat(w + 36)));
    for (key, label) in rows {
        let (b, f) = (base.get(&key).unwrap_or(f64::NAN), fine.get(&key).unwrap_or(f64::NAN));
        s.push_str(&format!("{label:<w$}  {b:>10.4}  {f:>10.4}  {:>+10.4}\n", f - b));
    }
    s
}

fn comparison_csv(base: &EvalReport, fine: &EvalReport, k: usize) -> String {
    let mut s = String::from("metric,base,fine,change\n");
    for (key, _) in table_rows(k) {
        let (b, f) = (base.get(&key).unwrap_or(f64::NAN), fine.get(&key).unwrap_or(f64::NAN));
        s.push_str(&format!("{key},{b},{f},{}\n", f - b));
    }
    s
}

pub fn jsonl<T: Serialize>(items: &[T]) -> Vec<u8> {
    let mut out = Vec::new();
    for it in items {
        out.extend(serde_json::to_vec(it).expect("item serializes"));
        out.push(b'\n');
    }
    out
}

/// Triplet, retrieval and similarity-distribution metrics for one checkpoint.
pub fn evaluate_checkpoint(
    params: &EncoderParams,
    tok: &TokenizerModel,
    test: &[Triplet],
    pairs: &[dataset::QueryPassagePair],
    chunks: &[corpus::Chunk],
    k: usize,
    bins: usize,
) -> Result<(EvalReport, evaluation::SimilarityHistogram)> {
    let embs = evaluation::triplet_embeddings(params, test, tok)?;
    let mut report = evaluation::retrieval_metrics(params, pairs, chunks, tok, k)?;
    report.metrics.insert("triplet_accuracy".into(), evaluation::accuracy_from_embeddings(&embs)?);
    let hist = evaluation::histogram_from_embeddings(&embs, bins)?;
    report.metrics.insert("mean_cos_pos".into(), hist.mean_pos);
    report.metrics.insert("mean_cos_neg".into(), hist.mean_neg);
    report.metrics.insert("separation".into(), hist.separation);
    report.metadata.insert("n_triplets".into(), test.len().to_string());
    Ok((report, hist))
}

/// Runs the full synthetic experiment and writes every artifact to `work_dir`.
pub fn run_repro(cfg: &ReproConfig, work_dir: &Path) -> Result<ReproOutcome> {
    let seed = cfg.seed;
    let mut out = ArtifactWriter::new(work_dir, Manifest::new("repro", Some(seed), cfg.to_map()))?;
    out.write("config.txt", config_text(&out.manifest.config).as_bytes())?;

    // Data.
    let (train, test) = synth::generate_triplets(module_seed(seed, seed_offset::SYNTH), cfg.n_train, cfg.n_test);
    let docs = synth::generate_documents(module_seed(seed, seed_offset::SYNTH));
    let (chunks, _report) = corpus::ingest(&docs, &cfg.chunk)?;
    out.write("triplets_train.jsonl", &jsonl(&train))?;
    out.write("triplets_test.jsonl", &jsonl(&test))?;
    out.write("chunks.jsonl", &jsonl(&chunks))?;

    let stub = StubQueryGenerator::new(&chunks);
    let pairs = dataset::build_retrieval_benchmark(
        &chunks,
        &stub,
        cfg.negatives_per_query,
        module_seed(seed, seed_offset::BENCHMARK),
        1,
    )?;
    out.write("pairs.jsonl", &jsonl(&pairs))?;

    // Tokenizer: BPE on the document text, then atomic domain terms.
    let texts: Vec<&str> = chunks.iter().map(|c| c.text.as_str()).collect();
    let base_tok = train_bpe(&texts, cfg.bpe_vocab)?;
    let (tok, ext) = extend_vocab(&base_tok, &synth::domain_terms());
    out.write("tokenizer.json", tok.to_json().as_bytes())?;

    // Encoders.
    let dims = Dims::new(base_tok.vocab_size(), cfg.d, cfg.h);
    let pre = init_params(dims, module_seed(seed, seed_offset::ENCODER_INIT))?;
    let base = align_embeddings(&pre, &ext, module_seed(seed, seed_offset::ALIGN))?;
    let train_cfg = TrainConfig { seed: module_seed(seed, seed_offset::TRAIN), ..cfg.train.clone() };
    let (fine, history) = trainer::train(&base, &train, &tok, &train_cfg)?;
    out.write("base.ckpt", &base.to_bytes())?;
    out.write("fine.ckpt", &fine.to_bytes())?;
    out.write("train_history.csv", history.to_csv().as_bytes())?;

    // Evaluation.
    let (base_report, base_hist) = evaluate_checkpoint(&base, &tok, &test, &pairs, &chunks, cfg.k, cfg.bins)?;
    let (fine_report, fine_hist) = evaluate_checkpoint(&fine, &tok, &test, &pairs, &chunks, cfg.k, cfg.bins)?;
    out.write("metrics_base.json", base_report.to_json().as_bytes())?;
    out.write("metrics_fine.json", fine_report.to_json().as_bytes())?;
    out.write("similarity_base.csv", base_hist.to_csv().as_bytes())?;
    out.write("similarity_fine.csv", fine_hist.to_csv().as_bytes())?;
    out.write("comparison.csv", comparison_csv(&base_report, &fine_report, cfg.k).as_bytes())?;

    let (deltas, mean) = trainer::weight_deltas(&base, &fine)?;
    out.write("weight_deltas.csv", trainer::weight_deltas_csv(&deltas, mean).as_bytes())?;

    // Projections of a held-out sample.
    let sample = &test[..cfg.projection_triplets.min(test.len())];
    let (points, labels) = evaluation::labelled_points(&evaluation::triplet_embeddings(&fine, sample, &tok)?);
    let tsne_cfg = TsneConfig::new(cfg.tsne_perplexity, cfg.tsne_iterations, module_seed(seed, seed_offset::TSNE));
    let (tsne, trace) = evaluation::tsne_project(&points, &labels, &tsne_cfg)?;
    let pca = evaluation::pca_project(&points, &labels)?;
    out.write("projection_tsne.csv", tsne.to_csv().as_bytes())?;
    out.write("projection_pca.csv", pca.to_csv().as_bytes())?;
    let kl: String = std::iter::once("iteration,kl\n".to_string())
        .chain(trace.kl.iter().map(|(i, v)| format!("{i},{v}\n")))
        .collect();
    out.write("tsne_kl.csv", kl.as_bytes())?;

    // Retrieval index over the fine-tuned encoder.
    let (dense, sparse) = index::build(&chunks, &fine, &tok)?;
    index::save(&out.path("index"), &dense, &sparse)?;
    out.record(&format!("index/{}", index::DENSE_FILE))?;
    out.record(&format!("index/{}", index::SPARSE_FILE))?;

    let table = comparison_table(&base_report, &fine_report, cfg.k);
    out.write("comparison.txt", table.as_bytes())?;
    let manifest = out.finish()?;
    Ok(ReproOutcome {
        base: base_report,
        fine: fine_report,
        base_params: base,
        fine_params: fine,
        tokenizer: tok,
        train,
        test,
        history,
        table,
        manifest,
    })
}

pub fn config_text(config: &BTreeMap<String, String>) -> String {
    config.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
}

impl From<String> for Error {
    fn from(msg: String) -> Self {
        Error::Config(msg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_hash_is_order_independent_and_sensitive() {
        let mut a = BTreeMap::new();
        a.insert("x".to_string(), "1".to_string());
        a.insert("y".to_string(), "2".to_string());
        let mut b = BTreeMap::new();
        b.insert("y".to_string(), "2".to_string());
        b.insert("x".to_string(), "1".to_string());
        assert_eq!(config_hash(&a), config_hash(&b));
        b.insert("y".to_string(), "3".to_string());
        assert_ne!(config_hash(&a), config_hash(&b));
    }

    #[test]
    fn sha256_known_vector() {
        assert_eq!(sha256_hex(b"abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }

    #[test]
    fn module_seeds_are_distinct() {
        let offs = [
            seed_offset::SYNTH,
            seed_offset::ENCODER_INIT,
            seed_offset::ALIGN,
            seed_offset::TRAIN,
            seed_offset::TSNE,
            seed_offset::BENCHMARK,
        ];
        let seeds: std::collections::HashSet<u64> = offs.iter().map(|&o| module_seed(7, o)).collect();
        assert_eq!(seeds.len(), offs.len());
    }

    #[test]
    fn small_repro_writes_manifest_covering_outputs() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = ReproConfig {
            n_train: 60,
            n_test: 30,
            d: 8,
            h: 8,
            bpe_vocab: 300,
            train: TrainConfig { epochs: 1, ..TrainConfig::default() },
            projection_triplets: 10,
            tsne_perplexity: 5.0,
            tsne_iterations: 300,
            ..ReproConfig::with_seed(1)
        };
        let outcome = run_repro(&cfg, dir.path()).unwrap();
        for (rel, digest) in &outcome.manifest.outputs {
            assert_eq!(&sha256_hex(&fs::read(dir.path().join(rel)).unwrap()), digest, "{rel}");
        }
        assert!(outcome.manifest.outputs.contains_key("index/dense.didx"));
        assert!(dir.path().join(MANIFEST_FILE).exists());
        assert!(outcome.table.contains("Triplet Accuracy"));
    }
}
