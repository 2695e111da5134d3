//! One function per subcommand. Every command resolves its configuration,
//! reads its inputs from the work dir, writes outputs through an
//! [`ArtifactWriter`] and leaves a manifest under `manifests/`.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use telemb_core::corpus::{self, Chunk};
use telemb_core::dataset::{self, FieldMapping};
use telemb_core::encoder::{align_embeddings, init_params, Dims, EncoderParams};
use telemb_core::evaluation::{self, ProjectionMethod, StsPair, TsneConfig};
use telemb_core::index::{self, HybridConfig};
use telemb_core::pipeline::{self, jsonl, module_seed, seed_offset, ArtifactWriter, Manifest, ReproConfig};
use telemb_core::querygen::{LlmClientConfig, LlmQueryGenerator, QueryGenerator, StubQueryGenerator};
use telemb_core::synth;
use telemb_core::tokenizer::{extend_vocab, train_bpe, TokenizerModel};
use telemb_core::trainer;
use telemb_core::Error;

use crate::config::Settings;
use crate::{
    AnalyzeCmd, Command, DatasetCmd, EvalCmd, GlobalOpts, IndexCmd, MethodArg, ModeArg, QueryGenKind, TokCmd,
};

pub const CHUNKS: &str = "chunks.jsonl";
pub const TRIPLETS: &str = "triplets.jsonl";
pub const TRIPLETS_TEST: &str = "triplets_test.jsonl";
pub const PAIRS: &str = "pairs.jsonl";
pub const TOKENIZER: &str = "tokenizer.json";
pub const BASE_CKPT: &str = "base.ckpt";
pub const FINE_CKPT: &str = "fine.ckpt";
pub const INDEX_DIR: &str = "index";

#[derive(Debug)]
pub enum CliError {
    /// Bad invocation; exit code 2.
    Usage(String),
    /// Failure inside the pipeline; exit code 1.
    Domain(Error),
}

impl<E: Into<Error>> From<E> for CliError {
    fn from(e: E) -> Self {
        CliError::Domain(e.into())
    }
}

type CliResult<T = ()> = Result<T, CliError>;

/// Resolved settings plus the work dir.
struct Ctx {
    work: PathBuf,
    settings: Settings,
}

impl Ctx {
    fn new(global: &GlobalOpts) -> CliResult<Self> {
        let mut settings = Settings::default();
        if let Some(path) = &global.config {
            settings.load_file(path)?;
        }
        for kv in &global.overrides {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| CliError::Usage(format!("--set expects KEY=VALUE, got {kv:?}")))?;
            settings.set(k, v)?;
        }
        if let Some(seed) = global.seed {
            settings.set("seed", &seed.to_string())?;
        }
        Ok(Ctx { work: global.work_dir.clone(), settings })
    }

    fn set(&mut self, key: &str, value: Option<impl ToString>) -> CliResult {
        if let Some(v) = value {
            self.settings.set(key, &v.to_string())?;
        }
        Ok(())
    }

    fn path(&self, rel: &str) -> PathBuf {
        self.work.join(rel)
    }

    fn or_default(&self, given: Option<PathBuf>, rel: &str) -> PathBuf {
        given.unwrap_or_else(|| self.path(rel))
    }

    fn writer(&self, command: &str) -> CliResult<ArtifactWriter> {
        let seed = self.settings.seed()?;
        Ok(ArtifactWriter::new(&self.work, Manifest::new(command, Some(seed), self.settings.map()))?)
    }

    fn seed(&self, offset: u64) -> CliResult<u64> {
        Ok(module_seed(self.settings.seed()?, offset))
    }

    fn tokenizer(&self) -> CliResult<TokenizerModel> {
        Ok(TokenizerModel::load(&self.path(TOKENIZER))?)
    }

    fn chunks(&self) -> CliResult<Vec<Chunk>> {
        Ok(corpus::read_chunks(&self.path(CHUNKS))?)
    }

    /// Held-out triplets if present, otherwise the training file.
    fn eval_triplets(&self, given: Option<PathBuf>) -> PathBuf {
        given.unwrap_or_else(|| {
            let test = self.path(TRIPLETS_TEST);
            if test.is_file() {
                test
            } else {
                self.path(TRIPLETS)
            }
        })
    }
}

fn finish(out: ArtifactWriter, command: &str) -> CliResult {
    out.finish_as(&format!("manifests/{command}.json"))?;
    Ok(())
}

fn load_ckpt(out: &mut ArtifactWriter, path: &Path) -> CliResult<EncoderParams> {
    out.manifest.add_input(path)?;
    Ok(EncoderParams::load(path)?)
}

pub fn run(global: &GlobalOpts, command: Command) -> CliResult {
    let mut ctx = Ctx::new(global)?;
    match command {
        Command::Ingest { corpus } => ingest(&ctx, &corpus),
        Command::Dataset(cmd) => match cmd {
            DatasetCmd::Import { input, field_map } => dataset_import(&ctx, &input, field_map.as_deref()),
            DatasetCmd::Stats => dataset_stats(&ctx),
            DatasetCmd::Benchmark { negatives_per_query, querygen, llm_endpoint } => {
                ctx.set("negatives_per_query", negatives_per_query)?;
                ctx.set(
                    "querygen",
                    querygen.map(|q| match q {
                        QueryGenKind::Stub => "stub",
                        QueryGenKind::Llm => "llm",
                    }),
                )?;
                ctx.set("llm_endpoint", llm_endpoint)?;
                dataset_benchmark(&ctx)
            }
            DatasetCmd::Synth { n_train, n_test } => dataset_synth(&ctx, n_train, n_test),
        },
        Command::Tok(cmd) => match cmd {
            TokCmd::Train { vocab_size } => {
                ctx.set("vocab_size", vocab_size)?;
                tok_train(&ctx)
            }
            TokCmd::Extend { terms_file } => tok_extend(&ctx, &terms_file),
        },
        Command::Train { triplets, base } => train(&ctx, triplets, base),
        Command::Eval(cmd) => match cmd {
            EvalCmd::Triplets { triplets, checkpoint } => eval_triplets(&ctx, triplets, checkpoint),
            EvalCmd::Retrieval { k, checkpoint } => {
                ctx.set("k", k)?;
                eval_retrieval(&ctx, checkpoint)
            }
            EvalCmd::Sts { pairs_file, checkpoint } => eval_sts(&ctx, &pairs_file, checkpoint),
        },
        Command::Analyze(cmd) => match cmd {
            AnalyzeCmd::Dist { triplets, checkpoint } => analyze_dist(&ctx, triplets, checkpoint),
            AnalyzeCmd::Project { method, triplets, checkpoint } => {
                ctx.set(
                    "projection_method",
                    method.map(|m| match m {
                        MethodArg::Tsne => "tsne",
                        MethodArg::Pca => "pca",
                    }),
                )?;
                analyze_project(&ctx, triplets, checkpoint)
            }
            AnalyzeCmd::Deltas { base, fine } => analyze_deltas(&ctx, base, fine),
        },
        Command::Index(cmd) => match cmd {
            IndexCmd::Build { checkpoint } => index_build(&ctx, checkpoint),
            IndexCmd::Query { query, mode, lambda, k, checkpoint } => {
                ctx.set("lambda", lambda)?;
                ctx.set("k", k)?;
                index_query(&ctx, &query, mode, checkpoint)
            }
        },
        Command::Repro => repro(&ctx),
    }
}

fn ingest(ctx: &Ctx, corpus_dir: &Path) -> CliResult {
    let cfg = ctx.settings.chunk()?;
    let docs = corpus::load_documents(corpus_dir)?;
    let (chunks, report) = corpus::ingest(&docs, &cfg)?;
    let mut out = ctx.writer("ingest")?;
    out.manifest.add_input(corpus_dir)?;
    out.write(CHUNKS, &jsonl(&chunks))?;
    let report_json = serde_json::json!({
        "documents": docs.len(),
        "chunks": chunks.len(),
        "removed": report,
    });
    out.write("ingest_report.json", format!("{report_json:#}\n").as_bytes())?;
    finish(out, "ingest")?;
    println!(
        "ingested {} documents into {} chunks ({} blocklisted, {} too short, {} low-alpha)",
        docs.len(),
        chunks.len(),
        report.blocklisted,
        report.too_short,
        report.low_alpha
    );
    Ok(())
}

fn parse_field_map(spec: &str) -> CliResult<FieldMapping> {
    let mut map = FieldMapping::default();
    for part in spec.split(',').filter(|p| !p.trim().is_empty()) {
        let (field, source) = part
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("--field-map entry {part:?} is not FIELD=SOURCE")))?;
        let source = source.trim().to_string();
        match field.trim() {
            "id" => map.id = source,
            "anchor" => map.anchor = source,
            "positive" => map.positive = source,
            "negative" => map.negative = source,
            "topic" => map.topic = source,
            other => return Err(CliError::Usage(format!("unknown triplet field {other:?} in --field-map"))),
        }
    }
    Ok(map)
}

fn dataset_import(ctx: &Ctx, input: &Path, field_map: Option<&str>) -> CliResult {
    let map = match field_map {
        Some(spec) => parse_field_map(spec)?,
        None => FieldMapping::default(),
    };
    let triplets = dataset::load_triplets_mapped(input, &map)?;
    if triplets.is_empty() {
        return Err(dataset::DatasetError::EmptyDataset.into());
    }
    let mut out = ctx.writer("dataset-import")?;
    out.manifest.add_input(input)?;
    out.write(TRIPLETS, &jsonl(&triplets))?;
    finish(out, "dataset-import")?;
    println!("imported {} triplets", triplets.len());
    Ok(())
}

fn dataset_stats(ctx: &Ctx) -> CliResult {
    let tok = ctx.tokenizer()?;
    let path = ctx.path(TRIPLETS);
    let triplets = dataset::load_triplets(&path)?;
    let stats = dataset::compute_stats(&triplets, &tok)?;
    let json = serde_json::to_string_pretty(&stats).expect("stats serialize") + "\n";
    let mut out = ctx.writer("dataset-stats")?;
    out.manifest.add_input(&path)?;
    out.write("dataset_stats.json", json.as_bytes())?;
    finish(out, "dataset-stats")?;
    print!("{json}");
    Ok(())
}

fn dataset_benchmark(ctx: &Ctx) -> CliResult {
    let s = &ctx.settings;
    let chunks = ctx.chunks()?;
    let stub = StubQueryGenerator::new(&chunks);
    let in_flight: usize = s.parse("llm_max_in_flight")?;
    let (gen, max_in_flight): (Box<dyn QueryGenerator + Sync>, usize) = match s.get("querygen") {
        "stub" => (Box::new(stub), 1),
        "llm" => {
            let cfg = LlmClientConfig {
                endpoint_url: s.get("llm_endpoint").to_string(),
                model_name: s.get("llm_model").to_string(),
                api_key_env_var: s.get("llm_api_key_env").to_string(),
                timeout: Duration::from_secs(s.parse("llm_timeout_secs")?),
                max_retries: s.parse("llm_max_retries")?,
                ..LlmClientConfig::default()
            };
            (Box::new(LlmQueryGenerator::new(cfg, stub)), in_flight)
        }
        other => return Err(Error::Config(format!("querygen must be stub or llm, got {other:?}")).into()),
    };
    let pairs = dataset::build_retrieval_benchmark(
        &chunks,
        gen.as_ref(),
        s.parse("negatives_per_query")?,
        ctx.seed(seed_offset::BENCHMARK)?,
        max_in_flight,
    )?;
    let fallbacks = pairs.iter().filter(|p| p.provenance.get("fallback").is_some_and(|f| f == "true")).count();
    let mut out = ctx.writer("dataset-benchmark")?;
    out.manifest.add_input(&ctx.path(CHUNKS))?;
    out.write(PAIRS, &jsonl(&pairs))?;
    finish(out, "dataset-benchmark")?;
    println!("wrote {} query/passage pairs ({fallbacks} used the fallback generator)", pairs.len());
    Ok(())
}

fn dataset_synth(ctx: &Ctx, n_train: usize, n_test: usize) -> CliResult {
    let seed = ctx.seed(seed_offset::SYNTH)?;
    let (train, test) = synth::generate_triplets(seed, n_train, n_test);
    let mut out = ctx.writer("dataset-synth")?;
    for doc in synth::generate_documents(seed) {
        out.write(&format!("corpus/{}.txt", doc.doc_id), doc.text.as_bytes())?;
        let mut meta = format!("source_kind={}\n", doc.source_kind.as_str());
        for (k, v) in &doc.metadata {
            meta.push_str(&format!("{k}={v}\n"));
        }
        out.write(&format!("corpus/{}.meta", doc.doc_id), meta.as_bytes())?;
    }
    out.write(TRIPLETS, &jsonl(&train))?;
    out.write(TRIPLETS_TEST, &jsonl(&test))?;
    let terms: String = synth::domain_terms().iter().map(|t| format!("{t}\n")).collect();
    out.write("domain_terms.txt", terms.as_bytes())?;
    finish(out, "dataset-synth")?;
    println!("wrote synthetic corpus, {} train and {} held-out triplets", train.len(), test.len());
    Ok(())
}

fn tok_train(ctx: &Ctx) -> CliResult {
    let chunks = ctx.chunks()?;
    let texts: Vec<&str> = chunks.iter().map(|c| c.text.as_str()).collect();
    let tok = train_bpe(&texts, ctx.settings.parse("vocab_size")?)?;
    let mut out = ctx.writer("tok-train")?;
    out.manifest.add_input(&ctx.path(CHUNKS))?;
    out.write(TOKENIZER, tok.to_json().as_bytes())?;
    finish(out, "tok-train")?;
    println!("trained tokenizer with {} tokens ({} merges)", tok.vocab_size(), tok.merges().len());
    Ok(())
}

fn tok_extend(ctx: &Ctx, terms_file: &Path) -> CliResult {
    let tok = ctx.tokenizer()?;
    let text = fs::read_to_string(terms_file)?;
    let terms: Vec<&str> = text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')).collect();
    let (extended, ext) = extend_vocab(&tok, &terms);
    let mut out = ctx.writer("tok-extend")?;
    out.manifest.add_input(terms_file)?;
    out.manifest.add_input(&ctx.path(TOKENIZER))?;
    out.write(TOKENIZER, extended.to_json().as_bytes())?;
    finish(out, "tok-extend")?;
    println!(
        "added {} terms at ids {}..{} ({} skipped)",
        ext.new_terms.len(),
        ext.id_offset,
        ext.id_offset + ext.new_terms.len(),
        ext.skipped.len()
    );
    for s in &ext.skipped {
        println!("  skipped {s:?}");
    }
    Ok(())
}

/// Fresh encoder sized to the pre-extension vocab, grown once per extension.
fn fresh_base(ctx: &Ctx, tok: &TokenizerModel) -> CliResult<EncoderParams> {
    let s = &ctx.settings;
    let exts = tok.extensions();
    let vocab = exts.first().map_or(tok.vocab_size(), |e| e.id_offset);
    let mut params = init_params(Dims::new(vocab, s.parse("d")?, s.parse("h")?), ctx.seed(seed_offset::ENCODER_INIT)?)?;
    for (i, ext) in exts.iter().enumerate() {
        params = align_embeddings(&params, ext, ctx.seed(seed_offset::ALIGN)?.wrapping_add(i as u64))?;
    }
    Ok(params)
}

fn train(ctx: &Ctx, triplets: Option<PathBuf>, base: Option<PathBuf>) -> CliResult {
    let tok = ctx.tokenizer()?;
    let triplets_path = ctx.or_default(triplets, TRIPLETS);
    let data = dataset::load_triplets(&triplets_path)?;
    let mut out = ctx.writer("train")?;
    out.manifest.add_input(&triplets_path)?;
    out.manifest.add_input(&ctx.path(TOKENIZER))?;
    let base = match base {
        Some(path) => load_ckpt(&mut out, &path)?,
        None => fresh_base(ctx, &tok)?,
    };
    let mut cfg = ctx.settings.train()?;
    cfg.seed = ctx.seed(seed_offset::TRAIN)?;
    let (fine, history) = trainer::train(&base, &data, &tok, &cfg)?;
    let (deltas, mean) = trainer::weight_deltas(&base, &fine)?;
    out.write(BASE_CKPT, &base.to_bytes())?;
    out.write(FINE_CKPT, &fine.to_bytes())?;
    out.write("train_history.csv", history.to_csv().as_bytes())?;
    out.write("weight_deltas.csv", trainer::weight_deltas_csv(&deltas, mean).as_bytes())?;
    finish(out, "train")?;
    print!("{}", history.to_csv());
    println!("checkpoint {} -> {}", base.checkpoint_id(), fine.checkpoint_id());
    Ok(())
}

fn metrics_name(checkpoint: &Path, kind: &str) -> String {
    let stem = checkpoint.file_stem().map_or("model".into(), |s| s.to_string_lossy().into_owned());
    format!("metrics_{kind}_{stem}.json")
}

fn eval_triplets(ctx: &Ctx, triplets: Option<PathBuf>, checkpoint: Option<PathBuf>) -> CliResult {
    let tok = ctx.tokenizer()?;
    let path = ctx.eval_triplets(triplets);
    let ckpt = ctx.or_default(checkpoint, FINE_CKPT);
    let mut out = ctx.writer("eval-triplets")?;
    let params = load_ckpt(&mut out, &ckpt)?;
    out.manifest.add_input(&path)?;
    let data = dataset::load_triplets(&path)?;
    let mut report = evaluation::EvalReport::default();
    report.metrics.insert("Triplet Accuracy".into(), evaluation::triplet_accuracy(&params, &data, &tok)?);
    report.metadata.insert("checkpoint_id".into(), params.checkpoint_id());
    report.metadata.insert("n_triplets".into(), data.len().to_string());
    out.write(&metrics_name(&ckpt, "triplets"), report.to_json().as_bytes())?;
    finish(out, "eval-triplets")?;
    print!("{}", report.to_csv());
    Ok(())
}

fn eval_retrieval(ctx: &Ctx, checkpoint: Option<PathBuf>) -> CliResult {
    let tok = ctx.tokenizer()?;
    let chunks = ctx.chunks()?;
    let pairs = dataset::load_pairs(&ctx.path(PAIRS))?;
    let ckpt = ctx.or_default(checkpoint, FINE_CKPT);
    let mut out = ctx.writer("eval-retrieval")?;
    let params = load_ckpt(&mut out, &ckpt)?;
    out.manifest.add_input(&ctx.path(PAIRS))?;
    out.manifest.add_input(&ctx.path(CHUNKS))?;
    let report = evaluation::retrieval_metrics(&params, &pairs, &chunks, &tok, ctx.settings.parse("k")?)?;
    out.write(&metrics_name(&ckpt, "retrieval"), report.to_json().as_bytes())?;
    finish(out, "eval-retrieval")?;
    print!("{}", report.to_csv());
    Ok(())
}

fn load_sts(path: &Path) -> CliResult<Vec<StsPair>> {
    let text = fs::read_to_string(path)?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| {
                CliError::Domain(Error::Dataset(dataset::DatasetError::Parse {
                    line: i + 1,
                    msg: e.to_string(),
                }))
            })
        })
        .collect()
}

fn eval_sts(ctx: &Ctx, pairs_file: &Path, checkpoint: Option<PathBuf>) -> CliResult {
    let tok = ctx.tokenizer()?;
    let ckpt = ctx.or_default(checkpoint, FINE_CKPT);
    let mut out = ctx.writer("eval-sts")?;
    let params = load_ckpt(&mut out, &ckpt)?;
    out.manifest.add_input(pairs_file)?;
    let pairs = load_sts(pairs_file)?;
    let mut report = evaluation::EvalReport::default();
    report.metrics.insert("STS Spearman".into(), evaluation::sts_spearman(&params, &tok, &pairs)?);
    report.metadata.insert("checkpoint_id".into(), params.checkpoint_id());
    report.metadata.insert("n_pairs".into(), pairs.len().to_string());
    out.write(&metrics_name(&ckpt, "sts"), report.to_json().as_bytes())?;
    finish(out, "eval-sts")?;
    print!("{}", report.to_csv());
    Ok(())
}

fn analyze_dist(ctx: &Ctx, triplets: Option<PathBuf>, checkpoint: Option<PathBuf>) -> CliResult {
    let tok = ctx.tokenizer()?;
    let path = ctx.eval_triplets(triplets);
    let ckpt = ctx.or_default(checkpoint, FINE_CKPT);
    let mut out = ctx.writer("analyze-dist")?;
    let params = load_ckpt(&mut out, &ckpt)?;
    out.manifest.add_input(&path)?;
    let data = dataset::load_triplets(&path)?;
    let hist = evaluation::similarity_distributions(&params, &data, &tok, ctx.settings.parse("bins")?)?;
    let stem = ckpt.file_stem().map_or("model".into(), |s| s.to_string_lossy().into_owned());
    out.write(&format!("similarity_{stem}.csv"), hist.to_csv().as_bytes())?;
    finish(out, "analyze-dist")?;
    println!(
        "mean cos(a,p) {:.4}  mean cos(a,n) {:.4}  separation {:.4}",
        hist.mean_pos, hist.mean_neg, hist.separation
    );
    Ok(())
}

fn analyze_project(ctx: &Ctx, triplets: Option<PathBuf>, checkpoint: Option<PathBuf>) -> CliResult {
    let s = &ctx.settings;
    let tok = ctx.tokenizer()?;
    let path = ctx.eval_triplets(triplets);
    let ckpt = ctx.or_default(checkpoint, FINE_CKPT);
    let mut out = ctx.writer("analyze-project")?;
    let params = load_ckpt(&mut out, &ckpt)?;
    out.manifest.add_input(&path)?;
    let data = dataset::load_triplets(&path)?;
    let sample = &data[..s.parse::<usize>("projection_triplets")?.min(data.len())];
    let (points, labels) = evaluation::labelled_points(&evaluation::triplet_embeddings(&params, sample, &tok)?);
    let method = s.projection_method()?;
    let (proj, name) = match method {
        ProjectionMethod::Tsne => {
            let cfg = TsneConfig::new(s.parse("perplexity")?, s.parse("tsne_iterations")?, ctx.seed(seed_offset::TSNE)?);
            let (proj, trace) = evaluation::tsne_project(&points, &labels, &cfg)?;
            if let Some((it, kl)) = trace.kl.last() {
                println!("final KL {kl:.6} at iteration {it}");
            }
            (proj, "tsne")
        }
        ProjectionMethod::Pca => (evaluation::pca_project(&points, &labels)?, "pca"),
    };
    out.write(&format!("projection_{name}.csv"), proj.to_csv().as_bytes())?;
    finish(out, "analyze-project")?;
    println!("projected {} points with {name}", proj.points.len());
    Ok(())
}

fn analyze_deltas(ctx: &Ctx, base: Option<PathBuf>, fine: Option<PathBuf>) -> CliResult {
    let mut out = ctx.writer("analyze-deltas")?;
    let base = load_ckpt(&mut out, &ctx.or_default(base, BASE_CKPT))?;
    let fine = load_ckpt(&mut out, &ctx.or_default(fine, FINE_CKPT))?;
    let (deltas, mean) = trainer::weight_deltas(&base, &fine)?;
    let csv = trainer::weight_deltas_csv(&deltas, mean);
    out.write("weight_deltas.csv", csv.as_bytes())?;
    finish(out, "analyze-deltas")?;
    print!("{csv}");
    Ok(())
}

fn index_build(ctx: &Ctx, checkpoint: Option<PathBuf>) -> CliResult {
    let tok = ctx.tokenizer()?;
    let chunks = ctx.chunks()?;
    let mut out = ctx.writer("index-build")?;
    let params = load_ckpt(&mut out, &ctx.or_default(checkpoint, FINE_CKPT))?;
    out.manifest.add_input(&ctx.path(CHUNKS))?;
    let (dense, sparse) = index::build(&chunks, &params, &tok)?;
    index::save(&out.path(INDEX_DIR), &dense, &sparse)?;
    out.record(&format!("{INDEX_DIR}/{}", index::DENSE_FILE))?;
    out.record(&format!("{INDEX_DIR}/{}", index::SPARSE_FILE))?;
    finish(out, "index-build")?;
    println!("indexed {} chunks with checkpoint {}", dense.len(), params.checkpoint_id());
    Ok(())
}

fn index_query(ctx: &Ctx, query: &str, mode: ModeArg, checkpoint: Option<PathBuf>) -> CliResult {
    let k: usize = ctx.settings.parse("k")?;
    let (dense, sparse) = index::load(&ctx.path(INDEX_DIR))?;
    let tok = ctx.tokenizer()?;
    let ranked = match mode {
        ModeArg::Sparse => index::query_sparse(&sparse, &tok, query, k)?,
        ModeArg::Dense | ModeArg::Hybrid => {
            let params = EncoderParams::load(&ctx.or_default(checkpoint, FINE_CKPT))?;
            if mode == ModeArg::Dense {
                index::query_dense(&dense, &params, &tok, query, k)?
            } else {
                let cfg = HybridConfig { lambda: ctx.settings.parse("lambda")?, top_k: k };
                index::query_hybrid(&dense, &sparse, &params, &tok, query, &cfg)?
            }
        }
    };
    for (rank, (id, score)) in ranked.iter().enumerate() {
        println!("{}\t{id}\t{score:.6}", rank + 1);
    }
    Ok(())
}

fn repro(ctx: &Ctx) -> CliResult {
    let cfg = ReproConfig::with_seed(ctx.settings.seed()?);
    let outcome = pipeline::run_repro(&cfg, &ctx.work)?;
    print!("{}", outcome.table);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn field_map_overrides_only_named_fields() {
        let m = parse_field_map("anchor=query, positive=pos").unwrap();
        assert_eq!(m.anchor, "query");
        assert_eq!(m.positive, "pos");
        assert_eq!(m.negative, "negative");
    }

    #[test]
    fn field_map_rejects_unknown_fields() {
        assert!(matches!(parse_field_map("label=x"), Err(CliError::Usage(_))));
        assert!(matches!(parse_field_map("anchor"), Err(CliError::Usage(_))));
    }
}
