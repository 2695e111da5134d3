//! Document ingestion: artifact removal, structural chunking, near-duplicate
//! removal and boilerplate filtering for RFC-style plain text.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("document {0} is empty after cleaning")]
    EmptyDocument(String),
    #[error("invalid chunk config: {0}")]
    BadConfig(String),
    #[error("duplicate doc_id {0}")]
    DuplicateDocId(String),
    #[error("{path}: not valid UTF-8")]
    InvalidUtf8 { path: String },
    #[error("chunk file line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, CorpusError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceKind {
    Rfc,
    VendorManual,
    Other,
}

impl SourceKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SourceKind::Rfc => "rfc",
            SourceKind::VendorManual => "vendor_manual",
            SourceKind::Other => "other",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s.trim() {
            "rfc" => Some(SourceKind::Rfc),
            "vendor_manual" => Some(SourceKind::VendorManual),
            "other" => Some(SourceKind::Other),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RawDocument {
    pub doc_id: String,
    pub source_kind: SourceKind,
    pub text: String,
    pub metadata: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Chunk {
    pub chunk_id: String,
    pub doc_id: String,
    pub section_path: Vec<String>,
    pub text: String,
    #[serde(skip)]
    pub char_len: usize,
    pub provenance: BTreeMap<String, String>,
}

impl Chunk {
    pub fn new(
        chunk_id: impl Into<String>,
        doc_id: impl Into<String>,
        section_path: Vec<String>,
        text: impl Into<String>,
    ) -> Self {
        let text = text.into();
        Chunk {
            chunk_id: chunk_id.into(),
            doc_id: doc_id.into(),
            section_path,
            char_len: text.chars().count(),
            text,
            provenance: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChunkConfig {
    pub min_chars: usize,
    pub max_chars: usize,
    pub art_line_ratio: f64,
    pub dedup_jaccard: f64,
    pub shingle_len: usize,
    pub boilerplate_prefixes: Vec<String>,
}

impl Default for ChunkConfig {
    fn default() -> Self {
        ChunkConfig {
            min_chars: 200,
            max_chars: 2000,
            art_line_ratio: 0.7,
            dedup_jaccard: 0.9,
            shingle_len: 5,
            boilerplate_prefixes: vec![
                "Copyright".to_string(),
                "Table of Contents".to_string(),
                "Status of This Memo".to_string(),
            ],
        }
    }
}

impl ChunkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.min_chars == 0 || self.min_chars > self.max_chars {
            return Err(CorpusError::BadConfig(format!(
                "need 0 < min_chars <= max_chars, got {} / {}",
                self.min_chars, self.max_chars
            )));
        }
        for (name, v) in [
            ("art_line_ratio", self.art_line_ratio),
            ("dedup_jaccard", self.dedup_jaccard),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(CorpusError::BadConfig(format!("{name} must be in [0,1], got {v}")));
            }
        }
        if self.shingle_len == 0 {
            return Err(CorpusError::BadConfig("shingle_len must be >= 1".into()));
        }
        Ok(())
    }
}

/// Cleans text with the default ASCII-art threshold (0.7).
pub fn clean_text(text: &str) -> String {
    clean_text_with(text, ChunkConfig::default().art_line_ratio)
}

/// Ratio of non-alphanumeric characters among the non-whitespace characters
/// of a line. Blank lines have ratio 0.
fn non_alnum_ratio(line: &str) -> f64 {
    let mut total = 0usize;
    let mut other = 0usize;
    for c in line.chars().filter(|c| !c.is_whitespace()) {
        total += 1;
        if !c.is_alphanumeric() {
            other += 1;
        }
    }
    if total == 0 {
        0.0
    } else {
        other as f64 / total as f64
    }
}

fn collapse_inline_ws(line: &str) -> String {
    let mut out = String::with_capacity(line.len());
    let mut in_run = false;
    for c in line.chars() {
        if c == ' ' || c == '\t' {
            if !in_run {
                out.push(' ');
            }
            in_run = true;
        } else {
            out.push(c);
            in_run = false;
        }
    }
    out.trim_end().to_string()
}

pub fn clean_text_with(text: &str, art_line_ratio: f64) -> String {
    let without_nul: String = text.chars().filter(|&c| c != '\0').collect();
    let mut lines: Vec<String> = Vec::new();
    for raw in without_nul.split('\n') {
        let raw = raw.strip_suffix('\r').unwrap_or(raw);
        if non_alnum_ratio(raw) > art_line_ratio {
            continue;
        }
        lines.push(collapse_inline_ws(raw));
    }

    // Runs of more than two blank lines shrink to a single blank line.
    let mut out: Vec<String> = Vec::with_capacity(lines.len());
    let mut i = 0;
    while i < lines.len() {
        if lines[i].is_empty() {
            let start = i;
            while i < lines.len() && lines[i].is_empty() {
                i += 1;
            }
            let run = i - start;
            let keep = if run > 2 { 1 } else { run };
            out.extend(std::iter::repeat_n(String::new(), keep));
        } else {
            out.push(std::mem::take(&mut lines[i]));
            i += 1;
        }
    }

    let first = out.iter().position(|l| !l.is_empty());
    let last = out.iter().rposition(|l| !l.is_empty());
    match (first, last) {
        (Some(a), Some(b)) => out[a..=b].join("\n"),
        _ => String::new(),
    }
}

/// Depth of a numbered heading such as `3.2.1 Foo` or `1. Introduction`.
fn numbered_heading_depth(line: &str) -> Option<usize> {
    if line.starts_with(char::is_whitespace) {
        return None;
    }
    let bytes = line.as_bytes();
    let mut depth = 0;
    let mut i = 0;
    loop {
        let start = i;
        while i < bytes.len() && bytes[i].is_ascii_digit() {
            i += 1;
        }
        if i == start {
            return None;
        }
        depth += 1;
        if i < bytes.len() && bytes[i] == b'.' {
            i += 1;
            if i < bytes.len() && bytes[i].is_ascii_digit() {
                continue;
            }
        }
        break;
    }
    if i < bytes.len() && (bytes[i] == b' ' || bytes[i] == b'\t') {
        let rest = line[i..].trim();
        if !rest.is_empty() {
            return Some(depth);
        }
    }
    None
}

fn is_caps_heading(line: &str) -> bool {
    if line.is_empty() || line.starts_with(char::is_whitespace) {
        return false;
    }
    let words = line.split_whitespace().count();
    let mut has_alpha = false;
    for c in line.chars() {
        if c.is_alphabetic() {
            has_alpha = true;
            if c.is_lowercase() {
                return false;
            }
        }
    }
    has_alpha && words <= 8
}

/// Heading depth if `line` is a structural heading.
pub fn heading_depth(line: &str) -> Option<usize> {
    numbered_heading_depth(line).or_else(|| is_caps_heading(line).then_some(1))
}

struct Segment {
    path: Vec<String>,
    text: String,
}

pub fn chunk_document(doc: &RawDocument, cfg: &ChunkConfig) -> Result<Vec<Chunk>> {
    cfg.validate()?;
    if doc.text.trim().is_empty() {
        return Err(CorpusError::EmptyDocument(doc.doc_id.clone()));
    }

    // Sections: (heading stack, paragraphs)
    let mut sections: Vec<(Vec<String>, Vec<String>)> = vec![(Vec::new(), Vec::new())];
    let mut stack: Vec<(usize, String)> = Vec::new();
    let mut para: Vec<&str> = Vec::new();

    fn flush(para: &mut Vec<&str>, sections: &mut [(Vec<String>, Vec<String>)]) {
        if !para.is_empty() {
            sections.last_mut().unwrap().1.push(para.join("\n"));
            para.clear();
        }
    }

    for line in doc.text.lines() {
        if let Some(depth) = heading_depth(line) {
            flush(&mut para, &mut sections);
            while stack.last().is_some_and(|(d, _)| *d >= depth) {
                stack.pop();
            }
            stack.push((depth, line.trim().to_string()));
            let path = stack.iter().map(|(_, h)| h.clone()).collect();
            sections.push((path, Vec::new()));
        } else if line.trim().is_empty() {
            flush(&mut para, &mut sections);
        } else {
            para.push(line);
        }
    }
    flush(&mut para, &mut sections);

    // Pack paragraphs up to max_chars, splitting only at paragraph boundaries.
    let mut segments: Vec<Segment> = Vec::new();
    for (path, paras) in sections {
        let mut cur = String::new();
        let mut cur_len = 0usize;
        for p in paras {
            let plen = p.chars().count();
            if !cur.is_empty() && cur_len + 2 + plen > cfg.max_chars {
                segments.push(Segment { path: path.clone(), text: std::mem::take(&mut cur) });
                cur_len = 0;
            }
            if !cur.is_empty() {
                cur.push_str("\n\n");
                cur_len += 2;
            }
            cur.push_str(&p);
            cur_len += plen;
        }
        if !cur.is_empty() {
            segments.push(Segment { path, text: cur });
        }
    }
    if segments.is_empty() {
        return Err(CorpusError::EmptyDocument(doc.doc_id.clone()));
    }

    // Short segments merge forward; a short tail merges backward.
    let mut merged: Vec<Segment> = Vec::new();
    let mut pending: Option<String> = None;
    for seg in segments {
        let text = match pending.take() {
            Some(prefix) => format!("{prefix}\n\n{}", seg.text),
            None => seg.text,
        };
        if text.chars().count() < cfg.min_chars {
            pending = Some(text);
        } else {
            merged.push(Segment { path: seg.path, text });
        }
    }
    if let Some(tail) = pending {
        match merged.last_mut() {
            Some(last) => {
                last.text.push_str("\n\n");
                last.text.push_str(&tail);
            }
            None => merged.push(Segment { path: Vec::new(), text: tail }),
        }
    }

    Ok(merged
        .into_iter()
        .enumerate()
        .map(|(i, seg)| {
            let mut chunk = Chunk::new(
                format!("{}#{:04}", doc.doc_id, i),
                doc.doc_id.clone(),
                seg.path,
                seg.text,
            );
            chunk.provenance = doc.metadata.clone();
            chunk.provenance.insert("doc_id".into(), doc.doc_id.clone());
            chunk.provenance.insert("source_kind".into(), doc.source_kind.as_str().into());
            chunk
        })
        .collect())
}

/// Character shingles of length `k`; texts shorter than `k` form one shingle.
pub fn shingles(text: &str, k: usize) -> HashSet<&str> {
    let idx: Vec<usize> = text.char_indices().map(|(i, _)| i).chain([text.len()]).collect();
    let n_chars = idx.len() - 1;
    if n_chars < k {
        return std::iter::once(text).collect();
    }
    (0..=n_chars - k).map(|s| &text[idx[s]..idx[s + k]]).collect()
}

pub fn jaccard<T: Eq + std::hash::Hash>(a: &HashSet<T>, b: &HashSet<T>) -> f64 {
    if a.is_empty() && b.is_empty() {
        return 1.0;
    }
    let inter = a.intersection(b).count();
    let union = a.len() + b.len() - inter;
    inter as f64 / union as f64
}

pub fn shingle_jaccard(a: &str, b: &str, k: usize) -> f64 {
    jaccard(&shingles(a, k), &shingles(b, k))
}

pub fn dedup_chunks(chunks: Vec<Chunk>, cfg: &ChunkConfig) -> Vec<Chunk> {
    let sets: Vec<HashSet<&str>> = chunks.iter().map(|c| shingles(&c.text, cfg.shingle_len)).collect();
    let mut kept: Vec<usize> = Vec::new();
    for i in 0..chunks.len() {
        if kept.iter().all(|&j| jaccard(&sets[i], &sets[j]) < cfg.dedup_jaccard) {
            kept.push(i);
        }
    }
    drop(sets);
    let keep: HashSet<usize> = kept.into_iter().collect();
    chunks
        .into_iter()
        .enumerate()
        .filter_map(|(i, c)| keep.contains(&i).then_some(c))
        .collect()
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct FilterReport {
    pub blocklisted: usize,
    pub too_short: usize,
    pub low_alpha: usize,
}

pub const MIN_ALPHA_RATIO: f64 = 0.4;

fn alpha_ratio(text: &str) -> f64 {
    let mut total = 0usize;
    let mut alpha = 0usize;
    for c in text.chars().filter(|c| !c.is_whitespace()) {
        total += 1;
        if c.is_alphabetic() {
            alpha += 1;
        }
    }
    if total == 0 {
        0.0
    } else {
        alpha as f64 / total as f64
    }
}

/// Drops blocklisted, short and symbol-heavy chunks. Each removed chunk is
/// counted under the first rule it trips (blocklist, length, alphabetic ratio).
pub fn filter_boilerplate(chunks: Vec<Chunk>, cfg: &ChunkConfig) -> (Vec<Chunk>, FilterReport) {
    let mut report = FilterReport::default();
    let kept = chunks
        .into_iter()
        .filter(|c| {
            let head = c.text.trim_start();
            if cfg.boilerplate_prefixes.iter().any(|p| head.starts_with(p.as_str())) {
                report.blocklisted += 1;
                false
            } else if c.char_len < cfg.min_chars {
                report.too_short += 1;
                false
            } else if alpha_ratio(&c.text) < MIN_ALPHA_RATIO {
                report.low_alpha += 1;
                false
            } else {
                true
            }
        })
        .collect();
    (kept, report)
}

/// Reads every non-`.meta` file in `dir` as one document (sorted by name).
pub fn load_documents(dir: &Path) -> Result<Vec<RawDocument>> {
    let mut paths: Vec<_> = fs::read_dir(dir)?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()?;
    paths.retain(|p| p.is_file() && p.extension().is_none_or(|e| e != "meta"));
    paths.sort();

    let mut seen = HashSet::new();
    let mut docs = Vec::with_capacity(paths.len());
    for path in paths {
        let doc_id = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        if !seen.insert(doc_id.clone()) {
            return Err(CorpusError::DuplicateDocId(doc_id));
        }
        let bytes = fs::read(&path)?;
        let text = String::from_utf8(bytes)
            .map_err(|_| CorpusError::InvalidUtf8 { path: path.display().to_string() })?;

        let mut metadata = BTreeMap::new();
        let meta_path = path.with_file_name(format!("{doc_id}.meta"));
        if meta_path.is_file() {
            for line in fs::read_to_string(&meta_path)?.lines() {
                if let Some((k, v)) = line.split_once('=') {
                    metadata.insert(k.trim().to_string(), v.trim().to_string());
                }
            }
        }
        let source_kind = metadata
            .get("source_kind")
            .and_then(|s| SourceKind::parse(s))
            .unwrap_or(if metadata.contains_key("rfc_id") {
                SourceKind::Rfc
            } else {
                SourceKind::Other
            });
        docs.push(RawDocument { doc_id, source_kind, text, metadata });
    }
    Ok(docs)
}

/// Full ingest pipeline: clean, chunk, filter, dedup.
pub fn ingest(docs: &[RawDocument], cfg: &ChunkConfig) -> Result<(Vec<Chunk>, FilterReport)> {
    cfg.validate()?;
    let mut all = Vec::new();
    for doc in docs {
        let cleaned = RawDocument {
            text: clean_text_with(&doc.text, cfg.art_line_ratio),
            ..doc.clone()
        };
        match chunk_document(&cleaned, cfg) {
            Ok(chunks) => all.extend(chunks),
            Err(CorpusError::EmptyDocument(_)) => continue,
            Err(e) => return Err(e),
        }
    }
    let (filtered, report) = filter_boilerplate(all, cfg);
    Ok((dedup_chunks(filtered, cfg), report))
}

pub fn write_chunks(path: &Path, chunks: &[Chunk]) -> Result<()> {
    let mut out = std::io::BufWriter::new(fs::File::create(path)?);
    for c in chunks {
        let line = serde_json::to_string(c).expect("chunk serializes");
        writeln!(out, "{line}")?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_chunks(path: &Path) -> Result<Vec<Chunk>> {
    let reader = BufReader::new(fs::File::open(path)?);
    let mut chunks = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut c: Chunk = serde_json::from_str(&line)
            .map_err(|e| CorpusError::Parse { line: i + 1, msg: e.to_string() })?;
        c.char_len = c.text.chars().count();
        chunks.push(c);
    }
    Ok(chunks)
}
