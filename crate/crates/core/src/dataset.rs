//! Triplet datasets, token statistics, lexical hard-negative mining and
//! query–passage benchmark construction.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{shingle_jaccard, Chunk};
use crate::querygen::QueryGenerator;
use crate::tokenizer::TokenizerModel;

/// Shingle-Jaccard at or above which a candidate counts as a copy of the positive.
pub const POSITIVE_GUARD_JACCARD: f64 = 0.9;
pub const POSITIVE_GUARD_SHINGLE: usize = 5;
pub const MAX_QUERY_WORDS: usize = 20;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("triplet {id}: {msg}")]
    InvariantViolation { id: String, msg: String },
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("no hard-negative candidates remain")]
    NoCandidates,
    #[error("corpus has {have} chunks, need at least {need}")]
    CorpusTooSmall { have: usize, need: usize },
    #[error("chunk {0} is empty")]
    EmptyChunk(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, DatasetError>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Triplet {
    pub id: String,
    pub anchor: String,
    pub positive: String,
    pub negative: String,
    #[serde(default)]
    pub topic: Option<String>,
}

impl Triplet {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: &str| Err(DatasetError::InvariantViolation { id: self.id.clone(), msg: msg.into() });
        if self.anchor.is_empty() || self.positive.is_empty() || self.negative.is_empty() {
            return fail("empty field");
        }
        if self.anchor == self.positive {
            return fail("anchor equals positive");
        }
        if self.positive == self.negative {
            return fail("positive equals negative");
        }
        Ok(())
    }
}

/// Maps source field names onto triplet fields when ingesting foreign files.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FieldMapping {
    pub id: String,
    pub anchor: String,
    pub positive: String,
    pub negative: String,
    pub topic: String,
}

impl Default for FieldMapping {
    fn default() -> Self {
        FieldMapping {
            id: "id".into(),
            anchor: "anchor".into(),
            positive: "positive".into(),
            negative: "negative".into(),
            topic: "topic".into(),
        }
    }
}

pub fn load_triplets(path: &Path) -> Result<Vec<Triplet>> {
    load_triplets_mapped(path, &FieldMapping::default())
}

pub fn load_triplets_mapped(path: &Path, map: &FieldMapping) -> Result<Vec<Triplet>> {
    let reader = BufReader::new(fs::File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |msg: String| DatasetError::Parse { line: lineno, msg };
        let obj: serde_json::Map<String, serde_json::Value> =
            serde_json::from_str(&line).map_err(|e| parse_err(e.to_string()))?;
        let field = |name: &str| -> Result<String> {
            match obj.get(name) {
                Some(serde_json::Value::String(s)) => Ok(s.clone()),
                Some(serde_json::Value::Number(n)) => Ok(n.to_string()),
                Some(_) => Err(parse_err(format!("field {name:?} is not a string"))),
                None => Err(parse_err(format!("missing field {name:?}"))),
            }
        };
        let topic = match obj.get(&map.topic) {
            None | Some(serde_json::Value::Null) => None,
            Some(serde_json::Value::String(s)) => Some(s.clone()),
            Some(_) => return Err(parse_err("topic is not a string".into())),
        };
        let t = Triplet {
            id: field(&map.id)?,
            anchor: field(&map.anchor)?,
            positive: field(&map.positive)?,
            negative: field(&map.negative)?,
            topic,
        };
        t.validate()?;
        out.push(t);
    }
    Ok(out)
}

pub fn save_triplets(triplets: &[Triplet], path: &Path) -> Result<()> {
    let mut out = std::io::BufWriter::new(fs::File::create(path)?);
    for t in triplets {
        t.validate()?;
        writeln!(out, "{}", serde_json::to_string(t).expect("triplet serializes"))?;
    }
    out.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FieldStats {
    pub avg_tokens: f64,
    pub min_tokens: usize,
    pub max_tokens: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DatasetStats {
    pub anchor: FieldStats,
    pub positive: FieldStats,
    pub negative: FieldStats,
    pub vocab_size: usize,
}

fn field_stats(counts: &[usize]) -> FieldStats {
    FieldStats {
        avg_tokens: counts.iter().sum::<usize>() as f64 / counts.len() as f64,
        min_tokens: counts.iter().copied().min().unwrap_or(0),
        max_tokens: counts.iter().copied().max().unwrap_or(0),
    }
}

pub fn compute_stats(triplets: &[Triplet], tok: &TokenizerModel) -> Result<DatasetStats> {
    if triplets.is_empty() {
        return Err(DatasetError::EmptyDataset);
    }
    let mut seen = HashSet::new();
    let mut counts = [Vec::new(), Vec::new(), Vec::new()];
    for t in triplets {
        for (slot, text) in counts.iter_mut().zip([&t.anchor, &t.positive, &t.negative]) {
            let ids = tok.tokenize(text);
            slot.push(ids.len());
            seen.extend(ids);
        }
    }
    Ok(DatasetStats {
        anchor: field_stats(&counts[0]),
        positive: field_stats(&counts[1]),
        negative: field_stats(&counts[2]),
        vocab_size: seen.len(),
    })
}

/// Lowercased whitespace tokens.
pub fn word_set(text: &str) -> HashSet<String> {
    text.split_whitespace().map(str::to_lowercase).collect()
}

pub fn word_count(text: &str) -> usize {
    text.split_whitespace().count()
}

/// Ranks candidates by word-set Jaccard with the anchor (descending, ties by
/// ascending chunk id), skipping near-copies of the positive.
pub fn mine_hard_negatives(anchor: &str, positive: &str, candidates: &[Chunk], k: usize) -> Result<Vec<String>> {
    let anchor_words = word_set(anchor);
    let mut scored: Vec<(f64, &str)> = candidates
        .iter()
        .filter(|c| shingle_jaccard(&c.text, positive, POSITIVE_GUARD_SHINGLE) < POSITIVE_GUARD_JACCARD)
        .map(|c| (crate::corpus::jaccard(&anchor_words, &word_set(&c.text)), c.chunk_id.as_str()))
        .collect();
    if scored.is_empty() {
        return Err(DatasetError::NoCandidates);
    }
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(b.1)));
    Ok(scored.into_iter().take(k.max(1)).map(|(_, id)| id.to_string()).collect())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryPassagePair {
    pub query: String,
    pub gold_chunk_id: String,
    pub hard_negative_ids: Vec<String>,
    pub provenance: BTreeMap<String, String>,
}

/// One pair per chunk, negatives mined against the generated query.
pub fn build_retrieval_benchmark(
    chunks: &[Chunk],
    querygen: &(dyn QueryGenerator + Sync),
    negatives_per_query: usize,
    seed: u64,
    max_in_flight: usize,
) -> Result<Vec<QueryPassagePair>> {
    let need = negatives_per_query + 1;
    if chunks.len() < need {
        return Err(DatasetError::CorpusTooSmall { have: chunks.len(), need });
    }
    let queries = crate::querygen::generate_all(querygen, chunks, max_in_flight)?;
    let mut pairs = Vec::with_capacity(chunks.len());
    for (chunk, q) in chunks.iter().zip(queries) {
        let others: Vec<Chunk> = chunks.iter().filter(|c| c.chunk_id != chunk.chunk_id).cloned().collect();
        let negs = match mine_hard_negatives(&q.text, &chunk.text, &others, negatives_per_query) {
            Ok(n) => n,
            Err(DatasetError::NoCandidates) => Vec::new(),
            Err(e) => return Err(e),
        };
        let mut provenance = chunk.provenance.clone();
        provenance.insert("querygen".into(), querygen.name().into());
        provenance.insert("fallback".into(), q.fallback.to_string());
        provenance.insert("seed".into(), seed.to_string());
        pairs.push(QueryPassagePair {
            query: q.text,
            gold_chunk_id: chunk.chunk_id.clone(),
            hard_negative_ids: negs,
            provenance,
        });
    }
    Ok(pairs)
}

pub fn save_pairs(pairs: &[QueryPassagePair], path: &Path) -> Result<()> {
    let mut out = std::io::BufWriter::new(fs::File::create(path)?);
    for p in pairs {
        writeln!(out, "{}", serde_json::to_string(p).expect("pair serializes"))?;
    }
    out.flush()?;
    Ok(())
}

pub fn load_pairs(path: &Path) -> Result<Vec<QueryPassagePair>> {
    let reader = BufReader::new(fs::File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let p: QueryPassagePair =
            serde_json::from_str(&line).map_err(|e| DatasetError::Parse { line: i + 1, msg: e.to_string() })?;
        if p.hard_negative_ids.contains(&p.gold_chunk_id) {
            return Err(DatasetError::Parse { line: i + 1, msg: "gold id listed as a negative".into() });
        }
        out.push(p);
    }
    Ok(out)
}

/// Smoothed document frequencies over chunk texts, for TF-IDF term picking.
#[derive(Debug, Clone, Default)]
pub struct IdfTable {
    n_docs: usize,
    df: HashMap<String, usize>,
}

impl IdfTable {
    pub fn from_texts<S: AsRef<str>>(texts: &[S]) -> Self {
        let mut df: HashMap<String, usize> = HashMap::new();
        for t in texts {
            let terms: HashSet<String> = content_terms(t.as_ref()).collect();
            for term in terms {
                *df.entry(term).or_default() += 1;
            }
        }
        IdfTable { n_docs: texts.len(), df }
    }

    /// `ln((1 + N) / (1 + df)) + 1`
    pub fn idf(&self, term: &str) -> f64 {
        let df = self.df.get(term).copied().unwrap_or(0);
        ((1 + self.n_docs) as f64 / (1 + df) as f64).ln() + 1.0
    }
}

const STOPWORDS: &[&str] = &[
    "a", "an", "and", "are", "as", "at", "be", "been", "but", "by", "can", "do", "does", "for", "from", "has",
    "have", "if", "in", "into", "is", "it", "its", "may", "must", "not", "of", "on", "or", "shall", "should",
    "such", "than", "that", "the", "their", "then", "there", "these", "this", "those", "to", "was", "were",
    "when", "where", "which", "while", "will", "with", "would",
];

/// Lowercased alphanumeric words that are not stopwords or pure numbers.
pub fn content_terms(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
        .filter(|w| !STOPWORDS.contains(&w.as_str()) && !w.chars().all(|c| c.is_ascii_digit()))
}

/// Top two TF-IDF terms; ties go to the lexicographically smaller term.
pub fn top_terms(text: &str, idf: &IdfTable) -> Option<(String, String)> {
    let mut tf: BTreeMap<String, usize> = BTreeMap::new();
    for t in content_terms(text) {
        *tf.entry(t).or_default() += 1;
    }
    let mut scored: Vec<(f64, String)> = tf.into_iter().map(|(t, n)| (n as f64 * idf.idf(&t), t)).collect();
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(&b.1)));
    let mut it = scored.into_iter().map(|(_, t)| t);
    let t1 = it.next()?;
    let t2 = it.next().unwrap_or_else(|| t1.clone());
    Some((t1, t2))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tokenizer::train_bpe;

    fn trip(id: &str, a: &str, p: &str, n: &str) -> Triplet {
        Triplet { id: id.into(), anchor: a.into(), positive: p.into(), negative: n.into(), topic: None }
    }

    #[test]
    fn triplet_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.jsonl");
        let mut ts = vec![trip("1", "a", "b", "c"), trip("2", "x", "y", "z"), trip("3", "q", "r", "s")];
        ts[1].topic = Some("ran".into());
        save_triplets(&ts, &path).unwrap();
        assert_eq!(load_triplets(&path).unwrap(), ts);
    }

    #[test]
    fn missing_key_reports_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.jsonl");
        fs::write(
            &path,
            "{\"id\":\"1\",\"anchor\":\"a\",\"positive\":\"b\",\"negative\":\"c\"}\n{\"id\":\"2\",\"anchor\":\"a\",\"positive\":\"b\"}\n",
        )
        .unwrap();
        match load_triplets(&path) {
            Err(DatasetError::Parse { line: 2, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn invariant_violation_names_triplet() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.jsonl");
        fs::write(&path, "{\"id\":\"t7\",\"anchor\":\"same\",\"positive\":\"same\",\"negative\":\"c\"}\n").unwrap();
        match load_triplets(&path) {
            Err(DatasetError::InvariantViolation { id, .. }) => assert_eq!(id, "t7"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn field_mapping() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.jsonl");
        fs::write(&path, "{\"qid\":3,\"query\":\"q\",\"pos\":\"p\",\"neg\":\"n\"}\n").unwrap();
        let map = FieldMapping {
            id: "qid".into(),
            anchor: "query".into(),
            positive: "pos".into(),
            negative: "neg".into(),
            topic: "topic".into(),
        };
        let ts = load_triplets_mapped(&path, &map).unwrap();
        assert_eq!(ts, vec![trip("3", "q", "p", "n")]);
    }

    #[test]
    fn stats_examples() {
        let tok = train_bpe(&["ab ab"], 256).unwrap(); // bytes only
        let one = vec![trip("1", "ab", "cd", "ef")];
        let s = compute_stats(&one, &tok).unwrap();
        for f in [&s.anchor, &s.positive, &s.negative] {
            assert_eq!((f.avg_tokens, f.min_tokens, f.max_tokens), (2.0, 2, 2));
        }
        assert_eq!(s.vocab_size, 6);

        let two = vec![trip("1", "abc", "x", "y"), trip("2", "abcde", "x", "z")];
        let s = compute_stats(&two, &tok).unwrap();
        assert_eq!((s.anchor.avg_tokens, s.anchor.min_tokens, s.anchor.max_tokens), (4.0, 3, 5));
        assert!(matches!(compute_stats(&[], &tok), Err(DatasetError::EmptyDataset)));
    }

    fn chunk(id: &str, text: &str) -> Chunk {
        Chunk::new(id, "d", vec![], text)
    }

    #[test]
    fn hard_negative_examples() {
        let cands = vec![chunk("c1", "cell reselection in idle mode gNB"), chunk("c2", "optical fiber splicing")];
        let got = mine_hard_negatives("handover between gNB cells", "unrelated positive", &cands, 1).unwrap();
        assert_eq!(got, vec!["c1"]);

        let all = mine_hard_negatives("handover between gNB cells", "unrelated positive", &cands, 10).unwrap();
        assert_eq!(all, vec!["c1", "c2"]);

        let only = vec![chunk("p", "the positive passage text")];
        assert!(matches!(
            mine_hard_negatives("anchor", "the positive passage text", &only, 1),
            Err(DatasetError::NoCandidates)
        ));
    }

    #[test]
    fn hard_negative_ties_by_id() {
        let cands = vec![chunk("b", "zz yy"), chunk("a", "xx ww")];
        assert_eq!(mine_hard_negatives("q", "p", &cands, 2).unwrap(), vec!["a", "b"]);
    }

    #[test]
    fn top_terms_tfidf() {
        let texts = [
            "The MPLS label stack carries one MPLS label per level, and each label is popped.",
            "Routing protocols exchange reachability information.",
            "Routing tables map prefixes to next hops.",
        ];
        let idf = IdfTable::from_texts(&texts);
        assert_eq!(top_terms(texts[0], &idf), Some(("label".into(), "mpls".into())));
        assert_eq!(top_terms("handover", &idf), Some(("handover".into(), "handover".into())));
        assert_eq!(top_terms("the of 123", &idf), None);
    }

    proptest::proptest! {
        #[test]
        fn ranking_ignores_input_order(
            words in proptest::collection::vec("[a-d]{1,2}( [a-d]{1,2}){0,4}", 2..10),
            seed in 0u64..1000,
        ) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let cands: Vec<Chunk> = words.iter().enumerate().map(|(i, w)| chunk(&format!("c{i:02}"), w)).collect();
            let mut shuffled = cands.clone();
            shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let a = mine_hard_negatives("a b c", "zzzzzzzzzzzz", &cands, 3);
            let b = mine_hard_negatives("a b c", "zzzzzzzzzzzz", &shuffled, 3);
            proptest::prop_assert_eq!(a.ok(), b.ok());
        }

        #[test]
        fn stats_min_avg_max(texts in proptest::collection::vec("[a-z ]{1,30}", 1..8)) {
            let tok = train_bpe(&["some training text here"], 270).unwrap();
            let ts: Vec<Triplet> = texts.iter().enumerate()
                .map(|(i, t)| trip(&i.to_string(), t, &format!("{t}p"), &format!("{t}n")))
                .collect();
            let s = compute_stats(&ts, &tok).unwrap();
            for f in [&s.anchor, &s.positive, &s.negative] {
                proptest::prop_assert!(f.min_tokens as f64 <= f.avg_tokens + 1e-12);
                proptest::prop_assert!(f.avg_tokens <= f.max_tokens as f64 + 1e-12);
            }
            proptest::prop_assert!(s.vocab_size >= 1);
        }
    }
}
