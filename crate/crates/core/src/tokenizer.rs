//! Byte-level BPE tokenizer with whole-word domain vocabulary extension.
//!
//! Text is split into alternating runs of whitespace and non-whitespace
//! ("pieces"); merges never cross a piece boundary. Extension terms are
//! atomic tokens matched against whole non-whitespace pieces, so texts that
//! do not contain a term segment exactly as under the base model.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const TOKENIZER_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum TokenizerError {
    #[error("training corpus is empty")]
    CorpusEmpty,
    #[error("vocab_size must be at least 256, got {0}")]
    VocabTooSmall(usize),
    #[error("tokenizer file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, TokenizerError>;

pub type TokenId = u32;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenizerModel {
    /// Token bytes, indexed by id.
    tokens: Vec<Vec<u8>>,
    ids: HashMap<Vec<u8>, TokenId>,
    merges: Vec<(TokenId, TokenId)>,
    merge_rank: HashMap<(TokenId, TokenId), (usize, TokenId)>,
    /// Whole-word atomic terms added by [`extend_vocab`].
    added: HashMap<String, TokenId>,
    extensions: Vec<VocabExtension>,
    byte_fallback: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VocabExtension {
    pub new_terms: Vec<String>,
    pub id_offset: usize,
    #[serde(skip)]
    pub skipped: Vec<String>,
}

impl VocabExtension {
    /// Ids that existed before this extension; their rows are unchanged.
    pub fn shared_ids(&self) -> std::ops::Range<usize> {
        0..self.id_offset
    }

    pub fn new_ids(&self) -> std::ops::Range<usize> {
        self.id_offset..self.id_offset + self.new_terms.len()
    }
}

fn split_pieces(text: &str) -> impl Iterator<Item = &str> {
    let mut rest = text;
    std::iter::from_fn(move || {
        let first = rest.chars().next()?;
        let ws = first.is_whitespace();
        let end = rest
            .char_indices()
            .find(|(_, c)| c.is_whitespace() != ws)
            .map_or(rest.len(), |(i, _)| i);
        let (piece, tail) = rest.split_at(end);
        rest = tail;
        Some(piece)
    })
}

impl TokenizerModel {
    fn byte_level() -> Self {
        let tokens: Vec<Vec<u8>> = (0..=255u8).map(|b| vec![b]).collect();
        let ids = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i as TokenId)).collect();
        TokenizerModel {
            tokens,
            ids,
            merges: Vec::new(),
            merge_rank: HashMap::new(),
            added: HashMap::new(),
            extensions: Vec::new(),
            byte_fallback: true,
        }
    }

    pub fn vocab_size(&self) -> usize {
        self.tokens.len()
    }

    pub fn merges(&self) -> &[(TokenId, TokenId)] {
        &self.merges
    }

    pub fn extensions(&self) -> &[VocabExtension] {
        &self.extensions
    }

    pub fn token_bytes(&self, id: TokenId) -> Option<&[u8]> {
        self.tokens.get(id as usize).map(Vec::as_slice)
    }

    pub fn id_of(&self, token: &str) -> Option<TokenId> {
        self.ids.get(token.as_bytes()).copied()
    }

    /// Iterates `(token bytes, id)` in id order.
    pub fn vocab(&self) -> impl Iterator<Item = (&[u8], TokenId)> {
        self.tokens.iter().enumerate().map(|(i, t)| (t.as_slice(), i as TokenId))
    }

    fn push_token(&mut self, bytes: Vec<u8>) -> TokenId {
        if let Some(&id) = self.ids.get(&bytes) {
            return id;
        }
        let id = self.tokens.len() as TokenId;
        self.ids.insert(bytes.clone(), id);
        self.tokens.push(bytes);
        id
    }

    fn add_merge(&mut self, left: TokenId, right: TokenId) {
        let mut bytes = self.tokens[left as usize].clone();
        bytes.extend_from_slice(&self.tokens[right as usize]);
        let out = self.push_token(bytes);
        self.merge_rank.insert((left, right), (self.merges.len(), out));
        self.merges.push((left, right));
    }

    fn encode_piece(&self, piece: &str, out: &mut Vec<TokenId>) {
        if let Some(&id) = self.added.get(piece) {
            out.push(id);
            return;
        }
        let mut syms: Vec<TokenId> = piece.bytes().map(TokenId::from).collect();
        loop {
            let best = syms
                .windows(2)
                .enumerate()
                .filter_map(|(i, w)| self.merge_rank.get(&(w[0], w[1])).map(|&(r, id)| (r, i, id)))
                .min();
            let Some((rank, _, id)) = best else { break };
            // Merge every occurrence of this pair left to right.
            let pair = self.merges[rank];
            let mut next = Vec::with_capacity(syms.len());
            let mut i = 0;
            while i < syms.len() {
                if i + 1 < syms.len() && (syms[i], syms[i + 1]) == pair {
                    next.push(id);
                    i += 2;
                } else {
                    next.push(syms[i]);
                    i += 1;
                }
            }
            syms = next;
        }
        out.extend(syms);
    }

    pub fn tokenize(&self, text: &str) -> Vec<TokenId> {
        let mut out = Vec::new();
        for piece in split_pieces(text) {
            self.encode_piece(piece, &mut out);
        }
        out
    }

    pub fn detokenize_bytes(&self, ids: &[TokenId]) -> Vec<u8> {
        ids.iter()
            .filter_map(|&id| self.tokens.get(id as usize))
            .flat_map(|t| t.iter().copied())
            .collect()
    }

    pub fn detokenize(&self, ids: &[TokenId]) -> String {
        String::from_utf8_lossy(&self.detokenize_bytes(ids)).into_owned()
    }
}

/// Trains a byte-level BPE model. The most frequent adjacent pair is merged
/// first; equal counts go to the lexicographically smallest `(left, right)`
/// byte-string pair. Training stops at `vocab_size` or when no pair occurs
/// at least twice.
pub fn train_bpe<S: AsRef<str>>(corpus: &[S], vocab_size: usize) -> Result<TokenizerModel> {
    if vocab_size < 256 {
        return Err(TokenizerError::VocabTooSmall(vocab_size));
    }
    if corpus.iter().all(|s| s.as_ref().is_empty()) {
        return Err(TokenizerError::CorpusEmpty);
    }
    let mut model = TokenizerModel::byte_level();

    let mut piece_counts: BTreeMap<&str, usize> = BTreeMap::new();
    for text in corpus {
        for piece in split_pieces(text.as_ref()) {
            *piece_counts.entry(piece).or_default() += 1;
        }
    }
    let mut words: Vec<(Vec<TokenId>, usize)> = piece_counts
        .into_iter()
        .map(|(p, n)| (p.bytes().map(TokenId::from).collect(), n))
        .collect();

    while model.vocab_size() < vocab_size {
        let mut counts: HashMap<(TokenId, TokenId), usize> = HashMap::new();
        for (syms, n) in &words {
            for w in syms.windows(2) {
                *counts.entry((w[0], w[1])).or_default() += n;
            }
        }
        let best = counts
            .into_iter()
            .filter(|&(_, c)| c >= 2)
            .max_by(|(pa, ca), (pb, cb)| {
                ca.cmp(cb).then_with(|| {
                    let ka = (&model.tokens[pa.0 as usize], &model.tokens[pa.1 as usize]);
                    let kb = (&model.tokens[pb.0 as usize], &model.tokens[pb.1 as usize]);
                    kb.cmp(&ka)
                })
            });
        let Some(((left, right), _)) = best else { break };
        model.add_merge(left, right);
        let merged = model.merge_rank[&(left, right)].1;
        for (syms, _) in &mut words {
            let mut i = 0;
            let mut out = Vec::with_capacity(syms.len());
            while i < syms.len() {
                if i + 1 < syms.len() && syms[i] == left && syms[i + 1] == right {
                    out.push(merged);
                    i += 2;
                } else {
                    out.push(syms[i]);
                    i += 1;
                }
            }
            *syms = out;
        }
    }
    Ok(model)
}

/// Adds each term as an atomic whole-word token. Terms that are already a
/// single vocab token, contain whitespace, are empty, or repeat an earlier
/// entry are skipped and listed in `skipped`.
pub fn extend_vocab<S: AsRef<str>>(
    model: &TokenizerModel,
    terms: &[S],
) -> (TokenizerModel, VocabExtension) {
    let mut out = model.clone();
    let id_offset = model.vocab_size();
    let mut new_terms = Vec::new();
    let mut skipped = Vec::new();
    for term in terms {
        let term = term.as_ref();
        let invalid = term.is_empty() || term.chars().any(char::is_whitespace);
        if invalid || out.ids.contains_key(term.as_bytes()) {
            skipped.push(term.to_string());
            continue;
        }
        let id = out.push_token(term.as_bytes().to_vec());
        out.added.insert(term.to_string(), id);
        new_terms.push(term.to_string());
    }
    let ext = VocabExtension {
        new_terms,
        id_offset,
        skipped,
    };
    if !ext.new_terms.is_empty() {
        out.extensions.push(ext.clone());
    }
    (out, ext)
}

// GPT-2 style reversible byte <-> printable char mapping, so vocab keys are
// valid JSON strings.
fn byte_to_char_table() -> [char; 256] {
    let mut table = ['\0'; 256];
    let mut n = 0u32;
    for b in 0..=255u8 {
        let printable = matches!(b, b'!'..=b'~' | 0xA1..=0xAC | 0xAE..=0xFF);
        table[b as usize] = if printable {
            char::from(b)
        } else {
            let c = char::from_u32(256 + n).unwrap();
            n += 1;
            c
        };
    }
    table
}

fn encode_token(bytes: &[u8], table: &[char; 256]) -> String {
    bytes.iter().map(|&b| table[b as usize]).collect()
}

fn decode_token(s: &str, rev: &HashMap<char, u8>) -> Result<Vec<u8>> {
    s.chars()
        .map(|c| rev.get(&c).copied().ok_or_else(|| TokenizerError::Format(format!("bad token char {c:?}"))))
        .collect()
}

#[derive(Serialize, Deserialize)]
struct TokenizerFile {
    version: u32,
    byte_fallback: bool,
    vocab: BTreeMap<String, TokenId>,
    merges: Vec<(String, String)>,
    extensions: Vec<VocabExtension>,
}

impl TokenizerModel {
    pub fn to_json(&self) -> String {
        let table = byte_to_char_table();
        let vocab = self
            .tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (encode_token(t, &table), i as TokenId))
            .collect();
        let merges = self
            .merges
            .iter()
            .map(|&(l, r)| {
                (encode_token(&self.tokens[l as usize], &table), encode_token(&self.tokens[r as usize], &table))
            })
            .collect();
        let file = TokenizerFile {
            version: TOKENIZER_FORMAT_VERSION,
            byte_fallback: self.byte_fallback,
            vocab,
            merges,
            extensions: self.extensions.clone(),
        };
        serde_json::to_string_pretty(&file).expect("tokenizer serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let file: TokenizerFile = serde_json::from_str(s).map_err(|e| TokenizerError::Format(e.to_string()))?;
        if file.version != TOKENIZER_FORMAT_VERSION {
            return Err(TokenizerError::Format(format!("unsupported version {}", file.version)));
        }
        let table = byte_to_char_table();
        let rev: HashMap<char, u8> = table.iter().enumerate().map(|(b, &c)| (c, b as u8)).collect();

        let n = file.vocab.len();
        let mut tokens: Vec<Option<Vec<u8>>> = vec![None; n];
        for (tok, id) in &file.vocab {
            let slot = tokens
                .get_mut(*id as usize)
                .ok_or_else(|| TokenizerError::Format(format!("id {id} not dense")))?;
            *slot = Some(decode_token(tok, &rev)?);
        }
        let tokens: Vec<Vec<u8>> = tokens
            .into_iter()
            .collect::<Option<_>>()
            .ok_or_else(|| TokenizerError::Format("vocab ids not dense".into()))?;
        if n < 256 || (0..256).any(|b| tokens[b] != [b as u8]) {
            return Err(TokenizerError::Format("first 256 ids must be the byte alphabet".into()));
        }

        let mut model = TokenizerModel::byte_level();
        model.byte_fallback = file.byte_fallback;
        for t in &tokens[256..] {
            model.push_token(t.clone());
        }
        for (l, r) in &file.merges {
            let l = model.ids.get(&decode_token(l, &rev)?).copied();
            let r = model.ids.get(&decode_token(r, &rev)?).copied();
            match (l, r) {
                (Some(l), Some(r)) => model.add_merge(l, r),
                _ => return Err(TokenizerError::Format("merge refers to unknown token".into())),
            }
        }
        for ext in &file.extensions {
            for term in &ext.new_terms {
                let id = model
                    .id_of(term)
                    .ok_or_else(|| TokenizerError::Format(format!("extension term {term:?} not in vocab")))?;
                model.added.insert(term.clone(), id);
            }
        }
        model.extensions = file.extensions;
        if model.vocab_size() != n {
            return Err(TokenizerError::Format("vocab contains duplicate tokens".into()));
        }
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }
}
