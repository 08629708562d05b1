//! JSONL datasets, byte-level tokenization and exact-match scoring.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::predictor::PromptContext;
use crate::seqstate::TokenId;

/// A prompt with its expected generation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetItem {
    pub id: String,
    pub prompt: Vec<TokenId>,
    pub reference: Vec<TokenId>,
}

impl DatasetItem {
    pub fn context(&self) -> PromptContext<'_> {
        PromptContext::new(&self.id, &self.prompt, &self.reference)
    }
}

/// `prompt` / `reference` on disk: a string (byte-tokenized) or explicit ids.
#[derive(Deserialize)]
#[serde(untagged)]
enum TokenField {
    Text(String),
    Ids(Vec<u32>),
}

impl TokenField {
    fn into_ids(self) -> Vec<TokenId> {
        match self {
            TokenField::Text(s) => encode_bytes(&s),
            TokenField::Ids(v) => v.into_iter().map(TokenId).collect(),
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawItem {
    id: String,
    prompt: TokenField,
    reference: TokenField,
}

pub fn encode_bytes(text: &str) -> Vec<TokenId> {
    text.bytes().map(|b| TokenId(b as u32)).collect()
}

/// Inverse of [`encode_bytes`]; ids above 255 render as U+FFFD.
pub fn decode_bytes(tokens: &[TokenId]) -> String {
    let bytes: Vec<u8> = tokens.iter().map(|t| u8::try_from(t.0).unwrap_or(b'?')).collect();
    String::from_utf8_lossy(&bytes).into_owned()
}

/// Parses newline-delimited `{"id","prompt","reference"}` objects. Blank lines are skipped.
pub fn parse_dataset<R: BufRead>(input: R) -> Result<Vec<DatasetItem>> {
    let mut items = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawItem = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        if !seen.insert(raw.id.clone()) {
            return Err(Error::DuplicateId(raw.id));
        }
        items.push(DatasetItem {
            id: raw.id,
            prompt: raw.prompt.into_ids(),
            reference: raw.reference.into_ids(),
        });
    }
    Ok(items)
}

pub fn load_dataset(path: &Path) -> Result<Vec<DatasetItem>> {
    let file = File::open(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    parse_dataset(BufReader::new(file))
}

/// Checks references fit in `gen_len` and every id is inside the vocabulary
/// and distinct from the mask.
pub fn check_items(items: &[DatasetItem], gen_len: usize, vocab: usize, mask: TokenId) -> Result<()> {
    for item in items {
        if item.reference.len() > gen_len {
            return Err(Error::ReferenceTooLong {
                id: item.id.clone(),
                len: item.reference.len(),
                gen_len,
            });
        }
        for &t in item.prompt.iter().chain(&item.reference) {
            if t.index() >= vocab || t == mask {
                return Err(Error::TokenOutOfVocab { token: t.0, vocab });
            }
        }
    }
    Ok(())
}

/// Generated tokens equal the reference position-wise over the reference length.
pub fn exact_match(answer: &[TokenId], reference: &[TokenId]) -> bool {
    answer.len() >= reference.len() && answer[..reference.len()] == *reference
}

/// Fraction of answers that exactly match their item's reference.
pub fn evaluate_exact_match<A: AsRef<[TokenId]>>(answers: &[A], items: &[DatasetItem]) -> Result<f64> {
    if answers.len() != items.len() {
        return Err(Error::ArityMismatch {
            answers: answers.len(),
            items: items.len(),
        });
    }
    if items.is_empty() {
        return Err(Error::Arity { needed: 1, got: 0 });
    }
    let hits = answers
        .iter()
        .zip(items)
        .filter(|(a, item)| exact_match(a.as_ref(), &item.reference))
        .count();
    Ok(hits as f64 / items.len() as f64)
}
