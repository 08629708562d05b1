//! Generated-sequence state: token and mask buffers, block layout, and commits.
//!
//! Blocks are addressed 1-based (`1..=num_blocks`), steps within a block 0-based.
//! Masked slots always hold the reserved mask id, and a position that has been
//! unmasked is never masked again.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Index into a predictor vocabulary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TokenId(pub u32);

impl TokenId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl From<u32> for TokenId {
    fn from(value: u32) -> Self {
        TokenId(value)
    }
}

/// Prompt/generation split and the partition of the generation span into blocks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockLayout {
    pub prompt_len: usize,
    pub gen_len: usize,
    pub block_len: usize,
    pub num_blocks: usize,
}

impl BlockLayout {
    pub fn new(prompt_len: usize, gen_len: usize, block_len: usize) -> Result<Self> {
        if gen_len == 0 {
            return Err(Error::EmptyGeneration);
        }
        if block_len == 0 {
            return Err(Error::ZeroBlockLength);
        }
        if !gen_len.is_multiple_of(block_len) {
            return Err(Error::NonDivisibleLength { gen_len, block_len });
        }
        Ok(Self {
            prompt_len,
            gen_len,
            block_len,
            num_blocks: gen_len / block_len,
        })
    }

    pub fn total_len(&self) -> usize {
        self.prompt_len + self.gen_len
    }

    /// Absolute positions covered by block `b` (1-based).
    pub fn block_range(&self, b: usize) -> Result<Range<usize>> {
        self.check_block(b)?;
        let start = self.prompt_len + (b - 1) * self.block_len;
        Ok(start..start + self.block_len)
    }

    pub fn check_block(&self, b: usize) -> Result<()> {
        if b == 0 || b > self.num_blocks {
            return Err(Error::BlockOutOfRange {
                block: b,
                num_blocks: self.num_blocks,
            });
        }
        Ok(())
    }

    pub fn blocks(&self) -> impl Iterator<Item = usize> {
        1..=self.num_blocks
    }
}

/// Generation length and block length, independent of any prompt.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenLayout {
    pub gen_len: usize,
    pub block_len: usize,
}

impl GenLayout {
    pub fn new(gen_len: usize, block_len: usize) -> Result<Self> {
        BlockLayout::new(0, gen_len, block_len)?;
        Ok(Self { gen_len, block_len })
    }

    pub fn num_blocks(&self) -> usize {
        self.gen_len / self.block_len.max(1)
    }
}

impl Default for GenLayout {
    fn default() -> Self {
        Self {
            gen_len: 256,
            block_len: 32,
        }
    }
}

/// Positions committed by one denoising step, with the token written at each.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnmaskSelection {
    pub block: usize,
    pub step: usize,
    pub positions: Vec<usize>,
    pub tokens: Vec<TokenId>,
    pub fallback_used: bool,
}

impl UnmaskSelection {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SequenceState {
    tokens: Vec<TokenId>,
    masked: Vec<bool>,
    layout: BlockLayout,
    mask_id: TokenId,
}

impl SequenceState {
    /// Copies the prompt and fills the `gen_len` generation slots with `mask_id`.
    pub fn init(prompt: &[TokenId], gen_len: usize, block_len: usize, mask_id: TokenId) -> Result<Self> {
        let layout = BlockLayout::new(prompt.len(), gen_len, block_len)?;
        let mut tokens = prompt.to_vec();
        tokens.resize(layout.total_len(), mask_id);
        let mut masked = vec![false; prompt.len()];
        masked.resize(layout.total_len(), true);
        Ok(Self {
            tokens,
            masked,
            layout,
            mask_id,
        })
    }

    pub fn layout(&self) -> &BlockLayout {
        &self.layout
    }

    pub fn mask_id(&self) -> TokenId {
        self.mask_id
    }

    pub fn tokens(&self) -> &[TokenId] {
        &self.tokens
    }

    pub fn prompt(&self) -> &[TokenId] {
        &self.tokens[..self.layout.prompt_len]
    }

    pub fn generated(&self) -> &[TokenId] {
        &self.tokens[self.layout.prompt_len..]
    }

    pub fn is_masked(&self, position: usize) -> bool {
        self.masked.get(position).copied().unwrap_or(false)
    }

    pub fn masked_flags(&self) -> &[bool] {
        &self.masked
    }

    pub fn masked_count(&self) -> usize {
        self.masked.iter().filter(|&&m| m).count()
    }

    pub fn is_complete(&self) -> bool {
        !self.masked.iter().any(|&m| m)
    }

    /// Masked positions of block `b`, ascending. Empty means the block is decoded.
    pub fn masked_in_block(&self, b: usize) -> Result<Vec<usize>> {
        let range = self.layout.block_range(b)?;
        Ok(range.filter(|&i| self.masked[i]).collect())
    }

    /// Writes `sel.tokens` at `sel.positions` and clears their mask flags.
    ///
    /// The selection is validated in full before anything is written, so a
    /// rejected selection leaves the state untouched.
    pub fn unmask_and_update(&mut self, sel: &UnmaskSelection) -> Result<()> {
        let range = self.layout.block_range(sel.block)?;
        if sel.positions.is_empty() {
            return Err(Error::InvalidSelection("empty position set".into()));
        }
        if sel.positions.len() != sel.tokens.len() {
            return Err(Error::InvalidSelection(format!(
                "{} positions but {} tokens",
                sel.positions.len(),
                sel.tokens.len()
            )));
        }
        for (i, &pos) in sel.positions.iter().enumerate() {
            if !range.contains(&pos) {
                return Err(Error::PositionOutsideBlock {
                    position: pos,
                    block: sel.block,
                });
            }
            if !self.masked[pos] {
                return Err(Error::PositionNotMasked(pos));
            }
            if sel.positions[..i].contains(&pos) {
                return Err(Error::InvalidSelection(format!("position {pos} repeated")));
            }
        }
        if let Some(&token) = sel.tokens.iter().find(|&&t| t == self.mask_id) {
            return Err(Error::InvalidSelection(format!(
                "cannot commit the mask id {}",
                token.0
            )));
        }
        for (&pos, &token) in sel.positions.iter().zip(&sel.tokens) {
            self.tokens[pos] = token;
            self.masked[pos] = false;
        }
        Ok(())
    }
}

/// Free-function form of [`SequenceState::init`].
pub fn init_sequence(prompt: &[TokenId], gen_len: usize, block_len: usize, mask_id: TokenId) -> Result<SequenceState> {
    SequenceState::init(prompt, gen_len, block_len, mask_id)
}

#[derive(Serialize, Deserialize)]
struct StateRepr {
    prompt: Vec<u32>,
    tokens: Vec<u32>,
    masked: Vec<bool>,
    block_len: usize,
}

// Trace files carry the state as {prompt, tokens, masked, block_len}. The mask
// id is not part of that object; on load it is recovered from any masked slot,
// or must be supplied when the state is fully decoded.
impl Serialize for SequenceState {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        StateRepr {
            prompt: self.prompt().iter().map(|t| t.0).collect(),
            tokens: self.tokens.iter().map(|t| t.0).collect(),
            masked: self.masked.clone(),
            block_len: self.layout.block_len,
        }
        .serialize(serializer)
    }
}

impl SequenceState {
    /// Rebuilds a state from its trace-file JSON form.
    pub fn from_json(value: &serde_json::Value, mask_id: TokenId) -> Result<Self> {
        let repr: StateRepr = serde_json::from_value(value.clone()).map_err(|e| Error::Parse {
            line: 0,
            message: e.to_string(),
        })?;
        let invalid = |m: &str| Error::Parse {
            line: 0,
            message: m.to_string(),
        };
        if repr.tokens.len() != repr.masked.len() || repr.prompt.len() > repr.tokens.len() {
            return Err(invalid("inconsistent buffer lengths"));
        }
        if repr.tokens[..repr.prompt.len()] != repr.prompt[..] {
            return Err(invalid("prompt does not prefix tokens"));
        }
        let layout = BlockLayout::new(repr.prompt.len(), repr.tokens.len() - repr.prompt.len(), repr.block_len)?;
        for (i, (&t, &m)) in repr.tokens.iter().zip(&repr.masked).enumerate() {
            if i < layout.prompt_len && m {
                return Err(invalid("prompt position marked masked"));
            }
            if m != (t == mask_id.0) {
                return Err(invalid("mask flags disagree with mask id"));
            }
        }
        Ok(Self {
            tokens: repr.tokens.into_iter().map(TokenId).collect(),
            masked: repr.masked,
            layout,
            mask_id,
        })
    }
}
