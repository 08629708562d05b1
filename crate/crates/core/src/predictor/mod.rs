//! Mask-predictor contract and the built-in deterministic predictors.
//!
//! A predictor is asked, once per denoising step, for a proposal at every
//! still-masked position of the active block. The confidence attached to a
//! proposal is the predictor's maximum proposed-token probability; the engine
//! treats it as an opaque score in `(0, 1]`.

mod bigram;
mod scripted;
pub mod wire;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use bigram::{bigram_fit, BigramModel, BigramPredictor};
pub use scripted::{jitter, scripted_confidence, ScriptedPredictor, ScriptedSchedule};
pub use wire::ExternPredictor;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::seqstate::{SequenceState, TokenId};

/// Vocabulary size of the byte-level tokenizer used by the built-in predictors.
pub const BYTE_VOCAB: usize = 257;
/// Mask id of the byte-level vocabulary.
pub const BYTE_MASK: TokenId = TokenId(256);
/// Token proposed by reference-driven predictors past the end of a reference.
pub const PAD: TokenId = TokenId(0);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Proposal<F> {
    pub token: TokenId,
    pub conf: F,
}

/// Proposals for every masked position of one block at one step.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionFrame<F> {
    pub block: usize,
    pub step: usize,
    pub entries: BTreeMap<usize, Proposal<F>>,
}

impl<F: Scalar> PredictionFrame<F> {
    pub fn new(block: usize, step: usize) -> Self {
        Self {
            block,
            step,
            entries: BTreeMap::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Checks coverage of the masked set and the confidence range.
    pub fn validate(&self, state: &SequenceState) -> Result<()> {
        let masked = state.masked_in_block(self.block)?;
        for &pos in &masked {
            if !self.entries.contains_key(&pos) {
                return Err(Error::IncompleteCoverage(pos));
            }
        }
        if self.entries.len() != masked.len() {
            let extra = self
                .entries
                .keys()
                .find(|p| masked.binary_search(p).is_err())
                .copied()
                .unwrap_or_default();
            return Err(Error::MalformedResponse(format!(
                "proposal for position {extra}, which is not masked in block {}",
                self.block
            )));
        }
        for p in self.entries.values() {
            if !p.conf.is_unit_confidence() {
                return Err(Error::ConfidenceOutOfRange(p.conf.as_f64()));
            }
        }
        Ok(())
    }
}

/// Per-prompt information available to a predictor.
#[derive(Debug, Clone, Copy)]
pub struct PromptContext<'a> {
    pub id: &'a str,
    pub prompt: &'a [TokenId],
    /// Target generation for reference-driven predictors; may be empty.
    pub reference: &'a [TokenId],
}

impl<'a> PromptContext<'a> {
    pub fn new(id: &'a str, prompt: &'a [TokenId], reference: &'a [TokenId]) -> Self {
        Self { id, prompt, reference }
    }

    /// Reference token for generation offset `offset`, or [`PAD`] past its end.
    pub fn reference_at(&self, offset: usize) -> TokenId {
        self.reference.get(offset).copied().unwrap_or(PAD)
    }
}

/// One denoising step's proposals. Each call is one predictor invocation.
pub trait Predictor<F: Scalar>: Send + Sync {
    fn vocab_size(&self) -> usize;

    fn mask_id(&self) -> TokenId;

    fn predict(
        &self,
        ctx: &PromptContext<'_>,
        state: &SequenceState,
        block: usize,
        step: usize,
    ) -> Result<PredictionFrame<F>>;
}

impl<F: Scalar, P: Predictor<F> + ?Sized> Predictor<F> for Box<P> {
    fn vocab_size(&self) -> usize {
        (**self).vocab_size()
    }

    fn mask_id(&self) -> TokenId {
        (**self).mask_id()
    }

    fn predict(
        &self,
        ctx: &PromptContext<'_>,
        state: &SequenceState,
        block: usize,
        step: usize,
    ) -> Result<PredictionFrame<F>> {
        (**self).predict(ctx, state, block, step)
    }
}

pub(crate) fn masked_or_empty(state: &SequenceState, block: usize) -> Result<Vec<usize>> {
    let masked = state.masked_in_block(block)?;
    if masked.is_empty() {
        return Err(Error::EmptyBlock(block));
    }
    Ok(masked)
}

/// Proposes the reference token everywhere with one fixed confidence.
#[derive(Debug, Clone)]
pub struct ConstantPredictor<F> {
    pub conf: F,
    pub vocab: usize,
    pub mask_id: TokenId,
}

impl<F: Scalar> ConstantPredictor<F> {
    pub fn new(conf: F) -> Result<Self> {
        if !conf.is_unit_confidence() {
            return Err(Error::ConfidenceOutOfRange(conf.as_f64()));
        }
        Ok(Self {
            conf,
            vocab: BYTE_VOCAB,
            mask_id: BYTE_MASK,
        })
    }
}

impl<F: Scalar> Predictor<F> for ConstantPredictor<F> {
    fn vocab_size(&self) -> usize {
        self.vocab
    }

    fn mask_id(&self) -> TokenId {
        self.mask_id
    }

    fn predict(
        &self,
        ctx: &PromptContext<'_>,
        state: &SequenceState,
        block: usize,
        step: usize,
    ) -> Result<PredictionFrame<F>> {
        let prompt_len = state.layout().prompt_len;
        let mut frame = PredictionFrame::new(block, step);
        for pos in masked_or_empty(state, block)? {
            let token = ctx.reference_at(pos - prompt_len);
            frame.entries.insert(pos, Proposal { token, conf: self.conf });
        }
        Ok(frame)
    }
}
