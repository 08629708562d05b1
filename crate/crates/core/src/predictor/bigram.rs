use std::marker::PhantomData;

use super::{masked_or_empty, PredictionFrame, Predictor, PromptContext, Proposal, BYTE_MASK, BYTE_VOCAB};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::seqstate::{SequenceState, TokenId};

/// Add-α smoothed bigram counts over a `vocab × vocab` table.
#[derive(Debug, Clone, PartialEq)]
pub struct BigramModel {
    vocab: usize,
    alpha: f64,
    counts: Vec<u64>,
    row_sums: Vec<u64>,
}

/// Counts adjacent pairs in every corpus sequence.
pub fn bigram_fit(corpus: &[Vec<TokenId>], vocab: usize, alpha: f64) -> Result<BigramModel> {
    if vocab < 2 || !alpha.is_finite() || alpha <= 0.0 {
        return Err(Error::InvalidPolicy(format!(
            "bigram needs V >= 2 and alpha > 0, got V={vocab} alpha={alpha}"
        )));
    }
    if corpus.iter().all(|s| s.len() < 2) {
        return Err(Error::EmptyCorpus);
    }
    let mut counts = vec![0u64; vocab * vocab];
    let mut row_sums = vec![0u64; vocab];
    for seq in corpus {
        for pair in seq.windows(2) {
            let (a, b) = (pair[0].index(), pair[1].index());
            for t in [pair[0], pair[1]] {
                if t.index() >= vocab {
                    return Err(Error::TokenOutOfVocab { token: t.0, vocab });
                }
            }
            counts[a * vocab + b] += 1;
            row_sums[a] += 1;
        }
    }
    Ok(BigramModel {
        vocab,
        alpha,
        counts,
        row_sums,
    })
}

impl BigramModel {
    pub fn vocab(&self) -> usize {
        self.vocab
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn count(&self, prev: TokenId, next: TokenId) -> u64 {
        self.counts[prev.index() * self.vocab + next.index()]
    }

    /// Smoothed `P(next | prev) = (count + α) / (row_sum + α·V)`.
    pub fn prob(&self, prev: TokenId, next: TokenId) -> f64 {
        let denom = self.row_sums[prev.index()] as f64 + self.alpha * self.vocab as f64;
        (self.count(prev, next) as f64 + self.alpha) / denom
    }

    /// Most probable successor of `prev`, skipping `exclude`; ties go to the lowest id.
    pub fn argmax(&self, prev: TokenId, exclude: TokenId) -> (TokenId, f64) {
        let row = &self.counts[prev.index() * self.vocab..(prev.index() + 1) * self.vocab];
        let (best, _) = row.iter().enumerate().filter(|&(i, _)| i != exclude.index()).fold(
            (0usize, None::<u64>),
            |(bi, bc), (i, &c)| match bc {
                Some(best) if best >= c => (bi, bc),
                _ => (i, Some(c)),
            },
        );
        let token = TokenId(best as u32);
        (token, self.prob(prev, token))
    }
}

/// Proposes, for each masked position, the argmax successor of its nearest
/// unmasked left neighbour (`default_context` when there is none).
#[derive(Debug, Clone)]
pub struct BigramPredictor<F> {
    pub model: BigramModel,
    pub mask_id: TokenId,
    pub default_context: TokenId,
    _scalar: PhantomData<F>,
}

impl<F: Scalar> BigramPredictor<F> {
    pub fn new(model: BigramModel, mask_id: TokenId) -> Result<Self> {
        if mask_id.index() >= model.vocab() {
            return Err(Error::TokenOutOfVocab {
                token: mask_id.0,
                vocab: model.vocab(),
            });
        }
        Ok(Self {
            model,
            mask_id,
            default_context: TokenId(0),
            _scalar: PhantomData,
        })
    }

    /// Fits on a byte-level corpus with the standard byte vocabulary.
    pub fn from_byte_corpus(corpus: &[Vec<TokenId>], alpha: f64) -> Result<Self> {
        Self::new(bigram_fit(corpus, BYTE_VOCAB, alpha)?, BYTE_MASK)
    }
}

impl<F: Scalar> Predictor<F> for BigramPredictor<F> {
    fn vocab_size(&self) -> usize {
        self.model.vocab()
    }

    fn mask_id(&self) -> TokenId {
        self.mask_id
    }

    fn predict(
        &self,
        _ctx: &PromptContext<'_>,
        state: &SequenceState,
        block: usize,
        step: usize,
    ) -> Result<PredictionFrame<F>> {
        let masked = masked_or_empty(state, block)?;
        let tokens = state.tokens();
        let mut frame = PredictionFrame::new(block, step);
        for pos in masked {
            let context = (0..pos)
                .rev()
                .find(|&i| !state.is_masked(i))
                .map(|i| tokens[i])
                .unwrap_or(self.default_context);
            if context.index() >= self.model.vocab() {
                return Err(Error::TokenOutOfVocab {
                    token: context.0,
                    vocab: self.model.vocab(),
                });
            }
            let (token, p) = self.model.argmax(context, self.mask_id);
            frame.entries.insert(pos, Proposal { token, conf: F::of(p) });
        }
        Ok(frame)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(v: &[u32]) -> Vec<TokenId> {
        v.iter().copied().map(TokenId).collect()
    }

    #[test]
    fn alternation_with_vanishing_alpha() {
        let m = bigram_fit(&[ids(&[0, 1, 0, 1, 0, 1])], 2, 1e-12).unwrap();
        assert!((m.prob(TokenId(0), TokenId(1)) - 1.0).abs() < 1e-9);
        assert!((m.prob(TokenId(1), TokenId(0)) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn single_pair_laplace() {
        let m = bigram_fit(&[ids(&[0, 1])], 2, 1.0).unwrap();
        assert!((m.prob(TokenId(0), TokenId(1)) - 2.0 / 3.0).abs() < 1e-15);
        assert!((m.prob(TokenId(1), TokenId(1)) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn fit_errors() {
        assert_eq!(bigram_fit(&[], 4, 1.0), Err(Error::EmptyCorpus));
        assert_eq!(bigram_fit(&[ids(&[1])], 4, 1.0), Err(Error::EmptyCorpus));
        assert!(bigram_fit(&[ids(&[1, 2])], 1, 1.0).is_err());
        assert!(bigram_fit(&[ids(&[1, 2])], 4, 0.0).is_err());
        assert!(matches!(
            bigram_fit(&[ids(&[1, 9])], 4, 1.0),
            Err(Error::TokenOutOfVocab { token: 9, .. })
        ));
    }

    #[test]
    fn argmax_skips_mask_and_breaks_ties_low() {
        // Row 0 has equal counts for 2 and 3 and the highest count for the mask (1).
        let m = bigram_fit(&[ids(&[0, 2, 0, 3, 0, 1, 0, 1])], 4, 1.0).unwrap();
        let (tok, _) = m.argmax(TokenId(0), TokenId(1));
        assert_eq!(tok, TokenId(2));
        let (tok, _) = m.argmax(TokenId(0), TokenId(3));
        assert_eq!(tok, TokenId(1));
    }

    #[test]
    fn context_is_nearest_unmasked_left_neighbour() {
        let m = bigram_fit(&[ids(&[3, 1, 3, 1, 1, 2])], 5, 0.5).unwrap();
        let p = BigramPredictor::<f64>::new(m.clone(), TokenId(4)).unwrap();
        let state = SequenceState::init(&ids(&[3]), 2, 2, TokenId(4)).unwrap();
        let frame = p.predict(&PromptContext::new("x", &[], &[]), &state, 1, 0).unwrap();
        // Both masked slots see context 3.
        for pos in [1, 2] {
            assert_eq!(frame.entries[&pos].token, TokenId(1));
            assert_eq!(frame.entries[&pos].conf, m.prob(TokenId(3), TokenId(1)));
        }
    }
}
