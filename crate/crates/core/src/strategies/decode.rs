//! Block-by-block decode loop and the three unmasking rules.

use std::cmp::Ordering;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::policy::RecordScope;
use super::profile::{lookup_threshold, ConfidenceRecord, ThresholdProfile};
use crate::error::{Error, Result};
use crate::predictor::{PredictionFrame, Predictor, PromptContext};
use crate::scalar::Scalar;
use crate::seqstate::{GenLayout, SequenceState, TokenId, UnmaskSelection};

/// Which path produced a trace.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Phase {
    /// Fixed-quota or static-threshold baseline.
    Baseline,
    /// OSDT's first prompt, decoded statically to build the profile.
    Calibration,
    /// OSDT's later prompts, decoded with profile thresholds.
    Dynamic,
}

/// One denoising step: what the predictor offered and what was committed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceStep<F> {
    pub block: usize,
    pub step: usize,
    /// Masked positions the predictor scored.
    pub candidates: usize,
    pub max_conf: F,
    /// Effective threshold, absent for top-k steps.
    pub tau_eff: Option<F>,
    pub positions: Vec<usize>,
    pub tokens: Vec<TokenId>,
    pub fallback_used: bool,
    /// Confidences kept under the trace's record scope.
    pub record: Vec<F>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodeTrace<F> {
    pub prompt_id: String,
    pub phase: Phase,
    pub gen_len: usize,
    pub block_len: usize,
    pub record_scope: RecordScope,
    pub steps: Vec<TraceStep<F>>,
    pub predictor_calls: usize,
    pub generated_tokens: usize,
    pub wall_time: f64,
}

impl<F: Scalar> DecodeTrace<F> {
    pub fn confidence_records(&self) -> Vec<ConfidenceRecord<F>> {
        self.steps
            .iter()
            .map(|s| ConfidenceRecord {
                block: s.block,
                step: s.step,
                values: s.record.clone(),
                scope: self.record_scope,
            })
            .collect()
    }

    /// Sum of committed positions over all steps.
    pub fn committed(&self) -> usize {
        self.steps.iter().map(|s| s.positions.len()).sum()
    }

    pub fn steps_in_block(&self, block: usize) -> usize {
        self.steps.iter().filter(|s| s.block == block).count()
    }

    /// True when both traces commit the same positions and tokens at every step.
    pub fn same_schedule(&self, other: &Self) -> bool {
        self.steps.len() == other.steps.len()
            && self.steps.iter().zip(&other.steps).all(|(a, b)| {
                (a.block, a.step, &a.positions, &a.tokens, a.fallback_used)
                    == (b.block, b.step, &b.positions, &b.tokens, b.fallback_used)
            })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecodeOutput<F> {
    pub state: SequenceState,
    pub trace: DecodeTrace<F>,
}

impl<F: Scalar> DecodeOutput<F> {
    pub fn answer(&self) -> &[TokenId] {
        self.state.generated()
    }

    pub fn records(&self) -> Vec<ConfidenceRecord<F>> {
        self.trace.confidence_records()
    }
}

fn by_confidence_desc<F: Scalar>(a: (&usize, F), b: (&usize, F)) -> Ordering {
    b.1.partial_cmp(&a.1).unwrap_or(Ordering::Equal).then(a.0.cmp(b.0))
}

/// Positions with `conf > tau_eff`; if none, the single most confident
/// position (lowest index on ties) with `fallback_used` set.
pub fn select_unmask_set<F: Scalar>(frame: &PredictionFrame<F>, tau_eff: F) -> UnmaskSelection {
    let mut positions = Vec::new();
    let mut tokens = Vec::new();
    for (&pos, p) in &frame.entries {
        if p.conf > tau_eff {
            positions.push(pos);
            tokens.push(p.token);
        }
    }
    let fallback_used = positions.is_empty();
    if fallback_used {
        if let Some((&pos, p)) = frame
            .entries
            .iter()
            .min_by(|a, b| by_confidence_desc((a.0, a.1.conf), (b.0, b.1.conf)))
        {
            positions.push(pos);
            tokens.push(p.token);
        }
    }
    UnmaskSelection {
        block: frame.block,
        step: frame.step,
        positions,
        tokens,
        fallback_used,
    }
}

/// The `k` most confident positions (lowest index on ties), reported in position order.
pub fn select_top_k<F: Scalar>(frame: &PredictionFrame<F>, k: usize) -> UnmaskSelection {
    let mut ranked: Vec<(&usize, F)> = frame.entries.iter().map(|(pos, p)| (pos, p.conf)).collect();
    ranked.sort_by(|&a, &b| by_confidence_desc(a, b));
    let mut chosen: Vec<usize> = ranked.into_iter().take(k).map(|(&pos, _)| pos).collect();
    chosen.sort_unstable();
    UnmaskSelection {
        block: frame.block,
        step: frame.step,
        tokens: chosen.iter().map(|p| frame.entries[p].token).collect(),
        positions: chosen,
        fallback_used: false,
    }
}

/// Runs blocks `1..=T` in order, calling `choose` once per predictor frame until
/// each block is fully unmasked. `choose` returns the selection and the
/// effective threshold it used, if any.
pub fn decode_with<F, P, C>(
    ctx: &PromptContext<'_>,
    predictor: &P,
    layout: GenLayout,
    scope: RecordScope,
    phase: Phase,
    mut choose: C,
) -> Result<DecodeOutput<F>>
where
    F: Scalar,
    P: Predictor<F> + ?Sized,
    C: FnMut(&PredictionFrame<F>) -> Result<(UnmaskSelection, Option<F>)>,
{
    let mut state = SequenceState::init(ctx.prompt, layout.gen_len, layout.block_len, predictor.mask_id())?;
    let mut steps = Vec::new();
    let started = Instant::now();
    for block in 1..=state.layout().num_blocks {
        let mut step = 0;
        while !state.masked_in_block(block)?.is_empty() {
            let frame = predictor.predict(ctx, &state, block, step)?;
            if frame.block != block || frame.step != step {
                return Err(Error::MalformedResponse(format!(
                    "frame for ({}, {}) returned for ({block}, {step})",
                    frame.block, frame.step
                )));
            }
            frame.validate(&state)?;
            let (selection, tau_eff) = choose(&frame)?;
            state.unmask_and_update(&selection)?;
            let record = match scope {
                RecordScope::AcceptedTokens => selection.positions.iter().map(|p| frame.entries[p].conf).collect(),
                RecordScope::AllMasked => frame.entries.values().map(|p| p.conf).collect(),
            };
            let max_conf = frame.entries.values().map(|p| p.conf).fold(F::zero(), F::max);
            steps.push(TraceStep {
                block,
                step,
                candidates: frame.len(),
                max_conf,
                tau_eff,
                positions: selection.positions,
                tokens: selection.tokens,
                fallback_used: selection.fallback_used,
                record,
            });
            step += 1;
        }
    }
    let wall_time = started.elapsed().as_secs_f64();
    let trace = DecodeTrace {
        prompt_id: ctx.id.to_string(),
        phase,
        gen_len: layout.gen_len,
        block_len: layout.block_len,
        record_scope: scope,
        predictor_calls: steps.len(),
        generated_tokens: steps.iter().map(|s| s.positions.len()).sum(),
        steps,
        wall_time,
    };
    Ok(DecodeOutput { state, trace })
}

/// Top-`k` by confidence each step: `ceil(block_len / k)` steps per block.
pub fn fixed_quota_generate<F, P>(
    ctx: &PromptContext<'_>,
    predictor: &P,
    layout: GenLayout,
    k: usize,
    scope: RecordScope,
) -> Result<DecodeOutput<F>>
where
    F: Scalar,
    P: Predictor<F> + ?Sized,
{
    if k == 0 {
        return Err(Error::InvalidPolicy("quota must be at least 1".into()));
    }
    decode_with(ctx, predictor, layout, scope, Phase::Baseline, |frame| {
        Ok((select_top_k(frame, k), None))
    })
}

/// Unmasks every position above one global threshold, falling back to the
/// single most confident position when none clears it.
pub fn static_threshold_generate<F, P>(
    ctx: &PromptContext<'_>,
    predictor: &P,
    layout: GenLayout,
    tau: F,
    scope: RecordScope,
) -> Result<DecodeOutput<F>>
where
    F: Scalar,
    P: Predictor<F> + ?Sized,
{
    static_with_phase(ctx, predictor, layout, tau, scope, Phase::Baseline)
}

pub(crate) fn static_with_phase<F, P>(
    ctx: &PromptContext<'_>,
    predictor: &P,
    layout: GenLayout,
    tau: F,
    scope: RecordScope,
    phase: Phase,
) -> Result<DecodeOutput<F>>
where
    F: Scalar,
    P: Predictor<F> + ?Sized,
{
    if !tau.is_unit_confidence() {
        return Err(Error::InvalidPolicy(format!("threshold {tau} outside (0, 1]")));
    }
    decode_with(ctx, predictor, layout, scope, phase, |frame| {
        Ok((select_unmask_set(frame, tau), Some(tau)))
    })
}

/// Decodes with per-(block, step) thresholds from a calibrated profile.
pub fn dynamic_generate<F, P>(
    ctx: &PromptContext<'_>,
    predictor: &P,
    layout: GenLayout,
    profile: &ThresholdProfile<F>,
    cap: F,
    slack: F,
    scope: RecordScope,
) -> Result<DecodeOutput<F>>
where
    F: Scalar,
    P: Predictor<F> + ?Sized,
{
    if profile.num_blocks() != layout.num_blocks() {
        return Err(Error::InvalidProfile(format!(
            "profile has {} blocks, layout has {}",
            profile.num_blocks(),
            layout.num_blocks()
        )));
    }
    decode_with(ctx, predictor, layout, scope, Phase::Dynamic, |frame| {
        let tau_eff = lookup_threshold(profile, frame.block, frame.step, cap, slack)?;
        Ok((select_unmask_set(frame, tau_eff), Some(tau_eff)))
    })
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeMap;

    use super::*;
    use crate::predictor::{ConstantPredictor, Proposal, BYTE_MASK, BYTE_VOCAB};

    fn frame(confs: &[(usize, f64)]) -> PredictionFrame<f64> {
        let mut f = PredictionFrame::new(1, 0);
        for &(pos, conf) in confs {
            f.entries.insert(
                pos,
                Proposal {
                    token: TokenId(pos as u32),
                    conf,
                },
            );
        }
        f
    }

    #[test]
    fn threshold_selection() {
        let s = select_unmask_set(&frame(&[(5, 0.9), (6, 0.7), (7, 0.95)]), 0.8);
        assert_eq!((s.positions, s.fallback_used), (vec![5, 7], false));
        let s = select_unmask_set(&frame(&[(5, 0.3), (6, 0.5)]), 0.8);
        assert_eq!((s.positions, s.fallback_used), (vec![6], true));
        let s = select_unmask_set(&frame(&[(5, 0.5), (6, 0.5)]), 0.8);
        assert_eq!((s.positions, s.fallback_used), (vec![5], true));
    }

    #[test]
    fn threshold_is_strict() {
        let s = select_unmask_set(&frame(&[(1, 0.8), (2, 0.80001)]), 0.8);
        assert_eq!(s.positions, vec![2]);
    }

    #[test]
    fn top_k_ties_prefer_low_positions() {
        let s = select_top_k(&frame(&[(3, 0.5), (4, 0.9), (5, 0.5), (6, 0.5)]), 2);
        assert_eq!(s.positions, vec![3, 4]);
        assert_eq!(s.tokens, vec![TokenId(3), TokenId(4)]);
        assert_eq!(select_top_k(&frame(&[(3, 0.5)]), 4).positions, vec![3]);
    }

    /// Per-position confidences that stay fixed across steps.
    struct FixedConf(BTreeMap<usize, f64>);

    impl Predictor<f64> for FixedConf {
        fn vocab_size(&self) -> usize {
            BYTE_VOCAB
        }
        fn mask_id(&self) -> TokenId {
            BYTE_MASK
        }
        fn predict(
            &self,
            _: &PromptContext<'_>,
            state: &SequenceState,
            block: usize,
            step: usize,
        ) -> Result<PredictionFrame<f64>> {
            let mut f = PredictionFrame::new(block, step);
            for pos in state.masked_in_block(block)? {
                f.entries.insert(
                    pos,
                    Proposal {
                        token: TokenId(1),
                        conf: self.0[&(pos % 4)],
                    },
                );
            }
            Ok(f)
        }
    }

    #[test]
    fn static_hand_trace() {
        let p = FixedConf([(0, 0.95), (1, 0.85), (2, 0.92), (3, 0.70)].into_iter().collect());
        let ctx = PromptContext::new("p", &[], &[]);
        let out = static_threshold_generate(
            &ctx,
            &p,
            GenLayout::new(4, 4).unwrap(),
            0.9,
            RecordScope::AcceptedTokens,
        )
        .unwrap();
        let t = &out.trace;
        assert_eq!(t.predictor_calls, 3);
        assert_eq!(t.steps[0].positions, vec![0, 2]);
        assert!(!t.steps[0].fallback_used);
        assert_eq!(
            (t.steps[1].positions.clone(), t.steps[1].fallback_used),
            (vec![1], true)
        );
        assert_eq!(
            (t.steps[2].positions.clone(), t.steps[2].fallback_used),
            (vec![3], true)
        );
        assert_eq!(t.steps[0].record, vec![0.95, 0.92]);
        assert!(out.state.is_complete());
    }

    #[test]
    fn static_extremes() {
        let ctx = PromptContext::new("p", &[], &[]);
        let layout = GenLayout::new(8, 4).unwrap();
        let hi = ConstantPredictor::new(0.99).unwrap();
        let out = static_threshold_generate(&ctx, &hi, layout, 0.9, RecordScope::AcceptedTokens).unwrap();
        assert_eq!(out.trace.predictor_calls, 2);
        let lo = ConstantPredictor::new(0.5).unwrap();
        let out = static_threshold_generate(&ctx, &lo, layout, 0.9, RecordScope::AcceptedTokens).unwrap();
        assert_eq!(out.trace.predictor_calls, 8);
        assert!(out.trace.steps.iter().all(|s| s.fallback_used));
        assert!(static_threshold_generate(&ctx, &lo, layout, 0.0, RecordScope::AcceptedTokens).is_err());
    }

    #[test]
    fn fixed_quota_step_counts() {
        let ctx = PromptContext::new("p", &[], &[]);
        let p = ConstantPredictor::new(0.5).unwrap();
        let layout = GenLayout::new(8, 4).unwrap();
        for (k, per_block) in [(1, 4), (2, 2), (3, 2), (4, 1), (9, 1)] {
            let out = fixed_quota_generate(&ctx, &p, layout, k, RecordScope::AcceptedTokens).unwrap();
            assert_eq!(out.trace.steps_in_block(1), per_block, "k={k}");
            assert_eq!(out.trace.steps_in_block(2), per_block, "k={k}");
            assert_eq!(out.trace.committed(), 8);
        }
        assert!(fixed_quota_generate(&ctx, &p, layout, 0, RecordScope::AcceptedTokens).is_err());
    }

    #[test]
    fn fixed_quota_k1_is_most_confident_first() {
        let p = FixedConf([(0, 0.6), (1, 0.9), (2, 0.7), (3, 0.95)].into_iter().collect());
        let ctx = PromptContext::new("p", &[], &[]);
        let out = fixed_quota_generate(&ctx, &p, GenLayout::new(4, 4).unwrap(), 1, RecordScope::AllMasked).unwrap();
        let order: Vec<usize> = out.trace.steps.iter().map(|s| s.positions[0]).collect();
        assert_eq!(order, vec![3, 1, 2, 0]);
        assert_eq!(out.trace.steps[0].record.len(), 4);
        assert_eq!(out.trace.steps[3].record.len(), 1);
    }

    #[test]
    fn dynamic_rejects_mismatched_profile() {
        let ctx = PromptContext::new("p", &[], &[]);
        let p = ConstantPredictor::new(0.5).unwrap();
        let profile = ThresholdProfile::uniform(super::super::Mode::Block, super::super::Metric::Q1, 3, 1, 0.5);
        let err = dynamic_generate(
            &ctx,
            &p,
            GenLayout::new(8, 4).unwrap(),
            &profile,
            1.0,
            0.0,
            RecordScope::AcceptedTokens,
        );
        assert!(matches!(err, Err(Error::InvalidProfile(_))));
    }
}
