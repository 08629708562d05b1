use serde::{Deserialize, Serialize};

use super::{masked_or_empty, PredictionFrame, Predictor, PromptContext, Proposal, BYTE_MASK, BYTE_VOCAB};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::seqstate::{SequenceState, TokenId};

const CONF_FLOOR: f64 = 1e-6;

/// Parametric within-block confidence trajectory: low at the first and last
/// steps of a block, peaking at `t_peak`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScriptedSchedule<F> {
    pub c_peak: F,
    pub c_edge: F,
    pub t_peak: F,
    pub jitter_scale: F,
    pub seed: u64,
    /// Steps-per-block estimate; `None` means the block length.
    #[serde(default)]
    pub steps_estimate: Option<usize>,
}

impl<F: Scalar> Default for ScriptedSchedule<F> {
    fn default() -> Self {
        Self {
            c_peak: F::of(0.95),
            c_edge: F::of(0.80),
            t_peak: F::of(0.5),
            jitter_scale: F::zero(),
            seed: 0,
            steps_estimate: None,
        }
    }
}

impl<F: Scalar> ScriptedSchedule<F> {
    pub fn with_jitter(mut self, jitter_scale: F) -> Self {
        self.jitter_scale = jitter_scale;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.c_edge > F::zero()
            && self.c_edge <= self.c_peak
            && self.c_peak <= F::one()
            && self.t_peak >= F::zero()
            && self.t_peak <= F::one()
            && self.jitter_scale >= F::zero()
            && self.steps_estimate != Some(0);
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidPolicy(format!("invalid scripted schedule {self:?}")))
        }
    }

    /// Noise-free confidence at normalized in-block time `t ∈ [0, 1]`.
    pub fn base(&self, t: F) -> F {
        let half_width = self.t_peak.max(F::one() - self.t_peak);
        let u = (t - self.t_peak) / half_width;
        self.c_peak - (self.c_peak - self.c_edge) * u * u
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| {
        (h ^ b as u64).wrapping_mul(0x0100_0000_01b3)
    })
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Stateless jitter in `[-1, 1]` keyed on `(seed, prompt, block, step, position)`.
pub fn jitter(seed: u64, prompt_id: &str, block: usize, step: usize, position: usize) -> f64 {
    let mut h = splitmix(seed);
    for part in [fnv1a(prompt_id.as_bytes()), block as u64, step as u64, position as u64] {
        h = splitmix(h ^ part);
    }
    let unit = (h >> 11) as f64 / (1u64 << 53) as f64;
    2.0 * unit - 1.0
}

/// Confidence the scripted predictor reports at `(block, step, position)`.
///
/// `t = step / max(steps_estimate - 1, 1)`; the result is clamped to `[1e-6, 1]`.
pub fn scripted_confidence<F: Scalar>(
    block: usize,
    step: usize,
    steps_estimate: usize,
    position: usize,
    schedule: &ScriptedSchedule<F>,
    prompt_id: &str,
) -> F {
    let denom = steps_estimate.saturating_sub(1).max(1);
    let t = F::of(step as f64 / denom as f64);
    let noise = F::of(jitter(schedule.seed, prompt_id, block, step, position)) * schedule.jitter_scale;
    (schedule.base(t) + noise).max(F::of(CONF_FLOOR)).min(F::one())
}

/// Proposes the reference token at every masked position, scored by the schedule.
#[derive(Debug, Clone)]
pub struct ScriptedPredictor<F> {
    pub schedule: ScriptedSchedule<F>,
    pub vocab: usize,
    pub mask_id: TokenId,
}

impl<F: Scalar> ScriptedPredictor<F> {
    pub fn new(schedule: ScriptedSchedule<F>) -> Result<Self> {
        schedule.validate()?;
        Ok(Self {
            schedule,
            vocab: BYTE_VOCAB,
            mask_id: BYTE_MASK,
        })
    }
}

impl<F: Scalar> Predictor<F> for ScriptedPredictor<F> {
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
        let layout = state.layout();
        let steps_estimate = self.schedule.steps_estimate.unwrap_or(layout.block_len);
        let mut frame = PredictionFrame::new(block, step);
        for pos in masked_or_empty(state, block)? {
            let conf = scripted_confidence(block, step, steps_estimate, pos, &self.schedule, ctx.id);
            let token = ctx.reference_at(pos - layout.prompt_len);
            frame.entries.insert(pos, Proposal { token, conf });
        }
        Ok(frame)
    }
}
