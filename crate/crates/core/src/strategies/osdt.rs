//! One-shot dynamic thresholding: calibrate on the first prompt, then decode
//! the rest with thresholds read from the calibrated profile.

use rayon::prelude::*;

use super::decode::{dynamic_generate, static_with_phase, DecodeOutput, Phase};
use super::policy::{DecodePolicy, Strategy};
use super::profile::{calibrate, ThresholdProfile};
use crate::error::{Error, Result};
use crate::predictor::{Predictor, PromptContext};
use crate::scalar::Scalar;
use crate::seqstate::{GenLayout, TokenId};

#[derive(Debug, Clone)]
pub struct OsdtOutcome<F> {
    /// One output per prompt, in input order; the first is the calibration decode.
    pub outputs: Vec<DecodeOutput<F>>,
    pub profile: ThresholdProfile<F>,
}

impl<F: Scalar> OsdtOutcome<F> {
    pub fn answers(&self) -> Vec<&[TokenId]> {
        self.outputs.iter().map(|o| o.answer()).collect()
    }
}

/// Phase 1: static decode at `policy.calibration_tau`, then build the profile.
pub fn osdt_calibrate<F, P>(
    ctx: &PromptContext<'_>,
    predictor: &P,
    layout: GenLayout,
    policy: &DecodePolicy<F>,
) -> Result<(DecodeOutput<F>, ThresholdProfile<F>)>
where
    F: Scalar,
    P: Predictor<F> + ?Sized,
{
    policy.validate()?;
    let out = static_with_phase(
        ctx,
        predictor,
        layout,
        policy.calibration_tau,
        policy.record_scope,
        Phase::Calibration,
    )?;
    let profile = calibrate(&out.records(), policy.mode, policy.metric, layout.num_blocks())?;
    Ok((out, profile))
}

/// Phase 2 over `prompts`, against an already-built profile. Prompts are
/// independent once the profile is fixed, so they decode in parallel; output
/// order follows input order.
pub fn osdt_apply<F, P>(
    prompts: &[PromptContext<'_>],
    predictor: &P,
    layout: GenLayout,
    policy: &DecodePolicy<F>,
    profile: &ThresholdProfile<F>,
) -> Result<Vec<DecodeOutput<F>>>
where
    F: Scalar,
    P: Predictor<F> + ?Sized,
{
    policy.validate()?;
    prompts
        .par_iter()
        .map(|ctx| {
            dynamic_generate(
                ctx,
                predictor,
                layout,
                profile,
                policy.cap,
                policy.slack,
                policy.record_scope,
            )
        })
        .collect()
}

/// Full two-phase run over `prompts` in dataset order.
pub fn osdt_run<F, P>(
    prompts: &[PromptContext<'_>],
    predictor: &P,
    layout: GenLayout,
    policy: &DecodePolicy<F>,
) -> Result<OsdtOutcome<F>>
where
    F: Scalar,
    P: Predictor<F> + ?Sized,
{
    if policy.strategy != Strategy::Osdt {
        return Err(Error::InvalidPolicy(format!(
            "osdt_run given a {:?} policy",
            policy.strategy
        )));
    }
    let (first, rest) = prompts.split_first().ok_or(Error::Arity { needed: 1, got: 0 })?;
    let (calibration, profile) = osdt_calibrate(first, predictor, layout, policy)?;
    let mut outputs = Vec::with_capacity(prompts.len());
    outputs.push(calibration);
    outputs.extend(osdt_apply(rest, predictor, layout, policy, &profile)?);
    Ok(OsdtOutcome { outputs, profile })
}
