//! Decoding strategies: fixed-quota top-k, static thresholding, and OSDT.

mod decode;
mod osdt;
mod policy;
mod profile;
mod stats;

use rayon::prelude::*;

pub use decode::{
    decode_with, dynamic_generate, fixed_quota_generate, select_top_k, select_unmask_set, static_threshold_generate,
    DecodeOutput, DecodeTrace, Phase, TraceStep,
};
pub use osdt::{osdt_apply, osdt_calibrate, osdt_run, OsdtOutcome};
pub use policy::{DecodePolicy, Mode, Preset, RecordScope, Strategy};
pub use profile::{calibrate, lookup_threshold, ConfidenceRecord, ThresholdProfile, Thresholds};
pub use stats::{quantile, statistic, Metric};

use crate::error::{Error, Result};
use crate::predictor::{Predictor, PromptContext};
use crate::scalar::Scalar;
use crate::seqstate::GenLayout;

/// Result of decoding a prompt list under one policy.
#[derive(Debug, Clone)]
pub struct PolicyRun<F> {
    pub outputs: Vec<DecodeOutput<F>>,
    /// Profile used by an OSDT run; `None` for the baselines.
    pub profile: Option<ThresholdProfile<F>>,
}

/// Decodes every prompt under `policy`.
///
/// For OSDT, a supplied `profile` replaces calibration and every prompt takes
/// the dynamic path; otherwise the first prompt calibrates.
pub fn run_policy<F, P>(
    prompts: &[PromptContext<'_>],
    predictor: &P,
    layout: GenLayout,
    policy: &DecodePolicy<F>,
    profile: Option<&ThresholdProfile<F>>,
) -> Result<PolicyRun<F>>
where
    F: Scalar,
    P: Predictor<F> + ?Sized,
{
    policy.validate()?;
    if prompts.is_empty() {
        return Err(Error::Arity { needed: 1, got: 0 });
    }
    let scope = policy.record_scope;
    match policy.strategy {
        Strategy::Fixed => Ok(PolicyRun {
            outputs: prompts
                .par_iter()
                .map(|ctx| fixed_quota_generate(ctx, predictor, layout, policy.quota, scope))
                .collect::<Result<_>>()?,
            profile: None,
        }),
        Strategy::Static => Ok(PolicyRun {
            outputs: prompts
                .par_iter()
                .map(|ctx| static_threshold_generate(ctx, predictor, layout, policy.tau_static, scope))
                .collect::<Result<_>>()?,
            profile: None,
        }),
        Strategy::Osdt => match profile {
            Some(profile) => Ok(PolicyRun {
                outputs: osdt_apply(prompts, predictor, layout, policy, profile)?,
                profile: Some(profile.clone()),
            }),
            None => {
                let outcome = osdt_run(prompts, predictor, layout, policy)?;
                Ok(PolicyRun {
                    outputs: outcome.outputs,
                    profile: Some(outcome.profile),
                })
            }
        },
    }
}
