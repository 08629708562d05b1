mod common;

use std::collections::BTreeSet;

use common::*;
use mdm_sched::analysis::{cosine_similarity, dominates, pareto_frontier, run_metrics, ParetoPoint};
use mdm_sched::predictor::{
    bigram_fit, PredictionFrame, Predictor, PromptContext, Proposal, ScriptedPredictor, ScriptedSchedule,
};
use mdm_sched::strategies::{
    dynamic_generate, fixed_quota_generate, lookup_threshold, run_policy, select_unmask_set, static_threshold_generate,
    statistic, DecodePolicy, Metric, Mode, RecordScope, ThresholdProfile, Thresholds,
};
use mdm_sched::{GenLayout, SequenceState, TokenId};
use proptest::prelude::*;

fn layout() -> impl Strategy<Value = GenLayout> {
    (1usize..=12, 1usize..=4).prop_map(|(bl, nb)| GenLayout::new(bl * nb, bl).unwrap())
}

fn frame() -> impl Strategy<Value = PredictionFrame<f64>> {
    prop::collection::btree_map(0usize..64, (0u32..256, 1u32..=20), 1..24).prop_map(|entries| {
        let mut f = PredictionFrame::new(1, 0);
        for (pos, (tok, level)) in entries {
            f.entries.insert(
                pos,
                Proposal {
                    token: TokenId(tok),
                    conf: level as f64 / 20.0,
                },
            );
        }
        f
    })
}

fn policy(block_len: usize) -> impl Strategy<Value = DecodePolicy<f64>> {
    prop_oneof![
        (1usize..=block_len + 1).prop_map(DecodePolicy::fixed),
        (0.01f64..=1.0).prop_map(DecodePolicy::static_threshold),
        (0usize..2, 0usize..5, 0.05f64..=1.0, 0.0f64..0.9, 0.05f64..=1.0).prop_map(|(m, mu, cap, slack, calib)| {
            DecodePolicy {
                calibration_tau: calib,
                ..DecodePolicy::osdt(Mode::ALL[m], Metric::ALL[mu], cap, slack)
            }
        }),
    ]
}

fn prompts(n: usize, gen_len: usize) -> Vec<(String, Vec<TokenId>, Vec<TokenId>)> {
    (0..n)
        .map(|i| {
            let prompt = (0..i % 5).map(|j| TokenId(j as u32 + 97)).collect();
            let reference = (0..gen_len).map(|j| TokenId(((i * 31 + j * 7) % 256) as u32)).collect();
            (format!("q{i}"), prompt, reference)
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn masks_only_shrink_and_every_position_commits_once(
        (layout, policy) in layout().prop_flat_map(|l| (Just(l), policy(l.block_len))),
        seed in any::<u64>(),
        levels in prop::option::of(1u32..5),
        n in 1usize..4,
    ) {
        let items = prompts(n, layout.gen_len);
        let contexts: Vec<_> = items.iter().map(|(id, p, r)| PromptContext::new(id, p, r)).collect();
        let predictor = HashPredictor { seed, levels };
        let run = run_policy(&contexts, &predictor, layout, &policy, None).unwrap();
        for ((_, prompt, _), out) in items.iter().zip(&run.outputs) {
            let mut state = SequenceState::init(prompt, layout.gen_len, layout.block_len, predictor.mask_id()).unwrap();
            let mut seen = BTreeSet::new();
            let mut last_masked = state.masked_count();
            for step in &out.trace.steps {
                prop_assert!(!step.positions.is_empty());
                let range = state.layout().block_range(step.block).unwrap();
                for &p in &step.positions {
                    prop_assert!(range.contains(&p));
                    prop_assert!(seen.insert(p), "position {} committed twice", p);
                }
                let sel = mdm_sched::UnmaskSelection {
                    block: step.block,
                    step: step.step,
                    positions: step.positions.clone(),
                    tokens: step.tokens.clone(),
                    fallback_used: step.fallback_used,
                };
                state.unmask_and_update(&sel).unwrap();
                prop_assert!(state.masked_count() < last_masked);
                last_masked = state.masked_count();
            }
            prop_assert_eq!(seen.len(), layout.gen_len);
            prop_assert!(state.is_complete());
            prop_assert_eq!(state.tokens(), out.state.tokens());
            prop_assert!(out.trace.predictor_calls <= layout.gen_len);
        }
    }

    #[test]
    fn lower_threshold_selects_superset(f in frame(), a in 0.0f64..=1.0, b in 0.0f64..=1.0) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let wide: BTreeSet<usize> = select_unmask_set(&f, lo).positions.into_iter().collect();
        let narrow: BTreeSet<usize> = select_unmask_set(&f, hi).positions.into_iter().collect();
        prop_assert!(narrow.is_subset(&wide));
    }

    #[test]
    fn effective_threshold_within_cap(
        taus in prop::collection::vec(prop::collection::vec(1e-6f64..=1.0, 1..6), 1..5),
        cap in 1e-3f64..=1.0,
        slack in 0.0f64..0.999,
        block in 1usize..5,
        step in 0usize..10,
    ) {
        let nb = taus.len();
        let profile = ThresholdProfile { metric: Metric::Q2, thresholds: Thresholds::StepBlock(taus.clone()) };
        let block = block.min(nb);
        let t = lookup_threshold(&profile, block, step, cap, slack).unwrap();
        prop_assert!(t > 0.0 && t <= cap);
        let raw = lookup_threshold(&profile, block, step, 1.0, 0.0).unwrap();
        let row = &taus[block - 1];
        prop_assert_eq!(raw, row[step.min(row.len() - 1)]);
    }

    #[test]
    fn degenerate_profile_matches_static(
        layout in layout(),
        seed in any::<u64>(),
        levels in prop::option::of(1u32..5),
        tau0 in 0.05f64..=1.0,
        extra_cap in 0.0f64..0.5,
        mode in 0usize..2,
    ) {
        let items = prompts(2, layout.gen_len);
        let predictor = HashPredictor { seed, levels };
        let profile = ThresholdProfile::uniform(Mode::ALL[mode], Metric::Mean, layout.num_blocks(), 2, tau0);
        let cap = (tau0 + extra_cap).min(1.0);
        for (id, p, r) in &items {
            let ctx = PromptContext::new(id, p, r);
            let d = dynamic_generate(&ctx, &predictor, layout, &profile, cap, 0.0, RecordScope::AllMasked).unwrap();
            let s = static_threshold_generate(&ctx, &predictor, layout, tau0, RecordScope::AllMasked).unwrap();
            prop_assert!(d.trace.same_schedule(&s.trace));
        }
    }

    #[test]
    fn unit_threshold_is_fixed_quota_one(layout in layout(), seed in any::<u64>(), levels in prop::option::of(1u32..5)) {
        let items = prompts(1, layout.gen_len);
        let (id, p, r) = &items[0];
        let ctx = PromptContext::new(id, p, r);
        let predictor = HashPredictor { seed, levels };
        let s = static_threshold_generate(&ctx, &predictor, layout, 1.0, RecordScope::AcceptedTokens).unwrap();
        let k = fixed_quota_generate(&ctx, &predictor, layout, 1, RecordScope::AcceptedTokens).unwrap();
        prop_assert!(s.trace.steps.iter().all(|st| st.fallback_used));
        prop_assert_eq!(s.trace.predictor_calls, layout.gen_len);
        let sp: Vec<_> = s.trace.steps.iter().map(|st| (&st.positions, &st.tokens)).collect();
        let kp: Vec<_> = k.trace.steps.iter().map(|st| (&st.positions, &st.tokens)).collect();
        prop_assert_eq!(sp, kp);
    }

    #[test]
    fn statistics_are_ordered(values in prop::collection::vec(1e-6f64..=1.0, 1..60)) {
        let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let s = |m| statistic(&values, m).unwrap();
        let chain = [lo, s(Metric::MinWhisker), s(Metric::Q1), s(Metric::Q2), s(Metric::Q3), hi];
        prop_assert!(chain.windows(2).all(|w| w[0] <= w[1]), "{:?}", chain);
        prop_assert!(lo <= s(Metric::Mean) && s(Metric::Mean) <= hi);
        for m in Metric::ALL {
            prop_assert!((s(m) - statistic_oracle(&values, m)).abs() <= 1e-12);
        }
    }

    #[test]
    fn statistics_in_f32_track_f64(values in prop::collection::vec(1e-3f32..=1.0, 1..40)) {
        let wide: Vec<f64> = values.iter().map(|&v| v as f64).collect();
        for m in Metric::ALL {
            let a = statistic(&values, m).unwrap() as f64;
            let b = statistic(&wide, m).unwrap();
            prop_assert!((a - b).abs() <= 1e-5, "{}: {} vs {}", m, a, b);
        }
    }

    #[test]
    fn cosine_is_scale_invariant(
        pairs in prop::collection::vec((1e-3f64..=1.0, 1e-3f64..=1.0), 1..40),
        c in 1e-3f64..1e3,
    ) {
        let (u, v): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        let scaled: Vec<f64> = u.iter().map(|x| x * c).collect();
        let a = cosine_similarity(&u, &v).unwrap();
        let b = cosine_similarity(&scaled, &v).unwrap();
        prop_assert!((a - b).abs() <= 1e-9);
        prop_assert!((-1.0..=1.0).contains(&a));
        prop_assert!((cosine_similarity(&u, &u).unwrap() - 1.0).abs() <= 1e-9);
        prop_assert_eq!(a, cosine_similarity(&v, &u).unwrap());
    }

    #[test]
    fn pareto_frontier_is_sound(coords in prop::collection::vec((0u8..10, 0u8..10), 1..100)) {
        let points: Vec<ParetoPoint> = coords
            .iter()
            .enumerate()
            .map(|(i, &(a, t))| ParetoPoint::new(format!("p{i}"), a as f64, t as f64))
            .collect();
        let front = pareto_frontier(&points);
        for p in &points {
            let on = front.iter().any(|f| f.accuracy == p.accuracy && f.throughput == p.throughput);
            prop_assert!(on || front.iter().any(|f| dominates(f, p)));
        }
        for a in &front {
            for b in &front {
                prop_assert!(!dominates(a, b));
            }
        }
        prop_assert!(front.windows(2).all(|w| w[0].throughput > w[1].throughput));
    }

    #[test]
    fn scripted_predictor_is_deterministic_and_bounded(
        seed in any::<u64>(),
        jitter in 0.0f64..0.5,
        layout in layout(),
        block_pick in any::<prop::sample::Index>(),
        step in 0usize..40,
    ) {
        let p = ScriptedPredictor::new(ScriptedSchedule::default().with_seed(seed).with_jitter(jitter)).unwrap();
        let items = prompts(1, layout.gen_len);
        let (id, prompt, reference) = &items[0];
        let ctx = PromptContext::new(id, prompt, reference);
        let state = SequenceState::init(prompt, layout.gen_len, layout.block_len, p.mask_id()).unwrap();
        let block = block_pick.index(layout.num_blocks()) + 1;
        let a = p.predict(&ctx, &state, block, step).unwrap();
        let b = p.predict(&ctx, &state, block, step).unwrap();
        prop_assert_eq!(&a, &b);
        prop_assert!(a.entries.values().all(|e| e.conf > 0.0 && e.conf <= 1.0));
        prop_assert!(a.validate(&state).is_ok());
    }

    #[test]
    fn bigram_rows_are_distributions(
        corpus in prop::collection::vec(prop::collection::vec(0u32..12, 2..30), 1..8),
        alpha in 0.01f64..2.0,
    ) {
        let corpus: Vec<Vec<TokenId>> = corpus.into_iter().map(|s| s.into_iter().map(TokenId).collect()).collect();
        let vocab = 12;
        let m = bigram_fit(&corpus, vocab, alpha).unwrap();
        for prev in 0..vocab as u32 {
            let probs: Vec<f64> = (0..vocab as u32).map(|n| m.prob(TokenId(prev), TokenId(n))).collect();
            prop_assert!((probs.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
            // Brute-force argmax over every non-excluded token, lowest id on ties.
            let exclude = TokenId(vocab as u32 - 1);
            let mut best = (TokenId(0), f64::NEG_INFINITY);
            for (n, &pr) in probs.iter().enumerate() {
                if n as u32 != exclude.0 && pr > best.1 {
                    best = (TokenId(n as u32), pr);
                }
            }
            prop_assert_eq!(m.argmax(TokenId(prev), exclude), best);
        }
    }

    #[test]
    fn profile_json_round_trips(
        taus in prop::collection::vec(prop::collection::vec(1e-6f64..=1.0, 1..5), 1..5),
        block_mode in any::<bool>(),
    ) {
        let thresholds = if block_mode {
            Thresholds::Block(taus.iter().map(|r| r[0]).collect())
        } else {
            Thresholds::StepBlock(taus)
        };
        let profile = ThresholdProfile { metric: Metric::MinWhisker, thresholds };
        let text = serde_json::to_string(&profile).unwrap();
        let back: ThresholdProfile<f64> = serde_json::from_str(&text).unwrap();
        prop_assert_eq!(back, profile);
    }

    #[test]
    fn metrics_are_consistent(layout in layout(), seed in any::<u64>(), k in 1usize..6) {
        let items = prompts(3, layout.gen_len);
        let predictor = HashPredictor { seed, levels: None };
        let traces: Vec<_> = items
            .iter()
            .map(|(id, p, r)| {
                fixed_quota_generate(&PromptContext::new(id, p, r), &predictor, layout, k, RecordScope::AcceptedTokens)
                    .unwrap()
                    .trace
            })
            .collect();
        let m = run_metrics(&traces, &[true, false, true]).unwrap();
        let generated = (3 * layout.gen_len) as f64;
        prop_assert!((m.tokens_per_call * m.predictor_calls as f64 - generated).abs() <= 1e-9 * generated);
        prop_assert_eq!(m.mean_tokens_per_step, m.tokens_per_call);
        prop_assert!((m.accuracy - 2.0 / 3.0).abs() <= 1e-15);
    }
}
