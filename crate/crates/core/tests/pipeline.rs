//! Cross-module integration: synthetic data through prompting, the toy
//! policy, rollouts, and folds.

use proptest::prelude::*;

use semloop_core::grpo::{normalize_advantages, rollout_group};
use semloop_core::ingest::{feature_range, gen_synthetic, split_loso, SynthConfig};
use semloop_core::parse::{extract_summary, ParseOutcome};
use semloop_core::policy::{ToyConfig, ToyPolicy};
use semloop_core::prompt::render_stage1;
use semloop_core::reward::{trajectory_reward, RewardSpec};
use semloop_core::schema::{validate_window, FeatureSchema, TaskKind};

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

fn synth_cfg(subjects: usize, weeks: usize, tags: usize, seed: u64) -> SynthConfig {
    SynthConfig {
        schema: FeatureSchema::builtin("CollegeExperience").unwrap(),
        subjects_per_subset: subjects,
        weeks_per_subject: weeks,
        subset_tags: (2..2 + tags).map(|i| format!("DS{i}")).collect(),
        signal_feature: "sleep_duration".into(),
        noise_scale: 0.3,
        seed,
        signal_slope: 12.0,
        shift_scale: 0.05,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn generated_windows_always_validate(
        subjects in 1usize..4,
        weeks in 1usize..4,
        tags in 2usize..4,
        seed in 0u64..1000,
    ) {
        let cfg = synth_cfg(subjects, weeks, tags, seed);
        let dataset = gen_synthetic(&cfg).unwrap();
        prop_assert_eq!(dataset.len(), subjects * weeks * tags);
        for sample in &dataset.samples {
            validate_window(&sample.window, &dataset.schema, 14).unwrap();
            // label is the day after the last window day
            let last = sample.window.days.last().unwrap().date;
            prop_assert_eq!(last.succ_opt().unwrap(), sample.label_date);
        }
    }

    #[test]
    fn folds_partition_and_stay_subject_disjoint(
        subjects in 1usize..4,
        weeks in 1usize..3,
        tags in 2usize..5,
        seed in 0u64..1000,
    ) {
        let dataset = gen_synthetic(&synth_cfg(subjects, weeks, tags, seed)).unwrap();
        let folds = split_loso(&dataset).unwrap();
        prop_assert_eq!(folds.len(), tags);
        let mut covered = std::collections::BTreeSet::new();
        for fold in &folds {
            for &i in &fold.test {
                prop_assert!(covered.insert(i));
            }
            let train_subjects: std::collections::BTreeSet<_> =
                fold.train.iter().map(|&i| &dataset.samples[i].window.subject_id).collect();
            for &i in &fold.test {
                prop_assert!(!train_subjects.contains(&dataset.samples[i].window.subject_id));
            }
        }
        prop_assert_eq!(covered.len(), dataset.len());
    }

    #[test]
    fn think_prefix_never_changes_valid_summaries(
        payload in "[a-zA-Z0-9 .,]{1,60}",
        reasoning in "[a-zA-Z0-9 ]{0,40}",
    ) {
        let base = extract_summary(&payload, false);
        if let ParseOutcome::Valid(expected) = base {
            let wrapped = format!("<think>{reasoning}</think>{payload}");
            prop_assert_eq!(extract_summary(&wrapped, false), ParseOutcome::Valid(expected.clone()));
            prop_assert_eq!(extract_summary(&wrapped, true), ParseOutcome::Valid(expected));
        }
    }

    #[test]
    fn advantages_standardize_any_group(
        rewards in proptest::collection::vec(0.0f64..=1.0, 2..32),
    ) {
        let batch = normalize_advantages(&rewards, 1e-4).unwrap();
        let mean = batch.advantages.iter().sum::<f64>() / batch.advantages.len() as f64;
        prop_assert!(mean.abs() < 1e-12);
        for (a, r) in batch.advantages.iter().zip(&rewards) {
            prop_assert!((a * (batch.sd + batch.epsilon) + batch.mu - r).abs() < 1e-12);
        }
    }
}

#[test]
fn toy_rollouts_through_real_pipeline() {
    let dataset = gen_synthetic(&synth_cfg(4, 2, 2, 3)).unwrap();
    let toy_cfg = ToyConfig::new(8, feature_range("hours"), "Sleep duration");
    let policy = ToyPolicy::uniform(toy_cfg).unwrap();
    let spec = RewardSpec::default();
    let mut rng = ChaCha12Rng::seed_from_u64(0);

    for (i, sample) in dataset.samples.iter().enumerate().take(6) {
        let trajectories = rollout_group(
            &dataset.schema,
            sample,
            i,
            TaskKind::Anxiety,
            &policy,
            &spec,
            8,
            1.0,
            &mut rng,
        )
        .unwrap();
        assert_eq!(trajectories.len(), 8);
        for t in &trajectories {
            // stage-2 fields exist exactly when the summary is valid
            assert_eq!(t.summary.is_valid(), t.stage2_prompt.is_some());
            assert_eq!(t.summary.is_valid(), t.stage2_completion.is_some());
            // stored reward recomputes from stored outcomes
            let recomputed =
                trajectory_reward(&t.summary, &t.prediction, sample.anxiety, &spec);
            assert_eq!(t.reward, recomputed);
            assert!((0.0..=1.0).contains(&t.reward));
            // toy decisions recorded on every completion
            assert!(t.stage1_completion.decisions.is_some());
        }
    }
}

#[test]
fn same_bucket_windows_share_stage2_prompts() {
    let dataset = gen_synthetic(&synth_cfg(6, 2, 2, 9)).unwrap();
    let toy_cfg = ToyConfig::new(8, feature_range("hours"), "Sleep duration");
    let policy = ToyPolicy::uniform(toy_cfg).unwrap();

    // find two samples that land in the same bucket but differ in raw values
    let mut by_bucket: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
    for (i, s) in dataset.samples.iter().enumerate() {
        let prompt = render_stage1(&s.window, &dataset.schema).unwrap();
        let bucket = policy.bucketize_stage1(&prompt).unwrap();
        by_bucket.entry(bucket).or_default().push(i);
    }
    let pair = by_bucket.values().find(|v| v.len() >= 2).expect("bucket with two samples");
    let (a, b) = (pair[0], pair[1]);
    assert_ne!(dataset.samples[a].window, dataset.samples[b].window);

    let bucket = policy
        .bucketize_stage1(&render_stage1(&dataset.samples[a].window, &dataset.schema).unwrap())
        .unwrap();
    let summary = policy.cfg.templates.text_for(0, bucket, policy.cfg.buckets);
    let p1 = semloop_core::prompt::render_stage2(&summary, TaskKind::Anxiety).unwrap();
    let p2 = semloop_core::prompt::render_stage2(&summary, TaskKind::Anxiety).unwrap();
    assert_eq!(p1, p2);
    assert_eq!(
        policy.stage2_distribution(&summary, 1.0),
        policy.stage2_distribution(&summary, 1.0)
    );
}
