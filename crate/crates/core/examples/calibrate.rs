//! Scratch harness: training dynamics on the sufficient-template task.

use semloop_core::grpo::{train, TrainConfig};
use semloop_core::ingest::{feature_range, gen_synthetic, SynthConfig};
use semloop_core::policy::{ToyConfig, ToyPolicy, ToyPolicyParams};
use semloop_core::prompt::render_stage1;
use semloop_core::reward::{gaussian_reward, RewardSpec};
use semloop_core::schema::{Domain, FeatureSchema, FeatureSpec, SchemaName, Score, TaskKind};

fn desk_schema() -> FeatureSchema {
    let f = |key: &str, label: &str, unit: &str, domain: Domain| FeatureSpec {
        key: key.into(), label: label.into(), unit: unit.into(), domain,
        description: "desk feature".into(),
    };
    FeatureSchema {
        name: SchemaName::Custom("desk".into()),
        features: vec![
            f("sleep_hours", "Sleep hours", "hours", Domain::Sleep),
            f("steps", "Daily steps", "count", Domain::Activity),
            f("screen_ratio", "Screen ratio", "ratio (0-1)", Domain::PhoneUse),
        ],
    }
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let beta: f64 = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(0.002);
    let lr: f64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(0.9);
    let steps: usize = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(1200);
    let seed: u64 = args.get(4).and_then(|s| s.parse().ok()).unwrap_or(42);

    let schema = desk_schema();
    let synth = SynthConfig {
        schema: schema.clone(),
        subjects_per_subset: 24,
        weeks_per_subject: 2,
        subset_tags: vec!["DS2".into(), "DS3".into()],
        signal_feature: "sleep_hours".into(),
        noise_scale: 0.0,
        seed: 101,
        signal_slope: 12.0,
        shift_scale: 0.0,
    };
    let dataset = gen_synthetic(&synth).unwrap();
    let toy_cfg = ToyConfig::new(8, feature_range("hours"), "Sleep hours");
    let probe = ToyPolicy::uniform(toy_cfg.clone()).unwrap();
    let spec = RewardSpec::default();

    // enumerate (bucket, label) pairs as the policy will see them
    let pairs: Vec<(usize, Score)> = dataset.samples.iter().map(|s| {
        let prompt = render_stage1(&s.window, &schema).unwrap();
        (probe.bucketize_stage1(&prompt).unwrap(), s.anxiety)
    }).collect();
    let mut by_bucket: std::collections::BTreeMap<usize, Vec<Score>> = Default::default();
    for (b, y) in &pairs { by_bucket.entry(*b).or_default().push(*y); }
    println!("bucket occupancy: {:?}", by_bucket.iter().map(|(b, v)| (*b, v.len())).collect::<Vec<_>>());

    // oracle optimum
    let mut opt_sum = 0.0;
    for (_, ys) in &by_bucket {
        let best = Score::all().map(|s| {
            ys.iter().map(|y| gaussian_reward(s, *y, &spec)).sum::<f64>()
        }).fold(f64::NEG_INFINITY, f64::max);
        opt_sum += best;
    }
    let opt = opt_sum / pairs.len() as f64;
    println!("oracle optimum expected reward: {opt:.6}");

    let cfg = TrainConfig {
        group_size: 8, batch_samples: 32, beta, lr_initial: lr, steps,
        epsilon: 1e-4, temperature: 1.0, seed,
    };
    let t0 = std::time::Instant::now();
    let out = train(&dataset, TaskKind::Anxiety, &toy_cfg, ToyPolicyParams::uniform(&toy_cfg), &cfg, &spec).unwrap();
    let elapsed = t0.elapsed();

    let trained = ToyPolicy::new(toy_cfg.clone(), out.params).unwrap();
    // exact expected reward of the stochastic policy at temperature 1
    let mut total = 0.0;
    for (b, y) in &pairs {
        let tprobs = semloop_core::math::softmax(&trained.params.stage1[*b], 1.0);
        for (m, pm) in tprobs.iter().enumerate() {
            let text = toy_cfg.templates.text_for(m, *b, toy_cfg.buckets);
            let ctx = toy_cfg.stage2_context(&text);
            let sprobs = semloop_core::math::softmax(&trained.params.stage2[ctx], 1.0);
            for (s, ps) in sprobs.iter().enumerate() {
                total += pm * ps * gaussian_reward(Score::new(s as u8).unwrap(), *y, &spec);
            }
        }
    }
    let expected = total / pairs.len() as f64;
    let min_suff = by_bucket.keys().map(|&b| trained.sufficient_probability(b, 1.0))
        .fold(f64::INFINITY, f64::min);
    println!("beta={beta} lr={lr} steps={steps} seed={seed}");
    println!("expected reward {expected:.6} ({:.1}% of opt), min sufficient prob {min_suff:.4}, elapsed {elapsed:?}",
        100.0 * expected / opt);
    let last = &out.curve[out.curve.len()-1];
    println!("final curve point: mean_reward {:.4} kl {:.4}", last.mean_reward, last.kl);

    // diagnostics: per-bucket labels, sufficient prob, and stage-2 argmax
    for (b, ys) in &by_bucket {
        let mut hist = [0usize; 7];
        for y in ys { hist[y.value() as usize] += 1; }
        let suff = trained.sufficient_probability(*b, 1.0);
        let sprobs = semloop_core::math::softmax(&trained.params.stage2[*b], 1.0);
        let argmax = semloop_core::math::argmax(&sprobs);
        println!("  bucket {b}: labels {hist:?} suff_p {suff:.3} stage2_argmax {argmax} p {:.3}", sprobs[argmax]);
    }
    let uninf = toy_cfg.uninformative_context();
    let uprobs = semloop_core::math::softmax(&trained.params.stage2[uninf], 1.0);
    println!("  uninformative ctx distribution: {:?}", uprobs.iter().map(|p| (p * 1000.0).round() / 1000.0).collect::<Vec<_>>());
}
