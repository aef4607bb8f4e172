//! Small numeric helpers shared by the policy and training code.

/// Softmax of `logits / temperature`.
///
/// Temperature 0 is greedy: probability 1 on the argmax, ties broken by
/// lowest index.
pub fn softmax(logits: &[f64], temperature: f64) -> Vec<f64> {
    assert!(!logits.is_empty(), "softmax over empty logits");
    if temperature == 0.0 {
        let arg = argmax(logits);
        let mut p = vec![0.0; logits.len()];
        p[arg] = 1.0;
        return p;
    }
    let scaled: Vec<f64> = logits.iter().map(|l| l / temperature).collect();
    let max = scaled.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scaled.iter().map(|l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.iter().map(|e| e / sum).collect()
}

/// Log-softmax of `logits / temperature` (temperature must be positive).
pub fn log_softmax(logits: &[f64], temperature: f64) -> Vec<f64> {
    assert!(temperature > 0.0, "log_softmax needs positive temperature");
    let scaled: Vec<f64> = logits.iter().map(|l| l / temperature).collect();
    let max = scaled.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let log_sum = scaled.iter().map(|l| (l - max).exp()).sum::<f64>().ln() + max;
    scaled.iter().map(|l| l - log_sum).collect()
}

/// Index of the maximum entry; first index wins on ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Exact KL divergence between two categorical distributions given as logits.
pub fn kl_categorical(logits_p: &[f64], logits_q: &[f64]) -> f64 {
    debug_assert_eq!(logits_p.len(), logits_q.len());
    let lp = log_softmax(logits_p, 1.0);
    let lq = log_softmax(logits_q, 1.0);
    lp.iter()
        .zip(lq.iter())
        .map(|(a, b)| a.exp() * (a - b))
        .sum()
}

/// Mean of a non-empty slice.
pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Population standard deviation (divide by n) of a non-empty slice.
pub fn pop_std(xs: &[f64]) -> f64 {
    let mu = mean(xs);
    (xs.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / xs.len() as f64).sqrt()
}

/// Sample a categorical index from explicit probabilities.
pub fn sample_categorical<R: rand::Rng>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}
