//! Feature-based reference predictors.

use super::{EvalError, Predictor};
use crate::ingest::Dataset;
use crate::schema::{BehavioralWindow, Score, TaskKind};

fn clamp_round_score(v: f64) -> Score {
    let r = v.round_ties_even().clamp(Score::MIN as f64, Score::MAX as f64);
    Score::new(r as u8).unwrap()
}

/// Predicts the rounded mean of the train labels, constantly.
#[derive(Debug, Default)]
pub struct MeanBaseline {
    prediction: Option<Score>,
}

impl MeanBaseline {
    pub fn new() -> MeanBaseline {
        MeanBaseline::default()
    }
}

impl Predictor for MeanBaseline {
    fn fit(&mut self, dataset: &Dataset, train: &[usize], task: TaskKind) -> Result<(), EvalError> {
        if train.is_empty() {
            return Err(EvalError::EmptySet);
        }
        let sum: f64 = train.iter().map(|&i| dataset.samples[i].target(task).value() as f64).sum();
        self.prediction = Some(clamp_round_score(sum / train.len() as f64));
        Ok(())
    }

    fn predict(&mut self, _window: &BehavioralWindow) -> Result<Option<Score>, EvalError> {
        Ok(Some(self.prediction.ok_or(EvalError::NotFitted)?))
    }
}

/// Least squares on per-window feature means, with mean-imputation for
/// features absent from a window. Falls back to the mean baseline when the
/// design is rank-deficient.
pub struct LinearBaseline {
    keys: Vec<String>,
    column_means: Vec<f64>,
    weights: Option<Vec<f64>>,
    fallback: Option<Score>,
}

impl LinearBaseline {
    pub fn new() -> LinearBaseline {
        LinearBaseline { keys: Vec::new(), column_means: Vec::new(), weights: None, fallback: None }
    }

    fn features_of(&self, window: &BehavioralWindow) -> Vec<f64> {
        self.keys
            .iter()
            .enumerate()
            .map(|(j, key)| window.feature_mean(key).unwrap_or(self.column_means[j]))
            .collect()
    }
}

impl Default for LinearBaseline {
    fn default() -> Self {
        LinearBaseline::new()
    }
}

/// Solves `a x = b` by Gaussian elimination with partial pivoting; `None`
/// when the system is singular to working precision.
fn solve_linear(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let pivot_row = (col..n)
            .max_by(|&i, &j| a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap())
            .unwrap();
        if a[pivot_row][col].abs() < 1e-10 {
            return None;
        }
        a.swap(col, pivot_row);
        b.swap(col, pivot_row);
        for row in col + 1..n {
            let factor = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= factor * a[col][k];
            }
            b[row] -= factor * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut acc = b[row];
        for k in row + 1..n {
            acc -= a[row][k] * x[k];
        }
        x[row] = acc / a[row][row];
    }
    Some(x)
}

impl Predictor for LinearBaseline {
    fn fit(&mut self, dataset: &Dataset, train: &[usize], task: TaskKind) -> Result<(), EvalError> {
        if train.is_empty() {
            return Err(EvalError::EmptySet);
        }
        self.keys = dataset.schema.features.iter().map(|f| f.key.clone()).collect();
        let d = self.keys.len();

        // per-column train means for imputation
        let mut sums = vec![0.0; d];
        let mut counts = vec![0usize; d];
        for &i in train {
            for (j, key) in self.keys.iter().enumerate() {
                if let Some(m) = dataset.samples[i].window.feature_mean(key) {
                    sums[j] += m;
                    counts[j] += 1;
                }
            }
        }
        self.column_means =
            sums.iter().zip(&counts).map(|(s, &c)| if c > 0 { s / c as f64 } else { 0.0 }).collect();

        // normal equations over [features, 1]
        let rows: Vec<(Vec<f64>, f64)> = train
            .iter()
            .map(|&i| {
                let mut x = self.features_of(&dataset.samples[i].window);
                x.push(1.0);
                (x, dataset.samples[i].target(task).value() as f64)
            })
            .collect();
        let p = d + 1;
        let mut xtx = vec![vec![0.0; p]; p];
        let mut xty = vec![0.0; p];
        for (x, y) in &rows {
            for j in 0..p {
                xty[j] += x[j] * y;
                for k in 0..p {
                    xtx[j][k] += x[j] * x[k];
                }
            }
        }
        self.weights = solve_linear(xtx, xty);
        if self.weights.is_none() {
            let mut mean = MeanBaseline::new();
            mean.fit(dataset, train, task)?;
            self.fallback = mean.prediction;
        }
        Ok(())
    }

    fn predict(&mut self, window: &BehavioralWindow) -> Result<Option<Score>, EvalError> {
        if let Some(w) = &self.weights {
            let mut x = self.features_of(window);
            x.push(1.0);
            let v: f64 = x.iter().zip(w).map(|(a, b)| a * b).sum();
            return Ok(Some(clamp_round_score(v)));
        }
        Ok(Some(self.fallback.ok_or(EvalError::NotFitted)?))
    }
}
