use super::SimilarityMatrix;
use crate::error::{Error, Result};

fn log_sum_exp(xs: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = xs.clone().fold(f64::NEG_INFINITY, f64::max);
    max + xs.map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Symmetric cross-entropy over `S / temperature`: the mean of the row-wise
/// (instruction to policy) and column-wise (policy to instruction) softmax
/// losses with the diagonal as targets.
pub fn clip_loss(s: &SimilarityMatrix, temperature: f64) -> Result<f64> {
    check_temperature(temperature)?;
    let n = s.n();
    let scaled = |i: usize, j: usize| s.get(i, j) / temperature;
    let mut total = 0.0;
    for i in 0..n {
        total += log_sum_exp((0..n).map(|j| scaled(i, j))) - scaled(i, i);
        total += log_sum_exp((0..n).map(|k| scaled(k, i))) - scaled(i, i);
    }
    // Each term is a cross-entropy, so round-off below zero is clamped.
    Ok((total / (2 * n) as f64).max(0.0))
}

/// `dL/dS` for [`clip_loss`], row-major.
pub fn clip_loss_grad(s: &SimilarityMatrix, temperature: f64) -> Result<Vec<f64>> {
    check_temperature(temperature)?;
    let n = s.n();
    let scale = 1.0 / (2.0 * n as f64 * temperature);
    let mut grad = vec![0.0; n * n];
    for i in 0..n {
        let lse = log_sum_exp((0..n).map(|j| s.get(i, j) / temperature));
        for j in 0..n {
            grad[i * n + j] += (s.get(i, j) / temperature - lse).exp() * scale;
        }
        grad[i * n + i] -= scale;
    }
    for j in 0..n {
        let lse = log_sum_exp((0..n).map(|i| s.get(i, j) / temperature));
        for i in 0..n {
            grad[i * n + j] += (s.get(i, j) / temperature - lse).exp() * scale;
        }
        grad[j * n + j] -= scale;
    }
    Ok(grad)
}

fn check_temperature(t: f64) -> Result<()> {
    if t > 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(Error::Parameter(format!("temperature must be positive, got {t}")))
    }
}
