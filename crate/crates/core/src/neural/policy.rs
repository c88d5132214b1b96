//! Diagonal Gaussian policy head over the actor's output mean.

use ndarray::Array1;

use crate::rng::Stream;

const LOG_2PI: f64 = 1.8378770664093453;

/// Sample an action a = mean + std * n, n ~ N(0, I).
pub fn sample_action(mean: &[f64], log_std: &Array1<f64>, stream: &mut Stream) -> Vec<f64> {
    mean.iter()
        .zip(log_std.iter())
        .map(|(m, ls)| m + ls.exp() * stream.normal())
        .collect()
}

/// Log-density of `action` under the diagonal Gaussian.
pub fn log_prob(mean: &[f64], log_std: &Array1<f64>, action: &[f64]) -> f64 {
    let mut lp = 0.0;
    for ((m, ls), a) in mean.iter().zip(log_std.iter()).zip(action.iter()) {
        let z = (a - m) / ls.exp();
        lp -= 0.5 * (z * z + LOG_2PI) + ls;
    }
    lp
}

/// d log_prob / d mean_j = (a_j - m_j) / sigma_j^2.
pub fn dlogp_dmean(mean: &[f64], log_std: &Array1<f64>, action: &[f64]) -> Vec<f64> {
    mean.iter()
        .zip(log_std.iter())
        .zip(action.iter())
        .map(|((m, ls), a)| {
            let var = (2.0 * ls).exp();
            (a - m) / var
        })
        .collect()
}

/// d log_prob / d log_std_j = ((a_j - m_j)/sigma_j)^2 - 1.
pub fn dlogp_dlogstd(mean: &[f64], log_std: &Array1<f64>, action: &[f64]) -> Vec<f64> {
    mean.iter()
        .zip(log_std.iter())
        .zip(action.iter())
        .map(|((m, ls), a)| {
            let z = (a - m) / ls.exp();
            z * z - 1.0
        })
        .collect()
}

/// Differential entropy of the diagonal Gaussian (independent of the mean).
pub fn entropy(log_std: &Array1<f64>) -> f64 {
    log_std.iter().map(|ls| ls + 0.5 * (LOG_2PI + 1.0)).sum()
}
