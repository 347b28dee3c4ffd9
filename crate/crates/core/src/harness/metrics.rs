//! Learning-curve metrics.

/// Smoothing weight of the newest return in the moving average.
pub const SMOOTHING: f64 = 0.1;

/// Trailing window used for the solve criterion.
pub const SOLVE_WINDOW: usize = 100;

/// `0.1·r + 0.9·prev`, or `r` itself for the first episode.
pub fn moving_average(prev: Option<f64>, r: f64) -> f64 {
    match prev {
        Some(mu) => SMOOTHING * r + (1.0 - SMOOTHING) * mu,
        None => r,
    }
}

/// Moving averages of a whole return sequence.
pub fn moving_averages(returns: &[f64]) -> Vec<f64> {
    let mut prev = None;
    returns
        .iter()
        .map(|&r| {
            let mu = moving_average(prev, r);
            prev = Some(mu);
            mu
        })
        .collect()
}

/// First 1-based episode whose trailing-100 mean return reaches `threshold`.
pub fn solved_at(returns: &[f64], threshold: f64) -> Option<usize> {
    if returns.len() < SOLVE_WINDOW {
        return None;
    }
    let mut sum: f64 = returns[..SOLVE_WINDOW].iter().sum();
    if sum / SOLVE_WINDOW as f64 >= threshold {
        return Some(SOLVE_WINDOW);
    }
    for end in SOLVE_WINDOW..returns.len() {
        sum += returns[end] - returns[end - SOLVE_WINDOW];
        if sum / SOLVE_WINDOW as f64 >= threshold {
            return Some(end + 1);
        }
    }
    None
}

/// Mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}
