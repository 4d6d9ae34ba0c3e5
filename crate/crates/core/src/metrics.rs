//! Error metrics and summary statistics for benchmark output.

/// `|y - y_hat| / max(y, 1)`.
pub fn abs_rel_error(exact: f64, estimate: f64) -> f64 {
    (exact - estimate).abs() / exact.max(1.0)
}

/// `max(y / y_hat, y_hat / y)`, infinite when the estimate is not positive.
/// An exact value of zero is clamped to one, like the relative error
/// denominator.
pub fn q_error(exact: f64, estimate: f64) -> f64 {
    if estimate <= 0.0 {
        return f64::INFINITY;
    }
    let y = exact.max(1.0);
    (y / estimate).max(estimate / y)
}

/// Percentile `p` in `[0, 100]` with linear interpolation between order
/// statistics. NaN on empty input.
pub fn percentile(values: &[f64], p: f64) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let rank = (p.clamp(0.0, 100.0) / 100.0) * (sorted.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (rank - lo as f64)
}

/// Least-squares slope of `ln y` against `ln x`. Points with a non-positive
/// coordinate are skipped; `None` with fewer than two usable points.
pub fn loglog_slope(points: &[(f64, f64)]) -> Option<f64> {
    let logs: Vec<(f64, f64)> = points
        .iter()
        .filter(|(x, y)| *x > 0.0 && *y > 0.0 && y.is_finite())
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    if logs.len() < 2 {
        return None;
    }
    let n = logs.len() as f64;
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = logs.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = logs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    Some(sxy / sxx)
}
