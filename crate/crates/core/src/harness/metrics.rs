//! Residual-power metrics.

use crate::{watts_to_dbm, Complex64};

/// Trailing moving average of `|e|²` over `min(n + 1, window)` samples, in dBm.
/// Each value is an independent direct sum so rounding never accumulates.
pub fn smoothed_dbm(residual: &[Complex64], window: usize) -> Vec<f64> {
    assert!(window > 0, "smoothing window must be positive");
    (0..residual.len())
        .map(|n| {
            let start = (n + 1).saturating_sub(window);
            let slice = &residual[start..=n];
            let power = slice.iter().map(|e| e.norm_sqr()).sum::<f64>() / slice.len() as f64;
            watts_to_dbm(power)
        })
        .collect()
}

/// Samples after an epoch start before the smoothing window lies wholly
/// inside the epoch.
pub fn settle_samples(window: usize) -> usize {
    window.saturating_sub(1)
}

/// First offset from `start` at which the smoothed trace is at or below
/// `threshold_dbm`, searching `[start + settle, end)`.
pub fn convergence_symbols(
    smoothed: &[f64],
    start: usize,
    end: usize,
    settle: usize,
    threshold_dbm: f64,
) -> Option<usize> {
    let end = end.min(smoothed.len());
    (start + settle..end)
        .find(|&n| smoothed[n] <= threshold_dbm)
        .map(|n| n - start)
}

/// `residual_si_dbm` minus the mean smoothed residual (dBm) over the epoch's
/// final quarter; `None` if the trace does not cover that quarter.
pub fn attenuation_db(smoothed: &[f64], start: usize, end: usize, residual_si_dbm: f64) -> Option<f64> {
    let from = end - (end - start) / 4;
    if end > smoothed.len() || from >= end {
        return None;
    }
    let tail = &smoothed[from..end];
    Some(residual_si_dbm - tail.iter().sum::<f64>() / tail.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_residual_has_flat_trace() {
        let e = vec![Complex64::new(1e-6, 0.0); 50];
        for v in smoothed_dbm(&e, 10) {
            assert!((v - -90.0).abs() < 1e-9);
        }
    }

    #[test]
    fn warm_up_uses_available_samples() {
        let e = [
            Complex64::new(1.0, 0.0),
            Complex64::new(0.0, 0.0),
            Complex64::new(0.0, 0.0),
        ];
        let s = smoothed_dbm(&e, 2);
        assert!((s[0] - 30.0).abs() < 1e-12);
        assert!((s[1] - watts_to_dbm(0.5)).abs() < 1e-12);
        assert_eq!(s[2], f64::NEG_INFINITY);
    }

    #[test]
    fn convergence_respects_settling() {
        let trace = vec![-95.0, -95.0, -80.0, -88.0, -86.0];
        assert_eq!(convergence_symbols(&trace, 0, 5, 0, -87.0), Some(0));
        assert_eq!(convergence_symbols(&trace, 0, 5, 2, -87.0), Some(3));
        assert_eq!(convergence_symbols(&trace, 1, 5, 2, -87.0), Some(2));
        assert_eq!(convergence_symbols(&trace, 0, 3, 2, -87.0), None);
    }

    #[test]
    fn attenuation_over_final_quarter() {
        let mut trace = vec![-60.0; 8];
        trace[6] = -80.0;
        trace[7] = -90.0;
        assert_eq!(attenuation_db(&trace, 0, 8, -50.0), Some(35.0));
        assert_eq!(attenuation_db(&trace[..5], 0, 8, -50.0), None);
    }
}
