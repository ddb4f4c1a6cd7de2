//! Click probability of a threshold single-photon detector illuminated by a
//! weak coherent pulse, its inverse, and the small-signal linearity check.
//!
//! Dark counts are not part of this model; the simulator owns them.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Steady-state after-pulse inflation of the observed click rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AfterPulseModel {
    /// Overall after-pulse rate.
    pub q: f64,
    /// Gates per dead-time interval.
    pub tau: u32,
}

impl AfterPulseModel {
    pub const NONE: AfterPulseModel = AfterPulseModel { q: 0.0, tau: 1 };

    pub fn new(q: f64, tau: u32) -> Result<Self> {
        if !(q >= 0.0) || !q.is_finite() {
            return Err(Error::domain(format!("after-pulse rate q = {q} must be >= 0")));
        }
        if tau < 1 {
            return Err(Error::domain("tau must be >= 1"));
        }
        Ok(AfterPulseModel { q, tau })
    }
}

/// `1 - exp(-eta * m)`: probability that at least one photon of a Poisson
/// pulse with mean `m` is detected at efficiency `eta`.
pub fn click_probability(eta: f64, m: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&eta) {
        return Err(Error::domain(format!("efficiency {eta} outside [0, 1]")));
    }
    if !(m >= 0.0) || !m.is_finite() {
        return Err(Error::domain(format!("mean photon number {m} must be >= 0")));
    }
    Ok(-(-eta * m).exp_m1())
}

/// Mean photon number that produces the observed click rate `rate`.
///
/// The rate is first deflated by `1 + q`, then `m = -ln(1 - R') / eta`.
pub fn invert_click_rate(rate: f64, eta: f64, ap: AfterPulseModel) -> Result<f64> {
    if !(eta > 0.0) {
        return Err(Error::domain(format!("efficiency {eta} must be > 0")));
    }
    if !(rate >= 0.0) {
        return Err(Error::domain(format!("click rate {rate} must be >= 0")));
    }
    let corrected = rate / (1.0 + ap.q);
    if corrected >= 1.0 {
        return Err(Error::domain(format!("rate exceeds saturable range: {rate} / (1 + {}) >= 1", ap.q)));
    }
    Ok((-(-corrected).ln_1p() / eta).max(0.0))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LinearityRow {
    pub m: f64,
    pub p_click: f64,
    pub fit: f64,
    pub deviation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LinearityReport {
    pub eta: f64,
    pub best_fit_slope: f64,
    pub max_relative_deviation: f64,
    pub rows: Vec<LinearityRow>,
}

/// Least-squares line through the origin of click probability against mean
/// photon number, and the worst relative departure from it.
pub fn linearity_report(eta: f64, m_grid: &[f64]) -> Result<LinearityReport> {
    if m_grid.is_empty() {
        return Err(Error::domain("linearity grid is empty"));
    }
    if let Some(m) = m_grid.iter().find(|&&m| !(m > 0.0 && m < 1.0)) {
        return Err(Error::domain(format!("grid point {m} outside (0, 1)")));
    }
    let probs = m_grid
        .iter()
        .map(|&m| click_probability(eta, m))
        .collect::<Result<Vec<_>>>()?;
    let sxy: f64 = m_grid.iter().zip(&probs).map(|(m, p)| m * p).sum();
    let sxx: f64 = m_grid.iter().map(|m| m * m).sum();
    let slope = sxy / sxx;

    let rows: Vec<LinearityRow> = m_grid
        .iter()
        .zip(&probs)
        .map(|(&m, &p)| {
            let fit = slope * m;
            let deviation = if p > 0.0 { (p - fit).abs() / p } else { 0.0 };
            LinearityRow { m, p_click: p, fit, deviation }
        })
        .collect();
    let max_relative_deviation = rows.iter().map(|r| r.deviation).fold(0.0, f64::max);
    Ok(LinearityReport { eta, best_fit_slope: slope, max_relative_deviation, rows })
}

/// `0.1, 0.2, ..., 1.0` without the right endpoint drifting past 1 by rounding.
pub fn default_grid(points: usize) -> Vec<f64> {
    (1..=points).map(|i| (i as f64 / points as f64).min(0.999_999)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn click_probability_examples() {
        assert_eq!(click_probability(0.5, 0.0).unwrap(), 0.0);
        assert!((click_probability(1.0, std::f64::consts::LN_2).unwrap() - 0.5).abs() < 1e-15);
        // 1 - exp(-0.05) to 8 decimals
        assert!((click_probability(0.1, 0.5).unwrap() - 0.048_770_58).abs() < 1e-8);
        assert!(click_probability(-0.1, 0.5).is_err());
        assert!(click_probability(0.1, -0.5).is_err());
        assert!(click_probability(1.1, 0.5).is_err());
    }

    #[test]
    fn inversion_examples() {
        assert_eq!(invert_click_rate(0.0, 0.3, AfterPulseModel::NONE).unwrap(), 0.0);
        let m = invert_click_rate(0.048_770_58, 0.1, AfterPulseModel::NONE).unwrap();
        assert!((m - 0.5).abs() < 1e-6);

        let ap = AfterPulseModel::new(0.022, 5).unwrap();
        let rate = click_probability(0.2, 0.3).unwrap() * 1.022;
        assert!((invert_click_rate(rate, 0.2, ap).unwrap() - 0.3).abs() < 1e-6);

        let err = invert_click_rate(1.0, 0.1, AfterPulseModel::NONE).unwrap_err();
        assert!(err.to_string().contains("saturable"));
        assert!(invert_click_rate(1.02, 0.1, ap).is_ok());
        assert!(invert_click_rate(1.022, 0.1, ap).is_err());
    }

    #[test]
    fn exact_inverse_on_grid() {
        for &eta in &[0.01, 0.1, 0.5, 1.0] {
            for i in 0..=100 {
                let m = i as f64 / 100.0;
                let r = click_probability(eta, m).unwrap();
                let back = invert_click_rate(r, eta, AfterPulseModel::NONE).unwrap();
                assert!((back - m).abs() < 1e-9, "eta {eta} m {m} back {back}");
            }
        }
    }

    #[test]
    fn linearity_examples() {
        let grid = default_grid(10);
        let low = linearity_report(0.01, &grid).unwrap();
        assert!(low.max_relative_deviation < 0.01, "{}", low.max_relative_deviation);
        let high = linearity_report(1.0, &grid).unwrap();
        assert!(high.max_relative_deviation > 0.05, "{}", high.max_relative_deviation);
        let single = linearity_report(0.3, &[0.5]).unwrap();
        assert!(single.max_relative_deviation < 1e-15);
        assert!(linearity_report(0.3, &[]).is_err());
        assert!(linearity_report(0.3, &[1.0]).is_err());
    }

    #[test]
    fn small_signal_bound() {
        for i in 1..=100 {
            let x = 0.01 * i as f64 / 100.0;
            let p = click_probability(1.0, x).unwrap();
            assert!((p - x).abs() / p <= 0.006);
        }
    }
}
