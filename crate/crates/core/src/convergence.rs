//! Convergence-order estimation over nested grid refinements.

use serde::{Deserialize, Serialize};

/// Least-squares slope of `log r` against `log h`. Needs at least two levels
/// with positive, finite residuals and distinct spacings.
pub fn fit_order(h: &[f64], residuals: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = h
        .iter()
        .zip(residuals)
        .filter(|(h, r)| **h > 0.0 && **r > 0.0 && r.is_finite())
        .map(|(h, r)| (h.ln(), r.ln()))
        .collect();
    if pts.len() < 2 || pts.len() != h.len() {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    Some(sxy / sxx)
}

/// Outcome of an order claim.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OrderVerdict {
    /// Fitted order meets the minimum.
    Converged,
    /// Every level sits at or below the roundoff floor.
    AtFloor,
    /// Neither holds.
    NotConverged,
    /// Fewer than two levels.
    Undetermined,
}

impl OrderVerdict {
    pub fn passed(&self) -> bool {
        matches!(self, OrderVerdict::Converged | OrderVerdict::AtFloor)
    }
}

/// Judges residuals on refinements with spacings `h` against a minimum
/// order, treating residuals under `floor` at every level as converged.
pub fn judge_order(h: &[f64], residuals: &[f64], min_order: f64, floor: f64) -> (Option<f64>, OrderVerdict) {
    if h.len() < 2 || h.len() != residuals.len() {
        return (None, OrderVerdict::Undetermined);
    }
    let order = fit_order(h, residuals);
    if residuals.iter().all(|r| r.abs() <= floor) {
        return (order, OrderVerdict::AtFloor);
    }
    match order {
        Some(p) if p >= min_order => (order, OrderVerdict::Converged),
        _ => (order, OrderVerdict::NotConverged),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn exact_power_law() {
        let h = [0.1, 0.05, 0.025];
        let r: Vec<f64> = h.iter().map(|x| 3.0 * x * x).collect();
        assert!((fit_order(&h, &r).unwrap() - 2.0).abs() < 1e-12);
        assert_eq!(fit_order(&h[..1], &r[..1]), None);
        assert_eq!(fit_order(&h, &[1.0, 0.0, 1.0]), None);
    }

    #[test]
    fn verdicts() {
        let h = [0.1, 0.05];
        assert_eq!(judge_order(&h, &[4e-2, 1e-2], 1.8, 1e-11).1, OrderVerdict::Converged);
        assert_eq!(judge_order(&h, &[1e-13, 3e-13], 1.8, 1e-11).1, OrderVerdict::AtFloor);
        assert_eq!(judge_order(&h, &[1.0, 0.9], 1.8, 1e-11).1, OrderVerdict::NotConverged);
        assert_eq!(judge_order(&h[..1], &[1.0], 1.8, 1e-11), (None, OrderVerdict::Undetermined));
    }

    proptest! {
        #[test]
        fn fit_recovers_power(p in 0.5f64..4.0, c in 1e-3f64..1e3, h0 in 0.01f64..0.5) {
            let h = [h0, h0 / 2.0, h0 / 4.0];
            let r: Vec<f64> = h.iter().map(|x| c * x.powf(p)).collect();
            prop_assert!((fit_order(&h, &r).unwrap() - p).abs() < 1e-9);
        }
    }
}
