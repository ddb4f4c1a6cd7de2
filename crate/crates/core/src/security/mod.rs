//! From per-group click rates to intensity deviation bounds, and from those
//! to decoy-state yield bounds and key rates.

pub mod coeffs;
pub mod decoy;
pub mod keyrate;
pub mod lp;

use serde::{Deserialize, Serialize};

use crate::characterize::RateTable;
use crate::error::{Error, Result};
use crate::photon::{invert_click_rate, AfterPulseModel};

pub use coeffs::{CoefficientProvider, IdentityProvider, LinkCoeffs, TableProvider, UniformProvider};
pub use decoy::{
    decoy_lp_bounds, estimate, ncut_convergence, strictness_audit, DecoyEstimate, DecoyInputs, DecoyLpProblem,
    GainOrientation, LpBound, NcutConvergence, Objective, StrictnessAudit,
};
pub use keyrate::{binary_entropy, cutoff_distance, rate_curve, skr, Channel, KeyRatePoint, Protocol, SkrInputs};
pub use lp::ConstraintFamily;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupGaussianFit {
    pub group: usize,
    /// Mean inferred intensity across blocks, in photons.
    pub mu_hat: f64,
    /// Sample standard deviation across blocks.
    pub sigma_hat: f64,
    pub blocks: usize,
}

/// Inverts every block's rate to an intensity and takes the sample mean and
/// standard deviation per group. Groups absent from any block give `None`.
pub fn fit_group_gaussians(blocks: &[RateTable], eta: f64, ap: AfterPulseModel) -> Result<Vec<Option<GroupGaussianFit>>> {
    if blocks.len() < 2 {
        return Err(Error::domain(format!("need at least 2 blocks, got {}", blocks.len())));
    }
    let n = blocks[0].r.len();
    if blocks.iter().any(|b| b.r.len() != n) {
        return Err(Error::data("blocks have different group counts"));
    }
    (0..n)
        .map(|g| {
            let rates: Option<Vec<f64>> = blocks.iter().map(|b| b.r[g]).collect();
            let Some(rates) = rates else { return Ok(None) };
            let ms = rates
                .iter()
                .enumerate()
                .map(|(b, &r)| {
                    invert_click_rate(r, eta, ap).map_err(|e| Error::domain(format!("block {b}, group {g}: {e}")))
                })
                .collect::<Result<Vec<_>>>()?;
            let (mu_hat, sigma_hat) = mean_sd(&ms);
            Ok(Some(GroupGaussianFit { group: g, mu_hat, sigma_hat, blocks: ms.len() }))
        })
        .collect()
}

fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeviationBound {
    pub reference: usize,
    pub alternate: usize,
    pub a_minus: f64,
    pub a_plus: f64,
    pub delta: f64,
    /// The alternate variance was below the reference and the radicand was
    /// clamped to zero.
    pub clamped: bool,
}

/// `a± = mu_alt ± 3 sqrt(max(0, sigma_alt² - sigma_ref²))` and
/// `delta = (a+ - mu_alt) / mu_alt`.
pub fn deviation_bound(reference: &GroupGaussianFit, alternate: &GroupGaussianFit) -> Result<DeviationBound> {
    if !(alternate.mu_hat > 0.0) {
        return Err(Error::domain(format!("alternate mean {} must be > 0", alternate.mu_hat)));
    }
    let radicand = alternate.sigma_hat.powi(2) - reference.sigma_hat.powi(2);
    let half = 3.0 * radicand.max(0.0).sqrt();
    Ok(DeviationBound {
        reference: reference.group,
        alternate: alternate.group,
        a_minus: alternate.mu_hat - half,
        a_plus: alternate.mu_hat + half,
        delta: half / alternate.mu_hat,
        clamped: radicand < 0.0,
    })
}

/// For each current label, the minimum-variance group among those sharing it
/// is the reference, and every group (reference included) gets a bound.
pub fn label_bounds(fits: &[Option<GroupGaussianFit>], p: usize) -> Result<Vec<DeviationBound>> {
    let mut out = Vec::new();
    for label in 0..p {
        let members: Vec<&GroupGaussianFit> = (label..fits.len()).step_by(p).filter_map(|g| fits[g].as_ref()).collect();
        let Some(reference) = members.iter().min_by(|a, b| a.sigma_hat.total_cmp(&b.sigma_hat)) else {
            continue;
        };
        for alt in &members {
            out.push(deviation_bound(reference, alt)?);
        }
    }
    Ok(out)
}

pub fn delta_max(bounds: &[DeviationBound]) -> Result<f64> {
    bounds
        .iter()
        .map(|b| b.delta)
        .fold(None, |acc: Option<f64>, d| Some(acc.map_or(d, |a| a.max(d))))
        .ok_or_else(|| Error::domain("no deviation bounds"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::photon::click_probability;

    fn fit(group: usize, mu: f64, sigma: f64) -> GroupGaussianFit {
        GroupGaussianFit { group, mu_hat: mu, sigma_hat: sigma, blocks: 20 }
    }

    fn tables_for(ms: &[f64], eta: f64) -> Vec<RateTable> {
        ms.iter()
            .map(|&m| {
                let r = click_probability(eta, m).unwrap();
                RateTable::from_counts(2, 1, vec![1e12, 1e12], vec![r * 1e12, r * 1e12]).unwrap()
            })
            .collect()
    }

    #[test]
    fn gaussian_fit_examples() {
        let same = fit_group_gaussians(&tables_for(&[0.2, 0.2, 0.2], 0.1), 0.1, AfterPulseModel::NONE).unwrap();
        assert!(same[0].unwrap().sigma_hat < 1e-9);
        let f = fit_group_gaussians(&tables_for(&[0.20, 0.22, 0.24], 0.1), 0.1, AfterPulseModel::NONE).unwrap();
        let g = f[0].unwrap();
        assert!((g.mu_hat - 0.22).abs() < 1e-6);
        assert!((g.sigma_hat - 0.02).abs() < 1e-6);
        assert!(fit_group_gaussians(&tables_for(&[0.2], 0.1), 0.1, AfterPulseModel::NONE).is_err());
    }

    #[test]
    fn non_invertible_block_errors() {
        let mut t = tables_for(&[0.2, 0.2], 0.1);
        t[1] = RateTable::from_counts(2, 1, vec![1.0, 1.0], vec![1.0, 1.0]).unwrap();
        assert!(fit_group_gaussians(&t, 0.1, AfterPulseModel::NONE).is_err());
    }

    #[test]
    fn deviation_examples() {
        let eq = deviation_bound(&fit(0, 0.2, 0.01), &fit(1, 0.2, 0.01)).unwrap();
        assert_eq!((eq.a_minus, eq.a_plus, eq.delta), (0.2, 0.2, 0.0));
        let b = deviation_bound(&fit(0, 0.2, 0.006), &fit(1, 0.2, 0.01)).unwrap();
        let half = 3.0 * (0.01f64.powi(2) - 0.006f64.powi(2)).sqrt();
        assert!((half - 0.024).abs() < 1e-12);
        assert!((b.a_plus - 0.224).abs() < 1e-12 && (b.a_minus - 0.176).abs() < 1e-12);
        assert!((b.delta - 0.12).abs() < 1e-12);
        let c = deviation_bound(&fit(0, 0.2, 0.02), &fit(1, 0.2, 0.01)).unwrap();
        assert!(c.clamped && c.delta == 0.0);
        assert!(deviation_bound(&fit(0, 0.2, 0.0), &fit(1, 0.0, 0.01)).is_err());
    }

    #[test]
    fn delta_max_examples() {
        let mk = |d: f64| DeviationBound { reference: 0, alternate: 1, a_minus: 0.0, a_plus: 0.0, delta: d, clamped: false };
        assert_eq!(delta_max(&[mk(0.3)]).unwrap(), 0.3);
        assert_eq!(delta_max(&[mk(0.1), mk(0.63), mk(0.2)]).unwrap(), 0.63);
        assert!(delta_max(&[]).is_err());
    }

    #[test]
    fn label_reference_is_min_variance() {
        // p = 2, k = 2: groups 1 and 3 share current label 1
        let fits = vec![Some(fit(0, 0.1, 0.01)), Some(fit(1, 0.2, 0.004)), Some(fit(2, 0.1, 0.02)), Some(fit(3, 0.2, 0.01))];
        let b = label_bounds(&fits, 2).unwrap();
        assert_eq!(b.len(), 4);
        let l1: Vec<_> = b.iter().filter(|x| x.alternate % 2 == 1).collect();
        assert!(l1.iter().all(|x| x.reference == 1));
        assert!(l1.iter().all(|x| !x.clamped));
    }
}
