//! Asymptotic decoy-state key rate over a lossy fiber channel.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::coeffs::CoefficientProvider;
use super::decoy::{estimate, DecoyInputs, DecoyLpProblem, GainOrientation};
use crate::error::{Error, Result};

/// `-x log2 x - (1 - x) log2 (1 - x)`, zero at both ends.
pub fn binary_entropy(x: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::domain(format!("entropy argument {x} outside [0, 1]")));
    }
    if x == 0.0 || x == 1.0 {
        return Ok(0.0);
    }
    Ok(-x * x.log2() - (1.0 - x) * (1.0 - x).log2())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SkrInputs {
    pub q_mu: f64,
    pub e_mu: f64,
    pub y1_lower: f64,
    pub e1_upper: f64,
    pub mu: f64,
    pub f_ec: f64,
    pub q_sift: f64,
}

/// `max(0, q (-Q f H2(E) + mu e^{-mu} Y1 (1 - H2(e1))))` in bits per pulse.
pub fn skr(i: &SkrInputs) -> Result<f64> {
    for (name, v) in [("E_mu", i.e_mu), ("e1_upper", i.e1_upper)] {
        if !(0.0..=0.5).contains(&v) {
            return Err(Error::domain(format!("{name} = {v} outside [0, 0.5]")));
        }
    }
    let privacy = i.mu * (-i.mu).exp() * i.y1_lower * (1.0 - binary_entropy(i.e1_upper)?);
    let ec = i.q_mu * i.f_ec * binary_entropy(i.e_mu)?;
    Ok((i.q_sift * (privacy - ec)).max(0.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Channel {
    pub alpha_db_per_km: f64,
    pub eta_det: f64,
    /// Background yield per pulse.
    pub dark: f64,
    pub e_mis: f64,
}

impl Channel {
    pub fn eta(&self, km: f64) -> f64 {
        self.eta_det * 10f64.powf(-self.alpha_db_per_km * km / 10.0)
    }

    /// `(Q_a, E_a Q_a)` for a pulse of mean `a` at total efficiency `eta`,
    /// with background error 1/2.
    pub fn observables(&self, eta: f64, a: f64) -> (f64, f64) {
        let q = 1.0 - (1.0 - self.dark) * (-eta * a).exp();
        (q, 0.5 * self.dark + self.e_mis * (q - self.dark))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Protocol {
    pub names: Vec<String>,
    pub intensities: Vec<f64>,
    pub signal: usize,
    pub f_ec: f64,
    pub q_sift: f64,
    pub n_cut: usize,
}

impl Protocol {
    /// V, D1, D2, S at 0.001, 0.03, 0.09, 0.23 with signal S.
    pub fn bb84_default() -> Self {
        Protocol {
            names: ["V", "D1", "D2", "S"].iter().map(|s| s.to_string()).collect(),
            intensities: vec![0.001, 0.03, 0.09, 0.23],
            signal: 3,
            f_ec: 1.16,
            q_sift: 0.5,
            n_cut: 10,
        }
    }

    pub fn decoy_inputs(&self, channel: &Channel, eta: f64, delta_max: f64) -> DecoyInputs {
        let (gains, error_gains) = self.intensities.iter().map(|&a| channel.observables(eta, a)).unzip();
        DecoyInputs {
            names: self.names.clone(),
            intensities: self.intensities.clone(),
            gains,
            error_gains,
            delta_max,
            n_cut: self.n_cut,
            signal: self.signal,
            orientation: GainOrientation::Printed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KeyRatePoint {
    pub distance: f64,
    pub eta_channel: f64,
    pub q_mu: f64,
    pub e_mu: f64,
    pub y1_lower: f64,
    pub e1_upper: f64,
    pub skr: f64,
    /// The program had no feasible point; the bound fields are zero.
    pub infeasible: bool,
}

fn point(channel: &Channel, protocol: &Protocol, delta: f64, km: f64, provider: &dyn CoefficientProvider) -> Result<KeyRatePoint> {
    let eta = channel.eta(km);
    let inputs = protocol.decoy_inputs(channel, eta, delta);
    let mu = protocol.intensities[protocol.signal];
    let q_mu = inputs.gains[protocol.signal];
    let e_mu = inputs.error_gains[protocol.signal] / q_mu;
    let problem = DecoyLpProblem::build(inputs, provider)?;
    let (est, infeasible) = match estimate(&problem) {
        Ok(e) => (Some(e), false),
        Err(Error::Infeasible { .. }) | Err(Error::Unbounded) => (None, true),
        Err(e) => return Err(e),
    };
    let (y1_lower, e1_upper, rate) = match est {
        Some(e) => {
            let r = skr(&SkrInputs {
                q_mu,
                e_mu,
                y1_lower: e.y1_lower,
                e1_upper: e.e1_upper,
                mu,
                f_ec: protocol.f_ec,
                q_sift: protocol.q_sift,
            })?;
            (e.y1_lower, e.e1_upper, r)
        }
        None => (0.0, 0.5, 0.0),
    };
    Ok(KeyRatePoint { distance: km, eta_channel: eta, q_mu, e_mu, y1_lower, e1_upper, skr: rate, infeasible })
}

/// Key rate at each distance for one `delta_max`. Points are independent
/// and computed in parallel; an infeasible point is marked and the curve
/// continues.
pub fn rate_curve(
    channel: &Channel,
    protocol: &Protocol,
    delta_max: f64,
    distances: &[f64],
    provider: &dyn CoefficientProvider,
) -> Result<Vec<KeyRatePoint>> {
    if distances.is_empty() {
        return Err(Error::domain("no distances given"));
    }
    distances.par_iter().map(|&km| point(channel, protocol, delta_max, km, provider)).collect()
}

/// Largest distance with a strictly positive rate, if any.
pub fn cutoff_distance(curve: &[KeyRatePoint]) -> Option<f64> {
    curve.iter().filter(|p| p.skr > 0.0).map(|p| p.distance).fold(None, |a, d| Some(a.map_or(d, |x: f64| x.max(d))))
}

#[cfg(test)]
mod tests {
    use super::super::coeffs::{IdentityProvider, LinkCoeffs, UniformProvider};
    use super::*;

    #[test]
    fn entropy_properties() {
        assert_eq!(binary_entropy(0.0).unwrap(), 0.0);
        assert_eq!(binary_entropy(1.0).unwrap(), 0.0);
        assert!((binary_entropy(0.5).unwrap() - 1.0).abs() < 1e-15);
        for i in 1..50 {
            let x = i as f64 / 100.0;
            assert!((binary_entropy(x).unwrap() - binary_entropy(1.0 - x).unwrap()).abs() < 1e-14);
        }
        assert!(binary_entropy(-0.1).is_err());
    }

    fn base() -> SkrInputs {
        SkrInputs { q_mu: 1e-3, e_mu: 0.02, y1_lower: 1e-3, e1_upper: 0.03, mu: 0.23, f_ec: 1.16, q_sift: 0.5 }
    }

    #[test]
    fn skr_examples() {
        assert_eq!(skr(&SkrInputs { e1_upper: 0.5, ..base() }).unwrap(), 0.0);
        let y1 = 0.01;
        let r = skr(&SkrInputs { e_mu: 0.0, e1_upper: 0.0, y1_lower: y1, ..base() }).unwrap();
        assert!((r - 0.5 * 0.23 * (-0.23f64).exp() * y1).abs() < 1e-15);
        assert!(skr(&SkrInputs { e_mu: 0.6, ..base() }).is_err());
    }

    #[test]
    fn curve_decreases_with_distance_and_delta() {
        let channel = Channel { alpha_db_per_km: 0.2, eta_det: 0.1, dark: 1e-6, e_mis: 0.01 };
        let protocol = Protocol::bb84_default();
        let km: Vec<f64> = (0..=20).map(|i| i as f64 * 10.0).collect();
        let zero = rate_curve(&channel, &protocol, 0.0, &km, &IdentityProvider).unwrap();
        assert!(zero[0].skr > 0.0);
        assert!(zero.windows(2).all(|w| w[1].skr <= w[0].skr + 1e-15));
        let uniform = UniformProvider(LinkCoeffs::IDENTITY);
        let corr = rate_curve(&channel, &protocol, 0.005, &km, &uniform).unwrap();
        for (a, b) in zero.iter().zip(&corr) {
            assert!(b.skr <= a.skr + 1e-15, "{} km", a.distance);
        }
        assert!(cutoff_distance(&corr).unwrap_or(-1.0) < cutoff_distance(&zero).unwrap());
        assert!(rate_curve(&channel, &protocol, 0.0, &[], &IdentityProvider).is_err());
    }
}
