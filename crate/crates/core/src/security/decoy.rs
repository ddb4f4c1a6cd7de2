//! Decoy-state linear program over the yields `Y_n^a`, `n = 0..=n_cut`, of
//! every intensity setting `a`, with intensities allowed to deviate by a
//! relative `delta_max`.
//!
//! Gain constraints, with `a+ = a (1 + delta)` and `a- = a (1 - delta)`:
//!
//! ```text
//! Q_a >= e^{-a+} Y_0 + sum_n e^{-a-} (a-)^n / n! Y_n
//! Q_a <= 1 - e^{-a+} + e^{-a-} Y_0 - sum_n e^{-a+} a^n / n! (1 - Y_n)
//! ```
//!
//! Linking constraints for every ordered pair `a != b` and every `n`:
//! `c+ + m+ Y_n^a >= Y_n^b` and `c- + m- Y_n^a <= Y_n^b`. All yields lie in
//! `[0, 1]`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::coeffs::{CoefficientProvider, LinkCoeffs};
use super::lp::{solve, Constraint, ConstraintFamily, LinearProgram, Relation};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GainOrientation {
    /// `a+` and `a-` placed as in the constraints above.
    Printed,
    /// `a+` and `a-` exchanged throughout the gain constraints.
    Swapped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecoyInputs {
    pub names: Vec<String>,
    /// Nominal mean photon number per setting.
    pub intensities: Vec<f64>,
    pub gains: Vec<f64>,
    /// `E_a Q_a` per setting.
    pub error_gains: Vec<f64>,
    pub delta_max: f64,
    pub n_cut: usize,
    /// Setting whose single-photon yield is bounded.
    pub signal: usize,
    pub orientation: GainOrientation,
}

#[derive(Debug, Clone)]
pub struct DecoyLpProblem {
    pub inputs: DecoyInputs,
    /// `links[(a * p + b) * (n_cut + 1) + n]`; unused on the diagonal.
    links: Vec<LinkCoeffs>,
    pub provider: String,
}

impl DecoyLpProblem {
    /// Validates inputs and resolves every coefficient up front, so a missing
    /// table row fails here rather than mid-solve.
    pub fn build(inputs: DecoyInputs, provider: &dyn CoefficientProvider) -> Result<Self> {
        let p = inputs.names.len();
        if p < 2 {
            return Err(Error::config("need at least two intensity settings"));
        }
        for (what, len) in [
            ("intensities", inputs.intensities.len()),
            ("gains", inputs.gains.len()),
            ("error gains", inputs.error_gains.len()),
        ] {
            if len != p {
                return Err(Error::config(format!("{what}: expected {p} entries, got {len}")));
            }
        }
        if inputs.signal >= p {
            return Err(Error::config("signal setting out of range"));
        }
        if !(0.0..1.0).contains(&inputs.delta_max) {
            return Err(Error::domain(format!("delta_max = {} outside [0, 1)", inputs.delta_max)));
        }
        if inputs.n_cut < 1 {
            return Err(Error::config("n_cut must be >= 1"));
        }
        if let Some(a) = inputs.intensities.iter().find(|a| !(**a >= 0.0 && a.is_finite())) {
            return Err(Error::domain(format!("intensity {a} must be >= 0")));
        }
        for (q, eq) in inputs.gains.iter().zip(&inputs.error_gains) {
            if !(0.0..=1.0).contains(q) || !(0.0..=1.0).contains(eq) {
                return Err(Error::domain(format!("gain {q} / error gain {eq} outside [0, 1]")));
            }
        }
        let per = inputs.n_cut + 1;
        let mut links = vec![LinkCoeffs::IDENTITY; p * p * per];
        for a in 0..p {
            for b in 0..p {
                if a == b {
                    continue;
                }
                for n in 0..per {
                    links[(a * p + b) * per + n] =
                        provider.coefficients(&inputs.names[a], &inputs.names[b], n, inputs.delta_max)?;
                }
            }
        }
        Ok(DecoyLpProblem { inputs, links, provider: provider.describe() })
    }

    pub fn n_vars(&self) -> usize {
        self.inputs.names.len() * (self.inputs.n_cut + 1)
    }

    fn var(&self, a: usize, n: usize) -> usize {
        a * (self.inputs.n_cut + 1) + n
    }

    fn program(&self, gains: &[f64], objective_var: usize, maximize: bool) -> LinearProgram {
        let inp = &self.inputs;
        let p = inp.names.len();
        let per = inp.n_cut + 1;
        let nv = self.n_vars();
        let mut constraints = Vec::new();
        for a in 0..p {
            let mu = inp.intensities[a];
            let (hi, lo) = match inp.orientation {
                GainOrientation::Printed => (mu * (1.0 + inp.delta_max), mu * (1.0 - inp.delta_max)),
                GainOrientation::Swapped => (mu * (1.0 - inp.delta_max), mu * (1.0 + inp.delta_max)),
            };
            let mut lower = vec![0.0; nv];
            let mut upper = vec![0.0; nv];
            lower[self.var(a, 0)] = (-hi).exp();
            upper[self.var(a, 0)] = -(-lo).exp();
            let mut w_sum = 0.0;
            let (mut pow_lo, mut pow_mu, mut fact) = (1.0f64, 1.0f64, 1.0f64);
            for n in 1..per {
                pow_lo *= lo;
                pow_mu *= mu;
                fact *= n as f64;
                lower[self.var(a, n)] = (-lo).exp() * pow_lo / fact;
                let w = (-hi).exp() * pow_mu / fact;
                upper[self.var(a, n)] = -w;
                w_sum += w;
            }
            constraints.push(Constraint {
                coeffs: lower,
                relation: Relation::Le,
                rhs: gains[a],
                family: ConstraintFamily::GainLower,
            });
            // Q <= 1 - e^{-hi} + e^{-lo} Y0 - sum w (1 - Y_n)
            constraints.push(Constraint {
                coeffs: upper,
                relation: Relation::Le,
                rhs: 1.0 - (-hi).exp() - w_sum - gains[a],
                family: ConstraintFamily::GainUpper,
            });
        }
        for a in 0..p {
            for b in 0..p {
                if a == b {
                    continue;
                }
                for n in 0..per {
                    let l = self.links[(a * p + b) * per + n];
                    let mut up = vec![0.0; nv];
                    up[self.var(a, n)] = l.m_plus;
                    up[self.var(b, n)] -= 1.0;
                    constraints.push(Constraint {
                        coeffs: up,
                        relation: Relation::Ge,
                        rhs: -l.c_plus,
                        family: ConstraintFamily::LinkUpper,
                    });
                    let mut down = vec![0.0; nv];
                    down[self.var(a, n)] = l.m_minus;
                    down[self.var(b, n)] -= 1.0;
                    constraints.push(Constraint {
                        coeffs: down,
                        relation: Relation::Le,
                        rhs: -l.c_minus,
                        family: ConstraintFamily::LinkLower,
                    });
                }
            }
        }
        for v in 0..nv {
            let mut row = vec![0.0; nv];
            row[v] = 1.0;
            constraints.push(Constraint { coeffs: row, relation: Relation::Le, rhs: 1.0, family: ConstraintFamily::Box });
        }
        let mut objective = vec![0.0; nv];
        objective[objective_var] = 1.0;
        LinearProgram { n_vars: nv, objective, maximize, constraints }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Objective {
    /// Lower bound on the signal single-photon yield.
    MinY1,
    /// Upper bound on the signal single-photon error rate.
    MaxE1,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LpBound {
    pub value: f64,
    /// Sum of absolute shadow prices per constraint family.
    pub duals_by_family: BTreeMap<ConstraintFamily, f64>,
    pub iterations: usize,
}

fn run(problem: &DecoyLpProblem, gains: &[f64], maximize: bool) -> Result<LpBound> {
    let lp = problem.program(gains, problem.var(problem.inputs.signal, 1), maximize);
    let sol = solve(&lp)?;
    let mut duals_by_family = BTreeMap::new();
    for (con, d) in lp.constraints.iter().zip(&sol.duals) {
        *duals_by_family.entry(con.family).or_insert(0.0) += d.abs();
    }
    Ok(LpBound { value: sol.objective.clamp(0.0, 1.0), duals_by_family, iterations: sol.iterations })
}

/// `MinY1` returns the minimum of `Y_1` at the signal setting. `MaxE1`
/// maximizes the single-photon error yield `e_1 Y_1` under the error gains
/// and returns `min(0.5, max(e_1 Y_1) / min(Y_1))`.
pub fn decoy_lp_bounds(problem: &DecoyLpProblem, objective: Objective) -> Result<LpBound> {
    match objective {
        Objective::MinY1 => run(problem, &problem.inputs.gains, false),
        Objective::MaxE1 => {
            let h = run(problem, &problem.inputs.error_gains, true)?;
            let y = run(problem, &problem.inputs.gains, false)?;
            let e1 = if h.value <= 0.0 {
                0.0
            } else if y.value <= 0.0 {
                0.5
            } else {
                (h.value / y.value).min(0.5)
            };
            Ok(LpBound { value: e1, duals_by_family: h.duals_by_family, iterations: h.iterations + y.iterations })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DecoyEstimate {
    pub y1_lower: f64,
    pub h1_upper: f64,
    pub e1_upper: f64,
}

pub fn estimate(problem: &DecoyLpProblem) -> Result<DecoyEstimate> {
    let y1_lower = run(problem, &problem.inputs.gains, false)?.value;
    let h1_upper = run(problem, &problem.inputs.error_gains, true)?.value;
    let e1_upper = if h1_upper <= 0.0 {
        0.0
    } else if y1_lower <= 0.0 {
        0.5
    } else {
        (h1_upper / y1_lower).min(0.5)
    };
    Ok(DecoyEstimate { y1_lower, h1_upper, e1_upper })
}

/// Bounds under the printed and the swapped gain orientation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StrictnessAudit {
    pub printed: DecoyEstimate,
    pub swapped: DecoyEstimate,
}

pub fn strictness_audit(inputs: &DecoyInputs, provider: &dyn CoefficientProvider) -> Result<StrictnessAudit> {
    let mut printed = inputs.clone();
    printed.orientation = GainOrientation::Printed;
    let mut swapped = inputs.clone();
    swapped.orientation = GainOrientation::Swapped;
    Ok(StrictnessAudit {
        printed: estimate(&DecoyLpProblem::build(printed, provider)?)?,
        swapped: estimate(&DecoyLpProblem::build(swapped, provider)?)?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NcutConvergence {
    pub rows: Vec<(usize, DecoyEstimate)>,
    /// Largest change of `Y1_lower` or `e1_upper` across the rows.
    pub drift: f64,
}

pub fn ncut_convergence(
    inputs: &DecoyInputs,
    provider: &dyn CoefficientProvider,
    n_cuts: &[usize],
) -> Result<NcutConvergence> {
    let mut rows = Vec::new();
    for &n in n_cuts {
        let mut i = inputs.clone();
        i.n_cut = n;
        rows.push((n, estimate(&DecoyLpProblem::build(i, provider)?)?));
    }
    let spread = |f: fn(&DecoyEstimate) -> f64| {
        let vals: Vec<f64> = rows.iter().map(|(_, e)| f(e)).collect();
        vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - vals.iter().cloned().fold(f64::INFINITY, f64::min)
    };
    let drift = spread(|e| e.y1_lower).max(spread(|e| e.e1_upper));
    Ok(NcutConvergence { rows, drift })
}

/// Expected gains of a setting with yields `Y_n` under Poisson emission,
/// summed to `terms` photons.
pub fn poisson_gain(mu: f64, yields: impl Fn(usize) -> f64, terms: usize) -> f64 {
    let mut p = (-mu).exp();
    let mut total = 0.0;
    for n in 0..=terms {
        if n > 0 {
            p *= mu / n as f64;
        }
        total += p * yields(n);
    }
    total
}

#[cfg(test)]
mod tests {
    use super::super::coeffs::{IdentityProvider, TableProvider, UniformProvider};
    use super::*;

    fn names() -> Vec<String> {
        ["V", "D1", "D2", "S"].iter().map(|s| s.to_string()).collect()
    }

    const MUS: [f64; 4] = [0.001, 0.03, 0.09, 0.23];

    /// Gains from yields `Y0 = 0`, `Y_n = 1` and errors `e_1 = 0.05`, none else.
    fn boundary_inputs(delta: f64) -> DecoyInputs {
        let gains = MUS.iter().map(|&m| 1.0 - (-m).exp()).collect();
        let error_gains = MUS.iter().map(|&m| 0.05 * m * (-m).exp()).collect();
        DecoyInputs {
            names: names(),
            intensities: MUS.to_vec(),
            gains,
            error_gains,
            delta_max: delta,
            n_cut: 10,
            signal: 3,
            orientation: GainOrientation::Printed,
        }
    }

    /// Gains from a lossy channel with dark counts.
    fn channel_inputs(delta: f64, eta: f64) -> DecoyInputs {
        let y0 = 1e-5;
        let gains: Vec<f64> = MUS.iter().map(|&m| 1.0 - (1.0 - y0) * (-eta * m).exp()).collect();
        let error_gains = gains.iter().map(|q| 0.5 * y0 + 0.01 * (q - y0)).collect();
        DecoyInputs { gains, error_gains, ..boundary_inputs(delta) }
    }

    #[test]
    fn recovers_boundary_yields() {
        let p = DecoyLpProblem::build(boundary_inputs(0.0), &IdentityProvider).unwrap();
        let est = estimate(&p).unwrap();
        assert!((est.y1_lower - 1.0).abs() < 1e-6, "{est:?}");
        assert!((est.e1_upper - 0.05).abs() < 1e-6, "{est:?}");
    }

    #[test]
    fn zero_error_gains_give_zero_e1() {
        let mut i = boundary_inputs(0.0);
        i.error_gains = vec![0.0; 4];
        let p = DecoyLpProblem::build(i, &IdentityProvider).unwrap();
        assert!(decoy_lp_bounds(&p, Objective::MaxE1).unwrap().value < 1e-9);
    }

    #[test]
    fn bound_direction_on_lossy_channel() {
        for &eta in &[0.5, 0.05, 1e-3] {
            let i = channel_inputs(0.0, eta);
            let p = DecoyLpProblem::build(i, &IdentityProvider).unwrap();
            let est = estimate(&p).unwrap();
            let y1 = 1.0 - (1.0 - 1e-5) * (1.0 - eta);
            let e1 = (0.5 * 1e-5 + 0.01 * (y1 - 1e-5)) / y1;
            assert!(est.y1_lower <= y1 + 1e-9, "eta {eta}: {} > {y1}", est.y1_lower);
            assert!(est.e1_upper >= e1 - 1e-9, "eta {eta}: {} < {e1}", est.e1_upper);
            assert!(est.y1_lower > 0.5 * y1, "eta {eta}: bound {} too loose vs {y1}", est.y1_lower);
        }
    }

    #[test]
    fn monotone_in_delta() {
        let provider = UniformProvider(LinkCoeffs::IDENTITY);
        let mut last = (f64::INFINITY, 0.0);
        for &d in &[0.0, 0.001, 0.002, 0.005, 0.1, 0.3, 0.63] {
            let p = DecoyLpProblem::build(channel_inputs(d, 0.01), &provider).unwrap();
            let e = estimate(&p).unwrap();
            assert!(e.y1_lower <= last.0 + 1e-12, "delta {d}");
            assert!(e.e1_upper >= last.1 - 1e-12, "delta {d}");
            last = (e.y1_lower, e.e1_upper);
        }
    }

    #[test]
    fn identity_table_matches_identity_provider() {
        let mut table = TableProvider::default();
        for a in names() {
            for b in names() {
                for n in 0..=10 {
                    table.insert(&a, &b, n, LinkCoeffs::IDENTITY);
                }
            }
        }
        let x = estimate(&DecoyLpProblem::build(channel_inputs(0.0, 0.05), &IdentityProvider).unwrap()).unwrap();
        let y = estimate(&DecoyLpProblem::build(channel_inputs(0.0, 0.05), &table).unwrap()).unwrap();
        assert!((x.y1_lower - y.y1_lower).abs() < 1e-12);
    }

    #[test]
    fn looser_links_never_raise_y1() {
        let tight = estimate(&DecoyLpProblem::build(channel_inputs(0.0, 0.05), &UniformProvider(LinkCoeffs::IDENTITY)).unwrap())
            .unwrap();
        let loose = UniformProvider(LinkCoeffs { c_plus: 0.01, c_minus: -0.01, m_plus: 1.0, m_minus: 1.0 });
        let l = estimate(&DecoyLpProblem::build(channel_inputs(0.0, 0.05), &loose).unwrap()).unwrap();
        assert!(l.y1_lower <= tight.y1_lower + 1e-12);
    }

    #[test]
    fn build_time_validation() {
        let mut table = TableProvider::default();
        table.insert("V", "S", 0, LinkCoeffs::IDENTITY);
        assert!(matches!(DecoyLpProblem::build(boundary_inputs(0.0), &table), Err(Error::Config(_))));
        assert!(DecoyLpProblem::build(boundary_inputs(0.1), &IdentityProvider).is_err());
        assert!(DecoyLpProblem::build(boundary_inputs(1.0), &UniformProvider(LinkCoeffs::IDENTITY)).is_err());
        let mut bad = boundary_inputs(0.0);
        bad.gains[0] = 1.5;
        assert!(DecoyLpProblem::build(bad, &IdentityProvider).is_err());
    }

    #[test]
    fn inconsistent_gains_are_infeasible() {
        // identical yields cannot produce a vacuum gain above the signal gain
        let mut i = boundary_inputs(0.0);
        i.gains = vec![0.5, 0.01, 0.02, 0.03];
        let p = DecoyLpProblem::build(i, &IdentityProvider).unwrap();
        assert!(matches!(estimate(&p), Err(Error::Infeasible { .. })));
    }

    #[test]
    fn audit_and_convergence() {
        let i = channel_inputs(0.0, 0.05);
        let audit = strictness_audit(&i, &IdentityProvider).unwrap();
        assert!((audit.printed.y1_lower - audit.swapped.y1_lower).abs() < 1e-12);
        let conv = ncut_convergence(&i, &IdentityProvider, &[10, 12]).unwrap();
        assert!(conv.drift < 1e-6, "{}", conv.drift);
    }

    #[test]
    fn poisson_gain_closed_form() {
        let g = poisson_gain(0.23, |n| 1.0 - 0.9f64.powi(n as i32), 60);
        assert!((g - (1.0 - (-0.023f64).exp())).abs() < 1e-15);
    }
}
