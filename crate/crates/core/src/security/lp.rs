//! Dense two-phase tableau simplex for small linear programs.
//!
//! Pricing is Dantzig's most-negative reduced cost, switching to Bland's rule
//! after a run of degenerate pivots so that cycling cannot occur.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which block of the decoy program a constraint row belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ConstraintFamily {
    GainLower,
    GainUpper,
    LinkUpper,
    LinkLower,
    Box,
    Other,
}

impl fmt::Display for ConstraintFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ConstraintFamily::GainLower => "gain lower",
            ConstraintFamily::GainUpper => "gain upper",
            ConstraintFamily::LinkUpper => "linking upper",
            ConstraintFamily::LinkLower => "linking lower",
            ConstraintFamily::Box => "box",
            ConstraintFamily::Other => "other",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone)]
pub struct Constraint {
    pub coeffs: Vec<f64>,
    pub relation: Relation,
    pub rhs: f64,
    pub family: ConstraintFamily,
}

/// `max` or `min` of `objective . x` subject to `constraints` and `x >= 0`.
#[derive(Debug, Clone)]
pub struct LinearProgram {
    pub n_vars: usize,
    pub objective: Vec<f64>,
    pub maximize: bool,
    pub constraints: Vec<Constraint>,
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub x: Vec<f64>,
    pub objective: f64,
    /// Shadow price of each constraint in the caller's orientation.
    pub duals: Vec<f64>,
    pub iterations: usize,
}

const PIVOT_TOL: f64 = 1e-11;
const COST_TOL: f64 = 1e-12;
const FEAS_TOL: f64 = 1e-9;
const DEGENERATE_RUN: usize = 50;
const MAX_ITER: usize = 50_000;

struct Tableau {
    rows: Vec<Vec<f64>>,
    rhs: Vec<f64>,
    basis: Vec<usize>,
    cost: Vec<f64>,
    value: f64,
    iterations: usize,
}

impl Tableau {
    fn pivot(&mut self, r: usize, c: usize) {
        let p = self.rows[r][c];
        for v in self.rows[r].iter_mut() {
            *v /= p;
        }
        self.rhs[r] /= p;
        let pivot_row = self.rows[r].clone();
        let pivot_rhs = self.rhs[r];
        for i in 0..self.rows.len() {
            if i == r {
                continue;
            }
            let f = self.rows[i][c];
            if f != 0.0 {
                for (v, pv) in self.rows[i].iter_mut().zip(&pivot_row) {
                    *v -= f * pv;
                }
                self.rows[i][c] = 0.0;
                self.rhs[i] -= f * pivot_rhs;
                if self.rhs[i] < 0.0 && self.rhs[i] > -FEAS_TOL {
                    self.rhs[i] = 0.0;
                }
            }
        }
        let f = self.cost[c];
        if f != 0.0 {
            for (v, pv) in self.cost.iter_mut().zip(&pivot_row) {
                *v -= f * pv;
            }
            self.cost[c] = 0.0;
            self.value -= f * pivot_rhs;
        }
        self.basis[r] = c;
        self.iterations += 1;
    }

    /// Sets the cost row to reduced costs of `c` under the current basis.
    fn price(&mut self, c: &[f64]) {
        self.cost = c.to_vec();
        self.value = 0.0;
        for (r, &b) in self.basis.iter().enumerate() {
            let cb = c[b];
            if cb != 0.0 {
                for (v, a) in self.cost.iter_mut().zip(&self.rows[r]) {
                    *v -= cb * a;
                }
                self.value -= cb * self.rhs[r];
            }
        }
    }

    /// Minimizes the current cost row over columns `< allowed`.
    fn run(&mut self, allowed: usize) -> Result<()> {
        let mut degenerate = 0usize;
        loop {
            if self.iterations > MAX_ITER {
                return Err(Error::domain("simplex iteration limit reached"));
            }
            let bland = degenerate >= DEGENERATE_RUN;
            let mut enter = None;
            let mut best = -COST_TOL;
            for j in 0..allowed {
                if self.cost[j] < best {
                    enter = Some(j);
                    if bland {
                        break;
                    }
                    best = self.cost[j];
                }
            }
            let Some(c) = enter else { return Ok(()) };
            let mut min_ratio = f64::INFINITY;
            for r in 0..self.rows.len() {
                let a = self.rows[r][c];
                if a > PIVOT_TOL {
                    min_ratio = min_ratio.min(self.rhs[r] / a);
                }
            }
            // Among near-ties prefer the largest pivot, or the lowest basic
            // index once Bland's rule is active.
            let tie = min_ratio + 1e-12 * (1.0 + min_ratio.abs());
            let mut leave: Option<(usize, f64)> = None;
            for r in 0..self.rows.len() {
                let a = self.rows[r][c];
                if a > PIVOT_TOL && self.rhs[r] / a <= tie {
                    let better = match leave {
                        None => true,
                        Some((lr, _)) if bland => self.basis[r] < self.basis[lr],
                        Some((lr, _)) => a > self.rows[lr][c],
                    };
                    if better {
                        leave = Some((r, min_ratio));
                    }
                }
            }
            let Some((r, ratio)) = leave else { return Err(Error::Unbounded) };
            if ratio <= 1e-15 {
                degenerate += 1;
            } else {
                degenerate = 0;
            }
            self.pivot(r, c);
        }
    }
}

pub fn solve(lp: &LinearProgram) -> Result<Solution> {
    let n = lp.n_vars;
    let m = lp.constraints.len();
    if lp.objective.len() != n {
        return Err(Error::config("objective length differs from variable count"));
    }

    // Normalize rows: scale to unit max coefficient and make rhs >= 0.
    let mut rows_a = Vec::with_capacity(m);
    let mut rhs = Vec::with_capacity(m);
    let mut rel = Vec::with_capacity(m);
    let mut mult = Vec::with_capacity(m);
    for con in &lp.constraints {
        if con.coeffs.len() != n {
            return Err(Error::config("constraint length differs from variable count"));
        }
        let scale = con.coeffs.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
        let mut s = if scale > 0.0 { 1.0 / scale } else { 1.0 };
        let mut r = con.relation;
        if con.rhs * s < 0.0 {
            s = -s;
            r = match r {
                Relation::Le => Relation::Ge,
                Relation::Ge => Relation::Le,
                Relation::Eq => Relation::Eq,
            };
        }
        rows_a.push(con.coeffs.iter().map(|v| v * s).collect::<Vec<_>>());
        rhs.push(con.rhs * s);
        rel.push(r);
        mult.push(s);
    }

    let n_slack = rel.iter().filter(|r| **r != Relation::Eq).count();
    let n_art = rel.iter().filter(|r| **r != Relation::Le).count();
    let width = n + n_slack + n_art;
    let art_start = n + n_slack;
    let mut rows = vec![vec![0.0; width]; m];
    let mut basis = vec![0usize; m];
    let mut id_col = vec![0usize; m];
    let (mut next_slack, mut next_art) = (n, art_start);
    for i in 0..m {
        rows[i][..n].copy_from_slice(&rows_a[i]);
        match rel[i] {
            Relation::Le => {
                rows[i][next_slack] = 1.0;
                basis[i] = next_slack;
                id_col[i] = next_slack;
                next_slack += 1;
            }
            Relation::Ge => {
                rows[i][next_slack] = -1.0;
                next_slack += 1;
                rows[i][next_art] = 1.0;
                basis[i] = next_art;
                id_col[i] = next_art;
                next_art += 1;
            }
            Relation::Eq => {
                rows[i][next_art] = 1.0;
                basis[i] = next_art;
                id_col[i] = next_art;
                next_art += 1;
            }
        }
    }
    let mut t = Tableau { rows, rhs, basis, cost: Vec::new(), value: 0.0, iterations: 0 };

    if n_art > 0 {
        let mut c1 = vec![0.0; width];
        c1[art_start..].iter_mut().for_each(|v| *v = 1.0);
        t.price(&c1);
        t.run(art_start)?;
        let infeasibility = -t.value;
        let tol = FEAS_TOL * (1.0 + t.rhs.iter().fold(0.0f64, |a, &b| a.max(b)));
        if infeasibility > tol {
            let worst = (0..m)
                .filter(|&r| t.basis[r] >= art_start)
                .max_by(|&a, &b| t.rhs[a].total_cmp(&t.rhs[b]))
                .map(|r| {
                    let art = t.basis[r];
                    let row = id_col.iter().position(|&c| c == art).unwrap_or(r);
                    lp.constraints[row].family
                })
                .unwrap_or(ConstraintFamily::Other);
            return Err(Error::Infeasible { family: worst });
        }
        // Drive zero-level artificials out of the basis where possible.
        // Rows where no such pivot exists are redundant and are dropped.
        let mut r = 0;
        while r < t.rows.len() {
            if t.basis[r] >= art_start {
                let best = (0..art_start).max_by(|&a, &b| t.rows[r][a].abs().total_cmp(&t.rows[r][b].abs()));
                match best {
                    Some(c) if t.rows[r][c].abs() > 1e-9 => t.pivot(r, c),
                    _ => {
                        t.rows.remove(r);
                        t.rhs.remove(r);
                        t.basis.remove(r);
                        continue;
                    }
                }
            }
            r += 1;
        }
    }

    let sign = if lp.maximize { -1.0 } else { 1.0 };
    let mut c2 = vec![0.0; width];
    for j in 0..n {
        c2[j] = sign * lp.objective[j];
    }
    t.price(&c2);
    t.run(art_start)?;

    let mut x = vec![0.0; n];
    for (r, &b) in t.basis.iter().enumerate() {
        if b < n {
            x[b] = t.rhs[r];
        }
    }
    verify(lp, &x)?;
    let objective = lp.objective.iter().zip(&x).map(|(c, v)| c * v).sum();
    let duals = (0..m).map(|i| sign * -t.cost[id_col[i]] * mult[i]).collect();
    Ok(Solution { x, objective, duals, iterations: t.iterations })
}

/// Rejects a point that breaks a constraint by more than the feasibility
/// tolerance, which only happens when the tableau has lost precision.
fn verify(lp: &LinearProgram, x: &[f64]) -> Result<()> {
    if let Some(v) = x.iter().find(|v| **v < -1e-7) {
        return Err(Error::domain(format!("simplex lost precision: variable at {v}")));
    }
    for (i, con) in lp.constraints.iter().enumerate() {
        let lhs: f64 = con.coeffs.iter().zip(x).map(|(a, v)| a * v).sum();
        let scale = 1.0 + con.rhs.abs() + con.coeffs.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
        let slack = match con.relation {
            Relation::Le => con.rhs - lhs,
            Relation::Ge => lhs - con.rhs,
            Relation::Eq => -(lhs - con.rhs).abs(),
        };
        if slack < -1e-7 * scale {
            return Err(Error::domain(format!("simplex lost precision: constraint {i} violated by {}", -slack)));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn con(coeffs: &[f64], relation: Relation, rhs: f64) -> Constraint {
        Constraint { coeffs: coeffs.to_vec(), relation, rhs, family: ConstraintFamily::Other }
    }

    #[test]
    fn textbook_maximum() {
        // max 3x + 5y, x <= 4, 2y <= 12, 3x + 2y <= 18 -> (2, 6), 36
        let lp = LinearProgram {
            n_vars: 2,
            objective: vec![3.0, 5.0],
            maximize: true,
            constraints: vec![
                con(&[1.0, 0.0], Relation::Le, 4.0),
                con(&[0.0, 2.0], Relation::Le, 12.0),
                con(&[3.0, 2.0], Relation::Le, 18.0),
            ],
        };
        let s = solve(&lp).unwrap();
        assert!((s.objective - 36.0).abs() < 1e-9);
        assert!((s.x[0] - 2.0).abs() < 1e-9 && (s.x[1] - 6.0).abs() < 1e-9);
        // known shadow prices (0, 1.5, 1)
        assert!(s.duals[0].abs() < 1e-9);
        assert!((s.duals[1] - 1.5).abs() < 1e-9);
        assert!((s.duals[2] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn minimum_with_ge_and_eq() {
        // min x + y, x + 2y >= 4, x - y = 1 -> x = 2, y = 1
        let lp = LinearProgram {
            n_vars: 2,
            objective: vec![1.0, 1.0],
            maximize: false,
            constraints: vec![con(&[1.0, 2.0], Relation::Ge, 4.0), con(&[1.0, -1.0], Relation::Eq, 1.0)],
        };
        let s = solve(&lp).unwrap();
        assert!((s.objective - 3.0).abs() < 1e-9, "{}", s.objective);
    }

    #[test]
    fn negative_rhs_rows() {
        // min x, -x <= -3 -> x = 3
        let lp = LinearProgram {
            n_vars: 1,
            objective: vec![1.0],
            maximize: false,
            constraints: vec![con(&[-1.0], Relation::Le, -3.0)],
        };
        assert!((solve(&lp).unwrap().objective - 3.0).abs() < 1e-12);
    }

    #[test]
    fn infeasible_reports_family() {
        let lp = LinearProgram {
            n_vars: 1,
            objective: vec![1.0],
            maximize: true,
            constraints: vec![
                Constraint { coeffs: vec![1.0], relation: Relation::Le, rhs: 1.0, family: ConstraintFamily::Box },
                Constraint { coeffs: vec![1.0], relation: Relation::Ge, rhs: 2.0, family: ConstraintFamily::GainLower },
            ],
        };
        match solve(&lp) {
            Err(Error::Infeasible { family }) => assert_eq!(family, ConstraintFamily::GainLower),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unbounded_detected() {
        let lp = LinearProgram {
            n_vars: 2,
            objective: vec![1.0, 0.0],
            maximize: true,
            constraints: vec![con(&[0.0, 1.0], Relation::Le, 1.0)],
        };
        assert!(matches!(solve(&lp), Err(Error::Unbounded)));
    }

    #[test]
    fn degenerate_problem_terminates() {
        // Beale's cycling example
        let lp = LinearProgram {
            n_vars: 4,
            objective: vec![0.75, -150.0, 0.02, -6.0],
            maximize: true,
            constraints: vec![
                con(&[0.25, -60.0, -0.04, 9.0], Relation::Le, 0.0),
                con(&[0.5, -90.0, -0.02, 3.0], Relation::Le, 0.0),
                con(&[0.0, 0.0, 1.0, 0.0], Relation::Le, 1.0),
            ],
        };
        let s = solve(&lp).unwrap();
        assert!((s.objective - 0.05).abs() < 1e-9, "{}", s.objective);
    }
}
