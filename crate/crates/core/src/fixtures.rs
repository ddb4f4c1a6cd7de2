//! Reference data sets: the reference BB84 signal-column counts, a full
//! 16-group BB84 table built around them, the MDI transmission and
//! coincidence tables, a pair of MDI strings that reproduce the transmission
//! table, and the block construction used to estimate `delta_max`.
//!
//! Text fixtures are compiled in. Setting `CORRKIT_FIXTURES` to a directory
//! makes [`fixture_text`] read files from there instead.

use std::path::PathBuf;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::characterize::{fluctuation_stats, RateTable};
use crate::crosscycle::{parse_table_fixture, MdiSymbol, MDI_LABELS};
use crate::error::{Error, Result};
use crate::io::read_count_table;
use crate::photon::{click_probability, invert_click_rate, AfterPulseModel};
use crate::security::{delta_max, fit_group_gaussians, label_bounds, DeviationBound};

pub const ENV_DIR: &str = "CORRKIT_FIXTURES";

pub const BB84_S_COLUMN: &str = "bb84_s_column.csv";
pub const BB84_FULL: &str = "bb84_full.csv";
pub const MDI_TABLES: &str = "mdi_tables.csv";
pub const MDI_ALICE: &str = "mdi_alice.txt";
pub const MDI_BOB: &str = "mdi_bob.txt";
pub const TOY_SEQUENCE: &str = "toy_sequence.txt";

const EMBEDDED: &[(&str, &str)] = &[
    (BB84_S_COLUMN, include_str!("../fixtures/bb84_s_column.csv")),
    (BB84_FULL, include_str!("../fixtures/bb84_full.csv")),
    (MDI_TABLES, include_str!("../fixtures/mdi_tables.csv")),
    (MDI_ALICE, include_str!("../fixtures/mdi_alice.txt")),
    (MDI_BOB, include_str!("../fixtures/mdi_bob.txt")),
    (TOY_SEQUENCE, include_str!("../fixtures/toy_sequence.txt")),
];

pub fn fixture_text(name: &str) -> Result<String> {
    if let Some(dir) = std::env::var_os(ENV_DIR) {
        let path = PathBuf::from(dir).join(name);
        return std::fs::read_to_string(&path)
            .map_err(|e| Error::Config(format!("fixture {}: {e}", path.display())));
    }
    EMBEDDED
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, t)| t.to_string())
        .ok_or_else(|| Error::Config(format!("unknown fixture '{name}'")))
}

// BB84 source

pub const BB84_NAMES: [&str; 4] = ["V", "D1", "D2", "S"];
pub const BB84_INTENSITIES: [f64; 4] = [0.001, 0.03, 0.09, 0.23];
pub const BB84_REPETITIONS: f64 = 1.5e7;
pub const BB84_SEQUENCE_LEN: usize = 10_000;
pub const BB84_AFTERPULSE_Q: f64 = 0.022;
pub const BB84_DEAD_GATES: u32 = 5;
pub const BB84_MEAN_D1: f64 = 2.3e-5;
pub const BB84_MEAN_D2: f64 = 7.8e-5;
/// Relative spread (max - min) / mean of the D1 and D2 columns.
pub const BB84_DECOY_SPREAD: f64 = 0.04;
/// Relative rate offsets of the V column, ordered by predecessor V..S.
pub const BB84_VACUUM_RAMP: [f64; 4] = [-0.06, -0.02, 0.02, 0.06];
/// Number of blocks used to estimate `delta_max`.
pub const DEFAULT_BLOCKS: usize = 20;

pub fn bb84_names() -> Vec<String> {
    BB84_NAMES.iter().map(|s| s.to_string()).collect()
}

pub fn bb84_afterpulse() -> AfterPulseModel {
    AfterPulseModel { q: BB84_AFTERPULSE_Q, tau: BB84_DEAD_GATES }
}

/// The reference signal column: `(G, T, C)` for V-S, D1-S, D2-S and S-S.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalColumn {
    pub g: [f64; 4],
    pub t: [f64; 4],
    pub c: [f64; 4],
}

pub fn bb84_signal_column() -> Result<SignalColumn> {
    let names = bb84_names();
    let table = read_count_table(fixture_text(BB84_S_COLUMN)?.as_bytes(), &names, 2)?;
    let mut col = SignalColumn { g: [0.0; 4], t: [0.0; 4], c: [0.0; 4] };
    for prev in 0..4 {
        let i = prev * 4 + 3;
        col.g[prev] = table.g[i].ok_or_else(|| Error::data("signal column fixture lacks G"))?;
        col.t[prev] = table.t[i];
        col.c[prev] = table.c[i];
    }
    Ok(col)
}

/// Rate table holding only the signal column; other groups are absent.
pub fn bb84_signal_rates() -> Result<RateTable> {
    let col = bb84_signal_column()?;
    let mut t = vec![0.0; 16];
    let mut c = vec![0.0; 16];
    for prev in 0..4 {
        t[prev * 4 + 3] = col.t[prev];
        c[prev * 4 + 3] = col.c[prev];
    }
    RateTable::from_counts(4, 2, t, c)
}

/// Detection efficiency implied by the unweighted mean signal rate at the
/// nominal signal intensity, after the after-pulse correction.
pub fn bb84_implied_eta() -> Result<f64> {
    let col = bb84_signal_column()?;
    let mean = (0..4).map(|i| col.c[i] / col.t[i]).sum::<f64>() / 4.0;
    Ok(invert_click_rate(mean, 1.0, bb84_afterpulse())? / BB84_INTENSITIES[3])
}

/// Observed rate of the vacuum-decoy label at the implied efficiency.
pub fn bb84_vacuum_rate() -> Result<f64> {
    let eta = bb84_implied_eta()?;
    Ok((1.0 + BB84_AFTERPULSE_Q) * click_probability(eta, BB84_INTENSITIES[0])?)
}

/// Full 16-group table.
///
/// The signal column is the reference one. The other columns are built
/// from it: per-sequence group counts follow the predecessor shares of the
/// signal column, the D1/D2 rates reuse its relative profile rescaled to a
/// 4% spread around their reference means, and the V column follows a
/// +/-6% ramp around the rate implied by the nominal vacuum intensity.
/// Returns the table and the per-sequence `G`.
pub fn bb84_reconstruct() -> Result<(RateTable, Vec<u64>)> {
    let col = bb84_signal_column()?;
    let total_s: f64 = col.g.iter().sum();
    let share: Vec<f64> = col.g.iter().map(|g| g / total_s).collect();
    let s_rates: Vec<f64> = (0..4).map(|i| col.c[i] / col.t[i]).collect();
    let s_mean = s_rates.iter().sum::<f64>() / 4.0;
    let profile: Vec<f64> = s_rates.iter().map(|r| r / s_mean - 1.0).collect();
    let spread = profile.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        - profile.iter().cloned().fold(f64::INFINITY, f64::min);
    let decoy_profile: Vec<f64> = profile.iter().map(|d| d * BB84_DECOY_SPREAD / spread).collect();
    let means = [bb84_vacuum_rate()?, BB84_MEAN_D1, BB84_MEAN_D2];

    let windows = (BB84_SEQUENCE_LEN - 1) as f64;
    let mut g = vec![0u64; 16];
    let mut t = vec![0.0; 16];
    let mut c = vec![0.0; 16];
    for cur in 0..4 {
        for prev in 0..4 {
            let i = prev * 4 + cur;
            if cur == 3 {
                g[i] = col.g[prev] as u64;
                t[i] = col.t[prev];
                c[i] = col.c[prev];
                continue;
            }
            let column_total = (windows * share[cur]).round();
            g[i] = (column_total * share[prev]).round() as u64;
            t[i] = g[i] as f64 * BB84_REPETITIONS;
            let offset = if cur == 0 { BB84_VACUUM_RAMP[prev] } else { decoy_profile[prev] };
            c[i] = (means[cur] * (1.0 + offset) * t[i]).round();
        }
    }
    Ok((RateTable::from_counts(4, 2, t, c)?, g))
}

/// Splits every group into `blocks` equal chunks of the repetitions. Block
/// transmissions are `T / B`; block clicks are `C / B + sqrt(C / B) z_b`,
/// where `z_b` is a linear ramp over the blocks scaled to unit sample
/// standard deviation, so each group's block-to-block spread equals the
/// expected counting noise.
pub fn split_into_blocks(table: &RateTable, blocks: usize) -> Result<Vec<RateTable>> {
    if blocks < 2 {
        return Err(Error::domain("need at least 2 blocks"));
    }
    let b = blocks as f64;
    let sd = (b * (b + 1.0) / 12.0).sqrt();
    let centre = (b - 1.0) / 2.0;
    (0..blocks)
        .map(|j| {
            let z = (j as f64 - centre) / sd;
            let t: Vec<f64> = table.t.iter().map(|t| t / b).collect();
            let c = table
                .c
                .iter()
                .enumerate()
                .map(|(i, &c)| {
                    let mean = c / b;
                    let v = mean + mean.sqrt() * z;
                    if v < 0.0 {
                        Err(Error::domain(format!("group {i}: too few clicks ({c}) for {blocks} blocks")))
                    } else {
                        Ok(v)
                    }
                })
                .collect::<Result<Vec<f64>>>()?;
            RateTable::from_counts(table.p, table.k, t, c)
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct DeltaReport {
    pub blocks: usize,
    pub eta: f64,
    pub delta_max: f64,
    /// Bound that attains `delta_max`.
    pub worst: DeviationBound,
    pub bounds: Vec<DeviationBound>,
}

/// Block split, per-group Gaussian fits, label-wise deviation bounds.
pub fn delta_pipeline(table: &RateTable, blocks: usize, eta: f64, ap: AfterPulseModel) -> Result<DeltaReport> {
    let parts = split_into_blocks(table, blocks)?;
    let fits = fit_group_gaussians(&parts, eta, ap)?;
    let bounds = label_bounds(&fits, table.p)?;
    let d = delta_max(&bounds)?;
    let worst = *bounds.iter().find(|b| b.delta == d).expect("max is attained");
    Ok(DeltaReport { blocks, eta, delta_max: d, worst, bounds })
}

/// `delta_max` of the full BB84 table for each block count.
pub fn bb84_delta_sensitivity(block_counts: &[usize]) -> Result<Vec<(usize, f64)>> {
    let (table, _) = bb84_reconstruct()?;
    let eta = bb84_implied_eta()?;
    block_counts
        .iter()
        .map(|&b| Ok((b, delta_pipeline(&table, b, eta, bb84_afterpulse())?.delta_max)))
        .collect()
}

// MDI source

pub const MDI_STRING_LEN: usize = 8192;
pub const MDI_BLOCK_CYCLES: u64 = 160_000;
pub const MDI_TOTAL_CYCLES: u64 = 1_600_000;
/// Alice's label weights, in `MDI_LABELS` order (omega, nu, mu, s).
pub const MDI_LABEL_WEIGHTS: [u32; 4] = [1, 1, 3, 7];
pub const MDI_STRING_SEED: u64 = 0x4d44_4931;

pub fn mdi_names() -> Vec<String> {
    MDI_LABELS.iter().map(|s| s.to_string()).collect()
}

/// Transmission counts `G` and mean coincidence counts `C` per group.
pub fn mdi_tables() -> Result<(Vec<u64>, Vec<f64>)> {
    parse_table_fixture(&fixture_text(MDI_TABLES)?)
}

fn symbol_for(label: usize, pol: u8) -> u8 {
    (3 - label as u8) * 2 + pol
}

fn opposite_basis<R: Rng>(rng: &mut R, alice: u8) -> u8 {
    if alice < 2 {
        rng.random_range(2..8)
    } else {
        rng.random_range(0..2)
    }
}

fn same_basis<R: Rng>(rng: &mut R, alice: u8) -> u8 {
    if alice < 2 {
        rng.random_range(0..2)
    } else {
        rng.random_range(2..8)
    }
}

/// Alice's and Bob's strings such that, counting slots where both use the
/// same basis and keying each by Alice's (previous, current) labels, the
/// group counts equal `g`.
///
/// Each counted group becomes a two-slot unit whose first slot is
/// mismatched in basis and whose second slot is matched. The remaining
/// slots are mismatched filler with Alice's labels drawn by
/// [`MDI_LABEL_WEIGHTS`]. Units are shuffled with a seeded generator.
pub fn build_mdi_strings(g: &[u64], len: usize, seed: u64) -> Result<(Vec<u8>, Vec<u8>)> {
    if g.len() != 16 {
        return Err(Error::data("expected 16 groups"));
    }
    let needed: u64 = 2 * g.iter().sum::<u64>();
    if needed > len as u64 {
        return Err(Error::domain(format!("{needed} slots needed but string length is {len}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut units: Vec<Option<(usize, usize)>> = Vec::with_capacity(len);
    for (i, &n) in g.iter().enumerate() {
        units.extend(std::iter::repeat_n(Some((i / 4, i % 4)), n as usize));
    }
    units.extend(std::iter::repeat_n(None, len - needed as usize));
    units.shuffle(&mut rng);

    let total_weight: u32 = MDI_LABEL_WEIGHTS.iter().sum();
    let mut alice = Vec::with_capacity(len);
    let mut bob = Vec::with_capacity(len);
    for unit in units {
        match unit {
            Some((prev, cur)) => {
                let a0 = symbol_for(prev, rng.random_range(0..2));
                let a1 = symbol_for(cur, rng.random_range(0..2));
                alice.extend([a0, a1]);
                let b0 = opposite_basis(&mut rng, a0);
                let b1 = same_basis(&mut rng, a1);
                bob.extend([b0, b1]);
            }
            None => {
                let mut x = rng.random_range(0..total_weight);
                let mut label = 0;
                while x >= MDI_LABEL_WEIGHTS[label] {
                    x -= MDI_LABEL_WEIGHTS[label];
                    label += 1;
                }
                let a = symbol_for(label, rng.random_range(0..2));
                alice.push(a);
                bob.push(opposite_basis(&mut rng, a));
            }
        }
    }
    Ok((alice, bob))
}

/// The shipped string pair.
pub fn mdi_strings() -> Result<(Vec<MdiSymbol>, Vec<MdiSymbol>)> {
    let read = |name: &str| -> Result<Vec<MdiSymbol>> {
        let values = crate::io::read_sequence(fixture_text(name)?.as_bytes())?;
        values
            .into_iter()
            .map(|v| u8::try_from(v).map_err(|_| Error::data(format!("symbol {v} out of range"))).and_then(MdiSymbol::new))
            .collect()
    };
    Ok((read(MDI_ALICE)?, read(MDI_BOB)?))
}

/// The seven-pulse example sequence used to illustrate group counting.
pub fn toy_sequence() -> Result<Vec<usize>> {
    crate::io::read_sequence(fixture_text(TOY_SEQUENCE)?.as_bytes())
}

/// Label fluctuation summary for a rate table, unweighted means.
pub fn summary(table: &RateTable) -> Vec<crate::characterize::LabelFluctuation> {
    fluctuation_stats(table, false)
}
