//! MDI click collection: same-basis slot filtering, Bell-state post-selection
//! and cross-cycle coincidence counting.
//!
//! A pattern line `PSI- D1 D2` is read with ordered roles: a coincidence is a
//! `D1` click at some valid slot in cycle `n` together with a `D2` click at the
//! same slot in a later cycle `n' > n` of the same block. Counting uses a
//! running per-(slot, detector) tally, so a block costs O(events).

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::characterize::RateTable;
use crate::error::{Error, Result};
use crate::model::num_groups;
use crate::sim::DetectionEvent;

pub const NUM_MDI_DETECTORS: usize = 4;

/// MDI label ids in table order: omega (vacuum), nu, mu, s (signal).
pub const MDI_LABELS: [&str; 4] = ["omega", "nu", "mu", "s"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Basis {
    Z,
    X,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Polarization {
    H,
    V,
    Plus,
    Minus,
}

/// One entry of an 8-symbol MDI random string: `0/1` signal in H/V, `2/3` mu,
/// `4/5` nu and `6/7` vacuum, the last three in +/-.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MdiSymbol(u8);

impl MdiSymbol {
    pub fn new(v: u8) -> Result<Self> {
        if v < 8 {
            Ok(MdiSymbol(v))
        } else {
            Err(Error::data(format!("symbol {v} outside [0, 8)")))
        }
    }

    pub fn value(self) -> u8 {
        self.0
    }

    pub fn basis(self) -> Basis {
        if self.0 < 2 {
            Basis::Z
        } else {
            Basis::X
        }
    }

    pub fn polarization(self) -> Polarization {
        match (self.basis(), self.0 % 2) {
            (Basis::Z, 0) => Polarization::H,
            (Basis::Z, _) => Polarization::V,
            (Basis::X, 0) => Polarization::Plus,
            (Basis::X, _) => Polarization::Minus,
        }
    }

    /// Label id in [`MDI_LABELS`] order.
    pub fn label(self) -> usize {
        3 - (self.0 / 2) as usize
    }
}

pub fn parse_symbols(values: &[u8]) -> Result<Vec<MdiSymbol>> {
    values
        .iter()
        .enumerate()
        .map(|(i, &v)| MdiSymbol::new(v).map_err(|_| Error::data(format!("symbol {v} at position {i} outside [0, 8)"))))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BellState {
    PsiPlus,
    PsiMinus,
}

impl fmt::Display for BellState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BellState::PsiPlus => "PSI+",
            BellState::PsiMinus => "PSI-",
        })
    }
}

/// Detector pairs accepted by post-selection. Detectors are 0-based here and
/// written `D1..D4` in files.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BsmPatternTable {
    pub patterns: Vec<(BellState, u8, u8)>,
}

impl Default for BsmPatternTable {
    fn default() -> Self {
        BsmPatternTable {
            patterns: vec![
                (BellState::PsiMinus, 0, 1),
                (BellState::PsiMinus, 2, 3),
                (BellState::PsiPlus, 0, 2),
                (BellState::PsiPlus, 1, 3),
            ],
        }
    }
}

impl BsmPatternTable {
    pub fn new(patterns: Vec<(BellState, u8, u8)>) -> Result<Self> {
        let table = BsmPatternTable { patterns };
        table.validate()?;
        Ok(table)
    }

    pub fn validate(&self) -> Result<()> {
        for (i, &(state, a, b)) in self.patterns.iter().enumerate() {
            if a as usize >= NUM_MDI_DETECTORS || b as usize >= NUM_MDI_DETECTORS {
                return Err(Error::config(format!("pattern {i}: detector outside D1..D4")));
            }
            if a == b {
                return Err(Error::config(format!("pattern {i}: a pair needs two distinct detectors")));
            }
            for &(other, c, d) in &self.patterns[..i] {
                let same_pair = (a, b) == (c, d) || (a, b) == (d, c);
                if same_pair && other != state {
                    return Err(Error::config(format!("pair D{} D{} listed under both PSI+ and PSI-", a + 1, b + 1)));
                }
                if same_pair {
                    return Err(Error::config(format!("duplicate pattern D{} D{}", a + 1, b + 1)));
                }
            }
        }
        Ok(())
    }

    /// Lines of `PSI+ Di Dj` / `PSI- Di Dj`; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut patterns = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let bad = |msg: &str| Error::Parse { line: i + 1, msg: msg.to_string() };
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 3 {
                return Err(bad("expected `PSI+|PSI- Di Dj`"));
            }
            let state = match fields[0] {
                "PSI+" => BellState::PsiPlus,
                "PSI-" => BellState::PsiMinus,
                _ => return Err(bad("Bell state must be PSI+ or PSI-")),
            };
            let det = |s: &str| -> Result<u8> {
                s.strip_prefix('D')
                    .and_then(|d| d.parse::<u8>().ok())
                    .filter(|d| (1..=NUM_MDI_DETECTORS as u8).contains(d))
                    .map(|d| d - 1)
                    .ok_or_else(|| bad("detector must be D1..D4"))
            };
            patterns.push((state, det(fields[1])?, det(fields[2])?));
        }
        BsmPatternTable::new(patterns)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    fn lookup(&self, first: u8, second: u8) -> Option<BellState> {
        self.patterns.iter().find(|p| p.1 == first && p.2 == second).map(|p| p.0)
    }
}

/// Bell class of one click set from the earlier cycle and one from the later
/// cycle at the same slot. Requires exactly one click per half.
pub fn classify_bsm(first: &[u8], second: &[u8], table: &BsmPatternTable) -> Option<BellState> {
    match (first, second) {
        ([a], [b]) if a != b => table.lookup(*a, *b),
        _ => None,
    }
}

/// Slots where both strings select the same polarization basis.
pub fn filter_same_basis(a: &[MdiSymbol], b: &[MdiSymbol]) -> Result<Vec<usize>> {
    if a.len() != b.len() {
        return Err(Error::data(format!("string lengths differ: {} vs {}", a.len(), b.len())));
    }
    Ok((0..a.len()).filter(|&i| a[i].basis() == b[i].basis()).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Target {
    Alice,
    Bob,
}

/// Pattern index of the target source's `k`-window ending at each valid slot
/// (predecessors wrap around the string), plus per-group occurrence counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotGroups {
    pub k: usize,
    pub slots: usize,
    pub valid: Vec<usize>,
    /// `group_of[slot]` for valid slots, `None` elsewhere.
    pub group_of: Vec<Option<usize>>,
    pub g: Vec<u64>,
}

pub fn slot_groups(a: &[MdiSymbol], b: &[MdiSymbol], k: usize, target: Target) -> Result<SlotGroups> {
    let valid = filter_same_basis(a, b)?;
    let s = if target == Target::Alice { a } else { b };
    let n = s.len();
    if n < k || k < 1 {
        return Err(Error::domain(format!("string length {n} shorter than k = {k}")));
    }
    let mut g = vec![0u64; num_groups(MDI_LABELS.len(), k)?];
    let mut group_of = vec![None; n];
    for &slot in &valid {
        let idx = (0..k).rev().fold(0usize, |acc, back| acc * 4 + s[(slot + n - back) % n].label());
        g[idx] += 1;
        group_of[slot] = Some(idx);
    }
    Ok(SlotGroups { k, slots: n, valid, group_of, g })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockConfig {
    pub n_b: u64,
    pub num_blocks: u64,
}

impl BlockConfig {
    pub fn new(n_b: u64, num_blocks: u64) -> Result<Self> {
        if n_b < 1 || num_blocks < 1 {
            return Err(Error::config("n_b and num_blocks must be >= 1"));
        }
        Ok(BlockConfig { n_b, num_blocks })
    }

    /// Ordered cycle pairs per block, `n_b (n_b - 1) / 2`.
    pub fn pairs(&self) -> u64 {
        self.n_b * (self.n_b - 1) / 2
    }

    pub fn total_cycles(&self) -> u64 {
        self.n_b * self.num_blocks
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossCycleCounts {
    pub block: BlockConfig,
    /// `per_block[b][group]`.
    pub per_block: Vec<Vec<u64>>,
    pub c_mean: Vec<f64>,
    /// Pairs formed inside one cycle; reported, never merged into `C`.
    pub same_cycle: Vec<u64>,
    pub by_state: BTreeMap<BellState, u64>,
    pub invalid_slot_events: u64,
    pub out_of_range_events: u64,
}

#[derive(Default)]
struct BlockTally {
    c: Vec<u64>,
    same_cycle: Vec<u64>,
    by_state: BTreeMap<BellState, u64>,
    invalid: u64,
}

fn count_block(events: &[DetectionEvent], groups: &SlotGroups, table: &BsmPatternTable, n_groups: usize) -> BlockTally {
    let mut tally = BlockTally { c: vec![0; n_groups], same_cycle: vec![0; n_groups], ..Default::default() };
    // running click count per (slot, detector) over earlier cycles of the block
    let mut seen = vec![0u64; groups.slots * NUM_MDI_DETECTORS];
    let mut i = 0;
    while i < events.len() {
        let (cycle, slot) = (events[i].cycle, events[i].slot as usize);
        let mut mask = 0u8;
        while i < events.len() && events[i].cycle == cycle && events[i].slot as usize == slot {
            let d = events[i].detector as usize;
            if d < NUM_MDI_DETECTORS {
                mask |= 1 << d;
            }
            i += 1;
        }
        let group = match groups.group_of.get(slot).copied().flatten() {
            Some(g) if mask != 0 => g,
            _ => {
                tally.invalid += mask.count_ones() as u64;
                continue;
            }
        };
        let base = slot * NUM_MDI_DETECTORS;
        for &(state, a, b) in &table.patterns {
            if mask & (1 << b) != 0 {
                let n = seen[base + a as usize];
                tally.c[group] += n;
                *tally.by_state.entry(state).or_default() += n;
                if mask & (1 << a) != 0 {
                    tally.same_cycle[group] += 1;
                }
            }
        }
        for d in 0..NUM_MDI_DETECTORS {
            if mask & (1 << d) != 0 {
                seen[base + d] += 1;
            }
        }
    }
    tally
}

/// Cross-cycle coincidences per group, per block and averaged over blocks.
/// `events` must be sorted by (cycle, slot, detector) without duplicates.
pub fn cross_cycle_coincidences(
    events: &[DetectionEvent],
    groups: &SlotGroups,
    table: &BsmPatternTable,
    block: BlockConfig,
) -> Result<CrossCycleCounts> {
    if events.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::data("events must be strictly sorted by (cycle, slot, detector)"));
    }
    table.validate()?;
    let n_groups = groups.g.len();
    let total = block.total_cycles();
    let in_range = events.partition_point(|e| e.cycle < total);
    let mut out_of_range = (events.len() - in_range) as u64;
    let events = &events[..in_range];
    out_of_range += events.iter().filter(|e| e.slot as usize >= groups.slots).count() as u64;

    let bounds: Vec<(usize, usize)> = (0..block.num_blocks)
        .map(|b| {
            let lo = events.partition_point(|e| e.cycle < b * block.n_b);
            let hi = events.partition_point(|e| e.cycle < (b + 1) * block.n_b);
            (lo, hi)
        })
        .collect();
    let tallies: Vec<BlockTally> = bounds
        .par_iter()
        .map(|&(lo, hi)| {
            let evs: Vec<DetectionEvent> =
                events[lo..hi].iter().copied().filter(|e| (e.slot as usize) < groups.slots).collect();
            count_block(&evs, groups, table, n_groups)
        })
        .collect();

    let mut c_mean = vec![0.0; n_groups];
    let mut same_cycle = vec![0u64; n_groups];
    let mut by_state = BTreeMap::new();
    let mut invalid = 0;
    for t in &tallies {
        for g in 0..n_groups {
            c_mean[g] += t.c[g] as f64;
            same_cycle[g] += t.same_cycle[g];
        }
        for (s, n) in &t.by_state {
            *by_state.entry(*s).or_default() += n;
        }
        invalid += t.invalid;
    }
    c_mean.iter_mut().for_each(|c| *c /= block.num_blocks as f64);
    Ok(CrossCycleCounts {
        block,
        per_block: tallies.into_iter().map(|t| t.c).collect(),
        c_mean,
        same_cycle,
        by_state,
        invalid_slot_events: invalid,
        out_of_range_events: out_of_range,
    })
}

/// Double loop over every cycle pair of every block. Reference only.
pub fn naive_cross_cycle(
    events: &[DetectionEvent],
    groups: &SlotGroups,
    table: &BsmPatternTable,
    block: BlockConfig,
) -> Vec<Vec<u64>> {
    let n_groups = groups.g.len();
    let mut out = vec![vec![0u64; n_groups]; block.num_blocks as usize];
    for (b, counts) in out.iter_mut().enumerate() {
        let start = b as u64 * block.n_b;
        let mut mask = vec![0u8; block.n_b as usize * groups.slots];
        for e in events {
            if e.cycle >= start && e.cycle < start + block.n_b && (e.slot as usize) < groups.slots {
                mask[(e.cycle - start) as usize * groups.slots + e.slot as usize] |= 1 << e.detector;
            }
        }
        for n in 0..block.n_b as usize {
            for m in n + 1..block.n_b as usize {
                for &slot in &groups.valid {
                    let (x, y) = (mask[n * groups.slots + slot], mask[m * groups.slots + slot]);
                    for &(_, a, d) in &table.patterns {
                        if x & (1 << a) != 0 && y & (1 << d) != 0 {
                            counts[groups.group_of[slot].unwrap()] += 1;
                        }
                    }
                }
            }
        }
    }
    out
}

/// `T = G n_b (n_b - 1) / 2` and `R = C / T`.
pub fn cross_cycle_rates(c: &[f64], g: &[u64], n_b: u64) -> Result<RateTable> {
    if n_b < 2 {
        return Err(Error::domain("n_b must be >= 2 to form cycle pairs"));
    }
    if c.len() != g.len() {
        return Err(Error::data("C and G lengths differ"));
    }
    for (i, (&ci, &gi)) in c.iter().zip(g).enumerate() {
        if gi == 0 && ci > 0.0 {
            return Err(Error::data(format!("group {i} has C = {ci} but G = 0")));
        }
    }
    let pairs = (n_b as f64) * (n_b as f64 - 1.0) / 2.0;
    let k = group_k(g.len())?;
    RateTable::from_counts(MDI_LABELS.len(), k, g.iter().map(|&x| x as f64 * pairs).collect(), c.to_vec())
}

fn group_k(n: usize) -> Result<usize> {
    let mut k = 1;
    let mut size = 4;
    while size < n {
        size *= 4;
        k += 1;
    }
    if size == n {
        Ok(k)
    } else {
        Err(Error::data(format!("{n} groups is not a power of 4")))
    }
}

/// Expected coincidences per slot per block when each side clicks
/// independently with probability `d` per cycle, summed over the categories
/// `(j, k)` of how many cycles each side clicked in.
pub fn coincidence_oracle(n_b: u64, d: f64) -> Result<f64> {
    if n_b < 1 {
        return Err(Error::domain("n_b must be >= 1"));
    }
    if !(0.0..=1.0).contains(&d) {
        return Err(Error::domain(format!("d = {d} outside [0, 1]")));
    }
    let n = n_b as usize;
    let mut pmf = vec![0.0f64; n + 1];
    let mut binom = 1.0f64;
    for (j, slot) in pmf.iter_mut().enumerate() {
        *slot = binom * d.powi(j as i32) * (1.0 - d).powi((n - j) as i32);
        binom = binom * (n - j) as f64 / (j + 1) as f64;
    }
    let mut total = 0.0;
    for (j, pj) in pmf.iter().enumerate() {
        for (k, pk) in pmf.iter().enumerate() {
            total += pj * pk * (j * k) as f64;
        }
    }
    Ok(total)
}

/// Rows of `pattern,G,C` (e.g. `omega-s,109,3.57e7`) in any order, with
/// label names from [`MDI_LABELS`]. Returns `(G, C)` indexed by group.
pub fn parse_table_fixture(text: &str) -> Result<(Vec<u64>, Vec<f64>)> {
    let names: Vec<String> = MDI_LABELS.iter().map(|s| s.to_string()).collect();
    let mut rows: Vec<(usize, usize, u64, f64)> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with("pattern") {
            continue;
        }
        let bad = |msg: String| Error::Parse { line: i + 1, msg };
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        if f.len() != 3 {
            return Err(bad("expected `pattern,G,C`".into()));
        }
        let k = f[0].split('-').count();
        let key = crate::model::PatternKey::parse(f[0], &names, k).map_err(|e| bad(e.to_string()))?;
        let g = f[1].parse::<f64>().map_err(|_| bad(format!("invalid G '{}'", f[1])))?;
        let c = f[2].parse::<f64>().map_err(|_| bad(format!("invalid C '{}'", f[2])))?;
        if g < 0.0 || g.fract() != 0.0 || c < 0.0 {
            return Err(bad("G must be a nonnegative integer and C nonnegative".into()));
        }
        rows.push((key.k, key.index, g as u64, c));
    }
    let k = rows.first().map(|r| r.0).ok_or_else(|| Error::data("empty table"))?;
    if rows.iter().any(|r| r.0 != k) {
        return Err(Error::data("mixed pattern lengths"));
    }
    let n = num_groups(4, k)?;
    let mut g = vec![0u64; n];
    let mut c = vec![0.0f64; n];
    let mut seen = vec![false; n];
    for (_, idx, gi, ci) in rows {
        if seen[idx] {
            return Err(Error::data(format!("group {idx} listed twice")));
        }
        seen[idx] = true;
        g[idx] = gi;
        c[idx] = ci;
    }
    Ok((g, c))
}
