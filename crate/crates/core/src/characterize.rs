//! Pattern-group transmission and click counting, click rates and per-label
//! fluctuation statistics.
//!
//! A label string of length `n` is transmitted `r` times back to back. Global
//! pulse `t` belongs to cycle `t / n` at slot `t % n`; the window ending at `t`
//! is the pattern of pulses `t-k+1 ..= t`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{num_groups, PatternKey};
use crate::sim::DetectionEvent;

/// Default transmission count below which a group is reported as low-confidence.
pub const LOW_CONFIDENCE_T: f64 = 1e4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CountMode {
    /// Windows crossing a repetition seam are counted `r - 1` times.
    Exact,
    /// `G` is taken on the circular string and `T = G * r`.
    Circular,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupCounters {
    pub p: usize,
    pub k: usize,
    pub mode: CountMode,
    pub repetitions: u64,
    /// Per-string occurrences. Exact mode: windows inside one copy only.
    /// Circular mode: windows of the circular string.
    pub g: Vec<u64>,
    /// Seam windows per string (exact mode; zero in circular mode).
    pub g_seam: Vec<u64>,
    pub t: Vec<u64>,
    pub c: Vec<u64>,
    /// Clicks on the first `k-1` pulses of the whole stream.
    pub discarded_clicks: u64,
}

impl GroupCounters {
    pub fn empty(p: usize, k: usize, mode: CountMode, repetitions: u64) -> Result<Self> {
        let n = num_groups(p, k)?;
        Ok(GroupCounters {
            p,
            k,
            mode,
            repetitions,
            g: vec![0; n],
            g_seam: vec![0; n],
            t: vec![0; n],
            c: vec![0; n],
            discarded_clicks: 0,
        })
    }

    pub fn num_groups(&self) -> usize {
        self.t.len()
    }

    /// Element-wise sum of click counters from disjoint cycle ranges. The
    /// transmission side must describe the same string and repetitions.
    pub fn merge_clicks(&mut self, other: &GroupCounters) -> Result<()> {
        if self.p != other.p || self.k != other.k || self.t != other.t {
            return Err(Error::data("cannot merge counters over different transmissions"));
        }
        for (a, b) in self.c.iter_mut().zip(&other.c) {
            *a += b;
        }
        self.discarded_clicks += other.discarded_clicks;
        Ok(())
    }

    pub fn total_clicks(&self) -> u64 {
        self.c.iter().sum()
    }
}

/// Rolling radix-`p` window index over a label stream.
#[derive(Debug, Clone, Copy)]
struct Window {
    p: usize,
    modulus: usize,
    index: usize,
}

impl Window {
    fn new(p: usize, k: usize) -> Result<Self> {
        Ok(Window { p, modulus: num_groups(p, k)?, index: 0 })
    }

    #[inline]
    fn push(&mut self, label: usize) -> usize {
        self.index = (self.index * self.p + label) % self.modulus;
        self.index
    }
}

fn check_labels(seq: &[usize], p: usize) -> Result<()> {
    match seq.iter().position(|&l| l >= p) {
        Some(pos) => Err(Error::data(format!("label {} at position {pos} outside [0, {p})", seq[pos]))),
        None => Ok(()),
    }
}

/// Fills `G` and `T` for `r` back-to-back copies of `seq`.
pub fn count_transmissions(seq: &[usize], p: usize, k: usize, r: u64, mode: CountMode) -> Result<GroupCounters> {
    if k < 1 {
        return Err(Error::domain("k must be >= 1"));
    }
    if seq.len() < k {
        return Err(Error::domain(format!("sequence length {} shorter than k = {k}", seq.len())));
    }
    if r < 1 {
        return Err(Error::domain("repetitions must be >= 1"));
    }
    check_labels(seq, p)?;
    let mut counters = GroupCounters::empty(p, k, mode, r)?;
    let n = seq.len();

    // Seed the window with the last k-1 labels so the first k-1 windows are
    // the seam windows; afterwards every window lies inside one copy.
    let mut w = Window::new(p, k)?;
    for &l in &seq[n - (k - 1)..] {
        w.push(l);
    }
    for (pos, &l) in seq.iter().enumerate() {
        let idx = w.push(l);
        if pos + 1 < k {
            counters.g_seam[idx] += 1;
        } else {
            counters.g[idx] += 1;
        }
    }

    match mode {
        CountMode::Exact => {
            for i in 0..counters.num_groups() {
                counters.t[i] = counters.g[i] * r + counters.g_seam[i] * (r - 1);
            }
        }
        CountMode::Circular => {
            for i in 0..counters.num_groups() {
                counters.g[i] += counters.g_seam[i];
                counters.g_seam[i] = 0;
                counters.t[i] = counters.g[i] * r;
            }
        }
    }
    Ok(counters)
}

/// Pattern index of the window ending at global pulse `t` (requires `t >= k-1`).
#[inline]
fn pattern_ending_at(seq: &[usize], p: usize, k: usize, t: u64) -> usize {
    let n = seq.len() as u64;
    let mut idx = 0usize;
    for back in (0..k as u64).rev() {
        idx = idx * p + seq[((t - back) % n) as usize];
    }
    idx
}

/// Streaming click collector; push events in any order, then [`finish`].
///
/// [`finish`]: ClickAccumulator::finish
#[derive(Debug, Clone)]
pub struct ClickAccumulator<'a> {
    seq: &'a [usize],
    counters: GroupCounters,
}

impl<'a> ClickAccumulator<'a> {
    pub fn new(seq: &'a [usize], transmissions: GroupCounters) -> Result<Self> {
        if seq.len() < transmissions.k {
            return Err(Error::domain("sequence shorter than k"));
        }
        check_labels(seq, transmissions.p)?;
        let mut counters = transmissions;
        counters.c.iter_mut().for_each(|c| *c = 0);
        counters.discarded_clicks = 0;
        Ok(ClickAccumulator { seq, counters })
    }

    /// Records one click. `line` is only used in error messages.
    pub fn push(&mut self, cycle: u64, slot: u64, line: Option<usize>) -> Result<()> {
        let n = self.seq.len() as u64;
        let err = |msg: String| match line {
            Some(l) => Error::data_at(l, msg),
            None => Error::data(msg),
        };
        if slot >= n {
            return Err(err(format!("slot {slot} outside string of length {n}")));
        }
        if cycle >= self.counters.repetitions {
            return Err(err(format!("cycle {cycle} outside {} repetitions", self.counters.repetitions)));
        }
        let t = cycle * n + slot;
        if t + 1 < self.counters.k as u64 {
            self.counters.discarded_clicks += 1;
            return Ok(());
        }
        let idx = pattern_ending_at(self.seq, self.counters.p, self.counters.k, t);
        self.counters.c[idx] += 1;
        Ok(())
    }

    pub fn finish(self) -> GroupCounters {
        self.counters
    }
}

/// Fills `C` from a click list. Large inputs are split across threads and the
/// private counters merged; the result does not depend on the split.
pub fn collect_clicks(seq: &[usize], events: &[DetectionEvent], transmissions: &GroupCounters) -> Result<GroupCounters> {
    const CHUNK: usize = 1 << 16;
    let parts: Vec<Result<GroupCounters>> = events
        .par_chunks(CHUNK)
        .enumerate()
        .map(|(ci, chunk)| {
            let mut acc = ClickAccumulator::new(seq, transmissions.clone())?;
            for (j, e) in chunk.iter().enumerate() {
                acc.push(e.cycle, e.slot as u64, None).map_err(|err| match err {
                    Error::Data { msg, .. } => Error::data(format!("event {}: {msg}", ci * CHUNK + j)),
                    other => other,
                })?;
            }
            Ok(acc.finish())
        })
        .collect();
    let mut out = ClickAccumulator::new(seq, transmissions.clone())?.finish();
    for part in parts {
        out.merge_clicks(&part?)?;
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateTable {
    pub p: usize,
    pub k: usize,
    pub t: Vec<f64>,
    pub c: Vec<f64>,
    /// `None` where `T = 0`.
    pub r: Vec<Option<f64>>,
}

impl RateTable {
    /// Builds a table from raw counts; `C > T` is rejected.
    pub fn from_counts(p: usize, k: usize, t: Vec<f64>, c: Vec<f64>) -> Result<Self> {
        let n = num_groups(p, k)?;
        if t.len() != n || c.len() != n {
            return Err(Error::data(format!("expected {n} groups, got T {} / C {}", t.len(), c.len())));
        }
        let mut r = Vec::with_capacity(n);
        for i in 0..n {
            if !(t[i] >= 0.0 && c[i] >= 0.0) {
                return Err(Error::data(format!("group {i}: negative count")));
            }
            if c[i] > t[i] {
                return Err(Error::data(format!("group {i}: C = {} exceeds T = {}", c[i], t[i])));
            }
            r.push(if t[i] > 0.0 { Some(c[i] / t[i]) } else { None });
        }
        Ok(RateTable { p, k, t, c, r })
    }

    pub fn key(&self, index: usize) -> PatternKey {
        PatternKey { index, p: self.p, k: self.k }
    }

    /// Group indices whose current pulse carries `label`, in index order.
    pub fn groups_with_current(&self, label: usize) -> impl Iterator<Item = usize> + '_ {
        (label..self.t.len()).step_by(self.p)
    }

    pub fn low_confidence(&self, threshold: f64) -> Vec<bool> {
        self.t.iter().map(|&t| t < threshold).collect()
    }
}

pub fn click_rates(counters: &GroupCounters) -> Result<RateTable> {
    RateTable::from_counts(
        counters.p,
        counters.k,
        counters.t.iter().map(|&x| x as f64).collect(),
        counters.c.iter().map(|&x| x as f64).collect(),
    )
}

/// Binomial standard error `sqrt(R (1 - R) / T)` per group.
pub fn error_bars(rates: &RateTable) -> Vec<Option<f64>> {
    rates
        .r
        .iter()
        .zip(&rates.t)
        .map(|(r, &t)| r.map(|r| (r * (1.0 - r) / t).sqrt()))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelFluctuation {
    pub label: usize,
    /// False when no group with this current label has `T > 0`.
    pub present: bool,
    pub max_rate: f64,
    pub min_rate: f64,
    pub mean_rate: f64,
    pub abs_discrepancy: f64,
    pub rel_fluctuation: f64,
    pub argmax: Option<usize>,
    pub argmin: Option<usize>,
}

/// Max, min, mean, discrepancy and relative fluctuation per current label.
/// The mean is unweighted over present groups unless `weighted` is set, in
/// which case it is `sum C / sum T`.
pub fn fluctuation_stats(rates: &RateTable, weighted: bool) -> Vec<LabelFluctuation> {
    (0..rates.p)
        .map(|label| {
            let present: Vec<(usize, f64)> = rates
                .groups_with_current(label)
                .filter_map(|i| rates.r[i].map(|r| (i, r)))
                .collect();
            if present.is_empty() {
                return LabelFluctuation {
                    label,
                    present: false,
                    max_rate: 0.0,
                    min_rate: 0.0,
                    mean_rate: 0.0,
                    abs_discrepancy: 0.0,
                    rel_fluctuation: 0.0,
                    argmax: None,
                    argmin: None,
                };
            }
            let (argmax, max_rate) = present.iter().copied().fold((usize::MAX, f64::NEG_INFINITY), |a, b| {
                if b.1 > a.1 {
                    b
                } else {
                    a
                }
            });
            let (argmin, min_rate) = present.iter().copied().fold((usize::MAX, f64::INFINITY), |a, b| {
                if b.1 < a.1 {
                    b
                } else {
                    a
                }
            });
            let mean_rate = if weighted {
                let c: f64 = present.iter().map(|&(i, _)| rates.c[i]).sum();
                let t: f64 = present.iter().map(|&(i, _)| rates.t[i]).sum();
                c / t
            } else {
                present.iter().map(|&(_, r)| r).sum::<f64>() / present.len() as f64
            };
            let abs_discrepancy = max_rate - min_rate;
            let rel_fluctuation = if mean_rate > 0.0 { abs_discrepancy / mean_rate } else { 0.0 };
            LabelFluctuation {
                label,
                present: true,
                max_rate,
                min_rate,
                mean_rate,
                abs_discrepancy,
                rel_fluctuation,
                argmax: Some(argmax),
                argmin: Some(argmin),
            }
        })
        .collect()
}

/// Straightforward two-pass counting over the fully expanded pulse stream.
/// Used as a reference for the streaming implementation.
pub fn naive_counts(seq: &[usize], p: usize, k: usize, r: u64, events: &[DetectionEvent]) -> Result<(Vec<u64>, Vec<u64>)> {
    let n = num_groups(p, k)?;
    let stream: Vec<usize> = (0..r).flat_map(|_| seq.iter().copied()).collect();
    let mut t = vec![0u64; n];
    let mut c = vec![0u64; n];
    let index_at = |end: usize| stream[end + 1 - k..=end].iter().fold(0usize, |acc, &l| acc * p + l);
    for end in k - 1..stream.len() {
        t[index_at(end)] += 1;
    }
    for e in events {
        let g = e.cycle as usize * seq.len() + e.slot as usize;
        if g + 1 >= k {
            c[index_at(g)] += 1;
        }
    }
    Ok((t, c))
}

#[cfg(test)]
mod tests {
    use super::*;

    // V = 0, D1 = 1, D2 = 2, S = 3
    const TOY: [usize; 7] = [1, 0, 2, 3, 1, 3, 1];

    #[test]
    fn toy_sequence_counts() {
        let c = count_transmissions(&TOY, 4, 2, 1, CountMode::Exact).unwrap();
        assert_eq!(c.g[3 * 4 + 1], 2); // S-D1
        assert_eq!(c.g.iter().sum::<u64>(), 6);
        assert_eq!(c.t, c.g);
    }

    #[test]
    fn constant_sequence() {
        let seq = vec![2usize; 50];
        let c = count_transmissions(&seq, 4, 2, 1, CountMode::Exact).unwrap();
        assert_eq!(c.g[2 * 4 + 2], 49);
        assert_eq!(c.g.iter().sum::<u64>(), 49);
        assert!(count_transmissions(&seq[..1], 4, 2, 1, CountMode::Exact).is_err());
    }

    #[test]
    fn seam_accounting() {
        let r = 5;
        let exact = count_transmissions(&TOY, 4, 2, r, CountMode::Exact).unwrap();
        let compat = count_transmissions(&TOY, 4, 2, r, CountMode::Circular).unwrap();
        assert_eq!(exact.t.iter().sum::<u64>(), 7 * r - 1);
        assert_eq!(compat.t.iter().sum::<u64>(), 7 * r);
        // the only seam window is D1 -> D1
        assert_eq!(exact.g_seam[1 * 4 + 1], 1);
        assert_eq!(compat.t[1 * 4 + 1], exact.t[1 * 4 + 1] + 1);
        for i in 0..16 {
            assert_eq!(compat.t[i], compat.g[i] * r);
        }
    }

    #[test]
    fn toy_clicks_on_every_pulse() {
        let tx = count_transmissions(&TOY[..5], 4, 2, 1, CountMode::Exact).unwrap();
        let events: Vec<_> = (0..5).map(|s| DetectionEvent::new(0, s, 0)).collect();
        let out = collect_clicks(&TOY[..5], &events, &tx).unwrap();
        assert_eq!(out.discarded_clicks, 1);
        for (a, b) in [(1, 0), (0, 2), (2, 3), (3, 1)] {
            assert_eq!(out.c[a * 4 + b], 1);
        }
        assert_eq!(out.total_clicks(), 4);
    }

    #[test]
    fn zero_clicks_and_out_of_range() {
        let tx = count_transmissions(&TOY, 4, 2, 2, CountMode::Exact).unwrap();
        let out = collect_clicks(&TOY, &[], &tx).unwrap();
        assert!(out.c.iter().all(|&c| c == 0));
        assert!(collect_clicks(&TOY, &[DetectionEvent::new(0, 7, 0)], &tx).is_err());
        let err = collect_clicks(&TOY, &[DetectionEvent::new(2, 0, 0)], &tx).unwrap_err();
        assert!(matches!(err, Error::Data { .. }));
    }

    #[test]
    fn click_rates_examples() {
        let table = RateTable::from_counts(2, 1, vec![4.5495e10, 2.325e9], vec![9_101_922.0, 448_412.0]).unwrap();
        assert!((table.r[0].unwrap() - 2.0006e-4).abs() < 1e-8);
        assert!((table.r[1].unwrap() - 1.9286e-4).abs() < 1e-8);
        let zero = RateTable::from_counts(2, 1, vec![10.0, 0.0], vec![0.0, 0.0]).unwrap();
        assert_eq!(zero.r, vec![Some(0.0), None]);
        assert!(RateTable::from_counts(2, 1, vec![1.0, 1.0], vec![2.0, 0.0]).is_err());
    }

    #[test]
    fn error_bar_examples() {
        let t = RateTable::from_counts(2, 1, vec![100.0, 50.0], vec![50.0, 0.0]).unwrap();
        let se = error_bars(&t);
        assert!((se[0].unwrap() - 0.05).abs() < 1e-15);
        assert_eq!(se[1], Some(0.0));
        let ss = RateTable::from_counts(2, 1, vec![4.5495e10, 1.0], vec![9_101_922.0, 0.0]).unwrap();
        let r: f64 = 9_101_922.0 / 4.5495e10;
        let oracle = (r * (1.0 - r) / 4.5495e10).sqrt();
        assert!((error_bars(&ss)[0].unwrap() - oracle).abs() < 1e-15);
        assert!((oracle - 6.6e-8).abs() < 0.05e-8);
    }

    #[test]
    fn equal_rates_have_no_fluctuation() {
        let t = vec![1000.0; 16];
        let c = vec![20.0; 16];
        let table = RateTable::from_counts(4, 2, t, c).unwrap();
        for f in fluctuation_stats(&table, false) {
            assert!(f.present);
            assert_eq!(f.abs_discrepancy, 0.0);
            assert_eq!(f.rel_fluctuation, 0.0);
        }
    }

    #[test]
    fn absent_label_flagged() {
        let mut t = vec![1000.0; 4];
        t[1] = 0.0;
        t[3] = 0.0;
        let c = vec![5.0, 0.0, 7.0, 0.0];
        let table = RateTable::from_counts(2, 2, t, c).unwrap();
        let stats = fluctuation_stats(&table, true);
        assert!(stats[0].present);
        assert!(!stats[1].present);
        assert_eq!(stats[0].argmax, Some(2));
        assert!((stats[0].mean_rate - 0.006).abs() < 1e-15);
    }

    #[test]
    fn streaming_matches_naive() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        for &(p, k) in &[(4usize, 1usize), (4, 2), (3, 3), (2, 5)] {
            let seq: Vec<usize> = (0..500).map(|_| rng.random_range(0..p)).collect();
            let r = 20;
            let events: Vec<DetectionEvent> = (0..r)
                .flat_map(|cy| (0..500u32).map(move |s| (cy, s)))
                .filter(|_| rng.random::<f64>() < 0.1)
                .map(|(cy, s)| DetectionEvent::new(cy, s, 0))
                .collect();
            let tx = count_transmissions(&seq, p, k, r, CountMode::Exact).unwrap();
            let out = collect_clicks(&seq, &events, &tx).unwrap();
            let (t, c) = naive_counts(&seq, p, k, r, &events).unwrap();
            assert_eq!(out.t, t);
            assert_eq!(out.c, c);
        }
    }
}
