//! Synthetic pulse sequences with injected intensity correlations, and click
//! streams for a single logical detector (prepare-and-measure) or four
//! detectors behind a Bell-state analyzer (MDI).
//!
//! Randomness is keyed per detection cycle: cycle `c` draws from the ChaCha
//! stream `c` of the master seed. Shards only partition cycles, so a run is
//! bit-identical for any shard count or execution order.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::crosscycle::{MdiSymbol, Polarization, NUM_MDI_DETECTORS};
use crate::error::{Error, Result};
use crate::model::{encode_pattern, num_groups, SourceSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct DetectionEvent {
    pub cycle: u64,
    pub slot: u32,
    pub detector: u8,
}

impl DetectionEvent {
    pub fn new(cycle: u64, slot: u32, detector: u8) -> Self {
        DetectionEvent { cycle, slot, detector }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClickStream {
    pub events: Vec<DetectionEvent>,
    pub cycles: u64,
    pub slots_per_cycle: u32,
    pub detectors: u8,
}

impl ClickStream {
    /// Checks ordering, uniqueness and bounds of the events.
    pub fn validate(&self) -> Result<()> {
        for (i, w) in self.events.windows(2).enumerate() {
            if w[0] >= w[1] {
                return Err(Error::data(format!("events {i} and {} are not strictly increasing", i + 1)));
            }
        }
        for e in &self.events {
            if e.cycle >= self.cycles || e.slot >= self.slots_per_cycle || e.detector >= self.detectors {
                return Err(Error::data(format!(
                    "event ({}, {}, {}) outside {} cycles x {} slots x {} detectors",
                    e.cycle, e.slot, e.detector, self.cycles, self.slots_per_cycle, self.detectors
                )));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SequenceMode {
    /// Each pulse label drawn independently.
    Iid,
    /// One random string generated once and transmitted repeatedly.
    FixedString,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelSequence {
    pub labels: Vec<usize>,
    pub repeated: bool,
}

pub fn generate_sequence(spec: &SourceSpec, mode: SequenceMode, length: usize, seed: u64) -> Result<LabelSequence> {
    if length < 1 {
        return Err(Error::domain("sequence length must be >= 1"));
    }
    let dist = WeightedIndex::new(&spec.ratios)
        .map_err(|e| Error::config(format!("invalid label ratios: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let labels = (0..length).map(|_| dist.sample(&mut rng)).collect();
    Ok(LabelSequence { labels, repeated: mode == SequenceMode::FixedString })
}

/// Multiplicative deviation table keyed by the full length-`k` pattern
/// (previous `k-1` labels and the current one), plus per-label relative jitter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationModel {
    pub p: usize,
    pub k: usize,
    /// Indexed by pattern index; empty when `k == 1`.
    pub epsilon: Vec<f64>,
    pub jitter_sigma: Vec<f64>,
}

impl CorrelationModel {
    pub fn uncorrelated(p: usize, k: usize) -> Result<Self> {
        let epsilon = if k > 1 { vec![0.0; num_groups(p, k)?] } else { Vec::new() };
        Ok(CorrelationModel { p, k, epsilon, jitter_sigma: vec![0.0; p] })
    }

    pub fn with_epsilon(mut self, previous: &[usize], current: usize, value: f64) -> Result<Self> {
        if self.k < 2 {
            return Err(Error::config("k = 1 has no predecessor table"));
        }
        if previous.len() != self.k - 1 {
            return Err(Error::config(format!("predecessor pattern must have length {}", self.k - 1)));
        }
        let mut labels = previous.to_vec();
        labels.push(current);
        let idx = encode_pattern(&labels, self.p)?;
        self.epsilon[idx] = value;
        self.validate()?;
        Ok(self)
    }

    pub fn with_jitter(mut self, label: usize, sigma: f64) -> Result<Self> {
        *self
            .jitter_sigma
            .get_mut(label)
            .ok_or_else(|| Error::config(format!("label {label} out of range")))? = sigma;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.jitter_sigma.len() != self.p {
            return Err(Error::config("one jitter sigma per label required"));
        }
        if self.jitter_sigma.iter().any(|&s| !(s >= 0.0)) {
            return Err(Error::config("jitter sigma must be >= 0"));
        }
        let expected = if self.k > 1 { num_groups(self.p, self.k)? } else { 0 };
        if self.epsilon.len() != expected {
            return Err(Error::config(format!("epsilon table must have {expected} entries")));
        }
        if self.epsilon.iter().any(|&e| !(1.0 + e > 0.0)) {
            return Err(Error::config("every epsilon must satisfy 1 + epsilon > 0"));
        }
        Ok(())
    }

    fn has_jitter(&self) -> bool {
        self.jitter_sigma.iter().any(|&s| s > 0.0)
    }

    /// Deviation for the pulse at `t`, or 0 when fewer than `k-1`
    /// predecessors exist. With `wrap`, predecessors of the first pulses come
    /// from the end of the string (the previous repetition).
    fn epsilon_at(&self, seq: &[usize], t: usize, wrap: bool) -> f64 {
        if self.k < 2 || (!wrap && t + 1 < self.k) {
            return 0.0;
        }
        let n = seq.len();
        let mut idx = 0usize;
        for j in 0..self.k {
            let back = self.k - 1 - j;
            let pos = (t + n * self.k - back) % n;
            idx = idx * self.p + seq[pos];
        }
        self.epsilon[idx]
    }
}

/// Per-pulse mean photon numbers for one pass over `seq`.
pub fn emit_intensities(seq: &[usize], model: &CorrelationModel, nominal: &[f64], seed: u64) -> Result<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    emit_with_rng(seq, model, nominal, false, &mut rng)
}

/// As [`emit_intensities`] for a string sent repeatedly: the first pulses
/// take their predecessors from the end of the string.
pub fn emit_intensities_cyclic(seq: &[usize], model: &CorrelationModel, nominal: &[f64], seed: u64) -> Result<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    emit_with_rng(seq, model, nominal, true, &mut rng)
}

fn emit_with_rng<R: Rng + ?Sized>(
    seq: &[usize],
    model: &CorrelationModel,
    nominal: &[f64],
    wrap: bool,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if seq.is_empty() {
        return Err(Error::domain("sequence must be nonempty"));
    }
    model.validate()?;
    if nominal.len() != model.p {
        return Err(Error::config("one nominal intensity per label required"));
    }
    let normals = model
        .jitter_sigma
        .iter()
        .map(|&s| if s > 0.0 { Some(Normal::new(0.0, s).expect("sigma validated")) } else { None })
        .collect::<Vec<_>>();
    let mut out = Vec::with_capacity(seq.len());
    for (t, &label) in seq.iter().enumerate() {
        if label >= model.p {
            return Err(Error::data(format!("label {label} at position {t} outside [0, {})", model.p)));
        }
        let mut m = nominal[label] * (1.0 + model.epsilon_at(seq, t, wrap));
        if let Some(n) = &normals[label] {
            m *= 1.0 + n.sample(rng);
        }
        out.push(m.max(0.0));
    }
    Ok(out)
}

fn click_threshold(prob: f64) -> Option<u64> {
    // None means "always clicks"
    if prob >= 1.0 {
        None
    } else {
        Some((prob.max(0.0) * 18_446_744_073_709_551_616.0) as u64)
    }
}

#[inline]
fn draw(rng: &mut ChaCha8Rng, thr: Option<u64>) -> bool {
    match thr {
        None => true,
        Some(0) => false,
        Some(t) => rng.next_u64() < t,
    }
}

fn check_detection_params(eta: f64, dark_rate: f64) -> Result<()> {
    if !(eta > 0.0 && eta <= 1.0) {
        return Err(Error::domain(format!("eta = {eta} outside (0, 1]")));
    }
    if !(0.0..=1.0).contains(&dark_rate) {
        return Err(Error::domain(format!("dark rate {dark_rate} outside [0, 1]")));
    }
    Ok(())
}

fn bb84_click_prob(eta: f64, m: f64, dark_rate: f64) -> f64 {
    1.0 - (1.0 - dark_rate) * (-eta * m).exp()
}

/// One pass of single-detector detection: pulse `t` clicks with probability
/// `1 - (1 - dark) exp(-eta m_t)`.
pub fn simulate_bb84_detection(intensities: &[f64], eta: f64, dark_rate: f64, seed: u64) -> Result<ClickStream> {
    check_detection_params(eta, dark_rate)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let events = intensities
        .iter()
        .enumerate()
        .filter_map(|(t, &m)| {
            draw(&mut rng, click_threshold(bb84_click_prob(eta, m, dark_rate)))
                .then(|| DetectionEvent::new(0, t as u32, 0))
        })
        .collect();
    Ok(ClickStream { events, cycles: 1, slots_per_cycle: intensities.len() as u32, detectors: 1 })
}

/// Settings for a repeated fixed-string prepare-and-measure run.
#[derive(Debug, Clone)]
pub struct RepeatedRun<'a> {
    pub sequence: &'a [usize],
    pub model: &'a CorrelationModel,
    pub nominal: &'a [f64],
    pub cycles: u64,
    pub eta: f64,
    pub dark_rate: f64,
    pub seed: u64,
    pub shards: usize,
}

fn cycle_rng(seed: u64, cycle: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(cycle);
    rng
}

fn shard_ranges(cycles: u64, shards: usize) -> Vec<(u64, u64)> {
    let shards = (shards.max(1) as u64).min(cycles.max(1));
    (0..shards)
        .map(|s| (cycles * s / shards, cycles * (s + 1) / shards))
        .filter(|(a, b)| a < b)
        .collect()
}

/// The string is transmitted `cycles` times back to back; cycle `c`'s pulse at
/// slot `s` is global pulse `c * len + s`. Predecessors cross cycle boundaries.
pub fn simulate_bb84_repeated(run: &RepeatedRun<'_>) -> Result<ClickStream> {
    check_detection_params(run.eta, run.dark_rate)?;
    let len = run.sequence.len();
    if len == 0 || run.cycles == 0 {
        return Err(Error::domain("need a nonempty sequence and at least one cycle"));
    }
    let jitter = run.model.has_jitter();
    // Without jitter the per-slot probabilities are fixed; precompute for the
    // first cycle (no history) and for every later cycle (wrapped history).
    let fixed = if jitter {
        None
    } else {
        let mut dummy = ChaCha8Rng::seed_from_u64(0);
        let first = emit_with_rng(run.sequence, run.model, run.nominal, false, &mut dummy)?;
        let later = emit_with_rng(run.sequence, run.model, run.nominal, true, &mut dummy)?;
        let to_thr = |ms: Vec<f64>| -> Vec<Option<u64>> {
            ms.into_iter()
                .map(|m| click_threshold(bb84_click_prob(run.eta, m, run.dark_rate)))
                .collect()
        };
        Some((to_thr(first), to_thr(later)))
    };

    let chunks: Vec<Result<Vec<DetectionEvent>>> = shard_ranges(run.cycles, run.shards)
        .into_par_iter()
        .map(|(start, end)| {
            let mut events = Vec::new();
            for cycle in start..end {
                let mut rng = cycle_rng(run.seed, cycle);
                let owned;
                let thresholds: &[Option<u64>] = match &fixed {
                    Some((first, later)) => {
                        if cycle == 0 {
                            first
                        } else {
                            later
                        }
                    }
                    None => {
                        let ms = emit_with_rng(run.sequence, run.model, run.nominal, cycle > 0, &mut rng)?;
                        owned = ms
                            .into_iter()
                            .map(|m| click_threshold(bb84_click_prob(run.eta, m, run.dark_rate)))
                            .collect::<Vec<_>>();
                        &owned
                    }
                };
                for (slot, &thr) in thresholds.iter().enumerate() {
                    if draw(&mut rng, thr) {
                        events.push(DetectionEvent::new(cycle, slot as u32, 0));
                    }
                }
            }
            Ok(events)
        })
        .collect();

    let mut events = Vec::new();
    for chunk in chunks {
        events.extend(chunk?);
    }
    Ok(ClickStream { events, cycles: run.cycles, slots_per_cycle: len as u32, detectors: 1 })
}

/// Detector assignment behind the Bell-state analyzer: a photon leaves the
/// beam splitter by port a or b with equal probability, then the polarizing
/// splitter of that port routes H or V. X-basis photons split 50/50 between H
/// and V.
///
/// Detector ids: 0 = D1 (a, H), 1 = D2 (b, V), 2 = D3 (a, V), 3 = D4 (b, H).
#[derive(Debug, Clone, Copy, Default)]
pub struct DetectorMap;

impl DetectorMap {
    pub fn detector(port_b: bool, vertical: bool) -> u8 {
        match (port_b, vertical) {
            (false, false) => 0,
            (true, true) => 1,
            (false, true) => 2,
            (true, false) => 3,
        }
    }

    fn route<R: Rng + ?Sized>(symbol: MdiSymbol, rng: &mut R) -> u8 {
        let port_b = rng.random::<bool>();
        let vertical = match symbol.polarization() {
            Polarization::H => false,
            Polarization::V => true,
            Polarization::Plus | Polarization::Minus => rng.random::<bool>(),
        };
        Self::detector(port_b, vertical)
    }
}

fn mdi_one_cycle(
    cycle: u64,
    int_a: &[f64],
    int_b: &[f64],
    sym_a: &[MdiSymbol],
    sym_b: &[MdiSymbol],
    eta: f64,
    rng: &mut ChaCha8Rng,
    out: &mut Vec<DetectionEvent>,
) {
    let mut slot_clicks = [false; NUM_MDI_DETECTORS];
    for slot in 0..int_a.len() {
        slot_clicks.fill(false);
        for (m, sym) in [(int_a[slot], sym_a[slot]), (int_b[slot], sym_b[slot])] {
            let p = -(-eta * m / 2.0).exp_m1();
            if draw(rng, click_threshold(p)) {
                slot_clicks[DetectorMap::route(sym, rng) as usize] = true;
            }
        }
        for (d, &hit) in slot_clicks.iter().enumerate() {
            if hit {
                out.push(DetectionEvent::new(cycle, slot as u32, d as u8));
            }
        }
    }
}

fn check_mdi_inputs(int_a: &[f64], int_b: &[f64], sym_a: &[MdiSymbol], sym_b: &[MdiSymbol], eta: f64) -> Result<()> {
    if int_a.len() != int_b.len() || sym_a.len() != int_a.len() || sym_b.len() != int_a.len() {
        return Err(Error::domain(format!(
            "length mismatch: intensities {} / {}, symbols {} / {}",
            int_a.len(),
            int_b.len(),
            sym_a.len(),
            sym_b.len()
        )));
    }
    check_detection_params(eta, 0.0)
}

/// One detection cycle of the two-source coincidence model. Each of Alice's
/// and Bob's pulses independently yields a click with probability
/// `1 - exp(-eta m / 2)`, routed by [`DetectorMap`].
pub fn simulate_mdi_detection(
    int_a: &[f64],
    int_b: &[f64],
    sym_a: &[MdiSymbol],
    sym_b: &[MdiSymbol],
    eta: f64,
    seed: u64,
) -> Result<ClickStream> {
    check_mdi_inputs(int_a, int_b, sym_a, sym_b, eta)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut events = Vec::new();
    mdi_one_cycle(0, int_a, int_b, sym_a, sym_b, eta, &mut rng, &mut events);
    Ok(ClickStream {
        events,
        cycles: 1,
        slots_per_cycle: int_a.len() as u32,
        detectors: NUM_MDI_DETECTORS as u8,
    })
}

/// Many MDI cycles with fixed per-slot intensities, one ChaCha stream per cycle.
pub fn simulate_mdi_repeated(
    int_a: &[f64],
    int_b: &[f64],
    sym_a: &[MdiSymbol],
    sym_b: &[MdiSymbol],
    eta: f64,
    cycles: u64,
    seed: u64,
    shards: usize,
) -> Result<ClickStream> {
    check_mdi_inputs(int_a, int_b, sym_a, sym_b, eta)?;
    let chunks: Vec<Vec<DetectionEvent>> = shard_ranges(cycles, shards)
        .into_par_iter()
        .map(|(start, end)| {
            let mut events = Vec::new();
            for cycle in start..end {
                let mut rng = cycle_rng(seed, cycle);
                mdi_one_cycle(cycle, int_a, int_b, sym_a, sym_b, eta, &mut rng, &mut events);
            }
            events
        })
        .collect();
    Ok(ClickStream {
        events: chunks.concat(),
        cycles,
        slots_per_cycle: int_a.len() as u32,
        detectors: NUM_MDI_DETECTORS as u8,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bb84_spec() -> SourceSpec {
        SourceSpec::new(&[("V", 0.001, 3.0), ("D1", 0.03, 7.0), ("D2", 0.09, 35.0), ("S", 0.23, 55.0)], 2).unwrap()
    }

    #[test]
    fn degenerate_ratio_gives_constant_sequence() {
        let mut spec = bb84_spec();
        spec.ratios = vec![1.0, 0.0, 0.0, 0.0];
        let seq = generate_sequence(&spec, SequenceMode::Iid, 5, 1).unwrap();
        assert_eq!(seq.labels, vec![0, 0, 0, 0, 0]);
    }

    #[test]
    fn label_frequencies_within_three_sigma() {
        let spec = bb84_spec();
        let n = 10_000;
        let seq = generate_sequence(&spec, SequenceMode::FixedString, n, 42).unwrap();
        assert!(seq.repeated);
        for (label, &ratio) in spec.ratios.iter().enumerate() {
            let count = seq.labels.iter().filter(|&&l| l == label).count() as f64;
            let sd = (n as f64 * ratio * (1.0 - ratio)).sqrt();
            assert!((count - n as f64 * ratio).abs() <= 3.0 * sd, "label {label}: {count}");
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let spec = bb84_spec();
        let a = generate_sequence(&spec, SequenceMode::Iid, 1000, 9).unwrap();
        let b = generate_sequence(&spec, SequenceMode::Iid, 1000, 9).unwrap();
        assert_eq!(a, b);
        let c = generate_sequence(&spec, SequenceMode::Iid, 1000, 10).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn emission_without_correlation_is_nominal() {
        let spec = bb84_spec();
        let seq = generate_sequence(&spec, SequenceMode::Iid, 200, 3).unwrap().labels;
        let model = CorrelationModel::uncorrelated(4, 2).unwrap();
        let ms = emit_intensities(&seq, &model, &spec.nominal_mus(), 0).unwrap();
        for (m, &l) in ms.iter().zip(&seq) {
            assert_eq!(*m, spec.labels[l].nominal_mu);
        }
    }

    #[test]
    fn emission_applies_predecessor_deviation() {
        // S = 1, V = 0 in a two-label alphabet
        let model = CorrelationModel::uncorrelated(2, 2).unwrap().with_epsilon(&[1], 1, 0.05).unwrap();
        let seq = [1, 1, 0, 1, 1, 1];
        let ms = emit_intensities(&seq, &model, &[0.0, 0.2], 0).unwrap();
        assert_eq!(ms[0], 0.2); // no predecessor
        assert!((ms[1] - 0.21).abs() < 1e-15);
        assert_eq!(ms[3], 0.2);
        assert!((ms[4] - 0.21).abs() < 1e-15);
        assert!((ms[5] - 0.21).abs() < 1e-15);
    }

    #[test]
    fn jittered_mean_matches_deviation() {
        let model = CorrelationModel::uncorrelated(2, 2)
            .unwrap()
            .with_epsilon(&[0], 1, -0.07)
            .unwrap()
            .with_jitter(1, 0.01)
            .unwrap();
        let nominal = [0.001, 0.2];
        // alternating V, S so every S is preceded by V
        let seq: Vec<usize> = (0..200_000).map(|i| i % 2).collect();
        let ms = emit_intensities(&seq, &model, &nominal, 5).unwrap();
        let s: Vec<f64> = ms.iter().skip(1).step_by(2).copied().collect();
        let n = s.len() as f64;
        let mean = s.iter().sum::<f64>() / n;
        let expected = 0.2 * 0.93;
        let se = expected * 0.01 / n.sqrt();
        assert!((mean - expected).abs() <= 3.0 * se, "mean {mean} expected {expected}");
    }

    #[test]
    fn invalid_models_rejected() {
        assert!(CorrelationModel::uncorrelated(2, 2).unwrap().with_epsilon(&[0], 1, -1.0).is_err());
        assert!(CorrelationModel::uncorrelated(2, 2).unwrap().with_jitter(0, -0.1).is_err());
        assert!(CorrelationModel::uncorrelated(2, 1).unwrap().with_epsilon(&[], 1, 0.1).is_err());
    }

    #[test]
    fn bb84_detection_edge_cases() {
        let zeros = vec![0.0; 1000];
        assert!(simulate_bb84_detection(&zeros, 0.5, 0.0, 1).unwrap().is_empty());
        let all = simulate_bb84_detection(&zeros, 0.5, 1.0, 1).unwrap();
        assert_eq!(all.len(), 1000);
        all.validate().unwrap();
        assert!(simulate_bb84_detection(&zeros, 0.0, 0.0, 1).is_err());
    }

    #[test]
    fn bb84_click_fraction_matches_click_probability() {
        let n = 1_000_000;
        let ms = vec![0.5; n];
        let stream = simulate_bb84_detection(&ms, 0.1, 0.0, 11).unwrap();
        let p = 0.048_770_575_499_285_99;
        let frac = stream.len() as f64 / n as f64;
        let sd = (p * (1.0 - p) / n as f64).sqrt();
        assert!((frac - p).abs() <= 3.0 * sd, "{frac}");
    }

    #[test]
    fn repeated_run_is_shard_invariant() {
        let spec = bb84_spec();
        let seq = generate_sequence(&spec, SequenceMode::FixedString, 500, 1).unwrap().labels;
        let model = CorrelationModel::uncorrelated(4, 2)
            .unwrap()
            .with_jitter(3, 0.02)
            .unwrap();
        let nominal = spec.nominal_mus();
        let mut run = RepeatedRun {
            sequence: &seq,
            model: &model,
            nominal: &nominal,
            cycles: 40,
            eta: 0.5,
            dark_rate: 1e-3,
            seed: 77,
            shards: 1,
        };
        let one = simulate_bb84_repeated(&run).unwrap();
        run.shards = 7;
        let many = simulate_bb84_repeated(&run).unwrap();
        assert_eq!(one, many);
        one.validate().unwrap();
    }

    fn sym(v: u8) -> MdiSymbol {
        MdiSymbol::new(v).unwrap()
    }

    #[test]
    fn mdi_vacuum_gives_no_clicks() {
        let n = 100;
        let zeros = vec![0.0; n];
        let syms = vec![sym(0); n];
        let s = simulate_mdi_detection(&zeros, &zeros, &syms, &syms, 1.0, 3).unwrap();
        assert!(s.is_empty());
        assert!(simulate_mdi_detection(&zeros, &zeros[..5], &syms, &syms, 1.0, 3).is_err());
    }

    #[test]
    fn mdi_joint_click_probability() {
        // one slot, Alice H on Z, Bob V on Z; count cycles where both photons clicked
        // by comparing with the product of the marginal click probabilities
        let m = 0.6;
        let eta = 0.5;
        let cycles = 200_000u64;
        let s = simulate_mdi_repeated(&[m], &[m], &[sym(0)], &[sym(1)], eta, cycles, 8, 4).unwrap();
        // H photons land on D1 or D4, V photons on D2 or D3: both sides clicked
        // iff at least one H-detector and one V-detector fired.
        let mut h = vec![false; cycles as usize];
        let mut v = vec![false; cycles as usize];
        for e in &s.events {
            match e.detector {
                0 | 3 => h[e.cycle as usize] = true,
                _ => v[e.cycle as usize] = true,
            }
        }
        let both = h.iter().zip(&v).filter(|(a, b)| **a && **b).count() as f64 / cycles as f64;
        let p1 = 1.0 - (-eta * m / 2.0f64).exp();
        let expected = p1 * p1;
        let sd = (expected * (1.0 - expected) / cycles as f64).sqrt();
        assert!((both - expected).abs() <= 3.0 * sd, "{both} vs {expected}");
    }

    #[test]
    fn mdi_alice_clicks_grow_with_intensity() {
        let cycles = 100_000u64;
        // Alice H, Bob vacuum: every click is Alice's
        let low = simulate_mdi_repeated(&[0.2], &[0.0], &[sym(0)], &[sym(0)], 0.5, cycles, 1, 2).unwrap();
        let high = simulate_mdi_repeated(&[0.4], &[0.0], &[sym(0)], &[sym(0)], 0.5, cycles, 1, 2).unwrap();
        assert!(high.len() > low.len());
        for e in &high.events {
            assert!(e.detector == 0 || e.detector == 3);
        }
    }
}
