use std::io::BufWriter;
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Args, Subcommand};
use corrkit_core::crosscycle::{MdiSymbol, MDI_LABELS};
use corrkit_core::fixtures;
use corrkit_core::io::{read_sequence, write_events, write_sequence};
use corrkit_core::model::SourceSpec;
use corrkit_core::sim::{
    emit_intensities_cyclic, generate_sequence, simulate_bb84_repeated, simulate_mdi_repeated, CorrelationModel,
    RepeatedRun, SequenceMode,
};
use serde::Serialize;

use crate::args::{label_index, label_names, load_config, parse_assign, parse_f64_list, pattern_parts, read_text};
use crate::manifest::{write_sidecar, RunManifest};
use crate::usage;

#[derive(Debug, Subcommand)]
pub enum SimulateCommand {
    /// Repeated fixed string, one logical detector.
    Bb84(Bb84Args),
    /// Two repeated strings, four-detector Bell-state measurement.
    Mdi(MdiArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct Bb84Args {
    /// Source and experiment configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Use this label sequence instead of generating one.
    #[arg(long)]
    seq: Option<PathBuf>,
    /// Sequence length when generating [default: config or 10000].
    #[arg(long)]
    length: Option<usize>,
    /// Number of times the string is sent [default: config or 100].
    #[arg(long)]
    reps: Option<u64>,
    /// Detection efficiency [default: config or 0.1].
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long, default_value_t = 0.0)]
    dark: f64,
    #[arg(long)]
    seed: Option<u64>,
    /// Work units; results do not depend on this.
    #[arg(long)]
    shards: Option<usize>,
    /// Correlation length [default: config or 2].
    #[arg(long)]
    k: Option<usize>,
    /// Relative intensity shift of one pattern, e.g. `S-D1=0.05`.
    #[arg(long = "epsilon", value_parser = parse_assign)]
    epsilon: Vec<(String, f64)>,
    /// Relative Gaussian jitter of one label, e.g. `S=0.01`.
    #[arg(long = "jitter", value_parser = parse_assign)]
    jitter: Vec<(String, f64)>,
    #[arg(long)]
    #[serde(skip)]
    seq_out: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip)]
    clicks_out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct MdiArgs {
    /// Alice's symbol string [default: shipped fixture].
    #[arg(long = "str-a", alias = "strA")]
    str_a: Option<PathBuf>,
    /// Bob's symbol string [default: shipped fixture].
    #[arg(long = "str-b", alias = "strB")]
    str_b: Option<PathBuf>,
    /// Mean photon numbers for omega,nu,mu,s.
    #[arg(long, default_value = "0.001,0.1,0.2,0.5")]
    mus: String,
    #[arg(long, default_value_t = 0.05)]
    eta: f64,
    #[arg(long, default_value_t = 1000)]
    cycles: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    shards: Option<usize>,
    /// Relative shift of one of Alice's patterns, e.g. `s-omega=0.1`.
    #[arg(long = "epsilon", value_parser = parse_assign)]
    epsilon: Vec<(String, f64)>,
    #[arg(long)]
    #[serde(skip)]
    clicks_out: PathBuf,
}

pub fn run(cmd: SimulateCommand) -> Result<()> {
    match cmd {
        SimulateCommand::Bb84(a) => bb84(a),
        SimulateCommand::Mdi(a) => mdi(a),
    }
}

/// Sequence draws use a different seed from the click streams so the two
/// never share random numbers.
fn sequence_seed(seed: u64) -> u64 {
    seed ^ 0x9e37_79b9_7f4a_7c15
}

fn default_bb84_spec(k: usize) -> Result<SourceSpec> {
    let col = fixtures::bb84_signal_column()?;
    let labels: Vec<(&str, f64, f64)> =
        (0..4).map(|i| (fixtures::BB84_NAMES[i], fixtures::BB84_INTENSITIES[i], col.g[i])).collect();
    Ok(SourceSpec::new(&labels, k)?)
}

fn bb84(a: Bb84Args) -> Result<()> {
    let config = load_config(a.config.as_deref())?;
    let exp = config.as_ref().map(|c| &c.experiment);
    let k = a.k.or(config.as_ref().map(|c| c.source.k())).unwrap_or(2);
    let spec = match &config {
        Some(c) => c.source.clone(),
        None => default_bb84_spec(k)?,
    };
    let names = label_names(None, config.as_ref());
    let length = a.length.or(exp.map(|e| e.sequence_length)).unwrap_or(fixtures::BB84_SEQUENCE_LEN);
    let reps = a.reps.or(exp.map(|e| e.repetitions)).unwrap_or(100);
    let eta = a.eta.or(exp.map(|e| e.eta)).unwrap_or(0.1);
    let seed = a.seed.or(exp.map(|e| e.rng_seed)).unwrap_or(0);
    let shards = a.shards.or(exp.map(|e| e.shards)).unwrap_or_else(rayon::current_num_threads);

    let sequence = match &a.seq {
        Some(p) => read_sequence(read_text(p)?.as_bytes()).with_context(|| format!("sequence {}", p.display()))?,
        None => generate_sequence(&spec, SequenceMode::FixedString, length, sequence_seed(seed))?.labels,
    };
    if let Some(bad) = sequence.iter().find(|&&l| l >= names.len()) {
        return Err(corrkit_core::Error::Data { line: None, msg: format!("label {bad} outside the {} declared labels", names.len()) }.into());
    }

    let mut model = CorrelationModel::uncorrelated(names.len(), k)?;
    for (pattern, v) in &a.epsilon {
        let (prev, cur) = pattern_parts(pattern, &names, k)?;
        model = model.with_epsilon(&prev, cur, *v)?;
    }
    for (label, s) in &a.jitter {
        model = model.with_jitter(label_index(label, &names)?, *s)?;
    }
    let nominal = spec.nominal_mus();
    let stream = simulate_bb84_repeated(&RepeatedRun {
        sequence: &sequence,
        model: &model,
        nominal: &nominal,
        cycles: reps,
        eta,
        dark_rate: a.dark,
        seed,
        shards,
    })?;

    let mut manifest = RunManifest::new("simulate bb84", &a)?.config(a.config.as_deref())?.seed(seed);
    if let Some(p) = &a.seq {
        manifest = manifest.input(p)?;
    }
    if let Some(p) = &a.seq_out {
        let f = std::fs::File::create(p).with_context(|| format!("creating {}", p.display()))?;
        write_sequence(BufWriter::new(f), &sequence)?;
        write_sidecar(p, &manifest)?;
    }
    let f = std::fs::File::create(&a.clicks_out).with_context(|| format!("creating {}", a.clicks_out.display()))?;
    write_events(BufWriter::new(f), &stream)?;
    write_sidecar(&a.clicks_out, &manifest)?;
    eprintln!(
        "simulated {} pulses ({} x {reps}), {} clicks, manifest {}",
        sequence.len() as u64 * reps,
        sequence.len(),
        stream.len(),
        &manifest.hash()[..12]
    );
    Ok(())
}

fn read_symbols(path: Option<&PathBuf>, fixture: &str) -> Result<Vec<MdiSymbol>> {
    let text = match path {
        Some(p) => read_text(p)?,
        None => fixtures::fixture_text(fixture)?,
    };
    read_sequence(text.as_bytes())?
        .into_iter()
        .map(|v| {
            let v = u8::try_from(v).map_err(|_| corrkit_core::Error::Data { line: None, msg: format!("symbol {v} out of range") })?;
            Ok(MdiSymbol::new(v)?)
        })
        .collect()
}

fn mdi(a: MdiArgs) -> Result<()> {
    let sym_a = read_symbols(a.str_a.as_ref(), fixtures::MDI_ALICE)?;
    let sym_b = read_symbols(a.str_b.as_ref(), fixtures::MDI_BOB)?;
    let mus = parse_f64_list(&a.mus)?;
    if mus.len() != MDI_LABELS.len() {
        return Err(usage(format!("--mus needs {} values (omega,nu,mu,s)", MDI_LABELS.len())));
    }
    let names = fixtures::mdi_names();
    let mut model = CorrelationModel::uncorrelated(names.len(), 2)?;
    for (pattern, v) in &a.epsilon {
        let (prev, cur) = pattern_parts(pattern, &names, 2)?;
        model = model.with_epsilon(&prev, cur, *v)?;
    }
    let labels_a: Vec<usize> = sym_a.iter().map(|s| s.label()).collect();
    let labels_b: Vec<usize> = sym_b.iter().map(|s| s.label()).collect();
    let int_a = emit_intensities_cyclic(&labels_a, &model, &mus, a.seed)?;
    let int_b = emit_intensities_cyclic(&labels_b, &CorrelationModel::uncorrelated(names.len(), 2)?, &mus, a.seed)?;
    let shards = a.shards.unwrap_or_else(rayon::current_num_threads);
    let stream = simulate_mdi_repeated(&int_a, &int_b, &sym_a, &sym_b, a.eta, a.cycles, a.seed, shards)?;

    let mut manifest = RunManifest::new("simulate mdi", &a)?.seed(a.seed);
    for p in [&a.str_a, &a.str_b].into_iter().flatten() {
        manifest = manifest.input(p)?;
    }
    let f = std::fs::File::create(&a.clicks_out).with_context(|| format!("creating {}", a.clicks_out.display()))?;
    write_events(BufWriter::new(f), &stream)?;
    write_sidecar(&a.clicks_out, &manifest)?;
    eprintln!("simulated {} cycles x {} slots, {} clicks", a.cycles, sym_a.len(), stream.len());
    Ok(())
}
