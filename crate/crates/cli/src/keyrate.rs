use std::fs::File;
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Args;
use corrkit_core::characterize::{fluctuation_stats, RateTable};
use corrkit_core::fixtures::{self, split_into_blocks};
use corrkit_core::io::{read_block_table, read_count_table};
use corrkit_core::photon::AfterPulseModel;
use corrkit_core::report::{curve_series, series_csv, series_svg};
use corrkit_core::security::{
    cutoff_distance, delta_max, fit_group_gaussians, label_bounds, ncut_convergence, rate_curve, strictness_audit,
    Channel, CoefficientProvider, DecoyInputs, DecoyLpProblem, GainOrientation, LinkCoeffs, Protocol, TableProvider,
    UniformProvider,
};
use corrkit_core::security::decoy::estimate;
use serde::Serialize;

use crate::args::{label_index, label_names, load_config, parse_f64_list};
use crate::manifest::{write_csv, write_json, RunManifest};
use crate::usage;

#[derive(Debug, Args, Serialize)]
pub struct SecurityArgs {
    /// Full `pattern,G,T,C` table, split into blocks with --split.
    #[arg(long, requires = "split", conflicts_with = "blocks")]
    rates: Option<PathBuf>,
    /// Per-block `block,pattern,T,C` table.
    #[arg(long)]
    blocks: Option<PathBuf>,
    /// Number of blocks to split --rates into.
    #[arg(long)]
    split: Option<usize>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    names: Option<String>,
    #[arg(long, default_value_t = 2)]
    k: usize,
    /// Detection efficiency used to invert rates to intensities.
    #[arg(long)]
    eta: f64,
    /// After-pulse probability per click.
    #[arg(long, default_value_t = 0.0)]
    q: f64,
    /// Dead-time gates.
    #[arg(long, default_value_t = 1)]
    tau: u32,
    /// Nominal intensity per label, in label order [default: config or BB84].
    #[arg(long)]
    mus: Option<String>,
    /// Signal label [default: last label].
    #[arg(long)]
    signal: Option<String>,
    /// Background yield per pulse.
    #[arg(long, default_value_t = 0.0)]
    dark: f64,
    /// Misalignment error probability.
    #[arg(long, default_value_t = 0.01)]
    emis: f64,
    /// Linking coefficients, rows of `a,b,n,c+,c-,m+,m-`.
    #[arg(long)]
    coeffs: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    ncut: usize,
    #[arg(long)]
    #[serde(skip)]
    out: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
struct BoundRow {
    reference: String,
    alternate: String,
    a_minus: f64,
    a_plus: f64,
    delta: f64,
    clamped: bool,
}

#[derive(Debug, Serialize)]
struct DecoySection {
    provider: String,
    gains: Vec<f64>,
    error_gains: Vec<f64>,
    y1_lower: f64,
    e1_upper: f64,
    strictness: corrkit_core::security::StrictnessAudit,
    ncut_convergence: corrkit_core::security::NcutConvergence,
}

#[derive(Debug, Serialize)]
struct SecurityReport {
    blocks: usize,
    delta_max: f64,
    label_delta: Vec<(String, f64)>,
    bounds: Vec<BoundRow>,
    decoy: Option<DecoySection>,
}

fn provider_for(path: Option<&PathBuf>, delta: f64) -> Result<Box<dyn CoefficientProvider>> {
    Ok(match path {
        Some(p) => Box::new(TableProvider::from_path(p).with_context(|| format!("coefficients {}", p.display()))?),
        None => {
            if delta > 0.0 {
                eprintln!("warning: no --coeffs given; linking yields with identity coefficients at delta_max = {delta}");
            }
            Box::new(UniformProvider(LinkCoeffs::IDENTITY))
        }
    })
}

fn decoy_section(
    a: &SecurityArgs,
    names: &[String],
    mus: Vec<f64>,
    pooled: &RateTable,
    delta: f64,
) -> Result<DecoySection> {
    let signal = match &a.signal {
        Some(s) => label_index(s, names)?,
        None => names.len() - 1,
    };
    let stats = fluctuation_stats(pooled, true);
    let gains: Vec<f64> = stats.iter().map(|s| s.mean_rate / (1.0 + a.q)).collect();
    let error_gains = gains.iter().map(|&q| 0.5 * a.dark + a.emis * (q - a.dark).max(0.0)).collect();
    let inputs = DecoyInputs {
        names: names.to_vec(),
        intensities: mus,
        gains: gains.clone(),
        error_gains,
        delta_max: delta,
        n_cut: a.ncut,
        signal,
        orientation: GainOrientation::Printed,
    };
    let provider = provider_for(a.coeffs.as_ref(), delta)?;
    let est = estimate(&DecoyLpProblem::build(inputs.clone(), provider.as_ref())?)?;
    let strictness = strictness_audit(&inputs, provider.as_ref())?;
    let convergence = ncut_convergence(&inputs, provider.as_ref(), &[a.ncut, a.ncut + 5, a.ncut + 10])?;
    Ok(DecoySection {
        provider: provider.describe(),
        gains,
        error_gains: inputs.error_gains,
        y1_lower: est.y1_lower,
        e1_upper: est.e1_upper,
        strictness,
        ncut_convergence: convergence,
    })
}

pub fn security(a: SecurityArgs) -> Result<()> {
    let config = load_config(a.config.as_deref())?;
    let names = label_names(a.names.as_deref(), config.as_ref());
    let mut manifest = RunManifest::new("security", &a)?.config(a.config.as_deref())?;
    let blocks = match (&a.rates, &a.blocks) {
        (Some(path), None) => {
            let ct = read_count_table(File::open(path).with_context(|| format!("opening {}", path.display()))?, &names, a.k)
                .with_context(|| format!("rate table {}", path.display()))?;
            manifest = manifest.input(path)?;
            let table = RateTable::from_counts(names.len(), a.k, ct.t, ct.c)?;
            split_into_blocks(&table, a.split.expect("clap enforces --split"))?
        }
        (None, Some(path)) => {
            let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
            manifest = manifest.input(path)?;
            read_block_table(f, &names, a.k).with_context(|| format!("block table {}", path.display()))?
        }
        _ => return Err(usage("give either --rates with --split, or --blocks")),
    };
    let ap = AfterPulseModel::new(a.q, a.tau)?;
    let fits = fit_group_gaussians(&blocks, a.eta, ap)?;
    let bounds = label_bounds(&fits, names.len())?;
    let dmax = delta_max(&bounds)?;
    let key = |g: usize| blocks[0].key(g).name(&names);
    for b in bounds.iter().filter(|b| b.clamped) {
        eprintln!("warning: {} has less spread than reference {}; bound clamped to zero", key(b.alternate), key(b.reference));
    }
    let label_delta = (0..names.len())
        .filter_map(|l| {
            bounds
                .iter()
                .filter(|b| b.alternate % names.len() == l)
                .map(|b| b.delta)
                .reduce(f64::max)
                .map(|d| (names[l].clone(), d))
        })
        .collect();

    let mus = match (&a.mus, &config) {
        (Some(m), _) => Some(parse_f64_list(m)?),
        (None, Some(c)) => Some(c.source.nominal_mus()),
        (None, None) if names == fixtures::bb84_names() => Some(fixtures::BB84_INTENSITIES.to_vec()),
        _ => None,
    };
    let decoy = match mus {
        Some(m) if m.len() != names.len() => {
            return Err(usage(format!("--mus has {} values for {} labels", m.len(), names.len())));
        }
        Some(_) if dmax >= 1.0 => {
            eprintln!("warning: delta_max = {dmax:.4} >= 1, decoy-state bounds skipped");
            None
        }
        Some(m) => {
            let pooled = pool(&blocks)?;
            Some(decoy_section(&a, &names, m, &pooled, dmax)?)
        }
        None => None,
    };
    eprintln!("delta_max = {dmax:.4} over {} blocks", blocks.len());
    let report = SecurityReport {
        blocks: blocks.len(),
        delta_max: dmax,
        label_delta,
        bounds: bounds
            .iter()
            .map(|b| BoundRow {
                reference: key(b.reference),
                alternate: key(b.alternate),
                a_minus: b.a_minus,
                a_plus: b.a_plus,
                delta: b.delta,
                clamped: b.clamped,
            })
            .collect(),
        decoy,
    };
    write_json(a.out.as_deref(), &manifest, report)
}

fn pool(blocks: &[RateTable]) -> Result<RateTable> {
    let first = &blocks[0];
    let mut t = vec![0.0; first.t.len()];
    let mut c = vec![0.0; first.c.len()];
    for b in blocks {
        for i in 0..t.len() {
            t[i] += b.t[i];
            c[i] += b.c[i];
        }
    }
    Ok(RateTable::from_counts(first.p, first.k, t, c)?)
}

#[derive(Debug, Args, Serialize)]
pub struct CurveArgs {
    /// Comma-separated deviation bounds, one curve each.
    #[arg(long, default_value = "0,0.1,0.3,0.63")]
    deltas: String,
    /// Fiber loss in dB/km.
    #[arg(long, default_value_t = 0.2)]
    alpha: f64,
    /// Detector efficiency.
    #[arg(long, default_value_t = 0.1)]
    etadet: f64,
    #[arg(long, default_value_t = 1e-6)]
    dark: f64,
    #[arg(long, default_value_t = 0.01)]
    emis: f64,
    #[arg(long, default_value_t = 150.0)]
    max_km: f64,
    #[arg(long, default_value_t = 5.0)]
    step: f64,
    #[arg(long)]
    coeffs: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    ncut: usize,
    /// Error-correction inefficiency.
    #[arg(long, default_value_t = 1.16)]
    fec: f64,
    /// Sifting factor.
    #[arg(long, default_value_t = 0.5)]
    qsift: f64,
    #[arg(long)]
    #[serde(skip)]
    out: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip)]
    svg: Option<PathBuf>,
}

pub fn curve(a: CurveArgs) -> Result<()> {
    let deltas = parse_f64_list(&a.deltas)?;
    if !(a.step > 0.0) || !(a.max_km >= 0.0) {
        return Err(usage("--step must be > 0 and --max-km >= 0"));
    }
    let n = (a.max_km / a.step + 1e-9).floor() as usize;
    let distances: Vec<f64> = (0..=n).map(|i| i as f64 * a.step).collect();
    let channel = Channel { alpha_db_per_km: a.alpha, eta_det: a.etadet, dark: a.dark, e_mis: a.emis };
    let protocol = Protocol { f_ec: a.fec, q_sift: a.qsift, n_cut: a.ncut, ..Protocol::bb84_default() };
    let mut manifest = RunManifest::new("curve", &a)?;
    if let Some(p) = &a.coeffs {
        manifest = manifest.input(p)?;
    }
    let max_delta = deltas.iter().cloned().fold(0.0, f64::max);
    let provider = provider_for(a.coeffs.as_ref(), max_delta)?;
    let curves = deltas
        .iter()
        .map(|&d| Ok((d, rate_curve(&channel, &protocol, d, &distances, provider.as_ref())?)))
        .collect::<Result<Vec<_>>>()?;
    for (d, c) in &curves {
        match cutoff_distance(c) {
            Some(km) => eprintln!("delta_max = {d}: positive key rate up to {km} km"),
            None => eprintln!("delta_max = {d}: no positive key rate"),
        }
        let bad = c.iter().filter(|p| p.infeasible).count();
        if bad > 0 {
            eprintln!("delta_max = {d}: {bad} infeasible points set to zero");
        }
    }
    let series = curve_series(&curves);
    write_csv(a.out.as_deref(), &manifest, &series_csv(&series, "distance_km"))?;
    if let Some(p) = &a.svg {
        let svg = series_svg(&series, "Secret key rate", "distance (km)", "bits per pulse");
        std::fs::write(p, svg).with_context(|| format!("writing {}", p.display()))?;
    }
    Ok(())
}
