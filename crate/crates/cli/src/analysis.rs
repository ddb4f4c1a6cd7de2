use std::fmt::Write as _;
use std::fs::File;
use std::io::BufReader;
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Args, ValueEnum};
use corrkit_core::characterize::{
    click_rates, count_transmissions, fluctuation_stats, ClickAccumulator, CountMode, LabelFluctuation, RateTable,
};
use corrkit_core::crosscycle::{
    cross_cycle_coincidences, cross_cycle_rates, parse_table_fixture, slot_groups, BlockConfig, BsmPatternTable,
    MdiSymbol, Target,
};
use corrkit_core::fixtures;
use corrkit_core::io::{for_each_event, rate_table_csv, read_count_table, read_events, read_sequence};
use serde::Serialize;

use crate::args::{label_names, load_config, read_text};
use crate::manifest::{write_csv, write_json, RunManifest};
use crate::usage;

#[derive(Debug, Args, Serialize)]
pub struct CharacterizeArgs {
    /// Label sequence, one id per line.
    #[arg(long, requires = "clicks", conflicts_with = "counts")]
    seq: Option<PathBuf>,
    /// Detection log, `cycle,slot,detector` per line.
    #[arg(long)]
    clicks: Option<PathBuf>,
    /// Ready-made `pattern,G,T,C` table instead of a sequence and log.
    #[arg(long)]
    counts: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Comma-separated label names [default: config or V,D1,D2,S].
    #[arg(long)]
    names: Option<String>,
    #[arg(long, default_value_t = 2)]
    k: usize,
    /// Times the string was sent.
    #[arg(long)]
    reps: Option<u64>,
    /// Count windows of the circular string, `T = G * reps`.
    #[arg(long)]
    paper_compat: bool,
    /// Mean rate per label as `sum C / sum T`.
    #[arg(long)]
    weighted: bool,
    #[arg(long)]
    #[serde(skip)]
    out: Option<PathBuf>,
    /// Also write per-label fluctuation statistics as JSON.
    #[arg(long)]
    #[serde(skip)]
    summary: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
struct LabelSummary {
    label: String,
    present: bool,
    max_rate: f64,
    min_rate: f64,
    mean_rate: f64,
    abs_discrepancy: f64,
    rel_fluctuation: f64,
    argmax: Option<String>,
    argmin: Option<String>,
}

fn label_summaries(table: &RateTable, stats: &[LabelFluctuation], names: &[String]) -> Vec<LabelSummary> {
    stats
        .iter()
        .map(|s| LabelSummary {
            label: names[s.label].clone(),
            present: s.present,
            max_rate: s.max_rate,
            min_rate: s.min_rate,
            mean_rate: s.mean_rate,
            abs_discrepancy: s.abs_discrepancy,
            rel_fluctuation: s.rel_fluctuation,
            argmax: s.argmax.map(|i| table.key(i).name(names)),
            argmin: s.argmin.map(|i| table.key(i).name(names)),
        })
        .collect()
}

pub fn characterize(a: CharacterizeArgs) -> Result<()> {
    let config = load_config(a.config.as_deref())?;
    let names = label_names(a.names.as_deref(), config.as_ref());
    let mut manifest = RunManifest::new("characterize", &a)?.config(a.config.as_deref())?;

    let (table, g, discarded) = match (&a.seq, &a.counts) {
        (Some(seq_path), None) => {
            let clicks = a.clicks.as_ref().expect("clap enforces --clicks");
            let reps = a
                .reps
                .or(config.as_ref().map(|c| c.experiment.repetitions))
                .ok_or_else(|| usage("--reps is required without a config file"))?;
            let seq = read_sequence(read_text(seq_path)?.as_bytes()).with_context(|| format!("sequence {}", seq_path.display()))?;
            let mode = if a.paper_compat { CountMode::Circular } else { CountMode::Exact };
            let transmissions = count_transmissions(&seq, names.len(), a.k, reps, mode)?;
            let mut acc = ClickAccumulator::new(&seq, transmissions)?;
            let f = File::open(clicks).with_context(|| format!("opening {}", clicks.display()))?;
            for_each_event(BufReader::new(f), |line, e| acc.push(e.cycle, e.slot as u64, Some(line)))
                .with_context(|| format!("click log {}", clicks.display()))?;
            let counters = acc.finish();
            manifest = manifest.input(seq_path)?.input(clicks)?;
            (click_rates(&counters)?, Some(counters.g.clone()), counters.discarded_clicks)
        }
        (None, Some(counts)) => {
            let f = File::open(counts).with_context(|| format!("opening {}", counts.display()))?;
            let ct = read_count_table(f, &names, a.k).with_context(|| format!("count table {}", counts.display()))?;
            let g: Option<Vec<u64>> = ct.g.iter().map(|g| g.map(|x| x.round() as u64)).collect();
            manifest = manifest.input(counts)?;
            (RateTable::from_counts(names.len(), a.k, ct.t, ct.c)?, g, 0)
        }
        _ => return Err(usage("give either --seq with --clicks, or --counts")),
    };

    let stats = fluctuation_stats(&table, a.weighted);
    for s in label_summaries(&table, &stats, &names).iter().filter(|s| s.present) {
        eprintln!(
            "{:>6}: max {:.4e} ({}), min {:.4e} ({}), discrepancy {:.3e}, relative {:.2}%",
            s.label,
            s.max_rate,
            s.argmax.as_deref().unwrap_or("-"),
            s.min_rate,
            s.argmin.as_deref().unwrap_or("-"),
            s.abs_discrepancy,
            100.0 * s.rel_fluctuation
        );
    }
    if discarded > 0 {
        eprintln!("{discarded} clicks before the first full window were not counted");
    }
    write_csv(a.out.as_deref(), &manifest, &rate_table_csv(&table, g.as_deref(), &names))?;
    if let Some(path) = &a.summary {
        #[derive(Serialize)]
        struct Summary {
            weighted: bool,
            discarded_clicks: u64,
            labels: Vec<LabelSummary>,
        }
        let body = Summary { weighted: a.weighted, discarded_clicks: discarded, labels: label_summaries(&table, &stats, &names) };
        write_json(Some(path), &manifest, body)?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
enum TargetArg {
    #[value(alias = "A")]
    Alice,
    #[value(alias = "B")]
    Bob,
}

#[derive(Debug, Args, Serialize)]
pub struct CrosscycleArgs {
    /// Four-detector click log.
    #[arg(long, conflicts_with = "table")]
    clicks: Option<PathBuf>,
    /// Alice's symbol string [default: shipped fixture].
    #[arg(long = "str-a", alias = "strA")]
    str_a: Option<PathBuf>,
    /// Bob's symbol string [default: shipped fixture].
    #[arg(long = "str-b", alias = "strB")]
    str_b: Option<PathBuf>,
    /// Ready-made `pattern,G,C` table with block-averaged C.
    #[arg(long)]
    table: Option<PathBuf>,
    /// Cycles per block.
    #[arg(long)]
    nb: u64,
    /// Number of blocks (with --clicks).
    #[arg(long, default_value_t = 1)]
    blocks: u64,
    /// Accepted detector pairs, `PSI+ D1 D3` per line.
    #[arg(long)]
    patterns: Option<PathBuf>,
    /// Source whose label history keys the groups.
    #[arg(long, value_enum, default_value = "alice")]
    target: TargetArg,
    #[arg(long, default_value_t = 2)]
    k: usize,
    #[arg(long)]
    #[serde(skip)]
    out: Option<PathBuf>,
}

fn symbols(path: Option<&PathBuf>, fixture: &str) -> Result<Vec<MdiSymbol>> {
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

fn crosscycle_csv(table: &RateTable, g: &[u64], per_block: &[Vec<u64>], names: &[String]) -> String {
    let mut s = String::from("pattern,G,T,C_mean");
    for b in 0..per_block.len() {
        write!(s, ",C_{b}").unwrap();
    }
    s.push_str(",R\n");
    for i in 0..g.len() {
        write!(s, "{},{},{},{}", table.key(i).name(names), g[i], table.t[i], table.c[i]).unwrap();
        for block in per_block {
            write!(s, ",{}", block[i]).unwrap();
        }
        let r = table.r[i].map(|r| format!("{r:.6e}")).unwrap_or_default();
        writeln!(s, ",{r}").unwrap();
    }
    s
}

pub fn crosscycle(a: CrosscycleArgs) -> Result<()> {
    let names = fixtures::mdi_names();
    let mut manifest = RunManifest::new("crosscycle", &a)?;
    let (table, g, per_block) = match (&a.clicks, &a.table) {
        (Some(clicks), None) => {
            let sym_a = symbols(a.str_a.as_ref(), fixtures::MDI_ALICE)?;
            let sym_b = symbols(a.str_b.as_ref(), fixtures::MDI_BOB)?;
            let target = match a.target {
                TargetArg::Alice => Target::Alice,
                TargetArg::Bob => Target::Bob,
            };
            let groups = slot_groups(&sym_a, &sym_b, a.k, target)?;
            let bsm = match &a.patterns {
                Some(p) => BsmPatternTable::from_path(p).with_context(|| format!("patterns {}", p.display()))?,
                None => BsmPatternTable::default(),
            };
            let f = File::open(clicks).with_context(|| format!("opening {}", clicks.display()))?;
            let events = read_events(BufReader::new(f)).with_context(|| format!("click log {}", clicks.display()))?;
            let counts = cross_cycle_coincidences(&events, &groups, &bsm, BlockConfig::new(a.nb, a.blocks)?)?;
            if counts.out_of_range_events > 0 {
                eprintln!("{} events outside the blocks or the string were ignored", counts.out_of_range_events);
            }
            if counts.invalid_slot_events > 0 {
                eprintln!("{} clicks on basis-mismatched slots were ignored", counts.invalid_slot_events);
            }
            manifest = manifest.input(clicks)?;
            for p in [&a.str_a, &a.str_b, &a.patterns].into_iter().flatten() {
                manifest = manifest.input(p)?;
            }
            (cross_cycle_rates(&counts.c_mean, &groups.g, a.nb)?, groups.g, counts.per_block)
        }
        (None, Some(path)) => {
            if a.k != 2 {
                return Err(usage("--table files are keyed by two-label patterns"));
            }
            let (g, c) = parse_table_fixture(&read_text(path)?).with_context(|| format!("table {}", path.display()))?;
            manifest = manifest.input(path)?;
            (cross_cycle_rates(&c, &g, a.nb)?, g, Vec::new())
        }
        _ => return Err(usage("give either --clicks or --table")),
    };
    for s in fluctuation_stats(&table, false).iter().filter(|s| s.present) {
        eprintln!(
            "{:>6}: max {:.4e}, min {:.4e}, discrepancy {:.3e}, relative {:.1}%",
            names[s.label],
            s.max_rate,
            s.min_rate,
            s.abs_discrepancy,
            100.0 * s.rel_fluctuation
        );
    }
    write_csv(a.out.as_deref(), &manifest, &crosscycle_csv(&table, &g, &per_block, &names))
}
