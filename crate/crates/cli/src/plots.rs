use std::fs::File;
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Args, Subcommand};
use corrkit_core::characterize::RateTable;
use corrkit_core::io::read_count_table;
use corrkit_core::photon::{default_grid, linearity_report};
use corrkit_core::report::{bar_groups, bars_csv, bars_svg, linearity_csv, linearity_series, series_csv, series_svg, Series};
use serde::Serialize;

use crate::args::{label_names, parse_f64_list, read_text};
use crate::manifest::{write_csv, RunManifest};
use crate::usage;

#[derive(Debug, Subcommand)]
pub enum ReportCommand {
    /// Click rates grouped by current label.
    Bars(BarsArgs),
    /// Re-plot a key-rate CSV written by `curve`.
    Curve(CurvePlotArgs),
    /// Click probability against mean photon number.
    Linearity(LinearityPlotArgs),
}

#[derive(Debug, Subcommand)]
pub enum StatsCommand {
    /// Departure of the click model from a straight line.
    Linearity(LinearityArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct BarsArgs {
    /// Rate table with `pattern,T,C` columns.
    #[arg(long)]
    rates: PathBuf,
    #[arg(long)]
    names: Option<String>,
    #[arg(long, default_value_t = 2)]
    k: usize,
    #[arg(long, default_value = "Click rate by pattern")]
    title: String,
    #[arg(long)]
    #[serde(skip)]
    svg: PathBuf,
    #[arg(long)]
    #[serde(skip)]
    csv: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct CurvePlotArgs {
    /// Wide CSV, first column distance, one column per curve.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value = "Secret key rate")]
    title: String,
    #[arg(long)]
    #[serde(skip)]
    svg: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct LinearityPlotArgs {
    /// Comma-separated efficiencies, one curve each.
    #[arg(long, default_value = "0.01,0.05,0.1,0.5,1")]
    etas: String,
    #[arg(long, default_value_t = 100)]
    points: usize,
    #[arg(long)]
    #[serde(skip)]
    svg: PathBuf,
    #[arg(long)]
    #[serde(skip)]
    csv: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct LinearityArgs {
    #[arg(long)]
    eta: f64,
    /// Grid points on (0, 1).
    #[arg(long, default_value_t = 10)]
    points: usize,
    #[arg(long)]
    #[serde(skip)]
    out: Option<PathBuf>,
}

pub fn report(cmd: ReportCommand) -> Result<()> {
    match cmd {
        ReportCommand::Bars(a) => bars(a),
        ReportCommand::Curve(a) => curve_plot(a),
        ReportCommand::Linearity(a) => linearity_plot(a),
    }
}

pub fn stats(cmd: StatsCommand) -> Result<()> {
    match cmd {
        StatsCommand::Linearity(a) => {
            if a.points == 0 {
                return Err(usage("--points must be >= 1"));
            }
            let report = linearity_report(a.eta, &default_grid(a.points))?;
            eprintln!(
                "eta = {}: slope {:.6e}, max relative deviation {:.3}%",
                a.eta,
                report.best_fit_slope,
                100.0 * report.max_relative_deviation
            );
            let manifest = RunManifest::new("stats linearity", &a)?;
            write_csv(a.out.as_deref(), &manifest, &linearity_csv(&report))
        }
    }
}

fn bars(a: BarsArgs) -> Result<()> {
    let names = label_names(a.names.as_deref(), None);
    let f = File::open(&a.rates).with_context(|| format!("opening {}", a.rates.display()))?;
    let ct = read_count_table(f, &names, a.k).with_context(|| format!("rate table {}", a.rates.display()))?;
    let table = RateTable::from_counts(names.len(), a.k, ct.t, ct.c)?;
    let groups = bar_groups(&table, &names);
    std::fs::write(&a.svg, bars_svg(&groups, &a.title)).with_context(|| format!("writing {}", a.svg.display()))?;
    if let Some(p) = &a.csv {
        let manifest = RunManifest::new("report bars", &a)?.input(&a.rates)?;
        write_csv(Some(p), &manifest, &bars_csv(&groups))?;
    }
    Ok(())
}

/// Reads the wide CSV written by `curve`, skipping comment lines.
fn read_wide_csv(text: &str) -> Result<(String, Vec<Series>)> {
    let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#'));
    let header: Vec<&str> = lines.next().ok_or_else(|| usage("empty curve file"))?.split(',').collect();
    if header.len() < 2 {
        return Err(usage("curve file needs a distance column and at least one series"));
    }
    let mut series: Vec<Series> =
        header[1..].iter().map(|n| Series { name: n.to_string(), points: Vec::new() }).collect();
    for (i, line) in lines.enumerate() {
        let vals = parse_f64_list(line).with_context(|| format!("curve file row {}", i + 1))?;
        if vals.len() != header.len() {
            return Err(usage(format!("curve file row {}: expected {} columns", i + 1, header.len())));
        }
        for (s, &y) in series.iter_mut().zip(&vals[1..]) {
            s.points.push((vals[0], y));
        }
    }
    Ok((header[0].to_string(), series))
}

fn curve_plot(a: CurvePlotArgs) -> Result<()> {
    let (x_name, series) = read_wide_csv(&read_text(&a.input)?)?;
    let svg = series_svg(&series, &a.title, &x_name, "bits per pulse");
    std::fs::write(&a.svg, svg).with_context(|| format!("writing {}", a.svg.display()))?;
    Ok(())
}

fn linearity_plot(a: LinearityPlotArgs) -> Result<()> {
    if a.points == 0 {
        return Err(usage("--points must be >= 1"));
    }
    let grid = default_grid(a.points);
    let reports = parse_f64_list(&a.etas)?
        .into_iter()
        .map(|eta| linearity_report(eta, &grid))
        .collect::<corrkit_core::Result<Vec<_>>>()?;
    let series = linearity_series(&reports);
    let svg = series_svg(&series, "Click probability", "mean photon number", "P(click)");
    std::fs::write(&a.svg, svg).with_context(|| format!("writing {}", a.svg.display()))?;
    if let Some(p) = &a.csv {
        let manifest = RunManifest::new("report linearity", &a)?;
        write_csv(Some(p), &manifest, &series_csv(&series, "m"))?;
    }
    Ok(())
}
