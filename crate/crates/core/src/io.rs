//! Plain-text file formats.
//!
//! * sequence file: one label id (or MDI symbol) per line
//! * detection log: `cycle,slot,detector` per line, sorted
//! * count and rate tables: CSV with a header row
//!
//! Lines starting with `#` are ignored on input.

use std::fmt::Write as _;
use std::io::{BufRead, Write};

use crate::characterize::{error_bars, RateTable, LOW_CONFIDENCE_T};
use crate::error::{Error, Result};
use crate::model::PatternKey;
use crate::sim::{ClickStream, DetectionEvent};

fn content_lines<R: BufRead>(reader: R) -> impl Iterator<Item = Result<(usize, String)>> {
    reader.lines().enumerate().filter_map(|(i, line)| match line {
        Err(e) => Some(Err(Error::Io(e))),
        Ok(l) => {
            let t = l.trim();
            if t.is_empty() || t.starts_with('#') {
                None
            } else {
                Some(Ok((i + 1, t.to_string())))
            }
        }
    })
}

pub fn read_sequence<R: BufRead>(reader: R) -> Result<Vec<usize>> {
    content_lines(reader)
        .map(|l| {
            let (n, s) = l?;
            s.parse::<usize>().map_err(|_| Error::data_at(n, format!("invalid label id '{s}'")))
        })
        .collect()
}

pub fn write_sequence<W: Write>(mut w: W, seq: &[usize]) -> Result<()> {
    let mut buf = String::with_capacity(seq.len() * 2);
    for l in seq {
        writeln!(buf, "{l}").expect("string write");
    }
    w.write_all(buf.as_bytes())?;
    Ok(())
}

fn parse_event(line: usize, s: &str) -> Result<DetectionEvent> {
    let mut parts = s.split(',');
    let mut field = |name: &str| -> Result<u64> {
        parts
            .next()
            .map(str::trim)
            .ok_or_else(|| Error::data_at(line, format!("missing {name}")))?
            .parse::<u64>()
            .map_err(|_| Error::data_at(line, format!("invalid {name}")))
    };
    let cycle = field("cycle")?;
    let slot = field("slot")?;
    let detector = field("detector")?;
    if parts.next().is_some() {
        return Err(Error::data_at(line, "expected `cycle,slot,detector`"));
    }
    let slot = u32::try_from(slot).map_err(|_| Error::data_at(line, "slot too large"))?;
    let detector = u8::try_from(detector).map_err(|_| Error::data_at(line, "detector too large"))?;
    Ok(DetectionEvent { cycle, slot, detector })
}

/// Calls `f(line, event)` for every event, checking strict ordering.
pub fn for_each_event<R: BufRead>(reader: R, mut f: impl FnMut(usize, DetectionEvent) -> Result<()>) -> Result<()> {
    let mut prev: Option<DetectionEvent> = None;
    for l in content_lines(reader) {
        let (n, s) = l?;
        let e = parse_event(n, &s)?;
        if let Some(p) = prev {
            if e <= p {
                return Err(Error::data_at(n, "events must be strictly sorted by (cycle, slot, detector)"));
            }
        }
        prev = Some(e);
        f(n, e)?;
    }
    Ok(())
}

pub fn read_events<R: BufRead>(reader: R) -> Result<Vec<DetectionEvent>> {
    let mut out = Vec::new();
    for_each_event(reader, |_, e| {
        out.push(e);
        Ok(())
    })?;
    Ok(out)
}

pub fn write_events<W: Write>(mut w: W, stream: &ClickStream) -> Result<()> {
    let mut buf = String::with_capacity(stream.events.len() * 12);
    for e in &stream.events {
        writeln!(buf, "{},{},{}", e.cycle, e.slot, e.detector).expect("string write");
    }
    w.write_all(buf.as_bytes())?;
    Ok(())
}

fn csv_reader<R: std::io::Read>(r: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).flexible(false).from_reader(r)
}

fn header_index(headers: &csv::StringRecord, name: &str) -> Result<usize> {
    headers.iter().position(|h| h == name).ok_or_else(|| Error::data(format!("missing column '{name}'")))
}

fn num(rec: &csv::StringRecord, i: usize, line: usize) -> Result<f64> {
    rec[i].parse::<f64>().map_err(|_| Error::data_at(line, format!("invalid number '{}'", &rec[i])))
}

/// Group counts read from a `pattern,...,T,C` table. `G` is optional.
#[derive(Debug, Clone, PartialEq)]
pub struct CountTable {
    pub g: Vec<Option<f64>>,
    pub t: Vec<f64>,
    pub c: Vec<f64>,
}

/// Reads `pattern,G,T,C` (`G` optional). Patterns not listed get `T = 0`.
pub fn read_count_table<R: std::io::Read>(r: R, names: &[String], k: usize) -> Result<CountTable> {
    let mut rdr = csv_reader(r);
    let headers = rdr.headers()?.clone();
    let ip = header_index(&headers, "pattern")?;
    let it = header_index(&headers, "T")?;
    let ic = header_index(&headers, "C")?;
    let ig = headers.iter().position(|h| h == "G");
    let n = crate::model::num_groups(names.len(), k)?;
    let mut out = CountTable { g: vec![None; n], t: vec![0.0; n], c: vec![0.0; n] };
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        let key = PatternKey::parse(&rec[ip], names, k).map_err(|e| Error::data_at(line, e.to_string()))?;
        out.t[key.index] = num(&rec, it, line)?;
        out.c[key.index] = num(&rec, ic, line)?;
        if let Some(ig) = ig.filter(|&ig| !rec[ig].is_empty()) {
            out.g[key.index] = Some(num(&rec, ig, line)?);
        }
    }
    Ok(out)
}

/// Reads `block,pattern,T,C` rows into one rate table per block, in block order.
pub fn read_block_table<R: std::io::Read>(r: R, names: &[String], k: usize) -> Result<Vec<RateTable>> {
    let mut rdr = csv_reader(r);
    let headers = rdr.headers()?.clone();
    let ib = header_index(&headers, "block")?;
    let ip = header_index(&headers, "pattern")?;
    let it = header_index(&headers, "T")?;
    let ic = header_index(&headers, "C")?;
    let n = crate::model::num_groups(names.len(), k)?;
    let mut blocks: std::collections::BTreeMap<u64, (Vec<f64>, Vec<f64>)> = Default::default();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        let b = rec[ib].parse::<u64>().map_err(|_| Error::data_at(line, "invalid block index"))?;
        let key = PatternKey::parse(&rec[ip], names, k).map_err(|e| Error::data_at(line, e.to_string()))?;
        let entry = blocks.entry(b).or_insert_with(|| (vec![0.0; n], vec![0.0; n]));
        entry.0[key.index] = num(&rec, it, line)?;
        entry.1[key.index] = num(&rec, ic, line)?;
    }
    blocks.into_values().map(|(t, c)| RateTable::from_counts(names.len(), k, t, c)).collect()
}

pub fn block_table_csv(blocks: &[RateTable], names: &[String]) -> String {
    let mut s = String::from("block,pattern,T,C\n");
    for (b, table) in blocks.iter().enumerate() {
        for i in 0..table.t.len() {
            if table.t[i] > 0.0 {
                writeln!(s, "{b},{},{},{}", table.key(i).name(names), table.t[i], table.c[i]).expect("string write");
            }
        }
    }
    s
}

/// `pattern,G,T,C,R,se,low_confidence`; absent groups have empty `R` and `se`.
pub fn rate_table_csv(table: &RateTable, g: Option<&[u64]>, names: &[String]) -> String {
    let se = error_bars(table);
    let low = table.low_confidence(LOW_CONFIDENCE_T);
    let mut s = String::from("pattern,G,T,C,R,se,low_confidence\n");
    for i in 0..table.t.len() {
        let g = g.map(|g| g[i].to_string()).unwrap_or_default();
        let r = table.r[i].map(|r| format!("{r:.6e}")).unwrap_or_default();
        let e = se[i].map(|e| format!("{e:.6e}")).unwrap_or_default();
        writeln!(s, "{},{g},{},{},{r},{e},{}", table.key(i).name(names), table.t[i], table.c[i], low[i])
            .expect("string write");
    }
    s
}
