//! Sample-size tables as CSV, and the on-disk cache of computed rows.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use binsize_core::{Criterion, ALGORITHM_VERSION};
use serde::Serialize;

pub const HEADER: [&str; 7] = ["criterion", "eps_abs", "eps_rel", "delta", "a", "b", "n"];

/// Formats like C's `%.17g`: 17 significant digits, trailing zeros removed.
/// Every finite `f64` survives a write/parse round trip unchanged.
pub fn fmt17(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    let sci = format!("{:.16e}", x);
    let (mant, exp) = sci.split_once('e').expect("scientific notation");
    let exp: i32 = exp.parse().expect("integer exponent");
    let negative = mant.starts_with('-');
    let digits: String = mant.chars().filter(|c| c.is_ascii_digit()).collect();
    let sign = if negative { "-" } else { "" };
    if (-5..17).contains(&exp) {
        let s = if exp >= 0 {
            let (int, frac) = digits.split_at(exp as usize + 1);
            format!("{int}.{frac}")
        } else {
            format!("0.{}{}", "0".repeat((-exp - 1) as usize), digits)
        };
        let s = s.trim_end_matches('0').trim_end_matches('.');
        format!("{sign}{s}")
    } else {
        let (first, rest) = digits.split_at(1);
        let rest = rest.trim_end_matches('0');
        if rest.is_empty() {
            format!("{sign}{first}e{exp}")
        } else {
            format!("{sign}{first}.{rest}e{exp}")
        }
    }
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt17).unwrap_or_default()
}

fn parse_opt(s: &str) -> Result<Option<f64>> {
    if s.is_empty() {
        Ok(None)
    } else {
        Ok(Some(
            s.parse().with_context(|| format!("bad number {s:?}"))?,
        ))
    }
}

pub fn criterion_name(c: Criterion) -> &'static str {
    c.short_name()
}

pub fn parse_criterion(s: &str) -> Result<Criterion> {
    match s {
        "abs" => Ok(Criterion::Absolute),
        "rel" => Ok(Criterion::Relative),
        "mixed" => Ok(Criterion::Mixed),
        _ => bail!("unknown criterion {s:?}"),
    }
}

/// One `(criterion, parameters) → n` line of a table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TableRow {
    pub criterion: Criterion,
    pub eps_abs: Option<f64>,
    pub eps_rel: Option<f64>,
    pub delta: f64,
    pub a: f64,
    pub b: f64,
    pub n: u64,
}

impl TableRow {
    /// The parameter fields as written to CSV; doubles as the cache key.
    pub fn key_fields(&self) -> [String; 6] {
        [
            criterion_name(self.criterion).to_string(),
            fmt_opt(self.eps_abs),
            fmt_opt(self.eps_rel),
            fmt17(self.delta),
            fmt17(self.a),
            fmt17(self.b),
        ]
    }

    pub fn fields(&self) -> Vec<String> {
        let mut v = self.key_fields().to_vec();
        v.push(self.n.to_string());
        v
    }

    pub fn from_fields(f: &[&str]) -> Result<TableRow> {
        if f.len() < 7 {
            bail!("expected 7 fields, found {}", f.len());
        }
        Ok(TableRow {
            criterion: parse_criterion(f[0])?,
            eps_abs: parse_opt(f[1])?,
            eps_rel: parse_opt(f[2])?,
            delta: f[3]
                .parse()
                .with_context(|| format!("bad delta {:?}", f[3]))?,
            a: f[4].parse().with_context(|| format!("bad a {:?}", f[4]))?,
            b: f[5].parse().with_context(|| format!("bad b {:?}", f[5]))?,
            n: f[6].parse().with_context(|| format!("bad n {:?}", f[6]))?,
        })
    }

    /// Ordering used for table output: by the parameter tuple.
    pub fn sort_key(&self) -> (u8, [u64; 5]) {
        let k = |x: Option<f64>| x.map_or(0, |v| v.to_bits().wrapping_add(1));
        (
            self.criterion as u8,
            [
                k(self.eps_abs),
                k(self.eps_rel),
                self.delta.to_bits(),
                self.a.to_bits(),
                self.b.to_bits(),
            ],
        )
    }
}

pub fn write_csv<W: Write>(out: W, rows: &[TableRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(HEADER)?;
    for r in rows {
        w.write_record(r.fields())?;
    }
    w.flush()?;
    Ok(())
}

/// Previously computed rows, keyed by parameters and algorithm version.
pub struct Cache {
    path: PathBuf,
    entries: BTreeMap<([String; 6], String), TableRow>,
    dirty: bool,
}

impl Cache {
    pub fn open(path: &Path) -> Result<Cache> {
        let mut entries = BTreeMap::new();
        if path.exists() {
            let file = File::open(path)
                .with_context(|| format!("cannot read cache {}", path.display()))?;
            let mut r = csv::Reader::from_reader(file);
            for rec in r.records() {
                let rec = rec.with_context(|| format!("malformed cache {}", path.display()))?;
                let f: Vec<&str> = rec.iter().collect();
                if f.len() != 8 {
                    bail!("malformed cache {}: expected 8 fields", path.display());
                }
                let row = TableRow::from_fields(&f[..7])
                    .with_context(|| format!("malformed cache {}", path.display()))?;
                entries.insert((row.key_fields(), f[7].to_string()), row);
            }
        }
        Ok(Cache {
            path: path.to_path_buf(),
            entries,
            dirty: false,
        })
    }

    pub fn get(&self, probe: &TableRow) -> Option<u64> {
        self.entries
            .get(&(probe.key_fields(), ALGORITHM_VERSION.to_string()))
            .map(|r| r.n)
    }

    pub fn insert(&mut self, row: TableRow) {
        self.entries
            .insert((row.key_fields(), ALGORITHM_VERSION.to_string()), row);
        self.dirty = true;
    }

    pub fn save(&self) -> Result<()> {
        if !self.dirty {
            return Ok(());
        }
        let file = File::create(&self.path)
            .with_context(|| format!("cannot write cache {}", self.path.display()))?;
        let mut w = csv::Writer::from_writer(file);
        let mut header: Vec<&str> = HEADER.to_vec();
        header.push("algorithm");
        w.write_record(&header)?;
        for ((_, version), row) in &self.entries {
            let mut f = row.fields();
            f.push(version.clone());
            w.write_record(&f)?;
        }
        w.flush()
            .with_context(|| format!("cannot write cache {}", self.path.display()))?;
        Ok(())
    }
}
