mod table;

use std::fs::File;
use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use binsize_core::{
    complement_at, configure_threads, coverage_window, exact_small_coverage, grid_min_coverage,
    min_coverage, min_sample_size_with, monte_carlo_coverage, sweep, trace, Criterion, Error,
    ErrorSpec, Execution, ParamInterval, SampleSizeReport, SearchOptions, SweepOutcome,
    DEFAULT_MAX_N,
};
use clap::{Args, Parser, Subcommand, ValueEnum};
use num_traits::ToPrimitive;
use serde_json::json;

use table::{fmt17, Cache, TableRow};

const SCHEMA: u32 = 1;

#[derive(Parser)]
#[command(
    name = "binsize",
    version,
    about = "Exact minimum sample sizes for a binomial proportion"
)]
struct Cli {
    /// Worker threads for parallel sweeps (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Kind {
    Abs,
    Rel,
    Mixed,
}

impl Kind {
    fn criterion(self) -> Criterion {
        match self {
            Kind::Abs => Criterion::Absolute,
            Kind::Rel => Criterion::Relative,
            Kind::Mixed => Criterion::Mixed,
        }
    }
}

#[derive(Args, Clone)]
struct Margins {
    /// Margin of error (absolute for `abs`, relative for `rel`).
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long = "eps-abs")]
    eps_abs: Option<f64>,
    #[arg(long = "eps-rel")]
    eps_rel: Option<f64>,
}

#[derive(Args, Clone)]
struct Range {
    /// Lower end of the interval known to contain p.
    #[arg(long)]
    a: Option<f64>,
    /// Upper end of the interval known to contain p.
    #[arg(long)]
    b: Option<f64>,
}

#[derive(Args, Clone, Copy)]
struct Format {
    #[arg(long, conflicts_with = "csv")]
    json: bool,
    #[arg(long)]
    csv: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Smallest n meeting the coverage requirement.
    Minsize {
        kind: Kind,
        #[command(flatten)]
        margins: Margins,
        #[arg(long)]
        delta: f64,
        #[command(flatten)]
        range: Range,
        /// Report as JSON (the default).
        #[arg(long, conflicts_with_all = ["csv", "text"])]
        json: bool,
        /// One table row as CSV.
        #[arg(long, conflicts_with = "text")]
        csv: bool,
        /// A short human-readable summary.
        #[arg(long)]
        text: bool,
        #[arg(long = "max-n", default_value_t = DEFAULT_MAX_N)]
        max_n: u64,
        /// Record the result in this cache file.
        #[arg(long)]
        cache: Option<PathBuf>,
        /// Include the failure witness for every n below the answer (JSON).
        #[arg(long)]
        proof: bool,
    },
    /// Coverage at a point, the minimum over the interval, or a trace.
    Coverage {
        kind: Kind,
        #[arg(long)]
        n: u64,
        #[command(flatten)]
        margins: Margins,
        /// Confidence parameter; with --min, flags PASS or FAIL.
        #[arg(long)]
        delta: Option<f64>,
        #[command(flatten)]
        range: Range,
        #[command(flatten)]
        format: Format,
        #[arg(long)]
        at: Option<f64>,
        #[arg(long)]
        min: bool,
        /// Every candidate point with its coverage, as CSV.
        #[arg(long)]
        trace: bool,
    },
    /// Sample sizes for every combination of the listed parameters.
    Table {
        kind: Kind,
        #[arg(long, value_delimiter = ',')]
        eps: Vec<f64>,
        #[arg(long = "eps-abs", value_delimiter = ',')]
        eps_abs: Vec<f64>,
        #[arg(long = "eps-rel", value_delimiter = ',')]
        eps_rel: Vec<f64>,
        #[arg(long, value_delimiter = ',', required = true)]
        delta: Vec<f64>,
        #[command(flatten)]
        range: Range,
        #[command(flatten)]
        format: Format,
        #[arg(long)]
        cache: Option<PathBuf>,
        /// Write the table here instead of standard output.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long = "max-n", default_value_t = DEFAULT_MAX_N)]
        max_n: u64,
    },
    /// Cross-check one n with independent oracles.
    Verify {
        #[arg(long, value_enum, default_value = "abs")]
        criterion: Kind,
        #[arg(long)]
        n: u64,
        #[command(flatten)]
        margins: Margins,
        #[arg(long)]
        delta: Option<f64>,
        #[command(flatten)]
        range: Range,
        /// Points in the dense grid scan.
        #[arg(long, default_value_t = 100_000)]
        grid: usize,
        /// Monte Carlo trials (skipped when absent).
        #[arg(long)]
        mc: Option<u64>,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Point for the Monte Carlo check (default: the minimizing candidate).
        #[arg(long)]
        at: Option<f64>,
        #[arg(long)]
        json: bool,
    },
}

/// A command-line mistake that the core library did not see.
#[derive(Debug)]
struct Usage(String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    Usage(msg.into()).into()
}

/// Some checks in `verify` failed; the report has already been printed.
#[derive(Debug)]
struct ChecksFailed;

impl std::fmt::Display for ChecksFailed {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("verification failed")
    }
}

impl std::error::Error for ChecksFailed {}

fn exit_code(e: &anyhow::Error) -> u8 {
    if e.downcast_ref::<Usage>().is_some() {
        return 2;
    }
    if e.downcast_ref::<ChecksFailed>().is_some() {
        return 4;
    }
    match e.downcast_ref::<Error>() {
        Some(Error::InvalidArgument(_)) => 2,
        Some(Error::ResourceLimit { .. }) => 3,
        _ => 1,
    }
}

fn build_spec(kind: Kind, m: &Margins, delta: f64) -> Result<ErrorSpec> {
    let (ea, er) = match kind {
        Kind::Abs => (m.eps.or(m.eps_abs), None),
        Kind::Rel => (None, m.eps.or(m.eps_rel)),
        Kind::Mixed => {
            if m.eps.is_some() {
                return Err(usage(
                    "the mixed criterion takes --eps-abs and --eps-rel, not --eps",
                ));
            }
            (m.eps_abs, m.eps_rel)
        }
    };
    Ok(ErrorSpec::from_parts(kind.criterion(), ea, er, delta)?)
}

fn build_interval(kind: Kind, r: &Range) -> Result<ParamInterval> {
    match (r.a, r.b) {
        (Some(a), Some(b)) => Ok(ParamInterval::new(a, b)?),
        _ if kind == Kind::Rel => Err(usage(
            "the relative criterion needs an explicit interval: give --a (> 0) and --b",
        )),
        (a, b) => Ok(ParamInterval::new(a.unwrap_or(0.0), b.unwrap_or(1.0))?),
    }
}

fn row_of(spec: &ErrorSpec, iv: &ParamInterval, n: u64) -> TableRow {
    TableRow {
        criterion: spec.kind(),
        eps_abs: spec.eps_abs(),
        eps_rel: spec.eps_rel(),
        delta: spec.delta(),
        a: iv.a(),
        b: iv.b(),
        n,
    }
}

fn search_opts(max_n: u64) -> SearchOptions {
    SearchOptions {
        max_n,
        ..SearchOptions::default()
    }
}

fn print_json(v: &serde_json::Value) -> Result<()> {
    let mut out = io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, v)?;
    writeln!(out)?;
    Ok(())
}

fn report_json(r: &SampleSizeReport, with_proof: bool) -> Result<serde_json::Value> {
    let mut v = serde_json::to_value(r)?;
    let obj = v.as_object_mut().expect("report is an object");
    if !with_proof {
        obj.remove("proof");
    }
    obj.insert("schema".into(), json!(SCHEMA));
    Ok(v)
}

fn opt_n(x: Option<u64>) -> String {
    x.map_or_else(|| "n/a".to_string(), |v| v.to_string())
}

#[allow(clippy::too_many_arguments)]
fn cmd_minsize(
    kind: Kind,
    margins: &Margins,
    delta: f64,
    range: &Range,
    csv: bool,
    text: bool,
    max_n: u64,
    cache: Option<PathBuf>,
    proof: bool,
) -> Result<()> {
    let spec = build_spec(kind, margins, delta)?;
    let iv = build_interval(kind, range)?;
    let report = min_sample_size_with(&spec, &iv, &search_opts(max_n))?;
    let row = row_of(&spec, &iv, report.n_min);
    if let Some(path) = cache {
        let mut c = Cache::open(&path)?;
        c.insert(row);
        c.save()?;
    }
    if csv {
        return table::write_csv(io::stdout().lock(), &[row]);
    }
    if !text {
        return print_json(&report_json(&report, proof)?);
    }
    let s = &report.summary_at_n;
    println!("n_min: {}", report.n_min);
    println!(
        "min coverage at n_min: {} at p = {} ({})",
        s.min_coverage,
        s.argmin_p_exact,
        s.argmin_origin.name()
    );
    if let Some(w) = &report.fail_witness_at_n_minus_1 {
        println!(
            "witness at n = {}: coverage {} at p = {}",
            w.n, w.coverage, w.p_exact
        );
    }
    println!(
        "baselines: normal {}, chernoff {}, bernoulli {}",
        opt_n(report.baseline_normal),
        opt_n(report.baseline_chernoff),
        opt_n(report.baseline_bernoulli)
    );
    println!(
        "scanned {} sample sizes, {} full sweeps, {} ms",
        report.ns_scanned, report.full_sweeps, report.runtime_ms
    );
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_coverage(
    kind: Kind,
    n: u64,
    margins: &Margins,
    delta: Option<f64>,
    range: &Range,
    format: Format,
    at: Option<f64>,
    min: bool,
    trace_all: bool,
) -> Result<()> {
    // δ does not enter the coverage itself; a placeholder keeps the spec valid.
    let spec = build_spec(kind, margins, delta.unwrap_or(0.5))?;
    if [at.is_some(), min, trace_all]
        .iter()
        .filter(|&&x| x)
        .count()
        != 1
    {
        return Err(usage("choose exactly one of --at P, --min or --trace"));
    }
    if let Some(p) = at {
        let w = coverage_window(n, &spec, p)?;
        let c = complement_at(n, &spec, p)?;
        let value = 1.0 - c.value;
        if format.json {
            return print_json(&json!({
                "schema": SCHEMA, "n": n, "p": p, "g": w.g, "h": w.h,
                "coverage": value, "complement": c.value, "error_bound": c.err,
            }));
        }
        println!("{value}");
        return Ok(());
    }
    let iv = build_interval(kind, range)?;
    if trace_all {
        let mut w = csv::Writer::from_writer(io::stdout().lock());
        w.write_record([
            "p",
            "p_exact",
            "coverage",
            "complement",
            "origin",
            "ell",
            "g",
            "h",
        ])?;
        for e in trace(n, &spec, &iv)? {
            w.write_record([
                fmt17(e.p),
                e.p_exact.to_string(),
                fmt17(e.coverage()),
                fmt17(e.complement.value),
                e.origin.name().to_string(),
                e.ell.map(|l| l.to_string()).unwrap_or_default(),
                e.g.to_string(),
                e.h.to_string(),
            ])?;
        }
        w.flush()?;
        return Ok(());
    }
    let s = min_coverage(n, &spec, &iv)?;
    let verdict = match delta {
        Some(_) => Some(sweep(n, &spec, &iv, Execution::default())?.passed()),
        None => None,
    };
    let verdict_text = verdict.map(|ok| if ok { "PASS" } else { "FAIL" });
    if format.json {
        let mut v = serde_json::to_value(&s)?;
        let obj = v.as_object_mut().expect("summary is an object");
        obj.insert("schema".into(), json!(SCHEMA));
        if let Some(t) = verdict_text {
            obj.insert("verdict".into(), json!(t));
        }
        return print_json(&v);
    }
    println!(
        "n={} min_coverage={} complement={} at p = {} ({}), {} candidates",
        s.n,
        s.min_coverage,
        s.complement_of_min,
        s.argmin_p_exact,
        s.argmin_origin.name(),
        s.candidates_evaluated
    );
    if let (Some(t), Some(d)) = (verdict_text, delta) {
        println!("{t}: requirement coverage > {} ", fmt17(1.0 - d));
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_table(
    kind: Kind,
    eps: &[f64],
    eps_abs: &[f64],
    eps_rel: &[f64],
    delta: &[f64],
    range: &Range,
    format: Format,
    cache: Option<PathBuf>,
    out: Option<PathBuf>,
    max_n: u64,
) -> Result<()> {
    let (abs_list, rel_list): (Vec<Option<f64>>, Vec<Option<f64>>) = match kind {
        Kind::Abs => (
            eps.iter().chain(eps_abs).map(|&e| Some(e)).collect(),
            vec![None],
        ),
        Kind::Rel => (
            vec![None],
            eps.iter().chain(eps_rel).map(|&e| Some(e)).collect(),
        ),
        Kind::Mixed => (
            eps_abs.iter().map(|&e| Some(e)).collect(),
            eps_rel.iter().map(|&e| Some(e)).collect(),
        ),
    };
    if abs_list.is_empty() || rel_list.is_empty() {
        return Err(usage("the margin list is empty"));
    }
    if delta.is_empty() {
        return Err(usage("the delta list is empty"));
    }
    let iv = build_interval(kind, range)?;
    let mut cache = cache.map(|p| Cache::open(&p)).transpose()?;
    let mut rows = Vec::new();
    for &ea in &abs_list {
        for &er in &rel_list {
            for &d in delta {
                let spec = ErrorSpec::from_parts(kind.criterion(), ea, er, d)?;
                let probe = row_of(&spec, &iv, 0);
                let hit = cache.as_ref().and_then(|c| c.get(&probe));
                let n = match hit {
                    Some(n) => n,
                    None => {
                        let n = min_sample_size_with(&spec, &iv, &search_opts(max_n))?.n_min;
                        if let Some(c) = cache.as_mut() {
                            c.insert(row_of(&spec, &iv, n));
                        }
                        n
                    }
                };
                rows.push(row_of(&spec, &iv, n));
            }
        }
    }
    rows.sort_by_key(|r| r.sort_key());
    if let Some(c) = &cache {
        c.save()?;
    }
    let sink: Box<dyn Write> = match &out {
        Some(p) => Box::new(
            File::create(p).with_context(|| format!("cannot write table {}", p.display()))?,
        ),
        None => Box::new(io::stdout().lock()),
    };
    if format.json {
        let mut sink = sink;
        serde_json::to_writer_pretty(&mut sink, &json!({"schema": SCHEMA, "rows": rows}))?;
        writeln!(sink)?;
        return Ok(());
    }
    table::write_csv(sink, &rows)
}

struct Check {
    name: &'static str,
    ok: bool,
    detail: String,
}

#[allow(clippy::too_many_arguments)]
fn cmd_verify(
    kind: Kind,
    n: u64,
    margins: &Margins,
    delta: Option<f64>,
    range: &Range,
    grid: usize,
    mc: Option<u64>,
    seed: u64,
    at: Option<f64>,
    as_json: bool,
) -> Result<()> {
    let spec = build_spec(kind, margins, delta.unwrap_or(0.5))?;
    let iv = build_interval(kind, range)?;
    let exec = Execution::default();
    let mut checks = Vec::new();

    let summary = min_coverage(n, &spec, &iv)?;
    let g = grid_min_coverage(n, &spec, &iv, grid, exec)?;
    checks.push(Check {
        name: "grid",
        ok: g.grid_min_coverage >= summary.min_coverage - 1e-12,
        detail: format!(
            "candidate min {} at p = {}; grid min {} at p = {} over {} points (gap {:.3e})",
            summary.min_coverage,
            summary.argmin_p_exact,
            g.grid_min_coverage,
            g.grid_argmin_p,
            grid,
            g.grid_min_coverage - summary.min_coverage
        ),
    });

    if let Some(d) = delta {
        let outcome = sweep(n, &spec, &iv, exec)?;
        let (ok, detail) = match outcome {
            SweepOutcome::Pass(s) => (
                true,
                format!("min coverage {} > {}", s.min_coverage, fmt17(1.0 - d)),
            ),
            SweepOutcome::Fail { witness, .. } => (
                false,
                format!(
                    "witness p = {} ({}) has coverage {} <= {}",
                    witness.p_exact,
                    witness.origin.name(),
                    witness.coverage(),
                    fmt17(1.0 - d)
                ),
            ),
        };
        checks.push(Check {
            name: "requirement",
            ok,
            detail,
        });
    }

    if n <= binsize_core::oracle::EXACT_SMALL_MAX_N {
        let set = binsize_core::enumerate(n, &spec, &iv)?;
        let mut worst: f64 = 0.0;
        for c in set.points() {
            let float = binsize_core::coverage_at_candidate(n, &spec, c)?;
            let exact = exact_small_coverage(n, &spec, &c.exact().to_big())?;
            let exact = exact.to_f64().unwrap_or(f64::NAN);
            let rel = if exact == 0.0 {
                float.abs()
            } else {
                ((float - exact) / exact).abs()
            };
            worst = worst.max(rel);
        }
        checks.push(Check {
            name: "rational",
            ok: worst <= 1e-13,
            detail: format!("{} candidates, worst relative error {worst:.3e}", set.len()),
        });
    }

    if let Some(trials) = mc {
        let p = at.unwrap_or(summary.argmin_p);
        let r = monte_carlo_coverage(n, &spec, p, trials, seed, exec)?;
        let exact = 1.0 - complement_at(n, &spec, p)?.value;
        let se = r.std_error.max(1.0 / trials as f64);
        let z = (r.empirical_coverage - exact).abs() / se;
        checks.push(Check {
            name: "monte_carlo",
            ok: z <= 5.0,
            detail: format!(
                "p = {p}: empirical {} vs exact {exact} over {trials} trials (seed {seed}), z = {z:.3}",
                r.empirical_coverage
            ),
        });
    }

    let all_ok = checks.iter().all(|c| c.ok);
    if as_json {
        let list: Vec<_> = checks
            .iter()
            .map(|c| json!({"check": c.name, "pass": c.ok, "detail": c.detail}))
            .collect();
        print_json(&json!({"schema": SCHEMA, "n": n, "pass": all_ok, "checks": list}))?;
    } else {
        for c in &checks {
            println!(
                "{} {}: {}",
                if c.ok { "PASS" } else { "FAIL" },
                c.name,
                c.detail
            );
        }
    }
    if all_ok {
        Ok(())
    } else {
        Err(ChecksFailed.into())
    }
}

fn run(cli: Cli) -> Result<()> {
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(usage("--threads must be positive"));
        }
        configure_threads(t);
    }
    match cli.command {
        Command::Minsize {
            kind,
            margins,
            delta,
            range,
            json: _,
            csv,
            text,
            max_n,
            cache,
            proof,
        } => cmd_minsize(
            kind, &margins, delta, &range, csv, text, max_n, cache, proof,
        ),
        Command::Coverage {
            kind,
            n,
            margins,
            delta,
            range,
            format,
            at,
            min,
            trace,
        } => cmd_coverage(kind, n, &margins, delta, &range, format, at, min, trace),
        Command::Table {
            kind,
            eps,
            eps_abs,
            eps_rel,
            delta,
            range,
            format,
            cache,
            out,
            max_n,
        } => cmd_table(
            kind, &eps, &eps_abs, &eps_rel, &delta, &range, format, cache, out, max_n,
        ),
        Command::Verify {
            criterion,
            n,
            margins,
            delta,
            range,
            grid,
            mc,
            seed,
            at,
            json,
        } => cmd_verify(
            criterion, n, &margins, delta, &range, grid, mc, seed, at, json,
        ),
    }
}

fn is_broken_pipe(e: &anyhow::Error) -> bool {
    e.chain().any(|c| {
        c.downcast_ref::<io::Error>()
            .is_some_and(|io| io.kind() == io::ErrorKind::BrokenPipe)
            || c.downcast_ref::<serde_json::Error>()
                .and_then(|j| j.io_error_kind())
                .is_some_and(|k| k == io::ErrorKind::BrokenPipe)
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if is_broken_pipe(&e) => ExitCode::SUCCESS,
        Err(e) => {
            if e.downcast_ref::<ChecksFailed>().is_none() {
                eprintln!("error: {e:#}");
            }
            ExitCode::from(exit_code(&e))
        }
    }
}
