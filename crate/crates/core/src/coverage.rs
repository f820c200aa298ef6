//! Coverage probabilities and the exact minimum over a candidate set.
//!
//! Everything is computed on the complement `1 − C`, as the sum of the two
//! binomial tails outside the acceptance window, and compared against `δ`.

use std::cmp::Ordering;

use num_rational::BigRational;
use serde::{Deserialize, Serialize};

use crate::candidates::{enumerate, CandidatePoint, CandidateSet, Origin};
use crate::error::{Error, Result};
use crate::exact::{decimal_big, exact_complement_cmp, Frac};
use crate::kernel::{complement_clipped, pmf_raw, Summed, U};
use crate::par::{self, Execution};
use crate::spec::{Criterion, ErrorSpec, ParamInterval};

/// Largest `n` for which an undecided comparison is settled in exact
/// rational arithmetic.
pub const EXACT_MAX_N: u64 = 60_000;

/// Candidates evaluated together before checking for a violation.
const BATCH: usize = 1024;

/// Window indices within this distance of an integer are recomputed exactly.
const NEAR_INTEGER: f64 = 1e-9;

/// `K` counts as covered when `g ≤ K ≤ h`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoverageWindow {
    pub n: u64,
    pub g: i64,
    pub h: i64,
    pub p: f64,
}

fn check_p(spec: &ErrorSpec, p: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::invalid(format!("p={p} is outside [0, 1]")));
    }
    if spec.kind() == Criterion::Relative && p == 0.0 {
        return Err(Error::invalid(
            "the relative criterion is undefined at p = 0",
        ));
    }
    Ok(())
}

fn near_integer(x: f64) -> bool {
    (x - x.round()).abs() <= NEAR_INTEGER * x.abs().max(1.0)
}

/// Window at `p` read as its shortest decimal representation.
pub fn coverage_window(n: u64, spec: &ErrorSpec, p: f64) -> Result<CoverageWindow> {
    if n == 0 {
        return Err(Error::invalid("n must be positive"));
    }
    check_p(spec, p)?;
    let exact = || {
        let (g, h) = spec.window_exact(n, &decimal_big(p));
        CoverageWindow { n, g, h, p }
    };
    let nf = n as f64;
    let absolute = match spec.crossover() {
        None => spec.kind() == Criterion::Absolute,
        Some(c) => {
            let cf = c.to_f64();
            if (p - cf).abs() <= NEAR_INTEGER * cf {
                return Ok(exact());
            }
            p < cf
        }
    };
    let (x1, x2) = if absolute {
        let e = spec.eps_abs().expect("absolute margin");
        (nf * (p - e), nf * (p + e))
    } else {
        let e = spec.eps_rel().expect("relative margin");
        (nf * p * (1.0 - e), nf * p * (1.0 + e))
    };
    if near_integer(x1) || near_integer(x2) {
        return Ok(exact());
    }
    Ok(CoverageWindow {
        n,
        g: x1.floor() as i64 + 1,
        h: x2.ceil() as i64 - 1,
        p,
    })
}

/// `1 − S(n, g, h, p)` with a bound that also covers the gap between the
/// binary `p` and the exact point it stands for (relative size `3u`).
fn window_complement(n: u64, g: i64, h: i64, p: f64) -> Summed {
    let nn = n as i64;
    let lo = g.max(0);
    let hi = h.min(nn);
    if lo > hi {
        return Summed::ONE;
    }
    if lo == 0 && hi == nn {
        return Summed::ZERO;
    }
    let mut s = complement_clipped(n, lo, hi, p);
    // dS/dp = n·(B(n−1, g−1, p) − B(n−1, h, p))
    let slope = n as f64 * pmf_raw(n - 1, lo - 1, p).max(pmf_raw(n - 1, hi, p));
    s.err += 2.0 * slope * 3.0 * U * p;
    s
}

/// Complement `1 − C(p)` with its error bound.
pub fn complement_at(n: u64, spec: &ErrorSpec, p: f64) -> Result<Summed> {
    let w = coverage_window(n, spec, p)?;
    Ok(window_complement(n, w.g, w.h, p))
}

/// Coverage probability `Pr{K ∈ [g, h]}` at `p`.
pub fn coverage_at(n: u64, spec: &ErrorSpec, p: f64) -> Result<f64> {
    Ok(1.0 - complement_at(n, spec, p)?.value)
}

/// Complement at a candidate, using the window fixed at enumeration time.
pub fn candidate_complement(n: u64, spec: &ErrorSpec, c: &CandidatePoint) -> Result<Summed> {
    c.check(n, spec)?;
    let (g, h) = c.window();
    Ok(window_complement(n, g, h, c.p()))
}

pub fn coverage_at_candidate(n: u64, spec: &ErrorSpec, c: &CandidatePoint) -> Result<f64> {
    Ok(1.0 - candidate_complement(n, spec, c)?.value)
}

/// Whether `value ± err` is decisively on one side of `delta`.
pub(crate) fn float_decision(s: Summed, delta: f64) -> Option<bool> {
    let margin = (s.value - delta).abs();
    if s.err < 1e-3 * margin && margin > 8.0 * U * delta {
        Some(s.value < delta)
    } else {
        None
    }
}

/// How a pass/fail decision at a candidate was reached.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DecidedBy {
    Float,
    Exact,
}

/// `1 − C < δ` at a candidate, settled exactly when floating point cannot.
pub fn passes_at_candidate(
    n: u64,
    spec: &ErrorSpec,
    c: &CandidatePoint,
) -> Result<(bool, Summed, DecidedBy)> {
    let s = candidate_complement(n, spec, c)?;
    if let Some(pass) = float_decision(s, spec.delta()) {
        return Ok((pass, s, DecidedBy::Float));
    }
    let pass = exact_pass(n, spec, c.window(), &c.exact().to_big(), c.p())?;
    Ok((pass, s, DecidedBy::Exact))
}

pub(crate) fn exact_pass(
    n: u64,
    spec: &ErrorSpec,
    (g, h): (i64, i64),
    p: &BigRational,
    p_float: f64,
) -> Result<bool> {
    if n > EXACT_MAX_N {
        return Err(Error::IllConditioned { n, p: p_float });
    }
    let delta = spec.delta_param().exact().to_big();
    Ok(exact_complement_cmp(n, g, h, p, &delta) == Ordering::Less)
}

/// A candidate and its computed complement, mapped into the original interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluated {
    pub p: f64,
    pub p_exact: Frac,
    pub origin: Origin,
    pub ell: Option<i64>,
    pub g: i64,
    pub h: i64,
    pub complement: Summed,
}

impl Evaluated {
    pub(crate) fn from_point(c: &CandidatePoint, complement: Summed) -> Self {
        let (g, h) = c.window();
        Evaluated {
            p: c.p(),
            p_exact: c.exact(),
            origin: c.origin(),
            ell: c.ell(),
            g,
            h,
            complement,
        }
    }

    pub fn coverage(&self) -> f64 {
        1.0 - self.complement.value
    }
}

/// Minimum coverage over an interval for one `n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageSummary {
    pub n: u64,
    pub min_coverage: f64,
    pub complement_of_min: f64,
    pub argmin_p: f64,
    pub argmin_p_exact: Frac,
    pub argmin_origin: Origin,
    pub argmin_ell: Option<i64>,
    pub candidates_evaluated: usize,
    pub error_budget: f64,
    pub exact_decisions: usize,
}

/// Indices of `set` ordered by closeness to ½, ties toward the smaller `p`.
pub fn visit_order(set: &CandidateSet) -> Vec<usize> {
    let pts = set.points();
    let mut idx: Vec<usize> = (0..pts.len()).collect();
    let dist = |f: Frac| Frac::new((2 * f.num() - f.den()).abs(), 2 * f.den());
    idx.sort_by(|&i, &j| {
        dist(pts[i].exact())
            .cmp(&dist(pts[j].exact()))
            .then(pts[i].exact().cmp(&pts[j].exact()))
    });
    idx
}

/// Larger complement wins; ties go to the smaller `p` in the original interval.
fn worse(a: &(CandidatePoint, Summed), b: &(CandidatePoint, Summed)) -> bool {
    match a
        .1
        .value
        .partial_cmp(&b.1.value)
        .expect("finite complements")
    {
        Ordering::Greater => true,
        Ordering::Less => false,
        Ordering::Equal => a.0.exact() < b.0.exact(),
    }
}

fn summarize(
    n: u64,
    worst: (CandidatePoint, Summed),
    evaluated: usize,
    exact_decisions: usize,
) -> CoverageSummary {
    let (c, s) = worst;
    CoverageSummary {
        n,
        min_coverage: 1.0 - s.value,
        complement_of_min: s.value,
        argmin_p: c.p(),
        argmin_p_exact: c.exact(),
        argmin_origin: c.origin(),
        argmin_ell: c.ell(),
        candidates_evaluated: evaluated,
        error_budget: s.err,
        exact_decisions,
    }
}

/// Exact minimum coverage over `[a, b]`, evaluated in parallel.
pub fn min_coverage(n: u64, spec: &ErrorSpec, interval: &ParamInterval) -> Result<CoverageSummary> {
    min_coverage_with(n, spec, interval, Execution::default())
}

pub fn min_coverage_with(
    n: u64,
    spec: &ErrorSpec,
    interval: &ParamInterval,
    exec: Execution,
) -> Result<CoverageSummary> {
    let set = enumerate(n, spec, interval)?;
    let values = par::map(exec, set.points(), |c| candidate_complement(n, spec, c));
    let mut worst: Option<(CandidatePoint, Summed)> = None;
    for (c, s) in set.points().iter().zip(values) {
        let item = (set.to_original(c), s?);
        if worst.as_ref().is_none_or(|w| worse(&item, w)) {
            worst = Some(item);
        }
    }
    Ok(summarize(
        n,
        worst.expect("candidate sets are never empty"),
        set.len(),
        0,
    ))
}

/// Every candidate with its complement, ascending by `p` in the original
/// interval.
pub fn trace(n: u64, spec: &ErrorSpec, interval: &ParamInterval) -> Result<Vec<Evaluated>> {
    let set = enumerate(n, spec, interval)?;
    let values = par::map(Execution::default(), set.points(), |c| {
        candidate_complement(n, spec, c)
    });
    let mut out = Vec::with_capacity(set.len());
    let mut pts = Vec::with_capacity(set.len());
    for (c, s) in set.points().iter().zip(values) {
        let o = set.to_original(c);
        pts.push(o.exact());
        out.push(Evaluated::from_point(&o, s?));
    }
    let mut idx: Vec<usize> = (0..out.len()).collect();
    idx.sort_by(|&i, &j| pts[i].cmp(&pts[j]));
    Ok(idx.into_iter().map(|i| out[i].clone()).collect())
}

/// Result of checking the requirement at one `n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum SweepOutcome {
    /// Every candidate passes; the summary is the full minimum.
    Pass(CoverageSummary),
    /// The first violating candidate in visit order.
    Fail {
        witness: Evaluated,
        candidates_evaluated: usize,
    },
}

impl SweepOutcome {
    pub fn passed(&self) -> bool {
        matches!(self, SweepOutcome::Pass(_))
    }
}

/// Checks `1 − C < δ` at every candidate, nearest to ½ first, stopping at the
/// first violation. Batches are evaluated in parallel but reported in visit
/// order, so the outcome does not depend on scheduling.
pub fn sweep(
    n: u64,
    spec: &ErrorSpec,
    interval: &ParamInterval,
    exec: Execution,
) -> Result<SweepOutcome> {
    let set = enumerate(n, spec, interval)?;
    sweep_set(n, spec, &set, exec)
}

pub(crate) fn sweep_set(
    n: u64,
    spec: &ErrorSpec,
    set: &CandidateSet,
    exec: Execution,
) -> Result<SweepOutcome> {
    let order = visit_order(set);
    let pts = set.points();
    let mut worst: Option<(CandidatePoint, Summed)> = None;
    let mut exact_decisions = 0;
    let mut evaluated = 0;
    for batch in order.chunks(BATCH) {
        let results = par::map(exec, batch, |&i| passes_at_candidate(n, spec, &pts[i]));
        for (&i, r) in batch.iter().zip(results) {
            let (pass, s, by) = r?;
            evaluated += 1;
            if by == DecidedBy::Exact {
                exact_decisions += 1;
            }
            let c = set.to_original(&pts[i]);
            if !pass {
                return Ok(SweepOutcome::Fail {
                    witness: Evaluated::from_point(&c, s),
                    candidates_evaluated: evaluated,
                });
            }
            let item = (c, s);
            if worst.as_ref().is_none_or(|w| worse(&item, w)) {
                worst = Some(item);
            }
        }
    }
    Ok(SweepOutcome::Pass(summarize(
        n,
        worst.expect("candidate sets are never empty"),
        evaluated,
        exact_decisions,
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::candidates::candidates_abs;

    fn abs(eps: f64) -> ErrorSpec {
        ErrorSpec::absolute(eps, 0.05).unwrap()
    }

    #[test]
    fn coverage_examples() {
        let v = coverage_at(10, &abs(0.1), 0.3).unwrap();
        let oracle = 120.0 * 0.3f64.powi(3) * 0.7f64.powi(7);
        assert!((v - oracle).abs() <= 1e-15);
        assert!((v - 0.266_827_93).abs() < 1e-8);
        assert_eq!(coverage_at(10, &abs(0.1), 0.0).unwrap(), 1.0);
        let mixed = ErrorSpec::mixed(0.05, 0.1, 0.05).unwrap();
        assert_eq!(
            coverage_at(10, &mixed, 0.5).unwrap(),
            coverage_at(10, &abs(0.05), 0.5).unwrap()
        );
        let rel = ErrorSpec::relative(0.1, 0.05).unwrap();
        assert!(coverage_at(10, &rel, 0.0).is_err());
        assert!(coverage_at(10, &abs(0.1), 1.5).is_err());
    }

    #[test]
    fn window_fast_path_agrees_with_exact() {
        let specs = [
            abs(0.1),
            abs(0.07),
            ErrorSpec::mixed(0.02, 0.1, 0.05).unwrap(),
        ];
        for spec in specs {
            for n in [9u64, 10, 33, 100] {
                for i in 0..=1000 {
                    let p = i as f64 / 1000.0;
                    let w = coverage_window(n, &spec, p).unwrap();
                    assert_eq!(
                        (w.g, w.h),
                        spec.window_exact(n, &decimal_big(p)),
                        "n={n} p={p}"
                    );
                }
            }
        }
    }

    #[test]
    fn candidate_values_match_pointwise() {
        let spec = abs(0.1);
        let c = candidates_abs(10, 0.1, &ParamInterval::unit()).unwrap();
        let p4 = c.iter().find(|c| c.exact() == Frac::new(2, 5)).unwrap();
        let v = coverage_at_candidate(10, &spec, p4).unwrap();
        assert!((v - 210.0 * 0.4f64.powi(4) * 0.6f64.powi(6)).abs() < 1e-15);
        assert_eq!(coverage_at_candidate(10, &spec, &c[0]).unwrap(), 1.0);

        let spec = abs(0.05);
        let set = enumerate(50, &spec, &ParamInterval::unit()).unwrap();
        for c in set.points() {
            let a = coverage_at_candidate(50, &spec, c).unwrap();
            let b = coverage_at(50, &spec, c.p()).unwrap();
            assert!((a - b).abs() <= 1e-12, "{c:?}");
        }
        assert!(coverage_at_candidate(51, &spec, &set.points()[0]).is_err());
    }

    #[test]
    fn table_row_boundary() {
        let spec = abs(0.1);
        let s = min_coverage(101, &spec, &ParamInterval::unit()).unwrap();
        assert!(s.min_coverage > 0.95);
        let s = min_coverage(100, &spec, &ParamInterval::unit()).unwrap();
        assert!(s.min_coverage <= 0.95);
        assert!((s.min_coverage + s.complement_of_min - 1.0).abs() < 1e-11);
    }

    #[test]
    fn near_certain_margin() {
        let spec = ErrorSpec::absolute(1.0 - 1e-9, 0.05).unwrap();
        let s = min_coverage(10, &spec, &ParamInterval::new(0.0, 0.5).unwrap()).unwrap();
        assert!((s.min_coverage - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn sweep_agrees_with_minimum_and_strategies() {
        let unit = ParamInterval::unit();
        for n in [50u64, 100, 101, 150] {
            let spec = abs(0.1);
            let min = min_coverage(n, &spec, &unit).unwrap();
            let seq = sweep(n, &spec, &unit, Execution::Sequential).unwrap();
            let par = sweep(n, &spec, &unit, Execution::Parallel).unwrap();
            assert_eq!(seq, par);
            assert_eq!(seq.passed(), min.complement_of_min < 0.05);
            if let SweepOutcome::Pass(s) = seq {
                assert_eq!(s.argmin_p_exact, min.argmin_p_exact);
            }
        }
    }

    #[test]
    fn visit_order_starts_near_half() {
        let set = enumerate(20, &abs(0.1), &ParamInterval::unit()).unwrap();
        let order = visit_order(&set);
        assert_eq!(set.points()[order[0]].exact(), Frac::new(1, 2));
        let set = enumerate(
            20,
            &ErrorSpec::relative(0.1, 0.05).unwrap(),
            &ParamInterval::new(0.1, 0.9).unwrap(),
        )
        .unwrap();
        let order = visit_order(&set);
        let d = |i: usize| (set.points()[i].p() - 0.5).abs();
        assert!(order.windows(2).all(|w| d(w[0]) <= d(w[1]) + 1e-15));
    }

    #[test]
    fn exact_escalation_on_a_tie() {
        // n = 2, ε = 0.3, p = 1/2: window {1}, complement exactly 1/2.
        let spec = ErrorSpec::absolute(0.3, 0.5).unwrap();
        let set = enumerate(2, &spec, &ParamInterval::unit()).unwrap();
        let c = set
            .points()
            .iter()
            .find(|c| c.exact() == Frac::new(1, 2))
            .unwrap();
        let (pass, s, by) = passes_at_candidate(2, &spec, c).unwrap();
        assert_eq!(s.value, 0.5);
        assert_eq!(by, DecidedBy::Exact);
        assert!(!pass, "equality must fail the strict requirement");
    }
}
