//! Minimal sample size by an ascending scan, plus classical bounds.

use std::time::Instant;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::ToPrimitive;
use serde::{Deserialize, Serialize};

use crate::bounding::{sweep_with_bounds, BoundedOutcome, BoundingConfig};
use crate::candidates::{nearest_candidate, Origin};
use crate::coverage::{
    min_coverage_with, passes_at_candidate, sweep, CoverageSummary, SweepOutcome,
};
use crate::error::{Error, Result};
use crate::exact::{decimal_frac, Frac, MAX_PARAM_DEN};
use crate::par::Execution;
use crate::spec::{Criterion, ErrorSpec, ParamInterval};

pub const DEFAULT_MAX_N: u64 = 10_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchOptions {
    /// Give up (with a resource-limit error) beyond this sample size.
    pub max_n: u64,
    pub execution: Execution,
    /// Try the previous failing point before sweeping a new `n`.
    pub witness_fast_path: bool,
    /// Sweep absolute grids with recursive bounds instead of evaluating
    /// every candidate.
    pub bounding: Option<BoundingConfig>,
}

impl Default for SearchOptions {
    fn default() -> Self {
        SearchOptions {
            max_n: DEFAULT_MAX_N,
            execution: Execution::default(),
            witness_fast_path: true,
            bounding: Some(BoundingConfig::default()),
        }
    }
}

/// How an insufficient `n` was shown to fail.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FailedBy {
    Witness,
    Sweep,
}

/// A point where coverage is at most `1 − δ` for one `n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureWitness {
    pub n: u64,
    pub p: f64,
    pub p_exact: Frac,
    pub origin: Origin,
    pub coverage: f64,
    pub complement: f64,
    pub found_by: FailedBy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSizeReport {
    pub criterion: Criterion,
    pub eps_abs: Option<f64>,
    pub eps_rel: Option<f64>,
    pub delta: f64,
    pub a: f64,
    pub b: f64,
    pub n_min: u64,
    pub summary_at_n: CoverageSummary,
    pub fail_witness_at_n_minus_1: Option<FailureWitness>,
    /// Defined for criteria with an absolute margin.
    pub baseline_normal: Option<u64>,
    pub baseline_chernoff: Option<u64>,
    pub baseline_bernoulli: Option<u64>,
    pub ns_scanned: u64,
    pub full_sweeps: u64,
    pub runtime_ms: u128,
    /// One witness for every `n` in `2..n_min`.
    pub proof: Vec<FailureWitness>,
}

fn start_point(interval: &ParamInterval) -> Frac {
    let half = Frac::new(1, 2);
    let (a, b) = (interval.a_exact(), interval.b_exact());
    if half < a {
        a
    } else if half > b {
        b
    } else {
        half
    }
}

/// Smallest `n ≥ 2` whose minimum coverage over `[a, b]` exceeds `1 − δ`,
/// with a failure witness for every smaller `n`.
pub fn min_sample_size(spec: &ErrorSpec, interval: &ParamInterval) -> Result<SampleSizeReport> {
    min_sample_size_with(spec, interval, &SearchOptions::default())
}

pub fn min_sample_size_with(
    spec: &ErrorSpec,
    interval: &ParamInterval,
    opts: &SearchOptions,
) -> Result<SampleSizeReport> {
    interval.validate_for(spec)?;
    if opts.max_n < 2 {
        return Err(Error::invalid("max_n must be at least 2"));
    }
    let started = Instant::now();
    let mut witness = start_point(interval);
    let mut proof = Vec::new();
    let mut full_sweeps = 0;
    for n in 2..=opts.max_n {
        if opts.witness_fast_path {
            let c = nearest_candidate(n, spec, interval, witness)?;
            let (pass, s, _) = passes_at_candidate(n, spec, &c)?;
            if !pass {
                witness = c.exact();
                proof.push(FailureWitness {
                    n,
                    p: c.p(),
                    p_exact: c.exact(),
                    origin: c.origin(),
                    coverage: 1.0 - s.value,
                    complement: s.value,
                    found_by: FailedBy::Witness,
                });
                continue;
            }
        }
        full_sweeps += 1;
        let failure = match opts.bounding {
            Some(cfg) => {
                match sweep_with_bounds(n, spec, interval, opts.execution, &cfg)?.outcome {
                    BoundedOutcome::Pass => None,
                    BoundedOutcome::Fail(w) => Some(w),
                }
            }
            None => match sweep(n, spec, interval, opts.execution)? {
                SweepOutcome::Pass(_) => None,
                SweepOutcome::Fail { witness, .. } => Some(witness),
            },
        };
        if let Some(w) = failure {
            witness = w.p_exact;
            proof.push(FailureWitness {
                n,
                p: w.p,
                p_exact: w.p_exact,
                origin: w.origin,
                coverage: w.coverage(),
                complement: w.complement.value,
                found_by: FailedBy::Sweep,
            });
            continue;
        }
        let summary = min_coverage_with(n, spec, interval, opts.execution)?;
        let eps = spec.eps_abs();
        return Ok(SampleSizeReport {
            criterion: spec.kind(),
            eps_abs: spec.eps_abs(),
            eps_rel: spec.eps_rel(),
            delta: spec.delta(),
            a: interval.a(),
            b: interval.b(),
            n_min: n,
            summary_at_n: summary,
            fail_witness_at_n_minus_1: proof.last().cloned(),
            baseline_normal: eps.map(|e| baseline_normal(e, spec.delta())).transpose()?,
            baseline_chernoff: eps
                .map(|e| baseline_chernoff(e, spec.delta()))
                .transpose()?,
            baseline_bernoulli: eps
                .map(|e| baseline_bernoulli(e, spec.delta()))
                .transpose()?,
            ns_scanned: n - 1,
            full_sweeps,
            runtime_ms: started.elapsed().as_millis(),
            proof,
        });
    }
    Err(Error::ResourceLimit { max_n: opts.max_n })
}

fn check_unit(eps: f64, delta: f64) -> Result<()> {
    for (name, v) in [("eps", eps), ("delta", delta)] {
        if !(v > 0.0 && v < 1.0) {
            return Err(Error::invalid(format!(
                "{name}={v} must lie strictly inside (0, 1)"
            )));
        }
    }
    Ok(())
}

/// Lower-tail standard normal quantile: Acklam's rational approximation
/// followed by one Halley step on `erfc`.
pub(crate) fn normal_quantile(p: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969_683_028_665_376e1,
        2.209_460_984_245_205e2,
        -2.759_285_104_469_687e2,
        1.383_577_518_672_69e2,
        -3.066_479_806_614_716e1,
        2.506_628_277_459_239,
    ];
    const B: [f64; 5] = [
        -5.447_609_879_822_406e1,
        1.615_858_368_580_409e2,
        -1.556_989_798_598_866e2,
        6.680_131_188_771_972e1,
        -1.328_068_155_288_572e1,
    ];
    const C: [f64; 6] = [
        -7.784_894_002_430_293e-3,
        -3.223_964_580_411_365e-1,
        -2.400_758_277_161_838,
        -2.549_732_539_343_734,
        4.374_664_141_464_968,
        2.938_163_982_698_783,
    ];
    const D: [f64; 4] = [
        7.784_695_709_041_462e-3,
        3.224_671_290_700_398e-1,
        2.445_134_137_142_996,
        3.754_408_661_907_416,
    ];
    const P_LOW: f64 = 0.02425;
    let tail = |q: f64| {
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };
    let x = if p < P_LOW {
        tail((-2.0 * p.ln()).sqrt())
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        -tail((-2.0 * (1.0 - p).ln()).sqrt())
    };
    let e = 0.5 * libm::erfc(-x / std::f64::consts::SQRT_2) - p;
    let u = e * (2.0 * std::f64::consts::PI).sqrt() * (x * x / 2.0).exp();
    x - u / (1.0 + x * u / 2.0)
}

/// `⌈Z²/(4ε²)⌉` with `Z` the upper `δ/2` normal quantile.
pub fn baseline_normal(eps: f64, delta: f64) -> Result<u64> {
    check_unit(eps, delta)?;
    let z = -normal_quantile(delta / 2.0);
    Ok((z * z / (4.0 * eps * eps)).ceil() as u64)
}

/// Smallest `n > ln(2/δ)/(2ε²)`.
pub fn baseline_chernoff(eps: f64, delta: f64) -> Result<u64> {
    check_unit(eps, delta)?;
    Ok(((2.0 / delta).ln() / (2.0 * eps * eps)).floor() as u64 + 1)
}

/// Smallest `n > 1/(4ε²δ)`, in exact arithmetic on the decimal inputs.
pub fn baseline_bernoulli(eps: f64, delta: f64) -> Result<u64> {
    check_unit(eps, delta)?;
    let e = decimal_frac(eps, MAX_PARAM_DEN)?;
    let d = decimal_frac(delta, MAX_PARAM_DEN)?;
    let big = |x: i128| BigInt::from(x);
    let bound = BigRational::new(
        big(e.den()) * big(e.den()) * big(d.den()),
        BigInt::from(4) * big(e.num()) * big(e.num()) * big(d.num()),
    );
    bound
        .floor()
        .to_integer()
        .to_u64()
        .and_then(|v| v.checked_add(1))
        .ok_or_else(|| Error::invalid("bound exceeds the representable range"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn abs(eps: f64, delta: f64) -> ErrorSpec {
        ErrorSpec::absolute(eps, delta).unwrap()
    }

    #[test]
    fn baselines() {
        assert_eq!(baseline_normal(0.1, 0.05).unwrap(), 97);
        assert_eq!(baseline_normal(0.05, 0.05).unwrap(), 385);
        assert_eq!(baseline_chernoff(0.1, 0.05).unwrap(), 185);
        assert_eq!(baseline_chernoff(0.01, 0.001).unwrap(), 38005);
        assert_eq!(baseline_bernoulli(0.1, 0.05).unwrap(), 501);
        assert_eq!(baseline_bernoulli(0.05, 0.01).unwrap(), 10001);
        assert!(baseline_normal(0.0, 0.05).is_err());
    }

    #[test]
    fn quantile_refinement() {
        assert!((normal_quantile(0.025) + 1.959_963_984_540_054).abs() < 1e-13);
        assert!((normal_quantile(0.5)).abs() < 1e-15);
        assert!((normal_quantile(0.0005) + 3.290_526_731_491_926).abs() < 1e-12);
    }

    #[test]
    fn quantile_matches_statrs() {
        use statrs::distribution::{ContinuousCDF, Normal};
        let std = Normal::new(0.0, 1.0).unwrap();
        for &p in &[
            1e-9, 1e-6, 1e-4, 0.001, 0.01, 0.025, 0.1, 0.3, 0.5, 0.7, 0.975, 0.999,
        ] {
            let want = std.inverse_cdf(p);
            assert!(
                (normal_quantile(p) - want).abs() <= 1e-9 * want.abs().max(1.0),
                "p={p}"
            );
        }
    }

    #[test]
    fn first_table_row() {
        let unit = ParamInterval::unit();
        let r = min_sample_size(&abs(0.1, 0.05), &unit).unwrap();
        assert_eq!(r.n_min, 101);
        assert!(r.summary_at_n.min_coverage > 0.95);
        let w = r.fail_witness_at_n_minus_1.as_ref().unwrap();
        assert_eq!(w.n, 100);
        assert!(w.coverage <= 0.95);
        assert_eq!(r.proof.len(), 99);
        assert!(r.proof.iter().enumerate().all(|(i, w)| w.n == i as u64 + 2));
        assert_eq!(r.baseline_chernoff, Some(185));
        let r = min_sample_size(&abs(0.1, 0.01), &unit).unwrap();
        assert_eq!(r.n_min, 171);
    }

    #[test]
    fn fast_path_matches_naive_search() {
        let unit = ParamInterval::unit();
        let naive = SearchOptions {
            witness_fast_path: false,
            bounding: None,
            ..Default::default()
        };
        for (eps, delta) in [
            (0.1, 0.05),
            (0.1, 0.1),
            (0.15, 0.05),
            (0.2, 0.01),
            (0.12, 0.2),
        ] {
            let spec = abs(eps, delta);
            let fast = min_sample_size(&spec, &unit).unwrap();
            let slow = min_sample_size_with(&spec, &unit, &naive).unwrap();
            assert_eq!(fast.n_min, slow.n_min, "ε={eps} δ={delta}");
            assert_eq!(fast.summary_at_n, slow.summary_at_n);
        }
    }

    #[test]
    fn resource_limit() {
        let opts = SearchOptions {
            max_n: 50,
            ..Default::default()
        };
        let e = min_sample_size_with(&abs(0.1, 0.05), &ParamInterval::unit(), &opts);
        assert_eq!(e.unwrap_err(), Error::ResourceLimit { max_n: 50 });
    }

    #[test]
    fn relative_needs_positive_a() {
        let rel = ErrorSpec::relative(0.1, 0.05).unwrap();
        assert!(min_sample_size(&rel, &ParamInterval::unit()).is_err());
        let r = min_sample_size(&rel, &ParamInterval::new(0.5, 1.0).unwrap()).unwrap();
        assert!(r.summary_at_n.min_coverage > 0.95);
        assert!(r.baseline_chernoff.is_none());
    }
}
