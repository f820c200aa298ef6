//! Independent checks: dense grid scans, exact rational coverage for small
//! `n`, and seeded Monte Carlo simulation.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::coverage::{coverage_at, coverage_window};
use crate::error::{Error, Result};
use crate::par::{self, Execution};
use crate::spec::{Criterion, ErrorSpec, ParamInterval};

/// Largest `n` accepted by [`exact_small_coverage`].
pub const EXACT_SMALL_MAX_N: u64 = 30;

/// Trials simulated per independent generator stream.
pub const MC_CHUNK: u64 = 65_536;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridScanResult {
    pub grid_resolution: usize,
    pub grid_min_coverage: f64,
    pub grid_argmin_p: f64,
}

/// Minimum of the coverage over `resolution` equally spaced points of
/// `[a, b]`, endpoints included. Ties go to the smaller `p`.
pub fn grid_min_coverage(
    n: u64,
    spec: &ErrorSpec,
    interval: &ParamInterval,
    resolution: usize,
    exec: Execution,
) -> Result<GridScanResult> {
    if resolution < 10 {
        return Err(Error::invalid("grid resolution must be at least 10"));
    }
    interval.validate_for(spec)?;
    let (a, b) = (interval.a(), interval.b());
    let last = resolution - 1;
    let point = |i: usize| {
        if i == last {
            b
        } else {
            a + (b - a) * (i as f64 / last as f64)
        }
    };
    let values = par::map_range(exec, resolution, |i| coverage_at(n, spec, point(i)));
    let mut best = (f64::INFINITY, 0);
    for (i, v) in values.into_iter().enumerate() {
        let v = v?;
        if v < best.0 {
            best = (v, i);
        }
    }
    Ok(GridScanResult {
        grid_resolution: resolution,
        grid_min_coverage: best.0,
        grid_argmin_p: point(best.1),
    })
}

/// Coverage at a rational `p` in exact arithmetic, straight from the
/// definition: sum `B(n,k,p)` over every `k` whose estimate `k/n` meets the
/// criterion.
pub fn exact_small_coverage(n: u64, spec: &ErrorSpec, p: &BigRational) -> Result<BigRational> {
    if n == 0 || n > EXACT_SMALL_MAX_N {
        return Err(Error::invalid(format!(
            "exact coverage is limited to 1 <= n <= {EXACT_SMALL_MAX_N}"
        )));
    }
    let one = BigRational::one();
    if p.is_negative() || *p > one {
        return Err(Error::invalid("p must lie in [0, 1]"));
    }
    if spec.kind() == Criterion::Relative && p.is_zero() {
        return Err(Error::invalid(
            "the relative criterion is undefined at p = 0",
        ));
    }
    let ea = spec.eps_abs_param().map(|e| e.exact().to_big());
    let er = spec.eps_rel_param().map(|e| e.exact().to_big());
    let nn = BigRational::from_integer(BigInt::from(n));
    let q = &one - p;
    let mut total = BigRational::zero();
    let mut binom = BigInt::one();
    for k in 0..=n {
        if k > 0 {
            binom = binom * BigInt::from(n - k + 1) / BigInt::from(k);
        }
        let err = (BigRational::from_integer(BigInt::from(k)) / &nn - p).abs();
        let within_abs = ea.as_ref().is_some_and(|e| err < *e);
        let within_rel = er.as_ref().is_some_and(|e| err < e * p);
        if within_abs || within_rel {
            let term = BigRational::from_integer(binom.clone())
                * num_traits::pow(p.clone(), k as usize)
                * num_traits::pow(q.clone(), (n - k) as usize);
            total += term;
        }
    }
    Ok(total)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloResult {
    pub trials: u64,
    pub seed: u64,
    pub empirical_coverage: f64,
    pub std_error: f64,
}

/// Simulated coverage at `p`.
///
/// Trials are split into chunks of [`MC_CHUNK`]; chunk `i` draws from
/// ChaCha8 seeded with `seed` on stream `i`, so the result depends only on
/// `(n, spec, p, trials, seed)` and not on how chunks are scheduled.
pub fn monte_carlo_coverage(
    n: u64,
    spec: &ErrorSpec,
    p: f64,
    trials: u64,
    seed: u64,
    exec: Execution,
) -> Result<MonteCarloResult> {
    if trials < 1000 {
        return Err(Error::invalid("Monte Carlo needs at least 1000 trials"));
    }
    let w = coverage_window(n, spec, p)?;
    let dist = Binomial::new(n, p).map_err(|e| Error::invalid(e.to_string()))?;
    let chunks = trials.div_ceil(MC_CHUNK) as usize;
    let hits = par::map_range(exec, chunks, |i| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(i as u64);
        let count = MC_CHUNK.min(trials - i as u64 * MC_CHUNK);
        (0..count)
            .filter(|_| {
                let k = dist.sample(&mut rng) as i64;
                w.g <= k && k <= w.h
            })
            .count() as u64
    });
    let c = hits.iter().sum::<u64>() as f64 / trials as f64;
    Ok(MonteCarloResult {
        trials,
        seed,
        empirical_coverage: c,
        std_error: (c * (1.0 - c) / trials as f64).sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coverage::min_coverage;

    fn ratio(a: i64, b: i64) -> BigRational {
        BigRational::new(a.into(), b.into())
    }

    #[test]
    fn exact_examples() {
        let abs = ErrorSpec::absolute(0.1, 0.05).unwrap();
        let expect = ratio(120 * 27 * 823_543, 10_000_000_000);
        assert_eq!(
            exact_small_coverage(10, &abs, &ratio(3, 10)).unwrap(),
            expect
        );
        let s = ErrorSpec::absolute(0.3, 0.05).unwrap();
        assert_eq!(
            exact_small_coverage(2, &s, &ratio(1, 2)).unwrap(),
            ratio(1, 2)
        );
        let s = ErrorSpec::absolute(0.5, 0.05).unwrap();
        assert_eq!(
            exact_small_coverage(5, &s, &ratio(1, 2)).unwrap(),
            ratio(30, 32)
        );
        assert!(exact_small_coverage(31, &s, &ratio(1, 2)).is_err());
    }

    #[test]
    fn grid_never_beats_candidates() {
        let spec = ErrorSpec::absolute(0.1, 0.05).unwrap();
        let iv = ParamInterval::new(0.0, 0.5).unwrap();
        let g = grid_min_coverage(10, &spec, &iv, 100_000, Execution::Parallel).unwrap();
        let m = min_coverage(10, &spec, &iv).unwrap();
        assert!(g.grid_min_coverage >= m.min_coverage - 1e-12);
        assert!(grid_min_coverage(10, &spec, &iv, 5, Execution::Parallel).is_err());
    }

    #[test]
    fn relative_grid_argmin_sits_on_a_candidate() {
        let spec = ErrorSpec::relative(0.5, 0.05).unwrap();
        let iv = ParamInterval::new(0.1, 0.3).unwrap();
        let g = grid_min_coverage(10, &spec, &iv, 100_000, Execution::Parallel).unwrap();
        let set = crate::candidates::enumerate(10, &spec, &iv).unwrap();
        let nearest = set
            .points()
            .iter()
            .map(|c| (c.p() - g.grid_argmin_p).abs())
            .fold(f64::INFINITY, f64::min);
        assert!(
            nearest <= 1e-5,
            "grid argmin {} is {nearest} from a candidate",
            g.grid_argmin_p
        );
    }

    #[test]
    fn monte_carlo_is_reproducible_and_sane() {
        let spec = ErrorSpec::absolute(0.1, 0.05).unwrap();
        let r = monte_carlo_coverage(10, &spec, 0.0, 1000, 7, Execution::Parallel).unwrap();
        assert_eq!(r.empirical_coverage, 1.0);
        let a = monte_carlo_coverage(101, &spec, 0.5, 200_000, 42, Execution::Parallel).unwrap();
        let b = monte_carlo_coverage(101, &spec, 0.5, 200_000, 42, Execution::Sequential).unwrap();
        assert_eq!(a, b);
        let exact = coverage_at(101, &spec, 0.5).unwrap();
        assert!((a.empirical_coverage - exact).abs() <= 5.0 * a.std_error);
        assert!(monte_carlo_coverage(10, &spec, 0.5, 999, 1, Execution::Parallel).is_err());
    }
}
