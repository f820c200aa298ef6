//! Recursive bounding of the grid complements under the absolute criterion.
//!
//! Consecutive plus-grid points `ℓ/n + ε` share a shifted window, so
//! `1 − c₊(ℓ−1)` equals `1 − c₊(ℓ)` plus a difference `Δ` that a second-order
//! Taylor expansion brackets between `Δ̲` and `Δ̄`. Sweeping ℓ downward keeps
//! an interval around each complement and evaluates exactly only when that
//! interval cannot settle the comparison with `δ`. The minus grid works the
//! same way.

use serde::{Deserialize, Serialize};

use crate::candidates::{Family, Origin, Plan};
use crate::coverage::{
    candidate_complement, passes_at_candidate, sweep_set, Evaluated, SweepOutcome,
};
use crate::error::{Error, Result};
use crate::exact::ceil_div;
use crate::kernel::{pmf_raw, Summed, U};
use crate::par::{self, Execution};
use crate::spec::{ErrorSpec, ParamInterval};

/// Mode-aware extremes of `B(order, k, ·)` over `[lo, hi]`.
fn extremes(order: u64, k: i64, lo: f64, hi: f64) -> (f64, f64) {
    let at_lo = pmf_raw(order, k, lo);
    let at_hi = pmf_raw(order, k, hi);
    let min = at_lo.min(at_hi);
    let max = if k >= 0 && k as u64 <= order && order > 0 {
        let mode = k as f64 / order as f64;
        if lo <= mode && mode <= hi {
            pmf_raw(order, k, mode)
        } else {
            at_lo.max(at_hi)
        }
    } else {
        at_lo.max(at_hi)
    };
    (min, max)
}

fn check_theta(n: u64, theta: f64) -> Result<()> {
    if n < 1 {
        return Err(Error::invalid("n must be at least 1"));
    }
    if !(theta >= 0.0 && theta + 1.0 / n as f64 <= 1.0 + 1e-15) {
        return Err(Error::invalid(format!(
            "theta={theta} must satisfy 0 <= theta <= theta + 1/n <= 1"
        )));
    }
    Ok(())
}

/// `min{B(n,k,θ), B(n,k,θ+1/n)}`.
pub fn b_under(n: u64, k: i64, theta: f64) -> Result<f64> {
    check_theta(n, theta)?;
    Ok(extremes(n, k, theta, (theta + 1.0 / n as f64).min(1.0)).0)
}

/// Maximum of `B(n,k,·)` over `[θ, θ+1/n]`.
pub fn b_over(n: u64, k: i64, theta: f64) -> Result<f64> {
    check_theta(n, theta)?;
    Ok(extremes(n, k, theta, (theta + 1.0 / n as f64).min(1.0)).1)
}

/// Bracket for `S(n, r, s+1, θ+1/n) − S(n, r−1, s, θ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeltaBounds {
    pub delta_lower: f64,
    pub delta_upper: f64,
}

/// `Δ̲` and `Δ̄` for `θ` and `θ + 1/n`, widened for rounding.
pub fn delta_bounds(n: u64, theta: f64, r: i64, s: i64) -> Result<DeltaBounds> {
    check_theta(n, theta)?;
    if n < 2 {
        return Err(Error::invalid("delta bounds need n >= 2"));
    }
    if r > s + 1 {
        return Err(Error::invalid(format!(
            "window [{r}, {s}] is not valid for the expansion"
        )));
    }
    Ok(delta_bounds_at(
        n,
        theta,
        (theta + 1.0 / n as f64).min(1.0),
        r,
        s,
    ))
}

/// Same as [`delta_bounds`] with the upper point `θ + 1/n` supplied, so
/// sweeps can pass the grid values they already hold.
fn delta_bounds_at(n: u64, theta: f64, theta_hi: f64, r: i64, s: i64) -> DeltaBounds {
    let first = [
        pmf_raw(n - 1, r - 1, theta),
        pmf_raw(n, s + 1, theta_hi),
        -pmf_raw(n, r - 1, theta),
        -pmf_raw(n - 1, s, theta),
    ];
    let order = n - 2;
    let (a_min, a_max) = extremes(order, r - 2, theta, theta_hi);
    let (b_min, b_max) = extremes(order, s, theta, theta_hi);
    let (c_min, c_max) = extremes(order, r - 1, theta, theta_hi);
    let (d_min, d_max) = extremes(order, s - 1, theta, theta_hi);
    let coef = (n - 1) as f64 / (2 * n) as f64;
    let base: f64 = first.iter().sum();
    let upper = base + coef * (a_max + b_max - c_min - d_min);
    let lower = base + coef * (a_min + b_min - c_max - d_max);
    // pmf relative error plus the rounding of θ (each point carries up to 3u,
    // which moves B(n,k,·) by a relative n·3u on [0, ½]).
    let magnitude: f64 =
        first.iter().map(|x| x.abs()).sum::<f64>() + coef * (a_max + b_max + c_max + d_max);
    let widen = magnitude * (1e-12 + 16.0 * n as f64 * U);
    DeltaBounds {
        delta_lower: lower - widen,
        delta_upper: upper + widen,
    }
}

/// Interval around `1 − c(ℓ)` carried down the grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundState {
    pub ell: i64,
    pub lower: f64,
    pub upper: f64,
    pub theta: f64,
    pub r: i64,
    pub s: i64,
    pub steps_since_exact: u32,
}

/// Restart policy and test instrumentation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingConfig {
    /// Re-evaluate exactly once the interval is wider than this fraction of `δ`.
    pub max_width_frac: f64,
    /// Re-evaluate exactly after this many propagated steps.
    pub max_steps: u32,
    /// Also evaluate every bounded point exactly and count containment failures.
    pub shadow: bool,
}

impl Default for BoundingConfig {
    fn default() -> Self {
        BoundingConfig {
            max_width_frac: 0.1,
            max_steps: 64,
            shadow: false,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundingStats {
    pub candidates: usize,
    pub exact_evaluations: usize,
    pub bound_decisions: usize,
    pub restarts: usize,
    pub max_steps_since_exact: u32,
    pub shadow_checks: usize,
    pub shadow_violations: usize,
    pub inverted_intervals: usize,
}

impl BoundingStats {
    fn merge(&mut self, o: &BoundingStats) {
        self.exact_evaluations += o.exact_evaluations;
        self.bound_decisions += o.bound_decisions;
        self.restarts += o.restarts;
        self.max_steps_since_exact = self.max_steps_since_exact.max(o.max_steps_since_exact);
        self.shadow_checks += o.shadow_checks;
        self.shadow_violations += o.shadow_violations;
        self.inverted_intervals += o.inverted_intervals;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum BoundedOutcome {
    Pass,
    Fail(Evaluated),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundedSweep {
    pub outcome: BoundedOutcome,
    pub stats: BoundingStats,
}

impl BoundedSweep {
    pub fn passed(&self) -> bool {
        self.outcome == BoundedOutcome::Pass
    }
}

/// `(r, s)` for the step from ℓ to ℓ−1 on a grid with window width `m = ⌈2nε⌉`.
fn step_indices(origin: Origin, ell: i64, m: i64) -> (i64, i64) {
    match origin {
        Origin::PlusGrid => (ell + 1, ell - 2 + m),
        Origin::MinusGrid => (ell + 1 - m, ell - 2),
        _ => unreachable!("bounds exist only for the absolute grids"),
    }
}

struct Direction {
    failure: Option<(i64, Summed)>,
    stats: BoundingStats,
}

fn sweep_family(
    n: u64,
    spec: &ErrorSpec,
    fam: &Family,
    fingerprint: u64,
    cfg: &BoundingConfig,
) -> Result<Direction> {
    let delta = spec.delta();
    let pass_below = delta * (1.0 - 4.0 * U);
    let fail_above = delta * (1.0 + 4.0 * U);
    let m = ceil_div(2 * n as i128 * fam.eps.num(), fam.eps.den()) as i64;
    // Below two indices the grid windows are empty and the expansion does
    // not apply; such points are evaluated directly.
    let recursion_ok = m >= 2;
    let mut stats = BoundingStats::default();
    let mut state: Option<BoundState> = None;
    let mut ell = fam.last;
    while ell >= fam.first {
        let cand = fam.point(n, ell, fingerprint);
        let usable = state.filter(|st| {
            st.upper - st.lower <= cfg.max_width_frac * delta
                && st.steps_since_exact <= cfg.max_steps
        });
        if state.is_some() && usable.is_none() {
            stats.restarts += 1;
        }
        let mut decided = false;
        if let Some(st) = usable {
            stats.max_steps_since_exact = stats.max_steps_since_exact.max(st.steps_since_exact);
            if st.lower > st.upper {
                stats.inverted_intervals += 1;
            }
            if cfg.shadow {
                let s = candidate_complement(n, spec, &cand)?;
                stats.shadow_checks += 1;
                if s.upper() < st.lower || s.lower() > st.upper {
                    stats.shadow_violations += 1;
                }
            }
            if st.upper < pass_below {
                stats.bound_decisions += 1;
                decided = true;
            } else if st.lower > fail_above {
                stats.bound_decisions += 1;
                let s = candidate_complement(n, spec, &cand)?;
                return Ok(Direction {
                    failure: Some((ell, s)),
                    stats,
                });
            }
        }
        if !decided {
            let (pass, s, _) = passes_at_candidate(n, spec, &cand)?;
            stats.exact_evaluations += 1;
            if !pass {
                return Ok(Direction {
                    failure: Some((ell, s)),
                    stats,
                });
            }
            state = Some(BoundState {
                ell,
                lower: s.lower(),
                upper: s.upper(),
                theta: cand.p(),
                r: 0,
                s: 0,
                steps_since_exact: 0,
            });
        }
        if ell > fam.first && recursion_ok {
            let st = state.expect("state is set after a bound or exact step");
            let theta = fam.value(n, ell - 1).to_f64();
            let (r, s) = step_indices(fam.origin, ell, m);
            let db = delta_bounds_at(n, theta, cand.p(), r, s);
            let next = BoundState {
                ell: ell - 1,
                lower: (st.lower + db.delta_lower).max(0.0),
                upper: (st.upper + db.delta_upper).min(1.0),
                theta,
                r,
                s,
                steps_since_exact: st.steps_since_exact + 1,
            };
            state = Some(next);
        } else {
            state = None;
        }
        ell -= 1;
    }
    Ok(Direction {
        failure: None,
        stats,
    })
}

/// Pass/fail at one `n` using recursive bounds on both absolute grids.
///
/// Relative and mixed criteria have no bounding recursion and fall back to
/// the plain sweep.
pub fn sweep_with_bounds(
    n: u64,
    spec: &ErrorSpec,
    interval: &ParamInterval,
    exec: Execution,
    cfg: &BoundingConfig,
) -> Result<BoundedSweep> {
    let plan = Plan::new(n, spec, interval)?;
    let set = plan.enumerate();
    let mut stats = BoundingStats {
        candidates: set.len(),
        ..Default::default()
    };
    // A mixed criterion whose crossover lies past `b` is purely absolute.
    let absolute = plan
        .families
        .iter()
        .all(|f| matches!(f.origin, Origin::PlusGrid | Origin::MinusGrid));
    if !absolute || n < 2 {
        let (outcome, evaluated) = match sweep_set(n, spec, &set, exec)? {
            SweepOutcome::Pass(s) => (BoundedOutcome::Pass, s.candidates_evaluated),
            SweepOutcome::Fail {
                witness,
                candidates_evaluated,
            } => (BoundedOutcome::Fail(witness), candidates_evaluated),
        };
        stats.exact_evaluations = evaluated;
        return Ok(BoundedSweep { outcome, stats });
    }

    for c in &plan.fixed_points() {
        let (pass, s, _) = passes_at_candidate(n, spec, c)?;
        stats.exact_evaluations += 1;
        if !pass {
            return Ok(BoundedSweep {
                outcome: BoundedOutcome::Fail(Evaluated::from_point(&set.to_original(c), s)),
                stats,
            });
        }
    }

    let fp = plan.fingerprint;
    let dirs = par::map(exec, &plan.families, |f| sweep_family(n, spec, f, fp, cfg));
    let mut failure = None;
    for (f, d) in plan.families.iter().zip(dirs) {
        let d = d?;
        stats.merge(&d.stats);
        if failure.is_none() {
            if let Some((ell, s)) = d.failure {
                failure = Some((f.point(n, ell, fp), s));
            }
        }
    }
    let outcome = match failure {
        Some((c, s)) => BoundedOutcome::Fail(Evaluated::from_point(&set.to_original(&c), s)),
        None => BoundedOutcome::Pass,
    };
    Ok(BoundedSweep { outcome, stats })
}
