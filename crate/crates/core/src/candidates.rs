//! Finite candidate sets on which the minimum coverage over an interval is
//! attained.
//!
//! Grid points are kept as `(origin, ℓ)` with an exact rational value, so
//! coincident points from different grids collapse by exact equality and
//! open-interval membership is decided on integer index ranges.

use std::cmp::Ordering;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exact::{big_ceil, big_floor, ceil_div, floor_div, Frac};
use crate::spec::{Criterion, ErrorSpec, ParamInterval};

/// Where a candidate point comes from. The declaration order is the
/// priority used when two origins produce the same value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    EndpointA,
    EndpointB,
    Crossover,
    /// `ℓ/n + ε`
    PlusGrid,
    /// `ℓ/n − ε`
    MinusGrid,
    /// `ℓ/(n(1−ε))`
    RelLowGrid,
    /// `ℓ/(n(1+ε))`
    RelHighGrid,
}

impl Origin {
    pub fn name(&self) -> &'static str {
        match self {
            Origin::EndpointA => "endpoint_a",
            Origin::EndpointB => "endpoint_b",
            Origin::Crossover => "crossover",
            Origin::PlusGrid => "plus_grid",
            Origin::MinusGrid => "minus_grid",
            Origin::RelLowGrid => "rel_low_grid",
            Origin::RelHighGrid => "rel_high_grid",
        }
    }

    pub fn is_grid(&self) -> bool {
        matches!(
            self,
            Origin::PlusGrid | Origin::MinusGrid | Origin::RelLowGrid | Origin::RelHighGrid
        )
    }
}

/// One candidate `p` together with its acceptance window `[lo, hi]` for `K`.
#[derive(Debug, Clone, Copy)]
pub struct CandidatePoint {
    p: f64,
    exact: Frac,
    origin: Origin,
    ell: Option<i64>,
    lo: i64,
    hi: i64,
    n: u64,
    fingerprint: u64,
}

impl CandidatePoint {
    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn exact(&self) -> Frac {
        self.exact
    }

    pub fn origin(&self) -> Origin {
        self.origin
    }

    pub fn ell(&self) -> Option<i64> {
        self.ell
    }

    /// Inclusive window of successes counted as covered.
    pub fn window(&self) -> (i64, i64) {
        (self.lo, self.hi)
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    /// Fails unless this point was enumerated for `(n, spec)`.
    pub fn check(&self, n: u64, spec: &ErrorSpec) -> Result<()> {
        if self.n != n || self.fingerprint != spec.fingerprint() {
            return Err(Error::InconsistentCandidate {
                expected_n: n,
                found_n: self.n,
            });
        }
        Ok(())
    }

    /// The mirror image `1 − p` under the absolute criterion, which has the
    /// mirrored window and therefore the same coverage.
    pub fn reflect(&self) -> CandidatePoint {
        let n = self.n as i64;
        let (origin, ell) = match self.origin {
            Origin::EndpointA => (Origin::EndpointB, None),
            Origin::EndpointB => (Origin::EndpointA, None),
            Origin::PlusGrid => (Origin::MinusGrid, self.ell.map(|l| n - l)),
            Origin::MinusGrid => (Origin::PlusGrid, self.ell.map(|l| n - l)),
            other => (other, self.ell),
        };
        let exact = self.exact.one_minus();
        CandidatePoint {
            p: exact.to_f64(),
            exact,
            origin,
            ell,
            lo: n - self.hi,
            hi: n - self.lo,
            ..*self
        }
    }
}

/// Candidates for one `(n, spec, interval)`, ascending by `p`.
#[derive(Debug, Clone)]
pub struct CandidateSet {
    n: u64,
    points: Vec<CandidatePoint>,
    interval: ParamInterval,
    reduced: bool,
}

impl CandidateSet {
    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn points(&self) -> &[CandidatePoint] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Whether the points live on the symmetry-reduced interval.
    pub fn is_reduced(&self) -> bool {
        self.reduced
    }

    /// Maps a point of this set to an equivalent point inside the original
    /// interval.
    pub fn to_original(&self, c: &CandidatePoint) -> CandidatePoint {
        to_original(self.reduced, &self.interval, c)
    }
}

fn to_original(reduced: bool, interval: &ParamInterval, c: &CandidatePoint) -> CandidatePoint {
    if !reduced || (interval.a_exact() <= c.exact && c.exact <= interval.b_exact()) {
        *c
    } else {
        c.reflect()
    }
}

/// `[a′, b′]` as an interval of its own.
pub fn symmetry_reduce(interval: &ParamInterval) -> ParamInterval {
    let (a, b) = interval.reduced_exact();
    ParamInterval::from_fracs(a, b)
}

/// A grid family: points `p` with `coord(p) = ℓ` for consecutive integers ℓ.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Family {
    pub(crate) origin: Origin,
    pub(crate) eps: Frac,
    pub(crate) first: i64,
    pub(crate) last: i64,
}

fn big(x: i128) -> BigRational {
    BigRational::from_integer(BigInt::from(x))
}

impl Family {
    /// Real index coordinate of `p`; grid points sit at its integer values.
    fn coord(origin: Origin, eps: Frac, n: u64, p: &BigRational) -> BigRational {
        let nn = big(n as i128);
        let e = eps.to_big();
        match origin {
            Origin::PlusGrid => nn * (p - e),
            Origin::MinusGrid => nn * (p + e),
            Origin::RelLowGrid => nn * p * (BigRational::one() - e),
            Origin::RelHighGrid => nn * p * (BigRational::one() + e),
            _ => unreachable!("not a grid origin"),
        }
    }

    /// Grid indices strictly inside `(lo, hi)`.
    fn new(origin: Origin, eps: Frac, n: u64, lo: Frac, hi: Frac) -> Family {
        let first = big_floor(&Family::coord(origin, eps, n, &lo.to_big())) + 1;
        let last = big_ceil(&Family::coord(origin, eps, n, &hi.to_big())) - 1;
        Family {
            origin,
            eps,
            first,
            last,
        }
    }

    fn count(&self) -> usize {
        (self.last - self.first + 1).max(0) as usize
    }

    pub(crate) fn value(&self, n: u64, ell: i64) -> Frac {
        let (en, ed) = (self.eps.num(), self.eps.den());
        let (l, n) = (ell as i128, n as i128);
        match self.origin {
            Origin::PlusGrid => Frac::new(l * ed + n * en, n * ed),
            Origin::MinusGrid => Frac::new(l * ed - n * en, n * ed),
            Origin::RelLowGrid => Frac::new(l * ed, n * (ed - en)),
            Origin::RelHighGrid => Frac::new(l * ed, n * (ed + en)),
            _ => unreachable!("not a grid origin"),
        }
    }

    /// Closed-form window at grid point ℓ.
    fn window(&self, n: u64, ell: i64) -> (i64, i64) {
        let (en, ed) = (self.eps.num(), self.eps.den());
        let l = ell as i128;
        let (lo, hi) = match self.origin {
            Origin::PlusGrid => (l + 1, l - 1 + ceil_div(2 * n as i128 * en, ed)),
            Origin::MinusGrid => (l + 1 - ceil_div(2 * n as i128 * en, ed), l - 1),
            Origin::RelLowGrid => (l + 1, ceil_div(l * (ed + en), ed - en) - 1),
            Origin::RelHighGrid => (floor_div(l * (ed - en), ed + en) + 1, l - 1),
            _ => unreachable!("not a grid origin"),
        };
        (lo as i64, hi as i64)
    }

    pub(crate) fn point(&self, n: u64, ell: i64, fingerprint: u64) -> CandidatePoint {
        let exact = self.value(n, ell);
        let (lo, hi) = self.window(n, ell);
        CandidatePoint {
            p: exact.to_f64(),
            exact,
            origin: self.origin,
            ell: Some(ell),
            lo,
            hi,
            n,
            fingerprint,
        }
    }

    /// Grid points adjacent to `p` (at most two).
    fn neighbours(&self, n: u64, p: &BigRational) -> Vec<i64> {
        if self.count() == 0 {
            return Vec::new();
        }
        let c = big_floor(&Family::coord(self.origin, self.eps, n, p));
        let mut out = vec![
            c.clamp(self.first, self.last),
            (c + 1).clamp(self.first, self.last),
        ];
        out.dedup();
        out
    }
}

/// Everything needed to produce the candidates of one `(n, spec, interval)`.
pub(crate) struct Plan {
    n: u64,
    spec: ErrorSpec,
    pub(crate) fingerprint: u64,
    interval: ParamInterval,
    reduced: bool,
    /// Exact non-grid points: endpoints and the crossover.
    fixed: Vec<(Origin, Frac)>,
    pub(crate) families: Vec<Family>,
}

impl Plan {
    pub(crate) fn new(n: u64, spec: &ErrorSpec, interval: &ParamInterval) -> Result<Plan> {
        if n == 0 {
            return Err(Error::invalid("n must be positive"));
        }
        interval.validate_for(spec)?;
        let absolute = |reduce: bool| -> Plan {
            let eps = spec.eps_abs_param().expect("absolute margin").exact();
            let (a, b) = if reduce {
                interval.reduced_exact()
            } else {
                (interval.a_exact(), interval.b_exact())
            };
            Plan {
                n,
                spec: *spec,
                fingerprint: spec.fingerprint(),
                interval: *interval,
                reduced: reduce,
                fixed: vec![(Origin::EndpointA, a), (Origin::EndpointB, b)],
                families: vec![
                    Family::new(Origin::PlusGrid, eps, n, a, b),
                    Family::new(Origin::MinusGrid, eps, n, a, b),
                ],
            }
        };
        let relative = |a: Frac, b: Frac| -> Vec<Family> {
            let eps = spec.eps_rel_param().expect("relative margin").exact();
            vec![
                Family::new(Origin::RelLowGrid, eps, n, a, b),
                Family::new(Origin::RelHighGrid, eps, n, a, b),
            ]
        };
        let (a, b) = (interval.a_exact(), interval.b_exact());
        Ok(match spec.kind() {
            Criterion::Absolute => absolute(true),
            Criterion::Relative => Plan {
                n,
                spec: *spec,
                fingerprint: spec.fingerprint(),
                interval: *interval,
                reduced: false,
                fixed: vec![(Origin::EndpointA, a), (Origin::EndpointB, b)],
                families: relative(a, b),
            },
            Criterion::Mixed => {
                let c = spec.crossover().expect("mixed has a crossover");
                if c >= b {
                    absolute(true)
                } else if c <= a {
                    Plan {
                        n,
                        spec: *spec,
                        fingerprint: spec.fingerprint(),
                        interval: *interval,
                        reduced: false,
                        fixed: vec![(Origin::EndpointA, a), (Origin::EndpointB, b)],
                        families: relative(a, b),
                    }
                } else {
                    let eps = spec.eps_abs_param().expect("absolute margin").exact();
                    let mut families = vec![
                        Family::new(Origin::PlusGrid, eps, n, a, c),
                        Family::new(Origin::MinusGrid, eps, n, a, c),
                    ];
                    families.extend(relative(c, b));
                    Plan {
                        n,
                        spec: *spec,
                        fingerprint: spec.fingerprint(),
                        interval: *interval,
                        reduced: false,
                        fixed: vec![
                            (Origin::EndpointA, a),
                            (Origin::EndpointB, b),
                            (Origin::Crossover, c),
                        ],
                        families,
                    }
                }
            }
        })
    }

    fn fixed_point(&self, origin: Origin, exact: Frac) -> CandidatePoint {
        let (lo, hi) = self.spec.window_exact(self.n, &exact.to_big());
        CandidatePoint {
            p: exact.to_f64(),
            exact,
            origin,
            ell: None,
            lo,
            hi,
            n: self.n,
            fingerprint: self.fingerprint,
        }
    }

    pub(crate) fn fixed_points(&self) -> Vec<CandidatePoint> {
        self.fixed
            .iter()
            .map(|&(origin, x)| self.fixed_point(origin, x))
            .collect()
    }

    pub(crate) fn enumerate(&self) -> CandidateSet {
        let total: usize =
            self.fixed.len() + self.families.iter().map(Family::count).sum::<usize>();
        let mut points = Vec::with_capacity(total);
        for &(origin, x) in &self.fixed {
            points.push(self.fixed_point(origin, x));
        }
        for f in &self.families {
            for ell in f.first..=f.last {
                points.push(f.point(self.n, ell, self.fingerprint));
            }
        }
        points.sort_by(|x, y| x.exact.cmp(&y.exact).then(x.origin.cmp(&y.origin)));
        points.dedup_by(|later, earlier| later.exact == earlier.exact);
        CandidateSet {
            n: self.n,
            points,
            interval: self.interval,
            reduced: self.reduced,
        }
    }

    fn nearest(&self, target: &BigRational) -> CandidatePoint {
        let mut best: Option<(BigRational, CandidatePoint)> = None;
        let half = BigRational::new(1.into(), 2.into());
        let mut consider = |c: CandidatePoint| {
            let v = c.exact.to_big();
            let d = (&v - target).abs();
            let better = match &best {
                None => true,
                Some((bd, bc)) => match d.cmp(bd) {
                    Ordering::Less => true,
                    Ordering::Greater => false,
                    Ordering::Equal => {
                        let dh = (&v - &half).abs();
                        let bh = (bc.exact.to_big() - &half).abs();
                        match dh.cmp(&bh) {
                            Ordering::Less => true,
                            Ordering::Greater => false,
                            Ordering::Equal => (c.exact, c.origin) < (bc.exact, bc.origin),
                        }
                    }
                },
            };
            if better {
                best = Some((d, c));
            }
        };
        for &(origin, x) in &self.fixed {
            consider(self.fixed_point(origin, x));
        }
        for f in &self.families {
            for ell in f.neighbours(self.n, target) {
                consider(f.point(self.n, ell, self.fingerprint));
            }
        }
        let best = best.expect("endpoints are always present").1;
        to_original(self.reduced, &self.interval, &best)
    }
}

/// Candidate set for any criterion. The absolute criterion (and a mixed
/// criterion whose crossover lies at or beyond `b`) is enumerated on the
/// symmetry-reduced interval.
pub fn enumerate(n: u64, spec: &ErrorSpec, interval: &ParamInterval) -> Result<CandidateSet> {
    Ok(Plan::new(n, spec, interval)?.enumerate())
}

/// The candidate of `(n, spec, interval)` nearest to `p`, without
/// enumerating the whole set. Ties go toward ½, then toward the smaller value.
/// The result lies in the original interval.
pub fn nearest_candidate(
    n: u64,
    spec: &ErrorSpec,
    interval: &ParamInterval,
    p: Frac,
) -> Result<CandidatePoint> {
    let plan = Plan::new(n, spec, interval)?;
    let target = if plan.reduced && p > Frac::new(1, 2) {
        p.one_minus()
    } else {
        p
    };
    Ok(plan.nearest(&target.to_big()))
}

fn points(n: u64, spec: &ErrorSpec, interval: &ParamInterval) -> Result<Vec<CandidatePoint>> {
    Ok(enumerate(n, spec, interval)?.points)
}

/// `{a′, b′} ∪ {ℓ/n ± ε}` on the symmetry-reduced interval.
pub fn candidates_abs(n: u64, eps: f64, interval: &ParamInterval) -> Result<Vec<CandidatePoint>> {
    points(n, &ErrorSpec::absolute(eps, 0.5)?, interval)
}

/// `{a, b} ∪ {ℓ/(n(1±ε))}`; requires `a > 0`.
pub fn candidates_rel(n: u64, eps: f64, interval: &ParamInterval) -> Result<Vec<CandidatePoint>> {
    points(n, &ErrorSpec::relative(eps, 0.5)?, interval)
}

/// Endpoints and crossover, both absolute grids below the crossover and both
/// relative grids above it.
pub fn candidates_mixed(
    n: u64,
    eps_abs: f64,
    eps_rel: f64,
    interval: &ParamInterval,
) -> Result<Vec<CandidatePoint>> {
    points(n, &ErrorSpec::mixed(eps_abs, eps_rel, 0.5)?, interval)
}
