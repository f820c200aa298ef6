//! Minimum sample sizes for estimating a binomial proportion with a
//! guaranteed coverage probability, computed by exact evaluation over a
//! finite set of candidate points.

/// Tag stored next to cached results; bump when results could change.
pub const ALGORITHM_VERSION: &str = concat!("binsize-core/", env!("CARGO_PKG_VERSION"));

pub mod bounding;
pub mod candidates;
pub mod coverage;
pub mod error;
pub mod exact;
pub mod kernel;
pub mod oracle;
pub mod par;
pub mod search;
pub mod spec;

pub use bounding::{
    b_over, b_under, delta_bounds, sweep_with_bounds, BoundedOutcome, BoundedSweep, BoundingConfig,
    BoundingStats, DeltaBounds,
};
pub use candidates::{
    candidates_abs, candidates_mixed, candidates_rel, enumerate, nearest_candidate,
    symmetry_reduce, CandidatePoint, CandidateSet, Origin,
};
pub use coverage::{
    candidate_complement, complement_at, coverage_at, coverage_at_candidate, coverage_window,
    min_coverage, min_coverage_with, passes_at_candidate, sweep, trace, visit_order,
    CoverageSummary, CoverageWindow, DecidedBy, Evaluated, SweepOutcome, EXACT_MAX_N,
};
pub use error::{Error, Result};
pub use exact::Frac;
pub use kernel::{complement_sum, pmf, sum_range, Summed};
pub use oracle::{
    exact_small_coverage, grid_min_coverage, monte_carlo_coverage, GridScanResult, MonteCarloResult,
};
pub use par::{configure_threads, Execution};
pub use search::{
    baseline_bernoulli, baseline_chernoff, baseline_normal, min_sample_size, min_sample_size_with,
    FailedBy, FailureWitness, SampleSizeReport, SearchOptions, DEFAULT_MAX_N,
};
pub use spec::{Criterion, ErrorSpec, ParamInterval};
