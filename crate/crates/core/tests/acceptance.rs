//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::time::{Duration, Instant};

use binsize_core::{
    baseline_bernoulli, baseline_chernoff, coverage_at, coverage_at_candidate, coverage_window,
    enumerate, exact_small_coverage, grid_min_coverage, min_coverage, min_sample_size,
    monte_carlo_coverage, sum_range, sweep, sweep_with_bounds, BoundingConfig, Criterion,
    ErrorSpec, Execution, ParamInterval, SampleSizeReport,
};
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::ToPrimitive;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SEED: u64 = 20_240_601;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

/// `(ε, δ, n)` rows of the absolute table.
const ABS_TABLE: [(f64, f64, u64); 9] = [
    (0.1, 0.05, 101),
    (0.1, 0.01, 171),
    (0.1, 0.001, 276),
    (0.05, 0.05, 391),
    (0.05, 0.01, 671),
    (0.05, 0.001, 1091),
    (0.01, 0.05, 9651),
    (0.01, 0.01, 16601),
    (0.01, 0.001, 27101),
];

/// `(εa, δ, n)` rows of the mixed table, all with `εr = 0.1`.
const MIXED_TABLE: [(f64, f64, u64); 9] = [
    (0.05, 0.05, 391),
    (0.05, 0.01, 671),
    (0.05, 0.001, 1091),
    (0.01, 0.05, 3501),
    (0.01, 0.01, 6051),
    (0.01, 0.001, 9801),
    (0.005, 0.05, 7401),
    (0.005, 0.01, 12701),
    (0.005, 0.001, 20701),
];
const MIXED_EPS_REL: f64 = 0.1;

struct Reproduced {
    spec: ErrorSpec,
    expected: u64,
    report: SampleSizeReport,
}

fn reproduce(specs: &[(ErrorSpec, u64)]) -> (Vec<Reproduced>, Duration) {
    let start = Instant::now();
    let rows = specs
        .iter()
        .map(|(spec, expected)| Reproduced {
            spec: *spec,
            expected: *expected,
            report: min_sample_size(spec, &ParamInterval::unit()).expect("search succeeds"),
        })
        .collect();
    (rows, start.elapsed())
}

fn table_outcome(rows: &[Reproduced], took: Duration, budget: Duration) -> Outcome {
    let wrong: Vec<String> = rows
        .iter()
        .filter(|r| r.report.n_min != r.expected)
        .map(|r| format!("expected {} got {}", r.expected, r.report.n_min))
        .collect();
    let got: Vec<String> = rows.iter().map(|r| r.report.n_min.to_string()).collect();
    outcome(
        wrong.is_empty() && took <= budget,
        format!(
            "n = [{}] in {:.1}s (budget {}s){}",
            got.join(", "),
            took.as_secs_f64(),
            budget.as_secs(),
            if wrong.is_empty() {
                String::new()
            } else {
                format!("; mismatches: {}", wrong.join("; "))
            }
        ),
    )
}

fn criterion_3(rows: &[&Reproduced]) -> Outcome {
    let unit = ParamInterval::unit();
    let mut bad = Vec::new();
    for r in rows {
        let n = r.report.n_min;
        let witness_ok = r
            .report
            .fail_witness_at_n_minus_1
            .as_ref()
            .is_some_and(|w| w.n == n - 1 && w.complement >= r.spec.delta());
        let below = sweep(n - 1, &r.spec, &unit, Execution::Parallel).unwrap();
        let at = sweep(n, &r.spec, &unit, Execution::Parallel).unwrap();
        let summary_ok = r.report.summary_at_n.min_coverage > 1.0 - r.spec.delta();
        if !(witness_ok && !below.passed() && at.passed() && summary_ok) {
            bad.push(format!("{:?} n={n}", r.spec.kind()));
        }
    }
    outcome(
        bad.is_empty(),
        format!(
            "{} entries: n-1 fails with a recorded witness and n passes{}",
            rows.len(),
            if bad.is_empty() {
                String::new()
            } else {
                format!("; violated for {}", bad.join(", "))
            }
        ),
    )
}

fn criterion_4() -> Outcome {
    let start = Instant::now();
    let intervals = [(0.0, 1.0), (0.0, 0.5), (0.2, 0.4)];
    let mut instances = 0;
    let mut below_grid = 0;
    let mut far = 0;
    let mut worst: f64 = 0.0;
    for n in 5..=50u64 {
        for eps in [0.05, 0.1, 0.2] {
            let spec = ErrorSpec::absolute(eps, 0.05).unwrap();
            for (a, b) in intervals {
                let iv = ParamInterval::new(a, b).unwrap();
                let cand = min_coverage(n, &spec, &iv).unwrap().min_coverage;
                let grid = grid_min_coverage(n, &spec, &iv, 100_000, Execution::Parallel)
                    .unwrap()
                    .grid_min_coverage;
                instances += 1;
                if cand <= grid + 1e-12 {
                    below_grid += 1;
                }
                let gap = (cand - grid).abs();
                worst = worst.max(gap);
                if gap > 1e-6 {
                    far += 1;
                }
            }
        }
    }
    let took = start.elapsed();
    outcome(
        below_grid == instances && far == 0 && took <= Duration::from_secs(120),
        format!(
            "candidate min <= grid min + 1e-12 on {below_grid}/{instances}; \
             |candidate min - grid min| <= 1e-6 on {}/{instances} (worst {worst:.3e}); {:.1}s",
            instances - far,
            took.as_secs_f64()
        ),
    )
}

fn criterion_5() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut worst: f64 = 0.0;
    let mut failures = 0;
    let trials = 1000;
    for i in 0..trials {
        let n = rng.gen_range(1..=30u64);
        let ea = rng.gen_range(1..=600u32) as f64 / 1000.0;
        let er = rng.gen_range(1..=900u32) as f64 / 1000.0;
        let spec = match i % 3 {
            0 => ErrorSpec::absolute(ea, 0.05),
            1 => ErrorSpec::relative(er, 0.05),
            _ => ErrorSpec::mixed(ea, er, 0.05),
        }
        .unwrap();
        let (exact_p, float) = if i % 2 == 0 {
            // A random dyadic point, where the float p is exact.
            let j = rng.gen_range(1..1u32 << 16);
            let p = BigRational::new(BigInt::from(j), BigInt::from(1u32 << 16));
            (p, coverage_at(n, &spec, j as f64 / 65536.0).unwrap())
        } else {
            // A random candidate point, evaluated through its closed-form window.
            let (a, b) = if spec.kind() == Criterion::Absolute {
                (0.0, 1.0)
            } else {
                (0.001, 1.0)
            };
            let set = enumerate(n, &spec, &ParamInterval::new(a, b).unwrap()).unwrap();
            let c = set.points()[rng.gen_range(0..set.len())];
            (
                c.exact().to_big(),
                coverage_at_candidate(n, &spec, &c).unwrap(),
            )
        };
        let exact = exact_small_coverage(n, &spec, &exact_p)
            .unwrap()
            .to_f64()
            .unwrap();
        let err = if exact == 0.0 {
            float.abs()
        } else {
            ((float - exact) / exact).abs()
        };
        worst = worst.max(err);
        if err > 1e-13 {
            failures += 1;
        }
    }
    outcome(
        failures == 0,
        format!("{trials} instances, {failures} above 1e-13, worst relative error {worst:.3e}"),
    )
}

fn criterion_6() -> Outcome {
    let unit = ParamInterval::unit();
    let cfg = BoundingConfig {
        shadow: true,
        ..BoundingConfig::default()
    };
    let mut instances = 0;
    let mut mismatched = Vec::new();
    let mut checks = 0;
    let mut violations = 0;
    let mut inverted = 0;
    for n in 10..=200u64 {
        for eps in [0.05, 0.1] {
            for delta in [0.05, 0.01] {
                let spec = ErrorSpec::absolute(eps, delta).unwrap();
                let bounded =
                    sweep_with_bounds(n, &spec, &unit, Execution::Parallel, &cfg).unwrap();
                let plain = sweep(n, &spec, &unit, Execution::Parallel).unwrap();
                instances += 1;
                if bounded.passed() != plain.passed() {
                    mismatched.push(format!("n={n} eps={eps} delta={delta}"));
                }
                checks += bounded.stats.shadow_checks;
                violations += bounded.stats.shadow_violations;
                inverted += bounded.stats.inverted_intervals;
            }
        }
    }
    outcome(
        mismatched.is_empty() && violations == 0 && inverted == 0 && checks > 0,
        format!(
            "{instances} instances, {} decision mismatches; {checks} bounded intervals shadowed, \
             {violations} missed the exact complement, {inverted} inverted",
            mismatched.len()
        ),
    )
}

fn criterion_7(rows: &[&Reproduced]) -> Outcome {
    let mut bad = Vec::new();
    for r in rows {
        let n = r.report.n_min;
        let (c, b) = (r.report.baseline_chernoff, r.report.baseline_bernoulli);
        if !(c.is_some_and(|c| n <= c) && b.is_some_and(|b| n <= b)) {
            bad.push(format!("n={n} chernoff={c:?} bernoulli={b:?}"));
        }
    }
    let chernoff = baseline_chernoff(0.1, 0.05).unwrap();
    let bernoulli = baseline_bernoulli(0.1, 0.05).unwrap();
    outcome(
        bad.is_empty() && chernoff == 185 && bernoulli == 501,
        format!(
            "{} queries dominated; chernoff(0.1, 0.05) = {chernoff}, bernoulli(0.1, 0.05) = {bernoulli}{}",
            rows.len() - bad.len(),
            if bad.is_empty() {
                String::new()
            } else {
                format!("; not dominated: {}", bad.join(", "))
            }
        ),
    )
}

fn criterion_8() -> Outcome {
    let spec = ErrorSpec::absolute(0.1, 0.05).unwrap();
    let mut parts = Vec::new();
    let mut pass = true;
    for p in [0.1, 0.3, 0.5] {
        let mc = monte_carlo_coverage(101, &spec, p, 1_000_000, 42, Execution::Parallel).unwrap();
        let exact = coverage_at(101, &spec, p).unwrap();
        let z = (mc.empirical_coverage - exact).abs() / mc.std_error;
        pass &= z <= 5.0;
        parts.push(format!("p={p}: z={z:.2}"));
    }
    outcome(pass, format!("{} (10^6 trials, seed 42)", parts.join(", ")))
}

fn criterion_9() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 9);
    let mut endpoint_bad = 0;
    for _ in 0..500 {
        let n = rng.gen_range(2..=200u64);
        let g = rng.gen_range(1..n as i64);
        let h = rng.gen_range(g..n as i64);
        let x: f64 = rng.gen_range(1e-6..1.0 - 1e-6);
        let y: f64 = rng.gen_range(1e-6..1.0 - 1e-6);
        let (u, v) = (x.min(y), x.max(y));
        let s = |p: f64| sum_range(n, g, h, p).unwrap().value;
        let ends = s(u).min(s(v));
        let grid_min = (0..=1000)
            .map(|i| s(u + (v - u) * i as f64 / 1000.0))
            .fold(f64::INFINITY, f64::min);
        if grid_min < ends - 1e-12 {
            endpoint_bad += 1;
        }
    }

    let mut window_bad = 0;
    for i in 0..500 {
        let n = rng.gen_range(1..=100u64);
        let ea = rng.gen_range(1..=500u32) as f64 / 1000.0;
        let er = rng.gen_range(1..=900u32) as f64 / 1000.0;
        let spec = match i % 3 {
            0 => ErrorSpec::absolute(ea, 0.05),
            1 => ErrorSpec::relative(er, 0.05),
            _ => ErrorSpec::mixed(ea, er, 0.05),
        }
        .unwrap();
        let x = rng.gen_range(1..=1000u32) as f64 / 1000.0;
        let y = rng.gen_range(1..=1000u32) as f64 / 1000.0;
        if x == y {
            continue;
        }
        let iv = ParamInterval::new(x.min(y), x.max(y)).unwrap();
        let set = enumerate(n, &spec, &iv).unwrap();
        let mut pts: Vec<f64> = set.points().iter().map(|c| c.p()).collect();
        pts.sort_by(f64::total_cmp);
        let constant = pts.windows(2).filter(|w| w[1] - w[0] > 1e-12).all(|w| {
            let at = |t: f64| {
                let cw = coverage_window(n, &spec, w[0] + t * (w[1] - w[0])).unwrap();
                (cw.g, cw.h)
            };
            at(0.25) == at(0.5) && at(0.5) == at(0.75)
        });
        if !constant {
            window_bad += 1;
        }
    }
    outcome(
        endpoint_bad == 0 && window_bad == 0,
        format!(
            "fixed-window minimum at an endpoint: {} of 500 violate; \
             window constant between candidates: {window_bad} of 500 violate",
            endpoint_bad
        ),
    )
}

fn main() {
    // `cargo test` passes harness flags; only a listing request needs handling.
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    let mut results: Vec<(u32, Outcome)> = Vec::new();

    let abs_specs: Vec<_> = ABS_TABLE
        .iter()
        .map(|&(e, d, n)| (ErrorSpec::absolute(e, d).unwrap(), n))
        .collect();
    let (abs_rows, abs_time) = reproduce(&abs_specs);
    results.push((
        1,
        table_outcome(&abs_rows, abs_time, Duration::from_secs(300)),
    ));

    let mixed_specs: Vec<_> = MIXED_TABLE
        .iter()
        .map(|&(e, d, n)| (ErrorSpec::mixed(e, MIXED_EPS_REL, d).unwrap(), n))
        .collect();
    let (mixed_rows, mixed_time) = reproduce(&mixed_specs);
    results.push((
        2,
        table_outcome(&mixed_rows, mixed_time, Duration::from_secs(600)),
    ));

    let all: Vec<&Reproduced> = abs_rows.iter().chain(&mixed_rows).collect();
    results.push((3, criterion_3(&all)));
    results.push((4, criterion_4()));
    results.push((5, criterion_5()));
    results.push((6, criterion_6()));
    results.push((7, criterion_7(&all)));
    results.push((8, criterion_8()));
    results.push((9, criterion_9()));

    let mut failed = 0;
    for (id, o) in &results {
        println!(
            "criterion {id}: {} {}",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        );
        failed += usize::from(!o.pass);
    }
    println!(
        "{} of {} criteria passed",
        results.len() - failed,
        results.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
