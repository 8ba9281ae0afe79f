//! Acceptance checks. Runs without the libtest harness so that every
//! criterion prints exactly one PASS/FAIL line.

use std::panic::{self, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use clap::Parser;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tar4ja::cli::{run, Cli};
use tar4ja::density::{de_step, threshold, DeParams, DeState, EdgeGraph, Scratch};
use tar4ja::enumerator::{check_exponent, growth_rate, uniform_grid, EnumeratorParams};
use tar4ja::lifting::{lift, monte_carlo, peel_with, trial_erasures, Schedule};
use tar4ja::spreading::{ar4ja_family, fractional_gap, terminated_ar4ja};
use tar4ja::{BaseMatrix, Rate};

const THRESHOLD_TOL: f64 = 5e-4;
const AR4JA_THRESHOLD: f64 = 0.4387;
const TABLE_THRESHOLDS: [f64; 9] = [0.6608, 0.5864, 0.5496, 0.5284, 0.5159, 0.5083, 0.5039, 0.5016, 0.5004];
const GROWTH_REL_TOL: f64 = 0.02;
const AR4JA_GROWTH: f64 = 0.0145;
const TABLE_GROWTH: [f64; 6] = [0.0946, 0.0461, 0.0306, 0.0234, 0.0192, 0.0164];
const SCALED_GROWTH: f64 = 0.461;
const SCALED_TOL: f64 = 0.002;
const DE_ORACLE_TOL: f64 = 1e-14;

type Outcome = std::result::Result<String, String>;

fn ensure(ok: bool, msg: impl Into<String>) -> std::result::Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn within(elapsed: Duration, limit: Duration, what: &str) -> std::result::Result<(), String> {
    ensure(elapsed < limit, format!("{what} took {elapsed:?}, limit {limit:?}"))
}

fn terminated(e: usize, l: usize) -> BaseMatrix {
    terminated_ar4ja(e, l).unwrap().base
}

fn eps_star(b: &BaseMatrix) -> f64 {
    threshold(b, &DeParams::default()).unwrap().threshold
}

fn structure() -> Outcome {
    let start = Instant::now();
    for e in 0..=3usize {
        for l in 2..=50usize {
            let b = terminated(e, l);
            ensure(b.n_c() == 3 * l + 2, format!("n_c at e={e} L={l}"))?;
            ensure(b.n_v() == (5 + 2 * e) * l, format!("n_v at e={e} L={l}"))?;
            ensure(b.punctured.len() == l, format!("punctured count at e={e} L={l}"))?;
            let rate = Rate::new(((1 + e) * l - 1) as i64, ((2 + e) * l) as i64);
            ensure(b.design_rate().unwrap() == rate, format!("rate at e={e} L={l}"))?;
            if e == 0 {
                let census = b.degree_profile().unwrap().check_census();
                ensure(census.get(&3) == Some(&(l + 4)), format!("degree-3 checks at L={l}: {census:?}"))?;
                ensure(census.get(&6) == Some(&(2 * (l - 1))), format!("degree-6 checks at L={l}: {census:?}"))?;
            }
        }
    }
    within(start.elapsed(), Duration::from_secs(1), "structural checks")?;
    Ok(format!("196 ensembles in {:?}", start.elapsed()))
}

fn block_threshold() -> Outcome {
    let eps = eps_star(&ar4ja_family(0));
    ensure((eps - AR4JA_THRESHOLD).abs() <= THRESHOLD_TOL, format!("eps* = {eps}"))?;
    Ok(format!("eps* = {eps:.5}"))
}

fn table_thresholds() -> Outcome {
    let mut got = Vec::new();
    for (l, &want) in (2..=10).zip(&TABLE_THRESHOLDS) {
        let eps = eps_star(&terminated(0, l));
        ensure((eps - want).abs() <= THRESHOLD_TOL, format!("L={l}: eps* = {eps}, table {want}"))?;
        got.push(format!("{eps:.4}"));
    }
    Ok(got.join(" "))
}

fn large_l_saturation() -> Outcome {
    let ls = [10usize, 20, 50, 100];
    let eps: Vec<f64> = ls.iter().map(|&l| eps_star(&terminated(0, l))).collect();
    let last = eps[3];
    ensure((0.4950..=0.5000).contains(&last), format!("eps*(100) = {last}"))?;
    ensure(eps.windows(2).all(|w| w[1] <= w[0]), format!("not nonincreasing: {eps:?}"))?;
    Ok(format!("{eps:?}"))
}

fn growth_rates() -> Outcome {
    let grid = uniform_grid(1e-4, 0.2, 1e-3);
    let delta = |b: &BaseMatrix| {
        let g = growth_rate(b, EnumeratorParams::default(), &grid).unwrap();
        (g.delta_min, g.converged)
    };
    let rel = |got: f64, want: f64| (got - want).abs() / want;
    let (block, conv) = delta(&ar4ja_family(0));
    ensure(conv, "block optimizer did not converge")?;
    ensure(rel(block, AR4JA_GROWTH) <= GROWTH_REL_TOL, format!("block delta_min = {block}"))?;
    let mut report = vec![format!("block {block:.5}")];
    for (l, &want) in (2..=7).zip(&TABLE_GROWTH) {
        let (d, conv) = delta(&terminated(0, l));
        ensure(conv, format!("L={l} optimizer did not converge"))?;
        ensure(rel(d, want) <= GROWTH_REL_TOL, format!("L={l}: delta_min = {d}, table {want}"))?;
        report.push(format!("L{l} {d:.5}"));
    }
    for l in 7..=9usize {
        let (d, _) = delta(&terminated(0, l));
        let scaled = (4 * l) as f64 * d;
        ensure((scaled - SCALED_GROWTH).abs() <= SCALED_TOL, format!("L={l}: scaled = {scaled}"))?;
        report.push(format!("uL{l} {scaled:.4}"));
    }
    Ok(report.join(", "))
}

/// Number of ways to fill a `d × n` binary array with even rows and column
/// weights `w`, for every `w`; indexed with stride `n + 1`.
fn even_parity_counts(d: usize, n: usize) -> Vec<u128> {
    let side = n + 1;
    let size = side.pow(d as u32);
    let patterns: Vec<Vec<usize>> = (0u32..1 << d)
        .filter(|p| p.count_ones() % 2 == 0)
        .map(|p| (0..d).filter(|&e| p >> e & 1 == 1).collect())
        .collect();
    let mut table = vec![0u128; size];
    table[0] = 1;
    for _ in 0..n {
        let mut next = vec![0u128; size];
        for (idx, &c) in table.iter().enumerate() {
            if c == 0 {
                continue;
            }
            'pattern: for p in &patterns {
                let mut j = idx;
                for &e in p {
                    let stride = side.pow(e as u32);
                    if (idx / stride) % side == n {
                        continue 'pattern;
                    }
                    j += stride;
                }
                next[j] += c;
            }
        }
        table = next;
    }
    table
}

fn enumerator_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst: f64 = 0.0;
    for d in 2..=4usize {
        for n in [10usize, 20, 30] {
            let counts = even_parity_counts(d, n);
            let bound = (d + 1) as f64 * (n as f64).ln() / n as f64;
            for _ in 0..50 {
                let mut w: Vec<usize> = (0..d).map(|_| rng.gen_range(0..=n)).collect();
                // Odd total weight has no even-row filling at all.
                if w.iter().sum::<usize>() % 2 == 1 {
                    w[0] = if w[0] == n { n - 1 } else { w[0] + 1 };
                }
                let idx: usize = w.iter().enumerate().map(|(e, &x)| x * (n + 1).pow(e as u32)).sum();
                let fractions: Vec<f64> = w.iter().map(|&x| x as f64 / n as f64).collect();
                let a = check_exponent(&fractions).unwrap();
                let exact = counts[idx];
                if exact == 0 {
                    ensure(a == f64::NEG_INFINITY, format!("d={d} N={n} w={w:?}: no words but exponent {a}"))?;
                    continue;
                }
                let gap = (a - (exact as f64).ln() / n as f64).abs();
                ensure(gap <= bound, format!("d={d} N={n} w={w:?}: gap {gap} > {bound}"))?;
                worst = worst.max(gap * n as f64 / ((d + 1) as f64 * (n as f64).ln()));
            }
        }
    }
    within(start.elapsed(), Duration::from_secs(60), "enumerator oracle")?;
    Ok(format!("450 vectors, largest gap {:.3} of the bound", worst))
}

fn de_oracle() -> Outcome {
    let start = Instant::now();
    let b = BaseMatrix::new("regular", vec![vec![3, 3]], std::iter::empty()).unwrap();
    let g = EdgeGraph::new(&b).unwrap();
    let mut worst: f64 = 0.0;
    for eps in [0.40, 0.42, 0.44] {
        let mut state = DeState::new(&g);
        let mut scratch = Scratch::default();
        let mut x: f64 = 1.0;
        for it in 0..1000 {
            de_step(&mut state, &g, eps, &mut scratch).unwrap();
            x = eps * (1.0 - (1.0 - x).powi(5)).powi(2);
            for &m in &state.v2c {
                let diff = (m - x).abs();
                ensure(diff <= DE_ORACLE_TOL, format!("eps={eps} iteration {it}: {m} vs {x}"))?;
                worst = worst.max(diff);
            }
        }
    }
    within(start.elapsed(), Duration::from_secs(1), "DE oracle")?;
    Ok(format!("max deviation {worst:e}"))
}

fn simulation_straddle() -> Outcome {
    let b = terminated(0, 2);
    let below = monte_carlo(&b, 1000, 0.61, 2000, 0).unwrap();
    let above = monte_carlo(&b, 1000, 0.71, 2000, 0).unwrap();
    ensure(below.failure_rate < 0.1, format!("failure at 0.61: {}", below.failure_rate))?;
    ensure(above.failure_rate > 0.9, format!("failure at 0.71: {}", above.failure_rate))?;
    let code = lift(&b, 1000, 0).unwrap();
    for t in 0..100 {
        let erased = trial_erasures(&code, 0.66, 1, t);
        let (fifo, rf) = peel_with(&code, &erased, Schedule::Fifo);
        let (lifo, rl) = peel_with(&code, &erased, Schedule::Lifo);
        ensure(fifo == lifo && rf == rl, format!("schedules disagree on trial {t}"))?;
    }
    Ok(format!("failure {} at 0.61, {} at 0.71; 100 trials confluent", below.failure_rate, above.failure_rate))
}

fn gap_at_nine() -> Outcome {
    let l = 9;
    let gap = fractional_gap(eps_star(&terminated(0, l)), Rate::new(4, 9)).unwrap();
    ensure((0.090..=0.105).contains(&gap), format!("gap = {gap}"))?;
    Ok(format!("gap = {gap:.4}"))
}

fn cli_output(args: &str) -> String {
    let cli = Cli::try_parse_from(std::iter::once("tar4ja").chain(args.split_whitespace())).unwrap();
    run(&cli).unwrap()
}

fn determinism() -> Outcome {
    let k = std::thread::available_parallelism().map_or(4, |n| n.get()).max(4);
    let mut sizes = Vec::new();
    for cmd in ["table1 --format csv", "simulate --L 2 --lift-N 1000 --eps 0.66 --trials 2000 --seed 7"] {
        let one = cli_output(&format!("{cmd} --threads 1"));
        let many = cli_output(&format!("{cmd} --threads {k}"));
        ensure(one == many, format!("'{cmd}' differs between 1 and {k} threads"))?;
        sizes.push(one.len());
    }
    Ok(format!("1 vs {k} threads identical ({} and {} bytes)", sizes[0], sizes[1]))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("structural exactness", structure),
        ("AR4JA block threshold", block_threshold),
        ("terminated thresholds", table_thresholds),
        ("large-L threshold saturation", large_l_saturation),
        ("growth rates", growth_rates),
        ("enumerator oracle", enumerator_oracle),
        ("DE oracle equivalence", de_oracle),
        ("simulation straddle", simulation_straddle),
        ("fractional gap at L = 9", gap_at_nine),
        ("thread-count determinism", determinism),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = panic::catch_unwind(AssertUnwindSafe(check))
            .unwrap_or_else(|p| Err(p.downcast_ref::<String>().cloned().unwrap_or_else(|| "panicked".into())));
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {:>2} {name}: {detail} [{secs:.1}s]", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {why} [{secs:.1}s]", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
