//! Permutation lifting of base matrices and Monte Carlo peeling on the BEC.

use std::collections::{BTreeSet, VecDeque};
use std::io::{self, Write};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::protograph::BaseMatrix;

const PERMUTATION_ATTEMPTS: usize = 1000;
const WILSON_Z: f64 = 1.959_963_984_540_054;

/// A lifted parity-check matrix stored as row and column adjacency lists.
///
/// Bit `k·N + i` is copy `i` of base column `k`; check `j·N + a` is copy
/// `a` of base row `j`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LiftedCode {
    pub rows: Vec<Vec<u32>>,
    pub cols: Vec<Vec<u32>>,
    pub lift_factor: usize,
    pub punctured_bits: BTreeSet<usize>,
    pub seed: u64,
}

impl LiftedCode {
    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_cols(&self) -> usize {
        self.cols.len()
    }

    pub fn nnz(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    /// Writes the matrix as `rows cols nnz` followed by zero-indexed
    /// `row col` pairs in row-major order.
    pub fn write_coordinate<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "{} {} {}", self.n_rows(), self.n_cols(), self.nnz())?;
        for (r, row) in self.rows.iter().enumerate() {
            let mut sorted = row.clone();
            sorted.sort_unstable();
            for c in sorted {
                writeln!(out, "{r} {c}")?;
            }
        }
        Ok(())
    }
}

fn sample_block(rng: &mut ChaCha8Rng, n: usize, m: u32) -> Option<Vec<Vec<usize>>> {
    let mut perms: Vec<Vec<usize>> = Vec::with_capacity(m as usize);
    for _ in 0..m {
        let mut found = None;
        for _ in 0..PERMUTATION_ATTEMPTS {
            let mut p: Vec<usize> = (0..n).collect();
            p.shuffle(rng);
            if perms.iter().all(|q| p.iter().zip(q).all(|(a, b)| a != b)) {
                found = Some(p);
                break;
            }
        }
        perms.push(found?);
    }
    Some(perms)
}

/// Replaces every base entry `m` by a sum of `m` disjoint `N×N` permutation
/// matrices.
pub fn lift(b: &BaseMatrix, n: usize, seed: u64) -> Result<LiftedCode> {
    b.ensure_valid()?;
    let max_entry = b.max_entry();
    if n == 0 || n < max_entry as usize {
        return Err(Error::LiftBelowMultiplicity { n, max_entry });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = vec![Vec::new(); b.n_c() * n];
    let mut cols = vec![Vec::new(); b.n_v() * n];
    for j in 0..b.n_c() {
        for k in 0..b.n_v() {
            let m = b.multiplicity(j, k);
            if m == 0 {
                continue;
            }
            let perms = sample_block(&mut rng, n, m)
                .or_else(|| sample_block(&mut rng, n, m))
                .ok_or(Error::PermutationSampling { row: j, col: k })?;
            for p in &perms {
                for (a, &i) in p.iter().enumerate() {
                    let (r, c) = (j * n + a, k * n + i);
                    rows[r].push(c as u32);
                    cols[c].push(r as u32);
                }
            }
        }
    }
    let punctured_bits = b
        .punctured
        .iter()
        .flat_map(|&k| k * n..(k + 1) * n)
        .collect();
    Ok(LiftedCode { rows, cols, lift_factor: n, punctured_bits, seed })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct TrialOutcome {
    pub erased_count: usize,
    pub recovered: bool,
    pub residual_stopping_set_size: usize,
}

/// Order in which checks with a single erased neighbour are resolved.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Schedule {
    Fifo,
    Lifo,
}

/// Peeling decoder; returns the residual erasures as a sorted list.
pub fn peel_with(code: &LiftedCode, erased: &[bool], schedule: Schedule) -> (TrialOutcome, Vec<usize>) {
    let mut erased = erased.to_vec();
    let erased_count = erased.iter().filter(|&&e| e).count();
    let mut count = vec![0u32; code.n_rows()];
    let mut xor = vec![0u32; code.n_rows()];
    for (c, col) in code.cols.iter().enumerate() {
        if erased[c] {
            for &r in col {
                count[r as usize] += 1;
                xor[r as usize] ^= c as u32;
            }
        }
    }
    let mut queue: VecDeque<usize> = (0..code.n_rows()).filter(|&r| count[r] == 1).collect();
    let mut remaining = erased_count;
    loop {
        let next = match schedule {
            Schedule::Fifo => queue.pop_front(),
            Schedule::Lifo => queue.pop_back(),
        };
        let Some(r) = next else { break };
        if count[r] != 1 {
            continue;
        }
        let c = xor[r] as usize;
        erased[c] = false;
        remaining -= 1;
        for &s in &code.cols[c] {
            let s = s as usize;
            count[s] -= 1;
            xor[s] ^= c as u32;
            if count[s] == 1 {
                queue.push_back(s);
            }
        }
    }
    let residual: Vec<usize> = (0..erased.len()).filter(|&c| erased[c]).collect();
    debug_assert_eq!(residual.len(), remaining);
    let outcome = TrialOutcome {
        erased_count,
        recovered: remaining == 0,
        residual_stopping_set_size: remaining,
    };
    (outcome, residual)
}

/// Peels the erasure pattern `erased` (punctured bits are added).
pub fn peel(code: &LiftedCode, erased: &BTreeSet<usize>) -> TrialOutcome {
    let mut mask = vec![false; code.n_cols()];
    for &c in erased.iter().chain(&code.punctured_bits) {
        mask[c] = true;
    }
    peel_with(code, &mask, Schedule::Fifo).0
}

/// Erasure pattern for one trial: punctured bits always, others with
/// probability `eps`.
pub fn trial_erasures(code: &LiftedCode, eps: f64, seed: u64, trial: u64) -> Vec<bool> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    (0..code.n_cols())
        .map(|c| code.punctured_bits.contains(&c) || rng.gen::<f64>() < eps)
        .collect()
}

/// Wilson score interval at 95% confidence.
pub fn wilson_interval(failures: usize, trials: usize) -> (f64, f64) {
    let n = trials as f64;
    let p = failures as f64 / n;
    let z2 = WILSON_Z * WILSON_Z;
    let denom = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / denom;
    let half = WILSON_Z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonteCarloResult {
    pub lift_factor: usize,
    pub eps: f64,
    pub trials: usize,
    pub seed: u64,
    pub failures: usize,
    pub failure_rate: f64,
    pub wilson_low: f64,
    pub wilson_high: f64,
    pub mean_residual: f64,
}

/// Block erasure rate of `code` at erasure probability `eps`.
pub fn monte_carlo_code(code: &LiftedCode, eps: f64, trials: usize, seed: u64) -> Result<MonteCarloResult> {
    if trials == 0 {
        return Err(Error::InvalidParameter("trials must be at least 1".into()));
    }
    if !(0.0..=1.0).contains(&eps) {
        return Err(Error::InvalidParameter(format!("erasure probability {eps} outside [0, 1]")));
    }
    let (failures, residual) = (0..trials as u64)
        .into_par_iter()
        .map(|t| {
            let mask = trial_erasures(code, eps, seed, t);
            let (o, _) = peel_with(code, &mask, Schedule::Fifo);
            (usize::from(!o.recovered), o.residual_stopping_set_size as u64)
        })
        .reduce(|| (0, 0), |a, b| (a.0 + b.0, a.1 + b.1));
    let (wilson_low, wilson_high) = wilson_interval(failures, trials);
    Ok(MonteCarloResult {
        lift_factor: code.lift_factor,
        eps,
        trials,
        seed,
        failures,
        failure_rate: failures as f64 / trials as f64,
        wilson_low,
        wilson_high,
        mean_residual: residual as f64 / trials as f64,
    })
}

/// Lifts `b` with `seed` and runs `trials` peeling trials.
pub fn monte_carlo(b: &BaseMatrix, n: usize, eps: f64, trials: usize, seed: u64) -> Result<MonteCarloResult> {
    let code = lift(b, n, seed)?;
    monte_carlo_code(&code, eps, trials, seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base(rows: Vec<Vec<i64>>, punctured: &[usize]) -> BaseMatrix {
        BaseMatrix::new("t", rows, punctured.iter().copied()).unwrap()
    }

    #[test]
    fn single_entry_is_permutation() {
        let code = lift(&base(vec![vec![1]], &[]), 4, 9).unwrap();
        assert!(code.rows.iter().all(|r| r.len() == 1));
        let mut seen: Vec<u32> = code.rows.iter().map(|r| r[0]).collect();
        seen.sort();
        assert_eq!(seen, vec![0, 1, 2, 3]);
    }

    #[test]
    fn multiplicity_above_lift_rejected() {
        let err = lift(&base(vec![vec![3, 1]], &[]), 2, 0).unwrap_err();
        assert_eq!(err, Error::LiftBelowMultiplicity { n: 2, max_entry: 3 });
    }

    #[test]
    fn ar4ja_column_degrees() {
        let b = crate::spreading::ar4ja_family(0);
        let code = lift(&b, 100, 1).unwrap();
        assert_eq!((code.n_rows(), code.n_cols()), (300, 500));
        for (c, col) in code.cols.iter().enumerate() {
            assert_eq!(col.len(), [1, 6, 3, 2, 3][c / 100]);
        }
        for (r, row) in code.rows.iter().enumerate() {
            assert_eq!(row.len(), [3, 6, 6][r / 100]);
        }
    }

    #[test]
    fn no_erasures_recovers() {
        let code = lift(&base(vec![vec![1, 1, 1]], &[]), 5, 0).unwrap();
        let o = peel(&code, &BTreeSet::new());
        assert!(o.recovered && o.residual_stopping_set_size == 0);
    }

    #[test]
    fn everything_erased_fails() {
        let code = lift(&base(vec![vec![1, 2, 1]], &[]), 8, 0).unwrap();
        let all: BTreeSet<usize> = (0..code.n_cols()).collect();
        let o = peel(&code, &all);
        assert!(!o.recovered);
        assert_eq!(o.residual_stopping_set_size, 24);
    }

    #[test]
    fn terminated_punctured_only_recovers() {
        let b = crate::spreading::terminated_ar4ja(0, 2).unwrap().base;
        let code = lift(&b, 500, 3).unwrap();
        let o = peel(&code, &BTreeSet::new());
        assert_eq!(o.erased_count, 1000);
        assert!(o.recovered);
    }

    #[test]
    fn extreme_erasure_probabilities() {
        let b = crate::spreading::terminated_ar4ja(0, 2).unwrap().base;
        assert_eq!(monte_carlo(&b, 50, 0.0, 5, 0).unwrap().failures, 0);
        assert_eq!(monte_carlo(&b, 50, 1.0, 5, 0).unwrap().failure_rate, 1.0);
    }

    #[test]
    fn wilson_bounds() {
        let (lo, hi) = wilson_interval(0, 100);
        assert!(lo.abs() < 1e-12);
        assert!((hi - 0.036_994).abs() < 1e-5);
        let (lo, hi) = wilson_interval(50, 100);
        assert!((lo - 0.403_832).abs() < 1e-5 && (hi - 0.596_168).abs() < 1e-5);
    }
}
