use std::collections::BTreeSet;

use proptest::prelude::*;
use tar4ja::density::{de_step, DeState, EdgeGraph, Scratch};
use tar4ja::enumerator::{check_exponent, entropy, estimate_delta_large_l, scaled_growth};
use tar4ja::lifting::{lift, peel_with, trial_erasures, Schedule};
use tar4ja::protograph::gv_bound;
use tar4ja::spreading::{terminated_ar4ja, terminated_ar4ja_rate};
use tar4ja::{BaseMatrix, Rate};

fn small_base() -> impl Strategy<Value = BaseMatrix> {
    (1usize..4, 2usize..6)
        .prop_flat_map(|(rows, cols)| prop::collection::vec(prop::collection::vec(0i64..3, cols), rows))
        .prop_filter_map("needs every column used", |base| {
            BaseMatrix::new("random", base, std::iter::empty()).ok()
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn degree_sums_match(e in 0usize..4, l in 2usize..40) {
        let b = terminated_ar4ja(e, l).unwrap().base;
        let p = b.degree_profile().unwrap();
        let checks: u64 = p.check_degrees.iter().map(|&d| d as u64).sum();
        let vars: u64 = p.variable_degrees.iter().map(|&d| d as u64).sum();
        prop_assert_eq!(checks, vars);
        let entries: i64 = b.base.iter().flatten().sum();
        prop_assert_eq!(checks, entries as u64);
    }

    #[test]
    fn rate_formula(e in 0usize..6, l in 2usize..101) {
        let b = terminated_ar4ja(e, l).unwrap().base;
        let want = Rate::new(((1 + e) * l - 1) as i64, ((2 + e) * l) as i64);
        prop_assert_eq!(b.design_rate().unwrap(), want);
        prop_assert_eq!(terminated_ar4ja_rate(e, l), want);
    }

    #[test]
    fn gv_bound_decreases_with_rate(a in 1i64..99, b in 1i64..99) {
        prop_assume!(a != b);
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        prop_assert!(gv_bound(Rate::new(lo, 100)).unwrap() > gv_bound(Rate::new(hi, 100)).unwrap());
    }

    #[test]
    fn de_messages_monotone_in_erasure(l in 2usize..6, x in 0.05f64..0.95, y in 0.05f64..0.95, iters in 1usize..200) {
        let (lo, hi) = if x < y { (x, y) } else { (y, x) };
        let g = EdgeGraph::new(&terminated_ar4ja(0, l).unwrap().base).unwrap();
        let (mut a, mut b) = (DeState::new(&g), DeState::new(&g));
        let mut scratch = Scratch::default();
        for _ in 0..iters {
            de_step(&mut a, &g, lo, &mut scratch).unwrap();
            de_step(&mut b, &g, hi, &mut scratch).unwrap();
        }
        for (p, q) in a.v2c.iter().zip(&b.v2c) {
            prop_assert!(p <= q);
        }
    }

    #[test]
    fn check_exponent_symmetries(f in prop::collection::vec(0.01f64..0.99, 3..7), rot in 0usize..7, i in 0usize..7, j in 0usize..7) {
        let d = f.len();
        let base = check_exponent(&f).unwrap();
        prop_assume!(base.is_finite());
        let mut rotated = f.clone();
        rotated.rotate_left(rot % d);
        prop_assert!((check_exponent(&rotated).unwrap() - base).abs() < 1e-9);
        let (i, j) = (i % d, j % d);
        prop_assume!(i != j);
        // Complementing two edges maps even-parity words to even-parity words.
        let mut flipped = f.clone();
        flipped[i] = 1.0 - flipped[i];
        flipped[j] = 1.0 - flipped[j];
        prop_assert!((check_exponent(&flipped).unwrap() - base).abs() < 1e-9);
        // The last bit is determined by the others.
        let bound: f64 = f.iter().map(|&x| entropy(x)).sum::<f64>()
            - f.iter().map(|&x| entropy(x)).fold(0.0, f64::max);
        prop_assert!(base <= bound + 1e-9);
    }

    #[test]
    fn lifting_preserves_degrees(b in small_base(), n in 3usize..30, seed in any::<u64>()) {
        let code = lift(&b, n, seed).unwrap();
        let p = b.degree_profile().unwrap();
        for (r, row) in code.rows.iter().enumerate() {
            prop_assert_eq!(row.len() as u32, p.check_degrees[r / n]);
            let distinct: BTreeSet<_> = row.iter().collect();
            prop_assert_eq!(distinct.len(), row.len());
        }
        for (c, col) in code.cols.iter().enumerate() {
            prop_assert_eq!(col.len() as u32, p.variable_degrees[c / n]);
        }
        prop_assert_eq!(&lift(&b, n, seed).unwrap(), &code);
    }

    #[test]
    fn peeling_is_confluent(l in 2usize..4, n in 20usize..80, eps in 0.3f64..0.8, seed in any::<u64>()) {
        let code = lift(&terminated_ar4ja(0, l).unwrap().base, n, seed).unwrap();
        let erased = trial_erasures(&code, eps, seed, 0);
        let (a, ra) = peel_with(&code, &erased, Schedule::Fifo);
        let (b, rb) = peel_with(&code, &erased, Schedule::Lifo);
        prop_assert_eq!(a, b);
        prop_assert_eq!(ra, rb);
        prop_assert_eq!(a.recovered, a.residual_stopping_set_size == 0);
    }

    #[test]
    fn scaled_growth_round_trip(delta in 1e-4f64..0.2, e in 0usize..4, l in 2usize..50) {
        let s = scaled_growth(delta, e, l);
        prop_assert!((estimate_delta_large_l(s, e, l) - delta).abs() < 1e-15);
    }
}

#[test]
fn residual_is_a_stopping_set() {
    let code = lift(&terminated_ar4ja(0, 2).unwrap().base, 200, 5).unwrap();
    for t in 0..20 {
        let erased = trial_erasures(&code, 0.7, 5, t);
        let (_, residual) = peel_with(&code, &erased, Schedule::Fifo);
        let set: BTreeSet<usize> = residual.iter().copied().collect();
        for row in &code.rows {
            let hits = row.iter().filter(|&&c| set.contains(&(c as usize))).count();
            assert_ne!(hits, 1);
        }
    }
}
