mod common;

use informativity::informativity::build_property_pencil;
use informativity::pencil::{
    normal_rank, rank_drop_points, uniform_rank_test, Pencil, RankOutcome, Region,
};
use informativity::problem::build_reduction;
use informativity::{Matrix, Property, Tolerances};
use num_complex::Complex64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn tol() -> Tolerances {
    Tolerances::default()
}

/// Unit lower times unit upper with entries in {-1, 0, 1}: determinant one.
fn unimodular<R: Rng>(rng: &mut R, n: usize) -> Matrix {
    let l = Matrix::from_fn(n, n, |i, j| match i.cmp(&j) {
        std::cmp::Ordering::Equal => 1.0,
        std::cmp::Ordering::Greater => rng.random_range(-1..=1) as f64,
        std::cmp::Ordering::Less => 0.0,
    });
    let u = Matrix::from_fn(n, n, |i, j| match i.cmp(&j) {
        std::cmp::Ordering::Equal => 1.0,
        std::cmp::Ordering::Less => rng.random_range(-1..=1) as f64,
        std::cmp::Ordering::Greater => 0.0,
    });
    l * u
}

/// A regular pencil `S (K - λ I) T` whose finite eigenvalues are planted on the
/// half-integer grid, as real 1x1 blocks and conjugate-pair 2x2 blocks.
fn planted<R: Rng>(rng: &mut R) -> (Pencil, Vec<Complex64>) {
    let half = |rng: &mut R| rng.random_range(-4..=4) as f64 / 2.0;
    let blocks = rng.random_range(1..=3);
    let mut k = Matrix::zeros(0, 0);
    let mut eig = Vec::new();
    for _ in 0..blocks {
        let grow = |k: &Matrix, b: &Matrix| {
            let n = k.nrows();
            let m = b.nrows();
            let mut out = Matrix::zeros(n + m, n + m);
            out.view_mut((0, 0), (n, n)).copy_from(k);
            out.view_mut((n, n), (m, m)).copy_from(b);
            out
        };
        if rng.random_bool(0.5) {
            let l = half(rng);
            eig.push(Complex64::new(l, 0.0));
            k = grow(&k, &Matrix::from_element(1, 1, l));
        } else {
            let a = half(rng);
            let b = rng.random_range(1..=3) as f64 / 2.0;
            eig.push(Complex64::new(a, b));
            eig.push(Complex64::new(a, -b));
            k = grow(&k, &Matrix::from_row_slice(2, 2, &[a, b, -b, a]));
        }
    }
    let n = k.nrows();
    let s = unimodular(rng, n);
    let t = unimodular(rng, n);
    let n0 = &s * k * &t;
    let n1 = s * t;
    (Pencil::new(n0, n1).unwrap(), eig)
}

/// Rank by complete-pivoting elimination, independent of the library's SVD.
fn elimination_rank(mut a: Vec<Vec<Complex64>>, cols: usize) -> usize {
    let scale = a
        .iter()
        .flatten()
        .map(|z| z.norm())
        .fold(0.0f64, f64::max)
        .max(1.0);
    let rows = a.len();
    let mut rank = 0;
    let mut used_col = vec![false; cols];
    let mut used_row = vec![false; rows];
    loop {
        let mut best = (0.0, 0, 0);
        for (i, row) in a.iter().enumerate() {
            if used_row[i] {
                continue;
            }
            for (j, z) in row.iter().enumerate() {
                if !used_col[j] && z.norm() > best.0 {
                    best = (z.norm(), i, j);
                }
            }
        }
        if best.0 <= 1e-9 * scale {
            return rank;
        }
        let (_, pi, pj) = best;
        used_row[pi] = true;
        used_col[pj] = true;
        rank += 1;
        let pivot = a[pi].clone();
        for (i, row) in a.iter_mut().enumerate() {
            if used_row[i] {
                continue;
            }
            let f = row[pj] / pivot[pj];
            for j in 0..cols {
                row[j] -= f * pivot[j];
            }
        }
    }
}

fn grid_drops(p: &Pencil) -> Vec<Complex64> {
    let (r, c) = p.shape();
    let mut out = Vec::new();
    for re in -8..=8 {
        for im in -8..=8 {
            let z = Complex64::new(re as f64 / 2.0, im as f64 / 2.0);
            let m = p.eval(z);
            let rows = (0..r)
                .map(|i| (0..c).map(|j| m[(i, j)]).collect())
                .collect();
            if elimination_rank(rows, c) < r.min(c) {
                out.push(z);
            }
        }
    }
    out
}

fn same_points(a: &[Complex64], b: &[Complex64], eps: f64) -> bool {
    a.len() == b.len()
        && a.iter().all(|x| b.iter().any(|y| (x - y).norm() <= eps))
        && b.iter().all(|y| a.iter().any(|x| (x - y).norm() <= eps))
}

/// Property pencils of random data problems.
fn data_pencils(seed: u64) -> Vec<(Pencil, usize)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let kind = common::KINDS[rng.random_range(0..4)];
    let inst = common::random_instance(&mut rng, kind);
    let red = build_reduction(&inst.sys, &inst.data, &tol()).unwrap();
    Property::ALL
        .iter()
        .filter(|p| **p != Property::LeftInvertibility)
        .map(|&p| {
            let pp = build_property_pencil(&red, &inst.sys, p, &tol()).unwrap();
            (pp.pencil, pp.target)
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn drop_points_match_brute_force_grid(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (p, eig) = planted(&mut rng);
        let mut distinct: Vec<Complex64> = Vec::new();
        for z in eig {
            if !distinct.iter().any(|y| (y - z).norm() < 1e-12) {
                distinct.push(z);
            }
        }
        let grid = grid_drops(&p);
        prop_assert!(same_points(&grid, &distinct, 1e-12), "grid {grid:?} planted {distinct:?}");
        let found = rank_drop_points(&p, &tol()).unwrap();
        prop_assert!(same_points(&found, &grid, 1e-6), "found {found:?} grid {grid:?}");
    }

    #[test]
    fn rank_never_exceeds_normal_rank(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 1);
        for (p, _) in data_pencils(seed) {
            let rho = normal_rank(&p, &tol()).unwrap();
            for _ in 0..4 {
                let z = Complex64::new(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0));
                prop_assert!(p.rank_at(z, &tol()) <= rho);
            }
        }
    }

    #[test]
    fn witnesses_reverify(seed in any::<u64>()) {
        for (p, target) in data_pencils(seed) {
            for region in [Region::AllComplex, Region::ClosedUnitExterior] {
                let v = uniform_rank_test(&p, target, region, &tol()).unwrap();
                for w in v.witnesses.iter().chain(&v.marginal_witnesses) {
                    prop_assert!(p.rank_at(w.lambda, &tol()) < target);
                    prop_assert!(region.admits(w.lambda, &tol()));
                }
                if v.outcome == RankOutcome::Fails {
                    prop_assert!(!v.witnesses.is_empty() || v.normal_rank < target);
                }
            }
        }
    }

    #[test]
    fn smaller_region_is_easier(seed in any::<u64>()) {
        for (p, target) in data_pencils(seed) {
            let all = uniform_rank_test(&p, target, Region::AllComplex, &tol()).unwrap();
            let ext = uniform_rank_test(&p, target, Region::ClosedUnitExterior, &tol()).unwrap();
            if all.holds() {
                prop_assert!(ext.holds());
            }
            if ext.outcome == RankOutcome::Fails {
                prop_assert_eq!(all.outcome, RankOutcome::Fails);
            }
        }
    }

    #[test]
    fn invertible_left_factor_changes_nothing(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 2);
        for (p, target) in data_pencils(seed) {
            let g = unimodular(&mut rng, p.shape().0);
            let q = p.premultiply(&g);
            prop_assert_eq!(normal_rank(&p, &tol()).unwrap(), normal_rank(&q, &tol()).unwrap());
            for region in [Region::AllComplex, Region::ClosedUnitExterior] {
                let a = uniform_rank_test(&p, target, region, &tol()).unwrap();
                let b = uniform_rank_test(&q, target, region, &tol()).unwrap();
                prop_assert_eq!(a.outcome, b.outcome);
            }
            let a = rank_drop_points(&p, &tol()).unwrap();
            let b = rank_drop_points(&q, &tol()).unwrap();
            prop_assert!(same_points(&a, &b, 1e-6), "{a:?} vs {b:?}");
        }
    }
}
