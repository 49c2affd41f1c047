#![allow(dead_code)]

use informativity::problem::{simulate, NoisePattern};
use informativity::{DataSet, Matrix, SystemStructure};
use rand::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    General,
    IndependentSplit,
    ProcessOnly,
    Noiseless,
}

pub const KINDS: [Kind; 4] = [
    Kind::General,
    Kind::IndependentSplit,
    Kind::ProcessOnly,
    Kind::Noiseless,
];

#[derive(Debug, Clone)]
pub struct Instance {
    pub kind: Kind,
    pub sys: SystemStructure,
    pub data: DataSet,
    pub a_true: Matrix,
}

pub fn ints<R: Rng>(rng: &mut R, r: usize, c: usize) -> Matrix {
    Matrix::from_fn(r, c, |_, _| rng.random_range(-3..=3) as f64)
}

fn nonzero<R: Rng>(rng: &mut R, r: usize, c: usize) -> Matrix {
    loop {
        let m = ints(rng, r, c);
        if (0..c).all(|j| m.column(j).amax() > 0.0) {
            return m;
        }
    }
}

fn expected(kind: Kind, p: &NoisePattern) -> bool {
    matches!(
        (kind, p),
        (Kind::General, NoisePattern::General)
            | (
                Kind::IndependentSplit,
                NoisePattern::IndependentSplit { .. }
            )
            | (Kind::ProcessOnly, NoisePattern::ProcessOnly)
            | (Kind::Noiseless, NoisePattern::Noiseless)
    )
}

/// Random instance with integer entries in [-3, 3], `n <= 4`, `m, p <= 2`,
/// `T <= 8`, data simulated from an integer `A_true`.
pub fn random_instance<R: Rng>(rng: &mut R, kind: Kind) -> Instance {
    loop {
        let n = rng.random_range(1..=4);
        let m = rng.random_range(1..=2);
        let p = rng.random_range(1..=2);
        let t = rng.random_range(1..=8);
        let (e, f) = match kind {
            Kind::Noiseless => (Matrix::zeros(n, 0), Matrix::zeros(p, 0)),
            Kind::ProcessOnly => {
                let rw = rng.random_range(1..=n.min(2));
                (nonzero(rng, n, rw), Matrix::zeros(p, rw))
            }
            Kind::General => {
                let rw = rng.random_range(1..=2);
                (ints(rng, n, rw), ints(rng, p, rw))
            }
            Kind::IndependentSplit => {
                let r1 = rng.random_range(1..=n.min(2));
                let r2 = rng.random_range(1..=p);
                let mut e = Matrix::zeros(n, r1 + r2);
                let mut f = Matrix::zeros(p, r1 + r2);
                e.columns_mut(0, r1).copy_from(&nonzero(rng, n, r1));
                f.columns_mut(r1, r2).copy_from(&nonzero(rng, p, r2));
                (e, f)
            }
        };
        let sys = SystemStructure::new(ints(rng, n, m), ints(rng, p, n), ints(rng, p, m), e, f)
            .expect("valid structure");
        if !expected(kind, &NoisePattern::detect(&sys)) {
            continue;
        }
        let a_true = ints(rng, n, n);
        let rw = sys.noise_dim();
        let data = simulate(
            &a_true,
            &sys,
            &ints(rng, n, 1),
            &ints(rng, m, t),
            &ints(rng, rw, t),
        )
        .expect("valid simulation");
        return Instance {
            kind,
            sys,
            data,
            a_true,
        };
    }
}

/// `count` instances cycling through the four noise patterns.
pub fn instances<R: Rng>(rng: &mut R, count: usize) -> Vec<Instance> {
    (0..count)
        .map(|i| random_instance(rng, KINDS[i % 4]))
        .collect()
}
