//! Uniform rank conditions on real matrix pencils `N0 - λ N1`.
//!
//! Rank-drop points are found by compressing the (possibly singular, possibly
//! rectangular) pencil to a square pencil of size equal to its normal rank with
//! random orthonormal factors, deflating the infinite eigenvalues of the
//! compressed pair, and verifying every finite eigenvalue by a direct rank
//! evaluation of the original pencil. Two independent compressions are used
//! and their verified candidates merged.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{
    complexify, eigenvalues, image_of, random_orthonormal, rank_of_scaled, svd, CMatrix, Matrix,
    Subspace, Tolerances,
};

const SAMPLE_POINTS: usize = 3;
const SAMPLE_ROUNDS: usize = 3;
const COMPRESSIONS: usize = 2;
const COMPRESSION_RETRIES: usize = 4;
/// Relative radius within which verified candidates are merged or snapped to the real axis.
const MERGE_RADIUS: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct Pencil {
    pub n0: Matrix,
    pub n1: Matrix,
}

impl Pencil {
    pub fn new(n0: Matrix, n1: Matrix) -> Result<Self> {
        if n0.shape() != n1.shape() {
            return Err(Error::Dimension(format!(
                "pencil parts are {:?} and {:?}",
                n0.shape(),
                n1.shape()
            )));
        }
        Ok(Self { n0, n1 })
    }

    pub fn shape(&self) -> (usize, usize) {
        self.n0.shape()
    }

    pub fn eval(&self, lambda: Complex64) -> CMatrix {
        complexify(&self.n0) - complexify(&self.n1) * lambda
    }

    pub fn eval_real(&self, lambda: f64) -> Matrix {
        &self.n0 - &self.n1 * lambda
    }

    /// `|N0|_F + |λ| |N1|_F`: the size against which ranks at `λ` are judged, so
    /// that cancellation in `N0 - λ N1` reads as a rank drop.
    pub fn scale_at(&self, lambda: Complex64) -> f64 {
        self.n0.norm() + lambda.norm() * self.n1.norm()
    }

    pub fn rank_at(&self, lambda: Complex64, tol: &Tolerances) -> usize {
        let scale = self.scale_at(lambda);
        if lambda.im == 0.0 {
            rank_of_scaled(&self.eval_real(lambda.re), scale, tol)
        } else {
            rank_of_scaled(&self.eval(lambda), scale, tol)
        }
    }

    pub fn transpose(&self) -> Pencil {
        Pencil {
            n0: self.n0.transpose(),
            n1: self.n1.transpose(),
        }
    }

    /// Left-multiply both parts by `g`.
    pub fn premultiply(&self, g: &Matrix) -> Pencil {
        Pencil {
            n0: g * &self.n0,
            n1: g * &self.n1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Region {
    AllComplex,
    /// `|λ| >= 1`.
    ClosedUnitExterior,
}

impl Region {
    /// Membership, counting the numerical boundary band as inside.
    pub fn admits(&self, lambda: Complex64, tol: &Tolerances) -> bool {
        match self {
            Region::AllComplex => true,
            Region::ClosedUnitExterior => lambda.norm() >= 1.0 - tol.boundary_delta,
        }
    }

    /// Points whose membership cannot be certified in floating point.
    pub fn is_marginal(&self, lambda: Complex64, tol: &Tolerances) -> bool {
        match self {
            Region::AllComplex => false,
            Region::ClosedUnitExterior => (lambda.norm() - 1.0).abs() <= tol.boundary_delta,
        }
    }

    /// A real point strictly inside the region, away from the boundary band.
    pub fn interior_point(&self) -> f64 {
        2.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RankOutcome {
    Holds,
    Fails,
    Marginal,
}

/// A point where the pencil's rank falls below the target.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    #[serde(with = "crate::serde_complex")]
    pub lambda: Complex64,
    pub rank: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankVerdict {
    pub outcome: RankOutcome,
    pub normal_rank: usize,
    pub target_rank: usize,
    pub witnesses: Vec<Witness>,
    pub marginal_witnesses: Vec<Witness>,
}

impl RankVerdict {
    pub fn holds(&self) -> bool {
        self.outcome == RankOutcome::Holds
    }
}

fn sample_point(rng: &mut ChaCha8Rng) -> Complex64 {
    let r = rng.random_range(0.5..2.0);
    let theta = rng.random_range(0.0..std::f64::consts::TAU);
    Complex64::from_polar(r, theta)
}

/// Maximal rank of `N0 - λ N1`, taken as the common rank at random points.
pub fn normal_rank(p: &Pencil, tol: &Tolerances) -> Result<usize> {
    let (r, c) = p.shape();
    if r == 0 || c == 0 {
        return Ok(0);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(tol.seed);
    let mut seen = Vec::new();
    for _ in 0..SAMPLE_ROUNDS {
        let ranks: Vec<usize> = (0..SAMPLE_POINTS)
            .map(|_| p.rank_at(sample_point(&mut rng), tol))
            .collect();
        if ranks.iter().all(|&k| k == ranks[0]) {
            return Ok(ranks[0]);
        }
        seen.extend(ranks);
    }
    Err(Error::Numerical(format!(
        "pencil rank at random points disagrees ({seen:?}); consider a larger rank_rtol"
    )))
}

/// Finite eigenvalues of the regular square pencil `a - λ e`, with infinite
/// eigenvalues deflated. `None` if the pencil is numerically singular.
fn finite_eigenvalues(a: &Matrix, e: &Matrix, tol: &Tolerances) -> Option<Vec<Complex64>> {
    let mut a = a.clone();
    let mut e = e.clone();
    let scale = a.norm().max(e.norm());
    if scale == 0.0 {
        return None;
    }
    loop {
        let k = a.nrows();
        if k == 0 {
            return Some(Vec::new());
        }
        let thr = tol.rank_threshold(k, k, scale);
        let dec = svd(&e);
        let rank_e = dec.s.iter().filter(|&&s| s > thr).count();
        if rank_e == k {
            let lu = e.clone().lu();
            let m = lu.solve(&a)?;
            let eig = eigenvalues(&m)?;
            if eig.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
                return None;
            }
            return Some(eig);
        }
        let z1 = dec.v.columns(0, rank_e).into_owned();
        let v1 = dec.v.columns(rank_e, k - rank_e).into_owned();
        let av1 = &a * &v1;
        // Regularity: A must be injective on ker E.
        let range = image_of(&av1, tol);
        if range.ncols() < k - rank_e || av1.norm() <= thr {
            return None;
        }
        let q1 = Subspace::image(&range, tol).annihilator().transpose();
        a = q1.transpose() * &a * &z1;
        e = q1.transpose() * &e * &z1;
    }
}

fn compressed_candidates(
    p: &Pencil,
    rho: usize,
    rng: &mut ChaCha8Rng,
    tol: &Tolerances,
) -> Option<Vec<Complex64>> {
    let (r, c) = p.shape();
    for _ in 0..COMPRESSION_RETRIES {
        let u = random_orthonormal(rng, r, rho);
        let v = random_orthonormal(rng, c, rho);
        let c0 = u.transpose() * &p.n0 * &v;
        let c1 = u.transpose() * &p.n1 * &v;
        if let Some(eigs) = finite_eigenvalues(&c0, &c1, tol) {
            return Some(eigs);
        }
    }
    None
}

fn rel_dist(a: Complex64, b: Complex64) -> f64 {
    (a - b).norm() / a.norm().max(b.norm()).max(1.0)
}

/// Finite points where `rank(N0 - λ N1)` falls below the normal rank.
pub fn rank_drop_points(p: &Pencil, tol: &Tolerances) -> Result<Vec<Complex64>> {
    let rho = normal_rank(p, tol)?;
    drop_points_with_rank(p, rho, tol)
}

fn drop_points_with_rank(p: &Pencil, rho: usize, tol: &Tolerances) -> Result<Vec<Complex64>> {
    if rho == 0 {
        return Ok(Vec::new());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(tol.seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut verified: Vec<Complex64> = Vec::new();
    for _ in 0..COMPRESSIONS {
        let cands = compressed_candidates(p, rho, &mut rng, tol).ok_or_else(|| {
            Error::Numerical("could not obtain a regular compression of the pencil".into())
        })?;
        for z in cands {
            if p.rank_at(z, tol) >= rho {
                continue;
            }
            // Prefer the real axis when the drop re-verifies there.
            let snapped = if z.im != 0.0
                && z.im.abs() <= MERGE_RADIUS * z.norm().max(1.0)
                && p.rank_at(Complex64::new(z.re, 0.0), tol) < rho
            {
                Complex64::new(z.re, 0.0)
            } else {
                z
            };
            verified.push(snapped);
        }
    }
    Ok(merge_points(p, rho, verified, tol))
}

/// Replace clusters of nearby verified points by their mean when it verifies too.
fn merge_points(
    p: &Pencil,
    rho: usize,
    mut pts: Vec<Complex64>,
    tol: &Tolerances,
) -> Vec<Complex64> {
    pts.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
    let mut used = vec![false; pts.len()];
    let mut out = Vec::new();
    for i in 0..pts.len() {
        if used[i] {
            continue;
        }
        let group: Vec<usize> = (i..pts.len())
            .filter(|&j| !used[j] && rel_dist(pts[i], pts[j]) <= MERGE_RADIUS)
            .collect();
        for &j in &group {
            used[j] = true;
        }
        let mean = group.iter().map(|&j| pts[j]).sum::<Complex64>() / group.len() as f64;
        let mean = if mean.im.abs() <= f64::EPSILON * mean.norm().max(1.0) {
            Complex64::new(mean.re, 0.0)
        } else {
            mean
        };
        if p.rank_at(mean, tol) < rho {
            out.push(mean);
        } else {
            out.push(pts[i]);
        }
    }
    out
}

/// Decide `rank(N0 - λ N1) >= target` for every `λ` in `region`.
pub fn uniform_rank_test(
    p: &Pencil,
    target: usize,
    region: Region,
    tol: &Tolerances,
) -> Result<RankVerdict> {
    let rho = normal_rank(p, tol)?;
    let mut verdict = RankVerdict {
        outcome: RankOutcome::Holds,
        normal_rank: rho,
        target_rank: target,
        witnesses: Vec::new(),
        marginal_witnesses: Vec::new(),
    };
    if target == 0 {
        return Ok(verdict);
    }
    if rho < target {
        let lambda = Complex64::new(region.interior_point(), 0.0);
        verdict.outcome = RankOutcome::Fails;
        verdict.witnesses.push(Witness {
            lambda,
            rank: p.rank_at(lambda, tol),
        });
        return Ok(verdict);
    }
    for lambda in drop_points_with_rank(p, rho, tol)? {
        let rank = p.rank_at(lambda, tol);
        if rank >= target || !region.admits(lambda, tol) {
            continue;
        }
        let w = Witness { lambda, rank };
        if region.is_marginal(lambda, tol) {
            verdict.marginal_witnesses.push(w);
        } else {
            verdict.witnesses.push(w);
        }
    }
    verdict.outcome = if !verdict.witnesses.is_empty() {
        RankOutcome::Fails
    } else if !verdict.marginal_witnesses.is_empty() {
        RankOutcome::Marginal
    } else {
        RankOutcome::Holds
    };
    Ok(verdict)
}
