//! Independent check of informativity verdicts: parametrize the compatible
//! family, sample it, run model-based property checks, and build explicit
//! counterexample systems for negative verdicts.

use nalgebra::DVector;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::geometric::{injective_input, jstar_triple, weakly_unobservable};
use crate::informativity::{
    consistent_reduction, reduction_test, triple_pencil, triple_precondition, Informativity,
    Property, Verdict, TRIPLE_LABELS,
};
use crate::linalg::{
    annihilator_of_image, block2x2, hstack, image_of_scaled, kernel_of, kernel_of_scaled, pinv,
    pinv_scaled, rank_of, spectral_norm, svd, vstack, Field, Matrix, Subspace, Tolerances,
};
use crate::pencil::{uniform_rank_test, Pencil, RankOutcome, Region};
use crate::problem::{DataSet, IoMaps, Reduction, SystemStructure, Triple};

/// `{A | R = Q A P} = {A_p + U1 F1 + F2 U2}`.
#[derive(Debug, Clone)]
pub struct CompatibleFamily {
    pub triple: Triple,
    /// Minimum-norm member `Q^+ R P^+`.
    pub a_particular: Matrix,
    /// Columns span `ker Q`.
    pub u1: Matrix,
    /// Rows span the left annihilator of `P`.
    pub u2: Matrix,
}

impl CompatibleFamily {
    /// `(dim ker Q, n - rank P)`.
    pub fn free_dims(&self) -> (usize, usize) {
        (self.u1.ncols(), self.u2.nrows())
    }

    pub fn member(&self, f1: &Matrix, f2: &Matrix) -> Matrix {
        &self.a_particular + &self.u1 * f1 + f2 * &self.u2
    }

    /// `|R - Q A P|_max`, relative to `max(1, |Q| |A| |P|)`.
    pub fn membership_residual(&self, a: &Matrix) -> f64 {
        let t = &self.triple;
        let scale = spectral_norm(&t.q) * spectral_norm(a) * spectral_norm(&t.p);
        t.residual(a) / scale.max(1.0)
    }

    pub fn contains(&self, a: &Matrix, tol: &Tolerances) -> bool {
        a.shape() == (self.triple.n(), self.triple.n())
            && self.membership_residual(a) <= tol.containment_atol
    }
}

pub fn parametrize_triple(t: &Triple, tol: &Tolerances) -> Result<CompatibleFamily> {
    if !t.is_consistent(tol) {
        return Err(Error::Inconsistent(
            "the family {A | R = Q A P} is empty".into(),
        ));
    }
    let a_particular = pinv(&t.q, tol) * &t.r * pinv(&t.p, tol);
    Ok(CompatibleFamily {
        triple: t.clone(),
        a_particular,
        u1: kernel_of(&t.q, tol),
        u2: annihilator_of_image(&t.p, tol),
    })
}

/// Parametrization of the data-compatible state matrices.
pub fn parametrize(red: &Reduction, tol: &Tolerances) -> Result<CompatibleFamily> {
    parametrize_triple(&red.triple, tol)
}

/// `count` members with free parameters uniform in `[-magnitude, magnitude]`.
pub fn sample(fam: &CompatibleFamily, count: usize, magnitude: f64, seed: u64) -> Vec<Matrix> {
    let n = fam.triple.n();
    let (k1, k2) = fam.free_dims();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = |r: usize, c: usize| {
        Matrix::from_fn(r, c, |_, _| {
            if magnitude > 0.0 {
                rng.random_range(-magnitude..=magnitude)
            } else {
                0.0
            }
        })
    };
    (0..count)
        .map(|_| {
            let f1 = draw(k1, n);
            let f2 = draw(n, k2);
            fam.member(&f1, &f2)
        })
        .collect()
}

/// Rosenbrock-type pencil `[A - λI, B; C, D]`.
fn rosenbrock(a: &Matrix, io: &IoMaps) -> Pencil {
    let n = a.nrows();
    let n0 = block2x2(a, &io.b, &io.c, &io.d);
    let mut n1 = Matrix::zeros(n0.nrows(), n0.ncols());
    n1.view_mut((0, 0), (n, n)).fill_with_identity();
    Pencil { n0, n1 }
}

/// Model-based evaluation of `prop` for the system `(A, B, C, D)`.
pub fn model_outcome(
    a: &Matrix,
    io: &IoMaps,
    prop: Property,
    tol: &Tolerances,
) -> Result<RankOutcome> {
    let n = a.nrows();
    let region = prop.region();
    let (pencil, target) = match prop {
        Property::StrongObservability | Property::StrongDetectability => (
            rosenbrock(a, io),
            n + rank_of(&vstack(&[&io.b, &io.d]), tol),
        ),
        Property::Observability | Property::Detectability => (rosenbrock(a, &io.output_only()), n),
        Property::StrongControllability | Property::StrongStabilizability => (
            rosenbrock(a, io),
            n + rank_of(&hstack(&[&io.c, &io.d]), tol),
        ),
        Property::Controllability | Property::Stabilizability => {
            (rosenbrock(a, &io.input_only()), n)
        }
        Property::LeftInvertibility => {
            if !injective_input(io, tol) {
                return Ok(RankOutcome::Fails);
            }
            let v = weakly_unobservable(a, &io.b, &io.c, &io.d, tol);
            let b_ker_d = Subspace::kernel(&io.d, tol).map(&io.b);
            return Ok(if v.intersect(&b_ker_d).is_zero() {
                RankOutcome::Holds
            } else {
                RankOutcome::Fails
            });
        }
    };
    Ok(uniform_rank_test(&pencil, target, region, tol)?.outcome)
}

/// Whether `(A, B, C, D)` has `prop` (marginal cases count as not certified).
pub fn model_check(a: &Matrix, io: &IoMaps, prop: Property, tol: &Tolerances) -> Result<bool> {
    Ok(model_outcome(a, io, prop, tol)? == RankOutcome::Holds)
}

fn to_rows(a: &Matrix) -> Vec<Vec<f64>> {
    a.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn serialize_rows<S: Serializer>(a: &Matrix, s: S) -> std::result::Result<S::Ok, S::Error> {
    to_rows(a).serialize(s)
}

fn deserialize_rows<'de, D: serde::Deserializer<'de>>(
    d: D,
) -> std::result::Result<Matrix, D::Error> {
    let rows = Vec::<Vec<f64>>::deserialize(d)?;
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|row| row.len() != c) {
        return Err(serde::de::Error::custom("ragged matrix"));
    }
    Ok(Matrix::from_fn(r, c, |i, j| rows[i][j]))
}

/// Why the counterexample system fails the property.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Certificate {
    /// `(Ā - λI) ξ + B η = 0`, `C ξ + D η = 0`, `ξ ≠ 0`; for controllability
    /// types this holds for the transposed system (`transposed = true`).
    RankDrop {
        #[serde(with = "crate::serde_complex")]
        lambda: Complex64,
        state_re: Vec<f64>,
        state_im: Vec<f64>,
        input_re: Vec<f64>,
        input_im: Vec<f64>,
        transposed: bool,
    },
    /// `V(Ā, B, C, D)` contains `X- J*`, which has the given dimension.
    WeaklyUnobservable { dimension: usize },
    /// `[B; D]` annihilates this nonzero input.
    InputKernel { input: Vec<f64> },
    /// Found among sampled members of the family.
    Sampled { sample_index: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    Construction,
    Search,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Counterexample {
    pub property: Property,
    #[serde(
        serialize_with = "serialize_rows",
        deserialize_with = "deserialize_rows"
    )]
    pub a_bad: Matrix,
    pub certificate: Certificate,
    pub provenance: Provenance,
    pub membership_residual: f64,
    pub verified: bool,
}

/// `A0` with `Q A0 P = 0` and `A0 dirs ≈ targets`, by least squares over the
/// parametrization `U1 G1 + G2 U2`.
fn solve_a0(fam: &CompatibleFamily, dirs: &Matrix, targets: &Matrix, tol: &Tolerances) -> Matrix {
    let n = fam.triple.n();
    let (k1, k2) = fam.free_dims();
    let b1 = dirs.transpose().kronecker(&fam.u1);
    let b2 = (&fam.u2 * dirs)
        .transpose()
        .kronecker(&Matrix::identity(n, n));
    let coef = hstack(&[&b1, &b2]);
    let rhs = Matrix::from_column_slice(targets.len(), 1, targets.as_slice());
    let sol = pinv(&coef, tol) * rhs;
    let g1 = Matrix::from_column_slice(k1, n, &sol.as_slice()[..k1 * n]);
    let g2 = Matrix::from_column_slice(n, k2, &sol.as_slice()[k1 * n..]);
    &fam.u1 * g1 + g2 * &fam.u2
}

fn real_point(region: Region) -> f64 {
    match region {
        Region::AllComplex => 0.0,
        Region::ClosedUnitExterior => region.interior_point(),
    }
}

fn col(v: &DVector<f64>) -> Matrix {
    Matrix::from_column_slice(v.len(), 1, v.as_slice())
}

fn rank_drop_cert(lambda: Complex64, xi: &[Complex64], eta: &[Complex64]) -> Certificate {
    Certificate::RankDrop {
        lambda,
        state_re: xi.iter().map(|z| z.re).collect(),
        state_im: xi.iter().map(|z| z.im).collect(),
        input_re: eta.iter().map(|z| z.re).collect(),
        input_im: eta.iter().map(|z| z.im).collect(),
        transposed: false,
    }
}

/// Real witness at `mu`: `Ā x + B u = mu x`, `C x + D u = 0`.
fn plant_real(
    fam: &CompatibleFamily,
    io: &IoMaps,
    mu: f64,
    x: &DVector<f64>,
    u: &DVector<f64>,
    tol: &Tolerances,
) -> (Matrix, Certificate) {
    let a = &fam.a_particular;
    let target = -(a * x - x * mu) - &io.b * u;
    let a0 = solve_a0(fam, &col(x), &col(&target), tol);
    let c = |v: &DVector<f64>| {
        v.iter()
            .map(|&r| Complex64::new(r, 0.0))
            .collect::<Vec<_>>()
    };
    (
        a + a0,
        rank_drop_cert(Complex64::new(mu, 0.0), &c(x), &c(u)),
    )
}

/// Counterexample for an observation-type property (strong or plain
/// observability/detectability) on `{A | R = Q A P}`.
fn observation_counterexample(
    fam: &CompatibleFamily,
    io: &IoMaps,
    prop: Property,
    tol: &Tolerances,
) -> Result<Option<(Matrix, Certificate)>> {
    let t = &fam.triple;
    let a = &fam.a_particular;
    let region = prop.region();
    let io = if prop.is_strong() {
        io.clone()
    } else {
        io.output_only()
    };
    let pre = triple_precondition(t, &io, prop, TRIPLE_LABELS, tol);
    if let Some(x) = pre.violation {
        let u = -(pinv(&io.d, tol) * (&io.c * &x));
        return Ok(Some(plant_real(fam, &io, real_point(region), &x, &u, tol)));
    }
    let pp = triple_pencil(t, &io, prop, tol)?;
    let rv = uniform_rank_test(&pp.pencil, pp.target, pp.region, tol)?;
    let Some(w) = rv.witnesses.first() else {
        return Ok(None);
    };
    let lambda = w.lambda;
    let r = t.p.ncols();
    if lambda.im == 0.0 {
        let k = kernel_of_scaled(
            &pp.pencil.eval_real(lambda.re),
            pp.pencil.scale_at(lambda),
            tol,
        );
        let Some(v) = best_kernel_vector(&k, &t.p, r) else {
            return Ok(None);
        };
        let xi = &t.p * v.rows(0, r);
        let eta = v.rows(r, v.len() - r).into_owned();
        return Ok(Some(plant_real(fam, &io, lambda.re, &xi, &eta, tol)));
    }
    let k = kernel_of_scaled(&pp.pencil.eval(lambda), pp.pencil.scale_at(lambda), tol);
    let Some(v) = best_kernel_vector(&k, &crate::linalg::complexify(&t.p), r) else {
        return Ok(None);
    };
    let xi = crate::linalg::complexify(&t.p) * v.rows(0, r);
    let eta = v.rows(r, v.len() - r).into_owned();
    let parts = hstack(&[&col(&xi.map(|z| z.re)), &col(&xi.map(|z| z.im))]);
    let dec = svd(&parts);
    let (s1, s2) = (dec.s[0], dec.s[1]);
    if s2 <= 1e-7 * s1 {
        // ξ = c r with r real: reduce to a real witness.
        let rvec = dec.u.column(0).into_owned();
        let c: Complex64 = xi.iter().zip(rvec.iter()).map(|(z, &ri)| z * ri).sum();
        let eta_s = eta.map(|z| z / c);
        let (a_re, b_im) = (lambda.re, lambda.im);
        let mu = real_point(region);
        let x = &rvec * b_im;
        let u = eta_s.map(|z| z.re) * b_im + eta_s.map(|z| z.im) * (mu - a_re);
        return Ok(Some(plant_real(fam, &io, mu, &x, &u, tol)));
    }
    // Independent real and imaginary parts: plant both directions.
    let ca = crate::linalg::complexify(a);
    let cb = crate::linalg::complexify(&io.b);
    let zeta = &ca * &xi - &xi * lambda + &cb * &eta;
    let targets = -hstack(&[&col(&zeta.map(|z| z.re)), &col(&zeta.map(|z| z.im))]);
    let a0 = solve_a0(fam, &parts, &targets, tol);
    let xi_v: Vec<Complex64> = xi.iter().copied().collect();
    let eta_v: Vec<Complex64> = eta.iter().copied().collect();
    Ok(Some((a + a0, rank_drop_cert(lambda, &xi_v, &eta_v))))
}

/// Kernel vector maximizing `|P ν|` over unit combinations of the basis `k`.
fn best_kernel_vector<T>(
    k: &nalgebra::DMatrix<T>,
    p: &nalgebra::DMatrix<T>,
    r: usize,
) -> Option<nalgebra::DVector<T>>
where
    T: Field,
{
    if k.ncols() == 0 {
        return None;
    }
    let pk = p * k.rows(0, r);
    let dec = svd(&pk);
    if dec.smax() <= 1e-9 * spectral_norm(&p.map(|z| nalgebra::ComplexField::modulus(z))).max(1.0) {
        return None;
    }
    Some(k * dec.v.column(0))
}

/// The `Ā` with `X- J* ⊆ V(Ā, B, C, D)`; requires `C^-1 im D ⊆ im P`.
pub fn worst_case_system(t: &Triple, io: &IoMaps, tol: &Tolerances) -> Result<Matrix> {
    let fam = parametrize_triple(t, tol)?;
    worst_case_in(&fam, io, tol)
}

fn worst_case_in(fam: &CompatibleFamily, io: &IoMaps, tol: &Tolerances) -> Result<Matrix> {
    let t = &fam.triple;
    let a = &fam.a_particular;
    let (j, _) = jstar_triple(t, io, tol);
    let pj = &t.p * j.basis();
    let xs = image_of_scaled(&pj, spectral_norm(&t.p), tol);
    if xs.ncols() == 0 {
        return Ok(a.clone());
    }
    let p_scale = spectral_norm(&t.p);
    let pj_pinv = pinv_scaled(&pj, p_scale, tol);
    let qb = &t.q * &io.b;
    let qpj = &t.q * &pj;
    let m = io.b.ncols();
    let lhs = block2x2(
        &qb,
        &(-&qpj),
        &io.d,
        &Matrix::zeros(io.d.nrows(), qpj.ncols()),
    );
    let lhs_scale =
        (spectral_norm(&t.q) * (spectral_norm(&io.b) + p_scale)).max(spectral_norm(&io.d));
    let lhs_pinv = pinv_scaled(&lhs, lhs_scale, tol);
    let mut targets = Matrix::zeros(t.n(), xs.ncols());
    for (i, x) in xs.column_iter().enumerate() {
        let x = col(&x.into_owned());
        let j0 = j.basis() * (&pj_pinv * &x);
        let rhs = -vstack(&[&(&t.r * &j0), &(&io.c * &t.p * &j0)]);
        let sol = &lhs_pinv * &rhs;
        let resid = (&lhs * &sol - &rhs).amax();
        if resid > 1e-6 * rhs.amax().max(1.0) {
            return Err(Error::Numerical(format!(
                "J* inclusion not satisfied for basis vector {i} (residual {resid:.2e})"
            )));
        }
        let u = sol.rows(0, m).into_owned();
        let y = &pj * sol.rows(m, sol.nrows() - m);
        let z = a * &x + &io.b * u - y;
        targets.set_column(i, &(-z.column(0)));
    }
    Ok(a + solve_a0(fam, &xs, &targets, tol))
}

/// Build and verify a system in the family that fails `prop`.
///
/// Returns `None` when the construction does not apply (e.g. the property is
/// certified, or the verdict is marginal or inconclusive).
pub fn construct_counterexample(
    red: &Reduction,
    sys: &SystemStructure,
    prop: Property,
    tol: &Tolerances,
) -> Result<Option<Counterexample>> {
    let fam = parametrize(red, tol)?;
    construct_in_family(&fam, &sys.io(), prop, tol)
}

/// [`construct_counterexample`] for an explicit family.
pub fn construct_in_family(
    fam: &CompatibleFamily,
    io: &IoMaps,
    prop: Property,
    tol: &Tolerances,
) -> Result<Option<Counterexample>> {
    let built = match prop {
        Property::LeftInvertibility => left_invertibility_counterexample(fam, io, tol)?,
        p if p.is_controllability_type() => {
            let dual = parametrize_triple(&fam.triple.dual(), tol)?;
            let obs = p.dual().expect("controllability types have duals");
            observation_counterexample(&dual, &io.dual(), obs, tol)?.map(|(a, cert)| {
                let cert = match cert {
                    Certificate::RankDrop {
                        lambda,
                        state_re,
                        state_im,
                        input_re,
                        input_im,
                        ..
                    } => Certificate::RankDrop {
                        lambda,
                        state_re,
                        state_im,
                        input_re,
                        input_im,
                        transposed: true,
                    },
                    other => other,
                };
                (a.transpose(), cert)
            })
        }
        Property::StrongObservability => {
            let sandwich = strong_observability_sandwich(fam, io, tol)?;
            match sandwich {
                Some(found) => Some(found),
                None => observation_counterexample(fam, io, prop, tol)?,
            }
        }
        _ => observation_counterexample(fam, io, prop, tol)?,
    };
    let Some((a_bad, certificate)) = built else {
        return Ok(None);
    };
    Ok(Some(verify(
        fam,
        io,
        prop,
        a_bad,
        certificate,
        Provenance::Construction,
        tol,
    )?))
}

fn verify(
    fam: &CompatibleFamily,
    io: &IoMaps,
    prop: Property,
    a_bad: Matrix,
    certificate: Certificate,
    provenance: Provenance,
    tol: &Tolerances,
) -> Result<Counterexample> {
    let membership_residual = fam.membership_residual(&a_bad);
    let finite = a_bad.iter().all(|x| x.is_finite());
    let verified = finite
        && membership_residual <= tol.containment_atol
        && model_outcome(&a_bad, io, prop, tol)? == RankOutcome::Fails;
    Ok(Counterexample {
        property: prop,
        a_bad,
        certificate,
        provenance,
        membership_residual,
        verified,
    })
}

/// Sandwich system when the precondition holds and `X- J* ≠ {0}`.
fn strong_observability_sandwich(
    fam: &CompatibleFamily,
    io: &IoMaps,
    tol: &Tolerances,
) -> Result<Option<(Matrix, Certificate)>> {
    let t = &fam.triple;
    let pre = triple_precondition(t, io, Property::StrongObservability, TRIPLE_LABELS, tol);
    if !pre.holds {
        return Ok(None);
    }
    let (j, _) = jstar_triple(t, io, tol);
    let dimension = j.map(&t.p).dim();
    if dimension == 0 {
        return Ok(None);
    }
    match worst_case_in(fam, io, tol) {
        Ok(a) => Ok(Some((a, Certificate::WeaklyUnobservable { dimension }))),
        Err(Error::Numerical(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

fn left_invertibility_counterexample(
    fam: &CompatibleFamily,
    io: &IoMaps,
    tol: &Tolerances,
) -> Result<Option<(Matrix, Certificate)>> {
    let t = &fam.triple;
    let pre = triple_precondition(t, io, Property::LeftInvertibility, TRIPLE_LABELS, tol);
    if !pre.holds {
        return Ok(None);
    }
    if !injective_input(io, tol) {
        let k = Subspace::kernel(&vstack(&[&io.b, &io.d]), tol);
        let input = k.basis().column(0).iter().copied().collect();
        return Ok(Some((
            fam.a_particular.clone(),
            Certificate::InputKernel { input },
        )));
    }
    let (j, _) = jstar_triple(t, io, tol);
    let b_ker_d = Subspace::kernel(&io.d, tol).map(&io.b);
    let pj = j.map(&t.p);
    if pj.intersect(&b_ker_d).is_zero() {
        return Ok(None);
    }
    let a = worst_case_in(fam, io, tol)?;
    Ok(Some((
        a,
        Certificate::WeaklyUnobservable {
            dimension: pj.dim(),
        },
    )))
}

/// Outcome of cross-checking one property.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Agreement {
    /// The oracle confirms the verdict.
    Agree,
    /// The oracle contradicts the verdict, or a negative verdict has no verified counterexample.
    Critical,
    /// Nothing to confirm (marginal or inconclusive verdicts).
    Unchecked,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PropertyValidation {
    pub property: Property,
    pub verdict: Verdict,
    pub agreement: Agreement,
    pub samples_checked: usize,
    pub sample_failures: usize,
    pub sample_marginal: usize,
    pub counterexample: Option<Counterexample>,
    pub note: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ValidationReport {
    pub samples: usize,
    pub magnitude: f64,
    pub seed: u64,
    pub results: Vec<PropertyValidation>,
    pub critical: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct ValidateOptions {
    pub samples: usize,
    pub magnitude: f64,
    pub seed: u64,
}

impl Default for ValidateOptions {
    fn default() -> Self {
        Self {
            samples: 500,
            magnitude: 10.0,
            seed: 0x0c_a11b,
        }
    }
}

/// Cross-validate every requested verdict against the sampled family.
pub fn cross_validate(
    sys: &SystemStructure,
    data: &DataSet,
    properties: &[Property],
    opts: ValidateOptions,
    tol: &Tolerances,
) -> Result<ValidationReport> {
    let red = consistent_reduction(sys, data, tol)?;
    let fam = parametrize(&red, tol)?;
    cross_validate_against(&red, sys, &fam, properties, opts, tol)
}

/// Verdicts from `red`, checked against samples and counterexamples in `fam`.
///
/// Normally `fam` is the parametrization of `red`; passing a different family
/// lets a harness confirm that corrupted reductions are caught.
pub fn cross_validate_against(
    red: &Reduction,
    sys: &SystemStructure,
    fam: &CompatibleFamily,
    properties: &[Property],
    opts: ValidateOptions,
    tol: &Tolerances,
) -> Result<ValidationReport> {
    let io = sys.io();
    let draws = sample(fam, opts.samples, opts.magnitude, opts.seed);
    let mut results = Vec::with_capacity(properties.len());
    for &prop in properties {
        let verdict = reduction_test(red, sys, prop, tol)?;
        let mut pv = PropertyValidation {
            property: prop,
            verdict: verdict.clone(),
            agreement: Agreement::Agree,
            samples_checked: 0,
            sample_failures: 0,
            sample_marginal: 0,
            counterexample: None,
            note: String::new(),
        };
        match verdict.informative {
            Informativity::Informative | Informativity::Inconclusive => {
                let outcomes: Vec<RankOutcome> = draws
                    .par_iter()
                    .map(|a| model_outcome(a, &io, prop, tol))
                    .collect::<Result<_>>()?;
                pv.samples_checked = outcomes.len();
                pv.sample_failures = outcomes
                    .iter()
                    .filter(|&&o| o == RankOutcome::Fails)
                    .count();
                pv.sample_marginal = outcomes
                    .iter()
                    .filter(|&&o| o == RankOutcome::Marginal)
                    .count();
                if verdict.informative == Informativity::Inconclusive {
                    pv.agreement = Agreement::Unchecked;
                    pv.note = format!(
                        "verdict inconclusive; {} of {} samples fail the property",
                        pv.sample_failures, pv.samples_checked
                    );
                } else if pv.sample_failures > 0 {
                    pv.agreement = Agreement::Critical;
                    let first = outcomes
                        .iter()
                        .position(|&o| o == RankOutcome::Fails)
                        .unwrap_or(0);
                    pv.note = format!(
                        "{} of {} compatible systems fail the property (first: sample {first})",
                        pv.sample_failures, pv.samples_checked
                    );
                } else {
                    pv.note = format!(
                        "all {} sampled systems have the property",
                        pv.samples_checked
                    );
                }
            }
            Informativity::NotInformative => {
                let mut cx = construct_in_family(fam, &io, prop, tol)?;
                if !cx.as_ref().is_some_and(|c| c.verified) {
                    if let Some(found) = search(fam, &io, prop, &draws, tol)? {
                        cx = Some(found);
                    }
                }
                match &cx {
                    Some(c) if c.verified => {
                        pv.note =
                            format!("counterexample verified ({:?})", c.provenance).to_lowercase();
                    }
                    _ => {
                        pv.agreement = Agreement::Critical;
                        pv.note = "no verified counterexample for a negative verdict".into();
                    }
                }
                pv.counterexample = cx;
            }
            Informativity::Marginal => {
                pv.agreement = Agreement::Unchecked;
                pv.note = "marginal verdict: boundary membership cannot be certified".into();
            }
        }
        results.push(pv);
    }
    let critical = results
        .iter()
        .filter(|r| r.agreement == Agreement::Critical)
        .count();
    Ok(ValidationReport {
        samples: opts.samples,
        magnitude: opts.magnitude,
        seed: opts.seed,
        results,
        critical,
    })
}

fn search(
    fam: &CompatibleFamily,
    io: &IoMaps,
    prop: Property,
    draws: &[Matrix],
    tol: &Tolerances,
) -> Result<Option<Counterexample>> {
    let hit = draws
        .par_iter()
        .position_first(|a| matches!(model_outcome(a, io, prop, tol), Ok(RankOutcome::Fails)));
    match hit {
        Some(i) => Ok(Some(verify(
            fam,
            io,
            prop,
            draws[i].clone(),
            Certificate::Sampled { sample_index: i },
            Provenance::Search,
            tol,
        )?)),
        None => Ok(None),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::problem::build_reduction;
    use nalgebra::dmatrix;

    fn tol() -> Tolerances {
        Tolerances::default()
    }

    fn family(sys: &SystemStructure, data: &DataSet) -> (Reduction, CompatibleFamily) {
        let red = build_reduction(sys, data, &tol()).unwrap();
        let fam = parametrize(&red, &tol()).unwrap();
        (red, fam)
    }

    #[test]
    fn two_state_family_shape() {
        let (sys, data) = fixtures::two_state();
        let (_, fam) = family(&sys, &data);
        assert_eq!(fam.free_dims(), (1, 1));
        for a in sample(&fam, 10, 10.0, 7) {
            assert!(a[(1, 1)].abs() < 1e-12, "entry (2,2) must vanish: {a}");
            assert!(fam.contains(&a, &tol()));
        }
        assert!(fam.contains(&fixtures::two_state_true_a(), &tol()));
    }

    #[test]
    fn chain_family_shape() {
        let (sys, data) = fixtures::chain(1);
        let (_, fam) = family(&sys, &data);
        for a in sample(&fam, 10, 10.0, 3) {
            assert!(fam.contains(&a, &tol()));
            // Rows 1..3 are fixed except for the first column.
            let fixed = dmatrix![1.0, 0.0, 0.0; 0.0, 1.0, 0.0; 0.0, 0.0, 1.0];
            assert!((a.view((0, 1), (3, 3)) - &fixed).amax() < 1e-12, "{a}");
        }
    }

    #[test]
    fn singleton_family() {
        let sys = SystemStructure::noiseless(dmatrix![1.0; 0.0], dmatrix![1.0, 0.0], dmatrix![0.0])
            .unwrap();
        let a = dmatrix![0.5, 1.0; -1.0, 0.2];
        let data = crate::problem::simulate(
            &a,
            &sys,
            &dmatrix![1.0; 1.0],
            &dmatrix![1.0, -2.0, 0.5],
            &Matrix::zeros(0, 3),
        )
        .unwrap();
        let (_, fam) = family(&sys, &data);
        assert_eq!(fam.free_dims(), (0, 0));
        assert!((&fam.a_particular - &a).amax() < 1e-10);
        let s = sample(&fam, 3, 10.0, 1);
        assert!(s.iter().all(|m| (m - &a).amax() < 1e-10));
    }

    #[test]
    fn sampling_is_deterministic() {
        let (sys, data) = fixtures::two_state();
        let (_, fam) = family(&sys, &data);
        assert_eq!(sample(&fam, 5, 10.0, 11), sample(&fam, 5, 10.0, 11));
        assert_ne!(sample(&fam, 5, 10.0, 11), sample(&fam, 5, 10.0, 12));
    }

    #[test]
    fn model_checks_on_two_state() {
        let (sys, _) = fixtures::two_state();
        let io = sys.io();
        let a = fixtures::two_state_true_a();
        assert!(model_check(&a, &io, Property::Detectability, &tol()).unwrap());
        assert!(model_check(&a, &io, Property::Observability, &tol()).unwrap());
        assert!(!model_check(&Matrix::zeros(2, 2), &io, Property::Observability, &tol()).unwrap());
    }

    #[test]
    fn two_state_observability_counterexample() {
        let (sys, data) = fixtures::two_state();
        let (red, _) = family(&sys, &data);
        let cx = construct_counterexample(&red, &sys, Property::Observability, &tol())
            .unwrap()
            .expect("negative verdict has a counterexample");
        assert!(cx.verified, "{cx:?}");
        let n = crate::geometric::unobservable_subspace(&cx.a_bad, &sys.c, &tol());
        assert!(!n.is_zero());
    }

    #[test]
    fn two_state_controllability_counterexample() {
        let (sys, data) = fixtures::two_state();
        let (red, _) = family(&sys, &data);
        for p in [
            Property::Controllability,
            Property::Stabilizability,
            Property::StrongControllability,
            Property::StrongStabilizability,
        ] {
            let cx = construct_counterexample(&red, &sys, p, &tol())
                .unwrap()
                .unwrap();
            assert!(cx.verified, "{p}: {cx:?}");
        }
    }

    #[test]
    fn informative_verdict_has_no_counterexample() {
        let (sys, data) = fixtures::two_state();
        let (red, _) = family(&sys, &data);
        assert!(
            construct_counterexample(&red, &sys, Property::Detectability, &tol())
                .unwrap()
                .is_none()
        );
    }

    #[test]
    fn sandwich_for_chain() {
        let (sys, data) = fixtures::chain(1);
        let (red, fam) = family(&sys, &data);
        let io = sys.io();
        let a_bar = worst_case_system(&red.triple, &io, &tol()).unwrap();
        assert!(fam.contains(&a_bar, &tol()));
        let v = weakly_unobservable(&a_bar, &io.b, &io.c, &io.d, &tol());
        let pj = jstar_triple(&red.triple, &io, &tol()).0.map(red.p());
        assert!(v.contains(&pj));
        let cx = construct_counterexample(&red, &sys, Property::StrongObservability, &tol())
            .unwrap()
            .unwrap();
        assert!(cx.verified);
        assert!(matches!(
            cx.certificate,
            Certificate::WeaklyUnobservable { dimension: 3 }
        ));
    }

    #[test]
    fn complex_witness_counterexample() {
        // All members share the unobservable rotation block.
        let t = Triple {
            p: Matrix::identity(3, 3),
            q: dmatrix![0.0, 1.0, 0.0; 0.0, 0.0, 1.0],
            r: dmatrix![0.0, 0.0, -2.0; 0.0, 2.0, 0.0],
        };
        let io = IoMaps {
            b: Matrix::zeros(3, 0),
            c: dmatrix![1.0, 0.0, 0.0],
            d: Matrix::zeros(1, 0),
        };
        let fam = parametrize_triple(&t, &tol()).unwrap();
        let cx = construct_in_family(&fam, &io, Property::Observability, &tol())
            .unwrap()
            .unwrap();
        assert!(cx.verified, "{cx:?}");
        match cx.certificate {
            Certificate::RankDrop { lambda, .. } => assert!((lambda.im.abs() - 2.0).abs() < 1e-8),
            c => panic!("{c:?}"),
        }
    }

    #[test]
    fn cross_validation_on_fixtures() {
        let opts = ValidateOptions {
            samples: 100,
            ..Default::default()
        };
        let (sys, data) = fixtures::two_state();
        let report = cross_validate(&sys, &data, &Property::ALL, opts, &tol()).unwrap();
        assert_eq!(report.critical, 0, "{report:#?}");
        let (sys, data) = fixtures::chain(1);
        let report = cross_validate(&sys, &data, &Property::ALL, opts, &tol()).unwrap();
        assert_eq!(report.critical, 0, "{report:#?}");
    }

    #[test]
    fn corrupted_reduction_is_flagged() {
        // Process noise on x2 leaves row 2 of A free; with C = (1 0) the mode
        // a22 is unobservable in every member, so most samples are not detectable.
        let sys = SystemStructure::new(
            dmatrix![0.0; 0.0],
            dmatrix![1.0, 0.0],
            dmatrix![0.0],
            dmatrix![0.0; 1.0],
            dmatrix![0.0],
        )
        .unwrap();
        let a = dmatrix![0.5, 0.0; 1.0, 3.0];
        let data = crate::problem::simulate(
            &a,
            &sys,
            &dmatrix![1.0; 1.0],
            &Matrix::zeros(1, 3),
            &dmatrix![1.0, -2.0, 0.5],
        )
        .unwrap();
        let (mut red, fam) = family(&sys, &data);
        let opts = ValidateOptions {
            samples: 50,
            ..Default::default()
        };
        let props = [Property::Detectability];
        let honest = cross_validate_against(&red, &sys, &fam, &props, opts, &tol()).unwrap();
        assert_eq!(honest.critical, 0, "{honest:#?}");
        // Pretend row 2 of A is pinned to (0 0.5): the pencil then has full rank.
        red.triple.r = &red.triple.r + dmatrix![0.0, 0.5] * red.p();
        let report = cross_validate_against(&red, &sys, &fam, &props, opts, &tol()).unwrap();
        assert_eq!(
            report.results[0].verdict.informative,
            Informativity::Informative
        );
        assert_eq!(report.critical, 1, "{report:#?}");
    }
}
