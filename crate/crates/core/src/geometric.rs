//! Subspace iterations: `J*`, `L*`, the weakly unobservable subspace, and the
//! geometric tests for strong observability, observability and left-invertibility.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::informativity::{
    output_nulling_states, Evidence, Informativity, Labels, Method, Property, Verdict, DATA_LABELS,
};
use crate::linalg::{rank_of, vstack, Matrix, Subspace, Tolerances};
use crate::problem::{DataSet, IoMaps, Reduction, SystemStructure, Triple};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IterationTrace {
    /// The iterates `J_0 ⊇ J_1 ⊇ ...` up to the fixed point.
    #[serde(skip)]
    pub iterates: Vec<Subspace>,
    /// Their dimensions.
    pub dims: Vec<usize>,
    /// Number of strict decreases before the fixed point.
    pub steps: usize,
    pub converged: bool,
}

/// Largest `J` with `[r; c p] J ⊆ q p J × {0} + diag(q, I) im [b; d]`, iterated
/// from the full space.
///
/// Products are applied factor by factor so that rank decisions are made
/// relative to each factor's scale.
fn output_nulling_iteration(
    r: &Matrix,
    q: &Matrix,
    p: &Matrix,
    c: &Matrix,
    b: &Matrix,
    d: &Matrix,
    tol: &Tolerances,
) -> (Subspace, IterationTrace) {
    let ambient = r.ncols();
    let outputs = c.nrows();
    let stacked = vstack(&[r, &(c * p)]);
    let inputs = Subspace::image(&vstack(&[b, d]), tol).map(&block_diag(q, outputs));
    let zero_out = Subspace::zero(outputs, tol);
    let mut j = Subspace::full(ambient, tol);
    let mut iterates = vec![j.clone()];
    let mut converged = false;
    for _ in 0..=ambient {
        let target = j.map(p).map(q).product(&zero_out).sum(&inputs);
        let next = Subspace::preimage(&stacked, &target).intersect(&j);
        if next.dim() == j.dim() {
            converged = true;
            break;
        }
        j = next;
        iterates.push(j.clone());
    }
    let dims: Vec<usize> = iterates.iter().map(Subspace::dim).collect();
    let trace = IterationTrace {
        steps: dims.len() - 1,
        dims,
        iterates,
        converged,
    };
    (j, trace)
}

/// `diag(q, I_k)`.
pub(crate) fn block_diag(q: &Matrix, k: usize) -> Matrix {
    let (l, n) = q.shape();
    let mut out = Matrix::zeros(l + k, n + k);
    out.view_mut((0, 0), (l, n)).copy_from(q);
    out.view_mut((l, n), (k, k)).fill_with_identity();
    out
}

/// `J*` for the family `{A | R = Q A P}` and known `(B, C, D)`.
pub fn jstar_triple(t: &Triple, io: &IoMaps, tol: &Tolerances) -> (Subspace, IterationTrace) {
    output_nulling_iteration(&t.r, &t.q, &t.p, &io.c, &io.b, &io.d, tol)
}

/// `L*`: the `J*` iteration with `B = 0`, `D = 0`.
pub fn lstar_triple(t: &Triple, c: &Matrix, tol: &Tolerances) -> (Subspace, IterationTrace) {
    let io = IoMaps {
        b: Matrix::zeros(c.ncols(), 0),
        c: c.clone(),
        d: Matrix::zeros(c.nrows(), 0),
    };
    jstar_triple(t, &io, tol)
}

pub fn jstar(
    red: &Reduction,
    sys: &SystemStructure,
    tol: &Tolerances,
) -> (Subspace, IterationTrace) {
    jstar_triple(&red.triple, &sys.io(), tol)
}

pub fn lstar(
    red: &Reduction,
    sys: &SystemStructure,
    tol: &Tolerances,
) -> (Subspace, IterationTrace) {
    lstar_triple(&red.triple, &sys.c, tol)
}

/// Weakly unobservable subspace `V(A, B, C, D)` with its iteration trace.
pub fn weakly_unobservable_traced(
    a: &Matrix,
    b: &Matrix,
    c: &Matrix,
    d: &Matrix,
    tol: &Tolerances,
) -> (Subspace, IterationTrace) {
    let n = a.nrows();
    let eye = Matrix::identity(n, n);
    output_nulling_iteration(a, &eye, &eye, c, b, d, tol)
}

pub fn weakly_unobservable(
    a: &Matrix,
    b: &Matrix,
    c: &Matrix,
    d: &Matrix,
    tol: &Tolerances,
) -> Subspace {
    weakly_unobservable_traced(a, b, c, d, tol).0
}

/// Largest `A`-invariant subspace contained in `ker C`.
pub fn unobservable_subspace(a: &Matrix, c: &Matrix, tol: &Tolerances) -> Subspace {
    let n = a.nrows();
    weakly_unobservable(
        a,
        &Matrix::zeros(n, 0),
        c,
        &Matrix::zeros(c.nrows(), 0),
        tol,
    )
}

/// `[B; D]` has full column rank.
pub(crate) fn injective_input(io: &IoMaps, tol: &Tolerances) -> bool {
    rank_of(&vstack(&[&io.b, &io.d]), tol) == io.b.ncols()
}

fn base_verdict(prop: Property) -> Verdict {
    Verdict {
        property: prop,
        method: Method::Geometric,
        informative: Informativity::Informative,
        precondition_holds: true,
        rank_verdict: None,
        witness: None,
        explanation: String::new(),
        trace: None,
    }
}

/// Geometric verdict on `{A | R = Q A P}`.
pub fn triple_geometric_test(
    t: &Triple,
    io: &IoMaps,
    prop: Property,
    labels: Labels,
    tol: &Tolerances,
) -> Result<Verdict> {
    let p = labels.p;
    let im_p = Subspace::image(&t.p, tol);
    let mut v = base_verdict(prop);
    match prop {
        Property::StrongObservability | Property::Observability => {
            let strong = prop == Property::StrongObservability;
            let (left, cond, name) = if strong {
                (
                    output_nulling_states(io, tol),
                    format!("C^-1 im D ⊆ im {p}"),
                    "J*",
                )
            } else {
                (
                    Subspace::kernel(&io.c, tol),
                    format!("ker C ⊆ im {p}"),
                    "L*",
                )
            };
            let (space, trace) = if strong {
                jstar_triple(t, io, tol)
            } else {
                lstar_triple(t, &io.c, tol)
            };
            v.trace = Some(trace);
            if let Some(x) = im_p.escaping_vector(&left) {
                v.precondition_holds = false;
                v.informative = Informativity::NotInformative;
                v.witness = Some(Evidence::direction(format!("violates {cond}"), &x));
                v.explanation = format!("precondition {cond} fails");
                return Ok(v);
            }
            let image = space.map(&t.p);
            if image.is_zero() {
                v.explanation = format!(
                    "{cond} holds and {name} ⊆ ker {p} (dim {name} = {})",
                    space.dim()
                );
            } else {
                v.informative = Informativity::NotInformative;
                let x = image.basis().column(0).into_owned();
                v.witness = Some(Evidence::direction(format!("{p} {name} direction"), &x));
                v.explanation =
                    format!("{name} ⊄ ker {p}: {p} {name} has dimension {}", image.dim());
            }
        }
        Property::LeftInvertibility => {
            let cond = format!("C^-1 im D ⊆ im {p}");
            let (space, trace) = jstar_triple(t, io, tol);
            v.trace = Some(trace);
            if let Some(x) = im_p.escaping_vector(&output_nulling_states(io, tol)) {
                v.precondition_holds = false;
                v.informative = Informativity::Inconclusive;
                v.witness = Some(Evidence::direction(format!("violates {cond}"), &x));
                v.explanation = format!(
                    "{cond} fails; the J* characterization does not apply, so no verdict is given"
                );
                return Ok(v);
            }
            let bd = vstack(&[&io.b, &io.d]);
            if !injective_input(io, tol) {
                let k = Subspace::kernel(&bd, tol);
                v.informative = Informativity::NotInformative;
                v.witness = Some(Evidence::direction(
                    "input direction in ker [B; D]",
                    &k.basis().column(0).into_owned(),
                ));
                v.explanation = "[B; D] does not have full column rank".into();
                return Ok(v);
            }
            let b_ker_d = Subspace::kernel(&io.d, tol).map(&io.b);
            let meet = space.map(&t.p).intersect(&b_ker_d);
            if meet.is_zero() {
                v.explanation = format!("{p} J* ∩ B ker D = {{0}} and [B; D] is injective");
            } else {
                v.informative = Informativity::NotInformative;
                v.witness = Some(Evidence::direction(
                    format!("state direction in {p} J* ∩ B ker D"),
                    &meet.basis().column(0).into_owned(),
                ));
                v.explanation = format!("{p} J* ∩ B ker D has dimension {}", meet.dim());
            }
        }
        other => {
            return Err(Error::Unsupported(format!(
                "{other} has no geometric test; use the pencil method"
            )))
        }
    }
    Ok(v)
}

pub fn reduction_geometric_test(
    red: &Reduction,
    sys: &SystemStructure,
    prop: Property,
    tol: &Tolerances,
) -> Result<Verdict> {
    triple_geometric_test(&red.triple, &sys.io(), prop, DATA_LABELS, tol)
}

/// Geometric informativity test for strong observability, observability or left-invertibility.
pub fn geometric_test(
    sys: &SystemStructure,
    data: &DataSet,
    prop: Property,
    tol: &Tolerances,
) -> Result<Verdict> {
    let red = crate::informativity::consistent_reduction(sys, data, tol)?;
    reduction_geometric_test(&red, sys, prop, tol)
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

    fn is_output_nulling(a: &Matrix, b: &Matrix, c: &Matrix, d: &Matrix, v: &Subspace) -> bool {
        let n = a.nrows();
        let lhs = v.map(&vstack(&[a, c]));
        let rhs = v
            .product(&Subspace::zero(c.nrows(), &tol()))
            .sum(&Subspace::image(&vstack(&[b, d]), &tol()));
        assert_eq!(rhs.ambient(), n + c.nrows());
        rhs.contains(&lhs)
    }

    #[test]
    fn chain_jstar_and_lstar() {
        let (sys, data) = fixtures::chain(1);
        let red = build_reduction(&sys, &data, &tol()).unwrap();
        let (j, trace) = jstar(&red, &sys, &tol());
        assert_eq!(j.dim(), 3);
        assert!(trace.converged && trace.steps <= 3);
        let (l, trace) = lstar(&red, &sys, &tol());
        assert!(l.is_zero());
        assert!(trace.steps <= 3);
    }

    #[test]
    fn chain_variants_follow_formula() {
        for i in 2..=4 {
            let (sys, data) = fixtures::chain(i);
            let red = build_reduction(&sys, &data, &tol()).unwrap();
            let (j, _) = jstar(&red, &sys, &tol());
            assert_eq!(j.dim(), 4 - i, "i = {i}");
            // X- J* = {0}^i × R^(4-i).
            let image = j.map(red.p());
            let mut expected = Matrix::zeros(4, 4 - i);
            for k in 0..4 - i {
                expected[(i + k, k)] = 1.0;
            }
            assert!(
                image.same_as(&Subspace::image(&expected, &tol())),
                "i = {i}"
            );
            let so = geometric_test(&sys, &data, Property::StrongObservability, &tol()).unwrap();
            assert_eq!(so.is_informative(), i == 4, "i = {i}");
            let li = geometric_test(&sys, &data, Property::LeftInvertibility, &tol()).unwrap();
            assert!(li.is_informative(), "i = {i}");
        }
        let (sys, data) = fixtures::chain(1);
        let li = geometric_test(&sys, &data, Property::LeftInvertibility, &tol()).unwrap();
        assert!(li.is_informative());
    }

    #[test]
    fn chain_geometric_verdicts() {
        let (sys, data) = fixtures::chain(1);
        let so = geometric_test(&sys, &data, Property::StrongObservability, &tol()).unwrap();
        assert_eq!(so.informative, Informativity::NotInformative);
        assert!(so.precondition_holds);
        let o = geometric_test(&sys, &data, Property::Observability, &tol()).unwrap();
        assert!(o.is_informative());
    }

    #[test]
    fn two_state_lstar_is_nontrivial() {
        let (sys, data) = fixtures::two_state();
        let red = build_reduction(&sys, &data, &tol()).unwrap();
        let (l, _) = lstar(&red, &sys, &tol());
        assert!(!l.map(red.p()).is_zero());
        let o = geometric_test(&sys, &data, Property::Observability, &tol()).unwrap();
        assert_eq!(o.informative, Informativity::NotInformative);
    }

    #[test]
    fn identity_output_gives_trivial_jstar() {
        let t = Triple {
            p: dmatrix![1.0, 0.0, 1.0; 0.0, 1.0, 1.0],
            q: Matrix::identity(2, 2),
            r: dmatrix![0.0, 1.0, 1.0; 1.0, 0.0, 1.0],
        };
        let io = IoMaps {
            b: dmatrix![1.0; 0.0],
            c: Matrix::identity(2, 2),
            d: Matrix::zeros(2, 1),
        };
        let (j, _) = jstar_triple(&t, &io, &tol());
        assert!(j.map(&t.p).is_zero());
    }

    #[test]
    fn lstar_full_when_unconstrained() {
        let t = Triple {
            p: Matrix::zeros(2, 3),
            q: Matrix::identity(2, 2),
            r: Matrix::zeros(2, 3),
        };
        let (l, _) = lstar_triple(&t, &dmatrix![1.0, 1.0], &tol());
        assert!(l.is_full());
    }

    #[test]
    fn weakly_unobservable_examples() {
        let a = fixtures::chain_true_a();
        let b = dmatrix![1.0; 0.0; 0.0; 0.0];
        let c = dmatrix![1.0, 0.0, 0.0, 0.0];
        let d = dmatrix![0.0];
        let v = weakly_unobservable(&a, &b, &c, &d, &tol());
        assert!(is_output_nulling(&a, &b, &c, &d, &v));
        let (sys, data) = fixtures::chain(1);
        let red = build_reduction(&sys, &data, &tol()).unwrap();
        let pj = jstar(&red, &sys, &tol()).0.map(red.p());
        assert!(pj.contains(&v));

        let z = weakly_unobservable(&a, &b, &Matrix::zeros(1, 4), &Matrix::zeros(1, 1), &tol());
        assert!(z.is_full());
    }

    #[test]
    fn unobservable_subspace_examples() {
        let c = dmatrix![1.0, 0.0];
        assert!(unobservable_subspace(&fixtures::two_state_true_a(), &c, &tol()).is_zero());
        let n = unobservable_subspace(&Matrix::zeros(2, 2), &c, &tol());
        assert!(n.same_as(&Subspace::image(&dmatrix![0.0; 1.0], &tol())));
        // Block-diagonal A with an unobserved second block.
        let a = dmatrix![
            0.5, 0.0, 0.0;
            0.0, 0.2, 1.0;
            0.0, -1.0, 0.3
        ];
        let c = dmatrix![1.0, 0.0, 0.0];
        let n = unobservable_subspace(&a, &c, &tol());
        assert!(n.same_as(&Subspace::image(
            &dmatrix![0.0, 0.0; 1.0, 0.0; 0.0, 1.0],
            &tol()
        )));
    }

    #[test]
    fn left_invertibility_inconclusive_with_identity_d() {
        let sys = SystemStructure::noiseless(dmatrix![1.0; 0.0], dmatrix![1.0, 0.0], dmatrix![1.0])
            .unwrap();
        let a = dmatrix![0.5, 0.0; 0.0, 0.5];
        // x(0) = e1 keeps X- rank-deficient.
        let data = crate::problem::simulate(
            &a,
            &sys,
            &dmatrix![1.0; 0.0],
            &dmatrix![0.0, 0.0],
            &Matrix::zeros(0, 2),
        )
        .unwrap();
        let v = geometric_test(&sys, &data, Property::LeftInvertibility, &tol()).unwrap();
        assert_eq!(v.informative, Informativity::Inconclusive);
        assert!(!v.precondition_holds);
    }

    #[test]
    fn non_injective_inputs_are_not_left_invertible() {
        let t = Triple {
            p: Matrix::identity(2, 2),
            q: Matrix::identity(2, 2),
            r: Matrix::identity(2, 2),
        };
        let io = IoMaps {
            b: dmatrix![1.0, 1.0; 0.0, 0.0],
            c: Matrix::identity(2, 2),
            d: Matrix::zeros(2, 2),
        };
        let v = triple_geometric_test(&t, &io, Property::LeftInvertibility, DATA_LABELS, &tol())
            .unwrap();
        assert_eq!(v.informative, Informativity::NotInformative);
    }
}
