//! Informativity tests: a subspace precondition combined with a uniform rank
//! condition on a pencil built from the reduced data `(P, Q, R) = (X_-, M, R)`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometric::{self, block_diag, IterationTrace};
use crate::linalg::{block2x2, hstack, rank_of, vstack, Matrix, Subspace, Tolerances};
use crate::pencil::{uniform_rank_test, Pencil, RankOutcome, RankVerdict, Region, Witness};
use crate::problem::{
    build_reduction, consistency_check, DataSet, IoMaps, NoisePattern, Reduction, SystemStructure,
    Triple,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Property {
    StrongObservability,
    StrongDetectability,
    Observability,
    Detectability,
    StrongControllability,
    StrongStabilizability,
    Controllability,
    Stabilizability,
    LeftInvertibility,
}

impl Property {
    pub const ALL: [Property; 9] = [
        Property::StrongObservability,
        Property::StrongDetectability,
        Property::Observability,
        Property::Detectability,
        Property::StrongControllability,
        Property::StrongStabilizability,
        Property::Controllability,
        Property::Stabilizability,
        Property::LeftInvertibility,
    ];

    /// The eight properties decided by a pencil test.
    pub const PENCIL: [Property; 8] = [
        Property::StrongObservability,
        Property::StrongDetectability,
        Property::Observability,
        Property::Detectability,
        Property::StrongControllability,
        Property::StrongStabilizability,
        Property::Controllability,
        Property::Stabilizability,
    ];

    /// Properties that also have a subspace-iteration test.
    pub const GEOMETRIC: [Property; 3] = [
        Property::StrongObservability,
        Property::Observability,
        Property::LeftInvertibility,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Property::StrongObservability => "strong-observability",
            Property::StrongDetectability => "strong-detectability",
            Property::Observability => "observability",
            Property::Detectability => "detectability",
            Property::StrongControllability => "strong-controllability",
            Property::StrongStabilizability => "strong-stabilizability",
            Property::Controllability => "controllability",
            Property::Stabilizability => "stabilizability",
            Property::LeftInvertibility => "left-invertibility",
        }
    }

    pub fn region(self) -> Region {
        match self {
            Property::StrongDetectability
            | Property::Detectability
            | Property::StrongStabilizability
            | Property::Stabilizability => Region::ClosedUnitExterior,
            _ => Region::AllComplex,
        }
    }

    /// Whether the property involves `(B, D)` in its rank condition.
    pub fn is_strong(self) -> bool {
        matches!(
            self,
            Property::StrongObservability
                | Property::StrongDetectability
                | Property::StrongControllability
                | Property::StrongStabilizability
                | Property::LeftInvertibility
        )
    }

    pub fn is_controllability_type(self) -> bool {
        matches!(
            self,
            Property::StrongControllability
                | Property::StrongStabilizability
                | Property::Controllability
                | Property::Stabilizability
        )
    }

    /// Observation-type property of the transposed system.
    pub fn dual(self) -> Option<Property> {
        match self {
            Property::StrongControllability => Some(Property::StrongObservability),
            Property::StrongStabilizability => Some(Property::StrongDetectability),
            Property::Controllability => Some(Property::Observability),
            Property::Stabilizability => Some(Property::Detectability),
            Property::StrongObservability => Some(Property::StrongControllability),
            Property::StrongDetectability => Some(Property::StrongStabilizability),
            Property::Observability => Some(Property::Controllability),
            Property::Detectability => Some(Property::Stabilizability),
            Property::LeftInvertibility => None,
        }
    }

    pub fn has_geometric_test(self) -> bool {
        Self::GEOMETRIC.contains(&self)
    }
}

impl fmt::Display for Property {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Property {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase().replace('_', "-");
        Self::ALL
            .into_iter()
            .find(|p| p.name() == key)
            .ok_or_else(|| Error::Schema(format!("unknown property '{s}'")))
    }
}

/// Parse a comma-separated list, or `all`.
pub fn parse_properties(list: &str) -> Result<Vec<Property>> {
    if list.trim().eq_ignore_ascii_case("all") {
        return Ok(Property::ALL.to_vec());
    }
    let mut out = Vec::new();
    for item in list.split(',').filter(|s| !s.trim().is_empty()) {
        let p: Property = item.parse()?;
        if !out.contains(&p) {
            out.push(p);
        }
    }
    if out.is_empty() {
        return Err(Error::Schema("empty property list".into()));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Informativity {
    Informative,
    NotInformative,
    /// A rank drop sits in the numerical band around the unit circle.
    Marginal,
    /// The available characterization does not apply (left-invertibility only).
    Inconclusive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Pencil,
    Geometric,
}

/// Machine-checkable reason for a negative verdict.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Evidence {
    /// The pencil loses rank at `lambda`.
    Lambda {
        #[serde(with = "crate::serde_complex")]
        lambda: num_complex::Complex64,
        rank: usize,
    },
    /// A vector violating a subspace condition.
    Direction {
        description: String,
        vector: Vec<f64>,
    },
}

impl Evidence {
    fn from_witness(w: &Witness) -> Self {
        Evidence::Lambda {
            lambda: w.lambda,
            rank: w.rank,
        }
    }

    pub(crate) fn direction(description: impl Into<String>, v: &nalgebra::DVector<f64>) -> Self {
        Evidence::Direction {
            description: description.into(),
            vector: v.iter().copied().collect(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Verdict {
    pub property: Property,
    pub method: Method,
    pub informative: Informativity,
    pub precondition_holds: bool,
    pub rank_verdict: Option<RankVerdict>,
    pub witness: Option<Evidence>,
    pub explanation: String,
    pub trace: Option<IterationTrace>,
}

impl Verdict {
    pub fn is_informative(&self) -> bool {
        self.informative == Informativity::Informative
    }
}

/// Names used in explanations: data-level (`X-`, `M`) or triple-level (`P`, `Q`).
#[derive(Debug, Clone, Copy)]
pub struct Labels {
    pub p: &'static str,
    pub q: &'static str,
}

pub const DATA_LABELS: Labels = Labels { p: "X-", q: "M" };
pub const TRIPLE_LABELS: Labels = Labels { p: "P", q: "Q" };

#[derive(Debug, Clone)]
pub struct PreconditionCheck {
    pub holds: bool,
    /// The inclusion that was checked last (the failing one if any).
    pub condition: String,
    /// A vector in the left side but outside the right side.
    pub violation: Option<nalgebra::DVector<f64>>,
}

fn inclusion(inner: &Subspace, outer: &Subspace, condition: String) -> PreconditionCheck {
    let violation = outer.escaping_vector(inner);
    PreconditionCheck {
        holds: violation.is_none(),
        condition,
        violation,
    }
}

/// `C^{-1} im D`.
pub fn output_nulling_states(io: &IoMaps, tol: &Tolerances) -> Subspace {
    Subspace::preimage(&io.c, &Subspace::image(&io.d, tol))
}

/// Subspace precondition of `prop` for the family `{A | R = Q A P}`.
pub fn triple_precondition(
    t: &Triple,
    io: &IoMaps,
    prop: Property,
    labels: Labels,
    tol: &Tolerances,
) -> PreconditionCheck {
    let Labels { p, q } = labels;
    let im_p = Subspace::image(&t.p, tol);
    match prop {
        Property::StrongObservability
        | Property::StrongDetectability
        | Property::LeftInvertibility => inclusion(
            &output_nulling_states(io, tol),
            &im_p,
            format!("C^-1 im D ⊆ im {p}"),
        ),
        Property::Observability | Property::Detectability => inclusion(
            &Subspace::kernel(&io.c, tol),
            &im_p,
            format!("ker C ⊆ im {p}"),
        ),
        Property::Controllability | Property::Stabilizability => inclusion(
            &Subspace::kernel(&t.q, tol),
            &Subspace::image(&io.b, tol),
            format!("ker {q} ⊆ im B"),
        ),
        Property::StrongControllability | Property::StrongStabilizability => {
            let ker_q = Subspace::kernel(&t.q, tol);
            let first = inclusion(
                &ker_q,
                &Subspace::image(&io.b, tol),
                format!("ker {q} ⊆ im B"),
            );
            if !first.holds {
                return first;
            }
            let b_ker_d = Subspace::kernel(&io.d, tol).map(&io.b);
            inclusion(&ker_q, &b_ker_d, format!("ker {q} ⊆ B ker D"))
        }
    }
}

/// `rank(x y)`, decided relative to the scales of `x` and `y` separately.
pub fn rank_of_product(x: &Matrix, y: &Matrix, tol: &Tolerances) -> usize {
    Subspace::image(y, tol).map(x).dim()
}

/// A pencil, the rank it must keep, and where.
#[derive(Debug, Clone)]
pub struct PropertyPencil {
    pub pencil: Pencil,
    pub target: usize,
    pub region: Region,
}

/// `[R - λ QP, QB; CP, D]` as `N0 - λ N1`.
pub fn system_pencil(t: &Triple, io: &IoMaps) -> Pencil {
    let qp = &t.q * &t.p;
    let qb = &t.q * &io.b;
    let cp = &io.c * &t.p;
    let n0 = block2x2(&t.r, &qb, &cp, &io.d);
    let n1 = block2x2(
        &qp,
        &Matrix::zeros(qb.nrows(), qb.ncols()),
        &Matrix::zeros(cp.nrows(), cp.ncols()),
        &Matrix::zeros(io.d.nrows(), io.d.ncols()),
    );
    Pencil { n0, n1 }
}

/// Pencil and target for `prop` in its general (unsimplified) form.
pub fn triple_pencil(
    t: &Triple,
    io: &IoMaps,
    prop: Property,
    tol: &Tolerances,
) -> Result<PropertyPencil> {
    let region = prop.region();
    let (pencil, target) = match prop {
        Property::StrongObservability | Property::StrongDetectability => {
            let target = rank_of(&t.p, tol)
                + rank_of_product(
                    &block_diag(&t.q, io.d.nrows()),
                    &vstack(&[&io.b, &io.d]),
                    tol,
                );
            (system_pencil(t, io), target)
        }
        Property::Observability | Property::Detectability => {
            (system_pencil(t, &io.output_only()), rank_of(&t.p, tol))
        }
        Property::StrongControllability | Property::StrongStabilizability => {
            let target = rank_of(&t.q, tol)
                + rank_of_product(
                    &hstack(&[&io.c, &io.d]),
                    &block_diag(&t.p, io.d.ncols()),
                    tol,
                );
            (system_pencil(t, io), target)
        }
        Property::Controllability | Property::Stabilizability => {
            (system_pencil(t, &io.input_only()), rank_of(&t.q, tol))
        }
        Property::LeftInvertibility => {
            return Err(Error::Unsupported(
                "left-invertibility has no pencil test; use the geometric method".into(),
            ))
        }
    };
    Ok(PropertyPencil {
        pencil,
        target,
        region,
    })
}

/// Property pencil for data, using the pattern-specific simplified
/// controllability pencils where they apply.
pub fn build_property_pencil(
    red: &Reduction,
    sys: &SystemStructure,
    prop: Property,
    tol: &Tolerances,
) -> Result<PropertyPencil> {
    let simple = matches!(prop, Property::Controllability | Property::Stabilizability);
    if !simple {
        return general_property_pencil(red, sys, prop, tol);
    }
    let xm = red.p();
    let xp = &red.x_plus;
    let region = prop.region();
    let zeros = Matrix::zeros(sys.n(), sys.m());
    match red.pattern {
        NoisePattern::Noiseless => Ok(PropertyPencil {
            pencil: Pencil {
                n0: hstack(&[xp, &sys.b]),
                n1: hstack(&[xm, &zeros]),
            },
            target: sys.n(),
            region,
        }),
        NoisePattern::ProcessOnly | NoisePattern::IndependentSplit { .. } => {
            let m = red.q();
            Ok(PropertyPencil {
                pencil: Pencil {
                    n0: m * hstack(&[xp, &sys.b]),
                    n1: m * hstack(&[xm, &zeros]),
                },
                target: rank_of(m, tol),
                region,
            })
        }
        NoisePattern::General => general_property_pencil(red, sys, prop, tol),
    }
}

/// Property pencil from the reduced triple, without simplification.
pub fn general_property_pencil(
    red: &Reduction,
    sys: &SystemStructure,
    prop: Property,
    tol: &Tolerances,
) -> Result<PropertyPencil> {
    triple_pencil(&red.triple, &sys.io(), prop, tol)
}

pub fn precondition(
    red: &Reduction,
    sys: &SystemStructure,
    prop: Property,
    tol: &Tolerances,
) -> bool {
    triple_precondition(&red.triple, &sys.io(), prop, DATA_LABELS, tol).holds
}

fn combine(
    prop: Property,
    pre: PreconditionCheck,
    pp: &PropertyPencil,
    q_rows: usize,
    labels: Labels,
    tol: &Tolerances,
) -> Result<Verdict> {
    let rv = uniform_rank_test(&pp.pencil, pp.target, pp.region, tol)?;
    let mut verdict = Verdict {
        property: prop,
        method: Method::Pencil,
        informative: Informativity::Informative,
        precondition_holds: pre.holds,
        rank_verdict: None,
        witness: None,
        explanation: String::new(),
        trace: None,
    };
    let region = match pp.region {
        Region::AllComplex => "all λ",
        Region::ClosedUnitExterior => "all |λ| >= 1",
    };
    if !pre.holds {
        verdict.informative = Informativity::NotInformative;
        verdict.witness = pre
            .violation
            .as_ref()
            .map(|v| Evidence::direction(format!("violates {}", pre.condition), v));
        verdict.explanation = format!("precondition {} fails", pre.condition);
    } else {
        match rv.outcome {
            RankOutcome::Holds => {
                verdict.explanation = format!(
                    "{} holds and the pencil keeps rank {} for {region}",
                    pre.condition, pp.target
                );
            }
            RankOutcome::Fails => {
                let w = &rv.witnesses[0];
                verdict.informative = Informativity::NotInformative;
                verdict.witness = Some(Evidence::from_witness(w));
                verdict.explanation = if rv.normal_rank < pp.target {
                    format!(
                        "rank condition fails: normal rank {} < target {}",
                        rv.normal_rank, pp.target
                    )
                } else {
                    format!(
                        "rank condition fails at λ = {}: rank {} < target {}",
                        fmt_complex(w.lambda),
                        w.rank,
                        pp.target
                    )
                };
            }
            RankOutcome::Marginal => {
                let w = &rv.marginal_witnesses[0];
                verdict.informative = Informativity::Marginal;
                verdict.witness = Some(Evidence::from_witness(w));
                verdict.explanation = format!(
                    "rank drops at λ = {} on the numerical unit circle",
                    fmt_complex(w.lambda)
                );
            }
        }
    }
    if q_rows == 0 {
        verdict.explanation.push_str(&format!(
            " ({} has no rows: the noise can explain any state transition)",
            labels.q
        ));
    }
    verdict.rank_verdict = Some(rv);
    Ok(verdict)
}

pub(crate) fn fmt_complex(z: num_complex::Complex64) -> String {
    if z.im == 0.0 {
        format!("{:.6}", z.re)
    } else {
        format!("{:.6}{:+.6}i", z.re, z.im)
    }
}

/// Pencil verdict for `{A | R = Q A P}` with known `(B, C, D)`.
pub fn triple_test(t: &Triple, io: &IoMaps, prop: Property, tol: &Tolerances) -> Result<Verdict> {
    if prop == Property::LeftInvertibility {
        return geometric::triple_geometric_test(t, io, prop, TRIPLE_LABELS, tol);
    }
    let pre = triple_precondition(t, io, prop, TRIPLE_LABELS, tol);
    let pp = triple_pencil(t, io, prop, tol)?;
    combine(prop, pre, &pp, t.q.nrows(), TRIPLE_LABELS, tol)
}

/// Verdict for an already reduced, consistent problem.
pub fn reduction_test(
    red: &Reduction,
    sys: &SystemStructure,
    prop: Property,
    tol: &Tolerances,
) -> Result<Verdict> {
    if prop == Property::LeftInvertibility {
        return geometric::reduction_geometric_test(red, sys, prop, tol);
    }
    let pre = triple_precondition(&red.triple, &sys.io(), prop, DATA_LABELS, tol);
    let pp = build_property_pencil(red, sys, prop, tol)?;
    combine(prop, pre, &pp, red.q().nrows(), DATA_LABELS, tol)
}

/// Reduce and check consistency, or report why the data admit no system.
pub fn consistent_reduction(
    sys: &SystemStructure,
    data: &DataSet,
    tol: &Tolerances,
) -> Result<Reduction> {
    tol.validate()?;
    let red = build_reduction(sys, data, tol)?;
    if !consistency_check(&red, tol) {
        return Err(Error::Inconsistent(
            "no state matrix A explains the data with the given B, C, D, E, F".into(),
        ));
    }
    Ok(red)
}

/// Decide whether the data are informative for `prop`.
pub fn informativity_test(
    sys: &SystemStructure,
    data: &DataSet,
    prop: Property,
    tol: &Tolerances,
) -> Result<Verdict> {
    let red = consistent_reduction(sys, data, tol)?;
    reduction_test(&red, sys, prop, tol)
}
