//! Problem data, structure matrices and the reduction to an affine family
//! `{A | R = Q A P}` of state matrices compatible with the data.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{
    annihilator_of_image, check_finite, pinv, spectral_norm, vstack, Matrix, Subspace, Tolerances,
};

/// Known matrices of `x+ = A x + B u + E w`, `y = C x + D u + F w`.
#[derive(Debug, Clone)]
pub struct SystemStructure {
    pub b: Matrix,
    pub c: Matrix,
    pub d: Matrix,
    pub e: Matrix,
    pub f: Matrix,
}

impl SystemStructure {
    pub fn new(b: Matrix, c: Matrix, d: Matrix, e: Matrix, f: Matrix) -> Result<Self> {
        let n = b.nrows();
        let (m, p, rw) = (b.ncols(), c.nrows(), e.ncols());
        let checks = [
            ("C", c.shape(), (p, n)),
            ("D", d.shape(), (p, m)),
            ("E", e.shape(), (n, rw)),
            ("F", f.shape(), (p, rw)),
        ];
        for (name, got, want) in checks {
            if got != want {
                return Err(Error::Dimension(format!(
                    "{name} is {}x{}, expected {}x{}",
                    got.0, got.1, want.0, want.1
                )));
            }
        }
        for (name, mat) in [("B", &b), ("C", &c), ("D", &d), ("E", &e), ("F", &f)] {
            check_finite(name, mat)?;
        }
        Ok(Self { b, c, d, e, f })
    }

    /// Structure without noise (`E = 0`, `F = 0` with zero noise channels).
    pub fn noiseless(b: Matrix, c: Matrix, d: Matrix) -> Result<Self> {
        let (n, p) = (b.nrows(), c.nrows());
        Self::new(b, c, d, Matrix::zeros(n, 0), Matrix::zeros(p, 0))
    }

    pub fn n(&self) -> usize {
        self.b.nrows()
    }

    pub fn m(&self) -> usize {
        self.b.ncols()
    }

    pub fn p(&self) -> usize {
        self.c.nrows()
    }

    pub fn noise_dim(&self) -> usize {
        self.e.ncols()
    }

    pub fn io(&self) -> IoMaps {
        IoMaps {
            b: self.b.clone(),
            c: self.c.clone(),
            d: self.d.clone(),
        }
    }

    pub fn noise_stack(&self) -> Matrix {
        vstack(&[&self.e, &self.f])
    }
}

/// The `(B, C, D)` part of a system, used by the triple-level tests.
#[derive(Debug, Clone)]
pub struct IoMaps {
    pub b: Matrix,
    pub c: Matrix,
    pub d: Matrix,
}

impl IoMaps {
    /// `(C^T, B^T, D^T)`.
    pub fn dual(&self) -> IoMaps {
        IoMaps {
            b: self.c.transpose(),
            c: self.b.transpose(),
            d: self.d.transpose(),
        }
    }

    /// Same `C`, with `B` and `D` replaced by empty input channels.
    pub fn output_only(&self) -> IoMaps {
        IoMaps {
            b: Matrix::zeros(self.b.nrows(), 0),
            c: self.c.clone(),
            d: Matrix::zeros(self.c.nrows(), 0),
        }
    }

    /// Same `B`, with `C` and `D` replaced by empty output channels.
    pub fn input_only(&self) -> IoMaps {
        IoMaps {
            b: self.b.clone(),
            c: Matrix::zeros(0, self.c.ncols()),
            d: Matrix::zeros(0, self.b.ncols()),
        }
    }

    pub fn n(&self) -> usize {
        self.c.ncols()
    }
}

/// Recorded trajectory `U_-`, `X`, `Y_-` on `0..=T`.
#[derive(Debug, Clone)]
pub struct DataSet {
    pub u_minus: Matrix,
    pub x: Matrix,
    pub y_minus: Matrix,
}

impl DataSet {
    pub fn new(u_minus: Matrix, x: Matrix, y_minus: Matrix) -> Result<Self> {
        let t = u_minus.ncols();
        if t == 0 {
            return Err(Error::Dimension(
                "U must have at least one column (T >= 1)".into(),
            ));
        }
        if x.ncols() != t + 1 {
            return Err(Error::Dimension(format!(
                "X has {} columns, expected T+1 = {} (T taken from U)",
                x.ncols(),
                t + 1
            )));
        }
        if y_minus.ncols() != t {
            return Err(Error::Dimension(format!(
                "Y has {} columns, expected T = {t}",
                y_minus.ncols()
            )));
        }
        for (name, mat) in [("U", &u_minus), ("X", &x), ("Y", &y_minus)] {
            check_finite(name, mat)?;
        }
        Ok(Self {
            u_minus,
            x,
            y_minus,
        })
    }

    pub fn horizon(&self) -> usize {
        self.u_minus.ncols()
    }

    pub fn x_minus(&self) -> Matrix {
        self.x.columns(0, self.horizon()).into_owned()
    }

    pub fn x_plus(&self) -> Matrix {
        self.x.columns(1, self.horizon()).into_owned()
    }

    fn check_against(&self, sys: &SystemStructure) -> Result<()> {
        let checks = [
            ("U rows", self.u_minus.nrows(), sys.m()),
            ("X rows", self.x.nrows(), sys.n()),
            ("Y rows", self.y_minus.nrows(), sys.p()),
        ];
        for (what, got, want) in checks {
            if got != want {
                return Err(Error::Dimension(format!("{what} = {got}, expected {want}")));
            }
        }
        Ok(())
    }
}

/// How the noise enters, as declared through the exact zero pattern of `E`, `F`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoisePattern {
    General,
    /// `E = (E1 0)`, `F = (0 F2)` with `E1` the first `process_cols` columns.
    IndependentSplit {
        process_cols: usize,
    },
    ProcessOnly,
    Noiseless,
}

impl NoisePattern {
    pub fn detect(sys: &SystemStructure) -> Self {
        let zero_col = |m: &Matrix, j: usize| m.column(j).iter().all(|&x| x == 0.0);
        let rw = sys.noise_dim();
        let e_zero = (0..rw).all(|j| zero_col(&sys.e, j));
        let f_zero = (0..rw).all(|j| zero_col(&sys.f, j));
        match (e_zero, f_zero) {
            (true, true) => return Self::Noiseless,
            (false, true) => return Self::ProcessOnly,
            _ => {}
        }
        // Smallest split with E[:, k..] = 0, and F[:, ..k] = 0 must hold there.
        let k = (0..rw)
            .rev()
            .find(|&j| !zero_col(&sys.e, j))
            .map_or(0, |j| j + 1);
        if (0..k).all(|j| zero_col(&sys.f, j)) {
            Self::IndependentSplit { process_cols: k }
        } else {
            Self::General
        }
    }
}

/// `(P, Q, R)` describing the affine set `{A | R = Q A P}`.
#[derive(Debug, Clone)]
pub struct Triple {
    pub p: Matrix,
    pub q: Matrix,
    pub r: Matrix,
}

impl Triple {
    /// `{A^T}` for the same family: `R^T = P^T A^T Q^T`.
    pub fn dual(&self) -> Triple {
        Triple {
            p: self.q.transpose(),
            q: self.p.transpose(),
            r: self.r.transpose(),
        }
    }

    /// `im R ⊆ im Q` and `ker P ⊆ ker R`, tested as `Q Q^+ R P^+ P = R`.
    ///
    /// A residual test rather than a rank comparison: `R` is often pure
    /// rounding noise, whose own numerical rank is meaningless.
    pub fn is_consistent(&self, tol: &Tolerances) -> bool {
        let a = pinv(&self.q, tol) * &self.r * pinv(&self.p, tol);
        let scale = spectral_norm(&self.q) * spectral_norm(&a) * spectral_norm(&self.p);
        let scale = scale.max(spectral_norm(&self.r)).max(1.0);
        self.residual(&a) <= tol.containment_atol * scale
    }

    /// `max |R - Q A P|`.
    pub fn residual(&self, a: &Matrix) -> f64 {
        (&self.r - &self.q * a * &self.p).amax()
    }

    pub fn n(&self) -> usize {
        self.p.nrows()
    }
}

/// Reduced description of the compatible family `A_dat`.
#[derive(Debug, Clone)]
pub struct Reduction {
    /// `P = X_-`, `Q = M`, `R` per the detected pattern.
    pub triple: Triple,
    /// Full annihilator `(M N)` with `ker (M N) = im [E; F]`.
    pub mn: Matrix,
    /// `[X_+ - B U_-; Y_- - C X_- - D U_-]`.
    pub stacked: Matrix,
    /// `X_+`, kept for the simplified controllability pencils.
    pub x_plus: Matrix,
    pub pattern: NoisePattern,
}

impl Reduction {
    pub fn p(&self) -> &Matrix {
        &self.triple.p
    }

    pub fn q(&self) -> &Matrix {
        &self.triple.q
    }

    pub fn r(&self) -> &Matrix {
        &self.triple.r
    }

    /// Build from a caller-supplied annihilator using the general formula
    /// `M = (M N)[:, ..n]`, `R = (M N) [X_+ - B U_-; Y_- - C X_- - D U_-]`.
    pub fn from_annihilator(
        sys: &SystemStructure,
        data: &DataSet,
        mn: Matrix,
        tol: &Tolerances,
    ) -> Result<Self> {
        data.check_against(sys)?;
        let n = sys.n();
        if mn.ncols() != n + sys.p() {
            return Err(Error::Dimension(format!(
                "annihilator has {} columns, expected n + p = {}",
                mn.ncols(),
                n + sys.p()
            )));
        }
        let ker = Subspace::kernel(&mn, tol);
        let im_noise = Subspace::image(&sys.noise_stack(), tol);
        if !ker.same_as(&im_noise) {
            return Err(Error::Dimension(
                "supplied (M N) does not have kernel im [E; F]".into(),
            ));
        }
        let stacked = stacked_residual(sys, data);
        let triple = Triple {
            p: data.x_minus(),
            q: mn.columns(0, n).into_owned(),
            r: &mn * &stacked,
        };
        Ok(Self {
            triple,
            mn,
            stacked,
            x_plus: data.x_plus(),
            pattern: NoisePattern::detect(sys),
        })
    }

    /// The general-formula pair `(M, R)` derived from `(M N)`, regardless of pattern.
    pub fn general_pair(&self) -> (Matrix, Matrix) {
        let n = self.triple.n();
        (self.mn.columns(0, n).into_owned(), &self.mn * &self.stacked)
    }
}

fn stacked_residual(sys: &SystemStructure, data: &DataSet) -> Matrix {
    let xm = data.x_minus();
    let state = data.x_plus() - &sys.b * &data.u_minus;
    let output = &data.y_minus - &sys.c * &xm - &sys.d * &data.u_minus;
    vstack(&[&state, &output])
}

/// Derive `(P, Q, R)` and `(M N)` from structure and data.
pub fn build_reduction(
    sys: &SystemStructure,
    data: &DataSet,
    tol: &Tolerances,
) -> Result<Reduction> {
    data.check_against(sys)?;
    let n = sys.n();
    let pattern = NoisePattern::detect(sys);
    let mn = annihilator_of_image(&sys.noise_stack(), tol);
    let stacked = stacked_residual(sys, data);
    let state_residual = stacked.rows(0, n).into_owned();
    let (q, r) = match pattern {
        NoisePattern::General => (mn.columns(0, n).into_owned(), &mn * &stacked),
        NoisePattern::ProcessOnly => {
            let m = annihilator_of_image(&sys.e, tol);
            let r = &m * &state_residual;
            (m, r)
        }
        NoisePattern::IndependentSplit { process_cols } => {
            let e1 = sys.e.columns(0, process_cols).into_owned();
            let m = annihilator_of_image(&e1, tol);
            let r = &m * &state_residual;
            (m, r)
        }
        NoisePattern::Noiseless => (Matrix::identity(n, n), state_residual),
    };
    Ok(Reduction {
        triple: Triple {
            p: data.x_minus(),
            q,
            r,
        },
        mn,
        stacked,
        x_plus: data.x_plus(),
        pattern,
    })
}

/// Whether some `A` explains the data, i.e. `A_dat` is nonempty.
///
/// Decided on the general pair from `(M N)` so that output-equation
/// constraints are honoured for every noise pattern.
pub fn consistency_check(red: &Reduction, tol: &Tolerances) -> bool {
    let (q, r) = red.general_pair();
    Triple {
        p: red.triple.p.clone(),
        q,
        r,
    }
    .is_consistent(tol)
}

/// Simulate `x(t+1) = A x + B u + E w`, `y = C x + D u + F w` for `t = 0..T-1`.
pub fn simulate(
    a: &Matrix,
    sys: &SystemStructure,
    x0: &Matrix,
    u: &Matrix,
    w: &Matrix,
) -> Result<DataSet> {
    let n = sys.n();
    let t = u.ncols();
    if a.shape() != (n, n) || x0.shape() != (n, 1) {
        return Err(Error::Dimension("A must be n x n and x0 n x 1".into()));
    }
    if u.nrows() != sys.m() || w.shape() != (sys.noise_dim(), t) {
        return Err(Error::Dimension(format!(
            "inputs must be {}x{t} and noise {}x{t}",
            sys.m(),
            sys.noise_dim()
        )));
    }
    let mut x = Matrix::zeros(n, t + 1);
    let mut y = Matrix::zeros(sys.p(), t);
    x.set_column(0, &x0.column(0));
    for k in 0..t {
        let xk = x.column(k).into_owned();
        let uk = u.column(k).into_owned();
        let wk = w.column(k).into_owned();
        let next = a * &xk + &sys.b * &uk + &sys.e * &wk;
        let out = &sys.c * &xk + &sys.d * &uk + &sys.f * &wk;
        x.set_column(k + 1, &next);
        y.set_column(k, &out);
    }
    DataSet::new(u.clone(), x, y)
}

// ---------------------------------------------------------------------------
// Problem files

/// A matrix as given in a problem file: nested rows, or a CSV reference.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MatrixSpec {
    Rows(Vec<Vec<f64>>),
    Csv { csv: String },
}

impl MatrixSpec {
    pub fn from_matrix(a: &Matrix) -> Self {
        MatrixSpec::Rows(a.row_iter().map(|r| r.iter().copied().collect()).collect())
    }

    fn resolve(&self, field: &str, base: Option<&Path>) -> Result<RawMatrix> {
        let rows = match self {
            MatrixSpec::Rows(rows) => rows.clone(),
            MatrixSpec::Csv { csv } => read_csv(field, csv, base)?,
        };
        let width = rows.first().map(Vec::len);
        if let Some(w) = width {
            if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != w) {
                return Err(Error::Schema(format!(
                    "{field}: row {i} has {} entries, row 0 has {w}",
                    r.len()
                )));
            }
        }
        Ok(RawMatrix {
            field: field.to_string(),
            rows,
        })
    }
}

fn read_csv(field: &str, path: &str, base: Option<&Path>) -> Result<Vec<Vec<f64>>> {
    let full = match base {
        Some(dir) if Path::new(path).is_relative() => dir.join(path),
        _ => Path::new(path).to_path_buf(),
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(&full)
        .map_err(|e| Error::Schema(format!("{field}: cannot read {}: {e}", full.display())))?;
    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| Error::Schema(format!("{field}: csv row {i}: {e}")))?;
        let row = rec
            .iter()
            .map(|s| {
                s.parse::<f64>()
                    .map_err(|e| Error::Schema(format!("{field}: csv row {i}: '{s}': {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    Ok(rows)
}

struct RawMatrix {
    field: String,
    rows: Vec<Vec<f64>>,
}

impl RawMatrix {
    /// Convert to a matrix of the expected shape. Matrices with no entries are
    /// accepted as zero-sized blocks of that shape.
    fn into_shape(self, rows: usize, cols: usize) -> Result<Matrix> {
        let r = self.rows.len();
        let c = self.rows.first().map_or(0, Vec::len);
        if r * c == 0 && rows * cols == 0 {
            return Ok(Matrix::zeros(rows, cols));
        }
        if (r, c) != (rows, cols) {
            return Err(Error::Dimension(format!(
                "{} is {r}x{c}, expected {rows}x{cols}",
                self.field
            )));
        }
        let m = Matrix::from_fn(r, c, |i, j| self.rows[i][j]);
        check_finite(&self.field, &m)?;
        Ok(m)
    }

    fn nrows(&self) -> usize {
        self.rows.len()
    }

    fn ncols(&self) -> usize {
        self.rows.first().map_or(0, Vec::len)
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToleranceSpec {
    pub rank_rtol: Option<f64>,
    pub boundary_delta: Option<f64>,
    pub containment_atol: Option<f64>,
}

/// JSON problem document.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[allow(non_snake_case)]
pub struct ProblemFile {
    pub B: MatrixSpec,
    pub C: MatrixSpec,
    pub D: MatrixSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub E: Option<MatrixSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub F: Option<MatrixSpec>,
    pub U: MatrixSpec,
    pub X: MatrixSpec,
    pub Y: MatrixSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerances: Option<ToleranceSpec>,
}

impl ProblemFile {
    pub fn from_parts(sys: &SystemStructure, data: &DataSet) -> Self {
        Self {
            B: MatrixSpec::from_matrix(&sys.b),
            C: MatrixSpec::from_matrix(&sys.c),
            D: MatrixSpec::from_matrix(&sys.d),
            E: Some(MatrixSpec::from_matrix(&sys.e)),
            F: Some(MatrixSpec::from_matrix(&sys.f)),
            U: MatrixSpec::from_matrix(&data.u_minus),
            X: MatrixSpec::from_matrix(&data.x),
            Y: MatrixSpec::from_matrix(&data.y_minus),
            tolerances: None,
        }
    }

    /// Validate and convert. `base` resolves relative CSV paths.
    pub fn resolve(&self, base: Option<&Path>) -> Result<(SystemStructure, DataSet, Tolerances)> {
        let x = self.X.resolve("X", base)?;
        let u = self.U.resolve("U", base)?;
        let y = self.Y.resolve("Y", base)?;
        let n = x.nrows();
        if x.ncols() == 0 {
            return Err(Error::Dimension("X must have T+1 >= 2 columns".into()));
        }
        let t = x.ncols() - 1;
        let b = self.B.resolve("B", base)?;
        let c = self.C.resolve("C", base)?;
        // m and p come from U and Y unless those are empty.
        let m = if u.nrows() * u.ncols() > 0 {
            u.nrows()
        } else {
            b.ncols()
        };
        let p = if y.nrows() * y.ncols() > 0 {
            y.nrows()
        } else {
            c.nrows()
        };
        let e = self.E.as_ref().map(|s| s.resolve("E", base)).transpose()?;
        let f = self.F.as_ref().map(|s| s.resolve("F", base)).transpose()?;
        let rw = e
            .as_ref()
            .filter(|e| e.nrows() * e.ncols() > 0)
            .map(RawMatrix::ncols)
            .or_else(|| {
                f.as_ref()
                    .filter(|f| f.nrows() * f.ncols() > 0)
                    .map(RawMatrix::ncols)
            })
            .unwrap_or(0);
        let take = |raw: Option<RawMatrix>, field: &str, r, c| match raw {
            Some(raw) => raw.into_shape(r, c),
            None => RawMatrix {
                field: field.into(),
                rows: Vec::new(),
            }
            .into_shape(r, c),
        };
        let sys = SystemStructure::new(
            b.into_shape(n, m)?,
            c.into_shape(p, n)?,
            self.D.resolve("D", base)?.into_shape(p, m)?,
            take(e, "E", n, rw)?,
            take(f, "F", p, rw)?,
        )?;
        if t == 0 {
            return Err(Error::Dimension("X must have T+1 >= 2 columns".into()));
        }
        let data = DataSet::new(
            u.into_shape(m, t)?,
            x.into_shape(n, t + 1)?,
            y.into_shape(p, t)?,
        )?;
        let mut tol = Tolerances::default();
        if let Some(spec) = &self.tolerances {
            if let Some(v) = spec.rank_rtol {
                tol.rank_rtol = v;
            }
            if let Some(v) = spec.boundary_delta {
                tol.boundary_delta = v;
            }
            if let Some(v) = spec.containment_atol {
                tol.containment_atol = v;
            }
        }
        tol.validate()?;
        Ok((sys, data, tol))
    }
}

/// Parse a problem document from JSON text.
pub fn parse_problem(
    text: &str,
    base: Option<&Path>,
) -> Result<(SystemStructure, DataSet, Tolerances)> {
    let file: ProblemFile = serde_json::from_str(text).map_err(|e| Error::Schema(e.to_string()))?;
    file.resolve(base)
}

/// Read and validate a problem file.
pub fn load_problem(path: &Path) -> Result<(SystemStructure, DataSet, Tolerances)> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_problem(&text, path.parent())
}
