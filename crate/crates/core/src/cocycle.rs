//! Edge-indexed linear cocycles and the linear algebra around their products.
//!
//! A [`Cocycle`] assigns an invertible d×d matrix `A(a, b)` to every allowed
//! edge. Along a word `x₀ x₁ … xₙ` the product is
//! `A⁽ⁿ⁾ = A(xₙ₋₁, xₙ) ⋯ A(x₀, x₁)`, kept as a [`ScaledMatrix`] so that long
//! products never overflow: the stored unit matrix has operator norm one and
//! the log of the norm accumulates separately.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector, Schur, SVD};
use serde::{Deserialize, Serialize};

use crate::gibbs::MarkovMeasure;
use crate::symbolic::{ShiftSpace, Word};
use crate::{Error, Result};

pub type Mat = DMatrix<f64>;
pub type Vector = DVector<f64>;

pub const MAX_DIM: usize = 16;
pub const MAX_EXTERIOR_DIM: usize = 64;
/// Relative gap `(a₁ − a₂)/a₁` below which the top singular direction is
/// treated as non-unique.
pub const DEGENERATE_GAP: f64 = 1e-8;

const SVD_MAX_ITER: usize = 10_000;
const SCHUR_MAX_ITER: usize = 10_000;

/// Largest singular value.
pub fn operator_norm(m: &Mat) -> f64 {
    match m.shape() {
        (1, 1) => m[(0, 0)].abs(),
        (2, 2) => {
            let (a, b, c, d) = (m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)]);
            let s = a * a + b * b + c * c + d * d;
            // S² − 4 det², factored so it never goes negative
            let disc = ((a - d).powi(2) + (b + c).powi(2)) * ((a + d).powi(2) + (b - c).powi(2));
            ((s + disc.sqrt()) / 2.0).sqrt()
        }
        _ => m.singular_values().max(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScaledMatrix {
    pub unit: Mat,
    pub log_scale: f64,
}

impl ScaledMatrix {
    pub fn identity(d: usize) -> Self {
        ScaledMatrix { unit: Mat::identity(d, d), log_scale: 0.0 }
    }

    pub fn from_matrix(m: Mat) -> Result<Self> {
        let mut s = ScaledMatrix { unit: m, log_scale: 0.0 };
        s.renormalize()?;
        Ok(s)
    }

    pub fn dim(&self) -> usize {
        self.unit.nrows()
    }

    fn renormalize(&mut self) -> Result<()> {
        let norm = operator_norm(&self.unit);
        if !(norm > 0.0 && norm.is_finite()) {
            return Err(Error::NonFinite("scaled matrix product".into()));
        }
        self.unit /= norm;
        self.log_scale += norm.ln();
        Ok(())
    }

    /// `self ← g · self`.
    pub fn left_mul(&mut self, g: &Mat) -> Result<()> {
        self.unit = g * &self.unit;
        self.renormalize()
    }

    /// `self · rhs`.
    pub fn compose(&self, rhs: &ScaledMatrix) -> Result<ScaledMatrix> {
        let mut out = ScaledMatrix { unit: &self.unit * &rhs.unit, log_scale: self.log_scale + rhs.log_scale };
        out.renormalize()?;
        Ok(out)
    }

    pub fn transpose(&self) -> ScaledMatrix {
        ScaledMatrix { unit: self.unit.transpose(), log_scale: self.log_scale }
    }

    /// `e^ℓ · unit`; overflows for long products.
    pub fn to_matrix(&self) -> Mat {
        &self.unit * self.log_scale.exp()
    }

    /// `log‖self · v‖` for a unit vector `v`.
    pub fn log_norm_of(&self, v: &Vector) -> f64 {
        self.log_scale + (&self.unit * v).norm().ln()
    }
}

/// A running vector product `A⁽ⁿ⁾v` stored as a unit vector and a log norm.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaledVector {
    pub unit: Vector,
    pub log_norm: f64,
}

impl ScaledVector {
    pub fn new(v: &Vector) -> Result<Self> {
        let n = v.norm();
        if !(n > 0.0 && n.is_finite()) {
            return Err(Error::InvalidArgument("vector must be nonzero and finite".into()));
        }
        Ok(ScaledVector { unit: v / n, log_norm: n.ln() })
    }

    pub fn left_mul(&mut self, g: &Mat) -> Result<()> {
        let w = g * &self.unit;
        let n = w.norm();
        if !(n > 0.0 && n.is_finite()) {
            return Err(Error::NonFinite("scaled vector product".into()));
        }
        self.unit = w / n;
        self.log_norm += n.ln();
        Ok(())
    }
}

/// A point of real projective space, represented by a unit vector whose
/// first non-negligible coordinate is positive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ProjectivePoint(Vec<f64>);

impl ProjectivePoint {
    const SIGN_EPS: f64 = 1e-12;

    pub fn new(v: &[f64]) -> Result<Self> {
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if !(norm > 0.0 && norm.is_finite()) {
            return Err(Error::InvalidArgument("projective point needs a nonzero finite vector".into()));
        }
        let mut unit: Vec<f64> = v.iter().map(|x| x / norm).collect();
        if let Some(&lead) = unit.iter().find(|x| x.abs() > Self::SIGN_EPS) {
            if lead < 0.0 {
                unit.iter_mut().for_each(|x| *x = -*x);
            }
        }
        Ok(ProjectivePoint(unit))
    }

    pub fn from_vector(v: &Vector) -> Result<Self> {
        Self::new(v.as_slice())
    }

    /// The `i`-th standard basis line in dimension `d`.
    pub fn axis(d: usize, i: usize) -> Self {
        let mut v = vec![0.0; d];
        v[i] = 1.0;
        ProjectivePoint(v)
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn to_vector(&self) -> Vector {
        Vector::from_column_slice(&self.0)
    }

    pub fn dot(&self, other: &ProjectivePoint) -> f64 {
        self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum()
    }
}

/// Gap metric `‖v∧w‖/(‖v‖‖w‖) = |sin ∠(v, w)|`, from the wedge coordinates so
/// that nearby points keep full relative precision.
pub fn gap_distance(p: &ProjectivePoint, r: &ProjectivePoint) -> f64 {
    let (v, w) = (p.coords(), r.coords());
    let mut wedge = 0.0;
    for i in 0..v.len() {
        for j in i + 1..v.len() {
            let m = v[i] * w[j] - v[j] * w[i];
            wedge += m * m;
        }
    }
    wedge.sqrt().min(1.0)
}

/// Gap distance from `p` to the projective hyperplane `normal⊥`, which is `|⟨p, normal⟩|`.
pub fn point_to_hyperplane_distance(p: &ProjectivePoint, normal: &ProjectivePoint) -> f64 {
    p.dot(normal).abs().min(1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SingularData {
    /// `log a₁ ≥ … ≥ log a_d` of the represented matrix.
    pub log_singular_values: Vec<f64>,
    /// Direction of maximum growth `u(g)`, the first left singular direction.
    pub u: ProjectivePoint,
    /// Unit normal of the hyperplane of least growth `s(g)`, i.e. `u(g*)`.
    pub s_normal: ProjectivePoint,
    pub degenerate_top: bool,
}

impl SingularData {
    /// `a₂/a₁`, zero in dimension one.
    pub fn gap_ratio(&self) -> f64 {
        match self.log_singular_values.as_slice() {
            [a1, a2, ..] => (a2 - a1).exp(),
            _ => 0.0,
        }
    }

    /// `log‖g‖`.
    pub fn log_norm(&self) -> f64 {
        self.log_singular_values[0]
    }

    /// Distance from `u(g)` to `s(g)`.
    pub fn u_s_distance(&self) -> f64 {
        point_to_hyperplane_distance(&self.u, &self.s_normal)
    }
}

fn svd(m: &Mat) -> Result<SVD<f64, nalgebra::Dyn, nalgebra::Dyn>> {
    SVD::try_new(m.clone(), true, true, f64::EPSILON, SVD_MAX_ITER)
        .ok_or_else(|| Error::NoConvergence { solver: "SVD", detail: format!("{}x{} matrix", m.nrows(), m.ncols()) })
}

pub fn singular_data(m: &ScaledMatrix) -> Result<SingularData> {
    if m.unit.iter().any(|x| !x.is_finite()) || !m.log_scale.is_finite() {
        return Err(Error::NonFinite("singular data input".into()));
    }
    let dec = svd(&m.unit)?;
    let u_mat = dec.u.as_ref().expect("left singular vectors requested");
    let v_t = dec.v_t.as_ref().expect("right singular vectors requested");
    let sv = &dec.singular_values;
    let log_singular_values: Vec<f64> = sv.iter().map(|s| m.log_scale + s.ln()).collect();
    let degenerate_top = sv.len() > 1 && (sv[0] - sv[1]) < DEGENERATE_GAP * sv[0];
    let (u, s_normal) = if degenerate_top {
        (u_mat.column(0).into_owned(), v_t.row(0).transpose())
    } else {
        // one power step: the SVD's left vectors can lose ~1e-8 on nearly
        // rank-deficient inputs, and this contracts errors by a₂/a₁
        let u = &m.unit * v_t.row(0).transpose();
        let s = m.unit.transpose() * &u;
        (u, s)
    };
    Ok(SingularData {
        log_singular_values,
        u: ProjectivePoint::from_vector(&u)?,
        s_normal: ProjectivePoint::from_vector(&s_normal)?,
        degenerate_top,
    })
}

/// Spectral radius of a small dense matrix.
pub fn spectral_radius(m: &Mat) -> Result<f64> {
    match m.shape() {
        (1, 1) => Ok(m[(0, 0)].abs()),
        (2, 2) => {
            // closed form; keeps full relative precision when ρ ≪ ‖m‖
            let (a, b, c, d) = (m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)]);
            let t = a + d;
            let det = a * d - b * c;
            let disc = (a - d) * (a - d) + 4.0 * b * c;
            if disc >= 0.0 {
                Ok((t.abs() + disc.sqrt()) / 2.0)
            } else {
                Ok(det.abs().sqrt())
            }
        }
        _ => {
            let schur = Schur::try_new(m.clone(), f64::EPSILON, SCHUR_MAX_ITER).ok_or_else(|| Error::NoConvergence {
                solver: "Schur eigen-solver",
                detail: format!("{}x{} matrix", m.nrows(), m.ncols()),
            })?;
            Ok(schur.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max))
        }
    }
}

/// `ℓ + log ρ(unit)`, using `log ρ(e^ℓ B) = ℓ + log ρ(B)`.
pub fn log_spectral_radius(m: &ScaledMatrix) -> Result<f64> {
    if m.unit.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("spectral radius input".into()));
    }
    Ok(m.log_scale + spectral_radius(&m.unit)?.ln())
}

/// Lexicographically ordered `j`-subsets of `0..d`.
pub fn index_subsets(d: usize, j: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, d: usize, j: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == j {
            out.push(cur.clone());
            return;
        }
        for i in start..d {
            if d - i < j - cur.len() {
                break;
            }
            cur.push(i);
            rec(i + 1, d, j, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, d, j, &mut Vec::with_capacity(j), &mut out);
    out
}

pub fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1usize, |acc, i| acc * (n - i) / (i + 1))
}

/// `Λʲ g` in the lexicographic basis `e_I = e_{i₁} ∧ … ∧ e_{iⱼ}`: entry
/// `(I, J)` is the minor `det g[I, J]`.
pub fn exterior_matrix(g: &Mat, j: usize) -> Result<Mat> {
    let d = g.nrows();
    if j == 0 || j > d {
        return Err(Error::InvalidArgument(format!("exterior degree {j} outside 1..={d}")));
    }
    let dim = binomial(d, j);
    if dim > MAX_EXTERIOR_DIM {
        return Err(Error::InvalidArgument(format!("exterior dimension {dim} exceeds {MAX_EXTERIOR_DIM}")));
    }
    let subsets = index_subsets(d, j);
    Ok(Mat::from_fn(dim, dim, |r, c| {
        let (rows, cols) = (&subsets[r], &subsets[c]);
        Mat::from_fn(j, j, |i, k| g[(rows[i], cols[k])]).determinant()
    }))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cocycle {
    shift: ShiftSpace,
    d: usize,
    /// Row-major over `(a, b)`; `Some` exactly on allowed edges.
    matrices: Vec<Option<Mat>>,
}

fn check_invertible(g: &Mat, edge: (usize, usize)) -> Result<()> {
    if g.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidCocycle(format!("matrix on edge {edge:?} has non-finite entries")));
    }
    let det = g.determinant();
    let sv = g.singular_values();
    let cond = sv.max() / sv.min();
    if !(det.abs() > 1e-300) || !cond.is_finite() {
        return Err(Error::InvalidCocycle(format!("matrix on edge {edge:?} is not invertible (det {det:e})")));
    }
    Ok(())
}

impl Cocycle {
    pub fn new(shift: &ShiftSpace, d: usize, matrices: BTreeMap<(usize, usize), Mat>) -> Result<Self> {
        Self::build(shift, d, matrices, MAX_DIM)
    }

    fn build(shift: &ShiftSpace, d: usize, mut matrices: BTreeMap<(usize, usize), Mat>, max_dim: usize) -> Result<Self> {
        if d == 0 || d > max_dim {
            return Err(Error::InvalidCocycle(format!("dimension {d} outside 1..={max_dim}")));
        }
        let q = shift.q();
        if let Some(&(a, b)) = matrices.keys().find(|&&(a, b)| !shift.allows(a, b)) {
            return Err(Error::InvalidCocycle(format!("edge ({a},{b}) is not allowed by the shift")));
        }
        let mut slots = vec![None; q * q];
        for (a, b) in shift.edges() {
            let g = matrices
                .remove(&(a, b))
                .ok_or_else(|| Error::InvalidCocycle(format!("no matrix for allowed edge ({a},{b})")))?;
            if g.shape() != (d, d) {
                return Err(Error::InvalidCocycle(format!(
                    "matrix on edge ({a},{b}) is {}x{}, expected {d}x{d}",
                    g.nrows(),
                    g.ncols()
                )));
            }
            check_invertible(&g, (a, b))?;
            slots[a * q + b] = Some(g);
        }
        Ok(Cocycle { shift: shift.clone(), d, matrices: slots })
    }

    /// Same matrix on every edge.
    pub fn constant(shift: &ShiftSpace, g: Mat) -> Result<Self> {
        let d = g.nrows();
        Self::new(shift, d, shift.edges().map(|e| (e, g.clone())).collect())
    }

    pub fn from_fn(shift: &ShiftSpace, d: usize, f: impl Fn(usize, usize) -> Mat) -> Result<Self> {
        Self::new(shift, d, shift.edges().map(|(a, b)| ((a, b), f(a, b))).collect())
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn shift(&self) -> &ShiftSpace {
        &self.shift
    }

    /// `A(a, b)`; panics on a forbidden edge.
    pub fn matrix(&self, a: usize, b: usize) -> &Mat {
        self.matrices[a * self.shift.q() + b].as_ref().expect("edge must be allowed by the shift")
    }

    pub fn get(&self, a: usize, b: usize) -> Option<&Mat> {
        let q = self.shift.q();
        if a >= q || b >= q {
            return None;
        }
        self.matrices[a * q + b].as_ref()
    }

    pub fn edge_matrices(&self) -> impl Iterator<Item = ((usize, usize), &Mat)> + '_ {
        self.shift.edges().map(move |(a, b)| ((a, b), self.matrix(a, b)))
    }

    /// Rejects measures that charge an edge the cocycle does not cover.
    pub fn check_measure(&self, measure: &MarkovMeasure) -> Result<()> {
        let q = self.shift.q();
        if measure.q() != q {
            return Err(Error::InvalidArgument(format!("measure has {} symbols, cocycle {q}", measure.q())));
        }
        for (a, row) in measure.transition.iter().enumerate() {
            for (b, &p) in row.iter().enumerate() {
                if p > 0.0 && self.get(a, b).is_none() {
                    return Err(Error::InvalidArgument(format!("measure charges edge ({a},{b}) outside the shift")));
                }
            }
        }
        Ok(())
    }

    /// `log|det A(a, b)|` on each allowed edge.
    pub fn log_abs_det(&self, a: usize, b: usize) -> f64 {
        self.matrix(a, b).determinant().abs().ln()
    }

    /// Product along the first `n` edges of the word, multiplying on the left
    /// after each step. Use [`cocycle_product`] for the whole word.
    pub fn product_prefix(&self, word: &Word, n: usize) -> Result<ScaledMatrix> {
        let mut acc = ScaledMatrix::identity(self.d);
        for (a, b) in word.edges().take(n) {
            acc.left_mul(self.matrix(a, b))?;
        }
        Ok(acc)
    }
}

fn check_word(cocycle: &Cocycle, word: &Word) -> Result<()> {
    if word.is_empty() {
        return Err(Error::InvalidArgument("cocycle product needs a word with at least one symbol".into()));
    }
    cocycle.shift().check_admissible(word)
}

/// `A⁽ⁿ⁾ = A(wₙ₋₁, wₙ) ⋯ A(w₀, w₁)` for a word of `n + 1` symbols.
pub fn cocycle_product(cocycle: &Cocycle, word: &Word) -> Result<ScaledMatrix> {
    check_word(cocycle, word)?;
    cocycle.product_prefix(word, word.edge_count())
}

/// `A^[n] = (A⁽ⁿ⁾)*`, the right-increment product.
pub fn right_increment_product(cocycle: &Cocycle, word: &Word) -> Result<ScaledMatrix> {
    Ok(cocycle_product(cocycle, word)?.transpose())
}

/// Edge-wise `Λʲ A`.
pub fn exterior_power(cocycle: &Cocycle, j: usize) -> Result<Cocycle> {
    let d = cocycle.dim();
    if j == 0 || j > d {
        return Err(Error::InvalidArgument(format!("exterior degree {j} outside 1..={d}")));
    }
    let dim = binomial(d, j);
    if dim > MAX_EXTERIOR_DIM {
        return Err(Error::InvalidArgument(format!("exterior dimension {dim} exceeds {MAX_EXTERIOR_DIM}")));
    }
    let mut matrices = BTreeMap::new();
    for ((a, b), g) in cocycle.edge_matrices() {
        matrices.insert((a, b), exterior_matrix(g, j)?);
    }
    Cocycle::build(cocycle.shift(), dim, matrices, MAX_EXTERIOR_DIM)
}

/// Row-major nested vectors to a matrix.
pub fn mat_from_rows(rows: &[Vec<f64>]) -> Mat {
    let n = rows.len();
    let m = rows.first().map_or(0, Vec::len);
    Mat::from_fn(n, m, |i, j| rows[i][j])
}

pub fn mat_to_rows(m: &Mat) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect()).collect()
}
