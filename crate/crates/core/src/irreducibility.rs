//! Bounded search for equivariant finite families of subspaces.
//!
//! A cocycle fails to be strongly irreducible when there are finite sets
//! `F_a` of `l`-dimensional subspaces, one per symbol, with
//! `A(a, b) F_a = F_b` on every allowed edge. Candidates are seeded from real
//! invariant subspaces of products along short cycles, then closed under the
//! edge maps in both directions. Finding a closed family is a proof (up to
//! the numerical tolerance); not finding one only certifies the bounds used.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cocycle::{binomial, cocycle_product, exterior_power, Cocycle, Mat, MAX_EXTERIOR_DIM};
use crate::symbolic::{Word, DEFAULT_WORD_CAP};
use crate::{Error, Result};

pub const DEFAULT_TOL: f64 = 1e-8;
/// Upper limit on the number of seeds tried per search.
pub const SEED_CAP: usize = 4096;

const EIGEN_CLUSTER: f64 = 1e-8;
const NULL_THRESHOLD: f64 = 1e-7;
const RANK_THRESHOLD: f64 = 1e-10;

/// An `l`-dimensional subspace given by an orthonormal basis (columns).
#[derive(Debug, Clone, PartialEq)]
pub struct Subspace {
    basis: Mat,
}

impl Subspace {
    /// Orthonormalizes the column span; `None` if its rank differs from `rank`.
    pub fn from_span(m: &Mat, rank: usize) -> Option<Self> {
        if m.ncols() == 0 || m.iter().any(|x| !x.is_finite()) {
            return None;
        }
        let svd = m.clone().svd(true, false);
        let u = svd.u.as_ref()?;
        let smax = svd.singular_values.max();
        let mut idx: Vec<usize> = (0..svd.singular_values.len()).collect();
        idx.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
        let keep: Vec<usize> = idx.into_iter().filter(|&i| svd.singular_values[i] > RANK_THRESHOLD * smax).collect();
        if keep.len() != rank {
            return None;
        }
        Some(Subspace { basis: Mat::from_fn(m.nrows(), rank, |r, c| u[(r, keep[c])]) })
    }

    pub fn basis(&self) -> &Mat {
        &self.basis
    }

    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    /// `sin` of the largest principal angle, `‖(I − UUᵀ)V‖₂`.
    pub fn distance(&self, other: &Subspace) -> f64 {
        let u = &self.basis;
        let v = &other.basis;
        let resid = v - u * (u.transpose() * v);
        resid.singular_values().max().min(1.0)
    }

    pub fn image(&self, g: &Mat) -> Option<Subspace> {
        Subspace::from_span(&(g * &self.basis), self.dim())
    }
}

impl Serialize for Subspace {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let cols: Vec<Vec<f64>> = self.basis.column_iter().map(|c| c.iter().copied().collect()).collect();
        cols.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Subspace {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let cols: Vec<Vec<f64>> = Vec::deserialize(d)?;
        let rows = cols.first().map_or(0, Vec::len);
        if cols.iter().any(|c| c.len() != rows) {
            return Err(serde::de::Error::custom("basis vectors differ in length"));
        }
        let m = Mat::from_fn(rows, cols.len(), |r, c| cols[c][r]);
        Subspace::from_span(&m, cols.len()).ok_or_else(|| serde::de::Error::custom("basis vectors are dependent"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubspaceFamilyAssignment {
    pub l: usize,
    /// `sets[a]` is the finite family attached to symbol `a`.
    pub sets: Vec<Vec<Subspace>>,
    pub m: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    WitnessFound,
    CertifiedUpToBounds,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchBounds {
    pub l: usize,
    pub m_max: usize,
    pub cycle_length_bound: usize,
    pub tol: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SearchLog {
    pub cycles: usize,
    pub scalar_products_skipped: usize,
    pub eigen_failures: usize,
    pub seeds: usize,
    pub seed_cap_hit: bool,
    pub closures_tried: usize,
    pub closures_overflowed: usize,
    pub closures_unverified: usize,
    /// Index into the seed list of the seed that produced the witness.
    pub winning_seed: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IrreducibilityReport {
    pub verdict: Verdict,
    pub witness: Option<SubspaceFamilyAssignment>,
    pub bounds: SearchBounds,
    pub certificate_log: SearchLog,
}

fn contains(set: &[Subspace], v: &Subspace, tol: f64) -> Option<usize> {
    set.iter().position(|w| w.distance(v) <= tol)
}

/// Checks `A(a, b) F_a = F_b` as sets, with the edge map a bijection,
/// on every allowed edge.
pub fn verify_family(cocycle: &Cocycle, family: &SubspaceFamilyAssignment, tol: f64) -> bool {
    let q = cocycle.shift().q();
    if family.sets.len() != q || family.sets.iter().any(|s| s.is_empty() || s.len() > family.m) {
        return false;
    }
    let d = cocycle.dim();
    if family.sets.iter().flatten().any(|v| v.dim() != family.l || v.basis.nrows() != d) {
        return false;
    }
    cocycle.edge_matrices().all(|((a, b), g)| {
        let (src, dst) = (&family.sets[a], &family.sets[b]);
        if src.len() != dst.len() {
            return false;
        }
        let mut hit = vec![false; dst.len()];
        for v in src {
            let Some(img) = v.image(g) else { return false };
            match contains(dst, &img, tol) {
                Some(i) if !hit[i] => hit[i] = true,
                _ => return false,
            }
        }
        true
    })
}

enum Closure {
    Closed(Vec<Vec<Subspace>>),
    Overflow,
    Degenerate,
}

/// Forward and backward closure of a single seed under the edge maps.
fn close(cocycle: &Cocycle, inverses: &[Option<Mat>], symbol: usize, seed: Subspace, m_max: usize, tol: f64) -> Closure {
    let q = cocycle.shift().q();
    let mut sets: Vec<Vec<Subspace>> = vec![Vec::new(); q];
    sets[symbol].push(seed);
    let mut queue = vec![(symbol, 0usize)];
    while let Some((a, i)) = queue.pop() {
        let v = sets[a][i].clone();
        let forward = (0..q).filter(|&b| cocycle.shift().allows(a, b)).map(|b| (b, cocycle.matrix(a, b)));
        let backward = (0..q)
            .filter(|&p| cocycle.shift().allows(p, a))
            .map(|p| (p, inverses[p * q + a].as_ref().expect("inverse on allowed edge")));
        for (c, g) in forward.chain(backward).collect::<Vec<_>>() {
            let Some(img) = v.image(g) else { return Closure::Degenerate };
            if contains(&sets[c], &img, tol).is_none() {
                if sets[c].len() == m_max {
                    return Closure::Overflow;
                }
                sets[c].push(img);
                queue.push((c, sets[c].len() - 1));
            }
        }
    }
    Closure::Closed(sets)
}

/// Real invariant subspaces of `p` of dimension `l`. Returns `None` when the
/// eigen-solve fails.
fn invariant_subspaces(p: &Mat, l: usize) -> Option<Vec<Subspace>> {
    let d = p.nrows();
    let eig = p.clone().try_schur(f64::EPSILON, 10_000)?.complex_eigenvalues();
    let mut reps: Vec<nalgebra::Complex<f64>> = Vec::new();
    for z in eig.iter() {
        if z.im < -EIGEN_CLUSTER {
            continue;
        }
        if !reps.iter().any(|r| (r - z).norm() < EIGEN_CLUSTER.sqrt()) {
            reps.push(*z);
        }
    }
    let id = Mat::identity(d, d);
    // atoms: real eigenspaces, axis projections inside multi-dimensional
    // eigenspaces, and real planes of complex pairs
    let mut atoms: Vec<Mat> = Vec::new();
    for z in reps {
        let op = if z.im.abs() <= EIGEN_CLUSTER {
            p - &id * z.re
        } else {
            let s = p - &id * z.re;
            &s * &s + &id * (z.im * z.im)
        };
        let svd = op.svd(false, true);
        let v_t = svd.v_t.as_ref()?;
        let sv = &svd.singular_values;
        let smin = sv.min();
        let null: Vec<usize> = (0..sv.len()).filter(|&i| sv[i] <= NULL_THRESHOLD.max(smin * (1.0 + 1e-12))).collect();
        let basis = Mat::from_fn(d, null.len(), |r, c| v_t[(null[c], r)]);
        if z.im.abs() <= EIGEN_CLUSTER && basis.ncols() > 1 {
            for i in 0..d {
                let proj = &basis * basis.row(i).transpose();
                if proj.norm() > 1e-6 {
                    atoms.push(Mat::from_column_slice(d, 1, proj.as_slice()));
                }
            }
        }
        atoms.push(basis);
    }
    let mut out: Vec<Subspace> = Vec::new();
    let mut push = |s: Subspace| {
        if !out.iter().any(|o| o.distance(&s) <= EIGEN_CLUSTER) {
            out.push(s);
        }
    };
    fn rec(atoms: &[Mat], start: usize, l: usize, chosen: &mut Vec<usize>, dim: usize, f: &mut dyn FnMut(&[usize])) {
        if dim == l {
            f(chosen);
            return;
        }
        for i in start..atoms.len() {
            if dim + atoms[i].ncols() <= l {
                chosen.push(i);
                rec(atoms, i + 1, l, chosen, dim + atoms[i].ncols(), f);
                chosen.pop();
            }
        }
    }
    let mut combos: Vec<Vec<usize>> = Vec::new();
    rec(&atoms, 0, l, &mut Vec::new(), 0, &mut |c| {
        if combos.len() < SEED_CAP {
            combos.push(c.to_vec());
        }
    });
    for c in combos {
        let cols: Vec<&Mat> = c.iter().map(|&i| &atoms[i]).collect();
        let total: usize = cols.iter().map(|m| m.ncols()).sum();
        let span = Mat::from_fn(d, total, |r, k| {
            let mut k = k;
            for m in &cols {
                if k < m.ncols() {
                    return m[(r, k)];
                }
                k -= m.ncols();
            }
            unreachable!()
        });
        if let Some(s) = Subspace::from_span(&span, l) {
            if p.iter().all(|x| x.is_finite()) && s.image(p).is_some_and(|img| img.distance(&s) <= 1e-6) {
                push(s);
            }
        }
    }
    Some(out)
}

fn is_scalar(p: &Mat) -> bool {
    let d = p.nrows();
    let c = p.trace() / d as f64;
    (p - Mat::identity(d, d) * c).norm() <= 1e-12 * p.norm()
}

pub fn find_invariant_family(
    cocycle: &Cocycle,
    l: usize,
    m_max: usize,
    cycle_length_bound: usize,
    tol: f64,
) -> Result<IrreducibilityReport> {
    let d = cocycle.dim();
    if l == 0 || l >= d {
        return Err(Error::InvalidArgument(format!("subspace dimension {l} outside 1..={}", d.saturating_sub(1))));
    }
    if m_max == 0 || cycle_length_bound == 0 || !(tol > 0.0) {
        return Err(Error::InvalidArgument("m_max, cycle_length_bound and tol must be positive".into()));
    }
    let bounds = SearchBounds { l, m_max, cycle_length_bound, tol };
    let mut log = SearchLog::default();
    let cycles = cocycle.shift().enumerate_cycles(cycle_length_bound, DEFAULT_WORD_CAP)?;
    log.cycles = cycles.len();

    let mut seeds: Vec<(usize, Subspace)> = Vec::new();
    'cycles: for cyc in &cycles {
        let base = cyc.first().expect("cycles are nonempty");
        let mut closed = cyc.0.clone();
        closed.push(base);
        let unit = cocycle_product(cocycle, &Word::new(closed))?.unit;
        let mut power = unit.clone();
        for k in 1..=m_max {
            if k > 1 {
                power = &unit * &power;
                power /= power.norm();
            }
            if is_scalar(&power) {
                log.scalar_products_skipped += 1;
                continue;
            }
            let Some(subs) = invariant_subspaces(&power, l) else {
                log.eigen_failures += 1;
                continue;
            };
            for s in subs {
                if !seeds.iter().any(|(b, t)| *b == base && t.distance(&s) <= tol) {
                    if seeds.len() == SEED_CAP {
                        log.seed_cap_hit = true;
                        break 'cycles;
                    }
                    seeds.push((base, s));
                }
            }
        }
    }
    log.seeds = seeds.len();

    let q = cocycle.shift().q();
    let mut inverses = vec![None; q * q];
    for ((a, b), g) in cocycle.edge_matrices() {
        inverses[a * q + b] = Some(g.clone().try_inverse().ok_or_else(|| {
            Error::NoConvergence { solver: "matrix inverse", detail: format!("edge ({a},{b})") }
        })?);
    }

    let outcomes: Vec<(usize, Closure)> = seeds
        .par_iter()
        .enumerate()
        .map(|(i, (base, s))| (i, close(cocycle, &inverses, *base, s.clone(), m_max, tol)))
        .collect();
    let mut witness = None;
    for (i, outcome) in outcomes {
        log.closures_tried += 1;
        match outcome {
            Closure::Closed(sets) => {
                let m = sets.iter().map(Vec::len).max().unwrap_or(0);
                let family = SubspaceFamilyAssignment { l, sets, m };
                if verify_family(cocycle, &family, tol) {
                    log.winning_seed = Some(i);
                    witness = Some(family);
                    break;
                }
                log.closures_unverified += 1;
            }
            Closure::Overflow => log.closures_overflowed += 1,
            Closure::Degenerate => log.closures_unverified += 1,
        }
    }
    let verdict = if witness.is_some() { Verdict::WitnessFound } else { Verdict::CertifiedUpToBounds };
    Ok(IrreducibilityReport { verdict, witness, bounds, certificate_log: log })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExteriorReport {
    pub j: usize,
    pub dim: usize,
    /// One report per `l` in `1..dim`; empty when `dim = 1`.
    pub reports: Vec<IrreducibilityReport>,
    pub verdict: Verdict,
}

/// Runs [`find_invariant_family`] over every `l` for each `Λʲ A`, `j = 1..=d`.
pub fn check_exterior_powers(
    cocycle: &Cocycle,
    m_max: usize,
    cycle_length_bound: usize,
    tol: f64,
) -> Result<Vec<ExteriorReport>> {
    let d = cocycle.dim();
    if let Some(j) = (1..=d).find(|&j| binomial(d, j) > MAX_EXTERIOR_DIM) {
        return Err(Error::InvalidArgument(format!(
            "exterior power {j} has dimension {} above {MAX_EXTERIOR_DIM}",
            binomial(d, j)
        )));
    }
    (1..=d)
        .map(|j| {
            let ext = exterior_power(cocycle, j)?;
            let dim = ext.dim();
            let reports = (1..dim)
                .map(|l| find_invariant_family(&ext, l, m_max, cycle_length_bound, tol))
                .collect::<Result<Vec<_>>>()?;
            let verdict = if reports.iter().any(|r| r.verdict == Verdict::WitnessFound) {
                Verdict::WitnessFound
            } else {
                Verdict::CertifiedUpToBounds
            };
            Ok(ExteriorReport { j, dim, reports, verdict })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::symbolic::ShiftSpace;

    fn diag(a: f64, b: f64) -> Mat {
        Mat::from_row_slice(2, 2, &[a, 0.0, 0.0, b])
    }

    fn swap() -> Mat {
        Mat::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0])
    }

    fn rotation(theta: f64) -> Mat {
        Mat::from_row_slice(2, 2, &[theta.cos(), -theta.sin(), theta.sin(), theta.cos()])
    }

    #[test]
    fn diagonal_axis_is_invariant() {
        let full = ShiftSpace::full(2).unwrap();
        let c = Cocycle::constant(&full, diag(2.0, 0.5)).unwrap();
        let r = find_invariant_family(&c, 1, 2, 3, DEFAULT_TOL).unwrap();
        assert_eq!(r.verdict, Verdict::WitnessFound);
        let w = r.witness.unwrap();
        assert_eq!(w.m, 1);
        assert!(verify_family(&c, &w, DEFAULT_TOL / 10.0));
    }

    #[test]
    fn irrational_rotation_has_no_finite_family() {
        let full = ShiftSpace::full(2).unwrap();
        let c = Cocycle::constant(&full, rotation(1.0)).unwrap();
        for (m, len) in [(2, 3), (4, 5), (8, 6)] {
            let r = find_invariant_family(&c, 1, m, len, DEFAULT_TOL).unwrap();
            assert_eq!(r.verdict, Verdict::CertifiedUpToBounds);
            assert!(r.witness.is_none());
        }
        // oracle: the orbit of a line never closes within m_max + 1 steps
        let g = rotation(1.0);
        let e1 = Subspace::from_span(&Mat::from_column_slice(2, 1, &[1.0, 0.0]), 1).unwrap();
        let mut v = e1.clone();
        for _ in 0..9 {
            v = v.image(&g).unwrap();
            assert!(v.distance(&e1) > 1e-3);
        }
    }

    #[test]
    fn swapped_axes_form_a_family() {
        let full = ShiftSpace::full(2).unwrap();
        let c = Cocycle::from_fn(&full, 2, |a, b| if (a, b) == (0, 1) { swap() } else { Mat::identity(2, 2) }).unwrap();
        let r = find_invariant_family(&c, 1, 2, 3, DEFAULT_TOL).unwrap();
        assert_eq!(r.verdict, Verdict::WitnessFound);
        assert!(verify_family(&c, r.witness.as_ref().unwrap(), DEFAULT_TOL / 10.0));
        let axis = |i| Subspace::from_span(&Mat::from_fn(2, 1, |r, _| if r == i { 1.0 } else { 0.0 }), 1).unwrap();
        let axes = SubspaceFamilyAssignment { l: 1, sets: vec![vec![axis(0), axis(1)], vec![axis(0), axis(1)]], m: 2 };
        assert!(verify_family(&c, &axes, DEFAULT_TOL / 10.0));
        let half = SubspaceFamilyAssignment { l: 1, sets: vec![vec![axis(0)], vec![axis(0)]], m: 1 };
        assert!(!verify_family(&c, &half, DEFAULT_TOL));
    }

    #[test]
    fn unequal_diagonals_with_swaps_keep_an_axis_family() {
        let full = ShiftSpace::full(2).unwrap();
        let c = Cocycle::from_fn(&full, 2, |a, b| match (a, b) {
            (0, 0) => diag(2.0, 1.0),
            (1, 1) => diag(1.0, 2.0),
            _ => swap(),
        })
        .unwrap();
        let r = find_invariant_family(&c, 1, 4, 6, DEFAULT_TOL).unwrap();
        assert_eq!(r.verdict, Verdict::WitnessFound);
        let w = r.witness.unwrap();
        assert_eq!(w.m, 1);
        assert!(verify_family(&c, &w, DEFAULT_TOL));
    }

    #[test]
    fn exterior_reports() {
        let full = ShiftSpace::full(2).unwrap();
        let scalar = Cocycle::constant(&full, Mat::from_element(1, 1, 2.0)).unwrap();
        let r = check_exterior_powers(&scalar, 2, 3, DEFAULT_TOL).unwrap();
        assert_eq!(r.len(), 1);
        assert!(r[0].reports.is_empty());
        assert_eq!(r[0].verdict, Verdict::CertifiedUpToBounds);
        let c = Cocycle::constant(&full, diag(3.0, 1.0)).unwrap();
        let r = check_exterior_powers(&c, 2, 3, DEFAULT_TOL).unwrap();
        assert_eq!(r[0].verdict, Verdict::WitnessFound);
    }

    #[test]
    fn rejects_bad_dimension() {
        let full = ShiftSpace::full(2).unwrap();
        let c = Cocycle::constant(&full, diag(3.0, 1.0)).unwrap();
        assert!(find_invariant_family(&c, 0, 2, 3, DEFAULT_TOL).is_err());
        assert!(find_invariant_family(&c, 2, 2, 3, DEFAULT_TOL).is_err());
    }
}
