//! Equilibrium states of edge potentials.
//!
//! For a potential `φ(a, b)` depending on the first two coordinates the
//! equilibrium state is the stationary Markov chain obtained from the Perron
//! eigendata of the transfer matrix `M[a][b] = P[a][b]·exp φ(a, b)`:
//! with `M r = ρ r` and `l M = ρ l`,
//!
//! ```text
//! Q[a][b] = M[a][b] r[b] / (ρ r[a]),    π[a] ∝ l[a] r[a].
//! ```

use std::collections::BTreeMap;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::rng::{stream_rng, TrialRng};
use crate::stats::{linear_fit, Proportion};
use crate::symbolic::{ShiftSpace, Word};
use crate::{Error, Result};

const PERRON_TOL: f64 = 1e-14;
const PERRON_MAX_ITER: usize = 100_000;
const MEASURE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct EdgePotential {
    q: usize,
    values: BTreeMap<(usize, usize), f64>,
}

impl EdgePotential {
    /// Potential with prescribed values; must cover exactly the allowed edges.
    pub fn from_edges(shift: &ShiftSpace, values: BTreeMap<(usize, usize), f64>) -> Result<Self> {
        for (&(a, b), &v) in &values {
            if !shift.allows(a, b) {
                return Err(Error::InvalidPotential(format!("edge ({a},{b}) is not allowed by the shift")));
            }
            if !v.is_finite() {
                return Err(Error::InvalidPotential(format!("value on edge ({a},{b}) is not finite")));
            }
        }
        if let Some((a, b)) = shift.edges().find(|e| !values.contains_key(e)) {
            return Err(Error::InvalidPotential(format!("no value for allowed edge ({a},{b})")));
        }
        Ok(EdgePotential { q: shift.q(), values })
    }

    pub fn zero(shift: &ShiftSpace) -> Self {
        EdgePotential { q: shift.q(), values: shift.edges().map(|e| (e, 0.0)).collect() }
    }

    /// `φ(a, b) = log p_b`; on the full shift with `Σ p = 1` this yields the Bernoulli measure.
    pub fn bernoulli(shift: &ShiftSpace, p: &[f64]) -> Result<Self> {
        if p.len() != shift.q() {
            return Err(Error::InvalidPotential(format!(
                "bernoulli weights have length {}, expected {}",
                p.len(),
                shift.q()
            )));
        }
        if p.iter().any(|&x| !(x > 0.0 && x.is_finite())) {
            return Err(Error::InvalidPotential("bernoulli weights must be positive and finite".into()));
        }
        Ok(EdgePotential { q: shift.q(), values: shift.edges().map(|(a, b)| ((a, b), p[b].ln())).collect() })
    }

    pub fn get(&self, a: usize, b: usize) -> Option<f64> {
        self.values.get(&(a, b)).copied()
    }

    pub fn values(&self) -> &BTreeMap<(usize, usize), f64> {
        &self.values
    }

    pub fn q(&self) -> usize {
        self.q
    }
}

/// `M[a][b] = P[a][b]·exp φ(a, b)`.
pub fn transfer_matrix(shift: &ShiftSpace, potential: &EdgePotential) -> Vec<Vec<f64>> {
    let q = shift.q();
    let mut m = vec![vec![0.0; q]; q];
    for (a, b) in shift.edges() {
        m[a][b] = potential.get(a, b).unwrap_or(0.0).exp();
    }
    m
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkovMeasure {
    pub transition: Vec<Vec<f64>>,
    pub stationary: Vec<f64>,
    pub log_pressure: f64,
}

fn mat_vec(m: &[Vec<f64>], v: &[f64]) -> Vec<f64> {
    m.iter().map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum()).collect()
}

fn transpose(m: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let q = m.len();
    (0..q).map(|j| (0..q).map(|i| m[i][j]).collect()).collect()
}

fn sup_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()))
}

/// Perron root and positive eigenvector of a primitive nonnegative matrix by
/// power iteration, stopping once `‖M r − ρ r‖∞ ≤ 1e-14·‖M‖∞`.
pub fn perron_eigen(m: &[Vec<f64>]) -> Result<(f64, Vec<f64>)> {
    let q = m.len();
    let norm_inf = m.iter().map(|row| row.iter().sum::<f64>()).fold(0.0, f64::max);
    let tol = PERRON_TOL * norm_inf;
    let mut r = vec![1.0; q];
    let mut residual = f64::INFINITY;
    for _ in 0..PERRON_MAX_ITER {
        let y = mat_vec(m, &r);
        let rho = sup_norm(&y);
        if !(rho > 0.0 && rho.is_finite()) {
            return Err(Error::NonFinite("Perron iteration".into()));
        }
        r = y.into_iter().map(|v| v / rho).collect();
        let mr = mat_vec(m, &r);
        let rho = sup_norm(&mr);
        residual = mr.iter().zip(&r).map(|(a, b)| (a - rho * b).abs()).fold(0.0, f64::max);
        if residual <= tol {
            return Ok((rho, r));
        }
    }
    Err(Error::NoConvergence {
        solver: "Perron power iteration",
        detail: format!("residual {residual:e} above {tol:e} after {PERRON_MAX_ITER} iterations"),
    })
}

/// Equilibrium state of an edge potential on a primitive shift.
pub fn equilibrium_markov(shift: &ShiftSpace, potential: &EdgePotential) -> Result<MarkovMeasure> {
    if potential.q() != shift.q() {
        return Err(Error::InvalidPotential("potential and shift have different alphabets".into()));
    }
    let m = transfer_matrix(shift, potential);
    let (rho, right) = perron_eigen(&m)?;
    let (_, left) = perron_eigen(&transpose(&m))?;
    let q = shift.q();
    let mut transition = vec![vec![0.0; q]; q];
    for a in 0..q {
        for b in 0..q {
            transition[a][b] = m[a][b] * right[b] / (rho * right[a]);
        }
        // absorb the eigen-residual so rows are stochastic to rounding
        let s: f64 = transition[a].iter().sum();
        transition[a].iter_mut().for_each(|v| *v /= s);
    }
    let weights: Vec<f64> = left.iter().zip(&right).map(|(l, r)| l * r).collect();
    let total: f64 = weights.iter().sum();
    let stationary: Vec<f64> = weights.into_iter().map(|w| w / total).collect();
    let measure = MarkovMeasure { transition, stationary, log_pressure: rho.ln() };
    measure.check(shift)?;
    Ok(measure)
}

impl MarkovMeasure {
    pub fn q(&self) -> usize {
        self.stationary.len()
    }

    /// Verifies stochasticity, stationarity and support to `1e-12`.
    pub fn check(&self, shift: &ShiftSpace) -> Result<()> {
        let q = self.q();
        for a in 0..q {
            let s: f64 = self.transition[a].iter().sum();
            if (s - 1.0).abs() > MEASURE_TOL {
                return Err(Error::NoConvergence { solver: "equilibrium state", detail: format!("row {a} sums to {s}") });
            }
            for b in 0..q {
                if (self.transition[a][b] > 0.0) != shift.allows(a, b) {
                    return Err(Error::NoConvergence {
                        solver: "equilibrium state",
                        detail: format!("support of Q differs from the shift at ({a},{b})"),
                    });
                }
            }
        }
        for b in 0..q {
            let pq: f64 = (0..q).map(|a| self.stationary[a] * self.transition[a][b]).sum();
            if (pq - self.stationary[b]).abs() > MEASURE_TOL || self.stationary[b] <= 0.0 {
                return Err(Error::NoConvergence {
                    solver: "equilibrium state",
                    detail: format!("stationarity fails at symbol {b}: {pq} vs {}", self.stationary[b]),
                });
            }
        }
        Ok(())
    }

    /// `π[w₀]·∏ Q[wᵢ][wᵢ₊₁]`; the empty word has measure 1 and anything
    /// inadmissible (including out-of-range symbols) has measure 0.
    pub fn cylinder_measure(&self, word: &Word) -> f64 {
        let q = self.q();
        let Some(first) = word.first() else { return 1.0 };
        if word.symbols().iter().any(|&s| s >= q) {
            return 0.0;
        }
        word.edges().fold(self.stationary[first], |acc, (a, b)| acc * self.transition[a][b])
    }

    /// Probability of reaching `b` from `a` in exactly `steps` transitions.
    pub fn transition_power(&self, steps: usize) -> Vec<Vec<f64>> {
        let q = self.q();
        let mut out: Vec<Vec<f64>> = (0..q).map(|i| (0..q).map(|j| f64::from(u8::from(i == j))).collect()).collect();
        for _ in 0..steps {
            out = out
                .iter()
                .map(|row| (0..q).map(|j| (0..q).map(|k| row[k] * self.transition[k][j]).sum()).collect())
                .collect();
        }
        out
    }

    fn draw(weights: &[f64], rng: &mut TrialRng) -> usize {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut fallback = 0;
        for (i, &w) in weights.iter().enumerate() {
            if w > 0.0 {
                acc += w;
                fallback = i;
                if u < acc {
                    return i;
                }
            }
        }
        fallback
    }

    /// Stationary chain path with `len` symbols drawn from `rng`.
    pub fn sample_word(&self, len: usize, rng: &mut TrialRng) -> Word {
        let mut symbols = Vec::with_capacity(len);
        if len == 0 {
            return Word(symbols);
        }
        let mut x = Self::draw(&self.stationary, rng);
        symbols.push(x);
        for _ in 1..len {
            x = Self::draw(&self.transition[x], rng);
            symbols.push(x);
        }
        Word(symbols)
    }

    /// Path of `len` symbols continuing from a given start symbol.
    pub fn sample_word_from(&self, start: usize, len: usize, rng: &mut TrialRng) -> Word {
        let mut symbols = Vec::with_capacity(len);
        if len == 0 {
            return Word(symbols);
        }
        let mut x = start;
        symbols.push(x);
        for _ in 1..len {
            x = Self::draw(&self.transition[x], rng);
            symbols.push(x);
        }
        Word(symbols)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySample {
    pub word: Word,
    pub seed: u64,
    pub length: usize,
}

/// A single reproducible trajectory of `n` symbols (stream 0 of `seed`).
pub fn sample_trajectory(measure: &MarkovMeasure, n: usize, seed: u64) -> Result<TrajectorySample> {
    if n == 0 {
        return Err(Error::InvalidArgument("trajectory length must be at least 1".into()));
    }
    let mut rng = stream_rng(seed, 0);
    Ok(TrajectorySample { word: measure.sample_word(n, &mut rng), seed, length: n })
}

/// Exact `μ([f] ∩ T^{-gap}[g])` for cylinders anchored at coordinates 0 and `gap`.
pub fn joint_cylinder_measure(measure: &MarkovMeasure, f: &Word, g: &Word, gap: usize) -> f64 {
    let (lf, lg) = (f.len(), g.len());
    if lf == 0 {
        return measure.cylinder_measure(g);
    }
    if lg == 0 {
        return measure.cylinder_measure(f);
    }
    if gap >= lf {
        let bridge = measure.transition_power(gap - lf + 1);
        let (last, first) = (f.last().unwrap(), g.first().unwrap());
        if last >= measure.q() || first >= measure.q() {
            return 0.0;
        }
        let g_tail = measure.cylinder_measure(g) / measure.stationary[first];
        return measure.cylinder_measure(f) * bridge[last][first] * g_tail;
    }
    // overlapping cylinders: merge and require agreement
    let total = lf.max(gap + lg);
    let mut merged = vec![usize::MAX; total];
    merged[..lf].copy_from_slice(f.symbols());
    for (i, &s) in g.symbols().iter().enumerate() {
        let slot = &mut merged[gap + i];
        if *slot != usize::MAX && *slot != s {
            return 0.0;
        }
        *slot = s;
    }
    measure.cylinder_measure(&Word(merged))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationPoint {
    pub gap: usize,
    /// Exact `μ(f·g∘T^gap) − μ(f)μ(g)`.
    pub exact: f64,
    /// Empirical `|μ̂(f·g∘T^gap) − μ(f)μ(g)|`.
    pub estimate: f64,
    pub half_width: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationCurve {
    pub points: Vec<CorrelationPoint>,
    pub trials: usize,
    /// Decay rate fitted to the empirical values that exceed their half-width.
    pub decay_rate: Option<f64>,
    /// Decay rate fitted to the exact covariances.
    pub exact_decay_rate: Option<f64>,
    pub warnings: Vec<String>,
}

fn matches_at(word: &Word, pattern: &Word, offset: usize) -> bool {
    word.symbols()[offset..offset + pattern.len()] == *pattern.symbols()
}

/// Empirical correlation of two cylinder indicators across gaps.
pub fn correlation_decay(
    measure: &MarkovMeasure,
    shift: &ShiftSpace,
    f_word: &Word,
    g_word: &Word,
    gaps: &[usize],
    trials: usize,
    seed: u64,
) -> Result<CorrelationCurve> {
    shift.check_admissible(f_word)?;
    shift.check_admissible(g_word)?;
    if f_word.is_empty() || g_word.is_empty() {
        return Err(Error::InvalidArgument("correlation words must be non-empty".into()));
    }
    if trials == 0 {
        return Err(Error::InvalidArgument("trials must be positive".into()));
    }
    let max_gap = gaps.iter().copied().max().unwrap_or(0);
    let len = (max_gap + g_word.len()).max(f_word.len());
    let hits: Vec<Vec<bool>> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = stream_rng(seed, t as u64);
            let w = measure.sample_word(len, &mut rng);
            let f_hit = matches_at(&w, f_word, 0);
            gaps.iter().map(|&k| f_hit && matches_at(&w, g_word, k)).collect()
        })
        .collect();
    let (mf, mg) = (measure.cylinder_measure(f_word), measure.cylinder_measure(g_word));
    let product = mf * mg;
    let mut points = Vec::with_capacity(gaps.len());
    for (i, &gap) in gaps.iter().enumerate() {
        let count = hits.iter().filter(|h| h[i]).count() as u64;
        let p = Proportion::wilson(count, trials as u64);
        let exact = joint_cylinder_measure(measure, f_word, g_word, gap) - product;
        points.push(CorrelationPoint {
            gap,
            exact,
            estimate: (p.estimate - product).abs(),
            half_width: (p.estimate - p.ci_lo).max(p.ci_hi - p.estimate),
        });
    }
    let fit = |pairs: Vec<(f64, f64)>| {
        let (xs, ys): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        linear_fit(&xs, &ys).map(|f| -f.slope)
    };
    let decay_rate = fit(
        points
            .iter()
            .filter(|p| p.estimate > p.half_width && p.estimate > 0.0)
            .map(|p| (p.gap as f64, p.estimate.ln()))
            .collect(),
    );
    let exact_decay_rate = fit(
        points
            .iter()
            .filter(|p| p.exact.abs() > 1e-300)
            .map(|p| (p.gap as f64, p.exact.abs().ln()))
            .collect(),
    );
    let mut warnings = Vec::new();
    if (trials as f64) * product < 10.0 {
        warnings.push(format!(
            "expected joint count {:.2} is below 10; raise trials for a meaningful confidence interval",
            trials as f64 * product
        ));
    }
    if decay_rate.is_none() {
        warnings.push("fewer than 3 gaps with a significant correlation; no empirical decay fit".into());
    }
    Ok(CorrelationCurve { points, trials, decay_rate, exact_decay_rate, warnings })
}
