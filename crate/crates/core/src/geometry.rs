//! Singular-direction geometry of cocycle products: alignment of images with
//! `u`, stabilization of `u`, avoidance of hyperplanes, `u`–`s` separation,
//! almost independence of distant segments, and the pointwise inequalities
//! behind them.

use serde::{Deserialize, Serialize};

use crate::cocycle::{
    cocycle_product, gap_distance, log_spectral_radius, operator_norm, point_to_hyperplane_distance, singular_data,
    Cocycle, Mat, ProjectivePoint, ScaledMatrix, SingularData,
};
use crate::gibbs::MarkovMeasure;
use crate::lyapunov::check_ns;
use crate::rng::{run_trials, stream_rng, AUX_STREAM_OFFSET};
use crate::stats::{mean_and_se, Proportion, Z95};
use crate::symbolic::Word;
use crate::{Error, Result};

/// Slack allowed in the pointwise inequalities.
pub const POINTWISE_SLACK: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "snake_case")]
pub enum Threshold {
    /// `prefactor · e^{−rate·n}`
    Exponential { prefactor: f64, rate: f64 },
    /// `prefactor · e^{−rate·⌊n/4⌋}`
    ExponentialQuarter { prefactor: f64, rate: f64 },
    Constant { radius: f64 },
}

impl Threshold {
    pub fn exp(prefactor: f64, rate: f64) -> Self {
        Threshold::Exponential { prefactor, rate }
    }

    pub fn value(&self, n: usize) -> f64 {
        match *self {
            Threshold::Exponential { prefactor, rate } => prefactor * (-rate * n as f64).exp(),
            Threshold::ExponentialQuarter { prefactor, rate } => prefactor * (-rate * (n / 4) as f64).exp(),
            Threshold::Constant { radius } => radius,
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            Threshold::Exponential { prefactor, rate } | Threshold::ExponentialQuarter { prefactor, rate } => {
                prefactor > 0.0 && prefactor.is_finite() && rate > 0.0 && rate.is_finite()
            }
            Threshold::Constant { radius } => radius > 0.0 && radius.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("threshold parameters must be positive and finite: {self:?}")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IncrementMode {
    /// `d(u(A^[4n]), u(A^[n]))`
    RightIncrement,
    /// `d(u(A⁽⁴ⁿ⁾), u(A⁽ⁿ⁾(T³ⁿx)))`
    LeftIncrement,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum GeometryEvent {
    /// `d(u(A⁽ⁿ⁾), A⁽ⁿ⁾v) ≥ threshold`
    ImageAlignment { v: ProjectivePoint },
    /// `d(u(·), u(·)) ≥ threshold` for the chosen pair of products.
    UStabilization { mode: IncrementMode },
    /// `d(u(A⁽ⁿ⁾), w⊥) ≤ threshold`
    HyperplaneAvoidance { w: ProjectivePoint },
    /// `d(u(A⁽ⁿ⁾), s(A⁽ⁿ⁾)) ≤ threshold`
    UsSeparation,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeometryPoint {
    pub n: usize,
    pub threshold: f64,
    /// Over non-degenerate samples only.
    pub probability: Proportion,
    pub discarded: usize,
}

/// Outcome of a pointwise inequality evaluated on every non-degenerate sample.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PointwiseCheck {
    pub checked: usize,
    pub violations: usize,
    /// Largest `lhs − rhs` seen (negative when the inequality always held strictly).
    pub max_excess: f64,
}

impl PointwiseCheck {
    fn record(&mut self, lhs: f64, rhs: f64) {
        let excess = lhs - rhs;
        if self.checked == 0 || excess > self.max_excess {
            self.max_excess = excess;
        }
        self.checked += 1;
        if excess > POINTWISE_SLACK {
            self.violations += 1;
        }
    }

    fn merge(&mut self, other: &PointwiseCheck) {
        if other.checked == 0 {
            return;
        }
        if self.checked == 0 || other.max_excess > self.max_excess {
            self.max_excess = other.max_excess;
        }
        self.checked += other.checked;
        self.violations += other.violations;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeometryCurve {
    pub event: GeometryEvent,
    pub threshold: Threshold,
    pub points: Vec<GeometryPoint>,
    pub trials: usize,
    pub seed: u64,
    /// Alignment: `d(u(g), gv) ≤ (a₂/a₁)(‖g‖/‖gv‖)`. Hyperplane avoidance:
    /// `‖g*w‖/‖g*‖ ≤ d(u(g), w⊥) + a₂/a₁`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pointwise: Option<PointwiseCheck>,
}

impl GeometryCurve {
    pub fn probabilities(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.probability.estimate).collect()
    }

    pub fn discard_fraction(&self) -> f64 {
        let total: usize = self.points.iter().map(|p| p.discarded + p.probability.trials as usize).sum();
        let discarded: usize = self.points.iter().map(|p| p.discarded).sum();
        if total == 0 {
            0.0
        } else {
            discarded as f64 / total as f64
        }
    }
}

/// Per-trial, per-n outcome: `None` when discarded as degenerate.
type TrialOutcome = (Vec<Option<bool>>, PointwiseCheck);

fn assemble(
    event: GeometryEvent,
    threshold: Threshold,
    ns: &[usize],
    trials: usize,
    seed: u64,
    outcomes: Vec<TrialOutcome>,
    with_pointwise: bool,
) -> GeometryCurve {
    let mut pointwise = PointwiseCheck::default();
    for (_, pc) in &outcomes {
        pointwise.merge(pc);
    }
    let points = ns
        .iter()
        .enumerate()
        .map(|(k, &n)| {
            let kept: Vec<bool> = outcomes.iter().filter_map(|(o, _)| o[k]).collect();
            let hits = kept.iter().filter(|&&b| b).count();
            GeometryPoint {
                n,
                threshold: threshold.value(n),
                probability: Proportion::wilson(hits as u64, kept.len() as u64),
                discarded: trials - kept.len(),
            }
        })
        .collect();
    GeometryCurve { event, threshold, points, trials, seed, pointwise: with_pointwise.then_some(pointwise) }
}

fn check_inputs(cocycle: &Cocycle, measure: &MarkovMeasure, ns: &[usize], trials: usize, threshold: &Threshold) -> Result<()> {
    check_ns(ns)?;
    if trials == 0 {
        return Err(Error::InvalidArgument("trials must be positive".into()));
    }
    threshold.validate()?;
    cocycle.check_measure(measure)
}

fn check_dim(p: &ProjectivePoint, d: usize) -> Result<()> {
    if p.dim() == d {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("point has dimension {}, cocycle {d}", p.dim())))
    }
}

/// Products along `word` at each prefix length in `checkpoints` (ascending).
fn prefix_products(cocycle: &Cocycle, word: &Word, checkpoints: &[usize]) -> Result<Vec<ScaledMatrix>> {
    let mut acc = ScaledMatrix::identity(cocycle.dim());
    let mut out = Vec::with_capacity(checkpoints.len());
    let mut next = checkpoints.iter().peekable();
    for (step, (a, b)) in word.edges().enumerate() {
        acc.left_mul(cocycle.matrix(a, b))?;
        while next.peek() == Some(&&(step + 1)) {
            out.push(acc.clone());
            next.next();
        }
    }
    Ok(out)
}

/// Threshold `e^{−αn}` on `d(u(A⁽ⁿ⁾), A⁽ⁿ⁾v)`, with the pointwise bound
/// `(a₂/a₁)(‖A⁽ⁿ⁾‖/‖A⁽ⁿ⁾v‖)` checked on every kept sample.
pub fn image_alignment_curve(
    cocycle: &Cocycle,
    measure: &MarkovMeasure,
    v: &ProjectivePoint,
    alpha: f64,
    ns: &[usize],
    trials: usize,
    seed: u64,
) -> Result<GeometryCurve> {
    image_alignment_curve_with(cocycle, measure, v, Threshold::exp(1.0, alpha), ns, trials, seed)
}

pub fn image_alignment_curve_with(
    cocycle: &Cocycle,
    measure: &MarkovMeasure,
    v: &ProjectivePoint,
    threshold: Threshold,
    ns: &[usize],
    trials: usize,
    seed: u64,
) -> Result<GeometryCurve> {
    check_inputs(cocycle, measure, ns, trials, &threshold)?;
    check_dim(v, cocycle.dim())?;
    let n_max = *ns.last().expect("ns checked nonempty");
    let vv = v.to_vector();
    let outcomes = run_trials(trials, seed, |_, rng| -> Result<TrialOutcome> {
        let word = measure.sample_word(n_max + 1, rng);
        let mut pc = PointwiseCheck::default();
        let mut out = Vec::with_capacity(ns.len());
        for (m, &n) in prefix_products(cocycle, &word, ns)?.iter().zip(ns) {
            let sd = singular_data(m)?;
            if sd.degenerate_top {
                out.push(None);
                continue;
            }
            let image = &m.unit * &vv;
            let image_norm = image.norm();
            let dist = gap_distance(&sd.u, &ProjectivePoint::from_vector(&image)?);
            pc.record(dist, sd.gap_ratio() / image_norm);
            out.push(Some(dist >= threshold.value(n)));
        }
        Ok((out, pc))
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    Ok(assemble(GeometryEvent::ImageAlignment { v: v.clone() }, threshold, ns, trials, seed, outcomes, true))
}

/// Threshold `e^{−αn}` on the distance between the two `u` directions; the
/// sampled word has `4·max(ns) + 1` symbols and each `n` uses its prefix of
/// `4n + 1`.
pub fn u_stabilization_curve(
    cocycle: &Cocycle,
    measure: &MarkovMeasure,
    mode: IncrementMode,
    alpha: f64,
    ns: &[usize],
    trials: usize,
    seed: u64,
) -> Result<GeometryCurve> {
    u_stabilization_curve_with(cocycle, measure, mode, Threshold::exp(1.0, alpha), ns, trials, seed)
}

pub fn u_stabilization_curve_with(
    cocycle: &Cocycle,
    measure: &MarkovMeasure,
    mode: IncrementMode,
    threshold: Threshold,
    ns: &[usize],
    trials: usize,
    seed: u64,
) -> Result<GeometryCurve> {
    check_inputs(cocycle, measure, ns, trials, &threshold)?;
    let n_max = *ns.last().expect("ns checked nonempty");
    let mut checkpoints: Vec<usize> = ns.iter().flat_map(|&n| [n, 4 * n]).collect();
    checkpoints.sort_unstable();
    checkpoints.dedup();
    let outcomes = run_trials(trials, seed, |_, rng| -> Result<TrialOutcome> {
        let word = measure.sample_word(4 * n_max + 1, rng);
        let products = prefix_products(cocycle, &word, &checkpoints)?;
        let at = |len: usize| &products[checkpoints.binary_search(&len).expect("checkpoint present")];
        let mut out = Vec::with_capacity(ns.len());
        for &n in ns {
            let long = singular_data(at(4 * n))?;
            let (p, r, degenerate) = match mode {
                IncrementMode::RightIncrement => {
                    // u(A^[k]) = u((A⁽ᵏ⁾)*) is the s_normal of A⁽ᵏ⁾
                    let short = singular_data(at(n))?;
                    (long.s_normal, short.s_normal, long.degenerate_top || short.degenerate_top)
                }
                IncrementMode::LeftIncrement => {
                    let short = singular_data(&cocycle_product(cocycle, &word.edge_window(3 * n, 4 * n))?)?;
                    (long.u, short.u, long.degenerate_top || short.degenerate_top)
                }
            };
            out.push((!degenerate).then(|| gap_distance(&p, &r) >= threshold.value(n)));
        }
        Ok((out, PointwiseCheck::default()))
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    Ok(assemble(GeometryEvent::UStabilization { mode }, threshold, ns, trials, seed, outcomes, false))
}

/// Threshold `3e^{−3εn}` on `d(u(A⁽ⁿ⁾), w⊥)`, with the Bourgain bound
/// `‖g*w‖/‖g*‖ ≤ d(u(g), w⊥) + a₂/a₁` checked on every kept sample.
pub fn hyperplane_avoidance_curve(
    cocycle: &Cocycle,
    measure: &MarkovMeasure,
    w: &ProjectivePoint,
    eps: f64,
    ns: &[usize],
    trials: usize,
    seed: u64,
) -> Result<GeometryCurve> {
    hyperplane_avoidance_curve_with(cocycle, measure, w, Threshold::exp(3.0, 3.0 * eps), ns, trials, seed)
}

pub fn hyperplane_avoidance_curve_with(
    cocycle: &Cocycle,
    measure: &MarkovMeasure,
    w: &ProjectivePoint,
    threshold: Threshold,
    ns: &[usize],
    trials: usize,
    seed: u64,
) -> Result<GeometryCurve> {
    check_inputs(cocycle, measure, ns, trials, &threshold)?;
    check_dim(w, cocycle.dim())?;
    let n_max = *ns.last().expect("ns checked nonempty");
    let wv = w.to_vector();
    let outcomes = run_trials(trials, seed, |_, rng| -> Result<TrialOutcome> {
        let word = measure.sample_word(n_max + 1, rng);
        let mut pc = PointwiseCheck::default();
        let mut out = Vec::with_capacity(ns.len());
        for (m, &n) in prefix_products(cocycle, &word, ns)?.iter().zip(ns) {
            let sd = singular_data(m)?;
            if sd.degenerate_top {
                out.push(None);
                continue;
            }
            let dist = point_to_hyperplane_distance(&sd.u, w);
            pc.record((m.unit.transpose() * &wv).norm(), dist + sd.gap_ratio());
            out.push(Some(dist <= threshold.value(n)));
        }
        Ok((out, pc))
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    Ok(assemble(GeometryEvent::HyperplaneAvoidance { w: w.clone() }, threshold, ns, trials, seed, outcomes, true))
}

/// Threshold `e^{−3ε⌊n/4⌋}` on `d(u(A⁽ⁿ⁾), s(A⁽ⁿ⁾))`.
pub fn u_s_separation_curve(
    cocycle: &Cocycle,
    measure: &MarkovMeasure,
    eps: f64,
    ns: &[usize],
    trials: usize,
    seed: u64,
) -> Result<GeometryCurve> {
    let threshold = Threshold::ExponentialQuarter { prefactor: 1.0, rate: 3.0 * eps };
    u_s_separation_curve_with(cocycle, measure, threshold, ns, trials, seed)
}

pub fn u_s_separation_curve_with(
    cocycle: &Cocycle,
    measure: &MarkovMeasure,
    threshold: Threshold,
    ns: &[usize],
    trials: usize,
    seed: u64,
) -> Result<GeometryCurve> {
    check_inputs(cocycle, measure, ns, trials, &threshold)?;
    let n_max = *ns.last().expect("ns checked nonempty");
    let outcomes = run_trials(trials, seed, |_, rng| -> Result<TrialOutcome> {
        let word = measure.sample_word(n_max + 1, rng);
        let mut out = Vec::with_capacity(ns.len());
        for (m, &n) in prefix_products(cocycle, &word, ns)?.iter().zip(ns) {
            let sd = singular_data(m)?;
            out.push((!sd.degenerate_top).then(|| sd.u_s_distance() <= threshold.value(n)));
        }
        Ok((out, PointwiseCheck::default()))
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    Ok(assemble(GeometryEvent::UsSeparation, threshold, ns, trials, seed, outcomes, false))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndependenceEstimate {
    pub n: usize,
    pub threshold: f64,
    /// Both segments from one word of `4n + 1` symbols.
    pub eta_hat: Proportion,
    /// Future segment replaced by an independent stationary segment.
    pub product_hat: Proportion,
    pub difference: f64,
    /// 95% interval from the paired per-trial differences.
    pub difference_ci: (f64, f64),
    pub discarded: usize,
}

/// `|⟨φ¹, φ²⟩| ≤ threshold`, i.e. `d(φ¹⊥, φ²)` small.
fn in_pn(present: &SingularData, future: &SingularData, threshold: f64) -> bool {
    point_to_hyperplane_distance(&future.u, &present.s_normal) <= threshold
}

/// Coupled-vs-independent estimate of `P_n = {d(φ¹⊥, φ²) ≤ 3e^{−3εn}}`, with
/// `φ¹` the s-normal of the product over edges `[0, n)` and `φ²` the `u` of
/// the product over edges `[3n, 4n)`.
pub fn almost_independence(
    cocycle: &Cocycle,
    measure: &MarkovMeasure,
    eps: f64,
    n: usize,
    trials: usize,
    seed: u64,
) -> Result<IndependenceEstimate> {
    almost_independence_with(cocycle, measure, Threshold::exp(3.0, 3.0 * eps), n, trials, seed)
}

pub fn almost_independence_with(
    cocycle: &Cocycle,
    measure: &MarkovMeasure,
    threshold: Threshold,
    n: usize,
    trials: usize,
    seed: u64,
) -> Result<IndependenceEstimate> {
    check_inputs(cocycle, measure, &[n], trials, &threshold)?;
    let thr = threshold.value(n);
    let per_trial = run_trials(trials, seed, |t, rng| -> Result<Option<(bool, bool)>> {
        let word = measure.sample_word(4 * n + 1, rng);
        let present = singular_data(&cocycle_product(cocycle, &word.edge_window(0, n))?)?;
        let future = singular_data(&cocycle_product(cocycle, &word.edge_window(3 * n, 4 * n))?)?;
        let mut aux = stream_rng(seed, AUX_STREAM_OFFSET + t as u64);
        let fresh = singular_data(&cocycle_product(cocycle, &measure.sample_word(n + 1, &mut aux))?)?;
        if present.degenerate_top || future.degenerate_top || fresh.degenerate_top {
            return Ok(None);
        }
        Ok(Some((in_pn(&present, &future, thr), in_pn(&present, &fresh, thr))))
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let kept: Vec<(bool, bool)> = per_trial.into_iter().flatten().collect();
    let joint_hits = kept.iter().filter(|p| p.0).count() as u64;
    let indep_hits = kept.iter().filter(|p| p.1).count() as u64;
    let diffs: Vec<f64> = kept.iter().map(|&(a, b)| f64::from(u8::from(a)) - f64::from(u8::from(b))).collect();
    let (difference, se) = mean_and_se(&diffs);
    Ok(IndependenceEstimate {
        n,
        threshold: thr,
        eta_hat: Proportion::wilson(joint_hits, kept.len() as u64),
        product_hat: Proportion::wilson(indep_hits, kept.len() as u64),
        difference,
        difference_ci: (difference - Z95 * se, difference + Z95 * se),
        discarded: trials - kept.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExactIndependence {
    pub n: usize,
    pub joint: f64,
    pub product: f64,
    /// Measure of segment words skipped as degenerate.
    pub degenerate_mass: f64,
}

/// Exact values of the two probabilities estimated by [`almost_independence`],
/// by summing over all admissible segment words of `n + 1` symbols and
/// bridging the gap with `Q^{2n}`.
pub fn exact_independence(
    cocycle: &Cocycle,
    measure: &MarkovMeasure,
    threshold: Threshold,
    n: usize,
    cap: usize,
) -> Result<ExactIndependence> {
    threshold.validate()?;
    cocycle.check_measure(measure)?;
    if n == 0 {
        return Err(Error::InvalidArgument("segment length must be positive".into()));
    }
    let thr = threshold.value(n);
    let words = cocycle.shift().enumerate_words(n + 1, cap)?;
    let mut segments = Vec::with_capacity(words.len());
    let mut degenerate_mass = 0.0;
    for w in &words {
        let mass = measure.cylinder_measure(w);
        if mass == 0.0 {
            continue;
        }
        let sd = singular_data(&cocycle_product(cocycle, w)?)?;
        if sd.degenerate_top {
            degenerate_mass += mass;
            continue;
        }
        segments.push((w.first().expect("nonempty"), w.last().expect("nonempty"), mass, sd));
    }
    let bridge = measure.transition_power(2 * n);
    let (mut joint, mut product) = (0.0, 0.0);
    for (_, last, mf, present) in &segments {
        for (first, _, mg, future) in &segments {
            if in_pn(present, future, thr) {
                joint += mf * bridge[*last][*first] * mg / measure.stationary[*first];
                product += mf * mg;
            }
        }
    }
    Ok(ExactIndependence { n, joint, product, degenerate_mass })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InequalityKind {
    /// `[d(u,s) > 2√(a₂/a₁)] ⇒ d(u,s)/2 ≤ ρ(g)/‖g‖`
    BenoistQuint,
    /// `‖g*w‖/‖g*‖ ≤ d(u(g), w⊥) + a₂/a₁`
    Bourgain,
    /// `d(u(g), gv) ≤ (a₂/a₁)(‖g‖/‖gv‖)`
    Alignment,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InequalityViolation {
    pub sample: usize,
    pub kind: InequalityKind,
    pub lhs: f64,
    pub rhs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BqCheckReport {
    pub samples: usize,
    /// Samples where the Benoist–Quint hypothesis `d(u,s) > 2√(a₂/a₁)` held.
    pub bq_hypothesis_met: usize,
    pub inequalities_checked: usize,
    pub violations: Vec<InequalityViolation>,
}

impl BqCheckReport {
    pub fn violation_count(&self) -> usize {
        self.violations.len()
    }
}

/// Test vectors for the vector inequalities: the axes, `u`, `s_normal` and the diagonal.
fn probe_vectors(sd: &SingularData, d: usize) -> Vec<ProjectivePoint> {
    let mut out: Vec<ProjectivePoint> = (0..d).map(|i| ProjectivePoint::axis(d, i)).collect();
    out.push(sd.u.clone());
    out.push(sd.s_normal.clone());
    out.push(ProjectivePoint::new(&vec![1.0; d]).expect("nonzero"));
    out
}

/// Evaluates the Benoist–Quint spectral-gap implication and the Bourgain and
/// alignment inequalities on each matrix; violations beyond
/// [`POINTWISE_SLACK`] are listed.
pub fn bq_implication_check(samples: &[Mat]) -> Result<BqCheckReport> {
    let per_sample: Vec<(bool, usize, Vec<InequalityViolation>)> = samples
        .iter()
        .enumerate()
        .map(|(i, g)| -> Result<_> {
            if !g.is_square() || g.iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidArgument(format!("sample {i} is not a finite square matrix")));
            }
            let m = ScaledMatrix::from_matrix(g.clone())?;
            let sd = singular_data(&m)?;
            let ratio = sd.gap_ratio();
            let mut violations = Vec::new();
            let mut checked = 0;
            let mut check = |kind, lhs: f64, rhs: f64| {
                checked += 1;
                if lhs - rhs > POINTWISE_SLACK {
                    violations.push(InequalityViolation { sample: i, kind, lhs, rhs });
                }
            };
            let dus = sd.u_s_distance();
            let hypothesis = dus > 2.0 * ratio.sqrt();
            if hypothesis {
                let rho_over_norm = (log_spectral_radius(&m)? - m.log_scale).exp();
                check(InequalityKind::BenoistQuint, dus / 2.0, rho_over_norm);
            }
            let ut = m.unit.transpose();
            for p in probe_vectors(&sd, g.nrows()) {
                let v = p.to_vector();
                check(InequalityKind::Bourgain, (&ut * &v).norm(), point_to_hyperplane_distance(&sd.u, &p) + ratio);
                let image = &m.unit * &v;
                let image_norm = image.norm();
                check(
                    InequalityKind::Alignment,
                    gap_distance(&sd.u, &ProjectivePoint::from_vector(&image)?),
                    ratio / image_norm,
                );
            }
            Ok((hypothesis, checked, violations))
        })
        .collect::<Result<_>>()?;
    let mut report = BqCheckReport { samples: samples.len(), bq_hypothesis_met: 0, inequalities_checked: 0, violations: Vec::new() };
    for (hyp, checked, v) in per_sample {
        report.bq_hypothesis_met += usize::from(hyp);
        report.inequalities_checked += checked;
        report.violations.extend(v);
    }
    Ok(report)
}

/// `‖Λ²g‖/‖g‖²`, which equals `a₂/a₁`.
pub fn wedge_ratio(g: &Mat) -> Result<f64> {
    let w = crate::cocycle::exterior_matrix(g, 2)?;
    Ok(operator_norm(&w) / operator_norm(g).powi(2))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gibbs::{equilibrium_markov, EdgePotential};
    use crate::symbolic::ShiftSpace;

    fn setup(g: Mat) -> (Cocycle, MarkovMeasure) {
        let full = ShiftSpace::full(2).unwrap();
        let m = equilibrium_markov(&full, &EdgePotential::zero(&full)).unwrap();
        (Cocycle::constant(&full, g).unwrap(), m)
    }

    fn diag(a: f64, b: f64) -> Mat {
        Mat::from_row_slice(2, 2, &[a, 0.0, 0.0, b])
    }

    const NS: [usize; 3] = [4, 8, 16];

    #[test]
    fn alignment_constant_diagonal() {
        let (c, m) = setup(diag(4.0, 1.0));
        let curve = image_alignment_curve(&c, &m, &ProjectivePoint::axis(2, 0), 0.1, &NS, 20, 1).unwrap();
        assert!(curve.probabilities().iter().all(|&p| p == 0.0));
        assert_eq!(curve.pointwise.unwrap().violations, 0);
        let curve = image_alignment_curve(&c, &m, &ProjectivePoint::axis(2, 1), 0.1, &NS, 20, 1).unwrap();
        assert!(curve.probabilities().iter().all(|&p| p == 1.0));
    }

    #[test]
    fn stabilization_symmetric_and_rotation() {
        let (c, m) = setup(Mat::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]));
        for mode in [IncrementMode::RightIncrement, IncrementMode::LeftIncrement] {
            let curve = u_stabilization_curve(&c, &m, mode, 0.1, &NS, 10, 2).unwrap();
            assert!(curve.probabilities().iter().all(|&p| p == 0.0), "{mode:?}");
        }
        let (c, m) = setup(Mat::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]));
        let curve = u_stabilization_curve(&c, &m, IncrementMode::RightIncrement, 0.1, &NS, 10, 2).unwrap();
        assert_eq!(curve.discard_fraction(), 1.0);
    }

    #[test]
    fn hyperplane_reducible_countercase() {
        let (c, m) = setup(diag(2.0, 0.5));
        let inside = hyperplane_avoidance_curve(&c, &m, &ProjectivePoint::axis(2, 1), 0.01, &NS, 10, 3).unwrap();
        assert!(inside.probabilities().iter().all(|&p| p == 1.0));
        let outside = hyperplane_avoidance_curve(&c, &m, &ProjectivePoint::axis(2, 0), 0.1, &[8, 16, 32], 10, 3).unwrap();
        assert!(outside.probabilities().iter().all(|&p| p == 0.0));
        assert_eq!(outside.pointwise.unwrap().violations, 0);
    }

    #[test]
    fn separation_symmetric_positive_definite() {
        let (c, m) = setup(Mat::from_row_slice(2, 2, &[3.0, 1.0, 1.0, 2.0]));
        let curve = u_s_separation_curve(&c, &m, 0.05, &[40, 80], 10, 4).unwrap();
        assert!(curve.probabilities().iter().all(|&p| p == 0.0));
    }

    #[test]
    fn separation_rotated_diagonal_matches_closed_form() {
        let g = Mat::from_row_slice(2, 2, &[0.0, -0.5, 2.0, 0.0]);
        let (c, m) = setup(g.clone());
        let ns = [1, 2, 3, 4, 5, 6, 7, 8];
        let threshold = Threshold::Constant { radius: 0.5 };
        let curve = u_s_separation_curve_with(&c, &m, threshold, &ns, 4, 5).unwrap();
        for (p, &n) in curve.points.iter().zip(&ns) {
            let power = (0..n).fold(Mat::identity(2, 2), |acc, _| &g * acc);
            let svd = power.clone().svd(true, true);
            let degenerate = (svd.singular_values[0] - svd.singular_values[1]) < 1e-8 * svd.singular_values[0];
            if degenerate {
                assert_eq!(p.discarded, 4);
                continue;
            }
            let (i0, _) = svd.singular_values.argmax();
            let u = svd.u.as_ref().unwrap().column(i0).into_owned();
            let s = svd.v_t.as_ref().unwrap().row(i0).transpose();
            let expected = u.dot(&s).abs() <= 0.5;
            assert_eq!(p.probability.estimate, if expected { 1.0 } else { 0.0 }, "n={n}");
        }
    }

    #[test]
    fn constant_cocycle_independence_is_trivial() {
        let (c, m) = setup(Mat::from_row_slice(2, 2, &[3.0, 1.0, 1.0, 2.0]));
        let est = almost_independence(&c, &m, 0.05, 5, 50, 6).unwrap();
        assert_eq!(est.eta_hat.estimate, est.product_hat.estimate);
        assert_eq!(est.difference, 0.0);
        let exact = exact_independence(&c, &m, Threshold::exp(3.0, 0.15), 5, 10_000).unwrap();
        assert!((exact.joint - exact.product).abs() < 1e-12);
    }

    #[test]
    fn bq_examples() {
        let r = bq_implication_check(&[diag(9.0, 1.0)]).unwrap();
        assert_eq!(r.bq_hypothesis_met, 1);
        assert_eq!(r.violation_count(), 0);
        let rot = Mat::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]);
        let r = bq_implication_check(&[rot]).unwrap();
        assert_eq!(r.bq_hypothesis_met, 0);
        assert_eq!(r.violation_count(), 0);
    }

    #[test]
    fn thresholds() {
        assert_eq!(Threshold::Constant { radius: 0.3 }.value(100), 0.3);
        let q = Threshold::ExponentialQuarter { prefactor: 1.0, rate: 1.0 };
        assert_eq!(q.value(7), (-1f64).exp());
        assert!(Threshold::exp(1.0, 0.0).validate().is_err());
    }
}
