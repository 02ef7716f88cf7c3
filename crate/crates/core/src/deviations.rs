//! Empirical large-deviation tails of finite-time growth rates.

use serde::{Deserialize, Serialize};

use crate::cocycle::{exterior_power, Cocycle, ProjectivePoint, ScaledMatrix, ScaledVector};
use crate::gibbs::MarkovMeasure;
use crate::lyapunov::check_ns;
use crate::rng::run_trials;
use crate::stats::{linear_fit, Proportion};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeviationKind {
    /// `n⁻¹ log‖A⁽ⁿ⁾‖ − λ₁ > ε`
    NormUpper,
    /// `|n⁻¹ log‖A⁽ⁿ⁾‖ − λ₁| > ε`
    NormTwoSided,
    /// `|n⁻¹ log‖A⁽ⁿ⁾v‖ − λ₁| > ε`
    VectorTwoSided,
    /// `n⁻¹ log‖Λ²A⁽ⁿ⁾‖ − (λ₁ + λ₂) > ε`
    WedgeUpper,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviationEvent {
    pub kind: DeviationKind,
    pub epsilon: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vector: Option<ProjectivePoint>,
}

impl DeviationEvent {
    pub fn new(kind: DeviationKind, epsilon: f64) -> Self {
        DeviationEvent { kind, epsilon, vector: None }
    }

    pub fn with_vector(kind: DeviationKind, epsilon: f64, vector: ProjectivePoint) -> Self {
        DeviationEvent { kind, epsilon, vector: Some(vector) }
    }

    pub fn validate(&self, d: usize) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::InvalidArgument(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        match (self.kind, &self.vector) {
            (DeviationKind::VectorTwoSided, None) => {
                Err(Error::InvalidArgument("vector_two_sided needs a vector".into()))
            }
            (DeviationKind::VectorTwoSided, Some(v)) if v.dim() != d => {
                Err(Error::InvalidArgument(format!("vector has dimension {}, cocycle {d}", v.dim())))
            }
            (DeviationKind::VectorTwoSided, Some(_)) => Ok(()),
            (_, Some(_)) => Err(Error::InvalidArgument("only vector_two_sided takes a vector".into())),
            (DeviationKind::WedgeUpper, None) if d < 2 => {
                Err(Error::InvalidArgument("wedge_upper needs dimension at least 2".into()))
            }
            _ => Ok(()),
        }
    }
}

/// Reference exponents the deviations are measured against. `lambda2` is
/// needed only by [`DeviationKind::WedgeUpper`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LambdaRef {
    pub lambda1: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda2: Option<f64>,
}

impl LambdaRef {
    pub fn top(lambda1: f64) -> Self {
        LambdaRef { lambda1, lambda2: None }
    }

    pub fn pair(lambda1: f64, lambda2: f64) -> Self {
        LambdaRef { lambda1, lambda2: Some(lambda2) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailPoint {
    pub n: usize,
    pub probability: Proportion,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub beta_hat: f64,
    /// Confidence interval of the regression slope (so of `−beta_hat`).
    pub slope_ci: (f64, f64),
    pub r_squared: f64,
    pub points_used: usize,
    pub zero_points_dropped: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailCurve {
    pub event: DeviationEvent,
    pub reference: LambdaRef,
    pub points: Vec<TailPoint>,
    pub trials: usize,
    pub seed: u64,
    pub fit: Option<DecayFit>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit_note: Option<String>,
}

impl TailCurve {
    pub fn ns(&self) -> Vec<usize> {
        self.points.iter().map(|p| p.n).collect()
    }

    pub fn probabilities(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.probability.estimate).collect()
    }
}

/// Regress `log p` on `n` over the points with `p > 0`; `beta_hat = −slope`.
pub fn fit_decay_rate(curve: &TailCurve) -> Result<DecayFit> {
    let nonzero: Vec<&TailPoint> = curve.points.iter().filter(|p| p.probability.estimate > 0.0).collect();
    if nonzero.len() < 4 {
        return Err(Error::InvalidArgument(format!(
            "decay fit needs at least 4 points with nonzero probability, have {}",
            nonzero.len()
        )));
    }
    let xs: Vec<f64> = nonzero.iter().map(|p| p.n as f64).collect();
    let ys: Vec<f64> = nonzero.iter().map(|p| p.probability.estimate.ln()).collect();
    let fit = linear_fit(&xs, &ys).ok_or_else(|| Error::InvalidArgument("degenerate regression design".into()))?;
    Ok(DecayFit {
        beta_hat: -fit.slope,
        slope_ci: fit.slope_ci,
        r_squared: fit.r_squared,
        points_used: nonzero.len(),
        zero_points_dropped: curve.points.len() - nonzero.len(),
    })
}

enum Walker {
    Matrix(ScaledMatrix),
    Vector(ScaledVector),
}

impl Walker {
    fn log_size(&self) -> f64 {
        match self {
            Walker::Matrix(m) => m.log_scale,
            Walker::Vector(v) => v.log_norm,
        }
    }
}

/// Signed statistic whose exceedance of ε is the event: `x − ref` for the
/// upper kinds and `|x − ref|` for the two-sided ones. `stats[t][k]` is trial
/// `t` at `ns[k]`.
fn deviation_statistics(
    cocycle: &Cocycle,
    measure: &MarkovMeasure,
    kind: DeviationKind,
    vector: Option<&ProjectivePoint>,
    reference: LambdaRef,
    ns: &[usize],
    trials: usize,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    let wedge;
    let (walk_cocycle, target) = match kind {
        DeviationKind::WedgeUpper => {
            let l2 = reference
                .lambda2
                .ok_or_else(|| Error::InvalidArgument("wedge_upper needs a lambda2 reference".into()))?;
            wedge = exterior_power(cocycle, 2)?;
            (&wedge, reference.lambda1 + l2)
        }
        _ => (cocycle, reference.lambda1),
    };
    let n_max = *ns.last().expect("ns checked nonempty");
    run_trials(trials, seed, |_, rng| -> Result<Vec<f64>> {
        let word = measure.sample_word(n_max + 1, rng);
        let mut walker = match (kind, vector) {
            (DeviationKind::VectorTwoSided, Some(v)) => Walker::Vector(ScaledVector::new(&v.to_vector())?),
            _ => Walker::Matrix(ScaledMatrix::identity(walk_cocycle.dim())),
        };
        let mut out = Vec::with_capacity(ns.len());
        let mut next = ns.iter().peekable();
        for (step, (a, b)) in word.edges().enumerate() {
            let g = walk_cocycle.matrix(a, b);
            match &mut walker {
                Walker::Matrix(m) => m.left_mul(g)?,
                Walker::Vector(v) => v.left_mul(g)?,
            }
            if next.peek() == Some(&&(step + 1)) {
                let dev = walker.log_size() / (step + 1) as f64 - target;
                out.push(match kind {
                    DeviationKind::NormUpper | DeviationKind::WedgeUpper => dev,
                    DeviationKind::NormTwoSided | DeviationKind::VectorTwoSided => dev.abs(),
                });
                next.next();
            }
        }
        Ok(out)
    })
    .into_iter()
    .collect()
}

fn curve_from_statistics(
    stats: &[Vec<f64>],
    event: DeviationEvent,
    reference: LambdaRef,
    ns: &[usize],
    seed: u64,
) -> TailCurve {
    let trials = stats.len();
    let points = ns
        .iter()
        .enumerate()
        .map(|(k, &n)| {
            let hits = stats.iter().filter(|t| t[k] > event.epsilon).count();
            TailPoint { n, probability: Proportion::wilson(hits as u64, trials as u64) }
        })
        .collect();
    let mut curve = TailCurve { event, reference, points, trials, seed, fit: None, fit_note: None };
    match fit_decay_rate(&curve) {
        Ok(fit) => curve.fit = Some(fit),
        Err(e) => curve.fit_note = Some(e.to_string()),
    }
    curve
}

fn check_inputs(cocycle: &Cocycle, measure: &MarkovMeasure, ns: &[usize], trials: usize) -> Result<()> {
    check_ns(ns)?;
    if trials == 0 {
        return Err(Error::InvalidArgument("trials must be positive".into()));
    }
    cocycle.check_measure(measure)
}

pub fn deviation_tail(
    cocycle: &Cocycle,
    measure: &MarkovMeasure,
    event: &DeviationEvent,
    reference: LambdaRef,
    ns: &[usize],
    trials: usize,
    seed: u64,
) -> Result<TailCurve> {
    Ok(deviation_tails(cocycle, measure, event, &[event.epsilon], reference, ns, trials, seed)?.remove(0))
}

/// One curve per ε in `epsilons`, all from the same sampled trajectories.
#[allow(clippy::too_many_arguments)]
pub fn deviation_tails(
    cocycle: &Cocycle,
    measure: &MarkovMeasure,
    event: &DeviationEvent,
    epsilons: &[f64],
    reference: LambdaRef,
    ns: &[usize],
    trials: usize,
    seed: u64,
) -> Result<Vec<TailCurve>> {
    check_inputs(cocycle, measure, ns, trials)?;
    if epsilons.is_empty() {
        return Err(Error::InvalidArgument("epsilons must be nonempty".into()));
    }
    let events: Vec<DeviationEvent> = epsilons.iter().map(|&epsilon| DeviationEvent { epsilon, ..event.clone() }).collect();
    for e in &events {
        e.validate(cocycle.dim())?;
    }
    let stats = deviation_statistics(cocycle, measure, event.kind, event.vector.as_ref(), reference, ns, trials, seed)?;
    Ok(events.into_iter().map(|e| curve_from_statistics(&stats, e, reference, ns, seed)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cocycle::Mat;
    use crate::gibbs::{equilibrium_markov, EdgePotential};
    use crate::symbolic::ShiftSpace;

    fn synthetic(ps: &[f64]) -> TailCurve {
        TailCurve {
            event: DeviationEvent::new(DeviationKind::NormUpper, 0.1),
            reference: LambdaRef::top(0.0),
            points: ps
                .iter()
                .enumerate()
                .map(|(i, &p)| TailPoint {
                    n: 10 * (i + 1),
                    probability: Proportion { successes: 0, trials: 0, estimate: p, ci_lo: p, ci_hi: p },
                })
                .collect(),
            trials: 0,
            seed: 0,
            fit: None,
            fit_note: None,
        }
    }

    #[test]
    fn exact_exponential_fit() {
        let ps: Vec<f64> = (1..=8).map(|i| (-0.3 * 10.0 * i as f64).exp()).collect();
        let fit = fit_decay_rate(&synthetic(&ps)).unwrap();
        assert!((fit.beta_hat - 0.3).abs() < 1e-6);
    }

    #[test]
    fn constant_probability_fit() {
        let fit = fit_decay_rate(&synthetic(&[0.5; 6])).unwrap();
        assert!(fit.beta_hat.abs() < 1e-12);
        assert!(fit.slope_ci.0 <= 0.0 && 0.0 <= fit.slope_ci.1);
    }

    #[test]
    fn fit_needs_four_nonzero_points() {
        let err = fit_decay_rate(&synthetic(&[0.5, 0.2, 0.1, 0.0, 0.0])).unwrap_err();
        assert!(matches!(err, Error::InvalidArgument(_)));
    }

    #[test]
    fn event_validation() {
        assert!(DeviationEvent::new(DeviationKind::VectorTwoSided, 0.1).validate(2).is_err());
        assert!(DeviationEvent::new(DeviationKind::NormUpper, 0.0).validate(2).is_err());
        assert!(DeviationEvent::new(DeviationKind::WedgeUpper, 0.1).validate(1).is_err());
        let v = ProjectivePoint::axis(2, 0);
        assert!(DeviationEvent::with_vector(DeviationKind::NormUpper, 0.1, v.clone()).validate(2).is_err());
        assert!(DeviationEvent::with_vector(DeviationKind::VectorTwoSided, 0.1, v).validate(3).is_err());
    }

    #[test]
    fn deterministic_diagonal_never_deviates() {
        let full = ShiftSpace::full(2).unwrap();
        let m = equilibrium_markov(&full, &EdgePotential::zero(&full)).unwrap();
        let c = Cocycle::constant(&full, Mat::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 0.5])).unwrap();
        let ev = DeviationEvent::with_vector(DeviationKind::VectorTwoSided, 0.1, ProjectivePoint::axis(2, 0));
        let curve = deviation_tail(&c, &m, &ev, LambdaRef::top(2f64.ln()), &[5, 10, 20], 50, 1).unwrap();
        assert!(curve.probabilities().iter().all(|&p| p == 0.0));
        assert!(curve.fit.is_none() && curve.fit_note.is_some());
        let wedge = DeviationEvent::new(DeviationKind::WedgeUpper, 0.1);
        assert!(deviation_tail(&c, &m, &wedge, LambdaRef::top(2f64.ln()), &[5], 10, 1).is_err());
        let curve = deviation_tail(&c, &m, &wedge, LambdaRef::pair(2f64.ln(), -2f64.ln()), &[5, 10], 50, 1).unwrap();
        assert!(curve.probabilities().iter().all(|&p| p == 0.0));
    }
}
