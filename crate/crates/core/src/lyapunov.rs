//! Lyapunov spectrum, spectral-radius growth curves, the ξ direction and
//! limsup/liminf diagnostics.

use serde::{Deserialize, Serialize};

use crate::cocycle::{
    cocycle_product, gap_distance, log_spectral_radius, point_to_hyperplane_distance, singular_data, Cocycle, Mat,
    ProjectivePoint, ScaledMatrix,
};
use crate::gibbs::MarkovMeasure;
use crate::rng::run_trials;
use crate::stats::{mean_and_se, median, Quantiles};
use crate::symbolic::Word;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LyapunovEstimate {
    /// Descending.
    pub lambdas: Vec<f64>,
    pub std_errors: Vec<f64>,
    /// `Σ λ_j` and its standard error over trials.
    pub sum: f64,
    pub sum_std_error: f64,
    pub n: usize,
    pub trials: usize,
    pub seed: u64,
    /// Trials whose accumulation became non-finite; excluded from the means.
    pub failed_trials: Vec<usize>,
}

/// `Σ_{(a,b)} π[a] Q[a][b] log|det A(a, b)|`, the exact value of `Σ λ_j`.
pub fn exact_log_det_average(cocycle: &Cocycle, measure: &MarkovMeasure) -> f64 {
    cocycle
        .edge_matrices()
        .map(|((a, b), g)| {
            let w = measure.stationary[a] * measure.transition[a][b];
            if w == 0.0 {
                0.0
            } else {
                w * g.determinant().abs().ln()
            }
        })
        .sum()
}

/// Per-step QR reframing: returns `n⁻¹ Σ log|R_ii|` for each diagonal slot.
fn qr_exponents(cocycle: &Cocycle, word: &Word) -> Option<Vec<f64>> {
    let d = cocycle.dim();
    let mut frame = Mat::identity(d, d);
    let mut logs = vec![0.0; d];
    for (a, b) in word.edges() {
        let g = cocycle.matrix(a, b);
        // scale out the entry size so the Householder norms cannot overflow
        let scale = g.amax();
        let qr = (g * &frame / scale).qr();
        let r = qr.r();
        for (i, acc) in logs.iter_mut().enumerate() {
            *acc += r[(i, i)].abs().ln() + scale.ln();
        }
        frame = qr.q();
    }
    let n = word.edge_count() as f64;
    let out: Vec<f64> = logs.into_iter().map(|l| l / n).collect();
    out.iter().all(|x| x.is_finite()).then_some(out)
}

pub fn lyapunov_spectrum(
    cocycle: &Cocycle,
    measure: &MarkovMeasure,
    n: usize,
    trials: usize,
    seed: u64,
) -> Result<LyapunovEstimate> {
    if n < 10 {
        return Err(Error::InvalidArgument(format!("lyapunov_spectrum needs n >= 10, got {n}")));
    }
    if trials == 0 {
        return Err(Error::InvalidArgument("trials must be positive".into()));
    }
    cocycle.check_measure(measure)?;
    let per_trial = run_trials(trials, seed, |_, rng| qr_exponents(cocycle, &measure.sample_word(n + 1, rng)));
    let failed_trials: Vec<usize> = per_trial.iter().enumerate().filter(|(_, r)| r.is_none()).map(|(i, _)| i).collect();
    let ok: Vec<Vec<f64>> = per_trial.into_iter().flatten().collect();
    if ok.is_empty() {
        return Err(Error::NonFinite("spectrum estimate (every trial degenerated)".into()));
    }
    let d = cocycle.dim();
    // Average slot-wise first and sort the means afterwards: sorting each
    // trial would bias near-equal exponents apart.
    let mut slots: Vec<(f64, f64)> = (0..d)
        .map(|i| mean_and_se(&ok.iter().map(|t| t[i]).collect::<Vec<_>>()))
        .collect();
    slots.sort_by(|x, y| y.0.total_cmp(&x.0));
    let (sum, sum_std_error) = mean_and_se(&ok.iter().map(|t| t.iter().sum()).collect::<Vec<f64>>());
    Ok(LyapunovEstimate {
        lambdas: slots.iter().map(|s| s.0).collect(),
        std_errors: slots.iter().map(|s| s.1).collect(),
        sum,
        sum_std_error,
        n,
        trials,
        seed,
        failed_trials,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowthSummary {
    pub n: usize,
    pub rho: Quantiles,
    pub norm: Quantiles,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowthCurve {
    pub ns: Vec<usize>,
    /// `rho[t][k] = n_k⁻¹ log ρ(A⁽ⁿᵏ⁾)` along trajectory `t`.
    pub rho: Vec<Vec<f64>>,
    /// `norm[t][k] = n_k⁻¹ log‖A⁽ⁿᵏ⁾‖`.
    pub norm: Vec<Vec<f64>>,
    pub summary: Vec<GrowthSummary>,
    pub trials: usize,
    pub seed: u64,
}

fn summarize(ns: &[usize], rho: &[Vec<f64>], norm: &[Vec<f64>]) -> Vec<GrowthSummary> {
    ns.iter()
        .enumerate()
        .map(|(k, &n)| GrowthSummary {
            n,
            rho: Quantiles::of(&rho.iter().map(|t| t[k]).collect::<Vec<_>>()),
            norm: Quantiles::of(&norm.iter().map(|t| t[k]).collect::<Vec<_>>()),
        })
        .collect()
}

impl GrowthCurve {
    /// The same trajectories restricted to `n ≤ max_n`.
    pub fn truncated(&self, max_n: usize) -> GrowthCurve {
        let keep = self.ns.iter().take_while(|&&n| n <= max_n).count();
        let ns = self.ns[..keep].to_vec();
        let rho: Vec<Vec<f64>> = self.rho.iter().map(|t| t[..keep].to_vec()).collect();
        let norm: Vec<Vec<f64>> = self.norm.iter().map(|t| t[..keep].to_vec()).collect();
        let summary = summarize(&ns, &rho, &norm);
        GrowthCurve { ns, rho, norm, summary, trials: self.trials, seed: self.seed }
    }
}

pub(crate) fn check_ns(ns: &[usize]) -> Result<()> {
    if ns.is_empty() {
        return Err(Error::InvalidArgument("ns must be nonempty".into()));
    }
    if ns[0] == 0 || ns.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument("ns must be positive and strictly ascending".into()));
    }
    Ok(())
}

pub fn rho_growth_curve(
    cocycle: &Cocycle,
    measure: &MarkovMeasure,
    ns: &[usize],
    trials: usize,
    seed: u64,
) -> Result<GrowthCurve> {
    check_ns(ns)?;
    if trials == 0 {
        return Err(Error::InvalidArgument("trials must be positive".into()));
    }
    cocycle.check_measure(measure)?;
    let n_max = *ns.last().expect("ns checked nonempty");
    let per_trial = run_trials(trials, seed, |_, rng| -> Result<(Vec<f64>, Vec<f64>)> {
        let word = measure.sample_word(n_max + 1, rng);
        let mut acc = ScaledMatrix::identity(cocycle.dim());
        let (mut rho, mut norm) = (Vec::with_capacity(ns.len()), Vec::with_capacity(ns.len()));
        let mut next = ns.iter().peekable();
        for (step, (a, b)) in word.edges().enumerate() {
            acc.left_mul(cocycle.matrix(a, b))?;
            if next.peek() == Some(&&(step + 1)) {
                let n = (step + 1) as f64;
                rho.push(log_spectral_radius(&acc)? / n);
                norm.push(acc.log_scale / n);
                next.next();
            }
        }
        Ok((rho, norm))
    });
    let (mut rho, mut norm) = (Vec::with_capacity(trials), Vec::with_capacity(trials));
    for r in per_trial {
        let (a, b) = r?;
        rho.push(a);
        norm.push(b);
    }
    let summary = summarize(ns, &rho, &norm);
    Ok(GrowthCurve { ns: ns.to_vec(), rho, norm, summary, trials, seed })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailExtremes {
    pub max: f64,
    pub min: f64,
    pub gap: f64,
}

impl TailExtremes {
    fn of(values: &[f64]) -> Self {
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        TailExtremes { max, min, gap: max - min }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimsupDiagnostic {
    /// The tail window `ns[start..]`.
    pub window: Vec<usize>,
    /// Extremes of `n⁻¹ log ρ` per trajectory over the window.
    pub rho: Vec<TailExtremes>,
    /// The same for `n⁻¹ log‖·‖`, for contrast.
    pub norm: Vec<TailExtremes>,
    pub median_gap: f64,
    pub median_norm_gap: f64,
}

pub fn limsup_liminf_diagnostic(curve: &GrowthCurve, tail_fraction: f64) -> Result<LimsupDiagnostic> {
    if !(tail_fraction > 0.0 && tail_fraction <= 1.0) {
        return Err(Error::InvalidArgument(format!("tail_fraction must be in (0, 1], got {tail_fraction}")));
    }
    let len = curve.ns.len();
    let count = ((tail_fraction * len as f64).ceil() as usize).clamp(1, len.max(1));
    if len == 0 {
        return Err(Error::InvalidArgument("tail window is empty".into()));
    }
    let start = len - count;
    let rho: Vec<TailExtremes> = curve.rho.iter().map(|t| TailExtremes::of(&t[start..])).collect();
    let norm: Vec<TailExtremes> = curve.norm.iter().map(|t| TailExtremes::of(&t[start..])).collect();
    Ok(LimsupDiagnostic {
        window: curve.ns[start..].to_vec(),
        median_gap: median(&rho.iter().map(|e| e.gap).collect::<Vec<_>>()),
        median_norm_gap: median(&norm.iter().map(|e| e.gap).collect::<Vec<_>>()),
        rho,
        norm,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct XiSample {
    /// Master seed and trial index when the word was sampled here.
    pub seed: Option<u64>,
    pub trial: Option<usize>,
    pub n: usize,
    pub xi: ProjectivePoint,
    pub degenerate_top: bool,
}

/// First right singular direction of `A⁽ⁿ⁾` along the word.
pub fn xi_direction(cocycle: &Cocycle, trajectory: &Word) -> Result<XiSample> {
    let sd = singular_data(&cocycle_product(cocycle, trajectory)?)?;
    Ok(XiSample { seed: None, trial: None, n: trajectory.edge_count(), xi: sd.s_normal, degenerate_top: sd.degenerate_top })
}

/// ξ at length `n` for `trials` independent stationary trajectories.
pub fn xi_samples(
    cocycle: &Cocycle,
    measure: &MarkovMeasure,
    n: usize,
    trials: usize,
    seed: u64,
) -> Result<Vec<XiSample>> {
    cocycle.check_measure(measure)?;
    run_trials(trials, seed, |t, rng| {
        let mut s = xi_direction(cocycle, &measure.sample_word(n + 1, rng))?;
        s.seed = Some(seed);
        s.trial = Some(t);
        Ok(s)
    })
    .into_iter()
    .collect()
}

/// Median of `d(ξ at n, ξ at 2n)` on shared trajectories, non-degenerate samples only.
pub fn xi_stabilization(
    cocycle: &Cocycle,
    measure: &MarkovMeasure,
    n: usize,
    trials: usize,
    seed: u64,
) -> Result<f64> {
    cocycle.check_measure(measure)?;
    let dists: Vec<Option<f64>> = run_trials(trials, seed, |_, rng| -> Result<Option<f64>> {
        let word = measure.sample_word(2 * n + 1, rng);
        let short = xi_direction(cocycle, &word.edge_window(0, n))?;
        let long = xi_direction(cocycle, &word)?;
        Ok((!short.degenerate_top && !long.degenerate_top).then(|| gap_distance(&short.xi, &long.xi)))
    })
    .into_iter()
    .collect::<Result<_>>()?;
    let kept: Vec<f64> = dists.into_iter().flatten().collect();
    Ok(median(&kept))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperplaneMass {
    pub normal: ProjectivePoint,
    pub radius: f64,
    pub mass: f64,
    pub counted: usize,
    pub discarded: usize,
}

/// Fraction of non-degenerate ξ samples within gap distance `radius` of each
/// hyperplane `normal⊥`.
pub fn hyperplane_mass_probe(
    samples: &[XiSample],
    normals: &[ProjectivePoint],
    radius: f64,
) -> Result<Vec<HyperplaneMass>> {
    if !(radius > 0.0) {
        return Err(Error::InvalidArgument(format!("radius must be positive, got {radius}")));
    }
    let kept: Vec<&XiSample> = samples.iter().filter(|s| !s.degenerate_top).collect();
    let discarded = samples.len() - kept.len();
    normals
        .iter()
        .map(|normal| {
            if kept.iter().any(|s| s.xi.dim() != normal.dim()) {
                return Err(Error::InvalidArgument("normal and samples differ in dimension".into()));
            }
            let hits = kept.iter().filter(|s| point_to_hyperplane_distance(&s.xi, normal) <= radius).count();
            let mass = if kept.is_empty() { 0.0 } else { hits as f64 / kept.len() as f64 };
            Ok(HyperplaneMass { normal: normal.clone(), radius, mass, counted: kept.len(), discarded })
        })
        .collect()
}
