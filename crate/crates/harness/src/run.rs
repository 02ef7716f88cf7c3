//! Dispatch from a validated config to the library, producing a [`RunResult`].

use cocycle_lab::cocycle::{exterior_power, Mat, ProjectivePoint};
use cocycle_lab::deviations::{deviation_tail, DeviationEvent, DeviationKind, LambdaRef, TailCurve};
use cocycle_lab::geometry::{
    almost_independence_with, bq_implication_check, exact_independence, hyperplane_avoidance_curve,
    image_alignment_curve, u_s_separation_curve, u_stabilization_curve, BqCheckReport, ExactIndependence,
    GeometryCurve, IndependenceEstimate, Threshold,
};
use cocycle_lab::gibbs::{correlation_decay, CorrelationCurve, MarkovMeasure};
use cocycle_lab::irreducibility::{check_exterior_powers, find_invariant_family, ExteriorReport, IrreducibilityReport};
use cocycle_lab::lyapunov::{
    exact_log_det_average, limsup_liminf_diagnostic, lyapunov_spectrum, rho_growth_curve, GrowthCurve,
    LimsupDiagnostic, LyapunovEstimate,
};
use cocycle_lab::rng::{derive_seed, stream_rng};
use cocycle_lab::symbolic::{Word, DEFAULT_WORD_CAP};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{
    unit_point, Experiment, ExperimentConfig, GeometryParams, GeometryProbe, LdeParams, MeasureParams, Model,
    RhoGrowthParams, SpectrumParams,
};
use crate::error::{Context, HarnessError};

pub const RESULT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub schema_version: u32,
    pub artifact_version: String,
    /// SHA-256 of the compact JSON echo of `config`.
    pub config_hash: String,
    pub config: ExperimentConfig,
    pub payload: Payload,
    pub discards: DiscardSummary,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct DiscardSummary {
    /// Samples dropped as degenerate (non-unique top direction or non-finite accumulation).
    pub discarded: usize,
    pub total: usize,
}

impl DiscardSummary {
    fn add(&mut self, discarded: usize, total: usize) {
        self.discarded += discarded;
        self.total += total;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Payload {
    Validate(ValidatePayload),
    Measure(MeasurePayload),
    Lyapunov(LyapunovPayload),
    RhoGrowth(RhoGrowthPayload),
    Lde(LdePayload),
    Geometry(GeometryPayload),
    Irreducibility(IrreducibilityPayload),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidatePayload {
    pub q: usize,
    pub edges: usize,
    pub primitivity_exponent: usize,
    pub d: usize,
    pub log_pressure: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CylinderEntry {
    pub word: Word,
    pub measure: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurePayload {
    pub measure: MarkovMeasure,
    pub cylinders: Vec<CylinderEntry>,
    pub correlation: Option<CorrelationCurve>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LyapunovPayload {
    pub estimate: LyapunovEstimate,
    /// Exact `∫ log|det A| dμ`, the value of `Σ λ_j`.
    pub exact_log_det_average: f64,
    /// Spectrum of `Λ²A` on the same trajectories; its top entry estimates `λ₁ + λ₂`.
    pub exterior: Option<LyapunovEstimate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HorizonDiagnostic {
    pub horizon: usize,
    pub diagnostic: LimsupDiagnostic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RhoGrowthPayload {
    pub spectrum: LyapunovEstimate,
    pub curve: GrowthCurve,
    pub diagnostic: LimsupDiagnostic,
    pub horizons: Vec<HorizonDiagnostic>,
    /// Fraction of trajectories with `|n⁻¹ log ρ − λ̂₁| ≤ tolerance` at the largest n.
    pub converged_fraction: f64,
    pub norm_converged_fraction: f64,
    pub tolerance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReferenceSource {
    Config,
    Estimated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LdePayload {
    pub reference: LambdaRef,
    pub reference_source: ReferenceSource,
    pub spectrum: Option<LyapunovEstimate>,
    pub curves: Vec<TailCurve>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "result", rename_all = "snake_case")]
pub enum GeometryResult {
    Curve(GeometryCurve),
    Independence {
        estimate: IndependenceEstimate,
        exact: Option<ExactIndependence>,
    },
    BqCheck {
        dim: usize,
        report: BqCheckReport,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeometryPayload {
    /// `λ₁ − λ₂` used for default thresholds.
    pub gap: Option<f64>,
    pub gap_source: Option<ReferenceSource>,
    pub spectrum: Option<LyapunovEstimate>,
    pub results: Vec<GeometryResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IrreducibilityPayload {
    pub reports: Vec<IrreducibilityReport>,
    pub exterior: Option<Vec<ExteriorReport>>,
}

/// Seed streams: the main experiment uses the config seed, auxiliary
/// estimates use derived seeds.
const SPECTRUM_SEED: u64 = 1;
const PROBE_SEED_BASE: u64 = 100;

pub fn config_hash(config: &ExperimentConfig) -> String {
    let canonical = serde_json::to_vec(config).expect("config serializes");
    hex::encode(Sha256::digest(&canonical))
}

fn spectrum(model: &Model, p: &SpectrumParams, seed: u64) -> Result<LyapunovEstimate, HarnessError> {
    lyapunov_spectrum(&model.cocycle, &model.measure, p.n, p.trials, derive_seed(seed, SPECTRUM_SEED))
        .context("reference spectrum estimate")
}

pub fn run_experiment(config: &ExperimentConfig) -> Result<RunResult, HarnessError> {
    let model = config.build_model()?;
    let seed = config.seed;
    let mut discards = DiscardSummary::default();
    let payload = match &config.experiment {
        Experiment::Validate => Payload::Validate(ValidatePayload {
            q: model.shift.q(),
            edges: model.shift.edge_count(),
            primitivity_exponent: model.shift.primitivity_exponent(),
            d: model.cocycle.dim(),
            log_pressure: model.measure.log_pressure,
        }),
        Experiment::Measure(p) => Payload::Measure(run_measure(&model, p, seed)?),
        Experiment::Lyapunov(p) => {
            let estimate = lyapunov_spectrum(&model.cocycle, &model.measure, p.n, p.trials, seed).context("lyapunov")?;
            discards.add(estimate.failed_trials.len(), estimate.trials);
            let exterior = if p.exterior_check && model.cocycle.dim() >= 2 {
                let wedge = exterior_power(&model.cocycle, 2).context("exterior power")?;
                Some(lyapunov_spectrum(&wedge, &model.measure, p.n, p.trials, seed).context("exterior spectrum")?)
            } else {
                None
            };
            Payload::Lyapunov(LyapunovPayload {
                exact_log_det_average: exact_log_det_average(&model.cocycle, &model.measure),
                estimate,
                exterior,
            })
        }
        Experiment::RhoGrowth(p) => Payload::RhoGrowth(run_rho_growth(&model, p, seed)?),
        Experiment::Lde(p) => Payload::Lde(run_lde(&model, p, seed, &mut discards)?),
        Experiment::Geometry(p) => Payload::Geometry(run_geometry(&model, p, seed, &mut discards)?),
        Experiment::Irreducibility(p) => {
            let d = model.cocycle.dim();
            let ls: Vec<usize> = if p.l.is_empty() { (1..d).collect() } else { p.l.clone() };
            let reports = ls
                .iter()
                .map(|&l| {
                    find_invariant_family(&model.cocycle, l, p.m_max, p.cycle_length_bound, p.tol)
                        .context(&format!("invariant family search (l={l})"))
                })
                .collect::<Result<Vec<_>, _>>()?;
            let exterior = p
                .exterior
                .then(|| check_exterior_powers(&model.cocycle, p.m_max, p.cycle_length_bound, p.tol))
                .transpose()
                .context("exterior power search")?;
            Payload::Irreducibility(IrreducibilityPayload { reports, exterior })
        }
    };
    Ok(RunResult {
        schema_version: RESULT_SCHEMA_VERSION,
        artifact_version: env!("CARGO_PKG_VERSION").to_string(),
        config_hash: config_hash(config),
        config: config.clone(),
        payload,
        discards,
    })
}

fn run_measure(model: &Model, p: &MeasureParams, seed: u64) -> Result<MeasurePayload, HarnessError> {
    let words = model.shift.enumerate_words(p.cylinder_length, DEFAULT_WORD_CAP).context("cylinder table")?;
    let cylinders =
        words.into_iter().map(|w| CylinderEntry { measure: model.measure.cylinder_measure(&w), word: w }).collect();
    let correlation = p
        .correlation
        .as_ref()
        .map(|c| {
            correlation_decay(
                &model.measure,
                &model.shift,
                &Word::new(c.f.clone()),
                &Word::new(c.g.clone()),
                &c.gaps,
                c.trials,
                seed,
            )
        })
        .transpose()
        .context("correlation decay")?;
    Ok(MeasurePayload { measure: model.measure.clone(), cylinders, correlation })
}

fn run_rho_growth(model: &Model, p: &RhoGrowthParams, seed: u64) -> Result<RhoGrowthPayload, HarnessError> {
    let spectrum = spectrum(model, &p.spectrum, seed)?;
    let curve = rho_growth_curve(&model.cocycle, &model.measure, &p.ns, p.trials, seed).context("rho growth")?;
    let diagnostic = limsup_liminf_diagnostic(&curve, p.tail_fraction).context("limsup diagnostic")?;
    let horizons = p
        .horizons
        .iter()
        .map(|&h| {
            Ok(HorizonDiagnostic {
                horizon: h,
                diagnostic: limsup_liminf_diagnostic(&curve.truncated(h), p.tail_fraction)
                    .context("limsup diagnostic")?,
            })
        })
        .collect::<Result<Vec<_>, HarnessError>>()?;
    let lambda1 = spectrum.lambdas[0];
    let within = |rows: &[Vec<f64>]| {
        rows.iter().filter(|t| (t.last().expect("nonempty") - lambda1).abs() <= p.tolerance).count() as f64
            / rows.len() as f64
    };
    Ok(RhoGrowthPayload {
        converged_fraction: within(&curve.rho),
        norm_converged_fraction: within(&curve.norm),
        tolerance: p.tolerance,
        spectrum,
        curve,
        diagnostic,
        horizons,
    })
}

fn run_lde(model: &Model, p: &LdeParams, seed: u64, discards: &mut DiscardSummary) -> Result<LdePayload, HarnessError> {
    let d = model.cocycle.dim();
    let needs_l2 = p.kinds.contains(&DeviationKind::WedgeUpper);
    let (reference, reference_source, spectrum) = match (p.lambda1, p.lambda2) {
        (Some(l1), l2) if l2.is_some() || !needs_l2 => (LambdaRef { lambda1: l1, lambda2: l2 }, ReferenceSource::Config, None),
        _ => {
            let s = spectrum(model, &p.spectrum, seed)?;
            discards.add(s.failed_trials.len(), s.trials);
            let r = LambdaRef { lambda1: s.lambdas[0], lambda2: s.lambdas.get(1).copied() };
            (r, ReferenceSource::Estimated, Some(s))
        }
    };
    let vector = match &p.vector {
        Some(v) => unit_point(v, d, "experiment.vector")?,
        None => ProjectivePoint::axis(d, 0),
    };
    let curves = p
        .kinds
        .iter()
        .map(|&kind| {
            let event = if kind == DeviationKind::VectorTwoSided {
                DeviationEvent::with_vector(kind, p.epsilon, vector.clone())
            } else {
                DeviationEvent::new(kind, p.epsilon)
            };
            deviation_tail(&model.cocycle, &model.measure, &event, reference, &p.ns, p.trials, seed)
                .context(&format!("deviation tail ({kind:?})"))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(LdePayload { reference, reference_source, spectrum, curves })
}

fn gaussian_matrices(dim: usize, count: usize, seed: u64) -> Vec<Mat> {
    let mut rng = stream_rng(seed, 0);
    (0..count).map(|_| Mat::from_fn(dim, dim, |_, _| StandardNormal.sample(&mut rng))).collect()
}

fn run_geometry(
    model: &Model,
    p: &GeometryParams,
    seed: u64,
    discards: &mut DiscardSummary,
) -> Result<GeometryPayload, HarnessError> {
    let (c, m) = (&model.cocycle, &model.measure);
    let d = c.dim();
    let (gap, gap_source, spectrum) = match p.gap {
        Some(g) => (Some(g), Some(ReferenceSource::Config), None),
        None if p.probes.iter().any(GeometryProbe::needs_gap) => {
            let s = spectrum(model, &p.spectrum, seed)?;
            let g = s.lambdas[0] - s.lambdas[1];
            if !(g > 0.0) {
                return Err(HarnessError::Config(format!(
                    "estimated gap λ̂₁ − λ̂₂ = {g} is not positive; give alpha/eps explicitly"
                )));
            }
            (Some(g), Some(ReferenceSource::Estimated), Some(s))
        }
        None => (None, None, None),
    };
    let default = |x: Option<f64>, div: f64| x.unwrap_or_else(|| gap.expect("gap resolved when needed") / div);
    let mut results = Vec::with_capacity(p.probes.len());
    for (i, probe) in p.probes.iter().enumerate() {
        let s = derive_seed(seed, PROBE_SEED_BASE + i as u64);
        let ctx = format!("geometry probe {i}");
        let result = match probe {
            GeometryProbe::ImageAlignment { v, alpha } => {
                let v = unit_point(v, d, "v")?;
                GeometryResult::Curve(image_alignment_curve(c, m, &v, default(*alpha, 2.0), &p.ns, p.trials, s).context(&ctx)?)
            }
            GeometryProbe::UStabilization { mode, alpha } => GeometryResult::Curve(
                u_stabilization_curve(c, m, *mode, default(*alpha, 10.0), &p.ns, p.trials, s).context(&ctx)?,
            ),
            GeometryProbe::HyperplaneAvoidance { w, eps } => {
                let w = unit_point(w, d, "w")?;
                GeometryResult::Curve(
                    hyperplane_avoidance_curve(c, m, &w, default(*eps, 21.0), &p.ns, p.trials, s).context(&ctx)?,
                )
            }
            GeometryProbe::UsSeparation { eps } => {
                GeometryResult::Curve(u_s_separation_curve(c, m, default(*eps, 21.0), &p.ns, p.trials, s).context(&ctx)?)
            }
            GeometryProbe::AlmostIndependence { n, eps, radius, exact } => {
                let threshold = match radius {
                    Some(r) => Threshold::Constant { radius: *r },
                    None => Threshold::exp(3.0, 3.0 * default(*eps, 21.0)),
                };
                let estimate = almost_independence_with(c, m, threshold, *n, p.trials, s).context(&ctx)?;
                discards.add(estimate.discarded, p.trials);
                let exact = exact
                    .then(|| exact_independence(c, m, threshold, *n, DEFAULT_WORD_CAP))
                    .transpose()
                    .context(&ctx)?;
                GeometryResult::Independence { estimate, exact }
            }
            GeometryProbe::BqCheck { samples, dims } => {
                for (k, &dim) in dims.iter().enumerate() {
                    let mats = gaussian_matrices(dim, *samples, derive_seed(s, k as u64));
                    let report = bq_implication_check(&mats).context(&ctx)?;
                    results.push(GeometryResult::BqCheck { dim, report });
                }
                continue;
            }
        };
        if let GeometryResult::Curve(curve) = &result {
            for pt in &curve.points {
                discards.add(pt.discarded, curve.trials);
            }
        }
        results.push(result);
    }
    Ok(GeometryPayload { gap, gap_source, spectrum, results })
}
