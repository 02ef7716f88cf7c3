//! Experiment configuration: schema, parsing with field diagnostics, and
//! construction of the model objects.
//!
//! Parsing materializes every default, so the serialized form of a parsed
//! config (the echo stored in `result.json`) parses back to the same value.

use std::collections::BTreeMap;

use cocycle_lab::cocycle::{mat_from_rows, Cocycle, Mat, ProjectivePoint};
use cocycle_lab::deviations::DeviationKind;
use cocycle_lab::geometry::IncrementMode;
use cocycle_lab::gibbs::{equilibrium_markov, EdgePotential, MarkovMeasure};
use cocycle_lab::symbolic::ShiftSpace;
use serde::{Deserialize, Serialize};

use crate::error::{Context, HarnessError};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: u32,
    pub seed: u64,
    pub shift: ShiftSpec,
    #[serde(default)]
    pub potential: PotentialSpec,
    pub cocycle: CocycleSpec,
    pub experiment: Experiment,
    #[serde(default)]
    pub output: OutputSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShiftSpec {
    #[serde(default)]
    pub q: Option<usize>,
    pub adjacency: Vec<Vec<u8>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdgeValue {
    pub from: usize,
    pub to: usize,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum PotentialSpec {
    #[default]
    Zero,
    /// `φ(a, b) = log p_b`.
    Bernoulli { p: Vec<f64> },
    Edges { values: Vec<EdgeValue> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdgeMatrix {
    pub from: usize,
    pub to: usize,
    /// Row-major: `matrix[i]` is row `i`.
    pub matrix: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum CocycleSpec {
    Identity { d: usize },
    Constant { matrix: Vec<Vec<f64>> },
    Edges {
        #[serde(default)]
        d: Option<usize>,
        edges: Vec<EdgeMatrix>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default = "default_output_dir")]
    pub dir: String,
    #[serde(default = "default_true")]
    pub csv: bool,
}

impl Default for OutputSpec {
    fn default() -> Self {
        OutputSpec { dir: default_output_dir(), csv: true }
    }
}

fn default_output_dir() -> String {
    "out".into()
}

fn default_true() -> bool {
    true
}

/// Deserialized by hand: serde's internally tagged enums buffer their
/// content and lose the field path of errors inside the parameters.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Experiment {
    Validate,
    Measure(MeasureParams),
    Lyapunov(LyapunovParams),
    RhoGrowth(RhoGrowthParams),
    Lde(LdeParams),
    Geometry(GeometryParams),
    Irreducibility(IrreducibilityParams),
}

impl Experiment {
    pub fn kind(&self) -> &'static str {
        match self {
            Experiment::Validate => "validate",
            Experiment::Measure(_) => "measure",
            Experiment::Lyapunov(_) => "lyapunov",
            Experiment::RhoGrowth(_) => "rho-growth",
            Experiment::Lde(_) => "lde",
            Experiment::Geometry(_) => "geometry",
            Experiment::Irreducibility(_) => "irreducibility",
        }
    }
}

fn params<T: serde::de::DeserializeOwned>(body: serde_json::Value) -> Result<T, String> {
    serde_path_to_error::deserialize(body).map_err(|e| {
        let path = e.path().to_string();
        if path == "." {
            e.into_inner().to_string()
        } else {
            format!("{path}: {}", e.into_inner())
        }
    })
}

impl<'de> Deserialize<'de> for Experiment {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        use serde::de::Error;
        let mut body = serde_json::Map::deserialize(d)?;
        let kind = match body.remove("kind") {
            Some(serde_json::Value::String(k)) => k,
            Some(other) => return Err(D::Error::custom(format!("kind: expected a string, got {other}"))),
            None => return Err(D::Error::missing_field("kind")),
        };
        let body = serde_json::Value::Object(body);
        let parsed = match kind.as_str() {
            "validate" => match body.as_object().and_then(|m| m.keys().next()) {
                Some(k) => Err(format!("unknown field `{k}` for kind validate")),
                None => Ok(Experiment::Validate),
            },
            "measure" => params(body).map(Experiment::Measure),
            "lyapunov" => params(body).map(Experiment::Lyapunov),
            "rho-growth" => params(body).map(Experiment::RhoGrowth),
            "lde" => params(body).map(Experiment::Lde),
            "geometry" => params(body).map(Experiment::Geometry),
            "irreducibility" => params(body).map(Experiment::Irreducibility),
            other => {
                return Err(D::Error::unknown_variant(
                    other,
                    &["validate", "measure", "lyapunov", "rho-growth", "lde", "geometry", "irreducibility"],
                ))
            }
        };
        parsed.map_err(D::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorrelationParams {
    pub f: Vec<usize>,
    pub g: Vec<usize>,
    pub gaps: Vec<usize>,
    pub trials: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasureParams {
    /// Cylinder measures are tabulated for every word of this many symbols.
    #[serde(default = "default_cylinder_length")]
    pub cylinder_length: usize,
    #[serde(default)]
    pub correlation: Option<CorrelationParams>,
}

fn default_cylinder_length() -> usize {
    2
}

/// Length and trial count of a spectrum estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectrumParams {
    pub n: usize,
    pub trials: usize,
}

impl Default for SpectrumParams {
    fn default() -> Self {
        SpectrumParams { n: 2000, trials: 200 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LyapunovParams {
    #[serde(default = "default_lyapunov_n")]
    pub n: usize,
    #[serde(default = "default_trials")]
    pub trials: usize,
    /// Also estimate the top exponent of `Λ²A` as a cross-check.
    #[serde(default)]
    pub exterior_check: bool,
}

fn default_lyapunov_n() -> usize {
    1000
}

fn default_trials() -> usize {
    100
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RhoGrowthParams {
    pub ns: Vec<usize>,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default = "default_tail_fraction")]
    pub tail_fraction: f64,
    /// Each horizon `N` gets a diagnostic over the curve truncated to `n ≤ N`.
    #[serde(default)]
    pub horizons: Vec<usize>,
    /// Band around `λ̂₁` used for the fraction of converged trajectories.
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    #[serde(default)]
    pub spectrum: SpectrumParams,
}

fn default_tail_fraction() -> f64 {
    0.5
}

fn default_tolerance() -> f64 {
    0.05
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LdeParams {
    pub ns: Vec<usize>,
    #[serde(default = "default_lde_trials")]
    pub trials: usize,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "all_kinds")]
    pub kinds: Vec<DeviationKind>,
    /// Used by `vector_two_sided`; defaults to the first axis.
    #[serde(default)]
    pub vector: Option<Vec<f64>>,
    /// Reference exponents; estimated from `spectrum` when absent.
    #[serde(default)]
    pub lambda1: Option<f64>,
    #[serde(default)]
    pub lambda2: Option<f64>,
    #[serde(default)]
    pub spectrum: SpectrumParams,
}

fn default_lde_trials() -> usize {
    1000
}

fn default_epsilon() -> f64 {
    0.1
}

fn all_kinds() -> Vec<DeviationKind> {
    vec![
        DeviationKind::NormUpper,
        DeviationKind::NormTwoSided,
        DeviationKind::VectorTwoSided,
        DeviationKind::WedgeUpper,
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "probe", rename_all = "snake_case", deny_unknown_fields)]
pub enum GeometryProbe {
    /// `alpha` defaults to `(λ̂₁ − λ̂₂)/2`.
    ImageAlignment {
        v: Vec<f64>,
        #[serde(default)]
        alpha: Option<f64>,
    },
    /// `alpha` defaults to `(λ̂₁ − λ̂₂)/10`.
    UStabilization {
        mode: IncrementMode,
        #[serde(default)]
        alpha: Option<f64>,
    },
    /// `eps` defaults to `(λ̂₁ − λ̂₂)/21`.
    HyperplaneAvoidance {
        w: Vec<f64>,
        #[serde(default)]
        eps: Option<f64>,
    },
    UsSeparation {
        #[serde(default)]
        eps: Option<f64>,
    },
    AlmostIndependence {
        n: usize,
        #[serde(default)]
        eps: Option<f64>,
        /// Constant threshold radius in place of `3e^{−3εn}`.
        #[serde(default)]
        radius: Option<f64>,
        /// Also compute the exact values by enumeration.
        #[serde(default)]
        exact: bool,
    },
    /// Fuzzed Gaussian matrices through the pointwise inequality suite.
    BqCheck { samples: usize, dims: Vec<usize> },
}

impl GeometryProbe {
    pub fn needs_gap(&self) -> bool {
        match self {
            GeometryProbe::ImageAlignment { alpha, .. } | GeometryProbe::UStabilization { alpha, .. } => alpha.is_none(),
            GeometryProbe::HyperplaneAvoidance { eps, .. }
            | GeometryProbe::UsSeparation { eps } => eps.is_none(),
            GeometryProbe::AlmostIndependence { eps, radius, .. } => eps.is_none() && radius.is_none(),
            GeometryProbe::BqCheck { .. } => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryParams {
    #[serde(default)]
    pub ns: Vec<usize>,
    #[serde(default = "default_lde_trials")]
    pub trials: usize,
    pub probes: Vec<GeometryProbe>,
    /// Reference gap `λ₁ − λ₂` for default thresholds; estimated when absent.
    #[serde(default)]
    pub gap: Option<f64>,
    #[serde(default)]
    pub spectrum: SpectrumParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IrreducibilityParams {
    /// Subspace dimensions searched; all of `1..d` when empty.
    #[serde(default)]
    pub l: Vec<usize>,
    #[serde(default = "default_m_max")]
    pub m_max: usize,
    #[serde(default = "default_cycle_bound")]
    pub cycle_length_bound: usize,
    #[serde(default = "default_tol")]
    pub tol: f64,
    /// Run the search on every exterior power as well.
    #[serde(default)]
    pub exterior: bool,
}

fn default_m_max() -> usize {
    4
}

fn default_cycle_bound() -> usize {
    6
}

fn default_tol() -> f64 {
    cocycle_lab::irreducibility::DEFAULT_TOL
}

/// Shift, measure and cocycle built from a validated config.
#[derive(Debug, Clone)]
pub struct Model {
    pub shift: ShiftSpace,
    pub potential: EdgePotential,
    pub measure: MarkovMeasure,
    pub cocycle: Cocycle,
}

fn config_err(msg: impl Into<String>) -> HarnessError {
    HarnessError::Config(msg.into())
}

fn check_rows(rows: &[Vec<f64>], what: &str, d: Option<usize>) -> Result<usize, HarnessError> {
    let n = rows.len();
    if n == 0 {
        return Err(config_err(format!("{what}: matrix is empty")));
    }
    if let Some(bad) = rows.iter().find(|r| r.len() != n) {
        return Err(config_err(format!("{what}: matrix is not square ({n} rows, a row of length {})", bad.len())));
    }
    if let Some(d) = d {
        if n != d {
            return Err(config_err(format!("{what}: matrix is {n}x{n}, expected {d}x{d}")));
        }
    }
    Ok(n)
}

fn check_ns(ns: &[usize], field: &str) -> Result<(), HarnessError> {
    if ns.is_empty() {
        return Err(config_err(format!("{field}: must be nonempty")));
    }
    if ns[0] == 0 || ns.windows(2).any(|w| w[0] >= w[1]) {
        return Err(config_err(format!("{field}: must be positive and strictly ascending")));
    }
    Ok(())
}

fn positive(x: f64, field: &str) -> Result<(), HarnessError> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(config_err(format!("{field}: must be positive and finite, got {x}")))
    }
}

fn nonzero(n: usize, field: &str) -> Result<(), HarnessError> {
    if n > 0 {
        Ok(())
    } else {
        Err(config_err(format!("{field}: must be positive")))
    }
}

pub fn unit_point(v: &[f64], d: usize, field: &str) -> Result<ProjectivePoint, HarnessError> {
    if v.len() != d {
        return Err(config_err(format!("{field}: has {} entries, cocycle dimension is {d}", v.len())));
    }
    ProjectivePoint::new(v).map_err(|e| config_err(format!("{field}: {e}")))
}

impl ExperimentConfig {
    /// Fills derived fields and checks everything the schema cannot.
    fn materialize(mut self) -> Result<Self, HarnessError> {
        if self.version != SCHEMA_VERSION {
            return Err(config_err(format!("version: unsupported schema version {} (expected {SCHEMA_VERSION})", self.version)));
        }
        let q = self.shift.adjacency.len();
        match self.shift.q {
            Some(declared) if declared != q => {
                return Err(config_err(format!("shift.q: declared {declared} but adjacency has {q} rows")));
            }
            _ => self.shift.q = Some(q),
        }
        if let CocycleSpec::Edges { d, edges } = &mut self.cocycle {
            let first = edges.first().map(|e| e.matrix.len());
            match (*d, first) {
                (None, None) => return Err(config_err("cocycle.edges: empty edge list and no dimension")),
                (None, Some(n)) => *d = Some(n),
                _ => {}
            }
        }
        self.validate_experiment()?;
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        match &self.cocycle {
            CocycleSpec::Identity { d } => *d,
            CocycleSpec::Constant { matrix } => matrix.len(),
            CocycleSpec::Edges { d, edges } => d.unwrap_or_else(|| edges.first().map_or(0, |e| e.matrix.len())),
        }
    }

    fn validate_experiment(&self) -> Result<(), HarnessError> {
        let d = self.dim();
        match &self.experiment {
            Experiment::Validate => {}
            Experiment::Measure(p) => {
                nonzero(p.cylinder_length, "experiment.cylinder_length")?;
                if let Some(c) = &p.correlation {
                    nonzero(c.trials, "experiment.correlation.trials")?;
                    if c.f.is_empty() || c.g.is_empty() {
                        return Err(config_err("experiment.correlation: f and g must be nonempty words"));
                    }
                }
            }
            Experiment::Lyapunov(p) => {
                if p.n < 10 {
                    return Err(config_err(format!("experiment.n: must be at least 10, got {}", p.n)));
                }
                nonzero(p.trials, "experiment.trials")?;
            }
            Experiment::RhoGrowth(p) => {
                check_ns(&p.ns, "experiment.ns")?;
                nonzero(p.trials, "experiment.trials")?;
                if !(p.tail_fraction > 0.0 && p.tail_fraction <= 1.0) {
                    return Err(config_err("experiment.tail_fraction: must be in (0, 1]"));
                }
                positive(p.tolerance, "experiment.tolerance")?;
                let max = *p.ns.last().expect("checked nonempty");
                if let Some(h) = p.horizons.iter().find(|&&h| h > max || h < p.ns[0]) {
                    return Err(config_err(format!("experiment.horizons: {h} is outside the range of ns")));
                }
                self.validate_spectrum(&p.spectrum)?;
            }
            Experiment::Lde(p) => {
                check_ns(&p.ns, "experiment.ns")?;
                nonzero(p.trials, "experiment.trials")?;
                positive(p.epsilon, "experiment.epsilon")?;
                if p.kinds.is_empty() {
                    return Err(config_err("experiment.kinds: must be nonempty"));
                }
                if let Some(v) = &p.vector {
                    unit_point(v, d, "experiment.vector")?;
                }
                if p.kinds.contains(&DeviationKind::WedgeUpper) && d < 2 {
                    return Err(config_err("experiment.kinds: wedge_upper needs dimension at least 2"));
                }
                if p.lambda1.is_none() || (p.lambda2.is_none() && p.kinds.contains(&DeviationKind::WedgeUpper)) {
                    self.validate_spectrum(&p.spectrum)?;
                }
            }
            Experiment::Geometry(p) => {
                nonzero(p.trials, "experiment.trials")?;
                if p.probes.is_empty() {
                    return Err(config_err("experiment.probes: must be nonempty"));
                }
                let curves = p.probes.iter().any(|pr| {
                    !matches!(pr, GeometryProbe::AlmostIndependence { .. } | GeometryProbe::BqCheck { .. })
                });
                if curves {
                    check_ns(&p.ns, "experiment.ns")?;
                }
                if let Some(g) = p.gap {
                    positive(g, "experiment.gap")?;
                }
                for (i, probe) in p.probes.iter().enumerate() {
                    let f = |name: &str| format!("experiment.probes[{i}].{name}");
                    match probe {
                        GeometryProbe::ImageAlignment { v, alpha } => {
                            unit_point(v, d, &f("v"))?;
                            alpha.map(|a| positive(a, &f("alpha"))).transpose()?;
                        }
                        GeometryProbe::UStabilization { alpha, .. } => {
                            alpha.map(|a| positive(a, &f("alpha"))).transpose()?;
                        }
                        GeometryProbe::HyperplaneAvoidance { w, eps } => {
                            unit_point(w, d, &f("w"))?;
                            eps.map(|e| positive(e, &f("eps"))).transpose()?;
                        }
                        GeometryProbe::UsSeparation { eps } => {
                            eps.map(|e| positive(e, &f("eps"))).transpose()?;
                        }
                        GeometryProbe::AlmostIndependence { n, eps, radius, .. } => {
                            nonzero(*n, &f("n"))?;
                            eps.map(|e| positive(e, &f("eps"))).transpose()?;
                            radius.map(|r| positive(r, &f("radius"))).transpose()?;
                            if eps.is_some() && radius.is_some() {
                                return Err(config_err(format!("{}: give eps or radius, not both", f("radius"))));
                            }
                        }
                        GeometryProbe::BqCheck { samples, dims } => {
                            nonzero(*samples, &f("samples"))?;
                            if dims.is_empty() || dims.iter().any(|&k| k == 0 || k > cocycle_lab::cocycle::MAX_DIM) {
                                return Err(config_err(format!("{}: entries must be in 1..=16", f("dims"))));
                            }
                        }
                    }
                }
                if p.gap.is_none() && p.probes.iter().any(GeometryProbe::needs_gap) {
                    if d < 2 {
                        return Err(config_err("experiment: default thresholds need dimension at least 2"));
                    }
                    self.validate_spectrum(&p.spectrum)?;
                }
            }
            Experiment::Irreducibility(p) => {
                nonzero(p.m_max, "experiment.m_max")?;
                nonzero(p.cycle_length_bound, "experiment.cycle_length_bound")?;
                positive(p.tol, "experiment.tol")?;
                if let Some(&l) = p.l.iter().find(|&&l| l == 0 || l >= d) {
                    return Err(config_err(format!("experiment.l: {l} is outside 1..{d}")));
                }
            }
        }
        Ok(())
    }

    fn validate_spectrum(&self, s: &SpectrumParams) -> Result<(), HarnessError> {
        if s.n < 10 {
            return Err(config_err("experiment.spectrum.n: must be at least 10"));
        }
        nonzero(s.trials, "experiment.spectrum.trials")
    }

    /// Constructs the shift, equilibrium measure and cocycle.
    pub fn build_model(&self) -> Result<Model, HarnessError> {
        let shift = ShiftSpace::new(self.shift.adjacency.clone()).map_err(|e| config_err(format!("shift: {e}")))?;
        let potential = match &self.potential {
            PotentialSpec::Zero => Ok(EdgePotential::zero(&shift)),
            PotentialSpec::Bernoulli { p } => EdgePotential::bernoulli(&shift, p),
            PotentialSpec::Edges { values } => {
                let mut map = BTreeMap::new();
                for v in values {
                    if map.insert((v.from, v.to), v.value).is_some() {
                        return Err(config_err(format!("potential: edge ({},{}) listed twice", v.from, v.to)));
                    }
                }
                EdgePotential::from_edges(&shift, map)
            }
        }
        .map_err(|e| config_err(format!("potential: {e}")))?;
        let measure = equilibrium_markov(&shift, &potential).context("equilibrium measure")?;
        let cocycle = match &self.cocycle {
            CocycleSpec::Identity { d } => Cocycle::constant(&shift, Mat::identity(*d, *d)),
            CocycleSpec::Constant { matrix } => {
                check_rows(matrix, "cocycle.matrix", None)?;
                Cocycle::constant(&shift, mat_from_rows(matrix))
            }
            CocycleSpec::Edges { d, edges } => {
                let d = d.expect("materialized");
                let mut map = BTreeMap::new();
                for e in edges {
                    let what = format!("cocycle edge ({},{})", e.from, e.to);
                    if !shift.allows(e.from, e.to) {
                        return Err(config_err(format!("{what}: edge is not allowed by the shift")));
                    }
                    check_rows(&e.matrix, &what, Some(d))?;
                    if map.insert((e.from, e.to), mat_from_rows(&e.matrix)).is_some() {
                        return Err(config_err(format!("{what}: listed twice")));
                    }
                }
                Cocycle::new(&shift, d, map)
            }
        }
        .map_err(|e| config_err(format!("cocycle: {e}")))?;
        Ok(Model { shift, potential, measure, cocycle })
    }
}

/// Parses and validates a config document. Schema errors name the field
/// path and the line/column.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, HarnessError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let cfg: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        config_err(format!("{path}: {inner}"))
    })?;
    let cfg = cfg.materialize()?;
    // building the model catches inadmissible edges and bad matrices early
    cfg.build_model()?;
    Ok(cfg)
}
