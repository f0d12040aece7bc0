//! Prebuilt devices and the cross-model comparison harness.
//!
//! Detector labels follow the optical figures: on the full device the tap
//! detectors are 3 (idler rail) and 4 (signal rail), and the interferometer
//! outputs are 2 (idler rail) and 1 (signal rail). With the interferometer
//! transparent a click at 3 pairs with 2 and a click at 4 with 1.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bohmian::{self, BranchOptions, BranchTree};
use crate::circuit::{Circuit, CoherenceMode, ElementKind, PacketParams, SourceSpec, ValidatedCircuit};
use crate::emptywave;
use crate::fock::{self, ClickDistribution, ClickEvent, FockState};
use crate::stats::{diverges, fit_fringe, Estimate, FringeFit, Tally};

/// Combined standard errors beyond which two models are flagged.
pub const DIVERGENCE_SIGMAS: f64 = 5.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentName {
    Hom,
    Mz,
    CrocaFull,
    Appendix1,
    LaserCalibration,
    Generator,
}

impl ExperimentName {
    pub const ALL: [ExperimentName; 6] = [
        Self::Hom,
        Self::Mz,
        Self::CrocaFull,
        Self::Appendix1,
        Self::LaserCalibration,
        Self::Generator,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Hom => "hom",
            Self::Mz => "mz",
            Self::CrocaFull => "croca_full",
            Self::Appendix1 => "appendix1",
            Self::LaserCalibration => "laser_calibration",
            Self::Generator => "generator",
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            Self::Hom => "photon pair on one balanced beamsplitter, detectors 1 and 2",
            Self::Mz => "single photon through a Mach-Zehnder loop with internal phase",
            Self::CrocaFull => "pair source, taps to detectors 3/4, Mach-Zehnder to detectors 1/2",
            Self::Appendix1 => "pair source, taps to detectors 3/4, one beamsplitter to detectors 1/2",
            Self::LaserCalibration => "full device fed by a split coherent beam",
            Self::Generator => "single photon on one beamsplitter, detectors 1 and 2",
        }
    }
}

impl fmt::Display for ExperimentName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ExperimentName {
    type Err = ExperimentError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|e| e.as_str() == s)
            .ok_or_else(|| ExperimentError::UnknownExperiment(s.to_string()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Model {
    #[serde(rename = "CI")]
    Ci,
    #[serde(rename = "Bohm3ND")]
    Bohm3Nd,
    #[serde(rename = "DeBroglie3D")]
    DeBroglie3D,
}

impl Model {
    pub const ALL: [Model; 3] = [Self::Ci, Self::Bohm3Nd, Self::DeBroglie3D];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Ci => "CI",
            Self::Bohm3Nd => "Bohm3ND",
            Self::DeBroglie3D => "DeBroglie3D",
        }
    }
}

impl fmt::Display for Model {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Model {
    type Err = ExperimentError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|m| m.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| ExperimentError::UnknownModel(s.to_string()))
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ExperimentError {
    #[error("unknown experiment {0:?}")]
    UnknownExperiment(String),
    #[error("unknown model {0:?}")]
    UnknownModel(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("parameter {0:?} cannot be swept")]
    NotSweepable(String),
    #[error("{model} engine failed: {message}")]
    Engine { model: Model, message: String },
}

impl ExperimentError {
    /// Errors caused by the request rather than by an engine.
    pub fn is_validation(&self) -> bool {
        !matches!(self, Self::Engine { .. })
    }
}

/// Physical parameters shared by all devices.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Params {
    pub delta_theta: CoherenceMode,
    pub delta_phi: f64,
    /// Delay of the signal photon.
    pub tau: f64,
    /// Laser amplitude (taken real).
    pub alpha: f64,
    /// Packet bandwidth.
    pub sigma: f64,
}

impl Default for Params {
    fn default() -> Self {
        Self {
            delta_theta: CoherenceMode::Fixed(0.0),
            delta_phi: 0.0,
            tau: 0.0,
            alpha: 1.0,
            sigma: 1.0,
        }
    }
}

impl Params {
    /// Phases are wrapped into `[0, 2π)`; everything else is checked.
    pub fn validated(mut self) -> Result<Self, ExperimentError> {
        let bad = |m: &str| Err(ExperimentError::InvalidParameter(m.to_string()));
        if let CoherenceMode::Fixed(t) = self.delta_theta {
            if !t.is_finite() {
                return bad("delta_theta must be finite");
            }
            self.delta_theta = CoherenceMode::Fixed(fock::wrap_phase(t));
        }
        if !self.delta_phi.is_finite() {
            return bad("delta_phi must be finite");
        }
        self.delta_phi = fock::wrap_phase(self.delta_phi);
        if !self.tau.is_finite() {
            return bad("tau must be finite");
        }
        if !(self.alpha.is_finite() && self.alpha >= 0.0) {
            return bad("alpha must be a finite non-negative number");
        }
        if !(self.sigma.is_finite() && self.sigma > 0.0) {
            return bad("sigma must be positive");
        }
        Ok(self)
    }
}

fn pair_source(idler: usize, signal: usize, p: &Params) -> SourceSpec {
    SourceSpec::TwoPhoton {
        idler,
        signal,
        idler_packet: PacketParams::gaussian(0.0, p.sigma),
        signal_packet: PacketParams::gaussian(0.0, p.sigma),
        relative_phase: p.delta_theta,
    }
}

/// Source, delay and tap stage common to the full and simplified devices.
/// Returns `(circuit, idler, signal)`; the next free stage is 3.
fn tapped_pair(p: &Params) -> (Circuit, usize, usize) {
    let mut c = Circuit::new();
    let idler = c.add_mode("idler");
    let signal = c.add_mode("signal");
    let t3 = c.add_mode("tap-3");
    let t4 = c.add_mode("tap-4");
    c.push(0, ElementKind::Delay { mode: signal, delay: p.tau })
        .push(1, ElementKind::balanced(idler, t3))
        .push(1, ElementKind::balanced(signal, t4))
        .push(2, ElementKind::Detector { mode: t3, id: 3 })
        .push(2, ElementKind::Detector { mode: t4, id: 4 });
    c.set_source(pair_source(idler, signal, p));
    (c, idler, signal)
}

/// Builds a device with its source. Parameters are validated first.
pub fn build(name: ExperimentName, params: &Params) -> Result<ValidatedCircuit, ExperimentError> {
    let p = params.validated()?;
    let circuit = match name {
        ExperimentName::Hom => {
            let mut c = Circuit::new();
            let i = c.add_mode("idler");
            let s = c.add_mode("signal");
            c.push(0, ElementKind::Delay { mode: s, delay: p.tau })
                .push(1, ElementKind::balanced(i, s))
                .push(2, ElementKind::Detector { mode: i, id: 1 })
                .push(2, ElementKind::Detector { mode: s, id: 2 });
            c.set_source(pair_source(i, s, &p));
            c
        }
        ExperimentName::Mz => {
            let mut c = Circuit::new();
            let a = c.add_mode("mz-upper");
            let b = c.add_mode("mz-lower");
            c.push(0, ElementKind::balanced(a, b))
                .push(1, ElementKind::PhaseShift { mode: b, phase: p.delta_phi })
                .push(2, ElementKind::balanced(a, b))
                .push(3, ElementKind::Detector { mode: b, id: 1 })
                .push(3, ElementKind::Detector { mode: a, id: 2 });
            c.set_source(SourceSpec::FockInput { occupation: vec![1, 0] });
            c
        }
        ExperimentName::CrocaFull => {
            let (mut c, i, s) = tapped_pair(&p);
            c.push(3, ElementKind::balanced(i, s))
                .push(4, ElementKind::PhaseShift { mode: s, phase: p.delta_phi })
                .push(5, ElementKind::balanced(i, s))
                .push(6, ElementKind::Detector { mode: i, id: 2 })
                .push(6, ElementKind::Detector { mode: s, id: 1 });
            c
        }
        ExperimentName::Appendix1 => {
            let (mut c, i, s) = tapped_pair(&p);
            c.push(3, ElementKind::balanced(i, s))
                .push(4, ElementKind::Detector { mode: i, id: 2 })
                .push(4, ElementKind::Detector { mode: s, id: 1 });
            c
        }
        ExperimentName::LaserCalibration => {
            let mut c = Circuit::new();
            let i = c.add_mode("idler");
            let s = c.add_mode("signal");
            let t3 = c.add_mode("tap-3");
            let t4 = c.add_mode("tap-4");
            let theta = p.delta_theta.representative();
            c.push(0, ElementKind::balanced(i, s))
                .push(1, ElementKind::PhaseShift { mode: i, phase: theta })
                .push(2, ElementKind::balanced(i, t3))
                .push(2, ElementKind::balanced(s, t4))
                .push(3, ElementKind::Detector { mode: t3, id: 3 })
                .push(3, ElementKind::Detector { mode: t4, id: 4 })
                .push(4, ElementKind::balanced(i, s))
                .push(5, ElementKind::PhaseShift { mode: s, phase: p.delta_phi })
                .push(6, ElementKind::balanced(i, s))
                .push(7, ElementKind::Detector { mode: i, id: 2 })
                .push(7, ElementKind::Detector { mode: s, id: 1 });
            let mut amps = vec![Complex64::default(); 4];
            amps[i] = Complex64::new(p.alpha, 0.0);
            c.set_source(SourceSpec::Coherent { amplitudes: amps });
            c
        }
        ExperimentName::Generator => {
            let mut c = Circuit::new();
            let a = c.add_mode("occupied");
            let b = c.add_mode("empty");
            c.push(0, ElementKind::balanced(a, b))
                .push(1, ElementKind::Detector { mode: a, id: 1 })
                .push(1, ElementKind::Detector { mode: b, id: 2 });
            c.set_source(SourceSpec::FockInput { occupation: vec![1, 0] });
            c
        }
    };
    circuit
        .validated()
        .map_err(|e| ExperimentError::InvalidParameter(e.to_string()))
}

/// A reported quantity.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Statistic {
    /// `P(event | given)`; unconditional when `given` is `None`.
    Probability {
        name: String,
        event: ClickEvent,
        given: Option<ClickEvent>,
    },
    /// Mean photon count at a detector.
    MeanCount { name: String, detector: u32 },
}

impl Statistic {
    pub fn name(&self) -> &str {
        match self {
            Self::Probability { name, .. } | Self::MeanCount { name, .. } => name,
        }
    }

    fn prob(name: &str, event: ClickEvent, given: Option<ClickEvent>) -> Self {
        Self::Probability {
            name: name.to_string(),
            event,
            given,
        }
    }
}

/// Neither tap fired: both photons entered the last interferometer.
pub fn both_in_mz() -> ClickEvent {
    ClickEvent::And(vec![ClickEvent::silent(3), ClickEvent::silent(4)])
}

/// Both photons left through the same output.
pub fn same_port() -> ClickEvent {
    ClickEvent::Or(vec![ClickEvent::Count(1, 2), ClickEvent::Count(2, 2)])
}

/// Default statistics reported for each device.
pub fn default_statistics(name: ExperimentName) -> Vec<Statistic> {
    use ClickEvent as E;
    let x = emptywave::tap_xor;
    match name {
        ExperimentName::Hom => vec![Statistic::prob("P(1&2)", E::both(1, 2), None)],
        ExperimentName::Mz | ExperimentName::Generator => vec![
            Statistic::prob("P(1)", E::fires(1), None),
            Statistic::prob("P(2)", E::fires(2), None),
        ],
        ExperimentName::CrocaFull => vec![
            Statistic::prob("P(1|3 xor 4)", E::fires(1), Some(x())),
            Statistic::prob("P(2|3 xor 4)", E::fires(2), Some(x())),
            Statistic::prob("P(2|3 only)", E::fires(2), Some(E::only(3, 4))),
            Statistic::prob("P(1|4 only)", E::fires(1), Some(E::only(4, 3))),
            Statistic::prob("P(1&2|both in MZ)", E::both(1, 2), Some(both_in_mz())),
            Statistic::prob("P(same port|both in MZ)", same_port(), Some(both_in_mz())),
            Statistic::prob("P(3&4)", E::both(3, 4), None),
        ],
        ExperimentName::Appendix1 => vec![
            Statistic::prob("P(1 & 3 xor 4)", E::fires(1).and(x()), None),
            Statistic::prob("P(2 & 3 xor 4)", E::fires(2).and(x()), None),
            Statistic::prob("P(1|3 xor 4)", E::fires(1), Some(x())),
            Statistic::prob("P(2|3 xor 4)", E::fires(2), Some(x())),
        ],
        ExperimentName::LaserCalibration => (1..=4)
            .map(|d| Statistic::MeanCount {
                name: format!("mean n{d}"),
                detector: d,
            })
            .collect(),
    }
}

/// A full request for [`compare_models`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub name: ExperimentName,
    pub params: Params,
    pub models: Vec<Model>,
    pub n_samples: u64,
    pub seed: u64,
    /// Use the exact enumerations of the sampling models instead of Monte
    /// Carlo.
    pub analytic: bool,
    pub statistics: Vec<Statistic>,
}

impl ExperimentSpec {
    pub fn new(name: ExperimentName, params: Params) -> Self {
        Self {
            name,
            params,
            models: Model::ALL.to_vec(),
            n_samples: 100_000,
            seed: 0,
            analytic: false,
            statistics: default_statistics(name),
        }
    }

    pub fn with_models(mut self, models: &[Model]) -> Self {
        self.models = models.to_vec();
        self
    }

    pub fn with_samples(mut self, n: u64, seed: u64) -> Self {
        self.n_samples = n;
        self.seed = seed;
        self
    }

    pub fn analytic(mut self, yes: bool) -> Self {
        self.analytic = yes;
        self
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StatValue {
    pub name: String,
    pub value: f64,
    pub stderr: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelResult {
    pub model: Model,
    pub stats: Vec<StatValue>,
    /// Exact joint click distribution, when the model provides one.
    pub joint: Option<ClickDistribution>,
    pub breakdowns: u64,
    #[serde(skip)]
    pub runtime_s: f64,
}

impl ModelResult {
    pub fn stat(&self, name: &str) -> Option<&StatValue> {
        self.stats.iter().find(|s| s.name == name)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Divergence {
    pub statistic: String,
    pub a: Model,
    pub b: Model,
    pub difference: f64,
    pub combined_stderr: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub spec: ExperimentSpec,
    pub models: Vec<ModelResult>,
    pub divergences: Vec<Divergence>,
}

impl ExperimentResult {
    pub fn model(&self, m: Model) -> Option<&ModelResult> {
        self.models.iter().find(|r| r.model == m)
    }

    pub fn value(&self, m: Model, stat: &str) -> Option<f64> {
        self.model(m)?.stat(stat).map(|s| s.value)
    }

    pub fn diverged(&self, a: Model, b: Model) -> bool {
        self.divergences
            .iter()
            .any(|d| (d.a == a && d.b == b) || (d.a == b && d.b == a))
    }
}

fn engine_err(model: Model) -> impl Fn(String) -> ExperimentError {
    move |message| ExperimentError::Engine { model, message }
}

const NAN_STAT: (f64, f64) = (f64::NAN, f64::NAN);

fn exact_stat(d: &ClickDistribution, s: &Statistic) -> (f64, f64) {
    match s {
        Statistic::Probability { event, given, .. } => match given {
            None => (d.probability(event), 0.0),
            Some(g) => d.conditional_probability(event, g).map_or(NAN_STAT, |p| (p, 0.0)),
        },
        Statistic::MeanCount { detector, .. } => {
            let i = d.detectors.iter().position(|x| x == detector);
            i.map_or(NAN_STAT, |i| {
                (d.outcomes.iter().map(|(pat, p)| pat[i] as f64 * p).sum(), 0.0)
            })
        }
    }
}

fn sampled_stat(t: &Tally, s: &Statistic) -> (f64, f64) {
    match s {
        Statistic::Probability { event, given, .. } => {
            let e = match given {
                None => Some(t.probability(event)),
                Some(g) => t.conditional(event, g),
            };
            e.map_or(NAN_STAT, |e| (e.value, e.stderr))
        }
        Statistic::MeanCount { detector, .. } => {
            let i = t.detectors.iter().position(|x| x == detector);
            i.map_or(NAN_STAT, |i| {
                let n = t.n_samples as f64;
                let mean: f64 = t.counts.iter().map(|(p, &c)| p[i] as f64 * c as f64).sum::<f64>() / n;
                let sq: f64 = t.counts.iter().map(|(p, &c)| (p[i] as f64).powi(2) * c as f64).sum::<f64>() / n;
                (mean, ((sq - mean * mean).max(0.0) / n).sqrt())
            })
        }
    }
}

/// Single-photon state `Σ_j (α_j/|α|) |1_j⟩` carrying the mode shape of a
/// coherent field.
fn supermode(amplitudes: &[Complex64]) -> Option<FockState> {
    let norm = amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
    if norm == 0.0 {
        return None;
    }
    let v: Vec<Complex64> = amplitudes.iter().map(|a| a / norm).collect();
    FockState::vacuum(amplitudes.len(), 1).create(&v).ok()
}

fn run_model(spec: &ExperimentSpec, circuit: &ValidatedCircuit, model: Model) -> Result<ModelResult, ExperimentError> {
    let start = Instant::now();
    let err = engine_err(model);
    let coherent = match circuit.source() {
        Some(SourceSpec::Coherent { amplitudes }) => Some(amplitudes.clone()),
        _ => None,
    };
    let mut joint = None;
    let mut breakdowns = 0;
    let stats: Vec<(f64, f64)> = match (model, coherent) {
        (Model::Ci, None) => {
            let input = fock::prepare_input(circuit, fock::DEFAULT_N_MAX).map_err(|e| err(e.to_string()))?;
            let out = fock::propagate(&input.state, circuit).map_err(|e| err(e.to_string()))?;
            let d = fock::detection_distribution(&out, circuit);
            let s = spec.statistics.iter().map(|s| exact_stat(&d, s)).collect();
            joint = Some(d);
            s
        }
        (Model::Ci, Some(amps)) => {
            let out = fock::propagate_coherent(&fock::CoherentField { alpha: amps }, circuit)
                .map_err(|e| err(e.to_string()))?;
            let cs = fock::coherent_click_statistics(&out, circuit);
            spec.statistics
                .iter()
                .map(|s| match s {
                    Statistic::MeanCount { detector, .. } => cs.mean(*detector).map_or(NAN_STAT, |m| (m, 0.0)),
                    Statistic::Probability { .. } => NAN_STAT,
                })
                .collect()
        }
        (Model::Bohm3Nd, None) => {
            let input = fock::prepare_input(circuit, fock::DEFAULT_N_MAX).map_err(|e| err(e.to_string()))?;
            let tree = BranchTree::build(circuit, &input.state).map_err(|e| err(e.to_string()))?;
            if spec.analytic {
                let d = tree.exact_distribution();
                let s = spec.statistics.iter().map(|s| exact_stat(&d, s)).collect();
                joint = Some(d);
                s
            } else {
                let ens = bohmian::run_tree(&tree, spec.n_samples, spec.seed, &BranchOptions::default());
                spec.statistics.iter().map(|s| sampled_stat(&ens.tally, s)).collect()
            }
        }
        (Model::Bohm3Nd, Some(amps)) => {
            let total: f64 = amps.iter().map(|a| a.norm_sqr()).sum();
            match supermode(&amps) {
                None => spec.statistics.iter().map(|_| (0.0, 0.0)).collect(),
                Some(state) => {
                    let tree = BranchTree::build(circuit, &state).map_err(|e| err(e.to_string()))?;
                    let per_photon: Vec<(f64, f64)> = if spec.analytic {
                        let d = tree.exact_distribution();
                        spec.statistics.iter().map(|s| exact_stat(&d, s)).collect()
                    } else {
                        let ens = bohmian::run_tree(&tree, spec.n_samples, spec.seed, &BranchOptions::default());
                        spec.statistics.iter().map(|s| sampled_stat(&ens.tally, s)).collect()
                    };
                    spec.statistics
                        .iter()
                        .zip(per_photon)
                        .map(|(s, (v, e))| match s {
                            Statistic::MeanCount { .. } => (v * total, e * total),
                            Statistic::Probability { .. } => NAN_STAT,
                        })
                        .collect()
                }
            }
        }
        (Model::DeBroglie3D, None) => {
            if spec.analytic {
                let d = emptywave::analytic_distribution(circuit).map_err(|e| err(e.to_string()))?;
                let s = spec.statistics.iter().map(|s| exact_stat(&d, s)).collect();
                joint = Some(d);
                s
            } else {
                let run = emptywave::run_model(circuit, spec.n_samples, spec.seed).map_err(|e| err(e.to_string()))?;
                breakdowns = run.breakdowns;
                spec.statistics.iter().map(|s| sampled_stat(&run.tally, s)).collect()
            }
        }
        (Model::DeBroglie3D, Some(_)) => {
            let means = emptywave::mean_intensities(circuit).map_err(|e| err(e.to_string()))?;
            spec.statistics
                .iter()
                .map(|s| match s {
                    Statistic::MeanCount { detector, .. } => means
                        .iter()
                        .find(|(d, _)| d == detector)
                        .map_or(NAN_STAT, |&(_, m)| (m, 0.0)),
                    Statistic::Probability { .. } => NAN_STAT,
                })
                .collect()
        }
    };
    Ok(ModelResult {
        model,
        stats: spec
            .statistics
            .iter()
            .zip(stats)
            .map(|(s, (value, stderr))| StatValue {
                name: s.name().to_string(),
                // rounding residue like -1e-17 reads as a sign flip in tables
                value: if value.abs() < 1e-14 { 0.0 } else { value },
                stderr,
            })
            .collect(),
        joint,
        breakdowns,
        runtime_s: start.elapsed().as_secs_f64(),
    })
}

fn divergences(models: &[ModelResult]) -> Vec<Divergence> {
    let mut out = Vec::new();
    for i in 0..models.len() {
        for j in i + 1..models.len() {
            for (a, b) in models[i].stats.iter().zip(&models[j].stats) {
                if !(a.value.is_finite() && b.value.is_finite()) {
                    continue;
                }
                if diverges(a.value, a.stderr, b.value, b.stderr, DIVERGENCE_SIGMAS) {
                    out.push(Divergence {
                        statistic: a.name.clone(),
                        a: models[i].model,
                        b: models[j].model,
                        difference: a.value - b.value,
                        combined_stderr: a.stderr.hypot(b.stderr),
                    });
                }
            }
        }
    }
    out
}

/// Runs every requested model on the same device and seed.
pub fn compare_models(spec: &ExperimentSpec) -> Result<ExperimentResult, ExperimentError> {
    if spec.n_samples == 0 {
        return Err(ExperimentError::InvalidParameter("n_samples must be at least 1".into()));
    }
    let circuit = build(spec.name, &spec.params)?;
    let mut spec = spec.clone();
    spec.params = spec.params.validated()?;
    let models: Vec<ModelResult> = spec
        .models
        .par_iter()
        .map(|&m| run_model(&spec, &circuit, m))
        .collect::<Result<_, _>>()?;
    let divergences = divergences(&models);
    Ok(ExperimentResult {
        spec,
        models,
        divergences,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    DeltaTheta,
    DeltaPhi,
    Tau,
    Alpha,
}

impl SweepParam {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::DeltaTheta => "delta_theta",
            Self::DeltaPhi => "delta_phi",
            Self::Tau => "tau",
            Self::Alpha => "alpha",
        }
    }

    pub fn is_phase(self) -> bool {
        matches!(self, Self::DeltaTheta | Self::DeltaPhi)
    }

    pub fn apply(self, p: &Params, v: f64) -> Params {
        let mut q = *p;
        match self {
            Self::DeltaTheta => q.delta_theta = CoherenceMode::Fixed(v),
            Self::DeltaPhi => q.delta_phi = v,
            Self::Tau => q.tau = v,
            Self::Alpha => q.alpha = v,
        }
        q
    }
}

impl FromStr for SweepParam {
    type Err = ExperimentError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.replace('-', "_").as_str() {
            "delta_theta" => Ok(Self::DeltaTheta),
            "delta_phi" => Ok(Self::DeltaPhi),
            "tau" => Ok(Self::Tau),
            "alpha" => Ok(Self::Alpha),
            _ => Err(ExperimentError::NotSweepable(s.to_string())),
        }
    }
}

/// Fringe fitted to one statistic of one model across a phase sweep.
#[derive(Clone, Debug, PartialEq)]
pub struct VisibilityFit {
    pub model: Model,
    pub statistic: String,
    pub fit: FringeFit,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepResult {
    pub param: SweepParam,
    /// Swept values as requested (not wrapped).
    pub values: Vec<f64>,
    pub points: Vec<ExperimentResult>,
    pub visibilities: Vec<VisibilityFit>,
}

/// `n` evenly spaced values from `from` to `to` inclusive.
pub fn linspace(from: f64, to: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![from],
        _ => (0..n)
            .map(|i| from + (to - from) * i as f64 / (n - 1) as f64)
            .collect(),
    }
}

/// Evaluates the spec at every grid value of `param`. Every point uses the
/// spec's seed. Phase sweeps also carry fringe fits for every statistic.
pub fn sweep(spec: &ExperimentSpec, param: SweepParam, grid: &[f64]) -> Result<SweepResult, ExperimentError> {
    let points: Vec<ExperimentResult> = grid
        .par_iter()
        .map(|&v| {
            let mut s = spec.clone();
            s.params = param.apply(&spec.params, v);
            compare_models(&s)
        })
        .collect::<Result<_, _>>()?;
    let mut visibilities = Vec::new();
    if param.is_phase() && grid.len() >= 3 {
        for &m in &spec.models {
            for st in &spec.statistics {
                let vals: Vec<&StatValue> = points
                    .iter()
                    .filter_map(|r| r.model(m)?.stat(st.name()))
                    .collect();
                if vals.len() != grid.len() || vals.iter().any(|v| !v.value.is_finite()) {
                    continue;
                }
                let ys: Vec<f64> = vals.iter().map(|v| v.value).collect();
                let sig: Vec<f64> = vals.iter().map(|v| v.stderr).collect();
                let sampled = sig.iter().any(|&s| s > 0.0);
                if let Some(fit) = fit_fringe(grid, &ys, sampled.then_some(sig.as_slice())) {
                    visibilities.push(VisibilityFit {
                        model: m,
                        statistic: st.name().to_string(),
                        fit,
                    });
                }
            }
        }
    }
    Ok(SweepResult {
        param,
        values: grid.to_vec(),
        points,
        visibilities,
    })
}

/// Convenience for sweeps over a full period of a phase.
pub fn phase_grid(n: usize) -> Vec<f64> {
    (0..n).map(|i| 2.0 * PI * i as f64 / n as f64).collect()
}

/// Estimate of a named statistic, for tests and tables.
pub fn estimate(r: &ExperimentResult, m: Model, stat: &str) -> Option<Estimate> {
    r.model(m)?.stat(stat).map(|s| Estimate {
        value: s.value,
        stderr: s.stderr,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for e in ExperimentName::ALL {
            assert_eq!(e.as_str().parse::<ExperimentName>().unwrap(), e);
        }
        assert!("fig9".parse::<ExperimentName>().is_err());
        assert_eq!("bohm3nd".parse::<Model>().unwrap(), Model::Bohm3Nd);
    }

    #[test]
    fn every_builder_validates() {
        for e in ExperimentName::ALL {
            let c = build(e, &Params::default()).unwrap();
            assert!(c.detectors().len() >= 2, "{e}");
        }
    }

    #[test]
    fn hom_has_two_modes_one_splitter() {
        let c = build(ExperimentName::Hom, &Params::default()).unwrap();
        assert_eq!(c.num_modes(), 2);
        let splitters = c
            .steps()
            .filter(|e| matches!(e.kind, ElementKind::Beamsplitter { .. }))
            .count();
        assert_eq!(splitters, 1);
        assert_eq!(c.detectors().iter().map(|d| d.0).collect::<Vec<_>>(), vec![1, 2]);
    }

    #[test]
    fn parameters_are_checked() {
        let p = Params {
            sigma: 0.0,
            ..Default::default()
        };
        assert!(matches!(build(ExperimentName::Hom, &p), Err(ExperimentError::InvalidParameter(_))));
        let p = Params {
            delta_phi: 3.0 * PI,
            ..Default::default()
        }
        .validated()
        .unwrap();
        assert!((p.delta_phi - PI).abs() < 1e-12);
        assert!(matches!("sigma".parse::<SweepParam>(), Err(ExperimentError::NotSweepable(_))));
    }

    #[test]
    fn linspace_endpoints() {
        let g = linspace(-4.0, 4.0, 65);
        assert_eq!(g.len(), 65);
        assert_eq!(g[32], 0.0);
        assert_eq!(g[64], 4.0);
    }
}
