//! Optical network topology shared by every engine.
//!
//! A [`Circuit`] is a set of labelled modes (rails), a stage-ordered list of
//! passive elements acting on them, and an optional source. Engines only
//! accept a [`ValidatedCircuit`], which is obtained through
//! [`Circuit::validated`] and is immutable afterwards.
//!
//! Beamsplitters use the symmetric convention: a balanced splitter has
//! `t = 1/sqrt(2)` and `r = i/sqrt(2)`, and the 2x2 block acting on the mode
//! pair `(a, b)` is
//!
//! ```text
//!     [ t   -conj(r) ]
//!     [ r    conj(t) ]
//! ```
//!
//! Column `j` is the image of input mode `j`, so the creation operator of
//! input `a` becomes `t a†_a + r a†_b`.

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::FRAC_1_SQRT_2;
use std::fmt;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Mode-space transfer matrix.
pub type Unitary = DMatrix<Complex64>;

/// Detector labels as printed on the optical figures (1, 2, 3, 4, ...).
pub type DetectorId = u32;

const UNITARITY_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ModeId {
    pub index: usize,
    pub label: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum ElementKind {
    Beamsplitter {
        a: usize,
        b: usize,
        t: Complex64,
        r: Complex64,
    },
    PhaseShift {
        mode: usize,
        phase: f64,
    },
    /// Time offset on a rail. It has no effect on the mode unitary; it only
    /// enters the wavepacket overlap of the two-photon source.
    Delay {
        mode: usize,
        delay: f64,
    },
    Detector {
        mode: usize,
        id: DetectorId,
    },
}

impl ElementKind {
    /// Balanced splitter in the symmetric convention.
    pub fn balanced(a: usize, b: usize) -> Self {
        Self::Beamsplitter {
            a,
            b,
            t: Complex64::new(FRAC_1_SQRT_2, 0.0),
            r: Complex64::new(0.0, FRAC_1_SQRT_2),
        }
    }

    /// Splitter with intensity transmission `transmission`, reflected
    /// amplitude `i * sqrt(1 - transmission)`.
    pub fn splitter(a: usize, b: usize, transmission: f64) -> Self {
        Self::Beamsplitter {
            a,
            b,
            t: Complex64::new(transmission.sqrt(), 0.0),
            r: Complex64::new(0.0, (1.0 - transmission).sqrt()),
        }
    }

    pub fn modes(&self) -> Vec<usize> {
        match *self {
            Self::Beamsplitter { a, b, .. } => vec![a, b],
            Self::PhaseShift { mode, .. } | Self::Delay { mode, .. } | Self::Detector { mode, .. } => {
                vec![mode]
            }
        }
    }

    /// 2x2 block for a beamsplitter, in the column convention described in
    /// the module docs.
    pub fn splitter_block(t: Complex64, r: Complex64) -> [[Complex64; 2]; 2] {
        [[t, -r.conj()], [r, t.conj()]]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Element {
    pub kind: ElementKind,
    pub stage: u32,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Envelope {
    Gaussian,
}

/// Temporal shape of one photon: amplitude `∝ exp(-σ² (t - t0)² / 4)`, so
/// the intensity profile has standard deviation `1/σ`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PacketParams {
    pub center_time: f64,
    pub bandwidth: f64,
    pub envelope: Envelope,
}

impl PacketParams {
    pub fn gaussian(center_time: f64, bandwidth: f64) -> Self {
        Self {
            center_time,
            bandwidth,
            envelope: Envelope::Gaussian,
        }
    }
}

impl Default for PacketParams {
    fn default() -> Self {
        Self::gaussian(0.0, 1.0)
    }
}

/// Relative phase between the idler and signal waves.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum CoherenceMode {
    Fixed(f64),
    UniformRandom,
}

impl CoherenceMode {
    /// Phase to use where the model does not care about the distribution
    /// (it is a global phase for the Fock engine).
    pub fn representative(self) -> f64 {
        match self {
            Self::Fixed(p) => p,
            Self::UniformRandom => 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum SourceSpec {
    TwoPhoton {
        idler: usize,
        signal: usize,
        idler_packet: PacketParams,
        signal_packet: PacketParams,
        relative_phase: CoherenceMode,
    },
    Coherent {
        amplitudes: Vec<Complex64>,
    },
    FockInput {
        occupation: Vec<u8>,
    },
}

impl SourceSpec {
    pub fn modes(&self) -> Vec<usize> {
        match self {
            Self::TwoPhoton { idler, signal, .. } => vec![*idler, *signal],
            Self::Coherent { amplitudes } => amplitudes
                .iter()
                .enumerate()
                .filter(|(_, a)| a.norm_sqr() > 0.0)
                .map(|(i, _)| i)
                .collect(),
            Self::FockInput { occupation } => occupation
                .iter()
                .enumerate()
                .filter(|(_, &n)| n > 0)
                .map(|(i, _)| i)
                .collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Violation {
    NonUnitary { element: usize, norm_sqr: f64 },
    UnknownMode { element: usize, mode: usize },
    SelfCoupling { element: usize, mode: usize },
    DuplicateModeIndex(usize),
    DuplicateModeLabel(String),
    NonContiguousModes,
    ModeConflict { stage: u32, mode: usize },
    AfterDetector { element: usize, mode: usize },
    DuplicateDetector(DetectorId),
    Dangling { mode: usize },
    DelayAfterMixing { element: usize, mode: usize },
    NonFinite { element: usize },
    InvalidSource(String),
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::NonUnitary { element, norm_sqr } => write!(
                f,
                "non-unitary element #{element}: |t|^2 + |r|^2 = {norm_sqr}"
            ),
            Self::UnknownMode { element, mode } => {
                write!(f, "unknown mode {mode} referenced by element #{element}")
            }
            Self::SelfCoupling { element, mode } => write!(
                f,
                "cycle: element #{element} couples mode {mode} to itself"
            ),
            Self::DuplicateModeIndex(i) => write!(f, "duplicate mode index {i}"),
            Self::DuplicateModeLabel(l) => write!(f, "duplicate mode label {l:?}"),
            Self::NonContiguousModes => write!(f, "mode indices must be 0..M"),
            Self::ModeConflict { stage, mode } => {
                write!(f, "mode {mode} feeds more than one element in stage {stage}")
            }
            Self::AfterDetector { element, mode } => write!(
                f,
                "cycle: element #{element} uses mode {mode} after its detector"
            ),
            Self::DuplicateDetector(id) => write!(f, "detector {id} defined twice"),
            Self::Dangling { mode } => {
                write!(f, "dangling mode {mode}: light reaches it but no detector terminates it")
            }
            Self::DelayAfterMixing { element, mode } => write!(
                f,
                "delay element #{element} on mode {mode} sits after a beamsplitter"
            ),
            Self::NonFinite { element } => write!(f, "element #{element} has a non-finite parameter"),
            Self::InvalidSource(msg) => write!(f, "invalid source: {msg}"),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_ok() {
            return write!(f, "ok");
        }
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                write!(f, "; ")?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum CircuitError {
    #[error("circuit failed validation: {0}")]
    Invalid(ValidationReport),
    #[error("cannot compose circuits with different mode labels")]
    ModeMismatch,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Circuit {
    pub modes: Vec<ModeId>,
    pub elements: Vec<Element>,
    pub source: Option<SourceSpec>,
}

impl Circuit {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a mode and returns its index.
    pub fn add_mode(&mut self, label: impl Into<String>) -> usize {
        let index = self.modes.len();
        self.modes.push(ModeId {
            index,
            label: label.into(),
        });
        index
    }

    pub fn push(&mut self, stage: u32, kind: ElementKind) -> &mut Self {
        self.elements.push(Element { kind, stage });
        self
    }

    pub fn set_source(&mut self, source: SourceSpec) -> &mut Self {
        self.source = Some(source);
        self
    }

    pub fn num_modes(&self) -> usize {
        self.modes.len()
    }

    pub fn mode_by_label(&self, label: &str) -> Option<usize> {
        self.modes.iter().find(|m| m.label == label).map(|m| m.index)
    }

    pub fn max_stage(&self) -> Option<u32> {
        self.elements.iter().map(|e| e.stage).max()
    }

    /// Element indices in execution order: by stage, then insertion order.
    fn ordered(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.elements.len()).collect();
        idx.sort_by_key(|&i| self.elements[i].stage);
        idx
    }

    pub fn validate(&self) -> ValidationReport {
        let mut v = Vec::new();
        let m = self.modes.len();

        let mut seen_idx = BTreeSet::new();
        let mut seen_label = BTreeSet::new();
        for mode in &self.modes {
            if !seen_idx.insert(mode.index) {
                v.push(Violation::DuplicateModeIndex(mode.index));
            }
            if !seen_label.insert(mode.label.clone()) {
                v.push(Violation::DuplicateModeLabel(mode.label.clone()));
            }
        }
        if seen_idx.iter().copied().ne(0..m) && seen_idx.len() == m {
            v.push(Violation::NonContiguousModes);
        }

        let mut per_stage: BTreeMap<(u32, usize), usize> = BTreeMap::new();
        let mut detectors = BTreeSet::new();
        for (i, el) in self.elements.iter().enumerate() {
            for mode in el.kind.modes() {
                if mode >= m {
                    v.push(Violation::UnknownMode { element: i, mode });
                } else {
                    *per_stage.entry((el.stage, mode)).or_default() += 1;
                }
            }
            match el.kind {
                ElementKind::Beamsplitter { a, b, t, r } => {
                    if a == b {
                        v.push(Violation::SelfCoupling { element: i, mode: a });
                    }
                    if !(t.re.is_finite() && t.im.is_finite() && r.re.is_finite() && r.im.is_finite()) {
                        v.push(Violation::NonFinite { element: i });
                    } else {
                        let n = t.norm_sqr() + r.norm_sqr();
                        if (n - 1.0).abs() > UNITARITY_TOL {
                            v.push(Violation::NonUnitary { element: i, norm_sqr: n });
                        }
                    }
                }
                ElementKind::PhaseShift { phase: x, .. } | ElementKind::Delay { delay: x, .. } => {
                    if !x.is_finite() {
                        v.push(Violation::NonFinite { element: i });
                    }
                }
                ElementKind::Detector { id, .. } => {
                    if !detectors.insert(id) {
                        v.push(Violation::DuplicateDetector(id));
                    }
                }
            }
        }
        for (&(stage, mode), &count) in &per_stage {
            if count > 1 && !(count == 2 && self.self_coupled_at(stage, mode)) {
                v.push(Violation::ModeConflict { stage, mode });
            }
        }

        // Walk in stage order: terminated rails, reached rails, mixed rails.
        let mut terminated = vec![false; m];
        let mut mixed = vec![false; m];
        let mut reached = vec![false; m];
        if let Some(src) = &self.source {
            self.validate_source(src, &mut v);
            for mode in src.modes() {
                if mode < m {
                    reached[mode] = true;
                }
            }
        }
        for i in self.ordered() {
            let el = &self.elements[i];
            let modes = el.kind.modes();
            if modes.iter().any(|&x| x >= m) {
                continue;
            }
            for &mode in &modes {
                if terminated[mode] {
                    v.push(Violation::AfterDetector { element: i, mode });
                }
            }
            match el.kind {
                ElementKind::Beamsplitter { a, b, .. } => {
                    mixed[a] = true;
                    mixed[b] = true;
                    if reached[a] || reached[b] {
                        reached[a] = true;
                        reached[b] = true;
                    }
                }
                ElementKind::Delay { mode, .. } if mixed[mode] => {
                    v.push(Violation::DelayAfterMixing { element: i, mode });
                }
                ElementKind::Detector { mode, .. } => terminated[mode] = true,
                _ => {}
            }
        }
        for mode in 0..m {
            if reached[mode] && !terminated[mode] {
                v.push(Violation::Dangling { mode });
            }
        }

        ValidationReport { violations: v }
    }

    fn self_coupled_at(&self, stage: u32, mode: usize) -> bool {
        self.elements.iter().any(|e| {
            e.stage == stage && matches!(e.kind, ElementKind::Beamsplitter { a, b, .. } if a == mode && b == mode)
        })
    }

    fn validate_source(&self, src: &SourceSpec, v: &mut Vec<Violation>) {
        let m = self.modes.len();
        match src {
            SourceSpec::TwoPhoton {
                idler,
                signal,
                idler_packet,
                signal_packet,
                relative_phase,
            } => {
                if idler == signal {
                    v.push(Violation::InvalidSource("two-photon source needs two distinct modes".into()));
                }
                if *idler >= m || *signal >= m {
                    v.push(Violation::InvalidSource("source mode does not exist".into()));
                }
                for p in [idler_packet, signal_packet] {
                    if !(p.bandwidth > 0.0 && p.bandwidth.is_finite() && p.center_time.is_finite()) {
                        v.push(Violation::InvalidSource("packet bandwidth must be positive".into()));
                    }
                }
                if let CoherenceMode::Fixed(p) = relative_phase {
                    if !p.is_finite() {
                        v.push(Violation::InvalidSource("relative phase is not finite".into()));
                    }
                }
            }
            SourceSpec::Coherent { amplitudes } => {
                if amplitudes.len() != m {
                    v.push(Violation::InvalidSource(format!(
                        "coherent source has {} amplitudes for {m} modes",
                        amplitudes.len()
                    )));
                }
                if amplitudes.iter().any(|a| !(a.re.is_finite() && a.im.is_finite())) {
                    v.push(Violation::InvalidSource("coherent amplitudes must be finite".into()));
                }
            }
            SourceSpec::FockInput { occupation } => {
                if occupation.len() != m {
                    v.push(Violation::InvalidSource(format!(
                        "occupation vector has {} entries for {m} modes",
                        occupation.len()
                    )));
                }
            }
        }
    }

    pub fn validated(self) -> Result<ValidatedCircuit, CircuitError> {
        let report = self.validate();
        if report.is_ok() {
            let order = self.ordered();
            Ok(ValidatedCircuit { circuit: self, order })
        } else {
            Err(CircuitError::Invalid(report))
        }
    }

    /// `self` followed by `next`. Both must carry the same mode labels; the
    /// source of `self` is kept.
    pub fn then(&self, next: &Circuit) -> Result<Circuit, CircuitError> {
        if self.modes != next.modes {
            return Err(CircuitError::ModeMismatch);
        }
        let offset = self.max_stage().map_or(0, |s| s + 1);
        let mut out = self.clone();
        out.elements.extend(next.elements.iter().map(|e| Element {
            kind: e.kind.clone(),
            stage: e.stage + offset,
        }));
        Ok(out)
    }
}

/// A circuit that passed [`Circuit::validate`]. Immutable.
#[derive(Clone, Debug, PartialEq)]
pub struct ValidatedCircuit {
    circuit: Circuit,
    order: Vec<usize>,
}

impl ValidatedCircuit {
    pub fn circuit(&self) -> &Circuit {
        &self.circuit
    }

    pub fn num_modes(&self) -> usize {
        self.circuit.modes.len()
    }

    pub fn source(&self) -> Option<&SourceSpec> {
        self.circuit.source.as_ref()
    }

    pub fn label(&self, mode: usize) -> &str {
        &self.circuit.modes[mode].label
    }

    /// Elements in execution order.
    pub fn steps(&self) -> impl Iterator<Item = &Element> + '_ {
        self.order.iter().map(move |&i| &self.circuit.elements[i])
    }

    /// `(detector id, mode)` pairs sorted by detector id.
    pub fn detectors(&self) -> Vec<(DetectorId, usize)> {
        let mut d: Vec<_> = self
            .circuit
            .elements
            .iter()
            .filter_map(|e| match e.kind {
                ElementKind::Detector { mode, id } => Some((id, mode)),
                _ => None,
            })
            .collect();
        d.sort_unstable();
        d
    }

    pub fn detector_mode(&self, id: DetectorId) -> Option<usize> {
        self.detectors().into_iter().find(|&(d, _)| d == id).map(|(_, m)| m)
    }

    /// Same network with a different source, revalidated.
    pub fn with_source(&self, source: SourceSpec) -> Result<ValidatedCircuit, CircuitError> {
        let mut c = self.circuit.clone();
        c.source = Some(source);
        c.validated()
    }

    /// Sum of `Delay` elements on `mode` (all of them sit before any mixing).
    pub fn delay_on(&self, mode: usize) -> f64 {
        self.steps()
            .filter_map(|e| match e.kind {
                ElementKind::Delay { mode: m, delay } if m == mode => Some(delay),
                _ => None,
            })
            .sum()
    }
}

/// Transfer matrix of a single element, embedded in `m` modes.
pub fn element_matrix(kind: &ElementKind, m: usize) -> Unitary {
    let mut u = Unitary::identity(m, m);
    match *kind {
        ElementKind::Beamsplitter { a, b, t, r } => {
            let blk = ElementKind::splitter_block(t, r);
            u[(a, a)] = blk[0][0];
            u[(a, b)] = blk[0][1];
            u[(b, a)] = blk[1][0];
            u[(b, b)] = blk[1][1];
        }
        ElementKind::PhaseShift { mode, phase } => {
            u[(mode, mode)] = Complex64::from_polar(1.0, phase);
        }
        ElementKind::Delay { .. } | ElementKind::Detector { .. } => {}
    }
    u
}

/// Mode-space unitary of the passive network (sources are ignored).
pub fn compile_unitary(circuit: &ValidatedCircuit) -> Unitary {
    let m = circuit.num_modes();
    circuit
        .steps()
        .fold(Unitary::identity(m, m), |acc, el| element_matrix(&el.kind, m) * acc)
}

/// `max |U†U - I|`.
pub fn unitarity_defect(u: &Unitary) -> f64 {
    let n = u.ncols();
    let g = u.adjoint() * u;
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((g[(i, j)] - Complex64::new(target, 0.0)).norm());
        }
    }
    worst
}
