//! Truncated Fock-space engine for photon-number and coherent states.
//!
//! States live in the occupation-number basis. Partially distinguishable
//! photons are handled by giving every physical mode `copies` internal
//! temporal copies; internal mode `copy * M + mode` carries the part of the
//! wavepacket orthogonal to the other copies. Passive elements act
//! identically on every copy and detectors do not resolve them.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::circuit::{
    compile_unitary, Circuit, CircuitError, DetectorId, ElementKind, PacketParams, SourceSpec,
    ValidatedCircuit,
};

pub type Occupation = Vec<u8>;

/// Amplitudes below this modulus are dropped after each element.
const PRUNE: f64 = 1e-14;

pub const DEFAULT_N_MAX: usize = 4;

#[derive(Debug, Error, PartialEq)]
pub enum FockError {
    #[error("unknown mode {0}")]
    UnknownMode(usize),
    #[error("state with {n} photons exceeds truncation N_max = {n_max}")]
    Truncation { n: usize, n_max: usize },
    #[error("state has {state} modes but the circuit has {circuit}")]
    ModeCount { state: usize, circuit: usize },
    #[error("conditioning event has zero probability")]
    ZeroProbability,
    #[error("circuit has no source")]
    MissingSource,
    #[error("{0}")]
    Circuit(String),
}

impl From<CircuitError> for FockError {
    fn from(e: CircuitError) -> Self {
        Self::Circuit(e.to_string())
    }
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

fn binomial(n: usize, k: usize) -> f64 {
    factorial(n) / (factorial(k) * factorial(n - k))
}

fn cpow(z: Complex64, n: usize) -> Complex64 {
    (0..n).fold(Complex64::new(1.0, 0.0), |acc, _| acc * z)
}

#[derive(Clone, Debug, PartialEq)]
pub struct FockState {
    modes: usize,
    copies: usize,
    n_max: usize,
    amps: BTreeMap<Occupation, Complex64>,
}

impl FockState {
    pub fn vacuum(modes: usize, n_max: usize) -> Self {
        Self::vacuum_with_copies(modes, 1, n_max)
    }

    pub fn vacuum_with_copies(modes: usize, copies: usize, n_max: usize) -> Self {
        let mut amps = BTreeMap::new();
        amps.insert(vec![0; modes * copies], Complex64::new(1.0, 0.0));
        Self {
            modes,
            copies,
            n_max,
            amps,
        }
    }

    pub fn empty(modes: usize, copies: usize, n_max: usize) -> Self {
        Self {
            modes,
            copies,
            n_max,
            amps: BTreeMap::new(),
        }
    }

    /// Single basis state `|occupation⟩` (one temporal copy).
    pub fn basis(occupation: &[u8], n_max: usize) -> Result<Self, FockError> {
        let mut s = Self::empty(occupation.len(), 1, n_max);
        s.insert(occupation.to_vec(), Complex64::new(1.0, 0.0))?;
        Ok(s)
    }

    /// Adds `amp` to the coefficient of `occ`.
    pub fn insert(&mut self, occ: Occupation, amp: Complex64) -> Result<(), FockError> {
        assert_eq!(occ.len(), self.internal_modes(), "occupation length");
        let n: usize = occ.iter().map(|&k| k as usize).sum();
        if n > self.n_max {
            return Err(FockError::Truncation { n, n_max: self.n_max });
        }
        *self.amps.entry(occ).or_default() += amp;
        Ok(())
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    pub fn copies(&self) -> usize {
        self.copies
    }

    pub fn internal_modes(&self) -> usize {
        self.modes * self.copies
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn amplitude(&self, occ: &[u8]) -> Complex64 {
        self.amps.get(occ).copied().unwrap_or_default()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Occupation, &Complex64)> {
        self.amps.iter()
    }

    pub fn len(&self) -> usize {
        self.amps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.amps.is_empty()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.values().map(|a| a.norm_sqr()).sum()
    }

    pub fn normalized(mut self) -> Option<Self> {
        let n = self.norm_sqr().sqrt();
        if n == 0.0 {
            return None;
        }
        for a in self.amps.values_mut() {
            *a /= n;
        }
        Some(self)
    }

    pub fn scaled(mut self, z: Complex64) -> Self {
        for a in self.amps.values_mut() {
            *a *= z;
        }
        self
    }

    /// `self + z * other`. Layouts must match.
    pub fn add_scaled(&mut self, other: &FockState, z: Complex64) {
        assert_eq!(self.internal_modes(), other.internal_modes());
        for (occ, a) in &other.amps {
            *self.amps.entry(occ.clone()).or_default() += z * a;
        }
    }

    /// Photons per physical mode (temporal copies summed).
    pub fn physical_counts(&self, occ: &[u8]) -> Vec<u8> {
        let mut out = vec![0u8; self.modes];
        for (k, &n) in occ.iter().enumerate() {
            out[k % self.modes] += n;
        }
        out
    }

    /// Probability of each total photon number.
    pub fn number_distribution(&self) -> BTreeMap<usize, f64> {
        let mut out = BTreeMap::new();
        for (occ, a) in &self.amps {
            let n: usize = occ.iter().map(|&k| k as usize).sum();
            *out.entry(n).or_default() += a.norm_sqr();
        }
        out
    }

    /// `Σ_k v_k a†_k` applied to the state; `v` is indexed by internal mode.
    pub fn create(&self, v: &[Complex64]) -> Result<Self, FockError> {
        assert_eq!(v.len(), self.internal_modes());
        let mut out = Self::empty(self.modes, self.copies, self.n_max);
        for (occ, a) in &self.amps {
            for (k, &vk) in v.iter().enumerate() {
                if vk == Complex64::default() {
                    continue;
                }
                let mut next = occ.clone();
                next[k] += 1;
                let f = ((occ[k] as f64) + 1.0).sqrt();
                out.insert(next, a * vk * f)?;
            }
        }
        out.prune();
        Ok(out)
    }

    /// Keeps only basis states whose physical count on `mode` equals `n`.
    pub fn project_count(&self, mode: usize, n: u8) -> Self {
        let mut out = Self::empty(self.modes, self.copies, self.n_max);
        for (occ, a) in &self.amps {
            if self.physical_counts(occ)[mode] == n {
                out.amps.insert(occ.clone(), *a);
            }
        }
        out
    }

    /// Internal occupations of `mode`, one entry per temporal copy.
    pub fn mode_occupation(&self, occ: &[u8], mode: usize) -> Vec<u8> {
        (0..self.copies).map(|c| occ[c * self.modes + mode]).collect()
    }

    /// Keeps only basis states whose internal occupations of `mode` equal
    /// `per_copy`.
    pub fn project_internal(&self, mode: usize, per_copy: &[u8]) -> Self {
        let mut out = Self::empty(self.modes, self.copies, self.n_max);
        for (occ, a) in &self.amps {
            if self.mode_occupation(occ, mode) == per_copy {
                out.amps.insert(occ.clone(), *a);
            }
        }
        out
    }

    /// Annihilation operator on an internal mode.
    pub fn annihilate(&self, internal: usize) -> Self {
        let mut out = Self::empty(self.modes, self.copies, self.n_max);
        for (occ, a) in &self.amps {
            if occ[internal] > 0 {
                let mut next = occ.clone();
                next[internal] -= 1;
                *out.amps.entry(next).or_default() += a * (occ[internal] as f64).sqrt();
            }
        }
        out
    }

    /// Removes every photon from `mode` (all temporal copies), merging
    /// basis states that become equal. Used after a projective detection.
    pub fn clear_mode(&self, mode: usize) -> Self {
        let mut out = Self::empty(self.modes, self.copies, self.n_max);
        for (occ, a) in &self.amps {
            let mut next = occ.clone();
            for c in 0..self.copies {
                next[c * self.modes + mode] = 0;
            }
            *out.amps.entry(next).or_default() += a;
        }
        out
    }

    /// Inner product `⟨self|other⟩`.
    pub fn inner(&self, other: &FockState) -> Complex64 {
        self.amps
            .iter()
            .map(|(occ, a)| a.conj() * other.amplitude(occ))
            .sum()
    }

    fn prune(&mut self) {
        self.amps.retain(|_, a| a.norm() > PRUNE);
    }

    fn check_mode(&self, mode: usize) -> Result<(), FockError> {
        if mode >= self.modes {
            Err(FockError::UnknownMode(mode))
        } else {
            Ok(())
        }
    }

    fn max_photons(&self) -> usize {
        self.amps
            .keys()
            .map(|o| o.iter().map(|&k| k as usize).sum())
            .max()
            .unwrap_or(0)
    }
}

/// Every occupation vector over `m` modes with total photon number `≤ n_max`.
pub fn occupations(m: usize, n_max: usize) -> Vec<Occupation> {
    fn rec(m: usize, left: usize, cur: &mut Occupation, out: &mut Vec<Occupation>) {
        if cur.len() == m {
            out.push(cur.clone());
            return;
        }
        for k in 0..=left {
            cur.push(k as u8);
            rec(m, left - k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(m, n_max, &mut Vec::with_capacity(m), &mut out);
    out
}

fn apply_splitter(state: &FockState, a: usize, b: usize, t: Complex64, r: Complex64) -> FockState {
    let [[uaa, uab], [uba, ubb]] = ElementKind::splitter_block(t, r);
    let mut out = FockState::empty(state.modes, state.copies, state.n_max);
    for (occ, amp) in &state.amps {
        let (p, q) = (occ[a] as usize, occ[b] as usize);
        let norm = 1.0 / (factorial(p) * factorial(q)).sqrt();
        for i in 0..=p {
            let ca = cpow(uaa, p - i) * cpow(uba, i) * binomial(p, i);
            for j in 0..=q {
                let cb = cpow(uab, q - j) * cpow(ubb, j) * binomial(q, j);
                let x = (p - i) + (q - j);
                let y = i + j;
                let mut next = occ.clone();
                next[a] = x as u8;
                next[b] = y as u8;
                let coef = amp * ca * cb * (factorial(x) * factorial(y)).sqrt() * norm;
                *out.amps.entry(next).or_default() += coef;
            }
        }
    }
    out.prune();
    out
}

/// Applies one element to every temporal copy.
pub fn apply_element(state: &FockState, element: &ElementKind) -> Result<FockState, FockError> {
    for mode in element.modes() {
        state.check_mode(mode)?;
    }
    let n = state.max_photons();
    if n > state.n_max {
        return Err(FockError::Truncation { n, n_max: state.n_max });
    }
    let m = state.modes;
    match *element {
        ElementKind::Beamsplitter { a, b, t, r } => {
            let mut s = state.clone();
            for c in 0..state.copies {
                s = apply_splitter(&s, c * m + a, c * m + b, t, r);
            }
            Ok(s)
        }
        ElementKind::PhaseShift { mode, phase } => {
            let mut s = state.clone();
            for (occ, amp) in s.amps.iter_mut() {
                let n: usize = (0..state.copies).map(|c| occ[c * m + mode] as usize).sum();
                *amp *= Complex64::from_polar(1.0, phase * n as f64);
            }
            Ok(s)
        }
        ElementKind::Delay { .. } | ElementKind::Detector { .. } => Ok(state.clone()),
    }
}

/// Sequential [`apply_element`] over the circuit's stage order.
pub fn propagate(state: &FockState, circuit: &ValidatedCircuit) -> Result<FockState, FockError> {
    if state.modes != circuit.num_modes() {
        return Err(FockError::ModeCount {
            state: state.modes,
            circuit: circuit.num_modes(),
        });
    }
    circuit
        .steps()
        .try_fold(state.clone(), |s, el| apply_element(&s, &el.kind))
}

/// Overlap `∫ f₁ f₂ dt` of two normalized Gaussian amplitude envelopes
/// `f(t) ∝ exp(-σ² t² / 4)` (intensity width `1/σ`) whose centres differ by
/// `delta`.
pub fn gaussian_overlap(sigma1: f64, sigma2: f64, delta: f64) -> f64 {
    let s2 = sigma1 * sigma1 + sigma2 * sigma2;
    (2.0 * sigma1 * sigma2 / s2).sqrt() * (-(sigma1 * sigma1 * sigma2 * sigma2 * delta * delta) / (4.0 * s2)).exp()
}

/// A prepared input: the Fock state plus the idler/signal packet overlap
/// that fixed its temporal layout.
#[derive(Clone, Debug, PartialEq)]
pub struct PreparedInput {
    pub state: FockState,
    pub overlap: f64,
}

/// Photon pair on `(idler, signal)` with global phase `e^{iδθ}`.
///
/// `delta` is the extra arrival-time offset of the signal relative to the
/// idler (delays on the arms). With overlap `V = 1` the state is `|1,1⟩` on a
/// single copy; otherwise the signal photon is split as
/// `V a†(signal, early) + sqrt(1 - V²) a†(signal, late)`.
#[allow(clippy::too_many_arguments)]
pub fn two_photon_source(
    modes: usize,
    idler: usize,
    signal: usize,
    idler_packet: &PacketParams,
    signal_packet: &PacketParams,
    delta_theta: f64,
    delta: f64,
    n_max: usize,
) -> Result<PreparedInput, FockError> {
    if idler >= modes {
        return Err(FockError::UnknownMode(idler));
    }
    if signal >= modes {
        return Err(FockError::UnknownMode(signal));
    }
    let offset = signal_packet.center_time + delta - idler_packet.center_time;
    let v = gaussian_overlap(idler_packet.bandwidth, signal_packet.bandwidth, offset);
    let copies = if (v - 1.0).abs() < 1e-15 { 1 } else { 2 };
    let vac = FockState::vacuum_with_copies(modes, copies, n_max);
    let mut vi = vec![Complex64::default(); modes * copies];
    vi[idler] = Complex64::from_polar(1.0, delta_theta);
    let mut vs = vec![Complex64::default(); modes * copies];
    vs[signal] = Complex64::new(v.min(1.0), 0.0);
    if copies == 2 {
        vs[modes + signal] = Complex64::new((1.0 - v * v).max(0.0).sqrt(), 0.0);
    }
    let state = vac.create(&vi)?.create(&vs)?;
    Ok(PreparedInput { state, overlap: v })
}

/// Truncated Fock expansion of a product of coherent states. The result is
/// not renormalized; its missing norm is the truncation tail.
pub fn coherent_fock_state(field: &CoherentField, n_max: usize) -> FockState {
    let m = field.alpha.len();
    let vac = (-field.alpha.iter().map(|a| a.norm_sqr()).sum::<f64>() / 2.0).exp();
    let mut s = FockState::empty(m, 1, n_max);
    for occ in occupations(m, n_max) {
        let mut amp = Complex64::new(vac, 0.0);
        for (a, &n) in field.alpha.iter().zip(&occ) {
            amp *= cpow(*a, n as usize) / factorial(n as usize).sqrt();
        }
        if amp.norm() > 0.0 {
            s.amps.insert(occ, amp);
        }
    }
    s
}

/// Injects the circuit's source as a Fock state.
pub fn prepare_input(circuit: &ValidatedCircuit, n_max: usize) -> Result<PreparedInput, FockError> {
    let m = circuit.num_modes();
    match circuit.source().ok_or(FockError::MissingSource)? {
        SourceSpec::TwoPhoton {
            idler,
            signal,
            idler_packet,
            signal_packet,
            relative_phase,
        } => {
            let delta = circuit.delay_on(*signal) - circuit.delay_on(*idler);
            two_photon_source(
                m,
                *idler,
                *signal,
                idler_packet,
                signal_packet,
                relative_phase.representative(),
                delta,
                n_max,
            )
        }
        SourceSpec::FockInput { occupation } => Ok(PreparedInput {
            state: FockState::basis(occupation, n_max)?,
            overlap: 1.0,
        }),
        SourceSpec::Coherent { amplitudes } => Ok(PreparedInput {
            state: coherent_fock_state(
                &CoherentField {
                    alpha: amplitudes.clone(),
                },
                n_max,
            ),
            overlap: 1.0,
        }),
    }
}

/// Predicate over detector click patterns.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum ClickEvent {
    Always,
    /// At least one photon at the detector.
    Fires(DetectorId),
    Count(DetectorId, u8),
    Not(Box<ClickEvent>),
    And(Vec<ClickEvent>),
    Or(Vec<ClickEvent>),
    Xor(Box<ClickEvent>, Box<ClickEvent>),
}

impl ClickEvent {
    pub fn fires(d: DetectorId) -> Self {
        Self::Fires(d)
    }

    pub fn silent(d: DetectorId) -> Self {
        Self::Not(Box::new(Self::Fires(d)))
    }

    pub fn both(d1: DetectorId, d2: DetectorId) -> Self {
        Self::And(vec![Self::Fires(d1), Self::Fires(d2)])
    }

    pub fn xor(d1: DetectorId, d2: DetectorId) -> Self {
        Self::Xor(Box::new(Self::Fires(d1)), Box::new(Self::Fires(d2)))
    }

    /// `d1` fires and `d2` does not.
    pub fn only(d1: DetectorId, d2: DetectorId) -> Self {
        Self::And(vec![Self::Fires(d1), Self::silent(d2)])
    }

    pub fn and(self, other: ClickEvent) -> Self {
        Self::And(vec![self, other])
    }

    pub fn holds(&self, detectors: &[DetectorId], counts: &[u8]) -> bool {
        let count = |d: DetectorId| {
            detectors
                .iter()
                .position(|&x| x == d)
                .map_or(0, |i| counts[i])
        };
        match self {
            Self::Always => true,
            Self::Fires(d) => count(*d) > 0,
            Self::Count(d, n) => count(*d) == *n,
            Self::Not(e) => !e.holds(detectors, counts),
            Self::And(es) => es.iter().all(|e| e.holds(detectors, counts)),
            Self::Or(es) => es.iter().any(|e| e.holds(detectors, counts)),
            Self::Xor(a, b) => a.holds(detectors, counts) ^ b.holds(detectors, counts),
        }
    }
}

impl fmt::Display for ClickEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Always => write!(f, "always"),
            Self::Fires(d) => write!(f, "{d}"),
            Self::Count(d, n) => write!(f, "n{d}={n}"),
            Self::Not(e) => write!(f, "!{e}"),
            Self::And(es) | Self::Or(es) => {
                let sep = if matches!(self, Self::And(_)) { "&" } else { "|" };
                write!(f, "(")?;
                for (i, e) in es.iter().enumerate() {
                    if i > 0 {
                        write!(f, "{sep}")?;
                    }
                    write!(f, "{e}")?;
                }
                write!(f, ")")
            }
            Self::Xor(a, b) => write!(f, "({a} xor {b})"),
        }
    }
}

/// Probabilities of detector click patterns. Patterns are photon counts per
/// detector, ordered as `detectors`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClickDistribution {
    pub detectors: Vec<DetectorId>,
    pub outcomes: BTreeMap<Vec<u8>, f64>,
    pub condition: Option<String>,
}

impl ClickDistribution {
    pub fn new(detectors: Vec<DetectorId>) -> Self {
        Self {
            detectors,
            outcomes: BTreeMap::new(),
            condition: None,
        }
    }

    pub fn add(&mut self, pattern: Vec<u8>, p: f64) {
        *self.outcomes.entry(pattern).or_default() += p;
    }

    pub fn total(&self) -> f64 {
        self.outcomes.values().sum()
    }

    pub fn probability(&self, event: &ClickEvent) -> f64 {
        self.outcomes
            .iter()
            .filter(|(pat, _)| event.holds(&self.detectors, pat))
            .map(|(_, p)| p)
            .sum()
    }

    /// `P(event | given)`.
    pub fn conditional_probability(&self, event: &ClickEvent, given: &ClickEvent) -> Result<f64, FockError> {
        let pg = self.probability(given);
        if pg <= 0.0 {
            return Err(FockError::ZeroProbability);
        }
        Ok(self.probability(&ClickEvent::And(vec![event.clone(), given.clone()])) / pg)
    }
}

pub fn detection_distribution(state: &FockState, circuit: &ValidatedCircuit) -> ClickDistribution {
    let dets = circuit.detectors();
    let mut dist = ClickDistribution::new(dets.iter().map(|&(d, _)| d).collect());
    for (occ, a) in state.iter() {
        let counts = state.physical_counts(occ);
        let pattern = dets.iter().map(|&(_, m)| counts[m]).collect();
        dist.add(pattern, a.norm_sqr());
    }
    dist
}

/// Bayes-renormalized distribution restricted to `condition`.
pub fn conditional_distribution(
    dist: &ClickDistribution,
    condition: &ClickEvent,
) -> Result<ClickDistribution, FockError> {
    let pc = dist.probability(condition);
    if pc <= 0.0 {
        return Err(FockError::ZeroProbability);
    }
    let mut out = ClickDistribution::new(dist.detectors.clone());
    for (pat, p) in &dist.outcomes {
        if condition.holds(&dist.detectors, pat) {
            out.add(pat.clone(), p / pc);
        }
    }
    out.condition = Some(condition.to_string());
    Ok(out)
}

/// Two-mode HOM setup with the signal delayed by `tau`.
pub fn hom_circuit(sigma: f64, tau: f64) -> ValidatedCircuit {
    let mut c = Circuit::new();
    let i = c.add_mode("idler");
    let s = c.add_mode("signal");
    c.push(0, ElementKind::Delay { mode: s, delay: tau })
        .push(1, ElementKind::balanced(i, s))
        .push(2, ElementKind::Detector { mode: i, id: 1 })
        .push(2, ElementKind::Detector { mode: s, id: 2 });
    c.set_source(SourceSpec::TwoPhoton {
        idler: i,
        signal: s,
        idler_packet: PacketParams::gaussian(0.0, sigma),
        signal_packet: PacketParams::gaussian(0.0, sigma),
        relative_phase: crate::circuit::CoherenceMode::Fixed(0.0),
    });
    c.validated().expect("HOM circuit is valid")
}

/// Coincidence probability at each delay, computed by propagating the
/// prepared pair through the HOM circuit.
pub fn hom_dip(sigma: f64, taus: &[f64]) -> Vec<f64> {
    taus.par_iter()
        .map(|&tau| {
            let circ = hom_circuit(sigma, tau);
            let input = prepare_input(&circ, 2).expect("pair fits N_max = 2");
            let out = propagate(&input.state, &circ).expect("passive network");
            detection_distribution(&out, &circ).probability(&ClickEvent::both(1, 2))
        })
        .collect()
}

/// One complex amplitude per mode.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoherentField {
    pub alpha: Vec<Complex64>,
}

impl CoherentField {
    pub fn vacuum(m: usize) -> Self {
        Self {
            alpha: vec![Complex64::default(); m],
        }
    }

    pub fn mean_counts(&self) -> Vec<f64> {
        self.alpha.iter().map(|a| a.norm_sqr()).collect()
    }
}

/// `α_out = U α_in`.
pub fn propagate_coherent(field: &CoherentField, circuit: &ValidatedCircuit) -> Result<CoherentField, FockError> {
    if field.alpha.len() != circuit.num_modes() {
        return Err(FockError::ModeCount {
            state: field.alpha.len(),
            circuit: circuit.num_modes(),
        });
    }
    let u = compile_unitary(circuit);
    let a = nalgebra::DVector::from_column_slice(&field.alpha);
    Ok(CoherentField {
        alpha: (u * a).iter().copied().collect(),
    })
}

pub fn poisson_pmf(lambda: f64, n: usize) -> f64 {
    if lambda == 0.0 {
        return if n == 0 { 1.0 } else { 0.0 };
    }
    (-lambda + n as f64 * lambda.ln() - factorial(n).ln()).exp()
}

/// Detector statistics of a coherent output field: independent Poisson
/// counts with mean `|α_d|²` at each detector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoherentClickStatistics {
    pub detectors: Vec<DetectorId>,
    pub means: Vec<f64>,
}

impl CoherentClickStatistics {
    pub fn mean(&self, d: DetectorId) -> Option<f64> {
        self.detectors.iter().position(|&x| x == d).map(|i| self.means[i])
    }

    pub fn joint_probability(&self, counts: &[u8]) -> f64 {
        self.means
            .iter()
            .zip(counts)
            .map(|(&l, &n)| poisson_pmf(l, n as usize))
            .product()
    }

    pub fn no_click_probability(&self) -> f64 {
        self.joint_probability(&vec![0; self.means.len()])
    }
}

pub fn coherent_click_statistics(field: &CoherentField, circuit: &ValidatedCircuit) -> CoherentClickStatistics {
    let dets = circuit.detectors();
    CoherentClickStatistics {
        detectors: dets.iter().map(|&(d, _)| d).collect(),
        means: dets.iter().map(|&(_, m)| field.alpha[m].norm_sqr()).collect(),
    }
}

/// Evidence that the joint count distribution factorizes: the truncated
/// input expansion is pushed through the Fock engine and compared against
/// the product of Poisson laws.
#[derive(Clone, Debug, PartialEq)]
pub struct IndependenceCertificate {
    pub max_deviation: f64,
    pub truncation_tail: f64,
}

pub fn independence_certificate(
    input: &CoherentField,
    circuit: &ValidatedCircuit,
    n_max: usize,
) -> Result<IndependenceCertificate, FockError> {
    let expanded = coherent_fock_state(input, n_max);
    let tail = 1.0 - expanded.norm_sqr();
    let out = propagate(&expanded, circuit)?;
    let means = propagate_coherent(input, circuit)?.mean_counts();
    let mut worst: f64 = 0.0;
    for occ in occupations(circuit.num_modes(), n_max) {
        let p = out.amplitude(&occ).norm_sqr();
        let q: f64 = means
            .iter()
            .zip(&occ)
            .map(|(&l, &n)| poisson_pmf(l, n as usize))
            .product();
        worst = worst.max((p - q).abs());
    }
    Ok(IndependenceCertificate {
        max_deviation: worst,
        truncation_tail: tail,
    })
}

/// Two-photon amplitude `ψ(m₁, m₂) = (1/√2) ⟨0| a_{m₁} a_{m₂} |ψ⟩` over
/// internal modes.
pub fn two_photon_amplitude(state: &FockState) -> DMatrix<Complex64> {
    let k = state.internal_modes();
    let mut psi = DMatrix::zeros(k, k);
    for m1 in 0..k {
        for m2 in 0..k {
            let mut occ = vec![0u8; k];
            occ[m1] += 1;
            occ[m2] += 1;
            let f = if m1 == m2 { 2f64.sqrt() } else { 1.0 };
            psi[(m1, m2)] = state.amplitude(&occ) * f / 2f64.sqrt();
        }
    }
    psi
}

/// `(1/√2)(Σ c_m a†_m)² |0⟩` for a normalized single-photon spectrum `c`.
pub fn identical_pair(c: &[Complex64]) -> Result<FockState, FockError> {
    let vac = FockState::vacuum(c.len(), 2);
    Ok(vac.create(c)?.create(c)?.scaled(Complex64::new(1.0 / 2f64.sqrt(), 0.0)))
}

/// `max |ψ(m₁,m₂) − c(m₁)c(m₂)|` for two photons sharing the spectrum `c`.
pub fn factorization_check(c: &[Complex64]) -> Result<f64, FockError> {
    let psi = two_photon_amplitude(&identical_pair(c)?);
    let mut worst: f64 = 0.0;
    for i in 0..c.len() {
        for j in 0..c.len() {
            worst = worst.max((psi[(i, j)] - c[i] * c[j]).norm());
        }
    }
    Ok(worst)
}

/// Hilbert–Schmidt distance from a two-photon amplitude to its best
/// product approximation (all singular values past the first).
pub fn product_residual(psi: &DMatrix<Complex64>) -> f64 {
    let sv = psi.clone().svd(false, false).singular_values;
    let mut s: Vec<f64> = sv.iter().copied().collect();
    s.sort_by(|a, b| b.partial_cmp(a).unwrap());
    s.iter().skip(1).map(|x| x * x).sum::<f64>().sqrt()
}

/// `max_k |a_k − e^{iφ} b_k|` with `φ` fixed by the overlap `⟨b|a⟩`.
pub fn max_diff_up_to_phase(a: &[Complex64], b: &[Complex64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let ov: Complex64 = b.iter().zip(a).map(|(x, y)| x.conj() * y).sum();
    let ph = if ov.norm() > 0.0 {
        ov / ov.norm()
    } else {
        Complex64::new(1.0, 0.0)
    };
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - ph * y).norm())
        .fold(0.0, f64::max)
}

/// State comparison up to one global phase.
pub fn state_distance_up_to_phase(a: &FockState, b: &FockState) -> f64 {
    let keys: std::collections::BTreeSet<&Occupation> = a.amps.keys().chain(b.amps.keys()).collect();
    let va: Vec<Complex64> = keys.iter().map(|k| a.amplitude(k)).collect();
    let vb: Vec<Complex64> = keys.iter().map(|k| b.amplitude(k)).collect();
    max_diff_up_to_phase(&va, &vb)
}

/// Wraps a phase into `[0, 2π)`.
pub fn wrap_phase(x: f64) -> f64 {
    x.rem_euclid(2.0 * PI)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::ElementKind;
    use std::f64::consts::FRAC_1_SQRT_2;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn two_mode_state(entries: &[([u8; 2], Complex64)]) -> FockState {
        let mut s = FockState::empty(2, 1, 4);
        for (o, a) in entries {
            s.insert(o.to_vec(), *a).unwrap();
        }
        s
    }

    #[test]
    fn single_photon_through_balanced_splitter() {
        let s = FockState::basis(&[1, 0], 4).unwrap();
        let out = apply_element(&s, &ElementKind::balanced(0, 1)).unwrap();
        let expect = two_mode_state(&[([1, 0], c(FRAC_1_SQRT_2, 0.0)), ([0, 1], c(0.0, FRAC_1_SQRT_2))]);
        assert!(state_distance_up_to_phase(&out, &expect) < 1e-15);
        assert!((out.amplitude(&[0, 1]) - c(0.0, FRAC_1_SQRT_2)).norm() < 1e-15);
    }

    #[test]
    fn pair_bunches() {
        let s = FockState::basis(&[1, 1], 4).unwrap();
        let out = apply_element(&s, &ElementKind::balanced(0, 1)).unwrap();
        assert_eq!(out.amplitude(&[1, 1]), c(0.0, 0.0));
        assert!((out.amplitude(&[2, 0]) - c(0.0, FRAC_1_SQRT_2)).norm() < 1e-15);
        assert!((out.amplitude(&[0, 2]) - c(0.0, FRAC_1_SQRT_2)).norm() < 1e-15);
    }

    /// Oracle: expand `(a†₁ + i a†₂)² / (2√2)` as a polynomial and read off
    /// coefficients of `a†₁^x a†₂^y`, each monomial contributing `√(x! y!)`.
    #[test]
    fn two_photons_in_one_port() {
        let s = FockState::basis(&[2, 0], 4).unwrap();
        let out = apply_element(&s, &ElementKind::balanced(0, 1)).unwrap();
        let poly = [c(1.0, 0.0), c(0.0, 2.0), c(-1.0, 0.0)]; // x², 2i xy, -y²
        let pref = 1.0 / (2.0 * 2f64.sqrt());
        let weights = [2f64.sqrt(), 1.0, 2f64.sqrt()];
        let occs = [[2u8, 0], [1, 1], [0, 2]];
        for k in 0..3 {
            let want = poly[k] * pref * weights[k];
            assert!((out.amplitude(&occs[k]) - want).norm() < 1e-15, "{k}");
        }
        assert!((out.amplitude(&[2, 0]) - c(0.5, 0.0)).norm() < 1e-15);
        assert!((out.amplitude(&[0, 2]) - c(-0.5, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn vacuum_is_invariant() {
        let mut circ = Circuit::new();
        circ.add_mode("a");
        circ.add_mode("b");
        circ.push(0, ElementKind::splitter(0, 1, 0.2))
            .push(1, ElementKind::PhaseShift { mode: 1, phase: 0.7 });
        let v = FockState::vacuum(2, 4);
        assert_eq!(propagate(&v, &circ.validated().unwrap()).unwrap(), v);
    }

    #[test]
    fn unknown_mode_and_truncation_errors() {
        let s = FockState::basis(&[1, 0], 4).unwrap();
        assert_eq!(
            apply_element(&s, &ElementKind::PhaseShift { mode: 5, phase: 0.0 }),
            Err(FockError::UnknownMode(5))
        );
        assert!(matches!(FockState::basis(&[3, 2], 4), Err(FockError::Truncation { .. })));
    }

    #[test]
    fn overlap_limits() {
        assert!((gaussian_overlap(1.3, 1.3, 0.0) - 1.0).abs() < 1e-15);
        assert!(gaussian_overlap(1.0, 1.0, 80.0) < 1e-300);
        let s = 0.8;
        let tau = 1.7;
        assert!((gaussian_overlap(s, s, tau) - (-s * s * tau * tau / 8.0).exp()).abs() < 1e-15);
    }

    #[test]
    fn synchronized_pair_is_single_copy() {
        let p = PacketParams::gaussian(0.0, 1.0);
        let pair = two_photon_source(2, 0, 1, &p, &p, 0.3, 0.0, 2).unwrap();
        assert_eq!(pair.state.copies(), 1);
        assert!((pair.state.amplitude(&[1, 1]) - Complex64::from_polar(1.0, 0.3)).norm() < 1e-15);
        let far = two_photon_source(2, 0, 1, &p, &p, 0.0, 60.0, 2).unwrap();
        assert_eq!(far.state.copies(), 2);
        assert!(far.overlap < 1e-150);
    }

    #[test]
    fn hom_dip_values() {
        let sigma = 1.5;
        let p = hom_dip(sigma, &[0.0, 2.0 / sigma, 1e3]);
        assert!(p[0].abs() < 1e-12);
        assert!((p[1] - 0.5 * (1.0 - (-1.0f64).exp())).abs() < 1e-12);
        assert!((p[2] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn conditional_with_always_is_identity() {
        let mut d = ClickDistribution::new(vec![1, 2]);
        d.add(vec![1, 0], 0.3);
        d.add(vec![0, 1], 0.7);
        let c = conditional_distribution(&d, &ClickEvent::Always).unwrap();
        assert_eq!(c.outcomes, d.outcomes);
        assert_eq!(
            conditional_distribution(&d, &ClickEvent::both(1, 2)),
            Err(FockError::ZeroProbability)
        );
    }

    #[test]
    fn poisson_normalization() {
        let s: f64 = (0..60).map(|n| poisson_pmf(2.5, n)).sum();
        assert!((s - 1.0).abs() < 1e-12);
        assert_eq!(poisson_pmf(0.0, 0), 1.0);
    }

    #[test]
    fn factorization_of_identical_photons() {
        assert!(factorization_check(&[c(0.0, 1.0)]).unwrap() < 1e-12);
        let h = FRAC_1_SQRT_2;
        assert!(factorization_check(&[c(h, 0.0), c(h, 0.0)]).unwrap() < 1e-12);
    }

    #[test]
    fn hom_output_is_entangled() {
        let s = FockState::basis(&[1, 1], 2).unwrap();
        let out = apply_element(&s, &ElementKind::balanced(0, 1)).unwrap();
        let r = product_residual(&two_photon_amplitude(&out));
        assert!((r - FRAC_1_SQRT_2).abs() < 1e-12);
    }

    #[test]
    fn phase_comparator_ignores_global_phase() {
        let a = [c(0.6, 0.0), c(0.0, 0.8)];
        let ph = Complex64::from_polar(1.0, 2.1);
        let b: Vec<_> = a.iter().map(|x| x * ph).collect();
        assert!(max_diff_up_to_phase(&a, &b) < 1e-15);
    }
}
