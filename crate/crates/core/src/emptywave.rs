//! Hybrid model in which every photon carries its own classical wave and a
//! localized particle.
//!
//! Each wave propagates linearly through the whole network, including arms
//! that hold no particle, and is never reduced by a detection. Particles
//! choose an output at every beamsplitter with probability proportional to
//! the local intensity of the combined field,
//!
//! ```text
//! I = Σ_w |A_w|² + 2 Re Σ_{w<w'} γ A_w A_w'*
//! ```
//!
//! where `γ` is the temporal overlap of the two packets.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::circuit::{compile_unitary, CoherenceMode, DetectorId, ElementKind, SourceSpec, ValidatedCircuit};
use crate::fock::{gaussian_overlap, ClickDistribution, ClickEvent};
use crate::stats::{fit_fringe, Estimate, FringeFit, Tally};

/// Points of the periodic grid used to average over a uniform `δθ`.
pub const PHASE_AVERAGE_POINTS: usize = 128;

#[derive(Debug, Error, PartialEq)]
pub enum EmptyWaveError {
    #[error("model breakdown: every output of the junction at step {step} has zero intensity")]
    ModelBreakdown { step: usize },
    #[error("circuit has no source")]
    MissingSource,
    #[error("the particle model needs a photon-number source with at most two photons")]
    UnsupportedSource,
}

/// Wave amplitudes on every mode after every step.
///
/// `snapshots[0]` holds the inputs, `snapshots[k + 1]` the amplitudes after
/// step `k`; inside a snapshot the layout is `[wave][mode]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ArmField {
    pub snapshots: Vec<Vec<Vec<Complex64>>>,
    /// Mutual coherence of waves 0 and 1.
    pub coherence: f64,
}

impl ArmField {
    /// Amplitude of the plain sum of waves.
    pub fn coherent_sum(&self, snapshot: usize, mode: usize) -> Complex64 {
        self.snapshots[snapshot].iter().map(|w| w[mode]).sum()
    }

    pub fn intensity(&self, snapshot: usize, mode: usize) -> f64 {
        let w = &self.snapshots[snapshot];
        combined_intensity(w.iter().map(|a| a[mode]), self.coherence)
    }

    pub fn last(&self) -> usize {
        self.snapshots.len() - 1
    }
}

fn combined_intensity(amps: impl Iterator<Item = Complex64>, gamma: f64) -> f64 {
    let a: Vec<Complex64> = amps.collect();
    let mut i: f64 = a.iter().map(|z| z.norm_sqr()).sum();
    for p in 0..a.len() {
        for q in p + 1..a.len() {
            i += 2.0 * gamma * (a[p] * a[q].conj()).re;
        }
    }
    i
}

fn apply_to_amplitudes(kind: &ElementKind, a: &mut [Complex64]) {
    match *kind {
        ElementKind::Beamsplitter { a: i, b: j, t, r } => {
            let [[uaa, uab], [uba, ubb]] = ElementKind::splitter_block(t, r);
            let (x, y) = (a[i], a[j]);
            a[i] = uaa * x + uab * y;
            a[j] = uba * x + ubb * y;
        }
        ElementKind::PhaseShift { mode, phase } => a[mode] *= Complex64::from_polar(1.0, phase),
        ElementKind::Delay { .. } | ElementKind::Detector { .. } => {}
    }
}

/// Propagates each wave's input amplitudes through the network.
pub fn propagate_fields(circuit: &ValidatedCircuit, waves: &[Vec<Complex64>], coherence: f64) -> ArmField {
    let mut current: Vec<Vec<Complex64>> = waves.to_vec();
    let mut snapshots = vec![current.clone()];
    for el in circuit.steps() {
        for w in current.iter_mut() {
            apply_to_amplitudes(&el.kind, w);
        }
        snapshots.push(current.clone());
    }
    ArmField { snapshots, coherence }
}

/// Output probabilities `I_j / Σ I_k`.
pub fn routing_probabilities(intensities: &[f64]) -> Option<Vec<f64>> {
    let total: f64 = intensities.iter().map(|&x| x.max(0.0)).sum();
    if total <= 0.0 {
        return None;
    }
    Some(intensities.iter().map(|&x| x.max(0.0) / total).collect())
}

/// Picks an output index for a uniform draw `u ∈ [0, 1)`.
pub fn route_particle(intensities: &[f64], u: f64, step: usize) -> Result<usize, EmptyWaveError> {
    let p = routing_probabilities(intensities).ok_or(EmptyWaveError::ModelBreakdown { step })?;
    let mut acc = 0.0;
    for (j, pj) in p.iter().enumerate() {
        acc += pj;
        if u < acc {
            return Ok(j);
        }
    }
    Ok(p.iter().rposition(|&x| x > 0.0).unwrap_or(0))
}

/// Where the particles are and which detectors have fired.
#[derive(Clone, Debug, PartialEq)]
pub struct ParticleState {
    pub modes: Vec<usize>,
    pub detected: Vec<Option<DetectorId>>,
}

/// Source decomposed into waves and particles.
///
/// Waves are propagated once from unit inputs; a per-sample `δθ` only
/// rotates wave 0 (the idler).
#[derive(Clone, Debug)]
struct Setup {
    waves: ArmField,
    particles: Vec<usize>,
    phase: CoherenceMode,
}

fn setup(circuit: &ValidatedCircuit) -> Result<Setup, EmptyWaveError> {
    let m = circuit.num_modes();
    let unit = |mode: usize| {
        let mut v = vec![Complex64::default(); m];
        v[mode] = Complex64::new(1.0, 0.0);
        v
    };
    match circuit.source().ok_or(EmptyWaveError::MissingSource)? {
        SourceSpec::TwoPhoton {
            idler,
            signal,
            idler_packet,
            signal_packet,
            relative_phase,
        } => {
            let delta = signal_packet.center_time + circuit.delay_on(*signal)
                - idler_packet.center_time
                - circuit.delay_on(*idler);
            let gamma = gaussian_overlap(idler_packet.bandwidth, signal_packet.bandwidth, delta);
            Ok(Setup {
                waves: propagate_fields(circuit, &[unit(*idler), unit(*signal)], gamma),
                particles: vec![*idler, *signal],
                phase: *relative_phase,
            })
        }
        SourceSpec::FockInput { occupation } => {
            let particles: Vec<usize> = occupation
                .iter()
                .enumerate()
                .flat_map(|(k, &n)| std::iter::repeat_n(k, n as usize))
                .collect();
            if particles.is_empty() || particles.len() > 2 {
                return Err(EmptyWaveError::UnsupportedSource);
            }
            let waves: Vec<Vec<Complex64>> = particles.iter().map(|&p| unit(p)).collect();
            Ok(Setup {
                waves: propagate_fields(circuit, &waves, 1.0),
                particles,
                phase: CoherenceMode::Fixed(0.0),
            })
        }
        SourceSpec::Coherent { .. } => Err(EmptyWaveError::UnsupportedSource),
    }
}

impl Setup {
    /// Combined intensity at `(snapshot, mode)` for a given `δθ`.
    fn intensity(&self, snapshot: usize, mode: usize, theta: f64) -> f64 {
        let w = &self.waves.snapshots[snapshot];
        let rot = Complex64::from_polar(1.0, theta);
        combined_intensity(
            w.iter().enumerate().map(|(k, a)| if k == 0 { rot * a[mode] } else { a[mode] }),
            self.waves.coherence,
        )
    }
}

/// Per-step action for the particle walk.
enum Action {
    Split(usize, usize),
    Detect(usize, DetectorId),
    Skip,
}

fn actions(circuit: &ValidatedCircuit) -> Vec<Action> {
    circuit
        .steps()
        .map(|el| match el.kind {
            ElementKind::Beamsplitter { a, b, .. } => Action::Split(a, b),
            ElementKind::Detector { mode, id } => Action::Detect(mode, id),
            _ => Action::Skip,
        })
        .collect()
}

fn walk(
    setup: &Setup,
    acts: &[Action],
    detectors: &[DetectorId],
    theta: f64,
    rng: &mut impl Rng,
) -> Result<Vec<u8>, EmptyWaveError> {
    let mut state = ParticleState {
        modes: setup.particles.clone(),
        detected: vec![None; setup.particles.len()],
    };
    for (k, act) in acts.iter().enumerate() {
        match *act {
            Action::Split(a, b) => {
                let ia = setup.intensity(k + 1, a, theta);
                let ib = setup.intensity(k + 1, b, theta);
                for p in 0..state.modes.len() {
                    if state.detected[p].is_none() && (state.modes[p] == a || state.modes[p] == b) {
                        let j = route_particle(&[ia, ib], rng.random::<f64>(), k)?;
                        state.modes[p] = if j == 0 { a } else { b };
                    }
                }
            }
            Action::Detect(mode, id) => {
                for p in 0..state.modes.len() {
                    if state.detected[p].is_none() && state.modes[p] == mode {
                        state.detected[p] = Some(id);
                    }
                }
            }
            Action::Skip => {}
        }
    }
    Ok(detectors
        .iter()
        .map(|d| state.detected.iter().filter(|&&x| x == Some(*d)).count() as u8)
        .collect())
}

/// Monte-Carlo output of the particle model.
#[derive(Clone, Debug, PartialEq)]
pub struct EmptyWaveRun {
    pub seed: u64,
    pub tally: Tally,
    /// Samples dropped because a particle met a junction with no light.
    pub breakdowns: u64,
}

/// Samples the model on the circuit's two-photon or few-photon source.
/// With `UniformRandom` coherence `δθ` is drawn afresh for each sample.
pub fn run_model(circuit: &ValidatedCircuit, n_samples: u64, seed: u64) -> Result<EmptyWaveRun, EmptyWaveError> {
    let s = setup(circuit)?;
    let acts = actions(circuit);
    let dets: Vec<DetectorId> = circuit.detectors().iter().map(|&(d, _)| d).collect();
    let results: Vec<Result<Vec<u8>, EmptyWaveError>> = (0..n_samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i);
            let theta = match s.phase {
                CoherenceMode::Fixed(t) => t,
                CoherenceMode::UniformRandom => 2.0 * PI * rng.random::<f64>(),
            };
            walk(&s, &acts, &dets, theta, &mut rng)
        })
        .collect();
    let mut tally = Tally::new(dets);
    let mut breakdowns = 0;
    for r in results {
        match r {
            Ok(p) => tally.add(p),
            Err(_) => breakdowns += 1,
        }
    }
    Ok(EmptyWaveRun {
        seed,
        tally,
        breakdowns,
    })
}

fn enumerate(
    setup: &Setup,
    acts: &[Action],
    theta: f64,
    k: usize,
    state: ParticleState,
    p: f64,
    out: &mut BTreeMap<Vec<Option<DetectorId>>, f64>,
) -> Result<(), EmptyWaveError> {
    if p == 0.0 {
        return Ok(());
    }
    let Some(act) = acts.get(k) else {
        *out.entry(state.detected).or_default() += p;
        return Ok(());
    };
    match *act {
        Action::Split(a, b) => {
            let movers: Vec<usize> = (0..state.modes.len())
                .filter(|&q| state.detected[q].is_none() && (state.modes[q] == a || state.modes[q] == b))
                .collect();
            if movers.is_empty() {
                return enumerate(setup, acts, theta, k + 1, state, p, out);
            }
            let probs = routing_probabilities(&[setup.intensity(k + 1, a, theta), setup.intensity(k + 1, b, theta)])
                .ok_or(EmptyWaveError::ModelBreakdown { step: k })?;
            for choice in 0..(1usize << movers.len()) {
                let mut next = state.clone();
                let mut w = p;
                for (bit, &q) in movers.iter().enumerate() {
                    let j = (choice >> bit) & 1;
                    next.modes[q] = if j == 0 { a } else { b };
                    w *= probs[j];
                }
                enumerate(setup, acts, theta, k + 1, next, w, out)?;
            }
            Ok(())
        }
        Action::Detect(mode, id) => {
            let mut next = state;
            for q in 0..next.modes.len() {
                if next.detected[q].is_none() && next.modes[q] == mode {
                    next.detected[q] = Some(id);
                }
            }
            enumerate(setup, acts, theta, k + 1, next, p, out)
        }
        Action::Skip => enumerate(setup, acts, theta, k + 1, state, p, out),
    }
}

/// Exact click distribution of the model for one value of `δθ`.
fn analytic_at(circuit: &ValidatedCircuit, s: &Setup, theta: f64) -> Result<ClickDistribution, EmptyWaveError> {
    let acts = actions(circuit);
    let dets: Vec<DetectorId> = circuit.detectors().iter().map(|&(d, _)| d).collect();
    let mut leaves = BTreeMap::new();
    let start = ParticleState {
        modes: s.particles.clone(),
        detected: vec![None; s.particles.len()],
    };
    enumerate(s, &acts, theta, 0, start, 1.0, &mut leaves)?;
    let mut dist = ClickDistribution::new(dets.clone());
    for (det, p) in leaves {
        let pattern = dets
            .iter()
            .map(|d| det.iter().filter(|&&x| x == Some(*d)).count() as u8)
            .collect();
        dist.add(pattern, p);
    }
    Ok(dist)
}

/// Exact click distribution obtained by enumerating every routing branch.
/// For `UniformRandom` coherence the result is averaged over a periodic
/// grid of [`PHASE_AVERAGE_POINTS`] phases.
pub fn analytic_distribution(circuit: &ValidatedCircuit) -> Result<ClickDistribution, EmptyWaveError> {
    let s = setup(circuit)?;
    match s.phase {
        CoherenceMode::Fixed(t) => analytic_at(circuit, &s, t),
        CoherenceMode::UniformRandom => {
            let n = PHASE_AVERAGE_POINTS;
            let parts: Vec<ClickDistribution> = (0..n)
                .into_par_iter()
                .map(|i| analytic_at(circuit, &s, 2.0 * PI * i as f64 / n as f64))
                .collect::<Result<_, _>>()?;
            let mut avg = ClickDistribution::new(parts[0].detectors.clone());
            for d in parts {
                for (pat, p) in d.outcomes {
                    avg.add(pat, p / n as f64);
                }
            }
            Ok(avg)
        }
    }
}

/// Mean detector intensities for a coherent (laser) source: `|U α|²` at
/// each detector, computed by propagating the classical wave.
pub fn mean_intensities(circuit: &ValidatedCircuit) -> Result<Vec<(DetectorId, f64)>, EmptyWaveError> {
    let Some(SourceSpec::Coherent { amplitudes }) = circuit.source() else {
        return Err(EmptyWaveError::UnsupportedSource);
    };
    let field = propagate_fields(circuit, std::slice::from_ref(amplitudes), 1.0);
    let last = field.last();
    Ok(circuit
        .detectors()
        .into_iter()
        .map(|(d, m)| (d, field.intensity(last, m)))
        .collect())
}

/// Checks the wave propagation against the compiled network unitary.
pub fn propagation_defect(circuit: &ValidatedCircuit, wave: &[Complex64]) -> f64 {
    let u = compile_unitary(circuit);
    let want = u * nalgebra::DVector::from_column_slice(wave);
    let field = propagate_fields(circuit, &[wave.to_vec()], 1.0);
    let got = &field.snapshots[field.last()][0];
    got.iter()
        .zip(want.iter())
        .map(|(a, b)| (a - b).norm())
        .fold(0.0, f64::max)
}

/// Conditioning event used throughout: exactly one of the tap detectors.
pub fn tap_xor() -> ClickEvent {
    ClickEvent::xor(3, 4)
}

/// Conditional click probabilities of detectors 1 and 2 given `3 xor 4`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CrocaSummary {
    pub p1: Estimate,
    pub p2: Estimate,
    pub breakdowns: u64,
}

/// Monte-Carlo conditional statistics on the full device.
pub fn run_croca(circuit: &ValidatedCircuit, n_samples: u64, seed: u64) -> Result<CrocaSummary, EmptyWaveError> {
    let run = run_model(circuit, n_samples, seed)?;
    let g = tap_xor();
    let nan = Estimate {
        value: f64::NAN,
        stderr: f64::NAN,
    };
    Ok(CrocaSummary {
        p1: run.tally.conditional(&ClickEvent::fires(1), &g).unwrap_or(nan),
        p2: run.tally.conditional(&ClickEvent::fires(2), &g).unwrap_or(nan),
        breakdowns: run.breakdowns,
    })
}

/// `P(1 | 3 xor 4)` across a sweep of `δθ` plus its fitted fringe.
#[derive(Clone, Debug, PartialEq)]
pub struct FringeScan {
    pub delta_theta: Vec<f64>,
    pub p1: Vec<Estimate>,
    pub fit: Option<FringeFit>,
}

/// Scans the simplified device. `build` maps `δθ` to the circuit (for
/// `UniformRandom` coherence it is called with each grid value but the
/// source ignores it). With `n_samples = 0` the analytic path is used.
pub fn run_appendix1(
    build: impl Fn(f64) -> ValidatedCircuit + Sync,
    thetas: &[f64],
    n_samples: u64,
    seed: u64,
) -> Result<FringeScan, EmptyWaveError> {
    let g = tap_xor();
    let p1: Vec<Estimate> = thetas
        .par_iter()
        .map(|&t| {
            let circ = build(t);
            if n_samples == 0 {
                let d = analytic_distribution(&circ)?;
                let pg = d.probability(&g);
                let pj = d.probability(&ClickEvent::fires(1).and(g.clone()));
                Ok(Estimate::exact(pj / pg))
            } else {
                let run = run_model(&circ, n_samples, seed)?;
                Ok(run.tally.conditional(&ClickEvent::fires(1), &g).unwrap_or(Estimate {
                    value: f64::NAN,
                    stderr: f64::NAN,
                }))
            }
        })
        .collect::<Result<_, EmptyWaveError>>()?;
    let ys: Vec<f64> = p1.iter().map(|e| e.value).collect();
    let sig: Vec<f64> = p1.iter().map(|e| e.stderr).collect();
    let fit = fit_fringe(thetas, &ys, (n_samples > 0).then_some(sig.as_slice()));
    Ok(FringeScan {
        delta_theta: thetas.to_vec(),
        p1,
        fit,
    })
}
