//! Pilot-wave dynamics.
//!
//! Two engines live here:
//!
//! * a continuous integrator for the guidance law
//!   `v = (ħ/m) Im(Ψ* ∇Ψ) / |Ψ|²` on an N-particle, one-axis-per-particle
//!   configuration grid;
//! * a branch-level sampler for photons in a linear-optics network. The
//!   configuration is the occupation vector of the network's (internal)
//!   modes. At each passive element the configuration jumps according to
//!   the probability flow `F(n', n) = Re(ψ'(n')* A(n'←n) ψ(n))`, whose
//!   marginals are `|ψ|²` before and `|ψ'|²` after the element. At a
//!   detector the registered count is recorded and the guide is replaced by
//!   the conditional wave function of the remaining photons.

use std::collections::{BTreeMap, HashMap};
use std::io::{self, Write};

use num_complex::Complex64;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::circuit::{DetectorId, ElementKind, ValidatedCircuit};
use crate::fock::{self, ClickDistribution, FockError, FockState, Occupation};
use crate::stats::Tally;

/// Guidance is undefined where `|Ψ|²` falls below this fraction of the peak.
pub const DENSITY_FLOOR: f64 = 1e-12;
/// Maximum number of recursive step halvings before a trajectory is failed.
pub const MAX_HALVINGS: u32 = 20;

#[derive(Debug, Error, PartialEq)]
pub enum BohmError {
    #[error("density below floor at {0:?}")]
    Node(Vec<f64>),
    #[error("point {0:?} lies outside the guidance grid")]
    OutOfGrid(Vec<f64>),
    #[error("conditional wave function has zero norm")]
    ZeroNorm,
    #[error("source kind not supported by the branch sampler")]
    UnsupportedSource,
    #[error(transparent)]
    Fock(#[from] FockError),
}

/// Regular configuration grid, last axis fastest.
#[derive(Clone, Debug, PartialEq)]
pub struct GridSpec {
    pub dims: Vec<usize>,
    pub origin: Vec<f64>,
    pub spacing: Vec<f64>,
}

impl GridSpec {
    pub fn new(dims: Vec<usize>, origin: Vec<f64>, spacing: Vec<f64>) -> Self {
        assert!(dims.len() == origin.len() && dims.len() == spacing.len());
        assert!(dims.iter().all(|&n| n >= 4), "cubic interpolation needs 4 points per axis");
        Self { dims, origin, spacing }
    }

    /// Uniform grid on `[lo, hi]` along every one of `ndim` axes.
    pub fn cube(ndim: usize, n: usize, lo: f64, hi: f64) -> Self {
        let h = (hi - lo) / (n - 1) as f64;
        Self::new(vec![n; ndim], vec![lo; ndim], vec![h; ndim])
    }

    pub fn ndim(&self) -> usize {
        self.dims.len()
    }

    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn point(&self, mut flat: usize) -> Vec<f64> {
        let mut x = vec![0.0; self.ndim()];
        for d in (0..self.ndim()).rev() {
            let i = flat % self.dims[d];
            flat /= self.dims[d];
            x[d] = self.origin[d] + i as f64 * self.spacing[d];
        }
        x
    }

    fn flat(&self, idx: &[usize]) -> usize {
        idx.iter().zip(&self.dims).fold(0, |acc, (&i, &n)| acc * n + i)
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter().enumerate().all(|(d, &xd)| {
            let hi = self.origin[d] + (self.dims[d] - 1) as f64 * self.spacing[d];
            xd >= self.origin[d] && xd <= hi
        })
    }

    pub fn sample(&self, f: impl Fn(&[f64]) -> Complex64 + Sync) -> Vec<Complex64> {
        (0..self.len()).into_par_iter().map(|i| f(&self.point(i))).collect()
    }
}

/// Sampled wave function plus the `ħ/m` scale of the guidance law.
#[derive(Clone, Debug, PartialEq)]
pub struct GuidanceField {
    pub grid: GridSpec,
    pub psi: Vec<Complex64>,
    pub hbar_over_m: f64,
    peak_density: f64,
}

fn lagrange4(u: f64) -> ([f64; 4], [f64; 4]) {
    let w = [
        -(u - 1.0) * (u - 2.0) * (u - 3.0) / 6.0,
        u * (u - 2.0) * (u - 3.0) / 2.0,
        -u * (u - 1.0) * (u - 3.0) / 2.0,
        u * (u - 1.0) * (u - 2.0) / 6.0,
    ];
    let dw = [
        -(3.0 * u * u - 12.0 * u + 11.0) / 6.0,
        (3.0 * u * u - 10.0 * u + 6.0) / 2.0,
        -(3.0 * u * u - 8.0 * u + 3.0) / 2.0,
        (3.0 * u * u - 6.0 * u + 2.0) / 6.0,
    ];
    (w, dw)
}

impl GuidanceField {
    pub fn new(grid: GridSpec, psi: Vec<Complex64>, hbar_over_m: f64) -> Self {
        assert_eq!(grid.len(), psi.len());
        let peak_density = psi.iter().map(|z| z.norm_sqr()).fold(0.0, f64::max);
        Self {
            grid,
            psi,
            hbar_over_m,
            peak_density,
        }
    }

    pub fn from_fn(grid: GridSpec, hbar_over_m: f64, f: impl Fn(&[f64]) -> Complex64 + Sync) -> Self {
        let psi = grid.sample(f);
        Self::new(grid, psi, hbar_over_m)
    }

    pub fn peak_density(&self) -> f64 {
        self.peak_density
    }

    /// `Σ |Ψ|² ΔV`.
    pub fn norm_sqr(&self) -> f64 {
        let dv: f64 = self.grid.spacing.iter().product();
        self.psi.iter().map(|z| z.norm_sqr()).sum::<f64>() * dv
    }

    /// Interpolated value and gradient at `x`.
    pub fn value_and_gradient(&self, x: &[f64]) -> Result<(Complex64, Vec<Complex64>), BohmError> {
        if !self.grid.contains(x) {
            return Err(BohmError::OutOfGrid(x.to_vec()));
        }
        let nd = self.grid.ndim();
        let mut base = vec![0usize; nd];
        let mut w = vec![[0.0; 4]; nd];
        let mut dw = vec![[0.0; 4]; nd];
        for d in 0..nd {
            let h = self.grid.spacing[d];
            let s = (x[d] - self.grid.origin[d]) / h;
            let i0 = (s.floor() as isize - 1).clamp(0, self.grid.dims[d] as isize - 4) as usize;
            base[d] = i0;
            let (a, b) = lagrange4(s - i0 as f64);
            w[d] = a;
            dw[d] = b.map(|v| v / h);
        }
        let mut val = Complex64::default();
        let mut grad = vec![Complex64::default(); nd];
        let mut idx = vec![0usize; nd];
        for combo in 0..4usize.pow(nd as u32) {
            let mut c = combo;
            for d in (0..nd).rev() {
                idx[d] = c % 4;
                c /= 4;
            }
            let node: Vec<usize> = (0..nd).map(|d| base[d] + idx[d]).collect();
            let p = self.psi[self.grid.flat(&node)];
            let wt: f64 = (0..nd).map(|d| w[d][idx[d]]).product();
            val += p * wt;
            for g in 0..nd {
                let wg: f64 = (0..nd)
                    .map(|d| if d == g { dw[d][idx[d]] } else { w[d][idx[d]] })
                    .product();
                grad[g] += p * wg;
            }
        }
        Ok((val, grad))
    }
}

/// Guidance velocity at a configuration point.
pub fn guidance_velocity(field: &GuidanceField, point: &[f64]) -> Result<Vec<f64>, BohmError> {
    let (psi, grad) = field.value_and_gradient(point)?;
    let rho = psi.norm_sqr();
    if rho < DENSITY_FLOOR * field.peak_density || rho == 0.0 {
        return Err(BohmError::Node(point.to_vec()));
    }
    Ok(grad
        .iter()
        .map(|g| field.hbar_over_m * (psi.conj() * g).im / rho)
        .collect())
}

/// Time-dependent guiding wave.
pub trait WaveEvolution: Sync {
    fn field_at(&self, t: f64) -> GuidanceField;
}

/// A field that does not change in time.
impl WaveEvolution for GuidanceField {
    fn field_at(&self, _t: f64) -> GuidanceField {
        self.clone()
    }
}

/// Analytic wave function sampled on a fixed grid at each requested time.
pub struct SampledEvolution<F> {
    pub grid: GridSpec,
    pub hbar_over_m: f64,
    pub psi: F,
}

impl<F> WaveEvolution for SampledEvolution<F>
where
    F: Fn(&[f64], f64) -> Complex64 + Sync,
{
    fn field_at(&self, t: f64) -> GuidanceField {
        GuidanceField::from_fn(self.grid.clone(), self.hbar_over_m, |x| (self.psi)(x, t))
    }
}

/// Freely spreading 1D Gaussian packet with mean velocity `v0`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FreeGaussian {
    pub x0: f64,
    pub v0: f64,
    pub sigma0: f64,
    pub hbar_over_m: f64,
}

impl FreeGaussian {
    fn tau(&self, t: f64) -> f64 {
        self.hbar_over_m * t / (2.0 * self.sigma0 * self.sigma0)
    }

    /// Position standard deviation at time `t`.
    pub fn width(&self, t: f64) -> f64 {
        self.sigma0 * (1.0 + self.tau(t).powi(2)).sqrt()
    }

    pub fn center(&self, t: f64) -> f64 {
        self.x0 + self.v0 * t
    }

    /// Time for the width to double.
    pub fn doubling_time(&self) -> f64 {
        2.0 * 3f64.sqrt() * self.sigma0 * self.sigma0 / self.hbar_over_m
    }

    pub fn psi(&self, x: f64, t: f64) -> Complex64 {
        let k0 = self.v0 / self.hbar_over_m;
        let q = Complex64::new(1.0, self.tau(t));
        let pref = (2.0 * std::f64::consts::PI * self.sigma0 * self.sigma0).powf(-0.25) / q.sqrt();
        let dx = x - self.center(t);
        let gauss = -(dx * dx) / (4.0 * self.sigma0 * self.sigma0 * q);
        let phase = Complex64::new(0.0, k0 * (x - self.x0 - self.v0 * t / 2.0));
        pref * (gauss + phase).exp()
    }

    pub fn density(&self, x: f64, t: f64) -> f64 {
        self.psi(x, t).norm_sqr()
    }

    /// Exact Bohmian trajectory through `x_init` at `t = 0`.
    pub fn trajectory(&self, x_init: f64, t: f64) -> f64 {
        self.center(t) + (x_init - self.x0) * self.width(t) / self.sigma0
    }

    pub fn evolution(&self, grid: GridSpec) -> SampledEvolution<impl Fn(&[f64], f64) -> Complex64 + Sync> {
        let g = *self;
        SampledEvolution {
            grid,
            hbar_over_m: self.hbar_over_m,
            psi: move |x: &[f64], t: f64| g.psi(x[0], t),
        }
    }
}

/// Exchange-symmetric two-particle state built from two free packets.
/// The normalization assumes the packets do not overlap.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SymmetrizedPair {
    pub a: FreeGaussian,
    pub b: FreeGaussian,
}

impl SymmetrizedPair {
    pub fn psi(&self, x1: f64, x2: f64, t: f64) -> Complex64 {
        (self.a.psi(x1, t) * self.b.psi(x2, t) + self.b.psi(x1, t) * self.a.psi(x2, t))
            / 2f64.sqrt()
    }

    pub fn evolution(&self, grid: GridSpec) -> SampledEvolution<impl Fn(&[f64], f64) -> Complex64 + Sync> {
        let p = *self;
        SampledEvolution {
            grid,
            hbar_over_m: self.a.hbar_over_m,
            psi: move |x: &[f64], t: f64| p.psi(x[0], x[1], t),
        }
    }
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Draws `n` configurations from `|Ψ|²`: a grid cell is chosen with
/// probability proportional to its node density, then jittered uniformly
/// within the cell.
pub fn sample_initial(field: &GuidanceField, n: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut cdf = Vec::with_capacity(field.psi.len());
    let mut acc = 0.0;
    for z in &field.psi {
        acc += z.norm_sqr();
        cdf.push(acc);
    }
    let grid = &field.grid;
    (0..n as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream_rng(seed, i);
            let u: f64 = rng.random::<f64>() * acc;
            let cell = cdf.partition_point(|&c| c < u).min(cdf.len() - 1);
            let mut x = grid.point(cell);
            for (d, xd) in x.iter_mut().enumerate() {
                let h = grid.spacing[d];
                let hi = grid.origin[d] + (grid.dims[d] - 1) as f64 * h;
                *xd = (*xd + (rng.random::<f64>() - 0.5) * h).clamp(grid.origin[d], hi);
            }
            x
        })
        .collect()
}

/// Integrated paths, stored flat: `paths[i][step * dim + d]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectories {
    pub dim: usize,
    pub times: Vec<f64>,
    pub paths: Vec<Vec<f64>>,
    pub failed: Vec<bool>,
}

impl Trajectories {
    pub fn position(&self, traj: usize, step: usize) -> &[f64] {
        &self.paths[traj][step * self.dim..(step + 1) * self.dim]
    }

    pub fn endpoint(&self, traj: usize) -> &[f64] {
        self.position(traj, self.times.len() - 1)
    }

    pub fn failures(&self) -> usize {
        self.failed.iter().filter(|&&f| f).count()
    }
}

fn axpy(x: &[f64], a: f64, v: &[f64]) -> Vec<f64> {
    x.iter().zip(v).map(|(xi, vi)| xi + a * vi).collect()
}

fn rk4(x: &[f64], dt: f64, f0: &GuidanceField, fm: &GuidanceField, f1: &GuidanceField) -> Result<Vec<f64>, BohmError> {
    let k1 = guidance_velocity(f0, x)?;
    let k2 = guidance_velocity(fm, &axpy(x, dt / 2.0, &k1))?;
    let k3 = guidance_velocity(fm, &axpy(x, dt / 2.0, &k2))?;
    let k4 = guidance_velocity(f1, &axpy(x, dt, &k3))?;
    Ok((0..x.len())
        .map(|d| x[d] + dt / 6.0 * (k1[d] + 2.0 * k2[d] + 2.0 * k3[d] + k4[d]))
        .collect())
}

/// One step, halving recursively on failure.
fn advance(
    evo: &dyn WaveEvolution,
    x: &[f64],
    t: f64,
    dt: f64,
    fields: Option<(&GuidanceField, &GuidanceField, &GuidanceField)>,
    depth: u32,
) -> Result<Vec<f64>, BohmError> {
    let attempt = match fields {
        Some((a, b, c)) => rk4(x, dt, a, b, c),
        None => rk4(
            x,
            dt,
            &evo.field_at(t),
            &evo.field_at(t + dt / 2.0),
            &evo.field_at(t + dt),
        ),
    };
    match attempt {
        Ok(y) => Ok(y),
        Err(e) if depth >= MAX_HALVINGS => Err(e),
        Err(_) => {
            let mid = advance(evo, x, t, dt / 2.0, None, depth + 1)?;
            advance(evo, &mid, t + dt / 2.0, dt / 2.0, None, depth + 1)
        }
    }
}

/// RK4 integration of the guidance law from `t0` to `t1` in `steps` steps.
/// Trajectories that cannot be advanced after [`MAX_HALVINGS`] halvings are
/// frozen and flagged.
pub fn integrate_trajectories(
    evolution: &dyn WaveEvolution,
    initial: &[Vec<f64>],
    t0: f64,
    t1: f64,
    steps: usize,
) -> Trajectories {
    let dim = initial.first().map_or(0, |x| x.len());
    let dt = (t1 - t0) / steps as f64;
    let times: Vec<f64> = (0..=steps).map(|k| t0 + k as f64 * dt).collect();
    let mut paths: Vec<Vec<f64>> = initial
        .iter()
        .map(|x| {
            let mut p = Vec::with_capacity((steps + 1) * dim);
            p.extend_from_slice(x);
            p
        })
        .collect();
    let mut failed = vec![false; initial.len()];
    let mut current: Vec<Vec<f64>> = initial.to_vec();
    let mut f0 = evolution.field_at(t0);
    for k in 0..steps {
        let t = times[k];
        let fm = evolution.field_at(t + dt / 2.0);
        let f1 = evolution.field_at(t + dt);
        current
            .par_iter_mut()
            .zip(failed.par_iter_mut())
            .for_each(|(x, fail)| {
                if *fail {
                    return;
                }
                match advance(evolution, x, t, dt, Some((&f0, &fm, &f1)), 0) {
                    Ok(y) => *x = y,
                    Err(_) => *fail = true,
                }
            });
        for (p, x) in paths.iter_mut().zip(&current) {
            p.extend_from_slice(x);
        }
        f0 = f1;
    }
    Trajectories {
        dim,
        times,
        paths,
        failed,
    }
}

/// `a_m |ψ⟩` renormalized, `m` an internal mode index.
pub fn conditional_wavefunction(joint: &FockState, internal_mode: usize) -> Result<FockState, BohmError> {
    joint.annihilate(internal_mode).normalized().ok_or(BohmError::ZeroNorm)
}

/// Conditional wave function after detector `detected` registers a photon.
pub fn conditional_on_detector(
    joint: &FockState,
    circuit: &ValidatedCircuit,
    detected: DetectorId,
) -> Result<FockState, BohmError> {
    let mode = circuit
        .detector_mode(detected)
        .ok_or(FockError::UnknownMode(detected as usize))?;
    conditional_wavefunction(joint, mode)
}

#[derive(Clone, Debug)]
enum Stage {
    /// Cumulative transition tables keyed by the current configuration.
    Passive {
        kernel: HashMap<Occupation, Vec<(Occupation, f64)>>,
        next: usize,
    },
    Detect {
        mode: usize,
        id: DetectorId,
        children: BTreeMap<Vec<u8>, usize>,
    },
    End,
}

#[derive(Clone, Debug)]
struct Node {
    step: usize,
    guide: FockState,
    stage: Stage,
}

/// Tuning of the branch sampler's bookkeeping.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BranchOptions {
    /// Arm length travelled between consecutive stages.
    pub segment_length: f64,
    pub c: f64,
    /// Number of leading samples whose full history is kept.
    pub history_limit: usize,
}

impl Default for BranchOptions {
    fn default() -> Self {
        Self {
            segment_length: 1.0,
            c: 1.0,
            history_limit: 0,
        }
    }
}

/// Exact tree of guide states reachable through detector outcomes, with
/// the configuration transition kernels of every passive step.
#[derive(Clone, Debug)]
pub struct BranchTree {
    nodes: Vec<Node>,
    stages: Vec<u32>,
    detectors: Vec<DetectorId>,
    modes: usize,
    root_cdf: Vec<(Occupation, f64)>,
}

fn cumulative(mut v: Vec<(Occupation, f64)>) -> Vec<(Occupation, f64)> {
    let total: f64 = v.iter().map(|(_, p)| p).sum();
    let mut acc = 0.0;
    for (_, p) in v.iter_mut() {
        acc += *p / total;
        *p = acc;
    }
    if let Some(last) = v.last_mut() {
        last.1 = 1.0;
    }
    v
}

fn pick(table: &[(Occupation, f64)], u: f64) -> &Occupation {
    let i = table.partition_point(|(_, c)| *c < u).min(table.len() - 1);
    &table[i].0
}

/// Iterative proportional fitting of `k` (rows: targets, columns: sources)
/// to the given marginals.
fn ipf(k: &mut [Vec<f64>], row: &[f64], col: &[f64]) {
    for _ in 0..10_000 {
        for (r, &target) in k.iter_mut().zip(row) {
            let s: f64 = r.iter().sum();
            if s > 0.0 {
                r.iter_mut().for_each(|x| *x *= target / s);
            }
        }
        let mut worst: f64 = 0.0;
        for (j, &target) in col.iter().enumerate() {
            let s: f64 = k.iter().map(|r| r[j]).sum();
            if s > 0.0 {
                k.iter_mut().for_each(|r| r[j] *= target / s);
            }
            worst = worst.max((s - target).abs());
        }
        if worst < 1e-14 {
            break;
        }
    }
}

fn passive_kernel(
    guide: &FockState,
    next: &FockState,
    kind: &ElementKind,
) -> Result<HashMap<Occupation, Vec<(Occupation, f64)>>, BohmError> {
    let sources: Vec<(&Occupation, &Complex64)> = guide.iter().collect();
    let targets: Vec<&Occupation> = next.iter().map(|(o, _)| o).collect();
    let tindex: HashMap<&Occupation, usize> = targets.iter().enumerate().map(|(i, o)| (*o, i)).collect();
    // flow[target][source]
    let mut flow = vec![vec![0.0; sources.len()]; targets.len()];
    let mut support = vec![vec![false; sources.len()]; targets.len()];
    let mut negative = false;
    for (j, (occ, amp)) in sources.iter().enumerate() {
        let mut basis = FockState::empty(guide.modes(), guide.copies(), guide.n_max());
        basis.insert((*occ).clone(), Complex64::new(1.0, 0.0))?;
        let image = fock::apply_element(&basis, kind)?;
        for (o2, a) in image.iter() {
            if let Some(&i) = tindex.get(o2) {
                let f = (next.amplitude(o2).conj() * a * **amp).re;
                support[i][j] = true;
                flow[i][j] = f;
                if f < -1e-14 {
                    negative = true;
                }
            }
        }
    }
    if negative {
        // Repair: start from |A|² on the joint support and fit the marginals.
        let row: Vec<f64> = targets.iter().map(|o| next.amplitude(o).norm_sqr()).collect();
        let col: Vec<f64> = sources.iter().map(|(_, a)| a.norm_sqr()).collect();
        for i in 0..targets.len() {
            for j in 0..sources.len() {
                flow[i][j] = if support[i][j] { 1.0 } else { 0.0 };
            }
        }
        ipf(&mut flow, &row, &col);
    }
    let mut kernel = HashMap::new();
    for (j, (occ, _)) in sources.iter().enumerate() {
        let out: Vec<(Occupation, f64)> = (0..targets.len())
            .filter(|&i| flow[i][j] > 0.0)
            .map(|i| (targets[i].clone(), flow[i][j]))
            .collect();
        if !out.is_empty() {
            kernel.insert((*occ).clone(), cumulative(out));
        }
    }
    Ok(kernel)
}

impl BranchTree {
    pub fn build(circuit: &ValidatedCircuit, initial: &FockState) -> Result<Self, BohmError> {
        let guide = initial.clone().normalized().ok_or(BohmError::ZeroNorm)?;
        let steps: Vec<(ElementKind, u32)> = circuit.steps().map(|e| (e.kind.clone(), e.stage)).collect();
        let mut tree = BranchTree {
            nodes: Vec::new(),
            stages: steps.iter().map(|s| s.1).collect(),
            detectors: circuit.detectors().iter().map(|&(d, _)| d).collect(),
            modes: circuit.num_modes(),
            root_cdf: cumulative(guide.iter().map(|(o, a)| (o.clone(), a.norm_sqr())).collect()),
        };
        tree.grow(&steps, 0, guide)?;
        Ok(tree)
    }

    fn grow(&mut self, steps: &[(ElementKind, u32)], step: usize, guide: FockState) -> Result<usize, BohmError> {
        let id = self.nodes.len();
        self.nodes.push(Node {
            step,
            guide: guide.clone(),
            stage: Stage::End,
        });
        let Some((kind, _)) = steps.get(step) else {
            return Ok(id);
        };
        let stage = match *kind {
            ElementKind::Detector { mode, id: det } => {
                let mut outcomes: Vec<Vec<u8>> = guide.iter().map(|(o, _)| guide.mode_occupation(o, mode)).collect();
                outcomes.sort();
                outcomes.dedup();
                let mut children = BTreeMap::new();
                for k in outcomes {
                    let cond = guide
                        .project_internal(mode, &k)
                        .clear_mode(mode)
                        .normalized()
                        .ok_or(BohmError::ZeroNorm)?;
                    let child = self.grow(steps, step + 1, cond)?;
                    children.insert(k, child);
                }
                Stage::Detect { mode, id: det, children }
            }
            ElementKind::Delay { .. } => Stage::Passive {
                kernel: HashMap::new(),
                next: self.grow(steps, step + 1, guide)?,
            },
            _ => {
                let after = fock::apply_element(&guide, kind)?;
                let kernel = passive_kernel(&guide, &after, kind)?;
                let next = self.grow(steps, step + 1, after)?;
                Stage::Passive { kernel, next }
            }
        };
        self.nodes[id].stage = stage;
        Ok(id)
    }

    pub fn detectors(&self) -> &[DetectorId] {
        &self.detectors
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    fn pattern(&self, counts: &BTreeMap<DetectorId, u8>) -> Vec<u8> {
        self.detectors.iter().map(|d| counts.get(d).copied().unwrap_or(0)).collect()
    }

    /// Click distribution obtained by enumerating every branch exactly.
    pub fn exact_distribution(&self) -> ClickDistribution {
        let mut out = ClickDistribution::new(self.detectors.clone());
        let start: BTreeMap<Occupation, f64> = {
            let mut prev = 0.0;
            self.root_cdf
                .iter()
                .map(|(o, c)| {
                    let p = c - prev;
                    prev = *c;
                    (o.clone(), p)
                })
                .collect()
        };
        self.enumerate(0, start, BTreeMap::new(), &mut out);
        out
    }

    fn enumerate(
        &self,
        node: usize,
        configs: BTreeMap<Occupation, f64>,
        counts: BTreeMap<DetectorId, u8>,
        out: &mut ClickDistribution,
    ) {
        match &self.nodes[node].stage {
            Stage::End => {
                let total: f64 = configs.values().sum();
                out.add(self.pattern(&counts), total);
            }
            Stage::Passive { kernel, next } => {
                let mut moved: BTreeMap<Occupation, f64> = BTreeMap::new();
                for (occ, p) in configs {
                    match kernel.get(&occ) {
                        Some(table) => {
                            let mut prev = 0.0;
                            for (o2, c) in table {
                                *moved.entry(o2.clone()).or_default() += p * (c - prev);
                                prev = *c;
                            }
                        }
                        None => *moved.entry(occ).or_default() += p,
                    }
                }
                self.enumerate(*next, moved, counts, out);
            }
            Stage::Detect { mode, id, children } => {
                let guide = &self.nodes[node].guide;
                let mut split: BTreeMap<Vec<u8>, BTreeMap<Occupation, f64>> = BTreeMap::new();
                for (occ, p) in configs {
                    let k = guide.mode_occupation(&occ, *mode);
                    let mut cleared = occ.clone();
                    for c in 0..guide.copies() {
                        cleared[c * self.modes + mode] = 0;
                    }
                    *split.entry(k).or_default().entry(cleared).or_default() += p;
                }
                for (k, sub) in split {
                    let mut c2 = counts.clone();
                    c2.insert(*id, k.iter().sum());
                    if let Some(&child) = children.get(&k) {
                        self.enumerate(child, sub, c2, out);
                    }
                }
            }
        }
    }

    /// Runs one sample. Returns the click pattern and, if requested, the
    /// per-step photon history.
    pub fn sample(
        &self,
        rng: &mut impl Rng,
        opts: &BranchOptions,
        record: bool,
    ) -> (Vec<u8>, Option<Vec<BranchConfiguration>>) {
        let mut config = pick(&self.root_cdf, rng.random::<f64>()).clone();
        let copies = self.nodes[0].guide.copies();
        let mut photons = PhotonBook::new(&config, self.modes);
        let mut history = record.then(|| vec![photons.snapshot(0.0, opts)]);
        let mut counts = BTreeMap::new();
        let mut node = 0;
        loop {
            let step = self.nodes[node].step;
            let pos = self.stages.get(step).map_or(0.0, |&s| s as f64 * opts.segment_length);
            match &self.nodes[node].stage {
                Stage::End => break,
                Stage::Passive { kernel, next } => {
                    if let Some(table) = kernel.get(&config) {
                        let next_config = pick(table, rng.random::<f64>()).clone();
                        if record {
                            photons.reassign(&next_config, copies);
                        }
                        config = next_config;
                    }
                    node = *next;
                }
                Stage::Detect { mode, id, children } => {
                    let guide = &self.nodes[node].guide;
                    let k = guide.mode_occupation(&config, *mode);
                    counts.insert(*id, k.iter().sum::<u8>());
                    for c in 0..copies {
                        config[c * self.modes + mode] = 0;
                    }
                    if record {
                        photons.detect(*mode, *id, pos / opts.c);
                    }
                    node = children[&k];
                }
            }
            if let Some(h) = history.as_mut() {
                h.push(photons.snapshot(pos, opts));
            }
        }
        (self.pattern(&counts), history)
    }
}

/// State of one photon along its branch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhotonState {
    pub arm: usize,
    pub position: f64,
    pub detected: Option<(DetectorId, f64)>,
}

/// All photons of one sample at one instant.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BranchConfiguration {
    pub time: f64,
    pub photons: Vec<PhotonState>,
}

/// Photon identities. Passive steps keep as many photons as possible in
/// their current internal mode; the rest move in id order.
struct PhotonBook {
    modes: usize,
    internal: Vec<usize>,
    positions: Vec<f64>,
    detected: Vec<Option<(DetectorId, f64)>>,
}

impl PhotonBook {
    fn new(config: &[u8], modes: usize) -> Self {
        let internal: Vec<usize> = config
            .iter()
            .enumerate()
            .flat_map(|(k, &n)| std::iter::repeat_n(k, n as usize))
            .collect();
        let n = internal.len();
        Self {
            modes,
            internal,
            positions: vec![0.0; n],
            detected: vec![None; n],
        }
    }

    fn reassign(&mut self, next: &[u8], copies: usize) {
        for c in 0..copies {
            let range = c * self.modes..(c + 1) * self.modes;
            let mut cap: Vec<u8> = next[range.clone()].to_vec();
            let mut pending = Vec::new();
            for p in 0..self.internal.len() {
                if self.detected[p].is_some() || !range.contains(&self.internal[p]) {
                    continue;
                }
                let k = self.internal[p] - range.start;
                if cap[k] > 0 {
                    cap[k] -= 1;
                } else {
                    pending.push(p);
                }
            }
            for p in pending {
                let k = cap.iter().position(|&x| x > 0).expect("photon number conserved");
                cap[k] -= 1;
                self.internal[p] = range.start + k;
            }
        }
    }

    fn detect(&mut self, mode: usize, id: DetectorId, time: f64) {
        for p in 0..self.internal.len() {
            if self.detected[p].is_none() && self.internal[p] % self.modes == mode {
                self.detected[p] = Some((id, time));
            }
        }
    }

    fn snapshot(&mut self, position: f64, opts: &BranchOptions) -> BranchConfiguration {
        for p in 0..self.positions.len() {
            if self.detected[p].is_none() {
                self.positions[p] = position;
            }
        }
        BranchConfiguration {
            time: position / opts.c,
            photons: (0..self.internal.len())
                .map(|p| PhotonState {
                    arm: self.internal[p] % self.modes,
                    position: self.positions[p],
                    detected: self.detected[p],
                })
                .collect(),
        }
    }
}

/// Aggregated sampler output.
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryEnsemble {
    pub seed: u64,
    pub tally: Tally,
    pub histories: Vec<Vec<BranchConfiguration>>,
}

impl TrajectoryEnsemble {
    /// CSV rows `sample,time,photon,arm,position` for the kept histories.
    pub fn write_history_csv(&self, circuit: &ValidatedCircuit, mut w: impl Write) -> io::Result<()> {
        writeln!(w, "sample,time,photon,arm,position,detector")?;
        for (s, hist) in self.histories.iter().enumerate() {
            for snap in hist {
                for (p, ph) in snap.photons.iter().enumerate() {
                    let det = ph.detected.map_or(String::new(), |(d, _)| d.to_string());
                    writeln!(
                        w,
                        "{s},{},{p},{},{},{det}",
                        snap.time,
                        circuit.label(ph.arm),
                        ph.position
                    )?;
                }
            }
        }
        Ok(())
    }
}

/// Samples the branch dynamics starting from an explicit initial state.
pub fn sample_branch_dynamics_from(
    circuit: &ValidatedCircuit,
    initial: &FockState,
    n_samples: u64,
    seed: u64,
    opts: &BranchOptions,
) -> Result<TrajectoryEnsemble, BohmError> {
    let tree = BranchTree::build(circuit, initial)?;
    Ok(run_tree(&tree, n_samples, seed, opts))
}

/// Runs `n_samples` independent samples of a prebuilt tree. Sample `i` uses
/// stream `i` of a ChaCha8 generator keyed by `seed`.
pub fn run_tree(tree: &BranchTree, n_samples: u64, seed: u64, opts: &BranchOptions) -> TrajectoryEnsemble {
    let limit = opts.history_limit as u64;
    let results: Vec<(Vec<u8>, Option<Vec<BranchConfiguration>>)> = (0..n_samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream_rng(seed, i);
            tree.sample(&mut rng, opts, i < limit)
        })
        .collect();
    let mut tally = Tally::new(tree.detectors.clone());
    let mut histories = Vec::new();
    for (pat, h) in results {
        tally.add(pat);
        if let Some(h) = h {
            histories.push(h);
        }
    }
    TrajectoryEnsemble {
        seed,
        tally,
        histories,
    }
}

/// Samples the branch dynamics for the circuit's own source.
pub fn sample_branch_dynamics(
    circuit: &ValidatedCircuit,
    n_samples: u64,
    seed: u64,
    opts: &BranchOptions,
) -> Result<TrajectoryEnsemble, BohmError> {
    if matches!(circuit.source(), Some(crate::circuit::SourceSpec::Coherent { .. })) {
        return Err(BohmError::UnsupportedSource);
    }
    let input = fock::prepare_input(circuit, fock::DEFAULT_N_MAX)?;
    sample_branch_dynamics_from(circuit, &input.state, n_samples, seed, opts)
}
