//! Single-photon electric and magnetic wave functions on spatial grids.
//!
//! Fields are synthesized from a spectrum on a tensor lattice of wave
//! vectors:
//!
//! ```text
//! ψE(x,t) = i c Σ_k w Σ_λ √|k|        c_λ(k) ε_λ(k)     e^{i(k·x − c|k|t)}
//! ψB(x,t) = i   Σ_k w Σ_λ (1/√|k|)   c_λ(k) k × ε_λ(k) e^{i(k·x − c|k|t)}
//! ```
//!
//! with `w = Δk_x Δk_y Δk_z / (2π)³`. The magnetic prefactor carries no `c`
//! so that both curl equations hold for any configured speed of light.

use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::io::{self, Write};

use num_complex::Complex64;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

pub type Vec3 = [f64; 3];
pub type CVec3 = [Complex64; 3];

const I: Complex64 = Complex64::new(0.0, 1.0);
const ZERO: Complex64 = Complex64::new(0.0, 0.0);

#[derive(Debug, Error, PartialEq)]
pub enum FieldError {
    #[error("grid under-resolved along axis {axis}: h·|k|max = {value} > π/4")]
    UnderResolved { axis: usize, value: f64 },
    #[error("spectrum has weight at k = 0")]
    ZeroWaveVector,
    #[error("energy density below threshold")]
    ZeroDensity,
    #[error("field grids do not share a lattice")]
    GridMismatch,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Units {
    pub c: f64,
    pub eps0: f64,
}

impl Units {
    pub fn mu0(&self) -> f64 {
        1.0 / (self.eps0 * self.c * self.c)
    }
}

impl Default for Units {
    fn default() -> Self {
        Self { c: 1.0, eps0: 1.0 }
    }
}

fn norm(v: Vec3) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

fn cross(a: Vec3, b: Vec3) -> Vec3 {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

fn ccross(a: CVec3, b: CVec3) -> CVec3 {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

fn rcross(a: Vec3, b: CVec3) -> CVec3 {
    ccross(a.map(|x| Complex64::new(x, 0.0)), b)
}

/// Circular polarization vectors `(ε₊, ε₋)` for wave vector `k`.
///
/// `e₁` is the Cartesian axis least aligned with `k` (first axis on ties),
/// orthogonalized against `k̂`; `e₂ = k̂ × e₁`; `ε± = (e₁ ± i e₂)/√2`.
pub fn polarization_basis(k: Vec3) -> Result<(CVec3, CVec3), FieldError> {
    let kn = norm(k);
    if kn == 0.0 {
        return Err(FieldError::ZeroWaveVector);
    }
    let kh = k.map(|x| x / kn);
    let mut axis = 0;
    for d in 1..3 {
        if kh[d].abs() < kh[axis].abs() {
            axis = d;
        }
    }
    let mut e1 = [0.0; 3];
    e1[axis] = 1.0;
    let dot = kh[axis];
    for d in 0..3 {
        e1[d] -= dot * kh[d];
    }
    let n1 = norm(e1);
    let e1 = e1.map(|x| x / n1);
    let e2 = cross(kh, e1);
    let plus = [0, 1, 2].map(|d| Complex64::new(e1[d], e2[d]) * FRAC_1_SQRT_2);
    let minus = [0, 1, 2].map(|d| Complex64::new(e1[d], -e2[d]) * FRAC_1_SQRT_2);
    Ok((plus, minus))
}

/// Regular lattice along three axes: `origin[d] + i * step[d]`, `i < n[d]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Lattice {
    pub n: [usize; 3],
    pub origin: Vec3,
    pub step: Vec3,
}

impl Lattice {
    pub fn new(n: [usize; 3], origin: Vec3, step: Vec3) -> Self {
        Self { n, origin, step }
    }

    /// `n` points per axis spanning `[lo, hi]` along every axis.
    pub fn cube(n: usize, lo: f64, hi: f64) -> Self {
        let h = if n > 1 { (hi - lo) / (n - 1) as f64 } else { 1.0 };
        Self::new([n; 3], [lo; 3], [h; 3])
    }

    /// `n` points per axis centred on `center`, spacing `step`.
    pub fn centered(n: [usize; 3], center: Vec3, step: Vec3) -> Self {
        let origin = [0, 1, 2].map(|d| center[d] - step[d] * (n[d] as f64 - 1.0) / 2.0);
        Self { n, origin, step }
    }

    /// Same extent with half the spacing.
    pub fn refined(&self) -> Self {
        Self {
            n: self.n.map(|k| 2 * k - 1),
            origin: self.origin,
            step: self.step.map(|h| h / 2.0),
        }
    }

    pub fn len(&self) -> usize {
        self.n[0] * self.n[1] * self.n[2]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn coord(&self, d: usize, i: usize) -> f64 {
        self.origin[d] + i as f64 * self.step[d]
    }

    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.n[1] + j) * self.n[2] + k
    }

    pub fn point(&self, flat: usize) -> Vec3 {
        let k = flat % self.n[2];
        let j = (flat / self.n[2]) % self.n[1];
        let i = flat / (self.n[1] * self.n[2]);
        [self.coord(0, i), self.coord(1, j), self.coord(2, k)]
    }

    pub fn cell_volume(&self) -> f64 {
        self.step.iter().product()
    }
}

/// Spectrum `c_λ(k)` on a wave-vector lattice.
#[derive(Clone, Debug, PartialEq)]
pub struct ModeSpectrum {
    pub k: Lattice,
    pub plus: Vec<Complex64>,
    pub minus: Vec<Complex64>,
}

impl ModeSpectrum {
    pub fn zeros(k: Lattice) -> Self {
        let n = k.len();
        Self {
            k,
            plus: vec![ZERO; n],
            minus: vec![ZERO; n],
        }
    }

    /// A single wave vector with the given polarization amplitudes. The
    /// lattice cell is chosen so that the measure weight is 1.
    pub fn plane_wave(k: Vec3, plus: Complex64, minus: Complex64) -> Self {
        let mut s = Self::zeros(Lattice::new([1; 3], k, [2.0 * PI; 3]));
        s.plus[0] = plus;
        s.minus[0] = minus;
        s
    }

    /// Gaussian envelope of width `sigma_k` around `k0` with fixed
    /// polarization weights, normalized.
    pub fn gaussian(k: Lattice, k0: Vec3, sigma_k: f64, plus: Complex64, minus: Complex64) -> Self {
        let mut s = Self::zeros(k);
        for i in 0..s.k.len() {
            let p = s.k.point(i);
            let d2: f64 = (0..3).map(|d| (p[d] - k0[d]).powi(2)).sum();
            let g = (-d2 / (4.0 * sigma_k * sigma_k)).exp();
            s.plus[i] = plus * g;
            s.minus[i] = minus * g;
        }
        s.normalized()
    }

    /// Random complex amplitudes under a Gaussian envelope, normalized.
    pub fn random_packet(k: Lattice, k0: Vec3, sigma_k: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut s = Self::gaussian(k, k0, sigma_k, Complex64::new(1.0, 0.0), Complex64::new(1.0, 0.0));
        for i in 0..s.k.len() {
            let mut draw = || Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5);
            s.plus[i] *= draw();
            s.minus[i] *= draw();
        }
        s.normalized()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.plus.iter().chain(&self.minus).map(|c| c.norm_sqr()).sum()
    }

    pub fn normalized(mut self) -> Self {
        let n = self.norm_sqr().sqrt();
        if n > 0.0 {
            self.plus.iter_mut().chain(self.minus.iter_mut()).for_each(|c| *c /= n);
        }
        self
    }

    /// `a·self + b·other` on the same lattice.
    pub fn combine(&self, a: Complex64, other: &Self, b: Complex64) -> Self {
        assert_eq!(self.k, other.k);
        Self {
            k: self.k.clone(),
            plus: self.plus.iter().zip(&other.plus).map(|(x, y)| a * x + b * y).collect(),
            minus: self.minus.iter().zip(&other.minus).map(|(x, y)| a * x + b * y).collect(),
        }
    }

    fn is_active(&self, i: usize) -> bool {
        self.plus[i] != ZERO || self.minus[i] != ZERO
    }

    /// Largest `|k_d|` per axis over points carrying weight.
    fn k_max(&self) -> Vec3 {
        let mut m = [0.0f64; 3];
        for i in 0..self.k.len() {
            if self.is_active(i) {
                let p = self.k.point(i);
                for d in 0..3 {
                    m[d] = m[d].max(p[d].abs());
                }
            }
        }
        m
    }
}

/// Sampled `ψE`, `ψB` at one instant.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldGrid {
    pub x: Lattice,
    pub t: f64,
    pub e: Vec<CVec3>,
    pub b: Vec<CVec3>,
    pub units: Units,
}

/// Maximum resolvable `h·|k|`.
pub const RESOLUTION_LIMIT: f64 = PI / 4.0;

/// Evaluates the mode sums on `grid` at time `t` by three successive
/// one-axis contractions.
pub fn synthesize(spectrum: &ModeSpectrum, grid: &Lattice, t: f64, units: Units) -> Result<FieldGrid, FieldError> {
    let km = spectrum.k_max();
    for d in 0..3 {
        if grid.n[d] > 1 && grid.step[d] * km[d] > RESOLUTION_LIMIT + 1e-12 {
            return Err(FieldError::UnderResolved {
                axis: d,
                value: grid.step[d] * km[d],
            });
        }
    }
    let kl = &spectrum.k;
    let w = kl.cell_volume() / (2.0 * PI).powi(3);
    // Coefficient of e^{ik·x} for each of the six components.
    let mut g = vec![[ZERO; 6]; kl.len()];
    for (i, gi) in g.iter_mut().enumerate() {
        if !spectrum.is_active(i) {
            continue;
        }
        let k = kl.point(i);
        let kn = norm(k);
        let (ep, em) = polarization_basis(k)?;
        let time = Complex64::from_polar(w, -units.c * kn * t);
        let pol: CVec3 = [0, 1, 2].map(|d| spectrum.plus[i] * ep[d] + spectrum.minus[i] * em[d]);
        let kxp = rcross(k, pol);
        for d in 0..3 {
            gi[d] = I * units.c * kn.sqrt() * pol[d] * time;
            gi[3 + d] = I * kxp[d] / kn.sqrt() * time;
        }
    }
    let phases = |d: usize| -> Vec<Complex64> {
        // phases[a * nx + ix] = e^{i k_a x_ix}
        let mut out = Vec::with_capacity(kl.n[d] * grid.n[d]);
        for a in 0..kl.n[d] {
            let k = kl.coord(d, a);
            for ix in 0..grid.n[d] {
                out.push(Complex64::from_polar(1.0, k * grid.coord(d, ix)));
            }
        }
        out
    };
    let (px, py, pz) = (phases(0), phases(1), phases(2));
    let [kx, ky, kz] = kl.n;
    let [nx, ny, nz] = grid.n;

    // (a, b, c) -> (a, b, iz)
    let h1: Vec<[Complex64; 6]> = (0..kx * ky)
        .into_par_iter()
        .flat_map_iter(|ab| {
            let g = &g;
            let pz = &pz;
            (0..nz).map(move |iz| {
                let mut acc = [ZERO; 6];
                for c in 0..kz {
                    let src = &g[ab * kz + c];
                    let ph = pz[c * nz + iz];
                    for q in 0..6 {
                        acc[q] += src[q] * ph;
                    }
                }
                acc
            })
        })
        .collect();
    // (a, b, iz) -> (a, iy, iz)
    let h2: Vec<[Complex64; 6]> = (0..kx)
        .into_par_iter()
        .flat_map_iter(|a| {
            let h1 = &h1;
            let py = &py;
            (0..ny * nz).map(move |yz| {
                let (iy, iz) = (yz / nz, yz % nz);
                let mut acc = [ZERO; 6];
                for b in 0..ky {
                    let src = &h1[(a * ky + b) * nz + iz];
                    let ph = py[b * ny + iy];
                    for q in 0..6 {
                        acc[q] += src[q] * ph;
                    }
                }
                acc
            })
        })
        .collect();
    // (a, iy, iz) -> (ix, iy, iz)
    let full: Vec<[Complex64; 6]> = (0..nx * ny * nz)
        .into_par_iter()
        .map(|flat| {
            let ix = flat / (ny * nz);
            let yz = flat % (ny * nz);
            let mut acc = [ZERO; 6];
            for a in 0..kx {
                let src = &h2[a * ny * nz + yz];
                let ph = px[a * nx + ix];
                for q in 0..6 {
                    acc[q] += src[q] * ph;
                }
            }
            acc
        })
        .collect();
    Ok(FieldGrid {
        x: grid.clone(),
        t,
        e: full.iter().map(|v| [v[0], v[1], v[2]]).collect(),
        b: full.iter().map(|v| [v[3], v[4], v[5]]).collect(),
        units,
    })
}

/// Energy density `u = (ε₀/2)(|E|² + c²|B|²)`.
pub fn energy_density(e: &CVec3, b: &CVec3, units: Units) -> f64 {
    let e2: f64 = e.iter().map(|z| z.norm_sqr()).sum();
    let b2: f64 = b.iter().map(|z| z.norm_sqr()).sum();
    units.eps0 / 2.0 * (e2 + units.c * units.c * b2)
}

/// Poynting vector `S = (1/2μ₀)(E*×B + E×B*)`.
pub fn poynting(e: &CVec3, b: &CVec3, units: Units) -> Vec3 {
    let ec = e.map(|z| z.conj());
    let s = ccross(ec, *b);
    s.map(|z| z.re / units.mu0())
}

/// Local velocity `S/u` at one point.
pub fn poynting_velocity_at(e: &CVec3, b: &CVec3, units: Units, floor: f64) -> Result<Vec3, FieldError> {
    let u = energy_density(e, b, units);
    if u <= floor || u == 0.0 {
        return Err(FieldError::ZeroDensity);
    }
    Ok(poynting(e, b, units).map(|s| s / u))
}

/// Velocity field; `None` where `u` is below `1e-12` of its maximum.
pub fn poynting_velocity(fields: &FieldGrid) -> Vec<Option<Vec3>> {
    let u: Vec<f64> = fields
        .e
        .iter()
        .zip(&fields.b)
        .map(|(e, b)| energy_density(e, b, fields.units))
        .collect();
    let floor = 1e-12 * u.iter().copied().fold(0.0, f64::max);
    fields
        .e
        .par_iter()
        .zip(&fields.b)
        .map(|(e, b)| poynting_velocity_at(e, b, fields.units, floor).ok())
        .collect()
}

fn check_triplet(prev: &FieldGrid, cur: &FieldGrid, next: &FieldGrid) -> Result<f64, FieldError> {
    if prev.x != cur.x || next.x != cur.x {
        return Err(FieldError::GridMismatch);
    }
    let dt = (next.t - prev.t) / 2.0;
    if (cur.t - prev.t - dt).abs() > 1e-12 * dt.abs().max(1.0) || dt <= 0.0 {
        return Err(FieldError::GridMismatch);
    }
    Ok(dt)
}

fn interior(x: &Lattice) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
    let r = |d: usize| 1..x.n[d].saturating_sub(1);
    r(0).flat_map(move |i| r(1).flat_map(move |j| r(2).map(move |k| (i, j, k))))
}

/// Centered derivative of component `q` of `f` along axis `d`.
fn deriv<T: Copy + std::ops::Sub<Output = T> + std::ops::Div<f64, Output = T>>(
    x: &Lattice,
    f: impl Fn(usize) -> T,
    (i, j, k): (usize, usize, usize),
    d: usize,
) -> T {
    let (lo, hi) = match d {
        0 => (x.index(i - 1, j, k), x.index(i + 1, j, k)),
        1 => (x.index(i, j - 1, k), x.index(i, j + 1, k)),
        _ => (x.index(i, j, k - 1), x.index(i, j, k + 1)),
    };
    (f(hi) - f(lo)) / (2.0 * x.step[d])
}

fn curl(x: &Lattice, v: &[CVec3], p: (usize, usize, usize)) -> CVec3 {
    let dv = |q: usize, d: usize| deriv(x, |n| v[n][q], p, d);
    [dv(2, 1) - dv(1, 2), dv(0, 2) - dv(2, 0), dv(1, 0) - dv(0, 1)]
}

fn div(x: &Lattice, v: &[CVec3], p: (usize, usize, usize)) -> Complex64 {
    (0..3).map(|d| deriv(x, |n| v[n][d], p, d)).sum()
}

/// Max-norm residuals over interior points of
/// `[∇×E + ∂ₜB, ∇×B − ∂ₜE/c², ∇·E, ∇·B]` at the middle time.
pub fn maxwell_residual(prev: &FieldGrid, cur: &FieldGrid, next: &FieldGrid) -> Result<[f64; 4], FieldError> {
    let dt = check_triplet(prev, cur, next)?;
    let x = &cur.x;
    let c2 = cur.units.c * cur.units.c;
    let mut r = [0.0f64; 4];
    for p in interior(x) {
        let n = x.index(p.0, p.1, p.2);
        let ce = curl(x, &cur.e, p);
        let cb = curl(x, &cur.b, p);
        for q in 0..3 {
            let dbt = (next.b[n][q] - prev.b[n][q]) / (2.0 * dt);
            let det = (next.e[n][q] - prev.e[n][q]) / (2.0 * dt);
            r[0] = r[0].max((ce[q] + dbt).norm());
            r[1] = r[1].max((cb[q] - det / c2).norm());
        }
        r[2] = r[2].max(div(x, &cur.e, p).norm());
        r[3] = r[3].max(div(x, &cur.b, p).norm());
    }
    Ok(r)
}

/// Max-norm of `∂ₜu + ∇·S` over interior points at the middle time.
pub fn continuity_residual(prev: &FieldGrid, cur: &FieldGrid, next: &FieldGrid) -> Result<f64, FieldError> {
    let dt = check_triplet(prev, cur, next)?;
    let units = cur.units;
    let u = |f: &FieldGrid, n: usize| energy_density(&f.e[n], &f.b[n], units);
    let s: Vec<Vec3> = cur.e.iter().zip(&cur.b).map(|(e, b)| poynting(e, b, units)).collect();
    let x = &cur.x;
    let mut worst: f64 = 0.0;
    for p in interior(x) {
        let n = x.index(p.0, p.1, p.2);
        let dudt = (u(next, n) - u(prev, n)) / (2.0 * dt);
        let divs: f64 = (0..3).map(|d| deriv(x, |m| s[m][d], p, d)).sum();
        worst = worst.max((dudt + divs).abs());
    }
    Ok(worst)
}

/// Energy-weighted centroid of the grid.
pub fn energy_centroid(fields: &FieldGrid) -> Vec3 {
    let mut acc = [0.0; 3];
    let mut total = 0.0;
    for (n, (e, b)) in fields.e.iter().zip(&fields.b).enumerate() {
        let u = energy_density(e, b, fields.units);
        let p = fields.x.point(n);
        for d in 0..3 {
            acc[d] += u * p[d];
        }
        total += u;
    }
    acc.map(|a| a / total)
}

impl FieldGrid {
    /// CSV rows `x,y,z,` then real and imaginary parts of every component.
    /// With `z_index` only that plane is written.
    pub fn write_csv(&self, mut w: impl Write, z_index: Option<usize>) -> io::Result<()> {
        writeln!(
            w,
            "x,y,z,ex_re,ex_im,ey_re,ey_im,ez_re,ez_im,bx_re,bx_im,by_re,by_im,bz_re,bz_im"
        )?;
        for n in 0..self.x.len() {
            if let Some(zi) = z_index {
                if n % self.x.n[2] != zi {
                    continue;
                }
            }
            let p = self.x.point(n);
            write!(w, "{},{},{}", p[0], p[1], p[2])?;
            for z in self.e[n].iter().chain(&self.b[n]) {
                write!(w, ",{},{}", z.re, z.im)?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cdot(a: &CVec3, b: &CVec3) -> Complex64 {
        a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
    }

    #[test]
    fn polarization_is_transverse_and_orthonormal() {
        for k in [[1.0, 0.0, 0.0], [0.3, -2.0, 0.7], [1.0, 1.0, 1.0], [0.0, 0.0, -4.0]] {
            let (p, m) = polarization_basis(k).unwrap();
            let kc = k.map(|x| Complex64::new(x, 0.0));
            assert!(cdot(&p, &kc).norm() < 1e-14);
            assert!(cdot(&m, &kc).norm() < 1e-14);
            assert!(cdot(&p, &m).norm() < 1e-14);
            assert!((cdot(&p, &p).re - 1.0).abs() < 1e-14);
        }
        assert_eq!(polarization_basis([0.0; 3]), Err(FieldError::ZeroWaveVector));
    }

    #[test]
    fn plane_wave_fields_and_velocity() {
        let k = [0.4, -0.3, 0.2];
        let s = ModeSpectrum::plane_wave(k, Complex64::new(1.0, 0.0), ZERO);
        let units = Units { c: 1.7, eps0: 1.0 };
        let grid = Lattice::cube(5, -2.0, 2.0);
        let f = synthesize(&s, &grid, 0.3, units).unwrap();
        let (ep, _) = polarization_basis(k).unwrap();
        let kn = norm(k);
        for n in 0..grid.len() {
            let x = grid.point(n);
            let phase = Complex64::from_polar(1.0, k[0] * x[0] + k[1] * x[1] + k[2] * x[2] - units.c * kn * 0.3);
            for d in 0..3 {
                let want = I * units.c * kn.sqrt() * ep[d] * phase;
                assert!((f.e[n][d] - want).norm() < 1e-13);
            }
        }
        let khat = k.map(|x| x / kn);
        for v in poynting_velocity(&f) {
            let v = v.unwrap();
            for d in 0..3 {
                assert!((v[d] - units.c * khat[d]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn zero_spectrum_gives_zero_fields() {
        let s = ModeSpectrum::zeros(Lattice::cube(3, 0.5, 1.0));
        let f = synthesize(&s, &Lattice::cube(4, 0.0, 1.0), 0.0, Units::default()).unwrap();
        assert!(f.e.iter().chain(&f.b).all(|v| v.iter().all(|z| *z == ZERO)));
        assert!(poynting_velocity(&f).iter().all(|v| v.is_none()));
        let r = maxwell_residual(&f, &f.clone_at(1.0), &f.clone_at(2.0)).unwrap();
        assert_eq!(r, [0.0; 4]);
    }

    #[test]
    fn under_resolution_is_rejected() {
        let s = ModeSpectrum::plane_wave([3.0, 0.0, 0.0], Complex64::new(1.0, 0.0), ZERO);
        let err = synthesize(&s, &Lattice::cube(5, 0.0, 4.0), 0.0, Units::default()).unwrap_err();
        assert!(matches!(err, FieldError::UnderResolved { axis: 0, .. }));
    }

    #[test]
    fn counter_propagating_pair_cancels_flux() {
        let mut s = ModeSpectrum::zeros(Lattice::new([2, 1, 1], [-1.0, 0.0, 0.0], [2.0, 1.0, 1.0]));
        s.plus = vec![Complex64::new(1.0, 0.0); 2];
        let f = synthesize(&s, &Lattice::cube(1, 0.0, 0.0), 0.0, Units::default()).unwrap();
        let v = poynting_velocity_at(&f.e[0], &f.b[0], f.units, 0.0).unwrap();
        assert!(norm(v) < 1e-14);
    }

    impl FieldGrid {
        fn clone_at(&self, t: f64) -> Self {
            Self { t, ..self.clone() }
        }
    }
}
