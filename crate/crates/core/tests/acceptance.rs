//! Acceptance criteria 1-10. Prints one PASS/FAIL line per criterion and
//! exits non-zero if a criterion fails that is not listed in `KNOWN_RED`.

use std::f64::consts::PI;
use std::time::Instant;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ContinuousCDF, Normal};

use emptywave_core::bohmian::{
    integrate_trajectories, run_tree, sample_initial, BranchOptions, BranchTree, FreeGaussian, GridSpec,
    WaveEvolution,
};
use emptywave_core::circuit::CoherenceMode;
use emptywave_core::emptywave::{analytic_distribution, tap_xor};
use emptywave_core::experiments::{
    build, both_in_mz, compare_models, default_statistics, linspace, phase_grid, same_port, sweep,
    ExperimentName, ExperimentSpec, Model, Params, Statistic, SweepParam,
};
use emptywave_core::field::{
    continuity_residual, maxwell_residual, poynting_velocity, synthesize, Lattice, ModeSpectrum, Units,
};
use emptywave_core::fock::{
    detection_distribution, hom_dip, independence_certificate, max_diff_up_to_phase, prepare_input, propagate,
    propagate_coherent, state_distance_up_to_phase, ClickEvent, CoherentField, FockState,
};
use emptywave_core::stats::{fit_fringe, ks_critical_1pct, ks_statistic};

/// Criteria that cannot be met as stated, with the reason.
const KNOWN_RED: &[(u32, &str)] = &[
    (
        4,
        "with the arm phase as the swept variable the coincidence fringe has period π, \
         so same-port probability reaches 1 at π/2 rather than π",
    ),
    (
        8,
        "with t = 1/√2, r = i/√2 on every splitter the tap amplitudes pick up two factors of i and the \
         phase shift, so the printed relative phases of α₂, α₃, α₄ are not reproduced; magnitudes agree",
    ),
];

struct Outcome {
    pass: bool,
    lines: Vec<String>,
}

impl Outcome {
    fn new() -> Self {
        Self { pass: true, lines: vec![] }
    }

    fn check(&mut self, ok: bool, what: String) {
        self.pass &= ok;
        self.lines.push(format!("{} {what}", if ok { "ok  " } else { "MISS" }));
    }

    fn note(&mut self, what: String) {
        self.lines.push(format!("     {what}"));
    }
}

fn params(theta: CoherenceMode, phi: f64) -> Params {
    Params {
        delta_theta: theta,
        delta_phi: phi,
        ..Default::default()
    }
}

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn mz_transparency() -> Outcome {
    let mut o = Outcome::new();
    let t0 = Instant::now();
    let circ = build(ExperimentName::Mz, &Params::default()).unwrap();
    let input = prepare_input(&circ, 2).unwrap();
    let out = propagate(&input.state, &circ).unwrap();
    // detector 1 sits on the port parallel to the input
    let p1 = detection_distribution(&out, &circ).probability(&ClickEvent::fires(1));
    let amp = out.amplitude(&[0, 1]).norm();
    let dt = t0.elapsed().as_secs_f64();
    o.check((p1 - 1.0).abs() < 1e-10, format!("P(parallel port) = {p1:.15}"));
    o.check((amp - 1.0).abs() < 1e-10, format!("|amplitude| = {amp:.15}"));
    o.check(dt < 1.0, format!("runtime {dt:.4} s"));
    o
}

/// `∫ f₁(t) f₂(t - τ) dt` by composite Simpson over a wide window.
fn overlap_quadrature(s1: f64, s2: f64, tau: f64) -> f64 {
    let f = |s: f64, t: f64| (s * s / (2.0 * PI)).powf(0.25) * (-s * s * t * t / 4.0).exp();
    let half = 40.0 / s1.min(s2) + tau.abs();
    let n = 40_000;
    let h = 2.0 * half / n as f64;
    let g = |k: usize| {
        let t = -half + k as f64 * h;
        f(s1, t) * f(s2, t - tau)
    };
    let mut acc = g(0) + g(n);
    for k in 1..n {
        acc += g(k) * if k % 2 == 1 { 4.0 } else { 2.0 };
    }
    acc * h / 3.0
}

fn hom_bunching() -> Outcome {
    let mut o = Outcome::new();
    let hom = build(ExperimentName::Hom, &Params::default()).unwrap();
    let input = prepare_input(&hom, 2).unwrap();
    let out = propagate(&input.state, &hom).unwrap();
    let p = detection_distribution(&out, &hom).probability(&ClickEvent::both(1, 2));
    o.check(p.abs() <= 1e-10, format!("exact coincidence at τ = 0: {:.3e}", p.abs()));

    let n = 100_000;
    let tree = BranchTree::build(&hom, &input.state).unwrap();
    let ens = run_tree(&tree, n, 2, &BranchOptions::default());
    let k = ens.tally.count(&ClickEvent::both(1, 2));
    // exact p = 0 gives σ = 0, so any coincidence is outside 3σ
    o.check(k == 0, format!("Bohm3ND coincidences in {n} samples: {k}"));

    let mut worst_quad: f64 = 0.0;
    let mut worst_closed: f64 = 0.0;
    for sigma in [1.0, 0.6, 2.3] {
        let taus = linspace(-4.0, 4.0, 65);
        let dip = hom_dip(sigma, &taus);
        for (tau, p) in taus.iter().zip(dip) {
            let v = overlap_quadrature(sigma, sigma, *tau);
            worst_quad = worst_quad.max((p - 0.5 * (1.0 - v * v)).abs());
            let closed = 0.5 * (1.0 - (-sigma * sigma * tau * tau / 4.0).exp());
            worst_closed = worst_closed.max((p - closed).abs());
        }
    }
    o.check(worst_quad < 1e-8, format!("dip vs quadrature overlap, max diff {worst_quad:.2e}"));
    o.check(worst_closed < 1e-8, format!("dip vs closed form, max diff {worst_closed:.2e}"));
    o
}

fn pair_state(modes: usize, pairs: &[((usize, usize), f64)]) -> FockState {
    let mut s = FockState::empty(modes, 1, 2);
    for &((a, b), amp) in pairs {
        let mut occ = vec![0u8; modes];
        occ[a] += 1;
        occ[b] += 1;
        s.insert(occ, c(amp, 0.0)).unwrap();
    }
    s
}

fn full_state() -> Outcome {
    let mut o = Outcome::new();
    let circ = build(ExperimentName::CrocaFull, &Params::default()).unwrap();
    let idx = |l: &str| circ.circuit().mode_by_label(l).unwrap();
    let (x, y, t3, t4) = (idx("idler"), idx("signal"), idx("tap-3"), idx("tap-4"));
    let input = prepare_input(&circ, 2).unwrap();
    let out = propagate(&input.state, &circ).unwrap();

    // Fock amplitude of a symmetrized product over two distinct modes is
    // √2 times its first-quantized coefficient, so ∓1/(2√2) becomes ∓1/2.
    // x: detector 2, y: detector 1; the text pairs 3 with 2 and 4 with 1.
    let k = -0.5;
    let (v, u) = (t3, t4);
    let corrected = pair_state(4, &[((x, y), k), ((x, v), k), ((y, u), k), ((u, v), k)]);
    let d = state_distance_up_to_phase(&out, &corrected);
    o.check(d < 1e-10, format!("8-term state (labels per text, product-consistent sign): distance {d:.2e}"));
    o.check(out.copies() == 1, format!("single temporal copy: {}", out.copies() == 1));

    // as printed: u on detector 4's channel swapped with v, last line with + sign
    let printed = pair_state(4, &[((x, y), k), ((x, t4), k), ((y, t3), k), ((t3, t4), -k)]);
    let dp = state_distance_up_to_phase(&out, &printed);
    o.note(format!("as printed: distance {dp:.3}"));
    // a two-photon output of a product input factorizes: c_xy c_uv = c_xv c_yu
    let amp = |a: usize, b: usize| {
        let mut occ = vec![0u8; 4];
        occ[a] += 1;
        occ[b] += 1;
        out.amplitude(&occ)
    };
    let lhs = amp(x, y) * amp(t3, t4);
    let rhs = amp(x, t3) * amp(y, t4);
    o.note(format!(
        "engine: c_xy c_34 = {:.3}, c_x3 c_y4 = {:.3} (printed signs give -1/4 vs +1/4)",
        lhs, rhs
    ));
    let d = detection_distribution(&out, &circ);
    let p34 = d.probability(&ClickEvent::both(3, 4));
    let pmz = d.probability(&both_in_mz());
    o.check((p34 - 0.25).abs() < 1e-10 && (pmz - 0.25).abs() < 1e-10, format!("P(3&4) = {p34:.12}, P(both in MZ) = {pmz:.12}"));
    o
}

fn antibunching() -> Outcome {
    let mut o = Outcome::new();
    let cond = |phi: f64, ev: ClickEvent| {
        let circ = build(ExperimentName::CrocaFull, &params(CoherenceMode::Fixed(0.0), phi)).unwrap();
        let out = propagate(&prepare_input(&circ, 2).unwrap().state, &circ).unwrap();
        detection_distribution(&out, &circ)
            .conditional_probability(&ev, &both_in_mz())
            .unwrap()
    };
    let c0 = cond(0.0, ClickEvent::both(1, 2));
    o.check((c0 - 1.0).abs() < 1e-10, format!("P(1&2 | both in MZ) at δφ = 0: {c0:.12}"));
    let s_pi = cond(PI, same_port());
    o.check((s_pi - 1.0).abs() < 1e-10, format!("P(same port | both in MZ) at δφ = π: {s_pi:.12}"));
    let s_half = cond(PI / 2.0, same_port());
    o.note(format!("same-port probability at δφ = π/2: {s_half:.12}"));

    let spec = ExperimentSpec::new(ExperimentName::CrocaFull, Params::default()).with_models(&[Model::Ci]);
    let grid = linspace(0.0, PI, 33);
    let s = sweep(&spec, SweepParam::DeltaPhi, &grid).unwrap();
    let fit = s
        .visibilities
        .iter()
        .find(|f| f.statistic == "P(1&2|both in MZ)")
        .unwrap()
        .fit;
    let v = fit.visibility();
    o.check((v - 1.0).abs() <= 1e-6, format!("33-point δφ sweep visibility {v:.12} (harmonic {})", fit.harmonic));
    o
}

fn empty_wave() -> Outcome {
    let mut o = Outcome::new();
    let mut configs = vec![(CoherenceMode::Fixed(0.0), 0.0)];
    for theta in [CoherenceMode::Fixed(PI / 2.0), CoherenceMode::UniformRandom] {
        for phi in phase_grid(8) {
            configs.push((theta, phi));
        }
    }
    let n = 100_000;
    let mut worst: f64 = 0.0;
    let mut slowest: f64 = 0.0;
    let mut misses = vec![];
    for (i, &(theta, phi)) in configs.iter().enumerate() {
        let spec = ExperimentSpec::new(ExperimentName::CrocaFull, params(theta, phi))
            .with_models(&[Model::DeBroglie3D])
            .with_samples(n, 500 + i as u64);
        let t0 = Instant::now();
        let r = compare_models(&spec).unwrap();
        slowest = slowest.max(t0.elapsed().as_secs_f64());
        let m = r.model(Model::DeBroglie3D).unwrap();
        for name in ["P(1|3 xor 4)", "P(2|3 xor 4)"] {
            let s = m.stat(name).unwrap();
            let z = (s.value - 0.5).abs() / s.stderr;
            worst = worst.max(z);
            if z > 3.0 {
                misses.push(format!("{theta:?}/δφ={phi:.3} {name} = {:.5} ± {:.5}", s.value, s.stderr));
            }
        }
    }
    o.check(misses.is_empty(), format!("{} configurations, largest deviation {worst:.2}σ", configs.len()));
    for m in misses {
        o.note(m);
    }
    o.check(slowest < 10.0, format!("slowest configuration {slowest:.2} s"));
    o
}

/// 3σ band around an exact value. Conditional statistics use the expected
/// number of conditioning events.
fn exact_sigma(stat: &Statistic, p: f64, joint: &emptywave_core::fock::ClickDistribution, n: f64) -> f64 {
    match stat {
        Statistic::Probability { given: None, .. } => (p * (1.0 - p) / n).sqrt(),
        Statistic::Probability { given: Some(g), .. } => (p * (1.0 - p) / (n * joint.probability(g))).sqrt(),
        Statistic::MeanCount { .. } => unreachable!(),
    }
}

fn ci_bohm_agreement() -> Outcome {
    let mut o = Outcome::new();
    // parameter points: ChaCha8 seeded with 6; sampler seed = point index
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let n = 100_000u64;
    let mut checked = 0;
    let mut degenerate = 0;
    let mut worst: f64 = 0.0;
    let mut misses = vec![];
    for point in 0..20u64 {
        let p = Params {
            delta_theta: CoherenceMode::Fixed(rng.random_range(0.0..2.0 * PI)),
            delta_phi: rng.random_range(0.0..2.0 * PI),
            tau: rng.random_range(-2.0..2.0),
            alpha: rng.random_range(0.2..2.0),
            sigma: rng.random_range(0.5..2.0),
        };
        for e in ExperimentName::ALL {
            let spec = ExperimentSpec::new(e, p)
                .with_models(&[Model::Ci, Model::Bohm3Nd])
                .with_samples(n, point);
            let r = compare_models(&spec).unwrap();
            let ci = r.model(Model::Ci).unwrap();
            let bohm = r.model(Model::Bohm3Nd).unwrap();
            for (k, st) in default_statistics(e).iter().enumerate() {
                let exact = ci.stats[k].value;
                let got = bohm.stats[k].value;
                if !exact.is_finite() {
                    continue;
                }
                let sigma = match st {
                    Statistic::MeanCount { .. } => {
                        let total = p.alpha * p.alpha;
                        let q = exact / total;
                        total * (q * (1.0 - q) / n as f64).max(0.0).sqrt()
                    }
                    _ => exact_sigma(st, exact, ci.joint.as_ref().unwrap(), n as f64),
                };
                checked += 1;
                let ok = if sigma < 1e-12 {
                    degenerate += 1;
                    (got - exact).abs() < 1e-12
                } else {
                    let z = (got - exact).abs() / sigma;
                    worst = worst.max(z);
                    z <= 3.0
                };
                if !ok {
                    misses.push(format!("point {point} {e} {}: CI {exact:.5} Bohm {got:.5} σ {sigma:.5}", st.name()));
                }
            }
        }
    }
    o.check(
        misses.is_empty(),
        format!("{checked} statistics ({degenerate} exact 0/1), largest deviation {worst:.2}σ"),
    );
    for m in misses {
        o.note(m);
    }
    o
}

fn appendix_statistic() -> Outcome {
    let mut o = Outcome::new();
    let mut worst: f64 = 0.0;
    for theta in [0.0, 0.7, PI / 2.0, 2.0, PI, 4.4] {
        let circ = build(ExperimentName::Appendix1, &params(CoherenceMode::Fixed(theta), 0.0)).unwrap();
        let out = propagate(&prepare_input(&circ, 2).unwrap().state, &circ).unwrap();
        let d = detection_distribution(&out, &circ);
        for det in [1, 2] {
            let p = d.probability(&ClickEvent::fires(det).and(tap_xor()));
            worst = worst.max((p - 0.25).abs());
        }
    }
    o.check(worst < 1e-10, format!("CI P(1 ∧ 3 xor 4) = P(2 ∧ 3 xor 4) = 1/4, max diff {worst:.2e}"));

    let thetas = phase_grid(32);
    let fringe = |mode_of: &dyn Fn(f64) -> CoherenceMode, n: u64| {
        let ys: Vec<(f64, f64)> = thetas
            .iter()
            .map(|&t| {
                let circ = build(ExperimentName::Appendix1, &params(mode_of(t), 0.0)).unwrap();
                if n == 0 {
                    let d = analytic_distribution(&circ).unwrap();
                    (d.conditional_probability(&ClickEvent::fires(1), &tap_xor()).unwrap(), 0.0)
                } else {
                    let spec = ExperimentSpec::new(ExperimentName::Appendix1, params(mode_of(t), 0.0))
                        .with_models(&[Model::DeBroglie3D])
                        .with_samples(n, 700);
                    let r = compare_models(&spec).unwrap();
                    let s = r.model(Model::DeBroglie3D).unwrap().stat("P(1|3 xor 4)").unwrap().clone();
                    (s.value, s.stderr)
                }
            })
            .collect();
        let v: Vec<f64> = ys.iter().map(|p| p.0).collect();
        let se: Vec<f64> = ys.iter().map(|p| p.1).collect();
        fit_fringe(&thetas, &v, (n > 0).then_some(se.as_slice())).unwrap()
    };
    let fixed = |t: f64| CoherenceMode::Fixed(t);
    let uniform = |_: f64| CoherenceMode::UniformRandom;
    let va = fringe(&fixed, 0).visibility();
    o.check(va >= 0.999, format!("DeBroglie3D Fixed δθ fringe, exact enumeration: V = {va:.12}"));
    let fm = fringe(&fixed, 100_000);
    let vm = fm.visibility();
    let sm = fm.visibility_stderr.unwrap();
    o.check((vm - va).abs() <= 3.0 * sm, format!("same fringe sampled: V = {vm:.5} ± {sm:.5}"));
    let fu = fringe(&uniform, 100_000);
    let (vu, su) = (fu.visibility(), fu.visibility_stderr.unwrap());
    o.check(vu <= 3.0 * su, format!("UniformRandom sampled: V = {vu:.5}, 3σ = {:.5}", 3.0 * su));
    o.note(format!("UniformRandom exact enumeration: V = {:.2e}", fringe(&uniform, 0).visibility()));
    o
}

fn printed_laser_amplitudes(alpha: f64, theta: f64, phi: f64) -> [Complex64; 4] {
    let e = |x: f64| Complex64::from_polar(1.0, x);
    let i = c(0.0, 1.0);
    [
        i * alpha / 4.0 * (-1.0 + e(theta) + e(phi) + e(theta + phi)),
        i * alpha / 4.0 * (-1.0 + e(theta) - e(phi) - e(theta + phi)),
        i * alpha / 2.0,
        c(alpha / 2.0, 0.0),
    ]
}

fn laser_amplitudes() -> Outcome {
    let mut o = Outcome::new();
    let mut worst_phase: f64 = 0.0;
    let mut worst_mag: f64 = 0.0;
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut points = vec![(1.0, 0.0, 0.0), (0.5, PI / 2.0, 0.0), (2.0, 0.0, PI / 3.0)];
    for _ in 0..10 {
        points.push((
            rng.random_range(0.1..3.0),
            rng.random_range(0.0..2.0 * PI),
            rng.random_range(0.0..2.0 * PI),
        ));
    }
    for &(alpha, theta, phi) in &points {
        let p = Params {
            delta_theta: CoherenceMode::Fixed(theta),
            delta_phi: phi,
            alpha,
            ..Default::default()
        };
        let circ = build(ExperimentName::LaserCalibration, &p).unwrap();
        let input = match circ.source() {
            Some(emptywave_core::circuit::SourceSpec::Coherent { amplitudes }) => amplitudes.clone(),
            _ => unreachable!(),
        };
        let out = propagate_coherent(&CoherentField { alpha: input }, &circ).unwrap();
        let det = |d| out.alpha[circ.detector_mode(d).unwrap()];
        let got = [det(1), det(2), det(3), det(4)];
        let want = printed_laser_amplitudes(alpha, theta, phi);
        worst_phase = worst_phase.max(max_diff_up_to_phase(&got, &want));
        for (g, w) in got.iter().zip(&want) {
            worst_mag = worst_mag.max((g.norm() - w.norm()).abs());
        }
    }
    o.check(worst_phase < 1e-12, format!("α₁..α₄ up to one global phase: max diff {worst_phase:.3}"));
    o.check(worst_mag < 1e-12, format!("|α₁|..|α₄|: max diff {worst_mag:.2e}"));

    let p = Params {
        alpha: 0.5,
        delta_theta: CoherenceMode::Fixed(0.9),
        delta_phi: 2.1,
        ..Default::default()
    };
    let circ = build(ExperimentName::LaserCalibration, &p).unwrap();
    let mut a = vec![Complex64::default(); 4];
    a[0] = c(0.5, 0.0);
    let cert = independence_certificate(&CoherentField { alpha: a }, &circ, 6).unwrap();
    o.check(
        cert.max_deviation <= 1e-6 && cert.truncation_tail <= 1e-6,
        format!(
            "Fock expansion vs product of Poisson laws at |α| = 0.5, N_max = 6: deviation {:.2e}, tail {:.2e}",
            cert.max_deviation, cert.truncation_tail
        ),
    );
    o
}

fn random_packet_triplets(seed: u64, grid: &Lattice, k0: f64, dt: f64, units: Units) -> ([f64; 4], f64) {
    let kl = Lattice::centered([8, 8, 8], [0.0, 0.0, k0], [0.25, 0.25, 0.25]);
    let s = ModeSpectrum::random_packet(kl, [0.0, 0.0, k0], 0.5, seed);
    let t = 0.4;
    let f = |t: f64| synthesize(&s, grid, t, units).unwrap();
    let (a, b, cc) = (f(t - dt), f(t), f(t + dt));
    (maxwell_residual(&a, &b, &cc).unwrap(), continuity_residual(&a, &b, &cc).unwrap())
}

fn field_checks() -> Outcome {
    let mut o = Outcome::new();
    let t0 = Instant::now();
    let units = Units::default();
    let k0 = 1.0;
    // |k_d| ≤ 1.875 on this lattice; h·1.875 must stay below π/4
    let coarse = Lattice::centered([16, 16, 16], [0.0; 3], [0.4; 3]);
    let fine = coarse.refined();
    let mut worst_ratio = f64::INFINITY;
    for seed in [1, 2, 3] {
        let (mc, cc) = random_packet_triplets(seed, &coarse, k0, 0.5 * 0.4 / units.c, units);
        let (mf, cf) = random_packet_triplets(seed, &fine, k0, 0.5 * 0.2 / units.c, units);
        let ratios: Vec<f64> = (0..4).map(|i| mc[i] / mf[i]).chain([cc / cf]).collect();
        let low = ratios.iter().copied().fold(f64::INFINITY, f64::min);
        worst_ratio = worst_ratio.min(low);
        o.note(format!(
            "packet {seed}: reductions curlE {:.2} curlB {:.2} divE {:.2} divB {:.2} continuity {:.2}",
            ratios[0], ratios[1], ratios[2], ratios[3], ratios[4]
        ));
    }
    o.check(worst_ratio >= 3.5, format!("smallest residual reduction under h → h/2: {worst_ratio:.3}"));

    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let x = Lattice::cube(6, -1.0, 1.0);
    let mut worst_speed: f64 = 0.0;
    let mut spectra = 0;
    while spectra < 1000 {
        let kc = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
        let kl = Lattice::centered([3, 3, 3], kc, [0.3; 3]);
        let s = ModeSpectrum::random_packet(kl, kc, 0.4, rng.random());
        let Ok(f) = synthesize(&s, &x, rng.random_range(0.0..3.0), units) else {
            continue;
        };
        spectra += 1;
        for v in poynting_velocity(&f).into_iter().flatten() {
            worst_speed = worst_speed.max((v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt() / units.c);
        }
    }
    o.check(worst_speed <= 1.0 + 1e-10, format!("1000 random spectra: max |v|/c = {worst_speed:.15}"));

    let mut worst_dir: f64 = 0.0;
    for _ in 0..50 {
        let k: [f64; 3] = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
        let kn = (k[0] * k[0] + k[1] * k[1] + k[2] * k[2]).sqrt();
        let s = ModeSpectrum::plane_wave(k, c(rng.random(), rng.random()), c(rng.random(), rng.random()));
        let f = synthesize(&s, &Lattice::cube(4, -0.3, 0.3), 0.7, units).unwrap();
        for v in poynting_velocity(&f).into_iter().flatten() {
            for d in 0..3 {
                worst_dir = worst_dir.max((v[d] - units.c * k[d] / kn).abs());
            }
        }
    }
    o.check(worst_dir < 1e-10, format!("plane waves: max |v - c k̂| = {worst_dir:.2e}"));
    let dt = t0.elapsed().as_secs_f64();
    o.check(dt < 30.0, format!("runtime {dt:.2} s"));
    o
}

fn equivariance() -> Outcome {
    let mut o = Outcome::new();
    let g = FreeGaussian {
        x0: -2.0,
        v0: 0.5,
        sigma0: 1.0,
        hbar_over_m: 1.0,
    };
    let t_end = 2.0 * g.doubling_time();
    let evo = g.evolution(GridSpec::cube(1, 2401, -30.0, 30.0));
    let n = 10_000;
    let run = || {
        let start = sample_initial(&evo.field_at(0.0), n, 10);
        integrate_trajectories(&evo, &start, 0.0, t_end, 200)
    };
    let traj = run();
    let mut ends: Vec<f64> = (0..n).map(|i| traj.endpoint(i)[0]).collect();
    let law = Normal::new(g.center(t_end), g.width(t_end)).unwrap();
    let d = ks_statistic(&mut ends, |x| law.cdf(x));
    let crit = ks_critical_1pct(n);
    o.check(d < crit, format!("KS statistic {d:.5} vs 1% critical value {crit:.5} (n = {n})"));
    o.check(traj.failures() == 0, format!("failed trajectories: {}", traj.failures()));
    let again = run();
    o.check(again == traj, "rerun with the same seed is bit-identical".to_string());
    o
}

fn main() {
    let criteria: Vec<(u32, &str, fn() -> Outcome)> = vec![
        (1, "MZ transparency", mz_transparency),
        (2, "HOM bunching and dip", hom_bunching),
        (3, "full output state", full_state),
        (4, "antibunching and visibility", antibunching),
        (5, "empty-wave conditional statistics", empty_wave),
        (6, "CI and Bohm3ND agreement", ci_bohm_agreement),
        (7, "single-splitter conditional statistic", appendix_statistic),
        (8, "laser calibration amplitudes", laser_amplitudes),
        (9, "field equations and energy velocity", field_checks),
        (10, "equivariance of the guidance flow", equivariance),
    ];
    let mut unexpected = vec![];
    for (id, name, run) in criteria {
        let t0 = Instant::now();
        let out = run();
        let tag = if out.pass { "PASS" } else { "FAIL" };
        println!("{tag} criterion {id:>2}: {name} ({:.1} s)", t0.elapsed().as_secs_f64());
        for l in &out.lines {
            println!("       {l}");
        }
        let known = KNOWN_RED.iter().find(|(k, _)| *k == id);
        match (out.pass, known) {
            (false, Some((_, why))) => println!("       known: {why}"),
            (false, None) => unexpected.push(id),
            (true, Some(_)) => println!("       listed as known red but passed"),
            (true, None) => {}
        }
    }
    if !unexpected.is_empty() {
        eprintln!("unexpected failures: {unexpected:?}");
        std::process::exit(1);
    }
}
