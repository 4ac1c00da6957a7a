use std::f64::consts::PI;
use std::sync::OnceLock;

use koopman_laplace::decompose::{self, Attractor, DecayOptions};
use koopman_laplace::dynsys::{self, DynSystem, Observable, Signal};
use koopman_laplace::limit_cycle::{self, LimitCycleInfo};
use koopman_laplace::modes;
use koopman_laplace::phase::{self, AveragingOptions, TorusInfo, Window};
use koopman_laplace::resolvent;
use nalgebra::DMatrix;
use num_complex::Complex64;

const EPS: f64 = 0.3;
const TOL: f64 = 1e-12;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn vdp() -> DynSystem {
    dynsys::builtin_vdp(EPS)
}

fn cycle() -> &'static LimitCycleInfo {
    static CYCLE: OnceLock<LimitCycleInfo> = OnceLock::new();
    CYCLE.get_or_init(|| LimitCycleInfo::locate(&vdp(), &[3.0, 0.0], limit_cycle::DEFAULT_SETTLE_TIME, TOL).unwrap())
}

fn averaging() -> AveragingOptions {
    AveragingOptions::for_period(cycle().period).with_tol(TOL)
}

fn x1() -> Observable {
    Observable::coordinate(2, 0).unwrap()
}

fn residual_signal() -> &'static Signal {
    static RESIDUAL: OnceLock<Signal> = OnceLock::new();
    RESIDUAL.get_or_init(|| {
        let info = cycle();
        let dec = decompose::decompose(
            &vdp(),
            &[3.0, 0.0],
            &Attractor::Cycle { info, averaging: averaging() },
            &x1(),
            100.0,
            info.period / 512.0,
            TOL,
        )
        .unwrap();
        dec.residual.observe(&x1()).unwrap()
    })
}

#[test]
fn settled_point_returns_and_fft_agrees() {
    let x = limit_cycle::settle(&vdp(), &[3.0, 0.0], 200.0, TOL).unwrap();
    let est = limit_cycle::find_period(&vdp(), &x, None, TOL).unwrap();
    assert!(est.return_displacement < 1e-6, "{}", est.return_displacement);
    assert!((est.fft_omega - est.omega).abs() <= est.fft_bin);
}

#[test]
fn monodromy_determinant_obeys_liouville() {
    let info = cycle();
    let n = 4096;
    let traj = dynsys::integrate(&vdp(), &info.anchor, info.period, info.period / n as f64, TOL).unwrap();
    // tr DF = ε(1 − x₁²); periodic integrand, so the trapezoid rule is spectrally accurate.
    let trace: f64 = (0..n).map(|k| EPS * (1.0 - traj.state(k)[0].powi(2))).sum::<f64>() * info.period / n as f64;
    let det = info.monodromy.determinant();
    assert!((det - trace.exp()).abs() < 1e-6, "{det} vs {}", trace.exp());
    let product = info.multipliers.iter().fold(info.trivial_multiplier, |acc, m| acc * m);
    assert!((product - c(det, 0.0)).norm() < 1e-6);
}

#[test]
fn cycle_samples_follow_the_flow() {
    let info = cycle();
    assert_eq!(info.cycle_samples[0].phase, 0.0);
    assert_eq!(info.cycle_samples[0].state, info.anchor);
    for p in info.cycle_samples.iter().step_by(37) {
        let x = dynsys::flow(&vdp(), &info.anchor, info.period * p.phase / (2.0 * PI), TOL).unwrap();
        assert!((x[0] - p.state[0]).abs() < 1e-7 && (x[1] - p.state[1]).abs() < 1e-7);
    }
}

#[test]
fn weaker_damping_contracts_slower() {
    let slow = LimitCycleInfo::locate(&dynsys::builtin_vdp(0.1), &[2.0, 0.0], 400.0, 1e-11).unwrap();
    let nu_slow = slow.dominant_exponent().unwrap().re;
    let nu = cycle().dominant_exponent().unwrap().re;
    assert!(nu_slow.abs() < nu.abs(), "{nu_slow} vs {nu}");
}

#[test]
fn variational_flow_of_linear_system_is_matrix_exponential() {
    let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -2.0, -0.3]);
    let sys = dynsys::builtin_linear(&a).unwrap();
    let t = 2.5;
    let (_, phi) = dynsys::integrate_variational(&sys, &[0.4, -1.0], t, 1e-12).unwrap();
    let expected = (a * t).exp();
    assert!((phi - expected).abs().max() < 1e-8);
}

#[test]
fn anchor_and_half_period_phases() {
    let info = cycle();
    let reference = phase::PhaseReference::new(&vdp(), info, &x1(), &averaging()).unwrap();
    let at_anchor = reference.phase_of(&vdp(), &info.anchor, &x1()).unwrap();
    assert!(phase::phase_difference(at_anchor.phase, 0.0).abs() < 1e-9);
    let half = dynsys::flow(&vdp(), &info.anchor, info.period / 2.0, TOL).unwrap();
    let theta = reference.phase_of(&vdp(), &half, &x1()).unwrap().phase;
    assert!((theta - PI).abs() < 1e-3, "{theta}");
}

#[test]
fn isochron_phase_is_shared_with_settled_image() {
    let info = cycle();
    let reference = phase::PhaseReference::new(&vdp(), info, &x1(), &averaging()).unwrap();
    let off = reference.phase_of(&vdp(), &[3.0, 0.0], &x1()).unwrap();
    let image = dynsys::flow(&vdp(), &[3.0, 0.0], 40.0 * info.period, TOL).unwrap();
    let on = reference.phase_of(&vdp(), &image, &x1()).unwrap();
    assert!(phase::phase_difference(off.phase, on.phase).abs() < 1e-2);
}

#[test]
fn phase_is_stable_in_the_averaging_horizon() {
    let info = cycle();
    let long = phase::phase_of(&vdp(), &[3.0, 0.0], info, &x1(), &averaging()).unwrap();
    let short = phase::phase_of(&vdp(), &[3.0, 0.0], info, &x1(), &averaging().with_horizon(200.0 * info.period)).unwrap();
    assert!(phase::phase_difference(long.phase, short.phase).abs() < 1e-3);
}

#[test]
fn matching_an_on_cycle_point_is_a_fixed_point() {
    let info = cycle();
    let x = info.cycle_samples[100].state.clone();
    let m = phase::match_on_attractor(&vdp(), &x, info, &x1(), &averaging()).unwrap();
    assert!((m.state[0] - x[0]).abs() < 1e-6 && (m.state[1] - x[1]).abs() < 1e-6);
}

#[test]
fn on_cycle_input_has_no_residual() {
    let info = cycle();
    let x = info.cycle_samples[200].state.clone();
    let dec = decompose::decompose(
        &vdp(),
        &x,
        &Attractor::Cycle { info, averaging: averaging() },
        &x1(),
        30.0,
        0.05,
        TOL,
    )
    .unwrap();
    assert!(dec.residual.sup_norm(0.0, 30.0) < 1e-6);
}

#[test]
fn residual_decays_and_stationary_part_is_periodic() {
    let info = cycle();
    let dt = info.period / 512.0;
    let dec = decompose::decompose(
        &vdp(),
        &[3.0, 0.0],
        &Attractor::Cycle { info, averaging: averaging() },
        &x1(),
        100.0,
        dt,
        TOL,
    )
    .unwrap();
    let initial = dec.residual.sup_norm(0.0, 0.0);
    assert!(dec.residual.sup_norm(75.0, 100.0) < 0.01 * initial);
    for k in (0..dec.stationary.len() - 512).step_by(97) {
        for i in 0..2 {
            assert!((dec.stationary.state(k + 512)[i] - dec.stationary.state(k)[i]).abs() < 1e-5);
        }
    }
    // Later fit windows see fewer k ≥ 2 harmonics.
    let nu = info.dominant_exponent().unwrap().re;
    let early = decompose::decay_rate(&dec, 0, info.period, &DecayOptions { discard_fraction: 0.0, ..Default::default() }).unwrap();
    let late = decompose::decay_rate(&dec, 0, info.period, &DecayOptions { discard_fraction: 0.5, ..Default::default() }).unwrap();
    assert!((late.nu_hat - nu).abs() < (early.nu_hat - nu).abs(), "{} {} {nu}", early.nu_hat, late.nu_hat);
}

#[test]
fn decoupled_torus_phases_are_the_oscillators_own() {
    let sys = dynsys::builtin_coupled_vdp(EPS, 1.0, 3.0, 0.0);
    let obs = Observable::coordinates(4, &[0, 2]).unwrap();
    let torus = TorusInfo::locate(&sys, &[3.0, 3.0, 3.0, 3.0], &obs, 2, 300.0, 1e-10).unwrap();
    let mut opts = AveragingOptions::for_period(2.0 * PI / torus.omegas[0]).with_tol(1e-10);
    opts.window = Window::Hann;
    opts.t_avg = 1000.0;
    opts.dt = 0.01;
    let joint = phase::torus_phases(&sys, &[3.0, 3.0, 3.0, 3.0], &torus.omegas, &obs, &opts).unwrap();
    let single = dynsys::integrate(&vdp(), &[3.0, 3.0], opts.t_avg + 0.5 * opts.dt, opts.dt, 1e-10).unwrap();
    let avg = phase::time_average(&single.observe(&x1()).unwrap(), c(0.0, torus.omegas[0]), opts.t_avg, Window::Hann).unwrap();
    assert!(phase::phase_difference(joint.phases[0], avg.value[0].arg()).abs() < 1e-6);

    let doubled = phase::torus_phases(&sys, &[3.0, 3.0, 3.0, 3.0], &torus.omegas, &obs, &AveragingOptions { t_avg: 2000.0, ..opts }).unwrap();
    for j in 0..2 {
        assert!(phase::phase_difference(joint.phases[j], doubled.phases[j]).abs() < 1e-2);
    }
}

#[test]
fn coupled_phases_stable_under_doubling() {
    let sys = dynsys::builtin_coupled_vdp(EPS, 1.0, 3.0, 0.5);
    let obs = Observable::coordinates(4, &[0, 2]).unwrap();
    let x0 = [3.0, 3.0, 3.0, 3.0];
    let torus = TorusInfo::locate(&sys, &x0, &obs, 2, 300.0, 1e-10).unwrap();
    let opts = phase::TorusMatchOptions::new(1000.0, 0.01, 1e-10).averaging;
    let a = phase::torus_phases(&sys, &x0, &torus.omegas, &obs, &opts).unwrap();
    let b = phase::torus_phases(&sys, &x0, &torus.omegas, &obs, &AveragingOptions { t_avg: 2000.0, ..opts }).unwrap();
    for j in 0..2 {
        assert!(a.phases[j].is_finite());
        assert!(phase::phase_difference(a.phases[j], b.phases[j]).abs() < 1e-2);
    }
}

fn long_output() -> Signal {
    let opts = averaging();
    dynsys::integrate(&vdp(), &[3.0, 0.0], opts.t_avg + 0.5 * opts.dt, opts.dt, TOL).unwrap().observe(&x1()).unwrap()
}

#[test]
fn limit_cycle_expansion_matches_numeric_transform() {
    let info = cycle();
    let opts = averaging();
    let y = long_output();
    let stat = resolvent::stationary_residues(&y, info.omega, 7, opts.t_avg, opts.window).unwrap();
    assert!((stat[&1][0].norm() - stat[&-1][0].norm()).abs() < 1e-9);
    assert!((stat[&1][0] - stat[&-1][0].conj()).norm() < 1e-9);

    let nu = info.dominant_exponent().unwrap();
    let non = resolvent::nonstationary_residues(residual_signal(), nu, info.omega, 2, 7).unwrap();
    let set = resolvent::build_expansion_limit_cycle(info, &stat, &non, 2, 7).unwrap();
    assert!(set.is_conjugate_closed(1e-8));
    let t_max = 400.0 * info.period;
    for &s in &[c(0.3, 0.0), c(0.3, 1.0), c(0.5, -2.9), c(1.0, 0.5), c(2.0, 3.0)] {
        let num = resolvent::laplace_numeric(&y, s, t_max).unwrap().value[0];
        let model = resolvent::expansion_eval(&set, s).unwrap()[0];
        assert!((num - model).norm() < 0.05 * num.norm(), "s = {s}: {num} vs {model}");
    }

    let mean_only = resolvent::build_expansion_limit_cycle(info, &stat, &non, 0, 0).unwrap();
    assert_eq!(mean_only.entries.len(), 1);
    assert_eq!(mean_only.entries[0].pole, c(0.0, 0.0));
}

#[test]
fn on_cycle_spectrum_has_odd_harmonics() {
    let info = cycle();
    let on = dynsys::integrate(&vdp(), &info.anchor, 400.0, 0.01, 1e-10).unwrap().observe(&x1()).unwrap();
    let sigma = 0.05 * info.omega;
    let omegas: Vec<f64> = (0..=600).map(|k| k as f64 * 0.01).collect();
    let grid = resolvent::fourier_spectrum(&on, &omegas, sigma, 400.0).unwrap();
    let peaks = resolvent::spectrum_peaks(&grid, 0, 1e-6);
    let harmonic = |m: f64| peaks.iter().find(|(s, _)| (s.im - m * info.omega).abs() < 0.08).map(|p| p.1);
    // Tails of the fundamental pull the weaker peaks off their harmonic.
    let (p1, p3, p5) = (harmonic(1.0).unwrap(), harmonic(3.0).unwrap(), harmonic(5.0).unwrap());
    assert!(p1 > p3 && p3 > p5);
    // Even harmonics are absent by the x → −x symmetry.
    let even = harmonic(2.0).unwrap_or(0.0);
    assert!(even < 1e-3 * p1);
}

#[test]
fn residual_peak_width_reflects_decay_rate() {
    let info = cycle();
    let nu = info.dominant_exponent().unwrap().re;
    let sigma = 0.05 * info.omega;
    let r = residual_signal();
    let at = |w: f64| resolvent::laplace_numeric(r, c(sigma, w), 100.0).unwrap().value[0].norm();
    let half = sigma - nu;
    let ratio = 0.5 * (at(info.omega + half) + at(info.omega - half)) / at(info.omega);
    assert!((ratio - std::f64::consts::FRAC_1_SQRT_2).abs() < 0.1, "{ratio}");
}

#[test]
fn dmd_on_the_residual_finds_the_floquet_pole() {
    let info = cycle();
    let r = residual_signal();
    // Stride so that the embedded step is about T/16.
    let stride = 32;
    let data: Vec<Complex64> = r.samples().step_by(stride).map(|s| s[0]).collect();
    let y = Signal::scalar(r.dt() * stride as f64, data).unwrap();
    let est = modes::dmd(&modes::delay_embed(&modes::snapshot_matrix(&y), 32).unwrap(), y.dt(), 1e-8).unwrap();
    let lead = est
        .cont_eigs
        .iter()
        .zip(&est.amplitudes)
        .filter(|(z, _)| (z.im.abs() - info.omega).abs() < 0.05)
        .max_by(|a, b| a.1.norm().total_cmp(&b.1.norm()))
        .map(|(z, _)| *z)
        .unwrap();
    assert!((lead.re + 0.301).abs() < 0.02, "{lead}");
}

#[test]
fn embedding_rank_is_min_of_terms_and_depth() {
    let poles = [c(-0.2, 0.0), c(-0.5, 0.0), c(-1.1, 0.0)];
    let y = Signal::from_fn(0.1, 80, |t| poles.iter().map(|p| (p * t).exp()).sum()).unwrap();
    for (depth, rank) in [(1, 1), (2, 2), (5, 3)] {
        let est = modes::dmd(&modes::delay_embed(&modes::snapshot_matrix(&y), depth).unwrap(), 0.1, 1e-10).unwrap();
        assert_eq!(est.rank, rank, "depth {depth}");
    }
}
