//! Asymptotic phases from Laplace/Fourier time averages.
//!
//! The average `(1/T)∫₀ᵀ e^{−λt} y(t) dt` converges, as `T → ∞`, to the
//! projection of the output onto the Koopman eigenfunction with eigenvalue
//! `λ` (for `Re λ = 0` on attractors). At `λ = iΩ` on a limit cycle its
//! argument is the asymptotic phase of the initial condition, so isochrons
//! are level sets of that argument.
//!
//! Off-attractor transients contribute a `C/T` term to the plain average.
//! Rectangular averages are therefore combined as `2A(T) − A(T/2)`, which
//! removes that term; the convergence gap is the change of the combined value
//! when the horizon is halved. On tori, where several incommensurate
//! frequencies leak into each other, a Hann taper is used instead.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::Serialize;

use crate::dynsys::{self, DynSystem, Observable, Signal};
use crate::error::{Error, Result};
use crate::limit_cycle::{self, LimitCycleInfo};

/// Averages with magnitude below this cannot carry a phase.
pub const PHASE_BLIND_THRESHOLD: f64 = 1e-8;

/// Horizon, sampling and acceptance settings for time averages.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AveragingOptions {
    /// Averaging horizon `T_avg` (s).
    pub t_avg: f64,
    /// Sampling step of the averaged trajectory (s).
    pub dt: f64,
    /// Integration tolerance.
    pub tol: f64,
    /// Accept when `gap ≤ rel_gap · |average| + abs_gap`.
    pub rel_gap: f64,
    pub abs_gap: f64,
    pub window: Window,
}

/// Weighting applied inside the time average.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Window {
    /// Plain average with the `2A(T) − A(T/2)` transient correction.
    Rectangular,
    /// `1 − cos(2πt/T)` weighting; suppresses both transients and leakage
    /// between incommensurate frequencies.
    Hann,
}

impl AveragingOptions {
    /// `T_avg = 400 T`, `dt = T/512`.
    pub fn for_period(period: f64) -> Self {
        Self {
            t_avg: 400.0 * period,
            dt: period / 512.0,
            tol: dynsys::DEFAULT_TOL,
            rel_gap: 1e-3,
            abs_gap: 1e-10,
            window: Window::Rectangular,
        }
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn with_horizon(mut self, t_avg: f64) -> Self {
        self.t_avg = t_avg;
        self
    }
}

/// Result of a time average over a sampled output.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimeAverage {
    /// Extrapolated average `2A(T) − A(T/2)`, one entry per output component.
    pub value: Vec<Complex64>,
    /// Plain average `A(T)`.
    pub plain: Vec<Complex64>,
    /// `max_j |R_j(T) − R_j(T/2)|` with `R = 2A(·) − A(·/2)`.
    pub gap: f64,
    /// Horizon actually used (a multiple of `4 dt`).
    pub t_avg: f64,
}

impl TimeAverage {
    pub fn accepted(&self, opts: &AveragingOptions) -> Result<()> {
        let scale = self.value.iter().map(|z| z.norm()).fold(0.0, f64::max);
        let tol = opts.rel_gap * scale + opts.abs_gap;
        if !(self.gap <= tol) {
            return Err(Error::NonConvergence { gap: self.gap, tol });
        }
        Ok(())
    }
}

fn window_count(signal: &Signal, t_avg: f64) -> Result<usize> {
    if !(t_avg > 0.0) {
        return Err(Error::InvalidInput(format!("averaging horizon must be positive, got {t_avg}")));
    }
    let n = ((t_avg / signal.dt()).round() as usize) / 4 * 4;
    if n < 4 {
        return Err(Error::InvalidInput("averaging horizon shorter than four samples".into()));
    }
    if n + 1 > signal.len() {
        return Err(Error::InvalidInput(format!(
            "averaging horizon {t_avg} exceeds the signal duration {}",
            signal.duration()
        )));
    }
    Ok(n)
}

/// Trapezoid average of `e^{−λ(t − t0)} y(t)` over `[t0, t0 + T]`, where `t0`
/// is the first sample time.
///
/// With [`Window::Rectangular`] the returned value is `2A(T) − A(T/2)`; with
/// [`Window::Hann`] it is the Hann-weighted average over `T`, and the gap is
/// its change from the weighted average over `T/2`.
pub fn time_average(signal: &Signal, lambda: Complex64, t_avg: f64, window: Window) -> Result<TimeAverage> {
    let n = window_count(signal, t_avg)?;
    let m = signal.dim();
    let dt = signal.dt();
    let weights: Vec<Complex64> = (0..=n).map(|k| (-lambda * (k as f64 * dt)).exp()).collect();
    // Trapezoid average over the first `len` intervals with a taper `w(k/len)`.
    let average = |len: usize, taper: &dyn Fn(f64) -> f64| -> Vec<Complex64> {
        let mut acc = vec![Complex64::new(0.0, 0.0); m];
        for (k, &wk) in weights.iter().enumerate().take(len + 1) {
            let half = if k == 0 || k == len { 0.5 } else { 1.0 };
            let w = wk * (half * taper(k as f64 / len as f64));
            for (a, &y) in acc.iter_mut().zip(signal.sample(k)) {
                *a += w * y;
            }
        }
        acc.into_iter().map(|a| a / len as f64).collect()
    };
    let flat = |_: f64| 1.0;
    let hann = |u: f64| 1.0 - (2.0 * PI * u).cos();
    let plain = average(n, &flat);
    let (value, previous) = match window {
        Window::Rectangular => {
            let a2 = average(n / 2, &flat);
            let a4 = average(n / 4, &flat);
            let r1: Vec<Complex64> = plain.iter().zip(&a2).map(|(a, b)| 2.0 * a - b).collect();
            let r2: Vec<Complex64> = a2.iter().zip(&a4).map(|(a, b)| 2.0 * a - b).collect();
            (r1, r2)
        }
        Window::Hann => (average(n, &hann), average(n / 2, &hann)),
    };
    let gap = value.iter().zip(&previous).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
    Ok(TimeAverage { value, plain, gap, t_avg: n as f64 * dt })
}

/// GLA estimate of `(P_λ f)(x₀)`: the time average of `e^{−λt} f(S^t x₀)`.
pub fn gla_projection(
    sys: &DynSystem,
    x0: &[f64],
    lambda: Complex64,
    obs: &Observable,
    opts: &AveragingOptions,
) -> Result<TimeAverage> {
    let traj = dynsys::integrate(sys, x0, opts.t_avg + 0.5 * opts.dt, opts.dt, opts.tol)?;
    let avg = time_average(&traj.observe(obs)?, lambda, opts.t_avg, opts.window)?;
    avg.accepted(opts)?;
    Ok(avg)
}

/// Fourier average at angular frequency `omega`, i.e. [`gla_projection`] at `λ = iω`.
pub fn fourier_average(
    sys: &DynSystem,
    x0: &[f64],
    omega: f64,
    obs: &Observable,
    opts: &AveragingOptions,
) -> Result<TimeAverage> {
    gla_projection(sys, x0, Complex64::new(0.0, omega), obs, opts)
}

/// Asymptotic phase of an initial condition relative to the cycle anchor.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PhaseResult {
    /// `θ ∈ [0, 2π)`.
    pub phase: f64,
    /// Fourier average at `Ω` of the first observable component.
    pub average: Complex64,
    pub t_avg: f64,
    pub convergence_gap: f64,
}

/// Wraps an angle into `[0, 2π)`.
pub fn wrap_phase(theta: f64) -> f64 {
    let w = theta.rem_euclid(2.0 * PI);
    if w >= 2.0 * PI {
        0.0
    } else {
        w
    }
}

/// Signed angular difference in `(−π, π]`.
pub fn phase_difference(a: f64, b: f64) -> f64 {
    let d = wrap_phase(a - b);
    if d > PI {
        d - 2.0 * PI
    } else {
        d
    }
}

fn leading_average(avg: &TimeAverage) -> Result<Complex64> {
    let z = avg.value[0];
    if z.norm() < PHASE_BLIND_THRESHOLD {
        return Err(Error::PhaseBlind { magnitude: z.norm() });
    }
    Ok(z)
}

/// Fourier average of the anchor, reused across phase queries on one cycle.
#[derive(Debug, Clone)]
pub struct PhaseReference {
    pub omega: f64,
    pub anchor_average: Complex64,
    pub opts: AveragingOptions,
}

impl PhaseReference {
    pub fn new(sys: &DynSystem, cycle: &LimitCycleInfo, obs: &Observable, opts: &AveragingOptions) -> Result<Self> {
        let avg = fourier_average(sys, &cycle.anchor, cycle.omega, obs, opts)?;
        Ok(Self { omega: cycle.omega, anchor_average: leading_average(&avg)?, opts: *opts })
    }

    pub fn phase_of(&self, sys: &DynSystem, x0: &[f64], obs: &Observable) -> Result<PhaseResult> {
        let avg = fourier_average(sys, x0, self.omega, obs, &self.opts)?;
        let z = leading_average(&avg)?;
        Ok(PhaseResult {
            phase: wrap_phase(z.arg() - self.anchor_average.arg()),
            average: z,
            t_avg: avg.t_avg,
            convergence_gap: avg.gap,
        })
    }
}

/// Asymptotic phase of `x0` on `cycle`: `arg A(x0) − arg A(anchor)` with
/// `A` the Fourier average at `Ω` of the first observable component.
pub fn phase_of(
    sys: &DynSystem,
    x0: &[f64],
    cycle: &LimitCycleInfo,
    obs: &Observable,
    opts: &AveragingOptions,
) -> Result<PhaseResult> {
    PhaseReference::new(sys, cycle, obs, opts)?.phase_of(sys, x0, obs)
}

/// On-cycle state on the same isochron as `x0`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MatchedState {
    pub state: Vec<f64>,
    pub phase: PhaseResult,
}

/// The point of `cycle` whose asymptotic phase equals that of `x0`.
///
/// The cycle point at phase `θ` is obtained by flowing the anchor for `θ/Ω`,
/// which is the dense-output interpolation of the cycle parameterization.
pub fn match_on_attractor(
    sys: &DynSystem,
    x0: &[f64],
    cycle: &LimitCycleInfo,
    obs: &Observable,
    opts: &AveragingOptions,
) -> Result<MatchedState> {
    let phase = phase_of(sys, x0, cycle, obs, opts)?;
    let state = cycle.state_at_phase(sys, phase.phase, opts.tol)?;
    Ok(MatchedState { state, phase })
}

/// A near-resonance `p Ωᵢ ≈ q Ωⱼ` among torus frequencies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Resonance {
    pub i: usize,
    pub j: usize,
    pub p: u32,
    pub q: u32,
    pub defect: f64,
}

/// Largest integer order checked by [`resonance_check`].
pub const RESONANCE_ORDER: u32 = 8;

/// Flags the lowest-order pair with `|p Ωᵢ − q Ωⱼ| < rel_tol · max Ω`.
///
/// This is a rational-approximation diagnostic only; it does not prove or
/// disprove any Diophantine condition.
pub fn resonance_check(omegas: &[f64], rel_tol: f64) -> Option<Resonance> {
    let scale = omegas.iter().fold(0.0f64, |a, w| a.max(w.abs()));
    let mut best: Option<Resonance> = None;
    for i in 0..omegas.len() {
        for j in i + 1..omegas.len() {
            for order in 2..=2 * RESONANCE_ORDER {
                for p in 1..order {
                    let q = order - p;
                    if p > RESONANCE_ORDER || q > RESONANCE_ORDER {
                        continue;
                    }
                    let defect = (p as f64 * omegas[i] - q as f64 * omegas[j]).abs();
                    if defect < rel_tol * scale && best.is_none() {
                        best = Some(Resonance { i, j, p, q, defect });
                    }
                }
            }
        }
    }
    best
}

/// Phases of an initial condition with respect to each torus frequency.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TorusPhases {
    /// `θⱼ = arg Aⱼ(x₀) ∈ [0, 2π)`.
    pub phases: Vec<f64>,
    pub averages: Vec<Complex64>,
    pub gaps: Vec<f64>,
    pub resonance: Option<Resonance>,
}

fn observable_component_for(obs: &Observable, j: usize, count: usize) -> Result<usize> {
    match obs.dim() {
        1 => Ok(0),
        m if m == count => Ok(j),
        m => Err(Error::InvalidInput(format!(
            "observable has {m} components; need 1 or one per frequency ({count})"
        ))),
    }
}

/// Relative tolerance of the resonance diagnostic.
pub const RESONANCE_TOL: f64 = 1e-3;

/// One Fourier-average phase per frequency. When the observable has one
/// component per frequency, component `j` is used for `ωⱼ`; a scalar
/// observable is used for all of them.
pub fn torus_phases(
    sys: &DynSystem,
    x0: &[f64],
    omegas: &[f64],
    obs: &Observable,
    opts: &AveragingOptions,
) -> Result<TorusPhases> {
    if omegas.is_empty() {
        return Err(Error::InvalidInput("need at least one frequency".into()));
    }
    let traj = dynsys::integrate(sys, x0, opts.t_avg + 0.5 * opts.dt, opts.dt, opts.tol)?;
    let signal = traj.observe(obs)?;
    let mut phases = Vec::new();
    let mut averages = Vec::new();
    let mut gaps = Vec::new();
    for (j, &w) in omegas.iter().enumerate() {
        let comp = observable_component_for(obs, j, omegas.len())?;
        let avg = time_average(&signal, Complex64::new(0.0, w), opts.t_avg, opts.window)?;
        let z = avg.value[comp];
        let single = TimeAverage { value: vec![z], plain: vec![avg.plain[comp]], gap: avg.gap, t_avg: avg.t_avg };
        single.accepted(opts)?;
        if z.norm() < PHASE_BLIND_THRESHOLD {
            return Err(Error::PhaseBlind { magnitude: z.norm() });
        }
        phases.push(wrap_phase(z.arg()));
        averages.push(z);
        gaps.push(avg.gap);
    }
    Ok(TorusPhases { phases, averages, gaps, resonance: resonance_check(omegas, RESONANCE_TOL) })
}

/// Peak frequencies of an on-attractor output, one per requested frequency.
///
/// With one observable component per frequency, the dominant spectral peak
/// of component `j` gives `ωⱼ`; with a scalar observable the largest
/// distinct peaks are used. Peaks are refined by maximizing a Hann-windowed
/// Fourier average.
pub fn torus_frequencies(
    sys: &DynSystem,
    x_on_torus: &[f64],
    obs: &Observable,
    count: usize,
    span: f64,
    dt: f64,
    tol: f64,
) -> Result<Vec<f64>> {
    let traj = dynsys::integrate(sys, x_on_torus, span, dt, tol)?;
    let signal = traj.observe(obs)?;
    let mut found: Vec<f64> = Vec::new();
    for j in 0..count {
        let comp = observable_component_for(obs, j, count)?;
        let y: Vec<f64> = signal.component(comp).iter().map(|z| z.re).collect();
        let bin = 2.0 * PI / (y.len() as f64 * dt);
        let coarse = spectral_peaks(&y, dt)
            .into_iter()
            .find(|&w| found.iter().all(|&f| (f - w).abs() > 3.0 * bin))
            .ok_or_else(|| Error::NoLimitCycle("no distinct spectral peak".into()))?;
        found.push(refine_peak(&y, dt, coarse, bin));
    }
    Ok(found)
}

fn spectral_peaks(y: &[f64], dt: f64) -> Vec<f64> {
    use rustfft::FftPlanner;
    let len = y.len();
    let mean = y.iter().sum::<f64>() / len as f64;
    let mut buf: Vec<Complex64> = y.iter().map(|&v| Complex64::new(v - mean, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(len).process(&mut buf);
    let half = len / 2;
    let mags: Vec<f64> = buf[..half].iter().map(|z| z.norm()).collect();
    let mut peaks: Vec<(usize, f64)> = (1..half.saturating_sub(1))
        .filter(|&k| mags[k] > mags[k - 1] && mags[k] >= mags[k + 1])
        .map(|k| (k, mags[k]))
        .collect();
    peaks.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap());
    let bin = 2.0 * PI / (len as f64 * dt);
    peaks.into_iter().map(|(k, _)| k as f64 * bin).collect()
}

fn hann_magnitude(y: &[f64], dt: f64, omega: f64) -> f64 {
    let len = y.len();
    let mut acc = Complex64::new(0.0, 0.0);
    for (k, &v) in y.iter().enumerate() {
        let w = 0.5 - 0.5 * (2.0 * PI * k as f64 / (len - 1) as f64).cos();
        acc += w * v * Complex64::from_polar(1.0, -omega * k as f64 * dt);
    }
    acc.norm()
}

fn refine_peak(y: &[f64], dt: f64, coarse: f64, bin: f64) -> f64 {
    // Golden-section search for the maximum on [coarse − bin, coarse + bin].
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (coarse - bin, coarse + bin);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (hann_magnitude(y, dt, c), hann_magnitude(y, dt, d));
    while (b - a) > 1e-10 * coarse.abs().max(1.0) {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = hann_magnitude(y, dt, c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = hann_magnitude(y, dt, d);
        }
    }
    0.5 * (a + b)
}

/// Located stable torus: frequencies and an on-torus reference point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TorusInfo {
    pub omegas: Vec<f64>,
    /// A settled on-torus state.
    pub anchor: Vec<f64>,
    pub resonance: Option<Resonance>,
}

impl TorusInfo {
    /// Settles from `x0` and estimates `count` frequencies from `obs`.
    pub fn locate(
        sys: &DynSystem,
        x0: &[f64],
        obs: &Observable,
        count: usize,
        t_settle: f64,
        tol: f64,
    ) -> Result<Self> {
        let anchor = limit_cycle::settle(sys, x0, t_settle, tol)?;
        let omegas = torus_frequencies(sys, &anchor, obs, count, 2048.0, 0.05, tol)?;
        let resonance = resonance_check(&omegas, RESONANCE_TOL);
        Ok(Self { omegas, anchor, resonance })
    }
}

/// Search settings for [`match_on_torus`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TorusMatchOptions {
    pub averaging: AveragingOptions,
    /// Length of on-torus orbit scanned for a phase match (s).
    pub search_span: f64,
}

impl TorusMatchOptions {
    /// Hann-windowed averages over `t_avg` sampled at `dt`, scanning 20 000 s of orbit.
    pub fn new(t_avg: f64, dt: f64, tol: f64) -> Self {
        Self {
            averaging: AveragingOptions {
                t_avg,
                dt,
                tol,
                rel_gap: 1e-3,
                abs_gap: 1e-10,
                window: Window::Hann,
            },
            search_span: 20_000.0,
        }
    }
}

/// Result of matching an initial condition onto a torus.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TorusMatch {
    pub state: Vec<f64>,
    pub target: TorusPhases,
    /// Phases of the matched point, measured with the same averages.
    pub matched_phases: Vec<f64>,
    /// Euclidean norm of the wrapped phase mismatch (rad).
    pub mismatch: f64,
    /// Flow time from the torus anchor to the matched point.
    pub flow_time: f64,
    /// Phase drift rates calibrated over the search span.
    pub drift_rates: Vec<f64>,
}

/// Finds an on-torus point with the same phases as `x0`.
///
/// On the torus each phase advances linearly, `θⱼ(S^τ a) = θⱼ(a) + Ωⱼτ`.
/// The drift rates are calibrated by measuring the phases at both ends of
/// the search span, the span is scanned for the flow time whose predicted
/// phases best match those of `x0` (refined along the flow direction), and
/// the anchor is flowed to that time. The reported mismatch is measured, not
/// predicted.
pub fn match_on_torus(
    sys: &DynSystem,
    x0: &[f64],
    torus: &TorusInfo,
    obs: &Observable,
    opts: &TorusMatchOptions,
) -> Result<TorusMatch> {
    let avg = &opts.averaging;
    let span = opts.search_span;
    if !(span > 0.0) {
        return Err(Error::InvalidInput(format!("search span must be positive, got {span}")));
    }
    let omegas = &torus.omegas;
    let target = torus_phases(sys, x0, omegas, obs, avg)?;
    let start = torus_phases(sys, &torus.anchor, omegas, obs, avg)?;
    let end_state = dynsys::flow(sys, &torus.anchor, span, avg.tol)?;
    let end = torus_phases(sys, &end_state, omegas, obs, avg)?;
    let rates: Vec<f64> = omegas
        .iter()
        .enumerate()
        .map(|(j, &w)| w + phase_difference(end.phases[j], start.phases[j] + w * span) / span)
        .collect();

    let predicted = |tau: f64| -> Vec<f64> {
        start.phases.iter().zip(&rates).map(|(p, w)| wrap_phase(p + w * tau)).collect()
    };
    let errors = |tau: f64| -> Vec<f64> {
        predicted(tau).iter().zip(&target.phases).map(|(a, b)| phase_difference(*a, *b)).collect()
    };
    let wmax = rates.iter().fold(0.0f64, |a, w| a.max(w.abs()));
    let step = 0.05 / wmax.max(1e-12);
    let count = (span / step).floor() as usize;
    let mut best = (0.0, f64::INFINITY);
    for k in 0..=count {
        let tau = k as f64 * step;
        let s: f64 = errors(tau).iter().map(|e| e * e).sum();
        if s < best.1 {
            best = (tau, s);
        }
    }
    let errs = errors(best.0);
    let w2: f64 = rates.iter().map(|w| w * w).sum();
    let delta = -rates.iter().zip(&errs).map(|(w, e)| w * e).sum::<f64>() / w2;
    let flow_time = (best.0 + delta).clamp(0.0, span);

    let state = dynsys::flow(sys, &torus.anchor, flow_time, avg.tol)?;
    let measured = torus_phases(sys, &state, omegas, obs, avg)?;
    let mismatch = measured
        .phases
        .iter()
        .zip(&target.phases)
        .map(|(a, b)| phase_difference(*a, *b).powi(2))
        .sum::<f64>()
        .sqrt();
    Ok(TorusMatch {
        state,
        target,
        matched_phases: measured.phases,
        mismatch,
        flow_time,
        drift_rates: rates,
    })
}
