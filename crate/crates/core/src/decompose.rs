//! Stationary / non-stationary split of a trajectory and the decay rate of
//! the non-stationary part.

use serde::Serialize;

use crate::dynsys::{self, DynSystem, Observable, Trajectory};
use crate::error::{Error, Result};
use crate::limit_cycle::LimitCycleInfo;
use crate::phase::{self, AveragingOptions, PhaseResult, TorusInfo, TorusMatch, TorusMatchOptions};

/// Attractor onto which the initial condition is phase-matched.
#[derive(Debug, Clone)]
pub enum Attractor<'a> {
    Cycle { info: &'a LimitCycleInfo, averaging: AveragingOptions },
    Torus { info: &'a TorusInfo, matching: TorusMatchOptions },
}

/// How the stationary initial condition was obtained.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MatchReport {
    Cycle(PhaseResult),
    Torus(TorusMatch),
    Given,
}

/// `original = stationary + residual` on one grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Decomposition {
    pub original: Trajectory,
    pub stationary: Trajectory,
    pub residual: Trajectory,
    pub matched_state: Vec<f64>,
    pub matching: MatchReport,
}

impl Decomposition {
    /// Builds the decomposition from two trajectories on the same grid.
    pub fn from_parts(original: Trajectory, stationary: Trajectory) -> Result<Self> {
        let residual = original.difference(&stationary)?;
        let matched_state = stationary.state(0).to_vec();
        Ok(Self { original, stationary, residual, matched_state, matching: MatchReport::Given })
    }
}

/// Integrates `x0` and its phase-matched on-attractor partner over
/// `[0, horizon]` on the grid `dt` and returns both with their difference.
pub fn decompose(
    sys: &DynSystem,
    x0: &[f64],
    attractor: &Attractor<'_>,
    obs: &Observable,
    horizon: f64,
    dt: f64,
    tol: f64,
) -> Result<Decomposition> {
    let (matched_state, matching) = match attractor {
        Attractor::Cycle { info, averaging } => {
            let m = phase::match_on_attractor(sys, x0, info, obs, averaging)?;
            (m.state, MatchReport::Cycle(m.phase))
        }
        Attractor::Torus { info, matching } => {
            let m = phase::match_on_torus(sys, x0, info, obs, matching)?;
            (m.state.clone(), MatchReport::Torus(m))
        }
    };
    let original = dynsys::integrate(sys, x0, horizon, dt, tol)?;
    let stationary = dynsys::integrate(sys, &matched_state, horizon, dt, tol)?;
    let residual = original.difference(&stationary)?;
    Ok(Decomposition { original, stationary, residual, matched_state, matching })
}

/// Strobe and window settings for [`decay_rate`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DecayOptions {
    /// Strobe times are `offset + kT`.
    pub offset: f64,
    /// Fraction of the horizon discarded before fitting.
    pub discard_fraction: f64,
    /// Strobe samples with `|r| <` floor are dropped.
    pub floor: f64,
    /// Refuse to fit when the residual component never exceeds this.
    pub min_peak: f64,
}

impl Default for DecayOptions {
    fn default() -> Self {
        Self { offset: 0.0, discard_fraction: 0.3, floor: 1e-10, min_peak: 1e-6 }
    }
}

/// One period-strobed residual sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StrobeSample {
    pub t: f64,
    pub abs: f64,
    pub used: bool,
}

/// Least-squares fit of `ln|r(kT)| ≈ ν̂ t + b`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecayFit {
    pub nu_hat: f64,
    pub intercept: f64,
    pub r2: f64,
    pub strobes: Vec<StrobeSample>,
    pub window_start: f64,
    pub window_end: f64,
    pub options: DecayOptions,
}

/// Cubic Lagrange interpolation of one trajectory component at time `t`.
pub fn interpolate_component(traj: &Trajectory, component: usize, t: f64) -> f64 {
    let u = (t - traj.t0()) / traj.dt();
    let len = traj.len();
    let nearest = u.round();
    if (u - nearest).abs() < 1e-9 && nearest >= 0.0 && (nearest as usize) < len {
        return traj.state(nearest as usize)[component];
    }
    if len < 4 {
        let k = (u.floor().max(0.0) as usize).min(len - 1);
        return traj.state(k)[component];
    }
    let base = (u.floor() as isize - 1).clamp(0, len as isize - 4) as usize;
    let mut value = 0.0;
    for i in 0..4 {
        let xi = (base + i) as f64;
        let mut w = 1.0;
        for j in 0..4 {
            if j != i {
                let xj = (base + j) as f64;
                w *= (u - xj) / (xi - xj);
            }
        }
        value += w * traj.state(base + i)[component];
    }
    value
}

/// Decay rate of the residual from its period-strobed magnitudes.
pub fn decay_rate(dec: &Decomposition, component: usize, period: f64, opts: &DecayOptions) -> Result<DecayFit> {
    let res = &dec.residual;
    if component >= res.dim() {
        return Err(Error::InvalidInput(format!("component {component} out of range")));
    }
    if !(period > 0.0) {
        return Err(Error::InvalidInput(format!("strobe period must be positive, got {period}")));
    }
    let peak = res.states().map(|x| x[component].abs()).fold(0.0, f64::max);
    if peak < opts.min_peak {
        return Err(Error::DegenerateFit(format!(
            "residual at numeric floor (peak {peak:e} < {:e})",
            opts.min_peak
        )));
    }
    let t_end = res.time(res.len() - 1);
    let window_start = opts.discard_fraction * (t_end - res.t0()) + res.t0();
    let mut strobes = Vec::new();
    let mut k = 0usize;
    loop {
        let t = opts.offset + k as f64 * period;
        if t > t_end + 1e-9 {
            break;
        }
        if t >= res.t0() - 1e-9 {
            let abs = interpolate_component(res, component, t).abs();
            let used = t >= window_start - 1e-9 && abs >= opts.floor;
            strobes.push(StrobeSample { t, abs, used });
        }
        k += 1;
    }
    let pts: Vec<(f64, f64)> = strobes.iter().filter(|s| s.used).map(|s| (s.t, s.abs.ln())).collect();
    if pts.len() < 4 {
        return Err(Error::DegenerateFit(format!("only {} usable strobe samples (need 4)", pts.len())));
    }
    let n = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let stt: f64 = pts.iter().map(|p| (p.0 - mt).powi(2)).sum();
    let sty: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - my)).sum();
    let slope = sty / stt;
    let intercept = my - slope * mt;
    let ss_res: f64 = pts.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum();
    let ss_tot: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    let r2 = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 0.0 };
    let window_end = pts.last().map(|p| p.0).unwrap_or(window_start);
    Ok(DecayFit {
        nu_hat: slope,
        intercept,
        r2,
        strobes,
        window_start,
        window_end,
        options: *opts,
    })
}
