//! Stable limit cycles: period, Floquet multipliers and characteristic exponents.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::Serialize;

use crate::dynsys::{self, Control, DynSystem};
use crate::error::{Error, Result};

/// Distance from 1 within which the monodromy eigenvalue along the flow is accepted.
pub const TRIVIAL_MULTIPLIER_TOL: f64 = 1e-3;

/// Default number of phase samples stored on a cycle.
pub const DEFAULT_CYCLE_SAMPLES: usize = 512;

/// Default settling time before a point is treated as on-attractor.
pub const DEFAULT_SETTLE_TIME: f64 = 200.0;

/// Period estimate from section crossings, with the FFT cross-check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PeriodEstimate {
    pub period: f64,
    pub omega: f64,
    /// Peak angular frequency of the FFT of an on-cycle signal.
    pub fft_omega: f64,
    /// FFT bin width in rad/s.
    pub fft_bin: f64,
    /// `‖S^T(x) − x‖` at the refined return.
    pub return_displacement: f64,
}

/// A state on the cycle together with its phase `θ ∈ [0, 2π)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CyclePoint {
    pub phase: f64,
    pub state: Vec<f64>,
}

/// A located stable limit cycle and its Floquet data.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LimitCycleInfo {
    pub period: f64,
    pub omega: f64,
    /// Phase origin `θ = 0`.
    pub anchor: Vec<f64>,
    pub cycle_samples: Vec<CyclePoint>,
    /// Non-trivial multipliers, sorted by decreasing modulus.
    pub multipliers: Vec<Complex64>,
    /// `νⱼ = ln μⱼ / T` (principal branch), same order as `multipliers`.
    pub exponents: Vec<Complex64>,
    pub trivial_multiplier: Complex64,
    pub monodromy: DMatrix<f64>,
}

impl LimitCycleInfo {
    /// Runs the whole pipeline: settle from `x0`, measure the period, compute
    /// the monodromy and sample the cycle.
    pub fn locate(sys: &DynSystem, x0: &[f64], t_settle: f64, tol: f64) -> Result<Self> {
        let x = settle(sys, x0, t_settle, tol)?;
        let est = find_period(sys, &x, None, tol)?;
        floquet(sys, &x, est.period, tol)
    }

    /// Dominant (slowest) characteristic exponent.
    pub fn dominant_exponent(&self) -> Option<Complex64> {
        self.exponents.first().copied()
    }

    /// On-cycle state with phase `theta`, by flowing the anchor for `θ/Ω`.
    pub fn state_at_phase(&self, sys: &DynSystem, theta: f64, tol: f64) -> Result<Vec<f64>> {
        let theta = theta.rem_euclid(2.0 * PI);
        dynsys::flow(sys, &self.anchor, theta / self.omega, tol)
    }
}

/// `S^{t_settle}(x0)`.
pub fn settle(sys: &DynSystem, x0: &[f64], t_settle: f64, tol: f64) -> Result<Vec<f64>> {
    if !(t_settle >= 0.0) {
        return Err(Error::InvalidInput(format!("settle time must be non-negative, got {t_settle}")));
    }
    dynsys::flow(sys, x0, t_settle, tol)
}

/// Peak angular frequency (excluding DC) of `samples` taken every `dt`,
/// refined by parabolic interpolation of the log-magnitude. Returns
/// `(omega, bin_width)`.
pub fn fft_peak(samples: &[f64], dt: f64) -> Result<(f64, f64)> {
    let len = samples.len();
    if len < 8 {
        return Err(Error::InvalidInput("FFT needs at least 8 samples".into()));
    }
    let mean = samples.iter().sum::<f64>() / len as f64;
    let mut buf: Vec<Complex64> = samples.iter().map(|&v| Complex64::new(v - mean, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(len).process(&mut buf);
    let half = len / 2;
    let (k, _) = buf[1..half]
        .iter()
        .enumerate()
        .map(|(i, z)| (i + 1, z.norm()))
        .fold((0, 0.0), |best, cur| if cur.1 > best.1 { cur } else { best });
    if k == 0 {
        return Err(Error::NoLimitCycle("signal has no oscillatory content".into()));
    }
    let bin = 2.0 * PI / (len as f64 * dt);
    let mut offset = 0.0;
    if k + 1 < half {
        let (a, b, g) = (buf[k - 1].norm().ln(), buf[k].norm().ln(), buf[k + 1].norm().ln());
        let denom = a - 2.0 * b + g;
        if denom.abs() > 0.0 && denom.is_finite() {
            offset = (0.5 * (a - g) / denom).clamp(-0.5, 0.5);
        }
    }
    Ok(((k as f64 + offset) * bin, bin))
}

/// Period of the cycle through `x`, from successive same-direction crossings
/// of the hyperplane through `x` normal to `F(x)`.
///
/// The crossing time is refined on the dense output by bisection. An FFT of
/// a long on-cycle signal supplies the integration horizon (unless `hint_t`
/// is given) and an independent frequency estimate.
pub fn find_period(sys: &DynSystem, x: &[f64], hint_t: Option<f64>, tol: f64) -> Result<PeriodEstimate> {
    let n = sys.dim();
    let normal = sys.field(x)?;
    let fnorm = normal.iter().map(|v| v * v).sum::<f64>().sqrt();
    if !(fnorm > 1e-12) {
        return Err(Error::NoLimitCycle("vector field vanishes at the anchor (equilibrium)".into()));
    }

    // Coarse FFT estimate.
    let (fft_dt, fft_span) = match hint_t {
        Some(t) if t > 0.0 => (t / 64.0, 128.0 * t),
        _ => (0.05, 409.6),
    };
    let fft_traj = dynsys::integrate(sys, x, fft_span, fft_dt, tol)?;
    // Use the coordinate with the largest spread.
    let comp = (0..n)
        .max_by(|&a, &b| {
            let spread = |i: usize| {
                let c = fft_traj.component(i);
                c.iter().cloned().fold(f64::MIN, f64::max) - c.iter().cloned().fold(f64::MAX, f64::min)
            };
            spread(a).partial_cmp(&spread(b)).unwrap()
        })
        .unwrap();
    let samples = fft_traj.component(comp);
    let mut spread = 0.0f64;
    for &v in &samples {
        spread = spread.max((v - x[comp]).abs());
    }
    if spread < 1e-9 {
        return Err(Error::NoLimitCycle("no motion along the orbit".into()));
    }
    let (fft_omega, fft_bin) = fft_peak(&samples, fft_dt)?;
    let coarse_t = hint_t.unwrap_or(2.0 * PI / fft_omega);

    let g = |y: &[f64]| -> f64 { normal.iter().zip(y).zip(x).map(|((a, b), c)| a * (b - c)).sum() };
    let mut diameter = 0.0f64;
    let mut found: Option<(f64, f64)> = None;
    let mut buf = vec![0.0; n];
    dynsys::integrate_dense(sys, x, 3.0 * coarse_t, tol, |st| {
        let dist = st.y_new.iter().zip(x).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        diameter = diameter.max(dist);
        let (g0, g1) = (g(st.y_old), g(st.y_new));
        if g0 < 0.0 && g1 >= 0.0 && dist < 0.25 * diameter.max(1e-300) && st.t_new > 0.25 * coarse_t {
            let (mut lo, mut hi) = (st.t_old, st.t_new);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if mid <= lo || mid >= hi {
                    break;
                }
                st.eval(mid, &mut buf);
                if g(&buf) < 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let t = 0.5 * (lo + hi);
            st.eval(t, &mut buf);
            found = Some((t, buf.iter().zip(x).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt()));
            return Control::Stop;
        }
        Control::Continue
    })?;
    let (period, disp) = found.ok_or_else(|| {
        Error::NoLimitCycle("no return to the Poincaré section within the search horizon".into())
    })?;
    if disp > 1e-3 * diameter.max(1e-12) {
        return Err(Error::NoLimitCycle(format!(
            "orbit does not close: return displacement {disp:e} (orbit size {diameter:e})"
        )));
    }
    Ok(PeriodEstimate {
        period,
        omega: 2.0 * PI / period,
        fft_omega,
        fft_bin,
        return_displacement: disp,
    })
}

/// Floquet analysis of the cycle through `x` with period `period`.
///
/// The monodromy eigenvalue nearest to 1 is discarded as the trivial
/// multiplier along the flow; the rest must lie strictly inside the unit
/// circle and are sorted by decreasing modulus.
pub fn floquet(sys: &DynSystem, x: &[f64], period: f64, tol: f64) -> Result<LimitCycleInfo> {
    if !(period > 0.0) || !period.is_finite() {
        return Err(Error::InvalidInput(format!("period must be positive, got {period}")));
    }
    let (_, monodromy) = dynsys::integrate_variational(sys, x, period, tol)?;
    let eigs = crate::linalg::eigvals_real(&monodromy)?;
    let (trivial_idx, trivial) = eigs
        .iter()
        .enumerate()
        .min_by(|a, b| (a.1 - 1.0).norm().partial_cmp(&(b.1 - 1.0).norm()).unwrap())
        .map(|(i, z)| (i, *z))
        .ok_or_else(|| Error::NoLimitCycle("empty monodromy".into()))?;
    if (trivial - 1.0).norm() > TRIVIAL_MULTIPLIER_TOL {
        return Err(Error::NoLimitCycle(format!(
            "no monodromy eigenvalue within {TRIVIAL_MULTIPLIER_TOL:e} of 1 (closest {trivial})"
        )));
    }
    let mut multipliers: Vec<Complex64> =
        eigs.iter().enumerate().filter(|(i, _)| *i != trivial_idx).map(|(_, z)| *z).collect();
    multipliers.sort_by(|a, b| {
        b.norm()
            .partial_cmp(&a.norm())
            .unwrap()
            .then(b.im.partial_cmp(&a.im).unwrap())
    });
    if let Some(bad) = multipliers.iter().find(|m| m.norm() >= 1.0 - 1e-9) {
        return Err(Error::NoLimitCycle(format!(
            "cycle is not isolated and stable: multiplier {bad} has modulus {}",
            bad.norm()
        )));
    }
    let exponents = multipliers.iter().map(|m| m.ln() / period).collect();
    let cycle_samples = parameterize_cycle(sys, x, period, DEFAULT_CYCLE_SAMPLES, tol)?;
    Ok(LimitCycleInfo {
        period,
        omega: 2.0 * PI / period,
        anchor: x.to_vec(),
        cycle_samples,
        multipliers,
        exponents,
        trivial_multiplier: trivial,
        monodromy,
    })
}

/// `k` states at phases `2πj/k`, with `θ = 0` at `x`.
pub fn parameterize_cycle(sys: &DynSystem, x: &[f64], period: f64, k: usize, tol: f64) -> Result<Vec<CyclePoint>> {
    if k == 0 {
        return Err(Error::InvalidInput("need at least one cycle sample".into()));
    }
    let dt = period / k as f64;
    let traj = dynsys::integrate(sys, x, period, dt, tol)?;
    Ok((0..k)
        .map(|j| CyclePoint {
            phase: 2.0 * PI * j as f64 / k as f64,
            state: if j == 0 { x.to_vec() } else { traj.state(j).to_vec() },
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynsys::{builtin_linear, builtin_vdp};

    #[test]
    fn settle_zero_is_identity() {
        let sys = builtin_vdp(0.3);
        assert_eq!(settle(&sys, &[3.0, 0.0], 0.0, 1e-9).unwrap(), vec![3.0, 0.0]);
    }

    #[test]
    fn settle_linear_contracts_to_origin() {
        let a = DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, 0.0, -2.0]);
        let x = settle(&builtin_linear(&a).unwrap(), &[1.0, 1.0], 20.0, 1e-10).unwrap();
        assert!(x.iter().map(|v| v * v).sum::<f64>().sqrt() < 1e-6);
    }

    #[test]
    fn harmonic_period_is_two_pi() {
        let est = find_period(&builtin_vdp(0.0), &[1.0, 0.0], None, 1e-12).unwrap();
        assert!((est.period - 2.0 * PI).abs() < 1e-8, "{}", est.period);
        assert!((est.fft_omega - est.omega).abs() <= est.fft_bin);
    }

    #[test]
    fn harmonic_oscillator_has_no_isolated_cycle() {
        let sys = builtin_vdp(0.0);
        let err = floquet(&sys, &[1.0, 0.0], 2.0 * PI, 1e-10).unwrap_err();
        assert!(matches!(err, Error::NoLimitCycle(_)), "{err:?}");
    }

    #[test]
    fn linear_stable_system_has_no_cycle() {
        let a = DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, 0.0, -2.0]);
        let err = find_period(&builtin_linear(&a).unwrap(), &[1.0, 1.0], None, 1e-9).unwrap_err();
        assert!(matches!(err, Error::NoLimitCycle(_)), "{err:?}");
    }

    #[test]
    fn focus_does_not_close() {
        let a = DMatrix::from_row_slice(2, 2, &[-0.1, 1.0, -1.0, -0.1]);
        let err = find_period(&builtin_linear(&a).unwrap(), &[1.0, 0.0], None, 1e-9).unwrap_err();
        assert!(matches!(err, Error::NoLimitCycle(_)), "{err:?}");
    }

    #[test]
    fn quarter_samples_of_rotation() {
        let pts = parameterize_cycle(&builtin_vdp(0.0), &[1.0, 0.0], 2.0 * PI, 4, 1e-12).unwrap();
        let expected = [[1.0, 0.0], [0.0, -1.0], [-1.0, 0.0], [0.0, 1.0]];
        for (p, e) in pts.iter().zip(expected) {
            assert!((p.state[0] - e[0]).abs() < 1e-9 && (p.state[1] - e[1]).abs() < 1e-9, "{p:?}");
        }
        assert_eq!(pts[0].state, vec![1.0, 0.0]);
        assert_eq!(pts[2].phase, PI);
    }
}
