//! Dormand–Prince 5(4) integrator with continuous (dense) output.
//!
//! The stepper is deliberately low level: it drives an autonomous right-hand
//! side `f(x, dx)` and hands every accepted step to a callback as a
//! [`DenseStep`], which can be evaluated anywhere inside the step. Uniform
//! resampling, event location and variational integration are all built on
//! top of that callback.

use crate::error::{Error, Result};

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

// Continuous extension (Hairer, Nørsett & Wanner, contd5).
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

/// Tolerances and step-size limits for [`Dopri5`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub rtol: f64,
    pub atol: f64,
    /// Initial step; chosen automatically when `None`.
    pub h_init: Option<f64>,
    /// Largest step allowed.
    pub h_max: f64,
    pub max_steps: usize,
}

impl SolverOptions {
    /// Same relative and absolute tolerance.
    pub fn with_tol(tol: f64) -> Self {
        Self {
            rtol: tol,
            atol: tol,
            ..Self::default()
        }
    }
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            rtol: 1e-9,
            atol: 1e-9,
            h_init: None,
            h_max: f64::INFINITY,
            max_steps: 50_000_000,
        }
    }
}

/// One accepted step together with its interpolation coefficients.
pub struct DenseStep<'a> {
    pub t_old: f64,
    pub t_new: f64,
    pub y_old: &'a [f64],
    pub y_new: &'a [f64],
    rcont: &'a [Vec<f64>; 5],
}

impl DenseStep<'_> {
    pub fn h(&self) -> f64 {
        self.t_new - self.t_old
    }

    /// Evaluates the continuous extension at `t` (expected inside the step).
    pub fn eval(&self, t: f64, out: &mut [f64]) {
        let h = self.h();
        if h == 0.0 {
            out.copy_from_slice(self.y_new);
            return;
        }
        let theta = (t - self.t_old) / h;
        let theta1 = 1.0 - theta;
        let [r1, r2, r3, r4, r5] = self.rcont;
        for i in 0..out.len() {
            out[i] = r1[i] + theta * (r2[i] + theta1 * (r3[i] + theta * (r4[i] + theta1 * r5[i])));
        }
    }
}

/// What the step callback wants the integrator to do next.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Control {
    Continue,
    Stop,
}

/// Outcome of an integration run.
#[derive(Debug, Clone)]
pub struct Integration {
    pub t: f64,
    pub y: Vec<f64>,
    pub accepted: usize,
    pub rejected: usize,
    /// True when the callback requested an early stop.
    pub stopped: bool,
}

/// Explicit embedded Runge–Kutta pair of order 5(4).
pub struct Dopri5<F> {
    rhs: F,
    dim: usize,
    opts: SolverOptions,
}

impl<F> Dopri5<F>
where
    F: FnMut(&[f64], &mut [f64]),
{
    pub fn new(dim: usize, rhs: F, opts: SolverOptions) -> Self {
        Self { rhs, dim, opts }
    }

    fn initial_step(&mut self, y0: &[f64], f0: &[f64], span: f64) -> f64 {
        // Hairer's starting-step heuristic for a 5th order method.
        let n = self.dim as f64;
        let mut d0 = 0.0;
        let mut d1 = 0.0;
        for i in 0..self.dim {
            let sc = self.opts.atol + self.opts.rtol * y0[i].abs();
            d0 += (y0[i] / sc).powi(2);
            d1 += (f0[i] / sc).powi(2);
        }
        d0 = (d0 / n).sqrt();
        d1 = (d1 / n).sqrt();
        let h0 = if d0 < 1e-10 || d1 < 1e-10 { 1e-6 } else { 0.01 * d0 / d1 };
        let h0 = h0.min(span);
        let y1: Vec<f64> = (0..self.dim).map(|i| y0[i] + h0 * f0[i]).collect();
        let mut f1 = vec![0.0; self.dim];
        (self.rhs)(&y1, &mut f1);
        let mut d2 = 0.0;
        for i in 0..self.dim {
            let sc = self.opts.atol + self.opts.rtol * y0[i].abs();
            d2 += ((f1[i] - f0[i]) / sc).powi(2);
        }
        d2 = (d2 / n).sqrt() / h0;
        let h1 = if d1.max(d2) <= 1e-15 {
            (h0 * 1e-3).max(1e-6)
        } else {
            (0.01 / d1.max(d2)).powf(0.2)
        };
        (100.0 * h0).min(h1).min(span).min(self.opts.h_max)
    }

    /// Integrates from `t0` to `t_end` (which must be `>= t0`), calling
    /// `on_step` after every accepted step. The final step lands exactly on
    /// `t_end`.
    pub fn integrate<C>(&mut self, t0: f64, y0: &[f64], t_end: f64, mut on_step: C) -> Result<Integration>
    where
        C: FnMut(&DenseStep<'_>) -> Control,
    {
        let n = self.dim;
        if y0.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: y0.len() });
        }
        if !(t_end >= t0) {
            return Err(Error::InvalidInput(format!("t_end {t_end} precedes t0 {t0}")));
        }
        if y0.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { last_valid_t: t0 });
        }
        let mut y = y0.to_vec();
        let mut t = t0;
        if t_end == t0 {
            return Ok(Integration { t, y, accepted: 0, rejected: 0, stopped: false });
        }

        let mut k1 = vec![0.0; n];
        let mut k2 = vec![0.0; n];
        let mut k3 = vec![0.0; n];
        let mut k4 = vec![0.0; n];
        let mut k5 = vec![0.0; n];
        let mut k6 = vec![0.0; n];
        let mut k7 = vec![0.0; n];
        let mut ytmp = vec![0.0; n];
        let mut ynew = vec![0.0; n];
        let mut rcont: [Vec<f64>; 5] = std::array::from_fn(|_| vec![0.0; n]);

        (self.rhs)(&y, &mut k1);
        let span = t_end - t0;
        let mut h = match self.opts.h_init {
            Some(h) => h.min(span),
            None => self.initial_step(&y, &k1, span),
        };
        let mut accepted = 0usize;
        let mut rejected = 0usize;
        let mut fac_old: f64 = 1e-4;
        let mut last_rejected = false;

        loop {
            if accepted + rejected >= self.opts.max_steps {
                return Err(Error::StepSizeUnderflow { t });
            }
            let mut last = false;
            if t + h >= t_end || (t_end - (t + h)) < 1e-12 * h {
                h = t_end - t;
                last = true;
            }
            if h.abs() <= 16.0 * f64::EPSILON * t.abs().max(1.0) {
                return Err(Error::StepSizeUnderflow { t });
            }

            for i in 0..n {
                ytmp[i] = y[i] + h * A21 * k1[i];
            }
            (self.rhs)(&ytmp, &mut k2);
            for i in 0..n {
                ytmp[i] = y[i] + h * (A31 * k1[i] + A32 * k2[i]);
            }
            (self.rhs)(&ytmp, &mut k3);
            for i in 0..n {
                ytmp[i] = y[i] + h * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]);
            }
            (self.rhs)(&ytmp, &mut k4);
            for i in 0..n {
                ytmp[i] = y[i] + h * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]);
            }
            (self.rhs)(&ytmp, &mut k5);
            for i in 0..n {
                ytmp[i] = y[i]
                    + h * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]);
            }
            (self.rhs)(&ytmp, &mut k6);
            for i in 0..n {
                ynew[i] = y[i]
                    + h * (A71 * k1[i] + A73 * k3[i] + A74 * k4[i] + A75 * k5[i] + A76 * k6[i]);
            }
            (self.rhs)(&ynew, &mut k7);

            let mut err = 0.0;
            for i in 0..n {
                let e = h
                    * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
                let sc = self.opts.atol + self.opts.rtol * y[i].abs().max(ynew[i].abs());
                err += (e / sc).powi(2);
            }
            err = (err / n as f64).sqrt();

            if !err.is_finite() || ynew.iter().any(|v| !v.is_finite()) {
                // Shrink hard; a persistent blow-up ends as an underflow or as
                // a non-finite report below.
                if ynew.iter().any(|v| !v.is_finite()) && h < 1e-10 {
                    return Err(Error::NonFinite { last_valid_t: t });
                }
                h *= 0.1;
                rejected += 1;
                last_rejected = true;
                continue;
            }

            // PI step-size controller.
            let expo1 = 0.2 - 0.04 * 0.75;
            let fac11 = err.powf(expo1);
            let mut fac = fac11 / fac_old.powf(0.04);
            fac = (fac / 0.9).clamp(1.0 / 10.0, 1.0 / 0.2);
            let mut h_new = h / fac;

            if err <= 1.0 {
                fac_old = err.max(1e-4);
                accepted += 1;

                for i in 0..n {
                    let ydiff = ynew[i] - y[i];
                    let bspl = h * k1[i] - ydiff;
                    rcont[0][i] = y[i];
                    rcont[1][i] = ydiff;
                    rcont[2][i] = bspl;
                    rcont[3][i] = ydiff - h * k7[i] - bspl;
                    rcont[4][i] = h
                        * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i]
                            + D7 * k7[i]);
                }
                let t_new = if last { t_end } else { t + h };
                let ctl = on_step(&DenseStep {
                    t_old: t,
                    t_new,
                    y_old: &y,
                    y_new: &ynew,
                    rcont: &rcont,
                });
                std::mem::swap(&mut y, &mut ynew);
                std::mem::swap(&mut k1, &mut k7);
                t = t_new;
                if ctl == Control::Stop {
                    return Ok(Integration { t, y, accepted, rejected, stopped: true });
                }
                if last {
                    return Ok(Integration { t, y, accepted, rejected, stopped: false });
                }
                if last_rejected {
                    h_new = h_new.min(h);
                }
                last_rejected = false;
                h = h_new.min(self.opts.h_max);
            } else {
                h_new = h / (fac11 / 0.9).min(1.0 / 0.2);
                rejected += 1;
                last_rejected = true;
                h = h_new;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_decay_matches_closed_form() {
        let mut s = Dopri5::new(1, |y: &[f64], dy: &mut [f64]| dy[0] = -y[0], SolverOptions::with_tol(1e-12));
        let out = s.integrate(0.0, &[1.0], 3.0, |_| Control::Continue).unwrap();
        assert_eq!(out.t, 3.0);
        assert!((out.y[0] - (-3.0f64).exp()).abs() < 1e-11);
    }

    #[test]
    fn dense_output_is_accurate_inside_steps() {
        let mut s = Dopri5::new(
            2,
            |y: &[f64], dy: &mut [f64]| {
                dy[0] = y[1];
                dy[1] = -y[0];
            },
            SolverOptions::with_tol(1e-10),
        );
        let mut worst: f64 = 0.0;
        let mut buf = [0.0; 2];
        s.integrate(0.0, &[1.0, 0.0], 10.0, |st| {
            for j in 1..8 {
                let t = st.t_old + st.h() * j as f64 / 8.0;
                st.eval(t, &mut buf);
                worst = worst.max((buf[0] - t.cos()).abs()).max((buf[1] + t.sin()).abs());
            }
            Control::Continue
        })
        .unwrap();
        assert!(worst < 1e-8, "dense output error {worst}");
    }

    #[test]
    fn callback_can_stop_early() {
        let mut s = Dopri5::new(1, |_: &[f64], dy: &mut [f64]| dy[0] = 1.0, SolverOptions::default());
        let out = s
            .integrate(0.0, &[0.0], 100.0, |st| if st.t_new > 1.0 { Control::Stop } else { Control::Continue })
            .unwrap();
        assert!(out.stopped);
        assert!(out.t < 100.0);
    }

    #[test]
    fn blow_up_is_reported() {
        // x' = x^2 from x0 = 1 blows up at t = 1.
        let mut s = Dopri5::new(1, |y: &[f64], dy: &mut [f64]| dy[0] = y[0] * y[0], SolverOptions::default());
        let err = s.integrate(0.0, &[1.0], 2.0, |_| Control::Continue).unwrap_err();
        match err {
            Error::NonFinite { last_valid_t } | Error::StepSizeUnderflow { t: last_valid_t } => {
                assert!(last_valid_t < 1.0 && last_valid_t > 0.9)
            }
            other => panic!("unexpected {other:?}"),
        }
    }
}
