use num_complex::Complex64;

use super::Observable;
use crate::error::{Error, Result};

/// Uniformly sampled states of a flow, `x(t0 + k dt)` for `k = 0..len`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    t0: f64,
    dt: f64,
    n: usize,
    // Row-major: sample k occupies states[k*n .. (k+1)*n].
    states: Vec<f64>,
}

impl Trajectory {
    pub fn new(t0: f64, dt: f64, n: usize, states: Vec<f64>) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::InvalidInput(format!("trajectory step must be positive, got {dt}")));
        }
        if n == 0 || states.is_empty() || !states.len().is_multiple_of(n) {
            return Err(Error::InvalidInput(format!(
                "trajectory needs a non-empty sequence of {n}-dimensional states"
            )));
        }
        Ok(Self { t0, dt, n, states })
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.states.len() / self.n
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn time(&self, k: usize) -> f64 {
        self.t0 + k as f64 * self.dt
    }

    pub fn state(&self, k: usize) -> &[f64] {
        &self.states[k * self.n..(k + 1) * self.n]
    }

    pub fn last(&self) -> &[f64] {
        self.state(self.len() - 1)
    }

    pub fn states(&self) -> impl Iterator<Item = &[f64]> {
        self.states.chunks_exact(self.n)
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.states
    }

    /// One coordinate over time.
    pub fn component(&self, i: usize) -> Vec<f64> {
        self.states().map(|x| x[i]).collect()
    }

    /// Evaluates an observable along the trajectory.
    pub fn observe(&self, obs: &Observable) -> Result<Signal> {
        if obs.input_dim() != self.n {
            return Err(Error::DimensionMismatch { expected: self.n, got: obs.input_dim() });
        }
        let m = obs.dim();
        let mut data = vec![Complex64::new(0.0, 0.0); m * self.len()];
        for (x, out) in self.states().zip(data.chunks_exact_mut(m)) {
            obs.eval_into(x, out);
        }
        Signal::new(self.t0, self.dt, m, data)
    }

    /// Sample-wise difference `self - other` on an identical grid.
    pub fn difference(&self, other: &Trajectory) -> Result<Trajectory> {
        if self.n != other.n || self.len() != other.len() || self.dt != other.dt || self.t0 != other.t0 {
            return Err(Error::InvalidInput("trajectories are not on the same grid".into()));
        }
        let states = self.states.iter().zip(&other.states).map(|(a, b)| a - b).collect();
        Ok(Trajectory { t0: self.t0, dt: self.dt, n: self.n, states })
    }

    /// Largest Euclidean norm of a sample within `[t_from, t_to]`.
    pub fn sup_norm(&self, t_from: f64, t_to: f64) -> f64 {
        (0..self.len())
            .filter(|&k| {
                let t = self.time(k);
                t >= t_from - 1e-12 && t <= t_to + 1e-12
            })
            .map(|k| self.state(k).iter().map(|v| v * v).sum::<f64>().sqrt())
            .fold(0.0, f64::max)
    }
}

/// Uniformly sampled complex vector-valued output `y(t0 + k dt) ∈ ℂᵐ`.
#[derive(Debug, Clone, PartialEq)]
pub struct Signal {
    t0: f64,
    dt: f64,
    m: usize,
    data: Vec<Complex64>,
}

impl Signal {
    pub fn new(t0: f64, dt: f64, m: usize, data: Vec<Complex64>) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::InvalidInput(format!("signal step must be positive, got {dt}")));
        }
        if m == 0 || data.is_empty() || !data.len().is_multiple_of(m) {
            return Err(Error::InvalidInput("signal needs a non-empty sample sequence".into()));
        }
        Ok(Self { t0, dt, m, data })
    }

    /// Scalar signal from samples.
    pub fn scalar(dt: f64, samples: Vec<Complex64>) -> Result<Self> {
        Self::new(0.0, dt, 1, samples)
    }

    /// Scalar real signal from samples.
    pub fn real(dt: f64, samples: &[f64]) -> Result<Self> {
        Self::new(0.0, dt, 1, samples.iter().map(|&v| Complex64::new(v, 0.0)).collect())
    }

    /// Samples `f(t)` at `t = k dt` for `k = 0..len`.
    pub fn from_fn(dt: f64, len: usize, f: impl Fn(f64) -> Complex64) -> Result<Self> {
        Self::scalar(dt, (0..len).map(|k| f(k as f64 * dt)).collect())
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn dim(&self) -> usize {
        self.m
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.m
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn sample(&self, k: usize) -> &[Complex64] {
        &self.data[k * self.m..(k + 1) * self.m]
    }

    pub fn samples(&self) -> impl Iterator<Item = &[Complex64]> {
        self.data.chunks_exact(self.m)
    }

    pub fn component(&self, j: usize) -> Vec<Complex64> {
        self.samples().map(|y| y[j]).collect()
    }

    /// Span covered by the samples, `(len - 1) dt`.
    pub fn duration(&self) -> f64 {
        (self.len() - 1) as f64 * self.dt
    }

    /// Drops samples after `t0 + t_max`.
    pub fn truncated(&self, t_max: f64) -> Signal {
        let keep = ((t_max / self.dt) + 1e-9).floor() as usize + 1;
        let keep = keep.min(self.len());
        Signal { t0: self.t0, dt: self.dt, m: self.m, data: self.data[..keep * self.m].to_vec() }
    }

    /// Samples from index `start` onward, re-timed to start at `t0 + start dt`.
    pub fn skip(&self, start: usize) -> Result<Signal> {
        if start >= self.len() {
            return Err(Error::InvalidInput("skip past end of signal".into()));
        }
        Ok(Signal {
            t0: self.t0 + start as f64 * self.dt,
            dt: self.dt,
            m: self.m,
            data: self.data[start * self.m..].to_vec(),
        })
    }

    /// `a * self + b * other`, sample by sample.
    pub fn combine(&self, a: Complex64, other: &Signal, b: Complex64) -> Result<Signal> {
        if self.m != other.m || self.len() != other.len() || self.dt != other.dt {
            return Err(Error::InvalidInput("signals are not on the same grid".into()));
        }
        let data = self.data.iter().zip(&other.data).map(|(x, y)| a * x + b * y).collect();
        Ok(Signal { t0: self.t0, dt: self.dt, m: self.m, data })
    }

    pub fn max_norm(&self) -> f64 {
        self.samples()
            .map(|y| y.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt())
            .fold(0.0, f64::max)
    }
}
