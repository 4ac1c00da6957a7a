//! Autonomous vector fields, observables, and their numerical flows.

mod solver;
mod trajectory;

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;

pub use solver::{Control, DenseStep, Dopri5, Integration, SolverOptions};
pub use trajectory::{Signal, Trajectory};

use crate::error::{Error, Result};

/// Default integration tolerance (absolute and relative).
pub const DEFAULT_TOL: f64 = 1e-9;

type FieldFn = dyn Fn(&[f64], &mut [f64]) + Send + Sync;
type ObservableFn = dyn Fn(&[f64], &mut [Complex64]) + Send + Sync;

/// Where a system's Jacobian comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JacobianSource {
    Analytic,
    FiniteDifference,
    Absent,
}

/// An autonomous vector field `ẋ = F(x)` on ℝⁿ.
///
/// Jacobians are written row-major into an `n*n` buffer.
#[derive(Clone)]
pub struct DynSystem {
    name: String,
    n: usize,
    field: Arc<FieldFn>,
    jacobian: Option<Arc<FieldFn>>,
    jacobian_source: JacobianSource,
}

impl fmt::Debug for DynSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DynSystem")
            .field("name", &self.name)
            .field("n", &self.n)
            .field("jacobian", &self.jacobian_source)
            .finish()
    }
}

impl DynSystem {
    /// A system without a Jacobian.
    pub fn new(
        name: impl Into<String>,
        n: usize,
        field: impl Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
    ) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidInput("state dimension must be positive".into()));
        }
        Ok(Self {
            name: name.into(),
            n,
            field: Arc::new(field),
            jacobian: None,
            jacobian_source: JacobianSource::Absent,
        })
    }

    /// Attaches an analytic Jacobian.
    pub fn with_jacobian(mut self, jac: impl Fn(&[f64], &mut [f64]) + Send + Sync + 'static) -> Self {
        self.jacobian = Some(Arc::new(jac));
        self.jacobian_source = JacobianSource::Analytic;
        self
    }

    /// Attaches a central finite-difference Jacobian built from the field.
    pub fn with_finite_difference_jacobian(mut self) -> Self {
        let field = Arc::clone(&self.field);
        let n = self.n;
        self.jacobian = Some(Arc::new(move |x: &[f64], out: &mut [f64]| {
            let mut xp = x.to_vec();
            let mut fp = vec![0.0; n];
            let mut fm = vec![0.0; n];
            for j in 0..n {
                let h = f64::EPSILON.cbrt() * x[j].abs().max(1.0);
                xp[j] = x[j] + h;
                field(&xp, &mut fp);
                xp[j] = x[j] - h;
                field(&xp, &mut fm);
                xp[j] = x[j];
                for i in 0..n {
                    out[i * n + j] = (fp[i] - fm[i]) / (2.0 * h);
                }
            }
        }));
        self.jacobian_source = JacobianSource::FiniteDifference;
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn jacobian_source(&self) -> JacobianSource {
        self.jacobian_source
    }

    pub fn has_jacobian(&self) -> bool {
        self.jacobian.is_some()
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.n {
            return Err(Error::DimensionMismatch { expected: self.n, got: x.len() });
        }
        Ok(())
    }

    /// `F(x)`.
    pub fn field(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(x)?;
        let mut out = vec![0.0; self.n];
        (self.field)(x, &mut out);
        Ok(out)
    }

    /// Unchecked evaluation into a caller buffer.
    pub fn field_into(&self, x: &[f64], out: &mut [f64]) {
        (self.field)(x, out)
    }

    /// `DF(x)` as an `n×n` matrix.
    pub fn jacobian(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        self.check_dim(x)?;
        let jac = self.jacobian.as_ref().ok_or(Error::MissingJacobian)?;
        let mut buf = vec![0.0; self.n * self.n];
        jac(x, &mut buf);
        Ok(DMatrix::from_row_slice(self.n, self.n, &buf))
    }

    /// Unchecked row-major Jacobian into a caller buffer.
    pub fn jacobian_into(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        let jac = self.jacobian.as_ref().ok_or(Error::MissingJacobian)?;
        jac(x, out);
        Ok(())
    }
}

/// `ẋ = A x`.
pub fn builtin_linear(a: &DMatrix<f64>) -> Result<DynSystem> {
    if a.nrows() != a.ncols() || a.nrows() == 0 {
        return Err(Error::InvalidInput(format!(
            "linear system matrix must be square, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    let n = a.nrows();
    let rows: Vec<f64> = a.transpose().iter().copied().collect();
    let jac_rows = rows.clone();
    Ok(DynSystem::new("linear", n, move |x, out| {
        for i in 0..n {
            out[i] = rows[i * n..(i + 1) * n].iter().zip(x).map(|(a, b)| a * b).sum();
        }
    })?
    .with_jacobian(move |_, out| out.copy_from_slice(&jac_rows)))
}

/// Named stable linear systems used as transform oracles.
pub fn linear_presets() -> Vec<(&'static str, DMatrix<f64>)> {
    vec![
        ("diagonal", DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, 0.0, -3.0])),
        ("damped_oscillator", DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -4.0, -0.4])),
        ("cascade", DMatrix::from_row_slice(3, 3, &[-1.0, 1.0, 0.0, 0.0, -2.0, 1.0, 0.0, 0.0, -0.5])),
    ]
}

/// Looks up one of [`linear_presets`].
pub fn linear_preset(name: &str) -> Result<DMatrix<f64>> {
    linear_presets()
        .into_iter()
        .find(|(n, _)| *n == name)
        .map(|(_, a)| a)
        .ok_or_else(|| Error::InvalidInput(format!("unknown linear preset `{name}`")))
}

/// Classical van der Pol oscillator `ẋ₁ = x₂, ẋ₂ = ε(1 − x₁²)x₂ − x₁`.
pub fn builtin_vdp(eps: f64) -> DynSystem {
    DynSystem::new("vdp", 2, move |x, out| {
        out[0] = x[1];
        out[1] = eps * (1.0 - x[0] * x[0]) * x[1] - x[0];
    })
    .expect("n = 2")
    .with_jacobian(move |x, out| {
        out[0] = 0.0;
        out[1] = 1.0;
        out[2] = -2.0 * eps * x[0] * x[1] - 1.0;
        out[3] = eps * (1.0 - x[0] * x[0]);
    })
}

/// Two diffusively coupled van der Pol oscillators with state `(x₁, x₂, y₁, y₂)`.
pub fn builtin_coupled_vdp(eps: f64, kx: f64, ky: f64, kc: f64) -> DynSystem {
    DynSystem::new("coupled_vdp", 4, move |s, out| {
        let (x1, x2, y1, y2) = (s[0], s[1], s[2], s[3]);
        out[0] = x2;
        out[1] = eps * (1.0 - x1 * x1) * x2 - kx * x1 + kc * (y1 - x1);
        out[2] = y2;
        out[3] = eps * (1.0 - y1 * y1) * y2 - ky * y1 + kc * (x1 - y1);
    })
    .expect("n = 4")
    .with_jacobian(move |s, out| {
        let (x1, x2, y1, y2) = (s[0], s[1], s[2], s[3]);
        out.fill(0.0);
        out[1] = 1.0;
        out[4] = -2.0 * eps * x1 * x2 - kx - kc;
        out[5] = eps * (1.0 - x1 * x1);
        out[6] = kc;
        out[11] = 1.0;
        out[12] = kc;
        out[14] = -2.0 * eps * y1 * y2 - ky - kc;
        out[15] = eps * (1.0 - y1 * y1);
    })
}

/// Planar system with a stable node and a quadratic nonlinearity:
/// `ẋ₁ = λ₁ x₁, ẋ₂ = λ₂ x₂ + x₁²`.
///
/// Its Koopman eigenfunctions are `φ₁ = x₁` and `φ₂ = x₂ − x₁²/(2λ₁ − λ₂)`,
/// so `x₂(t)` is known in closed form (see [`quadratic_equilibrium_x2`]).
pub fn builtin_quadratic_equilibrium(lambda1: f64, lambda2: f64) -> Result<DynSystem> {
    if (2.0 * lambda1 - lambda2).abs() < 1e-12 {
        return Err(Error::InvalidInput("resonant eigenvalues: 2λ₁ = λ₂".into()));
    }
    Ok(DynSystem::new("quadratic_equilibrium", 2, move |x, out| {
        out[0] = lambda1 * x[0];
        out[1] = lambda2 * x[1] + x[0] * x[0];
    })?
    .with_jacobian(move |x, out| {
        out[0] = lambda1;
        out[1] = 0.0;
        out[2] = 2.0 * x[0];
        out[3] = lambda2;
    }))
}

/// Closed-form `x₂(t)` of [`builtin_quadratic_equilibrium`].
pub fn quadratic_equilibrium_x2(lambda1: f64, lambda2: f64, x0: [f64; 2], t: f64) -> f64 {
    let c = x0[0] * x0[0] / (2.0 * lambda1 - lambda2);
    (x0[1] - c) * (lambda2 * t).exp() + c * (2.0 * lambda1 * t).exp()
}

/// `coeff · Π xᵢ^powers[i]`.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Monomial {
    pub coeff: f64,
    pub powers: Vec<u32>,
}

impl Monomial {
    fn eval(&self, x: &[f64]) -> f64 {
        self.powers
            .iter()
            .zip(x)
            .fold(self.coeff, |acc, (&p, &v)| acc * v.powi(p as i32))
    }

    fn partial(&self, x: &[f64], j: usize) -> f64 {
        let pj = self.powers[j];
        if pj == 0 {
            return 0.0;
        }
        self.powers.iter().zip(x).enumerate().fold(self.coeff * pj as f64, |acc, (i, (&p, &v))| {
            if i == j {
                acc * v.powi(p as i32 - 1)
            } else {
                acc * v.powi(p as i32)
            }
        })
    }
}

/// A user-defined polynomial vector field; `components[i]` lists the monomials of `Fᵢ`.
pub fn polynomial_system(name: &str, components: Vec<Vec<Monomial>>) -> Result<DynSystem> {
    let n = components.len();
    if n == 0 {
        return Err(Error::InvalidInput("polynomial system needs at least one component".into()));
    }
    for (i, terms) in components.iter().enumerate() {
        for term in terms {
            if term.powers.len() != n {
                return Err(Error::InvalidInput(format!(
                    "component {i}: monomial has {} powers, expected {n}",
                    term.powers.len()
                )));
            }
            if !term.coeff.is_finite() {
                return Err(Error::InvalidInput(format!("component {i}: non-finite coefficient")));
            }
        }
    }
    let comps = Arc::new(components);
    let jac_comps = Arc::clone(&comps);
    Ok(DynSystem::new(name, n, move |x, out| {
        for (o, terms) in out.iter_mut().zip(comps.iter()) {
            *o = terms.iter().map(|m| m.eval(x)).sum();
        }
    })?
    .with_jacobian(move |x, out| {
        for (i, terms) in jac_comps.iter().enumerate() {
            for j in 0..n {
                out[i * n + j] = terms.iter().map(|m| m.partial(x, j)).sum();
            }
        }
    }))
}

/// An output map `x ↦ f(x) ∈ ℂᵐ`.
#[derive(Clone)]
pub struct Observable {
    label: String,
    n: usize,
    m: usize,
    eval: Arc<ObservableFn>,
}

impl fmt::Debug for Observable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Observable({}: ℝ^{} → ℂ^{})", self.label, self.n, self.m)
    }
}

impl Observable {
    pub fn new(
        label: impl Into<String>,
        n: usize,
        m: usize,
        eval: impl Fn(&[f64], &mut [Complex64]) + Send + Sync + 'static,
    ) -> Result<Self> {
        if n == 0 || m == 0 {
            return Err(Error::InvalidInput("observable dimensions must be positive".into()));
        }
        Ok(Self { label: label.into(), n, m, eval: Arc::new(eval) })
    }

    /// The coordinate `xᵢ`.
    pub fn coordinate(n: usize, i: usize) -> Result<Self> {
        Self::coordinates(n, &[i])
    }

    /// A selection of state coordinates, in the given order.
    pub fn coordinates(n: usize, idx: &[usize]) -> Result<Self> {
        if let Some(&bad) = idx.iter().find(|&&i| i >= n) {
            return Err(Error::InvalidInput(format!("coordinate index {bad} out of range for n = {n}")));
        }
        let idx = idx.to_vec();
        let label = idx.iter().map(|i| format!("x_{}", i + 1)).collect::<Vec<_>>().join(",");
        let m = idx.len();
        Self::new(label, n, m, move |x, out| {
            for (o, &i) in out.iter_mut().zip(&idx) {
                *o = Complex64::new(x[i], 0.0);
            }
        })
    }

    /// The full state `f(x) = x`.
    pub fn state(n: usize) -> Result<Self> {
        Self::coordinates(n, &(0..n).collect::<Vec<_>>())
    }

    /// Linear functional `c⊤x`.
    pub fn linear(c: &[f64]) -> Result<Self> {
        let c = c.to_vec();
        let n = c.len();
        Self::new("c^T x", n, 1, move |x, out| {
            out[0] = Complex64::new(c.iter().zip(x).map(|(a, b)| a * b).sum(), 0.0);
        })
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn input_dim(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.m
    }

    pub fn eval(&self, x: &[f64]) -> Result<Vec<Complex64>> {
        if x.len() != self.n {
            return Err(Error::DimensionMismatch { expected: self.n, got: x.len() });
        }
        let mut out = vec![Complex64::new(0.0, 0.0); self.m];
        (self.eval)(x, &mut out);
        Ok(out)
    }

    pub fn eval_into(&self, x: &[f64], out: &mut [Complex64]) {
        (self.eval)(x, out)
    }
}

fn check_state(sys: &DynSystem, x0: &[f64]) -> Result<()> {
    if x0.len() != sys.dim() {
        return Err(Error::DimensionMismatch { expected: sys.dim(), got: x0.len() });
    }
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("initial state must be finite".into()));
    }
    Ok(())
}

/// Runs the adaptive integrator from `x0` at `t = 0` to `t_end`, handing each
/// accepted step to `on_step`.
pub fn integrate_dense<C>(sys: &DynSystem, x0: &[f64], t_end: f64, tol: f64, on_step: C) -> Result<Integration>
where
    C: FnMut(&DenseStep<'_>) -> Control,
{
    check_state(sys, x0)?;
    if !(tol > 0.0) {
        return Err(Error::InvalidInput(format!("tolerance must be positive, got {tol}")));
    }
    let mut solver = Dopri5::new(sys.dim(), |x: &[f64], dx: &mut [f64]| sys.field_into(x, dx), SolverOptions::with_tol(tol));
    solver.integrate(0.0, x0, t_end, on_step)
}

/// `S^t(x0)`, the endpoint of the flow.
pub fn flow(sys: &DynSystem, x0: &[f64], t: f64, tol: f64) -> Result<Vec<f64>> {
    if !(t >= 0.0) {
        return Err(Error::InvalidInput(format!("flow time must be non-negative, got {t}")));
    }
    Ok(integrate_dense(sys, x0, t, tol, |_| Control::Continue)?.y)
}

fn grid_count(t_end: f64, dt: f64) -> usize {
    ((t_end / dt) + 1e-9).floor() as usize
}

/// Integrates `sys` from `x0` and samples the flow on `t = 0, dt, 2dt, …`.
///
/// The integrator is adaptive; grid samples come from its continuous
/// extension. The run stops at the last grid point not beyond `t_end`.
pub fn integrate(sys: &DynSystem, x0: &[f64], t_end: f64, dt: f64, tol: f64) -> Result<Trajectory> {
    if !(t_end > 0.0) || !t_end.is_finite() {
        return Err(Error::InvalidInput(format!("t_end must be positive, got {t_end}")));
    }
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::InvalidInput(format!("dt must be positive, got {dt}")));
    }
    let n = sys.dim();
    let steps = grid_count(t_end, dt);
    let t_last = steps as f64 * dt;
    let mut states = Vec::with_capacity((steps + 1) * n);
    states.extend_from_slice(x0);
    let mut next = 1usize;
    let mut buf = vec![0.0; n];
    integrate_dense(sys, x0, t_last, tol, |st| {
        while next < steps {
            let t = next as f64 * dt;
            if t > st.t_new {
                break;
            }
            st.eval(t, &mut buf);
            states.extend_from_slice(&buf);
            next += 1;
        }
        if next == steps && st.t_new == t_last {
            states.extend_from_slice(st.y_new);
            next += 1;
        }
        Control::Continue
    })?;
    debug_assert_eq!(states.len(), (steps + 1) * n);
    Trajectory::new(0.0, dt, n, states)
}

/// Number of sampling intervals of the trajectory returned by
/// [`integrate_variational`].
pub const VARIATIONAL_SAMPLES: usize = 256;

/// Integrates the flow together with its state-transition matrix
/// `Φ(t) = ∂S^t(x₀)/∂x₀`, solving `Φ̇ = DF(x(t)) Φ`, `Φ(0) = I`.
///
/// Returns the trajectory on [`VARIATIONAL_SAMPLES`] uniform intervals and
/// `Φ(t_end)`.
pub fn integrate_variational(
    sys: &DynSystem,
    x0: &[f64],
    t_end: f64,
    tol: f64,
) -> Result<(Trajectory, DMatrix<f64>)> {
    check_state(sys, x0)?;
    if !sys.has_jacobian() {
        return Err(Error::MissingJacobian);
    }
    if !(t_end >= 0.0) || !t_end.is_finite() {
        return Err(Error::InvalidInput(format!("t_end must be non-negative, got {t_end}")));
    }
    let n = sys.dim();
    if t_end == 0.0 {
        return Ok((Trajectory::new(0.0, 1.0, n, x0.to_vec())?, DMatrix::identity(n, n)));
    }
    let mut y0 = vec![0.0; n + n * n];
    y0[..n].copy_from_slice(x0);
    for i in 0..n {
        y0[n + i * n + i] = 1.0;
    }
    let mut jac = vec![0.0; n * n];
    let rhs = |y: &[f64], dy: &mut [f64]| {
        let (x, phi) = y.split_at(n);
        let (dx, dphi) = dy.split_at_mut(n);
        sys.field_into(x, dx);
        sys.jacobian_into(x, &mut jac).expect("jacobian checked above");
        for i in 0..n {
            for j in 0..n {
                let mut acc = 0.0;
                for k in 0..n {
                    acc += jac[i * n + k] * phi[k * n + j];
                }
                dphi[i * n + j] = acc;
            }
        }
    };
    let dt = t_end / VARIATIONAL_SAMPLES as f64;
    let mut states = Vec::with_capacity((VARIATIONAL_SAMPLES + 1) * n);
    states.extend_from_slice(x0);
    let mut next = 1usize;
    let mut buf = vec![0.0; n + n * n];
    let mut solver = Dopri5::new(n + n * n, rhs, SolverOptions::with_tol(tol));
    let out = solver.integrate(0.0, &y0, t_end, |st| {
        while next < VARIATIONAL_SAMPLES {
            let t = next as f64 * dt;
            if t > st.t_new {
                break;
            }
            st.eval(t, &mut buf);
            states.extend_from_slice(&buf[..n]);
            next += 1;
        }
        Control::Continue
    })?;
    states.extend_from_slice(&out.y[..n]);
    let phi = DMatrix::from_row_slice(n, n, &out.y[n..]);
    Ok((Trajectory::new(0.0, dt, n, states)?, phi))
}
