//! Laplace-domain representation `Y(s; x₀)` of an output: numerical
//! transforms, the linear closed form, truncated pole/residue expansions and
//! contour residues.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::io::Write;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dynsys::Signal;
use crate::error::{Error, Result};
use crate::limit_cycle::LimitCycleInfo;
use crate::linalg::{self, c, CMatrix, CVector};
use crate::modes;
use crate::phase::{self, Window};

/// Distance below which an evaluation point counts as sitting on a pole.
pub const POLE_EXCLUSION: f64 = 1e-12;
pub const DEFAULT_K_MAX: u32 = 2;
pub const DEFAULT_M_MAX: u32 = 7;
/// Point-spectrum models explaining less than this energy fraction are flagged.
pub const ENERGY_THRESHOLD: f64 = 0.95;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeTag {
    /// Pole `imΩ` on the imaginary axis.
    Stationary,
    /// Pole `kν + imΩ`, `k ≥ 1`.
    Nonstationary,
    /// Pole `Σ kⱼλⱼ` of a stable equilibrium.
    Equilibrium,
    /// Pole estimated from data with no structural index.
    Identified,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoleEntry {
    pub pole: Complex64,
    pub residue: Vec<Complex64>,
    pub tag: ModeTag,
    pub indices: Vec<i64>,
}

/// Truncated expansion `Y(s) ≈ Σ_k r_k / (s − s_k)`, valid for
/// `Re s > roc_abscissa`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoleResidueSet {
    pub entries: Vec<PoleEntry>,
    pub roc_abscissa: f64,
}

impl PoleResidueSet {
    pub fn new(entries: Vec<PoleEntry>, roc_abscissa: f64) -> Result<Self> {
        let set = Self { entries, roc_abscissa };
        set.validate()?;
        Ok(set)
    }

    /// Data-identified set with `roc_abscissa = max(0, max Re s_k)`.
    pub fn identified(entries: Vec<PoleEntry>) -> Self {
        let roc = entries.iter().map(|e| e.pole.re).fold(0.0, f64::max);
        Self { entries, roc_abscissa: roc }
    }

    /// Output dimension (0 when empty).
    pub fn dim(&self) -> usize {
        self.entries.first().map_or(0, |e| e.residue.len())
    }

    /// Checks residue dimensions and the tag/pole consistency.
    pub fn validate(&self) -> Result<()> {
        let m = self.dim();
        for e in &self.entries {
            if e.residue.len() != m {
                return Err(Error::DimensionMismatch { expected: m, got: e.residue.len() });
            }
            let ok = match e.tag {
                ModeTag::Stationary => e.pole.re == 0.0,
                ModeTag::Nonstationary | ModeTag::Equilibrium => e.pole.re < 0.0,
                ModeTag::Identified => true,
            };
            if !ok {
                return Err(Error::InvalidInput(format!("pole {} inconsistent with tag {:?}", e.pole, e.tag)));
            }
            if e.pole.re > self.roc_abscissa && e.tag != ModeTag::Identified {
                return Err(Error::InvalidInput(format!("pole {} right of the ROC abscissa", e.pole)));
            }
        }
        Ok(())
    }

    /// Whether every entry has a partner at the conjugate pole with the
    /// conjugate residue.
    pub fn is_conjugate_closed(&self, tol: f64) -> bool {
        let scale = self
            .entries
            .iter()
            .flat_map(|e| e.residue.iter().map(|r| r.norm()))
            .fold(1.0, f64::max);
        self.entries.iter().all(|e| {
            self.entries.iter().any(|f| {
                (f.pole - e.pole.conj()).norm() <= tol * e.pole.norm().max(1.0)
                    && f.residue.iter().zip(&e.residue).all(|(a, b)| (a - b.conj()).norm() <= tol * scale)
            })
        })
    }

    /// Orders entries by decreasing real part, then increasing imaginary part.
    pub fn sort(&mut self) {
        self.entries.sort_by(|a, b| b.pole.re.total_cmp(&a.pole.re).then(a.pole.im.total_cmp(&b.pole.im)));
    }

    /// `y(t) = Σ_k r_k e^{s_k t}` reconstructed from the entries.
    pub fn time_response(&self, t: f64) -> Vec<Complex64> {
        let mut out = vec![c(0.0, 0.0); self.dim()];
        for e in &self.entries {
            let w = (e.pole * t).exp();
            for (o, r) in out.iter_mut().zip(&e.residue) {
                *o += w * r;
            }
        }
        out
    }

    /// Pretty JSON with lexicographically ordered keys.
    pub fn to_json(&self) -> Result<String> {
        let value = serde_json::to_value(self).map_err(|e| Error::Numeric(e.to_string()))?;
        serde_json::to_string_pretty(&value).map_err(|e| Error::Numeric(e.to_string()))
    }
}

fn roc_check(s: Complex64, abscissa: f64) -> Result<()> {
    if !(s.re > abscissa) || !s.im.is_finite() {
        return Err(Error::RocViolation { re: s.re, abscissa });
    }
    Ok(())
}

/// Trapezoid value of `∫₀^{T} e^{−st} y(t) dt` with a tail bound.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LaplaceValue {
    pub value: Vec<Complex64>,
    /// `max|y| e^{−Re s T} / Re s`.
    pub bound: f64,
}

// Composite trapezoid over the first `n` intervals, time measured from the
// first sample. No ROC check.
fn trapezoid(signal: &Signal, s: Complex64, n: usize) -> Vec<Complex64> {
    let dt = signal.dt();
    let mut acc = vec![c(0.0, 0.0); signal.dim()];
    for k in 0..=n {
        let half = if k == 0 || k == n { 0.5 } else { 1.0 };
        let w = (-s * (k as f64 * dt)).exp() * half;
        for (a, &y) in acc.iter_mut().zip(signal.sample(k)) {
            *a += w * y;
        }
    }
    acc.into_iter().map(|a| a * dt).collect()
}

fn interval_count(signal: &Signal, t_max: f64) -> Result<usize> {
    if !(t_max > 0.0) {
        return Err(Error::InvalidInput(format!("truncation time must be positive, got {t_max}")));
    }
    let n = (t_max / signal.dt() + 1e-9).floor() as usize;
    if n + 1 > signal.len() {
        return Err(Error::InvalidInput(format!(
            "truncation time {t_max} exceeds the data span {}",
            signal.duration()
        )));
    }
    if n == 0 {
        return Err(Error::InvalidInput("truncation time shorter than one sample step".into()));
    }
    Ok(n)
}

/// Numerical Laplace transform of sampled output, truncated at `t_max`.
pub fn laplace_numeric(signal: &Signal, s: Complex64, t_max: f64) -> Result<LaplaceValue> {
    roc_check(s, 0.0)?;
    let n = interval_count(signal, t_max)?;
    let value = trapezoid(signal, s, n);
    let ymax = signal.samples().take(n + 1).flatten().map(|z| z.norm()).fold(0.0, f64::max);
    let t_end = n as f64 * signal.dt();
    Ok(LaplaceValue { value, bound: ymax * (-s.re * t_end).exp() / s.re })
}

/// `cᵀ (sI − A)⁻¹ x₀`.
pub fn laplace_linear_analytic(a: &DMatrix<f64>, cvec: &[f64], x0: &[f64], s: Complex64) -> Result<Complex64> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::InvalidInput("system matrix must be square".into()));
    }
    for v in [cvec, x0] {
        if v.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: v.len() });
        }
    }
    let m = CMatrix::from_fn(n, n, |i, j| if i == j { s - a[(i, j)] } else { c(-a[(i, j)], 0.0) });
    let z = linalg::solve(&m, &CVector::from_iterator(n, x0.iter().map(|&v| c(v, 0.0))))?;
    Ok(z.iter().zip(cvec).map(|(zi, &ci)| zi * ci).sum())
}

/// Eigen-expansion of a diagonalizable linear system: poles `λⱼ` with
/// residues `φⱼ(x₀) Vⱼ = (wⱼᵀ x₀)(cᵀ vⱼ)`.
pub fn linear_expansion(a: &DMatrix<f64>, cvec: &[f64], x0: &[f64]) -> Result<PoleResidueSet> {
    let n = a.nrows();
    if a.ncols() != n || cvec.len() != n || x0.len() != n {
        return Err(Error::InvalidInput("linear expansion needs square A and matching c, x0".into()));
    }
    let (lambdas, v) = linalg::eig(&a.map(|x| c(x, 0.0)))?;
    let w = v.clone().try_inverse().ok_or_else(|| Error::Singular("system matrix is not diagonalizable".into()))?;
    let mut entries = Vec::with_capacity(n);
    for (j, &lambda) in lambdas.iter().enumerate() {
        let phi: Complex64 = (0..n).map(|i| w[(j, i)] * x0[i]).sum();
        let mode: Complex64 = (0..n).map(|i| v[(i, j)] * cvec[i]).sum();
        entries.push(PoleEntry { pole: lambda, residue: vec![phi * mode], tag: ModeTag::Identified, indices: vec![j as i64] });
    }
    let mut set = PoleResidueSet::identified(entries);
    set.roc_abscissa = lambdas.iter().map(|l| l.re).fold(f64::NEG_INFINITY, f64::max);
    set.sort();
    Ok(set)
}

/// Expansion of `ẋ₁ = λ₁x₁, ẋ₂ = λ₂x₂ + x₁²` for coordinate outputs.
///
/// `x₁` has the single pole `λ₁`; `x₂` has `λ₂` with residue `x₂₀ − c` and
/// `2λ₁` with residue `c = x₁₀²/(2λ₁ − λ₂)`.
pub fn quadratic_equilibrium_expansion(lambda1: f64, lambda2: f64, x0: [f64; 2], components: &[usize]) -> Result<PoleResidueSet> {
    if !(lambda1 < 0.0 && lambda2 < 0.0) {
        return Err(Error::InvalidInput("equilibrium expansion needs λ₁, λ₂ < 0".into()));
    }
    if (2.0 * lambda1 - lambda2).abs() < 1e-12 {
        return Err(Error::InvalidInput("resonant eigenvalues: 2λ₁ = λ₂".into()));
    }
    let cc = x0[0] * x0[0] / (2.0 * lambda1 - lambda2);
    let terms = [(lambda1, [1i64, 0]), (lambda2, [0, 1]), (2.0 * lambda1, [2, 0])];
    let mut entries = Vec::new();
    for (pole, idx) in terms {
        let residue: Vec<Complex64> = components
            .iter()
            .map(|&i| match (i, idx) {
                (0, [1, 0]) => Ok(c(x0[0], 0.0)),
                (1, [0, 1]) => Ok(c(x0[1] - cc, 0.0)),
                (1, [2, 0]) => Ok(c(cc, 0.0)),
                (0 | 1, _) => Ok(c(0.0, 0.0)),
                _ => Err(Error::InvalidInput(format!("state component {i} out of range"))),
            })
            .collect::<Result<_>>()?;
        if residue.iter().any(|r| r.norm() > 0.0) {
            entries.push(PoleEntry { pole: c(pole, 0.0), residue, tag: ModeTag::Equilibrium, indices: idx.to_vec() });
        }
    }
    let roc = entries.iter().map(|e| e.pole.re).fold(f64::NEG_INFINITY, f64::max);
    let mut set = PoleResidueSet::new(entries, roc.min(0.0))?;
    set.sort();
    Ok(set)
}

/// `Σ_k r_k / (s − s_k)`.
pub fn expansion_eval(prs: &PoleResidueSet, s: Complex64) -> Result<Vec<Complex64>> {
    roc_check(s, prs.roc_abscissa)?;
    let mut out = vec![c(0.0, 0.0); prs.dim()];
    for e in &prs.entries {
        let d = s - e.pole;
        if d.norm() < POLE_EXCLUSION {
            return Err(Error::Singular(format!("evaluation point {s} coincides with pole {}", e.pole)));
        }
        for (o, r) in out.iter_mut().zip(&e.residue) {
            *o += r / d;
        }
    }
    Ok(out)
}

/// Transform values on a set of evaluation points.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LaplaceGrid {
    pub points: Vec<Complex64>,
    pub values: Vec<Vec<Complex64>>,
    pub truncation_t: f64,
    pub truncation_bound: Vec<f64>,
}

impl LaplaceGrid {
    /// [`laplace_numeric`] at every point.
    pub fn evaluate(signal: &Signal, points: &[Complex64], t_max: f64) -> Result<Self> {
        let mut values = Vec::with_capacity(points.len());
        let mut bounds = Vec::with_capacity(points.len());
        for &s in points {
            let v = laplace_numeric(signal, s, t_max)?;
            values.push(v.value);
            bounds.push(v.bound);
        }
        let n = interval_count(signal, t_max)?;
        Ok(Self { points: points.to_vec(), values, truncation_t: n as f64 * signal.dt(), truncation_bound: bounds })
    }

    pub fn dim(&self) -> usize {
        self.values.first().map_or(0, Vec::len)
    }

    /// CSV header `re_s,im_s,re_Y_1..m,im_Y_1..m,trunc_bound`.
    pub fn csv_header(&self) -> Vec<String> {
        let m = self.dim();
        let mut h = vec!["re_s".to_string(), "im_s".to_string()];
        h.extend((1..=m).map(|j| format!("re_Y_{j}")));
        h.extend((1..=m).map(|j| format!("im_Y_{j}")));
        h.push("trunc_bound".into());
        h
    }

    /// Numeric rows in header order.
    pub fn csv_rows(&self) -> Vec<Vec<f64>> {
        self.points
            .iter()
            .zip(&self.values)
            .zip(&self.truncation_bound)
            .map(|((s, y), b)| {
                let mut row = vec![s.re, s.im];
                row.extend(y.iter().map(|v| v.re));
                row.extend(y.iter().map(|v| v.im));
                row.push(*b);
                row
            })
            .collect()
    }

    /// Writes the grid as CSV with `%.17g` numbers.
    pub fn write_csv<W: Write>(&self, out: &mut W) -> Result<()> {
        writeln!(out, "{}", self.csv_header().join(","))?;
        for row in self.csv_rows() {
            let cells: Vec<String> = row.iter().map(|&v| crate::format::g17(v)).collect();
            writeln!(out, "{}", cells.join(","))?;
        }
        Ok(())
    }
}

/// Transform on the shifted line `s = σ + iω`.
pub fn fourier_spectrum(signal: &Signal, omegas: &[f64], sigma: f64, t_max: f64) -> Result<LaplaceGrid> {
    if !(sigma > 0.0) {
        return Err(Error::RocViolation { re: sigma, abscissa: 0.0 });
    }
    let points: Vec<Complex64> = omegas.iter().map(|&w| c(sigma, w)).collect();
    LaplaceGrid::evaluate(signal, &points, t_max)
}

/// Local maxima of `|Y_component|` along a grid, strongest first.
pub fn spectrum_peaks(grid: &LaplaceGrid, component: usize, rel_floor: f64) -> Vec<(Complex64, f64)> {
    let mag: Vec<f64> = grid.values.iter().map(|v| v[component].norm()).collect();
    let top = mag.iter().copied().fold(0.0, f64::max);
    let mut peaks: Vec<(Complex64, f64)> = (1..mag.len().saturating_sub(1))
        .filter(|&k| mag[k] > mag[k - 1] && mag[k] >= mag[k + 1] && mag[k] >= rel_floor * top)
        .map(|k| (grid.points[k], mag[k]))
        .collect();
    peaks.sort_by(|a, b| b.1.total_cmp(&a.1));
    peaks
}

/// Contour residue with its refinement history.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ResidueEstimate {
    pub value: Complex64,
    pub points: usize,
    /// `|R_N − R_{N/2}|` at the accepted `N`.
    pub change: f64,
}

const CAUCHY_MAX_DOUBLINGS: u32 = 8;

/// `(1/2πi) ∮ Y(s) ds` on the circle `|s − pole| = radius` by the trapezoid
/// rule, doubling the point count from `n` until two estimates agree.
pub fn cauchy_residue<F>(mut y: F, pole: Complex64, radius: f64, n: usize) -> Result<ResidueEstimate>
where
    F: FnMut(Complex64) -> Result<Complex64>,
{
    if !(radius > 0.0) || n < 4 {
        return Err(Error::InvalidInput("contour needs positive radius and at least 4 points".into()));
    }
    let mut rule = |points: usize| -> Result<Complex64> {
        let mut acc = c(0.0, 0.0);
        for k in 0..points {
            let e = Complex64::from_polar(1.0, 2.0 * PI * k as f64 / points as f64);
            acc += y(pole + e * radius)? * e;
        }
        Ok(acc * radius / points as f64)
    };
    let mut points = n;
    let mut prev = rule(points)?;
    let mut change = f64::INFINITY;
    for _ in 0..CAUCHY_MAX_DOUBLINGS {
        points *= 2;
        let next = rule(points)?;
        change = (next - prev).norm();
        if change <= 1e-11 * next.norm().max(1e-3) {
            return Ok(ResidueEstimate { value: next, points, change });
        }
        prev = next;
    }
    Err(Error::NonConvergence { gap: change, tol: 1e-11 * prev.norm().max(1e-3) })
}

/// Transform of a signal whose tail is periodic.
///
/// Uses the samples on `[0, t0]` and one period `[t0, t0 + T]`, extended
/// periodically, giving the continuation of `Y(s)` to `Re s > ` (decay rate
/// of whatever is left at `t0`), with simple poles at `2πi m / T`.
#[derive(Debug, Clone, PartialEq)]
pub struct PeriodicTailTransform {
    head: Signal,
    cycle: Signal,
    t0: f64,
    period: f64,
}

fn steps(value: f64, dt: f64, what: &str) -> Result<usize> {
    let k = (value / dt).round();
    if !(value >= 0.0) || (k * dt - value).abs() > 1e-6 * dt {
        return Err(Error::InvalidInput(format!("{what} {value} is not a multiple of the sampling step {dt}")));
    }
    Ok(k as usize)
}

impl PeriodicTailTransform {
    pub fn new(signal: &Signal, t0: f64, period: f64) -> Result<Self> {
        let dt = signal.dt();
        let k0 = steps(t0, dt, "split time")?;
        let kp = steps(period, dt, "period")?;
        if kp < 2 {
            return Err(Error::InvalidInput("period shorter than two samples".into()));
        }
        if k0 + kp + 1 > signal.len() {
            return Err(Error::InvalidInput("signal does not cover the split time plus one period".into()));
        }
        let head = signal.truncated(k0 as f64 * dt);
        let cycle = signal.skip(k0)?.truncated(kp as f64 * dt);
        Ok(Self { head, cycle, t0: k0 as f64 * dt, period: kp as f64 * dt })
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    pub fn eval(&self, s: Complex64) -> Result<Vec<Complex64>> {
        let denom = c(1.0, 0.0) - (-s * self.period).exp();
        if denom.norm() < 1e-14 {
            return Err(Error::Singular(format!("evaluation point {s} is a pole of the periodic tail")));
        }
        let head = if self.head.len() > 1 { trapezoid(&self.head, s, self.head.len() - 1) } else { vec![c(0.0, 0.0); self.head.dim()] };
        let tail = trapezoid(&self.cycle, s, self.cycle.len() - 1);
        let shift = (-s * self.t0).exp() / denom;
        Ok(head.into_iter().zip(tail).map(|(h, t)| h + shift * t).collect())
    }
}

/// Time-averaged stationary residues `(P_{imΩ} f)(x₀)` for `|m| ≤ m_max`.
pub fn stationary_residues(
    signal: &Signal,
    omega: f64,
    m_max: u32,
    t_avg: f64,
    window: Window,
) -> Result<BTreeMap<i64, Vec<Complex64>>> {
    let mut out = BTreeMap::new();
    for m in -(m_max as i64)..=(m_max as i64) {
        let avg = phase::time_average(signal, c(0.0, m as f64 * omega), t_avg, window)?;
        out.insert(m, avg.value);
    }
    Ok(out)
}

/// Residues of `kν + imΩ`, `1 ≤ k ≤ k_max`, fitted to a residual signal.
pub fn nonstationary_residues(
    residual: &Signal,
    nu: Complex64,
    omega: f64,
    k_max: u32,
    m_max: u32,
) -> Result<BTreeMap<(u32, i64), Vec<Complex64>>> {
    let mut keys = Vec::new();
    let mut poles = Vec::new();
    for k in 1..=k_max {
        for m in -(m_max as i64)..=(m_max as i64) {
            keys.push((k, m));
            poles.push(nu * k as f64 + c(0.0, m as f64 * omega));
        }
    }
    let (res, _) = modes::residues_at_poles(residual, &poles)?;
    Ok(keys.into_iter().zip(res).collect())
}

/// Truncated limit-cycle expansion with stationary poles `imΩ` and
/// non-stationary poles `kν + imΩ`.
pub fn build_expansion_limit_cycle(
    cycle: &LimitCycleInfo,
    stationary: &BTreeMap<i64, Vec<Complex64>>,
    nonstationary: &BTreeMap<(u32, i64), Vec<Complex64>>,
    k_max: u32,
    m_max: u32,
) -> Result<PoleResidueSet> {
    let omega = cycle.omega;
    let mut entries = Vec::new();
    for m in -(m_max as i64)..=(m_max as i64) {
        let residue = stationary
            .get(&m)
            .ok_or_else(|| Error::InvalidInput(format!("missing stationary residue for m = {m}")))?;
        entries.push(PoleEntry {
            pole: c(0.0, m as f64 * omega),
            residue: residue.clone(),
            tag: ModeTag::Stationary,
            indices: vec![0, m],
        });
    }
    if k_max > 0 {
        let nu = cycle
            .dominant_exponent()
            .ok_or_else(|| Error::InvalidInput("cycle has no non-trivial exponent".into()))?;
        for k in 1..=k_max {
            for m in -(m_max as i64)..=(m_max as i64) {
                let residue = nonstationary
                    .get(&(k, m))
                    .ok_or_else(|| Error::InvalidInput(format!("missing residue for k = {k}, m = {m}")))?;
                entries.push(PoleEntry {
                    pole: nu * k as f64 + c(0.0, m as f64 * omega),
                    residue: residue.clone(),
                    tag: ModeTag::Nonstationary,
                    indices: vec![k as i64, m],
                });
            }
        }
    }
    PoleResidueSet::new(entries, 0.0)
}

/// Fraction of the signal energy reproduced by the point-spectrum model,
/// `1 − ‖y − ŷ‖² / ‖y‖²` over the samples.
pub fn explained_energy(prs: &PoleResidueSet, signal: &Signal) -> f64 {
    let mut err = 0.0;
    let mut total = 0.0;
    for (k, y) in signal.samples().enumerate() {
        let model = prs.time_response(signal.t0() + k as f64 * signal.dt());
        for (j, a) in y.iter().enumerate() {
            let b = model.get(j).copied().unwrap_or_default();
            err += (a - b).norm_sqr();
            total += a.norm_sqr();
        }
    }
    if total == 0.0 {
        return 1.0;
    }
    1.0 - err / total
}
