//! Data-driven poles and residues: exact DMD and Prony analysis.

use std::f64::consts::PI;

use nalgebra::SVD;
use num_complex::Complex64;
use serde::Serialize;

use crate::dynsys::Signal;
use crate::error::{Error, Result};
use crate::linalg::{self, c, CMatrix};
use crate::resolvent::{ModeTag, PoleEntry, PoleResidueSet};

pub const DEFAULT_RANK_TOL: f64 = 1e-10;
/// Amplitude solves with a larger condition number are flagged.
pub const ILL_CONDITIONED: f64 = 1e12;
/// Hankel systems with a larger condition number are treated as rank deficient.
pub const PRONY_MAX_CONDITION: f64 = 1e13;
/// Modes at the Nyquist frequency carrying more than this fraction of the
/// largest contribution are an aliasing error; weaker ones are only flagged.
pub const ALIASING_TOL: f64 = 1e-3;

/// Eigenvalues, modes and amplitudes identified from snapshots.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectrumEstimate {
    pub discrete_eigs: Vec<Complex64>,
    pub cont_eigs: Vec<Complex64>,
    /// Unit-norm modes, one per eigenvalue.
    pub modes: Vec<Vec<Complex64>>,
    pub amplitudes: Vec<Complex64>,
    pub dt: f64,
    pub rank: usize,
    /// Relative Frobenius error of the rank-r reconstruction of all snapshots.
    pub reconstruction_error: f64,
    pub amplitude_condition: f64,
    pub ill_conditioned: bool,
    /// Indices of weak modes sitting on the negative real axis.
    pub aliased: Vec<usize>,
}

impl SpectrumEstimate {
    /// Residue of snapshot row `row` at each eigenvalue, `amplitude · mode[row]`.
    pub fn residues(&self, row: usize) -> Vec<Complex64> {
        self.amplitudes.iter().zip(&self.modes).map(|(b, v)| b * v[row]).collect()
    }

    /// Poles and residues of the first `rows` snapshot rows.
    pub fn to_pole_residue_set(&self, rows: usize) -> PoleResidueSet {
        let entries = self
            .cont_eigs
            .iter()
            .enumerate()
            .map(|(k, &pole)| PoleEntry {
                pole,
                residue: (0..rows).map(|r| self.amplitudes[k] * self.modes[k][r]).collect(),
                tag: ModeTag::Identified,
                indices: vec![k as i64],
            })
            .collect();
        PoleResidueSet::identified(entries)
    }
}

/// Columns `y(t_k)` of a signal as an `m × N` matrix.
pub fn snapshot_matrix(signal: &Signal) -> CMatrix {
    CMatrix::from_fn(signal.dim(), signal.len(), |i, k| signal.sample(k)[i])
}

/// Hankel stacking of `depth` consecutive snapshots.
///
/// Row block `j` of column `k` is `samples[:, k + j]`.
pub fn delay_embed(samples: &CMatrix, depth: usize) -> Result<CMatrix> {
    let (m, n) = samples.shape();
    if depth == 0 || depth > n {
        return Err(Error::InvalidInput(format!("delay depth {depth} incompatible with {n} samples")));
    }
    Ok(CMatrix::from_fn(m * depth, n - depth + 1, |r, k| samples[(r % m, k + r / m)]))
}

fn continuous(z: Complex64, dt: f64) -> Result<Complex64> {
    if z.norm() < f64::MIN_POSITIVE {
        return Err(Error::DegenerateFit("discrete eigenvalue at zero has no logarithm".into()));
    }
    Ok(z.ln() / dt)
}

// A discrete eigenvalue on the negative real axis cannot be assigned a unique
// continuous-time frequency.
fn on_nyquist(z: Complex64) -> bool {
    z.arg().abs() > PI * (1.0 - 1e-9)
}

/// Exact DMD of the snapshot sequence `Y = [y_0 … y_N]`.
pub fn dmd(snapshots: &CMatrix, dt: f64, rank_tol: f64) -> Result<SpectrumEstimate> {
    let (m, cols) = snapshots.shape();
    if cols < 2 || m == 0 {
        return Err(Error::InvalidInput("DMD needs at least two snapshots".into()));
    }
    if !(dt > 0.0) {
        return Err(Error::InvalidInput(format!("sampling step must be positive, got {dt}")));
    }
    let x = snapshots.columns(0, cols - 1).into_owned();
    let xp = snapshots.columns(1, cols - 1).into_owned();
    let svd = SVD::new(x, true, true);
    let (u, vt) = (svd.u.as_ref().unwrap(), svd.v_t.as_ref().unwrap());
    let smax = svd.singular_values.iter().copied().fold(0.0, f64::max);
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let keep: Vec<usize> = order
        .into_iter()
        .filter(|&k| smax > 0.0 && svd.singular_values[k] > rank_tol * smax)
        .collect();
    let r = keep.len();
    if r == 0 {
        return Err(Error::DegenerateFit("snapshot matrix has rank 0".into()));
    }
    let ur = CMatrix::from_fn(m, r, |i, j| u[(i, keep[j])]);
    // V_r Σ_r⁻¹
    let v_sinv = CMatrix::from_fn(cols - 1, r, |i, j| vt[(keep[j], i)].conj() / svd.singular_values[keep[j]]);
    let xp_v = &xp * &v_sinv;
    let atilde = ur.adjoint() * &xp_v;
    let (lambdas, w) = linalg::eig(&atilde)?;
    let mut phi = &xp_v * &w;
    for (k, &lambda) in lambdas.iter().enumerate() {
        let mut col = phi.column(k).into_owned();
        if lambda.norm() > 0.0 {
            col /= lambda;
        }
        let norm = col.norm();
        if norm > 0.0 {
            col /= c(norm, 0.0);
        } else {
            // Exact DMD mode vanishes; fall back to the projected mode.
            col = &ur * w.column(k);
        }
        phi.set_column(k, &col);
    }
    let y0 = snapshots.columns(0, 1).into_owned();
    let (b, cond) = linalg::lstsq(&phi, &y0, 1e-15)?;
    let amplitudes: Vec<Complex64> = b.iter().copied().collect();

    let scale = amplitudes
        .iter()
        .enumerate()
        .map(|(k, a)| a.norm() * phi.column(k).norm())
        .fold(0.0, f64::max);
    let mut cont = Vec::with_capacity(r);
    for (k, &z) in lambdas.iter().enumerate() {
        if on_nyquist(z) && amplitudes[k].norm() * phi.column(k).norm() > ALIASING_TOL * scale {
            return Err(Error::Aliasing(format!(
                "eigenvalue {z} lies on the negative real axis (frequency at Nyquist π/dt)"
            )));
        }
        cont.push(continuous(z, dt)?);
    }

    let mut num = 0.0;
    let mut den = 0.0;
    let mut powers: Vec<Complex64> = amplitudes.clone();
    for j in 0..cols {
        for i in 0..m {
            let mut rec = c(0.0, 0.0);
            for k in 0..r {
                rec += phi[(i, k)] * powers[k];
            }
            num += (snapshots[(i, j)] - rec).norm_sqr();
            den += snapshots[(i, j)].norm_sqr();
        }
        for k in 0..r {
            powers[k] *= lambdas[k];
        }
    }
    let reconstruction_error = if den > 0.0 { (num / den).sqrt() } else { 0.0 };

    // Largest contributions first.
    let mut idx: Vec<usize> = (0..r).collect();
    let weight = |k: usize| amplitudes[k].norm();
    idx.sort_by(|&a, &b| {
        weight(b)
            .total_cmp(&weight(a))
            .then(cont[b].re.total_cmp(&cont[a].re))
            .then(cont[a].im.total_cmp(&cont[b].im))
    });
    Ok(SpectrumEstimate {
        discrete_eigs: idx.iter().map(|&k| lambdas[k]).collect(),
        cont_eigs: idx.iter().map(|&k| cont[k]).collect(),
        modes: idx.iter().map(|&k| phi.column(k).iter().copied().collect()).collect(),
        amplitudes: idx.iter().map(|&k| amplitudes[k]).collect(),
        dt,
        rank: r,
        reconstruction_error,
        amplitude_condition: cond,
        ill_conditioned: cond > ILL_CONDITIONED,
        aliased: idx.iter().enumerate().filter(|(_, &k)| on_nyquist(lambdas[k])).map(|(i, _)| i).collect(),
    })
}

/// Least-squares residues `r_k` of `y(t) ≈ Σ_k r_k e^{s_k t}` at fixed poles,
/// one vector per pole, plus the condition number of the fit.
pub fn residues_at_poles(signal: &Signal, poles: &[Complex64]) -> Result<(Vec<Vec<Complex64>>, f64)> {
    if poles.is_empty() {
        return Ok((Vec::new(), 1.0));
    }
    let n = signal.len();
    if n < poles.len() {
        return Err(Error::InvalidInput(format!("{n} samples cannot determine {} residues", poles.len())));
    }
    let vander = CMatrix::from_fn(n, poles.len(), |i, k| {
        (poles[k] * (signal.t0() + i as f64 * signal.dt())).exp()
    });
    let rhs = CMatrix::from_fn(n, signal.dim(), |i, j| signal.sample(i)[j]);
    let (sol, cond) = linalg::lstsq(&vander, &rhs, 1e-15)?;
    let residues = (0..poles.len()).map(|k| sol.row(k).iter().copied().collect()).collect();
    Ok((residues, cond))
}

// Gauss-Newton on `y[k] = Σ r_j z_j^k` jointly in residues and roots.
// The linear-prediction roots are sensitive to the Hankel solve when
// poles crowd together; a few steps against the data itself fix that.
fn refine_roots(samples: &[Complex64], mut roots: Vec<Complex64>) -> Vec<Complex64> {
    let n = samples.len();
    let p = roots.len();
    let y = CMatrix::from_fn(n, 1, |k, _| samples[k]);
    let fit = |z: &[Complex64]| -> Option<(CMatrix, CMatrix, f64)> {
        let vander = CMatrix::from_fn(n, p, |k, j| z[j].powu(k as u32));
        let (r, _) = linalg::lstsq(&vander, &y, 1e-15).ok()?;
        let err = &y - &vander * &r;
        let norm = err.norm();
        norm.is_finite().then_some((r, err, norm))
    };
    let Some((mut r, mut err, mut norm)) = fit(&roots) else {
        return roots;
    };
    for _ in 0..20 {
        if norm <= 1e-15 * y.norm() {
            break;
        }
        let jac = CMatrix::from_fn(n, 2 * p, |k, j| {
            if j < p {
                roots[j].powu(k as u32)
            } else if k == 0 {
                c(0.0, 0.0)
            } else {
                r[j - p] * k as f64 * roots[j - p].powu(k as u32 - 1)
            }
        });
        let Ok((step, _)) = linalg::lstsq(&jac, &err, 1e-15) else {
            break;
        };
        let trial: Vec<Complex64> = (0..p).map(|j| roots[j] + step[p + j]).collect();
        match fit(&trial) {
            Some((r2, e2, n2)) if n2 < norm => {
                let gain = norm - n2;
                roots = trial;
                r = r2;
                err = e2;
                norm = n2;
                if gain < 1e-3 * norm {
                    break;
                }
            }
            _ => break,
        }
    }
    roots
}

/// Prony analysis of a scalar sequence with model order `order`.
pub fn prony(samples: &[Complex64], dt: f64, order: usize) -> Result<PoleResidueSet> {
    let n = samples.len();
    if order == 0 {
        return Err(Error::InvalidInput("Prony order must be at least 1".into()));
    }
    if n < 2 * order {
        return Err(Error::InvalidInput(format!("Prony order {order} needs at least {} samples, got {n}", 2 * order)));
    }
    if !(dt > 0.0) {
        return Err(Error::InvalidInput(format!("sampling step must be positive, got {dt}")));
    }
    // y[i + p] = −Σ_k a_k y[i + p − k]
    let rows = n - order;
    let hankel = CMatrix::from_fn(rows, order, |i, k| samples[i + order - 1 - k]);
    let rhs = CMatrix::from_fn(rows, 1, |i, _| -samples[i + order]);
    let svd = SVD::new(hankel.clone(), false, false);
    let smax = svd.singular_values.iter().copied().fold(0.0, f64::max);
    let smin = svd.singular_values.iter().copied().fold(f64::INFINITY, f64::min);
    if smax == 0.0 || smax > PRONY_MAX_CONDITION * smin {
        return Err(Error::DegenerateFit(format!(
            "Hankel matrix is rank deficient for order {order} (condition {:e})",
            smax / smin
        )));
    }
    let (a, _) = linalg::lstsq(&hankel, &rhs, 0.0)?;
    let coeffs: Vec<Complex64> = a.iter().copied().collect();
    let roots = refine_roots(samples, linalg::monic_roots(&coeffs)?);
    let mut poles = Vec::with_capacity(order);
    for &z in &roots {
        if z.norm() < 1e-300 {
            return Err(Error::DegenerateFit("prediction polynomial has a root at zero".into()));
        }
        poles.push(continuous(z, dt)?);
    }
    let signal = Signal::scalar(dt, samples.to_vec())?;
    let (residues, _) = residues_at_poles(&signal, &poles)?;
    let scale = residues.iter().map(|r| r[0].norm()).fold(0.0, f64::max);
    for (z, r) in roots.iter().zip(&residues) {
        if on_nyquist(*z) && r[0].norm() > ALIASING_TOL * scale {
            return Err(Error::Aliasing(format!("root {z} lies on the negative real axis")));
        }
    }
    let entries = poles
        .into_iter()
        .zip(residues)
        .enumerate()
        .map(|(k, (pole, residue))| PoleEntry { pole, residue, tag: ModeTag::Identified, indices: vec![k as i64] })
        .collect();
    let mut set = PoleResidueSet::identified(entries);
    set.sort();
    Ok(set)
}

/// Prony poles at one order of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub order: usize,
    pub poles: Vec<Complex64>,
    /// For each pole, distance to the nearest pole of the previous order.
    pub shift: Vec<Option<f64>>,
    pub error: Option<String>,
}

/// Runs [`prony`] over several orders and reports how the poles move.
pub fn prony_sweep(samples: &[Complex64], dt: f64, orders: &[usize]) -> Vec<SweepRow> {
    let mut rows = Vec::with_capacity(orders.len());
    let mut previous: Option<Vec<Complex64>> = None;
    for &order in orders {
        match prony(samples, dt, order) {
            Ok(set) => {
                let poles: Vec<Complex64> = set.entries.iter().map(|e| e.pole).collect();
                let shift = poles
                    .iter()
                    .map(|p| {
                        previous
                            .as_ref()
                            .and_then(|prev| prev.iter().map(|q| (p - q).norm()).min_by(f64::total_cmp))
                    })
                    .collect();
                previous = Some(poles.clone());
                rows.push(SweepRow { order, poles, shift, error: None });
            }
            Err(e) => rows.push(SweepRow { order, poles: Vec::new(), shift: Vec::new(), error: Some(e.to_string()) }),
        }
    }
    rows
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sig(dt: f64, n: usize, terms: &[(Complex64, Complex64)]) -> Vec<Complex64> {
        (0..n)
            .map(|k| terms.iter().map(|(r, s)| r * (s * (k as f64 * dt)).exp()).sum())
            .collect()
    }

    fn sorted(mut v: Vec<Complex64>) -> Vec<Complex64> {
        v.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
        v
    }

    #[test]
    fn delay_embedding_shapes() {
        let y = CMatrix::from_row_slice(1, 4, &[c(1.0, 0.0), c(2.0, 0.0), c(3.0, 0.0), c(4.0, 0.0)]);
        let one = delay_embed(&y, 1).unwrap();
        assert_eq!(one, y);
        let two = delay_embed(&y, 2).unwrap();
        assert_eq!(two.shape(), (2, 3));
        assert_eq!(two[(0, 0)], c(1.0, 0.0));
        assert_eq!(two[(1, 0)], c(2.0, 0.0));
        assert_eq!(two[(1, 2)], c(4.0, 0.0));
        assert!(delay_embed(&y, 5).is_err());
    }

    #[test]
    fn dmd_on_linear_states() {
        let dt = 0.1;
        let y = CMatrix::from_fn(2, 40, |i, k| c((-(i as f64 + 1.0) * k as f64 * dt).exp(), 0.0));
        let est = dmd(&y, dt, DEFAULT_RANK_TOL).unwrap();
        assert_eq!(est.rank, 2);
        let eigs = sorted(est.cont_eigs.clone());
        assert!((eigs[0] - c(-2.0, 0.0)).norm() < 1e-8);
        assert!((eigs[1] - c(-1.0, 0.0)).norm() < 1e-8);
        assert!(est.reconstruction_error < 1e-10);
        for (z, s) in est.discrete_eigs.iter().zip(&est.cont_eigs) {
            assert_eq!(z.ln() / dt, *s);
        }
    }

    #[test]
    fn dmd_on_delayed_tone() {
        let dt = 0.05;
        let omega = 0.995;
        let y: Vec<Complex64> = (0..200).map(|k| c((omega * k as f64 * dt).cos(), 0.0)).collect();
        let h = delay_embed(&CMatrix::from_row_slice(1, y.len(), &y), 2).unwrap();
        let est = dmd(&h, dt, DEFAULT_RANK_TOL).unwrap();
        let eigs = sorted(est.cont_eigs);
        assert!((eigs[0] - c(0.0, -omega)).norm() < 1e-8, "{:?}", eigs);
        assert!((eigs[1] - c(0.0, omega)).norm() < 1e-8);
    }

    #[test]
    fn dmd_rejects_zero_data() {
        assert!(matches!(dmd(&CMatrix::zeros(2, 5), 0.1, DEFAULT_RANK_TOL), Err(Error::DegenerateFit(_))));
    }

    #[test]
    fn prony_two_real_exponentials() {
        let y = sig(0.05, 100, &[(c(2.0, 0.0), c(-1.0, 0.0)), (c(1.0, 0.0), c(-3.0, 0.0))]);
        let set = prony(&y, 0.05, 2).unwrap();
        let e = &set.entries;
        assert!((e[0].pole - c(-1.0, 0.0)).norm() < 1e-8);
        assert!((e[0].residue[0] - c(2.0, 0.0)).norm() < 1e-8);
        assert!((e[1].pole - c(-3.0, 0.0)).norm() < 1e-8);
        assert!((e[1].residue[0] - c(1.0, 0.0)).norm() < 1e-8);
        assert_eq!(set.roc_abscissa, 0.0);
    }

    #[test]
    fn prony_damped_cosine() {
        let dt = 0.1;
        let y: Vec<Complex64> = (0..200)
            .map(|k| {
                let t = k as f64 * dt;
                c((-0.301 * t).exp() * (0.995 * t).cos(), 0.0)
            })
            .collect();
        let set = prony(&y, dt, 2).unwrap();
        let poles = sorted(set.entries.iter().map(|e| e.pole).collect());
        assert!((poles[0] - c(-0.301, -0.995)).norm() < 1e-6);
        assert!((poles[1] - c(-0.301, 0.995)).norm() < 1e-6);
        assert!(set.is_conjugate_closed(1e-8));
    }

    #[test]
    fn prony_order_too_large() {
        let y = sig(0.1, 50, &[(c(1.0, 0.0), c(-1.0, 0.0))]);
        assert!(matches!(prony(&y, 0.1, 3), Err(Error::DegenerateFit(_))));
        assert!(matches!(prony(&y, 0.1, 30), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn prony_rejects_nyquist_root() {
        let y: Vec<Complex64> = (0..20).map(|k| c(if k % 2 == 0 { 1.0 } else { -1.0 }, 0.0)).collect();
        assert!(matches!(prony(&y, 0.1, 1), Err(Error::Aliasing(_))));
    }

    #[test]
    fn sweep_reports_stable_poles() {
        let y = sig(0.05, 200, &[(c(1.0, 0.0), c(-0.5, 0.0))]);
        let rows = prony_sweep(&y, 0.05, &[1, 2]);
        assert!(rows[0].error.is_none());
        assert!((rows[0].poles[0] - c(-0.5, 0.0)).norm() < 1e-10);
        assert!(rows[1].error.is_some());
    }

    #[test]
    fn fixed_pole_residues() {
        let dt = 0.01;
        let poles = [c(-0.3, 1.0), c(-0.3, -1.0), c(0.0, 0.0)];
        let y = sig(dt, 500, &[(c(0.5, 0.2), poles[0]), (c(0.5, -0.2), poles[1]), (c(1.5, 0.0), poles[2])]);
        let (r, _) = residues_at_poles(&Signal::scalar(dt, y).unwrap(), &poles).unwrap();
        assert!((r[0][0] - c(0.5, 0.2)).norm() < 1e-10);
        assert!((r[2][0] - c(1.5, 0.0)).norm() < 1e-10);
    }
}
