//! Small dense complex linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector, SVD};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

pub(crate) fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// Eigenvalues and unit-norm right eigenvectors of a general complex matrix.
///
/// Uses the complex Schur form `A = Q T Q*` and back-substitution on `T`.
pub fn eig(a: &CMatrix) -> Result<(Vec<Complex64>, CMatrix)> {
    let n = a.nrows();
    if n != a.ncols() {
        return Err(Error::InvalidInput("eig needs a square matrix".into()));
    }
    if n == 0 {
        return Ok((Vec::new(), CMatrix::zeros(0, 0)));
    }
    let schur = nalgebra::Schur::try_new(a.clone(), f64::EPSILON, 10_000)
        .ok_or_else(|| Error::Numeric("Schur decomposition did not converge".into()))?;
    let (q, t) = schur.unpack();
    let scale = t.iter().map(|z| z.norm()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let small = f64::EPSILON * scale;
    let mut vals = Vec::with_capacity(n);
    let mut vecs = CMatrix::zeros(n, n);
    for k in 0..n {
        let lambda = t[(k, k)];
        vals.push(lambda);
        let mut y = CVector::zeros(n);
        y[k] = c(1.0, 0.0);
        for j in (0..k).rev() {
            let mut acc = c(0.0, 0.0);
            for l in j + 1..=k {
                acc += t[(j, l)] * y[l];
            }
            let mut denom = t[(j, j)] - lambda;
            if denom.norm() < small {
                denom = c(small, 0.0);
            }
            y[j] = -acc / denom;
        }
        let v = &q * y;
        let norm = v.norm();
        vecs.set_column(k, &(v / c(norm, 0.0)));
    }
    Ok((vals, vecs))
}

/// Eigenvalues of a real square matrix.
pub fn eigvals_real(a: &DMatrix<f64>) -> Result<Vec<Complex64>> {
    let cm = a.map(|v| c(v, 0.0));
    let schur = nalgebra::Schur::try_new(cm, f64::EPSILON, 10_000)
        .ok_or_else(|| Error::Numeric("Schur decomposition did not converge".into()))?;
    let (_, t) = schur.unpack();
    Ok((0..t.nrows()).map(|k| t[(k, k)]).collect())
}

/// Least-squares solution of `A x ≈ b` via a truncated SVD.
///
/// Returns the solution and the 2-norm condition number of `A` restricted to
/// the retained singular values.
pub fn lstsq(a: &CMatrix, b: &CMatrix, rcond: f64) -> Result<(CMatrix, f64)> {
    let svd = SVD::new(a.clone(), true, true);
    let smax = svd.singular_values.iter().copied().fold(0.0, f64::max);
    if smax == 0.0 {
        return Err(Error::Singular("least-squares matrix is zero".into()));
    }
    let cutoff = rcond * smax;
    let smin = svd
        .singular_values
        .iter()
        .copied()
        .filter(|&s| s > cutoff)
        .fold(f64::INFINITY, f64::min);
    let x = svd
        .solve(b, cutoff)
        .map_err(|e| Error::Numeric(format!("SVD solve failed: {e}")))?;
    Ok((x, smax / smin))
}

/// Roots of the monic polynomial `z^p + a[0] z^{p-1} + … + a[p-1]`.
///
/// Companion-matrix eigenvalues refined by a few Newton steps.
pub fn monic_roots(a: &[Complex64]) -> Result<Vec<Complex64>> {
    let p = a.len();
    if p == 0 {
        return Ok(Vec::new());
    }
    let mut comp = CMatrix::zeros(p, p);
    for j in 0..p {
        comp[(0, j)] = -a[j];
    }
    for i in 1..p {
        comp[(i, i - 1)] = c(1.0, 0.0);
    }
    let schur = nalgebra::Schur::try_new(comp, f64::EPSILON, 10_000)
        .ok_or_else(|| Error::Numeric("companion matrix eigenvalues did not converge".into()))?;
    let (_, t) = schur.unpack();
    let mut roots: Vec<Complex64> = (0..p).map(|k| t[(k, k)]).collect();
    for z in roots.iter_mut() {
        for _ in 0..3 {
            // Horner for value and derivative.
            let mut val = c(1.0, 0.0);
            let mut der = c(0.0, 0.0);
            for &coef in a {
                der = der * *z + val;
                val = val * *z + coef;
            }
            if der.norm() == 0.0 {
                break;
            }
            let step = val / der;
            if !step.re.is_finite() || !step.im.is_finite() {
                break;
            }
            let cand = *z - step;
            if poly_abs(a, cand) <= poly_abs(a, *z) {
                *z = cand;
            } else {
                break;
            }
        }
    }
    Ok(roots)
}

fn poly_abs(a: &[Complex64], z: Complex64) -> f64 {
    a.iter().fold(c(1.0, 0.0), |acc, &coef| acc * z + coef).norm()
}

/// Solves `A x = b` for square complex `A` by LU; errors when singular.
pub fn solve(a: &CMatrix, b: &CVector) -> Result<CVector> {
    let lu = a.clone().lu();
    let x = lu.solve(b).ok_or_else(|| Error::Singular("matrix is singular".into()))?;
    if x.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::Singular("matrix is numerically singular".into()));
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eigenpairs_satisfy_definition() {
        let a = CMatrix::from_row_slice(
            3,
            3,
            &[c(1.0, 0.5), c(2.0, 0.0), c(0.0, 1.0), c(0.0, 0.0), c(-1.0, 0.0), c(3.0, -1.0), c(0.5, 0.0), c(0.0, 0.0), c(2.0, 2.0)],
        );
        let (vals, vecs) = eig(&a).unwrap();
        for (k, &val) in vals.iter().enumerate() {
            let v = vecs.column(k);
            let r = &a * v - v * val;
            assert!(r.norm() < 1e-12, "residual {}", r.norm());
        }
    }

    #[test]
    fn roots_of_known_polynomial() {
        // (z - 1)(z + 2)(z - i) = z^3 + (1 - i) z^2 + (-2 - i) z + 2i
        let a = [c(1.0, -1.0), c(-2.0, -1.0), c(0.0, 2.0)];
        let mut r = monic_roots(&a).unwrap();
        r.sort_by(|x, y| x.re.partial_cmp(&y.re).unwrap().then(x.im.partial_cmp(&y.im).unwrap()));
        let expected = [c(-2.0, 0.0), c(0.0, 1.0), c(1.0, 0.0)];
        for (x, y) in r.iter().zip(expected) {
            assert!((x - y).norm() < 1e-13, "{x} vs {y}");
        }
    }

    #[test]
    fn lstsq_recovers_exact_solution() {
        let a = CMatrix::from_fn(6, 2, |i, j| c((i + 1) as f64, 0.0).powi(j as i32));
        let x = CMatrix::from_column_slice(2, 1, &[c(0.5, 0.0), c(-1.0, 2.0)]);
        let b = &a * &x;
        let (sol, cond) = lstsq(&a, &b, 1e-14).unwrap();
        assert!((sol - x).norm() < 1e-12);
        assert!(cond > 1.0);
    }

    #[test]
    fn singular_solve_is_reported() {
        let a = CMatrix::from_row_slice(2, 2, &[c(1.0, 0.0), c(2.0, 0.0), c(2.0, 0.0), c(4.0, 0.0)]);
        assert!(solve(&a, &CVector::from_vec(vec![c(1.0, 0.0), c(0.0, 0.0)])).is_err());
    }
}
