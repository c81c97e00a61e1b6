//! Restarted GMRES with an incomplete-LU preconditioner, used for
//! Liouvillians too large to factor directly.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::SparseComplexMatrix;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GmresOptions {
    pub restart: usize,
    pub max_iterations: usize,
    /// Target `‖b − A x‖₂ / ‖b‖₂`.
    pub tolerance: f64,
}

impl Default for GmresOptions {
    fn default() -> Self {
        Self {
            restart: 60,
            max_iterations: 20_000,
            tolerance: 1e-11,
        }
    }
}

/// Zero-fill incomplete LU factorization sharing the sparsity pattern of A.
#[derive(Debug, Clone)]
pub struct Ilu0 {
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<Complex64>,
    diag: Vec<usize>,
}

impl Ilu0 {
    pub fn new(a: &SparseComplexMatrix) -> Result<Self> {
        let n = a.nrows();
        let row_ptr = a.row_ptr().to_vec();
        let col_idx = a.col_indices().to_vec();
        let mut values = a.values().to_vec();
        let mut diag = vec![usize::MAX; n];
        for r in 0..n {
            if let Ok(k) = col_idx[row_ptr[r]..row_ptr[r + 1]].binary_search(&r) {
                diag[r] = row_ptr[r] + k;
            }
        }
        if let Some(r) = diag.iter().position(|&d| d == usize::MAX) {
            return Err(Error::SolverFailure {
                reason: format!("ILU(0) needs a stored diagonal; row {r} has none"),
                residual: f64::NAN,
            });
        }
        for i in 0..n {
            let span = row_ptr[i]..row_ptr[i + 1];
            for kk in span.clone() {
                let k = col_idx[kk];
                if k >= i {
                    break;
                }
                let pivot = values[diag[k]];
                if pivot.norm() == 0.0 {
                    return Err(Error::SolverFailure {
                        reason: format!("zero pivot in ILU(0) at row {k}"),
                        residual: f64::NAN,
                    });
                }
                let lik = values[kk] / pivot;
                values[kk] = lik;
                let krow = &col_idx[row_ptr[k]..row_ptr[k + 1]];
                for jj in kk + 1..span.end {
                    let j = col_idx[jj];
                    if let Ok(pos) = krow.binary_search(&j) {
                        let ukj = values[row_ptr[k] + pos];
                        values[jj] -= lik * ukj;
                    }
                }
            }
        }
        Ok(Self {
            row_ptr,
            col_idx,
            values,
            diag,
        })
    }

    /// Solve `L U z = r` in place.
    pub fn apply(&self, z: &mut [Complex64]) {
        let n = z.len();
        for i in 0..n {
            let mut s = z[i];
            for k in self.row_ptr[i]..self.diag[i] {
                s -= self.values[k] * z[self.col_idx[k]];
            }
            z[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = z[i];
            for k in self.diag[i] + 1..self.row_ptr[i + 1] {
                s -= self.values[k] * z[self.col_idx[k]];
            }
            z[i] = s / self.values[self.diag[i]];
        }
    }
}

#[derive(Debug, Clone)]
pub struct GmresOutcome {
    pub solution: Vec<Complex64>,
    pub iterations: usize,
    pub relative_residual: f64,
}

fn norm2(v: &[Complex64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

fn dot(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

/// Right-preconditioned restarted GMRES with ILU(0).
pub fn solve_preconditioned(
    a: &SparseComplexMatrix,
    b: &[Complex64],
    opts: &GmresOptions,
) -> Result<GmresOutcome> {
    let ilu = Ilu0::new(a)?;
    gmres(a, b, |v| ilu.apply(v), opts)
}

pub fn gmres<P>(
    a: &SparseComplexMatrix,
    b: &[Complex64],
    precondition: P,
    opts: &GmresOptions,
) -> Result<GmresOutcome>
where
    P: Fn(&mut [Complex64]),
{
    let n = b.len();
    let zero = Complex64::new(0.0, 0.0);
    let m = opts.restart.max(1);
    let b_norm = norm2(b).max(f64::MIN_POSITIVE);
    let mut x = vec![zero; n];
    let mut iterations = 0;
    let mut work = vec![zero; n];
    let mut rel = 1.0;

    while iterations < opts.max_iterations {
        a.mul_vec_into(&x, &mut work);
        let r: Vec<Complex64> = b.iter().zip(&work).map(|(bi, ai)| bi - ai).collect();
        let beta = norm2(&r);
        rel = beta / b_norm;
        if rel <= opts.tolerance {
            break;
        }
        let mut basis: Vec<Vec<Complex64>> = vec![r.iter().map(|z| z / beta).collect()];
        let mut h = vec![vec![zero; m]; m + 1];
        let mut cs = vec![0.0f64; m];
        let mut sn = vec![zero; m];
        let mut g = vec![zero; m + 1];
        g[0] = Complex64::new(beta, 0.0);
        let mut steps = 0;

        for j in 0..m {
            let mut z = basis[j].clone();
            precondition(&mut z);
            let mut w = vec![zero; n];
            a.mul_vec_into(&z, &mut w);
            for (i, v) in basis.iter().enumerate() {
                let hij = dot(v, &w);
                h[i][j] = hij;
                w.iter_mut().zip(v).for_each(|(wk, vk)| *wk -= hij * vk);
            }
            let hnext = norm2(&w);
            h[j + 1][j] = Complex64::new(hnext, 0.0);

            for i in 0..j {
                let t = h[i][j] * cs[i] + sn[i] * h[i + 1][j];
                h[i + 1][j] = -sn[i].conj() * h[i][j] + h[i + 1][j] * cs[i];
                h[i][j] = t;
            }
            let (h1, h2) = (h[j][j], h[j + 1][j]);
            let rho = (h1.norm_sqr() + h2.norm_sqr()).sqrt();
            if rho == 0.0 {
                cs[j] = 1.0;
                sn[j] = zero;
            } else if h1.norm() == 0.0 {
                cs[j] = 0.0;
                sn[j] = Complex64::new(1.0, 0.0);
            } else {
                let phase = h1 / h1.norm();
                cs[j] = h1.norm() / rho;
                sn[j] = phase * h2.conj() / rho;
            }
            h[j][j] = h1 * cs[j] + sn[j] * h2;
            h[j + 1][j] = zero;
            g[j + 1] = -sn[j].conj() * g[j];
            g[j] *= cs[j];

            iterations += 1;
            steps = j + 1;
            rel = g[j + 1].norm() / b_norm;
            if rel <= opts.tolerance || hnext == 0.0 || iterations >= opts.max_iterations {
                break;
            }
            basis.push(w.iter().map(|z| z / hnext).collect());
        }

        // Back substitution for the Krylov coefficients.
        let mut y = vec![zero; steps];
        for i in (0..steps).rev() {
            let mut s = g[i];
            for k in i + 1..steps {
                s -= h[i][k] * y[k];
            }
            y[i] = s / h[i][i];
        }
        let mut update = vec![zero; n];
        for (yi, v) in y.iter().zip(&basis) {
            update.iter_mut().zip(v).for_each(|(u, vk)| *u += yi * vk);
        }
        precondition(&mut update);
        x.iter_mut().zip(&update).for_each(|(xi, u)| *xi += u);
    }

    a.mul_vec_into(&x, &mut work);
    let true_rel = norm2(
        &b.iter()
            .zip(&work)
            .map(|(bi, ai)| bi - ai)
            .collect::<Vec<_>>(),
    ) / b_norm;
    if true_rel > opts.tolerance.max(rel) * 10.0 {
        return Err(Error::NotConverged {
            iterations,
            residual: true_rel,
        });
    }
    Ok(GmresOutcome {
        solution: x,
        iterations,
        relative_residual: true_rel,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn test_matrix(n: usize) -> SparseComplexMatrix {
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, c(4.0 + i as f64 * 0.1, 0.5)));
            if i + 1 < n {
                t.push((i, i + 1, c(-1.0, 0.3)));
                t.push((i + 1, i, c(-0.7, -0.2)));
            }
            if i + 5 < n {
                t.push((i, i + 5, c(0.2, 0.0)));
            }
        }
        SparseComplexMatrix::from_triplets(n, n, t).unwrap()
    }

    #[test]
    fn ilu0_is_exact_for_tridiagonal() {
        let n = 30;
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, c(3.0, 0.1)));
            if i + 1 < n {
                t.push((i, i + 1, c(-1.0, 0.0)));
                t.push((i + 1, i, c(-1.0, 0.2)));
            }
        }
        let a = SparseComplexMatrix::from_triplets(n, n, t).unwrap();
        let ilu = Ilu0::new(&a).unwrap();
        let b: Vec<Complex64> = (0..n).map(|i| c(i as f64, 1.0)).collect();
        let mut x = b.clone();
        ilu.apply(&mut x);
        let ax = a.mul_vec(&x).unwrap();
        for (u, v) in ax.iter().zip(&b) {
            assert!((u - v).norm() < 1e-12);
        }
    }

    #[test]
    fn gmres_solves_nonsymmetric_system() {
        let a = test_matrix(200);
        let b: Vec<Complex64> = (0..200).map(|i| c((i as f64).sin(), 0.5)).collect();
        let opts = GmresOptions::default();
        let out = solve_preconditioned(&a, &b, &opts).unwrap();
        assert!(out.relative_residual <= opts.tolerance);
        let unpre = gmres(&a, &b, |_| {}, &GmresOptions::default()).unwrap();
        assert!(out.iterations <= unpre.iterations);
    }

    #[test]
    fn missing_diagonal_is_reported() {
        let a = SparseComplexMatrix::from_triplets(
            2,
            2,
            vec![(0, 1, c(1.0, 0.0)), (1, 0, c(1.0, 0.0))],
        )
        .unwrap();
        assert!(Ilu0::new(&a).is_err());
    }
}
