//! Steady state of the Lindblad equation and equal-time photon correlations.
//!
//! The null vector of `L` is found by replacing one population row of the
//! superoperator with the trace functional `vec(I)†` and solving against a
//! unit right-hand side.

use faer::prelude::Solve;
use faer::sparse::{SparseColMat, Triplet};
use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{FockSpace, SparseComplexMatrix};
use crate::krylov::{self, GmresOptions};
use crate::model::{self, Mode, ModelParams};

/// Top-level population above which a result is flagged truncation-suspect.
pub const DEFAULT_TAIL_TOLERANCE: f64 = 1e-6;
/// Smallest mode population for which g₂ is considered defined.
pub const DEFAULT_G2_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveMethod {
    /// Direct below `iterative_threshold`, GMRES above.
    Auto,
    Direct,
    Iterative,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveOptions {
    pub method: SolveMethod,
    /// `D²` above which `Auto` switches to the iterative solver.
    pub iterative_threshold: usize,
    /// Population row (index `i + D*i`) replaced by the trace row. `None`
    /// picks the population row with the smallest diagonal magnitude.
    pub replaced_row: Option<usize>,
    /// Accepted `‖L vec ρ‖∞ / ‖L‖∞`.
    pub residual_tolerance: f64,
    /// Largest `D` for which the minimum eigenvalue of ρ is computed.
    pub eigen_check_max_dim: usize,
    pub gmres: GmresOptions,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            method: SolveMethod::Auto,
            iterative_threshold: 16_384,
            replaced_row: None,
            residual_tolerance: 1e-10,
            eigen_check_max_dim: 400,
            gmres: GmresOptions::default(),
        }
    }
}

/// Numerical health of a solve. Nothing here is applied to expectation
/// values; it is reported only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveDiagnostics {
    pub method: SolveMethod,
    pub replaced_row: usize,
    /// `‖L vec ρ‖∞` before Hermitization.
    pub residual: f64,
    pub liouvillian_norm: f64,
    /// Largest `|ρ − ρ†|` entry before Hermitization.
    pub hermiticity_defect: f64,
    pub min_eigenvalue: Option<f64>,
    pub iterations: usize,
}

impl SolveDiagnostics {
    pub fn relative_residual(&self) -> f64 {
        self.residual / self.liouvillian_norm.max(f64::MIN_POSITIVE)
    }

    /// Whether ρ has an eigenvalue below `−1e-8`.
    pub fn negative_eigenvalue(&self) -> bool {
        self.min_eigenvalue.is_some_and(|e| e < -1e-8)
    }
}

/// A density matrix on a Fock space.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    space: FockSpace,
    data: DMatrix<Complex64>,
    diagnostics: Option<SolveDiagnostics>,
}

impl DensityMatrix {
    pub fn from_dense(space: &FockSpace, data: DMatrix<Complex64>) -> Result<Self> {
        let d = space.total_dim();
        if data.nrows() != d || data.ncols() != d {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} matrix on a space of dimension {d}",
                data.nrows(),
                data.ncols()
            )));
        }
        Ok(Self {
            space: space.clone(),
            data,
            diagnostics: None,
        })
    }

    /// `|ψ⟩⟨ψ|` for a (normalized) state vector.
    pub fn from_pure(space: &FockSpace, psi: &[Complex64]) -> Result<Self> {
        let v = nalgebra::DVector::from_column_slice(psi);
        Self::from_dense(space, &v * v.adjoint())
    }

    pub fn vacuum(space: &FockSpace) -> Self {
        let mut data = DMatrix::zeros(space.total_dim(), space.total_dim());
        data[(0, 0)] = Complex64::new(1.0, 0.0);
        Self {
            space: space.clone(),
            data,
            diagnostics: None,
        }
    }

    pub fn space(&self) -> &FockSpace {
        &self.space
    }

    pub fn dim(&self) -> usize {
        self.space.total_dim()
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.data
    }

    pub fn diagnostics(&self) -> Option<&SolveDiagnostics> {
        self.diagnostics.as_ref()
    }

    pub fn trace(&self) -> Complex64 {
        self.data.trace()
    }

    pub fn expectation(&self, op: &SparseComplexMatrix) -> Result<Complex64> {
        expectation(self, op)
    }

    /// `⟨n⟩` of one mode.
    pub fn population(&self, mode: usize) -> Result<f64> {
        if mode >= self.space.num_modes() {
            return Err(Error::InvalidMode {
                mode,
                modes: self.space.num_modes(),
            });
        }
        Ok((0..self.dim())
            .map(|i| self.data[(i, i)].re * self.space.occupation(i, mode) as f64)
            .sum())
    }

    /// Probability of finding `mode` in its highest kept Fock level.
    pub fn top_level_population(&self, mode: usize) -> f64 {
        let top = self.space.dims()[mode] - 1;
        (0..self.dim())
            .filter(|&i| self.space.occupation(i, mode) == top)
            .map(|i| self.data[(i, i)].re)
            .sum()
    }

    pub fn max_top_level_population(&self) -> f64 {
        (0..self.space.num_modes())
            .map(|m| self.top_level_population(m))
            .fold(0.0, f64::max)
    }

    /// Whether any mode keeps more than `tol` population in its top level.
    pub fn truncation_suspect(&self, tol: f64) -> bool {
        self.max_top_level_population() > tol
    }

    pub fn g2(&self, mode_a: usize, mode_b: usize) -> Result<G2Result> {
        g2_equal_time(self, mode_a, mode_b)
    }

    pub fn max_hermiticity_defect(&self) -> f64 {
        (&self.data - self.data.adjoint()).camax()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.data
            .clone()
            .symmetric_eigenvalues()
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }

    /// `ρ_A ⊗ ρ_B` on the concatenated space.
    pub fn tensor(&self, other: &DensityMatrix) -> Result<DensityMatrix> {
        let dims: Vec<usize> = self
            .space
            .dims()
            .iter()
            .chain(other.space.dims())
            .copied()
            .collect();
        let space = FockSpace::new(&dims)?;
        DensityMatrix::from_dense(&space, self.data.kronecker(&other.data))
    }
}

/// An equal-time second-order correlation `⟨n_A n_B⟩ / (⟨n_A⟩⟨n_B⟩)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct G2Result {
    pub value: f64,
    pub numerator: f64,
    pub mean_a: f64,
    pub mean_b: f64,
    pub statistical_error: f64,
}

impl G2Result {
    pub fn from_moments(numerator: f64, mean_a: f64, mean_b: f64, floor: f64) -> Result<Self> {
        if mean_a < floor || mean_b < floor {
            return Err(Error::UndefinedCorrelation(format!(
                "mode populations {mean_a:e}, {mean_b:e} below floor {floor:e}"
            )));
        }
        Ok(Self {
            value: numerator / (mean_a * mean_b),
            numerator,
            mean_a,
            mean_b,
            statistical_error: 0.0,
        })
    }
}

/// `tr(ρ · op)`.
pub fn expectation(rho: &DensityMatrix, op: &SparseComplexMatrix) -> Result<Complex64> {
    let d = rho.dim();
    if op.nrows() != d || op.ncols() != d {
        return Err(Error::DimensionMismatch(format!(
            "operator {}x{} on a state of dimension {d}",
            op.nrows(),
            op.ncols()
        )));
    }
    Ok(op.iter().map(|(i, j, v)| v * rho.data[(j, i)]).sum())
}

pub fn g2_equal_time(rho: &DensityMatrix, mode_a: usize, mode_b: usize) -> Result<G2Result> {
    g2_equal_time_with_floor(rho, mode_a, mode_b, DEFAULT_G2_FLOOR)
}

pub fn g2_equal_time_with_floor(
    rho: &DensityMatrix,
    mode_a: usize,
    mode_b: usize,
    floor: f64,
) -> Result<G2Result> {
    let space = rho.space();
    let na = space.number(mode_a)?;
    let nb = space.number(mode_b)?;
    let joint = na.matmul(&nb)?;
    let numerator = expectation(rho, &joint)?.re;
    let mean_a = expectation(rho, &na)?.re;
    let mean_b = expectation(rho, &nb)?.re;
    G2Result::from_moments(numerator, mean_a, mean_b, floor)
}

fn default_replaced_row(l: &SparseComplexMatrix, d: usize) -> usize {
    (0..d)
        .map(|i| i + d * i)
        .map(|r| (r, l.get(r, r).norm()))
        .fold(
            (0, f64::INFINITY),
            |best, cur| if cur.1 < best.1 { cur } else { best },
        )
        .0
}

/// Liouvillian with row `replaced` swapped for the trace functional.
fn bordered_system(l: &SparseComplexMatrix, d: usize, replaced: usize) -> SparseComplexMatrix {
    let one = Complex64::new(1.0, 0.0);
    let triplets = l
        .iter()
        .filter(|&(r, _, _)| r != replaced)
        .chain((0..d).map(|i| (replaced, i + d * i, one)));
    SparseComplexMatrix::from_triplets(l.nrows(), l.ncols(), triplets)
        .expect("bordered system keeps the Liouvillian shape")
}

fn direct_solve(a: &SparseComplexMatrix, rhs: &[Complex64]) -> Result<Vec<Complex64>> {
    let n = a.nrows();
    let triplets: Vec<Triplet<usize, usize, Complex64>> =
        a.iter().map(|(r, c, v)| Triplet::new(r, c, v)).collect();
    let mat =
        SparseColMat::<usize, Complex64>::try_new_from_triplets(n, n, &triplets).map_err(|e| {
            Error::SolverFailure {
                reason: format!("sparse assembly: {e:?}"),
                residual: f64::NAN,
            }
        })?;
    let lu = mat.sp_lu().map_err(|e| Error::SolverFailure {
        reason: format!("sparse LU: {e:?}"),
        residual: f64::NAN,
    })?;
    let b = faer::Col::<Complex64>::from_fn(n, |i| rhs[i]);
    let x = lu.solve(&b);
    Ok((0..n).map(|i| x[i]).collect())
}

/// Steady state with default options.
pub fn solve_steady_state(l: &SparseComplexMatrix, space: &FockSpace) -> Result<DensityMatrix> {
    solve_steady_state_with(l, space, &SolveOptions::default())
}

pub fn solve_steady_state_with(
    l: &SparseComplexMatrix,
    space: &FockSpace,
    opts: &SolveOptions,
) -> Result<DensityMatrix> {
    let d = space.total_dim();
    let n = d * d;
    if l.nrows() != n || l.ncols() != n {
        return Err(Error::DimensionMismatch(format!(
            "Liouvillian {}x{} does not match a space of dimension {d}",
            l.nrows(),
            l.ncols()
        )));
    }
    let replaced = match opts.replaced_row {
        Some(r) if r < n && r % (d + 1) == 0 => r,
        Some(r) => {
            return Err(Error::InvalidParameter(format!(
                "row {r} is not a population row of a {d}-dimensional space"
            )))
        }
        None => default_replaced_row(l, d),
    };
    let a = bordered_system(l, d, replaced);
    let mut rhs = vec![Complex64::new(0.0, 0.0); n];
    rhs[replaced] = Complex64::new(1.0, 0.0);

    let method = match opts.method {
        SolveMethod::Auto if n > opts.iterative_threshold => SolveMethod::Iterative,
        SolveMethod::Auto => SolveMethod::Direct,
        m => m,
    };
    let (x, iterations) = match method {
        SolveMethod::Iterative => {
            let out = krylov::solve_preconditioned(&a, &rhs, &opts.gmres)?;
            (out.solution, out.iterations)
        }
        _ => (direct_solve(&a, &rhs)?, 0),
    };

    let lx = l.mul_vec(&x)?;
    let residual = lx.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let liouvillian_norm = l.norm_inf();
    if !(residual <= opts.residual_tolerance * liouvillian_norm) {
        return Err(Error::SolverFailure {
            reason: format!(
                "residual above {:e} relative to ‖L‖∞ = {liouvillian_norm:e}",
                opts.residual_tolerance
            ),
            residual,
        });
    }

    let raw = DMatrix::from_column_slice(d, d, &x);
    let trace = raw.trace();
    let raw = raw / trace;
    let hermiticity_defect = (&raw - raw.adjoint()).camax();
    let data = (&raw + raw.adjoint()) * Complex64::new(0.5, 0.0);
    let min_eigenvalue = (d <= opts.eigen_check_max_dim).then(|| {
        data.clone()
            .symmetric_eigenvalues()
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    });

    Ok(DensityMatrix {
        space: space.clone(),
        data,
        diagnostics: Some(SolveDiagnostics {
            method,
            replaced_row: replaced,
            residual,
            liouvillian_norm,
            hermiticity_defect,
            min_eigenvalue,
            iterations,
        }),
    })
}

/// Build the Liouvillian for `params` on `space` and solve for its steady state.
pub fn steady_state(params: &ModelParams, space: &FockSpace) -> Result<DensityMatrix> {
    steady_state_with(params, space, &SolveOptions::default())
}

pub fn steady_state_with(
    params: &ModelParams,
    space: &FockSpace,
    opts: &SolveOptions,
) -> Result<DensityMatrix> {
    let l = model::liouvillian(params, space)?;
    solve_steady_state_with(&l, space, opts)
}

/// Policy for choosing per-mode truncations automatically.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TruncationPolicy {
    /// Accepted change of every g₂ under doubling all dims.
    pub g2_tolerance: f64,
    pub max_doublings: usize,
    /// Largest Hilbert dimension `D` the loop may try.
    pub max_dim: usize,
}

impl Default for TruncationPolicy {
    fn default() -> Self {
        Self {
            g2_tolerance: 1e-3,
            max_doublings: 3,
            max_dim: 1296,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ConvergedSteadyState {
    pub rho: DensityMatrix,
    pub dims: Vec<usize>,
    /// g₂ values for every requested pair at `dims`.
    pub g2: Vec<G2Result>,
    /// Largest |Δg₂| seen against the doubled truncation.
    pub doubling_change: f64,
    pub converged: bool,
}

fn solve_pairs(
    params: &ModelParams,
    dims: &[usize],
    pairs: &[(Mode, Mode)],
    opts: &SolveOptions,
) -> Result<(DensityMatrix, Vec<G2Result>)> {
    let space = FockSpace::new(dims)?;
    let rho = steady_state_with(params, &space, opts)?;
    let g2 = pairs
        .iter()
        .map(|&(a, b)| rho.g2(a.index(), b.index()))
        .collect::<Result<Vec<_>>>()?;
    Ok((rho, g2))
}

/// Find the smallest truncation (by doubling from `start_dims`) whose g₂
/// values move by less than the tolerance when every dim is doubled again.
pub fn converge_truncation(
    params: &ModelParams,
    start_dims: &[usize],
    pairs: &[(Mode, Mode)],
    policy: &TruncationPolicy,
    opts: &SolveOptions,
) -> Result<ConvergedSteadyState> {
    let mut dims = start_dims.to_vec();
    let (mut rho, mut g2) = solve_pairs(params, &dims, pairs, opts)?;
    let mut last_change = f64::INFINITY;
    for _ in 0..policy.max_doublings {
        let doubled: Vec<usize> = dims.iter().map(|d| 2 * d).collect();
        if doubled.iter().product::<usize>() > policy.max_dim {
            break;
        }
        let (rho2, g2b) = solve_pairs(params, &doubled, pairs, opts)?;
        last_change = g2
            .iter()
            .zip(&g2b)
            .map(|(a, b)| (a.value - b.value).abs())
            .fold(0.0, f64::max);
        if last_change < policy.g2_tolerance {
            return Ok(ConvergedSteadyState {
                rho,
                dims,
                g2,
                doubling_change: last_change,
                converged: true,
            });
        }
        dims = doubled;
        rho = rho2;
        g2 = g2b;
    }
    Ok(ConvergedSteadyState {
        rho,
        dims,
        g2,
        doubling_change: last_change,
        converged: false,
    })
}
