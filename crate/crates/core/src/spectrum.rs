//! Level structure of the undriven Hamiltonians on small excitation
//! manifolds.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{FockSpace, SparseComplexMatrix};
use crate::model::{self, ModelParams, Terms};

/// Largest norm of the part of `H|m⟩` outside the manifold that is still
/// treated as closed.
pub const LEAKAGE_TOLERANCE: f64 = 1e-10;

/// Nonlinear and hopping terms only: no drive and no detunings.
pub fn undriven_hamiltonian(
    params: &ModelParams,
    space: &FockSpace,
    two_cavity: bool,
) -> Result<SparseComplexMatrix> {
    if model::is_two_cavity(space)? != two_cavity {
        return Err(Error::InvalidSpace(format!(
            "a {}-mode space does not describe {}",
            space.num_modes(),
            if two_cavity {
                "two cavities"
            } else {
                "one cavity"
            }
        )));
    }
    model::assemble_hamiltonian(
        params,
        space,
        Terms {
            drive: false,
            detunings: false,
        },
    )
}

/// A set of Fock basis states, e.g. `{|2,0⟩, |0,1⟩}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifoldSpec {
    pub states: Vec<Vec<usize>>,
}

impl ManifoldSpec {
    pub fn new(states: Vec<Vec<usize>>) -> Self {
        Self { states }
    }

    /// Parse `"2,0;0,1"`.
    pub fn parse(text: &str) -> Result<Self> {
        let states = text
            .split(';')
            .map(|s| {
                s.split(',')
                    .map(|n| {
                        n.trim().parse::<usize>().map_err(|_| {
                            Error::InvalidParameter(format!(
                                "bad occupation {n:?} in manifold {text:?}"
                            ))
                        })
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { states })
    }

    fn indices(&self, space: &FockSpace) -> Result<Vec<usize>> {
        if self.states.is_empty() {
            return Err(Error::InvalidParameter("empty manifold".into()));
        }
        let idx = self
            .states
            .iter()
            .map(|s| space.index_of(s))
            .collect::<Result<Vec<_>>>()?;
        let mut sorted = idx.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != idx.len() {
            return Err(Error::InvalidParameter(
                "manifold lists a state twice".into(),
            ));
        }
        Ok(idx)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifoldEigensystem {
    /// Ascending.
    pub eigenvalues: Vec<f64>,
    /// Column `k` is the eigenvector of `eigenvalues[k]` in manifold order.
    pub eigenvectors: Vec<Vec<Complex64>>,
    pub leakage: f64,
}

/// Diagonalize `h` restricted to `manifold`, after checking that `h` maps the
/// manifold into itself.
pub fn manifold_eigensystem(
    h: &SparseComplexMatrix,
    space: &FockSpace,
    manifold: &ManifoldSpec,
) -> Result<ManifoldEigensystem> {
    let dim = space.total_dim();
    if h.nrows() != dim || h.ncols() != dim {
        return Err(Error::DimensionMismatch(format!(
            "operator is {}x{}, space has dimension {dim}",
            h.nrows(),
            h.ncols()
        )));
    }
    let idx = manifold.indices(space)?;
    let m = idx.len();
    let ht = h.transpose();
    let mut block = DMatrix::<Complex64>::zeros(m, m);
    let mut leakage = 0.0f64;
    for (j, &col) in idx.iter().enumerate() {
        // Row `col` of Hᵀ is column `col` of H.
        let mut outside = 0.0;
        for (row, v) in ht.row(col) {
            match idx.iter().position(|&r| r == row) {
                Some(i) => block[(i, j)] = v,
                None => outside += v.norm_sqr(),
            }
        }
        leakage = leakage.max(outside.sqrt());
    }
    if leakage >= LEAKAGE_TOLERANCE {
        return Err(Error::ManifoldNotInvariant { leakage });
    }
    let eig = block.symmetric_eigen();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    Ok(ManifoldEigensystem {
        eigenvalues: order.iter().map(|&k| eig.eigenvalues[k]).collect(),
        eigenvectors: order
            .iter()
            .map(|&k| eig.eigenvectors.column(k).iter().copied().collect())
            .collect(),
        leakage,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_cavity(chi: f64) -> (FockSpace, SparseComplexMatrix) {
        let space = FockSpace::new(&[5, 3]).unwrap();
        let p = ModelParams {
            chi,
            drive: 3.0,
            delta1a: 0.7,
            delta2: -0.4,
            ..ModelParams::default()
        };
        let h = undriven_hamiltonian(&p, &space, false).unwrap();
        (space, h)
    }

    fn m(text: &str) -> ManifoldSpec {
        ManifoldSpec::parse(text).unwrap()
    }

    #[test]
    fn zero_couplings_give_zero_matrix() {
        let space = FockSpace::new(&[3, 2, 3, 2]).unwrap();
        let p = ModelParams {
            drive: 1.0,
            delta1a: 1.0,
            ..ModelParams::default()
        };
        assert_eq!(undriven_hamiltonian(&p, &space, true).unwrap().nnz(), 0);
    }

    #[test]
    fn flag_must_match_space() {
        let space = FockSpace::new(&[3, 2]).unwrap();
        assert!(undriven_hamiltonian(&ModelParams::default(), &space, true).is_err());
    }

    #[test]
    fn two_photon_manifold_shift() {
        let (space, h) = one_cavity(0.8);
        assert!(h.is_hermitian(0.0));
        let es = manifold_eigensystem(&h, &space, &m("2,0;0,1")).unwrap();
        let s = 0.8 / 2f64.sqrt();
        assert!((es.eigenvalues[0] + s).abs() < 1e-10);
        assert!((es.eigenvalues[1] - s).abs() < 1e-10);
        assert!((s - 0.565_685_4).abs() < 1e-7);
    }

    #[test]
    fn three_photon_manifold_shift() {
        let (space, h) = one_cavity(1.3);
        let es = manifold_eigensystem(&h, &space, &m("3,0;1,1")).unwrap();
        let s = 1.5f64.sqrt() * 1.3;
        assert!((es.eigenvalues[0] + s).abs() < 1e-10);
        assert!((es.eigenvalues[1] - s).abs() < 1e-10);
    }

    #[test]
    fn single_photon_is_unshifted() {
        let (space, h) = one_cavity(2.0);
        let es = manifold_eigensystem(&h, &space, &m("1,0")).unwrap();
        assert_eq!(es.eigenvalues, vec![0.0]);
    }

    #[test]
    fn shifts_scale_linearly() {
        let (space, h1) = one_cavity(0.37);
        let (_, h2) = one_cavity(0.74);
        let a = manifold_eigensystem(&h1, &space, &m("2,0;0,1")).unwrap();
        let b = manifold_eigensystem(&h2, &space, &m("2,0;0,1")).unwrap();
        for (x, y) in a.eigenvalues.iter().zip(&b.eigenvalues) {
            assert!((2.0 * x - y).abs() < 1e-14);
        }
    }

    #[test]
    fn open_manifold_is_rejected() {
        let (space, h) = one_cavity(1.0);
        assert!(matches!(
            manifold_eigensystem(&h, &space, &m("2,0")),
            Err(Error::ManifoldNotInvariant { .. })
        ));
    }

    #[test]
    fn manifold_outside_space_is_rejected() {
        let (space, h) = one_cavity(1.0);
        assert!(manifold_eigensystem(&h, &space, &m("5,0")).is_err());
        assert!(manifold_eigensystem(&h, &space, &m("1,0;1,0")).is_err());
        assert!(manifold_eigensystem(&h, &space, &ManifoldSpec::new(vec![])).is_err());
    }

    #[test]
    fn hopping_splits_single_excitation_manifold() {
        let space = FockSpace::new(&[3, 2, 3, 2]).unwrap();
        let p = ModelParams {
            chi: 5.0,
            v1: 0.2,
            v2: 0.1,
            ..ModelParams::default()
        };
        let h = undriven_hamiltonian(&p, &space, true).unwrap();
        let es = manifold_eigensystem(&h, &space, &m("1,0,0,0;0,0,1,0")).unwrap();
        assert!((es.eigenvalues[0] + 0.2).abs() < 1e-12);
        assert!((es.eigenvalues[1] - 0.2).abs() < 1e-12);
        let r = 0.5f64.sqrt();
        let minus = &es.eigenvectors[0];
        let plus = &es.eigenvectors[1];
        // Fix the global phase so the first component is positive real.
        let norm = |v: &[Complex64]| {
            let ph = v[0] / v[0].norm();
            v.iter().map(|z| z / ph).collect::<Vec<_>>()
        };
        let (minus, plus) = (norm(minus), norm(plus));
        assert!((minus[0].re - r).abs() < 1e-12 && (minus[1].re + r).abs() < 1e-12);
        assert!((plus[0].re - r).abs() < 1e-12 && (plus[1].re - r).abs() < 1e-12);
        assert!(minus[1].im.abs() < 1e-12 && plus[1].im.abs() < 1e-12);
    }
}
