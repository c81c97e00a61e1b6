//! Driven second-harmonic-generation cavities: Hamiltonian, jump operators
//! and the Lindblad superoperator.
//!
//! Superoperators act on column-stacked density matrices: `vec(ρ)[i + D*j] =
//! ρ[i, j]`, so that `vec(A ρ B) = (Bᵀ ⊗ A) vec(ρ)`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{FockSpace, SparseComplexMatrix};

/// Default cap on the Liouvillian dimension `D²`.
pub const DEFAULT_LIOUVILLIAN_CAP: usize = 4_000_000;

/// Cavity modes in global order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    A1,
    A2,
    B1,
    B2,
}

impl Mode {
    pub const ALL: [Mode; 4] = [Mode::A1, Mode::A2, Mode::B1, Mode::B2];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Mode::A1 => "a1",
            Mode::A2 => "a2",
            Mode::B1 => "b1",
            Mode::B2 => "b2",
        }
    }

    pub fn from_name(name: &str) -> Option<Mode> {
        Mode::ALL.into_iter().find(|m| m.name() == name)
    }
}

/// Physical parameters, all rates in units of `kappa1`.
/// Missing fields take their [`Default`] values; unknown fields are rejected.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelParams {
    /// Laser drive amplitude `E`.
    pub drive: f64,
    /// Second-order susceptibility `χ`.
    pub chi: f64,
    pub kappa1: f64,
    pub kappa2: f64,
    /// Fundamental-mode detuning of cavity a.
    pub delta1a: f64,
    /// Fundamental-mode detuning of cavity b.
    pub delta1b: f64,
    /// Second-harmonic detuning (both cavities).
    pub delta2: f64,
    /// Hopping between fundamental modes.
    pub v1: f64,
    /// Hopping between second-harmonic modes.
    pub v2: f64,
}

impl Default for ModelParams {
    fn default() -> Self {
        Self {
            drive: 0.0,
            chi: 0.0,
            kappa1: 1.0,
            kappa2: 0.5,
            delta1a: 0.0,
            delta1b: 0.0,
            delta2: 0.0,
            v1: 0.0,
            v2: 0.0,
        }
    }
}

impl ModelParams {
    /// Identical cavities with the given fundamental and harmonic detunings.
    pub fn identical(drive: f64, chi: f64, kappa2: f64, delta1: f64, delta2: f64) -> Self {
        Self {
            drive,
            chi,
            kappa2,
            delta1a: delta1,
            delta1b: delta1,
            delta2,
            ..Self::default()
        }
    }

    pub fn with_coupling(mut self, v1: f64, v2: f64) -> Self {
        self.v1 = v1;
        self.v2 = v2;
        self
    }

    /// Mean fundamental detuning `(Δ₁ᵃ + Δ₁ᵇ)/2`.
    pub fn delta1_mean(&self) -> f64 {
        0.5 * (self.delta1a + self.delta1b)
    }

    /// Detuning mismatch `δ = Δ₁ᵃ − Δ₁ᵇ`.
    pub fn delta1_diff(&self) -> f64 {
        self.delta1a - self.delta1b
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("drive", self.drive),
            ("chi", self.chi),
            ("kappa1", self.kappa1),
            ("kappa2", self.kappa2),
            ("delta1a", self.delta1a),
            ("delta1b", self.delta1b),
            ("delta2", self.delta2),
            ("v1", self.v1),
            ("v2", self.v2),
        ];
        if let Some((name, _)) = fields.iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::InvalidParameter(format!("{name} is not finite")));
        }
        if self.drive < 0.0 {
            return Err(Error::InvalidParameter("drive must be >= 0".into()));
        }
        if self.chi < 0.0 {
            return Err(Error::InvalidParameter("chi must be >= 0".into()));
        }
        if self.kappa1 <= 0.0 || self.kappa2 <= 0.0 {
            return Err(Error::InvalidParameter("decay rates must be > 0".into()));
        }
        Ok(())
    }

    /// Rescale every rate by `kappa1` so that `kappa1 == 1`.
    pub fn normalized(&self) -> Self {
        let k = self.kappa1;
        Self {
            drive: self.drive / k,
            chi: self.chi / k,
            kappa1: 1.0,
            kappa2: self.kappa2 / k,
            delta1a: self.delta1a / k,
            delta1b: self.delta1b / k,
            delta2: self.delta2 / k,
            v1: self.v1 / k,
            v2: self.v2 / k,
        }
    }
}

/// Whether a space describes one cavity `(a1, a2)` or two `(a1, a2, b1, b2)`.
pub fn is_two_cavity(space: &FockSpace) -> Result<bool> {
    match space.num_modes() {
        2 => Ok(false),
        4 => Ok(true),
        n => Err(Error::InvalidSpace(format!(
            "expected 2 (one cavity) or 4 (two cavities) modes, got {n}"
        ))),
    }
}

fn cz(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// Which Hamiltonian terms to include.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Terms {
    pub drive: bool,
    pub detunings: bool,
}

/// Assemble `K + K† + D` where `K` holds the raising half of every
/// off-diagonal term and `D` the real diagonal. This keeps H exactly
/// Hermitian entrywise.
pub(crate) fn assemble_hamiltonian(
    params: &ModelParams,
    space: &FockSpace,
    terms: Terms,
) -> Result<SparseComplexMatrix> {
    let two = is_two_cavity(space)?;
    let dim = space.total_dim();
    let p = params;
    let cavities: &[(Mode, Mode)] = if two {
        &[(Mode::A1, Mode::A2), (Mode::B1, Mode::B2)]
    } else {
        &[(Mode::A1, Mode::A2)]
    };

    let mut raising: Vec<(usize, usize, Complex64)> = Vec::new();
    let mut diag = vec![0.0f64; dim];

    #[allow(clippy::needless_range_loop)]
    for col in 0..dim {
        let occ = space.multi_index(col);
        for (ci, &(m1, m2)) in cavities.iter().enumerate() {
            let (i1, i2) = (m1.index(), m2.index());
            let n1 = occ[i1];
            let n2 = occ[i2];
            // iE a1†
            if terms.drive && p.drive != 0.0 && n1 + 1 < space.dims()[i1] {
                let row = col + space.stride(i1);
                raising.push((row, col, cz(0.0, p.drive * ((n1 + 1) as f64).sqrt())));
            }
            // i χ/2 a1†² a2
            if p.chi != 0.0 && n2 >= 1 && n1 + 2 < space.dims()[i1] {
                let row = col + 2 * space.stride(i1) - space.stride(i2);
                let amp = (((n1 + 1) * (n1 + 2)) as f64).sqrt() * (n2 as f64).sqrt();
                raising.push((row, col, cz(0.0, 0.5 * p.chi * amp)));
            }
            if terms.detunings {
                let d1 = if ci == 0 { p.delta1a } else { p.delta1b };
                diag[col] += d1 * n1 as f64 + p.delta2 * n2 as f64;
            }
        }
        if two {
            // V a† b, its conjugate partner a b† comes from K†.
            for (ma, mb, v) in [(Mode::A1, Mode::B1, p.v1), (Mode::A2, Mode::B2, p.v2)] {
                let (ia, ib) = (ma.index(), mb.index());
                let (na, nb) = (occ[ia], occ[ib]);
                if v != 0.0 && nb >= 1 && na + 1 < space.dims()[ia] {
                    let row = col + space.stride(ia) - space.stride(ib);
                    let amp = ((na + 1) as f64).sqrt() * (nb as f64).sqrt();
                    raising.push((row, col, cz(v * amp, 0.0)));
                }
            }
        }
    }

    let k = SparseComplexMatrix::from_triplets(dim, dim, raising)?;
    let triplets = k
        .iter()
        .flat_map(|(r, c, v)| [(r, c, v), (c, r, v.conj())])
        .chain(diag.iter().enumerate().map(|(i, &d)| (i, i, cz(d, 0.0))));
    SparseComplexMatrix::from_triplets(dim, dim, triplets)
}

/// Full driven Hamiltonian. Two-mode spaces drop the b-cavity and hopping
/// terms.
pub fn hamiltonian(params: &ModelParams, space: &FockSpace) -> Result<SparseComplexMatrix> {
    assemble_hamiltonian(
        params,
        space,
        Terms {
            drive: true,
            detunings: true,
        },
    )
}

/// Leaky modes present in `space`, with their decay rates.
pub fn decay_channels(params: &ModelParams, space: &FockSpace) -> Result<Vec<(Mode, f64)>> {
    let mut out = vec![(Mode::A1, params.kappa1), (Mode::A2, params.kappa2)];
    if is_two_cavity(space)? {
        out.push((Mode::B1, params.kappa1));
        out.push((Mode::B2, params.kappa2));
    }
    Ok(out)
}

/// Jump operators `√(2κ) a` for every leaky mode.
pub fn jump_operators(params: &ModelParams, space: &FockSpace) -> Result<Vec<SparseComplexMatrix>> {
    decay_channels(params, space)?
        .into_iter()
        .map(|(mode, kappa)| {
            Ok(space
                .annihilation(mode.index())?
                .scale(cz((2.0 * kappa).sqrt(), 0.0)))
        })
        .collect()
}

/// `H − (i/2) Σ L†L`.
pub fn effective_hamiltonian(
    hamiltonian: &SparseComplexMatrix,
    jumps: &[SparseComplexMatrix],
) -> Result<SparseComplexMatrix> {
    let mut h_eff = hamiltonian.clone();
    for l in jumps {
        let ldl = l.adjoint().matmul(l)?;
        h_eff = h_eff.add(&ldl.scale(cz(0.0, -0.5)))?;
    }
    Ok(h_eff)
}

/// Lindblad superoperator from a Hamiltonian and jump operators.
///
/// `L = −i(I⊗H_eff) + i(conj(H_eff)⊗I) + Σ_k conj(L_k)⊗L_k`.
pub fn liouvillian_from_parts(
    hamiltonian: &SparseComplexMatrix,
    jumps: &[SparseComplexMatrix],
    cap: usize,
) -> Result<SparseComplexMatrix> {
    let d = hamiltonian.nrows();
    let d2 = d.checked_mul(d).ok_or(Error::DimensionOverflow {
        dim: usize::MAX,
        cap,
    })?;
    if d2 > cap {
        return Err(Error::DimensionOverflow { dim: d2, cap });
    }
    let h_eff = effective_hamiltonian(hamiltonian, jumps)?;
    let minus_i = cz(0.0, -1.0);
    let plus_i = cz(0.0, 1.0);

    let mut triplets: Vec<(usize, usize, Complex64)> = Vec::with_capacity(
        2 * d * h_eff.nnz() + jumps.iter().map(|l| l.nnz() * l.nnz()).sum::<usize>(),
    );
    // −i I⊗H_eff : acts on the row index of ρ.
    for j in 0..d {
        for (i, k, v) in h_eff.iter() {
            triplets.push((i + d * j, k + d * j, minus_i * v));
        }
    }
    // +i conj(H_eff)⊗I : acts on the column index of ρ.
    for (j, l, v) in h_eff.iter() {
        for i in 0..d {
            triplets.push((i + d * j, i + d * l, plus_i * v.conj()));
        }
    }
    for jump in jumps {
        for (j, l, c) in jump.iter() {
            let c = c.conj();
            for (i, k, a) in jump.iter() {
                triplets.push((i + d * j, k + d * l, c * a));
            }
        }
    }
    SparseComplexMatrix::from_triplets(d2, d2, triplets)
}

pub fn liouvillian(params: &ModelParams, space: &FockSpace) -> Result<SparseComplexMatrix> {
    liouvillian_with_cap(params, space, DEFAULT_LIOUVILLIAN_CAP)
}

pub fn liouvillian_with_cap(
    params: &ModelParams,
    space: &FockSpace,
    cap: usize,
) -> Result<SparseComplexMatrix> {
    params.validate()?;
    let h = hamiltonian(params, space)?;
    let jumps = jump_operators(params, space)?;
    liouvillian_from_parts(&h, &jumps, cap)
}

/// Apply the Lindblad generator to a dense density matrix without forming the
/// superoperator.
pub fn lindblad_rhs(
    hamiltonian: &SparseComplexMatrix,
    jumps: &[SparseComplexMatrix],
    rho: &nalgebra::DMatrix<Complex64>,
) -> nalgebra::DMatrix<Complex64> {
    let h = hamiltonian.to_dense();
    let i = cz(0.0, 1.0);
    let mut out = (&h * rho - rho * &h) * (-i);
    for l in jumps {
        let l = l.to_dense();
        let ld = l.adjoint();
        let ldl = &ld * &l;
        out += &l * rho * &ld - (&ldl * rho + rho * &ldl) * cz(0.5, 0.0);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn limit_cycle_params() -> ModelParams {
        ModelParams {
            drive: 8.0,
            chi: 0.8,
            kappa2: 0.5,
            delta1a: 0.5,
            delta2: 1.0,
            ..ModelParams::default()
        }
    }

    fn two_cavity_generic() -> ModelParams {
        ModelParams {
            drive: 0.7,
            chi: 1.3,
            kappa1: 1.0,
            kappa2: 0.5,
            delta1a: 0.4,
            delta1b: -0.3,
            delta2: 0.9,
            v1: 0.2,
            v2: 0.15,
        }
    }

    #[test]
    fn zero_params_give_zero_hamiltonian() {
        let p = ModelParams {
            kappa2: 1.0,
            ..ModelParams::default()
        };
        let s = FockSpace::new(&[3, 2, 3, 2]).unwrap();
        assert_eq!(hamiltonian(&p, &s).unwrap().nnz(), 0);
    }

    #[test]
    fn hamiltonian_exactly_hermitian() {
        for (p, dims) in [
            (limit_cycle_params(), vec![5, 4]),
            (two_cavity_generic(), vec![4, 3, 4, 3]),
        ] {
            let s = FockSpace::new(&dims).unwrap();
            let h = hamiltonian(&p, &s).unwrap();
            assert_eq!(h, h.adjoint());
        }
    }

    #[test]
    fn hamiltonian_matches_operator_algebra() {
        let p = two_cavity_generic();
        let s = FockSpace::new(&[4, 3, 3, 2]).unwrap();
        let a1 = s.annihilation(0).unwrap();
        let a2 = s.annihilation(1).unwrap();
        let b1 = s.annihilation(2).unwrap();
        let b2 = s.annihilation(3).unwrap();
        let d = |m: &SparseComplexMatrix| m.to_dense();
        let (a1, a2, b1, b2) = (d(&a1), d(&a2), d(&b1), d(&b2));
        let i = cz(0.0, 1.0);
        let r = |x: f64| cz(x, 0.0);
        let ad = |m: &DMatrix<Complex64>| m.adjoint();
        let expect = (ad(&a1) - &a1 + ad(&b1) - &b1) * (i * r(p.drive))
            + (ad(&a1) * ad(&a1) * &a2 - &a1 * &a1 * ad(&a2) + ad(&b1) * ad(&b1) * &b2
                - &b1 * &b1 * ad(&b2))
                * (i * r(0.5 * p.chi))
            + ad(&a1) * &a1 * r(p.delta1a)
            + ad(&b1) * &b1 * r(p.delta1b)
            + (ad(&a2) * &a2 + ad(&b2) * &b2) * r(p.delta2)
            + (ad(&a1) * &b1 + &a1 * ad(&b1)) * r(p.v1)
            + (ad(&a2) * &b2 + &a2 * ad(&b2)) * r(p.v2);
        let h = hamiltonian(&p, &s).unwrap().to_dense();
        assert!((h - expect).camax() < 1e-12);
    }

    #[test]
    fn conversion_block_eigenvalues() {
        let p = ModelParams {
            chi: 0.8,
            ..ModelParams::default()
        };
        let s = FockSpace::new(&[3, 2]).unwrap();
        let h = hamiltonian(&p, &s).unwrap();
        let i20 = s.index_of(&[2, 0]).unwrap();
        let i01 = s.index_of(&[0, 1]).unwrap();
        let block = DMatrix::from_fn(2, 2, |r, c| {
            let idx = [i20, i01];
            h.get(idx[r], idx[c])
        });
        let mut ev: Vec<f64> = block.symmetric_eigenvalues().iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        let shift = 0.8 / 2f64.sqrt();
        assert!((ev[0] + shift).abs() < 1e-12 && (ev[1] - shift).abs() < 1e-12);
    }

    #[test]
    fn wrong_mode_count_rejected() {
        let s = FockSpace::new(&[3, 2, 3]).unwrap();
        assert!(hamiltonian(&limit_cycle_params(), &s).is_err());
    }

    #[test]
    fn jump_prefactors() {
        let s = FockSpace::new(&[3, 2, 3, 2]).unwrap();
        let jumps = jump_operators(&two_cavity_generic(), &s).unwrap();
        assert_eq!(jumps.len(), 4);
        let expect = s.annihilation(0).unwrap().scale(cz(2f64.sqrt(), 0.0));
        assert!(jumps[0].max_abs_diff(&expect).unwrap() < 1e-15);
        let s1 = FockSpace::new(&[3, 2]).unwrap();
        assert_eq!(jump_operators(&limit_cycle_params(), &s1).unwrap().len(), 2);
    }

    #[test]
    fn liouvillian_preserves_trace() {
        let s = FockSpace::new(&[3, 2, 3, 2]).unwrap();
        let l = liouvillian(&two_cavity_generic(), &s).unwrap();
        let d = s.total_dim();
        let mut col_sums = vec![Complex64::new(0.0, 0.0); d * d];
        for i in 0..d {
            for (c, v) in l.row(i + d * i) {
                col_sums[c] += v;
            }
        }
        let worst = col_sums.iter().map(|z| z.norm()).fold(0.0, f64::max);
        assert!(worst < 1e-12, "trace leak {worst}");
    }

    #[test]
    fn vacuum_is_steady_without_drive() {
        let p = ModelParams {
            drive: 0.0,
            ..two_cavity_generic()
        };
        let s = FockSpace::new(&[3, 2, 3, 2]).unwrap();
        let l = liouvillian(&p, &s).unwrap();
        let mut vac = vec![Complex64::new(0.0, 0.0); l.ncols()];
        vac[0] = Complex64::new(1.0, 0.0);
        let out = l.mul_vec(&vac).unwrap();
        assert!(out.iter().all(|z| z.norm() < 1e-14));
    }

    #[test]
    fn liouvillian_matches_direct_rhs() {
        let p = two_cavity_generic();
        let s = FockSpace::new(&[3, 2, 2, 2]).unwrap();
        let d = s.total_dim();
        let h = hamiltonian(&p, &s).unwrap();
        let jumps = jump_operators(&p, &s).unwrap();
        let l = liouvillian(&p, &s).unwrap();
        // Arbitrary (non-physical) test matrix.
        let rho = DMatrix::from_fn(d, d, |i, j| {
            cz((i * 7 + j) as f64 * 0.01, (i as f64 - j as f64) * 0.02)
        });
        let vec_rho: Vec<Complex64> = rho.iter().copied().collect(); // column-major
        let lv = l.mul_vec(&vec_rho).unwrap();
        let expect = lindblad_rhs(&h, &jumps, &rho);
        for (a, b) in lv.iter().zip(expect.iter()) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn liouvillian_cap_enforced() {
        let s = FockSpace::new(&[4, 3]).unwrap();
        let err = liouvillian_with_cap(&limit_cycle_params(), &s, 100).unwrap_err();
        assert_eq!(err, Error::DimensionOverflow { dim: 144, cap: 100 });
    }

    #[test]
    fn toy_spectrum_is_stable() {
        let p = ModelParams {
            drive: 0.1,
            chi: 0.0,
            delta1a: 0.3,
            ..ModelParams::default()
        };
        // Single driven damped mode: a two-mode space with a trivial harmonic.
        let s = FockSpace::new(&[3, 2]).unwrap();
        let l = liouvillian(&p, &s).unwrap().to_dense();
        let schur = nalgebra::Schur::new(l);
        let (_, t) = schur.unpack();
        let max_re = t
            .diagonal()
            .iter()
            .map(|z| z.re)
            .fold(f64::NEG_INFINITY, f64::max);
        assert!(max_re <= 1e-10, "max real part {max_re}");
    }

    #[test]
    fn validate_rejects_negative_rates() {
        let mut p = limit_cycle_params();
        p.kappa2 = 0.0;
        assert!(p.validate().is_err());
        let mut p = limit_cycle_params();
        p.drive = -1.0;
        assert!(p.validate().is_err());
        let mut p = limit_cycle_params();
        p.chi = f64::NAN;
        assert!(p.validate().is_err());
    }

    #[test]
    fn normalization_divides_by_kappa1() {
        let p = ModelParams {
            drive: 4.0,
            chi: 2.0,
            kappa1: 2.0,
            kappa2: 1.0,
            delta1a: 1.0,
            delta1b: 1.0,
            delta2: 2.0,
            v1: 0.4,
            v2: 0.0,
        };
        let n = p.normalized();
        assert_eq!(n.kappa1, 1.0);
        assert_eq!(n.drive, 2.0);
        assert_eq!(n.kappa2, 0.5);
        assert_eq!(n.v1, 0.2);
    }
}
