use num_complex::Complex64;
use proptest::prelude::*;

use shg_core::classical::{self, ClassicalState};
use shg_core::experiments::{self, Backend, SweepRow};
use shg_core::model;
use shg_core::oracles;
use shg_core::spectrum::{self, ManifoldSpec};
use shg_core::steady_state;
use shg_core::{FockSpace, ModelParams};

fn params() -> impl Strategy<Value = ModelParams> {
    (
        0.0..2.0f64,
        0.0..5.0f64,
        0.1..2.0f64,
        -3.0..3.0f64,
        -3.0..3.0f64,
        -3.0..3.0f64,
        -0.5..0.5f64,
        -0.5..0.5f64,
    )
        .prop_map(|(drive, chi, kappa2, d1a, d1b, d2, v1, v2)| ModelParams {
            drive,
            chi,
            kappa1: 1.0,
            kappa2,
            delta1a: d1a,
            delta1b: d1b,
            delta2: d2,
            v1,
            v2,
        })
}

fn complex() -> impl Strategy<Value = Complex64> {
    (-3.0..3.0f64, -3.0..3.0f64).prop_map(|(re, im)| Complex64::new(re, im))
}

fn state() -> impl Strategy<Value = ClassicalState> {
    (complex(), complex(), complex(), complex())
        .prop_map(|(a, b, c, d)| ClassicalState::new(a, b, c, d))
}

fn dims() -> impl Strategy<Value = Vec<usize>> {
    prop_oneof![
        (2..5usize, 2..4usize).prop_map(|(a, b)| vec![a, b]),
        (2..4usize, 2..3usize).prop_map(|(a, b)| vec![a, b, a, b]),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn distinct_modes_commute(d in dims(), i in 0..4usize, j in 0..4usize) {
        let space = FockSpace::new(&d).unwrap();
        let (i, j) = (i % d.len(), j % d.len());
        prop_assume!(i != j);
        let a = space.annihilation(i).unwrap();
        let b = space.creation(j).unwrap();
        let ab = a.matmul(&b).unwrap();
        let ba = b.matmul(&a).unwrap();
        prop_assert!(ab.max_abs_diff(&ba).unwrap() == 0.0);
    }

    #[test]
    fn canonical_commutator_below_cutoff(d in dims(), i in 0..4usize) {
        let space = FockSpace::new(&d).unwrap();
        let i = i % d.len();
        let a = space.annihilation(i).unwrap();
        let ad = space.creation(i).unwrap();
        let c = a.matmul(&ad).unwrap().sub(&ad.matmul(&a).unwrap()).unwrap();
        for k in 0..space.total_dim() {
            let n = space.occupation(k, i);
            let expect = if n + 1 < d[i] { 1.0 } else { -(n as f64) };
            prop_assert!((c.get(k, k).re - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn hamiltonian_is_hermitian(p in params(), d in dims()) {
        let space = FockSpace::new(&d).unwrap();
        let h = model::hamiltonian(&p, &space).unwrap();
        prop_assert!(h.is_hermitian(1e-14));
    }

    #[test]
    fn liouvillian_preserves_trace(p in params(), d in dims()) {
        let space = FockSpace::new(&d).unwrap();
        let n = space.total_dim();
        let l = model::liouvillian(&p, &space).unwrap();
        let mut row = vec![Complex64::default(); n * n];
        for i in 0..n {
            for (c, v) in l.row(i + n * i) {
                row[c] += v;
            }
        }
        let scale = l.norm_inf().max(1.0);
        prop_assert!(row.iter().all(|z| z.norm() <= 1e-12 * scale));
    }

    #[test]
    fn steady_state_is_a_density_matrix(p in params()) {
        let p = ModelParams { drive: p.drive.min(0.5), ..p };
        let space = FockSpace::new(&[3, 2, 3, 2]).unwrap();
        let rho = steady_state::steady_state(&p, &space).unwrap();
        prop_assert!((rho.trace() - 1.0).norm() < 1e-10);
        prop_assert!(rho.max_hermiticity_defect() < 1e-10);
        prop_assert!(rho.min_eigenvalue() > -1e-8);
    }

    #[test]
    fn cross_oracle_is_symmetric_and_first_order(d1a in -5.0..5.0f64, d1b in -5.0..5.0f64, v1 in -0.1..0.1f64) {
        let g = oracles::g2_cross_quantum_limit(d1a, d1b, 1.0, v1);
        prop_assert_eq!(g, oracles::g2_cross_quantum_limit(d1b, d1a, 1.0, v1));
        let back = oracles::g2_cross_quantum_limit(d1a, d1b, 1.0, -v1);
        prop_assert!((g + back - 2.0).abs() < 1e-12);
    }

    #[test]
    fn identical_cavity_sign_follows_detuning(d1 in -5.0..5.0f64, v1 in 0.001..0.1f64) {
        prop_assume!(d1.abs() > 1e-6);
        let g = oracles::g2_cross_quantum_limit(d1, d1, 1.0, v1);
        prop_assert_eq!((g - 1.0).signum(), d1.signum());
    }

    #[test]
    fn classical_flow_is_scale_covariant(p in params(), s in state(), c in 0.25..4.0f64) {
        let f = classical::rhs(&p, &s, true);
        let q = classical::scale_params(&p, c).unwrap();
        let g = classical::rhs(&q, &classical::scale_state(&s, c).unwrap(), true);
        for (x, y) in f.to_real().iter().zip(g.to_real()) {
            prop_assert!((c * x - y).abs() <= 1e-12 * (1.0 + y.abs()));
        }
    }

    #[test]
    fn identical_cavities_have_exchange_symmetry(p in params(), s in state()) {
        let p = ModelParams { delta1b: p.delta1a, ..p };
        let f = classical::rhs(&p, &s.swapped(), true);
        let g = classical::rhs(&p, &s, true).swapped();
        prop_assert_eq!(f.to_real(), g.to_real());
    }

    #[test]
    fn jacobian_matches_finite_differences(p in params(), s in state()) {
        let j = classical::jacobian(&p, &s, true);
        let x = s.to_real();
        let h = 1e-6;
        for k in 0..8 {
            let mut xp = x;
            let mut xm = x;
            xp[k] += h;
            xm[k] -= h;
            let fp = classical::rhs(&p, &ClassicalState::from_real(&xp), true).to_real();
            let fm = classical::rhs(&p, &ClassicalState::from_real(&xm), true).to_real();
            for r in 0..8 {
                let fd = (fp[r] - fm[r]) / (2.0 * h);
                prop_assert!((fd - j[(r, k)]).abs() < 1e-6 * (1.0 + fd.abs()));
            }
        }
    }

    #[test]
    fn two_photon_splitting_is_linear_in_chi(chi in 0.01..10.0f64) {
        let space = FockSpace::new(&[5, 3]).unwrap();
        let p = ModelParams { chi, ..ModelParams::default() };
        let h = spectrum::undriven_hamiltonian(&p, &space, false).unwrap();
        let es = spectrum::manifold_eigensystem(&h, &space, &ManifoldSpec::parse("2,0;0,1").unwrap()).unwrap();
        let s = chi / 2f64.sqrt();
        prop_assert!((es.eigenvalues[0] + s).abs() < 1e-10 * (1.0 + s));
        prop_assert!((es.eigenvalues[1] - s).abs() < 1e-10 * (1.0 + s));
    }

    #[test]
    fn sweep_rows_round_trip(p in params(), g2 in proptest::num::f64::ANY, seed in any::<u64>(), n in 0.0..1e3f64) {
        prop_assume!(!g2.is_nan());
        let row = SweepRow {
            index: 7,
            params: p,
            backend: Backend::SteadyState,
            dims: vec![3, 2, 3, 2],
            pair: "a1:b1".into(),
            g2,
            g2_err: 0.0,
            oracle_g2: f64::NAN,
            photon_numbers: [n, n / 3.0, f64::NAN, 1e-300],
            critical_drive: f64::NAN,
            sync: None,
            truncation_suspect: true,
            unconverged: false,
            seed,
            error: Some("comma, \"quoted\"".into()),
        };
        let mut buf = Vec::new();
        experiments::write_csv(std::slice::from_ref(&row), &mut buf).unwrap();
        let back = experiments::read_csv(buf.as_slice()).unwrap().pop().unwrap();
        prop_assert_eq!(back.params, row.params);
        prop_assert_eq!(back.g2.to_bits(), row.g2.to_bits());
        prop_assert_eq!(back.photon_numbers[0].to_bits(), n.to_bits());
        prop_assert_eq!(back.photon_numbers[1].to_bits(), (n / 3.0).to_bits());
        prop_assert!(back.photon_numbers[2].is_nan());
        prop_assert_eq!(back.seed, seed);
        prop_assert_eq!(back.error, row.error);
        prop_assert_eq!(back.dims, row.dims);
    }
}
