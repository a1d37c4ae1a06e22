mod common;

use std::f64::consts::{PI, SQRT_2};

use common::{c, expm, matching_distance};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use torrey_core::basis::{self, OperatorMatrices};
use torrey_core::operator::{self, EigenOptions, Magnetization};
use torrey_core::{Error, C64};

fn interval(n: usize) -> OperatorMatrices {
    basis::build_interval(1.0, n).unwrap()
}

#[test]
fn assemble_examples() {
    let m = interval(2);
    let a = operator::assemble(&m, c(0.0, 0.0));
    assert_eq!(a[(0, 0)], c(0.0, 0.0));
    assert_eq!(a[(1, 1)], c(PI * PI, 0.0));
    assert_eq!(a[(0, 1)], c(0.0, 0.0));
    // g = i gives Λ + B, real symmetric.
    let a = operator::assemble(&m, c(0.0, 1.0));
    assert!(a.iter().all(|z| z.im == 0.0));
    assert_eq!(a[(0, 1)].re, m.b[(0, 1)]);
}

#[test]
fn laplacian_spectrum_at_zero() {
    let s = operator::eigensolve(&interval(10), c(0.0, 0.0), &EigenOptions::default()).unwrap();
    for (k, l) in s.eigenvalues.iter().enumerate() {
        assert!((l - c((PI * k as f64).powi(2), 0.0)).norm() < 1e-12 * (1.0 + l.norm()));
    }
}

#[test]
fn real_pair_below_the_branch_point_matches_doubled_truncation() {
    let coarse = operator::eigenvalues(&interval(30), c(10.0, 0.0)).unwrap();
    let fine = operator::eigenvalues(&interval(60), c(10.0, 0.0)).unwrap();
    assert!(coarse[0].im.abs() < 1e-8 && coarse[1].im.abs() < 1e-8);
    assert!((coarse[1] - coarse[0]).norm() > 1.0);
    for k in 0..2 {
        assert!((coarse[k] - fine[k]).norm() < 1e-6, "{} vs {}", coarse[k], fine[k]);
    }
}

#[test]
fn conjugate_pair_above_the_branch_point() {
    let l = operator::eigenvalues(&interval(30), c(25.0, 0.0)).unwrap();
    assert!((l[0] - l[1].conj()).norm() < 1e-10);
    assert!(l[0].im < -0.1, "ordering puts the negative imaginary part first: {}", l[0]);
}

#[test]
fn bilinear_form_examples() {
    let e1 = [c(1.0, 0.0), c(0.0, 0.0)];
    assert_eq!(operator::bilinear_form(&e1, &e1).unwrap(), c(1.0, 0.0));
    let i1 = [c(0.0, 1.0), c(0.0, 0.0)];
    assert_eq!(operator::bilinear_form(&i1, &i1).unwrap(), c(-1.0, 0.0));
    assert!(operator::bilinear_form(&e1, &[c(1.0, 0.0)]).is_err());

    let s = operator::eigensolve(&interval(30), c(18.0, 0.0), &EigenOptions::default()).unwrap();
    assert!(operator::bilinear_form(&s.mode(0), &s.mode(1)).unwrap().norm() < 1e-6);
}

#[test]
fn modes_in_space() {
    let m = interval(30);
    let pts: Vec<[f64; 2]> = (0..=20).map(|k| [-0.5 + k as f64 / 20.0, 0.0]).collect();
    let s = operator::eigensolve(&m, c(0.0, 0.0), &EigenOptions::default()).unwrap();
    for v in operator::evaluate_mode(&m, &s, 0, &pts).unwrap() {
        assert!((v - c(1.0, 0.0)).norm() < 1e-12);
    }
    for (v, p) in operator::evaluate_mode(&m, &s, 1, &pts).unwrap().iter().zip(&pts) {
        assert!((v - c(SQRT_2 * (PI * p[0]).sin(), 0.0)).norm() < 1e-12);
    }

    let fine: Vec<[f64; 2]> = (0..=200).map(|k| [-0.5 + k as f64 / 200.0, 0.0]).collect();
    let s = operator::eigensolve(&m, c(100.0, 0.0), &EigenOptions::default()).unwrap();
    let v = operator::evaluate_mode(&m, &s, 0, &fine).unwrap();
    let peak = (0..v.len()).max_by(|&a, &b| v[a].norm().total_cmp(&v[b].norm())).unwrap();
    assert!(fine[peak][0] > 0.0, "peak at {}", fine[peak][0]);

    assert!(matches!(
        operator::evaluate_mode(&m, &s, 0, &[[0.6, 0.0]]),
        Err(Error::Validation(_))
    ));
    assert!(operator::evaluate_mode(&m, &s, 30, &pts).is_err());
}

#[test]
fn evolution_examples() {
    let m = interval(30);
    let m0 = Magnetization::uniform(&m);
    let same = operator::evolve(&m, c(10.0, 0.0), &m0, 0.0).unwrap();
    for (a, b) in same.coefficients.iter().zip(&m0.coefficients) {
        assert!((a - b).norm() < 1e-12);
    }

    let mixed = Magnetization::new((0..30).map(|k| c(1.0 / (1.0 + k as f64), 0.0)).collect());
    let t = 0.01;
    let decayed = operator::evolve(&m, c(0.0, 0.0), &mixed, t).unwrap();
    for k in 0..30 {
        let expected = mixed.coefficients[k] * (-m.lambda0[k] * t).exp();
        assert!((decayed.coefficients[k] - expected).norm() < 1e-13, "{k}");
    }
    assert!(operator::evolve(&m, c(0.0, 0.0), &mixed, -1.0).is_err());
}

#[test]
fn evolution_matches_matrix_exponential() {
    let m = interval(30);
    for (g, t) in [(c(10.0, 0.0), 0.1), (c(25.0, 3.0), 0.05), (c(-7.0, -2.0), 0.2)] {
        let m0 = Magnetization::uniform(&m);
        let out = operator::evolve(&m, g, &m0, t).unwrap();
        let a = operator::assemble(&m, g);
        let oracle = expm(&(a * c(-t, 0.0))) * DVector::from_vec(m0.coefficients.clone());
        let diff: f64 = out
            .coefficients
            .iter()
            .zip(oracle.iter())
            .map(|(x, y)| (x - y).norm_sqr())
            .sum::<f64>()
            .sqrt();
        assert!(diff <= 1e-9 * oracle.norm(), "g = {g}: {diff:e}");
    }
}

#[test]
fn evolve_refuses_near_defective_spectrum() {
    let m = interval(30);
    let g = c(common::interval_branch_point(), 0.0);
    // The truncated branch point sits within ~1e-7 of g*, where |(v|v)| is of order 1e-3.
    let options = EigenOptions {
        defect_tol: 1e-2,
        ..EigenOptions::default()
    };
    let solve = operator::eigensolve(&m, g, &options).unwrap();
    assert_eq!(&solve.near_defect_flags[..3], &[true, true, false]);
    assert!(solve.self_overlaps[0].norm() < 1e-2);
    let err = operator::evolve_with(&solve, &Magnetization::uniform(&m), 0.1).unwrap_err();
    assert!(matches!(err, Error::DefectiveSpectrum { .. }), "{err}");
}

#[test]
fn truncation_is_resolved_by_doubling() {
    let gs = [c(10.0, 0.0), c(30.0, 5.0)];
    let n = operator::resolve_truncation(|n| basis::build_interval(1.0, n), 8, &gs, 4, 1e-6, 4).unwrap();
    let coarse = operator::eigenvalues(&interval(n), gs[1]).unwrap();
    let fine = operator::eigenvalues(&interval(2 * n), gs[1]).unwrap();
    assert!(operator::trusted_sheet_count(&coarse, &fine, 1e-6) >= 4);
    assert!(n >= 16);
}

fn arb_g() -> impl Strategy<Value = C64> {
    (-60.0f64..60.0, -60.0f64..60.0).prop_map(|(re, im)| C64::new(re, im))
}

fn close_as_multisets(a: &[C64], b: &[C64]) -> bool {
    let scale = a.iter().fold(1.0f64, |m, v| m.max(v.norm()));
    matching_distance(a, b) <= 1e-10 * scale
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn residuals_and_bilinear_orthogonality(g in arb_g()) {
        let m = interval(24);
        let s = operator::eigensolve(&m, g, &EigenOptions::default()).unwrap();
        let a = operator::assemble(&m, g);
        for k in 0..24 {
            let v = DVector::from_vec(s.mode(k));
            let r = (&a * &v - &v * s.eigenvalues[k]).norm() / v.norm();
            prop_assert!(r <= 1e-10 * a.norm(), "residual {r:e}");
        }
        for n in 0..24 {
            for k in 0..n {
                if s.near_defect_flags[n] || s.near_defect_flags[k] {
                    continue;
                }
                let o = operator::bilinear_form(&s.mode(n), &s.mode(k)).unwrap().norm();
                prop_assert!(o <= 1e-8, "({n}|{k}) = {o:e}");
            }
            if !s.near_defect_flags[n] {
                let self_overlap = operator::bilinear_form(&s.mode(n), &s.mode(n)).unwrap();
                prop_assert!((self_overlap - c(1.0, 0.0)).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn conjugation_and_parity_symmetry(g in arb_g(), disk in any::<bool>()) {
        let m = if disk { basis::build_disk(1.0, 24).unwrap() } else { interval(24) };
        let base = operator::eigenvalues(&m, g).unwrap();
        let conj: Vec<C64> = base.iter().map(|v| v.conj()).collect();
        let minus_conj = operator::eigenvalues(&m, -g.conj()).unwrap();
        let mirrored = operator::eigenvalues(&m, g.conj()).unwrap();
        prop_assert!(close_as_multisets(&minus_conj, &conj));
        prop_assert!(close_as_multisets(&mirrored, &conj));
    }

    #[test]
    fn trace_identity(g in arb_g()) {
        for m in [interval(30), basis::build_disk(1.0, 30).unwrap()] {
            let sum: C64 = operator::eigenvalues(&m, g).unwrap().iter().sum();
            let trace_b: f64 = (0..m.size()).map(|i| m.b[(i, i)]).sum();
            let expected = c(m.lambda0.iter().sum(), 0.0) - C64::i() * g * trace_b;
            prop_assert!((sum - expected).norm() <= 1e-10 * expected.norm().max(1.0));
        }
    }
}

#[test]
fn own_eigensolver_agrees_with_an_independent_one() {
    // nalgebra's complex Schur form serves as a cross-check of the eigenvalues.
    let m = interval(20);
    let g = c(12.5, -4.0);
    let a: DMatrix<C64> = operator::assemble(&m, g);
    let reference: Vec<C64> = a.clone().schur().eigenvalues().unwrap().iter().copied().collect();
    let ours = operator::eigenvalues(&m, g).unwrap();
    assert!(matching_distance(&ours, &reference) < 1e-9 * a.norm());
}
