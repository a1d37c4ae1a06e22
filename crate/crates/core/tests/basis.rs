mod common;

use std::f64::consts::{PI, SQRT_2};

use common::{bessel_series, bessel_series_prime, legendre_rule};
use torrey_core::basis::{self, Angular, GeometryKind, ModeShape, OperatorMatrices, Parity};
use torrey_core::Error;

#[test]
fn interval_gram_and_gradient_match_quadrature() {
    let l = 1.0;
    let m = basis::build_interval(l, 30).unwrap();
    let rule = legendre_rule(200, -0.5 * l, 0.5 * l);
    let values: Vec<Vec<f64>> = (0..30)
        .map(|j| rule.iter().map(|(x, _)| m.basis_value(j, [*x, 0.0]).unwrap()).collect())
        .collect();
    for i in 0..30 {
        assert!((m.lambda0[i] - (PI * i as f64 / l).powi(2)).abs() < 1e-10 * (1.0 + m.lambda0[i]));
        for j in 0..30 {
            let gram: f64 = rule.iter().enumerate().map(|(p, (_, w))| w * values[i][p] * values[j][p]).sum();
            let b: f64 = rule
                .iter()
                .enumerate()
                .map(|(p, (x, w))| w * x * values[i][p] * values[j][p])
                .sum();
            assert!((gram - if i == j { 1.0 } else { 0.0 }).abs() < 1e-12, "gram {i} {j}");
            assert!((b - m.b[(i, j)]).abs() < 1e-10, "B {i} {j}: {b} vs {}", m.b[(i, j)]);
        }
    }
}

#[test]
fn interval_first_coupling_has_closed_form() {
    // ∫ x · 1 · √2 sin(πx) dx over the centered unit interval.
    let m = basis::build_interval(1.0, 2).unwrap();
    assert!((m.b[(0, 1)] - 2.0 * SQRT_2 / (PI * PI)).abs() < 1e-15);
    assert!((m.basis_value(1, [0.25, 0.0]).unwrap() - SQRT_2 * (0.25 * PI).sin()).abs() < 1e-15);
}

#[test]
fn interval_parities_alternate() {
    let m = basis::build_interval(1.0, 6).unwrap();
    for mode in &m.modes {
        let expected = if (mode.index - 1) % 2 == 0 {
            Parity::Symmetric
        } else {
            Parity::Antisymmetric
        };
        assert_eq!(mode.parity_x, expected);
        for x in [0.1, 0.37] {
            let a = m.basis_value(mode.index - 1, [x, 0.0]).unwrap();
            let b = m.basis_value(mode.index - 1, [-x, 0.0]).unwrap();
            let sign = if expected == Parity::Symmetric { 1.0 } else { -1.0 };
            assert!((a - sign * b).abs() < 1e-14);
        }
    }
}

#[test]
fn scaling_with_length() {
    let unit = basis::build_interval(1.0, 12).unwrap();
    let twice = basis::build_interval(2.0, 12).unwrap();
    for i in 0..12 {
        assert!((twice.lambda0[i] - unit.lambda0[i] / 4.0).abs() < 1e-12 * (1.0 + unit.lambda0[i]));
        for j in 0..12 {
            assert!((twice.b[(i, j)] - 2.0 * unit.b[(i, j)]).abs() < 1e-14);
        }
    }
    let disk = basis::build_disk(1.0, 12).unwrap();
    let wide = basis::build_disk(3.0, 12).unwrap();
    for i in 0..12 {
        assert!((wide.lambda0[i] - disk.lambda0[i] / 9.0).abs() < 1e-10 * (1.0 + disk.lambda0[i]));
        for j in 0..12 {
            assert!((wide.b[(i, j)] - 3.0 * disk.b[(i, j)]).abs() < 1e-10);
        }
    }
}

fn disk_shape(m: &OperatorMatrices, j: usize) -> (u32, f64, Angular) {
    match m.modes[j].shape {
        ModeShape::Disk { m, alpha, angular, .. } => (m, alpha, angular),
        _ => panic!("not a disk mode"),
    }
}

#[test]
fn disk_modes_are_neumann_eigenfunctions() {
    let m = basis::build_disk(1.0, 40).unwrap();
    let r = 0.5;
    for j in 0..40 {
        let (order, alpha, angular) = disk_shape(&m, j);
        assert!(bessel_series_prime(order, alpha).abs() < 1e-12, "mode {j}");
        assert!((m.lambda0[j] - (alpha / r).powi(2)).abs() < 1e-10 * (1.0 + m.lambda0[j]));
        assert_eq!(angular == Angular::Constant, order == 0);
        assert_eq!(m.modes[j].angular_index.map(|a| a.unsigned_abs()), Some(order));
    }
    // Table values of the first zeros of J_m': j'_{1,1}, j'_{2,1}, j'_{0,1}, j'_{3,1}.
    let table = [1.841_183_781_340_659, 3.054_236_928_227_140, 3.831_705_970_207_512, 4.201_188_941_210_528];
    let expected = [0.0, table[0], table[0], table[1], table[1], table[2], table[3], table[3]];
    for (j, a) in expected.iter().enumerate() {
        assert!((m.lambda0[j] - 4.0 * a * a).abs() < 1e-9, "λ_{j} = {}", m.lambda0[j]);
    }
}

#[test]
fn disk_gradient_matches_polar_quadrature() {
    let n = 30;
    let m = basis::build_disk(1.0, n).unwrap();
    let r = 0.5;
    let radial = legendre_rule(60, 0.0, r);
    let n_theta = 96;
    let points: Vec<(f64, f64, f64)> = radial
        .iter()
        .flat_map(|&(rho, w)| {
            (0..n_theta).map(move |k| {
                let theta = 2.0 * PI * k as f64 / n_theta as f64;
                (rho, theta, w * rho * 2.0 * PI / n_theta as f64)
            })
        })
        .collect();
    // Unnormalized modes from the series, normalized by their quadrature norm.
    let raw: Vec<Vec<f64>> = (0..n)
        .map(|j| {
            let (order, alpha, angular) = disk_shape(&m, j);
            points
                .iter()
                .map(|(rho, theta, _)| {
                    let ang = match angular {
                        Angular::Constant => 1.0,
                        Angular::Cos => (order as f64 * theta).cos(),
                        Angular::Sin => (order as f64 * theta).sin(),
                    };
                    bessel_series(order, alpha * rho / r) * ang
                })
                .collect()
        })
        .collect();
    let inner = |f: &[f64], g: &[f64], weight: &dyn Fn(usize) -> f64| -> f64 {
        (0..points.len()).map(|p| points[p].2 * weight(p) * f[p] * g[p]).sum()
    };
    let one = |_: usize| 1.0;
    let x = |p: usize| points[p].0 * points[p].1.cos();
    let norms: Vec<f64> = raw.iter().map(|f| inner(f, f, &one).sqrt()).collect();
    for i in 0..n {
        for j in 0..n {
            let b = inner(&raw[i], &raw[j], &x) / (norms[i] * norms[j]);
            assert!((b - m.b[(i, j)]).abs() < 1e-8, "B {i} {j}: {b} vs {}", m.b[(i, j)]);
        }
        // The library's own functions are unit normalized with the same sign.
        let p = points.len() / 3;
        let (rho, theta, _) = points[p];
        let lib = m.basis_value(i, [rho * theta.cos(), rho * theta.sin()]).unwrap();
        assert!((lib - raw[i][p] / norms[i]).abs() < 1e-8, "mode {i}");
    }
}

#[test]
fn disk_constant_to_first_dipole_closed_form() {
    let m = basis::build_disk(1.0, 10).unwrap();
    let r = 0.5;
    let (order, alpha, angular) = disk_shape(&m, 1);
    assert_eq!((order, angular), (1, Angular::Cos));
    // u0 = 1/(R√π); u1 = J1(αρ/R) cos θ / n1 with n1² = π R²/2 (1 - 1/α²) J1(α)²;
    // ∫ ρ cos θ u0 u1 = √π / (R n1) · R³ J2(α) / α.
    let n1 = (PI * r * r / 2.0 * (1.0 - 1.0 / (alpha * alpha))).sqrt() * bessel_series(1, alpha).abs();
    let sign = bessel_series(1, alpha).signum();
    let expected = PI.sqrt() / (r * n1) * r.powi(3) * bessel_series(2, alpha) / alpha * sign;
    assert!((m.b[(0, 1)].abs() - expected.abs()).abs() < 1e-12 * expected.abs(), "{} vs {expected}", m.b[(0, 1)]);
    assert_eq!(m.b[(0, 2)], 0.0);
}

#[test]
fn disk_selection_rules() {
    let m = basis::build_disk(1.0, 40).unwrap();
    assert!(m.quadrature_nodes.is_some());
    for i in 0..40 {
        for j in 0..40 {
            let (mi, _, ai) = disk_shape(&m, i);
            let (mj, _, aj) = disk_shape(&m, j);
            let allowed = mi.abs_diff(mj) == 1 && ((ai == Angular::Sin) == (aj == Angular::Sin));
            if !allowed {
                assert_eq!(m.b[(i, j)], 0.0, "{i} {j}");
            } else {
                assert!(m.b[(i, j)] != 0.0, "{i} {j}");
            }
        }
    }
    assert_eq!(m.blocks().len(), 2);
}

#[test]
fn export_import_round_trip_is_bitwise() {
    let m = basis::build_disk(1.0, 16).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("disk.txt");
    basis::export(&m, &path).unwrap();
    let back = basis::load_imported(&path).unwrap();
    assert_eq!(back.geometry.kind, GeometryKind::Imported);
    assert_eq!(back.lambda0, m.lambda0);
    assert_eq!(back.b, m.b);
    assert!(back.modes.iter().all(|mode| mode.parity_x == Parity::None));
    assert!(!back.parity_symmetric());
    assert!(matches!(back.basis_value(0, [0.0, 0.0]), Err(Error::Unsupported(_))));
}

fn write_text(text: &str) -> (tempfile::TempDir, std::path::PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.txt");
    std::fs::write(&path, text).unwrap();
    (dir, path)
}

#[test]
fn import_rejects_bad_matrices() {
    let (_d, p) = write_text("N=2\nlambda0: 0 1\n0 0.5\n0.25 0\n");
    let err = basis::load_imported(&p).unwrap_err();
    assert!(matches!(err, Error::Validation(_)), "{err}");

    let (_d, p) = write_text("N=3\nlambda0: 0 2 1\n0 1 0\n1 0 1\n0 1 0\n");
    let err = basis::load_imported(&p).unwrap_err();
    assert!(err.to_string().contains("entry 3"), "{err}");

    let (_d, p) = write_text("N=2\nlambda0: 0 1\n0 1\n");
    let err = basis::load_imported(&p).unwrap_err();
    assert!(matches!(err, Error::Parse { line: 4, .. }), "{err}");

    let (_d, p) = write_text("N=1\nlambda0: 0\n0\n");
    assert!(matches!(basis::load_imported(&p), Err(Error::InvalidTruncation(1))));
}
