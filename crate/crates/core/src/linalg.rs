//! Dense complex eigensolver: Householder reduction to Hessenberg form followed by
//! single-shift QR sweeps with Givens rotations, then back substitution on the
//! triangular Schur factor for eigenvectors.
//!
//! Matrices are held row-major in a flat `Vec` while iterating. The nalgebra types are
//! only used at the boundary.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

type C64 = Complex64;

const ULP: f64 = f64::EPSILON;

/// Row-major square working matrix.
#[derive(Clone, Debug)]
struct Square {
    n: usize,
    data: Vec<C64>,
}

impl Square {
    fn from_dmatrix(a: &DMatrix<C64>) -> Self {
        let n = a.nrows();
        let mut data = vec![C64::new(0.0, 0.0); n * n];
        for i in 0..n {
            for j in 0..n {
                data[i * n + j] = a[(i, j)];
            }
        }
        Square { n, data }
    }

    fn identity(n: usize) -> Self {
        let mut data = vec![C64::new(0.0, 0.0); n * n];
        for i in 0..n {
            data[i * n + i] = C64::new(1.0, 0.0);
        }
        Square { n, data }
    }

    #[inline]
    fn at(&self, i: usize, j: usize) -> C64 {
        self.data[i * self.n + j]
    }

    #[inline]
    fn set(&mut self, i: usize, j: usize, v: C64) {
        self.data[i * self.n + j] = v;
    }
}

#[inline]
fn abs1(z: C64) -> f64 {
    z.re.abs() + z.im.abs()
}

/// Rotation `[[c, s], [-conj(s), c]]` with real `c` mapping `(x, y)` to `(r, 0)`.
#[inline]
fn givens(x: C64, y: C64) -> (f64, C64, C64) {
    let ay = y.norm();
    if ay == 0.0 {
        return (1.0, C64::new(0.0, 0.0), x);
    }
    let ax = x.norm();
    if ax == 0.0 {
        return (0.0, y.conj() / ay, C64::new(ay, 0.0));
    }
    let norm = ax.hypot(ay);
    let phase = x / ax;
    (ax / norm, phase * y.conj() / norm, phase * norm)
}

fn hessenberg(h: &mut Square, mut z: Option<&mut Square>) {
    let n = h.n;
    if n < 3 {
        return;
    }
    let mut v = vec![C64::new(0.0, 0.0); n];
    for k in 0..n - 2 {
        let len = n - k - 1;
        let mut tail = 0.0;
        for i in 0..len {
            v[i] = h.at(k + 1 + i, k);
            if i > 0 {
                tail += v[i].norm_sqr();
            }
        }
        if tail == 0.0 {
            continue;
        }
        let norm = (tail + v[0].norm_sqr()).sqrt();
        let phase = if v[0].norm() == 0.0 {
            C64::new(1.0, 0.0)
        } else {
            v[0] / v[0].norm()
        };
        let alpha = -phase * norm;
        v[0] -= alpha;
        let vnorm2: f64 = v[..len].iter().map(|x| x.norm_sqr()).sum();
        let scale = 2.0 / vnorm2;

        // Left: rows k+1.., columns k..
        for j in k..n {
            let mut s = C64::new(0.0, 0.0);
            for i in 0..len {
                s += v[i].conj() * h.at(k + 1 + i, j);
            }
            s *= scale;
            for i in 0..len {
                let idx = (k + 1 + i) * n + j;
                h.data[idx] -= s * v[i];
            }
        }
        // Right: all rows, columns k+1..
        for i in 0..n {
            let row = &mut h.data[i * n + k + 1..i * n + n];
            let mut s = C64::new(0.0, 0.0);
            for (x, vj) in row.iter().zip(&v[..len]) {
                s += x * vj;
            }
            s *= scale;
            for (x, vj) in row.iter_mut().zip(&v[..len]) {
                *x -= s * vj.conj();
            }
        }
        if let Some(z) = z.as_deref_mut() {
            for i in 0..n {
                let row = &mut z.data[i * n + k + 1..i * n + n];
                let mut s = C64::new(0.0, 0.0);
                for (x, vj) in row.iter().zip(&v[..len]) {
                    s += x * vj;
                }
                s *= scale;
                for (x, vj) in row.iter_mut().zip(&v[..len]) {
                    *x -= s * vj.conj();
                }
            }
        }
        h.set(k + 1, k, alpha);
        for i in k + 2..n {
            h.set(i, k, C64::new(0.0, 0.0));
        }
    }
}

/// QR iteration on an upper Hessenberg matrix. With `want_schur` the full triangular
/// factor is formed (and accumulated into `z` if given); otherwise only the active
/// window is updated, which is enough for the eigenvalues.
fn hessenberg_qr(h: &mut Square, mut z: Option<&mut Square>, want_schur: bool) -> Result<usize> {
    let n = h.n;
    if n == 0 {
        return Ok(0);
    }
    let smlnum = f64::MIN_POSITIVE * (n as f64 / ULP);
    let itmax = 30 * n.max(10);
    let mut sweeps = 0;
    let mut ihi = n - 1;
    loop {
        let mut its = 0;
        loop {
            let mut l = 0;
            for k in (1..=ihi).rev() {
                let sub = abs1(h.at(k, k - 1));
                if sub <= smlnum {
                    l = k;
                    break;
                }
                let mut tst = abs1(h.at(k - 1, k - 1)) + abs1(h.at(k, k));
                if tst == 0.0 {
                    if k >= 2 {
                        tst += h.at(k - 1, k - 2).re.abs();
                    }
                    if k < ihi {
                        tst += h.at(k + 1, k).re.abs();
                    }
                }
                if sub <= ULP * tst {
                    l = k;
                    break;
                }
            }
            if l > 0 {
                h.set(l, l - 1, C64::new(0.0, 0.0));
            }
            if l >= ihi {
                break;
            }
            its += 1;
            sweeps += 1;
            if its > itmax {
                return Err(Error::Solver {
                    iterations: sweeps,
                    unconverged: ihi + 1,
                });
            }

            let shift = if its % 10 == 0 {
                h.at(ihi, ihi) + 0.75 * h.at(ihi, ihi - 1).re.abs()
            } else {
                let mut t = h.at(ihi, ihi);
                let u = h.at(ihi - 1, ihi).sqrt() * h.at(ihi, ihi - 1).sqrt();
                let s = abs1(u);
                if s != 0.0 {
                    let x = 0.5 * (h.at(ihi - 1, ihi - 1) - t);
                    let sx = abs1(x);
                    let s = s.max(sx);
                    let mut y = s * ((x / s) * (x / s) + (u / s) * (u / s)).sqrt();
                    if sx > 0.0 {
                        let xs = x / sx;
                        if xs.re * y.re + xs.im * y.im < 0.0 {
                            y = -y;
                        }
                    }
                    t -= u * (u / (x + y));
                }
                t
            };

            let (i1, i2) = if want_schur { (0, n - 1) } else { (l, ihi) };
            for k in l..ihi {
                let (x, y) = if k == l {
                    (h.at(l, l) - shift, h.at(l + 1, l))
                } else {
                    (h.at(k, k - 1), h.at(k + 1, k - 1))
                };
                let (c, s, r) = givens(x, y);
                let jstart = if k > l {
                    h.set(k, k - 1, r);
                    h.set(k + 1, k - 1, C64::new(0.0, 0.0));
                    k
                } else {
                    l
                };
                for j in jstart..=i2 {
                    let a = h.at(k, j);
                    let b = h.at(k + 1, j);
                    h.set(k, j, a * c + s * b);
                    h.set(k + 1, j, -s.conj() * a + b * c);
                }
                let iend = (k + 2).min(ihi);
                for i in i1..=iend {
                    let a = h.at(i, k);
                    let b = h.at(i, k + 1);
                    h.set(i, k, a * c + s.conj() * b);
                    h.set(i, k + 1, -s * a + b * c);
                }
                if let Some(z) = z.as_deref_mut() {
                    for i in 0..n {
                        let a = z.at(i, k);
                        let b = z.at(i, k + 1);
                        z.set(i, k, a * c + s.conj() * b);
                        z.set(i, k + 1, -s * a + b * c);
                    }
                }
            }
        }
        if ihi == 0 {
            break;
        }
        ihi -= 1;
    }
    Ok(sweeps)
}

/// Eigenvalues of a general complex matrix, unsorted.
pub fn eigenvalues(a: &DMatrix<C64>) -> Result<Vec<C64>> {
    let mut h = Square::from_dmatrix(a);
    hessenberg(&mut h, None);
    hessenberg_qr(&mut h, None, false)?;
    Ok((0..h.n).map(|i| h.at(i, i)).collect())
}

/// Eigenvalues and right eigenvectors (columns, unit Hermitian norm), unsorted.
pub fn eigen(a: &DMatrix<C64>) -> Result<(Vec<C64>, DMatrix<C64>)> {
    let n = a.nrows();
    let mut t = Square::from_dmatrix(a);
    let mut z = Square::identity(n);
    hessenberg(&mut t, Some(&mut z));
    hessenberg_qr(&mut t, Some(&mut z), true)?;

    let tnorm = t.data.iter().map(|x| abs1(*x)).fold(0.0, f64::max);
    let smin = (ULP * tnorm).max(smallest_pivot());
    let lambda: Vec<C64> = (0..n).map(|i| t.at(i, i)).collect();
    let mut vectors = DMatrix::<C64>::zeros(n, n);
    let mut x = vec![C64::new(0.0, 0.0); n];
    for k in 0..n {
        for xi in x.iter_mut() {
            *xi = C64::new(0.0, 0.0);
        }
        x[k] = C64::new(1.0, 0.0);
        for j in (0..k).rev() {
            let mut sum = C64::new(0.0, 0.0);
            for i in j + 1..=k {
                sum += t.at(j, i) * x[i];
            }
            let mut d = t.at(j, j) - lambda[k];
            if abs1(d) < smin {
                d = C64::new(smin, 0.0);
            }
            x[j] = -sum / d;
            let big = abs1(x[j]);
            if big > 1e100 {
                for xi in x[j..=k].iter_mut() {
                    *xi /= big;
                }
            }
        }
        let mut col = vec![C64::new(0.0, 0.0); n];
        for (i, c) in col.iter_mut().enumerate() {
            let row = &z.data[i * n..i * n + k + 1];
            let mut s = C64::new(0.0, 0.0);
            for (zij, xj) in row.iter().zip(&x[..=k]) {
                s += zij * xj;
            }
            *c = s;
        }
        let norm = col.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        for (i, c) in col.into_iter().enumerate() {
            vectors[(i, k)] = c / norm;
        }
    }
    Ok((lambda, vectors))
}

fn smallest_pivot() -> f64 {
    f64::MIN_POSITIVE / ULP
}

#[cfg(test)]
mod tests {
    use super::*;

    fn test_matrix(n: usize, seed: u64) -> DMatrix<C64> {
        let mut state = seed;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        };
        DMatrix::from_fn(n, n, |_, _| C64::new(next(), next()))
    }

    #[test]
    fn eigenpairs_have_small_residuals() {
        for &n in &[1usize, 2, 3, 7, 40] {
            let a = test_matrix(n, n as u64 + 3);
            let (lambda, v) = eigen(&a).unwrap();
            let scale = a.norm();
            for k in 0..n {
                let col = v.column(k).into_owned();
                let r = &a * &col - col.clone() * lambda[k];
                assert!(r.norm() <= 1e-12 * scale, "n={n} k={k} r={}", r.norm());
            }
        }
    }

    #[test]
    fn eigenvalue_only_path_agrees_with_full_path() {
        let a = test_matrix(25, 11);
        let mut e1 = eigenvalues(&a).unwrap();
        let (mut e2, _) = eigen(&a).unwrap();
        let key = |z: &C64| (z.re, z.im);
        e1.sort_by(|x, y| key(x).partial_cmp(&key(y)).unwrap());
        e2.sort_by(|x, y| key(x).partial_cmp(&key(y)).unwrap());
        for (x, y) in e1.iter().zip(&e2) {
            assert!((x - y).norm() < 1e-12);
        }
    }

    #[test]
    fn jordan_block_does_not_break_back_substitution() {
        let mut a = DMatrix::<C64>::zeros(2, 2);
        a[(0, 0)] = C64::new(1.0, 0.0);
        a[(1, 1)] = C64::new(1.0, 0.0);
        a[(0, 1)] = C64::new(1.0, 0.0);
        let (lambda, v) = eigen(&a).unwrap();
        assert!(lambda.iter().all(|l| (l - C64::new(1.0, 0.0)).norm() < 1e-14));
        assert!(v.iter().all(|x| x.is_finite()));
    }
}
