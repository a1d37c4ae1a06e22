//! Gauss-Legendre nodes and integer-order Bessel functions of the first kind.

use std::f64::consts::PI;

/// Gauss-Legendre nodes and weights on `[a, b]`.
pub fn gauss_legendre(n: usize, a: f64, b: f64) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let half = 0.5 * (b - a);
    let mid = 0.5 * (b + a);
    for i in 0..n.div_ceil(2) {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = mid - half * x;
        nodes[n - 1 - i] = mid + half * x;
        weights[i] = half * w;
        weights[n - 1 - i] = half * w;
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// J_m(x) for integer `m` from the periodic trapezoid rule on Bessel's integral, which
/// converges geometrically once the point count exceeds `|x| + |m|` by a margin.
pub fn bessel_j(m: i32, x: f64) -> f64 {
    if m < 0 {
        let v = bessel_j(-m, x);
        return if m % 2 == 0 { v } else { -v };
    }
    let half = ((x.abs() + m as f64) as usize + 40).max(32);
    let count = 2 * half;
    let mf = m as f64;
    let f = |tau: f64| (mf * tau - x * tau.sin()).cos();
    let mut sum = f(0.0) + f(PI);
    for j in 1..half {
        let tau = PI * j as f64 / half as f64;
        sum += 2.0 * f(tau);
    }
    sum / count as f64
}

/// Derivative J'_m(x).
pub fn bessel_j_prime(m: i32, x: f64) -> f64 {
    0.5 * (bessel_j(m - 1, x) - bessel_j(m + 1, x))
}

/// McMahon's large-zero expansion of the k-th positive zero of J'_m.
pub fn mcmahon_jprime_zero(m: u32, k: u32) -> f64 {
    let mu = 4.0 * (m as f64).powi(2);
    let b = (k as f64 + 0.5 * m as f64 - 0.75) * PI;
    b - (mu + 3.0) / (8.0 * b) - 4.0 * (7.0 * mu * mu + 82.0 * mu - 9.0) / (3.0 * (8.0 * b).powi(3))
}

/// Positive zeros of J'_m below `x_max`, in increasing order. The trivial zero at the
/// origin for m = 0 is not included.
pub fn bessel_jprime_zeros(m: u32, x_max: f64) -> Result<Vec<f64>, String> {
    let mi = m as i32;
    let f = |x: f64| bessel_j_prime(mi, x);
    let step = 0.05;
    let mut zeros = Vec::new();
    let mut a = if m == 0 { step } else { m as f64 };
    let mut fa = f(a);
    while a < x_max {
        let b = a + step;
        let fb = f(b);
        if fa == 0.0 {
            zeros.push(a);
        } else if fa * fb < 0.0 {
            zeros.push(polish_root(mi, a, b, fa)?);
        }
        a = b;
        fa = fb;
    }
    zeros.retain(|z| *z < x_max);
    Ok(zeros)
}

/// Bisection to a tight bracket, then Newton using the Bessel equation for J''_m.
fn polish_root(m: i32, mut a: f64, mut b: f64, mut fa: f64) -> Result<f64, String> {
    for _ in 0..30 {
        let c = 0.5 * (a + b);
        let fc = bessel_j_prime(m, c);
        if fc == 0.0 {
            return Ok(c);
        }
        if fa * fc < 0.0 {
            b = c;
        } else {
            a = c;
            fa = fc;
        }
    }
    let mut x = 0.5 * (a + b);
    let mf = m as f64;
    for _ in 0..20 {
        let d1 = bessel_j_prime(m, x);
        let d2 = -d1 / x - (1.0 - mf * mf / (x * x)) * bessel_j(m, x);
        if d2 == 0.0 {
            break;
        }
        let dx = d1 / d2;
        x -= dx;
        if dx.abs() <= 1e-15 * x {
            break;
        }
    }
    if !(x > a - 1e-9 && x < b + 1e-9) || !x.is_finite() {
        return Err(format!("Newton left the bracket [{a}, {b}] for J'_{m}"));
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_integrates_polynomials_exactly() {
        let (x, w) = gauss_legendre(10, 0.0, 2.0);
        let integral: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(19)).sum();
        assert!((integral - 2f64.powi(20) / 20.0).abs() < 1e-9 * 2f64.powi(20) / 20.0);
        assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-14);
    }

    #[test]
    fn bessel_values_match_tables() {
        // Abramowitz & Stegun table 9.1.
        assert!((bessel_j(0, 1.0) - 0.765_197_686_557_966_6).abs() < 1e-15);
        assert!((bessel_j(1, 2.5) - 0.497_094_102_464_274_0).abs() < 1e-15);
        assert!((bessel_j(2, 10.0) - 0.254_630_313_685_120_6).abs() < 1e-14);
        assert!((bessel_j(-3, 4.0) + bessel_j(3, 4.0)).abs() < 1e-16);
    }

    #[test]
    fn derivative_zeros_match_known_values() {
        let z1 = bessel_jprime_zeros(1, 10.0).unwrap();
        assert!((z1[0] - 1.841_183_781_340_659).abs() < 1e-12);
        assert!((z1[1] - 5.331_442_773_525_033).abs() < 1e-12);
        let z0 = bessel_jprime_zeros(0, 8.0).unwrap();
        assert!((z0[0] - 3.831_705_970_207_512).abs() < 1e-12);
        let z2 = bessel_jprime_zeros(2, 4.0).unwrap();
        assert!((z2[0] - 3.054_236_928_227_140).abs() < 1e-12);
    }

    #[test]
    fn mcmahon_is_close_for_higher_zeros() {
        let z = bessel_jprime_zeros(3, 40.0).unwrap();
        for (k, zk) in z.iter().enumerate().skip(2) {
            let approx = mcmahon_jprime_zero(3, k as u32 + 1);
            assert!((approx - zk).abs() < 1e-2, "k={k} {approx} {zk}");
        }
    }
}
