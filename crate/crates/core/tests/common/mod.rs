//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use nalgebra::DMatrix;
use torrey_core::assignment;
use torrey_core::C64;

pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// Gauss-Legendre nodes and weights on [a, b] by Newton iteration on P_n.
pub fn legendre_rule(n: usize, a: f64, b: f64) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        out.push((0.5 * (a + b) + 0.5 * (b - a) * x, 0.5 * (b - a) * w));
    }
    out
}

/// J_m by its power series; fine for the moderate arguments used here.
pub fn bessel_series(m: u32, x: f64) -> f64 {
    let half = 0.5 * x;
    let mut term = half.powi(m as i32) / (1..=m).map(|k| k as f64).product::<f64>();
    let mut sum = term;
    for k in 1..200 {
        term *= -half * half / (k as f64 * (k + m as usize) as f64);
        sum += term;
        if term.abs() < 1e-18 * sum.abs().max(1e-300) {
            break;
        }
    }
    sum
}

pub fn bessel_series_prime(m: u32, x: f64) -> f64 {
    if m == 0 {
        -bessel_series(1, x)
    } else {
        0.5 * (bessel_series(m - 1, x) - bessel_series(m + 1, x))
    }
}

/// Matrix exponential by scaling and squaring with a degree-20 Taylor polynomial.
pub fn expm(a: &DMatrix<C64>) -> DMatrix<C64> {
    let n = a.nrows();
    let norm1 = (0..n)
        .map(|j| (0..n).map(|i| a[(i, j)].norm()).sum::<f64>())
        .fold(0.0f64, f64::max);
    let squarings = if norm1 > 0.5 { (norm1 / 0.5).log2().ceil() as i32 } else { 0 };
    let scaled = a / C64::new(2f64.powi(squarings), 0.0);
    let mut result = DMatrix::<C64>::identity(n, n);
    let mut term = DMatrix::<C64>::identity(n, n);
    for k in 1..=20 {
        term = &term * &scaled / C64::new(k as f64, 0.0);
        result += &term;
    }
    for _ in 0..squarings {
        result = &result * &result;
    }
    result
}

/// Largest distance in the optimal one-to-one matching of two equally long lists.
pub fn matching_distance(a: &[C64], b: &[C64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let n = a.len();
    let cost: Vec<f64> = (0..n * n).map(|k| (a[k / n] - b[k % n]).norm_sqr()).collect();
    let (assign, _) = assignment::solve(&cost, n, n);
    assign
        .iter()
        .enumerate()
        .map(|(i, &j)| (a[i] - b[j]).norm())
        .fold(0.0, f64::max)
}

/// The interval branch point from the first zero of J_{-2/3}: 8√3 (27/32) j².
pub fn interval_branch_point() -> f64 {
    // J_{-2/3} by its series; the first zero lies between 0.5 and 2.
    let j = |x: f64| {
        let nu = -2.0 / 3.0;
        let half = 0.5 * x;
        let mut term = half.powf(nu) / gamma(nu + 1.0);
        let mut sum = term;
        for k in 1..100 {
            term *= -half * half / (k as f64 * (k as f64 + nu));
            sum += term;
        }
        sum
    };
    let (mut lo, mut hi) = (0.5, 2.0);
    assert!(j(lo) * j(hi) < 0.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if j(lo) * j(mid) <= 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let j1 = 0.5 * (lo + hi);
    8.0 * 3f64.sqrt() * (27.0 / 32.0) * j1 * j1
}

/// Lanczos approximation, g = 7.
fn gamma(x: f64) -> f64 {
    const COEF: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        std::f64::consts::PI / ((std::f64::consts::PI * x).sin() * gamma(1.0 - x))
    } else {
        let x = x - 1.0;
        let t = x + 7.5;
        let mut a = COEF[0];
        for (i, c) in COEF.iter().enumerate().skip(1) {
            a += c / (x + i as f64);
        }
        (2.0 * std::f64::consts::PI).sqrt() * t.powf(x + 0.5) * (-t).exp() * a
    }
}
