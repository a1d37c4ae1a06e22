//! The truncated operator `Λ - i g B`: assembly, eigendecomposition, modes in space and
//! time evolution.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::basis::{GeometryKind, OperatorMatrices};
use crate::error::{Error, Result};
use crate::linalg;

pub type C64 = Complex64;

/// Eigenvalues tagged with the uncoupled block each one comes from.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockSpectrum {
    pub values: Vec<C64>,
    pub blocks: Vec<usize>,
}

/// A one-parameter matrix family whose eigenvalues can be followed in the g-plane.
pub trait SpectralFamily: Sync {
    fn dimension(&self) -> usize;

    /// All eigenvalues at `g`, sorted by real part then imaginary part.
    fn spectrum(&self, g: C64) -> Result<Vec<C64>>;

    /// Same order as `spectrum`. Sheets never pass between blocks, so tracking only
    /// matches eigenvalues carrying the same block label.
    fn block_spectrum(&self, g: C64) -> Result<BlockSpectrum> {
        let values = self.spectrum(g)?;
        Ok(BlockSpectrum {
            blocks: vec![0; values.len()],
            values,
        })
    }
}

impl SpectralFamily for OperatorMatrices {
    fn dimension(&self) -> usize {
        self.size()
    }

    fn spectrum(&self, g: C64) -> Result<Vec<C64>> {
        eigenvalues(self, g)
    }

    fn block_spectrum(&self, g: C64) -> Result<BlockSpectrum> {
        let mut tagged = Vec::with_capacity(self.size());
        for (b, idx) in self.blocks().iter().enumerate() {
            tagged.extend(linalg::eigenvalues(&assemble_block(self, g, idx))?.into_iter().map(|v| (v, b)));
        }
        sort_spectrum_by(&mut tagged, |t| t.0);
        Ok(BlockSpectrum {
            values: tagged.iter().map(|t| t.0).collect(),
            blocks: tagged.iter().map(|t| t.1).collect(),
        })
    }
}

#[derive(Clone, Debug)]
pub struct EigenOptions {
    /// Modes with `|(v|v)| < defect_tol` (Hermitian-unit `v`) are flagged, not normalized.
    pub defect_tol: f64,
    /// Residual bound relative to the Frobenius norm of the matrix.
    pub residual_bound: f64,
    pub normalize: bool,
}

impl Default for EigenOptions {
    fn default() -> Self {
        EigenOptions {
            defect_tol: 1e-6,
            residual_bound: 1e-10,
            normalize: true,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SpectralSolve {
    pub g: C64,
    pub truncation: usize,
    pub eigenvalues: Vec<C64>,
    /// Row `n` holds the coefficients of mode `n` over the Laplacian basis.
    pub coefficients: DMatrix<C64>,
    pub residuals: Vec<f64>,
    pub normalized: bool,
    pub near_defect_flags: Vec<bool>,
    /// `(v|v)` of each Hermitian-unit eigenvector before normalization.
    pub self_overlaps: Vec<C64>,
    /// Frobenius norm of the assembled matrix.
    pub matrix_norm: f64,
}

impl SpectralSolve {
    pub fn mode(&self, n: usize) -> Vec<C64> {
        self.coefficients.row(n).iter().copied().collect()
    }

    pub fn has_near_defect(&self) -> bool {
        self.near_defect_flags.iter().any(|f| *f)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Magnetization {
    pub coefficients: Vec<C64>,
    pub time: f64,
}

impl Magnetization {
    pub fn new(coefficients: Vec<C64>) -> Self {
        Magnetization {
            coefficients,
            time: 0.0,
        }
    }

    /// Uniform magnetization of unit density: only the constant mode is populated.
    pub fn uniform(mats: &OperatorMatrices) -> Self {
        let mut c = vec![C64::new(0.0, 0.0); mats.size()];
        c[0] = C64::new(1.0, 0.0);
        Magnetization::new(c)
    }
}

pub fn assemble(mats: &OperatorMatrices, g: C64) -> DMatrix<C64> {
    let n = mats.size();
    let minus_ig = C64::new(0.0, -1.0) * g;
    DMatrix::from_fn(n, n, |i, j| {
        let d = if i == j { mats.lambda0[i] } else { 0.0 };
        C64::new(d, 0.0) + minus_ig * mats.b[(i, j)]
    })
}

fn assemble_block(mats: &OperatorMatrices, g: C64, idx: &[usize]) -> DMatrix<C64> {
    let minus_ig = C64::new(0.0, -1.0) * g;
    DMatrix::from_fn(idx.len(), idx.len(), |a, b| {
        let (i, j) = (idx[a], idx[b]);
        let d = if i == j { mats.lambda0[i] } else { 0.0 };
        C64::new(d, 0.0) + minus_ig * mats.b[(i, j)]
    })
}

/// Sorts by real part, then by imaginary part among values whose real parts agree to
/// rounding (conjugate pairs rarely have bitwise equal real parts).
pub fn sort_spectrum(values: &mut [C64]) {
    sort_spectrum_by(values, |v| *v);
}

fn sort_spectrum_by<T>(items: &mut [T], key: impl Fn(&T) -> C64) {
    items.sort_by(|a, b| key(a).re.total_cmp(&key(b).re));
    let scale = items.iter().fold(1.0f64, |acc, v| acc.max(key(v).norm()));
    let tol = 1e-12 * scale;
    let mut start = 0;
    while start < items.len() {
        let base = key(&items[start]).re;
        let mut end = start + 1;
        while end < items.len() && key(&items[end]).re - base <= tol {
            end += 1;
        }
        items[start..end].sort_by(|a, b| key(a).im.total_cmp(&key(b).im));
        start = end;
    }
}

/// Sorted eigenvalues only. Blocks that B does not couple are solved separately.
pub fn eigenvalues(mats: &OperatorMatrices, g: C64) -> Result<Vec<C64>> {
    let mut all = Vec::with_capacity(mats.size());
    for idx in mats.blocks() {
        all.extend(linalg::eigenvalues(&assemble_block(mats, g, idx))?);
    }
    sort_spectrum(&mut all);
    Ok(all)
}

pub fn eigensolve(mats: &OperatorMatrices, g: C64, options: &EigenOptions) -> Result<SpectralSolve> {
    let n = mats.size();
    if n < 2 {
        return Err(Error::InvalidTruncation(n));
    }
    let a = assemble(mats, g);
    let matrix_norm = a.norm();

    let mut pairs: Vec<(C64, DVector<C64>)> = Vec::with_capacity(n);
    for idx in mats.blocks() {
        let (values, vectors) = linalg::eigen(&assemble_block(mats, g, idx))?;
        for (k, lambda) in values.into_iter().enumerate() {
            let mut v = DVector::<C64>::zeros(n);
            for (a, &i) in idx.iter().enumerate() {
                v[i] = vectors[(a, k)];
            }
            pairs.push((lambda, v));
        }
    }
    sort_spectrum_by(&mut pairs, |p| p.0);

    let bound = options.residual_bound * matrix_norm;
    let mut eigenvalues = Vec::with_capacity(n);
    let mut residuals = Vec::with_capacity(n);
    let mut flags = Vec::with_capacity(n);
    let mut overlaps = Vec::with_capacity(n);
    let mut coefficients = DMatrix::<C64>::zeros(n, n);
    for (row, (mut lambda, mut v)) in pairs.into_iter().enumerate() {
        let mut res = (&a * &v - &v * lambda).norm();
        if res > bound {
            (lambda, v, res) = inverse_iteration(&a, lambda, v, res);
        }
        let overlap = v.iter().map(|x| x * x).sum::<C64>();
        let flagged = overlap.norm() < options.defect_tol;
        if options.normalize && !flagged {
            v /= overlap.sqrt();
        }
        apply_sign_convention(&mut v);
        coefficients.row_mut(row).copy_from(&v.transpose());
        eigenvalues.push(lambda);
        residuals.push(res);
        flags.push(flagged);
        overlaps.push(overlap);
    }
    Ok(SpectralSolve {
        g,
        truncation: n,
        eigenvalues,
        coefficients,
        residuals,
        normalized: options.normalize,
        near_defect_flags: flags,
        self_overlaps: overlaps,
        matrix_norm,
    })
}

/// A few shifted inverse-iteration steps; kept only if the residual improves.
fn inverse_iteration(a: &DMatrix<C64>, lambda: C64, v: DVector<C64>, res: f64) -> (C64, DVector<C64>, f64) {
    let n = a.nrows();
    let mut best = (lambda, v.clone(), res);
    let mut cur = v;
    let mut mu = lambda;
    for _ in 0..3 {
        let shifted = a - DMatrix::<C64>::identity(n, n) * mu;
        let Some(w) = shifted.lu().solve(&cur) else {
            break;
        };
        let norm = w.norm();
        if !(norm.is_finite() && norm > 0.0) {
            break;
        }
        cur = w / C64::new(norm, 0.0);
        let av = a * &cur;
        mu = cur.dotc(&av);
        let r = (&av - &cur * mu).norm();
        if r < best.2 {
            best = (mu, cur.clone(), r);
        }
    }
    best
}

/// Largest-modulus coefficient gets a positive real part (positive imaginary part on ties).
pub fn apply_sign_convention(v: &mut DVector<C64>) {
    let max = v.iter().fold(0.0f64, |a, x| a.max(x.norm()));
    let Some(pivot) = v.iter().find(|x| x.norm() >= max * (1.0 - 1e-12)).copied() else {
        return;
    };
    if pivot.re < 0.0 || (pivot.re == 0.0 && pivot.im < 0.0) {
        v.neg_mut();
    }
}

/// `(f|h) = Σ f_j h_j`, without conjugation.
pub fn bilinear_form(f: &[C64], h: &[C64]) -> Result<C64> {
    if f.len() != h.len() {
        return Err(Error::Dimension {
            expected: f.len(),
            got: h.len(),
        });
    }
    Ok(f.iter().zip(h).map(|(a, b)| a * b).sum())
}

/// Mode `n` (0-based) of `solve` at the given points; `y` is ignored on the interval.
pub fn evaluate_mode(mats: &OperatorMatrices, solve: &SpectralSolve, n: usize, points: &[[f64; 2]]) -> Result<Vec<C64>> {
    if n >= solve.truncation {
        return Err(Error::Dimension {
            expected: solve.truncation,
            got: n + 1,
        });
    }
    if solve.truncation != mats.size() {
        return Err(Error::Dimension {
            expected: mats.size(),
            got: solve.truncation,
        });
    }
    let half = 0.5 * mats.geometry.size;
    points
        .iter()
        .map(|&p| {
            let inside = match mats.geometry.kind {
                GeometryKind::Interval => p[0].abs() <= half * (1.0 + 1e-12),
                GeometryKind::Disk => p[0].hypot(p[1]) <= half * (1.0 + 1e-12),
                GeometryKind::Imported => {
                    return Err(Error::Unsupported(
                        "imported geometries carry no basis functions".into(),
                    ))
                }
            };
            if !inside {
                return Err(Error::Validation(format!("point ({}, {}) lies outside the domain", p[0], p[1])));
            }
            let mut value = C64::new(0.0, 0.0);
            for j in 0..mats.size() {
                value += solve.coefficients[(n, j)] * mats.basis_value(j, p)?;
            }
            Ok(value)
        })
        .collect()
}

/// Transports `m0` through the eigenbasis of an existing solve.
pub fn evolve_with(solve: &SpectralSolve, m0: &Magnetization, t: f64) -> Result<Magnetization> {
    let n = solve.truncation;
    if m0.coefficients.len() != n {
        return Err(Error::Dimension {
            expected: n,
            got: m0.coefficients.len(),
        });
    }
    if solve.has_near_defect() || !solve.normalized {
        let modes = (0..n).filter(|&k| solve.near_defect_flags[k]).collect();
        return Err(Error::DefectiveSpectrum { g: solve.g, modes });
    }
    let mut out = vec![C64::new(0.0, 0.0); n];
    for k in 0..n {
        let vk = solve.coefficients.row(k);
        let c: C64 = vk.iter().zip(&m0.coefficients).map(|(a, b)| a * b).sum();
        let w = c * (-solve.eigenvalues[k] * t).exp();
        for (o, v) in out.iter_mut().zip(vk.iter()) {
            *o += w * v;
        }
    }
    Ok(Magnetization {
        coefficients: out,
        time: m0.time + t,
    })
}

pub fn evolve(mats: &OperatorMatrices, g: C64, m0: &Magnetization, t: f64) -> Result<Magnetization> {
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::Validation(format!("evolution time {t} must be non-negative")));
    }
    let solve = eigensolve(mats, g, &EigenOptions::default())?;
    evolve_with(&solve, m0, t)
}

/// Number of leading sheets of `coarse` reproduced by `fine` (a larger truncation) to
/// relative tolerance `tol`, matching each coarse value to its nearest fine value.
pub fn trusted_sheet_count(coarse: &[C64], fine: &[C64], tol: f64) -> usize {
    coarse
        .iter()
        .take_while(|l| {
            let nearest = fine.iter().map(|f| (*f - **l).norm()).fold(f64::INFINITY, f64::min);
            nearest <= tol * l.norm().max(1.0)
        })
        .count()
}

/// Smallest truncation `base * 2^k` (k ≤ `max_doublings`) whose leading `n_sheets`
/// eigenvalues agree with the doubled truncation at every `g`.
pub fn resolve_truncation<F>(build: F, base: usize, gs: &[C64], n_sheets: usize, tol: f64, max_doublings: u32) -> Result<usize>
where
    F: Fn(usize) -> Result<OperatorMatrices>,
{
    let mut n = base;
    let mut coarse = build(n)?;
    for _ in 0..=max_doublings {
        let fine = build(2 * n)?;
        let mut trusted = usize::MAX;
        for &g in gs {
            let c = eigenvalues(&coarse, g)?;
            let f = eigenvalues(&fine, g)?;
            trusted = trusted.min(trusted_sheet_count(&c, &f, tol));
        }
        if trusted >= n_sheets {
            return Ok(n);
        }
        n *= 2;
        coarse = fine;
    }
    Err(Error::Validation(format!(
        "{n_sheets} sheets are not trusted up to truncation {}; increase the truncation",
        n / 2
    )))
}
