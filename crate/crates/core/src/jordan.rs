//! Local structure at a branch point g0: the self-orthogonal mode v0, the generalized
//! mode y0 with `A0 y0 = λ0 y0 + η0 v0`, mode collapse and evolution with the Jordan
//! block.
//!
//! Projections onto the pair use the 2x2 Gram system of the bilinear form on
//! span(v0, y0). It reduces to the textbook coefficients when `(v0|v0) = (y0|y0) = 0`
//! and, unlike them, does not depend on how y0 is gauged.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::basis::OperatorMatrices;
use crate::error::{Error, Result};
use crate::io::fmt_f64;
use crate::operator::{self, apply_sign_convention, SpectralFamily, assemble, bilinear_form, eigensolve, EigenOptions, Magnetization, C64};
use crate::scanner::BranchPoint;

#[derive(Clone, Debug, Serialize)]
pub struct GaugeRecord {
    pub v0: String,
    pub y0: String,
    pub eta0: String,
    pub probe_offsets: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct JordanData {
    pub g0: C64,
    pub lambda0: C64,
    pub v0: Vec<C64>,
    pub y0: Vec<C64>,
    pub eta0: C64,
    /// `(2 (v0|y0))^(-1/2)`, principal branch.
    pub c: C64,
    pub gauge: GaugeRecord,
    /// `‖A0 y0 - λ0 y0 - η0 v0‖`.
    pub jordan_residual: f64,
    /// `|(v0|v0)|`.
    pub self_overlap: f64,
    /// Frobenius norm of `A0`.
    pub matrix_norm: f64,
    /// The two smallest singular values of `A0 - λ0`.
    pub singular_values: [f64; 2],
}

#[derive(Clone, Debug)]
pub struct JordanOptions {
    /// Probe offsets for η0, relative to |g0|.
    pub probe_offsets: Vec<f64>,
    /// Lowest sheets searched for the coalescing pair.
    pub window: usize,
    /// Second singular value below this (relative to ‖A0‖) means a higher degeneracy.
    pub degeneracy_tol: f64,
}

impl Default for JordanOptions {
    fn default() -> Self {
        JordanOptions {
            probe_offsets: vec![1e-3, 1e-4, 1e-5, 1e-6],
            window: 8,
            degeneracy_tol: 1e-6,
        }
    }
}

fn hermitian_norm(v: &[C64]) -> f64 {
    v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

/// `λ0` and the sorted indices of the closest pair among the lowest `window` eigenvalues.
pub fn coalescing_pair(values: &[C64], window: usize) -> (C64, usize, usize) {
    let w = window.clamp(2, values.len());
    let mut best = (0, 1, f64::INFINITY);
    for i in 0..w {
        for j in i + 1..w {
            let d = (values[i] - values[j]).norm();
            if d < best.2 {
                best = (i, j, d);
            }
        }
    }
    ((values[best.0] + values[best.1]) * 0.5, best.0, best.1)
}

/// Indices of the two eigenvalues closest to `target`.
fn nearest_two(values: &[C64], target: C64) -> (usize, usize) {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| (values[a] - target).norm().total_cmp(&(values[b] - target).norm()));
    (idx[0].min(idx[1]), idx[0].max(idx[1]))
}

pub fn extract(mats: &OperatorMatrices, bp: &BranchPoint, options: &JordanOptions) -> Result<JordanData> {
    let n = mats.size();
    let g0 = bp.g0;
    let a0 = assemble(mats, g0);
    let matrix_norm = a0.norm();
    // The pair must come from one uncoupled block; an accidental crossing with another
    // block would show up as a second small singular value.
    let spec = mats.block_spectrum(g0)?;
    let window = options.window.max(bp.sheet_pair.1 + 1).clamp(2, n);
    let mut best: Option<(usize, usize, f64)> = None;
    for i in 0..window {
        for j in i + 1..window {
            let d = (spec.values[i] - spec.values[j]).norm();
            if spec.blocks[i] == spec.blocks[j] && best.is_none_or(|b| d < b.2) {
                best = Some((i, j, d));
            }
        }
    }
    let (pi, pj, _) = best.ok_or_else(|| Error::Validation("no eigenvalue pair within one block".into()))?;
    let lambda0 = (spec.values[pi] + spec.values[pj]) * 0.5;
    let pair_block = spec.blocks[pi];

    let shifted = &a0 - DMatrix::<C64>::identity(n, n) * lambda0;
    let svd = shifted.clone().svd(false, true);
    let v_t = svd.v_t.as_ref().expect("right singular vectors requested");
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| svd.singular_values[a].total_cmp(&svd.singular_values[b]));
    let sigma = [svd.singular_values[order[0]], svd.singular_values[order[1]]];
    if sigma[1] <= options.degeneracy_tol * matrix_norm {
        return Err(Error::NotSimpleBranchPoint { g: g0, sigma });
    }
    let mut v0 = DVector::from_iterator(n, v_t.row(order[0]).iter().map(|x| x.conj()));
    v0 /= C64::new(v0.norm(), 0.0);
    apply_sign_convention(&mut v0);

    // Gap of the pair against 2√δ, δ decreasing; the sign of each ratio follows the
    // previous one so that one branch of the square root is used throughout.
    let mut ratios: Vec<C64> = Vec::new();
    let mut offsets = options.probe_offsets.clone();
    offsets.sort_by(|a, b| b.total_cmp(a));
    let scale = g0.norm().max(1.0);
    for rel in &offsets {
        let delta = rel * scale;
        let spec = mats.block_spectrum(g0 + delta)?;
        let probe: Vec<C64> = spec
            .values
            .iter()
            .zip(&spec.blocks)
            .filter(|(_, b)| **b == pair_block)
            .map(|(v, _)| *v)
            .collect();
        let (i, j) = nearest_two(&probe, lambda0);
        let mut r = (probe[j] - probe[i]) / (2.0 * delta.sqrt());
        match ratios.last() {
            Some(prev) if (r - prev).norm() > (r + prev).norm() => r = -r,
            None if r.re < 0.0 || (r.re == 0.0 && r.im < 0.0) => r = -r,
            _ => {}
        }
        ratios.push(r);
    }
    let eta0 = ratios.iter().sum::<C64>() / ratios.len() as f64;

    // Least squares for [A0 - λ0; v0^H] y = [η0 v0; 0].
    let mut aug = DMatrix::<C64>::zeros(n + 1, n);
    aug.view_mut((0, 0), (n, n)).copy_from(&shifted);
    for j in 0..n {
        aug[(n, j)] = v0[j].conj();
    }
    let mut rhs = DVector::<C64>::zeros(n + 1);
    for i in 0..n {
        rhs[i] = eta0 * v0[i];
    }
    let aug_svd = aug.svd(true, true);
    let cutoff = 1e-14 * aug_svd.singular_values.max();
    let mut y0 = aug_svd
        .solve(&rhs, cutoff)
        .map_err(|e| Error::Validation(format!("least-squares solve failed: {e}")))?;
    let along = v0.dotc(&y0);
    y0 -= &v0 * along;

    let residual = (&shifted * &y0 - &v0 * eta0).norm();
    let v0: Vec<C64> = v0.iter().copied().collect();
    let y0: Vec<C64> = y0.iter().copied().collect();
    let vy = bilinear_form(&v0, &y0)?;
    let c = (vy * 2.0).sqrt().inv();
    let self_overlap = bilinear_form(&v0, &v0)?.norm();

    Ok(JordanData {
        g0,
        lambda0,
        v0,
        y0,
        eta0,
        c,
        gauge: GaugeRecord {
            v0: "smallest right singular vector of A0 - lambda0, unit Hermitian norm, largest-modulus coefficient with positive real part".into(),
            y0: "least-squares solution of (A0 - lambda0) y0 = eta0 v0, Hermitian-orthogonal to v0".into(),
            eta0: "mean of (lambda_plus - lambda_minus) / (2 sqrt(delta)) at the probe offsets, branch chosen by continuity from the largest offset".into(),
            probe_offsets: offsets.iter().map(|r| r * scale).collect(),
        },
        jordan_residual: residual,
        self_overlap,
        matrix_norm,
        singular_values: sigma,
    })
}

/// Coefficients `(a, b)` of the bilinear projection of `f` onto span(v0, y0).
fn pair_coefficients(jd: &JordanData, f: &[C64]) -> Result<(C64, C64)> {
    let vv = bilinear_form(&jd.v0, &jd.v0)?;
    let vy = bilinear_form(&jd.v0, &jd.y0)?;
    let yy = bilinear_form(&jd.y0, &jd.y0)?;
    let fv = bilinear_form(f, &jd.v0)?;
    let fy = bilinear_form(f, &jd.y0)?;
    let det = vv * yy - vy * vy;
    let a = (fv * yy - fy * vy) / det;
    let b = (fy * vv - fv * vy) / det;
    Ok((a, b))
}

/// Limit of `(f|v1) v1 + (f|v2) v2` as g -> g0.
pub fn limit_projection(jd: &JordanData, f: &[C64]) -> Result<Vec<C64>> {
    let (a, b) = pair_coefficients(jd, f)?;
    Ok(jd.v0.iter().zip(&jd.y0).map(|(v, y)| a * v + b * y).collect())
}

/// `e^{-λ0 t} [[1, -η0 t], [0, 1]]`, the exponential of `-t [[λ0, η0], [0, λ0]]`.
pub fn jordan_block_exponential(lambda0: C64, eta0: C64, t: f64) -> [[C64; 2]; 2] {
    let e = (-lambda0 * t).exp();
    let zero = C64::new(0.0, 0.0);
    [[e, -e * eta0 * t], [zero, e]]
}

/// Evolution at g0 over the basis (v0, y0, v3, v4, ...).
pub fn evolve_at_branch_point(jd: &JordanData, mats: &OperatorMatrices, m0: &Magnetization, t: f64) -> Result<Magnetization> {
    let n = mats.size();
    if m0.coefficients.len() != n {
        return Err(Error::Dimension {
            expected: n,
            got: m0.coefficients.len(),
        });
    }
    let options = EigenOptions {
        defect_tol: 0.0,
        ..EigenOptions::default()
    };
    let solve = eigensolve(mats, jd.g0, &options)?;
    let (p, q) = nearest_two(&solve.eigenvalues, jd.lambda0);

    let (a, b) = pair_coefficients(jd, &m0.coefficients)?;
    let block = jordan_block_exponential(jd.lambda0, jd.eta0, t);
    let ca = block[0][0] * a + block[0][1] * b;
    let cb = block[1][1] * b;
    let mut out: Vec<C64> = jd.v0.iter().zip(&jd.y0).map(|(v, y)| ca * v + cb * y).collect();
    for k in (0..n).filter(|&k| k != p && k != q) {
        let vk = solve.mode(k);
        let w = bilinear_form(&m0.coefficients, &vk)? * (-solve.eigenvalues[k] * t).exp();
        for (o, v) in out.iter_mut().zip(&vk) {
            *o += w * v;
        }
    }
    Ok(Magnetization {
        coefficients: out,
        time: m0.time + t,
    })
}

/// One `delta,quantity,value` row.
#[derive(Clone, Debug, PartialEq)]
pub struct DiagnosticRow {
    pub delta: f64,
    pub quantity: &'static str,
    pub value: f64,
}

pub fn write_diagnostics<W: Write>(out: W, rows: &[DiagnosticRow]) -> std::io::Result<()> {
    let lines = rows
        .iter()
        .map(|r| vec![fmt_f64(r.delta), r.quantity.to_string(), fmt_f64(r.value)]);
    crate::io::write_csv(out, "delta,quantity,value", lines)
}

fn pair_near(mats: &OperatorMatrices, bp: &BranchPoint, window: usize) -> Result<C64> {
    let values = operator::eigenvalues(mats, bp.g0)?;
    Ok(coalescing_pair(&values, window.max(bp.sheet_pair.1 + 1)).0)
}

/// Per offset δ (along `direction`): `(v|v)` of both Hermitian-unit coalescing modes,
/// their Hermitian overlap, and the Hermitian norms of the bilinear-normalized modes.
pub fn collapse_diagnostics(mats: &OperatorMatrices, bp: &BranchPoint, offsets: &[f64], direction: C64) -> Result<Vec<DiagnosticRow>> {
    let lambda0 = pair_near(mats, bp, JordanOptions::default().window)?;
    let options = EigenOptions {
        normalize: false,
        ..EigenOptions::default()
    };
    let mut rows = Vec::new();
    for &delta in offsets {
        let solve = eigensolve(mats, bp.g0 + direction * delta, &options)?;
        let (i, j) = nearest_two(&solve.eigenvalues, lambda0);
        let (u1, u2) = (solve.mode(i), solve.mode(j));
        let s1 = bilinear_form(&u1, &u1)?.norm();
        let s2 = bilinear_form(&u2, &u2)?.norm();
        let overlap = u1.iter().zip(&u2).map(|(a, b)| a.conj() * b).sum::<C64>().norm()
            / (hermitian_norm(&u1) * hermitian_norm(&u2));
        rows.push(DiagnosticRow { delta, quantity: "self_overlap_1", value: s1 });
        rows.push(DiagnosticRow { delta, quantity: "self_overlap_2", value: s2 });
        rows.push(DiagnosticRow { delta, quantity: "hermitian_overlap", value: overlap });
        rows.push(DiagnosticRow { delta, quantity: "amplitude_1", value: 1.0 / s1.sqrt() });
        rows.push(DiagnosticRow { delta, quantity: "amplitude_2", value: 1.0 / s2.sqrt() });
    }
    Ok(rows)
}

/// Distance between `(f|v1) v1 + (f|v2) v2` at `g0 + δ direction` and its limit.
pub fn check_decomposition_regularity(
    mats: &OperatorMatrices,
    jd: &JordanData,
    f: &[C64],
    offsets: &[f64],
    direction: C64,
) -> Result<Vec<DiagnosticRow>> {
    let limit = limit_projection(jd, f)?;
    let options = EigenOptions {
        defect_tol: 0.0,
        ..EigenOptions::default()
    };
    let mut rows = Vec::new();
    for &delta in offsets {
        let solve = eigensolve(mats, jd.g0 + direction * delta, &options)?;
        let (i, j) = nearest_two(&solve.eigenvalues, jd.lambda0);
        let mut f12 = vec![C64::new(0.0, 0.0); f.len()];
        for k in [i, j] {
            let vk = solve.mode(k);
            let w = bilinear_form(f, &vk)?;
            for (o, v) in f12.iter_mut().zip(&vk) {
                *o += w * v;
            }
        }
        let deviation: Vec<C64> = f12.iter().zip(&limit).map(|(a, b)| a - b).collect();
        rows.push(DiagnosticRow { delta, quantity: "deviation", value: hermitian_norm(&deviation) });
        rows.push(DiagnosticRow { delta, quantity: "projection_norm", value: hermitian_norm(&f12) });
    }
    Ok(rows)
}

#[derive(Serialize)]
struct JordanRecord<'a> {
    g0: [f64; 2],
    lambda0: [f64; 2],
    eta0: [f64; 2],
    c: [f64; 2],
    jordan_residual: f64,
    self_overlap: f64,
    matrix_norm: f64,
    singular_values: [f64; 2],
    gauge: &'a GaugeRecord,
    v0: Vec<[f64; 2]>,
    y0: Vec<[f64; 2]>,
}

impl JordanData {
    pub fn to_json(&self) -> String {
        let pair = |z: C64| [z.re, z.im];
        let rec = JordanRecord {
            g0: pair(self.g0),
            lambda0: pair(self.lambda0),
            eta0: pair(self.eta0),
            c: pair(self.c),
            jordan_residual: self.jordan_residual,
            self_overlap: self.self_overlap,
            matrix_norm: self.matrix_norm,
            singular_values: self.singular_values,
            gauge: &self.gauge,
            v0: self.v0.iter().map(|z| pair(*z)).collect(),
            y0: self.y0.iter().map(|z| pair(*z)).collect(),
        };
        serde_json::to_string_pretty(&rec).expect("plain data serializes")
    }

    /// The same Jordan data with `y0 -> α y0 + β v0` and `η0 -> α η0`.
    pub fn regauged(&self, alpha: C64, beta: C64) -> JordanData {
        let mut out = self.clone();
        out.y0 = self.y0.iter().zip(&self.v0).map(|(y, v)| alpha * y + beta * v).collect();
        out.eta0 = alpha * self.eta0;
        let vy = bilinear_form(&out.v0, &out.y0).expect("equal lengths");
        out.c = (vy * 2.0).sqrt().inv();
        out.gauge.y0 = format!("{} (rescaled by {alpha} and shifted by {beta} v0)", self.gauge.y0);
        out
    }
}
