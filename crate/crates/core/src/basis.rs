//! Laplacian eigenbases with Neumann boundary conditions and the matrix of the
//! coordinate `x` in those bases.
//!
//! Interval modes live on the centered interval `(-L/2, L/2)`. They are the reflected
//! cosines `u_k(x) = sqrt(2/L) cos(pi k (L/2 - x) / L)`, so that `u_1 = sqrt(2) sin(pi x)`
//! for `L = 1` and the couplings to the constant mode are positive.
//!
//! Disk modes are `J_m(2 j'_{m,k} r / L)` times `1`, `cos(m theta)` or `sin(m theta)`,
//! with unit L2 norm.

use std::f64::consts::{PI, SQRT_2};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::special::{bessel_j, bessel_jprime_zeros, gauss_legendre};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GeometryKind {
    Interval,
    Disk,
    Imported,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Geometry {
    pub kind: GeometryKind,
    /// Interval length or disk diameter.
    pub size: f64,
    pub import_path: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Parity {
    Symmetric,
    Antisymmetric,
    None,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Angular {
    Constant,
    Cos,
    Sin,
}

/// What is needed to evaluate a basis function in space.
#[derive(Clone, Debug, PartialEq)]
pub enum ModeShape {
    Cosine { k: usize },
    Disk { m: u32, alpha: f64, angular: Angular, norm: f64 },
    Unknown,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LaplaceMode {
    /// 1-based position in the basis.
    pub index: usize,
    pub eigenvalue: f64,
    pub parity_x: Parity,
    pub parity_y: Parity,
    pub angular_index: Option<i32>,
    pub shape: ModeShape,
}

/// Diagonal Laplacian spectrum and gradient matrix; the truncated operator is
/// `diag(lambda0) - i g B`.
#[derive(Clone, Debug)]
pub struct OperatorMatrices {
    pub geometry: Geometry,
    pub lambda0: Vec<f64>,
    pub b: DMatrix<f64>,
    pub modes: Vec<LaplaceMode>,
    /// Radial Gauss-Legendre node count used for B (disk only).
    pub quadrature_nodes: Option<usize>,
    blocks: Vec<Vec<usize>>,
}

impl OperatorMatrices {
    /// Validates the invariants shared by every geometry.
    pub fn new(
        geometry: Geometry,
        lambda0: Vec<f64>,
        b: DMatrix<f64>,
        modes: Vec<LaplaceMode>,
        quadrature_nodes: Option<usize>,
    ) -> Result<Self> {
        let n = lambda0.len();
        if n < 2 {
            return Err(Error::InvalidTruncation(n));
        }
        if b.nrows() != n || b.ncols() != n {
            return Err(Error::Dimension {
                expected: n,
                got: b.nrows().max(b.ncols()),
            });
        }
        if modes.len() != n {
            return Err(Error::Dimension {
                expected: n,
                got: modes.len(),
            });
        }
        if lambda0.iter().chain(b.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Validation("non-finite entry".into()));
        }
        let lmax = lambda0.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        if let Some(i) = lambda0.iter().position(|v| *v < -1e-12 * lmax.max(1.0)) {
            return Err(Error::Validation(format!("lambda0[{}] is negative", i + 1)));
        }
        if let Some(i) = (1..n).find(|&i| lambda0[i] < lambda0[i - 1]) {
            return Err(Error::Validation(format!(
                "lambda0 is not sorted: entry {} ({}) is below entry {} ({})",
                i + 1,
                lambda0[i],
                i,
                lambda0[i - 1]
            )));
        }
        let bmax = b.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        for i in 0..n {
            for j in 0..i {
                if (b[(i, j)] - b[(j, i)]).abs() > 1e-12 * bmax {
                    return Err(Error::Validation(format!(
                        "B is not symmetric at ({}, {}): {} vs {}",
                        i + 1,
                        j + 1,
                        b[(i, j)],
                        b[(j, i)]
                    )));
                }
            }
        }
        let blocks = coupled_blocks(&b);
        Ok(OperatorMatrices {
            geometry,
            lambda0,
            b,
            modes,
            quadrature_nodes,
            blocks,
        })
    }

    pub fn size(&self) -> usize {
        self.lambda0.len()
    }

    /// Index sets that B never couples; the operator is block diagonal over them.
    pub fn blocks(&self) -> &[Vec<usize>] {
        &self.blocks
    }

    /// Whether the domain is symmetric under `x -> -x`.
    pub fn parity_symmetric(&self) -> bool {
        matches!(self.geometry.kind, GeometryKind::Interval | GeometryKind::Disk)
    }

    /// Value of basis function `j` (0-based) at `(x, y)`; `y` is ignored on the interval.
    pub fn basis_value(&self, j: usize, point: [f64; 2]) -> Result<f64> {
        let l = self.geometry.size;
        match &self.modes[j].shape {
            ModeShape::Cosine { k } => {
                if *k == 0 {
                    Ok(1.0 / l.sqrt())
                } else {
                    let c = (2.0 / l).sqrt();
                    Ok(c * (PI * *k as f64 * (0.5 * l - point[0]) / l).cos())
                }
            }
            ModeShape::Disk {
                m,
                alpha,
                angular,
                norm,
            } => {
                let r = point[0].hypot(point[1]);
                let theta = point[1].atan2(point[0]);
                let radial = if *alpha == 0.0 {
                    1.0
                } else {
                    bessel_j(*m as i32, alpha * r / (0.5 * l))
                };
                let ang = match angular {
                    Angular::Constant => 1.0,
                    Angular::Cos => (*m as f64 * theta).cos(),
                    Angular::Sin => (*m as f64 * theta).sin(),
                };
                Ok(radial * ang / norm)
            }
            ModeShape::Unknown => Err(Error::Unsupported(
                "imported geometries carry no basis functions".into(),
            )),
        }
    }
}

fn coupled_blocks(b: &DMatrix<f64>) -> Vec<Vec<usize>> {
    let n = b.nrows();
    let mut label = vec![usize::MAX; n];
    let mut blocks = Vec::new();
    for start in 0..n {
        if label[start] != usize::MAX {
            continue;
        }
        let id = blocks.len();
        let mut members = vec![start];
        label[start] = id;
        let mut head = 0;
        while head < members.len() {
            let i = members[head];
            head += 1;
            for j in 0..n {
                if label[j] == usize::MAX && b[(i, j)] != 0.0 {
                    label[j] = id;
                    members.push(j);
                }
            }
        }
        members.sort_unstable();
        blocks.push(members);
    }
    blocks
}

pub fn build_interval(length: f64, n: usize) -> Result<OperatorMatrices> {
    if n < 2 {
        return Err(Error::InvalidTruncation(n));
    }
    if !(length > 0.0 && length.is_finite()) {
        return Err(Error::Validation(format!("interval length {length} must be positive")));
    }
    let pi2 = PI * PI;
    let lambda0: Vec<f64> = (0..n).map(|k| pi2 * (k * k) as f64 / (length * length)).collect();
    // Closed-form x-matrix on [0, L] is nonzero off the diagonal only for k + l odd;
    // reflecting about L/2 flips its sign and cancels the diagonal L/2.
    let b = DMatrix::from_fn(n, n, |k, l| {
        if (k + l) % 2 == 0 {
            return 0.0;
        }
        let on_zero_to_l = if k == 0 || l == 0 {
            let p = (k + l) as f64;
            -2.0 * SQRT_2 * length / (pi2 * p * p)
        } else {
            let d = k as f64 - l as f64;
            let s = (k + l) as f64;
            -2.0 * length / pi2 * (1.0 / (d * d) + 1.0 / (s * s))
        };
        -on_zero_to_l
    });
    let modes = (0..n)
        .map(|k| LaplaceMode {
            index: k + 1,
            eigenvalue: lambda0[k],
            parity_x: if k % 2 == 0 {
                Parity::Symmetric
            } else {
                Parity::Antisymmetric
            },
            parity_y: Parity::Symmetric,
            angular_index: None,
            shape: ModeShape::Cosine { k },
        })
        .collect();
    let geometry = Geometry {
        kind: GeometryKind::Interval,
        size: length,
        import_path: None,
    };
    OperatorMatrices::new(geometry, lambda0, b, modes, None)
}

struct DiskMode {
    m: u32,
    alpha: f64,
    angular: Angular,
}

/// The `n` lowest disk modes, sorted by Bessel zero with cos before sin.
fn disk_modes(n: usize) -> Result<Vec<DiskMode>> {
    let mut cut = 2.0 * (n as f64).sqrt() + 5.0;
    loop {
        let mut modes = vec![DiskMode {
            m: 0,
            alpha: 0.0,
            angular: Angular::Constant,
        }];
        let mut m = 0u32;
        while (m as f64) < cut {
            let zeros = bessel_jprime_zeros(m, cut).map_err(Error::BasisConstruction)?;
            for alpha in zeros {
                if m == 0 {
                    modes.push(DiskMode {
                        m,
                        alpha,
                        angular: Angular::Constant,
                    });
                } else {
                    modes.push(DiskMode {
                        m,
                        alpha,
                        angular: Angular::Cos,
                    });
                    modes.push(DiskMode {
                        m,
                        alpha,
                        angular: Angular::Sin,
                    });
                }
            }
            m += 1;
        }
        if modes.len() > n {
            modes.sort_by(|a, b| {
                a.alpha
                    .total_cmp(&b.alpha)
                    .then(a.angular.cmp(&b.angular))
                    .then(a.m.cmp(&b.m))
            });
            modes.truncate(n);
            return Ok(modes);
        }
        cut *= 1.4;
    }
}

pub fn build_disk(diameter: f64, n: usize) -> Result<OperatorMatrices> {
    if n < 2 {
        return Err(Error::InvalidTruncation(n));
    }
    if !(diameter > 0.0 && diameter.is_finite()) {
        return Err(Error::Validation(format!("disk diameter {diameter} must be positive")));
    }
    let radius = 0.5 * diameter;
    let raw = disk_modes(n)?;

    let norms: Vec<f64> = raw
        .iter()
        .map(|d| {
            let radial = if d.alpha == 0.0 {
                0.5 * radius * radius
            } else {
                let m2 = (d.m as f64).powi(2);
                0.5 * radius * radius * (1.0 - m2 / (d.alpha * d.alpha)) * bessel_j(d.m as i32, d.alpha).powi(2)
            };
            let angular = if d.m == 0 { 2.0 * PI } else { PI };
            (radial * angular).sqrt()
        })
        .collect();

    // Pairs allowed by the angular selection rule, with their angular factor.
    let mut pairs = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            let (a, b) = (&raw[i], &raw[j]);
            if (a.m as i64 - b.m as i64).abs() != 1 {
                continue;
            }
            let same_family = match (a.angular, b.angular) {
                (Angular::Sin, Angular::Sin) => true,
                (Angular::Sin, _) | (_, Angular::Sin) => false,
                _ => true,
            };
            if !same_family {
                continue;
            }
            let angular = if a.m.min(b.m) == 0 { PI } else { 0.5 * PI };
            pairs.push((i, j, angular));
        }
    }

    let alpha_max = raw.iter().fold(0.0f64, |acc, d| acc.max(d.alpha));
    let mut nodes = ((alpha_max as usize) + 16).next_power_of_two().max(32);
    let mut values = radial_couplings(&raw, &pairs, radius, nodes);
    loop {
        if nodes > 1 << 15 {
            return Err(Error::BasisConstruction(
                "radial quadrature did not settle".into(),
            ));
        }
        let finer = radial_couplings(&raw, &pairs, radius, 2 * nodes);
        let scale = finer.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let change = values
            .iter()
            .zip(&finer)
            .fold(0.0f64, |a, (x, y)| a.max((x - y).abs()));
        nodes *= 2;
        values = finer;
        if change <= 1e-12 * scale {
            break;
        }
    }

    let mut b = DMatrix::<f64>::zeros(n, n);
    for (&(i, j, angular), radial) in pairs.iter().zip(&values) {
        let v = radial * angular / (norms[i] * norms[j]);
        b[(i, j)] = v;
        b[(j, i)] = v;
    }

    let lambda0: Vec<f64> = raw.iter().map(|d| (d.alpha / radius).powi(2)).collect();
    let modes = raw
        .iter()
        .enumerate()
        .map(|(i, d)| {
            let (parity_x, parity_y) = match d.angular {
                Angular::Constant => (Parity::Symmetric, Parity::Symmetric),
                Angular::Cos => (even_odd(d.m % 2 == 0), Parity::Symmetric),
                Angular::Sin => (even_odd(d.m % 2 == 1), Parity::Antisymmetric),
            };
            LaplaceMode {
                index: i + 1,
                eigenvalue: lambda0[i],
                parity_x,
                parity_y,
                angular_index: Some(d.m as i32),
                shape: ModeShape::Disk {
                    m: d.m,
                    alpha: d.alpha,
                    angular: d.angular,
                    norm: norms[i],
                },
            }
        })
        .collect();
    let geometry = Geometry {
        kind: GeometryKind::Disk,
        size: diameter,
        import_path: None,
    };
    OperatorMatrices::new(geometry, lambda0, b, modes, Some(nodes))
}

fn even_odd(symmetric: bool) -> Parity {
    if symmetric {
        Parity::Symmetric
    } else {
        Parity::Antisymmetric
    }
}

/// `∫_0^R J_m(a r/R) J_m'(a' r/R) r^2 dr` for each pair.
fn radial_couplings(raw: &[DiskMode], pairs: &[(usize, usize, f64)], radius: f64, nodes: usize) -> Vec<f64> {
    let (r, w) = gauss_legendre(nodes, 0.0, radius);
    let mut needed = vec![false; raw.len()];
    for &(i, j, _) in pairs {
        needed[i] = true;
        needed[j] = true;
    }
    let profiles: Vec<Vec<f64>> = raw
        .iter()
        .zip(&needed)
        .map(|(d, &need)| {
            if !need {
                return Vec::new();
            }
            r.iter()
                .map(|&ri| {
                    if d.alpha == 0.0 {
                        1.0
                    } else {
                        bessel_j(d.m as i32, d.alpha * ri / radius)
                    }
                })
                .collect()
        })
        .collect();
    pairs
        .iter()
        .map(|&(i, j, _)| {
            (0..nodes)
                .map(|q| w[q] * r[q] * r[q] * profiles[i][q] * profiles[j][q])
                .sum()
        })
        .collect()
}

/// Loads matrices written by [`export`] or produced by an external discretization.
pub fn load_imported(path: &Path) -> Result<OperatorMatrices> {
    let text = std::fs::read_to_string(path)?;
    let (lambda0, b) = parse_matrices(&text)?;
    let modes = lambda0
        .iter()
        .enumerate()
        .map(|(i, &eigenvalue)| LaplaceMode {
            index: i + 1,
            eigenvalue,
            parity_x: Parity::None,
            parity_y: Parity::None,
            angular_index: None,
            shape: ModeShape::Unknown,
        })
        .collect();
    let geometry = Geometry {
        kind: GeometryKind::Imported,
        size: 1.0,
        import_path: Some(path.to_path_buf()),
    };
    OperatorMatrices::new(geometry, lambda0, b, modes, None)
}

fn parse_matrices(text: &str) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
        .filter(|(_, l)| !l.is_empty());
    let parse_err = |line: usize, message: String| Error::Parse { line, message };

    let (line, header) = lines
        .next()
        .ok_or_else(|| parse_err(0, "empty file".into()))?;
    let n: usize = header
        .strip_prefix("N=")
        .ok_or_else(|| parse_err(line, format!("expected 'N=<int>', found '{header}'")))?
        .trim()
        .parse()
        .map_err(|e| parse_err(line, format!("bad truncation: {e}")))?;

    let numbers = |line: usize, s: &str| -> Result<Vec<f64>> {
        s.split_whitespace()
            .map(|tok| {
                tok.parse::<f64>()
                    .map_err(|e| parse_err(line, format!("bad number '{tok}': {e}")))
            })
            .collect()
    };

    let (line, lam) = lines
        .next()
        .ok_or_else(|| parse_err(line + 1, "missing 'lambda0:' line".into()))?;
    let body = lam
        .strip_prefix("lambda0:")
        .ok_or_else(|| parse_err(line, format!("expected 'lambda0:', found '{lam}'")))?;
    let lambda0 = numbers(line, body)?;
    if lambda0.len() != n {
        return Err(parse_err(line, format!("expected {n} eigenvalues, found {}", lambda0.len())));
    }

    let mut b = DMatrix::<f64>::zeros(n, n);
    let mut last = line;
    for row in 0..n {
        let (line, text) = lines
            .next()
            .ok_or_else(|| parse_err(last + 1, format!("missing row {} of B", row + 1)))?;
        let values = numbers(line, text)?;
        if values.len() != n {
            return Err(parse_err(line, format!("expected {n} entries, found {}", values.len())));
        }
        for (col, v) in values.into_iter().enumerate() {
            b[(row, col)] = v;
        }
        last = line;
    }
    if let Some((line, _)) = lines.next() {
        return Err(parse_err(line, "unexpected content after B".into()));
    }
    Ok((lambda0, b))
}

/// Text form read by [`load_imported`].
pub fn export_string(mats: &OperatorMatrices) -> String {
    let n = mats.size();
    let mut out = String::new();
    let _ = writeln!(out, "# {:?} geometry, size {}", mats.geometry.kind, crate::io::fmt_f64(mats.geometry.size));
    let _ = writeln!(out, "N={n}");
    let lam: Vec<String> = mats.lambda0.iter().map(|v| crate::io::fmt_f64(*v)).collect();
    let _ = writeln!(out, "lambda0: {}", lam.join(" "));
    for i in 0..n {
        let row: Vec<String> = (0..n).map(|j| crate::io::fmt_f64(mats.b[(i, j)])).collect();
        let _ = writeln!(out, "{}", row.join(" "));
    }
    out
}

pub fn export(mats: &OperatorMatrices, path: &Path) -> Result<()> {
    std::fs::write(path, export_string(mats))?;
    Ok(())
}
