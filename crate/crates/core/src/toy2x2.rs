//! The 2x2 model `[[λ0 + a, b], [c, λ0 - a]]` and the multivalued sheet functions used
//! to illustrate branching. Square roots use the principal branch throughout (argument
//! in (-π, π], cut along the negative real semi-axis).

use std::io::Write;

use crate::error::{Error, Result};
use crate::io::fmt_f64;
use crate::operator::{sort_spectrum, SpectralFamily, C64};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TwoByTwo {
    pub lambda0: C64,
    pub a: C64,
    pub b: C64,
    pub c: C64,
}

impl TwoByTwo {
    pub fn new(lambda0: C64, a: C64, b: C64, c: C64) -> Self {
        TwoByTwo { lambda0, a, b, c }
    }

    pub fn discriminant(&self) -> C64 {
        self.b * self.c + self.a * self.a
    }

    pub fn matrix(&self) -> [[C64; 2]; 2] {
        [[self.lambda0 + self.a, self.b], [self.c, self.lambda0 - self.a]]
    }

    pub fn apply(&self, x: [C64; 2]) -> [C64; 2] {
        let m = self.matrix();
        [m[0][0] * x[0] + m[0][1] * x[1], m[1][0] * x[0] + m[1][1] * x[1]]
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Eig2 {
    pub plus: C64,
    pub minus: C64,
    pub x_plus: [C64; 2],
    pub x_minus: [C64; 2],
}

/// `λ± = λ0 ± √d` with eigenvectors `(b, ±√d - a)`. When that vector vanishes (b = 0
/// and ±√d = a) the equivalent column form `(±√d + a, c)` is returned instead.
pub fn eig2(m: &TwoByTwo) -> Result<Eig2> {
    let d = m.discriminant();
    if d.norm() == 0.0 {
        return Err(Error::Defective2x2);
    }
    let s = d.sqrt();
    let vector = |root: C64| {
        let x = [m.b, root - m.a];
        if x[0].norm() + x[1].norm() > 0.0 {
            x
        } else {
            [root + m.a, m.c]
        }
    };
    Ok(Eig2 {
        plus: m.lambda0 + s,
        minus: m.lambda0 - s,
        x_plus: vector(s),
        x_minus: vector(-s),
    })
}

/// Eigenvector `X0 = (b, -a)` and generalized eigenvector `Y0 = (0, 1)` with
/// `A Y0 = λ0 Y0 + X0`. For `b = 0` conjugate by the swap `[[0, 1], [1, 0]]`, which
/// exchanges the roles of `b` and `c` and flips the sign of `a`.
pub fn jordan2(m: &TwoByTwo) -> Result<([C64; 2], [C64; 2])> {
    if m.b.norm() == 0.0 {
        return Err(Error::Unsupported(
            "jordan2 needs b != 0; apply the swap [[0,1],[1,0]] to exchange b and c".into(),
        ));
    }
    let scale = m.a.norm_sqr().max(m.b.norm() * m.c.norm()).max(f64::MIN_POSITIVE);
    if m.discriminant().norm() > 1e-12 * scale {
        return Err(Error::Validation(format!(
            "jordan2 needs bc + a^2 = 0, got {}",
            m.discriminant()
        )));
    }
    Ok(([m.b, -m.a], [C64::new(0.0, 0.0), C64::new(1.0, 0.0)]))
}

/// A multivalued function whose sheets are evaluated at once.
pub trait SheetModel: Send + Sync {
    fn name(&self) -> &'static str;
    fn sheets(&self, g: C64) -> Vec<C64>;
}

/// `±√g`.
pub struct SqrtSheets;

impl SheetModel for SqrtSheets {
    fn name(&self) -> &'static str {
        "sqrt"
    }

    fn sheets(&self, g: C64) -> Vec<C64> {
        let s = g.sqrt();
        vec![s, -s]
    }
}

/// `±√(±√g + 1)`, the roots of `(λ² - 1)² = g`, in the order
/// `√(√g+1), √(-√g+1), -√(√g+1), -√(-√g+1)`.
pub struct QuarticSheets;

impl SheetModel for QuarticSheets {
    fn name(&self) -> &'static str {
        "quartic"
    }

    fn sheets(&self, g: C64) -> Vec<C64> {
        let s = g.sqrt();
        let one = C64::new(1.0, 0.0);
        let p = (one + s).sqrt();
        let q = (one - s).sqrt();
        vec![p, q, -p, -q]
    }
}

/// Sheet values as an unordered spectrum, so that tracking sees them like eigenvalues.
pub struct SheetFamily<'a>(pub &'a dyn SheetModel);

impl SpectralFamily for SheetFamily<'_> {
    fn dimension(&self) -> usize {
        self.0.sheets(C64::new(1.0, 0.0)).len()
    }

    fn spectrum(&self, g: C64) -> Result<Vec<C64>> {
        let mut v = self.0.sheets(g);
        sort_spectrum(&mut v);
        Ok(v)
    }
}

/// `A(g) = [[0, 1], [g - g0, 0]]`, with a single branch point planted at `g0`.
#[derive(Clone, Copy, Debug)]
pub struct PlantedBranch {
    pub g0: C64,
}

impl PlantedBranch {
    pub fn matrix_at(&self, g: C64) -> TwoByTwo {
        let zero = C64::new(0.0, 0.0);
        TwoByTwo::new(zero, zero, C64::new(1.0, 0.0), g - self.g0)
    }
}

impl SpectralFamily for PlantedBranch {
    fn dimension(&self) -> usize {
        2
    }

    fn spectrum(&self, g: C64) -> Result<Vec<C64>> {
        let s = self.matrix_at(g).discriminant().sqrt();
        let mut v = vec![s, -s];
        sort_spectrum(&mut v);
        Ok(v)
    }
}

/// Rows `(g, sheet, value)` on a rectangular grid, sheets numbered from 1.
pub fn sheet_grid(model: &dyn SheetModel, lo: C64, hi: C64, n_re: usize, n_im: usize) -> Vec<(C64, usize, C64)> {
    let axis = |a: f64, b: f64, n: usize, k: usize| {
        if n <= 1 {
            a
        } else {
            a + (b - a) * k as f64 / (n - 1) as f64
        }
    };
    let mut rows = Vec::new();
    for i in 0..n_im {
        for r in 0..n_re {
            let g = C64::new(axis(lo.re, hi.re, n_re, r), axis(lo.im, hi.im, n_im, i));
            for (k, v) in model.sheets(g).into_iter().enumerate() {
                rows.push((g, k + 1, v));
            }
        }
    }
    rows
}

pub fn write_sheet_grid<W: Write>(out: W, rows: &[(C64, usize, C64)]) -> std::io::Result<()> {
    let lines = rows.iter().map(|(g, k, v)| {
        vec![
            fmt_f64(g.re),
            fmt_f64(g.im),
            k.to_string(),
            fmt_f64(v.re),
            fmt_f64(v.im),
        ]
    });
    crate::io::write_csv(out, "g_re,g_im,sheet,val_re,val_im", lines)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn diagonal_case_has_axis_eigenvectors() {
        let e = eig2(&TwoByTwo::new(c(0.0, 0.0), c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0))).unwrap();
        assert_eq!(e.plus, c(1.0, 0.0));
        assert_eq!(e.minus, c(-1.0, 0.0));
        assert_eq!(e.x_plus[1], c(0.0, 0.0));
        assert_eq!(e.x_minus[0], c(0.0, 0.0));
    }

    #[test]
    fn defective_input_is_rejected() {
        let m = TwoByTwo::new(c(1.0, 0.0), c(0.0, 0.0), c(1.0, 0.0), c(0.0, 0.0));
        assert!(matches!(eig2(&m), Err(Error::Defective2x2)));
        let (x0, y0) = jordan2(&m).unwrap();
        assert_eq!(x0, [c(1.0, 0.0), c(0.0, 0.0)]);
        assert_eq!(y0, [c(0.0, 0.0), c(1.0, 0.0)]);
    }

    #[test]
    fn sheet_examples() {
        assert_eq!(SqrtSheets.sheets(c(1.0, 0.0)), vec![c(1.0, 0.0), c(-1.0, 0.0)]);
        let q0 = QuarticSheets.sheets(c(0.0, 0.0));
        assert_eq!(q0, vec![c(1.0, 0.0), c(1.0, 0.0), c(-1.0, 0.0), c(-1.0, 0.0)]);
        let q1 = QuarticSheets.sheets(c(1.0, 0.0));
        assert_eq!(q1.iter().filter(|v| v.norm() == 0.0).count(), 2);
    }
}
