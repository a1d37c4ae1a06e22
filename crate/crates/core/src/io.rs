//! Output formatting shared by the writers.

use std::io::Write;

/// 17 significant digits, lowercase exponent; round-trips every finite f64.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Writes a header line and then one comma-separated line per row.
pub fn write_csv<W: Write>(mut out: W, header: &str, rows: impl IntoIterator<Item = Vec<String>>) -> std::io::Result<()> {
    writeln!(out, "{header}")?;
    for row in rows {
        writeln!(out, "{}", row.join(","))?;
    }
    out.flush()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn formatting_round_trips() {
        for x in [0.1, -1.0 / 3.0, 6.02214076e23, 5e-324, -0.0, 18.065042281213094] {
            let s = fmt_f64(x);
            assert_eq!(s.parse::<f64>().unwrap().to_bits(), x.to_bits(), "{s}");
            assert!(!s.contains('E'));
        }
        assert_eq!(fmt_f64(1.5), "1.5000000000000000e0");
    }
}
