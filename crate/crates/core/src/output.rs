//! Plain-text number and CSV formatting shared by every exporter.

use std::io::{self, Write};

use crate::model::DensityMatrix;
use crate::scalar::{CMatrix, Real};

/// 17 significant digits in scientific notation, independent of locale, so
/// an `f64` survives a text round trip bit for bit.
pub fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

/// Header names `prefix_ij_re, prefix_ij_im` for a d × d matrix, row-major.
pub fn matrix_columns(prefix: &str, d: usize) -> Vec<String> {
    let mut out = Vec::with_capacity(2 * d * d);
    for i in 0..d {
        for j in 0..d {
            out.push(format!("{prefix}_{i}{j}_re"));
            out.push(format!("{prefix}_{i}{j}_im"));
        }
    }
    out
}

/// Row-major (re, im) interleaved entries.
pub fn matrix_fields<T: Real>(m: &CMatrix<T>) -> Vec<String> {
    let mut out = Vec::with_capacity(2 * m.len());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out.push(fmt17(m[(i, j)].re.as_f64()));
            out.push(fmt17(m[(i, j)].im.as_f64()));
        }
    }
    out
}

/// Trajectory dump: `t` followed by the row-major entries of ρ(t).
pub fn write_trajectory_csv<T: Real, W: Write>(mut w: W, times: &[T], states: &[DensityMatrix<T>]) -> io::Result<()> {
    let d = states.first().map_or(0, |s| s.dim());
    let mut header = vec!["t".to_string()];
    header.extend(matrix_columns("rho", d));
    writeln!(w, "{}", header.join(","))?;
    for (t, s) in times.iter().zip(states) {
        let mut row = vec![fmt17(t.as_f64())];
        row.extend(matrix_fields(s.matrix()));
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(())
}
