use crate::error::{Error, Result};

/// Relative pivot floor below which a symmetric matrix is treated as singular.
const PIVOT_FLOOR: f64 = 1e-13;

/// Solves `A X = B` for symmetric positive definite `A` (n x n, row-major)
/// and `B` with `cols` right-hand sides (n x cols, row-major). `A` is
/// overwritten with its Cholesky factor.
pub(crate) fn cholesky_solve(a: &mut [f64], n: usize, b: &[f64], cols: usize) -> Result<Vec<f64>> {
    debug_assert_eq!(a.len(), n * n);
    debug_assert_eq!(b.len(), n * cols);
    let max_diag = (0..n).map(|i| a[i * n + i].abs()).fold(0.0, f64::max);
    let floor = PIVOT_FLOOR * max_diag.max(f64::MIN_POSITIVE);

    for j in 0..n {
        let mut d = a[j * n + j];
        for k in 0..j {
            d -= a[j * n + k] * a[j * n + k];
        }
        if !(d > floor) {
            return Err(Error::SingularSystem { row: j, pivot: d });
        }
        let d = d.sqrt();
        a[j * n + j] = d;
        for i in (j + 1)..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= a[i * n + k] * a[j * n + k];
            }
            a[i * n + j] = s / d;
        }
    }

    let mut x = b.to_vec();
    for c in 0..cols {
        // forward: L y = b
        for i in 0..n {
            let mut s = x[i * cols + c];
            for k in 0..i {
                s -= a[i * n + k] * x[k * cols + c];
            }
            x[i * cols + c] = s / a[i * n + i];
        }
        // backward: L^T x = y
        for i in (0..n).rev() {
            let mut s = x[i * cols + c];
            for k in (i + 1)..n {
                s -= a[k * n + i] * x[k * cols + c];
            }
            x[i * cols + c] = s / a[i * n + i];
        }
    }
    Ok(x)
}
