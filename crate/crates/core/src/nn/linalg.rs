//! Row-major dense kernels over `matrixmultiply`.
#![allow(unsafe_code)]

/// `c = beta * c + a(rows x inner) * b(inner x cols)`, with `a` or `b` read
/// transposed when the flag is set (their stored shapes are then swapped).
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    rows: usize,
    inner: usize,
    cols: usize,
    a: &[f64],
    a_transposed: bool,
    b: &[f64],
    b_transposed: bool,
    beta: f64,
    c: &mut [f64],
) {
    assert!(a.len() >= rows * inner && b.len() >= inner * cols && c.len() >= rows * cols);
    if rows == 0 || cols == 0 {
        return;
    }
    let (rsa, csa) = if a_transposed { (1, rows as isize) } else { (inner as isize, 1) };
    let (rsb, csb) = if b_transposed { (1, inner as isize) } else { (cols as isize, 1) };
    // SAFETY: the slice lengths were checked above against the strides used.
    unsafe {
        matrixmultiply::dgemm(
            rows,
            inner,
            cols,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            cols as isize,
            1,
        );
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive(rows: usize, inner: usize, cols: usize, a: &[f64], b: &[f64]) -> alloc::vec::Vec<f64> {
        let mut c = alloc::vec![0.0; rows * cols];
        for i in 0..rows {
            for j in 0..cols {
                c[i * cols + j] = (0..inner).map(|k| a[i * inner + k] * b[k * cols + j]).sum();
            }
        }
        c
    }

    fn transpose(rows: usize, cols: usize, x: &[f64]) -> alloc::vec::Vec<f64> {
        let mut t = alloc::vec![0.0; rows * cols];
        for i in 0..rows {
            for j in 0..cols {
                t[j * rows + i] = x[i * cols + j];
            }
        }
        t
    }

    #[test]
    fn matches_naive_in_all_layouts() {
        let (r, k, n) = (3, 4, 5);
        let a: alloc::vec::Vec<f64> = (0..r * k).map(|i| i as f64 * 0.5 - 2.0).collect();
        let b: alloc::vec::Vec<f64> = (0..k * n).map(|i| (i as f64).sin()).collect();
        let want = naive(r, k, n, &a, &b);
        let mut c = alloc::vec![0.0; r * n];
        gemm(r, k, n, &a, false, &b, false, 0.0, &mut c);
        assert_eq!(c.len(), want.len());
        for (x, y) in c.iter().zip(&want) {
            assert!((x - y).abs() < 1e-12);
        }
        let at = transpose(r, k, &a);
        let bt = transpose(k, n, &b);
        let mut c2 = alloc::vec![1.0; r * n];
        gemm(r, k, n, &at, true, &bt, true, 1.0, &mut c2);
        for (x, y) in c2.iter().zip(&want) {
            assert!((x - (y + 1.0)).abs() < 1e-12);
        }
    }
}
