//! Thin safe wrapper over `matrixmultiply::dgemm`.

/// Matrix view: `rows × cols` with explicit row and column strides.
#[derive(Clone, Copy)]
pub(crate) struct View<'a> {
    pub data: &'a [f64],
    pub rows: usize,
    pub cols: usize,
    pub rs: isize,
    pub cs: isize,
}

impl<'a> View<'a> {
    pub fn row_major(data: &'a [f64], rows: usize, cols: usize) -> Self {
        View { data, rows, cols, rs: cols as isize, cs: 1 }
    }

    pub fn t(self) -> Self {
        View { data: self.data, rows: self.cols, cols: self.rows, rs: self.cs, cs: self.rs }
    }

    fn fits(&self) -> bool {
        if self.rows == 0 || self.cols == 0 {
            return true;
        }
        let last = (self.rows - 1) as isize * self.rs + (self.cols - 1) as isize * self.cs;
        self.rs >= 0 && self.cs >= 0 && (last as usize) < self.data.len()
    }
}

/// `c = alpha·a·b + beta·c` with `c` row-major `a.rows × b.cols`.
pub(crate) fn gemm(alpha: f64, a: View<'_>, b: View<'_>, beta: f64, c: &mut [f64]) {
    assert_eq!(a.cols, b.rows, "inner dimensions differ");
    assert!(a.fits() && b.fits(), "view exceeds its buffer");
    assert!(c.len() >= a.rows * b.cols, "output buffer too small");
    if a.rows == 0 || b.cols == 0 {
        return;
    }
    if a.cols == 0 {
        if beta == 0.0 {
            c[..a.rows * b.cols].fill(0.0);
        } else {
            c[..a.rows * b.cols].iter_mut().for_each(|v| *v *= beta);
        }
        return;
    }
    // SAFETY: the asserts above keep every strided access inside the slices,
    // and `c` is a unique borrow so it cannot alias `a` or `b`.
    unsafe {
        matrixmultiply::dgemm(
            a.rows,
            a.cols,
            b.cols,
            alpha,
            a.data.as_ptr(),
            a.rs,
            a.cs,
            b.data.as_ptr(),
            b.rs,
            b.cs,
            beta,
            c.as_mut_ptr(),
            b.cols as isize,
            1,
        );
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_naive_product() {
        let a: Vec<f64> = (0..6).map(|v| v as f64).collect(); // 2x3
        let b: Vec<f64> = (0..12).map(|v| (v as f64) * 0.5 - 1.0).collect(); // 3x4
        let mut c = vec![1.0; 8];
        gemm(1.0, View::row_major(&a, 2, 3), View::row_major(&b, 3, 4), 1.0, &mut c);
        for i in 0..2 {
            for j in 0..4 {
                let want: f64 = 1.0 + (0..3).map(|k| a[i * 3 + k] * b[k * 4 + j]).sum::<f64>();
                assert!((c[i * 4 + j] - want).abs() < 1e-12);
            }
        }
        // transposed operand: (b^T) is 4x3, times a^T (3x2)
        let mut d = vec![0.0; 8];
        gemm(1.0, View::row_major(&b, 3, 4).t(), View::row_major(&a, 2, 3).t(), 0.0, &mut d);
        for i in 0..4 {
            for j in 0..2 {
                assert!((d[i * 2 + j] - (c[j * 4 + i] - 1.0)).abs() < 1e-12);
            }
        }
    }
}
