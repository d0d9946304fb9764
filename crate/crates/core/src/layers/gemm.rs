//! Strided matrix products on top of `matrixmultiply`.

/// Read-only row/column-strided matrix over a slice.
#[derive(Clone, Copy)]
pub(crate) struct View<'a> {
    pub data: &'a [f64],
    pub rows: usize,
    pub cols: usize,
    pub rs: usize,
    pub cs: usize,
}

impl<'a> View<'a> {
    pub fn new(data: &'a [f64], rows: usize, cols: usize, rs: usize, cs: usize) -> Self {
        View { data, rows, cols, rs, cs }
    }

    /// Dense row-major `rows x cols`.
    pub fn rows(data: &'a [f64], rows: usize, cols: usize) -> Self {
        Self::new(data, rows, cols, cols, 1)
    }

    pub fn t(self) -> Self {
        View {
            rows: self.cols,
            cols: self.rows,
            rs: self.cs,
            cs: self.rs,
            ..self
        }
    }

    fn span(&self) -> usize {
        span(self.rows, self.cols, self.rs, self.cs)
    }
}

fn span(rows: usize, cols: usize, rs: usize, cs: usize) -> usize {
    if rows == 0 || cols == 0 {
        0
    } else {
        (rows - 1) * rs + (cols - 1) * cs + 1
    }
}

/// `c = beta * c + a * b`, where `c` is `a.rows x b.cols` with strides
/// `(c_rs, c_cs)`. The elements of `c` must not alias one another.
pub(crate) fn gemm(a: View, b: View, beta: f64, c: &mut [f64], c_rs: usize, c_cs: usize) {
    assert_eq!(a.cols, b.rows, "inner dimensions differ");
    let (m, k, n) = (a.rows, a.cols, b.cols);
    assert!(a.span() <= a.data.len() && b.span() <= b.data.len(), "operand out of bounds");
    assert!(span(m, n, c_rs, c_cs) <= c.len(), "output out of bounds");
    assert!(n <= 1 || c_cs >= 1, "output columns alias");
    assert!(m <= 1 || c_rs >= n.saturating_sub(1) * c_cs + 1 || c_cs >= m.saturating_sub(1) * c_rs + 1, "output rows alias");
    if m == 0 || n == 0 {
        return;
    }
    // SAFETY: every index touched lies within the checked spans, and the
    // output strides keep distinct elements apart.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.data.as_ptr(),
            a.rs as isize,
            a.cs as isize,
            b.data.as_ptr(),
            b.rs as isize,
            b.cs as isize,
            beta,
            c.as_mut_ptr(),
            c_rs as isize,
            c_cs as isize,
        );
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_naive_product_with_strides() {
        // a: 2x3 taken as overlapping windows of [0..6) with row stride 2.
        let x: Vec<f64> = (0..7).map(f64::from).collect();
        let a = View::new(&x, 2, 3, 2, 1);
        let w: Vec<f64> = (0..6).map(|v| f64::from(v) * 0.5).collect();
        let b = View::rows(&w, 2, 3).t();
        let mut c = vec![1.0; 4];
        gemm(a, b, 1.0, &mut c, 2, 1);
        let mut expect = vec![1.0; 4];
        for i in 0..2 {
            for j in 0..2 {
                for p in 0..3 {
                    expect[i * 2 + j] += x[i * 2 + p] * w[j * 3 + p];
                }
            }
        }
        assert_eq!(c, expect);
    }

    #[test]
    #[should_panic(expected = "out of bounds")]
    fn rejects_short_output() {
        let a = [1.0; 4];
        let mut c = [0.0; 3];
        gemm(View::rows(&a, 2, 2), View::rows(&a, 2, 2), 0.0, &mut c, 2, 1);
    }
}
