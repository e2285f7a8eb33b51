//! Dense row-major 2-D tensor with the handful of matrix kernels the
//! prediction models need.

use super::{NnError, Real};

/// Row-major dense matrix of [`Real`] scalars.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor2D {
    rows: usize,
    cols: usize,
    data: Vec<Real>,
}

impl Tensor2D {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Tensor2D {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    /// Builds a tensor from row-major data. Errors on a length mismatch or on
    /// non-finite entries.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<Real>) -> Result<Self, NnError> {
        if data.len() != rows * cols {
            return Err(NnError::ShapeMismatch(format!(
                "expected {}x{}={} elements, got {}",
                rows,
                cols,
                rows * cols,
                data.len()
            )));
        }
        if !data.iter().all(|x| x.is_finite()) {
            return Err(NnError::NonFinite("tensor construction".into()));
        }
        Ok(Tensor2D { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<Real>]) -> Result<Self, NnError> {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            if row.len() != c {
                return Err(NnError::ShapeMismatch("ragged row lengths".into()));
            }
            data.extend_from_slice(row);
        }
        Tensor2D::from_vec(r, c, data)
    }

    pub fn row_vector(data: Vec<Real>) -> Result<Self, NnError> {
        let c = data.len();
        Tensor2D::from_vec(1, c, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn row(&self, r: usize) -> &[Real] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [Real] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn get(&self, r: usize, c: usize) -> Real {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: Real) {
        self.data[r * self.cols + c] = v;
    }

    pub fn data(&self) -> &[Real] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [Real] {
        &mut self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// `self (n×k) · other (k×m) -> (n×m)`.
    pub fn matmul(&self, other: &Tensor2D) -> Tensor2D {
        assert_eq!(self.cols, other.rows, "matmul inner dims");
        let (n, k, m) = (self.rows, self.cols, other.cols);
        let mut out = Tensor2D::zeros(n, m);
        for i in 0..n {
            let a_row = self.row(i);
            let o_row = out.row_mut(i);
            for (p, &a) in a_row.iter().enumerate().take(k) {
                if a == 0.0 {
                    continue;
                }
                let b_row = other.row(p);
                for (o, &b) in o_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        out
    }

    /// `self (n×k) · otherᵀ (k×m) -> (n×m)` where `other` is stored (m×k).
    pub fn matmul_transb(&self, other: &Tensor2D) -> Tensor2D {
        assert_eq!(self.cols, other.cols, "matmul_transb inner dims");
        let (n, m) = (self.rows, other.rows);
        let mut out = Tensor2D::zeros(n, m);
        for i in 0..n {
            let a_row = self.row(i);
            let o_row = out.row_mut(i);
            for (j, o) in o_row.iter_mut().enumerate() {
                *o = dot(a_row, other.row(j));
            }
        }
        out
    }

    /// `selfᵀ (k×n) · other (n×m) -> (k×m)` where `self` is stored (n×k).
    pub fn matmul_transa(&self, other: &Tensor2D) -> Tensor2D {
        assert_eq!(self.rows, other.rows, "matmul_transa inner dims");
        let (k, m) = (self.cols, other.cols);
        let mut out = Tensor2D::zeros(k, m);
        for i in 0..self.rows {
            let a_row = self.row(i);
            let b_row = other.row(i);
            for (p, &a) in a_row.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                let o_row = out.row_mut(p);
                for (o, &b) in o_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        out
    }

    pub fn add_assign(&mut self, other: &Tensor2D) {
        assert_eq!(self.shape(), other.shape(), "add shapes");
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    /// Sum of each column, as a (1×cols) tensor.
    pub fn column_sums(&self) -> Tensor2D {
        let mut out = Tensor2D::zeros(1, self.cols);
        for r in 0..self.rows {
            let row = self.row(r);
            for (o, &v) in out.row_mut(0).iter_mut().zip(row) {
                *o += v;
            }
        }
        out
    }
}

pub(crate) fn dot(a: &[Real], b: &[Real]) -> Real {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b) {
        acc += x * y;
    }
    acc
}

/// Softmax computed down each column (across rows), with max subtraction for
/// stability. Every column of the result sums to 1.
pub fn softmax_rows(x: &Tensor2D) -> Tensor2D {
    let (n, c) = x.shape();
    let mut out = Tensor2D::zeros(n, c);
    for d in 0..c {
        let mut maxv = Real::NEG_INFINITY;
        for r in 0..n {
            maxv = maxv.max(x.get(r, d));
        }
        let mut z = 0.0;
        for r in 0..n {
            let e = (x.get(r, d) - maxv).exp();
            out.set(r, d, e);
            z += e;
        }
        for r in 0..n {
            out.set(r, d, out.get(r, d) / z);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matmul_small() {
        let a = Tensor2D::from_vec(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let b = Tensor2D::from_vec(3, 2, vec![7.0, 8.0, 9.0, 10.0, 11.0, 12.0]).unwrap();
        let c = a.matmul(&b);
        assert_eq!(c.data(), &[58.0, 64.0, 139.0, 154.0]);
    }

    #[test]
    fn matmul_transb_matches_matmul() {
        let a = Tensor2D::from_vec(2, 3, vec![1.0, -2.0, 3.0, 0.5, 5.0, -6.0]).unwrap();
        // b stored (2x3), logically used as (3x2) transposed
        let b = Tensor2D::from_vec(2, 3, vec![7.0, 9.0, 11.0, 8.0, 10.0, 12.0]).unwrap();
        let bt = Tensor2D::from_vec(3, 2, vec![7.0, 8.0, 9.0, 10.0, 11.0, 12.0]).unwrap();
        assert_eq!(a.matmul_transb(&b).data(), a.matmul(&bt).data());
    }

    #[test]
    fn matmul_transa_matches_manual() {
        let a = Tensor2D::from_vec(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let b = Tensor2D::from_vec(2, 2, vec![5.0, 6.0, 7.0, 8.0]).unwrap();
        // aT·b = [[1,3],[2,4]]·[[5,6],[7,8]] = [[26,30],[38,44]]
        assert_eq!(a.matmul_transa(&b).data(), &[26.0, 30.0, 38.0, 44.0]);
    }

    #[test]
    fn from_vec_rejects_nan() {
        assert!(Tensor2D::from_vec(1, 2, vec![1.0, Real::NAN]).is_err());
        assert!(Tensor2D::from_vec(1, 3, vec![1.0, 2.0]).is_err());
    }

    #[test]
    fn softmax_single_row_is_all_ones() {
        let x = Tensor2D::from_vec(1, 3, vec![5.0, -2.0, 0.1]).unwrap();
        let s = softmax_rows(&x);
        for d in 0..3 {
            assert!((s.get(0, d) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn softmax_two_equal_entries() {
        let x = Tensor2D::from_vec(2, 1, vec![3.0, 3.0]).unwrap();
        let s = softmax_rows(&x);
        assert!((s.get(0, 0) - 0.5).abs() < 1e-12);
        assert!((s.get(1, 0) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn softmax_closed_form_quarter_three_quarters() {
        // entries (0, ln 3): e^0/(e^0+3) = 0.25, 3/(1+3) = 0.75
        let x = Tensor2D::from_vec(2, 1, vec![0.0, (3.0 as Real).ln()]).unwrap();
        let s = softmax_rows(&x);
        assert!((s.get(0, 0) - 0.25).abs() < 1e-12);
        assert!((s.get(1, 0) - 0.75).abs() < 1e-12);
    }

    #[test]
    fn softmax_large_magnitude_no_overflow() {
        let x = Tensor2D::from_vec(3, 1, vec![1e4, -1e4, 0.0]).unwrap();
        let s = softmax_rows(&x);
        assert!(s.is_finite());
        let sum: Real = (0..3).map(|r| s.get(r, 0)).sum();
        assert!((sum - 1.0).abs() < 1e-6);
    }
}
