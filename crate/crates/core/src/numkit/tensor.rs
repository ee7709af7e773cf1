use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense row-major 2-D array of `f64`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Self {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::dim(
                "Tensor::from_vec",
                format!("{} values for shape {rows}x{cols}", data.len()),
            ));
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a tensor from equal-length rows. An empty slice yields a `0 x cols` tensor.
    pub fn from_rows(rows: &[Vec<f64>], cols: usize) -> Result<Self> {
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != cols {
                return Err(Error::dim(
                    "Tensor::from_rows",
                    format!("row {i} has {} columns, expected {cols}", row.len()),
                ));
            }
            data.extend_from_slice(row);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn scalar(value: f64) -> Self {
        Self {
            rows: 1,
            cols: 1,
            data: vec![value],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut t = Self::zeros(n, n);
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        t
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, value: f64) {
        self.data[r * self.cols + c] = value;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows).map(|r| self.row(r).to_vec()).collect()
    }

    /// Value of a `1 x 1` tensor.
    pub fn item(&self) -> Result<f64> {
        if self.shape() != (1, 1) {
            return Err(Error::dim(
                "Tensor::item",
                format!("expected 1x1, got {}x{}", self.rows, self.cols),
            ));
        }
        Ok(self.data[0])
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn scale_in_place(&mut self, s: f64) {
        self.data.iter_mut().for_each(|v| *v *= s);
    }

    /// `self += other`; shapes must match.
    pub fn add_assign(&mut self, other: &Tensor) {
        debug_assert_eq!(self.shape(), other.shape());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += *b;
        }
    }

    pub fn transpose(&self) -> Tensor {
        let mut out = Tensor::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        out
    }

    pub fn matmul(&self, other: &Tensor) -> Result<Tensor> {
        if self.cols != other.rows {
            return Err(Error::dim(
                "matmul",
                format!(
                    "{}x{} times {}x{}",
                    self.rows, self.cols, other.rows, other.cols
                ),
            ));
        }
        let mut out = Tensor::zeros(self.rows, other.cols);
        matmul_acc(self, other, &mut out);
        Ok(out)
    }

    pub fn max_abs_diff(&self, other: &Tensor) -> f64 {
        assert_eq!(self.shape(), other.shape());
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// `out += a · b`.
pub(crate) fn matmul_acc(a: &Tensor, b: &Tensor, out: &mut Tensor) {
    let n = b.cols;
    for i in 0..a.rows {
        let a_row = &a.data[i * a.cols..(i + 1) * a.cols];
        let out_row = &mut out.data[i * n..(i + 1) * n];
        for (k, &aik) in a_row.iter().enumerate() {
            if aik == 0.0 {
                continue;
            }
            let b_row = &b.data[k * n..(k + 1) * n];
            for (o, &bkj) in out_row.iter_mut().zip(b_row) {
                *o += aik * bkj;
            }
        }
    }
}

/// `out += aᵀ · b` without materialising the transpose.
pub(crate) fn matmul_tn_acc(a: &Tensor, b: &Tensor, out: &mut Tensor) {
    let n = b.cols;
    for k in 0..a.rows {
        let a_row = &a.data[k * a.cols..(k + 1) * a.cols];
        let b_row = &b.data[k * n..(k + 1) * n];
        for (i, &aki) in a_row.iter().enumerate() {
            if aki == 0.0 {
                continue;
            }
            let out_row = &mut out.data[i * n..(i + 1) * n];
            for (o, &bkj) in out_row.iter_mut().zip(b_row) {
                *o += aki * bkj;
            }
        }
    }
}

/// `out += a · bᵀ`.
pub(crate) fn matmul_nt_acc(a: &Tensor, b: &Tensor, out: &mut Tensor) {
    let k = a.cols;
    for i in 0..a.rows {
        let a_row = &a.data[i * k..(i + 1) * k];
        for j in 0..b.rows {
            let b_row = &b.data[j * k..(j + 1) * k];
            let dot: f64 = a_row.iter().zip(b_row).map(|(x, y)| x * y).sum();
            out.data[i * out.cols + j] += dot;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_product() {
        let a = Tensor::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]], 2).unwrap();
        assert_eq!(a.matmul(&Tensor::identity(2)).unwrap(), a);
    }

    #[test]
    fn selector_row() {
        let a = Tensor::from_rows(&[vec![1.0, 0.0]], 2).unwrap();
        let b = Tensor::from_rows(&[vec![2.0], vec![5.0]], 1).unwrap();
        assert_eq!(a.matmul(&b).unwrap().data(), &[2.0]);
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let a = Tensor::zeros(2, 3);
        let b = Tensor::zeros(2, 3);
        assert!(matches!(a.matmul(&b), Err(Error::Dimension { .. })));
        assert!(Tensor::from_vec(2, 2, vec![1.0; 3]).is_err());
    }

    #[test]
    fn transposed_kernels_agree_with_explicit_transpose() {
        let a = Tensor::from_vec(3, 2, vec![1.0, -2.0, 0.5, 3.0, 4.0, -1.0]).unwrap();
        let b = Tensor::from_vec(3, 4, (0..12).map(|v| v as f64 * 0.3 - 1.0).collect()).unwrap();
        let mut tn = Tensor::zeros(2, 4);
        matmul_tn_acc(&a, &b, &mut tn);
        assert!(tn.max_abs_diff(&a.transpose().matmul(&b).unwrap()) < 1e-12);

        let c = Tensor::from_vec(4, 2, (0..8).map(|v| v as f64 - 3.5).collect()).unwrap();
        let mut nt = Tensor::zeros(3, 4);
        matmul_nt_acc(&a, &c, &mut nt);
        assert!(nt.max_abs_diff(&a.matmul(&c.transpose()).unwrap()) < 1e-12);
    }
}
