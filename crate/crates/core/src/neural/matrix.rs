/// Dense row-major matrix. Network activations are stored feature-major:
/// one row per feature, one column per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix data length mismatch");
        Self { rows, cols, data }
    }

    /// Stacks equally sized column vectors side by side.
    pub fn from_columns(columns: &[Vec<f64>]) -> Self {
        let cols = columns.len();
        let rows = columns.first().map_or(0, Vec::len);
        let mut m = Self::zeros(rows, cols);
        for (j, c) in columns.iter().enumerate() {
            assert_eq!(c.len(), rows, "ragged columns");
            for (i, &v) in c.iter().enumerate() {
                m.data[i * cols + j] = v;
            }
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// `self * x`. Every output entry accumulates over the inner dimension in
    /// index order, so a column's result does not depend on the batch it is in.
    pub fn matmul(&self, x: &Matrix) -> Matrix {
        assert_eq!(self.cols, x.rows, "matmul inner dimension mismatch");
        let mut out = Matrix::zeros(self.rows, x.cols);
        for i in 0..self.rows {
            let orow = &mut out.data[i * x.cols..(i + 1) * x.cols];
            for k in 0..self.cols {
                let w = self.data[i * self.cols + k];
                let xrow = &x.data[k * x.cols..(k + 1) * x.cols];
                for (o, &xv) in orow.iter_mut().zip(xrow) {
                    *o += w * xv;
                }
            }
        }
        out
    }

    /// `self^T * d`.
    pub fn transpose_matmul(&self, d: &Matrix) -> Matrix {
        assert_eq!(self.rows, d.rows, "transpose_matmul dimension mismatch");
        let mut out = Matrix::zeros(self.cols, d.cols);
        for i in 0..self.rows {
            let drow = &d.data[i * d.cols..(i + 1) * d.cols];
            for k in 0..self.cols {
                let w = self.data[i * self.cols + k];
                let orow = &mut out.data[k * d.cols..(k + 1) * d.cols];
                for (o, &dv) in orow.iter_mut().zip(drow) {
                    *o += w * dv;
                }
            }
        }
        out
    }

    /// `d * x^T`, the weight gradient of a dense layer.
    pub fn matmul_transpose(d: &Matrix, x: &Matrix) -> Matrix {
        assert_eq!(d.cols, x.cols, "matmul_transpose dimension mismatch");
        let mut out = Matrix::zeros(d.rows, x.rows);
        for i in 0..d.rows {
            let drow = d.row(i);
            for k in 0..x.rows {
                out.data[i * x.rows + k] = drow.iter().zip(x.row(k)).map(|(a, b)| a * b).sum();
            }
        }
        out
    }
}
