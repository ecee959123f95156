//! Dense row-major tensors.
//!
//! Everything in this crate is small (vectors and weight matrices of a few
//! thousand entries), so a plain `Vec<f64>` with a shape is all we need.
//! f64 keeps gradient checks tight and makes runs bit-reproducible.

/// A dense tensor: row-major values plus a shape.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Self {
        assert_eq!(
            shape.iter().product::<usize>(),
            data.len(),
            "shape {:?} does not match {} values",
            shape,
            data.len()
        );
        Tensor { shape, data }
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Tensor {
            shape,
            data: vec![0.0; n],
        }
    }

    pub fn scalar(v: f64) -> Self {
        Tensor {
            shape: vec![],
            data: vec![v],
        }
    }

    pub fn vector(values: Vec<f64>) -> Self {
        Tensor {
            shape: vec![values.len()],
            data: values,
        }
    }

    /// `rows x cols` matrix from row-major data.
    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        Tensor::new(vec![rows, cols], data)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn is_scalar(&self) -> bool {
        self.data.len() == 1 && self.shape.is_empty()
    }

    /// Value of a scalar tensor.
    pub fn item(&self) -> f64 {
        assert_eq!(self.data.len(), 1, "item() on non-scalar tensor");
        self.data[0]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Matrix row count; panics if not 2-D.
    pub fn rows(&self) -> usize {
        assert_eq!(self.shape.len(), 2);
        self.shape[0]
    }

    pub fn cols(&self) -> usize {
        assert_eq!(self.shape.len(), 2);
        self.shape[1]
    }

    /// Row slice of a 2-D tensor.
    pub fn row(&self, r: usize) -> &[f64] {
        let c = self.cols();
        &self.data[r * c..(r + 1) * c]
    }

    /// y = W x (W is `rows x cols`, x has `cols` entries).
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let (rows, cols) = (self.rows(), self.cols());
        assert_eq!(x.len(), cols, "matvec: W is {}x{}, x has {}", rows, cols, x.len());
        let mut y = vec![0.0; rows];
        for r in 0..rows {
            let row = &self.data[r * cols..(r + 1) * cols];
            let mut acc = 0.0;
            for (w, v) in row.iter().zip(x) {
                acc += w * v;
            }
            y[r] = acc;
        }
        y
    }

    /// y += Wᵀ g, the adjoint of `matvec` with respect to x.
    pub fn matvec_transpose_acc(&self, g: &[f64], out: &mut [f64]) {
        let (rows, cols) = (self.rows(), self.cols());
        assert_eq!(g.len(), rows);
        assert_eq!(out.len(), cols);
        for r in 0..rows {
            let gr = g[r];
            if gr == 0.0 {
                continue;
            }
            let row = &self.data[r * cols..(r + 1) * cols];
            for (o, w) in out.iter_mut().zip(row) {
                *o += gr * w;
            }
        }
    }

    pub fn norm2(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matvec_matches_hand_expansion() {
        let w = Tensor::matrix(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let y = w.matvec(&[1.0, 0.5, -1.0]);
        assert_eq!(y, vec![1.0 + 1.0 - 3.0, 4.0 + 2.5 - 6.0]);
    }

    #[test]
    fn matvec_transpose_is_adjoint() {
        // <W x, g> == <x, Wᵀ g> for random-ish fixed values.
        let w = Tensor::matrix(3, 2, vec![0.3, -1.2, 0.7, 2.0, -0.5, 0.1]);
        let x = [1.5, -0.25];
        let g = [0.2, -0.4, 1.1];
        let wx = w.matvec(&x);
        let lhs: f64 = wx.iter().zip(&g).map(|(a, b)| a * b).sum();
        let mut wtg = vec![0.0; 2];
        w.matvec_transpose_acc(&g, &mut wtg);
        let rhs: f64 = x.iter().zip(&wtg).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    #[should_panic]
    fn shape_mismatch_panics() {
        Tensor::new(vec![2, 2], vec![1.0, 2.0, 3.0]);
    }
}
