use super::config::AdjNormalization;
use super::tensor::Scalar;
use crate::graph::AdjacencyMatrix;

/// Compressed-row copy of the fusion graph used inside the network.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseGraph<T> {
    size: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<T>,
}

impl<T: Scalar> SparseGraph<T> {
    pub fn from_adjacency(a: &AdjacencyMatrix, norm: AdjNormalization) -> Self {
        let dense;
        let a = match norm {
            AdjNormalization::None => a,
            AdjNormalization::Row => {
                dense = a.row_normalized();
                &dense
            }
        };
        let size = a.size();
        let mut row_ptr = Vec::with_capacity(size + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        for i in 0..size {
            for (j, &v) in a.row(i).iter().enumerate() {
                if v != 0.0 {
                    cols.push(j);
                    vals.push(T::of(v));
                }
            }
            row_ptr.push(cols.len());
        }
        Self {
            size,
            row_ptr,
            cols,
            vals,
        }
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn nonzeros(&self) -> usize {
        self.vals.len()
    }

    /// `out = A * x` for `x: size x c`.
    pub fn mul(&self, x: &[T], c: usize, out: &mut [T]) {
        for i in 0..self.size {
            let row = &mut out[i * c..(i + 1) * c];
            row.iter_mut().for_each(|v| *v = T::zero());
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                let w = self.vals[k];
                let src = &x[self.cols[k] * c..(self.cols[k] + 1) * c];
                for (o, &s) in row.iter_mut().zip(src) {
                    *o += w * s;
                }
            }
        }
    }

    /// `out += A^T * g` for `g: size x c`.
    pub fn mul_transpose_acc(&self, g: &[T], c: usize, out: &mut [T]) {
        for i in 0..self.size {
            let src = &g[i * c..(i + 1) * c];
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                let w = self.vals[k];
                let j = self.cols[k];
                for (o, &s) in out[j * c..(j + 1) * c].iter_mut().zip(src) {
                    *o += w * s;
                }
            }
        }
    }
}
