//! Dense fixed-size vectors and matrices for low-dimensional state spaces.
//!
//! Everything here is plain `Vec<f64>` storage with row-major indexing; the
//! dimensions in play are tiny (n <= 16), so no linear-algebra crate is
//! warranted and all hot-path operations write into caller-provided buffers.

/// Maximum supported state dimension.
pub const MAX_DIM: usize = 16;

/// Euclidean norm of a state vector.
#[inline]
pub fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Dot product.
#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Row-major dense matrix.
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

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    pub fn from_rows(rows: &[&[f64]]) -> Self {
        let r = rows.len();
        let c = if r == 0 { 0 } else { rows[0].len() };
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.len(), c, "ragged rows");
            data.extend_from_slice(row);
        }
        Self { rows: r, cols: c, data }
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
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn fill(&mut self, v: f64) {
        self.data.iter_mut().for_each(|x| *x = v);
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Largest entry magnitude (the matrix norm used for noise classes).
    pub fn max_abs_entry(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `out += self * x`, where `x` has `cols` entries and `out` has `rows`.
    #[inline]
    pub fn mul_vec_add(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.cols);
        debug_assert_eq!(out.len(), self.rows);
        for (i, o) in out.iter_mut().enumerate() {
            let row = &self.data[i * self.cols..(i + 1) * self.cols];
            *o += dot(row, x);
        }
    }

    /// Writes `self * self^T / 2` into `out` (rows x rows, exactly symmetric:
    /// only the lower triangle is computed and then mirrored).
    pub fn half_gram_into(&self, out: &mut Matrix) {
        debug_assert_eq!(out.rows, self.rows);
        debug_assert_eq!(out.cols, self.rows);
        for i in 0..self.rows {
            let ri = &self.data[i * self.cols..(i + 1) * self.cols];
            for j in 0..=i {
                let rj = &self.data[j * self.cols..(j + 1) * self.cols];
                let v = 0.5 * dot(ri, rj);
                out.set(i, j, v);
                out.set(j, i, v);
            }
        }
    }

    /// Whether `self + shift*I` admits a Cholesky factorization, i.e. all
    /// eigenvalues of the symmetric matrix are >= -shift.
    pub fn is_psd_within(&self, shift: f64) -> bool {
        assert_eq!(self.rows, self.cols);
        let n = self.rows;
        let mut l = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let mut s = self.get(i, j);
                if i == j {
                    s += shift;
                }
                for k in 0..j {
                    s -= l[i * n + k] * l[j * n + k];
                }
                if i == j {
                    if s < 0.0 {
                        return false;
                    }
                    l[i * n + i] = s.sqrt();
                } else {
                    let d = l[j * n + j];
                    l[i * n + j] = if d > 0.0 { s / d } else { 0.0 };
                }
            }
        }
        true
    }
}
