//! Real sparse matrices in compressed-row form acting on complex vectors.

use num_complex::Complex64;

#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    dim: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    /// Assembles from `(row, col, value)` triplets; duplicates are summed.
    pub fn from_triplets(dim: usize, mut trip: Vec<(usize, usize, f64)>) -> Self {
        trip.sort_unstable_by_key(|&(r, c, _)| (r, c));
        let mut indptr = vec![0; dim + 1];
        let mut indices = Vec::with_capacity(trip.len());
        let mut values: Vec<f64> = Vec::with_capacity(trip.len());
        let mut last = None;
        for (r, c, v) in trip {
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
                continue;
            }
            last = Some((r, c));
            indices.push(c);
            values.push(v);
            indptr[r + 1] = indices.len();
        }
        for r in 0..dim {
            indptr[r + 1] = indptr[r + 1].max(indptr[r]);
        }
        Self { dim, indptr, indices, values }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.indptr[r]..self.indptr[r + 1];
        self.indices[range.clone()].iter().copied().zip(self.values[range].iter().copied())
    }

    /// `y = A x`.
    pub fn apply(&self, x: &[Complex64], y: &mut [Complex64]) {
        for (r, out) in y.iter_mut().enumerate() {
            *out = self.row(r).map(|(c, v)| x[c] * v).sum();
        }
    }

    pub fn apply_vec(&self, x: &[Complex64]) -> Vec<Complex64> {
        let mut y = vec![Complex64::new(0.0, 0.0); self.dim];
        self.apply(x, &mut y);
        y
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.row(r).find(|&(k, _)| k == c).map_or(0.0, |(_, v)| v)
    }

    pub fn scaled(mut self, s: f64) -> Self {
        self.values.iter_mut().for_each(|v| *v *= s);
        self
    }

    /// `max |A − Aᵀ|`.
    pub fn asymmetry(&self) -> f64 {
        (0..self.dim)
            .flat_map(|r| self.row(r).map(move |(c, v)| (r, c, v)))
            .map(|(r, c, v)| (v - self.get(c, r)).abs())
            .fold(0.0, f64::max)
    }

    /// Max absolute row sum, an upper bound on the spectral norm of a symmetric matrix.
    pub fn inf_norm(&self) -> f64 {
        (0..self.dim).map(|r| self.row(r).map(|(_, v)| v.abs()).sum::<f64>()).fold(0.0, f64::max)
    }

    pub fn to_dense(&self) -> faer::Mat<f64> {
        let mut m = faer::Mat::zeros(self.dim, self.dim);
        for r in 0..self.dim {
            for (c, v) in self.row(r) {
                m[(r, c)] += v;
            }
        }
        m
    }

    /// `e^{−iθA} x` by a Taylor series, split into substeps with `|θ|·‖A‖ ≤ ½`.
    pub fn expi_apply(&self, theta: f64, x: &[Complex64]) -> Vec<Complex64> {
        let bound = theta.abs() * self.inf_norm();
        let steps = (2.0 * bound).ceil().max(1.0) as usize;
        let h = theta / steps as f64;
        let coef = Complex64::new(0.0, -h);
        let mut y = x.to_vec();
        let mut term = vec![Complex64::new(0.0, 0.0); self.dim];
        let mut next = vec![Complex64::new(0.0, 0.0); self.dim];
        for _ in 0..steps {
            term.copy_from_slice(&y);
            let scale = y.iter().map(|v| v.norm()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
            for k in 1..=60 {
                self.apply(&term, &mut next);
                let f = coef / k as f64;
                let mut size: f64 = 0.0;
                for (t, n) in term.iter_mut().zip(&next) {
                    *t = n * f;
                    size = size.max(t.norm());
                }
                y.iter_mut().zip(&term).for_each(|(a, b)| *a += b);
                if size <= 1e-17 * scale {
                    break;
                }
            }
        }
        y
    }

    pub fn is_diagonal(&self) -> bool {
        (0..self.dim).all(|r| self.row(r).all(|(c, _)| c == r))
    }
}
