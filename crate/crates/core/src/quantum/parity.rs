//! Block decomposition under the exchange `1 ↔ −1` of the side-mode labels.

use std::f64::consts::FRAC_1_SQRT_2;
use std::sync::Arc;

use faer::Mat;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::quantum::basis::FockBasis;
use crate::quantum::hamiltonian::HamiltonianMatrix;
use crate::quantum::sparse::SparseMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Parity {
    Even,
    Odd,
}

impl Parity {
    pub fn sign(self) -> f64 {
        match self {
            Parity::Even => 1.0,
            Parity::Odd => -1.0,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Parity::Even => "even",
            Parity::Odd => "odd",
        }
    }
}

/// Orthonormal symmetry-adapted sub-basis of one parity sector.
///
/// Vector `k` is `|i⟩` for a self-symmetric state, otherwise
/// `(|i⟩ ± |j⟩)/√2` with `j` the exchange partner of `i` and `n₁ < n₋₁` at `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct ParitySector {
    pub parity: Parity,
    pub members: Vec<(usize, Option<usize>)>,
}

impl ParitySector {
    pub fn dim(&self) -> usize {
        self.members.len()
    }

    /// Block coordinates of a full-basis vector.
    pub fn project(&self, x: &[Complex64]) -> Vec<Complex64> {
        let s = self.parity.sign();
        self.members
            .iter()
            .map(|&(i, j)| match j {
                None => x[i],
                Some(j) => (x[i] + x[j] * s) * FRAC_1_SQRT_2,
            })
            .collect()
    }

    /// Adds the full-basis image of block coordinates to `out`.
    pub fn lift_into(&self, c: &[Complex64], out: &mut [Complex64]) {
        let s = self.parity.sign();
        for (&(i, j), &v) in self.members.iter().zip(c) {
            match j {
                None => out[i] += v,
                Some(j) => {
                    out[i] += v * FRAC_1_SQRT_2;
                    out[j] += v * (s * FRAC_1_SQRT_2);
                }
            }
        }
    }

    /// `(block index, coefficient)` of every full-basis state with a
    /// component in this sector.
    fn coefficient_map(&self, dim: usize) -> Vec<Option<(usize, f64)>> {
        let s = self.parity.sign();
        let mut map = vec![None; dim];
        for (k, &(i, j)) in self.members.iter().enumerate() {
            match j {
                None => map[i] = Some((k, 1.0)),
                Some(j) => {
                    map[i] = Some((k, FRAC_1_SQRT_2));
                    map[j] = Some((k, s * FRAC_1_SQRT_2));
                }
            }
        }
        map
    }

    /// Dense matrix of a symmetric operator restricted to this sector, plus
    /// the largest element coupling it to the other sector.
    pub fn restrict(&self, op: &SparseMatrix, other: &ParitySector) -> (Mat<f64>, f64) {
        let dim = op.dim();
        let here = self.coefficient_map(dim);
        let there = other.coefficient_map(dim);
        let n = self.dim();
        let mut block = Mat::<f64>::zeros(n, n);
        let mut leak = vec![0.0; other.dim()];
        let mut max_leak: f64 = 0.0;
        for (k, &(i, j)) in self.members.iter().enumerate() {
            let sources: [(usize, f64); 2] = match j {
                None => [(i, 1.0), (i, 0.0)],
                Some(j) => [(i, FRAC_1_SQRT_2), (j, self.parity.sign() * FRAC_1_SQRT_2)],
            };
            leak.iter_mut().for_each(|v| *v = 0.0);
            for (src, cs) in sources {
                if cs == 0.0 {
                    continue;
                }
                for (t, h) in op.row(src) {
                    if let Some((l, ct)) = here[t] {
                        block[(l, k)] += ct * h * cs;
                    }
                    if let Some((l, ct)) = there[t] {
                        leak[l] += ct * h * cs;
                    }
                }
            }
            max_leak = leak.iter().fold(max_leak, |a, v| a.max(v.abs()));
        }
        (block, max_leak)
    }
}

pub fn parity_sectors(basis: &FockBasis) -> (ParitySector, ParitySector) {
    let mut even = Vec::new();
    let mut odd = Vec::new();
    for (i, &[n1, _, nm]) in basis.states().iter().enumerate() {
        if n1 == nm {
            even.push((i, None));
        } else if n1 < nm {
            let j = basis.partner(i);
            even.push((i, Some(j)));
            odd.push((i, Some(j)));
        }
    }
    (ParitySector { parity: Parity::Even, members: even }, ParitySector { parity: Parity::Odd, members: odd })
}

#[derive(Debug, Clone)]
pub struct ParityBlocks {
    pub basis: Arc<FockBasis>,
    pub even: ParitySector,
    pub odd: ParitySector,
    pub even_matrix: Mat<f64>,
    pub odd_matrix: Mat<f64>,
    /// Largest matrix element between the sectors.
    pub off_block_residual: f64,
}

impl ParityBlocks {
    pub fn sector(&self, parity: Parity) -> (&ParitySector, &Mat<f64>) {
        match parity {
            Parity::Even => (&self.even, &self.even_matrix),
            Parity::Odd => (&self.odd, &self.odd_matrix),
        }
    }
}

pub fn parity_blocks(h: &HamiltonianMatrix) -> ParityBlocks {
    let (even, odd) = parity_sectors(&h.basis);
    let (even_matrix, leak_e) = even.restrict(&h.matrix, &odd);
    let (odd_matrix, leak_o) = odd.restrict(&h.matrix, &even);
    ParityBlocks {
        basis: Arc::clone(&h.basis),
        even,
        odd,
        even_matrix,
        odd_matrix,
        off_block_residual: leak_e.max(leak_o),
    }
}
