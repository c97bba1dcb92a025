//! Many-body state vectors and spin-coherent states.

use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::model::ClassicalState;
use crate::quantum::basis::FockBasis;
use crate::quantum::sparse::SparseMatrix;

pub const STATE_NORM_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct QuantumState {
    pub basis: Arc<FockBasis>,
    pub amplitudes: Vec<Complex64>,
}

impl QuantumState {
    pub fn new(basis: Arc<FockBasis>, amplitudes: Vec<Complex64>) -> Result<Self> {
        if amplitudes.len() != basis.dim() {
            return Err(Error::Domain(format!("{} amplitudes for a basis of dimension {}", amplitudes.len(), basis.dim())));
        }
        let s = Self { basis, amplitudes };
        let n = s.norm();
        if (n - 1.0).abs() > STATE_NORM_TOL {
            return Err(Error::Domain(format!("state norm {n} differs from 1")));
        }
        Ok(s)
    }

    /// Wraps a vector that is normalized by construction.
    pub(crate) fn from_raw(basis: Arc<FockBasis>, amplitudes: Vec<Complex64>) -> Self {
        Self { basis, amplitudes }
    }

    pub fn fock(basis: Arc<FockBasis>, n1: usize, n0: usize, nm: usize) -> Result<Self> {
        let i = basis
            .index_of(n1, n0, nm)
            .ok_or_else(|| Error::Domain(format!("|{n1},{n0},{nm}⟩ is not in the N={} basis", basis.n_atoms())))?;
        let mut amplitudes = vec![Complex64::new(0.0, 0.0); basis.dim()];
        amplitudes[i] = Complex64::new(1.0, 0.0);
        Ok(Self { basis, amplitudes })
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn inner(&self, other: &Self) -> Complex64 {
        self.amplitudes.iter().zip(&other.amplitudes).map(|(a, b)| a.conj() * b).sum()
    }

    pub fn expectation(&self, op: &SparseMatrix) -> f64 {
        let y = op.apply_vec(&self.amplitudes);
        self.amplitudes.iter().zip(&y).map(|(a, b)| (a.conj() * b).re).sum()
    }

    /// Weight in the exchange-symmetric and antisymmetric sectors.
    pub fn parity_weights(&self) -> (f64, f64) {
        let mut even = 0.0;
        let mut odd = 0.0;
        for i in 0..self.basis.dim() {
            let j = self.basis.partner(i);
            let (a, b) = (self.amplitudes[i], self.amplitudes[j]);
            even += 0.25 * (a + b).norm_sqr();
            odd += 0.25 * (a - b).norm_sqr();
        }
        (even, odd)
    }
}

/// `c(n) = √(N!/(n₁! n₀! n₋₁!)) ζ₁^{n₁} ζ₀^{n₀} ζ₋₁^{n₋₁}`, evaluated in logs.
pub fn coherent_state(z: &ClassicalState, basis: &Arc<FockBasis>) -> QuantumState {
    let lnz = z.zeta.map(|c| c.norm().ln());
    let arg = z.zeta.map(|c| c.arg());
    let scale = 1.0 / z.norm_sqr().sqrt();
    let n = basis.n_atoms() as f64;
    let amplitudes = basis
        .states()
        .iter()
        .enumerate()
        .map(|(i, occ)| {
            let mut ln_mag = basis.half_ln_multinomial(i) + n * scale.ln();
            let mut phase = 0.0;
            for k in 0..3 {
                if occ[k] > 0 {
                    ln_mag += occ[k] as f64 * lnz[k];
                    phase += occ[k] as f64 * arg[k];
                }
            }
            Complex64::from_polar(ln_mag.exp(), phase)
        })
        .collect();
    QuantumState::from_raw(Arc::clone(basis), amplitudes)
}

/// Coherent-state amplitudes through precomputed powers; used in tight loops.
pub(crate) struct CoherentOverlap {
    basis: Arc<FockBasis>,
    sqrt_multinomial: Vec<f64>,
}

impl CoherentOverlap {
    pub fn new(basis: &Arc<FockBasis>) -> Self {
        let sqrt_multinomial = (0..basis.dim()).map(|i| basis.half_ln_multinomial(i).exp()).collect();
        Self { basis: Arc::clone(basis), sqrt_multinomial }
    }

    /// `⟨ζ|ψ⟩` for a normalized `ζ`.
    pub fn overlap(&self, z: &ClassicalState, psi: &[Complex64], powers: &mut [Vec<Complex64>; 3]) -> Complex64 {
        let n = self.basis.n_atoms();
        for (k, pw) in powers.iter_mut().enumerate() {
            pw.resize(n + 1, Complex64::new(0.0, 0.0));
            let c = z.zeta[k].conj();
            pw[0] = Complex64::new(1.0, 0.0);
            for e in 1..=n {
                pw[e] = pw[e - 1] * c;
            }
        }
        let mut acc = Complex64::new(0.0, 0.0);
        for (i, &[n1, n0, nm]) in self.basis.states().iter().enumerate() {
            acc += powers[0][n1] * powers[1][n0] * powers[2][nm] * (self.sqrt_multinomial[i] * psi[i]);
        }
        acc
    }
}
