//! Fock basis `|n₁, n₀, n₋₁⟩` with fixed total atom number.

use serde::{Deserialize, Serialize};
use statrs::function::factorial::ln_factorial;

use crate::error::{Error, Result};

/// Largest Hilbert-space dimension handled by the dense eigensolver.
pub const DEFAULT_DIM_CAP: usize = 6000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FockBasis {
    n_atoms: usize,
    states: Vec<[usize; 3]>,
    /// `½ ln(N! / (n₁! n₀! n₋₁!))` per state.
    half_ln_multinomial: Vec<f64>,
}

impl FockBasis {
    pub fn dimension_for(n_atoms: usize) -> usize {
        (n_atoms + 1) * (n_atoms + 2) / 2
    }

    pub fn new(n_atoms: usize) -> Result<Self> {
        Self::with_cap(n_atoms, DEFAULT_DIM_CAP)
    }

    /// States ordered lexicographically in `(n₁, n₀)`.
    pub fn with_cap(n_atoms: usize, cap: usize) -> Result<Self> {
        if n_atoms == 0 {
            return Err(Error::Domain("basis needs at least one atom".into()));
        }
        let dim = Self::dimension_for(n_atoms);
        if dim > cap {
            return Err(Error::Resource { dim, cap });
        }
        let mut states = Vec::with_capacity(dim);
        for n1 in 0..=n_atoms {
            for n0 in 0..=n_atoms - n1 {
                states.push([n1, n0, n_atoms - n1 - n0]);
            }
        }
        let lnf = ln_factorial(n_atoms as u64);
        let half_ln_multinomial = states
            .iter()
            .map(|s| 0.5 * (lnf - s.iter().map(|&k| ln_factorial(k as u64)).sum::<f64>()))
            .collect();
        Ok(Self { n_atoms, states, half_ln_multinomial })
    }

    pub fn n_atoms(&self) -> usize {
        self.n_atoms
    }

    pub fn dim(&self) -> usize {
        self.states.len()
    }

    pub fn states(&self) -> &[[usize; 3]] {
        &self.states
    }

    pub fn state(&self, i: usize) -> [usize; 3] {
        self.states[i]
    }

    pub fn half_ln_multinomial(&self, i: usize) -> f64 {
        self.half_ln_multinomial[i]
    }

    pub fn index_of(&self, n1: usize, n0: usize, nm: usize) -> Option<usize> {
        if n1 + n0 + nm != self.n_atoms {
            return None;
        }
        Some(self.index_unchecked(n1, n0))
    }

    #[inline]
    pub(crate) fn index_unchecked(&self, n1: usize, n0: usize) -> usize {
        let n = self.n_atoms;
        // Rows with n₁' < n₁ contribute N − n₁' + 1 states each.
        n1 * (n + 1) - n1 * n1.saturating_sub(1) / 2 + n0
    }

    /// Index of the state with the `±1` labels exchanged.
    pub fn partner(&self, i: usize) -> usize {
        let [n1, n0, _] = self.states[i];
        let nm = self.n_atoms - n1 - n0;
        self.index_unchecked(nm, n0)
    }
}
