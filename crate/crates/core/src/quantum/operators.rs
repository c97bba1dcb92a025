//! Observables built from mode populations and spin-1 ladder combinations.

use std::f64::consts::FRAC_1_SQRT_2;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quantum::basis::FockBasis;
use crate::quantum::sparse::SparseMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OperatorKind {
    N1,
    N0,
    Nm1,
    Sz,
    Sx,
}

/// Operator with optional division by `N`.
///
/// Labels: `rho0`, `rho1`, `rhom1`, `sz`, `sx` are divided by `N`;
/// `N0`, `N1`, `Nm1`, `Sz`, `Sx` are the raw operators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Operator {
    pub kind: OperatorKind,
    pub normalized: bool,
}

impl FromStr for Operator {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        use OperatorKind::*;
        let (kind, normalized) = match s {
            "rho0" => (N0, true),
            "rho1" => (N1, true),
            "rhom1" => (Nm1, true),
            "sz" => (Sz, true),
            "sx" => (Sx, true),
            "N0" => (N0, false),
            "N1" => (N1, false),
            "Nm1" => (Nm1, false),
            "Sz" => (Sz, false),
            "Sx" => (Sx, false),
            _ => return Err(Error::UnknownOperator(s.to_string())),
        };
        Ok(Self { kind, normalized })
    }
}

impl fmt::Display for Operator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use OperatorKind::*;
        let s = match (self.kind, self.normalized) {
            (N0, true) => "rho0",
            (N1, true) => "rho1",
            (Nm1, true) => "rhom1",
            (Sz, true) => "sz",
            (Sx, true) => "sx",
            (N0, false) => "N0",
            (N1, false) => "N1",
            (Nm1, false) => "Nm1",
            (Sz, false) => "Sz",
            (Sx, false) => "Sx",
        };
        f.write_str(s)
    }
}

impl Operator {
    pub fn parse(label: &str) -> Result<Self> {
        label.parse()
    }

    /// Single-particle matrix `M` with `Ô = Σᵢⱼ a†ᵢ Mᵢⱼ aⱼ`, modes ordered `(1, 0, −1)`.
    /// Normalization by `N` is not included.
    pub fn mode_matrix(&self) -> [[f64; 3]; 3] {
        let s = FRAC_1_SQRT_2;
        match self.kind {
            OperatorKind::N1 => [[1.0, 0.0, 0.0], [0.0; 3], [0.0; 3]],
            OperatorKind::N0 => [[0.0; 3], [0.0, 1.0, 0.0], [0.0; 3]],
            OperatorKind::Nm1 => [[0.0; 3], [0.0; 3], [0.0, 0.0, 1.0]],
            OperatorKind::Sz => [[1.0, 0.0, 0.0], [0.0; 3], [0.0, 0.0, -1.0]],
            OperatorKind::Sx => [[0.0, s, 0.0], [s, 0.0, s], [0.0, s, 0.0]],
        }
    }

    /// Whether the operator commutes with the exchange of the `±1` labels.
    pub fn is_exchange_even(&self) -> bool {
        !matches!(self.kind, OperatorKind::Sz | OperatorKind::N1 | OperatorKind::Nm1)
    }

    pub fn matrix(&self, basis: &FockBasis) -> SparseMatrix {
        let dim = basis.dim();
        let mut trip = Vec::with_capacity(dim * 4);
        for (i, &[n1, n0, nm]) in basis.states().iter().enumerate() {
            match self.kind {
                OperatorKind::N1 => trip.push((i, i, n1 as f64)),
                OperatorKind::N0 => trip.push((i, i, n0 as f64)),
                OperatorKind::Nm1 => trip.push((i, i, nm as f64)),
                OperatorKind::Sz => trip.push((i, i, n1 as f64 - nm as f64)),
                OperatorKind::Sx => {
                    if n0 > 0 {
                        let j1 = basis.index_unchecked(n1 + 1, n0 - 1);
                        let v1 = FRAC_1_SQRT_2 * ((n1 as f64 + 1.0) * n0 as f64).sqrt();
                        trip.push((j1, i, v1));
                        trip.push((i, j1, v1));
                        let jm = basis.index_unchecked(n1, n0 - 1);
                        let vm = FRAC_1_SQRT_2 * ((nm as f64 + 1.0) * n0 as f64).sqrt();
                        trip.push((jm, i, vm));
                        trip.push((i, jm, vm));
                    }
                }
            }
        }
        let m = SparseMatrix::from_triplets(dim, trip);
        if self.normalized {
            m.scaled(1.0 / basis.n_atoms() as f64)
        } else {
            m
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labels_round_trip() {
        for l in ["rho0", "rho1", "rhom1", "sz", "sx", "N0", "N1", "Nm1", "Sz", "Sx"] {
            assert_eq!(Operator::parse(l).unwrap().to_string(), l);
        }
        assert!(matches!(Operator::parse("sy"), Err(Error::UnknownOperator(_))));
    }

    #[test]
    fn spin_one_algebra_at_single_atom() {
        let b = FockBasis::new(1).unwrap();
        let sx = Operator::parse("Sx").unwrap().matrix(&b).to_dense();
        let sz = Operator::parse("Sz").unwrap().matrix(&b).to_dense();
        // Both have eigenvalues {−1, 0, 1}.
        let s2 = &sx * &sx + &sz * &sz;
        let trace: f64 = (0..3).map(|i| s2[(i, i)]).sum();
        assert!((trace - 4.0).abs() < 1e-14);
        assert!((sx.norm_max() - FRAC_1_SQRT_2).abs() < 1e-15);
    }

    #[test]
    fn normalization_divides_by_n() {
        let b = FockBasis::new(4).unwrap();
        let raw = Operator::parse("N0").unwrap().matrix(&b);
        let norm = Operator::parse("rho0").unwrap().matrix(&b);
        for i in 0..b.dim() {
            assert_eq!(raw.get(i, i) / 4.0, norm.get(i, i));
        }
    }
}
