//! Second-quantized three-mode Hamiltonian in the Fock basis.

use std::f64::consts::FRAC_1_SQRT_2;
use std::sync::Arc;

use crate::model::ModelParams;
use crate::quantum::basis::FockBasis;
use crate::quantum::sparse::SparseMatrix;

/// Real symmetric Hamiltonian; every coupling is real, so the Hermitian
/// matrix is real symmetric.
#[derive(Debug, Clone)]
pub struct HamiltonianMatrix {
    pub basis: Arc<FockBasis>,
    pub params: ModelParams,
    pub matrix: SparseMatrix,
}

impl HamiltonianMatrix {
    pub fn dim(&self) -> usize {
        self.basis.dim()
    }

    pub fn hermiticity_residual(&self) -> f64 {
        self.matrix.asymmetry()
    }

    pub fn element(&self, row: usize, col: usize) -> f64 {
        self.matrix.get(row, col)
    }
}

pub fn build_hamiltonian(basis: &Arc<FockBasis>, p: &ModelParams) -> HamiltonianMatrix {
    let g = p.gn / basis.n_atoms() as f64;
    let s = p.r * FRAC_1_SQRT_2;
    let mut trip = Vec::with_capacity(basis.dim() * 7);
    for (i, &[n1, n0, nm]) in basis.states().iter().enumerate() {
        let (f1, f0, fm) = (n1 as f64, n0 as f64, nm as f64);
        let diag = g * (f0 * (f1 + fm) + 0.5 * (f1 - fm).powi(2)) + p.q * (f1 + fm);
        trip.push((i, i, diag));

        // a₀†a₀† a₁ a₋₁ and its adjoint.
        if n1 > 0 && nm > 0 {
            let j = basis.index_unchecked(n1 - 1, n0 + 2);
            let v = g * (f1 * fm * (f0 + 1.0) * (f0 + 2.0)).sqrt();
            trip.push((j, i, v));
            trip.push((i, j, v));
        }
        // (a₁† + a₋₁†) a₀ and its adjoint.
        if s != 0.0 && n0 > 0 {
            let j1 = basis.index_unchecked(n1 + 1, n0 - 1);
            let v1 = s * ((f1 + 1.0) * f0).sqrt();
            trip.push((j1, i, v1));
            trip.push((i, j1, v1));
            let jm = basis.index_unchecked(n1, n0 - 1);
            let vm = s * ((fm + 1.0) * f0).sqrt();
            trip.push((jm, i, vm));
            trip.push((i, jm, vm));
        }
    }
    HamiltonianMatrix { basis: Arc::clone(basis), params: *p, matrix: SparseMatrix::from_triplets(basis.dim(), trip) }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantum::operators::{Operator, OperatorKind};
    use faer::Mat;

    fn basis(n: usize) -> Arc<FockBasis> {
        Arc::new(FockBasis::new(n).unwrap())
    }

    /// Dense single-mode ladder operators on the product space truncated at
    /// `N` quanta per mode, projected onto the fixed-`N` sector.
    pub(crate) fn brute_force_hamiltonian(n: usize, p: &ModelParams) -> Mat<f64> {
        let d = n + 1;
        let full = d * d * d;
        let idx = |a: usize, b: usize, c: usize| (a * d + b) * d + c;
        let ann = |mode: usize| {
            let mut m = Mat::<f64>::zeros(full, full);
            for a in 0..d {
                for b in 0..d {
                    for c in 0..d {
                        let occ = [a, b, c];
                        if occ[mode] == 0 {
                            continue;
                        }
                        let mut t = occ;
                        t[mode] -= 1;
                        m[(idx(t[0], t[1], t[2]), idx(a, b, c))] = (occ[mode] as f64).sqrt();
                    }
                }
            }
            m
        };
        let (a1, a0, am) = (ann(0), ann(1), ann(2));
        let (c1, c0, cm) = (a1.transpose().to_owned(), a0.transpose().to_owned(), am.transpose().to_owned());
        let (n1, n0, nm) = (&c1 * &a1, &c0 * &a0, &cm * &am);
        let g = p.gn / n as f64;
        let sc = &c0 * &c0 * &a1 * &am;
        let imb = &n1 - &nm;
        let h = (&sc + sc.transpose()) * faer::Scale(g)
            + (&n0 * (&n1 + &nm) + (&imb * &imb) * faer::Scale(0.5)) * faer::Scale(g)
            + (&n1 + &nm) * faer::Scale(p.q)
            + {
                let hop = (&c1 + &cm) * &a0;
                (&hop + hop.transpose()) * faer::Scale(p.r * FRAC_1_SQRT_2)
            };
        let b = FockBasis::new(n).unwrap();
        Mat::from_fn(b.dim(), b.dim(), |i, j| {
            let [x1, x0, xm] = b.state(i);
            let [y1, y0, ym] = b.state(j);
            h[(idx(x1, x0, xm), idx(y1, y0, ym))]
        })
    }

    #[test]
    fn polar_state_has_zero_energy() {
        for r in [0.0, 0.7] {
            let b = basis(10);
            let h = build_hamiltonian(&b, &ModelParams::default().with_r(r).with_n_atoms(10));
            let i = b.index_of(0, 10, 0).unwrap();
            assert_eq!(h.element(i, i), 0.0);
        }
    }

    #[test]
    fn pair_creation_element() {
        let n = 10;
        let b = basis(n);
        let p = ModelParams::new(1.3, 0.4, 0.2, n).unwrap();
        let h = build_hamiltonian(&b, &p);
        let v = h.element(b.index_of(1, n - 2, 1).unwrap(), b.index_of(0, n, 0).unwrap());
        assert!((v - p.g() * ((n * (n - 1)) as f64).sqrt()).abs() < 1e-14);
    }

    #[test]
    fn matches_brute_force_ladder_construction() {
        for n in 1..=3 {
            for r in [0.0, 0.5] {
                let p = ModelParams::new(1.0, 1.0, r, n).unwrap();
                let h = build_hamiltonian(&basis(n), &p).matrix.to_dense();
                let bf = brute_force_hamiltonian(n, &p);
                let diff = (&h - &bf).norm_max();
                assert!(diff < 1e-12, "N={n} r={r}: {diff}");
            }
        }
    }

    #[test]
    fn hermitian_and_conserves_sz_without_rf() {
        let b = basis(20);
        let h = build_hamiltonian(&b, &ModelParams::default().with_n_atoms(20));
        assert!(h.hermiticity_residual() < 1e-12);
        let sz = Operator { kind: OperatorKind::Sz, normalized: false }.matrix(&b).to_dense();
        let hd = h.matrix.to_dense();
        let comm = &hd * &sz - &sz * &hd;
        assert!(comm.norm_max() < 1e-12);
    }
}
