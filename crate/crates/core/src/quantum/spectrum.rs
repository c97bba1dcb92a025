//! Dense diagonalization of the parity blocks and spectral time evolution.

use std::io::Write;
use std::sync::Arc;

use faer::linalg::matmul::matmul;
use faer::{Accum, Mat, Par, Side};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::quantum::basis::FockBasis;
use crate::quantum::hamiltonian::HamiltonianMatrix;
use crate::quantum::parity::{Parity, ParityBlocks, ParitySector};
use crate::quantum::states::QuantumState;

/// Eigenvalues in ascending order and, optionally, the orthonormal
/// eigenvectors as columns.
#[derive(Debug, Clone)]
pub struct Eigensystem {
    pub values: Vec<f64>,
    pub vectors: Option<Mat<f64>>,
}

pub fn eigh(m: &Mat<f64>, vectors: bool) -> Result<Eigensystem> {
    if m.nrows() != m.ncols() {
        return Err(Error::Solver("matrix is not square".into()));
    }
    if m.nrows() == 0 {
        return Ok(Eigensystem { values: vec![], vectors: vectors.then(|| Mat::zeros(0, 0)) });
    }
    if vectors {
        let evd = m.self_adjoint_eigen(Side::Lower).map_err(|e| Error::Solver(format!("{e:?}")))?;
        let s = evd.S().column_vector();
        let values = (0..m.nrows()).map(|i| s[i]).collect();
        Ok(Eigensystem { values, vectors: Some(evd.U().to_owned()) })
    } else {
        let values = m.self_adjoint_eigenvalues(Side::Lower).map_err(|e| Error::Solver(format!("{e:?}")))?;
        Ok(Eigensystem { values, vectors: None })
    }
}

/// Spectrum of the full Hamiltonian without symmetry reduction.
pub fn diagonalize_full(h: &HamiltonianMatrix, vectors: bool) -> Result<Eigensystem> {
    eigh(&h.matrix.to_dense(), vectors)
}

#[derive(Debug, Clone)]
pub struct BlockSpectrum {
    pub sector: ParitySector,
    pub eigen: Eigensystem,
}

#[derive(Debug, Clone)]
pub struct Spectrum {
    pub basis: Arc<FockBasis>,
    pub even: BlockSpectrum,
    pub odd: BlockSpectrum,
}

pub fn diagonalize(blocks: &ParityBlocks, vectors: bool) -> Result<Spectrum> {
    let (even, odd) = rayon::join(|| eigh(&blocks.even_matrix, vectors), || eigh(&blocks.odd_matrix, vectors));
    Ok(Spectrum {
        basis: Arc::clone(&blocks.basis),
        even: BlockSpectrum { sector: blocks.even.clone(), eigen: even? },
        odd: BlockSpectrum { sector: blocks.odd.clone(), eigen: odd? },
    })
}

/// Pair of real matrices holding the real and imaginary parts of a complex one.
struct SplitMat {
    re: Mat<f64>,
    im: Mat<f64>,
}

impl SplitMat {
    fn zeros(r: usize, c: usize) -> Self {
        Self { re: Mat::zeros(r, c), im: Mat::zeros(r, c) }
    }

    /// `out = op(A) · self` for a real `A`, with `op` the transpose when requested.
    fn left_mul(&self, a: &Mat<f64>, transpose: bool) -> Self {
        let rows = if transpose { a.ncols() } else { a.nrows() };
        let mut out = Self::zeros(rows, self.re.ncols());
        let par = Par::rayon(0);
        if transpose {
            matmul(&mut out.re, Accum::Replace, a.transpose(), &self.re, 1.0, par);
            matmul(&mut out.im, Accum::Replace, a.transpose(), &self.im, 1.0, par);
        } else {
            matmul(&mut out.re, Accum::Replace, a, &self.re, 1.0, par);
            matmul(&mut out.im, Accum::Replace, a, &self.im, 1.0, par);
        }
        out
    }
}

impl BlockSpectrum {
    fn vectors(&self) -> Result<&Mat<f64>> {
        self.eigen
            .vectors
            .as_ref()
            .ok_or_else(|| Error::Precondition("time evolution needs eigenvectors".into()))
    }

    /// Adds `U(t_k) x_k` restricted to this sector to `out[k]`.
    fn propagate_into(&self, xs: &[&[Complex64]], times: &[f64], sign: f64, out: &mut [Vec<Complex64>]) -> Result<()> {
        let v = self.vectors()?;
        let d = self.sector.dim();
        if d == 0 {
            return Ok(());
        }
        let k = xs.len();
        let mut block = SplitMat::zeros(d, k);
        for (col, x) in xs.iter().enumerate() {
            for (row, c) in self.sector.project(x).into_iter().enumerate() {
                block.re[(row, col)] = c.re;
                block.im[(row, col)] = c.im;
            }
        }
        let mut coeff = block.left_mul(v, true);
        for (col, &t) in times.iter().enumerate() {
            for (row, &e) in self.eigen.values.iter().enumerate() {
                let ph = Complex64::from_polar(1.0, -sign * e * t);
                let c = Complex64::new(coeff.re[(row, col)], coeff.im[(row, col)]) * ph;
                coeff.re[(row, col)] = c.re;
                coeff.im[(row, col)] = c.im;
            }
        }
        let back = coeff.left_mul(v, false);
        let mut tmp = vec![Complex64::new(0.0, 0.0); d];
        for (col, o) in out.iter_mut().enumerate() {
            for (row, t) in tmp.iter_mut().enumerate() {
                *t = Complex64::new(back.re[(row, col)], back.im[(row, col)]);
            }
            self.sector.lift_into(&tmp, o);
        }
        Ok(())
    }
}

/// Columns per batched evolution; bounds the working memory at `dim × BATCH`.
const BATCH: usize = 64;

impl Spectrum {
    pub fn dim(&self) -> usize {
        self.basis.dim()
    }

    pub fn block(&self, parity: Parity) -> &BlockSpectrum {
        match parity {
            Parity::Even => &self.even,
            Parity::Odd => &self.odd,
        }
    }

    /// Union of both block spectra, ascending.
    pub fn all_values(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.even.eigen.values.iter().chain(&self.odd.eigen.values).copied().collect();
        v.sort_by(f64::total_cmp);
        v
    }

    pub fn has_vectors(&self) -> bool {
        self.even.eigen.vectors.is_some() && self.odd.eigen.vectors.is_some()
    }

    /// `e^{∓iHt_k} x_k` for every pair, `sign = +1` for forward evolution and
    /// `−1` for evolution under `−H`.
    pub fn propagate_many(&self, xs: &[&[Complex64]], times: &[f64], sign: f64) -> Result<Vec<Vec<Complex64>>> {
        assert_eq!(xs.len(), times.len());
        let mut out = Vec::with_capacity(xs.len());
        for (xc, tc) in xs.chunks(BATCH).zip(times.chunks(BATCH)) {
            let mut part = vec![vec![Complex64::new(0.0, 0.0); self.dim()]; xc.len()];
            self.even.propagate_into(xc, tc, sign, &mut part)?;
            self.odd.propagate_into(xc, tc, sign, &mut part)?;
            out.extend(part);
        }
        Ok(out)
    }

    /// `|ψ(t)⟩ = Σ_k e^{−iE_k t}|k⟩⟨k|ψ₀⟩`.
    pub fn evolve(&self, psi: &QuantumState, t: f64) -> Result<QuantumState> {
        Ok(self.evolve_times(psi, &[t])?.pop().expect("one time requested"))
    }

    pub fn evolve_times(&self, psi: &QuantumState, times: &[f64]) -> Result<Vec<QuantumState>> {
        if psi.basis.n_atoms() != self.basis.n_atoms() {
            return Err(Error::Domain("state and Hamiltonian use different atom numbers".into()));
        }
        let xs = vec![psi.amplitudes.as_slice(); times.len()];
        Ok(self
            .propagate_many(&xs, times, 1.0)?
            .into_iter()
            .map(|a| QuantumState::from_raw(Arc::clone(&self.basis), a))
            .collect())
    }

    /// CSV rows `block, index, eigenvalue`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "block,index,eigenvalue")?;
        for b in [&self.even, &self.odd] {
            for (k, e) in b.eigen.values.iter().enumerate() {
                writeln!(w, "{},{k},{e}", b.sector.parity.label())?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{canonical_to_zeta, CanonicalCoords, ModelParams};
    use crate::quantum::hamiltonian::build_hamiltonian;
    use crate::quantum::operators::Operator;
    use crate::quantum::parity::parity_blocks;
    use crate::quantum::states::coherent_state;

    fn setup(n: usize, r: f64, vectors: bool) -> (HamiltonianMatrix, Spectrum) {
        let b = Arc::new(FockBasis::new(n).unwrap());
        let h = build_hamiltonian(&b, &ModelParams::default().with_r(r).with_n_atoms(n));
        let s = diagonalize(&parity_blocks(&h), vectors).unwrap();
        (h, s)
    }

    /// Cyclic Jacobi rotations; an eigenvalue oracle independent of faer.
    fn jacobi_eigenvalues(m: &Mat<f64>) -> Vec<f64> {
        let n = m.nrows();
        let mut a: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| m[(i, j)]).collect()).collect();
        for _ in 0..100 {
            let off: f64 = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| a[i][j] * a[i][j]).sum();
            if off < 1e-30 {
                break;
            }
            for p in 0..n {
                for q in p + 1..n {
                    if a[p][q].abs() < 1e-300 {
                        continue;
                    }
                    let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let t = if theta == 0.0 { 1.0 } else { t };
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let s = t * c;
                    for k in 0..n {
                        let (akp, akq) = (a[k][p], a[k][q]);
                        a[k][p] = c * akp - s * akq;
                        a[k][q] = s * akp + c * akq;
                    }
                    for k in 0..n {
                        let (apk, aqk) = (a[p][k], a[q][k]);
                        a[p][k] = c * apk - s * aqk;
                        a[q][k] = s * apk + c * aqk;
                    }
                }
            }
        }
        let mut v: Vec<f64> = (0..n).map(|i| a[i][i]).collect();
        v.sort_by(f64::total_cmp);
        v
    }

    #[test]
    fn small_spectra_match_jacobi_oracle() {
        for n in 1..=3 {
            for r in [0.0, 0.5] {
                let (h, s) = setup(n, r, false);
                let oracle = jacobi_eigenvalues(&h.matrix.to_dense());
                let ours = s.all_values();
                assert_eq!(ours.len(), h.dim());
                for (a, b) in ours.iter().zip(&oracle) {
                    assert!((a - b).abs() < 1e-10, "N={n} r={r}: {a} vs {b}");
                }
            }
        }
    }

    #[test]
    fn block_spectra_unite_to_full_spectrum() {
        let (h, s) = setup(20, 0.5, false);
        let full = diagonalize_full(&h, false).unwrap().values;
        let united = s.all_values();
        assert_eq!(full.len(), united.len());
        assert!(full.iter().zip(&united).all(|(a, b)| (a - b).abs() < 1e-8));
    }

    #[test]
    fn eigenvectors_are_orthonormal() {
        let (_, s) = setup(10, 0.3, true);
        for b in [&s.even, &s.odd] {
            let v = b.eigen.vectors.as_ref().unwrap();
            let g = v.transpose() * v - Mat::<f64>::identity(v.ncols(), v.ncols());
            assert!(g.norm_max() < 1e-8);
        }
    }

    #[test]
    fn eigenstates_have_definite_sz_without_rf() {
        let n = 8;
        let (h, _) = setup(n, 0.0, false);
        let full = diagonalize_full(&h, true).unwrap();
        let v = full.vectors.unwrap();
        let sz = Operator::parse("Sz").unwrap().matrix(&h.basis).to_dense();
        // Group degenerate levels and check that each eigenspace is invariant under S_z.
        let mut start = 0;
        while start < full.values.len() {
            let mut end = start + 1;
            while end < full.values.len() && full.values[end] - full.values[end - 1] < 1e-9 {
                end += 1;
            }
            let block = v.subcols(start, end - start);
            let image = &sz * block;
            let inside = block * (block.transpose() * &image);
            assert!((&image - &inside).norm_max() < 1e-8);
            start = end;
        }
    }

    #[test]
    fn evolution_is_unitary_and_conserves_energy() {
        let (h, s) = setup(15, 0.5, true);
        let psi = coherent_state(&canonical_to_zeta(&CanonicalCoords::new(0.3, 0.5, 0.1, 0.2).unwrap()), &h.basis);
        let e0 = psi.expectation(&h.matrix);
        let states = s.evolve_times(&psi, &[0.0, 0.7, 3.0, 25.0]).unwrap();
        assert!(states[0].amplitudes.iter().zip(&psi.amplitudes).all(|(a, b)| (a - b).norm() < 1e-12));
        for st in &states {
            assert!((st.norm() - 1.0).abs() < 1e-10);
            assert!((st.expectation(&h.matrix) - e0).abs() < 1e-10);
        }
    }

    #[test]
    fn evolution_matches_dense_exponential() {
        let (h, s) = setup(3, 0.5, true);
        let full = diagonalize_full(&h, true).unwrap();
        let v = full.vectors.unwrap();
        let psi = coherent_state(&canonical_to_zeta(&CanonicalCoords::new(0.4, -1.0, 0.2, 0.6).unwrap()), &h.basis);
        let t = 1.7;
        let ours = s.evolve(&psi, t).unwrap();
        for i in 0..h.dim() {
            let mut want = Complex64::new(0.0, 0.0);
            for k in 0..h.dim() {
                let ck: Complex64 = (0..h.dim()).map(|j| psi.amplitudes[j] * v[(j, k)]).sum();
                want += v[(i, k)] * ck * Complex64::from_polar(1.0, -full.values[k] * t);
            }
            assert!((want - ours.amplitudes[i]).norm() < 1e-10);
        }
    }

    #[test]
    fn eigenstate_only_acquires_phase() {
        let (h, s) = setup(6, 0.5, true);
        let mut amp = vec![Complex64::new(0.0, 0.0); h.dim()];
        let col: Vec<Complex64> = (0..s.even.sector.dim()).map(|r| Complex64::new(s.even.eigen.vectors.as_ref().unwrap()[(r, 3)], 0.0)).collect();
        s.even.sector.lift_into(&col, &mut amp);
        let psi = QuantumState::new(Arc::clone(&h.basis), amp).unwrap();
        let later = s.evolve(&psi, 4.2).unwrap();
        assert!((psi.inner(&later).norm() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn parity_is_conserved() {
        let (h, s) = setup(12, 0.5, true);
        let psi = QuantumState::fock(Arc::clone(&h.basis), 0, 12, 0).unwrap();
        let later = s.evolve(&psi, 5.0).unwrap();
        assert!(later.parity_weights().1 < 1e-10);
    }

    #[test]
    fn missing_vectors_is_an_error() {
        let (h, s) = setup(4, 0.5, false);
        let psi = QuantumState::fock(Arc::clone(&h.basis), 0, 4, 0).unwrap();
        assert!(matches!(s.evolve(&psi, 1.0), Err(Error::Precondition(_))));
    }
}
