//! Model parameters, mean-field state representations and the mean-field energy.
//!
//! Mode ordering is always `(ζ₁, ζ₀, ζ₋₁)`. Energies are in units of `gN`
//! and times in units of `ħ/gN` with `ħ = 1`.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::roots::brent;

/// Tolerance used when validating populations and norms.
pub const POPULATION_TOL: f64 = 1e-10;

/// Populations below this are treated as empty when reading off phases.
pub const DEGENERATE_POPULATION: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// The product `gN`, held fixed when `N` changes.
    pub gn: f64,
    /// Quadratic Zeeman shift.
    pub q: f64,
    /// rf coupling between neighbouring Zeeman modes.
    pub r: f64,
    pub n_atoms: usize,
}

impl Default for ModelParams {
    fn default() -> Self {
        Self { gn: 1.0, q: 1.0, r: 0.0, n_atoms: 100 }
    }
}

impl ModelParams {
    pub fn new(gn: f64, q: f64, r: f64, n_atoms: usize) -> Result<Self> {
        let p = Self { gn, q, r, n_atoms };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_atoms == 0 {
            return Err(Error::InvalidConfig("n_atoms must be at least 1".into()));
        }
        if !(self.gn.is_finite() && self.q.is_finite() && self.r.is_finite()) {
            return Err(Error::InvalidConfig("couplings must be finite".into()));
        }
        Ok(())
    }

    /// Pair coupling of the second-quantized Hamiltonian, `g = gN / N`.
    pub fn g(&self) -> f64 {
        self.gn / self.n_atoms as f64
    }

    pub fn with_r(mut self, r: f64) -> Self {
        self.r = r;
        self
    }

    pub fn with_n_atoms(mut self, n: usize) -> Self {
        self.n_atoms = n;
        self
    }

    /// Sign-reversed couplings; evolving under these undoes a forward evolution.
    pub fn reversed(&self) -> Self {
        Self { gn: -self.gn, q: -self.q, r: -self.r, n_atoms: self.n_atoms }
    }
}

/// Mean-field amplitudes `(ζ₁, ζ₀, ζ₋₁)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassicalState {
    pub zeta: [Complex64; 3],
}

impl ClassicalState {
    /// Builds a state and checks the unit-norm invariant.
    pub fn new(zeta: [Complex64; 3]) -> Result<Self> {
        let s = Self { zeta };
        let n = s.norm_sqr();
        if (n - 1.0).abs() > POPULATION_TOL {
            return Err(Error::Domain(format!("state norm {n} differs from 1")));
        }
        Ok(s)
    }

    /// Builds a state without checking normalization (perturbed companions, samples).
    pub fn from_raw(zeta: [Complex64; 3]) -> Self {
        Self { zeta }
    }

    pub fn normalized(zeta: [Complex64; 3]) -> Result<Self> {
        let n = zeta.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if !(n > 0.0 && n.is_finite()) {
            return Err(Error::Domain("cannot normalize a zero state".into()));
        }
        Ok(Self { zeta: zeta.map(|z| z / n) })
    }

    /// All population in the `m_F = 0` mode.
    pub fn polar() -> Self {
        Self { zeta: [Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)] }
    }

    pub fn norm_sqr(&self) -> f64 {
        self.zeta.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn populations(&self) -> [f64; 3] {
        self.zeta.map(|z| z.norm_sqr())
    }

    pub fn rho0(&self) -> f64 {
        self.zeta[1].norm_sqr()
    }

    pub fn magnetization(&self) -> f64 {
        self.zeta[0].norm_sqr() - self.zeta[2].norm_sqr()
    }

    /// Real layout `[ζ₁ᴿ, ζ₁ᴵ, ζ₀ᴿ, ζ₀ᴵ, ζ₋₁ᴿ, ζ₋₁ᴵ]`.
    pub fn to_real(&self) -> [f64; 6] {
        let z = &self.zeta;
        [z[0].re, z[0].im, z[1].re, z[1].im, z[2].re, z[2].im]
    }

    pub fn from_real(y: &[f64]) -> Self {
        Self {
            zeta: [
                Complex64::new(y[0], y[1]),
                Complex64::new(y[2], y[3]),
                Complex64::new(y[4], y[5]),
            ],
        }
    }

    /// Multiplies by a global phase so that `ζ₀` is real and non-negative.
    pub fn real_zeta0_gauge(&self) -> Self {
        let z0 = self.zeta[1];
        if z0.norm() == 0.0 {
            return *self;
        }
        let ph = z0.conj() / z0.norm();
        Self { zeta: self.zeta.map(|z| z * ph) }
    }

    /// `min_φ ‖a − e^{iφ} b‖`.
    pub fn distance_up_to_phase(&self, other: &Self) -> f64 {
        let overlap: Complex64 =
            self.zeta.iter().zip(other.zeta.iter()).map(|(a, b)| a.conj() * b).sum();
        let ph = if overlap.norm() > 0.0 { overlap.conj() / overlap.norm() } else { Complex64::new(1.0, 0.0) };
        self.zeta
            .iter()
            .zip(other.zeta.iter())
            .map(|(a, b)| (a - b * ph).norm_sqr())
            .sum::<f64>()
            .sqrt()
    }
}

/// Canonical coordinates `{ρ₀, Θ_s}` and `{m, Θ_m}`.
///
/// The half-angle parametrization identifies `(Θ_s, Θ_m)` with
/// `(Θ_s + 2π, Θ_m + 2π)` and with `(Θ_s + 4π, Θ_m)`, so a shift of `Θ_s`
/// alone by `2π` is a different state. Angles are stored in the fundamental
/// domain `Θ_m ∈ (−π, π]`, `Θ_s ∈ (−2π, 2π]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CanonicalCoords {
    pub rho0: f64,
    pub theta_s: f64,
    pub m: f64,
    pub theta_m: f64,
}

impl CanonicalCoords {
    pub fn new(rho0: f64, theta_s: f64, m: f64, theta_m: f64) -> Result<Self> {
        if !(rho0.is_finite() && theta_s.is_finite() && m.is_finite() && theta_m.is_finite()) {
            return Err(Error::Domain("canonical coordinates must be finite".into()));
        }
        if !(-POPULATION_TOL..=1.0 + POPULATION_TOL).contains(&rho0) {
            return Err(Error::Domain(format!("rho0 = {rho0} outside [0, 1]")));
        }
        let rho0 = rho0.clamp(0.0, 1.0);
        let free = 1.0 - rho0;
        if free - m.abs() < -POPULATION_TOL {
            return Err(Error::Domain(format!("|m| = {} exceeds 1 - rho0 = {free}", m.abs())));
        }
        let m = m.clamp(-free, free);
        let (theta_s, theta_m) = wrap_angles(theta_s, theta_m);
        Ok(Self { rho0, theta_s, m, theta_m })
    }

    pub fn rho_plus(&self) -> f64 {
        ((1.0 - self.rho0 + self.m) / 2.0).max(0.0)
    }

    pub fn rho_minus(&self) -> f64 {
        ((1.0 - self.rho0 - self.m) / 2.0).max(0.0)
    }
}

/// Maps `(Θ_s, Θ_m)` to the fundamental domain without changing the state.
pub fn wrap_angles(theta_s: f64, theta_m: f64) -> (f64, f64) {
    let two_pi = 2.0 * PI;
    // Θ_m into (−π, π], compensating Θ_s by the same multiple of 2π.
    let k = ((PI - theta_m) / two_pi).floor();
    let theta_m = theta_m + k * two_pi;
    let theta_s = theta_s + k * two_pi;
    let k = ((2.0 * PI - theta_s) / (4.0 * PI)).floor();
    (theta_s + k * 4.0 * PI, theta_m)
}

/// Result of reading canonical coordinates off a state.
///
/// A phase that is undefined because a mode is empty is reported as 0 and
/// flagged; the other coordinates are still chosen so that
/// [`canonical_to_zeta`] reproduces the state up to a global phase.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CanonicalReading {
    pub coords: CanonicalCoords,
    pub theta_s_defined: bool,
    pub theta_m_defined: bool,
}

pub fn canonical_to_zeta(c: &CanonicalCoords) -> ClassicalState {
    let a1 = c.rho_plus().sqrt();
    let a0 = c.rho0.max(0.0).sqrt();
    let am = c.rho_minus().sqrt();
    let z1 = Complex64::from_polar(a1, 0.5 * (c.theta_s + c.theta_m));
    let zm = Complex64::from_polar(am, 0.5 * (c.theta_s - c.theta_m));
    let zeta = [z1, Complex64::new(a0, 0.0), zm];
    let n = zeta.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    ClassicalState { zeta: zeta.map(|z| z / n) }
}

pub fn zeta_to_canonical(z: &ClassicalState) -> CanonicalReading {
    let [p1, p0, pm] = z.populations();
    let total = p1 + p0 + pm;
    let (p1, p0, pm) = (p1 / total, p0 / total, pm / total);
    let empty1 = p1 < DEGENERATE_POPULATION;
    let empty0 = p0 < DEGENERATE_POPULATION;
    let emptym = pm < DEGENERATE_POPULATION;

    let mut a1 = z.zeta[0].arg();
    let mut a0 = z.zeta[1].arg();
    let mut am = z.zeta[2].arg();
    // Substitute empty-mode phases so that the undefined angle reads 0.
    match (empty1, emptym) {
        (true, true) => {
            a1 = a0;
            am = a0;
        }
        (true, false) => a1 = am,
        (false, true) => am = a1,
        (false, false) => {}
    }
    if empty0 {
        a0 = 0.5 * (a1 + am);
    }
    let theta_m = a1 - am;
    let theta_s = a1 + am - 2.0 * a0;
    let (theta_s, theta_m) = wrap_angles(theta_s, theta_m);
    let free = 1.0 - p0;
    let m = (p1 - pm).clamp(-free, free);
    CanonicalReading {
        coords: CanonicalCoords { rho0: p0, theta_s, m, theta_m },
        theta_s_defined: !(empty0 || empty1 || emptym),
        theta_m_defined: !(empty1 || emptym),
    }
}

/// Mean-field energy in the `ζ` representation. Polynomial, so it is also
/// meaningful for slightly unnormalized states.
pub fn mf_energy(z: &ClassicalState, p: &ModelParams) -> f64 {
    let [z1, z0, zm] = z.zeta;
    let (r1, r0, rm) = (z1.norm_sqr(), z0.norm_sqr(), zm.norm_sqr());
    let m = r1 - rm;
    let spin_changing = 2.0 * (z0.conj() * z0.conj() * z1 * zm).re;
    let rf = 2.0 * ((z1 + zm).conj() * z0).re;
    p.gn * (spin_changing + r0 * (r1 + rm) + 0.5 * m * m)
        + p.q * (r1 + rm)
        + p.r * FRAC_1_SQRT_2 * rf
}

/// Mean-field energy written in canonical coordinates.
pub fn mf_energy_canonical(c: &CanonicalCoords, p: &ModelParams) -> f64 {
    let free = 1.0 - c.rho0;
    let side = (free * free - c.m * c.m).max(0.0).sqrt();
    p.gn * c.rho0 * (free + side * c.theta_s.cos())
        + 0.5 * p.gn * c.m * c.m
        + p.q * free
        + p.r
            * c.rho0.sqrt()
            * ((free + c.m).max(0.0).sqrt() * (0.5 * (c.theta_s + c.theta_m)).cos()
                + (free - c.m).max(0.0).sqrt() * (0.5 * (c.theta_s - c.theta_m)).cos())
}

/// Number of scan intervals used to bracket energy-shell roots in `m`.
const M_SCAN: usize = 4096;

/// Finds `m` such that the state `(ρ₀, Θ_s, m, Θ_m)` has energy `target`.
///
/// Among several roots the one with the smallest `|m|` is returned, ties
/// going to positive `m`. `None` means the point is not on the shell.
pub fn solve_m_for_energy(
    rho0: f64,
    theta_s: f64,
    theta_m: f64,
    target: f64,
    p: &ModelParams,
) -> Option<f64> {
    if !target.is_finite() || !(0.0..=1.0).contains(&rho0) {
        return None;
    }
    let free = 1.0 - rho0;
    let f = |m: f64| {
        let c = CanonicalCoords { rho0, theta_s, m: m.clamp(-free, free), theta_m };
        mf_energy_canonical(&c, p) - target
    };
    if free <= 0.0 {
        return (f(0.0).abs() < 1e-10).then_some(0.0);
    }

    let mut roots = Vec::new();
    let h = 2.0 * free / M_SCAN as f64;
    let mut a = -free;
    let mut fa = f(a);
    if fa == 0.0 {
        roots.push(a);
    }
    for k in 1..=M_SCAN {
        let b = if k == M_SCAN { free } else { -free + k as f64 * h };
        let fb = f(b);
        if fb == 0.0 {
            roots.push(b);
        } else if fa != 0.0 && fa.signum() != fb.signum() {
            if let Some(root) = brent(f, a, b, 1e-15, 200) {
                roots.push(root);
            }
        }
        a = b;
        fa = fb;
    }
    roots
        .into_iter()
        .filter(|m| f(*m).abs() < 1e-10)
        .min_by(|x, y| {
            x.abs()
                .partial_cmp(&y.abs())
                .unwrap()
                .then_with(|| y.partial_cmp(x).unwrap())
        })
}

/// Fixed-energy raster over the `(ρ₀, Θ_s)` plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyShellSpec {
    pub energy: f64,
    /// `(n_rho0, n_theta_s)`.
    pub grid: (usize, usize),
    pub theta_m_fixed: f64,
    /// Closed range of `Θ_s` covered by the raster.
    pub theta_s_range: (f64, f64),
}

impl EnergyShellSpec {
    pub fn new(energy: f64, n_rho0: usize, n_theta_s: usize) -> Result<Self> {
        let s = Self { energy, grid: (n_rho0, n_theta_s), theta_m_fixed: 0.0, theta_s_range: (-2.0 * PI, 2.0 * PI) };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid.0 < 2 || self.grid.1 < 2 {
            return Err(Error::InvalidConfig("shell grid needs at least 2x2 points".into()));
        }
        if !self.energy.is_finite() {
            return Err(Error::InvalidConfig("shell energy must be finite".into()));
        }
        if !(self.theta_s_range.1 > self.theta_s_range.0) {
            return Err(Error::InvalidConfig("empty theta_s range".into()));
        }
        Ok(())
    }

    /// Cell-centred `ρ₀` of row `i`.
    pub fn rho0_at(&self, i: usize) -> f64 {
        (i as f64 + 0.5) / self.grid.0 as f64
    }

    /// Cell-centred `Θ_s` of column `j`.
    pub fn theta_s_at(&self, j: usize) -> f64 {
        let (lo, hi) = self.theta_s_range;
        lo + (j as f64 + 0.5) * (hi - lo) / self.grid.1 as f64
    }

    pub fn cells(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let (nr, nt) = self.grid;
        (0..nr).flat_map(move |i| (0..nt).map(move |j| (i, j)))
    }

    /// Canonical point of cell `(i, j)`, or `None` when off-shell.
    pub fn point(&self, i: usize, j: usize, p: &ModelParams) -> Option<CanonicalCoords> {
        let rho0 = self.rho0_at(i);
        let theta_s = self.theta_s_at(j);
        let m = solve_m_for_energy(rho0, theta_s, self.theta_m_fixed, self.energy, p)?;
        CanonicalCoords::new(rho0, theta_s, m, self.theta_m_fixed).ok()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn unit_params() -> ModelParams {
        ModelParams::default()
    }

    pub(crate) fn random_state(rng: &mut impl Rng) -> ClassicalState {
        let zeta = [0; 3].map(|_| Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5));
        ClassicalState::normalized(zeta).unwrap()
    }

    #[test]
    fn canonical_examples() {
        let z = canonical_to_zeta(&CanonicalCoords::new(1.0, 0.0, 0.0, 0.0).unwrap());
        assert_abs_diff_eq!(z.zeta[1].re, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(z.zeta[0].norm() + z.zeta[2].norm(), 0.0, epsilon = 1e-15);

        let z = canonical_to_zeta(&CanonicalCoords::new(0.0, 0.0, 1.0, 0.0).unwrap());
        assert_abs_diff_eq!(z.zeta[0].re, 1.0, epsilon = 1e-15);

        let z = canonical_to_zeta(&CanonicalCoords::new(0.5, 0.0, 0.0, 0.0).unwrap());
        assert_abs_diff_eq!(z.zeta[0].re, 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(z.zeta[1].re, FRAC_1_SQRT_2, epsilon = 1e-15);
        assert_abs_diff_eq!(z.zeta[2].re, 0.5, epsilon = 1e-15);
    }

    #[test]
    fn canonical_domain_errors() {
        assert!(CanonicalCoords::new(0.5, 0.0, 0.6, 0.0).is_err());
        assert!(CanonicalCoords::new(1.2, 0.0, 0.0, 0.0).is_err());
        assert!(CanonicalCoords::new(-0.1, 0.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn inverse_examples() {
        let z = ClassicalState::new([
            Complex64::new(0.5, 0.0),
            Complex64::new(FRAC_1_SQRT_2, 0.0),
            Complex64::new(0.5, 0.0),
        ])
        .unwrap();
        let c = zeta_to_canonical(&z);
        assert!(c.theta_s_defined && c.theta_m_defined);
        assert_abs_diff_eq!(c.coords.rho0, 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(c.coords.m, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(c.coords.theta_s, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(c.coords.theta_m, 0.0, epsilon = 1e-15);

        let c = zeta_to_canonical(&ClassicalState::polar());
        assert_eq!(c.coords.rho0, 1.0);
        assert_eq!(c.coords.m, 0.0);
        assert!(!c.theta_s_defined && !c.theta_m_defined);
        assert_eq!((c.coords.theta_s, c.coords.theta_m), (0.0, 0.0));
    }

    #[test]
    fn round_trip_random_states() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..1000 {
            let z = random_state(&mut rng);
            let back = canonical_to_zeta(&zeta_to_canonical(&z).coords);
            assert!(z.distance_up_to_phase(&back) < 1e-12);
        }
    }

    #[test]
    fn round_trip_with_empty_modes() {
        let i = Complex64::i();
        let cases = [
            [Complex64::new(0.0, 0.0), Complex64::new(0.6, 0.0), 0.8 * (0.7 * i).exp()],
            [0.8 * (-1.1 * i).exp(), Complex64::new(0.0, 0.6), Complex64::new(0.0, 0.0)],
            [0.6 * (2.5 * i).exp(), Complex64::new(0.0, 0.0), 0.8 * (0.3 * i).exp()],
        ];
        for zeta in cases {
            let z = ClassicalState::new(zeta).unwrap();
            let reading = zeta_to_canonical(&z);
            assert!(!reading.theta_s_defined);
            let back = canonical_to_zeta(&reading.coords);
            assert!(z.distance_up_to_phase(&back) < 1e-12);
        }
    }

    #[test]
    fn theta_s_shift_by_two_pi_is_a_different_state() {
        let a = canonical_to_zeta(&CanonicalCoords::new(0.2, -2.0 * PI / 3.0, 0.1, 0.0).unwrap());
        let b = canonical_to_zeta(&CanonicalCoords::new(0.2, 4.0 * PI / 3.0, 0.1, 0.0).unwrap());
        assert!(a.distance_up_to_phase(&b) > 0.5);
        let c = CanonicalCoords::new(0.2, 4.0 * PI / 3.0, 0.1, 0.0).unwrap();
        assert_abs_diff_eq!(c.theta_s, 4.0 * PI / 3.0, epsilon = 1e-15);
    }

    #[test]
    fn energy_examples() {
        let p = unit_params().with_r(0.7);
        assert_abs_diff_eq!(mf_energy(&ClassicalState::polar(), &p), 0.0, epsilon = 1e-15);

        let c = CanonicalCoords::new(0.0, 0.0, 0.1, 0.0).unwrap();
        assert_abs_diff_eq!(mf_energy(&canonical_to_zeta(&c), &unit_params()), 1.005, epsilon = 1e-14);
        assert_abs_diff_eq!(mf_energy_canonical(&c, &unit_params()), 1.005, epsilon = 1e-14);

        let c = CanonicalCoords::new(0.5, 0.0, 0.0, 0.0).unwrap();
        let p = unit_params().with_r(0.15);
        assert_abs_diff_eq!(mf_energy(&canonical_to_zeta(&c), &p), 1.15, epsilon = 1e-14);
        assert_abs_diff_eq!(mf_energy_canonical(&c, &p), 1.15, epsilon = 1e-14);
    }

    #[test]
    fn energy_forms_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..1000 {
            let z = random_state(&mut rng);
            let p = ModelParams::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0), rng.random_range(0.0..2.0), 10).unwrap();
            let c = zeta_to_canonical(&z).coords;
            assert_abs_diff_eq!(mf_energy(&z, &p), mf_energy_canonical(&c, &p), epsilon = 1e-12);
        }
    }

    #[test]
    fn energy_mirror_symmetry() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = unit_params().with_r(0.4);
        for _ in 0..500 {
            let rho0: f64 = rng.random();
            let m = (1.0 - rho0) * rng.random_range(-1.0..1.0);
            let ts = rng.random_range(-6.0..6.0);
            let tm = rng.random_range(-3.0..3.0);
            let a = CanonicalCoords { rho0, theta_s: ts, m, theta_m: tm };
            let b = CanonicalCoords { rho0, theta_s: ts, m: -m, theta_m: -tm };
            assert_abs_diff_eq!(mf_energy_canonical(&a, &p), mf_energy_canonical(&b, &p), epsilon = 1e-13);
        }
    }

    #[test]
    fn shell_root_examples() {
        let m = solve_m_for_energy(0.0, 0.0, 0.0, 1.005, &unit_params()).unwrap();
        assert_abs_diff_eq!(m, 0.1, epsilon = 1e-10);
        assert_eq!(solve_m_for_energy(1.0, 0.3, -1.0, 0.0, &unit_params()), Some(0.0));
        assert_eq!(solve_m_for_energy(1.0, 0.3, -1.0, 0.5, &unit_params()), None);
        // far above every energy on the ρ₀ = 0.5 line
        assert_eq!(solve_m_for_energy(0.5, 0.0, 0.0, 50.0, &unit_params()), None);
    }

    #[test]
    fn shell_root_matches_brute_force_scan() {
        let p = unit_params().with_r(0.15);
        let (rho0, ts, tm, e) = (0.2, 4.0 * PI / 3.0, 0.0, 1.005);
        let m = solve_m_for_energy(rho0, ts, tm, e, &p).unwrap();
        let c = CanonicalCoords::new(rho0, ts, m, tm).unwrap();
        assert!((mf_energy_canonical(&c, &p) - e).abs() < 1e-10);

        // Independent scan over 10⁶ grid points: collect sign changes.
        let free = 1.0 - rho0;
        let n = 1_000_000;
        let f = |m: f64| mf_energy_canonical(&CanonicalCoords { rho0, theta_s: ts, m, theta_m: tm }, &p) - e;
        let mut best: Option<f64> = None;
        let mut prev = f(-free);
        for k in 1..=n {
            let x = -free + 2.0 * free * k as f64 / n as f64;
            let fx = f(x);
            if prev.signum() != fx.signum() {
                let mid = x - free / n as f64;
                if best.map_or(true, |b| mid.abs() < b.abs()) {
                    best = Some(mid);
                }
            }
            prev = fx;
        }
        assert!((best.unwrap().abs() - m.abs()).abs() < 2e-6);
    }

    #[test]
    fn angle_wrapping_preserves_state() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..500 {
            let ts = rng.random_range(-20.0..20.0);
            let tm = rng.random_range(-20.0..20.0);
            let (ws, wm) = wrap_angles(ts, tm);
            assert!(wm > -PI && wm <= PI + 1e-12);
            assert!(ws > -2.0 * PI && ws <= 2.0 * PI + 1e-12);
            let raw = CanonicalCoords { rho0: 0.3, theta_s: ts, m: 0.2, theta_m: tm };
            let wrapped = CanonicalCoords { rho0: 0.3, theta_s: ws, m: 0.2, theta_m: wm };
            let d = canonical_to_zeta(&raw).distance_up_to_phase(&canonical_to_zeta(&wrapped));
            assert!(d < 1e-12);
        }
    }
}
