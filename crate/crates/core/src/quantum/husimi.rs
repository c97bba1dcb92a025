//! Husimi distributions on the `Θ_m = 0` slice, summed over a grid of `m`.

use std::f64::consts::PI;
use std::io::Write;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{canonical_to_zeta, CanonicalCoords, EnergyShellSpec};
use crate::quantum::states::{CoherentOverlap, QuantumState};

pub const DEFAULT_M_GRID: usize = 101;

/// Cell-centred raster over `ρ₀ ∈ [0, 1]` and a `Θ_s` interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseGrid {
    pub n_rho0: usize,
    pub n_theta_s: usize,
    pub theta_s_range: (f64, f64),
}

impl PhaseGrid {
    pub fn new(n_rho0: usize, n_theta_s: usize) -> Self {
        Self { n_rho0, n_theta_s, theta_s_range: (-2.0 * PI, 2.0 * PI) }
    }

    pub fn rho0_at(&self, i: usize) -> f64 {
        (i as f64 + 0.5) / self.n_rho0 as f64
    }

    pub fn theta_s_at(&self, j: usize) -> f64 {
        let (lo, hi) = self.theta_s_range;
        lo + (j as f64 + 0.5) * (hi - lo) / self.n_theta_s as f64
    }
}

impl From<&EnergyShellSpec> for PhaseGrid {
    fn from(s: &EnergyShellSpec) -> Self {
        Self { n_rho0: s.grid.0, n_theta_s: s.grid.1, theta_s_range: s.theta_s_range }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HusimiGrid {
    pub grid: PhaseGrid,
    pub m_grid_size: usize,
    /// Row-major `n_rho0 × n_theta_s`.
    pub values: Vec<f64>,
}

impl HusimiGrid {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.grid.n_theta_s + j]
    }

    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }

    /// Copy scaled so the largest value is 1.
    pub fn max_normalized(&self) -> Self {
        let m = self.values.iter().copied().fold(0.0, f64::max);
        let mut out = self.clone();
        if m > 0.0 {
            out.values.iter_mut().for_each(|v| *v /= m);
        }
        out
    }

    /// `(i, j, ρ₀, Θ_s, value)` for every cell.
    pub fn cells(&self) -> impl Iterator<Item = (usize, usize, f64, f64, f64)> + '_ {
        (0..self.grid.n_rho0).flat_map(move |i| {
            (0..self.grid.n_theta_s).map(move |j| (i, j, self.grid.rho0_at(i), self.grid.theta_s_at(j), self.get(i, j)))
        })
    }

    /// Share of the total mass in cells closer than `radius` to `(rho0, theta_s)`,
    /// measured with [`phase_distance`].
    pub fn mass_fraction_within(&self, rho0: f64, theta_s: f64, radius: f64) -> f64 {
        let total = self.total();
        if total <= 0.0 {
            return 0.0;
        }
        let inside: f64 = self.cells().filter(|c| phase_distance((c.2, c.3), (rho0, theta_s)) < radius).map(|c| c.4).sum();
        inside / total
    }

    /// Root-mean-square [`phase_distance`] of the distribution from `(rho0, theta_s)`.
    pub fn spread_about(&self, rho0: f64, theta_s: f64) -> f64 {
        let total = self.total();
        let second: f64 = self.cells().map(|c| c.4 * phase_distance((c.2, c.3), (rho0, theta_s)).powi(2)).sum();
        (second / total).sqrt()
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "i,j,rho0,theta_s,value")?;
        for (i, j, r, t, v) in self.cells() {
            writeln!(w, "{i},{j},{r},{t},{v}")?;
        }
        Ok(())
    }
}

/// Distance in the `(ρ₀, Θ_s)` plane with `Θ_s` rescaled by its `4π` period,
/// so both axes span unit length; `Θ_s` differences are wrapped.
pub fn phase_distance(a: (f64, f64), b: (f64, f64)) -> f64 {
    let period = 4.0 * PI;
    let mut d = (a.1 - b.1).rem_euclid(period);
    if d > 0.5 * period {
        d -= period;
    }
    (a.0 - b.0).hypot(d / period)
}

/// Uniform grid over `[−(1−ρ₀), 1−ρ₀]` including both ends.
pub fn m_grid(rho0: f64, size: usize) -> Vec<f64> {
    let free = (1.0 - rho0).max(0.0);
    if size == 1 {
        return vec![0.0];
    }
    (0..size).map(|k| -free + 2.0 * free * k as f64 / (size - 1) as f64).collect()
}

struct HusimiEvaluator<'a> {
    overlap: CoherentOverlap,
    psi: &'a [num_complex::Complex64],
}

impl HusimiEvaluator<'_> {
    fn profile(&self, rho0: f64, theta_s: f64, m_size: usize) -> Vec<(f64, f64)> {
        let mut powers = [vec![], vec![], vec![]];
        m_grid(rho0, m_size)
            .into_iter()
            .map(|m| {
                let c = CanonicalCoords { rho0, theta_s, m, theta_m: 0.0 };
                let z = canonical_to_zeta(&c);
                (m, self.overlap.overlap(&z, self.psi, &mut powers).norm_sqr())
            })
            .collect()
    }
}

/// Per-`m` values `|⟨ζ(ρ₀, Θ_s, m, 0)|ψ⟩|²` at one phase-space point.
pub fn husimi_profile(state: &QuantumState, rho0: f64, theta_s: f64, m_grid_size: usize) -> Result<Vec<(f64, f64)>> {
    if !(0.0..=1.0).contains(&rho0) || m_grid_size == 0 {
        return Err(Error::Domain("need rho0 in [0, 1] and a non-empty m grid".into()));
    }
    let ev = HusimiEvaluator { overlap: CoherentOverlap::new(&state.basis), psi: &state.amplitudes };
    Ok(ev.profile(rho0, theta_s, m_grid_size))
}

pub fn husimi_grid(state: &QuantumState, grid: &PhaseGrid, m_grid_size: usize) -> Result<HusimiGrid> {
    if grid.n_rho0 == 0 || grid.n_theta_s == 0 || m_grid_size == 0 {
        return Err(Error::InvalidConfig("Husimi grid dimensions must be positive".into()));
    }
    let ev = HusimiEvaluator { overlap: CoherentOverlap::new(&Arc::clone(&state.basis)), psi: &state.amplitudes };
    let values = (0..grid.n_rho0 * grid.n_theta_s)
        .into_par_iter()
        .map(|idx| {
            let (i, j) = (idx / grid.n_theta_s, idx % grid.n_theta_s);
            ev.profile(grid.rho0_at(i), grid.theta_s_at(j), m_grid_size).iter().map(|(_, q)| q).sum()
        })
        .collect();
    Ok(HusimiGrid { grid: *grid, m_grid_size, values })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantum::FockBasis;

    #[test]
    fn polar_state_profile() {
        let b = Arc::new(FockBasis::new(10).unwrap());
        let psi = QuantumState::fock(b, 0, 10, 0).unwrap();
        let at_pole = husimi_profile(&psi, 1.0, 0.3, 5).unwrap();
        assert_eq!(at_pole.len(), 5);
        assert!(at_pole.iter().all(|(m, q)| *m == 0.0 && (q - 1.0).abs() < 1e-14));
        let at_equator = husimi_profile(&psi, 0.0, 0.3, 5).unwrap();
        assert!(at_equator.iter().all(|(_, q)| *q == 0.0));
    }

    #[test]
    fn m_grid_spans_allowed_range() {
        let g = m_grid(0.4, 7);
        assert_eq!(g.len(), 7);
        assert!((g[0] + 0.6).abs() < 1e-15 && (g[6] - 0.6).abs() < 1e-15 && g[3].abs() < 1e-15);
    }

    #[test]
    fn grid_values_are_finite_and_non_negative() {
        let b = Arc::new(FockBasis::new(8).unwrap());
        let psi = crate::quantum::states::coherent_state(&canonical_to_zeta(&CanonicalCoords::new(0.5, 0.2, 0.1, 0.0).unwrap()), &b);
        let h = husimi_grid(&psi, &PhaseGrid::new(6, 7), 9).unwrap();
        assert_eq!(h.values.len(), 42);
        assert!(h.values.iter().all(|v| v.is_finite() && *v >= 0.0));
        assert!((h.max_normalized().values.iter().copied().fold(0.0, f64::max) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn phase_distance_wraps_the_spinor_phase() {
        assert!(phase_distance((0.2, 2.0 * PI - 0.1), (0.2, -2.0 * PI + 0.1)) < 0.2 / (4.0 * PI) + 1e-15);
        assert!((phase_distance((0.0, 0.0), (0.3, 4.0 * PI)) - 0.3).abs() < 1e-15);
        assert!((phase_distance((0.0, 0.0), (0.0, 2.0 * PI)) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn coherent_state_mass_sits_at_its_center() {
        let b = Arc::new(FockBasis::new(40).unwrap());
        let c = CanonicalCoords::new(0.5, 1.0, 0.0, 0.0).unwrap();
        let psi = crate::quantum::states::coherent_state(&canonical_to_zeta(&c), &b);
        let h = husimi_grid(&psi, &PhaseGrid::new(30, 60), 41).unwrap();
        let near = h.mass_fraction_within(0.5, 1.0, 0.2);
        let far = h.mass_fraction_within(0.5, 1.0 + 2.0 * PI, 0.2);
        assert!(near > 0.9 && far < 0.01, "{near} {far}");
        assert!(h.spread_about(0.5, 1.0) < h.spread_about(0.5, 1.0 + 2.0 * PI));
        assert_eq!(h.mass_fraction_within(0.5, 1.0, 10.0), 1.0);
    }
}
