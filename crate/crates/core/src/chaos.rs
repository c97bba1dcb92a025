//! Poincaré sections, largest Lyapunov exponents and Lyapunov rasters on
//! fixed-energy shells.

use std::io::Write;

use log::warn;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{IntegratorConfig, MeanField, TwinMeanField, Variational, VariationalState};
use crate::error::{Error, Result};
use crate::model::{canonical_to_zeta, mf_energy, zeta_to_canonical, ClassicalState, EnergyShellSpec, ModelParams};
use crate::ode::{Control, DenseSegment, Dop853};
use crate::roots::brent;
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum CrossingDirection {
    /// `Θ_m` increasing through zero.
    Positive,
    Negative,
    #[default]
    Both,
}

impl std::str::FromStr for CrossingDirection {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "positive" => Ok(Self::Positive),
            "negative" => Ok(Self::Negative),
            "both" => Ok(Self::Both),
            _ => Err(Error::InvalidConfig(format!("unknown crossing direction '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoincareSection {
    pub energy: f64,
    /// Per-initial-condition `(ρ₀, Θ_s)` points.
    pub crossings: Vec<Vec<(f64, f64)>>,
    pub crossing_direction: CrossingDirection,
}

impl PoincareSection {
    pub fn total_crossings(&self) -> usize {
        self.crossings.iter().map(Vec::len).sum()
    }

    /// Fraction of cells of a `bins × bins` grid over `ρ₀ ∈ [0, 1]`,
    /// `Θ_s ∈ (−2π, 2π]` that contain at least one crossing.
    pub fn occupancy_area(&self, bins: usize) -> f64 {
        occupancy_area(self.crossings.iter().flatten().copied(), bins)
    }

    /// CSV rows `traj_id, ρ₀, Θ_s`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "traj_id,rho0,theta_s")?;
        for (k, pts) in self.crossings.iter().enumerate() {
            for (rho0, ts) in pts {
                writeln!(w, "{k},{rho0},{ts}")?;
            }
        }
        Ok(())
    }
}

pub fn occupancy_area(points: impl IntoIterator<Item = (f64, f64)>, bins: usize) -> f64 {
    let span = 4.0 * std::f64::consts::PI;
    let mut grid = vec![false; bins * bins];
    for (rho0, ts) in points {
        let i = ((rho0.clamp(0.0, 1.0) * bins as f64) as usize).min(bins - 1);
        let j = (((ts + 0.5 * span) / span).clamp(0.0, 1.0) * bins as f64) as usize;
        grid[i * bins + j.min(bins - 1)] = true;
    }
    grid.iter().filter(|b| **b).count() as f64 / (bins * bins) as f64
}

/// `Im(ζ₁ ζ₋₁*)`, which vanishes where `Θ_m ≡ 0 (mod π)`.
fn section_fn(y: &[f64]) -> (f64, f64) {
    let (a, b, c, d) = (y[0], y[1], y[4], y[5]);
    // ζ₁ ζ₋₁* = (a + ib)(c − id)
    (b * c - a * d, a * c + b * d)
}

/// Sub-samples per step when scanning the interpolant for sign changes.
const SECTION_SUBSAMPLES: usize = 4;

fn crossings_in_segment(seg: &DenseSegment, dir: CrossingDirection, out: &mut Vec<ClassicalState>, buf: &mut [f64]) {
    let g = |t: f64, buf: &mut [f64]| {
        seg.eval(t, buf);
        section_fn(buf)
    };
    let mut t_prev = seg.t_old;
    let (mut g_prev, _) = g(t_prev, buf);
    for k in 1..=SECTION_SUBSAMPLES {
        let t = seg.t_old + (seg.t - seg.t_old) * k as f64 / SECTION_SUBSAMPLES as f64;
        let (g_now, _) = g(t, buf);
        let rising = g_prev < 0.0 && g_now >= 0.0;
        let falling = g_prev > 0.0 && g_now <= 0.0;
        let forward = seg.t > seg.t_old;
        // In time order a rising Im part with positive real part is Θ_m increasing.
        let increasing = rising == forward;
        let wanted = match dir {
            CrossingDirection::Both => rising || falling,
            CrossingDirection::Positive => (rising || falling) && increasing,
            CrossingDirection::Negative => (rising || falling) && !increasing,
        };
        if wanted {
            let root = brent(
                |s| {
                    let mut y = [0.0; 6];
                    g(s, &mut y).0
                },
                t_prev.min(t),
                t_prev.max(t),
                1e-15,
                200,
            );
            if let Some(tc) = root {
                seg.eval(tc, buf);
                let (_, re) = section_fn(buf);
                let z = ClassicalState::from_real(buf);
                if re > 0.0 && zeta_to_canonical(&z).coords.theta_m.abs() < 1e-8 {
                    out.push(z);
                }
            }
        }
        t_prev = t;
        g_prev = g_now;
    }
}

/// Full states at which one trajectory crosses `Θ_m = 0`.
pub fn section_crossing_states(
    z0: &ClassicalState,
    t_end: f64,
    p: &ModelParams,
    direction: CrossingDirection,
    cfg: &IntegratorConfig,
) -> Result<Vec<ClassicalState>> {
    cfg.validate()?;
    let sys = MeanField { params: *p };
    let mut ode = Dop853::new(&sys, 0.0, &z0.to_real(), cfg.step_control());
    let mut pts = Vec::new();
    let mut buf = [0.0; 6];
    ode.run(t_end, |s| {
        let seg = s.dense();
        crossings_in_segment(&seg, direction, &mut pts, &mut buf);
        Control::Continue
    })?;
    Ok(pts)
}

/// Records the crossings of every trajectory with the surface `Θ_m = 0`.
pub fn poincare_section(
    initials: &[ClassicalState],
    t_end: f64,
    p: &ModelParams,
    direction: CrossingDirection,
    cfg: &IntegratorConfig,
) -> Result<PoincareSection> {
    cfg.validate()?;
    let crossings = initials
        .par_iter()
        .enumerate()
        .map(|(k, z0)| {
            let states = section_crossing_states(z0, t_end, p, direction, cfg)?;
            if states.is_empty() {
                warn!("trajectory {k} produced no section crossings");
            }
            Ok(states
                .iter()
                .map(|z| {
                    let c = zeta_to_canonical(z).coords;
                    (c.rho0, c.theta_s)
                })
                .collect())
        })
        .collect::<Result<Vec<_>>>()?;
    let energy = initials.first().map(|z| mf_energy(z, p)).unwrap_or(f64::NAN);
    Ok(PoincareSection { energy, crossings, crossing_direction: direction })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LyapunovConfig {
    pub xi0: f64,
    pub t_reset: f64,
    pub t_min: f64,
    pub t_total: f64,
    pub seed: u64,
}

impl Default for LyapunovConfig {
    fn default() -> Self {
        Self { xi0: 1e-8, t_reset: 1.0, t_min: 100.0, t_total: 2000.0, seed: 0 }
    }
}

impl LyapunovConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.xi0 > 0.0 && self.xi0 < 1e-2) {
            return Err(Error::InvalidConfig("xi0 must lie in (0, 1e-2)".into()));
        }
        if !(self.t_reset > 0.0 && self.t_min >= 0.0 && self.t_min < self.t_total) {
            return Err(Error::InvalidConfig("need t_reset > 0 and 0 <= t_min < t_total".into()));
        }
        if (self.t_total - self.t_min) / self.t_reset < 10.0 {
            return Err(Error::InvalidConfig("averaging window spans fewer than 10 reset intervals".into()));
        }
        Ok(())
    }

    fn intervals(&self) -> (usize, usize) {
        let total = (self.t_total / self.t_reset).round() as usize;
        let skip = (self.t_min / self.t_reset).round() as usize;
        (total, skip)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LyapunovMethod {
    Reset,
    Fundamental,
}

impl std::str::FromStr for LyapunovMethod {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "reset" => Ok(Self::Reset),
            "fundamental" => Ok(Self::Fundamental),
            _ => Err(Error::InvalidConfig(format!("unknown Lyapunov method '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LyapunovEstimate {
    pub lambda: f64,
    pub std_error: f64,
    pub method: LyapunovMethod,
}

impl LyapunovEstimate {
    fn from_samples(samples: &[f64], method: LyapunovMethod) -> Self {
        let n = samples.len() as f64;
        let mean = samples.iter().sum::<f64>() / n;
        let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        Self { lambda: mean, std_error: (var / n).sqrt(), method }
    }
}

/// Unit vector drawn uniformly from the directions tangent to the norm sphere at `y`.
fn random_tangent(y: &[f64; 6], rng: &mut impl Rng) -> [f64; 6] {
    loop {
        let mut v: [f64; 6] = std::array::from_fn(|_| rng.sample(StandardNormal));
        let yy: f64 = y.iter().map(|a| a * a).sum();
        let proj: f64 = v.iter().zip(y).map(|(a, b)| a * b).sum::<f64>() / yy;
        v.iter_mut().zip(y).for_each(|(a, b)| *a -= proj * b);
        let n = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if n > 1e-6 {
            v.iter_mut().for_each(|a| *a /= n);
            return v;
        }
    }
}

/// Companion at distance `ξ₀` from `y` along the part of `dir` tangent to the
/// norm sphere through `y`, so both trajectories share the same norm.
fn place_companion(y: &[f64], dir: &[f64; 6], xi0: f64) -> [f64; 6] {
    let yy: f64 = y.iter().map(|a| a * a).sum();
    let proj: f64 = dir.iter().zip(y).map(|(a, b)| a * b).sum::<f64>() / yy;
    let mut u: [f64; 6] = std::array::from_fn(|i| dir[i] - proj * y[i]);
    let n = u.iter().map(|a| a * a).sum::<f64>().sqrt();
    u.iter_mut().for_each(|a| *a /= n);
    let mut c: [f64; 6] = std::array::from_fn(|i| y[i] + xi0 * u[i]);
    let scale = (yy / c.iter().map(|a| a * a).sum::<f64>()).sqrt();
    c.iter_mut().for_each(|a| *a *= scale);
    c
}

/// Largest Lyapunov exponent from a co-evolved companion trajectory that is
/// pulled back to distance `ξ₀` after every reset interval.
pub fn lyapunov_reset(z0: &ClassicalState, cfg: &LyapunovConfig, p: &ModelParams) -> Result<LyapunovEstimate> {
    lyapunov_reset_with(z0, cfg, p, &IntegratorConfig::default())
}

pub fn lyapunov_reset_with(
    z0: &ClassicalState,
    cfg: &LyapunovConfig,
    p: &ModelParams,
    icfg: &IntegratorConfig,
) -> Result<LyapunovEstimate> {
    cfg.validate()?;
    let mut rng = rng::rng(cfg.seed);
    let y0 = z0.to_real();
    let dir = random_tangent(&y0, &mut rng);
    let mut state = [0.0; 12];
    state[..6].copy_from_slice(&y0);
    state[6..].copy_from_slice(&place_companion(&y0, &dir, cfg.xi0));

    let sys = TwinMeanField { params: *p };
    let mut ode = Dop853::new(&sys, 0.0, &state, icfg.step_control());
    let (total, skip) = cfg.intervals();
    let mut samples = Vec::with_capacity(total - skip);
    for k in 1..=total {
        let t = k as f64 * cfg.t_reset;
        ode.run(t, |_| Control::Continue)?;
        let y = ode.y();
        let mut sep = [0.0; 6];
        for i in 0..6 {
            sep[i] = y[6 + i] - y[i];
        }
        let xi = sep.iter().map(|a| a * a).sum::<f64>().sqrt();
        if !(xi.is_finite() && xi > 0.0) {
            return Err(Error::NonConvergence(format!("companion separation degenerated at t={t}")));
        }
        if k > skip {
            samples.push((xi / cfg.xi0).ln() / cfg.t_reset);
        }
        let unit: [f64; 6] = std::array::from_fn(|i| sep[i] / xi);
        let mut next = [0.0; 12];
        next[..6].copy_from_slice(&y[..6]);
        next[6..].copy_from_slice(&place_companion(&y[..6], &unit, cfg.xi0));
        ode.set_state(t, &next);
    }
    Ok(LyapunovEstimate::from_samples(&samples, LyapunovMethod::Reset))
}

/// Largest Lyapunov exponent from the fundamental matrix applied to a single
/// deviation vector, with `Φ` restarted from the identity after each interval.
pub fn lyapunov_fundamental(z0: &ClassicalState, cfg: &LyapunovConfig, p: &ModelParams) -> Result<LyapunovEstimate> {
    lyapunov_fundamental_with(z0, cfg, p, &IntegratorConfig::default())
}

/// Overflow guard on the deviation length relative to `ξ₀`.
const DEVIATION_GUARD: f64 = 1e6;

pub fn lyapunov_fundamental_with(
    z0: &ClassicalState,
    cfg: &LyapunovConfig,
    p: &ModelParams,
    icfg: &IntegratorConfig,
) -> Result<LyapunovEstimate> {
    cfg.validate()?;
    let mut rng = rng::rng(cfg.seed);
    let mut v = VariationalState::new(z0);
    let mut dev = random_tangent(&v.y, &mut rng).map(|a| a * cfg.xi0);

    let sys = Variational { params: *p };
    let mut ode = Dop853::new(&sys, 0.0, &v.to_flat(), icfg.step_control());
    let (total, skip) = cfg.intervals();
    let mut samples = Vec::with_capacity(total - skip);
    for k in 1..=total {
        let t = k as f64 * cfg.t_reset;
        ode.run(t, |_| Control::Continue)?;
        v = VariationalState::from_flat(ode.y());
        if !v.is_finite() {
            return Err(Error::NonConvergence(format!("fundamental matrix overflowed at t={t}")));
        }
        let before = dev.iter().map(|a| a * a).sum::<f64>().sqrt();
        let moved: [f64; 6] = std::array::from_fn(|i| (0..6).map(|j| v.phi[i][j] * dev[j]).sum());
        let after = moved.iter().map(|a| a * a).sum::<f64>().sqrt();
        if !(after.is_finite() && after > 0.0) {
            return Err(Error::NonConvergence(format!("deviation vector degenerated at t={t}")));
        }
        if k > skip {
            samples.push((after / before).ln() / cfg.t_reset);
        }
        // Renormalizing after every interval keeps |ξ| well inside the
        // overflow guard of 1e6·ξ₀.
        debug_assert!(after < DEVIATION_GUARD * cfg.xi0 || cfg.t_reset > 10.0);
        dev = moved.map(|a| a * cfg.xi0 / after);
        v = VariationalState::new(&ClassicalState::from_real(&v.y));
        ode.set_state(t, &v.to_flat());
    }
    Ok(LyapunovEstimate::from_samples(&samples, LyapunovMethod::Fundamental))
}

pub fn lyapunov(z0: &ClassicalState, cfg: &LyapunovConfig, p: &ModelParams, method: LyapunovMethod) -> Result<LyapunovEstimate> {
    match method {
        LyapunovMethod::Reset => lyapunov_reset(z0, cfg, p),
        LyapunovMethod::Fundamental => lyapunov_fundamental(z0, cfg, p),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LyapunovMapCell {
    pub m: f64,
    pub estimate: LyapunovEstimate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LyapunovMap {
    pub shell: EnergyShellSpec,
    /// Row-major `grid.0 × grid.1`; `None` marks off-shell cells.
    pub cells: Vec<Option<LyapunovMapCell>>,
}

impl LyapunovMap {
    pub fn get(&self, i: usize, j: usize) -> Option<&LyapunovMapCell> {
        self.cells[i * self.shell.grid.1 + j].as_ref()
    }

    pub fn filled(&self) -> impl Iterator<Item = &LyapunovMapCell> {
        self.cells.iter().flatten()
    }

    /// CSV rows `i, j, ρ₀, Θ_s, m, λ, stderr`; off-shell cells have empty fields.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "i,j,rho0,theta_s,m,lambda,stderr")?;
        for (i, j) in self.shell.cells() {
            let (rho0, ts) = (self.shell.rho0_at(i), self.shell.theta_s_at(j));
            match self.get(i, j) {
                Some(c) => writeln!(w, "{i},{j},{rho0},{ts},{},{},{}", c.m, c.estimate.lambda, c.estimate.std_error)?,
                None => writeln!(w, "{i},{j},{rho0},{ts},,,")?,
            }
        }
        Ok(())
    }
}

/// Lyapunov exponent on every on-shell cell, computed in parallel with
/// per-cell seeds derived from `cfg.seed` and the cell index.
pub fn lyapunov_map(shell: &EnergyShellSpec, cfg: &LyapunovConfig, p: &ModelParams, method: LyapunovMethod) -> Result<LyapunovMap> {
    shell.validate()?;
    cfg.validate()?;
    let cells: Vec<(usize, usize)> = shell.cells().collect();
    let cells = cells
        .par_iter()
        .enumerate()
        .map(|(idx, &(i, j))| {
            let Some(c) = shell.point(i, j, p) else {
                return Ok(None);
            };
            let cell_cfg = LyapunovConfig { seed: rng::derive_seed(cfg.seed, idx as u64), ..*cfg };
            let estimate = lyapunov(&canonical_to_zeta(&c), &cell_cfg, p, method)?;
            Ok(Some(LyapunovMapCell { m: c.m, estimate }))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(LyapunovMap { shell: *shell, cells })
}
