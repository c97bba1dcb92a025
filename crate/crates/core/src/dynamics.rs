//! Mean-field equations of motion, their analytic Jacobian, and trajectory
//! integration with conservation monitoring.
//!
//! Everything is integrated in the 6-real layout
//! `[ζ₁ᴿ, ζ₁ᴵ, ζ₀ᴿ, ζ₀ᴵ, ζ₋₁ᴿ, ζ₋₁ᴵ]`; the right-hand side is polynomial and
//! has no coordinate singularities at empty modes.

use std::f64::consts::FRAC_1_SQRT_2;
use std::io::Write;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{mf_energy, zeta_to_canonical, ClassicalState, ModelParams};
use crate::ode::{Control, DenseSegment, Dop853, OdeSystem, StepControl};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegratorConfig {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_step: f64,
    /// Keep the per-step interpolants in the trajectory record.
    pub dense_output: bool,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self { rel_tol: 1e-12, abs_tol: 1e-14, max_step: f64::INFINITY, dense_output: false }
    }
}

impl IntegratorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rel_tol > 0.0 && self.abs_tol > 0.0 && self.max_step > 0.0) {
            return Err(Error::InvalidConfig("integrator tolerances must be positive".into()));
        }
        Ok(())
    }

    pub fn step_control(&self) -> StepControl {
        StepControl { rtol: self.rel_tol, atol: self.abs_tol, max_step: self.max_step }
    }
}

/// `ζ̇ = −i ∂H_mf/∂ζ*` for all three modes.
pub fn eom_rhs(z: &ClassicalState, p: &ModelParams) -> [Complex64; 3] {
    let [z1, z0, zm] = z.zeta;
    let (r1, r0, rm) = (z1.norm_sqr(), z0.norm_sqr(), zm.norm_sqr());
    let g = p.gn;
    let s = p.r * FRAC_1_SQRT_2;
    let mi = Complex64::new(0.0, -1.0);
    let d1 = p.q * z1 + g * ((r1 + r0 - rm) * z1 + zm.conj() * z0 * z0) + s * z0;
    let d0 = g * ((r1 + rm) * z0 + 2.0 * z0.conj() * z1 * zm) + s * (z1 + zm);
    let dm = p.q * zm + g * ((rm + r0 - r1) * zm + z1.conj() * z0 * z0) + s * z0;
    [mi * d1, mi * d0, mi * dm]
}

/// Real-layout version of [`eom_rhs`].
pub fn eom_rhs_real(y: &[f64], p: &ModelParams, dy: &mut [f64]) {
    let d = eom_rhs(&ClassicalState::from_real(y), p);
    for (k, c) in d.iter().enumerate() {
        dy[2 * k] = c.re;
        dy[2 * k + 1] = c.im;
    }
}

/// Analytic 6×6 Jacobian `∂ẏ/∂y` of the real-layout equations of motion.
pub fn jacobian(y: &[f64], p: &ModelParams) -> [[f64; 6]; 6] {
    let z = ClassicalState::from_real(y).zeta;
    let [z1, z0, zm] = z;
    let (r1, r0, rm) = (z1.norm_sqr(), z0.norm_sqr(), zm.norm_sqr());
    let g = p.gn;
    let s = Complex64::new(p.r * FRAC_1_SQRT_2, 0.0);
    let q = Complex64::new(p.q, 0.0);

    // Wirtinger derivatives of the bracketed right-hand sides (before × −i):
    // holo[i][j] = ∂(·)_i/∂ζ_j, anti[i][j] = ∂(·)_i/∂ζ_j*.
    let holo = [
        [q + g * (2.0 * r1 + r0 - rm), g * (z0.conj() * z1 + 2.0 * zm.conj() * z0) + s, -g * zm.conj() * z1],
        [g * (z1.conj() * z0 + 2.0 * z0.conj() * zm) + s, Complex64::new(g * (r1 + rm), 0.0), g * (zm.conj() * z0 + 2.0 * z0.conj() * z1) + s],
        [-g * z1.conj() * zm, g * (z0.conj() * zm + 2.0 * z1.conj() * z0) + s, q + g * (2.0 * rm + r0 - r1)],
    ];
    let anti = [
        [g * z1 * z1, g * z0 * z1, g * (z0 * z0 - zm * z1)],
        [g * z1 * z0, 2.0 * g * z1 * zm, g * zm * z0],
        [g * (z0 * z0 - z1 * zm), g * z0 * zm, g * zm * zm],
    ];
    let mi = Complex64::new(0.0, -1.0);
    let mut jac = [[0.0; 6]; 6];
    for i in 0..3 {
        for j in 0..3 {
            let a = mi * holo[i][j];
            let b = mi * anti[i][j];
            // ∂/∂x_j = ∂ + ∂̄ ; ∂/∂y_j = i(∂ − ∂̄)
            let dx = a + b;
            let dy = Complex64::i() * (a - b);
            jac[2 * i][2 * j] = dx.re;
            jac[2 * i + 1][2 * j] = dx.im;
            jac[2 * i][2 * j + 1] = dy.re;
            jac[2 * i + 1][2 * j + 1] = dy.im;
        }
    }
    jac
}

/// Phase-space point with its fundamental matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VariationalState {
    pub y: [f64; 6],
    pub phi: [[f64; 6]; 6],
}

impl VariationalState {
    pub fn new(z: &ClassicalState) -> Self {
        let mut phi = [[0.0; 6]; 6];
        for (i, row) in phi.iter_mut().enumerate() {
            row[i] = 1.0;
        }
        Self { y: z.to_real(), phi }
    }

    /// Flat layout `[y (6), Φ row-major (36)]`.
    pub fn to_flat(&self) -> [f64; 42] {
        let mut out = [0.0; 42];
        out[..6].copy_from_slice(&self.y);
        for i in 0..6 {
            out[6 + 6 * i..12 + 6 * i].copy_from_slice(&self.phi[i]);
        }
        out
    }

    pub fn from_flat(v: &[f64]) -> Self {
        let mut y = [0.0; 6];
        y.copy_from_slice(&v[..6]);
        let mut phi = [[0.0; 6]; 6];
        for i in 0..6 {
            phi[i].copy_from_slice(&v[6 + 6 * i..12 + 6 * i]);
        }
        Self { y, phi }
    }

    pub fn is_finite(&self) -> bool {
        self.y.iter().chain(self.phi.iter().flatten()).all(|v| v.is_finite())
    }
}

/// `(F(ζ), D_ζF(ζ)·Φ)`.
pub fn variational_rhs(v: &VariationalState, p: &ModelParams) -> VariationalState {
    let mut dy = [0.0; 6];
    eom_rhs_real(&v.y, p, &mut dy);
    let jac = jacobian(&v.y, p);
    let mut dphi = [[0.0; 6]; 6];
    for i in 0..6 {
        for k in 0..6 {
            let jik = jac[i][k];
            if jik != 0.0 {
                for j in 0..6 {
                    dphi[i][j] += jik * v.phi[k][j];
                }
            }
        }
    }
    VariationalState { y: dy, phi: dphi }
}

/// Mean-field flow as an ODE system.
pub struct MeanField {
    pub params: ModelParams,
}

impl OdeSystem for MeanField {
    fn dim(&self) -> usize {
        6
    }
    fn rhs(&self, _t: f64, y: &[f64], dy: &mut [f64]) {
        eom_rhs_real(y, &self.params, dy);
    }
}

/// Two copies of the mean-field flow integrated on the same steps.
pub struct TwinMeanField {
    pub params: ModelParams,
}

impl OdeSystem for TwinMeanField {
    fn dim(&self) -> usize {
        12
    }
    fn rhs(&self, _t: f64, y: &[f64], dy: &mut [f64]) {
        let (a, b) = dy.split_at_mut(6);
        eom_rhs_real(&y[..6], &self.params, a);
        eom_rhs_real(&y[6..], &self.params, b);
    }
}

/// Mean-field flow plus the full 6×6 variational equations.
pub struct Variational {
    pub params: ModelParams,
}

impl OdeSystem for Variational {
    fn dim(&self) -> usize {
        42
    }
    fn rhs(&self, _t: f64, y: &[f64], dy: &mut [f64]) {
        let d = variational_rhs(&VariationalState::from_flat(y), &self.params);
        dy.copy_from_slice(&d.to_flat());
    }
}

#[derive(Debug, Clone)]
pub struct TrajectoryRecord {
    pub times: Vec<f64>,
    pub states: Vec<ClassicalState>,
    /// `max |E(t) − E(0)| / max(|E(0)|, 1)` over recorded points.
    pub energy_drift: f64,
    /// `max |‖ζ‖² − 1|` over recorded points.
    pub norm_drift: f64,
    /// Per-step interpolants, present when requested in the config.
    pub dense: Option<Vec<DenseSegment>>,
}

impl TrajectoryRecord {
    fn from_samples(times: Vec<f64>, states: Vec<ClassicalState>, p: &ModelParams, dense: Option<Vec<DenseSegment>>) -> Self {
        let e0 = mf_energy(&states[0], p);
        let scale = e0.abs().max(1.0);
        let energy_drift = states.iter().map(|s| (mf_energy(s, p) - e0).abs() / scale).fold(0.0, f64::max);
        let norm_drift = states.iter().map(|s| (s.norm_sqr() - 1.0).abs()).fold(0.0, f64::max);
        Self { times, states, energy_drift, norm_drift, dense }
    }

    pub fn last(&self) -> &ClassicalState {
        self.states.last().expect("trajectory has at least one point")
    }

    /// State at an arbitrary time, from the stored interpolants.
    pub fn interpolate(&self, t: f64) -> Option<ClassicalState> {
        let segs = self.dense.as_ref()?;
        let idx = segs.partition_point(|s| s.t < t).min(segs.len().checked_sub(1)?);
        let seg = &segs[idx];
        if t < seg.t_old.min(seg.t) - 1e-12 || t > seg.t.max(seg.t_old) + 1e-12 {
            return None;
        }
        Some(ClassicalState::from_real(&seg.eval_vec(t)))
    }

    pub fn magnetization_drift(&self) -> f64 {
        let m0 = self.states[0].magnetization();
        self.states.iter().map(|s| (s.magnetization() - m0).abs()).fold(0.0, f64::max)
    }

    /// CSV dump: `t, Re/Im ζᵢ, ρ₀, Θ_s, m, Θ_m, E`.
    pub fn write_csv<W: Write>(&self, mut w: W, p: &ModelParams) -> Result<()> {
        writeln!(w, "t,re_z1,im_z1,re_z0,im_z0,re_zm1,im_zm1,rho0,theta_s,m,theta_m,energy")?;
        for (t, s) in self.times.iter().zip(&self.states) {
            let c = zeta_to_canonical(s).coords;
            let y = s.to_real();
            writeln!(
                w,
                "{t},{},{},{},{},{},{},{},{},{},{},{}",
                y[0], y[1], y[2], y[3], y[4], y[5], c.rho0, c.theta_s, c.m, c.theta_m,
                mf_energy(s, p)
            )?;
        }
        Ok(())
    }
}

/// Integrates the mean-field equations from `t = 0` to `t_end`, recording
/// every accepted step.
pub fn integrate(z0: &ClassicalState, t_end: f64, cfg: &IntegratorConfig, p: &ModelParams) -> Result<TrajectoryRecord> {
    cfg.validate()?;
    let sys = MeanField { params: *p };
    let mut ode = Dop853::new(&sys, 0.0, &z0.to_real(), cfg.step_control());
    let mut times = vec![0.0];
    let mut states = vec![*z0];
    let mut dense = cfg.dense_output.then(Vec::new);
    ode.run(t_end, |s| {
        times.push(s.t());
        states.push(ClassicalState::from_real(s.y()));
        if let Some(d) = dense.as_mut() {
            d.push(s.dense());
        }
        Control::Continue
    })?;
    Ok(TrajectoryRecord::from_samples(times, states, p, dense))
}

/// Integrates and samples the trajectory at the requested (sorted) times.
pub fn integrate_at(z0: &ClassicalState, times: &[f64], cfg: &IntegratorConfig, p: &ModelParams) -> Result<TrajectoryRecord> {
    cfg.validate()?;
    let sys = MeanField { params: *p };
    let states = sample_system(&sys, &z0.to_real(), times, cfg)?.iter().map(|y| ClassicalState::from_real(y)).collect();
    Ok(TrajectoryRecord::from_samples(times.to_vec(), states, p, None))
}

/// States of an arbitrary system at sorted, non-negative `times`, starting from `y0` at `t = 0`.
pub fn sample_system<S: OdeSystem + ?Sized>(sys: &S, y0: &[f64], times: &[f64], cfg: &IntegratorConfig) -> Result<Vec<Vec<f64>>> {
    if times.windows(2).any(|w| w[1] < w[0]) || times.first().is_some_and(|t| *t < 0.0) {
        return Err(Error::InvalidConfig("sample times must be sorted and non-negative".into()));
    }
    let Some(&t_end) = times.last() else {
        return Err(Error::InvalidConfig("no sample times".into()));
    };
    let mut out = Vec::with_capacity(times.len());
    let mut next = 0;
    while next < times.len() && times[next] == 0.0 {
        out.push(y0.to_vec());
        next += 1;
    }
    if next < times.len() {
        let mut ode = Dop853::new(sys, 0.0, y0, cfg.step_control());
        ode.run(t_end, |s| {
            let t = s.t();
            if next < times.len() && times[next] <= t {
                let seg = s.dense();
                while next < times.len() && times[next] <= t {
                    out.push(seg.eval_vec(times[next]));
                    next += 1;
                }
            }
            Control::Continue
        })?;
    }
    Ok(out)
}

/// Final state after evolving for `t` (negative `t` integrates backwards).
pub fn propagate(z0: &ClassicalState, t: f64, cfg: &IntegratorConfig, p: &ModelParams) -> Result<ClassicalState> {
    cfg.validate()?;
    let sys = MeanField { params: *p };
    let mut ode = Dop853::new(&sys, 0.0, &z0.to_real(), cfg.step_control());
    ode.run(t, |_| Control::Continue)?;
    Ok(ClassicalState::from_real(ode.y()))
}
