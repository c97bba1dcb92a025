//! Truncated Wigner approximation.
//!
//! Coherent states are represented by Gaussian clouds of classical amplitudes.
//! Each member is propagated with the mean-field flow, and quantum expectation
//! values follow from Weyl-symbol averages over the cloud. The squared
//! commutator of `ρ̂₀` is estimated from the Poisson bracket
//! `ħ_eff² ⟨|2ζ₀ᴿ(0) ∂ρ₀(t)/∂ζ₀ᴵ|²⟩_W`.

use std::io::Write;
use std::str::FromStr;

use num_complex::Complex64;
use rand::Rng as _;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{sample_system, IntegratorConfig, MeanField, TwinMeanField, Variational, VariationalState};
use crate::error::{Error, Result};
use crate::model::{mf_energy, ClassicalState, ModelParams};
use crate::quantum::{Operator, OtocSeries};
use crate::rng::{derive_seed, stream};

pub const DEFAULT_SAMPLES: usize = 1000;
pub const DEFAULT_D0: f64 = 1e-6;
pub const DEFAULT_BOOTSTRAP: usize = 200;
const D0_RANGE: (f64, f64) = (1e-10, 1e-3);
const BOOTSTRAP_STREAM: u64 = 0xB007_5743;

/// How `∂ρ₀(t)/∂ζ₀ᴵ(0)` is obtained for each ensemble member.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum DerivativeMethod {
    TwoTrajectory {
        d0: f64,
    },
    #[default]
    FundamentalMatrix,
}

impl FromStr for DerivativeMethod {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "fundamental" | "fundamental-matrix" => Ok(Self::FundamentalMatrix),
            "two-trajectory" | "twin" => Ok(Self::TwoTrajectory { d0: DEFAULT_D0 }),
            other => Err(Error::InvalidConfig(format!("unknown derivative method `{other}`"))),
        }
    }
}

impl DerivativeMethod {
    pub fn d0(&self) -> Option<f64> {
        match self {
            Self::TwoTrajectory { d0 } => Some(*d0),
            Self::FundamentalMatrix => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwaConfig {
    pub n_samples: usize,
    /// Effective Planck constant; `None` means `1/N`.
    pub hbar_eff: Option<f64>,
    pub seed: u64,
    pub derivative: DerivativeMethod,
    pub integrator: IntegratorConfig,
    /// Resamples used for the bootstrap error bars.
    pub bootstrap_resamples: usize,
    /// For the two-trajectory method, `C(t)` is recomputed with `d₀/2` up to this time
    /// and a warning is raised when the two differ by more than 1%.
    pub d0_check_horizon: Option<f64>,
}

impl Default for TwaConfig {
    fn default() -> Self {
        Self {
            n_samples: DEFAULT_SAMPLES,
            hbar_eff: None,
            seed: 0,
            derivative: DerivativeMethod::default(),
            integrator: IntegratorConfig::default(),
            bootstrap_resamples: DEFAULT_BOOTSTRAP,
            d0_check_horizon: Some(2.5),
        }
    }
}

impl TwaConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_samples < 2 {
            return Err(Error::InvalidConfig("at least two Wigner samples are required".into()));
        }
        if let Some(h) = self.hbar_eff {
            if !(h.is_finite() && h > 0.0) {
                return Err(Error::InvalidConfig("hbar_eff must be positive".into()));
            }
        }
        if let Some(d0) = self.derivative.d0() {
            if !(d0 > D0_RANGE.0 && d0 < D0_RANGE.1) {
                return Err(Error::InvalidConfig(format!("d0 = {d0:e} outside ({:e}, {:e})", D0_RANGE.0, D0_RANGE.1)));
            }
        }
        self.integrator.validate()
    }

    pub fn hbar(&self, n_atoms: usize) -> f64 {
        self.hbar_eff.unwrap_or(1.0 / n_atoms as f64)
    }
}

/// One member of a Wigner ensemble.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WignerSample {
    pub zeta: [Complex64; 3],
}

impl WignerSample {
    pub fn state(&self) -> ClassicalState {
        ClassicalState::from_raw(self.zeta)
    }
}

/// Weyl symbol of the total atom number for three modes carrying half a quantum each.
fn weyl_scale(n_atoms: usize) -> f64 {
    n_atoms as f64 + 1.5
}

/// 2×2 unitary `[[v̄, u], [−ū, v]]`, whose second column is `(u, v)`.
fn givens(u: Complex64, v: Complex64) -> [[Complex64; 2]; 2] {
    [[v.conj(), u], [-u.conj(), v]]
}

/// Unitary `U` with `U·(0, 1, 0)ᵀ = center`, composed of a rotation in the
/// `(−1, 0)` plane followed by one in the `(1, 0)` plane.
pub fn rotation_to(center: &ClassicalState) -> [[Complex64; 3]; 3] {
    let [c1, c0, cm] = center.zeta;
    let alpha = (1.0 - cm.norm_sqr()).max(0.0).sqrt();
    let one = Complex64::new(1.0, 0.0);
    let zero = Complex64::new(0.0, 0.0);
    let b = givens(cm, Complex64::new(alpha, 0.0));
    // Acts on (ζ₋₁, ζ₀) and leaves ζ₁ alone.
    let gb = [[one, zero, zero], [zero, b[1][1], b[1][0]], [zero, b[0][1], b[0][0]]];
    let (u, v) = if alpha > 1e-300 { (c1 / alpha, c0 / alpha) } else { (zero, one) };
    let a = givens(u, v);
    let ga = [[a[0][0], a[0][1], zero], [a[1][0], a[1][1], zero], [zero, zero, one]];
    let mut out = [[zero; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = (0..3).map(|k| ga[i][k] * gb[k][j]).sum();
        }
    }
    out
}

fn apply(u: &[[Complex64; 3]; 3], z: &[Complex64; 3]) -> [Complex64; 3] {
    [0, 1, 2].map(|i| (0..3).map(|k| u[i][k] * z[k]).sum())
}

fn check_center(center: &ClassicalState, n_atoms: usize) -> Result<()> {
    if n_atoms == 0 {
        return Err(Error::Domain("atom number must be positive".into()));
    }
    if (center.norm_sqr() - 1.0).abs() > 1e-10 {
        return Err(Error::Domain(format!("center is not normalized (|ζ|² = {})", center.norm_sqr())));
    }
    Ok(())
}

/// Gaussian Wigner ensemble of the coherent state centred at `center`.
pub fn sample_wigner(center: &ClassicalState, n_atoms: usize, cfg: &TwaConfig) -> Result<Vec<WignerSample>> {
    cfg.validate()?;
    check_center(center, n_atoms)?;
    let u = rotation_to(center);
    let sigma = 1.0 / (n_atoms as f64).sqrt();
    Ok((0..cfg.n_samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream(cfg.seed, i as u64);
            let mut draw = || Complex64::new(rng.sample::<f64, _>(StandardNormal), rng.sample::<f64, _>(StandardNormal)) * (0.5 * sigma);
            loop {
                let (a, b) = (draw(), draw());
                let side = a.norm_sqr() + b.norm_sqr();
                if side < 1.0 {
                    let local = [a, Complex64::new((1.0 - side).sqrt(), 0.0), b];
                    return WignerSample { zeta: apply(&u, &local) };
                }
            }
        })
        .collect())
}

/// Mean and spread of an observable over a TWA ensemble.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwaObservable {
    pub label: String,
    pub times: Vec<f64>,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    /// Bootstrap standard error of `mean`.
    pub mean_err: Vec<f64>,
}

impl TwaObservable {
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "t,mean,std,bootstrap_err")?;
        for i in 0..self.times.len() {
            writeln!(w, "{},{},{},{}", self.times[i], self.mean[i], self.std[i], self.mean_err[i])?;
        }
        Ok(())
    }
}

/// Per-time mean of `rows[sample][time]`.
fn column_means(rows: &[Vec<f64>]) -> Vec<f64> {
    let nt = rows.first().map_or(0, Vec::len);
    let mut acc = vec![0.0; nt];
    for r in rows {
        for (a, v) in acc.iter_mut().zip(r) {
            *a += v;
        }
    }
    let n = rows.len() as f64;
    acc.iter().map(|a| a / n).collect()
}

/// Bootstrap standard error of the per-time sample mean.
fn bootstrap_errors(rows: &[Vec<f64>], resamples: usize, seed: u64) -> Vec<f64> {
    let nt = rows.first().map_or(0, Vec::len);
    if resamples < 2 {
        return vec![f64::NAN; nt];
    }
    let n = rows.len();
    let means: Vec<Vec<f64>> = (0..resamples)
        .into_par_iter()
        .map(|b| {
            let mut rng = stream(derive_seed(seed, BOOTSTRAP_STREAM), b as u64);
            let mut acc = vec![0.0; nt];
            for _ in 0..n {
                let r = &rows[rng.random_range(0..n)];
                for (a, v) in acc.iter_mut().zip(r) {
                    *a += v;
                }
            }
            acc.iter().map(|a| a / n as f64).collect()
        })
        .collect();
    let centre = column_means(&means);
    (0..nt)
        .map(|t| {
            let ss: f64 = means.iter().map(|m| (m[t] - centre[t]).powi(2)).sum();
            (ss / (resamples - 1) as f64).sqrt()
        })
        .collect()
}

fn bilinear(m: &[[f64; 3]; 3], z: &ClassicalState) -> f64 {
    let mut acc = Complex64::new(0.0, 0.0);
    for i in 0..3 {
        for j in 0..3 {
            if m[i][j] != 0.0 {
                acc += z.zeta[i].conj() * m[i][j] * z.zeta[j];
            }
        }
    }
    acc.re
}

/// Ensemble mean and standard deviation of a population or spin observable.
pub fn twa_observable(center: &ClassicalState, n_atoms: usize, label: &str, times: &[f64], cfg: &TwaConfig, p: &ModelParams) -> Result<TwaObservable> {
    let op = Operator::parse(label)?;
    let samples = sample_wigner(center, n_atoms, cfg)?;
    let m = op.mode_matrix();
    let tr: f64 = (0..3).map(|i| m[i][i]).sum();
    let tr2: f64 = (0..3).flat_map(|i| (0..3).map(move |j| (i, j))).map(|(i, j)| m[i][j] * m[j][i]).sum();
    let scale = weyl_scale(n_atoms);
    let sys = MeanField { params: *p };
    let rows: Vec<Vec<f64>> = samples
        .par_iter()
        .map(|s| {
            let ys = sample_system(&sys, &s.state().to_real(), times, &cfg.integrator)?;
            Ok(ys.iter().map(|y| scale * bilinear(&m, &ClassicalState::from_real(y))).collect())
        })
        .collect::<Result<_>>()?;
    let first = column_means(&rows);
    let n = rows.len() as f64;
    let unit = if op.normalized { 1.0 / n_atoms as f64 } else { 1.0 };
    let mean: Vec<f64> = first.iter().map(|a| (a - 0.5 * tr) * unit).collect();
    let std: Vec<f64> = (0..times.len())
        .map(|t| {
            let var: f64 = rows.iter().map(|r| (r[t] - first[t]).powi(2)).sum::<f64>() / (n - 1.0);
            (var - 0.25 * tr2).max(0.0).sqrt() * unit
        })
        .collect();
    let mean_err = bootstrap_errors(&rows, cfg.bootstrap_resamples, cfg.seed).iter().map(|e| e * unit).collect();
    Ok(TwaObservable { label: op.to_string(), times: times.to_vec(), mean, std, mean_err })
}

/// Ensemble mean of the mean-field energy at each time.
pub fn twa_energy(center: &ClassicalState, n_atoms: usize, times: &[f64], cfg: &TwaConfig, p: &ModelParams) -> Result<Vec<f64>> {
    let samples = sample_wigner(center, n_atoms, cfg)?;
    let sys = MeanField { params: *p };
    let rows: Vec<Vec<f64>> = samples
        .par_iter()
        .map(|s| Ok(sample_system(&sys, &s.state().to_real(), times, &cfg.integrator)?.iter().map(|y| mf_energy(&ClassicalState::from_real(y), p)).collect()))
        .collect::<Result<_>>()?;
    Ok(column_means(&rows))
}

/// TWA estimate of `C(t)` for `V̂ = Ŵ = ρ̂₀`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwaOtoc {
    pub series: OtocSeries,
    pub method: DerivativeMethod,
    pub hbar_eff: f64,
    pub n_samples: usize,
    /// Set when halving `d₀` moved `C(t)` by more than 1% before the check horizon.
    pub d0_sensitive: bool,
}

fn rho0(y: &[f64]) -> f64 {
    y[2] * y[2] + y[3] * y[3]
}

/// `∂ρ₀(t)/∂ζ₀ᴵ(0)` at every requested time for one initial point.
fn rho0_derivative(z: &ClassicalState, times: &[f64], method: DerivativeMethod, cfg: &IntegratorConfig, p: &ModelParams) -> Result<Vec<f64>> {
    match method {
        DerivativeMethod::FundamentalMatrix => {
            let sys = Variational { params: *p };
            let ys = sample_system(&sys, &VariationalState::new(z).to_flat(), times, cfg)?;
            Ok(ys.iter().map(|v| 2.0 * (v[2] * v[6 + 6 * 2 + 3] + v[3] * v[6 + 6 * 3 + 3])).collect())
        }
        DerivativeMethod::TwoTrajectory { d0 } => {
            let y = z.to_real();
            let mut pair = [0.0; 12];
            pair[..6].copy_from_slice(&y);
            pair[6..].copy_from_slice(&y);
            pair[9] += d0;
            let sys = TwinMeanField { params: *p };
            let ys = sample_system(&sys, &pair, times, cfg)?;
            Ok(ys.iter().map(|v| (rho0(&v[6..]) - rho0(&v[..6])) / d0).collect())
        }
    }
}

fn otoc_rows(samples: &[WignerSample], times: &[f64], method: DerivativeMethod, hbar: f64, cfg: &TwaConfig, p: &ModelParams) -> Result<Vec<Vec<f64>>> {
    samples
        .par_iter()
        .map(|s| {
            let mut z = s.state().real_zeta0_gauge();
            z.zeta[1] = Complex64::new(z.zeta[1].norm(), 0.0);
            let pref = (hbar * 2.0 * z.zeta[1].re).powi(2);
            Ok(rho0_derivative(&z, times, method, &cfg.integrator, p)?.iter().map(|g| pref * g * g).collect())
        })
        .collect()
}

/// Semi-classical squared commutator of `ρ̂₀` from the Poisson bracket averaged over the Wigner cloud.
pub fn twa_otoc(center: &ClassicalState, n_atoms: usize, times: &[f64], cfg: &TwaConfig, p: &ModelParams) -> Result<TwaOtoc> {
    let samples = sample_wigner(center, n_atoms, cfg)?;
    let hbar = cfg.hbar(n_atoms);
    let rows = otoc_rows(&samples, times, cfg.derivative, hbar, cfg, p)?;
    let values = column_means(&rows);
    let errors = bootstrap_errors(&rows, cfg.bootstrap_resamples, cfg.seed);

    let mut d0_sensitive = false;
    if let (DerivativeMethod::TwoTrajectory { d0 }, Some(horizon)) = (cfg.derivative, cfg.d0_check_horizon) {
        let early: Vec<f64> = times.iter().copied().take_while(|t| *t <= horizon).collect();
        if !early.is_empty() {
            let half = otoc_rows(&samples, &early, DerivativeMethod::TwoTrajectory { d0: 0.5 * d0 }, hbar, cfg, p)?;
            let alt = column_means(&half);
            let floor = 1e-12 * values.iter().cloned().fold(0.0, f64::max);
            let worst = alt.iter().zip(&values).filter(|(_, c)| **c > floor).map(|(a, c)| (a - c).abs() / c).fold(0.0, f64::max);
            if worst > 0.01 {
                d0_sensitive = true;
                log::warn!("halving d0 = {d0:e} changes C(t) by {:.2}% before t = {horizon}", 100.0 * worst);
            }
        }
    }

    Ok(TwaOtoc {
        series: OtocSeries { times: times.to_vec(), values, v_label: "rho0".into(), w_label: "rho0".into(), errors: Some(errors) },
        method: cfg.derivative,
        hbar_eff: hbar,
        n_samples: samples.len(),
        d0_sensitive,
    })
}

/// Straight-line least squares `y ≈ a + b x`, returning `(a, b, rms residual)`.
fn line_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let slope = sxy / sxx;
    let icpt = my - slope * mx;
    let rss: f64 = x.iter().zip(y).map(|(a, b)| (b - icpt - slope * a).powi(2)).sum();
    (icpt, slope, (rss / n).sqrt())
}

fn window_points(series: &OtocSeries, window: (f64, f64)) -> Result<(Vec<f64>, Vec<f64>)> {
    let (lo, hi) = window;
    if !(lo < hi) {
        return Err(Error::InvalidConfig(format!("empty fit window [{lo}, {hi}]")));
    }
    let (t, c): (Vec<f64>, Vec<f64>) = series.times.iter().zip(&series.values).filter(|(t, _)| **t >= lo && **t <= hi).map(|(t, c)| (*t, *c)).unzip();
    if t.len() < 3 {
        return Err(Error::InvalidConfig(format!("fit window [{lo}, {hi}] holds {} points, need 3", t.len())));
    }
    if let Some(bad) = c.iter().position(|v| !(*v > 0.0)) {
        return Err(Error::Domain(format!("C({}) = {} is not positive inside the fit window", t[bad], c[bad])));
    }
    Ok((t, c))
}

/// Exponential fit `C ≈ A e^{κt}`; `residual` is the rms misfit of `ln C`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrowthFit {
    pub rate: f64,
    pub log_amplitude: f64,
    pub residual: f64,
    pub n_points: usize,
}

/// Power-law fit `C ≈ A t^k`; `residual` is the rms misfit of `ln C`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerLawFit {
    pub exponent: f64,
    pub log_amplitude: f64,
    pub residual: f64,
    pub n_points: usize,
}

pub fn otoc_growth_fit(series: &OtocSeries, window: (f64, f64)) -> Result<GrowthFit> {
    let (t, c) = window_points(series, window)?;
    let logs: Vec<f64> = c.iter().map(|v| v.ln()).collect();
    let (a, b, res) = line_fit(&t, &logs);
    Ok(GrowthFit { rate: b, log_amplitude: a, residual: res, n_points: t.len() })
}

pub fn power_law_fit(series: &OtocSeries, window: (f64, f64)) -> Result<PowerLawFit> {
    let (t, c) = window_points(series, window)?;
    if t[0] <= 0.0 {
        return Err(Error::Domain("power-law fit needs t > 0 throughout the window".into()));
    }
    let lt: Vec<f64> = t.iter().map(|v| v.ln()).collect();
    let lc: Vec<f64> = c.iter().map(|v| v.ln()).collect();
    let (a, b, res) = line_fit(&lt, &lc);
    Ok(PowerLawFit { exponent: b, log_amplitude: a, residual: res, n_points: t.len() })
}

/// Single multiplicative factor aligning `model` with `reference`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaleFit {
    pub scale: f64,
    /// `‖s·model − reference‖₂ / ‖reference‖₂` over the window.
    pub rel_l2: f64,
    pub n_points: usize,
}

/// Least-squares scale factor over `t ∈ window`; both series must share their time grid.
pub fn fit_scale_factor(reference: &OtocSeries, model: &OtocSeries, window: (f64, f64)) -> Result<ScaleFit> {
    if reference.times.len() != model.times.len() || reference.times.iter().zip(&model.times).any(|(a, b)| (a - b).abs() > 1e-12) {
        return Err(Error::InvalidConfig("series are sampled on different time grids".into()));
    }
    let pts: Vec<(f64, f64)> = reference
        .times
        .iter()
        .enumerate()
        .filter(|(_, t)| **t >= window.0 && **t <= window.1)
        .map(|(i, _)| (reference.values[i], model.values[i]))
        .collect();
    let mm: f64 = pts.iter().map(|(_, m)| m * m).sum();
    let rr: f64 = pts.iter().map(|(r, _)| r * r).sum();
    if pts.is_empty() || mm == 0.0 || rr == 0.0 {
        return Err(Error::Domain("scale fit needs non-vanishing data inside the window".into()));
    }
    let scale = pts.iter().map(|(r, m)| r * m).sum::<f64>() / mm;
    let err: f64 = pts.iter().map(|(r, m)| (scale * m - r).powi(2)).sum();
    Ok(ScaleFit { scale, rel_l2: (err / rr).sqrt(), n_points: pts.len() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{canonical_to_zeta, solve_m_for_energy, CanonicalCoords};
    use std::f64::consts::PI;

    fn polar() -> ClassicalState {
        ClassicalState::polar()
    }

    fn chaotic_center(p: &ModelParams) -> ClassicalState {
        let m = solve_m_for_energy(0.2, -2.0 * PI / 3.0, 0.0, 1.005, p).unwrap();
        canonical_to_zeta(&CanonicalCoords::new(0.2, -2.0 * PI / 3.0, m, 0.0).unwrap())
    }

    fn cfg(n: usize, seed: u64) -> TwaConfig {
        TwaConfig { n_samples: n, seed, ..TwaConfig::default() }
    }

    fn series(times: Vec<f64>, values: Vec<f64>) -> OtocSeries {
        OtocSeries { times, values, v_label: "rho0".into(), w_label: "rho0".into(), errors: None }
    }

    #[test]
    fn rotation_is_unitary_and_hits_the_center() {
        let c = |a: f64, b: f64| Complex64::new(a, b);
        let centres = [
            [c(0.3, 0.1), c(0.5, -0.2), c(-0.4, 0.3)],
            [c(0.0, 0.0), c(0.0, 0.0), c(0.0, 1.0)],
            [c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)],
            [c(0.0, 0.0), c(1.0, 0.0), c(0.0, 0.0)],
        ];
        for z in centres {
            let s = ClassicalState::normalized(z).unwrap();
            let u = rotation_to(&s);
            let col = apply(&u, &[c(0.0, 0.0), c(1.0, 0.0), c(0.0, 0.0)]);
            for k in 0..3 {
                assert!((col[k] - s.zeta[k]).norm() < 1e-14);
            }
            for i in 0..3 {
                for j in 0..3 {
                    let g: Complex64 = (0..3).map(|k| u[k][i].conj() * u[k][j]).sum();
                    let want = if i == j { 1.0 } else { 0.0 };
                    assert!((g - want).norm() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn polar_ensemble_carries_half_a_quantum_per_side_mode() {
        let n_atoms = 100;
        let samples = sample_wigner(&polar(), n_atoms, &cfg(100_000, 3)).unwrap();
        let n = samples.len() as f64;
        for k in [0, 2] {
            let occ: Vec<f64> = samples.iter().map(|s| n_atoms as f64 * s.zeta[k].norm_sqr()).collect();
            let mean = occ.iter().sum::<f64>() / n;
            let se = (occ.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0) / n).sqrt();
            assert!((mean - 0.5).abs() < 5.0 * se, "mode {k}: {mean} ± {se}");
            let avg: Complex64 = samples.iter().map(|s| s.zeta[k]).sum::<Complex64>() / n;
            let amp_se = (0.5 / n_atoms as f64 / n).sqrt();
            assert!(avg.re.abs() < 5.0 * amp_se && avg.im.abs() < 5.0 * amp_se);
        }
        assert!(samples.iter().all(|s| (s.state().norm_sqr() - 1.0).abs() < 1e-14));
    }

    #[test]
    fn rotated_moments_follow_the_unitary() {
        // Sampling around `c` must agree in distribution with rotating a polar
        // ensemble through a different unitary that also maps (0,1,0) to `c`.
        let n_atoms = 50;
        let c = ClassicalState::normalized([Complex64::new(0.3, 0.2), Complex64::new(0.6, 0.0), Complex64::new(-0.1, 0.5)]).unwrap();
        let direct = sample_wigner(&c, n_atoms, &cfg(100_000, 11)).unwrap();
        let u = rotation_to(&c);
        // Mixing the two side modes leaves the polar cloud invariant.
        let (ca, sa) = (0.6_f64.cos(), 0.6_f64.sin());
        let ph = Complex64::from_polar(1.0, 0.9);
        let zero = Complex64::new(0.0, 0.0);
        let side = [[ph * ca, zero, Complex64::new(-sa, 0.0)], [zero, Complex64::new(1.0, 0.0), zero], [ph * sa, zero, Complex64::new(ca, 0.0)]];
        let polar_samples = sample_wigner(&polar(), n_atoms, &cfg(100_000, 12)).unwrap();
        let other: Vec<[Complex64; 3]> = polar_samples.iter().map(|s| apply(&u, &apply(&side, &s.zeta))).collect();
        let moments = |z: &[Complex64; 3]| [z[0].norm_sqr(), z[1].norm_sqr(), z[2].norm_sqr(), (z[0] * z[1].conj()).re, (z[1] * z[2].conj()).im];
        let stats = |rows: Vec<[f64; 5]>| {
            let n = rows.len() as f64;
            let m: Vec<f64> = (0..5).map(|k| rows.iter().map(|r| r[k]).sum::<f64>() / n).collect();
            let v: Vec<f64> = (0..5).map(|k| rows.iter().map(|r| (r[k] - m[k]).powi(2)).sum::<f64>() / (n - 1.0) / n).collect();
            (m, v)
        };
        let (ma, va) = stats(direct.iter().map(|s| moments(&s.zeta)).collect());
        let (mb, vb) = stats(other.iter().map(moments).collect());
        for k in 0..5 {
            assert!((ma[k] - mb[k]).abs() < 5.0 * (va[k] + vb[k]).sqrt(), "moment {k}: {} vs {}", ma[k], mb[k]);
        }
    }

    #[test]
    fn populations_at_t0_and_exact_total() {
        let p = ModelParams::default().with_r(0.15);
        let centre = chaotic_center(&p);
        let n_atoms = 100;
        let c = cfg(4000, 5);
        let times = [0.0, 1.0];
        let obs: Vec<TwaObservable> = ["N1", "N0", "Nm1"].iter().map(|l| twa_observable(&centre, n_atoms, l, &times, &c, &p).unwrap()).collect();
        let n0 = &obs[1];
        let expected = n_atoms as f64 * centre.rho0();
        assert!((n0.mean[0] - expected).abs() < 5.0 * n0.mean_err[0], "{} vs {expected} ± {}", n0.mean[0], n0.mean_err[0]);
        // Coherent-state spread of N₀ is √(N ρ₀ (1 − ρ₀)).
        let spread = (expected * (1.0 - centre.rho0())).sqrt();
        assert!((n0.std[0] - spread).abs() < 0.05 * spread, "{} vs {spread}", n0.std[0]);
        for t in 0..times.len() {
            let total: f64 = obs.iter().map(|o| o.mean[t]).sum();
            assert!((total - n_atoms as f64).abs() < 1e-8, "{total}");
        }
        let rho = twa_observable(&centre, n_atoms, "rho0", &times, &c, &p).unwrap();
        assert!((rho.mean[1] * n_atoms as f64 - n0.mean[1]).abs() < 1e-9);
    }

    #[test]
    fn ensemble_energy_is_conserved() {
        let p = ModelParams::default().with_r(0.15);
        let times: Vec<f64> = (0..=10).map(|k| k as f64).collect();
        let e = twa_energy(&chaotic_center(&p), 100, &times, &cfg(200, 1), &p).unwrap();
        assert!(e.iter().all(|v| (v - e[0]).abs() < 1e-8), "{e:?}");
    }

    #[test]
    fn otoc_vanishes_at_t0() {
        let p = ModelParams::default().with_r(0.15);
        let r = twa_otoc(&chaotic_center(&p), 100, &[0.0, 0.5], &cfg(200, 2), &p).unwrap();
        assert_eq!(r.series.values[0], 0.0);
        assert!(r.series.values[1] > 0.0);
    }

    #[test]
    fn derivative_methods_agree() {
        let p = ModelParams::default().with_r(0.15);
        let centre = chaotic_center(&p);
        let times: Vec<f64> = (1..=20).map(|k| 0.25 * k as f64).collect();
        let fm = twa_otoc(&centre, 100, &times, &cfg(1000, 9), &p).unwrap();
        let tt_cfg = TwaConfig { derivative: DerivativeMethod::TwoTrajectory { d0: 1e-7 }, ..cfg(1000, 9) };
        let tt = twa_otoc(&centre, 100, &times, &tt_cfg, &p).unwrap();
        assert!(!tt.d0_sensitive);
        for (a, b) in fm.series.values.iter().zip(&tt.series.values) {
            assert!((a - b).abs() < 0.01 * a, "{a} vs {b}");
        }
    }

    #[test]
    fn global_phase_of_center_is_irrelevant() {
        let p = ModelParams::default().with_r(0.15);
        let centre = chaotic_center(&p);
        let phased = ClassicalState::from_raw(centre.zeta.map(|z| z * Complex64::from_polar(1.0, 0.7)));
        let times = [1.0, 2.0, 3.0];
        let a = twa_otoc(&centre, 100, &times, &cfg(2000, 4), &p).unwrap().series;
        let b = twa_otoc(&phased, 100, &times, &cfg(2000, 4), &p).unwrap().series;
        let (ea, eb) = (a.errors.unwrap(), b.errors.unwrap());
        for i in 0..times.len() {
            assert!((a.values[i] - b.values[i]).abs() < 4.0 * (ea[i].hypot(eb[i])), "t = {}", times[i]);
        }
    }

    #[test]
    fn exponential_fit_recovers_rate() {
        let t: Vec<f64> = (0..50).map(|k| 0.1 * k as f64).collect();
        let c: Vec<f64> = t.iter().map(|t| (0.6 * t).exp()).collect();
        let fit = otoc_growth_fit(&series(t.clone(), c.clone()), (0.0, 5.0)).unwrap();
        assert!((fit.rate - 0.6).abs() < 1e-6);
        assert!(fit.residual < 1e-10);
        let pl = power_law_fit(&series(t, c), (0.5, 5.0)).unwrap();
        assert!(pl.residual > 1e-2);
    }

    #[test]
    fn power_law_fit_recovers_exponent() {
        let t: Vec<f64> = (1..50).map(|k| 0.1 * k as f64).collect();
        let c: Vec<f64> = t.iter().map(|t| 3.0 * t.powi(4)).collect();
        let fit = power_law_fit(&series(t.clone(), c.clone()), (0.1, 5.0)).unwrap();
        assert!((fit.exponent - 4.0).abs() < 1e-10 && (fit.log_amplitude - 3f64.ln()).abs() < 1e-10);
        assert!(otoc_growth_fit(&series(t, c), (0.1, 5.0)).unwrap().residual > fit.residual);
    }

    #[test]
    fn fits_reject_bad_windows() {
        let s = series(vec![0.0, 1.0, 2.0, 3.0], vec![0.0, 1.0, 2.0, 3.0]);
        assert!(matches!(otoc_growth_fit(&s, (0.0, 3.0)), Err(Error::Domain(_))));
        assert!(matches!(otoc_growth_fit(&s, (1.0, 1.5)), Err(Error::InvalidConfig(_))));
        assert!(otoc_growth_fit(&s, (1.0, 3.0)).is_ok());
    }

    #[test]
    fn scale_fit_recovers_factor() {
        let t: Vec<f64> = (0..10).map(f64::from).collect();
        let r: Vec<f64> = t.iter().map(|x| x * x).collect();
        let m: Vec<f64> = r.iter().map(|x| x / 2.5).collect();
        let fit = fit_scale_factor(&series(t.clone(), r), &series(t, m), (0.0, 9.0)).unwrap();
        assert!((fit.scale - 2.5).abs() < 1e-12 && fit.rel_l2 < 1e-12);
    }

    #[test]
    fn config_is_validated() {
        assert!(TwaConfig { n_samples: 1, ..TwaConfig::default() }.validate().is_err());
        assert!(TwaConfig { derivative: DerivativeMethod::TwoTrajectory { d0: 1e-2 }, ..TwaConfig::default() }.validate().is_err());
        assert!(sample_wigner(&ClassicalState::from_raw([Complex64::new(2.0, 0.0); 3]), 10, &TwaConfig::default()).is_err());
        assert_eq!("two-trajectory".parse::<DerivativeMethod>().unwrap(), DerivativeMethod::TwoTrajectory { d0: DEFAULT_D0 });
    }
}
