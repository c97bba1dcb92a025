//! Adaptive Dormand–Prince 8(5,3) integrator with 7th-order dense output.
//!
//! The stepper is driven one accepted step at a time so that callers can
//! inspect each step (event location, renormalization, early stop) and
//! request the continuous interpolant of that step only when needed.

use crate::dop853_tableau::{A, C, D, E3, E5};
use crate::error::{Error, Result};

const N_STAGES: usize = 12;
const N_EXTENDED: usize = 16;
const SAFETY: f64 = 0.9;
const MIN_FACTOR: f64 = 0.2;
const MAX_FACTOR: f64 = 10.0;
const ERROR_EXPONENT: f64 = -1.0 / 8.0;

pub trait OdeSystem {
    fn dim(&self) -> usize;
    fn rhs(&self, t: f64, y: &[f64], dy: &mut [f64]);
}

/// Adapter turning a closure into an [`OdeSystem`].
pub struct FnSystem<F> {
    pub dim: usize,
    pub f: F,
}

impl<F: Fn(f64, &[f64], &mut [f64])> OdeSystem for FnSystem<F> {
    fn dim(&self) -> usize {
        self.dim
    }
    fn rhs(&self, t: f64, y: &[f64], dy: &mut [f64]) {
        (self.f)(t, y, dy)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepControl {
    pub rtol: f64,
    pub atol: f64,
    pub max_step: f64,
}

/// Continuous interpolant of a single accepted step.
#[derive(Debug, Clone)]
pub struct DenseSegment {
    pub t_old: f64,
    pub t: f64,
    y_old: Vec<f64>,
    rows: [Vec<f64>; 7],
}

impl DenseSegment {
    pub fn eval(&self, t: f64, out: &mut [f64]) {
        let h = self.t - self.t_old;
        let x = if h == 0.0 { 0.0 } else { (t - self.t_old) / h };
        out.iter_mut().for_each(|o| *o = 0.0);
        for (i, row) in self.rows.iter().rev().enumerate() {
            let w = if i % 2 == 0 { x } else { 1.0 - x };
            for (o, r) in out.iter_mut().zip(row) {
                *o = (*o + r) * w;
            }
        }
        for (o, y) in out.iter_mut().zip(&self.y_old) {
            *o += y;
        }
    }

    pub fn eval_vec(&self, t: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.y_old.len()];
        self.eval(t, &mut out);
        out
    }
}

/// What an observer wants after an accepted step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Control {
    Continue,
    Stop,
}

pub struct Dop853<'s, S: OdeSystem + ?Sized> {
    sys: &'s S,
    ctl: StepControl,
    t: f64,
    y: Vec<f64>,
    f: Vec<f64>,
    t_old: f64,
    y_old: Vec<f64>,
    h_abs: Option<f64>,
    k: Vec<Vec<f64>>,
    dense_ready: bool,
    pub nfev: usize,
    pub n_accepted: usize,
    pub n_rejected: usize,
}

impl<'s, S: OdeSystem + ?Sized> Dop853<'s, S> {
    pub fn new(sys: &'s S, t0: f64, y0: &[f64], ctl: StepControl) -> Self {
        let n = sys.dim();
        assert_eq!(y0.len(), n, "state length does not match system dimension");
        let mut f = vec![0.0; n];
        sys.rhs(t0, y0, &mut f);
        Self {
            sys,
            ctl,
            t: t0,
            y: y0.to_vec(),
            f,
            t_old: t0,
            y_old: y0.to_vec(),
            h_abs: None,
            k: vec![vec![0.0; n]; N_EXTENDED],
            dense_ready: false,
            nfev: 1,
            n_accepted: 0,
            n_rejected: 0,
        }
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    /// Replaces the current state (e.g. after renormalizing a companion
    /// trajectory). The step-size estimate is kept.
    pub fn set_state(&mut self, t: f64, y: &[f64]) {
        self.t = t;
        self.y.copy_from_slice(y);
        self.sys.rhs(t, &self.y, &mut self.f);
        self.nfev += 1;
        self.dense_ready = false;
    }

    fn initial_step(&mut self, direction: f64) -> f64 {
        let n = self.y.len();
        let scale: Vec<f64> = self.y.iter().map(|y| self.ctl.atol + y.abs() * self.ctl.rtol).collect();
        let rms = |v: &[f64]| (v.iter().zip(&scale).map(|(a, s)| (a / s).powi(2)).sum::<f64>() / n as f64).sqrt();
        let d0 = rms(&self.y);
        let d1 = rms(&self.f);
        let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
        let y1: Vec<f64> = self.y.iter().zip(&self.f).map(|(y, f)| y + h0 * direction * f).collect();
        let mut f1 = vec![0.0; n];
        self.sys.rhs(self.t + h0 * direction, &y1, &mut f1);
        self.nfev += 1;
        let diff: Vec<f64> = f1.iter().zip(&self.f).map(|(a, b)| a - b).collect();
        let d2 = rms(&diff) / h0;
        let h1 = if d1 <= 1e-15 && d2 <= 1e-15 {
            (h0 * 1e-3).max(1e-6)
        } else {
            (0.01 / d1.max(d2)).powf(1.0 / 8.0)
        };
        (100.0 * h0).min(h1).min(self.ctl.max_step)
    }

    /// Attempts steps until one is accepted, never passing `t_bound`.
    pub fn step(&mut self, t_bound: f64) -> Result<()> {
        let direction = if t_bound >= self.t { 1.0 } else { -1.0 };
        let n = self.y.len();
        let mut h_abs = match self.h_abs {
            Some(h) => h,
            None => self.initial_step(direction),
        };
        let min_step = 10.0 * (libm_next_after(self.t, direction) - self.t).abs();
        h_abs = h_abs.min(self.ctl.max_step).max(min_step);

        let mut rejected = false;
        let mut y_new = vec![0.0; n];
        let mut tmp = vec![0.0; n];
        loop {
            if h_abs < min_step {
                return Err(Error::StepSizeUnderflow { t: self.t, h: h_abs });
            }
            let mut t_new = self.t + direction * h_abs;
            if direction * (t_new - t_bound) > 0.0 {
                t_new = t_bound;
            }
            let h = t_new - self.t;
            let h_step = h.abs();

            self.k[0].copy_from_slice(&self.f);
            for s in 1..N_STAGES {
                for i in 0..n {
                    let mut acc = 0.0;
                    for (j, a) in A[s][..s].iter().enumerate() {
                        acc += a * self.k[j][i];
                    }
                    tmp[i] = self.y[i] + h * acc;
                }
                let (_, tail) = self.k.split_at_mut(s);
                self.sys.rhs(self.t + C[s] * h, &tmp, &mut tail[0]);
            }
            for i in 0..n {
                let mut acc = 0.0;
                for (j, b) in A[N_STAGES][..N_STAGES].iter().enumerate() {
                    acc += b * self.k[j][i];
                }
                y_new[i] = self.y[i] + h * acc;
            }
            {
                let (_, tail) = self.k.split_at_mut(N_STAGES);
                self.sys.rhs(t_new, &y_new, &mut tail[0]);
            }
            self.nfev += N_STAGES;

            let mut e5 = 0.0;
            let mut e3 = 0.0;
            for i in 0..n {
                let scale = self.ctl.atol + self.y[i].abs().max(y_new[i].abs()) * self.ctl.rtol;
                let mut a5 = 0.0;
                let mut a3 = 0.0;
                for j in 0..=N_STAGES {
                    a5 += E5[j] * self.k[j][i];
                    a3 += E3[j] * self.k[j][i];
                }
                e5 += (a5 / scale).powi(2);
                e3 += (a3 / scale).powi(2);
            }
            let err = if e5 == 0.0 && e3 == 0.0 {
                0.0
            } else {
                h_step * e5 / ((e5 + 0.01 * e3) * n as f64).sqrt()
            };

            if err < 1.0 {
                let mut factor = if err == 0.0 { MAX_FACTOR } else { MAX_FACTOR.min(SAFETY * err.powf(ERROR_EXPONENT)) };
                if rejected {
                    factor = factor.min(1.0);
                }
                self.h_abs = Some(h_step * factor);
                self.t_old = self.t;
                std::mem::swap(&mut self.y_old, &mut self.y);
                self.y.copy_from_slice(&y_new);
                self.t = t_new;
                self.f.copy_from_slice(&self.k[N_STAGES]);
                self.dense_ready = false;
                self.n_accepted += 1;
                return Ok(());
            }
            h_abs = h_step * MIN_FACTOR.max(SAFETY * err.powf(ERROR_EXPONENT));
            rejected = true;
            self.n_rejected += 1;
        }
    }

    /// Interpolant of the last accepted step.
    pub fn dense(&mut self) -> DenseSegment {
        let n = self.y.len();
        let h = self.t - self.t_old;
        if !self.dense_ready {
            let mut tmp = vec![0.0; n];
            for s in (N_STAGES + 1)..N_EXTENDED {
                for i in 0..n {
                    let mut acc = 0.0;
                    for (j, a) in A[s][..s].iter().enumerate() {
                        acc += a * self.k[j][i];
                    }
                    tmp[i] = self.y_old[i] + h * acc;
                }
                let (_, tail) = self.k.split_at_mut(s);
                self.sys.rhs(self.t_old + C[s] * h, &tmp, &mut tail[0]);
            }
            self.nfev += N_EXTENDED - N_STAGES - 1;
            self.dense_ready = true;
        }
        let f_old = &self.k[0];
        let mut rows: [Vec<f64>; 7] = Default::default();
        rows.iter_mut().for_each(|r| *r = vec![0.0; n]);
        for i in 0..n {
            let dy = self.y[i] - self.y_old[i];
            rows[0][i] = dy;
            rows[1][i] = h * f_old[i] - dy;
            rows[2][i] = 2.0 * dy - h * (self.f[i] + f_old[i]);
            for (r, drow) in D.iter().enumerate() {
                let mut acc = 0.0;
                for (j, d) in drow.iter().enumerate() {
                    acc += d * self.k[j][i];
                }
                rows[3 + r][i] = h * acc;
            }
        }
        DenseSegment { t_old: self.t_old, t: self.t, y_old: self.y_old.clone(), rows }
    }

    /// Steps up to `t_end`, calling `observer` after every accepted step.
    /// Returns the time reached (earlier than `t_end` if the observer stopped).
    pub fn run<O>(&mut self, t_end: f64, mut observer: O) -> Result<f64>
    where
        O: FnMut(&mut Self) -> Control,
    {
        while (t_end - self.t).abs() > 0.0 {
            self.step(t_end)?;
            if !self.y.iter().all(|v| v.is_finite()) {
                return Err(Error::StepSizeUnderflow { t: self.t, h: 0.0 });
            }
            if observer(self) == Control::Stop {
                break;
            }
        }
        Ok(self.t)
    }
}

fn libm_next_after(x: f64, direction: f64) -> f64 {
    if x == 0.0 {
        return direction * f64::from_bits(1);
    }
    let bits = x.to_bits();
    let up = (x > 0.0) == (direction > 0.0);
    f64::from_bits(if up { bits + 1 } else { bits - 1 })
}
