//! Out-of-time-order correlators `C(t) = ‖[Ŵ(t), V̂]|ψ₀⟩‖²` by exact evolution.

use std::io::Write;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quantum::operators::Operator;
use crate::quantum::spectrum::Spectrum;
use crate::quantum::states::QuantumState;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OtocSeries {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub v_label: String,
    pub w_label: String,
    /// Statistical uncertainty per time, present for sampled estimates.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub errors: Option<Vec<f64>>,
}

impl OtocSeries {
    /// Mean of `C(t)` over `t ∈ [lo, hi]`.
    pub fn window_mean(&self, lo: f64, hi: f64) -> Option<f64> {
        let sel: Vec<f64> = self.times.iter().zip(&self.values).filter(|(t, _)| **t >= lo && **t <= hi).map(|(_, v)| *v).collect();
        (!sel.is_empty()).then(|| sel.iter().sum::<f64>() / sel.len() as f64)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        match &self.errors {
            None => {
                writeln!(w, "t,C")?;
                for (t, c) in self.times.iter().zip(&self.values) {
                    writeln!(w, "{t},{c}")?;
                }
            }
            Some(err) => {
                writeln!(w, "t,C,bootstrap_err")?;
                for ((t, c), e) in self.times.iter().zip(&self.values).zip(err) {
                    writeln!(w, "{t},{c},{e}")?;
                }
            }
        }
        Ok(())
    }
}

pub(crate) fn norm_sqr_diff(a: &[Complex64], b: &[Complex64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum()
}

/// `C(t)` for every requested time, using only state-vector products.
pub fn otoc_ed(state: &QuantumState, v_label: &str, w_label: &str, times: &[f64], spectrum: &Spectrum) -> Result<OtocSeries> {
    let v_op = Operator::parse(v_label)?;
    let w_op = Operator::parse(w_label)?;
    if state.basis.n_atoms() != spectrum.basis.n_atoms() {
        return Err(Error::Domain("state and spectrum use different atom numbers".into()));
    }
    let v = v_op.matrix(&spectrum.basis);
    let w = w_op.matrix(&spectrum.basis);
    let psi = state.amplitudes.as_slice();
    let v_psi = v.apply_vec(psi);

    let nt = times.len();
    let mut xs: Vec<&[Complex64]> = vec![psi; nt];
    xs.extend(std::iter::repeat_n(v_psi.as_slice(), nt));
    let doubled: Vec<f64> = times.iter().chain(times).copied().collect();
    let forward = spectrum.propagate_many(&xs, &doubled, 1.0)?;
    let kicked: Vec<Vec<Complex64>> = forward.iter().map(|x| w.apply_vec(x)).collect();
    let refs: Vec<&[Complex64]> = kicked.iter().map(Vec::as_slice).collect();
    let back = spectrum.propagate_many(&refs, &doubled, -1.0)?;

    let values = (0..nt)
        .map(|k| {
            // back[k] = W(t)ψ₀ and back[nt + k] = W(t)Vψ₀.
            let v_w = v.apply_vec(&back[k]);
            norm_sqr_diff(&back[nt + k], &v_w)
        })
        .collect();
    Ok(OtocSeries { times: times.to_vec(), values, v_label: v_op.to_string(), w_label: w_op.to_string(), errors: None })
}
