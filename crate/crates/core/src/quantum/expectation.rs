//! Time series of exact expectation values and fluctuations.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quantum::operators::Operator;
use crate::quantum::spectrum::Spectrum;
use crate::quantum::states::QuantumState;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservableSeries {
    pub label: String,
    pub times: Vec<f64>,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl ObservableSeries {
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "t,mean,std")?;
        for i in 0..self.times.len() {
            writeln!(w, "{},{},{}", self.times[i], self.mean[i], self.std[i])?;
        }
        Ok(())
    }
}

/// `⟨Ô⟩(t)` and `√(⟨Ô²⟩ − ⟨Ô⟩²)` under exact evolution.
pub fn observable_ed(state: &QuantumState, label: &str, times: &[f64], spectrum: &Spectrum) -> Result<ObservableSeries> {
    let op = Operator::parse(label)?;
    if state.basis.n_atoms() != spectrum.basis.n_atoms() {
        return Err(Error::Domain("state and spectrum use different atom numbers".into()));
    }
    let m = op.matrix(&spectrum.basis);
    let xs = vec![state.amplitudes.as_slice(); times.len()];
    let evolved = spectrum.propagate_many(&xs, times, 1.0)?;
    let (mean, std) = evolved
        .iter()
        .map(|psi| {
            let o = m.apply_vec(psi);
            let first: f64 = psi.iter().zip(&o).map(|(a, b)| (a.conj() * b).re).sum();
            let second: f64 = o.iter().map(|b| b.norm_sqr()).sum();
            (first, (second - first * first).max(0.0).sqrt())
        })
        .unzip();
    Ok(ObservableSeries { label: op.to_string(), times: times.to_vec(), mean, std })
}
