//! Squared commutator from the quadratic response of `⟨V̂⟩` and `⟨V̂²⟩` to a
//! rotation `e^{−iφÂ}` sandwiched between forward and reversed evolution.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quantum::operators::Operator;
use crate::quantum::otoc::OtocSeries;
use crate::quantum::spectrum::Spectrum;
use crate::quantum::states::QuantumState;

/// Tolerance on `‖(V̂ − Λ)|ψ₀⟩‖` for the initial state.
pub const EIGENSTATE_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProtocolSpec {
    /// Rotation generator `Â`.
    pub a: Operator,
    /// Measured observable `V̂`.
    pub v: Operator,
    /// Rotation angle `φ₀` of the finite-difference stencil.
    pub phi: f64,
    /// Eigenvalue of `V̂` on the initial state.
    pub lambda: f64,
}

/// Response curves and the combined squared-commutator estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolResult {
    pub series: OtocSeries,
    pub gamma_v: Vec<f64>,
    pub gamma_v2: Vec<f64>,
}

pub fn quadratic_response_protocol(spec: &ProtocolSpec, state: &QuantumState, spectrum: &Spectrum, times: &[f64]) -> Result<ProtocolResult> {
    if !(spec.phi > 0.0 && spec.phi.is_finite()) {
        return Err(Error::InvalidConfig("protocol angle must be positive".into()));
    }
    let basis = &spectrum.basis;
    let v = spec.v.matrix(basis);
    let a = spec.a.matrix(basis);
    let psi = state.amplitudes.as_slice();
    let residual: f64 = v.apply_vec(psi).iter().zip(psi).map(|(x, p)| (x - p * spec.lambda).norm_sqr()).sum::<f64>().sqrt();
    if residual > EIGENSTATE_TOL {
        return Err(Error::Precondition(format!("initial state is not an eigenstate of {} with eigenvalue {}: residual {residual:e}", spec.v, spec.lambda)));
    }

    let forward = spectrum.propagate_many(&vec![psi; times.len()], times, 1.0)?;
    let phis = [-spec.phi, 0.0, spec.phi];
    let mut kicked = Vec::with_capacity(3 * times.len());
    let mut back_times = Vec::with_capacity(3 * times.len());
    for phi in phis {
        for (x, &t) in forward.iter().zip(times) {
            kicked.push(if phi == 0.0 { x.clone() } else { a.expi_apply(phi, x) });
            back_times.push(t);
        }
    }
    let refs: Vec<&[Complex64]> = kicked.iter().map(Vec::as_slice).collect();
    let finals = spectrum.propagate_many(&refs, &back_times, -1.0)?;

    let moments = |x: &[Complex64]| {
        let vx = v.apply_vec(x);
        let m1: f64 = x.iter().zip(&vx).map(|(a, b)| (a.conj() * b).re).sum();
        let m2: f64 = vx.iter().map(|b| b.norm_sqr()).sum();
        (m1, m2)
    };
    let nt = times.len();
    let denom = 2.0 * spec.phi * spec.phi;
    let mut gamma_v = Vec::with_capacity(nt);
    let mut gamma_v2 = Vec::with_capacity(nt);
    let mut values = Vec::with_capacity(nt);
    for k in 0..nt {
        let (m_minus, m_zero, m_plus) = (moments(&finals[k]), moments(&finals[nt + k]), moments(&finals[2 * nt + k]));
        let g1 = (m_plus.0 + m_minus.0 - 2.0 * m_zero.0) / denom;
        let g2 = (m_plus.1 + m_minus.1 - 2.0 * m_zero.1) / denom;
        gamma_v.push(g1);
        gamma_v2.push(g2);
        values.push(-2.0 * spec.lambda * g1 + g2);
    }
    Ok(ProtocolResult {
        series: OtocSeries { times: times.to_vec(), values, v_label: spec.v.to_string(), w_label: spec.a.to_string(), errors: None },
        gamma_v,
        gamma_v2,
    })
}
