//! Spectrum unfolding, nearest-neighbour spacing statistics and Brody fits.

use std::f64::consts::PI;
use std::io::Write;

use faer::prelude::SolveLstsq;
use faer::Mat;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::error::{Error, Result};
use crate::roots::golden_max;

pub const DEFAULT_POLY_DEGREE: usize = 10;
pub const DEFAULT_EDGE_DISCARD: f64 = 0.02;
pub const MIN_LEVELS_PER_BLOCK: usize = 50;
pub const MIN_SPACINGS_FOR_FIT: usize = 500;
pub const BRODY_RANGE: (f64, f64) = (-0.2, 1.5);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnfoldConfig {
    pub poly_degree: usize,
    /// Fraction of spacings dropped at each end of every block.
    pub edge_discard: f64,
}

impl Default for UnfoldConfig {
    fn default() -> Self {
        Self { poly_degree: DEFAULT_POLY_DEGREE, edge_discard: DEFAULT_EDGE_DISCARD }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockSummary {
    pub label: String,
    pub levels: usize,
    pub kept: usize,
    pub discarded: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpacingEnsemble {
    pub spacings: Vec<f64>,
    pub blocks: Vec<BlockSummary>,
}

impl SpacingEnsemble {
    pub fn mean(&self) -> f64 {
        self.spacings.iter().sum::<f64>() / self.spacings.len() as f64
    }

    pub fn discarded(&self) -> usize {
        self.blocks.iter().map(|b| b.discarded).sum()
    }
}

/// Legendre polynomials `P_0 … P_degree` at `x ∈ [−1, 1]`.
fn legendre(x: f64, degree: usize, out: &mut [f64]) {
    out[0] = 1.0;
    if degree >= 1 {
        out[1] = x;
    }
    for n in 1..degree {
        out[n + 1] = ((2 * n + 1) as f64 * x * out[n] - n as f64 * out[n - 1]) / (n + 1) as f64;
    }
}

/// Least-squares polynomial approximation of the level staircase.
struct SmoothStaircase {
    centre: f64,
    half_width: f64,
    coeffs: Vec<f64>,
}

impl SmoothStaircase {
    fn fit(levels: &[f64], degree: usize) -> Result<Self> {
        let (lo, hi) = (levels[0], levels[levels.len() - 1]);
        if !(hi > lo) {
            return Err(Error::DegenerateFit("block spectrum has zero width".into()));
        }
        let centre = 0.5 * (lo + hi);
        let half_width = 0.5 * (hi - lo);
        let n = levels.len();
        let mut basis = vec![0.0; degree + 1];
        let mut a = Mat::<f64>::zeros(n, degree + 1);
        let mut rhs = Mat::<f64>::zeros(n, 1);
        for (k, &e) in levels.iter().enumerate() {
            legendre((e - centre) / half_width, degree, &mut basis);
            for (j, b) in basis.iter().enumerate() {
                a[(k, j)] = *b;
            }
            rhs[(k, 0)] = k as f64 + 0.5;
        }
        let sol = a.qr().solve_lstsq(&rhs);
        let coeffs = (0..=degree).map(|j| sol[(j, 0)]).collect();
        Ok(Self { centre, half_width, coeffs })
    }

    fn eval(&self, e: f64) -> f64 {
        let mut basis = vec![0.0; self.coeffs.len()];
        legendre((e - self.centre) / self.half_width, self.coeffs.len() - 1, &mut basis);
        basis.iter().zip(&self.coeffs).map(|(b, c)| b * c).sum()
    }
}

/// Unfolds each block separately and pools the spacings.
///
/// `blocks` are `(label, eigenvalues)`; eigenvalues need not be sorted.
pub fn unfold(blocks: &[(&str, &[f64])], cfg: &UnfoldConfig) -> Result<SpacingEnsemble> {
    if !(0.0..0.5).contains(&cfg.edge_discard) {
        return Err(Error::InvalidConfig("edge discard fraction must lie in [0, 0.5)".into()));
    }
    let mut spacings = Vec::new();
    let mut summaries = Vec::new();
    for (label, values) in blocks {
        if values.len() < MIN_LEVELS_PER_BLOCK {
            return Err(Error::Precondition(format!("block '{label}' has {} levels, need {MIN_LEVELS_PER_BLOCK}", values.len())));
        }
        let mut levels = values.to_vec();
        levels.sort_by(f64::total_cmp);
        let stair = SmoothStaircase::fit(&levels, cfg.poly_degree)?;
        let mapped: Vec<f64> = levels.iter().map(|&e| stair.eval(e)).collect();
        let raw: Vec<f64> = mapped.windows(2).map(|w| w[1] - w[0]).collect();
        let cut = (cfg.edge_discard * raw.len() as f64).floor() as usize;
        let kept = &raw[cut..raw.len() - cut];
        if let Some(k) = kept.iter().position(|&d| d < 0.0) {
            log::debug!("block {label}: staircase decreases after level {} of {}", k + cut, levels.len());
            return Err(Error::DegenerateFit(format!("smoothed staircase of block '{label}' is not monotonic over the retained window")));
        }
        spacings.extend_from_slice(kept);
        summaries.push(BlockSummary { label: label.to_string(), levels: levels.len(), kept: kept.len(), discarded: 2 * cut });
    }
    Ok(SpacingEnsemble { spacings, blocks: summaries })
}

pub fn brody_alpha(b: f64) -> f64 {
    gamma((b + 2.0) / (b + 1.0)).powf(b + 1.0)
}

/// `P_b(s) = (b+1) α s^b exp(−α s^{b+1})`.
pub fn brody_pdf(s: f64, b: f64) -> f64 {
    if s < 0.0 {
        return 0.0;
    }
    let a = brody_alpha(b);
    if s == 0.0 {
        return match b {
            _ if b == 0.0 => a,
            _ if b > 0.0 => 0.0,
            _ => f64::INFINITY,
        };
    }
    (b + 1.0) * a * s.powf(b) * (-a * s.powf(b + 1.0)).exp()
}

pub fn poisson_pdf(s: f64) -> f64 {
    if s < 0.0 {
        0.0
    } else {
        (-s).exp()
    }
}

pub fn wigner_pdf(s: f64) -> f64 {
    if s < 0.0 {
        0.0
    } else {
        0.5 * PI * s * (-0.25 * PI * s * s).exp()
    }
}

/// `(Poisson, Wigner)` at every grid point.
pub fn reference_pdfs(s: &[f64]) -> Vec<(f64, f64)> {
    s.iter().map(|&x| (poisson_pdf(x), wigner_pdf(x))).collect()
}

/// Draws from the Brody distribution by inverting its CDF.
pub fn brody_sample(b: f64, u: f64) -> f64 {
    (-(1.0 - u).ln() / brody_alpha(b)).powf(1.0 / (b + 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BrodyFit {
    pub b: f64,
    pub alpha: f64,
    pub fit_stderr: f64,
    pub n_spacings: usize,
}

/// Smallest spacing used in the likelihood; exact degeneracies would
/// otherwise make `ln s` diverge.
const SPACING_FLOOR: f64 = 1e-12;

fn brody_log_likelihood(b: f64, ln_s: &[f64]) -> f64 {
    let a = brody_alpha(b);
    let n = ln_s.len() as f64;
    let head = n * ((b + 1.0).ln() + a.ln());
    let body: f64 = ln_s.iter().map(|l| b * l - a * (l * (b + 1.0)).exp()).sum();
    head + body
}

/// Maximum-likelihood Brody parameter on `b ∈ [−0.2, 1.5]`.
pub fn brody_fit(ens: &SpacingEnsemble) -> Result<BrodyFit> {
    brody_fit_spacings(&ens.spacings)
}

pub fn brody_fit_spacings(spacings: &[f64]) -> Result<BrodyFit> {
    if spacings.len() < MIN_SPACINGS_FOR_FIT {
        return Err(Error::Precondition(format!("{} spacings, need at least {MIN_SPACINGS_FOR_FIT}", spacings.len())));
    }
    let s: Vec<f64> = spacings.iter().map(|x| x.max(SPACING_FLOOR)).collect();
    let ln_s: Vec<f64> = s.iter().map(|x| x.ln()).collect();
    let ll = |b: f64| brody_log_likelihood(b, &ln_s);
    let (b, _, converged) = golden_max(ll, BRODY_RANGE.0, BRODY_RANGE.1, 1e-9, 200);
    if !converged {
        return Err(Error::NonConvergence("Brody likelihood search did not converge".into()));
    }
    let h = 1e-3;
    let curvature = (ll(b + h) - 2.0 * ll(b) + ll(b - h)) / (h * h);
    let fit_stderr = if curvature < 0.0 { (-1.0 / curvature).sqrt() } else { f64::INFINITY };
    Ok(BrodyFit { b, alpha: brody_alpha(b), fit_stderr, n_spacings: s.len() })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpacingHistogram {
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
    /// Counts normalized to a probability density.
    pub density: Vec<f64>,
}

pub fn histogram(spacings: &[f64], bins: usize, s_max: f64) -> SpacingHistogram {
    let width = s_max / bins as f64;
    let edges = (0..=bins).map(|k| k as f64 * width).collect();
    let mut counts = vec![0; bins];
    for &s in spacings {
        if (0.0..s_max).contains(&s) {
            counts[((s / width) as usize).min(bins - 1)] += 1;
        }
    }
    let total = spacings.len().max(1) as f64;
    let density = counts.iter().map(|&c| c as f64 / (total * width)).collect();
    SpacingHistogram { edges, counts, density }
}

impl SpacingHistogram {
    /// CSV with bin edges, counts, density and the three reference curves at
    /// bin centres.
    pub fn write_csv<W: Write>(&self, mut w: W, brody_b: f64) -> Result<()> {
        writeln!(w, "s_lo,s_hi,count,density,brody,poisson,wigner")?;
        for (k, c) in self.counts.iter().enumerate() {
            let (lo, hi) = (self.edges[k], self.edges[k + 1]);
            let mid = 0.5 * (lo + hi);
            writeln!(w, "{lo},{hi},{c},{},{},{},{}", self.density[k], brody_pdf(mid, brody_b), poisson_pdf(mid), wigner_pdf(mid))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Composite Simpson rule on `[lo, hi]` after `s = u²` to tame `s^b`.
    fn integrate(f: impl Fn(f64) -> f64, hi: f64) -> f64 {
        let n = 200_000;
        let umax = hi.sqrt();
        let h = umax / n as f64;
        let g = |u: f64| if u == 0.0 { 0.0 } else { f(u * u) * 2.0 * u };
        let mut acc = g(0.0) + g(umax);
        for k in 1..n {
            acc += g(k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 };
        }
        acc * h / 3.0
    }

    #[test]
    fn reference_values() {
        assert_eq!(poisson_pdf(0.0), 1.0);
        assert_eq!(wigner_pdf(0.0), 0.0);
        for s in [0.0, 0.1, 0.5, 1.0, 2.5, 6.0] {
            assert!((brody_pdf(s, 0.0) - poisson_pdf(s)).abs() < 1e-12);
            assert!((brody_pdf(s, 1.0) - wigner_pdf(s)).abs() < 1e-12);
        }
        assert_eq!(reference_pdfs(&[0.0]), vec![(1.0, 0.0)]);
    }

    #[test]
    fn densities_are_normalized_with_unit_mean() {
        assert!((integrate(poisson_pdf, 60.0) - 1.0).abs() < 1e-6);
        assert!((integrate(wigner_pdf, 60.0) - 1.0).abs() < 1e-6);
        for b in [-0.2, 0.0, 0.3, 0.6, 1.0, 1.5] {
            assert!((integrate(|s| brody_pdf(s, b), 80.0) - 1.0).abs() < 1e-6, "norm b={b}");
            assert!((integrate(|s| s * brody_pdf(s, b), 80.0) - 1.0).abs() < 1e-6, "mean b={b}");
        }
    }

    #[test]
    fn alpha_closed_form() {
        assert!((brody_alpha(0.0) - 1.0).abs() < 1e-12);
        assert!((brody_alpha(1.0) - PI / 4.0).abs() < 1e-12);
    }

    fn fit_synthetic(sample: impl Fn(&mut ChaCha8Rng) -> f64, seed: u64) -> BrodyFit {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s: Vec<f64> = (0..10_000).map(|_| sample(&mut rng)).collect();
        brody_fit_spacings(&s).unwrap()
    }

    #[test]
    fn recovers_poisson_and_wigner() {
        let p = fit_synthetic(|r| -(1.0 - r.random::<f64>()).ln(), 1);
        assert!(p.b.abs() < 0.05, "{p:?}");
        let w = fit_synthetic(|r| (-(4.0 / PI) * (1.0 - r.random::<f64>()).ln()).sqrt(), 2);
        assert!((w.b - 1.0).abs() < 0.05, "{w:?}");
    }

    #[test]
    fn recovers_brody_parameter_within_three_stderr() {
        for (k, b) in [0.0, 0.3, 0.6, 1.0].into_iter().enumerate() {
            let f = fit_synthetic(|r| brody_sample(b, r.random()), 10 + k as u64);
            assert!((f.b - b).abs() < 3.0 * f.fit_stderr, "b={b}: {f:?}");
            assert!((f.alpha - brody_alpha(f.b)).abs() < 1e-10);
        }
    }

    #[test]
    fn fit_needs_enough_spacings() {
        assert!(matches!(brody_fit_spacings(&[1.0; 10]), Err(Error::Precondition(_))));
    }

    #[test]
    fn uniform_spectrum_unfolds_to_unit_spacing() {
        let levels: Vec<f64> = (0..400).map(|k| 3.0 + 0.25 * k as f64).collect();
        let ens = unfold(&[("a", &levels)], &UnfoldConfig::default()).unwrap();
        assert!(ens.spacings.iter().all(|s| (s - 1.0).abs() < 1e-8));
        assert_eq!(ens.discarded(), 2 * 7);
    }

    #[test]
    fn quadratic_density_unfolds_to_unit_mean() {
        // Density ∝ 1 + 3E² on [0, 1], i.e. staircase N(E) = 500 (E + E³),
        // with bounded jitter of the levels in the unfolded variable.
        let stair = |e: f64| 500.0 * (e + e * e * e);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let levels: Vec<f64> = (0..1000)
            .map(|k| {
                let x = k as f64 + 0.5 + 0.8 * (rng.random::<f64>() - 0.5);
                crate::roots::brent(|e| stair(e) - x, 0.0, 1.1, 1e-14, 200).unwrap()
            })
            .collect();
        let ens = unfold(&[("even", &levels), ("odd", &levels)], &UnfoldConfig::default()).unwrap();
        assert!((ens.mean() - 1.0).abs() < 0.02, "{}", ens.mean());
        assert_eq!(ens.blocks.len(), 2);
        // A dense cluster inside a sparse spectrum cannot be followed by a
        // degree-10 polynomial without turning over in the interior.
        let spread = |lo: f64, hi: f64, n: usize| (0..n).map(move |k| lo + (hi - lo) * k as f64 / n as f64);
        let clustered: Vec<f64> = spread(0.0, 3.0, 100).chain(spread(3.0, 3.1, 800)).chain(spread(3.1, 10.0, 100)).collect();
        assert!(matches!(unfold(&[("x", &clustered)], &UnfoldConfig::default()), Err(Error::DegenerateFit(_))));
    }

    #[test]
    fn small_blocks_are_rejected() {
        assert!(matches!(unfold(&[("x", &[1.0, 2.0])], &UnfoldConfig::default()), Err(Error::Precondition(_))));
    }

    #[test]
    fn histogram_density_integrates_to_kept_fraction() {
        let s = [0.1, 0.2, 0.2, 1.5, 9.0];
        let h = histogram(&s, 10, 5.0);
        assert_eq!(h.counts.iter().sum::<usize>(), 4);
        let area: f64 = h.density.iter().map(|d| d * 0.5).sum();
        assert!((area - 0.8).abs() < 1e-12);
    }
}
