use std::f64::consts::PI;
use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Debug, Parser, Serialize)]
#[command(name = "trimode", version, about = "Chaos diagnostics for a three-mode spinor condensate")]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Serialize)]
pub struct Common {
    /// Interaction energy gN.
    #[arg(long, global = true, default_value_t = 1.0)]
    pub gn: f64,
    /// Quadratic Zeeman shift.
    #[arg(long, global = true, default_value_t = 1.0)]
    pub q: f64,
    /// rf coupling strength.
    #[arg(long, global = true, default_value_t = 0.0, allow_negative_numbers = true)]
    pub r: f64,
    /// Atom number N.
    #[arg(long, global = true, default_value_t = 100)]
    pub n_atoms: usize,
    /// Mean-field energy per atom (units of gN).
    #[arg(long, global = true, default_value_t = 1.005, allow_negative_numbers = true)]
    pub energy: f64,
    /// Raster resolution as ROWSxCOLS (rows along ρ₀, columns along Θ_s).
    #[arg(long, global = true)]
    pub grid: Option<Grid>,
    /// Final time (units of 1/gN).
    #[arg(long, global = true)]
    pub t_max: Option<f64>,
    /// Number of Wigner samples.
    #[arg(long, global = true, default_value_t = 1000)]
    pub samples: usize,
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Initial separation of the two-trajectory derivative.
    #[arg(long, global = true, default_value_t = 1e-6)]
    pub d0: f64,
    /// Lyapunov method (reset, fundamental) or TWA derivative (fundamental, two-trajectory).
    #[arg(long, global = true)]
    pub method: Option<String>,
    /// Kick angle of the quadratic-response protocol.
    #[arg(long, global = true, default_value_t = 1e-3)]
    pub phi: f64,
    /// Fit window LO,HI for growth fits.
    #[arg(long, global = true)]
    pub window: Option<Window>,
    /// Initial state RHO0,THETA_S,THETA_M,M where M may be `auto` (solved from --energy).
    /// Angles accept multiples of pi, e.g. `-2pi/3`.
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub state: Option<StateArg>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Format of the main data file.
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    /// Also write a greyscale PGM image of raster results.
    #[arg(long, global = true)]
    pub pgm: bool,
    /// Number of time points (excluding t = 0) for time series.
    #[arg(long, global = true, default_value_t = 200)]
    pub steps: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case", tag = "name")]
pub enum Command {
    /// Crossings of trajectories with the Θ_m = 0 surface.
    Poincare {
        /// Crossing sign: both, positive or negative.
        #[arg(long, default_value = "both")]
        direction: String,
    },
    /// Largest Lyapunov exponent of one initial state.
    Lyapunov(LyapunovArgs),
    /// Lyapunov exponents on a raster of the energy shell.
    LyapunovMap(LyapunovArgs),
    /// Parity-resolved eigenvalues of the N-atom Hamiltonian.
    Spectrum,
    /// Unfolded level-spacing histogram and Brody fit.
    LevelStats {
        #[arg(long, default_value_t = 40)]
        bins: usize,
        #[arg(long, default_value_t = 4.0)]
        s_max: f64,
        /// Degree of the smoothed staircase.
        #[arg(long, default_value_t = trimode::spectral::DEFAULT_POLY_DEGREE)]
        degree: usize,
        /// Fraction of spacings dropped at each spectral edge.
        #[arg(long, default_value_t = trimode::spectral::DEFAULT_EDGE_DISCARD)]
        edge: f64,
    },
    /// Husimi distribution of an evolved coherent state on the Θ_m = 0 plane.
    Husimi {
        /// Evolution time before the distribution is taken.
        #[arg(long, default_value_t = 0.0)]
        time: f64,
        #[arg(long, default_value_t = trimode::quantum::husimi::DEFAULT_M_GRID)]
        m_grid: usize,
    },
    /// Exact squared commutator of two observables.
    OtocEd {
        #[arg(long, default_value = "rho0")]
        v: String,
        #[arg(long, default_value = "rho0")]
        w: String,
    },
    /// Semi-classical squared commutator of ρ̂₀.
    OtocTwa {
        /// Fit one scale factor against the exact result (needs N small enough for diagonalization).
        #[arg(long)]
        fit_scale: bool,
        /// Window LO,HI of the scale fit.
        #[arg(long, default_value = "0,2.5")]
        scale_window: Window,
    },
    /// Ensemble mean and spread of an observable.
    EvolveTwa {
        #[arg(long, default_value = "N0")]
        observable: String,
        /// Also write the exact series for comparison.
        #[arg(long)]
        compare_ed: bool,
    },
    /// Squared commutator from the quadratic response to a kick.
    ProtocolQr {
        /// Initial Fock state N1,N0,NM1 (default: all atoms in mode 0).
        #[arg(long)]
        fock: Option<String>,
        /// Kick generator.
        #[arg(long, default_value = "Sx")]
        a: String,
        /// Measured observable.
        #[arg(long, default_value = "N0")]
        v: String,
    },
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct LyapunovArgs {
    #[arg(long, default_value_t = 1e-8)]
    pub xi0: f64,
    #[arg(long, default_value_t = 1.0)]
    pub t_reset: f64,
    /// Transient discarded before averaging.
    #[arg(long, default_value_t = 100.0)]
    pub t_min: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Grid {
    pub rows: usize,
    pub cols: usize,
}

impl FromStr for Grid {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        let (a, b) = s.split_once(['x', 'X']).ok_or_else(|| format!("expected ROWSxCOLS, got `{s}`"))?;
        let rows = a.trim().parse().map_err(|_| format!("bad row count `{a}`"))?;
        let cols = b.trim().parse().map_err(|_| format!("bad column count `{b}`"))?;
        if rows < 2 || cols < 2 {
            return Err("grid needs at least 2x2 points".into());
        }
        Ok(Self { rows, cols })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Window {
    pub lo: f64,
    pub hi: f64,
}

impl FromStr for Window {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        let (a, b) = s.split_once(',').ok_or_else(|| format!("expected LO,HI, got `{s}`"))?;
        let lo = parse_number(a)?;
        let hi = parse_number(b)?;
        if !(lo < hi) {
            return Err(format!("window [{lo}, {hi}] is empty"));
        }
        Ok(Self { lo, hi })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StateArg {
    pub rho0: f64,
    pub theta_s: f64,
    pub theta_m: f64,
    /// `None` means: solve for the magnetization at the requested energy.
    pub m: Option<f64>,
}

impl FromStr for StateArg {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        if parts.len() != 4 {
            return Err(format!("expected RHO0,THETA_S,THETA_M,M, got `{s}`"));
        }
        let m = match parts[3] {
            "auto" => None,
            v => Some(parse_number(v)?),
        };
        Ok(Self { rho0: parse_number(parts[0])?, theta_s: parse_number(parts[1])?, theta_m: parse_number(parts[2])?, m })
    }
}

/// Plain number, or a rational multiple of π such as `pi`, `-2pi/3`, `4*pi/3`.
pub fn parse_number(s: &str) -> Result<f64, String> {
    let t = s.trim();
    if let Ok(v) = t.parse::<f64>() {
        return Ok(v);
    }
    let bad = || format!("cannot read `{s}` as a number");
    let (num, den) = match t.split_once('/') {
        Some((n, d)) => (n.trim(), d.trim().parse::<f64>().map_err(|_| bad())?),
        None => (t, 1.0),
    };
    let coeff = num.strip_suffix("pi").ok_or_else(bad)?.trim_end_matches('*');
    let c = match coeff {
        "" | "+" => 1.0,
        "-" => -1.0,
        other => other.parse::<f64>().map_err(|_| bad())?,
    };
    Ok(c * PI / den)
}
