mod args;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Instant;

use clap::{CommandFactory, Parser};
use serde::Serialize;
use serde_json::{json, Map, Value};

use trimode::chaos::{lyapunov, lyapunov_map, poincare_section, CrossingDirection, LyapunovConfig, LyapunovMethod};
use trimode::dynamics::{propagate, IntegratorConfig};
use trimode::io::{write_csv_with_header, write_json, write_pgm, RunManifest};
use trimode::model::{canonical_to_zeta, solve_m_for_energy, zeta_to_canonical, CanonicalCoords, ClassicalState, EnergyShellSpec, ModelParams};
use trimode::quantum::protocol::{quadratic_response_protocol, ProtocolSpec};
use trimode::quantum::{
    build_hamiltonian, coherent_state, diagonalize, husimi_grid, observable_ed, otoc_ed, parity_blocks, FockBasis, Operator, PhaseGrid, QuantumState,
    Spectrum,
};
use trimode::spectral::{brody_fit, histogram, unfold, UnfoldConfig};
use trimode::twa::{fit_scale_factor, otoc_growth_fit, power_law_fit, twa_observable, twa_otoc, DerivativeMethod, TwaConfig};

use args::{Cli, Command, Format, LyapunovArgs, StateArg};

pub const THREADS_ENV: &str = "TRIMODE_THREADS";

enum Failure {
    Usage(String),
    Run(trimode::Error),
}

impl From<trimode::Error> for Failure {
    fn from(e: trimode::Error) -> Self {
        Failure::Run(e)
    }
}

type Outcome<T = ()> = std::result::Result<T, Failure>;

fn usage<T>(msg: impl Into<String>) -> Outcome<T> {
    Err(Failure::Usage(msg.into()))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::try_parse().unwrap_or_else(|e| e.exit());
    let result = configure_threads().and_then(|_| run(&cli));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}\n\n{}", Cli::command().render_usage());
            ExitCode::from(2)
        }
        Err(Failure::Run(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn configure_threads() -> Outcome {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = match raw.trim().parse() {
        Ok(n) if n > 0 => n,
        _ => return usage(format!("{THREADS_ENV} must be a positive integer, got `{raw}`")),
    };
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| Failure::Usage(e.to_string()))
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Poincare { .. } => "poincare",
        Command::Lyapunov(_) => "lyapunov",
        Command::LyapunovMap(_) => "lyapunov-map",
        Command::Spectrum => "spectrum",
        Command::LevelStats { .. } => "level-stats",
        Command::Husimi { .. } => "husimi",
        Command::OtocEd { .. } => "otoc-ed",
        Command::OtocTwa { .. } => "otoc-twa",
        Command::EvolveTwa { .. } => "evolve-twa",
        Command::ProtocolQr { .. } => "protocol-qr",
    }
}

/// Parameters that determine the data; output location and presentation are left out.
fn manifest_parameters(cli: &Cli) -> Value {
    let mut v = serde_json::to_value(cli).expect("arguments serialize");
    if let Some(common) = v.get_mut("common").and_then(Value::as_object_mut) {
        common.remove("out");
        common.remove("pgm");
    }
    v
}

struct Run<'a> {
    cli: &'a Cli,
    params: ModelParams,
    manifest: RunManifest,
    results: Map<String, Value>,
}

impl Run<'_> {
    fn path(&self, stem: &str, ext: &str) -> PathBuf {
        self.cli.common.out.join(format!("{stem}.{ext}"))
    }

    /// Main data file in the requested format.
    fn data<T, F>(&mut self, stem: &str, extra: &[(&str, String)], value: &T, csv: F) -> Outcome
    where
        T: Serialize,
        F: FnOnce(&mut dyn Write) -> trimode::Result<()>,
    {
        let path = match self.cli.common.format {
            Format::Csv => {
                let p = self.path(stem, "csv");
                write_csv_with_header(&p, &self.manifest, extra, csv)?;
                p
            }
            Format::Json => {
                let p = self.path(stem, "json");
                write_json(&p, &self.manifest, value)?;
                p
            }
        };
        self.manifest.outputs.push(path);
        Ok(())
    }

    fn json<T: Serialize>(&mut self, stem: &str, value: &T) -> Outcome {
        let p = self.path(stem, "json");
        write_json(&p, &self.manifest, value)?;
        self.manifest.outputs.push(p);
        Ok(())
    }

    fn pgm(&mut self, stem: &str, rows: usize, cols: usize, values: &[Option<f64>]) -> Outcome {
        if self.cli.common.pgm {
            let p = self.path(stem, "pgm");
            write_pgm(&p, rows, cols, values)?;
            self.manifest.outputs.push(p);
        }
        Ok(())
    }

    fn result(&mut self, key: &str, value: impl Serialize) {
        self.results.insert(key.to_string(), serde_json::to_value(value).expect("result serializes"));
    }

    fn t_max(&self, default: f64) -> Outcome<f64> {
        let t = self.cli.common.t_max.unwrap_or(default);
        if !(t.is_finite() && t > 0.0) {
            return usage("--t-max must be positive");
        }
        Ok(t)
    }

    fn times(&self, default_t_max: f64) -> Outcome<Vec<f64>> {
        let t = self.t_max(default_t_max)?;
        let n = self.cli.common.steps.max(1);
        Ok((0..=n).map(|k| t * k as f64 / n as f64).collect())
    }

    fn state(&self) -> Outcome<ClassicalState> {
        let Some(s) = self.cli.common.state else {
            return usage("this command needs --state RHO0,THETA_S,THETA_M,M");
        };
        resolve_state(&s, self.cli.common.energy, &self.params)
    }

    fn spectrum(&self, vectors: bool) -> Outcome<Spectrum> {
        let basis = Arc::new(FockBasis::new(self.params.n_atoms)?);
        let h = build_hamiltonian(&basis, &self.params);
        Ok(diagonalize(&parity_blocks(&h), vectors)?)
    }

    fn lyapunov_config(&self, a: &LyapunovArgs, default_total: f64) -> Outcome<(LyapunovConfig, LyapunovMethod)> {
        let cfg = LyapunovConfig { xi0: a.xi0, t_reset: a.t_reset, t_min: a.t_min, t_total: self.t_max(default_total)?, seed: self.cli.common.seed };
        cfg.validate().map_err(|e| Failure::Usage(e.to_string()))?;
        let method = match &self.cli.common.method {
            None => LyapunovMethod::Reset,
            Some(m) => m.parse().map_err(|e: trimode::Error| Failure::Usage(e.to_string()))?,
        };
        Ok((cfg, method))
    }

    fn twa_config(&self) -> Outcome<TwaConfig> {
        let c = &self.cli.common;
        let derivative = match c.method.as_deref() {
            None => DerivativeMethod::FundamentalMatrix,
            Some(m) => match m.parse().map_err(|e: trimode::Error| Failure::Usage(e.to_string()))? {
                DerivativeMethod::TwoTrajectory { .. } => DerivativeMethod::TwoTrajectory { d0: c.d0 },
                other => other,
            },
        };
        let cfg = TwaConfig { n_samples: c.samples, seed: c.seed, derivative, ..TwaConfig::default() };
        cfg.validate().map_err(|e| Failure::Usage(e.to_string()))?;
        Ok(cfg)
    }
}

fn resolve_state(s: &StateArg, energy: f64, p: &ModelParams) -> Outcome<ClassicalState> {
    let m = match s.m {
        Some(m) => m,
        None => match solve_m_for_energy(s.rho0, s.theta_s, s.theta_m, energy, p) {
            Some(m) => m,
            None => return usage(format!("no magnetization puts ({}, {}, {}) at energy {energy}", s.rho0, s.theta_s, s.theta_m)),
        },
    };
    let c = CanonicalCoords::new(s.rho0, s.theta_s, m, s.theta_m).map_err(|e| Failure::Usage(e.to_string()))?;
    Ok(canonical_to_zeta(&c))
}

fn describe(z: &ClassicalState) -> String {
    let c = zeta_to_canonical(z).coords;
    format!("rho0={} theta_s={} theta_m={} m={}", c.rho0, c.theta_s, c.theta_m, c.m)
}

fn run(cli: &Cli) -> Outcome {
    let c = &cli.common;
    let params = ModelParams::new(c.gn, c.q, c.r, c.n_atoms).map_err(|e| Failure::Usage(e.to_string()))?;
    let name = command_name(&cli.command);
    let mut run = Run { cli, params, manifest: RunManifest::new(name, manifest_parameters(cli)), results: Map::new() };
    let started = Instant::now();
    std::fs::create_dir_all(&c.out).map_err(|e| Failure::Run(e.into()))?;

    match &cli.command {
        Command::Poincare { direction } => poincare(&mut run, direction)?,
        Command::Lyapunov(a) => single_lyapunov(&mut run, a)?,
        Command::LyapunovMap(a) => map(&mut run, a)?,
        Command::Spectrum => spectrum(&mut run)?,
        Command::LevelStats { bins, s_max, degree, edge } => level_stats(&mut run, *bins, *s_max, *degree, *edge)?,
        Command::Husimi { time, m_grid } => husimi(&mut run, *time, *m_grid)?,
        Command::OtocEd { v, w } => otoc_exact(&mut run, v, w)?,
        Command::OtocTwa { fit_scale, scale_window } => otoc_semiclassical(&mut run, *fit_scale, (scale_window.lo, scale_window.hi))?,
        Command::EvolveTwa { observable, compare_ed } => evolve(&mut run, observable, *compare_ed)?,
        Command::ProtocolQr { fock, a, v } => protocol(&mut run, fock.as_deref(), a, v)?,
    }

    run.manifest.wall_time_s = started.elapsed().as_secs_f64();
    run.manifest.results = Value::Object(std::mem::take(&mut run.results));
    let mpath = run.path(&format!("{name}.manifest"), "json");
    run.manifest.outputs.push(mpath.clone());
    run.manifest.write(&mpath)?;
    Ok(())
}

fn poincare(run: &mut Run, direction: &str) -> Outcome {
    let direction: CrossingDirection = direction.parse().map_err(|e: trimode::Error| Failure::Usage(e.to_string()))?;
    let p = run.params;
    let initials = if run.cli.common.state.is_some() {
        vec![run.state()?]
    } else {
        let g = run.cli.common.grid.unwrap_or(args::Grid { rows: 4, cols: 6 });
        let shell = EnergyShellSpec::new(run.cli.common.energy, g.rows, g.cols).map_err(|e| Failure::Usage(e.to_string()))?;
        shell.cells().filter_map(|(i, j)| shell.point(i, j, &p)).map(|c| canonical_to_zeta(&c)).collect::<Vec<_>>()
    };
    if initials.is_empty() {
        return usage(format!("no initial states lie on the energy shell E = {}", run.cli.common.energy));
    }
    let t_end = run.t_max(1000.0)?;
    let section = poincare_section(&initials, t_end, &p, direction, &IntegratorConfig::default())?;
    run.result("trajectories", initials.len());
    run.result("crossings", section.total_crossings());
    run.result("occupancy_area_50", section.occupancy_area(50));
    run.data("poincare", &[("coordinates", "rho0 (dimensionless), theta_s (rad)".into())], &section, |w| section.write_csv(w))
}

fn single_lyapunov(run: &mut Run, a: &LyapunovArgs) -> Outcome {
    let z = run.state()?;
    let (cfg, method) = run.lyapunov_config(a, 2000.0)?;
    let est = lyapunov(&z, &cfg, &run.params, method)?;
    run.result("lambda", est.lambda);
    run.result("stderr", est.std_error);
    let state = describe(&z);
    run.data("lyapunov", &[("state", state), ("unit", "lambda in gN".into())], &est, |w| {
        writeln!(w, "lambda,stderr,method")?;
        writeln!(w, "{},{},{:?}", est.lambda, est.std_error, est.method)?;
        Ok(())
    })
}

fn map(run: &mut Run, a: &LyapunovArgs) -> Outcome {
    let (cfg, method) = run.lyapunov_config(a, 2000.0)?;
    let g = run.cli.common.grid.unwrap_or(args::Grid { rows: 80, cols: 80 });
    let shell = EnergyShellSpec::new(run.cli.common.energy, g.rows, g.cols).map_err(|e| Failure::Usage(e.to_string()))?;
    let m = lyapunov_map(&shell, &cfg, &run.params, method)?;
    run.result("populated_cells", m.filled().count());
    let meta = [("energy", shell.energy.to_string()), ("unit", "rho0 dimensionless, theta_s rad, lambda in gN".into())];
    run.data("lyapunov_map", &meta, &m, |w| m.write_csv(w))?;
    let raster: Vec<Option<f64>> = m.cells.iter().map(|c| c.as_ref().map(|c| c.estimate.lambda)).collect();
    run.pgm("lyapunov_map", g.rows, g.cols, &raster)
}

fn spectrum(run: &mut Run) -> Outcome {
    let s = run.spectrum(false)?;
    run.result("dimension", s.dim());
    run.result("even_levels", s.even.eigen.values.len());
    run.result("odd_levels", s.odd.eigen.values.len());
    let doc = json!({ "even": s.even.eigen.values, "odd": s.odd.eigen.values });
    run.data("spectrum", &[("unit", "energy in gN".into())], &doc, |w| s.write_csv(w))
}

fn level_stats(run: &mut Run, bins: usize, s_max: f64, degree: usize, edge: f64) -> Outcome {
    if bins == 0 || !(s_max > 0.0) {
        return usage("--bins and --s-max must be positive");
    }
    let s = run.spectrum(false)?;
    let cfg = UnfoldConfig { poly_degree: degree, edge_discard: edge };
    let ens = unfold(&[("even", &s.even.eigen.values), ("odd", &s.odd.eigen.values)], &cfg)?;
    let fit = brody_fit(&ens)?;
    let hist = histogram(&ens.spacings, bins, s_max);
    run.result("b", fit.b);
    run.result("b_stderr", fit.fit_stderr);
    run.data("level_spacings", &[("brody_b", fit.b.to_string())], &hist, |w| hist.write_csv(w, fit.b))?;
    let doc = json!({
        "b": fit.b,
        "alpha": fit.alpha,
        "stderr": fit.fit_stderr,
        "n_spacings": fit.n_spacings,
        "mean_spacing": ens.mean(),
        "blocks": ens.blocks,
    });
    run.json("brody_fit", &doc)
}

fn husimi(run: &mut Run, time: f64, m_grid: usize) -> Outcome {
    if !(time >= 0.0) {
        return usage("--time must be non-negative");
    }
    let z = run.state()?;
    let basis = Arc::new(FockBasis::new(run.params.n_atoms)?);
    let mut psi = coherent_state(&z, &basis);
    if time > 0.0 {
        psi = run.spectrum(true)?.evolve(&psi, time)?;
    }
    let g = run.cli.common.grid.unwrap_or(args::Grid { rows: 40, cols: 80 });
    let grid = PhaseGrid::new(g.rows, g.cols);
    let h = husimi_grid(&psi, &grid, m_grid)?;
    let centre = zeta_to_canonical(&propagate(&z, time, &IntegratorConfig::default(), &run.params)?).coords;
    run.result("classical_center", json!({ "rho0": centre.rho0, "theta_s": centre.theta_s }));
    run.result("mass_within_0.15_of_classical_center", h.mass_fraction_within(centre.rho0, centre.theta_s, 0.15));
    let meta = [("state", describe(&z)), ("time", time.to_string()), ("m_grid", m_grid.to_string())];
    run.data("husimi", &meta, &h, |w| h.write_csv(w))?;
    let raster: Vec<Option<f64>> = h.values.iter().map(|v| Some(*v)).collect();
    run.pgm("husimi", g.rows, g.cols, &raster)
}

fn growth_results(run: &mut Run, series: &trimode::quantum::OtocSeries) -> Outcome {
    if let Some(w) = run.cli.common.window {
        let e = otoc_growth_fit(series, (w.lo, w.hi))?;
        let p = power_law_fit(series, (w.lo, w.hi))?;
        run.result("exponential_fit", e);
        run.result("power_law_fit", p);
    }
    Ok(())
}

fn otoc_exact(run: &mut Run, v: &str, w: &str) -> Outcome {
    Operator::parse(v).and(Operator::parse(w)).map_err(|e| Failure::Usage(e.to_string()))?;
    let z = run.state()?;
    let times = run.times(10.0)?;
    let spec = run.spectrum(true)?;
    let psi = coherent_state(&z, &spec.basis);
    let series = otoc_ed(&psi, v, w, &times, &spec)?;
    growth_results(run, &series)?;
    let meta = [("state", describe(&z)), ("operators", format!("V={v} W={w}"))];
    run.data("otoc_ed", &meta, &series, |out| series.write_csv(out))
}

fn otoc_semiclassical(run: &mut Run, fit_scale: bool, scale_window: (f64, f64)) -> Outcome {
    let z = run.state()?;
    let times = run.times(5.0)?;
    let cfg = run.twa_config()?;
    let r = twa_otoc(&z, run.params.n_atoms, &times, &cfg, &run.params)?;
    run.result("seed", cfg.seed);
    run.result("n_samples", cfg.n_samples);
    run.result("d0", cfg.derivative.d0());
    run.result("method", cfg.derivative);
    run.result("hbar_eff", r.hbar_eff);
    run.result("d0_sensitive", r.d0_sensitive);
    growth_results(run, &r.series)?;
    if fit_scale {
        let spec = run.spectrum(true)?;
        let ed = otoc_ed(&coherent_state(&z, &spec.basis), "rho0", "rho0", &times, &spec)?;
        let fit = fit_scale_factor(&ed, &r.series, scale_window)?;
        run.result("scale_factor", fit.scale);
        run.result("scale_fit_rel_l2", fit.rel_l2);
        let meta = [("state", describe(&z))];
        run.data("otoc_ed", &meta, &ed, |out| ed.write_csv(out))?;
    }
    let meta = [("state", describe(&z)), ("method", format!("{:?}", cfg.derivative)), ("samples", cfg.n_samples.to_string())];
    run.data("otoc_twa", &meta, &r.series, |out| r.series.write_csv(out))
}

fn evolve(run: &mut Run, observable: &str, compare_ed: bool) -> Outcome {
    Operator::parse(observable).map_err(|e| Failure::Usage(e.to_string()))?;
    let z = run.state()?;
    let times = run.times(10.0)?;
    let cfg = run.twa_config()?;
    let obs = twa_observable(&z, run.params.n_atoms, observable, &times, &cfg, &run.params)?;
    let meta = [("state", describe(&z)), ("observable", obs.label.clone()), ("samples", cfg.n_samples.to_string())];
    run.data("evolve_twa", &meta, &obs, |w| obs.write_csv(w))?;
    if compare_ed {
        let spec = run.spectrum(true)?;
        let ed = observable_ed(&coherent_state(&z, &spec.basis), observable, &times, &spec)?;
        let rel = |a: &[f64], b: &[f64]| {
            let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum();
            let den: f64 = b.iter().map(|y| y * y).sum();
            (num / den).sqrt()
        };
        run.result("mean_rel_l2_vs_ed", rel(&obs.mean, &ed.mean));
        run.result("std_rel_l2_vs_ed", rel(&obs.std, &ed.std));
        let meta = [("state", describe(&z)), ("observable", ed.label.clone())];
        run.data("evolve_ed", &meta, &ed, |w| ed.write_csv(w))?;
    }
    Ok(())
}

fn protocol(run: &mut Run, fock: Option<&str>, a: &str, v: &str) -> Outcome {
    let n = run.params.n_atoms;
    let (n1, n0, nm) = match fock {
        None => (0, n, 0),
        Some(s) => {
            let parts: Vec<usize> = s.split(',').map(|x| x.trim().parse()).collect::<Result<_, _>>().map_err(|_| Failure::Usage(format!("bad --fock `{s}`")))?;
            match parts[..] {
                [a, b, c] if a + b + c == n => (a, b, c),
                _ => return usage(format!("--fock needs three occupations summing to N = {n}")),
            }
        }
    };
    let a_op = Operator::parse(a).map_err(|e| Failure::Usage(e.to_string()))?;
    let v_op = Operator::parse(v).map_err(|e| Failure::Usage(e.to_string()))?;
    let spec = run.spectrum(true)?;
    let psi = QuantumState::fock(Arc::clone(&spec.basis), n1, n0, nm)?;
    let lambda = psi.expectation(&v_op.matrix(&spec.basis));
    let times = run.times(5.0)?;
    let ps = ProtocolSpec { a: a_op, v: v_op, phi: run.cli.common.phi, lambda };
    let r = quadratic_response_protocol(&ps, &psi, &spec, &times)?;
    run.result("lambda", lambda);
    growth_results(run, &r.series)?;
    let meta = [("state", format!("|{n1},{n0},{nm}>")), ("generator", a_op.to_string()), ("observable", v_op.to_string()), ("phi", ps.phi.to_string())];
    run.data("protocol_qr", &meta, &r, |w| {
        writeln!(w, "t,C,gamma_v,gamma_v2")?;
        for i in 0..times.len() {
            writeln!(w, "{},{},{},{}", times[i], r.series.values[i], r.gamma_v[i], r.gamma_v2[i])?;
        }
        Ok(())
    })
}
