//! Command-line front end: JSON config in, CSV/JSON data out.

pub mod config;
pub mod output;

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use num_complex::Complex64;
use serde_json::{json, Value};

use crate::decompose::{self, Attractor, DecayOptions};
use crate::dynsys::{self, DynSystem, Observable, Signal};
use crate::error::{Error, Result};
use crate::limit_cycle::{self, LimitCycleInfo};
use crate::modes;
use crate::phase::{AveragingOptions, TorusInfo, TorusMatchOptions};
use crate::resolvent::{self, LaplaceGrid, PoleEntry, PoleResidueSet};

use config::{ExpansionKind, ExperimentConfig, ObservableConfig, SystemConfig, SystemKind};
use output::{Format, Metadata, Sink};

#[derive(Debug, Parser)]
#[command(name = "koopman-laplace", version, about = "Laplace-domain Koopman analysis of autonomous ODEs")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// JSON experiment configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    /// Format of tabular outputs.
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
}

#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// CSV time series `t, y_1..y_m`; overrides simulation.
    #[arg(long)]
    pub input: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Integrate the system and write the trajectory.
    Simulate(CommonArgs),
    /// Period, frequency, Floquet multipliers and exponents of a limit cycle.
    Floquet(CommonArgs),
    /// Stationary/residual split of a van der Pol trajectory and its decay rate.
    ReproFig1(CommonArgs),
    /// Stationary/residual split of coupled van der Pol oscillators on a torus.
    ReproFig2(CommonArgs),
    /// Numerical transform on an s-grid and the truncated pole expansion.
    Resolvent(CommonArgs),
    /// Exact DMD of a time series.
    Dmd(DataArgs),
    /// Prony analysis of a scalar time series.
    Prony(DataArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Simulate(_) => "simulate",
            Command::Floquet(_) => "floquet",
            Command::ReproFig1(_) => "repro-fig1",
            Command::ReproFig2(_) => "repro-fig2",
            Command::Resolvent(_) => "resolvent",
            Command::Dmd(_) => "dmd",
            Command::Prony(_) => "prony",
        }
    }

    fn common(&self) -> &CommonArgs {
        match self {
            Command::Simulate(c)
            | Command::Floquet(c)
            | Command::ReproFig1(c)
            | Command::ReproFig2(c)
            | Command::Resolvent(c) => c,
            Command::Dmd(d) | Command::Prony(d) => &d.common,
        }
    }
}

/// Runs a parsed command and returns its summary report.
pub fn run(cli: &Cli) -> Result<Value> {
    let common = cli.command.common();
    let cfg = match &common.config {
        Some(path) => ExperimentConfig::from_path(path)?,
        None => ExperimentConfig::default(),
    };
    let ctx = Context { cfg, name: cli.command.name(), out: common.out.clone(), format: common.format };
    match &cli.command {
        Command::Simulate(_) => cmd_simulate(&ctx),
        Command::Floquet(_) => cmd_floquet(&ctx),
        Command::ReproFig1(_) => cmd_repro_fig1(&ctx),
        Command::ReproFig2(_) => cmd_repro_fig2(&ctx),
        Command::Resolvent(_) => cmd_resolvent(&ctx),
        Command::Dmd(d) => cmd_dmd(&ctx, d.input.as_deref()),
        Command::Prony(d) => cmd_prony(&ctx, d.input.as_deref()),
    }
}

struct Context {
    cfg: ExperimentConfig,
    name: &'static str,
    out: PathBuf,
    format: Format,
}

impl Context {
    fn sink(&self, tol: f64, modules: &[&'static str]) -> Result<Sink> {
        Sink::new(&self.out, self.format, Metadata::new(self.name, self.cfg.sha256(), tol, modules))
    }

    fn system(&self, default: SystemKind) -> Result<(SystemConfig, DynSystem)> {
        let sc = self.cfg.system_or(default);
        let sys = sc.build()?;
        Ok((sc, sys))
    }

    fn x0(&self, kind: SystemKind, n: usize) -> Result<Vec<f64>> {
        let x0 = match (&self.cfg.x0, kind) {
            (Some(x), _) => x.clone(),
            (None, SystemKind::Vdp) => vec![3.0, 0.0],
            (None, SystemKind::CoupledVdp) => vec![3.0; 4],
            (None, SystemKind::QuadraticEquilibrium) => vec![1.0, 2.0],
            (None, _) => return Err(Error::Config("x0: required for this system".into())),
        };
        if x0.len() != n {
            return Err(Error::Config(format!("x0: expected {n} entries, got {}", x0.len())));
        }
        Ok(x0)
    }

    fn observable_configs(&self, default: Vec<ObservableConfig>) -> Vec<ObservableConfig> {
        self.cfg.observables.clone().unwrap_or(default)
    }

    fn tol(&self, default: f64) -> f64 {
        self.cfg.tol.unwrap_or(default)
    }
}

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn finish(sink: &Sink, mut report: Value) -> Value {
    if let Value::Object(map) = &mut report {
        map.insert(
            "files".into(),
            json!(sink.written().iter().map(|p| p.display().to_string()).collect::<Vec<_>>()),
        );
    }
    report
}

fn cmd_simulate(ctx: &Context) -> Result<Value> {
    let (sc, sys) = ctx.system(SystemKind::Vdp)?;
    let x0 = ctx.x0(sc.kind, sys.dim())?;
    let horizon = ctx.cfg.horizon.unwrap_or(100.0);
    let dt = ctx.cfg.dt.unwrap_or(0.01);
    let tol = ctx.tol(dynsys::DEFAULT_TOL);
    let traj = dynsys::integrate(&sys, &x0, horizon, dt, tol)?;
    let mut sink = ctx.sink(tol, &["dynsys"])?;
    sink.meta.set("horizon", horizon);
    sink.meta.set("dt", dt);
    sink.trajectory("trajectory", &traj)?;
    let report = json!({
        "system": sys.name(),
        "rows": traj.len(),
        "final_time": traj.time(traj.len() - 1),
        "final_state": traj.last(),
    });
    sink.json("simulate", &report)?;
    Ok(finish(&sink, report))
}

fn locate_cycle(ctx: &Context, sys: &DynSystem, x0: &[f64], tol: f64) -> Result<LimitCycleInfo> {
    LimitCycleInfo::locate(sys, x0, ctx.cfg.settle.unwrap_or(limit_cycle::DEFAULT_SETTLE_TIME), tol)
}

fn cmd_floquet(ctx: &Context) -> Result<Value> {
    let (sc, sys) = ctx.system(SystemKind::Vdp)?;
    let x0 = ctx.x0(sc.kind, sys.dim())?;
    let tol = ctx.tol(1e-10);
    let info = locate_cycle(ctx, &sys, &x0, tol)?;
    let check = limit_cycle::find_period(&sys, &info.anchor, Some(info.period), tol)?;
    let monodromy: Vec<Vec<f64>> = (0..info.monodromy.nrows())
        .map(|i| info.monodromy.row(i).iter().copied().collect())
        .collect();
    let report = json!({
        "T": info.period,
        "Omega": info.omega,
        "multipliers": info.multipliers,
        "exponents": info.exponents,
        "trivial_multiplier": info.trivial_multiplier,
        "fft_omega": check.fft_omega,
        "fft_bin": check.fft_bin,
        "anchor": info.anchor,
        "monodromy": monodromy,
    });
    let mut sink = ctx.sink(tol, &["dynsys", "limit_cycle"])?;
    sink.meta.set("settle", ctx.cfg.settle.unwrap_or(limit_cycle::DEFAULT_SETTLE_TIME));
    sink.json("floquet", &report)?;
    Ok(finish(&sink, report))
}

fn averaging_options(ctx: &Context, period: f64, tol: f64) -> AveragingOptions {
    let a = ctx.cfg.averaging.clone().unwrap_or_default();
    AveragingOptions {
        t_avg: a.periods * period,
        dt: period / a.samples_per_period as f64,
        tol,
        rel_gap: a.rel_gap,
        abs_gap: a.abs_gap,
        window: a.window,
    }
}

fn cmd_repro_fig1(ctx: &Context) -> Result<Value> {
    let (sc, sys) = ctx.system(SystemKind::Vdp)?;
    let x0 = ctx.x0(sc.kind, sys.dim())?;
    let tol = ctx.tol(1e-12);
    let horizon = ctx.cfg.horizon.unwrap_or(100.0);
    let obs = config::build_observable(&ctx.observable_configs(vec![ObservableConfig::Coordinate { index: 0 }]), sys.dim())?;
    let info = locate_cycle(ctx, &sys, &x0, tol)?;
    let dt = ctx.cfg.dt.unwrap_or(info.period / 512.0);
    let averaging = averaging_options(ctx, info.period, tol);
    let dec = decompose::decompose(&sys, &x0, &Attractor::Cycle { info: &info, averaging }, &obs, horizon, dt, tol)?;

    let strobe = ctx.cfg.strobe.clone().unwrap_or_default();
    let opts = DecayOptions {
        offset: strobe.offset,
        discard_fraction: strobe.discard_fraction,
        floor: strobe.floor,
        min_peak: strobe.min_peak,
    };
    let mut sink = ctx.sink(tol, &["dynsys", "limit_cycle", "phase", "decompose"])?;
    sink.meta.set("horizon", horizon);
    sink.meta.set("dt", dt);
    sink.meta.set("averaging", averaging);
    sink.meta.set("strobe", &strobe);
    sink.trajectory("original", &dec.original)?;
    sink.trajectory("stationary", &dec.stationary)?;
    sink.trajectory("residual", &dec.residual)?;

    let nu = info.dominant_exponent();
    let mut report = json!({
        "T": info.period,
        "Omega": info.omega,
        "nu_floquet": nu,
        "matched_state": dec.matched_state,
        "matching": dec.matching,
        "residual_peak": dec.residual.sup_norm(0.0, horizon),
    });
    match decompose::decay_rate(&dec, strobe.component, info.period, &opts) {
        Ok(fit) => {
            let rows: Vec<Vec<f64>> = fit
                .strobes
                .iter()
                .map(|s| vec![s.t, s.abs, s.abs.ln(), if s.used { 1.0 } else { 0.0 }])
                .collect();
            let header: Vec<String> = ["t", "abs_residual", "ln_abs_residual", "used"].iter().map(|s| s.to_string()).collect();
            sink.table("strobe_log", &header, &rows)?;
            report["nu_hat"] = json!(fit.nu_hat);
            report["r2"] = json!(fit.r2);
            report["fit"] = json!(fit);
            sink.json("fig1", &report)?;
            Ok(finish(&sink, report))
        }
        Err(e) => {
            report["nu_hat"] = Value::Null;
            report["fit_error"] = json!(e.to_string());
            sink.json("fig1", &report)?;
            Err(e)
        }
    }
}

fn cmd_repro_fig2(ctx: &Context) -> Result<Value> {
    let (sc, sys) = ctx.system(SystemKind::CoupledVdp)?;
    let x0 = ctx.x0(sc.kind, sys.dim())?;
    let tol = ctx.tol(1e-10);
    let horizon = ctx.cfg.horizon.unwrap_or(200.0);
    let dt = ctx.cfg.dt.unwrap_or(0.01);
    let default_obs = if sys.dim() == 4 {
        vec![ObservableConfig::Coordinate { index: 0 }, ObservableConfig::Coordinate { index: 2 }]
    } else {
        vec![ObservableConfig::Coordinate { index: 0 }]
    };
    let obs = config::build_observable(&ctx.observable_configs(default_obs), sys.dim())?;
    let tc = ctx.cfg.torus.clone().unwrap_or_default();
    let settle = ctx.cfg.settle.unwrap_or(300.0);
    let torus = TorusInfo::locate(&sys, &x0, &obs, tc.frequencies, settle, tol)?;
    let mut matching = TorusMatchOptions::new(tc.t_avg, tc.dt, tol);
    matching.search_span = tc.search_span;
    let dec = decompose::decompose(&sys, &x0, &Attractor::Torus { info: &torus, matching }, &obs, horizon, dt, tol)?;

    let initial = dec.residual.sup_norm(0.0, 0.0);
    let tail = dec.residual.sup_norm(0.9 * horizon, horizon);
    let ratio = if initial > 0.0 { tail / initial } else { 0.0 };
    let mut sink = ctx.sink(tol, &["dynsys", "limit_cycle", "phase", "decompose"])?;
    sink.meta.set("horizon", horizon);
    sink.meta.set("dt", dt);
    sink.meta.set("settle", settle);
    sink.meta.set("torus", &tc);
    sink.trajectory("original", &dec.original)?;
    sink.trajectory("stationary", &dec.stationary)?;
    sink.trajectory("residual", &dec.residual)?;
    let report = json!({
        "omegas": torus.omegas,
        "resonance": torus.resonance,
        "matched_state": dec.matched_state,
        "matching": dec.matching,
        "residual_initial": initial,
        "residual_final_sup": tail,
        "residual_ratio": ratio,
        "synchronized": ratio < 0.02,
    });
    sink.json("fig2", &report)?;
    Ok(finish(&sink, report))
}

fn grid_points(ctx: &Context, cycle_omega: Option<f64>) -> Result<Vec<Complex64>> {
    let g = ctx.cfg.s_grid.as_ref().ok_or_else(|| Error::Config("s_grid: required".into()))?;
    let lin = |a: f64, b: f64, n: usize| -> Vec<f64> {
        if n == 1 {
            vec![a]
        } else {
            (0..n).map(|k| a + (b - a) * k as f64 / (n - 1) as f64).collect()
        }
    };
    if let Some(pts) = &g.points {
        return Ok(pts.iter().map(|p| c(p[0], p[1])).collect());
    }
    if let Some(l) = &g.line {
        let sigma = match (l.sigma, cycle_omega) {
            (Some(s), _) => s,
            (None, Some(w)) => 0.05 * w,
            (None, None) => return Err(Error::Config("s_grid.line.sigma: required when no limit cycle is located".into())),
        };
        return Ok(lin(l.omega_min, l.omega_max, l.count).into_iter().map(|w| c(sigma, w)).collect());
    }
    let r = g.rect.as_ref().expect("validated");
    let mut pts = Vec::new();
    for re in lin(r.re_min, r.re_max, r.re_count) {
        for im in lin(r.im_min, r.im_max, r.im_count) {
            pts.push(c(re, im));
        }
    }
    Ok(pts)
}

// Linear functionals `cᵀx` behind each output row.
fn output_functionals(configs: &[ObservableConfig], n: usize) -> Vec<Vec<f64>> {
    let unit = |i: usize| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect::<Vec<f64>>();
    configs
        .iter()
        .flat_map(|o| match o {
            ObservableConfig::Coordinate { index } => vec![unit(*index)],
            ObservableConfig::Linear { c } => vec![c.clone()],
            ObservableConfig::State => (0..n).map(unit).collect(),
        })
        .collect()
}

fn cmd_resolvent(ctx: &Context) -> Result<Value> {
    let (sc, sys) = ctx.system(SystemKind::Vdp)?;
    let n = sys.dim();
    let x0 = ctx.x0(sc.kind, n)?;
    let tol = ctx.tol(1e-10);
    let horizon = ctx.cfg.horizon.unwrap_or(100.0);
    let dt = ctx.cfg.dt.unwrap_or(0.01);
    let obs_cfg = ctx.observable_configs(vec![ObservableConfig::Coordinate { index: 0 }]);
    let obs = config::build_observable(&obs_cfg, n)?;
    let exp_cfg = ctx.cfg.expansion.clone().unwrap_or_default();
    let kind = match exp_cfg.kind {
        ExpansionKind::Auto => match sc.kind {
            SystemKind::Linear => ExpansionKind::Linear,
            SystemKind::QuadraticEquilibrium => ExpansionKind::Equilibrium,
            SystemKind::Vdp => ExpansionKind::LimitCycle,
            _ => ExpansionKind::None,
        },
        k => k,
    };
    let needs_cycle = kind == ExpansionKind::LimitCycle
        || ctx.cfg.s_grid.as_ref().and_then(|g| g.line.as_ref()).is_some_and(|l| l.sigma.is_none());
    let cycle = if needs_cycle { Some(locate_cycle(ctx, &sys, &x0, tol)?) } else { None };
    let points = grid_points(ctx, cycle.as_ref().map(|i| i.omega))?;
    if let Some(bad) = points.iter().find(|s| !(s.re > 0.0)) {
        return Err(Error::RocViolation { re: bad.re, abscissa: 0.0 });
    }
    let t_max = ctx.cfg.s_grid.as_ref().and_then(|g| g.t_max).unwrap_or(horizon);
    let traj = dynsys::integrate(&sys, &x0, horizon.max(t_max), dt, tol)?;
    let y = traj.observe(&obs)?;
    let grid = LaplaceGrid::evaluate(&y, &points, t_max)?;

    let expansion: Option<PoleResidueSet> = match kind {
        ExpansionKind::None | ExpansionKind::Auto => None,
        ExpansionKind::Linear => {
            if sc.kind != SystemKind::Linear {
                return Err(Error::Config("expansion.kind: `linear` needs a linear system".into()));
            }
            let a = sc.linear_matrix()?;
            let rows = output_functionals(&obs_cfg, n);
            let sets: Vec<PoleResidueSet> =
                rows.iter().map(|cv| resolvent::linear_expansion(&a, cv, &x0)).collect::<Result<_>>()?;
            let first = &sets[0];
            let entries = first
                .entries
                .iter()
                .enumerate()
                .map(|(j, e)| PoleEntry {
                    pole: e.pole,
                    residue: sets.iter().map(|s| s.entries[j].residue[0]).collect(),
                    tag: e.tag,
                    indices: e.indices.clone(),
                })
                .collect();
            Some(PoleResidueSet { entries, roc_abscissa: first.roc_abscissa })
        }
        ExpansionKind::Equilibrium => {
            if sc.kind != SystemKind::QuadraticEquilibrium {
                return Err(Error::Config("expansion.kind: `equilibrium` needs the quadratic_equilibrium system".into()));
            }
            let p = sc.equilibrium_params()?;
            let idx = config::coordinate_indices(&obs_cfg)
                .ok_or_else(|| Error::Config("observables: equilibrium expansion needs coordinate observables".into()))?;
            Some(resolvent::quadratic_equilibrium_expansion(p.lambda1, p.lambda2, [x0[0], x0[1]], &idx)?)
        }
        ExpansionKind::LimitCycle => {
            let info = cycle.as_ref().expect("located above");
            let averaging = averaging_options(ctx, info.period, tol);
            let dtc = averaging.dt;
            let long = dynsys::integrate(&sys, &x0, averaging.t_avg + 0.5 * dtc, dtc, tol)?.observe(&obs)?;
            let stat = resolvent::stationary_residues(&long, info.omega, exp_cfg.m_max, averaging.t_avg, averaging.window)?;
            let non = if exp_cfg.k_max > 0 {
                let nu = info
                    .dominant_exponent()
                    .ok_or_else(|| Error::NoLimitCycle("cycle has no non-trivial exponent".into()))?;
                let dec = decompose::decompose(
                    &sys,
                    &x0,
                    &Attractor::Cycle { info, averaging },
                    &obs,
                    exp_cfg.fit_horizon,
                    dtc,
                    tol,
                )?;
                resolvent::nonstationary_residues(&dec.residual.observe(&obs)?, nu, info.omega, exp_cfg.k_max, exp_cfg.m_max)?
            } else {
                Default::default()
            };
            Some(resolvent::build_expansion_limit_cycle(info, &stat, &non, exp_cfg.k_max, exp_cfg.m_max)?)
        }
        ExpansionKind::Prony => {
            if y.dim() != 1 {
                return Err(Error::Config("expansion.kind: `prony` needs a scalar observable".into()));
            }
            let order = exp_cfg
                .prony_order
                .ok_or_else(|| Error::Config("expansion.prony_order: required for `prony`".into()))?;
            Some(modes::prony(&y.truncated(t_max).component(0), dt, order)?)
        }
    };

    let mut points_out = Vec::with_capacity(points.len());
    let mut worst: Option<f64> = None;
    for (k, &s) in points.iter().enumerate() {
        let numeric = &grid.values[k];
        let mut entry = json!({ "s": s, "numeric": numeric, "truncation_bound": grid.truncation_bound[k] });
        if let Some(set) = &expansion {
            match resolvent::expansion_eval(set, s) {
                Ok(v) => {
                    let rel = numeric
                        .iter()
                        .zip(&v)
                        .map(|(a, b)| (a - b).norm() / b.norm().max(f64::MIN_POSITIVE))
                        .fold(0.0, f64::max);
                    worst = Some(worst.unwrap_or(0.0).max(rel));
                    entry["expansion"] = json!(v);
                    entry["rel_error"] = json!(rel);
                }
                Err(e) => entry["expansion_error"] = json!(e.to_string()),
            }
        }
        points_out.push(entry);
    }

    let mut sink = ctx.sink(tol, &["dynsys", "resolvent", "limit_cycle", "phase", "modes"])?;
    sink.meta.set("horizon", horizon);
    sink.meta.set("dt", dt);
    sink.meta.set("t_max", grid.truncation_t);
    sink.meta.set("expansion", &exp_cfg);
    let header = grid.csv_header();
    sink.table("laplace_grid", &header, &grid.csv_rows())?;

    let mut report = json!({
        "points": points_out,
        "truncation_t": grid.truncation_t,
        "expansion_kind": kind,
        "max_rel_error": worst,
    });
    if let Some(info) = &cycle {
        report["Omega"] = json!(info.omega);
        report["T"] = json!(info.period);
    }
    if ctx.cfg.s_grid.as_ref().is_some_and(|g| g.line.is_some()) {
        let peaks: Vec<Value> = (0..grid.dim())
            .map(|j| {
                let p: Vec<Value> = resolvent::spectrum_peaks(&grid, j, 1e-3)
                    .into_iter()
                    .take(16)
                    .map(|(s, mag)| {
                        let mut v = json!({ "omega": s.im, "magnitude": mag });
                        if let Some(info) = &cycle {
                            v["harmonic"] = json!(s.im / info.omega);
                        }
                        v
                    })
                    .collect();
                json!(p)
            })
            .collect();
        report["peaks"] = json!(peaks);
    }
    if let Some(set) = &expansion {
        let energy = resolvent::explained_energy(set, &y.truncated(t_max));
        report["energy_fraction"] = json!(energy);
        report["continuous_spectrum_flag"] = json!(energy < resolvent::ENERGY_THRESHOLD);
        sink.json("expansion", set)?;
    }
    sink.json("resolvent", &report)?;
    Ok(finish(&sink, report))
}

/// Reads `t, y_1..y_m` from CSV; `#` lines are comments.
pub fn read_series_csv(path: &Path) -> Result<Signal> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Config(format!("input: cannot read {}: {e}", path.display())))?;
    let mut times = Vec::new();
    let mut data = Vec::new();
    let mut width = None;
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| Error::Config(format!("input: malformed CSV: {e}")))?;
        if width.is_none() {
            width = Some(rec.len());
        }
        let w = width.expect("set above");
        if w < 2 || rec.len() != w {
            return Err(Error::Config(format!("input: row {} has {} columns, expected at least 2 and consistent", i + 1, rec.len())));
        }
        let mut vals = Vec::with_capacity(w);
        for field in rec.iter() {
            let v: f64 = field
                .parse()
                .map_err(|_| Error::Config(format!("input: row {}: `{field}` is not a number", i + 1)))?;
            if !v.is_finite() {
                return Err(Error::Config(format!("input: row {}: non-finite value", i + 1)));
            }
            vals.push(v);
        }
        times.push(vals[0]);
        data.extend(vals[1..].iter().map(|&v| c(v, 0.0)));
    }
    if times.len() < 2 {
        return Err(Error::Config("input: need at least two rows".into()));
    }
    let dt = times[1] - times[0];
    if !(dt > 0.0) {
        return Err(Error::Config("input: time column must increase".into()));
    }
    for (k, w) in times.windows(2).enumerate() {
        if ((w[1] - w[0]) - dt).abs() > 1e-6 * dt {
            return Err(Error::Config(format!("input: non-uniform sampling at row {}", k + 2)));
        }
    }
    let m = width.expect("rows exist") - 1;
    Signal::new(times[0], dt, m, data).map_err(|e| Error::Config(format!("input: {e}")))
}

// Time series for the identification commands: CSV when given, else simulated.
fn load_series(ctx: &Context, input: Option<&Path>) -> Result<(Signal, f64, String)> {
    let path = input.map(Path::to_path_buf).or_else(|| ctx.cfg.input.as_ref().map(PathBuf::from));
    if let Some(path) = path {
        let tol = ctx.tol(dynsys::DEFAULT_TOL);
        return Ok((read_series_csv(&path)?, tol, path.display().to_string()));
    }
    let (sc, sys) = ctx.system(SystemKind::Vdp)?;
    let x0 = ctx.x0(sc.kind, sys.dim())?;
    let tol = ctx.tol(1e-10);
    let horizon = ctx.cfg.horizon.unwrap_or(100.0);
    let dt = ctx.cfg.dt.unwrap_or(0.01);
    let obs: Observable =
        config::build_observable(&ctx.observable_configs(vec![ObservableConfig::Coordinate { index: 0 }]), sys.dim())?;
    let y = dynsys::integrate(&sys, &x0, horizon, dt, tol)?.observe(&obs)?;
    Ok((y, tol, format!("simulated {}", sys.name())))
}

// Drops samples before `t_start` and keeps every `stride`-th one.
fn resample(signal: &Signal, t_start: f64, stride: usize) -> Result<Signal> {
    let skip = ((t_start - signal.t0()) / signal.dt() - 1e-9).ceil().max(0.0) as usize;
    if skip >= signal.len() {
        return Err(Error::Config("t_start: beyond the end of the data".into()));
    }
    let s = signal.skip(skip)?;
    let data: Vec<Complex64> = s.samples().step_by(stride).flatten().copied().collect();
    Signal::new(s.t0(), s.dt() * stride as f64, s.dim(), data)
}

fn cmd_dmd(ctx: &Context, input: Option<&Path>) -> Result<Value> {
    let (raw, tol, source) = load_series(ctx, input)?;
    let dc = ctx.cfg.dmd.clone().unwrap_or_default();
    let y = resample(&raw, dc.t_start, dc.stride)?;
    let rows: Vec<usize> = match &dc.components {
        Some(idx) => {
            if let Some(&bad) = idx.iter().find(|&&i| i >= y.dim()) {
                return Err(Error::Config(format!("dmd.components: index {bad} out of range")));
            }
            idx.clone()
        }
        None => (0..y.dim()).collect(),
    };
    let full = modes::snapshot_matrix(&y);
    let picked = full.select_rows(rows.iter());
    let snaps = modes::delay_embed(&picked, dc.depth)?;
    let est = modes::dmd(&snaps, y.dt(), dc.rank_tol)?;
    let set = est.to_pole_residue_set(rows.len());
    let mut sink = ctx.sink(tol, &["modes"])?;
    sink.meta.set("source", &source);
    sink.meta.set("dmd", &dc);
    let report = json!({
        "source": source,
        "dt": est.dt,
        "rank": est.rank,
        "cont_eigs": est.cont_eigs,
        "discrete_eigs": est.discrete_eigs,
        "amplitudes": est.amplitudes,
        "modes": est.modes,
        "reconstruction_error": est.reconstruction_error,
        "amplitude_condition": est.amplitude_condition,
        "ill_conditioned": est.ill_conditioned,
        "aliased": est.aliased,
        "poles": set,
    });
    sink.json("spectrum", &report)?;
    Ok(finish(&sink, report))
}

fn cmd_prony(ctx: &Context, input: Option<&Path>) -> Result<Value> {
    let (raw, tol, source) = load_series(ctx, input)?;
    let pc = ctx
        .cfg
        .prony
        .clone()
        .ok_or_else(|| Error::Config("prony: block with `order` required".into()))?;
    if pc.component >= raw.dim() {
        return Err(Error::Config(format!("prony.component: index {} out of range", pc.component)));
    }
    let y = resample(&raw, pc.t_start, pc.stride)?;
    let samples = y.component(pc.component);
    let mut set = modes::prony(&samples, y.dt(), pc.order)?;
    // Residues refer to the first retained sample; shift them to t = 0 of the data.
    let t_ref = y.t0();
    if t_ref != 0.0 {
        for e in &mut set.entries {
            let shift = (-e.pole * t_ref).exp();
            for r in &mut e.residue {
                *r *= shift;
            }
        }
    }
    let mut err = 0.0;
    let mut tot = 0.0;
    for (k, v) in samples.iter().enumerate() {
        let model = set.time_response(t_ref + k as f64 * y.dt())[0];
        err += (v - model).norm_sqr();
        tot += v.norm_sqr();
    }
    let sweep = pc.sweep.as_ref().map(|orders| modes::prony_sweep(&samples, y.dt(), orders));
    let mut sink = ctx.sink(tol, &["modes", "resolvent"])?;
    sink.meta.set("source", &source);
    sink.meta.set("prony", &pc);
    let report = json!({
        "source": source,
        "dt": y.dt(),
        "samples": samples.len(),
        "poles": set,
        "reconstruction_error": if tot > 0.0 { (err / tot).sqrt() } else { 0.0 },
        "sweep": sweep,
    });
    sink.json("prony", &report)?;
    Ok(finish(&sink, report))
}
