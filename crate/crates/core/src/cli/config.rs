//! Experiment configuration: one JSON document, unknown keys rejected.

use std::path::Path;

use nalgebra::DMatrix;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dynsys::{self, DynSystem, Monomial, Observable};
use crate::error::{Error, Result};
use crate::phase::Window;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub system: Option<SystemConfig>,
    pub x0: Option<Vec<f64>>,
    pub horizon: Option<f64>,
    pub dt: Option<f64>,
    pub tol: Option<f64>,
    pub observables: Option<Vec<ObservableConfig>>,
    /// Transient discarded before locating an attractor (s).
    pub settle: Option<f64>,
    pub averaging: Option<AveragingConfig>,
    pub strobe: Option<StrobeConfig>,
    pub torus: Option<TorusConfig>,
    pub s_grid: Option<SGridConfig>,
    pub expansion: Option<ExpansionConfig>,
    pub prony: Option<PronyConfig>,
    pub dmd: Option<DmdConfig>,
    /// CSV time series (`t, y_1..y_m`) used instead of simulating.
    pub input: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SystemKind {
    Linear,
    Vdp,
    CoupledVdp,
    QuadraticEquilibrium,
    Custom,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    pub kind: SystemKind,
    #[serde(default)]
    pub params: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinearParams {
    pub a: Option<Vec<Vec<f64>>>,
    pub preset: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VdpParams {
    #[serde(default = "d_eps")]
    pub eps: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoupledVdpParams {
    #[serde(default = "d_eps")]
    pub eps: f64,
    #[serde(default = "d_kx")]
    pub kx: f64,
    #[serde(default = "d_ky")]
    pub ky: f64,
    #[serde(default = "d_kc")]
    pub kc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EquilibriumParams {
    #[serde(default = "d_l1")]
    pub lambda1: f64,
    #[serde(default = "d_l2")]
    pub lambda2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CustomParams {
    #[serde(default = "d_custom")]
    pub name: String,
    /// `field[i]` lists the monomials of the i-th right-hand side.
    pub field: Vec<Vec<Monomial>>,
}

fn d_eps() -> f64 {
    0.3
}
fn d_kx() -> f64 {
    1.0
}
fn d_ky() -> f64 {
    3.0
}
fn d_kc() -> f64 {
    0.5
}
fn d_l1() -> f64 {
    -1.0
}
fn d_l2() -> f64 {
    -3.0
}
fn d_custom() -> String {
    "custom".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ObservableConfig {
    Coordinate { index: usize },
    Linear { c: Vec<f64> },
    State,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AveragingConfig {
    /// Averaging horizon in periods.
    #[serde(default = "d_periods")]
    pub periods: f64,
    #[serde(default = "d_spp")]
    pub samples_per_period: usize,
    #[serde(default = "d_window")]
    pub window: Window,
    #[serde(default = "d_rel_gap")]
    pub rel_gap: f64,
    #[serde(default = "d_abs_gap")]
    pub abs_gap: f64,
}

fn d_periods() -> f64 {
    400.0
}
fn d_spp() -> usize {
    512
}
fn d_window() -> Window {
    Window::Rectangular
}
fn d_rel_gap() -> f64 {
    1e-3
}
fn d_abs_gap() -> f64 {
    1e-10
}

impl Default for AveragingConfig {
    fn default() -> Self {
        Self { periods: d_periods(), samples_per_period: d_spp(), window: d_window(), rel_gap: d_rel_gap(), abs_gap: d_abs_gap() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StrobeConfig {
    #[serde(default)]
    pub component: usize,
    #[serde(default)]
    pub offset: f64,
    #[serde(default = "d_discard")]
    pub discard_fraction: f64,
    #[serde(default = "d_floor")]
    pub floor: f64,
    #[serde(default = "d_min_peak")]
    pub min_peak: f64,
}

fn d_discard() -> f64 {
    0.3
}
fn d_floor() -> f64 {
    1e-10
}
fn d_min_peak() -> f64 {
    1e-6
}

impl Default for StrobeConfig {
    fn default() -> Self {
        Self { component: 0, offset: 0.0, discard_fraction: d_discard(), floor: d_floor(), min_peak: d_min_peak() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TorusConfig {
    #[serde(default = "d_freqs")]
    pub frequencies: usize,
    #[serde(default = "d_t_avg")]
    pub t_avg: f64,
    #[serde(default = "d_torus_dt")]
    pub dt: f64,
    #[serde(default = "d_span")]
    pub search_span: f64,
}

fn d_freqs() -> usize {
    2
}
fn d_t_avg() -> f64 {
    1000.0
}
fn d_torus_dt() -> f64 {
    0.01
}
fn d_span() -> f64 {
    20000.0
}

impl Default for TorusConfig {
    fn default() -> Self {
        Self { frequencies: d_freqs(), t_avg: d_t_avg(), dt: d_torus_dt(), search_span: d_span() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SGridConfig {
    /// Explicit points `[re, im]`.
    pub points: Option<Vec<[f64; 2]>>,
    /// Shifted line `σ + iω`.
    pub line: Option<LineGrid>,
    /// Cartesian product of real and imaginary ranges.
    pub rect: Option<RectGrid>,
    /// Truncation time of the numerical transform; defaults to the horizon.
    pub t_max: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LineGrid {
    /// Defaults to `0.05 Ω` when a limit cycle is available.
    pub sigma: Option<f64>,
    pub omega_min: f64,
    pub omega_max: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RectGrid {
    pub re_min: f64,
    pub re_max: f64,
    pub re_count: usize,
    pub im_min: f64,
    pub im_max: f64,
    pub im_count: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExpansionKind {
    Auto,
    Linear,
    LimitCycle,
    Equilibrium,
    Prony,
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExpansionConfig {
    #[serde(default = "d_exp_kind")]
    pub kind: ExpansionKind,
    #[serde(default = "d_k_max")]
    pub k_max: u32,
    #[serde(default = "d_m_max")]
    pub m_max: u32,
    /// Horizon of the residual fit for non-stationary residues (s).
    #[serde(default = "d_fit_horizon")]
    pub fit_horizon: f64,
    /// Model order when `kind = prony`.
    pub prony_order: Option<usize>,
}

fn d_exp_kind() -> ExpansionKind {
    ExpansionKind::Auto
}
fn d_k_max() -> u32 {
    crate::resolvent::DEFAULT_K_MAX
}
fn d_m_max() -> u32 {
    crate::resolvent::DEFAULT_M_MAX
}
fn d_fit_horizon() -> f64 {
    100.0
}

impl Default for ExpansionConfig {
    fn default() -> Self {
        Self { kind: d_exp_kind(), k_max: d_k_max(), m_max: d_m_max(), fit_horizon: d_fit_horizon(), prony_order: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PronyConfig {
    pub order: usize,
    /// Extra orders for the pole-stability diagnostic.
    pub sweep: Option<Vec<usize>>,
    #[serde(default)]
    pub component: usize,
    /// Samples before this time are dropped (s).
    #[serde(default)]
    pub t_start: f64,
    #[serde(default = "d_stride")]
    pub stride: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DmdConfig {
    #[serde(default = "d_depth")]
    pub depth: usize,
    #[serde(default = "d_rank_tol")]
    pub rank_tol: f64,
    #[serde(default = "d_stride")]
    pub stride: usize,
    #[serde(default)]
    pub t_start: f64,
    /// Output columns to use; all when absent.
    pub components: Option<Vec<usize>>,
}

fn d_depth() -> usize {
    1
}
fn d_rank_tol() -> f64 {
    crate::modes::DEFAULT_RANK_TOL
}
fn d_stride() -> usize {
    1
}

impl Default for DmdConfig {
    fn default() -> Self {
        Self { depth: d_depth(), rank_tol: d_rank_tol(), stride: d_stride(), t_start: 0.0, components: None }
    }
}

fn parse_at<T: DeserializeOwned>(value: &serde_json::Value, prefix: &str) -> Result<T> {
    serde_path_to_error::deserialize(value).map_err(|e| {
        let path = e.path().to_string();
        let field = if path == "." { prefix.to_string() } else { format!("{prefix}.{path}") };
        Error::Config(format!("{field}: {}", e.inner()))
    })
}

impl ExperimentConfig {
    /// Parses and validates a JSON document.
    pub fn from_json(text: &str) -> Result<Self> {
        let mut de = serde_json::Deserializer::from_str(text);
        let cfg: Self = serde_path_to_error::deserialize(&mut de).map_err(|e| {
            let path = e.path().to_string();
            Error::Config(format!("{path}: {}", e.inner()))
        })?;
        de.end().map_err(|e| Error::Config(format!("trailing characters: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Canonical JSON (sorted keys) used for hashing.
    pub fn canonical_json(&self) -> String {
        let value = serde_json::to_value(self).expect("config serializes");
        serde_json::to_string(&value).expect("value serializes")
    }

    pub fn sha256(&self) -> String {
        let digest = Sha256::digest(self.canonical_json().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Rejects non-finite and non-positive numeric fields.
    pub fn validate(&self) -> Result<()> {
        fn finite(name: &str, v: f64) -> Result<()> {
            if v.is_finite() {
                Ok(())
            } else {
                Err(Error::Config(format!("{name}: must be finite")))
            }
        }
        fn positive(name: &str, v: f64) -> Result<()> {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::Config(format!("{name}: must be positive and finite, got {v}")))
            }
        }
        if let Some(x0) = &self.x0 {
            for (i, &v) in x0.iter().enumerate() {
                finite(&format!("x0[{i}]"), v)?;
            }
        }
        for (name, v) in [("horizon", self.horizon), ("dt", self.dt), ("tol", self.tol)] {
            if let Some(v) = v {
                positive(name, v)?;
            }
        }
        if let Some(v) = self.settle {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Config(format!("settle: must be non-negative and finite, got {v}")));
            }
        }
        if let Some(a) = &self.averaging {
            positive("averaging.periods", a.periods)?;
            if a.samples_per_period < 4 {
                return Err(Error::Config("averaging.samples_per_period: must be at least 4".into()));
            }
            positive("averaging.rel_gap", a.rel_gap)?;
            positive("averaging.abs_gap", a.abs_gap)?;
        }
        if let Some(s) = &self.strobe {
            finite("strobe.offset", s.offset)?;
            if !(0.0..1.0).contains(&s.discard_fraction) {
                return Err(Error::Config("strobe.discard_fraction: must lie in [0, 1)".into()));
            }
            positive("strobe.floor", s.floor)?;
            positive("strobe.min_peak", s.min_peak)?;
        }
        if let Some(t) = &self.torus {
            positive("torus.t_avg", t.t_avg)?;
            positive("torus.dt", t.dt)?;
            positive("torus.search_span", t.search_span)?;
            if t.frequencies == 0 {
                return Err(Error::Config("torus.frequencies: must be at least 1".into()));
            }
        }
        if let Some(g) = &self.s_grid {
            let given = [g.points.is_some(), g.line.is_some(), g.rect.is_some()].iter().filter(|&&b| b).count();
            if given != 1 {
                return Err(Error::Config("s_grid: give exactly one of points, line, rect".into()));
            }
            if let Some(pts) = &g.points {
                for (i, p) in pts.iter().enumerate() {
                    finite(&format!("s_grid.points[{i}]"), p[0])?;
                    finite(&format!("s_grid.points[{i}]"), p[1])?;
                }
            }
            if let Some(l) = &g.line {
                if let Some(s) = l.sigma {
                    finite("s_grid.line.sigma", s)?;
                }
                finite("s_grid.line.omega_min", l.omega_min)?;
                finite("s_grid.line.omega_max", l.omega_max)?;
                if l.count == 0 {
                    return Err(Error::Config("s_grid.line.count: must be at least 1".into()));
                }
            }
            if let Some(r) = &g.rect {
                for (n, v) in [("re_min", r.re_min), ("re_max", r.re_max), ("im_min", r.im_min), ("im_max", r.im_max)] {
                    finite(&format!("s_grid.rect.{n}"), v)?;
                }
                if r.re_count == 0 || r.im_count == 0 {
                    return Err(Error::Config("s_grid.rect: counts must be at least 1".into()));
                }
            }
            if let Some(t) = g.t_max {
                positive("s_grid.t_max", t)?;
            }
        }
        if let Some(e) = &self.expansion {
            positive("expansion.fit_horizon", e.fit_horizon)?;
        }
        if let Some(p) = &self.prony {
            if p.order == 0 {
                return Err(Error::Config("prony.order: must be at least 1".into()));
            }
            if p.stride == 0 {
                return Err(Error::Config("prony.stride: must be at least 1".into()));
            }
            finite("prony.t_start", p.t_start)?;
        }
        if let Some(d) = &self.dmd {
            if d.depth == 0 || d.stride == 0 {
                return Err(Error::Config("dmd: depth and stride must be at least 1".into()));
            }
            positive("dmd.rank_tol", d.rank_tol)?;
            finite("dmd.t_start", d.t_start)?;
        }
        if let Some(sys) = &self.system {
            sys.build()?;
        }
        Ok(())
    }

    pub fn system_or(&self, default: SystemKind) -> SystemConfig {
        self.system.clone().unwrap_or(SystemConfig { kind: default, params: serde_json::Value::Null })
    }
}

fn params_value(v: &serde_json::Value) -> serde_json::Value {
    if v.is_null() {
        serde_json::Value::Object(Default::default())
    } else {
        v.clone()
    }
}

impl SystemConfig {
    pub fn linear_matrix(&self) -> Result<DMatrix<f64>> {
        let p: LinearParams = parse_at(&params_value(&self.params), "system.params")?;
        match (p.a, p.preset) {
            (Some(rows), None) => {
                let n = rows.len();
                if n == 0 || rows.iter().any(|r| r.len() != n) {
                    return Err(Error::Config("system.params.a: must be a non-empty square matrix".into()));
                }
                if rows.iter().flatten().any(|v| !v.is_finite()) {
                    return Err(Error::Config("system.params.a: entries must be finite".into()));
                }
                Ok(DMatrix::from_row_iterator(n, n, rows.into_iter().flatten()))
            }
            (None, Some(name)) => dynsys::linear_preset(&name).map_err(|e| Error::Config(format!("system.params.preset: {e}"))),
            _ => Err(Error::Config("system.params: give exactly one of `a` or `preset`".into())),
        }
    }

    pub fn equilibrium_params(&self) -> Result<EquilibriumParams> {
        parse_at(&params_value(&self.params), "system.params")
    }

    pub fn build(&self) -> Result<DynSystem> {
        let params = params_value(&self.params);
        let check = |name: &str, v: f64| -> Result<()> {
            if v.is_finite() {
                Ok(())
            } else {
                Err(Error::Config(format!("system.params.{name}: must be finite")))
            }
        };
        match self.kind {
            SystemKind::Linear => dynsys::builtin_linear(&self.linear_matrix()?),
            SystemKind::Vdp => {
                let p: VdpParams = parse_at(&params, "system.params")?;
                check("eps", p.eps)?;
                Ok(dynsys::builtin_vdp(p.eps))
            }
            SystemKind::CoupledVdp => {
                let p: CoupledVdpParams = parse_at(&params, "system.params")?;
                for (n, v) in [("eps", p.eps), ("kx", p.kx), ("ky", p.ky), ("kc", p.kc)] {
                    check(n, v)?;
                }
                Ok(dynsys::builtin_coupled_vdp(p.eps, p.kx, p.ky, p.kc))
            }
            SystemKind::QuadraticEquilibrium => {
                let p = self.equilibrium_params()?;
                dynsys::builtin_quadratic_equilibrium(p.lambda1, p.lambda2)
                    .map_err(|e| Error::Config(format!("system.params: {e}")))
            }
            SystemKind::Custom => {
                let p: CustomParams = parse_at(&params, "system.params")?;
                dynsys::polynomial_system(&p.name, p.field).map_err(|e| Error::Config(format!("system.params.field: {e}")))
            }
        }
    }
}

/// Stacks the configured observables into one output map.
pub fn build_observable(configs: &[ObservableConfig], n: usize) -> Result<Observable> {
    if configs.is_empty() {
        return Err(Error::Config("observables: list is empty".into()));
    }
    let mut parts = Vec::with_capacity(configs.len());
    for (i, oc) in configs.iter().enumerate() {
        let obs = match oc {
            ObservableConfig::Coordinate { index } => Observable::coordinate(n, *index),
            ObservableConfig::Linear { c } => {
                if c.len() != n {
                    return Err(Error::Config(format!("observables[{i}].c: expected {n} entries, got {}", c.len())));
                }
                Observable::linear(c)
            }
            ObservableConfig::State => Observable::state(n),
        }
        .map_err(|e| Error::Config(format!("observables[{i}]: {e}")))?;
        parts.push(obs);
    }
    if parts.len() == 1 {
        return Ok(parts.pop().expect("one part"));
    }
    let m: usize = parts.iter().map(Observable::dim).sum();
    let label = parts.iter().map(|p| p.label().to_string()).collect::<Vec<_>>().join("+");
    Observable::new(&label, n, m, move |x, out| {
        let mut off = 0;
        for p in &parts {
            let k = p.dim();
            p.eval_into(x, &mut out[off..off + k]);
            off += k;
        }
    })
}

/// State components picked out by coordinate observables, if all are coordinates.
pub fn coordinate_indices(configs: &[ObservableConfig]) -> Option<Vec<usize>> {
    configs
        .iter()
        .map(|o| match o {
            ObservableConfig::Coordinate { index } => Some(*index),
            _ => None,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_are_rejected() {
        let err = ExperimentConfig::from_json(r#"{"horizon": 1.0, "bogus": 2}"#).unwrap_err();
        assert!(err.to_string().contains("bogus"), "{err}");
        let err = ExperimentConfig::from_json(r#"{"system": {"kind": "vdp", "params": {"eps": 0.3, "mu": 1}}}"#).unwrap_err();
        assert!(err.to_string().contains("system.params"), "{err}");
    }

    #[test]
    fn bad_kind_names_the_field() {
        let err = ExperimentConfig::from_json(r#"{"system": {"kind": "lorenz"}}"#).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
        assert!(err.to_string().contains("system.kind"), "{err}");
    }

    #[test]
    fn defaults_fill_params() {
        let cfg = ExperimentConfig::from_json(r#"{"system": {"kind": "coupled_vdp", "params": {"kc": 0}}}"#).unwrap();
        let sys = cfg.system.unwrap().build().unwrap();
        assert_eq!(sys.dim(), 4);
    }

    #[test]
    fn non_positive_numbers_are_rejected() {
        assert!(ExperimentConfig::from_json(r#"{"dt": 0}"#).is_err());
        assert!(ExperimentConfig::from_json(r#"{"horizon": -1}"#).is_err());
        assert!(ExperimentConfig::from_json(r#"{"x0": [1e999]}"#).is_err());
    }

    #[test]
    fn hash_is_stable() {
        let a = ExperimentConfig::from_json(r#"{"horizon": 10, "dt": 0.1}"#).unwrap();
        let b = ExperimentConfig::from_json(r#"{"dt": 0.1, "horizon": 10}"#).unwrap();
        assert_eq!(a.sha256(), b.sha256());
        assert_eq!(a.sha256().len(), 64);
    }

    #[test]
    fn linear_matrix_forms() {
        let sys = SystemConfig { kind: SystemKind::Linear, params: serde_json::json!({"a": [[-1, 0], [0, -2]]}) };
        assert_eq!(sys.linear_matrix().unwrap()[(1, 1)], -2.0);
        let sys = SystemConfig { kind: SystemKind::Linear, params: serde_json::json!({"preset": "cascade"}) };
        assert_eq!(sys.linear_matrix().unwrap().nrows(), 3);
        let sys = SystemConfig { kind: SystemKind::Linear, params: serde_json::json!({"a": [[1, 2]]}) };
        assert!(sys.build().is_err());
    }

    #[test]
    fn stacked_observables() {
        let obs = build_observable(
            &[ObservableConfig::Coordinate { index: 1 }, ObservableConfig::Linear { c: vec![1.0, 1.0] }],
            2,
        )
        .unwrap();
        let y = obs.eval(&[2.0, 3.0]).unwrap();
        assert_eq!(y.len(), 2);
        assert_eq!(y[0].re, 3.0);
        assert_eq!(y[1].re, 5.0);
    }
}
