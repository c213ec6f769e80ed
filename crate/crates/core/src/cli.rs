//! Batch driver: an INI-style run configuration, one subcommand per
//! computation, and CSV or JSON output.
//!
//! ```text
//! [model]
//! omega_V = 1
//! g = 0.2
//!
//! [density]
//! variant = flat
//! gamma_total = 0.2
//! ```

use std::cell::Cell as Flag;
use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};

use crate::denominator::{self, PoleSearch, Rectangle, ResonancePole, Sheet};
use crate::error::Error;
use crate::foliation::{self, FoliationGrid, KProjection, LaxPhillips};
use crate::galilean::{self, KinematicConfig, KineticForm};
use crate::model::{EnergyProfile, FormFactorProfile, Model, ModelParameters, SpectralDensity};
use crate::quad::Tolerance;
use crate::smatrix;
use crate::survival::{self, MeasureOptions};

/// Environment variable holding the worker thread count.
pub const THREADS_ENV: &str = "LPLAB_THREADS";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Numerical(#[from] Error),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl CliError {
    /// 1 for configuration and validation problems, 2 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Numerical(Error::Invalid(_)) => 1,
            CliError::Numerical(_) => 2,
            _ => 1,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Csv,
    Json,
}

impl FromStr for Format {
    type Err = CliError;
    fn from_str(s: &str) -> Result<Self, CliError> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            _ => Err(CliError::Config(format!("unknown output format `{s}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Subcommand {
    Density,
    Hfunc,
    Pole,
    Smatrix,
    Evolve,
    Survival,
    Galilean,
    Report,
}

impl Subcommand {
    pub const ALL: [Subcommand; 8] = [
        Subcommand::Density,
        Subcommand::Hfunc,
        Subcommand::Pole,
        Subcommand::Smatrix,
        Subcommand::Evolve,
        Subcommand::Survival,
        Subcommand::Galilean,
        Subcommand::Report,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Subcommand::Density => "density",
            Subcommand::Hfunc => "hfunc",
            Subcommand::Pole => "pole",
            Subcommand::Smatrix => "smatrix",
            Subcommand::Evolve => "evolve",
            Subcommand::Survival => "survival",
            Subcommand::Galilean => "galilean",
            Subcommand::Report => "report",
        }
    }
}

impl fmt::Display for Subcommand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Subcommand {
    type Err = CliError;
    fn from_str(s: &str) -> Result<Self, CliError> {
        Subcommand::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| CliError::Config(format!("unknown subcommand `{s}`")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    /// Foliation grid size, a power of two.
    pub n: usize,
    pub omega: f64,
    /// Points of the real-axis tables.
    pub samples: usize,
    pub sigma_min: f64,
    pub sigma_max: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ToleranceConfig {
    pub dispersion_abs: f64,
    pub dispersion_rel: f64,
    pub dispersion_accept: f64,
    pub max_intervals: usize,
    pub force_quadrature: bool,
    pub pole_residual: f64,
    pub pole_step: f64,
    pub pole_max_iterations: usize,
    pub survival_refine: f64,
    pub survival_max_doublings: usize,
    pub k_tol: f64,
    pub k_max_iterations: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoleConfig {
    pub rect: Rectangle,
    pub nx: usize,
    pub ny: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SmatrixConfig {
    /// Points of the winding and factorization scans.
    pub winding_n: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvolveConfig {
    pub taus: Vec<f64>,
    pub composition: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SurvivalConfig {
    pub taus: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GalileanConfig {
    pub kinematics: KinematicConfig,
    pub c_list: Vec<f64>,
    pub kinetic_form: KineticForm,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutputConfig {
    pub dir: String,
    pub format: Format,
}

/// A fully resolved run configuration; every default has been filled in.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub model: ModelParameters,
    pub density: SpectralDensity,
    pub grid: GridConfig,
    pub tolerances: ToleranceConfig,
    pub poles: PoleConfig,
    pub smatrix: SmatrixConfig,
    pub evolve: EvolveConfig,
    pub survival: SurvivalConfig,
    pub galilean: GalileanConfig,
    pub output: OutputConfig,
}

impl RunConfig {
    /// SHA-256 of the canonical JSON form, hex encoded.
    pub fn hash(&self) -> String {
        let text = serde_json::to_string(self).expect("configuration serializes");
        hex::encode(Sha256::digest(text.as_bytes()))
    }

    /// Recovers the configuration embedded in a report.
    pub fn from_report(text: &str) -> Result<RunConfig, CliError> {
        let v: Value = serde_json::from_str(text).map_err(|e| CliError::Config(format!("report: {e}")))?;
        let cfg = v
            .get("config")
            .cloned()
            .ok_or_else(|| CliError::Config("report has no `config` entry".into()))?;
        serde_json::from_value(cfg).map_err(|e| CliError::Config(format!("report config: {e}")))
    }

    pub fn build_model(&self) -> Result<Model, CliError> {
        let mut m = Model::new(self.model, self.density.clone())?;
        let t = &self.tolerances;
        m.options.force_quadrature = t.force_quadrature;
        m.options.tolerance = Tolerance {
            abs: t.dispersion_abs,
            rel: t.dispersion_rel,
            max_intervals: t.max_intervals,
        };
        m.options.accept = t.dispersion_accept;
        Ok(m)
    }

    pub fn pole_search(&self) -> PoleSearch {
        PoleSearch {
            max_iterations: self.tolerances.pole_max_iterations,
            residual_tol: self.tolerances.pole_residual,
            step_tol: self.tolerances.pole_step,
            ..PoleSearch::default()
        }
    }

    pub fn sample_grid(&self) -> Vec<f64> {
        let g = &self.grid;
        if g.samples == 1 {
            return vec![g.sigma_min];
        }
        (0..g.samples)
            .map(|i| g.sigma_min + (g.sigma_max - g.sigma_min) * i as f64 / (g.samples - 1) as f64)
            .collect()
    }
}

// ---------------------------------------------------------------------------
// INI parsing

const SECTIONS: [&str; 10] = [
    "model",
    "density",
    "grid",
    "output",
    "tolerances",
    "poles",
    "smatrix",
    "evolve",
    "survival",
    "galilean",
];

struct Entry {
    value: String,
    line: usize,
    used: Flag<bool>,
}

struct Ini {
    sections: BTreeMap<String, BTreeMap<String, Entry>>,
}

fn parse_ini(text: &str) -> Result<Ini, CliError> {
    let mut sections: BTreeMap<String, BTreeMap<String, Entry>> = BTreeMap::new();
    let mut current: Option<String> = None;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split(['#', ';']).next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        if let Some(rest) = content.strip_prefix('[') {
            let name = rest
                .strip_suffix(']')
                .ok_or_else(|| CliError::Parse {
                    line,
                    msg: format!("malformed section header `{content}`"),
                })?
                .trim()
                .to_ascii_lowercase();
            if !SECTIONS.contains(&name.as_str()) {
                return Err(CliError::Parse {
                    line,
                    msg: format!("unknown section [{name}]"),
                });
            }
            sections.entry(name.clone()).or_default();
            current = Some(name);
            continue;
        }
        let (key, value) = content.split_once('=').ok_or_else(|| CliError::Parse {
            line,
            msg: format!("expected `key = value`, found `{content}`"),
        })?;
        let section = current.as_ref().ok_or_else(|| CliError::Parse {
            line,
            msg: "key outside of any section".into(),
        })?;
        let key = key.trim().to_ascii_lowercase();
        if key.is_empty() {
            return Err(CliError::Parse {
                line,
                msg: "empty key".into(),
            });
        }
        let map = sections.get_mut(section).expect("section registered");
        if let Some(prev) = map.get(&key) {
            return Err(CliError::Parse {
                line,
                msg: format!("duplicate key `{key}` (first set on line {})", prev.line),
            });
        }
        map.insert(
            key,
            Entry {
                value: value.trim().to_string(),
                line,
                used: Flag::new(false),
            },
        );
    }
    Ok(Ini { sections })
}

struct Sec<'a> {
    name: &'static str,
    map: Option<&'a BTreeMap<String, Entry>>,
}

impl Ini {
    fn sec(&self, name: &'static str) -> Sec<'_> {
        Sec {
            name,
            map: self.sections.get(name),
        }
    }

    fn reject_unused(&self) -> Result<(), CliError> {
        let mut first: Option<(usize, String)> = None;
        for (sec, map) in &self.sections {
            for (key, e) in map {
                if !e.used.get() && first.as_ref().map_or(true, |f| e.line < f.0) {
                    first = Some((e.line, format!("unknown key `{key}` in [{sec}]")));
                }
            }
        }
        match first {
            Some((line, msg)) => Err(CliError::Parse { line, msg }),
            None => Ok(()),
        }
    }
}

impl<'a> Sec<'a> {
    fn entry(&self, key: &str) -> Option<&'a Entry> {
        let e = self.map?.get(key)?;
        e.used.set(true);
        Some(e)
    }

    fn line(&self, key: &str) -> usize {
        self.map.and_then(|m| m.get(key)).map_or(0, |e| e.line)
    }

    fn missing(&self, key: &str) -> CliError {
        CliError::Config(format!("missing key `{key}` in [{}]", self.name))
    }

    fn bad(&self, e: &Entry, key: &str, what: &str) -> CliError {
        CliError::Parse {
            line: e.line,
            msg: format!("invalid {what} `{}` for key `{key}`", e.value),
        }
    }

    fn opt_f64(&self, key: &str) -> Result<Option<f64>, CliError> {
        match self.entry(key) {
            None => Ok(None),
            Some(e) => e.value.parse::<f64>().map(Some).map_err(|_| self.bad(e, key, "number")),
        }
    }

    fn f64(&self, key: &str, default: f64) -> Result<f64, CliError> {
        Ok(self.opt_f64(key)?.unwrap_or(default))
    }

    fn req_f64(&self, key: &str) -> Result<f64, CliError> {
        self.opt_f64(key)?.ok_or_else(|| self.missing(key))
    }

    fn usize(&self, key: &str, default: usize) -> Result<usize, CliError> {
        match self.entry(key) {
            None => Ok(default),
            Some(e) => e.value.parse::<usize>().map_err(|_| self.bad(e, key, "count")),
        }
    }

    fn bool(&self, key: &str, default: bool) -> Result<bool, CliError> {
        match self.entry(key) {
            None => Ok(default),
            Some(e) => match e.value.to_ascii_lowercase().as_str() {
                "true" | "yes" | "1" | "on" => Ok(true),
                "false" | "no" | "0" | "off" => Ok(false),
                _ => Err(self.bad(e, key, "boolean")),
            },
        }
    }

    fn str(&self, key: &str) -> Option<&'a str> {
        self.entry(key).map(|e| e.value.as_str())
    }

    fn list(&self, key: &str) -> Result<Option<Vec<f64>>, CliError> {
        match self.entry(key) {
            None => Ok(None),
            Some(e) => e
                .value
                .split(',')
                .map(|t| t.trim().parse::<f64>().map_err(|_| self.bad(e, key, "number list")))
                .collect::<Result<Vec<_>, _>>()
                .map(Some),
        }
    }

    fn vec3(&self, key: &str, default: [f64; 3]) -> Result<[f64; 3], CliError> {
        match self.list(key)? {
            None => Ok(default),
            Some(v) if v.len() == 3 => Ok([v[0], v[1], v[2]]),
            Some(_) => Err(CliError::Parse {
                line: self.line(key),
                msg: format!("key `{key}` needs three components"),
            }),
        }
    }
}

fn parse_density(sec: &Sec<'_>) -> Result<SpectralDensity, CliError> {
    let variant = sec.str("variant").ok_or_else(|| sec.missing("variant"))?;
    Ok(match variant.to_ascii_lowercase().as_str() {
        "flat" => SpectralDensity::Flat {
            gamma_total: sec.req_f64("gamma_total")?,
        },
        "lorentzian" => SpectralDensity::Lorentzian {
            center: sec.req_f64("center")?,
            width: sec.req_f64("width")?,
        },
        "gaussian" => SpectralDensity::Gaussian {
            center: sec.req_f64("center")?,
            width: sec.req_f64("width")?,
        },
        "tabulated" => SpectralDensity::Tabulated {
            grid: sec.list("grid")?.ok_or_else(|| sec.missing("grid"))?,
            values: sec.list("values")?.ok_or_else(|| sec.missing("values"))?,
        },
        "form_factor" => {
            let profile = match sec.str("profile").unwrap_or("gaussian") {
                "gaussian" => EnergyProfile::Gaussian {
                    center: sec.req_f64("center")?,
                    width: sec.req_f64("width")?,
                    amplitude: sec.f64("amplitude", 1.0)?,
                },
                "constant" => EnergyProfile::Constant(sec.f64("amplitude", 1.0)?),
                other => {
                    return Err(CliError::Parse {
                        line: sec.line("profile"),
                        msg: format!("unknown profile `{other}`"),
                    })
                }
            };
            let comps = sec.list("components")?.unwrap_or_else(|| vec![1.0]);
            let mut ff = FormFactorProfile::factorized(
                profile,
                comps.into_iter().map(|c| Complex64::new(c, 0.0)).collect(),
            );
            ff.rapidity_cutoff = sec.f64("rapidity_cutoff", ff.rapidity_cutoff)?;
            ff.support = (
                sec.f64("support_min", ff.support.0)?,
                sec.f64("support_max", ff.support.1)?,
            );
            SpectralDensity::FromFormFactor(ff)
        }
        other => {
            return Err(CliError::Parse {
                line: sec.line("variant"),
                msg: format!("unknown density variant `{other}`"),
            })
        }
    })
}

/// Parses and validates a run configuration.
pub fn parse_config(text: &str) -> Result<RunConfig, CliError> {
    let ini = parse_ini(text)?;

    let m = ini.sec("model");
    let model = ModelParameters {
        omega_v: m.req_f64("omega_v")?,
        g: m.f64("g", 1.0)?,
        m_v: m.f64("m_v", 2.0)?,
        m_n: m.f64("m_n", 1.0)?,
        m_theta: m.f64("m_theta", 1.0)?,
        p: [m.f64("p0", 0.0)?, m.f64("p1", 0.0)?],
    };
    let density = parse_density(&ini.sec("density"))?;

    let g = ini.sec("grid");
    let n = g.usize("n", FoliationGrid::DEFAULT_N)?;
    if !n.is_power_of_two() || n < 2 {
        return Err(CliError::Parse {
            line: g.line("n"),
            msg: "N must be a power of two".into(),
        });
    }
    let omega = g.f64("omega", FoliationGrid::DEFAULT_OMEGA)?;
    let (lo, hi) = match &density {
        SpectralDensity::Tabulated { grid, .. } if !grid.is_empty() => (grid[0], grid[grid.len() - 1]),
        _ => (-omega, omega),
    };
    let grid = GridConfig {
        n,
        omega,
        samples: g.usize("samples", 1001)?,
        sigma_min: g.f64("sigma_min", lo)?,
        sigma_max: g.f64("sigma_max", hi)?,
    };

    let t = ini.sec("tolerances");
    let dd = crate::model::DispersionOptions::default();
    let ps = PoleSearch::default();
    let ms = MeasureOptions::default();
    let (k_tol, k_max) = match KProjection::default() {
        KProjection::Alternating { tol, max_iterations } => (tol, max_iterations),
        KProjection::Composition => (0.0, 1),
    };
    let tolerances = ToleranceConfig {
        dispersion_abs: t.f64("dispersion_abs", dd.tolerance.abs)?,
        dispersion_rel: t.f64("dispersion_rel", dd.tolerance.rel)?,
        dispersion_accept: t.f64("dispersion_accept", dd.accept)?,
        max_intervals: t.usize("max_intervals", dd.tolerance.max_intervals)?,
        force_quadrature: t.bool("force_quadrature", false)?,
        pole_residual: t.f64("pole_residual", ps.residual_tol)?,
        pole_step: t.f64("pole_step", ps.step_tol)?,
        pole_max_iterations: t.usize("pole_max_iterations", ps.max_iterations)?,
        survival_refine: t.f64("survival_refine", ms.refine_tol)?,
        survival_max_doublings: t.usize("survival_max_doublings", ms.max_doublings)?,
        k_tol: t.f64("k_tol", k_tol)?,
        k_max_iterations: t.usize("k_max_iterations", k_max)?,
    };

    let p = ini.sec("poles");
    let w = model.omega_v;
    let poles = PoleConfig {
        rect: Rectangle::new(
            (p.f64("re_min", w - 2.0)?, p.f64("re_max", w + 2.0)?),
            (p.f64("im_min", -1.0)?, p.f64("im_max", 0.0)?),
        ),
        nx: p.usize("nx", 9)?,
        ny: p.usize("ny", 5)?,
    };

    let s = ini.sec("smatrix");
    let smatrix = SmatrixConfig {
        winding_n: s.usize("winding_n", 4096)?,
    };

    let e = ini.sec("evolve");
    let composition = match e.str("mode").unwrap_or("alternating") {
        "alternating" => false,
        "composition" => true,
        other => {
            return Err(CliError::Parse {
                line: e.line("mode"),
                msg: format!("unknown projection mode `{other}`"),
            })
        }
    };
    let evolve = EvolveConfig {
        taus: e.list("taus")?.unwrap_or_else(|| vec![0.5, 1.0, 2.0]),
        composition,
    };

    let sv = ini.sec("survival");
    let survival = SurvivalConfig {
        taus: sv
            .list("taus")?
            .unwrap_or_else(|| vec![0.0, 1.0, 2.0, 5.0, 10.0, 20.0]),
    };

    let gl = ini.sec("galilean");
    let d = KinematicConfig::default();
    let kinetic_form = match gl.str("kinetic_form").unwrap_or("corrected") {
        "corrected" => KineticForm::Corrected,
        "as_printed" => KineticForm::AsPrinted,
        other => {
            return Err(CliError::Parse {
                line: gl.line("kinetic_form"),
                msg: format!("unknown kinetic form `{other}`"),
            })
        }
    };
    let galilean = GalileanConfig {
        kinematics: KinematicConfig {
            p_vec: gl.vec3("p", d.p_vec)?,
            k_vec: gl.vec3("k", d.k_vec)?,
            m_v: gl.f64("m_v", d.m_v)?,
            m_n: gl.f64("m_n", d.m_n)?,
            m_theta: gl.f64("m_theta", d.m_theta)?,
            eps_v: gl.f64("eps_v", d.eps_v)?,
            eps_n: gl.f64("eps_n", d.eps_n)?,
            eps_theta: gl.f64("eps_theta", d.eps_theta)?,
            c: gl.f64("c", d.c)?,
        },
        c_list: gl.list("c_list")?.unwrap_or_else(|| vec![10.0, 1e2, 1e3, 1e4]),
        kinetic_form,
    };

    let o = ini.sec("output");
    let output = OutputConfig {
        dir: o.str("dir").unwrap_or("out").to_string(),
        format: o.str("format").unwrap_or("csv").parse()?,
    };

    ini.reject_unused()?;

    let cfg = RunConfig {
        model,
        density,
        grid,
        tolerances,
        poles,
        smatrix,
        evolve,
        survival,
        galilean,
        output,
    };
    validate(&cfg)?;
    Ok(cfg)
}

fn validate(cfg: &RunConfig) -> Result<(), CliError> {
    cfg.build_model()?;
    let g = &cfg.grid;
    if !(g.omega > 0.0) {
        return Err(CliError::Config("grid half-width must be positive".into()));
    }
    if g.samples == 0 || !(g.sigma_max >= g.sigma_min) {
        return Err(CliError::Config("sample grid is empty".into()));
    }
    if cfg.evolve.taus.iter().chain(&cfg.survival.taus).any(|t| !t.is_finite() || *t < 0.0) {
        return Err(CliError::Config("evolution times must be finite and nonnegative".into()));
    }
    let r = cfg.poles.rect;
    if !(r.re_max >= r.re_min && r.im_max >= r.im_min) || cfg.poles.nx == 0 || cfg.poles.ny == 0 {
        return Err(CliError::Config("empty pole search rectangle".into()));
    }
    cfg.galilean.kinematics.validate()?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Tables

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Cell {
    F(f64),
    I(i64),
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Cell::F(x) => write!(f, "{x:.16e}"),
            Cell::I(i) => write!(f, "{i}"),
        }
    }
}

/// A result table together with an optional summary document.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
    pub summary: Option<Value>,
}

impl Table {
    fn new(columns: &[&'static str]) -> Self {
        Table {
            columns: columns.to_vec(),
            rows: Vec::new(),
            summary: None,
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.columns.join(",");
        out.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(|c| c.to_string()).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }

    /// Column-wise JSON object keyed by the CSV headers.
    pub fn to_json(&self) -> Value {
        let mut obj = Map::new();
        for (i, name) in self.columns.iter().enumerate() {
            let col: Vec<Value> = self.rows.iter().map(|r| json!(r[i])).collect();
            obj.insert(name.to_string(), Value::Array(col));
        }
        if let Some(s) = &self.summary {
            obj.insert("summary".into(), s.clone());
        }
        Value::Object(obj)
    }
}

fn f(x: f64) -> Cell {
    Cell::F(x)
}

fn locate_pole(model: &Model, cfg: &RunConfig) -> Result<ResonancePole, CliError> {
    let seed = denominator::weak_coupling_estimate(model)?;
    Ok(denominator::find_pole_with(model, seed, cfg.pole_search())?)
}

pub fn density_table(cfg: &RunConfig) -> Result<Table, CliError> {
    let model = cfg.build_model()?;
    let grid = cfg.sample_grid();
    let rho: Vec<f64> = grid.par_iter().map(|&l| model.rho(l)).collect::<Result<_, _>>()?;
    let mut t = Table::new(&["lambda", "rho"]);
    t.rows = grid.iter().zip(rho).map(|(&l, r)| vec![f(l), f(r)]).collect();
    t.summary = Some(json!({ "variant": model.density.name() }));
    Ok(t)
}

pub fn hfunc_table(cfg: &RunConfig) -> Result<Table, CliError> {
    let model = cfg.build_model()?;
    let grid = cfg.sample_grid();
    let h: Vec<_> = grid
        .par_iter()
        .map(|&x| denominator::h_boundary(&model, x))
        .collect::<Result<_, _>>()?;
    let mut t = Table::new(&["sigma", "re_h_plus", "im_h_plus"]);
    t.rows = h
        .iter()
        .map(|b| vec![f(b.sigma), f(b.h_plus.re), f(b.h_plus.im)])
        .collect();
    Ok(t)
}

pub fn pole_table(cfg: &RunConfig) -> Result<Table, CliError> {
    let model = cfg.build_model()?;
    if !model.params.is_free() && !model.density.continuation_available() {
        return Err(Error::ContinuationUnavailable(model.density.name()).into());
    }
    let p = &cfg.poles;
    let poles = denominator::find_all_poles_with(&model, p.rect, p.nx, p.ny, cfg.pole_search());
    let mut t = Table::new(&["re_mu", "im_mu", "re_residue", "im_residue", "iterations"]);
    t.rows = poles
        .iter()
        .map(|q| {
            vec![
                f(q.mu.re),
                f(q.mu.im),
                f(q.residue.re),
                f(q.residue.im),
                Cell::I(q.iterations as i64),
            ]
        })
        .collect();
    t.summary = Some(json!({
        "count": poles.len(),
        "sheets": poles.iter().map(|q| match q.sheet {
            Sheet::Physical => "physical",
            Sheet::Second => "second",
        }).collect::<Vec<_>>(),
    }));
    Ok(t)
}

pub fn smatrix_table(cfg: &RunConfig) -> Result<Table, CliError> {
    let model = cfg.build_model()?;
    let scan = smatrix::phase_scan(&model, &cfg.sample_grid())?;
    let mut t = Table::new(&["sigma", "re_s", "im_s", "abs_s", "unwrapped_phase"]);
    t.rows = scan
        .sigma
        .iter()
        .zip(&scan.s)
        .zip(&scan.unwrapped)
        .map(|((&x, s), &ph)| vec![f(x), f(s.re), f(s.im), f(s.norm()), f(ph)])
        .collect();
    let omega = cfg.grid.omega;
    let (winding, scan_grid) = match &model.density {
        SpectralDensity::Tabulated { grid, .. } if !model.params.is_free() => {
            // the table bounds the scan
            let (a, b) = (grid[0], grid[grid.len() - 1]);
            let n = cfg.smatrix.winding_n.max(2);
            let pts: Vec<f64> = (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect();
            let ph = smatrix::phase_scan(&model, &pts)?;
            let total = ph.unwrapped[n - 1] - ph.unwrapped[0];
            ((total / (2.0 * std::f64::consts::PI)).round() as i64, pts)
        }
        _ => (
            smatrix::winding_number(&model, omega, cfg.smatrix.winding_n)?,
            smatrix::symmetric_grid(omega, cfg.smatrix.winding_n),
        ),
    };
    let poles = if model.params.is_free() || model.density.continuation_available() {
        let p = &cfg.poles;
        denominator::find_all_poles_with(&model, p.rect, p.nx, p.ny, cfg.pole_search())
    } else {
        Vec::new()
    };
    let count = (!model.params.is_free() && model.density.continuation_available())
        .then(|| smatrix::argument_principle_count(&model, &poles))
        .or(model.params.is_free().then_some(0));
    let fac = smatrix::factorize(&model, &poles, &scan_grid)?;
    let zeros: Vec<[f64; 2]> = fac.blaschke_zeros.iter().map(|z| [z.re, z.im]).collect();
    let defects: Vec<Value> = fac
        .defect_factors
        .iter()
        .map(|d| json!({ "location": [d.location.re, d.location.im], "multiplicity": d.multiplicity }))
        .collect();
    t.summary = Some(json!({
        "classification": if fac.is_trivial() { "trivial" } else { fac.classification.tag() },
        "inner_class": fac.classification.tag(),
        "blaschke_zeros": zeros,
        "defect_factors": defects,
        "residual_deviation": fac.residual_deviation,
        "real_axis_only": fac.real_axis_only,
        "upper_half_sup": fac.upper_half_sup,
        "winding_number": winding,
        "argument_principle_count": count,
    }));
    Ok(t)
}

pub fn evolve_table(cfg: &RunConfig) -> Result<Table, CliError> {
    let model = cfg.build_model()?;
    let pole = locate_pole(&model, cfg)?;
    let grid = FoliationGrid::new(cfg.grid.n, cfg.grid.omega)?;
    let mode = if cfg.evolve.composition {
        KProjection::Composition
    } else {
        KProjection::Alternating {
            tol: cfg.tolerances.k_tol,
            max_iterations: cfg.tolerances.k_max_iterations,
        }
    };
    let lp = LaxPhillips::new(&model, None, &grid)?.with_mode(mode);
    let r = foliation::resonant_state(&pole, None, &grid)?;
    let norm = r.norm();
    let mut t = Table::new(&["tau", "norm_ratio", "eigen_error"]);
    for &tau in &cfg.evolve.taus {
        let z = lp.semigroup_z(&r, tau)?;
        let expected = r.scaled((Complex64::new(0.0, -tau) * pole.mu).exp());
        t.rows.push(vec![f(tau), f(z.norm() / norm), f(z.distance(&expected)? / norm)]);
    }
    t.summary = Some(json!({ "mu": [pole.mu.re, pole.mu.im], "inner": lp.inner }));
    Ok(t)
}

pub fn survival_table(cfg: &RunConfig) -> Result<Table, CliError> {
    let model = cfg.build_model()?;
    let pole = if model.density.continuation_available() {
        locate_pole(&model, cfg)?
    } else {
        log::warn!("no continuation: exponential model uses the weak-coupling pole estimate");
        ResonancePole {
            mu: denominator::weak_coupling_estimate(&model)?,
            residue: Complex64::new(1.0, 0.0),
            iterations: 0,
            final_step: 0.0,
            sheet: Sheet::Second,
        }
    };
    let tau_max = cfg.survival.taus.iter().cloned().fold(0.0, f64::max);
    let opts = MeasureOptions {
        tau_max,
        refine_tol: cfg.tolerances.survival_refine,
        max_doublings: cfg.tolerances.survival_max_doublings,
    };
    let measure = survival::spectral_measure(&model, opts)?;
    let rows = survival::compare_exponential(&measure, &pole, &cfg.survival.taus)?;
    let mut t = Table::new(&["tau", "abs_A", "exp_model", "deviation"]);
    t.rows = rows
        .iter()
        .map(|r| vec![f(r.tau), f(r.abs_a), f(r.exp_model), f(r.deviation)])
        .collect();
    t.summary = Some(json!({
        "total_mass": measure.total_mass,
        "mu": [pole.mu.re, pole.mu.im],
        "residue": [pole.residue.re, pole.residue.im],
    }));
    Ok(t)
}

pub fn galilean_table(cfg: &RunConfig) -> Result<Table, CliError> {
    let g = &cfg.galilean;
    let scan = galilean::limit_scan_with(&g.kinematics, &g.c_list, g.kinetic_form)?;
    let mut t = Table::new(&["c", "residual"]);
    t.rows = scan.rows.iter().map(|&(c, r)| vec![f(c), f(r)]).collect();
    t.summary = Some(json!({
        "slope": scan.slope,
        "converged": scan.converged,
        "kinetic_form": g.kinetic_form,
        "kinetic_gap": galilean::galilean_kinetic_gap_with(&g.kinematics, g.kinetic_form),
        "mass_defect": galilean::mass_defect(&g.kinematics),
        "epsilon_defect": galilean::epsilon_defect(&g.kinematics),
        "time_rate": galilean::time_rate(&g.kinematics),
    }));
    Ok(t)
}

/// Computes the table of one subcommand; `report` is not a table.
pub fn compute(sub: Subcommand, cfg: &RunConfig) -> Result<Table, CliError> {
    match sub {
        Subcommand::Density => density_table(cfg),
        Subcommand::Hfunc => hfunc_table(cfg),
        Subcommand::Pole => pole_table(cfg),
        Subcommand::Smatrix => smatrix_table(cfg),
        Subcommand::Evolve => evolve_table(cfg),
        Subcommand::Survival => survival_table(cfg),
        Subcommand::Galilean => galilean_table(cfg),
        Subcommand::Report => Err(CliError::Config("report aggregates the other subcommands".into())),
    }
}

/// Report document plus the subcommands that failed.
pub fn report(cfg: &RunConfig) -> (Value, Vec<(Subcommand, CliError)>) {
    let mut doc = Map::new();
    doc.insert("config".into(), serde_json::to_value(cfg).expect("configuration serializes"));
    doc.insert("config_hash".into(), Value::String(cfg.hash()));
    let mut failures = Vec::new();
    let mut errors = Map::new();
    for sub in &Subcommand::ALL[..7] {
        match compute(*sub, cfg) {
            Ok(t) => {
                if *sub == Subcommand::Smatrix {
                    if let Some(c) = t.summary.as_ref().and_then(|s| s.get("classification")) {
                        doc.insert("classification".into(), c.clone());
                    }
                }
                doc.insert(sub.name().into(), t.to_json());
            }
            Err(e) => {
                errors.insert(sub.name().into(), Value::String(e.to_string()));
                failures.push((*sub, e));
            }
        }
    }
    doc.insert("errors".into(), Value::Object(errors));
    (Value::Object(doc), failures)
}

/// Files written by a run and the failures that did not abort it.
#[derive(Debug, Default)]
pub struct Outcome {
    pub files: Vec<PathBuf>,
    pub failures: Vec<String>,
    pub exit_code: i32,
}

/// Writes `contents` to `path` through a temporary file in the same
/// directory.
pub fn write_atomic(path: &Path, contents: &str) -> Result<(), CliError> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io_err(dir))?;
    tmp.write_all(contents.as_bytes()).map_err(io_err(path))?;
    tmp.persist(path).map_err(|e| CliError::Io {
        path: path.to_path_buf(),
        source: e.error,
    })?;
    Ok(())
}

fn json_text(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("json serializes");
    s.push('\n');
    s
}

/// Runs one subcommand and writes its artifacts into `out_dir`.
pub fn run_subcommand(
    sub: Subcommand,
    cfg: &RunConfig,
    out_dir: &Path,
    format: Format,
) -> Result<Outcome, CliError> {
    let mut outcome = Outcome::default();
    if sub == Subcommand::Report {
        let (doc, failures) = report(cfg);
        let path = out_dir.join("report.json");
        write_atomic(&path, &json_text(&doc))?;
        outcome.files.push(path);
        outcome.exit_code = failures.iter().map(|(_, e)| e.exit_code()).max().unwrap_or(0);
        outcome.failures = failures.iter().map(|(s, e)| format!("{s}: {e}")).collect();
        return Ok(outcome);
    }
    let table = compute(sub, cfg)?;
    match format {
        Format::Csv => {
            let path = out_dir.join(format!("{}.csv", sub.name()));
            write_atomic(&path, &table.to_csv())?;
            outcome.files.push(path);
            if let Some(s) = &table.summary {
                let path = out_dir.join(format!("{}_summary.json", sub.name()));
                write_atomic(&path, &json_text(s))?;
                outcome.files.push(path);
            }
        }
        Format::Json => {
            let mut doc = table.to_json();
            doc["config_hash"] = Value::String(cfg.hash());
            let path = out_dir.join(format!("{}.json", sub.name()));
            write_atomic(&path, &json_text(&doc))?;
            outcome.files.push(path);
        }
    }
    Ok(outcome)
}

/// Configures the global thread pool from [`THREADS_ENV`] if it is set.
pub fn init_threads() -> Result<(), CliError> {
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v
            .trim()
            .parse()
            .map_err(|_| CliError::Config(format!("{THREADS_ENV} must be a thread count, got `{v}`")))?;
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::warn!("{THREADS_ENV} ignored: {e}");
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const FLAT: &str = "[model]\nomega_V = 1\ng = 0.2\n\n[density]\nvariant = flat\ngamma_total = 0.2\n";

    #[test]
    fn minimal_config_gets_defaults() {
        let cfg = parse_config(FLAT).unwrap();
        assert_eq!(cfg.grid.n, 16384);
        assert_eq!(cfg.grid.omega, 20.0);
        assert_eq!(cfg.density, SpectralDensity::Flat { gamma_total: 0.2 });
        assert_eq!(cfg.tolerances.pole_residual, 1e-12);
    }

    #[test]
    fn missing_key_is_named() {
        let err = parse_config("[model]\nomega_V = 1\n[density]\nvariant = flat\n").unwrap_err();
        assert!(err.to_string().contains("gamma_total"), "{err}");
        assert_eq!(err.exit_code(), 1);
    }

    #[test]
    fn grid_size_must_be_power_of_two() {
        let err = parse_config(&format!("{FLAT}[grid]\nN = 1000\n")).unwrap_err();
        assert!(err.to_string().contains("N must be a power of two"), "{err}");
        assert!(matches!(err, CliError::Parse { line: 9, .. }));
    }

    #[test]
    fn unknown_keys_and_sections_rejected() {
        let err = parse_config(&format!("{FLAT}center = 3\n")).unwrap_err();
        assert!(matches!(err, CliError::Parse { line: 8, .. }), "{err}");
        let err = parse_config(&format!("{FLAT}[plots]\nx = 1\n")).unwrap_err();
        assert!(err.to_string().contains("unknown section"));
        let err = parse_config("[model]\nomega_V = one\n").unwrap_err();
        assert!(matches!(err, CliError::Parse { line: 2, .. }));
        let err = parse_config(&format!("{FLAT}gamma_total = 0.3\n")).unwrap_err();
        assert!(err.to_string().contains("duplicate"));
    }

    #[test]
    fn invalid_model_is_validation_error() {
        let err = parse_config("[model]\nomega_V = 1\nm_n = -1\n[density]\nvariant = flat\ngamma_total = 0.2\n")
            .unwrap_err();
        assert_eq!(err.exit_code(), 1);
    }

    #[test]
    fn hash_round_trips_through_report_config() {
        let cfg = parse_config(&format!("{FLAT}[galilean]\nc_list = 10, 100, 1000\n")).unwrap();
        let doc = json!({ "config": serde_json::to_value(&cfg).unwrap(), "config_hash": cfg.hash() });
        let back = RunConfig::from_report(&doc.to_string()).unwrap();
        assert_eq!(back.hash(), cfg.hash());
    }

    #[test]
    fn pole_row_for_flat_band() {
        let cfg = parse_config(FLAT).unwrap();
        let t = pole_table(&cfg).unwrap();
        assert_eq!(t.rows.len(), 1);
        let r = &t.rows[0];
        let get = |c: &Cell| match c {
            Cell::F(x) => *x,
            Cell::I(i) => *i as f64,
        };
        assert!((get(&r[0]) - 1.0).abs() < 1e-12);
        assert!((get(&r[1]) + 0.1).abs() < 1e-12);
        assert!((get(&r[2]) - 1.0).abs() < 1e-12);
        assert!(get(&r[3]).abs() < 1e-12);
        let csv = t.to_csv();
        assert!(csv.starts_with("re_mu,im_mu,re_residue,im_residue,iterations\n"));
    }

    #[test]
    fn csv_formatting() {
        let mut t = Table::new(&["a", "b"]);
        t.rows.push(vec![Cell::F(0.1), Cell::I(3)]);
        assert_eq!(t.to_csv(), "a,b\n1.0000000000000001e-1,3\n");
    }
}

#[cfg(test)]
mod proptests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn config_hash_round_trips(omega in -2.0..2.0f64, g in 0.0..1.0f64, gamma in 0.01..1.0f64) {
            let text = format!("[model]\nomega_V = {omega}\ng = {g}\n[density]\nvariant = flat\ngamma_total = {gamma}\n");
            let cfg = parse_config(&text).unwrap();
            let doc = json!({ "config": cfg, "config_hash": cfg.hash() });
            let back = RunConfig::from_report(&doc.to_string()).unwrap();
            prop_assert_eq!(back.hash(), cfg.hash());
        }
    }
}
