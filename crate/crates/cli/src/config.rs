//! Flat `key = value unit` experiment configuration.
//!
//! ```text
//! # comments start with '#'
//! z_max = 250 um
//! current_middle = 0.07 A
//! ordering = counter_intuitive
//! ```
//!
//! Dimensioned keys require a unit; unknown keys and mismatched units are errors.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::path::Path;

use ctap_core::chipgeom::{LayoutParams, Ordering};
use ctap_core::consts::{AMU, MU_B};
use ctap_core::threemode::PulseShape;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: {reason}")]
    Syntax { line: usize, reason: String },
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("key `{key}`: {reason}")]
    Value { key: String, reason: String },
    #[error("key `{0}` given twice")]
    Duplicate(String),
    #[error("{0}")]
    Invalid(String),
    #[error("cannot read config: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Length,
    Time,
    Current,
    Field,
    Frequency,
    Moment,
    Mass,
    Count,
    Number,
    Text,
}

impl Kind {
    /// SI factor of `unit`, if the unit belongs to this kind.
    fn factor(self, unit: &str) -> Option<f64> {
        let f = match (self, unit) {
            (Kind::Length, "m") => 1.0,
            (Kind::Length, "mm") => 1e-3,
            (Kind::Length, "um") => 1e-6,
            (Kind::Length, "nm") => 1e-9,
            (Kind::Time, "s") => 1.0,
            (Kind::Time, "ms") => 1e-3,
            (Kind::Time, "us") => 1e-6,
            (Kind::Time, "ns") => 1e-9,
            (Kind::Current, "A") => 1.0,
            (Kind::Current, "mA") => 1e-3,
            (Kind::Field, "T") => 1.0,
            (Kind::Field, "mT") => 1e-3,
            (Kind::Field, "G") => 1e-4,
            (Kind::Frequency, "Hz") => 1.0,
            (Kind::Frequency, "kHz") => 1e3,
            (Kind::Moment, "muB") => MU_B,
            (Kind::Moment, "J/T") => 1.0,
            (Kind::Mass, "kg") => 1.0,
            (Kind::Mass, "amu") => AMU,
            _ => return None,
        };
        Some(f)
    }

    fn si_unit(self) -> &'static str {
        match self {
            Kind::Length => "m",
            Kind::Time => "s",
            Kind::Current => "A",
            Kind::Field => "T",
            Kind::Frequency => "Hz",
            Kind::Moment => "J/T",
            Kind::Mass => "kg",
            Kind::Count | Kind::Number | Kind::Text => "",
        }
    }
}

const KEYS: &[(&str, Kind)] = &[
    ("ordering", Kind::Text),
    ("current_left", Kind::Current),
    ("current_middle", Kind::Current),
    ("current_right", Kind::Current),
    ("d0", Kind::Length),
    ("d_min", Kind::Length),
    ("straight_run", Kind::Length),
    ("xi", Kind::Length),
    ("bump_half_width", Kind::Length),
    ("x_span", Kind::Length),
    ("y_span", Kind::Length),
    ("z_max", Kind::Length),
    ("z_pad", Kind::Length),
    ("segment_length", Kind::Length),
    ("bias_field", Kind::Field),
    ("bias_direction", Kind::Text),
    ("ioffe_field", Kind::Field),
    ("trap_frequency", Kind::Frequency),
    ("mass", Kind::Mass),
    ("moment", Kind::Moment),
    ("grid_x", Kind::Count),
    ("grid_y", Kind::Count),
    ("grid_z", Kind::Count),
    ("dt", Kind::Time),
    ("total_time", Kind::Time),
    ("sigma_z", Kind::Text),
    ("z0", Kind::Length),
    ("ground_state_tau", Kind::Time),
    ("ground_state_tol", Kind::Number),
    ("ground_state_check", Kind::Count),
    ("ground_state_max_iterations", Kind::Count),
    ("population_stride", Kind::Count),
    ("snapshots", Kind::Count),
    ("progress_stride", Kind::Count),
    ("edge_margin", Kind::Count),
    ("edge_threshold", Kind::Number),
    ("save_final_state", Kind::Count),
    ("threads", Kind::Count),
    ("sweep_start", Kind::Current),
    ("sweep_stop", Kind::Current),
    ("sweep_step", Kind::Current),
    ("threemode_shape", Kind::Text),
    ("threemode_ordering", Kind::Text),
    ("threemode_peak", Kind::Number),
    ("threemode_total_time", Kind::Number),
    ("threemode_dt", Kind::Number),
    ("bench_warmup", Kind::Count),
    ("bench_steps", Kind::Count),
    ("bench_repeats", Kind::Count),
    ("bench_threads", Kind::Text),
];

/// Points above which a grid counts as full scale and needs `--full-scale`.
pub const DESK_SCALE_MAX_POINTS: usize = 1 << 21;

/// Longitudinal width rule for the initial packet.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SigmaZ {
    /// Ground-state width of the longitudinal trap, `√(ħ/2mω_z)`.
    Coherent,
    /// The rms width of the prepared transverse ground state.
    Transverse,
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThreeModeConfig {
    pub shape: PulseShape,
    pub ordering: Ordering,
    pub peak: f64,
    pub total_time: f64,
    pub dt: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

impl SweepSpec {
    /// `start, start + step, …` up to and including `stop` (with rounding slack).
    pub fn values(&self) -> Vec<f64> {
        let n = ((self.stop - self.start) / self.step + 1e-9).floor() as usize + 1;
        (0..n).map(|i| self.start + i as f64 * self.step).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchConfig {
    pub warmup: usize,
    pub steps: usize,
    pub repeats: usize,
    /// Empty means powers of two up to the hardware thread count.
    pub threads: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub layout: LayoutParams,
    pub grid: [usize; 3],
    pub dt: f64,
    /// Defaults to half a longitudinal oscillation period.
    pub total_time: Option<f64>,
    pub sigma_z: SigmaZ,
    /// Defaults to 6 σ_z.
    pub z0: Option<f64>,
    pub ground_state_tau: f64,
    pub ground_state_tol: f64,
    pub ground_state_check: usize,
    pub ground_state_max_iterations: usize,
    pub population_stride: usize,
    pub snapshots: usize,
    pub progress_stride: usize,
    pub edge_margin: usize,
    pub edge_threshold: f64,
    pub save_final_state: bool,
    pub threads: Option<usize>,
    pub sweep: SweepSpec,
    pub threemode: ThreeModeConfig,
    pub bench: BenchConfig,
    pub full_scale: bool,
}

impl ExperimentConfig {
    /// Desk-scale defaults: the standard chip compressed fourfold along z.
    pub fn desk_scale() -> Self {
        Self {
            layout: LayoutParams::default().scaled_z(0.25),
            grid: [128, 32, 256],
            dt: 1e-6,
            total_time: None,
            sigma_z: SigmaZ::Coherent,
            z0: None,
            ground_state_tau: 1e-7,
            ground_state_tol: 1e-10,
            ground_state_check: 100,
            ground_state_max_iterations: 1_000_000,
            population_stride: 100,
            snapshots: 50,
            progress_stride: 0,
            edge_margin: 2,
            edge_threshold: 1e-6,
            save_final_state: false,
            threads: None,
            sweep: SweepSpec { start: 0.0672, stop: 0.0692, step: 0.001 },
            threemode: ThreeModeConfig {
                shape: PulseShape::Gaussian,
                ordering: Ordering::CounterIntuitive,
                peak: 50.0,
                total_time: 1.0,
                dt: 1e-3,
            },
            bench: BenchConfig { warmup: 100, steps: 300, repeats: 3, threads: Vec::new() },
            full_scale: false,
        }
    }

    /// The full chip on the large grid.
    pub fn full_scale() -> Self {
        Self {
            layout: LayoutParams::default(),
            grid: [256, 64, 1024],
            sweep: SweepSpec { start: 0.0672, stop: 0.0761, step: 0.001 },
            full_scale: true,
            ..Self::desk_scale()
        }
    }

    pub fn defaults(full_scale: bool) -> Self {
        if full_scale {
            Self::full_scale()
        } else {
            Self::desk_scale()
        }
    }

    /// Parses `text` over the defaults selected by `full_scale`.
    pub fn parse(text: &str, full_scale: bool) -> Result<Self, ConfigError> {
        let mut cfg = Self::defaults(full_scale);
        let mut seen = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| ConfigError::Syntax { line: i + 1, reason: "expected `key = value`".into() })?;
            let key = key.trim();
            let value = value.trim();
            let kind = KEYS
                .iter()
                .find(|(k, _)| *k == key)
                .map(|&(_, kind)| kind)
                .ok_or_else(|| ConfigError::UnknownKey(key.to_string()))?;
            if seen.insert(key.to_string(), ()).is_some() {
                return Err(ConfigError::Duplicate(key.to_string()));
            }
            let parsed = parse_value(key, kind, value)?;
            cfg.set(key, parsed)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, full_scale: bool) -> Result<Self, ConfigError> {
        Self::parse(&std::fs::read_to_string(path)?, full_scale)
    }

    fn set(&mut self, key: &str, v: Value) -> Result<(), ConfigError> {
        let bad = |reason: &str| ConfigError::Value { key: key.to_string(), reason: reason.to_string() };
        let l = &mut self.layout;
        match (key, v) {
            ("ordering", Value::Text(s)) => l.ordering = s.parse().map_err(|_| bad("expected counter_intuitive or intuitive"))?,
            ("current_left", Value::Number(x)) => l.currents[0] = x,
            ("current_middle", Value::Number(x)) => l.currents[1] = x,
            ("current_right", Value::Number(x)) => l.currents[2] = x,
            ("d0", Value::Number(x)) => l.d0 = x,
            ("d_min", Value::Number(x)) => l.d_min = x,
            ("straight_run", Value::Number(x)) => l.straight_run = x,
            ("xi", Value::Number(x)) => l.xi = x,
            ("bump_half_width", Value::Number(x)) => l.bump_half_width = x,
            ("x_span", Value::Number(x)) => l.x_span = x,
            ("y_span", Value::Number(x)) => l.y_span = x,
            ("z_max", Value::Number(x)) => l.z_max = x,
            ("z_pad", Value::Number(x)) => l.z_pad = x,
            ("segment_length", Value::Number(x)) => l.segment_length = x,
            ("bias_field", Value::Number(x)) => l.bias_field = x,
            ("bias_direction", Value::Text(s)) => {
                let parts: Vec<f64> = s
                    .split_whitespace()
                    .map(|p| p.parse::<f64>())
                    .collect::<Result<_, _>>()
                    .map_err(|_| bad("expected three numbers"))?;
                let [x, y, z]: [f64; 3] = parts.try_into().map_err(|_| bad("expected three numbers"))?;
                let n = (x * x + y * y + z * z).sqrt();
                if !(n > 0.0) {
                    return Err(bad("direction must be non-zero"));
                }
                l.bias_direction = [x / n, y / n, z / n];
            }
            ("ioffe_field", Value::Number(x)) => l.ioffe_field = x,
            ("trap_frequency", Value::Number(x)) => l.omega_z = 2.0 * PI * x,
            ("mass", Value::Number(x)) => l.mass = x,
            ("moment", Value::Number(x)) => l.mu_eff = x,
            ("grid_x", Value::Count(n)) => self.grid[0] = n,
            ("grid_y", Value::Count(n)) => self.grid[1] = n,
            ("grid_z", Value::Count(n)) => self.grid[2] = n,
            ("dt", Value::Number(x)) => self.dt = x,
            ("total_time", Value::Number(x)) => self.total_time = Some(x),
            ("sigma_z", Value::Text(s)) => {
                self.sigma_z = match s.as_str() {
                    "coherent" => SigmaZ::Coherent,
                    "transverse" => SigmaZ::Transverse,
                    other => SigmaZ::Fixed(parse_quantity(key, Kind::Length, other)?),
                }
            }
            ("z0", Value::Number(x)) => self.z0 = Some(x),
            ("ground_state_tau", Value::Number(x)) => self.ground_state_tau = x,
            ("ground_state_tol", Value::Number(x)) => self.ground_state_tol = x,
            ("ground_state_check", Value::Count(n)) => self.ground_state_check = n,
            ("ground_state_max_iterations", Value::Count(n)) => self.ground_state_max_iterations = n,
            ("population_stride", Value::Count(n)) => self.population_stride = n,
            ("snapshots", Value::Count(n)) => self.snapshots = n,
            ("progress_stride", Value::Count(n)) => self.progress_stride = n,
            ("edge_margin", Value::Count(n)) => self.edge_margin = n,
            ("edge_threshold", Value::Number(x)) => self.edge_threshold = x,
            ("save_final_state", Value::Count(n)) => self.save_final_state = n != 0,
            ("threads", Value::Count(n)) => self.threads = Some(n),
            ("sweep_start", Value::Number(x)) => self.sweep.start = x,
            ("sweep_stop", Value::Number(x)) => self.sweep.stop = x,
            ("sweep_step", Value::Number(x)) => self.sweep.step = x,
            ("threemode_shape", Value::Text(s)) => {
                self.threemode.shape = match s.as_str() {
                    "gaussian" => PulseShape::Gaussian,
                    "sin_squared" => PulseShape::SinSquared,
                    _ => return Err(bad("expected gaussian or sin_squared")),
                }
            }
            ("threemode_ordering", Value::Text(s)) => {
                self.threemode.ordering = s.parse().map_err(|_| bad("expected counter_intuitive or intuitive"))?
            }
            ("threemode_peak", Value::Number(x)) => self.threemode.peak = x,
            ("threemode_total_time", Value::Number(x)) => self.threemode.total_time = x,
            ("threemode_dt", Value::Number(x)) => self.threemode.dt = x,
            ("bench_warmup", Value::Count(n)) => self.bench.warmup = n,
            ("bench_steps", Value::Count(n)) => self.bench.steps = n,
            ("bench_repeats", Value::Count(n)) => self.bench.repeats = n,
            ("bench_threads", Value::Text(s)) => {
                self.bench.threads = s
                    .split(|c: char| c == ',' || c.is_whitespace())
                    .filter(|p| !p.is_empty())
                    .map(|p| p.parse::<usize>().ok().filter(|&n| n > 0))
                    .collect::<Option<_>>()
                    .ok_or_else(|| bad("expected positive thread counts"))?
            }
            _ => return Err(bad("value has the wrong type")),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let inv = |m: String| Err(ConfigError::Invalid(m));
        for (axis, &n) in self.grid.iter().enumerate() {
            if n < 8 || !n.is_power_of_two() {
                return inv(format!("grid axis {axis}: {n} is not a power of two >= 8"));
            }
        }
        if !(self.dt > 0.0) {
            return inv("dt must be positive".into());
        }
        if let Some(t) = self.total_time {
            if !(t > 0.0) {
                return inv("total_time must be positive".into());
            }
        }
        if !(self.layout.omega_z > 0.0) && self.total_time.is_none() {
            return inv("total_time is required when trap_frequency is zero".into());
        }
        if self.population_stride == 0 {
            return inv("population_stride must be at least 1".into());
        }
        if self.edge_margin == 0 {
            return inv("edge_margin must be at least 1".into());
        }
        if !(self.sweep.step > 0.0) || self.sweep.stop < self.sweep.start {
            return inv("sweep range is empty".into());
        }
        if self.bench.steps == 0 || self.bench.repeats == 0 {
            return inv("bench_steps and bench_repeats must be positive".into());
        }
        if !self.full_scale && self.grid.iter().product::<usize>() > DESK_SCALE_MAX_POINTS {
            return inv(format!(
                "a {}x{}x{} grid is full scale; pass --full-scale to run it",
                self.grid[0], self.grid[1], self.grid[2]
            ));
        }
        Ok(())
    }

    pub fn total_time(&self) -> f64 {
        self.total_time.unwrap_or(PI / self.layout.omega_z)
    }

    pub fn n_steps(&self) -> usize {
        (self.total_time() / self.dt).round() as usize
    }

    /// Every key with its resolved value in SI units.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let l = &self.layout;
        let shape = match self.threemode.shape {
            PulseShape::Gaussian => "gaussian",
            PulseShape::SinSquared => "sin_squared",
        };
        let sigma = match self.sigma_z {
            SigmaZ::Coherent => "coherent".to_string(),
            SigmaZ::Transverse => "transverse".to_string(),
            SigmaZ::Fixed(x) => format!("{x} m"),
        };
        let opt = |v: Option<f64>, unit: &str| v.map_or("auto".to_string(), |x| format!("{x} {unit}"));
        let with = |key: &str, x: f64| {
            let kind = KEYS.iter().find(|(k, _)| *k == key).map(|&(_, k)| k).unwrap_or(Kind::Number);
            let unit = kind.si_unit();
            if unit.is_empty() {
                format!("{x}")
            } else {
                format!("{x} {unit}")
            }
        };
        let threads = self.threads.map_or("auto".to_string(), |n| n.to_string());
        let bench_threads = if self.bench.threads.is_empty() {
            "auto".to_string()
        } else {
            self.bench.threads.iter().map(|n| n.to_string()).collect::<Vec<_>>().join(",")
        };
        vec![
            ("ordering", l.ordering.name().to_string()),
            ("current_left", with("current_left", l.currents[0])),
            ("current_middle", with("current_middle", l.currents[1])),
            ("current_right", with("current_right", l.currents[2])),
            ("d0", with("d0", l.d0)),
            ("d_min", with("d_min", l.d_min)),
            ("straight_run", with("straight_run", l.straight_run)),
            ("xi", with("xi", l.xi)),
            ("bump_half_width", with("bump_half_width", l.bump_half_width)),
            ("x_span", with("x_span", l.x_span)),
            ("y_span", with("y_span", l.y_span)),
            ("z_max", with("z_max", l.z_max)),
            ("z_pad", with("z_pad", l.z_pad)),
            ("segment_length", with("segment_length", l.segment_length)),
            ("bias_field", with("bias_field", l.bias_field)),
            ("bias_direction", format!("{} {} {}", l.bias_direction[0], l.bias_direction[1], l.bias_direction[2])),
            ("ioffe_field", with("ioffe_field", l.ioffe_field)),
            ("trap_frequency", with("trap_frequency", l.omega_z / (2.0 * PI))),
            ("mass", with("mass", l.mass)),
            ("moment", with("moment", l.mu_eff)),
            ("grid_x", self.grid[0].to_string()),
            ("grid_y", self.grid[1].to_string()),
            ("grid_z", self.grid[2].to_string()),
            ("dt", with("dt", self.dt)),
            ("total_time", opt(self.total_time, "s")),
            ("sigma_z", sigma),
            ("z0", opt(self.z0, "m")),
            ("ground_state_tau", with("ground_state_tau", self.ground_state_tau)),
            ("ground_state_tol", with("ground_state_tol", self.ground_state_tol)),
            ("ground_state_check", self.ground_state_check.to_string()),
            ("ground_state_max_iterations", self.ground_state_max_iterations.to_string()),
            ("population_stride", self.population_stride.to_string()),
            ("snapshots", self.snapshots.to_string()),
            ("progress_stride", self.progress_stride.to_string()),
            ("edge_margin", self.edge_margin.to_string()),
            ("edge_threshold", with("edge_threshold", self.edge_threshold)),
            ("save_final_state", u8::from(self.save_final_state).to_string()),
            ("threads", threads),
            ("sweep_start", with("sweep_start", self.sweep.start)),
            ("sweep_stop", with("sweep_stop", self.sweep.stop)),
            ("sweep_step", with("sweep_step", self.sweep.step)),
            ("threemode_shape", shape.to_string()),
            ("threemode_ordering", self.threemode.ordering.name().to_string()),
            ("threemode_peak", with("threemode_peak", self.threemode.peak)),
            ("threemode_total_time", with("threemode_total_time", self.threemode.total_time)),
            ("threemode_dt", with("threemode_dt", self.threemode.dt)),
            ("bench_warmup", self.bench.warmup.to_string()),
            ("bench_steps", self.bench.steps.to_string()),
            ("bench_repeats", self.bench.repeats.to_string()),
            ("bench_threads", bench_threads),
        ]
    }
}

impl fmt::Display for ExperimentConfig {
    /// Writes the resolved configuration in the input format.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, v) in self.entries() {
            writeln!(f, "{k} = {v}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Value {
    Number(f64),
    Count(usize),
    Text(String),
}

fn parse_quantity(key: &str, kind: Kind, value: &str) -> Result<f64, ConfigError> {
    let bad = |reason: String| ConfigError::Value { key: key.to_string(), reason };
    let mut parts = value.split_whitespace();
    let number = parts.next().ok_or_else(|| bad("missing value".into()))?;
    let x: f64 = number.parse().map_err(|_| bad(format!("`{number}` is not a number")))?;
    if !x.is_finite() {
        return Err(bad("value must be finite".into()));
    }
    let unit = parts.next();
    if parts.next().is_some() {
        return Err(bad("trailing text after the unit".into()));
    }
    match (kind, unit) {
        (Kind::Number, None) => Ok(x),
        (Kind::Number, Some(u)) => Err(bad(format!("unexpected unit `{u}`"))),
        (_, None) => Err(bad(format!("a unit is required, e.g. `{x} {}`", kind.si_unit()))),
        (_, Some(u)) => kind.factor(u).map(|f| x * f).ok_or_else(|| bad(format!("unit `{u}` does not fit this key"))),
    }
}

fn parse_value(key: &str, kind: Kind, value: &str) -> Result<Value, ConfigError> {
    match kind {
        Kind::Text => {
            if value.is_empty() {
                Err(ConfigError::Value { key: key.to_string(), reason: "missing value".into() })
            } else {
                Ok(Value::Text(value.to_string()))
            }
        }
        Kind::Count => value
            .parse::<usize>()
            .map(Value::Count)
            .map_err(|_| ConfigError::Value { key: key.to_string(), reason: format!("`{value}` is not a count") }),
        _ => parse_quantity(key, kind, value).map(Value::Number),
    }
}
