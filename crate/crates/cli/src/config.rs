//! Run configuration: a TOML document validated against a fixed schema.
//!
//! Parsing never stops at the first problem; every unknown key, type
//! mismatch and out-of-range value is collected into one list.

use std::collections::BTreeSet;
use std::fmt;
use std::sync::{Arc, LazyLock};

use prion_core::discrete::MaselParams;
use prion_core::dynamics::IntegratorOptions;
use prion_core::eigen::EigenOptions;
use prion_core::steady::SteadyOptions;
use prion_core::sweep::{SweepAxis, SweepMode};
use prion_core::{CoefficientSet, CoefficientShape, Discretization, Kernel, SizeGrid, Spacing, TransportScheme};
use serde::{Deserialize, Serialize};
use toml::{Table, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    Eigen,
    Steady,
    Simulate,
    Sweep,
    Validate,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Self::Eigen => "eigen",
            Self::Steady => "steady",
            Self::Simulate => "simulate",
            Self::Sweep => "sweep",
            Self::Validate => "validate",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        [Self::Eigen, Self::Steady, Self::Simulate, Self::Sweep, Self::Validate]
            .into_iter()
            .find(|e| e.name() == s)
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub xmax: f64,
    pub n: usize,
    pub spacing: Spacing,
}

impl GridConfig {
    pub fn build(&self, x0: f64) -> prion_core::Result<Arc<SizeGrid>> {
        Ok(Arc::new(SizeGrid::new(x0, self.xmax, self.n, self.spacing)?))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EigenConfig {
    /// Monomer levels; V̄ alone when not given.
    pub v: Vec<f64>,
    pub adjoint: bool,
    pub options: EigenOptions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StabilityConfig {
    pub epsilon: f64,
    pub horizon: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub t_end: f64,
    pub v0: Option<f64>,
    pub dose: f64,
    pub threshold: Option<f64>,
    pub max_drift: f64,
    pub integrator: IntegratorOptions,
    pub stability: Option<StabilityConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub axis: SweepAxis,
    pub values: Vec<f64>,
    pub mode: SweepMode,
    pub t_end: f64,
    pub v0: Option<f64>,
    pub dose: f64,
    pub threshold: Option<f64>,
    pub probe_time: f64,
    pub max_drift: f64,
    pub integrator: IntegratorOptions,
    pub eigen: EigenOptions,
    pub steady: SteadyOptions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiscreteConfig {
    pub params: MaselParams,
    /// Largest tracked size N.
    pub n_max: usize,
    pub t_end: f64,
    /// Continuum domain `[0, xmax]` with `n` cells.
    pub xmax: f64,
    pub n: usize,
}

impl Default for DiscreteConfig {
    fn default() -> Self {
        let params = MaselParams {
            lambda: 2400.0,
            gamma: 4.0,
            tau: 0.01,
            beta: 0.001,
            mu: 0.05,
            n0: 1,
        };
        Self {
            n_max: params.default_truncation(),
            params,
            t_end: 60.0,
            xmax: 500.0,
            n: 800,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValidateConfig {
    /// Random vector pairs for the duality check.
    pub duality_samples: usize,
    pub discrete: Option<DiscreteConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: String,
    pub csv: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub experiment: Experiment,
    pub seed: u64,
    pub model: CoefficientSet,
    pub grid: GridConfig,
    pub eigen: Option<EigenConfig>,
    pub steady: Option<SteadyOptions>,
    pub simulate: Option<SimulateConfig>,
    pub sweep: Option<SweepConfig>,
    pub validate: Option<ValidateConfig>,
    pub output: OutputConfig,
}

impl RunConfig {
    pub fn discretization(&self) -> prion_core::Result<Arc<Discretization>> {
        let grid = self.grid.build(self.model.x0)?;
        Ok(Arc::new(Discretization::new(&self.model, grid)?))
    }
}

/// Reference parameter set with constant coefficients.
pub fn default_model() -> CoefficientSet {
    CoefficientSet::constant(2400.0, 4.0, 0.001, 0.03, 0.05)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfigIssue {
    /// Dotted key path, e.g. `model.gamma`.
    pub field: String,
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for ConfigIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "line {l}: {}: {}", self.field, self.message),
            None => write!(f, "{}: {}", self.field, self.message),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error, Serialize, Deserialize)]
#[error("{} configuration error(s): {}", .issues.len(), .issues.iter().map(|i| i.to_string()).collect::<Vec<_>>().join("; "))]
pub struct ConfigErrors {
    pub issues: Vec<ConfigIssue>,
}

#[derive(Clone, Copy)]
enum Range {
    Any,
    Positive,
    NonNegative,
    /// (0, 1]
    Fraction,
}

impl Range {
    fn check(self, x: f64) -> Option<&'static str> {
        if !x.is_finite() {
            return Some("must be finite");
        }
        match self {
            Self::Any => None,
            Self::Positive => (x <= 0.0).then_some("must be > 0"),
            Self::NonNegative => (x < 0.0).then_some("must be >= 0"),
            Self::Fraction => (!(x > 0.0 && x <= 1.0)).then_some("must lie in (0, 1]"),
        }
    }
}

struct Section<'t> {
    path: String,
    table: &'t Table,
    used: BTreeSet<&'t str>,
}

impl<'t> Section<'t> {
    fn new(path: &str, table: &'t Table) -> Self {
        Self {
            path: path.to_string(),
            table,
            used: BTreeSet::new(),
        }
    }

    fn field(&self, key: &str) -> String {
        if self.path.is_empty() {
            key.to_string()
        } else {
            format!("{}.{key}", self.path)
        }
    }

    fn has(&self, key: &str) -> bool {
        self.table.contains_key(key)
    }
}

struct Reader<'s> {
    src: &'s str,
    issues: Vec<ConfigIssue>,
}

impl<'s> Reader<'s> {
    fn issue(&mut self, field: String, message: impl Into<String>) {
        let line = line_of(self.src, &field);
        self.issues.push(ConfigIssue {
            field,
            line,
            message: message.into(),
        });
    }

    fn get<'t>(&mut self, sec: &mut Section<'t>, key: &'t str) -> Option<&'t Value> {
        sec.used.insert(key);
        sec.table.get(key)
    }

    fn number<'t>(&mut self, sec: &mut Section<'t>, key: &'t str, range: Range) -> Option<f64> {
        let value = self.get(sec, key)?;
        let x = match value {
            Value::Float(f) => *f,
            Value::Integer(i) => *i as f64,
            other => {
                self.issue(sec.field(key), format!("expected a number, found {}", other.type_str()));
                return None;
            }
        };
        if let Some(msg) = range.check(x) {
            self.issue(sec.field(key), format!("{msg} (got {x})"));
            return None;
        }
        Some(x)
    }

    fn number_or<'t>(&mut self, sec: &mut Section<'t>, key: &'t str, default: f64, range: Range) -> f64 {
        self.number(sec, key, range).unwrap_or(default)
    }

    fn required<'t>(&mut self, sec: &mut Section<'t>, key: &'t str, range: Range) -> Option<f64> {
        if !sec.has(key) {
            sec.used.insert(key);
            self.issue(sec.field(key), "missing required value");
            return None;
        }
        self.number(sec, key, range)
    }

    fn count<'t>(&mut self, sec: &mut Section<'t>, key: &'t str, min: usize) -> Option<usize> {
        match self.get(sec, key)? {
            Value::Integer(i) if *i >= min as i64 => Some(*i as usize),
            Value::Integer(i) => {
                self.issue(sec.field(key), format!("must be an integer >= {min} (got {i})"));
                None
            }
            other => {
                self.issue(sec.field(key), format!("expected an integer, found {}", other.type_str()));
                None
            }
        }
    }

    fn boolean<'t>(&mut self, sec: &mut Section<'t>, key: &'t str) -> Option<bool> {
        match self.get(sec, key)? {
            Value::Boolean(b) => Some(*b),
            other => {
                self.issue(sec.field(key), format!("expected a boolean, found {}", other.type_str()));
                None
            }
        }
    }

    fn string<'t>(&mut self, sec: &mut Section<'t>, key: &'t str) -> Option<&'t str> {
        match self.get(sec, key)? {
            Value::String(s) => Some(s.as_str()),
            other => {
                self.issue(sec.field(key), format!("expected a string, found {}", other.type_str()));
                None
            }
        }
    }

    fn choice<'t, T: Copy>(&mut self, sec: &mut Section<'t>, key: &'t str, options: &[(&str, T)]) -> Option<T> {
        let s = self.string(sec, key)?;
        match options.iter().find(|(name, _)| *name == s) {
            Some((_, v)) => Some(*v),
            None => {
                let names: Vec<&str> = options.iter().map(|(n, _)| *n).collect();
                self.issue(sec.field(key), format!("unknown value \"{s}\" (expected one of {})", names.join(", ")));
                None
            }
        }
    }

    fn numbers<'t>(&mut self, sec: &mut Section<'t>, key: &'t str, range: Range) -> Option<Vec<f64>> {
        let Value::Array(items) = self.get(sec, key)? else {
            self.issue(sec.field(key), "expected an array of numbers");
            return None;
        };
        let mut out = Vec::with_capacity(items.len());
        let mut ok = true;
        for (k, item) in items.iter().enumerate() {
            let x = match item {
                Value::Float(f) => *f,
                Value::Integer(i) => *i as f64,
                other => {
                    self.issue(format!("{}[{k}]", sec.field(key)), format!("expected a number, found {}", other.type_str()));
                    ok = false;
                    continue;
                }
            };
            if let Some(msg) = range.check(x) {
                self.issue(format!("{}[{k}]", sec.field(key)), format!("{msg} (got {x})"));
                ok = false;
            }
            out.push(x);
        }
        ok.then_some(out)
    }

    fn table<'t>(&mut self, sec: &mut Section<'t>, key: &'t str) -> Option<Section<'t>> {
        let field = sec.field(key);
        match self.get(sec, key)? {
            Value::Table(t) => Some(Section::new(&field, t)),
            other => {
                self.issue(field, format!("expected a table, found {}", other.type_str()));
                None
            }
        }
    }

    fn finish(&mut self, sec: Section<'_>) {
        for key in sec.table.keys() {
            if !sec.used.contains(key.as_str()) {
                self.issue(sec.field(key), "unknown key");
            }
        }
    }
}

/// Line (1-based) where a dotted key is defined, found by walking table
/// headers and key assignments.
fn line_of(src: &str, field: &str) -> Option<usize> {
    let path: Vec<&str> = field.split('.').map(|p| p.split('[').next().unwrap_or(p)).collect();
    let mut header: Vec<String> = Vec::new();
    let mut best: Option<(usize, usize)> = None;
    for (k, raw) in src.lines().enumerate() {
        let line = raw.trim();
        if line.starts_with('[') {
            let inner = line.trim_start_matches('[').split(']').next().unwrap_or("");
            header = inner.split('.').map(|s| s.trim().trim_matches('"').to_string()).collect();
            let depth = header.len();
            if depth <= path.len() && header.iter().zip(&path).all(|(a, b)| a == b) && best.is_none_or(|(d, _)| depth > d) {
                best = Some((depth, k + 1));
            }
            continue;
        }
        let Some((key, _)) = line.split_once('=') else { continue };
        let mut full = header.clone();
        full.extend(key.trim().split('.').map(|s| s.trim().trim_matches('"').to_string()));
        let depth = full.len().min(path.len());
        if full.len() <= path.len()
            && full.iter().zip(&path).all(|(a, b)| a == b)
            && best.is_none_or(|(d, _)| depth >= d)
        {
            best = Some((depth + 1, k + 1));
        }
    }
    best.map(|(_, l)| l)
}

fn parse_shape(r: &mut Reader<'_>, sec: &mut Section<'_>, key: &'static str) -> Option<CoefficientShape> {
    let field = sec.field(key);
    match sec.table.get(key) {
        None => {
            sec.used.insert(key);
            r.issue(field, "missing required value");
            None
        }
        Some(Value::Integer(_) | Value::Float(_)) => {
            let value = r.number(sec, key, Range::NonNegative)?;
            Some(CoefficientShape::Constant { value })
        }
        Some(Value::Table(_)) => {
            let mut t = r.table(sec, key)?;
            let kind = r.choice(
                &mut t,
                "kind",
                &[("constant", 0), ("affine", 1), ("bell", 2), ("scaled_bell", 3)],
            );
            let shape = match kind {
                Some(0) => r.required(&mut t, "value", Range::NonNegative).map(|value| CoefficientShape::Constant { value }),
                Some(1) => {
                    let c0 = r.required(&mut t, "c0", Range::NonNegative);
                    let c1 = r.required(&mut t, "c1", Range::NonNegative);
                    Some(CoefficientShape::Affine { c0: c0?, c1: c1? })
                }
                Some(2) => {
                    let tau0 = r.required(&mut t, "tau0", Range::NonNegative);
                    let amplitude = r.required(&mut t, "amplitude", Range::NonNegative);
                    let center = r.required(&mut t, "center", Range::Any);
                    let sigma = r.required(&mut t, "sigma", Range::Positive);
                    Some(CoefficientShape::Bell {
                        tau0: tau0?,
                        amplitude: amplitude?,
                        center: center?,
                        sigma: sigma?,
                    })
                }
                Some(_) => {
                    let tau0 = r.required(&mut t, "tau0", Range::NonNegative);
                    let alpha = r.required(&mut t, "alpha", Range::Positive);
                    let center = r.required(&mut t, "center", Range::Any);
                    Some(CoefficientShape::ScaledBell {
                        tau0: tau0?,
                        alpha: alpha?,
                        center: center?,
                    })
                }
                None => {
                    if !t.has("kind") {
                        r.issue(t.field("kind"), "missing required value");
                    }
                    // mark the remaining keys so only `kind` is reported
                    t.used.extend(t.table.keys().map(|k| k.as_str()));
                    None
                }
            };
            r.finish(t);
            shape
        }
        Some(other) => {
            sec.used.insert(key);
            r.issue(field, format!("expected a number or a table, found {}", other.type_str()));
            None
        }
    }
}

fn parse_model(r: &mut Reader<'_>, root: &mut Section<'_>) -> Option<CoefficientSet> {
    let Some(mut m) = r.table(root, "model") else {
        if !root.has("model") {
            r.issue("model".into(), "missing required section");
        }
        return None;
    };
    let lambda = r.required(&mut m, "lambda", Range::NonNegative);
    let gamma = r.required(&mut m, "gamma", Range::Positive);
    let x0 = r.number_or(&mut m, "x0", 0.0, Range::NonNegative);
    let tau = parse_shape(r, &mut m, "tau");
    let beta = parse_shape(r, &mut m, "beta");
    let mu = parse_shape(r, &mut m, "mu");
    let kernel = if m.has("kernel") {
        r.choice(&mut m, "kernel", &[("uniform", Kernel::Uniform)])
    } else {
        Some(Kernel::Uniform)
    };
    r.finish(m);
    Some(CoefficientSet {
        lambda: lambda?,
        gamma: gamma?,
        x0,
        tau: tau?,
        beta: beta?,
        mu: mu?,
        kernel: kernel?,
    })
}

fn parse_grid(r: &mut Reader<'_>, root: &mut Section<'_>, model: Option<&CoefficientSet>) -> Option<GridConfig> {
    let default_xmax = model.map(|m| m.default_xmax()).unwrap_or(10.0);
    let mut grid = GridConfig {
        xmax: default_xmax,
        n: 800,
        spacing: Spacing::Uniform,
    };
    let Some(mut g) = r.table(root, "grid") else {
        return (!root.has("grid")).then_some(grid);
    };
    let mut ok = true;
    if g.has("xmax") {
        match r.number(&mut g, "xmax", Range::Positive) {
            Some(x) => grid.xmax = x,
            None => ok = false,
        }
    }
    if g.has("n") {
        match r.count(&mut g, "n", 3) {
            Some(n) => grid.n = n,
            None => ok = false,
        }
    }
    match g.table.get("spacing") {
        None => {}
        Some(Value::String(_)) => match r.choice(&mut g, "spacing", &[("uniform", ())]) {
            Some(()) => grid.spacing = Spacing::Uniform,
            None => ok = false,
        },
        Some(Value::Table(_)) => {
            let mut s = r.table(&mut g, "spacing")?;
            match r.required(&mut s, "geometric", Range::Positive) {
                Some(ratio) if ratio >= 1.0 => grid.spacing = Spacing::Geometric(ratio),
                Some(ratio) => {
                    r.issue(s.field("geometric"), format!("ratio must be >= 1 (got {ratio})"));
                    ok = false;
                }
                None => ok = false,
            }
            r.finish(s);
        }
        Some(other) => {
            g.used.insert("spacing");
            r.issue(g.field("spacing"), format!("expected \"uniform\" or {{ geometric = ratio }}, found {}", other.type_str()));
            ok = false;
        }
    }
    if let Some(m) = model {
        if grid.xmax <= m.x0 {
            r.issue(g.field("xmax"), format!("must exceed model.x0 = {}", m.x0));
            ok = false;
        }
    }
    r.finish(g);
    ok.then_some(grid)
}

fn parse_eigen_options<'t>(r: &mut Reader<'_>, sec: &mut Section<'t>) -> EigenOptions {
    let d = EigenOptions::default();
    EigenOptions {
        tol_factor: r.number_or(sec, "tol_factor", d.tol_factor, Range::Positive),
        max_iterations: r.count(sec, "max_iterations", 1).unwrap_or(d.max_iterations),
        warm_start_iterations: d.warm_start_iterations,
        trusted_fraction: r.number_or(sec, "trusted_fraction", d.trusted_fraction, Range::Fraction),
    }
}

fn parse_integrator<'t>(r: &mut Reader<'_>, sec: &mut Section<'t>, snapshots: Vec<f64>) -> IntegratorOptions {
    let d = IntegratorOptions::default();
    let scheme = if sec.has("scheme") {
        r.choice(sec, "scheme", &[("upwind", TransportScheme::Upwind), ("minmod", TransportScheme::Minmod)])
            .unwrap_or(d.scheme)
    } else {
        d.scheme
    };
    IntegratorOptions {
        scheme,
        cfl: r.number_or(sec, "cfl", d.cfl, Range::Fraction),
        loss_factor: d.loss_factor,
        monomer_factor: d.monomer_factor,
        fixed_dt: r.number(sec, "fixed_dt", Range::Positive),
        sample_interval: r.number_or(sec, "sample_interval", d.sample_interval, Range::Positive),
        snapshot_times: snapshots,
        min_dt: d.min_dt,
        max_steps: d.max_steps,
    }
}

static EMPTY: LazyLock<Table> = LazyLock::new(Table::new);

/// The named sub-table, or an empty one so defaults apply.
fn section_or_empty<'t>(r: &mut Reader<'_>, root: &mut Section<'t>, key: &'t str) -> Section<'t> {
    if root.has(key) {
        r.table(root, key).unwrap_or_else(|| Section::new(key, &EMPTY))
    } else {
        root.used.insert(key);
        Section::new(key, &EMPTY)
    }
}

fn parse_eigen(r: &mut Reader<'_>, root: &mut Section<'_>, model: Option<&CoefficientSet>) -> EigenConfig {
    let mut s = section_or_empty(r, root, "eigen");
    let vbar = model.map(|m| m.vbar()).unwrap_or(0.0);
    let v = r.numbers(&mut s, "v", Range::NonNegative).unwrap_or_else(|| vec![vbar]);
    let adjoint = r.boolean(&mut s, "adjoint").unwrap_or(true);
    let options = parse_eigen_options(r, &mut s);
    r.finish(s);
    EigenConfig { v, adjoint, options }
}

fn parse_steady_options<'t>(r: &mut Reader<'_>, s: &mut Section<'t>) -> SteadyOptions {
    let d = SteadyOptions::default();
    SteadyOptions {
        v_max_factor: r.number_or(s, "v_max_factor", d.v_max_factor, Range::Positive),
        root_tol: r.number_or(s, "root_tol", d.root_tol, Range::Positive),
        scan_points: r.count(s, "scan_points", 2).unwrap_or(d.scan_points),
        max_bisections: r.count(s, "max_bisections", 1).unwrap_or(d.max_bisections),
        eigen: parse_eigen_options(r, s),
    }
}

fn parse_steady(r: &mut Reader<'_>, root: &mut Section<'_>) -> SteadyOptions {
    let mut s = section_or_empty(r, root, "steady");
    let opts = parse_steady_options(r, &mut s);
    r.finish(s);
    opts
}

fn parse_simulate(r: &mut Reader<'_>, root: &mut Section<'_>) -> SimulateConfig {
    let mut s = section_or_empty(r, root, "simulate");
    let t_end = r.number_or(&mut s, "t_end", 200.0, Range::Positive);
    let v0 = r.number(&mut s, "v0", Range::NonNegative);
    let dose = r.number_or(&mut s, "dose", 1.0, Range::NonNegative);
    let threshold = r.number(&mut s, "threshold", Range::Positive);
    let max_drift = r.number_or(&mut s, "max_drift", 0.05, Range::Positive);
    let probes = r.numbers(&mut s, "probe_times", Range::NonNegative).unwrap_or_else(|| vec![96.0]);
    let integrator = parse_integrator(r, &mut s, probes);
    let stability = if s.has("stability") {
        r.table(&mut s, "stability").map(|mut st| {
            let epsilon = r.number_or(&mut st, "epsilon", 1e-3, Range::NonNegative);
            let horizon = r.number_or(&mut st, "horizon", 2000.0, Range::Positive);
            r.finish(st);
            StabilityConfig { epsilon, horizon }
        })
    } else {
        None
    };
    r.finish(s);
    SimulateConfig {
        t_end,
        v0,
        dose,
        threshold,
        max_drift,
        integrator,
        stability,
    }
}

const AXES: [(&str, SweepAxis); 5] = [
    ("bell_amplitude", SweepAxis::BellAmplitude),
    ("fragmentation_slope", SweepAxis::FragmentationSlope),
    ("tightness", SweepAxis::Tightness),
    ("peak_locus", SweepAxis::PeakLocus),
    ("dose", SweepAxis::Dose),
];

fn parse_sweep(r: &mut Reader<'_>, root: &mut Section<'_>, model: Option<&CoefficientSet>) -> Option<SweepConfig> {
    let Some(mut s) = r.table(root, "sweep") else {
        if !root.has("sweep") {
            r.issue("sweep".into(), "missing required section");
        }
        return None;
    };
    let axis = if s.has("axis") {
        r.choice(&mut s, "axis", &AXES)
    } else {
        s.used.insert("axis");
        r.issue(s.field("axis"), "missing required value");
        None
    };
    let values = match (s.has("values"), s.has("log10")) {
        (true, false) => r.numbers(&mut s, "values", Range::Any),
        (false, true) => r.table(&mut s, "log10").and_then(|mut l| {
            let start = r.required(&mut l, "start", Range::Any);
            let stop = r.required(&mut l, "stop", Range::Any);
            let step = r.required(&mut l, "step", Range::Positive);
            let out = match (start, stop, step) {
                (Some(a), Some(b), Some(h)) if b >= a => {
                    let k = ((b - a) / h + 1e-9).floor() as usize;
                    Some((0..=k).map(|i| 10f64.powf(a + h * i as f64)).collect())
                }
                (Some(_), Some(_), Some(_)) => {
                    r.issue(l.field("stop"), "must be >= start");
                    None
                }
                _ => None,
            };
            r.finish(l);
            out
        }),
        (true, true) => {
            s.used.insert("values");
            s.used.insert("log10");
            r.issue(s.field("values"), "give either `values` or `log10`, not both");
            None
        }
        (false, false) => {
            r.issue(s.field("values"), "missing required value (or a `log10` range)");
            None
        }
    };
    if values.as_ref().is_some_and(|v| v.is_empty()) {
        r.issue(s.field("values"), "must not be empty");
    }
    let mode = if s.has("mode") {
        r.choice(
            &mut s,
            "mode",
            &[("dynamics", SweepMode::Dynamics), ("eigen", SweepMode::Eigen), ("steady", SweepMode::Steady)],
        )
    } else {
        axis.map(|a| a.default_mode())
    };
    let t_end = r.number_or(&mut s, "t_end", 200.0, Range::Positive);
    let v0 = r.number(&mut s, "v0", Range::NonNegative);
    let dose = r.number_or(&mut s, "dose", 1.0, Range::NonNegative);
    let threshold = r.number(&mut s, "threshold", Range::Positive);
    let probe_time = r.number_or(&mut s, "probe_time", 96.0, Range::NonNegative);
    let max_drift = r.number_or(&mut s, "max_drift", 0.05, Range::Positive);
    let integrator = parse_integrator(r, &mut s, vec![]);
    let steady = parse_steady_options(r, &mut s);
    let eigen = steady.eigen.clone();
    if let (Some(axis), Some(model), Some(values)) = (axis, model, values.as_ref()) {
        if let Some(&first) = values.first() {
            if let Err(e) = axis.apply(model, first) {
                r.issue(s.field("axis"), e.to_string());
            }
        }
    }
    r.finish(s);
    Some(SweepConfig {
        axis: axis?,
        values: values?,
        mode: mode?,
        t_end,
        v0,
        dose,
        threshold,
        probe_time,
        max_drift,
        integrator,
        eigen,
        steady,
    })
}

fn parse_validate(r: &mut Reader<'_>, root: &mut Section<'_>, force_discrete: bool) -> ValidateConfig {
    let mut s = section_or_empty(r, root, "validate");
    let duality_samples = r.count(&mut s, "duality_samples", 1).unwrap_or(100);
    let mut discrete = None;
    if s.has("discrete") {
        if let Some(mut d) = r.table(&mut s, "discrete") {
            let base = DiscreteConfig::default();
            let p = base.params;
            let params = MaselParams {
                lambda: r.number_or(&mut d, "lambda", p.lambda, Range::NonNegative),
                gamma: r.number_or(&mut d, "gamma", p.gamma, Range::Positive),
                tau: r.number_or(&mut d, "tau", p.tau, Range::NonNegative),
                beta: r.number_or(&mut d, "beta", p.beta, Range::NonNegative),
                mu: r.number_or(&mut d, "mu", p.mu, Range::NonNegative),
                n0: r.count(&mut d, "n0", 1).unwrap_or(p.n0),
            };
            let n_max = r.count(&mut d, "n_max", params.n0 + 1).unwrap_or_else(|| params.default_truncation());
            let t_end = r.number_or(&mut d, "t_end", base.t_end, Range::Positive);
            let xmax = r.number_or(&mut d, "xmax", base.xmax, Range::Positive);
            let n = r.count(&mut d, "n", 3).unwrap_or(base.n);
            r.finish(d);
            discrete = Some(DiscreteConfig {
                params,
                n_max,
                t_end,
                xmax,
                n,
            });
        }
    } else if force_discrete {
        discrete = Some(DiscreteConfig::default());
    }
    r.finish(s);
    ValidateConfig {
        duality_samples,
        discrete,
    }
}

fn parse_output(r: &mut Reader<'_>, root: &mut Section<'_>) -> OutputConfig {
    let mut s = section_or_empty(r, root, "output");
    let dir = r.string(&mut s, "dir").unwrap_or("prion-out").to_string();
    let csv = r.boolean(&mut s, "csv").unwrap_or(true);
    r.finish(s);
    OutputConfig { dir, csv }
}

/// Overrides applied on top of the file contents.
#[derive(Debug, Clone, Copy, Default)]
pub struct ParseContext {
    /// Experiment chosen on the command line.
    pub experiment: Option<Experiment>,
    /// Force the discrete comparison in `validate`.
    pub discrete: bool,
}

pub fn parse_config(text: &str) -> Result<RunConfig, ConfigErrors> {
    parse_config_with(text, ParseContext::default())
}

pub fn parse_config_with(text: &str, ctx: ParseContext) -> Result<RunConfig, ConfigErrors> {
    let table: Table = text.parse().map_err(|e: toml::de::Error| {
        let line = e.span().map(|sp| text[..sp.start].matches('\n').count() + 1);
        ConfigErrors {
            issues: vec![ConfigIssue {
                field: "<document>".into(),
                line,
                message: e.message().to_string(),
            }],
        }
    })?;
    let mut r = Reader {
        src: text,
        issues: Vec::new(),
    };
    let mut root = Section::new("", &table);
    let experiment = match (r.string(&mut root, "experiment"), ctx.experiment) {
        (Some(s), hint) => match Experiment::parse(s) {
            Some(e) if hint.is_none_or(|h| h == e) => Some(e),
            Some(e) => {
                r.issue("experiment".into(), format!("config declares \"{e}\" but \"{}\" was requested", hint.unwrap()));
                None
            }
            None => {
                r.issue("experiment".into(), format!("unknown experiment \"{s}\""));
                None
            }
        },
        (None, Some(h)) if !root.has("experiment") => Some(h),
        (None, _) => {
            if !root.has("experiment") {
                r.issue("experiment".into(), "missing required value");
            }
            None
        }
    };
    let seed = match root.table.get("seed") {
        Some(Value::Integer(i)) if *i >= 0 => {
            root.used.insert("seed");
            *i as u64
        }
        Some(_) => {
            root.used.insert("seed");
            r.issue("seed".into(), "expected a nonnegative integer");
            0
        }
        None => 0,
    };
    let model = if experiment == Some(Experiment::Validate) && !root.has("model") {
        Some(default_model())
    } else {
        parse_model(&mut r, &mut root)
    };
    let grid = parse_grid(&mut r, &mut root, model.as_ref());
    let mut cfg_eigen = None;
    let mut cfg_steady = None;
    let mut cfg_simulate = None;
    let mut cfg_sweep = None;
    let mut cfg_validate = None;
    match experiment {
        Some(Experiment::Eigen) => cfg_eigen = Some(parse_eigen(&mut r, &mut root, model.as_ref())),
        Some(Experiment::Steady) => cfg_steady = Some(parse_steady(&mut r, &mut root)),
        Some(Experiment::Simulate) => cfg_simulate = Some(parse_simulate(&mut r, &mut root)),
        Some(Experiment::Sweep) => cfg_sweep = parse_sweep(&mut r, &mut root, model.as_ref()),
        Some(Experiment::Validate) => cfg_validate = Some(parse_validate(&mut r, &mut root, ctx.discrete)),
        None => {}
    }
    for other in ["eigen", "steady", "simulate", "sweep", "validate"] {
        if root.has(other) && !root.used.contains(other) {
            root.used.insert(other);
            r.issue(other.into(), format!("section does not apply to experiment \"{}\"", experiment.map_or("?", |e| e.name())));
        }
    }
    let output = parse_output(&mut r, &mut root);
    r.finish(root);

    // coefficient positivity on the actual grid
    if r.issues.is_empty() {
        if let (Some(m), Some(g)) = (&model, &grid) {
            if let Err(e) = m.validate() {
                r.issue("model".into(), e.to_string());
            } else {
                match g.build(m.x0) {
                    Ok(grid) => {
                        if let Err(e) = Discretization::new(m, grid) {
                            let field = match &e {
                                prion_core::ModelError::NegativeCoefficient { function, .. } => format!("model.{function}"),
                                _ => "model".into(),
                            };
                            r.issue(field, e.to_string());
                        }
                    }
                    Err(e) => r.issue("grid".into(), e.to_string()),
                }
            }
        }
    }
    if !r.issues.is_empty() {
        return Err(ConfigErrors { issues: r.issues });
    }
    Ok(RunConfig {
        experiment: experiment.expect("checked"),
        seed,
        model: model.expect("checked"),
        grid: grid.expect("checked"),
        eigen: cfg_eigen,
        steady: cfg_steady,
        simulate: cfg_simulate,
        sweep: cfg_sweep,
        validate: cfg_validate,
        output,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
experiment = "eigen"

[model]
lambda = 2400
gamma = 4
tau = 0.001
beta = { kind = "affine", c0 = 0, c1 = 0.03 }
mu = 0.05
"#;

    #[test]
    fn minimal_eigen_config_gets_defaults() {
        let cfg = parse_config(MINIMAL).unwrap();
        assert_eq!(cfg.experiment, Experiment::Eigen);
        assert_eq!(cfg.grid.n, 800);
        assert!((cfg.grid.xmax - 0.05 / 0.03 * 10.0).abs() < 1e-12);
        let e = cfg.eigen.unwrap();
        assert_eq!(e.v, vec![600.0]);
        assert_eq!(e.options, EigenOptions::default());
        assert_eq!(cfg.model, CoefficientSet::constant(2400.0, 4.0, 0.001, 0.03, 0.05));
    }

    #[test]
    fn negative_gamma_is_a_single_error() {
        let text = MINIMAL.replace("gamma = 4", "gamma = -4");
        let err = parse_config(&text).unwrap_err();
        assert_eq!(err.issues.len(), 1, "{err}");
        assert_eq!(err.issues[0].field, "model.gamma");
        assert_eq!(err.issues[0].line, Some(6));
    }

    #[test]
    fn all_errors_are_collected() {
        let text = r#"
experiment = "eigen"
colour = "blue"

[model]
lambda = "lots"
gamma = 4
tau = { kind = "bell", tau0 = 0.001, amplitude = 0.01, center = 2 }
beta = 0.03
mu = -1

[grid]
n = 2
"#;
        let err = parse_config(text).unwrap_err();
        let fields: Vec<&str> = err.issues.iter().map(|i| i.field.as_str()).collect();
        for f in ["colour", "model.lambda", "model.tau.sigma", "model.mu", "grid.n"] {
            assert!(fields.contains(&f), "{f} missing from {fields:?}");
        }
        let colour = err.issues.iter().find(|i| i.field == "colour").unwrap();
        assert_eq!(colour.line, Some(3));
        let sigma = err.issues.iter().find(|i| i.field == "model.tau.sigma").unwrap();
        assert_eq!(sigma.line, Some(8));
    }

    #[test]
    fn syntax_errors_carry_a_line() {
        let err = parse_config("experiment = \"eigen\"\n[model\n").unwrap_err();
        assert_eq!(err.issues.len(), 1);
        assert_eq!(err.issues[0].line, Some(2));
    }

    #[test]
    fn foreign_sections_are_rejected() {
        let text = format!("{MINIMAL}\n[sweep]\naxis = \"dose\"\nvalues = [1]\n");
        let err = parse_config(&text).unwrap_err();
        assert_eq!(err.issues[0].field, "sweep");
    }

    #[test]
    fn log10_range_expands() {
        let text = r#"
experiment = "sweep"
[model]
lambda = 2400
gamma = 4
tau = { kind = "scaled_bell", tau0 = 0.001, alpha = 1, center = 10 }
beta = { kind = "affine", c0 = 0, c1 = 0.03 }
mu = 0.05
[sweep]
axis = "tightness"
log10 = { start = -3, stop = 0, step = 0.2 }
"#;
        let cfg = parse_config(text).unwrap();
        let s = cfg.sweep.unwrap();
        assert_eq!(s.values.len(), 16);
        assert!((s.values[0] - 1e-3).abs() < 1e-18);
        assert!((s.values[15] - 1.0).abs() < 1e-12);
        assert_eq!(s.mode, SweepMode::Eigen);
    }

    #[test]
    fn incompatible_axis_is_reported() {
        let text = r#"
experiment = "sweep"
[model]
lambda = 2400
gamma = 4
tau = 0.001
beta = { kind = "affine", c0 = 0, c1 = 0.03 }
mu = 0.05
[sweep]
axis = "bell_amplitude"
values = [0.1]
"#;
        let err = parse_config(text).unwrap_err();
        assert_eq!(err.issues.len(), 1);
        assert_eq!(err.issues[0].field, "sweep.axis");
    }

    #[test]
    fn hint_must_match_declared_experiment() {
        let ctx = ParseContext {
            experiment: Some(Experiment::Steady),
            discrete: false,
        };
        assert!(parse_config_with(MINIMAL, ctx).is_err());
        let no_key = MINIMAL.replace("experiment = \"eigen\"", "");
        let cfg = parse_config_with(&no_key, ctx).unwrap();
        assert_eq!(cfg.experiment, Experiment::Steady);
        assert!(cfg.steady.is_some());
    }

    #[test]
    fn validate_needs_no_model() {
        let ctx = ParseContext {
            experiment: Some(Experiment::Validate),
            discrete: true,
        };
        let cfg = parse_config_with("", ctx).unwrap();
        assert_eq!(cfg.model, default_model());
        assert!(cfg.validate.unwrap().discrete.is_some());
    }
}
