//! Named, reproducible experiments driven by TOML configuration files.
//!
//! A run validates the whole configuration first, computes every check in memory and only
//! then writes `out/<scenario>/<timestamp>/{paths/, reports/, manifest.json}`.

mod builtin;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::characteristics::CharError;
use crate::noise::NoiseError;
use crate::sde::SolveError;
use crate::transform::{TransformError, GAUGE_NAMES, TIME_ACTION_NAMES, TRANSFORMATION_NAMES};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("config error: {0}")]
    Config(String),
    #[error("io error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Noise(#[from] NoiseError),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Transform(#[from] TransformError),
    #[error(transparent)]
    Characteristics(#[from] CharError),
}

impl ScenarioError {
    fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io { path: path.to_path_buf(), source }
    }
}

/// Every noise kind understood by some scenario.
pub const NOISE_KINDS: &[&str] =
    &["brownian", "levy", "alpha_stable", "discrete_iterated", "nonmarkov_brownian", "lifted_brownian"];

/// Every SDE name understood by some scenario.
pub const SDE_NAMES: &[&str] = &["marcus_exp_fields", "affine_gl2"];

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    pub kind: Option<String>,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransformationSpec {
    pub name: Option<String>,
    pub gauge: Option<String>,
    pub time_action: Option<String>,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
}

/// The file format of a scenario; unset fields take the scenario defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub scenario: String,
    pub seed: Option<u64>,
    pub step: Option<f64>,
    pub horizon: Option<f64>,
    pub paths: Option<usize>,
    #[serde(default)]
    pub noise: NoiseSpec,
    pub sde: Option<String>,
    #[serde(default)]
    pub transformation: TransformationSpec,
    /// Subset of the scenario's checks to run; empty runs all of them.
    #[serde(default)]
    pub checks: Vec<String>,
    pub output: Option<PathBuf>,
    /// Threshold overrides keyed by check name.
    #[serde(default)]
    pub tolerances: BTreeMap<String, f64>,
    /// Number of sample paths written as CSV.
    pub csv_paths: Option<usize>,
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self, ScenarioError> {
        toml::from_str(text).map_err(|e| ScenarioError::Config(e.to_string()))
    }

    pub fn from_file(path: &Path) -> Result<Self, ScenarioError> {
        let text = fs::read_to_string(path).map_err(|e| ScenarioError::io(path, e))?;
        Self::from_toml(&text)
    }

    /// Default configuration of a builtin scenario.
    pub fn builtin(name: &str) -> Result<Self, ScenarioError> {
        let info = scenario_info(name)?;
        Ok(Self { scenario: info.name.into(), ..Default::default() })
    }
}

/// How a check statistic is compared with its threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Comparison {
    Below,
    AtMost,
    Above,
}

impl Comparison {
    pub fn holds(self, statistic: f64, threshold: f64) -> bool {
        match self {
            Comparison::Below => statistic < threshold,
            Comparison::AtMost => statistic <= threshold,
            Comparison::Above => statistic > threshold,
        }
    }

    fn symbol(self) -> &'static str {
        match self {
            Comparison::Below => "<",
            Comparison::AtMost => "<=",
            Comparison::Above => ">",
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct CheckInfo {
    pub name: &'static str,
    pub threshold: f64,
    pub comparison: Comparison,
    pub description: &'static str,
}

#[derive(Debug, Clone, Copy)]
pub struct ScenarioInfo {
    pub name: &'static str,
    pub summary: &'static str,
    pub description: &'static str,
    pub seed: u64,
    pub step: f64,
    pub horizon: f64,
    pub paths: usize,
    /// Accepted noise kinds; the first is the default.
    pub noise_kinds: &'static [&'static str],
    /// Noise parameters and their defaults.
    pub noise_params: &'static [(&'static str, f64)],
    pub sdes: &'static [&'static str],
    pub transformations: &'static [&'static str],
    pub gauges: &'static [&'static str],
    pub time_actions: &'static [&'static str],
    /// Transformation parameters and their defaults.
    pub transformation_params: &'static [(&'static str, f64)],
    pub checks: &'static [CheckInfo],
}

pub fn scenarios() -> &'static [ScenarioInfo] {
    builtin::CATALOG
}

pub fn scenario_info(name: &str) -> Result<&'static ScenarioInfo, ScenarioError> {
    scenarios().iter().find(|s| s.name == name).ok_or_else(|| {
        let known: Vec<&str> = scenarios().iter().map(|s| s.name).collect();
        ScenarioError::Config(format!("unknown scenario `{name}`; known: {}", known.join(", ")))
    })
}

/// A configuration with every default filled in and every name checked.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResolvedConfig {
    pub scenario: String,
    pub seed: u64,
    pub step: f64,
    pub horizon: f64,
    pub paths: usize,
    pub noise: String,
    pub noise_params: BTreeMap<String, f64>,
    pub sde: Option<String>,
    pub transformation: Option<String>,
    pub gauge: Option<String>,
    pub time_action: Option<String>,
    pub transformation_params: BTreeMap<String, f64>,
    pub checks: Vec<String>,
    pub thresholds: BTreeMap<String, f64>,
    pub csv_paths: usize,
    #[serde(skip)]
    pub output: PathBuf,
}

impl ResolvedConfig {
    pub fn info(&self) -> &'static ScenarioInfo {
        scenario_info(&self.scenario).expect("resolved configs name a builtin scenario")
    }

    pub fn noise_param(&self, key: &str) -> f64 {
        self.noise_params[key]
    }

    pub fn transformation_param(&self, key: &str) -> f64 {
        self.transformation_params[key]
    }

    pub fn wants(&self, check: &str) -> bool {
        self.checks.iter().any(|c| c == check)
    }

    pub fn threshold(&self, check: &str) -> f64 {
        self.thresholds[check]
    }
}

fn pick(
    what: &str,
    given: Option<&String>,
    allowed: &[&'static str],
    global: &[&str],
) -> Result<Option<String>, ScenarioError> {
    match given {
        None => Ok(allowed.first().map(|s| s.to_string())),
        Some(name) if !global.contains(&name.as_str()) => {
            Err(ScenarioError::Config(format!("unknown {what} `{name}`; known: {}", global.join(", "))))
        }
        Some(name) if !allowed.contains(&name.as_str()) => Err(ScenarioError::Config(format!(
            "{what} `{name}` is not supported by this scenario; supported: {}",
            if allowed.is_empty() { "none".to_string() } else { allowed.join(", ") }
        ))),
        Some(name) => Ok(Some(name.clone())),
    }
}

fn merge_params(
    what: &str,
    defaults: &[(&str, f64)],
    given: &BTreeMap<String, f64>,
) -> Result<BTreeMap<String, f64>, ScenarioError> {
    let mut out: BTreeMap<String, f64> = defaults.iter().map(|(k, v)| (k.to_string(), *v)).collect();
    for (k, v) in given {
        if !out.contains_key(k) {
            let known: Vec<&str> = defaults.iter().map(|(k, _)| *k).collect();
            return Err(ScenarioError::Config(format!("unknown {what} parameter `{k}`; known: {}", known.join(", "))));
        }
        if !v.is_finite() {
            return Err(ScenarioError::Config(format!("{what} parameter `{k}` must be finite")));
        }
        out.insert(k.clone(), *v);
    }
    Ok(out)
}

/// Fills defaults and checks every name and number; nothing is written before this succeeds.
pub fn resolve(config: &ScenarioConfig) -> Result<ResolvedConfig, ScenarioError> {
    let info = scenario_info(&config.scenario)?;
    let step = config.step.unwrap_or(info.step);
    let horizon = config.horizon.unwrap_or(info.horizon);
    let paths = config.paths.unwrap_or(info.paths);
    if !(step > 0.0 && step.is_finite()) {
        return Err(ScenarioError::Config(format!("step {step} must be positive")));
    }
    if !(horizon > 0.0 && horizon.is_finite()) || step > horizon {
        return Err(ScenarioError::Config(format!("horizon {horizon} must be positive and at least one step")));
    }
    if paths < 1 {
        return Err(ScenarioError::Config("paths must be at least 1".into()));
    }
    let noise = pick("noise", config.noise.kind.as_ref(), info.noise_kinds, NOISE_KINDS)?
        .ok_or_else(|| ScenarioError::Config("scenario declares no noise".into()))?;
    let t = &config.transformation;
    let resolved = ResolvedConfig {
        scenario: info.name.to_string(),
        seed: config.seed.unwrap_or(info.seed),
        step,
        horizon,
        paths,
        noise_params: merge_params("noise", info.noise_params, &config.noise.params)?,
        noise,
        sde: pick("sde", config.sde.as_ref(), info.sdes, SDE_NAMES)?,
        transformation: pick("transformation", t.name.as_ref(), info.transformations, TRANSFORMATION_NAMES)?,
        gauge: pick("gauge", t.gauge.as_ref(), info.gauges, GAUGE_NAMES)?,
        time_action: pick("time action", t.time_action.as_ref(), info.time_actions, TIME_ACTION_NAMES)?,
        transformation_params: merge_params("transformation", info.transformation_params, &t.params)?,
        checks: if config.checks.is_empty() {
            info.checks.iter().map(|c| c.name.to_string()).collect()
        } else {
            for c in &config.checks {
                if !info.checks.iter().any(|k| k.name == c) {
                    return Err(unknown_check(info, c));
                }
            }
            config.checks.clone()
        },
        thresholds: {
            let mut th: BTreeMap<String, f64> = info.checks.iter().map(|c| (c.name.to_string(), c.threshold)).collect();
            for (k, v) in &config.tolerances {
                if !th.contains_key(k) {
                    return Err(unknown_check(info, k));
                }
                if v.is_nan() {
                    return Err(ScenarioError::Config(format!("tolerance for `{k}` is NaN")));
                }
                th.insert(k.clone(), *v);
            }
            th
        },
        csv_paths: config.csv_paths.unwrap_or(5),
        output: config.output.clone().unwrap_or_else(|| PathBuf::from("out")),
    };
    let mut resolved = resolved;
    if t.time_action.is_none() {
        if let Some(a) = builtin::default_time_action(&resolved.scenario, &resolved.noise) {
            resolved.time_action = Some(a);
        }
    }
    builtin::validate(&resolved)?;
    Ok(resolved)
}

fn unknown_check(info: &ScenarioInfo, name: &str) -> ScenarioError {
    let known: Vec<&str> = info.checks.iter().map(|c| c.name).collect();
    ScenarioError::Config(format!("scenario `{}` has no check `{name}`; known: {}", info.name, known.join(", ")))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub pass: bool,
    pub statistic: f64,
    pub threshold: f64,
}

/// The stable report shape.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioReport {
    pub scenario: String,
    pub checks: Vec<CheckResult>,
    pub seeds: BTreeMap<String, u64>,
}

impl ScenarioReport {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn check(&self, name: &str) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// Everything a run produces, before anything touches the disk.
#[derive(Debug, Clone)]
pub struct ScenarioOutcome {
    pub config: ResolvedConfig,
    pub report: ScenarioReport,
    /// Relative path and contents of every file under the run directory, manifest excluded.
    pub files: Vec<(String, String)>,
}

/// Collects check results and artifacts inside a runner.
pub(crate) struct Recorder<'a> {
    config: &'a ResolvedConfig,
    checks: Vec<CheckResult>,
    seeds: BTreeMap<String, u64>,
    files: Vec<(String, String)>,
}

impl<'a> Recorder<'a> {
    fn new(config: &'a ResolvedConfig) -> Self {
        Self { config, checks: Vec::new(), seeds: BTreeMap::new(), files: Vec::new() }
    }

    /// Records a check if it was requested.
    pub(crate) fn check(&mut self, name: &str, statistic: f64) {
        if !self.config.wants(name) {
            return;
        }
        let info = self.config.info().checks.iter().find(|c| c.name == name).expect("check is declared in the catalog");
        let threshold = self.config.threshold(name);
        let pass = !statistic.is_nan() && info.comparison.holds(statistic, threshold);
        self.checks.push(CheckResult { name: name.into(), pass, statistic, threshold });
    }

    /// Whether any of the named checks is requested.
    pub(crate) fn any(&self, names: &[&str]) -> bool {
        names.iter().any(|n| self.config.wants(n))
    }

    /// Derives an independent master seed for a named ensemble and records it.
    pub(crate) fn seed(&mut self, label: &str) -> u64 {
        let mut h = Sha256::new();
        h.update(self.config.seed.to_le_bytes());
        h.update(label.as_bytes());
        let bytes: [u8; 8] = h.finalize()[..8].try_into().expect("digest has at least 8 bytes");
        let s = u64::from_le_bytes(bytes);
        self.seeds.insert(label.into(), s);
        s
    }

    pub(crate) fn csv(&mut self, name: String, text: String) {
        self.files.push((format!("paths/{name}"), text));
    }

    pub(crate) fn json<T: Serialize>(&mut self, name: &str, value: &T) {
        let text = serde_json::to_string_pretty(value).expect("reports serialize");
        self.files.push((format!("reports/{name}.json"), text + "\n"));
    }
}

/// Resolves and runs a scenario without writing anything.
pub fn run_in_memory(config: &ScenarioConfig) -> Result<ScenarioOutcome, ScenarioError> {
    let resolved = resolve(config)?;
    run_resolved(resolved)
}

pub fn run_resolved(resolved: ResolvedConfig) -> Result<ScenarioOutcome, ScenarioError> {
    let mut rec = Recorder::new(&resolved);
    rec.seeds.insert("master".into(), resolved.seed);
    builtin::run(&mut rec)?;
    let report = ScenarioReport { scenario: resolved.scenario.clone(), checks: rec.checks, seeds: rec.seeds };
    let mut files = rec.files;
    files.push(("reports/checks.json".into(), serde_json::to_string_pretty(&report).expect("report serializes") + "\n"));
    files.sort_by(|a, b| a.0.cmp(&b.0));
    Ok(ScenarioOutcome { config: resolved, report, files })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Manifest {
    pub scenario: String,
    pub crate_version: String,
    pub config: ResolvedConfig,
    pub seeds: BTreeMap<String, u64>,
    pub all_pass: bool,
    /// SHA-256 of every file in the run directory.
    pub files: BTreeMap<String, String>,
}

impl ScenarioOutcome {
    pub fn manifest(&self) -> Manifest {
        Manifest {
            scenario: self.report.scenario.clone(),
            crate_version: env!("CARGO_PKG_VERSION").to_string(),
            config: self.config.clone(),
            seeds: self.report.seeds.clone(),
            all_pass: self.report.all_pass(),
            files: self.files.iter().map(|(p, text)| (p.clone(), hex_digest(text.as_bytes()))).collect(),
        }
    }

    /// Manifest text; identical configs give identical bytes.
    pub fn manifest_json(&self) -> String {
        serde_json::to_string_pretty(&self.manifest()).expect("manifest serializes") + "\n"
    }

    /// Writes the run into a fresh `<output>/<scenario>/<timestamp>/` and returns that directory.
    pub fn write(&self) -> Result<PathBuf, ScenarioError> {
        let base = self.config.output.join(&self.config.scenario);
        let stamp = time::OffsetDateTime::now_utc()
            .format(time::macros::format_description!("[year][month][day]T[hour][minute][second]Z"))
            .map_err(|e| ScenarioError::Config(e.to_string()))?;
        let mut dir = base.join(&stamp);
        let mut k = 1;
        while dir.exists() {
            dir = base.join(format!("{stamp}-{k}"));
            k += 1;
        }
        self.write_to(&dir)?;
        Ok(dir)
    }

    /// Writes the run into `dir`, which must not exist yet.
    pub fn write_to(&self, dir: &Path) -> Result<(), ScenarioError> {
        if dir.exists() {
            return Err(ScenarioError::Config(format!("output directory {} already exists", dir.display())));
        }
        for sub in ["paths", "reports"] {
            fs::create_dir_all(dir.join(sub)).map_err(|e| ScenarioError::io(dir, e))?;
        }
        for (rel, text) in &self.files {
            let p = dir.join(rel);
            fs::write(&p, text).map_err(|e| ScenarioError::io(&p, e))?;
        }
        let p = dir.join("manifest.json");
        fs::write(&p, self.manifest_json()).map_err(|e| ScenarioError::io(&p, e))
    }

    /// One line per check.
    pub fn summary(&self) -> String {
        let info = self.config.info();
        let mut s = String::new();
        for c in &self.report.checks {
            let cmp = info.checks.iter().find(|k| k.name == c.name).map_or("?", |k| k.comparison.symbol());
            s.push_str(&format!(
                "{} {:<34} {:>12.4e} {} {:e}\n",
                if c.pass { "PASS" } else { "FAIL" },
                c.name,
                c.statistic,
                cmp,
                c.threshold
            ));
        }
        s
    }
}

pub fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Human-readable description and default configuration of a scenario.
pub fn describe(name: &str) -> Result<String, ScenarioError> {
    let info = scenario_info(name)?;
    let mut s = format!("{}\n\n{}\n\n{}\n\nchecks:\n", info.name, info.summary, info.description);
    for c in info.checks {
        s.push_str(&format!("  {:<34} {} {:e}  {}\n", c.name, c.comparison.symbol(), c.threshold, c.description));
    }
    s.push_str("\ndefault configuration:\n\n");
    s.push_str(&default_toml(info));
    Ok(s)
}

/// The defaults of a scenario written out as a configuration file.
pub fn default_toml(info: &ScenarioInfo) -> String {
    let mut s = format!(
        "scenario = \"{}\"\nseed = {}\nstep = {:e}\nhorizon = {:?}\npaths = {}\n",
        info.name, info.seed, info.step, info.horizon, info.paths
    );
    if let Some(sde) = info.sdes.first() {
        s.push_str(&format!("sde = \"{sde}\"\n"));
    }
    s.push_str(&format!("\n[noise]\nkind = \"{}\"\n", info.noise_kinds[0]));
    if !info.noise_params.is_empty() {
        s.push_str("\n[noise.params]\n");
        for (k, v) in info.noise_params {
            s.push_str(&format!("{k} = {v:?}\n"));
        }
    }
    s.push_str("\n[transformation]\n");
    for (key, list) in [("name", info.transformations), ("gauge", info.gauges), ("time_action", info.time_actions)] {
        if let Some(v) = list.first() {
            s.push_str(&format!("{key} = \"{v}\"\n"));
        }
    }
    if !info.transformation_params.is_empty() {
        s.push_str("\n[transformation.params]\n");
        for (k, v) in info.transformation_params {
            s.push_str(&format!("{k} = {v:?}\n"));
        }
    }
    s.push_str("\n[tolerances]\n");
    for c in info.checks {
        s.push_str(&format!("{} = {:e}\n", c.name, c.threshold));
    }
    s
}
