//! Batch experiments: strict configs, content-addressed result records and
//! the manifest driver.

mod besov_membership;
mod comparison;
mod regularization;
mod scaling;
mod sewing;
mod smoothing;
mod stability;
mod variance;
mod vclass;

pub use besov_membership::{BesovCase, BesovMembershipConfig};
pub use comparison::{ComparisonConfig, ComparisonPair, InitialCondition};
pub use regularization::{RegularizationCase, RegularizationConfig};
pub use scaling::{ScalingLimitConfig, ScalingProfile};
pub use sewing::SewingRateConfig;
pub use smoothing::SmoothingConfig;
pub use stability::{StabilityCase, StabilityConfig};
pub use variance::VarianceCheckConfig;
pub use vclass::{VClassCase, VClassRegularityConfig};

use std::collections::BTreeMap;
use std::fmt::Display;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analysis::{SlopeFit, Verdict};
use crate::error::{Error, Result};
use crate::kernel::{DomainKind, DomainSpec, ImageTruncation};

/// Version of the `summary.json` layout.
pub const SCHEMA_VERSION: u32 = 1;

/// One experiment configuration; the `experiment` key selects the variant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "experiment", rename_all = "snake_case")]
pub enum ExperimentConfig {
    VarianceCheck(VarianceCheckConfig),
    BesovMembership(BesovMembershipConfig),
    Smoothing(SmoothingConfig),
    Stability(StabilityConfig),
    Comparison(ComparisonConfig),
    ScalingLimit(ScalingLimitConfig),
    VClassRegularity(VClassRegularityConfig),
    SewingRate(SewingRateConfig),
    RegularizationExponent(RegularizationConfig),
}

/// Command-line overrides applied on top of a config file.
#[derive(Debug, Clone, Copy, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub replicas: Option<usize>,
}

macro_rules! each_config {
    ($self:expr, $c:ident => $body:expr) => {
        match $self {
            ExperimentConfig::VarianceCheck($c) => $body,
            ExperimentConfig::BesovMembership($c) => $body,
            ExperimentConfig::Smoothing($c) => $body,
            ExperimentConfig::Stability($c) => $body,
            ExperimentConfig::Comparison($c) => $body,
            ExperimentConfig::ScalingLimit($c) => $body,
            ExperimentConfig::VClassRegularity($c) => $body,
            ExperimentConfig::SewingRate($c) => $body,
            ExperimentConfig::RegularizationExponent($c) => $body,
        }
    };
}

impl ExperimentConfig {
    pub fn name(&self) -> &'static str {
        match self {
            ExperimentConfig::VarianceCheck(_) => "variance_check",
            ExperimentConfig::BesovMembership(_) => "besov_membership",
            ExperimentConfig::Smoothing(_) => "smoothing",
            ExperimentConfig::Stability(_) => "stability",
            ExperimentConfig::Comparison(_) => "comparison",
            ExperimentConfig::ScalingLimit(_) => "scaling_limit",
            ExperimentConfig::VClassRegularity(_) => "v_class_regularity",
            ExperimentConfig::SewingRate(_) => "sewing_rate",
            ExperimentConfig::RegularizationExponent(_) => "regularization_exponent",
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn seed(&self) -> u64 {
        each_config!(self, c => c.seed)
    }

    pub fn replicas(&self) -> usize {
        each_config!(self, c => c.replicas)
    }

    pub fn apply(&mut self, o: Overrides) {
        each_config!(self, c => {
            if let Some(s) = o.seed {
                c.seed = s;
            }
            if let Some(r) = o.replicas {
                c.replicas = r;
            }
        })
    }

    pub fn validate(&self) -> Result<()> {
        each_config!(self, c => c.validate())
    }

    /// SHA-256 of the canonical JSON serialization.
    pub fn hash(&self) -> Result<String> {
        let bytes = serde_json::to_vec(self)?;
        Ok(hex::encode(Sha256::digest(&bytes)))
    }

    fn execute(&self) -> Result<Outcome> {
        each_config!(self, c => c.run())
    }
}

/// Domain selection in configs.
pub(crate) fn domain_from(kind: DomainKind) -> Result<DomainSpec> {
    let d = DomainSpec { kind, images: ImageTruncation::Adaptive };
    d.validate()?;
    Ok(d)
}

/// Class of a check. Only `theory` failures (claims of the underlying
/// theory) affect the exit code; `oracle` checks compare against an
/// independent computation and `sanity` checks test degenerate cases.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Anchor {
    Theory,
    Oracle,
    Sanity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub anchor: Anchor,
    pub rule: String,
    pub value: Option<f64>,
    pub verdict: Verdict,
}

/// A CSV table with a header row; cells are pre-formatted strings.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

/// Shortest round-trip formatting, so CSVs are bit-faithful.
pub fn cell<T: Display>(v: T) -> String {
    v.to_string()
}

impl Table {
    pub fn new(name: &str, header: &[&str]) -> Self {
        Self { name: name.to_string(), header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    /// `(scale, value, stderr)` rows of a fit.
    pub fn from_fit(name: &str, fit: &SlopeFit) -> Self {
        let mut t = Table::new(name, &["scale", "value", "stderr"]);
        for i in 0..fit.scales.len() {
            t.push(vec![cell(fit.scales[i]), cell(fit.values[i]), cell(fit.stderrs[i])]);
        }
        t
    }

    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        w.into_inner().map_err(|e| Error::Config(format!("csv buffer: {e}")))
    }
}

/// What an experiment runner produces.
#[derive(Debug, Clone, Default)]
pub struct Outcome {
    pub metrics: BTreeMap<String, serde_json::Value>,
    pub checks: Vec<Check>,
    pub tables: Vec<Table>,
}

impl Outcome {
    pub fn metric<T: Serialize>(&mut self, key: &str, value: T) {
        let v = serde_json::to_value(value).unwrap_or(serde_json::Value::Null);
        self.metrics.insert(key.to_string(), v);
    }

    pub fn check(&mut self, name: &str, anchor: Anchor, rule: &str, value: Option<f64>, verdict: Verdict) {
        self.checks.push(Check { name: name.to_string(), anchor, rule: rule.to_string(), value, verdict });
    }

    /// Records the `(scale, value, stderr)` table and fit summary of a slope fit.
    pub fn fit(&mut self, name: &str, fit: &SlopeFit) {
        self.tables.push(Table::from_fit(&format!("fit_{name}"), fit));
        self.metric(
            &format!("{name}_fit"),
            serde_json::json!({"exponent": fit.exponent, "rsquared": fit.rsquared, "half_width": fit.half_width}),
        );
    }

    pub fn verdict(&self) -> Verdict {
        self.checks.iter().fold(Verdict::Pass, |acc, c| acc.and(c.verdict))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub schema_version: u32,
    pub experiment: String,
    pub config_hash: String,
    /// `sha256("blob <len>\0" ‖ config bytes)` of the input file, when known.
    pub input_hash: Option<String>,
    pub seed: u64,
    pub replicas: usize,
    pub metrics: BTreeMap<String, serde_json::Value>,
    pub checks: Vec<Check>,
    pub tables: Vec<String>,
    pub verdict: Verdict,
    pub wall_time_s: f64,
    pub directory: String,
}

impl ResultRecord {
    /// True iff some theory-anchored check failed.
    pub fn theory_failure(&self) -> bool {
        self.checks.iter().any(|c| c.anchor == Anchor::Theory && c.verdict == Verdict::Fail)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join("summary.json");
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Content hash of raw input bytes in the style of a git blob id (SHA-256).
pub fn blob_hash(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", bytes.len()).as_bytes());
    h.update(bytes);
    hex::encode(h.finalize())
}

/// Writes `bytes` to `path` via a temporary file and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().unwrap_or(Path::new("."));
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let file = path.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = dir.join(format!(".{file}.tmp-{}", std::process::id()));
    {
        let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        f.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
        f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    }
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// Runs one experiment and persists it under `outdir/{experiment}/{hash}/`.
pub fn run_config(cfg: &ExperimentConfig, outdir: &Path, input: Option<&[u8]>) -> Result<ResultRecord> {
    cfg.validate()?;
    let hash = cfg.hash()?;
    let dir = outdir.join(cfg.name()).join(&hash[..16]);
    log::info!("running {} ({})", cfg.name(), &hash[..16]);
    let start = Instant::now();
    let outcome = cfg.execute()?;
    let wall = start.elapsed().as_secs_f64();
    write_atomic(&dir.join("config.toml"), cfg.to_toml_string()?.as_bytes())?;
    let mut tables = Vec::new();
    for t in &outcome.tables {
        let name = format!("{}.csv", t.name);
        write_atomic(&dir.join(&name), &t.to_csv()?)?;
        tables.push(name);
    }
    let record = ResultRecord {
        schema_version: SCHEMA_VERSION,
        experiment: cfg.name().to_string(),
        config_hash: hash,
        input_hash: input.map(blob_hash),
        seed: cfg.seed(),
        replicas: cfg.replicas(),
        verdict: outcome.verdict(),
        metrics: outcome.metrics,
        checks: outcome.checks,
        tables,
        wall_time_s: wall,
        directory: dir.display().to_string(),
    };
    write_atomic(&dir.join("summary.json"), serde_json::to_string_pretty(&record)?.as_bytes())?;
    log::info!("{}: {:?} in {:.1}s", cfg.name(), record.verdict, wall);
    Ok(record)
}

/// Loads a config file, applies overrides and runs it.
pub fn run_file(path: &Path, outdir: &Path, overrides: Overrides) -> Result<ResultRecord> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut cfg = ExperimentConfig::load(path)?;
    cfg.apply(overrides);
    run_config(&cfg, outdir, Some(&bytes))
}

/// A list of config files, relative to the manifest's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    #[serde(default)]
    pub configs: Vec<PathBuf>,
    /// Number of experiments run concurrently (default 1).
    #[serde(default)]
    pub workers: Option<usize>,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {}", path.display(), e.message())))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunAllSummary {
    pub records: Vec<ResultRecord>,
    /// 0 iff no theory-anchored check failed.
    pub exit_code: i32,
}

/// Runs every config of a manifest; all configs are parsed before any runs.
pub fn run_all(manifest_path: &Path, outdir: &Path, overrides: Overrides) -> Result<RunAllSummary> {
    let manifest = Manifest::load(manifest_path)?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let mut jobs = Vec::new();
    for rel in &manifest.configs {
        let path = base.join(rel);
        let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
        let mut cfg = ExperimentConfig::load(&path)?;
        cfg.apply(overrides);
        jobs.push((cfg, bytes));
    }
    let workers = manifest.workers.unwrap_or(1).max(1);
    let run = |(cfg, bytes): &(ExperimentConfig, Vec<u8>)| run_config(cfg, outdir, Some(bytes));
    let records: Vec<ResultRecord> = if workers == 1 {
        jobs.iter().map(run).collect::<Result<_>>()?
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
        pool.install(|| jobs.par_iter().map(run).collect::<Result<_>>())?
    };
    let exit_code = if records.iter().any(ResultRecord::theory_failure) { 1 } else { 0 };
    Ok(RunAllSummary { records, exit_code })
}

/// Collects every `summary.json` below `outdir`, sorted by directory.
pub fn collect_records(outdir: &Path) -> Result<Vec<ResultRecord>> {
    let mut out = Vec::new();
    let mut stack = vec![outdir.to_path_buf()];
    while let Some(dir) = stack.pop() {
        let entries = fs::read_dir(&dir).map_err(|e| Error::io(&dir, e))?;
        for entry in entries {
            let entry = entry.map_err(|e| Error::io(&dir, e))?;
            let path = entry.path();
            if path.is_dir() {
                stack.push(path);
            } else if path.file_name().is_some_and(|n| n == "summary.json") {
                out.push(ResultRecord::load(&dir)?);
            }
        }
    }
    out.sort_by(|a, b| a.directory.cmp(&b.directory));
    Ok(out)
}

/// Verdict of an exponent band check, recorded with its rule text.
pub(crate) fn band_check(out: &mut Outcome, name: &str, anchor: Anchor, fit: &SlopeFit, target: f64, tol: f64) {
    let rule = format!("fitted exponent within {target} ± {tol} with R² ≥ {}", crate::analysis::MIN_RSQUARED);
    out.check(name, anchor, &rule, Some(fit.exponent), fit.band_verdict(target, tol));
}

pub(crate) fn ensure(cond: bool, msg: impl Into<String>) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::Config(msg.into()))
    }
}

pub(crate) fn default_ratio() -> f64 {
    0.25
}
