//! Experiment orchestration: flat `key=value` configs, named experiment
//! suites, CSV emission and a run manifest.
//!
//! # Config format
//!
//! One `key=value` per line; `#` starts a comment; blank lines are ignored.
//! Unknown keys and repeated keys (other than `term`) are errors.
//!
//! | key | default | meaning |
//! |---|---|---|
//! | `kernel` | required | `donsker` or `kac-stroock` |
//! | `dim` | `1` | ambient dimension `d`, `1..=4` |
//! | `box` | all `1` | upper corner `T`, `d` numbers |
//! | `law` | `rademacher` | Donsker innovations: `rademacher`, `gaussian`, `uniform` |
//! | `term` | `1` on the box | integrand term `coeff lo_1 … lo_d hi_1 … hi_d`, repeatable |
//! | `point` | `T` | evaluation point `t` of `X_n(t)` |
//! | `q` | `1` | exponent of the `L^{2q}` bound |
//! | `m` | `2,4` | even moment orders |
//! | `n_grid` | `4,8,16,32` | strictly increasing scales |
//! | `reps` | `10000` | Monte Carlo replicates per `n` |
//! | `seed` | `0` | master seed (decimal `u64`) |
//! | `workers` | `0` | worker threads, `0` = all cores |
//! | `out` | `out` | output directory |
//! | `experiments` | `moments` | any of `moments, gof, cramer-wold, bound-scan, appendix-checks, rn-decay` |
//! | `alpha` | `0.01` | test level |
//! | `cw_combos` | `10` | random Cramér–Wold combinations |
//! | `cw_corners` | `3` | largest number of corners per combination (`<= 8`) |
//! | `appendix_n` | `2000` | scale for the lattice covariance check |
//! | `appendix_configs` | `50` | random configurations for the lattice covariance check |
//!
//! Reals are written with 17 significant digits (`{:.16e}`).

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rand::Rng;
use sha2::{Digest, Sha256};

use crate::donsker::{rn_bound, rn_second_moment};
use crate::error::{Error, Result};
use crate::family::KernelFamily;
use crate::geometry::{ParamPoint, Rect, DEFAULT_MAX_DIM};
use crate::integrand::{parse_term, SimpleFunction};
use crate::parallel::Workers;
use crate::random::{labels, InnovationLaw, StreamKey};
use crate::stats::{
    allowed_rejections, bound_constant_scan, cramer_wold_check, ecf_test, empirical_moments,
    ks_test, lattice_covariance_limit, seed_for, SLOPE_Z_GATE,
};

/// Standard errors allowed when gating moment estimates.
pub const MOMENT_SE_TOL: f64 = 3.0;
/// Relative slack allowed on top of `3 SE` when gating moment estimates.
pub const MOMENT_REL_TOL: f64 = 0.05;
/// Relative error allowed for the lattice covariance limit.
pub const LATTICE_REL_TOL: f64 = 0.01;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Experiment {
    Moments,
    Gof,
    CramerWold,
    BoundScan,
    AppendixChecks,
    RnDecay,
}

impl Experiment {
    pub const ALL: [Experiment; 6] = [
        Experiment::Moments,
        Experiment::Gof,
        Experiment::CramerWold,
        Experiment::BoundScan,
        Experiment::AppendixChecks,
        Experiment::RnDecay,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::Moments => "moments",
            Experiment::Gof => "gof",
            Experiment::CramerWold => "cramer-wold",
            Experiment::BoundScan => "bound-scan",
            Experiment::AppendixChecks => "appendix-checks",
            Experiment::RnDecay => "rn-decay",
        }
    }

    pub fn file_name(self) -> String {
        format!("{}.csv", self.name().replace('-', "_"))
    }

    /// Exact CSV header line.
    pub fn csv_header(self) -> &'static str {
        match self {
            Experiment::Moments => "kernel,law,dim,n,m,reps,estimate,std_error,target,z_score",
            Experiment::Gof => "kernel,law,dim,n,test,reps,variance,statistic,threshold,reject",
            Experiment::CramerWold => {
                "kernel,law,dim,n,combo,corners,reps,variance,statistic,threshold,reject"
            }
            Experiment::BoundScan => {
                "kernel,law,dim,q,m,n,reps,ratio,std_error,max_ratio,slope,slope_se,slope_z"
            }
            Experiment::AppendixChecks => "config,dim,corners,n,finite_n,limit,rel_error",
            Experiment::RnDecay => "n,t,second_moment,appendix_bound,envelope",
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Experiment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Experiment::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| Error::domain(format!("unknown experiment `{s}`")))
    }
}

/// A validated experiment configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub kernel: KernelFamily,
    pub upper: ParamPoint,
    pub integrand: SimpleFunction,
    pub point: ParamPoint,
    pub q: f64,
    pub ms: Vec<u32>,
    pub n_grid: Vec<u32>,
    pub reps: u64,
    pub seed: u64,
    pub workers: usize,
    pub out: PathBuf,
    pub experiments: Vec<Experiment>,
    pub alpha: f64,
    pub cw_combos: usize,
    pub cw_corners: usize,
    pub appendix_n: u32,
    pub appendix_configs: usize,
    /// Canonical text the config hash is computed from.
    canonical: String,
}

const KNOWN_KEYS: [&str; 19] = [
    "kernel",
    "dim",
    "box",
    "law",
    "term",
    "point",
    "q",
    "m",
    "n_grid",
    "reps",
    "seed",
    "workers",
    "out",
    "experiments",
    "alpha",
    "cw_combos",
    "cw_corners",
    "appendix_n",
    "appendix_configs",
];

fn parse_list<T: FromStr>(key: &str, line: Option<usize>, value: &str) -> Result<Vec<T>> {
    value
        .split([',', ' ', '\t'])
        .filter(|s| !s.is_empty())
        .map(|tok| {
            tok.parse::<T>()
                .map_err(|_| Error::usage(key, line, format!("`{tok}` is not a valid value")))
        })
        .collect()
}

fn parse_one<T: FromStr>(key: &str, line: Option<usize>, value: &str) -> Result<T> {
    value
        .trim()
        .parse::<T>()
        .map_err(|_| Error::usage(key, line, format!("`{value}` is not a valid value")))
}

/// Parse and validate the flat config format.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let mut config = parse_config_unchecked(text)?;
    config.validate()?;
    Ok(config)
}

/// Parse with per-field checks only; cross-field checks are left to
/// [`ExperimentConfig::validate`].
fn parse_config_unchecked(text: &str) -> Result<ExperimentConfig> {
    let mut values: BTreeMap<&str, (usize, &str)> = BTreeMap::new();
    let mut terms: Vec<(usize, &str)> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let lineno = i + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(Error::usage(line, Some(lineno), "expected `key=value`"));
        };
        let (key, value) = (key.trim(), value.trim());
        if !KNOWN_KEYS.contains(&key) {
            return Err(Error::usage(key, Some(lineno), "unknown key"));
        }
        if key == "term" {
            terms.push((lineno, value));
        } else if values.insert(key, (lineno, value)).is_some() {
            return Err(Error::usage(key, Some(lineno), "key given twice"));
        }
    }
    let get = |k: &str| values.get(k).copied();

    let (kline, kernel_name) =
        get("kernel").ok_or_else(|| Error::usage("kernel", None, "missing required key"))?;
    let mut kernel: KernelFamily = kernel_name
        .parse()
        .map_err(|e: Error| Error::usage("kernel", Some(kline), e.to_string()))?;
    if let Some((l, v)) = get("law") {
        let law: InnovationLaw = v
            .parse()
            .map_err(|e: Error| Error::usage("law", Some(l), e.to_string()))?;
        if let KernelFamily::Donsker(_) = kernel {
            kernel = KernelFamily::Donsker(law);
        }
    }

    let dim: usize = match get("dim") {
        Some((l, v)) => parse_one("dim", Some(l), v)?,
        None => 1,
    };
    if !(1..=DEFAULT_MAX_DIM).contains(&dim) {
        return Err(Error::usage(
            "dim",
            get("dim").map(|x| x.0),
            format!("must lie in 1..={DEFAULT_MAX_DIM}"),
        ));
    }
    let upper = match get("box") {
        Some((l, v)) => {
            let coords: Vec<f64> = parse_list("box", Some(l), v)?;
            if coords.len() != dim || coords.iter().any(|c| !(*c > 0.0 && c.is_finite())) {
                return Err(Error::usage(
                    "box",
                    Some(l),
                    format!("need {dim} positive numbers"),
                ));
            }
            ParamPoint::new(coords).map_err(|e| Error::usage("box", Some(l), e.to_string()))?
        }
        None => ParamPoint::splat(dim, 1.0)?,
    };
    let integrand = if terms.is_empty() {
        SimpleFunction::constant(upper.clone(), 1.0)?
    } else {
        let mut parsed = Vec::with_capacity(terms.len());
        for (l, v) in &terms {
            parsed.push(parse_term(v, dim).map_err(|m| Error::usage("term", Some(*l), m))?);
        }
        let first = terms[0].0;
        SimpleFunction::new(upper.clone(), parsed)
            .map_err(|e| Error::usage("term", Some(first), e.to_string()))?
    };
    let point = match get("point") {
        Some((l, v)) => {
            let coords: Vec<f64> = parse_list("point", Some(l), v)?;
            let t = ParamPoint::new(coords)
                .map_err(|e| Error::usage("point", Some(l), e.to_string()))?;
            if t.dim() != dim || !t.le(&upper) {
                return Err(Error::usage("point", Some(l), "must be a point of the box"));
            }
            t
        }
        None => upper.clone(),
    };

    let q: f64 = match get("q") {
        Some((l, v)) => parse_one("q", Some(l), v)?,
        None => 1.0,
    };
    if !(q >= 1.0 && q.is_finite()) {
        return Err(Error::usage(
            "q",
            get("q").map(|x| x.0),
            "q must satisfy 1 <= q < inf",
        ));
    }
    let ms: Vec<u32> = match get("m") {
        Some((l, v)) => parse_list("m", Some(l), v)?,
        None => vec![2, 4],
    };
    if ms.is_empty() || ms.iter().any(|m| *m < 2 || m % 2 == 1) {
        return Err(Error::usage(
            "m",
            get("m").map(|x| x.0),
            "moment orders must be even integers >= 2",
        ));
    }
    let n_grid: Vec<u32> = match get("n_grid") {
        Some((l, v)) => parse_list("n_grid", Some(l), v)?,
        None => vec![4, 8, 16, 32],
    };
    if n_grid.is_empty() || n_grid[0] == 0 || n_grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::usage(
            "n_grid",
            get("n_grid").map(|x| x.0),
            "scales must be positive and strictly increasing",
        ));
    }
    let reps: u64 = match get("reps") {
        Some((l, v)) => parse_one("reps", Some(l), v)?,
        None => 10_000,
    };
    let seed: u64 = match get("seed") {
        Some((l, v)) => parse_one("seed", Some(l), v)?,
        None => 0,
    };
    let workers: usize = match get("workers") {
        Some((l, v)) => parse_one("workers", Some(l), v)?,
        None => 0,
    };
    let out = PathBuf::from(get("out").map_or("out", |x| x.1));
    let experiments: Vec<Experiment> = match get("experiments") {
        Some((l, v)) => {
            let mut ex: Vec<Experiment> = parse_list("experiments", Some(l), v)?;
            ex.sort();
            ex.dedup();
            if ex.is_empty() {
                return Err(Error::usage(
                    "experiments",
                    Some(l),
                    "select at least one experiment",
                ));
            }
            ex
        }
        None => vec![Experiment::Moments],
    };
    let alpha: f64 = match get("alpha") {
        Some((l, v)) => parse_one("alpha", Some(l), v)?,
        None => 0.01,
    };
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::usage(
            "alpha",
            get("alpha").map(|x| x.0),
            "level must lie in (0, 1)",
        ));
    }
    let cw_combos: usize = match get("cw_combos") {
        Some((l, v)) => parse_one("cw_combos", Some(l), v)?,
        None => 10,
    };
    let cw_corners: usize = match get("cw_corners") {
        Some((l, v)) => parse_one("cw_corners", Some(l), v)?,
        None => 3,
    };
    if !(1..=crate::stats::MAX_CW_CORNERS).contains(&cw_corners) {
        return Err(Error::usage(
            "cw_corners",
            get("cw_corners").map(|x| x.0),
            "must lie in 1..=8",
        ));
    }
    let appendix_n: u32 = match get("appendix_n") {
        Some((l, v)) => parse_one("appendix_n", Some(l), v)?,
        None => 2000,
    };
    let appendix_configs: usize = match get("appendix_configs") {
        Some((l, v)) => parse_one("appendix_configs", Some(l), v)?,
        None => 50,
    };

    Ok(ExperimentConfig {
        kernel,
        upper,
        integrand,
        point,
        q,
        ms,
        n_grid,
        reps,
        seed,
        workers,
        out,
        experiments,
        alpha,
        cw_combos,
        cw_corners,
        appendix_n,
        appendix_configs,
        canonical: String::new(),
    })
}

impl ExperimentConfig {
    /// Cross-field checks; run again after CLI overrides.
    pub fn validate(&mut self) -> Result<()> {
        let needs_samples = self.experiments.iter().any(|e| {
            matches!(
                e,
                Experiment::Moments
                    | Experiment::Gof
                    | Experiment::CramerWold
                    | Experiment::BoundScan
            )
        });
        if self.experiments.contains(&Experiment::BoundScan) {
            if let Some(m) = self.ms.iter().find(|m| f64::from(**m) <= 2.0 * self.q) {
                return Err(Error::usage(
                    "m",
                    None,
                    format!("bound-scan needs m > 2q = {}, got {m}", 2.0 * self.q),
                ));
            }
            if self.n_grid.len() < 2 {
                return Err(Error::usage(
                    "n_grid",
                    None,
                    "bound-scan needs at least two scales",
                ));
            }
        }
        if needs_samples && self.reps < crate::stats::MIN_MOMENT_REPS as u64 {
            return Err(Error::usage(
                "reps",
                None,
                format!("need at least {}", crate::stats::MIN_MOMENT_REPS),
            ));
        }
        if (self.experiments.contains(&Experiment::Gof)
            || self.experiments.contains(&Experiment::CramerWold))
            && self.reps < crate::stats::MIN_GOF_REPS as u64
        {
            return Err(Error::usage(
                "reps",
                None,
                format!("gof needs at least {}", crate::stats::MIN_GOF_REPS),
            ));
        }
        if self.experiments.contains(&Experiment::RnDecay)
            && self.point.coords().iter().any(|c| *c <= 0.0)
        {
            return Err(Error::usage(
                "point",
                None,
                "rn-decay needs a strictly positive point",
            ));
        }
        if self.integrand.is_zero()
            && self.experiments.iter().any(|e| {
                matches!(
                    e,
                    Experiment::Gof | Experiment::CramerWold | Experiment::BoundScan
                )
            })
        {
            return Err(Error::usage(
                "term",
                None,
                "the integrand is identically zero",
            ));
        }
        self.canonical = self.render();
        Ok(())
    }

    /// Canonical text: fully resolved, one key per line, fixed order.
    pub fn render(&self) -> String {
        let join = |xs: &[f64]| {
            xs.iter()
                .map(|x| format!("{x:?}"))
                .collect::<Vec<_>>()
                .join(",")
        };
        let mut s = String::new();
        let _ = writeln!(s, "kernel={}", self.kernel.name());
        if let KernelFamily::Donsker(law) = self.kernel {
            let _ = writeln!(s, "law={law}");
        }
        let _ = writeln!(s, "dim={}", self.upper.dim());
        let _ = writeln!(s, "box={}", join(self.upper.coords()));
        for line in self.integrand.to_text().lines() {
            let _ = writeln!(s, "term={line}");
        }
        let _ = writeln!(s, "point={}", join(self.point.coords()));
        let _ = writeln!(s, "q={:?}", self.q);
        let _ = writeln!(
            s,
            "m={}",
            self.ms
                .iter()
                .map(u32::to_string)
                .collect::<Vec<_>>()
                .join(",")
        );
        let _ = writeln!(
            s,
            "n_grid={}",
            self.n_grid
                .iter()
                .map(u32::to_string)
                .collect::<Vec<_>>()
                .join(",")
        );
        let _ = writeln!(s, "reps={}", self.reps);
        let _ = writeln!(s, "seed={}", self.seed);
        let _ = writeln!(
            s,
            "experiments={}",
            self.experiments
                .iter()
                .map(|e| e.name())
                .collect::<Vec<_>>()
                .join(",")
        );
        let _ = writeln!(s, "alpha={:?}", self.alpha);
        let _ = writeln!(s, "cw_combos={}", self.cw_combos);
        let _ = writeln!(s, "cw_corners={}", self.cw_corners);
        let _ = writeln!(s, "appendix_n={}", self.appendix_n);
        let _ = writeln!(s, "appendix_configs={}", self.appendix_configs);
        s
    }

    /// SHA-256 of the canonical text. Worker count and output path are
    /// excluded: they do not change results.
    pub fn hash(&self) -> String {
        hex(&Sha256::digest(self.canonical.as_bytes()))
    }

    pub fn dim(&self) -> usize {
        self.upper.dim()
    }

    fn workers(&self) -> Workers {
        Workers::new(self.workers)
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Fixed 17-significant-digit rendering.
pub fn fmt_real(x: f64) -> String {
    format!("{x:.16e}")
}

fn fmt_point(t: &ParamPoint) -> String {
    t.coords()
        .iter()
        .map(|c| fmt_real(*c))
        .collect::<Vec<_>>()
        .join(" ")
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GateStatus {
    Pass,
    Fail,
    /// Produced output but not gated.
    Report,
}

impl fmt::Display for GateStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GateStatus::Pass => "pass",
            GateStatus::Fail => "fail",
            GateStatus::Report => "report",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentOutcome {
    pub experiment: Experiment,
    pub status: GateStatus,
    pub file: PathBuf,
    pub sha256: String,
    pub wall_ms: u128,
    pub notes: Vec<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunManifest {
    pub config_hash: String,
    pub version: &'static str,
    pub seed: u64,
    /// Gate tolerances in force; all are engineering choices, since no
    /// convergence rates are known.
    pub tolerances: String,
    pub outcomes: Vec<ExperimentOutcome>,
    pub path: PathBuf,
}

impl RunManifest {
    pub fn all_pass(&self) -> bool {
        self.outcomes.iter().all(|o| o.status != GateStatus::Fail)
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "config_sha256={}", self.config_hash);
        let _ = writeln!(s, "version={}", self.version);
        let _ = writeln!(s, "seed={}", self.seed);
        let _ = writeln!(s, "tolerances={}", self.tolerances);
        for o in &self.outcomes {
            let _ = writeln!(
                s,
                "experiment={} status={} file={} sha256={} wall_ms={}",
                o.experiment,
                o.status,
                o.file.file_name().and_then(|f| f.to_str()).unwrap_or(""),
                o.sha256,
                o.wall_ms
            );
            for note in &o.notes {
                let _ = writeln!(s, "note[{}]={}", o.experiment, note);
            }
        }
        s
    }
}

struct Table {
    header: &'static str,
    rows: Vec<String>,
}

impl Table {
    fn new(experiment: Experiment) -> Self {
        Self {
            header: experiment.csv_header(),
            rows: Vec::new(),
        }
    }

    fn push(&mut self, fields: Vec<String>) {
        self.rows.push(fields.join(","));
    }

    fn render(&self) -> String {
        let mut s = String::with_capacity(64 * (self.rows.len() + 1));
        s.push_str(self.header);
        s.push('\n');
        for r in &self.rows {
            s.push_str(r);
            s.push('\n');
        }
        s
    }
}

struct Outcome {
    table: Table,
    status: GateStatus,
    notes: Vec<String>,
}

/// Engineering tolerances behind the gates, for the manifest.
pub fn tolerances(config: &ExperimentConfig) -> String {
    format!(
        "engineering moment_se={MOMENT_SE_TOL} moment_rel={MOMENT_REL_TOL} alpha={} slope_z={SLOPE_Z_GATE} lattice_rel={LATTICE_REL_TOL}",
        config.alpha
    )
}

/// Run every selected experiment, write one CSV each plus `manifest.txt`.
pub fn run_suite(config: &ExperimentConfig) -> Result<RunManifest> {
    fs::create_dir_all(&config.out)?;
    let mut outcomes = Vec::with_capacity(config.experiments.len());
    for &experiment in &config.experiments {
        let started = Instant::now();
        let outcome = run_experiment(config, experiment)?;
        let text = outcome.table.render();
        let file = config.out.join(experiment.file_name());
        fs::write(&file, &text)?;
        outcomes.push(ExperimentOutcome {
            experiment,
            status: outcome.status,
            file,
            sha256: hex(&Sha256::digest(text.as_bytes())),
            wall_ms: started.elapsed().as_millis(),
            notes: outcome.notes,
        });
    }
    let manifest = RunManifest {
        config_hash: config.hash(),
        version: env!("CARGO_PKG_VERSION"),
        seed: config.seed,
        tolerances: tolerances(config),
        outcomes,
        path: config.out.join("manifest.txt"),
    };
    fs::write(&manifest.path, manifest.render())?;
    Ok(manifest)
}

/// Run a single experiment and return its CSV text and gate status, without
/// touching the filesystem.
pub fn run_experiment_to_string(
    config: &ExperimentConfig,
    experiment: Experiment,
) -> Result<(String, GateStatus)> {
    let o = run_experiment(config, experiment)?;
    Ok((o.table.render(), o.status))
}

fn run_experiment(config: &ExperimentConfig, experiment: Experiment) -> Result<Outcome> {
    match experiment {
        Experiment::Moments => run_moments(config),
        Experiment::Gof => run_gof(config),
        Experiment::CramerWold => run_cramer_wold(config),
        Experiment::BoundScan => run_bound_scan(config),
        Experiment::AppendixChecks => run_appendix(config),
        Experiment::RnDecay => run_rn_decay(config),
    }
}

fn observed_integrand(config: &ExperimentConfig) -> Result<SimpleFunction> {
    config.integrand.restrict(&Rect::from_origin(&config.point))
}

fn family_fields(config: &ExperimentConfig) -> [String; 3] {
    [
        config.kernel.name().to_string(),
        config.kernel.law_name().to_string(),
        config.dim().to_string(),
    ]
}

fn run_moments(config: &ExperimentConfig) -> Result<Outcome> {
    let f = observed_integrand(config)?;
    let sigma2 = f.lp_integral(2.0)?;
    let mut table = Table::new(Experiment::Moments);
    let mut notes = Vec::new();
    let mut status = GateStatus::Pass;
    let last = *config.n_grid.last().unwrap();
    for &n in &config.n_grid {
        let xs = config
            .kernel
            .sample_integrals(
                n,
                &config.upper,
                std::slice::from_ref(&f),
                config.reps,
                seed_for(config.seed, n, 1),
                config.workers(),
            )?
            .remove(0);
        let report = empirical_moments(&xs, &config.ms, sigma2)?;
        notes.extend(report.warnings.iter().map(|w| format!("n={n}: {w}")));
        for e in &report.entries {
            let mut row = family_fields(config).to_vec();
            row.extend([
                n.to_string(),
                e.m.to_string(),
                e.reps.to_string(),
                fmt_real(e.estimate),
                fmt_real(e.std_error),
                fmt_real(e.target),
                fmt_real(e.z_score),
            ]);
            table.push(row);
            if n == last && !e.within(MOMENT_SE_TOL, MOMENT_REL_TOL) {
                status = GateStatus::Fail;
                notes.push(format!(
                    "n={n} m={}: estimate {} vs target {}",
                    e.m, e.estimate, e.target
                ));
            }
        }
    }
    Ok(Outcome {
        table,
        status,
        notes,
    })
}

fn run_gof(config: &ExperimentConfig) -> Result<Outcome> {
    let f = observed_integrand(config)?;
    let sigma2 = f.lp_integral(2.0)?;
    if sigma2 == 0.0 {
        return Err(Error::usage(
            "point",
            None,
            "the observed integrand has zero variance",
        ));
    }
    let mut table = Table::new(Experiment::Gof);
    let mut notes = Vec::new();
    let mut status = GateStatus::Pass;
    let last = *config.n_grid.last().unwrap();
    for &n in &config.n_grid {
        let xs = config
            .kernel
            .sample_integrals(
                n,
                &config.upper,
                std::slice::from_ref(&f),
                config.reps,
                seed_for(config.seed, n, 2),
                config.workers(),
            )?
            .remove(0);
        for report in [
            ks_test(&xs, sigma2, config.alpha)?,
            ecf_test(&xs, sigma2, config.alpha)?,
        ] {
            let mut row = family_fields(config).to_vec();
            row.extend([
                n.to_string(),
                report.test.to_string(),
                report.sample_size.to_string(),
                fmt_real(sigma2),
                fmt_real(report.statistic),
                fmt_real(report.threshold),
                report.reject.to_string(),
            ]);
            table.push(row);
            if n == last && report.test == crate::stats::GofTest::Ks && report.reject {
                status = GateStatus::Fail;
                notes.push(format!(
                    "n={n}: KS statistic {} above {}",
                    report.statistic, report.threshold
                ));
            }
        }
    }
    Ok(Outcome {
        table,
        status,
        notes,
    })
}

/// Random combination `k` of a Cramér–Wold battery: corners uniform in the
/// box, coefficients uniform in `[-1, 1]`.
pub fn random_combination(
    upper: &ParamPoint,
    max_corners: usize,
    key: StreamKey,
) -> Result<(Vec<ParamPoint>, Vec<f64>)> {
    let mut rng = key.rng();
    let k = rng.random_range(1..=max_corners);
    let mut corners = Vec::with_capacity(k);
    let mut coeffs = Vec::with_capacity(k);
    for _ in 0..k {
        let t: Vec<f64> = upper
            .coords()
            .iter()
            .map(|top| top * rng.random_range(0.05..=1.0))
            .collect();
        corners.push(ParamPoint::new(t)?);
        coeffs.push(rng.random_range(-1.0..=1.0));
    }
    Ok((corners, coeffs))
}

fn run_cramer_wold(config: &ExperimentConfig) -> Result<Outcome> {
    let n = *config.n_grid.last().unwrap();
    let mut table = Table::new(Experiment::CramerWold);
    let mut notes = Vec::new();
    let mut rejections = 0;
    for combo in 0..config.cw_combos {
        let key = StreamKey::new(config.seed, combo as u64, labels::CONFIG);
        let (corners, coeffs) = random_combination(&config.upper, config.cw_corners, key)?;
        let report = cramer_wold_check(
            config.kernel,
            &config.integrand,
            &corners,
            &coeffs,
            n,
            config.reps,
            seed_for(config.seed, n, 100 + combo as u64),
            config.alpha,
            config.workers(),
        )?;
        if report.gof.reject {
            rejections += 1;
        }
        let mut row = family_fields(config).to_vec();
        row.extend([
            n.to_string(),
            combo.to_string(),
            corners.len().to_string(),
            report.gof.sample_size.to_string(),
            fmt_real(report.variance),
            fmt_real(report.gof.statistic),
            fmt_real(report.gof.threshold),
            report.gof.reject.to_string(),
        ]);
        table.push(row);
    }
    let allowed = allowed_rejections(config.cw_combos, config.alpha);
    let status = if rejections <= allowed {
        GateStatus::Pass
    } else {
        notes.push(format!(
            "{rejections} of {} combinations rejected (allowed {allowed})",
            config.cw_combos
        ));
        GateStatus::Fail
    };
    Ok(Outcome {
        table,
        status,
        notes,
    })
}

fn run_bound_scan(config: &ExperimentConfig) -> Result<Outcome> {
    let mut table = Table::new(Experiment::BoundScan);
    let mut notes = Vec::new();
    let mut status = GateStatus::Pass;
    // the moment condition is only established for q > 1 in d >= 2
    let report_only =
        config.kernel == KernelFamily::KacStroock && config.dim() >= 2 && config.q <= 1.0;
    for &m in &config.ms {
        let report = bound_constant_scan(
            config.kernel,
            &config.integrand,
            config.q,
            m,
            &config.n_grid,
            config.reps,
            config.seed ^ u64::from(m),
            config.workers(),
        )?;
        for row in &report.rows {
            let mut fields = family_fields(config).to_vec();
            fields.extend([
                fmt_real(config.q),
                m.to_string(),
                row.n.to_string(),
                row.reps.to_string(),
                fmt_real(row.ratio),
                fmt_real(row.std_error),
                fmt_real(report.max_ratio),
                fmt_real(report.slope),
                fmt_real(report.slope_se),
                fmt_real(report.slope_z),
            ]);
            table.push(fields);
        }
        if report.significant_growth() {
            notes.push(format!(
                "m={m}: slope {} has z = {}",
                report.slope, report.slope_z
            ));
            if !report_only {
                status = GateStatus::Fail;
            }
        }
    }
    if report_only && status == GateStatus::Pass {
        status = GateStatus::Report;
    }
    Ok(Outcome {
        table,
        status,
        notes,
    })
}

fn run_appendix(config: &ExperimentConfig) -> Result<Outcome> {
    let mut table = Table::new(Experiment::AppendixChecks);
    let mut notes = Vec::new();
    let mut status = GateStatus::Pass;
    let n = config.appendix_n;
    for c in 0..config.appendix_configs {
        let key =
            StreamKey::new(config.seed, c as u64, labels::CONFIG).with_label(labels::CONFIG + 1);
        let (corners, coeffs) = random_combination(&config.upper, config.cw_corners, key)?;
        let (finite, limit) = lattice_covariance_limit(&coeffs, &corners, n)?;
        let rel = if limit == 0.0 {
            (finite - limit).abs()
        } else {
            ((finite - limit) / limit).abs()
        };
        if rel > LATTICE_REL_TOL {
            status = GateStatus::Fail;
            notes.push(format!("config {c}: relative error {rel}"));
        }
        table.push(vec![
            c.to_string(),
            config.dim().to_string(),
            corners.len().to_string(),
            n.to_string(),
            fmt_real(finite),
            fmt_real(limit),
            fmt_real(rel),
        ]);
    }
    Ok(Outcome {
        table,
        status,
        notes,
    })
}

/// `(1/n) Σ_i ∏_{j≠i} (t_j + 1/n)`: an `O(1/n)` envelope for `E[R_n(t)^2]`,
/// from `n^{-d}(∏([n t_j] + 1) - ∏[n t_j])`.
pub fn rn_envelope(n: u32, t: &ParamPoint) -> f64 {
    let nf = f64::from(n);
    let d = t.dim();
    (0..d)
        .map(|i| {
            (0..d)
                .filter(|j| *j != i)
                .map(|j| t.coords()[j] + 1.0 / nf)
                .product::<f64>()
        })
        .sum::<f64>()
        / nf
}

/// Dyadic scales `2, 4, …, 256`.
pub const RN_SCALES: [u32; 8] = [2, 4, 8, 16, 32, 64, 128, 256];

fn run_rn_decay(config: &ExperimentConfig) -> Result<Outcome> {
    let mut table = Table::new(Experiment::RnDecay);
    let mut notes = Vec::new();
    let mut status = GateStatus::Pass;
    let t = &config.point;
    for n in RN_SCALES {
        let value = rn_second_moment(n, t, &config.upper)?;
        let bound = rn_bound(n, t, &config.upper);
        let envelope = rn_envelope(n, t);
        if bound.is_some_and(|b| value > b) || value > envelope * (1.0 + 1e-12) {
            status = GateStatus::Fail;
            notes.push(format!("n={n}: E[R_n^2] = {value} exceeds its bound"));
        }
        table.push(vec![
            n.to_string(),
            fmt_point(t),
            fmt_real(value),
            bound.map_or_else(|| "NA".to_string(), fmt_real),
            fmt_real(envelope),
        ]);
    }
    Ok(Outcome {
        table,
        status,
        notes,
    })
}

/// Command-line overrides applied on top of a config file.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub out: Option<PathBuf>,
    pub experiments: Option<Vec<Experiment>>,
}

/// Read a config file and apply CLI overrides.
pub fn load_config(path: &Path, overrides: Overrides) -> Result<ExperimentConfig> {
    let text =
        fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    let mut config = parse_config_unchecked(&text)?;
    let Overrides {
        seed,
        workers,
        out,
        experiments,
    } = overrides;
    if let Some(ex) = experiments {
        config.experiments = ex;
    }
    if let Some(s) = seed {
        config.seed = s;
    }
    if let Some(w) = workers {
        config.workers = w;
    }
    if let Some(o) = out {
        config.out = o;
    }
    config.validate()?;
    Ok(config)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "dim=1\nkernel=donsker\nn_grid=4\nreps=100\n";

    #[test]
    fn parses_minimal_config_with_defaults() {
        let c = parse_config(MINIMAL).unwrap();
        assert_eq!(c.kernel, KernelFamily::Donsker(InnovationLaw::Rademacher));
        assert_eq!(c.upper.coords(), &[1.0]);
        assert_eq!(c.point.coords(), &[1.0]);
        assert_eq!(c.ms, vec![2, 4]);
        assert_eq!(c.n_grid, vec![4]);
        assert_eq!(c.experiments, vec![Experiment::Moments]);
        assert_eq!(c.integrand.terms().len(), 1);
    }

    #[test]
    fn full_config() {
        let text = "# two-dimensional Kac-Stroock run\n\
                    kernel = kac-stroock\n\
                    dim=2\n\
                    box=1,2\n\
                    term=1.5 0 0 0.5 1   # lower half\n\
                    term=-1 0.5 0 1 2\n\
                    point=0.75 1.5\n\
                    q=1.5\n\
                    m=4,6\n\
                    n_grid=4, 8, 16\n\
                    reps=2000\n\
                    seed=18446744073709551615\n\
                    experiments=bound-scan,moments\n";
        let c = parse_config(text).unwrap();
        assert_eq!(c.kernel, KernelFamily::KacStroock);
        assert_eq!(c.integrand.terms().len(), 2);
        assert_eq!(c.seed, u64::MAX);
        assert_eq!(
            c.experiments,
            vec![Experiment::Moments, Experiment::BoundScan]
        );
        assert_eq!(parse_config(&c.render()).unwrap().render(), c.render());
    }

    fn field_of(err: Error) -> (String, Option<usize>) {
        match err {
            Error::Usage { field, line, .. } => (field, line),
            other => panic!("expected a usage error, got {other}"),
        }
    }

    #[test]
    fn validation_errors_name_the_field() {
        assert_eq!(
            field_of(parse_config("kernel=donsker\nq=0.5\n").unwrap_err()),
            ("q".into(), Some(2))
        );
        assert_eq!(
            field_of(parse_config("dim=1\nreps=100\n").unwrap_err()).0,
            "kernel"
        );
        assert_eq!(
            field_of(parse_config("kernel=donsker\nm=2,3\n").unwrap_err()).0,
            "m"
        );
        assert_eq!(
            field_of(parse_config("kernel=donsker\ncolour=red\n").unwrap_err()),
            ("colour".into(), Some(2))
        );
        assert_eq!(
            field_of(parse_config("kernel=donsker\nseed 4\n").unwrap_err()).1,
            Some(2)
        );
        assert_eq!(
            field_of(parse_config("kernel=donsker\nseed=1\nseed=2\n").unwrap_err()).0,
            "seed"
        );
        assert_eq!(
            field_of(parse_config("kernel=donsker\ndim=5\n").unwrap_err()).0,
            "dim"
        );
        assert_eq!(
            field_of(parse_config("kernel=donsker\nbox=1,1\n").unwrap_err()).0,
            "box"
        );
        assert_eq!(
            field_of(parse_config("kernel=donsker\nn_grid=8,4\n").unwrap_err()).0,
            "n_grid"
        );
        assert_eq!(
            field_of(parse_config("kernel=donsker\nexperiments=bound-scan\nm=2\n").unwrap_err()).0,
            "m"
        );
        assert_eq!(
            field_of(parse_config("kernel=donsker\nterm=1 0 0.5\nterm=1 0.4 1\n").unwrap_err()),
            ("term".into(), Some(2))
        );
        assert_eq!(
            field_of(parse_config("kernel=donsker\nreps=10\n").unwrap_err()).0,
            "reps"
        );
    }

    #[test]
    fn minimal_suite_writes_csv_and_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = parse_config(MINIMAL).unwrap();
        c.out = dir.path().to_path_buf();
        let manifest = run_suite(&c).unwrap();
        assert_eq!(manifest.outcomes.len(), 1);
        let csv = fs::read_to_string(dir.path().join("moments.csv")).unwrap();
        assert!(csv.starts_with(Experiment::Moments.csv_header()));
        assert_eq!(csv.lines().count(), 3);
        assert!(dir.path().join("manifest.txt").exists());
    }

    #[test]
    fn suite_is_deterministic_across_worker_counts() {
        let text = "kernel=kac-stroock\ndim=2\nn_grid=4,8\nreps=1000\nexperiments=moments,gof\n";
        let mut a = parse_config(text).unwrap();
        let mut b = a.clone();
        a.workers = 1;
        b.workers = 3;
        for e in [Experiment::Moments, Experiment::Gof] {
            assert_eq!(
                run_experiment_to_string(&a, e).unwrap(),
                run_experiment_to_string(&b, e).unwrap()
            );
        }
    }

    #[test]
    fn reals_have_seventeen_digits() {
        assert_eq!(fmt_real(0.1), "1.0000000000000001e-1");
        assert_eq!(fmt_real(3.0), "3.0000000000000000e0");
        let x = 0.123_456_789_012_345_68_f64;
        assert_eq!(fmt_real(x).parse::<f64>().unwrap(), x);
    }

    #[test]
    fn rn_envelope_dominates() {
        for t in [[0.3, 0.7], [1.0, 0.01], [0.55, 0.55]] {
            let t = ParamPoint::new(t.to_vec()).unwrap();
            let upper = ParamPoint::splat(2, 1.0).unwrap();
            let mut prev = f64::INFINITY;
            for n in RN_SCALES {
                let e = rn_envelope(n, &t);
                assert!(rn_second_moment(n, &t, &upper).unwrap() <= e);
                assert!(e < prev);
                prev = e;
            }
        }
    }
}
