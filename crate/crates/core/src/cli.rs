//! Config-driven front end.
//!
//! Every subcommand resolves an [`ExperimentConfig`], runs to completion in
//! memory and only then writes its artifacts, so a failed run leaves the
//! output directory untouched. Exit codes: 0 success, 1 a checked property
//! failed, 2 invalid config or input.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::fourier::{self, FourierConfig};
use crate::lattice::{self, LatticePoint, LatticeSignal, WalkDistribution, WalkSpec};
use crate::mixing::{self, MixingKind};
use crate::observables::{BoxFamily, LocalObservable, Observable, ObservableSpec, SiteObservable};
use crate::phase::{self, BakerMap, Strip, DEFAULT_ITINERARY_BUDGET};
use crate::presets;
use crate::rational::{self, Rational, RationalText};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum WalkChoice {
    Preset { preset: String },
    Spec(WalkSpec),
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Schedules {
    #[serde(default)]
    pub n_list: Option<Vec<u64>>,
    #[serde(default)]
    pub r_list: Option<Vec<u64>>,
    #[serde(default)]
    pub epsilon: Option<f64>,
    /// Accept `0 < ε < 1/3` outside the strict bound; results are flagged.
    #[serde(default)]
    pub exploratory: bool,
    #[serde(default)]
    pub grid: Option<usize>,
    /// Tolerances for the M2 ε–M scan.
    #[serde(default)]
    pub epsilons: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LocalTerm {
    pub site: Vec<i64>,
    #[serde(default = "zero")]
    pub a: RationalText,
    #[serde(default = "one")]
    pub b: RationalText,
    #[serde(default = "one")]
    pub weight: RationalText,
}

fn zero() -> RationalText {
    RationalText(rational::int(0))
}

fn one() -> RationalText {
    RationalText(rational::int(1))
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub walk: Option<WalkChoice>,
    #[serde(default)]
    pub observables: Vec<ObservableSpec>,
    /// Local observable as a weighted sum of strips.
    #[serde(default)]
    pub local: Vec<LocalTerm>,
    #[serde(default)]
    pub family: Option<BoxFamily>,
    #[serde(default)]
    pub schedules: Schedules,
    #[serde(default)]
    pub mixing: Option<MixingKind>,
    /// Depth offset `m` for M5 reports.
    #[serde(default)]
    pub depth: u64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub samples: Option<u64>,
    #[serde(default)]
    pub steps: Option<u32>,
    #[serde(default)]
    pub budget: Option<u128>,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// SHA-256 of the canonical JSON form, output directory excluded.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output = None;
        let bytes = serde_json::to_vec(&c).expect("config serializes");
        hex::encode(Sha256::digest(&bytes))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Span condition verdict and torus witness.
    SpanCheck,
    /// Monte Carlo site histogram with a chi-square test.
    Simulate,
    /// Global-local correlations against the itinerary oracle.
    Correlate,
    /// M1–M5 series selected by the config's `mixing` field.
    MixingReport,
    /// Defect norms and local bounds of the Fourier argument.
    FourierDecay,
    /// Wiener-algebra inequality on random signals.
    NowakTest,
    /// Boundary defect of the box family.
    A1Check,
    /// Implication audit on the observable suite.
    Audit,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::SpanCheck => "span-check",
            Command::Simulate => "simulate",
            Command::Correlate => "correlate",
            Command::MixingReport => "mixing-report",
            Command::FourierDecay => "fourier-decay",
            Command::NowakTest => "nowak-test",
            Command::A1Check => "a1-check",
            Command::Audit => "audit",
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "rwmix", version, about = "Mixing diagnostics for random-walk baker lattices")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_name = "U64")]
    pub seed: Option<u64>,
    /// Also emit SVG plots where a series is produced.
    #[arg(long, global = true)]
    pub plot: bool,
    #[arg(long, global = true, value_name = "M")]
    pub grid: Option<usize>,
    #[arg(long, global = true, value_name = "N")]
    pub budget: Option<u64>,
    /// Walk preset, overriding the config's walk.
    #[arg(long, global = true, value_name = "NAME")]
    pub preset: Option<String>,
}

pub const DEFAULT_OUT: &str = "rwmix-out";

/// A named artifact held in memory until the run succeeds.
#[derive(Clone, Debug, PartialEq)]
pub struct Artifact {
    pub name: String,
    pub bytes: Vec<u8>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Outcome {
    pub summary: Value,
    pub artifacts: Vec<Artifact>,
    /// `false` when a checked property failed (exit 1).
    pub passed: bool,
}

/// Everything a command needs, validated.
pub struct Resolved {
    pub config: ExperimentConfig,
    pub hash: String,
    pub walk: WalkDistribution,
    pub observables: Vec<Observable>,
    pub local: LocalObservable,
    pub fourier: FourierConfig,
    pub plot: bool,
    pub budget: u128,
}

impl Resolved {
    pub fn new(mut config: ExperimentConfig, plot: bool) -> Result<Self> {
        let walk = match &config.walk {
            None => presets::third_walk(),
            Some(WalkChoice::Preset { preset }) => presets::walk_preset(preset)?,
            Some(WalkChoice::Spec(spec)) => WalkDistribution::from_spec(spec)?,
        };
        let dim = walk.dim();
        let observables = config
            .observables
            .iter()
            .map(|s| s.build(dim))
            .collect::<Result<Vec<_>>>()?;
        let local = if config.local.is_empty() {
            LocalObservable::unit_square(LatticePoint::origin(dim))
        } else {
            let terms = config
                .local
                .iter()
                .map(|t| Ok((Strip::new(LatticePoint(t.site.clone()), t.a.0.clone(), t.b.0.clone())?, t.weight.0.clone())))
                .collect::<Result<Vec<_>>>()?;
            LocalObservable::new(dim, terms)?
        };
        let s = &config.schedules;
        let fourier = match s.epsilon {
            None => FourierConfig::new(dim, fourier::epsilon_limit(dim) / 2.0)?,
            Some(eps) if s.exploratory => FourierConfig::exploratory(dim, eps)?,
            Some(eps) => FourierConfig::new(dim, eps)?,
        };
        if let Some(eps) = &s.epsilons {
            if eps.iter().any(|e| e.is_nan() || *e <= 0.0) {
                return Err(Error::InvalidConfig("scan tolerances must be positive".into()));
            }
        }
        if matches!(config.steps, Some(0)) || matches!(config.samples, Some(0)) {
            return Err(Error::InvalidConfig("steps and samples must be positive".into()));
        }
        let budget = config.budget.unwrap_or(DEFAULT_ITINERARY_BUDGET);
        config.budget = Some(budget);
        let hash = config.hash();
        Ok(Resolved {
            config,
            hash,
            walk,
            observables,
            local,
            fourier,
            plot,
            budget,
        })
    }

    fn header(&self) -> String {
        format!("config_hash={},seed={}", self.hash, self.config.seed)
    }

    fn csv(&self, name: &str, body: Vec<u8>) -> Artifact {
        let mut bytes = format!("# {}\n", self.header()).into_bytes();
        bytes.extend(body);
        Artifact {
            name: name.into(),
            bytes,
        }
    }

    fn json(&self, name: &str, command: Command, report: Value) -> Artifact {
        let doc = json!({
            "config_hash": self.hash,
            "seed": self.config.seed,
            "command": command.name(),
            "report": report,
        });
        let mut bytes = serde_json::to_vec_pretty(&doc).expect("report serializes");
        bytes.push(b'\n');
        Artifact {
            name: name.into(),
            bytes,
        }
    }

    fn svg(&self, name: &str, plot: &Plot) -> Option<Artifact> {
        self.plot.then(|| Artifact {
            name: name.into(),
            bytes: plot.render(&self.header()).into_bytes(),
        })
    }

    fn n_list(&self, default: &[u64]) -> Vec<u64> {
        self.config.schedules.n_list.clone().unwrap_or_else(|| default.to_vec())
    }

    fn r_list(&self, default: &[u64]) -> Vec<u64> {
        self.config.schedules.r_list.clone().unwrap_or_else(|| default.to_vec())
    }

    fn site_observables(&self, map: &BakerMap, default: Vec<SiteObservable>) -> Result<Vec<SiteObservable>> {
        if self.observables.is_empty() {
            return Ok(default);
        }
        self.observables.iter().map(|o| o.to_site(map)).collect()
    }
}

/// Applies flag overrides to the config file (or the default config).
pub fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut config = match &cli.config {
        Some(path) => ExperimentConfig::from_json(&std::fs::read_to_string(path)?)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(grid) = cli.grid {
        config.schedules.grid = Some(grid);
    }
    if let Some(budget) = cli.budget {
        config.budget = Some(budget as u128);
    }
    if let Some(preset) = &cli.preset {
        config.walk = Some(WalkChoice::Preset { preset: preset.clone() });
    }
    if let Some(out) = &cli.out {
        config.output = Some(out.clone());
    }
    Ok(config)
}

pub fn execute(command: Command, r: &Resolved) -> Result<Outcome> {
    match command {
        Command::SpanCheck => span_check(r),
        Command::Simulate => simulate(r),
        Command::Correlate => correlate(r),
        Command::MixingReport => mixing_report(r),
        Command::FourierDecay => fourier_decay(r),
        Command::NowakTest => nowak_test(r),
        Command::A1Check => a1_check(r),
        Command::Audit => audit(r),
    }
}

pub fn write_artifacts(dir: &Path, artifacts: &[Artifact]) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    for a in artifacts {
        std::fs::write(dir.join(&a.name), &a.bytes)?;
    }
    Ok(())
}

/// Parses `args` (program name first), runs and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            report_error("usage", &e.to_string());
            return 2;
        }
    };
    let command = cli.command;
    let outcome = load_config(&cli)
        .and_then(|c| Resolved::new(c, cli.plot))
        .and_then(|r| execute(command, &r).map(|o| (o, r)));
    match outcome {
        Ok((outcome, resolved)) => {
            let dir = resolved.config.output.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
            if let Err(e) = write_artifacts(&dir, &outcome.artifacts) {
                report_error(error_kind(&e), &e.to_string());
                return 2;
            }
            println!("{}", outcome.summary);
            if outcome.passed {
                0
            } else {
                1
            }
        }
        Err(e) => {
            report_error(error_kind(&e), &e.to_string());
            2
        }
    }
}

fn report_error(kind: &str, message: &str) {
    eprintln!("{}", json!({ "error": kind, "message": message.trim_end() }));
}

fn error_kind(e: &Error) -> &'static str {
    match e {
        Error::Io(_) => "io",
        Error::Json(_) => "config_parse",
        Error::BudgetExceeded { .. } => "budget_exceeded",
        Error::Aliasing { .. } => "aliasing",
        _ => "invalid_config",
    }
}

fn span_check(r: &Resolved) -> Result<Outcome> {
    let verdict = lattice::span_check(&r.walk);
    let witness = fourier::span_witness(&r.walk);
    let points = r
        .config
        .schedules
        .grid
        .unwrap_or_else(|| fourier::default_grid_points(r.walk.max_step() as u64) * 8);
    let grid = fourier::char_function(&r.walk.as_f64_signal(), points)?;
    let report = json!({
        "verdict": verdict,
        "witness": witness,
        "grid_points": points,
        "max_modulus_off_origin": grid.max_abs_off_origin(),
    });
    Ok(Outcome {
        summary: serde_json::to_value(&verdict)?,
        artifacts: vec![r.json("span.json", Command::SpanCheck, report)],
        passed: true,
    })
}

pub const CHI_SQUARE_LEVEL: f64 = 1e-3;

fn simulate(r: &Resolved) -> Result<Outcome> {
    let steps = r.config.steps.unwrap_or(4);
    let samples = r.config.samples.unwrap_or(500_000);
    let map = BakerMap::new(&r.walk);
    let hist = phase::simulate_walk(&map, steps, samples, r.config.seed)?;
    let law = lattice::convolution_power(&r.walk, steps as u64);
    let chi = phase::chi_square(&hist, &law);
    let passed = chi.p_value >= CHI_SQUARE_LEVEL;
    let mut csv = Vec::new();
    phase::write_histogram_csv(&mut csv, &hist, &r.walk)?;
    let report = json!({
        "steps": steps,
        "samples": samples,
        "mean_site": hist.mean_site(),
        "chi_square": chi,
        "level": CHI_SQUARE_LEVEL,
        "passed": passed,
    });
    Ok(Outcome {
        summary: json!({ "p_value": chi.p_value, "passed": passed }),
        artifacts: vec![r.csv("histogram.csv", csv), r.json("simulate.json", Command::Simulate, report)],
        passed,
    })
}

fn correlate(r: &Resolved) -> Result<Outcome> {
    let map = BakerMap::new(&r.walk);
    let observables = if r.observables.is_empty() {
        vec![Observable::Site(SiteObservable::parity(r.walk.dim()))]
    } else {
        r.observables.clone()
    };
    let mut rows = Vec::new();
    let mut all_agree = true;
    for (i, f) in observables.iter().enumerate() {
        for n in r.n_list(&[0, 1, 2, 3, 4, 5, 6]) {
            let value = match f {
                Observable::Site(s) => Some(mixing::correlate_global_local(s, &r.local, &r.walk, n)?),
                Observable::Cell(c) if n >= c.backward_depth() as u64 => Some(mixing::correlate_cell_local(c, &r.local, &map, n)?),
                Observable::Cell(_) => None,
            };
            let oracle = if phase::itinerary_count(map.symbols(), n as u32) <= r.budget {
                let mut acc = Rational::from_integer(0.into());
                for (strip, w) in r.local.terms() {
                    acc += w * match f {
                        Observable::Site(s) => mixing::itinerary_oracle(s, strip, &map, n as u32, r.budget)?,
                        Observable::Cell(c) => mixing::itinerary_oracle_cell(c, strip, &map, n as u32, r.budget)?,
                    };
                }
                Some(acc)
            } else {
                None
            };
            let agree = match (&value, &oracle) {
                (Some(v), Some(o)) => Some(v == o),
                _ => None,
            };
            all_agree &= agree != Some(false);
            rows.push(json!({
                "observable": i,
                "n": n,
                "value": value.as_ref().map(rational::format_rational),
                "value_f64": value.as_ref().map(rational::to_f64),
                "oracle": oracle.as_ref().map(rational::format_rational),
                "agree": agree,
            }));
        }
    }
    let report = json!({ "local_integral": rational::format_rational(&r.local.integral()), "rows": rows });
    Ok(Outcome {
        summary: json!({ "rows": rows.len(), "oracle_agrees": all_agree }),
        artifacts: vec![r.json("correlate.json", Command::Correlate, report)],
        passed: all_agree,
    })
}

fn mixing_report(r: &Resolved) -> Result<Outcome> {
    let map = BakerMap::new(&r.walk);
    let dim = r.walk.dim();
    let suite = r.site_observables(&map, vec![SiteObservable::parity(dim)])?;
    let f = &suite[0];
    let g = suite.get(1).unwrap_or(f);
    let kind = r.config.mixing.unwrap_or(MixingKind::M5);
    let mut artifacts = Vec::new();
    let summary;
    match kind {
        MixingKind::M5 => {
            let n_list = r.n_list(&(0..=20).collect::<Vec<_>>());
            let report = mixing::m5_report(f, &r.walk, &n_list, r.config.depth, "F")?;
            let mut csv = Vec::new();
            mixing::write_m5_csv(&mut csv, &report)?;
            let rate = rate_or_null(&report.gap_series, 0.0);
            summary = json!({ "kind": "M5", "points": n_list.len(), "rate": rate });
            artifacts.push(r.csv("m5.csv", csv));
            artifacts.push(r.json("m5.json", Command::MixingReport, json!({ "report": report, "rate": rate })));
            let pts = report.series.iter().map(|e| (e.n as f64, e.deviation)).collect();
            artifacts.extend(r.svg("m5.svg", &Plot::new("M5 gap", false).series("gap", pts)));
        }
        MixingKind::M4 | MixingKind::M3 => {
            let n_list = r.n_list(&(0..=20).collect::<Vec<_>>());
            let report = mixing::m4_report(f, &r.local, &r.walk, &n_list, "F")?;
            if kind == MixingKind::M3 && report.kind != MixingKind::M3 {
                return Err(Error::InvalidConfig("M3 needs a local observable with zero integral".into()));
            }
            let name = if report.kind == MixingKind::M3 { "m3" } else { "m4" };
            let mut csv = Vec::new();
            mixing::write_m4_csv(&mut csv, &report)?;
            let series: Vec<(u64, f64)> = report.series.iter().map(|e| (e.n, e.value)).collect();
            let rate = rate_or_null(&series, report.target);
            summary = json!({ "kind": report.kind, "points": n_list.len(), "rate": rate });
            artifacts.push(r.csv(&format!("{name}.csv"), csv));
            let pts = report.series.iter().map(|e| (e.n as f64, e.deviation)).collect();
            artifacts.push(r.json(&format!("{name}.json"), Command::MixingReport, json!({ "report": report, "rate": rate })));
            artifacts.extend(r.svg(&format!("{name}.svg"), &Plot::new("global-local deviation", false).series("deviation", pts)));
        }
        MixingKind::M2 => {
            let family = r.config.family.unwrap_or(BoxFamily::TranslationInvariant);
            let eps = r.config.schedules.epsilons.clone().unwrap_or_else(|| mixing::DEFAULT_EPSILONS.to_vec());
            let table = mixing::m2_table(
                f,
                g,
                &r.walk,
                &r.n_list(&[1, 2, 5, 10, 20]),
                &r.r_list(&[10, 100, 1000, 10_000]),
                family,
                &eps,
                r.config.seed,
            )?;
            let mut csv = Vec::new();
            mixing::write_m2_csv(&mut csv, &table)?;
            summary = json!({ "kind": "M2", "entries": table.entries.len(), "scan": table.scan });
            artifacts.push(r.csv("m2.csv", csv));
            artifacts.push(r.json("m2.json", Command::MixingReport, serde_json::to_value(&table)?));
        }
        MixingKind::M1 => {
            let mut rows = Vec::new();
            for n in r.n_list(&[0, 1, 2, 5, 10, 20]) {
                rows.push(json!({ "n": n, "limit": mixing::m1_limit(f, g, &r.walk, n)? }));
            }
            let av = |o: &SiteObservable| match o.analytic_average(BoxFamily::TranslationInvariant) {
                crate::observables::AverageValue::Exact(v) => Some(rational::format_rational(&v)),
                crate::observables::AverageValue::NonConvergent => None,
            };
            summary = json!({ "kind": "M1", "points": rows.len() });
            let report = json!({ "av_f": av(f), "av_g": av(g), "rows": rows });
            artifacts.push(r.json("m1.json", Command::MixingReport, report));
        }
    }
    Ok(Outcome {
        summary,
        artifacts,
        passed: true,
    })
}

fn rate_or_null(series: &[(u64, f64)], target: f64) -> Value {
    mixing::rate_profile(series, target)
        .ok()
        .and_then(|p| serde_json::to_value(p).ok())
        .unwrap_or(Value::Null)
}

/// Relative slack for the `a_norm ≤ bound` comparison.
pub const QUADRATURE_TOLERANCE: f64 = 1e-8;

fn fourier_decay(r: &Resolved) -> Result<Outcome> {
    let n_list = r.n_list(&[4, 16, 64, 256, 1024]);
    if n_list.contains(&0) {
        return Err(Error::InvalidConfig("fourier-decay needs n ≥ 1".into()));
    }
    let max_n = *n_list.iter().max().ok_or_else(|| Error::InvalidConfig("n list is empty".into()))?;
    let bandwidth = max_n * r.walk.max_step() as u64 + r.fourier.r_n(max_n);
    let points = match r.config.schedules.grid {
        Some(m) if (m as u64) <= 2 * bandwidth => {
            return Err(Error::InvalidConfig(format!(
                "grid M = {m} must exceed twice the bandwidth {bandwidth}"
            )))
        }
        Some(m) => m,
        None => fourier::default_grid_points(bandwidth),
    };
    let mut rows = Vec::new();
    for &n in &n_list {
        rows.push(fourier::defect_norms(&r.walk, n, &r.fourier, points)?.1);
    }
    let bounded = rows.iter().all(|d| d.a_norm <= d.bound * (1.0 + QUADRATURE_TOLERANCE));
    let monotone = rows.windows(2).all(|w| w[1].recorded() < w[0].recorded());
    let local = fourier::local_bounds_report(&r.walk, &n_list, &r.fourier, points)?;

    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["n", "r_n", "l1_grid", "sobolev", "a_norm", "bound"])?;
    for d in &rows {
        w.write_record([
            d.n.to_string(),
            d.r_n.to_string(),
            d.l1_grid.to_string(),
            d.sobolev.to_string(),
            d.a_norm.to_string(),
            d.bound.to_string(),
        ])?;
    }
    let csv = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    let report = json!({
        "fourier": r.fourier,
        "grid_points": points,
        "rows": rows,
        "monotone": monotone,
        "bounded": bounded,
        "local_bounds": local,
    });
    let mut artifacts = vec![r.csv("decay.csv", csv), r.json("decay.json", Command::FourierDecay, report)];
    let plot = Plot::new("defect norms", true)
        .series("l1_grid + sobolev", rows.iter().map(|d| (d.n as f64, d.recorded())).collect())
        .series("a_norm", rows.iter().map(|d| (d.n as f64, d.a_norm)).collect());
    artifacts.extend(r.svg("decay.svg", &plot));
    Ok(Outcome {
        summary: json!({ "monotone": monotone, "bounded": bounded, "exploratory": r.fourier.exploratory }),
        artifacts,
        passed: bounded,
    })
}

pub const NOWAK_SIGNALS: usize = 200;
pub const NOWAK_MAX_RADIUS: i64 = 6;

/// Random `f64` signal in `dim` dimensions with support radius at most
/// `NOWAK_MAX_RADIUS`; each site is kept with probability 1/2.
pub fn random_signal(rng: &mut ChaCha8Rng, dim: usize) -> LatticeSignal<f64> {
    let radius = rng.gen_range(0..=NOWAK_MAX_RADIUS);
    let cube = lattice::LatticeBox::cube(&LatticePoint::origin(dim), radius);
    let entries: Vec<(LatticePoint, f64)> = cube
        .points()
        .filter_map(|p| rng.gen_bool(0.5).then(|| (p, rng.gen_range(-1.0..1.0))))
        .collect();
    LatticeSignal::from_entries(dim, entries).expect("dimensions match")
}

fn nowak_test(r: &Resolved) -> Result<Outcome> {
    let constants = (1..=3).map(fourier::nowak_constant).collect::<Result<Vec<_>>>()?;
    let c1_target = std::f64::consts::PI / 3f64.sqrt();
    let c1_ok = (constants[0].c_d - c1_target).abs() < 1e-3;
    let mut rng = ChaCha8Rng::seed_from_u64(r.config.seed);
    let mut rows = Vec::new();
    for i in 0..NOWAK_SIGNALS {
        let dim = 1 + i % 3;
        let a = random_signal(&mut rng, dim);
        let check = fourier::nowak_check(&a)?;
        rows.push(json!({ "dim": dim, "support": a.len(), "check": check }));
    }
    let violations = rows.iter().filter(|v| v["check"]["holds"] == json!(false)).count();
    let passed = c1_ok && violations == 0;
    let report = json!({
        "constants": constants,
        "c1_target": c1_target,
        "c1_ok": c1_ok,
        "signals": rows,
        "violations": violations,
    });
    Ok(Outcome {
        summary: json!({ "c1": constants[0].c_d, "signals": NOWAK_SIGNALS, "violations": violations }),
        artifacts: vec![r.json("nowak.json", Command::NowakTest, report)],
        passed,
    })
}

fn a1_check(r: &Resolved) -> Result<Outcome> {
    let constant = lattice::a1_bound_constant(&r.walk);
    let mut rows = Vec::new();
    let mut passed = true;
    for radius in r.r_list(&[10, 100, 1000]) {
        let defect = lattice::a1_defect(&r.walk, radius)?;
        let scaled = &defect * Rational::from_integer(radius.into());
        let holds = scaled <= constant;
        passed &= holds;
        rows.push(json!({
            "r": radius,
            "defect": rational::format_rational(&defect),
            "scaled": rational::to_f64(&scaled),
            "holds": holds,
        }));
    }
    let report = json!({ "constant": rational::format_rational(&constant), "rows": rows });
    Ok(Outcome {
        summary: json!({ "constant": rational::to_f64(&constant), "holds": passed }),
        artifacts: vec![r.json("a1.json", Command::A1Check, report)],
        passed,
    })
}

fn audit(r: &Resolved) -> Result<Outcome> {
    let map = BakerMap::new(&r.walk);
    let dim = r.walk.dim();
    let default = vec![
        SiteObservable::parity(dim),
        SiteObservable::constant(dim, rational::int(2)),
        SiteObservable::even_sites(dim),
    ];
    let suite = r.site_observables(&map, default)?;
    let record = mixing::implication_audit(&r.walk, &suite, &r.n_list(&[1, 2, 4, 8, 16]), &r.r_list(&[5, 50, 500]))?;
    let mut csv = Vec::new();
    mixing::write_audit_csv(&mut csv, &record)?;
    let passed = record.all_consistent && record.all_bounded;
    Ok(Outcome {
        summary: json!({ "consistent": record.all_consistent, "bounded": record.all_bounded, "rows": record.rows.len() }),
        artifacts: vec![r.csv("audit.csv", csv), r.json("audit.json", Command::Audit, serde_json::to_value(&record)?)],
        passed,
    })
}

/// Minimal SVG line plot with a logarithmic y axis.
pub struct Plot {
    title: String,
    log_x: bool,
    series: Vec<(String, Vec<(f64, f64)>)>,
}

const PALETTE: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

impl Plot {
    pub fn new(title: &str, log_x: bool) -> Self {
        Plot {
            title: title.into(),
            log_x,
            series: Vec::new(),
        }
    }

    pub fn series(mut self, label: &str, points: Vec<(f64, f64)>) -> Self {
        self.series.push((label.into(), points));
        self
    }

    /// Points with nonpositive coordinates on a log axis are dropped.
    pub fn render(&self, comment: &str) -> String {
        let (w, h, pad) = (640.0, 400.0, 50.0);
        let tx = |x: f64| if self.log_x { x.log10() } else { x };
        let pts: Vec<Vec<(f64, f64)>> = self
            .series
            .iter()
            .map(|(_, s)| {
                s.iter()
                    .filter(|(x, y)| *y > 0.0 && (!self.log_x || *x > 0.0))
                    .map(|(x, y)| (tx(*x), y.log10()))
                    .collect()
            })
            .collect();
        let all = pts.iter().flatten();
        let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        for (x, y) in all {
            x0 = x0.min(*x);
            x1 = x1.max(*x);
            y0 = y0.min(*y);
            y1 = y1.max(*y);
        }
        if x0 >= x1 {
            x1 = x0 + 1.0;
        }
        if y0 >= y1 {
            y1 = y0 + 1.0;
        }
        let sx = |x: f64| pad + (x - x0) / (x1 - x0) * (w - 2.0 * pad);
        let sy = |y: f64| h - pad - (y - y0) / (y1 - y0) * (h - 2.0 * pad);
        let mut out = String::new();
        let _ = writeln!(out, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#);
        let _ = writeln!(out, "<!-- {comment} -->");
        let _ = writeln!(out, r#"<rect x="{pad}" y="{pad}" width="{}" height="{}" fill="none" stroke="black"/>"#, w - 2.0 * pad, h - 2.0 * pad);
        let _ = writeln!(out, r#"<text x="{}" y="30" text-anchor="middle" font-size="14">{}</text>"#, w / 2.0, self.title);
        let xl = if self.log_x { "log10 n" } else { "n" };
        let _ = writeln!(
            out,
            r#"<text x="{pad}" y="{}" font-size="11">{xl}: {x0:.3} .. {x1:.3}; log10 y: {y0:.3} .. {y1:.3}</text>"#,
            h - 15.0
        );
        for (i, ((label, _), p)) in self.series.iter().zip(&pts).enumerate() {
            let color = PALETTE[i % PALETTE.len()];
            let coords: Vec<String> = p.iter().map(|(x, y)| format!("{:.2},{:.2}", sx(*x), sy(*y))).collect();
            let _ = writeln!(out, r#"<polyline fill="none" stroke="{color}" points="{}"/>"#, coords.join(" "));
            let _ = writeln!(
                out,
                r#"<text x="{}" y="{}" font-size="11" fill="{color}">{label}</text>"#,
                w - pad - 150.0,
                pad + 15.0 * (i + 1) as f64
            );
        }
        out.push_str("</svg>\n");
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn resolved(text: &str) -> Result<Resolved> {
        Resolved::new(ExperimentConfig::from_json(text)?, false)
    }

    #[test]
    fn config_parses_presets_and_specs() {
        let r = resolved(r#"{"walk": {"preset": "lazy-2d"}}"#).unwrap();
        assert_eq!(r.walk.dim(), 2);
        let r = resolved(r#"{"walk": {"dim": 1, "support": [{"beta": [1], "p": "1/4"}, {"beta": [-1], "p": "3/4"}]}}"#).unwrap();
        assert_eq!(r.walk.len(), 2);
        assert!((r.fourier.epsilon - fourier::epsilon_limit(1) / 2.0).abs() < 1e-15);
    }

    #[test]
    fn config_rejections() {
        let neg = r#"{"walk": {"dim": 1, "support": [{"beta": [1], "p": "-1/3"}, {"beta": [-1], "p": "4/3"}]}}"#;
        assert!(resolved(neg).is_err());
        assert!(resolved(r#"{"schedules": {"epsilon": 0.1}}"#).is_err());
        assert!(resolved(r#"{"schedules": {"epsilon": 0.1, "exploratory": true}}"#).unwrap().fourier.exploratory);
        assert!(resolved(r#"{"unknown": 1}"#).is_err());
    }

    #[test]
    fn hash_ignores_output_dir() {
        let a = ExperimentConfig::from_json(r#"{"seed": 3, "output": "x"}"#).unwrap();
        let b = ExperimentConfig::from_json(r#"{"seed": 3, "output": "y"}"#).unwrap();
        let c = ExperimentConfig::from_json(r#"{"seed": 4}"#).unwrap();
        assert_eq!(a.hash(), b.hash());
        assert_ne!(a.hash(), c.hash());
    }

    #[test]
    fn span_summary() {
        let r = resolved("{}").unwrap();
        let out = execute(Command::SpanCheck, &r).unwrap();
        assert_eq!(out.summary, json!({ "verdict": "FullLattice" }));
    }

    #[test]
    fn m5_csv_rows() {
        let r = resolved(r#"{"schedules": {"n_list": [0, 1, 2, 3]}}"#).unwrap();
        let out = execute(Command::MixingReport, &r).unwrap();
        let text = String::from_utf8(out.artifacts[0].bytes.clone()).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert!(lines[0].starts_with("# config_hash="));
        assert_eq!(lines[1], "n,gap,target_zero");
        assert_eq!(lines[3], format!("1,{},0", 1.0 / 3.0));
    }

    #[test]
    fn fourier_grid_validation() {
        let r = resolved(r#"{"schedules": {"n_list": [4, 16], "grid": 32}}"#).unwrap();
        assert!(matches!(execute(Command::FourierDecay, &r), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn plot_is_deterministic() {
        let p = Plot::new("t", true).series("s", vec![(1.0, 1.0), (10.0, 0.1), (100.0, 0.0)]);
        assert_eq!(p.render("c"), p.render("c"));
        assert!(p.render("c").contains("<polyline"));
    }
}
