// SPDX-License-Identifier: MIT OR Apache-2.0

//! Command implementations behind the `covratio` binary.
//!
//! Every file written is accompanied by a manifest (`<file>.manifest.json`, or
//! `manifest.json` for a batch directory). Result payloads carry no clock
//! readings, so equal manifests give byte-identical payloads; wall-clock
//! runtimes live only in the manifests.

pub mod io;

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use covratio::detector::{CandidateTrace, Detector, DetectorConfig};
use covratio::metrics::{evaluate, EvalReport, DEFAULT_MATCH_TOLERANCE};
use covratio::rmt::{centering_integral, theorem_moments, AspectRatio, MomentForm};
use covratio::simulate::{covariance_seed, generate, seed_for, ErrorDist, GroundTruth, ScenarioKind, ScenarioSpec};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub const SCHEMA: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Numerical(String),
}

impl CliError {
    pub fn io(path: &Path, err: std::io::Error) -> Self {
        Self::Data(format!("{}: {err}", path.display()))
    }

    /// 1 usage or configuration, 2 data, 3 numerical.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Usage(_) => 1,
            Self::Data(_) => 2,
            Self::Numerical(_) => 3,
        }
    }
}

impl From<covratio::Error> for CliError {
    fn from(err: covratio::Error) -> Self {
        use covratio::Error as E;
        if err.is_numerical() {
            return Self::Numerical(err.to_string());
        }
        match err {
            E::Config(_) | E::Domain { .. } => Self::Usage(err.to_string()),
            _ => Self::Data(err.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "covratio", version, about = "Changepoints in the covariance of multivariate time series")]
pub struct Cli {
    /// Cap on worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Detect changepoints in CSV data (rows = time, columns = variables).
    Detect(DetectArgs),
    /// Write seeded scenario replicates as CSV data plus JSON ground truth.
    Simulate(SimulateArgs),
    /// Score segmentations against ground truth as CSV.
    Evaluate(EvaluateArgs),
    /// Print the centering term and asymptotic moments for one split.
    Rmt(RmtArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Moments {
    Corrected,
    AsPrinted,
}

impl From<Moments> for MomentForm {
    fn from(m: Moments) -> Self {
        match m {
            Moments::Corrected => MomentForm::Corrected,
            Moments::AsPrinted => MomentForm::AsPrinted,
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct DetectArgs {
    /// Input CSV files.
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    /// Output JSON (single input only); stdout when absent.
    #[arg(short, long, conflicts_with = "output_dir")]
    pub output: Option<PathBuf>,
    /// Directory receiving `<stem>.seg.json` per input.
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    /// Minimum segment length (default max(4p, 30)).
    #[arg(long)]
    pub minseglen: Option<usize>,
    /// Skip subtracting the column means.
    #[arg(long)]
    pub no_center: bool,
    /// Single-change test instead of binary segmentation.
    #[arg(long)]
    pub single: bool,
    /// Raw threshold on the standardized statistic.
    #[arg(long, allow_negative_numbers = true)]
    pub threshold: Option<f64>,
    #[arg(long, value_enum, default_value_t = Moments::Corrected)]
    pub moments: Moments,
    /// Omit the per-candidate traces.
    #[arg(long)]
    pub no_trace: bool,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SimulateArgs {
    /// Scenario JSON file; inline flags are ignored when given.
    #[arg(long)]
    pub scenario: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub kind: Option<KindArg>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub p: Option<usize>,
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long)]
    pub phi: Option<f64>,
    #[arg(long, value_enum)]
    pub dist: Option<DistArg>,
    #[arg(long)]
    pub num_changes: Option<usize>,
    #[arg(long)]
    pub kappa1: Option<f64>,
    #[arg(long)]
    pub kappa2: Option<f64>,
    #[arg(long)]
    pub unit_variance: bool,
    #[arg(long, default_value_t = 1)]
    pub reps: u64,
    /// Index of the first replicate.
    #[arg(long, default_value_t = 0)]
    pub first_rep: u64,
    /// File-name prefix (default: the scenario kind).
    #[arg(long)]
    pub name: Option<String>,
    #[arg(short, long)]
    pub output_dir: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum KindArg {
    Null,
    SingleScale,
    Ar1,
    ErrorDist,
    MultiD1,
    MultiD2,
}

impl From<KindArg> for ScenarioKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::Null => Self::Null,
            KindArg::SingleScale => Self::SingleScale,
            KindArg::Ar1 => Self::Ar1,
            KindArg::ErrorDist => Self::ErrorDist,
            KindArg::MultiD1 => Self::MultiD1,
            KindArg::MultiD2 => Self::MultiD2,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DistArg {
    Normal,
    Uniform,
    Exponential,
    StudentT5,
}

impl From<DistArg> for ErrorDist {
    fn from(d: DistArg) -> Self {
        match d {
            DistArg::Normal => Self::Normal,
            DistArg::Uniform => Self::Uniform,
            DistArg::Exponential => Self::Exponential,
            DistArg::StudentT5 => Self::StudentT5,
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct EvaluateArgs {
    /// Segmentation JSON files from `detect`.
    #[arg(long, num_args = 1.., required = true)]
    pub segmentation: Vec<PathBuf>,
    /// Truth JSON files from `simulate`, paired in order.
    #[arg(long, num_args = 1.., required = true)]
    pub truth: Vec<PathBuf>,
    /// Data CSVs for the MAE; defaults to each segmentation's recorded input.
    #[arg(long, num_args = 1..)]
    pub data: Vec<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_MATCH_TOLERANCE)]
    pub tolerance: usize,
    /// Output CSV; stdout when absent.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct RmtArgs {
    #[arg(long)]
    pub gamma1: f64,
    #[arg(long)]
    pub gamma2: f64,
    #[arg(long)]
    pub p: usize,
    #[arg(long, value_enum, default_value_t = Moments::Corrected)]
    pub moments: Moments,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub schema: u32,
    pub command: Vec<String>,
    pub config: serde_json::Value,
    pub seed_policy: String,
    pub version: String,
    pub runtime_ms: f64,
    pub outputs: Vec<PathBuf>,
}

fn manifest(command: &[String], config: serde_json::Value, seed_policy: &str, runtime_ms: f64, outputs: Vec<PathBuf>) -> Manifest {
    Manifest {
        schema: SCHEMA,
        command: command.to_vec(),
        config,
        seed_policy: seed_policy.into(),
        version: env!("CARGO_PKG_VERSION").into(),
        runtime_ms,
        outputs,
    }
}

pub fn manifest_path(output: &Path) -> PathBuf {
    let mut name = output.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest.json");
    output.with_file_name(name)
}

fn write_manifest(path: &Path, m: &Manifest) -> Result<(), CliError> {
    io::write_text(path, &io::to_json(m))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceOut {
    pub segment: (usize, usize),
    pub t: Vec<usize>,
    pub value: Vec<f64>,
    pub argmax: Option<usize>,
    pub max_value: Option<f64>,
}

impl From<&CandidateTrace> for TraceOut {
    fn from(tr: &CandidateTrace) -> Self {
        Self {
            segment: tr.segment,
            t: tr.candidates().map(|(t, _)| t).collect(),
            value: tr.values.clone(),
            argmax: tr.argmax,
            max_value: tr.max_value,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Single,
    Multiple,
}

/// Payload of `detect`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentationOut {
    pub schema: u32,
    pub input: PathBuf,
    pub mode: Mode,
    pub n: usize,
    pub p: usize,
    pub changepoints: Vec<usize>,
    pub threshold: f64,
    pub config: DetectorConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub traces: Option<Vec<TraceOut>>,
}

/// Payload of `simulate` per replicate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthOut {
    pub schema: u32,
    pub scenario: ScenarioSpec,
    pub seed: u64,
    #[serde(flatten)]
    pub truth: GroundTruth,
}

pub fn detector_config(args: &DetectArgs) -> DetectorConfig {
    DetectorConfig {
        alpha: args.alpha,
        minseglen: args.minseglen,
        center_mean: !args.no_center,
        threshold_override: args.threshold,
        moments: args.moments.into(),
    }
}

pub fn detect_one(input: &Path, config: &DetectorConfig, single: bool, with_trace: bool) -> Result<SegmentationOut, CliError> {
    let data = io::read_matrix(input)?;
    let detector = Detector::new(&data, config)?;
    let (mode, changepoints, threshold, traces) = if single {
        let res = detector.detect_single()?;
        (Mode::Single, res.changepoint.into_iter().collect(), res.threshold, vec![res.trace])
    } else {
        let seg = detector.binseg()?;
        (Mode::Multiple, seg.changepoints, seg.threshold, seg.traces)
    };
    Ok(SegmentationOut {
        schema: SCHEMA,
        input: input.to_path_buf(),
        mode,
        n: data.n(),
        p: data.p(),
        changepoints,
        threshold,
        config: *detector.config(),
        traces: with_trace.then(|| traces.iter().map(TraceOut::from).collect()),
    })
}

/// Where `detect` writes the result for `input`.
pub fn detect_destination(args: &DetectArgs, input: &Path) -> Option<PathBuf> {
    if let Some(dir) = &args.output_dir {
        let stem = input.file_stem().unwrap_or_default().to_string_lossy();
        return Some(dir.join(format!("{stem}.seg.json")));
    }
    args.output.clone()
}

/// Runs `detect`; returns the JSON printed to stdout, if any.
pub fn cmd_detect(args: &DetectArgs, argv: &[String]) -> Result<Option<String>, CliError> {
    if args.output.is_some() && args.inputs.len() > 1 {
        return Err(CliError::Usage("--output takes a single input; use --output-dir for several".into()));
    }
    let config = detector_config(args);
    let results: Vec<(Result<SegmentationOut, CliError>, f64)> = args
        .inputs
        .par_iter()
        .map(|input| {
            let start = Instant::now();
            let out = detect_one(input, &config, args.single, !args.no_trace);
            (out, start.elapsed().as_secs_f64() * 1e3)
        })
        .collect();
    let mut stdout = Vec::new();
    for (input, (out, ms)) in args.inputs.iter().zip(results) {
        let json = io::to_json(&out?);
        match detect_destination(args, input) {
            Some(path) => {
                io::write_text(&path, &json)?;
                let m = manifest(argv, serde_json::to_value(args).expect("args"), "deterministic: no randomness", ms, vec![path.clone()]);
                write_manifest(&manifest_path(&path), &m)?;
            }
            None => stdout.push(json),
        }
    }
    Ok((!stdout.is_empty()).then(|| stdout.concat()))
}

pub fn scenario_from_args(args: &SimulateArgs) -> Result<ScenarioSpec, CliError> {
    let mut spec = if let Some(path) = &args.scenario {
        io::read_json::<ScenarioSpec>(path)?
    } else {
        let kind = args.kind.ok_or_else(|| CliError::Usage("either --scenario or --kind is required".into()))?;
        let (n, p) = match (args.n, args.p) {
            (Some(n), Some(p)) => (n, p),
            _ => return Err(CliError::Usage("--n and --p are required with --kind".into())),
        };
        let mut spec = ScenarioSpec::new(kind.into(), n, p, 0);
        if let Some(v) = args.delta {
            spec.delta = v;
        }
        if let Some(v) = args.phi {
            spec.phi = v;
        }
        if let Some(v) = args.dist {
            spec.dist = v.into();
        }
        if let Some(v) = args.num_changes {
            spec.num_changes = v;
        }
        if let Some(v) = args.kappa1 {
            spec.kappa1 = v;
        }
        if let Some(v) = args.kappa2 {
            spec.kappa2 = v;
        }
        spec.unit_variance = args.unit_variance;
        spec
    };
    spec.rep = 0;
    spec.validate()?;
    Ok(spec)
}

/// Base names `<name>_rep<k>` of the files `simulate` writes.
pub fn replicate_stem(name: &str, rep: u64) -> String {
    format!("{name}_rep{rep:04}")
}

pub fn cmd_simulate(args: &SimulateArgs, argv: &[String]) -> Result<Vec<PathBuf>, CliError> {
    let start = Instant::now();
    let base = scenario_from_args(args)?;
    let name = args.name.clone().unwrap_or_else(|| base.kind.name().to_string());
    let reps: Vec<u64> = (args.first_rep..args.first_rep + args.reps).collect();
    let generated: Vec<Result<(String, String, String), CliError>> = reps
        .par_iter()
        .map(|&rep| {
            let spec = base.with_rep(rep);
            let (data, truth) = generate(&spec)?;
            let truth = TruthOut {
                schema: SCHEMA,
                seed: seed_for(&spec),
                scenario: spec,
                truth,
            };
            Ok((replicate_stem(&name, rep), io::format_matrix(&data), io::to_json(&truth)))
        })
        .collect();
    let mut outputs = Vec::new();
    for item in generated {
        let (stem, csv, truth) = item?;
        let data_path = args.output_dir.join(format!("{stem}.csv"));
        let truth_path = args.output_dir.join(format!("{stem}.truth.json"));
        io::write_text(&data_path, &csv)?;
        io::write_text(&truth_path, &truth)?;
        outputs.push(data_path);
        outputs.push(truth_path);
    }
    let policy = format!(
        "ChaCha20 keyed by hash(n, p, rep) for noise (seed of rep 0: {}) and hash(p, rep) for covariance sequences (rep 0: {})",
        seed_for(&base),
        covariance_seed(&base)
    );
    let config = serde_json::json!({ "scenario": base, "reps": args.reps, "first_rep": args.first_rep, "name": name });
    let m = manifest(argv, config, &policy, start.elapsed().as_secs_f64() * 1e3, outputs.clone());
    write_manifest(&args.output_dir.join(format!("{name}.manifest.json")), &m)?;
    Ok(outputs)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalRow {
    pub n: usize,
    pub p: usize,
    pub scenario: String,
    pub rep: u64,
    pub report: EvalReport,
    pub runtime_ms: Option<f64>,
}

fn resolve_data(seg: &SegmentationOut, seg_path: &Path) -> PathBuf {
    if seg.input.is_absolute() || seg.input.exists() {
        return seg.input.clone();
    }
    match seg_path.parent() {
        Some(dir) => {
            let beside = dir.join(seg.input.file_name().unwrap_or_default());
            if beside.exists() {
                beside
            } else {
                seg.input.clone()
            }
        }
        None => seg.input.clone(),
    }
}

pub fn evaluate_rows(args: &EvaluateArgs) -> Result<Vec<EvalRow>, CliError> {
    if args.segmentation.len() != args.truth.len() {
        return Err(CliError::Usage(format!(
            "pairing error: {} segmentation files but {} truth files",
            args.segmentation.len(),
            args.truth.len()
        )));
    }
    if !args.data.is_empty() && args.data.len() != args.segmentation.len() {
        return Err(CliError::Usage(format!(
            "pairing error: {} data files for {} segmentations",
            args.data.len(),
            args.segmentation.len()
        )));
    }
    let mut rows = Vec::with_capacity(args.truth.len());
    for (k, (seg_path, truth_path)) in args.segmentation.iter().zip(&args.truth).enumerate() {
        let seg: SegmentationOut = io::read_json(seg_path)?;
        let truth: TruthOut = io::read_json(truth_path)?;
        if seg.n != truth.scenario.n || seg.p != truth.scenario.p {
            return Err(CliError::Usage(format!(
                "pairing error: {} is {}x{} but {} describes {}x{}",
                seg_path.display(),
                seg.n,
                seg.p,
                truth_path.display(),
                truth.scenario.n,
                truth.scenario.p
            )));
        }
        let data_path = args.data.get(k).cloned().unwrap_or_else(|| resolve_data(&seg, seg_path));
        let data = io::read_matrix(&data_path)?;
        let report = evaluate(&seg.changepoints, &data, &truth.truth, args.tolerance)?;
        let runtime_ms = io::read_json::<Manifest>(&manifest_path(seg_path)).ok().map(|m| m.runtime_ms);
        rows.push(EvalRow {
            n: seg.n,
            p: seg.p,
            scenario: truth.scenario.kind.name().into(),
            rep: truth.scenario.rep,
            report,
            runtime_ms,
        });
    }
    Ok(rows)
}

fn number(x: f64) -> String {
    format!("{x:?}")
}

/// Columns `n,p,scenario,rep,tdr,fdr,mae,runtime_ms`, then a row of means.
pub fn format_eval_csv(rows: &[EvalRow]) -> String {
    let mut out = String::from("n,p,scenario,rep,tdr,fdr,mae,runtime_ms\n");
    let runtime = |r: &EvalRow| r.runtime_ms.map(number).unwrap_or_default();
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.n,
            r.p,
            r.scenario,
            r.rep,
            number(r.report.tdr),
            number(r.report.fdr),
            number(r.report.mae),
            runtime(r)
        ));
    }
    if !rows.is_empty() {
        let k = rows.len() as f64;
        let mean = |f: &dyn Fn(&EvalRow) -> f64| number(rows.iter().map(f).sum::<f64>() / k);
        let same = |f: &dyn Fn(&EvalRow) -> usize| {
            let first = f(&rows[0]);
            if rows.iter().all(|r| f(r) == first) {
                first.to_string()
            } else {
                String::new()
            }
        };
        let times: Vec<f64> = rows.iter().filter_map(|r| r.runtime_ms).collect();
        let mean_time = if times.len() == rows.len() {
            number(times.iter().sum::<f64>() / k)
        } else {
            String::new()
        };
        out.push_str(&format!(
            "{},{},mean,,{},{},{},{}\n",
            same(&|r| r.n),
            same(&|r| r.p),
            mean(&|r| r.report.tdr),
            mean(&|r| r.report.fdr),
            mean(&|r| r.report.mae),
            mean_time
        ));
    }
    out
}

pub fn cmd_evaluate(args: &EvaluateArgs, argv: &[String]) -> Result<Option<String>, CliError> {
    let start = Instant::now();
    let csv = format_eval_csv(&evaluate_rows(args)?);
    match &args.output {
        Some(path) => {
            io::write_text(path, &csv)?;
            let m = manifest(
                argv,
                serde_json::to_value(args).expect("args"),
                "deterministic: no randomness",
                start.elapsed().as_secs_f64() * 1e3,
                vec![path.clone()],
            );
            write_manifest(&manifest_path(path), &m)?;
            Ok(None)
        }
        None => Ok(Some(csv)),
    }
}

pub fn cmd_rmt(args: &RmtArgs) -> Result<String, CliError> {
    let ratio = AspectRatio::new(args.gamma1, args.gamma2)?;
    let center = centering_integral(&ratio, args.p)?;
    let (mu, sigma2) = theorem_moments(&ratio, args.moments.into());
    let f = |x: f64| io::significant(x, 12);
    Ok(format!(
        "{{\n  \"schema\": {SCHEMA},\n  \"gamma1\": {},\n  \"gamma2\": {},\n  \"p\": {},\n  \"moments\": \"{}\",\n  \"h\": {},\n  \"a\": {},\n  \"b\": {},\n  \"center\": {},\n  \"mu\": {},\n  \"sigma2\": {}\n}}\n",
        f(args.gamma1),
        f(args.gamma2),
        args.p,
        match args.moments {
            Moments::Corrected => "corrected",
            Moments::AsPrinted => "as_printed",
        },
        f(ratio.h()),
        f(ratio.a()),
        f(ratio.b()),
        f(center),
        f(mu),
        f(sigma2)
    ))
}

/// Parses `argv`, runs the command and returns the process exit code.
pub fn run(argv: Vec<String>) -> i32 {
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    if let Some(threads) = cli.threads {
        if threads == 0 {
            eprintln!("error: --threads must be positive");
            return 1;
        }
        // a pool may already exist when embedded; the cap is best effort then
        let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    }
    let result = match &cli.command {
        Command::Detect(a) => cmd_detect(a, &argv),
        Command::Simulate(a) => cmd_simulate(a, &argv).map(|_| None),
        Command::Evaluate(a) => cmd_evaluate(a, &argv),
        Command::Rmt(a) => cmd_rmt(a).map(Some),
    };
    match result {
        Ok(Some(text)) => {
            print!("{text}");
            0
        }
        Ok(None) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
