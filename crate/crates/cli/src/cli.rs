//! Argument parsing and subcommand dispatch for the `perfdrift` binary.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use chrono::{DateTime, SubsecRound, Utc};
use clap::{Args, Parser, Subcommand, ValueEnum};
use perfdrift_core::ingest::{parse_gha_json, parse_moobench_csv, Aggregator, CsvOptions};
use perfdrift_core::report::{emit_svg, make_plot_spec, render_markdown, ChangeReport};
use perfdrift_core::simulate::{simulate, SimSpec};
use perfdrift_core::stats::{
    paired_t_test, shapiro_wilk, welch_t_test, SampleVector, StatTestResult, SIGNIFICANCE_LEVEL,
};
use perfdrift_core::store::{
    parse_timestamp, store_append, LoadedSeries, StoreLayout, StoreRecord,
};
use perfdrift_core::{CommitId, DetectionConfig, MeasurementPoint, SeriesKey, Trigger};

use crate::{data_as_of, detect_stored, plan_points, service, ChangesResponse, Submission};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_CHANGES: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "perfdrift",
    version,
    about = "Change-point detection for continuous benchmarking results"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Append a single measurement to a series
    Add(AddArgs),
    /// Import a benchmark result file, one point per benchmark name
    Ingest(IngestArgs),
    /// Run change-point detection on a stored series
    Detect(DetectCmd),
    /// Normality and difference tests on two samples
    Validate(ValidateArgs),
    /// Write a markdown report and optional SVG plot for a series
    Report(ReportArgs),
    /// Generate a synthetic series with injected level shifts
    Simulate(SimulateArgs),
    /// Run the HTTP ingest and query service
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
struct StoreArg {
    /// Store root directory
    #[arg(long, env = "PERFDRIFT_STORE")]
    store: PathBuf,
}

#[derive(Debug, Args)]
struct AddArgs {
    #[command(flatten)]
    store: StoreArg,
    #[arg(long)]
    series: String,
    #[arg(long)]
    commit: String,
    /// RFC 3339 timestamp, or `now`
    #[arg(long)]
    timestamp: String,
    #[arg(long, allow_negative_numbers = true)]
    value: f64,
    #[arg(long)]
    unit: String,
    #[arg(long, value_parser = parse_trigger, default_value = "push")]
    trigger: Trigger,
    /// Environment tag, repeatable
    #[arg(long, value_name = "K=V")]
    env: Vec<String>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Format {
    GhaJson,
    MoobenchCsv,
}

#[derive(Debug, Args)]
struct IngestArgs {
    #[command(flatten)]
    store: StoreArg,
    #[arg(long, value_enum)]
    format: Format,
    #[arg(long)]
    series_prefix: String,
    #[arg(long)]
    commit: String,
    /// RFC 3339 timestamp, or `now`
    #[arg(long)]
    timestamp: String,
    #[arg(long, value_parser = parse_aggregator, default_value = "mean")]
    aggregate: Aggregator,
    #[arg(long, value_parser = parse_trigger, default_value = "push")]
    trigger: Trigger,
    /// Environment tag, repeatable; tags become part of the series key
    #[arg(long, value_name = "K=V")]
    env: Vec<String>,
    /// CSV value column (moobench-csv only)
    #[arg(long)]
    column: Option<String>,
    /// Benchmark name for CSV rows; defaults to the file stem
    #[arg(long)]
    benchmark: Option<String>,
    file: PathBuf,
}

#[derive(Debug, Clone, Args)]
struct DetectArgs {
    #[arg(long, default_value_t = 0.001)]
    pvalue: f64,
    #[arg(long, default_value_t = 0.05)]
    magnitude: f64,
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    #[arg(long, default_value_t = 999)]
    permutations: usize,
    #[arg(long, default_value_t = 5)]
    min_segment: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl DetectArgs {
    fn config(&self) -> DetectionConfig {
        DetectionConfig {
            alpha: self.alpha,
            p_threshold: self.pvalue,
            magnitude_threshold: self.magnitude,
            permutations: self.permutations,
            min_segment: self.min_segment,
            seed: self.seed,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Output {
    Json,
    Markdown,
}

#[derive(Debug, Args)]
struct DetectCmd {
    #[command(flatten)]
    store: StoreArg,
    #[arg(long)]
    series: String,
    #[command(flatten)]
    detection: DetectArgs,
    #[arg(long, value_enum, default_value = "json")]
    output: Output,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum TestChoice {
    Paired,
    Welch,
}

#[derive(Debug, Args)]
struct ValidateArgs {
    /// First sample: one number per line
    #[arg(long = "a")]
    a: PathBuf,
    /// Second sample: one number per line
    #[arg(long = "b")]
    b: PathBuf,
    #[arg(long, value_enum, default_value = "paired")]
    test: TestChoice,
}

#[derive(Debug, Args)]
struct ReportArgs {
    #[command(flatten)]
    store: StoreArg,
    #[arg(long)]
    series: String,
    #[arg(long, value_name = "OUT.md")]
    markdown: PathBuf,
    #[arg(long, value_name = "OUT.svg")]
    svg: Option<PathBuf>,
    /// Display-only cap for plotted values
    #[arg(long)]
    clip: Option<f64>,
    #[command(flatten)]
    detection: DetectArgs,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[arg(long)]
    points: usize,
    #[arg(long)]
    base: f64,
    /// Level shift from index IDX on, relative to the base mean; repeatable
    #[arg(long, value_name = "IDX:REL", value_parser = parse_shift, allow_negative_numbers = true)]
    shift: Vec<(usize, f64)>,
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0.0)]
    outlier_prob: f64,
    #[arg(long, default_value_t = 1.0)]
    outlier_scale: f64,
    /// Write store records to this file instead of a store
    #[arg(long, conflicts_with = "series")]
    out: Option<PathBuf>,
    #[arg(long, env = "PERFDRIFT_STORE")]
    store: Option<PathBuf>,
    #[arg(long)]
    series: Option<String>,
}

#[derive(Debug, Args)]
struct ServeArgs {
    #[command(flatten)]
    store: StoreArg,
    #[arg(long, default_value = "127.0.0.1:8080")]
    listen: String,
    /// Largest accepted request body in bytes
    #[arg(long, default_value_t = service::DEFAULT_MAX_BODY)]
    max_body: usize,
}

fn parse_trigger(s: &str) -> Result<Trigger, String> {
    s.parse().map_err(|e| format!("{e}"))
}

fn parse_aggregator(s: &str) -> Result<Aggregator, String> {
    s.parse()
}

fn parse_shift(s: &str) -> Result<(usize, f64), String> {
    let (idx, rel) = s
        .split_once(':')
        .ok_or_else(|| format!("expected IDX:REL, got {s:?}"))?;
    let idx = idx.parse().map_err(|_| format!("bad index in {s:?}"))?;
    let rel = rel
        .parse()
        .map_err(|_| format!("bad relative shift in {s:?}"))?;
    Ok((idx, rel))
}

/// A failed command: `Usage` for bad flag values, `Data` for inputs that
/// cannot be read, parsed or stored.
#[derive(Debug)]
enum Failure {
    Usage(String),
    Data(String),
}

impl Failure {
    fn code(&self) -> i32 {
        match self {
            Failure::Usage(_) => EXIT_USAGE,
            Failure::Data(_) => EXIT_DATA,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Data(m) => m,
        }
    }
}

type Outcome = Result<i32, Failure>;

fn usage(m: impl ToString) -> Failure {
    Failure::Usage(m.to_string())
}

fn data(m: impl ToString) -> Failure {
    Failure::Data(m.to_string())
}

/// Parses `args` (including the program name) and runs the subcommand.
/// Returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let outcome = match cli.command {
        Command::Add(a) => cmd_add(a),
        Command::Ingest(a) => cmd_ingest(a),
        Command::Detect(a) => cmd_detect(a),
        Command::Validate(a) => cmd_validate(a),
        Command::Report(a) => cmd_report(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Serve(a) => cmd_serve(a),
    };
    match outcome {
        Ok(code) => code,
        Err(f) => {
            eprintln!("error: {}", f.message());
            f.code()
        }
    }
}

fn series_key(s: &str) -> Result<SeriesKey, Failure> {
    SeriesKey::parse(s).map_err(usage)
}

fn commit(s: &str) -> Result<CommitId, Failure> {
    CommitId::new(s).map_err(usage)
}

fn timestamp(s: &str) -> Result<DateTime<Utc>, Failure> {
    if s == "now" {
        return Ok(Utc::now().trunc_subsecs(0));
    }
    parse_timestamp(s).map_err(usage)
}

fn env_tags(tags: &[String]) -> Result<BTreeMap<String, String>, Failure> {
    let mut env = BTreeMap::new();
    for t in tags {
        let (k, v) = t
            .split_once('=')
            .ok_or_else(|| usage(format!("env tag {t:?} is not K=V")))?;
        if env.insert(k.to_string(), v.to_string()).is_some() {
            return Err(usage(format!("env tag {k:?} given twice")));
        }
    }
    Ok(env)
}

fn config(args: &DetectArgs) -> Result<DetectionConfig, Failure> {
    let config = args.config();
    config.validate().map_err(usage)?;
    Ok(config)
}

fn report_warnings(key: &SeriesKey, loaded: &LoadedSeries) {
    for w in &loaded.warnings {
        eprintln!("warning: {key}: {w}");
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), Failure> {
    fs::write(path, bytes).map_err(|e| data(format!("{}: {e}", path.display())))
}

fn cmd_add(a: AddArgs) -> Outcome {
    let key = series_key(&a.series)?;
    let point = MeasurementPoint::new(
        commit(&a.commit)?,
        timestamp(&a.timestamp)?,
        a.value,
        a.unit,
    )
    .map_err(usage)?
    .with_env(env_tags(&a.env)?)
    .with_trigger(a.trigger);
    store_append(&StoreLayout::new(a.store.store), &key, &point).map_err(data)?;
    Ok(EXIT_OK)
}

fn cmd_ingest(a: IngestArgs) -> Outcome {
    let commit = commit(&a.commit)?;
    let timestamp = timestamp(&a.timestamp)?;
    let env = env_tags(&a.env)?;
    let bytes = fs::read(&a.file).map_err(|e| data(format!("{}: {e}", a.file.display())))?;
    let parsed = match a.format {
        Format::GhaJson => parse_gha_json(&bytes),
        Format::MoobenchCsv => {
            let column = a
                .column
                .ok_or_else(|| usage("--column is required for moobench-csv"))?;
            let benchmark = a.benchmark.unwrap_or_else(|| {
                a.file
                    .file_stem()
                    .map_or_else(|| "benchmark".into(), |s| s.to_string_lossy().into_owned())
            });
            parse_moobench_csv(&bytes, &CsvOptions::new(column, benchmark))
        }
    }
    .map_err(|e| data(format!("{}: {e}", a.file.display())))?;
    let planned = plan_points(&Submission {
        prefix: &a.series_prefix,
        commit,
        timestamp,
        trigger: a.trigger,
        env,
        aggregator: a.aggregate,
        entries: &parsed.entries,
    })
    .map_err(data)?;
    let layout = StoreLayout::new(a.store.store);
    let mut out = std::io::stdout().lock();
    for (key, point) in &planned {
        store_append(&layout, key, point).map_err(data)?;
        let _ = writeln!(out, "{key}");
    }
    Ok(EXIT_OK)
}

fn change_code(changes: usize) -> i32 {
    if changes == 0 {
        EXIT_OK
    } else {
        EXIT_CHANGES
    }
}

fn cmd_detect(a: DetectCmd) -> Outcome {
    let key = series_key(&a.series)?;
    let config = config(&a.detection)?;
    let layout = StoreLayout::new(a.store.store);
    let (loaded, changes) = detect_stored(&layout, &key, &config).map_err(data)?;
    report_warnings(&key, &loaded);
    let code = change_code(changes.len());
    let text = match a.output {
        Output::Json => {
            let mut s = serde_json::to_string_pretty(&ChangesResponse { changes })
                .expect("change points serialize");
            s.push('\n');
            s
        }
        Output::Markdown => {
            let report =
                ChangeReport::new(key.as_str(), data_as_of(&loaded.series), config, changes);
            render_markdown(&report)
        }
    };
    print!("{text}");
    Ok(code)
}

fn read_sample(label: &str, path: &Path) -> Result<SampleVector, Failure> {
    let text = fs::read_to_string(path).map_err(|e| data(format!("{}: {e}", path.display())))?;
    let mut values = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let v: f64 = line.parse().map_err(|_| {
            data(format!(
                "{} line {}: not a number: {line:?}",
                path.display(),
                i + 1
            ))
        })?;
        values.push(v);
    }
    SampleVector::new(label, values).map_err(data)
}

fn describe_normality(sample: &SampleVector) -> String {
    match shapiro_wilk(sample) {
        Ok(r) => format!("Shapiro-Wilk W = {:.4}, p = {:.4}", r.statistic, r.p_value),
        Err(e) => format!("Shapiro-Wilk not computed ({e})"),
    }
}

fn verdict(r: &StatTestResult) -> &'static str {
    match r.significant {
        Some(true) => "significant",
        _ => "not significant",
    }
}

fn cmd_validate(a: ValidateArgs) -> Outcome {
    let x = read_sample("a", &a.a)?;
    let y = read_sample("b", &a.b)?;
    let result = match a.test {
        TestChoice::Paired => paired_t_test(&x, &y),
        TestChoice::Welch => welch_t_test(&x, &y),
    }
    .map_err(data)?;
    let mut out = std::io::stdout().lock();
    for (s, path) in [(&x, &a.a), (&y, &a.b)] {
        let _ = writeln!(
            out,
            "sample {} ({}, n = {}): {}",
            s.label(),
            path.display(),
            s.len(),
            describe_normality(s)
        );
    }
    let df = result
        .df
        .map_or_else(|| "n/a".to_string(), |d| format!("{d:.2}"));
    let _ = writeln!(
        out,
        "{}: t = {:.4}, df = {df}, p = {:.4} ({} at {SIGNIFICANCE_LEVEL})",
        result.test.display_name(),
        result.statistic,
        result.p_value,
        verdict(&result)
    );
    Ok(EXIT_OK)
}

fn cmd_report(a: ReportArgs) -> Outcome {
    let key = series_key(&a.series)?;
    let config = config(&a.detection)?;
    let layout = StoreLayout::new(a.store.store);
    let (loaded, changes) = detect_stored(&layout, &key, &config).map_err(data)?;
    report_warnings(&key, &loaded);
    if let Some(svg_path) = &a.svg {
        if loaded.series.is_empty() {
            return Err(data(format!("series {key} is empty; nothing to plot")));
        }
        let spec = make_plot_spec(&loaded.series, &changes, a.clip).map_err(usage)?;
        write_file(svg_path, &emit_svg(&spec).map_err(data)?)?;
    }
    let code = change_code(changes.len());
    let report = ChangeReport::new(key.as_str(), data_as_of(&loaded.series), config, changes);
    write_file(&a.markdown, render_markdown(&report).as_bytes())?;
    Ok(code)
}

fn cmd_simulate(a: SimulateArgs) -> Outcome {
    let mut spec = SimSpec::new(a.points, a.base)
        .noise(a.noise)
        .outliers(a.outlier_prob, a.outlier_scale)
        .seed(a.seed);
    for &(start, rel) in &a.shift {
        spec = spec.shift(start, rel);
    }
    let series = simulate(&spec).map_err(usage)?;
    if let Some(out) = &a.out {
        let mut text = String::new();
        for p in series.points() {
            text.push_str(&StoreRecord::from_point(p).to_line());
            text.push('\n');
        }
        return write_file(out, text.as_bytes()).map(|()| EXIT_OK);
    }
    let (Some(store), Some(series_arg)) = (a.store, a.series) else {
        return Err(usage(
            "simulate needs --out FILE or --store DIR --series KEY",
        ));
    };
    let key = series_key(&series_arg)?;
    let layout = StoreLayout::new(store);
    for p in series.points() {
        store_append(&layout, &key, p).map_err(data)?;
    }
    Ok(EXIT_OK)
}

fn cmd_serve(a: ServeArgs) -> Outcome {
    let runtime = tokio::runtime::Runtime::new().map_err(data)?;
    runtime
        .block_on(async {
            let listener = tokio::net::TcpListener::bind(&a.listen)
                .await
                .map_err(|e| usage(format!("cannot listen on {}: {e}", a.listen)))?;
            eprintln!("listening on {}", listener.local_addr().map_err(data)?);
            service::serve(listener, StoreLayout::new(a.store.store), a.max_body)
                .await
                .map_err(data)
        })
        .map(|()| EXIT_OK)
}
