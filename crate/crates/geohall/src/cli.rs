use std::ffi::OsString;
use std::fs;
use std::path::PathBuf;

use clap::{Parser, Subcommand};
use geohall_core::corpus::{Block, HallType};
use geohall_core::eval::{render_text, EvalReport, GroupBy};
use geohall_core::geostats::Statistic;
use geohall_core::trace::PayloadKind;
use log::{error, info, LevelFilter};

use crate::config::{parse_domain_scale, parse_effect, ReportFormat, RunConfig};
use crate::ght::Dtype;
use crate::pipeline::{self, EvalOptions, SpanMode};
use crate::statsfile::{read_stats, write_stats};
use crate::store::{read_dataset, read_manifest, write_dataset};
use crate::{Error, Result};

pub const THREADS_ENV: &str = "GEOHALL_THREADS";

#[derive(Debug, Parser)]
#[command(name = "geohall", version, about = "Geometric hallucination-detection statistics")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// JSON run configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Dataset blocks: math, history, counting, all.
    #[arg(long, global = true, value_delimiter = ',')]
    domains: Option<Vec<Block>>,
    /// Hallucination types to render.
    #[arg(long, global = true, value_delimiter = ',')]
    types: Option<Vec<HallType>>,
    /// Severity levels to render (1-3).
    #[arg(long, global = true, value_delimiter = ',')]
    levels: Option<Vec<u8>>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Skip perturbation siblings.
    #[arg(long, global = true)]
    no_perturbations: bool,
    #[arg(long, global = true, value_delimiter = ',', allow_hyphen_values = true)]
    perturbation_offsets: Option<Vec<i64>>,
    /// Replacement for the bundled history question table.
    #[arg(long, global = true)]
    history_table: Option<PathBuf>,

    /// Directory for all outputs.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Dataset manifest (default: OUT_DIR/dataset.jsonl).
    #[arg(long, global = true)]
    dataset: Option<PathBuf>,
    /// Trace directory (default: OUT_DIR/traces).
    #[arg(long, global = true)]
    traces: Option<PathBuf>,
    /// Raw statistics CSV (default: OUT_DIR/stats.csv).
    #[arg(long, global = true)]
    stats: Option<PathBuf>,

    /// Trace payload written by mock-extract.
    #[arg(long, global = true)]
    payload: Option<PayloadKind>,
    #[arg(long, global = true)]
    dtype: Option<Dtype>,
    /// Mock model layer count.
    #[arg(long, global = true)]
    layers: Option<usize>,
    /// Mock model hidden size.
    #[arg(long, global = true)]
    hidden_dim: Option<usize>,
    /// Mock model attention heads.
    #[arg(long, global = true)]
    heads: Option<usize>,
    /// Mock effect TYPE:LEVEL:LAYER:SCALE[:SHIFT]; repeatable.
    #[arg(long = "effect", global = true, allow_hyphen_values = true)]
    effects: Vec<String>,
    /// Mock per-domain hidden scale DOMAIN:SCALE; repeatable.
    #[arg(long = "domain-scale", global = true)]
    domain_scales: Vec<String>,
    #[arg(long, global = true)]
    sibling_gain: Option<f64>,

    /// Raw statistics to compute or evaluate.
    #[arg(long, global = true, value_delimiter = ',')]
    statistics: Option<Vec<Statistic>>,
    /// Evaluate the perturbation-normalized statistics.
    #[arg(long, global = true)]
    normalized: bool,
    /// Tokens statistics are computed over: full or answer.
    #[arg(long, global = true)]
    span: Option<SpanMode>,
    /// Distribution grouping: block or source-domain.
    #[arg(long, global = true)]
    group_by: Option<GroupBy>,
    /// Subtract the baseline group's per-layer mean in distributions.
    #[arg(long, global = true)]
    baseline_relative: bool,

    /// Report rendering: text, json or csv.
    #[arg(long, global = true)]
    format: Option<ReportFormat>,
    /// Report JSON to render (default: OUT_DIR/report.json).
    #[arg(long, global = true)]
    report: Option<PathBuf>,
    /// Rendered report path.
    #[arg(long, global = true)]
    output: Option<PathBuf>,

    /// error, warn, info, debug or trace.
    #[arg(long, global = true)]
    log_level: Option<String>,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Command {
    /// Build the prompt/response dataset manifest.
    Gen,
    /// Synthesize traces for every dataset record with the mock model.
    MockExtract,
    /// Compute per-layer statistics from a trace directory.
    Stats,
    /// Perturbation-normalize statistics against answer-perturbed siblings.
    Normalize,
    /// Detection table and per-layer distributions.
    Eval,
    /// Render a report JSON as text, JSON or CSV.
    Report,
}

impl Cli {
    fn resolve(&self) -> Result<RunConfig> {
        let mut c = match &self.config {
            Some(path) => RunConfig::from_file(path)?,
            None => RunConfig::default(),
        };
        macro_rules! set {
            ($($flag:ident => $field:expr),* $(,)?) => {
                $(if let Some(v) = &self.$flag { $field = v.clone(); })*
            };
        }
        set! {
            domains => c.domains,
            types => c.types,
            levels => c.levels,
            seed => c.seed,
            perturbation_offsets => c.perturbation_offsets,
            out_dir => c.out_dir,
            payload => c.payload,
            dtype => c.dtype,
            layers => c.mock.num_layers,
            hidden_dim => c.mock.hidden_dim,
            heads => c.mock.num_heads,
            sibling_gain => c.mock.sibling_gain,
            statistics => c.statistics,
            span => c.span,
            group_by => c.group_by,
            format => c.format,
            log_level => c.log_level,
        }
        if self.history_table.is_some() {
            c.history_table = self.history_table.clone();
        }
        if self.dataset.is_some() {
            c.dataset = self.dataset.clone();
        }
        if self.traces.is_some() {
            c.trace_dir = self.traces.clone();
        }
        if self.stats.is_some() {
            c.stats = self.stats.clone();
        }
        if self.report.is_some() {
            c.report = self.report.clone();
        }
        if self.output.is_some() {
            c.output = self.output.clone();
        }
        if self.no_perturbations {
            c.perturbations = false;
        }
        if self.normalized {
            c.normalized = true;
        }
        if self.baseline_relative {
            c.baseline_relative = true;
        }
        if !self.effects.is_empty() {
            c.mock.effects = self.effects.iter().map(|s| parse_effect(s)).collect::<Result<_>>()?;
        }
        if !self.domain_scales.is_empty() {
            c.mock.domain_scales = self
                .domain_scales
                .iter()
                .map(|s| parse_domain_scale(s))
                .collect::<Result<_>>()?;
        }
        Ok(c)
    }
}

fn init_logging(level: &str) -> Result<()> {
    let filter: LevelFilter = level
        .parse()
        .map_err(|_| Error::Usage(format!("unknown log level {level:?}")))?;
    let _ = env_logger::Builder::new()
        .filter_level(filter)
        .target(env_logger::Target::Stderr)
        .format_timestamp(None)
        .try_init();
    Ok(())
}

fn thread_pool() -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| Error::Usage(format!("{THREADS_ENV}={v:?} is not a positive integer")))?;
        builder = builder.num_threads(n);
    }
    builder.build().map_err(|e| Error::Usage(e.to_string()))
}

fn execute(command: Command, c: &RunConfig) -> Result<()> {
    match command {
        Command::Gen => {
            let ds = pipeline::generate(&c.dataset_spec(), c.history_table.as_deref())?;
            let path = c.dataset_path();
            if let Some(parent) = path.parent() {
                fs::create_dir_all(parent).map_err(Error::io(parent))?;
            }
            write_dataset(&path, &ds.manifest().collect::<Vec<_>>())?;
            info!("dataset manifest: {}", path.display());
        }
        Command::MockExtract => {
            let records = read_dataset(&c.dataset_path())?;
            pipeline::mock_extract_all(&records, &c.mock_config(), c.payload, c.dtype, &c.trace_path())?;
        }
        Command::Stats => {
            let profiles = pipeline::compute_stats(&c.trace_path(), &c.statistics, c.span)?;
            fs::create_dir_all(&c.out_dir).map_err(Error::io(&c.out_dir))?;
            write_stats(&c.stats_path(), &profiles)?;
            info!("statistics: {}", c.stats_path().display());
        }
        Command::Normalize => {
            let entries = read_manifest(&c.trace_path())?;
            let profiles = read_stats(&c.stats_path())?;
            let normalized = pipeline::normalize_stats(&profiles, &entries)?;
            fs::create_dir_all(&c.out_dir).map_err(Error::io(&c.out_dir))?;
            write_stats(&c.norm_stats_path(), &normalized)?;
            info!("normalized statistics: {}", c.norm_stats_path().display());
        }
        Command::Eval => {
            let entries = read_manifest(&c.trace_path())?;
            let stats_path = if c.normalized { c.norm_stats_path() } else { c.stats_path() };
            let profiles = pipeline::label_profiles(read_stats(&stats_path)?, &entries)?;
            let opts = EvalOptions {
                normalized: c.normalized,
                group_by: c.group_by,
                baseline_relative: c.baseline_relative,
            };
            let outputs = pipeline::evaluate(&profiles, &c.statistics, opts)?;
            pipeline::write_eval_outputs(&c.out_dir, c.report_stem(), c.distributions_name(), &outputs)?;
            info!(
                "{} cells, {} missing; reports in {}",
                outputs.report.cells.len(),
                outputs.report.missing.len(),
                c.out_dir.display()
            );
        }
        Command::Report => {
            let path = c.report_path();
            let text = fs::read_to_string(&path).map_err(Error::io(&path))?;
            let report: EvalReport = serde_json::from_str(&text).map_err(|e| Error::Parse {
                path: path.clone(),
                line: e.line(),
                reason: e.to_string(),
            })?;
            let rendered = match c.format {
                ReportFormat::Text => render_text(&report),
                ReportFormat::Json => pipeline::report_json(&report),
                ReportFormat::Csv => pipeline::report_csv(&report)?,
            };
            let out = c
                .output
                .clone()
                .unwrap_or_else(|| path.with_extension(format!("rendered.{}", c.format.extension())));
            fs::write(&out, rendered).map_err(Error::io(&out))?;
            info!("report: {}", out.display());
        }
    }
    Ok(())
}

/// Runs the command line and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let result = cli.resolve().and_then(|config| {
        init_logging(&config.log_level)?;
        let pool = thread_pool()?;
        pool.install(|| execute(cli.command, &config))
    });
    match result {
        Ok(()) => 0,
        Err(e) => {
            error!("{e}");
            if !log::log_enabled!(log::Level::Error) {
                eprintln!("error: {e}");
            }
            e.exit_code()
        }
    }
}
