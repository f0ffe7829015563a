//! The `srlflow` command line.
//!
//! Exit codes: 0 on success, 1 on a domain error (reported as a single
//! `error: <code>: <message>` line on stderr), 2 on a usage error.

pub mod config;
pub mod pipeline;

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use srlflow::mining::{DetailSettings, Level};
use srlflow::stats::{LearnerMap, StatsOptions};
use srlflow::Error;

use config::{ConfigFile, PipelineConfig};
use pipeline::{Basis, IngestInput};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, ValueEnum)]
pub enum Format {
    #[default]
    Csv,
    Json,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum LevelArg {
    Micro,
    Macro,
}

impl From<LevelArg> for Level {
    fn from(l: LevelArg) -> Self {
        match l {
            LevelArg::Micro => Level::Micro,
            LevelArg::Macro => Level::Macro,
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "srlflow", about = "Annotated chatbot-log analytics", disable_version_flag = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Raw JSON export -> canonical event CSV
    Ingest(IngestArgs),
    /// Dictionary suggestions and label validation
    #[command(subcommand)]
    Annotate(AnnotateCommand),
    /// Cohen's kappa with a bootstrap confidence interval
    Agree(AgreeArgs),
    /// Action and phase frequency table
    Freq(FreqArgs),
    /// Transition matrix and process model
    Mine(MineArgs),
    /// Whole pipeline from a config file
    RunAll(Box<RunAllArgs>),
    /// Print the version
    Version,
}

#[derive(Args, Debug)]
struct IngestArgs {
    #[arg(long)]
    input: PathBuf,
    /// Field mapping (TOML or JSON)
    #[arg(long)]
    profile: Option<PathBuf>,
    /// Segment boundaries CSV (case_id,turn_index,offsets)
    #[arg(long)]
    segments: Option<PathBuf>,
    /// Labels CSV (case_id,seq,action_code)
    #[arg(long)]
    labels: Option<PathBuf>,
    #[arg(long)]
    schema: Option<PathBuf>,
    #[arg(long, default_value_t = config::DEFAULT_MIN_MEANINGFUL)]
    min_meaningful: usize,
    #[arg(long, value_enum, default_value_t = Basis::Events)]
    count_basis: Basis,
    /// Event CSV destination (stdout if absent)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Preprocessing counts as JSON
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum AnnotateCommand {
    /// Rank candidate codes for every event
    Suggest(AnnotateArgs),
    /// Report missing, unknown and multiple labels
    Validate(AnnotateArgs),
}

#[derive(Args, Debug)]
struct AnnotateArgs {
    #[arg(long)]
    log: PathBuf,
    #[arg(long)]
    schema: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t)]
    format: Format,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct AgreeArgs {
    #[arg(long)]
    a: PathBuf,
    #[arg(long)]
    b: PathBuf,
    #[arg(long, default_value_t = config::DEFAULT_REPLICATES)]
    replicates: usize,
    #[arg(long, default_value_t = config::DEFAULT_LEVEL)]
    level: f64,
    #[arg(long, default_value_t = config::DEFAULT_SEED)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct FreqArgs {
    #[arg(long)]
    log: PathBuf,
    #[arg(long)]
    schema: Option<PathBuf>,
    /// SD convention: sample | population
    #[arg(long, default_value = config::DEFAULT_SD)]
    sd: String,
    /// case_id,learner_id mapping (identity if absent)
    #[arg(long)]
    learners: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t)]
    format: Format,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct MineArgs {
    #[arg(long)]
    log: PathBuf,
    #[arg(long, value_enum, default_value_t = LevelArg::Micro)]
    level: LevelArg,
    #[arg(long)]
    schema: Option<PathBuf>,
    #[arg(long, default_value_t = 1.0)]
    activity_detail: f64,
    #[arg(long, default_value_t = 1.0)]
    path_detail: f64,
    /// DOT destination
    #[arg(long)]
    dot: Option<PathBuf>,
    /// Matrix destination
    #[arg(long)]
    matrix: Option<PathBuf>,
    /// Matrix format
    #[arg(long, value_enum, default_value_t)]
    format: Format,
    /// Discovered model as JSON
    #[arg(long)]
    model: Option<PathBuf>,
}

#[derive(Args, Debug, Default)]
pub struct RunAllArgs {
    /// TOML pipeline config
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub profile: Option<PathBuf>,
    #[arg(long)]
    pub segments: Option<PathBuf>,
    #[arg(long)]
    pub labels: Option<PathBuf>,
    #[arg(long)]
    pub schema: Option<PathBuf>,
    #[arg(long)]
    pub annotator_a: Option<PathBuf>,
    #[arg(long)]
    pub annotator_b: Option<PathBuf>,
    #[arg(long)]
    pub learners: Option<PathBuf>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    #[arg(long)]
    pub min_meaningful: Option<usize>,
    #[arg(long, value_enum)]
    pub count_basis: Option<Basis>,
    #[arg(long)]
    pub sd: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub replicates: Option<usize>,
    #[arg(long)]
    pub level: Option<f64>,
    #[arg(long)]
    pub micro_activity_detail: Option<f64>,
    #[arg(long)]
    pub micro_path_detail: Option<f64>,
    #[arg(long)]
    pub macro_activity_detail: Option<f64>,
    #[arg(long)]
    pub macro_path_detail: Option<f64>,
}

/// A failure reported on the single error line.
#[derive(Debug)]
pub struct CliError {
    pub code: String,
    pub message: String,
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError {
            code: e.code().to_string(),
            message: e.to_string(),
        }
    }
}

type CliResult<T = ()> = std::result::Result<T, CliError>;

fn write_to(path: &Path, bytes: &[u8]) -> CliResult {
    std::fs::write(path, bytes).map_err(|e| {
        Error::Io {
            path: path.to_path_buf(),
            source: e,
        }
        .into()
    })
}

fn emit(dest: Option<&Path>, bytes: &[u8], stdout: &mut dyn Write) -> CliResult {
    match dest {
        Some(p) => write_to(p, bytes),
        None => stdout.write_all(bytes).map_err(|e| {
            Error::Io {
                path: PathBuf::from("<stdout>"),
                source: e,
            }
            .into()
        }),
    }
}

fn stats_options(sd: &str, learners: Option<&Path>) -> CliResult<StatsOptions> {
    let mut opts = StatsOptions::with_dispersion(sd)?;
    if let Some(p) = learners {
        opts.learners = LearnerMap::load(p)?;
    }
    Ok(opts)
}

/// Runs the CLI with `args` (including the program name).
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let text = e.render().to_string();
            let _ = if e.use_stderr() {
                stderr.write_all(text.as_bytes())
            } else {
                stdout.write_all(text.as_bytes())
            };
            return e.exit_code();
        }
    };
    match dispatch(cli.command, stdout) {
        Ok(()) => 0,
        Err(e) => {
            let message = e.message.replace(['\n', '\r'], " ");
            let _ = writeln!(stderr, "error: {}: {}", e.code, message);
            1
        }
    }
}

fn dispatch(command: Command, stdout: &mut dyn Write) -> CliResult {
    match command {
        Command::Version => {
            let _ = writeln!(stdout, "srlflow {VERSION}");
            Ok(())
        }
        Command::Ingest(a) => {
            let schema = pipeline::schema(a.schema.as_deref())?;
            let input = IngestInput {
                input: &a.input,
                profile: a.profile.as_deref(),
                segments: a.segments.as_deref(),
                labels: a.labels.as_deref(),
                min_meaningful: a.min_meaningful,
                count_basis: a.count_basis,
            };
            check_basis(a.count_basis, a.segments.as_deref())?;
            let (log, report) = pipeline::ingest(&input, &schema)?;
            if let Some(p) = &a.report {
                write_to(p, &pipeline::report_bytes(&report))?;
            }
            emit(a.out.as_deref(), &pipeline::log_csv(&log)?, stdout)
        }
        Command::Annotate(AnnotateCommand::Suggest(a)) => {
            let schema = pipeline::schema(a.schema.as_deref())?;
            let log = pipeline::read_log(&a.log)?;
            emit(a.out.as_deref(), &pipeline::suggestions(&log, &schema, a.format)?, stdout)
        }
        Command::Annotate(AnnotateCommand::Validate(a)) => {
            let schema = pipeline::schema(a.schema.as_deref())?;
            let log = pipeline::read_log(&a.log)?;
            let (report, bytes) = pipeline::validation(&log, &schema, a.format)?;
            emit(a.out.as_deref(), &bytes, stdout)?;
            if report.is_clean() {
                Ok(())
            } else {
                Err(CliError {
                    code: "invalid-labels".into(),
                    message: format!("{} label finding(s)", report.findings.len()),
                })
            }
        }
        Command::Agree(a) => {
            let report = pipeline::agreement(&a.a, &a.b, a.replicates, a.level, a.seed)?;
            emit(a.out.as_deref(), &pipeline::agreement_bytes(&report, a.format)?, stdout)
        }
        Command::Freq(a) => {
            let schema = pipeline::schema(a.schema.as_deref())?;
            let opts = stats_options(&a.sd, a.learners.as_deref())?;
            let (log, _) = pipeline::modeling_log(&pipeline::read_log(&a.log)?, &schema)?;
            let report = pipeline::frequency(&log, &schema, &opts, &a.sd)?;
            emit(a.out.as_deref(), &pipeline::frequency_bytes(&report, a.format)?, stdout)
        }
        Command::Mine(a) => {
            let schema = pipeline::schema(a.schema.as_deref())?;
            let settings = DetailSettings::new(a.activity_detail, a.path_detail)?;
            let (log, _) = pipeline::modeling_log(&pipeline::read_log(&a.log)?, &schema)?;
            let mined = pipeline::mine(&log, &schema, a.level.into(), settings)?;
            if let Some(p) = &a.matrix {
                write_to(p, &pipeline::matrix_bytes(&mined.matrix, a.format))?;
            }
            if let Some(p) = &a.model {
                write_to(p, &pipeline::report_bytes(&mined.model))?;
            }
            if a.dot.is_some() || a.matrix.is_none() {
                emit(a.dot.as_deref(), &pipeline::dot_bytes(&mined.model), stdout)?;
            }
            Ok(())
        }
        Command::RunAll(a) => {
            let file = match &a.config {
                Some(p) => ConfigFile::load(p)?,
                None => ConfigFile::default(),
            };
            let cfg = PipelineConfig::resolve(file, &a)?;
            let written = run_all(&cfg)?;
            for name in written {
                let _ = writeln!(stdout, "{}", cfg.output_dir.join(name).display());
            }
            Ok(())
        }
    }
}

fn check_basis(basis: Basis, segments: Option<&Path>) -> CliResult {
    if basis == Basis::Turns && segments.is_none() {
        return Err(Error::InvalidParameter("--count-basis turns needs --segments".into()).into());
    }
    Ok(())
}

#[derive(Serialize)]
struct ModelSummary {
    activity_detail: f64,
    path_detail: f64,
    nodes: usize,
    edges: usize,
    repair_edges: usize,
    detached: Vec<String>,
}

#[derive(Serialize)]
struct AgreementSummary {
    n_items: usize,
    kappa: f64,
    ci_low: f64,
    ci_high: f64,
    level: f64,
    replicates: usize,
}

#[derive(Serialize)]
struct Summary {
    version: &'static str,
    seed: u64,
    min_meaningful: usize,
    sd_convention: String,
    ingest: pipeline::IngestReport,
    finalize: srlflow::event_log::FinalizeReport,
    agreement: Option<AgreementSummary>,
    metacognitive_pct: f64,
    cognitive_pct: f64,
    micro: ModelSummary,
    #[serde(rename = "macro")]
    macro_: ModelSummary,
}

fn model_summary(settings: DetailSettings, mined: &pipeline::Mined) -> ModelSummary {
    ModelSummary {
        activity_detail: settings.activity_detail,
        path_detail: settings.path_detail,
        nodes: mined.model.nodes.len(),
        edges: mined.model.edges.len(),
        repair_edges: mined.model.repair_edges.len(),
        detached: mined.model.detached.clone(),
    }
}

/// Artifact names written by `run-all`, in write order.
pub const ARTIFACTS: [&str; 10] = [
    "events.csv",
    "suggestions.csv",
    "validation.csv",
    "agreement.json",
    "frequency.csv",
    "micro.dot",
    "micro_matrix.csv",
    "macro.dot",
    "macro_matrix.csv",
    "summary.json",
];

/// Runs every step and returns the names of the files written.
pub fn run_all(cfg: &PipelineConfig) -> CliResult<Vec<&'static str>> {
    check_basis(cfg.count_basis, cfg.segments.as_deref())?;
    let schema = pipeline::schema(cfg.schema.as_deref())?;
    let opts = stats_options(&cfg.sd_convention, cfg.learners.as_deref())?;
    std::fs::create_dir_all(&cfg.output_dir).map_err(|e| Error::Io {
        path: cfg.output_dir.clone(),
        source: e,
    })?;
    let out = |name: &str| cfg.output_dir.join(name);
    let mut written = Vec::new();

    let (log, ingest) = pipeline::ingest(
        &IngestInput {
            input: &cfg.input,
            profile: cfg.profile.as_deref(),
            segments: cfg.segments.as_deref(),
            labels: cfg.labels.as_deref(),
            min_meaningful: cfg.min_meaningful,
            count_basis: cfg.count_basis,
        },
        &schema,
    )?;
    write_to(&out("events.csv"), &pipeline::log_csv(&log)?)?;
    written.push("events.csv");
    write_to(&out("suggestions.csv"), &pipeline::suggestions(&log, &schema, Format::Csv)?)?;
    written.push("suggestions.csv");
    let (validation, bytes) = pipeline::validation(&log, &schema, Format::Csv)?;
    write_to(&out("validation.csv"), &bytes)?;
    written.push("validation.csv");
    if !validation.is_clean() {
        return Err(CliError {
            code: "invalid-labels".into(),
            message: format!(
                "{} label finding(s); see {}",
                validation.findings.len(),
                out("validation.csv").display()
            ),
        });
    }

    let agreement = match &cfg.annotators {
        Some((a, b)) => {
            let report = pipeline::agreement(a, b, cfg.replicates, cfg.level, cfg.seed)?;
            write_to(&out("agreement.json"), &pipeline::agreement_bytes(&report, Format::Json)?)?;
            written.push("agreement.json");
            Some(AgreementSummary {
                n_items: report.n_items,
                kappa: report.kappa,
                ci_low: report.ci.low,
                ci_high: report.ci.high,
                level: report.ci.level,
                replicates: report.ci.replicates,
            })
        }
        None => None,
    };

    let (modeling, finalize) = pipeline::modeling_log(&log, &schema)?;
    let freq = pipeline::frequency(&modeling, &schema, &opts, &cfg.sd_convention)?;
    write_to(&out("frequency.csv"), &pipeline::frequency_bytes(&freq, Format::Csv)?)?;
    written.push("frequency.csv");

    let mut models = Vec::new();
    for (level, settings, dot, matrix) in [
        (Level::Micro, cfg.micro, "micro.dot", "micro_matrix.csv"),
        (Level::Macro, cfg.macro_, "macro.dot", "macro_matrix.csv"),
    ] {
        let mined = pipeline::mine(&modeling, &schema, level, settings)?;
        write_to(&out(dot), &pipeline::dot_bytes(&mined.model))?;
        write_to(&out(matrix), &pipeline::matrix_bytes(&mined.matrix, Format::Csv))?;
        written.extend([dot, matrix]);
        models.push(model_summary(settings, &mined));
    }
    let macro_ = models.pop().expect("two models");
    let micro = models.pop().expect("two models");

    let summary = Summary {
        version: VERSION,
        seed: cfg.seed,
        min_meaningful: cfg.min_meaningful,
        sd_convention: cfg.sd_convention.clone(),
        ingest,
        finalize,
        agreement,
        metacognitive_pct: freq.metacognitive_pct,
        cognitive_pct: freq.cognitive_pct,
        micro,
        macro_,
    };
    write_to(&out("summary.json"), &pipeline::report_bytes(&summary))?;
    written.push("summary.json");
    Ok(written)
}
