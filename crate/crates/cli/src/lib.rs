//! `parityd` command line: `audit`, `tree` and `serve`.
//!
//! Exit codes: 0 when the audit passes (or is only indeterminate), 1 when any
//! selected metric fails, 2 for usage and data errors. Errors go to stderr as
//! one line starting with `error:`.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use parityd_core::metrics::parse_metric_list;
use parityd_core::tree::{self, TreePosition};
use parityd_core::{
    build_report, parse_csv, run_audit, validate, AuditConfig, AuditReport, DatasetSchema,
    IndeterminatePolicy, ParseOptions, ReferenceStrategy, ReportFormat, ThresholdPolicy, TieMode,
    TriState,
};

pub const EXIT_PASS: i32 = 0;
pub const EXIT_FAIL: i32 = 1;
pub const EXIT_ERROR: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "parityd", version, about = "Group fairness audits for binary decisions")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Audit a CSV of scores or decisions against true labels.
    Audit(Box<AuditArgs>),
    /// Walk the fairness tree to choose which metrics to audit.
    Tree(TreeArgs),
    /// Run the HTTP API.
    Serve(ServeArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum TiesArg {
    Exact,
    All,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum FormatArg {
    Json,
    Markdown,
    Csv,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum IndeterminateArg {
    ReportOnly,
    Fail,
    Pass,
}

#[derive(Debug, Args)]
#[command(group = clap::ArgGroup::new("source").required(true).args(["decision_col", "top_k", "top_percent", "cutoff"]))]
pub struct AuditArgs {
    /// CSV file to audit; `-` reads stdin.
    #[arg(long, value_name = "PATH")]
    pub input: PathBuf,
    #[arg(long, value_name = "NAME")]
    pub score_col: Option<String>,
    /// Column holding 0/1 decisions; audits them as given.
    #[arg(long, value_name = "NAME")]
    pub decision_col: Option<String>,
    #[arg(long, value_name = "NAME")]
    pub label_col: String,
    /// Comma-separated protected attribute columns.
    #[arg(long, value_name = "A,B,C", value_delimiter = ',', required = true)]
    pub attrs: Vec<String>,
    #[arg(long, value_name = "NAME")]
    pub id_col: Option<String>,
    /// Flag the N highest scores.
    #[arg(long, value_name = "N", requires = "score_col")]
    pub top_k: Option<usize>,
    /// Flag the top P percent of scores, 0 < P <= 100.
    #[arg(long, value_name = "P", requires = "score_col")]
    pub top_percent: Option<f64>,
    /// Flag every score >= C.
    #[arg(long, value_name = "C", requires = "score_col", allow_negative_numbers = true)]
    pub cutoff: Option<f64>,
    #[arg(long, value_enum, default_value = "exact")]
    pub ties: TiesArg,
    /// majority, min-metric, or fixed:attr=group,...
    #[arg(long = "ref", value_name = "STRATEGY", default_value = "majority")]
    pub reference: String,
    #[arg(long, env = "PARITYD_TAU", default_value_t = 0.8)]
    pub tau: f64,
    /// Comma-separated metrics (PPrev, PPR, FDR, FOR, FPR, FNR).
    #[arg(long, value_name = "LIST", conflicts_with = "tree_path")]
    pub metrics: Option<String>,
    /// Comma-separated fairness-tree answer ids selecting the metrics.
    #[arg(long, value_name = "IDS", value_delimiter = ',')]
    pub tree_path: Option<Vec<String>>,
    #[arg(long, value_enum, default_value = "report-only")]
    pub indeterminate: IndeterminateArg,
    #[arg(long, value_enum, default_value = "markdown")]
    pub format: FormatArg,
    /// Write the report here instead of stdout.
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
    /// Omit the generation timestamp from JSON output.
    #[arg(long)]
    pub no_timestamp: bool,
    /// Field delimiter: a single character, or comma, tab, semicolon.
    #[arg(long, default_value = ",")]
    pub delimiter: String,
    /// Reject attributes with more distinct values than this.
    #[arg(long, value_name = "N", default_value_t = 50)]
    pub max_groups: usize,
}

#[derive(Debug, Args)]
pub struct TreeArgs {
    /// Comma-separated answer ids; prompts interactively when absent.
    #[arg(long, value_name = "IDS", value_delimiter = ',')]
    pub answers: Option<Vec<String>>,
    /// Print a ready-to-paste `--metrics` flag instead of the rationale.
    #[arg(long)]
    pub emit_flags: bool,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, env = "PARITYD_ADDR", default_value = parityd_service::DEFAULT_ADDR)]
    pub addr: String,
    #[arg(long, env = "PARITYD_TTL_HOURS", default_value_t = 24.0)]
    pub ttl_hours: f64,
    #[arg(long, env = "PARITYD_MAX_BODY_BYTES", default_value_t = parityd_service::DEFAULT_MAX_BODY_BYTES)]
    pub max_body_bytes: usize,
    /// Also write every report under this directory.
    #[arg(long, env = "PARITYD_PERSIST_DIR")]
    pub persist_dir: Option<PathBuf>,
    #[arg(long, env = "PARITYD_CORS_ORIGIN")]
    pub cors_origin: Option<String>,
}

/// Streams and terminal settings for one invocation.
pub struct Io<'a> {
    pub stdin: &'a mut dyn BufRead,
    pub stdout: &'a mut dyn Write,
    pub stderr: &'a mut dyn Write,
    pub color: bool,
}

#[derive(Debug)]
pub struct CliError(pub String);

impl<T: std::fmt::Display> From<T> for CliError {
    fn from(e: T) -> Self {
        CliError(e.to_string())
    }
}

pub fn parse_reference(s: &str) -> Result<ReferenceStrategy, String> {
    match s.trim() {
        "majority" => Ok(ReferenceStrategy::Majority),
        "min-metric" => Ok(ReferenceStrategy::MinMetric),
        other => {
            let spec = other.strip_prefix("fixed:").ok_or_else(|| {
                format!("unknown reference strategy {other:?} (majority, min-metric, fixed:attr=group,...)")
            })?;
            let mut groups = BTreeMap::new();
            for pair in spec.split(',').filter(|p| !p.trim().is_empty()) {
                let (attr, group) = pair
                    .split_once('=')
                    .ok_or_else(|| format!("fixed reference entry {pair:?} is not attr=group"))?;
                if groups.insert(attr.trim().to_string(), group.to_string()).is_some() {
                    return Err(format!("attribute {:?} given twice in fixed reference", attr.trim()));
                }
            }
            if groups.is_empty() {
                return Err("fixed reference needs at least one attr=group".into());
            }
            Ok(ReferenceStrategy::Fixed { groups })
        }
    }
}

pub fn parse_delimiter(s: &str) -> Result<u8, String> {
    match s {
        "comma" => Ok(b','),
        "tab" | "\\t" => Ok(b'\t'),
        "semicolon" => Ok(b';'),
        _ if s.len() == 1 && s.is_ascii() => Ok(s.as_bytes()[0]),
        _ => Err(format!("delimiter must be one ASCII character, got {s:?}")),
    }
}

impl AuditArgs {
    pub fn schema(&self) -> DatasetSchema {
        DatasetSchema {
            score_column: self.score_col.clone(),
            label_column: self.label_col.clone(),
            decision_column: self.decision_col.clone(),
            entity_id_column: self.id_col.clone(),
            attribute_columns: self.attrs.iter().map(|a| a.trim().to_string()).collect(),
        }
    }

    pub fn parse_options(&self) -> Result<ParseOptions, String> {
        Ok(ParseOptions {
            delimiter: parse_delimiter(&self.delimiter)?,
            max_distinct_values: self.max_groups,
            ..ParseOptions::default()
        })
    }

    pub fn threshold(&self) -> Result<ThresholdPolicy, String> {
        let ties = match self.ties {
            TiesArg::Exact => TieMode::ExactK,
            TiesArg::All => TieMode::IncludeAllTies,
        };
        let policy = if self.decision_col.is_some() {
            ThresholdPolicy::PreBinarized
        } else if let Some(k) = self.top_k {
            ThresholdPolicy::TopK { k, ties }
        } else if let Some(p) = self.top_percent {
            if !(p > 0.0 && p <= 100.0) {
                return Err(format!("--top-percent must be in (0, 100], got {p}"));
            }
            ThresholdPolicy::TopPercent { p: p / 100.0, ties }
        } else if let Some(c) = self.cutoff {
            ThresholdPolicy::ScoreCutoff { c }
        } else {
            return Err("one decision source is required".into());
        };
        Ok(policy)
    }

    pub fn audit_config(&self) -> Result<AuditConfig, String> {
        let mut cfg = AuditConfig::new(self.threshold()?);
        cfg.reference = parse_reference(&self.reference)?;
        cfg.tau = self.tau;
        cfg.metrics = self
            .metrics
            .as_deref()
            .map(parse_metric_list)
            .transpose()
            .map_err(|e| e.to_string())?;
        cfg.tree_path = self.tree_path.clone();
        cfg.indeterminate_policy = match self.indeterminate {
            IndeterminateArg::ReportOnly => IndeterminatePolicy::ReportOnly,
            IndeterminateArg::Fail => IndeterminatePolicy::TreatAsFail,
            IndeterminateArg::Pass => IndeterminatePolicy::TreatAsPass,
        };
        Ok(cfg)
    }
}

fn paint(color: bool, code: &str, text: &str) -> String {
    if color {
        format!("\x1b[{code}m{text}\x1b[0m")
    } else {
        text.to_string()
    }
}

fn verdict_label(color: bool, v: TriState) -> String {
    match v {
        TriState::Pass => paint(color, "32", "PASS"),
        TriState::Fail => paint(color, "31", "FAIL"),
        TriState::Indeterminate => paint(color, "33", "INDETERMINATE"),
    }
}

fn read_input(path: &PathBuf, stdin: &mut dyn BufRead) -> Result<Vec<u8>, CliError> {
    if path.as_os_str() == "-" {
        let mut buf = Vec::new();
        stdin.read_to_end(&mut buf)?;
        return Ok(buf);
    }
    std::fs::read(path).map_err(|e| CliError(format!("cannot read {}: {e}", path.display())))
}

fn audit(args: &AuditArgs, io: &mut Io) -> Result<i32, CliError> {
    let schema = args.schema();
    let options = args.parse_options()?;
    let cfg = args.audit_config()?;
    let raw = read_input(&args.input, io.stdin)?;
    let dataset = parse_csv(&raw, &schema, &options)
        .map_err(|e| CliError(format!("{}: {e}", e.code())))?;
    let results = run_audit(&dataset, &cfg).map_err(|e| CliError(format!("{}: {e}", e.code())))?;
    let format = match args.format {
        FormatArg::Json => ReportFormat::Json,
        FormatArg::Markdown => ReportFormat::Markdown,
        FormatArg::Csv => ReportFormat::Csv,
    };
    let stamp = (format == ReportFormat::Json && !args.no_timestamp).then(|| {
        chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
    });
    let report = AuditReport::new(&dataset, &results, stamp);
    let bytes = build_report(&report, format);
    match &args.out {
        Some(path) => std::fs::write(path, &bytes)
            .map_err(|e| CliError(format!("cannot write {}: {e}", path.display())))?,
        None => io.stdout.write_all(&bytes)?,
    }

    for w in validate(&dataset).iter().chain(&report.binarization.warnings) {
        writeln!(io.stderr, "warning: {w}")?;
    }
    let failing = report.failing_rows().count();
    let per_attr: Vec<String> = report
        .attributes
        .iter()
        .map(|a| format!("{}={}", a.attribute, verdict_label(io.color, a.parity.overall_for_selected_metrics)))
        .collect();
    writeln!(
        io.stderr,
        "audit {}: {failing} failing disparit{} at tau {} ({})",
        verdict_label(io.color, report.overall_verdict),
        if failing == 1 { "y" } else { "ies" },
        report.config.tau,
        per_attr.join(", ")
    )?;
    Ok(match report.overall_verdict {
        TriState::Fail => EXIT_FAIL,
        TriState::Pass | TriState::Indeterminate => EXIT_PASS,
    })
}

fn print_terminal(state: &tree::TreeState, emit_flags: bool, out: &mut dyn Write) -> Result<(), CliError> {
    let metrics = tree::recommended_metrics(state)?;
    let list: Vec<&str> = metrics.iter().map(|m| m.as_str()).collect();
    if emit_flags {
        writeln!(out, "--metrics {}", list.join(","))?;
    } else {
        writeln!(out, "{}", list.join(","))?;
        writeln!(out, "{}", tree::rationale(state).unwrap_or_default())?;
    }
    Ok(())
}

fn tree_command(args: &TreeArgs, io: &mut Io) -> Result<i32, CliError> {
    let fairness_tree = tree::builtin();
    if let Some(answers) = &args.answers {
        let state = fairness_tree.replay(answers)?;
        if !state.is_terminal() {
            return Err(CliError(format!(
                "answers {:?} stop before a recommendation; more answers are needed",
                answers.join(",")
            )));
        }
        print_terminal(&state, args.emit_flags, io.stdout)?;
        return Ok(EXIT_PASS);
    }

    let mut state = fairness_tree.start();
    while let TreePosition::Question(q) = &state.current {
        writeln!(io.stderr, "\n{}", q.text)?;
        for (i, (id, text)) in q.answers.iter().enumerate() {
            writeln!(io.stderr, "  {}) {id}: {text}", i + 1)?;
        }
        write!(io.stderr, "> ")?;
        io.stderr.flush()?;
        let mut line = String::new();
        if io.stdin.read_line(&mut line)? == 0 {
            writeln!(io.stderr)?;
            return Err(CliError("input ended before the interview finished".into()));
        }
        let reply = line.trim();
        let id = match reply.parse::<usize>() {
            Ok(n) if (1..=q.answers.len()).contains(&n) => q.answers[n - 1].0.clone(),
            _ => reply.to_string(),
        };
        match fairness_tree.answer(&state, &id) {
            Ok(next) => state = next,
            Err(e) => writeln!(io.stderr, "{e}; try again")?,
        }
    }
    writeln!(io.stderr, "\nanswers: {}", state.answer_ids().join(","))?;
    print_terminal(&state, args.emit_flags, io.stdout)?;
    Ok(EXIT_PASS)
}

fn serve(args: &ServeArgs) -> Result<i32, CliError> {
    if !(args.ttl_hours.is_finite() && args.ttl_hours >= 0.0) {
        return Err(CliError(format!("--ttl-hours must be a non-negative number, got {}", args.ttl_hours)));
    }
    let config = parityd_service::ServiceConfig {
        addr: args.addr.clone(),
        ttl: std::time::Duration::from_secs_f64(args.ttl_hours * 3600.0),
        max_body_bytes: args.max_body_bytes,
        persist_dir: args.persist_dir.clone(),
        cors_origin: args.cors_origin.clone(),
    };
    let runtime = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    runtime.block_on(parityd_service::serve(config))?;
    Ok(EXIT_PASS)
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I, io: &mut Io) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = write!(io.stdout, "{e}");
                return EXIT_PASS;
            }
            // Clap spreads some messages over several lines before the usage block.
            let rendered = e.to_string();
            let msg = rendered
                .lines()
                .take_while(|l| !l.starts_with("Usage:") && !l.starts_with("For more information"))
                .map(str::trim)
                .filter(|l| !l.is_empty())
                .collect::<Vec<_>>()
                .join(" ");
            let msg = msg.strip_prefix("error: ").unwrap_or(&msg);
            let _ = writeln!(io.stderr, "error: {msg}");
            return EXIT_ERROR;
        }
    };
    let result = match &cli.command {
        Command::Audit(args) => audit(args, io),
        Command::Tree(args) => tree_command(args, io),
        Command::Serve(args) => serve(args),
    };
    match result {
        Ok(code) => code,
        Err(CliError(msg)) => {
            let line = msg.replace('\n', " ");
            let _ = writeln!(io.stderr, "error: {line}");
            EXIT_ERROR
        }
    }
}
