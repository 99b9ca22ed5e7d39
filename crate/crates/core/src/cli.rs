//! Command-line front end. Every subcommand writes named CSV tables and/or
//! a JSON document into `--out`.
//!
//! Exit codes: 0 success, 1 validation failure (bad inputs or flags, empty
//! corpus on `validate`), 2 analysis error.

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::adherence::adherence;
use crate::canonical::{canonical_table, consensus_set, CanonicalIndex, CanonicalSpec, Scope, ScopeKind, SpecTemplate};
use crate::drift::{
    adherence_gradient, did_early_branching, drift_curve, transition_regression, variance_signature, ClusterLevel,
    DidWindow, DEFAULT_CHECKPOINTS,
};
use crate::error::Error;
use crate::monitor::{calibrate, replay, simulate_policy, CalibrationOptions, DecisionKind, MonitorProfile};
use crate::reliability::{intervention_lift, per_model_metrics, InterventionPolicy};
use crate::report::{self, Document, ReportMeta, Table, VERSION};
use crate::stats::{Resampler, DEFAULT_RESAMPLES};
use crate::store::{ingest, Corpus, DomainTokens, FamilyMap, IngestOptions, IngestReport, WrongCountPolicy};
use crate::synth::{expected_metrics, generate, GeneratorConfig};
use crate::within_unit::{
    family_breakdown, main_gap, placebo_first_tool, robustness_suite, sample_funnel, success_lift, task_breakdown,
    TieRule,
};

#[derive(Debug, Parser)]
#[command(
    name = "pathdrift",
    version,
    about = "Canonical tool-path analysis for agent trajectories"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub opts: Options,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Load and check a corpus; report unit counts per outcome class.
    Validate,
    /// Canonical sets per task and per-run adherence.
    Canonical,
    /// Headline within-unit gap, sample funnel, success lift, first-tool placebo.
    AnalyzeMain,
    /// Specification table: scopes, generic-only, length residuals, LOTO, threshold sweep.
    AnalyzeRobustness,
    /// Drift curve and early-branching difference-in-differences.
    AnalyzeDrift,
    /// Self-reinforcing transition regression.
    AnalyzeTransitions,
    /// Within-unit variance signatures and the adherence gradient.
    AnalyzeVariance,
    /// Task-level table, task correlations, and the family breakdown.
    AnalyzeTasks,
    /// Per-model P@1 / P@k / P^k / MO scorecard.
    Reliability,
    /// Estimated success lift for each --policy.
    Intervention,
    /// Offline monitor replay; with --profile, replays one task's runs and writes transcripts.
    MonitorReplay(ReplayArgs),
    /// Generate a synthetic corpus.
    Synth(SynthArgs),
    /// Every analysis in one document; fails without writing if any analysis errors.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    /// Monitor profile (JSON) to replay against.
    #[arg(long, env = "PATHDRIFT_PROFILE")]
    pub profile: Option<PathBuf>,
    /// Resolve calibration scope for this model (default: naive scope).
    #[arg(long, env = "PATHDRIFT_MODEL")]
    pub model: Option<String>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Generator configuration (JSON); unspecified fields take defaults.
    #[arg(long, env = "PATHDRIFT_SYNTH_CONFIG")]
    pub config: Option<PathBuf>,
    /// Override the configured persistence boost.
    #[arg(long)]
    pub persistence_boost: Option<f64>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Analyses to leave out.
    #[arg(long, value_enum, value_delimiter = ',')]
    pub skip: Vec<Analysis>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Analysis {
    Canonical,
    Main,
    Lift,
    Placebo,
    Robustness,
    Drift,
    Did,
    Transitions,
    Variance,
    Gradient,
    Tasks,
    Families,
    Reliability,
    Intervention,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Doc,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ClusterArg {
    Unit,
    Trajectory,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum TieArg {
    Exclude,
    AllMinority,
}

#[derive(Debug, Args)]
pub struct Options {
    /// Trajectory records, one JSON object per line.
    #[arg(long, global = true, env = "PATHDRIFT_INPUT")]
    pub input: Option<PathBuf>,
    /// Two-column model,family table.
    #[arg(long, global = true, env = "PATHDRIFT_FAMILY_MAP")]
    pub family_map: Option<PathBuf>,
    /// JSON object mapping task id to domain tokens.
    #[arg(long, global = true, env = "PATHDRIFT_DOMAIN_TOKENS")]
    pub domain_tokens: Option<PathBuf>,
    /// Derive families missing from the map by stripping version tokens.
    #[arg(long, global = true, env = "PATHDRIFT_FAMILY_FALLBACK")]
    pub family_fallback: bool,
    #[arg(long, global = true, env = "PATHDRIFT_RUNS_PER_UNIT", default_value_t = 3)]
    pub runs_per_unit: usize,
    /// Fail instead of dropping units with the wrong run count.
    #[arg(long, global = true, env = "PATHDRIFT_REJECT_WRONG_COUNT")]
    pub reject_wrong_count: bool,
    #[arg(long, global = true, env = "PATHDRIFT_ALLOW_EMPTY_RUNS")]
    pub allow_empty_runs: bool,
    #[arg(long, global = true, env = "PATHDRIFT_SCOPE", default_value = "cfloo", value_parser = parse_scope)]
    pub scope: ScopeKind,
    #[arg(long, global = true, env = "PATHDRIFT_THRESHOLD", default_value_t = 0.5)]
    pub threshold: f64,
    #[arg(long, global = true, env = "PATHDRIFT_MIN_SUCCESSES", default_value_t = 3)]
    pub min_successes: usize,
    /// Restrict canonical sets to tools without a domain token.
    #[arg(long, global = true, env = "PATHDRIFT_GENERIC_ONLY")]
    pub generic_only: bool,
    #[arg(long, global = true, env = "PATHDRIFT_RESAMPLES", default_value_t = DEFAULT_RESAMPLES)]
    pub resamples: usize,
    #[arg(long, global = true, env = "PATHDRIFT_SEED", default_value_t = 0)]
    pub seed: u64,
    /// Trajectory fraction at which policies and the monitor look.
    #[arg(long, global = true, env = "PATHDRIFT_CHECKPOINT", default_value_t = 0.75)]
    pub checkpoint: f64,
    /// `tercile` or `below-mean:MARGIN`; repeat or comma-separate for several.
    #[arg(
        long,
        global = true,
        env = "PATHDRIFT_POLICY",
        value_delimiter = ',',
        default_value = "tercile"
    )]
    pub policy: Vec<String>,
    #[arg(long, global = true, env = "PATHDRIFT_CLUSTER", value_enum, default_value = "unit")]
    pub cluster: ClusterArg,
    #[arg(
        long,
        global = true,
        env = "PATHDRIFT_TIE_RULE",
        value_enum,
        default_value = "exclude"
    )]
    pub tie_rule: TieArg,
    /// Post-deviation window for the DiD: `full` or a number of calls.
    #[arg(long, global = true, env = "PATHDRIFT_DID_WINDOW", default_value = "full", value_parser = parse_window)]
    pub did_window: DidWindow,
    #[arg(long, global = true, env = "PATHDRIFT_OUT", default_value = "pathdrift-out")]
    pub out: PathBuf,
    #[arg(
        long,
        global = true,
        env = "PATHDRIFT_FORMAT",
        value_enum,
        value_delimiter = ',',
        default_value = "csv,doc"
    )]
    pub format: Vec<Format>,
    #[arg(long, global = true, env = "PATHDRIFT_WORKERS", default_value_t = 1)]
    pub workers: usize,
}

fn parse_scope(s: &str) -> Result<ScopeKind, String> {
    ScopeKind::parse(s).ok_or_else(|| format!("unknown scope '{s}' (naive, loo, cfloo)"))
}

fn parse_window(s: &str) -> Result<DidWindow, String> {
    if s == "full" {
        return Ok(DidWindow::PrefixVsFull);
    }
    match s.parse::<usize>() {
        Ok(w) if w > 0 => Ok(DidWindow::Calls(w)),
        _ => Err(format!("did window must be 'full' or a positive call count, got '{s}'")),
    }
}

/// Failure classes, mapped onto exit codes.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("{module}: {source}")]
    Analysis {
        module: &'static str,
        #[source]
        source: Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Analysis { .. } => 2,
        }
    }
}

fn invalid(e: impl std::fmt::Display) -> CliError {
    CliError::Validation(e.to_string())
}

trait Provenance<T> {
    fn in_module(self, module: &'static str) -> Result<T, CliError>;
}

impl<T> Provenance<T> for crate::Result<T> {
    fn in_module(self, module: &'static str) -> Result<T, CliError> {
        self.map_err(|source| CliError::Analysis { module, source })
    }
}

/// Parses `args` and runs; returns the process exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.opts.workers.max(1))
        .build()
        .map_err(invalid)?;
    pool.install(|| dispatch(cli))
}

struct Ctx<'a> {
    opts: &'a Options,
    template: SpecTemplate,
    resampler: Resampler,
    policies: Vec<InterventionPolicy>,
}

impl<'a> Ctx<'a> {
    fn new(opts: &'a Options) -> Result<Self, CliError> {
        let template = SpecTemplate {
            scope: opts.scope,
            threshold: opts.threshold,
            min_successes: opts.min_successes,
            generic_only: opts.generic_only,
        };
        template.validate().map_err(invalid)?;
        if !(opts.checkpoint > 0.0 && opts.checkpoint <= 1.0) {
            return Err(invalid(format!(
                "checkpoint must lie in (0, 1], got {}",
                opts.checkpoint
            )));
        }
        if opts.resamples == 0 {
            return Err(invalid("resamples must be positive"));
        }
        let policies = opts
            .policy
            .iter()
            .map(|p| p.parse::<InterventionPolicy>().map(|p| p.at(opts.checkpoint)))
            .collect::<crate::Result<Vec<_>>>()
            .map_err(invalid)?;
        Ok(Ctx {
            opts,
            template,
            resampler: Resampler::new(opts.resamples, opts.seed).with_workers(opts.workers),
            policies,
        })
    }

    fn meta(&self, command: &str, corpus: &Corpus) -> ReportMeta {
        ReportMeta {
            version: VERSION.into(),
            command: command.into(),
            seed: self.opts.seed,
            resamples: self.opts.resamples,
            spec: self.template.clone(),
            fingerprint: corpus.fingerprint(),
        }
    }

    fn cluster(&self) -> ClusterLevel {
        match self.opts.cluster {
            ClusterArg::Unit => ClusterLevel::Unit,
            ClusterArg::Trajectory => ClusterLevel::Trajectory,
        }
    }

    fn tie_rule(&self) -> TieRule {
        match self.opts.tie_rule {
            TieArg::Exclude => TieRule::Exclude,
            TieArg::AllMinority => TieRule::AllMinority,
        }
    }
}

fn open(path: &Path) -> Result<BufReader<File>, CliError> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| invalid(format!("{}: {e}", path.display())))
}

/// Loads the corpus named by the input flags.
pub fn load(opts: &Options) -> Result<(Corpus, IngestReport), CliError> {
    let input = opts.input.as_ref().ok_or_else(|| invalid("--input is required"))?;
    let families = match &opts.family_map {
        Some(p) => FamilyMap::from_reader(open(p)?).map_err(invalid)?,
        None if opts.family_fallback => FamilyMap::new(),
        None => return Err(invalid("--family-map is required (or pass --family-fallback)")),
    };
    let tokens = match &opts.domain_tokens {
        Some(p) => DomainTokens::from_reader(open(p)?).map_err(invalid)?,
        None => DomainTokens::new(),
    };
    let options = IngestOptions {
        runs_per_unit: opts.runs_per_unit,
        wrong_count: if opts.reject_wrong_count {
            WrongCountPolicy::Reject
        } else {
            WrongCountPolicy::Drop
        },
        allow_empty_runs: opts.allow_empty_runs,
        family_fallback: opts.family_fallback,
    };
    let (corpus, report) = ingest(open(input)?, families, tokens, &options).map_err(invalid)?;
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    Ok((corpus, report))
}

fn emit(opts: &Options, meta: &ReportMeta, tables: Vec<Table>) -> Result<(), CliError> {
    let io = |e: std::io::Error| CliError::Analysis {
        module: "cli",
        source: e.into(),
    };
    fs::create_dir_all(&opts.out).map_err(io)?;
    if opts.format.contains(&Format::Csv) {
        for t in &tables {
            let f = File::create(opts.out.join(format!("{}.csv", t.name))).map_err(io)?;
            t.write_csv(BufWriter::new(f), meta).in_module("cli")?;
        }
    }
    if opts.format.contains(&Format::Doc) {
        let doc = Document {
            meta: meta.clone(),
            tables,
        };
        let f = File::create(opts.out.join(format!("{}.json", meta.command))).map_err(io)?;
        doc.write_json(BufWriter::new(f)).in_module("cli")?;
    }
    Ok(())
}

fn dispatch(cli: &Cli) -> Result<(), CliError> {
    let opts = &cli.opts;
    let ctx = Ctx::new(opts)?;
    if let Command::Synth(args) = &cli.command {
        return synth(&ctx, args);
    }
    let (corpus, ingest_report) = load(opts)?;
    let name = command_name(&cli.command);
    let meta = ctx.meta(name, &corpus);
    let tables = match &cli.command {
        Command::Validate => {
            emit(opts, &meta, vec![report::units_table(&ingest_report)])?;
            if ingest_report.units == 0 {
                return Err(invalid("corpus has no complete units"));
            }
            return Ok(());
        }
        Command::Canonical => canonical_tables(&ctx, &corpus)?,
        Command::AnalyzeMain => {
            let mut t = main_tables(&ctx, &corpus)?;
            t.extend(lift_tables(&ctx, &corpus, &[])?);
            t.extend(placebo_tables(&ctx, &corpus)?);
            t
        }
        Command::AnalyzeRobustness => robustness_tables(&ctx, &corpus),
        Command::AnalyzeDrift => {
            let mut t = drift_tables(&ctx, &corpus)?;
            t.extend(did_tables(&ctx, &corpus)?);
            t
        }
        Command::AnalyzeTransitions => transition_tables(&ctx, &corpus)?,
        Command::AnalyzeVariance => {
            let mut t = variance_tables(&ctx, &corpus)?;
            t.extend(gradient_tables(&ctx, &corpus)?);
            t
        }
        Command::AnalyzeTasks => {
            let mut t = task_tables(&ctx, &corpus)?;
            t.extend(family_tables(&ctx, &corpus)?);
            t
        }
        Command::Reliability => vec![report::reliability_table(&per_model_metrics(&corpus))],
        Command::Intervention => intervention_tables(&ctx, &corpus)?,
        Command::MonitorReplay(args) => monitor_tables(&ctx, &corpus, args)?,
        Command::Report(args) => full_report(&ctx, &corpus, &ingest_report, &args.skip)?,
        Command::Synth(_) => unreachable!("handled above"),
    };
    emit(opts, &meta, tables)
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Validate => "validate",
        Command::Canonical => "canonical",
        Command::AnalyzeMain => "analyze-main",
        Command::AnalyzeRobustness => "analyze-robustness",
        Command::AnalyzeDrift => "analyze-drift",
        Command::AnalyzeTransitions => "analyze-transitions",
        Command::AnalyzeVariance => "analyze-variance",
        Command::AnalyzeTasks => "analyze-tasks",
        Command::Reliability => "reliability",
        Command::Intervention => "intervention",
        Command::MonitorReplay(_) => "monitor-replay",
        Command::Synth(_) => "synth",
        Command::Report(_) => "report",
    }
}

type Tables = Result<Vec<Table>, CliError>;

fn canonical_tables(ctx: &Ctx, corpus: &Corpus) -> Tables {
    let table = canonical_table(corpus, &ctx.template).in_module("canonical-extractor")?;
    let index = CanonicalIndex::build(corpus, &ctx.template).in_module("canonical-extractor")?;
    let mut runs = report::Table::new(
        "adherence",
        &[
            "model",
            "task",
            "run_index",
            "success",
            "calls",
            "distinct_tools",
            "adherence",
        ],
    );
    for unit in corpus.units() {
        let canon = index.for_unit(unit, corpus);
        for r in &unit.runs {
            let a = match canon {
                Some(c) => report::num(adherence(r, c).in_module("adherence-engine")?.value),
                None => String::new(),
            };
            runs.push(vec![
                r.model.clone(),
                r.task.clone(),
                r.run_index.to_string(),
                r.success.to_string(),
                r.len().to_string(),
                r.tool_set().len().to_string(),
                a,
            ]);
        }
    }
    Ok(vec![
        report::canonical_rows(&table),
        report::canonical_summary(&table),
        runs,
    ])
}

fn main_tables(ctx: &Ctx, corpus: &Corpus) -> Tables {
    let gap = main_gap(corpus, &ctx.template, &ctx.resampler).in_module("within-unit-analysis")?;
    let funnel = sample_funnel(corpus, &ctx.template).in_module("within-unit-analysis")?;
    Ok(vec![
        report::main_gap_table(&gap, &ctx.template),
        report::funnel_table(&funnel),
    ])
}

/// Lift at the headline gap plus any extra gaps (the robustness rows in
/// the full report).
fn lift_tables(ctx: &Ctx, corpus: &Corpus, extra: &[f64]) -> Tables {
    let gap = main_gap(corpus, &ctx.template, &ctx.resampler).in_module("within-unit-analysis")?;
    let mut gaps = vec![gap.estimate.point];
    gaps.extend(extra.iter().copied().filter(|g| *g != gap.estimate.point));
    let lift = success_lift(corpus, &ctx.template, &gaps).in_module("within-unit-analysis")?;
    Ok(vec![report::success_lift_table(&lift)])
}

fn placebo_tables(ctx: &Ctx, corpus: &Corpus) -> Tables {
    let p = placebo_first_tool(corpus, ctx.tie_rule()).in_module("within-unit-analysis")?;
    Ok(vec![report::placebo_table(&p)])
}

fn robustness_tables(ctx: &Ctx, corpus: &Corpus) -> Vec<Table> {
    vec![report::robustness_table(&robustness_suite(
        corpus,
        &ctx.template,
        &ctx.resampler,
    ))]
}

fn drift_tables(ctx: &Ctx, corpus: &Corpus) -> Tables {
    let c = drift_curve(corpus, &ctx.template, &DEFAULT_CHECKPOINTS, &ctx.resampler).in_module("drift-dynamics")?;
    Ok(vec![report::drift_curve_table(&c)])
}

fn did_tables(ctx: &Ctx, corpus: &Corpus) -> Tables {
    let d = did_early_branching(corpus, &ctx.template, ctx.opts.did_window).in_module("drift-dynamics")?;
    Ok(vec![report::did_table(&d), report::did_summary_table(&d)])
}

fn transition_tables(ctx: &Ctx, corpus: &Corpus) -> Tables {
    let r = transition_regression(corpus, &ctx.template, ctx.cluster()).in_module("drift-dynamics")?;
    Ok(vec![report::transitions_table(&r), report::transition_rates_table(&r)])
}

fn variance_tables(ctx: &Ctx, corpus: &Corpus) -> Tables {
    let v = variance_signature(corpus, &ctx.template).in_module("drift-dynamics")?;
    Ok(vec![report::variance_table(&v), report::variance_tests_table(&v)])
}

fn gradient_tables(ctx: &Ctx, corpus: &Corpus) -> Tables {
    let g = adherence_gradient(corpus, &ctx.template).in_module("drift-dynamics")?;
    Ok(vec![report::gradient_table(&g), report::gradient_tests_table(&g)])
}

fn task_tables(ctx: &Ctx, corpus: &Corpus) -> Tables {
    let b = task_breakdown(corpus, &ctx.template).in_module("within-unit-analysis")?;
    Ok(vec![report::task_table(&b), report::correlation_table(&b)])
}

fn family_tables(ctx: &Ctx, corpus: &Corpus) -> Tables {
    let f = family_breakdown(corpus, &ctx.template, &ctx.resampler).in_module("within-unit-analysis")?;
    Ok(vec![report::family_table(&f)])
}

fn intervention_tables(ctx: &Ctx, corpus: &Corpus) -> Tables {
    let reports = ctx
        .policies
        .iter()
        .map(|p| intervention_lift(corpus, &ctx.template, p, &ctx.resampler))
        .collect::<crate::Result<Vec<_>>>()
        .in_module("reliability-metrics")?;
    Ok(vec![report::intervention_table(&reports)])
}

fn monitor_tables(ctx: &Ctx, corpus: &Corpus, args: &ReplayArgs) -> Tables {
    let io = |e: std::io::Error| CliError::Analysis {
        module: "drift-monitor",
        source: e.into(),
    };
    if let Some(path) = &args.profile {
        let text = fs::read_to_string(path).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
        let profile = MonitorProfile::from_json(&text).map_err(invalid)?;
        let dir = ctx.opts.out.join("transcripts");
        fs::create_dir_all(&dir).map_err(io)?;
        let mut t = Table::new(
            "sessions",
            &[
                "model",
                "task",
                "run_index",
                "success",
                "calls",
                "decision",
                "adherence",
                "at_call",
                "threshold",
            ],
        );
        for run in corpus.runs().filter(|r| r.task == profile.task) {
            let s = replay(&profile, run).in_module("drift-monitor")?;
            let f =
                File::create(dir.join(format!("{}__{}__{}.jsonl", run.model, run.task, run.run_index))).map_err(io)?;
            s.write_transcript(BufWriter::new(f)).in_module("drift-monitor")?;
            let last = s.decisions().last();
            t.push(vec![
                run.model.clone(),
                run.task.clone(),
                run.run_index.to_string(),
                run.success.to_string(),
                run.len().to_string(),
                last.map(|d| match d.kind {
                    DecisionKind::Continue => "continue".to_string(),
                    DecisionKind::FlagRestart => "flag-restart".to_string(),
                })
                .unwrap_or_default(),
                last.map(|d| report::num(d.adherence)).unwrap_or_default(),
                last.map(|d| d.at_call.to_string()).unwrap_or_default(),
                report::num(profile.threshold),
            ]);
        }
        return Ok(vec![t]);
    }

    let reports = ctx
        .policies
        .iter()
        .map(|p| simulate_policy(corpus, &ctx.template, p, &ctx.resampler))
        .collect::<crate::Result<Vec<_>>>()
        .in_module("drift-monitor")?;

    // calibrated profiles for every task that supports one
    let spec = match &args.model {
        Some(m) => ctx.template.resolve(m, corpus).map_err(invalid)?,
        None => CanonicalSpec {
            scope: Scope::Naive,
            threshold: ctx.template.threshold,
            min_successes: ctx.template.min_successes,
            generic_only: ctx.template.generic_only,
        },
    };
    let opts = CalibrationOptions {
        checkpoint: ctx.opts.checkpoint,
        ..Default::default()
    };
    let dir = ctx.opts.out.join("profiles");
    fs::create_dir_all(&dir).map_err(io)?;
    let mut profiles = Table::new("profiles", &["task", "threshold", "source", "canonical"]);
    for task in corpus.tasks() {
        if consensus_set(task, corpus, &spec).is_err() {
            continue;
        }
        let p = calibrate(corpus, task, &spec, &opts).in_module("drift-monitor")?;
        fs::write(
            dir.join(format!("{task}.json")),
            p.to_json().in_module("drift-monitor")? + "\n",
        )
        .map_err(io)?;
        profiles.push(vec![
            task.to_string(),
            report::num(p.threshold),
            serde_json::to_string(&p.source).unwrap_or_default(),
            p.canonical.to_pipe_list(),
        ]);
    }
    Ok(vec![
        report::replay_table(&reports),
        report::flagged_runs_table(&reports),
        profiles,
    ])
}

fn synth(ctx: &Ctx, args: &SynthArgs) -> Result<(), CliError> {
    let mut config = match &args.config {
        Some(p) => serde_json::from_reader::<_, GeneratorConfig>(open(p)?).map_err(invalid)?,
        None => GeneratorConfig::default(),
    };
    config.seed = ctx.opts.seed;
    if let Some(b) = args.persistence_boost {
        config.persistence_boost = b;
    }
    config.validate().map_err(invalid)?;
    let truth = expected_metrics(&config).map_err(invalid)?;
    let (corpus, _) = generate(&config).in_module("synth-generator")?;

    let io = |e: std::io::Error| CliError::Analysis {
        module: "synth-generator",
        source: e.into(),
    };
    let out = &ctx.opts.out;
    fs::create_dir_all(out).map_err(io)?;
    let f = File::create(out.join("trajectories.jsonl")).map_err(io)?;
    corpus.write_jsonl(BufWriter::new(f)).in_module("synth-generator")?;
    let f = File::create(out.join("families.csv")).map_err(io)?;
    corpus
        .family_map()
        .write_to(BufWriter::new(f))
        .in_module("synth-generator")?;
    fs::write(out.join("config.json"), pretty(&config)).map_err(io)?;
    fs::write(out.join("ground_truth.json"), pretty(&truth)).map_err(io)?;

    let meta = ctx.meta("synth", &corpus);
    let mut t = Table::new("synth", &["metric", "value"]);
    t.push(vec!["units".into(), corpus.units().len().to_string()]);
    t.push(vec!["mixed_units".into(), corpus.mixed_units().count().to_string()]);
    t.push(vec!["runs".into(), corpus.runs().count().to_string()]);
    t.push(vec!["injected_beta".into(), report::num(truth.injected_beta)]);
    t.push(vec![
        "stationary_off_rate".into(),
        report::num(truth.stationary_off_rate),
    ]);
    t.push(vec!["expected_gap_sign".into(), truth.expected_gap_sign.to_string()]);
    emit(ctx.opts, &meta, vec![t])
}

fn pretty<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("plain data serializes") + "\n"
}

fn full_report(ctx: &Ctx, corpus: &Corpus, ingest: &IngestReport, skip: &[Analysis]) -> Tables {
    let on = |a: Analysis| !skip.contains(&a);
    let mut tables = vec![report::units_table(ingest)];
    if on(Analysis::Canonical) {
        tables.extend(canonical_tables(ctx, corpus)?);
    }
    if on(Analysis::Main) {
        tables.extend(main_tables(ctx, corpus)?);
    }
    let robustness = robustness_suite(corpus, &ctx.template, &ctx.resampler);
    if on(Analysis::Robustness) {
        if let Some(r) = robustness.iter().find(|r| r.gap.is_none()) {
            return Err(CliError::Analysis {
                module: "within-unit-analysis",
                source: Error::NoEligible(format!(
                    "robustness row {}: {}",
                    r.spec.label(),
                    r.reason.as_deref().unwrap_or("no estimate")
                )),
            });
        }
        tables.push(report::robustness_table(&robustness));
    }
    if on(Analysis::Lift) {
        let gaps: Vec<f64> = robustness
            .iter()
            .filter_map(|r| r.gap.as_ref())
            .map(|g| g.estimate.point)
            .collect();
        tables.extend(lift_tables(ctx, corpus, &gaps)?);
    }
    if on(Analysis::Placebo) {
        tables.extend(placebo_tables(ctx, corpus)?);
    }
    if on(Analysis::Drift) {
        tables.extend(drift_tables(ctx, corpus)?);
    }
    if on(Analysis::Did) {
        tables.extend(did_tables(ctx, corpus)?);
    }
    if on(Analysis::Transitions) {
        tables.extend(transition_tables(ctx, corpus)?);
    }
    if on(Analysis::Variance) {
        tables.extend(variance_tables(ctx, corpus)?);
    }
    if on(Analysis::Gradient) {
        tables.extend(gradient_tables(ctx, corpus)?);
    }
    if on(Analysis::Tasks) {
        tables.extend(task_tables(ctx, corpus)?);
    }
    if on(Analysis::Families) {
        tables.extend(family_tables(ctx, corpus)?);
    }
    if on(Analysis::Reliability) {
        tables.push(report::reliability_table(&per_model_metrics(corpus)));
    }
    if on(Analysis::Intervention) {
        tables.extend(intervention_tables(ctx, corpus)?);
    }
    Ok(tables)
}
