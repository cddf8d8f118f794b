//! Command-line entry point: `generate`, `detect`, `sweep` and `eval`.
//!
//! Exit codes: 0 on success, 1 for runtime, I/O and provider failures, 2 for
//! configuration errors.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use log::{info, warn};

use crate::config::Config;
use crate::detection::{Method, Scope};
use crate::error::{Error, Result};
use crate::eval::{
    label_map, read_predictions, render_report, score, sweep, sweep_csv, threshold_label,
    Prediction, SweepGrid, SweepParam,
};
use crate::generator::{generate_corpus, write_corpus_files, GeneratorSpec, Manifest};
use crate::graph_views::build_dag;
use crate::remote::RemoteProvider;
use crate::runner::{detect_corpus, DetectorConfig};
use crate::semantic::{BuiltinEmbedder, EmbeddingProvider, DEFAULT_DIMENSION};
use crate::trace_model::{assemble_trajectories, read_spans, GroundTruthClass, Trajectory};

#[derive(Debug, Parser)]
#[command(
    name = "agentcycle",
    version,
    about = "Detect wasteful cycles in agent execution traces"
)]
pub struct Cli {
    /// Key-value config file; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Where to write the effective configuration (defaults next to the output).
    #[arg(long, global = true)]
    pub run_manifest: Option<PathBuf>,

    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a labeled synthetic corpus.
    Generate(GenerateArgs),
    /// Run one detector over a corpus and write predictions.
    Detect(DetectArgs),
    /// Sweep one threshold parameter and write a CSV of metrics.
    Sweep(SweepArgs),
    /// Score a predictions file against a corpus manifest.
    Eval(EvalArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long)]
    pub seed: Option<u64>,
    /// Trajectories per class.
    #[arg(long)]
    pub per_class: Option<usize>,
    /// Per-class override, e.g. `--count silent_cycle=5`. Repeatable.
    #[arg(long = "count", value_name = "CLASS=N")]
    pub counts: Vec<String>,
    #[arg(long)]
    pub noise: Option<f64>,
    #[arg(long)]
    pub depth: Option<usize>,
    #[arg(long)]
    pub repeat_min: Option<usize>,
    #[arg(long)]
    pub repeat_max: Option<usize>,
    #[arg(long)]
    pub hard_timeseries_percent: Option<u32>,
    /// Corpus output path (newline-delimited spans).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Manifest path; defaults to `<out stem>.manifest.json`.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Args, Default)]
pub struct DetectorArgs {
    #[arg(long)]
    pub method: Option<String>,
    #[arg(long)]
    pub m: Option<f64>,
    #[arg(long)]
    pub k: Option<f64>,
    #[arg(long)]
    pub phi: Option<f64>,
    #[arg(long)]
    pub max_len: Option<usize>,
    /// `full` or `flagged_only` (hybrid only).
    #[arg(long)]
    pub scope: Option<String>,
    /// `builtin` or `remote`.
    #[arg(long)]
    pub provider: Option<String>,
    #[arg(long)]
    pub endpoint: Option<String>,
    #[arg(long)]
    pub timeout_ms: Option<u64>,
    #[arg(long)]
    pub dimension: Option<usize>,
    #[arg(long)]
    pub workers: Option<usize>,
}

#[derive(Debug, Args)]
pub struct DetectArgs {
    #[command(flatten)]
    pub detector: DetectorArgs,
    #[arg(long = "in")]
    pub input: Option<PathBuf>,
    /// Predictions output; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Where to list trajectories that failed validation.
    #[arg(long)]
    pub rejects: Option<PathBuf>,
    /// Write the operation DAG of one trajectory as DOT.
    #[arg(long)]
    pub dot: Option<PathBuf>,
    /// Trace id for `--dot`; defaults to the first trajectory.
    #[arg(long)]
    pub dot_trace: Option<String>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub detector: DetectorArgs,
    #[arg(long = "in")]
    pub input: Option<PathBuf>,
    /// Corpus manifest holding the labels.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// `m`, `k` or `phi`.
    #[arg(long)]
    pub param: Option<String>,
    #[arg(long)]
    pub from: Option<f64>,
    #[arg(long)]
    pub to: Option<f64>,
    #[arg(long)]
    pub step: Option<f64>,
    /// Explicit grid instead of from/to/step.
    #[arg(long, value_delimiter = ',')]
    pub values: Option<Vec<f64>>,
    /// CSV output; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long = "pred")]
    pub predictions: Option<PathBuf>,
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// Also write the metrics as JSON.
    #[arg(long)]
    pub json: Option<PathBuf>,
}

impl DetectorArgs {
    fn into_config(self) -> Config {
        Config {
            method: self.method,
            m: self.m,
            k: self.k,
            phi: self.phi,
            max_len: self.max_len,
            scope: self.scope,
            provider: self.provider,
            endpoint: self.endpoint,
            timeout_ms: self.timeout_ms,
            dimension: self.dimension,
            workers: self.workers,
            ..Default::default()
        }
    }
}

fn parse_counts(items: &[String]) -> Result<Option<BTreeMap<String, usize>>> {
    if items.is_empty() {
        return Ok(None);
    }
    let mut out = BTreeMap::new();
    for item in items {
        let (class, n) = item
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("expected CLASS=N, got `{item}`")))?;
        class.parse::<GroundTruthClass>()?;
        let n = n
            .parse()
            .map_err(|_| Error::Config(format!("bad count in `{item}`")))?;
        out.insert(class.to_string(), n);
    }
    Ok(Some(out))
}

fn flags_config(command: Command) -> Result<Config> {
    Ok(match command {
        Command::Generate(a) => Config {
            seed: a.seed,
            per_class: a.per_class,
            counts: parse_counts(&a.counts)?,
            noise: a.noise,
            depth: a.depth,
            repeat_min: a.repeat_min,
            repeat_max: a.repeat_max,
            hard_timeseries_percent: a.hard_timeseries_percent,
            output: a.out,
            manifest: a.manifest,
            ..Default::default()
        },
        Command::Detect(a) => Config {
            input: a.input,
            output: a.out,
            rejects: a.rejects,
            dot: a.dot,
            dot_trace: a.dot_trace,
            ..a.detector.into_config()
        },
        Command::Sweep(a) => Config {
            input: a.input,
            truth: a.truth,
            param: a.param,
            from: a.from,
            to: a.to,
            step: a.step,
            values: a.values,
            output: a.out,
            ..a.detector.into_config()
        },
        Command::Eval(a) => Config {
            predictions: a.predictions,
            truth: a.truth,
            json: a.json,
            ..Default::default()
        },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Action {
    Generate,
    Detect,
    Sweep,
    Eval,
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    init_logging(cli.verbose);
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_config() {
                2
            } else {
                1
            }
        }
    }
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    let _ = env_logger::Builder::new()
        .filter_level(level)
        .format_timestamp(None)
        .try_init();
}

pub fn execute(cli: Cli) -> Result<()> {
    let action = match &cli.command {
        Command::Generate(_) => Action::Generate,
        Command::Detect(_) => Action::Detect,
        Command::Sweep(_) => Action::Sweep,
        Command::Eval(_) => Action::Eval,
    };
    let file = match &cli.config {
        Some(path) => Config::load(path)?,
        None => Config::default(),
    };
    let mut cfg = file.overlay(flags_config(cli.command)?);
    if cfg.verbosity.is_none() && cli.verbose > 0 {
        cfg.verbosity = Some(format!("{}", cli.verbose));
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers.unwrap_or(0))
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    pool.install(|| match action {
        Action::Generate => cmd_generate(cfg, cli.run_manifest.as_deref()),
        Action::Detect => cmd_detect(cfg, cli.run_manifest.as_deref()),
        Action::Sweep => cmd_sweep(cfg, cli.run_manifest.as_deref()),
        Action::Eval => cmd_eval(cfg, cli.run_manifest.as_deref()),
    })
}

fn require<'a, T>(value: &'a Option<T>, name: &str) -> Result<&'a T> {
    value
        .as_ref()
        .ok_or_else(|| Error::Config(format!("missing required option `{name}`")))
}

fn sidecar(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

/// Writes the effective config to `explicit` or next to `primary_output`.
fn write_run_manifest(
    cfg: &Config,
    explicit: Option<&Path>,
    primary_output: Option<&Path>,
) -> Result<()> {
    let path = match (explicit, primary_output) {
        (Some(p), _) => p.to_path_buf(),
        (None, Some(out)) => sidecar(out, ".run.toml"),
        (None, None) => return Ok(()),
    };
    cfg.write(&path)?;
    info!("run manifest written to {}", path.display());
    Ok(())
}

pub fn generator_spec(cfg: &Config) -> Result<GeneratorSpec> {
    let mut spec = GeneratorSpec::per_class(cfg.seed.unwrap_or(42), cfg.per_class.unwrap_or(100));
    if let Some(counts) = &cfg.counts {
        if cfg.per_class.is_none() {
            spec.counts.values_mut().for_each(|n| *n = 0);
        }
        for (class, &n) in counts {
            spec.counts.insert(class.parse()?, n);
        }
    }
    if let Some(noise) = cfg.noise {
        spec.noise = noise;
    }
    if let Some(depth) = cfg.depth {
        spec.depth = depth;
    }
    spec.repeat_range = (
        cfg.repeat_min.unwrap_or(spec.repeat_range.0),
        cfg.repeat_max.unwrap_or(spec.repeat_range.1),
    );
    if let Some(p) = cfg.hard_timeseries_percent {
        spec.hard_timeseries_percent = p;
    }
    spec.validate()?;
    Ok(spec)
}

pub fn cmd_generate(mut cfg: Config, run_manifest: Option<&Path>) -> Result<()> {
    let spec = generator_spec(&cfg)?;
    let out = require(&cfg.output, "out")?.clone();
    let manifest = cfg
        .manifest
        .clone()
        .unwrap_or_else(|| out.with_extension("manifest.json"));
    cfg.manifest = Some(manifest.clone());
    cfg.seed = Some(spec.seed);
    cfg.per_class = None;
    cfg.counts = Some(
        spec.counts
            .iter()
            .map(|(c, &n)| (c.to_string(), n))
            .collect(),
    );
    cfg.noise = Some(spec.noise);
    cfg.depth = Some(spec.depth);
    cfg.repeat_min = Some(spec.repeat_range.0);
    cfg.repeat_max = Some(spec.repeat_range.1);
    cfg.hard_timeseries_percent = Some(spec.hard_timeseries_percent);

    let corpus = generate_corpus(&spec)?;
    write_corpus_files(&corpus, &out, &manifest)?;
    write_run_manifest(&cfg, run_manifest, Some(&out))?;
    eprintln!(
        "generated {} trajectories ({} bad cycles) -> {}",
        corpus.trajectories.len(),
        corpus
            .manifest
            .binary_truth()
            .values()
            .filter(|&&b| b == 1)
            .count(),
        out.display()
    );
    Ok(())
}

fn method_of(cfg: &Config) -> Result<Method> {
    require(&cfg.method, "method")?.parse()
}

pub fn detector_config(cfg: &Config, method: Method) -> Result<DetectorConfig> {
    let mut d = DetectorConfig::defaults_for(method);
    if let Some(m) = cfg.m {
        d.m = m;
    }
    if let Some(k) = cfg.k {
        d.k = k;
    }
    if let Some(phi) = cfg.phi {
        d.phi = phi;
    }
    if let Some(max_len) = cfg.max_len {
        d.max_len = max_len;
    }
    if let Some(scope) = &cfg.scope {
        d.scope = scope.parse::<Scope>()?;
    }
    d.validate(method)?;
    Ok(d)
}

/// Records the resolved values `method` uses, so the run manifest is complete.
fn echo_effective(cfg: &mut Config, method: Method, d: &DetectorConfig) {
    cfg.method = Some(method.as_str().to_string());
    let structural = matches!(method, Method::Cdcs | Method::Hybrid);
    let semantic = matches!(method, Method::Cdsa | Method::Hybrid);
    if method == Method::Cddag {
        cfg.m = Some(d.m);
    }
    if structural {
        cfg.k = Some(d.k);
        cfg.max_len = Some(d.max_len);
    }
    if semantic {
        cfg.phi = Some(d.phi);
        let provider = cfg.provider.get_or_insert_with(|| "builtin".into());
        if provider == "builtin" {
            cfg.dimension.get_or_insert(DEFAULT_DIMENSION);
        }
    }
    if method == Method::Hybrid {
        cfg.scope = Some(d.scope.to_string());
    }
}

pub fn build_provider(cfg: &Config) -> Result<Box<dyn EmbeddingProvider>> {
    match cfg.provider.as_deref().unwrap_or("builtin") {
        "builtin" => Ok(Box::new(BuiltinEmbedder::new(
            cfg.dimension.unwrap_or(DEFAULT_DIMENSION),
        )?)),
        "remote" => {
            let endpoint = require(&cfg.endpoint, "endpoint")?;
            let timeout = Duration::from_millis(cfg.timeout_ms.unwrap_or(30_000));
            Ok(Box::new(RemoteProvider::new(
                endpoint.clone(),
                timeout,
                cfg.dimension,
            )?))
        }
        other => Err(Error::Config(format!("unknown provider `{other}`"))),
    }
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::Io(io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

/// `(trace_id, message)` for a trajectory that failed validation.
pub type Rejected = (String, String);

/// Reads and assembles a corpus. Trajectories failing validation are returned
/// separately.
pub fn load_corpus(path: &Path) -> Result<(Vec<Trajectory>, Vec<Rejected>)> {
    let spans = read_spans(open(path)?)?;
    let mut ok = Vec::new();
    let mut rejected = Vec::new();
    for r in assemble_trajectories(spans) {
        match r {
            Ok(t) => ok.push(t),
            Err(Error::Validation { trace_id, message }) => rejected.push((trace_id, message)),
            Err(e) => return Err(e),
        }
    }
    ok.sort_by(|a, b| a.trace_id().cmp(b.trace_id()));
    Ok((ok, rejected))
}

fn write_output(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, text)?,
        None => io::stdout().lock().write_all(text.as_bytes())?,
    }
    Ok(())
}

pub fn cmd_detect(mut cfg: Config, run_manifest: Option<&Path>) -> Result<()> {
    let method = method_of(&cfg)?;
    let dcfg = detector_config(&cfg, method)?;
    echo_effective(&mut cfg, method, &dcfg);
    let provider = build_provider(&cfg)?;
    let input = require(&cfg.input, "in")?;
    let (corpus, rejected) = load_corpus(input)?;

    if let Some(dot) = &cfg.dot {
        let t = match &cfg.dot_trace {
            Some(id) => corpus
                .iter()
                .find(|t| t.trace_id() == id)
                .ok_or_else(|| Error::Config(format!("no trajectory `{id}` for --dot")))?,
            None => corpus
                .first()
                .ok_or_else(|| Error::Config("corpus is empty; nothing for --dot".into()))?,
        };
        std::fs::write(dot, build_dag(t).to_dot(t.trace_id()))?;
    }

    let detections = detect_corpus(method, &corpus, &dcfg, provider.as_ref())?;
    let mut text = String::new();
    for (t, d) in corpus.iter().zip(&detections) {
        let line = serde_json::to_string(&Prediction::new(t.trace_id(), d))
            .map_err(|e| Error::Domain(e.to_string()))?;
        text.push_str(&line);
        text.push('\n');
    }
    write_output(cfg.output.as_deref(), &text)?;

    if !rejected.is_empty() {
        let path = cfg
            .rejects
            .clone()
            .or_else(|| cfg.output.as_deref().map(|o| sidecar(o, ".rejects.jsonl")));
        let mut lines = String::new();
        for (id, msg) in &rejected {
            lines.push_str(&serde_json::json!({ "trace_id": id, "error": msg }).to_string());
            lines.push('\n');
        }
        match path {
            Some(p) => std::fs::write(p, lines)?,
            None => eprint!("{lines}"),
        }
        warn!(
            "{} trajectories failed validation and were skipped",
            rejected.len()
        );
    }
    write_run_manifest(&cfg, run_manifest, cfg.output.as_deref())?;
    let flagged = detections.iter().filter(|d| d.is_cycle()).count();
    eprintln!(
        "{method}: {flagged} of {} trajectories flagged; {} rejected",
        detections.len(),
        rejected.len()
    );
    Ok(())
}

pub fn cmd_sweep(mut cfg: Config, run_manifest: Option<&Path>) -> Result<()> {
    let method = method_of(&cfg)?;
    let fixed = detector_config(&cfg, method)?;
    echo_effective(&mut cfg, method, &fixed);
    let param = SweepParam::parse(require(&cfg.param, "param")?)?;
    let grid = match &cfg.values {
        Some(values) => SweepGrid::new(method, param, values.clone())?,
        None => SweepGrid::range(
            method,
            param,
            *require(&cfg.from, "from")?,
            *require(&cfg.to, "to")?,
            *require(&cfg.step, "step")?,
        )?,
    };
    let provider = build_provider(&cfg)?;
    let (corpus, rejected) = load_corpus(require(&cfg.input, "in")?)?;
    if !rejected.is_empty() {
        warn!(
            "{} trajectories failed validation and were skipped",
            rejected.len()
        );
    }
    let manifest = Manifest::read(require(&cfg.truth, "truth")?)?;
    let all_truth = manifest.binary_truth();
    let truth: BTreeMap<String, u8> = corpus
        .iter()
        .filter_map(|t| all_truth.get_key_value(t.trace_id()))
        .map(|(k, v)| (k.clone(), *v))
        .collect();

    let rows = sweep(&corpus, &truth, &grid, &fixed, provider.as_ref())?;
    write_output(cfg.output.as_deref(), &sweep_csv(&rows))?;
    write_run_manifest(&cfg, run_manifest, cfg.output.as_deref())?;
    Ok(())
}

pub fn cmd_eval(cfg: Config, run_manifest: Option<&Path>) -> Result<()> {
    let predictions = read_predictions(open(require(&cfg.predictions, "pred")?)?)?;
    let manifest = Manifest::read(require(&cfg.truth, "truth")?)?;
    let metrics = score(&label_map(&predictions), &manifest.binary_truth())?;

    let (method, threshold) = match predictions.first() {
        Some(p) => (p.method, threshold_label(p.method, &p.params)),
        None => return Err(Error::Domain("predictions file is empty".into())),
    };
    print!(
        "{}",
        render_report(&[(method, threshold.clone(), metrics.clone())])
    );

    if let Some(path) = &cfg.json {
        let json = serde_json::json!({
            "method": method,
            "threshold": threshold,
            "metrics": metrics,
        });
        let mut w = BufWriter::new(File::create(path)?);
        serde_json::to_writer_pretty(&mut w, &json).map_err(|e| Error::Domain(e.to_string()))?;
        writeln!(w)?;
    }
    write_run_manifest(&cfg, run_manifest, cfg.json.as_deref())?;
    Ok(())
}
