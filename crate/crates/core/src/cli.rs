//! Command-line front end: `generate`, `baseline`, `cross`, `multi`,
//! `adapt-trace` and `rerun`.
//!
//! Settings resolve as library defaults, then `--config`, then flags. The
//! resolved settings, the seed and fingerprints of every input and output
//! are written to `manifest.json` next to the reports.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::corpus::{
    load_corpus, write_corpus, Corpus, CorpusError, CorpusSchema, LabelScheme, SyntheticSpec,
};
use crate::eval::{
    folds_csv, run_baseline, run_cross_lingual, run_multilingual, summary_csv, summary_table,
    trace_adaptation, EvalConfig, EvalError, EvalReport, ExperimentOutcome, FeatureCondition,
};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("{path}: {message}")]
    File { path: PathBuf, message: String },
    #[error("rerun of {manifest} differs: {detail}")]
    NotReproduced { manifest: PathBuf, detail: String },
}

impl CliError {
    /// 1 usage, 2 data, 3 numerical.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Eval(e) if e.is_numerical() => 3,
            CliError::NotReproduced { .. } => 3,
            _ => 2,
        }
    }

    pub fn category(&self) -> &'static str {
        match self.exit_code() {
            1 => "usage error",
            3 => "numerical failure",
            _ => "data error",
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "ser-adapt",
    version,
    about = "Adversarial domain adaptation for cross-lingual speech emotion recognition"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write synthetic feature corpora described by a TOML spec.
    Generate(GenerateArgs),
    /// Within-corpus speaker-independent baseline for each --source.
    Baseline(RunArgs),
    /// Train on each --source, test on --target.
    Cross(RunArgs),
    /// One-corpus-out over all inputs (or only --target when given).
    Multi(RunArgs),
    /// Run only the adversarial stage of --source → --target and write its history.
    AdaptTrace(RunArgs),
    /// Re-run an experiment from its manifest and check the outputs match.
    Rerun(RerunArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long)]
    pub spec: PathBuf,
    #[arg(long, default_value = "data")]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Source feature files.
    #[arg(long, num_args = 1..)]
    pub source: Vec<PathBuf>,
    #[arg(long)]
    pub target: Option<PathBuf>,
    /// TOML file with any `ExperimentConfig` fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// TOML file with `[labels.<corpus>]` valence schemes for corpora
    /// outside the built-in table.
    #[arg(long)]
    pub labels: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// raw, latent, fused or all.
    #[arg(long)]
    pub condition: Option<String>,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Epochs for autoencoder training and for the adversarial stage.
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub latent_dim: Option<usize>,
    /// `loso` or a number of speaker-grouped folds.
    #[arg(long)]
    pub folds: Option<String>,
    /// Adapt on half of the target speakers and score the other half.
    #[arg(long)]
    pub inductive: bool,
}

#[derive(Debug, Args)]
pub struct RerunArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long, default_value = "rerun")]
    pub out: PathBuf,
}

/// Everything an experiment command needs; echoed into the manifest.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub sources: Vec<PathBuf>,
    pub target: Option<PathBuf>,
    /// Empty means the command default: raw for `baseline`, all three otherwise.
    pub conditions: Vec<FeatureCondition>,
    pub eval: EvalConfig,
    pub labels: BTreeMap<String, LabelScheme>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CommandKind {
    Baseline,
    Cross,
    Multi,
    AdaptTrace,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InputRecord {
    pub path: PathBuf,
    pub corpus_id: String,
    pub file_sha256: String,
    pub corpus_fingerprint: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: CommandKind,
    pub config: ExperimentConfig,
    pub inputs: Vec<InputRecord>,
    /// File name to SHA-256 of every output written beside the manifest.
    pub outputs: BTreeMap<String, String>,
}

/// Parses `args` (program name first), runs the command, reports errors on
/// stderr and maps them to exit codes.
pub fn run<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error ({}): {e}", e.category());
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            ExitCode::from(e.exit_code())
        }
    }
}

pub fn execute(command: Command) -> Result<(), CliError> {
    match command {
        Command::Generate(a) => cmd_generate(&a.spec, &a.out, a.seed).map(|_| ()),
        Command::Baseline(a) => {
            run_command(CommandKind::Baseline, resolve(&a)?, &a.out).map(|_| ())
        }
        Command::Cross(a) => run_command(CommandKind::Cross, resolve(&a)?, &a.out).map(|_| ()),
        Command::Multi(a) => run_command(CommandKind::Multi, resolve(&a)?, &a.out).map(|_| ()),
        Command::AdaptTrace(a) => {
            run_command(CommandKind::AdaptTrace, resolve(&a)?, &a.out).map(|_| ())
        }
        Command::Rerun(a) => cmd_rerun(&a.manifest, &a.out).map(|_| ()),
    }
}

fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::File {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

fn write_file(dir: &Path, name: &str, contents: &[u8]) -> Result<String, CliError> {
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|e| CliError::File {
        path,
        message: e.to_string(),
    })?;
    Ok(hex::encode(Sha256::digest(contents)))
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::File {
        path: dir.to_path_buf(),
        message: e.to_string(),
    })
}

fn file_name_part(id: &str) -> String {
    id.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

/// Writes one CSV per synthetic corpus (`<id>.csv`) and, when the spec
/// declares its own emotion schemes, `labels.toml` for `--labels`.
pub fn cmd_generate(spec_path: &Path, out: &Path, seed: u64) -> Result<Vec<PathBuf>, CliError> {
    let spec = SyntheticSpec::load(spec_path)?;
    let corpora = spec.generate(seed)?;
    create_dir(out)?;
    let mut written = Vec::new();
    for c in &corpora {
        let mut buf = Vec::new();
        write_corpus(c, &mut buf)?;
        let name = format!("{}.csv", file_name_part(&c.id));
        write_file(out, &name, &buf)?;
        written.push(out.join(name));
    }
    let labels: BTreeMap<String, LabelScheme> = spec
        .corpora
        .iter()
        .filter_map(|c| c.emotions.clone().map(|e| (c.id.clone(), e)))
        .collect();
    if !labels.is_empty() {
        #[derive(Serialize)]
        struct LabelsFile<'a> {
            labels: &'a BTreeMap<String, LabelScheme>,
        }
        let text =
            toml::to_string(&LabelsFile { labels: &labels }).map_err(|e| CliError::File {
                path: out.join("labels.toml"),
                message: e.to_string(),
            })?;
        write_file(out, "labels.toml", text.as_bytes())?;
        written.push(out.join("labels.toml"));
    }
    Ok(written)
}

fn parse_toml<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    toml::from_str(&read_text(path)?).map_err(|e| CliError::File {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// Defaults, then the config file, then flags.
pub fn resolve(args: &RunArgs) -> Result<ExperimentConfig, CliError> {
    let mut cfg: ExperimentConfig = match &args.config {
        Some(p) => parse_toml(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(p) = &args.labels {
        #[derive(Deserialize)]
        struct LabelsFile {
            #[serde(default)]
            labels: BTreeMap<String, LabelScheme>,
        }
        let extra: LabelsFile = parse_toml(p)?;
        cfg.labels.extend(extra.labels);
    }
    if !args.source.is_empty() {
        cfg.sources = args.source.clone();
    }
    if args.target.is_some() {
        cfg.target = args.target.clone();
    }
    if let Some(s) = args.seed {
        cfg.eval.seed = s;
    }
    if let Some(c) = &args.condition {
        cfg.conditions = FeatureCondition::parse_set(c).map_err(CliError::Usage)?;
    }
    if let Some(e) = args.epochs {
        cfg.eval.autoencoder_training.epochs = e;
        cfg.eval.adaptation.epochs = e;
    }
    if let Some(d) = args.latent_dim {
        if d == 0 {
            return Err(CliError::Usage("--latent-dim must be positive".into()));
        }
        cfg.eval.autoencoder.latent_dim = d;
    }
    if let Some(f) = &args.folds {
        cfg.eval.folds = if f.eq_ignore_ascii_case("loso") {
            None
        } else {
            Some(f.parse().map_err(|_| {
                CliError::Usage(format!("--folds expects `loso` or a number, got {f:?}"))
            })?)
        };
    }
    if args.inductive {
        cfg.eval.transductive = false;
    }
    Ok(cfg)
}

fn load_inputs(
    cfg: &ExperimentConfig,
    paths: &[PathBuf],
) -> Result<(Vec<Corpus>, Vec<InputRecord>), CliError> {
    let mut schema = CorpusSchema::default();
    for (id, scheme) in &cfg.labels {
        schema.registry.register(id, scheme.clone());
    }
    let mut corpora = Vec::new();
    let mut records = Vec::new();
    for p in paths {
        let corpus = load_corpus(p, &schema)?;
        let bytes = fs::read(p).map_err(|e| CliError::File {
            path: p.clone(),
            message: e.to_string(),
        })?;
        records.push(InputRecord {
            path: p.clone(),
            corpus_id: corpus.id.clone(),
            file_sha256: hex::encode(Sha256::digest(&bytes)),
            corpus_fingerprint: corpus.fingerprint(),
        });
        corpora.push(corpus);
    }
    Ok((corpora, records))
}

fn label_audit_csv(outcomes: &[ExperimentOutcome]) -> String {
    let mut out = String::from("source,target,fold,role,purpose,count,granted\n");
    for o in outcomes {
        let Some(d) = o.reports.first().map(|r| &r.descriptor) else {
            continue;
        };
        for r in &o.label_log {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                d.source_label(),
                d.target,
                r.fold,
                serde_plain(&r.role),
                serde_plain(&r.purpose),
                r.count,
                r.granted
            ));
        }
    }
    out
}

fn serde_plain<T: Serialize>(v: &T) -> String {
    serde_json::to_value(v)
        .ok()
        .and_then(|v| v.as_str().map(str::to_string))
        .unwrap_or_default()
}

/// Runs an experiment command and writes its reports and manifest into
/// `out`. Returns the manifest.
pub fn run_command(
    kind: CommandKind,
    cfg: ExperimentConfig,
    out: &Path,
) -> Result<Manifest, CliError> {
    let mut cfg = cfg;
    if cfg.conditions.is_empty() {
        cfg.conditions = match kind {
            CommandKind::Baseline => vec![FeatureCondition::RawFeatures],
            _ => FeatureCondition::ALL.to_vec(),
        };
    }
    if cfg.sources.is_empty() {
        return Err(CliError::Usage("at least one --source is required".into()));
    }
    let needs_target = matches!(kind, CommandKind::Cross | CommandKind::AdaptTrace);
    if needs_target && cfg.target.is_none() {
        return Err(CliError::Usage("--target is required".into()));
    }
    if kind == CommandKind::AdaptTrace && cfg.sources.len() != 1 {
        return Err(CliError::Usage(
            "adapt-trace takes exactly one --source".into(),
        ));
    }
    if kind == CommandKind::Baseline && cfg.target.is_some() {
        return Err(CliError::Usage("baseline takes no --target".into()));
    }
    let mut paths = cfg.sources.clone();
    paths.extend(cfg.target.clone());
    let (corpora, inputs) = load_inputs(&cfg, &paths)?;
    let n_src = cfg.sources.len();
    let (sources, target) = corpora.split_at(n_src);

    let mut files: Vec<(String, Vec<u8>)> = Vec::new();
    match kind {
        CommandKind::AdaptTrace => {
            let history = trace_adaptation(&sources[0], &target[0], &cfg.eval, false)?.history;
            files.push(("adaptation.csv".into(), history.to_csv().into_bytes()));
        }
        _ => {
            let outcomes: Vec<ExperimentOutcome> = match kind {
                CommandKind::Baseline => sources
                    .iter()
                    .map(|c| run_baseline(c, &cfg.conditions, &cfg.eval))
                    .collect::<Result<_, _>>()?,
                CommandKind::Cross => sources
                    .iter()
                    .map(|s| run_cross_lingual(s, &target[0], &cfg.conditions, &cfg.eval))
                    .collect::<Result<_, _>>()?,
                _ => {
                    if corpora.len() < 2 {
                        return Err(CliError::Usage("multi needs at least 2 corpora".into()));
                    }
                    let held_out: Vec<&Corpus> = if target.is_empty() {
                        corpora.iter().collect()
                    } else {
                        vec![&target[0]]
                    };
                    held_out
                        .iter()
                        .map(|t| run_multilingual(&corpora, &t.id, &cfg.conditions, &cfg.eval))
                        .collect::<Result<_, _>>()?
                }
            };
            let reports: Vec<EvalReport> =
                outcomes.iter().flat_map(|o| o.reports.clone()).collect();
            files.push(("report.csv".into(), summary_csv(&reports).into_bytes()));
            files.push(("folds.csv".into(), folds_csv(&reports).into_bytes()));
            files.push(("table.txt".into(), summary_table(&reports).into_bytes()));
            files.push((
                "label_audit.csv".into(),
                label_audit_csv(&outcomes).into_bytes(),
            ));
            for o in &outcomes {
                let d = &o.reports[0].descriptor;
                for (fold, h) in &o.adaptation {
                    let name = format!(
                        "adaptation_{}_to_{}_fold{fold}.csv",
                        file_name_part(&d.source_label()),
                        file_name_part(&d.target)
                    );
                    files.push((name, h.to_csv().into_bytes()));
                }
            }
        }
    }

    create_dir(out)?;
    let mut outputs = BTreeMap::new();
    for (name, bytes) in &files {
        outputs.insert(name.clone(), write_file(out, name, bytes)?);
    }
    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME").to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        command: kind,
        config: cfg,
        inputs,
        outputs,
    };
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    write_file(out, MANIFEST_FILE, format!("{json}\n").as_bytes())?;
    if let Some(t) = files.iter().find(|(n, _)| n == "table.txt") {
        print!("{}", String::from_utf8_lossy(&t.1));
    }
    Ok(manifest)
}

/// Re-runs the experiment recorded in `manifest_path` into `out`, after
/// checking that the inputs still match, and fails unless every output is
/// byte-identical to the recorded one.
pub fn cmd_rerun(manifest_path: &Path, out: &Path) -> Result<Manifest, CliError> {
    let recorded: Manifest =
        serde_json::from_str(&read_text(manifest_path)?).map_err(|e| CliError::File {
            path: manifest_path.to_path_buf(),
            message: e.to_string(),
        })?;
    for input in &recorded.inputs {
        let bytes = fs::read(&input.path).map_err(|e| CliError::File {
            path: input.path.clone(),
            message: e.to_string(),
        })?;
        if hex::encode(Sha256::digest(&bytes)) != input.file_sha256 {
            return Err(CliError::File {
                path: input.path.clone(),
                message: "input changed since the manifest was written".into(),
            });
        }
    }
    let fresh = run_command(recorded.command, recorded.config.clone(), out)?;
    let differing: Vec<&String> = recorded
        .outputs
        .iter()
        .filter(|(name, hash)| fresh.outputs.get(*name) != Some(*hash))
        .map(|(name, _)| name)
        .chain(
            fresh
                .outputs
                .keys()
                .filter(|n| !recorded.outputs.contains_key(*n)),
        )
        .collect();
    if !differing.is_empty() {
        return Err(CliError::NotReproduced {
            manifest: manifest_path.to_path_buf(),
            detail: format!("outputs differ: {differing:?}"),
        });
    }
    Ok(fresh)
}
