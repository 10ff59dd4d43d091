//! The `behavior-irl` command line: simulate, build-mdp, sbc, dbc, eval.
//!
//! Every command that writes into an output directory also writes
//! `manifest.json` holding the resolved configuration, the command arguments
//! and SHA-256 digests of all inputs and outputs. Passing that file back via
//! `--manifest` re-executes the run and reproduces the outputs byte for byte.

pub mod artifacts;
pub mod config;
pub mod svg;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use log::{info, warn};
use serde::{Deserialize, Serialize};

use crate::birl::TrajectoryDataset;
use crate::error::{Error, Result};
use crate::eval::{eval_static, eval_switched, Report, SwitchedEstimate};
use crate::mdp::Mdp;
use crate::mooc::{build_mdp, build_vocab, read_labels, run_sbc, EventLog, ExpertFeatures, FeatureSpec, StateActionVocab};
use crate::smdp::run_dbc;
use crate::synth::{preset, simulate, to_event_log, GroundTruth, Planted};
use artifacts::*;
pub use config::RunConfig;

#[derive(Debug, Parser)]
#[command(name = "behavior-irl", version, about = "Infer user behavior from event logs")]
pub struct Cli {
    /// Flat key-value TOML file of run settings.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Re-execute the run recorded in this manifest.
    #[arg(long, global = true, conflicts_with_all = ["config", "seed"])]
    pub manifest: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Option<Command>,
}

#[derive(Debug, Clone, PartialEq, Subcommand, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case")]
pub enum Command {
    /// Generate a synthetic event log with planted ground truth.
    Simulate(SimulateArgs),
    /// Build the empirical MDP from an event log.
    BuildMdp(LogArgs),
    /// Per-user reward inference followed by label propagation.
    Sbc(SbcArgs),
    /// Shared behavior modes and per-user mode sequences.
    Dbc(LogArgs),
    /// Score a run directory against a ground-truth sidecar.
    Eval(EvalArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Simulate(_) => "simulate",
            Command::BuildMdp(_) => "build-mdp",
            Command::Sbc(_) => "sbc",
            Command::Dbc(_) => "dbc",
            Command::Eval(_) => "eval",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct SimulateArgs {
    /// One of the built-in presets.
    #[arg(long)]
    pub preset: String,
    #[arg(long)]
    pub users: Option<usize>,
    #[arg(long)]
    pub steps: Option<usize>,
    /// Labeled users per class in `labels.csv` (static presets).
    #[arg(long, default_value_t = 2)]
    pub labels_per_class: usize,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct LogArgs {
    /// Event log, JSON Lines or CSV.
    #[arg(long)]
    pub log: PathBuf,
    /// Expert feature file; overrides the `features` config key.
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub features: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct SbcArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub input: LogArgs,
    /// CSV of known classes: user_id,class.
    #[arg(long)]
    pub labels: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct EvalArgs {
    /// Output directory of an sbc or dbc run.
    #[arg(long)]
    pub run: PathBuf,
    /// Ground-truth sidecar written by simulate.
    #[arg(long)]
    pub truth: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: Command,
    pub config: RunConfig,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
}

impl Manifest {
    pub fn read_path(path: &Path) -> Result<Self> {
        read_json(path)
    }

    /// Fails if any recorded input changed since the run.
    pub fn check_inputs(&self) -> Result<()> {
        for input in &self.inputs {
            let now = sha256_file(Path::new(&input.path))?;
            if now != input.sha256 {
                return Err(Error::Mismatch(format!(
                    "input {} changed since the recorded run (sha256 {} != {})",
                    input.path, now, input.sha256
                )));
            }
        }
        Ok(())
    }
}

/// Files a command read and wrote.
#[derive(Debug, Default)]
pub struct RunFiles {
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<String>,
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn feature_spec(cfg: &RunConfig, files: &mut RunFiles) -> Result<FeatureSpec> {
    match &cfg.features {
        Some(p) => {
            files.inputs.push(p.clone());
            Ok(FeatureSpec::Expert(ExpertFeatures::read_path(p)?))
        }
        None => Ok(FeatureSpec::Indicator),
    }
}

struct Problem {
    vocab: StateActionVocab,
    feature_names: Vec<String>,
    mdp: Mdp,
    data: TrajectoryDataset,
}

fn load_problem(cfg: &RunConfig, log_path: &Path, files: &mut RunFiles) -> Result<Problem> {
    files.inputs.push(log_path.to_path_buf());
    let log = EventLog::read_path(log_path)?;
    let vocab = build_vocab(&log)?;
    let spec = feature_spec(cfg, files)?;
    let (feature_names, _) = spec.table(&vocab)?;
    let (mdp, data) = build_mdp(&log, &vocab, &spec, cfg.discount, cfg.session_gap_ms)?;
    info!(
        "built MDP with {} states, {} actions, {} features from {} users",
        mdp.num_states(),
        mdp.num_actions(),
        mdp.feature_dim(),
        data.trajectories.len()
    );
    Ok(Problem {
        vocab,
        feature_names,
        mdp,
        data,
    })
}

/// Writes the event log, ground truth, feature file and (for static
/// presets) a label file.
pub fn cmd_simulate(cfg: &RunConfig, args: &SimulateArgs, out: &Path) -> Result<RunFiles> {
    let scenario = preset(&args.preset, args.users, args.steps, cfg.seed)?;
    let (data, truth) = simulate(&scenario)?;
    create_dir(out)?;
    let log = to_event_log(&scenario.world, &data, cfg.seed);
    let path = out.join(EVENTS_JSONL);
    let mut w = create(&path)?;
    log.write_jsonl(&mut w)?;
    std::io::Write::flush(&mut w).map_err(|e| Error::io(&path, e))?;
    write_json(&out.join(TRUTH_JSON), &truth)?;
    write_json(&out.join(FEATURES_JSON), &scenario.world.expert_features())?;
    write_json(&out.join(SCENARIO_JSON), &scenario)?;
    let mut outputs = vec![EVENTS_JSONL, TRUTH_JSON, FEATURES_JSON, SCENARIO_JSON];
    if let Planted::Static { users } = &scenario.planted {
        let mut per_class: BTreeMap<&str, usize> = BTreeMap::new();
        let labels: Vec<(String, String)> = users
            .iter()
            .filter(|u| {
                let n = per_class.entry(u.class.as_str()).or_default();
                *n += 1;
                *n <= args.labels_per_class
            })
            .map(|u| (u.user_id.clone(), u.class.clone()))
            .collect();
        write_labels(&out.join(LABELS_CSV), &labels)?;
        outputs.push(LABELS_CSV);
    }
    Ok(RunFiles {
        inputs: Vec::new(),
        outputs: outputs.into_iter().map(String::from).collect(),
    })
}

#[derive(Serialize)]
struct TrajectoryRecord<'a> {
    user_id: &'a str,
    steps: &'a [(usize, usize)],
}

pub fn cmd_build_mdp(cfg: &RunConfig, args: &LogArgs, out: &Path) -> Result<RunFiles> {
    let mut files = RunFiles::default();
    let p = load_problem(cfg, &args.log, &mut files)?;
    create_dir(out)?;
    write_json(&out.join(MDP_JSON), &p.mdp)?;
    write_json(&out.join(VOCAB_JSON), &p.vocab)?;
    let recs: Vec<TrajectoryRecord> = p
        .data
        .trajectories
        .iter()
        .map(|t| TrajectoryRecord {
            user_id: &t.user_id,
            steps: &t.steps,
        })
        .collect();
    write_jsonl(&out.join(TRAJECTORIES_JSONL), &recs)?;
    files.outputs = vec![MDP_JSON.into(), VOCAB_JSON.into(), TRAJECTORIES_JSONL.into()];
    Ok(files)
}

pub fn cmd_sbc(cfg: &RunConfig, args: &SbcArgs, out: &Path) -> Result<RunFiles> {
    let mut files = RunFiles::default();
    let p = load_problem(cfg, &args.input.log, &mut files)?;
    files.inputs.push(args.labels.clone());
    let known = read_labels(&args.labels)?;
    let sbc_cfg = cfg.sbc(p.mdp.feature_dim())?;
    let res = run_sbc(&p.mdp, &p.data, &known, &sbc_cfg)?;
    info!("label propagation kernel width {}", res.lp_sigma);

    create_dir(out)?;
    let thetas: Vec<UserThetaRow> = res
        .estimates
        .iter()
        .map(|e| UserThetaRow {
            user_id: e.user_id.clone(),
            theta: e.theta.clone(),
            acceptance_rate: e.acceptance_rate,
        })
        .collect();
    write_user_thetas(&out.join(THETAS_CSV), &p.feature_names, &thetas)?;
    let rows: Vec<ClassProbRow> = res
        .estimates
        .iter()
        .enumerate()
        .map(|(i, e)| ClassProbRow {
            user_id: e.user_id.clone(),
            probs: res.probs.row(i).to_vec(),
            label: res.classes[res.hard_labels[i]].clone(),
            labeled: known.contains_key(&e.user_id),
        })
        .collect();
    write_class_probs(&out.join(CLASS_PROBS_CSV), &res.classes, &rows)?;
    files.outputs = vec![THETAS_CSV.into(), CLASS_PROBS_CSV.into()];
    Ok(files)
}

pub fn cmd_dbc(cfg: &RunConfig, args: &LogArgs, out: &Path) -> Result<RunFiles> {
    let mut files = RunFiles::default();
    let p = load_problem(cfg, &args.log, &mut files)?;
    let dbc_cfg = cfg.dbc(p.mdp.feature_dim())?;
    let res = run_dbc(&p.mdp, &p.data, &dbc_cfg)?;

    create_dir(out)?;
    let records: Vec<ModeRecord> = p
        .data
        .trajectories
        .iter()
        .zip(res.sequences.iter().zip(&res.max_marginals))
        .map(|(t, (z, m))| ModeRecord {
            user_id: t.user_id.clone(),
            modes: z.0.clone(),
            max_marginals: m.clone(),
        })
        .collect();
    write_jsonl(&out.join(MODES_JSONL), &records)?;
    write_mode_thetas(&out.join(THETAS_CSV), &p.feature_names, &res.model.thetas)?;
    write_zeta(&out.join(ZETA_CSV), &res.model.zeta)?;
    write_timelines(&out.join(TIMELINES_CSV), &records)?;
    let mode_names: Vec<String> = (0..res.model.num_modes()).map(|k| format!("mode {k}")).collect();
    let panels: Vec<(&str, &[usize])> = records
        .iter()
        .take(cfg.timeline_users)
        .map(|r| (r.user_id.as_str(), r.modes.as_slice()))
        .collect();
    let svg_path = out.join(TIMELINES_SVG);
    std::fs::write(&svg_path, svg::timelines(&panels, &mode_names)).map_err(|e| Error::io(&svg_path, e))?;
    write_json(&out.join(MDP_JSON), &p.mdp)?;
    write_json(&out.join(VOCAB_JSON), &p.vocab)?;
    files.outputs = [MODES_JSONL, THETAS_CSV, ZETA_CSV, TIMELINES_CSV, TIMELINES_SVG, MDP_JSON, VOCAB_JSON]
        .into_iter()
        .map(String::from)
        .collect();
    Ok(files)
}

/// Scores a run directory; never writes into it.
pub fn cmd_eval(args: &EvalArgs) -> Result<(Report, RunFiles)> {
    let manifest_path = args.run.join(MANIFEST_JSON);
    let manifest = Manifest::read_path(&manifest_path)?;
    let truth = GroundTruth::read_path(&args.truth)?;
    let files = RunFiles {
        inputs: vec![manifest_path, args.truth.clone()],
        outputs: Vec::new(),
    };
    let report = match &manifest.command {
        Command::Sbc(_) => {
            let (_, rows) = read_class_probs(&args.run.join(CLASS_PROBS_CSV))?;
            let predicted: BTreeMap<String, String> =
                rows.iter().map(|r| (r.user_id.clone(), r.label.clone())).collect();
            Report::Static(eval_static(&predicted, &truth, Some(&labeled_users(&rows)))?)
        }
        Command::Dbc(_) => {
            let records: Vec<ModeRecord> = read_jsonl(&args.run.join(MODES_JSONL))?;
            let predicted: BTreeMap<String, Vec<usize>> =
                records.into_iter().map(|r| (r.user_id, r.modes)).collect();
            let mdp: Mdp = read_json(&args.run.join(MDP_JSON))?;
            let (_, thetas) = read_mode_thetas(&args.run.join(THETAS_CSV))?;
            let zeta = read_zeta(&args.run.join(ZETA_CSV))?;
            let comparable = truth.mode_thetas.iter().all(|t| t.dim() == mdp.feature_dim());
            if !comparable {
                warn!("planted and estimated weights live in different feature spaces; skipping policy agreement");
            }
            let estimate = comparable.then_some(SwitchedEstimate {
                mdp: &mdp,
                thetas: &thetas,
                zeta: &zeta,
            });
            Report::Switched(eval_switched(&predicted, &truth, estimate)?)
        }
        other => {
            return Err(Error::InvalidInput(format!(
                "{} holds a {} run; eval needs an sbc or dbc run",
                args.run.display(),
                other.name()
            )))
        }
    };
    Ok((report, files))
}

fn digest_all(paths: &[PathBuf]) -> Result<Vec<FileDigest>> {
    paths
        .iter()
        .map(|p| {
            Ok(FileDigest {
                path: p.display().to_string(),
                sha256: sha256_file(p)?,
            })
        })
        .collect()
}

/// Runs one command and writes its manifest. Returns the eval report, if any.
pub fn execute(command: &Command, cfg: &RunConfig, out: Option<&Path>) -> Result<Option<Report>> {
    cfg.validate()?;
    let mut cfg = cfg.clone();
    let mut command = command.clone();
    // A --features flag becomes part of the recorded configuration.
    match &mut command {
        Command::BuildMdp(a) | Command::Dbc(a) | Command::Sbc(SbcArgs { input: a, .. }) => {
            if let Some(f) = a.features.take() {
                cfg.features = Some(f);
            }
        }
        _ => {}
    }
    let default_out = PathBuf::from("out");
    let dir = out.unwrap_or(&default_out);
    let (report, files) = match &command {
        Command::Simulate(a) => (None, cmd_simulate(&cfg, a, dir)?),
        Command::BuildMdp(a) => (None, cmd_build_mdp(&cfg, a, dir)?),
        Command::Sbc(a) => (None, cmd_sbc(&cfg, a, dir)?),
        Command::Dbc(a) => (None, cmd_dbc(&cfg, a, dir)?),
        Command::Eval(a) => {
            let (report, files) = cmd_eval(a)?;
            if let Some(out) = out {
                create_dir(out)?;
                write_json(&out.join(REPORT_JSON), &report)?;
                let files = RunFiles {
                    outputs: vec![REPORT_JSON.into()],
                    ..files
                };
                (Some(report), files)
            } else {
                return Ok(Some(report));
            }
        }
    };
    let outputs: Vec<PathBuf> = files.outputs.iter().map(|f| dir.join(f)).collect();
    let mut output_digests = digest_all(&outputs)?;
    for (d, name) in output_digests.iter_mut().zip(&files.outputs) {
        d.path = name.clone();
    }
    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME").into(),
        version: env!("CARGO_PKG_VERSION").into(),
        command,
        config: cfg,
        inputs: digest_all(&files.inputs)?,
        outputs: output_digests,
    };
    write_json(&dir.join(MANIFEST_JSON), &manifest)?;
    Ok(report)
}

/// Resolves flags, config and manifest, then runs on a pool of the
/// requested size.
pub fn run(cli: Cli) -> Result<Option<Report>> {
    let (command, cfg, out) = match &cli.manifest {
        Some(path) => {
            if cli.command.is_some() {
                return Err(Error::Config("--manifest cannot be combined with a subcommand".into()));
            }
            let manifest = Manifest::read_path(path)?;
            manifest.check_inputs()?;
            let out = cli
                .out
                .clone()
                .or_else(|| path.parent().map(Path::to_path_buf));
            (manifest.command, manifest.config, out)
        }
        None => {
            let command = cli
                .command
                .clone()
                .ok_or_else(|| Error::Config("no subcommand given (see --help)".into()))?;
            let mut cfg = match &cli.config {
                Some(p) => RunConfig::load(p)?,
                None => RunConfig::default(),
            };
            if let Some(seed) = cli.seed {
                cfg.seed = seed;
            }
            (command, cfg, cli.out.clone())
        }
    };
    let mut cfg = cfg;
    if let Some(t) = cli.threads {
        cfg.threads = Some(t);
    }
    cfg.validate()?;
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(t) = cfg.threads {
        pool = pool.num_threads(t);
    }
    let pool = pool
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker threads: {e}")))?;
    pool.install(|| execute(&command, &cfg, out.as_deref()))
}

/// One-line JSON error record printed on failure.
pub fn error_line(e: &Error) -> String {
    serde_json::json!({ "error": { "kind": e.kind(), "message": e.to_string() } }).to_string()
}
