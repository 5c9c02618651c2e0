//! Command-line surface for the `selfdenoise` binary.
//!
//! Every command reads and writes the JSON/CSV artifacts of the library
//! modules, stamps them with a `provenance` object (command line and seed),
//! and prints a one-line summary. Exit codes: 0 success, 1 validation
//! error, 2 I/O error, 3 numerical failure.

use std::path::{Path, PathBuf};

use clap::{ArgMatches, Args, CommandFactory, FromArgMatches, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::calibration::{calibrate_dataset, select_eta, SdConfig, DEFAULT_ETA_GRID};
use crate::consistency::{correlation_report, scatter_export, PoolingMode};
use crate::ensemble::{ee_calibrate, sd_then_ee, EnsembleMode, ModelPool};
use crate::error::{Error, Result};
use crate::graph::{generate_ba2motifs, load_dataset, save_dataset, Dataset, EdgeMask, GeneratorParams, SplitPart};
use crate::metrics::{self, EvalReport, ModelEval};
use crate::model::{load_model, save_model, train, AdaptConfig, ArchDescriptor, MaskMap, Objective, Preset, SiGnnModel, TrainConfig};
use crate::theory::{
    budget_report, cantelli_check, popoviciu_check, simulate_latent_model, simulate_re_explanation,
    simulated_correlation, simulation_rows, CtxDistribution, Law, SignalConfig, SimParams,
};

#[derive(Debug, Parser)]
#[command(name = "selfdenoise", version, about = "SI-GNN explanations, re-explanation diagnostics and self-denoising")]
#[command(args_override_self = true)]
pub struct Cli {
    /// Worker threads for internal parallelism.
    #[arg(long, global = true, default_value_t = 1)]
    pub threads: usize,

    /// JSON object of flag values for the chosen command; explicit flags win.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate the synthetic house/cycle motif dataset.
    GenData(GenDataArgs),
    /// Train an SI-GNN.
    Train(TrainArgs),
    /// Write the model's soft edge masks.
    Explain(ExplainArgs),
    /// Self-denoise explanations with a fixed eta.
    Sd(SdArgs),
    /// Select eta by adapted validation accuracy.
    SelectEta(SelectEtaArgs),
    /// Evaluate explanations (AUC, SPA, ACC, FID).
    Eval(EvalArgs),
    /// Correlate score variation with context variation.
    Correlate(CorrelateArgs),
    /// Budget bound, inequality checks and latent-signal simulation.
    Theory(TheoryArgs),
    /// Cross-model ensembling, optionally after self-denoising.
    Ensemble(EnsembleArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ObjectiveArg {
    Size,
    Kl,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum PresetArg {
    Desk,
    Paper,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SplitArg {
    Train,
    Val,
    Test,
}

impl From<SplitArg> for SplitPart {
    fn from(s: SplitArg) -> Self {
        match s {
            SplitArg::Train => SplitPart::Train,
            SplitArg::Val => SplitPart::Val,
            SplitArg::Test => SplitPart::Test,
        }
    }
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 500)]
    pub n_graphs: usize,
    #[arg(long, default_value_t = 20)]
    pub base_nodes: usize,
    #[arg(long, default_value_t = 4)]
    pub feature_dim: usize,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = ObjectiveArg::Kl)]
    pub objective: ObjectiveArg,
    #[arg(long, default_value_t = 0.05)]
    pub beta: f64,
    #[arg(long, default_value_t = 0.05)]
    pub r: f64,
    #[arg(long, default_value_t = 1.0)]
    pub tau: f64,
    #[arg(long, default_value_t = 200)]
    pub epochs: usize,
    #[arg(long, default_value_t = 5e-3)]
    pub lr: f64,
    /// Graphs per step; 0 means full batch.
    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,
    #[arg(long, value_enum, default_value_t = PresetArg::Desk)]
    pub preset: PresetArg,
    /// Optional path for the per-epoch training log.
    #[arg(long)]
    pub log: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExplainArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = SplitArg::Test)]
    pub split: SplitArg,
}

#[derive(Debug, Args)]
pub struct SdArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub model: PathBuf,
    /// Calibration report path.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 1.0)]
    pub eta: f64,
    #[arg(long, value_enum, default_value_t = SplitArg::Test)]
    pub split: SplitArg,
    /// Also write the calibrated masks here.
    #[arg(long)]
    pub masks_out: Option<PathBuf>,
    /// Adapt the classifier on calibrated training masks and save it here.
    #[arg(long)]
    pub adapted_out: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    pub adapt_epochs: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct SelectEtaArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Comma-separated candidates; must contain 0.
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_ETA_GRID.to_vec())]
    pub eta_grid: Vec<f64>,
    #[arg(long, default_value_t = 10)]
    pub adapt_epochs: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Save the classifier-adapted model for the chosen eta here.
    #[arg(long)]
    pub adapted_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// One or more model files, comma-separated.
    #[arg(long, value_delimiter = ',', required = true)]
    pub model: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Masks file from `explain` or `sd --masks-out` (single model only).
    #[arg(long)]
    pub masks: Option<PathBuf>,
    /// Self-denoise each model's masks with this eta before evaluating.
    #[arg(long)]
    pub eta: Option<f64>,
    #[arg(long, value_enum, default_value_t = SplitArg::Test)]
    pub split: SplitArg,
    /// Pool AUC per graph instead of over the split.
    #[arg(long)]
    pub per_graph_auc: bool,
}

#[derive(Debug, Args)]
pub struct CorrelateArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Optional scatter CSV path.
    #[arg(long)]
    pub scatter: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = SplitArg::Test)]
    pub split: SplitArg,
    /// Average per-graph coefficients instead of pooling edges.
    #[arg(long)]
    pub per_graph: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum PropArg {
    /// Explanation-budget bound with a Monte Carlo check.
    #[value(name = "1")]
    Budget,
    Popoviciu,
    Cantelli,
    /// Latent-signal re-explanation simulation.
    Sim,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum CtxArg {
    Uniform,
    Beta,
}

#[derive(Debug, Args)]
pub struct TheoryArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = PropArg::Budget)]
    pub prop: PropArg,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 10_000)]
    pub trials: usize,
    #[arg(long, default_value_t = 0.5)]
    pub q: f64,
    #[arg(long, default_value_t = 10)]
    pub n_pos: usize,
    #[arg(long, default_value_t = 10)]
    pub n_neg: usize,
    #[arg(long, default_value_t = 100)]
    pub n_ctx: usize,
    #[arg(long, default_value_t = 0.8)]
    pub x_plus: f64,
    #[arg(long, default_value_t = 0.2)]
    pub x_minus: f64,
    #[arg(long, default_value_t = 0.9)]
    pub mu_p: f64,
    #[arg(long, default_value_t = 0.05)]
    pub mu_n: f64,
    #[arg(long, default_value_t = 0.5)]
    pub mu_c: f64,
    #[arg(long, value_enum, default_value_t = CtxArg::Uniform)]
    pub ctx: CtxArg,
    /// Uniform half width or Beta concentration.
    #[arg(long, default_value_t = 0.5)]
    pub ctx_param: f64,
    /// Tail offset for the Cantelli check.
    #[arg(long, default_value_t = 0.25)]
    pub a: f64,
    /// Dataset hosting the simulation (generated when absent).
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long, default_value_t = 100)]
    pub n_graphs: usize,
    /// Share of non-motif edges given a negative signal in the simulation.
    #[arg(long, default_value_t = 0.5)]
    pub neg_fraction: f64,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ModeArg {
    Ee,
    #[value(name = "sd+ee")]
    SdEe,
}

#[derive(Debug, Args)]
pub struct EnsembleArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Pool members, comma-separated; trains `--pool` models when absent.
    #[arg(long, value_delimiter = ',')]
    pub model: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 5)]
    pub pool: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1.0)]
    pub lambda: f64,
    #[arg(long, default_value_t = 1.0)]
    pub eta: f64,
    #[arg(long, value_enum, default_value_t = ModeArg::SdEe)]
    pub mode: ModeArg,
    #[arg(long, default_value_t = 200)]
    pub epochs: usize,
    #[arg(long, value_enum, default_value_t = SplitArg::Test)]
    pub split: SplitArg,
}

/// Per-graph masks as written by `explain` and `sd`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskFile {
    pub version: u32,
    pub masks: Vec<MaskEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskEntry {
    pub graph_id: usize,
    pub scores: Vec<f64>,
}

impl MaskFile {
    fn from_map(masks: &MaskMap, provenance: Value) -> Self {
        Self {
            version: 1,
            masks: masks
                .iter()
                .map(|(&graph_id, m)| MaskEntry {
                    graph_id,
                    scores: m.values().to_vec(),
                })
                .collect(),
            provenance: Some(provenance),
        }
    }

    fn into_map(self) -> Result<MaskMap> {
        self.masks
            .into_iter()
            .map(|e| Ok((e.graph_id, EdgeMask::new(e.scores)?)))
            .collect()
    }
}

struct Ctx {
    command_line: Vec<String>,
}

impl Ctx {
    fn provenance(&self, seed: Option<u64>) -> Value {
        json!({
            "command_line": self.command_line,
            "seed": seed,
            "tool": concat!("selfdenoise ", env!("CARGO_PKG_VERSION")),
        })
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Parse {
        record: path.display().to_string(),
        message: e.to_string(),
    })?;
    std::fs::write(path, text + "\n")?;
    Ok(())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        record: path.display().to_string(),
        message: e.to_string(),
    })
}

fn flag_error(flag: &str, msg: impl std::fmt::Display) -> Error {
    Error::Config(format!("--{flag}: {msg}"))
}

fn check_nonneg(flag: &str, v: f64) -> Result<()> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(flag_error(flag, format!("must be a finite value >= 0, got {v}")))
    }
}

fn check_positive(flag: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(flag_error(flag, format!("must be > 0, got {v}")))
    }
}

fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Io(_) => 2,
        Error::Divergence { .. } => 3,
        _ => 1,
    }
}

/// Converts a config-file value into command-line tokens for `key`.
fn config_tokens(key: &str, value: &Value) -> Result<Vec<String>> {
    let flag = format!("--{}", key.replace('_', "-"));
    let scalar = |v: &Value| -> Result<String> {
        match v {
            Value::String(s) => Ok(s.clone()),
            Value::Number(n) => Ok(n.to_string()),
            other => Err(Error::config(format!("config key `{key}`: unsupported value {other}"))),
        }
    };
    Ok(match value {
        Value::Bool(true) => vec![flag],
        Value::Bool(false) | Value::Null => vec![],
        Value::Array(items) => {
            let parts = items.iter().map(scalar).collect::<Result<Vec<_>>>()?;
            vec![flag, parts.join(",")]
        }
        v => vec![flag, scalar(v)?],
    })
}

/// Inserts config-file values right after the subcommand name so that
/// explicit flags, which come later, override them.
fn merge_config(args: &[String], matches: &ArgMatches) -> Result<Option<Vec<String>>> {
    let Some(path) = matches.get_one::<PathBuf>("config") else {
        return Ok(None);
    };
    let Some((sub_name, _)) = matches.subcommand() else {
        return Ok(None);
    };
    let value: Value = read_json(path)?;
    let Value::Object(map) = value else {
        return Err(Error::config(format!("config file {} must hold a JSON object", path.display())));
    };
    let cmd = Cli::command();
    let sub = cmd
        .find_subcommand(sub_name)
        .ok_or_else(|| Error::config(format!("unknown command {sub_name}")))?;
    let known: Vec<String> = sub
        .get_arguments()
        .map(|a| a.get_id().as_str().to_string())
        .collect();
    let mut tokens = Vec::new();
    for (key, v) in &map {
        let id = key.replace('-', "_");
        if id == "config" || !known.contains(&id) {
            return Err(Error::config(format!("config key `{key}` is not a flag of `{sub_name}`")));
        }
        tokens.extend(config_tokens(&id, v)?);
    }
    let pos = args
        .iter()
        .position(|a| a == sub_name)
        .ok_or_else(|| Error::config("subcommand not found on the command line"))?;
    let mut merged = args[..=pos].to_vec();
    merged.extend(tokens);
    merged.extend_from_slice(&args[pos + 1..]);
    Ok(Some(merged))
}

/// Negative numbers parse as values so range checks can name the flag.
fn command() -> clap::Command {
    Cli::command().mut_subcommands(|s| s.allow_negative_numbers(true))
}

fn parse(args: &[String]) -> std::result::Result<Cli, i32> {
    let report = |e: clap::Error| {
        let code = match e.kind() {
            clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
            _ => 1,
        };
        let _ = e.print();
        code
    };
    let matches = command().try_get_matches_from(args).map_err(report)?;
    let matches = match merge_config(args, &matches) {
        Ok(Some(merged)) => command().try_get_matches_from(&merged).map_err(report)?,
        Ok(None) => matches,
        Err(e) => {
            eprintln!("error: {e}");
            return Err(exit_code(&e));
        }
    };
    Cli::from_arg_matches(&matches).map_err(report)
}

/// Runs the CLI on `args` (including the program name) and returns the exit code.
pub fn run(args: Vec<String>) -> i32 {
    let cli = match parse(&args) {
        Ok(c) => c,
        Err(code) => return code,
    };
    if cli.threads == 0 {
        eprintln!("error: --threads must be >= 1");
        return 1;
    }
    let ctx = Ctx { command_line: args };
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return 1;
        }
    };
    match pool.install(|| dispatch(&ctx, cli.command)) {
        Ok(summary) => {
            println!("{summary}");
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn dispatch(ctx: &Ctx, command: Command) -> Result<String> {
    match command {
        Command::GenData(a) => cmd_gen_data(ctx, a),
        Command::Train(a) => cmd_train(ctx, a),
        Command::Explain(a) => cmd_explain(ctx, a),
        Command::Sd(a) => cmd_sd(ctx, a),
        Command::SelectEta(a) => cmd_select_eta(ctx, a),
        Command::Eval(a) => cmd_eval(ctx, a),
        Command::Correlate(a) => cmd_correlate(ctx, a),
        Command::Theory(a) => cmd_theory(ctx, a),
        Command::Ensemble(a) => cmd_ensemble(ctx, a),
    }
}

fn cmd_gen_data(ctx: &Ctx, a: GenDataArgs) -> Result<String> {
    let params = GeneratorParams {
        base_nodes: a.base_nodes,
        features: crate::graph::FeatureScheme::Ones { dim: a.feature_dim },
        ..Default::default()
    };
    let ds = generate_ba2motifs(a.n_graphs, a.seed, &params)?;
    save_dataset(&ds, &a.out, Some(&ctx.provenance(Some(a.seed))))?;
    Ok(format!(
        "gen-data: {} graphs (train {}, val {}, test {}) -> {}",
        ds.len(),
        ds.split().train.len(),
        ds.split().val.len(),
        ds.split().test.len(),
        a.out.display()
    ))
}

fn cmd_train(ctx: &Ctx, a: TrainArgs) -> Result<String> {
    check_nonneg("beta", a.beta)?;
    if !(a.r > 0.0 && a.r < 1.0) {
        return Err(flag_error("r", format!("must lie in (0, 1), got {}", a.r)));
    }
    check_positive("tau", a.tau)?;
    check_positive("lr", a.lr)?;
    if a.epochs == 0 {
        return Err(flag_error("epochs", "must be >= 1"));
    }
    let ds = load_dataset(&a.data)?;
    let preset = match a.preset {
        PresetArg::Desk => Preset::Desk,
        PresetArg::Paper => Preset::Paper,
    };
    let mut arch = ArchDescriptor::preset(preset, ds.graph(0).feature_dim(), ds.num_classes().max(2));
    arch.objective = match a.objective {
        ObjectiveArg::Size => Objective::SizeConstrained,
        ObjectiveArg::Kl => Objective::KlBernoulli,
    };
    arch.beta = a.beta;
    arch.prior_r = a.r;
    arch.tau = a.tau;
    let config = TrainConfig {
        epochs: a.epochs,
        lr: a.lr,
        seed: a.seed,
        batch_size: (a.batch_size > 0).then_some(a.batch_size),
        ..TrainConfig::new(arch)
    };
    let (model, log) = train(&ds, &config)?;
    save_model(&model, &a.out, Some(&ctx.provenance(Some(a.seed))))?;
    if let Some(path) = &a.log {
        write_json(
            path,
            &json!({"epochs": log.epochs, "selected_epoch": log.selected_epoch, "provenance": ctx.provenance(Some(a.seed))}),
        )?;
    }
    let last = log.selected().expect("epochs >= 1");
    let fmt = |v: Option<f64>| v.map_or("n/a".to_string(), |x| format!("{x:.4}"));
    Ok(format!(
        "train: {} epochs, kept epoch {}, loss {:.4}, val acc {}, val auc {} -> {}",
        log.epochs.len(),
        log.selected_epoch,
        last.train_loss,
        fmt(last.val_accuracy),
        fmt(last.val_auc),
        a.out.display()
    ))
}

fn cmd_explain(ctx: &Ctx, a: ExplainArgs) -> Result<String> {
    let ds = load_dataset(&a.data)?;
    let model = load_model(&a.model)?;
    let indices = ds.indices(a.split.into());
    let masks = metrics::model_masks(&model, &ds, indices)?;
    write_json(&a.out, &MaskFile::from_map(&masks, ctx.provenance(None)))?;
    Ok(format!("explain: {} graphs -> {}", masks.len(), a.out.display()))
}

fn cmd_sd(ctx: &Ctx, a: SdArgs) -> Result<String> {
    check_nonneg("eta", a.eta)?;
    let ds = load_dataset(&a.data)?;
    let model = load_model(&a.model)?;
    let adapt = AdaptConfig {
        epochs: a.adapt_epochs,
        seed: a.seed,
        ..Default::default()
    };
    let result = calibrate_dataset(
        &model,
        &ds,
        ds.indices(a.split.into()),
        a.eta,
        a.adapted_out.as_ref().map(|_| &adapt),
    )?;
    let mut report = result.report()?;
    report.provenance = Some(ctx.provenance(Some(a.seed)));
    write_json(&a.out, &report)?;
    if let Some(path) = &a.masks_out {
        write_json(path, &MaskFile::from_map(&result.masks(), ctx.provenance(Some(a.seed))))?;
    }
    if let (Some(path), Some(adapted)) = (&a.adapted_out, &result.adapted) {
        save_model(adapted, path, Some(&ctx.provenance(Some(a.seed))))?;
    }
    let n = report.graphs.len().max(1) as f64;
    let esc = report.graphs.iter().map(|g| g.esc).sum::<f64>() / n;
    let before = report.graphs.iter().map(|g| g.spa_before).sum::<f64>() / n;
    let after = report.graphs.iter().map(|g| g.spa_after).sum::<f64>() / n;
    Ok(format!(
        "sd: eta {}, {} graphs, mean esc {esc:.4}, spa {before:.4} -> {after:.4} -> {}",
        a.eta,
        report.graphs.len(),
        a.out.display()
    ))
}

fn cmd_select_eta(ctx: &Ctx, a: SelectEtaArgs) -> Result<String> {
    for &eta in &a.eta_grid {
        check_nonneg("eta-grid", eta)?;
    }
    if !a.eta_grid.contains(&0.0) {
        return Err(flag_error("eta-grid", "must contain 0"));
    }
    let ds = load_dataset(&a.data)?;
    let model = load_model(&a.model)?;
    let config = SdConfig {
        eta_grid: a.eta_grid.clone(),
        adapt: AdaptConfig {
            epochs: a.adapt_epochs,
            seed: a.seed,
            ..Default::default()
        },
    };
    let (mut report, adapted) = select_eta(&model, &ds, &config)?;
    report.provenance = Some(ctx.provenance(Some(a.seed)));
    write_json(&a.out, &report)?;
    if let Some(path) = &a.adapted_out {
        save_model(&adapted, path, Some(&ctx.provenance(Some(a.seed))))?;
    }
    Ok(format!(
        "select-eta: chosen eta {} (val acc {:?}) -> {}",
        report.chosen_eta,
        report.val_acc,
        a.out.display()
    ))
}

fn eval_one(model: &SiGnnModel, ds: &Dataset, indices: &[usize], masks: &MaskMap, per_graph_auc: bool, seed: u64) -> Result<ModelEval> {
    let (mut expl, pred) = metrics::evaluate(model, ds, indices, masks)?;
    if per_graph_auc {
        expl.auc = metrics::per_graph_auc(ds, indices, masks)?;
    }
    Ok(ModelEval::new(seed, expl, pred))
}

fn cmd_eval(ctx: &Ctx, a: EvalArgs) -> Result<String> {
    if let Some(eta) = a.eta {
        check_nonneg("eta", eta)?;
    }
    if a.masks.is_some() && a.model.len() != 1 {
        return Err(flag_error("masks", "needs exactly one --model"));
    }
    let ds = load_dataset(&a.data)?;
    let indices = ds.indices(a.split.into());
    let mut evals = Vec::with_capacity(a.model.len());
    for (k, path) in a.model.iter().enumerate() {
        let model = load_model(path)?;
        let masks = match (&a.masks, a.eta) {
            (Some(p), _) => read_json::<MaskFile>(p)?.into_map()?,
            (None, Some(eta)) => calibrate_dataset(&model, &ds, indices, eta, None)?.masks(),
            (None, None) => metrics::model_masks(&model, &ds, indices)?,
        };
        evals.push(eval_one(&model, &ds, indices, &masks, a.per_graph_auc, k as u64)?);
    }
    let mut report = EvalReport::from_fractions(a.data.display().to_string(), &evals);
    report.provenance = Some(ctx.provenance(None));
    write_json(&a.out, &report)?;
    let get = |k: &str| report.aggregate.get(k).map_or("n/a".into(), |m| format!("{:.2}±{:.2}", m.mean, m.std));
    Ok(format!(
        "eval: {} model(s), auc {}, spa {}, acc {}, fid- {}, fid+ {} -> {}",
        evals.len(),
        get("auc"),
        get("spa"),
        get("acc"),
        get("fid_minus"),
        get("fid_plus"),
        a.out.display()
    ))
}

fn cmd_correlate(ctx: &Ctx, a: CorrelateArgs) -> Result<String> {
    let ds = load_dataset(&a.data)?;
    let model = load_model(&a.model)?;
    let indices = ds.indices(a.split.into());
    let mode = if a.per_graph { PoolingMode::PerGraph } else { PoolingMode::Pooled };
    let report = correlation_report(&model, &ds, indices, mode)?;
    write_json(&a.out, &json!({"report": report, "provenance": ctx.provenance(None)}))?;
    if let Some(path) = &a.scatter {
        scatter_export(&model, &ds, indices, path)?;
    }
    let fmt = |v: Option<f64>| v.map_or("n/a".into(), |x| format!("{x:.3}"));
    Ok(format!(
        "correlate: pearson important {} / unimportant {} -> {}",
        fmt(report.important.pearson),
        fmt(report.unimportant.pearson),
        a.out.display()
    ))
}

fn cmd_theory(ctx: &Ctx, a: TheoryArgs) -> Result<String> {
    let prov = ctx.provenance(Some(a.seed));
    match a.prop {
        PropArg::Budget => {
            let config = SignalConfig {
                n_pos: a.n_pos,
                n_neg: a.n_neg,
                n_ctx: a.n_ctx,
                x_plus: a.x_plus,
                x_minus: a.x_minus,
                mu_p: a.mu_p,
                mu_n: a.mu_n,
                mu_c: a.mu_c,
                ctx: match a.ctx {
                    CtxArg::Uniform => CtxDistribution::Uniform { half_width: a.ctx_param },
                    CtxArg::Beta => CtxDistribution::Beta { concentration: a.ctx_param },
                },
            };
            let mut report = budget_report(&config, a.q, a.trials, a.seed)?;
            report.provenance = Some(prov);
            write_json(&a.out, &report)?;
            Ok(format!(
                "theory: q {} K_min {:.4} frequency {:.4} {} -> {}",
                report.q,
                report.k_min,
                report.frequency,
                if report.pass { "pass" } else { "FAIL" },
                a.out.display()
            ))
        }
        PropArg::Popoviciu => {
            let law = Law::Uniform { low: 0.0, high: 1.0 };
            let mut rng = crate::nn::RngStream::new(a.seed);
            let samples: Vec<f64> = (0..a.trials.max(2)).map(|_| law.sample(&mut rng)).collect();
            let check = popoviciu_check(&samples)?;
            write_json(&a.out, &json!({"check": check, "provenance": prov}))?;
            Ok(format!(
                "theory: popoviciu variance {:.5} <= {} {}",
                check.variance,
                check.bound,
                if check.pass { "pass" } else { "FAIL" }
            ))
        }
        PropArg::Cantelli => {
            let law = Law::Uniform { low: 0.0, high: 1.0 };
            let check = cantelli_check(&law, a.a, a.trials, a.seed)?;
            write_json(&a.out, &json!({"law": law, "a": a.a, "check": check, "provenance": prov}))?;
            Ok(format!(
                "theory: cantelli empirical {:.4} >= bound {:.4} {}",
                check.empirical,
                check.bound,
                if check.pass { "pass" } else { "FAIL" }
            ))
        }
        PropArg::Sim => {
            let ds = match &a.data {
                Some(p) => load_dataset(p)?,
                None => generate_ba2motifs(a.n_graphs, a.seed, &GeneratorParams::default())?,
            };
            let params = SimParams {
                plan: crate::theory::StatePlan::GroundTruth {
                    neg_fraction: a.neg_fraction,
                },
                x_plus: a.x_plus,
                x_minus: a.x_minus,
                ..Default::default()
            };
            let root = crate::nn::RngStream::new(a.seed);
            let mut rows = Vec::new();
            let mut sims = Vec::new();
            let mut records = Vec::new();
            for (i, g) in ds.graphs().iter().enumerate() {
                let sim = simulate_latent_model(g, &params, root.child(i as u64).seed())?;
                let rec = simulate_re_explanation(&sim)?;
                rows.extend(simulation_rows(i, g, &sim, &rec)?);
                sims.push(sim);
                records.push(rec);
            }
            let graphs: Vec<_> = ds.graphs().iter().collect();
            let corr = simulated_correlation(&graphs, &sims, &records)?;
            crate::consistency::write_scatter_csv(&a.out, &rows)?;
            let fmt = |v: Option<f64>| v.map_or("n/a".into(), |x| format!("{x:.3}"));
            Ok(format!(
                "theory: simulated {} graphs, pearson(ds, dc) context {} / signal {} -> {}",
                ds.len(),
                fmt(corr.context.pearson),
                fmt(corr.signal.pearson),
                a.out.display()
            ))
        }
    }
}

fn cmd_ensemble(ctx: &Ctx, a: EnsembleArgs) -> Result<String> {
    check_nonneg("lambda", a.lambda)?;
    check_nonneg("eta", a.eta)?;
    let ds = load_dataset(&a.data)?;
    let (models, seeds): (Vec<SiGnnModel>, Vec<u64>) = if a.model.is_empty() {
        if a.pool < 2 {
            return Err(flag_error("pool", "must be >= 2"));
        }
        let arch = ArchDescriptor::desk(ds.graph(0).feature_dim());
        (0..a.pool as u64)
            .map(|k| {
                let seed = a.seed + k;
                let cfg = TrainConfig {
                    epochs: a.epochs,
                    seed,
                    ..TrainConfig::new(arch.clone())
                };
                Ok((train(&ds, &cfg)?.0, seed))
            })
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .unzip()
    } else {
        let models = a.model.iter().map(|p| load_model(p)).collect::<Result<Vec<_>>>()?;
        let seeds = (0..models.len() as u64).collect();
        (models, seeds)
    };
    let pool = ModelPool::new(models, seeds)?;
    let indices = ds.indices(a.split.into());
    let mode = match a.mode {
        ModeArg::Ee => EnsembleMode::Ee,
        ModeArg::SdEe => EnsembleMode::SdThenEe,
    };
    let mut masks = MaskMap::new();
    for &gi in indices {
        let g = ds.graph(gi);
        let m = match mode {
            EnsembleMode::Ee => ee_calibrate(&pool, g, a.lambda)?,
            EnsembleMode::SdThenEe => sd_then_ee(&pool, g, a.eta, a.lambda)?,
        };
        masks.insert(gi, m);
    }
    let graphs: Vec<_> = indices.iter().map(|&gi| ds.graph(gi)).collect();
    let ordered: Vec<EdgeMask> = indices.iter().map(|gi| masks[gi].clone()).collect();
    let auc = if ds.has_ground_truth() {
        metrics::pooled_auc(&graphs, &ordered)?
    } else {
        None
    };
    let entries = indices
        .iter()
        .map(|gi| Ok(json!({"graph_id": gi, "spa_after": metrics::spa(&masks[gi])?})))
        .collect::<Result<Vec<_>>>()?;
    let report = json!({
        "mode": mode,
        "lambda": a.lambda,
        "eta": if mode == EnsembleMode::SdThenEe { Some(a.eta) } else { None },
        "pool_seeds": pool.seeds(),
        "approximation": "mean across models damped by cross-model standard deviation",
        "auc": auc,
        "graphs": entries,
        "provenance": ctx.provenance(Some(a.seed)),
    });
    write_json(&a.out, &report)?;
    Ok(format!(
        "ensemble: {} models, mode {}, auc {} -> {}",
        pool.len(),
        report["mode"].as_str().unwrap_or_default(),
        auc.map_or("n/a".into(), |x| format!("{x:.4}")),
        a.out.display()
    ))
}
