//! `cma` command-line tool: scoring, evaluation, sweeps, statistics and
//! synthetic benchmarks over CMAE embedding files.
//!
//! Every long flag can also come from a TOML file passed with `--config`,
//! one table per subcommand (`[score]`, `[sweep-k]`, `[stats.delta]`, ...).
//! Flags given on the command line win over the file. `CMA_SEED` overrides
//! every seed. Exit codes: 0 success, 1 usage, 2 data/format, 3 invariant.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use cma_ood::eval::{calibrate_threshold, evaluate, DEFAULT_TPR};
use cma_ood::experiments::{
    compare_mcm_cma, gen_synthetic, rank_agents, sweep_k, sweep_tau, AgentSet, Benchmark, OodSet,
    SynthSpec, DEFAULT_K_GRID, DEFAULT_TAU_GRID,
};
use cma_ood::io::{
    load_embeddings, manifest_path, read_length_samples, read_score_column, read_scores,
    render_report, render_scores, write_cmae, write_manifest, write_text, Manifest, ManifestKind,
    Report, ReportFormat,
};
use cma_ood::scoring::{check_records, score_batch};
use cma_ood::stats::{delta_hypothesis_check, length_study, DeltaParams, DeltaReport};
use cma_ood::{AgentRatio, ConceptBank, EmbeddingMatrix, Error, ScoreConfig, ScoreKind};

const SEED_ENV: &str = "CMA_SEED";

#[derive(Debug, Parser)]
#[command(
    name = "cma",
    version,
    about = "Zero-shot OOD detection with neutral-prompt agents"
)]
struct Cli {
    /// TOML file supplying defaults for any flag, one table per subcommand.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Score image embeddings against ID labels and optional agents.
    Score(ScoreArgs),
    /// FPR at a target TPR and AUROC from ID and OOD score files.
    Eval(EvalArgs),
    /// Threshold that keeps the target fraction of ID scores.
    Calibrate(CalibrateArgs),
    /// CMA metrics as a function of the agent ratio k = M/N.
    SweepK(SweepKArgs),
    /// CMA metrics as a function of the temperature.
    SweepTau(SweepTauArgs),
    /// Compare agent sets on the same benchmark.
    RankAgents(RankArgs),
    /// Score statistics.
    #[command(subcommand)]
    Stats(StatsCommand),
    /// Write a synthetic benchmark as CMAE files with manifests.
    Synth(SynthArgs),
    /// MCM versus CMA on a benchmark.
    Bench(BenchArgs),
}

#[derive(Debug, Subcommand)]
enum StatsCommand {
    /// Regress scores on prompt length.
    LengthReg(LengthRegArgs),
    /// Score changes from adding agents, with the hypothesis check when OOD
    /// scores are given.
    Delta(DeltaArgs),
}

#[derive(Debug, Args)]
struct OutArgs {
    /// Output path; stdout when absent.
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
    /// Report format (json or csv); inferred from --out when absent.
    #[arg(long)]
    format: Option<String>,
}

#[derive(Debug, Args)]
struct ScoreArgs {
    /// Image embeddings (CMAE).
    #[arg(long, value_name = "PATH")]
    images: PathBuf,
    /// ID label embeddings (CMAE with an id_text manifest).
    #[arg(long, value_name = "PATH")]
    id: PathBuf,
    /// Agent embeddings (CMAE).
    #[arg(long, value_name = "PATH")]
    agents: Option<PathBuf>,
    #[arg(long, default_value_t = 1.0)]
    tau: f64,
    /// Scores CSV path; stdout when absent.
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long, value_name = "PATH")]
    id_scores: PathBuf,
    #[arg(long, value_name = "PATH")]
    ood_scores: PathBuf,
    #[arg(long, default_value_t = DEFAULT_TPR)]
    tpr: f64,
    /// Score column to read from scores CSVs.
    #[arg(long, default_value = "s_cma")]
    column: ScoreKind,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Debug, Args)]
struct CalibrateArgs {
    #[arg(long, value_name = "PATH")]
    id_scores: PathBuf,
    #[arg(long, default_value_t = DEFAULT_TPR)]
    tpr: f64,
    #[arg(long, default_value = "s_cma")]
    column: ScoreKind,
}

/// Where the benchmark comes from: a synthetic spec (the bundled reference
/// when nothing is given) or CMAE files.
#[derive(Debug, Args)]
struct DataArgs {
    /// Synthetic benchmark spec (TOML).
    #[arg(long, value_name = "PATH", conflicts_with_all = ["id", "id_images"])]
    spec: Option<PathBuf>,
    /// ID label embeddings (CMAE with an id_text manifest).
    #[arg(long, value_name = "PATH", requires_all = ["id_images", "ood"])]
    id: Option<PathBuf>,
    /// Agent pool embeddings (CMAE).
    #[arg(long, value_name = "PATH")]
    agents: Option<PathBuf>,
    /// ID image embeddings (CMAE).
    #[arg(long, value_name = "PATH")]
    id_images: Option<PathBuf>,
    /// OOD image set, `name=path` or `path` (named after the file stem).
    #[arg(long, value_name = "NAME=PATH", value_parser = parse_named)]
    ood: Vec<(String, PathBuf)>,
    /// Seed for synthetic data and agent subsampling.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct SweepKArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Agent ratios to evaluate.
    #[arg(long, value_delimiter = ',')]
    ks: Vec<f64>,
    #[arg(long, default_value_t = 1.0)]
    tau: f64,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Debug, Args)]
struct SweepTauArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Temperatures to evaluate.
    #[arg(long, value_delimiter = ',')]
    taus: Vec<f64>,
    /// Subsample the agent pool to k*N agents (synthetic data default: 1).
    #[arg(long)]
    k: Option<f64>,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Debug, Args)]
struct RankArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Agent set, `name=path` or `path`; at least two.
    #[arg(long, value_name = "NAME=PATH", value_parser = parse_named)]
    sets: Vec<(String, PathBuf)>,
    #[arg(long, default_value_t = 1.0)]
    tau: f64,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Debug, Args)]
struct LengthRegArgs {
    /// CSV with a score column and a length or prompt column, optionally a
    /// group column.
    #[arg(long, value_name = "PATH")]
    pairs: PathBuf,
    /// Inclusive length range `lo,hi`.
    #[arg(long, value_parser = parse_range, default_value = "0,4294967295")]
    range: [u32; 2],
    /// Two-sided critical value; rows report whether |t| exceeds it.
    #[arg(long)]
    t_crit: Option<f64>,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Debug, Args)]
struct DeltaArgs {
    /// ID scores without agents (scores CSV or bare list).
    #[arg(long, value_name = "PATH")]
    base: PathBuf,
    /// ID scores with agents, same images in the same order.
    #[arg(long, value_name = "PATH")]
    with: PathBuf,
    /// OOD scores without agents.
    #[arg(long, value_name = "PATH", requires = "ood_with")]
    ood_base: Option<PathBuf>,
    /// OOD scores with agents.
    #[arg(long, value_name = "PATH", requires = "ood_base")]
    ood_with: Option<PathBuf>,
    #[arg(long, default_value = "s_cma")]
    column: ScoreKind,
    #[arg(long, default_value_t = 0.05)]
    eps: f64,
    #[arg(long, default_value_t = 0.05)]
    delta: f64,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[arg(long, default_value_t = 0.05)]
    beta: f64,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// Spec (TOML); the bundled reference when absent.
    #[arg(long, value_name = "PATH")]
    spec: Option<PathBuf>,
    #[arg(long, value_name = "DIR")]
    out_dir: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct BenchArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Subsample the agent pool to k*N agents (synthetic data default: 1).
    #[arg(long)]
    k: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    tau: f64,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Data(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Data(e)
    }
}

type CliResult<T = ()> = std::result::Result<T, Failure>;

fn parse_named(s: &str) -> std::result::Result<(String, PathBuf), String> {
    match s.split_once('=') {
        Some((name, path)) if !name.is_empty() && !path.is_empty() => {
            Ok((name.to_string(), PathBuf::from(path)))
        }
        Some(_) => Err(format!("expected NAME=PATH, got {s:?}")),
        None => {
            let path = PathBuf::from(s);
            let name = path
                .file_stem()
                .and_then(|n| n.to_str())
                .ok_or_else(|| format!("cannot name set from {s:?}"))?
                .to_string();
            Ok((name, path))
        }
    }
}

fn parse_range(s: &str) -> std::result::Result<[u32; 2], String> {
    let (lo, hi) = s
        .split_once(',')
        .ok_or_else(|| format!("expected lo,hi, got {s:?}"))?;
    let p = |x: &str| x.trim().parse::<u32>().map_err(|e| format!("{x:?}: {e}"));
    let (lo, hi) = (p(lo)?, p(hi)?);
    if lo > hi {
        return Err(format!("empty range {lo},{hi}"));
    }
    Ok([lo, hi])
}

/// Subcommand path of `argv`, e.g. `["stats", "delta"]`.
fn command_path(argv: &[OsString]) -> Vec<String> {
    let mut path = Vec::new();
    let mut skip_next = false;
    for arg in argv.iter().skip(1) {
        let Some(a) = arg.to_str() else { break };
        if skip_next {
            skip_next = false;
            continue;
        }
        if a == "--config" {
            skip_next = true;
        } else if a.starts_with('-') {
            break;
        } else {
            path.push(a.to_string());
            if a != "stats" {
                break;
            }
        }
    }
    path
}

fn config_path(argv: &[OsString]) -> Option<PathBuf> {
    let mut it = argv.iter().skip(1);
    while let Some(a) = it.next() {
        let a = a.to_str()?;
        if a == "--config" {
            return it.next().map(PathBuf::from);
        }
        if let Some(p) = a.strip_prefix("--config=") {
            return Some(PathBuf::from(p));
        }
    }
    None
}

fn toml_scalar(v: &toml::Value) -> Option<String> {
    match v {
        toml::Value::String(s) => Some(s.clone()),
        toml::Value::Integer(i) => Some(i.to_string()),
        toml::Value::Float(f) => Some(f.to_string()),
        _ => None,
    }
}

/// Append flags from the config table of the invoked subcommand that are
/// not already on the command line.
fn merge_config(argv: Vec<OsString>) -> CliResult<Vec<OsString>> {
    let Some(path) = config_path(&argv) else {
        return Ok(argv);
    };
    let text = fs::read_to_string(&path)
        .map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    let root: toml::Table = text
        .parse()
        .map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    let mut table = &root;
    for name in command_path(&argv) {
        match table.get(&name) {
            Some(toml::Value::Table(t)) => table = t,
            _ => return Ok(argv),
        }
    }
    let given = |flag: &str| {
        argv.iter().any(|a| {
            a.to_str()
                .is_some_and(|a| a == flag || a.starts_with(&format!("{flag}=")))
        })
    };
    let mut extra: Vec<OsString> = Vec::new();
    for (key, value) in table {
        let flag = format!("--{}", key.replace('_', "-"));
        if given(&flag) {
            continue;
        }
        let bad = || Failure::Usage(format!("config key {key:?}: unsupported value {value}"));
        match value {
            toml::Value::Boolean(true) => extra.push(flag.into()),
            toml::Value::Boolean(false) => {}
            toml::Value::Array(items) => {
                for item in items {
                    extra.push(flag.clone().into());
                    extra.push(toml_scalar(item).ok_or_else(bad)?.into());
                }
            }
            toml::Value::Table(named) => {
                for (name, item) in named {
                    let item = toml_scalar(item).ok_or_else(bad)?;
                    extra.push(flag.clone().into());
                    extra.push(format!("{name}={item}").into());
                }
            }
            other => {
                extra.push(flag.into());
                extra.push(toml_scalar(other).ok_or_else(bad)?.into());
            }
        }
    }
    let mut argv = argv;
    argv.extend(extra);
    Ok(argv)
}

fn env_seed() -> CliResult<Option<u64>> {
    match std::env::var(SEED_ENV) {
        Ok(s) => s
            .trim()
            .parse()
            .map(Some)
            .map_err(|e| Failure::Usage(format!("{SEED_ENV}={s:?}: {e}"))),
        Err(_) => Ok(None),
    }
}

fn emit(report: Report<'_>, out: &OutArgs) -> CliResult {
    let format = match (&out.format, &out.out) {
        (Some(f), _) => f.parse()?,
        (None, Some(p)) => ReportFormat::from_path(p)?,
        (None, None) => ReportFormat::Json,
    };
    let text = render_report(report, format);
    match &out.out {
        Some(p) => write_text(p, &text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn fallback_labels(prefix: &str, n: usize) -> Vec<String> {
    (0..n).map(|i| format!("{prefix}{i}")).collect()
}

fn load_labeled(path: &Path, prefix: &str) -> CliResult<(Vec<String>, EmbeddingMatrix)> {
    let (m, manifest) = load_embeddings(path)?;
    let labels = manifest
        .and_then(|m| m.labels)
        .unwrap_or_else(|| fallback_labels(prefix, m.rows()));
    Ok((labels, m))
}

fn load_bank(id: &Path, agents: Option<&Path>) -> CliResult<ConceptBank> {
    let (labels, id_m) = load_labeled(id, "id-")?;
    let bank = match agents {
        Some(a) => {
            let (texts, a_m) = load_labeled(a, "agent-")?;
            ConceptBank::new(labels, &id_m, texts, Some(&a_m))?
        }
        None => ConceptBank::id_only(labels, &id_m)?,
    };
    Ok(bank)
}

struct Loaded {
    bench: Benchmark,
    pool: ConceptBank,
    seed: u64,
    synthetic: bool,
}

fn load_spec(path: Option<&Path>, seed: Option<u64>) -> CliResult<SynthSpec> {
    let mut spec = match path {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| Error::Io {
                path: p.to_path_buf(),
                source: e,
            })?;
            SynthSpec::from_toml(&text)?
        }
        None => SynthSpec::reference(),
    };
    if let Some(s) = env_seed()?.or(seed) {
        spec.seed = s;
    }
    Ok(spec)
}

fn load_data(d: &DataArgs) -> CliResult<Loaded> {
    let Some(id) = &d.id else {
        if d.agents.is_some() || !d.ood.is_empty() {
            return Err(Failure::Usage(
                "--agents/--ood need --id and --id-images; use --spec for synthetic data".into(),
            ));
        }
        let spec = load_spec(d.spec.as_deref(), d.seed)?;
        let data = gen_synthetic(&spec)?;
        return Ok(Loaded {
            pool: data.bank()?,
            bench: data.benchmark,
            seed: spec.seed,
            synthetic: true,
        });
    };
    let pool = load_bank(id, d.agents.as_deref())?;
    let images_path = d.id_images.as_ref().expect("clap enforces --id-images");
    let (id_images, manifest) = load_embeddings(images_path)?;
    let id_truth = manifest.and_then(|m| m.labels).and_then(|labels| {
        labels
            .iter()
            .map(|l| pool.id_labels().iter().position(|x| x == l))
            .collect::<Option<Vec<usize>>>()
    });
    let ood_sets = d
        .ood
        .iter()
        .map(|(name, path)| {
            Ok(OodSet {
                name: name.clone(),
                images: load_embeddings(path)?.0,
            })
        })
        .collect::<cma_ood::Result<Vec<_>>>()?;
    Ok(Loaded {
        bench: Benchmark {
            id_images,
            id_truth,
            ood_sets,
        },
        pool,
        seed: env_seed()?.or(d.seed).unwrap_or(0),
        synthetic: false,
    })
}

/// The bank to evaluate: the whole pool, or a k*N subsample when asked for
/// (synthetic data defaults to k = 1).
fn working_bank(l: &Loaded, k: Option<f64>) -> CliResult<ConceptBank> {
    let k = k.or(l.synthetic.then_some(1.0));
    match k {
        Some(k) => Ok(l.pool.subsample_agents(AgentRatio::new(k)?, l.seed)?),
        None => Ok(l.pool.clone()),
    }
}

fn cmd_score(a: &ScoreArgs) -> CliResult {
    let bank = load_bank(&a.id, a.agents.as_deref())?;
    let (images, _) = load_embeddings(&a.images)?;
    let cfg = ScoreConfig::new(a.tau)?;
    let records = score_batch(&images, &bank, &cfg)?;
    check_records(&records, bank.n_id(), bank.n_agents())?;
    let text = render_scores(&records);
    match &a.out {
        Some(p) => write_text(p, &text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn cmd_eval(a: &EvalArgs) -> CliResult {
    let id = read_score_column(&a.id_scores, a.column.column())?;
    let ood = read_score_column(&a.ood_scores, a.column.column())?;
    emit(Report::Eval(&evaluate(&id, &ood, a.tpr)?), &a.out)
}

fn cmd_calibrate(a: &CalibrateArgs) -> CliResult {
    let id = read_score_column(&a.id_scores, a.column.column())?;
    let lambda = calibrate_threshold(&id, a.tpr)?;
    let report = json!({
        "threshold_lambda": lambda,
        "target_tpr": a.tpr,
        "n_id": id.len(),
    });
    println!(
        "{}",
        serde_json::to_string_pretty(&report).expect("json value serializes")
    );
    Ok(())
}

fn cmd_sweep_k(a: &SweepKArgs) -> CliResult {
    let l = load_data(&a.data)?;
    let ks = if a.ks.is_empty() {
        DEFAULT_K_GRID.to_vec()
    } else {
        a.ks.clone()
    };
    let rows = sweep_k(&l.bench, &l.pool, &ks, l.seed, &ScoreConfig::new(a.tau)?)?;
    emit(Report::Sweep(&rows), &a.out)
}

fn cmd_sweep_tau(a: &SweepTauArgs) -> CliResult {
    let l = load_data(&a.data)?;
    let bank = working_bank(&l, a.k)?;
    let taus = if a.taus.is_empty() {
        DEFAULT_TAU_GRID.to_vec()
    } else {
        a.taus.clone()
    };
    let rows = sweep_tau(&l.bench, &bank, &taus)?;
    emit(Report::Sweep(&rows), &a.out)
}

fn cmd_rank(a: &RankArgs) -> CliResult {
    if a.sets.len() < 2 {
        return Err(Failure::Usage(format!(
            "rank-agents needs at least two --sets, got {}",
            a.sets.len()
        )));
    }
    let l = load_data(&a.data)?;
    let sets = a
        .sets
        .iter()
        .map(|(name, path)| {
            let (texts, embeddings) = load_labeled(path, &format!("{name}-"))?;
            Ok(AgentSet {
                name: name.clone(),
                texts,
                embeddings,
            })
        })
        .collect::<CliResult<Vec<_>>>()?;
    let rows = rank_agents(&l.bench, &l.pool, &sets, &ScoreConfig::new(a.tau)?)?;
    emit(Report::Ranking(&rows), &a.out)
}

fn cmd_length_reg(a: &LengthRegArgs) -> CliResult {
    let samples = read_length_samples(&a.pairs)?;
    let study = length_study(&samples, a.range, a.t_crit)?;
    emit(Report::LengthStudy(&study), &a.out)
}

/// Per-image `with - base` deltas. Scores CSVs must list the same image
/// indices; bare lists are matched by position.
fn deltas(base: &Path, with: &Path, kind: ScoreKind) -> CliResult<Vec<f64>> {
    let b = read_score_column(base, kind.column())?;
    let w = read_score_column(with, kind.column())?;
    if b.len() != w.len() {
        return Err(Error::LengthMismatch {
            left: b.len(),
            right: w.len(),
        }
        .into());
    }
    if let (Ok(rb), Ok(rw)) = (read_scores(base), read_scores(with)) {
        if rb
            .iter()
            .zip(&rw)
            .any(|(x, y)| x.image_index != y.image_index || x.y_hat != y.y_hat)
        {
            return Err(Error::IdMismatch.into());
        }
    }
    Ok(b.iter().zip(&w).map(|(b, w)| w - b).collect())
}

fn cmd_delta(a: &DeltaArgs) -> CliResult {
    let params = DeltaParams {
        eps: a.eps,
        delta: a.delta,
        alpha: a.alpha,
        beta: a.beta,
    };
    let id = deltas(&a.base, &a.with, a.column)?;
    match (&a.ood_base, &a.ood_with) {
        (Some(ob), Some(ow)) => {
            let ood = deltas(ob, ow, a.column)?;
            let outcome = delta_hypothesis_check(id, ood, &params)?;
            emit(Report::Hypothesis(&outcome), &a.out)
        }
        _ => emit(Report::Delta(&DeltaReport::new(id, &params)?), &a.out),
    }
}

fn write_set(
    dir: &Path,
    stem: &str,
    m: &EmbeddingMatrix,
    kind: ManifestKind,
    labels: Option<Vec<String>>,
    seed: u64,
) -> CliResult {
    let path = dir.join(format!("{stem}.cmae"));
    write_cmae(m, &path)?;
    let manifest = Manifest {
        kind,
        labels,
        model: "synthetic".into(),
        normalized: true,
        seed: Some(seed),
    };
    write_manifest(&manifest, manifest_path(&path))?;
    Ok(())
}

fn cmd_synth(a: &SynthArgs) -> CliResult {
    let spec = load_spec(a.spec.as_deref(), a.seed)?;
    let data = gen_synthetic(&spec)?;
    let dir = &a.out_dir;
    fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.clone(),
        source: e,
    })?;
    let seed = spec.seed;
    write_set(
        dir,
        "id",
        &data.id_concepts,
        ManifestKind::IdText,
        Some(data.id_labels.clone()),
        seed,
    )?;
    if let Some(agents) = &data.agents {
        write_set(
            dir,
            "agents",
            agents,
            ManifestKind::AgentText,
            Some(data.agent_texts.clone()),
            seed,
        )?;
    }
    let bench = &data.benchmark;
    let truth = bench
        .id_truth
        .as_ref()
        .map(|t| t.iter().map(|&i| data.id_labels[i].clone()).collect());
    write_set(
        dir,
        "id_images",
        &bench.id_images,
        ManifestKind::Image,
        truth,
        seed,
    )?;
    for set in &bench.ood_sets {
        write_set(
            dir,
            &format!("ood_{}", set.name),
            &set.images,
            ManifestKind::Image,
            None,
            seed,
        )?;
    }
    let spec_text = toml::to_string(&spec).expect("spec serializes");
    write_text(dir.join("spec.toml"), &spec_text)?;
    Ok(())
}

fn cmd_bench(a: &BenchArgs) -> CliResult {
    let l = load_data(&a.data)?;
    let bank = working_bank(&l, a.k)?;
    let comparison = compare_mcm_cma(&l.bench, &bank, &ScoreConfig::new(a.tau)?)?;
    emit(Report::Comparison(&comparison), &a.out)
}

fn run(cli: &Cli) -> CliResult {
    match &cli.command {
        Command::Score(a) => cmd_score(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Calibrate(a) => cmd_calibrate(a),
        Command::SweepK(a) => cmd_sweep_k(a),
        Command::SweepTau(a) => cmd_sweep_tau(a),
        Command::RankAgents(a) => cmd_rank(a),
        Command::Stats(StatsCommand::LengthReg(a)) => cmd_length_reg(a),
        Command::Stats(StatsCommand::Delta(a)) => cmd_delta(a),
        Command::Synth(a) => cmd_synth(a),
        Command::Bench(a) => cmd_bench(a),
    }
}

fn fail(f: Failure) -> ExitCode {
    match f {
        Failure::Usage(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Failure::Data(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn main() -> ExitCode {
    let argv = match merge_config(std::env::args_os().collect()) {
        Ok(a) => a,
        Err(f) => return fail(f),
    };
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => fail(f),
    }
}
