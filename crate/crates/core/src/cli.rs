//! The `imgk` command line. Every run writes into its own output directory,
//! echoes its configuration there as `config.json`, and keeps an
//! `INCOMPLETE` marker until all outputs are written.
//!
//! Exit codes: 0 success, 1 computation failure, 2 usage or I/O error.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::embedding::{load_manifests, save_manifest, write_embeddings, DirStore, KEMB_EXTENSION};
use crate::ksearch::{dump_trace, format_trace, load_trace};
use crate::pipeline::{score_corpus, write_index_csv, write_jsonl, KValue, PipelineConfig};
use crate::stats::io::{read_exp1, read_exp2, write_exp1, write_exp2};
use crate::stats::{
    build_exp1_design, fit_fe_ols, fit_logit, report_table, FeSpec, KTerm, LogitOptions, ModelFit, OlsOptions, Outcome,
    ReportStyle, SeKind,
};
use crate::synth::{gen_choice_data, gen_image_set, gen_panel, ChoiceSpec, MixtureSpec, PanelSpec};
use crate::validate::{run_all, six_cluster_config, six_cluster_fixture, Scale};

pub const EXIT_OK: i32 = 0;
pub const EXIT_COMPUTE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const THREADS_ENV: &str = "IMGK_THREADS";
pub const INCOMPLETE_MARKER: &str = "INCOMPLETE";

#[derive(Debug, Parser)]
#[command(name = "imgk", version, about = "k-value of product image sets and the accompanying regressions")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Score image sets: stack patches, PCA, search k*.
    Score(ScoreArgs),
    /// Fit the choice logits (exp1) or fixed-effects panels (exp2).
    Regress(RegressArgs),
    /// Write synthetic data in the formats the other commands read.
    #[command(subcommand)]
    Synth(SynthCommand),
    /// Run the synthetic acceptance checks.
    Validate(ValidateArgs),
    /// Pretty-print a k-search trace CSV.
    Trace {
        /// Trace CSV written by `score` (its JSON sidecar is read too).
        path: PathBuf,
    },
    /// Re-run a command from a `config.json` echoed into an output directory.
    Replay {
        config: PathBuf,
        /// Output directory for the re-run.
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    /// Manifest JSON file or a directory of them.
    #[arg(long)]
    pub manifests: PathBuf,
    /// Directory of `<image_id>.kemb` files.
    #[arg(long)]
    pub store: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Pipeline config JSON; flags below override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Base seed of the k-means restarts.
    #[arg(long)]
    pub seed: Option<u64>,
    /// PCA components L.
    #[arg(long)]
    pub components: Option<usize>,
    #[arg(long)]
    pub k_min: Option<usize>,
    #[arg(long)]
    pub k_max: Option<usize>,
    #[arg(long)]
    pub step: Option<usize>,
    /// Grid points without improvement before stopping.
    #[arg(long)]
    pub patience: Option<usize>,
    /// k-means restarts per k.
    #[arg(long)]
    pub runs: Option<usize>,
    /// Worker threads (capped by IMGK_THREADS).
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Args)]
pub struct RegressArgs {
    /// Choice data (participant_id,product_id,y,k1,k2,x1_*,x2_*).
    #[arg(long, conflicts_with = "exp2", required_unless_present = "exp2")]
    pub exp1: Option<PathBuf>,
    /// Panel data (participant_id,product_id,brand_id,set_id,purchase,decision_time_s,k,price,n_images).
    #[arg(long)]
    pub exp2: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Standard-error estimator.
    #[arg(long, value_enum, default_value_t = SeKind::Classical)]
    pub se: SeKind,
}

#[derive(Debug, Subcommand)]
pub enum SynthCommand {
    /// A Gaussian-mixture image set as KEMB files plus a manifest.
    Mixture(MixtureArgs),
    /// The six-cluster scoring fixture with its config.
    Fixture {
        #[arg(long)]
        out: PathBuf,
    },
    /// Pairwise choice data as exp1 CSV.
    Choice(ChoiceArgs),
    /// A purchase panel as exp2 CSV.
    Panel(PanelArgs),
}

#[derive(Debug, Args, Serialize, Deserialize)]
pub struct MixtureArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value = "set0")]
    pub set_id: String,
    #[arg(long, default_value_t = 6)]
    pub k: usize,
    #[arg(long, default_value_t = 2)]
    pub images: usize,
    #[arg(long, default_value_t = 196)]
    pub patches: usize,
    #[arg(long, default_value_t = 64)]
    pub dim: usize,
    #[arg(long, default_value_t = 40.0)]
    pub center_scale: f64,
    #[arg(long, default_value_t = 1.0)]
    pub within_std: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args, Serialize, Deserialize)]
pub struct ChoiceArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 5000)]
    pub n: usize,
    /// How the k-values enter the generating logit.
    #[arg(long, value_enum, default_value_t = KTerm::Ratio)]
    pub term: KTerm,
    /// Comma-separated intercept, k-term and optionally nine control slopes.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_value = "0,1")]
    pub beta: Vec<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args, Serialize, Deserialize)]
pub struct PanelArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 996)]
    pub users: usize,
    #[arg(long, default_value_t = 10)]
    pub per_user: usize,
    /// Slopes on k/1000, price/1000 and n_images.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_value = "-0.18,-0.08,0.03")]
    pub beta: Vec<f64>,
    #[arg(long, default_value_t = 0.05)]
    pub fe_std: f64,
    #[arg(long, default_value_t = 1.0)]
    pub noise_std: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    /// Reduced replication counts.
    #[arg(long)]
    pub quick: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads (capped by IMGK_THREADS).
    #[arg(long)]
    pub threads: Option<usize>,
}

/// What a run did, echoed as `config.json` in its output directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "subcommand", rename_all = "snake_case")]
pub enum RunConfig {
    Score {
        manifests: PathBuf,
        store: PathBuf,
        pipeline: PipelineConfig,
        threads: usize,
    },
    Regress {
        exp1: Option<PathBuf>,
        exp2: Option<PathBuf>,
        se: SeKind,
    },
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Compute(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Compute(_) => EXIT_COMPUTE,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Compute(m) => f.write_str(m),
        }
    }
}

fn usage(e: impl std::fmt::Display) -> CliError {
    CliError::Usage(e.to_string())
}

fn compute(e: impl std::fmt::Display) -> CliError {
    CliError::Compute(e.to_string())
}

/// Requested threads, capped by `IMGK_THREADS`, defaulting to the CPU count.
pub fn effective_threads(requested: Option<usize>) -> Result<usize, CliError> {
    let cap = match std::env::var(THREADS_ENV) {
        Ok(v) => Some(
            v.trim()
                .parse::<usize>()
                .ok()
                .filter(|&t| t > 0)
                .ok_or_else(|| usage(format!("{THREADS_ENV} must be a positive integer, got {v:?}")))?,
        ),
        Err(_) => None,
    };
    let base = requested.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    Ok(cap.map_or(base, |c| base.min(c)).max(1))
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s
}

/// Creates the output directory, echoes the config and sets the marker.
fn start_run(out: &Path, config: &RunConfig) -> Result<(), CliError> {
    fs::create_dir_all(out).map_err(|e| usage(format!("cannot create {}: {e}", out.display())))?;
    write_file(&out.join(INCOMPLETE_MARKER), "run in progress or aborted\n")?;
    write_file(&out.join("config.json"), to_json(config))
}

fn finish_run(out: &Path) -> Result<(), CliError> {
    fs::remove_file(out.join(INCOMPLETE_MARKER)).map_err(|e| usage(format!("{}: {e}", out.display())))
}

fn pipeline_from_args(args: &ScoreArgs) -> Result<PipelineConfig, CliError> {
    let mut config = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| usage(format!("config {}: {e}", path.display())))?;
            serde_json::from_str::<PipelineConfig>(&text).map_err(|e| usage(format!("config {}: {e}", path.display())))?
        }
        None => PipelineConfig::default(),
    };
    let s = &mut config.search;
    if let Some(v) = args.seed {
        s.base_seed = v;
    }
    if let Some(v) = args.k_min {
        s.k_min = v;
    }
    if args.k_max.is_some() {
        s.k_max = args.k_max;
    }
    if let Some(v) = args.step {
        s.step = v;
    }
    if let Some(v) = args.patience {
        s.patience = v;
    }
    if let Some(v) = args.runs {
        s.n_runs = v;
    }
    if let Some(v) = args.components {
        config.n_components = v;
    }
    config.search.validate().map_err(usage)?;
    if config.n_components == 0 {
        return Err(usage("components must be at least 1"));
    }
    Ok(config)
}

pub fn cmd_score(args: &ScoreArgs) -> Result<(), CliError> {
    let pipeline = pipeline_from_args(args)?;
    let threads = effective_threads(args.threads)?;
    run_score(&args.manifests, &args.store, &args.out, pipeline, threads)
}

fn sanitize(set_id: &str) -> String {
    set_id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || "-_.".contains(c) { c } else { '_' })
        .collect()
}

fn run_score(manifests: &Path, store: &Path, out: &Path, pipeline: PipelineConfig, threads: usize) -> Result<(), CliError> {
    if !manifests.exists() {
        return Err(usage(format!("manifests not found: {}", manifests.display())));
    }
    if !store.is_dir() {
        return Err(usage(format!("store not found: {}", store.display())));
    }
    let sets = load_manifests(manifests).map_err(usage)?;
    let config = RunConfig::Score {
        manifests: manifests.to_path_buf(),
        store: store.to_path_buf(),
        pipeline: pipeline.clone(),
        threads,
    };
    start_run(out, &config)?;
    let results = score_corpus(&sets, &DirStore::new(store), &pipeline, threads).map_err(compute)?;

    let traces = out.join("traces");
    fs::create_dir_all(&traces).map_err(usage)?;
    let mut scored: Vec<KValue> = Vec::new();
    let mut failures = csv::Writer::from_path(out.join("failures.csv")).map_err(usage)?;
    failures.write_record(["set_id", "stage", "error"]).map_err(usage)?;
    for r in results {
        match r {
            Ok(v) => {
                dump_trace(&v.search, traces.join(format!("{}.csv", sanitize(&v.set_id)))).map_err(usage)?;
                println!("{}\tk*={}\tL={}\tcumvar={:.4}", v.set_id, v.k_star, v.l_eff, v.pca_cumvar_at_l);
                scored.push(v);
            }
            Err(e) => {
                eprintln!("failed: {e}");
                failures
                    .write_record([e.set_id(), e.stage(), &e.to_string()])
                    .map_err(usage)?;
            }
        }
    }
    failures.flush().map_err(usage)?;
    write_jsonl(&scored, &out.join("kvalues.jsonl")).map_err(usage)?;
    write_index_csv(&scored, &out.join("index.csv")).map_err(usage)?;
    finish_run(out)?;
    let failed = sets.len() - scored.len();
    if failed > 0 {
        return Err(compute(format!("{failed} of {} sets failed; see failures.csv", sets.len())));
    }
    Ok(())
}

pub fn cmd_regress(args: &RegressArgs) -> Result<(), CliError> {
    run_regress(args.exp1.as_deref(), args.exp2.as_deref(), args.se, &args.out)
}

fn exp1_fits(path: &Path, se: SeKind) -> Result<Vec<ModelFit>, CliError> {
    let loaded = read_exp1(path).map_err(usage)?;
    let options = LogitOptions {
        se,
        ..Default::default()
    };
    let mut fits = Vec::new();
    for term in [KTerm::Diff, KTerm::Ratio] {
        for controls in [false, true] {
            let mut design = build_exp1_design(&loaded.rows, term, controls).map_err(compute)?;
            design.dropped_rows = loaded.dropped;
            fits.push(fit_logit(&design, &options).map_err(compute)?);
        }
    }
    Ok(fits)
}

fn exp2_fits(path: &Path, se: SeKind) -> Result<Vec<ModelFit>, CliError> {
    let loaded = read_exp2(path).map_err(usage)?;
    let options = OlsOptions { se };
    let specs = [
        FeSpec::default(),
        FeSpec {
            brand_fe: true,
            user_fe: false,
        },
        FeSpec {
            brand_fe: true,
            user_fe: true,
        },
    ];
    let mut fits = Vec::new();
    for outcome in [Outcome::Purchase, Outcome::DecisionTime] {
        for spec in specs {
            let mut fit = fit_fe_ols(&loaded.rows, outcome, spec, &options).map_err(compute)?;
            fit.dropped_rows = loaded.dropped;
            fits.push(fit);
        }
    }
    Ok(fits)
}

fn run_regress(exp1: Option<&Path>, exp2: Option<&Path>, se: SeKind, out: &Path) -> Result<(), CliError> {
    let (path, style) = match (exp1, exp2) {
        (Some(p), None) => (p, ReportStyle::Exp1),
        (None, Some(p)) => (p, ReportStyle::Exp2),
        _ => return Err(usage("give exactly one of --exp1 or --exp2")),
    };
    if !path.is_file() {
        return Err(usage(format!("input not found: {}", path.display())));
    }
    let config = RunConfig::Regress {
        exp1: exp1.map(Path::to_path_buf),
        exp2: exp2.map(Path::to_path_buf),
        se,
    };
    let fits = match style {
        ReportStyle::Exp1 => exp1_fits(path, se)?,
        ReportStyle::Exp2 => exp2_fits(path, se)?,
    };
    start_run(out, &config)?;
    let report = report_table(&fits, style).map_err(compute)?;
    write_file(&out.join("report.txt"), &report.text)?;
    write_file(&out.join("coefficients.csv"), &report.csv)?;
    write_file(&out.join("fits.json"), to_json(&fits))?;
    print!("{}", report.text);
    finish_run(out)
}

fn create_parent(path: &Path) -> Result<(), CliError> {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => fs::create_dir_all(p).map_err(|e| usage(format!("{}: {e}", p.display()))),
        _ => Ok(()),
    }
}

fn write_image_set(set: &crate::synth::SyntheticSet, out: &Path) -> Result<(), CliError> {
    let store = out.join("store");
    let manifests = out.join("manifests");
    fs::create_dir_all(&store).map_err(usage)?;
    fs::create_dir_all(&manifests).map_err(usage)?;
    for img in &set.images {
        write_embeddings(img, store.join(format!("{}.{KEMB_EXTENSION}", img.image_id()))).map_err(usage)?;
    }
    save_manifest(&set.manifest, manifests.join(format!("{}.json", sanitize(&set.manifest.set_id)))).map_err(usage)?;
    let mut labels = String::from("row,image_id,patch,component\n");
    let per_image = set.images.first().map_or(0, |i| i.n_patches());
    for (row, label) in set.labels.iter().enumerate() {
        let image = &set.manifest.image_ids[row / per_image];
        labels.push_str(&format!("{row},{image},{},{label}\n", row % per_image));
    }
    write_file(&out.join("labels.csv"), labels)
}

pub fn cmd_synth(command: &SynthCommand) -> Result<(), CliError> {
    match command {
        SynthCommand::Mixture(a) => {
            let spec = MixtureSpec {
                k_true: a.k,
                points_per_component: 1,
                dim: a.dim,
                center_scale: a.center_scale,
                within_std: a.within_std,
                seed: a.seed,
            };
            let set = gen_image_set(&spec, &a.set_id, a.images, a.patches).map_err(usage)?;
            write_image_set(&set, &a.out)?;
            write_file(&a.out.join("spec.json"), to_json(a))
        }
        SynthCommand::Fixture { out } => {
            write_image_set(&six_cluster_fixture(), out)?;
            write_file(&out.join("config.json"), to_json(&six_cluster_config()))
        }
        SynthCommand::Choice(a) => {
            let rows = gen_choice_data(&ChoiceSpec {
                beta: a.beta.clone(),
                n: a.n,
                term: a.term,
                seed: a.seed,
                ..Default::default()
            })
            .map_err(usage)?;
            create_parent(&a.out)?;
            let file = fs::File::create(&a.out).map_err(|e| usage(format!("{}: {e}", a.out.display())))?;
            write_exp1(file, &rows).map_err(usage)
        }
        SynthCommand::Panel(a) => {
            let beta: [f64; 3] = a
                .beta
                .as_slice()
                .try_into()
                .map_err(|_| usage("--beta needs exactly three slopes"))?;
            let panel = gen_panel(&PanelSpec {
                beta,
                n_users: a.users,
                products_per_user: a.per_user,
                fe_std: a.fe_std,
                noise_std: a.noise_std,
                seed: a.seed,
            })
            .map_err(usage)?;
            create_parent(&a.out)?;
            let file = fs::File::create(&a.out).map_err(|e| usage(format!("{}: {e}", a.out.display())))?;
            write_exp2(file, &panel.rows).map_err(usage)
        }
    }
}

pub fn cmd_validate(args: &ValidateArgs) -> Result<(), CliError> {
    let threads = effective_threads(args.threads)?;
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().map_err(compute)?;
    let scale = if args.quick { Scale::quick() } else { Scale::full() };
    let results = pool.install(|| run_all(scale, args.seed));
    for r in &results {
        println!("{}", r.line());
    }
    let failed: Vec<&str> = results.iter().filter(|r| !r.passed).map(|r| r.name.as_str()).collect();
    if failed.is_empty() {
        println!("all {} checks passed", results.len());
        Ok(())
    } else {
        Err(compute(format!("failed checks: {}", failed.join(", "))))
    }
}

pub fn cmd_trace(path: &Path) -> Result<(), CliError> {
    let result = load_trace(path).map_err(usage)?;
    print!("{}", format_trace(&result));
    Ok(())
}

pub fn cmd_replay(config: &Path, out: &Path) -> Result<(), CliError> {
    let text = fs::read_to_string(config).map_err(|e| usage(format!("{}: {e}", config.display())))?;
    let run: RunConfig = serde_json::from_str(&text).map_err(|e| usage(format!("{}: {e}", config.display())))?;
    match run {
        RunConfig::Score {
            manifests,
            store,
            pipeline,
            threads,
        } => run_score(&manifests, &store, out, pipeline, effective_threads(Some(threads))?),
        RunConfig::Regress { exp1, exp2, se } => run_regress(exp1.as_deref(), exp2.as_deref(), se, out),
    }
}

/// Runs a parsed command line and returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    let result = match &cli.command {
        Command::Score(a) => cmd_score(a),
        Command::Regress(a) => cmd_regress(a),
        Command::Synth(c) => cmd_synth(c),
        Command::Validate(a) => cmd_validate(a),
        Command::Trace { path } => cmd_trace(path),
        Command::Replay { config, out } => cmd_replay(config, out),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
