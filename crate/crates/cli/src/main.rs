mod benchmark;
mod manifest;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use cascade_core::anneal::AnnealConfig;
use cascade_core::baselines::{gen_extreme_uniform, gen_sparse_tree_dataset};
use cascade_core::evaluation::{loo_least_squares, test_log_likelihood};
use cascade_core::fit::{fit_model, select_lambda, ModelSpec, SearchSettings};
use cascade_core::model::{to_dot, to_text, LoadedModel, ModelFile};
use cascade_core::posterior_branch::BranchModelHyper;
use cascade_core::posterior_leaf::LeafModelHyper;
use cascade_core::rule_list::{ListModelHyper, McmcConfig};
use cascade_core::{ingest_csv, load_schema, Execution, Schema};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use manifest::ManifestBuilder;

/// Bad flags or flag combinations.
#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

#[derive(Parser)]
#[command(name = "cascade", version, about = "Sparse Bayesian density cascades for categorical data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a tree or rule-list model and write it as JSON.
    Fit(FitArgs),
    /// Score a fitted model on data.
    Eval(EvalArgs),
    /// Render a fitted model as DOT, text or JSON.
    Export(ExportArgs),
    /// Write one of the built-in synthetic datasets.
    Gen(GenArgs),
    /// Repeated half-split comparison of several models.
    Benchmark(benchmark::BenchmarkArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum ModelKind {
    Leaf,
    Branch,
    List,
}

/// Hyperparameters and search effort shared by `fit` and `benchmark`.
#[derive(Args, Clone, Debug, Serialize)]
struct HyperArgs {
    /// Poisson mean; a comma list selects by held-out likelihood.
    /// Defaults: 5 (leaf), 2 (branch), 3 (list).
    #[arg(long, value_delimiter = ',')]
    lambda: Option<Vec<f64>>,
    /// Dirichlet concentration. Defaults: 2 for trees, 1 for lists.
    #[arg(long)]
    alpha: Option<f64>,
    /// Antecedent-size Poisson mean (lists).
    #[arg(long, default_value_t = 1.0)]
    eta: f64,
    /// Feature-usage regularizer (branch model).
    #[arg(long)]
    gamma: Option<f64>,
    /// Largest antecedent size (lists); defaults to min(p, 3).
    #[arg(long = "max-card")]
    max_card: Option<usize>,
    /// Drop antecedents matching fewer training points (lists).
    #[arg(long = "min-support")]
    min_support: Option<u64>,
    /// Drop the Dirichlet prior normalizer from the list score.
    #[arg(long = "omit-prior-normalizer")]
    omit_prior_normalizer: bool,
    /// Iterations per chain. Defaults: 10000 (trees), 20000 (lists).
    #[arg(long)]
    iters: Option<usize>,
    /// Independent chains. Default 4.
    #[arg(long, default_value_t = 4)]
    chains: usize,
    /// Annealing restart period.
    #[arg(long = "restart-period", default_value_t = 2500)]
    restart_period: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Run chains on one thread.
    #[arg(long)]
    sequential: bool,
}

impl HyperArgs {
    fn exec(&self) -> Execution {
        if self.sequential {
            Execution::Sequential
        } else {
            Execution::Parallel
        }
    }

    fn lambdas(&self, kind: ModelKind) -> Vec<f64> {
        self.lambda.clone().unwrap_or_else(|| {
            vec![match kind {
                ModelKind::Leaf => 5.0,
                ModelKind::Branch => 2.0,
                ModelKind::List => 3.0,
            }]
        })
    }

    fn spec(&self, kind: ModelKind, lambda: f64) -> Result<ModelSpec> {
        let core = |e: cascade_core::Error| anyhow::Error::from(e);
        Ok(match kind {
            ModelKind::Leaf => ModelSpec::Leaf(LeafModelHyper::new(lambda, self.alpha.unwrap_or(2.0)).map_err(core)?),
            ModelKind::Branch => {
                ModelSpec::Branch(BranchModelHyper::new(lambda, self.alpha.unwrap_or(2.0), self.gamma).map_err(core)?)
            }
            ModelKind::List => {
                let mut h = ListModelHyper::new(lambda, self.eta, self.alpha.unwrap_or(1.0)).map_err(core)?;
                h.max_card = self.max_card;
                h.min_support = self.min_support;
                h.omit_prior_normalizer = self.omit_prior_normalizer;
                ModelSpec::List(h)
            }
        })
    }

    fn settings(&self, seed: u64) -> SearchSettings {
        let tree_iters = self.iters.unwrap_or(10_000);
        let list_iters = self.iters.unwrap_or(20_000);
        SearchSettings {
            anneal: AnnealConfig {
                iterations: tree_iters,
                restart_period: self.restart_period,
                ..Default::default()
            },
            anneal_chains: self.chains,
            mcmc: McmcConfig {
                chains: self.chains,
                iterations: list_iters,
                min_iterations: (list_iters / 5).max(10),
                ..Default::default()
            },
            seed,
        }
    }
}

#[derive(Args, Debug, Serialize)]
struct FitArgs {
    #[arg(long, value_enum)]
    model: ModelKind,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    schema: PathBuf,
    /// Output model JSON.
    #[arg(long, default_value = "model.json")]
    out: PathBuf,
    /// Manifest path; defaults to `<out>.manifest.json`.
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Tree model file to start annealing from.
    #[arg(long = "warm-start")]
    warm_start: Option<PathBuf>,
    #[command(flatten)]
    hyper: HyperArgs,
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum Metric {
    Loglik,
    Loo,
}

#[derive(Args, Debug, Serialize)]
struct EvalArgs {
    #[arg(long = "model-file")]
    model_file: PathBuf,
    /// Test data (required for loglik).
    #[arg(long)]
    data: Option<PathBuf>,
    /// Optional schema that must match the model's.
    #[arg(long)]
    schema: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "loglik")]
    metric: Metric,
    /// Use posterior-mean leaf masses instead of raw frequencies.
    #[arg(long)]
    smoothing: bool,
    #[arg(long = "smoothing-alpha", default_value_t = 1.0)]
    smoothing_alpha: f64,
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum ExportFormat {
    Dot,
    Text,
    Json,
}

#[derive(Args, Debug, Serialize)]
struct ExportArgs {
    #[arg(long = "model-file")]
    model_file: PathBuf,
    #[arg(long, value_enum)]
    format: ExportFormat,
    /// Write here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum Generated {
    SparseTree,
    ExtremeUniform,
}

#[derive(Args, Debug, Serialize)]
struct GenArgs {
    #[arg(long, value_enum)]
    dataset: Generated,
    /// Output CSV.
    #[arg(long)]
    out: PathBuf,
    /// Output schema JSON; defaults to `<out>` with a `.schema.json` suffix.
    #[arg(long = "schema-out")]
    schema_out: Option<PathBuf>,
}

fn read_schema(path: &Path) -> Result<Arc<Schema>> {
    Ok(Arc::new(load_schema(path)?))
}

fn read_model(path: &Path) -> Result<ModelFile> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| cascade_core::Error::Data(format!("cannot read model file {}: {}", path.display(), e)))?;
    Ok(ModelFile::from_json_str(&text)?)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn cmd_fit(args: FitArgs) -> Result<()> {
    let mut manifest = ManifestBuilder::new("fit", &args)?;
    let schema = read_schema(&args.schema)?;
    let data = ingest_csv(&args.data, Arc::clone(&schema))?;
    manifest.input(&args.schema);
    manifest.input(&args.data);
    let h = &args.hyper;
    let exec = h.exec();
    let mut settings = h.settings(h.seed);
    if let Some(path) = &args.warm_start {
        if args.model == ModelKind::List {
            return Err(usage("--warm-start applies to tree models only"));
        }
        let LoadedModel::Tree(t) = read_model(path)?.load()? else {
            return Err(usage("--warm-start needs a tree model file"));
        };
        if t.tree.cardinalities() != schema.cardinalities() {
            bail!(cascade_core::Error::Data("warm-start model does not match the schema".into()));
        }
        settings.anneal.warm_start = Some(t.tree);
        manifest.input(path);
    }
    let lambdas = h.lambdas(args.model);
    let base = h.spec(args.model, lambdas[0])?;
    for &l in &lambdas {
        h.spec(args.model, l)?;
    }
    let selection = select_lambda(&data, &base, &lambdas, &settings, exec)?;
    for (l, ll) in &selection.candidates {
        println!("candidate lambda {}: validation log-likelihood {}", l, ll);
    }
    let spec = base.with_lambda(selection.lambda);
    let out = fit_model(&data, &spec, &settings, exec)?;
    write_text(&args.out, &out.file.to_json_string())?;
    manifest.output(&args.out);
    let manifest_path = args.manifest.clone().unwrap_or_else(|| manifest::default_path(&args.out));
    manifest.write(&manifest_path)?;

    println!("model: {}", spec.name());
    println!("lambda: {}", selection.lambda);
    println!("log-posterior: {:.6}", out.score);
    println!("leaves: {}", out.model.num_leaves());
    if let Some(r) = out.rhat {
        println!("rhat: {:.4}", r);
        println!("converged: {}", out.converged.unwrap_or(false));
    }
    println!("wrote {}", args.out.display());
    Ok(())
}

fn cmd_eval(args: EvalArgs) -> Result<()> {
    let file = read_model(&args.model_file)?;
    if let Some(path) = &args.schema {
        let s = load_schema(path)?;
        if s != file.schema {
            bail!(cascade_core::Error::Data(format!(
                "schema {} does not match the model's schema",
                path.display()
            )));
        }
    }
    let model = file.load()?;
    match args.metric {
        Metric::Loglik => {
            let Some(path) = &args.data else {
                return Err(usage("--metric loglik needs --data"));
            };
            let test = ingest_csv(path, Arc::new(file.schema.clone()))?;
            let smoothing = args.smoothing.then_some(args.smoothing_alpha);
            if let Some(a) = smoothing {
                if !(a > 0.0 && a.is_finite()) {
                    return Err(usage("--smoothing-alpha must be positive"));
                }
            }
            println!("{}", test_log_likelihood(model.as_density(), &test, smoothing));
        }
        Metric::Loo => {
            println!("{:.6}", loo_least_squares(model.as_density())?);
        }
    }
    Ok(())
}

fn cmd_export(args: ExportArgs) -> Result<()> {
    let file = read_model(&args.model_file)?;
    file.load()?;
    let text = match args.format {
        ExportFormat::Dot => to_dot(&file),
        ExportFormat::Text => to_text(&file),
        ExportFormat::Json => file.to_json_string(),
    };
    match &args.out {
        Some(path) => {
            let mut manifest = ManifestBuilder::new("export", &args)?;
            manifest.input(&args.model_file);
            write_text(path, &text)?;
            manifest.output(path);
            manifest.write(&manifest::default_path(path))?;
        }
        None => print!("{}", text),
    }
    Ok(())
}

fn cmd_gen(args: GenArgs) -> Result<()> {
    let mut manifest = ManifestBuilder::new("gen", &args)?;
    let data = match args.dataset {
        Generated::SparseTree => gen_sparse_tree_dataset(),
        Generated::ExtremeUniform => gen_extreme_uniform(),
    };
    let schema_out = args.schema_out.clone().unwrap_or_else(|| args.out.with_extension("schema.json"));
    if let Some(dir) = args.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    data.write_csv_file(&args.out)?;
    write_text(&schema_out, &data.schema().to_json_string())?;
    manifest.output(&args.out);
    manifest.output(&schema_out);
    manifest.write(&manifest::default_path(&args.out))?;
    println!("wrote {} rows to {}", data.len(), args.out.display());
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<UsageError>().is_some() {
        return 2;
    }
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<cascade_core::Error>() {
            return match e {
                cascade_core::Error::InvalidArgument(_) => 2,
                cascade_core::Error::Guard(_) => 4,
                _ => 3,
            };
        }
    }
    1
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Fit(a) => cmd_fit(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Export(a) => cmd_export(a),
        Command::Gen(a) => cmd_gen(a),
        Command::Benchmark(a) => benchmark::run(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {:#}", e);
            ExitCode::from(exit_code(&e))
        }
    }
}
