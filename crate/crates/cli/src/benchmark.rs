//! Repeated half-split benchmark: every (split, model) cell is fitted on one
//! half and scored on the other.

use std::io::Write;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Instant;

use anyhow::{Context, Result};
use cascade_core::baselines::fit_full_histogram;
use cascade_core::evaluation::{loo_least_squares, test_log_likelihood, DensityModel, LogLikelihood};
use cascade_core::exec::{derive_seed, map_indexed};
use cascade_core::fit::{fit_model, select_lambda};
use cascade_core::{ingest_csv, split_dataset, Dataset, Execution};
use clap::{Args, ValueEnum};
use serde::Serialize;

use crate::manifest::ManifestBuilder;
use crate::{read_schema, usage, HyperArgs, ModelKind};

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum BenchModel {
    Leaf,
    Branch,
    List,
    Histogram,
}

#[derive(Args, Debug, Serialize)]
pub struct BenchmarkArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    schema: PathBuf,
    #[arg(long, default_value_t = 5)]
    splits: usize,
    #[arg(long, value_enum, value_delimiter = ',', default_value = "leaf,branch,list,histogram")]
    models: Vec<BenchModel>,
    /// Candidate means for the leaf model.
    #[arg(long = "lambda-leaf", value_delimiter = ',', default_value = "5,8")]
    lambda_leaf: Vec<f64>,
    /// Candidate means for the branch model.
    #[arg(long = "lambda-branch", value_delimiter = ',', default_value = "2,3")]
    lambda_branch: Vec<f64>,
    /// Candidate means for the rule list.
    #[arg(long = "lambda-list", value_delimiter = ',', default_value = "3")]
    lambda_list: Vec<f64>,
    /// Output CSV.
    #[arg(long, default_value = "benchmark.csv")]
    out: PathBuf,
    /// Write `NA` for fit times so the CSV is byte-reproducible.
    #[arg(long = "no-timing")]
    no_timing: bool,
    #[command(flatten)]
    hyper: HyperArgs,
}

struct Row {
    split: usize,
    model: BenchModel,
    leaves: usize,
    test_loglik: LogLikelihood,
    loo: f64,
    fit_seconds: f64,
}

fn model_name(m: BenchModel) -> &'static str {
    match m {
        BenchModel::Leaf => "leaf",
        BenchModel::Branch => "branch",
        BenchModel::List => "list",
        BenchModel::Histogram => "histogram",
    }
}

fn run_cell(args: &BenchmarkArgs, split: usize, model: BenchModel, train: &Dataset, test: &Dataset) -> Result<Row> {
    let clock = Instant::now();
    let cell_seed = derive_seed(args.hyper.seed, model_name(model), split as u64);
    let (leaves, density): (usize, Box<dyn DensityModel>) = match model {
        BenchModel::Histogram => {
            let h = fit_full_histogram(train)?;
            (h.num_bins(), Box::new(h))
        }
        _ => {
            let (kind, lambdas) = match model {
                BenchModel::Leaf => (ModelKind::Leaf, &args.lambda_leaf),
                BenchModel::Branch => (ModelKind::Branch, &args.lambda_branch),
                _ => (ModelKind::List, &args.lambda_list),
            };
            let settings = args.hyper.settings(cell_seed);
            let base = args.hyper.spec(kind, lambdas[0])?;
            // cells already run concurrently
            let exec = Execution::Sequential;
            let sel = select_lambda(train, &base, lambdas, &settings, exec)?;
            let out = fit_model(train, &base.with_lambda(sel.lambda), &settings, exec)?;
            let leaves = out.model.num_leaves();
            let boxed: Box<dyn DensityModel> = match out.model {
                cascade_core::model::LoadedModel::Tree(t) => Box::new(t),
                cascade_core::model::LoadedModel::List(l) => Box::new(l),
            };
            (leaves, boxed)
        }
    };
    let fit_seconds = clock.elapsed().as_secs_f64();
    Ok(Row {
        split,
        model,
        leaves,
        test_loglik: test_log_likelihood(density.as_ref(), test, None),
        loo: loo_least_squares(density.as_ref()).unwrap_or(f64::NAN),
        fit_seconds,
    })
}

pub fn run(args: BenchmarkArgs) -> Result<()> {
    if args.splits == 0 {
        return Err(usage("--splits must be at least 1"));
    }
    if args.models.is_empty() {
        return Err(usage("--models must name at least one model"));
    }
    for (name, l) in [
        ("--lambda-leaf", &args.lambda_leaf),
        ("--lambda-branch", &args.lambda_branch),
        ("--lambda-list", &args.lambda_list),
    ] {
        if l.is_empty() {
            return Err(usage(format!("{} needs at least one value", name)));
        }
    }
    let mut manifest = ManifestBuilder::new("benchmark", &args)?;
    let schema = read_schema(&args.schema)?;
    let data = ingest_csv(&args.data, Arc::clone(&schema))?;
    manifest.input(&args.schema);
    manifest.input(&args.data);

    let halves = (0..args.splits)
        .map(|s| split_dataset(&data, 0.5, derive_seed(args.hyper.seed, "split", s as u64)))
        .collect::<cascade_core::Result<Vec<_>>>()?;
    let cells: Vec<(usize, BenchModel)> = (0..args.splits)
        .flat_map(|s| args.models.iter().map(move |&m| (s, m)))
        .collect();
    let rows = map_indexed(args.hyper.exec(), cells.len(), |i| {
        let (s, m) = cells[i];
        run_cell(&args, s, m, &halves[s].0, &halves[s].1)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;

    if let Some(dir) = args.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    let file = std::fs::File::create(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    let mut w = std::io::BufWriter::new(file);
    writeln!(w, "split,model,leaves,test_loglik,loo,fit_seconds")?;
    for r in &rows {
        let loo = if r.loo.is_nan() { "NA".to_string() } else { format!("{:.9}", r.loo) };
        let secs = if args.no_timing { "NA".to_string() } else { format!("{:.3}", r.fit_seconds) };
        let ll = match r.test_loglik {
            LogLikelihood::Finite(x) => format!("{:.6}", x),
            LogLikelihood::NegInfinity => "-inf".to_string(),
        };
        writeln!(w, "{},{},{},{},{},{}", r.split, model_name(r.model), r.leaves, ll, loo, secs)?;
        println!(
            "split {} {:>9}: leaves {:>4}  test loglik {:>14}  loo {}",
            r.split,
            model_name(r.model),
            r.leaves,
            ll,
            loo
        );
    }
    w.flush()?;
    drop(w);
    manifest.output(&args.out);
    manifest.write(&crate::manifest::default_path(&args.out))?;
    Ok(())
}
