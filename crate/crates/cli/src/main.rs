use std::fs;
use std::path::PathBuf;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use omnitab_core::data::{
    apply_discretizer, fit_discretizer, load_csv, save_csv, schema_sidecar_json,
    split_train_test, AttrKind, Cell, Dataset, DatasetKind, Discretizer, Provenance,
};
use omnitab_core::harness::{
    self, predict_chunked, prepare_views, read_config, read_model, run_benchmark, train_model,
    write_model, write_rank_reports, BenchConfig, MetricRow, ModelName,
};
use omnitab_core::mask::{make_mask_plan, read_mask_plan, write_mask_plan};
use omnitab_core::metrics::{
    train_sigmas, wapmc, wnrmse, MetricReport, PredEntry, PredictionTable,
};
use omnitab_core::pseudolik::{convergence_report, write_report_csv, LogLinearModel};
use omnitab_core::seed::{derive2, stage};
use omnitab_core::selfsup::ImputationConfig;

#[derive(Parser)]
#[command(
    name = "omnitab",
    version,
    about = "Target-agnostic prediction over tabular data",
    arg_required_else_help = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Normalize a CSV and write it back with its schema sidecar.
    Ingest(IngestArgs),
    /// Shuffle and split a dataset into train and test halves.
    Split(SplitArgs),
    /// Fit an equal-frequency discretizer (or apply a stored one).
    Discretize(DiscretizeArgs),
    /// Train one model on a training CSV and store it.
    Train(TrainArgs),
    /// Mask a test CSV and predict the hidden cells with a stored model.
    Impute(ImputeArgs),
    /// Score predictions against the ground truth under a mask plan.
    Evaluate(EvaluateArgs),
    /// Run the full dataset x model x rate benchmark from a config.
    Bench(BenchArgs),
    /// Rebuild rank tables from a metrics.csv.
    Ranks(RanksArgs),
    /// Pseudo-likelihood consistency check on the three-variable model.
    PltCheck(PltCheckArgs),
}

fn main() {
    env_logger::init();
    if let Err(e) = run() {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn run() -> Result<()> {
    match Cli::parse().command {
        Command::Ingest(a) => ingest(a),
        Command::Split(a) => split(a),
        Command::Discretize(a) => discretize(a),
        Command::Train(a) => train(a),
        Command::Impute(a) => impute(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Bench(a) => bench(a),
        Command::Ranks(a) => ranks(a),
        Command::PltCheck(a) => plt_check(a),
    }
}

fn parse_kind(s: &str) -> Result<DatasetKind> {
    match s {
        "categorical" => Ok(DatasetKind::Categorical),
        "continuous" => Ok(DatasetKind::Continuous),
        "discretized" => Ok(DatasetKind::Discretized),
        other => bail!("unknown dataset kind {other:?} (categorical, continuous, discretized)"),
    }
}

#[derive(Args)]
struct IngestArgs {
    /// Input CSV; "?" marks missing cells.
    #[arg(long)]
    input: PathBuf,
    /// Schema sidecar JSON overriding per-attribute kind inference.
    #[arg(long)]
    schema: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

fn ingest(a: IngestArgs) -> Result<()> {
    let ds = load_csv(&a.input, a.schema.as_deref())?;
    fs::create_dir_all(&a.out)?;
    save_csv(&ds, a.out.join("data.csv"))?;
    fs::write(a.out.join("schema.json"), schema_sidecar_json(&ds.schema)?)?;
    let cats = ds.schema.attrs.iter().filter(|t| t.kind.is_categorical()).count();
    println!(
        "ingested {} instances x {} attributes ({} categorical, {} continuous) -> {}",
        ds.n(),
        ds.width(),
        cats,
        ds.width() - cats,
        a.out.display()
    );
    Ok(())
}

#[derive(Args)]
struct SplitArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    schema: Option<PathBuf>,
    /// Train fraction.
    #[arg(long, default_value_t = 0.8)]
    ratio: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

fn split(a: SplitArgs) -> Result<()> {
    let ds = load_csv(&a.input, a.schema.as_deref())?;
    let (train, test) = split_train_test(&ds, a.ratio, a.seed)?;
    fs::create_dir_all(&a.out)?;
    save_csv(&train, a.out.join("train.csv"))?;
    save_csv(&test, a.out.join("test.csv"))?;
    fs::write(a.out.join("schema.json"), schema_sidecar_json(&ds.schema)?)?;
    println!(
        "split {} instances -> {} train / {} test (seed {})",
        ds.n(),
        train.n(),
        test.n(),
        a.seed
    );
    Ok(())
}

#[derive(Args)]
struct DiscretizeArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    schema: Option<PathBuf>,
    /// Bin count for a fresh fit.
    #[arg(long, default_value_t = 5)]
    bins: usize,
    /// Apply this stored discretizer instead of fitting one.
    #[arg(long)]
    apply: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

fn discretize(a: DiscretizeArgs) -> Result<()> {
    let ds = load_csv(&a.input, a.schema.as_deref())?;
    let disc: Discretizer = match &a.apply {
        Some(p) => serde_json::from_str(
            &fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?,
        )?,
        None => fit_discretizer(&ds, a.bins)?,
    };
    let binned = apply_discretizer(&disc, &ds)?;
    fs::create_dir_all(&a.out)?;
    save_csv(&binned, a.out.join("binned.csv"))?;
    let mut json = serde_json::to_string_pretty(&disc)?;
    json.push('\n');
    fs::write(a.out.join("discretizer.json"), json)?;
    fs::write(a.out.join("schema.json"), schema_sidecar_json(&binned.schema)?)?;
    println!(
        "binned {} continuous attributes into <= {} bins -> {}",
        disc.per_attr.len(),
        disc.bins,
        a.out.display()
    );
    Ok(())
}

#[derive(Args)]
struct TrainArgs {
    /// most_freq, median, chordal, made, or dae.
    #[arg(long)]
    model: String,
    /// Training CSV (already split off from any test data).
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    schema: Option<PathBuf>,
    /// categorical, continuous, or discretized.
    #[arg(long, default_value = "categorical")]
    kind: String,
    /// Benchmark config JSON supplying hyperparameters; defaults otherwise.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Model directory to create.
    #[arg(long)]
    out: PathBuf,
}

fn train(a: TrainArgs) -> Result<()> {
    let model = ModelName::parse(&a.model)?;
    let kind = parse_kind(&a.kind)?;
    let cfg = match &a.config {
        Some(p) => read_config(p)?,
        None => BenchConfig::new(a.seed, &a.out),
    };
    let train_ds = load_csv(&a.input, a.schema.as_deref())?;
    // prepare_views wants a test half; training alone gets an empty one.
    let empty = Dataset {
        schema: train_ds.schema.clone(),
        rows: Vec::new(),
        provenance: Provenance::default(),
    };
    let n = train_ds.n();
    let data = prepare_views(train_ds, empty, kind, cfg.bins)?;
    let trained = train_model(model, &data, &cfg, a.seed)?;
    let files = write_model(&trained, &a.out)?;
    println!(
        "trained {} on {} instances, {} files -> {}",
        model,
        n,
        files.len(),
        a.out.display()
    );
    Ok(())
}

#[derive(Args)]
struct ImputeArgs {
    /// Model directory written by `train`.
    #[arg(long)]
    model: PathBuf,
    /// Test CSV with ground truth; its cells are masked, never read back.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    schema: Option<PathBuf>,
    /// Masking rate, drawing a fresh plan from the seed.
    #[arg(long)]
    rate: Option<f64>,
    /// Stored mask plan to replay instead of drawing one.
    #[arg(long)]
    plan: Option<PathBuf>,
    /// Imputation samples per masked cell (sampling models only).
    #[arg(long, default_value_t = 10)]
    samples: usize,
    #[arg(long, default_value_t = 1)]
    chunks: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

fn impute(a: ImputeArgs) -> Result<()> {
    let model = read_model(&a.model)?;
    let ds = load_csv(&a.input, a.schema.as_deref())?;
    let (plan, fresh) = match (&a.plan, a.rate) {
        (Some(_), Some(_)) => bail!("--plan and --rate are mutually exclusive"),
        (Some(p), None) => (read_mask_plan(p)?, false),
        (None, Some(rate)) => (
            make_mask_plan(ds.n(), ds.width(), rate, derive2(a.seed, stage::TEST_MASK, 0))?,
            true,
        ),
        (None, None) => bail!("one of --plan or --rate is required"),
    };
    let preds = predict_chunked(
        &model,
        &ds,
        &plan,
        a.chunks,
        &ImputationConfig { samples: a.samples },
        derive2(a.seed, stage::IMPUTE, 0),
    )?;
    fs::create_dir_all(&a.out)?;
    if fresh {
        write_mask_plan(&plan, a.out.join("plan.txt"))?;
    }
    write_predictions(&preds, &ds, &a.out.join("predictions.csv"))?;
    println!(
        "predicted {} cells over {} instances at rate {} -> {}",
        preds.entries.len(),
        ds.n(),
        plan.rate,
        a.out.display()
    );
    Ok(())
}

/// instance,attr,value rows; categorical cells as schema labels, so the file
/// reads like the source CSV. Labels may contain commas (bin labels do),
/// hence a real CSV writer.
fn write_predictions(preds: &PredictionTable, ds: &Dataset, path: &std::path::Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["instance", "attr", "value"])?;
    for e in &preds.entries {
        let token = match (e.value, &ds.schema.attrs[e.attr].kind) {
            (Cell::Missing, _) => "?".to_string(),
            (Cell::Num(x), _) => format!("{x}"),
            (Cell::Cat(v), AttrKind::Categorical(values)) => values
                .get(v)
                .cloned()
                .ok_or_else(|| anyhow!("prediction value {v} outside attribute {}", e.attr))?,
            (Cell::Cat(v), AttrKind::Continuous) => {
                bail!("categorical prediction {v} for continuous attribute {}", e.attr)
            }
        };
        w.write_record([e.instance.to_string(), e.attr.to_string(), token])?;
    }
    w.flush()?;
    Ok(())
}

fn read_predictions(path: &std::path::Path, ds: &Dataset) -> Result<PredictionTable> {
    let mut r = csv::Reader::from_path(path)?;
    let mut entries = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        if rec.len() != 3 {
            bail!("predictions row needs 3 fields, got {}", rec.len());
        }
        let instance: usize = rec[0].parse().context("bad instance index")?;
        let attr: usize = rec[1].parse().context("bad attribute index")?;
        if attr >= ds.width() {
            bail!("attribute index {attr} outside dataset width {}", ds.width());
        }
        let token = &rec[2];
        let value = if token == "?" {
            Cell::Missing
        } else {
            match &ds.schema.attrs[attr].kind {
                AttrKind::Categorical(values) => Cell::Cat(
                    values
                        .iter()
                        .position(|v| v == token)
                        .ok_or_else(|| anyhow!("unknown value {token:?} for attribute {attr}"))?,
                ),
                AttrKind::Continuous => Cell::Num(token.parse().context("bad numeric value")?),
            }
        };
        entries.push(PredEntry { instance, attr, value });
    }
    Ok(PredictionTable { entries })
}

#[derive(Args)]
struct EvaluateArgs {
    /// Ground-truth test CSV (the file given to `impute`).
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    schema: Option<PathBuf>,
    /// Mask plan the predictions answered.
    #[arg(long)]
    plan: PathBuf,
    /// predictions.csv from `impute`.
    #[arg(long)]
    preds: PathBuf,
    /// wapmc or wnrmse.
    #[arg(long)]
    metric: String,
    /// Training CSV for sigma weights (wnrmse only).
    #[arg(long)]
    train: Option<PathBuf>,
    /// Optional report directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn evaluate(a: EvaluateArgs) -> Result<()> {
    let ds = load_csv(&a.input, a.schema.as_deref())?;
    let plan = read_mask_plan(&a.plan)?;
    let preds = read_predictions(&a.preds, &ds)?;
    let report: MetricReport = match a.metric.as_str() {
        "wapmc" => wapmc(&preds, &ds, &plan)?,
        "wnrmse" => {
            let train_path = a.train.context("--train is required for wnrmse")?;
            let train = load_csv(&train_path, a.schema.as_deref())?;
            wnrmse(&preds, &ds, &plan, &train_sigmas(&train))?
        }
        other => bail!("unknown metric {other:?} (wapmc or wnrmse)"),
    };
    if let Some(out) = &a.out {
        fs::create_dir_all(out)?;
        fs::write(out.join("per_attr.csv"), report.per_attr_csv())?;
        let summary = serde_json::json!({
            "metric": report.metric.as_str(),
            "value": report.value,
            "m": report.m_total,
            "excluded_attrs": report.excluded,
        });
        fs::write(out.join("report.json"), serde_json::to_string_pretty(&summary)? + "\n")?;
    }
    println!("{} = {} over {} cells", report.metric.as_str(), report.value, report.m_total);
    Ok(())
}

#[derive(Args)]
struct BenchArgs {
    /// Benchmark config JSON.
    #[arg(long)]
    config: PathBuf,
    /// Override the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the config chunk count.
    #[arg(long)]
    chunks: Option<usize>,
    /// Override the config output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn bench(a: BenchArgs) -> Result<()> {
    let mut cfg = read_config(&a.config)?;
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(c) = a.chunks {
        cfg.chunks = c;
    }
    if let Some(o) = a.out {
        cfg.out = o;
    }
    cfg.validate()?;
    let manifest = run_benchmark(&cfg)?;
    for dm in &manifest.datasets {
        if let Some(e) = &dm.error {
            eprintln!("{}: {e}", dm.name);
        }
        for mm in &dm.models {
            if let Some(e) = &mm.error {
                eprintln!("{} / {}: {e}", dm.name, mm.model);
            }
            for rm in &mm.rates {
                match (&rm.error, rm.value) {
                    (Some(e), _) => eprintln!("{} / {} @ {}: {e}", dm.name, mm.model, rm.rate),
                    (None, Some(v)) => println!(
                        "{} / {} @ {}: {} = {v}",
                        dm.name,
                        mm.model,
                        rm.rate,
                        rm.metric.as_deref().unwrap_or("?")
                    ),
                    (None, None) => {}
                }
            }
        }
    }
    println!("reports -> {}", cfg.out.display());
    if !manifest.complete {
        bail!("run incomplete; see manifest.json");
    }
    Ok(())
}

#[derive(Args)]
struct RanksArgs {
    /// metrics.csv from `bench`, or several runs concatenated.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

fn ranks(a: RanksArgs) -> Result<()> {
    let mut r = csv::Reader::from_path(&a.input)?;
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        if rec.len() != 7 {
            bail!("metrics row needs 7 fields, got {}", rec.len());
        }
        rows.push(MetricRow {
            dataset: rec[0].to_string(),
            model: rec[1].to_string(),
            rate: rec[2].parse().context("bad rate")?,
            metric: rec[3].to_string(),
            value: rec[4].parse().context("bad value")?,
            m: rec[5].parse().context("bad cell count")?,
            runtime_s: rec[6].parse().context("bad runtime")?,
        });
    }
    let tables = harness::rank_metric_rows(&rows)?;
    fs::create_dir_all(&a.out)?;
    let files = write_rank_reports(&tables, &a.out)?;
    for (rate, t) in &tables {
        let best = t
            .mean_ranks
            .iter()
            .enumerate()
            .min_by(|x, y| x.1.total_cmp(y.1))
            .map(|(i, _)| t.models[i].as_str())
            .unwrap_or("-");
        println!(
            "rate {rate}: {} models x {} datasets, best mean rank {best}",
            t.models.len(),
            t.datasets.len()
        );
    }
    println!("wrote {} files -> {}", files.len(), a.out.display());
    Ok(())
}

#[derive(Args)]
struct PltCheckArgs {
    /// Base seed; replicates use seed, seed+1, ...
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 10)]
    replicates: u64,
    /// Increasing sample-size grid.
    #[arg(long, value_delimiter = ',', default_values_t = vec![1_000, 10_000, 100_000])]
    grid: Vec<usize>,
    /// True parameters: three mains, then three pairwise interactions.
    #[arg(long, value_delimiter = ',', num_args = 6, allow_negative_numbers = true)]
    theta: Option<Vec<f64>>,
    #[arg(long)]
    out: PathBuf,
}

fn plt_check(a: PltCheckArgs) -> Result<()> {
    let theta: [f64; 6] = match a.theta {
        Some(v) => v.try_into().map_err(|_| anyhow!("--theta takes exactly 6 values"))?,
        None => [0.5, -0.7, 0.3, 0.9, -0.4, 0.6],
    };
    if a.replicates == 0 {
        bail!("--replicates must be positive");
    }
    let truth = LogLinearModel { theta };
    let seeds: Vec<u64> = (a.seed..a.seed + a.replicates).collect();
    let report = convergence_report(&truth, &a.grid, &seeds)?;
    fs::create_dir_all(&a.out)?;
    write_report_csv(&report, &a.out.join("plt_report.csv"))?;
    println!("n,median_pl_err,median_ml_err,median_gap");
    for m in &report.medians {
        println!("{},{},{},{}", m.n, m.pl_err, m.ml_err, m.pl_ml_gap);
    }
    let shrinking = report.medians.windows(2).all(|w| w[1].pl_err < w[0].pl_err);
    let last = report.medians.last().expect("non-empty grid");
    let agree = last.pl_ml_gap < 0.05;
    println!("median error shrinks along the grid: {}", if shrinking { "yes" } else { "NO" });
    println!(
        "estimators agree at n = {} (gap {:.6}): {}",
        last.n,
        last.pl_ml_gap,
        if agree { "yes" } else { "NO" }
    );
    if !(shrinking && agree) {
        bail!("consistency check failed");
    }
    Ok(())
}
