use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{anyhow, bail, Context};
use cage_core::benchmark::{benchmark_strata, load_manifest, load_reference_set, validate_manifest};
use cage_core::harness::config::{build_embedder, build_ocr};
use cage_core::harness::{
    evaluate_run, load_prog, render_report, run_pipeline, Backends, EvalOptions, ImageSource, MetricReport, Paradigm,
    PipelineConfig, ReportLayout, RunRecord, REFINED_IMAGE, REPORT_FILE,
};
use cage_core::imaging::RasterImage;
use cage_core::metrics::{
    effective_cost, embed_all, fid, hva_composite, krippendorff_alpha, verify_pair, CerMatching, CostScenario,
    DifferenceMetric, EmbedderBackend, FeatureSet, OcrBackend, RatingMatrix, RetryModel,
};
use cage_core::synth::RenderOutput;
use cage_review::{QueueOptions, ReviewConfig, ReviewQueue, SystemClock};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rust_decimal::Decimal;

/// Per-run evaluation output, next to run.json.
const RUN_METRICS_FILE: &str = "metrics.json";

#[derive(Parser)]
#[command(name = "cage", version, about = "Code-anchored diagram generation and evaluation")]
struct Cli {
    /// Pipeline config (TOML, or JSON by extension). Without it every
    /// backend is an offline mock.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Repeat for more log output.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Benchmark manifest tools
    #[command(subcommand)]
    Bench(BenchCmd),
    /// Run both generation stages over a manifest
    #[command(subcommand)]
    Pipeline(PipelineCmd),
    /// LEM, CER and optionally FID for a finished run
    Eval(EvalArgs),
    /// Fréchet distance between two image directories
    Fid {
        a: PathBuf,
        b: PathBuf,
    },
    /// Deployment cost for a per-image price
    Cost(CostArgs),
    /// Automated pair verification
    #[command(subcommand)]
    Pairs(PairsCmd),
    /// Render metric reports as a Markdown table
    Report(ReportArgs),
    /// Krippendorff's alpha and the visual-appeal composite from a ratings CSV
    Agreement {
        ratings: PathBuf,
        #[arg(long, value_enum, default_value_t = MetricArg::Ordinal)]
        metric: MetricArg,
    },
    /// Human review queue
    #[command(subcommand)]
    Review(ReviewCmd),
}

#[derive(Subcommand)]
enum BenchCmd {
    /// Check ids, labels and (optionally) subject strata
    Validate {
        manifest: PathBuf,
        /// Require the 400-prompt subject strata.
        #[arg(long)]
        strata: bool,
    },
}

#[derive(Subcommand)]
enum PipelineCmd {
    Run {
        manifest: PathBuf,
        /// Run directory; must not exist or be empty.
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct EvalArgs {
    run: PathBuf,
    /// Directory of reference PNGs for FID.
    #[arg(long)]
    reference: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = SourceArg::Refined)]
    source: SourceArg,
    #[arg(long, value_enum, default_value_t = ParadigmArg::Cage)]
    paradigm: ParadigmArg,
    /// Row label; defaults to the run config's label.
    #[arg(long)]
    model: Option<String>,
    #[arg(long, value_enum, default_value_t = MatchingArg::Independent)]
    matching: MatchingArg,
}

#[derive(Args)]
struct CostArgs {
    /// Price per image in dollars.
    #[arg(long)]
    per_image: Decimal,
    /// column label in the table
    #[arg(long, default_value = "custom")]
    name: String,
    #[arg(long, default_value_t = 12)]
    diagrams_per_deck: u32,
    #[arg(long, default_value_t = 1)]
    decks_per_week: u32,
    #[arg(long, default_value_t = 40)]
    weeks_per_year: u32,
    #[arg(long, default_value_t = 50)]
    teachers: u32,
    /// Fraction of images that need regeneration.
    #[arg(long, default_value_t = Decimal::ZERO)]
    regen: Decimal,
    #[arg(long, value_enum, default_value_t = RetryArg::Geometric)]
    retry: RetryArg,
    #[arg(long)]
    json: bool,
}

#[derive(Subcommand)]
enum PairsCmd {
    /// Verify (prog, refined) for every successful prompt of a run, or a
    /// single pair given as two images.
    Verify {
        run: Option<PathBuf>,
        #[arg(long, requires = "styled", conflicts_with = "run")]
        prog: Option<PathBuf>,
        #[arg(long, requires = "prog")]
        styled: Option<PathBuf>,
        #[arg(long)]
        threshold: Option<f64>,
    },
}

#[derive(Args)]
struct ReportArgs {
    /// JSON files holding one MetricReport or an array of them.
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    #[arg(long, value_enum, default_value_t = LayoutArg::AccuracyTable)]
    layout: LayoutArg,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct StoreArgs {
    /// Review service config (TOML).
    #[arg(long)]
    review_config: Option<PathBuf>,
    /// Overrides the store directory from the review config.
    #[arg(long)]
    store: Option<PathBuf>,
}

impl StoreArgs {
    fn resolve(&self) -> anyhow::Result<ReviewConfig> {
        let mut cfg = match &self.review_config {
            Some(p) => ReviewConfig::load(p)?,
            None => ReviewConfig::default(),
        };
        if let Some(s) = &self.store {
            cfg.store = s.clone();
        }
        Ok(cfg)
    }

    fn open(&self) -> anyhow::Result<(ReviewConfig, ReviewQueue)> {
        let cfg = self.resolve().map_err(Failure::config)?;
        let q = ReviewQueue::open(
            &cfg.store,
            QueueOptions {
                lease_ms: cfg.lease_ms,
                clock: Arc::new(SystemClock),
            },
        )?;
        Ok((cfg, q))
    }
}

#[derive(Subcommand)]
enum ReviewCmd {
    /// Serve the review HTTP API
    Serve {
        #[command(flatten)]
        store: StoreArgs,
        #[arg(long)]
        bind: Option<std::net::SocketAddr>,
    },
    /// Queue candidates for every successful prompt at each strength
    Enqueue {
        run: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        strengths: Vec<f64>,
        #[command(flatten)]
        store: StoreArgs,
    },
    /// Run pending regeneration jobs
    Regenerate {
        #[command(flatten)]
        store: StoreArgs,
    },
    /// Print queue counts and first-attempt pass rate
    Stats {
        #[command(flatten)]
        store: StoreArgs,
    },
    /// Replace a rejected candidate with a hand-corrected image
    Correct {
        pair_id: String,
        image: PathBuf,
        #[arg(long)]
        reviewer: String,
        #[command(flatten)]
        store: StoreArgs,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum SourceArg {
    Refined,
    Programmatic,
}

#[derive(Clone, Copy, ValueEnum)]
enum ParadigmArg {
    OpenSourceDiffusion,
    CodeBased,
    ClosedSourceApi,
    Cage,
}

#[derive(Clone, Copy, ValueEnum)]
enum MatchingArg {
    Independent,
    Assignment,
}

#[derive(Clone, Copy, ValueEnum)]
enum RetryArg {
    SingleRetry,
    Geometric,
}

#[derive(Clone, Copy, ValueEnum)]
enum LayoutArg {
    AccuracyTable,
    CostTable,
}

#[derive(Clone, Copy, ValueEnum)]
enum MetricArg {
    Ordinal,
    Interval,
}

/// An error tagged with its exit code.
#[derive(Debug)]
struct Failure {
    code: u8,
    inner: anyhow::Error,
}

impl Failure {
    fn config(e: impl Into<anyhow::Error>) -> anyhow::Error {
        anyhow::Error::new(Failure {
            code: 2,
            inner: e.into(),
        })
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#}", self.inner)
    }
}

impl std::error::Error for Failure {}

fn load_config(cli: &Cli) -> anyhow::Result<PipelineConfig> {
    let mut cfg = match &cli.config {
        Some(path) => PipelineConfig::load(path).map_err(Failure::config)?,
        None => PipelineConfig::mock(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(jobs) = cli.jobs {
        cfg.jobs = jobs;
    }
    cfg.validate().map_err(Failure::config)?;
    Ok(cfg)
}

fn ocr_of(cfg: &PipelineConfig) -> anyhow::Result<Box<dyn OcrBackend>> {
    cfg.backends
        .ocr
        .as_ref()
        .map(build_ocr)
        .ok_or_else(|| Failure::config(anyhow!("config declares no ocr backend")))
}

fn embedder_of(cfg: &PipelineConfig) -> anyhow::Result<Box<dyn EmbedderBackend>> {
    cfg.backends
        .embedder
        .as_ref()
        .map(build_embedder)
        .ok_or_else(|| Failure::config(anyhow!("config declares no embedder backend")))
}

fn write_text(path: &Path, text: &str) -> anyhow::Result<()> {
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn bench_validate(manifest: &Path, strata: bool) -> anyhow::Result<()> {
    let prompts = load_manifest(manifest).map_err(Failure::config)?;
    let expected = strata.then(benchmark_strata);
    let v = validate_manifest(&prompts, expected.as_ref());
    println!("{}", serde_json::to_string_pretty(&v)?);
    if !v.pass {
        bail!("manifest {} failed validation", manifest.display());
    }
    Ok(())
}

fn pipeline_run(cli: &Cli, manifest: &Path, out: &Path) -> anyhow::Result<()> {
    let cfg = load_config(cli)?;
    let prompts = load_manifest(manifest).map_err(Failure::config)?;
    let backends = Backends::from_config(&cfg.backends).map_err(Failure::config)?;
    let run = run_pipeline(&prompts, &backends, &cfg, out)?;
    let ok = run.succeeded().count();
    println!("{}: {ok}/{} prompts succeeded", out.display(), run.prompts.len());
    for p in run.failed() {
        println!("  {} failed: {}", p.prompt.id, p.error.as_deref().unwrap_or("?"));
    }
    if ok == 0 {
        bail!("no prompt succeeded");
    }
    Ok(())
}

fn eval(cli: &Cli, args: &EvalArgs) -> anyhow::Result<()> {
    let cfg = load_config(cli)?;
    let run = RunRecord::load(&args.run)?;
    let ocr = ocr_of(&cfg)?;
    let reference = match &args.reference {
        Some(dir) => Some(load_reference_set(dir)?.load_images()?),
        None => None,
    };
    let embedder = match reference {
        Some(_) => Some(embedder_of(&cfg)?),
        None => None,
    };
    let opts = EvalOptions {
        source: match args.source {
            SourceArg::Refined => ImageSource::Refined,
            SourceArg::Programmatic => ImageSource::Programmatic,
        },
        paradigm: match args.paradigm {
            ParadigmArg::OpenSourceDiffusion => Paradigm::OpenSourceDiffusion,
            ParadigmArg::CodeBased => Paradigm::CodeBased,
            ParadigmArg::ClosedSourceApi => Paradigm::ClosedSourceApi,
            ParadigmArg::Cage => Paradigm::Cage,
        },
        model: args.model.clone(),
        matching: match args.matching {
            MatchingArg::Independent => CerMatching::Independent,
            MatchingArg::Assignment => CerMatching::Assignment,
        },
        jobs: cfg.jobs,
    };
    let report = evaluate_run(
        &args.run,
        &run,
        reference.as_deref(),
        ocr.as_ref(),
        embedder.as_deref(),
        &opts,
    )?;
    write_text(&args.run.join(RUN_METRICS_FILE), &report.to_json())?;
    let table = render_report(std::slice::from_ref(&report), ReportLayout::AccuracyTable)?;
    write_text(&args.run.join(REPORT_FILE), &table)?;
    print!("{table}");
    for f in &report.failures {
        eprintln!("warning: {}: {}", f.prompt_id, f.message);
    }
    Ok(())
}

fn images_in(dir: &Path) -> anyhow::Result<Vec<RasterImage>> {
    Ok(load_reference_set(dir)?.load_images()?)
}

fn fid_cmd(cli: &Cli, a: &Path, b: &Path) -> anyhow::Result<()> {
    let cfg = load_config(cli)?;
    let embedder = embedder_of(&cfg)?;
    let fa = FeatureSet::new(&embed_all(embedder.as_ref(), &images_in(a)?)?)?;
    let fb = FeatureSet::new(&embed_all(embedder.as_ref(), &images_in(b)?)?)?;
    println!("{:.6}", fid(&fa, &fb)?);
    Ok(())
}

fn cost(args: &CostArgs) -> anyhow::Result<()> {
    let s = CostScenario {
        diagrams_per_deck: args.diagrams_per_deck,
        decks_per_week: args.decks_per_week,
        weeks_per_year: args.weeks_per_year,
        teachers: args.teachers,
        ..CostScenario::classroom(args.name.clone(), args.per_image)
    }
    .with_regen(
        args.regen,
        match args.retry {
            RetryArg::SingleRetry => RetryModel::SingleRetry,
            RetryArg::Geometric => RetryModel::Geometric,
        },
    );
    let b = effective_cost(&s).map_err(Failure::config)?;
    if args.json {
        println!("{}", serde_json::to_string_pretty(&b)?);
        return Ok(());
    }
    let mut report = MetricReport::new(Paradigm::ClosedSourceApi, "per image");
    report.cost_per_image = args.per_image;
    report.cost_scenario = Some(s);
    print!("{}", render_report(&[report], ReportLayout::CostTable)?);
    Ok(())
}

fn pairs_verify(
    cli: &Cli,
    run: Option<&Path>,
    prog: Option<&Path>,
    styled: Option<&Path>,
    threshold: Option<f64>,
) -> anyhow::Result<()> {
    let cfg = load_config(cli)?;
    let ocr = ocr_of(&cfg)?;
    let threshold = threshold.unwrap_or(cfg.iou_threshold);
    if !(0.0..=1.0).contains(&threshold) {
        return Err(Failure::config(anyhow!("threshold must lie in [0, 1]")));
    }
    let mut results = serde_json::Map::new();
    match (run, prog, styled) {
        (Some(run_dir), _, _) => {
            let record = RunRecord::load(run_dir)?;
            for p in record.succeeded() {
                let dir = run_dir.join(&p.dir);
                let prog = load_prog(&dir)?;
                let refined = RasterImage::read_png(&dir.join(REFINED_IMAGE))?;
                let v = verify_pair(&prog, &refined, ocr.as_ref(), threshold)?;
                results.insert(p.prompt.id.clone(), serde_json::to_value(v)?);
            }
        }
        (None, Some(prog), Some(styled)) => {
            let prog = RenderOutput {
                image: RasterImage::read_png(prog)?,
                regions: Vec::new(),
                structure: None,
                stdout: String::new(),
                stderr: String::new(),
                wall_time_ms: 0,
            };
            let v = verify_pair(&prog, &RasterImage::read_png(styled)?, ocr.as_ref(), threshold)?;
            results.insert("pair".into(), serde_json::to_value(v)?);
        }
        _ => return Err(Failure::config(anyhow!("give a run directory or --prog and --styled"))),
    }
    println!("{}", serde_json::to_string_pretty(&results)?);
    Ok(())
}

fn report(args: &ReportArgs) -> anyhow::Result<()> {
    let mut reports: Vec<MetricReport> = Vec::new();
    for path in &args.inputs {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let value: serde_json::Value =
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        if value.is_array() {
            reports.extend(serde_json::from_value::<Vec<MetricReport>>(value)?);
        } else {
            reports.push(serde_json::from_value(value)?);
        }
    }
    let layout = match args.layout {
        LayoutArg::AccuracyTable => ReportLayout::AccuracyTable,
        LayoutArg::CostTable => ReportLayout::CostTable,
    };
    let table = render_report(&reports, layout)?;
    match &args.out {
        Some(p) => write_text(p, &table)?,
        None => print!("{table}"),
    }
    Ok(())
}

fn agreement(path: &Path, metric: MetricArg) -> anyhow::Result<()> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let m = RatingMatrix::from_csv(&text).map_err(Failure::config)?;
    let metric = match metric {
        MetricArg::Ordinal => DifferenceMetric::Ordinal,
        MetricArg::Interval => DifferenceMetric::Interval,
    };
    let overall = if m.has_overall_ratings() { Some(&m) } else { None };
    let units = m.dimension_units().ok();
    let alpha_on = overall.or(units.as_ref()).ok_or_else(|| anyhow!("no ratings to compare"))?;
    println!("alpha ({}) = {:.4}", if overall.is_some() { "overall" } else { "dimension units" }, krippendorff_alpha(alpha_on, metric)?);
    if let Ok(h) = hva_composite(&m) {
        println!("hva = {h:.3}");
    }
    Ok(())
}

fn review(cli: &Cli, cmd: &ReviewCmd) -> anyhow::Result<()> {
    match cmd {
        ReviewCmd::Serve { store, bind } => {
            let (cfg, q) = store.open()?;
            let addr = bind.unwrap_or(cfg.bind);
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(cage_review::server::serve(Arc::new(q), addr))?;
        }
        ReviewCmd::Enqueue { run, strengths, store } => {
            let cfg = load_config(cli)?;
            let backends = Backends::from_config(&cfg.backends).map_err(Failure::config)?;
            let (_, q) = store.open()?;
            let record = RunRecord::load(run)?;
            let n = cage_review::enqueue_candidates(&q, run, &record, strengths, &backends, &cfg)?;
            println!("enqueued {n} candidates");
        }
        ReviewCmd::Regenerate { store } => {
            let cfg = load_config(cli)?;
            let backends = Backends::from_config(&cfg.backends).map_err(Failure::config)?;
            let (_, q) = store.open()?;
            for id in cage_review::run_regenerations(&q, &backends, &cfg)? {
                println!("enqueued {id}");
            }
        }
        ReviewCmd::Stats { store } => {
            let (_, q) = store.open()?;
            println!("{}", serde_json::to_string_pretty(&q.stats())?);
        }
        ReviewCmd::Correct {
            pair_id,
            image,
            reviewer,
            store,
        } => {
            let (_, q) = store.open()?;
            q.mark_corrected(pair_id, image, reviewer)?;
            println!("{pair_id} marked manually corrected");
        }
    }
    Ok(())
}

fn dispatch(cli: &Cli) -> anyhow::Result<()> {
    match &cli.command {
        Command::Bench(BenchCmd::Validate { manifest, strata }) => bench_validate(manifest, *strata),
        Command::Pipeline(PipelineCmd::Run { manifest, out }) => pipeline_run(cli, manifest, out),
        Command::Eval(args) => eval(cli, args),
        Command::Fid { a, b } => fid_cmd(cli, a, b),
        Command::Cost(args) => cost(args),
        Command::Pairs(PairsCmd::Verify {
            run,
            prog,
            styled,
            threshold,
        }) => pairs_verify(cli, run.as_deref(), prog.as_deref(), styled.as_deref(), *threshold),
        Command::Report(args) => report(args),
        Command::Agreement { ratings, metric } => agreement(ratings, *metric),
        Command::Review(cmd) => review(cli, cmd),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let code = e.downcast_ref::<Failure>().map_or(1, |f| f.code);
            eprintln!("error: {e:#}");
            ExitCode::from(code)
        }
    }
}
