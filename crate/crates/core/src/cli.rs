//! The `jigsaw` command line: dataset generation, training, solving,
//! evaluation, sweeps and timing.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::baselines::{train_hung_perm, HungPermNet};
use crate::dataset::{
    generate_dataset, load_dataset, load_image_dir, read_split, synthetic_images, Subset,
    DEFAULT_PIECE_SIZE,
};
use crate::error::{Error, Result};
use crate::eval::{
    direct_accuracy, emit_report, neighbor_accuracy, robustness_sweep, time_solver, EvalRecord,
    EvalReport, GreedySolver, HungPermSolver, MatcherSolver, Regime, Solver, TimingReport,
};
use crate::imageio::{load_image, save_image};
use crate::matcher::{
    train_matcher, Embedder, EmbeddingNet, ExternalProvider, MeanProvider, MentalImageProvider,
    OracleProvider, RawPixelEmbedder, SolveConfig, TrainConfig,
};
use crate::puzzle::{
    load_puzzle, read_permutation_file, reassemble, write_permutation_file,
    PuzzleInstance, MANIFEST_FILE,
};

#[derive(Debug, Parser)]
#[command(name = "jigsaw", version, about = "Jigsaw puzzle solving with mental-image matching")]
pub struct Cli {
    /// Worker threads for parallel stages (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    pub jobs: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Cut images into shuffled puzzles at several grid sizes.
    Generate(GenerateArgs),
    /// Train the matcher or the hung-perm baseline.
    Train(TrainArgs),
    /// Solve one puzzle or a dataset subset.
    Solve(SolveArgs),
    /// Score permutation files against ground truth.
    Eval(EvalArgs),
    /// Time solvers on a set of puzzles.
    Bench(BenchArgs),
    /// Evaluate a solver under missing pieces, noise and erosion.
    Sweep(SweepArgs),
}

fn parse_size(s: &str) -> std::result::Result<usize, String> {
    match s.trim().parse::<usize>() {
        Ok(0) => Err("grid sizes must be positive".into()),
        Ok(k) => Ok(k),
        Err(e) => Err(format!("{s:?}: {e}")),
    }
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Directory of source images.
    #[arg(long, conflicts_with = "synthetic", required_unless_present = "synthetic")]
    pub input_dir: Option<PathBuf>,
    /// Generate this many procedural images instead of reading a directory.
    #[arg(long)]
    pub synthetic: Option<usize>,
    /// Side of the procedural images in pixels.
    #[arg(long, default_value_t = 384)]
    pub image_side: usize,
    #[arg(long, value_parser = parse_size, value_delimiter = ',', default_value = "2,4,6,8,10,12")]
    pub sizes: Vec<usize>,
    /// Piece side in pixels; images are center-cropped and resampled to fit.
    #[arg(long, default_value_t = DEFAULT_PIECE_SIZE)]
    pub piece_size: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

/// Mental-image provider: `oracle`, `oracle:<blur sigma>`, `mean`, or
/// `external:<path>`.
#[derive(Clone, Debug, PartialEq)]
pub enum ProviderSpec {
    Oracle(f64),
    Mean,
    External(PathBuf),
}

impl FromStr for ProviderSpec {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.split_once(':') {
            None if s == "oracle" => Ok(ProviderSpec::Oracle(0.0)),
            None if s == "mean" => Ok(ProviderSpec::Mean),
            Some(("oracle", r)) => r
                .parse::<f64>()
                .ok()
                .filter(|r| *r >= 0.0 && r.is_finite())
                .map(ProviderSpec::Oracle)
                .ok_or_else(|| format!("bad blur radius {r:?}")),
            Some(("external", p)) if !p.is_empty() => Ok(ProviderSpec::External(p.into())),
            _ => Err(format!(
                "unknown provider {s:?}; expected oracle[:blur], mean or external:<path>"
            )),
        }
    }
}

impl ProviderSpec {
    /// `data_root` supplies the training images for `mean`.
    fn build(&self, data_root: Option<&Path>, piece_side: usize) -> Result<Box<dyn MentalImageProvider + Send>> {
        Ok(match self {
            ProviderSpec::Oracle(r) => Box::new(OracleProvider::new(*r)),
            ProviderSpec::External(p) => Box::new(ExternalProvider::new(p)),
            ProviderSpec::Mean => {
                let root = data_root.ok_or_else(|| {
                    Error::InvalidArgument("the mean provider needs a dataset root".into())
                })?;
                let (train, _) = read_split(root)?;
                let images = train
                    .iter()
                    .map(|id| load_image(&root.join("images").join(format!("{id}.png"))))
                    .collect::<Result<Vec<_>>>()?;
                let side = images
                    .iter()
                    .map(|i| i.height().min(i.width()))
                    .min()
                    .unwrap_or(piece_side)
                    .max(piece_side);
                let squares: Vec<_> = images.iter().map(|i| i.center_square()).collect();
                Box::new(MeanProvider::from_images(&squares, side)?)
            }
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ModelKind {
    Matcher,
    HungPerm,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SolverKind {
    Matcher,
    HungPerm,
    Greedy,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Dataset root written by `generate`; the train split is used.
    #[arg(long)]
    pub data: PathBuf,
    /// Restrict training to these grid sizes.
    #[arg(long, value_parser = parse_size, value_delimiter = ',')]
    pub sizes: Option<Vec<usize>>,
    #[arg(long, value_enum, default_value_t = ModelKind::Matcher)]
    pub model: ModelKind,
    #[arg(long, default_value_t = 50)]
    pub epochs: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 0.1)]
    pub tau: f64,
    #[arg(long, default_value_t = 64)]
    pub embedding_dim: usize,
    #[arg(long, default_value_t = 8)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 20)]
    pub sinkhorn_iters: usize,
    #[arg(long, default_value = "oracle:2")]
    pub provider: ProviderSpec,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output weights file.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SolverArgs {
    #[arg(long, value_enum, default_value_t = SolverKind::Matcher)]
    pub solver: SolverKind,
    #[arg(long, default_value = "oracle:2")]
    pub provider: ProviderSpec,
    /// Weights file; repeat for one hung-perm model per grid size. Without
    /// weights the matcher compares raw pixels.
    #[arg(long)]
    pub weights: Vec<PathBuf>,
    #[arg(long, default_value_t = 0.1)]
    pub tau: f64,
    #[arg(long, default_value_t = 100)]
    pub sinkhorn_iters: usize,
}

#[derive(Debug, Args)]
pub struct PuzzleSource {
    /// A single puzzle directory.
    #[arg(long, conflicts_with = "data", required_unless_present = "data")]
    pub puzzle: Option<PathBuf>,
    /// A dataset root.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long, default_value = "test")]
    pub subset: String,
    #[arg(long, value_parser = parse_size, value_delimiter = ',')]
    pub sizes: Option<Vec<usize>>,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    #[command(flatten)]
    pub source: PuzzleSource,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// Permutation file with one line per puzzle, sorted by puzzle id.
    #[arg(long)]
    pub out: PathBuf,
    /// Reassembled image (single puzzle only).
    #[arg(long)]
    pub image: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Predicted permutation files (comma-separated or repeated).
    #[arg(long, value_delimiter = ',', required = true)]
    pub pred: Vec<PathBuf>,
    /// Ground-truth permutation files, paired with `--pred` in order.
    #[arg(long, value_delimiter = ',', required = true)]
    pub gt: Vec<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "direct,neighbor")]
    pub metrics: Vec<String>,
    /// Grid as `<rows>x<cols>`; inferred from square piece counts otherwise.
    #[arg(long)]
    pub grid: Option<String>,
    /// Solver label in the report; defaults to each prediction file's stem.
    #[arg(long)]
    pub solver_tag: Option<String>,
    /// Report directory (`eval.csv`, `eval.json`, `eval.txt`).
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Dataset root or single puzzle directory.
    #[arg(long)]
    pub puzzles: PathBuf,
    #[arg(long, default_value = "test")]
    pub subset: String,
    #[arg(long, value_parser = parse_size, value_delimiter = ',', default_value = "6")]
    pub sizes: Vec<usize>,
    #[arg(long, value_delimiter = ',', value_enum, default_value = "matcher,greedy")]
    pub solvers: Vec<SolverKind>,
    #[arg(long, default_value = "oracle:2")]
    pub provider: ProviderSpec,
    /// Matcher weights; raw pixels when omitted.
    #[arg(long)]
    pub weights: Option<PathBuf>,
    /// Hung-perm weights, one file per grid size.
    #[arg(long)]
    pub hung_perm_weights: Vec<PathBuf>,
    #[arg(long, default_value_t = 24)]
    pub samples: usize,
    #[arg(long, default_value_t = 3)]
    pub warmup: usize,
    #[arg(long, default_value_t = 0.1)]
    pub tau: f64,
    /// Optional JSON output.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub source: PuzzleSource,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// Comma-separated regimes such as `missing:0.1,noise:0.05,erode:2`, or
    /// `standard` for the full grid.
    #[arg(long, default_value = "standard")]
    pub regimes: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Report directory (`sweep.csv`, `sweep.json`, `sweep.txt`).
    #[arg(long)]
    pub out: PathBuf,
}

fn load_source(source: &PuzzleSource) -> Result<(Vec<PuzzleInstance>, Option<PathBuf>)> {
    if let Some(dir) = &source.puzzle {
        let puzzle = load_puzzle(dir)?;
        // A puzzle inside a dataset (<root>/puzzles/<name>) knows its root.
        let root = dir
            .parent()
            .and_then(Path::parent)
            .filter(|r| r.join(crate::dataset::SPLIT_FILE).exists())
            .map(Path::to_path_buf);
        return Ok((vec![puzzle], root));
    }
    let root = source.data.clone().expect("clap requires --puzzle or --data");
    let subset: Subset = source.subset.parse()?;
    let puzzles = load_dataset(&root, subset, source.sizes.as_deref())?;
    if puzzles.is_empty() {
        return Err(Error::EmptyDataset);
    }
    Ok((puzzles, Some(root)))
}

fn build_solver(
    kind: SolverKind,
    provider: &ProviderSpec,
    weights: &[PathBuf],
    tau: f64,
    sinkhorn_iters: usize,
    data_root: Option<&Path>,
    piece_side: usize,
) -> Result<Box<dyn Solver + Send>> {
    let config = SolveConfig {
        sinkhorn_iters,
        tau,
        ..SolveConfig::default()
    };
    Ok(match kind {
        SolverKind::Greedy => Box::new(GreedySolver),
        SolverKind::HungPerm => {
            if weights.is_empty() {
                return Err(Error::InvalidArgument("hung-perm needs --weights".into()));
            }
            let models = weights.iter().map(|w| HungPermNet::load(w)).collect::<Result<Vec<_>>>()?;
            Box::new(HungPermSolver::new(models, config))
        }
        SolverKind::Matcher => {
            let provider = provider.build(data_root, piece_side)?;
            let embedder: Box<dyn Embedder + Send> = match weights {
                [] => Box::new(RawPixelEmbedder),
                [w] => Box::new(EmbeddingNet::load(w)?),
                _ => return Err(Error::InvalidArgument("the matcher takes one weights file".into())),
            };
            Box::new(MatcherSolver::new(provider, embedder, config))
        }
    })
}

fn cmd_generate(args: &GenerateArgs) -> Result<()> {
    let images = match (&args.input_dir, args.synthetic) {
        (Some(dir), _) => load_image_dir(dir)?,
        (None, Some(n)) => {
            if n == 0 {
                return Err(Error::InvalidArgument("--synthetic needs at least one image".into()));
            }
            synthetic_images(n, args.image_side, &args.sizes, args.piece_size, args.seed)
        }
        (None, None) => unreachable!("clap requires a source"),
    };
    let summary = generate_dataset(&images, &args.sizes, args.piece_size, args.seed, &args.out)?;
    println!(
        "wrote {} puzzles from {} images ({} train / {} test) to {}",
        summary.puzzles,
        images.len(),
        summary.train.len(),
        summary.test.len(),
        args.out.display()
    );
    Ok(())
}

fn cmd_train(args: &TrainArgs) -> Result<()> {
    let puzzles = load_dataset(&args.data, Subset::Train, args.sizes.as_deref())?;
    if puzzles.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let config = TrainConfig {
        tau: args.tau,
        learning_rate: args.lr,
        epochs: args.epochs,
        batch_size: args.batch_size,
        seed: args.seed,
        sinkhorn_iters: args.sinkhorn_iters,
        embedding_dim: args.embedding_dim,
        ..TrainConfig::default()
    };
    let last = match args.model {
        ModelKind::Matcher => {
            let provider = args.provider.build(Some(&args.data), puzzles[0].piece_side())?;
            let out = train_matcher(&puzzles, &provider, &config)?;
            out.net.save(&args.out)?;
            out.epochs.last().map(|e| e.mean_loss)
        }
        ModelKind::HungPerm => {
            let grids: std::collections::BTreeSet<_> = puzzles.iter().map(|p| (p.rows(), p.cols())).collect();
            if grids.len() != 1 {
                return Err(Error::InvalidArgument(format!(
                    "hung-perm trains one model per grid size; pass --sizes to pick one of {grids:?}"
                )));
            }
            let out = train_hung_perm(&puzzles, &config)?;
            out.net.save(&args.out)?;
            out.epochs.last().map(|e| e.mean_loss)
        }
    };
    println!(
        "trained on {} puzzles; final loss {}; weights in {}",
        puzzles.len(),
        last.map_or("n/a".to_string(), |l| format!("{l:.5}")),
        args.out.display()
    );
    Ok(())
}

fn cmd_solve(args: &SolveArgs) -> Result<()> {
    let (puzzles, root) = load_source(&args.source)?;
    let s = &args.solver;
    let solver = build_solver(
        s.solver,
        &s.provider,
        &s.weights,
        s.tau,
        s.sinkhorn_iters,
        root.as_deref(),
        puzzles[0].piece_side(),
    )?;
    use rayon::prelude::*;
    let preds = puzzles
        .par_iter()
        .map(|p| solver.solve(&p.anonymized()))
        .collect::<Result<Vec<_>>>()?;
    write_permutation_file(&args.out, &preds)?;
    if let Some(image) = &args.image {
        if puzzles.len() != 1 {
            return Err(Error::InvalidArgument("--image needs a single --puzzle".into()));
        }
        save_image(&reassemble(&puzzles[0], &preds[0])?, image)?;
    }
    let mean = puzzles
        .iter()
        .zip(&preds)
        .map(|(p, pred)| direct_accuracy(pred, p.gt_permutation(), &p.present_mask()))
        .collect::<Result<Vec<_>>>()?;
    println!(
        "{}: solved {} puzzles; direct accuracy against stored ground truth {:.4}",
        solver.tag(),
        puzzles.len(),
        mean.iter().sum::<f64>() / mean.len() as f64
    );
    Ok(())
}

fn parse_grid(s: &str) -> Result<(usize, usize)> {
    s.split_once('x')
        .and_then(|(r, c)| Some((r.parse().ok()?, c.parse().ok()?)))
        .filter(|&(r, c): &(usize, usize)| r > 0 && c > 0)
        .ok_or_else(|| Error::InvalidArgument(format!("bad grid {s:?}, expected <rows>x<cols>")))
}

fn infer_grid(n: usize) -> Result<(usize, usize)> {
    let k = (n as f64).sqrt().round() as usize;
    if k * k != n {
        return Err(Error::InvalidArgument(format!(
            "{n} pieces is not a square grid; pass --grid"
        )));
    }
    Ok((k, k))
}

/// Scores paired permutation files; every line is one puzzle.
pub fn eval_files(
    preds: &[PathBuf],
    gts: &[PathBuf],
    grid: Option<(usize, usize)>,
    solver_tag: Option<&str>,
) -> Result<EvalReport> {
    if preds.len() != gts.len() {
        return Err(Error::SizeMismatch(format!(
            "{} prediction files but {} ground-truth files",
            preds.len(),
            gts.len()
        )));
    }
    let mut records = Vec::new();
    for (pf, gf) in preds.iter().zip(gts) {
        let (p, g) = (read_permutation_file(pf)?, read_permutation_file(gf)?);
        if p.len() != g.len() {
            return Err(Error::SizeMismatch(format!(
                "{} has {} lines, {} has {}",
                pf.display(),
                p.len(),
                gf.display(),
                g.len()
            )));
        }
        let stem = gf.file_stem().and_then(|s| s.to_str()).unwrap_or("gt");
        let solver = solver_tag
            .or_else(|| pf.file_stem().and_then(|s| s.to_str()))
            .unwrap_or("pred");
        for (line, (pred, gt)) in p.iter().zip(&g).enumerate() {
            let (rows, cols) = match grid {
                Some(g) => g,
                None => infer_grid(gt.len())?,
            };
            records.push(EvalRecord {
                puzzle_id: format!("{stem}#{line:05}"),
                solver: solver.to_string(),
                rows,
                cols,
                perturbation: "clean".into(),
                direct_accuracy: direct_accuracy(pred, gt, &vec![true; gt.len()])?,
                neighbor_accuracy: neighbor_accuracy(pred, gt, rows, cols)?,
                wall_time_ms: 0.0,
            });
        }
    }
    Ok(EvalReport::new(records, BTreeMap::new()))
}

fn cmd_eval(args: &EvalArgs) -> Result<()> {
    for m in &args.metrics {
        if m != "direct" && m != "neighbor" {
            return Err(Error::InvalidArgument(format!("unknown metric {m:?}")));
        }
    }
    let grid = args.grid.as_deref().map(parse_grid).transpose()?;
    let report = eval_files(&args.pred, &args.gt, grid, args.solver_tag.as_deref())?;
    emit_report(&report, &args.out, "eval")?;
    for a in &report.aggregates {
        let mut line = format!("{} {} n={}", a.solver, a.grid, a.count);
        if args.metrics.iter().any(|m| m == "direct") {
            line += &format!(" direct {:.4} ± {:.4}", a.direct_mean, a.direct_stderr);
        }
        if args.metrics.iter().any(|m| m == "neighbor") {
            line += &format!(" neighbor {:.4} ± {:.4}", a.neighbor_mean, a.neighbor_stderr);
        }
        println!("{line}");
    }
    Ok(())
}

fn cmd_bench(args: &BenchArgs) -> Result<()> {
    let source = if args.puzzles.join(MANIFEST_FILE).exists() {
        PuzzleSource {
            puzzle: Some(args.puzzles.clone()),
            data: None,
            subset: args.subset.clone(),
            sizes: None,
        }
    } else {
        PuzzleSource {
            puzzle: None,
            data: Some(args.puzzles.clone()),
            subset: args.subset.clone(),
            sizes: Some(args.sizes.clone()),
        }
    };
    let (puzzles, root) = load_source(&source)?;
    let samples: Vec<PuzzleInstance> = puzzles.iter().cycle().take(args.samples).cloned().collect();
    let mut reports: Vec<TimingReport> = Vec::new();
    for &kind in &args.solvers {
        let weights: Vec<PathBuf> = match kind {
            SolverKind::Greedy => vec![],
            SolverKind::Matcher => args.weights.iter().cloned().collect(),
            SolverKind::HungPerm => args.hung_perm_weights.clone(),
        };
        let solver = build_solver(kind, &args.provider, &weights, args.tau, 100, root.as_deref(), samples[0].piece_side())?;
        let t = time_solver(&samples, &solver, args.warmup)?;
        println!("{:<32} {} ms", t.solver, t.formatted());
        reports.push(t);
    }
    if let Some(out) = &args.out {
        std::fs::write(out, serde_json::to_string_pretty(&reports)?)
            .map_err(|e| Error::io(format!("writing {}", out.display()), e))?;
    }
    Ok(())
}

/// `standard` or a comma-separated list of regime labels.
pub fn parse_regimes(s: &str) -> Result<Vec<Regime>> {
    if s == "standard" {
        return Ok(Regime::standard());
    }
    s.split(',').filter(|v| !v.is_empty()).map(str::parse).collect()
}

fn cmd_sweep(args: &SweepArgs, jobs: usize) -> Result<()> {
    let (puzzles, root) = load_source(&args.source)?;
    let s = &args.solver;
    let solver = build_solver(
        s.solver,
        &s.provider,
        &s.weights,
        s.tau,
        s.sinkhorn_iters,
        root.as_deref(),
        puzzles[0].piece_side(),
    )?;
    let regimes = parse_regimes(&args.regimes)?;
    let report = robustness_sweep(&puzzles, &solver, &regimes, args.seed, jobs)?;
    emit_report(&report, &args.out, "sweep")?;
    print!("{}", report.table());
    Ok(())
}

pub fn execute(cli: &Cli) -> Result<()> {
    if cli.jobs > 0 {
        // Only the first call configures the global pool.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(cli.jobs).build_global();
    }
    match &cli.command {
        Command::Generate(a) => cmd_generate(a),
        Command::Train(a) => cmd_train(a),
        Command::Solve(a) => cmd_solve(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Bench(a) => cmd_bench(a),
        Command::Sweep(a) => cmd_sweep(a, cli.jobs),
    }
}

/// Entry point of the binary. Verbosity comes from `JIGSAW_LOG`
/// (`error`, `warn`, `info`, `debug`, `trace`; default `info`).
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let _ = env_logger::Builder::from_env(env_logger::Env::new().filter_or("JIGSAW_LOG", "info"))
        .format_timestamp(None)
        .try_init();
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
