use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use spca::bench::{run_experiment_csv, ExperimentConfig, ExperimentKind, LambdaPolicy};
use spca::matops::io::{load_matrix, save_matrix};
use spca::modelsel::{cv_select_lambda, log_grid, write_cv_csv, CvGrid, LambdaGrid, WEIGHT_FLOOR};
use spca::satc::{
    image_codec_train, pca_tc_train, read_bank, read_codec, read_pgm, read_stream, satc_decode, satc_encode, satc_train, write_bank,
    write_codec, write_pgm, write_stream, BankConfig, Domain, GrayImage, TransformKind,
};
use spca::spca::io::save_model;
use spca::spca::{adaptive_weights, fit, pca_basis, SpcaConfig, Solver};
use spca::synth::{gen_colored_noise, gen_sparse_basis, sample_gaussian, save_synth};
use spca::{Error, Matrix, Result};

#[derive(Parser)]
#[command(name = "spca", version, about = "Sparsity-aware PCA, cross-validation, transform coding and experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit S-PCA to a p×n data matrix (CSV or MATX).
    Fit(FitArgs),
    /// Cross-validate a shared λ over a log-spaced grid.
    Cv(CvArgs),
    /// Generate a sparse-basis signal model and samples from it.
    Synth(SynthArgs),
    /// Train a codec on a data matrix or a bank of block codecs on a PGM directory.
    SatcTrain(TrainArgs),
    /// Encode a PGM image to an index stream, or matrix columns to an index list.
    SatcEncode(EncodeArgs),
    /// Decode an index stream to a PGM image, or an index list to a matrix.
    SatcDecode(DecodeArgs),
    /// Run a Monte-Carlo experiment and write metrics as CSV.
    Experiment(ExperimentArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum SolverArg {
    Ecd,
    Bcd,
}

#[derive(Args)]
struct SolverOpts {
    /// Reduced dimension.
    #[arg(long)]
    q: Option<usize>,
    /// Shared sparsity penalty.
    #[arg(long)]
    lambda: Option<f64>,
    /// Per-row penalties, comma separated (overrides --lambda).
    #[arg(long, value_delimiter = ',')]
    lambdas: Option<Vec<f64>>,
    /// Coupling weight between B and Cᵀ.
    #[arg(long)]
    mu: Option<f64>,
    #[arg(long, value_enum)]
    solver: Option<SolverArg>,
    #[arg(long)]
    max_sweeps: Option<usize>,
    /// Absolute stopping threshold on the per-sweep cost change.
    #[arg(long)]
    tol: Option<f64>,
    /// Entrywise weights |PCA estimate|^(-gamma).
    #[arg(long)]
    adaptive_gamma: Option<f64>,
    /// Solver settings as JSON; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
}

impl SolverOpts {
    fn build(&self, x: &Matrix) -> Result<SpcaConfig> {
        let mut cfg = match &self.config {
            Some(path) => serde_json::from_str(&fs::read_to_string(path)?)?,
            None => SpcaConfig::new(self.q.ok_or_else(|| Error::Config("--q is required".into()))?, 0.0),
        };
        if let Some(q) = self.q {
            if q != cfg.q {
                cfg.lambdas = vec![cfg.lambdas.first().copied().unwrap_or(0.0); q];
                cfg.weights = None;
                cfg.q = q;
            }
        }
        if let Some(l) = self.lambda {
            cfg.lambdas = vec![l; cfg.q];
        }
        if let Some(ls) = &self.lambdas {
            cfg.lambdas = ls.clone();
        }
        if let Some(mu) = self.mu {
            cfg.mu = mu;
        }
        if let Some(s) = self.solver {
            cfg.solver = match s {
                SolverArg::Ecd => Solver::Ecd,
                SolverArg::Bcd => Solver::Bcd,
            };
        }
        if let Some(m) = self.max_sweeps {
            cfg.max_sweeps = m;
        }
        if let Some(t) = self.tol {
            cfg.tol = Some(t);
        }
        if let Some(g) = self.adaptive_gamma {
            cfg.weights = Some(adaptive_weights(&pca_basis(x, cfg.q)?, g, WEIGHT_FLOOR));
        }
        cfg.validate(x.rows())?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct FitArgs {
    /// Data matrix, one sample per column.
    #[arg(long)]
    input: PathBuf,
    #[command(flatten)]
    solver: SolverOpts,
    /// Model output; the solver settings go to `<model>.json`.
    #[arg(long)]
    model: PathBuf,
    /// Optional `sweep,cost` CSV of the cost trace.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Optional output of the orthonormal basis (p×q).
    #[arg(long)]
    basis: Option<PathBuf>,
}

#[derive(Args)]
struct CvArgs {
    #[arg(long)]
    input: PathBuf,
    #[command(flatten)]
    solver: SolverOpts,
    #[arg(long, default_value_t = 1e-3)]
    lambda_min: f64,
    #[arg(long, default_value_t = 1e2)]
    lambda_max: f64,
    #[arg(long, default_value_t = 16)]
    points: usize,
    #[arg(long, default_value_t = 5)]
    folds: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// CSV output (`lambda,jrec,stderr`).
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 14)]
    p: usize,
    #[arg(long, default_value_t = 8)]
    r: usize,
    #[arg(long, default_value_t = 2)]
    groups: usize,
    #[arg(long, default_value_t = 0.8)]
    zero_fraction: f64,
    /// Observation SNR in dB; omit for noiseless data.
    #[arg(long)]
    snr_db: Option<f64>,
    /// Number of samples to draw.
    #[arg(long, default_value_t = 50)]
    n: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, default_value = "synth")]
    stem: String,
}

#[derive(Clone, Copy, ValueEnum)]
enum TransformArg {
    Spca,
    Pca,
}

#[derive(Clone, Copy, ValueEnum)]
enum DomainArg {
    Dct,
    Pixel,
}

#[derive(Args)]
struct TrainArgs {
    /// Training matrix, one sample per column.
    #[arg(long, conflicts_with = "images", required_unless_present = "images")]
    input: Option<PathBuf>,
    /// Directory of equally sized PGM images.
    #[arg(long)]
    images: Option<PathBuf>,
    #[command(flatten)]
    solver: SolverOpts,
    /// Bits per reduced vector; omit to skip quantization.
    #[arg(long)]
    rate: Option<u32>,
    #[arg(long, value_enum, default_value = "spca")]
    transform: TransformArg,
    #[arg(long, value_enum, default_value = "dct")]
    domain: DomainArg,
    /// One codec for every block position.
    #[arg(long)]
    shared: bool,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Codec (matrix input) or codec bank (image input) output.
    #[arg(long)]
    codec: PathBuf,
}

#[derive(Args)]
struct EncodeArgs {
    #[arg(long)]
    codec: PathBuf,
    #[arg(long, conflicts_with = "input", required_unless_present = "input")]
    image: Option<PathBuf>,
    #[arg(long)]
    input: Option<PathBuf>,
    /// Index stream (image) or one index per line (matrix).
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args)]
struct DecodeArgs {
    #[arg(long)]
    codec: PathBuf,
    /// Index stream or index list from `satc-encode`.
    #[arg(long)]
    stream: PathBuf,
    /// PGM image (bank codec) or matrix (vector codec).
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args)]
struct ExperimentArgs {
    /// mse_vs_q, mse_vs_snr, estmse_vs_n, support_vs_n, rate_distortion, cv_curve or image_pipeline.
    experiment: Option<String>,
    /// Experiment settings as JSON; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Use the full Monte-Carlo count.
    #[arg(long)]
    full: bool,
    #[arg(long)]
    p: Option<usize>,
    #[arg(long)]
    r: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    q: Option<Vec<usize>>,
    #[arg(long)]
    groups: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    n_train: Option<Vec<usize>>,
    #[arg(long)]
    n_test: Option<usize>,
    #[arg(long)]
    mc_runs: Option<usize>,
    #[arg(long)]
    zero_fraction: Option<f64>,
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    snr_db: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    rate_bits: Option<Vec<u32>>,
    /// Fixed λ for every entry.
    #[arg(long, conflicts_with_all = ["lambda_scale", "gamma"])]
    lambda: Option<f64>,
    /// Adaptive policy: λ = scale·n^0.3/n.
    #[arg(long)]
    lambda_scale: Option<f64>,
    /// Adaptive weight exponent.
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    lambda_grid: Option<Vec<f64>>,
    #[arg(long)]
    calib_runs: Option<usize>,
    #[arg(long)]
    mu: Option<f64>,
    #[arg(long)]
    max_sweeps: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    taus: Option<Vec<usize>>,
    #[arg(long)]
    with_bcd: bool,
    #[arg(long)]
    folds: Option<usize>,
    #[arg(long)]
    image_dir: Option<PathBuf>,
    #[arg(long)]
    train_images: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    threads: Option<usize>,
    /// CSV output path.
    #[arg(long)]
    output: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config() { 2 } else { 3 })
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Fit(a) => cmd_fit(a),
        Command::Cv(a) => cmd_cv(a),
        Command::Synth(a) => cmd_synth(a),
        Command::SatcTrain(a) => cmd_train(a),
        Command::SatcEncode(a) => cmd_encode(a),
        Command::SatcDecode(a) => cmd_decode(a),
        Command::Experiment(a) => cmd_experiment(a),
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn cmd_fit(a: FitArgs) -> Result<()> {
    let x = load_matrix(&a.input)?;
    let cfg = a.solver.build(&x)?;
    let model = fit(&x, &cfg, None)?;
    save_model(&a.model, &model, &cfg)?;
    if let Some(path) = &a.trace {
        let mut out = create(path)?;
        writeln!(out, "sweep,cost")?;
        for (k, c) in model.cost_trace.iter().enumerate() {
            writeln!(out, "{k},{c}")?;
        }
        out.flush()?;
    }
    if let Some(path) = &a.basis {
        let basis = model.basis.clone().ok_or(Error::ZeroMatrix)?;
        save_matrix(path, &basis)?;
    }
    println!(
        "sweeps={} converged={} rank={} cost={}",
        model.sweeps,
        model.converged,
        model.rank,
        model.final_cost()
    );
    Ok(())
}

fn cmd_cv(a: CvArgs) -> Result<()> {
    let x = load_matrix(&a.input)?;
    let template = a.solver.build(&x)?;
    let grid = CvGrid {
        lambdas: LambdaGrid::Shared(log_grid(a.lambda_min, a.lambda_max, a.points)),
        folds: a.folds,
        seed: a.seed,
        adaptive_gamma: a.solver.adaptive_gamma,
    };
    let result = cv_select_lambda(&x, &grid, &template)?;
    let mut out = create(&a.output)?;
    write_cv_csv(&result, &mut out)?;
    out.flush()?;
    println!("best_lambda={}", result.best[0]);
    Ok(())
}

fn cmd_synth(a: SynthArgs) -> Result<()> {
    let mut model = gen_sparse_basis(a.p, a.r, a.groups, a.zero_fraction, a.seed)?;
    if let Some(snr) = a.snr_db {
        model = gen_colored_noise(&model, snr, spca::rng::derive_seed(a.seed, 1))?;
    }
    fs::create_dir_all(&a.out_dir)?;
    save_synth(&a.out_dir, &a.stem, &model)?;
    let (s, x) = sample_gaussian(&model, a.n, spca::rng::derive_seed(a.seed, 2), a.snr_db.is_some())?;
    save_matrix(&a.out_dir.join(format!("{}.x.csv", a.stem)), &x)?;
    save_matrix(&a.out_dir.join(format!("{}.s.csv", a.stem)), &s)?;
    Ok(())
}

fn cmd_train(a: TrainArgs) -> Result<()> {
    if let Some(dir) = &a.images {
        let images = spca::bench::read_pgm_dir(dir)?;
        let probe = Matrix::zeros(64, 1);
        let q = a.solver.q.ok_or_else(|| Error::Config("--q is required".into()))?;
        let transform = match a.transform {
            TransformArg::Spca => TransformKind::Spca(a.solver.build(&probe.clone())?),
            TransformArg::Pca => TransformKind::Pca,
        };
        let cfg = BankConfig {
            domain: match a.domain {
                DomainArg::Dct => Domain::Dct,
                DomainArg::Pixel => Domain::Pixel,
            },
            shared: a.shared,
            seed: a.seed,
            ..BankConfig::new(transform, q, a.rate)
        };
        let bank = image_codec_train(&images, &cfg)?;
        let mut out = create(&a.codec)?;
        write_bank(&bank, &mut out)?;
        out.flush()?;
        return Ok(());
    }
    let x = load_matrix(a.input.as_deref().expect("clap requires one input"))?;
    let codec = match a.transform {
        TransformArg::Spca => {
            let cfg = a.solver.build(&x)?;
            satc_train(&x, cfg.q, a.rate, &cfg, a.seed)?
        }
        TransformArg::Pca => {
            let q = a.solver.q.ok_or_else(|| Error::Config("--q is required".into()))?;
            pca_tc_train(&x, q, a.rate, a.seed)?
        }
    };
    let mut out = create(&a.codec)?;
    write_codec(&codec, &mut out)?;
    out.flush()?;
    Ok(())
}

fn magic(path: &Path) -> Result<[u8; 4]> {
    let mut m = [0u8; 4];
    File::open(path)?.read_exact(&mut m)?;
    Ok(m)
}

fn cmd_encode(a: EncodeArgs) -> Result<()> {
    match &a.image {
        Some(img_path) => {
            let bank = read_bank(BufReader::new(File::open(&a.codec)?))?;
            let enc = bank.encode_image(&read_pgm(img_path)?)?;
            let mut out = create(&a.output)?;
            write_stream(&enc, &mut out)?;
            out.flush()?;
        }
        None => {
            let codec = read_codec(BufReader::new(File::open(&a.codec)?))?;
            let x = load_matrix(a.input.as_deref().expect("clap requires one input"))?;
            let mut out = create(&a.output)?;
            for t in 0..x.cols() {
                writeln!(out, "{}", satc_encode(&codec, &x.col(t))?)?;
            }
            out.flush()?;
        }
    }
    Ok(())
}

fn cmd_decode(a: DecodeArgs) -> Result<()> {
    if &magic(&a.codec)? == b"SBNK" {
        let bank = read_bank(BufReader::new(File::open(&a.codec)?))?;
        let enc = read_stream(BufReader::new(File::open(&a.stream)?))?;
        let img: GrayImage = bank.decode_image(&enc)?;
        return write_pgm(&a.output, &img);
    }
    let codec = read_codec(BufReader::new(File::open(&a.codec)?))?;
    let cols = fs::read_to_string(&a.stream)?
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            let index = l.trim().parse().map_err(|_| Error::Format(format!("bad index '{l}'")))?;
            satc_decode(&codec, index)
        })
        .collect::<Result<Vec<_>>>()?;
    if cols.is_empty() {
        return Err(Error::EmptyData);
    }
    save_matrix(&a.output, &Matrix::from_columns(&cols))
}

fn cmd_experiment(a: ExperimentArgs) -> Result<()> {
    let mut cfg = match &a.config {
        Some(path) => ExperimentConfig::from_json(&fs::read_to_string(path)?)?,
        None => {
            let name = a
                .experiment
                .as_deref()
                .ok_or_else(|| Error::Config("name an experiment or pass --config".into()))?;
            ExperimentConfig::preset(name.parse()?)
        }
    };
    if let (Some(name), Some(_)) = (&a.experiment, &a.config) {
        let kind: ExperimentKind = name.parse()?;
        if kind != cfg.experiment {
            return Err(Error::Config(format!("config is for {}, not {kind}", cfg.experiment)));
        }
    }
    if a.full {
        cfg = cfg.full();
    }
    macro_rules! set {
        ($($field:ident),*) => { $(if let Some(v) = a.$field.clone() { cfg.$field = v; })* };
    }
    set!(p, r, q, groups, n_train, n_test, mc_runs, zero_fraction, snr_db, rate_bits, lambda_grid, calib_runs, mu, max_sweeps, taus, folds, train_images, seed);
    if a.image_dir.is_some() {
        cfg.image_dir = a.image_dir.clone();
    }
    if a.threads.is_some() {
        cfg.threads = a.threads;
    }
    if a.with_bcd {
        cfg.with_bcd = true;
    }
    if let Some(lambda) = a.lambda {
        cfg.lambda = LambdaPolicy::Fixed { lambda };
    }
    if a.lambda_scale.is_some() || a.gamma.is_some() {
        let (scale, gamma) = match cfg.lambda {
            LambdaPolicy::Adaptive { scale, gamma } => (scale, gamma),
            LambdaPolicy::Fixed { .. } => (1.0, 1.0),
        };
        cfg.lambda = LambdaPolicy::Adaptive {
            scale: a.lambda_scale.unwrap_or(scale),
            gamma: a.gamma.unwrap_or(gamma),
        };
    }
    let out = create(&a.output)?;
    run_experiment_csv(&cfg, out)?;
    Ok(())
}
