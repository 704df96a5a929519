//! Command-line front end. [`run`] parses arguments, executes one subcommand
//! and returns the process exit code: 0 success, 1 I/O or unreadable input,
//! 2 usage or validation, 3 numeric failure.

use std::ffi::OsString;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};

use crate::classical::{fbp, sirt_with, SirtConfig};
use crate::error::{Error, Result};
use crate::grid::{ImageGrid, LabelMap};
use crate::inr::{AcVector, Architecture, ParamsReport, DEFAULT_SIGMA2};
use crate::io::{
    acv_csv, dynamics_csv, export_pgm, geometry_csv, init_acv_csv, metrics_csv_row, parse_acv_csv,
    parse_geometry_csv, parse_trace_csv, save_checkpoint, trace_csv, F32Grid, MetricsRow,
    METRICS_HEADER,
};
use crate::metrics::{psnr, ssim};
use crate::phantom::{
    barbapapa_like_phantom, default_num_ellipses, ellipse_material_phantom, simulate_scan,
    MaterialSpec,
};
use crate::pipeline::{
    dynamics_report, train, GroundTruth, LossMode, Method, NetworkConfig, TrainConfig, TrainTrace,
};
use crate::projector::{Projector, ScanGeometry};

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

/// Environment variable capping worker threads (0 = one per core).
pub const THREADS_ENV: &str = "ACIND_THREADS";

/// Attenuation values of the three blob materials.
pub const BLOB_VALUES: [f64; 3] = [0.0, 0.8, 2.0];

#[derive(Debug, Parser)]
#[command(
    name = "acind",
    version,
    about = "Sparse-view parallel-beam CT reconstruction"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum PhantomKind {
    Ellipse,
    Barbapapa,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ReconMethod {
    Fbp,
    Sirt,
    Inr,
    AcInd,
    AcIndPlus,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum LossArg {
    L2norm,
    Mse,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a phantom: <prefix>.img.f32g, <prefix>.labels.f32g, <prefix>.acv.csv.
    Phantom {
        #[arg(long, value_enum)]
        kind: PhantomKind,
        #[arg(long, default_value_t = 64)]
        size: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Number of materials including air (ellipse phantoms; blobs have 3).
        #[arg(long, default_value_t = 6)]
        materials: usize,
        /// Ellipse count; defaults to 2·(K − 1).
        #[arg(long)]
        ellipses: Option<usize>,
        #[arg(long)]
        out_prefix: PathBuf,
    },
    /// Simulate a parallel-beam scan of an image; writes the sinogram and
    /// a `.geom.csv` sidecar next to it.
    Scan {
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        views: usize,
        /// Detector count; defaults to ceil(√2·max(H, W)).
        #[arg(long)]
        detectors: Option<usize>,
        #[arg(long, default_value_t = 1.0)]
        spacing: f64,
        /// Standard deviation of additive Gaussian detector noise.
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Reconstruct from a sinogram.
    Recon(Box<ReconArgs>),
    /// Compare a reconstruction with ground truth; prints (or appends) a CSV row.
    Metrics {
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        recon: PathBuf,
        #[arg(long, default_value = "unknown")]
        method: String,
        #[arg(long, default_value_t = 0)]
        views: usize,
        /// Peak value range; defaults to max − min of the ground truth.
        #[arg(long)]
        data_range: Option<f64>,
        /// CSV file to append to (header written when the file is new).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Turn a training trace into the dynamics table.
    Dynamics {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Export an F32G image as a 16-bit PGM plus a `.range.csv` sidecar.
    Pgm {
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Trainable-parameter totals of the scalar and distribution networks.
    ParamsReport {
        #[arg(long, default_value_t = 6)]
        materials: usize,
        #[arg(long, default_value_t = 256)]
        features: usize,
        #[arg(long, default_value_t = 256)]
        width: usize,
        /// Number of sine layers in the distribution network.
        #[arg(long, default_value_t = 5)]
        depth: usize,
    },
}

#[derive(Debug, clap::Args)]
struct ReconArgs {
    #[arg(long)]
    sino: PathBuf,
    /// Geometry sidecar; defaults to the one written next to the sinogram.
    #[arg(long)]
    geom: Option<PathBuf>,
    #[arg(long, value_enum)]
    method: ReconMethod,
    #[arg(long, default_value_t = 6)]
    materials: usize,
    #[arg(long, default_value_t = 0.2)]
    temp: f64,
    /// Network learning rate; 3e-3 for inr, 1e-3 otherwise.
    #[arg(long)]
    lr_mlp: Option<f64>,
    #[arg(long, default_value_t = 1e-3)]
    lr_phi: f64,
    #[arg(long, default_value_t = 5000)]
    epochs: usize,
    /// Epochs of the inner AC-IND run (ac-ind-plus); defaults to --epochs.
    #[arg(long)]
    inner_epochs: Option<usize>,
    #[arg(long, default_value_t = 100)]
    eval_every: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value = "l2norm")]
    loss: LossArg,
    #[arg(long, default_value_t = 32)]
    features: usize,
    #[arg(long, default_value_t = DEFAULT_SIGMA2)]
    sigma2: f64,
    #[arg(long, default_value_t = 64)]
    width: usize,
    #[arg(long, default_value_t = 6)]
    depth: usize,
    #[arg(long, default_value_t = 2000)]
    sirt_iters: usize,
    /// Ground-truth image for per-epoch evaluation. Labels and attenuation
    /// vector are picked up from `<prefix>.labels.f32g` / `<prefix>.acv.csv`
    /// when the image is named `<prefix>.img.f32g`.
    #[arg(long)]
    eval_gt: Option<PathBuf>,
    #[arg(long)]
    gt_labels: Option<PathBuf>,
    #[arg(long)]
    gt_acv: Option<PathBuf>,
    #[arg(long)]
    out_dir: PathBuf,
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    if let Err(e) = configure_threads() {
        eprintln!("error: {e}");
        return EXIT_USAGE;
    }
    match execute(cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Io(_) | Error::Format(_) => EXIT_IO,
        Error::Diverged { .. } | Error::NonFinite { .. } => EXIT_NUMERIC,
        Error::DimensionMismatch { .. }
        | Error::InvalidArgument(_)
        | Error::TooFewLevels { .. } => EXIT_USAGE,
    }
}

fn configure_threads() -> Result<()> {
    let Ok(value) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let threads: usize = value.trim().parse().map_err(|_| {
        Error::InvalidArgument(format!(
            "{THREADS_ENV} must be a non-negative integer, got {value:?}"
        ))
    })?;
    // A pool may already exist when `run` is called repeatedly in one process.
    let _ = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global();
    Ok(())
}

fn execute(command: Command) -> Result<()> {
    match command {
        Command::Phantom {
            kind,
            size,
            seed,
            materials,
            ellipses,
            out_prefix,
        } => cmd_phantom(kind, size, seed, materials, ellipses, &out_prefix),
        Command::Scan {
            image,
            views,
            detectors,
            spacing,
            noise,
            seed,
            out,
        } => cmd_scan(&image, views, detectors, spacing, noise, seed, &out),
        Command::Recon(args) => cmd_recon(&args),
        Command::Metrics {
            gt,
            recon,
            method,
            views,
            data_range,
            out,
        } => cmd_metrics(&gt, &recon, method, views, data_range, out.as_deref()),
        Command::Dynamics { trace, out } => cmd_dynamics(&trace, out.as_deref()),
        Command::Pgm { image, out } => export_pgm(&F32Grid::load(image)?.to_image()?, out),
        Command::ParamsReport {
            materials,
            features,
            width,
            depth,
        } => {
            if materials == 0 || features == 0 || width == 0 || depth == 0 {
                return Err(Error::InvalidArgument(
                    "report dimensions must be positive".into(),
                ));
            }
            let arch = Architecture {
                fourier_features: features,
                hidden: vec![width; depth],
            };
            print!("{}", ParamsReport::new(&arch, materials).render());
            Ok(())
        }
    }
}

/// `<prefix><suffix>` without touching the prefix's own extension.
fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn read_text(path: &Path) -> Result<String> {
    Ok(fs::read_to_string(path)?)
}

fn cmd_phantom(
    kind: PhantomKind,
    size: usize,
    seed: u64,
    materials: usize,
    ellipses: Option<usize>,
    prefix: &Path,
) -> Result<()> {
    if size == 0 {
        return Err(Error::InvalidArgument("--size must be positive".into()));
    }
    let pair = match kind {
        PhantomKind::Ellipse => {
            let spec = MaterialSpec::standard(materials)?;
            ellipse_material_phantom(
                seed,
                size,
                size,
                &spec,
                ellipses.unwrap_or(default_num_ellipses(materials)),
            )?
        }
        PhantomKind::Barbapapa => barbapapa_like_phantom(size, size, BLOB_VALUES)?,
    };
    F32Grid::from_image(&pair.image).save(with_suffix(prefix, ".img.f32g"))?;
    F32Grid::from_labels(&pair.labels).save(with_suffix(prefix, ".labels.f32g"))?;
    fs::write(with_suffix(prefix, ".acv.csv"), acv_csv(&pair.acv))?;
    Ok(())
}

/// Sidecar path: the sinogram path with its extension replaced by `geom.csv`.
pub fn geometry_sidecar(sino: &Path) -> PathBuf {
    sino.with_extension("geom.csv")
}

fn cmd_scan(
    image: &Path,
    views: usize,
    detectors: Option<usize>,
    spacing: f64,
    noise: f64,
    seed: u64,
    out: &Path,
) -> Result<()> {
    let img = F32Grid::load(image)?.to_image()?;
    let (h, w) = img.dims();
    let v = detectors.unwrap_or_else(|| ScanGeometry::default_detectors(h, w));
    let geom = ScanGeometry::with_detectors(h, w, views, v, spacing)?;
    let projector = Projector::new(&geom);
    let mut sino = projector.forward(&img)?;
    if noise != 0.0 {
        let labels = LabelMap::new(h, w, 1, vec![1; h * w])?;
        let pair = crate::phantom::PhantomPair {
            image: img,
            labels,
            acv: AcVector::new(vec![0.0])?,
        };
        sino = simulate_scan(&pair, &projector, noise, seed)?;
    }
    F32Grid::from_sinogram(&sino).save(out)?;
    fs::write(geometry_sidecar(out), geometry_csv(&geom))?;
    Ok(())
}

fn load_ground_truth(args: &ReconArgs) -> Result<GroundTruth> {
    let Some(gt_path) = &args.eval_gt else {
        return Ok(GroundTruth::none());
    };
    if !gt_path.exists() {
        return Err(Error::InvalidArgument(format!(
            "ground truth {} does not exist",
            gt_path.display()
        )));
    }
    let image = F32Grid::load(gt_path)?.to_image()?;
    let sibling = |suffix: &str| {
        let name = gt_path.to_str()?;
        let prefix = name.strip_suffix(".img.f32g")?;
        let p = PathBuf::from(format!("{prefix}{suffix}"));
        p.exists().then_some(p)
    };
    let labels_path = args.gt_labels.clone().or_else(|| sibling(".labels.f32g"));
    let acv_path = args.gt_acv.clone().or_else(|| sibling(".acv.csv"));
    let acv = acv_path
        .map(|p| parse_acv_csv(&read_text(&p)?))
        .transpose()?;
    let labels = labels_path
        .map(|p| F32Grid::load(p)?.to_labels(acv.as_ref().map(AcVector::len)))
        .transpose()?;
    Ok(GroundTruth {
        image: Some(image),
        acv,
        labels,
    })
}

fn cmd_recon(args: &ReconArgs) -> Result<()> {
    let sino = F32Grid::load(&args.sino)?.to_sinogram()?;
    let geom_path = args
        .geom
        .clone()
        .unwrap_or_else(|| geometry_sidecar(&args.sino));
    let geom = parse_geometry_csv(&read_text(&geom_path)?)?;
    geom.check_sinogram(&sino)?;
    let truth = load_ground_truth(args)?;
    fs::create_dir_all(&args.out_dir)?;
    let out = |name: &str| args.out_dir.join(name);

    let method = match args.method {
        ReconMethod::Fbp => {
            F32Grid::from_image(&fbp(&sino, &geom)?).save(out("recon.f32g"))?;
            return Ok(());
        }
        ReconMethod::Sirt => {
            let cfg = SirtConfig {
                num_iters: args.sirt_iters,
                nonneg_clamp: true,
            };
            let image = sirt_with(&Projector::new(&geom), &sino, cfg)?;
            F32Grid::from_image(&image).save(out("recon.f32g"))?;
            return Ok(());
        }
        ReconMethod::Inr => Method::Inr,
        ReconMethod::AcInd => Method::AcInd,
        ReconMethod::AcIndPlus => Method::AcIndPlus,
    };
    let config = TrainConfig {
        method,
        materials: args.materials,
        temperature: args.temp,
        lr_mlp: args.lr_mlp.unwrap_or(method.default_lr_mlp()),
        lr_phi: args.lr_phi,
        epochs: args.epochs,
        seed: args.seed,
        loss_mode: match args.loss {
            LossArg::L2norm => LossMode::L2Norm,
            LossArg::Mse => LossMode::Mse,
        },
        eval_every: args.eval_every,
        network: NetworkConfig {
            fourier_features: args.features,
            sigma2: args.sigma2,
            hidden: vec![args.width; args.depth],
        },
        inner_epochs: args.inner_epochs,
    };
    if args.depth == 0 {
        return Err(Error::InvalidArgument("--depth must be ≥ 1".into()));
    }
    let result = train(&config, &Projector::new(&geom), &sino, &truth)?;
    F32Grid::from_image(&result.image).save(out("recon.f32g"))?;
    fs::write(out("trace.csv"), trace_csv(&result.trace.records))?;
    save_checkpoint(&result.model, out("ckpt.bin"))?;
    if let Some(labels) = &result.labels {
        F32Grid::from_labels(labels).save(out("seg.f32g"))?;
    }
    if let Some(acv) = &result.acv {
        fs::write(out("acv.csv"), acv_csv(acv))?;
    }
    if let Some(init) = &result.init {
        if init.inner_acv.is_some() {
            fs::write(
                out("init.acv.csv"),
                init_acv_csv(&init.fbp_acv, init.inner_acv.as_ref()),
            )?;
        }
    }
    if let Some((_, best)) = &result.best_image {
        F32Grid::from_image(best).save(out("best.f32g"))?;
    }
    Ok(())
}

fn cmd_metrics(
    gt: &Path,
    recon: &Path,
    method: String,
    views: usize,
    data_range: Option<f64>,
    out: Option<&Path>,
) -> Result<()> {
    let truth: ImageGrid = F32Grid::load(gt)?.to_image()?;
    let image = F32Grid::load(recon)?.to_image()?;
    truth.ensure_same_dims(&image)?;
    let range = data_range.unwrap_or_else(|| {
        let (lo, hi) = truth.min_max();
        hi - lo
    });
    let row = MetricsRow {
        method,
        views,
        psnr: psnr(&truth, &image, range)?,
        ssim: ssim(&truth, &image, range)?,
        data_range: range,
    };
    let line = metrics_csv_row(&row);
    match out {
        None => print!("{METRICS_HEADER}\n{line}"),
        Some(path) => {
            let fresh = !path.exists();
            let mut file = fs::OpenOptions::new()
                .create(true)
                .append(true)
                .open(path)?;
            if fresh {
                writeln!(file, "{METRICS_HEADER}")?;
            }
            file.write_all(line.as_bytes())?;
        }
    }
    Ok(())
}

fn cmd_dynamics(trace: &Path, out: Option<&Path>) -> Result<()> {
    let records = parse_trace_csv(&read_text(trace)?)?;
    let rows = dynamics_report(&TrainTrace { records })?;
    let text = dynamics_csv(&rows);
    match out {
        None => print!("{text}"),
        Some(path) => fs::write(path, text)?,
    }
    Ok(())
}
