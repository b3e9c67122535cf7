use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use fracseg::core::regression::{estimate_h, gaussian_smooth, ols_weights};
use fracseg::core::scoring::misclassification;
use fracseg::core::Field2D;
use fracseg::eval::{run_experiment, segment, EstimatorConfig, ExperimentConfig, Method, Placement, SolverSettings};
use fracseg::synthesis::{synth_piecewise, Geometry, SynthConfig};
use fracseg::{gridio, Error, Result};

#[derive(Parser)]
#[command(name = "fracseg", version, about = "Segment textures by local regularity")]
struct Cli {
    /// Log progress (repeat for more detail).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize a texture with piecewise-constant regularity.
    Synth(SynthArgs),
    /// Compute log2 wavelet leaders of an image.
    Leaders(LeaderArgs),
    /// Estimate the regularity map from a leader stack.
    Estimate(EstimateArgs),
    /// Segment an image into regions of constant regularity.
    Segment(SegmentArgs),
    /// Run a benchmark described by a JSON experiment file.
    Bench(BenchArgs),
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 512)]
    size: usize,
    /// Comma-separated regularity per region, background first.
    #[arg(long, value_delimiter = ',', required = true)]
    h: Vec<f64>,
    /// `ellipse`, `corners`, `ellipse:cr,cc,a,b`, `rect:top,left,bottom,right`
    /// (join shapes with `+`) or `file:MASK.pgm`.
    #[arg(long, default_value = "ellipse")]
    geometry: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    mask_out: Option<PathBuf>,
}

#[derive(Args, Clone)]
struct EstimatorArgs {
    #[arg(long, default_value_t = 1)]
    j1: usize,
    #[arg(long, default_value_t = 4)]
    j2: usize,
    #[arg(long, default_value_t = 1.0)]
    gamma: f64,
    #[arg(long, default_value = "db2")]
    wavelet: String,
    /// Apply the fractional-integration factor at the leader's own scale.
    #[arg(long)]
    outer_gamma: bool,
}

impl EstimatorArgs {
    fn config(&self) -> EstimatorConfig {
        EstimatorConfig {
            wavelet: self.wavelet.clone(),
            j1: self.j1,
            j2: self.j2,
            gamma: self.gamma,
            placement: if self.outer_gamma {
                Placement::OuterScale
            } else {
                Placement::PerCoefficient
            },
        }
    }
}

#[derive(Args)]
struct LeaderArgs {
    /// F2D field or 8-bit PGM image.
    #[arg(long = "in")]
    input: PathBuf,
    #[command(flatten)]
    estimator: EstimatorArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EstimateArgs {
    /// F2DS leader stack.
    #[arg(long = "in")]
    input: PathBuf,
    /// Overrides the gamma recorded in the stack.
    #[arg(long)]
    gamma: Option<f64>,
    /// Gaussian smoothing of the estimate, in pixels.
    #[arg(long)]
    smooth: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SegmentArgs {
    #[arg(long, value_parser = Method::from_name)]
    method: Method,
    /// F2D field or 8-bit PGM image.
    #[arg(long = "in")]
    input: PathBuf,
    /// Regularization weight (tv, tvw, rms).
    #[arg(long)]
    lambda: Option<f64>,
    /// Constraint penalty for tvw, used for both constraints.
    #[arg(long, default_value_t = 1000.0)]
    eta: f64,
    /// Smoothing standard deviation in pixels (smooth).
    #[arg(long)]
    sigma_smooth: Option<f64>,
    /// Dual step size of the primal-dual solvers.
    #[arg(long, default_value_t = 1.0)]
    sigma: f64,
    #[arg(long)]
    max_iter: Option<usize>,
    #[arg(long, default_value_t = 2)]
    q: u32,
    #[command(flatten)]
    estimator: EstimatorArgs,
    #[arg(long)]
    out: PathBuf,
    /// Where to write the map the labels were read from.
    #[arg(long)]
    hout: Option<PathBuf>,
    #[arg(long)]
    report: Option<PathBuf>,
    /// Ground-truth mask at image resolution; adds the misclassification rate to the report.
    #[arg(long)]
    truth: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

fn read_image(path: &Path) -> Result<Field2D> {
    let is_pgm = path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("pgm"));
    if is_pgm {
        gridio::import_grayscale(path)
    } else {
        gridio::read_field(path)
    }
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text).map_err(|e| Error::Io {
        path: path.into(),
        source: e,
    })
}

fn synth(a: SynthArgs) -> Result<()> {
    let cfg = SynthConfig {
        size: a.size,
        h_values: a.h,
        seed: a.seed,
        geometry: Geometry::parse(&a.geometry, a.size)?,
    };
    let (field, mask) = synth_piecewise(&cfg)?;
    gridio::write_field(&field, &a.out)?;
    if let Some(path) = a.mask_out {
        gridio::write_mask(&mask, path)?;
    }
    Ok(())
}

fn leaders(a: LeaderArgs) -> Result<()> {
    let field = read_image(&a.input)?;
    let stack = a.estimator.config().stack(&field)?;
    gridio::write_stack(&stack, &a.out)
}

fn estimate(a: EstimateArgs) -> Result<()> {
    let stack = gridio::read_stack(&a.input)?;
    let w = ols_weights(stack.j1(), stack.j2())?;
    let mut h = estimate_h(&stack, &w)?;
    if let Some(g) = a.gamma {
        let shift = stack.gamma() - g;
        h = h.map(|v| v + shift);
    }
    if let Some(s) = a.smooth {
        h = gaussian_smooth(&h, s)?;
    }
    gridio::write_field(&h, &a.out)
}

fn segment_cmd(a: SegmentArgs) -> Result<()> {
    let param = match a.method {
        Method::Smooth => a.sigma_smooth,
        _ => a.lambda,
    }
    .ok_or_else(|| {
        Error::Config(match a.method {
            Method::Smooth => "--sigma-smooth is required for the smooth method".into(),
            m => format!("--lambda is required for the {} method", m.name()),
        })
    })?;
    let field = read_image(&a.input)?;
    let estimator = a.estimator.config();
    let mut settings = SolverSettings {
        eta1: a.eta,
        eta2: a.eta,
        sigma: a.sigma,
        ..SolverSettings::default()
    };
    if let Some(n) = a.max_iter {
        settings.max_iter = n;
        settings.tv_max_iter = n;
    }
    let start = Instant::now();
    let (stack, hhat) = estimator.analyze(&field)?;
    let seg = segment(a.method, param, &stack, &hhat, a.q, &settings.to_core())?;
    let seconds = start.elapsed().as_secs_f64();

    gridio::write_mask(&seg.mask, &a.out)?;
    if let Some(path) = &a.hout {
        gridio::write_field(&seg.map, path)?;
    }
    let rate = match &a.truth {
        Some(path) => {
            let truth = gridio::read_mask(path)?;
            let truth = fracseg::synthesis::decimate_mask(&truth, field.rows() / hhat.rows())?;
            Some(misclassification(&seg.mask, &truth, &hhat)?)
        }
        None => None,
    };
    if let Some(path) = &a.report {
        let report = json!({
            "method": a.method,
            "param": param,
            "q": a.q,
            "estimator": estimator,
            "solver": settings,
            "iterations": seg.summary.iterations,
            "converged": seg.summary.converged,
            "final_change": seg.summary.final_change,
            "thresholds": seg.summary.thresholds,
            "means": seg.summary.means,
            "outer_rounds": seg.summary.outer_rounds,
            "tau": seg.summary.tau,
            "class_counts": seg.mask.counts(),
            "misclassification": rate,
            "seconds": seconds,
        });
        write_json(path, &report)?;
    }
    if let Some(r) = rate {
        println!("misclassification {r:.4}");
    }
    Ok(())
}

fn bench(a: BenchArgs) -> Result<()> {
    let text = std::fs::read_to_string(&a.config).map_err(|e| Error::Io {
        path: a.config.clone(),
        source: e,
    })?;
    let mut cfg = ExperimentConfig::from_json(&text)?;
    cfg.output = Some(a.out);
    let report = run_experiment(&cfg)?;
    for best in &report.best {
        println!(
            "{:<6} best param {:<10.4} median rate {:.4}",
            best.method.name(),
            best.param,
            best.median
        );
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).parse_default_env().init();
    let result = match cli.command {
        Command::Synth(a) => synth(a),
        Command::Leaders(a) => leaders(a),
        Command::Estimate(a) => estimate(a),
        Command::Segment(a) => segment_cmd(a),
        Command::Bench(a) => bench(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
