use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nalgebra::DVector;

use sirnw::config::{self, EngineConfig, InputSource, KernelChoice};
use sirnw::cv::{alpha_grid, select_alpha};
use sirnw::io;
use sirnw::kernel::BandwidthSchedule;
use sirnw::study::{run_study, StudyConfig, StudyKind};
use sirnw::{model_m, Engine, Error, FitSummary, Result, Sample};

#[derive(Parser)]
#[command(name = "sirnw", version, about = "Recursive SIR with a recursive kernel link estimate")]
struct Cli {
    /// Directory for output artifacts.
    #[arg(long, global = true, env = "SIRNW_OUT_DIR", default_value = "out")]
    out_dir: PathBuf,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a sample from model (M) and write it as CSV.
    Simulate {
        #[arg(long, default_value_t = 10)]
        p: usize,
        #[arg(long, default_value_t = 1000)]
        n: usize,
        #[arg(long, default_value_t = 1.0)]
        noise_std: f64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Output file (default: <out-dir>/sample.csv).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the sequential engine; writes fit.json, grid.csv and log.csv.
    Fit(EngineArgs),
    /// Evaluate a saved projection log.
    Predict(PredictArgs),
    /// Select the bandwidth exponent by predictive cross-validation; writes cv.json.
    Cv {
        #[command(flatten)]
        engine: EngineArgs,
        #[arg(long, default_value_t = 0.10)]
        grid_min_alpha: f64,
        #[arg(long, default_value_t = 0.60)]
        grid_max_alpha: f64,
        #[arg(long, default_value_t = 0.025)]
        grid_step: f64,
    },
    /// Run a Monte-Carlo study; writes records.csv and summary.json.
    Study(StudyArgs),
}

#[derive(Args)]
struct EngineArgs {
    /// Key-value config file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Sample CSV (header x1..xp,y). Without it a model (M) sample is drawn.
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    warmup: Option<usize>,
    #[arg(long, allow_hyphen_values = true)]
    boundary: Option<f64>,
    /// `u,k` CSV of a tabulated kernel.
    #[arg(long)]
    kernel_table: Option<PathBuf>,
    #[arg(long, allow_hyphen_values = true)]
    grid_min: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    grid_max: Option<f64>,
    #[arg(long)]
    grid_count: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Synthetic model dimension.
    #[arg(long)]
    p: Option<usize>,
    /// Synthetic sample size.
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    noise_std: Option<f64>,
}

impl EngineArgs {
    fn resolve(&self) -> Result<EngineConfig> {
        let mut cfg = match &self.config {
            Some(p) => config::read_config(p)?,
            None => EngineConfig::default(),
        };
        if let Some(a) = self.alpha {
            cfg.alpha = config::check_alpha(a)?;
        }
        if self.warmup.is_some() {
            cfg.warmup = self.warmup;
        }
        if self.boundary.is_some() {
            cfg.boundary = self.boundary;
        }
        if let Some(t) = &self.kernel_table {
            cfg.kernel = KernelChoice::Tabulated(t.clone());
        }
        if let Some(v) = self.grid_min {
            cfg.grid.min = v;
        }
        if let Some(v) = self.grid_max {
            cfg.grid.max = v;
        }
        if let Some(c) = self.grid_count {
            if c < 1 {
                return Err(Error::Config {
                    key: "grid_count".into(),
                    constraint: "grid_count >= 1".into(),
                });
            }
            cfg.grid.count = c;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(path) = &self.input {
            cfg.input = InputSource::Csv(path.clone());
        }
        if let InputSource::Synthetic { p, n, noise_std } = &mut cfg.input {
            *p = self.p.unwrap_or(*p);
            *n = self.n.unwrap_or(*n);
            *noise_std = self.noise_std.unwrap_or(*noise_std);
        }
        Ok(cfg)
    }
}

fn load_sample(cfg: &EngineConfig) -> Result<Sample> {
    let sample = match &cfg.input {
        InputSource::Csv(path) => io::ingest_csv(path)?,
        InputSource::Synthetic { p, n, noise_std } => {
            model_m(*p)?.with_noise_std(*noise_std)?.draw(*n, cfg.seed)
        }
    };
    cfg.check_dimension(sample.dim())?;
    Ok(sample)
}

#[derive(Args)]
struct PredictArgs {
    /// Projection log written by `fit`.
    #[arg(long)]
    log: PathBuf,
    /// fit.json from the same run; supplies alpha and the direction.
    #[arg(long)]
    fit: Option<PathBuf>,
    /// Bandwidth exponent when no fit.json is given.
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    kernel_table: Option<PathBuf>,
    /// Comma-separated projected values.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    at: Vec<f64>,
    /// CSV of covariate vectors (header x1..xp), projected on the fitted direction.
    #[arg(long)]
    covariates: Option<PathBuf>,
    /// Output file (default: <out-dir>/predictions.csv).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct StudyArgs {
    /// scatter | convergence | normality | rate (overrides the config file).
    #[arg(long)]
    kind: Option<StudyKind>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    replications: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    /// Replication counts of the original experiments.
    #[arg(long)]
    full_scale: bool,
}

fn simulate(out_dir: &Path, p: usize, n: usize, noise_std: f64, seed: u64, out: Option<PathBuf>) -> Result<()> {
    let sample = model_m(p)?.with_noise_std(noise_std)?.draw(n, seed);
    let path = out.unwrap_or_else(|| out_dir.join("sample.csv"));
    io::write_sample_csv(&sample, &path)?;
    eprintln!("wrote {}", path.display());
    Ok(())
}

fn fit(out_dir: &Path, args: &EngineArgs) -> Result<()> {
    let cfg = args.resolve()?;
    let sample = load_sample(&cfg)?;
    let engine = Engine::fit(&sample, cfg.engine_options()?)?;
    io::write_json(&engine.summary()?, &out_dir.join("fit.json"))?;
    io::write_grid(engine.grid().expect("grid is configured"), &out_dir.join("grid.csv"))?;
    io::write_projection_log(engine.log(), &out_dir.join("log.csv"))?;
    eprintln!("wrote fit.json, grid.csv and log.csv to {}", out_dir.display());
    Ok(())
}

fn predict(out_dir: &Path, args: &PredictArgs) -> Result<()> {
    let summary: Option<FitSummary> = args.fit.as_deref().map(io::read_json).transpose()?;
    let alpha = match (args.alpha, &summary) {
        (Some(a), _) => a,
        (None, Some(s)) => s.alpha,
        (None, None) => {
            return Err(Error::InvalidArgument(
                "predict needs --fit or --alpha to rebuild the bandwidth schedule".into(),
            ))
        }
    };
    let kernel = match &args.kernel_table {
        Some(t) => io::read_kernel_table(t)?,
        None => sirnw::epanechnikov(),
    };
    let log = io::read_projection_log(&args.log, kernel, BandwidthSchedule::new(alpha)?)?;
    let mut points = args.at.clone();
    if let Some(path) = &args.covariates {
        let s = summary.as_ref().ok_or_else(|| {
            Error::InvalidArgument("--covariates needs --fit for the direction".into())
        })?;
        let theta = DVector::from_column_slice(&s.theta_hat);
        for x in io::read_covariates(path)? {
            if x.len() != theta.len() {
                return Err(Error::InvalidDimension(format!(
                    "{} has {} columns, fitted direction has length {}",
                    path.display(),
                    x.len(),
                    theta.len()
                )));
            }
            points.push(theta.dot(&x));
        }
    }
    if points.is_empty() {
        return Err(Error::InvalidArgument("no evaluation points (use --at or --covariates)".into()));
    }
    let mut grid = sirnw::nw::GridAccumulator::new(points, log.kernel().clone(), *log.schedule());
    for e in log.entries() {
        grid.add(e.k, e.u, e.y);
    }
    let path = args.out.clone().unwrap_or_else(|| out_dir.join("predictions.csv"));
    io::write_grid(&grid, &path)?;
    let missing = grid.estimates().iter().filter(|e| e.f_hat.is_none()).count();
    if missing > 0 {
        eprintln!("warning: {missing} point(s) have no kernel support");
    }
    eprintln!("wrote {}", path.display());
    Ok(())
}

fn cv(out_dir: &Path, engine: &EngineArgs, min: f64, max: f64, step: f64) -> Result<()> {
    let cfg = engine.resolve()?;
    let sample = load_sample(&cfg)?;
    let grid = alpha_grid(min, max, step)?;
    let opts = sirnw::EngineOptions {
        grid: None,
        ..cfg.engine_options()?
    };
    let report = select_alpha(&sample, &grid, &opts)?;
    for (a, w) in report.grid.iter().zip(&report.skip_warning) {
        if *w {
            eprintln!("warning: alpha = {a}: more than 5% of predictions lacked kernel support");
        }
    }
    io::write_json(&report, &out_dir.join("cv.json"))?;
    eprintln!("selected alpha = {}", report.argmin);
    Ok(())
}

fn study(out_dir: &Path, args: &StudyArgs) -> Result<()> {
    let mut cfg: StudyConfig = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
                path: path.clone(),
                source: e,
            })?;
            config::parse_study_config(&text, args.kind)?
        }
        None => {
            let kind = args
                .kind
                .ok_or_else(|| Error::InvalidArgument("study needs --kind or --config".into()))?;
            StudyConfig::new(kind, model_m(10)?)
        }
    };
    if let Some(k) = args.kind {
        if k != cfg.kind {
            let mut fresh = StudyConfig::new(k, cfg.model.clone());
            fresh.seed = cfg.seed;
            cfg = fresh;
        }
    }
    if args.full_scale {
        cfg = cfg.full_scale();
    }
    if let Some(r) = args.replications {
        cfg.replications = r;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(t) = args.threads {
        cfg.threads = Some(t);
    }
    if let Some(a) = args.alpha {
        cfg.alpha = config::check_alpha(a)?;
    }
    let result = run_study(&cfg)?;
    result.write_to(out_dir)?;
    eprintln!("wrote records.csv and summary.json to {}", out_dir.display());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let out = cli.out_dir.as_path();
    match cli.command {
        Command::Simulate {
            p,
            n,
            noise_std,
            seed,
            out: file,
        } => simulate(out, p, n, noise_std, seed, file),
        Command::Fit(args) => fit(out, &args),
        Command::Predict(args) => predict(out, &args),
        Command::Cv {
            engine,
            grid_min_alpha,
            grid_max_alpha,
            grid_step,
        } => cv(out, &engine, grid_min_alpha, grid_max_alpha, grid_step),
        Command::Study(args) => study(out, &args),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.class());
            ExitCode::FAILURE
        }
    }
}
