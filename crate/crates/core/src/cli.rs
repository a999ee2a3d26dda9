//! The `soilmap` command line.
//!
//! Exit codes: 0 success, 1 usage, 2 data error, 3 numeric failure.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::data::{Bounds, Dataset, Location, Observation};
use crate::gp::{fit, predict, sample_prior_labeled, CorrelationMatrix, GpError, PredictOptions};
use crate::io::{self, IoError, ModelFile, RunConfig, SynthPrior};
use crate::kernels::{KernelError, KernelMode, DEFAULT_NOISE_FLOOR};
use crate::mapping::{self, EvalError, GridSpec, Method};
use crate::mission::{self, DrillSpec};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "soilmap", version, about = "Multi-task GP soil property mapping")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit a model to an observation CSV and write a model file.
    Fit {
        /// Observation CSV (`sample_id,x_m,y_m,task,value`).
        #[arg(long)]
        data: PathBuf,
        /// Model file to write.
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Predict at `task,x_m,y_m` query points.
    Predict {
        /// Model file written by `fit`.
        #[arg(long)]
        model: PathBuf,
        /// Training observations the model was fitted on.
        #[arg(long)]
        data: PathBuf,
        /// Query CSV (`task,x_m,y_m`).
        #[arg(long)]
        queries: PathBuf,
        /// Output CSV; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Report means and variances in original task units.
        #[arg(long)]
        denormalize: bool,
        /// Add the per-task noise variance to the predictive variance.
        #[arg(long)]
        include_noise: bool,
    },
    /// Predict mean and variance grids for every task.
    Map {
        /// Model file written by `fit`.
        #[arg(long)]
        model: PathBuf,
        /// Training observations the model was fitted on.
        #[arg(long)]
        data: PathBuf,
        /// Directory for the ESRI ASCII grids and `map.csv`.
        #[arg(long)]
        out_dir: PathBuf,
        /// `min_x,min_y,max_x,max_y`; defaults to the observation bounding box.
        #[arg(long)]
        bounds: Option<String>,
        #[command(flatten)]
        run: RunArgs,
    },
    /// RMSE against a truth dataset as samples are ingested one at a time.
    EvalSequential {
        /// Observations, ingested in file order of first appearance.
        #[arg(long)]
        data: PathBuf,
        /// Truth CSV in the observation format.
        #[arg(long)]
        truth: PathBuf,
        /// Which model family to evaluate.
        #[arg(long, value_enum, default_value_t = MethodArg::Both)]
        method: MethodArg,
        /// Output CSV; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Task correlation matrix of a model, or the trajectory over sample prefixes.
    Correlations {
        /// Model file written by `fit`.
        #[arg(long, conflicts_with = "data", required_unless_present = "data")]
        model: Option<PathBuf>,
        /// Observations to refit on every prefix (trajectory mode).
        #[arg(long)]
        data: Option<PathBuf>,
        /// Output CSV; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Draw synthetic observations (and optionally a truth grid) from a prior.
    Synth {
        /// Observation CSV to write; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Prior file; defaults to the built-in pH/N/P/K prior.
        #[arg(long)]
        prior: Option<PathBuf>,
        /// `sample_id,x_m,y_m` CSV; defaults to a 6 x 5 grid over the field.
        #[arg(long)]
        locations: Option<PathBuf>,
        /// Random seed for the draw and the observation noise.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Field size `width,height` in meters.
        #[arg(long, default_value = "300,170")]
        field: String,
        /// Also write the noise-free field at grid cell centers.
        #[arg(long)]
        truth_out: Option<PathBuf>,
        /// Cell size in meters of the truth grid.
        #[arg(long, default_value_t = 15.0)]
        truth_resolution: f64,
    },
    /// Grid sample plan inside a field boundary.
    Plan {
        /// Boundary CSV (`ring,x_m,y_m`; ring 0 is the field, others are exclusions).
        #[arg(long)]
        boundary: PathBuf,
        /// Grid spacing in meters.
        #[arg(long)]
        spacing: f64,
        /// Output CSV; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Core sample mass in grams, or the auger diameter for a target mass.
    Mass {
        /// Bulk density in g/mm^3.
        #[arg(long)]
        rho: f64,
        /// Drilling depth in mm.
        #[arg(long)]
        depth: f64,
        /// Auger diameter in mm.
        #[arg(long, required_unless_present = "target_mass", conflicts_with = "target_mass")]
        diameter: Option<f64>,
        /// Target mass in grams; prints the required diameter in mm.
        #[arg(long)]
        target_mass: Option<f64>,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum MethodArg {
    Mtgp,
    Stgp,
    Both,
}

#[derive(Debug, Args)]
struct RunArgs {
    /// key=value run configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Kernel mode: `convolved` (per-task length-scales) or `icm` (shared).
    #[arg(long)]
    mode: Option<KernelMode>,
    /// Optimizer restarts.
    #[arg(long)]
    restarts: Option<usize>,
    /// Seed for the restart initializations.
    #[arg(long)]
    seed: Option<u64>,
    /// Map cell size in meters.
    #[arg(long)]
    resolution: Option<f64>,
    /// Write maps in original task units.
    #[arg(long)]
    denormalize: bool,
}

impl RunArgs {
    fn resolve(&self) -> Result<RunConfig, CliError> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::read(p)?,
            None => RunConfig::default(),
        };
        if let Some(m) = self.mode {
            cfg.fit.mode = m;
        }
        if let Some(r) = self.restarts {
            cfg.fit.restarts = r;
        }
        if let Some(s) = self.seed {
            cfg.fit.seed = s;
        }
        if let Some(r) = self.resolution {
            cfg.resolution = r;
        }
        cfg.denormalize |= self.denormalize;
        cfg.fit.validate().map_err(IoError::from)?;
        Ok(cfg)
    }
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error(transparent)]
    Io(#[from] IoError),
    #[error("{0}")]
    Usage(String),
}

impl From<GpError> for CliError {
    fn from(e: GpError) -> Self {
        CliError::Io(e.into())
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        CliError::Io(e.into())
    }
}

impl From<mission::PlanError> for CliError {
    fn from(e: mission::PlanError) -> Self {
        CliError::Io(e.into())
    }
}

impl From<crate::data::DataError> for CliError {
    fn from(e: crate::data::DataError) -> Self {
        CliError::Io(e.into())
    }
}

fn kernel_is_numeric(e: &KernelError) -> bool {
    matches!(e, KernelError::NotPositiveDefinite(_))
}

fn gp_is_numeric(e: &GpError) -> bool {
    match e {
        GpError::Rejected | GpError::NonFinite(_) | GpError::AllRestartsRejected(_) => true,
        GpError::Kernel(k) => kernel_is_numeric(k),
        _ => false,
    }
}

impl CliError {
    fn exit_code(&self) -> i32 {
        let numeric = match self {
            CliError::Usage(_) => return EXIT_USAGE,
            CliError::Io(IoError::Kernel(k)) => kernel_is_numeric(k),
            CliError::Io(IoError::Gp(g)) | CliError::Io(IoError::Eval(EvalError::Gp(g))) => gp_is_numeric(g),
            CliError::Io(_) => false,
        };
        if numeric {
            EXIT_NUMERIC
        } else {
            EXIT_DATA
        }
    }
}

/// Runs the command line with `argv` (including the program name) and
/// returns the process exit code. Diagnostics go to standard error.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).try_init();
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), CliError> {
    match out {
        Some(p) => Ok(io::write_atomic(p, text.as_bytes())?),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn parse_numbers<const N: usize>(text: &str, what: &str) -> Result<[f64; N], CliError> {
    let values = io::parse_f64_list(text).map_err(|m| CliError::Usage(format!("--{what}: {m}")))?;
    values
        .try_into()
        .map_err(|_| CliError::Usage(format!("--{what} expects {N} comma-separated numbers")))
}

fn dispatch(command: Command) -> Result<(), CliError> {
    match command {
        Command::Fit { data, out, run } => {
            let cfg = run.resolve()?;
            let dataset = io::read_observations(&data)?;
            log::info!("fitting {} observations, {} tasks", dataset.len(), dataset.n_tasks());
            let model = fit(&dataset, &cfg.fit)?;
            ModelFile::from_model(&model, &dataset).write(&out)?;
            log::info!("lml {}", model.lml());
        }
        Command::Predict {
            model,
            data,
            queries,
            out,
            denormalize,
            include_noise,
        } => {
            let file = ModelFile::read(&model)?;
            let dataset = io::read_observations(&data)?;
            let fitted = file.rebuild(&dataset)?;
            let queries = io::read_queries(&queries, fitted.labels())?;
            let result = predict(
                &fitted,
                &queries,
                PredictOptions {
                    denormalize,
                    include_noise,
                },
            )?;
            emit(out.as_deref(), &io::predictions_csv(&queries, fitted.labels(), &result))?;
        }
        Command::Map {
            model,
            data,
            out_dir,
            bounds,
            run,
        } => {
            let cfg = run.resolve()?;
            let file = ModelFile::read(&model)?;
            let dataset = io::read_observations(&data)?;
            let fitted = file.rebuild(&dataset)?;
            let bounds = match bounds {
                Some(b) => {
                    let [x0, y0, x1, y1] = parse_numbers::<4>(&b, "bounds")?;
                    Bounds::new(x0, y0, x1, y1)
                }
                None => dataset.field_bounds(),
            };
            let grid = GridSpec::new(bounds, cfg.resolution)?;
            let maps = mapping::predict_map(&fitted, &grid, cfg.denormalize)?;
            io::write_map_exports(&out_dir, &maps)?;
        }
        Command::EvalSequential {
            data,
            truth,
            method,
            out,
            run,
        } => {
            let cfg = run.resolve()?;
            let dataset = io::read_observations(&data)?;
            let truth = io::read_observations(&truth)?;
            let methods: &[Method] = match method {
                MethodArg::Mtgp => &[Method::Mtgp],
                MethodArg::Stgp => &[Method::Stgp],
                MethodArg::Both => &[Method::Mtgp, Method::Stgp],
            };
            let curves = methods
                .iter()
                .map(|&m| mapping::sequential_eval(&dataset, &truth, m, &cfg.fit))
                .collect::<Result<Vec<_>, _>>()?;
            emit(out.as_deref(), &io::rmse_curves_csv(&curves))?;
        }
        Command::Correlations { model, data, out, run } => {
            let text = match (model, data) {
                (Some(model), _) => {
                    let file = ModelFile::read(&model)?;
                    let theta = file.hyperparams()?;
                    let corr = CorrelationMatrix::from_task_cov(&theta.factor().task_cov());
                    io::correlation_matrix_csv(&file.labels, &corr)
                }
                (None, Some(data)) => {
                    let cfg = run.resolve()?;
                    let dataset = io::read_observations(&data)?;
                    io::trajectory_csv(&mapping::correlation_trajectory(&dataset, &cfg.fit)?)
                }
                (None, None) => unreachable!("clap requires --model or --data"),
            };
            emit(out.as_deref(), &text)?;
        }
        Command::Synth {
            out,
            prior,
            locations,
            seed,
            field,
            truth_out,
            truth_resolution,
        } => {
            let prior = match prior {
                Some(p) => SynthPrior::read(&p)?,
                None => SynthPrior::default(),
            };
            let [width, height] = parse_numbers::<2>(&field, "field")?;
            let (ids, locs) = match locations {
                Some(p) => io::read_locations(&p)?,
                None => default_locations(width, height),
            };
            let truth_grid = match truth_out {
                Some(_) => Some(GridSpec::new(Bounds::new(0.0, 0.0, width, height), truth_resolution)?),
                None => None,
            };
            let (samples, truth) = synthesize(&prior, &ids, &locs, truth_grid.as_ref(), seed)?;
            emit(out.as_deref(), &io::observations_csv(&samples))?;
            if let (Some(path), Some(truth)) = (truth_out, truth) {
                io::write_atomic(&path, io::observations_csv(&truth).as_bytes())?;
            }
        }
        Command::Plan { boundary, spacing, out } => {
            let field = io::read_boundary(&boundary)?;
            let plan = mission::grid_plan(&field, spacing)?;
            emit(out.as_deref(), &io::locations_csv(&plan.sample_ids(), &plan.locations))?;
        }
        Command::Mass {
            rho,
            depth,
            diameter,
            target_mass,
        } => match (diameter, target_mass) {
            (Some(d), _) => println!("{:.1}", mission::sample_mass(&DrillSpec::new(rho, depth, d)?)),
            (None, Some(m)) => println!("{:.2}", mission::auger_diameter(m, rho, depth)?),
            (None, None) => unreachable!("clap requires --diameter or --target-mass"),
        },
    }
    Ok(())
}

/// Cell-centered 6 x 5 layout over a `width x height` field, row by row from the south.
fn default_locations(width: f64, height: f64) -> (Vec<String>, Vec<Location>) {
    let (nx, ny) = (6, 5);
    let locs: Vec<Location> = (0..ny)
        .flat_map(|r| (0..nx).map(move |c| (r, c)))
        .map(|(r, c)| {
            Location::new(
                (c as f64 + 0.5) * width / nx as f64,
                (r as f64 + 0.5) * height / ny as f64,
            )
        })
        .collect();
    let ids = (1..=locs.len()).map(|i| format!("S{i:02}")).collect();
    (ids, locs)
}

/// One latent joint draw over the sample locations and (optionally) the
/// truth grid, mapped to field units by `mean + scale * draw`. Samples get
/// independent Gaussian noise with the prior's per-task variance; the truth
/// grid is noise-free.
fn synthesize(
    prior: &SynthPrior,
    ids: &[String],
    locations: &[Location],
    truth_grid: Option<&GridSpec>,
    seed: u64,
) -> Result<(Dataset, Option<Dataset>), CliError> {
    let n = prior.n_tasks();
    let latent_prior = SynthPrior {
        noise: vec![DEFAULT_NOISE_FLOOR * 1e-6; n],
        ..prior.clone()
    };
    let theta = latent_prior.hyperparams()?;
    let cells = truth_grid.map(GridSpec::cell_centers).unwrap_or_default();
    let all: Vec<Location> = locations.iter().chain(&cells).copied().collect();
    let draw = sample_prior_labeled(&theta, &all, prior.labels.clone(), seed)?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let noise: Vec<Normal<f64>> = prior
        .noise
        .iter()
        .map(|&v| Normal::new(0.0, v.max(0.0).sqrt()))
        .collect::<Result<_, _>>()
        .map_err(|e| CliError::Usage(format!("prior noise: {e}")))?;
    let split = locations.len() * n;
    let to_field = |o: &Observation, id: String, noisy: Option<f64>| {
        let t = o.task.0;
        Observation::new(id, o.location, o.task, prior.means[t] + prior.scales[t] * (o.value + noisy.unwrap_or(0.0)))
    };
    let obs = draw.observations();
    let samples: Vec<Observation> = obs[..split]
        .iter()
        .enumerate()
        .map(|(i, o)| {
            let eps = noise[o.task.0].sample(&mut rng);
            to_field(o, ids[i / n].clone(), Some(eps))
        })
        .collect();
    let samples = Dataset::with_labels(samples, prior.labels.clone())?;
    let truth = if cells.is_empty() {
        None
    } else {
        let width = cells.len().to_string().len();
        let truth: Vec<Observation> = obs[split..]
            .iter()
            .enumerate()
            .map(|(i, o)| to_field(o, format!("G{:0width$}", i / n + 1), None))
            .collect();
        Some(Dataset::with_labels(truth, prior.labels.clone())?)
    };
    Ok((samples, truth))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mass_example() {
        assert_eq!(run(["soilmap", "mass", "--rho", "1.3e-3", "--depth", "200", "--diameter", "19"]), 0);
    }

    #[test]
    fn usage_errors() {
        use clap::error::ErrorKind;
        let kind = |args: &[&str]| Cli::try_parse_from(args).unwrap_err().kind();
        assert_eq!(kind(&["soilmap", "frobnicate"]), ErrorKind::InvalidSubcommand);
        assert_eq!(kind(&["soilmap", "mass", "--rho", "1e-3"]), ErrorKind::MissingRequiredArgument);
        assert_eq!(kind(&["soilmap", "--help"]), ErrorKind::DisplayHelp);
    }

    #[test]
    fn data_errors() {
        assert_eq!(run(["soilmap", "mass", "--rho=-1", "--depth", "200", "--diameter", "19"]), EXIT_DATA);
        assert_eq!(run(["soilmap", "fit", "--data", "/nonexistent/obs.csv", "--out", "/tmp/x"]), EXIT_DATA);
    }

    #[test]
    fn default_layout() {
        let (ids, locs) = default_locations(300.0, 170.0);
        assert_eq!(ids.len(), 30);
        assert_eq!(locs[0], Location::new(25.0, 17.0));
        assert_eq!(locs[29], Location::new(275.0, 153.0));
    }
}
