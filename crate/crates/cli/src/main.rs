use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use lpx::attribution::{IgConfig, Method, PerturbConfig};
use lpx::dataset::{feature_sum_dataset, generate_dataset, BBox, Dataset};
use lpx::encodings::EncodingKind;
use lpx::experiments::{self, Exp5dConfig};
use lpx::fixtures;
use lpx::grid::{self, grid_attribution, GridSpec, Matrix};
use lpx::heatmap::render_heatmap;
use lpx::lp::LinearProgram;
use lpx::neural::{self, Activation, Loss, Model, ModelConfig, Optimizer};
use lpx::par::Execution;
use lpx::properties::{self, Directedness};
use lpx::{Error, Result};

#[derive(Parser)]
#[command(
    name = "lpx",
    version,
    about = "Neural encodings of linear programs and their attributions"
)]
struct Cli {
    /// LP file (JSON with n, m, c, A, b). Defaults to the 2D box fixture.
    #[arg(long, global = true)]
    lp: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a balanced dataset of one encoding.
    GenData {
        /// feasibility, gain_penalty, boundary_distance, abs_boundary_distance,
        /// vertex_distance or vertex_distance_no_origin.
        #[arg(long)]
        encoding: String,
        #[arg(long, default_value_t = 100_000)]
        count: usize,
        /// Sampling box as `lo:hi` per feature, comma separated.
        #[arg(long)]
        bbox: Option<String>,
    },
    /// Train a network on a dataset.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[command(flatten)]
        model: ModelArgs,
    },
    /// Attribute a model's output at one point.
    Attribute {
        #[arg(long)]
        model: PathBuf,
        #[command(flatten)]
        method: MethodArgs,
        /// Input point, comma separated.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        point: Vec<f64>,
    },
    /// Attribution rasters over a 2D slice.
    Grid {
        #[arg(long)]
        model: PathBuf,
        #[command(flatten)]
        method: MethodArgs,
        #[command(flatten)]
        grid: GridArgs,
        /// Evaluate cells on the calling thread only.
        #[arg(long)]
        sequential: bool,
    },
    /// Check the encoding properties, optionally also method directedness.
    Props {
        /// Encoding name, or `all`.
        #[arg(long, default_value = "all")]
        encoding: String,
        #[arg(long, default_value_t = 2000)]
        samples: usize,
        /// Also train a model of the feature sum and test method directedness.
        #[arg(long)]
        directedness: bool,
        #[arg(long, default_value_t = 0.05)]
        radius: f64,
    },
    /// Compare LIME with saliency over shrinking radii.
    ExpLimeSal {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, value_delimiter = ',', default_values_t = [0.5, 0.1, 0.02])]
        radii: Vec<f64>,
        #[arg(long, default_value_t = 100)]
        points: usize,
        #[arg(long, default_value_t = 1.0)]
        lambda: f64,
        #[arg(long, default_value_t = 50)]
        samples: usize,
    },
    /// Compare directed feature permutation with least-squares LIME.
    ExpDirectedFp {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value_t = 0.1)]
        radius: f64,
        #[arg(long, default_value_t = 100)]
        points: usize,
    },
    /// Train a feasibility model on a 5D LP and explain two instances.
    /// Defaults to the built-in 5D fixture when --lp is absent.
    Exp5d {
        #[arg(long, default_value_t = 100_000)]
        count: usize,
        #[arg(long, default_value_t = 0.1)]
        radius: f64,
        #[command(flatten)]
        model: ModelArgs,
    },
    /// Render a `row,col,value` CSV as a diverging heatmap.
    Render {
        #[arg(long)]
        csv: PathBuf,
        /// Output image; defaults to the CSV path with a .ppm extension.
        #[arg(long)]
        image: Option<PathBuf>,
    },
    /// Re-check every grid result below a directory.
    Verify { dir: PathBuf },
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodName {
    Ig,
    Saliency,
    Fp,
    Lime,
    DirectedFp,
}

#[derive(Args)]
struct MethodArgs {
    #[arg(long, value_enum)]
    method: MethodName,
    /// Perturbation radius; repeat or comma separate for one result per radius.
    #[arg(long, value_delimiter = ',', default_values_t = [0.1])]
    radius: Vec<f64>,
    #[arg(long, default_value_t = 50)]
    samples: usize,
    #[arg(long, default_value_t = 10)]
    repeats: usize,
    #[arg(long, default_value_t = 1.0)]
    lambda: f64,
    #[arg(long, default_value_t = IgConfig::DEFAULT_STEPS)]
    steps: usize,
    /// Integrated-gradients baseline; defaults to the origin.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    baseline: Option<Vec<f64>>,
}

impl MethodArgs {
    /// One method per radius (a single one for radius-free methods).
    fn methods(&self, n: usize, seed: u64) -> Vec<Method> {
        let perturb = |radius| PerturbConfig {
            radius,
            samples: self.samples,
            repeats: self.repeats,
            ridge_lambda: self.lambda,
            seed,
        };
        match self.method {
            MethodName::Ig => vec![Method::IntegratedGradients(IgConfig {
                baseline: self.baseline.clone().unwrap_or_else(|| vec![0.0; n]),
                steps: self.steps,
            })],
            MethodName::Saliency => vec![Method::Saliency],
            MethodName::Fp => self
                .radius
                .iter()
                .map(|&r| Method::FeaturePermutation(perturb(r)))
                .collect(),
            MethodName::Lime => self
                .radius
                .iter()
                .map(|&r| Method::Lime(perturb(r)))
                .collect(),
            MethodName::DirectedFp => self
                .radius
                .iter()
                .map(|&radius| Method::DirectedFeaturePermutation { radius })
                .collect(),
        }
    }
}

#[derive(Args)]
struct ModelArgs {
    #[arg(long, default_value_t = 7)]
    depth: usize,
    #[arg(long, default_value_t = 64)]
    width: usize,
    #[arg(long, value_enum, default_value_t = ActivationName::Softplus)]
    activation: ActivationName,
    #[arg(long, value_enum, default_value_t = LossName::SquaredError)]
    loss: LossName,
    #[arg(long, value_enum, default_value_t = OptimizerName::Adam)]
    optimizer: OptimizerName,
    /// Momentum coefficient for `--optimizer momentum`.
    #[arg(long, default_value_t = 0.9)]
    momentum: f64,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    #[arg(long, default_value_t = 30)]
    epochs: usize,
    #[arg(long, default_value_t = 128)]
    batch: usize,
}

#[derive(Clone, Copy, ValueEnum)]
enum ActivationName {
    Softplus,
    Tanh,
    Relu,
}

#[derive(Clone, Copy, ValueEnum)]
enum LossName {
    SquaredError,
    Logistic,
}

#[derive(Clone, Copy, ValueEnum)]
enum OptimizerName {
    Adam,
    Momentum,
}

impl ModelArgs {
    fn config(&self, seed: u64) -> ModelConfig {
        ModelConfig {
            depth: self.depth,
            hidden_width: self.width,
            activation: match self.activation {
                ActivationName::Softplus => Activation::Softplus,
                ActivationName::Tanh => Activation::Tanh,
                ActivationName::Relu => Activation::Relu,
            },
            loss: match self.loss {
                LossName::SquaredError => Loss::SquaredError,
                LossName::Logistic => Loss::Logistic,
            },
            optimizer: match self.optimizer {
                OptimizerName::Adam => Optimizer::adam(),
                OptimizerName::Momentum => Optimizer::Momentum {
                    momentum: self.momentum,
                },
            },
            learning_rate: self.lr,
            epochs: self.epochs,
            batch_size: self.batch,
            seed,
        }
    }
}

#[derive(Args)]
struct GridArgs {
    #[arg(long, default_value_t = 0)]
    dim_x: usize,
    #[arg(long, default_value_t = 1)]
    dim_y: usize,
    /// `lo:hi`; defaults to the model's input range.
    #[arg(long)]
    x_range: Option<String>,
    #[arg(long)]
    y_range: Option<String>,
    /// Values of the features not swept, as a full point; swept entries are ignored.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    fixed: Option<Vec<f64>>,
    #[arg(long, default_value_t = GridSpec::DEFAULT_RESOLUTION.0)]
    width: usize,
    #[arg(long, default_value_t = GridSpec::DEFAULT_RESOLUTION.1)]
    height: usize,
}

fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidConfig(msg.into())
}

fn parse_range(s: &str) -> Result<(f64, f64)> {
    let (lo, hi) = s
        .split_once(':')
        .ok_or_else(|| invalid(format!("range `{s}` is not of the form lo:hi")))?;
    let num = |v: &str| {
        v.trim()
            .parse::<f64>()
            .map_err(|e| invalid(format!("bad number `{v}`: {e}")))
    };
    Ok((num(lo)?, num(hi)?))
}

fn load_lp(path: Option<&Path>, fallback: fn() -> LinearProgram) -> Result<LinearProgram> {
    match path {
        Some(p) => LinearProgram::load(p),
        None => Ok(fallback()),
    }
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(value)?)?;
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let out = cli.out.as_path();
    std::fs::create_dir_all(out)?;
    let seed = cli.seed;
    match cli.command {
        Command::GenData {
            encoding,
            count,
            bbox,
        } => {
            let lp = load_lp(cli.lp.as_deref(), fixtures::lp_box)?;
            let kind = EncodingKind::parse(&encoding, lp.n())?;
            let bbox = match bbox {
                Some(s) => BBox::new(s.split(',').map(parse_range).collect::<Result<_>>()?)?,
                None => BBox::default_for(&lp)?,
            };
            let ds = generate_dataset(&lp, &kind, count, &bbox, seed)?;
            let path = out.join("dataset.csv");
            ds.save(&path)?;
            lp.save(out.join("lp.json"))?;
            println!(
                "wrote {} samples to {} (feasible fraction {:?}, partial balance {})",
                ds.len(),
                path.display(),
                ds.meta.feasible_fraction,
                ds.meta.partial_balance
            );
        }
        Command::Train { data, model } => {
            let ds = Dataset::load(&data)?;
            let trained = neural::train_model(&ds, &model.config(seed))?;
            let path = out.join("model.json");
            trained.save(&path)?;
            let s = trained.summary();
            println!(
                "trained {} epochs, train loss {:.6}, validation loss {:?}, validation accuracy {:.4}",
                s.epochs_run,
                s.train_loss,
                s.validation_loss,
                neural::accuracy(&trained, &ds, &ds.meta.validation_indices, 0.5)
            );
            println!("wrote {}", path.display());
        }
        Command::Attribute {
            model,
            method,
            point,
        } => {
            let model = Model::load(&model)?;
            let n = model.input_bounds().len();
            let mut rows = vec![lpx::attribution::AttributionVector::csv_header(n)];
            for m in method.methods(n, seed) {
                let a = m.attribute(&model, &point)?;
                rows.push(a.csv_row());
            }
            let text = rows.join("\n") + "\n";
            print!("{text}");
            std::fs::write(out.join("attribution.csv"), text)?;
        }
        Command::Grid {
            model,
            method,
            grid,
            sequential,
        } => {
            let model = Model::load(&model)?;
            let bounds = model.input_bounds();
            let n = bounds.len();
            let bound = |dim: usize| {
                bounds
                    .get(dim)
                    .copied()
                    .ok_or_else(|| invalid(format!("feature {dim} out of range")))
            };
            let spec = GridSpec {
                dim_x: grid.dim_x,
                dim_y: grid.dim_y,
                fixed_values: grid.fixed.clone().unwrap_or_else(|| vec![0.0; n]),
                x_range: match &grid.x_range {
                    Some(s) => parse_range(s)?,
                    None => bound(grid.dim_x)?,
                },
                y_range: match &grid.y_range {
                    Some(s) => parse_range(s)?,
                    None => bound(grid.dim_y)?,
                },
                resolution: (grid.width, grid.height),
            };
            let exec = if sequential {
                Execution::Sequential
            } else {
                Execution::Parallel
            };
            let lp_digest = match &cli.lp {
                Some(p) => Some(LinearProgram::load(p)?.digest()),
                None => None,
            };
            let methods = method.methods(n, seed);
            for m in &methods {
                let mut r = grid_attribution(&model, m, &spec, exec)?;
                r.provenance.lp_digest = lp_digest.clone();
                let dir = match m {
                    Method::FeaturePermutation(c) | Method::Lime(c) if methods.len() > 1 => {
                        out.join(format!("{}_p{}", m.tag().name(), c.radius))
                    }
                    Method::DirectedFeaturePermutation { radius } if methods.len() > 1 => {
                        out.join(format!("{}_p{radius}", m.tag().name()))
                    }
                    _ => out.join(m.tag().name()),
                };
                r.write(&dir)?;
                println!("wrote {}", dir.display());
            }
        }
        Command::Props {
            encoding,
            samples,
            directedness,
            radius,
        } => {
            let lp = load_lp(cli.lp.as_deref(), fixtures::lp_box)?;
            let kinds = if encoding == "all" {
                EncodingKind::all(lp.n())
            } else {
                vec![EncodingKind::parse(&encoding, lp.n())?]
            };
            let mut reports = Vec::new();
            for kind in &kinds {
                reports.push(properties::check_encoding_properties(
                    &lp, kind, samples, seed,
                )?);
            }
            print!("{}", properties::render_comparison(&reports));
            write_json(&out.join("properties.json"), &reports)?;
            if directedness {
                let bbox = BBox::default_for(&lp)?;
                let ds = feature_sum_dataset(20_000, &bbox, seed);
                let config = ModelConfig {
                    epochs: 10,
                    seed,
                    ..ModelConfig::default()
                };
                let model = neural::train_model(&ds, &config)?;
                let methods = [
                    Method::Saliency,
                    Method::FeaturePermutation(PerturbConfig::with_radius(radius)),
                    Method::Lime(PerturbConfig::with_radius(radius)),
                ];
                let mut results = Vec::new();
                for m in &methods {
                    let r = properties::directedness_test(m, &model, &bbox, 200, seed)?;
                    println!(
                        "{:<10} {:?} (sign agreement {:.3}, mean {:.4} ± {:.4})",
                        m.tag().name(),
                        r.verdict,
                        r.sign_agreement,
                        r.mean,
                        r.stderr
                    );
                    results.push(r);
                }
                write_json(&out.join("directedness.json"), &results)?;
                if results
                    .iter()
                    .any(|r| r.verdict == Directedness::Inconclusive)
                {
                    return Err(Error::Inconclusive(
                        "a directedness test was inconclusive".into(),
                    ));
                }
            }
        }
        Command::ExpLimeSal {
            model,
            radii,
            points,
            lambda,
            samples,
        } => {
            let model = Model::load(&model)?;
            let domain = BBox::new(model.input_bounds())?;
            let lime = PerturbConfig {
                samples,
                ridge_lambda: lambda,
                ..PerturbConfig::default()
            };
            let r = experiments::experiment_lime_vs_saliency(
                &model, &domain, &radii, points, &lime, seed,
            )?;
            print!("{}", r.render());
            write_json(&out.join("lime_vs_saliency.json"), &r)?;
        }
        Command::ExpDirectedFp {
            model,
            radius,
            points,
        } => {
            let model = Model::load(&model)?;
            let domain = BBox::new(model.input_bounds())?;
            let r = experiments::experiment_directed_fp(&model, &domain, radius, points, seed)?;
            print!("{}", r.render());
            write_json(&out.join("directed_fp.json"), &r)?;
        }
        Command::Exp5d {
            count,
            radius,
            model,
        } => {
            let lp = load_lp(cli.lp.as_deref(), fixtures::lp_5d)?;
            let cfg = Exp5dConfig {
                count,
                model: model.config(seed),
                bbox: None,
                radius,
                seed,
            };
            let (trained, report) = experiments::experiment_5dim(&lp, &cfg)?;
            print!("{}", report.render());
            trained.save(out.join("model_5d.json"))?;
            write_json(&out.join("exp5d.json"), &report)?;
        }
        Command::Render { csv, image } => {
            let text = std::fs::read_to_string(&csv)?;
            let (rows, cols) = csv_shape(&text)?;
            let matrix = Matrix::from_csv(&text, rows, cols)?;
            let image = image.unwrap_or_else(|| csv.with_extension("ppm"));
            render_heatmap(&matrix, &image)?;
            println!("wrote {}", image.display());
        }
        Command::Verify { dir } => {
            let mut found = 0;
            for manifest_dir in manifest_dirs(&dir)? {
                grid::verify_grid_dir(&manifest_dir)?;
                println!("ok {}", manifest_dir.display());
                found += 1;
            }
            if found == 0 {
                return Err(Error::Format(format!(
                    "no grid results below {}",
                    dir.display()
                )));
            }
        }
    }
    Ok(())
}

/// Rows and columns implied by the largest indices of a `row,col,value` CSV.
fn csv_shape(text: &str) -> Result<(usize, usize)> {
    let mut shape = (0, 0);
    for line in text.lines().skip(1).filter(|l| !l.trim().is_empty()) {
        let mut fields = line.split(',');
        let mut index = || -> Result<usize> {
            fields
                .next()
                .and_then(|f| f.trim().parse().ok())
                .ok_or_else(|| Error::Format(format!("bad line `{line}`")))
        };
        let (r, c) = (index()?, index()?);
        shape = (shape.0.max(r + 1), shape.1.max(c + 1));
    }
    Ok(shape)
}

fn manifest_dirs(root: &Path) -> Result<Vec<PathBuf>> {
    let mut dirs = Vec::new();
    if root.join(grid::MANIFEST_FILE).is_file() {
        dirs.push(root.to_path_buf());
    }
    let mut children: Vec<PathBuf> = std::fs::read_dir(root)?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()?;
    children.sort();
    for child in children.into_iter().filter(|p| p.is_dir()) {
        dirs.extend(manifest_dirs(&child)?);
    }
    Ok(dirs)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
