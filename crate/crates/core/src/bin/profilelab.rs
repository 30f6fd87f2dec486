use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;

use profilelab::harness::{self, emit_report, ExperimentConfig, OutputFormat, Report, Suite};
use profilelab::normalize::{a_bar, a_c};
use profilelab::oracle::{conditional_martingale_check, exact_mean_profile, history_count, martingale_grid, DEFAULT_HISTORY_CAP};
use profilelab::par::{init_threads_from_env, Execution};
use profilelab::rng::{stream, Purpose};
use profilelab::spectral::range_d1;
use profilelab::tree_sim::{grow, grow_profile};
use profilelab::weight_model::{parse_params, preset, WeightModel};
use profilelab::{fixedpoint, Error, Result};

#[derive(Parser)]
#[command(name = "profilelab", version, about = "Profiles of random weighted b-ary trees")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct ModelArgs {
    /// Preset name, or a path to a JSON model file.
    #[arg(long)]
    preset: String,
    /// Preset parameter as k=v; repeatable.
    #[arg(long = "param", value_name = "K=V")]
    params: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Grow one tree and write its profile.
    Grow {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        nodes: u64,
        #[arg(long)]
        seed: u64,
        /// Write the growth trace (leaf index and atom per step) as JSON.
        #[arg(long)]
        trace: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value = "csv")]
        format: OutputFormat,
    },
    /// Admissible interval and Lambda* for d = 1.
    Range {
        #[command(flatten)]
        model: ModelArgs,
    },
    /// Normalizing constants on a c grid or at fixed levels.
    Normalize {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        nodes: u64,
        #[arg(long, value_delimiter = ',', conflicts_with = "l", required_unless_present = "l")]
        c: Vec<f64>,
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
        l: Vec<i64>,
    },
    /// Sample the fixed-point limit by population dynamics.
    Fixpoint {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
        theta: Vec<f64>,
        #[arg(long)]
        pool: usize,
        #[arg(long)]
        iters: u64,
        #[arg(long)]
        seed: u64,
        /// Write the final pool as CSV.
        #[arg(long)]
        samples: Option<PathBuf>,
    },
    /// Exact mean profile, or the exact one-step martingale check.
    Oracle {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        nodes: u64,
        #[arg(long)]
        martingale_check: bool,
    },
    /// Run the gate suites.
    Verify {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, default_value = "identity")]
        suite: Suite,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

fn load_model(args: &ModelArgs) -> Result<WeightModel> {
    if args.preset.ends_with(".json") {
        return WeightModel::from_json_file(Path::new(&args.preset));
    }
    let params = parse_params(args.params.iter().map(String::as_str))?;
    if params.is_empty() {
        profilelab::preset_default(&args.preset)
    } else {
        preset(&args.preset, &params)
    }
}

fn write_out(text: &str, path: Option<&Path>) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| Error::io(p, e)),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn join<T: ToString>(v: &[T]) -> String {
    v.iter().map(T::to_string).collect::<Vec<_>>().join(";")
}

/// Infinite endpoints are written as null.
fn finite(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

#[derive(Serialize)]
struct RangeDoc {
    z0: Option<f64>,
    z1: Option<f64>,
    lambda_star: [Option<f64>; 2],
    theta_interval: [Option<f64>; 2],
}

#[derive(Serialize)]
struct FixpointDoc<'a> {
    theta: &'a [f64],
    mean: f64,
    var: f64,
    ks: f64,
    divergent: bool,
    samples_path: Option<String>,
}

#[derive(Serialize)]
struct MartingaleDoc {
    n_max: u64,
    grid_points: usize,
    max_deviation: f64,
    pass: bool,
}

/// Split a flat list into points of dimension d.
fn chunk<T: Clone>(flat: &[T], d: usize, name: &str) -> Result<Vec<Vec<T>>> {
    if flat.is_empty() || !flat.len().is_multiple_of(d) {
        return Err(Error::BadParameter {
            name: name.into(),
            reason: format!("{} values do not form points of dimension {d}", flat.len()),
        });
    }
    Ok(flat.chunks(d).map(<[T]>::to_vec).collect())
}

/// Ok(true) when every hard gate passed.
fn run(cli: Cli) -> Result<bool> {
    let exec = Execution::Parallel;
    match cli.command {
        Command::Grow {
            model,
            nodes,
            seed,
            trace,
            out,
            format,
        } => {
            let model = load_model(&model)?;
            let mut rng = stream(seed, Purpose::Replication, 0);
            let profile = if let Some(path) = &trace {
                let (tree, tr) = grow(&model, nodes, &mut rng, true)?;
                let text = serde_json::to_string(&tr.expect("trace was requested")).expect("trace serializes");
                std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))?;
                tree.profile()
            } else {
                grow_profile(&model, nodes, &mut rng)?
            };
            let text = match format {
                OutputFormat::Csv => profile.to_csv(model.d),
                OutputFormat::Json => profile.to_json() + "\n",
            };
            write_out(&text, out.as_deref())?;
            Ok(true)
        }
        Command::Range { model } => {
            let model = load_model(&model)?;
            let r = range_d1(&model)?.interval.expect("d = 1 has an interval");
            let doc = RangeDoc {
                z0: finite(r.z0),
                z1: finite(r.z1),
                lambda_star: [finite(r.c_low), finite(r.c_high)],
                theta_interval: [finite(r.theta_low), finite(r.theta_high)],
            };
            println!("{}", serde_json::to_string(&doc).expect("range serializes"));
            Ok(true)
        }
        Command::Normalize { model, nodes, c, l } => {
            let model = load_model(&model)?;
            let mut out = String::new();
            if !c.is_empty() {
                out.push_str("c,theta,l_n,log_A_c\n");
                for point in chunk(&c, model.d, "c")? {
                    let a = a_c(&model, nodes, &point)?;
                    out.push_str(&format!("{},{},{},{}\n", join(&a.c), join(&a.theta), join(&a.l), a.log_value));
                }
            } else {
                out.push_str("l,theta,log_A_bar\n");
                for point in chunk(&l, model.d, "l")? {
                    let a = a_bar(&model, nodes, &point)?;
                    out.push_str(&format!("{},{},{}\n", join(&a.l), join(&a.theta), a.log_value));
                }
            }
            write_out(&out, None)?;
            Ok(true)
        }
        Command::Fixpoint {
            model,
            theta,
            pool,
            iters,
            seed,
            samples,
        } => {
            let model = load_model(&model)?;
            if pool < 1000 {
                return Err(Error::BadParameter {
                    name: "pool".into(),
                    reason: "pool size must be at least 1000".into(),
                });
            }
            let p = fixedpoint::fixpoint_iterate(&model, &theta, pool, iters, seed, exec)?;
            if let Some(path) = &samples {
                let mut text = String::from("w\n");
                for w in &p.samples {
                    text.push_str(&format!("{w:e}\n"));
                }
                std::fs::write(path, text).map_err(|e| Error::io(path, e))?;
            }
            let doc = FixpointDoc {
                theta: &p.theta,
                mean: p.mean,
                var: p.variance,
                ks: p.ks_to_previous,
                divergent: p.divergent,
                samples_path: samples.as_ref().map(|s| s.display().to_string()),
            };
            println!("{}", serde_json::to_string(&doc).expect("fixpoint serializes"));
            Ok(!p.divergent)
        }
        Command::Oracle {
            model,
            nodes,
            martingale_check,
        } => {
            let model = load_model(&model)?;
            if martingale_check {
                if history_count(&model, nodes) > DEFAULT_HISTORY_CAP {
                    return Err(Error::Resource(format!("enumeration at n = {nodes} exceeds the history cap")));
                }
                let grid = martingale_grid(model.d);
                let mut worst: f64 = 0.0;
                for n in 0..=nodes {
                    worst = worst.max(conditional_martingale_check(&model, n, &grid)?);
                }
                let pass = worst < 1e-12;
                    let doc = MartingaleDoc {
                    n_max: nodes,
                    grid_points: grid.len(),
                    max_deviation: worst,
                    pass,
                };
                println!("{}", serde_json::to_string(&doc).expect("check serializes"));
                Ok(pass)
            } else {
                let mp = exact_mean_profile(&model, nodes)?;
                write_out(&mp.to_csv(model.d), None)?;
                Ok(true)
            }
        }
        Command::Verify {
            model,
            suite,
            seed,
            config,
        } => {
            let mut cfg = match &config {
                Some(path) => ExperimentConfig::from_json_file(path)?,
                None => ExperimentConfig::default(),
            };
            cfg.seed = seed;
            if model.preset.ends_with(".json") {
                cfg.model_path = Some(PathBuf::from(&model.preset));
            } else {
                cfg.preset = model.preset.clone();
                cfg.params = parse_params(model.params.iter().map(String::as_str))?;
                cfg.model_path = None;
            }
            // An invalid model file is a failed validation gate, not an error.
            let m = cfg.model_unvalidated()?;
            // Domain errors in a convergence grid are usage errors.
            if m.validate().is_ok() && matches!(suite, Suite::Convergence | Suite::All) {
                for n in cfg.n.values() {
                    cfg.grid(&m, n)?;
                }
            }
            let report = harness::verify(&m, &cfg, suite, exec)?;
            emit_report(&report, cfg.format, cfg.output.as_deref())?;
            if cfg.output.is_some() {
                eprint!("{}", report.to_csv());
            }
            Ok(report.all_hard_pass())
        }
    }
}

fn main() -> ExitCode {
    init_threads_from_env();
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("profilelab: {e}");
            ExitCode::from(2)
        }
    }
}
