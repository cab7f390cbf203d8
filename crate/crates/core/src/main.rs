use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use rvosfuse::pipeline::{run_eval, run_features, run_fuse, run_prompts};
use rvosfuse::{Error, PipelineConfig};

#[derive(Parser, Debug)]
#[command(
    name = "rvosfuse",
    version,
    about = "Mask fusion, prompts, features and J&F evaluation for video segmentation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Default)]
struct Common {
    /// TOML configuration file; flags override its values
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads
    #[arg(long)]
    jobs: Option<usize>,
    /// Output directory (output file for `eval`)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fuse predictions with instance candidates
    Fuse {
        /// Prediction mask file or directory
        #[arg(long)]
        predictions: Option<PathBuf>,
        /// Candidate mask file or directory
        #[arg(long)]
        candidates: Option<PathBuf>,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        tau_f: Option<f64>,
        #[arg(long)]
        tau_v: Option<f64>,
        #[command(flatten)]
        common: Common,
    },
    /// Score predictions against ground truth (J, F, J&F)
    Eval {
        #[arg(long)]
        predictions: Option<PathBuf>,
        #[arg(long)]
        gt: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Sample box and point prompts for every stored frame
    Prompts {
        #[arg(long)]
        predictions: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Positional trajectory features, optionally with aggregated queries
    Features {
        #[arg(long)]
        predictions: Option<PathBuf>,
        /// Frame sampler: global or local
        #[arg(long)]
        sampling: Option<String>,
        /// Number of frames to sample
        #[arg(long)]
        frames: Option<usize>,
        #[arg(long)]
        window_start: Option<usize>,
        /// Also aggregate instance queries with the attention kernel
        #[arg(long)]
        query_init: bool,
        /// Model weight tensor file
        #[arg(long)]
        weights: Option<PathBuf>,
        /// Backbone feature tensor file
        #[arg(long)]
        backbone: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
}

fn base_config(common: &Common) -> Result<PipelineConfig, Error> {
    let mut config = match &common.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(s) = common.seed {
        config.seed = s;
    }
    if let Some(j) = common.jobs {
        config.jobs = j;
    }
    if common.out.is_some() {
        config.paths.out = common.out.clone();
    }
    Ok(config)
}

fn set<T>(slot: &mut Option<T>, value: Option<T>) {
    if value.is_some() {
        *slot = value;
    }
}

fn run(command: Command) -> Result<(), Error> {
    match command {
        Command::Fuse {
            predictions,
            candidates,
            alpha,
            tau_f,
            tau_v,
            common,
        } => {
            let mut c = base_config(&common)?;
            set(&mut c.paths.predictions, predictions);
            set(&mut c.paths.candidates, candidates);
            c.fusion.alpha = alpha.unwrap_or(c.fusion.alpha);
            c.fusion.tau_f = tau_f.unwrap_or(c.fusion.tau_f);
            c.fusion.tau_v = tau_v.unwrap_or(c.fusion.tau_v);
            for p in run_fuse(&c)? {
                println!("{}", p.display());
            }
        }
        Command::Eval {
            predictions,
            gt,
            common,
        } => {
            let mut c = base_config(&common)?;
            set(&mut c.paths.predictions, predictions);
            set(&mut c.paths.gt, gt);
            let report = run_eval(&c)?;
            for o in &report.per_object {
                println!("{}\tJ={:.2}\tF={:.2}\tJ&F={:.2}", o.id, o.j, o.f, o.jf);
            }
            println!(
                "mean\tJ={:.2}\tF={:.2}\tJ&F={:.2}",
                report.mean_j, report.mean_f, report.mean_jf
            );
        }
        Command::Prompts {
            predictions,
            common,
        } => {
            let mut c = base_config(&common)?;
            set(&mut c.paths.predictions, predictions);
            for p in run_prompts(&c)? {
                println!("{}", p.display());
            }
        }
        Command::Features {
            predictions,
            sampling,
            frames,
            window_start,
            query_init,
            weights,
            backbone,
            common,
        } => {
            let mut c = base_config(&common)?;
            set(&mut c.paths.predictions, predictions);
            set(&mut c.paths.weights, weights);
            set(&mut c.paths.backbone, backbone);
            if let Some(mode) = sampling {
                c.sampling.mode = mode;
            }
            set(&mut c.sampling.frames, frames);
            set(&mut c.sampling.window_start, window_start);
            for p in run_features(&c, query_init)? {
                println!("{}", p.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("RVOSFUSE_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
