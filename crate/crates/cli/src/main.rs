use std::path::PathBuf;

use anyhow::{bail, Result};
use clap::{Args, Parser, Subcommand};
use taskpls_cli::commands::{
    cmd_denoise, cmd_evaluate, cmd_generate, cmd_render, cmd_sweep, cmd_template,
};
use taskpls_cli::config::ExperimentConfig;

#[derive(Parser)]
#[command(
    name = "taskpls",
    about = "Task-regularized PLS-TV denoising experiments",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Override the config's master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the config's output directory.
    #[arg(long)]
    output_dir: Option<PathBuf>,
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig> {
        let mut config = ExperimentConfig::load(&self.config)?;
        if let Some(seed) = self.seed {
            config.master_seed = seed;
        }
        if let Some(dir) = &self.output_dir {
            config.output_dir = dir.clone();
        }
        Ok(config)
    }
}

#[derive(Args)]
struct EnsembleArgs {
    /// Ensemble directory; defaults to <output_dir>/ensembles/test.
    #[arg(long)]
    ensemble: Option<PathBuf>,
    /// Template header path; defaults to <output_dir>/template.json.
    #[arg(long)]
    template: Option<PathBuf>,
    /// Worker threads for per-image denoising.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Write a built-in default configuration to a file.
    Init {
        /// Task name: mvn_lumpy or binary_texture.
        #[arg(long)]
        task: String,
        /// Destination path for the JSON config.
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate the training and test ensembles.
    Generate {
        #[command(flatten)]
        common: Common,
    },
    /// Estimate the Hotelling template from the training ensemble.
    Template {
        #[command(flatten)]
        common: Common,
        /// Training ensemble directory; defaults to
        /// <output_dir>/ensembles/train.
        #[arg(long)]
        ensemble: Option<PathBuf>,
        /// Template output path; defaults to <output_dir>/template.json.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Denoise a single ensemble item and save the estimate and trace.
    Denoise {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        ensemble: EnsembleArgs,
        /// Item index within the ensemble.
        #[arg(long, default_value_t = 0)]
        item: usize,
        #[arg(long, default_value_t = 1.0)]
        alpha: f64,
        #[arg(long)]
        beta: f64,
        #[arg(long, default_value_t = 0.0)]
        gamma: f64,
        /// Output raster path (little-endian f64, row-major).
        #[arg(long)]
        out: PathBuf,
        /// Optional objective trace CSV path.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Run the full (alpha, beta, gamma) sweep and write results.csv.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        ensemble: EnsembleArgs,
        /// Results CSV path; defaults to <output_dir>/results.csv.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Export windowed PNG panels and difference maps for one item.
    Render {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        ensemble: EnsembleArgs,
        /// Item index; defaults to the first signal-present item.
        #[arg(long)]
        item: Option<usize>,
        /// TV weight; defaults to the first grid entry.
        #[arg(long)]
        beta: Option<f64>,
    },
    /// Score an ensemble (optionally denoised) and write the ROC curve.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        ensemble: EnsembleArgs,
        /// Denoise before scoring with these weights "alpha,beta,gamma";
        /// omit to score the raw noisy images.
        #[arg(long)]
        denoise: Option<String>,
        /// Output prefix; writes <prefix>.roc.csv and <prefix>.summary.json.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn parse_weights(text: &str) -> Result<(f64, f64, f64)> {
    let parts: Vec<&str> = text.split(',').collect();
    if parts.len() != 3 {
        bail!("expected \"alpha,beta,gamma\", got {text:?}");
    }
    Ok((
        parts[0].trim().parse()?,
        parts[1].trim().parse()?,
        parts[2].trim().parse()?,
    ))
}

fn default_test_dir(config: &ExperimentConfig) -> PathBuf {
    config.resolved_output_dir().join("ensembles").join("test")
}

fn default_template(config: &ExperimentConfig) -> PathBuf {
    config.resolved_output_dir().join("template.json")
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Init { task, out } => {
            let config = match task.as_str() {
                "mvn_lumpy" => ExperimentConfig::mvn_lumpy_default(),
                "binary_texture" => ExperimentConfig::binary_texture_default(),
                other => bail!("unknown task {other:?}; use mvn_lumpy or binary_texture"),
            };
            config.save(&out)?;
            println!("wrote {}", out.display());
        }
        Command::Generate { common } => {
            let config = common.load()?;
            let out = cmd_generate(&config)?;
            println!("train ensemble: {}", out.train_dir.display());
            println!("test ensemble:  {}", out.test_dir.display());
            println!("run manifest:   {}", out.manifest_path.display());
        }
        Command::Template {
            common,
            ensemble,
            out,
        } => {
            let config = common.load()?;
            let dir = ensemble.unwrap_or_else(|| {
                config.resolved_output_dir().join("ensembles").join("train")
            });
            let path = cmd_template(&config, &dir, out.as_deref())?;
            println!("template: {}", path.display());
        }
        Command::Denoise {
            common,
            ensemble,
            item,
            alpha,
            beta,
            gamma,
            out,
            trace,
        } => {
            let config = common.load()?;
            let dir = ensemble
                .ensemble
                .unwrap_or_else(|| default_test_dir(&config));
            let template = ensemble
                .template
                .unwrap_or_else(|| default_template(&config));
            cmd_denoise(
                &config,
                &dir,
                item,
                &template,
                (alpha, beta, gamma),
                &out,
                trace.as_deref(),
            )?;
            println!("estimate: {}", out.display());
        }
        Command::Sweep {
            common,
            ensemble,
            out,
        } => {
            let config = common.load()?;
            let dir = ensemble
                .ensemble
                .unwrap_or_else(|| default_test_dir(&config));
            let template = ensemble
                .template
                .unwrap_or_else(|| default_template(&config));
            let (path, rows) =
                cmd_sweep(&config, &dir, &template, ensemble.jobs, out.as_deref())?;
            println!("results: {} ({} rows)", path.display(), rows.len());
        }
        Command::Render {
            common,
            ensemble,
            item,
            beta,
        } => {
            let config = common.load()?;
            let dir = ensemble
                .ensemble
                .unwrap_or_else(|| default_test_dir(&config));
            let template = ensemble
                .template
                .unwrap_or_else(|| default_template(&config));
            let render_dir = cmd_render(&config, &dir, &template, item, beta, ensemble.jobs)?;
            println!("panels: {}", render_dir.display());
        }
        Command::Evaluate {
            common,
            ensemble,
            denoise,
            out,
        } => {
            let config = common.load()?;
            let dir = ensemble
                .ensemble
                .unwrap_or_else(|| default_test_dir(&config));
            let template = ensemble
                .template
                .unwrap_or_else(|| default_template(&config));
            let weights = denoise.as_deref().map(parse_weights).transpose()?;
            let roc = cmd_evaluate(
                &config,
                &dir,
                &template,
                weights,
                ensemble.jobs,
                out.as_deref(),
            )?;
            println!("auc: {:.6} (std err {:.6})", roc.auc, roc.auc_std_err);
        }
    }
    Ok(())
}
