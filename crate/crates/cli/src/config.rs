//! JSON experiment configuration.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use taskpls_core::denoiser::{DenoiseConfig, InitRule};
use taskpls_core::object_models::{
    BackgroundModel, BinaryTextureParams, MvnLumpyParams, NoiseSpec, SignalShape, SignalSpec,
};

pub const CONFIG_FORMAT_VERSION: u32 = 1;

/// Environment variable that redirects relative output directories.
pub const OUTPUT_ROOT_ENV: &str = "TASKPLS_OUTPUT_ROOT";

/// Solver settings shared by every grid point of a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverSettings {
    pub tv_epsilon: f64,
    pub iterations: usize,
    pub step_size: f64,
    pub moment_decay_1: f64,
    pub moment_decay_2: f64,
    pub moment_epsilon: f64,
    pub init: InitRule,
    pub trace_stride: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        // Desk-scale iteration budget; the core default stays at 10,000.
        SolverSettings {
            tv_epsilon: 1e-6,
            iterations: 3000,
            step_size: 1e-4,
            moment_decay_1: 0.9,
            moment_decay_2: 0.999,
            moment_epsilon: 1e-8,
            init: InitRule::NoisyInput,
            trace_stride: 10,
        }
    }
}

impl SolverSettings {
    pub fn denoise_config(&self, alpha: f64, beta: f64, gamma: f64) -> DenoiseConfig {
        DenoiseConfig {
            alpha,
            beta,
            gamma,
            tv_epsilon: self.tv_epsilon,
            iterations: self.iterations,
            step_size: self.step_size,
            moment_decay_1: self.moment_decay_1,
            moment_decay_2: self.moment_decay_2,
            moment_epsilon: self.moment_epsilon,
            init: self.init,
            trace_stride: self.trace_stride,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub format_version: u32,
    /// Background model and parameters; the tag names the task.
    pub background: BackgroundModel,
    pub signal: SignalSpec,
    pub noise: NoiseSpec,
    pub train_absent: usize,
    pub train_present: usize,
    pub test_absent: usize,
    pub test_present: usize,
    /// Covariance shrinkage weight for the Hotelling estimate.
    pub shrinkage: f64,
    pub alphas: Vec<f64>,
    pub betas: Vec<f64>,
    pub gammas: Vec<f64>,
    pub solver: SolverSettings,
    pub master_seed: u64,
    pub output_dir: PathBuf,
}

impl ExperimentConfig {
    /// Desk-scale MVN lumpy detection task.
    pub fn mvn_lumpy_default() -> Self {
        ExperimentConfig {
            format_version: CONFIG_FORMAT_VERSION,
            background: BackgroundModel::MvnLumpy(MvnLumpyParams {
                width: 32,
                height: 32,
                dc_offset: 0.1,
                kernel_std: 6.0,
                field_std: 0.03,
            }),
            signal: SignalSpec {
                shape: SignalShape::Gaussian,
                center: (15.5, 15.5),
                scale: 5.0,
                amplitude: 0.02,
            },
            noise: NoiseSpec { std: 0.01 },
            train_absent: 2000,
            train_present: 2000,
            test_absent: 400,
            test_present: 400,
            shrinkage: 1e-3,
            alphas: vec![1.0],
            betas: vec![0.05],
            gammas: vec![0.0, 0.1, 0.5, 1.0],
            solver: SolverSettings::default(),
            master_seed: 20260823,
            output_dir: PathBuf::from("runs/mvn_lumpy"),
        }
    }

    /// Desk-scale binary texture detection task.
    pub fn binary_texture_default() -> Self {
        ExperimentConfig {
            format_version: CONFIG_FORMAT_VERSION,
            background: BackgroundModel::BinaryTexture(BinaryTextureParams {
                width: 32,
                height: 32,
                spectral_exponent: 1.5,
                sigmoid_center: 0.0,
                sigmoid_steepness: 5.0,
                low_level: 0.0,
                high_level: 1.0,
            }),
            signal: SignalSpec {
                shape: SignalShape::Disk,
                center: (15.5, 15.5),
                scale: 2.0,
                amplitude: 0.1,
            },
            noise: NoiseSpec { std: 0.1 },
            train_absent: 2000,
            train_present: 2000,
            test_absent: 400,
            test_present: 400,
            shrinkage: 1e-3,
            alphas: vec![1.0],
            betas: vec![0.01, 0.14, 1.0],
            gammas: vec![0.0, 0.1, 1.0, 10.0],
            solver: SolverSettings::default(),
            master_seed: 20260823,
            output_dir: PathBuf::from("runs/binary_texture"),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let config: ExperimentConfig =
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        fs::write(path, text + "\n")
            .with_context(|| format!("writing config {}", path.display()))?;
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.format_version != CONFIG_FORMAT_VERSION {
            bail!(
                "unsupported config format version {} (expected {CONFIG_FORMAT_VERSION})",
                self.format_version
            );
        }
        if self.alphas.is_empty() || self.betas.is_empty() || self.gammas.is_empty() {
            bail!("alpha, beta, and gamma grids must be non-empty");
        }
        if self.train_absent < 1
            || self.train_present < 1
            || self.test_absent < 1
            || self.test_present < 1
        {
            bail!("ensemble counts must be at least 1");
        }
        if !(self.shrinkage >= 0.0) {
            bail!("shrinkage must be non-negative, got {}", self.shrinkage);
        }
        // A representative grid point must form a valid solver config.
        self.solver
            .denoise_config(self.alphas[0], self.betas[0], self.gammas[0].max(0.0))
            .validate()
            .map_err(anyhow::Error::from)?;
        Ok(())
    }

    /// Output directory with the `TASKPLS_OUTPUT_ROOT` override applied to
    /// relative paths.
    pub fn resolved_output_dir(&self) -> PathBuf {
        if self.output_dir.is_absolute() {
            return self.output_dir.clone();
        }
        match std::env::var_os(OUTPUT_ROOT_ENV) {
            Some(root) => PathBuf::from(root).join(&self.output_dir),
            None => self.output_dir.clone(),
        }
    }
}
