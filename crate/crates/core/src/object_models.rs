//! Stochastic backgrounds, deterministic signals, Gaussian noise, and
//! labeled detection ensembles.
//!
//! Two background families are implemented:
//!
//! - **MVN lumpy** (type-2 lumpy): white Gaussian noise circularly
//!   convolved with an isotropic Gaussian kernel, rescaled to a target
//!   marginal standard deviation, plus a DC offset.
//! - **Binary texture**: a Gaussian 1/f^p random field standardized to
//!   unit variance and pushed through an elementwise sigmoid threshold,
//!   mapped onto `[low_level, high_level]`.
//!
//! All generation is a pure function of `(params, seed)`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use rustfft::num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fft::{fft2, ifft2};
use crate::grid::ImageGrid;

/// Parameters of the MVN lumpy (type-2 lumpy) background model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MvnLumpyParams {
    pub width: usize,
    pub height: usize,
    /// Mean background level added after rescaling.
    pub dc_offset: f64,
    /// Standard deviation of the Gaussian correlation kernel, in pixels.
    pub kernel_std: f64,
    /// Marginal standard deviation of the resulting field.
    pub field_std: f64,
}

impl MvnLumpyParams {
    fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::InvalidParameter(format!(
                "MVN lumpy dimensions must be positive, got {}x{}",
                self.width, self.height
            )));
        }
        if !(self.kernel_std > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "kernel_std must be positive, got {}",
                self.kernel_std
            )));
        }
        if !(self.field_std > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "field_std must be positive, got {}",
                self.field_std
            )));
        }
        Ok(())
    }
}

/// Parameters of the sigmoid-thresholded 1/f binary texture model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinaryTextureParams {
    pub width: usize,
    pub height: usize,
    /// Exponent p of the 1/f^p amplitude spectrum.
    pub spectral_exponent: f64,
    /// Threshold on the standardized field.
    pub sigmoid_center: f64,
    /// Sigmoid slope; large values approach a hard threshold.
    pub sigmoid_steepness: f64,
    pub low_level: f64,
    pub high_level: f64,
}

impl BinaryTextureParams {
    fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::InvalidParameter(format!(
                "binary texture dimensions must be positive, got {}x{}",
                self.width, self.height
            )));
        }
        if !(self.sigmoid_steepness > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "sigmoid_steepness must be positive, got {}",
                self.sigmoid_steepness
            )));
        }
        if !(self.low_level < self.high_level) {
            return Err(Error::InvalidParameter(format!(
                "low_level {} must be below high_level {}",
                self.low_level, self.high_level
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignalShape {
    Gaussian,
    Disk,
}

/// A deterministic signal to be added under the signal-present hypothesis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignalSpec {
    pub shape: SignalShape,
    /// (row, col) center in sub-pixel coordinates; pixel centers sit at
    /// integer coordinates.
    pub center: (f64, f64),
    /// Gaussian standard deviation or disk radius, in pixels.
    pub scale: f64,
    /// Peak intensity.
    pub amplitude: f64,
}

/// I.i.d. zero-mean Gaussian pixel noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub std: f64,
}

impl NoiseSpec {
    fn validate(&self) -> Result<()> {
        if !(self.std >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "noise std must be non-negative, got {}",
                self.std
            )));
        }
        Ok(())
    }
}

/// A stochastic background model plus its parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum BackgroundModel {
    MvnLumpy(MvnLumpyParams),
    BinaryTexture(BinaryTextureParams),
}

impl BackgroundModel {
    pub fn generate(&self, seed: u64) -> Result<ImageGrid> {
        match self {
            BackgroundModel::MvnLumpy(p) => gen_mvn_lumpy(p, seed),
            BackgroundModel::BinaryTexture(p) => gen_binary_texture(p, seed),
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        match self {
            BackgroundModel::MvnLumpy(p) => (p.width, p.height),
            BackgroundModel::BinaryTexture(p) => (p.width, p.height),
        }
    }
}

/// Hypothesis label of an ensemble item.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Label {
    H0,
    H1,
}

#[derive(Debug, Clone)]
pub struct EnsembleItem {
    pub noisy: ImageGrid,
    pub truth: ImageGrid,
    pub label: Label,
}

/// Everything needed to regenerate an ensemble bit-identically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub background: BackgroundModel,
    pub signal: SignalSpec,
    pub noise: NoiseSpec,
    pub n_absent: usize,
    pub n_present: usize,
    pub master_seed: u64,
}

#[derive(Debug, Clone)]
pub struct LabeledEnsemble {
    pub items: Vec<EnsembleItem>,
    pub provenance: Provenance,
}

impl LabeledEnsemble {
    pub fn iter_label(&self, label: Label) -> impl Iterator<Item = &EnsembleItem> {
        self.items.iter().filter(move |it| it.label == label)
    }
}

/// Samples the MVN lumpy background: white noise circularly convolved with
/// a Gaussian kernel in the frequency domain, rescaled so the marginal
/// standard deviation equals `field_std`, plus `dc_offset`.
pub fn gen_mvn_lumpy(params: &MvnLumpyParams, seed: u64) -> Result<ImageGrid> {
    params.validate()?;
    let (w, h) = (params.width, params.height);
    let n = w * h;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut field: Vec<Complex<f64>> = (0..n)
        .map(|_| Complex::new(StandardNormal.sample(&mut rng), 0.0))
        .collect();

    // Periodic Gaussian kernel sampled at minimum-image distances.
    let inv_two_var = 1.0 / (2.0 * params.kernel_std * params.kernel_std);
    let mut kernel = vec![Complex::new(0.0, 0.0); n];
    let mut kernel_sq_sum = 0.0;
    for r in 0..h {
        let dr = r.min(h - r) as f64;
        for c in 0..w {
            let dc = c.min(w - c) as f64;
            let k = (-(dr * dr + dc * dc) * inv_two_var).exp();
            kernel[r * w + c] = Complex::new(k, 0.0);
            kernel_sq_sum += k * k;
        }
    }
    // Unit-variance white noise convolved with k has pixel variance Σk².
    let scale = params.field_std / kernel_sq_sum.sqrt();

    fft2(&mut field, w, h);
    fft2(&mut kernel, w, h);
    for (f, k) in field.iter_mut().zip(&kernel) {
        *f *= k;
    }
    ifft2(&mut field, w, h);

    let values = field
        .iter()
        .map(|v| v.re * scale + params.dc_offset)
        .collect();
    ImageGrid::new(w, h, values)
}

/// Samples the binary texture background: spectrally shaped (1/f^p)
/// Gaussian field, standardized to zero mean and unit variance, then
/// sigmoid-thresholded and mapped onto `[low_level, high_level]`.
pub fn gen_binary_texture(params: &BinaryTextureParams, seed: u64) -> Result<ImageGrid> {
    params.validate()?;
    let (w, h) = (params.width, params.height);
    let n = w * h;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut field: Vec<Complex<f64>> = (0..n)
        .map(|_| Complex::new(StandardNormal.sample(&mut rng), 0.0))
        .collect();

    fft2(&mut field, w, h);
    for r in 0..h {
        // Frequencies in cycles per sample, symmetric about Nyquist.
        let fr = r.min(h - r) as f64 / h as f64;
        for c in 0..w {
            let fc = c.min(w - c) as f64 / w as f64;
            let f = (fr * fr + fc * fc).sqrt();
            let gain = if f == 0.0 {
                0.0
            } else {
                f.powf(-params.spectral_exponent)
            };
            field[r * w + c] *= gain;
        }
    }
    ifft2(&mut field, w, h);

    // The shaped spectrum is Hermitian-symmetric, so the imaginary parts
    // are rounding noise.
    let mut values: Vec<f64> = field.iter().map(|v| v.re).collect();

    let mean = values.iter().sum::<f64>() / n as f64;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
    let std = var.sqrt();
    if std == 0.0 {
        return Err(Error::InvalidParameter(
            "degenerate 1/f field (zero variance); check spectral_exponent".into(),
        ));
    }

    let k = params.sigmoid_steepness;
    let tau = params.sigmoid_center;
    let span = params.high_level - params.low_level;
    for v in values.iter_mut() {
        let z = (*v - mean) / std;
        let s = 1.0 / (1.0 + (-k * (z - tau)).exp());
        *v = params.low_level + span * s;
    }
    ImageGrid::new(w, h, values)
}

/// Renders a deterministic signal on a `width x height` grid.
pub fn render_signal(spec: &SignalSpec, width: usize, height: usize) -> Result<ImageGrid> {
    if width == 0 || height == 0 {
        return Err(Error::InvalidParameter(format!(
            "signal grid dimensions must be positive, got {width}x{height}"
        )));
    }
    if !(spec.scale > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "signal scale must be positive, got {}",
            spec.scale
        )));
    }
    if !spec.amplitude.is_finite() {
        return Err(Error::InvalidParameter("signal amplitude must be finite".into()));
    }
    let (r0, c0) = spec.center;
    if !(r0 >= 0.0 && r0 <= (height - 1) as f64 && c0 >= 0.0 && c0 <= (width - 1) as f64) {
        return Err(Error::InvalidParameter(format!(
            "signal center ({r0}, {c0}) outside a {width}x{height} grid"
        )));
    }

    let mut values = vec![0.0; width * height];
    match spec.shape {
        SignalShape::Gaussian => {
            let inv_two_var = 1.0 / (2.0 * spec.scale * spec.scale);
            for r in 0..height {
                for c in 0..width {
                    let d2 = (r as f64 - r0).powi(2) + (c as f64 - c0).powi(2);
                    values[r * width + c] = spec.amplitude * (-d2 * inv_two_var).exp();
                }
            }
        }
        SignalShape::Disk => {
            let r2 = spec.scale * spec.scale;
            for r in 0..height {
                for c in 0..width {
                    let d2 = (r as f64 - r0).powi(2) + (c as f64 - c0).powi(2);
                    if d2 <= r2 {
                        values[r * width + c] = spec.amplitude;
                    }
                }
            }
        }
    }
    ImageGrid::new(width, height, values)
}

/// Adds i.i.d. N(0, std²) noise; deterministic for a fixed seed.
pub fn add_noise(image: &ImageGrid, spec: &NoiseSpec, seed: u64) -> Result<ImageGrid> {
    spec.validate()?;
    if spec.std == 0.0 {
        return Ok(image.clone());
    }
    let normal = Normal::new(0.0, spec.std)
        .map_err(|e| Error::InvalidParameter(format!("noise distribution: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values = image
        .as_slice()
        .iter()
        .map(|v| v + normal.sample(&mut rng))
        .collect();
    ImageGrid::new(image.width(), image.height(), values)
}

// Seed-stream tags for per-item seed derivation.
const ROLE_BACKGROUND: u64 = 0x62_61_63_6b; // "back"
const ROLE_NOISE_ABSENT: u64 = 0x6e_30; // "n0"
const ROLE_NOISE_PRESENT: u64 = 0x6e_31; // "n1"

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e3779b97f4a7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d049bb133111eb);
    x ^ (x >> 31)
}

/// Stable 64-bit seed for item `index` in stream `role`, derived from the
/// master seed. Independent of platform and hasher randomization.
pub fn derive_seed(master_seed: u64, index: u64, role: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(master_seed) ^ index) ^ role)
}

/// Generates a labeled ensemble of `n_absent` H0 and `n_present` H1 items.
///
/// The k-th item of each class shares its background seed, so with zero
/// noise the k-th H1/H0 pair differs by exactly the rendered signal; noise
/// streams are distinct per class and per item.
pub fn make_ensemble(
    background: &BackgroundModel,
    signal: &SignalSpec,
    noise: &NoiseSpec,
    n_absent: usize,
    n_present: usize,
    master_seed: u64,
) -> Result<LabeledEnsemble> {
    let (w, h) = background.shape();
    let signal_grid = render_signal(signal, w, h)?;
    noise.validate()?;

    let mut items = Vec::with_capacity(n_absent + n_present);
    for k in 0..n_absent {
        let bg = background.generate(derive_seed(master_seed, k as u64, ROLE_BACKGROUND))?;
        let noisy = add_noise(&bg, noise, derive_seed(master_seed, k as u64, ROLE_NOISE_ABSENT))?;
        items.push(EnsembleItem {
            noisy,
            truth: bg,
            label: Label::H0,
        });
    }
    for k in 0..n_present {
        let bg = background.generate(derive_seed(master_seed, k as u64, ROLE_BACKGROUND))?;
        let truth = bg.add(&signal_grid)?;
        let noisy = add_noise(
            &truth,
            noise,
            derive_seed(master_seed, k as u64, ROLE_NOISE_PRESENT),
        )?;
        items.push(EnsembleItem {
            noisy,
            truth,
            label: Label::H1,
        });
    }

    Ok(LabeledEnsemble {
        items,
        provenance: Provenance {
            background: *background,
            signal: *signal,
            noise: *noise,
            n_absent,
            n_present,
            master_seed,
        },
    })
}
