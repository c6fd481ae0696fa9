//! Linear observer templates and the scalar test statistic `t = wᵀg`.
//!
//! The Hotelling template solves `(K̄ + ρ·tr(K̄)/N·I) w = m₁ − m₀` with
//! `K̄ = ½(K₀ + K₁)` the equal-weight average of the class sample
//! covariances of the noisy training images. Shrinkage toward a scaled
//! identity keeps the system positive definite at desk-scale sample sizes.

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::ImageGrid;
use crate::object_models::{Label, LabeledEnsemble, NoiseSpec};

/// Pixel count above which the SPD solve switches from a direct Cholesky
/// factorization to conjugate gradients.
const DIRECT_SOLVE_MAX_DIM: usize = 4096;

/// Relative residual required of the template solve.
const SOLVE_RTOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateKind {
    Hotelling,
    Npw,
    Custom,
}

/// Identity of the data a template was estimated from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    /// Identifier of the training ensemble (e.g. a manifest hash).
    pub ensemble_id: String,
    pub n_absent: usize,
    pub n_present: usize,
    /// Unix seconds at estimation time.
    pub created_unix_secs: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObserverTemplate {
    w: Vec<f64>,
    width: usize,
    height: usize,
    pub kind: TemplateKind,
    pub shrinkage: f64,
    pub training_meta: Option<TrainingMeta>,
}

impl ObserverTemplate {
    /// Wraps an arbitrary template vector; length must match the grid.
    pub fn custom(width: usize, height: usize, w: Vec<f64>) -> Result<Self> {
        if w.len() != width * height {
            return Err(Error::InvalidParameter(format!(
                "template length {} does not match {width}x{height}",
                w.len()
            )));
        }
        if w.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("template has non-finite entries".into()));
        }
        Ok(ObserverTemplate {
            w,
            width,
            height,
            kind: TemplateKind::Custom,
            shrinkage: 0.0,
            training_meta: None,
        })
    }

    pub fn weights(&self) -> &[f64] {
        &self.w
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn norm_sq(&self) -> f64 {
        self.w.iter().map(|v| v * v).sum()
    }

    fn check_shape(&self, image: &ImageGrid) -> Result<()> {
        if (self.width, self.height) != image.shape() {
            return Err(Error::shape((self.width, self.height), image.shape()));
        }
        Ok(())
    }
}

/// Scalar test statistic of a linear observer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TestStatistic {
    pub value: f64,
}

fn class_mean_and_scatter(
    items: &[&ImageGrid],
    dim: usize,
) -> (DVector<f64>, DMatrix<f64>) {
    let m = items.len();
    let mut data = DMatrix::<f64>::zeros(m, dim);
    for (i, img) in items.iter().enumerate() {
        for (j, &v) in img.as_slice().iter().enumerate() {
            data[(i, j)] = v;
        }
    }
    let mean = data.row_sum().transpose() / m as f64;
    for i in 0..m {
        for j in 0..dim {
            data[(i, j)] -= mean[j];
        }
    }
    // Sample covariance via XᵀX / (m - 1).
    let cov = data.transpose() * &data / (m as f64 - 1.0);
    (mean, cov)
}

fn conjugate_gradient(
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    x0: DVector<f64>,
    rtol: f64,
    max_iter: usize,
) -> DVector<f64> {
    let b_norm = b.norm();
    if b_norm == 0.0 {
        return DVector::zeros(b.len());
    }
    let mut x = x0;
    let mut r = b - a * &x;
    let mut p = r.clone();
    let mut rs_old = r.dot(&r);
    for _ in 0..max_iter {
        if rs_old.sqrt() <= rtol * b_norm {
            break;
        }
        let ap = a * &p;
        let alpha = rs_old / p.dot(&ap);
        x += alpha * &p;
        r -= alpha * &ap;
        let rs_new = r.dot(&r);
        p = &r + (rs_new / rs_old) * p;
        rs_old = rs_new;
    }
    x
}

/// Estimates the Hotelling template from the noisy images of a labeled
/// ensemble, with shrinkage weight `rho` toward `tr(K̄)/N · I`.
pub fn estimate_hotelling(ensemble: &LabeledEnsemble, rho: f64) -> Result<ObserverTemplate> {
    if !(rho >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "shrinkage must be non-negative, got {rho}"
        )));
    }
    let absent: Vec<&ImageGrid> = ensemble.iter_label(Label::H0).map(|it| &it.noisy).collect();
    let present: Vec<&ImageGrid> = ensemble.iter_label(Label::H1).map(|it| &it.noisy).collect();
    if absent.len() < 2 || present.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "need at least 2 items per class, got {} H0 and {} H1",
            absent.len(),
            present.len()
        )));
    }
    let (width, height) = absent[0].shape();
    for img in absent.iter().chain(present.iter()) {
        if img.shape() != (width, height) {
            return Err(Error::shape((width, height), img.shape()));
        }
    }
    let dim = width * height;

    let (m0, k0) = class_mean_and_scatter(&absent, dim);
    let (m1, k1) = class_mean_and_scatter(&present, dim);

    let mut a = (k0 + k1) * 0.5;
    let trace = a.trace();
    let ridge = rho * trace / dim as f64;
    for i in 0..dim {
        a[(i, i)] += ridge;
    }
    let rhs = &m1 - &m0;
    let rhs_norm = rhs.norm();

    let solution = if dim <= DIRECT_SOLVE_MAX_DIM {
        match Cholesky::new(a.clone()) {
            Some(chol) => {
                let x = chol.solve(&rhs);
                // Polish if accumulated rounding left the residual above
                // tolerance (can happen near singularity at rho = 0).
                let res = (&rhs - &a * &x).norm();
                if res > SOLVE_RTOL * rhs_norm && rhs_norm > 0.0 {
                    conjugate_gradient(&a, &rhs, x, SOLVE_RTOL, 10 * dim)
                } else {
                    x
                }
            }
            None => {
                return Err(Error::IllConditionedCovariance(format!(
                    "covariance not positive definite at shrinkage {rho} \
                     ({} + {} samples for {dim} pixels)",
                    absent.len(),
                    present.len()
                )));
            }
        }
    } else {
        conjugate_gradient(&a, &rhs, DVector::zeros(dim), SOLVE_RTOL, 10 * dim)
    };

    if rhs_norm > 0.0 {
        let res = (&rhs - &a * &solution).norm();
        if res > SOLVE_RTOL * rhs_norm {
            return Err(Error::IllConditionedCovariance(format!(
                "solve residual {res:e} exceeds {SOLVE_RTOL:e} x ||m1 - m0||; \
                 raise the shrinkage weight (currently {rho})"
            )));
        }
    }
    if solution.iter().any(|v| !v.is_finite()) {
        return Err(Error::IllConditionedCovariance(format!(
            "non-finite template at shrinkage {rho}"
        )));
    }

    Ok(ObserverTemplate {
        w: solution.iter().copied().collect(),
        width,
        height,
        kind: TemplateKind::Hotelling,
        shrinkage: rho,
        training_meta: None,
    })
}

/// Non-prewhitening matched filter: the template is the signal itself.
pub fn npw_template(signal: &ImageGrid) -> Result<ObserverTemplate> {
    if signal.as_slice().iter().all(|&v| v == 0.0) {
        return Err(Error::InvalidParameter(
            "NPW template requires a non-zero signal".into(),
        ));
    }
    Ok(ObserverTemplate {
        w: signal.as_slice().to_vec(),
        width: signal.width(),
        height: signal.height(),
        kind: TemplateKind::Npw,
        shrinkage: 0.0,
        training_meta: None,
    })
}

/// `t = wᵀg`.
pub fn test_statistic(template: &ObserverTemplate, image: &ImageGrid) -> Result<TestStatistic> {
    template.check_shape(image)?;
    let value = template
        .w
        .iter()
        .zip(image.as_slice())
        .map(|(w, g)| w * g)
        .sum();
    Ok(TestStatistic { value })
}

/// Negative log-likelihood of observing test statistic `t` given the
/// hypothesized clean image `f` under i.i.d. Gaussian pixel noise:
/// `(t − wᵀf)² / (2σ²‖w‖²) + ½·log(2πσ²‖w‖²)`.
pub fn nll_test_statistic(
    template: &ObserverTemplate,
    f: &ImageGrid,
    t: f64,
    noise: &NoiseSpec,
) -> Result<f64> {
    template.check_shape(f)?;
    let norm_sq = template.norm_sq();
    if !(noise.std > 0.0) || norm_sq == 0.0 {
        return Err(Error::DegenerateVariance(format!(
            "noise std {} and ||w||^2 {} must both be positive",
            noise.std, norm_sq
        )));
    }
    let variance = noise.std * noise.std * norm_sq;
    let mean = test_statistic(template, f)?.value;
    let d = t - mean;
    Ok(d * d / (2.0 * variance) + 0.5 * (2.0 * std::f64::consts::PI * variance).ln())
}
