//! ROC analysis, AUC with standard error, RMSE, and difference maps.
//!
//! Higher scores indicate the signal-present class by convention; a
//! template that separates the classes the wrong way yields AUC < 0.5 and
//! is reported as-is.

use crate::denoiser::{denoise, DenoiseConfig};
use crate::error::{Error, Result};
use crate::grid::ImageGrid;
use crate::object_models::{Label, LabeledEnsemble};
use crate::observer::{test_statistic, ObserverTemplate};

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreSet {
    pub absent_scores: Vec<f64>,
    pub present_scores: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RocResult {
    /// (false-positive rate, true-positive rate) from threshold +inf down,
    /// beginning at (0,0) and ending at (1,1).
    pub operating_points: Vec<(f64, f64)>,
    /// Decision threshold of each operating point; the first is +inf.
    pub thresholds: Vec<f64>,
    /// Mann-Whitney AUC with ties counted one half.
    pub auc: f64,
    /// Hanley-McNeil standard error of the AUC.
    pub auc_std_err: f64,
}

/// Empirical ROC curve and Mann-Whitney AUC of a score set.
pub fn roc_curve(scores: &ScoreSet) -> Result<RocResult> {
    let n0 = scores.absent_scores.len();
    let n1 = scores.present_scores.len();
    if n0 == 0 || n1 == 0 {
        return Err(Error::InsufficientData(format!(
            "ROC needs scores in both classes, got {n0} absent and {n1} present"
        )));
    }
    for &s in scores.absent_scores.iter().chain(&scores.present_scores) {
        if !s.is_finite() {
            return Err(Error::InvalidParameter("non-finite score".into()));
        }
    }

    // Merge and sweep thresholds from high to low.
    let mut merged: Vec<(f64, bool)> = Vec::with_capacity(n0 + n1);
    merged.extend(scores.absent_scores.iter().map(|&s| (s, false)));
    merged.extend(scores.present_scores.iter().map(|&s| (s, true)));
    merged.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());

    let mut points = Vec::with_capacity(n0 + n1 + 1);
    let mut thresholds = Vec::with_capacity(n0 + n1 + 1);
    points.push((0.0, 0.0));
    thresholds.push(f64::INFINITY);
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut i = 0;
    while i < merged.len() {
        // Consume all scores tied at this threshold before emitting a point,
        // so ties appear as diagonal segments.
        let threshold = merged[i].0;
        while i < merged.len() && merged[i].0 == threshold {
            if merged[i].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push((fp as f64 / n0 as f64, tp as f64 / n1 as f64));
        thresholds.push(threshold);
    }

    // Mann-Whitney AUC via midranks (ties count one half).
    let mut ranked: Vec<(f64, bool)> = merged;
    ranked.reverse(); // ascending
    let mut rank_sum_present = 0.0;
    let mut j = 0;
    while j < ranked.len() {
        let mut k = j;
        while k < ranked.len() && ranked[k].0 == ranked[j].0 {
            k += 1;
        }
        // 1-based midrank of the tie group [j, k).
        let midrank = (j + 1 + k) as f64 / 2.0;
        for item in &ranked[j..k] {
            if item.1 {
                rank_sum_present += midrank;
            }
        }
        j = k;
    }
    let u = rank_sum_present - (n1 as f64) * (n1 as f64 + 1.0) / 2.0;
    let auc = u / (n0 as f64 * n1 as f64);

    let auc_std_err = hanley_mcneil_std_err(auc, n0, n1);

    Ok(RocResult {
        operating_points: points,
        thresholds,
        auc,
        auc_std_err,
    })
}

fn hanley_mcneil_std_err(auc: f64, n_absent: usize, n_present: usize) -> f64 {
    let a = auc;
    let q1 = a / (2.0 - a);
    let q2 = 2.0 * a * a / (1.0 + a);
    let n0 = n_absent as f64;
    let n1 = n_present as f64;
    let var = (a * (1.0 - a) + (n1 - 1.0) * (q1 - a * a) + (n0 - 1.0) * (q2 - a * a)) / (n0 * n1);
    var.max(0.0).sqrt()
}

/// Root-mean-square error between two grids.
pub fn rmse(a: &ImageGrid, b: &ImageGrid) -> Result<f64> {
    a.same_shape(b)?;
    let sum_sq: f64 = a
        .as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(x, y)| (x - y) * (x - y))
        .sum();
    Ok((sum_sq / a.len() as f64).sqrt())
}

/// Elementwise `f_task − f_plain`.
pub fn difference_map(f_task: &ImageGrid, f_plain: &ImageGrid) -> Result<ImageGrid> {
    f_task.sub(f_plain)
}

/// Scores every item of an ensemble (optionally denoising first) and
/// returns the ROC of the resulting test statistics.
pub fn evaluate_pipeline(
    ensemble: &LabeledEnsemble,
    template: &ObserverTemplate,
    denoise_config: Option<&DenoiseConfig>,
) -> Result<RocResult> {
    let mut absent = Vec::new();
    let mut present = Vec::new();
    for (index, item) in ensemble.items.iter().enumerate() {
        let score = match denoise_config {
            Some(config) => {
                let result = denoise(&item.noisy, template, config).map_err(|e| match e {
                    Error::Divergence { iteration, objective } => Error::InvalidParameter(
                        format!("item {index}: diverged at iteration {iteration} (objective {objective:e})"),
                    ),
                    other => other,
                })?;
                test_statistic(template, &result.estimate)?.value
            }
            None => test_statistic(template, &item.noisy)?.value,
        };
        match item.label {
            Label::H0 => absent.push(score),
            Label::H1 => present.push(score),
        }
    }
    roc_curve(&ScoreSet {
        absent_scores: absent,
        present_scores: present,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::denoiser::InitRule;
    use crate::object_models::{
        make_ensemble, BackgroundModel, MvnLumpyParams, NoiseSpec, SignalShape, SignalSpec,
    };
    use crate::observer::ObserverTemplate;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn perfect_separation_gives_auc_one() {
        let s = ScoreSet {
            absent_scores: vec![0.0, 0.0, 0.0],
            present_scores: vec![1.0, 1.0, 1.0],
        };
        let r = roc_curve(&s).unwrap();
        assert_eq!(r.auc, 1.0);
        assert_eq!(r.operating_points.first(), Some(&(0.0, 0.0)));
        assert_eq!(r.operating_points.last(), Some(&(1.0, 1.0)));
    }

    #[test]
    fn identical_classes_give_auc_half() {
        let s = ScoreSet {
            absent_scores: vec![0.3, 0.7, 0.5],
            present_scores: vec![0.3, 0.7, 0.5],
        };
        let r = roc_curve(&s).unwrap();
        assert!((r.auc - 0.5).abs() < 1e-15);
    }

    #[test]
    fn empty_class_is_rejected() {
        let s = ScoreSet {
            absent_scores: vec![],
            present_scores: vec![1.0],
        };
        assert!(matches!(roc_curve(&s), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn gaussian_shift_matches_closed_form_auc() {
        // Scores N(0,1) vs N(1,1): AUC = Phi(1/sqrt(2)) ~ 0.760250.
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let n = 100_000;
        let absent: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
        let present: Vec<f64> = (0..n)
            .map(|_| {
                let v: f64 = StandardNormal.sample(&mut rng);
                v + 1.0
            })
            .collect();
        let r = roc_curve(&ScoreSet {
            absent_scores: absent,
            present_scores: present,
        })
        .unwrap();
        assert!((r.auc - 0.7602).abs() < 0.005, "auc {}", r.auc);
    }

    fn trapezoid_area(points: &[(f64, f64)]) -> f64 {
        points
            .windows(2)
            .map(|w| (w[1].0 - w[0].0) * (w[1].1 + w[0].1) / 2.0)
            .sum()
    }

    #[test]
    fn operating_points_are_monotone_and_integrate_to_auc() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        // Include deliberate ties.
        let absent: Vec<f64> = (0..500).map(|_| (rng.gen_range(0..40) as f64) / 10.0).collect();
        let present: Vec<f64> =
            (0..300).map(|_| (rng.gen_range(5..45) as f64) / 10.0).collect();
        let r = roc_curve(&ScoreSet {
            absent_scores: absent,
            present_scores: present,
        })
        .unwrap();
        for w in r.operating_points.windows(2) {
            assert!(w[1].0 >= w[0].0 && w[1].1 >= w[0].1);
        }
        let area = trapezoid_area(&r.operating_points);
        assert!((area - r.auc).abs() <= 1e-10, "area {area} vs auc {}", r.auc);
    }

    proptest! {
        #[test]
        fn auc_is_invariant_under_increasing_transforms(
            absent in prop::collection::vec(-50.0f64..50.0, 1..40),
            present in prop::collection::vec(-50.0f64..50.0, 1..40),
        ) {
            let base = roc_curve(&ScoreSet {
                absent_scores: absent.clone(),
                present_scores: present.clone(),
            }).unwrap();
            // exp is strictly increasing; scores stay finite in range.
            let t = |v: &Vec<f64>| v.iter().map(|x| (x * 0.1).exp()).collect::<Vec<_>>();
            let mapped = roc_curve(&ScoreSet {
                absent_scores: t(&absent),
                present_scores: t(&present),
            }).unwrap();
            prop_assert!((base.auc - mapped.auc).abs() <= 1e-12);
        }

        #[test]
        fn auc_of_swapped_classes_complements(
            absent in prop::collection::vec(-50.0f64..50.0, 1..40),
            present in prop::collection::vec(-50.0f64..50.0, 1..40),
        ) {
            let fwd = roc_curve(&ScoreSet {
                absent_scores: absent.clone(),
                present_scores: present.clone(),
            }).unwrap();
            let rev = roc_curve(&ScoreSet {
                absent_scores: present,
                present_scores: absent,
            }).unwrap();
            prop_assert!((fwd.auc + rev.auc - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn rmse_cases() {
        let a = ImageGrid::new(4, 2, (0..8).map(|i| i as f64).collect()).unwrap();
        assert_eq!(rmse(&a, &a).unwrap(), 0.0);
        let shifted =
            ImageGrid::new(4, 2, a.as_slice().iter().map(|v| v - 2.5).collect()).unwrap();
        assert!((rmse(&a, &shifted).unwrap() - 2.5).abs() < 1e-14);

        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = ImageGrid::new(8, 8, (0..64).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
        let y = ImageGrid::new(8, 8, (0..64).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
        let direct = (x
            .as_slice()
            .iter()
            .zip(y.as_slice())
            .map(|(p, q)| (p - q) * (p - q))
            .sum::<f64>()
            / 64.0)
            .sqrt();
        assert!((rmse(&x, &y).unwrap() - direct).abs() <= 1e-12 * direct);
    }

    #[test]
    fn difference_map_antisymmetry() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let a = ImageGrid::new(5, 5, (0..25).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
        let b = ImageGrid::new(5, 5, (0..25).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
        assert!(difference_map(&a, &a).unwrap().max_abs() == 0.0);
        let ab = difference_map(&a, &b).unwrap();
        let ba = difference_map(&b, &a).unwrap();
        for (x, y) in ab.as_slice().iter().zip(ba.as_slice()) {
            assert_eq!(*x, -y);
        }
    }

    fn small_ensemble(seed: u64) -> (crate::object_models::LabeledEnsemble, ObserverTemplate) {
        let bg = BackgroundModel::MvnLumpy(MvnLumpyParams {
            width: 12,
            height: 12,
            dc_offset: 0.1,
            kernel_std: 2.0,
            field_std: 0.03,
        });
        let signal = SignalSpec {
            shape: SignalShape::Gaussian,
            center: (5.5, 5.5),
            scale: 2.0,
            amplitude: 0.02,
        };
        let ens = make_ensemble(&bg, &signal, &NoiseSpec { std: 0.01 }, 20, 20, seed).unwrap();
        let rendered =
            crate::object_models::render_signal(&signal, 12, 12).unwrap();
        let tpl = crate::observer::npw_template(&rendered).unwrap();
        (ens, tpl)
    }

    #[test]
    fn pipeline_without_denoising_scores_raw_images() {
        let (ens, tpl) = small_ensemble(41);
        let direct = evaluate_pipeline(&ens, &tpl, None).unwrap();
        let mut absent = Vec::new();
        let mut present = Vec::new();
        for item in &ens.items {
            let t = test_statistic(&tpl, &item.noisy).unwrap().value;
            match item.label {
                Label::H0 => absent.push(t),
                Label::H1 => present.push(t),
            }
        }
        let manual = roc_curve(&ScoreSet {
            absent_scores: absent,
            present_scores: present,
        })
        .unwrap();
        assert_eq!(direct.auc, manual.auc);
        assert_eq!(direct.operating_points, manual.operating_points);
    }

    #[test]
    fn pipeline_with_zero_tv_weight_matches_raw_auc() {
        let (ens, tpl) = small_ensemble(43);
        let raw = evaluate_pipeline(&ens, &tpl, None).unwrap();
        let config = DenoiseConfig {
            alpha: 1.0,
            beta: 0.0,
            gamma: 1.0,
            iterations: 50,
            init: InitRule::NoisyInput,
            ..DenoiseConfig::default()
        };
        let denoised = evaluate_pipeline(&ens, &tpl, Some(&config)).unwrap();
        assert_eq!(raw.auc, denoised.auc);
    }
}
