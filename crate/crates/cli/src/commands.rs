//! Orchestration commands behind the CLI subcommands.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use anyhow::{anyhow, bail, Context, Result};
use rayon::prelude::*;
use taskpls_core::denoiser::DenoiseConfig;
use taskpls_core::evaluation::{roc_curve, RocResult, ScoreSet};
use taskpls_core::object_models::{derive_seed, make_ensemble, Label, LabeledEnsemble};
use taskpls_core::observer::{estimate_hotelling, ObserverTemplate, TrainingMeta};
use taskpls_core::{denoise, difference_map, rmse, test_statistic};

use crate::config::ExperimentConfig;
use crate::io::{
    load_ensemble, load_template, write_ensemble, write_png, write_raster, write_template,
    LoadedEnsemble,
};
use crate::manifest::RunManifest;

// Seed-stream tags for the two generation stages.
const STAGE_TRAIN: u64 = 0x7472_6169_6e00;
const STAGE_TEST: u64 = 0x7465_7374_0000;

pub struct GenerateOutput {
    pub train_dir: PathBuf,
    pub test_dir: PathBuf,
    pub manifest_path: PathBuf,
}

/// Generates the template-training and test ensembles and records them in
/// the run manifest.
pub fn cmd_generate(config: &ExperimentConfig) -> Result<GenerateOutput> {
    config.validate()?;
    let out = config.resolved_output_dir();
    fs::create_dir_all(&out)?;
    let mut manifest = RunManifest::load_or_create(&out, config)?;

    let start = Instant::now();
    let train_seed = derive_seed(config.master_seed, 0, STAGE_TRAIN);
    let test_seed = derive_seed(config.master_seed, 0, STAGE_TEST);
    manifest.stage_seeds.insert("train".into(), train_seed);
    manifest.stage_seeds.insert("test".into(), test_seed);

    let train = make_ensemble(
        &config.background,
        &config.signal,
        &config.noise,
        config.train_absent,
        config.train_present,
        train_seed,
    )?;
    let test = make_ensemble(
        &config.background,
        &config.signal,
        &config.noise,
        config.test_absent,
        config.test_present,
        test_seed,
    )?;

    let train_dir = out.join("ensembles").join("train");
    let test_dir = out.join("ensembles").join("test");
    write_ensemble(&train_dir, &train)?;
    write_ensemble(&test_dir, &test)?;
    manifest.record_artifact(&out, &train_dir.join("manifest.json"))?;
    manifest.record_artifact(&out, &test_dir.join("manifest.json"))?;

    manifest
        .timings_s
        .insert("generate".into(), start.elapsed().as_secs_f64());
    manifest.save(&out)?;
    Ok(GenerateOutput {
        train_dir,
        test_dir,
        manifest_path: RunManifest::path_in(&out),
    })
}

/// Verifies an artifact against the run manifest when it was produced
/// inside this run directory.
fn verify_if_recorded(manifest: &RunManifest, run_dir: &Path, path: &Path) -> Result<()> {
    if let Ok(rel) = path.strip_prefix(run_dir) {
        let rel = rel.to_string_lossy();
        if manifest.artifacts.contains_key(rel.as_ref()) {
            manifest.verify_artifact(run_dir, &rel)?;
        }
    }
    Ok(())
}

/// Estimates the Hotelling template from a persisted ensemble.
pub fn cmd_template(
    config: &ExperimentConfig,
    ensemble_dir: &Path,
    out_path: Option<&Path>,
) -> Result<PathBuf> {
    config.validate()?;
    let run_dir = config.resolved_output_dir();
    let mut manifest = RunManifest::load_or_create(&run_dir, config)?;
    verify_if_recorded(&manifest, &run_dir, &ensemble_dir.join("manifest.json"))?;

    let start = Instant::now();
    let loaded = load_ensemble(ensemble_dir, true)?;
    let mut template = estimate_hotelling(&loaded.ensemble, config.shrinkage)?;
    template.training_meta = Some(TrainingMeta {
        ensemble_id: loaded.manifest_sha256.clone(),
        n_absent: loaded.ensemble.provenance.n_absent,
        n_present: loaded.ensemble.provenance.n_present,
        created_unix_secs: SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
    });

    let path = out_path
        .map(Path::to_path_buf)
        .unwrap_or_else(|| run_dir.join("template.json"));
    write_template(&path, &template)?;
    if path.starts_with(&run_dir) {
        manifest.record_artifact(&run_dir, &path)?;
        manifest.record_artifact(&run_dir, &path.with_extension("w.raw"))?;
    }
    manifest
        .timings_s
        .insert("template".into(), start.elapsed().as_secs_f64());
    manifest.save(&run_dir)?;
    Ok(path)
}

fn load_and_check(
    config: &ExperimentConfig,
    ensemble_dir: &Path,
    template_path: &Path,
) -> Result<(LoadedEnsemble, ObserverTemplate, RunManifest, PathBuf)> {
    config.validate()?;
    let run_dir = config.resolved_output_dir();
    let manifest = RunManifest::load_or_create(&run_dir, config)?;
    verify_if_recorded(&manifest, &run_dir, &ensemble_dir.join("manifest.json"))?;
    verify_if_recorded(&manifest, &run_dir, template_path)?;

    let loaded = load_ensemble(ensemble_dir, true)?;
    let (template, _) = load_template(template_path)?;
    if (template.width(), template.height()) != (loaded.manifest.width, loaded.manifest.height) {
        bail!(
            "template is {}x{} but the ensemble is {}x{}",
            template.width(),
            template.height(),
            loaded.manifest.width,
            loaded.manifest.height
        );
    }
    Ok((loaded, template, manifest, run_dir))
}

/// Test statistics and per-item RMSE against the ground truth, optionally
/// denoising each noisy image first. Item order is preserved regardless of
/// the level of parallelism.
fn score_ensemble(
    ensemble: &LabeledEnsemble,
    template: &ObserverTemplate,
    denoise_config: Option<&DenoiseConfig>,
    jobs: usize,
) -> Result<Vec<(Label, f64, f64)>> {
    let run = |item_index: usize| -> Result<(Label, f64, f64)> {
        let item = &ensemble.items[item_index];
        let (scored_image, error) = match denoise_config {
            Some(cfg) => {
                let result = denoise(&item.noisy, template, cfg).map_err(|e| {
                    anyhow!("item {item_index}: {e}")
                })?;
                let err = rmse(&result.estimate, &item.truth)?;
                (result.estimate, err)
            }
            None => (item.noisy.clone(), rmse(&item.noisy, &item.truth)?),
        };
        let score = test_statistic(template, &scored_image)?.value;
        Ok((item.label, score, error))
    };

    if jobs <= 1 {
        (0..ensemble.items.len()).map(run).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .context("building worker pool")?;
        pool.install(|| (0..ensemble.items.len()).into_par_iter().map(run).collect())
    }
}

fn roc_of_scores(scores: &[(Label, f64, f64)]) -> Result<RocResult> {
    let mut absent = Vec::new();
    let mut present = Vec::new();
    for (label, score, _) in scores {
        match label {
            Label::H0 => absent.push(*score),
            Label::H1 => present.push(*score),
        }
    }
    Ok(roc_curve(&ScoreSet {
        absent_scores: absent,
        present_scores: present,
    })?)
}

fn mean_rmse(scores: &[(Label, f64, f64)]) -> f64 {
    scores.iter().map(|(_, _, e)| e).sum::<f64>() / scores.len() as f64
}

/// One results row; `None` weights mark the raw-noisy baseline.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub gamma: Option<f64>,
    pub auc: f64,
    pub auc_std_err: f64,
    pub mean_rmse: f64,
    pub runtime_s: f64,
}

fn opt(v: &Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_sweep_csv(path: &Path, rows: &[SweepRow]) -> Result<()> {
    let mut text = String::from("alpha,beta,gamma,auc,auc_std_err,mean_rmse,runtime_s\n");
    for r in rows {
        text.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            opt(&r.alpha),
            opt(&r.beta),
            opt(&r.gamma),
            r.auc,
            r.auc_std_err,
            r.mean_rmse,
            r.runtime_s
        ));
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

/// Denoises the whole test ensemble at every (alpha, beta, gamma) grid
/// point, plus a raw-noisy baseline row, and writes `results.csv`.
pub fn cmd_sweep(
    config: &ExperimentConfig,
    ensemble_dir: &Path,
    template_path: &Path,
    jobs: usize,
    out_csv: Option<&Path>,
) -> Result<(PathBuf, Vec<SweepRow>)> {
    let (loaded, template, mut manifest, run_dir) =
        load_and_check(config, ensemble_dir, template_path)?;
    let sweep_start = Instant::now();

    let mut rows = Vec::new();

    // Baseline: the raw noisy images.
    let t0 = Instant::now();
    let raw_scores = score_ensemble(&loaded.ensemble, &template, None, jobs)?;
    let raw_roc = roc_of_scores(&raw_scores)?;
    rows.push(SweepRow {
        alpha: None,
        beta: None,
        gamma: None,
        auc: raw_roc.auc,
        auc_std_err: raw_roc.auc_std_err,
        mean_rmse: mean_rmse(&raw_scores),
        runtime_s: t0.elapsed().as_secs_f64(),
    });

    for &alpha in &config.alphas {
        for &beta in &config.betas {
            for &gamma in &config.gammas {
                let t0 = Instant::now();
                let cfg = config.solver.denoise_config(alpha, beta, gamma);
                let scores = score_ensemble(&loaded.ensemble, &template, Some(&cfg), jobs)
                    .with_context(|| {
                        format!("grid point alpha={alpha} beta={beta} gamma={gamma}")
                    })?;
                let roc = roc_of_scores(&scores)?;
                rows.push(SweepRow {
                    alpha: Some(alpha),
                    beta: Some(beta),
                    gamma: Some(gamma),
                    auc: roc.auc,
                    auc_std_err: roc.auc_std_err,
                    mean_rmse: mean_rmse(&scores),
                    runtime_s: t0.elapsed().as_secs_f64(),
                });
            }
        }
    }

    let path = out_csv
        .map(Path::to_path_buf)
        .unwrap_or_else(|| run_dir.join("results.csv"));
    write_sweep_csv(&path, &rows)?;
    if path.starts_with(&run_dir) {
        manifest.record_artifact(&run_dir, &path)?;
    }
    manifest
        .timings_s
        .insert("sweep".into(), sweep_start.elapsed().as_secs_f64());
    manifest.save(&run_dir)?;
    Ok((path, rows))
}

/// Scores an ensemble (optionally denoised at one grid point) and writes
/// the ROC curve CSV plus a JSON summary.
pub fn cmd_evaluate(
    config: &ExperimentConfig,
    ensemble_dir: &Path,
    template_path: &Path,
    weights: Option<(f64, f64, f64)>,
    jobs: usize,
    out_prefix: Option<&Path>,
) -> Result<RocResult> {
    let (loaded, template, mut manifest, run_dir) =
        load_and_check(config, ensemble_dir, template_path)?;
    let start = Instant::now();

    let cfg = weights.map(|(a, b, g)| config.solver.denoise_config(a, b, g));
    let scores = score_ensemble(&loaded.ensemble, &template, cfg.as_ref(), jobs)?;
    let roc = roc_of_scores(&scores)?;

    let prefix = out_prefix
        .map(Path::to_path_buf)
        .unwrap_or_else(|| run_dir.join("evaluate"));
    if let Some(parent) = prefix.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }

    let roc_path = prefix.with_extension("roc.csv");
    let mut text = String::from("threshold,fpr,tpr\n");
    for (threshold, (fpr, tpr)) in roc.thresholds.iter().zip(&roc.operating_points) {
        text.push_str(&format!("{threshold},{fpr},{tpr}\n"));
    }
    fs::write(&roc_path, text)?;

    let summary_path = prefix.with_extension("summary.json");
    let summary = serde_json::json!({
        "auc": roc.auc,
        "auc_std_err": roc.auc_std_err,
        "n_absent": loaded.ensemble.provenance.n_absent,
        "n_present": loaded.ensemble.provenance.n_present,
        "denoise": weights.map(|(a, b, g)| serde_json::json!({
            "alpha": a, "beta": b, "gamma": g
        })),
    });
    fs::write(&summary_path, serde_json::to_string_pretty(&summary)? + "\n")?;

    for p in [&roc_path, &summary_path] {
        if p.starts_with(&run_dir) {
            manifest.record_artifact(&run_dir, p)?;
        }
    }
    manifest
        .timings_s
        .insert("evaluate".into(), start.elapsed().as_secs_f64());
    manifest.save(&run_dir)?;
    Ok(roc)
}

/// Denoises one ensemble item and writes the estimate raster plus the
/// objective trace CSV.
pub fn cmd_denoise(
    config: &ExperimentConfig,
    ensemble_dir: &Path,
    item_index: usize,
    template_path: &Path,
    weights: (f64, f64, f64),
    out_raster: &Path,
    out_trace: Option<&Path>,
) -> Result<()> {
    let (loaded, template, _, _) = load_and_check(config, ensemble_dir, template_path)?;
    let item = loaded
        .ensemble
        .items
        .get(item_index)
        .with_context(|| format!("item {item_index} out of range"))?;
    let (alpha, beta, gamma) = weights;
    let cfg = config.solver.denoise_config(alpha, beta, gamma);
    let result = denoise(&item.noisy, &template, &cfg)?;
    write_raster(out_raster, &result.estimate)?;
    if let Some(trace_path) = out_trace {
        let mut text = String::from("iteration,objective,fidelity,tv,task\n");
        for s in &result.objective_trace {
            text.push_str(&format!(
                "{},{},{},{},{}\n",
                s.iteration, s.objective, s.fidelity, s.tv, s.task
            ));
        }
        fs::write(trace_path, text)?;
    }
    Ok(())
}

/// Exports windowed PNG panels for one item: ground truth, noisy input,
/// the denoised estimate per gamma in the grid, and difference maps
/// against the gamma = 0 estimate. Window limits go into the manifest.
pub fn cmd_render(
    config: &ExperimentConfig,
    ensemble_dir: &Path,
    template_path: &Path,
    item_index: Option<usize>,
    beta: Option<f64>,
    jobs: usize,
) -> Result<PathBuf> {
    let (loaded, template, mut manifest, run_dir) =
        load_and_check(config, ensemble_dir, template_path)?;
    let start = Instant::now();

    let index = match item_index {
        Some(i) => i,
        None => loaded
            .ensemble
            .items
            .iter()
            .position(|it| it.label == Label::H1)
            .context("ensemble has no signal-present item to render")?,
    };
    let item = loaded
        .ensemble
        .items
        .get(index)
        .with_context(|| format!("item {index} out of range"))?;
    let alpha = config.alphas[0];
    let beta = beta.unwrap_or(config.betas[0]);

    // The gamma = 0 estimate is the plain PLS-TV reference for the
    // difference maps, whether or not 0 is on the grid.
    let run_gamma = |gamma: f64| -> Result<taskpls_core::ImageGrid> {
        let cfg = config.solver.denoise_config(alpha, beta, gamma);
        Ok(denoise(&item.noisy, &template, &cfg)?.estimate)
    };
    let baseline = run_gamma(0.0)?;
    let estimates: Vec<(f64, taskpls_core::ImageGrid)> = if jobs <= 1 {
        config
            .gammas
            .iter()
            .map(|&g| run_gamma(g).map(|e| (g, e)))
            .collect::<Result<_>>()?
    } else {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(jobs).build()?;
        pool.install(|| {
            config
                .gammas
                .par_iter()
                .map(|&g| run_gamma(g).map(|e| (g, e)))
                .collect::<Result<_>>()
        })?
    };

    let render_dir = run_dir.join("render");
    fs::create_dir_all(&render_dir)?;

    // One shared window over truth and noisy keeps panels comparable.
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for v in item.truth.as_slice().iter().chain(item.noisy.as_slice()) {
        lo = lo.min(*v);
        hi = hi.max(*v);
    }
    if !(hi > lo) {
        hi = lo + 1.0;
    }
    let window = (lo, hi);

    let mut emit = |name: String, grid: &taskpls_core::ImageGrid, win: (f64, f64)| -> Result<()> {
        let path = render_dir.join(&name);
        write_png(&path, grid, win)?;
        manifest.record_artifact(&run_dir, &path)?;
        manifest
            .render_windows
            .insert(format!("render/{name}"), win);
        Ok(())
    };

    emit("truth.png".into(), &item.truth, window)?;
    emit("noisy.png".into(), &item.noisy, window)?;
    for (gamma, estimate) in &estimates {
        emit(format!("denoised_gamma_{gamma}.png"), estimate, window)?;
    }

    // Symmetric window centered on zero so a zero difference is mid-gray.
    let diffs: Vec<(f64, taskpls_core::ImageGrid)> = estimates
        .iter()
        .map(|(g, e)| Ok((*g, difference_map(e, &baseline)?)))
        .collect::<Result<_>>()?;
    let mut span = diffs
        .iter()
        .map(|(_, d)| d.max_abs())
        .fold(0.0_f64, f64::max);
    if span == 0.0 {
        span = 1.0;
    }
    for (gamma, diff) in &diffs {
        emit(format!("diff_gamma_{gamma}.png"), diff, (-span, span))?;
    }

    manifest
        .timings_s
        .insert("render".into(), start.elapsed().as_secs_f64());
    manifest.save(&run_dir)?;
    Ok(render_dir)
}
