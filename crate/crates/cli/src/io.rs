//! Raster, ensemble, and template persistence.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use taskpls_core::object_models::{EnsembleItem, Label, LabeledEnsemble, Provenance};
use taskpls_core::observer::{ObserverTemplate, TemplateKind, TrainingMeta};
use taskpls_core::ImageGrid;

pub const ENSEMBLE_FORMAT_VERSION: u32 = 1;
pub const TEMPLATE_FORMAT_VERSION: u32 = 1;

/// Writes a raster as little-endian f64, row-major, no header.
pub fn write_raster(path: &Path, grid: &ImageGrid) -> Result<()> {
    let mut out = BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    );
    for v in grid.as_slice() {
        out.write_all(&v.to_le_bytes())?;
    }
    out.flush()?;
    Ok(())
}

/// Reads a raster written by [`write_raster`]; dimensions come from the
/// caller (normally a manifest).
pub fn read_raster(path: &Path, width: usize, height: usize) -> Result<ImageGrid> {
    let expected = width * height * 8;
    let mut bytes = Vec::with_capacity(expected);
    BufReader::new(File::open(path).with_context(|| format!("opening {}", path.display()))?)
        .read_to_end(&mut bytes)?;
    if bytes.len() != expected {
        bail!(
            "{}: expected {expected} bytes for {width}x{height}, found {}",
            path.display(),
            bytes.len()
        );
    }
    let values = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(ImageGrid::new(width, height, values)?)
}

pub fn sha256_hex(path: &Path) -> Result<String> {
    let mut hasher = Sha256::new();
    let mut reader =
        BufReader::new(File::open(path).with_context(|| format!("hashing {}", path.display()))?);
    let mut buf = [0u8; 65536];
    loop {
        let n = reader.read(&mut buf)?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hex::encode(hasher.finalize()))
}

fn verify_hash(path: &Path, expected: &str) -> Result<()> {
    let actual = sha256_hex(path)?;
    if actual != expected {
        bail!(
            "hash mismatch for {}: manifest records {expected}, file has {actual}",
            path.display()
        );
    }
    Ok(())
}

/// 8-bit grayscale PNG with linear windowing; values at or below
/// `window.0` map to black, at or above `window.1` to white.
pub fn write_png(path: &Path, grid: &ImageGrid, window: (f64, f64)) -> Result<()> {
    let (lo, hi) = window;
    if !(hi > lo) {
        bail!("window must satisfy min < max, got ({lo}, {hi})");
    }
    let span = hi - lo;
    let pixels: Vec<u8> = grid
        .as_slice()
        .iter()
        .map(|&v| (((v - lo) / span).clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect();
    let img = image::GrayImage::from_raw(grid.width() as u32, grid.height() as u32, pixels)
        .expect("pixel buffer matches dimensions");
    img.save(path)
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ItemRecord {
    pub label: Label,
    pub noisy: String,
    pub truth: String,
    pub noisy_sha256: String,
    pub truth_sha256: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnsembleManifest {
    pub format_version: u32,
    pub width: usize,
    pub height: usize,
    pub provenance: Provenance,
    pub items: Vec<ItemRecord>,
}

/// Persists an ensemble as `manifest.json` plus per-item rasters.
pub fn write_ensemble(dir: &Path, ensemble: &LabeledEnsemble) -> Result<EnsembleManifest> {
    fs::create_dir_all(dir)?;
    let (width, height) = ensemble
        .items
        .first()
        .map(|it| it.noisy.shape())
        .unwrap_or_else(|| ensemble.provenance.background.shape());

    let mut items = Vec::with_capacity(ensemble.items.len());
    for (k, item) in ensemble.items.iter().enumerate() {
        let noisy_name = format!("item_{k:05}_noisy.raw");
        let truth_name = format!("item_{k:05}_truth.raw");
        write_raster(&dir.join(&noisy_name), &item.noisy)?;
        write_raster(&dir.join(&truth_name), &item.truth)?;
        items.push(ItemRecord {
            label: item.label,
            noisy_sha256: sha256_hex(&dir.join(&noisy_name))?,
            truth_sha256: sha256_hex(&dir.join(&truth_name))?,
            noisy: noisy_name,
            truth: truth_name,
        });
    }

    let manifest = EnsembleManifest {
        format_version: ENSEMBLE_FORMAT_VERSION,
        width,
        height,
        provenance: ensemble.provenance.clone(),
        items,
    };
    let text = serde_json::to_string_pretty(&manifest)?;
    fs::write(dir.join("manifest.json"), text + "\n")?;
    Ok(manifest)
}

pub struct LoadedEnsemble {
    pub ensemble: LabeledEnsemble,
    pub manifest: EnsembleManifest,
    /// Hash of `manifest.json`, used as the ensemble identity.
    pub manifest_sha256: String,
}

/// Loads an ensemble directory, optionally verifying every raster hash
/// against the manifest.
pub fn load_ensemble(dir: &Path, verify: bool) -> Result<LoadedEnsemble> {
    let manifest_path = dir.join("manifest.json");
    let text = fs::read_to_string(&manifest_path)
        .with_context(|| format!("reading {}", manifest_path.display()))?;
    let manifest: EnsembleManifest = serde_json::from_str(&text)?;
    if manifest.format_version != ENSEMBLE_FORMAT_VERSION {
        bail!(
            "unsupported ensemble format version {}",
            manifest.format_version
        );
    }
    let manifest_sha256 = sha256_hex(&manifest_path)?;

    let mut items = Vec::with_capacity(manifest.items.len());
    for record in &manifest.items {
        let noisy_path = dir.join(&record.noisy);
        let truth_path = dir.join(&record.truth);
        if verify {
            verify_hash(&noisy_path, &record.noisy_sha256)?;
            verify_hash(&truth_path, &record.truth_sha256)?;
        }
        items.push(EnsembleItem {
            noisy: read_raster(&noisy_path, manifest.width, manifest.height)?,
            truth: read_raster(&truth_path, manifest.width, manifest.height)?,
            label: record.label,
        });
    }
    Ok(LoadedEnsemble {
        ensemble: LabeledEnsemble {
            items,
            provenance: manifest.provenance.clone(),
        },
        manifest,
        manifest_sha256,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TemplateHeader {
    pub format_version: u32,
    pub kind: TemplateKind,
    pub width: usize,
    pub height: usize,
    pub shrinkage: f64,
    pub training_meta: Option<TrainingMeta>,
    pub weights_file: String,
    pub weights_sha256: String,
}

/// Weights-file path next to a template header path.
fn weights_path(header_path: &Path) -> PathBuf {
    header_path.with_extension("w.raw")
}

/// Persists a template as a JSON header plus a flat binary weight vector.
pub fn write_template(header_path: &Path, template: &ObserverTemplate) -> Result<TemplateHeader> {
    if let Some(parent) = header_path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    let wpath = weights_path(header_path);
    {
        let mut out = BufWriter::new(File::create(&wpath)?);
        for v in template.weights() {
            out.write_all(&v.to_le_bytes())?;
        }
        out.flush()?;
    }
    let header = TemplateHeader {
        format_version: TEMPLATE_FORMAT_VERSION,
        kind: template.kind,
        width: template.width(),
        height: template.height(),
        shrinkage: template.shrinkage,
        training_meta: template.training_meta.clone(),
        weights_file: wpath
            .file_name()
            .expect("weights path has a file name")
            .to_string_lossy()
            .into_owned(),
        weights_sha256: sha256_hex(&wpath)?,
    };
    let text = serde_json::to_string_pretty(&header)?;
    fs::write(header_path, text + "\n")?;
    Ok(header)
}

/// Loads a template, verifying the weight-vector hash.
pub fn load_template(header_path: &Path) -> Result<(ObserverTemplate, TemplateHeader)> {
    let text = fs::read_to_string(header_path)
        .with_context(|| format!("reading {}", header_path.display()))?;
    let header: TemplateHeader = serde_json::from_str(&text)?;
    if header.format_version != TEMPLATE_FORMAT_VERSION {
        bail!(
            "unsupported template format version {}",
            header.format_version
        );
    }
    let wpath = header_path
        .parent()
        .unwrap_or_else(|| Path::new(""))
        .join(&header.weights_file);
    verify_hash(&wpath, &header.weights_sha256)?;
    let grid = read_raster(&wpath, header.width, header.height)?;
    let mut template = ObserverTemplate::custom(header.width, header.height, grid.into_values())?;
    template.kind = header.kind;
    template.shrinkage = header.shrinkage;
    template.training_meta = header.training_meta.clone();
    Ok((template, header))
}

#[cfg(test)]
mod tests {
    use super::*;
    use taskpls_core::object_models::{
        make_ensemble, BackgroundModel, MvnLumpyParams, NoiseSpec, SignalShape, SignalSpec,
    };

    fn tmp() -> tempfile::TempDir {
        tempfile::tempdir().unwrap()
    }

    #[test]
    fn raster_round_trip_is_bit_exact() {
        let dir = tmp();
        let grid = ImageGrid::new(3, 2, vec![0.25, -1.5, 1e-300, 7.0, 0.0, -0.0]).unwrap();
        let path = dir.path().join("r.raw");
        write_raster(&path, &grid).unwrap();
        let back = read_raster(&path, 3, 2).unwrap();
        for (a, b) in grid.as_slice().iter().zip(back.as_slice()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        assert!(read_raster(&path, 2, 2).is_err());
    }

    fn sample_ensemble() -> LabeledEnsemble {
        let bg = BackgroundModel::MvnLumpy(MvnLumpyParams {
            width: 8,
            height: 8,
            dc_offset: 0.1,
            kernel_std: 2.0,
            field_std: 0.03,
        });
        let signal = SignalSpec {
            shape: SignalShape::Gaussian,
            center: (3.5, 3.5),
            scale: 2.0,
            amplitude: 0.02,
        };
        make_ensemble(&bg, &signal, &NoiseSpec { std: 0.01 }, 2, 3, 5).unwrap()
    }

    #[test]
    fn ensemble_round_trip_and_verification() {
        let dir = tmp();
        let ens = sample_ensemble();
        write_ensemble(dir.path(), &ens).unwrap();
        let loaded = load_ensemble(dir.path(), true).unwrap();
        assert_eq!(loaded.ensemble.items.len(), 5);
        assert_eq!(loaded.ensemble.provenance, ens.provenance);
        for (a, b) in ens.items.iter().zip(&loaded.ensemble.items) {
            assert_eq!(a.noisy, b.noisy);
            assert_eq!(a.truth, b.truth);
            assert_eq!(a.label, b.label);
        }

        // Corrupt one raster: verification must fail loudly.
        let victim = dir.path().join(&loaded.manifest.items[0].noisy);
        let mut bytes = fs::read(&victim).unwrap();
        bytes[0] ^= 0xff;
        fs::write(&victim, bytes).unwrap();
        assert!(load_ensemble(dir.path(), true).is_err());
        assert!(load_ensemble(dir.path(), false).is_ok());
    }

    #[test]
    fn template_round_trip() {
        let dir = tmp();
        let ens = sample_ensemble();
        let mut tpl = taskpls_core::estimate_hotelling(&ens, 0.5).unwrap();
        tpl.training_meta = Some(TrainingMeta {
            ensemble_id: "abc".into(),
            n_absent: 2,
            n_present: 3,
            created_unix_secs: 1,
        });
        let path = dir.path().join("template.json");
        write_template(&path, &tpl).unwrap();
        let (back, header) = load_template(&path).unwrap();
        assert_eq!(back.kind, TemplateKind::Hotelling);
        assert_eq!(back.weights(), tpl.weights());
        assert_eq!(back.shrinkage, tpl.shrinkage);
        assert_eq!(header.training_meta.unwrap().ensemble_id, "abc");
    }

    #[test]
    fn png_window_maps_extremes() {
        let dir = tmp();
        let grid = ImageGrid::new(2, 1, vec![0.0, 1.0]).unwrap();
        let path = dir.path().join("x.png");
        write_png(&path, &grid, (0.0, 1.0)).unwrap();
        let img = image::open(&path).unwrap().to_luma8();
        assert_eq!(img.get_pixel(0, 0).0[0], 0);
        assert_eq!(img.get_pixel(1, 0).0[0], 255);
        assert!(write_png(&path, &grid, (1.0, 1.0)).is_err());
    }
}
