//! On-disk corpus: generation, conventional fitting, and loading.
//!
//! Layout under a corpus root:
//!
//! ```text
//! manifest.json          ordered sample list with provenance
//! series/000000.wft      f32 complex echo stacks
//! truth/000000.wft       f64 ground-truth maps (5×H×W, mask in channel 4)
//! fit/000000.wft         conventional-fit maps, written by the fit stage
//! fit_log.json           per-sample fit logs
//! ```
//!
//! Everything is a pure function of (config, seed): regenerating a corpus
//! yields byte-identical files.

use crate::dataset::{assemble_input, assemble_target, InputMode, Provenance, Sample};
use crate::error::{Error, Result};
use crate::fit::{separate_even_odd_full, separate_full, FitLog, FitOptions};
use crate::maps::{EchoSeries, ParameterMaps};
use crate::protocol::AcquisitionProtocol;
use crate::raster::{self, Raster};
use crate::rng::SeededRng;
use crate::signal::{
    add_noise, apply_bipolar_error, generate_phantom, sample_phantom_spec, simulate_series,
    BipolarErrorSpec, NoiseSpec, PhantomRanges,
};
use ndarray::{Array2, ArrayD, IxDyn};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

/// Noise and acquisition-corruption settings for corpus generation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CorruptionConfig {
    pub noise_sigma: f64,
    /// Fraction of acquisitions flagged bipolar (phase-corrupted and
    /// routed to even/odd fitting).
    pub bipolar_fraction: f64,
    pub bipolar_phi0: (f64, f64),
    pub bipolar_phi1: (f64, f64),
}

impl Default for CorruptionConfig {
    fn default() -> Self {
        CorruptionConfig {
            noise_sigma: 0.10,
            bipolar_fraction: 0.0,
            bipolar_phi0: (0.3, 0.7),
            bipolar_phi1: (0.02, 0.04),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SampleEntry {
    pub index: usize,
    pub phantom_seed: u64,
    pub noise_seed: u64,
    pub noise_sigma: f64,
    pub bipolar: Option<BipolarErrorSpec>,
    pub phantom: crate::signal::PhantomSpec,
    pub series: String,
    pub truth: String,
    pub fit: Option<String>,
}

impl SampleEntry {
    pub fn provenance(&self) -> Provenance {
        Provenance {
            index: self.index,
            phantom_seed: self.phantom_seed,
            noise_seed: self.noise_seed,
            noise_sigma: self.noise_sigma,
            bipolar: self.bipolar,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub seed: u64,
    pub protocol: AcquisitionProtocol,
    /// (train, val, test) counts; samples are split in index order.
    pub split: (usize, usize, usize),
    pub samples: Vec<SampleEntry>,
}

impl CorpusManifest {
    pub fn manifest_path(root: &Path) -> PathBuf {
        root.join("manifest.json")
    }

    pub fn save(&self, root: &Path) -> Result<()> {
        let path = Self::manifest_path(root);
        let json = serde_json::to_string_pretty(self).expect("manifest serializes");
        std::fs::write(&path, json).map_err(|e| Error::io(&path, e))
    }

    pub fn load(root: &Path) -> Result<Self> {
        let path = Self::manifest_path(root);
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Parse {
            path,
            reason: e.to_string(),
        })
    }

    pub fn train_entries(&self) -> &[SampleEntry] {
        &self.samples[..self.split.0]
    }

    pub fn val_entries(&self) -> &[SampleEntry] {
        &self.samples[self.split.0..self.split.0 + self.split.1]
    }

    pub fn test_entries(&self) -> &[SampleEntry] {
        &self.samples[self.split.0 + self.split.1..]
    }
}

/// Maps are stored as a 5×H×W f64 raster: water, fat, R2*, off-resonance,
/// mask (0/1).
pub fn write_maps(path: impl AsRef<Path>, maps: &ParameterMaps) -> Result<()> {
    let (h, w) = maps.dims();
    let mut out = ArrayD::zeros(IxDyn(&[5, h, w]));
    for y in 0..h {
        for x in 0..w {
            out[[0, y, x]] = maps.water[[y, x]];
            out[[1, y, x]] = maps.fat[[y, x]];
            out[[2, y, x]] = maps.r2star[[y, x]];
            out[[3, y, x]] = maps.offres[[y, x]];
            out[[4, y, x]] = if maps.mask[[y, x]] { 1.0 } else { 0.0 };
        }
    }
    raster::write_raster(path, &Raster::F64(out))
}

pub fn read_maps(path: impl AsRef<Path>) -> Result<ParameterMaps> {
    let path = path.as_ref();
    let raster = raster::read_raster(path)?;
    let dims = raster.dims().to_vec();
    if dims.len() != 3 || dims[0] != 5 {
        return Err(Error::shape(format!(
            "{}: maps raster must be 5×H×W, got {dims:?}",
            path.display()
        )));
    }
    let Raster::F64(a) = raster else {
        return Err(Error::shape(format!(
            "{}: maps raster must be f64",
            path.display()
        )));
    };
    let (h, w) = (dims[1], dims[2]);
    let mut maps = ParameterMaps::zeros(h, w);
    for y in 0..h {
        for x in 0..w {
            maps.water[[y, x]] = a[[0, y, x]];
            maps.fat[[y, x]] = a[[1, y, x]];
            maps.r2star[[y, x]] = a[[2, y, x]];
            maps.offres[[y, x]] = a[[3, y, x]];
            maps.mask[[y, x]] = a[[4, y, x]] != 0.0;
        }
    }
    Ok(maps)
}

fn rel(kind: &str, index: usize) -> String {
    format!("{kind}/{index:06}.wft")
}

/// Generate `size` phantom acquisitions under `root`. Sample i is fully
/// determined by the stream derived from (seed, i).
pub fn generate_corpus(
    root: &Path,
    size: usize,
    seed: u64,
    protocol: &AcquisitionProtocol,
    ranges: &PhantomRanges,
    corruption: &CorruptionConfig,
) -> Result<CorpusManifest> {
    let split = crate::dataset::split_counts(size)?;
    for sub in ["series", "truth", "fit"] {
        let dir = root.join(sub);
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    }

    let mut samples = Vec::with_capacity(size);
    for index in 0..size {
        let mut rng = SeededRng::derive(seed, index as u64);
        let spec = sample_phantom_spec(ranges, &mut rng);
        let phantom_seed = rng.next_u64();
        let noise_seed = rng.next_u64();
        let bipolar = if rng.uniform() < corruption.bipolar_fraction {
            Some(BipolarErrorSpec {
                phi0: rng.range(corruption.bipolar_phi0.0, corruption.bipolar_phi0.1),
                phi1: rng.range(corruption.bipolar_phi1.0, corruption.bipolar_phi1.1),
            })
        } else {
            None
        };

        let entry = SampleEntry {
            index,
            phantom_seed,
            noise_seed,
            noise_sigma: corruption.noise_sigma,
            bipolar,
            phantom: spec,
            series: rel("series", index),
            truth: rel("truth", index),
            fit: None,
        };
        write_sample(root, &entry, protocol)?;
        samples.push(entry);
    }

    let manifest = CorpusManifest {
        seed,
        protocol: protocol.clone(),
        split,
        samples,
    };
    manifest.save(root)?;
    Ok(manifest)
}

/// Render and store one sample (truth maps + corrupted noisy series).
fn write_sample(root: &Path, entry: &SampleEntry, protocol: &AcquisitionProtocol) -> Result<()> {
    let truth = generate_phantom(&entry.phantom, entry.phantom_seed)?;
    let mut series = simulate_series(&truth, protocol)?;
    if let Some(err) = &entry.bipolar {
        series = apply_bipolar_error(&series, err)?;
    }
    let series = add_noise(
        &series,
        &NoiseSpec {
            sigma: entry.noise_sigma,
            seed: entry.noise_seed,
        },
    )?;
    write_maps(root.join(&entry.truth), &truth)?;
    raster::write_series(root.join(&entry.series), &series)?;
    Ok(())
}

pub fn load_series(
    root: &Path,
    entry: &SampleEntry,
    protocol: &AcquisitionProtocol,
) -> Result<EchoSeries> {
    let mut protocol = protocol.clone();
    protocol.bipolar = entry.bipolar.is_some();
    raster::read_series(root.join(&entry.series), protocol)
}

/// Run the conventional fit over every sample, routing bipolar-flagged
/// acquisitions to even/odd processing. Writes fit maps, updates the
/// manifest on disk, and returns the per-sample logs.
pub fn fit_corpus(
    root: &Path,
    manifest: &mut CorpusManifest,
    options: &FitOptions,
) -> Result<Vec<FitLog>> {
    let mut logs = Vec::with_capacity(manifest.samples.len());
    let protocol = manifest.protocol.clone();
    for i in 0..manifest.samples.len() {
        let entry = manifest.samples[i].clone();
        let series = load_series(root, &entry, &protocol)?;
        let (maps, log) = if entry.bipolar.is_some() {
            separate_even_odd_full(&series, options)?
        } else {
            separate_full(&series, options)?
        };
        let fit_path = rel("fit", entry.index);
        write_maps(root.join(&fit_path), &maps)?;
        manifest.samples[i].fit = Some(fit_path);
        logs.push(log);
    }
    manifest.save(root)?;
    let log_path = root.join("fit_log.json");
    let json = serde_json::to_string_pretty(&logs).expect("logs serialize");
    std::fs::write(&log_path, json).map_err(|e| Error::io(&log_path, e))?;
    Ok(logs)
}

/// Materialize training pairs for the given entries. Teacher mode uses
/// the conventional-fit maps as targets; otherwise ground truth.
pub fn load_samples(
    root: &Path,
    manifest: &CorpusManifest,
    entries: &[SampleEntry],
    mode: InputMode,
    teacher_targets: bool,
) -> Result<Vec<Sample>> {
    entries
        .iter()
        .map(|entry| {
            let series = load_series(root, entry, &manifest.protocol)?;
            let input = assemble_input(&series, mode)?;
            let maps = if teacher_targets {
                let fit_path = entry.fit.as_ref().ok_or_else(|| {
                    Error::validation(format!(
                        "sample {} has no fit maps; run the fit stage first",
                        entry.index
                    ))
                })?;
                read_maps(root.join(fit_path))?
            } else {
                read_maps(root.join(&entry.truth))?
            };
            Ok(Sample {
                input,
                target: assemble_target(&maps),
                provenance: entry.provenance(),
            })
        })
        .collect()
}

/// Ground-truth maps of an entry.
pub fn load_truth(root: &Path, entry: &SampleEntry) -> Result<ParameterMaps> {
    read_maps(root.join(&entry.truth))
}

/// Conventional-fit maps of an entry (fit stage must have run).
pub fn load_fit(root: &Path, entry: &SampleEntry) -> Result<ParameterMaps> {
    let fit_path = entry
        .fit
        .as_ref()
        .ok_or_else(|| Error::validation(format!("sample {} not fitted yet", entry.index)))?;
    read_maps(root.join(fit_path))
}

/// The phantom's ground-truth support mask.
pub fn truth_mask(root: &Path, entry: &SampleEntry) -> Result<Array2<bool>> {
    Ok(load_truth(root, entry)?.mask)
}
