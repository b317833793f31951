//! Corpus-to-tensor plumbing: input-mode channel assembly, normalization
//! statistics, mirroring and corruption augmentation, train/val/test
//! splitting.

use crate::error::{Error, Result};
use crate::maps::{EchoSeries, ParameterMaps};
use crate::nn::TrainingSet;
use crate::rng::SeededRng;
use crate::signal::BipolarErrorSpec;
use ndarray::{Array2, Array3};
use serde::{Deserialize, Serialize};

/// Network input layout. Channel counts are fixed per variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InputMode {
    /// Real/imaginary pair per echo: 24 channels.
    Complex12,
    /// Magnitude per echo: 12 channels.
    Magnitude12,
    /// First (opposed-phase) echo only, real/imaginary: 2 channels.
    Complex1,
    /// First echo magnitude: 1 channel.
    Magnitude1,
}

impl InputMode {
    pub fn channels(&self) -> usize {
        match self {
            InputMode::Complex12 => 24,
            InputMode::Magnitude12 => 12,
            InputMode::Complex1 => 2,
            InputMode::Magnitude1 => 1,
        }
    }

    pub fn echoes_required(&self) -> usize {
        match self {
            InputMode::Complex12 | InputMode::Magnitude12 => 12,
            InputMode::Complex1 | InputMode::Magnitude1 => 1,
        }
    }

    pub fn is_complex(&self) -> bool {
        matches!(self, InputMode::Complex12 | InputMode::Complex1)
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "complex12" => Ok(InputMode::Complex12),
            "magnitude12" => Ok(InputMode::Magnitude12),
            "complex1" => Ok(InputMode::Complex1),
            "magnitude1" => Ok(InputMode::Magnitude1),
            other => Err(Error::Config(format!("unknown input mode '{other}'"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            InputMode::Complex12 => "complex12",
            InputMode::Magnitude12 => "magnitude12",
            InputMode::Complex1 => "complex1",
            InputMode::Magnitude1 => "magnitude1",
        }
    }
}

/// Assemble network input channels from an echo series.
///
/// Channel order: Complex12 → [re(e0), im(e0), re(e1), im(e1), …];
/// Magnitude12 → [|e0| … |e11|]; Complex1 → [re(e0), im(e0)];
/// Magnitude1 → [|e0|].
pub fn assemble_input(series: &EchoSeries, mode: InputMode) -> Result<Array3<f64>> {
    let (n, h, w) = series.dims();
    if n < mode.echoes_required() {
        return Err(Error::validation(format!(
            "mode {} needs {} echoes, series has {n}",
            mode.name(),
            mode.echoes_required()
        )));
    }
    let mut out = Array3::zeros((mode.channels(), h, w));
    match mode {
        InputMode::Complex12 => {
            for e in 0..12 {
                for y in 0..h {
                    for x in 0..w {
                        let v = series.data[[e, y, x]];
                        out[[2 * e, y, x]] = v.re;
                        out[[2 * e + 1, y, x]] = v.im;
                    }
                }
            }
        }
        InputMode::Magnitude12 => {
            for e in 0..12 {
                for y in 0..h {
                    for x in 0..w {
                        out[[e, y, x]] = series.data[[e, y, x]].norm();
                    }
                }
            }
        }
        InputMode::Complex1 => {
            for y in 0..h {
                for x in 0..w {
                    let v = series.data[[0, y, x]];
                    out[[0, y, x]] = v.re;
                    out[[1, y, x]] = v.im;
                }
            }
        }
        InputMode::Magnitude1 => {
            for y in 0..h {
                for x in 0..w {
                    out[[0, y, x]] = series.data[[0, y, x]].norm();
                }
            }
        }
    }
    Ok(out)
}

/// Target channel order is fixed: water, fat, R2*, off-resonance.
pub const TARGET_CHANNELS: usize = 4;

pub fn assemble_target(maps: &ParameterMaps) -> Array3<f64> {
    let (h, w) = maps.dims();
    let mut out = Array3::zeros((TARGET_CHANNELS, h, w));
    for y in 0..h {
        for x in 0..w {
            out[[0, y, x]] = maps.water[[y, x]];
            out[[1, y, x]] = maps.fat[[y, x]];
            out[[2, y, x]] = maps.r2star[[y, x]];
            out[[3, y, x]] = maps.offres[[y, x]];
        }
    }
    out
}

/// Convert a denormalized 4-channel prediction back into parameter maps.
/// Water, fat and R2* are clamped at zero (the linear output layer can
/// produce small negative values).
pub fn prediction_to_maps(pred: &Array3<f64>, mask: Array2<bool>) -> Result<ParameterMaps> {
    let (c, h, w) = pred.dim();
    if c < TARGET_CHANNELS {
        return Err(Error::shape(format!(
            "prediction has {c} channels, expected {TARGET_CHANNELS}"
        )));
    }
    let chan = |i: usize| pred.index_axis(ndarray::Axis(0), i).to_owned();
    ParameterMaps::new(
        chan(0).mapv(|v| v.max(0.0)),
        chan(1).mapv(|v| v.max(0.0)),
        chan(2).mapv(|v| v.max(0.0)),
        chan(3),
        if mask.dim() == (h, w) {
            mask
        } else {
            Array2::from_elem((h, w), true)
        },
    )
}

/// One training pair plus how it was produced.
#[derive(Debug, Clone)]
pub struct Sample {
    pub input: Array3<f64>,
    pub target: Array3<f64>,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Provenance {
    pub index: usize,
    pub phantom_seed: u64,
    pub noise_seed: u64,
    pub noise_sigma: f64,
    pub bipolar: Option<BipolarErrorSpec>,
}

/// Per-channel normalization statistics (population convention, stds
/// floored at 1e-6).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub input_mean: Vec<f64>,
    pub input_std: Vec<f64>,
    pub target_mean: Vec<f64>,
    pub target_std: Vec<f64>,
    pub count: usize,
}

const STD_FLOOR: f64 = 1e-6;

fn channel_stats(arrays: &[&Array3<f64>], channels: usize) -> (Vec<f64>, Vec<f64>) {
    let mut mean = vec![0.0; channels];
    let mut var = vec![0.0; channels];
    let mut n = vec![0usize; channels];
    for a in arrays {
        for c in 0..channels {
            let slice = a.index_axis(ndarray::Axis(0), c);
            for &v in slice.iter() {
                mean[c] += v;
                n[c] += 1;
            }
        }
    }
    for c in 0..channels {
        mean[c] /= n[c] as f64;
    }
    for a in arrays {
        for c in 0..channels {
            let slice = a.index_axis(ndarray::Axis(0), c);
            for &v in slice.iter() {
                var[c] += (v - mean[c]) * (v - mean[c]);
            }
        }
    }
    let std = var
        .iter()
        .zip(n.iter())
        .map(|(&s, &cnt)| (s / cnt as f64).sqrt().max(STD_FLOOR))
        .collect();
    (mean, std)
}

/// Per-channel mean/std over all pixels of the first `k` samples.
pub fn compute_norm_stats(samples: &[Sample], k: usize) -> Result<NormStats> {
    let k = k.min(samples.len());
    if k == 0 {
        return Err(Error::validation("cannot compute stats over zero samples"));
    }
    let inputs: Vec<&Array3<f64>> = samples[..k].iter().map(|s| &s.input).collect();
    let targets: Vec<&Array3<f64>> = samples[..k].iter().map(|s| &s.target).collect();
    let in_channels = inputs[0].dim().0;
    let (input_mean, input_std) = channel_stats(&inputs, in_channels);
    let (target_mean, target_std) = channel_stats(&targets, TARGET_CHANNELS);
    Ok(NormStats {
        input_mean,
        input_std,
        target_mean,
        target_std,
        count: k,
    })
}

fn apply_norm(a: &mut Array3<f64>, mean: &[f64], std: &[f64]) -> Result<()> {
    let c = a.dim().0;
    if c > mean.len() {
        return Err(Error::shape(format!(
            "array has {c} channels but stats cover {}",
            mean.len()
        )));
    }
    for ci in 0..c {
        let mut slice = a.index_axis_mut(ndarray::Axis(0), ci);
        slice.mapv_inplace(|v| (v - mean[ci]) / std[ci]);
    }
    Ok(())
}

fn apply_denorm(a: &mut Array3<f64>, mean: &[f64], std: &[f64]) -> Result<()> {
    let c = a.dim().0;
    if c > mean.len() {
        return Err(Error::shape(format!(
            "array has {c} channels but stats cover {}",
            mean.len()
        )));
    }
    for ci in 0..c {
        let mut slice = a.index_axis_mut(ndarray::Axis(0), ci);
        slice.mapv_inplace(|v| v * std[ci] + mean[ci]);
    }
    Ok(())
}

pub fn normalize_input(input: &mut Array3<f64>, stats: &NormStats) -> Result<()> {
    apply_norm(input, &stats.input_mean, &stats.input_std)
}

pub fn normalize_target(target: &mut Array3<f64>, stats: &NormStats) -> Result<()> {
    apply_norm(target, &stats.target_mean, &stats.target_std)
}

/// Exact inverse of [`normalize_target`], applied to predictions.
pub fn denormalize_prediction(pred: &mut Array3<f64>, stats: &NormStats) -> Result<()> {
    apply_denorm(pred, &stats.target_mean, &stats.target_std)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mirror {
    None,
    Horizontal,
    Vertical,
    Both,
}

impl Mirror {
    pub fn from_code(code: u8) -> Mirror {
        match code % 4 {
            0 => Mirror::None,
            1 => Mirror::Horizontal,
            2 => Mirror::Vertical,
            _ => Mirror::Both,
        }
    }
}

/// Mirror every channel of a C×H×W array in place. Horizontal flips the
/// width axis, vertical the height axis; values are unchanged.
pub fn augment_mirror(a: &mut Array3<f64>, which: Mirror) {
    let (_, h, w) = a.dim();
    let flip_h = matches!(which, Mirror::Horizontal | Mirror::Both);
    let flip_v = matches!(which, Mirror::Vertical | Mirror::Both);
    if flip_h {
        for c in 0..a.dim().0 {
            for y in 0..h {
                for x in 0..w / 2 {
                    let tmp = a[[c, y, x]];
                    a[[c, y, x]] = a[[c, y, w - 1 - x]];
                    a[[c, y, w - 1 - x]] = tmp;
                }
            }
        }
    }
    if flip_v {
        for c in 0..a.dim().0 {
            for y in 0..h / 2 {
                for x in 0..w {
                    let tmp = a[[c, y, x]];
                    a[[c, y, x]] = a[[c, h - 1 - y, x]];
                    a[[c, h - 1 - y, x]] = tmp;
                }
            }
        }
    }
}

/// Apply an echo-parity phase error directly on assembled channels. For
/// complex modes this matches corrupting the series before assembly
/// exactly (the rotation acts on each even echo's re/im pair); magnitude
/// channels are unchanged by a pure phase and pass through.
pub fn bipolar_on_channels(input: &mut Array3<f64>, mode: InputMode, phi0: f64, phi1: f64) {
    if !mode.is_complex() {
        return;
    }
    let (c, h, w) = input.dim();
    let pairs = c / 2;
    for e in (0..pairs).step_by(2) {
        for y in 0..h {
            for x in 0..w {
                let phi = phi0 + phi1 * x as f64;
                let (s, cth) = phi.sin_cos();
                let re = input[[2 * e, y, x]];
                let im = input[[2 * e + 1, y, x]];
                input[[2 * e, y, x]] = re * cth - im * s;
                input[[2 * e + 1, y, x]] = re * s + im * cth;
            }
        }
    }
}

/// Fold-over on assembled channels: ch(y) += ch((y + shift) mod H).
/// Exact for complex modes (the fold is linear and channelwise); for
/// magnitude modes this adds magnitudes, an upper bound on the true
/// folded magnitude, which is acceptable as augmentation.
pub fn foldover_on_channels(input: &mut Array3<f64>, shift_fraction: f64) {
    let (c, h, w) = input.dim();
    let shift = (shift_fraction * h as f64).round() as usize % h;
    let original = input.clone();
    for ci in 0..c {
        for y in 0..h {
            let src = (y + shift) % h;
            for x in 0..w {
                input[[ci, y, x]] += original[[ci, src, x]];
            }
        }
    }
}

/// Training-time augmentation policy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentSpec {
    pub mirror: bool,
    pub bipolar_prob: f64,
    pub bipolar_phi0: (f64, f64),
    pub bipolar_phi1: (f64, f64),
    pub foldover_prob: f64,
    pub foldover_shift: (f64, f64),
}

impl Default for AugmentSpec {
    fn default() -> Self {
        AugmentSpec {
            mirror: true,
            bipolar_prob: 0.3,
            bipolar_phi0: (-0.6, 0.6),
            bipolar_phi1: (-0.035, 0.035),
            foldover_prob: 0.25,
            foldover_shift: (0.1, 0.45),
        }
    }
}

impl AugmentSpec {
    /// No augmentation (validation and test sets).
    pub fn none() -> Self {
        AugmentSpec {
            mirror: false,
            bipolar_prob: 0.0,
            bipolar_phi0: (0.0, 0.0),
            bipolar_phi1: (0.0, 0.0),
            foldover_prob: 0.0,
            foldover_shift: (0.1, 0.45),
        }
    }
}

/// A corpus view that materializes augmented, normalized training pairs.
/// Corruption augments are input-only: the target stays the teacher's
/// output for the uncorrupted series, so the network learns to undo the
/// corruption.
pub struct AugmentedCorpus<'a> {
    pub samples: &'a [Sample],
    pub stats: &'a NormStats,
    pub augment: AugmentSpec,
    pub mode: InputMode,
    /// How many target channels to expose (2 for water/fat-only nets).
    pub target_channels: usize,
}

impl<'a> AugmentedCorpus<'a> {
    pub fn new(samples: &'a [Sample], stats: &'a NormStats, augment: AugmentSpec, mode: InputMode) -> Self {
        AugmentedCorpus {
            samples,
            stats,
            augment,
            mode,
            target_channels: TARGET_CHANNELS,
        }
    }
}

impl TrainingSet for AugmentedCorpus<'_> {
    fn len(&self) -> usize {
        self.samples.len()
    }

    fn sample(&self, index: usize, rng: &mut SeededRng) -> (Array3<f64>, Array3<f64>) {
        let s = &self.samples[index];
        let mut input = s.input.clone();
        let mut target = if self.target_channels == TARGET_CHANNELS {
            s.target.clone()
        } else {
            s.target
                .slice(ndarray::s![..self.target_channels, .., ..])
                .to_owned()
        };

        if self.augment.mirror {
            let which = Mirror::from_code(rng.below(4) as u8);
            augment_mirror(&mut input, which);
            augment_mirror(&mut target, which);
        }
        if self.augment.bipolar_prob > 0.0 && rng.uniform() < self.augment.bipolar_prob {
            let phi0 = rng.range(self.augment.bipolar_phi0.0, self.augment.bipolar_phi0.1);
            let phi1 = rng.range(self.augment.bipolar_phi1.0, self.augment.bipolar_phi1.1);
            bipolar_on_channels(&mut input, self.mode, phi0, phi1);
        }
        if self.augment.foldover_prob > 0.0 && rng.uniform() < self.augment.foldover_prob {
            let shift = rng.range(self.augment.foldover_shift.0, self.augment.foldover_shift.1);
            foldover_on_channels(&mut input, shift);
        }

        normalize_input(&mut input, self.stats).expect("stats cover input channels");
        apply_norm(
            &mut target,
            &self.stats.target_mean[..self.target_channels],
            &self.stats.target_std[..self.target_channels],
        )
        .expect("stats cover target channels");
        (input, target)
    }
}

/// Deterministic 9:1:3 split counts (train, val, test); train absorbs
/// rounding remainders.
pub fn split_counts(n: usize) -> Result<(usize, usize, usize)> {
    if n < 13 {
        return Err(Error::validation(format!(
            "corpus of {n} cannot honor the 9:1:3 split (need at least 13)"
        )));
    }
    let val = (n as f64 / 13.0).round() as usize;
    let test = (3.0 * n as f64 / 13.0).round() as usize;
    let train = n - val - test;
    Ok((train, val, test))
}

/// Split a corpus by index order: first train, then val, then test.
pub fn split<T>(corpus: &[T]) -> Result<(&[T], &[T], &[T])> {
    let (train, val, test) = split_counts(corpus.len())?;
    let (a, rest) = corpus.split_at(train);
    let (b, c) = rest.split_at(val);
    debug_assert_eq!(c.len(), test);
    Ok((a, b, c))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::AcquisitionProtocol;
    use num_complex::Complex64;

    fn test_series(h: usize, w: usize) -> EchoSeries {
        let p = AcquisitionProtocol::default_cardiac();
        let mut rng = SeededRng::new(8);
        let mut data = Array3::zeros((12, h, w));
        for v in data.iter_mut() {
            *v = Complex64::new(rng.normal(), rng.normal());
        }
        EchoSeries::new(data, p).unwrap()
    }

    #[test]
    fn zero_series_assembles_to_zero_channels() {
        let p = AcquisitionProtocol::default_cardiac();
        let series = EchoSeries::new(Array3::zeros((12, 4, 4)), p).unwrap();
        let input = assemble_input(&series, InputMode::Complex12).unwrap();
        assert_eq!(input.dim(), (24, 4, 4));
        assert!(input.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn magnitude_of_three_four_is_five() {
        let p = AcquisitionProtocol::default_cardiac();
        let mut data = Array3::zeros((12, 2, 2));
        for y in 0..2 {
            for x in 0..2 {
                data[[0, y, x]] = Complex64::new(3.0, 4.0);
            }
        }
        let series = EchoSeries::new(data, p).unwrap();
        let input = assemble_input(&series, InputMode::Magnitude1).unwrap();
        assert_eq!(input.dim(), (1, 2, 2));
        assert!(input.iter().all(|&v| (v - 5.0).abs() < 1e-15));
    }

    /// Complex12 assembly is lossless: recombining re + j·im restores the
    /// series bit-exactly.
    #[test]
    fn complex12_assembly_is_lossless() {
        let series = test_series(6, 5);
        let input = assemble_input(&series, InputMode::Complex12).unwrap();
        for e in 0..12 {
            for y in 0..6 {
                for x in 0..5 {
                    let v = Complex64::new(input[[2 * e, y, x]], input[[2 * e + 1, y, x]]);
                    assert_eq!(v, series.data[[e, y, x]]);
                }
            }
        }
    }

    #[test]
    fn short_series_rejected_for_12_echo_modes() {
        let p = AcquisitionProtocol::default_cardiac().subset(&[0, 1, 2]).unwrap();
        let series = EchoSeries::new(Array3::zeros((3, 4, 4)), p).unwrap();
        assert!(assemble_input(&series, InputMode::Complex12).is_err());
        assert!(assemble_input(&series, InputMode::Magnitude1).is_ok());
    }

    fn sample_from(input: Array3<f64>, target: Array3<f64>) -> Sample {
        Sample {
            input,
            target,
            provenance: Provenance::default(),
        }
    }

    #[test]
    fn constant_channel_floors_std() {
        let samples: Vec<Sample> = (0..3)
            .map(|_| {
                sample_from(
                    Array3::from_elem((2, 4, 4), 2.5),
                    Array3::from_elem((4, 4, 4), 1.0),
                )
            })
            .collect();
        let stats = compute_norm_stats(&samples, 3).unwrap();
        assert_eq!(stats.input_mean, vec![2.5, 2.5]);
        assert_eq!(stats.input_std, vec![STD_FLOOR, STD_FLOOR]);
        assert_eq!(stats.count, 3);

        // a channel equal to its mean everywhere normalizes to zeros
        let mut input = samples[0].input.clone();
        normalize_input(&mut input, &stats).unwrap();
        assert!(input.iter().all(|&v| v == 0.0));
    }

    /// Two-point population statistics: values {0} and {2} give mean 1,
    /// std 1 (population convention).
    #[test]
    fn two_point_population_std() {
        let samples = vec![
            sample_from(Array3::zeros((1, 2, 2)), Array3::zeros((4, 2, 2))),
            sample_from(Array3::from_elem((1, 2, 2), 2.0), Array3::zeros((4, 2, 2))),
        ];
        let stats = compute_norm_stats(&samples, 2).unwrap();
        assert!((stats.input_mean[0] - 1.0).abs() < 1e-12);
        assert!((stats.input_std[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn stats_deterministic_over_ordered_corpus() {
        let mut rng = SeededRng::new(3);
        let samples: Vec<Sample> = (0..4)
            .map(|_| {
                sample_from(
                    Array3::from_shape_fn((2, 3, 3), |_| rng.normal()),
                    Array3::from_shape_fn((4, 3, 3), |_| rng.normal()),
                )
            })
            .collect();
        let a = compute_norm_stats(&samples, 4).unwrap();
        let b = compute_norm_stats(&samples, 4).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn normalize_denormalize_inverse() {
        let mut rng = SeededRng::new(5);
        let samples: Vec<Sample> = (0..3)
            .map(|_| {
                sample_from(
                    Array3::from_shape_fn((2, 4, 4), |_| 3.0 * rng.normal() + 1.0),
                    Array3::from_shape_fn((4, 4, 4), |_| 10.0 * rng.normal() - 4.0),
                )
            })
            .collect();
        let stats = compute_norm_stats(&samples, 3).unwrap();
        let original = samples[0].target.clone();
        let mut t = original.clone();
        normalize_target(&mut t, &stats).unwrap();
        denormalize_prediction(&mut t, &stats).unwrap();
        for (a, b) in t.iter().zip(original.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    /// Normalized stats-defining corpus has per-channel mean 0, std 1.
    #[test]
    fn normalized_corpus_is_standardized() {
        let mut rng = SeededRng::new(6);
        let samples: Vec<Sample> = (0..5)
            .map(|_| {
                sample_from(
                    Array3::from_shape_fn((3, 6, 6), |_| 2.0 + 0.5 * rng.normal()),
                    Array3::from_shape_fn((4, 6, 6), |_| rng.normal()),
                )
            })
            .collect();
        let stats = compute_norm_stats(&samples, 5).unwrap();
        let normalized: Vec<Sample> = samples
            .iter()
            .map(|s| {
                let mut input = s.input.clone();
                let mut target = s.target.clone();
                normalize_input(&mut input, &stats).unwrap();
                normalize_target(&mut target, &stats).unwrap();
                sample_from(input, target)
            })
            .collect();
        let restats = compute_norm_stats(&normalized, 5).unwrap();
        for c in 0..3 {
            assert!(restats.input_mean[c].abs() < 1e-9);
            assert!((restats.input_std[c] - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn mirror_none_is_identity_and_involution() {
        let mut rng = SeededRng::new(7);
        let original = Array3::from_shape_fn((2, 5, 6), |_| rng.normal());
        let mut a = original.clone();
        augment_mirror(&mut a, Mirror::None);
        assert_eq!(a, original);
        augment_mirror(&mut a, Mirror::Horizontal);
        augment_mirror(&mut a, Mirror::Horizontal);
        assert_eq!(a, original);
        augment_mirror(&mut a, Mirror::Both);
        augment_mirror(&mut a, Mirror::Both);
        assert_eq!(a, original);
    }

    /// Single nonzero pixel at (r, c) moves to (r, W−1−c) in every channel
    /// under horizontal mirroring.
    #[test]
    fn mirror_index_arithmetic() {
        let mut a = Array3::zeros((3, 4, 7));
        for c in 0..3 {
            a[[c, 2, 1]] = 1.0 + c as f64;
        }
        augment_mirror(&mut a, Mirror::Horizontal);
        for c in 0..3 {
            assert_eq!(a[[c, 2, 7 - 1 - 1]], 1.0 + c as f64);
            assert_eq!(a[[c, 2, 1]], 0.0);
        }
    }

    #[test]
    fn channel_bipolar_matches_series_corruption() {
        use crate::signal::apply_bipolar_error;
        let series = test_series(4, 6);
        let err = BipolarErrorSpec {
            phi0: 0.4,
            phi1: 0.02,
        };
        let corrupted = apply_bipolar_error(&series, &err).unwrap();
        let want = assemble_input(&corrupted, InputMode::Complex12).unwrap();
        let mut got = assemble_input(&series, InputMode::Complex12).unwrap();
        bipolar_on_channels(&mut got, InputMode::Complex12, err.phi0, err.phi1);
        for (a, b) in got.iter().zip(want.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn channel_foldover_matches_series_corruption() {
        use crate::signal::apply_foldover;
        let series = test_series(8, 4);
        let folded = apply_foldover(&series, 0.25).unwrap();
        let want = assemble_input(&folded, InputMode::Complex12).unwrap();
        let mut got = assemble_input(&series, InputMode::Complex12).unwrap();
        foldover_on_channels(&mut got, 0.25);
        for (a, b) in got.iter().zip(want.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn split_matches_paper_counts() {
        assert_eq!(split_counts(1300).unwrap(), (900, 100, 300));
        assert_eq!(split_counts(13).unwrap(), (9, 1, 3));
        assert_eq!(split_counts(130).unwrap(), (90, 10, 30));
        assert!(split_counts(12).is_err());
    }

    #[test]
    fn split_is_a_partition() {
        let corpus: Vec<usize> = (0..47).collect();
        let (a, b, c) = split(&corpus).unwrap();
        assert_eq!(a.len() + b.len() + c.len(), 47);
        let mut all: Vec<usize> = a.iter().chain(b).chain(c).copied().collect();
        all.sort_unstable();
        assert_eq!(all, corpus);
    }
}
