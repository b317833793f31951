//! Acquisition protocol and fat spectrum.

use crate::error::{Error, Result};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;

/// Gyromagnetic ratio of the proton, Hz per tesla.
pub const GYROMAGNETIC_RATIO_HZ_PER_T: f64 = 42.577e6;

/// One spectral line of fat relative to water.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FatPeak {
    /// Relative amplitude (unitless, peaks sum to 1).
    pub alpha: f64,
    /// Chemical shift relative to water, ppm (negative = lower frequency).
    pub shift_ppm: f64,
}

/// Multi-peak spectral model of fat.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FatSpectrum {
    pub peaks: Vec<FatPeak>,
}

impl FatSpectrum {
    pub fn new(peaks: Vec<FatPeak>) -> Result<Self> {
        let s = FatSpectrum { peaks };
        s.validate()?;
        Ok(s)
    }

    /// Six-peak liver fat model (amplitudes normalized to sum 1). Used as
    /// the default spectrum; replaceable through configuration.
    pub fn six_peak_liver() -> Self {
        let shifts = [-3.80, -3.40, -2.60, -1.94, -0.39, 0.60];
        let amps = [0.087, 0.693, 0.128, 0.004, 0.039, 0.048];
        let total: f64 = amps.iter().sum();
        FatSpectrum {
            peaks: shifts
                .iter()
                .zip(amps.iter())
                .map(|(&shift_ppm, &a)| FatPeak {
                    alpha: a / total,
                    shift_ppm,
                })
                .collect(),
        }
    }

    /// Single line at `shift_ppm` with amplitude 1.
    pub fn single_peak(shift_ppm: f64) -> Self {
        FatSpectrum {
            peaks: vec![FatPeak {
                alpha: 1.0,
                shift_ppm,
            }],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.peaks.is_empty() {
            return Err(Error::validation("fat spectrum needs at least one peak"));
        }
        if self.peaks.iter().any(|p| !(p.alpha > 0.0) || !p.shift_ppm.is_finite()) {
            return Err(Error::validation("fat peak amplitudes must be > 0 and finite"));
        }
        let sum: f64 = self.peaks.iter().map(|p| p.alpha).sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::validation(format!(
                "fat peak amplitudes must sum to 1 (got {sum})"
            )));
        }
        Ok(())
    }

    /// Peak frequencies in Hz for a given Larmor frequency.
    pub fn frequencies_hz(&self, larmor_hz: f64) -> Vec<f64> {
        self.peaks
            .iter()
            .map(|p| p.shift_ppm * 1e-6 * larmor_hz)
            .collect()
    }
}

/// Multi-echo gradient-echo acquisition parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcquisitionProtocol {
    /// Echo times in seconds, strictly increasing, all positive.
    pub echo_times_s: Vec<f64>,
    pub field_strength_t: f64,
    /// Larmor frequency in Hz (gyromagnetic ratio × field strength).
    pub larmor_hz: f64,
    pub fat_spectrum: FatSpectrum,
    /// Alternating readout polarity flag.
    pub bipolar: bool,
}

impl AcquisitionProtocol {
    pub fn new(
        echo_times_s: Vec<f64>,
        field_strength_t: f64,
        fat_spectrum: FatSpectrum,
        bipolar: bool,
    ) -> Result<Self> {
        if echo_times_s.is_empty() {
            return Err(Error::validation("protocol needs at least one echo"));
        }
        if echo_times_s[0] <= 0.0
            || echo_times_s.windows(2).any(|w| w[1] <= w[0])
            || echo_times_s.iter().any(|t| !t.is_finite())
        {
            return Err(Error::validation(
                "echo times must be finite, positive and strictly increasing",
            ));
        }
        if !(field_strength_t > 0.0) {
            return Err(Error::validation("field strength must be positive"));
        }
        fat_spectrum.validate()?;
        Ok(AcquisitionProtocol {
            echo_times_s,
            field_strength_t,
            larmor_hz: GYROMAGNETIC_RATIO_HZ_PER_T * field_strength_t,
            fat_spectrum,
            bipolar,
        })
    }

    /// The default 1.5 T cardiac protocol: 12 echoes, 2.4 ms first echo,
    /// 1.2 ms spacing. Constructed as (24 + 12n)/1e4 so each TE equals its
    /// decimal literal exactly in f64.
    pub fn default_cardiac() -> Self {
        let echo_times_s = (0..12).map(|n| (24 + 12 * n) as f64 / 1e4).collect();
        AcquisitionProtocol::new(echo_times_s, 1.5, FatSpectrum::six_peak_liver(), false)
            .expect("default protocol is valid")
    }

    pub fn n_echoes(&self) -> usize {
        self.echo_times_s.len()
    }

    /// Fat modulation c_n = Σ_p α_p · exp(j·2π·f_p·TE_n) per echo.
    pub fn fat_modulation(&self) -> Vec<Complex64> {
        let freqs = self.fat_spectrum.frequencies_hz(self.larmor_hz);
        self.echo_times_s
            .iter()
            .map(|&te| {
                self.fat_spectrum
                    .peaks
                    .iter()
                    .zip(freqs.iter())
                    .map(|(p, &f)| Complex64::from_polar(p.alpha, TAU * f * te))
                    .sum()
            })
            .collect()
    }

    /// Sub-protocol restricted to the given echo indices (must be
    /// strictly increasing). Readout polarity no longer alternates within
    /// a parity subset, so the subset is marked monopolar.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let echo_times = indices
            .iter()
            .map(|&i| {
                self.echo_times_s
                    .get(i)
                    .copied()
                    .ok_or_else(|| Error::validation(format!("echo index {i} out of range")))
            })
            .collect::<Result<Vec<_>>>()?;
        AcquisitionProtocol::new(
            echo_times,
            self.field_strength_t,
            self.fat_spectrum.clone(),
            false,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_te_list_is_exact() {
        let expected = [
            2.4e-3, 3.6e-3, 4.8e-3, 6.0e-3, 7.2e-3, 8.4e-3, 9.6e-3, 10.8e-3, 12.0e-3, 13.2e-3,
            14.4e-3, 15.6e-3,
        ];
        let p = AcquisitionProtocol::default_cardiac();
        assert_eq!(p.echo_times_s.len(), 12);
        for (te, exp) in p.echo_times_s.iter().zip(expected.iter()) {
            assert_eq!(te, exp, "TE must match the decimal literal bit-exactly");
        }
    }

    #[test]
    fn larmor_at_1p5_t() {
        let p = AcquisitionProtocol::default_cardiac();
        assert_eq!(p.larmor_hz, 42.577e6 * 1.5);
        assert_eq!(p.larmor_hz, 63_865_500.0);
    }

    #[test]
    fn six_peak_spectrum_normalized() {
        let s = FatSpectrum::six_peak_liver();
        assert_eq!(s.peaks.len(), 6);
        let sum: f64 = s.peaks.iter().map(|p| p.alpha).sum();
        assert!((sum - 1.0).abs() < 1e-9);
        s.validate().unwrap();
    }

    #[test]
    fn main_peak_frequency_at_1p5_t() {
        let s = FatSpectrum::six_peak_liver();
        let freqs = s.frequencies_hz(63_865_500.0);
        // main methylene peak at -3.4 ppm
        assert!((freqs[1] - (-217.14)).abs() < 0.1, "got {}", freqs[1]);
    }

    #[test]
    fn rejects_bad_echo_times() {
        let spec = FatSpectrum::six_peak_liver();
        assert!(AcquisitionProtocol::new(vec![], 1.5, spec.clone(), false).is_err());
        assert!(AcquisitionProtocol::new(vec![0.0, 1e-3], 1.5, spec.clone(), false).is_err());
        assert!(AcquisitionProtocol::new(vec![2e-3, 2e-3], 1.5, spec, false).is_err());
    }

    #[test]
    fn subset_takes_parity_echoes() {
        let p = AcquisitionProtocol::default_cardiac();
        let even = p.subset(&[0, 2, 4, 6, 8, 10]).unwrap();
        assert_eq!(even.n_echoes(), 6);
        assert_eq!(even.echo_times_s[0], 2.4e-3);
        assert_eq!(even.echo_times_s[1], 4.8e-3);
        assert!(!even.bipolar);
    }
}
