//! Forward signal simulation and corruption models.
//!
//! The per-pixel model at echo time TE_n is
//!
//! ```text
//! I_n = exp(-R2*·TE_n) · exp(j·2π·Δf·TE_n) · (ρ_W + ρ_F · Σ_p α_p·exp(j·2π·f_p·TE_n))
//! ```
//!
//! with the water/fat term kept complex (the standard chemical-shift
//! model). Corruptions: additive complex Gaussian noise, echo-parity phase
//! errors from bipolar readouts, and post-reconstruction fold-over overlap.

mod phantom;

pub use phantom::{
    generate_phantom, sample_phantom_spec, Ellipse, FatLesion, Hemorrhage, PhantomRanges,
    PhantomSpec, TissueValues, SEPTUM_SECTOR,
};

use crate::error::{Error, Result};
use crate::maps::{EchoSeries, ParameterMaps};
use crate::protocol::AcquisitionProtocol;
use crate::rng::SeededRng;
use ndarray::Array3;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;

/// Additive complex Gaussian noise parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    /// Standard deviation per real/imaginary channel, a.u.
    pub sigma: f64,
    pub seed: u64,
}

/// Echo-parity phase error of a bipolar readout: even-index echoes pick up
/// a constant phase `phi0` plus a linear ramp `phi1` per pixel along the
/// readout (x) axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BipolarErrorSpec {
    /// Radians added to even echoes.
    pub phi0: f64,
    /// Radians per pixel along the readout axis, even echoes only.
    pub phi1: f64,
}

/// Precomputed per-echo quantities for evaluating the signal model.
///
/// Both [`simulate_pixel`] and [`simulate_series`] evaluate through this,
/// so a vectorized simulation is bit-identical to the per-pixel loop.
pub struct PixelSimulator {
    echo_times_s: Vec<f64>,
    fat_mod: Vec<Complex64>,
}

impl PixelSimulator {
    pub fn new(protocol: &AcquisitionProtocol) -> Self {
        PixelSimulator {
            echo_times_s: protocol.echo_times_s.clone(),
            fat_mod: protocol.fat_modulation(),
        }
    }

    pub fn n_echoes(&self) -> usize {
        self.echo_times_s.len()
    }

    /// Evaluate the signal model into `out` (length N).
    pub fn eval_into(
        &self,
        water: f64,
        fat: f64,
        r2star: f64,
        offres_hz: f64,
        out: &mut [Complex64],
    ) {
        for (n, (&te, &c)) in self.echo_times_s.iter().zip(self.fat_mod.iter()).enumerate() {
            let envelope = Complex64::from_polar((-r2star * te).exp(), TAU * offres_hz * te);
            out[n] = envelope * (water + fat * c);
        }
    }
}

fn validate_pixel_inputs(water: f64, fat: f64, r2star: f64, offres_hz: f64) -> Result<()> {
    if !(water >= 0.0) || !(fat >= 0.0) || !(r2star >= 0.0) {
        return Err(Error::validation(format!(
            "water, fat and r2star must be non-negative (got {water}, {fat}, {r2star})"
        )));
    }
    if !water.is_finite() || !fat.is_finite() || !r2star.is_finite() || !offres_hz.is_finite() {
        return Err(Error::validation("signal model inputs must be finite"));
    }
    Ok(())
}

/// Signal model for a single pixel over all echoes of `protocol`.
pub fn simulate_pixel(
    water: f64,
    fat: f64,
    r2star: f64,
    offres_hz: f64,
    protocol: &AcquisitionProtocol,
) -> Result<Vec<Complex64>> {
    validate_pixel_inputs(water, fat, r2star, offres_hz)?;
    let sim = PixelSimulator::new(protocol);
    let mut out = vec![Complex64::default(); sim.n_echoes()];
    sim.eval_into(water, fat, r2star, offres_hz, &mut out);
    Ok(out)
}

/// Per-pixel application of the signal model; pixels outside the mask
/// emit zeros.
pub fn simulate_series(
    maps: &ParameterMaps,
    protocol: &AcquisitionProtocol,
) -> Result<EchoSeries> {
    maps.validate()?;
    let (h, w) = maps.dims();
    let sim = PixelSimulator::new(protocol);
    let n = sim.n_echoes();
    let mut data = Array3::zeros((n, h, w));
    let mut buf = vec![Complex64::default(); n];
    for y in 0..h {
        for x in 0..w {
            if !maps.mask[[y, x]] {
                continue;
            }
            sim.eval_into(
                maps.water[[y, x]],
                maps.fat[[y, x]],
                maps.r2star[[y, x]],
                maps.offres[[y, x]],
                &mut buf,
            );
            for e in 0..n {
                data[[e, y, x]] = buf[e];
            }
        }
    }
    EchoSeries::new(data, protocol.clone())
}

/// Add independent zero-mean Gaussian noise of std `sigma` to the real and
/// imaginary part of every sample. `sigma = 0` returns the input unchanged.
///
/// Draw order is fixed (echo-major, row-major, re then im) so the output
/// is a pure function of (series, spec).
pub fn add_noise(series: &EchoSeries, noise: &NoiseSpec) -> Result<EchoSeries> {
    if !(noise.sigma >= 0.0) || !noise.sigma.is_finite() {
        return Err(Error::validation(format!(
            "noise sigma must be finite and >= 0, got {}",
            noise.sigma
        )));
    }
    if noise.sigma == 0.0 {
        return Ok(series.clone());
    }
    let mut rng = SeededRng::new(noise.seed);
    let mut data = series.data.clone();
    for v in data.iter_mut() {
        *v += Complex64::new(noise.sigma * rng.normal(), noise.sigma * rng.normal());
    }
    EchoSeries::new(data, series.protocol.clone())
}

/// Multiply even-index echoes by exp(j·(phi0 + phi1·x)), x the readout
/// (column) index; odd echoes pass through.
pub fn apply_bipolar_error(series: &EchoSeries, err: &BipolarErrorSpec) -> Result<EchoSeries> {
    if !err.phi0.is_finite() || !err.phi1.is_finite() {
        return Err(Error::validation("bipolar phase terms must be finite"));
    }
    let (n, h, w) = series.dims();
    let mut data = series.data.clone();
    let column_phase: Vec<Complex64> = (0..w)
        .map(|x| Complex64::from_polar(1.0, err.phi0 + err.phi1 * x as f64))
        .collect();
    for e in (0..n).step_by(2) {
        for y in 0..h {
            for x in 0..w {
                data[[e, y, x]] *= column_phase[x];
            }
        }
    }
    EchoSeries::new(data, series.protocol.clone())
}

/// Phase-encode fold-over: every echo becomes
/// `out(y) = in(y) + in((y + round(shift_fraction·H)) mod H)`.
pub fn apply_foldover(series: &EchoSeries, shift_fraction: f64) -> Result<EchoSeries> {
    if !(shift_fraction > 0.0 && shift_fraction < 0.5) {
        return Err(Error::validation(format!(
            "fold-over shift fraction must be in (0, 0.5), got {shift_fraction}"
        )));
    }
    let (n, h, w) = series.dims();
    let shift = (shift_fraction * h as f64).round() as usize % h;
    let mut data = series.data.clone();
    for e in 0..n {
        for y in 0..h {
            let src = (y + shift) % h;
            for x in 0..w {
                data[[e, y, x]] += series.data[[e, src, x]];
            }
        }
    }
    EchoSeries::new(data, series.protocol.clone())
}

/// Rows of the folded image that received non-background content from the
/// shifted copy, given the support mask of the unfolded object. Used to
/// restrict evaluation to non-overlapped regions.
pub fn foldover_contaminated_rows(
    mask: &ndarray::Array2<bool>,
    shift_fraction: f64,
) -> Vec<bool> {
    let (h, w) = mask.dim();
    let shift = (shift_fraction * h as f64).round() as usize % h;
    (0..h)
        .map(|y| {
            let src = (y + shift) % h;
            (0..w).any(|x| mask[[src, x]])
        })
        .collect()
}
