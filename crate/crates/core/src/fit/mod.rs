//! Conventional model-based water-fat separation.
//!
//! Pipeline: signal-threshold mask → per-pixel field-map cost over an
//! off-resonance grid (VARPRO residuals minimized over an R2* grid) →
//! ICM label smoothing → per-pixel coordinate-descent refinement with
//! golden-section line searches → assembled parameter maps.
//!
//! Bipolar acquisitions are processed separately on the even and odd echo
//! subsets and the four output maps averaged, which cancels echo-parity
//! phase inconsistencies a full-series fit cannot represent.

mod icm;
mod varpro;

pub use icm::{regularize_fieldmap, IcmOutcome};
pub use varpro::{varpro_solve, CostEngine, CostScratch, GridSpec, PixelFitter, VarproSolution};

use crate::error::{Error, Result};
use crate::maps::{EchoSeries, ParameterMaps};
use crate::protocol::AcquisitionProtocol;
use ndarray::{Array2, Array3};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Inner golden-section iterations for the off-resonance line search
/// (bracket width 2·grid step; 20 steps shrink it below 1e-3 Hz).
const OFFRES_SEARCH_ITERS: usize = 20;
/// Inner golden-section iterations for R2* over its full bounds
/// (300 s⁻¹ · 0.618^28 ≈ 4e-4 s⁻¹).
const R2STAR_SEARCH_ITERS: usize = 28;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitOptions {
    pub offres_grid: GridSpec,
    pub r2star_grid: GridSpec,
    /// Outer coordinate-descent rounds in the per-pixel refinement.
    pub refine_iterations: usize,
    pub smoothness_lambda: f64,
    pub icm_sweeps: usize,
    /// Pixels with mean echo magnitude below this are masked out.
    pub signal_threshold: f64,
    /// Parallelize per-pixel stages (bit-identical to sequential).
    pub parallel: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            offres_grid: GridSpec {
                min: -416.7,
                max: 416.7,
                step: 2.0,
            },
            r2star_grid: GridSpec {
                min: 0.0,
                max: 300.0,
                step: 10.0,
            },
            refine_iterations: 25,
            smoothness_lambda: 0.05,
            icm_sweeps: 10,
            signal_threshold: 0.02,
            parallel: true,
        }
    }
}

impl FitOptions {
    pub fn validate(&self) -> Result<()> {
        self.offres_grid.validate()?;
        self.r2star_grid.validate()?;
        if self.refine_iterations == 0 || self.icm_sweeps == 0 {
            return Err(Error::validation("iteration counts must be >= 1"));
        }
        if !(self.smoothness_lambda >= 0.0) || !(self.signal_threshold >= 0.0) {
            return Err(Error::validation(
                "smoothness lambda and signal threshold must be >= 0",
            ));
        }
        Ok(())
    }
}

/// Per-pixel fit result; water and fat are amplitude magnitudes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PixelFit {
    pub water: f64,
    pub fat: f64,
    pub r2star: f64,
    pub offres: f64,
    pub residual: f64,
}

impl PixelFit {
    fn zero(offres: f64) -> Self {
        PixelFit {
            water: 0.0,
            fat: 0.0,
            r2star: 0.0,
            offres,
            residual: 0.0,
        }
    }
}

/// Summary of one separation run, serialized as the fit log.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitLog {
    pub route: String,
    pub fitted_pixels: usize,
    pub masked_out_pixels: usize,
    pub icm_sweeps_used: usize,
    pub refine_iterations: usize,
    pub residual_mean: f64,
    pub residual_max: f64,
}

/// Field-map cost of one pixel over the off-resonance grid:
/// cost(Δf) = min over the R2* grid of the squared VARPRO residual.
pub fn fieldmap_cost(
    signal: &[Complex64],
    protocol: &AcquisitionProtocol,
    options: &FitOptions,
) -> Result<Vec<f64>> {
    options.validate()?;
    let engine = CostEngine::new(protocol, &options.offres_grid, &options.r2star_grid)?;
    if signal.len() != protocol.n_echoes() {
        return Err(Error::shape(format!(
            "signal has {} samples, protocol {}",
            signal.len(),
            protocol.n_echoes()
        )));
    }
    let mut out = vec![0.0; engine.n_labels()];
    engine.pixel_costs(signal, &mut CostScratch::default(), &mut out);
    Ok(out)
}

/// Golden-section minimization with a fixed iteration count; returns the
/// midpoint of the final bracket.
fn golden_min(mut lo: f64, mut hi: f64, iters: usize, mut f: impl FnMut(f64) -> f64) -> f64 {
    const INVPHI: f64 = 0.618_033_988_749_894_9;
    let mut c = hi - INVPHI * (hi - lo);
    let mut d = lo + INVPHI * (hi - lo);
    let mut fc = f(c);
    let mut fd = f(d);
    for _ in 0..iters {
        if fc <= fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - INVPHI * (hi - lo);
            fc = f(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + INVPHI * (hi - lo);
            fd = f(d);
        }
    }
    0.5 * (lo + hi)
}

/// Coordinate-descent refinement of one pixel from an off-resonance
/// initialization: alternating golden-section searches for Δf within
/// ±(grid step) of the current value and for R2* over its grid bounds.
pub fn refine_pixel(
    signal: &[Complex64],
    offres_init: f64,
    protocol: &AcquisitionProtocol,
    options: &FitOptions,
) -> Result<PixelFit> {
    options.validate()?;
    let fitter = PixelFitter::new(protocol);
    refine_pixel_with(&fitter, signal, offres_init, options)
}

fn refine_pixel_with(
    fitter: &PixelFitter,
    signal: &[Complex64],
    offres_init: f64,
    options: &FitOptions,
) -> Result<PixelFit> {
    if signal.iter().all(|s| s.norm_sqr() == 0.0) {
        return Ok(PixelFit::zero(offres_init));
    }

    let r2_lo = options.r2star_grid.min.max(0.0);
    let r2_hi = options.r2star_grid.max;
    let step = options.offres_grid.step;

    // Initial R2*: best grid point at the initial off-resonance.
    let mut r2 = r2_lo;
    let mut best = f64::INFINITY;
    for value in options.r2star_grid.values() {
        let value = value.max(0.0);
        let res = fitter.solve(signal, offres_init, value)?.residual;
        if res < best {
            best = res;
            r2 = value;
        }
    }

    let mut offres = offres_init;
    for _ in 0..options.refine_iterations {
        offres = golden_min(offres - step, offres + step, OFFRES_SEARCH_ITERS, |f| {
            fitter
                .solve(signal, f, r2)
                .map(|s| s.residual)
                .unwrap_or(f64::INFINITY)
        });
        r2 = golden_min(r2_lo, r2_hi, R2STAR_SEARCH_ITERS, |r| {
            fitter
                .solve(signal, offres, r)
                .map(|s| s.residual)
                .unwrap_or(f64::INFINITY)
        });
    }

    let r2 = r2.clamp(0.0, r2_hi);
    let sol = fitter.solve(signal, offres, r2)?;
    Ok(PixelFit {
        water: sol.water.norm(),
        fat: sol.fat.norm(),
        r2star: r2,
        offres,
        residual: sol.residual,
    })
}

fn magnitude_mask(series: &EchoSeries, threshold: f64) -> Array2<bool> {
    let (n, h, w) = series.dims();
    let mut mask = Array2::from_elem((h, w), false);
    for y in 0..h {
        for x in 0..w {
            let mean: f64 = (0..n).map(|e| series.data[[e, y, x]].norm()).sum::<f64>() / n as f64;
            mask[[y, x]] = mean >= threshold;
        }
    }
    mask
}

fn collect_pixel<T: Send, F: Fn(usize, usize) -> T + Sync>(
    h: usize,
    w: usize,
    parallel: bool,
    f: F,
) -> Vec<T> {
    if parallel {
        (0..h * w)
            .into_par_iter()
            .map(|i| f(i / w, i % w))
            .collect()
    } else {
        (0..h * w).map(|i| f(i / w, i % w)).collect()
    }
}

/// Full model-based separation of an echo series into parameter maps.
pub fn separate(series: &EchoSeries, options: &FitOptions) -> Result<ParameterMaps> {
    separate_full(series, options).map(|(maps, _)| maps)
}

/// [`separate`] plus the run log.
pub fn separate_full(
    series: &EchoSeries,
    options: &FitOptions,
) -> Result<(ParameterMaps, FitLog)> {
    options.validate()?;
    let (_, h, w) = series.dims();
    let mask = magnitude_mask(series, options.signal_threshold);
    if !mask.iter().any(|&m| m) {
        return Err(Error::validation(
            "all pixels below the signal threshold; nothing to fit",
        ));
    }

    let engine = CostEngine::new(&series.protocol, &options.offres_grid, &options.r2star_grid)?;
    let g = engine.n_labels();

    // Cost volume, pixel-parallel; masked-out pixels stay zero.
    let rows = collect_pixel(h, w, options.parallel, |y, x| {
        if !mask[[y, x]] {
            return vec![0.0; g];
        }
        let signal = series.pixel(y, x);
        let mut out = vec![0.0; g];
        engine.pixel_costs(&signal, &mut CostScratch::default(), &mut out);
        out
    });
    let mut cost_volume = Array3::zeros((h, w, g));
    for (i, row) in rows.into_iter().enumerate() {
        let (y, x) = (i / w, i % w);
        for (l, c) in row.into_iter().enumerate() {
            cost_volume[[y, x, l]] = c;
        }
    }

    let icm = regularize_fieldmap(
        &cost_volume,
        &mask,
        engine.offres_values(),
        options.smoothness_lambda,
        options.icm_sweeps,
    )?;

    let fitter = PixelFitter::new(&series.protocol);
    let fits = collect_pixel(h, w, options.parallel, |y, x| {
        if !mask[[y, x]] {
            return Ok(PixelFit::zero(0.0));
        }
        let signal = series.pixel(y, x);
        refine_pixel_with(&fitter, &signal, icm.offres[[y, x]], options)
    });

    let mut maps = ParameterMaps::zeros(h, w);
    maps.mask = mask;
    let mut residual_sum = 0.0;
    let mut residual_max = 0.0f64;
    let mut fitted = 0usize;
    for (i, fit) in fits.into_iter().enumerate() {
        let fit = fit?;
        let (y, x) = (i / w, i % w);
        if maps.mask[[y, x]] {
            maps.water[[y, x]] = fit.water;
            maps.fat[[y, x]] = fit.fat;
            maps.r2star[[y, x]] = fit.r2star;
            maps.offres[[y, x]] = fit.offres;
            residual_sum += fit.residual;
            residual_max = residual_max.max(fit.residual);
            fitted += 1;
        }
    }
    maps.validate()?;

    let log = FitLog {
        route: "full".into(),
        fitted_pixels: fitted,
        masked_out_pixels: h * w - fitted,
        icm_sweeps_used: icm.sweeps_used,
        refine_iterations: options.refine_iterations,
        residual_mean: residual_sum / fitted as f64,
        residual_max,
    };
    Ok((maps, log))
}

/// Bipolar-robust separation: fit the even-index and odd-index echo
/// subsets independently (each with its own TE sub-list) and average the
/// four output maps pixelwise. The averaging is unconditional; the mask
/// is the intersection of the subset masks.
pub fn separate_even_odd(series: &EchoSeries, options: &FitOptions) -> Result<ParameterMaps> {
    separate_even_odd_full(series, options).map(|(maps, _)| maps)
}

pub fn separate_even_odd_full(
    series: &EchoSeries,
    options: &FitOptions,
) -> Result<(ParameterMaps, FitLog)> {
    let n = series.dims().0;
    if n < 4 {
        return Err(Error::validation(format!(
            "even/odd separation needs at least 4 echoes, got {n}"
        )));
    }
    let even: Vec<usize> = (0..n).step_by(2).collect();
    let odd: Vec<usize> = (1..n).step_by(2).collect();
    let even_series = series.subset(&even)?;
    let odd_series = series.subset(&odd)?;
    // Halving the echo count doubles the spacing and halves the aliasing
    // period; clamp each subset's search grid to its own unambiguous
    // range so exactly aliased duplicates of the true field fall outside
    // the grid instead of tying with it.
    let even_options = clamp_grid_to_alias_range(options, &even_series.protocol);
    let odd_options = clamp_grid_to_alias_range(options, &odd_series.protocol);
    let (maps_even, log_even) = separate_full(&even_series, &even_options)?;
    let (maps_odd, log_odd) = separate_full(&odd_series, &odd_options)?;

    let mut maps = ParameterMaps::zeros(series.dims().1, series.dims().2);
    maps.water = 0.5 * (&maps_even.water + &maps_odd.water);
    maps.fat = 0.5 * (&maps_even.fat + &maps_odd.fat);
    maps.r2star = 0.5 * (&maps_even.r2star + &maps_odd.r2star);
    maps.offres = 0.5 * (&maps_even.offres + &maps_odd.offres);
    ndarray::Zip::from(&mut maps.mask)
        .and(&maps_even.mask)
        .and(&maps_odd.mask)
        .for_each(|m, &a, &b| *m = a && b);
    maps.validate()?;

    let log = FitLog {
        route: "even_odd".into(),
        fitted_pixels: log_even.fitted_pixels.min(log_odd.fitted_pixels),
        masked_out_pixels: log_even.masked_out_pixels.max(log_odd.masked_out_pixels),
        icm_sweeps_used: log_even.icm_sweeps_used.max(log_odd.icm_sweeps_used),
        refine_iterations: options.refine_iterations,
        residual_mean: 0.5 * (log_even.residual_mean + log_odd.residual_mean),
        residual_max: log_even.residual_max.max(log_odd.residual_max),
    };
    Ok((maps, log))
}

/// Restrict the off-resonance grid to ±1/(2·ΔTE) for a uniformly spaced
/// protocol (the range within which the field map is unambiguous). Grids
/// already inside that range, and non-uniform protocols, pass through.
fn clamp_grid_to_alias_range(
    options: &FitOptions,
    protocol: &AcquisitionProtocol,
) -> FitOptions {
    let te = &protocol.echo_times_s;
    if te.len() < 2 {
        return *options;
    }
    let dte = te[1] - te[0];
    let uniform = te.windows(2).all(|w| (w[1] - w[0] - dte).abs() < 1e-12);
    if !uniform {
        return *options;
    }
    let half_period = 0.5 / dte;
    let grid = options.offres_grid;
    if grid.max <= half_period && grid.min >= -half_period {
        return *options;
    }
    FitOptions {
        offres_grid: GridSpec {
            min: grid.min.max(-half_period),
            max: grid.max.min(half_period),
            step: grid.step,
        },
        ..*options
    }
}

/// Max per-pixel errors (PDFF, R2*, off-resonance) of a fit against
/// ground truth on the truth support.
pub fn support_errors(fit: &ParameterMaps, truth: &ParameterMaps) -> (f64, f64, f64) {
    let pdff = |maps: &ParameterMaps, y: usize, x: usize| {
        let s = maps.water[[y, x]] + maps.fat[[y, x]];
        if s > 0.0 {
            maps.fat[[y, x]] / s
        } else {
            0.0
        }
    };
    let mut pdff_max = 0.0f64;
    let mut r2_max = 0.0f64;
    let mut offres_max = 0.0f64;
    for ((y, x), &inside) in truth.mask.indexed_iter() {
        if !inside {
            continue;
        }
        pdff_max = pdff_max.max((pdff(fit, y, x) - pdff(truth, y, x)).abs());
        r2_max = r2_max.max((fit.r2star[[y, x]] - truth.r2star[[y, x]]).abs());
        offres_max = offres_max.max((fit.offres[[y, x]] - truth.offres[[y, x]]).abs());
    }
    (pdff_max, r2_max, offres_max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::{
        apply_bipolar_error, generate_phantom, simulate_pixel, simulate_series, BipolarErrorSpec,
        Ellipse, FatLesion, Hemorrhage, PhantomSpec,
    };
    use ndarray::Array3;

    fn small_options() -> FitOptions {
        FitOptions::default()
    }

    #[test]
    fn refine_recovers_noiseless_pixel() {
        let p = AcquisitionProtocol::default_cardiac();
        let signal = simulate_pixel(0.65, 0.35, 47.0, 23.0, &p).unwrap();
        let options = small_options();
        let fit = refine_pixel(&signal, 23.0, &p, &options).unwrap();
        assert!((fit.water - 0.65).abs() < 1e-6, "water {}", fit.water);
        assert!((fit.fat - 0.35).abs() < 1e-6, "fat {}", fit.fat);
        assert!((fit.r2star - 47.0).abs() < 0.01, "r2 {}", fit.r2star);
        assert!((fit.offres - 23.0).abs() < 0.01, "offres {}", fit.offres);
    }

    #[test]
    fn refine_recovers_from_displaced_init() {
        let p = AcquisitionProtocol::default_cardiac();
        let signal = simulate_pixel(0.65, 0.35, 47.0, 23.0, &p).unwrap();
        let fit = refine_pixel(&signal, 24.5, &p, &small_options()).unwrap();
        assert!((fit.water - 0.65).abs() < 1e-6);
        assert!((fit.fat - 0.35).abs() < 1e-6);
        assert!((fit.r2star - 47.0).abs() < 0.01);
        assert!((fit.offres - 23.0).abs() < 0.01);
    }

    #[test]
    fn refine_zero_signal_degenerate_output() {
        let p = AcquisitionProtocol::default_cardiac();
        let signal = vec![Complex64::default(); 12];
        let fit = refine_pixel(&signal, 12.5, &p, &small_options()).unwrap();
        assert_eq!(
            fit,
            PixelFit {
                water: 0.0,
                fat: 0.0,
                r2star: 0.0,
                offres: 12.5,
                residual: 0.0
            }
        );
    }

    fn phantom_32() -> PhantomSpec {
        PhantomSpec {
            height: 32,
            width: 32,
            torso: Ellipse {
                cx: 16.0,
                cy: 16.0,
                a: 13.0,
                b: 10.0,
                rotation: 0.0,
            },
            ventricle: Ellipse {
                cx: 17.0,
                cy: 15.0,
                a: 3.5,
                b: 3.0,
                rotation: 0.3,
            },
            myo_thickness: 2.5,
            rim_thickness: 1.5,
            fat_lesions: vec![FatLesion {
                cx: 20.5,
                cy: 12.0,
                radius: 1.5,
                pdff: 0.4,
            }],
            hemorrhages: vec![Hemorrhage {
                cx: 13.5,
                cy: 16.5,
                radius: 1.5,
                r2star: 150.0,
            }],
            ..PhantomSpec::default_64()
        }
    }

    #[test]
    fn separate_round_trips_a_phantom() {
        let p = AcquisitionProtocol::default_cardiac();
        let truth = generate_phantom(&phantom_32(), 5).unwrap();
        let series = simulate_series(&truth, &p).unwrap();
        let maps = separate(&series, &small_options()).unwrap();
        let (pdff_err, r2_err, offres_err) = support_errors(&maps, &truth);
        assert!(pdff_err <= 1e-3, "pdff error {pdff_err}");
        assert!(r2_err <= 1.0, "r2 error {r2_err}");
        assert!(offres_err <= 1.0, "offres error {offres_err}");
    }

    #[test]
    fn separate_water_only_has_no_fat() {
        let p = AcquisitionProtocol::default_cardiac();
        let mut maps = ParameterMaps::zeros(12, 12);
        for y in 3..9 {
            for x in 3..9 {
                maps.water[[y, x]] = 1.0;
                maps.r2star[[y, x]] = 30.0;
                maps.offres[[y, x]] = 40.0;
                maps.mask[[y, x]] = true;
            }
        }
        let series = simulate_series(&maps, &p).unwrap();
        let fit = separate(&series, &small_options()).unwrap();
        for ((y, x), &inside) in maps.mask.indexed_iter() {
            if inside {
                assert!(fit.fat[[y, x]] <= 1e-6, "fat at ({y},{x}) = {}", fit.fat[[y, x]]);
            }
        }
    }

    #[test]
    fn separate_deterministic_and_parallel_matches_sequential() {
        let p = AcquisitionProtocol::default_cardiac();
        let mut spec = phantom_32();
        spec.height = 24;
        spec.width = 24;
        spec.torso = Ellipse {
            cx: 12.0,
            cy: 12.0,
            a: 9.0,
            b: 7.0,
            rotation: 0.1,
        };
        spec.ventricle = Ellipse {
            cx: 12.5,
            cy: 11.5,
            a: 2.5,
            b: 2.2,
            rotation: 0.0,
        };
        spec.myo_thickness = 2.0;
        spec.rim_thickness = 1.0;
        spec.fat_lesions.clear();
        spec.hemorrhages.clear();
        let truth = generate_phantom(&spec, 2).unwrap();
        let series = simulate_series(&truth, &p).unwrap();
        let par = separate(&series, &FitOptions { parallel: true, ..FitOptions::default() }).unwrap();
        let seq = separate(&series, &FitOptions { parallel: false, ..FitOptions::default() }).unwrap();
        assert_eq!(par, seq);
        let again = separate(&series, &FitOptions { parallel: true, ..FitOptions::default() }).unwrap();
        assert_eq!(par, again);
    }

    #[test]
    fn even_odd_requires_four_echoes() {
        let p = AcquisitionProtocol::new(
            vec![2.4e-3, 3.6e-3, 4.8e-3],
            1.5,
            crate::protocol::FatSpectrum::six_peak_liver(),
            false,
        )
        .unwrap();
        let series = EchoSeries::new(Array3::zeros((3, 8, 8)), p).unwrap();
        assert!(matches!(
            separate_even_odd(&series, &FitOptions::default()),
            Err(Error::Validation(_))
        ));
    }

    /// Echo-parity phase with a readout ramp: per pixel the even echoes
    /// carry a constant alternating phase phi(x) = phi0 + phi1·x. Where
    /// phi crosses π/2 the swapped field-map basin (one half aliasing
    /// period away) overtakes the true one and the full-series fit jumps
    /// by hundreds of Hz. The even/odd fits see only a constant phase per
    /// pixel, absorb it into the complex amplitudes, and stay accurate.
    #[test]
    fn even_odd_cancels_bipolar_phase() {
        let p = AcquisitionProtocol::default_cardiac();
        let mut maps = ParameterMaps::zeros(8, 64);
        for y in 2..6 {
            for x in 4..60 {
                maps.water[[y, x]] = 0.8;
                maps.fat[[y, x]] = 0.1;
                maps.r2star[[y, x]] = 30.0;
                maps.offres[[y, x]] = 20.0;
                maps.mask[[y, x]] = true;
            }
        }
        let clean = simulate_series(&maps, &p).unwrap();
        let corrupted =
            apply_bipolar_error(&clean, &BipolarErrorSpec { phi0: 0.5, phi1: 0.03 }).unwrap();
        let options = small_options();

        let full = separate(&corrupted, &options).unwrap();
        let eo = separate_even_odd(&corrupted, &options).unwrap();
        let (_, _, full_offres_err) = support_errors(&full, &maps);
        let (_, _, eo_offres_err) = support_errors(&eo, &maps);
        assert!(
            full_offres_err > 10.0,
            "full-series fit unexpectedly robust: {full_offres_err} Hz"
        );
        assert!(eo_offres_err <= 2.0, "even/odd error {eo_offres_err} Hz");
    }

    /// On a clean series the even/odd average recovers the ground truth to
    /// the same tolerances as the full fit.
    #[test]
    fn even_odd_matches_full_on_clean_series() {
        let p = AcquisitionProtocol::default_cardiac();
        let mut maps = ParameterMaps::zeros(10, 10);
        for y in 2..8 {
            for x in 2..8 {
                maps.water[[y, x]] = 0.7;
                maps.fat[[y, x]] = 0.3;
                maps.r2star[[y, x]] = 45.0;
                maps.offres[[y, x]] = -35.0;
                maps.mask[[y, x]] = true;
            }
        }
        let series = simulate_series(&maps, &p).unwrap();
        let options = small_options();
        let eo = separate_even_odd(&series, &options).unwrap();
        let (pdff_err, r2_err, offres_err) = support_errors(&eo, &maps);
        assert!(pdff_err <= 1e-3, "pdff {pdff_err}");
        assert!(r2_err <= 1.0, "r2 {r2_err}");
        assert!(offres_err <= 1.0, "offres {offres_err}");
    }
}
