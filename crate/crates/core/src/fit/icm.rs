//! Field-map label smoothing by iterated conditional modes.
//!
//! Energy over labelled pixels p with 4-connected neighbor pairs (p, q):
//!
//! ```text
//! E = Σ_p ncost(p, l_p) + λ · Σ_(p,q) ((f(l_p) − f(l_q)) / span)²
//! ```
//!
//! where ncost is the per-pixel cost normalized by its own maximum and
//! span is the full off-resonance grid range; both normalizations make
//! the default λ scale-free (the Hz⁻² units of λ are absorbed here).
//! Pixels start at their own argmin label, then raster and reverse-raster
//! sweeps update each label given its neighbors until no label changes.
//! All ties break toward the label with smaller |off-resonance|.

use crate::error::{Error, Result};
use ndarray::{Array2, Array3};

pub struct IcmOutcome {
    /// Off-resonance in Hz; 0 outside the mask.
    pub offres: Array2<f64>,
    /// Chosen label indices (usize::MAX outside the mask).
    pub labels: Array2<usize>,
    /// Number of raster+reverse sweep pairs actually executed.
    pub sweeps_used: usize,
}

/// `true` when label `a` beats label `b` under the tie rule.
fn beats(cost_a: f64, f_a: f64, cost_b: f64, f_b: f64) -> bool {
    cost_a < cost_b || (cost_a == cost_b && f_a.abs() < f_b.abs())
}

pub fn regularize_fieldmap(
    cost_volume: &Array3<f64>,
    mask: &Array2<bool>,
    offres_values: &[f64],
    smoothness_lambda: f64,
    icm_sweeps: usize,
) -> Result<IcmOutcome> {
    let (h, w, g) = cost_volume.dim();
    if mask.dim() != (h, w) {
        return Err(Error::shape("cost volume and mask dimensions differ"));
    }
    if offres_values.len() != g || g == 0 {
        return Err(Error::shape(format!(
            "cost volume has {g} labels but grid lists {}",
            offres_values.len()
        )));
    }
    if !mask.iter().any(|&m| m) {
        return Err(Error::validation("empty mask: no pixels to label"));
    }
    if !(smoothness_lambda >= 0.0) {
        return Err(Error::validation("smoothness lambda must be >= 0"));
    }

    let span = offres_values[g - 1] - offres_values[0];
    let inv_span_sq = if span > 0.0 { 1.0 / (span * span) } else { 0.0 };
    let lambda = smoothness_lambda * inv_span_sq;

    // Per-pixel max-normalized data costs.
    let mut ncost = cost_volume.clone();
    for y in 0..h {
        for x in 0..w {
            if !mask[[y, x]] {
                continue;
            }
            let mut peak = 0.0f64;
            for l in 0..g {
                peak = peak.max(ncost[[y, x, l]]);
            }
            if peak > 0.0 {
                for l in 0..g {
                    ncost[[y, x, l]] /= peak;
                }
            }
        }
    }

    // Initialization: independent per-pixel argmin under the tie rule.
    let mut labels = Array2::from_elem((h, w), usize::MAX);
    for y in 0..h {
        for x in 0..w {
            if !mask[[y, x]] {
                continue;
            }
            let mut best = 0usize;
            for l in 1..g {
                if beats(
                    ncost[[y, x, l]],
                    offres_values[l],
                    ncost[[y, x, best]],
                    offres_values[best],
                ) {
                    best = l;
                }
            }
            labels[[y, x]] = best;
        }
    }

    let neighbors = |y: usize, x: usize| {
        let mut out = [(0usize, 0usize); 4];
        let mut count = 0;
        if y > 0 {
            out[count] = (y - 1, x);
            count += 1;
        }
        if y + 1 < h {
            out[count] = (y + 1, x);
            count += 1;
        }
        if x > 0 {
            out[count] = (y, x - 1);
            count += 1;
        }
        if x + 1 < w {
            out[count] = (y, x + 1);
            count += 1;
        }
        (out, count)
    };

    let order: Vec<(usize, usize)> = (0..h).flat_map(|y| (0..w).map(move |x| (y, x))).collect();
    let mut sweeps_used = 0;
    for _ in 0..icm_sweeps {
        sweeps_used += 1;
        let mut changed = 0usize;
        for pass in 0..2 {
            let iter: Box<dyn Iterator<Item = &(usize, usize)>> = if pass == 0 {
                Box::new(order.iter())
            } else {
                Box::new(order.iter().rev())
            };
            for &(y, x) in iter {
                if !mask[[y, x]] {
                    continue;
                }
                // Smoothness contribution is quadratic in f(l):
                // λ·Σ_q (f − f_q)² = λ·(k·f² − 2·f·Σf_q + Σf_q²); the
                // constant term cannot change the argmin and is dropped.
                let (nbrs, count) = neighbors(y, x);
                let mut k = 0.0;
                let mut sum_f = 0.0;
                for &(ny, nx) in &nbrs[..count] {
                    if mask[[ny, nx]] {
                        k += 1.0;
                        sum_f += offres_values[labels[[ny, nx]]];
                    }
                }
                let mut best = labels[[y, x]];
                let f_best = offres_values[best];
                let mut best_cost =
                    ncost[[y, x, best]] + lambda * (k * f_best * f_best - 2.0 * f_best * sum_f);
                for l in 0..g {
                    let f = offres_values[l];
                    let cost = ncost[[y, x, l]] + lambda * (k * f * f - 2.0 * f * sum_f);
                    if beats(cost, f, best_cost, offres_values[best]) {
                        best = l;
                        best_cost = cost;
                    }
                }
                if best != labels[[y, x]] {
                    labels[[y, x]] = best;
                    changed += 1;
                }
            }
        }
        if changed == 0 {
            break;
        }
    }

    let mut offres = Array2::zeros((h, w));
    for y in 0..h {
        for x in 0..w {
            if mask[[y, x]] {
                offres[[y, x]] = offres_values[labels[[y, x]]];
            }
        }
    }
    Ok(IcmOutcome {
        offres,
        labels,
        sweeps_used,
    })
}
