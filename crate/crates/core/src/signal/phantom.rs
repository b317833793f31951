//! Procedural cardiac-style phantoms.
//!
//! A phantom is a torso ellipse containing a blood-pool ellipse wrapped in
//! a myocardial ring, optionally a subcutaneous fat rim, plus focal fat
//! lesions and hemorrhage-like R2* elevations placed on the ring. The
//! off-resonance map is a second-order 2D polynomial over normalized
//! coordinates.

use crate::error::{Error, Result};
use crate::maps::ParameterMaps;
use crate::rng::SeededRng;
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;

/// Ellipse in pixel coordinates, rotation in radians.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ellipse {
    pub cx: f64,
    pub cy: f64,
    pub a: f64,
    pub b: f64,
    pub rotation: f64,
}

impl Ellipse {
    pub fn contains(&self, x: f64, y: f64) -> bool {
        self.normalized_radius_sq(x, y) <= 1.0
    }

    /// ((u/a)² + (v/b)²) in the ellipse frame; ≤ 1 means inside.
    pub fn normalized_radius_sq(&self, x: f64, y: f64) -> f64 {
        let (dx, dy) = (x - self.cx, y - self.cy);
        let (s, c) = self.rotation.sin_cos();
        let u = dx * c + dy * s;
        let v = -dx * s + dy * c;
        (u / self.a).powi(2) + (v / self.b).powi(2)
    }

    /// Same ellipse grown by `t` pixels on both axes.
    pub fn grown(&self, t: f64) -> Ellipse {
        Ellipse {
            a: self.a + t,
            b: self.b + t,
            ..*self
        }
    }

    /// Boundary radius along direction `theta` (image frame), in pixels.
    pub fn radius_at(&self, theta: f64) -> f64 {
        let phi = theta - self.rotation;
        let (s, c) = phi.sin_cos();
        1.0 / ((c / self.a).powi(2) + (s / self.b).powi(2)).sqrt()
    }
}

/// Base signal values of one tissue class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TissueValues {
    pub water: f64,
    pub fat: f64,
    pub r2star: f64,
}

impl TissueValues {
    fn validate(&self, name: &str) -> Result<()> {
        if !(self.water >= 0.0) || !(self.fat >= 0.0) || !(self.r2star >= 0.0) {
            return Err(Error::validation(format!(
                "{name} tissue values must be non-negative"
            )));
        }
        Ok(())
    }
}

/// Focal fat deposition: a disk forced to the given PDFF target.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FatLesion {
    pub cx: f64,
    pub cy: f64,
    pub radius: f64,
    /// Target fat fraction fat/(water+fat) in [0, 1].
    pub pdff: f64,
}

/// Focal R2* elevation: a disk forced to the given rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hemorrhage {
    pub cx: f64,
    pub cy: f64,
    pub radius: f64,
    /// Target R2* in s⁻¹.
    pub r2star: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhantomSpec {
    pub height: usize,
    pub width: usize,
    pub torso: Ellipse,
    pub ventricle: Ellipse,
    /// Myocardial ring thickness around the ventricle, pixels.
    pub myo_thickness: f64,
    pub fat_lesions: Vec<FatLesion>,
    pub hemorrhages: Vec<Hemorrhage>,
    /// Subcutaneous fat layer along the torso boundary.
    pub fat_rim: bool,
    pub rim_thickness: f64,
    /// Coefficients (c00, c10, c01, c20, c11, c02) of the off-resonance
    /// polynomial over normalized coordinates u, v in [-1, 1], in Hz.
    pub offres_poly: [f64; 6],
    pub body: TissueValues,
    pub myocardium: TissueValues,
    pub blood: TissueValues,
    pub rim: TissueValues,
    /// Relative amplitude of the smooth multiplicative base-value jitter;
    /// 0 renders the spec with no randomization terms.
    pub base_jitter: f64,
}

impl PhantomSpec {
    /// Fixed 64×64 example phantom with one fat lesion and one hemorrhage.
    pub fn default_64() -> Self {
        PhantomSpec {
            height: 64,
            width: 64,
            torso: Ellipse {
                cx: 32.0,
                cy: 32.0,
                a: 26.0,
                b: 20.0,
                rotation: 0.0,
            },
            ventricle: Ellipse {
                cx: 34.0,
                cy: 30.0,
                a: 7.0,
                b: 6.0,
                rotation: 0.3,
            },
            myo_thickness: 5.0,
            fat_lesions: vec![FatLesion {
                cx: 41.0,
                cy: 24.0,
                radius: 2.5,
                pdff: 0.4,
            }],
            hemorrhages: vec![Hemorrhage {
                cx: 27.0,
                cy: 33.0,
                radius: 2.5,
                r2star: 150.0,
            }],
            fat_rim: true,
            rim_thickness: 3.0,
            offres_poly: [20.0, 15.0, -10.0, 8.0, 5.0, -6.0],
            body: TissueValues {
                water: 0.6,
                fat: 0.1,
                r2star: 35.0,
            },
            myocardium: TissueValues {
                water: 0.8,
                fat: 0.02,
                r2star: 30.0,
            },
            blood: TissueValues {
                water: 1.0,
                fat: 0.0,
                r2star: 20.0,
            },
            rim: TissueValues {
                water: 0.1,
                fat: 0.9,
                r2star: 40.0,
            },
            base_jitter: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.height < 8 || self.width < 8 {
            return Err(Error::validation("phantom must be at least 8×8"));
        }
        for t in [
            ("body", &self.body),
            ("myocardium", &self.myocardium),
            ("blood", &self.blood),
            ("rim", &self.rim),
        ] {
            t.1.validate(t.0)?;
        }
        if !(self.myo_thickness > 0.0) || !(self.rim_thickness >= 0.0) {
            return Err(Error::validation("ring thicknesses must be positive"));
        }
        if !(self.base_jitter >= 0.0 && self.base_jitter < 1.0) {
            return Err(Error::validation("base_jitter must be in [0, 1)"));
        }
        for l in &self.fat_lesions {
            if !(l.radius > 0.0) {
                return Err(Error::validation("lesion radius must be > 0"));
            }
            if !(0.0..=1.0).contains(&l.pdff) {
                return Err(Error::validation(format!(
                    "lesion pdff {} outside [0, 1]",
                    l.pdff
                )));
            }
            self.check_center_inside(l.cx, l.cy, "fat lesion")?;
        }
        for h in &self.hemorrhages {
            if !(h.radius > 0.0) {
                return Err(Error::validation("hemorrhage radius must be > 0"));
            }
            if !(h.r2star >= 0.0) {
                return Err(Error::validation("hemorrhage r2star must be >= 0"));
            }
            self.check_center_inside(h.cx, h.cy, "hemorrhage")?;
        }
        Ok(())
    }

    fn check_center_inside(&self, cx: f64, cy: f64, what: &str) -> Result<()> {
        if cx < 0.0 || cy < 0.0 || cx >= self.width as f64 || cy >= self.height as f64 {
            return Err(Error::validation(format!("{what} center outside the image")));
        }
        if !self.torso.contains(cx, cy) {
            return Err(Error::validation(format!("{what} center outside the support")));
        }
        Ok(())
    }

    /// Tissue class lookup, innermost structure first.
    fn tissue_at(&self, x: f64, y: f64) -> Option<&TissueValues> {
        if !self.torso.contains(x, y) {
            return None;
        }
        if self.ventricle.contains(x, y) {
            return Some(&self.blood);
        }
        if self.ventricle.grown(self.myo_thickness).contains(x, y) {
            return Some(&self.myocardium);
        }
        if self.fat_rim && !self.torso.grown(-self.rim_thickness).contains(x, y) {
            return Some(&self.rim);
        }
        Some(&self.body)
    }
}

/// Normalized coordinates in [-1, 1] for pixel (x, y).
fn norm_coords(x: usize, y: usize, width: usize, height: usize) -> (f64, f64) {
    let u = 2.0 * x as f64 / (width - 1) as f64 - 1.0;
    let v = 2.0 * y as f64 / (height - 1) as f64 - 1.0;
    (u, v)
}

fn eval_poly(c: &[f64; 6], u: f64, v: f64) -> f64 {
    c[0] + c[1] * u + c[2] * v + c[3] * u * u + c[4] * u * v + c[5] * v * v
}

/// Render a phantom spec into ground-truth parameter maps.
///
/// Deterministic in (spec, seed). The only randomized terms are two smooth
/// quadratic jitter fields scaled by `spec.base_jitter`: one multiplies
/// water and fat jointly (PDFF-preserving), one multiplies R2*. Lesion
/// disks are then forced to their PDFF targets and hemorrhage disks to
/// their R2* targets, so targets hold exactly regardless of jitter.
pub fn generate_phantom(spec: &PhantomSpec, seed: u64) -> Result<ParameterMaps> {
    spec.validate()?;
    let (h, w) = (spec.height, spec.width);
    let mut maps = ParameterMaps::zeros(h, w);

    let (signal_poly, r2_poly) = if spec.base_jitter > 0.0 {
        let draw = |stream: u64| {
            let mut rng = SeededRng::derive(seed, stream);
            let mut c = [0.0; 6];
            for v in c.iter_mut() {
                // /3 keeps |poly| ≲ 2 over the unit square
                *v = (2.0 * rng.uniform() - 1.0) / 3.0;
            }
            c
        };
        (Some(draw(0)), Some(draw(1)))
    } else {
        (None, None)
    };

    for y in 0..h {
        for x in 0..w {
            let (fx, fy) = (x as f64, y as f64);
            let Some(tissue) = spec.tissue_at(fx, fy) else {
                continue;
            };
            maps.mask[[y, x]] = true;
            let (u, v) = norm_coords(x, y, w, h);

            let mut water = tissue.water;
            let mut fat = tissue.fat;
            let mut r2star = tissue.r2star;
            if let Some(c) = &signal_poly {
                let g = (1.0 + spec.base_jitter * eval_poly(c, u, v)).max(0.05);
                water *= g;
                fat *= g;
            }
            if let Some(c) = &r2_poly {
                r2star = (r2star * (1.0 + spec.base_jitter * eval_poly(c, u, v))).max(0.0);
            }

            for lesion in &spec.fat_lesions {
                let d2 = (fx - lesion.cx).powi(2) + (fy - lesion.cy).powi(2);
                if d2 <= lesion.radius * lesion.radius {
                    let s = water + fat;
                    fat = lesion.pdff * s;
                    water = (1.0 - lesion.pdff) * s;
                }
            }
            for bleed in &spec.hemorrhages {
                let d2 = (fx - bleed.cx).powi(2) + (fy - bleed.cy).powi(2);
                if d2 <= bleed.radius * bleed.radius {
                    r2star = bleed.r2star;
                }
            }

            maps.water[[y, x]] = water;
            maps.fat[[y, x]] = fat;
            maps.r2star[[y, x]] = r2star;
            maps.offres[[y, x]] = eval_poly(&spec.offres_poly, u, v);
        }
    }
    maps.validate()?;
    Ok(maps)
}

/// Ranges for drawing randomized phantom specs for corpus generation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhantomRanges {
    pub image_size: usize,
    pub lesions: (usize, usize),
    pub lesion_radius: (f64, f64),
    pub pdff: (f64, f64),
    pub hemorrhages: (usize, usize),
    pub hemorrhage_radius: (f64, f64),
    pub hemorrhage_r2star: (f64, f64),
    /// Peak |off-resonance| over the support is drawn from this range, Hz.
    pub offres_peak_hz: (f64, f64),
    pub base_jitter: f64,
    pub fat_rim_probability: f64,
}

impl Default for PhantomRanges {
    fn default() -> Self {
        PhantomRanges {
            image_size: 64,
            lesions: (1, 3),
            lesion_radius: (2.0, 4.0),
            pdff: (0.1, 0.6),
            hemorrhages: (0, 2),
            hemorrhage_radius: (2.0, 4.0),
            hemorrhage_r2star: (80.0, 200.0),
            offres_peak_hz: (30.0, 150.0),
            base_jitter: 0.08,
            fat_rim_probability: 0.9,
        }
    }
}

/// Angular band of the myocardial ring reserved for the septum ROI, so
/// randomized lesions never overlap it (radians, image frame).
pub const SEPTUM_SECTOR: (f64, f64) = (TAU * 60.0 / 360.0, TAU * 120.0 / 360.0);

fn in_septum_band(theta: f64) -> bool {
    let t = theta.rem_euclid(TAU);
    // widened slightly so lesion disks cannot graze the sector
    t > SEPTUM_SECTOR.0 - 0.25 && t < SEPTUM_SECTOR.1 + 0.25
}

/// Draw a randomized phantom spec within `ranges`.
pub fn sample_phantom_spec(ranges: &PhantomRanges, rng: &mut SeededRng) -> PhantomSpec {
    let size = ranges.image_size as f64;
    let c = size / 2.0;
    let scale = size / 64.0;

    let torso = Ellipse {
        cx: c + rng.range(-2.0, 2.0) * scale,
        cy: c + rng.range(-2.0, 2.0) * scale,
        a: rng.range(23.0, 27.0) * scale,
        b: rng.range(17.0, 21.0) * scale,
        rotation: rng.range(-0.15, 0.15),
    };
    let ventricle = Ellipse {
        cx: torso.cx + rng.range(-2.0, 4.0) * scale,
        cy: torso.cy + rng.range(-3.0, 2.0) * scale,
        a: rng.range(6.0, 8.0) * scale,
        b: rng.range(5.0, 7.0) * scale,
        rotation: rng.range(-0.5, 0.5),
    };
    let myo_thickness = rng.range(4.0, 6.0) * scale;

    let place_on_ring = |rng: &mut SeededRng, radius: f64| {
        // rejection-sample an angle outside the septum band
        let mut theta = rng.range(0.0, TAU);
        while in_septum_band(theta) {
            theta = rng.range(0.0, TAU);
        }
        let r_inner = ventricle.radius_at(theta);
        let r_outer = ventricle.grown(myo_thickness).radius_at(theta);
        let r_mid = 0.5 * (r_inner + r_outer);
        let cx = ventricle.cx + r_mid * theta.cos();
        let cy = ventricle.cy + r_mid * theta.sin();
        (cx.clamp(radius, size - 1.0 - radius), cy.clamp(radius, size - 1.0 - radius))
    };

    let n_lesions = ranges.lesions.0 + rng.below((ranges.lesions.1 - ranges.lesions.0 + 1) as u64) as usize;
    let mut fat_lesions = Vec::with_capacity(n_lesions);
    for _ in 0..n_lesions {
        let radius = rng.range(ranges.lesion_radius.0, ranges.lesion_radius.1) * scale;
        let (cx, cy) = place_on_ring(rng, radius);
        fat_lesions.push(FatLesion {
            cx,
            cy,
            radius,
            pdff: rng.range(ranges.pdff.0, ranges.pdff.1),
        });
    }

    let n_bleeds =
        ranges.hemorrhages.0 + rng.below((ranges.hemorrhages.1 - ranges.hemorrhages.0 + 1) as u64) as usize;
    let mut hemorrhages = Vec::with_capacity(n_bleeds);
    for _ in 0..n_bleeds {
        let radius = rng.range(ranges.hemorrhage_radius.0, ranges.hemorrhage_radius.1) * scale;
        let (cx, cy) = place_on_ring(rng, radius);
        hemorrhages.push(Hemorrhage {
            cx,
            cy,
            radius,
            r2star: rng.range(ranges.hemorrhage_r2star.0, ranges.hemorrhage_r2star.1),
        });
    }

    // Draw polynomial shape, then rescale so the max |offres| over the
    // unit square equals the drawn peak (stays inside the target band).
    let mut poly = [0.0; 6];
    poly[0] = rng.range(-0.5, 0.5);
    for v in poly.iter_mut().skip(1) {
        *v = rng.range(-1.0, 1.0);
    }
    let mut peak = 0.0f64;
    let probe = 17;
    for i in 0..probe {
        for j in 0..probe {
            let u = 2.0 * i as f64 / (probe - 1) as f64 - 1.0;
            let v = 2.0 * j as f64 / (probe - 1) as f64 - 1.0;
            peak = peak.max(eval_poly(&poly, u, v).abs());
        }
    }
    let target_peak = rng.range(ranges.offres_peak_hz.0, ranges.offres_peak_hz.1);
    if peak > 0.0 {
        let s = target_peak / peak;
        for v in poly.iter_mut() {
            *v *= s;
        }
    }

    let jit = |rng: &mut SeededRng, lo: f64, hi: f64| rng.range(lo, hi);
    PhantomSpec {
        height: ranges.image_size,
        width: ranges.image_size,
        torso,
        ventricle,
        myo_thickness,
        fat_lesions,
        hemorrhages,
        fat_rim: rng.uniform() < ranges.fat_rim_probability,
        rim_thickness: rng.range(2.5, 4.0) * scale,
        offres_poly: poly,
        body: TissueValues {
            water: jit(rng, 0.5, 0.7),
            fat: jit(rng, 0.05, 0.15),
            r2star: jit(rng, 30.0, 45.0),
        },
        myocardium: TissueValues {
            water: jit(rng, 0.7, 0.9),
            fat: jit(rng, 0.01, 0.04),
            r2star: jit(rng, 25.0, 40.0),
        },
        blood: TissueValues {
            water: jit(rng, 0.9, 1.1),
            fat: 0.0,
            r2star: jit(rng, 15.0, 25.0),
        },
        rim: TissueValues {
            water: jit(rng, 0.08, 0.15),
            fat: jit(rng, 0.8, 1.0),
            r2star: jit(rng, 35.0, 50.0),
        },
        base_jitter: ranges.base_jitter,
    }
}
