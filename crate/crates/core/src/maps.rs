//! Per-pixel parameter maps and complex echo stacks.

use crate::error::{Error, Result};
use crate::protocol::AcquisitionProtocol;
use ndarray::{Array2, Array3};
use num_complex::Complex64;

/// Per-pixel ground truth or estimates: water, fat, R2*, off-resonance.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterMaps {
    /// Water signal, arbitrary units, ≥ 0.
    pub water: Array2<f64>,
    /// Fat signal, arbitrary units, ≥ 0.
    pub fat: Array2<f64>,
    /// Effective transverse relaxation rate, s⁻¹, ≥ 0.
    pub r2star: Array2<f64>,
    /// Off-resonance, Hz.
    pub offres: Array2<f64>,
    /// Object support.
    pub mask: Array2<bool>,
}

impl ParameterMaps {
    pub fn new(
        water: Array2<f64>,
        fat: Array2<f64>,
        r2star: Array2<f64>,
        offres: Array2<f64>,
        mask: Array2<bool>,
    ) -> Result<Self> {
        let maps = ParameterMaps {
            water,
            fat,
            r2star,
            offres,
            mask,
        };
        maps.validate()?;
        Ok(maps)
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        ParameterMaps {
            water: Array2::zeros((height, width)),
            fat: Array2::zeros((height, width)),
            r2star: Array2::zeros((height, width)),
            offres: Array2::zeros((height, width)),
            mask: Array2::from_elem((height, width), false),
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        self.water.dim()
    }

    pub fn validate(&self) -> Result<()> {
        let dims = self.water.dim();
        if self.fat.dim() != dims
            || self.r2star.dim() != dims
            || self.offres.dim() != dims
            || self.mask.dim() != dims
        {
            return Err(Error::shape("parameter maps must share dimensions"));
        }
        for (name, map) in [("water", &self.water), ("fat", &self.fat), ("r2star", &self.r2star)] {
            if map.iter().any(|v| !v.is_finite() || *v < 0.0) {
                return Err(Error::validation(format!(
                    "{name} map must be finite and non-negative"
                )));
            }
        }
        if self.offres.iter().any(|v| !v.is_finite()) {
            return Err(Error::validation("offres map must be finite"));
        }
        Ok(())
    }
}

/// Complex image stack over echo index; output of the simulator and input
/// to both separation methods.
#[derive(Debug, Clone, PartialEq)]
pub struct EchoSeries {
    /// N×H×W complex samples, N = protocol echo count.
    pub data: Array3<Complex64>,
    pub protocol: AcquisitionProtocol,
}

impl EchoSeries {
    pub fn new(data: Array3<Complex64>, protocol: AcquisitionProtocol) -> Result<Self> {
        if data.dim().0 != protocol.n_echoes() {
            return Err(Error::shape(format!(
                "series has {} echoes but protocol lists {}",
                data.dim().0,
                protocol.n_echoes()
            )));
        }
        if data.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::validation("echo series contains non-finite values"));
        }
        Ok(EchoSeries { data, protocol })
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        self.data.dim()
    }

    /// The complex N-vector observed at one pixel.
    pub fn pixel(&self, y: usize, x: usize) -> Vec<Complex64> {
        (0..self.data.dim().0).map(|e| self.data[[e, y, x]]).collect()
    }

    /// Sub-series on the given echo indices with the matching sub-protocol.
    pub fn subset(&self, indices: &[usize]) -> Result<EchoSeries> {
        let protocol = self.protocol.subset(indices)?;
        let (_, h, w) = self.data.dim();
        let mut data = Array3::zeros((indices.len(), h, w));
        for (k, &e) in indices.iter().enumerate() {
            data.index_axis_mut(ndarray::Axis(0), k)
                .assign(&self.data.index_axis(ndarray::Axis(0), e));
        }
        EchoSeries::new(data, protocol)
    }
}
