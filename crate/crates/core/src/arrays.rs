//! Uniform planar array manifold shared by the mBS, the UEs and the RIS.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Direction;
use crate::linalg::{kron, ComplexMatrix};

/// Speed of light in m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

pub fn wavelength_for(carrier_hz: f64) -> f64 {
    SPEED_OF_LIGHT / carrier_hz
}

/// `n_x × n_z` planar array lying along the x and z axes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UpaConfig {
    pub n_x: usize,
    pub n_z: usize,
    pub element_spacing: f64,
    pub wavelength: f64,
}

impl UpaConfig {
    /// Half-wavelength spaced array.
    pub fn half_wavelength(n_x: usize, n_z: usize, wavelength: f64) -> Self {
        Self { n_x, n_z, element_spacing: wavelength / 2.0, wavelength }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_x == 0 || self.n_z == 0 {
            return Err(Error::Domain(format!("array must have at least one element, got {}x{}", self.n_x, self.n_z)));
        }
        if !(self.element_spacing > 0.0 && self.wavelength > 0.0) {
            return Err(Error::Domain("element spacing and wavelength must be positive".into()));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.n_x * self.n_z
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Phase progression per element, `k = 2πd/λ`.
    pub fn wavenumber_spacing(&self) -> f64 {
        2.0 * PI * self.element_spacing / self.wavelength
    }
}

/// Array response `a_x ⊗ a_z`; entry `(m_x, m_z)` sits at index `m_x·n_z + m_z`.
pub fn steering_vector(cfg: &UpaConfig, azimuth: f64, elevation: f64) -> ComplexMatrix {
    let k = cfg.wavenumber_spacing();
    let ux = azimuth.sin() * elevation.sin();
    let uz = elevation.cos();
    let a_x = ComplexMatrix::column((0..cfg.n_x).map(|m| Complex64::from_polar(1.0, k * m as f64 * ux)).collect());
    let a_z = ComplexMatrix::column((0..cfg.n_z).map(|m| Complex64::from_polar(1.0, k * m as f64 * uz)).collect());
    kron(&a_x, &a_z)
}

pub fn steering_toward(cfg: &UpaConfig, dir: Direction) -> ComplexMatrix {
    steering_vector(cfg, dir.azimuth, dir.elevation)
}

/// Unit-norm beam steered at `(azimuth, elevation)`.
pub fn normalized_beamformer(cfg: &UpaConfig, azimuth: f64, elevation: f64) -> ComplexMatrix {
    let scale = 1.0 / (cfg.len() as f64).sqrt();
    steering_vector(cfg, azimuth, elevation).scale(Complex64::new(scale, 0.0))
}

pub fn beam_toward(cfg: &UpaConfig, dir: Direction) -> ComplexMatrix {
    normalized_beamformer(cfg, dir.azimuth, dir.elevation)
}
