//! RIS reflection profile, its array-factor scalar χ and the closed-form
//! phase profile that maximises |χ| from angles alone.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::geometry::{wrap_azimuth, Direction};
use crate::linalg::ComplexMatrix;

/// Per-element phases of an `m_x × m_z` RIS, row-major in `(m_x, m_z)` to
/// match the Kronecker ordering of the steering vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RisPhaseMatrix {
    m_x: usize,
    m_z: usize,
    phases: Vec<f64>,
}

impl RisPhaseMatrix {
    pub fn zeros(m_x: usize, m_z: usize) -> Self {
        Self { m_x, m_z, phases: vec![0.0; m_x * m_z] }
    }

    pub fn from_fn(m_x: usize, m_z: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut phases = Vec::with_capacity(m_x * m_z);
        for mx in 0..m_x {
            for mz in 0..m_z {
                phases.push(f(mx, mz));
            }
        }
        Self { m_x, m_z, phases }
    }

    pub fn grid(&self) -> (usize, usize) {
        (self.m_x, self.m_z)
    }

    pub fn len(&self) -> usize {
        self.phases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phases.is_empty()
    }

    pub fn phase(&self, m_x: usize, m_z: usize) -> f64 {
        self.phases[m_x * self.m_z + m_z]
    }

    pub fn phases(&self) -> &[f64] {
        &self.phases
    }

    pub fn phases_mut(&mut self) -> &mut [f64] {
        &mut self.phases
    }
}

/// Phase the incident/reflected plane waves impose on element `(m_x, m_z)`
/// relative to element `(0, 0)`, before the RIS adds its own shift.
fn geometric_phase(m_x: usize, m_z: usize, incident: Direction, reflected: Direction, k: f64) -> f64 {
    let dz = incident.elevation.cos() - reflected.elevation.cos();
    let dx = incident.azimuth.sin() * incident.elevation.sin() - reflected.azimuth.sin() * reflected.elevation.sin();
    k * (m_z as f64 * dz + m_x as f64 * dx)
}

/// `χ = a_M(out)^H · Φ · a_M(in)`, expanded element by element.
pub fn chi(phases: &RisPhaseMatrix, incident: Direction, reflected: Direction, k: f64) -> Complex64 {
    let mut acc = Complex64::new(0.0, 0.0);
    for mx in 0..phases.m_x {
        for mz in 0..phases.m_z {
            let total = geometric_phase(mx, mz, incident, reflected, k) + phases.phase(mx, mz);
            acc += Complex64::from_polar(1.0, total);
        }
    }
    acc
}

/// Phase profile that cancels every geometric phase term, so all summands of
/// χ add coherently and `|χ| = M`.
pub fn optimal_phases(incident: Direction, reflected: Direction, grid: (usize, usize), k: f64) -> RisPhaseMatrix {
    RisPhaseMatrix::from_fn(grid.0, grid.1, |mx, mz| {
        wrap_azimuth(-geometric_phase(mx, mz, incident, reflected, k))
    })
}

/// Diagonal reflection matrix `diag(e^{jφ})`.
pub fn realize(phases: &RisPhaseMatrix) -> ComplexMatrix {
    let diag: Vec<Complex64> = phases.phases.iter().map(|&p| Complex64::from_polar(1.0, p)).collect();
    ComplexMatrix::diagonal(&diag)
}
