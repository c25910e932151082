//! Angle-steered transmit/receive beams and the zero-forcing receive combiner.

use num_complex::Complex64;

use crate::arrays::{beam_toward, UpaConfig};
use crate::error::{Error, Result};
use crate::geometry::{Hop, PathAngles};
use crate::linalg::{hermitian, matmul, solve, ComplexMatrix};

/// Unit-norm transmit and receive beams, one per served UE.
#[derive(Debug, Clone)]
pub struct BeamformerBank {
    pub transmit: Vec<ComplexMatrix>,
    pub receive: Vec<ComplexMatrix>,
}

impl BeamformerBank {
    pub fn len(&self) -> usize {
        self.transmit.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transmit.is_empty()
    }

    pub fn is_unit_norm(&self, tol: f64) -> bool {
        self.transmit.iter().chain(&self.receive).all(|v| (v.frobenius_norm() - 1.0).abs() <= tol)
    }
}

/// mBS beam: toward the UE on a direct path, toward the RIS otherwise.
pub fn transmit_beamformer(paths: &[PathAngles], cfg: &UpaConfig) -> Result<ComplexMatrix> {
    let first = paths
        .iter()
        .find(|p| matches!(p.hop, Hop::Direct | Hop::MbsToRis))
        .ok_or_else(|| Error::Contract("no hop departs from the mBS".into()))?;
    Ok(beam_toward(cfg, first.aod))
}

/// UE beam: toward the mBS on a direct path, toward the RIS otherwise.
pub fn receive_beamformer(paths: &[PathAngles], cfg: &UpaConfig) -> Result<ComplexMatrix> {
    let last = paths
        .iter()
        .find(|p| matches!(p.hop, Hop::Direct | Hop::RisToUe))
        .ok_or_else(|| Error::Contract("no hop arrives at the UE".into()))?;
    Ok(beam_toward(cfg, last.aoa))
}

/// Zero-forcing combiner `W` (`N × N_R`); row `n` is `w_n^H`.
///
/// Each row solves the Gram system of its own UE, `G_n = Λ_n·F` with
/// `F = [f_1 … f_N]`, giving `w_n^H Λ_n f_m = δ_nm`. `effective` holds the
/// `N_R × N_T` matrices `Λ_n` (already scaled by `√p`).
pub fn zf_receive_matrix(effective: &[ComplexMatrix], transmit: &[ComplexMatrix]) -> Result<ComplexMatrix> {
    let n = effective.len();
    if n == 0 || transmit.len() != n {
        return Err(Error::Contract(format!("{} channels but {} transmit beams", n, transmit.len())));
    }
    let n_r = effective[0].rows();
    if n_r < n {
        return Err(Error::Infeasible { receive_antennas: n_r, users: n });
    }
    let n_t = effective[0].cols();
    if effective.iter().any(|l| l.shape() != (n_r, n_t)) || transmit.iter().any(|f| f.shape() != (n_t, 1)) {
        return Err(Error::Shape("inconsistent channel or beam dimensions".into()));
    }
    let f = stack_columns(transmit);
    let mut w = ComplexMatrix::zeros(n, n_r);
    for (row, lambda) in effective.iter().enumerate() {
        let g = matmul(lambda, &f)?;
        let g_h = hermitian(&g);
        let gram = matmul(&g_h, &g)?;
        let pinv = solve(&gram, &g_h)?;
        for j in 0..n_r {
            w[(row, j)] = pinv[(row, j)];
        }
    }
    Ok(w)
}

/// `[w_n^H Λ_n f_m]_{n,m}`; the identity for an exact ZF combiner.
pub fn zf_response(w: &ComplexMatrix, effective: &[ComplexMatrix], transmit: &[ComplexMatrix]) -> Result<ComplexMatrix> {
    let n = effective.len();
    let f = stack_columns(transmit);
    let mut out = ComplexMatrix::zeros(n, transmit.len());
    for (row, lambda) in effective.iter().enumerate() {
        let w_row = ComplexMatrix::row(w.row_slice(row).to_vec());
        let resp = matmul(&matmul(&w_row, lambda)?, &f)?;
        for m in 0..transmit.len() {
            out[(row, m)] = resp[(0, m)];
        }
    }
    Ok(out)
}

/// Receive columns `w_n` with unit norm, taken from the rows of `W`.
pub fn normalized_receive_beams(w: &ComplexMatrix) -> Vec<ComplexMatrix> {
    (0..w.rows())
        .map(|i| {
            let row = w.row_slice(i);
            let norm = row.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
            // w_n is the conjugate of the stored row w_n^H
            ComplexMatrix::column(row.iter().map(|v| v.conj() / norm).collect())
        })
        .collect()
}

fn stack_columns(cols: &[ComplexMatrix]) -> ComplexMatrix {
    let rows = cols.first().map_or(0, |c| c.rows());
    ComplexMatrix::from_fn(rows, cols.len(), |i, j| cols[j][(i, 0)])
}

/// `|w^H Ω f|`.
pub fn beam_gain(w: &ComplexMatrix, omega: &ComplexMatrix, f: &ComplexMatrix) -> Result<f64> {
    let of = matmul(omega, f)?;
    Ok(w.inner(&of)?.norm())
}

pub fn scale_real(m: &ComplexMatrix, s: f64) -> ComplexMatrix {
    m.scale(Complex64::new(s, 0.0))
}
