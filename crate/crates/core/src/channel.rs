//! Dominant-path geometric channels: direct LoS, mBS→RIS, RIS→UE and the
//! cascade through the RIS reflection matrix.

use std::f64::consts::{PI, TAU};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::arrays::{steering_toward, UpaConfig};
use crate::error::{Error, Result};
use crate::geometry::{BlockageFlag, Hop, PathAngles};
use crate::linalg::{hermitian, matmul, ComplexMatrix};
use crate::ris::{realize, RisPhaseMatrix};

/// Free-space amplitude `λ/(4πd)` with a seeded uniform phase.
pub fn free_space_gain(distance: f64, wavelength: f64, seed: u64) -> Result<Complex64> {
    if !(distance > 0.0) {
        return Err(Error::Domain(format!("path length must be positive, got {distance}")));
    }
    let magnitude = wavelength / (4.0 * PI * distance);
    let phase = ChaCha8Rng::seed_from_u64(seed).gen_range(0.0..TAU);
    Ok(Complex64::from_polar(magnitude, phase))
}

/// `α · a_rx(aoa) · a_tx(aod)^H` for one hop.
pub fn hop_channel(gain: Complex64, tx: &UpaConfig, rx: &UpaConfig, angles: &PathAngles) -> ComplexMatrix {
    let a_rx = steering_toward(rx, angles.aoa);
    let a_tx = steering_toward(tx, angles.aod);
    matmul(&a_rx, &hermitian(&a_tx)).expect("column times row").scale(gain)
}

pub fn los_channel(gain: Complex64, tx: &UpaConfig, rx: &UpaConfig, angles: &PathAngles) -> Result<ComplexMatrix> {
    if angles.hop != Hop::Direct {
        return Err(Error::Contract(format!("LoS channel needs a direct hop, got {:?}", angles.hop)));
    }
    Ok(hop_channel(gain, tx, rx, angles))
}

/// `h2 · Φ · h1`.
pub fn cascade_channel(h2: &ComplexMatrix, phi: &RisPhaseMatrix, h1: &ComplexMatrix) -> Result<ComplexMatrix> {
    let reflect = realize(phi);
    if h2.cols() != reflect.rows() || h1.rows() != reflect.cols() {
        return Err(Error::Shape(format!(
            "cascade needs h2 with {m} columns and h1 with {m} rows, got {:?} and {:?}",
            h2.shape(),
            h1.shape(),
            m = reflect.rows()
        )));
    }
    matmul(&matmul(h2, &reflect)?, h1)
}

/// Channels of one UE. LoS UEs carry `h_los`; NLoS UEs carry both RIS hops.
#[derive(Debug, Clone)]
pub struct ChannelSet {
    pub h_los: Option<ComplexMatrix>,
    pub h1: Option<ComplexMatrix>,
    pub h2: Option<ComplexMatrix>,
    pub blockage: BlockageFlag,
    pub complex_gains: Vec<Complex64>,
}

impl ChannelSet {
    /// Effective `N_R × N_T` downlink matrix for a given RIS configuration
    /// (ignored for LoS UEs).
    pub fn effective(&self, phi: &RisPhaseMatrix) -> Result<ComplexMatrix> {
        match self.blockage {
            BlockageFlag::Los => Ok(self.h_los.clone().expect("LoS channel present")),
            BlockageFlag::Nlos => cascade_channel(
                self.h2.as_ref().expect("RIS-UE hop present"),
                phi,
                self.h1.as_ref().expect("mBS-RIS hop present"),
            ),
        }
    }
}

/// Array configuration of all three device types.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ArraySet {
    pub mbs: UpaConfig,
    pub ue: UpaConfig,
    pub ris: UpaConfig,
}

/// Builds the channel set from path angles and per-hop distances.
///
/// Gains come from [`free_space_gain`]; each hop draws its phase from a seed
/// derived from `seed` and the hop index so the construction is reproducible.
pub fn build_channels(
    arrays: &ArraySet,
    paths: &[PathAngles],
    distances: &[f64],
    seed: u64,
) -> Result<ChannelSet> {
    if paths.len() != distances.len() {
        return Err(Error::Contract("one distance per hop required".into()));
    }
    let wavelength = arrays.mbs.wavelength;
    let gains: Vec<Complex64> = distances
        .iter()
        .enumerate()
        .map(|(i, &d)| free_space_gain(d, wavelength, seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(i as u64)))
        .collect::<Result<_>>()?;
    match paths {
        [direct] if direct.hop == Hop::Direct => Ok(ChannelSet {
            h_los: Some(los_channel(gains[0], &arrays.mbs, &arrays.ue, direct)?),
            h1: None,
            h2: None,
            blockage: BlockageFlag::Los,
            complex_gains: gains,
        }),
        [first, second] if first.hop == Hop::MbsToRis && second.hop == Hop::RisToUe => Ok(ChannelSet {
            h_los: None,
            h1: Some(hop_channel(gains[0], &arrays.mbs, &arrays.ris, first)),
            h2: Some(hop_channel(gains[1], &arrays.ris, &arrays.ue, second)),
            blockage: BlockageFlag::Nlos,
            complex_gains: gains,
        }),
        _ => Err(Error::Contract("paths must be [direct] or [mbs_to_ris, ris_to_ue]".into())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arrays::wavelength_for;
    use crate::geometry::Direction;
    use crate::linalg::ONE;
    use rand::Rng;
    use std::f64::consts::FRAC_PI_2;

    fn upa(n_x: usize, n_z: usize) -> UpaConfig {
        UpaConfig::half_wavelength(n_x, n_z, wavelength_for(28e9))
    }

    fn boresight() -> PathAngles {
        PathAngles { hop: Hop::Direct, aod: Direction::new(0.0, FRAC_PI_2), aoa: Direction::new(0.0, FRAC_PI_2) }
    }

    fn random_angles(rng: &mut impl Rng, hop: Hop) -> PathAngles {
        PathAngles {
            hop,
            aod: Direction::new(rng.gen_range(0.0..TAU), rng.gen_range(0.0..PI)),
            aoa: Direction::new(rng.gen_range(0.0..TAU), rng.gen_range(0.0..PI)),
        }
    }

    /// Numerical rank via Gram-Schmidt on the columns.
    fn rank(m: &ComplexMatrix, tol: f64) -> usize {
        let mut basis: Vec<Vec<Complex64>> = Vec::new();
        for j in 0..m.cols() {
            let mut v: Vec<Complex64> = (0..m.rows()).map(|i| m[(i, j)]).collect();
            for b in &basis {
                let proj: Complex64 = b.iter().zip(&v).map(|(x, y)| x.conj() * y).sum();
                for (vi, bi) in v.iter_mut().zip(b) {
                    *vi -= proj * bi;
                }
            }
            let n = v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
            if n > tol {
                basis.push(v.into_iter().map(|x| x / n).collect());
            }
        }
        basis.len()
    }

    #[test]
    fn los_examples() {
        let zero = los_channel(Complex64::new(0.0, 0.0), &upa(2, 2), &upa(2, 2), &boresight()).unwrap();
        assert_eq!(zero.frobenius_norm(), 0.0);
        let scalar = los_channel(ONE, &upa(1, 1), &upa(1, 1), &boresight()).unwrap();
        assert_eq!(scalar.shape(), (1, 1));
        assert!((scalar[(0, 0)] - ONE).norm() < 1e-15);
        let alpha = Complex64::new(0.3, -0.4);
        let h = los_channel(alpha, &upa(2, 2), &upa(2, 2), &boresight()).unwrap();
        assert_eq!(h.shape(), (4, 4));
        for v in h.as_slice() {
            assert!((v - alpha).norm() < 1e-15);
        }
        let wrong = PathAngles { hop: Hop::RisToUe, ..boresight() };
        assert!(los_channel(alpha, &upa(2, 2), &upa(2, 2), &wrong).is_err());
    }

    #[test]
    fn los_frobenius_norm() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let alpha = Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            let (tx, rx) = (upa(4, 4), upa(2, 2));
            let h = los_channel(alpha, &tx, &rx, &random_angles(&mut rng, Hop::Direct)).unwrap();
            let expected = alpha.norm() * ((tx.len() * rx.len()) as f64).sqrt();
            assert!((h.frobenius_norm() - expected).abs() < 1e-12 * expected.max(1.0));
            assert_eq!(rank(&h, 1e-9), 1);
        }
    }

    #[test]
    fn cascade_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let (mbs, ris, ue) = (upa(4, 4), upa(4, 4), upa(2, 2));
        let h1 = hop_channel(Complex64::new(0.5, 0.1), &mbs, &ris, &random_angles(&mut rng, Hop::MbsToRis));
        let h2 = hop_channel(Complex64::new(-0.2, 0.7), &ris, &ue, &random_angles(&mut rng, Hop::RisToUe));
        let identity = RisPhaseMatrix::zeros(4, 4);
        let plain = matmul(&h2, &h1).unwrap();
        let cascaded = cascade_channel(&h2, &identity, &h1).unwrap();
        assert!(cascaded.sub(&plain).unwrap().frobenius_norm() < 1e-12);

        let dead = ComplexMatrix::zeros(16, 16);
        assert_eq!(cascade_channel(&h2, &identity, &dead).unwrap().frobenius_norm(), 0.0);

        let phases = RisPhaseMatrix::from_fn(4, 4, |_, _| rng.gen_range(0.0..TAU));
        let h = cascade_channel(&h2, &phases, &h1).unwrap();
        assert_eq!(h.shape(), (4, 16));
        assert_eq!(rank(&h, 1e-12), 1);

        assert!(cascade_channel(&h2, &RisPhaseMatrix::zeros(2, 2), &h1).is_err());
    }

    #[test]
    fn cascade_is_linear_in_each_factor() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let rand_m = |rng: &mut ChaCha8Rng, r: usize, c: usize| {
            ComplexMatrix::from_fn(r, c, |_, _| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
        };
        let phases = RisPhaseMatrix::from_fn(2, 2, |_, _| rng.gen_range(0.0..TAU));
        let (h1, d1) = (rand_m(&mut rng, 4, 3), rand_m(&mut rng, 4, 3));
        let (h2, d2) = (rand_m(&mut rng, 2, 4), rand_m(&mut rng, 2, 4));
        let s = Complex64::new(0.3, -1.2);
        let base = cascade_channel(&h2, &phases, &h1).unwrap();

        let lhs = cascade_channel(&h2, &phases, &h1.add(&d1.scale(s)).unwrap()).unwrap();
        let rhs = base.add(&cascade_channel(&h2, &phases, &d1).unwrap().scale(s)).unwrap();
        assert!(lhs.sub(&rhs).unwrap().frobenius_norm() <= 1e-10 * rhs.frobenius_norm());

        let lhs = cascade_channel(&h2.add(&d2.scale(s)).unwrap(), &phases, &h1).unwrap();
        let rhs = base.add(&cascade_channel(&d2, &phases, &h1).unwrap().scale(s)).unwrap();
        assert!(lhs.sub(&rhs).unwrap().frobenius_norm() <= 1e-10 * rhs.frobenius_norm());
    }

    #[test]
    fn free_space_gain_examples() {
        let wl = wavelength_for(28e9);
        let unit = free_space_gain(wl / (4.0 * PI), wl, 1).unwrap();
        assert!((unit.norm() - 1.0).abs() < 1e-12);
        let g1 = free_space_gain(10.0, wl, 5).unwrap();
        let g2 = free_space_gain(20.0, wl, 5).unwrap();
        assert!((g1.norm() / g2.norm() - 2.0).abs() < 1e-12);
        assert_eq!(free_space_gain(10.0, wl, 77).unwrap(), free_space_gain(10.0, wl, 77).unwrap());
        assert!(free_space_gain(0.0, wl, 1).is_err());
        assert!(free_space_gain(-1.0, wl, 1).is_err());
    }
}
