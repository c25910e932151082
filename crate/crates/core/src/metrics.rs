//! SINR, achievable rate and beam-alignment accuracy.

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::beamforming::BeamformerBank;
use crate::error::{Error, Result};
use crate::geometry::Direction;
use crate::linalg::{matmul, ComplexMatrix};

/// `10^((dBm − 30)/10)` watts.
pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkBudget {
    pub per_ue_power: f64,
    pub noise_power: f64,
}

impl LinkBudget {
    pub fn new(per_ue_power: f64, noise_power: f64) -> Result<Self> {
        if !(per_ue_power > 0.0 && noise_power > 0.0) {
            return Err(Error::Domain(format!("powers must be positive, got p={per_ue_power}, noise={noise_power}")));
        }
        Ok(Self { per_ue_power, noise_power })
    }

    /// Total mBS power split evenly over `users`.
    pub fn from_dbm(total_dbm: f64, noise_dbm: f64, users: usize) -> Result<Self> {
        if users == 0 {
            return Err(Error::Domain("link budget needs at least one user".into()));
        }
        Self::new(dbm_to_watts(total_dbm) / users as f64, dbm_to_watts(noise_dbm))
    }
}

fn gain_sq(w: &ComplexMatrix, omega: &ComplexMatrix, f: &ComplexMatrix) -> Result<f64> {
    let of = matmul(omega, f)?;
    Ok(w.inner(&of)?.norm_sqr())
}

/// SINR of UE `ue` given each UE's effective channel `Ω_n` (`N_R × N_T`).
pub fn sinr(ue: usize, effective: &[ComplexMatrix], bank: &BeamformerBank, budget: &LinkBudget) -> Result<f64> {
    if effective.len() != bank.len() || ue >= bank.len() {
        return Err(Error::Contract(format!("ue {ue} with {} channels and {} beams", effective.len(), bank.len())));
    }
    let w = &bank.receive[ue];
    let omega = &effective[ue];
    let mut interference = 0.0;
    for (m, f) in bank.transmit.iter().enumerate() {
        if m != ue {
            interference += gain_sq(w, omega, f)?;
        }
    }
    let signal = gain_sq(w, omega, &bank.transmit[ue])? * budget.per_ue_power;
    Ok(signal / (interference * budget.per_ue_power + budget.noise_power))
}

/// Rate with intra-cell interference dropped, `log2(1 + |w^H Ω f|² p / σ²)`.
pub fn interference_free_rate(w: &ComplexMatrix, omega: &ComplexMatrix, f: &ComplexMatrix, budget: &LinkBudget) -> Result<f64> {
    let snr = gain_sq(w, omega, f)? * budget.per_ue_power / budget.noise_power;
    Ok((1.0 + snr).log2())
}

pub fn sum_rate(sinrs: &[f64]) -> f64 {
    sinrs.iter().map(|s| (1.0 + s).log2()).sum()
}

/// Acceptance window for an angle estimate: full beamwidth per component.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Beamwidth {
    pub azimuth: f64,
    pub elevation: f64,
}

impl Beamwidth {
    pub fn uniform(width: f64) -> Self {
        Self { azimuth: width, elevation: width }
    }

    /// Angular step of an `azimuth_steps × elevation_steps` codebook.
    pub fn codebook_step(azimuth_steps: usize, elevation_steps: usize) -> Self {
        Self { azimuth: TAU / azimuth_steps as f64, elevation: PI / elevation_steps as f64 }
    }
}

/// Shortest distance between two azimuths on the circle.
pub fn circular_distance(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(TAU);
    d.min(TAU - d)
}

pub fn within_beam(predicted: Direction, truth: Direction, beamwidth: Beamwidth) -> bool {
    circular_distance(predicted.azimuth, truth.azimuth) <= beamwidth.azimuth / 2.0
        && (predicted.elevation - truth.elevation).abs() <= beamwidth.elevation / 2.0
}

/// Fraction of UEs whose every predicted direction is within half a beamwidth of the truth.
pub fn alignment_accuracy(predicted: &[Vec<Direction>], truth: &[Vec<Direction>], beamwidth: Beamwidth) -> Result<f64> {
    if predicted.len() != truth.len() {
        return Err(Error::Contract(format!("{} predictions for {} truths", predicted.len(), truth.len())));
    }
    if predicted.is_empty() {
        return Ok(0.0);
    }
    let mut hits = 0usize;
    for (p, t) in predicted.iter().zip(truth) {
        if p.len() != t.len() {
            return Err(Error::Contract(format!("{} predicted angles for {} true angles", p.len(), t.len())));
        }
        if p.iter().zip(t).all(|(a, b)| within_beam(*a, *b, beamwidth)) {
            hits += 1;
        }
    }
    Ok(hits as f64 / predicted.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arrays::{beam_toward, wavelength_for, UpaConfig};
    use crate::beamforming::{normalized_receive_beams, zf_receive_matrix};
    use num_complex::Complex64;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn scalar(v: f64) -> ComplexMatrix {
        ComplexMatrix::from_vec(1, 1, vec![Complex64::new(v, 0.0)]).unwrap()
    }

    fn random_matrix(rng: &mut impl Rng, r: usize, c: usize) -> ComplexMatrix {
        ComplexMatrix::from_fn(r, c, |_, _| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
    }

    #[test]
    fn dbm_conversion() {
        assert!((dbm_to_watts(10.0) - 0.01).abs() < 1e-15);
        assert!((dbm_to_watts(-100.0) - 1e-13).abs() < 1e-25);
        assert!((dbm_to_watts(30.0) - 1.0).abs() < 1e-15);
        let b = LinkBudget::from_dbm(10.0, -100.0, 4).unwrap();
        assert!((b.per_ue_power - 0.0025).abs() < 1e-15);
        assert!(LinkBudget::new(0.0, 1.0).is_err());
        assert!(LinkBudget::from_dbm(10.0, -100.0, 0).is_err());
    }

    #[test]
    fn sinr_examples() {
        let budget = LinkBudget::from_dbm(10.0, -100.0, 1).unwrap();
        let bank = BeamformerBank { transmit: vec![scalar(1.0)], receive: vec![scalar(1.0)] };
        let s = sinr(0, &[scalar(1.0)], &bank, &budget).unwrap();
        assert!((s / 1e11 - 1.0).abs() < 1e-12);
        assert_eq!(sinr(0, &[scalar(0.0)], &bank, &budget).unwrap(), 0.0);
        let rate = interference_free_rate(&scalar(1.0), &scalar(1.0), &scalar(1.0), &budget).unwrap();
        assert!((rate - (1.0 + 1e11f64).log2()).abs() < 1e-9);
    }

    #[test]
    fn sum_rate_examples() {
        assert_eq!(sum_rate(&[0.0, 0.0]), 0.0);
        assert_eq!(sum_rate(&[1.0]), 1.0);
        assert!((sum_rate(&[3.0, 7.0]) - 5.0).abs() < 1e-12);
    }

    #[test]
    fn accuracy_examples() {
        let bw = Beamwidth::uniform(0.1);
        let t = vec![vec![Direction::new(0.3, 1.0), Direction::new(6.2, 2.0)], vec![Direction::new(1.0, 0.5)]];
        assert_eq!(alignment_accuracy(&t, &t, bw).unwrap(), 1.0);

        let off: Vec<Vec<Direction>> = t
            .iter()
            .map(|v| v.iter().map(|d| Direction::new((d.azimuth + PI).rem_euclid(TAU), d.elevation)).collect())
            .collect();
        assert_eq!(alignment_accuracy(&off, &t, Beamwidth::uniform(3.0)).unwrap(), 0.0);

        let mixed = vec![t[0].clone(), off[1].clone()];
        assert_eq!(alignment_accuracy(&mixed, &t, bw).unwrap(), 0.5);
        assert!(alignment_accuracy(&t[..1], &t, bw).is_err());
    }

    #[test]
    fn azimuth_distance_wraps() {
        assert!((circular_distance(0.01, TAU - 0.01) - 0.02).abs() < 1e-12);
        assert!(within_beam(Direction::new(0.01, 1.0), Direction::new(TAU - 0.01, 1.0), Beamwidth::uniform(0.05)));
    }

    #[test]
    fn zf_interference_negligible() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let budget = LinkBudget::from_dbm(10.0, -100.0, 3).unwrap();
        let sqrt_p = Complex64::new(budget.per_ue_power.sqrt(), 0.0);
        let cfg = UpaConfig::half_wavelength(4, 4, wavelength_for(28e9));
        for _ in 0..10 {
            let omegas: Vec<_> = (0..3).map(|_| random_matrix(&mut rng, 4, 16)).collect();
            let transmit: Vec<_> = (0..3)
                .map(|_| beam_toward(&cfg, Direction::new(rng.gen_range(0.0..TAU), rng.gen_range(0.0..PI))))
                .collect();
            let lambdas: Vec<_> = omegas.iter().map(|o| o.scale(sqrt_p)).collect();
            let w = zf_receive_matrix(&lambdas, &transmit).unwrap();
            let bank = BeamformerBank { transmit: transmit.clone(), receive: normalized_receive_beams(&w) };
            for n in 0..3 {
                let wn = &bank.receive[n];
                let signal = gain_sq(wn, &omegas[n], &transmit[n]).unwrap();
                let interference: f64 =
                    (0..3).filter(|&m| m != n).map(|m| gain_sq(wn, &omegas[n], &transmit[m]).unwrap()).sum();
                assert!(interference < 1e-6 * signal);
            }
        }
    }

    proptest! {
        #[test]
        fn sinr_decreases_with_noise(seed in 0u64..1000, noise in 1e-3f64..1.0, factor in 1.01f64..10.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let omegas: Vec<_> = (0..2).map(|_| random_matrix(&mut rng, 2, 3)).collect();
            let unit = |m: ComplexMatrix| { let n = m.frobenius_norm(); m.scale(Complex64::new(1.0 / n, 0.0)) };
            let bank = BeamformerBank {
                transmit: (0..2).map(|_| unit(random_matrix(&mut rng, 3, 1))).collect(),
                receive: (0..2).map(|_| unit(random_matrix(&mut rng, 2, 1))).collect(),
            };
            let low = LinkBudget::new(1.0, noise).unwrap();
            let high = LinkBudget::new(1.0, noise * factor).unwrap();
            for n in 0..2 {
                prop_assert!(sinr(n, &omegas, &bank, &high).unwrap() < sinr(n, &omegas, &bank, &low).unwrap());
            }
        }

        #[test]
        fn sum_rate_monotone(a in 0.0f64..1e6, b in 0.0f64..1e6, bump in 0.0f64..10.0) {
            prop_assert!(sum_rate(&[a + bump, b]) >= sum_rate(&[a, b]));
        }
    }
}
