//! Shared token vocabulary for locations and angles.
//!
//! Layout: `[pad, begin, end, azimuth bins, elevation bins, x bins, y bins]`.
//! The decoder only ever emits ids below [`TokenVocab::output_size`].

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::dataset::{Region, TargetAngles};
use crate::error::{Error, Result};
use crate::geometry::Direction;

pub const PAD: usize = 0;
pub const BEGIN: usize = 1;
pub const END: usize = 2;
const SPECIALS: usize = 3;

/// Number of angle tokens in every target sequence.
pub const ANGLE_SLOTS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenVocab {
    pub coord_bins_x: usize,
    pub coord_bins_y: usize,
    pub azimuth_bins: usize,
    pub elevation_bins: usize,
}

impl Default for TokenVocab {
    fn default() -> Self {
        Self { coord_bins_x: 128, coord_bins_y: 128, azimuth_bins: 256, elevation_bins: 64 }
    }
}

/// Role of a token id.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TokenKind {
    Special,
    Azimuth(usize),
    Elevation(usize),
    X(usize),
    Y(usize),
}

impl TokenVocab {
    pub fn validate(&self) -> Result<()> {
        if [self.coord_bins_x, self.coord_bins_y, self.azimuth_bins, self.elevation_bins].contains(&0) {
            return Err(Error::Domain("every token axis needs at least one bin".into()));
        }
        Ok(())
    }

    fn az_start(&self) -> usize {
        SPECIALS
    }

    fn el_start(&self) -> usize {
        self.az_start() + self.azimuth_bins
    }

    fn x_start(&self) -> usize {
        self.el_start() + self.elevation_bins
    }

    fn y_start(&self) -> usize {
        self.x_start() + self.coord_bins_x
    }

    /// Ids the decoder can emit: specials and angle bins.
    pub fn output_size(&self) -> usize {
        self.x_start()
    }

    pub fn size(&self) -> usize {
        self.y_start() + self.coord_bins_y
    }

    pub fn kind(&self, id: usize) -> Result<TokenKind> {
        match id {
            _ if id < SPECIALS => Ok(TokenKind::Special),
            _ if id < self.el_start() => Ok(TokenKind::Azimuth(id - self.az_start())),
            _ if id < self.x_start() => Ok(TokenKind::Elevation(id - self.el_start())),
            _ if id < self.y_start() => Ok(TokenKind::X(id - self.x_start())),
            _ if id < self.size() => Ok(TokenKind::Y(id - self.y_start())),
            _ => Err(Error::Vocabulary(id)),
        }
    }

    pub fn azimuth_width(&self) -> f64 {
        TAU / self.azimuth_bins as f64
    }

    pub fn elevation_width(&self) -> f64 {
        PI / self.elevation_bins as f64
    }

    pub fn azimuth_token(&self, azimuth: f64) -> usize {
        let bin = (azimuth.rem_euclid(TAU) / self.azimuth_width()).floor() as usize;
        self.az_start() + bin.min(self.azimuth_bins - 1)
    }

    pub fn elevation_token(&self, elevation: f64) -> usize {
        let bin = (elevation.clamp(0.0, PI) / self.elevation_width()).floor() as usize;
        self.el_start() + bin.min(self.elevation_bins - 1)
    }

    /// Token range `[start, end)` legal at angle slot `slot` (azimuth on
    /// even slots, elevation on odd ones).
    pub fn slot_range(&self, slot: usize) -> std::ops::Range<usize> {
        if slot % 2 == 0 {
            self.az_start()..self.el_start()
        } else {
            self.el_start()..self.x_start()
        }
    }

    /// Bin-centre angle of an azimuth or elevation token.
    pub fn angle_value(&self, id: usize) -> Result<f64> {
        match self.kind(id)? {
            TokenKind::Azimuth(b) => Ok((b as f64 + 0.5) * self.azimuth_width()),
            TokenKind::Elevation(b) => Ok((b as f64 + 0.5) * self.elevation_width()),
            _ => Err(Error::Vocabulary(id)),
        }
    }

    /// `(x token, y token)`; bins are half-open except that the far edge
    /// maps to the last bin.
    pub fn tokenize_location(&self, xy: [f64; 2], region: &Region) -> Result<[usize; 2]> {
        if !region.contains(xy) {
            return Err(Error::Domain(format!("location ({}, {}) outside the token region", xy[0], xy[1])));
        }
        let bin = |v: f64, lo: f64, hi: f64, n: usize| (((v - lo) / (hi - lo) * n as f64).floor() as usize).min(n - 1);
        Ok([
            self.x_start() + bin(xy[0], region.x[0], region.x[1], self.coord_bins_x),
            self.y_start() + bin(xy[1], region.y[0], region.y[1], self.coord_bins_y),
        ])
    }

    /// Normalised bin centre in `(0, 1)` of a coordinate token.
    pub fn coordinate_position(&self, id: usize) -> Option<f64> {
        match self.kind(id).ok()? {
            TokenKind::X(b) => Some((b as f64 + 0.5) / self.coord_bins_x as f64),
            TokenKind::Y(b) => Some((b as f64 + 0.5) / self.coord_bins_y as f64),
            _ => None,
        }
    }

    /// `[begin, az, el, az, el, end]` for the two predicted directions.
    pub fn tokenize_angles(&self, target: &TargetAngles) -> [usize; ANGLE_SLOTS + 2] {
        let [a, b] = target.predicted_pair();
        [
            BEGIN,
            self.azimuth_token(a.azimuth),
            self.elevation_token(a.elevation),
            self.azimuth_token(b.azimuth),
            self.elevation_token(b.elevation),
            END,
        ]
    }

    /// Inverse of [`tokenize_angles`](Self::tokenize_angles) on the four
    /// angle tokens, returning bin centres.
    pub fn detokenize_angles(&self, tokens: &[usize]) -> Result<[Direction; 2]> {
        if tokens.len() != ANGLE_SLOTS {
            return Err(Error::Contract(format!("expected {ANGLE_SLOTS} angle tokens, got {}", tokens.len())));
        }
        for (slot, &t) in tokens.iter().enumerate() {
            if !self.slot_range(slot).contains(&t) {
                return Err(Error::Vocabulary(t));
            }
        }
        Ok([
            Direction::new(self.angle_value(tokens[0])?, self.angle_value(tokens[1])?),
            Direction::new(self.angle_value(tokens[2])?, self.angle_value(tokens[3])?),
        ])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::circular_distance;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn region() -> Region {
        Region { x: [0.0, 100.0], y: [10.0, 20.0] }
    }

    fn vocab() -> TokenVocab {
        TokenVocab { coord_bins_x: 100, coord_bins_y: 10, azimuth_bins: 256, elevation_bins: 64 }
    }

    #[test]
    fn ids_are_unique_and_partitioned() {
        let v = vocab();
        assert_eq!(v.size(), 3 + 256 + 64 + 100 + 10);
        assert_eq!(v.output_size(), 3 + 256 + 64);
        let mut seen = std::collections::HashSet::new();
        for id in 0..v.size() {
            let k = v.kind(id).unwrap();
            assert!(seen.insert(format!("{k:?}-{id}")));
        }
        assert!(v.kind(v.size()).is_err());
    }

    #[test]
    fn location_examples() {
        let v = vocab();
        let base = v.tokenize_location([0.0, 10.0], &region()).unwrap();
        assert_eq!(v.kind(base[0]).unwrap(), TokenKind::X(0));
        assert_eq!(v.kind(base[1]).unwrap(), TokenKind::Y(0));
        let top = v.tokenize_location([100.0, 20.0], &region()).unwrap();
        assert_eq!(v.kind(top[0]).unwrap(), TokenKind::X(99));
        assert_eq!(v.kind(top[1]).unwrap(), TokenKind::Y(9));
        let mid = v.tokenize_location([50.0, 15.0], &region()).unwrap();
        assert_eq!(v.kind(mid[0]).unwrap(), TokenKind::X(50));
        assert!(matches!(v.tokenize_location([100.5, 15.0], &region()), Err(Error::Domain(_))));
    }

    #[test]
    fn angle_examples() {
        let v = vocab();
        assert_eq!(v.kind(v.azimuth_token(0.0)).unwrap(), TokenKind::Azimuth(0));
        assert_eq!(v.kind(v.azimuth_token(TAU - 1e-12)).unwrap(), TokenKind::Azimuth(255));
        assert_eq!(v.kind(v.elevation_token(PI)).unwrap(), TokenKind::Elevation(63));
    }

    #[test]
    fn round_trip_within_half_bin() {
        let v = vocab();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            let a = Direction::new(rng.gen_range(0.0..TAU), rng.gen_range(0.0..PI));
            let b = Direction::new(rng.gen_range(0.0..TAU), rng.gen_range(0.0..PI));
            let seq = v.tokenize_angles(&TargetAngles::Los { aod: a, aoa: b });
            assert_eq!((seq[0], seq[5]), (BEGIN, END));
            let [ra, rb] = v.detokenize_angles(&seq[1..5]).unwrap();
            for (x, y) in [(a, ra), (b, rb)] {
                assert!(circular_distance(x.azimuth, y.azimuth) <= v.azimuth_width() / 2.0 + 1e-12);
                assert!((x.elevation - y.elevation).abs() <= v.elevation_width() / 2.0 + 1e-12);
            }
        }
    }

    #[test]
    fn nlos_uses_ris_side_angles() {
        let v = vocab();
        let (m, r, u) = (Direction::new(1.5, 1.6), Direction::new(0.4, 1.9), Direction::new(3.7, 1.3));
        let seq = v.tokenize_angles(&TargetAngles::Nlos { mbs_aod: m, ris_aod: r, ue_aoa: u });
        assert_eq!(seq[1], v.azimuth_token(0.4));
        assert_eq!(seq[3], v.azimuth_token(3.7));
    }

    #[test]
    fn misplaced_tokens_rejected() {
        let v = vocab();
        let az = v.azimuth_token(1.0);
        assert!(v.detokenize_angles(&[az, az, az, az]).is_err());
        assert!(v.detokenize_angles(&[az]).is_err());
    }
}
