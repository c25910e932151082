//! Codebook-search beam alignment: exhaustive scan and two-layer
//! hierarchical refinement.

use std::f64::consts::{PI, TAU};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::arrays::{beam_toward, UpaConfig};
use crate::error::{Error, Result};
use crate::geometry::Direction;
use crate::linalg::{matmul, ComplexMatrix};
use crate::ris::{optimal_phases, realize};

/// Relative margin under which two probe powers count as a tie.
const TIE_TOLERANCE: f64 = 1e-12;

/// Uniform azimuth × elevation grid with points at cell centres.
///
/// Entry `a·elevation_steps + e` points at
/// `((a + ½)·2π/A, (e + ½)·π/E)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Codebook {
    pub azimuth_steps: usize,
    pub elevation_steps: usize,
    entries: Vec<Direction>,
}

impl Codebook {
    pub fn new(azimuth_steps: usize, elevation_steps: usize) -> Result<Self> {
        if azimuth_steps == 0 || elevation_steps == 0 {
            return Err(Error::Domain("codebook needs at least one step per axis".into()));
        }
        let entries = (0..azimuth_steps)
            .flat_map(|a| (0..elevation_steps).map(move |e| (a, e)))
            .map(|(a, e)| cell_center(a, e, azimuth_steps, elevation_steps))
            .collect();
        Ok(Self { azimuth_steps, elevation_steps, entries })
    }

    pub fn entries(&self) -> &[Direction] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn azimuth_step(&self) -> f64 {
        TAU / self.azimuth_steps as f64
    }

    pub fn elevation_step(&self) -> f64 {
        PI / self.elevation_steps as f64
    }

    /// Grid point closest to `dir` (circular in azimuth).
    pub fn nearest(&self, dir: Direction) -> Direction {
        let a = ((dir.azimuth.rem_euclid(TAU) / self.azimuth_step()).floor() as usize).min(self.azimuth_steps - 1);
        let e = ((dir.elevation / self.elevation_step()).floor().max(0.0) as usize).min(self.elevation_steps - 1);
        cell_center(a, e, self.azimuth_steps, self.elevation_steps)
    }

    /// `(azimuth index, elevation index)` of entry `index`.
    fn cell_of(&self, index: usize) -> (usize, usize) {
        (index / self.elevation_steps, index % self.elevation_steps)
    }
}

fn cell_center(a: usize, e: usize, az_steps: usize, el_steps: usize) -> Direction {
    Direction::new((a as f64 + 0.5) * TAU / az_steps as f64, (e as f64 + 0.5) * PI / el_steps as f64)
}

/// Link being aligned. `first` directions steer the mBS beam on a direct
/// link and the RIS reflection on an RIS link.
#[derive(Debug, Clone)]
pub enum SearchLink {
    /// Effective `N_R × N_T` channel with the mBS beam as the first end.
    Direct { omega: ComplexMatrix, tx: UpaConfig },
    /// Cascade with the mBS beam `f` fixed toward the RIS.
    Ris(RisLink),
}

#[derive(Debug, Clone)]
pub struct RisLink {
    pub h1: ComplexMatrix,
    pub h2: ComplexMatrix,
    pub transmit: ComplexMatrix,
    pub incident: Direction,
    pub ris: UpaConfig,
}

impl SearchLink {
    /// Received vector `Ω(d)·f(d)` for a first-end direction `d`.
    fn response(&self, dir: Direction) -> Result<Vec<Complex64>> {
        let out = match self {
            SearchLink::Direct { omega, tx } => matmul(omega, &beam_toward(tx, dir))?,
            SearchLink::Ris(link) => {
                let phases = optimal_phases(link.incident, dir, (link.ris.n_x, link.ris.n_z), link.ris.wavenumber_spacing());
                let reflected = matmul(&realize(&phases), &matmul(&link.h1, &link.transmit)?)?;
                matmul(&link.h2, &reflected)?
            }
        };
        Ok(out.into_vec())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchOutcome {
    pub first: Direction,
    pub receive: Direction,
    pub power: f64,
    pub probes: u64,
}

/// Conjugated unit-norm receive beams, so `Σ w̄·g = w^H g`.
fn receive_beams(rx: &UpaConfig, dirs: &[Direction]) -> Vec<Vec<Complex64>> {
    dirs.iter().map(|d| beam_toward(rx, *d).into_vec().into_iter().map(|v| v.conj()).collect()).collect()
}

/// Argmax of `|w_j^H g_i|²` over all pairs, scanning first-end index major.
fn scan(link: &SearchLink, rx: &UpaConfig, first: &[Direction], receive: &[Direction]) -> Result<SearchOutcome> {
    if first.is_empty() || receive.is_empty() {
        return Err(Error::Contract("codebooks must be non-empty".into()));
    }
    let beams = receive_beams(rx, receive);
    let mut best = (0usize, 0usize, f64::NEG_INFINITY);
    for (i, d) in first.iter().enumerate() {
        let g = link.response(*d)?;
        if g.len() != rx.len() {
            return Err(Error::Shape(format!("link delivers {} antennas, receive array has {}", g.len(), rx.len())));
        }
        for (j, w) in beams.iter().enumerate() {
            let y: Complex64 = w.iter().zip(&g).map(|(a, b)| a * b).sum();
            let p = y.norm_sqr();
            if p > best.2 + TIE_TOLERANCE * best.2.abs() || best.2 == f64::NEG_INFINITY {
                best = (i, j, p);
            }
        }
    }
    Ok(SearchOutcome {
        first: first[best.0],
        receive: receive[best.1],
        power: best.2,
        probes: (first.len() * receive.len()) as u64,
    })
}

/// Scans every codeword pair and returns the strongest.
pub fn exhaustive_search(link: &SearchLink, rx: &UpaConfig, cb_first: &Codebook, cb_rx: &Codebook) -> Result<SearchOutcome> {
    scan(link, rx, cb_first.entries(), cb_rx.entries())
}

/// `refine × refine` sub-cell centres of cell `(a, e)`.
fn refined_cell(cb: &Codebook, index: usize, refine: usize) -> Vec<Direction> {
    let (a, e) = cb.cell_of(index);
    let (az_fine, el_fine) = (cb.azimuth_steps * refine, cb.elevation_steps * refine);
    (0..refine)
        .flat_map(|s| (0..refine).map(move |t| (s, t)))
        .map(|(s, t)| cell_center(a * refine + s, e * refine + t, az_fine, el_fine))
        .collect()
}

/// Coarse scan, then a `refine`-times denser scan inside the winning cell
/// at both link ends.
pub fn hierarchical_search(
    link: &SearchLink,
    rx: &UpaConfig,
    coarse_first: &Codebook,
    coarse_rx: &Codebook,
    refine: usize,
) -> Result<SearchOutcome> {
    if refine == 0 {
        return Err(Error::Domain("refine factor must be at least 1".into()));
    }
    let stage1 = scan(link, rx, coarse_first.entries(), coarse_rx.entries())?;
    let index_of = |cb: &Codebook, d: Direction| cb.entries().iter().position(|e| *e == d).expect("winner is an entry");
    let fine_first = refined_cell(coarse_first, index_of(coarse_first, stage1.first), refine);
    let fine_rx = refined_cell(coarse_rx, index_of(coarse_rx, stage1.receive), refine);
    let stage2 = scan(link, rx, &fine_first, &fine_rx)?;
    Ok(SearchOutcome { probes: stage1.probes + stage2.probes, ..stage2 })
}

/// Alignment method whose probing overhead is being counted.
#[derive(Debug, Clone, PartialEq)]
pub enum SearchMethod {
    Exhaustive { first: Codebook, receive: Codebook },
    Hierarchical { first: Codebook, receive: Codebook, refine: usize },
    AngleMap,
}

impl SearchMethod {
    /// Codeword-pair evaluations performed for one UE.
    pub fn probe_count(&self) -> u64 {
        match self {
            SearchMethod::Exhaustive { first, receive } => (first.len() * receive.len()) as u64,
            SearchMethod::Hierarchical { first, receive, refine } => {
                (first.len() * receive.len() + refine.pow(4)) as u64
            }
            SearchMethod::AngleMap => 0,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arrays::wavelength_for;
    use crate::channel::hop_channel;
    use crate::geometry::{Hop, PathAngles};
    use crate::linalg::hermitian;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn upa(n_x: usize, n_z: usize) -> UpaConfig {
        UpaConfig::half_wavelength(n_x, n_z, wavelength_for(28e9))
    }

    fn direct_link(aod: Direction, aoa: Direction) -> SearchLink {
        let (tx, rx) = (upa(4, 4), upa(2, 2));
        let omega = hop_channel(Complex64::new(1.0, 0.0), &tx, &rx, &PathAngles { hop: Hop::Direct, aod, aoa });
        SearchLink::Direct { omega, tx }
    }

    fn brute_force(omega: &ComplexMatrix, tx: &UpaConfig, rx: &UpaConfig, a: &Codebook, b: &Codebook) -> (usize, usize, f64) {
        let mut best = (0, 0, -1.0);
        for (i, d) in a.entries().iter().enumerate() {
            for (j, e) in b.entries().iter().enumerate() {
                let w = beam_toward(rx, *e);
                let f = beam_toward(tx, *d);
                let p = matmul(&matmul(&hermitian(&w), omega).unwrap(), &f).unwrap()[(0, 0)].norm_sqr();
                if p > best.2 * (1.0 + 1e-12) {
                    best = (i, j, p);
                }
            }
        }
        best
    }

    #[test]
    fn codebook_layout() {
        let cb = Codebook::new(8, 4).unwrap();
        assert_eq!(cb.len(), 32);
        assert!((cb.entries()[0].azimuth - TAU / 16.0).abs() < 1e-15);
        assert!((cb.entries()[0].elevation - PI / 8.0).abs() < 1e-15);
        assert!(cb.entries().iter().all(|d| d.in_range()));
        assert!(Codebook::new(0, 4).is_err());
        assert_eq!(cb.nearest(Direction::new(TAU - 1e-9, PI)), cb.entries()[31]);
    }

    #[test]
    fn on_grid_channel_found() {
        let (cb_tx, cb_rx) = (Codebook::new(16, 8).unwrap(), Codebook::new(16, 8).unwrap());
        // azimuths below π/2 precede their mirror images π − θ on the grid
        let aod = cb_tx.entries()[2 * 8 + 3];
        let aoa = cb_rx.entries()[8 + 5];
        let out = exhaustive_search(&direct_link(aod, aoa), &upa(2, 2), &cb_tx, &cb_rx).unwrap();
        assert_eq!(out.first, aod);
        assert_eq!(out.receive, aoa);
        assert!((out.power - 16.0 * 4.0).abs() < 1e-9);
        assert_eq!(out.probes, 128 * 128);
    }

    #[test]
    fn zero_channel_ties_to_first_pair() {
        let cb = Codebook::new(8, 4).unwrap();
        let link = SearchLink::Direct { omega: ComplexMatrix::zeros(4, 16), tx: upa(4, 4) };
        let out = exhaustive_search(&link, &upa(2, 2), &cb, &cb).unwrap();
        assert_eq!(out.first, cb.entries()[0]);
        assert_eq!(out.receive, cb.entries()[0]);
        assert_eq!(out.power, 0.0);
    }

    #[test]
    fn exhaustive_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let cb = Codebook::new(8, 4).unwrap();
        let (tx, rx) = (upa(4, 4), upa(2, 2));
        for _ in 0..5 {
            let aod = cb.entries()[rng.gen_range(0..cb.len())];
            let aoa = cb.entries()[rng.gen_range(0..cb.len())];
            let link = direct_link(aod, aoa);
            let SearchLink::Direct { omega, .. } = &link else { unreachable!() };
            let (i, j, p) = brute_force(omega, &tx, &rx, &cb, &cb);
            let out = exhaustive_search(&link, &rx, &cb, &cb).unwrap();
            assert_eq!(out.first, cb.entries()[i]);
            assert_eq!(out.receive, cb.entries()[j]);
            assert!((out.power - p).abs() <= 1e-9 * p.max(1.0));
        }
    }

    #[test]
    fn unit_refinement_is_coarse_exhaustive() {
        let mut rng = ChaCha8Rng::seed_from_u64(32);
        let cb = Codebook::new(16, 4).unwrap();
        for _ in 0..5 {
            let link = direct_link(
                Direction::new(rng.gen_range(0.0..TAU), rng.gen_range(0.0..PI)),
                Direction::new(rng.gen_range(0.0..TAU), rng.gen_range(0.0..PI)),
            );
            let h = hierarchical_search(&link, &upa(2, 2), &cb, &cb, 1).unwrap();
            let e = exhaustive_search(&link, &upa(2, 2), &cb, &cb).unwrap();
            assert_eq!((h.first, h.receive, h.power), (e.first, e.receive, e.power));
        }
    }

    #[test]
    fn probe_counts() {
        let c16 = Codebook::new(4, 4).unwrap();
        let c32 = Codebook::new(8, 4).unwrap();
        assert_eq!(SearchMethod::Exhaustive { first: c32.clone(), receive: c32.clone() }.probe_count(), 1024);
        let hier = SearchMethod::Hierarchical { first: c16.clone(), receive: c16.clone(), refine: 4 };
        assert!(hier.probe_count() <= 32 * 32);
        let dense = Codebook::new(16, 16).unwrap();
        assert!(hier.probe_count() < SearchMethod::Exhaustive { first: dense.clone(), receive: dense }.probe_count());
        assert_eq!(SearchMethod::AngleMap.probe_count(), 0);

        let link = direct_link(Direction::new(0.4, 1.2), Direction::new(3.6, 1.9));
        let out = hierarchical_search(&link, &upa(2, 2), &c16, &c16, 4).unwrap();
        assert_eq!(out.probes, hier.probe_count());
    }

    #[test]
    fn hierarchical_recovers_dense_optimum() {
        let coarse = Codebook::new(16, 4).unwrap();
        let dense = Codebook::new(64, 16).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let mut checked = 0;
        while checked < 5 {
            let aod = dense.entries()[rng.gen_range(0..dense.len())];
            let aoa = dense.entries()[rng.gen_range(0..dense.len())];
            let link = direct_link(aod, aoa);
            let e = exhaustive_search(&link, &upa(2, 2), &dense, &dense).unwrap();
            let h = hierarchical_search(&link, &upa(2, 2), &coarse, &coarse, 4).unwrap();
            // only instances whose coarse winner contains the dense optimum
            if coarse.nearest(h.first) == coarse.nearest(e.first) && coarse.nearest(h.receive) == coarse.nearest(e.receive) {
                assert!((h.power - e.power).abs() <= 1e-9 * e.power);
                checked += 1;
            }
            assert!(h.power <= e.power * (1.0 + 1e-12));
        }
    }

    #[test]
    fn ris_link_search_finds_reflection_direction() {
        let (tx, ris, rx) = (upa(4, 4), upa(4, 4), upa(2, 2));
        let cb = Codebook::new(16, 8).unwrap();
        let to_ris = PathAngles { hop: Hop::MbsToRis, aod: Direction::new(1.5, 1.6), aoa: Direction::new(4.6, 1.5) };
        let out_dir = cb.entries()[8 + 4];
        let ue_dir = cb.entries()[9 * 8 + 4];
        let hop2 = PathAngles { hop: Hop::RisToUe, aod: out_dir, aoa: ue_dir };
        let link = SearchLink::Ris(RisLink {
            h1: hop_channel(Complex64::new(1.0, 0.0), &tx, &ris, &to_ris),
            h2: hop_channel(Complex64::new(1.0, 0.0), &ris, &rx, &hop2),
            transmit: beam_toward(&tx, to_ris.aod),
            incident: to_ris.aoa,
            ris,
        });
        let out = exhaustive_search(&link, &rx, &cb, &cb).unwrap();
        assert_eq!(out.first, out_dir);
        // |a_R^H w|² · |χ|² · |a_T^H f|² = 4 · 256 · 16
        assert!((out.power - 4.0 * 256.0 * 16.0).abs() < 1e-6);
    }
}
