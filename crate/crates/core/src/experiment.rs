//! Scoring of angle-map predictions against search-based alignment,
//! dataset-size sweeps and angle-map grid export.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::anglemap::model::TransformerConfig;
use crate::anglemap::vocab::TokenVocab;
use crate::anglemap::{self, AngleMapModel};
use crate::arrays::{beam_toward, wavelength_for, UpaConfig};
use crate::baselines::{exhaustive_search, hierarchical_search, Codebook, RisLink, SearchLink, SearchMethod};
use crate::beamforming::{normalized_receive_beams, zf_receive_matrix, BeamformerBank};
use crate::channel::{build_channels, ArraySet, ChannelSet};
use crate::dataset::{AngleRecord, GridSpec, SyntheticScene, TargetAngles};
use crate::error::{Error, Result};
use crate::geometry::{path_angles_for, BlockageFlag, Direction, Hop, PathAngles, Point3, Scene};
use crate::linalg::ComplexMatrix;
use crate::metrics::{circular_distance, interference_free_rate, sinr, sum_rate, within_beam, Beamwidth, LinkBudget};
use crate::ris::{optimal_phases, RisPhaseMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodebookSize {
    pub azimuth: usize,
    pub elevation: usize,
}

impl CodebookSize {
    pub fn build(&self) -> Result<Codebook> {
        Codebook::new(self.azimuth, self.elevation)
    }
}

/// Radio parameters shared by every alignment method.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemConfig {
    pub arrays: ArraySet,
    pub total_power_dbm: f64,
    pub noise_power_dbm: f64,
    /// UEs served together; the power is split evenly over them.
    pub group_size: usize,
    /// Exhaustive-search grid, also the reference beamwidth for accuracy.
    pub dense_codebook: CodebookSize,
    pub coarse_codebook: CodebookSize,
    /// Per-axis refinement of the hierarchical second stage.
    pub refine: usize,
    /// Seeds channel phases and the grouping of UEs.
    pub seed: u64,
}

impl SystemConfig {
    pub fn for_carrier(carrier_hz: f64) -> Self {
        let wl = wavelength_for(carrier_hz);
        Self {
            arrays: ArraySet {
                mbs: UpaConfig::half_wavelength(4, 4, wl),
                ue: UpaConfig::half_wavelength(2, 2, wl),
                ris: UpaConfig::half_wavelength(4, 4, wl),
            },
            total_power_dbm: 10.0,
            noise_power_dbm: -100.0,
            group_size: 4,
            dense_codebook: CodebookSize { azimuth: 64, elevation: 16 },
            coarse_codebook: CodebookSize { azimuth: 16, elevation: 4 },
            refine: 4,
            seed: 0,
        }
    }

    pub fn budget(&self) -> Result<LinkBudget> {
        LinkBudget::from_dbm(self.total_power_dbm, self.noise_power_dbm, self.group_size)
    }

    pub fn beamwidth(&self) -> Beamwidth {
        Beamwidth::codebook_step(self.dense_codebook.azimuth, self.dense_codebook.elevation)
    }

    pub fn search_method(&self, method: Method) -> Result<SearchMethod> {
        Ok(match method {
            Method::AngleMap => SearchMethod::AngleMap,
            Method::Exhaustive => {
                SearchMethod::Exhaustive { first: self.dense_codebook.build()?, receive: self.dense_codebook.build()? }
            }
            Method::Hierarchical => SearchMethod::Hierarchical {
                first: self.coarse_codebook.build()?,
                receive: self.coarse_codebook.build()?,
                refine: self.refine,
            },
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.arrays.mbs.validate()?;
        self.arrays.ue.validate()?;
        self.arrays.ris.validate()?;
        if self.group_size == 0 || self.refine == 0 {
            return Err(Error::Domain("group size and refine factor must be positive".into()));
        }
        let (d, c) = (self.dense_codebook, self.coarse_codebook);
        if c.azimuth * self.refine != d.azimuth || c.elevation * self.refine != d.elevation {
            log::warn!("hierarchical fine grid does not coincide with the exhaustive grid");
        }
        self.budget().map(|_| ())
    }
}

impl Default for SystemConfig {
    fn default() -> Self {
        Self::for_carrier(28e9)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    #[serde(rename = "anglemap")]
    AngleMap,
    Exhaustive,
    Hierarchical,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::AngleMap, Method::Exhaustive, Method::Hierarchical];

    pub fn name(self) -> &'static str {
        match self {
            Method::AngleMap => "anglemap",
            Method::Exhaustive => "exhaustive",
            Method::Hierarchical => "hierarchical",
        }
    }
}

/// One scalar angle the angle map predicts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AngleKind {
    LosAodAzimuth,
    LosAodElevation,
    LosAoaAzimuth,
    LosAoaElevation,
    NlosRisAodAzimuth,
    NlosRisAodElevation,
    NlosUeAoaAzimuth,
    NlosUeAoaElevation,
}

impl AngleKind {
    pub const ALL: [AngleKind; 8] = [
        AngleKind::LosAodAzimuth,
        AngleKind::LosAodElevation,
        AngleKind::LosAoaAzimuth,
        AngleKind::LosAoaElevation,
        AngleKind::NlosRisAodAzimuth,
        AngleKind::NlosRisAodElevation,
        AngleKind::NlosUeAoaAzimuth,
        AngleKind::NlosUeAoaElevation,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AngleKind::LosAodAzimuth => "los_aod_azimuth",
            AngleKind::LosAodElevation => "los_aod_elevation",
            AngleKind::LosAoaAzimuth => "los_aoa_azimuth",
            AngleKind::LosAoaElevation => "los_aoa_elevation",
            AngleKind::NlosRisAodAzimuth => "nlos_ris_aod_azimuth",
            AngleKind::NlosRisAodElevation => "nlos_ris_aod_elevation",
            AngleKind::NlosUeAoaAzimuth => "nlos_ue_aoa_azimuth",
            AngleKind::NlosUeAoaElevation => "nlos_ue_aoa_elevation",
        }
    }

    pub fn blockage(self) -> BlockageFlag {
        if (self as usize) < 4 {
            BlockageFlag::Los
        } else {
            BlockageFlag::Nlos
        }
    }

    pub fn is_azimuth(self) -> bool {
        (self as usize) % 2 == 0
    }

    /// The angle out of a `(first, receive)` pair of the matching class.
    pub fn pick(self, blockage: BlockageFlag, pair: [Direction; 2]) -> Option<f64> {
        if blockage != self.blockage() {
            return None;
        }
        let d = pair[(self as usize / 2) % 2];
        Some(if self.is_azimuth() { d.azimuth } else { d.elevation })
    }

    fn error(self, a: f64, b: f64) -> f64 {
        if self.is_azimuth() {
            circular_distance(a, b)
        } else {
            (a - b).abs()
        }
    }
}

/// Beams chosen for one UE: the mBS beam on a direct link or the RIS
/// reflection on an RIS link, plus the UE combiner.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Alignment {
    pub blockage: BlockageFlag,
    pub first: Direction,
    pub receive: Direction,
}

impl Alignment {
    fn pair(&self) -> [Direction; 2] {
        [self.first, self.receive]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AngleError {
    pub angle: AngleKind,
    /// Mean absolute error in radians (circular for azimuths).
    pub mean_abs_error: f64,
    pub count: usize,
}

/// Average group sum rate in bit/s/Hz.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupRates {
    pub mixed: f64,
    pub all_los: f64,
    pub all_nlos: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodReport {
    pub method: Method,
    /// Fraction of UEs with the right class and every angle within half
    /// the dense-codebook beamwidth.
    pub accuracy: f64,
    /// UEs for which no alignment was produced.
    pub failures: usize,
    pub angle_errors: Vec<AngleError>,
    /// Interference-free sum rate.
    pub sum_rate: GroupRates,
    /// Sum rate of mixed groups with inter-user interference, using ZF
    /// combining when the group admits it and steered combiners otherwise.
    pub sinr_sum_rate: f64,
    pub probes_per_ue: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub ue_count: usize,
    pub group_size: usize,
    pub methods: Vec<MethodReport>,
}

impl EvaluationReport {
    pub fn method(&self, method: Method) -> Option<&MethodReport> {
        self.methods.iter().find(|m| m.method == method)
    }
}

/// Channels of a fixed set of UEs, scored under any alignment method.
pub struct Evaluator {
    system: SystemConfig,
    budget: LinkBudget,
    records: Vec<AngleRecord>,
    channels: Vec<ChannelSet>,
    to_ris: PathAngles,
    dense: Codebook,
    coarse: Codebook,
    groups: Vec<Vec<usize>>,
    los_groups: Vec<Vec<usize>>,
    nlos_groups: Vec<Vec<usize>>,
}

impl Evaluator {
    pub fn new(scene: &Scene, ue_height: f64, records: &[AngleRecord], system: &SystemConfig) -> Result<Self> {
        system.validate()?;
        scene.validate()?;
        let to_ris = PathAngles::between(Hop::MbsToRis, scene.mbs_position, scene.ris_position)?;
        let channels = records
            .par_iter()
            .enumerate()
            .map(|(i, r)| {
                let p = Point3::new(r.ue_xy[0], r.ue_xy[1], ue_height);
                let paths = path_angles_for(scene, p)?;
                let target = TargetAngles::from_paths(&paths)?;
                if target.blockage() != r.blockage {
                    return Err(Error::Compatibility(format!("record {i} disagrees with the scene geometry")));
                }
                let distances: Vec<f64> = match r.blockage {
                    BlockageFlag::Los => vec![scene.mbs_position.distance(p)],
                    BlockageFlag::Nlos => {
                        vec![scene.mbs_position.distance(scene.ris_position), scene.ris_position.distance(p)]
                    }
                };
                build_channels(&system.arrays, &paths, &distances, system.seed.wrapping_add(i as u64))
            })
            .collect::<Result<Vec<_>>>()?;

        let n = system.group_size;
        let chunk = |ids: Vec<usize>| -> Vec<Vec<usize>> { ids.chunks_exact(n).map(<[usize]>::to_vec).collect() };
        let mut mixed: Vec<usize> = (0..records.len()).collect();
        mixed.shuffle(&mut ChaCha8Rng::seed_from_u64(system.seed));
        let of = |flag| (0..records.len()).filter(|&i| records[i].blockage == flag).collect::<Vec<_>>();
        Ok(Self {
            system: *system,
            budget: system.budget()?,
            records: records.to_vec(),
            channels,
            to_ris,
            dense: system.dense_codebook.build()?,
            coarse: system.coarse_codebook.build()?,
            groups: chunk(mixed),
            los_groups: chunk(of(BlockageFlag::Los)),
            nlos_groups: chunk(of(BlockageFlag::Nlos)),
        })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[AngleRecord] {
        &self.records
    }

    /// Effective channel, transmit beam and combiner realised by `a` for UE `i`.
    /// An RIS alignment points the mBS at the RIS and configures the RIS
    /// toward `a.first`; a direct alignment leaves the RIS unconfigured.
    fn link(&self, i: usize, a: &Alignment) -> Result<(ComplexMatrix, ComplexMatrix, ComplexMatrix)> {
        let arr = &self.system.arrays;
        let (phi, f) = match a.blockage {
            BlockageFlag::Los => (RisPhaseMatrix::zeros(arr.ris.n_x, arr.ris.n_z), beam_toward(&arr.mbs, a.first)),
            BlockageFlag::Nlos => (
                optimal_phases(self.to_ris.aoa, a.first, (arr.ris.n_x, arr.ris.n_z), arr.ris.wavenumber_spacing()),
                beam_toward(&arr.mbs, self.to_ris.aod),
            ),
        };
        Ok((self.channels[i].effective(&phi)?, f, beam_toward(&arr.ue, a.receive)))
    }

    fn search_link(&self, i: usize) -> SearchLink {
        let arr = &self.system.arrays;
        let ch = &self.channels[i];
        match ch.blockage {
            BlockageFlag::Los => SearchLink::Direct { omega: ch.h_los.clone().expect("LoS channel"), tx: arr.mbs },
            BlockageFlag::Nlos => SearchLink::Ris(RisLink {
                h1: ch.h1.clone().expect("first hop"),
                h2: ch.h2.clone().expect("second hop"),
                transmit: beam_toward(&arr.mbs, self.to_ris.aod),
                incident: self.to_ris.aoa,
                ris: arr.ris,
            }),
        }
    }

    /// Beam search over the true channel of each UE. The search knows
    /// whether a UE is reached directly or through the RIS.
    pub fn search_alignments(&self, method: Method) -> Result<Vec<Alignment>> {
        let rx = &self.system.arrays.ue;
        (0..self.len())
            .into_par_iter()
            .map(|i| {
                let link = self.search_link(i);
                let out = match method {
                    Method::Exhaustive => exhaustive_search(&link, rx, &self.dense, &self.dense)?,
                    Method::Hierarchical => {
                        hierarchical_search(&link, rx, &self.coarse, &self.coarse, self.system.refine)?
                    }
                    Method::AngleMap => return Err(Error::Contract("angle map is not a search method".into())),
                };
                Ok(Alignment { blockage: self.records[i].blockage, first: out.first, receive: out.receive })
            })
            .collect()
    }

    /// Angle-map predictions as bin-centre alignments; `None` where the
    /// decoder did not close the sequence.
    pub fn anglemap_alignments(&self, model: &AngleMapModel) -> Result<Vec<Option<Alignment>>> {
        self.records
            .par_iter()
            .map(|r| match model.predict_one(r.ue_xy) {
                Ok(p) => Ok(Some(Alignment { blockage: p.blockage, first: p.angles[0], receive: p.angles[1] })),
                Err(Error::Truncation(_)) => Ok(None),
                Err(e) => Err(e),
            })
            .collect()
    }

    /// Moves both directions to the centre of their dense-codebook cell.
    pub fn snap(&self, a: &Alignment) -> Alignment {
        Alignment { first: self.dense.nearest(a.first), receive: self.dense.nearest(a.receive), ..*a }
    }

    fn ue_rate(&self, i: usize, a: Option<&Alignment>) -> Result<f64> {
        match a {
            None => Ok(0.0),
            Some(a) => {
                let (omega, f, w) = self.link(i, a)?;
                interference_free_rate(&w, &omega, &f, &self.budget)
            }
        }
    }

    fn group_sinr_rate(&self, group: &[usize], aligned: &[Option<Alignment>]) -> Result<f64> {
        let n_t = self.system.arrays.mbs.len();
        let n_r = self.system.arrays.ue.len();
        let mut effective = Vec::with_capacity(group.len());
        let mut bank = BeamformerBank { transmit: vec![], receive: vec![] };
        for &i in group {
            match &aligned[i] {
                Some(a) => {
                    let (omega, f, w) = self.link(i, a)?;
                    effective.push(omega);
                    bank.transmit.push(f);
                    bank.receive.push(w);
                }
                None => {
                    effective.push(ComplexMatrix::zeros(n_r, n_t));
                    bank.transmit.push(ComplexMatrix::zeros(n_t, 1));
                    bank.receive.push(ComplexMatrix::zeros(n_r, 1));
                }
            }
        }
        if let Ok(w) = zf_receive_matrix(&effective, &bank.transmit) {
            bank.receive = normalized_receive_beams(&w);
        }
        let sinrs = (0..group.len()).map(|u| sinr(u, &effective, &bank, &self.budget)).collect::<Result<Vec<_>>>()?;
        Ok(sum_rate(&sinrs))
    }

    /// Scores `aligned` (raw angles, for accuracy and errors) with
    /// `rate_aligned` (the beams actually used, for rates).
    pub fn report(
        &self,
        method: Method,
        aligned: &[Option<Alignment>],
        rate_aligned: &[Option<Alignment>],
    ) -> Result<MethodReport> {
        if aligned.len() != self.len() || rate_aligned.len() != self.len() {
            return Err(Error::Contract(format!("{} alignments for {} UEs", aligned.len(), self.len())));
        }
        let bw = self.system.beamwidth();
        let mut hits = 0usize;
        let mut err_sum = [0.0; 8];
        let mut err_n = [0usize; 8];
        for (r, a) in self.records.iter().zip(aligned) {
            let Some(a) = a else { continue };
            if a.blockage != r.blockage {
                continue;
            }
            let truth = r.target_angles.predicted_pair();
            if within_beam(a.first, truth[0], bw) && within_beam(a.receive, truth[1], bw) {
                hits += 1;
            }
            for (k, kind) in AngleKind::ALL.iter().enumerate() {
                if let (Some(p), Some(t)) = (kind.pick(a.blockage, a.pair()), kind.pick(r.blockage, truth)) {
                    err_sum[k] += kind.error(p, t);
                    err_n[k] += 1;
                }
            }
        }
        let angle_errors = AngleKind::ALL
            .iter()
            .enumerate()
            .filter(|(k, _)| err_n[*k] > 0)
            .map(|(k, &angle)| AngleError { angle, mean_abs_error: err_sum[k] / err_n[k] as f64, count: err_n[k] })
            .collect();

        let rates = (0..self.len()).into_par_iter().map(|i| self.ue_rate(i, rate_aligned[i].as_ref())).collect::<Result<Vec<_>>>()?;
        let mean_group = |groups: &[Vec<usize>]| {
            if groups.is_empty() {
                0.0
            } else {
                groups.iter().map(|g| g.iter().map(|&i| rates[i]).sum::<f64>()).sum::<f64>() / groups.len() as f64
            }
        };
        let sum_rate = GroupRates {
            mixed: mean_group(&self.groups),
            all_los: mean_group(&self.los_groups),
            all_nlos: mean_group(&self.nlos_groups),
        };
        let sinr_rates =
            self.groups.par_iter().map(|g| self.group_sinr_rate(g, rate_aligned)).collect::<Result<Vec<_>>>()?;
        let sinr_sum_rate =
            if sinr_rates.is_empty() { 0.0 } else { sinr_rates.iter().sum::<f64>() / sinr_rates.len() as f64 };

        Ok(MethodReport {
            method,
            accuracy: if self.is_empty() { 0.0 } else { hits as f64 / self.len() as f64 },
            failures: aligned.iter().filter(|a| a.is_none()).count(),
            angle_errors,
            sum_rate,
            sinr_sum_rate,
            probes_per_ue: self.system.search_method(method)?.probe_count(),
        })
    }

    pub fn evaluate_search(&self, method: Method) -> Result<MethodReport> {
        let aligned: Vec<Option<Alignment>> = self.search_alignments(method)?.into_iter().map(Some).collect();
        self.report(method, &aligned, &aligned)
    }

    /// Accuracy from bin-centre predictions; rates from the same beams
    /// snapped onto the exhaustive-search grid.
    pub fn evaluate_anglemap(&self, model: &AngleMapModel) -> Result<MethodReport> {
        let raw = self.anglemap_alignments(model)?;
        let snapped: Vec<Option<Alignment>> = raw.iter().map(|a| a.as_ref().map(|a| self.snap(a))).collect();
        self.report(Method::AngleMap, &raw, &snapped)
    }

    pub fn evaluate(&self, model: &AngleMapModel) -> Result<EvaluationReport> {
        let mut methods = vec![self.evaluate_anglemap(model)?];
        for m in [Method::Exhaustive, Method::Hierarchical] {
            methods.push(self.evaluate_search(m)?);
        }
        Ok(EvaluationReport { ue_count: self.len(), group_size: self.system.group_size, methods })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompareRow {
    pub method: Method,
    pub dataset_size: usize,
    pub accuracy: f64,
    pub sum_rate: f64,
    pub probes: u64,
    /// Final validation loss of the angle map trained at this size.
    pub val_loss: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompareOutcome {
    pub rows: Vec<CompareRow>,
    pub reports: Vec<(usize, EvaluationReport)>,
}

/// Settings of a dataset-size sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct CompareSpec<'a> {
    pub scene: &'a SyntheticScene,
    pub sizes: &'a [usize],
    pub jitter: f64,
    pub transformer: TransformerConfig,
    pub vocab: TokenVocab,
    pub system: SystemConfig,
    /// Seeds the placement jitter of each generated dataset.
    pub data_seed: u64,
    /// Seeds the split, initialisation and batch order.
    pub train_seed: u64,
}

/// Trains one angle map per dataset size and scores every method on the
/// shared `evaluation` set. Searches do not depend on the training data,
/// so they are run once and repeated on every size.
pub fn compare(spec: &CompareSpec, evaluation: &[AngleRecord]) -> Result<CompareOutcome> {
    let ev = Evaluator::new(&spec.scene.scene(), spec.scene.ue_height, evaluation, &spec.system)?;
    let searches = [ev.evaluate_search(Method::Exhaustive)?, ev.evaluate_search(Method::Hierarchical)?];
    let mut rows = Vec::new();
    let mut reports = Vec::new();
    for &size in spec.sizes {
        let records = spec.scene.generate(size, spec.jitter, spec.data_seed)?.records;
        let trained = anglemap::train(&records, &spec.transformer, &spec.vocab, &spec.scene.region(), spec.train_seed)?;
        let am = ev.evaluate_anglemap(&trained.model)?;
        log::info!("size {size}: anglemap accuracy {:.4}", am.accuracy);
        let val_loss = trained.history.last().map(|h| h.val_loss);
        let mut methods = vec![am];
        methods.extend(searches.iter().cloned());
        for m in &methods {
            rows.push(CompareRow {
                method: m.method,
                dataset_size: size,
                accuracy: m.accuracy,
                sum_rate: m.sum_rate.mixed,
                probes: m.probes_per_ue,
                val_loss: if m.method == Method::AngleMap { val_loss } else { None },
            });
        }
        reports.push((size, EvaluationReport { ue_count: ev.len(), group_size: spec.system.group_size, methods }));
    }
    Ok(CompareOutcome { rows, reports })
}

/// Predicted and true values of one angle over a grid; `None` where the
/// angle does not apply (other UE class) or decoding failed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AngleGrid {
    pub angle: AngleKind,
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    /// Row-major, `ys.len()` rows of `xs.len()` values.
    pub predicted: Vec<Vec<Option<f64>>>,
    pub truth: Vec<Vec<Option<f64>>>,
}

type PairGrid = Vec<Vec<Option<(BlockageFlag, [Direction; 2])>>>;

fn fill(kind: AngleKind, cells: &PairGrid) -> Vec<Vec<Option<f64>>> {
    cells.iter().map(|row| row.iter().map(|c| c.and_then(|(b, pair)| kind.pick(b, pair))).collect()).collect()
}

/// Exact angles over the unjittered grid, from geometry alone.
pub fn truth_grids(scene: &Scene, grid: &GridSpec) -> Result<Vec<AngleGrid>> {
    let (xs, ys) = grid.centres();
    let cells: PairGrid = ys
        .iter()
        .map(|&y| {
            xs.iter()
                .map(|&x| {
                    let p = Point3::new(x, y, grid.z);
                    if p == scene.mbs_position || p == scene.ris_position {
                        return Ok(None);
                    }
                    let t = TargetAngles::from_paths(&path_angles_for(scene, p)?)?;
                    Ok(Some((t.blockage(), t.predicted_pair())))
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    Ok(AngleKind::ALL
        .iter()
        .map(|&angle| AngleGrid {
            angle,
            xs: xs.clone(),
            ys: ys.clone(),
            predicted: Vec::new(),
            truth: fill(angle, &cells),
        })
        .collect())
}

/// Predicted angle maps next to the geometric truth over `grid`, which
/// must lie inside the region the model was trained on.
pub fn export_anglemap(model: &AngleMapModel, scene: &Scene, grid: &GridSpec) -> Result<Vec<AngleGrid>> {
    let (r, m) = (&grid.region, &model.region);
    if r.x[0] < m.x[0] || r.x[1] > m.x[1] || r.y[0] < m.y[0] || r.y[1] > m.y[1] || grid.rows == 0 || grid.cols == 0 {
        return Err(Error::Domain("export grid lies outside the trained region".into()));
    }
    let (xs, ys) = grid.centres();
    let cells: PairGrid = ys
        .par_iter()
        .map(|&y| {
            xs.iter()
                .map(|&x| match model.predict_one([x, y]) {
                    Ok(p) => Ok(Some((p.blockage, p.angles))),
                    Err(Error::Truncation(_)) => Ok(None),
                    Err(e) => Err(e),
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    let mut grids = truth_grids(scene, grid)?;
    for g in &mut grids {
        g.predicted = fill(g.angle, &cells);
    }
    Ok(grids)
}
