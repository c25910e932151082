//! Location → angle datasets: synthetic generation, 3:1:1 splitting and a
//! flat CSV exchange format.

use std::io::{BufRead, Write};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::geometry::{path_angles_for, Aabb, BlockageFlag, Direction, Hop, PathAngles, Point3, Scene};

pub const CSV_COLUMNS: [&str; 9] = ["x", "y", "blockage", "theta_T", "phi_T", "theta_R", "phi_R", "theta_out", "phi_out"];
pub const DATASET_SCHEMA: &str = "ris-anglemap/dataset/1";

/// Beam-alignment labels of one UE.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum TargetAngles {
    /// mBS departure toward the UE and UE arrival from the mBS.
    Los { aod: Direction, aoa: Direction },
    /// mBS departure toward the RIS, RIS departure toward the UE and UE
    /// arrival from the RIS.
    Nlos { mbs_aod: Direction, ris_aod: Direction, ue_aoa: Direction },
}

impl TargetAngles {
    pub fn from_paths(paths: &[PathAngles]) -> Result<Self> {
        match paths {
            [d] if d.hop == Hop::Direct => Ok(Self::Los { aod: d.aod, aoa: d.aoa }),
            [a, b] if a.hop == Hop::MbsToRis && b.hop == Hop::RisToUe => {
                Ok(Self::Nlos { mbs_aod: a.aod, ris_aod: b.aod, ue_aoa: b.aoa })
            }
            _ => Err(Error::Contract("paths must be [direct] or [mbs_to_ris, ris_to_ue]".into())),
        }
    }

    pub fn blockage(&self) -> BlockageFlag {
        match self {
            Self::Los { .. } => BlockageFlag::Los,
            Self::Nlos { .. } => BlockageFlag::Nlos,
        }
    }

    /// The two directions the angle map predicts: `(aod, aoa)` for LoS,
    /// `(ris_aod, ue_aoa)` for NLoS.
    pub fn predicted_pair(&self) -> [Direction; 2] {
        match *self {
            Self::Los { aod, aoa } => [aod, aoa],
            Self::Nlos { ris_aod, ue_aoa, .. } => [ris_aod, ue_aoa],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AngleRecord {
    pub ue_xy: [f64; 2],
    pub blockage: BlockageFlag,
    pub target_angles: TargetAngles,
    pub scene_id: String,
}

/// First 8 bytes of the SHA-256 of `text`, in hex.
pub fn short_hash(text: &str) -> String {
    hex::encode(&Sha256::digest(text.as_bytes())[..8])
}

/// Short content hash identifying a scene.
pub fn scene_id(scene: &Scene) -> Result<String> {
    Ok(short_hash(&serde_json::to_string(scene)?))
}

/// Axis-aligned rectangle in the UE plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub x: [f64; 2],
    pub y: [f64; 2],
}

impl Region {
    pub fn contains(&self, xy: [f64; 2]) -> bool {
        (self.x[0]..=self.x[1]).contains(&xy[0]) && (self.y[0]..=self.y[1]).contains(&xy[1])
    }

    pub fn union(&self, other: &Region) -> Region {
        Region {
            x: [self.x[0].min(other.x[0]), self.x[1].max(other.x[1])],
            y: [self.y[0].min(other.y[0]), self.y[1].max(other.y[1])],
        }
    }
}

/// `rows × cols` sampling grid over a region at height `z`. Each point sits
/// at its cell centre, displaced by up to `jitter` half-cells when nonzero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub region: Region,
    pub rows: usize,
    pub cols: usize,
    pub z: f64,
    pub jitter: f64,
}

impl GridSpec {
    /// Near-square (in metres) grid with at least `count` points; points
    /// beyond `count` are dropped by [`generate`].
    pub fn for_count(region: Region, count: usize, z: f64, jitter: f64) -> Self {
        let (w, h) = (region.x[1] - region.x[0], region.y[1] - region.y[0]);
        let rows = ((count as f64 * h / w).sqrt().round() as usize).clamp(1, count.max(1));
        let cols = count.div_ceil(rows).max(1);
        Self { region, rows, cols, z, jitter }
    }

    pub fn count(&self) -> usize {
        self.rows * self.cols
    }

    /// Unjittered cell-centre coordinates: `(xs, ys)` with `cols` and `rows` entries.
    pub fn centres(&self) -> (Vec<f64>, Vec<f64>) {
        let dx = (self.region.x[1] - self.region.x[0]) / self.cols as f64;
        let dy = (self.region.y[1] - self.region.y[0]) / self.rows as f64;
        (
            (0..self.cols).map(|c| self.region.x[0] + (c as f64 + 0.5) * dx).collect(),
            (0..self.rows).map(|r| self.region.y[0] + (r as f64 + 0.5) * dy).collect(),
        )
    }

    fn points(&self, limit: usize, rng: &mut ChaCha8Rng) -> Vec<Point3> {
        let dx = (self.region.x[1] - self.region.x[0]) / self.cols as f64;
        let dy = (self.region.y[1] - self.region.y[0]) / self.rows as f64;
        let mut out = Vec::with_capacity(self.count().min(limit));
        'grid: for r in 0..self.rows {
            for c in 0..self.cols {
                if out.len() == limit {
                    break 'grid;
                }
                let (mut jx, mut jy) = (0.0, 0.0);
                if self.jitter > 0.0 {
                    jx = rng.gen_range(-0.5..0.5) * self.jitter * dx;
                    jy = rng.gen_range(-0.5..0.5) * self.jitter * dy;
                }
                let x = self.region.x[0] + (c as f64 + 0.5) * dx + jx;
                let y = self.region.y[0] + (r as f64 + 0.5) * dy + jy;
                out.push(Point3::new(x, y, self.z));
            }
        }
        out
    }
}

/// Two-zone street layout: mBS and RIS on one side, a wall shadowing the
/// zone behind it, which only the RIS can reach.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticScene {
    pub mbs: Point3,
    pub ris: Point3,
    pub wall: Aabb,
    pub los_zone: Region,
    pub nlos_zone: Region,
    pub ue_height: f64,
}

impl Default for SyntheticScene {
    fn default() -> Self {
        Self {
            mbs: Point3::new(489.504, 235.504, 6.0),
            ris: Point3::new(489.504, 287.504, 6.0),
            wall: Aabb::new(Point3::new(492.0, 270.0, 0.0), Point3::new(570.0, 272.0, 30.0)),
            los_zone: Region { x: [500.0, 560.0], y: [240.0, 258.0] },
            nlos_zone: Region { x: [500.0, 560.0], y: [292.0, 310.0] },
            ue_height: 1.5,
        }
    }
}

impl SyntheticScene {
    pub fn scene(&self) -> Scene {
        Scene { mbs_position: self.mbs, ris_position: self.ris, ue_positions: Vec::new(), obstacles: vec![self.wall] }
    }

    /// Bounding region of both zones, used for location tokens.
    pub fn region(&self) -> Region {
        self.los_zone.union(&self.nlos_zone)
    }

    /// Half the records in each zone (LoS first), `|#LoS − #NLoS| ≤ 1`.
    pub fn grids(&self, total: usize, jitter: f64) -> (GridSpec, usize, GridSpec, usize) {
        let los = total.div_ceil(2);
        let nlos = total / 2;
        (
            GridSpec::for_count(self.los_zone, los, self.ue_height, jitter),
            los,
            GridSpec::for_count(self.nlos_zone, nlos, self.ue_height, jitter),
            nlos,
        )
    }

    pub fn generate(&self, total: usize, jitter: f64, seed: u64) -> Result<Generated> {
        let (g_los, n_los, g_nlos, n_nlos) = self.grids(total, jitter);
        generate(&self.scene(), &[(g_los, n_los), (g_nlos, n_nlos)], seed)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Generated {
    pub records: Vec<AngleRecord>,
    /// Grid points dropped because they coincide with the mBS or the RIS.
    pub skipped: usize,
}

impl Generated {
    pub fn count(&self, flag: BlockageFlag) -> usize {
        self.records.iter().filter(|r| r.blockage == flag).count()
    }
}

/// Labels every grid point (up to the paired limit) from exact geometry.
pub fn generate(scene: &Scene, grids: &[(GridSpec, usize)], seed: u64) -> Result<Generated> {
    scene.validate()?;
    if grids.iter().all(|(g, limit)| g.count().min(*limit) == 0) {
        return Err(Error::Contract("sampling grid is empty".into()));
    }
    let id = scene_id(scene)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut records = Vec::new();
    let mut skipped = 0;
    for (grid, limit) in grids {
        for p in grid.points(*limit, &mut rng) {
            if p == scene.mbs_position || p == scene.ris_position {
                skipped += 1;
                continue;
            }
            let target = TargetAngles::from_paths(&path_angles_for(scene, p)?)?;
            records.push(AngleRecord { ue_xy: [p.x, p.y], blockage: target.blockage(), target_angles: target, scene_id: id.clone() });
        }
    }
    if skipped > 0 {
        log::warn!("skipped {skipped} grid points coinciding with the mBS or RIS");
    }
    Ok(Generated { records, skipped })
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DatasetSplit {
    pub train: Vec<AngleRecord>,
    pub validation: Vec<AngleRecord>,
    pub test: Vec<AngleRecord>,
}

/// `(train, validation, test)` sizes for a 3:1:1 partition.
pub fn split_sizes(n: usize) -> (usize, usize, usize) {
    let fifth = (n as f64 / 5.0).round() as usize;
    (n - 2 * fifth, fifth, fifth)
}

/// Seeded shuffle followed by a 3:1:1 partition.
pub fn split(records: &[AngleRecord], seed: u64) -> Result<DatasetSplit> {
    if records.len() < 5 {
        return Err(Error::Contract(format!("need at least 5 records to split, got {}", records.len())));
    }
    let mut order: Vec<usize> = (0..records.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (n_train, n_val, _) = split_sizes(records.len());
    let pick = |idx: &[usize]| idx.iter().map(|&i| records[i].clone()).collect::<Vec<_>>();
    Ok(DatasetSplit {
        train: pick(&order[..n_train]),
        validation: pick(&order[n_train..n_train + n_val]),
        test: pick(&order[n_train + n_val..]),
    })
}

/// Leading `# key=value …` line of every emitted file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FileHeader {
    pub schema: String,
    pub config_hash: String,
    pub scene_id: String,
}

impl FileHeader {
    pub fn render(&self) -> String {
        format!("# schema={} config={} scene={}", self.schema, self.config_hash, self.scene_id)
    }

    pub fn parse(line: &str) -> Option<Self> {
        let body = line.strip_prefix('#')?;
        let mut header = FileHeader { schema: String::new(), config_hash: String::new(), scene_id: String::new() };
        for part in body.split_whitespace() {
            let (k, v) = part.split_once('=')?;
            match k {
                "schema" => header.schema = v.to_string(),
                "config" => header.config_hash = v.to_string(),
                "scene" => header.scene_id = v.to_string(),
                _ => {}
            }
        }
        Some(header)
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Writes the header line, the column header and one row per record.
/// Floats use the shortest representation that parses back exactly.
pub fn export_csv<W: Write>(records: &[AngleRecord], config_hash: &str, mut out: W) -> Result<()> {
    let scene = records.first().map(|r| r.scene_id.clone()).unwrap_or_default();
    if records.iter().any(|r| r.scene_id != scene) {
        return Err(Error::Contract("all exported records must share one scene".into()));
    }
    let header = FileHeader { schema: DATASET_SCHEMA.into(), config_hash: config_hash.into(), scene_id: scene };
    writeln!(out, "{}", header.render())?;
    writeln!(out, "{}", CSV_COLUMNS.join(","))?;
    for r in records {
        let (t, rr, o) = match r.target_angles {
            TargetAngles::Los { aod, aoa } => (aod, aoa, None),
            TargetAngles::Nlos { mbs_aod, ris_aod, ue_aoa } => (mbs_aod, ue_aoa, Some(ris_aod)),
        };
        let row = [
            r.ue_xy[0].to_string(),
            r.ue_xy[1].to_string(),
            r.blockage.value().to_string(),
            t.azimuth.to_string(),
            t.elevation.to_string(),
            rr.azimuth.to_string(),
            rr.elevation.to_string(),
            opt(o.map(|d| d.azimuth)),
            opt(o.map(|d| d.elevation)),
        ];
        writeln!(out, "{}", row.join(","))?;
    }
    out.flush()?;
    Ok(())
}

/// Reads records written by [`export_csv`] or an external exporter using
/// the same columns. The `#` header line is optional; without it records
/// get the scene id `external`.
pub fn ingest_csv<R: BufRead>(input: R) -> Result<(Option<FileHeader>, Vec<AngleRecord>)> {
    let mut lines = input.lines();
    let mut header = None;
    let mut first = lines.next().transpose()?;
    let mut line_no = 1u64;
    if let Some(l) = first.as_deref() {
        if l.starts_with('#') {
            header = FileHeader::parse(l);
            first = lines.next().transpose()?;
            line_no += 1;
        }
    }
    let columns = first.ok_or(Error::Parse { line: line_no, message: "missing column header".into() })?;
    if columns.trim_end_matches('\r').split(',').collect::<Vec<_>>() != CSV_COLUMNS {
        return Err(Error::Parse { line: line_no, message: format!("expected columns {}", CSV_COLUMNS.join(",")) });
    }
    let scene = header.as_ref().map_or("external".to_string(), |h| h.scene_id.clone());
    let mut records = Vec::new();
    for line in lines {
        line_no += 1;
        let line = line?;
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        records.push(parse_row(line, &scene).map_err(|message| Error::Parse { line: line_no, message })?);
    }
    Ok((header, records))
}

fn parse_row(line: &str, scene: &str) -> std::result::Result<AngleRecord, String> {
    let cells: Vec<&str> = line.split(',').collect();
    if cells.len() != CSV_COLUMNS.len() {
        return Err(format!("expected {} fields, found {}", CSV_COLUMNS.len(), cells.len()));
    }
    let num = |i: usize| -> std::result::Result<f64, String> {
        cells[i].trim().parse::<f64>().map_err(|e| format!("column {}: {e}", CSV_COLUMNS[i]))
    };
    let dir = |a: usize| -> std::result::Result<Direction, String> {
        let d = Direction::new(num(a)?, num(a + 1)?);
        if d.in_range() {
            Ok(d)
        } else {
            Err(format!("angles in columns {}/{} out of range", CSV_COLUMNS[a], CSV_COLUMNS[a + 1]))
        }
    };
    let flag = cells[2].trim().parse::<u8>().map_err(|e| format!("column blockage: {e}"))?;
    let blockage = BlockageFlag::from_value(flag).map_err(|e| e.to_string())?;
    let has_out = !cells[7].trim().is_empty() || !cells[8].trim().is_empty();
    let target_angles = match (blockage, has_out) {
        (BlockageFlag::Los, false) => TargetAngles::Los { aod: dir(3)?, aoa: dir(5)? },
        (BlockageFlag::Nlos, true) => TargetAngles::Nlos { mbs_aod: dir(3)?, ris_aod: dir(7)?, ue_aoa: dir(5)? },
        (BlockageFlag::Los, true) => return Err("LoS row carries RIS angles".into()),
        (BlockageFlag::Nlos, false) => return Err("NLoS row lacks RIS angles".into()),
    };
    Ok(AngleRecord { ue_xy: [num(0)?, num(1)?], blockage, target_angles, scene_id: scene.to_string() })
}
