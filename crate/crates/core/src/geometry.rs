//! Scene description, line-of-sight classification and ground-truth path angles.
//!
//! Angles follow one convention everywhere: elevation is measured from the
//! +z axis and lies in `[0, π]`, azimuth is `atan2(dy, dx)` wrapped to `[0, 2π)`.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point3 {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn sub(self, other: Point3) -> [f64; 3] {
        [self.x - other.x, self.y - other.y, self.z - other.z]
    }

    pub fn distance(self, other: Point3) -> f64 {
        let d = self.sub(other);
        (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt()
    }

    fn coords(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }
}

/// Axis-aligned box given by its min and max corners.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: Point3,
    pub max: Point3,
}

impl Aabb {
    pub fn new(min: Point3, max: Point3) -> Self {
        Self { min, max }
    }

    /// Strict interior containment; points on a face are outside.
    pub fn contains_interior(&self, p: Point3) -> bool {
        let (lo, hi, c) = (self.min.coords(), self.max.coords(), p.coords());
        (0..3).all(|k| lo[k] < c[k] && c[k] < hi[k])
    }

    /// True when the open segment `a → b` passes through the open interior of
    /// the box. Grazing a face, edge or corner does not count.
    pub fn blocks_segment(&self, a: Point3, b: Point3) -> bool {
        let (lo, hi) = (self.min.coords(), self.max.coords());
        let (p, q) = (a.coords(), b.coords());
        let mut t_enter = 0.0_f64;
        let mut t_exit = 1.0_f64;
        for k in 0..3 {
            let d = q[k] - p[k];
            if d == 0.0 {
                if !(lo[k] < p[k] && p[k] < hi[k]) {
                    return false;
                }
                continue;
            }
            let (mut t0, mut t1) = ((lo[k] - p[k]) / d, (hi[k] - p[k]) / d);
            if t0 > t1 {
                std::mem::swap(&mut t0, &mut t1);
            }
            t_enter = t_enter.max(t0);
            t_exit = t_exit.min(t1);
            if t_enter >= t_exit {
                return false;
            }
        }
        t_enter < t_exit
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub mbs_position: Point3,
    pub ris_position: Point3,
    pub ue_positions: Vec<Point3>,
    pub obstacles: Vec<Aabb>,
}

impl Scene {
    /// Checks the structural invariants: distinct endpoints, an unobstructed
    /// mBS-RIS link and an RIS outside every obstacle.
    pub fn validate(&self) -> Result<()> {
        let mut points = vec![self.mbs_position, self.ris_position];
        points.extend(self.ue_positions.iter().copied());
        for i in 0..points.len() {
            for j in i + 1..points.len() {
                if points[i] == points[j] {
                    return Err(Error::DegenerateGeometry(format!(
                        "scene points {i} and {j} coincide at {:?}",
                        points[i]
                    )));
                }
            }
        }
        for (k, ob) in self.obstacles.iter().enumerate() {
            if ob.contains_interior(self.ris_position) {
                return Err(Error::DegenerateGeometry(format!("RIS lies inside obstacle {k}")));
            }
            if ob.blocks_segment(self.mbs_position, self.ris_position) {
                return Err(Error::DegenerateGeometry(format!("obstacle {k} blocks the mBS-RIS link")));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let scene: Scene = serde_json::from_str(text)?;
        scene.validate()?;
        Ok(scene)
    }

    fn ue(&self, ue_index: usize) -> Result<Point3> {
        self.ue_positions.get(ue_index).copied().ok_or_else(|| {
            Error::Contract(format!("UE index {ue_index} out of range ({} UEs)", self.ue_positions.len()))
        })
    }
}

/// Binary blocking coefficient: 1 when a direct mBS-UE path exists.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BlockageFlag {
    Nlos = 0,
    Los = 1,
}

impl BlockageFlag {
    pub fn value(self) -> u8 {
        self as u8
    }

    pub fn from_value(v: u8) -> Result<Self> {
        match v {
            0 => Ok(Self::Nlos),
            1 => Ok(Self::Los),
            other => Err(Error::Domain(format!("blockage flag must be 0 or 1, got {other}"))),
        }
    }

    pub fn is_los(self) -> bool {
        self == Self::Los
    }
}

/// Blockage of a free-standing UE position against the scene's obstacles.
pub fn classify_point(scene: &Scene, ue: Point3) -> BlockageFlag {
    if scene.obstacles.iter().any(|ob| ob.blocks_segment(scene.mbs_position, ue)) {
        BlockageFlag::Nlos
    } else {
        BlockageFlag::Los
    }
}

pub fn classify_blockage(scene: &Scene, ue_index: usize) -> Result<BlockageFlag> {
    Ok(classify_point(scene, scene.ue(ue_index)?))
}

/// Azimuth/elevation pair in radians.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Direction {
    pub azimuth: f64,
    pub elevation: f64,
}

impl Direction {
    pub const fn new(azimuth: f64, elevation: f64) -> Self {
        Self { azimuth, elevation }
    }

    pub fn in_range(&self) -> bool {
        (0.0..TAU).contains(&self.azimuth) && (0.0..=std::f64::consts::PI).contains(&self.elevation)
    }
}

/// Wraps any finite angle into `[0, 2π)`.
pub fn wrap_azimuth(a: f64) -> f64 {
    let mut w = a.rem_euclid(TAU);
    if w >= TAU {
        w = 0.0;
    }
    w
}

pub fn angles_between(from: Point3, to: Point3) -> Result<Direction> {
    let d = to.sub(from);
    let norm = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
    if norm == 0.0 {
        return Err(Error::DegenerateGeometry(format!("coincident points at {from:?}")));
    }
    let elevation = (d[2] / norm).clamp(-1.0, 1.0).acos();
    let azimuth = wrap_azimuth(d[1].atan2(d[0]));
    Ok(Direction { azimuth, elevation })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Hop {
    Direct,
    MbsToRis,
    RisToUe,
}

/// Departure and arrival directions of one dominant path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathAngles {
    pub hop: Hop,
    pub aod: Direction,
    pub aoa: Direction,
}

impl PathAngles {
    pub fn between(hop: Hop, from: Point3, to: Point3) -> Result<Self> {
        Ok(Self { hop, aod: angles_between(from, to)?, aoa: angles_between(to, from)? })
    }
}

/// Path angles of an arbitrary UE position (one entry if LoS, two if NLoS).
pub fn path_angles_for(scene: &Scene, ue: Point3) -> Result<Vec<PathAngles>> {
    match classify_point(scene, ue) {
        BlockageFlag::Los => Ok(vec![PathAngles::between(Hop::Direct, scene.mbs_position, ue)?]),
        BlockageFlag::Nlos => Ok(vec![
            PathAngles::between(Hop::MbsToRis, scene.mbs_position, scene.ris_position)?,
            PathAngles::between(Hop::RisToUe, scene.ris_position, ue)?,
        ]),
    }
}

pub fn path_angles(scene: &Scene, ue_index: usize) -> Result<Vec<PathAngles>> {
    path_angles_for(scene, scene.ue(ue_index)?)
}
