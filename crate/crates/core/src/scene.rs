//! Hidden scenes made of point scatterers, the procedural shape library and
//! the random augmentation used to generate training-style scenes.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{NlosError, Result};
use crate::grid::ScanGrid;
use crate::volume::DepthAxis;

pub const ALBEDO_MIN: f64 = 0.3;
pub const ALBEDO_MAX: f64 = 1.0;

/// Half extent of the cube the hidden objects must stay inside: x, y in
/// `[-1, 1]` m and z in `(0, 2]` m.
const CUBE_HALF_M: f64 = 1.0;
const MAX_SHIFT_ATTEMPTS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scatterer {
    pub position: [f64; 3],
    pub albedo: f64,
    pub normal: Option<[f64; 3]>,
}

impl Scatterer {
    pub fn new(position: [f64; 3], albedo: f64, normal: Option<[f64; 3]>) -> Result<Self> {
        if position.iter().any(|c| !c.is_finite()) {
            return Err(NlosError::Geometry(format!("non-finite position {position:?}")));
        }
        if !(position[2] > 0.0) {
            return Err(NlosError::Geometry(format!(
                "scatterer at {position:?} is not in front of the wall (z must be > 0)"
            )));
        }
        if !(ALBEDO_MIN..=ALBEDO_MAX).contains(&albedo) {
            return Err(NlosError::Domain(format!(
                "albedo {albedo} outside [{ALBEDO_MIN}, {ALBEDO_MAX}]"
            )));
        }
        let normal = match normal {
            None => None,
            Some(n) => {
                let len = (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt();
                if !(len > 0.0) || !len.is_finite() {
                    return Err(NlosError::Geometry(format!("degenerate normal {n:?}")));
                }
                Some([n[0] / len, n[1] / len, n[2] / len])
            }
        };
        Ok(Self {
            position,
            albedo,
            normal,
        })
    }
}

/// A hidden scene: a list of Lambertian point scatterers.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Scene {
    points: Vec<Scatterer>,
}

impl Scene {
    pub fn new(points: Vec<Scatterer>) -> Self {
        Self { points }
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn points(&self) -> &[Scatterer] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Points of `self` followed by those of `other`.
    pub fn union(&self, other: &Scene) -> Scene {
        let mut points = self.points.clone();
        points.extend_from_slice(&other.points);
        Scene { points }
    }

    /// Ground-truth depth map on the lateral grid of a reconstruction: each
    /// pixel takes the nearest scatterer whose (x, y) falls inside it,
    /// normalised over the depth range. Empty pixels read 1.0.
    pub fn depth_map(&self, grid: &ScanGrid, depth: &DepthAxis) -> Array2<f64> {
        let mut map = Array2::from_elem((grid.ny(), grid.nx()), 1.0);
        let dp = grid.delta_p_m();
        let span = depth.z_far_m - depth.z_near_m;
        for p in &self.points {
            let j = ((p.position[0] - grid.x_m(0)) / dp).round();
            let i = ((p.position[1] - grid.y_m(0)) / dp).round();
            if j < 0.0 || i < 0.0 || j >= grid.nx() as f64 || i >= grid.ny() as f64 {
                continue;
            }
            let d = ((p.position[2] - depth.z_near_m) / span).clamp(0.0, 1.0);
            let cell = &mut map[[i as usize, j as usize]];
            if d < *cell {
                *cell = d;
            }
        }
        map
    }
}

impl FromStr for Scene {
    type Err = NlosError;

    /// Parses `x y z albedo [nx ny nz]` lines; `#` starts a comment.
    fn from_str(text: &str) -> Result<Self> {
        let mut points = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<f64> = line
                .split_whitespace()
                .map(|f| {
                    f.parse::<f64>().map_err(|_| {
                        NlosError::Configuration(format!(
                            "scene line {}: cannot parse `{f}`",
                            lineno + 1
                        ))
                    })
                })
                .collect::<Result<_>>()?;
            let normal = match fields.len() {
                4 => None,
                7 => Some([fields[4], fields[5], fields[6]]),
                n => {
                    return Err(NlosError::Configuration(format!(
                        "scene line {}: expected 4 or 7 fields, found {n}",
                        lineno + 1
                    )))
                }
            };
            let s = Scatterer::new([fields[0], fields[1], fields[2]], fields[3], normal)
                .map_err(|e| NlosError::Configuration(format!("scene line {}: {e}", lineno + 1)))?;
            points.push(s);
        }
        Ok(Scene { points })
    }
}

impl fmt::Display for Scene {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "# x y z albedo [nx ny nz]")?;
        for p in &self.points {
            let [x, y, z] = p.position;
            write!(f, "{x} {y} {z} {}", p.albedo)?;
            if let Some([a, b, c]) = p.normal {
                write!(f, " {a} {b} {c}")?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

/// Procedural stand-ins for dataset objects, centred on the origin.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaseShape {
    /// A single point, for point-spread and localisation studies.
    Point,
    PlanePatch,
    Box,
    SphereShell,
    /// Block letter "T".
    Glyph,
}

impl FromStr for BaseShape {
    type Err = NlosError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "point" => Ok(Self::Point),
            "plane_patch" | "plane" => Ok(Self::PlanePatch),
            "box" => Ok(Self::Box),
            "sphere_shell" | "sphere" => Ok(Self::SphereShell),
            "glyph" | "letter" => Ok(Self::Glyph),
            other => Err(NlosError::Configuration(format!("unknown base shape `{other}`"))),
        }
    }
}

impl BaseShape {
    /// Point positions and outward normals (normals face the wall, -z, for
    /// flat shapes; `None` for the bare point).
    pub fn points(self) -> Vec<([f64; 3], Option<[f64; 3]>)> {
        const FACING: Option<[f64; 3]> = Some([0.0, 0.0, -1.0]);
        match self {
            BaseShape::Point => vec![([0.0, 0.0, 0.0], None)],
            BaseShape::PlanePatch => {
                let n = 12;
                let half = 0.3;
                let step = 2.0 * half / (n - 1) as f64;
                let mut pts = Vec::with_capacity(n * n);
                for i in 0..n {
                    for j in 0..n {
                        pts.push(([-half + j as f64 * step, -half + i as f64 * step, 0.0], FACING));
                    }
                }
                pts
            }
            BaseShape::Box => {
                let n = 6;
                let half = 0.25;
                let step = 2.0 * half / (n - 1) as f64;
                let mut pts = Vec::new();
                for axis in 0..3 {
                    for sign in [-1.0, 1.0] {
                        for a in 0..n {
                            for b in 0..n {
                                let mut p = [0.0; 3];
                                let mut nrm = [0.0; 3];
                                p[axis] = sign * half;
                                nrm[axis] = sign;
                                p[(axis + 1) % 3] = -half + a as f64 * step;
                                p[(axis + 2) % 3] = -half + b as f64 * step;
                                pts.push((p, Some(nrm)));
                            }
                        }
                    }
                }
                pts
            }
            BaseShape::SphereShell => {
                let n = 200;
                let radius = 0.3;
                let golden = PI * (3.0 - 5f64.sqrt());
                (0..n)
                    .map(|k| {
                        let y = 1.0 - 2.0 * (k as f64 + 0.5) / n as f64;
                        let rho = (1.0 - y * y).sqrt();
                        let phi = golden * k as f64;
                        let dir = [rho * phi.cos(), y, rho * phi.sin()];
                        ([radius * dir[0], radius * dir[1], radius * dir[2]], Some(dir))
                    })
                    .collect()
            }
            BaseShape::Glyph => {
                const ROWS: [&str; 7] = [
                    "#####", "..#..", "..#..", "..#..", "..#..", "..#..", "..#..",
                ];
                let cell = 0.1;
                let mut pts = Vec::new();
                for (r, row) in ROWS.iter().enumerate() {
                    for (c, ch) in row.chars().enumerate() {
                        if ch != '#' {
                            continue;
                        }
                        // 3x3 samples per lit cell.
                        for a in 0..3 {
                            for b in 0..3 {
                                let x = (c as f64 - 2.0) * cell + (b as f64 - 1.0) * cell / 3.0;
                                let y = (3.0 - r as f64) * cell + (a as f64 - 1.0) * cell / 3.0;
                                pts.push(([x, y, 0.0], FACING));
                            }
                        }
                    }
                }
                pts
            }
        }
    }
}

/// Random rigid-plus-scale augmentation ranges.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentParams {
    /// Each Euler angle is drawn from `[-rotation_deg, rotation_deg]`.
    pub rotation_deg: f64,
    pub scale: [f64; 2],
    /// Each shift component is drawn from `[-shift_m, shift_m]`.
    pub shift_m: f64,
    pub center_distance_m: f64,
}

impl Default for AugmentParams {
    fn default() -> Self {
        Self {
            rotation_deg: 15.0,
            scale: [0.8, 1.2],
            shift_m: 0.3,
            center_distance_m: 1.0,
        }
    }
}

impl AugmentParams {
    /// Narrower ranges used for validation scenes.
    pub fn validation() -> Self {
        Self {
            rotation_deg: 5.0,
            scale: [1.0, 1.0],
            shift_m: 0.1,
            center_distance_m: 1.0,
        }
    }

    pub fn identity() -> Self {
        Self {
            rotation_deg: 0.0,
            scale: [1.0, 1.0],
            shift_m: 0.0,
            center_distance_m: 1.0,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.scale[0] > 0.0) || self.scale[1] < self.scale[0] {
            return Err(NlosError::Configuration(format!(
                "scale range {:?} must be positive and ordered",
                self.scale
            )));
        }
        if !(self.rotation_deg >= 0.0) || !(self.shift_m >= 0.0) {
            return Err(NlosError::Configuration(
                "rotation and shift ranges must be non-negative".into(),
            ));
        }
        if !(self.center_distance_m > 0.0) || self.center_distance_m > 2.0 * CUBE_HALF_M {
            return Err(NlosError::Configuration(format!(
                "centre distance {} m outside the 2 m cube",
                self.center_distance_m
            )));
        }
        Ok(())
    }
}

fn rotation(ax: f64, ay: f64, az: f64) -> [[f64; 3]; 3] {
    let (sx, cx) = ax.sin_cos();
    let (sy, cy) = ay.sin_cos();
    let (sz, cz) = az.sin_cos();
    // Rz * Ry * Rx
    [
        [cz * cy, cz * sy * sx - sz * cx, cz * sy * cx + sz * sx],
        [sz * cy, sz * sy * sx + cz * cx, sz * sy * cx - cz * sx],
        [-sy, cy * sx, cy * cx],
    ]
}

fn apply(m: &[[f64; 3]; 3], v: [f64; 3]) -> [f64; 3] {
    [
        m[0][0] * v[0] + m[0][1] * v[1] + m[0][2] * v[2],
        m[1][0] * v[0] + m[1][1] * v[1] + m[1][2] * v[2],
        m[2][0] * v[0] + m[2][1] * v[1] + m[2][2] * v[2],
    ]
}

fn uniform<R: Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    if hi > lo {
        rng.random_range(lo..hi)
    } else {
        lo
    }
}

fn inside_cube(p: &[f64; 3]) -> bool {
    p[0].abs() <= CUBE_HALF_M
        && p[1].abs() <= CUBE_HALF_M
        && p[2] > 0.0
        && p[2] <= 2.0 * CUBE_HALF_M
}

/// Draws an augmented copy of `base`: rotate, scale, move to the centre
/// distance, then shift. A shift that pushes the object out of the 2 m cube
/// is redrawn up to 100 times.
pub fn sample_scene<R: Rng + ?Sized>(
    rng: &mut R,
    base: BaseShape,
    augment: &AugmentParams,
) -> Result<Scene> {
    augment.validate()?;
    let r = augment.rotation_deg.to_radians();
    let angles = [
        uniform(rng, -r, r),
        uniform(rng, -r, r),
        uniform(rng, -r, r),
    ];
    let rot = rotation(angles[0], angles[1], angles[2]);
    let scale = uniform(rng, augment.scale[0], augment.scale[1]);

    let placed: Vec<([f64; 3], Option<[f64; 3]>)> = base
        .points()
        .into_iter()
        .map(|(p, n)| {
            let q = apply(&rot, p);
            let q = [
                q[0] * scale,
                q[1] * scale,
                q[2] * scale + augment.center_distance_m,
            ];
            (q, n.map(|n| apply(&rot, n)))
        })
        .collect();

    for _ in 0..MAX_SHIFT_ATTEMPTS {
        let s = augment.shift_m;
        let shift = [uniform(rng, -s, s), uniform(rng, -s, s), uniform(rng, -s, s)];
        let moved: Vec<[f64; 3]> = placed
            .iter()
            .map(|(p, _)| [p[0] + shift[0], p[1] + shift[1], p[2] + shift[2]])
            .collect();
        if moved.iter().all(inside_cube) {
            let points = moved
                .into_iter()
                .zip(placed.iter())
                .map(|(p, (_, n))| {
                    let albedo = uniform(rng, ALBEDO_MIN, ALBEDO_MAX);
                    Scatterer::new(p, albedo, *n)
                })
                .collect::<Result<Vec<_>>>()?;
            return Ok(Scene::new(points));
        }
    }
    Err(NlosError::Geometry(format!(
        "augmented {base:?} left the 2 m cube after {MAX_SHIFT_ATTEMPTS} shift draws"
    )))
}
