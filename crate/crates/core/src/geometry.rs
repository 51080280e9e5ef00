//! Mesh ingestion and the point-cloud / voxel representations used by the
//! internal indices.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::fmt::format_g;

pub type Point3 = [f64; 3];

/// Points sampled per model by default.
pub const DEFAULT_SAMPLE_COUNT: usize = 4096;
/// Default voxel grid resolution per axis.
pub const DEFAULT_VOXEL_RESOLUTION: u32 = 32;
/// Slack allowed outside `[0, 1]` when voxelizing normalized clouds.
pub const VOXEL_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub struct TriangleMesh {
    pub vertices: Vec<Point3>,
    pub triangles: Vec<[u32; 3]>,
}

#[derive(Clone, Copy, Debug, Default)]
pub struct ObjOptions {
    /// Skip faces that are not triangles and unrecognized record types
    /// instead of failing.
    pub lenient: bool,
}

// Records that carry no geometry we need; skipped in both modes.
const IGNORED_RECORDS: &[&str] = &["vn", "vt", "vp", "o", "g", "s", "usemtl", "mtllib", "l"];

/// Parses the `v` / triangular `f` subset of Wavefront OBJ (1-based indices).
pub fn load_obj(bytes: &[u8], opts: ObjOptions) -> Result<TriangleMesh> {
    let text = std::str::from_utf8(bytes).map_err(|e| Error::invalid(format!("OBJ is not UTF-8: {e}")))?;
    let mut vertices = Vec::new();
    let mut faces: Vec<(usize, [u64; 3])> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let lineno = lineno + 1;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut fields = line.split_whitespace();
        let tag = fields.next().unwrap_or_default();
        match tag {
            "v" => {
                let coords: Vec<f64> = fields
                    .map(|f| f.parse::<f64>().map_err(|_| Error::parse(lineno, format!("bad vertex coordinate {f:?}"))))
                    .collect::<Result<_>>()?;
                if !(3..=4).contains(&coords.len()) {
                    return Err(Error::parse(lineno, "vertex needs 3 coordinates"));
                }
                if coords[..3].iter().any(|c| !c.is_finite()) {
                    return Err(Error::parse(lineno, "non-finite vertex coordinate"));
                }
                vertices.push([coords[0], coords[1], coords[2]]);
            }
            "f" => {
                let idx: Vec<u64> = fields
                    .map(|f| {
                        let head = f.split('/').next().unwrap_or_default();
                        head.parse::<u64>().map_err(|_| Error::parse(lineno, format!("bad face index {f:?}")))
                    })
                    .collect::<Result<_>>()?;
                if idx.len() != 3 {
                    if opts.lenient {
                        continue;
                    }
                    return Err(Error::parse(lineno, format!("face has {} vertices; only triangles are supported", idx.len())));
                }
                faces.push((lineno, [idx[0], idx[1], idx[2]]));
            }
            t if IGNORED_RECORDS.contains(&t) => {}
            other => {
                if !opts.lenient {
                    return Err(Error::parse(lineno, format!("unsupported record {other:?}")));
                }
            }
        }
    }
    let n = vertices.len() as u64;
    let mut triangles = Vec::with_capacity(faces.len());
    for (lineno, face) in faces {
        if let Some(bad) = face.iter().find(|&&i| i == 0 || i > n) {
            return Err(Error::parse(lineno, format!("face index {bad} out of range 1..={n}")));
        }
        triangles.push(face.map(|i| (i - 1) as u32));
    }
    if triangles.is_empty() {
        return Err(Error::ZeroTriangles);
    }
    Ok(TriangleMesh { vertices, triangles })
}

impl TriangleMesh {
    pub fn read_obj(path: &Path, opts: ObjOptions) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        load_obj(&bytes, opts)
    }

    fn corners(&self, t: usize) -> [Point3; 3] {
        self.triangles[t].map(|i| self.vertices[i as usize])
    }

    pub fn triangle_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.corners(t);
        let u = sub(b, a);
        let v = sub(c, a);
        0.5 * norm(cross(u, v))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PointCloud {
    points: Vec<Point3>,
}

impl PointCloud {
    pub fn new(points: Vec<Point3>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptyCloud);
        }
        if points.iter().flatten().any(|c| !c.is_finite()) {
            return Err(Error::invalid("point cloud has non-finite coordinates"));
        }
        Ok(PointCloud { points })
    }

    pub fn points(&self) -> &[Point3] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn parse_xyz(text: &str) -> Result<Self> {
        let mut points = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let coords: Vec<f64> = line
                .split_whitespace()
                .map(|f| f.parse::<f64>().map_err(|_| Error::parse(lineno + 1, format!("bad coordinate {f:?}"))))
                .collect::<Result<_>>()?;
            if coords.len() != 3 {
                return Err(Error::parse(lineno + 1, format!("expected 3 coordinates, got {}", coords.len())));
            }
            points.push([coords[0], coords[1], coords[2]]);
        }
        Self::new(points)
    }

    pub fn to_xyz(&self) -> String {
        let mut out = String::with_capacity(self.points.len() * 36);
        for p in &self.points {
            out.push_str(&format!("{} {} {}\n", format_g(p[0], 9), format_g(p[1], 9), format_g(p[2], 9)));
        }
        out
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_xyz(&text)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_xyz()).map_err(|e| Error::io(path, e))
    }
}

/// Samples `n` points uniformly over the mesh surface: triangles are chosen
/// with probability proportional to area, then a uniform barycentric point is
/// drawn inside the chosen triangle.
pub fn sample_surface(mesh: &TriangleMesh, n: usize, seed: u64) -> Result<PointCloud> {
    if n == 0 {
        return Err(Error::invalid("sample count must be at least 1"));
    }
    let mut cumulative = Vec::with_capacity(mesh.triangles.len());
    let mut total = 0.0;
    for t in 0..mesh.triangles.len() {
        total += mesh.triangle_area(t);
        cumulative.push(total);
    }
    if !total.is_finite() || total <= 0.0 {
        return Err(Error::DegenerateMesh);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = Vec::with_capacity(n);
    for _ in 0..n {
        let target = rng.gen::<f64>() * total;
        // Zero-area triangles have no cumulative span and are never chosen.
        let t = cumulative.partition_point(|&c| c <= target).min(cumulative.len() - 1);
        let [a, b, c] = mesh.corners(t);
        let s = rng.gen::<f64>().sqrt();
        let r = rng.gen::<f64>();
        let (wa, wb, wc) = (1.0 - s, s * (1.0 - r), s * r);
        points.push(std::array::from_fn(|k| wa * a[k] + wb * b[k] + wc * c[k]));
    }
    PointCloud::new(points)
}

/// Affinely rescales each axis independently so its min is 0 and its max is
/// 1. An axis with zero extent collapses to 0.
pub fn minmax_normalize(cloud: &PointCloud) -> Result<PointCloud> {
    if cloud.points.is_empty() {
        return Err(Error::EmptyCloud);
    }
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for p in &cloud.points {
        for k in 0..3 {
            lo[k] = lo[k].min(p[k]);
            hi[k] = hi[k].max(p[k]);
        }
    }
    let points = cloud
        .points
        .iter()
        .map(|p| {
            std::array::from_fn(|k| {
                let extent = hi[k] - lo[k];
                if extent > 0.0 {
                    (p[k] - lo[k]) / extent
                } else {
                    0.0
                }
            })
        })
        .collect();
    PointCloud::new(points)
}

/// Occupancy grid with `resolution` cells per axis. Cells are stored as
/// sorted, deduplicated linear indices `(x * R + y) * R + z`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VoxelGrid {
    resolution: u32,
    cells: Vec<u32>,
}

impl VoxelGrid {
    pub fn new(resolution: u32, cells: impl IntoIterator<Item = [u32; 3]>) -> Result<Self> {
        if resolution == 0 {
            return Err(Error::invalid("voxel resolution must be at least 1"));
        }
        if (resolution as u64).pow(3) > u32::MAX as u64 {
            return Err(Error::invalid(format!("voxel resolution {resolution} too large")));
        }
        let mut linear = Vec::new();
        for c in cells {
            if c.iter().any(|&v| v >= resolution) {
                return Err(Error::invalid(format!("voxel {c:?} outside resolution {resolution}")));
            }
            linear.push((c[0] * resolution + c[1]) * resolution + c[2]);
        }
        linear.sort_unstable();
        linear.dedup();
        Ok(VoxelGrid { resolution, cells: linear })
    }

    pub fn resolution(&self) -> u32 {
        self.resolution
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn linear_cells(&self) -> &[u32] {
        &self.cells
    }

    pub fn cells(&self) -> impl Iterator<Item = [u32; 3]> + '_ {
        let r = self.resolution;
        self.cells.iter().map(move |&l| [l / (r * r), (l / r) % r, l % r])
    }

    pub fn contains(&self, cell: [u32; 3]) -> bool {
        let r = self.resolution;
        cell.iter().all(|&c| c < r) && self.cells.binary_search(&((cell[0] * r + cell[1]) * r + cell[2])).is_ok()
    }
}

/// Cell index of a normalized coordinate: `min(floor(x * R), R - 1)`.
pub fn voxel_coord(x: f64, resolution: u32) -> u32 {
    let cell = (x.clamp(0.0, 1.0) * resolution as f64).floor() as u32;
    cell.min(resolution - 1)
}

/// Voxelizes a cloud already normalized to the unit cube.
pub fn voxelize(cloud: &PointCloud, resolution: u32) -> Result<VoxelGrid> {
    if resolution == 0 {
        return Err(Error::invalid("voxel resolution must be at least 1"));
    }
    let mut cells = Vec::with_capacity(cloud.len());
    for p in &cloud.points {
        if p.iter().any(|&c| !(-VOXEL_TOLERANCE..=1.0 + VOXEL_TOLERANCE).contains(&c)) {
            return Err(Error::invalid(format!("point {p:?} lies outside the unit cube; normalize first")));
        }
        cells.push(p.map(|c| voxel_coord(c, resolution)));
    }
    VoxelGrid::new(resolution, cells)
}

fn sub(a: Point3, b: Point3) -> Point3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn cross(u: Point3, v: Point3) -> Point3 {
    [u[1] * v[2] - u[2] * v[1], u[2] * v[0] - u[0] * v[2], u[0] * v[1] - u[1] * v[0]]
}

fn norm(v: Point3) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}
