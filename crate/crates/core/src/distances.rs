//! Shape-to-shape distances and the pairwise distance matrix behind
//! silhouette analysis.
//!
//! Chamfer uses the squared form: the mean squared distance from each point
//! of one cloud to its nearest neighbor in the other, summed over both
//! directions. Rankings can differ from the square-root variant.
//!
//! Jaccard is `1 - IoU` over voxel occupancy. The preprocessing this mirrors
//! notes that "The IoU is not normalized for the case when the object is too
//! thin to normalize, and thus the IoU of it versus anything will be zero".
//! Here that reads as: an empty grid against a non-empty one has distance 1,
//! and two empty grids have distance 0.

use std::fmt;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::fmt::format_g;
use crate::geometry::{PointCloud, VoxelGrid};
use crate::kdtree::KdTree;
use crate::simgraph::ModelId;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Metric {
    Chamfer,
    Jaccard,
}

impl Metric {
    pub fn name(self) -> &'static str {
        match self {
            Metric::Chamfer => "chamfer",
            Metric::Jaccard => "jaccard",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "chamfer" => Ok(Metric::Chamfer),
            "jaccard" => Ok(Metric::Jaccard),
            other => Err(Error::invalid(format!("unknown metric {other:?} (expected chamfer or jaccard)"))),
        }
    }
}

/// A point cloud with its nearest-neighbor index, reusable across many
/// Chamfer evaluations.
pub struct IndexedCloud {
    cloud: PointCloud,
    tree: KdTree,
}

impl IndexedCloud {
    pub fn new(cloud: PointCloud) -> Self {
        let tree = KdTree::build(cloud.points());
        IndexedCloud { cloud, tree }
    }

    pub fn cloud(&self) -> &PointCloud {
        &self.cloud
    }
}

fn directed_mean(from: &PointCloud, to: &KdTree) -> f64 {
    let sum: f64 = from.points().iter().map(|p| to.nearest_sq(p)).sum();
    sum / from.len() as f64
}

pub fn chamfer_indexed(p: &IndexedCloud, q: &IndexedCloud) -> f64 {
    directed_mean(&p.cloud, &q.tree) + directed_mean(&q.cloud, &p.tree)
}

/// Squared Chamfer distance between two clouds.
pub fn chamfer(p: &PointCloud, q: &PointCloud) -> Result<f64> {
    if p.is_empty() || q.is_empty() {
        return Err(Error::EmptyCloud);
    }
    let pi = IndexedCloud::new(p.clone());
    let qi = IndexedCloud::new(q.clone());
    Ok(chamfer_indexed(&pi, &qi))
}

/// Jaccard distance `1 - |A ∩ B| / |A ∪ B|` between voxel grids of equal
/// resolution.
pub fn jaccard(a: &VoxelGrid, b: &VoxelGrid) -> Result<f64> {
    if a.resolution() != b.resolution() {
        return Err(Error::ResolutionMismatch(a.resolution(), b.resolution()));
    }
    let (x, y) = (a.linear_cells(), b.linear_cells());
    if x.is_empty() && y.is_empty() {
        return Ok(0.0);
    }
    let (mut i, mut j, mut inter) = (0, 0, 0usize);
    while i < x.len() && j < y.len() {
        match x[i].cmp(&y[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                inter += 1;
                i += 1;
                j += 1;
            }
        }
    }
    let union = x.len() + y.len() - inter;
    Ok(1.0 - inter as f64 / union as f64)
}

pub enum Shape {
    Cloud(PointCloud),
    Voxels(VoxelGrid),
}

enum Prepared<'a> {
    Clouds(Vec<IndexedCloud>),
    Voxels(Vec<&'a VoxelGrid>),
}

impl<'a> Prepared<'a> {
    fn new(shapes: &'a [(ModelId, Shape)], metric: Metric) -> Result<Self> {
        match metric {
            Metric::Chamfer => shapes
                .iter()
                .map(|(id, s)| match s {
                    Shape::Cloud(c) => Ok(IndexedCloud::new(c.clone())),
                    Shape::Voxels(_) => Err(Error::invalid(format!("{id}: chamfer needs point clouds, got a voxel grid"))),
                })
                .collect::<Result<_>>()
                .map(Prepared::Clouds),
            Metric::Jaccard => {
                let grids: Vec<&VoxelGrid> = shapes
                    .iter()
                    .map(|(id, s)| match s {
                        Shape::Voxels(v) => Ok(v),
                        Shape::Cloud(_) => Err(Error::invalid(format!("{id}: jaccard needs voxel grids, got a point cloud"))),
                    })
                    .collect::<Result<_>>()?;
                if let Some(g) = grids.iter().find(|g| g.resolution() != grids[0].resolution()) {
                    return Err(Error::ResolutionMismatch(grids[0].resolution(), g.resolution()));
                }
                Ok(Prepared::Voxels(grids))
            }
        }
    }

    fn distance(&self, i: usize, j: usize) -> f64 {
        match self {
            Prepared::Clouds(c) => chamfer_indexed(&c[i], &c[j]),
            Prepared::Voxels(v) => jaccard(v[i], v[j]).expect("resolutions checked"),
        }
    }

    /// Upper-triangle entries of row `i` (columns `i+1..n`).
    fn row(&self, i: usize, n: usize) -> Vec<f64> {
        (i + 1..n).map(|j| self.distance(i, j)).collect()
    }
}

/// Symmetric, zero-diagonal matrix of pairwise shape distances.
#[derive(Clone, Debug, PartialEq)]
pub struct DistanceMatrix {
    ids: Vec<ModelId>,
    values: Vec<f64>,
    metric: Metric,
}

impl DistanceMatrix {
    pub fn from_values(ids: Vec<ModelId>, values: Vec<f64>, metric: Metric) -> Result<Self> {
        let n = ids.len();
        if values.len() != n * n {
            return Err(Error::invalid(format!("matrix of {} values does not match {n} ids", values.len())));
        }
        let mut seen = std::collections::HashSet::new();
        for id in &ids {
            if !seen.insert(id) {
                return Err(Error::DuplicateModel(id.clone()));
            }
        }
        for i in 0..n {
            if values[i * n + i] != 0.0 {
                return Err(Error::invalid(format!("diagonal entry {i} is not zero")));
            }
            for j in 0..n {
                let v = values[i * n + j];
                if !v.is_finite() || v < 0.0 {
                    return Err(Error::invalid(format!("entry ({i}, {j}) = {v} is not a finite non-negative distance")));
                }
                if (v - values[j * n + i]).abs() > 1e-12 {
                    return Err(Error::invalid(format!("matrix is not symmetric at ({i}, {j})")));
                }
            }
        }
        Ok(DistanceMatrix { ids, values, metric })
    }

    fn from_rows(ids: Vec<ModelId>, rows: Vec<Vec<f64>>, metric: Metric) -> Self {
        let n = ids.len();
        let mut values = vec![0.0; n * n];
        for (i, row) in rows.into_iter().enumerate() {
            for (off, v) in row.into_iter().enumerate() {
                let j = i + 1 + off;
                values[i * n + j] = v;
                values[j * n + i] = v;
            }
        }
        DistanceMatrix { ids, values, metric }
    }

    pub fn ids(&self) -> &[ModelId] {
        &self.ids
    }

    pub fn metric(&self) -> Metric {
        self.metric
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.ids.len() + j]
    }

    pub fn position(&self, id: &ModelId) -> Option<usize> {
        self.ids.iter().position(|x| x == id)
    }

    /// `DMAT <metric> <n>`, a tab-separated id line, then `n` rows of
    /// `%.12g` values.
    pub fn to_text(&self) -> String {
        let n = self.ids.len();
        let mut out = format!("DMAT {} {n}\n", self.metric);
        out.push_str(&self.ids.iter().map(ModelId::as_str).collect::<Vec<_>>().join("\t"));
        out.push('\n');
        for i in 0..n {
            let row: Vec<String> = (0..n).map(|j| format_g(self.get(i, j), 12)).collect();
            out.push_str(&row.join("\t"));
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| Error::parse(1, "missing DMAT header"))?;
        let parts: Vec<&str> = header.split_whitespace().collect();
        if parts.len() != 3 || parts[0] != "DMAT" {
            return Err(Error::parse(1, "expected `DMAT <metric> <n>`"));
        }
        let metric: Metric = parts[1].parse().map_err(|e: Error| Error::parse(1, e.to_string()))?;
        let n: usize = parts[2].parse().map_err(|_| Error::parse(1, "bad matrix size"))?;
        let id_line = lines.next().ok_or_else(|| Error::parse(2, "missing id line"))?;
        let ids: Vec<ModelId> = if n == 0 {
            Vec::new()
        } else {
            id_line.split('\t').map(ModelId::new).collect::<Result<_>>().map_err(|e| Error::parse(2, e.to_string()))?
        };
        if ids.len() != n {
            return Err(Error::parse(2, format!("expected {n} ids, got {}", ids.len())));
        }
        let mut values = Vec::with_capacity(n * n);
        for i in 0..n {
            let lineno = i + 3;
            let line = lines.next().ok_or_else(|| Error::parse(lineno, "missing matrix row"))?;
            let row: Vec<f64> = line
                .split('\t')
                .map(|f| f.parse::<f64>().map_err(|_| Error::parse(lineno, format!("bad value {f:?}"))))
                .collect::<Result<_>>()?;
            if row.len() != n {
                return Err(Error::parse(lineno, format!("expected {n} values, got {}", row.len())));
            }
            values.extend(row);
        }
        Self::from_values(ids, values, metric)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }
}

fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match threads {
        None => Ok(f()),
        Some(t) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(t.max(1))
                .build()
                .map_err(|e| Error::invalid(format!("thread pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

/// Computes every pairwise distance. Each cell has exactly one producer, so
/// the result does not depend on `threads`.
pub fn distance_matrix(shapes: &[(ModelId, Shape)], metric: Metric, threads: Option<usize>) -> Result<DistanceMatrix> {
    if shapes.len() < 2 {
        return Err(Error::invalid("distance matrix needs at least two shapes"));
    }
    let prepared = Prepared::new(shapes, metric)?;
    let n = shapes.len();
    let rows = with_threads(threads, || (0..n).into_par_iter().map(|i| prepared.row(i, n)).collect::<Vec<_>>())?;
    let ids = shapes.iter().map(|(id, _)| id.clone()).collect();
    Ok(DistanceMatrix::from_rows(ids, rows, metric))
}

/// Digest of the metric, the ordered ids and the exact shape contents.
pub fn shape_list_digest(shapes: &[(ModelId, Shape)], metric: Metric) -> String {
    let mut h = Sha256::new();
    h.update(metric.name().as_bytes());
    for (id, shape) in shapes {
        h.update((id.as_str().len() as u64).to_le_bytes());
        h.update(id.as_str().as_bytes());
        match shape {
            Shape::Cloud(c) => {
                h.update(b"C");
                h.update((c.len() as u64).to_le_bytes());
                for p in c.points() {
                    for v in p {
                        h.update(v.to_bits().to_le_bytes());
                    }
                }
            }
            Shape::Voxels(v) => {
                h.update(b"V");
                h.update(v.resolution().to_le_bytes());
                h.update((v.len() as u64).to_le_bytes());
                for c in v.linear_cells() {
                    h.update(c.to_le_bytes());
                }
            }
        }
    }
    hex::encode(h.finalize())
}

/// On-disk cache of distance matrices keyed by `(metric, shape-list digest)`.
///
/// While a matrix is being computed, finished rows are appended to a
/// `.partial` checkpoint so an interrupted run resumes where it stopped.
/// The finished matrix is stored in the `DMAT` text format and always
/// returned as read back from that file, so fresh and cached runs see
/// identical values.
pub struct MatrixCache {
    dir: PathBuf,
    rows_per_checkpoint: usize,
}

impl MatrixCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        MatrixCache { dir: dir.into(), rows_per_checkpoint: 64 }
    }

    pub fn with_rows_per_checkpoint(mut self, rows: usize) -> Self {
        self.rows_per_checkpoint = rows.max(1);
        self
    }

    pub fn paths(&self, shapes: &[(ModelId, Shape)], metric: Metric) -> (PathBuf, PathBuf) {
        let digest = shape_list_digest(shapes, metric);
        let stem = format!("{}-{}", metric, &digest[..16]);
        (self.dir.join(format!("{stem}.dmat")), self.dir.join(format!("{stem}.partial")))
    }

    pub fn load_or_compute(&self, shapes: &[(ModelId, Shape)], metric: Metric, threads: Option<usize>) -> Result<DistanceMatrix> {
        if shapes.len() < 2 {
            return Err(Error::invalid("distance matrix needs at least two shapes"));
        }
        std::fs::create_dir_all(&self.dir).map_err(|e| Error::io(&self.dir, e))?;
        let (final_path, partial_path) = self.paths(shapes, metric);
        if final_path.exists() {
            return DistanceMatrix::read(&final_path);
        }
        let prepared = Prepared::new(shapes, metric)?;
        let n = shapes.len();
        let mut rows = read_checkpoint(&partial_path, n)?;
        let mut file = std::fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(&partial_path)
            .map_err(|e| Error::io(&partial_path, e))?;
        // Drop any torn trailing line left by an interrupted write.
        file.set_len(checkpoint_prefix_len(&partial_path)?).map_err(|e| Error::io(&partial_path, e))?;
        while rows.len() < n {
            let start = rows.len();
            let end = (start + self.rows_per_checkpoint).min(n);
            let block = with_threads(threads, || (start..end).into_par_iter().map(|i| prepared.row(i, n)).collect::<Vec<_>>())?;
            let mut text = String::new();
            for (i, row) in (start..end).zip(&block) {
                text.push_str(&i.to_string());
                for v in row {
                    // Shortest round-trip representation keeps resumed rows bit-exact.
                    text.push('\t');
                    text.push_str(&v.to_string());
                }
                text.push('\n');
            }
            file.write_all(text.as_bytes()).map_err(|e| Error::io(&partial_path, e))?;
            file.sync_data().map_err(|e| Error::io(&partial_path, e))?;
            rows.extend(block);
        }
        let ids = shapes.iter().map(|(id, _)| id.clone()).collect();
        let matrix = DistanceMatrix::from_rows(ids, rows, metric);
        let tmp = final_path.with_extension("dmat.tmp");
        matrix.write(&tmp)?;
        std::fs::rename(&tmp, &final_path).map_err(|e| Error::io(&final_path, e))?;
        let _ = std::fs::remove_file(&partial_path);
        DistanceMatrix::read(&final_path)
    }
}

fn checkpoint_prefix_len(path: &Path) -> Result<u64> {
    let text = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(text.iter().rposition(|&b| b == b'\n').map_or(0, |p| p as u64 + 1))
}

fn read_checkpoint(path: &Path, n: usize) -> Result<Vec<Vec<f64>>> {
    let text = match std::fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(Error::io(path, e)),
    };
    let mut rows = Vec::new();
    for (lineno, line) in text.split_inclusive('\n').enumerate() {
        let Some(line) = line.strip_suffix('\n') else { break };
        let mut fields = line.split('\t');
        let i: usize = fields.next().and_then(|f| f.parse().ok()).ok_or_else(|| Error::parse(lineno + 1, "bad checkpoint row index"))?;
        if i != rows.len() || i >= n {
            return Err(Error::parse(lineno + 1, format!("checkpoint row {i} out of sequence")));
        }
        let row: Vec<f64> = fields
            .map(|f| f.parse::<f64>().map_err(|_| Error::parse(lineno + 1, "bad checkpoint value")))
            .collect::<Result<_>>()?;
        if row.len() != n - i - 1 {
            return Err(Error::parse(lineno + 1, "checkpoint row has wrong length"));
        }
        rows.push(row);
    }
    Ok(rows)
}
