use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use cadsim_core::distances::{distance_matrix, DistanceMatrix, MatrixCache, Metric, Shape};
use cadsim_core::geometry::{minmax_normalize, voxelize, PointCloud};
use cadsim_core::ModelId;
use rayon::prelude::*;

/// Every `*.xyz` file in `dir`, keyed by file stem and sorted by id.
pub fn list_clouds(dir: &Path) -> Result<Vec<(ModelId, PathBuf)>> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).with_context(|| format!("reading {}", dir.display()))? {
        let path = entry?.path();
        if path.extension().is_some_and(|e| e == "xyz") {
            let stem = path.file_stem().unwrap_or_default().to_string_lossy().into_owned();
            out.push((ModelId::new(stem)?, path));
        }
    }
    out.sort();
    if out.is_empty() {
        bail!("{}: no .xyz files", dir.display());
    }
    Ok(out)
}

/// `<dir>/<id>.xyz` for each id, failing on the first missing file.
pub fn clouds_for(dir: &Path, ids: &[ModelId]) -> Result<Vec<(ModelId, PathBuf)>> {
    ids.iter()
        .map(|id| {
            let path = dir.join(format!("{id}.xyz"));
            if !path.is_file() {
                bail!("no point cloud for model {id} (expected {})", path.display());
            }
            Ok((id.clone(), path))
        })
        .collect()
}

/// Reads and normalizes each cloud, voxelizing it for Jaccard.
pub fn load_shapes(files: &[(ModelId, PathBuf)], metric: Metric, resolution: u32) -> Result<Vec<(ModelId, Shape)>> {
    files
        .par_iter()
        .map(|(id, path)| {
            let cloud = minmax_normalize(&PointCloud::read(path)?).with_context(|| format!("model {id}"))?;
            let shape = match metric {
                Metric::Chamfer => Shape::Cloud(cloud),
                Metric::Jaccard => Shape::Voxels(voxelize(&cloud, resolution)?),
            };
            Ok((id.clone(), shape))
        })
        .collect()
}

pub fn compute_matrix(shapes: &[(ModelId, Shape)], metric: Metric, cache: Option<&Path>, threads: Option<usize>) -> Result<DistanceMatrix> {
    Ok(match cache {
        Some(dir) => MatrixCache::new(dir).load_or_compute(shapes, metric, threads)?,
        None => distance_matrix(shapes, metric, threads)?,
    })
}
