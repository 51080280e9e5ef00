//! KMeans over precomputed feature vectors and the capacity-bounded splitting
//! that produces small initial clusters for annotation.

use std::collections::{HashSet, VecDeque};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fmt::format_g;
use crate::simgraph::{ModelId, Partition};

pub const DEFAULT_CAPACITY: usize = 12;
pub const MAX_ITERATIONS: usize = 300;

/// `n` feature rows of dimension `d`, one per model.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMatrix {
    ids: Vec<ModelId>,
    dim: usize,
    data: Vec<f64>,
}

impl FeatureMatrix {
    pub fn new(ids: Vec<ModelId>, dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("feature dimension must be at least 1"));
        }
        if data.len() != ids.len() * dim {
            return Err(Error::invalid(format!("{} values do not form {} rows of dimension {dim}", data.len(), ids.len())));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("non-finite feature for model {}", ids[pos / dim])));
        }
        let mut seen = HashSet::new();
        for id in &ids {
            if !seen.insert(id) {
                return Err(Error::DuplicateModel(id.clone()));
            }
        }
        Ok(FeatureMatrix { ids, dim, data })
    }

    pub fn from_rows(rows: Vec<(ModelId, Vec<f64>)>) -> Result<Self> {
        let dim = rows.first().map_or(0, |(_, r)| r.len());
        if let Some((id, _)) = rows.iter().find(|(_, r)| r.len() != dim) {
            return Err(Error::invalid(format!("row for {id} has the wrong dimension")));
        }
        let (ids, data): (Vec<_>, Vec<_>) = rows.into_iter().unzip();
        Self::new(ids, dim, data.concat())
    }

    pub fn ids(&self) -> &[ModelId] {
        &self.ids
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    fn subset(&self, rows: &[usize]) -> FeatureMatrix {
        let mut data = Vec::with_capacity(rows.len() * self.dim);
        for &r in rows {
            data.extend_from_slice(self.row(r));
        }
        FeatureMatrix { ids: rows.iter().map(|&r| self.ids[r].clone()).collect(), dim: self.dim, data }
    }

    /// `FEAT <n> <d>` header, then `model_id<TAB>f1<TAB>…<TAB>fd` rows.
    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
        let (_, header) = lines.next().ok_or_else(|| Error::parse(1, "missing FEAT header"))?;
        let parts: Vec<&str> = header.split_whitespace().collect();
        if parts.len() != 3 || parts[0] != "FEAT" {
            return Err(Error::parse(1, "expected `FEAT <n> <d>`"));
        }
        let n: usize = parts[1].parse().map_err(|_| Error::parse(1, "bad row count"))?;
        let d: usize = parts[2].parse().map_err(|_| Error::parse(1, "bad dimension"))?;
        let mut ids = Vec::with_capacity(n);
        let mut data = Vec::with_capacity(n * d);
        for (idx, line) in lines {
            let lineno = idx + 1;
            let mut fields = line.split('\t');
            let id = ModelId::new(fields.next().unwrap_or_default()).map_err(|e| Error::parse(lineno, e.to_string()))?;
            let row: Vec<f64> = fields
                .map(|f| f.trim().parse::<f64>().map_err(|_| Error::parse(lineno, format!("bad feature value {f:?}"))))
                .collect::<Result<_>>()?;
            if row.len() != d {
                return Err(Error::parse(lineno, format!("expected {d} features, got {}", row.len())));
            }
            ids.push(id);
            data.extend(row);
        }
        if ids.len() != n {
            return Err(Error::invalid(format!("header declares {n} rows but file has {}", ids.len())));
        }
        Self::new(ids, d, data)
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("FEAT {} {}\n", self.len(), self.dim);
        for (i, id) in self.ids.iter().enumerate() {
            out.push_str(id.as_str());
            for v in self.row(i) {
                out.push('\t');
                out.push_str(&format_g(*v, 9));
            }
            out.push('\n');
        }
        out
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }
}

#[derive(Clone, Debug)]
pub struct KMeansFit {
    /// Cluster index per row, dense in `[0, K)`.
    pub labels: Vec<u32>,
    /// `K × d` centroids, row-major.
    pub centroids: Vec<f64>,
    /// Objective after seeding and after every assignment and update step.
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

struct Lloyd<'a> {
    f: &'a FeatureMatrix,
    k: usize,
}

impl Lloyd<'_> {
    fn centroid<'c>(&self, centroids: &'c [f64], c: usize) -> &'c [f64] {
        &centroids[c * self.f.dim..(c + 1) * self.f.dim]
    }

    fn seed_plus_plus(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let n = self.f.len();
        let mut chosen = Vec::with_capacity(self.k);
        chosen.push(rng.gen_range(0..n));
        let mut nearest: Vec<f64> = (0..n).map(|i| sq_dist(self.f.row(i), self.f.row(chosen[0]))).collect();
        while chosen.len() < self.k {
            let total: f64 = nearest.iter().sum();
            let next = if total > 0.0 {
                let target = rng.gen::<f64>() * total;
                let mut acc = 0.0;
                let mut pick = None;
                for (i, &w) in nearest.iter().enumerate() {
                    acc += w;
                    if acc > target {
                        pick = Some(i);
                        break;
                    }
                }
                // Rounding can leave target just above the final sum.
                pick.unwrap_or_else(|| nearest.iter().rposition(|&w| w > 0.0).expect("positive total"))
            } else {
                // Every row coincides with a chosen seed.
                (0..n).find(|i| !chosen.contains(i)).expect("k <= n")
            };
            chosen.push(next);
            let row = self.f.row(next);
            nearest.par_iter_mut().enumerate().for_each(|(i, d)| *d = d.min(sq_dist(self.f.row(i), row)));
        }
        chosen.iter().flat_map(|&i| self.f.row(i).to_vec()).collect()
    }

    /// Nearest centroid per row, ties to the lowest index.
    fn assign(&self, centroids: &[f64]) -> Vec<(u32, f64)> {
        (0..self.f.len())
            .into_par_iter()
            .map(|i| {
                let row = self.f.row(i);
                let mut best = (0u32, f64::INFINITY);
                for c in 0..self.k {
                    let d = sq_dist(row, self.centroid(centroids, c));
                    if d < best.1 {
                        best = (c as u32, d);
                    }
                }
                best
            })
            .collect()
    }

    /// Gives every empty cluster the farthest row (from its own centroid)
    /// among clusters that can spare one, moving its centroid onto that row.
    fn repair_empty(&self, assigned: &mut [(u32, f64)], centroids: &mut [f64]) {
        let mut sizes = vec![0usize; self.k];
        for &(c, _) in assigned.iter() {
            sizes[c as usize] += 1;
        }
        for empty in 0..self.k {
            if sizes[empty] > 0 {
                continue;
            }
            let mut pick: Option<usize> = None;
            for (i, &(c, d)) in assigned.iter().enumerate() {
                if sizes[c as usize] > 1 && pick.is_none_or(|p| d > assigned[p].1) {
                    pick = Some(i);
                }
            }
            let i = pick.expect("k <= n leaves a cluster with a spare row");
            sizes[assigned[i].0 as usize] -= 1;
            sizes[empty] += 1;
            assigned[i] = (empty as u32, 0.0);
            let dim = self.f.dim;
            centroids[empty * dim..(empty + 1) * dim].copy_from_slice(self.f.row(i));
        }
    }

    fn update(&self, labels: &[u32], centroids: &mut [f64]) {
        let dim = self.f.dim;
        let mut sums = vec![0.0; self.k * dim];
        let mut counts = vec![0usize; self.k];
        for (i, &c) in labels.iter().enumerate() {
            counts[c as usize] += 1;
            for (s, v) in sums[c as usize * dim..(c as usize + 1) * dim].iter_mut().zip(self.f.row(i)) {
                *s += v;
            }
        }
        for c in 0..self.k {
            if counts[c] > 0 {
                for k in 0..dim {
                    centroids[c * dim + k] = sums[c * dim + k] / counts[c] as f64;
                }
            }
        }
    }

    fn objective(&self, labels: &[u32], centroids: &[f64]) -> f64 {
        labels.iter().enumerate().map(|(i, &c)| sq_dist(self.f.row(i), self.centroid(centroids, c as usize))).sum()
    }
}

fn check_monotone(trace: &[f64]) {
    if let [.., prev, last] = trace {
        debug_assert!(*last <= *prev + 1e-12 * prev.abs(), "kmeans objective increased: {prev} -> {last}");
    }
}

/// Lloyd's algorithm from k-means++ seeding, run until the assignment stops
/// changing or [`MAX_ITERATIONS`] is reached.
pub fn kmeans_fit(f: &FeatureMatrix, k: usize, seed: u64) -> Result<KMeansFit> {
    if k == 0 {
        return Err(Error::invalid("K must be at least 1"));
    }
    if k > f.len() {
        return Err(Error::invalid(format!("K = {k} exceeds the {} available rows", f.len())));
    }
    let lloyd = Lloyd { f, k };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = lloyd.seed_plus_plus(&mut rng);
    let mut trace = Vec::new();

    let mut assigned = lloyd.assign(&centroids);
    lloyd.repair_empty(&mut assigned, &mut centroids);
    let mut labels: Vec<u32> = assigned.iter().map(|a| a.0).collect();
    trace.push(lloyd.objective(&labels, &centroids));

    let mut iterations = 0;
    let mut converged = false;
    while iterations < MAX_ITERATIONS {
        iterations += 1;
        lloyd.update(&labels, &mut centroids);
        trace.push(lloyd.objective(&labels, &centroids));
        check_monotone(&trace);

        let mut assigned = lloyd.assign(&centroids);
        lloyd.repair_empty(&mut assigned, &mut centroids);
        let next: Vec<u32> = assigned.iter().map(|a| a.0).collect();
        trace.push(lloyd.objective(&next, &centroids));
        check_monotone(&trace);
        if next == labels {
            converged = true;
            break;
        }
        labels = next;
    }
    Ok(KMeansFit { labels, centroids, objective_trace: trace, iterations, converged })
}

/// KMeans partition of the feature rows into exactly `k` non-empty clusters.
pub fn kmeans(f: &FeatureMatrix, k: usize, seed: u64) -> Result<Partition> {
    let fit = kmeans_fit(f, k, seed)?;
    Partition::new(f.ids().iter().cloned().zip(fit.labels).collect())
}

/// A partition in which no cluster exceeds `capacity` models.
#[derive(Clone, Debug)]
pub struct InitialClustering {
    partition: Partition,
    capacity: usize,
}

impl InitialClustering {
    pub fn new(partition: Partition, capacity: usize) -> Result<Self> {
        if let Some((c, &size)) = partition.sizes().iter().enumerate().find(|(_, &s)| s > capacity) {
            return Err(Error::invalid(format!("cluster {c} has {size} models, above capacity {capacity}")));
        }
        Ok(InitialClustering { partition, capacity })
    }

    pub fn partition(&self) -> &Partition {
        &self.partition
    }

    pub fn into_partition(self) -> Partition {
        self.partition
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }
}

/// Re-splits every cluster larger than `capacity` with KMeans
/// (`K = ⌈size / capacity⌉`) until all clusters fit. Output clusters are
/// numbered by the position of their first member in `f`.
pub fn capacity_split(f: &FeatureMatrix, p: &Partition, capacity: usize, seed: u64) -> Result<InitialClustering> {
    if capacity == 0 {
        return Err(Error::invalid("capacity must be at least 1"));
    }
    let mut row_of = std::collections::HashMap::with_capacity(f.len());
    for (i, id) in f.ids().iter().enumerate() {
        row_of.insert(id, i);
    }
    let mut queue: VecDeque<Vec<usize>> = VecDeque::new();
    for members in p.clusters() {
        let rows = members
            .iter()
            .map(|m| row_of.get(m).copied().ok_or_else(|| Error::UnknownModel(m.clone())))
            .collect::<Result<Vec<_>>>()?;
        queue.push_back(rows);
    }
    let mut done: Vec<Vec<usize>> = Vec::new();
    let mut splits = 0u64;
    while let Some(rows) = queue.pop_front() {
        if rows.len() <= capacity {
            done.push(rows);
            continue;
        }
        let k = rows.len().div_ceil(capacity);
        let sub = f.subset(&rows);
        let fit = kmeans_fit(&sub, k, seed.wrapping_add(splits.wrapping_mul(0x9E37_79B9_7F4A_7C15)))?;
        splits += 1;
        let mut children = vec![Vec::new(); k];
        for (&r, &c) in rows.iter().zip(&fit.labels) {
            children[c as usize].push(r);
        }
        // k >= 2 non-empty children, each strictly smaller than the parent.
        queue.extend(children);
    }
    for rows in &mut done {
        rows.sort_unstable();
    }
    done.sort_unstable_by_key(|rows| rows[0]);
    let clusters = done.into_iter().map(|rows| rows.into_iter().map(|r| f.ids()[r].clone()).collect()).collect();
    InitialClustering::new(Partition::from_clusters(clusters)?, capacity)
}
