//! The similarity graph over model ids: canonical edges, sparse labeled edge
//! sets, partitions (implicit dense labelings) and statistics over them.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::path::Path;

use crate::error::{Error, Result};

/// Opaque model identifier, usually the file stem of the source CAD model.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ModelId(String);

impl ModelId {
    /// Ids must be non-empty and free of tabs and line breaks so they survive
    /// the TSV formats unchanged.
    pub fn new(id: impl Into<String>) -> Result<Self> {
        let id = id.into();
        if id.is_empty() {
            return Err(Error::EmptyModelId);
        }
        if id.contains(['\t', '\n', '\r']) {
            return Err(Error::invalid(format!("model id contains a tab or line break: {id:?}")));
        }
        Ok(ModelId(id))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn into_string(self) -> String {
        self.0
    }
}

impl fmt::Display for ModelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Debug for ModelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.0)
    }
}

impl AsRef<str> for ModelId {
    fn as_ref(&self) -> &str {
        &self.0
    }
}

impl std::borrow::Borrow<str> for ModelId {
    fn borrow(&self) -> &str {
        &self.0
    }
}

/// An undirected edge with endpoints in lexicographic byte order (`a < b`).
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EdgeKey {
    a: ModelId,
    b: ModelId,
}

impl EdgeKey {
    pub fn new(i: ModelId, j: ModelId) -> Result<Self> {
        match i.cmp(&j) {
            std::cmp::Ordering::Less => Ok(EdgeKey { a: i, b: j }),
            std::cmp::Ordering::Greater => Ok(EdgeKey { a: j, b: i }),
            std::cmp::Ordering::Equal => Err(Error::SelfEdge(i)),
        }
    }

    pub fn a(&self) -> &ModelId {
        &self.a
    }

    pub fn b(&self) -> &ModelId {
        &self.b
    }
}

/// Canonicalizes the undirected edge between `i` and `j`.
pub fn canonical_edge(i: &ModelId, j: &ModelId) -> Result<EdgeKey> {
    EdgeKey::new(i.clone(), j.clone())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum EdgeLabel {
    Positive,
    Negative,
    Unknown,
}

impl EdgeLabel {
    pub fn value(self) -> i8 {
        match self {
            EdgeLabel::Positive => 1,
            EdgeLabel::Negative => -1,
            EdgeLabel::Unknown => 0,
        }
    }

    pub fn from_value(v: i8) -> Result<Self> {
        match v {
            1 => Ok(EdgeLabel::Positive),
            -1 => Ok(EdgeLabel::Negative),
            0 => Ok(EdgeLabel::Unknown),
            other => Err(Error::invalid(format!("edge label out of range: {other}"))),
        }
    }

    pub fn from_similar(similar: bool) -> Self {
        if similar {
            EdgeLabel::Positive
        } else {
            EdgeLabel::Negative
        }
    }

    pub fn is_known(self) -> bool {
        self != EdgeLabel::Unknown
    }
}

/// Sparse map from canonical edges to `+1`/`-1`. Absence means unknown.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct LabeledEdgeSet {
    owner: String,
    entries: BTreeMap<EdgeKey, bool>,
}

impl LabeledEdgeSet {
    pub fn new(owner: impl Into<String>) -> Self {
        LabeledEdgeSet { owner: owner.into(), entries: BTreeMap::new() }
    }

    pub fn owner(&self) -> &str {
        &self.owner
    }

    /// Sets the label of `edge`. Inserting [`EdgeLabel::Unknown`] removes the
    /// entry. Returns the previous label.
    pub fn insert(&mut self, edge: EdgeKey, label: EdgeLabel) -> EdgeLabel {
        debug_assert!(edge.a < edge.b);
        let prev = match label {
            EdgeLabel::Positive => self.entries.insert(edge, true),
            EdgeLabel::Negative => self.entries.insert(edge, false),
            EdgeLabel::Unknown => self.entries.remove(&edge),
        };
        prev.map_or(EdgeLabel::Unknown, EdgeLabel::from_similar)
    }

    pub fn label(&self, edge: &EdgeKey) -> EdgeLabel {
        self.entries.get(edge).map_or(EdgeLabel::Unknown, |&s| EdgeLabel::from_similar(s))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Entries in canonical edge order.
    pub fn iter(&self) -> impl Iterator<Item = (&EdgeKey, EdgeLabel)> + '_ {
        self.entries.iter().map(|(k, &s)| (k, EdgeLabel::from_similar(s)))
    }

    pub fn edges(&self) -> impl Iterator<Item = &EdgeKey> + '_ {
        self.entries.keys()
    }

    /// Adds every entry of `other`, overwriting on conflict.
    pub fn extend_from(&mut self, other: &LabeledEdgeSet) {
        for (k, &s) in &other.entries {
            self.entries.insert(k.clone(), s);
        }
    }

    pub fn parse_tsv(owner: impl Into<String>, text: &str) -> Result<Self> {
        let mut set = LabeledEdgeSet::new(owner);
        for (lineno, line) in text.lines().enumerate() {
            let lineno = lineno + 1;
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 3 {
                return Err(Error::parse(lineno, format!("expected 3 tab-separated fields, got {}", fields.len())));
            }
            let a = ModelId::new(fields[0]).map_err(|e| Error::parse(lineno, e.to_string()))?;
            let b = ModelId::new(fields[1]).map_err(|e| Error::parse(lineno, e.to_string()))?;
            if a >= b {
                return Err(Error::parse(lineno, format!("edge ({a}, {b}) is not in canonical order")));
            }
            let label = match fields[2].trim_end() {
                "+1" | "1" => EdgeLabel::Positive,
                "-1" => EdgeLabel::Negative,
                other => return Err(Error::parse(lineno, format!("edge label must be +1 or -1, got {other:?}"))),
            };
            set.insert(EdgeKey { a, b }, label);
        }
        Ok(set)
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for (k, label) in self.iter() {
            let l = if label == EdgeLabel::Positive { "+1" } else { "-1" };
            out.push_str(&format!("{}\t{}\t{}\n", k.a, k.b, l));
        }
        out
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let owner = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        Self::parse_tsv(owner, &text)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_tsv()).map_err(|e| Error::io(path, e))
    }
}

/// Assignment of every model to exactly one cluster, with cluster indices
/// dense in `[0, K)`. This is also the implicit dense similarity matrix of a
/// clustering: same cluster means `+1`, otherwise `-1`.
#[derive(Clone, Debug)]
pub struct Partition {
    ids: Vec<ModelId>,
    labels: Vec<u32>,
    index: HashMap<ModelId, usize>,
    k: u32,
}

impl PartialEq for Partition {
    fn eq(&self, other: &Self) -> bool {
        self.ids == other.ids && self.labels == other.labels
    }
}

impl Partition {
    /// Builds a partition and checks that the cluster indices are dense.
    pub fn new(assignment: Vec<(ModelId, u32)>) -> Result<Self> {
        let p = Self::build(assignment)?;
        let mut seen = vec![false; p.k as usize];
        for &l in &p.labels {
            seen[l as usize] = true;
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(Error::invalid(format!("cluster index {missing} is empty; indices must be dense in [0, {})", p.k)));
        }
        Ok(p)
    }

    /// Builds a partition from arbitrary non-negative cluster labels,
    /// renumbering them densely in ascending order of the original label.
    pub fn compacting(assignment: Vec<(ModelId, u64)>) -> Result<Self> {
        let mut distinct: Vec<u64> = assignment.iter().map(|(_, l)| *l).collect();
        distinct.sort_unstable();
        distinct.dedup();
        let remap: HashMap<u64, u32> = distinct.iter().enumerate().map(|(i, &l)| (l, i as u32)).collect();
        Self::new(assignment.into_iter().map(|(id, l)| (id, remap[&l])).collect())
    }

    /// Builds a partition from explicit member lists; cluster `i` is `clusters[i]`.
    pub fn from_clusters(clusters: Vec<Vec<ModelId>>) -> Result<Self> {
        let mut assignment = Vec::new();
        for (c, members) in clusters.into_iter().enumerate() {
            if members.is_empty() {
                return Err(Error::invalid(format!("cluster {c} is empty")));
            }
            assignment.extend(members.into_iter().map(|m| (m, c as u32)));
        }
        Self::new(assignment)
    }

    fn build(assignment: Vec<(ModelId, u32)>) -> Result<Self> {
        if assignment.is_empty() {
            return Err(Error::invalid("partition has no models"));
        }
        let mut ids = Vec::with_capacity(assignment.len());
        let mut labels = Vec::with_capacity(assignment.len());
        let mut index = HashMap::with_capacity(assignment.len());
        for (id, label) in assignment {
            if index.insert(id.clone(), ids.len()).is_some() {
                return Err(Error::DuplicateModel(id));
            }
            ids.push(id);
            labels.push(label);
        }
        let k = labels.iter().copied().max().unwrap_or(0) + 1;
        Ok(Partition { ids, labels, index, k })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Number of clusters K.
    pub fn k(&self) -> u32 {
        self.k
    }

    /// Model ids in insertion order.
    pub fn ids(&self) -> &[ModelId] {
        &self.ids
    }

    /// Cluster index per model, aligned with [`Partition::ids`].
    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn position(&self, id: &ModelId) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn cluster_of(&self, id: &ModelId) -> Option<u32> {
        self.position(id).map(|i| self.labels[i])
    }

    pub fn contains(&self, id: &ModelId) -> bool {
        self.index.contains_key(id)
    }

    /// `+1` when both endpoints share a cluster, `-1` otherwise. Never `0`.
    pub fn edge_label(&self, edge: &EdgeKey) -> Result<EdgeLabel> {
        let ca = self.cluster_of(&edge.a).ok_or_else(|| Error::UnknownModel(edge.a.clone()))?;
        let cb = self.cluster_of(&edge.b).ok_or_else(|| Error::UnknownModel(edge.b.clone()))?;
        Ok(EdgeLabel::from_similar(ca == cb))
    }

    /// Members of each cluster, in model insertion order.
    pub fn clusters(&self) -> Vec<Vec<ModelId>> {
        let mut out = vec![Vec::new(); self.k as usize];
        for (id, &l) in self.ids.iter().zip(&self.labels) {
            out[l as usize].push(id.clone());
        }
        out
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0usize; self.k as usize];
        for &l in &self.labels {
            sizes[l as usize] += 1;
        }
        sizes
    }

    /// Number of same-cluster pairs, `Σ_k n_k (n_k - 1) / 2`.
    pub fn positive_pair_count(&self) -> u64 {
        self.sizes().iter().map(|&n| (n as u64) * (n as u64).saturating_sub(1) / 2).sum()
    }

    /// Number of unordered model pairs, `C(|V|, 2)`.
    pub fn total_pair_count(&self) -> u64 {
        let n = self.ids.len() as u64;
        n * n.saturating_sub(1) / 2
    }

    /// True when both partitions group the same model set identically, up to
    /// cluster relabeling.
    pub fn same_grouping(&self, other: &Partition) -> bool {
        if self.len() != other.len() {
            return false;
        }
        let mut fwd: HashMap<u32, u32> = HashMap::new();
        let mut back: HashMap<u32, u32> = HashMap::new();
        for (id, &l) in self.ids.iter().zip(&self.labels) {
            let Some(m) = other.cluster_of(id) else { return false };
            if *fwd.entry(l).or_insert(m) != m || *back.entry(m).or_insert(l) != l {
                return false;
            }
        }
        true
    }

    pub fn parse_tsv(text: &str) -> Result<Self> {
        let mut assignment = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let lineno = lineno + 1;
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (id, cluster) = line
                .split_once('\t')
                .ok_or_else(|| Error::parse(lineno, "expected `model_id<TAB>cluster_index`"))?;
            let id = ModelId::new(id).map_err(|e| Error::parse(lineno, e.to_string()))?;
            let cluster = cluster.trim_end();
            if cluster.is_empty() || !cluster.bytes().all(|b| b.is_ascii_digit()) {
                return Err(Error::parse(lineno, format!("cluster index must be a non-negative integer, got {cluster:?}")));
            }
            let cluster: u64 = cluster.parse().map_err(|_| Error::parse(lineno, "cluster index overflow"))?;
            assignment.push((id, cluster));
        }
        Self::compacting(assignment)
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for (id, l) in self.ids.iter().zip(&self.labels) {
            out.push_str(&format!("{id}\t{l}\n"));
        }
        out
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_tsv(&text)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_tsv()).map_err(|e| Error::io(path, e))
    }
}

/// Fraction of the common support of `x` and `y` on which the labels agree.
/// `None` when the supports do not intersect.
pub fn consistency(x: &LabeledEdgeSet, y: &LabeledEdgeSet) -> Option<f64> {
    let (small, large) = if x.len() <= y.len() { (x, y) } else { (y, x) };
    let mut shared = 0u64;
    let mut agree = 0u64;
    for (k, &s) in &small.entries {
        if let Some(&t) = large.entries.get(k) {
            shared += 1;
            if s == t {
                agree += 1;
            }
        }
    }
    (shared > 0).then(|| agree as f64 / shared as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LabelStats {
    pub positive: u64,
    pub negative: u64,
    pub unknown: u64,
}

impl LabelStats {
    pub fn positive_fraction(&self) -> f64 {
        let labeled = self.positive + self.negative;
        if labeled == 0 {
            0.0
        } else {
            self.positive as f64 / labeled as f64
        }
    }
}

/// Positive, negative and unknown counts of `x` within a universe of
/// `universe_size` edges.
pub fn label_stats(x: &LabeledEdgeSet, universe_size: u64) -> Result<LabelStats> {
    let known = x.len() as u64;
    if universe_size < known {
        return Err(Error::invalid(format!("universe of {universe_size} edges is smaller than the {known} labeled entries")));
    }
    let positive = x.entries.values().filter(|&&s| s).count() as u64;
    Ok(LabelStats { positive, negative: known - positive, unknown: universe_size - known })
}

/// Every model referenced by `x`.
pub fn edge_set_models(x: &LabeledEdgeSet) -> HashSet<ModelId> {
    x.edges().flat_map(|e| [e.a.clone(), e.b.clone()]).collect()
}

#[cfg(test)]
pub(crate) fn mid(s: &str) -> ModelId {
    ModelId::new(s).unwrap()
}
