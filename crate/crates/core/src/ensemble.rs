//! Majority-vote ensembles: a dense one over clustering methods and a sparse
//! one over human annotation edge sets.

use std::collections::{BTreeSet, HashMap};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::simgraph::{EdgeKey, EdgeLabel, LabeledEdgeSet, ModelId, Partition};

/// Positive votes needed among `n` voters: `⌈(n + 1) / 2⌉`.
pub fn majority_threshold(n: usize) -> usize {
    (n + 2) / 2
}

/// Dense ensemble of N partitions over the same model set. An edge is `+1`
/// when at least `⌈(N + 1) / 2⌉` partitions co-cluster its endpoints.
#[derive(Clone, Debug)]
pub struct MethodEnsemble {
    names: Vec<String>,
    ids: Vec<ModelId>,
    index: HashMap<ModelId, usize>,
    // labels[m][i]: cluster of model ids[i] in partition m
    labels: Vec<Vec<u32>>,
}

impl MethodEnsemble {
    pub fn new(partitions: Vec<(String, Partition)>) -> Result<Self> {
        let Some((_, first)) = partitions.first() else {
            return Err(Error::invalid("method ensemble needs at least one partition"));
        };
        let ids = first.ids().to_vec();
        let index: HashMap<ModelId, usize> = ids.iter().enumerate().map(|(i, id)| (id.clone(), i)).collect();
        let mut names = Vec::with_capacity(partitions.len());
        let mut labels = Vec::with_capacity(partitions.len());
        for (name, p) in &partitions {
            if p.len() != ids.len() {
                return Err(Error::invalid(format!("partition {name} covers {} models, expected {}", p.len(), ids.len())));
            }
            let aligned = ids
                .iter()
                .map(|id| p.cluster_of(id).ok_or_else(|| Error::UnknownModel(id.clone())))
                .collect::<Result<Vec<_>>>()?;
            names.push(name.clone());
            labels.push(aligned);
        }
        Ok(MethodEnsemble { names, ids, index, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn ids(&self) -> &[ModelId] {
        &self.ids
    }

    pub fn position(&self, id: &ModelId) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn threshold(&self) -> usize {
        majority_threshold(self.len())
    }

    /// Ensemble without the member named `name`, for leave-one-out studies.
    /// Fails if the name is unknown or it is the only member.
    pub fn without(&self, name: &str) -> Result<Self> {
        let pos = self.names.iter().position(|n| n == name).ok_or_else(|| Error::invalid(format!("no ensemble member named {name}")))?;
        if self.len() == 1 {
            return Err(Error::invalid("cannot leave out the only ensemble member"));
        }
        let mut out = self.clone();
        out.names.remove(pos);
        out.labels.remove(pos);
        Ok(out)
    }

    pub fn positive_votes_at(&self, i: usize, j: usize) -> usize {
        self.labels.iter().filter(|l| l[i] == l[j]).count()
    }

    pub fn similar_at(&self, i: usize, j: usize) -> bool {
        self.positive_votes_at(i, j) >= self.threshold()
    }

    /// Ensemble label of `edge`; never `0`.
    pub fn label(&self, edge: &EdgeKey) -> Result<EdgeLabel> {
        let i = self.position(edge.a()).ok_or_else(|| Error::UnknownModel(edge.a().clone()))?;
        let j = self.position(edge.b()).ok_or_else(|| Error::UnknownModel(edge.b().clone()))?;
        Ok(EdgeLabel::from_similar(self.similar_at(i, j)))
    }
}

/// Sparse ensemble over annotator edge sets. Only annotators who labeled an
/// edge vote on it; exact ties and unvoted edges are unknown.
#[derive(Clone, Debug)]
pub struct HumanEnsemble {
    sets: Vec<LabeledEdgeSet>,
}

impl HumanEnsemble {
    pub fn new(sets: Vec<LabeledEdgeSet>) -> Result<Self> {
        if sets.is_empty() {
            return Err(Error::invalid("human ensemble needs at least one edge set"));
        }
        Ok(HumanEnsemble { sets })
    }

    pub fn sets(&self) -> &[LabeledEdgeSet] {
        &self.sets
    }

    /// `(positive, negative)` votes on `edge`.
    pub fn votes(&self, edge: &EdgeKey) -> (usize, usize) {
        let mut pos = 0;
        let mut neg = 0;
        for s in &self.sets {
            match s.label(edge) {
                EdgeLabel::Positive => pos += 1,
                EdgeLabel::Negative => neg += 1,
                EdgeLabel::Unknown => {}
            }
        }
        (pos, neg)
    }

    pub fn label(&self, edge: &EdgeKey) -> EdgeLabel {
        let (pos, neg) = self.votes(edge);
        match pos.cmp(&neg) {
            std::cmp::Ordering::Greater => EdgeLabel::Positive,
            std::cmp::Ordering::Less => EdgeLabel::Negative,
            std::cmp::Ordering::Equal => EdgeLabel::Unknown,
        }
    }

    /// Every edge labeled by at least one annotator, in canonical order.
    pub fn support(&self) -> BTreeSet<EdgeKey> {
        self.sets.iter().flat_map(|s| s.edges().cloned()).collect()
    }

    /// The voted labeling with ties dropped.
    pub fn to_edge_set(&self, owner: &str) -> LabeledEdgeSet {
        let mut out = LabeledEdgeSet::new(owner);
        for e in self.support() {
            let l = self.label(&e);
            if l.is_known() {
                out.insert(e, l);
            }
        }
        out
    }
}

/// Mean of a method's balanced accuracy against the method ensemble and
/// against the human ensemble.
pub fn ensemble_human_score(ba_vs_ensemble: f64, ba_vs_human: f64) -> Result<f64> {
    for v in [ba_vs_ensemble, ba_vs_human] {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::invalid(format!("balanced accuracy {v} outside [0, 1]")));
        }
    }
    Ok((ba_vs_ensemble + ba_vs_human) / 2.0)
}

/// Reads a manifest: one path per line, `#` comments and blank lines
/// skipped, relative paths resolved against the manifest's directory.
pub fn read_manifest(path: &Path) -> Result<Vec<PathBuf>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or(Path::new(""));
    let entries: Vec<PathBuf> = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| {
            let p = Path::new(l);
            if p.is_absolute() {
                p.to_path_buf()
            } else {
                base.join(p)
            }
        })
        .collect();
    if entries.is_empty() {
        return Err(Error::invalid(format!("{}: manifest lists no files", path.display())));
    }
    Ok(entries)
}

/// Member name used for a partition file: its file stem.
pub fn member_name(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| path.display().to_string())
}

pub fn load_method_ensemble(manifest: &Path) -> Result<MethodEnsemble> {
    let mut parts = Vec::new();
    for p in read_manifest(manifest)? {
        parts.push((member_name(&p), Partition::read(&p)?));
    }
    MethodEnsemble::new(parts)
}

pub fn load_human_ensemble(manifest: &Path) -> Result<HumanEnsemble> {
    let sets = read_manifest(manifest)?.iter().map(|p| LabeledEdgeSet::read(p)).collect::<Result<Vec<_>>>()?;
    HumanEnsemble::new(sets)
}
