//! External indices over labeled edges, the silhouette internal index, and
//! rankings across methods and cluster counts.
//!
//! Edge accuracy is the fraction of evaluated edges whose predicted label
//! matches the reference. The written form `Σ |ê - e| / (2 n(E'))` from the
//! evaluation protocol counts mismatches instead; this module reports the
//! match fraction (one minus that sum), which is what the protocol's numbers
//! treat as accuracy.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;

use crate::distances::DistanceMatrix;
use crate::ensemble::{HumanEnsemble, MethodEnsemble};
use crate::error::{Error, Result};
use crate::simgraph::{EdgeKey, EdgeLabel, LabeledEdgeSet, ModelId, Partition};

/// Binary confusion tallies with `+1` (similar) as the positive class.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn record(&mut self, predicted_similar: bool, reference_similar: bool) {
        match (predicted_similar, reference_similar) {
            (true, true) => self.tp += 1,
            (true, false) => self.fp += 1,
            (false, false) => self.tn += 1,
            (false, true) => self.fn_ += 1,
        }
    }

    fn merge(self, o: ConfusionCounts) -> ConfusionCounts {
        ConfusionCounts { tp: self.tp + o.tp, fp: self.fp + o.fp, tn: self.tn + o.tn, fn_: self.fn_ + o.fn_ }
    }
}

/// A labeling of edges used as evaluation reference. `Unknown` edges are
/// skipped.
pub trait EdgeReference {
    fn reference_label(&self, edge: &EdgeKey) -> Result<EdgeLabel>;
}

impl EdgeReference for Partition {
    fn reference_label(&self, edge: &EdgeKey) -> Result<EdgeLabel> {
        self.edge_label(edge)
    }
}

impl EdgeReference for MethodEnsemble {
    fn reference_label(&self, edge: &EdgeKey) -> Result<EdgeLabel> {
        self.label(edge)
    }
}

impl EdgeReference for HumanEnsemble {
    fn reference_label(&self, edge: &EdgeKey) -> Result<EdgeLabel> {
        Ok(self.label(edge))
    }
}

impl EdgeReference for LabeledEdgeSet {
    fn reference_label(&self, edge: &EdgeKey) -> Result<EdgeLabel> {
        Ok(self.label(edge))
    }
}

/// A reference defined on every pair of a fixed model list.
pub trait DenseReference: Sync {
    fn ids(&self) -> &[ModelId];
    fn similar_at(&self, i: usize, j: usize) -> bool;
}

impl DenseReference for Partition {
    fn ids(&self) -> &[ModelId] {
        Partition::ids(self)
    }

    fn similar_at(&self, i: usize, j: usize) -> bool {
        let l = self.labels();
        l[i] == l[j]
    }
}

impl DenseReference for MethodEnsemble {
    fn ids(&self) -> &[ModelId] {
        MethodEnsemble::ids(self)
    }

    fn similar_at(&self, i: usize, j: usize) -> bool {
        MethodEnsemble::similar_at(self, i, j)
    }
}

/// Confusion of `pred` against `reference` over the given edges.
pub fn confusion<'a>(
    pred: &Partition,
    reference: &impl EdgeReference,
    edges: impl IntoIterator<Item = &'a EdgeKey>,
) -> Result<ConfusionCounts> {
    let mut c = ConfusionCounts::default();
    for e in edges {
        let r = reference.reference_label(e)?;
        if !r.is_known() {
            continue;
        }
        let p = pred.edge_label(e)?;
        c.record(p == EdgeLabel::Positive, r == EdgeLabel::Positive);
    }
    if c.total() == 0 {
        return Err(Error::NoLabeledEdges);
    }
    Ok(c)
}

/// Confusion over the sparse support of a human ensemble.
pub fn confusion_vs_human(pred: &Partition, human: &HumanEnsemble) -> Result<ConfusionCounts> {
    let support = human.support();
    confusion(pred, human, &support)
}

/// Confusion over all `C(|V|, 2)` pairs of a dense reference. Integer tallies
/// merged per row, so the result does not depend on scheduling.
pub fn confusion_full(pred: &Partition, reference: &impl DenseReference) -> Result<ConfusionCounts> {
    let ids = reference.ids();
    if pred.len() != ids.len() {
        return Err(Error::invalid(format!("prediction covers {} models, reference covers {}", pred.len(), ids.len())));
    }
    let pred_labels = ids
        .iter()
        .map(|id| pred.cluster_of(id).ok_or_else(|| Error::UnknownModel(id.clone())))
        .collect::<Result<Vec<u32>>>()?;
    let n = ids.len();
    let c = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut c = ConfusionCounts::default();
            for j in i + 1..n {
                c.record(pred_labels[i] == pred_labels[j], reference.similar_at(i, j));
            }
            c
        })
        .reduce(ConfusionCounts::default, ConfusionCounts::merge);
    if c.total() == 0 {
        return Err(Error::NoLabeledEdges);
    }
    Ok(c)
}

/// Fraction of evaluated edges whose label matches the reference.
pub fn edge_accuracy(c: &ConfusionCounts) -> Result<f64> {
    let total = c.total();
    if total == 0 {
        return Err(Error::NoLabeledEdges);
    }
    Ok((c.tp + c.tn) as f64 / total as f64)
}

/// Mean of the true-positive and true-negative rates.
pub fn balanced_accuracy(c: &ConfusionCounts) -> Result<f64> {
    let pos = c.tp + c.fn_;
    let neg = c.tn + c.fp;
    if pos == 0 || neg == 0 {
        return Err(Error::ClassAbsent);
    }
    Ok((c.tp as f64 / pos as f64 + c.tn as f64 / neg as f64) / 2.0)
}

#[derive(Clone, Debug, PartialEq)]
pub struct SilhouetteResult {
    pub per_object: Vec<(ModelId, f64)>,
    pub mean: f64,
}

/// Silhouette of partition `p` under distance matrix `d`, with `s(i) = 0` for
/// members of singleton clusters (and when `a(i) = b(i) = 0`).
pub fn silhouette(p: &Partition, d: &DistanceMatrix) -> Result<SilhouetteResult> {
    if p.k() < 2 {
        return Err(Error::SingleCluster);
    }
    let dpos: HashMap<&ModelId, usize> = d.ids().iter().enumerate().map(|(i, id)| (id, i)).collect();
    let rows = p
        .ids()
        .iter()
        .map(|id| dpos.get(id).copied().ok_or_else(|| Error::UnknownModel(id.clone())))
        .collect::<Result<Vec<usize>>>()?;
    let labels = p.labels();
    let sizes = p.sizes();
    let k = p.k() as usize;
    let n = p.len();

    let scores: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| {
            let own = labels[i] as usize;
            if sizes[own] == 1 {
                return 0.0;
            }
            let mut sums = vec![0.0f64; k];
            for j in 0..n {
                if j != i {
                    sums[labels[j] as usize] += d.get(rows[i], rows[j]);
                }
            }
            let a = sums[own] / (sizes[own] - 1) as f64;
            let b = (0..k).filter(|&c| c != own).map(|c| sums[c] / sizes[c] as f64).fold(f64::INFINITY, f64::min);
            let m = a.max(b);
            if m > 0.0 {
                (b - a) / m
            } else {
                0.0
            }
        })
        .collect();
    let mean = scores.iter().sum::<f64>() / n as f64;
    Ok(SilhouetteResult { per_object: p.ids().iter().cloned().zip(scores).collect(), mean })
}

/// Methods ordered best first, each with its score.
pub type Ranking = Vec<(String, f64)>;

#[derive(Clone, Debug, PartialEq)]
pub struct RankingReport {
    pub per_k: Vec<(u32, Ranking)>,
    pub mean_over_k: Ranking,
}

fn rank(mut entries: Vec<(String, f64)>) -> Ranking {
    entries.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    entries
}

/// Ranks methods per K and by their mean score over the K grid. Higher is
/// better; ties go to the alphabetically first method.
pub fn ranking_report(scores: &MethodScores) -> Result<RankingReport> {
    let Some((first_name, first)) = scores.iter().next() else {
        return Err(Error::invalid("no scores to rank"));
    };
    let grid: Vec<u32> = first.keys().copied().collect();
    if grid.is_empty() {
        return Err(Error::invalid(format!("method {first_name} has no scores")));
    }
    for (name, by_k) in scores {
        if !by_k.keys().copied().eq(grid.iter().copied()) {
            return Err(Error::invalid(format!("method {name} has a different K grid than {first_name}")));
        }
        if let Some((k, v)) = by_k.iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::invalid(format!("method {name} has a non-finite score {v} at K={k}")));
        }
    }
    let per_k = grid
        .iter()
        .map(|k| (*k, rank(scores.iter().map(|(name, by_k)| (name.clone(), by_k[k])).collect())))
        .collect();
    let mean_over_k =
        rank(scores.iter().map(|(name, by_k)| (name.clone(), by_k.values().sum::<f64>() / by_k.len() as f64)).collect());
    Ok(RankingReport { per_k, mean_over_k })
}

/// Scores per method and K.
pub type MethodScores = BTreeMap<String, BTreeMap<u32, f64>>;

/// One row of a score file: `method<TAB>K<TAB>index_name<TAB>value`.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoreRow {
    pub method: String,
    pub k: u32,
    pub index: String,
    pub value: f64,
}

impl ScoreRow {
    pub fn to_tsv_line(&self) -> String {
        format!("{}\t{}\t{}\t{:.6}\n", self.method, self.k, self.index, self.value)
    }
}

pub fn parse_score_rows(text: &str) -> Result<Vec<ScoreRow>> {
    let mut rows = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let lineno = lineno + 1;
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 4 {
            return Err(Error::parse(lineno, "expected `method<TAB>K<TAB>index_name<TAB>value`"));
        }
        let k = f[1].parse().map_err(|_| Error::parse(lineno, format!("bad K {:?}", f[1])))?;
        let value = f[3].trim().parse().map_err(|_| Error::parse(lineno, format!("bad value {:?}", f[3])))?;
        rows.push(ScoreRow { method: f[0].to_string(), k, index: f[2].to_string(), value });
    }
    Ok(rows)
}

pub fn read_score_rows(path: &Path) -> Result<Vec<ScoreRow>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_score_rows(&text)
}

/// Groups rows into `index -> method -> K -> value`. Duplicate cells are an
/// error.
pub fn group_scores(rows: &[ScoreRow]) -> Result<BTreeMap<String, MethodScores>> {
    let mut out: BTreeMap<String, MethodScores> = BTreeMap::new();
    for r in rows {
        let cell = out.entry(r.index.clone()).or_default().entry(r.method.clone()).or_default();
        if cell.insert(r.k, r.value).is_some() {
            return Err(Error::invalid(format!("duplicate score for {} K={} {}", r.method, r.k, r.index)));
        }
    }
    Ok(out)
}

/// Plain-text ranking summary for one index.
pub fn render_ranking(index: &str, report: &RankingReport) -> String {
    let mut out = String::new();
    let names = |r: &Ranking| r.iter().map(|(m, _)| m.as_str()).collect::<Vec<_>>().join(" > ");
    let _ = writeln!(out, "[{index}]");
    for (k, r) in &report.per_k {
        let _ = writeln!(out, "K={k}\t{}", names(r));
    }
    let _ = writeln!(out, "mean\t{}", names(&report.mean_over_k));
    for (m, v) in &report.mean_over_k {
        let _ = writeln!(out, "  {m}\t{v:.6}");
    }
    out
}
