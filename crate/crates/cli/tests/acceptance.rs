//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::time::Instant;

use cadsim_core::annotation::ClusterAnnotation;
use cadsim_core::clusterinit::{capacity_split, kmeans_fit, FeatureMatrix};
use cadsim_core::distances::{chamfer, jaccard, DistanceMatrix, Metric};
use cadsim_core::ensemble::{majority_threshold, HumanEnsemble, MethodEnsemble};
use cadsim_core::geometry::{Point3, PointCloud, VoxelGrid};
use cadsim_core::metrics::{balanced_accuracy, confusion_full, edge_accuracy, ranking_report, silhouette, ConfusionCounts};
use cadsim_core::simgraph::canonical_edge;
use cadsim_core::{EdgeKey, EdgeLabel, LabeledEdgeSet, ModelId, Partition};
use cadsim_server::{AnnotationStore, ServiceConfig};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn id(s: &str) -> ModelId {
    ModelId::new(s).unwrap()
}

fn edge(a: &ModelId, b: &ModelId) -> EdgeKey {
    canonical_edge(a, b).unwrap()
}

// ---------------------------------------------------------------- ensembles

const MAX_METHODS: usize = 9;
const MAX_VOTERS: usize = 8;

fn majority_vote_threshold() -> Outcome {
    let (x, y) = (id("x"), id("y"));
    let together = Partition::new(vec![(x.clone(), 0), (y.clone(), 0)]).unwrap();
    let apart = Partition::new(vec![(x.clone(), 0), (y.clone(), 1)]).unwrap();
    let mut cases = 0;
    for n in 1..=MAX_METHODS {
        let threshold = ((n as f64 + 1.0) / 2.0).ceil() as usize;
        check(majority_threshold(n) == threshold, || format!("threshold({n}) = {}, want {threshold}", majority_threshold(n)))?;
        for v in 0..=n {
            let want = if v >= threshold { EdgeLabel::Positive } else { EdgeLabel::Negative };
            // Positive voters first, then last: membership order must not matter.
            for positive_first in [true, false] {
                let mut parts: Vec<(String, Partition)> = (0..n)
                    .map(|m| {
                        let p = if m < v { together.clone() } else { apart.clone() };
                        (format!("m{m}"), p)
                    })
                    .collect();
                if !positive_first {
                    parts.reverse();
                }
                let got = MethodEnsemble::new(parts).map_err(|e| e.to_string())?.label(&edge(&x, &y)).map_err(|e| e.to_string())?;
                check(got == want, || format!("N={n} v={v}: got {got:?}, want {want:?}"))?;
                cases += 1;
            }
        }
    }
    Ok(format!("{cases} (N, v, order) cases"))
}

fn human_tie_rule() -> Outcome {
    let (x, y, z) = (id("x"), id("y"), id("z"));
    let e = edge(&x, &y);
    let mut cases = 0;
    for n in 0..=MAX_VOTERS {
        for p in 0..=n {
            let mut sets = Vec::new();
            for a in 0..n {
                let mut s = LabeledEdgeSet::new(format!("h{a}"));
                s.insert(e.clone(), if a < p { EdgeLabel::Positive } else { EdgeLabel::Negative });
                sets.push(s);
            }
            // Annotators who never saw the edge do not vote.
            let mut other = LabeledEdgeSet::new("bystander");
            other.insert(edge(&x, &z), EdgeLabel::Negative);
            sets.push(other);
            let h = HumanEnsemble::new(sets).map_err(|e| e.to_string())?;
            let want = match p.cmp(&(n - p)) {
                std::cmp::Ordering::Greater => EdgeLabel::Positive,
                std::cmp::Ordering::Less => EdgeLabel::Negative,
                std::cmp::Ordering::Equal => EdgeLabel::Unknown,
            };
            let got = h.label(&e);
            check(got == want, || format!("{p} positive of {n}: got {got:?}, want {want:?}"))?;
            cases += 1;
        }
    }
    Ok(format!("{cases} vote splits, 4-vs-4 -> 0"))
}

// --------------------------------------------------------------- annotation

const MAX_MEMBERS: usize = 6;

/// All set partitions of `0..n` as block lists, via restricted growth strings.
fn set_partitions(n: usize) -> Vec<Vec<Vec<usize>>> {
    fn rec(i: usize, n: usize, rgs: &mut Vec<usize>, out: &mut Vec<Vec<Vec<usize>>>) {
        if i == n {
            let k = rgs.iter().max().map_or(0, |m| m + 1);
            let mut blocks = vec![Vec::new(); k];
            for (x, &b) in rgs.iter().enumerate() {
                blocks[b].push(x);
            }
            out.push(blocks);
            return;
        }
        let limit = rgs.iter().max().map_or(0, |m| m + 1);
        for b in 0..=limit {
            rgs.push(b);
            rec(i + 1, n, rgs, out);
            rgs.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, n, &mut Vec::new(), &mut out);
    out
}

fn permutations<T: Clone>(items: &[T]) -> Vec<Vec<T>> {
    if items.is_empty() {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for i in 0..items.len() {
        let mut rest = items.to_vec();
        let head = rest.remove(i);
        for mut tail in permutations(&rest) {
            tail.insert(0, head.clone());
            out.push(tail);
        }
    }
    out
}

fn oracle_edges(members: &[ModelId], blocks: &[Vec<usize>]) -> BTreeMap<EdgeKey, EdgeLabel> {
    let mut block_of = vec![0; members.len()];
    for (b, block) in blocks.iter().enumerate() {
        for &x in block {
            block_of[x] = b;
        }
    }
    let mut out = BTreeMap::new();
    for i in 0..members.len() {
        for j in i + 1..members.len() {
            let label = if block_of[i] == block_of[j] { EdgeLabel::Positive } else { EdgeLabel::Negative };
            out.insert(edge(&members[i], &members[j]), label);
        }
    }
    out
}

/// Peels `rounds` (checked sets, submitted in reverse member order); an empty
/// set is the "none similar" answer. Stops once the session is terminal.
fn run_rounds(members: &[ModelId], rounds: &[Vec<usize>]) -> Result<ClusterAnnotation, String> {
    let mut s = ClusterAnnotation::new(0, members.to_vec()).map_err(|e| e.to_string())?;
    for r in rounds {
        if s.is_terminal() {
            let lone: Vec<&ModelId> = r.iter().map(|&x| &members[x]).collect();
            check(r.len() == 1 && s.subclusters().iter().any(|c| c.iter().collect::<Vec<_>>() == lone), || {
                format!("session ended before round {r:?}")
            })?;
            break;
        }
        let checked: Vec<ModelId> = r.iter().rev().map(|&x| members[x].clone()).collect();
        s = s.apply_round(&checked).map_err(|e| format!("round {r:?}: {e}"))?;
    }
    check(s.is_terminal(), || "session not terminal after all rounds".into())?;
    Ok(s)
}

fn compare_edges(s: &ClusterAnnotation, members: &[ModelId], blocks: &[Vec<usize>]) -> Result<(), String> {
    let got: BTreeMap<EdgeKey, EdgeLabel> = s.derive_edges().map_err(|e| e.to_string())?.iter().map(|(e, l)| (e.clone(), l)).collect();
    let n = members.len();
    check(got.len() == n * n.saturating_sub(1) / 2, || format!("{blocks:?}: {} edges for {n} members", got.len()))?;
    check(got == oracle_edges(members, blocks), || format!("{blocks:?}: edges differ from oracle"))
}

fn annotation_semantics() -> Outcome {
    let mut partitions = 0;
    let mut sessions = 0;
    for n in 1..=MAX_MEMBERS {
        let members: Vec<ModelId> = (0..n).map(|i| id(&format!("m{i}"))).collect();
        for blocks in set_partitions(n) {
            partitions += 1;
            for order in permutations(&blocks) {
                compare_edges(&run_rounds(&members, &order)?, &members, &blocks)?;
                sessions += 1;
            }
            // Non-singleton blocks peeled, the singletons left by one empty round.
            let (multi, singles): (Vec<_>, Vec<_>) = blocks.iter().cloned().partition(|b| b.len() > 1);
            if singles.len() >= 2 {
                for mut order in permutations(&multi) {
                    order.push(Vec::new());
                    compare_edges(&run_rounds(&members, &order)?, &members, &blocks)?;
                    sessions += 1;
                }
            }
        }
    }
    check(partitions == 1 + 2 + 5 + 15 + 52 + 203, || format!("enumerated {partitions} partitions"))?;
    Ok(format!("{partitions} set partitions, {sessions} peel sequences"))
}

// ------------------------------------------------------------- clusterinit

const CAPACITY_RUNS: u64 = 50;
const CAPACITY_N: usize = 500;
const CAPACITY_D: usize = 8;
const CAPACITY_K: usize = 40;
const CAPACITY_T: usize = 12;

fn blob_features(seed: u64) -> FeatureMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centers: Vec<Vec<f64>> = (0..25).map(|_| (0..CAPACITY_D).map(|_| rng.gen_range(-10.0..10.0)).collect()).collect();
    let noise = Normal::new(0.0, 1.5).unwrap();
    let rows = (0..CAPACITY_N)
        .map(|i| {
            let c = &centers[rng.gen_range(0..centers.len())];
            let row = c.iter().map(|&x| x + noise.sample(&mut rng)).collect();
            (id(&format!("s{i:03}")), row)
        })
        .collect();
    FeatureMatrix::from_rows(rows).unwrap()
}

fn capacity_pipeline() -> Outcome {
    let mut max_size = 0;
    let mut iterations = 0;
    for seed in 0..CAPACITY_RUNS {
        let f = blob_features(1000 + seed);
        let fit = kmeans_fit(&f, CAPACITY_K, seed).map_err(|e| e.to_string())?;
        for w in fit.objective_trace.windows(2) {
            check(w[1] <= w[0], || format!("seed {seed}: objective rose from {} to {}", w[0], w[1]))?;
        }
        iterations += fit.iterations;
        let coarse = Partition::new(f.ids().iter().cloned().zip(fit.labels.iter().copied()).collect()).map_err(|e| e.to_string())?;
        let split = capacity_split(&f, &coarse, CAPACITY_T, seed).map_err(|e| e.to_string())?;
        let p = split.partition();
        let sizes = p.sizes();
        max_size = max_size.max(*sizes.iter().max().unwrap());
        check(sizes.iter().all(|&s| (1..=CAPACITY_T).contains(&s)), || format!("seed {seed}: cluster sizes {sizes:?}"))?;
        let before: BTreeSet<&ModelId> = f.ids().iter().collect();
        let after: BTreeSet<&ModelId> = p.ids().iter().collect();
        check(before == after && p.len() == f.len(), || format!("seed {seed}: membership changed"))?;
        for c in p.clusters() {
            let origin = coarse.cluster_of(&c[0]);
            check(c.iter().all(|m| coarse.cluster_of(m) == origin), || format!("seed {seed}: a split cluster mixes kmeans clusters"))?;
        }
    }
    Ok(format!("{CAPACITY_RUNS} runs, largest cluster {max_size}, {iterations} Lloyd iterations"))
}

// --------------------------------------------------------------- distances

const CHAMFER_PAIRS: u64 = 100;
const CHAMFER_MAX_POINTS: usize = 512;
const CHAMFER_REL_TOL: f64 = 1e-9;

fn random_cloud(rng: &mut ChaCha8Rng, n: usize) -> PointCloud {
    PointCloud::new((0..n).map(|_| [rng.gen::<f64>(), rng.gen::<f64>(), rng.gen::<f64>()]).collect()).unwrap()
}

fn brute_chamfer(p: &[Point3], q: &[Point3]) -> f64 {
    let directed = |a: &[Point3], b: &[Point3]| {
        let total: f64 = a
            .iter()
            .map(|x| b.iter().map(|y| (0..3).map(|k| (x[k] - y[k]).powi(2)).sum::<f64>()).fold(f64::INFINITY, f64::min))
            .sum();
        total / a.len() as f64
    };
    directed(p, q) + directed(q, p)
}

fn chamfer_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst: f64 = 0.0;
    for t in 0..CHAMFER_PAIRS {
        let np = rng.gen_range(1..=CHAMFER_MAX_POINTS);
        let p = random_cloud(&mut rng, np);
        let nq = rng.gen_range(1..=CHAMFER_MAX_POINTS);
        let q = random_cloud(&mut rng, nq);
        let fast = chamfer(&p, &q).map_err(|e| e.to_string())?;
        let slow = brute_chamfer(p.points(), q.points());
        let rel = (fast - slow).abs() / slow.abs().max(f64::MIN_POSITIVE);
        worst = worst.max(rel);
        check(rel <= CHAMFER_REL_TOL, || format!("pair {t}: {fast} vs brute force {slow}"))?;
        let back = chamfer(&q, &p).map_err(|e| e.to_string())?;
        check(fast.to_bits() == back.to_bits(), || format!("pair {t}: asymmetric {fast} vs {back}"))?;
        let own = chamfer(&p, &p).map_err(|e| e.to_string())?;
        check(own == 0.0, || format!("pair {t}: chamfer(P, P) = {own}"))?;
    }
    Ok(format!("{CHAMFER_PAIRS} pairs, worst relative error {worst:.1e}"))
}

fn grid(cells: &[[u32; 3]]) -> VoxelGrid {
    VoxelGrid::new(4, cells.iter().copied()).unwrap()
}

fn jaccard_cases() -> Outcome {
    let a = grid(&[[0, 0, 0], [1, 1, 1], [2, 2, 2]]);
    let b = grid(&[[1, 1, 1], [2, 2, 2], [3, 3, 3]]);
    let c = grid(&[[3, 0, 0]]);
    let empty = grid(&[]);
    let cases: [(&str, &VoxelGrid, &VoxelGrid, f64); 5] = [
        ("identity", &a, &a, 0.0),
        ("disjoint", &a, &c, 1.0),
        ("half overlap", &a, &b, 0.5),
        ("both empty", &empty, &empty, 0.0),
        ("one empty", &a, &empty, 1.0),
    ];
    for (name, x, y, want) in cases {
        let got = jaccard(x, y).map_err(|e| e.to_string())?;
        check(got == want, || format!("{name}: {got}, want {want}"))?;
        let back = jaccard(y, x).map_err(|e| e.to_string())?;
        check(back == want, || format!("{name} reversed: {back}, want {want}"))?;
    }
    Ok("5 cases exact".into())
}

// ----------------------------------------------------------------- metrics

const SILHOUETTE_INSTANCES: u64 = 50;
const SILHOUETTE_MAX_N: usize = 60;
const SILHOUETTE_TOL: f64 = 1e-12;

/// Direct O(n^2) silhouette over a dense matrix and label vector.
fn direct_silhouette(d: &[Vec<f64>], labels: &[usize]) -> Vec<f64> {
    let n = labels.len();
    let k = labels.iter().max().unwrap() + 1;
    (0..n)
        .map(|i| {
            let mut sum = vec![0.0; k];
            let mut count = vec![0usize; k];
            for j in 0..n {
                if j != i {
                    sum[labels[j]] += d[i][j];
                    count[labels[j]] += 1;
                }
            }
            let own = labels[i];
            if count[own] == 0 {
                return 0.0;
            }
            let a = sum[own] / count[own] as f64;
            let b = (0..k).filter(|&c| c != own && count[c] > 0).map(|c| sum[c] / count[c] as f64).fold(f64::INFINITY, f64::min);
            if a.max(b) == 0.0 {
                0.0
            } else {
                (b - a) / a.max(b)
            }
        })
        .collect()
}

fn matrix(ids: &[ModelId], d: &[Vec<f64>], scale: f64) -> DistanceMatrix {
    let values = d.iter().flat_map(|row| row.iter().map(|v| v * scale)).collect();
    DistanceMatrix::from_values(ids.to_vec(), values, Metric::Chamfer).unwrap()
}

fn silhouette_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut worst: f64 = 0.0;
    let mut singletons = 0;
    for t in 0..SILHOUETTE_INSTANCES {
        let n = rng.gen_range(4..=SILHOUETTE_MAX_N);
        let k = rng.gen_range(2..=n.min(8));
        // Every cluster non-empty; extra members assigned at random.
        let mut labels: Vec<usize> = (0..n).map(|i| if i < k { i } else { rng.gen_range(0..k) }).collect();
        labels.shuffle(&mut rng);
        let pts: Vec<[f64; 3]> = (0..n).map(|_| [rng.gen(), rng.gen(), rng.gen()]).collect();
        let mut d = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in i + 1..n {
                let v = (0..3).map(|c| (pts[i][c] - pts[j][c]).powi(2)).sum::<f64>().sqrt();
                d[i][j] = v;
                d[j][i] = v;
            }
        }
        let ids: Vec<ModelId> = (0..n).map(|i| id(&format!("o{i:02}"))).collect();
        let p = Partition::new(ids.iter().cloned().zip(labels.iter().map(|&l| l as u32)).collect()).unwrap();
        let want = direct_silhouette(&d, &labels);
        let got = silhouette(&p, &matrix(&ids, &d, 1.0)).map_err(|e| e.to_string())?;
        for ((gid, g), (w, oid)) in got.per_object.iter().zip(want.iter().zip(&ids)) {
            check(gid == oid, || format!("instance {t}: object order differs"))?;
            worst = worst.max((g - w).abs());
            check((g - w).abs() <= SILHOUETTE_TOL, || format!("instance {t} {gid}: {g} vs direct {w}"))?;
        }
        let want_mean = want.iter().sum::<f64>() / n as f64;
        check((got.mean - want_mean).abs() <= SILHOUETTE_TOL, || format!("instance {t}: mean {} vs {want_mean}", got.mean))?;
        for (i, &l) in labels.iter().enumerate() {
            if labels.iter().filter(|&&m| m == l).count() == 1 {
                singletons += 1;
                check(got.per_object[i].1 == 0.0, || format!("instance {t}: singleton has s = {}", got.per_object[i].1))?;
            }
        }
        for c in [0.5, 3.0] {
            let scaled = silhouette(&p, &matrix(&ids, &d, c)).map_err(|e| e.to_string())?;
            for ((_, a), (_, b)) in scaled.per_object.iter().zip(&got.per_object) {
                check((a - b).abs() <= SILHOUETTE_TOL, || format!("instance {t}: scale {c} changes s from {b} to {a}"))?;
            }
        }
    }
    // All-singleton partition.
    let ids: Vec<ModelId> = (0..5).map(|i| id(&format!("z{i}"))).collect();
    let d: Vec<Vec<f64>> = (0..5).map(|i| (0..5).map(|j| (i as f64 - j as f64).abs()).collect()).collect();
    let p = Partition::new(ids.iter().cloned().zip(0..5).collect()).unwrap();
    let s = silhouette(&p, &matrix(&ids, &d, 1.0)).map_err(|e| e.to_string())?;
    check(s.per_object.iter().all(|(_, v)| *v == 0.0) && s.mean == 0.0, || "all-singleton partition not all zero".into())?;
    Ok(format!("{SILHOUETTE_INSTANCES} instances, worst deviation {worst:.1e}, {singletons} singletons"))
}

const IDENTITY_TRIALS: usize = 100;
const EQUAL_CLASS_TOL: f64 = 2.0 * f64::EPSILON;

fn metric_identities() -> Outcome {
    let c = ConfusionCounts { tp: 40, fn_: 10, tn: 80, fp: 20 };
    let ba = balanced_accuracy(&c).map_err(|e| e.to_string())?;
    check(ba == 0.8, || format!("balanced accuracy {ba}, want 0.8"))?;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst: f64 = 0.0;
    for t in 0..IDENTITY_TRIALS {
        let per_class: u64 = rng.gen_range(1..10_000);
        let tp = rng.gen_range(0..=per_class);
        let tn = rng.gen_range(0..=per_class);
        let c = ConfusionCounts { tp, fn_: per_class - tp, tn, fp: per_class - tn };
        let ea = edge_accuracy(&c).map_err(|e| e.to_string())?;
        let ba = balanced_accuracy(&c).map_err(|e| e.to_string())?;
        worst = worst.max((ea - ba).abs());
        check((ea - ba).abs() <= EQUAL_CLASS_TOL, || format!("trial {t}: edge accuracy {ea} vs balanced {ba}"))?;
    }
    Ok(format!("BA(40,10,80,20) = 0.8; {IDENTITY_TRIALS} balanced references, worst gap {worst:.1e}"))
}

// ------------------------------------------------------- ensemble recovery

const RECOVERY_SEEDS: u64 = 20;
const RECOVERY_NODES: usize = 500;
const RECOVERY_CLUSTERS: u32 = 25;
const NOISE: [f64; 7] = [0.05, 0.10, 0.15, 0.20, 0.25, 0.30, 0.35];
const MIN_BEATS_MEAN: u64 = 19;
const MIN_RANKING_MATCHES: u64 = 18;

fn corrupt(truth: &[u32], p: f64, rng: &mut ChaCha8Rng) -> Vec<u32> {
    truth
        .iter()
        .map(|&c| {
            if rng.gen_bool(p) {
                let other = rng.gen_range(0..RECOVERY_CLUSTERS - 1);
                if other >= c {
                    other + 1
                } else {
                    other
                }
            } else {
                c
            }
        })
        .collect()
}

fn ensemble_recovery() -> Outcome {
    let ids: Vec<ModelId> = (0..RECOVERY_NODES).map(|i| id(&format!("n{i:03}"))).collect();
    let mut beats_mean = 0;
    let mut ranking_matches = 0;
    let mut realized_matches = 0;
    for seed in 0..RECOVERY_SEEDS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let truth: Vec<u32> = (0..RECOVERY_NODES).map(|_| rng.gen_range(0..RECOVERY_CLUSTERS)).collect();
        let truth_p = Partition::compacting(ids.iter().cloned().zip(truth.iter().map(|&c| c as u64)).collect()).unwrap();
        let raw: Vec<Vec<u32>> = NOISE.iter().map(|&p| corrupt(&truth, p, &mut rng)).collect();
        let moved: Vec<usize> = raw.iter().map(|l| l.iter().zip(&truth).filter(|(a, b)| a != b).count()).collect();
        let copies: Vec<(String, Partition)> = raw
            .iter()
            .enumerate()
            .map(|(m, labels)| {
                let part = Partition::compacting(ids.iter().cloned().zip(labels.iter().map(|&c| c as u64)).collect()).unwrap();
                (format!("copy{m}"), part)
            })
            .collect();
        let individual: Vec<f64> = copies
            .iter()
            .map(|(_, p)| balanced_accuracy(&confusion_full(p, &truth_p).unwrap()).unwrap())
            .collect();
        let mean = individual.iter().sum::<f64>() / individual.len() as f64;

        let ens = MethodEnsemble::new(copies.clone()).map_err(|e| e.to_string())?;
        let mut c = ConfusionCounts::default();
        for i in 0..RECOVERY_NODES {
            for j in i + 1..RECOVERY_NODES {
                c.record(ens.similar_at(i, j), truth[i] == truth[j]);
            }
        }
        let ens_ba = balanced_accuracy(&c).map_err(|e| e.to_string())?;
        if ens_ba >= mean {
            beats_mean += 1;
        }

        let mut scores: BTreeMap<String, BTreeMap<u32, f64>> = BTreeMap::new();
        for (name, p) in &copies {
            let ba = balanced_accuracy(&confusion_full(p, &ens).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
            scores.entry(name.clone()).or_default().insert(RECOVERY_CLUSTERS, ba);
        }
        let report = ranking_report(&scores).map_err(|e| e.to_string())?;
        let order: Vec<&str> = report.mean_over_k.iter().map(|(m, _)| m.as_str()).collect();
        let noise_order: Vec<String> = (0..NOISE.len()).map(|m| format!("copy{m}")).collect();
        if order.iter().zip(&noise_order).all(|(a, b)| *a == b.as_str()) {
            ranking_matches += 1;
        }
        let mut by_moved: Vec<usize> = (0..NOISE.len()).collect();
        by_moved.sort_by_key(|&m| moved[m]);
        if order.iter().zip(&by_moved).all(|(a, &m)| *a == noise_order[m]) {
            realized_matches += 1;
        }
    }
    let detail = format!(
        "ensemble >= mean in {beats_mean}/{RECOVERY_SEEDS} (need {MIN_BEATS_MEAN}); ranking = noise order in {ranking_matches}/{RECOVERY_SEEDS} (need {MIN_RANKING_MATCHES}); \
         ranking = realized reassignment order in {realized_matches}/{RECOVERY_SEEDS}"
    );
    check(beats_mean >= MIN_BEATS_MEAN && ranking_matches >= MIN_RANKING_MATCHES, || detail.clone())?;
    Ok(detail)
}

// ------------------------------------------------------------------ service

fn store_config(dir: &Path, tasks: &Partition, annotators: &[(&str, &str)]) -> ServiceConfig {
    tasks.write(&dir.join("tasks.tsv")).unwrap();
    ServiceConfig {
        task_file: dir.join("tasks.tsv"),
        log_path: dir.join("rounds.jsonl"),
        preview_dir: None,
        bind: "127.0.0.1:0".into(),
        annotators: annotators.iter().map(|(n, t)| (n.to_string(), t.to_string())).collect(),
    }
}

fn strings(xs: &[&str]) -> Vec<String> {
    xs.iter().map(|s| s.to_string()).collect()
}

const REPLAY_TRACES: u64 = 25;

fn service_durability() -> Outcome {
    // Golden transcript.
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let tasks = Partition::parse_tsv("a\t0\nb\t0\nc\t0\nd\t0\n").unwrap();
    let cfg = store_config(dir.path(), &tasks, &[("ann", "tok")]);
    let mut store = AnnotationStore::open(&cfg).map_err(|e| e.to_string())?;
    store.submit("tok", 0, &strings(&["a", "b"]), None).map_err(|e| e.to_string())?;
    let out = store.submit("tok", 0, &strings(&["c", "d"]), None).map_err(|e| e.to_string())?;
    check(out.terminal, || "golden session not terminal".into())?;
    let export = store.export("tok").map_err(|e| e.to_string())?;
    let golden = "a\tb\t+1\na\tc\t-1\na\td\t-1\nb\tc\t-1\nb\td\t-1\nc\td\t+1\n";
    check(export.to_tsv() == golden, || format!("golden export:\n{}", export.to_tsv()))?;
    let positives = export.iter().filter(|(_, l)| *l == EdgeLabel::Positive).count();
    check(export.len() == 6 && positives == 2, || "golden export is not 6 edges with 2 positives".into())?;

    // Random traces, replayed into a fresh store, with and without a torn tail.
    let tokens = [("ann0", "t0"), ("ann1", "t1"), ("ann2", "t2")];
    let mut rounds_total = 0;
    for seed in 0..REPLAY_TRACES {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let n = rng.gen_range(6..30);
        let k = rng.gen_range(1..5u64);
        let tasks = Partition::compacting((0..n).map(|i| (id(&format!("t{i:02}")), rng.gen_range(0..k))).collect()).unwrap();
        let cfg = store_config(dir.path(), &tasks, &tokens);
        let mut live = AnnotationStore::open(&cfg).map_err(|e| e.to_string())?;
        for _ in 0..rng.gen_range(0..40) {
            let (_, tok) = tokens[rng.gen_range(0..tokens.len())];
            let Some(task) = live.next_cluster(tok).map_err(|e| e.to_string())? else { continue };
            let checked: Vec<String> = match rng.gen_range(0..4) {
                0 => Vec::new(),
                _ => task.remaining.iter().filter(|_| rng.gen_bool(0.5)).cloned().collect(),
            };
            live.submit(tok, task.cluster_id, &checked, Some(task.round)).map_err(|e| e.to_string())?;
            rounds_total += 1;
        }
        let snapshot = |s: &AnnotationStore| -> Result<_, String> {
            let exports: Vec<Option<String>> = tokens.iter().map(|(_, t)| s.export(t).ok().map(|x| x.to_tsv())).collect();
            let next: Vec<_> = tokens.iter().map(|(_, t)| s.next_cluster(t).map_err(|e| e.to_string())).collect::<Result<_, _>>()?;
            Ok((exports, next, s.progress().map_err(|e| e.to_string())?))
        };
        let before = snapshot(&live)?;
        drop(live);
        let replayed = AnnotationStore::open(&cfg).map_err(|e| e.to_string())?;
        check(snapshot(&replayed)? == before, || format!("trace {seed}: replay differs"))?;
        drop(replayed);

        let mut log = std::fs::OpenOptions::new().append(true).open(&cfg.log_path).map_err(|e| e.to_string())?;
        std::io::Write::write_all(&mut log, b"{\"annotator\":\"ann0\",\"clu").map_err(|e| e.to_string())?;
        drop(log);
        let torn = AnnotationStore::open(&cfg).map_err(|e| e.to_string())?;
        check(snapshot(&torn)? == before, || format!("trace {seed}: replay after torn write differs"))?;
    }
    Ok(format!("golden 6-edge export with 2 positives; {REPLAY_TRACES} traces ({rounds_total} rounds) replayed bit-exactly"))
}

// --------------------------------------------------------------------- main

fn main() {
    let criteria: [Criterion; 10] = [
        ("majority-vote threshold", majority_vote_threshold),
        ("human tie rule", human_tie_rule),
        ("annotation semantics", annotation_semantics),
        ("capacity pipeline", capacity_pipeline),
        ("chamfer oracle", chamfer_oracle),
        ("silhouette oracle", silhouette_oracle),
        ("metric identities", metric_identities),
        ("ensemble recovery", ensemble_recovery),
        ("jaccard", jaccard_cases),
        ("service durability", service_durability),
    ];
    let mut failed = 0;
    for (name, f) in criteria {
        let start = Instant::now();
        let outcome = f();
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS  {name:<24} {secs:>7.2}s  {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL  {name:<24} {secs:>7.2}s  {why}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
