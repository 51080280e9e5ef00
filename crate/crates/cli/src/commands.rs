use std::fmt::Write as _;
use std::path::Path;

use anyhow::{bail, Context, Result};
use cadsim_client::Client;
use cadsim_core::clusterinit::{capacity_split, kmeans, kmeans_fit, FeatureMatrix};
use cadsim_core::distances::DistanceMatrix;
use cadsim_core::ensemble::{
    ensemble_human_score, load_method_ensemble, member_name, read_manifest, HumanEnsemble, MethodEnsemble,
};
use cadsim_core::fmt::format_g;
use cadsim_core::geometry::{minmax_normalize, sample_surface, ObjOptions, TriangleMesh};
use cadsim_core::metrics::{
    balanced_accuracy, confusion_full, confusion_vs_human, edge_accuracy, group_scores, ranking_report,
    read_score_rows, render_ranking, silhouette, ConfusionCounts, ScoreRow,
};
use cadsim_core::simgraph::{canonical_edge, consistency, label_stats};
use cadsim_core::{EdgeLabel, LabeledEdgeSet, ModelId, Partition};
use cadsim_server::ServiceConfig;

use crate::shapes::{clouds_for, compute_matrix, list_clouds, load_shapes};
use crate::{
    AnnotateAction, AnnotateArgs, Cli, Command, ConsistencyArgs, DistancesArgs, EnsembleArgs, EvaluateArgs, InitArgs,
    ReportArgs, SampleArgs, ServeArgs, SilhouetteArgs, StatsArgs, SweepArgs,
};

/// Invalid flag combination; reported with exit status 1.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

pub fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(usage("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().context("configuring the thread pool")?;
    }
    let threads = cli.threads;
    match cli.command {
        Command::Sample(a) => sample(a),
        Command::Init(a) => init(a),
        Command::Sweep(a) => sweep(a),
        Command::Serve(a) => serve(a),
        Command::Annotate(a) => annotate(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Silhouette(a) => silhouette_cmd(a, threads),
        Command::Distances(a) => distances(a, threads),
        Command::Ensemble(a) => ensemble(a),
        Command::Report(a) => report(a),
        Command::Consistency(a) => consistency_cmd(a),
        Command::Stats(a) => stats(a),
    }
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => std::fs::write(path, text).with_context(|| format!("writing {}", path.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn sample(a: SampleArgs) -> Result<()> {
    if a.n == 0 {
        return Err(usage("--n must be at least 1"));
    }
    let mesh = TriangleMesh::read_obj(&a.mesh, ObjOptions { lenient: a.lenient })?;
    let mut cloud = sample_surface(&mesh, a.n, a.seed)?;
    if a.normalize {
        cloud = minmax_normalize(&cloud)?;
    }
    cloud.write(&a.out)?;
    Ok(())
}

fn init(a: InitArgs) -> Result<()> {
    if a.capacity == 0 {
        return Err(usage("--capacity must be at least 1"));
    }
    if a.k == 0 {
        return Err(usage("--k must be at least 1"));
    }
    let f = FeatureMatrix::read(&a.features)?;
    let fit = kmeans_fit(&f, a.k, a.seed)?;
    let coarse = Partition::new(f.ids().iter().cloned().zip(fit.labels.iter().copied()).collect())?;
    let init = capacity_split(&f, &coarse, a.capacity, a.seed)?;
    init.partition().write(&a.out)?;
    eprintln!(
        "kmeans: K={} in {} iterations, objective {}; {} clusters after capacity split (T={})",
        a.k,
        fit.iterations,
        format_g(*fit.objective_trace.last().unwrap_or(&0.0), 9),
        init.partition().k(),
        a.capacity
    );
    Ok(())
}

fn sweep(a: SweepArgs) -> Result<()> {
    let f = FeatureMatrix::read(&a.features)?;
    let method = a.method.unwrap_or_else(|| member_name(&a.features));
    std::fs::create_dir_all(&a.out_dir).with_context(|| format!("creating {}", a.out_dir.display()))?;
    for &k in a.k_grid.values() {
        let p = kmeans(&f, k as usize, a.seed)?;
        p.write(&a.out_dir.join(format!("{method}_k{k}.tsv")))?;
    }
    Ok(())
}

fn serve(a: ServeArgs) -> Result<()> {
    let mut config = ServiceConfig::load(&a.config)?;
    if let Some(bind) = a.bind {
        config.bind = bind;
    }
    let rt = tokio::runtime::Runtime::new().context("starting the async runtime")?;
    rt.block_on(cadsim_server::serve(config))?;
    Ok(())
}

fn annotate(a: AnnotateArgs) -> Result<()> {
    let client = Client::new(a.url, a.token);
    let rt = tokio::runtime::Builder::new_current_thread().enable_all().build().context("starting the async runtime")?;
    rt.block_on(async {
        match a.action {
            AnnotateAction::Next => match client.next_cluster().await? {
                Some(t) => {
                    println!("cluster\t{}", t.cluster_id);
                    println!("round\t{}", t.round);
                    println!("members\t{}", t.members.join(","));
                    println!("remaining\t{}", t.remaining.join(","));
                }
                None => println!("done"),
            },
            AnnotateAction::Submit { cluster, checked, round } => {
                let checked: Vec<String> = checked.into_iter().filter(|c| !c.is_empty()).collect();
                let out = client.submit_round(cluster, &checked, round).await?;
                println!("cluster\t{}", out.cluster_id);
                println!("round\t{}", out.round);
                println!("remaining\t{}", out.remaining.join(","));
                println!("terminal\t{}", out.terminal);
            }
            AnnotateAction::Export { out } => emit(out.as_deref(), &client.export().await?)?,
            AnnotateAction::Progress => {
                let p = client.progress().await?;
                for a in &p.annotators {
                    println!("{}\t{}/{}\t{}", a.annotator, a.completed, a.total, a.edges_labeled);
                }
                for c in &p.consistency {
                    let v = c.consistency.map_or("-".to_string(), |v| format!("{v:.6}"));
                    println!("consistency\t{}\t{}\t{v}", c.a, c.b);
                }
            }
        }
        anyhow::Ok(())
    })
}

fn scores(method: &str, k: u32, prefix: &str, c: &ConfusionCounts) -> Result<(Vec<ScoreRow>, f64)> {
    let ba = balanced_accuracy(c)?;
    let rows = vec![
        ScoreRow { method: method.into(), k, index: format!("edge_accuracy_{prefix}"), value: edge_accuracy(c)? },
        ScoreRow { method: method.into(), k, index: format!("balanced_accuracy_{prefix}"), value: ba },
    ];
    Ok((rows, ba))
}

fn evaluate(a: EvaluateArgs) -> Result<()> {
    if a.human.is_empty() && a.human_manifest.is_none() && a.ensemble.is_none() {
        return Err(usage("evaluate needs --human, --human-manifest or --ensemble"));
    }
    if a.loo && a.ensemble.is_none() {
        return Err(usage("--loo only applies with --ensemble"));
    }
    let pred = Partition::read(&a.partition)?;
    let method = a.method.unwrap_or_else(|| member_name(&a.partition));
    let k = a.k.unwrap_or(pred.k());
    let mut rows = Vec::new();

    let mut human_files = a.human.clone();
    if let Some(m) = &a.human_manifest {
        human_files.extend(read_manifest(m)?);
    }
    let ba_human = if human_files.is_empty() {
        None
    } else {
        let sets = human_files.iter().map(|p| LabeledEdgeSet::read(p)).collect::<Result<Vec<_>, _>>()?;
        let h = HumanEnsemble::new(sets)?;
        let c = confusion_vs_human(&pred, &h).context("scoring against the human ensemble")?;
        let (r, ba) = scores(&method, k, "human", &c).context("scoring against the human ensemble")?;
        rows.extend(r);
        Some(ba)
    };

    let ba_ensemble = match &a.ensemble {
        None => None,
        Some(m) => {
            let mut ens = load_method_ensemble(m)?;
            if a.loo {
                ens = ens.without(&method)?;
            }
            let c = confusion_full(&pred, &ens).context("scoring against the method ensemble")?;
            let (r, ba) = scores(&method, k, "ensemble", &c).context("scoring against the method ensemble")?;
            rows.extend(r);
            Some(ba)
        }
    };

    if let (Some(e), Some(h)) = (ba_ensemble, ba_human) {
        rows.push(ScoreRow { method: method.clone(), k, index: "ensemble_human".into(), value: ensemble_human_score(e, h)? });
    }
    let text: String = rows.iter().map(ScoreRow::to_tsv_line).collect();
    emit(a.out.as_deref(), &text)
}

fn matrix_for(p: &Partition, a: &SilhouetteArgs, threads: Option<usize>) -> Result<DistanceMatrix> {
    let s = &a.source;
    match (&s.matrix, &s.shapes, s.metric) {
        (Some(path), None, None) => Ok(DistanceMatrix::read(path)?),
        (None, Some(dir), Some(metric)) => {
            let shapes = load_shapes(&clouds_for(dir, p.ids())?, metric, s.resolution)?;
            compute_matrix(&shapes, metric, s.cache.as_deref(), threads)
        }
        _ => Err(usage("silhouette needs --matrix, or --shapes with --metric")),
    }
}

fn silhouette_cmd(a: SilhouetteArgs, threads: Option<usize>) -> Result<()> {
    let p = Partition::read(&a.partition)?;
    let d = matrix_for(&p, &a, threads)?;
    let s = silhouette(&p, &d)?;
    if let Some(path) = &a.per_object {
        let text: String = s.per_object.iter().map(|(id, v)| format!("{id}\t{}\n", format_g(*v, 12))).collect();
        emit(Some(path), &text)?;
    }
    let row = ScoreRow {
        method: a.method.unwrap_or_else(|| member_name(&a.partition)),
        k: a.k.unwrap_or(p.k()),
        index: format!("silhouette_{}", d.metric()),
        value: s.mean,
    };
    print!("{}", row.to_tsv_line());
    Ok(())
}

fn distances(a: DistancesArgs, threads: Option<usize>) -> Result<()> {
    let shapes = load_shapes(&list_clouds(&a.shapes)?, a.metric, a.resolution)?;
    let d = compute_matrix(&shapes, a.metric, a.cache.as_deref(), threads)?;
    d.write(&a.out)?;
    Ok(())
}

fn label_str(l: EdgeLabel) -> &'static str {
    match l {
        EdgeLabel::Positive => "+1",
        EdgeLabel::Negative => "-1",
        EdgeLabel::Unknown => "0",
    }
}

fn method_summary(ens: &MethodEnsemble) -> Result<String> {
    let n = ens.ids().len();
    let total = (n as u64) * (n as u64).saturating_sub(1) / 2;
    let mut out = String::new();
    writeln!(out, "members\t{}", ens.len())?;
    writeln!(out, "models\t{n}")?;
    writeln!(out, "threshold\t{}", ens.threshold())?;
    let positive: u64 = (0..n).map(|i| (i + 1..n).filter(|&j| ens.similar_at(i, j)).count() as u64).sum();
    writeln!(out, "positive_pairs\t{positive}")?;
    writeln!(out, "total_pairs\t{total}")?;
    Ok(out)
}

fn human_summary(h: &HumanEnsemble) -> Result<String> {
    let mut out = String::new();
    writeln!(out, "annotators\t{}", h.sets().len())?;
    let support = h.support();
    let (mut pos, mut neg, mut tie) = (0u64, 0u64, 0u64);
    for e in &support {
        match h.label(e) {
            EdgeLabel::Positive => pos += 1,
            EdgeLabel::Negative => neg += 1,
            EdgeLabel::Unknown => tie += 1,
        }
    }
    writeln!(out, "labeled_edges\t{}", support.len())?;
    writeln!(out, "positive\t{pos}")?;
    writeln!(out, "negative\t{neg}")?;
    writeln!(out, "tied\t{tie}")?;
    let sets = h.sets();
    for (i, x) in sets.iter().enumerate() {
        for y in &sets[i + 1..] {
            let v = consistency(x, y).map_or("-".to_string(), |v| format!("{v:.6}"));
            writeln!(out, "consistency\t{}\t{}\t{v}", x.owner(), y.owner())?;
        }
    }
    Ok(out)
}

fn ensemble(a: EnsembleArgs) -> Result<()> {
    let edge = match &a.edge {
        Some(v) => {
            let (x, y) = (ModelId::new(v[0].as_str())?, ModelId::new(v[1].as_str())?);
            Some(canonical_edge(&x, &y).map_err(|e| usage(e.to_string()))?)
        }
        None => None,
    };
    if a.human {
        let sets = read_manifest(&a.manifest)?.iter().map(|p| LabeledEdgeSet::read(p)).collect::<Result<Vec<_>, _>>()?;
        let h = HumanEnsemble::new(sets)?;
        match edge {
            Some(e) => {
                let (p, n) = h.votes(&e);
                println!("{}\t{}\t{}\t+{p}/-{n}", e.a(), e.b(), label_str(h.label(&e)));
            }
            None => print!("{}", human_summary(&h)?),
        }
    } else {
        let ens = load_method_ensemble(&a.manifest)?;
        match edge {
            Some(e) => {
                let label = ens.label(&e)?;
                let i = ens.position(e.a()).unwrap_or_default();
                let j = ens.position(e.b()).unwrap_or_default();
                println!("{}\t{}\t{}\t{}/{}", e.a(), e.b(), label_str(label), ens.positive_votes_at(i, j), ens.len());
            }
            None => print!("{}", method_summary(&ens)?),
        }
    }
    Ok(())
}

fn report(a: ReportArgs) -> Result<()> {
    let mut rows = Vec::new();
    for path in &a.scores {
        rows.extend(read_score_rows(path)?);
    }
    let grouped = group_scores(&rows)?;
    if grouped.is_empty() {
        bail!("no score rows in the given files");
    }
    let mut text = String::new();
    for (i, (index, by_method)) in grouped.iter().enumerate() {
        if i > 0 {
            text.push('\n');
        }
        let r = ranking_report(by_method).with_context(|| format!("ranking {index}"))?;
        text.push_str(&render_ranking(index, &r));
    }
    emit(a.out.as_deref(), &text)
}

fn consistency_cmd(a: ConsistencyArgs) -> Result<()> {
    let x = LabeledEdgeSet::read(&a.a)?;
    let y = LabeledEdgeSet::read(&a.b)?;
    match consistency(&x, &y) {
        Some(v) => {
            println!("{v:.6}");
            Ok(())
        }
        None => bail!("{} and {} share no labeled edges", a.a.display(), a.b.display()),
    }
}

fn stats(a: StatsArgs) -> Result<()> {
    let x = LabeledEdgeSet::read(&a.edges)?;
    let models = match (&a.partition, a.models) {
        (Some(p), None) => Partition::read(p)?.len() as u64,
        (None, Some(n)) => n,
        _ => return Err(usage("stats needs --partition or --models")),
    };
    let s = label_stats(&x, models * models.saturating_sub(1) / 2)?;
    let total = (s.positive + s.negative + s.unknown).max(1) as f64;
    for (name, v) in [("positive", s.positive), ("negative", s.negative), ("unknown", s.unknown)] {
        println!("{name}\t{v}\t{:.6}", v as f64 / total);
    }
    println!("positive_fraction_of_labeled\t{:.6}", s.positive_fraction());
    Ok(())
}
