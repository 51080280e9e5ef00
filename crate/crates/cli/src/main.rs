//! `cadsim`: sampling, cluster initialization, evaluation, reporting and the
//! annotation service, from the command line.
//!
//! Exit status is 0 on success, 1 on a usage error and 2 on a data error.

mod commands;
mod grid;
mod shapes;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::grid::KGrid;

#[derive(Parser, Debug)]
#[command(name = "cadsim", version, about = "Similarity-graph evaluation for 3D shape collections")]
pub struct Cli {
    /// Worker threads for parallel stages (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Sample a point cloud from an OBJ mesh surface.
    Sample(SampleArgs),
    /// Capacity-bounded initial clusters from a feature matrix.
    Init(InitArgs),
    /// KMeans partitions of a feature matrix for every K in a grid.
    Sweep(SweepArgs),
    /// Run the annotation service.
    Serve(ServeArgs),
    /// Talk to a running annotation service.
    Annotate(AnnotateArgs),
    /// Score a partition against human and/or ensemble references.
    Evaluate(EvaluateArgs),
    /// Silhouette of a partition under a shape distance.
    Silhouette(SilhouetteArgs),
    /// Pairwise distance matrix of a directory of shapes.
    Distances(DistancesArgs),
    /// Summarize or query a method or human ensemble.
    Ensemble(EnsembleArgs),
    /// Rank methods from score files.
    Report(ReportArgs),
    /// Agreement between two edge files.
    Consistency(ConsistencyArgs),
    /// Label counts of an edge file.
    Stats(StatsArgs),
}

#[derive(Args, Debug)]
pub struct SampleArgs {
    #[arg(long)]
    pub mesh: PathBuf,
    #[arg(long, default_value_t = cadsim_core::geometry::DEFAULT_SAMPLE_COUNT)]
    pub n: usize,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// Min-max normalize the sampled cloud to the unit cube.
    #[arg(long)]
    pub normalize: bool,
    /// Skip non-triangle faces and unknown records instead of failing.
    #[arg(long)]
    pub lenient: bool,
}

#[derive(Args, Debug)]
pub struct InitArgs {
    #[arg(long)]
    pub features: PathBuf,
    #[arg(long, default_value_t = 2000)]
    pub k: usize,
    #[arg(long, default_value_t = cadsim_core::clusterinit::DEFAULT_CAPACITY)]
    pub capacity: usize,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    #[arg(long)]
    pub features: PathBuf,
    /// Comma-separated, strictly increasing cluster counts.
    #[arg(long, default_value_t = KGrid::default())]
    pub k_grid: KGrid,
    #[arg(long)]
    pub seed: u64,
    /// Method name used in output file names (default: features file stem).
    #[arg(long)]
    pub method: Option<String>,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Args, Debug)]
pub struct ServeArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Override the bind address from the config file.
    #[arg(long)]
    pub bind: Option<String>,
}

#[derive(Args, Debug)]
pub struct AnnotateArgs {
    #[arg(long, default_value = "http://127.0.0.1:8080")]
    pub url: String,
    #[arg(long)]
    pub token: String,
    #[command(subcommand)]
    pub action: AnnotateAction,
}

#[derive(Subcommand, Debug)]
pub enum AnnotateAction {
    /// Print the next cluster to annotate.
    Next,
    /// Submit one round: the models checked as similar.
    Submit {
        #[arg(long)]
        cluster: u32,
        /// Comma-separated model ids; empty for "none similar".
        #[arg(long, default_value = "", value_delimiter = ',')]
        checked: Vec<String>,
        /// Round index, so a retried submission is applied once.
        #[arg(long)]
        round: Option<usize>,
    },
    /// Download this annotator's edge file.
    Export {
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print per-annotator progress and pairwise consistency.
    Progress,
}

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub partition: PathBuf,
    /// Human edge file; repeat for several annotators.
    #[arg(long)]
    pub human: Vec<PathBuf>,
    /// Manifest listing human edge files.
    #[arg(long)]
    pub human_manifest: Option<PathBuf>,
    /// Manifest listing the method partitions of the ensemble.
    #[arg(long)]
    pub ensemble: Option<PathBuf>,
    /// Leave the evaluated method out of the ensemble.
    #[arg(long)]
    pub loo: bool,
    /// Method name (default: partition file stem).
    #[arg(long)]
    pub method: Option<String>,
    /// K reported in the score rows (default: cluster count of the partition).
    #[arg(long)]
    pub k: Option<u32>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ShapeSource {
    /// Precomputed distance matrix.
    #[arg(long, conflicts_with_all = ["shapes", "metric"])]
    pub matrix: Option<PathBuf>,
    /// Directory of `<model id>.xyz` point clouds.
    #[arg(long, requires = "metric")]
    pub shapes: Option<PathBuf>,
    #[arg(long)]
    pub metric: Option<cadsim_core::distances::Metric>,
    #[arg(long, default_value_t = cadsim_core::geometry::DEFAULT_VOXEL_RESOLUTION)]
    pub resolution: u32,
    /// Directory for the resumable matrix cache.
    #[arg(long)]
    pub cache: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SilhouetteArgs {
    #[arg(long)]
    pub partition: PathBuf,
    #[command(flatten)]
    pub source: ShapeSource,
    #[arg(long)]
    pub method: Option<String>,
    #[arg(long)]
    pub k: Option<u32>,
    /// Also write `model<TAB>s` per object.
    #[arg(long)]
    pub per_object: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct DistancesArgs {
    #[arg(long)]
    pub shapes: PathBuf,
    #[arg(long)]
    pub metric: cadsim_core::distances::Metric,
    #[arg(long, default_value_t = cadsim_core::geometry::DEFAULT_VOXEL_RESOLUTION)]
    pub resolution: u32,
    #[arg(long)]
    pub cache: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct EnsembleArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Treat the manifest as a list of human edge files.
    #[arg(long)]
    pub human: bool,
    /// Print the ensemble label of one pair instead of the summary.
    #[arg(long, num_args = 2, value_names = ["A", "B"])]
    pub edge: Option<Vec<String>>,
}

#[derive(Args, Debug)]
pub struct ReportArgs {
    /// Score files (`method<TAB>K<TAB>index<TAB>value`).
    #[arg(required = true)]
    pub scores: Vec<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ConsistencyArgs {
    pub a: PathBuf,
    pub b: PathBuf,
}

#[derive(Args, Debug)]
pub struct StatsArgs {
    pub edges: PathBuf,
    /// Partition whose model set defines the edge universe.
    #[arg(long, conflicts_with = "models")]
    pub partition: Option<PathBuf>,
    /// Number of models in the collection.
    #[arg(long)]
    pub models: Option<u64>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(if e.is::<commands::UsageError>() { 1 } else { 2 })
        }
    }
}
