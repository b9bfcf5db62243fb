use std::path::PathBuf;

use apr_core::apg::ApgConfig;
use apr_core::dataio::TwoLaneScenario;
use apr_core::geom::DEFAULT_OVERLAP_TAU;
use apr_core::loss::LossConfig;
use apr_core::model::{DecoderDims, EncoderDims};
use apr_core::pipeline::{InputConfig, TrainConfig};
use apr_core::reg::RansacConfig;
use clap::{Args, Parser, Subcommand, ValueEnum};

/// Aggregated point cloud reconstruction for distant LiDAR registration.
#[derive(Debug, Parser)]
#[command(name = "apr", version)]
pub struct Cli {
    /// Flat `key = value` file; keys are long flag names. Flags given on the
    /// command line win over the file.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate one vehicle's drive through a seeded two-lane world.
    #[command(args_override_self = true)]
    Simulate(SimulateArgs),
    /// Write the registration pairs of a dataset that meet a distance bin and overlap ceiling.
    #[command(args_override_self = true)]
    Distill(DistillArgs),
    /// Train an encoder on a pair list.
    #[command(args_override_self = true)]
    Train(TrainArgs),
    /// Register a pair list and report recall and errors.
    #[command(args_override_self = true)]
    Evaluate(EvaluateArgs),
    /// Time the online stages: encoder, matching, RANSAC.
    #[command(args_override_self = true)]
    Benchmark(BenchmarkArgs),
}

/// One sequence, or two for cross-vehicle pairs.
#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    /// Dataset directory (`poses.txt` plus `frames/` or `velodyne/`).
    #[arg(long, value_name = "DIR")]
    pub data: PathBuf,
    /// Second vehicle's dataset; pairs then join frame `i` of `--data` to frame `j` of this one.
    #[arg(long, value_name = "DIR")]
    pub data_b: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct InputArgs {
    /// Voxel size applied to every encoder input, meters.
    #[arg(long, default_value_t = InputConfig::default().voxel_size)]
    pub voxel: f64,
    /// Input points beyond this range are dropped, meters.
    #[arg(long, default_value_t = InputConfig::default().range)]
    pub range: f64,
    /// Seeded subsample of each input after voxelization.
    #[arg(long)]
    pub max_points: Option<usize>,
}

impl InputArgs {
    pub fn config(&self) -> InputConfig {
        InputConfig {
            voxel_size: self.voxel,
            range: self.range,
            max_points: self.max_points,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    #[arg(long)]
    pub force: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 100)]
    pub frames: usize,
    /// 0 drives at y = −offset, 1 at y = +offset.
    #[arg(long, default_value_t = 0, value_parser = clap::value_parser!(u8).range(0..=1))]
    pub lane: u8,
    /// Distance between consecutive frames, meters.
    #[arg(long, default_value_t = TwoLaneScenario::default().step)]
    pub step: f64,
    #[arg(long, default_value_t = TwoLaneScenario::default().lane_offset)]
    pub lane_offset: f64,
    #[arg(long, default_value_t = TwoLaneScenario::default().obstacles)]
    pub obstacles: usize,
    #[arg(long, default_value_t = TwoLaneScenario::default().clearance)]
    pub clearance: f64,
    #[arg(long, default_value_t = 1024)]
    pub azimuth_steps: usize,
    #[arg(long, default_value_t = 32)]
    pub rings: usize,
    /// Lowest ring elevation, degrees.
    #[arg(long, default_value_t = -2.0, allow_negative_numbers = true)]
    pub elevation_min: f64,
    #[arg(long, default_value_t = 18.0, allow_negative_numbers = true)]
    pub elevation_max: f64,
    #[arg(long, default_value_t = 80.0)]
    pub max_range: f64,
    #[arg(long, default_value_t = 0.01)]
    pub range_noise: f64,
}

#[derive(Debug, Clone, Args)]
pub struct DistillArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Pair list to write (CSV: i,j,distance,overlap).
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
    #[arg(long)]
    pub force: bool,
    #[arg(long, default_value_t = 5.0)]
    pub d1: f64,
    /// Upper edge of the distance bin; `inf` for none.
    #[arg(long, default_value_t = 20.0)]
    pub d2: f64,
    #[arg(long, default_value_t = 0.3)]
    pub max_overlap: f64,
    /// Radius for counting a point as overlapping, meters.
    #[arg(long, default_value_t = DEFAULT_OVERLAP_TAU)]
    pub tau: f64,
    /// Exit with status 4 when no pair qualifies.
    #[arg(long)]
    pub require_nonempty: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DecoderKind {
    Asymmetric,
    Symmetric,
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Pair list from `distill`.
    #[arg(long, value_name = "FILE")]
    pub pairs: PathBuf,
    /// Output directory: `model.ckpt`, training logs, resolved `train.conf`.
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    #[arg(long)]
    pub force: bool,
    /// Pre-train on pairs in [5, 20] m, then fine-tune on [5, --d2] when --d2 ≥ 30.
    #[arg(long)]
    pub curriculum: bool,
    /// Far edge of the curriculum; defaults to the farthest listed pair.
    #[arg(long, requires = "curriculum")]
    pub d2: Option<f64>,
    #[arg(long, default_value_t = TrainConfig::default().seed)]
    pub seed: u64,
    #[arg(long, default_value_t = TrainConfig::default().epochs)]
    pub epochs: usize,
    #[arg(long, default_value_t = TrainConfig::default().learning_rate)]
    pub lr: f64,
    #[arg(long, default_value_t = TrainConfig::default().momentum)]
    pub momentum: f64,
    #[arg(long, default_value_t = TrainConfig::default().lr_decay)]
    pub lr_decay: f64,
    /// Cap on training pairs, subsampled with the seed.
    #[arg(long)]
    pub max_pairs: Option<usize>,
    #[arg(long, default_value_t = LossConfig::default().lambda1)]
    pub lambda1: f64,
    #[arg(long, default_value_t = LossConfig::default().lambda2)]
    pub lambda2: f64,
    #[arg(long, default_value_t = LossConfig::default().m_p)]
    pub margin_pos: f64,
    #[arg(long, default_value_t = LossConfig::default().m_n)]
    pub margin_neg: f64,
    /// Non-key frames per temporal side of the aggregate.
    #[arg(long, default_value_t = ApgConfig::default().psi)]
    pub psi: usize,
    /// Spacing of aggregated frames, meters.
    #[arg(long, default_value_t = ApgConfig::default().alpha)]
    pub alpha: f64,
    #[arg(long, default_value_t = ApgConfig::default().scope_radius)]
    pub scope: f64,
    #[arg(long, default_value_t = ApgConfig::default().voxel_size)]
    pub apc_voxel: f64,
    #[arg(long)]
    pub include_key_frame: bool,
    /// Aggregated frames re-posed randomly per training step.
    #[arg(long, default_value_t = 0)]
    pub n_disturb: usize,
    /// Offsets decoded per point.
    #[arg(long, default_value_t = DecoderDims::default().phi)]
    pub phi: usize,
    #[arg(long, value_enum, default_value_t = DecoderKind::Asymmetric)]
    pub decoder: DecoderKind,
    /// Neighbors per point in the encoder.
    #[arg(long, default_value_t = EncoderDims::default().k)]
    pub k: usize,
    /// Feature width.
    #[arg(long, default_value_t = EncoderDims::default().l)]
    pub l: usize,
    /// Radius for ground-truth correspondences, meters.
    #[arg(long, default_value_t = TrainConfig::default().gt_radius)]
    pub gt_radius: f64,
    #[command(flatten)]
    pub input: InputArgs,
}

#[derive(Debug, Clone, Args)]
pub struct RansacArgs {
    #[arg(long, default_value_t = RansacConfig::default().iterations)]
    pub iterations: usize,
    #[arg(long, default_value_t = RansacConfig::default().inlier_threshold)]
    pub inlier_threshold: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

impl RansacArgs {
    pub fn config(&self) -> RansacConfig {
        RansacConfig {
            iterations: self.iterations,
            inlier_threshold: self.inlier_threshold,
            seed: self.seed,
            ..RansacConfig::default()
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, value_name = "FILE")]
    pub pairs: PathBuf,
    #[arg(long, value_name = "FILE", required_unless_present = "oracle_gt")]
    pub checkpoint: Option<PathBuf>,
    /// Score the ground-truth transforms instead of registering.
    #[arg(long, conflicts_with = "checkpoint")]
    pub oracle_gt: bool,
    /// Output directory: `records.csv`, `summary.csv`, and the protocol tables.
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    #[arg(long)]
    pub force: bool,
    /// Distance bins such as `5-10,10-20,20-inf`.
    #[arg(long)]
    pub bins: Option<String>,
    /// Ratios of the second cloud's points kept, such as `0.1,0.5,1`.
    #[arg(long)]
    pub density_ratios: Option<String>,
    /// Criterion for the bin and density tables.
    #[arg(long, default_value = "normal", value_parser = ["loose", "normal", "strict"])]
    pub criterion: String,
    #[command(flatten)]
    pub ransac: RansacArgs,
    #[command(flatten)]
    pub input: InputArgs,
}

#[derive(Debug, Clone, Args)]
pub struct BenchmarkArgs {
    #[arg(long, value_name = "FILE")]
    pub checkpoint: PathBuf,
    /// Time a real pair from this dataset instead of a simulated one.
    #[arg(long, value_name = "DIR")]
    pub data: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub i: usize,
    #[arg(long, default_value_t = 1)]
    pub j: usize,
    /// Points per cloud.
    #[arg(long, default_value_t = 4096)]
    pub points: usize,
    /// Repetitions per stage; the median is reported.
    #[arg(long, default_value_t = 10, value_parser = clap::value_parser!(u32).range(10..))]
    pub runs: u32,
    /// Also time the encoder at 1k, 4k and 16k points.
    #[arg(long)]
    pub scaling: bool,
    /// CSV report; printed to stdout either way.
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub force: bool,
    #[command(flatten)]
    pub ransac: RansacArgs,
}
