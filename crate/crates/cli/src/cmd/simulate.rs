use std::io::Write;

use apr_core::dataio::{simulate_sequence, write_dataset, DatasetMetadata, LidarConfig, TwoLaneScenario};

use super::report;
use crate::args::SimulateArgs;
use crate::output::{check_output, StagedDir};
use crate::CliError;

pub fn run<W: Write>(a: &SimulateArgs, out: &mut W) -> Result<(), CliError> {
    check_output(&a.out, a.force)?;
    if a.frames < 2 {
        return Err(CliError::Usage("--frames must be at least 2".into()));
    }
    if !(a.step > 0.0 && a.step.is_finite()) {
        return Err(CliError::Usage("--step must be positive".into()));
    }
    let lidar = LidarConfig {
        max_range: a.max_range,
        range_noise_sigma: a.range_noise,
        ..LidarConfig::with_rings(a.azimuth_steps, a.rings, a.elevation_min, a.elevation_max)
    };
    // the half step keeps the frame count exact under rounding
    let scenario = TwoLaneScenario {
        seed: a.seed,
        extent: (a.frames - 1) as f64 * a.step + a.step / 2.0,
        obstacles: a.obstacles,
        lane_offset: a.lane_offset,
        step: a.step,
        clearance: a.clearance,
        lidar: lidar.clone(),
    };
    let world = scenario.world()?;
    let trajectory = scenario.trajectory(a.lane as usize);
    debug_assert_eq!(trajectory.len(), a.frames);
    let seq = simulate_sequence(&world, &trajectory, &lidar)?;
    let meta = DatasetMetadata {
        seed: a.seed,
        frames: seq.len(),
        lidar,
        world,
        trajectory: trajectory.iter().map(|t| t.to_row_major_3x4()).collect(),
    };
    let staged = StagedDir::new(&a.out)?;
    write_dataset(staged.path(), &seq, &meta)?;
    staged.commit()?;
    let points: usize = seq.frames().iter().map(|f| f.cloud.len()).sum();
    report(out, format_args!("wrote {} frames ({points} points) to {}", seq.len(), a.out.display()))
}
