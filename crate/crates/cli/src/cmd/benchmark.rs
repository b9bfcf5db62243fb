use std::io::Write;
use std::time::Instant;

use apr_core::dataio::{load_dataset, simulate_scan, LidarConfig, TwoLaneScenario};
use apr_core::geom::PointCloud;
use apr_core::model::{encoder_forward, load_checkpoint};
use apr_core::pipeline::{prepare_input, subsample, InputConfig};
use apr_core::reg::{match_features, ransac_register};

use super::report;
use crate::args::BenchmarkArgs;
use crate::output::{check_input, check_output, write_file};
use crate::CliError;

pub const SCALING_SIZES: [usize; 3] = [1_000, 4_000, 16_000];

/// Median wall time of `runs` calls, milliseconds.
fn median_ms<T>(runs: u32, mut f: impl FnMut() -> Result<T, CliError>) -> Result<f64, CliError> {
    let mut times = Vec::with_capacity(runs as usize);
    for _ in 0..runs {
        let start = Instant::now();
        std::hint::black_box(f()?);
        times.push(start.elapsed().as_secs_f64() * 1e3);
    }
    times.sort_by(f64::total_cmp);
    let n = times.len();
    Ok(if n % 2 == 1 { times[n / 2] } else { 0.5 * (times[n / 2 - 1] + times[n / 2]) })
}

/// Least-squares slope of log time against log size.
pub fn scaling_exponent(rows: &[(usize, f64)]) -> f64 {
    let pts: Vec<(f64, f64)> = rows.iter().map(|&(n, t)| ((n as f64).ln(), t.ln())).collect();
    let k = pts.len() as f64;
    let (mx, my) = (pts.iter().map(|p| p.0).sum::<f64>() / k, pts.iter().map(|p| p.1).sum::<f64>() / k);
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

/// Two raw scans one meter apart in the default two-lane world, from a
/// dense sensor so the largest scaling size fits.
fn simulated_pair() -> Result<(PointCloud, PointCloud), CliError> {
    let scenario = TwoLaneScenario::default();
    let world = scenario.world()?;
    let path = scenario.trajectory(0);
    let lidar = LidarConfig::with_rings(2048, 64, -15.0, 15.0);
    let mid = path.len() / 2;
    Ok((simulate_scan(&world, &path[mid], &lidar), simulate_scan(&world, &path[mid + 1], &lidar)))
}

pub fn run<W: Write>(a: &BenchmarkArgs, out: &mut W) -> Result<(), CliError> {
    check_input(&a.checkpoint)?;
    if let Some(d) = &a.data {
        check_input(d)?;
    }
    if let Some(o) = &a.out {
        check_output(o, a.force)?;
    }
    let ransac = a.ransac.config();
    ransac.validate()?;
    let encoder = load_checkpoint(&a.checkpoint)?.encoder;

    let (raw_a, raw_b) = match &a.data {
        Some(dir) => {
            let seq = load_dataset(dir)?.0;
            let frame = |i: usize| {
                seq.frame(i)
                    .map(|f| f.cloud.clone())
                    .ok_or_else(|| CliError::Usage(format!("frame {i} not in a {}-frame dataset", seq.len())))
            };
            let input = InputConfig::default();
            (prepare_input(&frame(a.i)?, &input, ransac.seed), prepare_input(&frame(a.j)?, &input, ransac.seed))
        }
        None => simulated_pair()?,
    };
    let cloud_a = subsample(&raw_a, a.points, ransac.seed);
    let cloud_b = subsample(&raw_b, a.points, ransac.seed ^ 1);

    let fa = encoder_forward(&cloud_a, &encoder)?;
    let fb = encoder_forward(&cloud_b, &encoder)?;
    let corr = match_features(&fa, &fb)?;
    let mut rows = vec![
        ("encoder", cloud_a.len(), median_ms(a.runs, || Ok(encoder_forward(&cloud_a, &encoder)?))?),
        ("matching", cloud_a.len(), median_ms(a.runs, || Ok(match_features(&fa, &fb)?))?),
        ("ransac", corr.len(), median_ms(a.runs, || Ok(ransac_register(&corr, &cloud_a, &cloud_b, &ransac)?))?),
    ];
    if a.scaling {
        for n in SCALING_SIZES {
            if raw_a.len() < n {
                return Err(CliError::Usage(format!("scaling needs {n} points, the input has {}", raw_a.len())));
            }
            let c = subsample(&raw_a, n, ransac.seed);
            rows.push(("encoder_scaling", n, median_ms(a.runs, || Ok(encoder_forward(&c, &encoder)?))?));
        }
    }

    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["stage", "points", "runs", "median_ms"]).map_err(|e| CliError::Failed(e.to_string()))?;
    for (stage, n, ms) in &rows {
        w.write_record([stage.to_string(), n.to_string(), a.runs.to_string(), format!("{ms:.6}")])
            .map_err(|e| CliError::Failed(e.to_string()))?;
    }
    let table = w.into_inner().map_err(|e| CliError::Failed(e.to_string()))?;
    out.write_all(&table).map_err(|e| CliError::Io(format!("stdout: {e}")))?;
    if a.scaling {
        let sizes: Vec<(usize, f64)> = rows.iter().filter(|r| r.0 == "encoder_scaling").map(|r| (r.1, r.2)).collect();
        report(out, format_args!("# encoder scaling exponent {:.3}", scaling_exponent(&sizes)))?;
    }
    if let Some(path) = &a.out {
        write_file(path, &table)?;
    }
    Ok(())
}
