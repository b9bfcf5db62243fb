use std::io::Write;

use apr_core::dataio::{check_pairs, PairSpec};
use apr_core::model::{load_checkpoint, EncoderParams};
use apr_core::pipeline::{downsample_pairs, evaluate_pairs, prepare_pairs, recall_of, PreparedPair};
use apr_core::reg::{evaluate, summarize, write_records, write_summary, Criterion, PairRecord, RansacConfig};

use super::{load_pairs, report, Data};
use crate::args::EvaluateArgs;
use crate::output::{check_input, check_output, StagedDir};
use crate::CliError;

/// `5-10,10-20,20-inf` into disjoint bins.
pub fn parse_bins(text: &str) -> Result<Vec<PairSpec>, CliError> {
    let bad = |s: &str| CliError::Usage(format!("--bins: cannot read {s:?} as lo-hi"));
    let bins = text
        .split(',')
        .map(|s| {
            let (lo, hi) = s.trim().split_once('-').ok_or_else(|| bad(s))?;
            let lo: f64 = lo.trim().parse().map_err(|_| bad(s))?;
            let hi: f64 = hi.trim().parse().map_err(|_| bad(s))?;
            Ok(PairSpec::new(lo, hi, 1.0)?)
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let mut sorted = bins.clone();
    sorted.sort_by(|x, y| x.d1.total_cmp(&y.d1));
    if sorted.windows(2).any(|w| w[1].d1 < w[0].d2) {
        return Err(CliError::Usage("--bins must not overlap".into()));
    }
    Ok(bins)
}

pub fn parse_ratios(text: &str) -> Result<Vec<f64>, CliError> {
    text.split(',')
        .map(|s| match s.trim().parse::<f64>() {
            Ok(r) if r > 0.0 && r <= 1.0 => Ok(r),
            _ => Err(CliError::Usage(format!("--density-ratios: {s:?} is not in (0, 1]"))),
        })
        .collect()
}

enum Estimator {
    Oracle,
    Encoder(Box<EncoderParams>),
}

impl Estimator {
    fn score(&self, pairs: &[PreparedPair], ransac: &RansacConfig) -> Result<Vec<PairRecord>, CliError> {
        Ok(match self {
            Estimator::Oracle => pairs
                .iter()
                .map(|p| PairRecord::new(p.i, p.j, p.distance, p.overlap, &evaluate(&p.gt, &p.gt, 0)))
                .collect(),
            Estimator::Encoder(enc) => evaluate_pairs(enc, pairs, ransac)?,
        })
    }
}

fn csv_bytes<T: serde::Serialize>(rows: &[T]) -> Result<Vec<u8>, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| CliError::Failed(e.to_string()))?;
    }
    w.into_inner().map_err(|e| CliError::Failed(e.to_string()))
}

#[derive(serde::Serialize)]
struct BinRow {
    d1: f64,
    d2: f64,
    pairs: usize,
    /// Empty when the bin holds no pair.
    recall: Option<f64>,
}

#[derive(serde::Serialize)]
struct DensityRow {
    ratio: f64,
    pairs: usize,
    recall: f64,
}

pub fn run<W: Write>(a: &EvaluateArgs, out: &mut W) -> Result<(), CliError> {
    Data::check(&a.data)?;
    check_input(&a.pairs)?;
    if let Some(c) = &a.checkpoint {
        check_input(c)?;
    }
    check_output(&a.out, a.force)?;
    let bins = a.bins.as_deref().map(parse_bins).transpose()?;
    let ratios = a.density_ratios.as_deref().map(parse_ratios).transpose()?;
    let criterion = Criterion::by_name(&a.criterion).expect("clap restricts the names");
    let ransac = a.ransac.config();
    ransac.validate()?;
    let input = a.input.config();
    input.validate()?;

    let estimator = match &a.checkpoint {
        Some(path) => Estimator::Encoder(Box::new(load_checkpoint(path)?.encoder)),
        None => Estimator::Oracle,
    };
    let data = Data::load(&a.data)?;
    let pairs = load_pairs(&a.pairs)?;
    check_pairs(data.source(), &pairs)?;
    if pairs.is_empty() {
        return Err(CliError::Empty(format!("{} lists no pairs", a.pairs.display())));
    }
    let prepared = prepare_pairs(data.source(), &pairs, &input, a.ransac.seed);
    let records = estimator.score(&prepared, &ransac)?;
    let summary = summarize(&records)?;

    let staged = StagedDir::new(&a.out)?;
    let mut buf = Vec::new();
    write_records(&mut buf, &records)?;
    staged.write("records.csv", &buf)?;
    let mut buf = Vec::new();
    write_summary(&mut buf, &summary)?;
    staged.write("summary.csv", &buf)?;

    report(out, format_args!("{} pairs", records.len()))?;
    report(
        out,
        format_args!("{:<8} {:>10} {:>8} {:>10} {:>10} {:>10} {:>10}", "criterion", "(RRE,RTE)", "recall", "RRE ok", "RTE ok", "RRE all", "RTE all"),
    )?;
    for row in &summary {
        report(
            out,
            format_args!(
                "{:<9} {:>10} {:>8.3} {:>10.3} {:>10.3} {:>10.3} {:>10.3}",
                row.criterion,
                format!("({},{})", row.max_rre, row.max_rte),
                row.recall,
                row.mean_rre_success,
                row.mean_rte_success,
                row.mean_rre_all,
                row.mean_rte_all
            ),
        )?;
    }

    if let Some(bins) = bins {
        let rows: Vec<BinRow> = bins
            .iter()
            .map(|b| {
                let inside: Vec<PairRecord> = records.iter().filter(|r| b.contains_distance(r.distance)).cloned().collect();
                BinRow {
                    d1: b.d1,
                    d2: b.d2,
                    pairs: inside.len(),
                    recall: recall_of(&inside, &criterion).ok(),
                }
            })
            .collect();
        staged.write("bins.csv", &csv_bytes(&rows)?)?;
        for r in &rows {
            let rr = r.recall.map_or("-".to_string(), |x| format!("{x:.3}"));
            report(out, format_args!("bin [{}, {}]: {} pairs, {} recall {rr}", r.d1, r.d2, r.pairs, criterion.name))?;
        }
    }
    if let Some(ratios) = ratios {
        let mut rows = Vec::new();
        for &ratio in &ratios {
            let thinned = downsample_pairs(&prepared, ratio, a.ransac.seed)?;
            let recs = estimator.score(&thinned, &ransac)?;
            rows.push(DensityRow {
                ratio,
                pairs: recs.len(),
                recall: recall_of(&recs, &criterion)?,
            });
        }
        staged.write("density.csv", &csv_bytes(&rows)?)?;
        for r in &rows {
            report(out, format_args!("density {}: {} recall {:.3}", r.ratio, criterion.name, r.recall))?;
        }
    }
    staged.commit()?;
    report(out, format_args!("wrote {}", a.out.display()))
}
