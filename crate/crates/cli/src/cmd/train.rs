use std::io::Write;

use apr_core::apg::ApgConfig;
use apr_core::dataio::{check_pairs, PairSpec};
use apr_core::loss::LossConfig;
use apr_core::model::{encode_checkpoint, init_params, DecoderDims, DecoderVariant, EncoderDims, ModelDims};
use apr_core::pipeline::{train_curriculum_on_pairs, train_on_pairs, CurriculumSpec, TrainConfig, TrainLog};

use super::{load_pairs, report, Data};
use crate::args::{DecoderKind, TrainArgs};
use crate::output::{check_input, check_output, StagedDir};
use crate::CliError;

pub const CHECKPOINT_FILE: &str = "model.ckpt";
pub const CONFIG_FILE: &str = "train.conf";

pub fn config_of(a: &TrainArgs) -> TrainConfig {
    TrainConfig {
        epochs: a.epochs,
        learning_rate: a.lr,
        momentum: a.momentum,
        lr_decay: a.lr_decay,
        seed: a.seed,
        // the pair list decides the pairs; this only carries the defaults
        pairs: PairSpec {
            d1: 0.0,
            d2: f64::INFINITY,
            overlap_max: 1.0,
        },
        max_pairs: a.max_pairs,
        apg: ApgConfig {
            psi: a.psi,
            alpha: a.alpha,
            scope_radius: a.scope,
            voxel_size: a.apc_voxel,
            include_key_frame: a.include_key_frame,
        },
        n_disturb: a.n_disturb,
        loss: LossConfig {
            lambda1: a.lambda1,
            lambda2: a.lambda2,
            m_p: a.margin_pos,
            m_n: a.margin_neg,
            ..LossConfig::default()
        },
        dims: ModelDims {
            encoder: EncoderDims {
                k: a.k,
                l: a.l,
                ..EncoderDims::default()
            },
            decoder: DecoderDims {
                variant: match a.decoder {
                    DecoderKind::Asymmetric => DecoderVariant::Asymmetric,
                    DecoderKind::Symmetric => DecoderVariant::Symmetric,
                },
                phi: a.phi,
                ..DecoderDims::default()
            },
        },
        input: a.input.config(),
        gt_radius: a.gt_radius,
        ..TrainConfig::default()
    }
}

/// Every setting of the run as a config file that reproduces it.
fn resolved(a: &TrainArgs) -> String {
    let opt = |v: Option<usize>| v.map(|x| x.to_string());
    let mut rows: Vec<(&str, Option<String>)> = vec![
        ("data", Some(a.data.data.display().to_string())),
        ("data-b", a.data.data_b.as_ref().map(|p| p.display().to_string())),
        ("pairs", Some(a.pairs.display().to_string())),
        ("curriculum", Some(a.curriculum.to_string())),
        ("d2", a.d2.map(|x| x.to_string())),
        ("seed", Some(a.seed.to_string())),
        ("epochs", Some(a.epochs.to_string())),
        ("lr", Some(a.lr.to_string())),
        ("momentum", Some(a.momentum.to_string())),
        ("lr-decay", Some(a.lr_decay.to_string())),
        ("max-pairs", opt(a.max_pairs)),
        ("lambda1", Some(a.lambda1.to_string())),
        ("lambda2", Some(a.lambda2.to_string())),
        ("margin-pos", Some(a.margin_pos.to_string())),
        ("margin-neg", Some(a.margin_neg.to_string())),
        ("psi", Some(a.psi.to_string())),
        ("alpha", Some(a.alpha.to_string())),
        ("scope", Some(a.scope.to_string())),
        ("apc-voxel", Some(a.apc_voxel.to_string())),
        ("include-key-frame", Some(a.include_key_frame.to_string())),
        ("n-disturb", Some(a.n_disturb.to_string())),
        ("phi", Some(a.phi.to_string())),
        ("decoder", Some(format!("{:?}", a.decoder).to_lowercase())),
        ("k", Some(a.k.to_string())),
        ("l", Some(a.l.to_string())),
        ("gt-radius", Some(a.gt_radius.to_string())),
        ("voxel", Some(a.input.voxel.to_string())),
        ("range", Some(a.input.range.to_string())),
        ("max-points", opt(a.input.max_points)),
    ];
    rows.retain(|(_, v)| v.is_some());
    rows.into_iter().map(|(k, v)| format!("{k} = {}\n", v.unwrap())).collect()
}

fn log_csv(log: &TrainLog) -> Result<Vec<u8>, CliError> {
    let mut buf = Vec::new();
    log.write_csv(&mut buf)?;
    Ok(buf)
}

pub fn run<W: Write>(a: &TrainArgs, out: &mut W) -> Result<(), CliError> {
    Data::check(&a.data)?;
    check_input(&a.pairs)?;
    check_output(&a.out, a.force)?;
    let cfg = config_of(a);
    cfg.validate()?;
    let data = Data::load(&a.data)?;
    let pairs = load_pairs(&a.pairs)?;
    check_pairs(data.source(), &pairs)?;
    if pairs.is_empty() {
        return Err(CliError::Empty(format!("{} lists no pairs", a.pairs.display())));
    }

    let staged = StagedDir::new(&a.out)?;
    let (params, logs) = if a.curriculum {
        let far = pairs.iter().map(|p| p.distance).fold(0.0, f64::max);
        let spec = CurriculumSpec::new(a.d2.unwrap_or(far));
        let outcome = train_curriculum_on_pairs(data.source(), &pairs, &cfg, &spec, None)?;
        let names = ["pretrain", "finetune"];
        let logs: Vec<_> = outcome.phases.into_iter().zip(names).map(|(l, n)| (n, l)).collect();
        (outcome.params, logs)
    } else {
        let init = init_params(cfg.seed, &cfg.dims)?;
        let t = train_on_pairs(init, data.source(), &pairs, &cfg, None)?;
        (t.params, vec![("train", t.log)])
    };
    staged.write(CHECKPOINT_FILE, &encode_checkpoint(&params))?;
    for (name, log) in &logs {
        staged.write(&format!("{name}_log.csv"), &log_csv(log)?)?;
    }
    staged.write(CONFIG_FILE, resolved(a).as_bytes())?;
    staged.commit()?;
    for (name, log) in &logs {
        report(
            out,
            format_args!(
                "{name}: {} steps over {} pairs, loss {:.4} -> {:.4}",
                log.steps.len(),
                log.steps.len() / log.epochs.len().max(1),
                log.initial_loss,
                log.final_loss
            ),
        )?;
    }
    report(out, format_args!("wrote {}", a.out.join(CHECKPOINT_FILE).display()))
}
