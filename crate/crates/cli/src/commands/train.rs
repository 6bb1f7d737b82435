use seqstruct::seqmodel::{
    train, write_metrics_csv, Adam, CellKind, HeadKind, Standardizer, TrainState,
};
use seqstruct::{ModelDims, SeqModel, Target, TrainConfig};

use super::common::{build, check_covered, checkpoint_bytes, infer_spec, instances, load_checkpoint, load_dataset};
use crate::config::{Reader, SamplerKeys};
use crate::error::{CliError, CliResult};
use crate::output::Outputs;

pub fn run(mut r: Reader) -> CliResult<()> {
    let data_path = r.path("data")?;
    let valid_path = r.opt_path("valid")?;
    let resume = r.opt_path("resume")?;
    let out = r.get("out", "out".to_string())?;
    let seed: u64 = r.get("seed", 0)?;
    let hidden: Option<usize> = r.opt("hidden")?;
    let mixture: Option<usize> = r.opt("mixture")?;
    let cell: Option<String> = r.opt("cell")?;
    let head: Option<String> = r.opt("head")?;
    let objective: String = r.get("objective", "generative".to_string())?;
    let d = TrainConfig::default();
    let tc = TrainConfig {
        lambda: r.get("lambda", d.lambda)?,
        learning_rate: r.get("learning_rate", d.learning_rate)?,
        beta1: r.get("beta1", d.beta1)?,
        beta2: r.get("beta2", d.beta2)?,
        epsilon: r.get("epsilon", d.epsilon)?,
        batch: r.get("batch", d.batch)?,
        serializations_per_instance: r.get("serializations_per_instance", d.serializations_per_instance)?,
        max_steps: r.get("max_steps", d.max_steps)?,
        clip: r.get("clip", d.clip)?,
        eval_every: r.get("eval_every", d.eval_every)?,
        valid_serializations: r.get("valid_serializations", d.valid_serializations)?,
        seed,
        discriminative: match objective.as_str() {
            "generative" => false,
            "discriminative" => true,
            other => {
                return Err(CliError::config(
                    "objective",
                    format!("`{other}` is not one of generative, discriminative"),
                ))
            }
        },
        record_wall_time: r.get("record_wall_time", d.record_wall_time)?,
        max_wall_seconds: r.opt("max_wall_seconds")?,
        max_nonfinite_steps: r.get("max_nonfinite_steps", d.max_nonfinite_steps)?,
    };
    let sk = SamplerKeys::read(&mut r)?;
    let config = r.finish()?;
    tc.validate().map_err(CliError::from)?;
    let cell = match cell.as_deref() {
        None => None,
        Some("vanilla") => Some(CellKind::Vanilla),
        Some("gru") => Some(CellKind::Gru),
        Some(other) => return Err(CliError::config("cell", format!("`{other}` is not one of vanilla, gru"))),
    };
    if !matches!(head.as_deref(), None | Some("none" | "classes" | "regression")) {
        return Err(CliError::config("head", "expected one of none, classes, regression"));
    }

    let data = load_dataset(&data_path, "data")?;
    let valid = match &valid_path {
        Some(p) => load_dataset(p, "valid")?,
        None => Vec::new(),
    };

    let (spec, state) = match &resume {
        Some(path) => {
            if hidden.is_some() || mixture.is_some() || head.is_some() {
                return Err(CliError::config("resume", "model dimensions come from the checkpoint"));
            }
            let l = load_checkpoint(path, "resume")?;
            check_covered(&l.spec, &data, "data")?;
            check_covered(&l.spec, &valid, "valid")?;
            if cell.is_some_and(|c| c != l.model.dims.cell) {
                return Err(CliError::config("cell", "differs from the checkpoint"));
            }
            let (t, m, v) = l
                .adam
                .ok_or_else(|| CliError::data("checkpoint has no optimizer state").at("resume"))?;
            let adam = Adam {
                learning_rate: tc.learning_rate,
                beta1: tc.beta1,
                beta2: tc.beta2,
                epsilon: tc.epsilon,
                clip: tc.clip,
                m,
                v,
                t,
            };
            (l.spec, TrainState { model: l.model, adam, step: l.step })
        }
        None => {
            let spec = infer_spec([data.as_slice(), valid.as_slice()])?;
            let backend = build(&spec)?;
            let mixture = mixture.unwrap_or(2);
            let head = match head.as_deref() {
                Some("classes") => {
                    let c = data
                        .iter()
                        .chain(&valid)
                        .filter_map(|l| match l.target {
                            Some(Target::Class(c)) => Some(c),
                            _ => None,
                        })
                        .max()
                        .ok_or_else(|| CliError::data("head = classes needs target_class labels").at("head"))?;
                    HeadKind::Classes(c)
                }
                Some("regression") => HeadKind::Regression(mixture as u32),
                _ => HeadKind::None,
            };
            let dims = ModelDims {
                vocab: backend.alphabet().len(),
                hidden: hidden.unwrap_or(32),
                mixture,
                cell: cell.unwrap_or(CellKind::Vanilla),
                head,
            };
            let std = Standardizer::fit(backend.as_ref(), &instances(&data))?;
            let model = SeqModel::init(dims, std, seed)?;
            let state = TrainState::new(model, &tc);
            (spec, state)
        }
    };
    let backend = build(&spec)?;
    let sampler = sk.build(backend.as_ref(), seed);

    let outcome = train(backend.as_ref(), &data, &valid, &tc, &sampler, state)?;
    let mut csv = Vec::new();
    write_metrics_csv(&mut csv, &outcome.metrics)?;
    let st = &outcome.state;
    let ckpt = checkpoint_bytes(&st.model, Some(&st.adam), &spec, st.step)?;

    if let Some(last) = outcome.metrics.last() {
        println!(
            "step {} train_nll {} valid_nll {}{}",
            last.step,
            last.train_nll,
            last.valid_nll,
            if outcome.stopped_early { " (wall-clock budget reached)" } else { "" }
        );
    }
    let mut outputs = Outputs::new(out.into());
    outputs.add("model.ckpt", ckpt);
    outputs.add("metrics.csv", csv);
    outputs.note("backend", serde_json::to_value(&spec).expect("spec serializes"));
    outputs.note("steps_completed", st.step.into());
    outputs.note("stopped_early", outcome.stopped_early.into());
    outputs.commit("train", &config)
}
