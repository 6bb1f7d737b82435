use serde_json::json;
use seqstruct::density::{build_tabular_oracle, log_pushforward_prob, recover_density, RecoveryRecord, SequenceScorer};
use seqstruct::{Error, SeqModel, TabularSeqModel};

use super::common::{build, check_covered, infer_spec, instances, load_checkpoint, load_dataset};
use crate::config::{Reader, SamplerKeys};
use crate::error::{CliError, CliResult};
use crate::output::Outputs;

pub const REPORT_VERSION: u64 = 1;

enum Model {
    Net(SeqModel),
    Oracle(TabularSeqModel),
}

impl Model {
    fn scorer(&self) -> &dyn SequenceScorer {
        match self {
            Model::Net(m) => m,
            Model::Oracle(m) => m,
        }
    }
}

pub fn run(mut r: Reader) -> CliResult<()> {
    let test_path = r.path("test")?;
    let kind: String = r.get("model", "checkpoint".to_string())?;
    let (ckpt_path, data_path) = match kind.as_str() {
        "checkpoint" => (Some(r.path("checkpoint")?), None),
        "oracle" => (None, Some(r.path("data")?)),
        other => {
            return Err(CliError::config("model", format!("`{other}` is not one of checkpoint, oracle")))
        }
    };
    let m: usize = r.get("m", 100)?;
    let exact: bool = r.get("exact", false)?;
    let seed: u64 = r.get("seed", 0)?;
    let out = r.get("out", "out".to_string())?;
    let sk = SamplerKeys::read(&mut r)?;
    let config = r.finish()?;
    if m == 0 {
        return Err(CliError::config("m", "must be at least 1"));
    }

    let test = load_dataset(&test_path, "test")?;
    let (spec, model) = match (ckpt_path, data_path) {
        (Some(p), _) => {
            let l = load_checkpoint(&p, "checkpoint")?;
            check_covered(&l.spec, &test, "test")?;
            (l.spec, Model::Net(l.model))
        }
        (None, Some(p)) => {
            let data = load_dataset(&p, "data")?;
            let spec = infer_spec([data.as_slice(), test.as_slice()])?;
            let backend = build(&spec)?;
            let cfg = sk.build(backend.as_ref(), seed);
            let oracle = build_tabular_oracle(&instances(&data), backend.as_ref(), &cfg, sk.bound)
                .map_err(|e| CliError::from(e).at("data"))?;
            (spec, Model::Oracle(oracle))
        }
        (None, None) => unreachable!("one model source is always set"),
    };
    let backend = build(&spec)?;
    let cfg = sk.build(backend.as_ref(), seed);

    let mut text = String::new();
    for (i, x) in test.iter().enumerate() {
        let est = recover_density(backend.as_ref(), &x.instance, model.scorer(), m, &cfg, i as u64)?;
        let (exact_value, status) = if exact {
            match log_pushforward_prob(backend.as_ref(), &x.instance, model.scorer(), sk.bound) {
                Ok(lp) => (Some(lp.exp()), "ok"),
                Err(Error::EnumerationTooLarge { .. }) => (None, "unavailable"),
                Err(e) => return Err(e.into()),
            }
        } else {
            (None, "skipped")
        };
        let record = RecoveryRecord {
            instance_id: i as u64,
            estimate: est.estimate,
            stderr: est.stderr.is_finite().then_some(est.stderr),
            log_estimate: est.log_estimate,
            m: est.m,
            mode: cfg.measure.name().to_string(),
            exact: exact_value,
            exact_status: status.to_string(),
        };
        let mut line = json!({ "v": REPORT_VERSION });
        let fields = serde_json::to_value(&record).expect("record serializes");
        line.as_object_mut().unwrap().extend(fields.as_object().unwrap().clone());
        text.push_str(&line.to_string());
        text.push('\n');
    }
    println!("recovered {} instances with m = {m}", test.len());
    let mut outputs = Outputs::new(out.into());
    outputs.add("recovery.jsonl", text.into_bytes());
    outputs.note("backend", serde_json::to_value(&spec).expect("spec serializes"));
    outputs.commit("recover", &config)
}
