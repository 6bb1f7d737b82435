use std::collections::{BTreeMap, HashSet};

use seqstruct::sampler::{corpus_line, sample_corpus};

use super::common::{build, infer_spec, instances, load_dataset};
use crate::config::{Reader, SamplerKeys};
use crate::error::{CliError, CliResult};
use crate::output::Outputs;

pub fn run(mut r: Reader) -> CliResult<()> {
    let data_path = r.path("data")?;
    let seed: u64 = r.get("seed", 0)?;
    let per: usize = r.get("serializations_per_instance", 1)?;
    let out = r.get("out", "out".to_string())?;
    let sk = SamplerKeys::read(&mut r)?;
    let config = r.finish()?;
    if per == 0 {
        return Err(CliError::config("serializations_per_instance", "must be at least 1"));
    }

    let data = load_dataset(&data_path, "data")?;
    let spec = infer_spec([data.as_slice()])?;
    let backend = build(&spec)?;
    let cfg = sk.build(backend.as_ref(), seed);
    let xs = instances(&data);
    let corpus = sample_corpus(backend.as_ref(), &xs, &cfg, per)?;

    let mut text = String::new();
    let mut lengths: BTreeMap<usize, usize> = BTreeMap::new();
    let mut states = HashSet::new();
    for (i, a) in &corpus {
        text.push_str(&corpus_line(backend.alphabet(), *i as u64, a)?);
        text.push('\n');
        *lengths.entry(a.len()).or_default() += 1;
        states.extend(backend.replay_states(&a.elements)?);
    }

    println!("instances {} serializations {} distinct_states {}", xs.len(), corpus.len(), states.len());
    for (len, n) in &lengths {
        println!("length {len} count {n}");
    }

    let mut outputs = Outputs::new(out.into());
    outputs.add("corpus.jsonl", text.into_bytes());
    outputs.note("backend", serde_json::to_value(&spec).expect("spec serializes"));
    outputs.note("measure", cfg.measure.name().into());
    outputs.commit("serialize", &config)
}
