use std::path::Path;

use serde_json::{json, Value};
use seqstruct::seqmodel::{decode_checkpoint, encode_checkpoint, Adam, Checkpoint};
use seqstruct::structures::read_instances;
use seqstruct::{BackendSpec, LabeledInstance, SeqModel, StructureBackend, StructureInstance};

use crate::error::{CliError, CliResult};

/// Reads a dataset; `key` names the config entry for error reports.
pub fn load_dataset(path: &Path, key: &str) -> CliResult<Vec<LabeledInstance>> {
    let data = read_instances(path)
        .map_err(|e| CliError::data(format!("{}: {e}", path.display())).at(key))?;
    if data.is_empty() {
        return Err(CliError::data("empty dataset").at(key));
    }
    Ok(data)
}

pub fn instances(data: &[LabeledInstance]) -> Vec<StructureInstance> {
    data.iter().map(|l| l.instance.clone()).collect()
}

pub fn infer_spec<'a>(sets: impl IntoIterator<Item = &'a [LabeledInstance]>) -> CliResult<BackendSpec> {
    let all: Vec<&StructureInstance> = sets.into_iter().flatten().map(|l| &l.instance).collect();
    Ok(BackendSpec::infer(all)?)
}

pub fn build(spec: &BackendSpec) -> CliResult<Box<dyn StructureBackend>> {
    Ok(spec.build()?)
}

/// A loaded checkpoint together with its backend and completed step count.
pub struct Loaded {
    pub model: SeqModel,
    pub adam: Option<(u64, Vec<f64>, Vec<f64>)>,
    pub spec: BackendSpec,
    pub step: u64,
}

pub fn load_checkpoint(path: &Path, key: &str) -> CliResult<Loaded> {
    let bytes = std::fs::read(path)
        .map_err(|e| CliError::data(format!("{}: {e}", path.display())).at(key))?;
    let Checkpoint { model, adam, metadata } = decode_checkpoint(&bytes).map_err(|e| CliError::from(e).at(key))?;
    let spec: BackendSpec = serde_json::from_value(metadata.get("backend").cloned().unwrap_or(Value::Null))
        .map_err(|e| CliError::data(format!("checkpoint backend description: {e}")).at(key))?;
    let step = metadata.get("step").and_then(Value::as_u64).unwrap_or(0);
    if spec.build()?.alphabet().len() != model.dims.vocab {
        return Err(CliError::data("checkpoint alphabet does not match the model vocabulary").at(key));
    }
    Ok(Loaded { model, adam, spec, step })
}

pub fn checkpoint_bytes(model: &SeqModel, adam: Option<&Adam>, spec: &BackendSpec, step: u64) -> CliResult<Vec<u8>> {
    let meta = json!({ "backend": spec, "step": step });
    Ok(encode_checkpoint(model, adam, &meta)?)
}

/// Checks that every instance fits the checkpoint's alphabet.
pub fn check_covered(spec: &BackendSpec, data: &[LabeledInstance], key: &str) -> CliResult<()> {
    if data.is_empty() {
        return Ok(());
    }
    let data_spec = infer_spec([data])?;
    match spec.union(&data_spec) {
        Ok(u) if &u == spec => Ok(()),
        _ => Err(CliError::data("dataset uses symbols outside the checkpoint's alphabet").at(key)),
    }
}
