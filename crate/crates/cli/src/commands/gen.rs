use seqstruct::datagen::{
    generate_propositional, generate_random_sets, generate_random_trees, generate_vdp_dataset,
    PropositionalShape, VdpRanges,
};
use seqstruct::structures::{write_instance_line, LabeledInstance, StructureInstance, Target};

use crate::config::Reader;
use crate::error::{CliError, CliResult};
use crate::output::Outputs;

pub fn run(mut r: Reader) -> CliResult<()> {
    let kind: String = r.req("kind")?;
    let count: usize = r.get("count", 100)?;
    let seed: u64 = r.get("seed", 0)?;
    let out = r.get("out", "out".to_string())?;

    let instances: Vec<LabeledInstance> = match kind.as_str() {
        "vdp" => {
            let ranges = VdpRanges {
                initial: r.pair("initial_range", (-1.0, 1.0))?,
                k: r.pair("k_range", (2.0, 4.0))?,
                mu: r.pair("mu_range", (2.0, 4.0))?,
            };
            let length = r.get("length", 20usize)?;
            let step: f64 = r.get("step", 0.1)?;
            let substeps = r.get("substeps", 1usize)?;
            if length < 2 {
                return Err(CliError::config("length", "must be at least 2"));
            }
            if !(step > 0.0 && step.is_finite()) || substeps == 0 {
                return Err(CliError::config("step", "step must be positive and substeps >= 1"));
            }
            r.finish_check()?;
            wrap(generate_vdp_dataset(count, &ranges, length, step, substeps, seed)?, StructureInstance::Series)
        }
        "tree" => {
            let max_nodes = r.get("max_nodes", 10usize)?;
            let labels = r.list("labels", "A,B,C")?;
            let ordered = r.get("ordered", false)?;
            r.finish_check()?;
            let trees = generate_random_trees(&labels, count, max_nodes, ordered, seed)
                .map_err(|e| CliError::from(e).at("max_nodes"))?;
            wrap(trees, StructureInstance::Tree)
        }
        "set" => {
            let symbols = r.list("symbols", "A,B,C,D,E")?;
            let max_size = r.get("max_size", symbols.len())?;
            r.finish_check()?;
            let sets = generate_random_sets(&symbols, count, max_size, seed)
                .map_err(|e| CliError::from(e).at("max_size"))?;
            wrap(sets, StructureInstance::Set)
        }
        "propositional" => {
            let numeric = r.get("numeric", 2usize)?;
            let categorical = r
                .list("categorical", "3,2")?
                .iter()
                .map(|c| c.parse::<usize>().map_err(|e| CliError::config("categorical", e.to_string())))
                .collect::<CliResult<Vec<_>>>()?;
            let classes = r.get("classes", 2u32)?;
            let label_as_target = r.get("label_as_target", false)?;
            r.finish_check()?;
            let shape = PropositionalShape { numeric, categorical, classes };
            let records = generate_propositional(&shape, count, seed)
                .map_err(|e| CliError::from(e).at("categorical"))?;
            records
                .into_iter()
                .map(|mut p| {
                    let target = if label_as_target { p.label.take().map(Target::Class) } else { None };
                    LabeledInstance { instance: StructureInstance::Propositional(p), target }
                })
                .collect()
        }
        other => {
            return Err(CliError::config(
                "kind",
                format!("`{other}` is not one of vdp, tree, set, propositional"),
            ))
        }
    };

    let mut text = String::new();
    for x in &instances {
        text.push_str(&write_instance_line(x)?);
        text.push('\n');
    }
    let config = r.finish()?;
    let mut outputs = Outputs::new(out.into());
    outputs.add("data.jsonl", text.into_bytes());
    outputs.commit("gen", &config)?;
    println!("wrote {} instances", instances.len());
    Ok(())
}

fn wrap<T>(xs: Vec<T>, f: fn(T) -> StructureInstance) -> Vec<LabeledInstance> {
    xs.into_iter().map(|x| LabeledInstance::unlabeled(f(x))).collect()
}
