//! Line-oriented `key = value` configuration.
//!
//! Blank lines and lines starting with `#` are ignored. Everything after the first `=`
//! (trimmed) is the value; lists are comma-separated. A key may appear once per file.
//! Command-line `--key value` flags override file keys, with `-` in flag names read as
//! `_`. Each command consumes the keys it understands and rejects the rest.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use seqstruct::sampler::{SamplerConfig, SamplerMode};
use seqstruct::{MeasureMode, SamplingMeasure, StructureBackend};

use crate::error::{CliError, CliResult};

pub fn parse_file_text(text: &str) -> CliResult<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| {
            CliError::config("config", format!("line {}: expected `key = value`", i + 1))
        })?;
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() {
            return Err(CliError::config("config", format!("line {}: empty key", i + 1)));
        }
        if out.insert(k.to_string(), v.to_string()).is_some() {
            return Err(CliError::config(k, format!("line {}: duplicate key", i + 1)));
        }
    }
    Ok(out)
}

/// `--key value`, `--key=value`, or a bare `--key` meaning `true`.
pub fn parse_overrides(args: &[String]) -> CliResult<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    let mut it = args.iter().peekable();
    while let Some(a) = it.next() {
        let Some(name) = a.strip_prefix("--") else {
            return Err(CliError::config(a, "expected a `--key value` flag"));
        };
        let (name, value) = match name.split_once('=') {
            Some((n, v)) => (n.to_string(), v.to_string()),
            None => {
                let v = match it.peek() {
                    Some(next) if !next.starts_with("--") => it.next().unwrap().clone(),
                    _ => "true".to_string(),
                };
                (name.to_string(), v)
            }
        };
        let key = name.replace('-', "_");
        if out.insert(key.clone(), value).is_some() {
            return Err(CliError::config(&key, "flag given twice"));
        }
    }
    Ok(out)
}

pub fn merge(
    file: Option<&Path>,
    overrides: BTreeMap<String, String>,
) -> CliResult<BTreeMap<String, String>> {
    let mut merged = match file {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| CliError::config("config", format!("{}: {e}", p.display())))?;
            parse_file_text(&text)?
        }
        None => BTreeMap::new(),
    };
    merged.extend(overrides);
    Ok(merged)
}

/// Consumes typed values from the merged key map, recording the effective value of
/// every key (defaults included) for the manifest.
pub struct Reader {
    raw: BTreeMap<String, String>,
    effective: BTreeMap<String, String>,
}

impl Reader {
    pub fn new(raw: BTreeMap<String, String>) -> Self {
        Reader { raw, effective: BTreeMap::new() }
    }

    fn parse<T: FromStr>(key: &str, v: &str) -> CliResult<T>
    where
        T::Err: Display,
    {
        v.parse().map_err(|e| CliError::config(key, format!("cannot parse `{v}`: {e}")))
    }

    pub fn opt<T: FromStr + Display>(&mut self, key: &str) -> CliResult<Option<T>>
    where
        T::Err: Display,
    {
        match self.raw.remove(key) {
            Some(v) => {
                let t: T = Self::parse(key, &v)?;
                self.effective.insert(key.to_string(), t.to_string());
                Ok(Some(t))
            }
            None => Ok(None),
        }
    }

    pub fn get<T: FromStr + Display>(&mut self, key: &str, default: T) -> CliResult<T>
    where
        T::Err: Display,
    {
        let v = self.opt(key)?.unwrap_or(default);
        self.effective.insert(key.to_string(), v.to_string());
        Ok(v)
    }

    pub fn req<T: FromStr + Display>(&mut self, key: &str) -> CliResult<T>
    where
        T::Err: Display,
    {
        self.opt(key)?.ok_or_else(|| CliError::config(key, "required key missing"))
    }

    pub fn path(&mut self, key: &str) -> CliResult<PathBuf> {
        self.req::<String>(key).map(PathBuf::from)
    }

    pub fn opt_path(&mut self, key: &str) -> CliResult<Option<PathBuf>> {
        Ok(self.opt::<String>(key)?.map(PathBuf::from))
    }

    pub fn list(&mut self, key: &str, default: &str) -> CliResult<Vec<String>> {
        let s: String = self.get(key, default.to_string())?;
        let items: Vec<String> =
            s.split(',').map(|x| x.trim().to_string()).filter(|x| !x.is_empty()).collect();
        if items.is_empty() {
            return Err(CliError::config(key, "list must not be empty"));
        }
        Ok(items)
    }

    pub fn pair(&mut self, key: &str, default: (f64, f64)) -> CliResult<(f64, f64)> {
        let v = self.list(key, &format!("{},{}", default.0, default.1))?;
        match v.as_slice() {
            [a, b] => {
                let (a, b): (f64, f64) = (Self::parse(key, a)?, Self::parse(key, b)?);
                if !(a.is_finite() && b.is_finite() && a <= b) {
                    return Err(CliError::config(key, "expected `lo,hi` with lo <= hi"));
                }
                Ok((a, b))
            }
            _ => Err(CliError::config(key, "expected two comma-separated numbers")),
        }
    }

    /// Fails if any key is left unconsumed, keeping the reader usable.
    pub fn finish_check(&self) -> CliResult<()> {
        match self.raw.keys().next() {
            Some(k) => Err(CliError::config(k, "unknown key for this command")),
            None => Ok(()),
        }
    }

    /// Fails on the first key nobody consumed; otherwise returns the effective config.
    pub fn finish(self) -> CliResult<BTreeMap<String, String>> {
        self.finish_check()?;
        Ok(self.effective)
    }
}

/// Sampler keys, resolved against a backend once the data is known.
#[derive(Clone, Debug)]
pub struct SamplerKeys {
    pub measure: String,
    pub front_fraction: f64,
    pub drop_probability: f64,
    pub mode: SamplerMode,
    pub bound: usize,
}

impl SamplerKeys {
    pub fn read(r: &mut Reader) -> CliResult<Self> {
        let measure: String = r.get("measure", "default".to_string())?;
        if !["default", "uniform", "biased-front", "canonical"].contains(&measure.as_str()) {
            return Err(CliError::config(
                "measure",
                format!("`{measure}` is not one of default, uniform, biased-front, canonical"),
            ));
        }
        let front_fraction = r.get("front_fraction", 0.5)?;
        let drop_probability = r.get("drop_probability", 0.0)?;
        let mode = match r.get("sampler_mode", "streaming".to_string())?.as_str() {
            "streaming" => SamplerMode::Streaming,
            "enumerating" => SamplerMode::Enumerating,
            other => {
                return Err(CliError::config(
                    "sampler_mode",
                    format!("`{other}` is not one of streaming, enumerating"),
                ))
            }
        };
        let bound = r.get("enumeration_bound", SamplerConfig::DEFAULT_BOUND)?;
        if bound == 0 {
            return Err(CliError::config("enumeration_bound", "must be at least 1"));
        }
        // Validate the measure parameters eagerly, before any data is read.
        SamplingMeasure::biased_front_with_drop(front_fraction, drop_probability)
            .map_err(|e| CliError::config("front_fraction", e.to_string()))?;
        Ok(SamplerKeys { measure, front_fraction, drop_probability, mode, bound })
    }

    pub fn build(&self, backend: &dyn StructureBackend, seed: u64) -> SamplerConfig {
        let measure = match self.measure.as_str() {
            "uniform" => SamplingMeasure::Uniform,
            "canonical" => SamplingMeasure::Canonical,
            "biased-front" => SamplingMeasure::BiasedFront {
                front_fraction: self.front_fraction,
                drop_probability: self.drop_probability,
            },
            _ => match backend.default_measure(MeasureMode::Conditional) {
                SamplingMeasure::BiasedFront { .. } => SamplingMeasure::BiasedFront {
                    front_fraction: self.front_fraction,
                    drop_probability: self.drop_probability,
                },
                m => m,
            },
        };
        SamplerConfig { mode: self.mode, measure, enumeration_bound: self.bound, seed }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn args(xs: &[&str]) -> Vec<String> {
        xs.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn file_format() {
        let m = parse_file_text("# c\n\nseed = 7\nlabels = A, B\nout=x=y\n").unwrap();
        assert_eq!(m["seed"], "7");
        assert_eq!(m["labels"], "A, B");
        assert_eq!(m["out"], "x=y");
        assert!(parse_file_text("seed 7").is_err());
        assert!(parse_file_text("a = 1\na = 2").is_err());
    }

    #[test]
    fn flags() {
        let m = parse_overrides(&args(&["--max-nodes", "20", "--exact", "--seed=3"])).unwrap();
        assert_eq!(m["max_nodes"], "20");
        assert_eq!(m["exact"], "true");
        assert_eq!(m["seed"], "3");
        assert!(parse_overrides(&args(&["stray"])).is_err());
    }

    #[test]
    fn flags_override_file() {
        let file = parse_file_text("seed = 1\ncount = 5").unwrap();
        let mut merged = file;
        merged.extend(parse_overrides(&args(&["--seed", "9"])).unwrap());
        let mut r = Reader::new(merged);
        assert_eq!(r.get("seed", 0u64).unwrap(), 9);
        assert_eq!(r.get("count", 0usize).unwrap(), 5);
        assert_eq!(r.get("missing", 4usize).unwrap(), 4);
        let eff = r.finish().unwrap();
        assert_eq!(eff["missing"], "4");
    }

    #[test]
    fn unknown_and_bad_keys_name_the_field() {
        let mut r = Reader::new(parse_file_text("bogus = 1\nseed = x").unwrap());
        let e = r.get("seed", 0u64).unwrap_err();
        assert_eq!(e.field.as_deref(), Some("seed"));
        let e = r.finish().unwrap_err();
        assert_eq!(e.field.as_deref(), Some("bogus"));
    }
}
