//! Layered configuration: command defaults, then the command's section of
//! the config file, then `--set` overrides, then the global flags.

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::error::CliError;

/// Bumped whenever a CSV schema or the record layout changes.
pub const FORMAT: &str = "patchdyn/1";

/// Keys allowed at the top level of a config file besides command sections.
const GLOBAL_KEYS: [&str; 4] = ["seed", "replicas", "out", "threads"];

pub const SECTIONS: [&str; 8] =
    ["simulate", "meanfield", "dual_check", "agreement", "isolated", "percolation", "phase_portrait", "range_study"];

/// Global settings after merging file and flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Globals {
    pub seed: u64,
    /// `None` lets each command use its own default.
    pub replicas: Option<u64>,
    pub out: PathBuf,
    /// 0 means one worker per core.
    pub threads: usize,
}

impl Default for Globals {
    fn default() -> Self {
        Globals { seed: 1, replicas: None, out: PathBuf::from("out"), threads: 0 }
    }
}

/// Flags that sit above the file.
#[derive(Debug, Clone, Default)]
pub struct GlobalFlags {
    pub config: Option<PathBuf>,
    pub seed: Option<u64>,
    pub replicas: Option<u64>,
    pub out: Option<PathBuf>,
    pub threads: Option<usize>,
    pub set: Vec<String>,
}

/// What every record echoes: the resolved globals and command block.
#[derive(Debug, Clone, Serialize)]
pub struct ExperimentConfig<C> {
    pub format: &'static str,
    pub command: &'static str,
    pub seed: u64,
    pub replicas: u64,
    pub out: PathBuf,
    pub threads: usize,
    pub params: C,
}

fn read_file(path: &Path) -> Result<Table, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let table: Table = text.parse().map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    for (k, v) in &table {
        let known = GLOBAL_KEYS.contains(&k.as_str()) || (SECTIONS.contains(&k.as_str()) && v.is_table());
        if !known {
            return Err(CliError::Config(format!("{}: unknown top-level key `{k}`", path.display())));
        }
    }
    Ok(table)
}

/// Overlay `top` onto `base`, recursing into tables.
fn merge(base: &mut Table, top: Table) {
    for (k, v) in top {
        match (base.get_mut(&k), v) {
            (Some(Value::Table(b)), Value::Table(t)) => merge(b, t),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

/// `a.b=v` with `v` read as a TOML value, or as a bare string if it does not parse.
fn parse_assignment(s: &str) -> Result<(Vec<String>, Value), CliError> {
    let (path, raw) = s.split_once('=').ok_or_else(|| CliError::Config(format!("--set {s}: expected key=value")))?;
    let path: Vec<String> = path.trim().split('.').map(str::to_string).collect();
    if path.iter().any(String::is_empty) {
        return Err(CliError::Config(format!("--set {s}: empty key")));
    }
    let raw = raw.trim();
    let value = format!("v = {raw}")
        .parse::<Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()));
    Ok((path, value))
}

fn assign(table: &mut Table, path: &[String], value: Value) {
    let (last, parents) = path.split_last().expect("nonempty path");
    let mut cur = table;
    for p in parents {
        let entry = cur.entry(p.clone()).or_insert_with(|| Value::Table(Table::new()));
        if !entry.is_table() {
            *entry = Value::Table(Table::new());
        }
        cur = entry.as_table_mut().expect("table");
    }
    cur.insert(last.clone(), value);
}

fn deserialize<T: DeserializeOwned>(table: Table, prefix: &str) -> Result<T, CliError> {
    serde_path_to_error::deserialize(Value::Table(table)).map_err(|e| {
        let path = e.path().to_string();
        let path = if path == "." { prefix.to_string() } else { format!("{prefix}.{path}") };
        let msg = e.into_inner().to_string();
        CliError::Config(format!("{path}: {}", msg.lines().next().unwrap_or_default()))
    })
}

/// Resolve the globals and the `section` block of type `C`.
pub fn load<C>(flags: &GlobalFlags, section: &'static str) -> Result<(Globals, C), CliError>
where
    C: Default + Serialize + DeserializeOwned,
{
    let mut file = match &flags.config {
        Some(p) => read_file(p)?,
        None => Table::new(),
    };
    let mut block = match toml::Table::try_from(C::default()) {
        Ok(t) => t,
        Err(e) => return Err(CliError::Config(format!("{section}: defaults do not serialize: {e}"))),
    };
    if let Some(Value::Table(t)) = file.remove(section) {
        merge(&mut block, t);
    }
    let mut globals = toml::Table::try_from(Globals::default()).expect("globals serialize");
    for k in GLOBAL_KEYS {
        if let Some(v) = file.remove(k) {
            globals.insert(k.to_string(), v);
        }
    }
    for s in &flags.set {
        let (path, value) = parse_assignment(s)?;
        if path.len() == 1 && GLOBAL_KEYS.contains(&path[0].as_str()) {
            assign(&mut globals, &path, value);
        } else if path[0] == section {
            assign(&mut block, &path[1..], value);
        } else {
            assign(&mut block, &path, value);
        }
    }
    let mut g: Globals = deserialize(globals, "global")?;
    if let Some(s) = flags.seed {
        g.seed = s;
    }
    if let Some(r) = flags.replicas {
        g.replicas = Some(r);
    }
    if let Some(o) = &flags.out {
        g.out = o.clone();
    }
    if let Some(t) = flags.threads {
        g.threads = t;
    }
    if g.replicas == Some(0) {
        return Err(CliError::Config("global.replicas: must be positive".into()));
    }
    let c: C = deserialize(block, section)?;
    Ok((g, c))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Debug, Default, Serialize, Deserialize, PartialEq)]
    #[serde(deny_unknown_fields, default)]
    struct Demo {
        x: f64,
        list: Vec<u32>,
        inner: DemoInner,
    }

    #[derive(Debug, Default, Serialize, Deserialize, PartialEq)]
    #[serde(deny_unknown_fields, default)]
    struct DemoInner {
        k: u32,
    }

    #[test]
    fn set_overrides_and_paths() {
        let flags = GlobalFlags {
            set: vec!["x=2.5".into(), "list=[1, 2]".into(), "inner.k=3".into(), "seed=9".into()],
            ..Default::default()
        };
        let (g, d): (Globals, Demo) = load(&flags, "simulate").unwrap();
        assert_eq!(g.seed, 9);
        assert_eq!(d, Demo { x: 2.5, list: vec![1, 2], inner: DemoInner { k: 3 } });
    }

    #[test]
    fn errors_name_the_field() {
        let flags = GlobalFlags { set: vec!["inner.k=-1".into()], ..Default::default() };
        let err = load::<Demo>(&flags, "simulate").unwrap_err().to_string();
        assert!(err.contains("simulate.inner.k"), "{err}");
        let flags = GlobalFlags { set: vec!["inner.q=1".into()], ..Default::default() };
        let err = load::<Demo>(&flags, "simulate").unwrap_err().to_string();
        assert!(err.contains("unknown field"), "{err}");
    }
}
