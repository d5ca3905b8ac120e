//! `--config FILE` support.
//!
//! The file is a JSON object whose keys are long flag names (`hidden_dim`
//! or `hidden-dim`). It may be flat, or hold one object per subcommand
//! (`{"train": {...}, "monitor": {...}}`); top-level scalar keys apply to
//! every subcommand that accepts them and a section overrides them. Values
//! are turned into flags placed before the user's own arguments, so a flag
//! given on the command line wins.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::PathBuf;

use clap::{ArgAction, CommandFactory};
use serde_json::{Map, Value};

use crate::args::Cli;
use crate::error::{CliError, Result};

/// Returns `raw` with config-file flags spliced in after the subcommand.
pub fn merge_config(raw: Vec<OsString>) -> Result<Vec<OsString>> {
    let Some(path) = config_path(&raw) else {
        return Ok(raw);
    };
    let cli = Cli::command();
    let names: Vec<String> = cli.get_subcommands().map(|c| c.get_name().to_owned()).collect();
    let Some(sub_pos) = raw
        .iter()
        .enumerate()
        .skip(1)
        .find(|(i, a)| {
            let prev_is_config = raw[i - 1] == "--config";
            !prev_is_config && a.to_str().is_some_and(|s| names.iter().any(|n| n == s))
        })
        .map(|(i, _)| i)
    else {
        // No subcommand: let clap report the usage error.
        return Ok(raw);
    };
    let sub_name = raw[sub_pos].to_str().expect("matched a subcommand name");
    let sub = cli.find_subcommand(sub_name).expect("known subcommand");

    let text = std::fs::read_to_string(&path)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let root: Value =
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let Value::Object(root) = root else {
        return Err(CliError::Config("top level must be a JSON object".into()));
    };

    let mut entries: BTreeMap<String, Value> = BTreeMap::new();
    for (k, v) in &root {
        if !names.contains(k) {
            entries.insert(flag_name(k), v.clone());
        }
    }
    let section = match root.get(sub_name) {
        Some(Value::Object(m)) => Some(m),
        Some(_) => return Err(CliError::Config(format!("section {sub_name:?} must be an object"))),
        None => None,
    };
    let section_keys: Vec<String> = section.map(|m| m.keys().map(|k| flag_name(k)).collect()).unwrap_or_default();
    for (k, v) in section.unwrap_or(&Map::new()) {
        entries.insert(flag_name(k), v.clone());
    }

    let mut injected = Vec::new();
    for (name, value) in entries {
        if name == "config" {
            continue;
        }
        let Some(arg) = sub.get_arguments().find(|a| a.get_long() == Some(name.as_str())) else {
            if section_keys.contains(&name) {
                return Err(CliError::Config(format!("{sub_name} has no option --{name}")));
            }
            // Flat keys meant for another subcommand.
            continue;
        };
        let flag = OsString::from(format!("--{name}"));
        match (arg.get_action(), &value) {
            (ArgAction::SetTrue, Value::Bool(true)) => injected.push(flag),
            (ArgAction::SetTrue, Value::Bool(false)) | (_, Value::Null) => {}
            (ArgAction::SetTrue, _) => {
                return Err(CliError::Config(format!("--{name} expects true or false")));
            }
            (_, Value::String(s)) => injected.extend([flag, s.into()]),
            (_, Value::Number(n)) => injected.extend([flag, n.to_string().into()]),
            (_, Value::Bool(b)) => injected.extend([flag, b.to_string().into()]),
            (_, _) => return Err(CliError::Config(format!("--{name}: unsupported value {value}"))),
        }
    }
    log::debug!("config {} supplies {:?}", path.display(), injected);

    let mut out = raw[..=sub_pos].to_vec();
    out.extend(injected);
    out.extend_from_slice(&raw[sub_pos + 1..]);
    Ok(out)
}

fn flag_name(key: &str) -> String {
    key.replace('_', "-")
}

fn config_path(raw: &[OsString]) -> Option<PathBuf> {
    let mut it = raw.iter().skip(1);
    while let Some(a) = it.next() {
        if a == "--" {
            break;
        }
        if a == "--config" {
            return it.next().map(PathBuf::from);
        }
        if let Some(v) = a.to_str().and_then(|s| s.strip_prefix("--config=")) {
            return Some(PathBuf::from(v));
        }
    }
    None
}
