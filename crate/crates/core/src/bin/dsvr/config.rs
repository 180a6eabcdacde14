//! `--config` support: TOML values become flags the command line lacks.

use std::collections::BTreeSet;
use std::ffi::OsString;
use std::path::PathBuf;

use clap::Command;
use dsvr::Error;

use crate::commands::CliError;

const GLOBALS: [&str; 2] = ["config", "threads"];

fn longs(cmd: &Command) -> BTreeSet<String> {
    cmd.get_arguments()
        .filter_map(|a| a.get_long().map(str::to_string))
        .collect()
}

fn takes_value(cmd: &Command, long: &str) -> bool {
    cmd.get_arguments()
        .find(|a| a.get_long() == Some(long))
        .is_some_and(|a| a.get_action().takes_values())
}

fn given(args: &[OsString], long: &str) -> bool {
    let flag = format!("--{long}");
    let prefix = format!("--{long}=");
    args.iter()
        .filter_map(|a| a.to_str())
        .any(|a| a == flag || a.starts_with(&prefix))
}

fn render(cmd: &Command, long: &str, value: &toml::Value, out: &mut Vec<OsString>) -> Result<(), Error> {
    let flag = || OsString::from(format!("--{long}"));
    match value {
        toml::Value::Boolean(b) if !takes_value(cmd, long) => {
            if *b {
                out.push(flag());
            }
        }
        toml::Value::Array(items) => {
            for item in items {
                render(cmd, long, item, out)?;
            }
        }
        toml::Value::Table(_) => {
            return Err(Error::Validation(format!("config key {long:?} must not be a table")));
        }
        toml::Value::String(s) => {
            out.push(flag());
            out.push(s.into());
        }
        other => {
            out.push(flag());
            out.push(other.to_string().into());
        }
    }
    Ok(())
}

fn locate(raw: &[OsString], root: &Command) -> (Option<PathBuf>, Option<usize>) {
    let mut config = None;
    let mut sub = None;
    let mut i = 1;
    while i < raw.len() {
        let a = raw[i].to_string_lossy();
        if a == "--config" {
            config = raw.get(i + 1).map(PathBuf::from);
            i += 2;
            continue;
        }
        if let Some(p) = a.strip_prefix("--config=") {
            config = Some(PathBuf::from(p));
        } else if a == "--threads" {
            i += 2;
            continue;
        } else if sub.is_none() && !a.starts_with('-') && root.find_subcommand(a.as_ref()).is_some() {
            sub = Some(i);
        }
        i += 1;
    }
    (config, sub)
}

/// Returns `raw` with flags from the `--config` file inserted after the
/// subcommand name. Keys may be written with dashes or underscores.
pub fn merge_config(raw: Vec<OsString>, root: &Command) -> Result<Vec<OsString>, CliError> {
    let (Some(path), Some(at)) = locate(&raw, root) else {
        return Ok(raw);
    };
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let table: toml::Table = text
        .parse()
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    let name = raw[at].to_string_lossy().into_owned();
    let cmd = root.find_subcommand(&name).expect("located subcommand");
    let known = longs(cmd);
    let anywhere: BTreeSet<String> = root.get_subcommands().flat_map(longs).collect();

    let mut entries: Vec<(String, &toml::Value)> = Vec::new();
    for (key, value) in &table {
        let key = key.replace('_', "-");
        match value {
            toml::Value::Table(section) => {
                if root.find_subcommand(&key).is_none() {
                    return Err(Error::Validation(format!("config table [{key}] names no command")).into());
                }
                if key != name {
                    continue;
                }
                for (k, v) in section {
                    let k = k.replace('_', "-");
                    if !known.contains(&k) {
                        return Err(Error::Validation(format!("config key {k:?} is not a flag of {name}")).into());
                    }
                    entries.retain(|(e, _)| *e != k);
                    entries.push((k, v));
                }
            }
            _ if GLOBALS.contains(&key.as_str()) => {
                if key == "threads" {
                    entries.push((key, value));
                }
            }
            _ if known.contains(&key) => {
                if !entries.iter().any(|(e, _)| *e == key) {
                    entries.push((key, value));
                }
            }
            _ if anywhere.contains(&key) => {}
            _ => return Err(Error::Validation(format!("config key {key:?} is not a flag of any command")).into()),
        }
    }

    let mut extra = Vec::new();
    for (key, value) in entries {
        if given(&raw, &key) {
            continue;
        }
        if key == "threads" {
            extra.push(OsString::from("--threads"));
            extra.push(value.to_string().into());
        } else {
            render(cmd, &key, value, &mut extra)?;
        }
    }
    let mut out = raw;
    out.splice(at + 1..at + 1, extra);
    Ok(out)
}
