//! `key=value` config files. Every entry becomes `--key=value` inserted right
//! after the subcommand name, so anything given on the command line (which
//! comes later) wins.

use std::collections::BTreeSet;
use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::Command;
use rolemodel::Error;

pub fn parse_config(text: &str, path: &Path) -> Result<Vec<(String, String)>, Error> {
    let mut out = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(Error::Data {
                path: path.display().to_string(),
                message: format!("line {}: expected key=value", lineno + 1),
            });
        };
        let key = k.trim().trim_start_matches("--").replace('_', "-");
        out.push((key, v.trim().to_string()));
    }
    Ok(out)
}

/// The `config` object of a manifest written by an earlier run.
pub fn manifest_entries(text: &str, path: &Path) -> Result<Vec<(String, String)>, Error> {
    let bad = |message: String| Error::Data { path: path.display().to_string(), message };
    let value: serde_json::Value = serde_json::from_str(text).map_err(|e| bad(e.to_string()))?;
    let Some(obj) = value.get("config").and_then(|c| c.as_object()) else {
        return Err(bad("no \"config\" object".into()));
    };
    let scalar = |v: &serde_json::Value| match v {
        serde_json::Value::String(s) => Some(s.clone()),
        serde_json::Value::Null => None,
        other => Some(other.to_string()),
    };
    let mut out = Vec::new();
    for (k, v) in obj {
        let text = match v {
            serde_json::Value::Array(items) => Some(items.iter().filter_map(scalar).collect::<Vec<_>>().join(",")),
            other => scalar(other),
        };
        if let Some(t) = text {
            out.push((k.clone(), t));
        }
    }
    Ok(out)
}

/// Path given with `--config`, wherever it appears.
fn config_path(argv: &[OsString]) -> Option<PathBuf> {
    let mut it = argv.iter().skip(1);
    while let Some(a) = it.next() {
        let s = a.to_string_lossy();
        if s == "--config" {
            return it.next().map(PathBuf::from);
        }
        if let Some(p) = s.strip_prefix("--config=") {
            return Some(PathBuf::from(p));
        }
    }
    None
}

fn long_names(cmd: &Command) -> BTreeSet<String> {
    cmd.get_arguments().filter_map(|a| a.get_long().map(str::to_string)).collect()
}

/// Splice the config file's entries into `argv` for the chosen subcommand.
/// Keys that belong to other subcommands are skipped so one file can serve
/// several commands; keys no subcommand knows are an error.
pub fn merge_config(argv: Vec<OsString>, cmd: &Command) -> Result<Vec<OsString>, Error> {
    let Some(path) = config_path(&argv) else {
        return Ok(argv);
    };
    if !path.exists() {
        return Err(Error::MissingFile(path));
    }
    let text = std::fs::read_to_string(&path)?;
    let entries = if path.extension().is_some_and(|e| e == "json") {
        manifest_entries(&text, &path)?
    } else {
        parse_config(&text, &path)?
    };

    let names: Vec<String> = cmd.get_subcommands().map(|s| s.get_name().to_string()).collect();
    let Some(pos) = argv.iter().position(|a| names.iter().any(|n| a.to_string_lossy() == *n)) else {
        return Ok(argv);
    };
    let sub_name = argv[pos].to_string_lossy().to_string();
    let sub = cmd.find_subcommand(&sub_name).expect("matched above");
    let here = long_names(sub);
    let mut anywhere = long_names(cmd);
    for s in cmd.get_subcommands() {
        anywhere.extend(long_names(s));
    }

    let mut injected = Vec::new();
    for (k, v) in entries {
        if k == "config" {
            continue;
        }
        if here.contains(&k) {
            injected.push(OsString::from(format!("--{k}={v}")));
        } else if !anywhere.contains(&k) {
            return Err(Error::Config(format!("{}: unknown key {k:?}", path.display())));
        }
    }
    let mut out = argv;
    let tail = out.split_off(pos + 1);
    out.extend(injected);
    out.extend(tail);
    Ok(out)
}
