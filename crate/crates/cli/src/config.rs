//! `--config` files: a JSON object whose keys are long option names.
//!
//! Top-level scalar keys apply to every subcommand that accepts them; an
//! object keyed by a subcommand name applies to that subcommand only, and
//! there unknown keys are an error. Values are spliced into the argument
//! list ahead of the user's own arguments, so explicit flags win.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::Command;
use serde_json::{Map, Value};

#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

/// Path given by `--config`, if any.
fn config_path(args: &[OsString]) -> Option<PathBuf> {
    let mut it = args.iter().skip(1);
    while let Some(a) = it.next() {
        let s = a.to_string_lossy();
        if s == "--" {
            return None;
        }
        if s == "--config" {
            return it.next().map(PathBuf::from);
        }
        if let Some(p) = s.strip_prefix("--config=") {
            return Some(PathBuf::from(p));
        }
    }
    None
}

fn long_names(cmd: &Command) -> Vec<String> {
    cmd.get_arguments()
        .filter_map(|a| a.get_long().map(str::to_string))
        .collect()
}

fn push_value(out: &mut Vec<OsString>, flag: &str, value: &Value) -> Result<(), ConfigError> {
    match value {
        Value::Bool(true) => out.push(format!("--{flag}").into()),
        Value::Bool(false) | Value::Null => {}
        Value::String(s) => {
            out.push(format!("--{flag}").into());
            out.push(s.into());
        }
        Value::Number(n) => {
            out.push(format!("--{flag}").into());
            out.push(n.to_string().into());
        }
        Value::Array(items) => {
            for item in items {
                push_value(out, flag, item)?;
            }
        }
        Value::Object(_) => {
            return Err(ConfigError(format!("config key `{flag}` must not be an object")))
        }
    }
    Ok(())
}

/// Expand `--config` into explicit arguments. Returns `args` unchanged when
/// no config file is given or no subcommand is present.
pub fn merge(args: Vec<OsString>, cmd: &Command) -> Result<Vec<OsString>, ConfigError> {
    let Some(path) = config_path(&args) else {
        return Ok(args);
    };
    let text = std::fs::read_to_string(&path)
        .map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
    let root: Map<String, Value> = match serde_json::from_str(&text) {
        Ok(Value::Object(m)) => m,
        Ok(_) => return Err(ConfigError(format!("{}: expected a JSON object", path.display()))),
        Err(e) => return Err(ConfigError(format!("{}: {e}", path.display()))),
    };

    let Some((pos, sub)) = args.iter().enumerate().skip(1).find_map(|(i, a)| {
        cmd.find_subcommand(a.to_string_lossy().as_ref()).map(|s| (i, s))
    }) else {
        return Ok(args);
    };
    let mut known = long_names(sub);
    known.extend(long_names(cmd));
    let canonical = |key: &str| key.replace('_', "-");

    let mut injected = Vec::new();
    for (key, value) in &root {
        let flag = canonical(key);
        if flag == "config" || value.is_object() || !known.contains(&flag) {
            continue;
        }
        push_value(&mut injected, &flag, value)?;
    }
    if let Some(section) = root.get(sub.get_name()) {
        let Value::Object(section) = section else {
            return Err(ConfigError(format!("config section `{}` must be an object", sub.get_name())));
        };
        for (key, value) in section {
            let flag = canonical(key);
            if !known.contains(&flag) {
                return Err(ConfigError(format!(
                    "config section `{}`: unknown option `{key}`",
                    sub.get_name()
                )));
            }
            push_value(&mut injected, &flag, value)?;
        }
    }

    let mut out = args;
    out.splice(pos + 1..pos + 1, injected);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::Arg;

    fn cmd() -> Command {
        Command::new("t")
            .arg(Arg::new("config").long("config").global(true))
            .arg(Arg::new("jobs").long("jobs").global(true))
            .subcommand(
                Command::new("run")
                    .arg(Arg::new("seed").long("seed"))
                    .arg(Arg::new("fast").long("fast").action(clap::ArgAction::SetTrue)),
            )
    }

    fn strings(v: &[OsString]) -> Vec<String> {
        v.iter().map(|s| s.to_string_lossy().into_owned()).collect()
    }

    #[test]
    fn splices_before_user_args() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        std::fs::write(&path, r#"{"jobs": 3, "other": 1, "run": {"seed": 9, "fast": true}}"#).unwrap();
        let args: Vec<OsString> = ["t", "--config", path.to_str().unwrap(), "run", "--seed", "1"]
            .iter()
            .map(OsString::from)
            .collect();
        let merged = strings(&merge(args, &cmd()).unwrap());
        assert_eq!(
            &merged[3..],
            ["run", "--jobs", "3", "--fast", "--seed", "9", "--seed", "1"]
        );
    }

    #[test]
    fn unknown_section_key_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        std::fs::write(&path, r#"{"run": {"sed": 9}}"#).unwrap();
        let args: Vec<OsString> = ["t", "run", "--config", path.to_str().unwrap()]
            .iter()
            .map(OsString::from)
            .collect();
        assert!(merge(args, &cmd()).is_err());
    }
}
