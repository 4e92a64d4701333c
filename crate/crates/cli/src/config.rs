//! `--config` support. The file uses the flag names as keys: top-level
//! scalars are global flags, and a table named after the subcommand holds
//! that subcommand's flags. Config values are spliced into argv ahead of the
//! user's own arguments, so anything given on the command line wins.

use std::ffi::OsString;
use std::path::Path;

use toml::{Table, Value};

const GLOBALS: [&str; 4] = ["seed", "threads", "output", "format"];
const VALUED_GLOBALS: [&str; 5] = ["--seed", "--threads", "--output", "--format", "--config"];

pub fn load(path: &Path) -> Result<Table, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
    text.parse::<Table>()
        .map_err(|e| format!("invalid config {}: {e}", path.display()))
}

fn push_flag(out: &mut Vec<OsString>, key: &str, value: &Value) -> Result<(), String> {
    let flag = format!("--{key}");
    let text = match value {
        Value::Boolean(true) => {
            out.push(flag.into());
            return Ok(());
        }
        Value::Boolean(false) => return Ok(()),
        Value::String(s) => s.clone(),
        Value::Integer(i) => i.to_string(),
        Value::Float(f) => f.to_string(),
        Value::Array(items) => items
            .iter()
            .map(|v| match v {
                Value::Integer(i) => Ok(i.to_string()),
                Value::Float(f) => Ok(f.to_string()),
                Value::String(s) => Ok(s.clone()),
                other => Err(format!("config key {key:?}: unsupported list item {other}")),
            })
            .collect::<Result<Vec<_>, _>>()?
            .join(","),
        other => return Err(format!("config key {key:?}: unsupported value {other}")),
    };
    out.push(flag.into());
    out.push(text.into());
    Ok(())
}

/// Position of the subcommand token in `argv`, skipping values of global
/// options.
fn subcommand_index(argv: &[OsString], name: &str) -> Option<usize> {
    let mut skip = false;
    for (i, a) in argv.iter().enumerate().skip(1) {
        if skip {
            skip = false;
            continue;
        }
        let a = a.to_string_lossy();
        if VALUED_GLOBALS.contains(&a.as_ref()) {
            skip = true;
        } else if a == name {
            return Some(i);
        }
    }
    None
}

/// `argv` rewritten as `bin sub <config flags> <user args>`.
pub fn splice(argv: &[OsString], subcommand: &str, table: &Table) -> Result<Vec<OsString>, String> {
    let sub_at = subcommand_index(argv, subcommand).ok_or("cannot locate the subcommand in the arguments")?;
    let mut out = vec![argv[0].clone(), argv[sub_at].clone()];
    for (key, value) in table {
        match value {
            Value::Table(t) if key == subcommand => {
                for (k, v) in t {
                    push_flag(&mut out, k, v)?;
                }
            }
            Value::Table(_) => {}
            v if GLOBALS.contains(&key.as_str()) => push_flag(&mut out, key, v)?,
            _ => return Err(format!("unknown top-level config key {key:?}")),
        }
    }
    out.extend(argv[1..sub_at].iter().cloned());
    out.extend(argv[sub_at + 1..].iter().cloned());
    Ok(out)
}
