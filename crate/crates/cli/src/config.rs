//! Batch configuration: a flat TOML table whose keys are long flag names.
//!
//! Config entries are spliced into argv ahead of the explicit flags, and
//! every argument overrides itself, so flags given on the command line win.

use std::ffi::OsString;
use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use toml::{Table, Value};

pub const GLOBAL_FLAGS: [&str; 3] = ["out-dir", "threads", "config"];
pub const SUBCOMMANDS: [&str; 6] = ["recur", "wave", "mc", "discrete", "size", "series"];

/// Returns argv with the entries of the `--config` file, if any, inserted.
pub fn merge(args: Vec<OsString>) -> Result<Vec<OsString>> {
    let Some(path) = config_path(&args) else {
        return Ok(args);
    };
    let text = fs::read_to_string(&path).with_context(|| format!("reading config {}", path.display()))?;
    let table: Table = text
        .parse()
        .with_context(|| format!("parsing config {}", path.display()))?;

    let mut global = Vec::new();
    let mut local = Vec::new();
    for (key, value) in &table {
        let flag = key.replace('_', "-");
        if flag == "config" {
            bail!("config files cannot include other config files");
        }
        let target = if GLOBAL_FLAGS.contains(&flag.as_str()) {
            &mut global
        } else {
            &mut local
        };
        push_flag(target, &flag, value).with_context(|| format!("config key `{key}`"))?;
    }

    let mut out = Vec::with_capacity(args.len() + global.len() + local.len());
    let mut rest = args.into_iter();
    out.extend(rest.next());
    out.extend(global);
    let mut pending = local.into_iter();
    let mut after_value = false;
    for arg in rest {
        let is_sub = !after_value && arg.to_str().is_some_and(|s| SUBCOMMANDS.contains(&s));
        after_value = takes_value(&arg);
        out.push(arg);
        if is_sub {
            out.extend(pending.by_ref());
        }
    }
    // no subcommand: leave the remainder for clap to reject
    out.extend(pending);
    Ok(out)
}

fn takes_value(arg: &OsString) -> bool {
    arg.to_str()
        .and_then(|s| s.strip_prefix("--"))
        .is_some_and(|f| GLOBAL_FLAGS.contains(&f))
}

fn config_path(args: &[OsString]) -> Option<std::path::PathBuf> {
    let mut iter = args.iter().skip(1);
    while let Some(arg) = iter.next() {
        let s = arg.to_str()?;
        if s == "--config" {
            return iter.next().map(|p| Path::new(p).to_path_buf());
        }
        if let Some(p) = s.strip_prefix("--config=") {
            return Some(p.into());
        }
    }
    None
}

fn scalar(value: &Value) -> Result<String> {
    Ok(match value {
        Value::String(s) => s.clone(),
        Value::Integer(i) => i.to_string(),
        Value::Float(f) => format!("{f:?}"),
        _ => bail!("expected a string or number"),
    })
}

fn push_flag(out: &mut Vec<OsString>, flag: &str, value: &Value) -> Result<()> {
    match value {
        Value::Boolean(true) => out.push(format!("--{flag}").into()),
        Value::Boolean(false) => {}
        Value::Array(items) => {
            let parts = items.iter().map(scalar).collect::<Result<Vec<_>>>()?;
            out.push(format!("--{flag}={}", parts.join(",")).into());
        }
        other => out.push(format!("--{flag}={}", scalar(other)?).into()),
    }
    Ok(())
}
