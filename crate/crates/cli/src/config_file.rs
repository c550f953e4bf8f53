//! `--config FILE`: `key = value` lines mirroring long flags. Values from
//! the file are inserted right after the subcommand, so flags given on the
//! command line still win.

use std::ffi::OsString;
use std::path::Path;

use anyhow::{bail, Context, Result};

pub fn parse(text: &str, origin: &Path) -> Result<Vec<OsString>> {
    let mut args = Vec::new();
    for (no, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            bail!("{}:{}: expected `key = value`", origin.display(), no + 1);
        };
        let key = key.trim().replace('_', "-");
        let value = value.trim().trim_matches('"');
        if key.is_empty() || key == "config" {
            bail!("{}:{}: invalid key", origin.display(), no + 1);
        }
        match value {
            "true" => args.push(format!("--{key}").into()),
            "false" => {}
            _ => {
                args.push(format!("--{key}").into());
                args.push(value.into());
            }
        }
    }
    Ok(args)
}

/// Removes `--config FILE` from `argv` and splices the file's flags in after
/// the subcommand.
pub fn splice(argv: Vec<OsString>) -> Result<Vec<OsString>> {
    let mut out = Vec::with_capacity(argv.len());
    let mut config = None;
    let mut iter = argv.into_iter();
    while let Some(arg) = iter.next() {
        let text = arg.to_string_lossy();
        if text == "--config" {
            config = Some(iter.next().context("--config needs a file")?);
        } else if let Some(path) = text.strip_prefix("--config=") {
            config = Some(path.into());
        } else {
            out.push(arg);
        }
    }
    let Some(path) = config else { return Ok(out) };
    let path = Path::new(&path);
    let text = std::fs::read_to_string(path).with_context(|| format!("reading config file {}", path.display()))?;
    let extra = parse(&text, path)?;
    let at = out
        .iter()
        .skip(1)
        .position(|a| !a.to_string_lossy().starts_with('-'))
        .map_or(out.len(), |i| i + 2);
    out.splice(at..at, extra);
    Ok(out)
}
