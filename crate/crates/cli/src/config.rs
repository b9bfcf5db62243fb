//! Flat `key = value` run configuration.
//!
//! Keys are the subcommand's long flag names. The file is spliced into the
//! argument list ahead of the real flags, and every subcommand lets a later
//! occurrence override an earlier one, so flags beat the file and the file
//! beats the defaults.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::Path;

use clap::{ArgAction, CommandFactory};

use crate::args::Cli;
use crate::CliError;

pub fn parse(text: &str) -> Result<BTreeMap<String, String>, CliError> {
    let mut out = BTreeMap::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("config line {}: expected key = value", n + 1)))?;
        let (key, value) = (key.trim(), value.trim());
        if key.is_empty() || value.is_empty() {
            return Err(CliError::Usage(format!("config line {}: empty key or value", n + 1)));
        }
        if out.insert(key.to_string(), value.to_string()).is_some() {
            return Err(CliError::Usage(format!("config line {}: duplicate key {key}", n + 1)));
        }
    }
    Ok(out)
}

/// Config path and subcommand name as they appear in `args`, without
/// running the full parser.
fn locate(args: &[OsString]) -> (Option<OsString>, Option<String>) {
    let mut config = None;
    let mut sub = None;
    let mut it = args.iter().skip(1);
    while let Some(a) = it.next() {
        let s = a.to_string_lossy();
        if s == "--config" {
            config = it.next().cloned();
        } else if let Some(v) = s.strip_prefix("--config=") {
            config = Some(v.into());
        } else if sub.is_none() && !s.starts_with('-') {
            sub = Some(s.into_owned());
        }
    }
    (config, sub)
}

/// Returns `args` with the config file's entries inserted right after the
/// subcommand name.
pub fn expand(args: Vec<OsString>) -> Result<Vec<OsString>, CliError> {
    let (Some(path), Some(sub)) = locate(&args) else {
        return Ok(args);
    };
    let path = Path::new(&path);
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let entries = parse(&text)?;

    let cmd = Cli::command();
    let Some(sc) = cmd.find_subcommand(&sub) else {
        // unknown subcommand: let clap report it
        return Ok(args);
    };
    let mut injected = Vec::new();
    for (key, value) in &entries {
        let arg = sc
            .get_arguments()
            .find(|a| a.get_long() == Some(key.as_str()) && a.get_id() != "config" && a.get_id() != "help")
            .ok_or_else(|| CliError::Usage(format!("unknown config key {key} for {sub}")))?;
        if matches!(arg.get_action(), ArgAction::SetTrue) {
            match value.as_str() {
                "true" => injected.push(OsString::from(format!("--{key}"))),
                "false" => {}
                _ => return Err(CliError::Usage(format!("config key {key} takes true or false"))),
            }
        } else {
            injected.push(OsString::from(format!("--{key}={value}")));
        }
    }
    let at = args
        .iter()
        .position(|a| a.to_string_lossy() == sub)
        .expect("subcommand located above");
    let mut out = args[..=at].to_vec();
    out.extend(injected);
    out.extend_from_slice(&args[at + 1..]);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn os(v: &[&str]) -> Vec<OsString> {
        v.iter().map(OsString::from).collect()
    }

    #[test]
    fn parses_comments_and_whitespace() {
        let m = parse("# sweep arm\n\nseed = 4\n  lambda1=0.5  \n").unwrap();
        assert_eq!(m.len(), 2);
        assert_eq!(m["seed"], "4");
        assert_eq!(m["lambda1"], "0.5");
    }

    #[test]
    fn rejects_malformed_lines() {
        for text in ["seed", "= 4", "seed =", "seed = 1\nseed = 2"] {
            assert!(parse(text).is_err(), "{text:?}");
        }
    }

    #[test]
    fn locates_config_anywhere() {
        let (c, s) = locate(&os(&["apr", "train", "--seed", "1", "--config", "x.conf"]));
        assert_eq!((c.unwrap(), s.unwrap()), (OsString::from("x.conf"), "train".to_string()));
        let (c, s) = locate(&os(&["apr", "--config=y", "distill"]));
        assert_eq!((c.unwrap(), s.unwrap()), (OsString::from("y"), "distill".to_string()));
        assert_eq!(locate(&os(&["apr", "distill"])).0, None);
    }
}
