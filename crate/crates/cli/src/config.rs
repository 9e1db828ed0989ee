//! Flat `key = value` config files, merged underneath command-line flags.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use clap::CommandFactory;

use crate::cli::Cli;

pub const GLOBAL_KEYS: [&str; 3] = ["out-dir", "format", "threads"];

/// Parses `key = value` lines; `#` starts a comment. Keys are normalized to
/// kebab-case.
pub fn parse(text: &str) -> Result<BTreeMap<String, String>, String> {
    let mut out = BTreeMap::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| format!("config line {}: expected key = value, got '{raw}'", n + 1))?;
        let key = k.trim().replace('_', "-");
        if key.is_empty() {
            return Err(format!("config line {}: empty key", n + 1));
        }
        out.insert(key, v.trim().to_string());
    }
    Ok(out)
}

fn config_path(args: &[String]) -> Result<Option<String>, String> {
    let mut it = args.iter();
    while let Some(a) = it.next() {
        if a == "--config" {
            return it.next().cloned().map(Some).ok_or_else(|| "--config needs a file path".to_string());
        }
        if let Some(p) = a.strip_prefix("--config=") {
            return Ok(Some(p.to_string()));
        }
    }
    Ok(None)
}

fn flag_given(args: &[String], key: &str) -> bool {
    let long = format!("--{key}");
    args.iter().any(|a| *a == long || a.starts_with(&format!("{long}=")))
}

/// Returns argv with config-file entries appended for every key not given
/// on the command line. Unknown keys are an error.
pub fn merge(args: Vec<String>) -> Result<Vec<String>, String> {
    let Some(path) = config_path(&args)? else { return Ok(args) };
    let text = fs::read_to_string(Path::new(&path)).map_err(|e| format!("cannot read config file {path}: {e}"))?;
    let entries = parse(&text)?;
    let cmd = Cli::command();
    let sub = args.iter().skip(1).find_map(|a| cmd.find_subcommand(a));
    let Some(sub) = sub else { return Ok(args) };
    let mut merged = args.clone();
    for (key, value) in entries {
        if flag_given(&args, &key) {
            continue;
        }
        let takes_value = if GLOBAL_KEYS.contains(&key.as_str()) {
            true
        } else {
            let arg = sub
                .get_arguments()
                .find(|a| a.get_long() == Some(key.as_str()))
                .ok_or_else(|| format!("config key '{key}' is not an option of '{}'", sub.get_name()))?;
            arg.get_action().takes_values()
        };
        if takes_value {
            merged.push(format!("--{key}={value}"));
        } else {
            match value.as_str() {
                "true" => merged.push(format!("--{key}")),
                "false" => {}
                _ => return Err(format!("config key '{key}' is a switch; use true or false, got '{value}'")),
            }
        }
    }
    Ok(merged)
}

/// Renders a serialized argument struct as a replayable config file.
pub fn render(subcommand: &str, args: &serde_json::Value, note: &str) -> String {
    let mut out = String::new();
    for line in note.lines() {
        out.push_str(&format!("# {line}\n"));
    }
    out.push_str(&format!("# replay: sle-lab {subcommand} --config <this file>\n"));
    if let Some(map) = args.as_object() {
        for (k, v) in map {
            let value = match v {
                serde_json::Value::Null => continue,
                serde_json::Value::String(s) => s.clone(),
                serde_json::Value::Array(xs) => xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(","),
                other => other.to_string(),
            };
            out.push_str(&format!("{} = {value}\n", k.replace('_', "-")));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn argv(s: &str) -> Vec<String> {
        s.split_whitespace().map(String::from).collect()
    }

    #[test]
    fn parses_comments_and_underscores() {
        let m = parse("# header\nkappa = 2.5  # inline\n\nkappa_tildes=2.4,2.2\n").unwrap();
        assert_eq!(m["kappa"], "2.5");
        assert_eq!(m["kappa-tildes"], "2.4,2.2");
        assert!(parse("novalue\n").is_err());
    }

    #[test]
    fn flags_override_file_entries() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("run.conf");
        fs::write(&p, "kappa = 3\nsteps = 64\nseed = 9\n").unwrap();
        let args = argv(&format!("sle-lab trace --config {} --kappa 2", p.display()));
        let merged = merge(args).unwrap();
        assert!(merged.contains(&"--steps=64".to_string()));
        assert!(merged.contains(&"--seed=9".to_string()));
        assert!(!merged.iter().any(|a| a == "--kappa=3"));
    }

    #[test]
    fn unknown_key_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("run.conf");
        fs::write(&p, "bogus = 1\n").unwrap();
        let err = merge(argv(&format!("sle-lab trace --config {}", p.display()))).unwrap_err();
        assert!(err.contains("bogus"));
    }

    #[test]
    fn render_round_trips_through_parse() {
        let v = serde_json::json!({"kappa": 2.0, "ys": [0.4, 0.2], "y0": null, "estimator": "median-of-means"});
        let text = render("verify-fprime", &v, "failed");
        let m = parse(&text).unwrap();
        assert_eq!(m["kappa"], "2.0");
        assert_eq!(m["ys"], "0.4,0.2");
        assert!(!m.contains_key("y0"));
    }
}
