//! Flat `key = value` config files merged under command-line flags.
//!
//! File entries are turned into `--key=value` arguments placed before the
//! user's own flags; clap keeps the last occurrence, so flags win over the
//! file and the file wins over built-in defaults.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};

/// Parses `key = value` lines. `#` starts a comment; blank lines are ignored.
pub fn parse_config_file(path: &Path) -> Result<Vec<(String, String)>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading config file {}", path.display()))?;
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            bail!("{}:{}: expected `key = value`", path.display(), i + 1);
        };
        let key = k.trim().replace('_', "-");
        if key.is_empty() || key == "config" {
            bail!("{}:{}: invalid key `{}`", path.display(), i + 1, k.trim());
        }
        out.push((key, v.trim().to_string()));
    }
    Ok(out)
}

/// Finds `--config <path>` or `--config=<path>` in raw arguments.
pub fn find_config_path(args: &[String]) -> Option<PathBuf> {
    let mut it = args.iter();
    while let Some(a) = it.next() {
        if a == "--config" {
            return it.next().map(PathBuf::from);
        }
        if let Some(p) = a.strip_prefix("--config=") {
            return Some(PathBuf::from(p));
        }
    }
    None
}

/// Inserts file entries right after the subcommand name.
pub fn merge_args(args: Vec<String>, entries: &[(String, String)]) -> Vec<String> {
    let Some(pos) = args.iter().skip(1).position(|a| !a.starts_with('-')).map(|p| p + 1) else {
        return args;
    };
    let mut merged = args[..=pos].to_vec();
    merged.extend(entries.iter().map(|(k, v)| format!("--{k}={v}")));
    merged.extend_from_slice(&args[pos + 1..]);
    merged
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_entries_precede_flags() {
        let args: Vec<String> = ["catvrnn", "train", "--epochs", "3"].map(String::from).to_vec();
        let merged = merge_args(args, &[("epochs".into(), "9".into()), ("hidden-dim".into(), "4".into())]);
        assert_eq!(merged, ["catvrnn", "train", "--epochs=9", "--hidden-dim=4", "--epochs", "3"]);
    }

    #[test]
    fn parses_comments_and_underscores() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("run.conf");
        std::fs::write(&p, "# run\nhidden_dim = 32\n\nkl = true # on\n").unwrap();
        let e = parse_config_file(&p).unwrap();
        assert_eq!(e, vec![("hidden-dim".to_string(), "32".to_string()), ("kl".to_string(), "true".to_string())]);
        std::fs::write(&p, "oops\n").unwrap();
        assert!(parse_config_file(&p).is_err());
    }

    #[test]
    fn finds_config_path() {
        let a: Vec<String> = ["x", "train", "--config=a.conf"].map(String::from).to_vec();
        assert_eq!(find_config_path(&a), Some(PathBuf::from("a.conf")));
        let b: Vec<String> = ["x", "train", "--config", "b.conf"].map(String::from).to_vec();
        assert_eq!(find_config_path(&b), Some(PathBuf::from("b.conf")));
    }
}
