//! Flat `key = value` config files layered under command-line flags.

use std::ffi::OsString;
use std::fs;
use std::path::Path;

use crate::CliError;

/// Parses `key = value` lines. Blank lines and `#` comments are skipped; a
/// leading `--` on a key is optional.
pub fn parse_config(text: &str, origin: &Path) -> Result<Vec<(String, String)>, CliError> {
    let mut out = Vec::new();
    for (no, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(CliError::usage(format!(
                "{}:{}: expected `key = value`, got `{line}`",
                origin.display(),
                no + 1
            )));
        };
        let key = key.trim().trim_start_matches("--");
        if key.is_empty() || key == "config" {
            return Err(CliError::usage(format!("{}:{}: invalid key `{key}`", origin.display(), no + 1)));
        }
        out.push((key.to_string(), value.trim().to_string()));
    }
    Ok(out)
}

fn flag_present(args: &[OsString], key: &str) -> bool {
    let long = format!("--{key}");
    let with_eq = format!("--{key}=");
    args.iter().any(|a| a.to_str().is_some_and(|s| s == long || s.starts_with(&with_eq)))
}

/// Value of `--config` if given, in either `--config PATH` or `--config=PATH`
/// form.
fn config_path(args: &[OsString]) -> Option<OsString> {
    let mut it = args.iter();
    while let Some(a) = it.next() {
        match a.to_str() {
            Some("--config") => return it.next().cloned(),
            Some(s) if s.starts_with("--config=") => return Some(OsString::from(&s["--config=".len()..])),
            _ => {}
        }
    }
    None
}

/// Appends `--key value` for every config entry whose flag is absent from
/// `args`. Boolean entries (`true`/`false`) become a bare flag or nothing.
pub fn merge_config(args: Vec<OsString>) -> Result<Vec<OsString>, CliError> {
    let Some(path) = config_path(&args) else {
        return Ok(args);
    };
    let path = Path::new(&path);
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::usage(format!("cannot read config file {}: {e}", path.display())))?;
    let entries = parse_config(&text, path)?;
    let mut merged = args;
    let mut extra = Vec::new();
    for (key, value) in entries {
        if flag_present(&merged, &key) {
            continue;
        }
        match value.as_str() {
            "true" => extra.push(OsString::from(format!("--{key}"))),
            "false" => {}
            _ => {
                extra.push(OsString::from(format!("--{key}")));
                extra.push(OsString::from(value));
            }
        }
    }
    merged.extend(extra);
    Ok(merged)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn os(v: &[&str]) -> Vec<OsString> {
        v.iter().map(OsString::from).collect()
    }

    #[test]
    fn parses_comments_and_prefixes() {
        let e = parse_config("# c\n\nseed = 4\n--n=10\n", Path::new("x")).unwrap();
        assert_eq!(e, vec![("seed".into(), "4".into()), ("n".into(), "10".into())]);
        assert!(parse_config("oops\n", Path::new("x")).is_err());
    }

    #[test]
    fn flags_win() {
        let args = os(&["covshift", "toy", "--seed", "1"]);
        assert!(flag_present(&args, "seed"));
        assert!(!flag_present(&args, "n"));
        assert!(flag_present(&os(&["--n=3"]), "n"));
        assert_eq!(config_path(&os(&["a", "--config=f.cfg"])), Some(OsString::from("f.cfg")));
    }
}
