//! Config files are TOML documents whose keys mirror the long flags. Keys at
//! the top level apply to every command; a table named after the command
//! applies to that command only. The values are spliced into the argument
//! list right after the command name, so flags given on the command line
//! (which come later) take precedence.

use std::path::Path;

use toml::Value;

fn flag_args(key: &str, value: &Value, out: &mut Vec<String>) -> Result<(), String> {
    let flag = format!("--{key}");
    match value {
        Value::Boolean(true) => out.push(flag),
        Value::Boolean(false) => {}
        Value::String(s) => {
            out.push(flag);
            out.push(s.clone());
        }
        Value::Integer(i) => {
            out.push(flag);
            out.push(i.to_string());
        }
        Value::Float(f) => {
            out.push(flag);
            out.push(f.to_string());
        }
        Value::Array(items) => {
            let parts: Result<Vec<String>, String> = items
                .iter()
                .map(|v| match v {
                    Value::String(s) => Ok(s.clone()),
                    Value::Integer(i) => Ok(i.to_string()),
                    Value::Float(f) => Ok(f.to_string()),
                    _ => Err(format!("config key '{key}': arrays may hold only strings and numbers")),
                })
                .collect();
            out.push(flag);
            out.push(parts?.join(","));
        }
        _ => return Err(format!("config key '{key}' has an unsupported value type")),
    }
    Ok(())
}

/// Flags contributed by the config file for `command`.
pub fn config_args(text: &str, command: &str) -> Result<Vec<String>, String> {
    let doc: toml::Table = text.parse().map_err(|e| format!("config file: {e}"))?;
    let mut out = Vec::new();
    for (key, value) in &doc {
        if !value.is_table() {
            flag_args(key, value, &mut out)?;
        }
    }
    if let Some(Value::Table(section)) = doc.get(command) {
        for (key, value) in section {
            flag_args(key, value, &mut out)?;
        }
    }
    Ok(out)
}

/// Finds `--config <path>` or `--config=<path>` in the raw arguments.
fn config_path(args: &[String]) -> Option<String> {
    let mut it = args.iter();
    while let Some(a) = it.next() {
        if a == "--config" {
            return it.next().cloned();
        }
        if let Some(p) = a.strip_prefix("--config=") {
            return Some(p.to_string());
        }
    }
    None
}

/// Rewrites the raw argument list with config-file flags inserted.
pub fn expand(args: Vec<String>, commands: &[&str]) -> Result<Vec<String>, String> {
    let Some(path) = config_path(&args) else {
        return Ok(args);
    };
    let Some(pos) = args.iter().position(|a| commands.contains(&a.as_str())) else {
        return Ok(args);
    };
    let text = std::fs::read_to_string(Path::new(&path)).map_err(|e| format!("cannot read config {path}: {e}"))?;
    let extra = config_args(&text, &args[pos])?;
    let mut out = args[..=pos].to_vec();
    out.extend(extra);
    out.extend_from_slice(&args[pos + 1..]);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sections_and_globals() {
        let text = "workers = 2\n[learn-dict]\nk = 64\nlambda = 0.2\nsizes = [64, 128]\nflag = true\noff = false\n[sweep]\nk = 9\n";
        let args = config_args(text, "learn-dict").unwrap();
        assert_eq!(args, ["--workers", "2", "--flag", "--k", "64", "--lambda", "0.2", "--sizes", "64,128"]);
        assert_eq!(config_args(text, "split").unwrap(), ["--workers", "2"]);
    }

    #[test]
    fn expansion_puts_file_flags_first() {
        let dir = std::env::temp_dir().join(format!("edmrec-cfg-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("c.toml");
        std::fs::write(&path, "[synth]\ncount = 5\n").unwrap();
        let args: Vec<String> = ["edmrec", "--config", path.to_str().unwrap(), "synth", "--count", "7"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let out = expand(args, &["synth"]).unwrap();
        assert_eq!(out[3..], ["synth", "--count", "5", "--count", "7"]);
        std::fs::remove_dir_all(dir).unwrap();
    }

    #[test]
    fn bad_values() {
        assert!(config_args("x = { a = 1 }\n[s]\ny = [true]", "s").is_err());
        assert!(config_args("not toml ===", "s").is_err());
    }
}
