use std::fs;
use std::path::Path;

use anyhow::{anyhow, Context};
use offset_core::estimators::{FunctionClass, Sample};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};

use crate::{usage, CliError};

/// Data CSV rows start on line 2, after the header.
const FIRST_DATA_LINE: usize = 2;

impl From<offset_core::Error> for CliError {
    fn from(e: offset_core::Error) -> Self {
        CliError::Runtime(core_error(e))
    }
}

/// Per-example errors name the CSV line of the offending row.
pub fn core_error(e: offset_core::Error) -> anyhow::Error {
    match e {
        offset_core::Error::AtExample { index, source } => {
            anyhow!("line {}: {}", index + FIRST_DATA_LINE, source)
        }
        other => anyhow!(other),
    }
}

/// Reads a sample with header `x1,...,xd,y`.
pub fn read_sample(path: &Path) -> Result<Sample, CliError> {
    let mut reader = csv::ReaderBuilder::new()
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .with_context(|| format!("cannot open {}", path.display()))?;
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    let d = header.len().saturating_sub(1);
    let expected: Vec<String> = (1..=d)
        .map(|j| format!("x{j}"))
        .chain(std::iter::once("y".to_string()))
        .collect();
    if header != expected {
        return Err(anyhow!(
            "line 1: header must be {}, got {}",
            expected.join(","),
            header.join(",")
        )
        .into());
    }
    let mut features = Vec::new();
    let mut targets = Vec::new();
    for record in reader.records() {
        let record = record?;
        let line = record
            .position()
            .map(|p| p.line() as usize)
            .unwrap_or(features.len() + FIRST_DATA_LINE);
        if record.len() != d + 1 {
            return Err(anyhow!(
                "line {line}: expected {} fields, got {}",
                d + 1,
                record.len()
            )
            .into());
        }
        let mut row = Vec::with_capacity(d + 1);
        for (field, name) in record.iter().zip(&header) {
            let v: f64 = field
                .parse()
                .map_err(|_| anyhow!("line {line}: {name} = {field:?} is not a number"))?;
            if !v.is_finite() {
                return Err(anyhow!("line {line}: {name} is not finite").into());
            }
            row.push(v);
        }
        targets.push(row.pop().expect("row has y"));
        features.push(row);
    }
    if targets.is_empty() {
        return Err(anyhow!("{}: no data rows", path.display()).into());
    }
    Ok(Sample::new(features, targets)?)
}

pub fn read_json(path: &Path) -> Result<Value, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| usage(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| usage(format!("{}: invalid JSON: {e}", path.display())))
}

pub fn read_class(path: &Path) -> Result<FunctionClass, CliError> {
    let value = read_json(path)?;
    let class: FunctionClass = serde_json::from_value(value)
        .map_err(|e| anyhow!("{}: invalid class specification: {e}", path.display()))?;
    class.validate()?;
    Ok(class)
}

/// Overlays `flags` onto the settings file and checks the keys.
pub fn merge_settings(
    file: Option<&Path>,
    flags: Value,
    known: &[&str],
) -> Result<Map<String, Value>, CliError> {
    let mut merged = match file {
        Some(path) => match read_json(path)? {
            Value::Object(map) => map,
            _ => {
                return Err(usage(format!(
                    "{}: settings must be a JSON object",
                    path.display()
                )))
            }
        },
        None => Map::new(),
    };
    if let Value::Object(flags) = flags {
        for (k, v) in flags {
            if !v.is_null() {
                merged.insert(k, v);
            }
        }
    }
    if let Some(bad) = merged.keys().find(|k| !known.contains(&k.as_str())) {
        return Err(usage(format!("unknown setting `{bad}`")));
    }
    Ok(merged)
}

pub fn require(map: &Map<String, Value>, keys: &[&str]) -> Result<(), CliError> {
    match keys.iter().find(|k| !map.contains_key(**k)) {
        Some(k) => Err(usage(format!("missing parameter: {k}"))),
        None => Ok(()),
    }
}

pub fn decode<T: DeserializeOwned>(map: Map<String, Value>) -> Result<T, CliError> {
    serde_json::from_value(Value::Object(map)).map_err(|e| usage(format!("invalid settings: {e}")))
}

/// JSON with sorted keys; NaN and infinities become null.
pub fn to_value<T: Serialize>(v: &T) -> Result<Value, CliError> {
    Ok(serde_json::to_value(v)?)
}

/// Every JSON document carries the tool version, resolved settings and seed.
pub fn envelope(command: &str, seed: u64, config: Value, result: Value) -> Value {
    let mut map = Map::new();
    map.insert("tool".into(), Value::from("offset"));
    map.insert("version".into(), Value::from(env!("CARGO_PKG_VERSION")));
    map.insert("command".into(), Value::from(command));
    map.insert("seed".into(), Value::from(seed));
    map.insert("config".into(), config);
    map.insert("result".into(), result);
    Value::Object(map)
}

pub fn json_text(value: &Value) -> Result<String, CliError> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    Ok(text)
}

/// Writes to `out` (creating parent directories) or stdout.
pub fn emit(out: Option<&Path>, text: &str) -> Result<(), CliError> {
    match out {
        Some(path) => {
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir)?;
            }
            fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))?;
        }
        None => print!("{text}"),
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn csv_file(text: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(text.as_bytes()).unwrap();
        f
    }

    fn runtime_message(r: Result<Sample, CliError>) -> String {
        match r {
            Err(CliError::Runtime(e)) => format!("{e:#}"),
            other => panic!("expected runtime error, got {other:?}"),
        }
    }

    #[test]
    fn reads_features_and_targets() {
        let f = csv_file("x1,x2,y\n1,2,3\n4,5,6\n");
        let s = read_sample(f.path()).unwrap();
        assert_eq!(s.features, vec![vec![1.0, 2.0], vec![4.0, 5.0]]);
        assert_eq!(s.targets, vec![3.0, 6.0]);
        let f = csv_file("y\n0.5\n");
        assert_eq!(read_sample(f.path()).unwrap().dim(), 0);
    }

    #[test]
    fn malformed_rows_name_their_line() {
        let f = csv_file("x1,y\n1,2\n3,oops\n");
        assert!(runtime_message(read_sample(f.path())).contains("line 3"));
        let f = csv_file("x1,y\n1,2\n3,4\n5\n");
        assert!(runtime_message(read_sample(f.path())).contains("line 4"));
        let f = csv_file("a,y\n1,2\n");
        assert!(runtime_message(read_sample(f.path())).contains("line 1"));
    }

    #[test]
    fn example_errors_map_to_lines() {
        let e = offset_core::Error::AtExample {
            index: 0,
            source: Box::new(offset_core::Error::InvalidInput("bad".into())),
        };
        assert!(core_error(e).to_string().starts_with("line 2:"));
    }

    #[test]
    fn flags_override_file_and_unknown_keys_fail() {
        let f = csv_file(r#"{"trials": 5, "grid": 7}"#);
        let m = merge_settings(
            Some(f.path()),
            serde_json::json!({"trials": 9}),
            &["trials", "grid"],
        )
        .unwrap();
        assert_eq!(m["trials"], 9);
        assert_eq!(m["grid"], 7);
        assert!(matches!(
            merge_settings(Some(f.path()), Value::Null, &["trials"]),
            Err(CliError::Usage(_))
        ));
    }
}
