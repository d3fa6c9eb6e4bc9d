//! Scenario documents (TOML) and dotted `key=value` overrides.

use crate::CliError;
use clearance_mpc::sim::Scenario;
use std::path::Path;
use toml::{Table, Value};

/// Reads, overrides and validates a scenario file.
pub fn load_scenario(path: &Path, overrides: &[String]) -> Result<Scenario, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::fs(path, e))?;
    let scenario = parse_scenario(&text, overrides).map_err(|message| CliError::Parse {
        path: path.display().to_string(),
        message,
    })?;
    scenario.validate().map_err(|e| CliError::Validation(e.to_string()))?;
    Ok(scenario)
}

/// Parses a scenario document, applying `overrides` in order.
///
/// Without overrides the document is deserialized directly so that errors
/// carry line and column.
pub fn parse_scenario(text: &str, overrides: &[String]) -> Result<Scenario, String> {
    if overrides.is_empty() {
        return toml::from_str(text).map_err(|e| e.to_string());
    }
    let mut table: Table = toml::from_str(text).map_err(|e| e.to_string())?;
    for item in overrides {
        apply_override(&mut table, item)?;
    }
    Value::Table(table)
        .try_into()
        .map_err(|e: toml::de::Error| format!("after overrides: {e}"))
}

pub fn to_toml_string(scenario: &Scenario) -> String {
    toml::to_string(scenario).expect("scenario serializes")
}

/// Applies one `a.b.c=value` assignment. Numeric segments index arrays;
/// missing tables are created. The value is read as a TOML literal and
/// falls back to a bare string.
pub fn apply_override(table: &mut Table, item: &str) -> Result<(), String> {
    let (key, raw) = item
        .split_once('=')
        .ok_or_else(|| format!("override `{item}` is not key=value"))?;
    let key = key.trim();
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(format!("override key `{key}` has an empty segment"));
    }
    let mut root = Value::Table(std::mem::take(table));
    let result = assign(&mut root, &parts, parse_literal(raw.trim()), key);
    if let Value::Table(t) = root {
        *table = t;
    }
    result
}

fn assign(root: &mut Value, parts: &[&str], value: Value, key: &str) -> Result<(), String> {
    let (last, parents) = parts.split_last().expect("at least one segment");
    let mut node = root;
    for (depth, part) in parents.iter().enumerate() {
        node = match node {
            Value::Table(t) => t.entry(part.to_string()).or_insert_with(|| Value::Table(Table::new())),
            Value::Array(items) => {
                let i = index(part, items.len(), key)?;
                &mut items[i]
            }
            _ => unreachable!(),
        };
        if !matches!(node, Value::Table(_) | Value::Array(_)) {
            return Err(format!("override `{key}`: `{}` is not a table", parts[..=depth].join(".")));
        }
    }
    match node {
        Value::Table(t) => {
            t.insert(last.to_string(), value);
        }
        Value::Array(items) => {
            let i = index(last, items.len(), key)?;
            items[i] = value;
        }
        _ => unreachable!(),
    }
    Ok(())
}

fn index(part: &str, len: usize, key: &str) -> Result<usize, String> {
    let i: usize = part
        .parse()
        .map_err(|_| format!("`{key}`: `{part}` is not an array index"))?;
    if i >= len {
        return Err(format!("`{key}`: index {i} out of range (length {len})"));
    }
    Ok(i)
}

fn parse_literal(raw: &str) -> Value {
    match toml::from_str::<Table>(&format!("v = {raw}")) {
        Ok(mut t) => t.remove("v").expect("key present"),
        Err(_) => Value::String(raw.to_string()),
    }
}
