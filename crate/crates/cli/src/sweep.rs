//! Parameter paths into the scenario's TOML tree.
//!
//! A path is dotted (`wall.leak_probability`, `species.0.degradation_rate_per_s`).
//! A single segment that is not a top-level key is looked up as a leaf name
//! anywhere in the tree, also matching `name_<unit>` suffixes, and must be unique.

use toml::Value;

use crate::error::CliError;

fn is_scalar(v: &Value) -> bool {
    matches!(v, Value::Integer(_) | Value::Float(_))
}

fn child<'a>(v: &'a mut Value, segment: &str) -> Option<&'a mut Value> {
    match v {
        Value::Table(t) => t.get_mut(segment),
        Value::Array(a) => segment.parse::<usize>().ok().and_then(|i| a.get_mut(i)),
        _ => None,
    }
}

fn collect_leaves(v: &Value, prefix: &mut Vec<String>, name: &str, out: &mut Vec<Vec<String>>) {
    let mut visit = |key: String, value: &Value, prefix: &mut Vec<String>| {
        prefix.push(key.clone());
        if is_scalar(value) && (key == name || key.strip_prefix(name).is_some_and(|rest| rest.starts_with('_'))) {
            out.push(prefix.clone());
        }
        collect_leaves(value, prefix, name, out);
        prefix.pop();
    };
    match v {
        Value::Table(t) => {
            for (k, value) in t {
                visit(k.clone(), value, prefix);
            }
        }
        Value::Array(a) => {
            for (i, value) in a.iter().enumerate() {
                visit(i.to_string(), value, prefix);
            }
        }
        _ => {}
    }
}

/// Resolve `path` to the dotted segments of one numeric leaf.
pub fn resolve(tree: &Value, path: &str) -> Result<Vec<String>, CliError> {
    let segments: Vec<String> = path.split('.').map(str::to_string).collect();
    let mut probe = tree.clone();
    let mut cursor = Some(&mut probe);
    for s in &segments {
        cursor = cursor.and_then(|v| child(v, s));
    }
    if cursor.is_some_and(|v| is_scalar(v)) {
        return Ok(segments);
    }
    if segments.len() == 1 {
        let mut found = Vec::new();
        collect_leaves(tree, &mut Vec::new(), path, &mut found);
        if found.len() == 1 {
            return Ok(found.remove(0));
        }
    }
    Err(CliError::UnknownParameterPath(path.to_string()))
}

/// Copy of `tree` with the leaf at `segments` set to `value`. Integral values
/// stay integers where the field holds one.
pub fn with_value(tree: &Value, segments: &[String], value: f64) -> Result<Value, CliError> {
    let mut out = tree.clone();
    let mut cursor = &mut out;
    for s in segments {
        cursor = child(cursor, s).ok_or_else(|| CliError::UnknownParameterPath(segments.join(".")))?;
    }
    *cursor = match cursor {
        Value::Integer(_) if value.fract() == 0.0 && value.abs() < 9.0e15 => Value::Integer(value as i64),
        _ => Value::Float(value),
    };
    Ok(out)
}
