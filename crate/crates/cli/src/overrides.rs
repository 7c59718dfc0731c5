//! `key.path=value` overrides applied to a JSON config before it is parsed.

use serde_json::Value;

/// Apply one `a.b.c=value` override in place.
///
/// The value is read as JSON when it parses (`0.5`, `true`, `[1,2]`,
/// `{"x":1}`, `"text"`) and as a plain string otherwise. Missing objects
/// along the path are created; numeric segments index into arrays.
pub fn apply_override(config: &mut Value, assignment: &str) -> Result<(), String> {
    let (path, raw) = assignment
        .split_once('=')
        .ok_or_else(|| format!("override '{assignment}' is not of the form key=value"))?;
    let path = path.trim();
    if path.is_empty() || path.split('.').any(str::is_empty) {
        return Err(format!("override '{assignment}' has an empty key segment"));
    }
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));

    let segments: Vec<&str> = path.split('.').collect();
    let mut node = config;
    for (depth, seg) in segments.iter().enumerate() {
        let last = depth + 1 == segments.len();
        node = match node {
            Value::Array(items) => {
                let idx: usize = seg
                    .parse()
                    .map_err(|_| format!("'{path}': segment '{seg}' must index an array"))?;
                let len = items.len();
                items
                    .get_mut(idx)
                    .ok_or_else(|| format!("'{path}': index {idx} out of range for array of {len}"))?
            }
            other => {
                if other.is_null() {
                    *other = Value::Object(Default::default());
                }
                let obj = other
                    .as_object_mut()
                    .ok_or_else(|| format!("'{path}': cannot descend into a non-object at '{seg}'"))?;
                obj.entry(seg.to_string()).or_insert(Value::Null)
            }
        };
        if last {
            *node = value;
            return Ok(());
        }
    }
    unreachable!("path has at least one segment")
}
