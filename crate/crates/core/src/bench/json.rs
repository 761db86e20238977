//! Deterministic JSON rendering: object keys sorted, floats printed with 17
//! significant digits, two-space indentation.

use std::fmt::Write;

use serde::Serialize;
use serde_json::Value;

use crate::error::Result;

pub fn to_canonical_string<T: Serialize>(value: &T) -> Result<String> {
    let value = serde_json::to_value(value)?;
    let mut out = String::new();
    write_value(&mut out, &value, 0);
    out.push('\n');
    Ok(out)
}

fn indent(out: &mut String, level: usize) {
    for _ in 0..level {
        out.push_str("  ");
    }
}

fn write_value(out: &mut String, value: &Value, level: usize) {
    match value {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => {
            if let Some(f) = n.as_f64().filter(|_| n.is_f64()) {
                let _ = write!(out, "{f:.16e}");
            } else {
                let _ = write!(out, "{n}");
            }
        }
        Value::String(s) => out.push_str(&Value::String(s.clone()).to_string()),
        Value::Array(items) => {
            if items.is_empty() {
                out.push_str("[]");
                return;
            }
            // scalar arrays stay on one line
            if items.iter().all(|v| !v.is_array() && !v.is_object()) {
                out.push('[');
                for (i, item) in items.iter().enumerate() {
                    if i > 0 {
                        out.push_str(", ");
                    }
                    write_value(out, item, level);
                }
                out.push(']');
                return;
            }
            out.push_str("[\n");
            for (i, item) in items.iter().enumerate() {
                indent(out, level + 1);
                write_value(out, item, level + 1);
                out.push_str(if i + 1 < items.len() { ",\n" } else { "\n" });
            }
            indent(out, level);
            out.push(']');
        }
        Value::Object(map) => {
            if map.is_empty() {
                out.push_str("{}");
                return;
            }
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            out.push_str("{\n");
            for (i, key) in keys.iter().enumerate() {
                indent(out, level + 1);
                out.push_str(&Value::String((*key).clone()).to_string());
                out.push_str(": ");
                write_value(out, &map[key.as_str()], level + 1);
                out.push_str(if i + 1 < keys.len() { ",\n" } else { "\n" });
            }
            indent(out, level);
            out.push('}');
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn sorted_keys_and_float_format() {
        let s = to_canonical_string(&json!({"b": 0.1, "a": [1, 2.5], "c": {"z": null, "y": "q"}}))
            .unwrap();
        assert_eq!(
            s,
            "{\n  \"a\": [1, 2.5000000000000000e0],\n  \"b\": 1.0000000000000001e-1,\n  \"c\": {\n    \"y\": \"q\",\n    \"z\": null\n  }\n}\n"
        );
        let back: Value = serde_json::from_str(&s).unwrap();
        assert_eq!(back["b"].as_f64(), Some(0.1));
    }

    #[test]
    fn floats_round_trip() {
        for x in [1.0 / 3.0, -2.5e-300, 6.02e23, 0.0] {
            let s = to_canonical_string(&x).unwrap();
            assert_eq!(s.trim().parse::<f64>().unwrap(), x);
        }
    }
}
