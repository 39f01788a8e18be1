use std::path::Path;

use serde::Serialize;
use serde_json::{Number, Value};

use crate::error::{Error, Result};
use crate::format::sig6;

fn round_floats(v: &mut Value) {
    match v {
        Value::Number(n) if n.is_f64() => {
            if let Some(r) = n.as_f64().map(sig6).and_then(Number::from_f64) {
                *n = r;
            }
        }
        Value::Array(items) => items.iter_mut().for_each(round_floats),
        Value::Object(map) => map.values_mut().for_each(round_floats),
        _ => {}
    }
}

/// Pretty JSON with every float rounded to 6 significant digits and a
/// trailing newline.
pub fn to_report_json<T: Serialize>(value: &T) -> Result<String> {
    let mut v = serde_json::to_value(value)?;
    round_floats(&mut v);
    let mut s = serde_json::to_string_pretty(&v)?;
    s.push('\n');
    Ok(s)
}

pub fn write_report_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    std::fs::write(path, to_report_json(value)?).map_err(|e| Error::io(path, e))
}
