//! Canonical JSON: sorted object keys and floats rounded to nine
//! significant digits.
//!
//! Rounding is idempotent, so a canonical document re-serializes to the
//! same bytes after a load.

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Number, Value};

pub const SIGNIFICANT_DIGITS: usize = 9;

/// Rounds to [`SIGNIFICANT_DIGITS`] significant decimal digits.
pub fn quantize(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    format!("{:.*e}", SIGNIFICANT_DIGITS - 1, x)
        .parse()
        .expect("formatted float parses")
}

fn quantize_value(v: &mut Value) {
    match v {
        Value::Number(n) if n.is_f64() => {
            if let Some(q) = n.as_f64().map(quantize).and_then(Number::from_f64) {
                *n = q;
            }
        }
        Value::Array(items) => items.iter_mut().for_each(quantize_value),
        Value::Object(map) => map.values_mut().for_each(quantize_value),
        _ => {}
    }
}

/// Serializes `value` into a canonical JSON tree. Object keys come out
/// sorted because `serde_json::Map` is ordered.
pub fn to_value<T: Serialize>(value: &T) -> Value {
    let mut v = serde_json::to_value(value).expect("value serializes to JSON");
    quantize_value(&mut v);
    v
}

pub fn to_string<T: Serialize>(value: &T) -> String {
    serde_json::to_string(&to_value(value)).expect("JSON tree serializes")
}

/// Indented canonical form with a trailing newline, used for documents on
/// disk.
pub fn to_string_pretty<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(&to_value(value)).expect("JSON tree serializes");
    s.push('\n');
    s
}

/// `value` as it reads back from its canonical form.
pub fn round_trip<T: Serialize + DeserializeOwned>(value: &T) -> T {
    serde_json::from_value(to_value(value)).expect("canonical form deserializes")
}
