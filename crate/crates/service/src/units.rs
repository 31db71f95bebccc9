//! Degree conversion at the API boundary. Internally every angle is in
//! radians; with `units=deg` the angle fields of request and response
//! bodies are read and written in degrees.

use serde::Deserialize;
use serde_json::Value;

use crate::error::ApiError;

/// Field names that hold angles wherever they appear in a body.
pub const ANGLE_FIELDS: [&str; 4] = ["roll", "pitch", "yaw", "theta"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Units {
    #[default]
    Radians,
    Degrees,
}

#[derive(Debug, Default, Deserialize)]
pub struct UnitsQuery {
    pub units: Option<String>,
}

impl UnitsQuery {
    pub fn parse(&self) -> Result<Units, ApiError> {
        match self.units.as_deref() {
            None | Some("rad") => Ok(Units::Radians),
            Some("deg") => Ok(Units::Degrees),
            Some(other) => Err(ApiError::new(
                axum::http::StatusCode::BAD_REQUEST,
                "invalid_units",
                format!("units must be \"deg\" or \"rad\", got {other:?}"),
            )),
        }
    }
}

fn scale_angles(v: &mut Value, factor: f64) {
    match v {
        Value::Object(map) => {
            for (k, field) in map.iter_mut() {
                match field.as_f64() {
                    Some(x) if ANGLE_FIELDS.contains(&k.as_str()) => *field = Value::from(x * factor),
                    _ => scale_angles(field, factor),
                }
            }
        }
        Value::Array(items) => items.iter_mut().for_each(|i| scale_angles(i, factor)),
        _ => {}
    }
}

pub fn incoming(v: &mut Value, units: Units) {
    if units == Units::Degrees {
        scale_angles(v, 1f64.to_radians());
    }
}

pub fn outgoing(v: &mut Value, units: Units) {
    if units == Units::Degrees {
        scale_angles(v, 1f64.to_degrees());
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn converts_nested_angle_fields_only() {
        let mut v = json!({"pose": {"yaw": 90.0, "z0": 3.0}, "list": [{"theta": 180.0}], "scale": 1.5});
        incoming(&mut v, Units::Degrees);
        assert_eq!(v["pose"]["yaw"], json!(std::f64::consts::FRAC_PI_2));
        assert_eq!(v["list"][0]["theta"], json!(std::f64::consts::PI));
        assert_eq!((v["pose"]["z0"].clone(), v["scale"].clone()), (json!(3.0), json!(1.5)));
        outgoing(&mut v, Units::Degrees);
        assert_eq!(v["pose"]["yaw"], json!(90.0));
    }

    #[test]
    fn radians_pass_through() {
        let mut v = json!({"roll": 0.1});
        incoming(&mut v, Units::Radians);
        outgoing(&mut v, Units::Radians);
        assert_eq!(v, json!({"roll": 0.1}));
    }
}
