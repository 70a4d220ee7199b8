//! Quantities written either as plain SI numbers or as `"value unit"` strings.

use serde::{Deserialize, Serialize};

/// Physical dimension as exponents of (kg, m, s).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dim(pub i8, pub i8, pub i8);

impl Dim {
    pub const NONE: Dim = Dim(0, 0, 0);
    pub const LENGTH: Dim = Dim(0, 1, 0);
    pub const TIME: Dim = Dim(0, 0, 1);
    pub const VELOCITY: Dim = Dim(0, 1, -1);
    pub const ACCELERATION: Dim = Dim(0, 1, -2);
    pub const PRESSURE: Dim = Dim(1, -1, -2);
    pub const VISCOSITY: Dim = Dim(1, -1, -1);
    pub const DENSITY: Dim = Dim(1, -3, 0);
    pub const FORCE: Dim = Dim(1, 1, -2);
    pub const FREQUENCY: Dim = Dim(0, 0, -1);

    pub fn name(self) -> &'static str {
        match self {
            Dim::NONE => "dimensionless",
            Dim::LENGTH => "length",
            Dim::TIME => "time",
            Dim::VELOCITY => "velocity",
            Dim::ACCELERATION => "acceleration",
            Dim::PRESSURE => "pressure",
            Dim::VISCOSITY => "viscosity",
            Dim::DENSITY => "density",
            Dim::FORCE => "force",
            Dim::FREQUENCY => "frequency",
            _ => "unnamed dimension",
        }
    }
}

const UNITS: &[(&str, f64, Dim)] = &[
    ("", 1.0, Dim::NONE),
    ("1", 1.0, Dim::NONE),
    ("m", 1.0, Dim::LENGTH),
    ("mm", 1e-3, Dim::LENGTH),
    ("cm", 1e-2, Dim::LENGTH),
    ("km", 1e3, Dim::LENGTH),
    ("s", 1.0, Dim::TIME),
    ("ms", 1e-3, Dim::TIME),
    ("m/s", 1.0, Dim::VELOCITY),
    ("km/h", 1.0 / 3.6, Dim::VELOCITY),
    ("m/s^2", 1.0, Dim::ACCELERATION),
    ("Pa", 1.0, Dim::PRESSURE),
    ("kPa", 1e3, Dim::PRESSURE),
    ("MPa", 1e6, Dim::PRESSURE),
    ("GPa", 1e9, Dim::PRESSURE),
    ("Pa s", 1.0, Dim::VISCOSITY),
    ("kPa s", 1e3, Dim::VISCOSITY),
    ("MPa s", 1e6, Dim::VISCOSITY),
    ("kg/m^3", 1.0, Dim::DENSITY),
    ("N", 1.0, Dim::FORCE),
    ("kN", 1e3, Dim::FORCE),
    ("Hz", 1.0, Dim::FREQUENCY),
];

/// A raw quantity as written in a scenario file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Quantity {
    Number(f64),
    Text(String),
}

impl From<f64> for Quantity {
    fn from(v: f64) -> Self {
        Quantity::Number(v)
    }
}

/// Parses `"value unit"` into SI, returning the value and its dimension.
pub fn parse_text(s: &str) -> Result<(f64, Dim), String> {
    let s = s.trim();
    let split = s.find(char::is_whitespace).unwrap_or(s.len());
    let (num, unit) = s.split_at(split);
    let value: f64 = num.parse().map_err(|_| format!("cannot read a number from '{s}'"))?;
    let unit = unit.split_whitespace().collect::<Vec<_>>().join(" ");
    let unit = unit.replace(['·', '*'], " ");
    let &(_, scale, dim) = UNITS
        .iter()
        .find(|(u, _, _)| *u == unit)
        .ok_or_else(|| format!("unknown unit '{unit}' in '{s}'"))?;
    Ok((value * scale, dim))
}

impl Quantity {
    /// SI value, checking the dimension. Plain numbers are taken as SI.
    pub fn si(&self, expected: Dim) -> Result<f64, String> {
        let v = match self {
            Quantity::Number(v) => *v,
            Quantity::Text(s) => {
                let (v, dim) = parse_text(s)?;
                if dim != expected {
                    return Err(format!("'{s}' is a {}, expected a {}", dim.name(), expected.name()));
                }
                v
            }
        };
        if !v.is_finite() {
            return Err(format!("non-finite value {v}"));
        }
        Ok(v)
    }
}
