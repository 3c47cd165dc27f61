//! Closed-form external magnetic field families. Each supplies the field
//! value, its spatial Jacobian, and its time derivative at a point, so the
//! solver can assemble the body force and the diagnostics can integrate the
//! source norms without finite differencing.

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub enum ExternalField {
    Zero,
    /// Spatially uniform h cos(omega t); omega = 0 gives a constant field.
    Uniform { h: [f64; 3], omega: f64 },
    /// First component a x cos(omega t), the other components zero.
    LinearX { a: f64, omega: f64 },
}

impl ExternalField {
    pub fn value(&self, t: f64, x: f64, _y: f64) -> [f64; 3] {
        match *self {
            ExternalField::Zero => [0.0; 3],
            ExternalField::Uniform { h, omega } => {
                let c = (omega * t).cos();
                [h[0] * c, h[1] * c, h[2] * c]
            }
            ExternalField::LinearX { a, omega } => [a * x * (omega * t).cos(), 0.0, 0.0],
        }
    }

    /// Spatial Jacobian, rows over field components, columns over (x, y).
    pub fn jacobian(&self, t: f64, _x: f64, _y: f64) -> [[f64; 2]; 3] {
        match *self {
            ExternalField::Zero | ExternalField::Uniform { .. } => [[0.0; 2]; 3],
            ExternalField::LinearX { a, omega } => {
                [[a * (omega * t).cos(), 0.0], [0.0; 2], [0.0; 2]]
            }
        }
    }

    pub fn time_derivative(&self, t: f64, x: f64, _y: f64) -> [f64; 3] {
        match *self {
            ExternalField::Zero => [0.0; 3],
            ExternalField::Uniform { h, omega } => {
                let s = -omega * (omega * t).sin();
                [h[0] * s, h[1] * s, h[2] * s]
            }
            ExternalField::LinearX { a, omega } => {
                [-a * x * omega * (omega * t).sin(), 0.0, 0.0]
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        match *self {
            ExternalField::Zero => true,
            ExternalField::Uniform { h, .. } => h == [0.0; 3],
            ExternalField::LinearX { a, .. } => a == 0.0,
        }
    }

    pub fn from_preset(name: &str, params: &[(String, f64)]) -> Result<Self> {
        let get = |key: &str, default: f64| -> f64 {
            params
                .iter()
                .find(|(k, _)| k == key)
                .map(|&(_, v)| v)
                .unwrap_or(default)
        };
        let known = |allowed: &[&str]| -> Result<()> {
            for (k, _) in params {
                if !allowed.contains(&k.as_str()) {
                    return Err(Error::config_key(
                        "hext",
                        format!("unknown parameter '{k}' for preset '{name}'"),
                    ));
                }
            }
            Ok(())
        };
        match name {
            "zero" => {
                known(&[])?;
                Ok(ExternalField::Zero)
            }
            "uniform" => {
                known(&["hx", "hy", "hz", "omega"])?;
                Ok(ExternalField::Uniform {
                    h: [get("hx", 0.0), get("hy", 0.0), get("hz", 0.0)],
                    omega: get("omega", 0.0),
                })
            }
            "linear_x" => {
                known(&["a", "omega"])?;
                Ok(ExternalField::LinearX {
                    a: get("a", 0.0),
                    omega: get("omega", 0.0),
                })
            }
            other => Err(Error::config_key(
                "hext",
                format!("unknown external field preset '{other}'"),
            )),
        }
    }
}
