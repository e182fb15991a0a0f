//! Sweeps over a scalar scenario field addressed by its dotted config key.

use thzmm_core::{Error, Result, Scenario};
use toml::Value;

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    /// Dotted key as written in scenario files, e.g. `deployment.lambda_B`.
    pub key: String,
    pub values: Vec<f64>,
}

impl SweepSpec {
    /// Parses `KEY` and `START:STOP:COUNT` (inclusive, evenly spaced).
    pub fn parse(key: &str, range: &str) -> Result<Self> {
        let bad = |m: &str| Error::Validation {
            field: "--sweep".into(),
            message: m.into(),
        };
        let parts: Vec<&str> = range.split(':').collect();
        if parts.len() != 3 {
            return Err(bad("expected START:STOP:COUNT"));
        }
        let start: f64 = parts[0].trim().parse().map_err(|_| bad("START is not a number"))?;
        let stop: f64 = parts[1].trim().parse().map_err(|_| bad("STOP is not a number"))?;
        let count: usize = parts[2]
            .trim()
            .parse()
            .map_err(|_| bad("COUNT is not a positive integer"))?;
        if count == 0 {
            return Err(bad("COUNT must be at least 1"));
        }
        if !(start.is_finite() && stop.is_finite()) {
            return Err(bad("bounds must be finite"));
        }
        let values = if count == 1 {
            vec![start]
        } else {
            (0..count)
                .map(|i| start + (stop - start) * i as f64 / (count - 1) as f64)
                // Decimal grids print as typed.
                .map(|v| format!("{v:.12e}").parse().unwrap_or(v))
                .collect()
        };
        Ok(Self {
            key: key.to_string(),
            values,
        })
    }

    /// One validated scenario per sweep value.
    pub fn scenarios(&self, base: &Scenario) -> Result<Vec<Scenario>> {
        self.values.iter().map(|v| set_scalar(base, &self.key, *v)).collect()
    }
}

/// Copy of `scn` with the numeric field at `key` set to `value`.
pub fn set_scalar(scn: &Scenario, key: &str, value: f64) -> Result<Scenario> {
    let bad = |m: String| Error::Validation {
        field: key.to_string(),
        message: m,
    };
    let mut root = Value::try_from(scn).map_err(|e| Error::Parse(e.to_string()))?;
    let mut slot = &mut root;
    for part in key.split('.') {
        slot = slot
            .as_table_mut()
            .and_then(|t| t.get_mut(part))
            .ok_or_else(|| bad("no such scalar field".into()))?;
    }
    *slot = match slot {
        Value::Float(_) => Value::Float(value),
        Value::Integer(_) => {
            if value.fract() != 0.0 || value < i64::MIN as f64 || value > i64::MAX as f64 {
                return Err(bad(format!("integer field cannot take {value}")));
            }
            Value::Integer(value as i64)
        }
        _ => return Err(bad("not a numeric field".into())),
    };
    let out: Scenario = root.try_into().map_err(|e: toml::de::Error| bad(e.to_string()))?;
    out.validate()?;
    Ok(out)
}
