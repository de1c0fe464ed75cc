//! Closed-form scalar fields used for boundary data, initial fields, and
//! test oracles. Deliberately a fixed library rather than a parser.

use std::f64::consts::PI;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{GridDomain, GridField};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FieldExpr {
    Constant {
        value: f64,
    },
    /// `offset + Σ coeffs_i x_i`.
    Linear {
        coeffs: Vec<f64>,
        #[serde(default)]
        offset: f64,
    },
    /// `offset + Σ coeffs_i (x_i − center_i)²`.
    Quadratic {
        coeffs: Vec<f64>,
        #[serde(default)]
        center: Option<Vec<f64>>,
        #[serde(default)]
        offset: f64,
    },
    /// Scherk's surface `log(cos(a y₁) / cos(a y₂)) / a`, `y = x − center`.
    Scherk {
        #[serde(default = "one")]
        scale: f64,
        #[serde(default)]
        center: Option<Vec<f64>>,
    },
    /// `amplitude Π sin(π (x_i − lo_i) / (hi_i − lo_i))`.
    SineBump {
        amplitude: f64,
        lo: Vec<f64>,
        hi: Vec<f64>,
    },
    /// `amplitude · sin(freq · x + phase)`.
    Wave {
        amplitude: f64,
        freq: Vec<f64>,
        #[serde(default)]
        phase: f64,
    },
    /// `lo` where `x_axis < at`, else `hi`.
    Step {
        axis: usize,
        at: f64,
        lo: f64,
        hi: f64,
    },
    Sum {
        terms: Vec<FieldExpr>,
    },
    Scale {
        factor: f64,
        expr: Box<FieldExpr>,
    },
}

fn one() -> f64 {
    1.0
}

fn centered(x: &[f64], center: &Option<Vec<f64>>, k: usize) -> f64 {
    x[k] - center.as_ref().map_or(0.0, |c| c[k])
}

impl FieldExpr {
    /// Checks the vector lengths against dimension `n`.
    pub fn validate(&self, n: usize) -> Result<()> {
        let len = |v: &[f64], what: &str| -> Result<()> {
            if v.len() != n {
                return Err(Error::Config(format!(
                    "{what} has {} entries, chart dimension is {n}",
                    v.len()
                )));
            }
            Ok(())
        };
        match self {
            FieldExpr::Constant { .. } => Ok(()),
            FieldExpr::Linear { coeffs, .. } => len(coeffs, "linear.coeffs"),
            FieldExpr::Quadratic { coeffs, center, .. } => {
                len(coeffs, "quadratic.coeffs")?;
                center.as_deref().map_or(Ok(()), |c| len(c, "quadratic.center"))
            }
            FieldExpr::Scherk { scale, center } => {
                if n != 2 {
                    return Err(Error::Config("scherk needs a 2-dimensional chart".into()));
                }
                if !(*scale > 0.0) {
                    return Err(Error::Config("scherk.scale must be positive".into()));
                }
                center.as_deref().map_or(Ok(()), |c| len(c, "scherk.center"))
            }
            FieldExpr::SineBump { lo, hi, .. } => {
                len(lo, "sine_bump.lo")?;
                len(hi, "sine_bump.hi")?;
                if lo.iter().zip(hi).any(|(a, b)| a >= b) {
                    return Err(Error::Config("sine_bump needs lo < hi".into()));
                }
                Ok(())
            }
            FieldExpr::Wave { freq, .. } => len(freq, "wave.freq"),
            FieldExpr::Step { axis, .. } => {
                if *axis >= n {
                    return Err(Error::Config(format!("step.axis {axis} out of range")));
                }
                Ok(())
            }
            FieldExpr::Sum { terms } => terms.iter().try_for_each(|t| t.validate(n)),
            FieldExpr::Scale { expr, .. } => expr.validate(n),
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            FieldExpr::Constant { value } => *value,
            FieldExpr::Linear { coeffs, offset } => {
                offset + coeffs.iter().zip(x).map(|(c, v)| c * v).sum::<f64>()
            }
            FieldExpr::Quadratic {
                coeffs,
                center,
                offset,
            } => {
                offset
                    + coeffs
                        .iter()
                        .enumerate()
                        .map(|(k, c)| {
                            let y = centered(x, center, k);
                            c * y * y
                        })
                        .sum::<f64>()
            }
            FieldExpr::Scherk { scale, center } => {
                let a = *scale;
                let y1 = centered(x, center, 0);
                let y2 = centered(x, center, 1);
                ((a * y1).cos() / (a * y2).cos()).ln() / a
            }
            FieldExpr::SineBump { amplitude, lo, hi } => {
                amplitude
                    * x.iter()
                        .zip(lo.iter().zip(hi))
                        .map(|(v, (a, b))| (PI * (v - a) / (b - a)).sin())
                        .product::<f64>()
            }
            FieldExpr::Wave {
                amplitude,
                freq,
                phase,
            } => amplitude * (freq.iter().zip(x).map(|(f, v)| f * v).sum::<f64>() + phase).sin(),
            FieldExpr::Step { axis, at, lo, hi } => {
                if x[*axis] < *at {
                    *lo
                } else {
                    *hi
                }
            }
            FieldExpr::Sum { terms } => terms.iter().map(|t| t.eval(x)).sum(),
            FieldExpr::Scale { factor, expr } => factor * expr.eval(x),
        }
    }

    pub fn sample(&self, domain: &Arc<GridDomain>) -> Result<GridField> {
        self.validate(domain.dim())?;
        let field = GridField::from_fn(domain, |x| self.eval(x));
        for p in 0..domain.len() {
            if domain.kind(p) != crate::grid::NodeKind::Exterior && !field.get(p).is_finite() {
                return Err(Error::Config(format!(
                    "expression is not finite at node {p} ({:?})",
                    domain.coords(p)
                )));
            }
        }
        Ok(field)
    }
}

/// How a config supplies a nodal field: a number, a closed-form expression,
/// or a snapshot CSV in the grid format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FieldSpec {
    Constant(f64),
    Expr { expr: FieldExpr },
    Csv { csv: String },
}

impl FieldSpec {
    /// Builds the field; relative CSV paths resolve against `base`.
    pub fn build(&self, domain: &Arc<GridDomain>, base: &Path) -> Result<GridField> {
        match self {
            FieldSpec::Constant(c) => Ok(GridField::constant(domain, *c)),
            FieldSpec::Expr { expr } => expr.sample(domain),
            FieldSpec::Csv { csv } => {
                let path = base.join(csv);
                if !path.exists() {
                    return Err(Error::Config(format!("field csv {} does not exist", path.display())));
                }
                GridField::load_csv(domain, &path)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scherk_is_antisymmetric_and_zero_on_diagonal() {
        let s = FieldExpr::Scherk {
            scale: 1.0,
            center: None,
        };
        assert_eq!(s.eval(&[0.3, 0.3]), 0.0);
        assert!((s.eval(&[0.2, 0.7]) + s.eval(&[0.7, 0.2])).abs() < 1e-15);
        assert!((s.eval(&[1.0, 0.0]) - 1f64.cos().ln()).abs() < 1e-15);
    }

    #[test]
    fn json_forms() {
        let spec: FieldSpec = serde_json::from_str("2.5").unwrap();
        assert_eq!(spec, FieldSpec::Constant(2.5));
        let spec: FieldSpec =
            serde_json::from_str(r#"{"expr": {"kind": "linear", "coeffs": [1, 2]}}"#).unwrap();
        let FieldSpec::Expr { expr } = spec else { panic!() };
        assert_eq!(expr.eval(&[1.0, 1.0]), 3.0);
        let bad: std::result::Result<FieldExpr, _> =
            serde_json::from_str(r#"{"kind": "linear", "coeffs": [1], "bogus": 1}"#);
        assert!(bad.is_err());
        assert!(expr.validate(3).is_err());
    }

    #[test]
    fn sine_bump_vanishes_on_box() {
        let e = FieldExpr::SineBump {
            amplitude: 2.0,
            lo: vec![0.0, 0.0],
            hi: vec![1.0, 1.0],
        };
        assert!(e.eval(&[1.0, 0.3]).abs() < 1e-15);
        assert!((e.eval(&[0.5, 0.5]) - 2.0).abs() < 1e-15);
    }
}
