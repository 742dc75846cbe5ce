//! Nodal coefficient fields, expression strings in `x`, and named presets.

use crate::error::{Error, Result};
use crate::mesh::SpatialGrid;
use exmex::{BinOp, Express, FlatEx, MakeOperators, Operator};
use std::f64::consts::PI;

#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientField {
    values: Vec<f64>,
}

impl CoefficientField {
    pub fn new(values: Vec<f64>) -> Self {
        Self { values }
    }

    pub fn from_fn(grid: &SpatialGrid, f: impl Fn(f64) -> f64) -> Self {
        Self::new(grid.nodes().iter().map(|&x| f(x)).collect())
    }

    pub fn constant(grid: &SpatialGrid, c: f64) -> Self {
        Self::new(vec![c; grid.n_x()])
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn max(&self) -> f64 {
        self.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn scaled(&self, a: f64) -> Self {
        Self::new(self.values.iter().map(|v| a * v).collect())
    }

    pub fn plus(&self, other: &Self) -> Self {
        Self::new(self.values.iter().zip(&other.values).map(|(a, b)| a + b).collect())
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|v| *v == 0.0)
    }

    /// Why an input field is unusable as a scattering coefficient.
    pub(crate) fn check_positive(&self, name: &str) -> Result<()> {
        match self.values.iter().position(|v| !(v.is_finite() && *v > 0.0)) {
            Some(i) => Err(Error::InvalidCoefficient(format!(
                "{name} must be finite and positive, node {i} has {}",
                self.values[i]
            ))),
            None => Ok(()),
        }
    }

    pub(crate) fn check_nonnegative(&self, name: &str) -> Result<()> {
        match self.values.iter().position(|v| !(v.is_finite() && *v >= 0.0)) {
            Some(i) => Err(Error::InvalidCoefficient(format!(
                "{name} must be finite and nonnegative, node {i} has {}",
                self.values[i]
            ))),
            None => Ok(()),
        }
    }
}

#[derive(Clone, Debug)]
struct CoeffOps;

impl MakeOperators<f64> for CoeffOps {
    fn make<'a>() -> Vec<Operator<'a, f64>> {
        vec![
            Operator::make_bin(
                "*",
                BinOp { apply: |a, b| a * b, prio: 2, is_commutative: true },
            ),
            Operator::make_bin(
                "/",
                BinOp { apply: |a, b| a / b, prio: 3, is_commutative: false },
            ),
            Operator::make_bin_unary(
                "+",
                BinOp { apply: |a, b| a + b, prio: 0, is_commutative: true },
                |a| a,
            ),
            Operator::make_bin_unary(
                "-",
                BinOp { apply: |a, b| a - b, prio: 1, is_commutative: false },
                |a| -a,
            ),
            Operator::make_unary("sin", |a| a.sin()),
            Operator::make_unary("cos", |a| a.cos()),
            Operator::make_constant("pi", PI),
            Operator::make_constant("PI", PI),
        ]
    }
}

/// An expression in the single variable `x`, e.g. `1 + 1/(1.5 + sin(2*pi*x))`.
///
/// Only `+ - * /`, `sin`, `cos`, numeric literals and `pi` are accepted.
#[derive(Clone, Debug)]
pub struct Expression {
    text: String,
    expr: FlatEx<f64, CoeffOps>,
    uses_x: bool,
}

impl Expression {
    pub fn parse(text: &str) -> Result<Self> {
        let bad = |reason: String| Error::Expression { expr: text.to_string(), reason };
        let expr = FlatEx::<f64, CoeffOps>::parse(text).map_err(|e| bad(e.to_string()))?;
        let vars = expr.var_names().to_vec();
        if let Some(v) = vars.iter().find(|v| v.as_str() != "x") {
            return Err(bad(format!("unknown name '{v}'")));
        }
        let uses_x = !vars.is_empty();
        Ok(Self { text: text.to_string(), expr, uses_x })
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn eval(&self, x: f64) -> f64 {
        let args = [x];
        let vars: &[f64] = if self.uses_x { &args } else { &[] };
        self.expr.eval(vars).unwrap_or(f64::NAN)
    }

    pub fn sample(&self, grid: &SpatialGrid) -> CoefficientField {
        CoefficientField::from_fn(grid, |x| self.eval(x))
    }
}

/// 1 + 1/(1.5 + sin 2 pi x)
pub fn sigma_s_base(x: f64) -> f64 {
    1.0 + 1.0 / (1.5 + (2.0 * PI * x).sin())
}

/// 4 + sin(4 pi x)/2
pub fn sigma_a_base(x: f64) -> f64 {
    4.0 + 0.5 * (4.0 * PI * x).sin()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    AbsTest,
    ScaCritical,
    ScaSubcritical,
}

impl Preset {
    pub const ALL: [Preset; 3] = [Preset::AbsTest, Preset::ScaCritical, Preset::ScaSubcritical];

    pub fn name(self) -> &'static str {
        match self {
            Preset::AbsTest => "abs-test",
            Preset::ScaCritical => "sca-critical",
            Preset::ScaSubcritical => "sca-subcritical",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|p| p.name() == name)
            .ok_or_else(|| Error::Config(format!("unknown preset '{name}'")))
    }

    pub fn sigma_s(self, x: f64) -> f64 {
        match self {
            Preset::AbsTest | Preset::ScaCritical => sigma_s_base(x),
            Preset::ScaSubcritical => 16.0 * sigma_s_base(x),
        }
    }

    pub fn sigma_a(self, x: f64) -> f64 {
        match self {
            Preset::AbsTest => sigma_a_base(x),
            Preset::ScaCritical => 0.0,
            Preset::ScaSubcritical => sigma_a_base(x) / 16.0,
        }
    }

    pub fn fields(self, grid: &SpatialGrid) -> (CoefficientField, CoefficientField) {
        (
            CoefficientField::from_fn(grid, |x| self.sigma_s(x)),
            CoefficientField::from_fn(grid, |x| self.sigma_a(x)),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_at_origin() {
        assert!((Preset::AbsTest.sigma_s(0.0) - 5.0 / 3.0).abs() < 1e-15);
        assert_eq!(Preset::AbsTest.sigma_a(0.0), 4.0);
        assert_eq!(Preset::ScaCritical.sigma_a(0.3), 0.0);
        assert_eq!(Preset::ScaSubcritical.sigma_a(0.0), 0.25);
    }

    #[test]
    fn expressions() {
        let e = Expression::parse("1 + 1/(1.5 + sin(2*pi*x))").unwrap();
        for x in [0.0, 0.17, 0.5, 0.93] {
            assert!((e.eval(x) - sigma_s_base(x)).abs() < 1e-14);
        }
        assert_eq!(Expression::parse("0.25").unwrap().eval(0.7), 0.25);
        assert!((Expression::parse("-x*cos(pi*x)").unwrap().eval(1.0) - 1.0).abs() < 1e-15);
        assert!(Expression::parse("exp(x)").is_err());
        assert!(Expression::parse("y + 1").is_err());
    }
}
