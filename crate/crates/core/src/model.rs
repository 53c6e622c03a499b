//! Problem data: the nonlinear conductivity catalog, the admissible control
//! box, and the full parameter set with validation.
//!
//! Catalog entries declare the constants the solvers and diagnostics rely
//! on: a positive lower bound, a polynomial growth envelope, and a Lipschitz
//! constant for the nonlinearity. `validate_params` spot-checks those claims
//! on a sampled range so a bad catalog entry is rejected up front rather
//! than poisoning a long optimization run.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Identifier of a built-in conductivity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ConductivityId {
    /// f(s) = c for a fixed c > 0.
    Constant(f64),
    /// f(s) = 2 + sin(s), range [1, 3].
    ShiftedSine,
    /// f(s) = 1 + 1/(1 + s^2), range (1, 2].
    RationalBump,
}

impl fmt::Display for ConductivityId {
    fn fmt(&self, out: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConductivityId::Constant(c) => write!(out, "constant:{c}"),
            ConductivityId::ShiftedSine => write!(out, "shifted_sine"),
            ConductivityId::RationalBump => write!(out, "rational_bump"),
        }
    }
}

impl FromStr for ConductivityId {
    type Err = Error;

    /// Parses `shifted_sine`, `rational_bump`, or `constant:<value>`.
    fn from_str(text: &str) -> Result<Self> {
        let text = text.trim();
        if let Some(value) = text.strip_prefix("constant:") {
            let c: f64 = value
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("bad constant conductivity value {value:?}")))?;
            if !(c.is_finite() && c > 0.0) {
                return Err(Error::Config(
                    "constant conductivity requires a finite positive value".into(),
                ));
            }
            return Ok(ConductivityId::Constant(c));
        }
        match text {
            "shifted_sine" => Ok(ConductivityId::ShiftedSine),
            "rational_bump" => Ok(ConductivityId::RationalBump),
            other => Err(Error::Config(format!("unknown conductivity {other:?}"))),
        }
    }
}

/// A nonlinearity f together with the constants the estimates lean on:
/// `lower_bound <= f(s) <= growth_const * (|s|^(growth_exponent + 1) + 1)`
/// and `|f(a) - f(b)| <= lipschitz_const * |a - b|`.
#[derive(Debug, Clone, Copy)]
pub struct Conductivity {
    pub id: ConductivityId,
    pub lower_bound: f64,
    pub growth_exponent: f64,
    pub growth_const: f64,
    pub lipschitz_const: f64,
}

impl Conductivity {
    /// Looks up a catalog entry with its declared constants.
    pub fn builtin(id: ConductivityId) -> Conductivity {
        match id {
            ConductivityId::Constant(c) => Conductivity {
                id,
                lower_bound: c,
                growth_exponent: 0.0,
                growth_const: c,
                lipschitz_const: 1.0,
            },
            ConductivityId::ShiftedSine => Conductivity {
                id,
                lower_bound: 1.0,
                growth_exponent: 0.0,
                growth_const: 3.0,
                lipschitz_const: 1.0,
            },
            ConductivityId::RationalBump => Conductivity {
                id,
                lower_bound: 1.0,
                growth_exponent: 0.0,
                growth_const: 2.0,
                // max |f'| = 9 / (8 sqrt(3)) ~ 0.6495, attained at s = 1/sqrt(3)
                lipschitz_const: 0.65,
            },
        }
    }

    pub fn eval(&self, s: f64) -> f64 {
        match self.id {
            ConductivityId::Constant(c) => c,
            ConductivityId::ShiftedSine => 2.0 + s.sin(),
            ConductivityId::RationalBump => 1.0 + 1.0 / (1.0 + s * s),
        }
    }

    pub fn deriv(&self, s: f64) -> f64 {
        match self.id {
            ConductivityId::Constant(_) => 0.0,
            ConductivityId::ShiftedSine => s.cos(),
            ConductivityId::RationalBump => {
                let q = 1.0 + s * s;
                -2.0 * s / (q * q)
            }
        }
    }

    /// Samples `[lo, hi]` uniformly and reports every violated claim:
    /// positivity against `lower_bound`, the growth envelope, the Lipschitz
    /// constant on consecutive samples, and agreement of `deriv` with a
    /// centered difference of `eval`.
    pub fn sampled_violations(&self, lo: f64, hi: f64, samples: usize) -> Vec<String> {
        let mut violations = Vec::new();
        let n = samples.max(2);
        let step = (hi - lo) / (n - 1) as f64;
        let point = |i: usize| lo + step * i as f64;
        let slack = 1e-9;

        for i in 0..n {
            let s = point(i);
            let value = self.eval(s);
            if !value.is_finite() || value < self.lower_bound - slack {
                violations.push(format!("conductivity {} below lower bound at {s}", self.id));
                break;
            }
            let envelope = self.growth_const * (s.abs().powf(self.growth_exponent + 1.0) + 1.0);
            if value > envelope + slack {
                violations.push(format!("conductivity {} exceeds growth envelope at {s}", self.id));
                break;
            }
        }
        for i in 1..n {
            let (s0, s1) = (point(i - 1), point(i));
            if (self.eval(s1) - self.eval(s0)).abs() > self.lipschitz_const * (s1 - s0) + slack {
                violations.push(format!(
                    "conductivity {} violates Lipschitz constant near {s1}",
                    self.id
                ));
                break;
            }
        }
        let delta = 1e-4;
        for i in 0..n {
            let s = point(i);
            let central = (self.eval(s + delta) - self.eval(s - delta)) / (2.0 * delta);
            if (self.deriv(s) - central).abs() > 1e-6 {
                violations.push(format!(
                    "conductivity {} derivative disagrees with finite difference at {s}",
                    self.id
                ));
                break;
            }
        }
        violations
    }
}

/// Admissible range `[lower, upper]` for the boundary coefficient,
/// with `0 < lower <= upper`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlBox {
    pub lower: f64,
    pub upper: f64,
}

impl ControlBox {
    pub fn new(lower: f64, upper: f64) -> ControlBox {
        ControlBox { lower, upper }
    }

    /// Clamp written max-then-min so ties resolve exactly the same way
    /// everywhere the update law is applied.
    pub fn clamp(&self, value: f64) -> f64 {
        value.max(self.lower).min(self.upper)
    }

    pub fn contains(&self, value: f64) -> bool {
        value >= self.lower && value <= self.upper
    }
}

/// Complete problem description on the unit interval.
#[derive(Debug, Clone)]
pub struct ModelParams {
    pub conductivity: Conductivity,
    /// Source intensity multiplying f(u) / (integral of f(u))^2.
    pub lambda: f64,
    pub control_box: ControlBox,
    /// Nodal initial temperature, one value per mesh node.
    pub initial_temperature: Vec<f64>,
    pub n_elements: usize,
    pub time_step: f64,
    pub horizon: f64,
}

impl ModelParams {
    /// Convenience constructor for a spatially uniform initial temperature.
    pub fn with_uniform_u0(
        conductivity: Conductivity,
        lambda: f64,
        control_box: ControlBox,
        u0: f64,
        n_elements: usize,
        time_step: f64,
        horizon: f64,
    ) -> ModelParams {
        ModelParams {
            conductivity,
            lambda,
            control_box,
            initial_temperature: vec![u0; n_elements + 1],
            n_elements,
            time_step,
            horizon,
        }
    }

    /// Number of time steps; valid only for validated parameters.
    pub fn num_steps(&self) -> usize {
        (self.horizon / self.time_step).round() as usize
    }

    /// Number of stored time levels including the initial one.
    pub fn num_levels(&self) -> usize {
        self.num_steps() + 1
    }
}

/// Checks every structural requirement and returns human-readable
/// violations; an empty list means the parameters are usable.
pub fn validate_params(params: &ModelParams) -> Vec<String> {
    let mut violations = Vec::new();
    let cb = params.control_box;
    if !(cb.lower.is_finite() && cb.lower > 0.0) {
        violations.push("control lower bound must be positive".to_string());
    }
    if !(cb.upper.is_finite() && cb.upper >= cb.lower) {
        violations.push("control upper bound must be at least the lower bound".to_string());
    }
    if !(params.lambda.is_finite() && params.lambda >= 0.0) {
        violations.push("lambda must be finite and nonnegative".to_string());
    }
    if params.n_elements < 2 {
        violations.push("mesh needs at least two elements".to_string());
    }
    if !(params.time_step.is_finite() && params.time_step > 0.0) {
        violations.push("time step must be positive".to_string());
    }
    if !(params.horizon.is_finite() && params.horizon > 0.0) {
        violations.push("horizon must be positive".to_string());
    }
    if params.time_step > 0.0 && params.horizon > 0.0 {
        let ratio = params.horizon / params.time_step;
        if (ratio - ratio.round()).abs() > 1e-9 * ratio.max(1.0) || ratio.round() < 1.0 {
            violations.push("horizon not an integer multiple of time step".to_string());
        }
    }
    if params.initial_temperature.len() != params.n_elements + 1 {
        violations.push(format!(
            "initial temperature has {} values, expected {}",
            params.initial_temperature.len(),
            params.n_elements + 1
        ));
    }
    if params.initial_temperature.iter().any(|v| !v.is_finite()) {
        violations.push("initial temperature has nonfinite entries".to_string());
    }
    violations.extend(params.conductivity.sampled_violations(-10.0, 10.0, 2001));
    violations
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_params() -> ModelParams {
        ModelParams::with_uniform_u0(
            Conductivity::builtin(ConductivityId::ShiftedSine),
            1.0,
            ControlBox::new(0.1, 1.0),
            0.0,
            50,
            0.01,
            2.0,
        )
    }

    #[test]
    fn constant_catalog_entry_is_flat() {
        let f = Conductivity::builtin(ConductivityId::Constant(2.0));
        assert_eq!(f.eval(7.3), 2.0);
        assert_eq!(f.eval(-123.0), 2.0);
        assert_eq!(f.deriv(7.3), 0.0);
        assert_eq!(f.lower_bound, 2.0);
    }

    #[test]
    fn shifted_sine_values_and_slope() {
        let f = Conductivity::builtin(ConductivityId::ShiftedSine);
        assert!((f.eval(0.0) - 2.0).abs() < 1e-15);
        assert!((f.deriv(0.0) - 1.0).abs() < 1e-15);
        assert!((f.eval(std::f64::consts::FRAC_PI_2) - 3.0).abs() < 1e-15);
        for i in 0..200 {
            let s = -10.0 + 0.1 * i as f64;
            assert!(f.eval(s) >= 1.0 - 1e-12);
            assert!(f.eval(s) <= 3.0 + 1e-12);
        }
    }

    #[test]
    fn rational_bump_values_and_slope() {
        let f = Conductivity::builtin(ConductivityId::RationalBump);
        assert!((f.eval(0.0) - 2.0).abs() < 1e-15);
        assert!((f.eval(1.0) - 1.5).abs() < 1e-15);
        assert!((f.deriv(1.0) + 0.5).abs() < 1e-15);
        assert!((f.deriv(0.0)).abs() < 1e-15);
    }

    #[test]
    fn catalog_passes_sampled_hypotheses() {
        for id in [
            ConductivityId::Constant(2.0),
            ConductivityId::Constant(0.5),
            ConductivityId::ShiftedSine,
            ConductivityId::RationalBump,
        ] {
            let f = Conductivity::builtin(id);
            let violations = f.sampled_violations(-10.0, 10.0, 10_000);
            assert!(violations.is_empty(), "{id}: {violations:?}");
        }
    }

    #[test]
    fn eval_is_pure() {
        let f = Conductivity::builtin(ConductivityId::ShiftedSine);
        assert_eq!(f.eval(1.234).to_bits(), f.eval(1.234).to_bits());
        assert_eq!(f.deriv(1.234).to_bits(), f.deriv(1.234).to_bits());
    }

    #[test]
    fn conductivity_id_parsing() {
        assert_eq!("shifted_sine".parse::<ConductivityId>().unwrap(), ConductivityId::ShiftedSine);
        assert_eq!(
            "constant:2.5".parse::<ConductivityId>().unwrap(),
            ConductivityId::Constant(2.5)
        );
        assert!("warm_fuzzy".parse::<ConductivityId>().is_err());
        assert!("constant:-1".parse::<ConductivityId>().is_err());
    }

    #[test]
    fn clamp_is_max_then_min() {
        let cb = ControlBox::new(0.1, 1.0);
        assert_eq!(cb.clamp(-3.0), 0.1);
        assert_eq!(cb.clamp(0.4), 0.4);
        assert_eq!(cb.clamp(7.0), 1.0);
        // Degenerate box maps everything to the single admissible value.
        let point = ControlBox::new(0.5, 0.5);
        assert_eq!(point.clamp(0.1), 0.5);
        assert_eq!(point.clamp(0.9), 0.5);
    }

    #[test]
    fn valid_params_produce_no_violations() {
        assert!(validate_params(&sample_params()).is_empty());
    }

    #[test]
    fn zero_lambda_is_accepted() {
        let mut p = sample_params();
        p.lambda = 0.0;
        assert!(validate_params(&p).is_empty());
    }

    #[test]
    fn zero_lower_bound_is_rejected() {
        let mut p = sample_params();
        p.control_box = ControlBox::new(0.0, 1.0);
        let violations = validate_params(&p);
        assert!(violations.iter().any(|v| v == "control lower bound must be positive"));
    }

    #[test]
    fn non_integer_horizon_ratio_is_rejected() {
        let mut p = sample_params();
        p.horizon = 1.0;
        p.time_step = 0.3;
        let violations = validate_params(&p);
        assert!(violations.iter().any(|v| v == "horizon not an integer multiple of time step"));
    }

    #[test]
    fn wrong_u0_length_is_rejected() {
        let mut p = sample_params();
        p.initial_temperature.pop();
        assert!(!validate_params(&p).is_empty());
    }

    #[test]
    fn num_steps_rounds_the_ratio() {
        let p = sample_params();
        assert_eq!(p.num_steps(), 200);
        assert_eq!(p.num_levels(), 201);
    }
}
