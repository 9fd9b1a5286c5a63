//! Derivative machinery and the small optimizers built on it.
//!
//! Objectives are closures over dual numbers. A closure of type
//! `Fn(&[Dual<T>]) -> Dual<T>` is enough to recover both the value and any
//! directional derivative at a point of type `T`, and because `T` may itself
//! be a dual, the same closure can sit inside an outer differentiation.

mod dual;
mod surrogate;

pub use dual::{Dual, Scalar};
pub use surrogate::{build_surrogate, maximize_surrogate, QuadraticSurrogate, SURROGATE_ASCENT_STEPS};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiffOptError {
    #[error("objective is not finite at iteration {iteration}: {value}")]
    NonFinite { iteration: usize, value: f64 },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("invalid optimization budget: {0}")]
    Budget(String),
}

/// Iteration budget shared by the planner and the model-based predictors.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptBudget {
    pub steps: usize,
    /// Step size in normalized control units (each coordinate scaled by its
    /// box half-width).
    pub learn_rate: f64,
    pub horizon: usize,
}

impl Default for OptBudget {
    fn default() -> Self {
        Self {
            steps: 20,
            learn_rate: 0.01,
            horizon: 5,
        }
    }
}

impl OptBudget {
    pub fn validate(&self) -> Result<(), DiffOptError> {
        if self.steps == 0 {
            return Err(DiffOptError::Budget("steps must be at least 1".into()));
        }
        if !(self.learn_rate > 0.0 && self.learn_rate.is_finite()) {
            return Err(DiffOptError::Budget("learn_rate must be positive".into()));
        }
        if self.horizon == 0 {
            return Err(DiffOptError::Budget("horizon must be at least 1".into()));
        }
        Ok(())
    }
}

/// Per-coordinate box `lo[i] <= u[i] <= hi[i]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Bounds {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl Bounds {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Self {
        debug_assert_eq!(lo.len(), hi.len());
        Self { lo, hi }
    }

    pub fn symmetric(half_widths: &[f64]) -> Self {
        Self {
            lo: half_widths.iter().map(|h| -h).collect(),
            hi: half_widths.to_vec(),
        }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn contains(&self, u: &[f64]) -> bool {
        u.len() == self.dim()
            && u
                .iter()
                .zip(self.lo.iter().zip(&self.hi))
                .all(|(v, (lo, hi))| *v >= *lo && *v <= *hi)
    }

    pub fn project(&self, u: &mut [f64]) {
        for (v, (lo, hi)) in u.iter_mut().zip(self.lo.iter().zip(&self.hi)) {
            *v = v.clamp(*lo, *hi);
        }
    }

    /// Squared half-widths: the metric that turns a raw gradient into a step in
    /// normalized control units.
    pub fn step_metric(&self) -> Vec<f64> {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(lo, hi)| {
                let h = 0.5 * (hi - lo);
                h * h
            })
            .collect()
    }
}

/// Value and gradient of `f` at `u`: one forward pass per coordinate.
pub fn value_and_gradient<T, F>(mut f: F, u: &[T]) -> (T, Vec<T>)
where
    T: Scalar,
    F: FnMut(&[Dual<T>]) -> Dual<T>,
{
    let mut x: Vec<Dual<T>> = u.iter().map(|v| Dual::lift(*v)).collect();
    let mut grad = Vec::with_capacity(u.len());
    let mut value = T::zero();
    for i in 0..u.len() {
        x[i].eps = T::cst(1.0);
        let out = f(&x);
        x[i].eps = T::zero();
        value = out.re;
        grad.push(out.eps);
    }
    if u.is_empty() {
        value = f(&x).re;
    }
    (value, grad)
}

/// Directional derivative of `f` at `u` along `dir`, plus the value.
pub fn directional<T, F>(mut f: F, u: &[T], dir: &[T]) -> (T, T)
where
    T: Scalar,
    F: FnMut(&[Dual<T>]) -> Dual<T>,
{
    let x: Vec<Dual<T>> = u.iter().zip(dir).map(|(v, d)| Dual::new(*v, *d)).collect();
    let out = f(&x);
    (out.re, out.eps)
}

/// Exact gradient of a scalar objective at an `f64` point.
pub fn gradient<F>(f: F, u: &[f64]) -> Result<Vec<f64>, DiffOptError>
where
    F: FnMut(&[Dual<f64>]) -> Dual<f64>,
{
    let (value, grad) = value_and_gradient(f, u);
    if !value.is_finite() || grad.iter().any(|g| !g.is_finite()) {
        return Err(DiffOptError::NonFinite {
            iteration: 0,
            value,
        });
    }
    Ok(grad)
}

/// Result of a projected gradient ascent run.
#[derive(Clone, Debug, PartialEq)]
pub struct Ascent {
    pub point: Vec<f64>,
    pub value: f64,
    /// Objective at the starting point.
    pub initial_value: f64,
}

/// Projected gradient ascent for a fixed number of steps.
///
/// Returns the best iterate visited, so the result never scores below the
/// starting point.
pub fn gd_maximize<F>(
    mut f: F,
    u0: &[f64],
    budget: &OptBudget,
    bounds: &Bounds,
) -> Result<Ascent, DiffOptError>
where
    F: FnMut(&[Dual<f64>]) -> Dual<f64>,
{
    budget.validate()?;
    if u0.len() != bounds.dim() {
        return Err(DiffOptError::Dimension {
            expected: bounds.dim(),
            got: u0.len(),
        });
    }
    let metric = bounds.step_metric();
    let mut u = u0.to_vec();
    bounds.project(&mut u);
    let mut best = (u.clone(), f64::NEG_INFINITY);
    let mut initial_value = f64::NAN;
    for it in 0..budget.steps {
        let (value, grad) = value_and_gradient(&mut f, &u);
        if !value.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(DiffOptError::NonFinite {
                iteration: it,
                value,
            });
        }
        if it == 0 {
            initial_value = value;
        }
        if value > best.1 {
            best = (u.clone(), value);
        }
        for ((v, g), m) in u.iter_mut().zip(&grad).zip(&metric) {
            *v += budget.learn_rate * m * g;
        }
        bounds.project(&mut u);
    }
    let lifted: Vec<Dual<f64>> = u.iter().map(|v| Dual::lift(*v)).collect();
    let last = f(&lifted).re;
    if !last.is_finite() {
        return Err(DiffOptError::NonFinite {
            iteration: budget.steps,
            value: last,
        });
    }
    if last >= best.1 {
        best = (u, last);
    }
    Ok(Ascent {
        point: best.0,
        value: best.1,
        initial_value,
    })
}

/// Fixed-iteration projected ascent over any scalar type.
///
/// Unlike [`gd_maximize`] this keeps the final iterate, so when `T` carries
/// tangents the result is a smooth function of whatever the objective closes
/// over (away from active box constraints).
pub fn ascend<T, F>(mut f: F, u0: Vec<T>, steps: usize, learn_rate: f64, bounds: &Bounds) -> Vec<T>
where
    T: Scalar,
    F: FnMut(&[Dual<T>]) -> Dual<T>,
{
    let metric = bounds.step_metric();
    let mut u = u0;
    for _ in 0..steps {
        let (_, grad) = value_and_gradient(&mut f, &u);
        for (i, v) in u.iter_mut().enumerate() {
            *v = (*v + grad[i] * (learn_rate * metric[i])).clamp_value(bounds.lo[i], bounds.hi[i]);
        }
    }
    u
}
