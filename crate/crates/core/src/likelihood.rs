//! Observed-data log-likelihood of the destructive negative-binomial cure
//! rate model, its analytic gradient, and the feasible set it is maximised
//! over.
//!
//! Per subject with activation probability `p`, mean risk `eta`, `u = eta p`
//! and `A = 1 + phi u F(y)`:
//!
//! ```text
//! log S_pop = -(1/phi) log A
//! log f_pop = log u + log f(y) - (1 + 1/phi) log A
//! ```
//!
//! so the contribution is `delta (log u + log f) - (delta + 1/phi) log A`.

use crate::error::{Error, Result};
use crate::model::{dot, logistic, Dataset, ParamVector, Subject};
use crate::optimizer::Objective;

/// Lower bound enforced on `phi`, `gamma1` and `gamma2`.
pub const FEASIBILITY_FLOOR: f64 = 1e-6;

/// Gradient in the flat [`ParamVector`] layout
/// `[d/dphi, d/dbeta1.., d/dbeta2.., d/dgamma1, d/dgamma2]`.
pub type GradientVector = Vec<f64>;

/// `true` iff `phi`, `gamma1` and `gamma2` are at least [`FEASIBILITY_FLOOR`]
/// and every coordinate is finite.
pub fn is_feasible(theta: &ParamVector) -> bool {
    let finite = theta.to_vec().iter().all(|v| v.is_finite());
    finite
        && theta.phi >= FEASIBILITY_FLOOR
        && theta.gamma1 >= FEASIBILITY_FLOOR
        && theta.gamma2 >= FEASIBILITY_FLOOR
}

/// Clamp the positive coordinates to `max(FEASIBILITY_FLOOR, .)`; regression
/// coefficients pass through untouched.
pub fn project(theta: &ParamVector) -> ParamVector {
    let mut out = theta.clone();
    out.phi = out.phi.max(FEASIBILITY_FLOOR);
    out.gamma1 = out.gamma1.max(FEASIBILITY_FLOOR);
    out.gamma2 = out.gamma2.max(FEASIBILITY_FLOOR);
    out
}

/// In-place projection on the flat layout.
pub fn project_flat(values: &mut [f64], q1: usize, q2: usize) {
    for i in ParamVector::positive_indices(q1, q2) {
        values[i] = values[i].max(FEASIBILITY_FLOOR);
    }
}

fn check_inputs(theta: &ParamVector, data: &Dataset) -> Result<()> {
    if theta.q1() != data.q1() || theta.q2() != data.q2() {
        return Err(Error::Usage(format!(
            "parameter dimensions ({}, {}) do not match data ({}, {})",
            theta.q1(),
            theta.q2(),
            data.q1(),
            data.q2()
        )));
    }
    if !is_feasible(theta) {
        return Err(Error::Domain(format!(
            "infeasible parameters: phi={}, gamma1={}, gamma2={}",
            theta.phi, theta.gamma1, theta.gamma2
        )));
    }
    Ok(())
}

/// `log(1 + exp(x))` without overflow.
fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Partial derivatives of one subject's contribution with respect to the
/// two linear predictors and the scalar parameters.
struct Term {
    value: f64,
    d_phi: f64,
    d_lin_p: f64,
    d_lin_eta: f64,
    d_gamma1: f64,
    d_gamma2: f64,
}

fn subject_term(s: &Subject, theta: &ParamVector, with_grad: bool) -> Term {
    let (phi, g1, g2) = (theta.phi, theta.gamma1, theta.gamma2);
    let delta = if s.event { 1.0 } else { 0.0 };

    let lin_p = dot(&s.x_p, &theta.beta1);
    let lin_eta = dot(&s.x_eta, &theta.beta2);
    let p = logistic(lin_p);
    let u = lin_eta.exp() * p;

    let log_scaled = (g2 * s.time).ln();
    let log_z = log_scaled / g1;
    let z = log_z.exp();
    let cdf = -(-z).exp_m1();
    let a1 = phi * u * cdf;
    let log_a = a1.ln_1p();
    let c = delta + 1.0 / phi;

    let mut value = -c * log_a;
    if s.event {
        let log_u = lin_eta - softplus(-lin_p);
        let log_f = log_z - g1.ln() - s.time.ln() - z;
        value += log_u + log_f;
    }
    if !with_grad {
        return Term {
            value,
            d_phi: 0.0,
            d_lin_p: 0.0,
            d_lin_eta: 0.0,
            d_gamma1: 0.0,
            d_gamma2: 0.0,
        };
    }

    let q = logistic(-lin_p);
    // d(-c log A)/dF
    let k = c * phi * u / (1.0 + a1);
    let r = k * cdf;
    // z (1 - F), formed in log space so z = inf does not produce 0 * inf
    let z_surv = (log_z - z).exp();

    // Density terms only exist for events; gating them avoids 0 * inf.
    let (event_g1, event_g2) = if s.event {
        (
            -1.0 / g1 - log_scaled * (1.0 - z) / (g1 * g1),
            (1.0 - z) / (g1 * g2),
        )
    } else {
        (0.0, 0.0)
    };
    Term {
        value,
        d_phi: -c * u * cdf / (1.0 + a1) + log_a / (phi * phi),
        d_lin_p: q * (delta - r),
        d_lin_eta: delta - r,
        d_gamma1: event_g1 + k * z_surv * log_scaled / (g1 * g1),
        d_gamma2: event_g2 - k * z_surv / (g1 * g2),
    }
}

/// Per-subject log-likelihood contributions, in dataset order.
pub fn contributions(theta: &ParamVector, data: &Dataset) -> Result<Vec<f64>> {
    check_inputs(theta, data)?;
    Ok(data
        .subjects()
        .iter()
        .map(|s| subject_term(s, theta, false).value)
        .collect())
}

/// Observed-data log-likelihood.
pub fn log_likelihood(theta: &ParamVector, data: &Dataset) -> Result<f64> {
    check_inputs(theta, data)?;
    Ok(data
        .subjects()
        .iter()
        .map(|s| subject_term(s, theta, false).value)
        .sum())
}

/// Analytic gradient of [`log_likelihood`].
pub fn grad_log_likelihood(theta: &ParamVector, data: &Dataset) -> Result<GradientVector> {
    check_inputs(theta, data)?;
    let (q1, q2) = (theta.q1(), theta.q2());
    let mut grad = vec![0.0; theta.dim()];
    for s in data.subjects() {
        let t = subject_term(s, theta, true);
        grad[0] += t.d_phi;
        for (g, x) in grad[1..1 + q1].iter_mut().zip(&s.x_p) {
            *g += t.d_lin_p * x;
        }
        for (g, x) in grad[1 + q1..1 + q1 + q2].iter_mut().zip(&s.x_eta) {
            *g += t.d_lin_eta * x;
        }
        grad[1 + q1 + q2] += t.d_gamma1;
        grad[2 + q1 + q2] += t.d_gamma2;
    }
    Ok(grad)
}

/// Central differences with per-coordinate step `h * max(1, |x_j|)`.
pub fn central_difference<F>(mut f: F, x: &[f64], h: f64) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    if !(h.is_finite() && h > 0.0) {
        return Err(Error::Usage(format!(
            "finite-difference step must be > 0, got {h}"
        )));
    }
    let mut point = x.to_vec();
    let mut grad = Vec::with_capacity(x.len());
    for j in 0..x.len() {
        let step = h * x[j].abs().max(1.0);
        point[j] = x[j] + step;
        let up = f(&point)?;
        point[j] = x[j] - step;
        let down = f(&point)?;
        point[j] = x[j];
        grad.push((up - down) / (2.0 * step));
    }
    Ok(grad)
}

/// Finite-difference gradient of the log-likelihood, used as a test oracle.
/// Fails with a domain error when a perturbed point leaves the feasible set.
pub fn fd_gradient(theta: &ParamVector, data: &Dataset, h: f64) -> Result<GradientVector> {
    check_inputs(theta, data)?;
    let (q1, q2) = (theta.q1(), theta.q2());
    central_difference(
        |x| {
            let candidate = ParamVector::from_slice(x, q1, q2)?;
            if !is_feasible(&candidate) {
                return Err(Error::Domain(
                    "finite-difference step crosses the feasibility boundary".into(),
                ));
            }
            log_likelihood(&candidate, data)
        },
        &theta.to_vec(),
        h,
    )
}

/// The log-likelihood of a dataset as an [`Objective`] over the flat
/// parameter layout, with projection onto the feasible set.
#[derive(Debug, Clone, Copy)]
pub struct LogLikelihood<'a> {
    data: &'a Dataset,
}

impl<'a> LogLikelihood<'a> {
    pub fn new(data: &'a Dataset) -> Self {
        Self { data }
    }

    pub fn data(&self) -> &'a Dataset {
        self.data
    }

    fn unflatten(&self, x: &[f64]) -> Result<ParamVector> {
        ParamVector::from_slice(x, self.data.q1(), self.data.q2())
    }
}

impl Objective for LogLikelihood<'_> {
    fn value(&self, x: &[f64]) -> Result<f64> {
        log_likelihood(&self.unflatten(x)?, self.data)
    }

    fn gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        grad_log_likelihood(&self.unflatten(x)?, self.data)
    }

    fn project(&self, x: &mut [f64]) {
        project_flat(x, self.data.q1(), self.data.q2());
    }
}
