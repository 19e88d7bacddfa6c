//! Projected nonlinear conjugate gradient ascent with an Armijo backtracking
//! line search.
//!
//! Each iteration moves to `P[theta_k + s_k d_k]`, where `P` clamps onto the
//! feasible set and `s_k` is the first step in `s_init * backtrack^j` whose
//! projected candidate satisfies the sufficient-increase condition
//! `l(candidate) >= l(theta_k) + lambda s_k d_k.g_k`. The next direction is
//! `d_{k+1} = g_{k+1} + xi_k d_k` with `xi_k` from the configured update
//! (Hager-Zhang by default). The loop stops once the componentwise relative
//! change between successive iterates drops below `tol`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::likelihood::{LogLikelihood, FEASIBILITY_FLOOR};
use crate::model::{dot, Dataset, ParamVector};

/// A smooth objective to be maximised over the flat parameter layout.
pub trait Objective {
    fn value(&self, x: &[f64]) -> Result<f64>;

    fn gradient(&self, x: &[f64]) -> Result<Vec<f64>>;

    /// Map `x` onto the feasible set. Unconstrained objectives keep the default.
    fn project(&self, _x: &mut [f64]) {}
}

/// Conjugate-gradient update coefficient.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// Hager-Zhang.
    Hz,
    /// Fletcher-Reeves.
    Fr,
    /// Dai-Yuan.
    Dy,
    /// Steepest ascent, `xi = 0` every iteration.
    Sd,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Hz, Variant::Fr, Variant::Dy, Variant::Sd];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Hz => "hz",
            Variant::Fr => "fr",
            Variant::Dy => "dy",
            Variant::Sd => "sd",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "hz" | "hager-zhang" => Ok(Variant::Hz),
            "fr" | "fletcher-reeves" => Ok(Variant::Fr),
            "dy" | "dai-yuan" => Ok(Variant::Dy),
            "sd" | "steepest" | "steepest-ascent" => Ok(Variant::Sd),
            other => Err(Error::Usage(format!(
                "unknown optimizer variant '{other}' (expected hz, fr, dy or sd)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub k_max: usize,
    /// Threshold on the relative change between successive iterates.
    pub tol: f64,
    /// Armijo constant, `0 < lambda < 1/2`.
    pub lambda: f64,
    pub s_init: f64,
    pub backtrack: f64,
    pub max_backtracks: usize,
    pub variant: Variant,
    /// Floor on the denominator of the relative change.
    pub denom_floor: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            k_max: 500,
            tol: 1e-3,
            lambda: 0.1,
            s_init: 1.0,
            backtrack: 0.5,
            max_backtracks: 50,
            variant: Variant::Hz,
            denom_floor: 1e-8,
        }
    }
}

impl OptimizerConfig {
    pub fn with_variant(mut self, variant: Variant) -> Self {
        self.variant = variant;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda < 0.5) {
            return Err(Error::Config(format!(
                "lambda must lie in (0, 0.5), got {}",
                self.lambda
            )));
        }
        if !(self.backtrack > 0.0 && self.backtrack < 1.0) {
            return Err(Error::Config(format!(
                "backtrack factor must lie in (0, 1), got {}",
                self.backtrack
            )));
        }
        if self.k_max < 1 {
            return Err(Error::Config("k_max must be at least 1".into()));
        }
        if !(self.tol > 0.0) {
            return Err(Error::Config(format!("tol must be > 0, got {}", self.tol)));
        }
        if !(self.s_init > 0.0 && self.s_init.is_finite()) {
            return Err(Error::Config(format!(
                "s_init must be > 0, got {}",
                self.s_init
            )));
        }
        if !(self.denom_floor > 0.0) {
            return Err(Error::Config("denom_floor must be > 0".into()));
        }
        Ok(())
    }
}

fn norm(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

/// Hager-Zhang coefficient for ascent on `l`.
///
/// This is the minimisation formula applied to `-l`: with
/// `y = -(g_next - g_prev)` (the gradient change of `-l`),
/// `xi = (y - 2 d |y|^2 / d.y) . (-g_next) / d.y`. Returns 0 when `d.y` is
/// negligible relative to `|d| |y|`, which the caller treats as a restart.
pub fn hz_coefficient(d: &[f64], g_next: &[f64], g_prev: &[f64]) -> f64 {
    let y: Vec<f64> = g_prev.iter().zip(g_next).map(|(a, b)| a - b).collect();
    let dy = dot(d, &y);
    if dy.abs() < 1e-12 * (1.0 + norm(d) * norm(&y)) {
        return 0.0;
    }
    let yy = dot(&y, &y);
    let xi = -y
        .iter()
        .zip(d)
        .zip(g_next)
        .map(|((yi, di), gi)| (yi - 2.0 * di * yy / dy) * gi)
        .sum::<f64>()
        / dy;
    if xi.is_finite() {
        xi
    } else {
        0.0
    }
}

/// Fletcher-Reeves coefficient `|g_next|^2 / |g_prev|^2`.
pub fn fr_coefficient(g_next: &[f64], g_prev: &[f64]) -> f64 {
    let prev = dot(g_prev, g_prev);
    if prev < 1e-24 {
        return 0.0;
    }
    dot(g_next, g_next) / prev
}

/// Dai-Yuan coefficient for ascent, `|g_next|^2 / d.(g_prev - g_next)`.
pub fn dy_coefficient(d: &[f64], g_next: &[f64], g_prev: &[f64]) -> f64 {
    let y: Vec<f64> = g_prev.iter().zip(g_next).map(|(a, b)| a - b).collect();
    let dy = dot(d, &y);
    if dy.abs() < 1e-12 * (1.0 + norm(d) * norm(&y)) {
        return 0.0;
    }
    dot(g_next, g_next) / dy
}

fn update_coefficient(variant: Variant, d: &[f64], g_next: &[f64], g_prev: &[f64]) -> f64 {
    match variant {
        Variant::Hz => hz_coefficient(d, g_next, g_prev),
        Variant::Fr => fr_coefficient(g_next, g_prev),
        Variant::Dy => dy_coefficient(d, g_next, g_prev),
        Variant::Sd => 0.0,
    }
}

/// Euclidean norm of `(new_j - old_j) / max(|old_j|, denom_floor)`.
pub fn relative_change(theta_new: &[f64], theta_old: &[f64], denom_floor: f64) -> f64 {
    theta_new
        .iter()
        .zip(theta_old)
        .map(|(n, o)| {
            let r = (n - o) / o.abs().max(denom_floor);
            r * r
        })
        .sum::<f64>()
        .sqrt()
}

/// Outcome of one Armijo search. `step == 0` means every trial was rejected
/// and `point` is the unchanged start.
#[derive(Debug, Clone, PartialEq)]
pub struct LineSearch {
    pub step: f64,
    pub point: Vec<f64>,
    pub value: f64,
    pub trials: usize,
    /// Whether the projection moved the accepted candidate.
    pub projected: bool,
}

/// Backtracking search for the first step whose projected candidate meets
/// the sufficient-increase condition. `value` is `l(theta)`.
pub fn armijo_search<O: Objective + ?Sized>(
    objective: &O,
    theta: &[f64],
    value: f64,
    d: &[f64],
    g: &[f64],
    cfg: &OptimizerConfig,
) -> Result<LineSearch> {
    let slope = dot(d, g);
    if !(slope > 0.0) {
        return Err(Error::NotAscent { slope });
    }
    let mut step = cfg.s_init;
    let mut candidate = vec![0.0; theta.len()];
    for trial in 0..=cfg.max_backtracks {
        for ((c, t), di) in candidate.iter_mut().zip(theta).zip(d) {
            *c = t + step * di;
        }
        let raw = candidate.clone();
        objective.project(&mut candidate);
        // Points the objective cannot evaluate count as rejected trials.
        if let Ok(trial_value) = objective.value(&candidate) {
            if trial_value >= value + cfg.lambda * step * slope {
                return Ok(LineSearch {
                    step,
                    projected: raw != candidate,
                    point: candidate,
                    value: trial_value,
                    trials: trial + 1,
                });
            }
        }
        step *= cfg.backtrack;
    }
    Ok(LineSearch {
        step: 0.0,
        point: theta.to_vec(),
        value,
        trials: cfg.max_backtracks + 1,
        projected: false,
    })
}

/// One iteration of the ascent loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub iteration: usize,
    /// Objective at the start of the iteration.
    pub value_before: f64,
    /// Objective at the new iterate.
    pub value: f64,
    pub step: f64,
    /// `d.g` of the direction actually searched.
    pub slope: f64,
    /// Update coefficient used to form the next direction.
    pub xi: f64,
    pub relative_change: f64,
    /// The direction was reset to the gradient before the search.
    pub restarted: bool,
    /// The projection was active at the accepted point.
    pub projected: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    /// Relative change fell below `tol` after a successful step or at a
    /// stationary point.
    Converged,
    /// No step along the gradient passed the Armijo test; the iterate is
    /// stationary to working precision.
    Stalled,
    /// `k_max` iterations without meeting the stopping rule.
    MaxIterations,
}

/// Result of [`maximize`]: the best iterate found.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Optimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub status: Status,
    pub trace: Vec<TraceEntry>,
}

impl Optimum {
    pub fn converged(&self) -> bool {
        self.status != Status::MaxIterations
    }
}

fn check_finite(values: &[f64], iteration: usize, what: &str) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Numerical {
            iteration,
            message: format!("non-finite {what}"),
        })
    }
}

/// Maximise `objective` from `x0` (projected first).
pub fn maximize<O: Objective + ?Sized>(
    objective: &O,
    x0: &[f64],
    cfg: &OptimizerConfig,
) -> Result<Optimum> {
    cfg.validate()?;
    let mut x = x0.to_vec();
    objective.project(&mut x);
    let mut value = objective.value(&x)?;
    if !value.is_finite() {
        return Err(Error::Numerical {
            iteration: 0,
            message: format!("objective is {value} at the starting point"),
        });
    }
    let mut g = objective.gradient(&x)?;
    check_finite(&g, 0, "gradient")?;
    let mut d = g.clone();

    let mut best_x = x.clone();
    let mut best_value = value;
    let mut trace = Vec::new();
    let mut status = Status::MaxIterations;
    let mut k = 0;

    while k < cfg.k_max {
        let mut restarted = false;
        if !(dot(&d, &g) > 0.0) {
            d.clone_from(&g);
            restarted = true;
        }
        let slope = dot(&d, &g);
        let search = if slope > 0.0 {
            let mut s = armijo_search(objective, &x, value, &d, &g, cfg)?;
            if s.step == 0.0 && !restarted {
                d.clone_from(&g);
                restarted = true;
                s = armijo_search(objective, &x, value, &d, &g, cfg)?;
            }
            Some(s)
        } else {
            None
        };
        let searched_slope = dot(&d, &g);

        let (x_next, value_next, step, projected, stalled) = match search {
            Some(s) if s.step > 0.0 => (s.point, s.value, s.step, s.projected, false),
            Some(_) => (x.clone(), value, 0.0, false, true),
            // zero gradient
            None => (x.clone(), value, 0.0, false, false),
        };
        k += 1;

        let g_next = objective.gradient(&x_next)?;
        check_finite(&g_next, k, "gradient")?;
        let xi = update_coefficient(cfg.variant, &d, &g_next, &g);
        let d_next: Vec<f64> = g_next.iter().zip(&d).map(|(gn, di)| gn + xi * di).collect();
        let change = relative_change(&x_next, &x, cfg.denom_floor);

        trace.push(TraceEntry {
            iteration: k,
            value_before: value,
            value: value_next,
            step,
            slope: searched_slope,
            xi,
            relative_change: change,
            restarted,
            projected,
        });

        if value_next > best_value {
            best_value = value_next;
            best_x.clone_from(&x_next);
        }
        x = x_next;
        value = value_next;
        g = g_next;
        d = d_next;

        if change < cfg.tol {
            status = if stalled {
                Status::Stalled
            } else {
                Status::Converged
            };
            break;
        }
    }

    Ok(Optimum {
        x: best_x,
        value: best_value,
        iterations: k,
        status,
        trace,
    })
}

/// Fitted model returned by [`fit`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub theta_hat: ParamVector,
    pub loglik: f64,
    pub iterations: usize,
    pub converged: bool,
    pub status: Status,
    pub variant: Variant,
    pub trace: Vec<TraceEntry>,
}

/// Maximum-likelihood fit of the cure rate model by projected nonlinear
/// conjugate gradient ascent starting from `theta0`.
pub fn fit(data: &Dataset, theta0: &ParamVector, cfg: &OptimizerConfig) -> Result<FitResult> {
    if theta0.q1() != data.q1() || theta0.q2() != data.q2() {
        return Err(Error::Usage(format!(
            "initial value has dimensions ({}, {}), data has ({}, {})",
            theta0.q1(),
            theta0.q2(),
            data.q1(),
            data.q2()
        )));
    }
    if theta0.to_vec().iter().any(|v| !v.is_finite()) {
        return Err(Error::Usage("initial value has non-finite entries".into()));
    }
    let objective = LogLikelihood::new(data);
    let optimum = maximize(&objective, &theta0.to_vec(), cfg)?;
    let theta_hat = ParamVector::from_slice(&optimum.x, data.q1(), data.q2())?;
    debug_assert!(theta_hat.phi >= FEASIBILITY_FLOOR);
    Ok(FitResult {
        theta_hat,
        loglik: optimum.value,
        iterations: optimum.iterations,
        converged: optimum.converged(),
        status: optimum.status,
        variant: cfg.variant,
        trace: optimum.trace,
    })
}
