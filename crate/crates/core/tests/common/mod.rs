#![allow(dead_code)]

use dnbcure::simulation::{gen_subject, Covariates};
use dnbcure::{Dataset, ParamVector, Subject};
use rand::Rng;

/// Random dataset with one thickness-like p-covariate and an ulcer-like
/// η-indicator.
pub fn random_dataset<R: Rng>(n: usize, rng: &mut R) -> Dataset {
    let subjects = (0..n)
        .map(|_| {
            let time = rng.random_range(0.05..6.0);
            let event = rng.random_bool(0.5);
            let thick = rng.random_range(0.1..8.0);
            let ulcer = f64::from(u8::from(rng.random_bool(0.44)));
            Subject::new(time, event, vec![1.0, thick], vec![ulcer])
        })
        .collect();
    Dataset::new(subjects).unwrap()
}

/// Dataset drawn from the model at `theta`, so observed times sit on the
/// scale of its Weibull component.
pub fn model_dataset<R: Rng>(theta: &ParamVector, n: usize, rng: &mut R) -> Dataset {
    let subjects = (0..n)
        .map(|_| {
            let cov = Covariates {
                ulcer: rng.random_bool(0.44),
                thickness: rng.random_range(0.1..8.0),
            };
            let draw = gen_subject(cov, theta, 0.15, rng).unwrap();
            let x_eta = vec![f64::from(u8::from(cov.ulcer))];
            Subject::new(draw.time, draw.event, vec![1.0, cov.thickness], x_eta)
        })
        .collect();
    Dataset::new(subjects).unwrap()
}

/// Random feasible point with φ ∈ [0.1, 10], γ ∈ [0.05, 1], |β| ≤ 3.
pub fn random_theta<R: Rng>(rng: &mut R) -> ParamVector {
    ParamVector::new(
        rng.random_range(0.1..10.0),
        vec![rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)],
        vec![rng.random_range(-3.0..3.0)],
        rng.random_range(0.05..1.0),
        rng.random_range(0.05..1.0),
    )
}

/// Componentwise relative error with an absolute floor on the scale.
pub fn max_rel_err(a: &[f64], b: &[f64], floor: f64) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(floor))
        .fold(0.0, f64::max)
}

/// Adaptive Simpson quadrature on [a, b].
pub fn simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    #[allow(clippy::too_many_arguments)]
    fn rec<F: Fn(f64) -> f64>(
        f: &F,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let flm = f(lm);
        let frm = f(rm);
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            left + right + delta / 15.0
        } else {
            rec(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
                + rec(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
        }
    }
    let fa = f(a);
    let fb = f(b);
    let fm = f(0.5 * (a + b));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    rec(f, a, b, fa, fm, fb, whole, tol, 50)
}
