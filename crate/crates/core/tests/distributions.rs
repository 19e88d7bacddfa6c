mod common;

use common::simpson;
use dnbcure::model::{active_risk_pmf, cure_rate, nb_pmf, pop_density, pop_survival};
use dnbcure::simulation::{gen_subject, substream, Covariates};
use dnbcure::ParamVector;
use rand::Rng;

#[test]
fn population_survival_limits() {
    let mut rng = substream(201, 0);
    for _ in 0..100 {
        let (eta, p, phi) = (
            rng.random_range(0.1..5.0),
            rng.random_range(0.05..0.95),
            rng.random_range(0.1..10.0),
        );
        let (g1, g2) = (rng.random_range(0.05..1.0), rng.random_range(0.05..1.0));
        let s0 = pop_survival(0.0, eta, p, phi, g1, g2).unwrap();
        assert!((s0 - 1.0).abs() < 1e-15);
        let p0 = cure_rate(eta, p, phi).unwrap();
        // Far enough out that the Weibull cdf is 1 to double precision.
        let far = 60f64.powf(g1) / g2;
        let s_far = pop_survival(far, eta, p, phi, g1, g2).unwrap();
        assert!((s_far - p0).abs() < 1e-12, "S(far) {s_far} vs p0 {p0}");
    }
}

#[test]
fn density_is_minus_survival_derivative() {
    let mut rng = substream(202, 0);
    for k in 0..100 {
        let (eta, p, phi) = (
            rng.random_range(0.1..5.0),
            rng.random_range(0.05..0.95),
            rng.random_range(0.1..10.0),
        );
        let (g1, g2) = (rng.random_range(0.05..1.0), rng.random_range(0.05..1.0));
        let y = rng.random_range(0.05..10.0);
        let h = 1e-5 * y;
        let s = |t: f64| pop_survival(t, eta, p, phi, g1, g2).unwrap();
        let fd = -(s(y + h) - s(y - h)) / (2.0 * h);
        let f = pop_density(y, eta, p, phi, g1, g2).unwrap();
        // Skip points where the density has underflowed below FD noise.
        if f.max(fd.abs()) < 1e-8 {
            continue;
        }
        let rel = (f - fd).abs() / f.abs().max(fd.abs());
        assert!(rel < 1e-4, "point {k}: f {f} vs -dS/dy {fd}");
    }
}

#[test]
fn density_integrates_to_one_minus_cure_rate() {
    let cases = [
        (3.0, 0.5, 0.5, 0.215, 0.183),
        (1.0, 0.3, 2.0, 0.316, 0.179),
        (0.5, 0.9, 0.1, 1.0, 0.5),
        (4.0, 0.7, 6.6, 0.3, 0.12),
    ];
    for (eta, p, phi, g1, g2) in cases {
        let upper = 40f64.powf(g1) / g2;
        let f = |y: f64| pop_density(y, eta, p, phi, g1, g2).unwrap();
        // The density is only defined for y > 0.
        let mass = simpson(&f, f64::MIN_POSITIVE, upper, 1e-10);
        let target = 1.0 - cure_rate(eta, p, phi).unwrap();
        assert!(
            (mass - target).abs() < 1e-5,
            "∫f = {mass}, 1 - p0 = {target}"
        );
    }
}

#[test]
fn count_pmfs_are_normalized_with_the_right_moments() {
    for (eta, phi, p) in [(3.0, 0.5, 0.5), (0.2, 5.0, 0.9), (10.0, 0.01, 0.1)] {
        let (mut total, mut mean, mut second) = (0.0, 0.0, 0.0);
        for m in 0..20_000u64 {
            let pm = nb_pmf(m, eta, phi).unwrap();
            total += pm;
            mean += m as f64 * pm;
            second += (m as f64).powi(2) * pm;
        }
        assert!((total - 1.0).abs() < 1e-10);
        assert!((mean - eta).abs() < 1e-8);
        assert!((second - mean * mean - (eta + phi * eta * eta)).abs() < 1e-6);
        let thinned: f64 = (0..20_000u64)
            .map(|d| active_risk_pmf(d, eta, phi, p).unwrap())
            .sum();
        assert!((thinned - 1.0).abs() < 1e-10);
        let p_d0 = active_risk_pmf(0, eta, phi, p).unwrap();
        assert!((p_d0 - cure_rate(eta, p, phi).unwrap()).abs() < 1e-14);
    }
}

/// Settings with p = 0.5 (zero β₁) and η = 3 (ulcer, β₂ = ln 3).
fn thinning_truths(phi: f64) -> (ParamVector, Covariates) {
    (
        ParamVector::new(phi, vec![0.0, 0.0], vec![3f64.ln()], 0.215, 0.183),
        Covariates {
            ulcer: true,
            thickness: 1.0,
        },
    )
}

#[test]
fn simulated_counts_follow_their_mass_functions() {
    let (truths, cov) = thinning_truths(0.5);
    let draws = 200_000;
    let mut rng = substream(203, 0);
    let mut m_hist = vec![0usize; 200];
    let mut d_hist = vec![0usize; 200];
    for _ in 0..draws {
        let draw = gen_subject(cov, &truths, 0.0, &mut rng).unwrap();
        m_hist[(draw.m as usize).min(199)] += 1;
        d_hist[(draw.d as usize).min(199)] += 1;
        assert!(draw.d <= draw.m);
        assert_eq!(draw.progression_times.len() as u64, draw.d);
    }
    let tv = |hist: &[usize], pmf: &dyn Fn(u64) -> f64| {
        0.5 * hist
            .iter()
            .enumerate()
            .map(|(k, &c)| (c as f64 / draws as f64 - pmf(k as u64)).abs())
            .sum::<f64>()
    };
    let tv_m = tv(&m_hist, &|m| nb_pmf(m, 3.0, 0.5).unwrap());
    let tv_d = tv(&d_hist, &|d| active_risk_pmf(d, 3.0, 0.5, 0.5).unwrap());
    // 200k draws: sampling TV is of order 0.003.
    assert!(tv_m < 0.01, "TV(M) = {tv_m}");
    assert!(tv_d < 0.01, "TV(D) = {tv_d}");
    let cured = d_hist[0] as f64 / draws as f64;
    assert!((cured - cure_rate(3.0, 0.5, 0.5).unwrap()).abs() < 0.005);
}

#[test]
fn simulated_lifetimes_follow_population_survival() {
    let (truths, cov) = thinning_truths(0.75);
    let n = 20_000;
    let mut rng = substream(204, 0);
    let mut times: Vec<f64> = (0..n)
        .map(|_| gen_subject(cov, &truths, 0.0, &mut rng).unwrap().time)
        .collect();
    times.sort_by(f64::total_cmp);
    // Kolmogorov-Smirnov distance to the improper cdf 1 - S_pop, with the
    // cured (infinite) lifetimes carrying the remaining mass.
    let mut ks = 0.0_f64;
    for (i, &t) in times.iter().enumerate().filter(|(_, t)| t.is_finite()) {
        let cdf = 1.0 - pop_survival(t, 3.0, 0.5, 0.75, 0.215, 0.183).unwrap();
        ks = ks
            .max((cdf - i as f64 / n as f64).abs())
            .max((cdf - (i + 1) as f64 / n as f64).abs());
    }
    // 1% critical value 1.63 / sqrt(n).
    assert!(ks < 1.63 / (n as f64).sqrt(), "KS distance {ks}");
}
