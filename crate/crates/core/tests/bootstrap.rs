use dnbcure::inference::column_sd;
use dnbcure::simulation::{gen_dataset, substream};
use dnbcure::{bootstrap_se, fit, Dataset, OptimizerConfig, ParamVector, SimSetting, Subject};

fn simulated(n: usize) -> Dataset {
    gen_dataset(
        &SimSetting::new(n, 0.5, 0.215, 0.183),
        &mut substream(401, 0),
    )
    .unwrap()
    .data
}

#[test]
fn identical_rows_give_zero_standard_errors() {
    let row = Subject::new(1.3, true, vec![1.0, 2.0], vec![1.0]);
    let data = Dataset::new(vec![row; 15]).unwrap();
    let theta = ParamVector::new(0.5, vec![0.0, 0.1], vec![0.5], 0.3, 0.2);
    let result = bootstrap_se(&data, &theta, 6, &OptimizerConfig::default(), 3).unwrap();
    assert_eq!(result.se, vec![0.0; theta.dim()]);
    assert_eq!(result.failed_count, 0);
}

#[test]
fn three_resamples_match_hand_standard_deviation() {
    let data = simulated(80);
    let cfg = OptimizerConfig::default();
    let start = ParamVector::new(0.5, vec![-0.85, 0.15], vec![1.1], 0.215, 0.183);
    let theta_hat = fit(&data, &start, &cfg).unwrap().theta_hat;
    let result = bootstrap_se(&data, &theta_hat, 3, &cfg, 17).unwrap();
    assert_eq!(result.b, 3);
    assert_eq!(result.resamples.len(), 3);
    let kept: Vec<Vec<f64>> = result
        .resamples
        .iter()
        .filter(|r| r.converged)
        .map(|r| r.estimate.clone().unwrap())
        .collect();
    assert_eq!(kept.len() + result.failed_count, 3);
    for j in 0..theta_hat.dim() {
        let xs: Vec<f64> = kept.iter().map(|e| e[j]).collect();
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (xs.len() as f64 - 1.0);
        assert!((result.se[j] - var.sqrt()).abs() <= 1e-12 * var.sqrt().max(1.0));
        assert!(result.se[j] >= 0.0);
    }
    // Same seed, same answer; another seed, another answer.
    assert_eq!(
        bootstrap_se(&data, &theta_hat, 3, &cfg, 17).unwrap(),
        result
    );
    assert_ne!(
        bootstrap_se(&data, &theta_hat, 3, &cfg, 18).unwrap().se,
        result.se
    );
}

#[test]
fn column_sd_is_zero_for_constant_columns() {
    let rows = [[1.0, 2.0], [1.0, 4.0]];
    let refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
    let sd = column_sd(&refs);
    assert_eq!(sd[0], 0.0);
    assert!((sd[1] - 2f64.sqrt()).abs() < 1e-15);
}

#[test]
fn infeasible_start_is_rejected() {
    let data = simulated(10);
    let bad = ParamVector::new(-1.0, vec![0.0, 0.0], vec![0.0], 0.2, 0.2);
    assert!(matches!(
        bootstrap_se(&data, &bad, 5, &OptimizerConfig::default(), 0),
        Err(dnbcure::Error::Domain(_))
    ));
}
