mod common;

use refcurve::bccg::{self, BccgParams};
use refcurve::smoothing::SmootherSpec;
use refcurve::{fit_lms, global_deviance, percentile_curves, predict_lms, zscore, Dataset, FitOptions, Hyperparameters};

#[test]
fn linear_truth_is_recovered() {
    let data = common::linear_data(2000, 1);
    let (model, report) = fit_lms(&data, &Hyperparameters::lms(2.0, 0.0, 0.0), &FitOptions::default()).unwrap();
    common::assert_monotone_trace(&report.deviance_trace);
    assert!(model.converged);
    let grid: Vec<f64> = (0..=90).map(|i| 5.0 + i as f64).collect();
    for p in predict_lms(&model, &grid) {
        let t = common::linear_truth(p.x);
        assert!((p.m / t.m - 1.0).abs() < 0.03, "M at {}", p.x);
        assert!((p.s - t.s).abs() < 0.015, "S at {}", p.x);
    }
    let mid = predict_lms(&model, &[50.0])[0];
    assert!(mid.l.abs() < 0.5);
}

#[test]
fn constant_data_gives_constant_median() {
    let c = 12.5;
    let x: Vec<f64> = (0..60).map(|i| i as f64).collect();
    let y: Vec<f64> = (0..60).map(|i| c + 1e-6 * ((i * 7919) % 13) as f64).collect();
    let (model, report) = fit_lms(&Dataset::from_xy(&x, &y), &Hyperparameters::default(), &FitOptions::default()).unwrap();
    common::assert_monotone_trace(&report.deviance_trace);
    for p in predict_lms(&model, &model.default_grid(30)) {
        assert!((p.m - c).abs() < 1e-3 * c);
    }
}

#[test]
fn deviance_equals_independent_sum_of_log_densities() {
    let data = common::linear_data(500, 7);
    let (model, _) = fit_lms(&data, &Hyperparameters::lms(1.0, 1.0, 0.0), &FitOptions::default()).unwrap();
    let mut total = 0.0;
    for r in data.included() {
        let p = predict_lms(&model, &[r.x])[0];
        total += bccg::log_density(r.y, &BccgParams::new(p.m, p.s, p.l).unwrap()).unwrap();
    }
    let gd = global_deviance(&model, &data).unwrap().deviance;
    assert!((gd + 2.0 * total).abs() < 1e-9 * gd.abs());
    assert!((gd - model.global_deviance).abs() < 1e-8 * gd.abs());
}

#[test]
fn single_row_deviance_matches_definition() {
    let data = common::linear_data(300, 8);
    let (model, _) = fit_lms(&data, &Hyperparameters::default(), &FitOptions::default()).unwrap();
    let p = predict_lms(&model, &[42.0])[0];
    let one = Dataset::from_xy(&[42.0], &[p.m]);
    let expected = -2.0 * bccg::log_density(p.m, &p.params().unwrap()).unwrap();
    assert_eq!(global_deviance(&model, &one).unwrap().deviance, expected);
    let outside = Dataset::from_xy(&[150.0], &[p.m]);
    assert_eq!(global_deviance(&model, &outside).unwrap().extrapolated, 1);
}

#[test]
fn excluded_rows_do_not_influence_the_fit() {
    let mut data = common::linear_data(300, 9);
    let (a, _) = fit_lms(&data, &Hyperparameters::default(), &FitOptions::default()).unwrap();
    data.rows.push(refcurve::Row { id: "wild".into(), x: 50.0, y: 1e4, included: false });
    let (b, _) = fit_lms(&data, &Hyperparameters::default(), &FitOptions::default()).unwrap();
    assert_eq!(a.global_deviance, b.global_deviance);
    assert_eq!(a.m.coefficients, b.m.coefficients);
}

#[test]
fn zscore_at_unit_power_is_standardized_residual() {
    let data = common::linear_data(300, 10);
    let hp = Hyperparameters { l: SmootherSpec::Poly { degree: 1 }, ..Hyperparameters::default() };
    let (model, _) = fit_lms(&data, &hp, &FitOptions::default()).unwrap();
    let p = predict_lms(&model, &[30.0])[0];
    let unit = BccgParams::new(p.m, p.s, 1.0).unwrap();
    let y = p.m * 1.1;
    assert!((bccg::z_transform(y, &unit).unwrap() - (y - p.m) / (p.m * p.s)).abs() < 1e-12);
    assert!(zscore(&model, 30.0, p.m).unwrap().abs() < 1e-12);
}

#[test]
fn percentile_curves_are_ordered_everywhere() {
    let data = common::linear_data(800, 11);
    let (model, _) = fit_lms(&data, &Hyperparameters::lms(3.0, 1.0, 1.0), &FitOptions::default()).unwrap();
    let levels = [1.0, 3.0, 10.0, 25.0, 50.0, 75.0, 90.0, 97.0, 99.0];
    let curves = percentile_curves(&model, &model.default_grid(200), &levels).unwrap();
    for j in 0..curves.x.len() {
        let column: Vec<f64> = curves.values.iter().map(|c| c[j].unwrap()).collect();
        assert!(column.windows(2).all(|w| w[0] <= w[1]), "x = {}", curves.x[j]);
    }
}

#[test]
fn small_samples_use_fewer_knots() {
    let data = common::linear_data(24, 12);
    let (model, report) = fit_lms(&data, &Hyperparameters::default(), &FitOptions::default()).unwrap();
    assert!(model.m.basis.n_basis() < 24);
    assert!(report.warnings.iter().any(|w| w.contains("recommended")));
}

#[test]
fn fits_are_bit_reproducible() {
    let data = common::linear_data(600, 13);
    let hp = Hyperparameters::lms(4.0, 2.0, 1.0);
    let a = fit_lms(&data, &hp, &FitOptions::default()).unwrap();
    let b = fit_lms(&data, &hp, &FitOptions::default()).unwrap();
    assert_eq!(a, b);
}

#[test]
fn failure_modes_are_reported() {
    let data = common::linear_data(100, 14);
    let bad = Hyperparameters::lms(25.0, 0.0, 0.0);
    assert!(matches!(fit_lms(&data, &bad, &FitOptions::default()), Err(refcurve::Error::Parameter(_) | refcurve::Error::InvalidArgument(_))));
    let opts = FitOptions { max_cycles: 1, gd_tol: 1e-12, ..FitOptions::default() };
    let (model, report) = fit_lms(&data, &Hyperparameters::default(), &opts).unwrap();
    assert!(!model.converged);
    assert!(report.warnings.iter().any(|w| w.contains("converge")));
}
