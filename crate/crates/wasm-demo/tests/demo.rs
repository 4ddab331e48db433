use refcurve_wasm::{density_table, simulate_fit, truth};

#[test]
fn density_table_is_a_distribution() {
    let t = density_table(50.0, 0.15, -0.8, 2001).unwrap();
    assert_eq!(t.y.len(), 2001);
    let trapezoid: f64 = t.y.windows(2).zip(t.pdf.windows(2)).map(|(y, f)| 0.5 * (y[1] - y[0]) * (f[0] + f[1])).sum();
    assert!((trapezoid - 0.999).abs() < 1e-4, "{trapezoid}");
    assert!(t.cdf.windows(2).all(|c| c[0] <= c[1]));
    assert!((t.cdf[0] - 0.0005).abs() < 1e-9 && (t.cdf[2000] - 0.9995).abs() < 1e-9);
    assert!(t.quantiles.windows(2).all(|q| q[0] < q[1]));
    assert!((t.quantiles[3] - 50.0).abs() < 1.0);
}

#[test]
fn density_rejects_bad_parameters() {
    assert!(density_table(-1.0, 0.1, 0.0, 100).is_err());
    assert!(density_table(10.0, 0.1, 0.0, 1).is_err());
}

#[test]
fn simulated_fit_tracks_the_truth() {
    let r = simulate_fit("linear", 2000, 3, 1.0, 0.0, 0.0).unwrap();
    assert!(r.converged);
    assert_eq!(r.x.len(), 2000);
    let median = 3;
    for j in 5..96 {
        let fitted = r.fitted[median][j].unwrap();
        assert!((fitted / r.truth[median][j] - 1.0).abs() < 0.03);
    }
    assert!((r.edf[0] - 3.0).abs() < 2e-3);
}

#[test]
fn unknown_shape_and_tiny_samples_are_errors() {
    assert!(truth("wiggly").is_err());
    assert!(simulate_fit("sine", 5, 1, 1.0, 0.0, 0.0).is_err());
}

#[test]
fn converter_matches_the_core() {
    let z = refcurve_wasm::percentile_to_z(75.0).unwrap();
    assert!((z - 0.67449).abs() < 1e-4);
    assert!((refcurve_wasm::z_to_percentile(z) - 75.0).abs() < 1e-10);
}
