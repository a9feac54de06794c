use stochvort_py::api;

#[test]
fn variance_matches_core() {
    let v = api::convolution_variance(1.0, 21, 1.0, 1.0).unwrap();
    assert!((v - 0.06917069004096234).abs() < 1e-12);
    assert!(api::convolution_variance(1.0, 21, 1.0, -1.0).is_err());
}

#[test]
fn kernel_is_positive_and_symmetric() {
    let a = api::heat_kernel(0.1, [0.2, 0.3], [1.0, 2.0]).unwrap();
    let b = api::heat_kernel(0.1, [1.0, 2.0], [0.2, 0.3]).unwrap();
    assert!(a > 0.0 && (a - b).abs() < 1e-14);
}

#[test]
fn simulate_returns_one_row_per_mesh_time() {
    let rows = api::simulate(r#"{"b": 1.0, "dt": 0.01, "horizon": 0.05, "cutoff": 6, "grid": 20}"#).unwrap();
    assert_eq!(rows.len(), 6);
    assert_eq!(rows[0], (0.0, 0.0, 0.0));
    assert!(api::simulate("{}").is_err());
}

#[test]
fn fast_check_by_number() {
    assert!(api::run_check(4).unwrap().0);
    assert!(api::run_check(13).is_err());
}
