use weaktrans_core::behrens_fisher::w0_closed_form;
use weaktrans_wasm::demo::*;

#[test]
fn log_grid_endpoints_and_errors() {
    let g = log_grid(0.5, 50.0, 5).unwrap();
    assert_eq!(g.len(), 5);
    assert_eq!((g[0], g[4]), (0.5, 50.0));
    assert!((g[2] - 5.0).abs() < 1e-12);
    assert!(log_grid(0.0, 1.0, 5).is_err());
    assert!(log_grid(1.0, 1.0, 5).is_err());
    assert!(log_grid(1.0, 2.0, 1).is_err());
}

#[test]
fn curve_matches_closed_form_for_gaussian_location() {
    let c = weak_moment_curve("gaussian_location", &[0.7], 0, 0.5, 20.0, 8).unwrap();
    assert_eq!(c.len(), 16);
    for p in c.chunks(2) {
        assert!((p[1] - w0_closed_form(0.7, 1.0, p[0]).unwrap()).abs() < 1e-10);
    }
}

#[test]
fn curve_is_finite_for_cauchy_and_rejects_bad_input() {
    let c = weak_moment_curve("cauchy_location", &[1.0], 6, 0.5, 5.0, 6).unwrap();
    assert!(c.iter().all(|v| v.is_finite()));
    assert!(weak_moment_curve("weibull", &[1.0], 0, 0.5, 5.0, 6).is_err());
    assert!(weak_moment_curve("lognormal", &[0.0, -1.0], 0, 0.5, 5.0, 6).is_err());
}

#[test]
fn behrens_fisher_rows_shape_and_monotone_nuisance() {
    let r = behrens_fisher_rows(0.0, 1.0, 1.0, 1.5, 0.5, 2.0, 100.0).unwrap();
    assert_eq!(r.len(), 24 * 4);
    let gaps: Vec<f64> = r.chunks(4).map(|row| row[1]).collect();
    assert!(gaps.windows(2).all(|w| w[1] < w[0]));
    assert!(behrens_fisher_rows(0.0, 0.0, 1.0, 1.5, 0.5, 2.0, 100.0).is_err());
    assert!(behrens_fisher_rows(0.0, 1.0, 1.0, 1.5, 2.0, 0.5, 100.0).is_err());
}

#[test]
fn stieltjes_gaps_split_classical_and_weak() {
    let g = stieltjes_gaps(0.5, 1.0).unwrap();
    assert_eq!(g.len(), 16);
    assert!(g[..11].iter().all(|&v| v < 1e-8));
    assert!(g[11..].iter().fold(0.0_f64, |a, &v| a.max(v)) > 1e-3);
    assert!(stieltjes_gaps(2.0, 1.0).is_err());
}
