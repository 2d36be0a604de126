mod common;

use common::*;
use csav::grid::make_grid;
use std::f64::consts::PI;

#[test]
fn every_scheme_matches_the_dense_oracle() {
    let cases = oracle_cases();
    assert_eq!(cases.len(), 13);
    for case in &cases {
        assert!(
            case.worst() <= 1e-10,
            "{}: field {:.3e}, scalars {:.3e}",
            case.label,
            case.field_error,
            case.scalar_error
        );
    }
}

#[test]
fn dense_laplacian_annihilates_constants_and_is_symmetric() {
    let g = make_grid(2.0 * PI, 1.0, 8, 4).unwrap();
    let lap = neg_laplacian(&g);
    let ones = nalgebra::DVector::from_element(g.len(), 1.0);
    assert!((&lap * ones).amax() < 1e-10);
    assert!((&lap - lap.transpose()).amax() < 1e-10);
}

#[test]
fn dense_laplacian_matches_a_resolved_mode() {
    let g = make_grid(2.0 * PI, 2.0 * PI, 8, 8).unwrap();
    let f = csav::grid::ScalarField::from_fn(&g, |x, y| (2.0 * x).sin() * (3.0 * y).cos());
    let lf = neg_laplacian(&g) * to_dense(&f);
    assert!(max_diff(&f.scale(13.0), &lf) < 1e-10);
}
