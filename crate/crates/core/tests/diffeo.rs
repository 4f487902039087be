use std::time::Instant;

use paracflow::diffeo::testmaps::bump_field_map;
use paracflow::diffeo::{
    approximate_single_coordinate, decompose_near_identity, GridSpec, PaddedConfig, SingleCoordinateFactor,
};
use paracflow::TrainConfig;

#[test]
fn one_dim_trained_pipeline_reaches_tolerance() {
    let tau = SingleCoordinateFactor::new(1, 0, |x| x[0] + 0.3 * (-x[0] * x[0]).exp() * x[0].tanh()).unwrap();
    let grid = GridSpec::cube(1, -2.0, 2.0, 401).unwrap();
    let t = Instant::now();
    let cfg = PaddedConfig { train: TrainConfig { epochs: 400, ..Default::default() }, ..Default::default() };
    let (_, report) = approximate_single_coordinate(&tau, &grid, &cfg).unwrap();
    println!("{report:?} in {:?}", t.elapsed());
    assert!(report.sup_error <= 1e-2);
}

#[test]
fn three_dim_factorization_on_fine_grid() {
    let f = bump_field_map(3, 11, 0.1).unwrap();
    let grid = GridSpec::cube(3, -1.0, 1.0, 50).unwrap();
    let t = Instant::now();
    let fac = decompose_near_identity(&f, &grid).unwrap();
    println!("{} in {:?}", fac.report.to_json().unwrap(), t.elapsed());
    assert_eq!(fac.factors.len(), 3);
    assert!(fac.report.reconstruction_error <= 1e-6);
}
