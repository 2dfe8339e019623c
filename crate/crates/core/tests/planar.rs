use extremal::nonlinearity::Nonlinearity;
use extremal::planar::{
    find_lambda_star_2d, minimal_solve_2d, monotone_solve_2d, read_binary, shear_flow_table, sup_bound_check, sup_bound_sweep, write_binary, write_xyu_csv,
    DiskMask, Drift, PlanarGrid,
};
use extremal::radial::{find_lambda_star, RadialGrid, RadialPotential, SolverOptions};

fn mems2() -> Nonlinearity {
    Nonlinearity::mems(2.0).unwrap()
}

#[test]
fn sup_u_matches_fine_reference() {
    let f = mems2();
    let o = SolverOptions::default();
    let star = find_lambda_star_2d(&PlanarGrid::new(129, Drift::none()), &f, 1e-6, 1.0, &o).unwrap();
    let lambda = 0.5 * star.lambda_star_low;
    let coarse = monotone_solve_2d(&PlanarGrid::new(129, Drift::none()), &f, lambda, &o).unwrap();
    // the reference runs on the iterative solver path
    let fine = minimal_solve_2d(&PlanarGrid::new(513, Drift::none()), &f, lambda, &o).unwrap();
    assert!((coarse.sup_u - fine.sup_u).abs() < 1e-3, "{} vs {}", coarse.sup_u, fine.sup_u);
    assert!(coarse.min_increment >= -1e-12);
}

#[test]
fn inscribed_disk_matches_radial_threshold() {
    let f = mems2();
    let o = SolverOptions::default();
    // radial weight e^γ corresponds to planar drift ∇(-γ) after scaling r = 2|x - centre|
    let radial = find_lambda_star(&RadialGrid::uniform(2, 1024, RadialPotential::Quadratic { a: 0.25 }).unwrap(), &f, 1e-8, &o).unwrap();
    let drift = Drift::gradient("-(2|x-c|)^2/4", |x, y| -((x - 0.5).powi(2) + (y - 0.5).powi(2)));
    let grid = PlanarGrid::new(129, drift).with_mask(DiskMask::inscribed());
    let planar = find_lambda_star_2d(&grid, &f, 1e-6, 1.0, &o).unwrap();
    let expected = 4.0 * radial.lambda_star_low;
    assert!((planar.lambda_star_low - expected).abs() / expected < 0.05, "{} vs {expected}", planar.lambda_star_low);
}

#[test]
fn sup_bound_ratio_stays_bounded_near_threshold() {
    let f = mems2();
    let o = SolverOptions::default();
    let grid = PlanarGrid::new(65, Drift::none());
    let star = find_lambda_star_2d(&grid, &f, 1e-8, 1.0, &o).unwrap();
    let points: Vec<_> = [0.5, 0.7, 0.9, 0.95, 0.99].iter().map(|t| minimal_solve_2d(&grid, &f, t * star.lambda_star_low, &o).unwrap()).collect();
    let r = sup_bound_sweep(&grid, &points, &f, 2.0, 10.0).unwrap();
    assert!(r.pass, "{r:?}");
    assert!(r.series.windows(2).all(|w| w[1] > w[0]));
    assert!(sup_bound_check(&grid, &points[0], &f, 1.0).is_err());
}

#[test]
fn shear_flow_thresholds_are_positive() {
    let f = mems2();
    let o = SolverOptions::default();
    let table = shear_flow_table(33, &f, &[0.0, 4.0, 16.0], 1e-6, &o);
    let base = find_lambda_star_2d(&PlanarGrid::new(33, Drift::none()), &f, 1e-6, 1.0, &o).unwrap();
    for (a, r) in &table {
        let r = r.as_ref().unwrap();
        assert!(r.lambda_star_low > 0.0);
        if *a == 0.0 {
            assert_eq!(r.lambda_star_low, base.lambda_star_low);
        }
    }
}

#[test]
fn profile_files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let f = mems2();
    let grid = PlanarGrid::new(9, Drift::none());
    let p = minimal_solve_2d(&grid, &f, 1.0, &SolverOptions::default()).unwrap();
    write_binary(&dir.path().join("u.bin"), 9, &p.u).unwrap();
    assert_eq!(read_binary(&dir.path().join("u.bin")).unwrap(), (9, p.u.clone()));
    write_xyu_csv(&dir.path().join("u.csv"), &grid, &p.u).unwrap();
    let text = std::fs::read_to_string(dir.path().join("u.csv")).unwrap();
    let rows: Vec<&str> = text.lines().collect();
    assert_eq!(rows[0], "x,y,u");
    assert_eq!(rows.len(), 82);
    let last: Vec<f64> = rows[81].split(',').map(|s| s.parse().unwrap()).collect();
    assert_eq!(last[2], p.u[80]);
}
