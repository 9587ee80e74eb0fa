use hybrid_tube::gait::{baseline_shape, synthesize_gait, SynthesisOptions, DEFAULT_SHAPE_MARGIN};
use hybrid_tube::io::{export_tube, tube_from_csv, tube_to_csv};
use hybrid_tube::montecarlo::{monte_carlo, TubeRegion};
use hybrid_tube::ode::OdeOptions;
use hybrid_tube::system::HybridSystem;
use hybrid_tube::verify::{rescale_tube, VerifyOptions};
use hybrid_tube::walker::WalkerParams;
use nalgebra::DVector;

#[test]
fn synthesize_certify_and_sample() {
    let gait = synthesize_gait(&WalkerParams::default(), &SynthesisOptions::default()).unwrap();
    assert!(gait.residual <= 1e-8);
    assert!(gait.period > 0.0);
    assert_eq!(gait.nominal.len(), gait.nominal_times.len());
    // The stored reference passes through its own samples.
    for (t, x) in gait.nominal_times.iter().zip(&gait.nominal).step_by(37) {
        let r = gait.reference(*t);
        assert!((0..4).all(|i| (r[i] - x[i]).abs() < 1e-12));
    }

    let x_star = DVector::from_row_slice(&gait.x_star);
    let sys = gait.closed_loop([0.0; 4]);
    let alpha0 = baseline_shape(&gait, [0.0; 4], DEFAULT_SHAPE_MARGIN).unwrap();
    let (s, r) = rescale_tube(&sys, &x_star, &alpha0, 1e-3, &VerifyOptions::default()).unwrap();
    assert!(r.verified && r.gamma <= 1.0);
    assert!(r.t_under <= r.t_over);
    assert!(s > 0.0);

    // CSV export covers every sample of the embedding.
    let rows = export_tube(&r, sys.guard()).unwrap();
    assert_eq!(rows.len(), r.tube.len());
    assert!(rows.iter().any(|row| row.slice_nonempty));
    let back = tube_from_csv(&tube_to_csv(&rows).unwrap()).unwrap();
    assert_eq!(back, rows);
    for row in back.iter().step_by(50) {
        row.normotope().unwrap();
    }

    let region = TubeRegion::from_result(&r);
    let a = monte_carlo(&sys, &region, &x_star, 8, 3, 5, &OdeOptions::default());
    let b = monte_carlo(&sys, &region, &x_star, 8, 3, 5, &OdeOptions::default());
    assert_eq!(a.escapes, 0);
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    assert!(a.trajectories.iter().all(|t| t.crossings == 3));
    let c = monte_carlo(&sys, &region, &x_star, 8, 1, 6, &OdeOptions::default());
    assert_ne!(a.trajectories[0].start, c.trajectories[0].start);
}
