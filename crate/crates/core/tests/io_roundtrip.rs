use hybrid_tube::io::{tube_from_csv, tube_to_csv, Certificate, TubeRow};
use hybrid_tube::verify::{Conditions, GammaTerm};
use proptest::prelude::*;

fn row(n: usize) -> impl Strategy<Value = TubeRow> {
    (
        -1e3..1e3f64,
        prop::collection::vec(prop::num::f64::NORMAL, n),
        prop::collection::vec(-1e6..1e6f64, n * n),
        1e-9..1e3f64,
        any::<bool>(),
        0.0..1e2f64,
    )
        .prop_map(|(time, center, shape, offset, slice_nonempty, slice_radius)| TubeRow {
            time,
            center,
            shape,
            offset,
            slice_nonempty,
            slice_radius,
        })
}

fn rows() -> impl Strategy<Value = Vec<TubeRow>> {
    (1usize..6).prop_flat_map(|n| prop::collection::vec(row(n), 1..20))
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * a.abs().max(1.0)
}

proptest! {
    #[test]
    fn csv_round_trip(rs in rows()) {
        let back = tube_from_csv(&tube_to_csv(&rs).unwrap()).unwrap();
        prop_assert_eq!(back.len(), rs.len());
        for (a, b) in rs.iter().zip(&back) {
            prop_assert!(close(a.time, b.time) && close(a.offset, b.offset) && close(a.slice_radius, b.slice_radius));
            prop_assert_eq!(a.slice_nonempty, b.slice_nonempty);
            prop_assert!(a.center.iter().zip(&b.center).all(|(x, y)| close(*x, *y)));
            prop_assert!(a.shape.iter().zip(&b.shape).all(|(x, y)| close(*x, *y)));
        }
    }

    #[test]
    fn csv_emit_is_stable(rs in rows()) {
        let once = tube_to_csv(&rs).unwrap();
        prop_assert_eq!(tube_to_csv(&tube_from_csv(&once).unwrap()).unwrap(), once);
    }
}

#[test]
fn certificate_json_round_trip() {
    let cert = Certificate {
        verified: true,
        gamma: 0.987654321,
        t_under: 0.397,
        t_over: 0.39875,
        conditions: Conditions { above: true, below: true, transversal_before: true, transversal_window: true },
        s_star: 0.0052833557,
        x_star: vec![1.0, 0.17, 0.25, 0.083],
        alpha0: (0..16).map(|i| if i % 5 == 0 { 1.0 + i as f64 } else { 0.1 * i as f64 }).collect(),
        k_track: [0.1, -0.2, 0.3, -0.4],
        k_ds: [3.6, 7.6, -2.1, -3.5],
        gamma_terms: vec![GammaTerm { time: 0.398, center_term: 0.5, spread_term: 0.4 }],
    };
    let dir = std::env::temp_dir().join(format!("cert-rt-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("c.json");
    hybrid_tube::io::write_json(&path, &cert).unwrap();
    let back: Certificate = hybrid_tube::io::read_json(&path).unwrap();
    assert_eq!(back, cert);
    assert_eq!(back.shape().unwrap()[(0, 0)], 1.0 / cert.s_star);
    std::fs::remove_dir_all(dir).ok();
}

#[test]
fn malformed_csv_is_an_error() {
    assert!(tube_from_csv("time,c0,a00,y,slice_nonempty,slice_radius\n0,1,x,1,0,0\n").is_err());
    assert!(tube_from_csv("a,b,c\n1,2,3\n").is_err());
}
