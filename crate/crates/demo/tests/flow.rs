use serde_json::Value;
use tube_demo::{certify, default_shape_margin, stress, synthesize};

fn parse(s: String) -> Value {
    serde_json::from_str(&s).unwrap()
}

#[test]
fn synthesize_certify_stress() {
    let g = parse(synthesize(0.1).unwrap());
    assert!(g["residual"].as_f64().unwrap() <= 1e-8);

    let c = parse(certify(default_shape_margin()).unwrap());
    assert_eq!(c["verified"], Value::Bool(true));
    assert!(c["gamma"].as_f64().unwrap() <= 1.0);
    assert!(!c["tube"].as_array().unwrap().is_empty());

    let m = parse(stress(12, 3, 7, 1.0).unwrap());
    assert_eq!(m["escapes"], 0);
    assert_eq!(m["starts"].as_array().unwrap().len(), 12);
}
