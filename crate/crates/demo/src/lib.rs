//! Browser bindings: synthesize a gait, certify its tube, and throw
//! trajectories at it. Results come back as JSON strings.

use std::cell::RefCell;

use hybrid_tube::gait::{baseline_shape, synthesize_gait, GaitSpec, SynthesisOptions, DEFAULT_SHAPE_MARGIN};
use hybrid_tube::montecarlo::{monte_carlo, TubeRegion};
use hybrid_tube::ode::OdeOptions;
use hybrid_tube::verify::{rescale_tube, VerifyOptions};
use hybrid_tube::walker::WalkerParams;
use nalgebra::DVector;
use serde_json::json;
use wasm_bindgen::prelude::*;

struct Session {
    gait: GaitSpec,
    region: Option<TubeRegion>,
}

thread_local! {
    static SESSION: RefCell<Option<Session>> = const { RefCell::new(None) };
}

fn js(e: impl std::fmt::Display) -> JsValue {
    JsValue::from_str(&e.to_string())
}

/// Synthesizes a gait whose step starts `clearance` above touchdown.
#[wasm_bindgen]
pub fn synthesize(clearance: f64) -> Result<String, JsValue> {
    let opts = SynthesisOptions { clearance, ..SynthesisOptions::default() };
    let gait = synthesize_gait(&WalkerParams::default(), &opts).map_err(js)?;
    let out = json!({
        "period": gait.period,
        "residual": gait.residual,
        "x_star": gait.x_star,
        "nominal": gait.nominal.iter().map(|x| [x[0], x[1]]).collect::<Vec<_>>(),
    });
    SESSION.with(|s| *s.borrow_mut() = Some(Session { gait, region: None }));
    Ok(out.to_string())
}

/// Certifies the largest tube around the current gait. `shape_margin` is
/// the contraction slack of the initial shape.
#[wasm_bindgen]
pub fn certify(shape_margin: f64) -> Result<String, JsValue> {
    SESSION.with(|s| {
        let mut s = s.borrow_mut();
        let session = s.as_mut().ok_or_else(|| js("no gait yet"))?;
        let gait = &session.gait;
        let alpha0 = baseline_shape(gait, gait.k_track, shape_margin).map_err(js)?;
        let x_star = DVector::from_row_slice(&gait.x_star);
        let (s_star, r) =
            rescale_tube(&gait.closed_loop(gait.k_track), &x_star, &alpha0, 1e-3, &VerifyOptions::default()).map_err(js)?;
        let region = TubeRegion::from_result(&r);
        // (r, θ) projection: center and box half-widths.
        let tube: Vec<[f64; 5]> = region
            .states
            .iter()
            .zip(&region.times)
            .map(|(n, t)| {
                let b = n.bounding_box();
                [*t, n.center()[0], n.center()[1], b[0].width() / 2.0, b[1].width() / 2.0]
            })
            .collect();
        session.region = Some(region);
        Ok(json!({
            "verified": r.verified,
            "gamma": r.gamma,
            "s_star": s_star,
            "t_under": r.t_under,
            "t_over": r.t_over,
            "tube": tube,
        })
        .to_string())
    })
}

/// Monte Carlo from the boundary of the certified tube, with every offset
/// multiplied by `inflate`.
#[wasm_bindgen]
pub fn stress(n_traj: usize, n_crossings: usize, seed: u64, inflate: f64) -> Result<String, JsValue> {
    SESSION.with(|s| {
        let s = s.borrow();
        let session = s.as_ref().ok_or_else(|| js("no gait yet"))?;
        let region = session.region.as_ref().ok_or_else(|| js("certify first"))?.inflated(inflate).map_err(js)?;
        let gait = &session.gait;
        let x_star = DVector::from_row_slice(&gait.x_star);
        let report = monte_carlo(
            &gait.closed_loop(gait.k_track),
            &region,
            &x_star,
            n_traj,
            n_crossings,
            seed,
            &OdeOptions::with_tolerance(1e-9),
        );
        Ok(json!({
            "escapes": report.escapes,
            "failures": report.failures,
            "max_post_norm": report.max_post_norm,
            "starts": report.trajectories.iter().map(|t| [t.start[0], t.start[1]]).collect::<Vec<_>>(),
            "escaped": report.trajectories.iter().map(|t| t.escape.is_some()).collect::<Vec<_>>(),
        })
        .to_string())
    })
}

/// Default initial-shape margin, for the page's input.
#[wasm_bindgen]
pub fn default_shape_margin() -> f64 {
    DEFAULT_SHAPE_MARGIN
}
