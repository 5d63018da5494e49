//! Browser exports. Each returns a flat `Float64Array`; see `www/main.js`.

use wasm_bindgen::prelude::*;

pub mod demo;

fn js(e: weaktrans_core::Error) -> JsError {
    JsError::new(&e.to_string())
}

#[wasm_bindgen(js_name = weakMomentCurve)]
pub fn weak_moment_curve(model: &str, theta: Vec<f64>, order: u32, s_lo: f64, s_hi: f64, n: usize) -> Result<Vec<f64>, JsError> {
    demo::weak_moment_curve(model, &theta, order, s_lo, s_hi, n).map_err(js)
}

#[wasm_bindgen(js_name = behrensFisherRows)]
pub fn behrens_fisher_rows(
    mu1: f64,
    mu2: f64,
    sigma1: f64,
    sigma2: f64,
    sigma_lo: f64,
    sigma_hi: f64,
    s_hi: f64,
) -> Result<Vec<f64>, JsError> {
    demo::behrens_fisher_rows(mu1, mu2, sigma1, sigma2, sigma_lo, sigma_hi, s_hi).map_err(js)
}

#[wasm_bindgen(js_name = stieltjesGaps)]
pub fn stieltjes_gaps(eps: f64, s: f64) -> Result<Vec<f64>, JsError> {
    demo::stieltjes_gaps(eps, s).map_err(js)
}
