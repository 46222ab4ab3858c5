//! wasm-bindgen bindings for the browser demo. Results cross the boundary
//! as JSON strings.

pub mod demo;

use serde::Serialize;
use wasm_bindgen::prelude::*;

fn js_err(e: spce_core::Error) -> JsError {
    JsError::new(&e.to_string())
}

fn to_json<T: Serialize>(v: &T) -> String {
    serde_json::to_string(v).expect("plain data serializes")
}

#[wasm_bindgen]
pub struct Bimodal(demo::BimodalDemo);

#[wasm_bindgen]
impl Bimodal {
    #[wasm_bindgen(constructor)]
    pub fn new(n_points: usize, replicas: usize, order: usize, seed: u32) -> Result<Bimodal, JsError> {
        demo::BimodalDemo::build(n_points, replicas, order, seed.into())
            .map(Bimodal)
            .map_err(js_err)
    }

    #[wasm_bindgen(js_name = nTerms)]
    pub fn n_terms(&self) -> usize {
        self.0.n_terms()
    }

    /// `{lambda, grid, surrogate, analytic, w1}`.
    pub fn density(&self, lambda: f64, samples: usize, seed: u32) -> Result<String, JsError> {
        self.0.density(lambda, samples, seed.into()).map(|d| to_json(&d)).map_err(js_err)
    }
}

#[wasm_bindgen]
pub struct Field(demo::FieldDemo);

#[wasm_bindgen]
impl Field {
    #[wasm_bindgen(constructor)]
    pub fn new(n_points: usize, replicas: usize, eps: f64, seed: u32) -> Result<Field, JsError> {
        demo::FieldDemo::build(n_points, replicas, eps, seed.into())
            .map(Field)
            .map_err(js_err)
    }

    /// KLE spectrum, pointwise moments and Sobol curves.
    pub fn summary(&self) -> String {
        to_json(&self.0.summary())
    }

    /// Conditional mean, sd and sample fields at one parameter point.
    pub fn conditional(&self, lambda: Vec<f64>, n_draws: usize, seed: u32) -> Result<String, JsError> {
        self.0
            .conditional(&lambda, n_draws, seed.into())
            .map(|c| to_json(&c))
            .map_err(js_err)
    }

    /// `[lower..., upper...]`.
    pub fn bounds(&self) -> Vec<f64> {
        let (mut lo, hi) = self.0.bounds();
        lo.extend(hi);
        lo
    }
}
