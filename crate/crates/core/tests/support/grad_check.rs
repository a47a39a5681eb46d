#![allow(dead_code)]

use candle_core::{DType, Device, Shape, Tensor, Var};
use rand::Rng;

pub const STEP: f64 = 1e-6;
pub const REL_TOL: f64 = 1e-4;

pub fn probe<R: Rng>(rng: &mut R, shape: impl Into<Shape>, lo: f64, hi: f64) -> Tensor {
    let shape = shape.into();
    let v: Vec<f64> = (0..shape.elem_count()).map(|_| rng.random_range(lo..hi)).collect();
    Tensor::from_vec(v, shape, &Device::Cpu).unwrap()
}

fn value(t: &Tensor) -> f64 {
    t.to_dtype(DType::F64).unwrap().to_scalar::<f64>().unwrap()
}

/// Backprop gradients of `f` vs central differences, entry by entry.
pub fn assert_gradients(vars: &[&Var], f: impl Fn(&[&Tensor]) -> Tensor) {
    let tensors: Vec<&Tensor> = vars.iter().map(|v| v.as_tensor()).collect();
    let grads = f(&tensors).backward().unwrap();
    for (vi, var) in vars.iter().enumerate() {
        let analytic: Vec<f64> = grads
            .get(var.as_tensor())
            .map(|g| g.flatten_all().unwrap().to_vec1().unwrap())
            .unwrap_or_else(|| vec![0.0; var.elem_count()]);
        let base: Vec<f64> = var.as_tensor().flatten_all().unwrap().to_vec1().unwrap();
        for i in 0..base.len() {
            let shifted = |d: f64| {
                let mut v = base.clone();
                v[i] += d;
                let t = Tensor::from_vec(v, var.shape(), &Device::Cpu).unwrap();
                let args: Vec<&Tensor> = tensors.iter().enumerate().map(|(j, x)| if j == vi { &t } else { *x }).collect();
                value(&f(&args))
            };
            let numeric = (shifted(STEP) - shifted(-STEP)) / (2.0 * STEP);
            let a = analytic[i];
            let scale = a.abs().max(numeric.abs());
            assert!(
                (a - numeric).abs() <= REL_TOL * scale + 1e-10,
                "var {vi} entry {i}: analytic {a}, numeric {numeric}"
            );
        }
    }
}
