//! Shared test support: a 64-bit reference evaluator independent of the
//! f32 tape, plus a central-difference gradient harness.

#![allow(dead_code)]

/// Central-difference gradient of `f` (a 64-bit scalar function of flat
/// inputs) with respect to `inputs[which][coord]`.
pub fn central_diff(
    f: &dyn Fn(&[Vec<f64>]) -> f64,
    inputs: &[Vec<f64>],
    which: usize,
    coord: usize,
    step: f64,
) -> f64 {
    let mut plus = inputs.to_vec();
    plus[which][coord] += step;
    let mut minus = inputs.to_vec();
    minus[which][coord] -= step;
    (f(&plus) - f(&minus)) / (2.0 * step)
}

/// `|got - want| <= tol * max(1, |got|, |want|)` — relative with an
/// absolute floor, matching the way tolerances are quoted throughout.
pub fn close_rel(got: f64, want: f64, tol: f64) -> bool {
    (got - want).abs() <= tol * got.abs().max(want.abs()).max(1.0)
}

// --- 64-bit reference ops -------------------------------------------------

pub fn matmul64(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut c = vec![0.0; m * n];
    for i in 0..m {
        for j in 0..n {
            let mut s = 0.0;
            for p in 0..k {
                s += a[i * k + p] * b[p * n + j];
            }
            c[i * n + j] = s;
        }
    }
    c
}

pub fn sigmoid64(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub fn relu64(x: f64) -> f64 {
    x.max(0.0)
}

pub fn softmax64(v: &[f64]) -> Vec<f64> {
    let max = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = v.iter().map(|x| (x - max).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|x| x / s).collect()
}

/// Reference conv2d: input [ic,h,w], weight [oc,ic,k,k], zero padding.
#[allow(clippy::too_many_arguments)]
pub fn conv2d64(
    input: &[f64],
    weight: &[f64],
    bias: &[f64],
    ic: usize,
    h: usize,
    w: usize,
    oc: usize,
    k: usize,
    stride: usize,
    pad: usize,
) -> Vec<f64> {
    let oh = (h + 2 * pad - k) / stride + 1;
    let ow = (w + 2 * pad - k) / stride + 1;
    let mut out = vec![0.0; oc * oh * ow];
    for c in 0..oc {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut s = bias[c];
                for ci in 0..ic {
                    for ky in 0..k {
                        for kx in 0..k {
                            let iy = (oy * stride + ky) as isize - pad as isize;
                            let ix = (ox * stride + kx) as isize - pad as isize;
                            if iy >= 0 && iy < h as isize && ix >= 0 && ix < w as isize {
                                s += input[(ci * h + iy as usize) * w + ix as usize]
                                    * weight[((c * ic + ci) * k + ky) * k + kx];
                            }
                        }
                    }
                }
                out[(c * oh + oy) * ow + ox] = s;
            }
        }
    }
    out
}

/// Deterministic pseudo-random fill for test inputs (independent of the
/// crate's RNG plumbing).
pub fn wave(n: usize, freq: f64, phase: f64) -> Vec<f64> {
    (0..n).map(|i| (i as f64 * freq + phase).sin() * 0.7).collect()
}

pub fn to_f32(v: &[f64]) -> Vec<f32> {
    v.iter().map(|&x| x as f32).collect()
}
