//! Small dense-vector helpers shared by every module.
//!
//! All dot products in the crate are accumulated strictly left to right in
//! `f64`, one fused multiply-add per component. The batched kernel in
//! [`crate::classifier`] reproduces that order lane by lane, so any two code
//! paths that compute the same similarity agree to the last bit.

/// Sequential dot product: `acc = fma(a[i], b[i], acc)` for i = 0, 1, ...
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = 0.0f64;
    for (x, y) in a.iter().zip(b) {
        acc = x.mul_add(*y, acc);
    }
    acc
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Divides `a` by its L2 norm in place. Returns the norm; a zero vector is
/// left untouched.
pub fn normalize_in_place(a: &mut [f64]) -> f64 {
    let n = norm(a);
    if n > 0.0 {
        for v in a.iter_mut() {
            *v /= n;
        }
    }
    n
}

/// Rounds every component to the nearest `f32`. Stored vectors (samples and
/// model units) live on the single-precision grid so model files are lossless.
pub fn snap_to_f32(a: &mut [f64]) {
    for v in a.iter_mut() {
        *v = *v as f32 as f64;
    }
}

pub fn is_f32_exact(a: &[f64]) -> bool {
    a.iter().all(|&v| (v as f32 as f64) == v)
}
