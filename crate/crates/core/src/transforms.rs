//! Finite transform sets (pixel shifts combined with small rotations) and the
//! transform-max similarity `max_t v · T_t x`.
//!
//! Every transform is precomputed once as a sparse linear map over the
//! row-major 28x28 grid: each output pixel lists the input pixels it reads and
//! their bilinear weights. Applying a transform is then a gather plus a
//! re-normalization back onto the unit sphere.

use thiserror::Error;

use crate::dataset::{COLS, PIXELS, ROWS};
use crate::vector;

/// Rotation pivot in pixel coordinates (row, col).
pub const ROTATION_CENTER: f64 = 14.0;
pub const MAX_SHIFT: u32 = 3;
pub const MAX_ROTATION_DEGREES: f64 = 30.0;

#[derive(Debug, Error, PartialEq)]
pub enum TransformError {
    #[error("transform spec out of range: {0}")]
    SpecOutOfRange(String),
}

/// Shifts up to `max_shift` pixels along each axis, crossed with a list of
/// rotation angles in degrees.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformSpec {
    pub max_shift: u32,
    pub rotation_degrees: Vec<f64>,
}

impl TransformSpec {
    pub fn new(max_shift: u32, rotation_degrees: Vec<f64>) -> Self {
        TransformSpec {
            max_shift,
            rotation_degrees,
        }
    }

    pub fn identity() -> Self {
        Self::new(0, vec![0.0])
    }

    pub fn shifts(max_shift: u32) -> Self {
        Self::new(max_shift, vec![0.0])
    }

    /// Number of transforms the spec generates.
    pub fn size(&self) -> usize {
        let side = 2 * self.max_shift as usize + 1;
        side * side * self.rotation_degrees.len()
    }

    fn validate(&self) -> Result<(), TransformError> {
        if self.max_shift > MAX_SHIFT {
            return Err(TransformError::SpecOutOfRange(format!(
                "max_shift {} exceeds {MAX_SHIFT}",
                self.max_shift
            )));
        }
        if self.rotation_degrees.is_empty() {
            return Err(TransformError::SpecOutOfRange(
                "rotation list is empty".into(),
            ));
        }
        for (i, &a) in self.rotation_degrees.iter().enumerate() {
            if !a.is_finite() || a.abs() > MAX_ROTATION_DEGREES {
                return Err(TransformError::SpecOutOfRange(format!(
                    "rotation {a} outside [-30, 30]"
                )));
            }
            if self.rotation_degrees[..i].contains(&a) {
                return Err(TransformError::SpecOutOfRange(format!(
                    "rotation {a} listed twice"
                )));
            }
        }
        if !self.rotation_degrees.contains(&0.0) {
            return Err(TransformError::SpecOutOfRange(
                "rotation list must include 0 so the identity is in the bank".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
enum Map {
    Identity,
    /// CSR: output pixel `o` reads `sources[offsets[o]..offsets[o+1]]`.
    Sparse {
        offsets: Vec<u32>,
        sources: Vec<u16>,
        weights: Vec<f64>,
    },
}

/// A rotation about [`ROTATION_CENTER`] followed by an integer shift.
#[derive(Debug, Clone)]
pub struct Transform {
    dx: i32,
    dy: i32,
    degrees: f64,
    map: Map,
}

impl Transform {
    /// `dx` moves content right, `dy` moves it down; positive `degrees`
    /// rotate counter-clockwise as displayed.
    pub fn new(dx: i32, dy: i32, degrees: f64) -> Self {
        if dx == 0 && dy == 0 && degrees == 0.0 {
            return Transform {
                dx,
                dy,
                degrees,
                map: Map::Identity,
            };
        }
        let (sin, cos) = degrees.to_radians().sin_cos();
        let mut offsets = Vec::with_capacity(PIXELS + 1);
        let mut sources = Vec::new();
        let mut weights = Vec::new();
        offsets.push(0);
        for r in 0..ROWS {
            for c in 0..COLS {
                // undo the shift, then the rotation
                let xd = (c as i32 - dx) as f64 - ROTATION_CENTER;
                let yd = (r as i32 - dy) as f64 - ROTATION_CENTER;
                let sx = cos * xd - sin * yd + ROTATION_CENTER;
                let sy = sin * xd + cos * yd + ROTATION_CENTER;
                let x0 = sx.floor();
                let y0 = sy.floor();
                let fx = sx - x0;
                let fy = sy - y0;
                let taps = [
                    (y0, x0, (1.0 - fy) * (1.0 - fx)),
                    (y0, x0 + 1.0, (1.0 - fy) * fx),
                    (y0 + 1.0, x0, fy * (1.0 - fx)),
                    (y0 + 1.0, x0 + 1.0, fy * fx),
                ];
                for (ty, tx, w) in taps {
                    if w > 0.0 && (0.0..ROWS as f64).contains(&ty) && (0.0..COLS as f64).contains(&tx) {
                        sources.push((ty as usize * COLS + tx as usize) as u16);
                        weights.push(w);
                    }
                }
                offsets.push(sources.len() as u32);
            }
        }
        Transform {
            dx,
            dy,
            degrees,
            map: Map::Sparse {
                offsets,
                sources,
                weights,
            },
        }
    }

    pub fn identity() -> Self {
        Self::new(0, 0, 0.0)
    }

    pub fn is_identity(&self) -> bool {
        matches!(self.map, Map::Identity)
    }

    pub fn dx(&self) -> i32 {
        self.dx
    }

    pub fn dy(&self) -> i32 {
        self.dy
    }

    pub fn degrees(&self) -> f64 {
        self.degrees
    }

    /// Maps `x` and re-normalizes. The identity returns an exact copy; an
    /// image pushed entirely out of frame comes back as the zero vector.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), PIXELS);
        match &self.map {
            Map::Identity => x.to_vec(),
            Map::Sparse {
                offsets,
                sources,
                weights,
            } => {
                let mut out = vec![0.0; PIXELS];
                for (o, slot) in out.iter_mut().enumerate() {
                    let (lo, hi) = (offsets[o] as usize, offsets[o + 1] as usize);
                    let mut acc = 0.0;
                    for (&s, &w) in sources[lo..hi].iter().zip(&weights[lo..hi]) {
                        acc += w * x[s as usize];
                    }
                    *slot = acc;
                }
                vector::normalize_in_place(&mut out);
                out
            }
        }
    }
}

pub fn apply(t: &Transform, x: &[f64]) -> Vec<f64> {
    t.apply(x)
}

/// The materialized transform set for one [`TransformSpec`]. The identity is
/// always at index 0; the rest follow in (rotation, dy, dx) order.
#[derive(Debug, Clone)]
pub struct TransformBank {
    transforms: Vec<Transform>,
    spec: TransformSpec,
}

impl TransformBank {
    pub fn build(spec: TransformSpec) -> Result<Self, TransformError> {
        spec.validate()?;
        let s = spec.max_shift as i32;
        let mut transforms = vec![Transform::identity()];
        for &deg in &spec.rotation_degrees {
            for dy in -s..=s {
                for dx in -s..=s {
                    if dx == 0 && dy == 0 && deg == 0.0 {
                        continue;
                    }
                    transforms.push(Transform::new(dx, dy, deg));
                }
            }
        }
        debug_assert_eq!(transforms.len(), spec.size());
        Ok(TransformBank { transforms, spec })
    }

    pub fn identity() -> Self {
        Self::build(TransformSpec::identity()).expect("identity spec is valid")
    }

    pub fn spec(&self) -> &TransformSpec {
        &self.spec
    }

    pub fn len(&self) -> usize {
        self.transforms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transforms.is_empty()
    }

    pub fn is_identity_only(&self) -> bool {
        self.transforms.len() == 1
    }

    pub fn transforms(&self) -> &[Transform] {
        &self.transforms
    }

    /// All transformed copies of `x`, in bank order.
    pub fn images(&self, x: &[f64]) -> Vec<Vec<f64>> {
        self.transforms.iter().map(|t| t.apply(x)).collect()
    }

    /// `(index, similarity)` of the transform maximizing `v · T x`. Ties go to
    /// the lowest index.
    pub fn best_transform(&self, v: &[f64], x: &[f64]) -> (usize, f64) {
        let mut best = (0, f64::NEG_INFINITY);
        for (i, t) in self.transforms.iter().enumerate() {
            let p = vector::dot(v, &t.apply(x));
            if p > best.1 {
                best = (i, p);
            }
        }
        best
    }

    pub fn max_similarity(&self, v: &[f64], x: &[f64]) -> f64 {
        self.best_transform(v, x).1
    }
}

pub fn build_bank(spec: TransformSpec) -> Result<TransformBank, TransformError> {
    TransformBank::build(spec)
}

pub fn max_similarity(v: &[f64], x: &[f64], bank: &TransformBank) -> f64 {
    bank.max_similarity(v, x)
}
