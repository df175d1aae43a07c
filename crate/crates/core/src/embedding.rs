//! Embedding geometry on the unit sphere.
//!
//! Every vector that flows through retrieval and refinement is an
//! [`Embedding`]: finite, unit-norm, 64-bit. The refinement step is a
//! spherical linear interpolation from the previous query state toward an
//! answer embedding, and a session's current query is the left fold of that
//! step over all answers so far ([`refine_chain`]).

use std::f64::consts::PI;
use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Inputs with a norm below this are treated as the zero vector.
pub const ZERO_NORM: f64 = 1e-12;

/// Tolerance used when accepting an already-normalized vector.
pub const UNIT_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("vector norm is below {ZERO_NORM}")]
    ZeroVector,
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("vector contains a non-finite value at position {0}")]
    NonFinite(usize),
    #[error("embedding must have at least 2 dimensions, got {0}")]
    TooFewDimensions(usize),
    #[error("vector is not unit-norm (norm = {0})")]
    NotUnit(f64),
    #[error("inputs are antipodal (angle = {0} rad); the geodesic is undefined")]
    AntipodalInputs(f64),
    #[error("alpha must lie in [0, 1], got {0}")]
    InvalidAlpha(f64),
    #[error("parallel epsilon must be positive and finite, got {0}")]
    InvalidEpsilon(f64),
}

/// A finite unit-norm vector.
#[derive(Clone, PartialEq)]
pub struct Embedding {
    values: Vec<f64>,
}

impl Embedding {
    /// Scales `raw` to unit length.
    pub fn normalize(raw: &[f64]) -> Result<Self, GeometryError> {
        if raw.len() < 2 {
            return Err(GeometryError::TooFewDimensions(raw.len()));
        }
        if let Some(pos) = raw.iter().position(|v| !v.is_finite()) {
            return Err(GeometryError::NonFinite(pos));
        }
        let norm = l2_norm(raw);
        if !norm.is_finite() || norm < ZERO_NORM {
            return Err(GeometryError::ZeroVector);
        }
        Ok(Self {
            values: raw.iter().map(|v| v / norm).collect(),
        })
    }

    /// Like [`Embedding::normalize`], but also checks the dimension against one
    /// that has already been fixed elsewhere (an index, a session).
    pub fn normalize_with_dim(raw: &[f64], dim: usize) -> Result<Self, GeometryError> {
        if raw.len() != dim {
            return Err(GeometryError::DimensionMismatch {
                expected: dim,
                actual: raw.len(),
            });
        }
        Self::normalize(raw)
    }

    /// Wraps values that are already unit-norm without rescaling them, so
    /// that stored embeddings come back bit-for-bit.
    pub fn from_unit(values: Vec<f64>) -> Result<Self, GeometryError> {
        if values.len() < 2 {
            return Err(GeometryError::TooFewDimensions(values.len()));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(GeometryError::NonFinite(pos));
        }
        let norm = l2_norm(&values);
        if (norm - 1.0).abs() > UNIT_TOLERANCE {
            return Err(GeometryError::NotUnit(norm));
        }
        Ok(Self { values })
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.values
    }

    pub fn norm(&self) -> f64 {
        l2_norm(&self.values)
    }

    pub fn dot(&self, other: &Embedding) -> Result<f64, GeometryError> {
        check_dims(self, other)?;
        Ok(dot(&self.values, &other.values))
    }

    /// Binary layout: `u32` little-endian dimension followed by the values as
    /// little-endian `f64`.
    pub fn to_le_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(4 + 8 * self.values.len());
        out.extend_from_slice(&(self.values.len() as u32).to_le_bytes());
        for v in &self.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    /// Inverse of [`Embedding::to_le_bytes`]. Returns the embedding and the
    /// number of bytes consumed.
    pub fn from_le_bytes(bytes: &[u8]) -> Result<(Self, usize), GeometryError> {
        let header: [u8; 4] = bytes
            .get(..4)
            .and_then(|b| b.try_into().ok())
            .ok_or(GeometryError::TooFewDimensions(0))?;
        let dim = u32::from_le_bytes(header) as usize;
        let end = 4 + dim * 8;
        let body = bytes.get(4..end).ok_or(GeometryError::DimensionMismatch {
            expected: dim,
            actual: bytes.len().saturating_sub(4) / 8,
        })?;
        let values = body
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect();
        Ok((Self::from_unit(values)?, end))
    }
}

impl fmt::Debug for Embedding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Embedding(d={}, ", self.values.len())?;
        f.debug_list().entries(self.values.iter().take(4)).finish()?;
        if self.values.len() > 4 {
            write!(f, "..")?;
        }
        write!(f, ")")
    }
}

impl Serialize for Embedding {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.values.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Embedding {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let values = Vec::<f64>::deserialize(deserializer)?;
        Embedding::from_unit(values).map_err(serde::de::Error::custom)
    }
}

/// Refinement hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RefinementParams {
    /// Weight on the previous query state. `1.0` ignores answers entirely,
    /// `0.0` replaces the query with the latest answer.
    pub alpha: f64,
    /// Angles (radians) below this count as parallel.
    #[serde(default = "default_parallel_epsilon")]
    pub parallel_epsilon: f64,
}

fn default_parallel_epsilon() -> f64 {
    1e-7
}

impl Default for RefinementParams {
    fn default() -> Self {
        Self {
            alpha: 0.8,
            parallel_epsilon: default_parallel_epsilon(),
        }
    }
}

impl RefinementParams {
    pub fn new(alpha: f64) -> Result<Self, GeometryError> {
        let params = Self {
            alpha,
            ..Self::default()
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(GeometryError::InvalidAlpha(self.alpha));
        }
        if !(self.parallel_epsilon.is_finite() && self.parallel_epsilon > 0.0) {
            return Err(GeometryError::InvalidEpsilon(self.parallel_epsilon));
        }
        Ok(())
    }
}

/// Cosine similarity of two unit embeddings, clamped to `[-1, 1]`.
pub fn cosine_similarity(a: &Embedding, b: &Embedding) -> Result<f64, GeometryError> {
    Ok(a.dot(b)?.clamp(-1.0, 1.0))
}

/// Angle between two unit embeddings, in `[0, π]`.
///
/// Computed as `2·atan2(|a − b|, |a + b|)`, which equals `arccos(a·b)` for
/// unit vectors but keeps full precision near 0 and π where `arccos` loses
/// roughly half the significant digits.
pub fn angle_between(a: &Embedding, b: &Embedding) -> Result<f64, GeometryError> {
    check_dims(a, b)?;
    let (mut diff, mut sum) = (0.0, 0.0);
    for (x, y) in a.values.iter().zip(&b.values) {
        diff += (x - y) * (x - y);
        sum += (x + y) * (x + y);
    }
    Ok((2.0 * diff.sqrt().atan2(sum.sqrt())).clamp(0.0, PI))
}

/// Spherical linear interpolation from `previous` toward `answer`.
///
/// `e = sin((1-α)θ)/sin θ · answer + sin(αθ)/sin θ · previous`, so `α = 1`
/// returns `previous` and `α = 0` returns `answer`. Nearly parallel inputs
/// return `previous` unchanged; nearly antipodal inputs are an error.
pub fn slerp(
    previous: &Embedding,
    answer: &Embedding,
    params: &RefinementParams,
) -> Result<Embedding, GeometryError> {
    params.validate()?;
    let theta = angle_between(previous, answer)?;
    if theta < params.parallel_epsilon {
        return Ok(previous.clone());
    }
    if theta > PI - params.parallel_epsilon {
        return Err(GeometryError::AntipodalInputs(theta));
    }
    if params.alpha == 1.0 {
        return Ok(previous.clone());
    }
    if params.alpha == 0.0 {
        return Ok(answer.clone());
    }
    let sin_theta = theta.sin();
    let w_answer = ((1.0 - params.alpha) * theta).sin() / sin_theta;
    let w_previous = (params.alpha * theta).sin() / sin_theta;
    let mixed: Vec<f64> = previous
        .values
        .iter()
        .zip(&answer.values)
        .map(|(p, a)| w_answer * a + w_previous * p)
        .collect();
    Embedding::normalize(&mixed)
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("refinement failed at round {round}: {source}")]
pub struct RefineError {
    /// 1-based round whose answer could not be folded in.
    pub round: usize,
    #[source]
    pub source: GeometryError,
}

/// Folds [`slerp`] over `answers`, starting from `query`.
pub fn refine_chain(
    query: &Embedding,
    answers: &[Embedding],
    params: &RefinementParams,
) -> Result<Embedding, RefineError> {
    answers
        .iter()
        .enumerate()
        .try_fold(query.clone(), |current, (i, answer)| {
            slerp(&current, answer, params).map_err(|source| RefineError {
                round: i + 1,
                source,
            })
        })
}

fn check_dims(a: &Embedding, b: &Embedding) -> Result<(), GeometryError> {
    if a.dim() != b.dim() {
        return Err(GeometryError::DimensionMismatch {
            expected: a.dim(),
            actual: b.dim(),
        });
    }
    Ok(())
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn l2_norm(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    fn e(v: &[f64]) -> Embedding {
        Embedding::normalize(v).unwrap()
    }

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn normalize_examples() {
        assert!(close(e(&[3.0, 4.0]).as_slice(), &[0.6, 0.8], 1e-15));
        assert_eq!(e(&[1.0, 0.0, 0.0]).as_slice(), &[1.0, 0.0, 0.0]);
        assert_eq!(
            Embedding::normalize(&[0.0, 0.0]),
            Err(GeometryError::ZeroVector)
        );
        assert_eq!(
            Embedding::normalize(&[1.0, f64::NAN]),
            Err(GeometryError::NonFinite(1))
        );
        assert_eq!(
            Embedding::normalize(&[1.0, f64::INFINITY]),
            Err(GeometryError::NonFinite(1))
        );
        assert_eq!(
            Embedding::normalize_with_dim(&[1.0, 2.0], 3),
            Err(GeometryError::DimensionMismatch {
                expected: 3,
                actual: 2
            })
        );
        assert!(matches!(
            Embedding::normalize(&[1.0]),
            Err(GeometryError::TooFewDimensions(1))
        ));
    }

    #[test]
    fn normalize_tiny_but_nonzero() {
        assert_eq!(
            Embedding::normalize(&[1e-13, 0.0]),
            Err(GeometryError::ZeroVector)
        );
        let v = e(&[1e-11, 0.0]);
        assert_eq!(v.as_slice(), &[1.0, 0.0]);
    }

    #[test]
    fn cosine_examples() {
        let a = e(&[1.0, 2.0, 3.0]);
        assert!((cosine_similarity(&a, &a).unwrap() - 1.0).abs() < 1e-15);
        let x = e(&[1.0, 0.0]);
        let y = e(&[0.0, 1.0]);
        assert_eq!(cosine_similarity(&x, &y).unwrap(), 0.0);
        let nx = e(&[-1.0, 0.0]);
        assert_eq!(cosine_similarity(&x, &nx).unwrap(), -1.0);
        let z = e(&[1.0, 0.0, 0.0]);
        assert!(matches!(
            cosine_similarity(&x, &z),
            Err(GeometryError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn angle_examples() {
        let x = e(&[1.0, 0.0]);
        let y = e(&[0.0, 1.0]);
        assert_eq!(angle_between(&x, &x).unwrap(), 0.0);
        assert!((angle_between(&x, &y).unwrap() - FRAC_PI_2).abs() < 1e-15);
        assert!((angle_between(&x, &e(&[-1.0, 0.0])).unwrap() - PI).abs() < 1e-15);
    }

    #[test]
    fn angle_matches_arccos_away_from_endpoints() {
        let a = e(&[0.3, -1.2, 0.7, 2.0]);
        let b = e(&[1.1, 0.4, -0.2, 0.5]);
        let via_acos = a.dot(&b).unwrap().clamp(-1.0, 1.0).acos();
        assert!((angle_between(&a, &b).unwrap() - via_acos).abs() < 1e-14);
    }

    #[test]
    fn slerp_endpoints_and_midpoint() {
        let p = e(&[1.0, 0.0]);
        let a = e(&[0.0, 1.0]);
        let at = |alpha| slerp(&p, &a, &RefinementParams::new(alpha).unwrap()).unwrap();
        assert!(close(at(1.0).as_slice(), p.as_slice(), 1e-12));
        assert!(close(at(0.0).as_slice(), a.as_slice(), 1e-12));
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!(close(at(0.5).as_slice(), &[h, h], 1e-15));
    }

    #[test]
    #[allow(clippy::excessive_precision)]
    fn slerp_orthogonal_alpha_point_eight() {
        // 40-digit evaluation of sin(0.8·π/2) and sin(0.2·π/2).
        let expected = [
            0.951_056_516_295_153_572_116_439_333_379_382_143_405_7,
            0.309_016_994_374_947_424_102_293_417_182_819_058_860_2,
        ];
        let out = slerp(
            &e(&[1.0, 0.0]),
            &e(&[0.0, 1.0]),
            &RefinementParams::default(),
        )
        .unwrap();
        assert!(close(out.as_slice(), &expected, 1e-15));
        assert!(close(out.as_slice(), &[0.95106, 0.30902], 5e-6));
    }

    /// Walks from `p` toward `a` along the great circle in `steps` small
    /// tangent moves, renormalizing after each, and returns the point after an
    /// arc length of `(1-alpha)·θ`.
    fn geodesic_walk(p: &[f64], a: &[f64], alpha: f64, steps: usize) -> Vec<f64> {
        let theta = dot(p, a).clamp(-1.0, 1.0).acos();
        let target_arc = (1.0 - alpha) * theta;
        let step = target_arc / steps as f64;
        let mut x = p.to_vec();
        for _ in 0..steps {
            // Tangent at x pointing toward a.
            let c = dot(&x, a);
            let mut t: Vec<f64> = a.iter().zip(&x).map(|(ai, xi)| ai - c * xi).collect();
            let tn = dot(&t, &t).sqrt();
            t.iter_mut().for_each(|v| *v /= tn);
            // Midpoint rule keeps the walk second-order accurate.
            let half: Vec<f64> = x.iter().zip(&t).map(|(xi, ti)| xi + 0.5 * step * ti).collect();
            let hn = dot(&half, &half).sqrt();
            let half: Vec<f64> = half.iter().map(|v| v / hn).collect();
            let c = dot(&half, a);
            let mut t: Vec<f64> = a.iter().zip(&half).map(|(ai, hi)| ai - c * hi).collect();
            let tn = dot(&t, &t).sqrt();
            t.iter_mut().for_each(|v| *v /= tn);
            x = x.iter().zip(&t).map(|(xi, ti)| xi + step * ti).collect();
            let xn = dot(&x, &x).sqrt();
            x.iter_mut().for_each(|v| *v /= xn);
        }
        x
    }

    #[test]
    fn slerp_agrees_with_discrete_geodesic_walk() {
        let p = [1.0, 0.0];
        let a = [0.0, 1.0];
        let walked = geodesic_walk(&p, &a, 0.8, 1_000_000);
        let out = slerp(&e(&p), &e(&a), &RefinementParams::default()).unwrap();
        assert!(close(out.as_slice(), &walked, 1e-9), "{out:?} vs {walked:?}");

        let p = e(&[0.2, -0.5, 0.9, 0.1]);
        let a = e(&[-0.3, 0.8, 0.4, 0.6]);
        let walked = geodesic_walk(p.as_slice(), a.as_slice(), 0.35, 1_000_000);
        let out = slerp(&p, &a, &RefinementParams::new(0.35).unwrap()).unwrap();
        assert!(close(out.as_slice(), &walked, 1e-9));
    }

    #[test]
    fn slerp_parallel_returns_previous() {
        let p = e(&[1.0, 1e-9, 0.0]);
        let a = e(&[1.0, 0.0, 0.0]);
        let out = slerp(&p, &a, &RefinementParams::new(0.3).unwrap()).unwrap();
        assert_eq!(out, p);
    }

    #[test]
    fn slerp_antipodal_is_error() {
        let p = e(&[1.0, 0.0]);
        let a = e(&[-1.0, 1e-9]);
        assert!(matches!(
            slerp(&p, &a, &RefinementParams::default()),
            Err(GeometryError::AntipodalInputs(_))
        ));
    }

    #[test]
    fn params_validation() {
        assert!(RefinementParams::new(1.5).is_err());
        assert!(RefinementParams::new(-0.1).is_err());
        let bad = RefinementParams {
            alpha: 0.5,
            parallel_epsilon: 0.0,
        };
        assert_eq!(bad.validate(), Err(GeometryError::InvalidEpsilon(0.0)));
    }

    #[test]
    fn refine_chain_folds_left() {
        let q = e(&[1.0, 0.2, -0.3]);
        let a1 = e(&[0.1, 1.0, 0.4]);
        let a2 = e(&[-0.2, 0.3, 1.0]);
        let params = RefinementParams::default();
        assert_eq!(refine_chain(&q, &[], &params).unwrap(), q);
        assert_eq!(
            refine_chain(&q, std::slice::from_ref(&a1), &params).unwrap(),
            slerp(&q, &a1, &params).unwrap()
        );
        let manual = slerp(&slerp(&q, &a1, &params).unwrap(), &a2, &params).unwrap();
        assert_eq!(
            refine_chain(&q, &[a1.clone(), a2.clone()], &params).unwrap(),
            manual
        );
    }

    #[test]
    fn refine_chain_reports_failing_round() {
        let q = e(&[1.0, 0.0]);
        let ok = e(&[0.0, 1.0]);
        let params = RefinementParams::new(1.0).unwrap();
        let bad = e(&[-1.0, 0.0]);
        let err = refine_chain(&q, &[ok, bad], &params).unwrap_err();
        assert_eq!(err.round, 2);
        assert!(matches!(err.source, GeometryError::AntipodalInputs(_)));
    }

    #[test]
    fn binary_and_json_roundtrip() {
        let v = e(&[0.1, -0.7, 0.3333, 1e-5]);
        let bytes = v.to_le_bytes();
        assert_eq!(bytes.len(), 4 + 4 * 8);
        let (back, used) = Embedding::from_le_bytes(&bytes).unwrap();
        assert_eq!(used, bytes.len());
        assert_eq!(back, v);
        let json = serde_json::to_string(&v).unwrap();
        let back: Embedding = serde_json::from_str(&json).unwrap();
        assert_eq!(back.as_slice(), v.as_slice());
        assert!(serde_json::from_str::<Embedding>("[3.0, 4.0]").is_err());
    }
}
