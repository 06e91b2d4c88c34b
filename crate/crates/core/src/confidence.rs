//! Flow confidence from appearance reconstruction.
//!
//! The residual is the L1 distance (sum over RGB) between a frame and the
//! other frame warped onto it. Confidence is `exp(-r / (2 sigma^2))` where
//! `sigma` is the mean residual over the whole frame.

use crate::error::{invalid, Result};
use crate::grid::{FlowField, Grid, Image, ProbMap};

/// Below this mean residual the reconstruction is treated as perfect.
pub const MIN_SIGMA: f64 = 1e-8;

/// Per-pixel non-negative reconstruction residual.
#[derive(Clone, Debug, PartialEq)]
pub struct ResidualMap(Grid);

impl ResidualMap {
    pub fn new(width: usize, height: usize, data: Vec<f32>) -> Result<Self> {
        if data.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(invalid("residuals must be finite and non-negative"));
        }
        Ok(Self(Grid::new(width, height, 1, data)?))
    }

    pub fn values(&self) -> &[f32] {
        self.0.data()
    }

    pub fn width(&self) -> usize {
        self.0.width()
    }

    pub fn height(&self) -> usize {
        self.0.height()
    }

    /// Mean residual, summed sequentially in `f64`.
    pub fn mean(&self) -> f64 {
        let sum: f64 = self.0.data().iter().map(|&v| v as f64).sum();
        sum / self.0.data().len() as f64
    }
}

/// Per-pixel flow confidence in `(0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ConfidenceMap(Grid);

impl ConfidenceMap {
    pub fn new(width: usize, height: usize, data: Vec<f32>) -> Result<Self> {
        if let Some(v) = data.iter().find(|v| !(**v > 0.0 && **v <= 1.0)) {
            return Err(invalid(format!("confidence {v} outside (0, 1]")));
        }
        Ok(Self(Grid::new(width, height, 1, data)?))
    }

    pub fn ones(width: usize, height: usize) -> Result<Self> {
        Self::new(width, height, vec![1.0; width * height])
    }

    pub fn values(&self) -> &[f32] {
        self.0.data()
    }

    pub fn grid(&self) -> &Grid {
        &self.0
    }

    pub fn width(&self) -> usize {
        self.0.width()
    }

    pub fn height(&self) -> usize {
        self.0.height()
    }

    pub fn mean(&self) -> f64 {
        let sum: f64 = self.0.data().iter().map(|&v| v as f64).sum();
        sum / self.0.data().len() as f64
    }
}

/// L1 distance over channels between `target` and `source` warped by `flow`.
pub fn reconstruction_residual(
    target: &Image,
    source: &Image,
    flow: &FlowField,
) -> Result<ResidualMap> {
    target.grid().check_extent(source.grid(), "residual source")?;
    target.grid().check_extent(flow.grid(), "residual flow")?;
    let warped = source.warp(flow)?;
    let data = target
        .grid()
        .pixels()
        .zip(warped.grid().pixels())
        .map(|(t, w)| t.iter().zip(w).map(|(a, b)| (a - b).abs()).sum())
        .collect();
    ResidualMap::new(target.width(), target.height(), data)
}

pub fn residual_to_confidence(residual: &ResidualMap) -> ConfidenceMap {
    let sigma = residual.mean();
    let data = if sigma < MIN_SIGMA {
        vec![1.0; residual.values().len()]
    } else {
        let scale = 1.0 / (2.0 * sigma * sigma);
        residual
            .values()
            .iter()
            // exp underflows for residuals far above sigma; keep the value positive
            .map(|&r| ((-(r as f64) * scale).exp() as f32).max(f32::MIN_POSITIVE))
            .collect()
    };
    ConfidenceMap::new(residual.width(), residual.height(), data)
        .expect("exp of a non-positive value lies in (0, 1]")
}

/// Scales every pixel's class vector by its confidence. The result is
/// deliberately left unnormalized.
pub fn apply_confidence(probs: &ProbMap, confidence: &ConfidenceMap) -> Result<Grid> {
    probs
        .grid()
        .check_extent(confidence.grid(), "confidence map")?;
    let k = probs.classes();
    let mut out = probs.grid().clone();
    for (p, &c) in out
        .data_mut()
        .chunks_exact_mut(k)
        .zip(confidence.values())
    {
        p.iter_mut().for_each(|v| *v *= c);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_frames_have_zero_residual() {
        let img = Image::from_fn(6, 4, |x, y| [x as f32 / 6.0, y as f32 / 4.0, 0.2]).unwrap();
        let r = reconstruction_residual(&img, &img, &FlowField::zeros(6, 4).unwrap()).unwrap();
        assert!(r.values().iter().all(|&v| v == 0.0));
        assert!(residual_to_confidence(&r).values().iter().all(|&c| c == 1.0));
    }

    #[test]
    fn residual_is_channel_sum() {
        let t = Image::from_rgb(1, 1, vec![1.0, 1.0, 1.0]).unwrap();
        let s = Image::from_rgb(1, 1, vec![0.5, 0.5, 0.5]).unwrap();
        let r = reconstruction_residual(&t, &s, &FlowField::zeros(1, 1).unwrap()).unwrap();
        assert_eq!(r.values(), &[1.5]);
    }

    #[test]
    fn residual_shape_mismatch() {
        let t = Image::from_rgb(1, 1, vec![1.0, 1.0, 1.0]).unwrap();
        let s = Image::from_rgb(2, 1, vec![0.5; 6]).unwrap();
        assert!(reconstruction_residual(&t, &s, &FlowField::zeros(1, 1).unwrap()).is_err());
        assert!(reconstruction_residual(&t, &t, &FlowField::zeros(2, 1).unwrap()).is_err());
    }

    #[test]
    fn uniform_residual_gives_exp_minus_one() {
        let r = ResidualMap::new(3, 3, vec![0.5; 9]).unwrap();
        let c = residual_to_confidence(&r);
        for &v in c.values() {
            assert!((v as f64 - (-1.0f64).exp()).abs() < 1e-6);
        }
    }

    #[test]
    fn two_level_residuals() {
        let r = ResidualMap::new(4, 1, vec![0.0, 2.0, 0.0, 2.0]).unwrap();
        let c = residual_to_confidence(&r);
        let e = (-1.0f64).exp() as f32;
        assert_eq!(c.values()[0], 1.0);
        assert!((c.values()[1] - e).abs() < 1e-6);
    }

    #[test]
    fn huge_residual_stays_positive() {
        let mut data = vec![0.0; 10_000];
        data[0] = 3.0;
        let r = ResidualMap::new(100, 100, data).unwrap();
        let c = residual_to_confidence(&r);
        assert!(c.values()[0] > 0.0);
    }

    #[test]
    fn confidence_scaling() {
        let g = Grid::new(1, 1, 2, vec![0.2, 0.8]).unwrap();
        let p = ProbMap::new(g).unwrap();
        let c = ConfidenceMap::new(1, 1, vec![0.5]).unwrap();
        let out = apply_confidence(&p, &c).unwrap();
        assert!((out.data()[0] - 0.1).abs() < 1e-7);
        assert!((out.data()[1] - 0.4).abs() < 1e-7);
        let ones = ConfidenceMap::ones(1, 1).unwrap();
        assert_eq!(apply_confidence(&p, &ones).unwrap(), *p.grid());
        let eps = ConfidenceMap::new(1, 1, vec![1e-3]).unwrap();
        assert!(apply_confidence(&p, &eps)
            .unwrap()
            .data()
            .iter()
            .all(|&v| v <= 1e-3));
    }

    #[test]
    fn confidence_rejects_out_of_range() {
        assert!(ConfidenceMap::new(1, 1, vec![0.0]).is_err());
        assert!(ConfidenceMap::new(1, 1, vec![1.01]).is_err());
        assert!(ResidualMap::new(1, 1, vec![-0.1]).is_err());
    }
}
