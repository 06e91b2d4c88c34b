//! Baseline single-frame parser: a linear softmax classifier over eleven
//! hand-crafted per-pixel features, trained on labeled frames.

use crate::error::{invalid, Result};
use crate::fusion::{TrainConfig, GRADIENT_CHECK_STEP};
use crate::grid::{Grid, Image, LabelMap, ProbMap};
use crate::linear::{self, to_f32_precision, Batch, Linear, TrainLog};

/// RGB, normalized x and y, 3x3 mean RGB, 3x3 standard deviation RGB.
pub const FEATURE_DIM: usize = 11;

/// Lower bound on feature standard deviations used for standardization.
pub const MIN_FEATURE_STD: f64 = 1e-6;

/// Scale of the seeded Gaussian parser initialization.
const INIT_STD: f64 = 0.01;

/// Feature grid with [`FEATURE_DIM`] channels per pixel.
pub fn extract_features(img: &Image) -> Grid {
    let (w, h) = (img.width(), img.height());
    let g = img.grid();
    let mut data = Vec::with_capacity(w * h * FEATURE_DIM);
    for y in 0..h {
        for x in 0..w {
            let p = g.pixel(x, y);
            let mut sum = [0.0f64; 3];
            let mut sq = [0.0f64; 3];
            for oy in -1isize..=1 {
                for ox in -1isize..=1 {
                    let sx = (x as isize + ox).clamp(0, w as isize - 1) as usize;
                    let sy = (y as isize + oy).clamp(0, h as isize - 1) as usize;
                    let q = g.pixel(sx, sy);
                    for c in 0..3 {
                        sum[c] += q[c] as f64;
                        sq[c] += (q[c] as f64).powi(2);
                    }
                }
            }
            data.extend_from_slice(p);
            data.push(x as f32 / w as f32);
            data.push(y as f32 / h as f32);
            let mean = sum.map(|s| s / 9.0);
            data.extend(mean.iter().map(|&m| m as f32));
            for c in 0..3 {
                let var = (sq[c] / 9.0 - mean[c] * mean[c]).max(0.0);
                data.push(var.sqrt() as f32);
            }
        }
    }
    Grid::new(w, h, FEATURE_DIM, data).expect("feature grid has the image extent")
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParserModel {
    linear: Linear,
    feature_mean: Vec<f64>,
    feature_std: Vec<f64>,
}

impl ParserModel {
    pub fn new(
        classes: usize,
        matrix: Vec<f64>,
        bias: Vec<f64>,
        feature_mean: Vec<f64>,
        feature_std: Vec<f64>,
    ) -> Result<Self> {
        if classes == 0 {
            return Err(invalid("parser needs at least one class"));
        }
        if matrix.len() != classes * FEATURE_DIM
            || bias.len() != classes
            || feature_mean.len() != FEATURE_DIM
            || feature_std.len() != FEATURE_DIM
        {
            return Err(invalid("parser parameter sizes do not match K and the feature dimension"));
        }
        if feature_std.iter().any(|&s| s < MIN_FEATURE_STD) {
            return Err(invalid("feature standard deviations must be at least 1e-6"));
        }
        let linear = Linear {
            classes,
            dim: FEATURE_DIM,
            matrix,
            bias,
        };
        if !linear.is_finite() || feature_mean.iter().chain(&feature_std).any(|v| !v.is_finite()) {
            return Err(invalid("parser parameters must be finite"));
        }
        Ok(Self {
            linear,
            feature_mean,
            feature_std,
        })
    }

    /// All-zero weights with identity standardization; predicts `1/K` everywhere.
    pub fn zeros(classes: usize) -> Self {
        Self {
            linear: Linear::zeros(classes, FEATURE_DIM),
            feature_mean: vec![0.0; FEATURE_DIM],
            feature_std: vec![1.0; FEATURE_DIM],
        }
    }

    pub fn classes(&self) -> usize {
        self.linear.classes
    }

    pub fn matrix(&self) -> &[f64] {
        &self.linear.matrix
    }

    pub fn bias(&self) -> &[f64] {
        &self.linear.bias
    }

    pub fn feature_mean(&self) -> &[f64] {
        &self.feature_mean
    }

    pub fn feature_std(&self) -> &[f64] {
        &self.feature_std
    }

    fn standardize(&self, raw: &[f32], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            *o = (raw[i] as f64 - self.feature_mean[i]) / self.feature_std[i];
        }
    }

    fn batch(&self, frames: &[(&Image, &LabelMap)]) -> Batch {
        let mut batch = Batch::new(FEATURE_DIM);
        let mut x = [0.0; FEATURE_DIM];
        for (img, gt) in frames {
            let feats = extract_features(img);
            for (raw, &label) in feats.pixels().zip(gt.data()) {
                self.standardize(raw, &mut x);
                batch.push(&x, label as usize);
            }
        }
        batch
    }

    /// Mean training cross-entropy on the given frames.
    pub fn loss(&self, frames: &[(&Image, &LabelMap)]) -> f64 {
        self.linear.loss(&self.batch(frames))
    }
}

fn check_frames(frames: &[(&Image, &LabelMap)], classes: usize) -> Result<()> {
    if frames.is_empty() {
        return Err(invalid("parser training needs at least one labeled frame"));
    }
    if classes == 0 || classes > 256 {
        return Err(invalid(format!("class count {classes} must lie in 1..=256")));
    }
    for (img, gt) in frames {
        if !gt.same_extent(img.width(), img.height()) {
            return Err(invalid("label map does not match its frame"));
        }
        gt.check_classes(classes)?;
    }
    Ok(())
}

/// Per-feature mean and standard deviation over all training pixels.
fn feature_stats(frames: &[(&Image, &LabelMap)]) -> (Vec<f64>, Vec<f64>) {
    let mut sum = [0.0f64; FEATURE_DIM];
    let mut n = 0usize;
    let feats: Vec<Grid> = frames.iter().map(|(img, _)| extract_features(img)).collect();
    for f in &feats {
        for p in f.pixels() {
            sum.iter_mut().zip(p).for_each(|(s, &v)| *s += v as f64);
            n += 1;
        }
    }
    let mean: Vec<f64> = sum.iter().map(|s| s / n as f64).collect();
    let mut var = [0.0f64; FEATURE_DIM];
    for f in &feats {
        for p in f.pixels() {
            for ((v, &x), m) in var.iter_mut().zip(p).zip(&mean) {
                *v += (x as f64 - m).powi(2);
            }
        }
    }
    let std = var
        .iter()
        .map(|v| to_f32_precision((v / n as f64).sqrt().max(MIN_FEATURE_STD)))
        .collect();
    (mean.into_iter().map(to_f32_precision).collect(), std)
}

/// Trains on a single labeled frame.
pub fn train_parser(
    img: &Image,
    gt: &LabelMap,
    classes: usize,
    cfg: &TrainConfig,
) -> Result<ParserModel> {
    Ok(train_parser_frames(&[(img, gt)], classes, cfg)?.0)
}

/// Trains on the pooled pixels of several labeled frames.
pub fn train_parser_frames(
    frames: &[(&Image, &LabelMap)],
    classes: usize,
    cfg: &TrainConfig,
) -> Result<(ParserModel, TrainLog)> {
    cfg.validate()?;
    check_frames(frames, classes)?;
    let (feature_mean, feature_std) = feature_stats(frames);
    let init = ParserModel {
        linear: Linear::gaussian(classes, FEATURE_DIM, INIT_STD, cfg.seed),
        feature_mean,
        feature_std,
    };
    let batch = init.batch(frames);
    let (linear, log) = linear::descend(
        init.linear.clone(),
        &batch,
        cfg.learning_rate,
        cfg.epochs,
        0.0,
    );
    Ok((ParserModel { linear, ..init }, log))
}

/// The seeded initialization `train_parser` starts from.
pub fn initial_parser(
    frames: &[(&Image, &LabelMap)],
    classes: usize,
    seed: u64,
) -> Result<ParserModel> {
    check_frames(frames, classes)?;
    let (feature_mean, feature_std) = feature_stats(frames);
    Ok(ParserModel {
        linear: Linear::gaussian(classes, FEATURE_DIM, INIT_STD, seed),
        feature_mean,
        feature_std,
    })
}

/// Per-pixel class distribution for a frame.
pub fn parse_frame(model: &ParserModel, img: &Image) -> ProbMap {
    let feats = extract_features(img);
    let k = model.classes();
    let mut x = [0.0; FEATURE_DIM];
    let mut p = vec![0.0; k];
    let mut data = Vec::with_capacity(feats.pixel_count() * k);
    for raw in feats.pixels() {
        model.standardize(raw, &mut x);
        model.linear.probabilities(&x, &mut p);
        data.extend(p.iter().map(|&v| v as f32));
    }
    ProbMap::new(Grid::new(img.width(), img.height(), k, data).expect("extent matches image"))
        .expect("softmax output is a distribution")
}

/// Maximum relative error of the analytic parser gradient against central
/// finite differences.
pub fn gradient_check(model: &ParserModel, img: &Image, gt: &LabelMap) -> Result<f64> {
    check_frames(&[(img, gt)], model.classes())?;
    let batch = model.batch(&[(img, gt)]);
    Ok(linear::gradient_check(
        &model.linear,
        &batch,
        GRADIENT_CHECK_STEP,
    ))
}
