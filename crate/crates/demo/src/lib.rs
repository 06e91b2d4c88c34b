//! Browser demo over synthetic video. Each operation returns RGBA pictures
//! ready for a canvas `ImageData`, plus a few summary numbers.
//!
//! The plain Rust functions ([`flow_demo`], [`confidence_demo`],
//! [`propagation_demo`]) do the work; the `wasm_bindgen` exports at the
//! bottom wrap them for JavaScript.

use labelprop::io::{confidence_to_gray8, image_to_rgb8};
use labelprop::pipeline::{fusion_examples, parse_video_with, train_fusion_stages, PrecomputedMaps};
use labelprop::render::colorize;
use labelprop::synth::value_noise;
use labelprop::{
    compute_metrics, corrupt_probmap, estimate_flow, generate, reconstruction_residual,
    residual_to_confidence, Confusion, FlowConfig, FlowField, FrameParser, Image, LabelMap,
    MetricsOptions, PipelineConfig, Result, SynthConfig, Variant, VideoSequence,
};
use wasm_bindgen::prelude::*;

const SIZE: usize = 64;
const VIDEO_SIZE: usize = 48;
const VIDEO_FRAMES: usize = 8;
const VIDEO_CLASSES: usize = 4;

/// An RGBA8 raster.
#[wasm_bindgen]
#[derive(Clone, Debug, PartialEq)]
pub struct Picture {
    width: usize,
    height: usize,
    rgba: Vec<u8>,
}

#[wasm_bindgen]
impl Picture {
    #[wasm_bindgen(getter)]
    pub fn width(&self) -> usize {
        self.width
    }

    #[wasm_bindgen(getter)]
    pub fn height(&self) -> usize {
        self.height
    }

    /// Row-major RGBA bytes, four per pixel.
    #[wasm_bindgen(getter)]
    pub fn rgba(&self) -> Vec<u8> {
        self.rgba.clone()
    }
}

impl Picture {
    fn from_rgb(width: usize, height: usize, rgb: &[u8]) -> Self {
        let rgba = rgb
            .chunks_exact(3)
            .flat_map(|p| [p[0], p[1], p[2], 255])
            .collect();
        Self {
            width,
            height,
            rgba,
        }
    }

    fn from_gray(width: usize, height: usize, gray: &[u8]) -> Self {
        let rgba = gray.iter().flat_map(|&g| [g, g, g, 255]).collect();
        Self {
            width,
            height,
            rgba,
        }
    }

    fn from_image(img: &Image) -> Self {
        Self::from_rgb(img.width(), img.height(), &image_to_rgb8(img))
    }

    fn from_labels(labels: &LabelMap) -> Self {
        Self::from_rgb(labels.width(), labels.height(), &colorize(labels))
    }

    pub fn pixel(&self, x: usize, y: usize) -> [u8; 4] {
        let i = 4 * (y * self.width + x);
        [self.rgba[i], self.rgba[i + 1], self.rgba[i + 2], self.rgba[i + 3]]
    }
}

fn hsv_to_rgb(h: f32, s: f32, v: f32) -> [u8; 3] {
    let h = h.rem_euclid(1.0) * 6.0;
    let i = h.floor();
    let f = h - i;
    let (p, q, t) = (v * (1.0 - s), v * (1.0 - s * f), v * (1.0 - s * (1.0 - f)));
    let rgb = match i as u32 {
        0 => [v, t, p],
        1 => [q, v, p],
        2 => [p, v, t],
        3 => [p, q, v],
        4 => [t, p, v],
        _ => [v, p, q],
    };
    rgb.map(|c| (c * 255.0).round() as u8)
}

/// Direction as hue, magnitude as saturation; `max_magnitude` maps to full
/// saturation. Zero flow is white.
pub fn flow_picture(flow: &FlowField, max_magnitude: f32) -> Picture {
    let mut rgb = Vec::with_capacity(flow.width() * flow.height() * 3);
    for y in 0..flow.height() {
        for x in 0..flow.width() {
            let [dx, dy] = flow.at(x, y);
            let mag = (dx * dx + dy * dy).sqrt();
            let hue = dy.atan2(dx) / std::f32::consts::TAU;
            let sat = (mag / max_magnitude.max(1e-6)).min(1.0);
            rgb.extend(hsv_to_rgb(hue, sat, 1.0));
        }
    }
    Picture::from_rgb(flow.width(), flow.height(), &rgb)
}

/// Textured image translated by a constant, possibly fractional, shift.
#[wasm_bindgen]
#[derive(Clone, Debug)]
pub struct FlowDemo {
    source: Picture,
    target: Picture,
    flow: Picture,
    mean_epe: f64,
    mean_flow: [f64; 2],
}

#[wasm_bindgen]
impl FlowDemo {
    #[wasm_bindgen(getter)]
    pub fn source(&self) -> Picture {
        self.source.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn target(&self) -> Picture {
        self.target.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn flow(&self) -> Picture {
        self.flow.clone()
    }

    /// Mean endpoint error against the true shift, over the interior.
    #[wasm_bindgen(getter)]
    pub fn mean_epe(&self) -> f64 {
        self.mean_epe
    }

    #[wasm_bindgen(getter)]
    pub fn mean_dx(&self) -> f64 {
        self.mean_flow[0]
    }

    #[wasm_bindgen(getter)]
    pub fn mean_dy(&self) -> f64 {
        self.mean_flow[1]
    }
}

fn texture(seed: u64) -> impl Fn(f32, f32) -> [f32; 3] {
    move |x, y| {
        let a = value_noise(2.0 * x, 2.0 * y, seed);
        let b = value_noise(x, y, seed ^ 0x9E37);
        [a, 0.5 * (a + b), b]
    }
}

/// Estimates the flow from a texture to its copy shifted by `(dx, dy)`.
pub fn flow_demo(dx: f32, dy: f32, seed: u64) -> Result<FlowDemo> {
    let tex = texture(seed);
    let source = Image::from_fn(SIZE, SIZE, |x, y| tex(x as f32, y as f32))?;
    // target(q) = source(q - d), so source(p) = target(p + d)
    let target = Image::from_fn(SIZE, SIZE, |x, y| tex(x as f32 - dx, y as f32 - dy))?;
    let flow = estimate_flow(&source, &target, &FlowConfig::default())?;
    let truth = FlowField::uniform(SIZE, SIZE, dx, dy)?;
    let margin = 4 + dx.abs().max(dy.abs()).ceil() as usize;
    let errors = flow.endpoint_errors(&truth)?;
    let (mut sum, mut n, mut mean) = (0.0, 0usize, [0.0; 2]);
    for y in margin..SIZE.saturating_sub(margin) {
        for x in margin..SIZE.saturating_sub(margin) {
            sum += errors[y * SIZE + x] as f64;
            let f = flow.at(x, y);
            mean[0] += f[0] as f64;
            mean[1] += f[1] as f64;
            n += 1;
        }
    }
    let n = n.max(1) as f64;
    Ok(FlowDemo {
        source: Picture::from_image(&source),
        target: Picture::from_image(&target),
        flow: flow_picture(&flow, 6.0),
        mean_epe: sum / n,
        mean_flow: mean.map(|v| v / n),
    })
}

/// Reconstruction confidence between two consecutive frames of a sprite video.
#[wasm_bindgen]
#[derive(Clone, Debug)]
pub struct ConfidenceDemo {
    current: Picture,
    previous: Picture,
    confidence: Picture,
    mean_residual: f64,
    mean_confidence: f64,
}

#[wasm_bindgen]
impl ConfidenceDemo {
    #[wasm_bindgen(getter)]
    pub fn current(&self) -> Picture {
        self.current.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn previous(&self) -> Picture {
        self.previous.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn confidence(&self) -> Picture {
        self.confidence.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn mean_residual(&self) -> f64 {
        self.mean_residual
    }

    #[wasm_bindgen(getter)]
    pub fn mean_confidence(&self) -> f64 {
        self.mean_confidence
    }
}

fn demo_video(seed: u64, noise_sigma: f32, labeled_index: usize) -> Result<VideoSequence> {
    let mut cfg = SynthConfig::random(VIDEO_SIZE, VIDEO_SIZE, VIDEO_FRAMES, VIDEO_CLASSES, 2, seed);
    cfg.noise_sigma = noise_sigma;
    cfg.labeled_index = Some(labeled_index);
    generate(&cfg)
}

/// Confidence of reconstructing frame 4 from frame 3 along estimated flow.
/// Raising the noise or enabling sub-pixel flow lifts the residual floor and
/// pushes the confidence towards zero.
pub fn confidence_demo(seed: u64, noise_sigma: f32, subpixel: bool) -> Result<ConfidenceDemo> {
    let video = demo_video(seed, noise_sigma, 0)?;
    let (cur, prev) = (&video.frames()[4], &video.frames()[3]);
    let cfg = FlowConfig {
        subpixel_refine: subpixel,
        ..FlowConfig::default()
    };
    let flow = estimate_flow(cur, prev, &cfg)?;
    let residual = reconstruction_residual(cur, prev, &flow)?;
    let conf = residual_to_confidence(&residual);
    Ok(ConfidenceDemo {
        current: Picture::from_image(cur),
        previous: Picture::from_image(prev),
        confidence: Picture::from_gray(VIDEO_SIZE, VIDEO_SIZE, &confidence_to_gray8(&conf)),
        mean_residual: residual.mean(),
        mean_confidence: conf.mean(),
    })
}

/// Rough and fused parses of the last frame of a held-out video.
#[wasm_bindgen]
#[derive(Clone, Debug)]
pub struct PropagationDemo {
    frame: Picture,
    truth: Picture,
    rough: Picture,
    fused: Picture,
    rough_f1: f64,
    fused_f1: f64,
}

#[wasm_bindgen]
impl PropagationDemo {
    #[wasm_bindgen(getter)]
    pub fn frame(&self) -> Picture {
        self.frame.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn truth(&self) -> Picture {
        self.truth.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn rough(&self) -> Picture {
        self.rough.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn fused(&self) -> Picture {
        self.fused.clone()
    }

    /// Average F1 of the rough maps over every frame of the held-out video.
    #[wasm_bindgen(getter)]
    pub fn rough_f1(&self) -> f64 {
        self.rough_f1
    }

    #[wasm_bindgen(getter)]
    pub fn fused_f1(&self) -> f64 {
        self.fused_f1
    }
}

fn corrupted_maps(video: &VideoSequence, error_rate: f64, seed: u64) -> Result<PrecomputedMaps> {
    let gt = video.gt_labels().expect("synthetic videos carry ground truth");
    let maps = gt
        .iter()
        .enumerate()
        .map(|(i, l)| corrupt_probmap(l, VIDEO_CLASSES, error_rate, seed * 1000 + i as u64))
        .collect::<Result<Vec<_>>>()?;
    PrecomputedMaps::new(maps)
}

fn avg_f1(pred: &[LabelMap], video: &VideoSequence) -> Result<f64> {
    let mut c = Confusion::new(VIDEO_CLASSES);
    for (p, g) in pred.iter().zip(video.gt_labels().unwrap_or_default()) {
        c.add(p, g)?;
    }
    Ok(compute_metrics(&c, &MetricsOptions::default())?.avg_f1)
}

/// Trains the fusion layer on three corrupted videos and parses a fourth.
/// `variant` is one of `l`, `s`, `l+c`, `s+c`, `l+s`, `l+s+c`.
pub fn propagation_demo(seed: u64, error_rate: f64, variant: &str) -> Result<PropagationDemo> {
    let variant: Variant = variant.parse()?;
    let mut cfg = PipelineConfig {
        variant,
        ..PipelineConfig::indoor()
    };
    cfg.flow.subpixel_refine = false;
    cfg.train.learning_rate = 1.0;
    cfg.train.epochs = 300;

    let train: Vec<(VideoSequence, PrecomputedMaps)> = (0..3)
        .map(|i| {
            let s = seed * 10 + i;
            let v = demo_video(s, 0.0, 4 + i as usize)?;
            let r = corrupted_maps(&v, error_rate, s)?;
            Ok((v, r))
        })
        .collect::<Result<_>>()?;
    let pairs: Vec<(&VideoSequence, &dyn FrameParser)> =
        train.iter().map(|(v, r)| (v, r as &dyn FrameParser)).collect();
    let examples = fusion_examples(&pairs, &cfg)?;
    let (weights, _, _) = train_fusion_stages(&examples, &cfg)?;

    let test_seed = seed * 10 + 9;
    let test = demo_video(test_seed, 0.0, 0)?;
    let rough = corrupted_maps(&test, error_rate, test_seed)?;
    let out = parse_video_with(&test, &rough, &weights, &cfg)?;
    let rough_labels: Vec<LabelMap> = rough.maps().iter().map(|m| m.argmax()).collect();
    let last = VIDEO_FRAMES - 1;
    Ok(PropagationDemo {
        frame: Picture::from_image(&test.frames()[last]),
        truth: Picture::from_labels(&test.gt_labels().unwrap_or_default()[last]),
        rough: Picture::from_labels(&rough_labels[last]),
        fused: Picture::from_labels(&out.labels[last]),
        rough_f1: avg_f1(&rough_labels, &test)?,
        fused_f1: avg_f1(&out.labels, &test)?,
    })
}

fn js_error(e: labelprop::Error) -> JsError {
    JsError::new(&e.to_string())
}

#[wasm_bindgen(js_name = flowDemo)]
pub fn flow_demo_js(dx: f32, dy: f32, seed: u32) -> std::result::Result<FlowDemo, JsError> {
    flow_demo(dx, dy, seed as u64).map_err(js_error)
}

#[wasm_bindgen(js_name = confidenceDemo)]
pub fn confidence_demo_js(
    seed: u32,
    noise_sigma: f32,
    subpixel: bool,
) -> std::result::Result<ConfidenceDemo, JsError> {
    confidence_demo(seed as u64, noise_sigma, subpixel).map_err(js_error)
}

#[wasm_bindgen(js_name = propagationDemo)]
pub fn propagation_demo_js(
    seed: u32,
    error_rate: f64,
    variant: &str,
) -> std::result::Result<PropagationDemo, JsError> {
    propagation_demo(seed as u64, error_rate, variant).map_err(js_error)
}
