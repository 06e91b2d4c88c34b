//! Deterministic synthetic videos: textured sprites translating at constant
//! velocity over a textured static background, with per-frame labels and
//! ground-truth flow.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::grid::{FlowField, Grid, Image, LabelMap, ProbMap};
use crate::pipeline::VideoSequence;

/// Lattice spacing of the value-noise texture, in pixels.
const TEXTURE_CELL: f32 = 4.0;

/// Probability mass given to the chosen class by [`corrupt_probmap`].
pub const CORRUPT_CONFIDENCE: f32 = 0.9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Shape {
    Rectangle,
    Ellipse,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpriteConfig {
    pub shape: Shape,
    pub class: u8,
    /// Width and height in pixels.
    pub size: [usize; 2],
    /// Pixels per frame.
    pub velocity: [f32; 2],
    pub color: [f32; 3],
    #[serde(default = "default_texture_amplitude")]
    pub texture_amplitude: f32,
    /// Top-left corner at frame 0; drawn from the seed when absent.
    #[serde(default)]
    pub start: Option<[f32; 2]>,
}

fn default_texture_amplitude() -> f32 {
    0.25
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub width: usize,
    pub height: usize,
    pub frames: usize,
    pub classes: usize,
    pub sprites: Vec<SpriteConfig>,
    pub background_seed: u64,
    pub noise_sigma: f32,
    pub seed: u64,
    /// Index of the frame whose labels are exposed as supervision; defaults to `frames / 2`.
    pub labeled_index: Option<usize>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            width: 64,
            height: 64,
            frames: 8,
            classes: 3,
            sprites: vec![
                SpriteConfig {
                    shape: Shape::Rectangle,
                    class: 1,
                    size: [16, 20],
                    velocity: [1.0, 0.0],
                    color: [0.85, 0.2, 0.2],
                    texture_amplitude: 0.25,
                    start: None,
                },
                SpriteConfig {
                    shape: Shape::Ellipse,
                    class: 2,
                    size: [18, 14],
                    velocity: [-1.0, 1.0],
                    color: [0.2, 0.3, 0.9],
                    texture_amplitude: 0.25,
                    start: None,
                },
            ],
            background_seed: 7,
            noise_sigma: 0.01,
            seed: 1,
            labeled_index: None,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 || self.frames == 0 {
            return Err(invalid("width, height and frames must be positive"));
        }
        if !(2..=256).contains(&self.classes) {
            return Err(invalid("classes must lie in 2..=256"));
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return Err(invalid("noise_sigma must be non-negative"));
        }
        if self.labeled_index() >= self.frames {
            return Err(invalid(format!(
                "labeled_index {} outside {} frames",
                self.labeled_index(),
                self.frames
            )));
        }
        for (i, s) in self.sprites.iter().enumerate() {
            if s.class == 0 || s.class as usize >= self.classes {
                return Err(invalid(format!(
                    "sprite {i}: class {} outside 1..{}",
                    s.class, self.classes
                )));
            }
            if s.size[0] == 0 || s.size[1] == 0 {
                return Err(invalid(format!("sprite {i}: empty size")));
            }
            if s.size[0] > self.width || s.size[1] > self.height {
                return Err(invalid(format!(
                    "sprite {i}: {}x{} is larger than the {}x{} frame",
                    s.size[0], s.size[1], self.width, self.height
                )));
            }
            let finite = s.velocity.iter().chain(&s.color).all(|v| v.is_finite())
                && s.texture_amplitude.is_finite()
                && s.start.is_none_or(|p| p.iter().all(|v| v.is_finite()));
            if !finite {
                return Err(invalid(format!("sprite {i}: non-finite parameter")));
            }
        }
        Ok(())
    }

    pub fn labeled_index(&self) -> usize {
        self.labeled_index.unwrap_or(self.frames / 2)
    }

    /// Random sprites with integer velocities of at most `max_speed` px/frame on each axis.
    pub fn random(
        width: usize,
        height: usize,
        frames: usize,
        classes: usize,
        max_speed: i32,
        seed: u64,
    ) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5EED_5EED);
        let min_side = (width.min(height) / 6).max(1);
        let max_side = (width.min(height) / 3).max(min_side + 1);
        let sprites = (1..classes)
            .map(|class| {
                let hue = rng.random::<f32>();
                SpriteConfig {
                    shape: if rng.random::<bool>() {
                        Shape::Rectangle
                    } else {
                        Shape::Ellipse
                    },
                    class: class as u8,
                    size: [
                        rng.random_range(min_side..max_side),
                        rng.random_range(min_side..max_side),
                    ],
                    velocity: [
                        rng.random_range(-max_speed..=max_speed) as f32,
                        rng.random_range(-max_speed..=max_speed) as f32,
                    ],
                    color: hue_to_rgb(hue),
                    texture_amplitude: 0.25,
                    start: None,
                }
            })
            .collect();
        Self {
            width,
            height,
            frames,
            classes,
            sprites,
            background_seed: seed.wrapping_mul(31).wrapping_add(7),
            noise_sigma: 0.01,
            seed,
            labeled_index: None,
        }
    }
}

fn hue_to_rgb(h: f32) -> [f32; 3] {
    let f = |n: f32| {
        let k = (n + h * 6.0) % 6.0;
        0.15 + 0.7 * (1.0 - (k.min(4.0 - k).clamp(0.0, 1.0)))
    };
    [f(5.0), f(3.0), f(1.0)]
}

fn hash3(x: i64, y: i64, seed: u64) -> f32 {
    let mut h = seed
        ^ (x as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ (y as u64).wrapping_mul(0xC2B2_AE3D_27D4_EB4F);
    h ^= h >> 30;
    h = h.wrapping_mul(0xBF58_476D_1CE4_E5B9);
    h ^= h >> 27;
    h = h.wrapping_mul(0x94D0_49BB_1331_11EB);
    h ^= h >> 31;
    (h >> 40) as f32 / (1u64 << 24) as f32
}

/// Smooth value noise in `[0, 1]`, continuous in `(x, y)`.
pub fn value_noise(x: f32, y: f32, seed: u64) -> f32 {
    let gx = x / TEXTURE_CELL;
    let gy = y / TEXTURE_CELL;
    let (ix, iy) = (gx.floor(), gy.floor());
    let smooth = |t: f32| t * t * (3.0 - 2.0 * t);
    let (tx, ty) = (smooth(gx - ix), smooth(gy - iy));
    let (ix, iy) = (ix as i64, iy as i64);
    let v00 = hash3(ix, iy, seed);
    let v10 = hash3(ix + 1, iy, seed);
    let v01 = hash3(ix, iy + 1, seed);
    let v11 = hash3(ix + 1, iy + 1, seed);
    let top = v00 + (v10 - v00) * tx;
    let bottom = v01 + (v11 - v01) * tx;
    top + (bottom - top) * ty
}

struct PlacedSprite<'a> {
    cfg: &'a SpriteConfig,
    start: [f32; 2],
    texture_seed: u64,
}

impl PlacedSprite<'_> {
    fn origin(&self, frame: usize) -> [f32; 2] {
        [
            self.start[0] + self.cfg.velocity[0] * frame as f32,
            self.start[1] + self.cfg.velocity[1] * frame as f32,
        ]
    }

    /// Sprite-local coordinates of pixel `(x, y)` when the pixel center is covered.
    fn covers(&self, frame: usize, x: usize, y: usize) -> Option<[f32; 2]> {
        let o = self.origin(frame);
        let lx = x as f32 + 0.5 - o[0];
        let ly = y as f32 + 0.5 - o[1];
        let (w, h) = (self.cfg.size[0] as f32, self.cfg.size[1] as f32);
        let inside = match self.cfg.shape {
            Shape::Rectangle => (0.0..w).contains(&lx) && (0.0..h).contains(&ly),
            Shape::Ellipse => {
                let u = (lx - w / 2.0) / (w / 2.0);
                let v = (ly - h / 2.0) / (h / 2.0);
                u * u + v * v <= 1.0
            }
        };
        inside.then_some([lx, ly])
    }

    fn color(&self, local: [f32; 2]) -> [f32; 3] {
        let t = (value_noise(local[0], local[1], self.texture_seed) - 0.5)
            * 2.0
            * self.cfg.texture_amplitude;
        self.cfg.color.map(|c| c + t)
    }
}

fn quantize(v: f32) -> f32 {
    (v.clamp(0.0, 1.0) * 255.0).round() / 255.0
}

/// Renders every frame with full per-frame labels and ground-truth flow.
///
/// The ground-truth flow of frame `n` holds, at each pixel, the velocity of
/// the sprite drawn there (zero on background); the offset from frame `t`
/// into frame `t - s` is therefore `-s` times that field.
pub fn generate(cfg: &SynthConfig) -> Result<VideoSequence> {
    cfg.validate()?;
    let mut placement = ChaCha8Rng::seed_from_u64(cfg.seed);
    let sprites: Vec<PlacedSprite> = cfg
        .sprites
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let free_x = (cfg.width - s.size[0]) as f32;
            let free_y = (cfg.height - s.size[1]) as f32;
            let random_start = [
                (placement.random::<f32>() * free_x).floor(),
                (placement.random::<f32>() * free_y).floor(),
            ];
            PlacedSprite {
                cfg: s,
                start: s.start.unwrap_or(random_start),
                texture_seed: cfg.seed.wrapping_mul(1000).wrapping_add(i as u64 + 1),
            }
        })
        .collect();

    let bg_seeds = [0u64, 1, 2].map(|c| cfg.background_seed.wrapping_mul(3).wrapping_add(c));
    let background = Image::from_fn(cfg.width, cfg.height, |x, y| {
        bg_seeds.map(|s| 0.15 + 0.7 * value_noise(x as f32, y as f32, s))
    })?;

    let noise = Normal::new(0.0f32, cfg.noise_sigma.max(f32::MIN_POSITIVE))
        .expect("noise sigma is finite and positive");
    let mut frames = Vec::with_capacity(cfg.frames);
    let mut labels = Vec::with_capacity(cfg.frames);
    let mut flows = Vec::with_capacity(cfg.frames);
    for n in 0..cfg.frames {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(0x1000 * (n as u64 + 1)));
        let mut label = LabelMap::filled(cfg.width, cfg.height, 0)?;
        let mut rgb = Vec::with_capacity(cfg.width * cfg.height * 3);
        let mut flow = Vec::with_capacity(cfg.width * cfg.height * 2);
        for y in 0..cfg.height {
            for x in 0..cfg.width {
                let mut color = background.pixel(x, y);
                let mut velocity = [0.0f32; 2];
                for s in &sprites {
                    if let Some(local) = s.covers(n, x, y) {
                        color = s.color(local);
                        velocity = s.cfg.velocity;
                        label.set(x, y, s.cfg.class);
                    }
                }
                for c in color {
                    let e = if cfg.noise_sigma > 0.0 {
                        noise.sample(&mut rng)
                    } else {
                        0.0
                    };
                    rgb.push(quantize(c + e));
                }
                flow.extend_from_slice(&velocity);
            }
        }
        frames.push(Image::from_rgb(cfg.width, cfg.height, rgb)?);
        labels.push(label);
        flows.push(FlowField::new(Grid::new(cfg.width, cfg.height, 2, flow)?)?);
    }
    let t = cfg.labeled_index();
    VideoSequence::new(frames, t, labels[t].clone())?.with_ground_truth(labels, flows)
}

/// Softened one-hot map of `gt` in which a seeded `error_rate` fraction of
/// pixels put their mass on a uniformly chosen wrong class.
pub fn corrupt_probmap(
    gt: &LabelMap,
    classes: usize,
    error_rate: f64,
    seed: u64,
) -> Result<ProbMap> {
    if !(0.0..1.0).contains(&error_rate) {
        return Err(invalid(format!("error_rate {error_rate} outside [0, 1)")));
    }
    gt.check_classes(classes)?;
    if classes < 2 {
        return ProbMap::uniform(gt.width(), gt.height(), classes);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let off = (1.0 - CORRUPT_CONFIDENCE) / (classes - 1) as f32;
    let mut data = Vec::with_capacity(gt.data().len() * classes);
    for &label in gt.data() {
        let mut chosen = label as usize;
        if rng.random::<f64>() < error_rate {
            let wrong = rng.random_range(0..classes - 1);
            chosen = if wrong >= chosen { wrong + 1 } else { wrong };
        }
        data.extend((0..classes).map(|c| if c == chosen { CORRUPT_CONFIDENCE } else { off }));
    }
    ProbMap::new(Grid::new(gt.width(), gt.height(), classes, data)?)
}
