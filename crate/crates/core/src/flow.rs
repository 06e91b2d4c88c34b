//! Dense optical flow from a correlation cost volume with coarse-to-fine search.
//!
//! Frames are compared in grayscale. Each candidate displacement is scored by
//! the mean of elementwise products between the two patches after each patch
//! is standardized to zero mean and unit variance, so the score of a perfect
//! match is 1 and patches without texture score 0 against everything.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::grid::{collect_rows, FlowField, Image};

/// Patches whose intensity standard deviation falls below this are treated as flat.
const FLAT_PATCH_STD: f64 = 1e-5;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlowConfig {
    /// Search radius in pixels at every pyramid level.
    pub search_radius: usize,
    pub patch_radius: usize,
    pub pyramid_levels: usize,
    pub subpixel_refine: bool,
    /// Median smoothing applied to the integer flow after each level's search.
    pub median_radius: usize,
}

impl Default for FlowConfig {
    fn default() -> Self {
        Self {
            search_radius: 4,
            patch_radius: 3,
            pyramid_levels: 3,
            subpixel_refine: true,
            median_radius: 2,
        }
    }
}

impl FlowConfig {
    pub fn validate(&self) -> Result<()> {
        if self.search_radius < 1 {
            return Err(invalid("search_radius must be at least 1"));
        }
        if self.patch_radius < 1 {
            return Err(invalid("patch_radius must be at least 1"));
        }
        if self.pyramid_levels < 1 {
            return Err(invalid("pyramid_levels must be at least 1"));
        }
        Ok(())
    }

    /// Largest displacement the pyramid can reach, in finest-level pixels.
    pub fn total_search_range(&self) -> usize {
        self.search_radius * ((1 << self.pyramid_levels) - 1)
    }
}

/// Single-channel working plane.
#[derive(Clone, Debug)]
struct Plane {
    width: usize,
    height: usize,
    data: Vec<f32>,
}

impl Plane {
    fn gray(img: &Image) -> Self {
        Self {
            width: img.width(),
            height: img.height(),
            data: img.grayscale(),
        }
    }

    #[inline]
    fn at_clamped(&self, x: isize, y: isize) -> f32 {
        let xc = x.clamp(0, self.width as isize - 1) as usize;
        let yc = y.clamp(0, self.height as isize - 1) as usize;
        self.data[yc * self.width + xc]
    }

    /// 2x2 box average; odd trailing rows/columns reuse the border.
    fn downsample(&self) -> Self {
        let width = self.width.div_ceil(2);
        let height = self.height.div_ceil(2);
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                let (sx, sy) = (2 * x as isize, 2 * y as isize);
                let sum = self.at_clamped(sx, sy)
                    + self.at_clamped(sx + 1, sy)
                    + self.at_clamped(sx, sy + 1)
                    + self.at_clamped(sx + 1, sy + 1);
                data.push(sum * 0.25);
            }
        }
        Self {
            width,
            height,
            data,
        }
    }
}

#[derive(Clone, Copy, Debug, Default)]
struct PatchStats {
    mean: f64,
    /// Zero for flat patches.
    inv_std: f64,
}

/// Scores patch pairs between two same-sized planes.
struct PatchMatcher<'a> {
    a: &'a Plane,
    b: &'a Plane,
    radius: isize,
    stats_a: Vec<PatchStats>,
    stats_b: Vec<PatchStats>,
}

impl<'a> PatchMatcher<'a> {
    fn new(a: &'a Plane, b: &'a Plane, patch_radius: usize) -> Self {
        let radius = patch_radius as isize;
        let table = |p: &Plane| {
            (0..p.height)
                .flat_map(|y| (0..p.width).map(move |x| (x, y)))
                .map(|(x, y)| patch_stats(p, x as isize, y as isize, radius))
                .collect()
        };
        Self {
            a,
            b,
            radius,
            stats_a: table(a),
            stats_b: table(b),
        }
    }

    fn stats(&self, plane: &Plane, table: &[PatchStats], x: isize, y: isize) -> PatchStats {
        if x >= 0 && y >= 0 && (x as usize) < plane.width && (y as usize) < plane.height {
            table[y as usize * plane.width + x as usize]
        } else {
            patch_stats(plane, x, y, self.radius)
        }
    }

    /// Standardized correlation of the patch of `a` at `p` with the patch of `b` at `q`.
    fn score(&self, px: isize, py: isize, qx: isize, qy: isize) -> f64 {
        let sa = self.stats(self.a, &self.stats_a, px, py);
        let sb = self.stats(self.b, &self.stats_b, qx, qy);
        if sa.inv_std == 0.0 || sb.inv_std == 0.0 {
            return 0.0;
        }
        let r = self.radius;
        let inside = |p: &Plane, x: isize, y: isize| {
            x >= r && y >= r && x + r < p.width as isize && y + r < p.height as isize
        };
        let mut sum = 0.0f64;
        if inside(self.a, px, py) && inside(self.b, qx, qy) {
            let side = (2 * r + 1) as usize;
            for oy in -r..=r {
                let ra = ((py + oy) as usize) * self.a.width + (px - r) as usize;
                let rb = ((qy + oy) as usize) * self.b.width + (qx - r) as usize;
                let row_a = &self.a.data[ra..ra + side];
                let row_b = &self.b.data[rb..rb + side];
                sum += row_a
                    .iter()
                    .zip(row_b)
                    .map(|(&va, &vb)| va as f64 * vb as f64)
                    .sum::<f64>();
            }
        } else {
            for oy in -r..=r {
                for ox in -r..=r {
                    let va = self.a.at_clamped(px + ox, py + oy) as f64;
                    let vb = self.b.at_clamped(qx + ox, qy + oy) as f64;
                    sum += va * vb;
                }
            }
        }
        let n = ((2 * r + 1) * (2 * r + 1)) as f64;
        (sum / n - sa.mean * sb.mean) * sa.inv_std * sb.inv_std
    }
}

fn patch_stats(p: &Plane, cx: isize, cy: isize, r: isize) -> PatchStats {
    let n = ((2 * r + 1) * (2 * r + 1)) as f64;
    let mut sum = 0.0f64;
    for oy in -r..=r {
        for ox in -r..=r {
            sum += p.at_clamped(cx + ox, cy + oy) as f64;
        }
    }
    let mean = sum / n;
    let mut var = 0.0f64;
    for oy in -r..=r {
        for ox in -r..=r {
            let d = p.at_clamped(cx + ox, cy + oy) as f64 - mean;
            var += d * d;
        }
    }
    let std = (var / n).sqrt();
    PatchStats {
        mean,
        inv_std: if std < FLAT_PATCH_STD { 0.0 } else { 1.0 / std },
    }
}

/// `true` when displacement `a` wins over `b` at equal score: smaller magnitude,
/// then lexicographically smaller `(dy, dx)`.
#[inline]
fn preferred_on_tie(a: (i32, i32), b: (i32, i32)) -> bool {
    let ma = a.0 * a.0 + a.1 * a.1;
    let mb = b.0 * b.0 + b.1 * b.1;
    (ma, a.1, a.0) < (mb, b.1, b.0)
}

/// Similarity scores for every pixel and every displacement within a square radius.
#[derive(Clone, Debug, PartialEq)]
pub struct CorrelationVolume {
    width: usize,
    height: usize,
    radius: usize,
    scores: Vec<f32>,
}

impl CorrelationVolume {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn radius(&self) -> usize {
        self.radius
    }

    /// Number of candidate displacements per pixel, `(2d+1)^2`.
    pub fn candidates(&self) -> usize {
        let side = 2 * self.radius + 1;
        side * side
    }

    /// Displacement of candidate index `k`, row-major over `dy` then `dx`.
    pub fn displacement(&self, k: usize) -> (i32, i32) {
        let side = 2 * self.radius + 1;
        let r = self.radius as i32;
        ((k % side) as i32 - r, (k / side) as i32 - r)
    }

    pub fn scores_at(&self, x: usize, y: usize) -> &[f32] {
        let n = self.candidates();
        let start = (y * self.width + x) * n;
        &self.scores[start..start + n]
    }

    /// Score of displacement `(dx, dy)` at pixel `(x, y)`; `None` outside the radius.
    pub fn score(&self, x: usize, y: usize, dx: i32, dy: i32) -> Option<f32> {
        let r = self.radius as i32;
        if dx.abs() > r || dy.abs() > r {
            return None;
        }
        let side = 2 * self.radius + 1;
        let k = (dy + r) as usize * side + (dx + r) as usize;
        Some(self.scores_at(x, y)[k])
    }

    /// Highest-scoring displacement at a pixel, ties toward the smallest magnitude.
    pub fn best_displacement(&self, x: usize, y: usize) -> (i32, i32) {
        let scores = self.scores_at(x, y);
        let mut best = self.displacement(0);
        let mut best_score = scores[0];
        for (k, &s) in scores.iter().enumerate().skip(1) {
            let d = self.displacement(k);
            if s > best_score || (s == best_score && preferred_on_tie(d, best)) {
                best = d;
                best_score = s;
            }
        }
        best
    }
}

fn check_pair(a: &Image, b: &Image) -> Result<()> {
    if a.width() != b.width() || a.height() != b.height() {
        return Err(invalid(format!(
            "frame sizes differ: {}x{} vs {}x{}",
            a.width(),
            a.height(),
            b.width(),
            b.height()
        )));
    }
    Ok(())
}

/// Full cost volume between `a` and `b` at full resolution, searching
/// `cfg.search_radius` around zero displacement.
pub fn correlation_volume(a: &Image, b: &Image, cfg: &FlowConfig) -> Result<CorrelationVolume> {
    cfg.validate()?;
    check_pair(a, b)?;
    let pa = Plane::gray(a);
    let pb = Plane::gray(b);
    let matcher = PatchMatcher::new(&pa, &pb, cfg.patch_radius);
    let r = cfg.search_radius as isize;
    let width = pa.width;
    let scores = collect_rows(pa.height, |y| {
        let mut row = Vec::with_capacity(width * (2 * r as usize + 1).pow(2));
        for x in 0..width {
            let (px, py) = (x as isize, y as isize);
            for dy in -r..=r {
                for dx in -r..=r {
                    row.push(matcher.score(px, py, px + dx, py + dy) as f32);
                }
            }
        }
        row
    });
    Ok(CorrelationVolume {
        width,
        height: pa.height,
        radius: cfg.search_radius,
        scores,
    })
}

/// Integer flow at one pyramid level.
#[derive(Clone, Debug)]
struct IntFlow {
    width: usize,
    height: usize,
    data: Vec<(i32, i32)>,
}

impl IntFlow {
    fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![(0, 0); width * height],
        }
    }

    /// Nearest-neighbour upsampling to `width x height` with doubled offsets.
    fn upsample(&self, width: usize, height: usize) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            let sy = (y / 2).min(self.height - 1);
            for x in 0..width {
                let sx = (x / 2).min(self.width - 1);
                let (dx, dy) = self.data[sy * self.width + sx];
                data.push((2 * dx, 2 * dy));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    fn median(&self, radius: usize) -> Self {
        if radius == 0 {
            return self.clone();
        }
        let r = radius as isize;
        let (w, h) = (self.width as isize, self.height as isize);
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        let mut data = Vec::with_capacity(self.data.len());
        for y in 0..h {
            for x in 0..w {
                xs.clear();
                ys.clear();
                for oy in -r..=r {
                    for ox in -r..=r {
                        let sx = (x + ox).clamp(0, w - 1);
                        let sy = (y + oy).clamp(0, h - 1);
                        let (dx, dy) = self.data[(sy * w + sx) as usize];
                        xs.push(dx);
                        ys.push(dy);
                    }
                }
                let mid = xs.len() / 2;
                data.push((
                    *xs.select_nth_unstable(mid).1,
                    *ys.select_nth_unstable(mid).1,
                ));
            }
        }
        Self {
            width: self.width,
            height: self.height,
            data,
        }
    }
}

/// Half-open pixel rectangle.
#[derive(Clone, Copy, Debug)]
struct Rect {
    x0: usize,
    y0: usize,
    x1: usize,
    y1: usize,
}

impl Rect {
    fn point(x: usize, y: usize) -> Self {
        Self {
            x0: x,
            y0: y,
            x1: x + 1,
            y1: y + 1,
        }
    }

    fn union(self, o: Rect) -> Self {
        Self {
            x0: self.x0.min(o.x0),
            y0: self.y0.min(o.y0),
            x1: self.x1.max(o.x1),
            y1: self.y1.max(o.y1),
        }
    }
}

/// Patch sums of `a(q) * b(q + d)` centred on every pixel of `rect`, from a
/// summed-area table over the rectangle grown by the patch radius. Reads are
/// border-clamped exactly as in [`PatchMatcher::score`].
fn product_box_sums(
    a: &Plane,
    b: &Plane,
    d: (i32, i32),
    rect: Rect,
    r: isize,
    sat: &mut Vec<f64>,
    out: &mut Vec<f64>,
) {
    let ew = rect.x1 - rect.x0 + 2 * r as usize;
    let eh = rect.y1 - rect.y0 + 2 * r as usize;
    let stride = ew + 1;
    sat.clear();
    sat.resize(stride * (eh + 1), 0.0);
    let (ox, oy) = (rect.x0 as isize - r, rect.y0 as isize - r);
    for j in 0..eh {
        let qy = oy + j as isize;
        let mut row_sum = 0.0f64;
        for i in 0..ew {
            let qx = ox + i as isize;
            row_sum += a.at_clamped(qx, qy) as f64
                * b.at_clamped(qx + d.0 as isize, qy + d.1 as isize) as f64;
            sat[(j + 1) * stride + i + 1] = sat[j * stride + i + 1] + row_sum;
        }
    }
    let side = 2 * r as usize + 1;
    out.clear();
    for ly in 0..rect.y1 - rect.y0 {
        for lx in 0..rect.x1 - rect.x0 {
            let (top, bottom) = (ly * stride, (ly + side) * stride);
            out.push(sat[bottom + lx + side] - sat[top + lx + side] - sat[bottom + lx] + sat[top + lx]);
        }
    }
}

/// Searches `radius` around each pixel's initial offset and keeps the best
/// candidate. Each distinct displacement is evaluated once over the bounding
/// box of the pixels that consider it.
fn search_level(matcher: &PatchMatcher<'_>, init: &IntFlow, radius: usize) -> IntFlow {
    let r = radius as i32;
    let (width, height) = (init.width, init.height);
    let mut boxes: BTreeMap<(i32, i32), Rect> = BTreeMap::new();
    for y in 0..height {
        for x in 0..width {
            let c = init.data[y * width + x];
            let p = Rect::point(x, y);
            boxes.entry(c).and_modify(|b| *b = b.union(p)).or_insert(p);
        }
    }
    let mut needed: BTreeMap<(i32, i32), Rect> = BTreeMap::new();
    for (&(cx, cy), &bbox) in &boxes {
        for dy in cy - r..=cy + r {
            for dx in cx - r..=cx + r {
                needed
                    .entry((dx, dy))
                    .and_modify(|b| *b = b.union(bbox))
                    .or_insert(bbox);
            }
        }
    }

    let pr = matcher.radius;
    let n = ((2 * pr + 1) * (2 * pr + 1)) as f64;
    let mut best = init.data.clone();
    let mut best_score = vec![f64::NEG_INFINITY; width * height];
    let (mut sat, mut sums) = (Vec::new(), Vec::new());
    for (&d, &rect) in &needed {
        product_box_sums(matcher.a, matcher.b, d, rect, pr, &mut sat, &mut sums);
        let rw = rect.x1 - rect.x0;
        for y in rect.y0..rect.y1 {
            for x in rect.x0..rect.x1 {
                let i = y * width + x;
                let c = init.data[i];
                if (d.0 - c.0).abs() > r || (d.1 - c.1).abs() > r {
                    continue;
                }
                let (px, py) = (x as isize, y as isize);
                let sa = matcher.stats(matcher.a, &matcher.stats_a, px, py);
                let sb = matcher.stats(
                    matcher.b,
                    &matcher.stats_b,
                    px + d.0 as isize,
                    py + d.1 as isize,
                );
                let s = if sa.inv_std == 0.0 || sb.inv_std == 0.0 {
                    0.0
                } else {
                    let sum = sums[(y - rect.y0) * rw + (x - rect.x0)];
                    (sum / n - sa.mean * sb.mean) * sa.inv_std * sb.inv_std
                };
                if s > best_score[i] || (s == best_score[i] && preferred_on_tie(d, best[i])) {
                    best[i] = d;
                    best_score[i] = s;
                }
            }
        }
    }
    IntFlow {
        width,
        height,
        data: best,
    }
}

/// Vertex of the parabola through `(-1, minus)`, `(0, center)`, `(1, plus)`,
/// clamped to half a pixel. Zero when the scores are not concave.
fn parabola_peak(minus: f64, center: f64, plus: f64) -> f64 {
    let curvature = minus - 2.0 * center + plus;
    if curvature >= 0.0 {
        return 0.0;
    }
    (0.5 * (minus - plus) / curvature).clamp(-0.5, 0.5)
}

/// Dense flow from `a` to `b`: `a(p)` corresponds to `b(p + flow(p))`, so
/// warping `b` by the result reconstructs `a`.
pub fn estimate_flow(a: &Image, b: &Image, cfg: &FlowConfig) -> Result<FlowField> {
    cfg.validate()?;
    check_pair(a, b)?;
    let patch = 2 * cfg.patch_radius + 1;
    if a.width() < patch || a.height() < patch {
        return Err(invalid(format!(
            "{}x{} frame is smaller than one {patch}x{patch} patch",
            a.width(),
            a.height()
        )));
    }

    let mut pyramid = vec![(Plane::gray(a), Plane::gray(b))];
    while pyramid.len() < cfg.pyramid_levels {
        let (pa, pb) = pyramid.last().expect("pyramid is never empty");
        if pa.width.div_ceil(2) < patch || pa.height.div_ceil(2) < patch {
            break;
        }
        let next = (pa.downsample(), pb.downsample());
        pyramid.push(next);
    }

    let mut flow: Option<IntFlow> = None;
    for (level, (pa, pb)) in pyramid.iter().enumerate().rev() {
        let init = match &flow {
            Some(coarse) => coarse.upsample(pa.width, pa.height),
            None => IntFlow::zeros(pa.width, pa.height),
        };
        let matcher = PatchMatcher::new(pa, pb, cfg.patch_radius);
        let found = search_level(&matcher, &init, cfg.search_radius).median(cfg.median_radius);
        if level == 0 {
            return finish(&matcher, &found, cfg.subpixel_refine);
        }
        flow = Some(found);
    }
    unreachable!("the finest level always returns")
}

fn finish(matcher: &PatchMatcher<'_>, flow: &IntFlow, refine: bool) -> Result<FlowField> {
    let width = flow.width;
    let data = collect_rows(flow.height, |y| {
        let mut row = Vec::with_capacity(width * 2);
        for x in 0..width {
            let (dx, dy) = flow.data[y * width + x];
            let (mut fx, mut fy) = (dx as f64, dy as f64);
            if refine {
                let (px, py) = (x as isize, y as isize);
                let (qx, qy) = (px + dx as isize, py + dy as isize);
                let center = matcher.score(px, py, qx, qy);
                fx += parabola_peak(
                    matcher.score(px, py, qx - 1, qy),
                    center,
                    matcher.score(px, py, qx + 1, qy),
                );
                fy += parabola_peak(
                    matcher.score(px, py, qx, qy - 1),
                    center,
                    matcher.score(px, py, qx, qy + 1),
                );
            }
            row.push(fx as f32);
            row.push(fy as f32);
        }
        row
    });
    FlowField::new(crate::grid::Grid::new(width, flow.height, 2, data)?)
}

/// Per-component median over a `(2r+1)^2` border-clamped window.
pub fn median_filter_flow(flow: &FlowField, radius: usize) -> FlowField {
    if radius == 0 {
        return flow.clone();
    }
    let (w, h) = (flow.width() as isize, flow.height() as isize);
    let r = radius as isize;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut data = Vec::with_capacity((w * h * 2) as usize);
    for y in 0..h {
        for x in 0..w {
            xs.clear();
            ys.clear();
            for oy in -r..=r {
                for ox in -r..=r {
                    let d = flow.at(
                        (x + ox).clamp(0, w - 1) as usize,
                        (y + oy).clamp(0, h - 1) as usize,
                    );
                    xs.push(d[0]);
                    ys.push(d[1]);
                }
            }
            let mid = xs.len() / 2;
            data.push(*xs.select_nth_unstable_by(mid, f32::total_cmp).1);
            data.push(*ys.select_nth_unstable_by(mid, f32::total_cmp).1);
        }
    }
    FlowField::new(
        crate::grid::Grid::new(w as usize, h as usize, 2, data).expect("same shape as input"),
    )
    .expect("medians of finite offsets are finite")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn textured(w: usize, h: usize, seed: u32) -> Image {
        Image::from_fn(w, h, |x, y| {
            let v = hash(x as i64, y as i64, seed);
            [v, (v * 0.7 + 0.1).min(1.0), 1.0 - v]
        })
        .unwrap()
    }

    fn hash(x: i64, y: i64, seed: u32) -> f32 {
        let mut h = (x as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
            ^ (y as u64).wrapping_mul(0xC2B2_AE3D_27D4_EB4F)
            ^ (seed as u64).wrapping_mul(0x1656_67B1_9E37_79F9);
        h ^= h >> 29;
        h = h.wrapping_mul(0xBF58_476D_1CE4_E5B9);
        h ^= h >> 32;
        (h % 1000) as f32 / 999.0
    }

    /// b(x, y) = a(x - sx, y - sy) with clamped reads.
    fn shifted(a: &Image, sx: i64, sy: i64) -> Image {
        let (w, h) = (a.width() as i64, a.height() as i64);
        Image::from_fn(a.width(), a.height(), |x, y| {
            a.pixel(
                (x as i64 - sx).clamp(0, w - 1) as usize,
                (y as i64 - sy).clamp(0, h - 1) as usize,
            )
        })
        .unwrap()
    }

    #[test]
    fn self_correlation_peaks_at_zero() {
        let a = textured(20, 16, 3);
        let cfg = FlowConfig::default();
        let vol = correlation_volume(&a, &a, &cfg).unwrap();
        assert_eq!(vol.candidates(), 81);
        for y in 0..16 {
            for x in 0..20 {
                let zero = vol.score(x, y, 0, 0).unwrap();
                let max = vol.scores_at(x, y).iter().cloned().fold(f32::MIN, f32::max);
                assert!(zero >= max - 1e-6, "({x},{y}): {zero} < {max}");
                assert_eq!(vol.best_displacement(x, y), (0, 0));
            }
        }
    }

    #[test]
    fn constant_images_score_uniformly() {
        let a = Image::from_fn(12, 12, |_, _| [0.3, 0.3, 0.3]).unwrap();
        let b = Image::from_fn(12, 12, |_, _| [0.6, 0.6, 0.6]).unwrap();
        let vol = correlation_volume(&a, &b, &FlowConfig::default()).unwrap();
        let first = vol.scores_at(0, 0)[0];
        for y in 0..12 {
            for x in 0..12 {
                assert!(vol.scores_at(x, y).iter().all(|&s| s == first));
                assert_eq!(vol.best_displacement(x, y), (0, 0));
            }
        }
    }

    #[test]
    fn unit_shift_is_the_best_candidate_in_the_interior() {
        let a = textured(24, 24, 9);
        let b = shifted(&a, 1, 0);
        let cfg = FlowConfig::default();
        let vol = correlation_volume(&a, &b, &cfg).unwrap();
        let m = cfg.patch_radius + cfg.search_radius + 1;
        for y in m..24 - m {
            for x in m..24 - m {
                assert_eq!(vol.best_displacement(x, y), (1, 0));
            }
        }
    }

    #[test]
    fn volume_is_symmetric_under_swap() {
        let a = textured(18, 18, 1);
        let b = textured(18, 18, 2);
        let cfg = FlowConfig {
            search_radius: 2,
            ..FlowConfig::default()
        };
        let ab = correlation_volume(&a, &b, &cfg).unwrap();
        let ba = correlation_volume(&b, &a, &cfg).unwrap();
        for y in 2..16usize {
            for x in 2..16usize {
                for dy in -2i32..=2 {
                    for dx in -2i32..=2 {
                        let qx = (x as i32 + dx) as usize;
                        let qy = (y as i32 + dy) as usize;
                        let s1 = ab.score(x, y, dx, dy).unwrap();
                        let s2 = ba.score(qx, qy, -dx, -dy).unwrap();
                        assert!((s1 - s2).abs() < 1e-6);
                    }
                }
            }
        }
    }

    #[test]
    fn identical_frames_give_zero_flow() {
        let a = textured(32, 28, 5);
        let cfg = FlowConfig {
            subpixel_refine: false,
            ..FlowConfig::default()
        };
        let f = estimate_flow(&a, &a, &cfg).unwrap();
        assert!(f.grid().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn integer_shift_is_recovered() {
        let a = textured(48, 48, 11);
        let b = shifted(&a, 2, 1);
        let f = estimate_flow(&a, &b, &FlowConfig::default()).unwrap();
        let gt = FlowField::uniform(48, 48, 2.0, 1.0).unwrap();
        let err = f.endpoint_errors(&gt).unwrap();
        let m = 3 + 2;
        let mut sum = 0.0;
        let mut n = 0;
        for y in m..48 - m {
            for x in m..48 - m {
                sum += err[y * 48 + x];
                n += 1;
            }
        }
        assert!(sum / (n as f32) < 0.5, "mean EPE {}", sum / n as f32);
    }

    #[test]
    fn errors_on_bad_input() {
        let a = textured(8, 8, 1);
        let b = textured(9, 8, 1);
        let cfg = FlowConfig::default();
        assert!(estimate_flow(&a, &b, &cfg).is_err());
        assert!(correlation_volume(&a, &b, &cfg).is_err());
        let tiny = textured(5, 5, 1);
        assert!(estimate_flow(&tiny, &tiny, &cfg).is_err());
        let bad = FlowConfig {
            search_radius: 0,
            ..cfg
        };
        assert!(estimate_flow(&a, &a, &bad).is_err());
    }

    #[test]
    fn median_filter_cases() {
        let f = FlowField::uniform(5, 5, 1.5, -2.0).unwrap();
        assert_eq!(median_filter_flow(&f, 0), f);
        assert_eq!(median_filter_flow(&f, 3), f);
        let outlier = FlowField::from_fn(5, 5, |x, y| {
            if (x, y) == (2, 2) {
                [40.0, -7.0]
            } else {
                [1.5, -2.0]
            }
        })
        .unwrap();
        assert_eq!(median_filter_flow(&outlier, 1), f);
    }

    #[test]
    fn parabola_peak_cases() {
        assert_eq!(parabola_peak(0.5, 1.0, 0.5), 0.0);
        assert!((parabola_peak(0.0, 1.0, 1.0) - 0.5).abs() < 1e-12);
        assert_eq!(parabola_peak(1.0, 0.0, 1.0), 0.0);
        assert_eq!(parabola_peak(-10.0, 0.0, 0.9), 0.5);
    }
}
